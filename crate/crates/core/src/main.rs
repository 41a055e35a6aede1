fn main() {
    std::process::exit(deepprior::cli::run(std::env::args_os()));
}
