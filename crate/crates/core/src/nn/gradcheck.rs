//! Central finite-difference verification of analytic gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::network::{Mode, Network};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Coordinates sampled per parameter tensor (and from the input); `None` checks all.
    pub max_coords: Option<usize>,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-6, max_coords: None, floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Where the worst error occurred, e.g. `param 3 [17]` or `input [5]`.
    pub worst: String,
    pub checked: usize,
    /// Coordinates where the one-sided differences disagree: the step crossed
    /// a relu or max-pool kink, so the function is not differentiable there.
    pub skipped_kinks: usize,
}

fn pick(len: usize, max: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match max {
        Some(m) if m < len => {
            let mut v = index::sample(rng, len, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Compares backprop gradients of `L = sum(r * net(x))` for a fixed random
/// projection `r` against central differences, over parameters and input.
/// The network is evaluated with dropout disabled.
pub fn gradient_check(net: &Network<f64>, input: &Tensor<f64>, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut net = net.clone();
    net.set_mode(Mode::Eval);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let out = net.infer(input)?;
    let proj: Vec<f64> = (0..out.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let proj = Tensor::from_vec(out.shape(), proj)?;
    let loss = |net: &Network<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = net.infer(x)?;
        Ok(y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum())
    };

    let (_, tape) = net.forward(input, None)?;
    let (grads, input_grad) = net.backward(&tape, &proj, true);
    let input_grad = input_grad.expect("input gradient requested");

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: String::new(), checked: 0, skipped_kinks: 0 };
    let h = cfg.step;
    let mut record = |analytic: f64, f_plus: f64, f0: f64, f_minus: f64, label: String| {
        let fwd = (f_plus - f0) / h;
        let bwd = (f0 - f_minus) / h;
        if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-3) {
            report.skipped_kinks += 1;
            return;
        }
        let numeric = (f_plus - f_minus) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(cfg.floor);
        report.checked += 1;
        if rel > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst = label;
        }
    };

    let f0 = loss(&net, input)?;
    let n_params = net.params().len();
    for pi in 0..n_params {
        let len = net.params()[pi].len();
        for ci in pick(len, cfg.max_coords, &mut rng) {
            let orig = net.params()[pi].data()[ci];
            net.params_mut()[pi].data_mut()[ci] = orig + h;
            let fp = loss(&net, input)?;
            net.params_mut()[pi].data_mut()[ci] = orig - h;
            let fm = loss(&net, input)?;
            net.params_mut()[pi].data_mut()[ci] = orig;
            record(grads[pi].data()[ci], fp, f0, fm, format!("param {pi} [{ci}]"));
        }
    }
    let mut x = input.clone();
    for ci in pick(x.len(), cfg.max_coords, &mut rng) {
        let orig = x.data()[ci];
        x.data_mut()[ci] = orig + h;
        let fp = loss(&net, &x)?;
        x.data_mut()[ci] = orig - h;
        let fm = loss(&net, &x)?;
        x.data_mut()[ci] = orig;
        record(input_grad.data()[ci], fp, f0, fm, format!("input [{ci}]"));
    }
    Ok(report)
}
