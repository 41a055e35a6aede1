use std::ffi::{CStr, CString};
use std::ptr;

use deepprior::datagen::{generate_dataset, save_dataset, save_model, ModelMeta, SyntheticSceneConfig};
use deepprior::nn::{build_posenet, build_refinenet, NetScale, Network};
use deepprior::pipeline::predict_poses;
use deepprior_ffi::*;

fn fixture(dir: &std::path::Path) -> (CString, CString, CString) {
    let ds = generate_dataset(4, 1, &SyntheticSceneConfig { seed: 3, ..Default::default() }).unwrap();
    let data = dir.join("d.bin");
    save_dataset(&ds, &data).unwrap();
    let meta = ModelMeta { fingerprint: "t".into(), cube_size: 300.0 };
    let pose = dir.join("p.bin");
    save_model(&pose, &Network::<f32>::from_spec(build_posenet(NetScale::Desk, 14, 30), 1).unwrap(), None, &meta).unwrap();
    let mut r = Network::<f32>::from_spec(build_refinenet(NetScale::Desk), 2).unwrap();
    let last = r.layers().len() - 1;
    r.zero_layer(last);
    let refiner = dir.join("r.bin");
    save_model(&refiner, &r, None, &meta).unwrap();
    let c = |p: std::path::PathBuf| CString::new(p.to_str().unwrap()).unwrap();
    (c(data), c(pose), c(refiner))
}

#[test]
fn localize_refine_predict_through_the_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let (data, pose, refiner) = fixture(dir.path());
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(dp_dataset_load(data.as_ptr(), &mut ds), DpStatus::Ok);
        assert_eq!(dp_dataset_len(ds), 4);
        let (mut w, mut h) = (0usize, 0usize);
        let mut k = DpIntrinsics { fx: 0.0, fy: 0.0, cx: 0.0, cy: 0.0 };
        assert_eq!(dp_dataset_camera(ds, &mut w, &mut h, &mut k), DpStatus::Ok);
        let depth = dp_dataset_frame(ds, 0);
        assert!(!depth.is_null() && dp_dataset_frame(ds, 4).is_null());

        let mut com = [0.0; 3];
        assert_eq!(dp_localize_com(depth, w, h, &k, 0.0, com.as_mut_ptr()), DpStatus::Ok);
        let mut gt = [0.0; 42];
        assert_eq!(dp_dataset_annotation(ds, 0, gt.as_mut_ptr(), gt.len()), DpStatus::Ok);
        assert!(((com[0] - gt[0]).powi(2) + (com[1] - gt[1]).powi(2)).sqrt() < 100.0);

        let mut rm = ptr::null_mut();
        assert_eq!(dp_model_load(refiner.as_ptr(), &mut rm), DpStatus::Ok);
        assert_eq!((dp_model_output_dim(rm), dp_model_is_posenet(rm)), (3, 0));
        let mut refined = [0.0; 3];
        assert_eq!(dp_refine(rm, depth, w, h, &k, com.as_ptr(), refined.as_mut_ptr()), DpStatus::Ok);
        assert_eq!(refined, com, "zero refiner leaves the centre in place");

        let mut pm = ptr::null_mut();
        assert_eq!(dp_model_load(pose.as_ptr(), &mut pm), DpStatus::Ok);
        let mut joints = [0.0; 42];
        assert_eq!(dp_predict(pm, depth, w, h, &k, com.as_ptr(), joints.as_mut_ptr(), 42), DpStatus::Ok);
        assert_eq!(dp_predict(pm, depth, w, h, &k, com.as_ptr(), joints.as_mut_ptr(), 41), DpStatus::BufferTooSmall);

        // Same numbers as the Rust API.
        let ds_rust = deepprior::datagen::load_dataset(std::path::Path::new(data.to_str().unwrap())).unwrap();
        let net = deepprior::datagen::load_model::<f32>(std::path::Path::new(pose.to_str().unwrap()), None).unwrap().net;
        let c = deepprior::geometry::Point3::new(com[0], com[1], com[2]);
        let expect = predict_poses(&net, &ds_rust.frames[..1], &[c], &ds_rust.intrinsics, 300.0).unwrap();
        assert_eq!(expect[0].flatten(), joints.to_vec());

        dp_model_free(pm);
        dp_model_free(rm);
        dp_dataset_free(ds);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let (data, pose, _) = fixture(dir.path());
    unsafe {
        let mut m = ptr::null_mut();
        let missing = CString::new(dir.path().join("nope.bin").to_str().unwrap()).unwrap();
        assert_eq!(dp_model_load(missing.as_ptr(), &mut m), DpStatus::Io);
        assert!(!dp_last_error_message().is_null());
        assert_eq!(dp_model_load(data.as_ptr(), &mut m), DpStatus::Format);
        assert!(CStr::from_ptr(dp_last_error_message()).to_str().unwrap().contains("magic"));
        assert_eq!(dp_model_load(ptr::null(), &mut m), DpStatus::NullArgument);
        // The annotation sidecar is missing, so this fails before the magic check.
        assert_eq!(dp_dataset_load(pose.as_ptr(), &mut ptr::null_mut()), DpStatus::Io);

        let bytes = std::fs::read(pose.to_str().unwrap()).unwrap();
        let bad = dir.path().join("bad.bin");
        let mut flipped = bytes.clone();
        flipped[100] ^= 0xff;
        std::fs::write(&bad, &flipped).unwrap();
        let bad = CString::new(bad.to_str().unwrap()).unwrap();
        assert_eq!(dp_model_load(bad.as_ptr(), &mut m), DpStatus::Checksum);

        let k = DpIntrinsics { fx: 150.0, fy: 150.0, cx: 2.0, cy: 2.0 };
        let empty = [0u16; 16];
        let mut out = [0.0; 3];
        assert_eq!(dp_localize_com(empty.as_ptr(), 4, 4, &k, 0.0, out.as_mut_ptr()), DpStatus::NoHand);
        dp_model_free(ptr::null_mut());
        dp_dataset_free(ptr::null_mut());
        assert_eq!(dp_model_output_dim(ptr::null()), 0);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/deepprior.h")).unwrap();
    for name in ["dp_model_load", "dp_model_free", "dp_predict", "dp_refine", "dp_localize_com", "dp_dataset_load", "dp_last_error_message", "DP_STATUS_OK", "DpIntrinsics", "typedef struct DpModel DpModel"] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
