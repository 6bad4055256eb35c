use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use ugmcs_ffi::*;

fn last_error() -> String {
    let p = ugmcs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn synth(count: usize, annotators: usize, seed: u64) -> *mut UgmcsDataset {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { ugmcs_dataset_synth(count, annotators, seed, &mut ds) }, UgmcsStatus::Ok);
    ds
}

fn small_net(seed: u64) -> *mut UgmcsNet {
    let cfg = CString::new(r#"{"net": {"input_size": 16, "depth": 2, "base_channels": 4}}"#).unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { ugmcs_net_init(cfg.as_ptr(), seed, &mut net) }, UgmcsStatus::Ok);
    net
}

#[test]
fn dataset_handle_round_trip() {
    let ds = synth(4, 3, 9);
    assert_eq!(unsafe { ugmcs_dataset_len(ds) }, 4);
    let (mut h, mut w, mut k) = (0, 0, 0);
    assert_eq!(unsafe { ugmcs_dataset_sample_shape(ds, 2, &mut h, &mut w, &mut k) }, UgmcsStatus::Ok);
    assert_eq!(k, 3);
    let mut mask = vec![9u8; h * w];
    assert_eq!(unsafe { ugmcs_dataset_annotation(ds, 2, 0, mask.as_mut_ptr(), mask.len()) }, UgmcsStatus::Ok);
    assert!(mask.iter().all(|&b| b <= 1));
    assert!(mask.contains(&1));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ugmcs_dataset_save(ds, path.as_ptr()) }, UgmcsStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { ugmcs_dataset_load(path.as_ptr(), &mut back) }, UgmcsStatus::Ok);
    let mut again = vec![0u8; h * w];
    assert_eq!(unsafe { ugmcs_dataset_annotation(back, 2, 0, again.as_mut_ptr(), again.len()) }, UgmcsStatus::Ok);
    assert_eq!(mask, again);
    unsafe {
        ugmcs_dataset_free(ds);
        ugmcs_dataset_free(back);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { ugmcs_dataset_synth(3, 5, 0, &mut ds) }, UgmcsStatus::InvalidInput);
    assert!(ds.is_null());
    assert!(last_error().contains("annotator"), "{}", last_error());

    assert_eq!(unsafe { ugmcs_dataset_synth(3, 3, 0, ptr::null_mut()) }, UgmcsStatus::NullPointer);
    assert_eq!(last_error(), "out is null");

    let bad = CString::new(r#"{"net": {"dpeth": 2}}"#).unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { ugmcs_net_init(bad.as_ptr(), 0, &mut net) }, UgmcsStatus::Config);
    assert_eq!(ugmcs_status_exit_code(UgmcsStatus::Config), 2);

    let missing = CString::new("/nonexistent/ugmcs/manifest.json").unwrap();
    assert_eq!(unsafe { ugmcs_dataset_load(missing.as_ptr(), &mut ds) }, UgmcsStatus::Io);
    assert_eq!(ugmcs_status_exit_code(UgmcsStatus::Io), 3);

    let ok = synth(1, 2, 0);
    assert!(ugmcs_last_error().is_null());
    unsafe { ugmcs_dataset_free(ok) };
}

#[test]
fn metrics_and_otsu() {
    let pred = [1u8, 1, 0, 0];
    let gt = [1u8, 0, 0, 0];
    let mut s = UgmcsScores::default();
    assert_eq!(unsafe { ugmcs_metrics(pred.as_ptr(), gt.as_ptr(), 2, 2, 1.0, &mut s) }, UgmcsStatus::Ok);
    assert!((s.dsc - 2.0 / 3.0).abs() < 1e-15);
    assert!((s.iou - 0.5).abs() < 1e-15);
    let bad = [2u8, 0, 0, 0];
    assert_eq!(unsafe { ugmcs_metrics(bad.as_ptr(), gt.as_ptr(), 2, 2, 1.0, &mut s) }, UgmcsStatus::InvalidInput);

    let v = [0.0, 0.1, 0.0, 1.0, 0.9, 1.0];
    let mut t = f64::NAN;
    assert_eq!(unsafe { ugmcs_otsu_threshold(v.as_ptr(), v.len(), 2, &mut t) }, UgmcsStatus::Ok);
    assert_eq!(t, 0.5);
}

#[test]
fn net_forward_predict_and_persist() {
    let net = small_net(3);
    assert_eq!(unsafe { ugmcs_net_input_size(net) }, 16);
    assert!(unsafe { ugmcs_net_num_params(net) } > 0);
    let image: Vec<f64> = (0..3 * 16 * 16).map(|i| (i % 17) as f64 / 17.0).collect();
    let mut xs = vec![0.0; 256];
    assert_eq!(
        unsafe { ugmcs_net_forward(net, image.as_ptr(), image.len(), xs.as_mut_ptr(), xs.len()) },
        UgmcsStatus::Ok
    );
    assert!(xs.iter().all(|p| (0.0..=1.0).contains(p)));
    assert_eq!(
        unsafe { ugmcs_net_forward(net, image.as_ptr(), 5, xs.as_mut_ptr(), xs.len()) },
        UgmcsStatus::InvalidInput
    );

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("net.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ugmcs_net_save(net, path.as_ptr()) }, UgmcsStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { ugmcs_net_load(path.as_ptr(), &mut loaded) }, UgmcsStatus::Ok);
    let mut ys = vec![0.0; 256];
    assert_eq!(
        unsafe { ugmcs_net_forward(loaded, image.as_ptr(), image.len(), ys.as_mut_ptr(), ys.len()) },
        UgmcsStatus::Ok
    );
    assert_eq!(xs, ys);

    let ds = synth(3, 2, 4);
    let (mut h, mut w, mut k) = (0, 0, 0);
    unsafe { ugmcs_dataset_sample_shape(ds, 0, &mut h, &mut w, &mut k) };
    let mut seg = vec![7u8; h * w];
    assert_eq!(unsafe { ugmcs_net_predict(net, ds, 0, seg.as_mut_ptr(), seg.len()) }, UgmcsStatus::Ok);
    assert!(seg.iter().all(|&b| b <= 1));
    let mut s = UgmcsScores::default();
    assert_eq!(unsafe { ugmcs_net_score(net, ds, 1, 1.0, &mut s) }, UgmcsStatus::Ok);
    assert!((0.0..=1.0).contains(&s.dsc) && (0.0..=1.0).contains(&s.nsd));
    assert_eq!(unsafe { ugmcs_net_score(net, ds, 2, 1.0, &mut s) }, UgmcsStatus::InvalidInput);
    unsafe {
        ugmcs_net_free(net);
        ugmcs_net_free(loaded);
        ugmcs_dataset_free(ds);
    }
}

#[test]
fn train_through_handles() {
    let ds = synth(4, 2, 1);
    let cfg = CString::new(
        r#"{"net": {"input_size": 16, "depth": 2, "base_channels": 4},
            "train": {"epochs": 2, "batch_size": 4, "lr_max": 0.01, "restart_period": 2}}"#,
    )
    .unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { ugmcs_net_train(ds, cfg.as_ptr(), &mut net) }, UgmcsStatus::Ok);
    assert!(!net.is_null());
    unsafe {
        ugmcs_net_free(net);
        ugmcs_dataset_free(ds);
    }
}

#[test]
fn header_compiles_as_c() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"ugmcs.h\"\nint main(void) { UgmcsDataset *d = 0; UgmcsScores s; \
         return ugmcs_dataset_synth(1, 2, 0, &d) == UGMCS_STATUS_OK ? (int)s.dsc * 0 : 1; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-I", include]).arg(&src).output() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
