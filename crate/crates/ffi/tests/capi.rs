use std::ffi::{CStr, CString};
use std::ptr;

use ummu_ffi::*;

fn last_error() -> String {
    let p = ummu_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn rng(seed: u64) -> *mut UmmuRng {
    let name = CString::new("augment").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ummu_rng_new(seed, name.as_ptr(), &mut h) }, UmmuStatus::Ok);
    h
}

fn config(variant: u32) -> UmmuAugmentConfig {
    UmmuAugmentConfig {
        alpha: 1.0,
        apply_prob: 1.0,
        sigma_floor: 1e-5,
        variant,
    }
}

#[test]
fn augment_is_seeded_and_in_place_safe() {
    let z: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
    let run = |seed| {
        let h = rng(seed);
        let mut out = vec![0.0; 24];
        let s = unsafe { ummu_augment(h, &config(UMMU_VARIANT_FULL), z.as_ptr(), 4, 6, out.as_mut_ptr()) };
        assert_eq!(s, UmmuStatus::Ok);
        unsafe { ummu_rng_free(h) };
        out
    };
    let a = run(7);
    assert_eq!(a, run(7));
    assert_ne!(a, z);

    let h = rng(7);
    let mut buf = z.clone();
    let s = unsafe { ummu_augment(h, &config(UMMU_VARIANT_FULL), buf.as_ptr(), 4, 6, buf.as_mut_ptr()) };
    assert_eq!(s, UmmuStatus::Ok);
    assert_eq!(buf, a);
    unsafe { ummu_rng_free(h) };
}

#[test]
fn augment_reports_errors() {
    let h = rng(1);
    let z = [0.0; 4];
    let mut out = [0.0; 4];
    let s = unsafe { ummu_augment(h, &config(9), z.as_ptr(), 2, 2, out.as_mut_ptr()) };
    assert_eq!(s, UmmuStatus::InvalidArgument);
    assert!(last_error().contains("variant"));

    let mut bad = config(UMMU_VARIANT_NO_M);
    bad.alpha = -1.0;
    let s = unsafe { ummu_augment(h, &bad, z.as_ptr(), 2, 2, out.as_mut_ptr()) };
    assert_eq!(s, UmmuStatus::Config);

    let s = unsafe { ummu_augment(ptr::null_mut(), &config(0), z.as_ptr(), 2, 2, out.as_mut_ptr()) };
    assert_eq!(s, UmmuStatus::NullPointer);
    assert_eq!(last_error(), "rng is null");
    unsafe { ummu_rng_free(h) };
    unsafe { ummu_rng_free(ptr::null_mut()) };
}

#[test]
fn metrics_match_worked_examples() {
    let mut ap = 0.0;
    let scores = [0.9, 0.8, 0.7, 0.6];
    let labels = [1u8, 0, 1, 0];
    assert_eq!(
        unsafe { ummu_average_precision(scores.as_ptr(), labels.as_ptr(), 4, &mut ap) },
        UmmuStatus::Ok
    );
    assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    let s = unsafe { ummu_average_precision(scores.as_ptr(), [0u8; 4].as_ptr(), 4, &mut ap) };
    assert_eq!(s, UmmuStatus::Domain);

    let pos = [0.5, 0.5];
    let neg = [0.1, 0.2, 0.9, 0.1];
    let mut m = 0.0;
    assert_eq!(unsafe { ummu_mrr(pos.as_ptr(), neg.as_ptr(), 2, 2, &mut m) }, UmmuStatus::Ok);
    assert!((m - 0.75).abs() < 1e-12);
    assert_eq!(unsafe { ummu_mrr(pos.as_ptr(), neg.as_ptr(), 0, 2, &mut m) }, UmmuStatus::Domain);
}

#[test]
fn streams_and_commands() {
    let mut spec = ummu_synth_spec_default();
    assert_eq!(spec.n_events, 20_000);
    spec.n_events = 1200;
    spec.n_src = 30;
    spec.n_dst = 20;
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ummu_stream_synth(&spec, &mut h) }, UmmuStatus::Ok);
    assert_eq!(unsafe { ummu_stream_len(h) }, 1200);
    assert_eq!(unsafe { ummu_stream_feature_dim(h) }, 16);
    unsafe { ummu_stream_free(h) };
    assert_eq!(unsafe { ummu_stream_len(ptr::null()) }, 0);

    let missing = CString::new("/nonexistent/events.csv").unwrap();
    assert_eq!(unsafe { ummu_stream_load(missing.as_ptr(), &mut h) }, UmmuStatus::Io);

    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.conf");
    std::fs::write(
        &cfg_path,
        "synth.n_events = 1200\nsynth.n_src = 30\nsynth.n_dst = 20\ntrain.embed_dim = 8\ntrain.epochs = 1\n",
    )
    .unwrap();
    let cfg = CString::new(cfg_path.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ummu_train(cfg.as_ptr(), out.as_ptr()) }, UmmuStatus::Ok);
    let ck = CString::new(dir.path().join("checkpoint.bin").to_str().unwrap()).unwrap();
    let (mut ap, mut m) = (f64::NAN, f64::NAN);
    assert_eq!(
        unsafe { ummu_eval(cfg.as_ptr(), out.as_ptr(), ck.as_ptr(), &mut ap, &mut m) },
        UmmuStatus::Ok
    );
    assert!((0.0..=1.0).contains(&ap) && m > 0.0 && m <= 1.0);
    assert_eq!(
        unsafe { ummu_eval(ptr::null(), out.as_ptr(), ck.as_ptr(), ptr::null_mut(), ptr::null_mut()) },
        UmmuStatus::IncompatibleCheckpoint
    );
    assert!(last_error().starts_with("incompatible checkpoint"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ummu.h")).unwrap();
    for f in [
        "ummu_last_error",
        "ummu_rng_new",
        "ummu_rng_free",
        "ummu_augment",
        "ummu_average_precision",
        "ummu_mrr",
        "ummu_stream_load",
        "ummu_stream_synth",
        "ummu_synth_spec_default",
        "ummu_stream_len",
        "ummu_stream_feature_dim",
        "ummu_stream_free",
        "ummu_train",
        "ummu_eval",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct UmmuRng UmmuRng;"));
    assert!(header.contains("UMMU_STATUS_INCOMPATIBLE_CHECKPOINT = 8"));
}
