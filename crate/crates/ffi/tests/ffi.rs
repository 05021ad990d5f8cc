use std::ffi::{CStr, CString};
use std::ptr;

use infpos_ffi::*;

fn last_error() -> String {
    let p = infpos_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn factory(config: &str) -> *mut InfposFactory {
    let text = CString::new(config).unwrap();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { infpos_factory_new(text.as_ptr(), &mut f) }, InfposStatus::Ok);
    assert!(!f.is_null());
    f
}

#[test]
fn factory_queries_match_the_library() {
    let f = factory("seed=4\nclutter=0.4,2,2\n");
    let lib = infpos::channel::FactoryRealization::new(
        &infpos::config::SimConfig::parse("seed=4\nclutter=0.4,2,2\n").unwrap(),
    )
    .unwrap();
    unsafe {
        let (mut n, mut seed) = (0usize, 0u64);
        assert_eq!(infpos_factory_n_bs(f, &mut n), InfposStatus::Ok);
        assert_eq!(infpos_factory_seed(f, &mut seed), InfposStatus::Ok);
        assert_eq!((n, seed), (18, 4));
        let pos = infpos::channel::Position::new(33.0, 17.5);
        let mut pg = 0.0;
        assert_eq!(infpos_path_gain_db(f, 5, 33.0, 17.5, &mut pg), InfposStatus::Ok);
        assert_eq!(pg, lib.path_gain_db(5, pos).unwrap());
        let mut los = -1;
        assert_eq!(infpos_los_state(f, 5, 33.0, 17.5, &mut los), InfposStatus::Ok);
        assert_eq!(los == 1, lib.los_state(5, pos).unwrap() == infpos::channel::LinkState::Los);

        assert_eq!(infpos_path_gain_db(f, 18, 33.0, 17.5, &mut pg), InfposStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));
        assert_eq!(infpos_path_gain_db(f, 0, 500.0, 17.5, &mut pg), InfposStatus::InvalidArgument);
        infpos_factory_free(f);
    }
}

#[test]
fn null_and_bad_inputs_report_status() {
    unsafe {
        let mut f = ptr::null_mut();
        assert_eq!(infpos_factory_new(ptr::null(), &mut f), InfposStatus::NullPointer);
        assert!(last_error().contains("NULL"));
        let bad = CString::new("clutter=2,2\n").unwrap();
        assert_eq!(infpos_factory_new(bad.as_ptr(), &mut f), InfposStatus::InvalidArgument);
        assert!(last_error().contains("clutter"));
        assert!(f.is_null());
        let text = CString::new("").unwrap();
        assert_eq!(infpos_factory_new(text.as_ptr(), ptr::null_mut()), InfposStatus::NullPointer);

        let mut n = 0usize;
        assert_eq!(infpos_factory_n_bs(ptr::null(), &mut n), InfposStatus::NullPointer);
        let mut pg = 0.0;
        assert_eq!(infpos_path_gain_db(ptr::null(), 0, 1.0, 1.0, &mut pg), InfposStatus::NullPointer);
        let mut d = ptr::null_mut();
        let missing = CString::new("/nonexistent/x.infds").unwrap();
        assert_eq!(infpos_dataset_load(missing.as_ptr(), &mut d), InfposStatus::Io);
        let mut m = ptr::null_mut();
        assert_eq!(infpos_model_load(missing.as_ptr(), &mut m), InfposStatus::Io);

        // Freeing NULL is a no-op.
        infpos_factory_free(ptr::null_mut());
        infpos_dataset_free(ptr::null_mut());
        infpos_model_free(ptr::null_mut());
    }
}

#[test]
fn quantile_through_the_abi() {
    let errors: Vec<f64> = (1..=10).map(f64::from).collect();
    let mut q = 0.0;
    unsafe {
        assert_eq!(infpos_quantile(errors.as_ptr(), errors.len(), 0.9, &mut q), InfposStatus::Ok);
        assert!((q - 9.1).abs() < 1e-12);
        assert_eq!(infpos_quantile(errors.as_ptr(), 0, 0.9, &mut q), InfposStatus::InvalidArgument);
        assert_eq!(infpos_quantile(errors.as_ptr(), 10, 1.5, &mut q), InfposStatus::InvalidArgument);
        assert_eq!(infpos_quantile(ptr::null(), 10, 0.5, &mut q), InfposStatus::NullPointer);
    }
}

#[test]
fn dataset_and_model_round_trip() {
    let f = factory("seed=2\n");
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(infpos_dataset_generate_grid(f, 0, 4.0, &mut d), InfposStatus::Ok);
        assert_eq!(infpos_dataset_generate_grid(f, 9, 4.0, &mut d), InfposStatus::InvalidArgument);
        let (mut n, mut n_bs, mut n_taps, mut flen, mut code) = (0, 0, 0, 0, 9u8);
        assert_eq!(infpos_dataset_dims(d, &mut n, &mut n_bs, &mut n_taps, &mut flen, &mut code), InfposStatus::Ok);
        assert_eq!((n, n_bs, n_taps, flen, code), (450, 18, 1, 18, 0));

        let mut features = vec![0f32; n * flen];
        let mut labels = vec![0f32; 2 * n];
        assert_eq!(infpos_dataset_copy_features(d, features.as_mut_ptr(), features.len()), InfposStatus::Ok);
        assert_eq!(infpos_dataset_copy_labels(d, labels.as_mut_ptr(), labels.len()), InfposStatus::Ok);
        assert_eq!(&labels[..4], &[2.0, 2.0, 6.0, 2.0]);
        assert_eq!(infpos_dataset_copy_labels(d, labels.as_mut_ptr(), 3), InfposStatus::Shape);

        let ids = [0usize, 5, 17];
        let mut sub = ptr::null_mut();
        assert_eq!(infpos_dataset_select_bs(d, ids.as_ptr(), ids.len(), &mut sub), InfposStatus::Ok);
        let mut sub_bs = 0;
        infpos_dataset_dims(sub, ptr::null_mut(), &mut sub_bs, ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(sub_bs, 3);
        let dup = [1usize, 1];
        let mut bad = ptr::null_mut();
        assert_eq!(infpos_dataset_select_bs(d, dup.as_ptr(), 2, &mut bad), InfposStatus::InvalidArgument);

        let dpath = CString::new(dir.path().join("d.infds").to_str().unwrap()).unwrap();
        assert_eq!(infpos_dataset_save(d, dpath.as_ptr()), InfposStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(infpos_dataset_load(dpath.as_ptr(), &mut back), InfposStatus::Ok);
        let mut back_features = vec![0f32; n * flen];
        infpos_dataset_copy_features(back, back_features.as_mut_ptr(), back_features.len());
        assert_eq!(back_features, features);

        let mut m = ptr::null_mut();
        assert_eq!(infpos_model_new(d, 1.0, 3, &mut m), InfposStatus::Ok);
        let mut n_params = 0;
        infpos_model_n_params(m, &mut n_params);
        assert_eq!(n_params, 104_162);

        let mut out = vec![0f64; 2 * n];
        // Untrained models have no input normalization yet.
        assert_eq!(infpos_model_predict(m, features.as_ptr(), n, out.as_mut_ptr()), InfposStatus::InvalidArgument);

        let mut opts = infpos_train_options_default(0);
        assert!(opts.min_steps > 0 && opts.learning_rate > 0.0);
        opts.epochs = 3;
        opts.min_steps = 0;
        let mut loss = f64::NAN;
        assert_eq!(infpos_model_train(m, d, &opts, &mut loss), InfposStatus::Ok);
        assert!(loss.is_finite() && loss > 0.0);
        assert_eq!(infpos_model_predict(m, features.as_ptr(), n, out.as_mut_ptr()), InfposStatus::Ok);
        assert!(out.iter().all(|v| v.is_finite()));

        let mpath = CString::new(dir.path().join("m.ck").to_str().unwrap()).unwrap();
        assert_eq!(infpos_model_save(m, mpath.as_ptr()), InfposStatus::Ok);
        let mut m2 = ptr::null_mut();
        assert_eq!(infpos_model_load(mpath.as_ptr(), &mut m2), InfposStatus::Ok);
        let mut out2 = vec![0f64; 2 * n];
        assert_eq!(infpos_model_predict(m2, features.as_ptr(), n, out2.as_mut_ptr()), InfposStatus::Ok);
        assert_eq!(out, out2);

        opts.epochs = 1;
        assert_eq!(infpos_model_fine_tune(m2, sub, &opts), InfposStatus::Shape);
        assert_eq!(infpos_model_fine_tune(m2, back, &opts), InfposStatus::Ok);
        opts.learning_rate = 1e30;
        opts.epochs = 5;
        assert_eq!(infpos_model_fine_tune(m2, back, &opts), InfposStatus::Divergence);
        assert!(last_error().contains("diverged"));

        for h in [d, sub, back] {
            infpos_dataset_free(h);
        }
        infpos_model_free(m);
        infpos_model_free(m2);
        infpos_factory_free(f);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/infpos.h")).unwrap();
    for name in [
        "infpos_last_error_message",
        "infpos_factory_new",
        "infpos_path_gain_db",
        "infpos_dataset_generate_random",
        "infpos_model_train",
        "infpos_model_predict",
        "infpos_quantile",
        "INFPOS_STATUS_NULL_POINTER = 1",
        "size_t min_steps;",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
