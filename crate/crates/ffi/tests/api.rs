use std::ffi::{CStr, CString};
use std::ptr;

use semiforge_ffi::*;

fn last_error() -> String {
    let p = sf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn small_dataset() -> *mut SfDataset {
    let mut ds = ptr::null_mut();
    let st = sf_dataset_generate(3, 40, 60, 4.0, 0.5, 4, 6.0, 30, 1, &mut ds);
    assert_eq!(st, SfStatus::SF_OK);
    ds
}

unsafe fn short_config() -> *mut SfConfig {
    let mut cfg = ptr::null_mut();
    let text = cstr("epochs_total = 4\nsteps_per_epoch = 15\nwarmup_epochs = 1\nhidden = 16\nembed = 8\n");
    assert_eq!(sf_config_parse(text.as_ptr(), &mut cfg), SfStatus::SF_OK);
    cfg
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(sf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn dataset_counts_and_round_trip() {
    unsafe {
        let ds = small_dataset();
        let (mut k, mut d) = (0usize, 0usize);
        assert_eq!(sf_dataset_shape(ds, &mut k, &mut d), SfStatus::SF_OK);
        assert_eq!((k, d), (3, 4));
        let mut counts = [0usize; 3];
        assert_eq!(sf_dataset_class_counts(ds, SfSplit::SF_SPLIT_LABELED, counts.as_mut_ptr(), 3), SfStatus::SF_OK);
        assert_eq!(counts, [40, 20, 10]);
        assert_eq!(sf_dataset_class_counts(ds, SfSplit::SF_SPLIT_TEST, counts.as_mut_ptr(), 3), SfStatus::SF_OK);
        assert_eq!(counts, [30, 30, 30]);
        let mut short = [0usize; 2];
        let st = sf_dataset_class_counts(ds, SfSplit::SF_SPLIT_UNLABELED, short.as_mut_ptr(), 2);
        assert_eq!(st, SfStatus::SF_INVALID_ARGUMENT);

        let dir = tempfile::tempdir().unwrap();
        let path = cstr(dir.path().join("d.txt").to_str().unwrap());
        assert_eq!(sf_dataset_save(ds, path.as_ptr()), SfStatus::SF_OK);
        let mut again = ptr::null_mut();
        assert_eq!(sf_dataset_load(path.as_ptr(), &mut again), SfStatus::SF_OK);
        assert_eq!(sf_dataset_class_counts(again, SfSplit::SF_SPLIT_LABELED, counts.as_mut_ptr(), 3), SfStatus::SF_OK);
        assert_eq!(counts, [40, 20, 10]);
        sf_dataset_free(again);
        sf_dataset_free(ds);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut ds = ptr::null_mut();
        let st = sf_dataset_generate(1, 10, 10, 2.0, 2.0, 4, 3.0, 10, 0, &mut ds);
        assert_eq!(st, SfStatus::SF_INVALID_ARGUMENT);
        assert!(ds.is_null());
        assert!(last_error().contains("at least 2 classes"));

        assert_eq!(sf_dataset_load(ptr::null(), &mut ds), SfStatus::SF_NULL_POINTER);
        let missing = cstr("/nonexistent/semiforge/data.txt");
        assert_eq!(sf_dataset_load(missing.as_ptr(), &mut ds), SfStatus::SF_IO_ERROR);

        let mut cfg = ptr::null_mut();
        let bad = cstr("tua = 0.5\n");
        assert_eq!(sf_config_parse(bad.as_ptr(), &mut cfg), SfStatus::SF_PARSE_ERROR);
        assert!(last_error().contains("tua"));
        let out_of_range = cstr("tau = 2\n");
        assert_eq!(sf_config_parse(out_of_range.as_ptr(), &mut cfg), SfStatus::SF_CONFIG_ERROR);

        assert_eq!(sf_config_new(&mut cfg), SfStatus::SF_OK);
        let (key, value) = (cstr("lr"), cstr("fast"));
        assert_eq!(sf_config_set(cfg, key.as_ptr(), value.as_ptr()), SfStatus::SF_PARSE_ERROR);
        let mut run = ptr::null_mut();
        assert_eq!(sf_train(cfg, ptr::null(), &mut run), SfStatus::SF_NULL_POINTER);
        sf_config_free(cfg);

        // Freeing null is a no-op.
        sf_dataset_free(ptr::null_mut());
        sf_config_free(ptr::null_mut());
        sf_run_free(ptr::null_mut());
        sf_model_free(ptr::null_mut());
    }
}

#[test]
fn train_query_and_predict() {
    unsafe {
        let ds = small_dataset();
        let cfg = short_config();
        let (key, value) = (cstr("seed"), cstr("3"));
        assert_eq!(sf_config_set(cfg, key.as_ptr(), value.as_ptr()), SfStatus::SF_OK);
        let mut run = ptr::null_mut();
        assert_eq!(sf_train(cfg, ds, &mut run), SfStatus::SF_OK, "{}", last_error());

        let mut n = 0usize;
        assert_eq!(sf_run_num_epochs(run, &mut n), SfStatus::SF_OK);
        assert_eq!(n, 4);
        let mut best = 0usize;
        assert_eq!(sf_run_best_epoch(run, &mut best), SfStatus::SF_OK);
        let mut m = SfEpochMetrics::default();
        assert_eq!(sf_run_epoch_metrics(run, best, &mut m), SfStatus::SF_OK);
        assert!(m.acc_headline > 0.9, "{m:?}");
        assert!((0.0..=1.0).contains(&m.mask_prob));
        assert_eq!(sf_run_epoch_metrics(run, 99, &mut m), SfStatus::SF_INVALID_ARGUMENT);
        let mut acc = [0.0f64; 3];
        assert_eq!(sf_run_per_class(run, best, acc.as_mut_ptr(), 3), SfStatus::SF_OK);
        assert!(((acc.iter().sum::<f64>() / 3.0) - m.acc_headline).abs() < 1e-12);

        let dir = tempfile::tempdir().unwrap();
        let metrics = cstr(dir.path().join("m.jsonl").to_str().unwrap());
        assert_eq!(sf_run_save_metrics(run, metrics.as_ptr()), SfStatus::SF_OK);
        let text = std::fs::read_to_string(dir.path().join("m.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 4);

        let mut model = ptr::null_mut();
        assert_eq!(sf_run_model(run, SfWhich::SF_PARAMS_BEST, &mut model), SfStatus::SF_OK);
        let ckpt = cstr(dir.path().join("best.ckpt").to_str().unwrap());
        assert_eq!(sf_model_save(model, ckpt.as_ptr()), SfStatus::SF_OK);
        let mut loaded = ptr::null_mut();
        assert_eq!(sf_model_load(ckpt.as_ptr(), &mut loaded), SfStatus::SF_OK);

        let x = [0.0f64; 4];
        let (mut a, mut b) = (usize::MAX, usize::MAX);
        assert_eq!(sf_model_predict(model, x.as_ptr(), 4, SfHead::SF_HEAD_BALANCED, &mut a), SfStatus::SF_OK);
        assert_eq!(sf_model_predict(loaded, x.as_ptr(), 4, SfHead::SF_HEAD_BALANCED, &mut b), SfStatus::SF_OK);
        assert!(a < 3 && a == b);
        let st = sf_model_predict(model, x.as_ptr(), 3, SfHead::SF_HEAD_STANDARD, &mut a);
        assert_eq!(st, SfStatus::SF_INVALID_ARGUMENT);

        sf_model_free(loaded);
        sf_model_free(model);
        sf_run_free(run);
        sf_config_free(cfg);
        sf_dataset_free(ds);
    }
}

#[test]
fn divergence_is_reported() {
    unsafe {
        let ds = small_dataset();
        let mut cfg = ptr::null_mut();
        let text = cstr("lr = 1e5\nmomentum = 0.99\nepochs_total = 3\nwarmup_epochs = 1\n");
        assert_eq!(sf_config_parse(text.as_ptr(), &mut cfg), SfStatus::SF_OK);
        let mut run = ptr::null_mut();
        assert_eq!(sf_train(cfg, ds, &mut run), SfStatus::SF_DIVERGED);
        assert!(run.is_null());
        assert!(last_error().contains("diverged"));
        sf_config_free(cfg);
        sf_dataset_free(ds);
    }
}
