use std::ffi::{CStr, CString};
use std::ptr;

use dmcd::synthetic::{generate, SyntheticConfig};
use dmcd_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dmcd_last_error()) }.to_string_lossy().into_owned()
}

fn set(config: *mut DmcdConfig, key: &str, value: &str) -> DmcdStatus {
    let (k, v) = (CString::new(key).unwrap(), CString::new(value).unwrap());
    unsafe { dmcd_config_set(config, k.as_ptr(), v.as_ptr()) }
}

fn small_config() -> *mut DmcdConfig {
    let mut config = ptr::null_mut();
    assert_eq!(unsafe { dmcd_config_new(&mut config) }, DmcdStatus::Ok);
    for (k, v) in [("iterations", "2"), ("dcpg.blocks", "2"), ("dcpg.channels", "4"), ("dfe.layers", "1")] {
        assert_eq!(set(config, k, v), DmcdStatus::Ok, "{k}: {}", last_error());
    }
    config
}

fn image(img: &dmcd::preprocess::MultiBandImage) -> *mut DmcdImage {
    let mut out = ptr::null_mut();
    let status = unsafe { dmcd_image_new(img.height(), img.width(), img.bands(), img.values().as_ptr(), &mut out) };
    assert_eq!(status, DmcdStatus::Ok, "{}", last_error());
    out
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(dmcd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn config_rejects_bad_entries_and_keeps_state() {
    let config = small_config();
    assert_eq!(set(config, "nope", "1"), DmcdStatus::Config);
    assert!(last_error().contains("nope"));
    assert_eq!(set(config, "iterations", "-3"), DmcdStatus::Config);
    assert_eq!(set(config, "threshold", "0.3"), DmcdStatus::Ok);
    assert!(last_error().is_empty());
    let key = CString::new("seed").unwrap();
    assert_eq!(unsafe { dmcd_config_set(config, key.as_ptr(), ptr::null()) }, DmcdStatus::NullArgument);
    assert!(last_error().contains("value"));
    unsafe { dmcd_config_free(config) };
}

#[test]
fn config_load_reports_io_errors() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("none.cfg").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dmcd_config_load(config, missing.as_ptr()) }, DmcdStatus::Io);
    let file = dir.path().join("ok.cfg");
    std::fs::write(&file, "# comment\nthreshold=0.4\n").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dmcd_config_load(config, path.as_ptr()) }, DmcdStatus::Ok);
    unsafe { dmcd_config_free(config) };
}

#[test]
fn null_handles_are_reported_not_dereferenced() {
    unsafe {
        assert_eq!(dmcd_config_new(ptr::null_mut()), DmcdStatus::NullArgument);
        assert_eq!(dmcd_image_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), DmcdStatus::NullArgument);
        let mut out = ptr::null_mut();
        assert_eq!(dmcd_run(ptr::null(), ptr::null(), ptr::null(), &mut out), DmcdStatus::NullArgument);
        assert!(out.is_null());
        assert!(dmcd_result_probability(ptr::null()).is_null());
        assert_eq!(dmcd_result_iterations(ptr::null()), 0);
        dmcd_config_free(ptr::null_mut());
        dmcd_image_free(ptr::null_mut());
        dmcd_result_free(ptr::null_mut());
    }
}

#[test]
fn image_contract_violations_map_to_status() {
    let values = [0.5f32; 12];
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(dmcd_image_new(2, 2, 3, values.as_ptr(), &mut out), DmcdStatus::Ok);
        let (mut h, mut w, mut b) = (0, 0, 0);
        assert_eq!(dmcd_image_dims(out, &mut h, &mut w, &mut b), DmcdStatus::Ok);
        assert_eq!((h, w, b), (2, 2, 3));
        dmcd_image_free(out);
        assert_eq!(dmcd_image_new(2, 2, 3, ptr::null(), &mut out), DmcdStatus::NullArgument);
        assert_eq!(dmcd_image_new(usize::MAX, 2, 3, values.as_ptr(), &mut out), DmcdStatus::InvalidArgument);
        let bad = [1.5f32; 4];
        assert_eq!(dmcd_image_new(2, 2, 1, bad.as_ptr(), &mut out), DmcdStatus::Contract);
    }
}

#[test]
fn mismatched_pair_is_a_registration_error() {
    let config = small_config();
    let a = image(&dmcd::preprocess::MultiBandImage::new(16, 16, 3, vec![0.5; 16 * 16 * 3]).unwrap());
    let b = image(&dmcd::preprocess::MultiBandImage::new(16, 8, 3, vec![0.5; 16 * 8 * 3]).unwrap());
    let mut result = ptr::null_mut();
    assert_eq!(unsafe { dmcd_run(config, a, b, &mut result) }, DmcdStatus::Registration);
    assert!(result.is_null());
    unsafe {
        dmcd_image_free(a);
        dmcd_image_free(b);
        dmcd_config_free(config);
    }
}

#[test]
fn run_exposes_maps_losses_and_files() {
    let pair = generate(&SyntheticConfig {
        size: 24,
        square: 6,
        ..Default::default()
    })
    .unwrap();
    let config = small_config();
    let (pre, post) = (image(&pair.pre), image(&pair.post));
    let mut result = ptr::null_mut();
    assert_eq!(unsafe { dmcd_run(config, pre, post, &mut result) }, DmcdStatus::Ok, "{}", last_error());

    let (mut h, mut w) = (0, 0);
    assert_eq!(unsafe { dmcd_result_dims(result, &mut h, &mut w) }, DmcdStatus::Ok);
    assert_eq!((h, w), (24, 24));
    assert_eq!(unsafe { dmcd_result_iterations(result) }, 2);
    let pc = unsafe { std::slice::from_raw_parts(dmcd_result_probability(result), h * w) };
    let mask = unsafe { std::slice::from_raw_parts(dmcd_result_mask(result), h * w) };
    assert!(pc.iter().all(|p| (0.0..=1.0).contains(p)));
    for (p, m) in pc.iter().zip(mask) {
        assert_eq!(*m, u8::from(*p > 0.5));
    }

    let mut loss = [0.0f64; 5];
    assert_eq!(unsafe { dmcd_result_loss(result, 1, loss.as_mut_ptr()) }, DmcdStatus::Ok);
    assert!((loss[0] + loss[1] + loss[2] + loss[3] - loss[4]).abs() < 1e-6 * loss[4].abs().max(1.0));
    assert_eq!(unsafe { dmcd_result_loss(result, 2, loss.as_mut_ptr()) }, DmcdStatus::InvalidArgument);

    let reference: Vec<u8> = pair.reference.iter().map(|&r| u8::from(r)).collect();
    let (mut swept, mut exact) = (0.0, 0.0);
    unsafe {
        assert_eq!(dmcd_result_auc(result, reference.as_ptr(), 0, &mut swept), DmcdStatus::Ok);
        assert_eq!(dmcd_result_auc(result, reference.as_ptr(), 1, &mut exact), DmcdStatus::Ok);
    }
    assert!((swept - exact).abs() <= 1.0 / 256.0 + 1e-9, "{swept} vs {exact}");
    let constant = vec![0u8; h * w];
    assert_eq!(
        unsafe { dmcd_result_auc(result, constant.as_ptr(), 1, &mut exact) },
        DmcdStatus::UndefinedAuc
    );

    let dir = tempfile::tempdir().unwrap();
    let with_ref = CString::new(dir.path().join("a").to_str().unwrap()).unwrap();
    let without = CString::new(dir.path().join("b").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(dmcd_result_write(result, with_ref.as_ptr(), reference.as_ptr()), DmcdStatus::Ok);
        assert_eq!(dmcd_result_write(result, without.as_ptr(), ptr::null()), DmcdStatus::Ok);
    }
    assert!(dir.path().join("a/confusion.png").exists());
    assert!(dir.path().join("a/report.txt").exists());
    assert!(!dir.path().join("b/confusion.png").exists());
    assert!(dir.path().join("b/probability.png").exists());

    unsafe {
        dmcd_result_free(result);
        dmcd_image_free(pre);
        dmcd_image_free(post);
        dmcd_config_free(config);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dmcd.h")).unwrap();
    for name in [
        "dmcd_last_error",
        "dmcd_version",
        "dmcd_config_new",
        "dmcd_config_set",
        "dmcd_config_load",
        "dmcd_config_free",
        "dmcd_image_new",
        "dmcd_image_load",
        "dmcd_image_dims",
        "dmcd_image_free",
        "dmcd_run",
        "dmcd_result_dims",
        "dmcd_result_probability",
        "dmcd_result_mask",
        "dmcd_result_iterations",
        "dmcd_result_loss",
        "dmcd_result_auc",
        "dmcd_result_write",
        "dmcd_result_free",
        "DMCD_STATUS_NON_FINITE_LOSS",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"dmcd.h\"\n\
         int main(void) {\n\
           DmcdConfig *c = NULL;\n\
           if (dmcd_config_new(&c) != DMCD_STATUS_OK) return 1;\n\
           DmcdStatus s = dmcd_config_set(c, \"iterations\", \"1\");\n\
           dmcd_config_free(c);\n\
           return s == DMCD_STATUS_OK ? 0 : 2;\n\
         }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
