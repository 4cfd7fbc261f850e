use std::ffi::{CStr, CString};
use std::ptr;

use iad_ffi::*;

fn last_error() -> String {
    let p = iad_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn disc(w: usize, h: usize) -> Vec<f64> {
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            if (x - w as f64 / 2.0).powi(2) + (y - h as f64 / 2.0).powi(2) < 40.0 {
                190.0
            } else {
                70.0
            }
        })
        .collect()
}

unsafe fn image(w: usize, h: usize, data: &[f64]) -> *mut IadImage {
    let mut img = ptr::null_mut();
    assert_eq!(iad_image_new(w, h, data.as_ptr(), &mut img), IadStatus::Ok);
    img
}

unsafe fn pixels(img: *const IadImage) -> Vec<f64> {
    let n = iad_image_width(img) * iad_image_height(img);
    let mut v = vec![0.0; n];
    assert_eq!(iad_image_copy_data(img, v.as_mut_ptr(), n), IadStatus::Ok);
    v
}

#[test]
fn denoise_round_trip() {
    unsafe {
        let (w, h) = (24, 20);
        let clean = image(w, h, &disc(w, h));
        let mut noisy = ptr::null_mut();
        assert_eq!(iad_add_noise(clean, 25.0, 7, &mut noisy), IadStatus::Ok);

        let mut model = ptr::null_mut();
        assert_eq!(
            iad_model_reduced(IadModelKind::Iad, 0.28, 2.35, 0.77, 25.0, 4, 0.25, 3.0, &mut model),
            IadStatus::Ok
        );
        assert_eq!(iad_model_kind(model), IadModelKind::Iad);
        let mut out = ptr::null_mut();
        assert_eq!(iad_denoise(model, noisy, &mut out), IadStatus::Ok);
        assert_eq!((iad_image_width(out), iad_image_height(out)), (w, h));

        let (mut before, mut after) = (0.0, 0.0);
        assert_eq!(iad_mse(noisy, clean, &mut before), IadStatus::Ok);
        assert_eq!(iad_mse(out, clean, &mut after), IadStatus::Ok);
        assert!(after < before);

        // Same result as the library called directly.
        let spec = iad_core::ModelSpec::new(
            iad_core::Model::multiscale_reduced(
                iad_core::ModelKind::Iad,
                &iad_core::ReducedParams::new(0.28, 2.35, 0.77).unwrap(),
                25.0,
                &iad_core::scales::sample_scales(4, 0.25, 3.0).unwrap(),
            )
            .unwrap(),
            10,
            iad_core::TauPolicy::default(),
        )
        .unwrap();
        let direct = iad_core::evolve(&iad_core::ImageGrid::new(w, h, pixels(noisy)).unwrap(), &spec).unwrap();
        assert_eq!(pixels(out), direct.image.data());

        for p in [clean, noisy, out] {
            iad_image_free(p);
        }
        iad_model_free(model);
    }
}

#[test]
fn parameter_text_and_files() {
    unsafe {
        let text = CString::new("model = eed\nlambda = 5\nsigma = 1\nsteps = 3\n").unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(iad_model_parse(text.as_ptr(), f64::NAN, &mut model), IadStatus::Ok);
        assert_eq!(iad_model_kind(model), IadModelKind::Eed);
        iad_model_free(model);

        let text = CString::new("model = iad\nalpha = 1\nbeta = 1\nlambda0 = 1\n").unwrap();
        assert_eq!(iad_model_parse(text.as_ptr(), f64::NAN, &mut model), IadStatus::Usage);
        assert!(last_error().contains("noise level"));
        assert_eq!(iad_model_parse(text.as_ptr(), 30.0, &mut model), IadStatus::Ok);
        iad_model_free(model);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.kv");
        std::fs::write(&path, "model = pm\nlambda = 4\n").unwrap();
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(iad_model_read(cpath.as_ptr(), f64::NAN, &mut model), IadStatus::Ok);
        iad_model_free(model);

        let bad = CString::new(dir.path().join("missing.kv").to_str().unwrap()).unwrap();
        assert_eq!(iad_model_read(bad.as_ptr(), f64::NAN, &mut model), IadStatus::Data);
    }
}

#[test]
fn image_files() {
    unsafe {
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("a.pfm").to_str().unwrap()).unwrap();
        let data: Vec<f64> = (0..12).map(|v| v as f64 * 10.5).collect();
        let img = image(4, 3, &data);
        assert_eq!(iad_image_write(img, path.as_ptr()), IadStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(iad_image_read(path.as_ptr(), &mut back), IadStatus::Ok);
        assert_eq!(pixels(back), data);
        let mut p = 0.0;
        assert_eq!(iad_psnr(img, back, &mut p), IadStatus::Data);
        assert_eq!(last_error(), "identical images");
        iad_image_free(img);
        iad_image_free(back);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut img = ptr::null_mut();
        assert_eq!(iad_image_new(4, 4, ptr::null(), &mut img), IadStatus::NullPointer);
        assert!(last_error().contains("data"));
        let data = [1.0; 4];
        assert_eq!(iad_image_new(2, 2, data.as_ptr(), &mut img), IadStatus::Data);
        assert!(img.is_null());

        let mut model = ptr::null_mut();
        assert_eq!(iad_model_pm(-1.0, &mut model), IadStatus::Usage);
        assert_eq!(iad_model_pm(5.0, ptr::null_mut()), IadStatus::NullPointer);
        assert_eq!(iad_model_pm(5.0, &mut model), IadStatus::Ok);
        assert!(iad_last_error().is_null());
        assert_eq!(iad_model_set_steps(model, 0), IadStatus::Usage);
        assert_eq!(iad_model_set_tau_auto(model, 1.5), IadStatus::Usage);
        assert_eq!(iad_model_set_tau(model, 10.0), IadStatus::Ok);

        let pixels = disc(10, 10);
        let src = image(10, 10, &pixels);
        let mut out = ptr::null_mut();
        assert_eq!(iad_denoise(model, src, &mut out), IadStatus::Numerical);
        assert!(out.is_null());
        assert!(last_error().contains("stability bound"));

        let mut small = [0.0; 4];
        assert_eq!(iad_image_copy_data(src, small.as_mut_ptr(), 4), IadStatus::Usage);
        assert_eq!(
            iad_model_reduced(IadModelKind::Pm, 1.0, 1.0, 1.0, 10.0, 2, 0.5, 1.0, &mut model),
            IadStatus::Usage
        );

        let name = CStr::from_ptr(iad_status_name(IadStatus::Numerical));
        assert_eq!(name.to_str().unwrap(), "numerical");
        assert!(CStr::from_ptr(iad_version()).to_str().unwrap().starts_with("0."));
        iad_image_free(src);
        iad_model_free(model);
        iad_image_free(ptr::null_mut());
        iad_model_free(ptr::null_mut());
    }
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/iad.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in ["iad_denoise", "iad_image_new", "iad_model_reduced", "iad_last_error", "typedef struct IadImage IadImage"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"iad.h\"\nint main(void) { IadImage *img = 0; return iad_image_new(0, 0, 0, &img) == IAD_STATUS_OK; }\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header does not compile"),
        Err(e) => panic!("no C compiler available: {e}"),
    }
}

#[test]
fn c_program_links_and_runs() {
    // Test binaries live in <target>/<profile>/deps. A test build leaves the
    // shared library there; a plain build copies it one level up.
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let libdir = [deps, deps.parent().unwrap()]
        .into_iter()
        .find(|d| d.join("libiad_ffi.so").exists() || d.join("libiad_ffi.dylib").exists())
        .expect("shared library not built");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "iad.h"
int main(void) {
    double px[64];
    for (int i = 0; i < 64; i++) px[i] = (i % 8) < 4 ? 40.0 : 200.0;
    IadImage *clean = NULL, *noisy = NULL, *out = NULL;
    IadModel *model = NULL;
    if (iad_image_new(8, 8, px, &clean) != IAD_STATUS_OK) return 10;
    if (iad_add_noise(clean, 20.0, 1, &noisy) != IAD_STATUS_OK) return 11;
    if (iad_model_pm(15.0, &model) != IAD_STATUS_OK) return 12;
    if (iad_denoise(model, noisy, &out) != IAD_STATUS_OK) return 13;
    double before = 0, after = 0;
    iad_mse(noisy, clean, &before);
    iad_mse(out, clean, &after);
    if (iad_model_set_tau(model, 50.0) != IAD_STATUS_OK) return 14;
    IadImage *bad = NULL;
    IadStatus s = iad_denoise(model, noisy, &bad);
    printf("%s %d %s\n", iad_status_name(s), after < before, iad_last_error());
    iad_image_free(clean); iad_image_free(noisy); iad_image_free(out); iad_model_free(model);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = std::process::Command::new("cc")
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .arg("-o")
        .arg(&bin)
        .arg("-L")
        .arg(libdir)
        .arg(format!("-Wl,-rpath,{}", libdir.display()))
        .arg("-liad_ffi")
        .status()
        .unwrap();
    assert!(status.success());
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("numerical 1 time step"), "{text}");
}
