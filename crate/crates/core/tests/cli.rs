use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iad_core::io::{read_image, write_image};
use iad_core::kv::KvFile;
use iad_core::scales::{gamma_of, lambda_of, ReducedParams};
use iad_core::{add_noise, ImageGrid, NoiseSpec};

fn iad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iad")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn test_image() -> ImageGrid {
    ImageGrid::from_fn(40, 32, |x, y| {
        if (x as f64 - 20.0).powi(2) + (y as f64 - 16.0).powi(2) < 120.0 {
            200.0
        } else {
            50.0 + x as f64
        }
    })
    .unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        let clean = test_image();
        write_image(&clean, f.path("clean.pgm")).unwrap();
        write_image(&add_noise(&clean, NoiseSpec::new(30.0, 4).unwrap()).unwrap(), f.path("noisy.pfm")).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn manifest(&self) -> PathBuf {
        let m = self.path("manifest.txt");
        std::fs::write(&m, "# clean noisy stddev\nclean.pgm noisy.pfm 30\n").unwrap();
        m
    }
}

fn assert_one_line_error(o: &Output, code: i32, class: &str) {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let e = stderr(o);
    assert_eq!(e.lines().count(), 1, "{e}");
    assert!(e.starts_with(&format!("error: {class}: ")), "{e}");
}

#[test]
fn noise_is_deterministic() {
    let f = Fixture::new();
    for name in ["a.pfm", "b.pfm"] {
        let o = iad(&["noise", "--in", p(&f.path("clean.pgm")), "--out", p(&f.path(name)), "--stddev", "20", "--seed", "9"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(f.path("a.pfm")).unwrap(), std::fs::read(f.path("b.pfm")).unwrap());
    let o = iad(&["noise", "--in", p(&f.path("clean.pgm")), "--out", p(&f.path("c.pfm")), "--stddev", "-1"]);
    assert_one_line_error(&o, 1, "usage");
}

#[test]
fn denoise_iad_auto() {
    let f = Fixture::new();
    let out = f.path("out.pgm");
    let o = iad(&[
        "denoise", "--in", p(&f.path("noisy.pfm")), "--out", p(&out), "--model", "iad", "--stddev", "30", "--steps", "10",
        "--tau", "auto",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let den = read_image(&out).unwrap();
    let clean = test_image();
    let noisy = read_image(f.path("noisy.pfm")).unwrap();
    assert!(iad_core::mse(&den, &clean).unwrap() < iad_core::mse(&noisy, &clean).unwrap());
}

#[test]
fn denoise_over_bound_is_numerical() {
    let f = Fixture::new();
    let o = iad(&[
        "denoise", "--in", p(&f.path("noisy.pfm")), "--out", p(&f.path("x.pgm")), "--model", "pm", "--lambda", "10",
        "--tau", "10",
    ]);
    assert_one_line_error(&o, 3, "numerical");
    assert!(!f.path("x.pgm").exists());
}

#[test]
fn denoise_parameter_errors() {
    let f = Fixture::new();
    let (noisy, out) = (f.path("noisy.pfm"), f.path("x.pgm"));
    let base = ["denoise", "--in", p(&noisy), "--out", p(&out)];
    let run = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        iad(&a)
    };
    assert_one_line_error(&run(&["--model", "eed", "--lambda", "3"]), 1, "usage");
    assert_one_line_error(&run(&["--model", "iad"]), 1, "usage");
    assert_one_line_error(&run(&["--model", "tv", "--lambda", "3"]), 1, "usage");
    assert_one_line_error(&run(&["--model", "pm", "--lambda", "3", "--bogus"]), 1, "usage");
    let o = iad(&["denoise", "--in", p(&f.path("missing.pgm")), "--out", p(&f.path("x.pgm")), "--model", "pm", "--lambda", "3"]);
    assert_one_line_error(&o, 2, "data");
}

#[test]
fn params_file_and_inline_overrides() {
    let f = Fixture::new();
    let params = f.path("p.kv");
    std::fs::write(&params, "model = eed\nlambda = 4\nsigma = 1\n").unwrap();
    let a = f.path("a.pfm");
    let b = f.path("b.pfm");
    let o = iad(&["denoise", "--in", p(&f.path("noisy.pfm")), "--out", p(&a), "--params", p(&params), "--lambda", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = iad(&["denoise", "--in", p(&f.path("noisy.pfm")), "--out", p(&b), "--model", "eed", "--lambda", "8", "--sigma", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_image(&a).unwrap(), read_image(&b).unwrap());
}

#[test]
fn config_file_is_merged_under_flags() {
    let f = Fixture::new();
    let cfg = f.path("cfg.kv");
    std::fs::write(&cfg, format!("in = {}\nmodel = pm\nlambda = 50\ntau = auto:0.5\n", p(&f.path("noisy.pfm")))).unwrap();
    let a = f.path("a.pfm");
    let b = f.path("b.pfm");
    let o = iad(&["denoise", "--config", p(&cfg), "--out", p(&a), "--lambda", "6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = iad(&["denoise", "--in", p(&f.path("noisy.pfm")), "--out", p(&b), "--model", "pm", "--lambda", "6", "--tau", "auto:0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_image(&a).unwrap(), read_image(&b).unwrap());

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let o = iad(&["denoise", "--config", p(&cfg), "--out", p(&a)]);
    assert_one_line_error(&o, 1, "usage");
}

#[test]
fn metrics() {
    let f = Fixture::new();
    let o = iad(&["metrics", "--a", p(&f.path("clean.pgm")), "--b", p(&f.path("noisy.pfm"))]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mse = iad_core::mse(&test_image(), &read_image(f.path("noisy.pfm")).unwrap()).unwrap();
    assert!(text.starts_with(&format!("mse={mse:?} psnr=")), "{text}");

    let o = iad(&["metrics", "--a", p(&f.path("clean.pgm")), "--b", p(&f.path("clean.pgm"))]);
    assert_one_line_error(&o, 2, "data");
    assert!(stderr(&o).contains("identical images"));
}

#[test]
fn train_bench_and_curves() {
    let f = Fixture::new();
    let manifest = f.manifest();
    let params = f.path("pm.kv");
    let trace = f.path("trace.csv");
    let o = iad(&[
        "train", "--mode", "pm", "--corpus", p(&manifest), "--out", p(&params), "--budget", "8", "--steps", "3",
        "--trace", p(&trace),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let kv = KvFile::read(&params).unwrap();
    assert_eq!(kv.get_str("model"), Some("pm"));
    assert_eq!(std::fs::read_to_string(&trace).unwrap().lines().count(), 9);

    let reduced = f.path("iad.kv");
    let o = iad(&[
        "train", "--mode", "reduced", "--corpus", p(&manifest), "--out", p(&reduced), "--budget", "4", "--steps", "2",
        "--scales", "3,0.5,2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let table = f.path("table.csv");
    let models = format!("pm={},iad={},eed", p(&params), p(&reduced));
    let o = iad(&["bench", "--corpus", p(&manifest), "--models", &models, "--out", p(&table)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&table).unwrap();
    assert!(csv.starts_with("stddev,pm,iad,eed\n30,"), "{csv}");

    let curves = f.path("curves.csv");
    let o = iad(&["curves", "--params", p(&reduced), "--stddev", "50", "--out", p(&curves)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let kv = KvFile::read(&reduced).unwrap();
    let rp = ReducedParams::new(
        kv.get_f64("alpha").unwrap().unwrap(),
        kv.get_f64("beta").unwrap().unwrap(),
        kv.get_f64("lambda0").unwrap().unwrap(),
    )
    .unwrap();
    let text = std::fs::read_to_string(&curves).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[1], gamma_of(v[0], 50.0, &rp).unwrap());
        assert_eq!(v[2], lambda_of(v[0], 50.0, &rp).unwrap());
    }

    let o = iad(&["curves", "--params", p(&params)]);
    assert_one_line_error(&o, 1, "usage");
}

#[test]
fn help_and_missing_subcommand() {
    assert_eq!(iad(&["--help"]).status.code(), Some(0));
    assert_eq!(iad(&[]).status.code(), Some(1));
    assert_one_line_error(&iad(&["frobnicate"]), 1, "usage");
}
