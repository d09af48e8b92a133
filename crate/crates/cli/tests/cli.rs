use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.cfg"))
}

fn noether(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noether")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Runs `cmd --config <cfg> --out <tmp> extra...` and returns the exit code with the output dir.
fn run(cmd: &str, cfg: &Path, extra: &[&str]) -> (i32, TempDir, String) {
    let dir = TempDir::new().unwrap();
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = noether(&args);
    (code(&out), dir, stderr(&out))
}

fn report(dir: &TempDir) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn audit_exit_codes() {
    let (c, dir, _) = run("audit", &config("flat11"), &[]);
    assert_eq!(c, 0);
    let r = report(&dir);
    assert_eq!(num(&r["audit"]["c1"]), 2.0);
    assert_eq!(num(&r["audit"]["k1"]), 2.0);

    let (c, _, err) = run("audit", &config("negative_beta"), &[]);
    assert_eq!(c, 1, "{err}");
    assert!(err.contains("beta"));

    let (c, dir, _) = run("audit", &config("corrupted_d"), &[]);
    assert_eq!(c, 2);
    assert!(!report(&dir)["audit"]["violations"].as_array().unwrap().is_empty());
}

#[test]
fn shipped_configs_audit_clean() {
    for name in ["flat11", "cyl", "beta_sine", "rotating_frame", "beem_toy"] {
        let (c, _, err) = run("audit", &config(name), &[]);
        assert_eq!(c, 0, "{name}: {err}");
    }
}

#[test]
fn solve_flat_writes_all_outputs() {
    let (c, dir, err) = run("solve", &config("flat11"), &["--p", "0,0", "--q", "1,0.5"]);
    assert_eq!(c, 0, "{err}");
    assert!((num(&report(&dir)["j"]) - 0.75).abs() <= 1e-10);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(dir.path().join(f.as_str().unwrap()).exists());
    }
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["config"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn solve_cylinder_winding() {
    let (c, dir, err) = run("solve", &config("cyl"), &["--p", "0,0", "--q", "pi/2,0", "--winding", "x0:-1"]);
    assert_eq!(c, 0, "{err}");
    let expect = (PI / 2.0 - 2.0 * PI).powi(2);
    let r = report(&dir);
    assert!((num(&r["j"]) - expect).abs() <= 1e-6 * expect);
    assert!((num(&r["j"]) - 22.207).abs() < 1e-3);
}

#[test]
fn iteration_cap_is_not_converged() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(config("beta_sine")).unwrap().replace("[solver]", "[solver]\nmax_iters = 1");
    let cfg = write_config(&tmp, "capped.cfg", &text);
    let (c, dir, _) = run("solve", &cfg, &["--p", "0,0", "--q", "1,0.5"]);
    assert_eq!(c, 3);
    assert_eq!(report(&dir)["converged"], false);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn bad_endpoints_are_usage_errors() {
    let (c, _, _) = run("solve", &config("flat11"), &["--p", "0", "--q", "1,0.5"]);
    assert_eq!(c, 1);
    let (c, _, _) = run("solve", &config("flat11"), &["--p", "0,0", "--q", "1,0.5", "--winding", "x0:1"]);
    assert_eq!(c, 1);
    let (c, _, _) = run("solve", &config("flat11"), &["--p", "0,0", "--q", "1,0.5", "--mode", "newton"]);
    assert_eq!(c, 1);
    assert_eq!(code(&noether(&["solve"])), 1);
    assert_eq!(code(&noether(&["--help"])), 0);
}

#[test]
fn multistart_table() {
    let (c, dir, err) = run("multistart", &config("cyl"), &["--p", "0,0", "--q", "pi/2,0", "--windings", "x0:-1..1"]);
    assert_eq!(c, 0, "{err}");
    let r = report(&dir);
    let js: Vec<f64> = r["entries"].as_array().unwrap().iter().map(|e| num(&e["report"]["j"])).collect();
    for (j, expect) in js.iter().zip([2.4674, 22.207, 61.685]) {
        assert!((j - expect).abs() < 1e-3, "{js:?}");
    }
    assert_eq!(r["distinct"], true);
    assert!(dir.path().join("path_w-1_0.csv").exists());

    let (c, dir, err) = run("multistart", &config("cyl"), &["--p", "0,0", "--q", "pi/2,0", "--windings", "x0:0..4", "--jobs", "4"]);
    assert_eq!(c, 0, "{err}");
    let js: Vec<f64> = report(&dir)["entries"].as_array().unwrap().iter().map(|e| num(&e["report"]["j"])).collect();
    assert_eq!(js.len(), 5);
    assert!(js.windows(2).all(|w| w[0] < w[1]));

    let (c, _, err) = run("multistart", &config("flat11"), &["--p", "0,0", "--q", "1,0", "--windings", "x0:-1..1"]);
    assert_eq!(c, 1);
    assert!(err.contains("periodic"));
}

#[test]
fn verify_solver_output_on_every_shipped_config() {
    let cases = [
        ("flat11", "0,0", "1,0.5"),
        ("cyl", "0,0", "pi/2,0"),
        ("beta_sine", "0,0", "1,0.5"),
        ("rotating_frame", "0,0,0", "1,0.5,0.3"),
        ("beem_toy", "0,0,0", "1,0.5,0.3"),
    ];
    for (name, p, q) in cases {
        let (c, solved, err) = run("solve", &config(name), &["--p", p, "--q", q]);
        assert_eq!(c, 0, "{name}: {err}");
        let path = solved.path().join("path.csv");
        let (c, dir, err) = run("verify", &config(name), &["--path", path.to_str().unwrap()]);
        assert_eq!(c, 0, "{name}: {err} {}", report(&dir));
        assert_eq!(report(&dir)["passed"], true);
    }
}

#[test]
fn verify_rejects_edited_and_malformed_paths() {
    let (c, solved, _) = run("solve", &config("beta_sine"), &["--p", "0,0", "--q", "1,0.5"]);
    assert_eq!(c, 0);
    let text = fs::read_to_string(solved.path().join("path.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mid = lines.len() / 2;
    let mut fields: Vec<f64> = lines[mid].split(',').map(|f| f.parse().unwrap()).collect();
    fields[1] += 0.1;
    lines[mid] = fields.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let edited = solved.path().join("edited.csv");
    fs::write(&edited, lines.join("\n")).unwrap();
    let (c, dir, _) = run("verify", &config("beta_sine"), &["--path", edited.to_str().unwrap()]);
    assert_eq!(c, 2);
    assert!(num(&report(&dir)["el_residual_max"]) > 1.0);

    let wrong = solved.path().join("wrong.csv");
    fs::write(&wrong, "s,x0,x1,x2\n0,0,0,0\n1,1,1,1\n").unwrap();
    let (c, _, err) = run("verify", &config("beta_sine"), &["--path", wrong.to_str().unwrap()]);
    assert_eq!(c, 1);
    assert!(err.contains("line 1"), "{err}");

    let broken = solved.path().join("broken.csv");
    fs::write(&broken, "s,x0,x1\n0,0,0\n0.5,abc,0\n1,1,1\n").unwrap();
    let (c, _, err) = run("verify", &config("beta_sine"), &["--path", broken.to_str().unwrap()]);
    assert_eq!(c, 1);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn project_parabola_to_line() {
    let tmp = TempDir::new().unwrap();
    let n = 32;
    let mut csv = String::from("s,x0,x1\n");
    for i in 0..=n {
        let s = i as f64 / n as f64;
        csv.push_str(&format!("{s},{s},{}\n", s * s));
    }
    let path = write_config(&tmp, "parabola.csv", &csv);
    let (c, dir, err) = run("project", &config("flat11"), &["--path", path.to_str().unwrap()]);
    assert_eq!(c, 0, "{err}");
    let r = report(&dir);
    assert!(num(&r["before"]["deviation"]) > 0.1);
    assert!(num(&r["after"]["deviation"]) <= 1e-12);
    let out = fs::read_to_string(dir.path().join("projected.csv")).unwrap();
    for line in out.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((f[2] - f[0]).abs() <= 1e-12, "{line}");
    }

    // A member path is left alone.
    let projected = dir.path().join("projected.csv");
    let (c, again, _) = run("project", &config("flat11"), &["--path", projected.to_str().unwrap()]);
    assert_eq!(c, 0);
    assert_eq!(fs::read_to_string(again.path().join("projected.csv")).unwrap(), out);
}

#[test]
fn project_fails_where_k_is_not_timelike() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "shrinking.cfg",
        "[model]\nname = shrinking\nfamily = product\ndim = 2\nl0 = \"v0^2\"\nbeta = \"1 - x0^2\"\n\n[geometry]\nsample_box = -0.5..0.5, -1..1\n",
    );
    let path = write_config(&tmp, "far.csv", "s,x0,x1\n0,0,0\n0.5,1.5,0.2\n1,2,0.5\n");
    let (c, _, err) = run("project", &cfg, &["--path", path.to_str().unwrap()]);
    assert_eq!(c, 2, "{err}");
}

#[test]
fn reports_are_deterministic() {
    let args = ["--p", "0,0", "--q", "pi/2,0", "--windings", "x0:-1..1", "--seed", "5"];
    let (_, a, _) = run("multistart", &config("cyl"), &args);
    let (_, b, _) = run("multistart", &config("cyl"), &[&args[..], &["--jobs", "3"]].concat());
    let read = |d: &TempDir| fs::read(d.path().join("report.json")).unwrap();
    assert_eq!(read(&a), read(&b));

    let (_, a, _) = run("audit", &config("beta_sine"), &["--seed", "9"]);
    let (_, b, _) = run("audit", &config("beta_sine"), &["--seed", "9"]);
    assert_eq!(read(&a), read(&b));
}
