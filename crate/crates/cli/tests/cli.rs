use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_imax-calib"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn multiclass(k: usize, n: usize, tgen: f64, seed: u64) -> Self {
        let dir = TempDir::new().unwrap();
        let (k, n, tgen, seed) = (k.to_string(), n.to_string(), tgen.to_string(), seed.to_string());
        ok(&[
            "synth", "--multiclass", "--k", &k, "--tgen", &tgen, "--n", &n, "--seed", &seed, "--out-dir",
            p(dir.path()),
        ]);
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn fit(&self, out: &str, extra: &[&str]) -> Output {
        let (s, l, o) = (self.path("scores.csv"), self.path("labels.csv"), self.path(out));
        let mut args = vec!["fit", "--scores", p(&s), "--labels", p(&l), "--out", p(&o)];
        args.extend_from_slice(extra);
        ok(&args)
    }

    fn bundle(&self, name: &str) -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(self.path(name)).unwrap()).unwrap()
    }
}

#[test]
fn stderr_is_key_value_and_stdout_is_the_artifact() {
    let fx = Fixture::multiclass(5, 2000, 1.0, 0);
    let (s, l) = (fx.path("scores.csv"), fx.path("labels.csv"));
    let out = ok(&["fit", "--scores", p(&s), "--labels", p(&l)]);
    let bundle: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(bundle["version"], "1");
    let stderr = String::from_utf8(out.stderr).unwrap();
    for line in stderr.lines() {
        assert!(line.split(' ').all(|kv| kv.contains('=')), "bad diagnostic `{line}`");
    }
}

#[test]
fn refit_with_same_seed_is_byte_identical() {
    let fx = Fixture::multiclass(10, 3000, 0.5, 1);
    fx.fit("a.json", &["--seed", "5"]);
    fx.fit("b.json", &["--seed", "5"]);
    let a = std::fs::read(fx.path("a.json")).unwrap();
    let b = std::fs::read(fx.path("b.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scw_with_one_group_fits_one_binner() {
    let fx = Fixture::multiclass(10, 3000, 0.5, 2);
    fx.fit("b.json", &["--method", "imax", "--strategy", "scw", "--groups", "1"]);
    let b = fx.bundle("b.json");
    let models = b["calibrator"]["models"].as_array().unwrap();
    assert_eq!(models.len(), 1);
    assert!(models[0]["binner"].is_object());
    assert_eq!(models[0]["classes"].as_array().unwrap().len(), 10);
    assert_eq!(b["provenance"]["fit_set_size"], 3000);
    assert_eq!(b["provenance"]["seed"], 0);
    assert_eq!(b["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn cw_fits_one_binner_per_class() {
    let fx = Fixture::multiclass(4, 3000, 1.0, 3);
    fx.fit("b.json", &["--strategy", "cw"]);
    assert_eq!(fx.bundle("b.json")["calibrator"]["models"].as_array().unwrap().len(), 4);
}

#[test]
fn identity_temperature_reproduces_softmax() {
    let fx = Fixture::multiclass(6, 1000, 1.0, 4);
    fx.fit("t.json", &["--method", "temperature"]);
    let mut b = fx.bundle("t.json");
    b["calibrator"]["models"][0]["scaler"]["T"] = serde_json::json!(1.0);
    std::fs::write(fx.path("id.json"), serde_json::to_string(&b).unwrap()).unwrap();
    let (s, c) = (fx.path("scores.csv"), fx.path("cal.csv"));
    ok(&["apply", "--bundle", p(&fx.path("id.json")), "--scores", p(&s), "--out", p(&c)]);
    let raw = read_matrix(&s);
    let cal = read_matrix(&c);
    for (z, q) in raw.iter().zip(&cal) {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = z.iter().map(|v| (v - m).exp()).sum();
        for (zk, qk) in z.iter().zip(q) {
            assert!(((zk - m).exp() / denom - qk).abs() < 1e-9);
        }
    }
}

#[test]
fn binner_output_takes_at_most_m_values_per_class() {
    let fx = Fixture::multiclass(5, 4000, 0.5, 5);
    fx.fit("b.json", &["--bins", "7", "--strategy", "cw"]);
    let (s, c) = (fx.path("scores.csv"), fx.path("cal.csv"));
    ok(&["apply", "--bundle", p(&fx.path("b.json")), "--scores", p(&s), "--out", p(&c)]);
    let cal = read_matrix(&c);
    for k in 0..5 {
        let distinct: BTreeSet<u64> = cal.iter().map(|r| r[k].to_bits()).collect();
        assert!(distinct.len() <= 7, "class {k}: {} values", distinct.len());
    }
}

fn eval_json(args: &[&str]) -> serde_json::Value {
    serde_json::from_slice(&ok(args).stdout).unwrap()
}

#[test]
fn apply_then_exact_eval_on_fit_split_has_zero_ece() {
    let fx = Fixture::multiclass(4, 3000, 0.5, 6);
    fx.fit("b.json", &["--method", "eq_mass", "--strategy", "cw", "--bins", "10"]);
    let (s, l, c) = (fx.path("scores.csv"), fx.path("labels.csv"), fx.path("cal.csv"));
    ok(&["apply", "--bundle", p(&fx.path("b.json")), "--scores", p(&s), "--out", p(&c)]);
    let r = eval_json(&[
        "eval", "--calibrated", p(&c), "--labels", p(&l), "--eval-scheme", "exact_grouping", "--cw-threshold", "zero",
    ]);
    let cw = r["reports"][0]["cw_ece"][0]["mean"].as_f64().unwrap();
    assert!(cw.abs() < 1e-12, "cw ece {cw}");
}

#[test]
fn exact_ece_ignores_eval_bins() {
    let fx = Fixture::multiclass(10, 3000, 0.5, 7);
    fx.fit("b.json", &[]);
    let (s, l, b) = (fx.path("scores.csv"), fx.path("labels.csv"), fx.path("b.json"));
    let r = eval_json(&[
        "eval", "--scores", p(&s), "--bundle", p(&b), "--labels", p(&l), "--eval-scheme", "exact",
        "--eval-bins", "10", "--eval-bins", "100",
    ]);
    let reports = r["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    let a = reports[0]["top1_ece"].as_f64().unwrap();
    let b = reports[1]["top1_ece"].as_f64().unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(reports[0]["cw_ece"], reports[1]["cw_ece"]);
}

#[test]
fn four_thresholds_and_defaults() {
    let fx = Fixture::multiclass(10, 2000, 1.0, 8);
    fx.fit("b.json", &[]);
    let (s, l, b) = (fx.path("scores.csv"), fx.path("labels.csv"), fx.path("b.json"));
    let r = eval_json(&[
        "eval", "--scores", p(&s), "--bundle", p(&b), "--labels", p(&l), "--cw-threshold", "prior,half,one-over-k,zero",
    ]);
    let names: Vec<&str> = r["reports"][0]["cw_ece"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["threshold"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["prior", "half", "one_over_k", "zero"]);

    let d = eval_json(&["eval", "--scores", p(&s), "--bundle", p(&b), "--labels", p(&l)]);
    let cfg = &d["reports"][0]["config"];
    assert_eq!(cfg["scheme"], "eq_size");
    assert_eq!(cfg["n_eval_bins"], 100);
    assert_eq!(cfg["top_k"], serde_json::json!([1, 5]));
    assert_eq!(d["reports"][0]["cw_ece"][0]["threshold"], "prior");
}

#[test]
fn raw_logit_tie_break_uses_sidecar() {
    let fx = Fixture::multiclass(10, 2000, 0.5, 9);
    fx.fit("b.json", &["--bins", "3"]);
    let (s, l, c, r) = (fx.path("scores.csv"), fx.path("labels.csv"), fx.path("cal.csv"), fx.path("raw.csv"));
    ok(&["apply", "--bundle", p(&fx.path("b.json")), "--scores", p(&s), "--out", p(&c), "--raw-sidecar", p(&r)]);
    let out = run(&["eval", "--calibrated", p(&c), "--labels", p(&l), "--tie-break", "raw-logit"]);
    assert_eq!(out.status.code(), Some(2));
    let with = eval_json(&[
        "eval", "--calibrated", p(&c), "--labels", p(&l), "--tie-break", "raw-logit", "--raw-scores", p(&r), "--top-k", "1",
    ]);
    let direct = eval_json(&[
        "eval", "--scores", p(&s), "--bundle", p(&fx.path("b.json")), "--labels", p(&l), "--tie-break", "raw-logit",
        "--top-k", "1",
    ]);
    assert_eq!(with["reports"][0]["accuracy"], direct["reports"][0]["accuracy"]);
}

#[test]
fn synth_same_seed_gives_identical_files() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        ok(&["synth", "--preset", "fig2-imbalanced", "--n", "2000", "--seed", "7", "--out-dir", p(d.path())]);
    }
    for f in ["scores.csv", "labels.csv", "spec.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let spec: serde_json::Value = serde_json::from_slice(&std::fs::read(a.path().join("spec.json")).unwrap()).unwrap();
    assert_eq!(spec["spec"]["prior"], 0.01);
    assert!(spec["mutual_information_nats"].as_f64().unwrap() > 0.0);
}

#[test]
fn synth_multiclass_is_overconfident() {
    let fx = Fixture::multiclass(100, 5000, 0.5, 11);
    let spec: serde_json::Value = serde_json::from_slice(&std::fs::read(fx.path("spec.json")).unwrap()).unwrap();
    assert_eq!(spec["oracle_temperature"], 2.0);
    let (s, l) = (fx.path("scores.csv"), fx.path("labels.csv"));
    let out = run(&["fit", "--scores", p(&s), "--labels", p(&l), "--method", "temperature"]);
    let b: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(b["calibrator"]["models"][0]["scaler"]["T"].as_f64().unwrap() > 1.0);
}

#[test]
fn bundle_round_trip_is_bit_exact() {
    let fx = Fixture::multiclass(5, 2000, 0.5, 12);
    fx.fit("b.json", &["--scaler", "temperature"]);
    let b = fx.bundle("b.json");
    assert_eq!(b["calibrator"]["method"], "imax_with_scaler");
    std::fs::write(fx.path("c.json"), serde_json::to_string(&b).unwrap()).unwrap();
    let s = fx.path("scores.csv");
    let x = ok(&["apply", "--bundle", p(&fx.path("b.json")), "--scores", p(&s)]).stdout;
    let y = ok(&["apply", "--bundle", p(&fx.path("c.json")), "--scores", p(&s)]).stdout;
    assert_eq!(x, y);
}

#[test]
fn holdout_split_shrinks_fit_set() {
    let fx = Fixture::multiclass(4, 2000, 1.0, 13);
    fx.fit("b.json", &["--holdout-frac", "0.25"]);
    assert_eq!(fx.bundle("b.json")["provenance"]["fit_set_size"], 1500);
    let (s, l, b) = (fx.path("scores.csv"), fx.path("labels.csv"), fx.path("b.json"));
    let r = eval_json(&["eval", "--scores", p(&s), "--bundle", p(&b), "--labels", p(&l), "--holdout-frac", "0.25"]);
    assert_eq!(r["reports"][0]["n_samples"], 500);
}

#[test]
fn mi_report_emits_csv() {
    let d = TempDir::new().unwrap();
    ok(&["synth", "--preset", "calibrated", "--n", "20000", "--seed", "1", "--out-dir", p(d.path())]);
    let out = ok(&[
        "mi-report", "--scores", p(&d.path().join("scores.csv")), "--labels", p(&d.path().join("labels.csv")),
        "--bins", "4,8",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("name,M,MI_nats,upper_bound_nats,ratio"));
    assert_eq!(lines.count(), 6);
}

#[test]
fn exit_codes() {
    let fx = Fixture::multiclass(3, 500, 1.0, 14);
    let (s, l) = (fx.path("scores.csv"), fx.path("labels.csv"));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["fit", "--scores", p(&s), "--labels", p(&l), "--strategy", "xw"]).status.code(), Some(2));
    assert_eq!(run(&["fit", "--scores", p(&s), "--labels", p(&l), "--method", "nope"]).status.code(), Some(2));
    let ev = run(&["eval", "--calibrated", p(&s), "--labels", p(&l), "--eval-scheme", "bogus"]);
    assert_eq!(ev.status.code(), Some(2));

    let missing = fx.path("missing.csv");
    let out = run(&["fit", "--scores", p(&missing), "--labels", p(&l)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error=data "));
    assert!(out.stdout.is_empty());

    let short = fx.path("short.csv");
    std::fs::write(&short, "0\n1\n").unwrap();
    assert_eq!(run(&["fit", "--scores", p(&s), "--labels", p(&short)]).status.code(), Some(3));

    let mut b: serde_json::Value = {
        fx.fit("b.json", &[]);
        fx.bundle("b.json")
    };
    b["surprise"] = serde_json::json!(1);
    std::fs::write(fx.path("bad.json"), b.to_string()).unwrap();
    assert_eq!(run(&["apply", "--bundle", p(&fx.path("bad.json")), "--scores", p(&s)]).status.code(), Some(3));
    b.as_object_mut().unwrap().remove("surprise");
    b["version"] = serde_json::json!("2");
    std::fs::write(fx.path("v2.json"), b.to_string()).unwrap();
    assert_eq!(run(&["apply", "--bundle", p(&fx.path("v2.json")), "--scores", p(&s)]).status.code(), Some(3));

    let wide = fx.path("wide.csv");
    std::fs::write(&wide, "0.1,0.2\n").unwrap();
    assert_eq!(run(&["apply", "--bundle", p(&fx.path("b.json")), "--scores", p(&wide)]).status.code(), Some(3));

    let same = fx.path("same.csv");
    std::fs::write(&same, "0,0,0\n".repeat(50)).unwrap();
    std::fs::write(fx.path("y.csv"), &"0\n1\n2\n".repeat(17)[..100]).unwrap();
    let out = run(&["fit", "--scores", p(&same), "--labels", p(&fx.path("y.csv")), "--method", "imax"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error=fit "));
}
