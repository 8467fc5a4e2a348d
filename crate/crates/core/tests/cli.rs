use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blasso::cli::output::*;
use blasso::cli::RunConfig;
use blasso::dof::SupportClass;
use blasso::model::{build_fourier_model, DiscreteMeasure};
use blasso::risk::run_sweep;

const FOURIER: &str = r#"
sigma = 0.01
lambda = 0.3
seed = 1

[model]
kind = "fourier"
cutoff = 10

[truth]
positions = [0.1, 0.6, 0.9]
amplitudes = [2.0, -4.5, 4.0]
"#;

fn blasso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blasso")).args(args).output().expect("binary runs")
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn config(&self) -> String {
        self.dir.path().join("run.toml").display().to_string()
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, cmd: &str, out: &str, extra: &[&str]) -> Output {
        let config = self.config();
        let out = self.out(out).display().to_string();
        let mut args = vec![cmd, "--config", &config, "--out", &out];
        args.extend_from_slice(extra);
        blasso(&args)
    }
}

fn write_noiseless_y(path: &Path) {
    let model = build_fourier_model(10);
    let m0 = DiscreteMeasure::from_1d(&[0.1, 0.6, 0.9], &[2.0, -4.5, 4.0]).unwrap();
    let y = model.apply(&m0).unwrap();
    let text: String = y.iter().map(|v| format!("{}\n", fmt(*v))).collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn solve_noiseless_recovers_truth() {
    let run = Run::new(FOURIER);
    let y = run.out("y.csv");
    write_noiseless_y(&y);
    let o = run.exec("solve", "o", &["--y", y.to_str().unwrap(), "--lambda", "0.0001"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("k=3 "));
    let m = read_solution(run.out("o/solution.csv")).unwrap();
    assert_eq!(m.len(), 3);
    for (x, t) in m.positions().iter().zip([0.1, 0.6, 0.9]) {
        assert!((x[0] - t).abs() < 1e-3);
    }
    let (header, rows) = read_table(run.out("o/certificate.csv")).unwrap();
    assert_eq!(header, ["x0", "eta"]);
    assert_eq!(rows.len(), 1024 + 3);
}

#[test]
fn solve_above_lambda_max_is_empty() {
    let run = Run::new(FOURIER);
    let o = run.exec("solve", "o", &["--lambda", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = read_table(run.out("o/solution.csv")).unwrap();
    assert_eq!(header, ["index", "x0", "amplitude"]);
    assert!(rows.is_empty());
}

#[test]
fn missing_sigma_exits_with_config_error() {
    let run = Run::new(&FOURIER.replace("sigma = 0.01\n", ""));
    let o = run.exec("solve", "o", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma"));
}

#[test]
fn unknown_key_exits_with_config_error() {
    let run = Run::new(&FOURIER.replace("seed = 1", "seed = 1\nreplicas = 4"));
    let o = run.exec("sweep", "o", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("replicas"));
}

#[test]
fn dof_report_rows() {
    let run = Run::new(FOURIER);
    let o = run.exec("dof", "o", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, _) = read_table(run.out("o/dof_report.csv")).unwrap();
    assert_eq!(header, DOF_HEADER);
    let r = read_dof_report(run.out("o/dof_report.csv")).unwrap();
    assert_eq!((r.k, r.p, r.rank_gamma), (3, 6, 6));
    assert!(r.divergence < r.p as f64);
    assert_eq!(r.support_class, SupportClass::Discrete);

    let o = run.exec("dof", "z", &["--lambda", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_dof_report(run.out("z/dof_report.csv")).unwrap();
    assert_eq!(r.divergence, 0.0);
    assert_eq!(r.support_class, SupportClass::Empty);
}

#[test]
fn dof_on_near_duplicate_spikes_is_degenerate() {
    let run = Run::new(FOURIER);
    let m = DiscreteMeasure::from_1d(&[0.3, 0.3 + 1e-7, 0.7], &[1.0, 1.0, -2.0]).unwrap();
    let path = run.out("m.csv");
    write_solution(&path, &m).unwrap();
    let o = run.exec("dof", "o", &["--measure", path.to_str().unwrap(), "--lambda", "0.1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_single_replicate() {
    let cfg = FOURIER.replace("lambda = 0.3", "lambda_grid = [0.3]");
    let run = Run::new(&cfg);
    let o = run.exec("sweep", "o", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_sweep(run.out("o/sweep.csv")).unwrap();
    assert_eq!(records.len(), 1);
    let aggs = read_aggregates(run.out("o/aggregates.csv")).unwrap();
    assert_eq!(aggs.len(), 1);
    assert_eq!(aggs[0].failures, 0);
    assert_eq!(aggs[0].mse.std, 0.0);
    assert_eq!(aggs[0].sure.std, 0.0);
    assert!(run.out("o/sweep_risk.svg").exists() && run.out("o/sweep_dof.svg").exists());
}

#[test]
fn sweep_is_deterministic_and_round_trips() {
    let cfg = FOURIER.replace("lambda = 0.3", "lambda_grid = [0.1, 0.5]\nreplicates = 3");
    let run = Run::new(&cfg);
    for out in ["a", "b"] {
        assert_eq!(run.exec("sweep", out, &["--seed", "7", "--workers", "1"]).status.code(), Some(0));
    }
    assert_eq!(run.exec("sweep", "c", &["--seed", "7"]).status.code(), Some(0));
    for f in ["sweep.csv", "aggregates.csv", "sweep_risk.svg"] {
        let a = std::fs::read(run.out(&format!("a/{f}"))).unwrap();
        assert_eq!(a, std::fs::read(run.out(&format!("b/{f}"))).unwrap(), "{f}");
        assert_eq!(a, std::fs::read(run.out(&format!("c/{f}"))).unwrap(), "{f}");
    }
    let mut parsed = RunConfig::from_toml(&cfg).unwrap();
    parsed.seed = 7;
    let expected = run_sweep(&parsed.sweep_config(None).unwrap()).unwrap();
    assert_eq!(read_sweep(run.out("a/sweep.csv")).unwrap(), expected.records);
    let aggs = read_aggregates(run.out("a/aggregates.csv")).unwrap();
    assert_eq!(aggs.len(), expected.aggregates.len());
    for (a, b) in aggs.iter().zip(&expected.aggregates) {
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.mse, b.mse);
        assert_eq!(a.divergence, b.divergence);
    }
}

#[test]
fn grid_compare_single_node() {
    let cfg = format!("{FOURIER}\n[grid]\nsizes = [1]\n");
    let run = Run::new(&cfg);
    let o = run.exec("grid-compare", "o", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, _) = read_table(run.out("o/grid_compare.csv")).unwrap();
    assert_eq!(header, GRID_HEADER);
    let rows = read_grid_compare(run.out("o/grid_compare.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].grid_dof <= 1);
    assert!(run.out("o/grid_compare.svg").exists());
}

#[test]
fn grid_compare_blasso_column_is_grid_independent() {
    let cfg = FOURIER.replace("lambda = 0.3", "lambda_grid = [0.1, 0.5]") + "\n[grid]\nsizes = [64, 256, 1024]\n";
    let run = Run::new(&cfg);
    assert_eq!(run.exec("grid-compare", "o", &[]).status.code(), Some(0));
    let rows = read_grid_compare(run.out("o/grid_compare.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    for l in [0.1, 0.5] {
        let div: Vec<f64> = rows.iter().filter(|r| r.lambda == l).map(|r| r.blasso_divergence).collect();
        assert_eq!(div.len(), 3);
        assert!(div.iter().all(|d| d.to_bits() == div[0].to_bits()));
    }
    for r in &rows {
        assert!(r.grid_dof <= 21.min(r.p));
    }
}

#[test]
fn selftest_passes() {
    let o = blasso(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.lines().count() >= 8 && out.lines().all(|l| l.starts_with("PASS ")));
}
