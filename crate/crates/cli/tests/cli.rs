use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ridgeshrink"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Deterministic data with a clear three-column signal.
fn write_data(path: &Path, n: usize, p: usize) {
    let mut s = String::from("y");
    for j in 0..p {
        s.push_str(&format!(",x{j}"));
    }
    s.push('\n');
    for i in 0..n {
        let x: Vec<f64> = (0..p).map(|j| ((i + 1) as f64 * (j + 2) as f64 * 0.37).sin() + (i as f64 * 0.11 * (j + 1) as f64).cos()).collect();
        let y = 2.0 * x[0] + x[1] - 1.5 * x[2] + 0.3 * ((i * 13 % 7) as f64 - 3.0);
        s.push_str(&y.to_string());
        for v in x {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

fn body(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn fit_dispatches_on_shape() {
    let dir = tempfile::tempdir().unwrap();
    let ld = dir.path().join("ld.csv");
    let hd = dir.path().join("hd.csv");
    write_data(&ld, 40, 8);
    write_data(&hd, 30, 40);
    let out = dir.path().join("ld_out");
    let o = run(&["fit", "--input", ld.to_str().unwrap(), "--response", "y", "--submodel", "x0,x1,x2", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = body(&out.join("test.csv"));
    assert!(t.contains("regime,low_dimensional") && t.contains("statistic,W_n"));
    assert!(body(&out.join("coefficients.csv")).contains("\nLSE,x0,"));

    let out = dir.path().join("hd_out");
    let o = run(&["fit", "--input", hd.to_str().unwrap(), "--response", "y", "--submodel", "x0,x1,x2", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = body(&out.join("test.csv"));
    assert!(t.contains("regime,high_dimensional") && t.contains("statistic,T_n") && t.contains("d_star,"));
    let coefs = body(&out.join("coefficients.csv"));
    assert!(!coefs.contains("LSE,"));
    // eight estimators, intercept plus 40 slopes each
    assert_eq!(data_lines(&coefs).len(), 8 * 41);
}

#[test]
fn full_submodel_and_bad_input_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let ld = dir.path().join("ld.csv");
    write_data(&ld, 30, 4);
    let o = run(&["fit", "--input", ld.to_str().unwrap(), "--response", "y", "--submodel", "x0,x1,x2,x3", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("drop at least one"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,x0,x1\n1,2,3\n4,oops,6\n").unwrap();
    let o = run(&["fit", "--input", bad.to_str().unwrap(), "--response", "y", "--submodel", "x0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let o = run(&["table", "--alpha", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["table", "--scenario", "LD9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ld = dir.path().join("ld.csv");
    write_data(&ld, 40, 8);
    let mut outs = Vec::new();
    for tag in ["a", "b"] {
        let out = dir.path().join(tag);
        let o = run(&["fit", "--input", ld.to_str().unwrap(), "--response", "y", "--submodel", "x0,x1,x2", "--seed", "5", "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success());
        outs.push((body(&out.join("coefficients.csv")), body(&out.join("test.csv"))));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn sweep_default_grid_and_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep-delta", "--replicates", "3", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = body(&dir.path().join("sweep_delta.csv"));
    assert!(text.starts_with("# ridgeshrink "));
    let rows = data_lines(&text);
    let grr: Vec<&&str> = rows.iter().filter(|l| l.split(',').nth(1) == Some("GRR")).collect();
    assert_eq!(grr.len(), 17);
    assert!(grr.iter().all(|l| l.ends_with(",1.0")));
    assert_eq!(rows.len(), 17 * 8);
}

#[test]
fn table_has_fifteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["table", "--scenario", "LD1", "--rho", "0.5", "--replicates", "3", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = body(&dir.path().join("table_LD1.csv"));
    let labels: Vec<&str> = data_lines(&text).iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        labels,
        ["GRR", "RGRR", "LS", "PT", "SPT", "PS", "IPT", "LSE", "Ridge", "LASSO", "ALASSO", "SCAD", "MCP", "ENET", "MNET"]
    );
}

#[test]
fn risk_curve_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["risk-curve", "--grid-max", "0", "--kinds", "GRR", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = body(&dir.path().join("risk_curve.csv"));
    let rows = data_lines(&text);
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("0.0,GRR,"));
}

#[test]
fn config_file_layers_under_flags_and_drives_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "command = \"table\"\nscenario = \"LD1\"\nreplicates = 2\nseed = 11\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&["table", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = body(&out.join("table_LD1.csv"));
    assert!(first.lines().next().unwrap().contains("seed=11"));

    let o = run(&["table", "--config", cfg.to_str().unwrap(), "--seed", "12", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    let second = body(&out.join("table_LD1.csv"));
    assert!(second.lines().next().unwrap().contains("seed=12"));
    let hash = |s: &str| s.lines().next().unwrap().split("config_sha256=").nth(1).unwrap().to_string();
    assert_ne!(hash(&first), hash(&second));

    let o = run(&["table", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(body(&out.join("table_LD1.csv")), first);

    let o = run(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn custom_design_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("design.toml");
    fs::write(
        &cfg,
        r#"
[design]
name = "tiny"
n_train = 30
n_valid = 0
n_test = 50
beta = [1.0, 0.5, 0.0, 0.0, 0.0]
sigma = 1.0
replicates = 2
seed = 3
covariance = { kind = "ar1", rho = 0.3 }
"#,
    )
    .unwrap();
    let o = run(&["table", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_lines(&body(&dir.path().join("table_tiny.csv"))).len(), 15);
}

#[test]
fn bootstrap_on_bundled_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bootstrap", "--replicates", "2", "--folds", "5", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = body(&dir.path().join("bootstrap.csv"));
    let grr = data_lines(&text).into_iter().find(|l| l.starts_with("GRR,")).unwrap().to_string();
    assert!(grr.ends_with(",1.0,1.0,1.0"));
    assert_eq!(data_lines(&body(&dir.path().join("pseudo_truth.csv"))).len(), 15);
}
