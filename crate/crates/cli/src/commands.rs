use std::path::PathBuf;

use nalgebra::DMatrix;

use ridgeshrink::data::RegressionData;
use ridgeshrink::experiments::{
    bootstrap_evaluate, delta_grid, delta_sweep, fit_methods, generate_replicate, run_table_scenario, synthetic_eye,
    synthetic_pollution, write_metric_rows, write_sweep_rows, BootstrapOptions, FitOptions, Method, Scenario,
    SweepMetric,
};
use ridgeshrink::hd::{HdOptions, SigmaDivisor};
use ridgeshrink::ld::{hoerl_kennard_k, lse};
use ridgeshrink::linalg::{Restriction, RidgeSpec};
use ridgeshrink::shrinkage::EstimatorKind;
use ridgeshrink::theory::{risk_curve, write_risk_curve_csv, RiskContext};

use crate::config::{Command, MetricArg, RunConfig, Synthetic};
use crate::output::{key_value_csv, write_output};
use crate::Failure;

const DEFAULT_SEED: u64 = 1;

pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    match cfg.command {
        Command::Fit => fit(cfg),
        Command::SweepDelta => sweep(cfg),
        Command::Table => table(cfg),
        Command::RiskCurve => curve(cfg),
        Command::Bootstrap => bootstrap(cfg),
    }
}

fn fit_options(cfg: &RunConfig, folds: usize) -> FitOptions {
    let sigma_divisor = if cfg.paper_literal_sigma { SigmaDivisor::PaperLiteral } else { SigmaDivisor::ResidualDf };
    FitOptions {
        alpha: cfg.alpha,
        folds,
        hd: HdOptions { sigma_divisor, ..Default::default() },
        omega: cfg.omega,
        ridge: cfg.ridge_k,
        ..Default::default()
    }
}

fn load_input(cfg: &RunConfig) -> Result<Option<RegressionData>, Failure> {
    let Some(path) = &cfg.input else { return Ok(None) };
    let response =
        cfg.response.as_deref().ok_or_else(|| Failure::Input("--response is required with --input".into()))?;
    Ok(Some(RegressionData::from_csv(path, response)?))
}

/// Column indices of the sub-model: names first, then 0-based indices.
fn resolve_submodel(data: &RegressionData, cols: &[String]) -> Result<Vec<usize>, Failure> {
    let mut out = Vec::with_capacity(cols.len());
    for c in cols {
        let c = c.trim();
        let j = match data.names().iter().position(|n| n == c) {
            Some(j) => j,
            None => match c.parse::<usize>() {
                Ok(j) if j < data.p() => j,
                _ => return Err(Failure::Input(format!("sub-model column `{c}` not found"))),
            },
        };
        if out.contains(&j) {
            return Err(Failure::Input(format!("sub-model column `{c}` listed twice")));
        }
        out.push(j);
    }
    if out.is_empty() {
        return Err(Failure::Input("sub-model is empty".into()));
    }
    Ok(out)
}

/// Stein-type estimators need at least three restrictions.
fn usable(kinds: Vec<EstimatorKind>, q: usize) -> Vec<EstimatorKind> {
    if q > 2 {
        return kinds;
    }
    eprintln!("note: q = {q}, so S, PS and IPT are skipped");
    kinds.into_iter().filter(|k| !k.is_stein_type()).collect()
}

fn fit(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let data = load_input(cfg)?.ok_or_else(|| Failure::Input("fit needs --input".into()))?;
    let cols = cfg.submodel.as_deref().ok_or_else(|| Failure::Input("fit needs --submodel".into()))?;
    let sub = resolve_submodel(&data, cols)?;
    let q = data.p() - sub.len();
    if q == 0 {
        return Err(Failure::Input(
            "the sub-model keeps every column; the restriction must drop at least one column".into(),
        ));
    }
    let high = data.p() >= data.n();
    let mut kinds = Vec::new();
    if !high {
        kinds.push(EstimatorKind::Lse);
    }
    kinds.extend(EstimatorKind::RIDGE_FAMILY);
    let methods: Vec<Method> = usable(kinds, q).into_iter().map(Method::Shrinkage).collect();
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let fits = fit_methods(&data, None, &sub, &methods, &fit_options(cfg, cfg.folds.unwrap_or(5)), seed)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["estimator", "term", "estimate"]).expect("in-memory write");
    for (i, m) in fits.methods.iter().enumerate() {
        w.write_record([m.label(), "(intercept)", &fits.intercepts[i].to_string()]).expect("in-memory write");
        for (name, b) in data.names().iter().zip(fits.slopes[i].iter()) {
            w.write_record([m.label(), name, &b.to_string()]).expect("in-memory write");
        }
    }
    let coefs = w.into_inner().expect("in-memory flush");

    let t = &fits.tuning;
    let mut kv = vec![
        ("regime".to_string(), if high { "high_dimensional" } else { "low_dimensional" }.to_string()),
        ("n".into(), data.n().to_string()),
        ("p".into(), data.p().to_string()),
        ("q".into(), q.to_string()),
        ("statistic".into(), if high { "T_n" } else { "W_n" }.to_string()),
        ("statistic_value".into(), t.statistic.to_string()),
        ("critical_value".into(), t.critical_value.to_string()),
        ("alpha".into(), cfg.alpha.to_string()),
        ("decision".into(), if t.rejects { "reject" } else { "accept" }.to_string()),
        ("omega".into(), t.omega.to_string()),
    ];
    if let Some(d) = t.d {
        kv.push((if high { "d_star" } else { "d" }.to_string(), d.to_string()));
    }
    let mut kw = csv::Writer::from_writer(Vec::new());
    kw.write_record(["term", "k"]).expect("in-memory write");
    for (name, k) in data.names().iter().zip(t.k.iter()) {
        kw.write_record([name, &k.to_string()]).expect("in-memory write");
    }
    let kbytes = kw.into_inner().expect("in-memory flush");

    Ok(vec![
        write_output(cfg, seed, "coefficients.csv", &coefs)?,
        write_output(cfg, seed, "test.csv", &key_value_csv(&kv))?,
        write_output(cfg, seed, "ridge_k.csv", &kbytes)?,
    ])
}

fn apply_overrides(mut scn: Scenario, cfg: &RunConfig) -> Scenario {
    if let Some(r) = cfg.replicates {
        scn.replicates = r;
    }
    if let Some(s) = cfg.seed {
        scn.seed = s;
    }
    if let Some(f) = cfg.folds {
        scn.folds = f;
    }
    scn.alpha = cfg.alpha;
    scn
}

fn sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let base = apply_overrides(Scenario::sweep_base(cfg.rho), cfg);
    let grid = delta_grid(cfg.grid_max.unwrap_or(4.0), cfg.grid_step.unwrap_or(0.25));
    let metric = match cfg.metric.unwrap_or(MetricArg::MseBeta) {
        MetricArg::MseBeta => SweepMetric::MseBeta,
        MetricArg::MseY => SweepMetric::MseY,
    };
    let rows = delta_sweep(&base, &grid, &Method::shrinkage_rows(), metric, &fit_options(cfg, base.folds))?;
    let mut body = Vec::new();
    write_sweep_rows(&rows, &mut body)?;
    Ok(vec![write_output(cfg, base.seed, "sweep_delta.csv", &body)?])
}

fn scenario(cfg: &RunConfig) -> Result<Scenario, Failure> {
    let scn = match &cfg.design {
        Some(d) => d.clone(),
        None => Scenario::named(cfg.scenario.as_deref().unwrap_or("LD1"), cfg.rho)?,
    };
    Ok(apply_overrides(scn, cfg))
}

fn table(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let scn = scenario(cfg)?;
    let t = run_table_scenario(&scn, &fit_options(cfg, scn.folds))?;
    let mut body = Vec::new();
    write_metric_rows(&t.rows, &mut body)?;
    Ok(vec![write_output(cfg, scn.seed, &format!("table_{}.csv", scn.name), &body)?])
}

fn parse_kinds(cfg: &RunConfig, q: usize) -> Result<Vec<EstimatorKind>, Failure> {
    match &cfg.kinds {
        Some(list) => list
            .iter()
            .map(|s| s.trim().parse::<EstimatorKind>().map_err(Failure::from))
            .collect::<Result<Vec<_>, _>>(),
        None => Ok(usable(EstimatorKind::RIDGE_FAMILY.to_vec(), q)),
    }
}

/// Exact risks for the design of `--input` (plug-in LSE coefficients and
/// variance) or, without input, for the first training design of a
/// low-dimensional scenario with its true coefficients.
fn curve(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let (x, beta, sigma2, sub, seed) = match load_input(cfg)? {
        Some(raw) => {
            let cols = cfg.submodel.as_deref().ok_or_else(|| Failure::Input("risk-curve needs --submodel".into()))?;
            let sub = resolve_submodel(&raw, cols)?;
            let d = raw.prepare()?;
            let f = lse(d.x(), d.y())?;
            (d.x().clone(), f.beta, f.sigma2, sub, cfg.seed.unwrap_or(DEFAULT_SEED))
        }
        None => {
            let scn = scenario(cfg)?;
            if scn.is_high_dimensional() {
                return Err(Failure::Input("exact risks need a low-dimensional design".into()));
            }
            let r = generate_replicate(&scn, 0)?;
            (r.train.x().clone(), scn.beta_vector(), scn.sigma * scn.sigma, scn.submodel(), scn.seed)
        }
    };
    let p = x.ncols();
    let zero: Vec<usize> = (0..p).filter(|j| !sub.contains(j)).collect();
    if zero.is_empty() {
        return Err(Failure::Input("the sub-model keeps every column; the restriction must drop at least one".into()));
    }
    let k = match cfg.ridge_k {
        Some(k) => RidgeSpec::scalar(k, p)?,
        None => hoerl_kennard_k(&beta, sigma2)?,
    };
    let h = Restriction::zero_coefficients(p, &zero)?;
    let ctx = RiskContext::from_design(&x, k, h, DMatrix::identity(p, p), beta, sigma2, cfg.alpha, cfg.omega.unwrap_or(0.5))?;
    let kinds = parse_kinds(cfg, zero.len())?;
    let grid = delta_grid(cfg.grid_max.unwrap_or(20.0), cfg.grid_step.unwrap_or(1.0));
    let rows = risk_curve(&ctx, &kinds, &grid)?;
    let mut body = Vec::new();
    write_risk_curve_csv(&rows, &mut body)?;
    Ok(vec![write_output(cfg, seed, "risk_curve.csv", &body)?])
}

fn bootstrap(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let (data, sub, default_folds) = match load_input(cfg)? {
        Some(d) => {
            let cols = cfg.submodel.as_deref().ok_or_else(|| Failure::Input("bootstrap needs --submodel".into()))?;
            let sub = resolve_submodel(&d, cols)?;
            (d, sub, 10)
        }
        None => {
            let which = cfg.synthetic.unwrap_or(Synthetic::Pollution);
            let s = match which {
                Synthetic::Pollution => synthetic_pollution(seed)?,
                Synthetic::Eye => synthetic_eye(seed)?,
            };
            (s.data, s.submodel, if which == Synthetic::Eye { 5 } else { 10 })
        }
    };
    let opts = BootstrapOptions {
        replicates: cfg.replicates.unwrap_or(250),
        folds: cfg.folds.unwrap_or(default_folds),
        seed,
        alpha: cfg.alpha,
        ..Default::default()
    };
    let rep = bootstrap_evaluate(&data, &sub, &opts)?;
    let mut body = Vec::new();
    write_metric_rows(&rep.rows, &mut body)?;
    let mut tw = csv::Writer::from_writer(Vec::new());
    tw.write_record(["term", "pseudo_truth"]).expect("in-memory write");
    for (name, b) in data.names().iter().zip(rep.reference.iter()) {
        tw.write_record([name, &b.to_string()]).expect("in-memory write");
    }
    let truth = tw.into_inner().expect("in-memory flush");
    Ok(vec![
        write_output(cfg, seed, "bootstrap.csv", &body)?,
        write_output(cfg, seed, "pseudo_truth.csv", &truth)?,
    ])
}
