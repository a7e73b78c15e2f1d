use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::pipeline::{evaluate, fit_methods, FitOptions, Method, Metrics};
use super::scenario::{generate_replicate, Scenario};
use crate::error::{Error, Result};
use crate::shrinkage::EstimatorKind;

/// Averaged performance of one method with standard errors and ratios
/// `MSE(benchmark) / MSE(method)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub estimator: Method,
    pub mse_y: f64,
    pub mse_beta: f64,
    pub pe: f64,
    pub se_mse_y: f64,
    pub se_mse_beta: f64,
    pub se_pe: f64,
    pub rmse_y: f64,
    pub rmse_beta: f64,
    pub rpe: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Reduce per-replicate metrics (outer index replicate, inner index method)
/// in replicate order.
pub fn aggregate(methods: &[Method], per_rep: &[Vec<Metrics>], benchmark: Method) -> Result<Vec<MetricRow>> {
    let b = methods
        .iter()
        .position(|&m| m == benchmark)
        .ok_or_else(|| Error::InvalidInput(format!("benchmark {benchmark} is not among the methods")))?;
    if per_rep.is_empty() {
        return Err(Error::InvalidInput("no replicates to aggregate".into()));
    }
    let col = |i: usize, f: fn(&Metrics) -> f64| -> Vec<f64> { per_rep.iter().map(|r| f(&r[i])).collect() };
    let stats: Vec<[(f64, f64); 3]> = (0..methods.len())
        .map(|i| [mean_se(&col(i, |m| m.mse_y)), mean_se(&col(i, |m| m.mse_beta)), mean_se(&col(i, |m| m.pe))])
        .collect();
    Ok(methods
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let [y, be, pe] = stats[i];
            MetricRow {
                estimator: m,
                mse_y: y.0,
                mse_beta: be.0,
                pe: pe.0,
                se_mse_y: y.1,
                se_mse_beta: be.1,
                se_pe: pe.1,
                rmse_y: stats[b][0].0 / y.0,
                rmse_beta: stats[b][1].0 / be.0,
                rpe: stats[b][2].0 / pe.0,
            }
        })
        .collect())
}

pub fn write_metric_rows<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// Fit and score every method on replicate `rep` of `scn`.
pub fn run_replicate(scn: &Scenario, rep: usize, methods: &[Method], opts: &FitOptions) -> Result<Vec<Metrics>> {
    let r = generate_replicate(scn, rep)?;
    let fits = fit_methods(&r.train, r.valid.as_ref(), &scn.submodel(), methods, opts, r.tuning_seed)?;
    let beta = scn.beta_vector();
    Ok((0..methods.len()).map(|i| evaluate(&r.test, &beta, fits.intercepts[i], &fits.slopes[i])).collect())
}

fn run_all(scn: &Scenario, methods: &[Method], opts: &FitOptions) -> Result<Vec<Vec<Metrics>>> {
    (0..scn.replicates).into_par_iter().map(|rep| run_replicate(scn, rep, methods, opts)).collect()
}

fn scenario_options(scn: &Scenario, base: &FitOptions) -> FitOptions {
    FitOptions { alpha: scn.alpha, folds: scn.folds, ..base.clone() }
}

#[derive(Debug, Clone)]
pub struct TableResult {
    pub scenario: Scenario,
    pub rows: Vec<MetricRow>,
}

impl TableResult {
    pub fn row(&self, m: Method) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.estimator == m)
    }
}

/// Monte Carlo table for one scenario: every method of the matching
/// dimension regime, benchmark GRR.
pub fn run_table_scenario(scn: &Scenario, opts: &FitOptions) -> Result<TableResult> {
    scn.validate()?;
    let methods = if scn.is_high_dimensional() { Method::hd_rows() } else { Method::ld_rows() };
    let per_rep = run_all(scn, &methods, &scenario_options(scn, opts))?;
    Ok(TableResult { scenario: scn.clone(), rows: aggregate(&methods, &per_rep, Method::Shrinkage(EstimatorKind::Grr))? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    MseBeta,
    MseY,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta_star: f64,
    pub estimator: Method,
    pub rmse: f64,
}

/// `0, step, ..., max`.
pub fn delta_grid(max: f64, step: f64) -> Vec<f64> {
    let n = (max / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

/// Relative efficiency against GRR along `grid`, with the violation
/// `Delta*` added to the first coefficient outside the sub-model of `base`.
/// Every grid point reuses the same replicate seeds.
pub fn delta_sweep(
    base: &Scenario,
    grid: &[f64],
    methods: &[Method],
    metric: SweepMetric,
    opts: &FitOptions,
) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let bench = Method::Shrinkage(EstimatorKind::Grr);
    let mut methods = methods.to_vec();
    if !methods.contains(&bench) {
        methods.insert(0, bench);
    }
    let sub = base.submodel();
    let target = (0..base.p()).find(|j| !sub.contains(j)).expect("validated: sub-model drops a column");
    let opts = scenario_options(base, opts);
    let mut out = Vec::with_capacity(grid.len() * methods.len());
    for &d in grid {
        if !(d >= 0.0) {
            return Err(Error::InvalidInput("Delta* grid must be nonnegative".into()));
        }
        let mut scn = base.clone();
        scn.submodel = Some(sub.clone());
        let mut beta = DVector::from_column_slice(&base.beta);
        beta[target] += d;
        scn.beta = beta.iter().copied().collect();
        let rows = aggregate(&methods, &run_all(&scn, &methods, &opts)?, bench)?;
        out.extend(rows.into_iter().map(|r| SweepRow {
            delta_star: d,
            estimator: r.estimator,
            rmse: match metric {
                SweepMetric::MseBeta => r.rmse_beta,
                SweepMetric::MseY => r.rmse_y,
            },
        }));
    }
    Ok(out)
}

pub fn write_sweep_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}
