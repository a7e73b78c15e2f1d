use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::pipeline::{evaluate, fit_methods, FitOptions, Method, Metrics};
use super::scenario::{draw_rows, replicate_rng, Covariance};
use super::simulate::{aggregate, MetricRow};
use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::hd::{hd_k_selection, PartitionedData};
use crate::ld::{fit_grr, hoerl_kennard_from_lse};
use crate::penalized::LambdaRule;
use crate::shrinkage::EstimatorKind;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub folds: usize,
    pub seed: u64,
    /// Case resampling; when off each replicate only re-splits the data.
    pub resample: bool,
    pub train_fraction: f64,
    pub alpha: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { replicates: 250, folds: 10, seed: 1, resample: true, train_fraction: 2.0 / 3.0, alpha: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapReport {
    pub rows: Vec<MetricRow>,
    /// Full-data GRR coefficients (original scale) used as the truth for
    /// `MSE_y` and `MSE_beta`.
    pub reference: DVector<f64>,
    pub high_dimensional: bool,
}

/// GRR on the full data, with the same ridge rule the estimators use.
pub fn pseudo_truth(data: &RegressionData, submodel: &[usize], folds: usize, seed: u64) -> Result<DVector<f64>> {
    let d = data.prepare()?;
    let beta = if d.p() < d.n() {
        fit_grr(&d, &hoerl_kennard_from_lse(&d)?)?.beta
    } else {
        let part = PartitionedData::from_data(&d, submodel)?;
        let k = hd_k_selection(&part, folds, seed)?;
        let grr = crate::shrinkage::RestrictedRidge::fit(&part.x(), part.y(), &k, &part.restriction()?)?.grr;
        part.to_original_order(&grr)
    };
    Ok(d.to_original_coefficients(&beta).1)
}

/// Case-resampling evaluation: each replicate resamples rows, splits them
/// into train and test, fits every method with `folds`-fold tuning and
/// scores it against the full-data GRR fit. Ratios are relative to GRR.
pub fn bootstrap_evaluate(data: &RegressionData, submodel: &[usize], opts: &BootstrapOptions) -> Result<BootstrapReport> {
    if opts.replicates == 0 {
        return Err(Error::InvalidInput("need at least one bootstrap replicate".into()));
    }
    if !(opts.train_fraction > 0.0 && opts.train_fraction < 1.0) {
        return Err(Error::InvalidInput("train fraction must lie in (0, 1)".into()));
    }
    let n = data.n();
    let n_train = ((n as f64) * opts.train_fraction).round() as usize;
    if n_train < 3 || n_train >= n {
        return Err(Error::InvalidInput("train/test split leaves an empty side".into()));
    }
    let high = data.p() >= n_train;
    let methods = if high { Method::hd_rows() } else { Method::ld_rows() };
    let reference = pseudo_truth(data, submodel, opts.folds, opts.seed)?;
    let fit_opts = FitOptions { alpha: opts.alpha, folds: opts.folds, lambda_rule: LambdaRule::OneSe, ..Default::default() };

    let per_rep: Vec<Vec<Metrics>> = (0..opts.replicates)
        .into_par_iter()
        .map(|b| -> Result<Vec<Metrics>> {
            let mut rng = replicate_rng(opts.seed, b);
            let mut rows: Vec<usize> =
                if opts.resample { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            rows.shuffle(&mut rng);
            let train = data.select_rows(&rows[..n_train])?;
            let test = data.select_rows(&rows[n_train..])?;
            let fits = fit_methods(&train, None, submodel, &methods, &fit_opts, rng.random())?;
            Ok((0..methods.len()).map(|i| evaluate(&test, &reference, fits.intercepts[i], &fits.slopes[i])).collect())
        })
        .collect::<Result<_>>()?;
    Ok(BootstrapReport {
        rows: aggregate(&methods, &per_rep, Method::Shrinkage(EstimatorKind::Grr))?,
        reference,
        high_dimensional: high,
    })
}

/// Simulated data with a known sub-model, standing in for a real data set.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub data: RegressionData,
    pub response: String,
    pub submodel: Vec<usize>,
}

const POLLUTION_NAMES: [&str; 15] = [
    "prec", "jant", "jult", "humid", "ovr65", "popn", "educ", "hous", "dens", "nonw", "wwdrk", "poor", "hc", "nox", "so2",
];

/// Sixty rows, fifteen correlated predictors named after the mortality
/// covariates; only prec, jant, educ, nonw and so2 carry signal.
pub fn synthetic_pollution(seed: u64) -> Result<SyntheticData> {
    let p = POLLUTION_NAMES.len();
    let sub = vec![0, 1, 6, 9, 14];
    let mut beta = DVector::zeros(p);
    for (&j, &b) in sub.iter().zip(&[18.0, -15.0, -12.0, 25.0, 16.0]) {
        beta[j] = b;
    }
    let data = synthetic(60, &beta, 35.0, 940.0, 0.5, seed)?;
    let names = POLLUTION_NAMES.iter().map(|s| s.to_string()).collect();
    Ok(SyntheticData {
        data: RegressionData::with_names(data.x().clone(), data.y().clone(), names)?,
        response: "mort".into(),
        submodel: sub,
    })
}

/// 120 rows and 200 correlated predictors with 21 active ones.
pub fn synthetic_eye(seed: u64) -> Result<SyntheticData> {
    let p = 200;
    let sub: Vec<usize> = (0..21).map(|i| i * 9 + 3).collect();
    let mut beta = DVector::zeros(p);
    for (i, &j) in sub.iter().enumerate() {
        beta[j] = if i % 2 == 0 { 0.06 } else { -0.04 } * (1.0 + (i % 3) as f64);
    }
    let data = synthetic(120, &beta, 0.1, 8.0, 0.5, seed)?;
    let names = (1..=p).map(|j| format!("g{j}")).collect();
    Ok(SyntheticData {
        data: RegressionData::with_names(data.x().clone(), data.y().clone(), names)?,
        response: "trim32".into(),
        submodel: sub,
    })
}

fn synthetic(n: usize, beta: &DVector<f64>, sigma: f64, offset: f64, rho: f64, seed: u64) -> Result<RegressionData> {
    let p = beta.len();
    let chol_t = Covariance::Ar1 { rho }.matrix(p)?.cholesky().expect("AR(1) is positive definite").l().transpose();
    let mut rng = replicate_rng(seed, 0);
    let x = draw_rows(n, &chol_t, &mut rng);
    let e = DVector::from_fn(n, |_, _| -> f64 { rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng) });
    let y = (&x * beta + e * sigma).add_scalar(offset);
    RegressionData::new(x, y)
}
