//! Coordinate-descent solvers for the penalized-regression baselines.
//!
//! All families minimize `(1/2n) ||y - X b||^2 + sum_j pen(b_j)` on
//! standardized predictors and a centered response:
//!
//! | family | `pen(t)` |
//! |--------|----------|
//! | ridge  | `lambda t^2` |
//! | lasso  | `lambda |t|` |
//! | alasso | `lambda w_j |t|` |
//! | enet   | `lambda |t| + lambda2 t^2` |
//! | scad   | SCAD with parameter `a` |
//! | mcp    | MCP with parameter `gamma` |
//! | mnet   | MCP plus `lambda2 t^2` |

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{fold_assignment, split_fold};
use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::hd::{cv_scalar_ridge, default_scalar_k_grid, RidgeSvd};
use crate::ld::lse;

pub const SCAD_DEFAULT_A: f64 = 3.7;
pub const MCP_DEFAULT_GAMMA: f64 = 3.0;
pub const CD_TOLERANCE: f64 = 1e-7;
pub const CD_MAX_SWEEPS: usize = 100_000;
const WEIGHT_MIN: f64 = 1e-8;
const WEIGHT_MAX: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    Ridge,
    Lasso,
    Alasso,
    Scad,
    Mcp,
    Enet,
    Mnet,
}

impl PenaltyFamily {
    pub const ALL: [PenaltyFamily; 7] = [
        PenaltyFamily::Ridge,
        PenaltyFamily::Lasso,
        PenaltyFamily::Alasso,
        PenaltyFamily::Scad,
        PenaltyFamily::Mcp,
        PenaltyFamily::Enet,
        PenaltyFamily::Mnet,
    ];

    /// Row label used in result tables.
    pub fn label(&self) -> &'static str {
        match self {
            PenaltyFamily::Ridge => "Ridge",
            PenaltyFamily::Lasso => "LASSO",
            PenaltyFamily::Alasso => "ALASSO",
            PenaltyFamily::Scad => "SCAD",
            PenaltyFamily::Mcp => "MCP",
            PenaltyFamily::Enet => "ENET",
            PenaltyFamily::Mnet => "MNET",
        }
    }

    pub fn uses_l2(&self) -> bool {
        matches!(self, PenaltyFamily::Enet | PenaltyFamily::Mnet)
    }
}

impl fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PenaltyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PenaltyFamily::ALL
            .into_iter()
            .find(|f| f.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown penalty family `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub lambda: f64,
    pub lambda2: f64,
    /// SCAD `a` or MCP/MNET `gamma`; ignored by the convex families.
    pub gamma: f64,
    /// Adaptive lasso weights, required for `Alasso`.
    pub weights: Option<DVector<f64>>,
}

impl PenaltySpec {
    pub fn new(family: PenaltyFamily, lambda: f64) -> Self {
        let gamma = match family {
            PenaltyFamily::Scad => SCAD_DEFAULT_A,
            _ => MCP_DEFAULT_GAMMA,
        };
        Self { family, lambda, lambda2: 0.0, gamma, weights: None }
    }

    pub fn with_lambda2(mut self, lambda2: f64) -> Self {
        self.lambda2 = lambda2;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_weights(mut self, w: DVector<f64>) -> Self {
        self.weights = Some(w);
        self
    }

    fn at_lambda(&self, lambda: f64, l2_ratio: f64) -> Self {
        let mut s = self.clone();
        s.lambda = lambda;
        if self.family.uses_l2() {
            s.lambda2 = l2_ratio * lambda;
        }
        s
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::InvalidInput("penalty levels must be finite and >= 0".into()));
        }
        match self.family {
            PenaltyFamily::Scad if !(self.gamma > 2.0) => {
                return Err(Error::InvalidInput("SCAD needs a > 2".into()));
            }
            PenaltyFamily::Mcp | PenaltyFamily::Mnet if !(self.gamma > 0.0) => {
                return Err(Error::InvalidInput("MCP needs gamma > 0".into()));
            }
            PenaltyFamily::Alasso => match &self.weights {
                Some(w) if w.len() == p && w.iter().all(|&v| v > 0.0 && v.is_finite()) => {}
                _ => return Err(Error::InvalidInput("adaptive lasso needs p positive weights".into())),
            },
            _ => {}
        }
        Ok(())
    }

    fn weight(&self, j: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[j])
    }

    /// `pen(t)` for coordinate `j`.
    pub fn penalty(&self, j: usize, t: f64) -> f64 {
        let (l, a) = (self.lambda, self.gamma);
        let u = t.abs();
        match self.family {
            PenaltyFamily::Ridge => l * t * t,
            PenaltyFamily::Lasso => l * u,
            PenaltyFamily::Alasso => l * self.weight(j) * u,
            PenaltyFamily::Enet => l * u + self.lambda2 * t * t,
            PenaltyFamily::Scad => {
                if u <= l {
                    l * u
                } else if u <= a * l {
                    (2.0 * a * l * u - u * u - l * l) / (2.0 * (a - 1.0))
                } else {
                    l * l * (a + 1.0) / 2.0
                }
            }
            PenaltyFamily::Mcp | PenaltyFamily::Mnet => {
                let m = if u <= a * l { l * u - u * u / (2.0 * a) } else { a * l * l / 2.0 };
                m + if self.family == PenaltyFamily::Mnet { self.lambda2 * t * t } else { 0.0 }
            }
        }
    }

    /// Derivative of `pen` at `t != 0`.
    fn penalty_slope(&self, j: usize, t: f64) -> f64 {
        let (l, a) = (self.lambda, self.gamma);
        let (s, u) = (t.signum(), t.abs());
        match self.family {
            PenaltyFamily::Ridge => 2.0 * l * t,
            PenaltyFamily::Lasso => l * s,
            PenaltyFamily::Alasso => l * self.weight(j) * s,
            PenaltyFamily::Enet => l * s + 2.0 * self.lambda2 * t,
            PenaltyFamily::Scad => {
                if u <= l {
                    l * s
                } else if u <= a * l {
                    (a * l * s - t) / (a - 1.0)
                } else {
                    0.0
                }
            }
            PenaltyFamily::Mcp | PenaltyFamily::Mnet => {
                let m = if u <= a * l { l * s - t / a } else { 0.0 };
                m + if self.family == PenaltyFamily::Mnet { 2.0 * self.lambda2 * t } else { 0.0 }
            }
        }
    }

    /// Half-width of the subdifferential at 0.
    fn zero_threshold(&self, j: usize) -> f64 {
        match self.family {
            PenaltyFamily::Ridge => 0.0,
            PenaltyFamily::Alasso => self.lambda * self.weight(j),
            _ => self.lambda,
        }
    }

    /// Minimizer of `v/2 t^2 - z t + pen(t)`.
    fn update(&self, j: usize, z: f64, v: f64) -> f64 {
        let l = self.lambda;
        match self.family {
            PenaltyFamily::Ridge => z / (v + 2.0 * l),
            PenaltyFamily::Lasso => soft(z, l) / v,
            PenaltyFamily::Alasso => soft(z, l * self.weight(j)) / v,
            PenaltyFamily::Enet => soft(z, l) / (v + 2.0 * self.lambda2),
            PenaltyFamily::Scad => {
                let a = self.gamma;
                if v > 1.0 / (a - 1.0) {
                    if z.abs() <= l * (v + 1.0) {
                        soft(z, l) / v
                    } else if z.abs() <= a * l * v {
                        soft(z, a * l / (a - 1.0)) / (v - 1.0 / (a - 1.0))
                    } else {
                        z / v
                    }
                } else {
                    self.univariate_search(j, z, v)
                }
            }
            PenaltyFamily::Mcp | PenaltyFamily::Mnet => {
                let g = self.gamma;
                let v2 = v + if self.family == PenaltyFamily::Mnet { 2.0 * self.lambda2 } else { 0.0 };
                if v2 > 1.0 / g {
                    if z.abs() <= g * l * v2 {
                        soft(z, l) / (v2 - 1.0 / g)
                    } else {
                        z / v2
                    }
                } else {
                    self.univariate_search(j, z, v)
                }
            }
        }
    }

    /// Nonconvex univariate problem: compare the stationary points of every
    /// piece (clamped into the piece) and zero.
    fn univariate_search(&self, j: usize, z: f64, v: f64) -> f64 {
        let obj = |t: f64| 0.5 * v * t * t - z * t + self.penalty(j, t);
        let (l, a) = (self.lambda, self.gamma);
        let s = z.signum();
        let mut cands = vec![0.0, z / v, s * l, s * a * l];
        cands.push((soft(z, l) / v).clamp(-l, l));
        match self.family {
            PenaltyFamily::Scad => {
                let den = v - 1.0 / (a - 1.0);
                if den != 0.0 {
                    let t = soft(z, a * l / (a - 1.0)) / den;
                    cands.push(s * t.abs().clamp(l, a * l));
                }
            }
            _ => {
                let v2 = v + if self.family == PenaltyFamily::Mnet { 2.0 * self.lambda2 } else { 0.0 };
                let den = v2 - 1.0 / a;
                if den != 0.0 {
                    cands.push((soft(z, l) / den).clamp(-a * l, a * l));
                }
                cands.push(z / v2);
            }
        }
        cands.into_iter().min_by(|x, y| obj(*x).total_cmp(&obj(*y))).unwrap_or(0.0)
    }
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, spec: &PenaltySpec) -> f64 {
    let n = x.nrows() as f64;
    let r = y - x * beta;
    r.norm_squared() / (2.0 * n) + beta.iter().enumerate().map(|(j, &b)| spec.penalty(j, b)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedFit {
    pub beta: DVector<f64>,
    pub converged: bool,
    pub sweeps: usize,
    pub objective: f64,
}

/// Column-major design with cached `||x_j||^2 / n`.
struct Design<'a> {
    x: &'a DMatrix<f64>,
    v: Vec<f64>,
    n: f64,
}

impl<'a> Design<'a> {
    fn new(x: &'a DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        Self { x, v: x.column_iter().map(|c| c.norm_squared() / n).collect(), n }
    }
}

fn sweep(d: &Design, spec: &PenaltySpec, beta: &mut DVector<f64>, r: &mut DVector<f64>, idx: &[usize]) -> f64 {
    let mut max_change: f64 = 0.0;
    for &j in idx {
        let v = d.v[j];
        if v == 0.0 {
            continue;
        }
        let col = d.x.column(j);
        let old = beta[j];
        let z = col.dot(r) / d.n + v * old;
        let new = spec.update(j, z, v);
        if new != old {
            r.axpy(old - new, &col, 1.0);
            beta[j] = new;
            max_change = max_change.max((new - old).abs());
        }
    }
    max_change
}

fn descend(x: &DMatrix<f64>, y: &DVector<f64>, spec: &PenaltySpec, start: DVector<f64>) -> PenalizedFit {
    let d = Design::new(x);
    let p = x.ncols();
    let mut beta = start;
    let mut r = y - x * &beta;
    let all: Vec<usize> = (0..p).collect();
    let mut sweeps = 0;
    let mut converged = false;
    #[cfg(debug_assertions)]
    let mut last_obj = objective(x, y, &beta, spec);
    while sweeps < CD_MAX_SWEEPS {
        let change = sweep(&d, spec, &mut beta, &mut r, &all);
        sweeps += 1;
        #[cfg(debug_assertions)]
        {
            let obj = objective(x, y, &beta, spec);
            debug_assert!(obj <= last_obj + 1e-10 * last_obj.abs().max(1.0), "objective rose: {last_obj} -> {obj}");
            last_obj = obj;
        }
        if change < CD_TOLERANCE {
            converged = true;
            break;
        }
        // iterate on the active set until it settles, then re-check everything
        let active: Vec<usize> = all.iter().copied().filter(|&j| beta[j] != 0.0).collect();
        while sweeps < CD_MAX_SWEEPS {
            let c = sweep(&d, spec, &mut beta, &mut r, &active);
            sweeps += 1;
            if c < CD_TOLERANCE {
                break;
            }
        }
    }
    let objective = objective(x, y, &beta, spec);
    PenalizedFit { beta, converged, sweeps, objective }
}

/// Coordinate descent from zero. A fit that hits the sweep cap is returned
/// with `converged = false`.
pub fn fit_penalized(data: &RegressionData, spec: &PenaltySpec) -> Result<PenalizedFit> {
    fit_penalized_xy(data.x(), data.y(), spec, None)
}

pub fn fit_penalized_xy(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &PenaltySpec,
    warm: Option<&DVector<f64>>,
) -> Result<PenalizedFit> {
    let p = x.ncols();
    if y.len() != x.nrows() {
        return Err(Error::InvalidInput("X and Y row counts differ".into()));
    }
    spec.validate(p)?;
    let start = match warm {
        Some(w) if w.len() == p => w.clone(),
        Some(_) => return Err(Error::InvalidInput("warm start has the wrong length".into())),
        None => DVector::zeros(p),
    };
    Ok(descend(x, y, spec, start))
}

/// Largest violation of the stationarity conditions at `beta`.
pub fn kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, spec: &PenaltySpec) -> f64 {
    let n = x.nrows() as f64;
    let grad = -(x.tr_mul(&(y - x * beta))) / n;
    (0..x.ncols())
        .map(|j| {
            if beta[j] != 0.0 {
                (grad[j] + spec.penalty_slope(j, beta[j])).abs()
            } else {
                (grad[j].abs() - spec.zero_threshold(j)).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Pilot estimator behind the adaptive weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotRule {
    Lse,
    CvRidge { folds: usize, seed: u64 },
    /// LSE when `p < n`, else 5-fold CV ridge.
    Auto { seed: u64 },
}

pub fn pilot_estimate(data: &RegressionData, rule: PilotRule) -> Result<DVector<f64>> {
    let rule = match rule {
        PilotRule::Auto { seed } if data.p() >= data.n() => PilotRule::CvRidge { folds: 5, seed },
        PilotRule::Auto { .. } => PilotRule::Lse,
        r => r,
    };
    match rule {
        PilotRule::Lse => Ok(lse(data.x(), data.y())?.beta),
        PilotRule::CvRidge { folds, seed } => {
            let k = cv_scalar_ridge(data.x(), data.y(), folds, &default_scalar_k_grid(data.n()), seed)?;
            Ok(RidgeSvd::new(data.x(), data.y())?.beta(k))
        }
        PilotRule::Auto { .. } => unreachable!(),
    }
}

/// `w_j = 1 / |pilot_j|^gamma`, clamped to `[1e-8, 1e8]`.
pub fn alasso_weights_from(pilot: &DVector<f64>, gamma: f64) -> DVector<f64> {
    pilot.map(|b| {
        let w = b.abs().powf(-gamma);
        if w.is_nan() {
            WEIGHT_MAX
        } else {
            w.clamp(WEIGHT_MIN, WEIGHT_MAX)
        }
    })
}

pub fn alasso_weights(data: &RegressionData, gamma: f64, rule: PilotRule) -> Result<DVector<f64>> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput("adaptive weight exponent must be >= 0".into()));
    }
    Ok(alasso_weights_from(&pilot_estimate(data, rule)?, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    pub n_lambda: usize,
    pub min_ratio: f64,
    pub folds: usize,
    pub seed: u64,
    /// ENET/MNET use `lambda2 = l2_ratio * lambda` along the path.
    pub l2_ratio: f64,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self { n_lambda: 50, min_ratio: 1e-3, folds: 5, seed: 1, l2_ratio: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub family: PenaltyFamily,
    /// Descending.
    pub lambdas: Vec<f64>,
    /// `p x n_lambda`.
    pub coefficients: DMatrix<f64>,
    pub cv_error: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_1se: f64,
    pub all_converged: bool,
}

impl PathResult {
    fn index_of(&self, lambda: f64) -> usize {
        self.lambdas.iter().position(|&l| l == lambda).unwrap_or(0)
    }

    pub fn beta_min(&self) -> DVector<f64> {
        self.coefficients.column(self.index_of(self.lambda_min)).into_owned()
    }

    pub fn beta_1se(&self) -> DVector<f64> {
        self.coefficients.column(self.index_of(self.lambda_1se)).into_owned()
    }

    /// Long format: `lambda, coefficient_index, value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let e = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(["lambda", "coefficient_index", "value"]).map_err(e)?;
        for (i, &l) in self.lambdas.iter().enumerate() {
            for j in 0..self.coefficients.nrows() {
                w.write_record([l.to_string(), j.to_string(), self.coefficients[(j, i)].to_string()]).map_err(e)?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }
}

/// Smallest `lambda` at which the all-zero vector is a solution.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>, spec: &PenaltySpec) -> f64 {
    let n = x.nrows() as f64;
    let z = x.tr_mul(y) / n;
    z.iter()
        .enumerate()
        .map(|(j, &v)| match spec.family {
            PenaltyFamily::Alasso => v.abs() / spec.weight(j),
            _ => v.abs(),
        })
        .fold(0.0, f64::max)
}

pub fn lambda_grid(lmax: f64, n_lambda: usize, min_ratio: f64) -> Vec<f64> {
    let lmax = if lmax > 0.0 { lmax } else { 1e-6 };
    let (hi, lo) = (lmax.ln(), (lmax * min_ratio).ln());
    (0..n_lambda)
        .map(|i| if i == 0 { lmax } else { (hi + (lo - hi) * i as f64 / (n_lambda - 1) as f64).exp() })
        .collect()
}

fn fit_path(x: &DMatrix<f64>, y: &DVector<f64>, spec: &PenaltySpec, grid: &[f64], l2_ratio: f64) -> Result<(DMatrix<f64>, bool)> {
    let p = x.ncols();
    let mut coefs = DMatrix::zeros(p, grid.len());
    let mut warm = DVector::zeros(p);
    let mut ok = true;
    for (i, &l) in grid.iter().enumerate() {
        let fit = fit_penalized_xy(x, y, &spec.at_lambda(l, l2_ratio), Some(&warm))?;
        ok &= fit.converged;
        coefs.set_column(i, &fit.beta);
        warm = fit.beta;
    }
    Ok((coefs, ok))
}

fn center(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    let n = x.nrows() as f64;
    let xm = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let ym = y.sum() / n;
    let mut xc = x.clone();
    for (j, mut c) in xc.column_iter_mut().enumerate() {
        c.add_scalar_mut(-xm[j]);
    }
    (xc, y.add_scalar(-ym), xm, ym)
}

/// Warm-started path on a log grid from `lambda_max` down to
/// `min_ratio * lambda_max`, tuned by k-fold CV with the one-standard-error
/// rule. Training folds are re-centered.
pub fn lambda_path(data: &RegressionData, spec: &PenaltySpec, opts: &PathOptions) -> Result<PathResult> {
    if opts.n_lambda < 10 {
        return Err(Error::InvalidInput("need at least 10 lambda values".into()));
    }
    if !(opts.min_ratio > 0.0 && opts.min_ratio < 1.0) {
        return Err(Error::InvalidInput("min_ratio must lie in (0, 1)".into()));
    }
    let (x, y) = (data.x(), data.y());
    spec.validate(x.ncols())?;
    let grid = lambda_grid(lambda_max(x, y, spec), opts.n_lambda, opts.min_ratio);
    let (coefficients, mut all_converged) = fit_path(x, y, spec, &grid, opts.l2_ratio)?;

    let labels = fold_assignment(data.n(), opts.folds, opts.seed)?;
    let per_fold: Vec<(Vec<f64>, bool)> = (0..opts.folds)
        .into_par_iter()
        .map(|f| -> Result<(Vec<f64>, bool)> {
            let (train, test) = split_fold(&labels, f);
            let xt = x.select_rows(&train);
            let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
            let (xc, yc, xm, ym) = center(&xt, &yt);
            let (coefs, ok) = fit_path(&xc, &yc, spec, &grid, opts.l2_ratio)?;
            let errs = (0..grid.len())
                .map(|i| {
                    let b = coefs.column(i);
                    let b0 = ym - xm.dot(&b);
                    test.iter().map(|&r| (y[r] - b0 - x.row(r).transpose().dot(&b)).powi(2)).sum::<f64>()
                        / test.len() as f64
                })
                .collect();
            Ok((errs, ok))
        })
        .collect::<Result<_>>()?;
    let k = opts.folds as f64;
    let mut cv_error = vec![0.0; grid.len()];
    let mut cv_se = vec![0.0; grid.len()];
    for i in 0..grid.len() {
        let vals: Vec<f64> = per_fold.iter().map(|(e, _)| e[i]).collect();
        let mean = vals.iter().sum::<f64>() / k;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        cv_error[i] = mean;
        cv_se[i] = (var / k).sqrt();
    }
    all_converged &= per_fold.iter().all(|(_, ok)| *ok);
    let imin = crate::cv::argmin(&cv_error);
    let bound = cv_error[imin] + cv_se[imin];
    // grid is descending: the first index under the bound has the largest lambda
    let i1se = (0..=imin).find(|&i| cv_error[i] <= bound).unwrap_or(imin);
    Ok(PathResult {
        family: spec.family,
        lambda_min: grid[imin],
        lambda_1se: grid[i1se],
        lambdas: grid,
        coefficients,
        cv_error,
        cv_se,
        all_converged,
    })
}

/// Which CV rule picks the reported fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaRule {
    Min,
    OneSe,
}

/// CV-tuned fit of one baseline family; adaptive weights come from `pilot`.
pub fn tuned_baseline(
    data: &RegressionData,
    family: PenaltyFamily,
    pilot: PilotRule,
    rule: LambdaRule,
    opts: &PathOptions,
) -> Result<DVector<f64>> {
    let mut spec = PenaltySpec::new(family, 0.0);
    if family == PenaltyFamily::Alasso {
        spec = spec.with_weights(alasso_weights(data, 1.0, pilot)?);
    }
    let path = lambda_path(data, &spec, opts)?;
    Ok(match rule {
        LambdaRule::Min => path.beta_min(),
        LambdaRule::OneSe => path.beta_1se(),
    })
}

/// Fit the path on `train` and keep the coefficients with the smallest
/// squared prediction error on `valid` (already on the training scale).
pub fn validation_tuned_baseline(
    train: &RegressionData,
    valid: &RegressionData,
    family: PenaltyFamily,
    pilot: PilotRule,
    opts: &PathOptions,
) -> Result<DVector<f64>> {
    if valid.p() != train.p() || valid.n() == 0 {
        return Err(Error::InvalidInput("validation set must be nonempty with matching columns".into()));
    }
    let mut spec = PenaltySpec::new(family, 0.0);
    if family == PenaltyFamily::Alasso {
        spec = spec.with_weights(alasso_weights(train, 1.0, pilot)?);
    }
    spec.validate(train.p())?;
    let grid = lambda_grid(lambda_max(train.x(), train.y(), &spec), opts.n_lambda, opts.min_ratio);
    let (coefs, _) = fit_path(train.x(), train.y(), &spec, &grid, opts.l2_ratio)?;
    let errs: Vec<f64> = coefs
        .column_iter()
        .map(|b| (valid.y() - valid.x() * b).norm_squared())
        .collect();
    Ok(coefs.column(crate::cv::argmin(&errs)).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_problem(n: usize, p: usize, seed: u64) -> RegressionData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let beta = DVector::from_fn(p, |j, _| if j < 3 { 2.0 - j as f64 } else { 0.0 });
        let e = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        RegressionData::new(x.clone(), &x * beta + e).unwrap().prepare().unwrap()
    }

    #[test]
    fn unpenalized_lasso_is_least_squares() {
        let d = random_problem(40, 5, 1);
        let fit = fit_penalized(&d, &PenaltySpec::new(PenaltyFamily::Lasso, 0.0)).unwrap();
        let l = lse(d.x(), d.y()).unwrap().beta;
        assert!((fit.beta - l).amax() < 1e-6);
    }

    #[test]
    fn orthonormal_lasso_soft_thresholds() {
        // columns with ||x_j||^2 = n so that z = X'y / n is the univariate fit
        let n = 8;
        let h = DMatrix::from_fn(n, 4, |i, j| {
            let bits = [(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1, ((i >> 0) ^ (i >> 1)) & 1];
            if bits[j] == 0 { 1.0 } else { -1.0 }
        });
        assert!((h.tr_mul(&h) - DMatrix::identity(4, 4) * n as f64).amax() < 1e-12);
        let y = DVector::from_vec(vec![3.0, -1.0, 0.5, 2.0, -2.5, 0.1, 1.2, -0.7]);
        let z = h.tr_mul(&y) / n as f64;
        for lambda in [0.05, 0.2, 0.5] {
            let fit = fit_penalized_xy(&h, &y, &PenaltySpec::new(PenaltyFamily::Lasso, lambda), None).unwrap();
            for j in 0..4 {
                let want = z[j].signum() * (z[j].abs() - lambda).max(0.0);
                assert!((fit.beta[j] - want).abs() < 1e-8);
            }
        }
    }

    fn grid_oracle(x: &DMatrix<f64>, y: &DVector<f64>, spec: &PenaltySpec) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..200 {
            for b in 0..200 {
                let t = |i: usize| -5.0 + 10.0 * i as f64 / 199.0;
                let beta = DVector::from_vec(vec![t(a), t(b)]);
                best = best.min(objective(x, y, &beta, spec));
            }
        }
        best
    }

    #[test]
    fn two_coefficient_solutions_beat_a_grid_search() {
        for seed in 0..5 {
            let d = random_problem(30, 2, 10 + seed);
            for family in PenaltyFamily::ALL {
                let mut spec = PenaltySpec::new(family, 0.1).with_lambda2(0.05);
                if family == PenaltyFamily::Alasso {
                    spec = spec.with_weights(DVector::from_vec(vec![0.7, 1.8]));
                }
                let fit = fit_penalized(&d, &spec).unwrap();
                let oracle = grid_oracle(d.x(), d.y(), &spec);
                assert!(fit.objective <= oracle + 1e-6, "{family}: {} vs {oracle}", fit.objective);
            }
        }
    }

    #[test]
    fn kkt_conditions_hold_at_convergence() {
        for seed in 0..10 {
            let d = random_problem(50, 20, 100 + seed);
            for family in PenaltyFamily::ALL {
                let mut spec = PenaltySpec::new(family, 0.08).with_lambda2(0.04);
                if family == PenaltyFamily::Alasso {
                    spec = spec.with_weights(alasso_weights(&d, 1.0, PilotRule::Lse).unwrap());
                }
                let fit = fit_penalized(&d, &spec).unwrap();
                assert!(fit.converged);
                assert!(kkt_residual(d.x(), d.y(), &fit.beta, &spec) <= 1e-5, "{family}");
            }
        }
    }

    #[test]
    fn enet_without_l2_is_lasso_and_mnet_is_mcp() {
        let d = random_problem(40, 12, 3);
        let lasso = fit_penalized(&d, &PenaltySpec::new(PenaltyFamily::Lasso, 0.1)).unwrap();
        let enet = fit_penalized(&d, &PenaltySpec::new(PenaltyFamily::Enet, 0.1)).unwrap();
        assert_eq!(lasso.beta, enet.beta);
        let mcp = fit_penalized(&d, &PenaltySpec::new(PenaltyFamily::Mcp, 0.1)).unwrap();
        let mnet = fit_penalized(&d, &PenaltySpec::new(PenaltyFamily::Mnet, 0.1)).unwrap();
        assert_eq!(mcp.beta, mnet.beta);
    }

    #[test]
    fn flat_concave_penalties_approach_lasso() {
        for seed in 0..5 {
            let d = random_problem(40, 10, 20 + seed);
            let lasso = fit_penalized(&d, &PenaltySpec::new(PenaltyFamily::Lasso, 0.15)).unwrap();
            for family in [PenaltyFamily::Scad, PenaltyFamily::Mcp] {
                let f = fit_penalized(&d, &PenaltySpec::new(family, 0.15).with_gamma(1e6)).unwrap();
                assert!((f.beta - &lasso.beta).amax() < 1e-4, "{family}");
            }
        }
    }

    #[test]
    fn adaptive_weights() {
        let w = alasso_weights_from(&DVector::from_vec(vec![2.0, 0.5, 0.0]), 1.0);
        assert_eq!(w.as_slice(), &[0.5, 2.0, 1e8]);
        let w = alasso_weights_from(&DVector::from_vec(vec![2.0, 0.5]), 0.0);
        assert_eq!(w.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn path_head_is_zero_and_rules_are_ordered() {
        let d = random_problem(60, 15, 4);
        let opts = PathOptions { n_lambda: 20, ..Default::default() };
        for family in [PenaltyFamily::Lasso, PenaltyFamily::Enet, PenaltyFamily::Alasso] {
            let mut spec = PenaltySpec::new(family, 0.0);
            if family == PenaltyFamily::Alasso {
                spec = spec.with_weights(alasso_weights(&d, 1.0, PilotRule::Lse).unwrap());
            }
            let path = lambda_path(&d, &spec, &opts).unwrap();
            assert!(path.coefficients.column(0).iter().all(|&b| b == 0.0), "{family}");
            assert!(path.lambda_1se >= path.lambda_min);
            assert!(path.lambdas.windows(2).all(|w| w[1] < w[0]));
            let again = lambda_path(&d, &spec, &opts).unwrap();
            assert_eq!(path.cv_error, again.cv_error);
        }
        let path = lambda_path(&d, &PenaltySpec::new(PenaltyFamily::Lasso, 0.0), &opts).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 20 * 15);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let d = random_problem(20, 3, 5);
        assert!(fit_penalized(&d, &PenaltySpec::new(PenaltyFamily::Scad, 0.1).with_gamma(2.0)).is_err());
        assert!(fit_penalized(&d, &PenaltySpec::new(PenaltyFamily::Alasso, 0.1)).is_err());
        assert!(fit_penalized(&d, &PenaltySpec::new(PenaltyFamily::Lasso, -1.0)).is_err());
    }
}
