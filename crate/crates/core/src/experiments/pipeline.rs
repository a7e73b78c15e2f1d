use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;

use crate::cv::{unit_grid, FoldRidge};
use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::hd::{default_d_grid, hd_k_selection, HdFit, HdFolds, HdOptions, PartitionedData};
use crate::ld::{hoerl_kennard_from_lse, select_omega_cv, select_omega_validation, LdFit};
use crate::linalg::{Restriction, RidgeSpec};
use crate::penalized::{tuned_baseline, validation_tuned_baseline, LambdaRule, PathOptions, PenaltyFamily, PilotRule};
use crate::shrinkage::EstimatorKind;

/// A row of a results table: a ridge-family estimator, the least squares
/// fit, or a penalized baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Shrinkage(EstimatorKind),
    Penalized(PenaltyFamily),
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Shrinkage(k) => k.label(),
            Method::Penalized(f) => f.label(),
        }
    }

    /// The fifteen rows of the low-dimensional tables.
    pub fn ld_rows() -> Vec<Method> {
        let mut v: Vec<Method> = [
            EstimatorKind::Grr,
            EstimatorKind::Rgrr,
            EstimatorKind::Ls,
            EstimatorKind::Pt,
            EstimatorKind::Spt,
            EstimatorKind::Ps,
            EstimatorKind::Ipt,
            EstimatorKind::Lse,
        ]
        .into_iter()
        .map(Method::Shrinkage)
        .collect();
        v.extend(PenaltyFamily::ALL.into_iter().map(Method::Penalized));
        v
    }

    /// The fourteen rows of the high-dimensional tables (no least squares).
    pub fn hd_rows() -> Vec<Method> {
        Self::ld_rows().into_iter().filter(|m| *m != Method::Shrinkage(EstimatorKind::Lse)).collect()
    }

    pub fn shrinkage_rows() -> Vec<Method> {
        EstimatorKind::RIDGE_FAMILY.into_iter().map(Method::Shrinkage).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<EstimatorKind>()
            .map(Method::Shrinkage)
            .or_else(|_| s.parse::<PenaltyFamily>().map(Method::Penalized))
            .map_err(|_| Error::InvalidInput(format!("unknown estimator `{s}`")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub alpha: f64,
    pub folds: usize,
    pub omega_step: f64,
    pub hd: HdOptions,
    pub path: PathOptions,
    /// Rule for CV-tuned baselines; validation tuning always takes the
    /// validation minimum.
    pub lambda_rule: LambdaRule,
    /// Fixed `omega` instead of tuning it.
    pub omega: Option<f64>,
    /// Fixed scalar ridge `K = kI` instead of the Hoerl-Kennard rules.
    pub ridge: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            folds: 5,
            omega_step: 0.1,
            hd: HdOptions::default(),
            path: PathOptions::default(),
            lambda_rule: LambdaRule::Min,
            omega: None,
            ridge: None,
        }
    }
}

/// Tuning values and test decision behind a set of fits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningReport {
    pub high_dimensional: bool,
    #[serde(skip)]
    pub k: DVector<f64>,
    pub omega: f64,
    /// HD `d*`, or the Stein constant in the low-dimensional case.
    pub d: Option<f64>,
    pub statistic: f64,
    pub critical_value: f64,
    pub rejects: bool,
}

/// Coefficients of every requested method on the original scale of the
/// training data.
#[derive(Debug, Clone)]
pub struct MethodFits {
    pub methods: Vec<Method>,
    pub intercepts: Vec<f64>,
    pub slopes: Vec<DVector<f64>>,
    pub tuning: TuningReport,
}

impl MethodFits {
    pub fn get(&self, m: Method) -> Option<(f64, &DVector<f64>)> {
        self.methods.iter().position(|&x| x == m).map(|i| (self.intercepts[i], &self.slopes[i]))
    }
}

fn complement(p: usize, keep: &[usize]) -> Vec<usize> {
    (0..p).filter(|j| !keep.contains(j)).collect()
}

/// Fit every method on raw `train`, keeping the columns in `submodel` and
/// restricting the rest to zero. The low-dimensional family is used when
/// `p < n`, otherwise the high-dimensional one. Tuning uses `valid` when
/// given (low-dimensional only), `folds`-fold CV otherwise.
pub fn fit_methods(
    train_raw: &RegressionData,
    valid_raw: Option<&RegressionData>,
    submodel: &[usize],
    methods: &[Method],
    opts: &FitOptions,
    seed: u64,
) -> Result<MethodFits> {
    let p = train_raw.p();
    if submodel.iter().any(|&j| j >= p) {
        return Err(Error::InvalidInput("sub-model column out of range".into()));
    }
    let zero = complement(p, submodel);
    if zero.is_empty() {
        return Err(Error::InvalidInput("sub-model keeps every column; the restriction must drop at least one".into()));
    }
    let train = train_raw.prepare()?;
    let valid = valid_raw.map(|v| train.transform(v)).transpose()?;
    let omega_grid = unit_grid(opts.omega_step);
    let path = PathOptions { folds: opts.folds, seed, ..opts.path };
    let high = p >= train.n();

    let (betas, tuning) = if !high {
        let h = Restriction::zero_coefficients(p, &zero)?;
        let k = match opts.ridge {
            Some(k) => RidgeSpec::scalar(k, p)?,
            None => hoerl_kennard_from_lse(&train)?,
        };
        let fit = LdFit::new(&train, &k, &h, opts.alpha)?;
        let fold_ridge = if opts.ridge.is_some() { FoldRidge::Fixed(&k) } else { FoldRidge::Reselect };
        let omega = match (opts.omega, &valid) {
            (Some(w), _) => w,
            (None, Some(v)) => select_omega_validation(&fit.ridge, v, &omega_grid)?,
            (None, None) => select_omega_cv(&train, fold_ridge, &h, opts.folds, &omega_grid, seed)?,
        };
        let betas = methods
            .iter()
            .map(|&m| match m {
                Method::Shrinkage(kind) => Ok(fit.estimate(kind, omega)?.beta),
                Method::Penalized(f) => match &valid {
                    Some(v) => validation_tuned_baseline(&train, v, f, PilotRule::Lse, &path),
                    None => tuned_baseline(&train, f, PilotRule::Lse, opts.lambda_rule, &path),
                },
            })
            .collect::<Result<Vec<_>>>()?;
        let tuning = TuningReport {
            high_dimensional: false,
            k: k.k().clone(),
            omega,
            d: fit.d().ok(),
            statistic: fit.stat.value,
            critical_value: fit.stat.critical_value,
            rejects: !fit.stat.accepts(),
        };
        (betas, tuning)
    } else {
        let part = PartitionedData::from_data(&train, submodel)?;
        let k = match opts.ridge {
            Some(k) => RidgeSpec::scalar(k, p)?,
            None => hd_k_selection(&part, opts.folds, seed)?,
        };
        let fold_ridge = if opts.ridge.is_some() { FoldRidge::Fixed(&k) } else { FoldRidge::Reselect };
        let cv = HdFolds::new(&part, fold_ridge, opts.folds, seed, opts.hd)?;
        let d_star = cv.d_star(&default_d_grid())?;
        let omega = match opts.omega {
            Some(w) => w,
            None => cv.omega(&omega_grid)?,
        };
        let fit = HdFit::new(&part, &k, opts.alpha, opts.hd)?;
        let betas = methods
            .iter()
            .map(|&m| match m {
                Method::Shrinkage(EstimatorKind::Lse) => {
                    Err(Error::InvalidInput("least squares does not exist when p >= n".into()))
                }
                Method::Shrinkage(kind) => Ok(part.to_original_order(&fit.estimate(kind, omega, d_star)?.beta)),
                Method::Penalized(f) => {
                    tuned_baseline(&train, f, PilotRule::CvRidge { folds: opts.folds, seed }, opts.lambda_rule, &path)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let tuning = TuningReport {
            high_dimensional: true,
            k: part.to_original_order(k.k()),
            omega,
            d: Some(d_star),
            statistic: fit.stat.value,
            critical_value: fit.stat.z_critical,
            rejects: fit.stat.rejects(),
        };
        (betas, tuning)
    };

    let (intercepts, slopes) = betas.iter().map(|b| train.to_original_coefficients(b)).unzip();
    Ok(MethodFits { methods: methods.to_vec(), intercepts, slopes, tuning })
}

/// Test-set performance of one fit against reference coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// Mean of `(x_i (b - b_hat))^2` over test rows.
    pub mse_y: f64,
    /// `||b_hat - b||^2`.
    pub mse_beta: f64,
    /// Mean squared test prediction error.
    pub pe: f64,
}

pub fn evaluate(test: &RegressionData, reference: &DVector<f64>, intercept: f64, slopes: &DVector<f64>) -> Metrics {
    let diff = reference - slopes;
    let n = test.n() as f64;
    let mse_y = (test.x() * &diff).norm_squared() / n;
    let pe = (test.y() - test.x() * slopes).add_scalar(-intercept).norm_squared() / n;
    Metrics { mse_y, mse_beta: diff.norm_squared(), pe }
}
