//! Low-dimensional (`p < n`) estimators: LSE, ORR, GRR, RGRR and the six
//! shrinkage combinations driven by the F-type pretest statistic.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cv::{argmin, fold_assignment, split_fold, FoldRidge};
use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, solve_ridge_system, Restriction, RidgePolicy, RidgeSpec, SpdFactor};
use crate::ncf::f_critical_value;
use crate::shrinkage::{stein_constant, EstimatorKind, GFunction, RestrictedRidge, ShrinkageEstimate};

/// Clamp range for Hoerl-Kennard ridge parameters.
pub const K_MIN: f64 = 1e-8;
pub const K_MAX: f64 = 1e8;

/// Least squares fit together with its residual variance.
#[derive(Debug, Clone)]
pub struct LseFit {
    pub beta: DVector<f64>,
    pub rss: f64,
    /// `RSS / (n - p)`.
    pub sigma2: f64,
}

pub fn lse(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LseFit> {
    let (n, p) = x.shape();
    if p >= n {
        return Err(Error::InvalidInput(format!("least squares needs p < n (p = {p}, n = {n})")));
    }
    if numerical_rank(x) < p {
        return Err(Error::RankDeficient);
    }
    let f = SpdFactor::new(&x.tr_mul(x)).map_err(|_| Error::RankDeficient)?;
    let beta = f.solve_vec(&x.tr_mul(y));
    let rss = (y - x * &beta).norm_squared();
    Ok(LseFit { beta, rss, sigma2: rss / (n - p) as f64 })
}

pub fn fit_lse(data: &RegressionData) -> Result<ShrinkageEstimate> {
    Ok(ShrinkageEstimate::plain(EstimatorKind::Lse, lse(data.x(), data.y())?.beta))
}

/// Ordinary ridge, `(S + k I)^{-1} X'Y`.
pub fn fit_orr(data: &RegressionData, k: f64) -> Result<ShrinkageEstimate> {
    let spec = RidgeSpec::scalar(k, data.p())?;
    let sol = solve_ridge_system(data.x(), data.y(), &spec)?;
    Ok(ShrinkageEstimate::plain(EstimatorKind::Orr, sol.solution))
}

pub fn fit_grr(data: &RegressionData, k: &RidgeSpec) -> Result<ShrinkageEstimate> {
    let sol = solve_ridge_system(data.x(), data.y(), k)?;
    Ok(ShrinkageEstimate::plain(EstimatorKind::Grr, sol.solution))
}

/// `k_j = sigma2 / beta_j^2`, clamped to `[K_MIN, K_MAX]`. A zero variance
/// maps every entry to `K_MIN`; a zero pilot coordinate maps to `K_MAX`.
pub fn hoerl_kennard_k(pilot_beta: &DVector<f64>, pilot_sigma2: f64) -> Result<RidgeSpec> {
    if pilot_beta.is_empty() {
        return Err(Error::InvalidInput("empty pilot coefficient vector".into()));
    }
    let k = pilot_beta.map(|b| {
        if !(pilot_sigma2 > 0.0) {
            K_MIN
        } else if b == 0.0 {
            K_MAX
        } else {
            (pilot_sigma2 / (b * b)).clamp(K_MIN, K_MAX)
        }
    });
    RidgeSpec::new(k, RidgePolicy::HoerlKennard)
}

/// Hoerl-Kennard ridge from the least squares pilot.
pub fn hoerl_kennard_from_lse(data: &RegressionData) -> Result<RidgeSpec> {
    let fit = lse(data.x(), data.y())?;
    hoerl_kennard_k(&fit.beta, fit.sigma2)
}

/// Restricted GRR estimate together with the projector `M_K`.
#[derive(Debug, Clone)]
pub struct RgrrFit {
    pub estimate: ShrinkageEstimate,
    pub m_k: DMatrix<f64>,
}

pub fn fit_rgrr(data: &RegressionData, k: &RidgeSpec, h: &Restriction) -> Result<RgrrFit> {
    let rr = RestrictedRidge::fit(data.x(), data.y(), k, h)?;
    Ok(RgrrFit { estimate: ShrinkageEstimate::plain(EstimatorKind::Rgrr, rr.rgrr), m_k: rr.m_k })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PretestStat {
    pub value: f64,
    pub q: usize,
    /// Residual degrees of freedom `n - p`.
    pub m: usize,
    pub sigma2_hat: f64,
    /// Upper-`alpha` quantile of the central `F_{q,m}`.
    pub critical_value: f64,
    pub alpha: f64,
}

impl PretestStat {
    /// `W <= F_{q,m}(alpha)`: the restriction is not rejected.
    pub fn accepts(&self) -> bool {
        self.value <= self.critical_value
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// `W = (H b)' (H S^{-1} H')^{-1} (H b) / (q sigma2)` at the least squares fit `b`.
pub fn pretest_statistic(data: &RegressionData, h: &Restriction, alpha: f64) -> Result<PretestStat> {
    check_alpha(alpha)?;
    let fit = lse(data.x(), data.y())?;
    pretest_from_lse(data.x(), data.y(), &fit, h, alpha)
}

fn pretest_from_lse(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    fit: &LseFit,
    h: &Restriction,
    alpha: f64,
) -> Result<PretestStat> {
    if h.p() != x.ncols() {
        return Err(Error::InvalidInput("restriction and design disagree on p".into()));
    }
    if fit.rss <= 1e-20 * y.norm_squared() || fit.rss == 0.0 {
        return Err(Error::DegenerateResidual);
    }
    let (n, p) = x.shape();
    let m = n - p;
    let q = h.q();
    let s = SpdFactor::new(&x.tr_mul(x)).map_err(|_| Error::RankDeficient)?;
    let v = h.h() * s.solve(&h.h().transpose());
    let vf = SpdFactor::new(&v).map_err(|_| Error::SingularRestriction)?;
    let hb = h.h() * &fit.beta;
    let value = hb.dot(&vf.solve_vec(&hb)) / (q as f64 * fit.sigma2);
    Ok(PretestStat {
        value: value.max(0.0),
        q,
        m,
        sigma2_hat: fit.sigma2,
        critical_value: f_critical_value(q as u32, m as u32, alpha),
        alpha,
    })
}

/// Everything needed to produce any member of the low-dimensional family.
#[derive(Debug, Clone)]
pub struct LdFit {
    pub lse: DVector<f64>,
    pub ridge: RestrictedRidge,
    pub stat: PretestStat,
    pub k: RidgeSpec,
}

impl LdFit {
    pub fn new(data: &RegressionData, k: &RidgeSpec, h: &Restriction, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let fit = lse(data.x(), data.y())?;
        let stat = pretest_from_lse(data.x(), data.y(), &fit, h, alpha)?;
        let ridge = RestrictedRidge::fit(data.x(), data.y(), k, h)?;
        Ok(Self { lse: fit.beta, ridge, stat, k: k.clone() })
    }

    /// Stein constant for this fit's `(q, m)`.
    pub fn d(&self) -> Result<f64> {
        stein_constant(self.stat.q, self.stat.m)
    }

    pub fn g_function(&self, kind: EstimatorKind, omega: f64) -> Result<GFunction> {
        let d = if kind.is_stein_type() { self.d()? } else { 0.0 };
        GFunction::for_kind(kind, omega, self.stat.critical_value, d)
    }

    pub fn estimate(&self, kind: EstimatorKind, omega: f64) -> Result<ShrinkageEstimate> {
        match kind {
            EstimatorKind::Lse => return Ok(ShrinkageEstimate::plain(kind, self.lse.clone())),
            EstimatorKind::Orr => {
                return Err(Error::InvalidInput("ORR is fitted with fit_orr".into()));
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidInput(format!("omega must lie in [0, 1], got {omega}")));
        }
        let g = self.g_function(kind, omega)?;
        let w = self.stat.value;
        if g.divides_by(w) && w <= 0.0 {
            return Err(Error::ZeroTestStat);
        }
        let gv = g.eval(w);
        let uses_omega = matches!(kind, EstimatorKind::Ls | EstimatorKind::Spt);
        let uses_stat = !matches!(kind, EstimatorKind::Grr | EstimatorKind::Rgrr | EstimatorKind::Ls);
        let beta = match kind {
            EstimatorKind::Grr => self.ridge.grr.clone(),
            EstimatorKind::Rgrr => self.ridge.rgrr.clone(),
            _ => self.ridge.combine(gv),
        };
        Ok(ShrinkageEstimate {
            kind,
            beta,
            g_value: Some(gv),
            omega: uses_omega.then_some(omega),
            d: kind.is_stein_type().then(|| self.d().unwrap()),
            statistic: uses_stat.then_some(w),
        })
    }

    /// LS, PT, SPT, S, PS and IPT.
    pub fn family(&self, omega: f64) -> Result<Vec<ShrinkageEstimate>> {
        EstimatorKind::SHRINKAGE.iter().map(|&k| self.estimate(k, omega)).collect()
    }
}

/// The six shrinkage estimators at the given `K`, restriction, level and `omega`.
pub fn fit_shrinkage_family(
    data: &RegressionData,
    k: &RidgeSpec,
    h: &Restriction,
    alpha: f64,
    omega: f64,
) -> Result<Vec<ShrinkageEstimate>> {
    if h.q() <= 2 {
        return Err(Error::SteinUndefined(h.q()));
    }
    LdFit::new(data, k, h, alpha)?.family(omega)
}

fn prediction_error(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    (y - x * beta).norm_squared()
}

/// `omega` minimizing the prediction error of LS on a held-out set; ties go
/// to the smallest `omega`.
pub fn select_omega_validation(ridge: &RestrictedRidge, valid: &RegressionData, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty omega grid".into()));
    }
    let errs: Vec<f64> =
        grid.iter().map(|&w| prediction_error(valid.x(), valid.y(), &ridge.combine(w))).collect();
    Ok(grid[argmin(&errs)])
}

/// `omega` minimizing the `folds`-fold cross-validated prediction error of LS.
pub fn select_omega_cv(
    data: &RegressionData,
    ridge: FoldRidge,
    h: &Restriction,
    folds: usize,
    grid: &[f64],
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty omega grid".into()));
    }
    let labels = fold_assignment(data.n(), folds, seed)?;
    let mut errs = vec![0.0; grid.len()];
    for f in 0..folds {
        let (tr, te) = split_fold(&labels, f);
        let train = data.select_rows(&tr)?;
        let test = data.select_rows(&te)?;
        let rr = match ridge {
            FoldRidge::Fixed(k) => RestrictedRidge::fit(train.x(), train.y(), k, h)?,
            FoldRidge::Reselect => RestrictedRidge::fit(train.x(), train.y(), &hoerl_kennard_from_lse(&train)?, h)?,
        };
        for (e, &w) in errs.iter_mut().zip(grid) {
            *e += prediction_error(test.x(), test.y(), &rr.combine(w));
        }
    }
    Ok(grid[argmin(&errs)])
}
