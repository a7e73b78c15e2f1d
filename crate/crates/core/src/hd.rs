//! High-dimensional (`p > n`) regime: the partitioned model
//! `Y = X_A b_A + X_B b_B + e`, the normal-limit test of `b_B = 0`, the shrinkage
//! family driven by it, ridge selection and the norm bounds of GRR/RGRR.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cv::{fold_assignment, split_fold, FoldRidge};
use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::ld::{hoerl_kennard_k, K_MAX, K_MIN};
use crate::linalg::{numerical_rank, Restriction, RidgePolicy, RidgeSpec, SpdFactor};
use crate::ncf::normal_quantile;
use crate::shrinkage::{EstimatorKind, GFunction, RestrictedRidge, ShrinkageEstimate};

/// Divisor of the residual variance of the active-block fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaDivisor {
    /// `RSS_A / (n - (p - q))`.
    #[default]
    ResidualDf,
    /// `RSS_A / q`.
    PaperLiteral,
}

/// Estimator of the variance scale `tr(Sigma_{B|A}^2)` in the denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEstimator {
    /// `tr(G^2)` with `G = X~_B' X~_B / n`.
    PlugIn,
    /// `tr(G^2) - tr(G)^2 / (n - (p - q))`: the exact null variance of `T2`
    /// given `X` when `sigma^2` uses the residual-df divisor.
    #[default]
    DfCorrected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdOptions {
    pub sigma_divisor: SigmaDivisor,
    pub trace: TraceEstimator,
}

/// Design split into an active block `X_A` (first) and a candidate block `X_B`.
#[derive(Debug, Clone)]
pub struct PartitionedData {
    x_a: DMatrix<f64>,
    x_b: DMatrix<f64>,
    y: DVector<f64>,
    /// Original column index of each partition column, `A` then `B`.
    columns: Vec<usize>,
}

impl PartitionedData {
    pub fn new(x_a: DMatrix<f64>, x_b: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let columns = (0..x_a.ncols() + x_b.ncols()).collect();
        Self::with_columns(x_a, x_b, y, columns)
    }

    fn with_columns(x_a: DMatrix<f64>, x_b: DMatrix<f64>, y: DVector<f64>, columns: Vec<usize>) -> Result<Self> {
        let n = y.len();
        if x_a.nrows() != n || x_b.nrows() != n {
            return Err(Error::InvalidInput("blocks and response disagree on n".into()));
        }
        if x_a.ncols() == 0 || x_b.ncols() == 0 {
            return Err(Error::InvalidInput("both the active and the candidate block need at least one column".into()));
        }
        if x_a.ncols() >= n {
            return Err(Error::InvalidInput(format!(
                "active block needs p - q < n (p - q = {}, n = {n})",
                x_a.ncols()
            )));
        }
        if numerical_rank(&x_a) < x_a.ncols() {
            return Err(Error::RankDeficientActiveBlock);
        }
        Ok(Self { x_a, x_b, y, columns })
    }

    /// Split `data` so that `active` columns form `X_A`, in the given order,
    /// and the remaining columns form `X_B` in their original order.
    pub fn from_data(data: &RegressionData, active: &[usize]) -> Result<Self> {
        let p = data.p();
        let mut seen = vec![false; p];
        for &j in active {
            if j >= p || seen[j] {
                return Err(Error::InvalidInput(format!("bad active column index {j}")));
            }
            seen[j] = true;
        }
        let rest: Vec<usize> = (0..p).filter(|&j| !seen[j]).collect();
        let x_a = data.x().select_columns(active.iter());
        let x_b = data.x().select_columns(rest.iter());
        let columns = active.iter().chain(rest.iter()).copied().collect();
        Self::with_columns(x_a, x_b, data.y().clone(), columns)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x_a.ncols() + self.x_b.ncols()
    }

    pub fn q(&self) -> usize {
        self.x_b.ncols()
    }

    pub fn x_a(&self) -> &DMatrix<f64> {
        &self.x_a
    }

    pub fn x_b(&self) -> &DMatrix<f64> {
        &self.x_b
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// `[X_A, X_B]`.
    pub fn x(&self) -> DMatrix<f64> {
        let (n, pa) = self.x_a.shape();
        let mut x = DMatrix::zeros(n, self.p());
        x.columns_mut(0, pa).copy_from(&self.x_a);
        x.columns_mut(pa, self.q()).copy_from(&self.x_b);
        x
    }

    /// `H = [0, I_q]` in partition order.
    pub fn restriction(&self) -> Result<Restriction> {
        Restriction::trailing_block(self.p(), self.q())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Self::with_columns(
            self.x_a.select_rows(rows.iter()),
            self.x_b.select_rows(rows.iter()),
            y,
            self.columns.clone(),
        )
    }

    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::with_columns(self.x_a.clone(), self.x_b.clone(), y, self.columns.clone())
    }

    /// Reorder a partition-order coefficient vector to the original columns.
    pub fn to_original_order(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(beta.len());
        for (pos, &j) in self.columns.iter().enumerate() {
            out[j] = beta[pos];
        }
        out
    }

    /// Inverse of [`Self::to_original_order`].
    pub fn to_partition_order(&self, beta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(beta.len(), self.columns.iter().map(|&j| beta[j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HdTestStat {
    pub value: f64,
    pub t1: f64,
    pub t2: f64,
    pub sigma2_hat: f64,
    pub trace_term: f64,
    /// `z_{1 - alpha}`.
    pub z_critical: f64,
    pub alpha: f64,
}

impl HdTestStat {
    pub fn rejects(&self) -> bool {
        self.value > self.z_critical
    }
}

/// Residuals of the columns of `m` after projecting on `span(x_a)`.
fn annihilate(xa_factor: &SpdFactor, x_a: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    m - x_a * xa_factor.solve(&x_a.tr_mul(m))
}

/// The standardized statistic `T = T2 / sqrt(2 sigma^4 tr)` for `b_B = 0`.
pub fn hd_test_statistic(part: &PartitionedData, alpha: f64, opts: HdOptions) -> Result<HdTestStat> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = part.n();
    let nf = n as f64;
    let pa = part.x_a.ncols();
    let q = part.q();
    let fa = SpdFactor::new(&part.x_a.tr_mul(&part.x_a)).map_err(|_| Error::RankDeficientActiveBlock)?;
    let y_mat = DMatrix::from_column_slice(n, 1, part.y.as_slice());
    let y_t = annihilate(&fa, &part.x_a, &y_mat).column(0).into_owned();
    let xb_t = annihilate(&fa, &part.x_a, &part.x_b);

    let rss = y_t.norm_squared();
    let divisor = match opts.sigma_divisor {
        SigmaDivisor::ResidualDf => (n - pa) as f64,
        SigmaDivisor::PaperLiteral => q as f64,
    };
    let sigma2 = rss / divisor;
    if !(sigma2 > 0.0) {
        return Err(Error::DegenerateResidual);
    }

    let proj = xb_t.tr_mul(&y_t);
    let t1 = proj.norm_squared() / nf;
    let fro2 = xb_t.norm_squared();
    let t2 = t1 - sigma2 * fro2 / nf;

    // tr(G) and tr(G^2) through whichever Gram matrix is smaller
    let gram = if q <= n { xb_t.tr_mul(&xb_t) } else { &xb_t * xb_t.transpose() } / nf;
    let tr_g = fro2 / nf;
    let tr_g2 = gram.norm_squared();
    let trace_term = match opts.trace {
        TraceEstimator::PlugIn => tr_g2,
        TraceEstimator::DfCorrected => (tr_g2 - tr_g * tr_g / (n - pa) as f64).max(0.0),
    };
    // A vanishing trace means T2 carries no information (e.g. X_B = 0).
    let value = if trace_term <= 1e-12 * tr_g2 || tr_g2 == 0.0 {
        0.0
    } else {
        t2 / (2.0 * sigma2 * sigma2 * trace_term).sqrt()
    };
    Ok(HdTestStat {
        value,
        t1,
        t2,
        sigma2_hat: sigma2,
        trace_term,
        z_critical: normal_quantile(1.0 - alpha),
        alpha,
    })
}

/// Everything needed to produce any member of the high-dimensional family.
#[derive(Debug, Clone)]
pub struct HdFit {
    pub ridge: RestrictedRidge,
    pub stat: HdTestStat,
    pub k: RidgeSpec,
}

impl HdFit {
    pub fn new(part: &PartitionedData, k: &RidgeSpec, alpha: f64, opts: HdOptions) -> Result<Self> {
        let stat = hd_test_statistic(part, alpha, opts)?;
        let ridge = RestrictedRidge::fit(&part.x(), part.y(), k, &part.restriction()?)?;
        Ok(Self { ridge, stat, k: k.clone() })
    }

    pub fn estimate(&self, kind: EstimatorKind, omega: f64, d_star: f64) -> Result<ShrinkageEstimate> {
        if matches!(kind, EstimatorKind::Lse | EstimatorKind::Orr) {
            return Err(Error::InvalidInput(format!("{kind} is not part of the high-dimensional family")));
        }
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidInput(format!("omega must lie in [0, 1], got {omega}")));
        }
        if !(d_star >= 0.0) {
            return Err(Error::InvalidInput(format!("d* must be >= 0, got {d_star}")));
        }
        let g = GFunction::for_kind(kind, omega, self.stat.z_critical, d_star)?;
        let t = self.stat.value;
        if g.divides_by(t) && t.abs() < 1e-12 {
            return Err(Error::ZeroTestStat);
        }
        let gv = g.eval(t);
        let beta = match kind {
            EstimatorKind::Grr => self.ridge.grr.clone(),
            EstimatorKind::Rgrr => self.ridge.rgrr.clone(),
            _ => self.ridge.combine(gv),
        };
        Ok(ShrinkageEstimate {
            kind,
            beta,
            g_value: Some(gv),
            omega: matches!(kind, EstimatorKind::Ls | EstimatorKind::Spt).then_some(omega),
            d: kind.is_stein_type().then_some(d_star),
            statistic: (!matches!(kind, EstimatorKind::Grr | EstimatorKind::Rgrr | EstimatorKind::Ls))
                .then_some(t),
        })
    }

    /// GRR, RGRR and the six shrinkage members, in partition order.
    pub fn family(&self, omega: f64, d_star: f64) -> Result<Vec<ShrinkageEstimate>> {
        EstimatorKind::RIDGE_FAMILY.iter().map(|&k| self.estimate(k, omega, d_star)).collect()
    }
}

pub fn fit_hd_family(
    part: &PartitionedData,
    k: &RidgeSpec,
    alpha: f64,
    omega: f64,
    d_star: f64,
    opts: HdOptions,
) -> Result<Vec<ShrinkageEstimate>> {
    HdFit::new(part, k, alpha, opts)?.family(omega, d_star)
}

/// `{0, 0.1, ..., 3}`.
pub fn default_d_grid() -> Vec<f64> {
    (0..=30).map(|i| i as f64 / 10.0).collect()
}

fn sq_err(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (y - x * b).norm_squared()
}

/// Fold-wise fits shared by the `d*` and `omega` tuners.
pub struct HdFolds {
    fits: Vec<(HdFit, DMatrix<f64>, DVector<f64>)>,
}

impl HdFolds {
    pub fn new(part: &PartitionedData, ridge: FoldRidge, folds: usize, seed: u64, opts: HdOptions) -> Result<Self> {
        let labels = fold_assignment(part.n(), folds, seed)?;
        let x = part.x();
        let fits = (0..folds)
            .map(|f| {
                let (tr, te) = split_fold(&labels, f);
                let train = part.select_rows(&tr)?;
                // held-out rows can be fewer than the active block, so skip the partition checks
                let test_x = x.select_rows(te.iter());
                let test_y = DVector::from_iterator(te.len(), te.iter().map(|&i| part.y()[i]));
                let k = match ridge {
                    FoldRidge::Fixed(k) => k.clone(),
                    FoldRidge::Reselect => hd_k_selection(&train, folds.min(train.n()), seed)?,
                };
                let fit = HdFit::new(&train, &k, 0.05, opts)?;
                Ok((fit, test_x, test_y))
            })
            .collect::<Result<_>>()?;
        Ok(Self { fits })
    }

    /// `d*` minimizing the summed held-out error of HD-S; ties go to the
    /// smallest value. Folds whose statistic is zero contribute the GRR error.
    pub fn d_star(&self, grid: &[f64]) -> Result<f64> {
        if grid.is_empty() || grid.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::InvalidInput("d* grid must be nonempty and nonnegative".into()));
        }
        let errs: Vec<f64> = grid
            .iter()
            .map(|&d| {
                self.fits
                    .iter()
                    .map(|(fit, x, y)| {
                        let t = fit.stat.value;
                        let g = if t.abs() < 1e-12 { 0.0 } else { d / t };
                        sq_err(x, y, &fit.ridge.combine(g))
                    })
                    .sum()
            })
            .collect();
        Ok(pick_smallest_min(grid, &errs))
    }

    /// `omega` minimizing the summed held-out error of HD-LS.
    pub fn omega(&self, grid: &[f64]) -> Result<f64> {
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty omega grid".into()));
        }
        let errs: Vec<f64> = grid
            .iter()
            .map(|&w| self.fits.iter().map(|(fit, x, y)| sq_err(x, y, &fit.ridge.combine(w))).sum())
            .collect();
        Ok(pick_smallest_min(grid, &errs))
    }
}

fn pick_smallest_min(grid: &[f64], errs: &[f64]) -> f64 {
    let best = errs.iter().cloned().fold(f64::INFINITY, f64::min);
    grid.iter()
        .zip(errs)
        .filter(|(_, &e)| e == best)
        .map(|(&g, _)| g)
        .fold(f64::INFINITY, f64::min)
}

/// `d*` by `folds`-fold cross-validation of HD-S.
pub fn select_d_star(
    part: &PartitionedData,
    ridge: FoldRidge,
    folds: usize,
    grid: &[f64],
    seed: u64,
    opts: HdOptions,
) -> Result<f64> {
    if grid.len() == 1 && grid[0] >= 0.0 {
        return Ok(grid[0]);
    }
    HdFolds::new(part, ridge, folds, seed, opts)?.d_star(grid)
}

/// `omega` by `folds`-fold cross-validation of HD-LS.
pub fn select_omega_hd(
    part: &PartitionedData,
    ridge: FoldRidge,
    folds: usize,
    grid: &[f64],
    seed: u64,
    opts: HdOptions,
) -> Result<f64> {
    HdFolds::new(part, ridge, folds, seed, opts)?.omega(grid)
}

/// Ridge solutions for many scalar `k` from one thin SVD of `x`.
pub struct RidgeSvd {
    v: DMatrix<f64>,
    s: DVector<f64>,
    uty: DVector<f64>,
}

impl RidgeSvd {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let svd = x.clone().try_svd(true, true, 1e-14, 10_000).ok_or_else(|| {
            Error::NumericalBreakdown("SVD did not converge".into())
        })?;
        let u = svd.u.unwrap();
        let v = svd.v_t.unwrap().transpose();
        Ok(Self { v, s: svd.singular_values, uty: u.tr_mul(y) })
    }

    pub fn beta(&self, k: f64) -> DVector<f64> {
        let w = DVector::from_iterator(self.s.len(), (0..self.s.len()).map(|i| {
            let s = self.s[i];
            s / (s * s + k) * self.uty[i]
        }));
        &self.v * w
    }

    /// Effective degrees of freedom `tr(X (X'X + kI)^{-1} X')`.
    pub fn df(&self, k: f64) -> f64 {
        self.s.iter().map(|&s| s * s / (s * s + k)).sum()
    }
}

/// Scalar ridge grid `n * 10^e`, `e` from -4 to 2.
pub fn default_scalar_k_grid(n: usize) -> Vec<f64> {
    (0..=30).map(|i| n as f64 * 10f64.powf(-4.0 + 0.2 * i as f64)).collect()
}

/// Scalar `k` from the grid minimizing `folds`-fold prediction error; ties go
/// to the largest `k`.
pub fn cv_scalar_ridge(x: &DMatrix<f64>, y: &DVector<f64>, folds: usize, grid: &[f64], seed: u64) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty ridge grid".into()));
    }
    let n = x.nrows();
    let labels = fold_assignment(n, folds, seed)?;
    let mut errs = vec![0.0; grid.len()];
    for f in 0..folds {
        let (tr, te) = split_fold(&labels, f);
        let xt = x.select_rows(tr.iter());
        let yt = DVector::from_iterator(tr.len(), tr.iter().map(|&i| y[i]));
        let xv = x.select_rows(te.iter());
        let yv = DVector::from_iterator(te.len(), te.iter().map(|&i| y[i]));
        let svd = RidgeSvd::new(&xt, &yt)?;
        for (e, &k) in errs.iter_mut().zip(grid) {
            *e += sq_err(&xv, &yv, &svd.beta(k));
        }
    }
    let best = errs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(grid.iter().zip(&errs).filter(|(_, &e)| e == best).map(|(&k, _)| k).fold(0.0, f64::max))
}

/// Two-stage ridge selection: a cross-validated scalar ridge pilot, then
/// `k_j = sigma2 / b_j^2` with `sigma2 = RSS / (n - df)` of the pilot.
pub fn hd_k_selection(part: &PartitionedData, folds: usize, seed: u64) -> Result<RidgeSpec> {
    let x = part.x();
    let k0 = cv_scalar_ridge(&x, part.y(), folds, &default_scalar_k_grid(part.n()), seed)?;
    let svd = RidgeSvd::new(&x, part.y())?;
    let pilot = svd.beta(k0);
    let resid_df = (part.n() as f64 - svd.df(k0)).max(1.0);
    let sigma2 = (part.y() - &x * &pilot).norm_squared() / resid_df;
    let spec = hoerl_kennard_k(&pilot, sigma2)?;
    RidgeSpec::new(spec.k().map(|v| v.clamp(K_MIN, K_MAX)), RidgePolicy::HoerlKennard)
}

/// Slack in the two norm bounds of GRR and RGRR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub grr_norm2: f64,
    /// `Y'Y / k_(1)`.
    pub grr_bound: f64,
    /// `||b_RGRR||^2 / ||b_GRR||^2`, zero when GRR vanishes.
    pub ratio: f64,
    /// Largest squared singular value of `M_K`.
    pub ratio_bound: f64,
}

impl BoundReport {
    pub fn grr_slack(&self) -> f64 {
        self.grr_bound - self.grr_norm2
    }

    pub fn ratio_slack(&self) -> f64 {
        self.ratio_bound - self.ratio
    }
}

/// Check `||b_GRR||^2 <= Y'Y / k_(1)` and
/// `||b_RGRR||^2 / ||b_GRR||^2 <= sigma_max(M_K)^2`. `M_K` is an oblique
/// projector, so the operator norm (not its largest eigenvalue, which is 1)
/// is the quantity that bounds the ratio.
pub fn bound_diagnostics(
    grr: &DVector<f64>,
    rgrr: &DVector<f64>,
    k: &RidgeSpec,
    y: &DVector<f64>,
    m_k: &DMatrix<f64>,
) -> Result<BoundReport> {
    let grr_norm2 = grr.norm_squared();
    let grr_bound = y.norm_squared() / k.min();
    let ratio = if grr_norm2 > 0.0 { rgrr.norm_squared() / grr_norm2 } else { 0.0 };
    let smax = m_k.singular_values().max();
    let report = BoundReport { grr_norm2, grr_bound, ratio, ratio_bound: smax * smax };
    let tol = 1e-9;
    if report.grr_slack() < -tol * grr_bound.max(1e-300) {
        return Err(Error::BoundViolation(format!("||b_GRR||^2 = {grr_norm2:e} exceeds Y'Y/k_min = {grr_bound:e}")));
    }
    if report.ratio_slack() < -tol * report.ratio_bound {
        return Err(Error::BoundViolation(format!(
            "norm ratio {ratio:e} exceeds sigma_max(M_K)^2 = {:e}",
            report.ratio_bound
        )));
    }
    Ok(report)
}

/// Per-coordinate Monte Carlo summary of a limiting law
/// `[I - (I - M_K) g(Z)] S_K^{-1} S b` with `Z ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSummary {
    pub kind: EstimatorKind,
    pub mean: DVector<f64>,
    pub std_error: DVector<f64>,
    pub mean_g: f64,
}

/// Limiting laws of the HD family. The statistic's limit `Z` replaces `T`;
/// the acceptance event is `Z <= z_{1-alpha}` as in the finite-sample
/// estimators, and `d` plays the role of `d*`.
#[allow(clippy::too_many_arguments)]
pub fn hd_limit_sample(
    k: &RidgeSpec,
    m_k: &DMatrix<f64>,
    s: &DMatrix<f64>,
    beta: &DVector<f64>,
    alpha: f64,
    omega: f64,
    d: f64,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<LimitSummary>> {
    let p = beta.len();
    if s.shape() != (p, p) || m_k.shape() != (p, p) || k.len() != p {
        return Err(Error::InvalidInput("dimension mismatch in limit sampler".into()));
    }
    if n_draws < 2 {
        return Err(Error::InvalidInput("need at least two draws".into()));
    }
    let mut sk = s.clone();
    for j in 0..p {
        sk[(j, j)] += k.k()[j];
    }
    let center = SpdFactor::new(&sk)?.solve_vec(&(s * beta));
    let pull = (DMatrix::identity(p, p) - m_k) * &center;
    let z_crit = normal_quantile(1.0 - alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zs: Vec<f64> = (0..n_draws).map(|_| StandardNormal.sample(&mut rng)).collect();
    EstimatorKind::RIDGE_FAMILY
        .iter()
        .map(|&kind| {
            let g = GFunction::for_kind(kind, omega, z_crit, d)?;
            let vals: Vec<f64> = zs.iter().map(|&z| g.eval(z)).collect();
            let nf = n_draws as f64;
            let mean_g = vals.iter().sum::<f64>() / nf;
            let var = vals.iter().map(|v| (v - mean_g).powi(2)).sum::<f64>() / (nf - 1.0);
            Ok(LimitSummary {
                kind,
                mean: &center - &pull * mean_g,
                std_error: pull.abs() * (var / nf).sqrt(),
                mean_g,
            })
        })
        .collect()
}
