//! Exact finite-sample bias and weighted quadratic risk of the eight
//! ridge-family estimators under Gaussian errors.
//!
//! With `L` the least squares estimate, every family member is
//! `A L - P L g(W)` where `A = S_K^{-1} S` and `P = (I - M_K) A`. Writing
//! `D = S^{-1} H' (H S^{-1} H')^{-1} H`, the component `D L` carries all of
//! the information in `W` and `(I - D) L` is independent of it, so the
//! moments of `L g(W)` reduce to expectations of `g` under three scaled
//! non-central F variables:
//!
//! * `h0 = E g(F_{q,m})`,
//! * `h2 = E g((q+2)/q F_{q+2,m})`,
//! * `h4 = E g((q+4)/q F_{q+4,m})`,
//!
//! all at non-centrality `Delta^2`. The `h0` terms drop out whenever
//! `P (I - D) = 0`, which is the case when `K = 0` or the restricted and
//! unrestricted blocks of `X` are orthogonal.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::ld::LdFit;
use crate::linalg::{Restriction, RidgeSpec, SpdFactor};
use crate::ncf::{
    f_critical_value, ncf_cdf, ncf_inv_moment, ncf_upper_inv_moment, NcfParams,
};
use crate::shrinkage::{restricted_projector, stein_constant, EstimatorKind};

/// Model, estimator settings and true parameters for exact risk evaluation.
#[derive(Debug, Clone)]
pub struct RiskContext {
    x: Option<DMatrix<f64>>,
    s: DMatrix<f64>,
    s_inv: DMatrix<f64>,
    k: RidgeSpec,
    h: Restriction,
    w: DMatrix<f64>,
    beta: DVector<f64>,
    sigma2: f64,
    m: usize,
    alpha: f64,
    omega: f64,
    a: DMatrix<f64>,
    m_k: DMatrix<f64>,
    p_mat: DMatrix<f64>,
    d_mat: DMatrix<f64>,
}

impl RiskContext {
    /// `m` is the residual degrees of freedom of the variance estimate.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s: DMatrix<f64>,
        k: RidgeSpec,
        h: Restriction,
        w: DMatrix<f64>,
        beta: DVector<f64>,
        sigma2: f64,
        m: usize,
        alpha: f64,
        omega: f64,
    ) -> Result<Self> {
        let p = s.nrows();
        if s.shape() != (p, p) || k.len() != p || h.p() != p || w.shape() != (p, p) || beta.len() != p {
            return Err(Error::InvalidInput("risk context dimensions disagree".into()));
        }
        if !(sigma2 > 0.0) || m == 0 {
            return Err(Error::InvalidInput("need sigma^2 > 0 and m >= 1".into()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) || !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidInput("need alpha in (0, 1] and omega in [0, 1]".into()));
        }
        if (&w - w.transpose()).norm() > 1e-12 * w.norm() || w.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("W must be symmetric positive definite".into()));
        }
        let sf = SpdFactor::new(&s).map_err(|_| Error::RankDeficient)?;
        let s_inv = sf.inverse();
        let mut sk = s.clone();
        for j in 0..p {
            sk[(j, j)] += k.k()[j];
        }
        let skf = SpdFactor::new(&sk)?;
        let a = skf.solve(&s);
        let m_k = restricted_projector(&skf, h.h())?;
        let p_mat = (DMatrix::identity(p, p) - &m_k) * &a;
        // D = S^{-1} H' V^{-1} H, V = H S^{-1} H'
        let sih = &s_inv * h.h().transpose();
        let v = h.h() * &sih;
        let vf = SpdFactor::new(&v).map_err(|_| Error::SingularRestriction)?;
        let d_mat = &sih * vf.solve(h.h());
        Ok(Self { x: None, s, s_inv, k, h, w, beta, sigma2, m, alpha, omega, a, m_k, p_mat, d_mat })
    }

    /// Context for a fixed design `x`, with `m = n - p`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_design(
        x: &DMatrix<f64>,
        k: RidgeSpec,
        h: Restriction,
        w: DMatrix<f64>,
        beta: DVector<f64>,
        sigma2: f64,
        alpha: f64,
        omega: f64,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if p >= n {
            return Err(Error::InvalidInput("exact risks need p < n".into()));
        }
        let mut ctx = Self::new(x.tr_mul(x), k, h, w, beta, sigma2, n - p, alpha, omega)?;
        ctx.x = Some(x.clone());
        Ok(ctx)
    }

    pub fn p(&self) -> usize {
        self.s.nrows()
    }

    pub fn q(&self) -> usize {
        self.h.q()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn design(&self) -> Option<&DMatrix<f64>> {
        self.x.as_ref()
    }

    pub fn ridge(&self) -> &RidgeSpec {
        &self.k
    }

    pub fn restriction(&self) -> &Restriction {
        &self.h
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn m_k(&self) -> &DMatrix<f64> {
        &self.m_k
    }

    /// `(H b)' (H S^{-1} H')^{-1} (H b) / sigma^2`.
    pub fn delta2(&self) -> f64 {
        // b' S D b = (Hb)' V^{-1} (Hb)
        let db = &self.d_mat * &self.beta;
        (self.beta.dot(&(&self.s * db)) / self.sigma2).max(0.0)
    }

    /// Same context with the violating component `D b` of the true
    /// coefficients rescaled so that the non-centrality equals `delta2`.
    /// The component `(I - D) b`, invisible to the test, is kept.
    pub fn with_delta2(&self, delta2: f64) -> Result<Self> {
        if !(delta2 >= 0.0) {
            return Err(Error::InvalidInput("delta^2 must be >= 0".into()));
        }
        let p = self.p();
        let db = &self.d_mat * &self.beta;
        let rest = &self.beta - &db;
        let cur = self.delta2();
        let dir = if cur > 1e-300 {
            db / cur.sqrt()
        } else {
            // S^{-1} H' 1 lies in the range of D
            let u = &self.s_inv * self.h.h().transpose() * DVector::from_element(self.q(), 1.0);
            let norm2 = u.dot(&(&self.s * &u)) / self.sigma2;
            u / norm2.sqrt()
        };
        let mut out = self.clone();
        out.beta = rest + dir * delta2.sqrt();
        debug_assert_eq!(out.beta.len(), p);
        Ok(out)
    }

    pub fn with_beta(&self, beta: DVector<f64>) -> Result<Self> {
        if beta.len() != self.p() {
            return Err(Error::InvalidInput("beta has the wrong length".into()));
        }
        let mut out = self.clone();
        out.beta = beta;
        Ok(out)
    }

    pub fn with_weight(&self, w: DMatrix<f64>) -> Result<Self> {
        let mut out = Self::new(
            self.s.clone(),
            self.k.clone(),
            self.h.clone(),
            w,
            self.beta.clone(),
            self.sigma2,
            self.m,
            self.alpha,
            self.omega,
        )?;
        out.x = self.x.clone();
        Ok(out)
    }

    /// `F_{q,m}(alpha)`, the acceptance bound of the pretest.
    pub fn critical_value(&self) -> f64 {
        f_critical_value(self.q() as u32, self.m as u32, self.alpha)
    }

    /// Pretest bound on the `F_{q+2,m}` scale: `q F_{q,m}(alpha) / (q + 2)`.
    pub fn c_alpha(&self) -> f64 {
        let q = self.q() as f64;
        q * self.critical_value() / (q + 2.0)
    }

    pub fn d(&self) -> Result<f64> {
        stein_constant(self.q(), self.m)
    }

    /// Positive-part bound on the `F_{q+2,m}` scale: `q d / (q + 2)`.
    pub fn d1(&self) -> Result<f64> {
        let q = self.q() as f64;
        Ok(q * self.d()? / (q + 2.0))
    }

    /// `B = S S_K^{-1} W (I - M_K) S_K^{-1} S`.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        self.a.transpose() * &self.w * &self.p_mat
    }

    /// `C = S S_K^{-1} (I - M_K)' W (I - M_K) S_K^{-1} S`.
    pub fn c_matrix(&self) -> DMatrix<f64> {
        self.p_mat.transpose() * &self.w * &self.p_mat
    }

    /// `sigma^2 tr(S_K^{-1} S S_K^{-1} W) + b'(A - I)' W (A - I) b`.
    pub fn grr_risk(&self) -> f64 {
        let p = self.p();
        let var = (&self.a * &self.s_inv * self.a.transpose() * &self.w).trace() * self.sigma2;
        let bias = (&self.a - DMatrix::identity(p, p)) * &self.beta;
        var + bias.dot(&(&self.w * &bias))
    }
}

/// `E g` and `E g^2` under the three scaled F variables, indexed by the
/// numerator degrees of freedom `q`, `q + 2`, `q + 4`. An entry is infinite
/// when the expectation diverges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GMoments {
    pub g: [f64; 3],
    pub g2: [f64; 3],
}

impl GMoments {
    pub fn constant(c: f64) -> Self {
        Self { g: [c; 3], g2: [c * c; 3] }
    }

    /// Moments of the weight function of `kind` at the context's `Delta^2`.
    pub fn for_kind(ctx: &RiskContext, kind: EstimatorKind) -> Result<Self> {
        let q = ctx.q();
        if kind.is_stein_type() && q <= 2 {
            return Err(Error::SteinUndefined(q));
        }
        let delta2 = ctx.delta2();
        let qf = q as f64;
        let params = |j: usize| NcfParams::new((q + 2 * j) as u32, ctx.m as u32, delta2);
        let scale = |j: usize| (qf + 2.0 * j as f64) / qf;
        let finite = |r: Result<f64>| match r {
            Ok(v) => Ok(v),
            Err(Error::MomentUndefined { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        };
        let mut out = GMoments::constant(0.0);
        for j in 0..3 {
            let par = params(j)?;
            let c = scale(j);
            let (g, g2) = match kind {
                EstimatorKind::Grr => (0.0, 0.0),
                EstimatorKind::Rgrr => (1.0, 1.0),
                EstimatorKind::Ls => (ctx.omega, ctx.omega * ctx.omega),
                EstimatorKind::Pt | EstimatorKind::Spt => {
                    let w = if kind == EstimatorKind::Pt { 1.0 } else { ctx.omega };
                    let pr = ncf_cdf(&par, ctx.critical_value() / c);
                    (w * pr, w * w * pr)
                }
                EstimatorKind::S => {
                    let dc = ctx.d()? / c;
                    (dc * finite(ncf_inv_moment(&par, 1))?, dc * dc * finite(ncf_inv_moment(&par, 2))?)
                }
                EstimatorKind::Ps | EstimatorKind::Ipt => {
                    let d = ctx.d()?;
                    let t = if kind == EstimatorKind::Ps { d } else { ctx.critical_value() };
                    let tc = t / c;
                    let dc = d / c;
                    let pr = ncf_cdf(&par, tc);
                    let (u1, u2) = if tc > 0.0 {
                        (ncf_upper_inv_moment(&par, 1, tc)?, ncf_upper_inv_moment(&par, 2, tc)?)
                    } else {
                        (finite(ncf_inv_moment(&par, 1))?, finite(ncf_inv_moment(&par, 2))?)
                    };
                    (pr + dc * u1, pr + dc * dc * u2)
                }
                EstimatorKind::Lse | EstimatorKind::Orr => {
                    return Err(Error::InvalidInput(format!("{kind} has no shrinkage weight")));
                }
            };
            out.g[j] = g;
            out.g2[j] = g2;
        }
        Ok(out)
    }
}

/// `coef * h`, dropping terms whose coefficient vanishes so that a divergent
/// moment multiplying an exact zero does not poison the sum.
fn term(coef: f64, h: f64, scale: f64) -> f64 {
    if coef.abs() <= 1e-12 * scale {
        0.0
    } else {
        coef * h
    }
}

fn scale_of(ctx: &RiskContext) -> f64 {
    let b = &ctx.beta;
    ctx.grr_risk() + ctx.p_mat.norm().powi(2) * (b.norm_squared() + ctx.sigma2 * ctx.s_inv.trace()) * ctx.w.norm()
        + f64::MIN_POSITIVE
}

/// `E[L' Q L h(W)]` for the moment triple `h`.
fn quad_moment(ctx: &RiskContext, q: &DMatrix<f64>, h: &[f64; 3], scale: f64) -> f64 {
    let p = ctx.p();
    let db = &ctx.d_mat * &ctx.beta;
    let rb = &ctx.beta - &db;
    let sig_d = &ctx.d_mat * &ctx.s_inv;
    let sig_r = (DMatrix::identity(p, p) - &ctx.d_mat) * &ctx.s_inv;
    let qdb = q * &db;
    let c2 = ctx.sigma2 * (q * sig_d).trace() + db.dot(&(q * &rb)) + rb.dot(&qdb);
    let c4 = db.dot(&qdb);
    let c0 = rb.dot(&(q * &rb)) + ctx.sigma2 * (q * sig_r).trace();
    term(c2, h[1], scale) + term(c4, h[2], scale) + term(c0, h[0], scale)
}

/// `(S_K^{-1} S - I) b - P (D b h2 + (I - D) b h0)`.
pub fn general_shrinkage_bias(ctx: &RiskContext, mom: &GMoments) -> DVector<f64> {
    let p = ctx.p();
    let db = &ctx.d_mat * &ctx.beta;
    let rb = &ctx.beta - &db;
    let pdb = &ctx.p_mat * db;
    let prb = &ctx.p_mat * rb;
    let scale = ctx.p_mat.norm() * ctx.beta.norm() + f64::MIN_POSITIVE;
    let mut bias = (&ctx.a - DMatrix::identity(p, p)) * &ctx.beta - pdb * mom.g[1];
    if prb.norm() > 1e-12 * scale {
        bias -= prb * mom.g[0];
    }
    bias
}

/// Weighted quadratic risk `E (b* - b)' W (b* - b)` of the family member
/// whose weight function has moments `mom`.
pub fn general_shrinkage_risk(ctx: &RiskContext, mom: &GMoments) -> Result<f64> {
    let scale = scale_of(ctx);
    let b = ctx.b_matrix();
    let c = ctx.c_matrix();
    let db = &ctx.d_mat * &ctx.beta;
    let rb = &ctx.beta - &db;
    let wpb = ctx.p_mat.transpose() * (&ctx.w * &ctx.beta);
    let cross = term(wpb.dot(&db), mom.g[1], scale) + term(wpb.dot(&rb), mom.g[0], scale);
    let risk = ctx.grr_risk() - 2.0 * (quad_moment(ctx, &b, &mom.g, scale) - cross)
        + quad_moment(ctx, &c, &mom.g2, scale);
    if risk.is_nan() {
        return Err(Error::NumericalBreakdown("risk evaluated to NaN".into()));
    }
    // rounding can leave a tiny negative value for near-degenerate inputs
    Ok(risk.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRisk {
    pub kind: EstimatorKind,
    pub bias: DVector<f64>,
    pub risk: f64,
}

pub fn estimator_bias_risk(ctx: &RiskContext, kind: EstimatorKind) -> Result<EstimatorRisk> {
    let mom = GMoments::for_kind(ctx, kind)?;
    Ok(EstimatorRisk {
        kind,
        bias: general_shrinkage_bias(ctx, &mom),
        risk: general_shrinkage_risk(ctx, &mom)?,
    })
}

/// Bias and risk of several estimators plus the matrices `B` and `C`.
#[derive(Debug, Clone)]
pub struct BiasRiskReport {
    pub delta2: f64,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub entries: Vec<EstimatorRisk>,
}

pub fn bias_risk_report(ctx: &RiskContext, kinds: &[EstimatorKind]) -> Result<BiasRiskReport> {
    Ok(BiasRiskReport {
        delta2: ctx.delta2(),
        b: ctx.b_matrix(),
        c: ctx.c_matrix(),
        entries: kinds.iter().map(|&k| estimator_bias_risk(ctx, k)).collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskCurveRow {
    pub delta2: f64,
    pub kind: EstimatorKind,
    pub risk: f64,
    pub bias_norm: f64,
}

/// Risk and bias norm of each kind along an ascending `Delta^2` grid.
pub fn risk_curve(ctx: &RiskContext, kinds: &[EstimatorKind], delta2_grid: &[f64]) -> Result<Vec<RiskCurveRow>> {
    if delta2_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("delta^2 grid must be ascending".into()));
    }
    let per_point: Vec<Vec<RiskCurveRow>> = delta2_grid
        .par_iter()
        .map(|&d2| {
            let c = ctx.with_delta2(d2)?;
            kinds
                .iter()
                .map(|&kind| {
                    let r = estimator_bias_risk(&c, kind)?;
                    Ok(RiskCurveRow { delta2: d2, kind, risk: r.risk, bias_norm: r.bias.norm() })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

pub fn write_risk_curve_csv<W: Write>(rows: &[RiskCurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// Monte Carlo estimate of an estimator's bias vector and risk.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRisk {
    pub kind: EstimatorKind,
    pub mean_error: DVector<f64>,
    pub error_se: DVector<f64>,
    pub risk: f64,
    pub risk_se: f64,
}

const SIM_CHUNK: usize = 2048;

/// Simulate `Y = X b + sigma e` on the context's fixed design and fit the
/// actual estimators, returning mean error vectors and risks with standard
/// errors. Deterministic in `seed` regardless of thread count.
pub fn simulate_bias_risk(
    ctx: &RiskContext,
    kinds: &[EstimatorKind],
    reps: usize,
    seed: u64,
) -> Result<Vec<SimulatedRisk>> {
    let x = ctx.x.as_ref().ok_or_else(|| Error::InvalidInput("context has no design matrix".into()))?;
    if reps < 2 {
        return Err(Error::InvalidInput("need at least two replicates".into()));
    }
    let (n, p) = x.shape();
    let nk = kinds.len();
    let mean_y = x * &ctx.beta;
    let sigma = ctx.sigma2.sqrt();
    let chunks = reps.div_ceil(SIM_CHUNK);
    type Acc = Vec<(DVector<f64>, DVector<f64>, f64, f64)>;
    let partial: Vec<Acc> = (0..chunks)
        .into_par_iter()
        .map(|ci| -> Result<Acc> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ci as u64);
            let mut acc: Acc = vec![(DVector::zeros(p), DVector::zeros(p), 0.0, 0.0); nk];
            let len = SIM_CHUNK.min(reps - ci * SIM_CHUNK);
            for _ in 0..len {
                let y = DVector::from_fn(n, |i, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean_y[i] + sigma * z
                });
                let data = RegressionData::new(x.clone(), y)?;
                let fit = LdFit::new(&data, &ctx.k, &ctx.h, ctx.alpha)?;
                for (a, &kind) in acc.iter_mut().zip(kinds) {
                    let e = fit.estimate(kind, ctx.omega)?.beta - &ctx.beta;
                    let loss = e.dot(&(&ctx.w * &e));
                    a.1 += e.component_mul(&e);
                    a.0 += e;
                    a.2 += loss;
                    a.3 += loss * loss;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let r = reps as f64;
    Ok(kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let mut s = DVector::zeros(p);
            let mut ss = DVector::zeros(p);
            let (mut l, mut ll) = (0.0, 0.0);
            for c in &partial {
                s += &c[i].0;
                ss += &c[i].1;
                l += c[i].2;
                ll += c[i].3;
            }
            let mean = &s / r;
            let var = (ss / r - mean.component_mul(&mean)).map(|v| v.max(0.0) * r / (r - 1.0));
            let risk = l / r;
            let rvar = ((ll / r - risk * risk) * r / (r - 1.0)).max(0.0);
            SimulatedRisk {
                kind,
                error_se: (var / r).map(f64::sqrt),
                mean_error: mean,
                risk,
                risk_se: (rvar / r).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncf::ncf_pdf;
    use crate::quad::adaptive_simpson;
    use crate::shrinkage::GFunction;

    fn design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(&mut rng) })
    }

    fn ctx(q: usize, kvals: &[f64], seed: u64) -> RiskContext {
        let p = kvals.len();
        let x = design(30, p, seed);
        let beta = DVector::from_fn(p, |j, _| if j < p - q { 1.0 - 0.3 * j as f64 } else { 0.0 });
        RiskContext::from_design(
            &x,
            RidgeSpec::fixed(DVector::from_column_slice(kvals)).unwrap(),
            Restriction::trailing_block(p, q).unwrap(),
            DMatrix::identity(p, p),
            beta,
            1.0,
            0.05,
            0.4,
        )
        .unwrap()
    }

    /// `E g(c F)` by quadrature of the density on `x = u/(1-u)`.
    fn moment_by_quadrature(par: &NcfParams, c: f64, g: &dyn Fn(f64) -> f64, breaks: &[f64]) -> f64 {
        let f = |u: f64| {
            if u <= 0.0 || u >= 1.0 {
                return 0.0;
            }
            let x = u / (1.0 - u);
            g(c * x) * ncf_pdf(par, x) / (1.0 - u).powi(2)
        };
        let mut pts = vec![0.0];
        for &b in breaks {
            let u = b / c / (1.0 + b / c);
            if u > 0.0 && u < 1.0 {
                pts.push(u);
            }
        }
        pts.push(1.0);
        pts.sort_by(f64::total_cmp);
        pts.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], 1e-11, 16)).sum()
    }

    #[test]
    fn g_moments_match_direct_quadrature() {
        let c = ctx(4, &[2.0, 3.0, 1.0, 4.0, 2.0, 5.0], 1).with_delta2(1.5).unwrap();
        let q = c.q();
        let d = c.d().unwrap();
        let t = c.critical_value();
        for kind in [EstimatorKind::Pt, EstimatorKind::Spt, EstimatorKind::Ps, EstimatorKind::Ipt, EstimatorKind::S] {
            let mom = GMoments::for_kind(&c, kind).unwrap();
            let g = GFunction::for_kind(kind, c.omega(), t, d).unwrap();
            for j in 0..3 {
                if kind == EstimatorKind::S && j == 0 {
                    continue;
                }
                let par = NcfParams::new((q + 2 * j) as u32, c.m() as u32, c.delta2()).unwrap();
                let sc = (q + 2 * j) as f64 / q as f64;
                let e1 = moment_by_quadrature(&par, sc, &|x| g.eval(x), &[d, t]);
                let e2 = moment_by_quadrature(&par, sc, &|x| g.eval(x).powi(2), &[d, t]);
                assert!((mom.g[j] - e1).abs() < 1e-6, "{kind} j={j}: {} vs {e1}", mom.g[j]);
                if !(kind == EstimatorKind::S && j < 2) {
                    assert!((mom.g2[j] - e2).abs() < 1e-6, "{kind} j={j}: {} vs {e2}", mom.g2[j]);
                }
            }
        }
    }

    #[test]
    fn stein_moments_use_the_inverse_mean() {
        // q = 4, m = 20, Delta^2 = 0: E[F^-1_{6,20}] = 6/4
        let s = DMatrix::identity(8, 8) * 5.0;
        let c = RiskContext::new(
            s,
            RidgeSpec::scalar(1.0, 8).unwrap(),
            Restriction::trailing_block(8, 4).unwrap(),
            DMatrix::identity(8, 8),
            DVector::from_fn(8, |j, _| if j < 4 { 1.0 } else { 0.0 }),
            1.0,
            20,
            0.05,
            0.5,
        )
        .unwrap();
        assert_eq!(c.delta2(), 0.0);
        let mom = GMoments::for_kind(&c, EstimatorKind::S).unwrap();
        let d = c.d().unwrap();
        assert!((mom.g[1] - d * 4.0 / 6.0 * 1.5).abs() < 1e-10);
        assert_eq!(mom.g2[0], f64::INFINITY);
    }

    #[test]
    fn grr_and_rgrr_bias_match_closed_forms() {
        let c = ctx(3, &[2.0, 3.0, 1.0, 4.0, 2.0, 5.0], 2).with_delta2(2.0).unwrap();
        let p = c.p();
        let grr = estimator_bias_risk(&c, EstimatorKind::Grr).unwrap();
        let want = (&c.a - DMatrix::identity(p, p)) * c.beta();
        assert!((grr.bias - want).norm() < 1e-12);
        let rgrr = estimator_bias_risk(&c, EstimatorKind::Rgrr).unwrap();
        let want = (c.m_k() * &c.a - DMatrix::identity(p, p)) * c.beta();
        assert!((rgrr.bias - want).norm() < 1e-12);
        let same = general_shrinkage_risk(&c, &GMoments::constant(0.0)).unwrap();
        assert_eq!(grr.risk.to_bits(), same.to_bits());
        assert_eq!(grr.risk.to_bits(), c.grr_risk().to_bits());
    }

    #[test]
    fn unbiased_and_classical_without_ridge() {
        let x = design(30, 5, 3);
        let c = RiskContext::from_design(
            &x,
            RidgeSpec::scalar(1e-13, 5).unwrap(),
            Restriction::trailing_block(5, 2).unwrap(),
            DMatrix::identity(5, 5),
            DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5, 0.3]),
            2.0,
            0.05,
            0.5,
        )
        .unwrap();
        let r = estimator_bias_risk(&c, EstimatorKind::Grr).unwrap();
        assert!(r.bias.norm() < 1e-10);
        let classical = 2.0 * (x.tr_mul(&x)).try_inverse().unwrap().trace();
        assert!((r.risk - classical).abs() < 1e-9 * classical);
    }

    #[test]
    fn pretest_with_unit_level_is_grr() {
        let c = ctx(3, &[2.0, 3.0, 1.0, 4.0, 2.0, 5.0], 4);
        let c = RiskContext::new(
            c.s.clone(), c.k.clone(), c.h.clone(), c.w.clone(), c.beta.clone(), 1.0, c.m, 1.0, 0.5,
        )
        .unwrap();
        let pt = estimator_bias_risk(&c, EstimatorKind::Pt).unwrap();
        assert!((pt.risk - c.grr_risk()).abs() < 1e-12);
    }

    #[test]
    fn risk_is_linear_in_w() {
        let c = ctx(5, &[2.0, 3.0, 1.0, 4.0, 2.0, 5.0, 1.0, 2.0], 5).with_delta2(1.0).unwrap();
        let c2 = c.with_weight(c.weight() * 2.0).unwrap();
        for kind in EstimatorKind::RIDGE_FAMILY {
            let a = estimator_bias_risk(&c, kind).unwrap().risk;
            let b = estimator_bias_risk(&c2, kind).unwrap().risk;
            assert!((b - 2.0 * a).abs() < 1e-10 * a.max(1.0), "{kind}");
        }
    }

    #[test]
    fn with_delta2_hits_target_and_keeps_invisible_part() {
        let c = ctx(3, &[2.0, 3.0, 1.0, 4.0, 2.0, 5.0], 6);
        assert!(c.delta2() < 1e-20);
        for t in [0.0, 0.5, 4.0] {
            let c2 = c.with_delta2(t).unwrap();
            assert!((c2.delta2() - t).abs() < 1e-10);
            let keep = |cc: &RiskContext| cc.beta() - &cc.d_mat * cc.beta();
            assert!((keep(&c2) - keep(&c)).norm() < 1e-12);
        }
    }

    #[test]
    fn curve_properties() {
        let c = ctx(4, &[2.0, 3.0, 1.0, 4.0, 2.0, 5.0, 3.0], 7);
        let grid = [0.0, 1.0, 4.0];
        let rows = risk_curve(&c, &[EstimatorKind::Grr, EstimatorKind::Rgrr], &grid).unwrap();
        let grr: Vec<f64> = rows.iter().filter(|r| r.kind == EstimatorKind::Grr).map(|r| r.risk).collect();
        for (r, &d2) in grr.iter().zip(&grid) {
            assert_eq!(r.to_bits(), c.with_delta2(d2).unwrap().grr_risk().to_bits());
        }
        let rg: Vec<f64> = rows.iter().filter(|r| r.kind == EstimatorKind::Rgrr).map(|r| r.risk).collect();
        assert!(rg[0] < rg[1] && rg[1] < rg[2]);
        assert!(rg[0] <= grr[0]);
        assert!(risk_curve(&c, &[EstimatorKind::Grr], &[1.0, 0.0]).is_err());
        let mut buf = Vec::new();
        write_risk_curve_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("delta2,kind,risk,bias_norm\n0.0,GRR,"));
    }

    #[test]
    fn grr_curve_is_flat_when_ridge_spares_the_tested_block() {
        // orthogonal blocks and K ~ 0 on the restricted block: GRR bias -S_K^{-1} K b
        // does not see the component of b that moves with Delta^2
        let mut x = design(30, 6, 12);
        let xa = x.columns(0, 3).into_owned();
        let proj = &xa * (xa.tr_mul(&xa)).try_inverse().unwrap() * xa.transpose();
        let xb = x.columns(3, 3).into_owned();
        x.columns_mut(3, 3).copy_from(&(&xb - &proj * &xb));
        let c = RiskContext::from_design(
            &x,
            RidgeSpec::fixed(DVector::from_vec(vec![2.0, 4.0, 6.0, 1e-15, 1e-15, 1e-15])).unwrap(),
            Restriction::trailing_block(6, 3).unwrap(),
            DMatrix::identity(6, 6),
            DVector::from_vec(vec![1.0, -0.5, 0.8, 0.0, 0.0, 0.0]),
            1.0,
            0.05,
            0.4,
        )
        .unwrap();
        let rows = risk_curve(&c, &[EstimatorKind::Grr], &[0.0, 1.0, 4.0, 16.0]).unwrap();
        assert!(rows.iter().all(|r| (r.risk - rows[0].risk).abs() < 1e-12));
    }

    #[test]
    fn positive_part_beats_stein_at_the_null() {
        let c = ctx(5, &[2.0, 3.0, 1.0, 4.0, 2.0, 5.0, 1.0, 2.0], 13);
        let s = estimator_bias_risk(&c, EstimatorKind::S).unwrap().risk;
        let ps = estimator_bias_risk(&c, EstimatorKind::Ps).unwrap().risk;
        assert!(s.is_finite() && ps <= s);
        // generic design with q = 3 needs E[F^-2_{3,m}], which diverges
        let c3 = ctx(3, &[2.0, 3.0, 1.0, 4.0, 2.0, 5.0], 13);
        assert_eq!(estimator_bias_risk(&c3, EstimatorKind::S).unwrap().risk, f64::INFINITY);
        assert!(estimator_bias_risk(&c3, EstimatorKind::Ps).unwrap().risk.is_finite());
    }

    /// The printed risk display, with its trace terms read as
    /// `sigma^2 tr(B S^{-1})` and `sigma^2 tr(C S^{-1})`.
    fn printed_risk(c: &RiskContext, mom: &GMoments) -> f64 {
        let b = c.b_matrix();
        let cm = c.c_matrix();
        let beta = c.beta();
        let wpb = beta.dot(&(&c.w * &c.p_mat * beta));
        c.grr_risk() - 2.0 * c.sigma2 * (&b * &c.s_inv).trace() * mom.g[1] - 2.0 * beta.dot(&(&b * beta)) * mom.g[2]
            + 2.0 * wpb * mom.g[1]
            + c.sigma2 * (&cm * &c.s_inv).trace() * mom.g2[1]
            + beta.dot(&(&cm * beta)) * mom.g2[2]
    }

    #[test]
    fn exact_risk_reduces_to_printed_form_for_orthogonal_blocks() {
        let mut x = design(30, 6, 8);
        let xa = x.columns(0, 3).into_owned();
        let proj = &xa * (xa.tr_mul(&xa)).try_inverse().unwrap() * xa.transpose();
        let xb = x.columns(3, 3).into_owned();
        x.columns_mut(3, 3).copy_from(&(&xb - &proj * &xb));
        let c = RiskContext::from_design(
            &x,
            RidgeSpec::fixed(DVector::from_vec(vec![2.0, 4.0, 6.0, 3.0, 5.0, 8.0])).unwrap(),
            Restriction::trailing_block(6, 3).unwrap(),
            DMatrix::identity(6, 6),
            DVector::from_vec(vec![1.0, -0.5, 0.8, 0.0, 0.0, 0.0]),
            1.0,
            0.05,
            0.4,
        )
        .unwrap()
        .with_delta2(2.0)
        .unwrap();
        for kind in EstimatorKind::RIDGE_FAMILY {
            let mom = GMoments::for_kind(&c, kind).unwrap();
            let exact = general_shrinkage_risk(&c, &mom).unwrap();
            assert!(exact.is_finite(), "{kind}");
            let printed = printed_risk(&c, &mom);
            assert!((exact - printed).abs() < 1e-9 * exact, "{kind}: {exact} vs {printed}");
        }
    }

    #[test]
    fn formulas_match_simulation_on_generic_design() {
        let c = ctx(5, &[3.0, 6.0, 2.0, 8.0, 4.0, 5.0, 7.0, 3.0], 9).with_delta2(1.0).unwrap();
        let sims = simulate_bias_risk(&c, &EstimatorKind::RIDGE_FAMILY, 20_000, 11).unwrap();
        for s in sims {
            let th = estimator_bias_risk(&c, s.kind).unwrap();
            assert!((th.risk - s.risk).abs() <= 4.0 * s.risk_se, "{}: {} vs {} ± {}", s.kind, th.risk, s.risk, s.risk_se);
            for j in 0..c.p() {
                assert!(
                    (th.bias[j] - s.mean_error[j]).abs() <= 4.0 * s.error_se[j] + 1e-12,
                    "{} coord {j}",
                    s.kind
                );
            }
        }
    }
}
