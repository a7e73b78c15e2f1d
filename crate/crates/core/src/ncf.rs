//! Non-central F distribution engine.
//!
//! The non-central F variable with `(df1, df2)` degrees of freedom and
//! non-centrality `delta2` is `(chi2_{df1}(delta2) / df1) / (chi2_{df2} / df2)`,
//! where `chi2_k(delta2)` is a Poisson mixture of central chi-squares with
//! rate `delta2 / 2`. Every functional below is evaluated as a Poisson-weighted
//! series over central components, each of which has a closed form in terms
//! of the regularized incomplete beta function.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

pub const DEFAULT_CDF_EPS: f64 = 1e-8;
pub const DEFAULT_MOMENT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcfParams {
    pub df1: u32,
    pub df2: u32,
    /// Non-centrality `Delta^2`; the Poisson mixing rate is `Delta^2 / 2`.
    pub noncentrality: f64,
}

impl NcfParams {
    pub fn new(df1: u32, df2: u32, noncentrality: f64) -> Result<Self> {
        if df1 == 0 || df2 == 0 {
            return Err(Error::InvalidInput("degrees of freedom must be >= 1".into()));
        }
        if !(noncentrality >= 0.0) || !noncentrality.is_finite() {
            return Err(Error::InvalidInput(format!("non-centrality must be >= 0, got {noncentrality}")));
        }
        Ok(Self { df1, df2, noncentrality })
    }

    pub fn central(df1: u32, df2: u32) -> Result<Self> {
        Self::new(df1, df2, 0.0)
    }

    fn rate(&self) -> f64 {
        0.5 * self.noncentrality
    }

    /// Beta-scale image of an F value: `df1 c / (df1 c + df2)`.
    fn beta_point(&self, c: f64) -> f64 {
        let a = self.df1 as f64 * c;
        a / (a + self.df2 as f64)
    }
}

/// Order, optional truncation point and tolerance of a moment evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRequest {
    pub order: u32,
    pub truncation: Option<f64>,
    pub tolerance: f64,
}

impl MomentRequest {
    pub fn new(order: u32, truncation: Option<f64>, tolerance: f64) -> Result<Self> {
        if order > 2 {
            return Err(Error::InvalidInput(format!("moment order must be 0, 1 or 2, got {order}")));
        }
        if !(tolerance > 0.0 && tolerance <= 1e-3) {
            return Err(Error::InvalidInput("tolerance must lie in (0, 1e-3]".into()));
        }
        if let Some(c) = truncation {
            if !(c > 0.0) {
                return Err(Error::InvalidInput("truncation point must be > 0".into()));
            }
        }
        Ok(Self { order, truncation, tolerance })
    }

    /// `E[F^-r I(F <= c)]` if truncated, `E[F^-r]` otherwise.
    pub fn evaluate(&self, params: &NcfParams) -> Result<f64> {
        match self.truncation {
            Some(c) => truncated_inv_moment_eps(params, self.order, c, self.tolerance),
            None if self.order == 0 => Ok(1.0),
            None => inv_moment_eps(params, self.order, self.tolerance),
        }
    }
}

/// Sum `sum_j Pois(j; mu) term(j)`; stops once the accumulated Poisson mass
/// reaches `1 - eps/100` and the latest contribution is below `eps/1000`.
fn poisson_series(mu: f64, eps: f64, mut term: impl FnMut(u32) -> f64) -> f64 {
    if mu == 0.0 {
        return term(0);
    }
    let ln_mu = mu.ln();
    let jmax = (mu + 60.0 * mu.sqrt() + 600.0) as u32;
    let (mut cum, mut total) = (0.0, 0.0);
    for j in 0..=jmax {
        let w = (-mu + j as f64 * ln_mu - ln_gamma(j as f64 + 1.0)).exp();
        cum += w;
        if w < 1e-300 && cum < 0.5 {
            continue;
        }
        let contrib = w * term(j);
        total += contrib;
        if cum >= 1.0 - eps * 1e-2 && contrib.abs() < eps * 1e-3 {
            break;
        }
    }
    total
}

/// Central F cdf.
pub fn central_f_cdf(df1: u32, df2: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let b = df1 as f64 * x / (df1 as f64 * x + df2 as f64);
    beta_reg(0.5 * df1 as f64, 0.5 * df2 as f64, b)
}

/// Central F quantile `F^{-1}(prob)` by bisection on the beta scale.
pub fn central_f_quantile(df1: u32, df2: u32, prob: f64) -> f64 {
    if prob <= 0.0 {
        return 0.0;
    }
    if prob >= 1.0 {
        return f64::INFINITY;
    }
    let (a, b) = (0.5 * df1 as f64, 0.5 * df2 as f64);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bq = 0.5 * (lo + hi);
    df2 as f64 / df1 as f64 * bq / (1.0 - bq)
}

/// Upper-`alpha` critical value of the central `F_{df1, df2}`.
pub fn f_critical_value(df1: u32, df2: u32, alpha: f64) -> f64 {
    central_f_quantile(df1, df2, 1.0 - alpha)
}

/// Standard normal quantile.
pub fn normal_quantile(prob: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(prob.clamp(0.0, 1.0))
}

pub fn normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().cdf(x)
}

/// `G_{df1,df2}(c; Delta^2)` with the default tolerance.
pub fn ncf_cdf(params: &NcfParams, c: f64) -> f64 {
    ncf_cdf_eps(params, c, DEFAULT_CDF_EPS)
}

pub fn ncf_cdf_eps(params: &NcfParams, c: f64, eps: f64) -> f64 {
    if !(c > 0.0) {
        return 0.0;
    }
    if c.is_infinite() {
        return 1.0;
    }
    let x = params.beta_point(c);
    let b = 0.5 * params.df2 as f64;
    let a0 = 0.5 * params.df1 as f64;
    poisson_series(params.rate(), eps, |j| beta_reg(a0 + j as f64, b, x)).clamp(0.0, 1.0)
}

/// Quantile of the non-central F by bisection on [`ncf_cdf`].
pub fn ncf_quantile(params: &NcfParams, prob: f64) -> f64 {
    if prob <= 0.0 {
        return 0.0;
    }
    if prob >= 1.0 {
        return f64::INFINITY;
    }
    let mut hi = 1.0;
    while ncf_cdf(params, hi) < prob && hi < 1e300 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ncf_cdf(params, mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn check_order(params: &NcfParams, r: u32) -> Result<()> {
    if r > 0 && params.df1 <= 2 * r {
        return Err(Error::MomentUndefined { order: r, df1: params.df1 });
    }
    Ok(())
}

/// `E[F^{-r}]` with the default tolerance.
pub fn ncf_inv_moment(params: &NcfParams, r: u32) -> Result<f64> {
    inv_moment_eps(params, r, DEFAULT_MOMENT_EPS)
}

pub fn inv_moment_eps(params: &NcfParams, r: u32, eps: f64) -> Result<f64> {
    if r == 0 {
        return Ok(1.0);
    }
    check_order(params, r)?;
    let (d1, d2) = (params.df1 as f64, params.df2 as f64);
    let rf = r as f64;
    // E[(chi2_{df2})^r] = 2^r Gamma(df2/2 + r) / Gamma(df2/2)
    let num = (rf * 2f64.ln() + ln_gamma(0.5 * d2 + rf) - ln_gamma(0.5 * d2)).exp();
    // E[(chi2_a)^{-r}] = 2^{-r} Gamma(a/2 - r) / Gamma(a/2)
    let series = poisson_series(params.rate(), eps, |j| {
        let a = 0.5 * d1 + j as f64;
        (-rf * 2f64.ln() + ln_gamma(a - rf) - ln_gamma(a)).exp()
    });
    Ok((d1 / d2).powi(r as i32) * num * series)
}

/// `E[F^{-r} I(F <= c)]` with the default tolerance; `r = 0` is the cdf.
pub fn ncf_truncated_inv_moment(params: &NcfParams, r: u32, c: f64) -> Result<f64> {
    truncated_inv_moment_eps(params, r, c, DEFAULT_MOMENT_EPS)
}

pub fn truncated_inv_moment_eps(params: &NcfParams, r: u32, c: f64, eps: f64) -> Result<f64> {
    if r == 0 {
        return Ok(ncf_cdf_eps(params, c, eps.min(DEFAULT_CDF_EPS)));
    }
    check_order(params, r)?;
    if !(c > 0.0) {
        return Ok(0.0);
    }
    if c.is_infinite() {
        return inv_moment_eps(params, r, eps);
    }
    let (d1, d2) = (params.df1 as f64, params.df2 as f64);
    let rf = r as f64;
    let x = params.beta_point(c);
    let b = 0.5 * d2;
    let scale = (d1 / d2).powi(r as i32);
    let series = poisson_series(params.rate(), eps, |j| {
        let a = 0.5 * d1 + j as f64;
        (ln_beta(a - rf, b + rf) - ln_beta(a, b)).exp() * beta_reg(a - rf, b + rf, x)
    });
    Ok(scale * series)
}

/// `E[F^{-r} I(F > c)]`. Finite for every `c > 0` regardless of `df1`.
pub fn ncf_upper_inv_moment(params: &NcfParams, r: u32, c: f64) -> Result<f64> {
    upper_inv_moment_eps(params, r, c, DEFAULT_MOMENT_EPS)
}

pub fn upper_inv_moment_eps(params: &NcfParams, r: u32, c: f64, eps: f64) -> Result<f64> {
    if r == 0 {
        return Ok(1.0 - ncf_cdf_eps(params, c, eps.min(DEFAULT_CDF_EPS)));
    }
    if !(c > 0.0) {
        return inv_moment_eps(params, r, eps);
    }
    if c.is_infinite() {
        return Ok(0.0);
    }
    let (d1, d2) = (params.df1 as f64, params.df2 as f64);
    let rf = r as f64;
    let x = params.beta_point(c);
    let b = 0.5 * d2;
    let scale = (d1 / d2).powi(r as i32);
    let lu = x.ln();
    let series = poisson_series(params.rate(), eps, |j| {
        let a = 0.5 * d1 + j as f64;
        if a > rf {
            (ln_beta(a - rf, b + rf) - ln_beta(a, b)).exp() * beta_reg(b + rf, a - rf, 1.0 - x)
        } else {
            // Beta(a - r, .) is undefined; integrate the tail directly in u = ln B.
            let lnb = ln_beta(a, b);
            let f = |u: f64| {
                if u >= 0.0 {
                    return 0.0;
                }
                let one_minus = -u.exp_m1();
                ((a - rf) * u + (b + rf - 1.0) * one_minus.ln() - lnb).exp()
            };
            adaptive_simpson(&f, lu, 0.0, 1e-13, 64)
        }
    });
    Ok(scale * series)
}

/// Density of the non-central F.
pub fn ncf_pdf(params: &NcfParams, x: f64) -> f64 {
    if !(x > 0.0) || x.is_infinite() {
        return 0.0;
    }
    let (d1, d2) = (params.df1 as f64, params.df2 as f64);
    let bx = params.beta_point(x);
    // dB/dx for B = d1 x / (d1 x + d2)
    let jac = d1 * d2 / (d1 * x + d2).powi(2);
    let b = 0.5 * d2;
    poisson_series(params.rate(), 1e-12, |j| {
        let a = 0.5 * d1 + j as f64;
        ((a - 1.0) * bx.ln() + (b - 1.0) * (1.0 - bx).ln() - ln_beta(a, b)).exp()
    }) * jac
}

/// Quadrature route for `E[F^{-r} I(F <= c)]`: integrates `x^{-r}` against
/// [`ncf_pdf`] over `(0, c]` after the substitution `x = c' v^2` on the beta
/// scale. Slower than the series; kept as an independent cross-check.
pub fn ncf_truncated_inv_moment_quadrature(params: &NcfParams, r: u32, c: f64) -> Result<f64> {
    check_order(params, r)?;
    if !(c > 0.0) {
        return Ok(0.0);
    }
    let (d1, d2) = (params.df1 as f64, params.df2 as f64);
    let xc = if c.is_infinite() { 1.0 } else { params.beta_point(c) };
    // x = (d2/d1) B/(1-B), B = xc v^2, dx = (d2/d1) dB/(1-B)^2, dB = 2 xc v dv
    let f = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let bb = xc * v * v;
        if bb >= 1.0 {
            return 0.0;
        }
        let x = d2 / d1 * bb / (1.0 - bb);
        let dxdv = d2 / d1 / (1.0 - bb).powi(2) * 2.0 * xc * v;
        x.powi(-(r as i32)) * ncf_pdf(params, x) * dxdv
    };
    Ok(adaptive_simpson(&f, 0.0, 1.0, 1e-11, 64))
}

/// Plain Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl McEstimate {
    /// `|value - estimate| <= k * SE`, with a tiny absolute floor for
    /// functionals whose MC variance is zero.
    pub fn agrees(&self, value: f64, k: f64) -> bool {
        (value - self.estimate).abs() <= k * self.std_error + 1e-12
    }
}

const MC_CHUNK: usize = 1 << 16;

/// One non-central F draw.
pub fn draw_ncf<R: rand::Rng + ?Sized>(params: &NcfParams, rng: &mut R) -> f64 {
    let shift = params.noncentrality.sqrt();
    let z: f64 = rng.sample(StandardNormal);
    let mut num = (z + shift).powi(2);
    if params.df1 > 1 {
        num += ChiSquared::new((params.df1 - 1) as f64).unwrap().sample(rng);
    }
    let den = ChiSquared::new(params.df2 as f64).unwrap().sample(rng);
    (num / params.df1 as f64) / (den / params.df2 as f64)
}

/// Monte Carlo estimate of `E[f(F)]` for each functional in `functionals`,
/// all evaluated on the same draws. Deterministic for a given seed no matter
/// how many threads run: draws are generated in fixed-size chunks, each from
/// its own ChaCha stream, and reduced in chunk order.
pub fn mc_oracle_many(
    params: &NcfParams,
    functionals: &[&(dyn Fn(f64) -> f64 + Sync)],
    n_draws: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if n_draws < 10_000 {
        return Err(Error::InvalidInput("Monte Carlo oracle needs at least 1e4 draws".into()));
    }
    let m = functionals.len();
    let chunks = n_draws.div_ceil(MC_CHUNK);
    let partial: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ci as u64);
            let len = MC_CHUNK.min(n_draws - ci * MC_CHUNK);
            let mut acc = vec![(0.0, 0.0); m];
            for _ in 0..len {
                let f = draw_ncf(params, &mut rng);
                for (k, g) in functionals.iter().enumerate() {
                    let v = g(f);
                    acc[k].0 += v;
                    acc[k].1 += v * v;
                }
            }
            acc
        })
        .collect();
    let n = n_draws as f64;
    Ok((0..m)
        .map(|k| {
            let (s, ss) = partial.iter().fold((0.0, 0.0), |acc, c| (acc.0 + c[k].0, acc.1 + c[k].1));
            let mean = s / n;
            let var = ((ss / n - mean * mean) * n / (n - 1.0)).max(0.0);
            McEstimate { estimate: mean, std_error: (var / n).sqrt() }
        })
        .collect())
}

pub fn mc_oracle(
    params: &NcfParams,
    functional: &(dyn Fn(f64) -> f64 + Sync),
    n_draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    Ok(mc_oracle_many(params, &[functional], n_draws, seed)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(d1: u32, d2: u32, nc: f64) -> NcfParams {
        NcfParams::new(d1, d2, nc).unwrap()
    }

    #[test]
    fn equal_df_central_median_is_one() {
        for v in [1, 3, 10, 40] {
            assert!((ncf_cdf(&p(v, v, 0.0), 1.0) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_argument_gives_zero() {
        assert_eq!(ncf_cdf(&p(3, 7, 2.0), -1.0), 0.0);
    }

    #[test]
    fn central_inverse_mean_closed_form() {
        for (d1, d2) in [(5, 10), (7, 20), (9, 3)] {
            let v = ncf_inv_moment(&p(d1, d2, 0.0), 1).unwrap();
            assert!((v - d1 as f64 / (d1 as f64 - 2.0)).abs() < 1e-10);
        }
        assert!((ncf_inv_moment(&p(5, 10, 0.0), 1).unwrap() - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn central_inverse_second_moment_closed_form() {
        // E[F^-2] = (d1/d2)^2 d2 (d2 + 2) / ((d1 - 2)(d1 - 4))
        let (d1, d2) = (7.0_f64, 12.0_f64);
        let want = (d1 / d2).powi(2) * d2 * (d2 + 2.0) / ((d1 - 2.0) * (d1 - 4.0));
        let got = ncf_inv_moment(&p(7, 12, 0.0), 2).unwrap();
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn undefined_moments() {
        assert_eq!(
            ncf_inv_moment(&p(2, 10, 1.0), 1).unwrap_err(),
            Error::MomentUndefined { order: 1, df1: 2 }
        );
        assert!(ncf_truncated_inv_moment(&p(4, 10, 1.0), 2, 1.0).is_err());
    }

    #[test]
    fn truncated_order_zero_is_cdf() {
        let q = p(5, 9, 3.0);
        for c in [0.1, 1.0, 4.0] {
            let a = ncf_truncated_inv_moment(&q, 0, c).unwrap();
            assert!((a - ncf_cdf(&q, c)).abs() < 1e-9);
        }
    }

    #[test]
    fn truncation_at_large_c_recovers_full_moment() {
        for r in [1, 2] {
            let q = p(7, 12, 2.0);
            let full = ncf_inv_moment(&q, r).unwrap();
            let tr = ncf_truncated_inv_moment(&q, r, 1e6).unwrap();
            assert!(((tr - full) / full).abs() < 1e-6);
        }
    }

    #[test]
    fn lower_plus_upper_is_full() {
        let q = p(6, 15, 4.0);
        for r in [0, 1, 2] {
            for c in [0.3, 1.2, 5.0] {
                let lo = ncf_truncated_inv_moment(&q, r, c).unwrap();
                let hi = ncf_upper_inv_moment(&q, r, c).unwrap();
                let full = if r == 0 { 1.0 } else { ncf_inv_moment(&q, r).unwrap() };
                assert!((lo + hi - full).abs() < 1e-8, "r={r} c={c}");
            }
        }
    }

    #[test]
    fn upper_moment_small_df_matches_quadrature_free_oracle() {
        // df1 = 3, r = 2: only the upper tail is finite; compare with MC.
        let q = p(3, 20, 1.5);
        let v = ncf_upper_inv_moment(&q, 2, 0.4).unwrap();
        let f = |x: f64| if x > 0.4 { x.powi(-2) } else { 0.0 };
        let mc = mc_oracle(&q, &f, 400_000, 11).unwrap();
        assert!(mc.agrees(v, 4.0), "{v} vs {mc:?}");
    }

    #[test]
    fn series_and_quadrature_agree() {
        let q = p(6, 20, 1.0);
        for r in [1, 2] {
            let s = ncf_truncated_inv_moment(&q, r, 1.0).unwrap();
            let qd = ncf_truncated_inv_moment_quadrature(&q, r, 1.0).unwrap();
            assert!((s - qd).abs() < 1e-7, "r={r}: {s} vs {qd}");
        }
    }

    #[test]
    fn pdf_integrates_to_cdf() {
        let q = p(4, 11, 2.5);
        let v = adaptive_simpson(&|x| ncf_pdf(&q, x), 0.0, 2.0, 1e-11, 32);
        assert!((v - ncf_cdf(&q, 2.0)).abs() < 1e-7);
    }

    #[test]
    fn quantiles_invert_cdf() {
        let c = central_f_quantile(4, 15, 0.95);
        assert!((central_f_cdf(4, 15, c) - 0.95).abs() < 1e-12);
        // tabulated F_{4,15}(0.05) = 3.0556
        assert!((c - 3.0556).abs() < 1e-3);
        let q = p(3, 8, 5.0);
        let x = ncf_quantile(&q, 0.3);
        assert!((ncf_cdf(&q, x) - 0.3).abs() < 1e-9);
        assert_eq!(f_critical_value(3, 8, 1.0), 0.0);
    }

    #[test]
    fn cdf_monotone_in_argument_and_noncentrality() {
        let mut last = 0.0;
        for i in 1..40 {
            let v = ncf_cdf(&p(5, 12, 3.0), i as f64 * 0.2);
            assert!(v >= last);
            last = v;
        }
        let mut prev = 1.0;
        for i in 0..30 {
            let v = ncf_cdf(&p(5, 12, i as f64 * 0.7), 2.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn large_noncentrality_is_stable() {
        let q = p(4, 30, 900.0);
        let v = ncf_cdf(&q, 1.0);
        assert!((0.0..1e-10).contains(&v));
        let m = ncf_inv_moment(&q, 1).unwrap();
        // E[F^-1] ~ E[chi2_30]/30 * 4 / E[chi2_4(900)] ~ 4 / 904 roughly
        assert!(m > 0.0 && m < 0.01);
    }

    #[test]
    fn moment_request_validation() {
        assert!(MomentRequest::new(3, None, 1e-6).is_err());
        assert!(MomentRequest::new(1, None, 1e-2).is_err());
        assert!(MomentRequest::new(1, Some(-1.0), 1e-6).is_err());
        let q = p(7, 10, 1.0);
        let m = MomentRequest::new(1, Some(2.0), 1e-6).unwrap().evaluate(&q).unwrap();
        assert!((m - ncf_truncated_inv_moment(&q, 1, 2.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mc_oracle_basics() {
        let q = p(5, 10, 0.0);
        let id = |x: f64| x;
        let mc = mc_oracle(&q, &id, 200_000, 3).unwrap();
        assert!(mc.agrees(1.25, 3.0), "{mc:?}");
        let ind = |x: f64| if x <= 1.0 { 1.0 } else { 0.0 };
        let half = mc_oracle(&p(6, 6, 0.0), &ind, 100_000, 5).unwrap();
        assert!(half.agrees(0.5, 3.0));
        let again = mc_oracle(&q, &id, 200_000, 3).unwrap();
        assert_eq!(mc, again);
        assert!(mc_oracle(&q, &id, 100, 3).is_err());
    }
}
