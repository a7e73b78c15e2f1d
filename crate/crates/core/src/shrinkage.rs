//! Pieces shared by the low- and high-dimensional estimator families: the
//! estimator labels, the shrinkage weight functions `g`, and the restricted
//! generalized ridge fit.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Restriction, RidgeSpec, SpdFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "LSE")]
    Lse,
    #[serde(rename = "ORR")]
    Orr,
    #[serde(rename = "GRR")]
    Grr,
    #[serde(rename = "RGRR")]
    Rgrr,
    #[serde(rename = "LS")]
    Ls,
    #[serde(rename = "PT")]
    Pt,
    #[serde(rename = "SPT")]
    Spt,
    #[serde(rename = "S")]
    S,
    #[serde(rename = "PS")]
    Ps,
    #[serde(rename = "IPT")]
    Ipt,
}

impl EstimatorKind {
    /// The eight estimators with exact bias and risk expressions.
    pub const RIDGE_FAMILY: [EstimatorKind; 8] = [
        EstimatorKind::Grr,
        EstimatorKind::Rgrr,
        EstimatorKind::Ls,
        EstimatorKind::Pt,
        EstimatorKind::Spt,
        EstimatorKind::S,
        EstimatorKind::Ps,
        EstimatorKind::Ipt,
    ];

    /// The six members driven by a test statistic.
    pub const SHRINKAGE: [EstimatorKind; 6] = [
        EstimatorKind::Ls,
        EstimatorKind::Pt,
        EstimatorKind::Spt,
        EstimatorKind::S,
        EstimatorKind::Ps,
        EstimatorKind::Ipt,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Lse => "LSE",
            EstimatorKind::Orr => "ORR",
            EstimatorKind::Grr => "GRR",
            EstimatorKind::Rgrr => "RGRR",
            EstimatorKind::Ls => "LS",
            EstimatorKind::Pt => "PT",
            EstimatorKind::Spt => "SPT",
            EstimatorKind::S => "S",
            EstimatorKind::Ps => "PS",
            EstimatorKind::Ipt => "IPT",
        }
    }

    /// S, PS and IPT need `q > 2`.
    pub fn is_stein_type(&self) -> bool {
        matches!(self, EstimatorKind::S | EstimatorKind::Ps | EstimatorKind::Ipt)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            EstimatorKind::Lse,
            EstimatorKind::Orr,
            EstimatorKind::Grr,
            EstimatorKind::Rgrr,
            EstimatorKind::Ls,
            EstimatorKind::Pt,
            EstimatorKind::Spt,
            EstimatorKind::S,
            EstimatorKind::Ps,
            EstimatorKind::Ipt,
        ];
        all.into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator `{s}`")))
    }
}

/// The weight `g(W)` applied to `GRR - RGRR`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GFunction {
    Zero,
    One,
    Linear { omega: f64 },
    Pretest { threshold: f64 },
    ShrinkagePretest { omega: f64, threshold: f64 },
    Stein { d: f64 },
    PositiveStein { d: f64 },
    ImprovedPretest { d: f64, threshold: f64 },
}

impl GFunction {
    /// The weight function for `kind`. `threshold` is the acceptance bound of
    /// the test and `d` the Stein constant.
    pub fn for_kind(kind: EstimatorKind, omega: f64, threshold: f64, d: f64) -> Result<Self> {
        Ok(match kind {
            EstimatorKind::Grr => GFunction::Zero,
            EstimatorKind::Rgrr => GFunction::One,
            EstimatorKind::Ls => GFunction::Linear { omega },
            EstimatorKind::Pt => GFunction::Pretest { threshold },
            EstimatorKind::Spt => GFunction::ShrinkagePretest { omega, threshold },
            EstimatorKind::S => GFunction::Stein { d },
            EstimatorKind::Ps => GFunction::PositiveStein { d },
            EstimatorKind::Ipt => GFunction::ImprovedPretest { d, threshold },
            EstimatorKind::Lse | EstimatorKind::Orr => {
                return Err(Error::InvalidInput(format!("{kind} is not a member of the shrinkage family")))
            }
        })
    }

    pub fn eval(&self, w: f64) -> f64 {
        let accept = |t: f64| if w <= t { 1.0 } else { 0.0 };
        match *self {
            GFunction::Zero => 0.0,
            GFunction::One => 1.0,
            GFunction::Linear { omega } => omega,
            GFunction::Pretest { threshold } => accept(threshold),
            GFunction::ShrinkagePretest { omega, threshold } => omega * accept(threshold),
            GFunction::Stein { d } => d / w,
            // d/W + (1 - d/W) I(W <= d)
            GFunction::PositiveStein { d } => {
                if w <= d {
                    1.0
                } else {
                    d / w
                }
            }
            // d/W + (1 - d/W) I(W <= threshold)
            GFunction::ImprovedPretest { d, threshold } => {
                if w <= threshold {
                    1.0
                } else {
                    d / w
                }
            }
        }
    }

    /// True when evaluating at `w` divides by the statistic.
    pub fn divides_by(&self, w: f64) -> bool {
        match *self {
            GFunction::Stein { .. } => true,
            GFunction::PositiveStein { d } => w > d,
            GFunction::ImprovedPretest { threshold, .. } => w > threshold,
            _ => false,
        }
    }
}

/// Stein constant `d = (q - 2) m / (q (m + 2))`.
pub fn stein_constant(q: usize, m: usize) -> Result<f64> {
    if q <= 2 {
        return Err(Error::SteinUndefined(q));
    }
    let (q, m) = (q as f64, m as f64);
    Ok((q - 2.0) * m / (q * (m + 2.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkageEstimate {
    pub kind: EstimatorKind,
    #[serde(skip)]
    pub beta: DVector<f64>,
    /// Realized `g` for members of the shrinkage family.
    pub g_value: Option<f64>,
    pub omega: Option<f64>,
    pub d: Option<f64>,
    /// Test statistic driving `g`, when one was used.
    pub statistic: Option<f64>,
}

impl ShrinkageEstimate {
    pub fn plain(kind: EstimatorKind, beta: DVector<f64>) -> Self {
        Self { kind, beta, g_value: None, omega: None, d: None, statistic: None }
    }
}

/// `M_K = I - S_K^{-1} H' (H S_K^{-1} H')^{-1} H`.
pub fn restricted_projector(sk: &SpdFactor, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = h.ncols();
    let a = sk.solve(&h.transpose());
    let v = h * &a;
    let vf = SpdFactor::new(&v).map_err(|_| Error::SingularRestriction)?;
    if vf.condition() > 1e13 {
        return Err(Error::SingularRestriction);
    }
    let correction = a * vf.solve(h);
    Ok(DMatrix::identity(p, p) - correction)
}

/// GRR, its restricted version and the projector that links them.
#[derive(Debug, Clone)]
pub struct RestrictedRidge {
    pub grr: DVector<f64>,
    pub rgrr: DVector<f64>,
    pub m_k: DMatrix<f64>,
    /// Condition estimate of `S + K`.
    pub condition: f64,
}

impl RestrictedRidge {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, k: &RidgeSpec, h: &Restriction) -> Result<Self> {
        let p = x.ncols();
        if k.len() != p || h.p() != p {
            return Err(Error::InvalidInput("ridge vector, restriction and design disagree on p".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::InvalidInput("X and Y row counts differ".into()));
        }
        let mut sk = x.tr_mul(x);
        for j in 0..p {
            sk[(j, j)] += k.k()[j];
        }
        let f = SpdFactor::new(&sk)?;
        let grr = f.solve_vec(&x.tr_mul(y));
        let m_k = restricted_projector(&f, h.h())?;
        let rgrr = &m_k * &grr;
        Ok(Self { grr, rgrr, m_k, condition: f.condition() })
    }

    /// `GRR - (GRR - RGRR) g`.
    pub fn combine(&self, g: f64) -> DVector<f64> {
        &self.grr - (&self.grr - &self.rgrr) * g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_round_trip() {
        for k in EstimatorKind::RIDGE_FAMILY {
            assert_eq!(k.label().to_lowercase().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("foo".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn g_functions_match_their_definitions() {
        let (d, t) = (0.4, 2.5);
        for w in [0.1, 0.4, 1.0, 2.5, 3.0, 10.0] {
            let ps = GFunction::PositiveStein { d }.eval(w);
            let lit = d / w + (1.0 - d / w) * if w <= d { 1.0 } else { 0.0 };
            assert!((ps - lit).abs() < 1e-15);
            let ipt = GFunction::ImprovedPretest { d, threshold: t }.eval(w);
            let lit = d / w + (1.0 - d / w) * if w <= t { 1.0 } else { 0.0 };
            assert!((ipt - lit).abs() < 1e-15);
        }
        assert_eq!(GFunction::Pretest { threshold: 1.0 }.eval(1.0), 1.0);
        assert_eq!(GFunction::ShrinkagePretest { omega: 0.3, threshold: 1.0 }.eval(1.5), 0.0);
    }

    #[test]
    fn positive_part_weight_never_exceeds_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let w: f64 = rng.random_range(0.0..20.0);
            let d: f64 = rng.random_range(0.0..2.0);
            let g = GFunction::PositiveStein { d }.eval(w);
            assert!(g <= 1.0 && g >= 0.0);
        }
    }

    #[test]
    fn stein_constant_needs_three_restrictions() {
        assert_eq!(stein_constant(2, 10).unwrap_err(), Error::SteinUndefined(2));
        assert!((stein_constant(4, 20).unwrap() - 2.0 * 20.0 / (4.0 * 22.0)).abs() < 1e-15);
    }
}
