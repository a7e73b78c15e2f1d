use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::RegressionData;
use crate::error::{Error, Result};

/// Population covariance of the predictor rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariance {
    Identity,
    /// `Sigma_kj = rho^|k - j|`.
    Ar1 { rho: f64 },
    /// `groups` consecutive blocks of `group_size` columns with within-group
    /// correlation `rho` and `between` across groups; remaining columns are
    /// uncorrelated with everything.
    GroupBlock { rho: f64, group_size: usize, groups: usize, between: f64 },
}

impl Covariance {
    pub fn matrix(&self, p: usize) -> Result<DMatrix<f64>> {
        let m = match *self {
            Covariance::Identity => DMatrix::identity(p, p),
            Covariance::Ar1 { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(Error::InvalidInput("AR(1) correlation must lie in (-1, 1)".into()));
                }
                DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
            }
            Covariance::GroupBlock { rho, group_size, groups, between } => {
                if group_size * groups > p {
                    return Err(Error::InvalidInput("groups do not fit in p columns".into()));
                }
                let group = |i: usize| (i < group_size * groups).then(|| i / group_size);
                DMatrix::from_fn(p, p, |i, j| match (group(i), group(j)) {
                    _ if i == j => 1.0,
                    (Some(a), Some(b)) if a == b => rho,
                    (Some(_), Some(_)) => between,
                    _ => 0.0,
                })
            }
        };
        if m.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("covariance matrix is not positive definite".into()));
        }
        Ok(m)
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_folds() -> usize {
    5
}

/// One simulation design: sample sizes of the training, validation and test
/// sets, true coefficients, noise level and predictor covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n_train: usize,
    #[serde(default)]
    pub n_valid: usize,
    pub n_test: usize,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub covariance: Covariance,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Columns of the candidate sub-model; defaults to the nonzero
    /// coefficients of `beta`.
    #[serde(default)]
    pub submodel: Option<Vec<usize>>,
}

pub const SCENARIO_NAMES: [&str; 6] = ["LD1", "LD2", "LD3", "HD1", "HD2", "HD3"];

impl Scenario {
    /// The six table designs at correlation `rho`.
    pub fn named(name: &str, rho: f64) -> Result<Self> {
        let ar1 = Covariance::Ar1 { rho };
        let rep = |v: f64, k: usize| std::iter::repeat_n(v, k);
        let (n, beta, sigma, cov, reps): ((usize, usize, usize), Vec<f64>, f64, Covariance, usize) =
            match name.to_ascii_uppercase().as_str() {
                "LD1" => ((20, 20, 200), vec![3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0], 3.0, ar1, 250),
                "LD2" => {
                    let b = rep(0.0, 10).chain(rep(2.0, 10)).chain(rep(0.0, 10)).chain(rep(2.0, 10)).collect();
                    ((100, 100, 400), b, 1.0, ar1, 250)
                }
                "LD3" => ((50, 50, 200), rep(2.0, 5).chain(rep(0.0, 25)).collect(), 9.0, ar1, 250),
                "HD1" => ((50, 0, 200), rep(1.0, 5).chain(rep(0.0, 95)).collect(), 3.0, ar1, 50),
                "HD2" => ((50, 0, 200), rep(3.0, 10).chain(rep(0.0, 140)).collect(), 2.0, ar1, 50),
                "HD3" => {
                    let b = rep(5.0, 10).chain(rep(-5.0, 10)).chain(rep(3.0, 10)).chain(rep(-3.0, 10)).chain(rep(0.0, 80));
                    let cov = Covariance::GroupBlock { rho, group_size: 10, groups: 4, between: 0.1 };
                    ((50, 0, 200), b.collect(), 3.0, cov, 50)
                }
                _ => return Err(Error::UnknownScenario(name.to_string())),
            };
        let s = Self {
            name: name.to_ascii_uppercase(),
            n_train: n.0,
            n_valid: n.1,
            n_test: n.2,
            beta,
            sigma,
            covariance: cov,
            replicates: reps,
            seed: 20_240_601,
            alpha: 0.05,
            folds: 5,
            submodel: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// Low-dimensional design of the Delta* sweep: `p = 10`, five active
    /// coefficients equal to one, `n = 50`, unit noise.
    pub fn sweep_base(rho: f64) -> Self {
        Self {
            name: "SWEEP".into(),
            n_train: 50,
            n_valid: 0,
            n_test: 200,
            beta: [1.0; 5].into_iter().chain([0.0; 5]).collect(),
            sigma: 1.0,
            covariance: Covariance::Ar1 { rho },
            replicates: 250,
            seed: 20_240_602,
            alpha: 0.05,
            folds: 5,
            submodel: None,
        }
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn is_high_dimensional(&self) -> bool {
        self.p() >= self.n_train
    }

    pub fn submodel(&self) -> Vec<usize> {
        match &self.submodel {
            Some(s) => s.clone(),
            None => (0..self.p()).filter(|&j| self.beta[j] != 0.0).collect(),
        }
    }

    pub fn beta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if p == 0 || self.n_train < 3 || self.replicates == 0 {
            return Err(Error::InvalidInput("scenario needs p >= 1, n_train >= 3 and replicates >= 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput("sigma must be finite and >= 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput("alpha must lie in (0, 1)".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidInput("need at least two folds".into()));
        }
        let sub = self.submodel();
        if sub.iter().any(|&j| j >= p) {
            return Err(Error::InvalidInput("sub-model column out of range".into()));
        }
        if sub.len() >= p {
            return Err(Error::InvalidInput("sub-model must drop at least one column".into()));
        }
        self.covariance.matrix(p)?;
        Ok(())
    }
}

/// Raw (unstandardized) data of one replicate.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub train: RegressionData,
    pub valid: Option<RegressionData>,
    pub test: RegressionData,
    /// Seed for the replicate's tuning folds.
    pub tuning_seed: u64,
}

/// Substream `rep` of the scenario seed.
pub fn replicate_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

pub fn draw_rows(n: usize, chol_t: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let p = chol_t.nrows();
    let z = DMatrix::from_fn(n, p, |_, _| -> f64 { StandardNormal.sample(rng) });
    z * chol_t
}

fn draw_set(n: usize, chol_t: &DMatrix<f64>, beta: &DVector<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> Result<RegressionData> {
    let x = draw_rows(n, chol_t, rng);
    let e = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(rng) });
    let y = &x * beta + e * sigma;
    RegressionData::new(x, y)
}

/// Rows `N(0, Sigma)`, `Y = X b + sigma e`; deterministic in
/// `(scn.seed, rep)`.
pub fn generate_replicate(scn: &Scenario, rep: usize) -> Result<Replicate> {
    let sigma_mat = scn.covariance.matrix(scn.p())?;
    let chol_t = sigma_mat.cholesky().expect("checked positive definite").l().transpose();
    let beta = scn.beta_vector();
    let mut rng = replicate_rng(scn.seed, rep);
    let train = draw_set(scn.n_train, &chol_t, &beta, scn.sigma, &mut rng)?;
    let valid = if scn.n_valid > 0 { Some(draw_set(scn.n_valid, &chol_t, &beta, scn.sigma, &mut rng)?) } else { None };
    let test = draw_set(scn.n_test.max(1), &chol_t, &beta, scn.sigma, &mut rng)?;
    let tuning_seed = rand::Rng::random(&mut rng);
    Ok(Replicate { train, valid, test, tuning_seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_scenarios_match_their_designs() {
        let ld1 = Scenario::named("ld1", 0.5).unwrap();
        assert_eq!((ld1.n_train, ld1.n_valid, ld1.n_test, ld1.p()), (20, 20, 200, 8));
        assert_eq!(ld1.submodel(), vec![0, 1, 4]);
        let ld2 = Scenario::named("LD2", 0.9).unwrap();
        assert_eq!(ld2.submodel(), (10..20).chain(30..40).collect::<Vec<_>>());
        let hd3 = Scenario::named("HD3", 0.5).unwrap();
        assert_eq!(hd3.p(), 120);
        assert!(hd3.is_high_dimensional());
        let s = hd3.covariance.matrix(120).unwrap();
        assert_eq!((s[(0, 9)], s[(0, 10)], s[(0, 50)], s[(50, 51)]), (0.5, 0.1, 0.0, 0.0));
        assert_eq!(Scenario::named("LD9", 0.5).unwrap_err(), Error::UnknownScenario("LD9".into()));
    }

    #[test]
    fn noiseless_response_is_in_the_span() {
        let mut s = Scenario::named("LD1", 0.5).unwrap();
        s.sigma = 0.0;
        let r = generate_replicate(&s, 0).unwrap();
        let fit = crate::ld::lse(r.train.x(), r.train.y()).unwrap();
        assert!((fit.beta - s.beta_vector()).amax() < 1e-10);
    }

    #[test]
    fn ar1_rows_have_the_target_correlation() {
        let chol_t = Covariance::Ar1 { rho: 0.9 }.matrix(8).unwrap().cholesky().unwrap().l().transpose();
        let mut rng = replicate_rng(3, 0);
        let x = draw_rows(10_000, &chol_t, &mut rng);
        let (a, b) = (x.column(0), x.column(1));
        let (ma, mb) = (a.mean(), b.mean());
        let cov = a.iter().zip(b.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>();
        let r = cov / (a.map(|u| (u - ma).powi(2)).sum() * b.map(|v| (v - mb).powi(2)).sum()).sqrt();
        // SE of a sample correlation near 0.9 is (1 - 0.81) / sqrt(n)
        assert!((r - 0.9).abs() < 3.0 * 0.19 / 100.0, "{r}");
    }

    #[test]
    fn independent_columns_are_uncorrelated() {
        let chol_t = Covariance::Ar1 { rho: 0.0 }.matrix(6).unwrap().cholesky().unwrap().l().transpose();
        let mut rng = replicate_rng(4, 0);
        let n = 400;
        let x = draw_rows(n, &chol_t, &mut rng);
        let mut total = 0.0;
        let mut count = 0.0;
        for i in 0..6 {
            for j in i + 1..6 {
                let (a, b) = (x.column(i), x.column(j));
                let (ma, mb) = (a.mean(), b.mean());
                let c = a.iter().zip(b.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>();
                total += c / (a.map(|u| (u - ma).powi(2)).sum() * b.map(|v| (v - mb).powi(2)).sum()).sqrt();
                count += 1.0;
            }
        }
        assert!((total / count).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn replicates_are_reproducible_and_distinct() {
        let s = Scenario::named("LD1", 0.5).unwrap();
        let a = generate_replicate(&s, 7).unwrap();
        let b = generate_replicate(&s, 7).unwrap();
        let c = generate_replicate(&s, 8).unwrap();
        assert_eq!(a.train.x(), b.train.x());
        assert_eq!(a.tuning_seed, b.tuning_seed);
        assert_ne!(a.train.x(), c.train.x());
    }
}
