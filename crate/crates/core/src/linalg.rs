//! Ridge matrices, linear restrictions and stable solves of `(X'X + K) b = X'Y`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot floor for the Cholesky path.
const PIVOT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgePolicy {
    Fixed,
    HoerlKennard,
    ScalarCv,
}

/// Diagonal ridge matrix `K = diag(k_1, ..., k_p)` with every `k_j > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSpec {
    k: DVector<f64>,
    policy: RidgePolicy,
}

impl RidgeSpec {
    pub fn new(k: DVector<f64>, policy: RidgePolicy) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::InvalidInput("empty ridge vector".into()));
        }
        if k.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("ridge parameters must be finite and > 0".into()));
        }
        if policy == RidgePolicy::ScalarCv && k.iter().any(|&v| v != k[0]) {
            return Err(Error::InvalidInput("scalar policy requires equal ridge entries".into()));
        }
        Ok(Self { k, policy })
    }

    pub fn fixed(k: DVector<f64>) -> Result<Self> {
        Self::new(k, RidgePolicy::Fixed)
    }

    /// `K = k I_p`, the ordinary ridge specialization.
    pub fn scalar(k: f64, p: usize) -> Result<Self> {
        Self::new(DVector::from_element(p, k), RidgePolicy::ScalarCv)
    }

    pub fn k(&self) -> &DVector<f64> {
        &self.k
    }

    pub fn policy(&self) -> RidgePolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.k.min()
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let k = DVector::from_iterator(idx.len(), idx.iter().map(|&j| self.k[j]));
        let policy = if self.policy == RidgePolicy::ScalarCv { RidgePolicy::ScalarCv } else { self.policy };
        Self::new(k, policy)
    }
}

/// A `q x p` restriction matrix of full row rank `q < p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    h: DMatrix<f64>,
}

impl Restriction {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        let (q, p) = h.shape();
        if q == 0 {
            return Err(Error::InvalidInput(
                "restriction must constrain at least one coefficient".into(),
            ));
        }
        if q >= p {
            return Err(Error::InvalidInput(format!("restriction needs q < p (q = {q}, p = {p})")));
        }
        let rank = numerical_rank(&h);
        if rank < q {
            return Err(Error::RestrictionRank { rank, rows: q });
        }
        Ok(Self { h })
    }

    /// Rows `e_j'` for every `j` in `zero_idx`: the hypothesis `beta_j = 0`.
    pub fn zero_coefficients(p: usize, zero_idx: &[usize]) -> Result<Self> {
        let mut h = DMatrix::zeros(zero_idx.len(), p);
        for (r, &j) in zero_idx.iter().enumerate() {
            if j >= p {
                return Err(Error::InvalidInput(format!("index {j} out of range for p = {p}")));
            }
            h[(r, j)] = 1.0;
        }
        Self::new(h)
    }

    /// `H = [0_{q x (p-q)}, I_q]`.
    pub fn trailing_block(p: usize, q: usize) -> Result<Self> {
        let idx: Vec<usize> = (p.saturating_sub(q)..p).collect();
        Self::zero_coefficients(p, &idx)
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn q(&self) -> usize {
        self.h.nrows()
    }

    pub fn p(&self) -> usize {
        self.h.ncols()
    }
}

/// Rank of `a` from a column-pivoted QR with tolerance `1e-10 * ||a||_F`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    // rank(H) = rank(H'); factor the tall orientation
    let tall = if a.nrows() < a.ncols() { a.transpose() } else { a.clone() };
    let norm = tall.norm();
    if norm == 0.0 {
        return 0;
    }
    let qr = tall.col_piv_qr();
    let r = qr.r();
    let tol = 1e-10 * norm;
    (0..r.nrows().min(r.ncols())).filter(|&i| r[(i, i)].abs() > tol).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolveResult {
    pub solution: DVector<f64>,
    /// 2-norm condition estimate of the system matrix.
    pub condition: f64,
}

enum Factor {
    Cholesky(nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>),
    Eigen { vectors: DMatrix<f64>, values: DVector<f64> },
}

/// Factorization of a symmetric positive-definite matrix, reusable across
/// right-hand sides. Falls back to a symmetric eigendecomposition when the
/// Cholesky pivots collapse.
pub struct SpdFactor {
    factor: Factor,
    condition: f64,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::InvalidInput("matrix is not square".into()));
        }
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
        if let Some(ch) = a.clone().cholesky() {
            let l = ch.l_dirty();
            let piv: Vec<f64> = (0..n).map(|i| l[(i, i)] * l[(i, i)]).collect();
            let lo = piv.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = piv.iter().cloned().fold(0.0_f64, f64::max);
            if lo / scale >= PIVOT_FLOOR {
                return Ok(Self { factor: Factor::Cholesky(ch), condition: hi / lo });
            }
        }
        let eig = a.clone().symmetric_eigen();
        let hi = eig.eigenvalues.max();
        let lo = eig.eigenvalues.min();
        if !(lo > PIVOT_FLOOR * hi.max(scale)) {
            return Err(Error::NumericalBreakdown(format!(
                "system matrix is not numerically positive definite (min eigenvalue {lo:e}, max {hi:e})"
            )));
        }
        Ok(Self {
            factor: Factor::Eigen { vectors: eig.eigenvectors, values: eig.eigenvalues },
            condition: hi / lo,
        })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            Factor::Cholesky(ch) => ch.solve(b),
            Factor::Eigen { vectors, values } => {
                let mut t = vectors.transpose() * b;
                for (i, mut row) in t.row_iter_mut().enumerate() {
                    row /= values[i];
                }
                vectors * t
            }
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Cholesky(ch) => ch.solve(b),
            Factor::Eigen { vectors, values } => {
                let t = (vectors.transpose() * b).component_div(values);
                vectors * t
            }
        }
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = match &self.factor {
            Factor::Cholesky(ch) => ch.l_dirty().nrows(),
            Factor::Eigen { values, .. } => values.len(),
        };
        self.solve(&DMatrix::identity(n, n))
    }
}

/// `X'X + diag(k)`.
pub fn penalized_gram(x: &DMatrix<f64>, k: &DVector<f64>) -> DMatrix<f64> {
    let mut s = x.tr_mul(x);
    for j in 0..k.len() {
        s[(j, j)] += k[j];
    }
    s
}

/// Solve `(X'X + K) beta = X'Y` through an SPD factorization.
pub fn solve_ridge_system(x: &DMatrix<f64>, y: &DVector<f64>, k: &RidgeSpec) -> Result<LinearSolveResult> {
    if k.len() != x.ncols() {
        return Err(Error::InvalidInput(format!(
            "ridge vector has length {} but X has {} columns",
            k.len(),
            x.ncols()
        )));
    }
    if y.len() != x.nrows() {
        return Err(Error::InvalidInput("X and Y row counts differ".into()));
    }
    let sk = penalized_gram(x, k.k());
    let rhs = x.tr_mul(y);
    let f = SpdFactor::new(&sk)?;
    let solution = f.solve_vec(&rhs);
    let resid = (&sk * &solution - &rhs).norm();
    if resid > 1e-8 * (rhs.norm() + 1.0) {
        return Err(Error::NumericalBreakdown(format!("ridge solve residual {resid:e} too large")));
    }
    Ok(LinearSolveResult { solution, condition: f.condition() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> (DMatrix<f64>, DVector<f64>) {
        (
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
        )
    }

    #[test]
    fn hand_solved_ridge() {
        let (x, y) = toy();
        let r = solve_ridge_system(&x, &y, &RidgeSpec::scalar(1.0, 2).unwrap()).unwrap();
        assert!((r.solution[0] - 0.875).abs() < 1e-12);
        assert!((r.solution[1] - 1.375).abs() < 1e-12);
    }

    #[test]
    fn vanishing_ridge_on_orthonormal_design() {
        let x = DMatrix::<f64>::identity(3, 3);
        let y = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let r = solve_ridge_system(&x, &y, &RidgeSpec::scalar(1e-12, 3).unwrap()).unwrap();
        assert!((r.solution - &y).amax() < 1e-10);
    }

    #[test]
    fn wide_system_is_well_posed() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, -2.0]);
        let k = RidgeSpec::scalar(1.0, 3).unwrap();
        let r = solve_ridge_system(&x, &y, &k).unwrap();
        // brute force: explicit 3x3 Gauss-Jordan on the augmented system
        let a = penalized_gram(&x, k.k());
        let b = x.tr_mul(&y);
        let brute = a.try_inverse().unwrap() * b.clone();
        assert!((r.solution.clone() - brute).amax() < 1e-12);
        let res = (penalized_gram(&x, k.k()) * r.solution - b.clone()).norm();
        assert!(res <= 1e-8 * (b.norm() + 1.0));
    }

    #[test]
    fn nonpositive_ridge_rejected() {
        assert!(RidgeSpec::fixed(DVector::from_vec(vec![1.0, 0.0])).is_err());
        assert!(RidgeSpec::new(DVector::from_vec(vec![1.0, 2.0]), RidgePolicy::ScalarCv).is_err());
    }

    #[test]
    fn restriction_rank_checks() {
        assert!(Restriction::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).is_ok());
        let dup = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        assert_eq!(Restriction::new(dup).unwrap_err(), Error::RestrictionRank { rank: 1, rows: 2 });
        assert!(Restriction::new(DMatrix::identity(2, 2)).is_err());
        let tb = Restriction::trailing_block(5, 2).unwrap();
        assert_eq!(tb.h()[(0, 3)], 1.0);
        assert_eq!(tb.h()[(1, 4)], 1.0);
    }

    #[test]
    fn singular_system_breaks_down() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(SpdFactor::new(&a), Err(Error::NumericalBreakdown(_))));
    }

    fn spd_from(vals: &[f64]) -> DMatrix<f64> {
        let b = DMatrix::from_row_slice(5, 5, vals);
        b.tr_mul(&b) + DMatrix::identity(5, 5) * 0.5
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn spd_solve_matches_dense_inverse(vals in proptest::collection::vec(-2.0f64..2.0, 25),
                                           rhs in proptest::collection::vec(-5.0f64..5.0, 5)) {
            let a = spd_from(&vals);
            let b = DVector::from_vec(rhs);
            let f = SpdFactor::new(&a).unwrap();
            let x = f.solve_vec(&b);
            let oracle = a.clone().try_inverse().unwrap() * &b;
            let rel = (&x - &oracle).norm() / oracle.norm().max(1e-300);
            prop_assert!(rel < 1e-8);
        }

        #[test]
        fn ridge_norm_shrinks_with_k(vals in proptest::collection::vec(-2.0f64..2.0, 24),
                                     rhs in proptest::collection::vec(-5.0f64..5.0, 6),
                                     k1 in 1e-3f64..10.0, dk in 0.0f64..10.0) {
            let x = DMatrix::from_row_slice(6, 4, &vals);
            let y = DVector::from_vec(rhs);
            let b1 = solve_ridge_system(&x, &y, &RidgeSpec::scalar(k1, 4).unwrap()).unwrap().solution;
            let b2 = solve_ridge_system(&x, &y, &RidgeSpec::scalar(k1 + dk, 4).unwrap()).unwrap().solution;
            prop_assert!(b2.norm() <= b1.norm() * (1.0 + 1e-12) + 1e-14);
        }
    }
}
