//! Validated complex structures and metrics, plus seeded samplers.

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, StrataError};
use crate::numerics::{is_finite, Mat};

/// Residual ceiling for `j^2 + I`, scaled by the size of `j`.
pub const SQUARE_TOL: f64 = 1e-10;
/// Residual ceiling for `j^T g j - g`, scaled by the size of `g`.
pub const COMPAT_TOL: f64 = 1e-10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Orthogonal matrix from the QR factor of a Gaussian, signs fixed so the
/// distribution does not depend on the QR convention.
pub fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> Mat {
    let qr = gaussian(dim, dim, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..dim {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// `[[0, -I], [I, 0]]` on `R^{2n}`.
pub fn j0(n: usize) -> Mat {
    let mut j = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(n + i, i)] = 1.0;
        j[(i, n + i)] = -1.0;
    }
    j
}

fn check_square_even(m: &Mat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(StrataError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if !m.nrows().is_multiple_of(2) {
        return Err(StrataError::OddDimension(m.nrows()));
    }
    if !is_finite(m) {
        return Err(StrataError::NonFinite);
    }
    Ok(m.nrows())
}

/// Symmetric positive-definite form with its Cholesky factor `g = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    g: Mat,
    l: Mat,
}

impl Metric {
    pub fn new(g: Mat) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(StrataError::NotSquare { rows: g.nrows(), cols: g.ncols() });
        }
        if !is_finite(&g) {
            return Err(StrataError::NonFinite);
        }
        let asym = (&g - g.transpose()).amax();
        if asym > 1e-12 * g.amax().max(1.0) {
            return Err(StrataError::InvalidMetric(format!("asymmetry {asym:e}")));
        }
        let g = (&g + g.transpose()) * 0.5;
        let l = Cholesky::new(g.clone())
            .ok_or_else(|| StrataError::InvalidMetric("not positive definite".into()))?
            .l();
        Ok(Metric { g, l })
    }

    pub fn identity(dim: usize) -> Self {
        Metric { g: Mat::identity(dim, dim), l: Mat::identity(dim, dim) }
    }

    /// `A A^T + I` for Gaussian `A`.
    pub fn random(dim: usize, seed: u64) -> Self {
        let a = gaussian(dim, dim, &mut rng(seed)) * (1.0 / (dim as f64).sqrt());
        Metric::new(&a * a.transpose() + Mat::identity(dim, dim)).expect("SPD by construction")
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.g
    }

    /// Lower Cholesky factor.
    pub fn cholesky(&self) -> &Mat {
        &self.l
    }

    pub fn inverse(&self) -> Mat {
        let li = self.l_inv();
        li.transpose() * li
    }

    pub fn l_inv(&self) -> Mat {
        self.l.clone().try_inverse().expect("Cholesky factor is invertible")
    }

    pub fn is_identity(&self) -> bool {
        self.g == Mat::identity(self.dim(), self.dim())
    }

    /// Moves an endomorphism into `g`-orthonormal coordinates: `L^T A L^{-T}`.
    pub fn to_orthonormal(&self, a: &Mat) -> Mat {
        self.l.transpose() * a * self.l_inv().transpose()
    }

    pub fn from_orthonormal(&self, a: &Mat) -> Mat {
        self.l_inv().transpose() * a * self.l.transpose()
    }

    /// Residual of `a^T g a - g`.
    pub fn compat_residual(&self, a: &Mat) -> f64 {
        (a.transpose() * &self.g * a - &self.g).norm()
    }
}

/// Real endomorphism with square `-I`, optionally `g`-orthogonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexStructure {
    j: Mat,
    metric: Option<Metric>,
}

impl ComplexStructure {
    /// Checks `j^2 = -I` and, if `g` is supplied, `j^T g j = g`.
    pub fn new(j: Mat, g: Option<Metric>) -> Result<Self> {
        let dim = check_square_even(&j)?;
        let scale = (j.norm_squared() / dim as f64).max(1.0);
        let residual = (&j * &j + Mat::identity(dim, dim)).norm();
        if residual > SQUARE_TOL * scale {
            return Err(StrataError::NotAComplexStructure { residual });
        }
        if let Some(g) = &g {
            if g.dim() != dim {
                return Err(StrataError::DimensionMismatch { expected: dim, found: g.dim() });
            }
            let residual = g.compat_residual(&j);
            if residual > COMPAT_TOL * g.matrix().norm().max(1.0) * scale {
                return Err(StrataError::NotMetricCompatible { residual });
            }
        }
        Ok(ComplexStructure { j, metric: g })
    }

    pub fn standard(n: usize) -> Self {
        ComplexStructure { j: j0(n), metric: Some(Metric::identity(2 * n)) }
    }

    pub fn matrix(&self) -> &Mat {
        &self.j
    }

    pub fn metric(&self) -> Option<&Metric> {
        self.metric.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.j.nrows()
    }

    pub fn n(&self) -> usize {
        self.j.nrows() / 2
    }

    /// `-J`, carrying the same metric.
    pub fn conjugate(&self) -> Self {
        ComplexStructure { j: -&self.j, metric: self.metric.clone() }
    }

    /// Re-tags the structure against a metric, validating compatibility.
    pub fn with_metric(&self, g: Metric) -> Result<Self> {
        ComplexStructure::new(self.j.clone(), Some(g))
    }

    pub fn without_metric(&self) -> Self {
        ComplexStructure { j: self.j.clone(), metric: None }
    }

    /// Whether both structures carry the same metric.
    pub fn shares_metric(&self, other: &Self) -> Option<&Metric> {
        match (&self.metric, &other.metric) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        }
    }
}

/// `P J0 P^{-1}` with `P = U diag(sigma) V^T`, `sigma` log-uniform on `[1, 10]`.
pub fn random_c(n: usize, seed: u64) -> ComplexStructure {
    let dim = 2 * n;
    let mut r = rng(seed);
    let u = random_orthogonal(dim, &mut r);
    let v = random_orthogonal(dim, &mut r);
    let sigma: Vec<f64> = (0..dim).map(|_| 10f64.powf(r.random::<f64>())).collect();
    let s = Mat::from_diagonal(&nalgebra::DVector::from_vec(sigma.clone()));
    let s_inv = Mat::from_diagonal(&nalgebra::DVector::from_vec(sigma.iter().map(|x| 1.0 / x).collect()));
    let p = &u * s * v.transpose();
    let p_inv = &v * s_inv * u.transpose();
    ComplexStructure { j: p * j0(n) * p_inv, metric: None }
}

/// Random element of the metric twistor space: `L^{-T} Q J0 Q^T L^T`.
pub fn random_t(n: usize, g: &Metric, seed: u64) -> ComplexStructure {
    let q = random_orthogonal(2 * n, &mut rng(seed));
    let jo = &q * j0(n) * q.transpose();
    ComplexStructure { j: g.from_orthonormal(&jo), metric: Some(g.clone()) }
}

/// Basis `(v1, J v1, ..., vn, J vn)` built greedily from standard vectors.
pub fn adapted_basis(j: &Mat) -> Mat {
    let dim = j.nrows();
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(dim);
    for i in 0..dim {
        if cols.len() == dim {
            break;
        }
        let e = nalgebra::DVector::from_fn(dim, |r, _| if r == i { 1.0 } else { 0.0 });
        let je = j * &e;
        let mut trial = cols.clone();
        trial.push(e);
        trial.push(je);
        let m = Mat::from_columns(&trial);
        if crate::numerics::rank_tol(&m, crate::numerics::Tolerance::default()) == trial.len() {
            cols = trial;
        }
    }
    Mat::from_columns(&cols)
}

/// `+1` iff the two structures induce the same orientation.
pub fn orientation_sign(a: &ComplexStructure, b: &ComplexStructure) -> Result<i8> {
    if a.dim() != b.dim() {
        return Err(StrataError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let da = adapted_basis(a.matrix()).determinant();
    let db = adapted_basis(b.matrix()).determinant();
    Ok(if (da > 0.0) == (db > 0.0) { 1 } else { -1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_structure_validates() {
        let j = ComplexStructure::new(j0(2), Some(Metric::identity(4))).unwrap();
        assert_eq!(j.n(), 2);
        assert!(matches!(
            ComplexStructure::new(Mat::identity(4, 4), None),
            Err(StrataError::NotAComplexStructure { .. })
        ));
        assert!(matches!(ComplexStructure::new(Mat::zeros(3, 3), None), Err(StrataError::OddDimension(3))));
        assert!(matches!(ComplexStructure::new(Mat::zeros(2, 3), None), Err(StrataError::NotSquare { .. })));
    }

    #[test]
    fn skewed_structure_is_not_compatible() {
        // r = 2 scaling: K v1 = -2 v2, K v2 = v1 / 2
        let k = Mat::from_row_slice(2, 2, &[0.0, 0.5, -2.0, 0.0]);
        assert!(ComplexStructure::new(k.clone(), None).is_ok());
        for &(a, b) in &[(1.0, 1.0), (1.0, 2.0), (3.0, 0.5), (4.0, 1.0)] {
            let g = Metric::new(Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![a, b]))).unwrap();
            let ok = ComplexStructure::new(k.clone(), Some(g)).is_ok();
            // diag(4, 1) makes the scaled rotation orthogonal; the pair with J stays non-metric
            assert_eq!(ok, (a / b - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn samplers_are_deterministic_and_valid() {
        for n in 1..=3 {
            let a = random_c(n, 7);
            assert_eq!(a, random_c(n, 7));
            ComplexStructure::new(a.matrix().clone(), None).unwrap();
            let g = Metric::random(2 * n, 11);
            let t = random_t(n, &g, 3);
            assert_eq!(t, random_t(n, &g, 3));
            ComplexStructure::new(t.matrix().clone(), Some(g)).unwrap();
        }
    }

    #[test]
    fn orientation_examples() {
        let j1 = ComplexStructure::standard(1);
        assert_eq!(orientation_sign(&j1, &j1).unwrap(), 1);
        assert_eq!(orientation_sign(&j1, &j1.conjugate()).unwrap(), -1);
        let j2 = ComplexStructure::standard(2);
        assert_eq!(orientation_sign(&j2, &j2.conjugate()).unwrap(), 1);
        assert!(orientation_sign(&j1, &j2).is_err());
    }

    #[test]
    fn metric_rejects_bad_input() {
        assert!(Metric::new(Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(Metric::new(Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
        let g = Metric::random(4, 1);
        assert!((g.inverse() * g.matrix() - Mat::identity(4, 4)).norm() < 1e-12);
    }
}
