//! Tolerance-aware dense linear algebra.
//!
//! Every rank decision in the crate goes through [`rank_tol`]: a singular
//! value counts as nonzero when it exceeds `rel * sigma_max + abs`, or
//! `rel * scale + abs` for [`rank_scaled`] when the matrix may vanish. Kernels,
//! column spaces and intersections are returned as [`Subspace`] values with
//! orthonormal (Hermitian) bases stored in complex coordinates; real
//! subspaces carry a [`Field::Real`] tag and zero imaginary parts.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StrataError};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Cosine threshold above which a principal angle counts as zero.
pub const INTERSECTION_COS: f64 = 1.0 - 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-9, abs: 1e-12 }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Result<Self> {
        let valid = rel > 0.0 && abs >= 0.0 && rel.is_finite() && abs.is_finite();
        if !valid {
            return Err(StrataError::InvalidTolerance { rel, abs });
        }
        Ok(Tolerance { rel, abs })
    }

    /// Singular values at or below this are treated as zero.
    pub fn threshold(&self, sigma_max: f64) -> f64 {
        self.rel * sigma_max + self.abs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    Real,
    Complex,
}

/// Scalars the substrate works over.
pub trait Scalar: ComplexField<RealField = f64> + Copy {
    const FIELD: Field;
    fn to_complex(self) -> Complex64;
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    const FIELD: Field = Field::Complex;
    fn to_complex(self) -> Complex64 {
        self
    }
}

pub fn to_complex<T: Scalar>(m: &DMatrix<T>) -> CMat {
    m.map(|x| x.to_complex())
}

pub fn is_finite<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| {
        let c = x.to_complex();
        c.re.is_finite() && c.im.is_finite()
    })
}

/// Real form `[[A, -B], [B, A]]` of `A + iB`.
fn realify(m: &CMat) -> Mat {
    let (r, c) = m.shape();
    Mat::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i / r, j / c) {
            (0, 1) => -z.im,
            (1, 0) => z.im,
            _ => z.re,
        }
    })
}

/// Real matrix of a scalar matrix: itself when real, its real form when complex.
/// Complex singular values appear twice in the real form.
fn real_form<T: Scalar>(m: &DMatrix<T>) -> Mat {
    match T::FIELD {
        Field::Real => m.map(|x| x.to_complex().re),
        Field::Complex => realify(&to_complex(m)),
    }
}

/// One-sided Jacobi SVD of a matrix with `rows >= cols`: `(sigma, U, V)` with
/// `A V = U diag(sigma)`, unsorted. Columns of `U` for zero singular values are zero.
fn jacobi_svd(a: &Mat) -> (Vec<f64>, Mat, Mat) {
    let (rows, cols) = a.shape();
    debug_assert!(rows >= cols);
    let mut u = a.clone();
    let mut v = Mat::identity(cols, cols);
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut u, &mut v] {
                    for i in 0..m.nrows() {
                        let (x, y) = (m[(i, p)], m[(i, q)]);
                        m[(i, p)] = c * x - s * y;
                        m[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = (0..cols).map(|j| u.column(j).norm()).collect();
    for (j, &sj) in sigma.iter().enumerate() {
        if sj > 0.0 {
            u.column_mut(j).unscale_mut(sj);
        }
    }
    (sigma, u, v)
}

const JACOBI_SWEEPS: usize = 80;

/// `(sigma, U, V)` of a real matrix with full `V`, singular values descending.
fn sorted_svd(m: &Mat) -> (Vec<f64>, Mat, Mat) {
    let (rows, cols) = m.shape();
    // pad wide matrices with zero rows so V is complete
    let (sigma, u, v) = if rows < cols {
        let mut p = Mat::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        let (s, u, v) = jacobi_svd(&p);
        (s, u.rows(0, rows).into_owned(), v)
    } else {
        jacobi_svd(m)
    };
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let s = order.iter().map(|&i| sigma[i]).collect();
    let u = Mat::from_fn(rows, order.len(), |r, c| u[(r, order[c])]);
    let v = Mat::from_fn(cols, order.len(), |r, c| v[(r, order[c])]);
    (s, u, v)
}

/// Orthonormal complex basis of dimension `dim` for the span of `(x; y) -> x + iy`,
/// by Gram-Schmidt with largest-residual pivoting.
fn complex_span(real: &Mat, dim: usize) -> CMat {
    let n = real.nrows() / 2;
    let mut cand: Vec<DVector<Complex64>> = (0..real.ncols())
        .map(|c| DVector::from_fn(n, |r, _| Complex64::new(real[(r, c)], real[(r + n, c)])))
        .collect();
    let mut basis = CMat::zeros(n, dim);
    for k in 0..dim {
        let (best, _) = cand
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let q = cand.swap_remove(best).normalize();
        for v in cand.iter_mut() {
            let p = q.dotc(v);
            *v -= &q * p;
        }
        basis.set_column(k, &q);
    }
    basis
}

/// Basis of dimension `dim` from the leading real-form vectors of a matrix over `T`.
fn lift<T: Scalar>(vecs: &Mat, dim: usize) -> CMat {
    match T::FIELD {
        Field::Real => to_complex(&vecs.columns(0, dim).into_owned()),
        Field::Complex => complex_span(&vecs.columns(0, 2 * dim).into_owned(), dim),
    }
}

/// Singular values in descending order.
pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let r = real_form(m);
    let r = if r.nrows() < r.ncols() { r.transpose() } else { r };
    let (mut s, _, _) = jacobi_svd(&r);
    s.sort_by(|a, b| b.total_cmp(a));
    match T::FIELD {
        Field::Real => s,
        Field::Complex => s.into_iter().step_by(2).collect(),
    }
}

/// Rank with singular values judged against `scale` instead of `sigma_max`.
pub fn rank_scaled<T: Scalar>(m: &DMatrix<T>, scale: f64, tol: Tolerance) -> usize {
    let thr = tol.threshold(scale);
    singular_values(m).iter().filter(|&&x| x > thr).count()
}

pub fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalue modulus farthest from 1. Falls back to the extreme singular
/// values (which bracket every modulus) when the Schur iteration stalls.
pub fn worst_eigen_modulus(m: &Mat) -> f64 {
    let far = |x: &f64, y: &f64| (x - 1.0).abs().total_cmp(&(y - 1.0).abs());
    let moduli: Vec<f64> = match nalgebra::Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
        Some(s) => s.complex_eigenvalues().iter().map(|c| c.norm()).collect(),
        None => singular_values(m),
    };
    moduli.into_iter().max_by(far).unwrap_or(1.0)
}

pub fn rank_tol<T: Scalar>(m: &DMatrix<T>, tol: Tolerance) -> usize {
    let s = singular_values(m);
    let Some(&smax) = s.first() else { return 0 };
    let thr = tol.threshold(smax);
    s.iter().filter(|&&x| x > thr).count()
}

/// Orthonormal basis of the numerical null space.
pub fn kernel<T: Scalar>(m: &DMatrix<T>, tol: Tolerance) -> Subspace {
    let (rows, cols) = m.shape();
    let field = T::FIELD;
    if cols == 0 {
        return Subspace::zero(0, field);
    }
    if rows == 0 {
        return Subspace::full(cols, field);
    }
    let null = cols - rank_tol(m, tol);
    Subspace { ambient_dim: cols, basis: smallest_right(m, null, lift::<T>), field }
}

/// Span of the right singular vectors for the `dim` smallest singular values.
fn smallest_right<T: Scalar>(m: &DMatrix<T>, dim: usize, lift: fn(&Mat, usize) -> CMat) -> CMat {
    let (_, _, v) = sorted_svd(&real_form(m));
    let width = v.ncols();
    let reversed = Mat::from_fn(v.nrows(), width, |r, c| v[(r, width - 1 - c)]);
    lift(&reversed, dim)
}

/// Orthonormal basis of the numerical column space.
pub fn column_space<T: Scalar>(m: &DMatrix<T>, tol: Tolerance) -> Subspace {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Subspace::zero(rows, T::FIELD);
    }
    let rank = rank_tol(m, tol);
    let (_, u, _) = sorted_svd(&real_form(m));
    Subspace { ambient_dim: rows, basis: lift::<T>(&u, rank), field: T::FIELD }
}

/// Subspace of `C^N` (or `R^N`) with an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    pub ambient_dim: usize,
    pub basis: CMat,
    pub field: Field,
}

impl Subspace {
    pub fn zero(ambient_dim: usize, field: Field) -> Self {
        Subspace { ambient_dim, basis: CMat::zeros(ambient_dim, 0), field }
    }

    pub fn full(ambient_dim: usize, field: Field) -> Self {
        Subspace { ambient_dim, basis: CMat::identity(ambient_dim, ambient_dim), field }
    }

    /// Span of the columns of `m`.
    pub fn span<T: Scalar>(m: &DMatrix<T>, tol: Tolerance) -> Self {
        column_space(m, tol)
    }

    /// Complexification of a real column span.
    pub fn complexify(self) -> Self {
        Subspace { field: Field::Complex, ..self }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthogonal projector `B B^H`.
    pub fn projector(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }

    /// Real basis, available when the subspace is tagged real.
    pub fn real_basis(&self) -> Option<Mat> {
        match self.field {
            Field::Real => Some(self.basis.map(|c| c.re)),
            Field::Complex => None,
        }
    }

    pub fn conj(&self) -> Self {
        Subspace { ambient_dim: self.ambient_dim, basis: self.basis.map(|c| c.conj()), field: self.field }
    }

    /// Hermitian orthogonal complement.
    pub fn complement(&self, tol: Tolerance) -> Self {
        if self.dim() == 0 {
            return Subspace::full(self.ambient_dim, self.field);
        }
        match self.field {
            Field::Real => kernel(&self.basis.map(|c| c.re).transpose(), tol),
            Field::Complex => kernel(&self.basis.adjoint(), tol),
        }
    }

    pub fn contains(&self, v: &DVector<Complex64>, tol: Tolerance) -> bool {
        let r = v - self.projector() * v;
        r.norm() <= tol.threshold(v.norm()).max(10.0 * tol.rel * v.norm())
    }

    /// Orthonormality defect `|B^H B - I|_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let d = self.dim();
        (self.basis.adjoint() * &self.basis - CMat::identity(d, d)).norm()
    }

    /// Frobenius distance between orthogonal projectors.
    pub fn distance(&self, other: &Subspace) -> f64 {
        (self.projector() - other.projector()).norm()
    }

    pub fn sum(&self, other: &Subspace, tol: Tolerance) -> Result<Subspace> {
        check_ambient(self, other)?;
        let mut m = CMat::zeros(self.ambient_dim, self.dim() + other.dim());
        m.view_mut((0, 0), (self.ambient_dim, self.dim())).copy_from(&self.basis);
        m.view_mut((0, self.dim()), (self.ambient_dim, other.dim())).copy_from(&other.basis);
        Ok(match join_field(self.field, other.field) {
            Field::Real => column_space(&m.map(|c| c.re), tol),
            Field::Complex => column_space(&m, tol),
        })
    }
}

fn join_field(a: Field, b: Field) -> Field {
    if a == Field::Real && b == Field::Real {
        Field::Real
    } else {
        Field::Complex
    }
}

fn check_ambient(a: &Subspace, b: &Subspace) -> Result<()> {
    if a.ambient_dim != b.ambient_dim {
        return Err(StrataError::DimensionMismatch { expected: a.ambient_dim, found: b.ambient_dim });
    }
    Ok(())
}

/// Cosines of the principal angles between two subspaces, descending.
pub fn principal_cosines(a: &Subspace, b: &Subspace) -> Result<Vec<f64>> {
    check_ambient(a, b)?;
    if a.dim() == 0 || b.dim() == 0 {
        return Ok(Vec::new());
    }
    Ok(singular_values(&(a.basis.adjoint() * &b.basis)))
}

/// `a ∩ b`. The dimension is the number of principal cosines above
/// [`INTERSECTION_COS`]; the basis spans the smallest right singular vectors
/// of the stacked complement projectors `[I - P_a; I - P_b]`.
pub fn intersect(a: &Subspace, b: &Subspace, _tol: Tolerance) -> Result<Subspace> {
    check_ambient(a, b)?;
    let field = join_field(a.field, b.field);
    let n = a.ambient_dim;
    let d = principal_cosines(a, b)?
        .iter()
        .filter(|&&c| c >= INTERSECTION_COS)
        .count();
    if d == 0 {
        return Ok(Subspace::zero(n, field));
    }
    let id = CMat::identity(n, n);
    let mut stacked = CMat::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&(&id - a.projector()));
    stacked.view_mut((n, 0), (n, n)).copy_from(&(&id - b.projector()));
    let basis = match field {
        Field::Real => smallest_right(&stacked.map(|z| z.re), d, lift::<f64>),
        Field::Complex => smallest_right(&stacked, d, lift::<Complex64>),
    };
    Ok(Subspace { ambient_dim: n, basis, field })
}

/// Matrix exponential by scaling and squaring with Padé approximants.
pub fn expm(m: &Mat) -> Result<Mat> {
    let (r, c) = m.shape();
    if r != c {
        return Err(StrataError::NotSquare { rows: r, cols: c });
    }
    if !is_finite(m) {
        return Err(StrataError::NonFinite);
    }
    let n = r;
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let id = Mat::identity(n, n);
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    const THETA: [(usize, f64); 4] = [
        (3, 1.495585217958292e-2),
        (5, 2.539_398_330_063_23e-1),
        (7, 9.504178996162932e-1),
        (9, 2.097847961257068e0),
    ];
    for &(deg, theta) in THETA.iter() {
        if norm1 <= theta {
            let (u, v) = pade_low(m, deg, &id);
            return solve_pade(&u, &v);
        }
    }
    const THETA13: f64 = 5.371920351148152e0;
    let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil().max(0.0) as i32 } else { 0 };
    let scaled = m / 2f64.powi(s);
    let (u, v) = pade13(&scaled, &id);
    let mut x = solve_pade(&u, &v)?;
    for _ in 0..s {
        x = &x * &x;
    }
    Ok(x)
}

fn pade_low(a: &Mat, deg: usize, id: &Mat) -> (Mat, Mat) {
    let b: &[f64] = match deg {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        _ => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
    };
    let a2 = a * a;
    let mut pow = id.clone();
    let mut u_inner = id * b[1];
    let mut v = id * b[0];
    let mut k = 1;
    while 2 * k <= deg {
        pow = &pow * &a2;
        v += &pow * b[2 * k];
        if 2 * k < deg {
            u_inner += &pow * b[2 * k + 1];
        }
        k += 1;
    }
    (a * u_inner, v)
}

fn pade13(a: &Mat, id: &Mat) -> (Mat, Mat) {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * B[13] + &a4 * B[11] + &a2 * B[9];
    let u = a * (&a6 * u_hi + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + id * B[1]);
    let v_hi = &a6 * B[12] + &a4 * B[10] + &a2 * B[8];
    let v = &a6 * v_hi + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + id * B[0];
    (u, v)
}

fn solve_pade(u: &Mat, v: &Mat) -> Result<Mat> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or(StrataError::NonFinite)
}

/// Commutator `[a, b] = ab - ba`.
pub fn commutator(a: &Mat, b: &Mat) -> Mat {
    a * b - b * a
}

/// Anticommutator `{a, b} = ab + ba`.
pub fn anticommutator(a: &Mat, b: &Mat) -> Mat {
    a * b + b * a
}
