//! Pointwise algebra of a pair of complex structures.
//!
//! Sign convention used throughout: `JK = +1` on `ker(J+K)` and `JK = -1` on
//! `ker(J-K)`, so the two-dimensional irreducibles of `ker(J+K)` carry the
//! polynomial `t - 1` and those of `ker(J-K)` carry `t + 1`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, StrataError, SumSign};
use crate::numerics::{
    column_space, commutator, intersect, kernel, rank_scaled, rank_tol, spectral_norm, worst_eigen_modulus, CMat, Mat,
    Subspace, Tolerance,
};
use crate::structures::{orientation_sign, ComplexStructure, Metric, COMPAT_TOL};

/// Modulus drift of a `JK` eigenvalue beyond which it is reported off the unit circle.
pub const UNIT_CIRCLE_TOL: f64 = 1e-6;
/// Ceiling for `|({J,K}/2 - e) v|` on a block.
pub const BLOCK_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StratumSignature {
    pub n: usize,
    pub m1: usize,
    pub m_minus1: usize,
    pub s: usize,
    pub k: Option<usize>,
    pub same_orientation: bool,
}

impl StratumSignature {
    pub fn pair(&self) -> (usize, usize) {
        (self.m1, self.m_minus1)
    }
}

fn check_dims(j: &ComplexStructure, k: &ComplexStructure) -> Result<()> {
    if j.dim() != k.dim() {
        return Err(StrataError::DimensionMismatch { expected: j.dim(), found: k.dim() });
    }
    Ok(())
}

/// Real dimensions `(dim ker(J+K), dim ker(J-K), rank [J,K])`.
pub fn raw_ranks(j: &Mat, k: &Mat, tol: Tolerance) -> (usize, usize, usize) {
    let dim = j.nrows();
    let (nj, nk) = (spectral_norm(j), spectral_norm(k));
    let plus = dim - rank_scaled(&(j + k), nj + nk, tol);
    let minus = dim - rank_scaled(&(j - k), nj + nk, tol);
    (plus, minus, commutator_rank(j, k, tol))
}

/// `rank [J,K]` against the scale `2 |J| |K|`.
pub fn commutator_rank(j: &Mat, k: &Mat, tol: Tolerance) -> usize {
    rank_scaled(&commutator(j, k), 2.0 * spectral_norm(j) * spectral_norm(k), tol)
}

pub fn classify_pair(j: &ComplexStructure, k: &ComplexStructure, tol: Tolerance) -> Result<StratumSignature> {
    check_dims(j, k)?;
    let n = j.n();
    let (plus, minus, c) = raw_ranks(j.matrix(), k.matrix(), tol);
    if plus % 2 != 0 {
        return Err(StrataError::OddKernelDimension { which: SumSign::Plus, dim: plus });
    }
    if minus % 2 != 0 {
        return Err(StrataError::OddKernelDimension { which: SumSign::Minus, dim: minus });
    }
    if c % 2 != 0 {
        return Err(StrataError::OddCommutatorRank(c));
    }
    let (m1, m_minus1, s) = (plus / 2, minus / 2, c / 2);
    if m1 + m_minus1 + s != n {
        return Err(StrataError::InconsistentSignature { n, m1, m_minus1, s });
    }
    let kq = match j.shares_metric(k) {
        Some(_) if s % 2 != 0 => return Err(StrataError::QuaternionicRankViolation(c)),
        Some(_) => Some(s / 2),
        None => None,
    };
    Ok(StratumSignature {
        n,
        m1,
        m_minus1,
        s,
        k: kq,
        same_orientation: orientation_sign(j, k)? == 1,
    })
}

/// One summand of the orthogonal splitting.
#[derive(Debug, Clone)]
pub struct Block {
    /// `{J,K}/2` on the block.
    pub e: f64,
    pub f: f64,
    pub space: Subspace,
    /// `g`-orthonormal real basis in the original coordinates.
    pub basis: Mat,
}

impl Block {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct CanonicalDecomposition {
    pub blocks_e: Vec<Block>,
    pub v1: Block,
    pub v_minus1: Block,
    pub p0: Mat,
    pub p1: Mat,
    pub pm1: Mat,
    pub j: Mat,
    pub k: Mat,
    pub metric: Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRef {
    E(usize),
    Plus,
    Minus,
}

impl CanonicalDecomposition {
    pub fn block(&self, r: BlockRef) -> Result<&Block> {
        match r {
            BlockRef::Plus => Ok(&self.v1),
            BlockRef::Minus => Ok(&self.v_minus1),
            BlockRef::E(i) => self
                .blocks_e
                .get(i)
                .ok_or(StrataError::BlockIndex { index: i, count: self.blocks_e.len() }),
        }
    }

    /// Restrictions of `J` and `K` to a block, in its `g`-orthonormal basis.
    pub fn block_matrices(&self, r: BlockRef) -> Result<(Mat, Mat)> {
        let b = self.block(r)?;
        let gx = self.metric.matrix() * &b.basis;
        Ok((gx.transpose() * &self.j * &b.basis, gx.transpose() * &self.k * &b.basis))
    }

    /// Residual of `P0 + P1 + P-1 - I`.
    pub fn completeness_residual(&self) -> f64 {
        let d = self.j.nrows();
        (&self.p0 + &self.p1 + &self.pm1 - Mat::identity(d, d)).norm()
    }
}

/// Orthonormal real basis of the column span, as a plain matrix.
fn ortho_real(m: &Mat, tol: Tolerance) -> Mat {
    column_space(m, tol).real_basis().expect("real input")
}

fn hcat(a: &Mat, b: &Mat) -> Mat {
    let mut m = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    m.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    m
}

struct Frame<'a> {
    g: &'a Metric,
    lt: Mat,
    lit: Mat,
}

impl<'a> Frame<'a> {
    fn new(g: &'a Metric) -> Self {
        Frame { g, lt: g.cholesky().transpose(), lit: g.l_inv().transpose() }
    }

    fn block(&self, y: Mat, e: f64, tol: Tolerance) -> Block {
        let basis = &self.lit * y;
        let space = if basis.ncols() == 0 {
            Subspace::zero(basis.nrows(), crate::numerics::Field::Real)
        } else {
            Subspace::span(&basis, tol)
        };
        Block { e, f: (1.0 - e * e).max(0.0).sqrt(), space, basis }
    }

    fn projector(&self, b: &Block) -> Mat {
        &b.basis * b.basis.transpose() * self.g.matrix()
    }
}

fn compat_or_unit(j: &Mat, k: &Mat, g: &Metric) -> Result<()> {
    let scale = g.matrix().norm().max(1.0) * (j.norm_squared() / j.nrows() as f64).max(1.0);
    let rj = g.compat_residual(j);
    let rk = g.compat_residual(k);
    if rj <= COMPAT_TOL * scale && rk <= COMPAT_TOL * scale {
        return Ok(());
    }
    let jk = j * k;
    let modulus = worst_eigen_modulus(&jk);
    if (modulus - 1.0).abs() > UNIT_CIRCLE_TOL {
        return Err(StrataError::NonUnitEigenvalue { modulus });
    }
    Err(StrataError::NotMetricCompatible { residual: rj.max(rk) })
}

pub fn canonical_decomposition(
    j: &ComplexStructure,
    k: &ComplexStructure,
    g: &Metric,
    tol: Tolerance,
) -> Result<CanonicalDecomposition> {
    check_dims(j, k)?;
    if g.dim() != j.dim() {
        return Err(StrataError::DimensionMismatch { expected: j.dim(), found: g.dim() });
    }
    let (jm, km) = (j.matrix(), k.matrix());
    compat_or_unit(jm, km, g)?;
    let dim = j.dim();
    let fr = Frame::new(g);
    let jh = &fr.lt * jm * &fr.lit;
    let kh = &fr.lt * km * &fr.lit;
    let modulus = worst_eigen_modulus(&(&jh * &kh));
    if (modulus - 1.0).abs() > UNIT_CIRCLE_TOL {
        return Err(StrataError::NonUnitEigenvalue { modulus });
    }

    let y_of = |m: Mat| -> Mat {
        let kb = kernel(&m, tol).real_basis().expect("real input");
        if kb.ncols() == 0 {
            Mat::zeros(dim, 0)
        } else {
            ortho_real(&(&fr.lt * kb), tol)
        }
    };
    let y1 = y_of(jm + km);
    let ym1 = y_of(jm - km);
    let y_pm = hcat(&y1, &ym1);
    let y0 = if y_pm.ncols() == 0 {
        Mat::identity(dim, dim)
    } else {
        Subspace::span(&y_pm, tol).complement(tol).real_basis().expect("real input")
    };

    let sh = (&jh * &kh + &kh * &jh) * 0.5;
    let sh = (&sh + sh.transpose()) * 0.5;
    let mut blocks_e = Vec::new();
    if y0.ncols() > 0 {
        let s0 = y0.transpose() * &sh * &y0;
        let s0 = (&s0 + s0.transpose()) * 0.5;
        let eig = s0.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for &i in &order {
            let e = eig.eigenvalues[i];
            match clusters.last_mut() {
                Some(c) if (e - eig.eigenvalues[c[0]]).abs() <= 100.0 * tol.rel * e.abs().max(1.0) => c.push(i),
                _ => clusters.push(vec![i]),
            }
        }
        for c in clusters {
            if c.len() % 4 != 0 {
                return Err(StrataError::NotQuaternionicBlock);
            }
            let e = c.iter().map(|&i| eig.eigenvalues[i]).sum::<f64>() / c.len() as f64;
            let cols: Vec<DVector<f64>> = c.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
            let y = &y0 * Mat::from_columns(&cols);
            let residual = (&sh * &y - &y * e).norm();
            if residual > BLOCK_RESIDUAL_TOL {
                return Err(StrataError::BlockResidual { e, residual });
            }
            blocks_e.push(fr.block(y, e, tol));
        }
    }
    let v1 = fr.block(y1, 1.0, tol);
    let v_minus1 = fr.block(ym1, -1.0, tol);
    let p0 = blocks_e.iter().fold(Mat::zeros(dim, dim), |acc, b| acc + fr.projector(b));
    let p1 = fr.projector(&v1);
    let pm1 = fr.projector(&v_minus1);
    Ok(CanonicalDecomposition {
        blocks_e,
        v1,
        v_minus1,
        p0,
        p1,
        pm1,
        j: jm.clone(),
        k: km.clone(),
        metric: g.clone(),
    })
}

/// `J' = (JK - e)/f` on a `V_e` block, in the block's `g`-orthonormal basis.
pub fn quaternionic_frame(dec: &CanonicalDecomposition, r: BlockRef) -> Result<Mat> {
    if !matches!(r, BlockRef::E(_)) {
        return Err(StrataError::NotQuaternionicBlock);
    }
    let b = dec.block(r)?;
    if b.f <= 0.0 {
        return Err(StrataError::NotQuaternionicBlock);
    }
    let (jb, kb) = dec.block_matrices(r)?;
    let d = jb.nrows();
    Ok((jb * kb - Mat::identity(d, d) * b.e) / b.f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Poly {
    /// `t - root`, with `root = ±1`.
    Linear { root: f64 },
    /// `(t - c)(t - conj c) = t^2 - 2 e t + 1`, `c = e + i f`.
    Quadratic { e: f64, f: f64 },
}

impl Poly {
    pub fn coefficients(&self) -> Vec<f64> {
        match *self {
            Poly::Linear { root } => vec![1.0, -root],
            Poly::Quadratic { e, .. } => vec![1.0, -2.0 * e, 1.0],
        }
    }

    pub fn roots(&self) -> Vec<Complex64> {
        match *self {
            Poly::Linear { root } => vec![Complex64::new(root, 0.0)],
            Poly::Quadratic { e, f } => vec![Complex64::new(e, f), Complex64::new(e, -f)],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Summand {
    pub poly: Poly,
    pub multiplicity: usize,
    pub carriers: Vec<Subspace>,
}

#[derive(Debug, Clone)]
pub struct IDInfinityDecomposition {
    pub summands: Vec<Summand>,
}

impl IDInfinityDecomposition {
    pub fn total_dim(&self) -> usize {
        self.summands.iter().flat_map(|s| s.carriers.iter()).map(|c| c.dim()).sum()
    }
}

/// Splits a block greedily into cyclic carriers generated by `words`.
fn split_block(y: &Mat, jh: &Mat, kh: &Mat, size: usize, tol: Tolerance) -> Result<Vec<Mat>> {
    let mut rest = y.clone();
    let mut out = Vec::new();
    while rest.ncols() > 0 {
        let v = rest.column(0).into_owned();
        let words: Vec<DVector<f64>> = if size == 2 {
            vec![v.clone(), jh * &v]
        } else {
            vec![v.clone(), jh * &v, kh * &v, jh * (kh * &v)]
        };
        let c = ortho_real(&Mat::from_columns(&words), tol);
        if c.ncols() != size {
            return Err(StrataError::NotQuaternionicBlock);
        }
        let dim = c.nrows();
        let residual = (Mat::identity(dim, dim) - &c * c.transpose()) * &rest;
        rest = ortho_real(&residual, tol);
        out.push(c);
    }
    Ok(out)
}

pub fn decompose_id_infinity(
    j: &ComplexStructure,
    k: &ComplexStructure,
    g: &Metric,
    tol: Tolerance,
) -> Result<IDInfinityDecomposition> {
    let dec = canonical_decomposition(j, k, g, tol)?;
    let fr = Frame::new(g);
    let jh = &fr.lt * &dec.j * &fr.lit;
    let kh = &fr.lt * &dec.k * &fr.lit;
    let mut summands = Vec::new();
    let mut push = |b: &Block, poly: Poly, size: usize| -> Result<()> {
        if b.dim() == 0 {
            return Ok(());
        }
        let y = &fr.lt * &b.basis;
        let carriers = split_block(&y, &jh, &kh, size, tol)?
            .into_iter()
            .map(|c| Subspace::span(&(&fr.lit * c), tol))
            .collect::<Vec<_>>();
        summands.push(Summand { poly, multiplicity: carriers.len(), carriers });
        Ok(())
    };
    push(&dec.v1, Poly::Linear { root: 1.0 }, 2)?;
    push(&dec.v_minus1, Poly::Linear { root: -1.0 }, 2)?;
    for b in &dec.blocks_e {
        push(b, Poly::Quadratic { e: b.e, f: b.f }, 4)?;
    }
    Ok(IDInfinityDecomposition { summands })
}

fn shift(m: &Mat, z: Complex64) -> CMat {
    let d = m.nrows();
    crate::numerics::to_complex(m) - CMat::identity(d, d) * z
}

/// `V^{1,0}` (the `+i` eigenspace) and `V^{0,1}` (the `-i` eigenspace).
pub fn eigenspaces(j: &Mat, tol: Tolerance) -> (Subspace, Subspace) {
    let i = Complex64::new(0.0, 1.0);
    (kernel(&shift(j, i), tol), kernel(&shift(j, -i), tol))
}

/// `(dim V^{1,0}_J ∩ V^{0,1}_K, dim V^{0,1}_J ∩ V^{0,1}_K)`.
pub fn eigenspace_intersection_dims(
    j: &ComplexStructure,
    k: &ComplexStructure,
    tol: Tolerance,
) -> Result<(usize, usize)> {
    check_dims(j, k)?;
    let (j10, j01) = eigenspaces(j.matrix(), tol);
    let (_, k01) = eigenspaces(k.matrix(), tol);
    Ok((intersect(&j10, &k01, tol)?.dim(), intersect(&j01, &k01, tol)?.dim()))
}

#[derive(Debug, Clone, Serialize)]
pub struct BundleMapReport {
    /// Complex ranks of maps 1) to 5).
    pub ranks: [usize; 5],
    /// Distance of each image from its declared target.
    pub image_residuals: [f64; 5],
    /// `|(-g^{-1}(J+K)^T g - (J+K))|` on `V^{1,0}_J`; metric case only.
    pub adjoint_residual: Option<f64>,
    /// `|g[J,K] + (g[J,K])^T|`; metric case only.
    pub skew_residual: Option<f64>,
}

impl BundleMapReport {
    pub fn metric_identities_hold(&self, bound: f64) -> bool {
        self.adjoint_residual.is_none_or(|r| r <= bound) && self.skew_residual.is_none_or(|r| r <= bound)
    }
}

pub fn bundle_map_ranks(j: &ComplexStructure, k: &ComplexStructure, tol: Tolerance) -> Result<BundleMapReport> {
    check_dims(j, k)?;
    let (jm, km) = (j.matrix(), k.matrix());
    let (j10, j01) = eigenspaces(jm, tol);
    let (k10, k01) = eigenspaces(km, tol);
    let c = crate::numerics::to_complex;
    let plus = c(&(jm + km));
    let minus = c(&(jm - km));
    let comm = c(&commutator(jm, km));
    let maps: [(&CMat, &Subspace, &Subspace); 5] = [
        (&plus, &k01, &j01),
        (&minus, &k01, &j10),
        (&plus, &j10, &k10),
        (&minus, &j01, &k10),
        (&comm, &k01, &k10),
    ];
    let mut ranks = [0; 5];
    let mut image_residuals = [0.0; 5];
    for (idx, (m, src, dst)) in maps.iter().enumerate() {
        let img = *m * &src.basis;
        ranks[idx] = rank_tol(&img, tol);
        let d = img.nrows();
        let off = (CMat::identity(d, d) - dst.projector()) * &img;
        image_residuals[idx] = off.norm() / img.norm().max(1.0);
    }
    let (adjoint_residual, skew_residual) = match j.shares_metric(k) {
        Some(g) => {
            let gm = g.matrix();
            let adj = -(g.inverse() * (jm + km).transpose() * gm);
            let r3 = (c(&(adj - (jm + km))) * &j10.basis).norm();
            let gc = gm * commutator(jm, km);
            (Some(r3), Some((&gc + gc.transpose()).norm()))
        }
        None => (None, None),
    };
    Ok(BundleMapReport { ranks, image_residuals, adjoint_residual, skew_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructors::quaternion_pair;
    use crate::structures::j0;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn quaternion_matrices_anticommute() {
        let (a, b) = quaternion_pair();
        assert!((a.matrix() * b.matrix() + b.matrix() * a.matrix()).norm() < 1e-15);
    }

    #[test]
    fn equal_and_opposite_structures() {
        let j = ComplexStructure::standard(2);
        let sig = classify_pair(&j, &j, tol()).unwrap();
        assert_eq!((sig.m1, sig.m_minus1, sig.s, sig.k), (0, 2, 0, Some(0)));
        let sig = classify_pair(&j, &j.conjugate(), tol()).unwrap();
        assert_eq!((sig.m1, sig.m_minus1, sig.s), (2, 0, 0));
        assert_eq!(eigenspace_intersection_dims(&j, &j, tol()).unwrap(), (0, 2));
        assert_eq!(eigenspace_intersection_dims(&j, &j.conjugate(), tol()).unwrap(), (2, 0));
    }

    #[test]
    fn quaternionic_pair_signature() {
        let (a, b) = quaternion_pair();
        let sig = classify_pair(&a, &b, tol()).unwrap();
        assert_eq!((sig.m1, sig.m_minus1, sig.s, sig.k), (0, 0, 2, Some(1)));
        assert_eq!(rank_tol(&commutator(a.matrix(), b.matrix()), tol()), 4);
        let dec = canonical_decomposition(&a, &b, &Metric::identity(4), tol()).unwrap();
        assert_eq!(dec.blocks_e.len(), 1);
        assert!(dec.blocks_e[0].e.abs() < 1e-12);
        assert!((dec.blocks_e[0].f - 1.0).abs() < 1e-12);
        let jp = quaternionic_frame(&dec, BlockRef::E(0)).unwrap();
        let (jb, kb) = dec.block_matrices(BlockRef::E(0)).unwrap();
        assert!((&jp - &jb * &kb).norm() < 1e-12);
        assert!((&jp * &jp + Mat::identity(4, 4)).norm() < 1e-12);
        assert!(quaternionic_frame(&dec, BlockRef::Plus).is_err());
        assert!(quaternionic_frame(&dec, BlockRef::E(3)).is_err());
    }

    #[test]
    fn id_infinity_of_simple_pairs() {
        let j = ComplexStructure::standard(2);
        let g = Metric::identity(4);
        let d = decompose_id_infinity(&j, &j.conjugate(), &g, tol()).unwrap();
        assert_eq!(d.summands.len(), 1);
        assert_eq!(d.summands[0].poly, Poly::Linear { root: 1.0 });
        assert_eq!(d.summands[0].multiplicity, 2);
        let (a, b) = quaternion_pair();
        let d = decompose_id_infinity(&a, &b, &g, tol()).unwrap();
        assert_eq!(d.summands.len(), 1);
        let coeffs = d.summands[0].poly.coefficients();
        assert!((coeffs[1]).abs() < 1e-12 && (coeffs[2] - 1.0).abs() < 1e-12);
        assert_eq!(d.total_dim(), 4);
    }

    #[test]
    fn bundle_maps_for_equal_structures() {
        let j = ComplexStructure::standard(2);
        let r = bundle_map_ranks(&j, &j, tol()).unwrap();
        assert_eq!(r.ranks[0], 2);
        assert_eq!((r.ranks[1], r.ranks[3], r.ranks[4]), (0, 0, 0));
        let (a, b) = quaternion_pair();
        let r = bundle_map_ranks(&a, &b, tol()).unwrap();
        assert_eq!(r.ranks[4], 2);
        assert!(r.metric_identities_hold(1e-9));
        assert!(r.image_residuals.iter().all(|&x| x < 1e-10));
    }

    #[test]
    fn mismatched_dimensions() {
        let a = ComplexStructure::standard(1);
        let b = ComplexStructure::new(j0(2), None).unwrap();
        assert!(matches!(classify_pair(&a, &b, tol()), Err(StrataError::DimensionMismatch { .. })));
    }
}
