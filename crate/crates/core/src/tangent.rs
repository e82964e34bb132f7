//! Tangent spaces to the strata inside `T_K C = gl_K` and `T_K T = o_K`,
//! transversality, and the exponential chart `psi(A, B) = e^A e^B . K`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::constructors::Flavor;
use crate::error::{Result, StrataError};
use crate::numerics::{anticommutator, column_space, commutator, expm, kernel, rank_tol, singular_values, Mat, Tolerance};
use crate::pair::{canonical_decomposition, classify_pair, StratumSignature};
use crate::structures::{ComplexStructure, Metric};

/// Frobenius-orthonormal basis of a real matrix subspace.
pub type MatBasis = Vec<Mat>;

fn vectorize(m: &Mat) -> Vec<f64> {
    m.iter().copied().collect()
}

type LinearCond = Box<dyn Fn(&Mat) -> Mat>;

fn unvectorize(v: &[f64], rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v)
}

/// Orthonormal basis of the span of `mats`.
pub fn span_basis(mats: &[Mat], tol: Tolerance) -> MatBasis {
    let Some(first) = mats.first() else { return Vec::new() };
    let (r, c) = first.shape();
    let cols: Vec<Vec<f64>> = mats.iter().map(vectorize).collect();
    let m = Mat::from_fn(r * c, cols.len(), |i, j| cols[j][i]);
    let sp = column_space(&m, tol).real_basis().expect("real input");
    (0..sp.ncols())
        .map(|j| unvectorize(sp.column(j).as_slice(), r, c))
        .collect()
}

/// Elements of `span(basis)` annihilated by every condition.
pub fn restrict(basis: &[Mat], conds: &[&dyn Fn(&Mat) -> Mat], tol: Tolerance) -> MatBasis {
    if basis.is_empty() {
        return Vec::new();
    }
    if conds.is_empty() {
        return basis.to_vec();
    }
    let images: Vec<Vec<f64>> = basis
        .iter()
        .map(|b| conds.iter().flat_map(|c| vectorize(&c(b))).collect())
        .collect();
    let rows = images[0].len();
    let m = Mat::from_fn(rows, basis.len(), |i, j| images[j][i]);
    let ker = kernel(&m, tol).real_basis().expect("real input");
    let (r, c) = basis[0].shape();
    (0..ker.ncols())
        .map(|col| {
            basis
                .iter()
                .enumerate()
                .fold(Mat::zeros(r, c), |acc, (i, b)| acc + b * ker[(i, col)])
        })
        .collect()
}

fn units(dim: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut e = Mat::zeros(dim, dim);
            e[(i, j)] = 1.0;
            out.push(e);
        }
    }
    out
}

/// Basis of `o(V, g) = { A : A^T g + g A = 0 }`.
pub fn o_basis(g: &Metric, tol: Tolerance) -> MatBasis {
    let dim = g.dim();
    let gi = g.inverse();
    let mut out = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            let mut s = Mat::zeros(dim, dim);
            s[(i, j)] = 1.0;
            s[(j, i)] = -1.0;
            out.push(&gi * s);
        }
    }
    span_basis(&out, tol)
}

/// `{A : {A,K} = 0}` as the image of `A -> (A + KAK)/2`.
pub fn gl_k_basis(k: &Mat, tol: Tolerance) -> MatBasis {
    let imgs: Vec<Mat> = units(k.nrows()).iter().map(|a| (a + k * a * k) * 0.5).collect();
    span_basis(&imgs, tol)
}

pub fn o_k_basis(k: &Mat, g: &Metric, tol: Tolerance) -> MatBasis {
    let imgs: Vec<Mat> = o_basis(g, tol).iter().map(|a| (a + k * a * k) * 0.5).collect();
    span_basis(&imgs, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Which {
    /// Tangent to the stratum with fixed `m1`.
    M1Star,
    /// Tangent to the stratum with fixed `m_minus1`.
    StarM1,
    Pair,
}

#[derive(Debug, Clone)]
pub struct TangentModel {
    pub flavor: Flavor,
    pub which: Which,
    pub ambient: MatBasis,
    pub stratum_basis: MatBasis,
    /// Real codimension.
    pub codim: usize,
}

impl TangentModel {
    pub fn ambient_complex_dim(&self) -> usize {
        self.ambient.len() / 2
    }

    pub fn stratum_complex_dim(&self) -> usize {
        self.stratum_basis.len() / 2
    }

    pub fn complex_codim(&self) -> usize {
        self.codim / 2
    }

    /// `max |{A,K}|` over the stratum basis.
    pub fn anticommutation_residual(&self, k: &Mat) -> f64 {
        self.stratum_basis.iter().map(|a| anticommutator(a, k).norm()).fold(0.0, f64::max)
    }
}

fn real_kernel(m: &Mat, tol: Tolerance) -> Mat {
    kernel(m, tol).real_basis().expect("real input")
}

fn signs(which: Which) -> &'static [f64] {
    match which {
        Which::M1Star => &[1.0],
        Which::StarM1 => &[-1.0],
        Which::Pair => &[1.0, -1.0],
    }
}

/// `A ker(J±K) ⊆ Im(J±K)` inside `gl_K`.
pub fn tangent_basis_c(j: &ComplexStructure, k: &ComplexStructure, which: Which, tol: Tolerance) -> Result<TangentModel> {
    classify_pair(j, k, tol)?;
    let (jm, km) = (j.matrix(), k.matrix());
    let ambient = gl_k_basis(km, tol);
    let mut data = Vec::new();
    for &sg in signs(which) {
        let sum = jm + km * sg;
        data.push((real_kernel(&sum.transpose(), tol), real_kernel(&sum, tol)));
    }
    let conds: Vec<LinearCond> = data
        .into_iter()
        .map(|(l, n)| Box::new(move |a: &Mat| l.transpose() * a * &n) as LinearCond)
        .collect();
    let refs: Vec<&dyn Fn(&Mat) -> Mat> = conds.iter().map(|c| c.as_ref()).collect();
    let stratum_basis = restrict(&ambient, &refs, tol);
    let codim = ambient.len() - stratum_basis.len();
    Ok(TangentModel { flavor: Flavor::C, which, ambient, stratum_basis, codim })
}

/// `P_{±1} A P_{±1} = 0` inside `o_K`.
pub fn tangent_basis_t(
    j: &ComplexStructure,
    k: &ComplexStructure,
    g: &Metric,
    which: Which,
    tol: Tolerance,
) -> Result<TangentModel> {
    let j = j.with_metric(g.clone())?;
    let k = k.with_metric(g.clone())?;
    classify_pair(&j, &k, tol)?;
    let (jm, km) = (j.matrix(), k.matrix());
    let ambient = o_k_basis(km, g, tol);
    let gm = g.matrix().clone();
    let mut data = Vec::new();
    for &sg in signs(which) {
        data.push(real_kernel(&(jm + km * sg), tol));
    }
    let conds: Vec<LinearCond> = data
        .into_iter()
        .map(|n| {
            let gm = gm.clone();
            Box::new(move |a: &Mat| n.transpose() * &gm * a * &n) as LinearCond
        })
        .collect();
    let refs: Vec<&dyn Fn(&Mat) -> Mat> = conds.iter().map(|c| c.as_ref()).collect();
    let stratum_basis = restrict(&ambient, &refs, tol);
    let codim = ambient.len() - stratum_basis.len();
    Ok(TangentModel { flavor: Flavor::T, which, ambient, stratum_basis, codim })
}

pub fn tangent_model(
    j: &ComplexStructure,
    k: &ComplexStructure,
    flavor: Flavor,
    g: Option<&Metric>,
    which: Which,
    tol: Tolerance,
) -> Result<TangentModel> {
    match (flavor, g) {
        (Flavor::C, _) => tangent_basis_c(j, k, which, tol),
        (Flavor::T, Some(g)) => tangent_basis_t(j, k, g, which, tol),
        (Flavor::T, None) => Err(StrataError::MetricRequired("metric tangent model".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transversality {
    pub holds: bool,
    pub defect: usize,
}

/// Whether the `(m1,*)` and `(*,m_minus1)` tangents span the ambient tangent space.
pub fn check_transversality(
    j: &ComplexStructure,
    k: &ComplexStructure,
    flavor: Flavor,
    g: Option<&Metric>,
    tol: Tolerance,
) -> Result<Transversality> {
    let a = tangent_model(j, k, flavor, g, Which::M1Star, tol)?;
    let b = tangent_model(j, k, flavor, g, Which::StarM1, tol)?;
    let mut all = a.stratum_basis.clone();
    all.extend(b.stratum_basis.iter().cloned());
    let span = span_basis(&all, tol).len();
    let defect = a.ambient.len().saturating_sub(span);
    Ok(Transversality { holds: defect == 0, defect })
}

/// Largest of the `2 m1` smallest singular values of `J ± K(t)` along the
/// curve `K(t) = e^{-tAK/2} K e^{tAK/2}` with initial velocity `A`.
pub fn first_order_drift(j: &Mat, k: &Mat, a: &Mat, sign: f64, kernel_dim: usize, t: f64) -> Result<f64> {
    if kernel_dim == 0 {
        return Ok(0.0);
    }
    let x = a * k * (-0.5 * t);
    let kt = expm(&x)? * k * expm(&(-x))?;
    let s = singular_values(&(j + kt * sign));
    Ok(s[s.len() - kernel_dim])
}

fn neg_trace_pairing(a: &Mat, b: &Mat) -> f64 {
    -(a * b).trace()
}

#[derive(Debug, Clone)]
pub struct PsiChart {
    pub j: Mat,
    pub k: Mat,
    pub metric: Metric,
    pub signature: StratumSignature,
    pub u_j: MatBasis,
    pub u_k: MatBasis,
    pub u_jk: MatBasis,
    pub dj_basis: MatBasis,
    pub joint_basis: MatBasis,
    pub b0: MatBasis,
    pub b1: MatBasis,
    pub bm1: MatBasis,
    pub p1: Mat,
    pub pm1: Mat,
    pub p0: Mat,
    /// `max |tr(a b)|` between `u_J + u_K` and the joint algebra.
    pub orthogonality_residual: f64,
    /// `max |tr(a b)|` between `D_J` and `u_J ∩ u_K`.
    pub complement_residual: f64,
    pub o_dim: usize,
    pub sum_dim: usize,
}

impl PsiChart {
    pub fn domain_dim(&self) -> usize {
        self.dj_basis.len() + self.joint_basis.len()
    }

    /// `D_J + joint` has the dimension of the twistor space, and the asserted
    /// splitting of `o(V,g)` is orthogonal and exhaustive.
    pub fn consistent(&self, bound: f64) -> bool {
        let n = self.j.nrows() / 2;
        self.domain_dim() == n * (n - 1)
            && self.sum_dim + self.joint_basis.len() == self.o_dim
            && self.b0.len() + self.b1.len() + self.bm1.len() == self.joint_basis.len()
            && self.orthogonality_residual <= bound
            && self.complement_residual <= bound
    }

    /// Split of `B` into `(P0 B P0, P1 B P1, P-1 B P-1)`.
    pub fn split(&self, b: &Mat) -> (Mat, Mat, Mat) {
        (&self.p0 * b * &self.p0, &self.p1 * b * &self.p1, &self.pm1 * b * &self.pm1)
    }
}

pub fn build_psi_chart(j: &ComplexStructure, k: &ComplexStructure, g: &Metric, tol: Tolerance) -> Result<PsiChart> {
    let j = j.with_metric(g.clone())?;
    let k = k.with_metric(g.clone())?;
    let signature = classify_pair(&j, &k, tol)?;
    let dec = canonical_decomposition(&j, &k, g, tol)?;
    let (jm, km) = (j.matrix().clone(), k.matrix().clone());
    let o = o_basis(g, tol);
    let cj = |a: &Mat| commutator(a, &jm);
    let ck = |a: &Mat| commutator(a, &km);
    let aj = |a: &Mat| anticommutator(a, &jm);
    let ak = |a: &Mat| anticommutator(a, &km);
    let u_j = restrict(&o, &[&cj], tol);
    let u_k = restrict(&o, &[&ck], tol);
    let u_jk = restrict(&o, &[&cj, &ck], tol);
    let ujk = u_jk.clone();
    let perp = move |a: &Mat| Mat::from_iterator(ujk.len(), 1, ujk.iter().map(|c| neg_trace_pairing(a, c)));
    let dj_basis = restrict(&u_j, &[&perp], tol);
    let joint_basis = restrict(&o, &[&aj, &ak], tol);
    let block = |p: &Mat| {
        let p = p.clone();
        let c = move |a: &Mat| a - &p * a * &p;
        restrict(&joint_basis, &[&c], tol)
    };
    let b0 = block(&dec.p0);
    let b1 = block(&dec.p1);
    let bm1 = block(&dec.pm1);
    let mut both = u_j.clone();
    both.extend(u_k.iter().cloned());
    let sum_dim = span_basis(&both, tol).len();
    let orthogonality_residual = both
        .iter()
        .flat_map(|a| joint_basis.iter().map(move |b| neg_trace_pairing(a, b).abs()))
        .fold(0.0, f64::max);
    let complement_residual = dj_basis
        .iter()
        .flat_map(|a| u_jk.iter().map(move |b| neg_trace_pairing(a, b).abs()))
        .fold(0.0, f64::max);
    Ok(PsiChart {
        j: jm,
        k: km,
        metric: g.clone(),
        signature,
        o_dim: o.len(),
        sum_dim,
        u_j,
        u_k,
        u_jk,
        dj_basis,
        joint_basis,
        b0,
        b1,
        bm1,
        p1: dec.p1,
        pm1: dec.pm1,
        p0: dec.p0,
        orthogonality_residual,
        complement_residual,
    })
}

/// `e^A e^B K e^{-B} e^{-A}`.
pub fn psi(chart: &PsiChart, a: &Mat, b: &Mat) -> Result<ComplexStructure> {
    let ea = expm(a)?;
    let eb = expm(b)?;
    let ema = expm(&(-a))?;
    let emb = expm(&(-b))?;
    let k = &ea * &eb * &chart.k * emb * ema;
    ComplexStructure::new(k, Some(chart.metric.clone()))
}

pub fn combine(basis: &[Mat], coeffs: &[f64]) -> Mat {
    let (r, c) = basis.first().map(|b| b.shape()).unwrap_or((0, 0));
    basis.iter().zip(coeffs).fold(Mat::zeros(r, c), |acc, (b, x)| acc + b * *x)
}

/// Gaussian combination of `basis`, scaled to Frobenius norm `norm` (zero if the basis is empty).
pub fn random_element(basis: &[Mat], norm: f64, rng: &mut ChaCha8Rng) -> Option<Mat> {
    if basis.is_empty() {
        return None;
    }
    let coeffs: Vec<f64> = basis.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let m = combine(basis, &coeffs);
    let nm = m.norm();
    Some(m * (norm / nm))
}

pub const DEFAULT_SCALES: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, Serialize)]
pub struct ScaleSample {
    pub t: f64,
    pub m1: usize,
    pub m_minus1: usize,
    /// Whether kernel drift stays 10x above the rank threshold.
    pub guard_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiClassification {
    pub samples: Vec<ScaleSample>,
    pub b1_zero: bool,
    pub bm1_zero: bool,
    /// `None` when the last three scales disagree.
    pub stays_plus: Option<bool>,
    pub stays_minus: Option<bool>,
}

impl PsiClassification {
    /// Observed behaviour matches "stays iff the block vanishes" for both signs.
    pub fn matches_criterion(&self) -> bool {
        self.stays_plus == Some(self.b1_zero) && self.stays_minus == Some(self.bm1_zero)
    }
}

fn smallest_nonzero_sv(m: &Mat, tol: Tolerance) -> Option<f64> {
    let s = singular_values(m);
    let thr = tol.threshold(s.first().copied().unwrap_or(0.0));
    s.into_iter().rfind(|&x| x > thr)
}

/// Scale sweep `psi(A, tB)`; "stays" means `m1` (resp. `m_minus1`) is unchanged.
pub fn psi_stratum_classification(
    chart: &PsiChart,
    a: &Mat,
    b: &Mat,
    scales: &[f64],
    tol: Tolerance,
) -> Result<PsiClassification> {
    let (_, b1, bm1) = chart.split(b);
    let zero_bound = 1e-12 * b.norm().max(1.0);
    let b1_zero = b1.norm() <= zero_bound;
    let bm1_zero = bm1.norm() <= zero_bound;
    let sig0 = chart.signature;
    let jc = ComplexStructure::new(chart.j.clone(), Some(chart.metric.clone()))?;
    let mut samples = Vec::with_capacity(scales.len());
    for &t in scales {
        let kt = psi(chart, a, &(b * t))?;
        let sig = classify_pair(&jc, &kt, tol)?;
        let mut guard_ok = true;
        for (blk, zero) in [(&b1, b1_zero), (&bm1, bm1_zero)] {
            if !zero {
                let sigma = smallest_nonzero_sv(blk, tol).unwrap_or(0.0);
                let thr = tol.threshold(2.0 * chart.j.norm().max(1.0));
                guard_ok &= 2.0 * t * sigma >= 10.0 * thr;
            }
        }
        samples.push(ScaleSample { t, m1: sig.m1, m_minus1: sig.m_minus1, guard_ok });
    }
    let tail: Vec<&ScaleSample> = samples.iter().rev().take(3).collect();
    let settle = |f: &dyn Fn(&ScaleSample) -> bool| -> Option<bool> {
        if tail.is_empty() || tail.iter().any(|s| !s.guard_ok) {
            return None;
        }
        let first = f(tail[0]);
        tail.iter().all(|s| f(s) == first).then_some(first)
    };
    let stays_plus = settle(&|s| s.m1 == sig0.m1);
    let stays_minus = settle(&|s| s.m_minus1 == sig0.m_minus1);
    Ok(PsiClassification { samples, b1_zero, bm1_zero, stays_plus, stays_minus })
}

/// Rank of the union of two bases, as a transversality defect helper.
pub fn union_rank(a: &[Mat], b: &[Mat], tol: Tolerance) -> usize {
    let mut all = a.to_vec();
    all.extend(b.iter().cloned());
    if all.is_empty() {
        return 0;
    }
    let cols: Vec<Vec<f64>> = all.iter().map(vectorize).collect();
    let m = Mat::from_fn(cols[0].len(), cols.len(), |i, j| cols[j][i]);
    rank_tol(&m, tol)
}
