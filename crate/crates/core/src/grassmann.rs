//! The embedding `K -> V^{0,1}_K` into `Gr_n(V_C)`, maximal isotropics, graph
//! charts and the closed-form stratum dimensions.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, StrataError};
use crate::numerics::{column_space, intersect, rank_tol, singular_values, to_complex, CMat, Field, Subspace, Tolerance};
use crate::pair::eigenspaces;
use crate::structures::{gaussian, ComplexStructure, Metric};

/// `V^{0,1}_K`, the `-i` eigenspace of `K` on `V_C`.
pub fn mu(k: &ComplexStructure, tol: Tolerance) -> Subspace {
    eigenspaces(k.matrix(), tol).1
}

/// `|W^T g W|_F` for the bilinear extension of `g`.
pub fn isotropy_residual(w: &CMat, g: &Metric) -> f64 {
    (w.transpose() * to_complex(g.matrix()) * w).norm()
}

pub fn isotropy_bound(g: &Metric) -> f64 {
    1e-9 * g.matrix().norm().max(1.0)
}

pub fn is_maximal_isotropic(w: &Subspace, g: &Metric, _tol: Tolerance) -> Result<bool> {
    let n = w.ambient_dim / 2;
    if g.dim() != w.ambient_dim {
        return Err(StrataError::DimensionMismatch { expected: w.ambient_dim, found: g.dim() });
    }
    if w.dim() != n {
        return Err(StrataError::SubspaceDimension { expected: n, found: w.dim() });
    }
    Ok(isotropy_residual(&w.basis, g) <= isotropy_bound(g))
}

fn hcat(a: &CMat, b: &CMat) -> CMat {
    let mut m = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}

/// Hermitian complement of `inner` inside `outer`.
fn relative_complement(outer: &Subspace, inner: &Subspace, tol: Tolerance) -> Subspace {
    let n = outer.ambient_dim;
    let p = CMat::identity(n, n) - inner.projector();
    let mut s = column_space(&(p * &outer.basis), tol);
    s.field = Field::Complex;
    s
}

/// `V_C = (W1 ⊕ W2) ⊕ (W1' ⊕ W2')` with `W1 = V0 ∩ W` and `W1 ⊕ W2' = V0`.
#[derive(Debug, Clone)]
pub struct GraphChart {
    pub w: Subspace,
    pub wp: Subspace,
    pub w1: Subspace,
    pub w2: Subspace,
    /// The complement of `W + V0` (non-metric) or `conj(W1)` (metric).
    pub w1p: Subspace,
    pub w2p: Subspace,
    pub v0: Subspace,
    pub metric: Option<Metric>,
}

impl GraphChart {
    pub fn n(&self) -> usize {
        self.w.ambient_dim / 2
    }

    pub fn t(&self) -> usize {
        self.w1.dim()
    }

    pub fn basis_w(&self) -> CMat {
        hcat(&self.w1.basis, &self.w2.basis)
    }

    pub fn basis_wp(&self) -> CMat {
        hcat(&self.w1p.basis, &self.w2p.basis)
    }

    /// Bilinear pairing `B_W^T g B_W'`; block diagonal in metric mode.
    pub fn pairing(&self) -> Option<CMat> {
        self.metric
            .as_ref()
            .map(|g| self.basis_w().transpose() * to_complex(g.matrix()) * self.basis_wp())
    }

    /// `|g(conj W1, W2)|` in metric mode.
    pub fn conj_w1_w2_residual(&self) -> Option<f64> {
        self.metric.as_ref().map(|g| {
            (self.w1.basis.map(|c| c.conj()).transpose() * to_complex(g.matrix()) * &self.w2.basis).norm()
        })
    }
}

/// Chart about `W = mu(k)` relative to `V0 = mu(j_ref)`. With a metric the
/// splitting is `W1 = V^{0,1}_J ∩ V^{0,1}_K`, `W2 = Im(J-K)^{0,1}_K`,
/// `W1' = conj W1`, `W2' = Im(J-K)^{0,1}_J`.
pub fn build_chart(
    j_ref: &ComplexStructure,
    k: &ComplexStructure,
    g: Option<&Metric>,
    tol: Tolerance,
) -> Result<GraphChart> {
    if j_ref.dim() != k.dim() {
        return Err(StrataError::DimensionMismatch { expected: j_ref.dim(), found: k.dim() });
    }
    let dim = k.dim();
    let n = k.n();
    let (_, v0) = eigenspaces(j_ref.matrix(), tol);
    let (_, w) = eigenspaces(k.matrix(), tol);
    let chart = match g {
        None => {
            let w1 = intersect(&v0, &w, tol)?;
            let w2 = relative_complement(&w, &w1, tol);
            let w2p = relative_complement(&v0, &w1, tol);
            let w1p = w.sum(&v0, tol)?.complement(tol);
            let wp = w1p.sum(&w2p, tol)?;
            GraphChart { w, wp, w1, w2, w1p, w2p, v0, metric: None }
        }
        Some(g) => {
            if g.dim() != dim {
                return Err(StrataError::DimensionMismatch { expected: dim, found: g.dim() });
            }
            let tilde = Subspace::span(&(j_ref.matrix() - k.matrix()), tol).complexify();
            let w1 = intersect(&v0, &w, tol)?;
            let w2 = intersect(&tilde, &w, tol)?;
            let w2p = intersect(&tilde, &v0, tol)?;
            let w1p = w1.conj();
            let wp = w1p.sum(&w2p, tol)?;
            GraphChart { w, wp, w1, w2, w1p, w2p, v0, metric: Some(g.clone()) }
        }
    };
    let dims = [chart.w1.dim() + chart.w2.dim(), chart.w1p.dim() + chart.w2p.dim()];
    if dims != [n, n] || rank_tol(&hcat(&chart.basis_w(), &chart.basis_wp()), tol) != dim {
        return Err(StrataError::ChartMismatch);
    }
    Ok(chart)
}

/// Coefficients of `A : W -> W'` in the chart bases; rows `(W1', W2')`, columns `(W1, W2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartParams {
    pub alpha: CMat,
    pub t: usize,
}

impl ChartParams {
    pub fn zero(chart: &GraphChart) -> Self {
        ChartParams { alpha: CMat::zeros(chart.n(), chart.n()), t: chart.t() }
    }

    pub fn from_blocks(a1: CMat, a2: CMat, a3: CMat, a4: CMat) -> Result<Self> {
        let t = a1.nrows();
        let n = t + a4.nrows();
        let shapes_ok = a1.shape() == (t, t)
            && a2.shape() == (t, n - t)
            && a3.shape() == (n - t, t)
            && a4.shape() == (n - t, n - t);
        if !shapes_ok {
            return Err(StrataError::InvalidRequest("inconsistent chart block shapes".into()));
        }
        let mut alpha = CMat::zeros(n, n);
        alpha.view_mut((0, 0), (t, t)).copy_from(&a1);
        alpha.view_mut((0, t), (t, n - t)).copy_from(&a2);
        alpha.view_mut((t, 0), (n - t, t)).copy_from(&a3);
        alpha.view_mut((t, t), (n - t, n - t)).copy_from(&a4);
        Ok(ChartParams { alpha, t })
    }

    pub fn a1(&self) -> CMat {
        self.alpha.view((0, 0), (self.t, self.t)).into_owned()
    }

    pub fn a2(&self) -> CMat {
        let n = self.alpha.nrows();
        self.alpha.view((0, self.t), (self.t, n - self.t)).into_owned()
    }

    pub fn a3(&self) -> CMat {
        let n = self.alpha.nrows();
        self.alpha.view((self.t, 0), (n - self.t, self.t)).into_owned()
    }

    pub fn a4(&self) -> CMat {
        let n = self.alpha.nrows();
        self.alpha.view((self.t, self.t), (n - self.t, n - self.t)).into_owned()
    }
}

/// `|M + M^T| / max(1, |M|)` with `M = B_W^T g B_W' alpha`.
pub fn skewness_residual(chart: &GraphChart, params: &ChartParams) -> Option<f64> {
    chart.pairing().map(|p| {
        let m = p * &params.alpha;
        (&m + m.transpose()).norm() / m.norm().max(1.0)
    })
}

/// `Graph(A) = {w + Aw}`.
pub fn graph_point(chart: &GraphChart, params: &ChartParams, tol: Tolerance) -> Result<Subspace> {
    if params.alpha.shape() != (chart.n(), chart.n()) || params.t != chart.t() {
        return Err(StrataError::ChartMismatch);
    }
    if let Some(r) = skewness_residual(chart, params) {
        if r > 1e-10 {
            return Err(StrataError::SkewnessViolation(r));
        }
    }
    let cols = chart.basis_w() + chart.basis_wp() * &params.alpha;
    let mut s = column_space(&cols, tol);
    s.field = Field::Complex;
    Ok(s)
}

/// Inverse chart: the `A` whose graph is `u`, for `u` transverse to `W'`.
pub fn solve_chart(chart: &GraphChart, u: &Subspace) -> Result<ChartParams> {
    let n = chart.n();
    if u.dim() != n || u.ambient_dim != 2 * n {
        return Err(StrataError::SubspaceDimension { expected: n, found: u.dim() });
    }
    let full = hcat(&chart.basis_w(), &chart.basis_wp());
    let coeffs = full.lu().solve(&u.basis).ok_or(StrataError::ChartMismatch)?;
    let x = coeffs.view((0, 0), (n, n)).into_owned();
    let y = coeffs.view((n, 0), (n, n)).into_owned();
    let svals = crate::numerics::singular_values(&x);
    if svals.last().copied().unwrap_or(0.0) < 1e-8 * svals.first().copied().unwrap_or(1.0) {
        return Err(StrataError::OutOfRange("subspace is not transverse to W'".into()));
    }
    let x_inv = x.try_inverse().ok_or(StrataError::ChartMismatch)?;
    Ok(ChartParams { alpha: y * x_inv, t: chart.t() })
}

/// `dim(Graph(A) ∩ V0)`, checked against `dim ker a1`.
pub fn graph_intersection_dim(chart: &GraphChart, params: &ChartParams, v0: &Subspace, tol: Tolerance) -> Result<usize> {
    if v0.ambient_dim != chart.v0.ambient_dim || v0.distance(&chart.v0) > 1e-8 {
        return Err(StrataError::ChartMismatch);
    }
    let graph = graph_point(chart, params, tol)?;
    let intersection = intersect(&graph, v0, tol)?.dim();
    let a1 = params.a1();
    // rank of a1 is judged against the scale of the whole chart matrix
    let thr = tol.threshold(singular_values(&params.alpha).first().copied().unwrap_or(0.0));
    let ker = a1.ncols() - singular_values(&a1).iter().filter(|&&s| s > thr).count();
    if intersection != ker {
        return Err(StrataError::GraphLawViolation { intersection, kernel: ker });
    }
    Ok(intersection)
}

fn complex_gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    let re = gaussian(rows, cols, rng);
    let im = gaussian(rows, cols, rng);
    CMat::from_fn(rows, cols, |r, c| Complex64::new(re[(r, c)], im[(r, c)]))
}

/// Square matrix with exactly `nullity` zero singular values and the rest in `[0.5, 2]`.
fn engineered(size: usize, nullity: usize, rng: &mut ChaCha8Rng) -> CMat {
    if size == 0 {
        return CMat::zeros(0, 0);
    }
    let u = complex_gaussian(size, size, rng).qr().q();
    let v = complex_gaussian(size, size, rng).qr().q();
    let d = CMat::from_fn(size, size, |r, c| {
        if r == c && r >= nullity {
            Complex64::new(rng.random_range(0.5..2.0), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    u * d * v.adjoint()
}

/// Skew `size x size` matrix with kernel dimension exactly `nullity`
/// (which must share the parity of `size`), nonzero blocks of size in `[0.5, 2]`.
fn engineered_skew(size: usize, nullity: usize, rng: &mut ChaCha8Rng) -> CMat {
    let mut d = CMat::zeros(size, size);
    let mut i = nullity;
    while i + 1 < size {
        let x = Complex64::new(rng.random_range(0.5..2.0), 0.0);
        d[(i, i + 1)] = x;
        d[(i + 1, i)] = -x;
        i += 2;
    }
    // complex orthogonal change of basis preserves skewness: Q^T D Q
    let q = gaussian(size, size, rng).qr().q();
    let qc = to_complex(&q);
    qc.transpose() * d * qc
}

/// Random chart parameters with `dim ker a1 = nullity`. In metric mode
/// `nullity` must have the parity of `t`.
pub fn random_params(chart: &GraphChart, nullity: usize, scale: f64, rng: &mut ChaCha8Rng) -> Result<ChartParams> {
    let n = chart.n();
    let t = chart.t();
    if nullity > t {
        return Err(StrataError::OutOfRange(format!("nullity {nullity} exceeds t = {t}")));
    }
    match chart.pairing() {
        None => {
            let a1 = engineered(t, nullity, rng);
            let a2 = complex_gaussian(t, n - t, rng);
            let a3 = complex_gaussian(n - t, t, rng);
            let a4 = complex_gaussian(n - t, n - t, rng);
            let mut p = ChartParams::from_blocks(a1, a2, a3, a4)?;
            p.alpha *= Complex64::new(scale, 0.0);
            Ok(p)
        }
        Some(pairing) => {
            if !(t - nullity).is_multiple_of(2) {
                return Err(StrataError::OutOfRange(format!("nullity {nullity} has the wrong parity for t = {t}")));
            }
            let mut s = complex_gaussian(n, n, rng);
            s = (&s - s.transpose()) * Complex64::new(0.5, 0.0);
            let s11 = engineered_skew(t, nullity, rng);
            s.view_mut((0, 0), (t, t)).copy_from(&s11);
            s *= Complex64::new(scale, 0.0);
            let alpha = pairing.lu().solve(&s).ok_or(StrataError::ChartMismatch)?;
            Ok(ChartParams { alpha, t })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StratumKind {
    Gr { s: usize },
    Mi { s: usize },
    CM1 { m1: usize },
    TM1 { m1: usize },
    CPair { m1: usize, m_minus1: usize },
    TPair { m1: usize, m_minus1: usize },
}

/// Closed-form complex dimension of a stratum.
pub fn stratum_dim(kind: StratumKind, n: usize) -> Result<usize> {
    let tri = |x: usize| x * x.saturating_sub(1);
    let out = |msg: String| Err(StrataError::OutOfRange(msg));
    match kind {
        StratumKind::Gr { s } | StratumKind::Mi { s } | StratumKind::CM1 { m1: s } | StratumKind::TM1 { m1: s }
            if s > n =>
        {
            out(format!("{s} exceeds n = {n}"))
        }
        StratumKind::CPair { m1, m_minus1 } | StratumKind::TPair { m1, m_minus1 } if m1 + m_minus1 > n => {
            out(format!("m1 + m_minus1 = {} exceeds n = {n}", m1 + m_minus1))
        }
        StratumKind::TPair { m1, m_minus1 } if !(n - m1 - m_minus1).is_multiple_of(2) => {
            out(format!("n - m1 - m_minus1 = {} is odd", n - m1 - m_minus1))
        }
        StratumKind::Gr { s } | StratumKind::CM1 { m1: s } => Ok(n * n - s * s),
        StratumKind::Mi { s } | StratumKind::TM1 { m1: s } => Ok((tri(n) - tri(s)) / 2),
        StratumKind::CPair { m1, m_minus1 } => Ok(n * n - m1 * m1 - m_minus1 * m_minus1),
        StratumKind::TPair { m1, m_minus1 } => Ok((tri(n) - tri(m1) - tri(m_minus1)) / 2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(t: usize) -> Self {
        if t.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// `t = dim(V0 ∩ W)` and its parity, for maximal isotropic inputs.
pub fn mi_parity_class(w: &Subspace, v0: &Subspace, g: &Metric, tol: Tolerance) -> Result<(usize, Parity)> {
    for s in [w, v0] {
        if !is_maximal_isotropic(s, g, tol)? {
            return Err(StrataError::NotMaximalIsotropic(isotropy_residual(&s.basis, g)));
        }
    }
    let t = intersect(w, v0, tol)?.dim();
    Ok((t, Parity::of(t)))
}
