//! Explicit generators for every nonempty stratum, the two-dimensional
//! non-metric counterexample, and block assembly for fixtures.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StrataError};
use crate::numerics::Mat;
use crate::structures::{ComplexStructure, Metric};

pub const DEFAULT_R: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    /// All complex structures.
    C,
    /// Structures compatible with a fixed metric.
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumRequest {
    pub n: usize,
    pub m1: usize,
    pub m_minus1: usize,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub metric: bool,
}

fn default_r() -> f64 {
    DEFAULT_R
}

impl StratumRequest {
    pub fn new(n: usize, m1: usize, m_minus1: usize) -> Self {
        StratumRequest { n, m1, m_minus1, r: DEFAULT_R, metric: false }
    }

    pub fn with_r(self, r: f64) -> Self {
        StratumRequest { r, ..self }
    }

    /// Number of paired (non-kernel) complex directions.
    pub fn paired(&self) -> Result<usize> {
        if self.m1 + self.m_minus1 > self.n {
            return Err(StrataError::InvalidRequest(format!(
                "m1 + m_minus1 = {} exceeds n = {}",
                self.m1 + self.m_minus1,
                self.n
            )));
        }
        if !self.r.is_finite() || self.r == 0.0 || self.r.abs() == 1.0 {
            return Err(StrataError::InvalidR(self.r));
        }
        Ok(self.n - self.m1 - self.m_minus1)
    }

    pub fn is_feasible(&self, flavor: Flavor) -> bool {
        match (self.paired(), flavor) {
            (Ok(_), Flavor::C) => true,
            (Ok(p), Flavor::T) => p % 2 == 0,
            (Err(_), _) => false,
        }
    }

    /// Rotation data `(e, f)` replacing the scaling `r` in the metric case.
    pub fn rotation(&self) -> (f64, f64) {
        let r2 = self.r * self.r;
        ((r2 - 1.0) / (r2 + 1.0), 2.0 * self.r / (r2 + 1.0))
    }
}

/// Columns `(v1, J v1, ..., vn, J vn)`; `g`-orthonormal when a metric is given.
pub fn j_adapted_basis(j: &Mat, g: Option<&Metric>) -> Mat {
    let dim = j.nrows();
    let gm = g.map(|g| g.matrix().clone()).unwrap_or_else(|| Mat::identity(dim, dim));
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(dim);
    for i in 0..dim {
        if cols.len() == dim {
            break;
        }
        let mut v = DVector::from_fn(dim, |r, _| if r == i { 1.0 } else { 0.0 });
        // two passes of Gram-Schmidt against the current J-invariant span
        for _ in 0..2 {
            for c in &cols {
                let coef = (c.transpose() * &gm * &v)[(0, 0)] / (c.transpose() * &gm * c)[(0, 0)];
                v -= c * coef;
            }
        }
        let norm = (v.transpose() * &gm * &v)[(0, 0)].sqrt();
        if norm < 1e-8 {
            continue;
        }
        v /= norm;
        let jv = j * &v;
        cols.push(v);
        cols.push(jv);
    }
    Mat::from_columns(&cols)
}

fn eps() -> Mat {
    Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

fn place(big: &mut Mat, at: usize, block: &Mat) {
    big.view_mut((at, at), block.shape()).copy_from(block);
}

/// `K = -eJ + fJ'` on `(a, Ja, b, Jb)`, where `J'` sends `a -> b`, `b -> -a`,
/// `Ja -> -Jb`, `Jb -> Ja`.
pub fn quaternionic_block(e: f64, f: f64) -> Mat {
    let mut jb = Mat::zeros(4, 4);
    place(&mut jb, 0, &eps());
    place(&mut jb, 2, &eps());
    let mut jp = Mat::zeros(4, 4);
    jp[(2, 0)] = 1.0;
    jp[(0, 2)] = -1.0;
    jp[(3, 1)] = -1.0;
    jp[(1, 3)] = 1.0;
    jb * (-e) + jp * f
}

fn check_j(j: &ComplexStructure, req: &StratumRequest) -> Result<()> {
    if j.n() != req.n {
        return Err(StrataError::DimensionMismatch { expected: 2 * req.n, found: j.dim() });
    }
    Ok(())
}

/// Element of `C^{(m1, m_minus1)}(J)`: `K = -J` on `V_1`, `K = J` on `V_-1`,
/// and `K v = -r Jv`, `K Jv = v / r` on the remaining pairs.
pub fn construct_c_element(j: &ComplexStructure, req: &StratumRequest) -> Result<ComplexStructure> {
    check_j(j, req)?;
    req.paired()?;
    let b = j_adapted_basis(j.matrix(), None);
    let dim = j.dim();
    let mut kb = Mat::zeros(dim, dim);
    let scaled = Mat::from_row_slice(2, 2, &[0.0, 1.0 / req.r, -req.r, 0.0]);
    for p in 0..req.n {
        let block = if p < req.m1 {
            -eps()
        } else if p < req.m1 + req.m_minus1 {
            eps()
        } else {
            scaled.clone()
        };
        place(&mut kb, 2 * p, &block);
    }
    let b_inv = b.clone().try_inverse().ok_or(StrataError::NonFinite)?;
    ComplexStructure::new(&b * kb * b_inv, None)
}

/// Element of `T^{(m1, m_minus1)}(J)` for a `g`-compatible `J`: the paired
/// directions are grouped into quaternionic 4-blocks with `{J,K} = 2e`.
pub fn construct_t_element(j: &ComplexStructure, g: &Metric, req: &StratumRequest) -> Result<ComplexStructure> {
    check_j(j, req)?;
    let j = j.with_metric(g.clone())?;
    let paired = req.paired()?;
    if paired % 2 != 0 {
        return Err(StrataError::ParityViolation(paired));
    }
    let (e, f) = req.rotation();
    let b = j_adapted_basis(j.matrix(), Some(g));
    let dim = j.dim();
    let mut kb = Mat::zeros(dim, dim);
    for p in 0..req.m1 {
        place(&mut kb, 2 * p, &-eps());
    }
    for p in req.m1..req.m1 + req.m_minus1 {
        place(&mut kb, 2 * p, &eps());
    }
    let q = quaternionic_block(e, f);
    for t in 0..paired / 2 {
        place(&mut kb, 2 * (req.m1 + req.m_minus1) + 4 * t, &q);
    }
    // b is g-orthonormal, so b^{-1} = b^T g
    let b_inv = b.transpose() * g.matrix();
    ComplexStructure::new(&b * kb * b_inv, Some(g.clone()))
}

/// `J v1 = v2`, `K v1 = -r v2`, `K v2 = v1 / r` with `r = 2`.
pub fn counterexample_pair() -> (ComplexStructure, ComplexStructure) {
    let r = DEFAULT_R;
    let j = Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let k = Mat::from_row_slice(2, 2, &[0.0, 1.0 / r, -r, 0.0]);
    (
        ComplexStructure::new(j, None).expect("standard rotation"),
        ComplexStructure::new(k, None).expect("squares to -1"),
    )
}

/// Left multiplication by `i` and `j` on the quaternions, basis `(1, i, j, k)`, `g = I`.
pub fn quaternion_pair() -> (ComplexStructure, ComplexStructure) {
    let li = Mat::from_row_slice(4, 4, &[
        0., -1., 0., 0., //
        1., 0., 0., 0., //
        0., 0., 0., -1., //
        0., 0., 1., 0.,
    ]);
    let lj = Mat::from_row_slice(4, 4, &[
        0., 0., -1., 0., //
        0., 0., 0., 1., //
        1., 0., 0., 0., //
        0., -1., 0., 0.,
    ]);
    let g = Metric::identity(4);
    (
        ComplexStructure::new(li, Some(g.clone())).expect("left i"),
        ComplexStructure::new(lj, Some(g)).expect("left j"),
    )
}

/// Metric pair on `R^{sum dims + 2 m1 + 2 m_minus1}` with `g = I`: quaternionic
/// blocks first, then `m1` pairs with `K = -J`, then `m_minus1` pairs with `K = J`.
pub fn assemble_block_pair(
    blocks: &[(f64, usize)],
    m1: usize,
    m_minus1: usize,
) -> Result<(ComplexStructure, ComplexStructure, Metric)> {
    for &(e, d) in blocks {
        if d == 0 || d % 4 != 0 {
            return Err(StrataError::InvalidBlockSpec(format!("block dimension {d} is not a positive multiple of 4")));
        }
        if e.is_nan() || e.abs() >= 1.0 {
            return Err(StrataError::InvalidBlockSpec(format!("e = {e} outside (-1, 1)")));
        }
    }
    let dim = blocks.iter().map(|b| b.1).sum::<usize>() + 2 * (m1 + m_minus1);
    if dim == 0 {
        return Err(StrataError::InvalidBlockSpec("empty specification".into()));
    }
    let mut j = Mat::zeros(dim, dim);
    let mut k = Mat::zeros(dim, dim);
    let mut at = 0;
    for &(e, d) in blocks {
        let f = (1.0 - e * e).sqrt();
        for _ in 0..d / 4 {
            place(&mut j, at, &eps());
            place(&mut j, at + 2, &eps());
            place(&mut k, at, &quaternionic_block(e, f));
            at += 4;
        }
    }
    for p in 0..m1 + m_minus1 {
        place(&mut j, at, &eps());
        place(&mut k, at, &if p < m1 { -eps() } else { eps() });
        at += 2;
    }
    let g = Metric::identity(dim);
    Ok((
        ComplexStructure::new(j, Some(g.clone()))?,
        ComplexStructure::new(k, Some(g.clone()))?,
        g,
    ))
}
