//! Sampled structure fields on a lattice patch of `[0,1]^d`.
//!
//! The bundle is trivialized and carries the flat connection, so `nabla_v`
//! is a directional finite difference. Interior stencils are central and
//! `O(h^2)`; boundary stencils fall back to one-sided `O(h)` and are flagged.

mod fixtures;
mod forms;
mod io;
mod poisson;
mod strata;

pub use fixtures::{fixture, Fixture};
pub use forms::{
    admissible_three_form, motivational_identity_check, motivational_residuals, pure_three_form,
    three_form_type_check, three_form_type_residual, MotivationalReport, TYPE_TOL,
};
pub use io::{read_field, write_field, Encoding, FieldHeader, FORMAT_NAME, FORMAT_VERSION};
pub use poisson::{
    bivector, poisson_suite, BivectorKind, Bivector, BoundEntry, JacobiEntry, PointRanks, PoissonReport,
};
pub use strata::{
    box_dimension, exclusion_report, stratum_map, ComponentInfo, ExclusionEntry, ExclusionReport, StratumMap,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StrataError};
use crate::numerics::{Mat, Tolerance};
use crate::pair::canonical_decomposition;
use crate::structures::{ComplexStructure, Metric};

/// Axis-aligned lattice `origin + h * idx`, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    shape: Vec<usize>,
    h: f64,
    origin: Vec<f64>,
}

impl Grid {
    pub fn new(shape: Vec<usize>, h: f64, origin: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 || shape.len() != origin.len() {
            return Err(StrataError::InvalidRequest(format!(
                "grid needs 1 to 4 axes with matching origin, got shape {shape:?} origin {origin:?}"
            )));
        }
        if shape.iter().any(|&s| s < 3) {
            return Err(StrataError::InvalidRequest("grid needs at least 3 points per axis".into()));
        }
        if !(h.is_finite() && h > 0.0) || origin.iter().any(|o| !o.is_finite()) {
            return Err(StrataError::InvalidRequest(format!("invalid spacing {h}")));
        }
        for (&s, &o) in shape.iter().zip(&origin) {
            let end = o + (s - 1) as f64 * h;
            if o < -1e-9 || end > 1.0 + 1e-9 {
                return Err(StrataError::OutOfRange(format!("axis [{o}, {end}] leaves [0, 1]")));
            }
        }
        Ok(Grid { shape, h, origin })
    }

    /// `points` samples per axis covering `[0,1]^d`.
    pub fn unit(d: usize, points: usize) -> Result<Self> {
        if points < 3 {
            return Err(StrataError::InvalidRequest("grid needs at least 3 points per axis".into()));
        }
        Grid::new(vec![points; d], 1.0 / (points - 1) as f64, vec![0.0; d])
    }

    /// Cube of side `2 * half + 1` centred on `center`.
    pub fn patch(center: &[f64], half: usize, h: f64) -> Result<Self> {
        let origin = center.iter().map(|c| c - half as f64 * h).collect();
        Grid::new(vec![2 * half + 1; center.len()], h, origin)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    pub fn multi_index(&self, p: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| (p / self.stride(a)) % self.shape[a]).collect()
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().enumerate().map(|(a, &i)| i * self.stride(a)).sum()
    }

    pub fn coords(&self, p: usize) -> Vec<f64> {
        self.multi_index(p).iter().zip(&self.origin).map(|(&i, &o)| o + i as f64 * self.h).collect()
    }

    pub fn neighbor(&self, p: usize, axis: usize, forward: bool) -> Option<usize> {
        let i = (p / self.stride(axis)) % self.shape[axis];
        match forward {
            true if i + 1 < self.shape[axis] => Some(p + self.stride(axis)),
            false if i > 0 => Some(p - self.stride(axis)),
            _ => None,
        }
    }

    pub fn neighbors(&self, p: usize) -> Vec<usize> {
        (0..self.dim())
            .flat_map(|a| [self.neighbor(p, a, false), self.neighbor(p, a, true)])
            .flatten()
            .collect()
    }

    pub fn is_interior(&self, p: usize) -> bool {
        self.multi_index(p).iter().zip(&self.shape).all(|(&i, &s)| i > 0 && i + 1 < s)
    }

    /// Index of the sample nearest the patch centre.
    pub fn center(&self) -> usize {
        let idx: Vec<usize> = self.shape.iter().map(|s| s / 2).collect();
        self.linear_index(&idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    J,
    K,
}

/// Per-point `(J, K, g, H)` on a grid, with a constant base structure `I`.
#[derive(Debug, Clone)]
pub struct StructureField {
    grid: Grid,
    j: Vec<ComplexStructure>,
    k: Vec<ComplexStructure>,
    three_form: Option<Vec<Vec<f64>>>,
    base: Option<Mat>,
    integrable: Vec<BivectorKind>,
}

impl StructureField {
    /// Validates every sample; `g`, when given, must be compatible with both structures.
    pub fn new(grid: Grid, j: Vec<Mat>, k: Vec<Mat>, g: Option<Vec<Mat>>) -> Result<Self> {
        let len = grid.len();
        for found in [Some(j.len()), Some(k.len()), g.as_ref().map(Vec::len)].into_iter().flatten() {
            if found != len {
                return Err(StrataError::DimensionMismatch { expected: len, found });
            }
        }
        let dim = j.first().map(|m| m.nrows()).unwrap_or(0);
        let metrics: Option<Vec<Metric>> = match g {
            Some(g) => Some(g.into_iter().map(Metric::new).collect::<Result<_>>()?),
            None => None,
        };
        let build = |p: usize, m: &Mat| -> Result<ComplexStructure> {
            if m.nrows() != dim {
                return Err(StrataError::DimensionMismatch { expected: dim, found: m.nrows() });
            }
            ComplexStructure::new(m.clone(), metrics.as_ref().map(|g| g[p].clone()))
        };
        let j = j.par_iter().enumerate().map(|(p, m)| build(p, m)).collect::<Result<Vec<_>>>()?;
        let k = k.par_iter().enumerate().map(|(p, m)| build(p, m)).collect::<Result<Vec<_>>>()?;
        Ok(StructureField { grid, j, k, three_form: None, base: None, integrable: Vec::new() })
    }

    /// Constant `J` and metric, `K` sampled from `k_of`.
    pub fn from_fn<F>(grid: Grid, j: Mat, g: Option<Mat>, k_of: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Mat + Sync,
    {
        let len = grid.len();
        let k: Vec<Mat> = (0..len).into_par_iter().map(|p| k_of(&grid.coords(p))).collect();
        StructureField::new(grid, vec![j; len], k, g.map(|g| vec![g; len]))
    }

    pub fn with_three_form(mut self, h: Vec<Vec<f64>>) -> Result<Self> {
        if h.len() != self.grid.len() {
            return Err(StrataError::DimensionMismatch { expected: self.grid.len(), found: h.len() });
        }
        let d = self.fiber_dim();
        for t in &h {
            forms::check_antisymmetric(t, d)?;
        }
        self.three_form = Some(h);
        Ok(self)
    }

    pub fn with_constant_three_form(self, h: Vec<f64>) -> Result<Self> {
        let len = self.grid.len();
        self.with_three_form(vec![h; len])
    }

    /// `I` acts on base directions: `nabla_{I v} = sum_b I[b][a] d_b` for `v = e_a`.
    pub fn with_base(mut self, i: Mat) -> Result<Self> {
        let d = self.grid.dim();
        if !d.is_multiple_of(2) {
            return Err(StrataError::OddBaseDimension(d));
        }
        if i.shape() != (d, d) {
            return Err(StrataError::DimensionMismatch { expected: d, found: i.nrows() });
        }
        ComplexStructure::new(i.clone(), None)?;
        self.base = Some(i);
        Ok(self)
    }

    /// Bivectors that satisfy the Jacobi identity by construction.
    pub fn declare_integrable(mut self, kinds: &[BivectorKind]) -> Self {
        self.integrable = kinds.to_vec();
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn fiber_dim(&self) -> usize {
        self.j[0].dim()
    }

    pub fn n(&self) -> usize {
        self.j[0].n()
    }

    pub fn j(&self, p: usize) -> &ComplexStructure {
        &self.j[p]
    }

    pub fn k(&self, p: usize) -> &ComplexStructure {
        &self.k[p]
    }

    pub fn structure(&self, target: Target, p: usize) -> &ComplexStructure {
        match target {
            Target::J => &self.j[p],
            Target::K => &self.k[p],
        }
    }

    pub fn metric(&self, p: usize) -> Option<&Metric> {
        self.j[p].metric()
    }

    pub fn has_metric(&self) -> bool {
        self.j[0].metric().is_some()
    }

    pub fn three_form(&self, p: usize) -> Option<&[f64]> {
        self.three_form.as_ref().map(|h| h[p].as_slice())
    }

    pub fn base(&self) -> Option<&Mat> {
        self.base.as_ref()
    }

    pub fn integrable(&self) -> &[BivectorKind] {
        &self.integrable
    }
}

/// Finite-difference derivative; `one_sided` marks an `O(h)` boundary stencil.
#[derive(Debug, Clone)]
pub struct Derivative {
    pub value: Mat,
    pub one_sided: bool,
}

pub(crate) fn axis_difference<'a, F>(grid: &Grid, at: F, p: usize, axis: usize) -> (Mat, bool)
where
    F: Fn(usize) -> &'a Mat,
{
    let h = grid.h();
    match (grid.neighbor(p, axis, false), grid.neighbor(p, axis, true)) {
        (Some(a), Some(b)) => ((at(b) - at(a)) / (2.0 * h), false),
        (None, Some(b)) => ((at(b) - at(p)) / h, true),
        (Some(a), None) => ((at(p) - at(a)) / h, true),
        (None, None) => unreachable!("grid axes carry at least 3 points"),
    }
}

fn check_direction(field: &StructureField, p: usize, dir: &[f64]) -> Result<()> {
    if dir.len() != field.grid.dim() {
        return Err(StrataError::DimensionMismatch { expected: field.grid.dim(), found: dir.len() });
    }
    if p >= field.len() {
        return Err(StrataError::OutOfRange(format!("point {p} of {}", field.len())));
    }
    Ok(())
}

/// `nabla_v` of the chosen structure at `p`, `v = sum dir[a] e_a`.
pub fn fd_nabla(field: &StructureField, target: Target, p: usize, dir: &[f64]) -> Result<Derivative> {
    check_direction(field, p, dir)?;
    let dim = field.fiber_dim();
    let mut value = Mat::zeros(dim, dim);
    let mut one_sided = false;
    for (axis, &c) in dir.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let (d, flag) = axis_difference(&field.grid, |q| field.structure(target, q).matrix(), p, axis);
        value += d * c;
        one_sided |= flag;
    }
    Ok(Derivative { value, one_sided })
}

/// As [`fd_nabla`], refusing any one-sided stencil.
pub fn fd_nabla_interior(field: &StructureField, target: Target, p: usize, dir: &[f64]) -> Result<Mat> {
    let d = fd_nabla(field, target, p, dir)?;
    if d.one_sided {
        return Err(StrataError::BoundaryPoint(field.grid.multi_index(p)));
    }
    Ok(d.value)
}

fn axis_derivatives(field: &StructureField, p: usize) -> Vec<Mat> {
    (0..field.grid.dim())
        .map(|a| axis_difference(&field.grid, |q| field.k[q].matrix(), p, a).0)
        .collect()
}

/// `max_a |K nabla_{e_a} K - nabla_{I e_a} K|` at `p`.
pub fn holomorphic_section_residual(field: &StructureField, p: usize) -> Result<f64> {
    let d = field.grid.dim();
    if !d.is_multiple_of(2) {
        return Err(StrataError::OddBaseDimension(d));
    }
    let i = field.base.as_ref().ok_or(StrataError::MissingBaseStructure)?;
    check_direction(field, p, &vec![0.0; d])?;
    let k = field.k[p].matrix();
    let dk = axis_derivatives(field, p);
    let mut worst = 0.0f64;
    for a in 0..d {
        let mut di = Mat::zeros(k.nrows(), k.ncols());
        for (b, db) in dk.iter().enumerate() {
            di += db * i[(b, a)];
        }
        worst = worst.max((k * &dk[a] - di).norm());
    }
    Ok(worst)
}

/// Largest holomorphic-section residual over interior points.
pub fn max_holomorphic_residual(field: &StructureField) -> Result<f64> {
    let pts: Vec<usize> = (0..field.len()).filter(|&p| field.grid.is_interior(p)).collect();
    let vals = pts.par_iter().map(|&p| holomorphic_section_residual(field, p)).collect::<Result<Vec<_>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// `max |nabla'_v K|` over all points and axes, `nabla' = nabla + (1/2)(nabla K) K`.
///
/// The difference quotient is first projected onto `T_K C` by `D -> (D + K D K)/2`,
/// so `(nabla K) K = -K (nabla K)` holds to rounding and the residual is pure algebra.
pub fn nabla_prime_residual(field: &StructureField) -> f64 {
    (0..field.len())
        .into_par_iter()
        .map(|p| {
            let k = field.k[p].matrix();
            axis_derivatives(field, p)
                .iter()
                .map(|d| {
                    let dt = (d + k * d * k) * 0.5;
                    (&dt + (&dt * k * k - k * &dt * k) * 0.5).amax()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// `(|P_1 (nabla_v K) P_1|, |P_-1 (nabla_v K) P_-1|)` at `p`.
pub fn curve_condition(field: &StructureField, p: usize, dir: &[f64], tol: Tolerance) -> Result<(f64, f64)> {
    let g = field.metric(p).ok_or_else(|| StrataError::MetricRequired("curve_condition".into()))?;
    let dk = fd_nabla(field, Target::K, p, dir)?.value;
    let dec = canonical_decomposition(&field.j[p], &field.k[p], g, tol)?;
    Ok(((&dec.p1 * &dk * &dec.p1).norm(), (&dec.pm1 * &dk * &dec.pm1).norm()))
}
