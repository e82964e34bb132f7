//! Built-in synthetic fields with closed-form stratum loci.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{admissible_three_form, BivectorKind, Grid, StructureField};
use crate::constructors::quaternion_pair;
use crate::error::{Result, StrataError};
use crate::numerics::Mat;
use crate::structures::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// Anticommuting quaternionic pair, constant; zero three-form.
    Constant,
    /// `K` sweeps the quaternion sphere; `K = J` only at the grid centre.
    QuatRotation,
    /// `K = cos t K0 + sin t J'` with `t = pi` on the centre column.
    LineDrop,
    /// `n = 1`, eigenline `(1, tau(x - iy))` with `tau` holomorphic.
    Holomorphic,
    /// As above with `tau` a function of `x` alone.
    NonHolomorphic,
    /// Base `R^4 = C^2`, `[J,K] = c (a B1 + b B2)` with `a + ib = exp(z1 z2) - 1.1`.
    Poisson,
    /// `n = 3`; `[J,K]` vanishes exactly on the centre column.
    Exclusion,
}

impl Fixture {
    pub const ALL: [Fixture; 7] = [
        Fixture::Constant,
        Fixture::QuatRotation,
        Fixture::LineDrop,
        Fixture::Holomorphic,
        Fixture::NonHolomorphic,
        Fixture::Poisson,
        Fixture::Exclusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Constant => "constant",
            Fixture::QuatRotation => "quat_rotation",
            Fixture::LineDrop => "line_drop",
            Fixture::Holomorphic => "holomorphic",
            Fixture::NonHolomorphic => "nonholomorphic",
            Fixture::Poisson => "poisson",
            Fixture::Exclusion => "exclusion",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| StrataError::InvalidRequest(format!("unknown fixture {s}")))
    }
}

/// Centre of the Poisson patch.
pub const POISSON_CENTER: [f64; 4] = [0.3, 0.4, 0.55, 0.2];
const POISSON_C: f64 = 0.2;
const STEREO_SCALE: f64 = 0.25;
const LINE_SLOPE: f64 = 2.0;

fn eps() -> Mat {
    Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = Mat::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

/// `(K0, J', J'')`: left multiplication by `i, j, k` on the quaternions.
fn quaternion_units() -> (Mat, Mat, Mat) {
    let (a, b) = quaternion_pair();
    let (a, b) = (a.matrix().clone(), b.matrix().clone());
    let c = &a * &b;
    (a, b, c)
}

fn k_of_tau(t: Complex64) -> Mat {
    Mat::from_row_slice(2, 2, &[-t.re, 1.0, -t.norm_sqr(), t.re]) / t.im
}

fn tau(w: Complex64) -> Complex64 {
    Complex64::i() + w * 0.25 + w * w * 0.125
}

fn planar_grid(points: Option<usize>, h: Option<f64>) -> Result<Grid> {
    let points = match (points, h) {
        (Some(p), _) => p,
        (None, Some(h)) if h > 0.0 && h.is_finite() => (1.0 / h).round() as usize + 1,
        (None, Some(h)) => return Err(StrataError::InvalidRequest(format!("invalid spacing {h}"))),
        (None, None) => 64,
    };
    Grid::unit(2, points)
}

/// Offset from the centre column, exact zero on it.
fn column_offset(grid: &Grid, x: f64) -> f64 {
    let i = ((x - grid.origin()[0]) / grid.h()).round() as i64;
    (i - (grid.shape()[0] / 2) as i64) as f64 * grid.h()
}

pub fn fixture(kind: Fixture, points: Option<usize>, h: Option<f64>) -> Result<StructureField> {
    let (k0, jp, jpp) = quaternion_units();
    match kind {
        Fixture::Constant => {
            let grid = planar_grid(points, h)?;
            StructureField::from_fn(grid, k0.clone(), Some(Mat::identity(4, 4)), |_| jp.clone())?
                .with_constant_three_form(vec![0.0; 64])?
                .with_base(eps())
                .map(|f| f.declare_integrable(&BivectorKind::ALL))
        }
        Fixture::QuatRotation => {
            let grid = planar_grid(points, h)?;
            let c = grid.coords(grid.center());
            let hform = admissible_three_form(&[&k0], &mut rng(7));
            StructureField::from_fn(grid, -&k0, Some(Mat::identity(4, 4)), |x| {
                let w = [(x[0] - c[0]) / STEREO_SCALE, (x[1] - c[1]) / STEREO_SCALE];
                let r2 = w[0] * w[0] + w[1] * w[1];
                let u = [(r2 - 1.0) / (r2 + 1.0), 2.0 * w[0] / (r2 + 1.0), 2.0 * w[1] / (r2 + 1.0)];
                &k0 * u[0] + &jp * u[1] + &jpp * u[2]
            })?
            .with_constant_three_form(hform)?
            .with_base(eps())
        }
        Fixture::LineDrop => {
            let grid = planar_grid(points, h)?;
            let g2 = grid.clone();
            StructureField::from_fn(grid, -&k0, Some(Mat::identity(4, 4)), |x| {
                let t = PI + LINE_SLOPE * column_offset(&g2, x[0]);
                &k0 * t.cos() + &jp * t.sin()
            })?
            .with_base(eps())
        }
        Fixture::Holomorphic | Fixture::NonHolomorphic => {
            let grid = planar_grid(points, h)?;
            let holo = kind == Fixture::Holomorphic;
            StructureField::from_fn(grid, eps(), None, |x| {
                let w = if holo { Complex64::new(x[0], -x[1]) } else { Complex64::new(x[0], 0.0) };
                k_of_tau(tau(w))
            })?
            .with_base(eps())
        }
        Fixture::Poisson => {
            let half = points.map(|p| p / 2).unwrap_or(2).max(1);
            let grid = Grid::patch(&POISSON_CENTER, half, h.unwrap_or(1e-2))?;
            let j = block_diag(&eps(), &eps());
            let (b1, b2) = poisson_generators();
            StructureField::from_fn(grid, j.clone(), Some(Mat::identity(4, 4)), |x| {
                let z1 = Complex64::new(x[0], x[1]);
                let z2 = Complex64::new(x[2], x[3]);
                let f = (z1 * z2).exp() - 1.1;
                let (u2, u3) = (POISSON_C * f.im / 2.0, -POISSON_C * f.re / 2.0);
                let u1 = -(1.0 - u2 * u2 - u3 * u3).sqrt();
                &j * u1 + &b1 * u2 + &b2 * u3
            })?
            .with_base(block_diag(&eps(), &eps()))
            .map(|f| f.declare_integrable(&[BivectorKind::Sigma]))
        }
        Fixture::Exclusion => {
            let grid = planar_grid(points, h)?;
            let g2 = grid.clone();
            let j = block_diag(&eps(), &-&k0);
            StructureField::from_fn(grid, j, Some(Mat::identity(6, 6)), |x| {
                let t = PI + LINE_SLOPE * column_offset(&g2, x[0]);
                block_diag(&-eps(), &(&k0 * t.cos() + &jp * t.sin()))
            })?
            .with_base(eps())
        }
    }
}

/// Constant skew pair anticommuting with `diag(eps, eps)`, with `J0 B1 = B2`.
fn poisson_generators() -> (Mat, Mat) {
    let e = |i: usize, j: usize| {
        let mut m = Mat::zeros(4, 4);
        m[(i, j)] = 1.0;
        m[(j, i)] = -1.0;
        m
    };
    (e(0, 2) - e(1, 3), e(0, 3) + e(1, 2))
}
