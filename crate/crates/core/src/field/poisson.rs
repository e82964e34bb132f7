use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::strata::{poisson_bound, twistor_bound};
use super::{axis_difference, stratum_map, Grid, StructureField};
use crate::error::{Result, StrataError};
use crate::numerics::{commutator, rank_tol, Mat, Tolerance};
use crate::pair::commutator_rank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BivectorKind {
    Sigma,
    LambdaPlus,
    LambdaMinus,
}

impl BivectorKind {
    pub const ALL: [BivectorKind; 3] = [BivectorKind::Sigma, BivectorKind::LambdaPlus, BivectorKind::LambdaMinus];

    pub fn name(self) -> &'static str {
        match self {
            BivectorKind::Sigma => "sigma",
            BivectorKind::LambdaPlus => "lambda_plus",
            BivectorKind::LambdaMinus => "lambda_minus",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        BivectorKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Per-point `pi^{ab}`, mapping covectors to vectors.
#[derive(Debug, Clone)]
pub struct Bivector {
    pub kind: BivectorKind,
    pub values: Vec<Mat>,
}

/// `sigma = [J,K] g^-1`, `lambda_pm = (J pm K) g^-1`.
pub fn bivector(field: &StructureField, kind: BivectorKind) -> Result<Bivector> {
    if !field.has_metric() {
        return Err(StrataError::MetricRequired("bivectors".into()));
    }
    let values = (0..field.len())
        .into_par_iter()
        .map(|p| {
            let (j, k) = (field.j(p).matrix(), field.k(p).matrix());
            let g_inv = field.metric(p).expect("metric field").inverse();
            let m = match kind {
                BivectorKind::Sigma => commutator(j, k),
                BivectorKind::LambdaPlus => j + k,
                BivectorKind::LambdaMinus => j - k,
            };
            m * g_inv
        })
        .collect();
    Ok(Bivector { kind, values })
}

impl Bivector {
    pub fn antisymmetry_residual(&self) -> f64 {
        self.values
            .iter()
            .map(|m| (m + m.transpose()).amax() / m.amax().max(1.0))
            .fold(0.0, f64::max)
    }

    /// `max |sum_cyc pi^{ad} d_d pi^{bc}|` over interior points; base and fiber dimensions must agree.
    pub fn jacobi_residual(&self, grid: &Grid) -> Result<f64> {
        let d = grid.dim();
        let fib = self.values[0].nrows();
        if fib != d {
            return Err(StrataError::DimensionMismatch { expected: d, found: fib });
        }
        let pts: Vec<usize> = (0..grid.len()).filter(|&p| grid.is_interior(p)).collect();
        let worst = pts
            .par_iter()
            .map(|&p| {
                let pi = &self.values[p];
                let dp: Vec<Mat> = (0..d).map(|a| axis_difference(grid, |q| &self.values[q], p, a).0).collect();
                let term = |a: usize, b: usize, c: usize| -> f64 { (0..d).map(|e| pi[(a, e)] * dp[e][(b, c)]).sum() };
                let mut m = 0.0f64;
                for a in 0..d {
                    for b in 0..d {
                        for c in 0..d {
                            m = m.max((term(a, b, c) + term(b, c, a) + term(c, a, b)).abs());
                        }
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PointRanks {
    pub sigma: usize,
    pub commutator: usize,
    pub lambda_plus: usize,
    pub lambda_minus: usize,
    pub m1: usize,
    pub m_minus1: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobiEntry {
    pub kind: BivectorKind,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundEntry {
    pub component: usize,
    pub m1: usize,
    pub m_minus1: usize,
    pub points: usize,
    pub real_box_dim: Option<f64>,
    pub poisson_bound: i64,
    pub twistor_bound: i64,
    /// Complex box dimension below a bound by more than half a unit.
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoissonReport {
    pub antisymmetry_residual: f64,
    pub rank_sigma_mismatches: usize,
    pub rank_lambda_plus_mismatches: usize,
    pub rank_lambda_minus_mismatches: usize,
    pub rank_histograms: BTreeMap<&'static str, BTreeMap<usize, usize>>,
    /// Declared-integrable bivectors only, and only when base and fiber dimensions agree.
    pub jacobi: Vec<JacobiEntry>,
    /// Bounds assume `T M = E`, i.e. base dimension `2n`.
    pub bounds_applicable: bool,
    pub bounds: Vec<BoundEntry>,
    #[serde(skip)]
    pub point_ranks: Vec<PointRanks>,
}

impl PoissonReport {
    pub fn jacobi_residual(&self, kind: BivectorKind) -> Option<f64> {
        self.jacobi.iter().find(|e| e.kind == kind).map(|e| e.residual)
    }
}

pub fn poisson_suite(field: &StructureField, tol: Tolerance) -> Result<PoissonReport> {
    if !field.has_metric() {
        return Err(StrataError::MetricRequired("poisson suite".into()));
    }
    let n = field.n();
    let bivs: Vec<Bivector> = BivectorKind::ALL.iter().map(|&k| bivector(field, k)).collect::<Result<_>>()?;
    let map = stratum_map(field, tol)?;
    let point_ranks: Vec<PointRanks> = (0..field.len())
        .into_par_iter()
        .map(|p| PointRanks {
            sigma: rank_tol(&bivs[0].values[p], tol),
            commutator: commutator_rank(field.j(p).matrix(), field.k(p).matrix(), tol),
            lambda_plus: rank_tol(&bivs[1].values[p], tol),
            lambda_minus: rank_tol(&bivs[2].values[p], tol),
            m1: map.signatures[p].m1,
            m_minus1: map.signatures[p].m_minus1,
        })
        .collect();
    let mut rank_histograms: BTreeMap<&'static str, BTreeMap<usize, usize>> = BTreeMap::new();
    for r in &point_ranks {
        for (kind, v) in [(BivectorKind::Sigma, r.sigma), (BivectorKind::LambdaPlus, r.lambda_plus), (BivectorKind::LambdaMinus, r.lambda_minus)] {
            *rank_histograms.entry(kind.name()).or_default().entry(v).or_default() += 1;
        }
    }
    let square = field.grid().dim() == 2 * n;
    let mut jacobi = Vec::new();
    if square {
        for b in bivs.iter().filter(|b| field.integrable().contains(&b.kind)) {
            jacobi.push(JacobiEntry { kind: b.kind, residual: b.jacobi_residual(field.grid())? });
        }
    }
    let m = n;
    let bounds = map
        .component_info
        .iter()
        .map(|c| {
            let pb = poisson_bound(m, c.m1, c.m_minus1);
            let tb = twistor_bound(m, c.m1, c.m_minus1);
            let cdim = c.box_dim.unwrap_or(0.0) / 2.0;
            BoundEntry {
                component: c.id,
                m1: c.m1,
                m_minus1: c.m_minus1,
                points: c.points,
                real_box_dim: c.box_dim,
                poisson_bound: pb,
                twistor_bound: tb,
                flagged: square && cdim + 0.5 < pb.max(tb) as f64,
            }
        })
        .collect();
    Ok(PoissonReport {
        antisymmetry_residual: bivs.iter().map(Bivector::antisymmetry_residual).fold(0.0, f64::max),
        rank_sigma_mismatches: point_ranks.iter().filter(|r| r.sigma != r.commutator).count(),
        rank_lambda_plus_mismatches: point_ranks.iter().filter(|r| r.lambda_plus != 2 * n - 2 * r.m1).count(),
        rank_lambda_minus_mismatches: point_ranks.iter().filter(|r| r.lambda_minus != 2 * n - 2 * r.m_minus1).count(),
        rank_histograms,
        jacobi,
        bounds_applicable: square,
        bounds,
        point_ranks,
    })
}
