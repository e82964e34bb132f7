use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use super::{Grid, StructureField};
use crate::error::{Result, StrataError};
use crate::numerics::Tolerance;
use crate::pair::{classify_pair, StratumSignature};

#[derive(Debug, Clone, Serialize)]
pub struct ComponentInfo {
    pub id: usize,
    pub m1: usize,
    pub m_minus1: usize,
    pub s: usize,
    pub points: usize,
    /// Real box-counting dimension of the component.
    pub box_dim: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StratumMap {
    pub grid: Grid,
    pub signatures: Vec<StratumSignature>,
    /// Component label per point; labels follow first appearance in grid order.
    pub components: Vec<usize>,
    pub component_info: Vec<ComponentInfo>,
    /// Points whose `m1` or `m_-1` lies strictly below every neighbour.
    pub violations: Vec<usize>,
}

fn key(s: &StratumSignature) -> (usize, usize, usize) {
    (s.m1, s.m_minus1, s.s)
}

impl StratumMap {
    pub fn from_signatures(grid: Grid, signatures: Vec<StratumSignature>) -> Result<Self> {
        if signatures.len() != grid.len() {
            return Err(StrataError::DimensionMismatch { expected: grid.len(), found: signatures.len() });
        }
        for s in &signatures {
            if s.m1 + s.m_minus1 + s.s != s.n {
                return Err(StrataError::InconsistentSignature { n: s.n, m1: s.m1, m_minus1: s.m_minus1, s: s.s });
            }
        }
        let len = grid.len();
        let mut components = vec![usize::MAX; len];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for start in 0..len {
            if components[start] != usize::MAX {
                continue;
            }
            let id = members.len();
            let mut queue = VecDeque::from([start]);
            components[start] = id;
            let mut pts = Vec::new();
            while let Some(p) = queue.pop_front() {
                pts.push(p);
                for q in grid.neighbors(p) {
                    if components[q] == usize::MAX && key(&signatures[q]) == key(&signatures[p]) {
                        components[q] = id;
                        queue.push_back(q);
                    }
                }
            }
            pts.sort_unstable();
            members.push(pts);
        }
        let component_info = members
            .iter()
            .enumerate()
            .map(|(id, pts)| {
                let s = &signatures[pts[0]];
                ComponentInfo {
                    id,
                    m1: s.m1,
                    m_minus1: s.m_minus1,
                    s: s.s,
                    points: pts.len(),
                    box_dim: box_dimension(&grid, pts),
                }
            })
            .collect();
        let violations = (0..len)
            .filter(|&p| {
                let nb = grid.neighbors(p);
                let below = |f: fn(&StratumSignature) -> usize| nb.iter().all(|&q| f(&signatures[p]) < f(&signatures[q]));
                below(|s| s.m1) || below(|s| s.m_minus1)
            })
            .collect();
        Ok(StratumMap { grid, signatures, components, component_info, violations })
    }

    pub fn locus<F: Fn(&StratumSignature) -> bool>(&self, pred: F) -> Vec<usize> {
        (0..self.signatures.len()).filter(|&p| pred(&self.signatures[p])).collect()
    }

    pub fn count(&self, m1: usize, m_minus1: usize) -> usize {
        self.locus(|s| s.m1 == m1 && s.m_minus1 == m_minus1).len()
    }
}

pub fn stratum_map(field: &StructureField, tol: Tolerance) -> Result<StratumMap> {
    let sigs = (0..field.len())
        .into_par_iter()
        .map(|p| classify_pair(field.j(p), field.k(p), tol))
        .collect::<Result<Vec<_>>>()?;
    StratumMap::from_signatures(field.grid().clone(), sigs)
}

/// Least-squares slope of `log N(2^k h)` against `log 2^-k` over dyadic coarsenings.
pub fn box_dimension(grid: &Grid, points: &[usize]) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let idx: Vec<Vec<usize>> = points.iter().map(|&p| grid.multi_index(p)).collect();
    let longest = *grid.shape().iter().max().expect("grid has axes");
    let mut samples = Vec::new();
    let mut k = 0u32;
    while (longest >> k) >= 2 {
        let boxes: HashSet<Vec<usize>> = idx.iter().map(|i| i.iter().map(|&c| c >> k).collect()).collect();
        samples.push((k as f64, (boxes.len() as f64).log2()));
        k += 1;
    }
    if samples.len() < 2 {
        return Some(0.0);
    }
    let m = samples.len() as f64;
    let (sx, sy) = samples.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = samples
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    Some((-num / den).max(0.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct ExclusionEntry {
    pub m1: usize,
    pub m_minus1: usize,
    /// `m - (m1(m1-1) + m_-1(m_-1-1))/2`.
    pub twistor_bound: i64,
    /// `m - (m1 + m_-1)`.
    pub poisson_bound: i64,
    pub compatible: bool,
}

/// Which commuting strata may sit inside the sampled rank-zero locus of `[J,K]`.
#[derive(Debug, Clone, Serialize)]
pub struct ExclusionReport {
    pub n: usize,
    pub m: usize,
    pub locus_points: usize,
    pub locus_real_box_dim: Option<f64>,
    /// Smallest integer complex dimension consistent with the sampled locus.
    pub locus_complex_dim: Option<usize>,
    pub entries: Vec<ExclusionEntry>,
}

impl ExclusionReport {
    pub fn entry(&self, m1: usize, m_minus1: usize) -> Option<&ExclusionEntry> {
        self.entries.iter().find(|e| e.m1 == m1 && e.m_minus1 == m_minus1)
    }
}

pub(crate) fn twistor_bound(m: usize, m1: usize, mm1: usize) -> i64 {
    m as i64 - ((m1 * m1.saturating_sub(1) + mm1 * mm1.saturating_sub(1)) / 2) as i64
}

pub(crate) fn poisson_bound(m: usize, m1: usize, mm1: usize) -> i64 {
    m as i64 - (m1 + mm1) as i64
}

/// Complex base dimension is taken equal to the fiber `n`.
pub fn exclusion_report(map: &StratumMap) -> ExclusionReport {
    let n = map.signatures.first().map(|s| s.n).unwrap_or(0);
    let m = n;
    let locus = map.locus(|s| s.s == 0);
    let real = box_dimension(&map.grid, &locus);
    let complex = real.map(|r| (r / 2.0 - 0.1).ceil().max(0.0) as usize);
    let entries = (0..=n)
        .map(|m1| {
            let mm1 = n - m1;
            let tb = twistor_bound(m, m1, mm1);
            ExclusionEntry {
                m1,
                m_minus1: mm1,
                twistor_bound: tb,
                poisson_bound: poisson_bound(m, m1, mm1),
                compatible: complex.is_some_and(|c| tb <= c as i64),
            }
        })
        .collect();
    ExclusionReport { n, m, locus_points: locus.len(), locus_real_box_dim: real, locus_complex_dim: complex, entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(n: usize, m1: usize, mm1: usize) -> StratumSignature {
        StratumSignature { n, m1, m_minus1: mm1, s: n - m1 - mm1, k: None, same_orientation: true }
    }

    #[test]
    fn box_dimension_of_points_lines_and_planes() {
        let grid = Grid::unit(2, 64).unwrap();
        assert_eq!(box_dimension(&grid, &[grid.center()]), Some(0.0));
        let line: Vec<usize> = (0..64).map(|i| grid.linear_index(&[i, 20])).collect();
        assert!((box_dimension(&grid, &line).unwrap() - 1.0).abs() < 1e-12);
        let all: Vec<usize> = (0..grid.len()).collect();
        assert!((box_dimension(&grid, &all).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(box_dimension(&grid, &[]), None);
    }

    #[test]
    fn components_and_dips() {
        let grid = Grid::unit(2, 5).unwrap();
        let hole = grid.linear_index(&[2, 2]);
        let sigs: Vec<_> = (0..grid.len()).map(|p| if p == hole { sig(2, 0, 0) } else { sig(2, 1, 0) }).collect();
        let map = StratumMap::from_signatures(grid, sigs).unwrap();
        assert_eq!(map.component_info.len(), 2);
        assert_eq!(map.violations, vec![hole]);
        assert_eq!(map.count(1, 0), 24);
    }

    #[test]
    fn synthetic_line_locus_excludes_mixed_strata() {
        let grid = Grid::unit(2, 33).unwrap();
        let sigs: Vec<_> = (0..grid.len())
            .map(|p| if grid.multi_index(p)[0] == 16 { sig(3, 1, 2) } else { sig(3, 1, 0) })
            .collect();
        let r = exclusion_report(&StratumMap::from_signatures(grid, sigs).unwrap());
        assert_eq!(r.locus_complex_dim, Some(1));
        assert!(!r.entry(2, 1).unwrap().compatible && !r.entry(1, 2).unwrap().compatible);
        assert!(r.entry(3, 0).unwrap().compatible && r.entry(0, 3).unwrap().compatible);
        assert_eq!(r.entry(2, 1).unwrap().poisson_bound, 0);
    }
}
