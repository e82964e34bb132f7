//! Real three-forms as dense antisymmetric `d^3` tensors, index `a d^2 + b d + c`.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::StructureField;
use crate::error::{Result, StrataError};
use crate::numerics::{commutator, kernel, Mat, Tolerance};
use crate::pair::canonical_decomposition;
use crate::structures::{gaussian, Metric};

/// Type residual above which a form is rejected as not `(2,1)+(1,2)`.
pub const TYPE_TOL: f64 = 1e-8;

pub(crate) fn check_antisymmetric(h: &[f64], d: usize) -> Result<()> {
    if h.len() != d * d * d {
        return Err(StrataError::DimensionMismatch { expected: d * d * d, found: h.len() });
    }
    let at = |a: usize, b: usize, c: usize| h[a * d * d + b * d + c];
    let scale = h.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let x = at(a, b, c);
                if (x + at(b, a, c)).abs() > 1e-12 * scale || (x + at(a, c, b)).abs() > 1e-12 * scale {
                    return Err(StrataError::InvalidRequest("three form is not antisymmetric".into()));
                }
            }
        }
    }
    Ok(())
}

/// `(H_v)_{bc} = sum_a H_{abc} v_a`.
fn contract(h: &[f64], v: &[f64], d: usize) -> Mat {
    Mat::from_fn(d, d, |b, c| (0..d).map(|a| h[a * d * d + b * d + c] * v[a]).sum())
}

/// `max_a |J [g^-1 H_{e_a}, J] - [g^-1 H_{J e_a}, J]|`.
pub fn three_form_type_residual(h: &[f64], j: &Mat, g_inv: &Mat) -> f64 {
    let d = j.nrows();
    (0..d)
        .map(|a| {
            let e: Vec<f64> = (0..d).map(|i| if i == a { 1.0 } else { 0.0 }).collect();
            let je: Vec<f64> = j.column(a).iter().copied().collect();
            let hv = g_inv * contract(h, &e, d);
            let hjv = g_inv * contract(h, &je, d);
            (j * commutator(&hv, j) - commutator(&hjv, j)).norm()
        })
        .fold(0.0, f64::max)
}

pub fn three_form_type_check(field: &StructureField, p: usize, which: super::Target) -> Result<f64> {
    let h = field.three_form(p).ok_or(StrataError::MissingThreeForm)?;
    let d = field.fiber_dim();
    let g_inv = field.metric(p).map(Metric::inverse).unwrap_or_else(|| Mat::identity(d, d));
    Ok(three_form_type_residual(h, field.structure(which, p).matrix(), &g_inv))
}

fn antisymmetrizer(d: usize) -> Mat {
    let n = d * d * d;
    let mut m = Mat::zeros(n, n);
    let perms: [([usize; 3], f64); 6] =
        [([0, 1, 2], 1.0), ([1, 2, 0], 1.0), ([2, 0, 1], 1.0), ([1, 0, 2], -1.0), ([0, 2, 1], -1.0), ([2, 1, 0], -1.0)];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let idx = [a, b, c];
                for (p, s) in perms {
                    let col = idx[p[0]] * d * d + idx[p[1]] * d + idx[p[2]];
                    m[(a * d * d + b * d + c, col)] += s / 6.0;
                }
            }
        }
    }
    m
}

/// Derivation action of `J` on 3-tensors; squares to `-9` on `(3,0)+(0,3)` and `-1` on mixed type.
fn derivation(j: &Mat) -> Mat {
    let d = j.nrows();
    let i = Mat::identity(d, d);
    let jt = j.transpose();
    jt.kronecker(&i).kronecker(&i) + i.kronecker(&jt).kronecker(&i) + i.kronecker(&i).kronecker(&jt)
}

/// Projector onto the `(3,0)+(0,3)` part: `-(Q^2 + 1)/8`.
fn pure_projector(j: &Mat) -> Mat {
    let q = derivation(j);
    let n = q.nrows();
    -(&q * &q + Mat::identity(n, n)) / 8.0
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 {
        v
    } else {
        v.into_iter().map(|x| x / m).collect()
    }
}

/// Random three-form of type `(2,1)+(1,2)` for every structure, unit max-entry.
pub fn admissible_three_form(structures: &[&Mat], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = structures.first().map(|j| j.nrows()).unwrap_or(0);
    let n = d * d * d;
    let a = antisymmetrizer(d);
    let mut rows = vec![Mat::identity(n, n) - &a];
    rows.extend(structures.iter().map(|j| pure_projector(j) * &a));
    let mut stacked = Mat::zeros(n * rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        stacked.rows_mut(i * n, n).copy_from(r);
    }
    let basis = kernel(&stacked, Tolerance::default()).real_basis().expect("real input");
    let c = gaussian(basis.ncols(), 1, rng);
    normalized((basis * c).iter().copied().collect())
}

/// Random three-form of pure type `(3,0)+(0,3)` for `j`, unit max-entry.
pub fn pure_three_form(j: &Mat, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = j.nrows();
    let raw = gaussian(d * d * d, 1, rng);
    let v = pure_projector(j) * antisymmetrizer(d) * raw;
    normalized(v.iter().copied().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct MotivationalReport {
    pub type_residual_j: f64,
    pub type_residual_k: f64,
    pub admissible: bool,
    /// `max |P_1 [g^-1 H_v, J] P_1|` over a basis of `T_1^perp`.
    pub part1: f64,
    /// `P_-1` analogue over `T_-1^perp`.
    pub part2: f64,
    /// Both projections over `T_0`.
    pub part3: f64,
}

impl MotivationalReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.part1 < tol && self.part2 < tol && self.part3 < tol
    }
}

pub fn motivational_residuals(j: &Mat, k: &Mat, g: &Metric, h: &[f64], tol: Tolerance) -> Result<MotivationalReport> {
    let d = j.nrows();
    check_antisymmetric(h, d)?;
    let js = crate::structures::ComplexStructure::new(j.clone(), Some(g.clone()))?;
    let ks = crate::structures::ComplexStructure::new(k.clone(), Some(g.clone()))?;
    let dec = canonical_decomposition(&js, &ks, g, tol)?;
    let g_inv = g.inverse();
    let comm = |v: Vec<f64>| commutator(&(&g_inv * contract(h, &v, d)), j);
    let cols = |m: &Mat| -> Vec<Vec<f64>> { m.column_iter().map(|c| c.iter().copied().collect()).collect() };
    let t0: Vec<Vec<f64>> = dec.blocks_e.iter().flat_map(|b| cols(&b.basis)).collect();
    let (t1, tm1) = (cols(&dec.v1.basis), cols(&dec.v_minus1.basis));
    let worst = |vs: &[Vec<f64>], p: &Mat| vs.iter().map(|v| (p * comm(v.clone()) * p).norm()).fold(0.0, f64::max);
    let t1_perp: Vec<Vec<f64>> = t0.iter().chain(&tm1).cloned().collect();
    let tm1_perp: Vec<Vec<f64>> = t0.iter().chain(&t1).cloned().collect();
    let type_residual_j = three_form_type_residual(h, j, &g_inv);
    let type_residual_k = three_form_type_residual(h, k, &g_inv);
    Ok(MotivationalReport {
        type_residual_j,
        type_residual_k,
        admissible: type_residual_j <= TYPE_TOL && type_residual_k <= TYPE_TOL,
        part1: worst(&t1_perp, &dec.p1),
        part2: worst(&tm1_perp, &dec.pm1),
        part3: worst(&t0, &dec.p1).max(worst(&t0, &dec.pm1)),
    })
}

/// With `strict`, a form failing the type condition for either structure is an error.
pub fn motivational_identity_check(
    field: &StructureField,
    p: usize,
    strict: bool,
    tol: Tolerance,
) -> Result<MotivationalReport> {
    let h = field.three_form(p).ok_or(StrataError::MissingThreeForm)?;
    let g = field.metric(p).ok_or_else(|| StrataError::MetricRequired("motivational identity".into()))?;
    let r = motivational_residuals(field.j(p).matrix(), field.k(p).matrix(), g, h, tol)?;
    if strict {
        if r.type_residual_j > TYPE_TOL {
            return Err(StrataError::ThreeFormType { which: "J", residual: r.type_residual_j });
        }
        if r.type_residual_k > TYPE_TOL {
            return Err(StrataError::ThreeFormType { which: "K", residual: r.type_residual_k });
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructors::assemble_block_pair;
    use crate::structures::{j0, random_orthogonal, rng};

    fn rotated(e: &[(f64, usize)], m1: usize, mm1: usize, seed: u64) -> (Mat, Mat, Metric) {
        let (j, k, _) = assemble_block_pair(e, m1, mm1).unwrap();
        let (j, k) = (j.matrix(), k.matrix());
        let q = random_orthogonal(j.nrows(), &mut rng(seed));
        (&q * j * q.transpose(), &q * k * q.transpose(), Metric::identity(q.nrows()))
    }

    #[test]
    fn zero_form_has_zero_residuals() {
        let (j, k, g) = rotated(&[(0.6, 4)], 1, 0, 1);
        let r = motivational_residuals(&j, &k, &g, &vec![0.0; 216], Tolerance::default()).unwrap();
        assert_eq!((r.part1, r.part2, r.part3), (0.0, 0.0, 0.0));
        assert_eq!(three_form_type_residual(&vec![0.0; 64], &j0(2), &Mat::identity(4, 4)), 0.0);
    }

    #[test]
    fn every_three_form_in_dimension_four_is_mixed() {
        let j = j0(2);
        let h = admissible_three_form(&[&j], &mut rng(2));
        assert!(h.iter().any(|x| x.abs() > 0.5));
        let raw: Vec<f64> = (antisymmetrizer(4) * gaussian(64, 1, &mut rng(5))).iter().copied().collect();
        assert!(three_form_type_residual(&raw, &j, &Mat::identity(4, 4)) < 1e-12);
    }

    #[test]
    fn pure_component_breaks_the_type_condition() {
        let j = j0(3);
        let h = pure_three_form(&j, &mut rng(4));
        assert!(three_form_type_residual(&h, &j, &Mat::identity(6, 6)) > 0.1);
        let mixed = admissible_three_form(&[&j], &mut rng(4));
        assert!(three_form_type_residual(&mixed, &j, &Mat::identity(6, 6)) < 1e-10);
    }

    #[test]
    fn admissible_forms_satisfy_the_identity() {
        for (blocks, m1, mm1) in [(vec![(0.6, 4)], 1, 0), (vec![], 2, 1), (vec![(-0.3, 4)], 0, 1)] {
            let (j, k, g) = rotated(&blocks, m1, mm1, 9);
            let h = admissible_three_form(&[&j, &k], &mut rng(11));
            let r = motivational_residuals(&j, &k, &g, &h, Tolerance::default()).unwrap();
            assert!(r.admissible);
            assert!(r.holds(1e-8), "{r:?}");
        }
    }

    #[test]
    fn inadmissible_form_is_reported() {
        let (j, k, g) = rotated(&[], 2, 1, 3);
        let h = pure_three_form(&j, &mut rng(6));
        let r = motivational_residuals(&j, &k, &g, &h, Tolerance::default()).unwrap();
        assert!(!r.admissible);
        assert!(!r.holds(1e-8));
    }
}
