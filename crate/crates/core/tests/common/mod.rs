//! Test-side oracles, independent of the library's SVD path.
#![allow(dead_code)]

use strata::numerics::Mat;

/// Rank by Gaussian elimination with full pivoting; pivots at or below
/// `rel * max|a|` (absolute floor `1e-13`) count as zero.
pub fn elimination_rank(a: &Mat, rel: f64) -> usize {
    let mut m = a.clone();
    let (rows, cols) = m.shape();
    let scale = m.amax().max(1e-300);
    let thr = (rel * scale).max(1e-13);
    let mut rank = 0;
    for step in 0..rows.min(cols) {
        let (mut pr, mut pc, mut best) = (step, step, 0.0);
        for r in step..rows {
            for c in step..cols {
                if m[(r, c)].abs() > best {
                    (pr, pc, best) = (r, c, m[(r, c)].abs());
                }
            }
        }
        if best <= thr {
            break;
        }
        m.swap_rows(step, pr);
        m.swap_columns(step, pc);
        for r in step + 1..rows {
            let f = m[(r, step)] / m[(step, step)];
            for c in step..cols {
                let v = m[(step, c)];
                m[(r, c)] -= f * v;
            }
        }
        rank += 1;
    }
    rank
}

/// Real kernel dimension of a square matrix, by elimination.
pub fn nullity(a: &Mat, rel: f64) -> usize {
    a.ncols() - elimination_rank(a, rel)
}

/// Pfaffian of a skew matrix by pivoted skew elimination.
pub fn pfaffian(a: &Mat) -> f64 {
    let n = a.nrows();
    if n % 2 == 1 {
        return 0.0;
    }
    let mut m = a.clone();
    let mut pf = 1.0;
    let mut k = 0;
    while k < n {
        // pivot: largest entry in column k below the diagonal
        let (mut p, mut best) = (k + 1, 0.0);
        for r in k + 1..n {
            if m[(r, k)].abs() > best {
                (p, best) = (r, m[(r, k)].abs());
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if p != k + 1 {
            m.swap_rows(k + 1, p);
            m.swap_columns(k + 1, p);
            pf = -pf;
        }
        let piv = m[(k, k + 1)];
        pf *= piv;
        for r in k + 2..n {
            let f = m[(k, r)] / piv;
            // row_r -= f row_{k+1}, col_r -= f col_{k+1} keeps skewness
            for c in 0..n {
                let v = m[(k + 1, c)];
                m[(r, c)] -= f * v;
            }
            for c in 0..n {
                let v = m[(c, k + 1)];
                m[(c, r)] -= f * v;
            }
        }
        k += 2;
    }
    pf
}

/// Orientation of a complex structure, `sign Pf(h J)` with `h = I + J^T J`
/// (a metric compatible with `J`).
pub fn orientation(j: &Mat) -> f64 {
    let d = j.nrows();
    let h = Mat::identity(d, d) + j.transpose() * j;
    let w = &h * j;
    pfaffian(&((&w - w.transpose()) * 0.5)).signum()
}

/// Max `|B^T g B|` relative to `|g|`, for a complex basis.
pub fn bilinear_isotropy(b: &strata::numerics::CMat, g: &Mat) -> f64 {
    let gc = g.map(|x| num_complex::Complex64::new(x, 0.0));
    (b.transpose() * gc * b).iter().map(|z| z.norm()).fold(0.0, f64::max) / g.amax()
}

/// Every `(m1, m_minus1)` lattice point for dimension `n`.
pub fn lattice(n: usize) -> Vec<(usize, usize)> {
    (0..=n).flat_map(|a| (0..=n - a).map(move |b| (a, b))).collect()
}
