//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{CMatrix, CVector};

/// Thin SVD with singular values sorted nonincreasing.
///
/// Each left singular vector is rotated so that its entry of largest
/// modulus is real and positive (the right vectors absorb the conjugate
/// phase), making the factorization unique for distinct singular values.
pub struct ThinSvd {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

pub fn thin_svd(a: &CMatrix) -> ThinSvd {
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    if k == 0 {
        return ThinSvd {
            u: CMatrix::zeros(rows, 0),
            sigma: vec![],
            v: CMatrix::zeros(cols, 0),
        };
    }
    let real = a.iter().all(|z| z.im == 0.0);
    let (u, s, vt) = if real {
        let ar = DMatrix::<f64>::from_fn(rows, cols, |i, j| a[(i, j)].re);
        let svd = ar.svd(true, true);
        let u = svd.u.expect("requested").map(|x| Complex64::new(x, 0.0));
        let vt = svd.v_t.expect("requested").map(|x| Complex64::new(x, 0.0));
        (u, svd.singular_values.iter().copied().collect::<Vec<_>>(), vt)
    } else {
        let svd = a.clone().svd(true, true);
        (
            svd.u.expect("requested"),
            svd.singular_values.iter().copied().collect::<Vec<_>>(),
            svd.v_t.expect("requested"),
        )
    };
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));

    let mut uo = CMatrix::zeros(rows, k);
    let mut vo = CMatrix::zeros(cols, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let col = u.column(src);
        let (mut best, mut best_abs) = (0usize, -1.0f64);
        for (i, z) in col.iter().enumerate() {
            let m = z.norm();
            if m > best_abs + 1e-14 * best_abs.max(1e-300) {
                best = i;
                best_abs = m;
            }
        }
        let phase = if best_abs > 0.0 {
            col[best].conj() / best_abs
        } else {
            Complex64::new(1.0, 0.0)
        };
        uo.set_column(dst, &(col * phase));
        // a = sum sigma u v^H; scaling u by phase requires v by phase as well
        let vcol = vt.row(src).transpose().map(|z| z.conj()) * phase;
        vo.set_column(dst, &vcol);
        sigma.push(s[src]);
    }
    ThinSvd { u: uo, sigma, v: vo }
}

/// Least-squares solver for `A x ≈ b` via the pseudo-inverse.
///
/// Singular values below `max(rows, cols) * eps * sigma_max` are treated as
/// zero, which yields the minimum-norm solution for rank-deficient `A`.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    u: CMatrix,
    sigma: Vec<f64>,
    v: CMatrix,
    rank: usize,
    shape: (usize, usize),
}

impl PseudoInverse {
    pub fn new(a: &CMatrix) -> Self {
        let svd = thin_svd(a);
        let smax = svd.sigma.first().copied().unwrap_or(0.0);
        let cutoff = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * smax;
        let rank = svd.sigma.iter().filter(|&&s| s > cutoff).count();
        PseudoInverse {
            u: svd.u.columns(0, rank).into_owned(),
            sigma: svd.sigma,
            v: svd.v.columns(0, rank).into_owned(),
            rank,
            shape: a.shape(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    /// True when `A` has fewer independent columns than columns.
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.shape.1
    }

    /// All singular values of `A`, nonincreasing.
    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    /// `sigma_1 / sigma_k` with `k = min(rows, cols)`; infinite if `sigma_k` is 0.
    pub fn condition_number(&self) -> f64 {
        condition_from(&self.sigma)
    }

    pub fn solve(&self, b: &CVector) -> CVector {
        let mut coeffs = self.u.ad_mul(b);
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c /= self.sigma[i];
        }
        &self.v * coeffs
    }

    /// `‖b − A A⁺ b‖₂`, the distance from `b` to the range of `A`.
    pub fn residual_norm(&self, b: &CVector) -> f64 {
        let coeffs = self.u.ad_mul(b);
        (b - &self.u * coeffs).norm()
    }
}

pub(crate) fn condition_from(sigma: &[f64]) -> f64 {
    match (sigma.first(), sigma.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => f64::INFINITY,
    }
}

/// Rows `rows` of `a`, in the given order.
pub fn select_rows(a: &CMatrix, rows: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Entries `rows` of `v`, in the given order.
pub fn select_entries(v: &CVector, rows: &[usize]) -> CVector {
    CVector::from_iterator(rows.len(), rows.iter().map(|&r| v[r]))
}

/// Solves the square system `a x = b` by LU with partial pivoting.
pub fn solve_square(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    a.clone().lu().solve(b)
}

/// Converts a real slice to a complex vector.
pub fn complexify(xs: &[f64]) -> CVector {
    DVector::from_iterator(xs.len(), xs.iter().map(|&x| Complex64::new(x, 0.0)))
}

/// `max |aᴴa − I|` over all entries.
pub fn orthonormality_defect(a: &CMatrix) -> f64 {
    let g = a.ad_mul(a);
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}
