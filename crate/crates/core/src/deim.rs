//! Greedy DEIM index selection and the interpolatory nonlinearity projector
//! `Ξ (PᵀΞ)⁻¹ Pᵀ`.
//!
//! The measurement matrix `P` is never formed; an [`IndexSet`] lists the
//! sampled rows and applying `Pᵀ` means gathering those rows.

use log::debug;

use crate::error::{Error, Result};
use crate::linalg::{select_entries, select_rows, solve_square, PseudoInverse};
use crate::pod::PodBasis;
use crate::{CMatrix, CVector};

/// Condition numbers of `PᵀΞ` at or above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Ordered, distinct row indices into an ambient dimension `n`.
///
/// Indices are stored 0-based; files and the CLI use 1-based numbering.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSet {
    indices: Vec<usize>,
    n: usize,
}

impl IndexSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Validation(format!(
                "index {} outside 1..={n}",
                bad + 1
            )));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!(
                "indices must be distinct: {:?}",
                indices.iter().map(|i| i + 1).collect::<Vec<_>>()
            )));
        }
        Ok(IndexSet { indices, n })
    }

    pub fn from_one_based(one_based: &[usize], n: usize) -> Result<Self> {
        if one_based.contains(&0) {
            return Err(Error::Validation("indices are 1-based; found 0".into()));
        }
        IndexSet::new(one_based.iter().map(|i| i - 1).collect(), n)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    /// Indices in ascending order.
    pub fn sorted(&self) -> Vec<usize> {
        let mut s = self.indices.clone();
        s.sort_unstable();
        s
    }

    /// `Pᵀ u`.
    pub fn sample(&self, u: &CVector) -> Result<CVector> {
        if u.len() != self.n {
            return Err(Error::Dimension(format!(
                "vector has length {}, index set expects {}",
                u.len(),
                self.n
            )));
        }
        Ok(select_entries(u, &self.indices))
    }

    /// `Pᵀ A`.
    pub fn sample_rows(&self, a: &CMatrix) -> Result<CMatrix> {
        if a.nrows() != self.n {
            return Err(Error::Dimension(format!(
                "matrix has {} rows, index set expects {}",
                a.nrows(),
                self.n
            )));
        }
        Ok(select_rows(a, &self.indices))
    }
}

/// Position of the largest `|v_i|` over `candidates` (all rows if `None`);
/// ties go to the smallest index.
fn argmax_modulus(v: &CVector, candidates: Option<&[usize]>) -> (usize, f64) {
    let mut best = (usize::MAX, -1.0);
    let mut visit = |i: usize| {
        let m = v[i].norm();
        if m > best.1 || (m == best.1 && i < best.0) {
            best = (i, m);
        }
    };
    match candidates {
        Some(c) => c.iter().copied().for_each(&mut visit),
        None => (0..v.len()).for_each(&mut visit),
    }
    best
}

/// Greedy DEIM selection on the leading `m` columns of `basis`, with the
/// argmax optionally restricted to `candidates` (0-based rows).
pub fn deim_select(basis: &CMatrix, m: usize, candidates: Option<&[usize]>) -> Result<IndexSet> {
    let n = basis.nrows();
    if m == 0 {
        return Err(Error::Validation("m must be at least 1".into()));
    }
    if basis.ncols() < m {
        return Err(Error::Dimension(format!(
            "basis has {} columns, {m} requested",
            basis.ncols()
        )));
    }
    if let Some(c) = candidates {
        if c.len() < m || c.iter().any(|&i| i >= n) {
            return Err(Error::Validation(format!(
                "candidate rows must lie in 1..={n} and number at least {m}"
            )));
        }
    }

    let first = basis.column(0).into_owned();
    let (g1, peak) = argmax_modulus(&first, candidates);
    if peak <= 0.0 {
        return Err(Error::RankDeficient {
            step: 1,
            detail: "first basis vector vanishes on the candidate rows".into(),
        });
    }
    let mut chosen = vec![g1];
    for j in 1..m {
        let prev = basis.columns(0, j).into_owned();
        let pt_prev = select_rows(&prev, &chosen);
        let xi = basis.column(j).into_owned();
        let rhs = CMatrix::from_column_slice(j, 1, select_entries(&xi, &chosen).as_slice());
        let cond = PseudoInverse::new(&pt_prev).condition_number();
        if !(cond < MAX_CONDITION) {
            return Err(Error::RankDeficient {
                step: j + 1,
                detail: format!("PᵀΞ has condition number {cond:.3e}"),
            });
        }
        debug!("deim step {}: cond(PᵀΞ) = {cond:.3e}", j + 1);
        let c = solve_square(&pt_prev, &rhs).ok_or_else(|| Error::RankDeficient {
            step: j + 1,
            detail: "PᵀΞ is singular".into(),
        })?;
        let residual = xi - &prev * c.column(0);
        let (g, peak) = argmax_modulus(&residual, candidates);
        if peak <= 0.0 || chosen.contains(&g) {
            return Err(Error::RankDeficient {
                step: j + 1,
                detail: "interpolation residual vanishes on the candidate rows".into(),
            });
        }
        chosen.push(g);
    }
    IndexSet::new(chosen, n)
}

/// DEIM indices for the first `m` modes of `xi`, in selection order.
pub fn deim_indices(xi: &PodBasis, m: usize) -> Result<IndexSet> {
    deim_select(&xi.modes, m, None)
}

/// Runs DEIM for `m + k` points and drops the first `k`.
pub fn deim_plus_k(xi: &PodBasis, m: usize, k: usize) -> Result<IndexSet> {
    deim_plus_k_select(&xi.modes, m, k, None)
}

/// [`deim_plus_k`] on a bare matrix with optional candidate rows.
pub fn deim_plus_k_select(
    basis: &CMatrix,
    m: usize,
    k: usize,
    candidates: Option<&[usize]>,
) -> Result<IndexSet> {
    let full = deim_select(basis, m + k, candidates)?;
    IndexSet::new(full.as_slice()[k..].to_vec(), basis.nrows())
}

/// Precomputed interpolatory projector for a nonlinearity basis.
#[derive(Debug, Clone)]
pub struct DeimProjector {
    pub basis: PodBasis,
    pub index_set: IndexSet,
    /// `Ξ (PᵀΞ)⁻¹`, n×m.
    pub factor: CMatrix,
    /// Condition number of `PᵀΞ`.
    pub condition: f64,
}

pub fn build_projector(xi: &PodBasis, idx: &IndexSet) -> Result<DeimProjector> {
    if idx.len() != xi.rank() {
        return Err(Error::Dimension(format!(
            "{} indices for a rank-{} basis",
            idx.len(),
            xi.rank()
        )));
    }
    if idx.n() != xi.n() {
        return Err(Error::Dimension(format!(
            "index set over n = {}, basis has n = {}",
            idx.n(),
            xi.n()
        )));
    }
    let pt_xi = idx.sample_rows(&xi.modes)?;
    let condition = PseudoInverse::new(&pt_xi).condition_number();
    if !(condition < MAX_CONDITION) {
        return Err(Error::RankDeficient {
            step: idx.len(),
            detail: format!("PᵀΞ has condition number {condition:.3e}"),
        });
    }
    let m = idx.len();
    let inv = solve_square(&pt_xi, &CMatrix::identity(m, m)).ok_or_else(|| {
        Error::RankDeficient {
            step: m,
            detail: "PᵀΞ is singular".into(),
        }
    })?;
    debug!("deim projector: m = {m}, cond(PᵀΞ) = {condition:.3e}");
    Ok(DeimProjector {
        basis: xi.clone(),
        index_set: idx.clone(),
        factor: &xi.modes * inv,
        condition,
    })
}

/// `Ξ (PᵀΞ)⁻¹ samples`, the full-length approximation from `m` samples.
pub fn approx_nonlinearity(proj: &DeimProjector, samples: &CVector) -> Result<CVector> {
    if samples.len() != proj.index_set.len() {
        return Err(Error::Dimension(format!(
            "{} samples for {} interpolation points",
            samples.len(),
            proj.index_set.len()
        )));
    }
    Ok(&proj.factor * samples)
}

/// Evenly spaced admissible grid indices `lo, lo + stride, …, hi`, 0-based.
///
/// Parsed from and displayed as the 1-based `lo:hi` or `lo:hi:stride` form
/// used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub lo: usize,
    pub hi: usize,
    pub stride: usize,
}

impl Window {
    /// Every index in `lo..=hi`.
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        Self::strided(lo, hi, 1)
    }

    /// `lo, lo + stride, …` up to `hi`; `hi` is lowered onto the lattice.
    pub fn strided(lo: usize, hi: usize, stride: usize) -> Result<Self> {
        if lo > hi || stride == 0 {
            return Err(Error::Validation(format!(
                "empty window {}:{}:{stride}",
                lo + 1,
                hi + 1
            )));
        }
        let hi = lo + (hi - lo) / stride * stride;
        Ok(Window { lo, hi, stride })
    }

    /// Whole domain of size `n`.
    pub fn full(n: usize) -> Self {
        Window {
            lo: 0,
            hi: n.saturating_sub(1),
            stride: 1,
        }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo) / self.stride + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.lo..=self.hi).contains(&i) && (i - self.lo) % self.stride == 0
    }

    /// Grid index at window position `p`.
    pub fn at(&self, p: usize) -> usize {
        self.lo + p * self.stride
    }

    /// Window position of grid index `i`, if `i` lies in the window.
    pub fn position_of(&self, i: usize) -> Option<usize> {
        self.contains(i).then(|| (i - self.lo) / self.stride)
    }

    /// Window position closest to grid index `i`.
    pub fn nearest_position(&self, i: usize) -> usize {
        let clamped = i.clamp(self.lo, self.hi);
        ((clamped - self.lo) as f64 / self.stride as f64).round() as usize
    }

    pub fn positions(&self) -> Vec<usize> {
        (self.lo..=self.hi).step_by(self.stride).collect()
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.hi >= n {
            return Err(Error::Validation(format!("window {self} exceeds n = {n}")));
        }
        Ok(())
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.lo + 1, self.hi + 1)?;
        if self.stride != 1 {
            write!(f, ":{}", self.stride)?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("window `{s}` is not of the form lo:hi[:stride] (1-based)"));
        let parts: Vec<usize> = s
            .trim()
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match parts[..] {
            [lo, hi] if lo > 0 => Window::new(lo - 1, hi.max(1) - 1),
            [lo, hi, stride] if lo > 0 => Window::strided(lo - 1, hi.max(1) - 1, stride),
            _ => Err(bad()),
        }
    }
}
