//! Snapshot matrices and truncated POD bases.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{orthonormality_defect, thin_svd};
use crate::matrix_io::FieldKind;
use crate::{CMatrix, CVector};

/// Column `j` holds the discretized state at `times[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub data: CMatrix,
    pub times: Vec<f64>,
    pub regime: Option<String>,
    pub grid: Option<Vec<f64>>,
    pub field: FieldKind,
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

impl SnapshotSet {
    /// Wraps an existing matrix, checking the metadata invariants.
    pub fn from_matrix(
        data: CMatrix,
        times: Vec<f64>,
        regime: Option<String>,
        grid: Option<Vec<f64>>,
        field: FieldKind,
    ) -> Result<Self> {
        let (n, p) = data.shape();
        if n == 0 || p == 0 {
            return Err(Error::Validation(format!(
                "snapshot matrix must be nonempty, got {n}x{p}"
            )));
        }
        if times.len() != p {
            return Err(Error::Dimension(format!(
                "{} time stamps for {p} snapshots",
                times.len()
            )));
        }
        if !strictly_increasing(&times) {
            return Err(Error::Validation("times must be strictly increasing".into()));
        }
        if let Some(g) = &grid {
            if g.len() != n {
                return Err(Error::Dimension(format!(
                    "grid has {} points, states have {n}",
                    g.len()
                )));
            }
            if !strictly_increasing(g) {
                return Err(Error::Validation("grid must be strictly increasing".into()));
            }
        }
        Ok(SnapshotSet {
            data,
            times,
            regime,
            grid,
            field,
        })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn column(&self, j: usize) -> CVector {
        self.data.column(j).into_owned()
    }

    /// Splits off the columns in `held_out` (sorted, distinct) as a second set.
    pub fn split_columns(&self, held_out: &[usize]) -> Result<(SnapshotSet, SnapshotSet)> {
        if held_out.iter().any(|&j| j >= self.p()) || !held_out.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Validation(
                "held-out columns must be sorted, distinct and in range".into(),
            ));
        }
        let keep: Vec<usize> = (0..self.p()).filter(|j| held_out.binary_search(j).is_err()).collect();
        let take = |cols: &[usize]| -> Result<SnapshotSet> {
            let data = CMatrix::from_fn(self.n(), cols.len(), |i, k| self.data[(i, cols[k])]);
            SnapshotSet::from_matrix(
                data,
                cols.iter().map(|&j| self.times[j]).collect(),
                self.regime.clone(),
                self.grid.clone(),
                self.field,
            )
        };
        Ok((take(&keep)?, take(held_out)?))
    }

    /// Keeps columns `from..`.
    pub fn drop_leading(&self, from: usize) -> Result<SnapshotSet> {
        let cols: Vec<usize> = (from..self.p()).collect();
        let data = CMatrix::from_fn(self.n(), cols.len(), |i, k| self.data[(i, cols[k])]);
        SnapshotSet::from_matrix(
            data,
            cols.iter().map(|&j| self.times[j]).collect(),
            self.regime.clone(),
            self.grid.clone(),
            self.field,
        )
    }

    /// Applies `f` entrywise, e.g. to form nonlinear snapshots.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> SnapshotSet {
        SnapshotSet {
            data: self.data.map(f),
            ..self.clone()
        }
    }
}

/// Assembles states (all of one length) sampled at strictly increasing times.
pub fn build_snapshots(states: &[CVector], times: &[f64]) -> Result<SnapshotSet> {
    if states.is_empty() {
        return Err(Error::Validation("at least one snapshot is required".into()));
    }
    if states.len() != times.len() {
        return Err(Error::Dimension(format!(
            "{} states but {} times",
            states.len(),
            times.len()
        )));
    }
    let n = states[0].len();
    if let Some(bad) = states.iter().position(|s| s.len() != n) {
        return Err(Error::Dimension(format!(
            "state {bad} has length {}, expected {n}",
            states[bad].len()
        )));
    }
    let data = CMatrix::from_fn(n, states.len(), |i, j| states[j][i]);
    let field = if data.iter().all(|z| z.im == 0.0) {
        FieldKind::Real
    } else {
        FieldKind::Complex
    };
    SnapshotSet::from_matrix(data, times.to_vec(), None, None, field)
}

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    Rank(usize),
    /// Smallest rank whose cumulative squared singular values reach this
    /// fraction of the total.
    Energy(f64),
}

/// Orthonormal modes with their singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub label: String,
    pub modes: CMatrix,
    pub singular_values: Vec<f64>,
    pub energy_captured: f64,
    /// Full singular spectrum of the source matrix.
    pub spectrum: Vec<f64>,
}

impl PodBasis {
    /// Basis from columns already known to be orthonormal.
    pub fn from_orthonormal(label: impl Into<String>, modes: CMatrix) -> Result<Self> {
        let defect = orthonormality_defect(&modes);
        if defect > 1e-10 {
            return Err(Error::Validation(format!(
                "columns are not orthonormal (defect {defect:.2e})"
            )));
        }
        let r = modes.ncols();
        Ok(PodBasis {
            label: label.into(),
            modes,
            singular_values: vec![1.0; r],
            energy_captured: 1.0,
            spectrum: vec![1.0; r],
        })
    }

    pub fn n(&self) -> usize {
        self.modes.nrows()
    }

    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    /// The first `r` modes as a new basis.
    pub fn truncated(&self, r: usize) -> Result<PodBasis> {
        if r == 0 || r > self.rank() {
            return Err(Error::Validation(format!(
                "cannot truncate rank-{} basis to {r}",
                self.rank()
            )));
        }
        let total: f64 = self.spectrum.iter().map(|s| s * s).sum();
        let kept: f64 = self.singular_values[..r].iter().map(|s| s * s).sum();
        Ok(PodBasis {
            label: self.label.clone(),
            modes: self.modes.columns(0, r).into_owned(),
            singular_values: self.singular_values[..r].to_vec(),
            energy_captured: if total > 0.0 { kept / total } else { 1.0 },
            spectrum: self.spectrum.clone(),
        })
    }
}

/// Modal coefficients `a` with `u ≈ modes · a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub coeffs: CVector,
    pub basis_id: String,
}

/// Truncated SVD of the snapshot matrix (no mean subtraction).
pub fn compute_pod(x: &SnapshotSet, truncation: Truncation) -> Result<PodBasis> {
    compute_pod_matrix(&x.data, truncation, x.regime.clone().unwrap_or_default())
}

/// As [`compute_pod`] on a bare matrix.
pub fn compute_pod_matrix(x: &CMatrix, truncation: Truncation, label: String) -> Result<PodBasis> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::Validation("empty snapshot matrix".into()));
    }
    let kmax = n.min(p);
    match truncation {
        Truncation::Rank(r) if r == 0 || r > kmax => {
            return Err(Error::Validation(format!(
                "rank {r} outside 1..={kmax}"
            )))
        }
        Truncation::Energy(eta) if !(eta > 0.0 && eta <= 1.0) => {
            return Err(Error::Validation(format!("energy threshold {eta} outside (0, 1]")))
        }
        _ => {}
    }
    if x.iter().all(|z| *z == Complex64::default()) {
        return Err(Error::Degenerate("snapshot matrix is identically zero".into()));
    }

    let svd = thin_svd(x);
    let energies: Vec<f64> = svd.sigma.iter().map(|s| s * s).collect();
    let total: f64 = energies.iter().sum();
    let r = match truncation {
        Truncation::Rank(r) => r,
        Truncation::Energy(eta) => {
            // tolerate accumulated rounding when eta is exactly attainable
            let target = eta * total * (1.0 - 4.0 * f64::EPSILON * kmax as f64);
            let mut cum = 0.0;
            let mut r = kmax;
            for (i, e) in energies.iter().enumerate() {
                cum += e;
                if cum >= target {
                    r = i + 1;
                    break;
                }
            }
            r
        }
    };
    let kept: f64 = energies[..r].iter().sum();
    Ok(PodBasis {
        label,
        modes: svd.u.columns(0, r).into_owned(),
        singular_values: svd.sigma[..r].to_vec(),
        energy_captured: (kept / total).min(1.0),
        spectrum: svd.sigma,
    })
}

/// `modesᴴ u`.
pub fn project(u: &CVector, basis: &PodBasis) -> Result<ReducedState> {
    if u.len() != basis.n() {
        return Err(Error::Dimension(format!(
            "state has length {}, basis has {} rows",
            u.len(),
            basis.n()
        )));
    }
    Ok(ReducedState {
        coeffs: basis.modes.ad_mul(u),
        basis_id: basis.label.clone(),
    })
}

/// `modes · a`.
pub fn reconstruct(a: &ReducedState, basis: &PodBasis) -> Result<CVector> {
    if a.coeffs.len() != basis.rank() {
        return Err(Error::Dimension(format!(
            "{} coefficients for a rank-{} basis",
            a.coeffs.len(),
            basis.rank()
        )));
    }
    Ok(&basis.modes * &a.coeffs)
}
