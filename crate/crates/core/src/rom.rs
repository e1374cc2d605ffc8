//! Galerkin reduced model with a DEIM-interpolated nonlinearity:
//!
//! ```text
//! da/dt = (Ψᴴ L Ψ) a + Ψᴴ Ξ (PᵀΞ)⁻¹ N(PᵀΨ a)
//! ```
//!
//! Everything of size `n` is folded into `r×r`, `r×m` and `m×r` matrices
//! offline, so a right-hand side evaluation touches the nonlinearity at
//! exactly `m` points.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;

use crate::cqgle::{GlDomain, GlParams, Spectral};
use crate::deim::{build_projector, deim_select, DeimProjector, IndexSet};
use crate::error::{Error, Result};
use crate::integrate::{integrate, StepStats, Tolerances};
use crate::pod::{compute_pod, PodBasis, ReducedState, SnapshotSet, Truncation};
use crate::{CMatrix, CVector};

/// The linear operator of the full model.
#[derive(Debug, Clone)]
pub enum LinearOperator {
    Dense(CMatrix),
    /// Diagonal in the unitary discrete Fourier basis, given by its symbol
    /// in FFT order.
    FourierDiagonal(Vec<Complex64>),
}

impl LinearOperator {
    /// The CQGLE linear part on `domain`.
    pub fn cqgle(params: &GlParams, domain: &GlDomain) -> Self {
        LinearOperator::FourierDiagonal(
            domain.wavenumbers().iter().map(|&k| params.linear_symbol(k)).collect(),
        )
    }

    pub fn n(&self) -> usize {
        match self {
            LinearOperator::Dense(m) => m.nrows(),
            LinearOperator::FourierDiagonal(s) => s.len(),
        }
    }

    /// `L x` for every column `x` of `cols`.
    pub fn apply(&self, cols: &CMatrix) -> Result<CMatrix> {
        if cols.nrows() != self.n() {
            return Err(Error::Dimension(format!(
                "operator of size {} applied to {} rows",
                self.n(),
                cols.nrows()
            )));
        }
        match self {
            LinearOperator::Dense(m) => {
                if !m.is_square() {
                    return Err(Error::Dimension(format!("operator is {}×{}", m.nrows(), m.ncols())));
                }
                Ok(m * cols)
            }
            LinearOperator::FourierDiagonal(symbol) => {
                let mut fft = Spectral::new(symbol.len());
                let mut out = cols.clone();
                let mut buf = vec![Complex64::default(); symbol.len()];
                for j in 0..cols.ncols() {
                    buf.copy_from_slice(cols.column(j).as_slice());
                    fft.forward(&mut buf);
                    buf.iter_mut().zip(symbol).for_each(|(z, s)| *z *= s);
                    fft.inverse(&mut buf);
                    out.column_mut(j).copy_from_slice(&buf);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReducedModel {
    /// `Ψᴴ L Ψ`, r×r.
    pub linear_reduced: CMatrix,
    /// `Ψᴴ Ξ (PᵀΞ)⁻¹`, r×m.
    pub nonlinear_factor: CMatrix,
    pub sample_rows: IndexSet,
    pub state_basis: PodBasis,
    /// `PᵀΨ`, m×r.
    pub sampled_state_basis: CMatrix,
}

impl ReducedModel {
    pub fn rank(&self) -> usize {
        self.state_basis.rank()
    }

    pub fn m(&self) -> usize {
        self.sample_rows.len()
    }

    pub fn project(&self, u: &CVector) -> Result<ReducedState> {
        crate::pod::project(u, &self.state_basis)
    }

    pub fn reconstruct(&self, a: &ReducedState) -> Result<CVector> {
        crate::pod::reconstruct(a, &self.state_basis)
    }
}

pub fn galerkin_reduce(l: &LinearOperator, basis: &PodBasis, proj: &DeimProjector) -> Result<ReducedModel> {
    if l.n() != basis.n() || proj.basis.n() != basis.n() {
        return Err(Error::Dimension(format!(
            "operator n = {}, state basis n = {}, nonlinearity basis n = {}",
            l.n(),
            basis.n(),
            proj.basis.n()
        )));
    }
    let l_psi = l.apply(&basis.modes)?;
    Ok(ReducedModel {
        linear_reduced: basis.modes.ad_mul(&l_psi),
        nonlinear_factor: basis.modes.ad_mul(&proj.factor),
        sample_rows: proj.index_set.clone(),
        state_basis: basis.clone(),
        sampled_state_basis: proj.index_set.sample_rows(&basis.modes)?,
    })
}

/// A pointwise nonlinearity that counts its evaluations.
pub struct CountingNonlinearity<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F: Fn(Complex64) -> Complex64> CountingNonlinearity<F> {
    pub fn new(f: F) -> Self {
        CountingNonlinearity {
            f,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn eval(&self, u: Complex64) -> Complex64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        (self.f)(u)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

/// Reduced right-hand side written into `out`; `scratch` must hold `m`
/// entries. Performs no allocation.
pub fn rom_rhs_into(
    model: &ReducedModel,
    a: &[Complex64],
    nonlinearity: &impl Fn(Complex64) -> Complex64,
    scratch: &mut [Complex64],
    out: &mut [Complex64],
) -> Result<()> {
    let (m, r) = model.sampled_state_basis.shape();
    debug_assert_eq!(scratch.len(), m);
    debug_assert!(a.len() == r && out.len() == r);
    for (i, s) in scratch.iter_mut().enumerate() {
        let mut acc = Complex64::default();
        for (j, aj) in a.iter().enumerate() {
            acc += model.sampled_state_basis[(i, j)] * aj;
        }
        let v = nonlinearity(acc);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::Divergence {
                time: f64::NAN,
                detail: format!("non-finite nonlinearity at sample {i}"),
            });
        }
        *s = v;
    }
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::default();
        for (j, aj) in a.iter().enumerate() {
            acc += model.linear_reduced[(i, j)] * aj;
        }
        for (j, sj) in scratch.iter().enumerate() {
            acc += model.nonlinear_factor[(i, j)] * sj;
        }
        *o = acc;
    }
    Ok(())
}

/// `da/dt` at `a`.
pub fn rom_step_rhs(
    model: &ReducedModel,
    a: &ReducedState,
    nonlinearity: &impl Fn(Complex64) -> Complex64,
) -> Result<CVector> {
    if a.coeffs.len() != model.rank() {
        return Err(Error::Dimension(format!(
            "{} coefficients for a rank-{} model",
            a.coeffs.len(),
            model.rank()
        )));
    }
    let mut scratch = vec![Complex64::default(); model.m()];
    let mut out = CVector::zeros(model.rank());
    rom_rhs_into(model, a.coeffs.as_slice(), nonlinearity, &mut scratch, out.as_mut_slice())?;
    Ok(out)
}

/// Reduced trajectory at each time of `outputs`, starting from `a0` at `t0`.
pub fn rom_integrate(
    model: &ReducedModel,
    a0: &ReducedState,
    t0: f64,
    outputs: &[f64],
    tol: &Tolerances,
    nonlinearity: &impl Fn(Complex64) -> Complex64,
) -> Result<(Vec<ReducedState>, StepStats)> {
    if a0.coeffs.len() != model.rank() {
        return Err(Error::Dimension(format!(
            "{} coefficients for a rank-{} model",
            a0.coeffs.len(),
            model.rank()
        )));
    }
    let mut scratch = vec![Complex64::default(); model.m()];
    let (states, stats) = integrate(
        None,
        |t, a, out| {
            rom_rhs_into(model, a, nonlinearity, &mut scratch, out).map_err(|e| match e {
                Error::Divergence { detail, .. } => Error::Divergence { time: t, detail },
                other => other,
            })
        },
        t0,
        a0.coeffs.as_slice(),
        outputs,
        tol,
    )?;
    let id = model.state_basis.label.clone();
    Ok((
        states
            .into_iter()
            .map(|c| ReducedState {
                coeffs: CVector::from_vec(c),
                basis_id: id.clone(),
            })
            .collect(),
        stats,
    ))
}

/// Pointwise nonlinearity applied to every snapshot.
pub fn nonlinear_snapshots(set: &SnapshotSet, params: &GlParams) -> SnapshotSet {
    set.map(|z| params.nonlinear(z))
}

/// CQGLE reduced model from grid snapshots: state POD at `energy` (or a
/// fixed rank), nonlinearity POD of rank `m`, DEIM points, Galerkin matrices.
pub fn cqgle_rom(
    params: &GlParams,
    domain: &GlDomain,
    snapshots: &SnapshotSet,
    state_truncation: Truncation,
    m: usize,
    indices: Option<&IndexSet>,
) -> Result<ReducedModel> {
    let basis = compute_pod(snapshots, state_truncation)?;
    let nl = compute_pod(&nonlinear_snapshots(snapshots, params), Truncation::Rank(m))?;
    if nl.rank() < m {
        return Err(Error::RankDeficient {
            step: nl.rank(),
            detail: format!("nonlinear snapshots support only {} modes, {m} requested", nl.rank()),
        });
    }
    let idx = match indices {
        Some(i) => i.clone(),
        None => deim_select(&nl.modes, m, None)?,
    };
    let proj = build_projector(&nl, &idx)?;
    galerkin_reduce(&LinearOperator::cqgle(params, domain), &basis, &proj)
}
