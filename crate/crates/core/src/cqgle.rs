//! Fourier spectral solver for the cubic-quintic Ginzburg-Landau equation
//! with fourth-order diffusion,
//!
//! ```text
//! i U_t + (1/2 − iτ) U_xx − iκ U_xxxx + (1 − iμ)|U|²U + (ν − iε)|U|⁴U − iγU = 0,
//! ```
//!
//! on a periodic grid. Solved for `U_t`, the linear terms are diagonal in
//! Fourier space with symbol `−(τ + i/2)k² + κk⁴ + γ` and are propagated
//! exactly by the integrating factor; the cubic and quintic terms
//! `(μ + i)|U|²U + (ε + iν)|U|⁴U` are evaluated pointwise on the grid.
//!
//! Spectra are stored with unitary scaling (`FFT / √n`), so the Euclidean
//! norm of a spectrum equals that of the grid values.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::integrate::{integrate, StepStats, Tolerances};
use crate::matrix_io::FieldKind;
use crate::pod::SnapshotSet;
use crate::{rng, CMatrix};

/// Coefficients of the equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlParams {
    pub tau: f64,
    pub kappa: f64,
    pub mu: f64,
    pub nu: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl GlParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.tau, self.kappa, self.mu, self.nu, self.epsilon, self.gamma];
        if all.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Validation(format!("non-finite parameters {self:?}")))
        }
    }

    /// Fourier symbol of the linear part at wavenumber `k`.
    pub fn linear_symbol(&self, k: f64) -> Complex64 {
        let k2 = k * k;
        Complex64::new(-self.tau * k2 + self.kappa * k2 * k2 + self.gamma, -0.5 * k2)
    }

    /// Pointwise cubic-quintic term.
    #[inline]
    pub fn nonlinear(&self, u: Complex64) -> Complex64 {
        let a2 = u.norm_sqr();
        (Complex64::new(self.mu, 1.0) * a2 + Complex64::new(self.epsilon, self.nu) * (a2 * a2)) * u
    }

    /// Same parameters with the cubic and quintic coefficients removed.
    pub fn linear_only(&self) -> LinearOnly {
        LinearOnly(*self)
    }
}

/// Marker wrapper: parameters whose nonlinear term is switched off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOnly(pub GlParams);

/// The six parameter regimes with distinct attractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
}

impl Regime {
    pub const ALL: [Regime; 6] = [
        Regime::B1,
        Regime::B2,
        Regime::B3,
        Regime::B4,
        Regime::B5,
        Regime::B6,
    ];

    pub fn params(self) -> GlParams {
        let (tau, kappa, mu, nu, epsilon, gamma) = match self {
            Regime::B1 => (-0.3, -0.05, 1.45, 0.0, -0.1, -0.5),
            Regime::B2 => (-0.3, -0.05, 1.4, 0.0, -0.1, -0.5),
            Regime::B3 => (0.08, 0.0, 0.66, -0.1, -0.1, -0.1),
            Regime::B4 => (0.125, 0.0, 1.0, -0.6, -0.1, -0.1),
            Regime::B5 => (0.08, -0.05, 0.6, -0.1, -0.1, -0.1),
            Regime::B6 => (0.08, -0.05, 0.5, -0.1, -0.1, -0.1),
        };
        GlParams {
            tau,
            kappa,
            mu,
            nu,
            epsilon,
            gamma,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Regime::B1 => "3-hump, localized",
            Regime::B2 => "localized, side lobes",
            Regime::B3 => "breather",
            Regime::B4 => "exploding soliton",
            Regime::B5 => "fat soliton",
            Regime::B6 => "dissipative soliton",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::B1 => "b1",
            Regime::B2 => "b2",
            Regime::B3 => "b3",
            Regime::B4 => "b4",
            Regime::B5 => "b5",
            Regime::B6 => "b6",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let digit = t
            .strip_prefix("beta")
            .or_else(|| t.strip_prefix('b'))
            .or_else(|| t.strip_prefix('β'))
            .unwrap_or(&t);
        match digit {
            "1" => Ok(Regime::B1),
            "2" => Ok(Regime::B2),
            "3" => Ok(Regime::B3),
            "4" => Ok(Regime::B4),
            "5" => Ok(Regime::B5),
            "6" => Ok(Regime::B6),
            _ => Err(Error::Validation(format!("unknown regime `{s}` (expected b1..b6)"))),
        }
    }
}

/// Parameters for a named regime, e.g. `"b3"`.
pub fn regime_params(id: &str) -> Result<GlParams> {
    Ok(id.parse::<Regime>()?.params())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Sech,
    Gaussian,
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sech" => Ok(Profile::Sech),
            "gaussian" => Ok(Profile::Gaussian),
            other => Err(Error::Validation(format!("unknown profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCondition {
    pub profile: Profile,
    pub amplitude: f64,
    /// Relative amplitude of seeded pointwise noise added to the profile.
    pub perturbation: f64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition {
            profile: Profile::Sech,
            amplitude: 1.0,
            perturbation: 0.0,
        }
    }
}

/// Periodic grid, time horizon and sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct GlDomain {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub t_final: f64,
    pub snapshot_count: usize,
    pub initial: InitialCondition,
    /// Drop the first quarter of the snapshots as transient.
    pub discard_transient: bool,
    pub tolerances: Tolerances,
}

impl Default for GlDomain {
    fn default() -> Self {
        GlDomain {
            x_min: -20.0,
            x_max: 20.0,
            n: 1024,
            t_final: 40.0,
            snapshot_count: 201,
            initial: InitialCondition::default(),
            discard_transient: false,
            tolerances: Tolerances::default(),
        }
    }
}

impl GlDomain {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) {
            return Err(Error::Validation("x_max must exceed x_min".into()));
        }
        if self.n < 64 || !self.n.is_power_of_two() {
            return Err(Error::Validation(format!(
                "grid size {} must be a power of two >= 64",
                self.n
            )));
        }
        if self.snapshot_count < 2 {
            return Err(Error::Validation("snapshot_count must be >= 2".into()));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Validation("t_final must be positive".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    /// `x_j = x_min + j·dx`, `j = 0..n`; the centre point sits at `j = n/2`.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x_min + j as f64 * self.dx()).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let l = self.x_max - self.x_min;
        let n = self.n as isize;
        (0..n)
            .map(|j| {
                let m = if j < n / 2 { j } else { j - n };
                2.0 * PI * m as f64 / l
            })
            .collect()
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        let p = self.snapshot_count;
        (0..p)
            .map(|j| self.t_final * j as f64 / (p - 1) as f64)
            .collect()
    }

    /// Number of leading snapshots treated as transient.
    pub fn transient_count(&self) -> usize {
        if self.discard_transient {
            self.snapshot_count / 4
        } else {
            0
        }
    }
}

/// Reusable FFT plans and scratch space for one grid size.
pub struct Spectral {
    n: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Spectral {
            n,
            scale: 1.0 / (n as f64).sqrt(),
            forward,
            inverse,
            scratch: vec![Complex64::default(); len],
        }
    }

    /// Unitary forward transform in place.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n);
        self.forward.process_with_scratch(data, &mut self.scratch);
        data.iter_mut().for_each(|z| *z *= self.scale);
    }

    /// Unitary inverse transform in place.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n);
        self.inverse.process_with_scratch(data, &mut self.scratch);
        data.iter_mut().for_each(|z| *z *= self.scale);
    }
}

/// Evaluates the nonlinear part of the right-hand side in spectral space.
struct NonlinearTerm {
    params: GlParams,
    enabled: bool,
    fft: Spectral,
    buf: Vec<Complex64>,
}

impl NonlinearTerm {
    fn new(params: GlParams, n: usize, enabled: bool) -> Self {
        NonlinearTerm {
            params,
            enabled,
            fft: Spectral::new(n),
            buf: vec![Complex64::default(); n],
        }
    }

    fn eval(&mut self, t: f64, u_hat: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        if !self.enabled {
            out.fill(Complex64::default());
            return Ok(());
        }
        self.buf.copy_from_slice(u_hat);
        self.fft.inverse(&mut self.buf);
        for z in self.buf.iter_mut() {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Divergence {
                    time: t,
                    detail: "non-finite field values".into(),
                });
            }
            *z = self.params.nonlinear(*z);
        }
        self.fft.forward(&mut self.buf);
        out.copy_from_slice(&self.buf);
        Ok(())
    }
}

/// `dÛ/dt` for the spectrum `u_hat` on the grid of `domain`.
pub fn gl_rhs(u_hat: &[Complex64], params: &GlParams, domain: &GlDomain) -> Result<Vec<Complex64>> {
    if u_hat.len() != domain.n {
        return Err(Error::Dimension(format!(
            "spectrum has {} entries, grid has {}",
            u_hat.len(),
            domain.n
        )));
    }
    let mut out = vec![Complex64::default(); domain.n];
    NonlinearTerm::new(*params, domain.n, true).eval(0.0, u_hat, &mut out)?;
    for ((o, &k), &u) in out.iter_mut().zip(&domain.wavenumbers()).zip(u_hat) {
        *o += params.linear_symbol(k) * u;
    }
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Divergence {
            time: 0.0,
            detail: "non-finite right-hand side".into(),
        });
    }
    Ok(out)
}

/// Initial grid values for `domain`.
pub fn initial_state(domain: &GlDomain, seed: u64) -> Vec<Complex64> {
    let ic = domain.initial;
    let mut rng = rng::stream(seed, &[0x1C]);
    domain
        .grid()
        .iter()
        .map(|&x| {
            let base = match ic.profile {
                Profile::Sech => 1.0 / x.cosh(),
                Profile::Gaussian => (-x * x).exp(),
            } * ic.amplitude;
            let noise = if ic.perturbation > 0.0 {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    * (ic.perturbation * ic.amplitude)
            } else {
                Complex64::default()
            };
            Complex64::new(base, 0.0) + noise
        })
        .collect()
}

/// Outcome of a simulation: snapshots plus integrator statistics.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub snapshots: SnapshotSet,
    pub stats: StepStats,
}

fn run(params: &GlParams, domain: &GlDomain, seed: u64, nonlinear: bool) -> Result<Simulation> {
    params.validate()?;
    domain.validate()?;
    let n = domain.n;
    let lin: Vec<Complex64> = domain
        .wavenumbers()
        .iter()
        .map(|&k| params.linear_symbol(k))
        .collect();
    let mut fft = Spectral::new(n);
    let mut u0 = initial_state(domain, seed);
    fft.forward(&mut u0);

    let mut term = NonlinearTerm::new(*params, n, nonlinear);
    let times = domain.snapshot_times();
    let (spectra, stats) = integrate(
        Some(&lin),
        |t, y, out| term.eval(t, y, out),
        0.0,
        &u0,
        &times,
        &domain.tolerances,
    )?;

    let skip = domain.transient_count();
    let kept = &spectra[skip..];
    let mut data = CMatrix::zeros(n, kept.len());
    for (j, spec) in kept.iter().enumerate() {
        let mut u = spec.clone();
        fft.inverse(&mut u);
        for (i, z) in u.into_iter().enumerate() {
            data[(i, j)] = z;
        }
    }
    let snapshots = SnapshotSet::from_matrix(
        data,
        times[skip..].to_vec(),
        None,
        Some(domain.grid()),
        FieldKind::Complex,
    )?;
    Ok(Simulation { snapshots, stats })
}

/// Integrates from the configured initial condition and samples
/// `snapshot_count` equispaced states on `[0, t_final]`.
pub fn simulate(params: &GlParams, domain: &GlDomain, seed: u64) -> Result<SnapshotSet> {
    Ok(run(params, domain, seed, true)?.snapshots)
}

/// As [`simulate`], also returning step statistics.
pub fn simulate_with_stats(params: &GlParams, domain: &GlDomain, seed: u64) -> Result<Simulation> {
    run(params, domain, seed, true)
}

/// Simulation with the cubic and quintic terms removed.
pub fn simulate_linear(params: LinearOnly, domain: &GlDomain, seed: u64) -> Result<SnapshotSet> {
    Ok(run(&params.0, domain, seed, false)?.snapshots)
}

/// Simulates a named regime and labels the snapshots with it.
pub fn simulate_regime(regime: Regime, domain: &GlDomain, seed: u64) -> Result<SnapshotSet> {
    let mut s = simulate(&regime.params(), domain, seed)?;
    s.regime = Some(regime.label().to_string());
    Ok(s)
}
