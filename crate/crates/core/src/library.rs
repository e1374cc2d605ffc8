//! Multi-regime mode library and regime classification from sparse samples.
//!
//! Classification fits the samples against each regime's sublibrary and
//! picks the smallest relative least-squares residual. A sublibrary with at
//! least as many modes as there are samples interpolates any data exactly,
//! so the residual test only uses the leading `min(r, max(m − 1, 1))` modes
//! of each sublibrary. Reconstruction fits the leading `min(r, m)` modes, the
//! largest rank for which the sampled least-squares problem is determined.

use std::ops::Range;

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};

use crate::deim::IndexSet;
use crate::error::{Error, Result};
use crate::linalg::{select_rows, PseudoInverse};
use crate::pod::{compute_pod, PodBasis, SnapshotSet, Truncation};
use crate::{par, rng, CMatrix, CVector};

/// Per-regime POD bases and their column concatenation `Ψ_L`.
#[derive(Debug, Clone)]
pub struct RegimeLibrary {
    pub regime_ids: Vec<String>,
    pub sublibraries: Vec<PodBasis>,
    pub concat: CMatrix,
    pub ranges: Vec<Range<usize>>,
}

impl RegimeLibrary {
    pub fn from_bases(regime_ids: Vec<String>, sublibraries: Vec<PodBasis>) -> Result<Self> {
        if regime_ids.len() != sublibraries.len() {
            return Err(Error::Dimension(format!(
                "{} regime ids for {} sublibraries",
                regime_ids.len(),
                sublibraries.len()
            )));
        }
        if sublibraries.is_empty() {
            return Err(Error::Validation("library needs at least one regime".into()));
        }
        let n = sublibraries[0].n();
        if let Some(bad) = sublibraries.iter().position(|b| b.n() != n) {
            return Err(Error::Dimension(format!(
                "regime `{}` has n = {}, expected {n}",
                regime_ids[bad],
                sublibraries[bad].n()
            )));
        }
        let mut sorted = regime_ids.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("regime ids must be distinct".into()));
        }
        let total: usize = sublibraries.iter().map(PodBasis::rank).sum();
        let mut concat = CMatrix::zeros(n, total);
        let mut ranges = Vec::with_capacity(sublibraries.len());
        let mut at = 0;
        for b in &sublibraries {
            concat.columns_mut(at, b.rank()).copy_from(&b.modes);
            ranges.push(at..at + b.rank());
            at += b.rank();
        }
        Ok(RegimeLibrary {
            regime_ids,
            sublibraries,
            concat,
            ranges,
        })
    }

    pub fn n(&self) -> usize {
        self.concat.nrows()
    }

    pub fn regime_count(&self) -> usize {
        self.regime_ids.len()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.regime_ids.iter().position(|r| r == id)
    }

    pub fn sublibrary(&self, id: &str) -> Option<&PodBasis> {
        self.position(id).map(|k| &self.sublibraries[k])
    }

    /// Library columns reordered rank-major: every regime's first mode, then
    /// every regime's second mode, and so on.
    pub fn interleaved(&self) -> CMatrix {
        let max_rank = self.sublibraries.iter().map(PodBasis::rank).max().unwrap_or(0);
        let cols: Vec<_> = (0..max_rank)
            .flat_map(|j| {
                self.sublibraries
                    .iter()
                    .filter(move |b| j < b.rank())
                    .map(move |b| b.modes.column(j).into_owned())
            })
            .collect();
        CMatrix::from_columns(&cols)
    }
}

/// POD of each snapshot set at energy `energy`, concatenated in input order.
pub fn build_library(snapshot_sets: &[SnapshotSet], energy: f64) -> Result<RegimeLibrary> {
    if snapshot_sets.len() < 2 {
        return Err(Error::Validation(format!(
            "a library needs at least two regimes, got {}",
            snapshot_sets.len()
        )));
    }
    let n = snapshot_sets[0].n();
    if let Some(bad) = snapshot_sets.iter().position(|s| s.n() != n) {
        return Err(Error::Dimension(format!(
            "snapshot set {bad} has n = {}, expected {n}",
            snapshot_sets[bad].n()
        )));
    }
    let ids: Vec<String> = snapshot_sets
        .iter()
        .enumerate()
        .map(|(k, s)| s.regime.clone().unwrap_or_else(|| format!("regime{k}")))
        .collect();
    let bases = par::map(snapshot_sets, |s| compute_pod(s, Truncation::Energy(energy)))
        .into_iter()
        .zip(&ids)
        .map(|(b, id)| {
            b.map(|mut b| {
                b.label = id.clone();
                b
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RegimeLibrary::from_bases(ids, bases)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub predicted: usize,
    pub predicted_id: String,
    /// Relative residual per regime, in library order.
    pub residuals: Vec<f64>,
    /// Runner-up residual minus winning residual.
    pub margin: f64,
}

/// A library sampled on one index set, with every per-regime solve
/// factorized once.
#[derive(Debug, Clone)]
pub struct SampledLibrary {
    index_set: IndexSet,
    residual_solvers: Vec<PseudoInverse>,
    fit_solvers: Vec<PseudoInverse>,
}

impl SampledLibrary {
    pub fn new(lib: &RegimeLibrary, idx: &IndexSet) -> Result<Self> {
        if idx.n() != lib.n() {
            return Err(Error::Dimension(format!(
                "index set over n = {}, library has n = {}",
                idx.n(),
                lib.n()
            )));
        }
        if idx.is_empty() {
            return Err(Error::Validation("index set is empty".into()));
        }
        let cap = idx.len().saturating_sub(1).max(1);
        let mut residual_solvers = Vec::with_capacity(lib.regime_count());
        let mut fit_solvers = Vec::with_capacity(lib.regime_count());
        for b in &lib.sublibraries {
            let sampled = select_rows(&b.modes, idx.as_slice());
            let k = b.rank().min(cap);
            residual_solvers.push(PseudoInverse::new(&sampled.columns(0, k).into_owned()));
            let f = b.rank().min(idx.len());
            fit_solvers.push(PseudoInverse::new(&sampled.columns(0, f).into_owned()));
        }
        Ok(SampledLibrary {
            index_set: idx.clone(),
            residual_solvers,
            fit_solvers,
        })
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    /// Classifies samples taken at this library's index set.
    pub fn classify(&self, lib: &RegimeLibrary, u_samples: &CVector) -> Result<ClassificationResult> {
        let (predicted, residuals, margin) = self.classify_raw(u_samples)?;
        Ok(ClassificationResult {
            predicted,
            predicted_id: lib.regime_ids[predicted].clone(),
            residuals,
            margin,
        })
    }

    fn classify_raw(&self, u_samples: &CVector) -> Result<(usize, Vec<f64>, f64)> {
        if u_samples.len() != self.index_set.len() {
            return Err(Error::Dimension(format!(
                "{} samples for {} indices",
                u_samples.len(),
                self.index_set.len()
            )));
        }
        let norm = u_samples.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Classification(
                "samples are zero or non-finite; relative residuals undefined".into(),
            ));
        }
        let residuals: Vec<f64> = self
            .residual_solvers
            .iter()
            .map(|s| s.residual_norm(u_samples) / norm)
            .collect();
        let mut best: Option<usize> = None;
        for (k, r) in residuals.iter().enumerate() {
            if r.is_finite() && best.is_none_or(|b| *r < residuals[b]) {
                best = Some(k);
            }
        }
        let best = best.ok_or_else(|| Error::Classification("all residuals non-finite".into()))?;
        let runner_up = residuals
            .iter()
            .enumerate()
            .filter(|&(k, r)| k != best && r.is_finite())
            .map(|(_, r)| *r)
            .fold(f64::INFINITY, f64::min);
        Ok((best, residuals.clone(), runner_up - residuals[best]))
    }

    /// Predicted regime only (no allocation of the result record).
    pub fn predict(&self, u_samples: &CVector) -> Option<usize> {
        self.classify_raw(u_samples).ok().map(|(k, _, _)| k)
    }

    /// Gappy reconstruction of the full state against regime `regime`.
    pub fn reconstruct(&self, lib: &RegimeLibrary, regime: usize, u_samples: &CVector) -> CVector {
        let coeffs = self.fit_solvers[regime].solve(u_samples);
        lib.sublibraries[regime].modes.columns(0, coeffs.len()) * coeffs
    }
}

/// Classifies `u_samples` taken at `idx`.
pub fn classify(lib: &RegimeLibrary, idx: &IndexSet, u_samples: &CVector) -> Result<ClassificationResult> {
    SampledLibrary::new(lib, idx)?.classify(lib, u_samples)
}

/// A full state with its true regime (index into the library).
#[derive(Debug, Clone)]
pub struct LabeledState {
    pub regime: usize,
    pub state: CVector,
}

/// Additive measurement noise for classification trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Noise standard deviation as a fraction of the RMS sampled value.
    pub sigma_frac: f64,
    pub rounds: usize,
    /// Minimum per-regime accuracy for a sample set to count as robust.
    pub accuracy_threshold: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_frac: 0.1,
            rounds: 400,
            accuracy_threshold: 0.95,
            seed: 7,
        }
    }
}

/// Per-regime classification accuracy over `rounds` noisy repetitions.
///
/// Round `r` draws its noise from a stream keyed by `(seed, r)`. Complex
/// samples receive circular Gaussian noise whose total standard deviation is
/// `sigma_frac × RMS(samples)`; real-valued states receive real noise.
pub fn noisy_trials(
    lib: &RegimeLibrary,
    idx: &IndexSet,
    test_states: &[LabeledState],
    sigma_frac: f64,
    rounds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sampled = SampledLibrary::new(lib, idx)?;
    noisy_trials_sampled(&sampled, lib.regime_count(), test_states, sigma_frac, rounds, seed)
}

/// [`noisy_trials`] with a pre-sampled library.
pub fn noisy_trials_sampled(
    sampled: &SampledLibrary,
    regime_count: usize,
    test_states: &[LabeledState],
    sigma_frac: f64,
    rounds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(sigma_frac >= 0.0) {
        return Err(Error::Validation(format!("noise fraction {sigma_frac} must be >= 0")));
    }
    if test_states.iter().any(|s| s.regime >= regime_count) {
        return Err(Error::Validation("test state refers to an unknown regime".into()));
    }
    let clean: Vec<(usize, CVector, bool, f64)> = test_states
        .iter()
        .map(|s| {
            let u = sampled.index_set.sample(&s.state)?;
            let real = s.state.iter().all(|z| z.im == 0.0);
            let rms = (u.norm_squared() / u.len() as f64).sqrt();
            Ok((s.regime, u, real, rms))
        })
        .collect::<Result<_>>()?;

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut correct = vec![0usize; regime_count];
    let mut total = vec![0usize; regime_count];
    for &(regime, ..) in &clean {
        total[regime] += rounds;
    }
    let per_round = crate::par::map_range(rounds, |round| {
        let mut r = rng::stream(seed, &[round as u64]);
        let mut hits = vec![0usize; regime_count];
        for (regime, u, real, rms) in &clean {
            let sigma = sigma_frac * rms;
            let noisy = if sigma > 0.0 {
                let (scale_re, scale_im) = if *real {
                    (sigma, 0.0)
                } else {
                    (sigma / 2f64.sqrt(), sigma / 2f64.sqrt())
                };
                u.map(|z| {
                    let re = std_normal.sample(&mut r) * scale_re;
                    let im = if *real { 0.0 } else { std_normal.sample(&mut r) * scale_im };
                    z + Complex64::new(re, im)
                })
            } else {
                u.clone()
            };
            if sampled.predict(&noisy) == Some(*regime) {
                hits[*regime] += 1;
            }
        }
        hits
    });
    for hits in per_round {
        for (c, h) in correct.iter_mut().zip(hits) {
            *c += h;
        }
    }
    Ok(correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| if t == 0 { 1.0 } else { c as f64 / t as f64 })
        .collect())
}
