//! Exhaustive k-subset search over a window of grid positions.
//!
//! Three stages: noiseless classification of every validation state, noisy
//! classification accuracy for every regime, then ranking of the survivors
//! by mean reconstruction error. The ranking order is the one the GA uses,
//! so the top entry bounds any GA result obtained with the same window,
//! validation data and noise settings.

use itertools::Itertools;
use log::info;

use crate::deim::{IndexSet, Window};
use crate::error::{Error, Result};
use crate::ga::{fitness, FitnessRecord};
use crate::library::{noisy_trials_sampled, LabeledState, NoiseConfig, RegimeLibrary, SampledLibrary};
use crate::par;

/// Largest number of subsets a search may enumerate.
pub const MAX_SUBSETS: u128 = 10_000_000;

const CHUNK: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Sorted ascending.
    pub index_set: IndexSet,
    pub error: f64,
    pub min_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct BruteReport {
    pub evaluated: usize,
    /// Survivors of noiseless classification.
    pub stage1: usize,
    /// Survivors of the noisy-accuracy gate.
    pub stage2: usize,
    /// Stage-2 survivors by ascending error.
    pub ranked: Vec<Candidate>,
}

impl BruteReport {
    pub fn best(&self) -> Option<&Candidate> {
        self.ranked.first()
    }

    pub fn diagnostics(&self) -> String {
        format!(
            "{} subsets evaluated, {} classify correctly without noise, {} pass the noise gate",
            self.evaluated, self.stage1, self.stage2
        )
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

pub fn exhaustive_search(
    lib: &RegimeLibrary,
    k: usize,
    window: Window,
    validation: &[LabeledState],
    noise: &NoiseConfig,
) -> Result<BruteReport> {
    window.check(lib.n())?;
    if k == 0 || k > window.len() {
        return Err(Error::Validation(format!(
            "subset size {k} must lie in 1..={}",
            window.len()
        )));
    }
    let total = binomial(window.len(), k);
    if total > MAX_SUBSETS {
        return Err(Error::Validation(format!(
            "C({}, {k}) = {total} subsets exceeds the limit of {MAX_SUBSETS}",
            window.len()
        )));
    }
    let n = lib.n();
    let mut evaluated = 0;
    let mut stage1 = 0;
    let mut ranked = Vec::new();
    for chunk in &window.positions().into_iter().combinations(k).chunks(CHUNK) {
        let chunk: Vec<Vec<usize>> = chunk.collect();
        evaluated += chunk.len();
        let scored = par::map(&chunk, |c| -> Result<Option<Candidate>> {
            let idx = IndexSet::new(c.clone(), n)?;
            let rec: FitnessRecord = fitness(&idx, lib, validation)?;
            if !rec.feasible {
                return Ok(None);
            }
            let sampled = SampledLibrary::new(lib, &idx)?;
            let acc = noisy_trials_sampled(
                &sampled,
                lib.regime_count(),
                validation,
                noise.sigma_frac,
                noise.rounds,
                noise.seed,
            )?;
            Ok(Some(Candidate {
                index_set: idx,
                error: rec.raw_error,
                min_accuracy: acc.iter().copied().fold(1.0, f64::min),
            }))
        });
        for s in scored {
            if let Some(c) = s? {
                stage1 += 1;
                if c.min_accuracy >= noise.accuracy_threshold {
                    ranked.push(c);
                }
            }
        }
    }
    ranked.sort_by(|a, b| {
        a.error
            .total_cmp(&b.error)
            .then_with(|| a.index_set.as_slice().cmp(b.index_set.as_slice()))
    });
    let report = BruteReport {
        evaluated,
        stage1,
        stage2: ranked.len(),
        ranked,
    };
    info!("{}", report.diagnostics());
    Ok(report)
}

/// For each sorted slot `j < k`, how often each window position holds the
/// `j`-th smallest index among `ranked`.
pub fn position_histograms(ranked: &[Candidate], k: usize, window: Window) -> Result<Vec<Vec<usize>>> {
    let mut hist = vec![vec![0usize; window.len()]; k];
    for c in ranked {
        let sorted = c.index_set.sorted();
        if sorted.len() != k {
            return Err(Error::Dimension(format!(
                "candidate has {} indices, expected {k}",
                sorted.len()
            )));
        }
        for (j, &i) in sorted.iter().enumerate() {
            let p = window
                .position_of(i)
                .ok_or_else(|| Error::Validation(format!("index {} outside window {window}", i + 1)))?;
            hist[j][p] += 1;
        }
    }
    Ok(hist)
}
