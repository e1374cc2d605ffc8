//! Mutation-only genetic refinement of interpolation indices.
//!
//! Individuals are index sets. Fitness is the mean relative gappy
//! reconstruction error over a validation set, and any misclassified
//! validation state makes an individual infeasible. Each generation keeps
//! the best `elite` distinct individuals and refills the population with
//! mutants of uniformly chosen elite parents.

use std::cmp::Ordering;
use std::collections::HashMap;

use log::{debug, warn};
use rand::Rng;

use crate::deim::{IndexSet, Window};
use crate::error::{Error, Result};
use crate::gappy::reconstruction_error;
use crate::library::{noisy_trials_sampled, LabeledState, NoiseConfig, RegimeLibrary, SampledLibrary};
use crate::{par, rng};

/// Collision retries per index before the index is left where it was.
pub const MUTATION_RETRIES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub elite: usize,
    pub generations: usize,
    pub mutation_prob: f64,
    pub mutation_radius: usize,
    pub window: Option<Window>,
    pub seed: u64,
    /// When set, feasibility also requires the noisy classification
    /// accuracy of every regime to reach the threshold.
    pub noise: Option<NoiseConfig>,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 100,
            elite: 10,
            generations: 10,
            mutation_prob: 0.5,
            mutation_radius: 3,
            window: None,
            seed: 7,
            noise: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elite == 0 || self.elite >= self.population {
            return Err(Error::Config(format!(
                "need 0 < elite < population, got elite {} population {}",
                self.elite, self.population
            )));
        }
        if !(self.mutation_prob > 0.0 && self.mutation_prob <= 1.0) {
            return Err(Error::Config(format!(
                "mutation probability {} outside (0, 1]",
                self.mutation_prob
            )));
        }
        if self.mutation_radius == 0 {
            return Err(Error::Config("mutation radius must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessRecord {
    pub index_set: IndexSet,
    /// Mean relative reconstruction error, `+∞` when infeasible.
    pub error: f64,
    /// Mean error computed regardless of feasibility, against each state's
    /// predicted regime.
    pub raw_error: f64,
    pub feasible: bool,
    pub generation: usize,
    pub misclassified: usize,
    /// Worst per-regime noisy accuracy, when the noise gate ran.
    pub min_accuracy: Option<f64>,
}

impl FitnessRecord {
    /// Feasible before infeasible; then error, misclassification count and
    /// raw error; then the sorted index list.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .feasible
            .cmp(&self.feasible)
            .then(self.error.total_cmp(&other.error))
            .then(self.misclassified.cmp(&other.misclassified))
            .then(self.raw_error.total_cmp(&other.raw_error))
            .then_with(|| self.index_set.sorted().cmp(&other.index_set.sorted()))
    }
}

/// Shifts each index with probability `mutation_prob` by a nonzero uniform
/// number of window positions in `[-radius, radius]`, clamped to the window.
pub fn mutate<R: Rng + ?Sized>(idx: &IndexSet, cfg: &GaConfig, rng: &mut R) -> Result<IndexSet> {
    let n = idx.n();
    let window = cfg.window.unwrap_or_else(|| Window::full(n));
    window.check(n)?;
    if window.len() < idx.len() {
        return Err(Error::Config(format!(
            "window {window} holds {} positions, fewer than {} indices",
            window.len(),
            idx.len()
        )));
    }
    let r = cfg.mutation_radius as i64;
    let last = window.len() as i64 - 1;
    let mut out = idx.as_slice().to_vec();
    for slot in 0..out.len() {
        if rng.random::<f64>() >= cfg.mutation_prob {
            continue;
        }
        let old = out[slot];
        let here = window.nearest_position(old) as i64;
        for _ in 0..MUTATION_RETRIES {
            let s = rng.random_range(0..2 * r);
            let shift = if s < r { s - r } else { s - r + 1 };
            let cand = window.at((here + shift).clamp(0, last) as usize);
            if cand == old {
                break;
            }
            if !out.contains(&cand) {
                out[slot] = cand;
                break;
            }
        }
    }
    IndexSet::new(out, n)
}

/// Fitness of `idx` without a noise gate.
pub fn fitness(idx: &IndexSet, lib: &RegimeLibrary, validation: &[LabeledState]) -> Result<FitnessRecord> {
    fitness_with_noise(idx, lib, validation, None)
}

/// Fitness of `idx`, optionally requiring robust noisy classification.
///
/// Evaluation uses the sorted index list so the result, including the
/// noise draws, depends only on the set of sampled positions.
pub fn fitness_with_noise(
    idx: &IndexSet,
    lib: &RegimeLibrary,
    validation: &[LabeledState],
    noise: Option<&NoiseConfig>,
) -> Result<FitnessRecord> {
    if validation.is_empty() {
        return Err(Error::Validation("validation set is empty".into()));
    }
    let canonical = IndexSet::new(idx.sorted(), idx.n())?;
    let sampled = SampledLibrary::new(lib, &canonical)?;
    let mut misclassified = 0;
    let mut total = 0.0;
    for v in validation {
        let samples = canonical.sample(&v.state)?;
        let Some(pred) = sampled.predict(&samples) else {
            misclassified += 1;
            total = f64::INFINITY;
            continue;
        };
        if pred != v.regime {
            misclassified += 1;
        }
        let rec = sampled.reconstruct(lib, pred, &samples);
        total += reconstruction_error(&v.state, &rec);
    }
    let raw_error = total / validation.len() as f64;
    let mut feasible = misclassified == 0 && raw_error.is_finite();
    let mut min_accuracy = None;
    if let (true, Some(nc)) = (feasible, noise) {
        let acc = noisy_trials_sampled(
            &sampled,
            lib.regime_count(),
            validation,
            nc.sigma_frac,
            nc.rounds,
            nc.seed,
        )?;
        let worst = acc.iter().copied().fold(1.0, f64::min);
        feasible = worst >= nc.accuracy_threshold;
        min_accuracy = Some(worst);
    }
    Ok(FitnessRecord {
        index_set: idx.clone(),
        error: if feasible { raw_error } else { f64::INFINITY },
        raw_error,
        feasible,
        generation: 0,
        misclassified,
        min_accuracy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub generation: usize,
    /// Best error in the population, `+∞` while nothing is feasible.
    pub best_error: f64,
    pub feasible_count: usize,
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: FitnessRecord,
    /// One row per generation, starting with generation 0.
    pub trace: Vec<TraceRow>,
    pub final_population: Vec<FitnessRecord>,
    /// Distinct index sets whose fitness was computed.
    pub evaluations: usize,
}

/// Runs the GA from `start` for `cfg.generations` generations after the
/// initial one.
pub fn evolve(
    start: &IndexSet,
    lib: &RegimeLibrary,
    validation: &[LabeledState],
    cfg: &GaConfig,
) -> Result<GaOutcome> {
    cfg.validate()?;
    if start.n() != lib.n() {
        return Err(Error::Dimension(format!(
            "start indices over n = {}, library has n = {}",
            start.n(),
            lib.n()
        )));
    }
    let mut cache: HashMap<Vec<usize>, FitnessRecord> = HashMap::new();
    let mut evaluate = |sets: Vec<IndexSet>, generation: usize| -> Result<Vec<FitnessRecord>> {
        let fresh: Vec<IndexSet> = {
            let mut seen = std::collections::HashSet::new();
            sets.iter()
                .filter(|s| !cache.contains_key(&s.sorted()) && seen.insert(s.sorted()))
                .cloned()
                .collect()
        };
        let scored = par::map(&fresh, |s| fitness_with_noise(s, lib, validation, cfg.noise.as_ref()));
        for (s, rec) in fresh.iter().zip(scored) {
            cache.insert(s.sorted(), rec?);
        }
        Ok(sets
            .into_iter()
            .map(|s| {
                let mut rec = cache[&s.sorted()].clone();
                rec.index_set = s;
                rec.generation = generation;
                rec
            })
            .collect())
    };

    let mut first = vec![start.clone()];
    for slot in 1..cfg.population {
        let mut r = rng::stream(cfg.seed, &[0, slot as u64]);
        first.push(mutate(start, cfg, &mut r)?);
    }
    let mut population = evaluate(first, 0)?;
    population.sort_by(FitnessRecord::rank_cmp);
    let mut trace = vec![trace_row(0, &population)];

    for generation in 1..=cfg.generations {
        let elite = distinct_elite(&population, cfg.elite);
        let mut children = Vec::with_capacity(cfg.population - elite.len());
        for slot in elite.len()..cfg.population {
            let mut r = rng::stream(cfg.seed, &[generation as u64, slot as u64]);
            let parent = &elite[r.random_range(0..elite.len())].index_set;
            children.push(mutate(parent, cfg, &mut r)?);
        }
        let mut next = elite;
        next.extend(evaluate(children, generation)?);
        next.sort_by(FitnessRecord::rank_cmp);
        population = next;
        trace.push(trace_row(generation, &population));
        debug!(
            "generation {generation}: best {:.4e}, {} feasible",
            population[0].error,
            trace[generation].feasible_count
        );
    }

    let best = population[0].clone();
    if !best.feasible {
        warn!(
            "no feasible index set after {} generations; best has {} misclassified states",
            cfg.generations, best.misclassified
        );
    }
    Ok(GaOutcome {
        best,
        trace,
        final_population: population,
        evaluations: cache.len(),
    })
}

fn trace_row(generation: usize, sorted_population: &[FitnessRecord]) -> TraceRow {
    TraceRow {
        generation,
        best_error: sorted_population[0].error,
        feasible_count: sorted_population.iter().filter(|r| r.feasible).count(),
    }
}

fn distinct_elite(sorted_population: &[FitnessRecord], size: usize) -> Vec<FitnessRecord> {
    let mut seen = std::collections::HashSet::new();
    sorted_population
        .iter()
        .filter(|r| seen.insert(r.index_set.sorted()))
        .take(size)
        .cloned()
        .collect()
}
