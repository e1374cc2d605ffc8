//! Experiment orchestration: snapshot acquisition, library construction,
//! strategy comparison and run directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::brute::{exhaustive_search, position_histograms, BruteReport};
use crate::config::{provenance_header, ExperimentConfig};
use crate::cqgle::{simulate_regime, GlDomain, GlParams, InitialCondition};
use crate::deim::{deim_plus_k_select, deim_select, IndexSet, Window};
use crate::error::{Error, Result};
use crate::ga::{evolve, fitness_with_noise, GaOutcome};
use crate::gappy::{select_condition_number, select_extrema, select_random};
use crate::integrate::Tolerances;
use crate::library::{noisy_trials, LabeledState, NoiseConfig, RegimeLibrary};
use crate::matrix_io::{format_indices, format_matrix, read_matrix, write_matrix, FieldKind};
use crate::pod::{compute_pod, compute_pod_matrix, PodBasis, SnapshotSet, Truncation};
use crate::rom::nonlinear_snapshots;
use crate::{par, CMatrix};

/// Reads a snapshot matrix file and labels it.
///
/// When `field` is given, the file header must declare that field kind.
pub fn ingest_snapshots(path: impl AsRef<Path>, field: Option<FieldKind>, label: &str) -> Result<SnapshotSet> {
    let path = path.as_ref();
    let (data, kind) = read_matrix(path)?;
    if let Some(want) = field {
        if want != kind {
            return Err(Error::Parse {
                line: 1,
                detail: format!(
                    "{}: header declares field={}, expected field={}",
                    path.display(),
                    kind.as_str(),
                    want.as_str()
                ),
            });
        }
    }
    let times = (0..data.ncols()).map(|j| j as f64).collect();
    SnapshotSet::from_matrix(data, times, Some(label.to_string()), None, kind)
}

/// `count` evenly spread column positions out of `p`, strictly increasing.
pub fn held_out_columns(p: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if count >= p {
        return Err(Error::Validation(format!(
            "cannot hold out {count} of {p} snapshots and keep any for training"
        )));
    }
    Ok((0..count).map(|j| (2 * j + 1) * p / (2 * count)).collect())
}

/// The CQGLE domain described by `cfg`.
pub fn domain_from(cfg: &ExperimentConfig) -> GlDomain {
    GlDomain {
        x_min: cfg.x_min,
        x_max: cfg.x_max,
        n: cfg.grid_n,
        t_final: cfg.t_final,
        snapshot_count: cfg.snapshots,
        initial: InitialCondition::default(),
        discard_transient: cfg.discard_transient,
        tolerances: Tolerances::default().with_rtol(cfg.rtol).with_atol(cfg.atol),
    }
}

/// Snapshot sets for the configured regimes or input files, plus the
/// equation parameters when the data were simulated.
pub fn acquire(cfg: &ExperimentConfig) -> Result<(Vec<SnapshotSet>, Option<Vec<GlParams>>)> {
    if !cfg.inputs.is_empty() {
        let sets = cfg
            .inputs
            .iter()
            .map(|i| ingest_snapshots(&i.path, None, &i.label))
            .collect::<Result<Vec<_>>>()?;
        return Ok((sets, None));
    }
    let domain = domain_from(cfg);
    let sets = par::map(&cfg.regimes, |&r| {
        info!("simulating {r}");
        simulate_regime(r, &domain, cfg.sim_seed)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((sets, Some(cfg.regimes.iter().map(|r| r.params()).collect())))
}

/// Everything a sampling strategy is scored against.
#[derive(Debug, Clone)]
pub struct Problem {
    pub library: RegimeLibrary,
    pub training: Vec<SnapshotSet>,
    pub validation: Vec<LabeledState>,
    /// Per-regime POD of the nonlinear term (of the state itself when no
    /// equation is known).
    pub nonlinear_library: RegimeLibrary,
    /// POD of every regime's nonlinear snapshots taken together.
    pub nonlinear_all: PodBasis,
    pub window: Window,
    pub m: usize,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.library.n()
    }

    /// `Ψ_L` viewed as a single basis, columns in rank-major order.
    pub fn library_basis(&self) -> PodBasis {
        let modes = self.library.interleaved();
        let k = modes.ncols();
        PodBasis {
            label: "library".into(),
            modes,
            singular_values: vec![1.0; k],
            energy_captured: 1.0,
            spectrum: vec![1.0; k],
        }
    }
}

pub fn build_problem(
    sets: &[SnapshotSet],
    params: Option<&[GlParams]>,
    cfg: &ExperimentConfig,
) -> Result<Problem> {
    if let Some(p) = params {
        if p.len() != sets.len() {
            return Err(Error::Dimension(format!("{} parameter sets for {} regimes", p.len(), sets.len())));
        }
    }
    let mut training = Vec::with_capacity(sets.len());
    let mut validation = Vec::new();
    for (k, s) in sets.iter().enumerate() {
        let held = held_out_columns(s.p(), cfg.validation_per_regime)?;
        let (train, val) = s.split_columns(&held)?;
        validation.extend((0..val.p()).map(|j| LabeledState { regime: k, state: val.column(j) }));
        training.push(train);
    }
    let library = crate::library::build_library(&training, cfg.energy)?;
    let nl_sets: Vec<SnapshotSet> = match params {
        Some(p) => training.iter().zip(p).map(|(s, p)| nonlinear_snapshots(s, p)).collect(),
        None => training.clone(),
    };
    let nonlinear_library = crate::library::build_library(&nl_sets, cfg.energy)?;
    let joined = CMatrix::from_columns(
        &nl_sets
            .iter()
            .flat_map(|s| (0..s.p()).map(move |j| s.column(j)))
            .collect::<Vec<_>>(),
    );
    let nonlinear_all = compute_pod_matrix(&joined, Truncation::Energy(cfg.energy), "nonlinear-all".into())?;
    let n = library.n();
    let window = cfg.window.unwrap_or_else(|| Window::full(n));
    window.check(n)?;
    Ok(Problem {
        library,
        training,
        validation,
        nonlinear_library,
        nonlinear_all,
        window,
        m: cfg.m,
    })
}

/// Sampling strategies in scorecard order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Random points in the window.
    Gappy1,
    /// Random points anywhere.
    Gappy2,
    /// Greedy condition-number minimisation, `m` points.
    Gappy3,
    /// Greedy condition-number minimisation, enough points for full rank.
    Gappy4,
    /// Extrema of the library modes.
    Gappy5,
    DeimNlAll,
    DeimPre,
    DeimPlus1Pre,
    Ga,
    Brute,
}

impl Strategy {
    pub const ALL: [Strategy; 10] = [
        Strategy::Gappy1,
        Strategy::Gappy2,
        Strategy::Gappy3,
        Strategy::Gappy4,
        Strategy::Gappy5,
        Strategy::DeimNlAll,
        Strategy::DeimPre,
        Strategy::DeimPlus1Pre,
        Strategy::Ga,
        Strategy::Brute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Gappy1 => "gappy-1",
            Strategy::Gappy2 => "gappy-2",
            Strategy::Gappy3 => "gappy-3",
            Strategy::Gappy4 => "gappy-4",
            Strategy::Gappy5 => "gappy-5",
            Strategy::DeimNlAll => "deim-nl-all",
            Strategy::DeimPre => "deim-pre",
            Strategy::DeimPlus1Pre => "deim+1-pre",
            Strategy::Ga => "ga",
            Strategy::Brute => "brute-force",
        }
    }

    pub fn is_gappy(self) -> bool {
        matches!(
            self,
            Strategy::Gappy1 | Strategy::Gappy2 | Strategy::Gappy3 | Strategy::Gappy4 | Strategy::Gappy5
        )
    }
}

/// DEIM points of the rank-major nonlinearity library, restricted to the
/// window, skipping the first `skip` points.
pub fn library_deim(problem: &Problem, skip: usize) -> Result<IndexSet> {
    let xi = problem.nonlinear_library.interleaved();
    let window = problem.window.positions();
    deim_plus_k_select(&xi, problem.m, skip, Some(&window))
}

/// Indices chosen by a non-evolutionary strategy.
pub fn select(problem: &Problem, strategy: Strategy, seed: u64) -> Result<IndexSet> {
    let n = problem.n();
    let m = problem.m;
    let window = problem.window.positions();
    let lib = problem.library_basis();
    match strategy {
        Strategy::Gappy1 => select_random(n, m, Some(&window), seed),
        Strategy::Gappy2 => select_random(n, m, None, seed),
        Strategy::Gappy3 => select_condition_number(&lib, m, Some(&window)),
        Strategy::Gappy4 => select_condition_number(&lib, lib.rank().max(m).min(window.len()), Some(&window)),
        Strategy::Gappy5 => select_extrema(&lib, m, Some(&window)),
        Strategy::DeimNlAll => deim_select(&problem.nonlinear_all.modes, m, Some(&window)),
        Strategy::DeimPre => library_deim(problem, 0),
        Strategy::DeimPlus1Pre => library_deim(problem, 1),
        Strategy::Ga | Strategy::Brute => Err(Error::Validation(format!(
            "{} is a search, not a selector",
            strategy.name()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub strategy: Strategy,
    pub indices: Option<IndexSet>,
    /// Mean relative reconstruction error over the validation set.
    pub error: f64,
    /// `1 − min` per-regime noisy accuracy.
    pub misclassification: f64,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct Scorecard {
    pub rows: Vec<ScoreRow>,
    pub ga: Option<GaOutcome>,
    pub brute: Option<BruteReport>,
}

impl Scorecard {
    pub fn row(&self, s: Strategy) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.strategy == s)
    }
}

/// Error and misclassification of one index set.
pub fn score(problem: &Problem, idx: &IndexSet, noise: &NoiseConfig) -> Result<(f64, f64)> {
    let rec = fitness_with_noise(idx, &problem.library, &problem.validation, None)?;
    let canonical = IndexSet::new(idx.sorted(), idx.n())?;
    let acc = noisy_trials(
        &problem.library,
        &canonical,
        &problem.validation,
        noise.sigma_frac,
        noise.rounds,
        noise.seed,
    )?;
    let worst = acc.iter().copied().fold(1.0, f64::min);
    Ok((rec.raw_error, 1.0 - worst))
}

/// Scores every strategy. The GA starts from the DEIM+1 points.
pub fn compare_strategies(problem: &Problem, cfg: &ExperimentConfig) -> Result<Scorecard> {
    let noise = cfg.noise();
    let mut rows = Vec::new();
    let mut ga = None;
    let mut brute = None;
    for strategy in Strategy::ALL {
        let (indices, note) = match strategy {
            Strategy::Ga => {
                let start = select(problem, Strategy::DeimPlus1Pre, cfg.seed)?;
                let mut gcfg = cfg.ga_config();
                gcfg.window = Some(problem.window);
                let out = evolve(&start, &problem.library, &problem.validation, &gcfg)?;
                let idx = out.best.index_set.clone();
                let note = if out.best.feasible { String::new() } else { "no feasible set found".into() };
                ga = Some(out);
                (Some(idx), note)
            }
            Strategy::Brute if !cfg.brute => (None, "skipped".into()),
            Strategy::Brute => {
                let report = exhaustive_search(&problem.library, problem.m, problem.window, &problem.validation, &noise)?;
                let idx = report.best().map(|c| c.index_set.clone());
                let note = if idx.is_none() { report.diagnostics() } else { String::new() };
                brute = Some(report);
                (idx, note)
            }
            s => match select(problem, s, cfg.seed) {
                Ok(idx) => (Some(idx), String::new()),
                Err(e) if e.is_numerical() || matches!(e, Error::Validation(_)) => {
                    warn!("{}: {e}", s.name());
                    (None, e.to_string())
                }
                Err(e) => return Err(e),
            },
        };
        let (error, misclassification) = match &indices {
            Some(idx) => score(problem, idx, &noise)?,
            None => (f64::NAN, f64::NAN),
        };
        rows.push(ScoreRow {
            strategy,
            indices,
            error,
            misclassification,
            note,
        });
    }
    Ok(Scorecard { rows, ga, brute })
}

fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.6e}")
    }
}

fn join_indices(idx: &IndexSet) -> String {
    idx.one_based().iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn scorecard_csv(card: &Scorecard, config_hash: &str) -> String {
    let mut s = provenance_header(config_hash);
    s.push_str("strategy,indices,m,error,misclassification,note\n");
    for r in &card.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.strategy.name(),
            r.indices.as_ref().map(join_indices).unwrap_or_default(),
            r.indices.as_ref().map_or(0, IndexSet::len),
            fmt_f(r.error),
            fmt_f(r.misclassification),
            r.note.replace(',', ";")
        );
    }
    s
}

pub fn trace_csv(out: &GaOutcome, config_hash: &str) -> String {
    let mut s = provenance_header(config_hash);
    s.push_str("generation,best_error,feasible_count\n");
    for t in &out.trace {
        let _ = writeln!(s, "{},{},{}", t.generation, fmt_f(t.best_error), t.feasible_count);
    }
    s
}

pub fn brute_csv(report: &BruteReport, config_hash: &str) -> String {
    let mut s = provenance_header(config_hash);
    s.push_str("rank,indices,error,min_regime_accuracy\n");
    for (k, c) in report.ranked.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            k + 1,
            join_indices(&c.index_set),
            fmt_f(c.error),
            fmt_f(c.min_accuracy)
        );
    }
    s
}

pub fn histogram_csv(report: &BruteReport, k: usize, window: Window, config_hash: &str) -> Result<String> {
    let hist = position_histograms(&report.ranked, k, window)?;
    let mut s = provenance_header(config_hash);
    s.push_str("position,index");
    for j in 1..=k {
        let _ = write!(s, ",slot{j}");
    }
    s.push('\n');
    for p in 0..window.len() {
        let _ = write!(s, "{},{}", p + 1, window.at(p) + 1);
        for h in &hist {
            let _ = write!(s, ",{}", h[p]);
        }
        s.push('\n');
    }
    Ok(s)
}

/// Writes each sublibrary as `<id>.txt` plus a `regimes.txt` listing.
pub fn write_library(dir: impl AsRef<Path>, lib: &RegimeLibrary) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (id, b) in lib.regime_ids.iter().zip(&lib.sublibraries) {
        write_matrix(dir.join(format!("{id}.txt")), &b.modes, FieldKind::Complex)?;
    }
    fs::write(dir.join("regimes.txt"), lib.regime_ids.join("\n") + "\n")?;
    Ok(())
}

fn regime_listing(dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join("regimes.txt"))
        .map_err(|e| Error::Validation(format!("{}: {e}", dir.join("regimes.txt").display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub fn read_library(dir: impl AsRef<Path>) -> Result<RegimeLibrary> {
    let dir = dir.as_ref();
    let ids = regime_listing(dir)?;
    let bases = ids
        .iter()
        .map(|id| {
            let (m, _) = read_matrix(dir.join(format!("{id}.txt")))?;
            PodBasis::from_orthonormal(id.clone(), m)
        })
        .collect::<Result<Vec<_>>>()?;
    RegimeLibrary::from_bases(ids, bases)
}

/// Writes validation states as one matrix per regime, columns are states.
pub fn write_validation(dir: impl AsRef<Path>, lib: &RegimeLibrary, states: &[LabeledState]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (k, id) in lib.regime_ids.iter().enumerate() {
        let cols: Vec<_> = states.iter().filter(|s| s.regime == k).map(|s| s.state.clone()).collect();
        if cols.is_empty() {
            continue;
        }
        write_matrix(dir.join(format!("{id}.txt")), &CMatrix::from_columns(&cols), FieldKind::Complex)?;
    }
    fs::write(dir.join("regimes.txt"), lib.regime_ids.join("\n") + "\n")?;
    Ok(())
}

/// Reads validation states written by [`write_validation`], mapping regime
/// ids onto `lib`'s order.
pub fn read_validation(dir: impl AsRef<Path>, lib: &RegimeLibrary) -> Result<Vec<LabeledState>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for id in regime_listing(dir)? {
        let path = dir.join(format!("{id}.txt"));
        if !path.exists() {
            continue;
        }
        let regime = lib
            .position(&id)
            .ok_or_else(|| Error::Validation(format!("validation regime `{id}` is not in the library")))?;
        let (m, _) = read_matrix(&path)?;
        out.extend((0..m.ncols()).map(|j| LabeledState { regime, state: m.column(j).into_owned() }));
    }
    if out.is_empty() {
        return Err(Error::Validation(format!("{}: no validation states", dir.display())));
    }
    Ok(out)
}

/// Stage reached by [`end_to_end`] when it stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Library,
    Compare,
    Reports,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Library => "library",
            Stage::Compare => "compare",
            Stage::Reports => "reports",
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub result: std::result::Result<Scorecard, (Stage, Error)>,
}

/// Runs the full pipeline into `cfg.output_dir`, writing `status.txt` with
/// `ok` or `failed: <stage>: <reason>`.
pub fn end_to_end(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    let result = run_stages(cfg, &dir);
    let status = match &result {
        Ok(_) => "ok\n".to_string(),
        Err((stage, e)) => format!("failed: {}: {}\n", stage.name(), e.to_string().replace('\n', " ")),
    };
    fs::write(dir.join("status.txt"), status)?;
    Ok(RunOutcome { dir, result })
}

fn run_stages(cfg: &ExperimentConfig, dir: &Path) -> std::result::Result<Scorecard, (Stage, Error)> {
    let at = |stage: Stage| move |e: Error| (stage, e);
    cfg.validate().map_err(at(Stage::Config))?;
    let hash = cfg.hash();
    let (sets, params) = acquire(cfg).map_err(at(Stage::Ingest))?;
    let problem = build_problem(&sets, params.as_deref(), cfg).map_err(at(Stage::Library))?;
    write_library(dir.join("library"), &problem.library).map_err(at(Stage::Library))?;
    write_validation(dir.join("validation"), &problem.library, &problem.validation).map_err(at(Stage::Library))?;
    let card = compare_strategies(&problem, cfg).map_err(at(Stage::Compare))?;
    let write = |name: &str, text: String| fs::write(dir.join(name), text).map_err(|e| (Stage::Reports, e.into()));
    write("scorecard.csv", scorecard_csv(&card, &hash))?;
    if let Some(ga) = &card.ga {
        write("ga_trace.csv", trace_csv(ga, &hash))?;
        write("ga_indices.txt", format_indices(&ga.best.index_set.one_based()))?;
    }
    if let Some(b) = &card.brute {
        write("brute.csv", brute_csv(b, &hash))?;
        write(
            "histograms.csv",
            histogram_csv(b, problem.m, problem.window, &hash).map_err(at(Stage::Reports))?,
        )?;
    }
    for s in [Strategy::DeimPre, Strategy::DeimPlus1Pre] {
        if let Some(idx) = card.row(s).and_then(|r| r.indices.as_ref()) {
            write(&format!("{}_indices.txt", s.name()), format_indices(&idx.one_based()))?;
        }
    }
    Ok(card)
}

/// Writes a snapshot set in the shared matrix format.
pub fn write_snapshots(path: impl AsRef<Path>, set: &SnapshotSet) -> Result<()> {
    write_matrix(path, &set.data, set.field)
}

/// Text form of a snapshot set (for byte-level comparisons).
pub fn snapshots_text(set: &SnapshotSet) -> String {
    format_matrix(&set.data, set.field)
}

/// POD of an ingested or simulated set, for the `pod` command.
pub fn pod_of(set: &SnapshotSet, energy: Option<f64>, rank: Option<usize>) -> Result<PodBasis> {
    let t = match (rank, energy) {
        (Some(r), _) => Truncation::Rank(r),
        (None, Some(e)) => Truncation::Energy(e),
        (None, None) => Truncation::Energy(0.999),
    };
    compute_pod(set, t)
}

/// Relative error of a reduced trajectory against the full snapshots.
#[derive(Debug, Clone)]
pub struct RomComparison {
    pub rank: usize,
    pub m: usize,
    pub indices: IndexSet,
    /// `(t, ‖u_rom − u_full‖ / ‖u_full‖)` at each snapshot time in the span.
    pub errors: Vec<(f64, f64)>,
}

/// Builds a ROM from `full` (snapshots of `params` on `domain`), starts it
/// from the snapshot nearest `t0` and compares against every snapshot up
/// to `t1`.
pub fn rom_vs_full(
    full: &SnapshotSet,
    params: &GlParams,
    domain: &GlDomain,
    state_truncation: Truncation,
    m: usize,
    indices: Option<&IndexSet>,
    (t0, t1): (f64, f64),
) -> Result<RomComparison> {
    if !(t1 > t0) {
        return Err(Error::Validation(format!("empty time span {t0}:{t1}")));
    }
    let nearest = |t: f64| {
        full.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(j, _)| j)
            .unwrap_or(0)
    };
    let j0 = nearest(t0);
    let cols: Vec<usize> = (j0..full.p()).filter(|&j| full.times[j] <= t1 + 1e-9).collect();
    let model = crate::rom::cqgle_rom(params, domain, full, state_truncation, m, indices)?;
    let a0 = model.project(&full.column(j0))?;
    let times: Vec<f64> = cols.iter().map(|&j| full.times[j]).collect();
    let (traj, _) = crate::rom::rom_integrate(&model, &a0, full.times[j0], &times, &domain.tolerances, &|z| {
        params.nonlinear(z)
    })?;
    let errors = cols
        .iter()
        .zip(&traj)
        .map(|(&j, a)| {
            let u = model.reconstruct(a)?;
            Ok((full.times[j], crate::gappy::reconstruction_error(&full.column(j), &u)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RomComparison {
        rank: model.rank(),
        m: model.m(),
        indices: model.sample_rows.clone(),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn held_out_columns_are_spread() {
        assert_eq!(held_out_columns(151, 10).unwrap(), vec![7, 22, 37, 52, 67, 83, 98, 113, 128, 143]);
        assert!(held_out_columns(5, 5).is_err());
        assert!(held_out_columns(5, 0).unwrap().is_empty());
    }

    #[test]
    fn strategy_order_is_fixed() {
        let names: Vec<_> = Strategy::ALL.iter().map(|s| s.name()).collect();
        assert_eq!(names.first(), Some(&"gappy-1"));
        assert_eq!(names.last(), Some(&"brute-force"));
        assert_eq!(names.len(), 10);
    }
}
