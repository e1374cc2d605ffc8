use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparse_rom::brute::exhaustive_search;
use sparse_rom::config::{provenance_header, sha256_hex, ExperimentConfig};
use sparse_rom::cqgle::{simulate_regime, Regime};
use sparse_rom::deim::{deim_plus_k_select, IndexSet, Window};
use sparse_rom::ga::evolve;
use sparse_rom::gappy::{gappy_fit, reconstruct, reconstruction_error, GappySystem};
use sparse_rom::library::{noisy_trials, SampledLibrary};
use sparse_rom::matrix_io::{format_indices, parse_indices, read_matrix, write_matrix, FieldKind};
use sparse_rom::pipeline::{self, Strategy};
use sparse_rom::pod::{PodBasis, Truncation};
use sparse_rom::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "sparse-rom", version, about = "Sparse sampling and reduced-order modelling across dynamical regimes")]
struct Cli {
    /// key = value configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one CQGLE regime and write its snapshot matrix.
    Simulate(SimulateArgs),
    /// POD modes of a snapshot matrix.
    Pod(PodArgs),
    /// DEIM (or DEIM+k) interpolation indices of a basis.
    Deim(DeimArgs),
    /// Gappy reconstruction of states from sampled entries.
    GappyFit(GappyArgs),
    /// Classify states against a regime library.
    Classify(ClassifyArgs),
    /// Refine interpolation indices with the genetic algorithm.
    Ga(GaArgs),
    /// Exhaustive search over a window.
    Brute(BruteArgs),
    /// Integrate a reduced model and compare with the full simulation.
    Rom(RomArgs),
    /// Score every sampling strategy on one library.
    Compare(CompareArgs),
    /// Full pipeline into an output directory.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    regime: Regime,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tfinal: Option<f64>,
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Drop the first quarter of the snapshots.
    #[arg(long)]
    discard_transient: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PodArgs {
    #[arg(long)]
    snapshots: PathBuf,
    #[arg(long, conflicts_with = "rank")]
    energy: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// CSV of the singular spectrum.
    #[arg(long)]
    spectrum: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DeimArgs {
    #[arg(long)]
    basis: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    drop_first: usize,
    /// Restrict selection to `lo:hi[:stride]` (1-based, inclusive).
    #[arg(long)]
    window: Option<Window>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GappyArgs {
    #[arg(long)]
    library: PathBuf,
    #[arg(long)]
    indices: PathBuf,
    /// Full states, one per column.
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Reconstructed states.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    accuracy: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    library_dir: PathBuf,
    #[arg(long)]
    indices: PathBuf,
    #[arg(long)]
    state: PathBuf,
    /// True regime of every state; enables the noisy accuracy trial.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct GaArgs {
    #[arg(long)]
    start: PathBuf,
    #[arg(long)]
    library_dir: PathBuf,
    #[arg(long)]
    validation: PathBuf,
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long)]
    elite: Option<usize>,
    #[arg(long)]
    gens: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window: Option<Window>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    mutation_prob: Option<f64>,
    /// Also require noisy classification accuracy for feasibility.
    #[arg(long)]
    noise_gate: Option<bool>,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BruteArgs {
    #[arg(long)]
    library_dir: PathBuf,
    #[arg(long)]
    validation: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    window: Option<Window>,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    histograms: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RomArgs {
    #[arg(long)]
    regime: Regime,
    /// `auto` (energy threshold) or a fixed rank.
    #[arg(long, default_value = "auto")]
    rank: String,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long)]
    indices: Option<PathBuf>,
    /// `t0:t1`; the reduced model starts from the snapshot nearest `t0`.
    #[arg(long, default_value = "10:20")]
    tspan: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

/// Explicit window, else the configured one if it fits the grid, else the
/// whole domain.
fn window_for(explicit: Option<Window>, cfg: &ExperimentConfig, n: usize) -> Window {
    if let Some(w) = explicit {
        return w;
    }
    match cfg.window {
        Some(w) if w.check(n).is_ok() => w,
        Some(w) => {
            log::warn!("configured window {w} does not fit n = {n}; searching the whole domain");
            Window::full(n)
        }
        None => Window::full(n),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn read_index_file(path: &Path, n: usize) -> Result<IndexSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    IndexSet::from_one_based(&parse_indices(&text)?, n)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::write(path, text)?)
}

fn header(cfg: &ExperimentConfig, cmd: &impl std::fmt::Debug) -> String {
    provenance_header(&sha256_hex(format!("{}{cmd:?}", cfg.to_text()).as_bytes()))
}

fn apply_noise(cfg: &mut ExperimentConfig, a: &NoiseArgs) {
    if let Some(x) = a.noise {
        cfg.noise_sigma_frac = x;
    }
    if let Some(x) = a.rounds {
        cfg.noise_rounds = x;
    }
    if let Some(x) = a.accuracy {
        cfg.accuracy_threshold = x;
    }
    if let Some(x) = a.noise_seed {
        cfg.noise_seed = x;
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => {
            if let Some(n) = a.n {
                cfg.grid_n = n;
            }
            if let Some(t) = a.tfinal {
                cfg.t_final = t;
            }
            if let Some(s) = a.snapshots {
                cfg.snapshots = s;
            }
            if let Some(s) = a.seed {
                cfg.sim_seed = s;
            }
            let mut domain = pipeline::domain_from(&cfg);
            domain.discard_transient = a.discard_transient;
            let set = simulate_regime(a.regime, &domain, cfg.sim_seed)?;
            write_matrix(&a.out, &set.data, FieldKind::Complex)?;
            println!("{}: {} snapshots of n = {}", a.regime, set.p(), set.n());
        }
        Command::Pod(ref a) => {
            let set = pipeline::ingest_snapshots(&a.snapshots, None, "snapshots")?;
            let basis = pipeline::pod_of(&set, a.energy.or(Some(cfg.energy)), a.rank)?;
            write_matrix(&a.out, &basis.modes, set.field)?;
            if let Some(path) = &a.spectrum {
                let mut s = header(&cfg, &cli.command);
                s.push_str("mode,singular_value,cumulative_energy\n");
                let total: f64 = basis.spectrum.iter().map(|x| x * x).sum();
                let mut acc = 0.0;
                for (k, sv) in basis.spectrum.iter().enumerate() {
                    acc += sv * sv;
                    let _ = writeln!(s, "{},{sv:.6e},{:.9}", k + 1, acc / total);
                }
                write_text(path, &s)?;
            }
            println!("rank {} captures {:.6} of the energy", basis.rank(), basis.energy_captured);
        }
        Command::Deim(a) => {
            let (modes, _) = read_matrix(&a.basis)?;
            let window = a.window.or(None);
            if let Some(w) = window {
                w.check(modes.nrows())?;
            }
            let positions = window.map(|w| w.positions());
            let idx = deim_plus_k_select(&modes, a.m, a.drop_first, positions.as_deref())?;
            write_text(&a.out, &format_indices(&idx.one_based()))?;
            println!("{}", format_indices(&idx.one_based()).trim_end().replace('\n', " "));
        }
        Command::GappyFit(ref a) => {
            let (modes, _) = read_matrix(&a.library)?;
            let basis = PodBasis::from_orthonormal("library", modes)?;
            let (states, field) = read_matrix(&a.state)?;
            if states.nrows() != basis.n() {
                return Err(Error::Dimension(format!(
                    "states have n = {}, library has n = {}",
                    states.nrows(),
                    basis.n()
                )));
            }
            let idx = read_index_file(&a.indices, basis.n())?;
            let sys = GappySystem::new(&basis, &idx)?;
            let mut report = header(&cfg, &cli.command);
            report.push_str("snapshot_index,rel_error\n");
            let mut recs = Vec::new();
            for j in 0..states.ncols() {
                let u = states.column(j).into_owned();
                let rec = reconstruct(&sys, &gappy_fit(&sys, &idx.sample(&u)?)?)?;
                let _ = writeln!(report, "{},{:.6e}", j + 1, reconstruction_error(&u, &rec));
                recs.push(rec);
            }
            write_text(&a.report, &report)?;
            if let Some(out) = &a.out {
                write_matrix(out, &sparse_rom::CMatrix::from_columns(&recs), field)?;
            }
        }
        Command::Classify(ref a) => {
            let lib = pipeline::read_library(&a.library_dir)?;
            let idx = read_index_file(&a.indices, lib.n())?;
            let (states, _) = read_matrix(&a.state)?;
            let sampled = SampledLibrary::new(&lib, &idx)?;
            let mut report = header(&cfg, &cli.command);
            report.push_str("state,predicted,margin");
            for id in &lib.regime_ids {
                let _ = write!(report, ",residual_{id}");
            }
            report.push('\n');
            let mut labeled = Vec::new();
            for j in 0..states.ncols() {
                let u = states.column(j).into_owned();
                let res = sampled.classify(&lib, &idx.sample(&u)?)?;
                let _ = write!(report, "{},{},{:.6e}", j + 1, res.predicted_id, res.margin);
                for r in &res.residuals {
                    let _ = write!(report, ",{r:.6e}");
                }
                report.push('\n');
                println!("state {}: {}", j + 1, res.predicted_id);
                if let Some(label) = &a.label {
                    let regime = lib
                        .position(label)
                        .ok_or_else(|| Error::Validation(format!("unknown regime `{label}`")))?;
                    labeled.push(sparse_rom::library::LabeledState { regime, state: u });
                }
            }
            if !labeled.is_empty() {
                let acc = noisy_trials(
                    &lib,
                    &idx,
                    &labeled,
                    a.noise.unwrap_or(cfg.noise_sigma_frac),
                    a.rounds.unwrap_or(cfg.noise_rounds),
                    a.seed.unwrap_or(cfg.noise_seed),
                )?;
                let k = labeled[0].regime;
                let _ = writeln!(report, "# noisy accuracy for {}: {:.4}", lib.regime_ids[k], acc[k]);
                println!("noisy accuracy {:.4}", acc[k]);
            }
            write_text(&a.report, &report)?;
        }
        Command::Ga(ref a) => {
            apply_noise(&mut cfg, &a.noise);
            let lib = pipeline::read_library(&a.library_dir)?;
            let validation = pipeline::read_validation(&a.validation, &lib)?;
            let start = read_index_file(&a.start, lib.n())?;
            let mut g = cfg.ga_config();
            g.population = a.pop.unwrap_or(g.population);
            g.elite = a.elite.unwrap_or(g.elite);
            g.generations = a.gens.unwrap_or(g.generations);
            g.seed = a.seed.unwrap_or(g.seed);
            g.mutation_radius = a.radius.unwrap_or(g.mutation_radius);
            g.mutation_prob = a.mutation_prob.unwrap_or(g.mutation_prob);
            g.window = Some(window_for(a.window, &cfg, lib.n()));
            if let Some(gate) = a.noise_gate {
                g.noise = gate.then(|| cfg.noise());
            }
            let out = evolve(&start, &lib, &validation, &g)?;
            let hash = sha256_hex(format!("{}{:?}", cfg.to_text(), cli.command).as_bytes());
            write_text(&a.trace, &pipeline::trace_csv(&out, &hash))?;
            write_text(&a.out, &format_indices(&out.best.index_set.one_based()))?;
            println!(
                "best error {:.6e} (feasible: {}) at {:?}",
                out.best.error,
                out.best.feasible,
                out.best.index_set.one_based()
            );
        }
        Command::Brute(ref a) => {
            apply_noise(&mut cfg, &a.noise);
            let lib = pipeline::read_library(&a.library_dir)?;
            let validation = pipeline::read_validation(&a.validation, &lib)?;
            let window = window_for(a.window, &cfg, lib.n());
            let report = exhaustive_search(&lib, a.k, window, &validation, &cfg.noise())?;
            let hash = sha256_hex(format!("{}{:?}", cfg.to_text(), cli.command).as_bytes());
            write_text(&a.out, &pipeline::brute_csv(&report, &hash))?;
            if let Some(h) = &a.histograms {
                write_text(h, &pipeline::histogram_csv(&report, a.k, window, &hash)?)?;
            }
            println!("{}", report.diagnostics());
        }
        Command::Rom(ref a) => {
            if let Some(n) = a.n {
                cfg.grid_n = n;
            }
            let (t0, t1) = a
                .tspan
                .split_once(':')
                .and_then(|(x, y)| Some((x.trim().parse::<f64>().ok()?, y.trim().parse::<f64>().ok()?)))
                .ok_or_else(|| Error::Validation(format!("tspan `{}` is not t0:t1", a.tspan)))?;
            let truncation = match a.rank.as_str() {
                "auto" => Truncation::Energy(cfg.energy),
                r => Truncation::Rank(
                    r.parse()
                        .map_err(|_| Error::Validation(format!("rank `{r}` is neither auto nor an integer")))?,
                ),
            };
            let mut domain = pipeline::domain_from(&cfg);
            domain.discard_transient = false;
            let params = a.regime.params();
            let full = simulate_regime(a.regime, &domain, cfg.sim_seed)?;
            let indices = a.indices.as_deref().map(|p| read_index_file(p, domain.n)).transpose()?;
            let cmp = pipeline::rom_vs_full(&full, &params, &domain, truncation, a.m, indices.as_ref(), (t0, t1))?;
            let mut s = header(&cfg, &cli.command);
            s.push_str("t,rom_vs_full_rel_error\n");
            for (t, e) in &cmp.errors {
                let _ = writeln!(s, "{t},{e:.6e}");
            }
            write_text(&a.report, &s)?;
            let worst = cmp.errors.iter().map(|p| p.1).fold(0.0, f64::max);
            println!("rank {}, m = {}, worst relative error {worst:.3e}", cmp.rank, cmp.m);
        }
        Command::Compare(a) => {
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let (sets, params) = pipeline::acquire(&cfg)?;
            let problem = pipeline::build_problem(&sets, params.as_deref(), &cfg)?;
            let card = pipeline::compare_strategies(&problem, &cfg)?;
            let csv = pipeline::scorecard_csv(&card, &cfg.hash());
            match &a.out {
                Some(p) => write_text(p, &csv)?,
                None => print!("{csv}"),
            }
            if let Some(r) = card.row(Strategy::Brute).filter(|r| r.indices.is_none()) {
                eprintln!("brute force: {}", r.note);
            }
        }
        Command::Run(a) => {
            if let Some(d) = a.output_dir {
                cfg.output_dir = d;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let outcome = pipeline::end_to_end(&cfg)?;
            match outcome.result {
                Ok(_) => println!("run complete: {}", outcome.dir.display()),
                Err((stage, e)) => {
                    eprintln!("stage {} failed", stage.name());
                    return Err(e);
                }
            }
        }
    }
    Ok(())
}
