//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors. The
//! canonical rendering (every key, fixed order) is what gets echoed into run
//! directories and hashed for CSV provenance headers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::cqgle::Regime;
use crate::deim::Window;
use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::library::NoiseConfig;

/// A labelled snapshot file to ingest instead of simulating.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub regimes: Vec<Regime>,
    /// When nonempty, snapshots come from these files and `regimes` is unused.
    pub inputs: Vec<InputSpec>,
    pub energy: f64,
    pub grid_n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub t_final: f64,
    pub snapshots: usize,
    pub discard_transient: bool,
    pub rtol: f64,
    pub atol: f64,
    pub sim_seed: u64,
    pub validation_per_regime: usize,
    /// Number of interpolation points.
    pub m: usize,
    /// `None` means the whole domain.
    pub window: Option<Window>,
    pub population: usize,
    pub elite: usize,
    pub generations: usize,
    pub mutation_prob: f64,
    pub mutation_radius: usize,
    pub ga_noise_gate: bool,
    pub seed: u64,
    pub noise_sigma_frac: f64,
    pub noise_rounds: usize,
    pub accuracy_threshold: f64,
    pub noise_seed: u64,
    pub brute: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let noise = NoiseConfig::default();
        let ga = GaConfig::default();
        ExperimentConfig {
            regimes: vec![Regime::B1, Regime::B3, Regime::B5],
            inputs: Vec::new(),
            energy: 0.999,
            grid_n: 1024,
            x_min: -20.0,
            x_max: 20.0,
            t_final: 40.0,
            snapshots: 201,
            discard_transient: true,
            rtol: 1e-8,
            atol: 1e-10,
            sim_seed: 0,
            validation_per_regime: 10,
            m: 3,
            window: Some(Window { lo: 512, hi: 544, stride: 1 }),
            population: ga.population,
            elite: ga.elite,
            generations: ga.generations,
            mutation_prob: ga.mutation_prob,
            mutation_radius: ga.mutation_radius,
            ga_noise_gate: true,
            seed: ga.seed,
            noise_sigma_frac: noise.sigma_frac,
            noise_rounds: noise.rounds,
            accuracy_threshold: noise.accuracy_threshold,
            noise_seed: noise.seed,
            brute: true,
            output_dir: PathBuf::from("run"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "regimes",
    "inputs",
    "energy",
    "grid_n",
    "x_min",
    "x_max",
    "t_final",
    "snapshots",
    "discard_transient",
    "rtol",
    "atol",
    "sim_seed",
    "validation_per_regime",
    "m",
    "window",
    "population",
    "elite",
    "generations",
    "mutation_prob",
    "mutation_radius",
    "ga_noise_gate",
    "seed",
    "noise_sigma_frac",
    "noise_rounds",
    "accuracy_threshold",
    "noise_seed",
    "brute",
    "output_dir",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                detail: format!("expected key = value, got `{line}`"),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "regimes" => {
                self.regimes = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            "inputs" => {
                self.inputs = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| {
                        let (label, path) = s.split_once('=').or_else(|| s.split_once(':')).ok_or_else(|| {
                            Error::Config(format!("`inputs`: entry `{s}` is not label:path"))
                        })?;
                        Ok(InputSpec {
                            label: label.trim().to_string(),
                            path: PathBuf::from(path.trim()),
                        })
                    })
                    .collect::<Result<_>>()?
            }
            "energy" => self.energy = num(key, value)?,
            "grid_n" => self.grid_n = num(key, value)?,
            "x_min" => self.x_min = num(key, value)?,
            "x_max" => self.x_max = num(key, value)?,
            "t_final" => self.t_final = num(key, value)?,
            "snapshots" => self.snapshots = num(key, value)?,
            "discard_transient" => self.discard_transient = flag(key, value)?,
            "rtol" => self.rtol = num(key, value)?,
            "atol" => self.atol = num(key, value)?,
            "sim_seed" => self.sim_seed = num(key, value)?,
            "validation_per_regime" => self.validation_per_regime = num(key, value)?,
            "m" => self.m = num(key, value)?,
            "window" => {
                self.window = match value.trim() {
                    "" | "all" | "full" => None,
                    v => Some(v.parse()?),
                }
            }
            "population" => self.population = num(key, value)?,
            "elite" => self.elite = num(key, value)?,
            "generations" => self.generations = num(key, value)?,
            "mutation_prob" => self.mutation_prob = num(key, value)?,
            "mutation_radius" => self.mutation_radius = num(key, value)?,
            "ga_noise_gate" => self.ga_noise_gate = flag(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "noise_sigma_frac" => self.noise_sigma_frac = num(key, value)?,
            "noise_rounds" => self.noise_rounds = num(key, value)?,
            "accuracy_threshold" => self.accuracy_threshold = num(key, value)?,
            "noise_seed" => self.noise_seed = num(key, value)?,
            "brute" => self.brute = flag(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() && self.regimes.len() < 2 {
            return Err(Error::Config("at least two regimes are required".into()));
        }
        if !self.inputs.is_empty() && self.inputs.len() < 2 {
            return Err(Error::Config("at least two inputs are required".into()));
        }
        if !(self.energy > 0.0 && self.energy <= 1.0) {
            return Err(Error::Config(format!("energy {} outside (0, 1]", self.energy)));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        if !(self.noise_sigma_frac >= 0.0) || !(0.0..=1.0).contains(&self.accuracy_threshold) {
            return Err(Error::Config("noise settings out of range".into()));
        }
        self.ga_config().validate()
    }

    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig {
            sigma_frac: self.noise_sigma_frac,
            rounds: self.noise_rounds,
            accuracy_threshold: self.accuracy_threshold,
            seed: self.noise_seed,
        }
    }

    pub fn ga_config(&self) -> GaConfig {
        GaConfig {
            population: self.population,
            elite: self.elite,
            generations: self.generations,
            mutation_prob: self.mutation_prob,
            mutation_radius: self.mutation_radius,
            window: self.window,
            seed: self.seed,
            noise: self.ga_noise_gate.then(|| self.noise()),
        }
    }

    /// Every key in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.value_of(key));
        }
        s
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "regimes" => self.regimes.iter().map(|r| r.label()).collect::<Vec<_>>().join(","),
            "inputs" => self
                .inputs
                .iter()
                .map(|i| format!("{}:{}", i.label, i.path.display()))
                .collect::<Vec<_>>()
                .join(","),
            "energy" => self.energy.to_string(),
            "grid_n" => self.grid_n.to_string(),
            "x_min" => self.x_min.to_string(),
            "x_max" => self.x_max.to_string(),
            "t_final" => self.t_final.to_string(),
            "snapshots" => self.snapshots.to_string(),
            "discard_transient" => self.discard_transient.to_string(),
            "rtol" => self.rtol.to_string(),
            "atol" => self.atol.to_string(),
            "sim_seed" => self.sim_seed.to_string(),
            "validation_per_regime" => self.validation_per_regime.to_string(),
            "m" => self.m.to_string(),
            "window" => self.window.map_or_else(|| "all".into(), |w| w.to_string()),
            "population" => self.population.to_string(),
            "elite" => self.elite.to_string(),
            "generations" => self.generations.to_string(),
            "mutation_prob" => self.mutation_prob.to_string(),
            "mutation_radius" => self.mutation_radius.to_string(),
            "ga_noise_gate" => self.ga_noise_gate.to_string(),
            "seed" => self.seed.to_string(),
            "noise_sigma_frac" => self.noise_sigma_frac.to_string(),
            "noise_rounds" => self.noise_rounds.to_string(),
            "accuracy_threshold" => self.accuracy_threshold.to_string(),
            "noise_seed" => self.noise_seed.to_string(),
            "brute" => self.brute.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            _ => unreachable!("key list and renderer out of sync"),
        }
    }

    /// SHA-256 of the canonical rendering, hex encoded.
    /// Hash of every setting that affects results; the output directory is
    /// left out so identical experiments written to different places match.
    pub fn hash(&self) -> String {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("output_dir "))
            .map(|l| format!("{l}\n"))
            .collect();
        sha256_hex(text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `# <tool> <version> config=<hash>` line prefixed to every CSV.
pub fn provenance_header(config_hash: &str) -> String {
    format!("# sparse-rom {} config={config_hash}\n", crate::VERSION)
}
