//! Data-parallel hot paths timed under the active build mode.
//!
//! `cargo bench` measures the rayon build and, in the same run, the same
//! code confined to a one-thread pool. `cargo bench --no-default-features`
//! measures the plain sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;
use sparse_rom::brute::exhaustive_search;
use sparse_rom::deim::{IndexSet, Window};
use sparse_rom::ga::{evolve, GaConfig};
use sparse_rom::library::{build_library, noisy_trials, LabeledState, NoiseConfig, RegimeLibrary};
use sparse_rom::matrix_io::FieldKind;
use sparse_rom::pod::SnapshotSet;
use sparse_rom::{par, CMatrix};

fn problem() -> (RegimeLibrary, Vec<LabeledState>) {
    let n = 256;
    let pulse = |w: f64, t: f64| -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                let x = (i as f64 - n as f64 / 2.0) / 16.0;
                Complex64::from_polar((1.0 + 0.2 * (0.7 * t).sin()) / (x / w).cosh(), 0.9 * t + 0.1 * x * x)
            })
            .collect()
    };
    let widths = [0.6, 1.0, 1.6];
    let sets: Vec<SnapshotSet> = widths
        .iter()
        .map(|&w| {
            let cols: Vec<Vec<Complex64>> = (0..40).map(|t| pulse(w, t as f64 * 0.25)).collect();
            let data = CMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
            SnapshotSet::from_matrix(data, (0..40).map(f64::from).collect(), Some(format!("w{w}")), None, FieldKind::Complex)
                .unwrap()
        })
        .collect();
    let validation = widths
        .iter()
        .enumerate()
        .flat_map(|(k, &w)| {
            (0..5).map(move |j| LabeledState {
                regime: k,
                state: sparse_rom::CVector::from_vec(pulse(w, 0.6 + 1.9 * j as f64)),
            })
        })
        .collect();
    (build_library(&sets, 0.999).unwrap(), validation)
}

fn mode() -> &'static str {
    if par::is_parallel() {
        "rayon"
    } else {
        "sequential"
    }
}

fn variants(c: &mut Criterion, group: &str, f: impl Fn() + Sync) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    g.bench_function(BenchmarkId::new(mode(), "default-pool"), |b| b.iter(&f));
    if par::is_parallel() {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function(BenchmarkId::new(mode(), "one-thread-pool"), |b| b.iter(|| single.install(&f)));
    }
    g.finish();
}

fn benches(c: &mut Criterion) {
    let (lib, validation) = problem();
    let n = lib.n();
    let idx = IndexSet::new(vec![130, 134, 140], n).unwrap();
    variants(c, "noisy_trials_400", || {
        noisy_trials(&lib, &idx, &validation, 0.05, 400, 7).unwrap();
    });
    let noise = NoiseConfig { rounds: 20, sigma_frac: 0.05, ..NoiseConfig::default() };
    let window = Window::new(128, 143).unwrap();
    variants(c, "brute_c16_3", || {
        exhaustive_search(&lib, 3, window, &validation, &noise).unwrap();
    });
    let cfg = GaConfig {
        population: 40,
        elite: 5,
        generations: 4,
        window: Some(window),
        noise: Some(noise),
        ..GaConfig::default()
    };
    variants(c, "ga_pop40_gen4", || {
        evolve(&idx, &lib, &validation, &cfg).unwrap();
    });
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);
