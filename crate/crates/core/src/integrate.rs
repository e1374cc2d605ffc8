//! Adaptive embedded Runge-Kutta 5(4) (Dormand-Prince) with an optional
//! diagonal integrating factor.
//!
//! For `y' = L y + N(t, y)` with `L` diagonal, the stiff linear part is
//! propagated exactly through `exp(L s)` factors inside every stage
//! (Lawson form). Without a linear part the scheme reduces to the plain
//! Dormand-Prince pair.

use num_complex::Complex64;

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B_HAT: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Error-control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: 1e-4,
            h_min: 1e-12,
            h_max: 0.5,
        }
    }
}

impl Tolerances {
    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }
    pub fn with_atol(mut self, atol: f64) -> Self {
        self.atol = atol;
        self
    }
}

/// Counters accumulated over an integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Integrates `y' = diag(lin) y + rhs(t, y)` and records `y` at every time in
/// `outputs` (which must be nondecreasing and start at or after `t0`).
///
/// `rhs` writes the nonlinear part into its output buffer. With `lin = None`
/// it must return the whole right-hand side.
pub fn integrate<F>(
    lin: Option<&[Complex64]>,
    mut rhs: F,
    t0: f64,
    y0: &[Complex64],
    outputs: &[f64],
    tol: &Tolerances,
) -> Result<(Vec<Vec<Complex64>>, StepStats)>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()>,
{
    let n = y0.len();
    if let Some(l) = lin {
        if l.len() != n {
            return Err(Error::Dimension(format!(
                "linear diagonal has {} entries, state has {n}",
                l.len()
            )));
        }
    }
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs.first().is_some_and(|&t| t < t0) {
        return Err(Error::Validation(
            "output times must be nondecreasing and not before t0".into(),
        ));
    }

    let mut stats = StepStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = snap_to_ladder(tol.h_init);
    let mut k: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); n]; 7];
    let mut stage = vec![Complex64::default(); n];
    let mut y_new = vec![Complex64::default(); n];
    let mut err_vec = vec![Complex64::default(); n];
    let mut expo = ExpCache::new(lin);
    let mut fsal_valid = false;
    let mut out = Vec::with_capacity(outputs.len());

    for &target in outputs {
        while t < target {
            let remaining = target - t;
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };

            expo.prepare(h_try);
            if !fsal_valid {
                rhs(t, &y, &mut k[0])?;
                stats.rhs_evals += 1;
            }

            let mut finite = true;
            for i in 1..7 {
                match expo.slice(expo.y_slot[i]) {
                    Some(e) => stage.iter_mut().zip(e).zip(&y).for_each(|((s, &f), &v)| *s = f * v),
                    None => stage.copy_from_slice(&y),
                }
                for (j, kj) in k.iter().enumerate().take(i) {
                    let a = A[i][j];
                    if a == 0.0 {
                        continue;
                    }
                    let w = h_try * a;
                    match expo.slice(expo.k_slot[i][j]) {
                        Some(e) => stage
                            .iter_mut()
                            .zip(e)
                            .zip(kj)
                            .for_each(|((s, &f), &kv)| *s += f * kv * w),
                        None => stage.iter_mut().zip(kj).for_each(|(s, &kv)| *s += kv * w),
                    }
                }
                if i == 6 {
                    y_new.copy_from_slice(&stage);
                }
                let (_, tail) = k.split_at_mut(i);
                match rhs(t + C[i] * h_try, &stage, &mut tail[0]) {
                    Ok(()) => {}
                    Err(Error::Divergence { .. }) => finite = false,
                    Err(e) => return Err(e),
                }
                stats.rhs_evals += 1;
                if !finite || tail[0].iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    finite = false;
                    break;
                }
            }

            let err = if finite {
                err_vec.fill(Complex64::default());
                for j in 0..7 {
                    let db = B[j] - B_HAT[j];
                    if db == 0.0 {
                        continue;
                    }
                    let w = h_try * db;
                    match expo.slice(expo.e_slot[j]) {
                        Some(e) => err_vec
                            .iter_mut()
                            .zip(e)
                            .zip(&k[j])
                            .for_each(|((acc, &f), &kv)| *acc += f * kv * w),
                        None => err_vec.iter_mut().zip(&k[j]).for_each(|(acc, &kv)| *acc += kv * w),
                    }
                }
                let mut acc = 0.0;
                for ((e, a), b) in err_vec.iter().zip(&y).zip(&y_new) {
                    let scale = tol.atol + tol.rtol * a.norm_sqr().max(b.norm_sqr()).sqrt();
                    acc += e.norm_sqr() / (scale * scale);
                }
                (acc / n.max(1) as f64).sqrt()
            } else {
                f64::INFINITY
            };

            if err <= 1.0 {
                stats.accepted += 1;
                t = if last { target } else { t + h_try };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                fsal_valid = true;
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last || fac < 1.0 {
                    h = snap_to_ladder((h_try * fac).min(tol.h_max));
                }
            } else {
                stats.rejected += 1;
                fsal_valid = true;
                let fac = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
                } else {
                    0.25
                };
                h = snap_to_ladder(h_try * fac);
                if h < tol.h_min {
                    return Err(Error::Divergence {
                        time: t,
                        detail: format!("step size {h:.3e} below minimum {:.3e}", tol.h_min),
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

/// Steps snap to `2^(j / LADDER)` so the exponential factors of recurring
/// step sizes can be reused.
const LADDER: f64 = 8.0;
const CACHE_LIMIT: usize = 48;

fn snap_to_ladder(h: f64) -> f64 {
    (2f64).powf((h.log2() * LADDER).floor() / LADDER)
}

/// Cache of `exp(lin * d * h)` for the stage offsets `d` of the tableau.
struct ExpCache<'a> {
    lin: Option<&'a [Complex64]>,
    offsets: Vec<f64>,
    current: usize,
    entries: Vec<(u64, Vec<Vec<Complex64>>)>,
    y_slot: [usize; 7],
    k_slot: [[usize; 7]; 7],
    e_slot: [usize; 7],
}

impl<'a> ExpCache<'a> {
    fn new(lin: Option<&'a [Complex64]>) -> Self {
        let mut offsets: Vec<f64> = Vec::new();
        let mut slot = |d: f64| -> usize {
            match offsets.iter().position(|&o| (o - d).abs() < 1e-15) {
                Some(p) => p,
                None => {
                    offsets.push(d);
                    offsets.len() - 1
                }
            }
        };
        let mut y_slot = [0; 7];
        let mut k_slot = [[0; 7]; 7];
        let mut e_slot = [0; 7];
        for i in 0..7 {
            y_slot[i] = slot(C[i]);
            e_slot[i] = slot(1.0 - C[i]);
            for j in 0..i {
                k_slot[i][j] = slot(C[i] - C[j]);
            }
        }
        ExpCache {
            lin,
            offsets,
            current: 0,
            entries: Vec::new(),
            y_slot,
            k_slot,
            e_slot,
        }
    }

    fn prepare(&mut self, h: f64) {
        let Some(lin) = self.lin else { return };
        let key = h.to_bits();
        if let Some(pos) = self.entries.iter().position(|(k, _)| *k == key) {
            self.current = pos;
            return;
        }
        let values = self
            .offsets
            .iter()
            .map(|&d| lin.iter().map(|&l| (l * (d * h)).exp()).collect())
            .collect();
        if self.entries.len() >= CACHE_LIMIT {
            self.entries.remove(0);
        }
        self.entries.push((key, values));
        self.current = self.entries.len() - 1;
    }

    fn slice(&self, slot: usize) -> Option<&[Complex64]> {
        self.lin.map(|_| self.entries[self.current].1[slot].as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn linear_decay_is_exact_with_integrating_factor() {
        let lin = vec![c(-3.0, 2.0), c(-1e5, 0.0), c(0.1, -5.0)];
        let y0 = vec![c(1.0, 0.0), c(0.5, 0.5), c(-1.0, 2.0)];
        let (ys, stats) = integrate(
            Some(&lin),
            |_, _, out: &mut [Complex64]| {
                out.fill(Complex64::default());
                Ok(())
            },
            0.0,
            &y0,
            &[1.0],
            &Tolerances::default(),
        )
        .unwrap();
        for i in 0..3 {
            let exact = y0[i] * (lin[i] * 1.0).exp();
            assert!((ys[0][i] - exact).norm() <= 1e-12 * (1.0 + exact.norm()));
        }
        assert!(stats.accepted < 20);
    }

    #[test]
    fn plain_dopri_matches_exponential() {
        let lam = c(-0.7, 3.0);
        let (ys, _) = integrate(
            None,
            |_, y: &[Complex64], out: &mut [Complex64]| {
                out[0] = lam * y[0];
                Ok(())
            },
            0.0,
            &[c(1.0, 0.0)],
            &[0.5, 2.0],
            &Tolerances::default().with_rtol(1e-10).with_atol(1e-12),
        )
        .unwrap();
        let exact = (lam * 2.0).exp();
        assert!((ys[1][0] - exact).norm() < 1e-8);
    }

    #[test]
    fn nonlinear_logistic_matches_closed_form() {
        // y' = y - y^2, y(0) = 0.1
        let (ys, _) = integrate(
            Some(&[c(1.0, 0.0)]),
            |_, y: &[Complex64], out: &mut [Complex64]| {
                out[0] = -y[0] * y[0];
                Ok(())
            },
            0.0,
            &[c(0.1, 0.0)],
            &[3.0],
            &Tolerances::default(),
        )
        .unwrap();
        let exact = 1.0 / (1.0 + 9.0 * (-3.0f64).exp());
        assert!((ys[0][0].re - exact).abs() < 1e-7);
    }

    #[test]
    fn blow_up_reports_divergence() {
        // y' = y^3 blows up at t = 1/(2 y0^2) = 0.5
        let res = integrate(
            None,
            |_, y: &[Complex64], out: &mut [Complex64]| {
                out[0] = y[0] * y[0] * y[0];
                Ok(())
            },
            0.0,
            &[c(1.0, 0.0)],
            &[1.0],
            &Tolerances::default(),
        );
        match res {
            Err(Error::Divergence { time, .. }) => assert!(time < 0.5 + 1e-6 && time > 0.4),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn outputs_include_start_time() {
        let (ys, _) = integrate(
            None,
            |_, _, out: &mut [Complex64]| {
                out.fill(Complex64::default());
                Ok(())
            },
            0.0,
            &[c(2.0, 0.0)],
            &[0.0, 1.0],
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(ys[0][0], c(2.0, 0.0));
        assert_eq!(ys[1][0], c(2.0, 0.0));
    }
}
