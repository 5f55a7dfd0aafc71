//! Phenomenological decay model `mˣ(t) = α + (β + γcos(ct))·e^{−t/T_d}`,
//! least-squares fitting, inverse-decay correction (`T_d → ∞`) and the
//! bundled table of measured Q values.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::error::{FreezeError, Result};
use crate::propagate::StroboSeries;

/// Fewest samples accepted by [`fit_decay`].
pub const MIN_POINTS: usize = 8;
/// Sanity bound on fitted and corrected curves over the fit window.
pub const MODEL_BOUND: f64 = 1.5;

const C_GRID: usize = 120;
const TD_GRID: usize = 40;
const MAX_ITERS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Angular frequency (rad/s).
    pub c: f64,
    /// Decay constant (s); `f64::INFINITY` means no decay.
    pub t_d: f64,
}

impl DecayFit {
    pub fn model(&self, t: f64) -> f64 {
        self.alpha + (self.beta + self.gamma * (self.c * t).cos()) * (-t / self.t_d).exp()
    }

    /// The model with the decay envelope removed.
    pub fn envelope_free(&self, t: f64) -> f64 {
        self.alpha + self.beta + self.gamma * (self.c * t).cos()
    }

    fn to_params(self) -> [f64; 5] {
        [self.alpha, self.beta, self.gamma, self.c, self.t_d]
    }

    fn from_params(p: &[f64]) -> Self {
        Self {
            alpha: p[0],
            beta: p[1],
            gamma: p[2],
            c: p[3],
            t_d: p[4],
        }
    }
}

/// RMS residual of the raw series against the fitted model. Used directly
/// as the error bar on Q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBar {
    pub rms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FitFlags {
    /// The optimizer hit its iteration cap; the best iterate is returned.
    pub not_converged: bool,
    /// The `γ = 0` model was selected, or γ vanished, so `c` is not determined.
    pub c_unidentified: bool,
    /// The series is constant; only α is meaningful.
    pub degenerate: bool,
    /// No candidate kept the model inside ±[`MODEL_BOUND`].
    pub out_of_bounds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub fit: DecayFit,
    pub error_bar: ErrorBar,
    pub flags: FitFlags,
    pub iterations: usize,
    /// RMS after each accepted optimizer step of the selected fit.
    pub rms_history: Vec<f64>,
}

/// Residuals `model − y` and the analytic Jacobian with columns
/// `∂/∂(α, β, γ, c, T_d)`.
pub fn residuals_and_jacobian(
    p: &[f64],
    times: &[f64],
    values: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = times.len();
    let (alpha, beta, gamma, c, td) = (p[0], p[1], p[2], p[3], p[4]);
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, 5);
    for (i, (&t, &y)) in times.iter().zip(values).enumerate() {
        let e = (-t / td).exp();
        let (s, co) = (c * t).sin_cos();
        let amp = beta + gamma * co;
        r[i] = alpha + amp * e - y;
        j[(i, 0)] = 1.0;
        j[(i, 1)] = e;
        j[(i, 2)] = e * co;
        j[(i, 3)] = -gamma * e * t * s;
        j[(i, 4)] = amp * e * t / (td * td);
    }
    (r, j)
}

struct LmOutcome {
    x: Vec<f64>,
    rss: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Levenberg–Marquardt with Marquardt diagonal scaling. Only steps that
/// lower the residual sum and pass `admissible` are accepted.
fn levenberg_marquardt<F, A>(x0: &[f64], n_obs: usize, eval: F, admissible: A) -> LmOutcome
where
    F: Fn(&[f64]) -> (DVector<f64>, DMatrix<f64>),
    A: Fn(&[f64]) -> bool,
{
    let k = x0.len();
    let mut x = x0.to_vec();
    let (mut r, mut jac) = eval(&x);
    let mut rss = r.norm_squared();
    let rms = |rss: f64| (rss / n_obs as f64).sqrt();
    let mut history = vec![rms(rss)];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERS {
        iterations += 1;
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * &r;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for d in 0..k {
                damped[(d, d)] += lambda * a[(d, d)].max(1e-12);
            }
            let Some(ch) = damped.cholesky() else {
                lambda *= 4.0;
                continue;
            };
            let delta = ch.solve(&(-&g));
            let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            if trial.iter().all(|v| v.is_finite()) && admissible(&trial) {
                let (r2, j2) = eval(&trial);
                let rss2 = r2.norm_squared();
                if rss2.is_finite() && rss2 < rss {
                    let gain = rss - rss2;
                    x = trial;
                    r = r2;
                    jac = j2;
                    rss = rss2;
                    history.push(rms(rss));
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if gain <= 1e-15 * rss + 1e-300 {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no downhill step at any damping: a local minimum to working precision
            converged = true;
        }
        if converged || rss == 0.0 {
            converged = true;
            break;
        }
    }
    LmOutcome {
        x,
        rss,
        iterations,
        converged,
        history,
    }
}

fn validate(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(FreezeError::DimensionMismatch {
            expected: times.len(),
            got: values.len(),
        });
    }
    if times.len() < MIN_POINTS {
        return Err(FreezeError::SeriesTooShort {
            len: times.len(),
            min: MIN_POINTS,
        });
    }
    for &v in times.iter().chain(values) {
        if !v.is_finite() {
            return Err(FreezeError::NonFinite(v));
        }
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FreezeError::InvalidParameter(
            "sample times must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn within_bounds(fit: &DecayFit, times: &[f64]) -> bool {
    fit.t_d > 0.0
        && times.iter().all(|&t| {
            fit.model(t).abs() <= MODEL_BOUND && fit.envelope_free(t).abs() <= MODEL_BOUND
        })
}

/// Linear least squares for the amplitudes given `(c, T_d)`; `γ` is held
/// at zero when `with_cos` is false.
fn linear_amplitudes(
    times: &[f64],
    values: &[f64],
    c: f64,
    td: f64,
    with_cos: bool,
) -> Option<(DecayFit, f64)> {
    let n = times.len();
    let cols = if with_cos { 3 } else { 2 };
    let mut a = DMatrix::zeros(n, cols);
    for (i, &t) in times.iter().enumerate() {
        let e = (-t / td).exp();
        a[(i, 0)] = 1.0;
        a[(i, 1)] = e;
        if with_cos {
            a[(i, 2)] = e * (c * t).cos();
        }
    }
    let b = DVector::from_column_slice(values);
    let sol = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let rss = (&a * &sol - &b).norm_squared();
    let fit = DecayFit {
        alpha: sol[0],
        beta: sol[1],
        gamma: if with_cos { sol[2] } else { 0.0 },
        c: if with_cos { c } else { 0.0 },
        t_d: td,
    };
    rss.is_finite().then_some((fit, rss))
}

fn geomspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(move |i| lo * (r * i as f64).exp())
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| lo + h * i as f64)
}

struct Candidate {
    fit: DecayFit,
    rss: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

fn refine_full(start: DecayFit, times: &[f64], values: &[f64]) -> Candidate {
    let out = levenberg_marquardt(
        &start.to_params(),
        times.len(),
        |p| residuals_and_jacobian(p, times, values),
        |p| within_bounds(&DecayFit::from_params(p), times),
    );
    Candidate {
        fit: DecayFit::from_params(&out.x),
        rss: out.rss,
        iterations: out.iterations,
        converged: out.converged,
        history: out.history,
    }
}

fn refine_reduced(start: DecayFit, times: &[f64], values: &[f64]) -> Candidate {
    let lift = |p: &[f64]| [p[0], p[1], 0.0, 0.0, p[2]];
    let out = levenberg_marquardt(
        &[start.alpha, start.beta, start.t_d],
        times.len(),
        |p| {
            let (r, j) = residuals_and_jacobian(&lift(p), times, values);
            (r, j.select_columns(&[0, 1, 4]))
        },
        |p| within_bounds(&DecayFit::from_params(&lift(p)), times),
    );
    Candidate {
        fit: DecayFit::from_params(&lift(&out.x)),
        rss: out.rss,
        iterations: out.iterations,
        converged: out.converged,
        history: out.history,
    }
}

fn bic(rss: f64, n: usize, k: usize) -> f64 {
    let n = n as f64;
    n * (rss.max(1e-300) / n).ln() + k as f64 * n.ln()
}

/// Fit the decay model to `(times, values)`.
///
/// Starting points come from a variable-projection scan: for each `(c, T_d)`
/// on a grid the amplitudes are solved linearly, and for every `c` the best
/// in-bounds `T_d` is refined by Levenberg–Marquardt with the analytic
/// Jacobian. The lowest residual wins.
/// `init`, if given, is refined as an additional start. The `γ = 0` model is
/// fitted as well and chosen by BIC (or when it fits exactly as well).
pub fn fit_decay(times: &[f64], values: &[f64], init: Option<DecayFit>) -> Result<FitReport> {
    validate(times, values)?;
    let n = times.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let spread = values.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    if spread <= 1e-12 * mean.abs().max(1.0) {
        let fit = DecayFit {
            alpha: mean,
            beta: 0.0,
            gamma: 0.0,
            c: 0.0,
            t_d: f64::INFINITY,
        };
        return Ok(report(
            fit,
            times,
            values,
            0,
            vec![],
            FitFlags {
                c_unidentified: true,
                degenerate: true,
                ..FitFlags::default()
            },
        ));
    }

    let t0 = times[0];
    let span = times[n - 1] - t0;
    let dt_min = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let c_lo = 0.1 * std::f64::consts::PI / span;
    let c_hi = (std::f64::consts::PI / dt_min).max(c_lo * 1.01);

    // best T_d for each c, so the refined starts cover distinct frequencies
    let c_values: Vec<f64> = linspace(c_lo, c_hi, C_GRID).collect();
    let td_values: Vec<f64> = geomspace(0.02 * span, 20.0 * span, TD_GRID).collect();
    let mut grid: Vec<(DecayFit, f64)> = Vec::new();
    for &c in &c_values {
        let best = td_values
            .iter()
            .filter_map(|&td| linear_amplitudes(times, values, c, td, true))
            .filter(|(f, _)| within_bounds(f, times))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        grid.extend(best);
    }
    let mut reduced_grid: Vec<(DecayFit, f64)> = td_values
        .iter()
        .filter_map(|&td| linear_amplitudes(times, values, 0.0, td, false))
        .filter(|(f, _)| within_bounds(f, times))
        .collect();
    grid.sort_by(|a, b| a.1.total_cmp(&b.1));
    reduced_grid.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut starts: Vec<DecayFit> = grid.iter().map(|g| g.0).collect();
    if let Some(f) = init {
        if within_bounds(&f, times) {
            starts.insert(0, f);
        }
    }
    let full = starts
        .into_iter()
        .map(|s| refine_full(s, times, values))
        .min_by(|a, b| a.rss.total_cmp(&b.rss));
    let reduced = reduced_grid
        .first()
        .map(|g| refine_reduced(g.0, times, values));

    let (chosen, reduced_chosen) = match (full, reduced) {
        (Some(f), Some(r)) => {
            let exact_tie = r.rss <= f.rss + 1e-20 * n as f64;
            if exact_tie || bic(r.rss, n, 3) <= bic(f.rss, n, 5) {
                (r, true)
            } else {
                (f, false)
            }
        }
        (Some(f), None) => (f, false),
        (None, Some(r)) => (r, true),
        (None, None) => {
            // nothing stayed inside the sanity bound; fall back to an unconstrained reduced fit
            let f = linear_amplitudes(times, values, 0.0, span, false)
                .map(|x| x.0)
                .ok_or_else(|| {
                    FreezeError::InvalidParameter("least-squares solve failed".into())
                })?;
            let flags = FitFlags {
                c_unidentified: true,
                out_of_bounds: true,
                ..FitFlags::default()
            };
            return Ok(report(f, times, values, 0, vec![], flags));
        }
    };
    let fit = chosen.fit;
    let scale = fit.alpha.abs() + fit.beta.abs() + 1e-300;
    let flags = FitFlags {
        not_converged: !chosen.converged,
        c_unidentified: reduced_chosen || fit.gamma.abs() <= 1e-8 * scale,
        degenerate: false,
        out_of_bounds: !within_bounds(&fit, times),
    };
    Ok(report(
        fit,
        times,
        values,
        chosen.iterations,
        chosen.history,
        flags,
    ))
}

fn report(
    fit: DecayFit,
    times: &[f64],
    values: &[f64],
    iterations: usize,
    rms_history: Vec<f64>,
    flags: FitFlags,
) -> FitReport {
    let rss: f64 = times
        .iter()
        .zip(values)
        .map(|(&t, &y)| (fit.model(t) - y).powi(2))
        .sum();
    FitReport {
        fit,
        error_bar: ErrorBar {
            rms: (rss / times.len() as f64).sqrt(),
        },
        flags,
        iterations,
        rms_history,
    }
}

/// Fit a simulated or measured series using its own sample times.
pub fn fit_series(series: &StroboSeries, init: Option<DecayFit>) -> Result<FitReport> {
    fit_decay(&series.times, &series.mx, init)
}

/// Envelope-free model `α + β + γcos(ct)` at `times`.
pub fn inverse_correct(fit: &DecayFit, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| fit.envelope_free(t)).collect()
}

/// Mean of the corrected series, i.e. the decay-corrected Q.
pub fn corrected_q(fit: &DecayFit, times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(FreezeError::EmptySeries);
    }
    Ok(inverse_correct(fit, times).iter().sum::<f64>() / times.len() as f64)
}

/// `clean(t)·e^{−t/T_d}` plus Gaussian noise of standard deviation `sigma`,
/// drawn from a ChaCha8 stream keyed by `seed`.
pub fn synthetic_decay(
    clean: &[f64],
    times: &[f64],
    t_d: f64,
    sigma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if clean.len() != times.len() {
        return Err(FreezeError::DimensionMismatch {
            expected: times.len(),
            got: clean.len(),
        });
    }
    if !(t_d > 0.0) {
        return Err(FreezeError::InvalidParameter(format!(
            "T_d must be > 0, got {t_d}"
        )));
    }
    let noise = Normal::new(0.0, sigma)
        .map_err(|e| FreezeError::InvalidParameter(format!("noise level {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(clean
        .iter()
        .zip(times)
        .map(|(&m, &t)| m * (-t / t_d).exp() + noise.sample(&mut rng))
        .collect())
}

/// Transverse relaxation times (s) of the three spins, kept for reference only.
pub const T2_SECONDS: [f64; 3] = [2.8, 3.1, 3.3];

/// One row of the measured-Q table.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct ExperimentRow {
    pub omega: f64,
    pub q_raw: f64,
    pub t_d: f64,
    pub q_corrected: f64,
}

impl ExperimentRow {
    pub fn satisfies_invariants(&self) -> bool {
        [self.omega, self.q_raw, self.t_d, self.q_corrected]
            .iter()
            .all(|v| v.is_finite())
            && self.q_corrected >= self.q_raw
    }
}

/// The table shipped with the crate: ω (rad/s), raw Q, T_d (s), corrected Q.
pub const BUNDLED_TABLE_CSV: &str = include_str!("../data/experiment_table.csv");

const TABLE_HEADER: [&str; 4] = ["omega", "q_raw", "t_d", "q_corrected"];

/// Parse a table with header `omega,q_raw,t_d,q_corrected`. Malformed rows
/// fail with their line number; rows breaking `q_corrected ≥ q_raw` are
/// returned and can be found with [`ExperimentRow::satisfies_invariants`].
pub fn parse_experiment_table(text: &str, source: &str) -> Result<Vec<ExperimentRow>> {
    let err = |line: usize, message: String| FreezeError::Table {
        path: source.to_string(),
        line,
        message,
    };
    if text.trim().is_empty() {
        return Err(err(
            1,
            "file is empty; expected header omega,q_raw,t_d,q_corrected".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.iter().ne(TABLE_HEADER) {
        return Err(err(
            1,
            format!(
                "expected header omega,q_raw,t_d,q_corrected, found {}",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: ExperimentRow = rec
            .deserialize(Some(&header))
            .map_err(|e| err(line, e.to_string()))?;
        for v in [row.omega, row.q_raw, row.t_d, row.q_corrected] {
            if !v.is_finite() {
                return Err(err(line, format!("non-finite value {v}")));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(err(2, "table has a header but no rows".into()));
    }
    Ok(rows)
}

pub fn load_experiment_table(path: &Path) -> Result<Vec<ExperimentRow>> {
    let text = std::fs::read_to_string(path)?;
    parse_experiment_table(&text, &path.display().to_string())
}

pub fn bundled_experiment_table() -> Vec<ExperimentRow> {
    parse_experiment_table(BUNDLED_TABLE_CSV, "bundled table").expect("bundled table parses")
}
