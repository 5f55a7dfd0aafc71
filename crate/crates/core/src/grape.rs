//! Gradient pulse engineering: piecewise-constant RF amplitudes whose net
//! propagator under the internal Hamiltonian approximates a target unitary,
//! averaged over an RF-amplitude miscalibration ensemble.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{FreezeError, Result};
use crate::linalg::{c, identity, unitarity_error, CMat, HermitianEigen};
use crate::model::{collective_x, collective_y, HermitianOperator};

/// Relative RF amplitude factors and their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RfEnsemble {
    scalings: Vec<f64>,
    weights: Vec<f64>,
}

impl RfEnsemble {
    pub fn new(scalings: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if scalings.is_empty() || scalings.len() != weights.len() {
            return Err(FreezeError::InvalidParameter(
                "RF ensemble needs matching, non-empty scalings and weights".into(),
            ));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || scalings.iter().any(|s| !s.is_finite()) {
            return Err(FreezeError::InvalidParameter(
                "RF ensemble weights must be ≥ 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FreezeError::InvalidParameter(format!(
                "RF ensemble weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { scalings, weights })
    }

    /// A perfectly calibrated RF channel.
    pub fn nominal() -> Self {
        Self {
            scalings: vec![1.0],
            weights: vec![1.0],
        }
    }

    pub fn scalings(&self) -> &[f64] {
        &self.scalings
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Default for RfEnsemble {
    /// ±5% miscalibration, weights {1/4, 1/2, 1/4}.
    fn default() -> Self {
        Self {
            scalings: vec![0.95, 1.0, 1.05],
            weights: vec![0.25, 0.5, 0.25],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    drift: CMat,
    controls: Vec<CMat>,
    target: CMat,
    pub segments: usize,
    pub segment_dt: f64,
    pub amplitude_bound: f64,
    pub ensemble: RfEnsemble,
}

impl ControlProblem {
    pub fn new(
        drift: &HermitianOperator,
        controls: &[HermitianOperator],
        target: CMat,
        segments: usize,
        segment_dt: f64,
        amplitude_bound: f64,
        ensemble: RfEnsemble,
    ) -> Result<Self> {
        let d = drift.dim();
        if controls.is_empty() {
            return Err(FreezeError::InvalidParameter(
                "need at least one control".into(),
            ));
        }
        for op in controls {
            if op.dim() != d {
                return Err(FreezeError::DimensionMismatch {
                    expected: d,
                    got: op.dim(),
                });
            }
        }
        if target.nrows() != d || target.ncols() != d {
            return Err(FreezeError::DimensionMismatch {
                expected: d,
                got: target.nrows(),
            });
        }
        if unitarity_error(&target) > 1e-10 {
            return Err(FreezeError::InvalidParameter(
                "target is not unitary".into(),
            ));
        }
        if segments == 0 {
            return Err(FreezeError::InvalidParameter(
                "need at least one segment".into(),
            ));
        }
        if !(segment_dt > 0.0 && segment_dt.is_finite()) {
            return Err(FreezeError::InvalidParameter(format!(
                "segment duration must be > 0, got {segment_dt}"
            )));
        }
        if !(amplitude_bound > 0.0 && amplitude_bound.is_finite()) {
            return Err(FreezeError::InvalidParameter(format!(
                "amplitude bound must be > 0, got {amplitude_bound}"
            )));
        }
        Ok(Self {
            drift: drift.matrix().clone(),
            controls: controls.iter().map(|c| c.matrix().clone()).collect(),
            target,
            segments,
            segment_dt,
            amplitude_bound,
            ensemble,
        })
    }

    /// Two global RF quadratures, `Σσˣ/2` and `Σσʸ/2`, on `n` spins.
    pub fn global_rf_controls(n: usize) -> Vec<HermitianOperator> {
        [collective_x(n), collective_y(n)]
            .into_iter()
            .map(|m| {
                HermitianOperator::new(m * c(0.5)).expect("collective spin operators are Hermitian")
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn target(&self) -> &CMat {
        &self.target
    }

    /// Every input that defines the problem, as little-endian bytes, for hashing.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
        for m in std::iter::once(&self.drift)
            .chain(&self.controls)
            .chain(std::iter::once(&self.target))
        {
            put(m.nrows() as f64);
            for z in m.iter() {
                put(z.re);
                put(z.im);
            }
        }
        put(self.segments as f64);
        put(self.segment_dt);
        put(self.amplitude_bound);
        for (s, w) in self.ensemble.scalings.iter().zip(&self.ensemble.weights) {
            put(*s);
            put(*w);
        }
        out
    }

    fn check_amplitudes(&self, a: &DMatrix<f64>) -> Result<()> {
        if a.nrows() != self.segments || a.ncols() != self.controls.len() {
            return Err(FreezeError::DimensionMismatch {
                expected: self.segments * self.controls.len(),
                got: a.nrows() * a.ncols(),
            });
        }
        if let Some(v) = a.iter().find(|v| !v.is_finite()) {
            return Err(FreezeError::NonFinite(*v));
        }
        Ok(())
    }

    fn generator(&self, a: &DMatrix<f64>, seg: usize, scale: f64) -> CMat {
        let mut h = self.drift.clone();
        for (k, op) in self.controls.iter().enumerate() {
            h += op * c(scale * a[(seg, k)]);
        }
        h
    }
}

/// Segment amplitudes (rad/s), one row per segment and one column per control.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    pub amplitudes: DMatrix<f64>,
    pub achieved_fidelity: f64,
}

impl PulseSchedule {
    pub fn total_duration(&self, problem: &ControlProblem) -> f64 {
        problem.segment_dt * self.amplitudes.nrows() as f64
    }
}

/// `∏ exp(−i·dt·(H_d + s·Σ_k a_k C_k))`, latest segment leftmost.
pub fn schedule_propagator(
    problem: &ControlProblem,
    amplitudes: &DMatrix<f64>,
    scale: f64,
) -> Result<CMat> {
    problem.check_amplitudes(amplitudes)?;
    let mut u = identity(problem.dim());
    for seg in 0..problem.segments {
        let step = HermitianEigen::new(&problem.generator(amplitudes, seg, scale))?
            .propagator(problem.segment_dt);
        u = step * u;
    }
    Ok(u)
}

/// `|Tr(W†U)|²/d²`.
pub fn hs_fidelity(u: &CMat, target: &CMat) -> f64 {
    let d = u.nrows() as f64;
    let tr: num_complex::Complex64 = target.iter().zip(u.iter()).map(|(w, x)| w.conj() * x).sum();
    (tr.norm_sqr() / (d * d)).min(1.0)
}

/// Weighted mean of [`hs_fidelity`] over the RF ensemble.
pub fn ensemble_fidelity(problem: &ControlProblem, amplitudes: &DMatrix<f64>) -> Result<f64> {
    let parts: Result<Vec<f64>> = problem
        .ensemble
        .scalings
        .par_iter()
        .map(|&s| {
            Ok(hs_fidelity(
                &schedule_propagator(problem, amplitudes, s)?,
                &problem.target,
            ))
        })
        .collect();
    Ok(parts?
        .iter()
        .zip(&problem.ensemble.weights)
        .map(|(f, w)| f * w)
        .sum())
}

/// Fidelity for one RF scaling and its exact gradient in the amplitudes.
///
/// With `g = Tr(W†U)` and `U = U_S⋯U_1`, `∂g/∂a_jk = Tr(B_j ∂U_j)` where
/// `B_j = (U_{j−1}⋯U_1)·W†·(U_S⋯U_{j+1})`, and `∂U_j` is the Fréchet
/// derivative of the segment exponential from its eigendecomposition.
fn fidelity_and_gradient_at(
    problem: &ControlProblem,
    a: &DMatrix<f64>,
    scale: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let n = problem.segments;
    let d = problem.dim();
    let mut eigs = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    for seg in 0..n {
        let e = HermitianEigen::new(&problem.generator(a, seg, scale))?;
        steps.push(e.propagator(problem.segment_dt));
        eigs.push(e);
    }
    // forward[j] = U_j⋯U_1 (forward[0] = 𝕀)
    let mut forward = Vec::with_capacity(n + 1);
    forward.push(identity(d));
    for u in &steps {
        let next = u * forward.last().unwrap();
        forward.push(next);
    }
    let wd = problem.target.adjoint();
    let g = (&wd * &forward[n]).trace();
    let dd = (d * d) as f64;
    let fid = g.norm_sqr() / dd;

    let mut grad = DMatrix::zeros(n, problem.controls.len());
    // tail = W†·U_S⋯U_{j+1}
    let mut tail = wd;
    for j in (0..n).rev() {
        let b = &forward[j] * &tail;
        let e = &eigs[j];
        let vh = e.vectors.adjoint();
        let b_eig = &vh * &b * &e.vectors;
        let gamma = e.exp_divided_differences(problem.segment_dt);
        for (k, op) in problem.controls.iter().enumerate() {
            let x = &vh * (op * c(scale)) * &e.vectors;
            // Tr(B·V(X∘Γ)V†) = Σ_{m,l} (V†BV)_{lm} X_{ml} Γ_{ml}
            let mut dg = num_complex::Complex64::new(0.0, 0.0);
            for m in 0..d {
                for l in 0..d {
                    dg += b_eig[(l, m)] * x[(m, l)] * gamma[(m, l)];
                }
            }
            grad[(j, k)] = 2.0 * (g.conj() * dg).re / dd;
        }
        tail = &tail * &steps[j];
    }
    Ok((fid, grad))
}

/// Ensemble fidelity and its exact gradient.
pub fn ensemble_fidelity_and_gradient(
    problem: &ControlProblem,
    amplitudes: &DMatrix<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    problem.check_amplitudes(amplitudes)?;
    let parts: Result<Vec<(f64, DMatrix<f64>)>> = problem
        .ensemble
        .scalings
        .par_iter()
        .map(|&s| fidelity_and_gradient_at(problem, amplitudes, s))
        .collect();
    let mut f = 0.0;
    let mut g = DMatrix::zeros(problem.segments, problem.controls.len());
    for ((fi, gi), w) in parts?.into_iter().zip(&problem.ensemble.weights) {
        f += w * fi;
        g += gi * *w;
    }
    Ok((f, g))
}

/// Starting amplitudes for [`synthesize`].
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPulse {
    Zero,
    /// Independent normal draws with standard deviation `relative_scale·bound`.
    Random {
        seed: u64,
        relative_scale: f64,
    },
    Given(DMatrix<f64>),
}

impl Default for InitialPulse {
    fn default() -> Self {
        Self::Random {
            seed: 0,
            relative_scale: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisReport {
    pub schedule: PulseSchedule,
    pub iterations: usize,
    /// Fidelity target `1 − tol` reached.
    pub converged: bool,
    /// No ascent step could be found below the target.
    pub stagnated: bool,
    /// Accepted fidelity after each iteration, starting with the initial pulse.
    pub history: Vec<f64>,
}

fn clamp_to(a: &DMatrix<f64>, bound: f64) -> DMatrix<f64> {
    a.map(|v| v.clamp(-bound, bound))
}

fn initial_amplitudes(problem: &ControlProblem, init: &InitialPulse) -> Result<DMatrix<f64>> {
    let (n, k) = (problem.segments, problem.n_controls());
    let a = match init {
        InitialPulse::Zero => DMatrix::zeros(n, k),
        InitialPulse::Random {
            seed,
            relative_scale,
        } => {
            let dist = Normal::new(0.0, relative_scale * problem.amplitude_bound)
                .map_err(|e| FreezeError::InvalidParameter(format!("initial pulse scale: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            // row-major draw order so the schedule does not depend on storage layout
            let mut a = DMatrix::zeros(n, k);
            for i in 0..n {
                for j in 0..k {
                    a[(i, j)] = dist.sample(&mut rng);
                }
            }
            a
        }
        InitialPulse::Given(a) => {
            problem.check_amplitudes(a)?;
            a.clone()
        }
    };
    Ok(clamp_to(&a, problem.amplitude_bound))
}

/// Ascend the ensemble fidelity until it reaches `1 − tol` or `max_iters`.
///
/// Search directions are Polak–Ribière (non-negative β) conjugate gradients,
/// reset to the plain gradient when not uphill. Each trial point is clipped
/// to the amplitude bound and accepted only if it raises the fidelity; the
/// step halves on rejection and grows by 1.5 after acceptance.
pub fn synthesize(
    problem: &ControlProblem,
    max_iters: usize,
    tol: f64,
    init: &InitialPulse,
) -> Result<SynthesisReport> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(FreezeError::InvalidParameter(format!(
            "tol must lie in (0, 1), got {tol}"
        )));
    }
    let bound = problem.amplitude_bound;
    let mut a = initial_amplitudes(problem, init)?;
    let (mut f, mut g) = ensemble_fidelity_and_gradient(problem, &a)?;
    let mut history = vec![f];
    let mut dir: Option<DMatrix<f64>> = None;
    let mut g_prev: Option<DMatrix<f64>> = None;
    let mut step: Option<f64> = None;
    let mut iterations = 0;
    let mut stagnated = false;
    let mut restarted = false;

    while f < 1.0 - tol && iterations < max_iters {
        let d = match (&dir, &g_prev) {
            (Some(d_old), Some(gp)) if !restarted => {
                let beta = (g.dot(&(&g - gp)) / gp.dot(gp)).max(0.0);
                let d = &g + d_old * beta;
                if d.dot(&g) <= 0.0 {
                    g.clone()
                } else {
                    d
                }
            }
            _ => g.clone(),
        };
        let dmax = d.amax();
        if dmax == 0.0 {
            stagnated = true;
            break;
        }
        let mut s = step.unwrap_or(0.05 * bound / dmax);
        let mut accepted = None;
        while s * dmax > 1e-12 * bound {
            let trial = clamp_to(&(&a + &d * s), bound);
            let ft = ensemble_fidelity(problem, &trial)?;
            if ft > f {
                accepted = Some(trial);
                break;
            }
            s *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some(trial) => {
                a = trial;
                step = Some(1.5 * s);
                g_prev = Some(g);
                let (f_new, g_new) = ensemble_fidelity_and_gradient(problem, &a)?;
                f = f_new;
                g = g_new;
                dir = Some(d);
                restarted = false;
                history.push(f);
            }
            None if !restarted => {
                // retry from the plain gradient with a fresh step
                restarted = true;
                step = None;
                history.push(f);
            }
            None => {
                stagnated = true;
                history.push(f);
                break;
            }
        }
    }
    Ok(SynthesisReport {
        schedule: PulseSchedule {
            amplitudes: a,
            achieved_fidelity: f,
        },
        iterations,
        converged: f >= 1.0 - tol,
        stagnated,
        history,
    })
}
