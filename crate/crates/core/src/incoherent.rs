//! Interference-free counter-model: each half-cycle sweep of the field is
//! treated as a classical transition with probability `1 − P_ex`, and the
//! resulting mode population is averaged stroboscopically.

use crate::error::{FreezeError, Result};
use crate::fermion::{integrate_mode, mx_from_v_sq, ModeAmplitudes, ModeSpec, PAIRED_MOMENTUM};
use crate::model::{DriveParams, StepRule};

/// Probability of staying in the initial configuration over one half-cycle,
/// and optionally a distinct value for the reverse sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfCycleModel {
    pub p_ex: f64,
    pub p_ex_reverse: Option<f64>,
    pub params: DriveParams,
}

impl HalfCycleModel {
    /// Forward and reverse sweeps share the probability computed from the drive.
    pub fn new(params: DriveParams) -> Result<Self> {
        Ok(Self {
            p_ex: half_cycle_excitation_prob(&params)?,
            p_ex_reverse: None,
            params,
        })
    }

    pub fn with_probability(params: DriveParams, p_ex: f64) -> Result<Self> {
        check_prob(p_ex, "p_ex")?;
        Ok(Self {
            p_ex,
            p_ex_reverse: None,
            params,
        })
    }

    pub fn with_reverse(mut self, p_ex_reverse: f64) -> Result<Self> {
        check_prob(p_ex_reverse, "reverse p_ex")?;
        self.p_ex_reverse = Some(p_ex_reverse);
        Ok(self)
    }

    fn reverse(&self) -> f64 {
        self.p_ex_reverse.unwrap_or(self.p_ex)
    }

    /// Paired-mode population after `cycles` full cycles (two sweeps each), from `|v|² = 1`.
    pub fn population_after(&self, cycles: usize) -> f64 {
        let mut p = 1.0;
        for _ in 0..cycles {
            p = step(p, self.p_ex);
            p = step(p, self.reverse());
        }
        p
    }

    /// Stroboscopic average of `mˣ = (4/3)p − 1/3` over `n = 0..=cycles`.
    pub fn q_prob(&self, cycles: usize) -> Result<f64> {
        if cycles == 0 {
            return Err(FreezeError::InvalidParameter(
                "need at least one cycle".into(),
            ));
        }
        let mut p = 1.0;
        let mut sum = mx_from_v_sq(p);
        for _ in 0..cycles {
            p = step(p, self.p_ex);
            p = step(p, self.reverse());
            sum += mx_from_v_sq(p);
        }
        Ok(sum / (cycles + 1) as f64)
    }
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FreezeError::InvalidParameter(format!(
            "{what} must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

#[inline]
fn step(p: f64, p_ex: f64) -> f64 {
    p * (2.0 * p_ex - 1.0) + (1.0 - p_ex)
}

fn half_cycle_v_sq(mode: &ModeSpec, params: &DriveParams, steps: usize) -> Result<f64> {
    let t = 0.5 * params.period();
    let tr = integrate_mode(
        mode,
        params,
        t,
        t / steps as f64,
        ModeAmplitudes::polarized(),
        StepRule::Midpoint,
    )?;
    Ok(tr.amps.last().map(|a| a.v_sq()).unwrap_or(1.0))
}

/// `|v(τ/2)|²` for the paired mode started from `v = 1` at `t = 0`, where the
/// field is at `+h₀`. The step count is doubled from 1024 until the value
/// changes by less than 1e−10 (midpoint rule, second order).
pub fn half_cycle_excitation_prob(params: &DriveParams) -> Result<f64> {
    let mode = ModeSpec::new(PAIRED_MOMENTUM, params.j_coupling, true)?;
    let mut steps = 1024;
    let mut prev = half_cycle_v_sq(&mode, params, steps)?;
    while steps < 1 << 20 {
        steps *= 2;
        let next = half_cycle_v_sq(&mode, params, steps)?;
        let done = (next - prev).abs() < 1e-10;
        prev = next;
        if done {
            break;
        }
    }
    Ok(prev.clamp(0.0, 1.0))
}

/// Iterates `p ← p(2P_ex − 1) + (1 − P_ex)` `half_sweeps` times from `v0_sq`.
pub fn population_recursion(p_ex: f64, v0_sq: f64, half_sweeps: usize) -> Result<f64> {
    check_prob(p_ex, "p_ex")?;
    check_prob(v0_sq, "initial population")?;
    Ok((0..half_sweeps).fold(v0_sq, |p, _| step(p, p_ex)))
}

/// Closed form of the recursion, `1/2 + (2P_ex − 1)^m (v0_sq − 1/2)`.
pub fn population_closed_form(p_ex: f64, v0_sq: f64, half_sweeps: usize) -> f64 {
    let r = 2.0 * p_ex - 1.0;
    0.5 + r.powi(half_sweeps.min(i32::MAX as usize) as i32) * (v0_sq - 0.5)
}

/// Q from transition probabilities alone, averaged over `n = 0..=cycles`.
pub fn q_prob(params: &DriveParams, cycles: usize) -> Result<f64> {
    HalfCycleModel::new(*params)?.q_prob(cycles)
}
