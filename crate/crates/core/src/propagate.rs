//! Piecewise-constant evolution of the full spin register, stroboscopic
//! sampling and the freezing parameter Q.

use rayon::prelude::*;

use crate::error::{FreezeError, Result};
use crate::linalg::{identity, unitarity_error, CMat, HermitianEigen};
use crate::model::{
    initial_state, normalized_mx, ChainSpec, DriveHamiltonian, DriveParams, SpinState, StateKind,
    StepRule, TimeGrid,
};

const UNITARY_TOL: f64 = 1e-10;

/// A unitary evolution operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    matrix: CMat,
}

impl Propagator {
    pub fn new(matrix: CMat) -> Result<Self> {
        let err = unitarity_error(&matrix);
        if !(err < UNITARY_TOL) {
            return Err(FreezeError::Eigen(format!(
                "propagator lost unitarity (‖U†U − 𝕀‖ = {err:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: identity(dim),
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    /// `later · self`, i.e. apply `self` first.
    pub fn then(&self, later: &Propagator) -> Propagator {
        Propagator {
            matrix: &later.matrix * &self.matrix,
        }
    }

    /// `Uⁿ` by repeated squaring.
    pub fn pow(&self, mut n: usize) -> Propagator {
        let mut base = self.matrix.clone();
        let mut acc = identity(base.nrows());
        while n > 0 {
            if n & 1 == 1 {
                acc = &base * &acc;
            }
            base = &base * &base;
            n >>= 1;
        }
        Propagator { matrix: acc }
    }
}

fn step_from(h: &DriveHamiltonian, grid: &TimeGrid, k: usize) -> Result<Propagator> {
    let eig = HermitianEigen::new(&h.at(grid.step_time(k)))?;
    Propagator::new(eig.propagator(grid.dt()))
}

/// `U_k = exp(−i·δt·H(t_k))` for step `k ∈ 1..=M`.
pub fn step_propagator(
    params: &DriveParams,
    chain: &ChainSpec,
    k: usize,
    grid: &TimeGrid,
) -> Result<Propagator> {
    if k == 0 || k > grid.steps_per_cycle {
        return Err(FreezeError::InvalidParameter(format!(
            "step index {k} outside 1..={}",
            grid.steps_per_cycle
        )));
    }
    step_from(&DriveHamiltonian::new(*params, *chain), grid, k)
}

/// Products of consecutive step propagators, one per sub-cycle block of
/// `M / blocks` steps. With `blocks = 1` this is `U(τ) = U_M ⋯ U_1`.
fn block_propagators(
    params: &DriveParams,
    chain: &ChainSpec,
    grid: &TimeGrid,
    blocks: usize,
) -> Result<Vec<Propagator>> {
    let m = grid.steps_per_cycle;
    if blocks == 0 || !m.is_multiple_of(blocks) {
        return Err(FreezeError::InvalidParameter(format!(
            "substeps per cycle ({blocks}) must divide steps per cycle ({m})"
        )));
    }
    let h = DriveHamiltonian::new(*params, *chain);
    let per = m / blocks;
    let mut out = Vec::with_capacity(blocks);
    let mut k = 1;
    for _ in 0..blocks {
        let mut acc = Propagator::identity(chain.dim());
        for _ in 0..per {
            acc = acc.then(&step_from(&h, grid, k)?);
            k += 1;
        }
        out.push(acc);
    }
    Ok(out)
}

/// One-period propagator `U(τ) = U_M ⋯ U_2 U_1`.
pub fn cycle_propagator(
    params: &DriveParams,
    chain: &ChainSpec,
    grid: &TimeGrid,
) -> Result<Propagator> {
    Ok(block_propagators(params, chain, grid, 1)?.remove(0))
}

/// Provenance of a simulated series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesMeta {
    pub params: DriveParams,
    pub grid: TimeGrid,
    /// Initial tilt angle, when the series started from [`initial_state`].
    pub angle: Option<f64>,
    /// Samples per cycle (1 = stroboscopic only).
    pub substeps: usize,
}

/// Normalized transverse magnetization sampled at `t = 0, τ/s, 2τ/s, …, Nτ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StroboSeries {
    pub times: Vec<f64>,
    pub mx: Vec<f64>,
    pub meta: SeriesMeta,
}

impl StroboSeries {
    pub fn len(&self) -> usize {
        self.mx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mx.is_empty()
    }

    /// The samples at whole cycles, `mˣ(nτ)` for `n = 0..=N`.
    pub fn stroboscopic(&self) -> Vec<f64> {
        self.mx
            .iter()
            .step_by(self.meta.substeps.max(1))
            .copied()
            .collect()
    }
}

/// Evolve `state0` through `grid.cycles` periods, recording `normalized_mx`
/// `substeps_per_cycle` times per period. `substeps_per_cycle` must divide M.
pub fn evolve_strobe(
    state0: &SpinState,
    params: &DriveParams,
    chain: &ChainSpec,
    grid: &TimeGrid,
    substeps_per_cycle: usize,
) -> Result<StroboSeries> {
    if state0.dim() != chain.dim() {
        return Err(FreezeError::DimensionMismatch {
            expected: chain.dim(),
            got: state0.dim(),
        });
    }
    let blocks = block_propagators(params, chain, grid, substeps_per_cycle)?;
    let s = substeps_per_cycle;
    let total = grid.cycles * s;
    let h = grid.tau / s as f64;
    let mut times = Vec::with_capacity(total + 1);
    let mut mx = Vec::with_capacity(total + 1);
    let mut state = state0.clone();
    times.push(0.0);
    mx.push(normalized_mx(&state, chain));
    for i in 1..=total {
        state.evolve(blocks[(i - 1) % s].matrix());
        times.push(i as f64 * h);
        mx.push(normalized_mx(&state, chain));
    }
    Ok(StroboSeries {
        times,
        mx,
        meta: SeriesMeta {
            params: *params,
            grid: *grid,
            angle: None,
            substeps: s,
        },
    })
}

/// Prepare the tilted state and run [`evolve_strobe`].
pub fn run_from_angle(
    params: &DriveParams,
    chain: &ChainSpec,
    grid: &TimeGrid,
    angle: f64,
    kind: StateKind,
    substeps_per_cycle: usize,
) -> Result<StroboSeries> {
    let s0 = initial_state(chain, angle, kind)?;
    let mut out = evolve_strobe(&s0, params, chain, grid, substeps_per_cycle)?;
    out.meta.angle = Some(angle);
    Ok(out)
}

/// `Q = (1/(N+1)) Σ_{n=0}^{N} mˣ(nτ)`, including the `n = 0` sample.
/// Dropping it would shift Q by at most `1/(N+1)`.
pub fn q_average(series: &StroboSeries) -> Result<f64> {
    let v = series.stroboscopic();
    if v.is_empty() {
        return Err(FreezeError::EmptySeries);
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Fixed settings for a frequency sweep; τ follows each ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub steps_per_cycle: usize,
    pub cycles: usize,
    pub rule: StepRule,
    pub angle: f64,
    pub kind: StateKind,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            steps_per_cycle: 11,
            cycles: 30,
            rule: StepRule::RightEndpoint,
            angle: std::f64::consts::FRAC_PI_2,
            kind: StateKind::Deviation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub omega: f64,
    pub q: f64,
}

/// Q for one drive frequency.
pub fn q_at(
    template: &DriveParams,
    chain: &ChainSpec,
    cfg: &SweepConfig,
    omega: f64,
) -> Result<f64> {
    let params = template.with_omega(omega)?;
    let grid = TimeGrid::for_drive(&params, cfg.steps_per_cycle, cfg.cycles)?.with_rule(cfg.rule);
    q_average(&run_from_angle(
        &params, chain, &grid, cfg.angle, cfg.kind, 1,
    )?)
}

/// Q over a list of frequencies, evaluated in parallel. Rows come back in
/// input order; the first failing ω (in input order) is reported.
pub fn sweep_q(
    omegas: &[f64],
    template: &DriveParams,
    chain: &ChainSpec,
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    let results: Vec<Result<SweepRow>> = omegas
        .par_iter()
        .map(|&omega| {
            q_at(template, chain, cfg, omega)
                .map(|q| SweepRow { omega, q })
                .map_err(|e| FreezeError::SweepPoint {
                    omega,
                    source: Box::new(e),
                })
        })
        .collect();
    results.into_iter().collect()
}

/// Angular frequency of a uniformly sampled `a + b·cos(Ωt + φ)` series,
/// from the linear-prediction identity `d_{n+1} + d_{n−1} = 2cos(Ωh)·d_n`
/// on first differences. Returns Ω ∈ [0, π/h].
pub fn sinusoid_frequency(values: &[f64], spacing: f64) -> Result<f64> {
    if values.len() < 5 {
        return Err(FreezeError::SeriesTooShort {
            len: values.len(),
            min: 5,
        });
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(FreezeError::InvalidParameter(format!(
            "sample spacing must be > 0, got {spacing}"
        )));
    }
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..d.len() - 1 {
        num += d[i] * (d[i + 1] + d[i - 1]);
        den += 2.0 * d[i] * d[i];
    }
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((num / den).clamp(-1.0, 1.0).acos() / spacing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs, pauli_x, I};
    use crate::model::StateKind;
    use std::f64::consts::PI;

    /// Taylor series with scaling and squaring, independent of the eigen path.
    fn expm_series(a: &CMat) -> CMat {
        let norm = max_abs(a) * a.nrows() as f64;
        let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let scaled = a * c(0.5f64.powi(s));
        let n = a.nrows();
        let mut term = identity(n);
        let mut sum = identity(n);
        for k in 1..30 {
            term = &term * &scaled * c(1.0 / k as f64);
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn reference(omega: f64) -> (DriveParams, ChainSpec) {
        (
            DriveParams::reference(omega).unwrap(),
            ChainSpec::new(3).unwrap(),
        )
    }

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let p = DriveParams::new(0.0, 3.0, 0.0).unwrap();
        let ch = ChainSpec::new(3).unwrap();
        let g = TimeGrid::for_drive(&p, 11, 1).unwrap();
        let u = step_propagator(&p, &ch, 4, &g).unwrap();
        assert!(max_abs(&(u.matrix() - identity(8))) < 1e-15);
    }

    #[test]
    fn single_spin_rotation() {
        let p = DriveParams::new(3.0, 2.0, 0.0).unwrap();
        let ch = ChainSpec::new(1).unwrap();
        let g = TimeGrid::for_drive(&p, 7, 1).unwrap();
        let k = 3;
        let u = step_propagator(&p, &ch, k, &g).unwrap();
        let a = g.dt() * 0.5 * 3.0 * (2.0 * k as f64 * g.dt()).cos();
        let expected = identity(2) * c(a.cos()) + pauli_x() * (I * a.sin());
        assert!(max_abs(&(u.matrix() - expected)) < 1e-14);
    }

    #[test]
    fn step_matches_series_oracle() {
        let (p, ch) = reference(5.61);
        let g = TimeGrid::for_drive(&p, 11, 1).unwrap();
        for k in [1, 6, 11] {
            let u = step_propagator(&p, &ch, k, &g).unwrap();
            let h = DriveHamiltonian::new(p, ch).at(k as f64 * g.dt());
            let oracle = expm_series(&(h * (-I * g.dt())));
            assert!(max_abs(&(u.matrix() - oracle)) < 1e-10);
        }
    }

    #[test]
    fn step_index_bounds() {
        let (p, ch) = reference(5.61);
        let g = TimeGrid::for_drive(&p, 11, 1).unwrap();
        assert!(step_propagator(&p, &ch, 0, &g).is_err());
        assert!(step_propagator(&p, &ch, 12, &g).is_err());
    }

    #[test]
    fn single_step_cycle_is_one_exponential() {
        let (p, ch) = reference(4.0);
        let g = TimeGrid::for_drive(&p, 1, 1).unwrap();
        let u = cycle_propagator(&p, &ch, &g).unwrap();
        let h = DriveHamiltonian::new(p, ch).at(g.tau);
        let direct = crate::linalg::expm_hermitian(&h, g.tau).unwrap();
        assert!(max_abs(&(u.matrix() - direct)) < 1e-13);
    }

    #[test]
    fn fast_drive_cycle_is_near_identity() {
        let (p, ch) = reference(1e7);
        let g = TimeGrid::for_drive(&p, 11, 1).unwrap();
        let u = cycle_propagator(&p, &ch, &g).unwrap();
        assert!(max_abs(&(u.matrix() - identity(8))) < 1e-5);
    }

    #[test]
    fn cycle_power_matches_step_product() {
        let (p, ch) = reference(5.61);
        let g = TimeGrid::for_drive(&p, 11, 5).unwrap();
        let u = cycle_propagator(&p, &ch, &g).unwrap();
        let h = DriveHamiltonian::new(p, ch);
        let mut direct = identity(8);
        for n in 0..5 {
            for k in 1..=11 {
                let t = n as f64 * g.tau + k as f64 * g.dt();
                direct = crate::linalg::expm_hermitian(&h.at(t), g.dt()).unwrap() * direct;
            }
        }
        assert!(max_abs(&(u.pow(5).matrix() - direct)) < 1e-10);
        assert!(unitarity_error(u.pow(30).matrix()) < 1e-10);
    }

    #[test]
    fn commuting_drive_conserves_mx() {
        let p = DriveParams::new(5.0 * PI, 6.7, 0.0).unwrap();
        let ch = ChainSpec::new(3).unwrap();
        let g = TimeGrid::for_drive(&p, 11, 30).unwrap();
        let s = run_from_angle(&p, &ch, &g, PI / 2.0, StateKind::Deviation, 11).unwrap();
        assert!(s.mx.iter().all(|m| (m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn freezing_point_keeps_mx_high() {
        let (p, ch) = reference(5.61);
        let g = TimeGrid::for_drive(&p, 11, 30).unwrap();
        let s = run_from_angle(&p, &ch, &g, PI / 2.0, StateKind::Deviation, 1).unwrap();
        assert!(q_average(&s).unwrap() > 0.95);
        assert!(s.mx.iter().all(|&m| m > 0.9));
    }

    #[test]
    fn norm_and_trace_conserved() {
        let (p, ch) = reference(8.4);
        let u = cycle_propagator(&p, &ch, &TimeGrid::for_drive(&p, 11, 1).unwrap()).unwrap();
        for kind in [StateKind::Pure, StateKind::Deviation] {
            let mut s = initial_state(&ch, 1.0, kind).unwrap();
            for _ in 0..30 {
                s.evolve(u.matrix());
            }
            assert!(s.invariant_error() < 1e-10);
        }
    }

    #[test]
    fn series_layout() {
        let (p, ch) = reference(8.4);
        let g = TimeGrid::for_drive(&p, 11, 4).unwrap();
        let s = run_from_angle(&p, &ch, &g, PI / 2.0, StateKind::Pure, 11).unwrap();
        assert_eq!(s.len(), 45);
        assert_eq!(s.times[0], 0.0);
        assert!(s.times.windows(2).all(|w| w[1] > w[0]));
        assert!((s.times[44] - 4.0 * g.tau).abs() < 1e-12);
        let strobe = run_from_angle(&p, &ch, &g, PI / 2.0, StateKind::Pure, 1).unwrap();
        for (a, b) in s.stroboscopic().iter().zip(&strobe.mx) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(run_from_angle(&p, &ch, &g, PI / 2.0, StateKind::Pure, 4).is_err());
    }

    #[test]
    fn q_average_simple_series() {
        let meta = SeriesMeta {
            params: DriveParams::reference(5.0).unwrap(),
            grid: TimeGrid::new(11, 4, 1.0).unwrap(),
            angle: None,
            substeps: 1,
        };
        let ones = StroboSeries {
            times: (0..5).map(f64::from).collect(),
            mx: vec![1.0; 5],
            meta,
        };
        assert_eq!(q_average(&ones).unwrap(), 1.0);
        let alt = StroboSeries {
            mx: vec![1.0, -1.0, 1.0, -1.0, 1.0],
            ..ones.clone()
        };
        assert!((q_average(&alt).unwrap() - 0.2).abs() < 1e-15);
        let empty = StroboSeries {
            times: vec![],
            mx: vec![],
            ..ones
        };
        assert!(matches!(q_average(&empty), Err(FreezeError::EmptySeries)));
    }

    #[test]
    fn sweep_matches_single_point() {
        let (p, ch) = reference(5.61);
        let cfg = SweepConfig::default();
        let rows = sweep_q(&[8.4, 5.61, 3.59], &p, &ch, &cfg).unwrap();
        assert_eq!(rows[1].omega, 5.61);
        assert_eq!(rows[1].q, q_at(&p, &ch, &cfg, 5.61).unwrap());
        let again = sweep_q(&[8.4, 5.61, 3.59], &p, &ch, &cfg).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn sweep_reports_bad_omega() {
        let (p, ch) = reference(5.61);
        let err = sweep_q(&[5.0, -1.0], &p, &ch, &SweepConfig::default()).unwrap_err();
        assert!(matches!(err, FreezeError::SweepPoint { omega, .. } if omega == -1.0));
    }

    #[test]
    fn richardson_convergence_in_m() {
        let (p, ch) = reference(8.4);
        let q = |m: usize| {
            let cfg = SweepConfig {
                steps_per_cycle: m,
                ..SweepConfig::default()
            };
            q_at(&p, &ch, &cfg, 8.4).unwrap()
        };
        let (q1, q2, q4) = (q(11), q(22), q(44));
        assert!((q2 - q4).abs() < (q1 - q2).abs());
    }

    #[test]
    fn midpoint_rule_is_more_accurate() {
        let (p, ch) = reference(8.4);
        let u = |m: usize, rule| {
            let g = TimeGrid::for_drive(&p, m, 1).unwrap().with_rule(rule);
            cycle_propagator(&p, &ch, &g).unwrap().into_matrix()
        };
        let fine = u(2000, StepRule::Midpoint);
        let mid = max_abs(&(u(44, StepRule::Midpoint) - &fine));
        let right = max_abs(&(u(44, StepRule::RightEndpoint) - &fine));
        assert!(mid < right);
    }

    #[test]
    fn sinusoid_frequency_recovers_cosine() {
        let h = 0.37;
        let v: Vec<f64> = (0..31)
            .map(|n| 0.4 + 0.3 * (1.3 * n as f64 * h + 0.2).cos())
            .collect();
        assert!((sinusoid_frequency(&v, h).unwrap() - 1.3).abs() < 1e-10);
        assert!(sinusoid_frequency(&v[..3], h).is_err());
    }
}
