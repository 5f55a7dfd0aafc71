//! Domain types, Hamiltonian builders, observables and initial states for the
//! driven Ising ring and the NMR internal system.
//!
//! Units: Hamiltonian parameters in rad/s, times in s. NMR chemical shifts and
//! couplings are given in Hz and converted on construction of the operator.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{FreezeError, Result};
use crate::linalg::{
    c, collective, hermiticity_error, pauli_x, pauli_y, pauli_z, site_operator, trace_product,
    CMat, CVec, ONE,
};

/// Largest chain handled with dense 2^L × 2^L matrices.
pub const MAX_SITES: usize = 14;

const HERMITIAN_TOL: f64 = 1e-12;

/// Drive amplitude, drive frequency and Ising coupling, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveParams {
    pub h0: f64,
    pub omega: f64,
    pub j_coupling: f64,
}

impl DriveParams {
    pub fn new(h0: f64, omega: f64, j_coupling: f64) -> Result<Self> {
        if !(h0.is_finite() && h0 >= 0.0) {
            return Err(FreezeError::InvalidParameter(format!(
                "h0 must be ≥ 0, got {h0}"
            )));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(FreezeError::InvalidParameter(format!(
                "omega must be > 0, got {omega}"
            )));
        }
        if !j_coupling.is_finite() {
            return Err(FreezeError::NonFinite(j_coupling));
        }
        Ok(Self {
            h0,
            omega,
            j_coupling,
        })
    }

    /// h₀ = 5π rad/s, 𝒥 = h₀/20, at the given drive frequency.
    pub fn reference(omega: f64) -> Result<Self> {
        let h0 = 5.0 * PI;
        Self::new(h0, omega, h0 / 20.0)
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.h0, omega, self.j_coupling)
    }

    /// Drive period τ = 2π/ω.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Instantaneous transverse field h₀cos(ωt).
    pub fn field(&self, t: f64) -> f64 {
        self.h0 * (self.omega * t).cos()
    }

    /// The Bessel argument 2h₀/ω that controls freezing.
    pub fn bessel_argument(&self) -> f64 {
        2.0 * self.h0 / self.omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// σ_{L+1} = σ_1.
    #[default]
    Periodic,
    /// No bond between the last and first site.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainSpec {
    pub length: usize,
    pub boundary: Boundary,
}

impl ChainSpec {
    /// Periodic ring of `length` sites.
    pub fn new(length: usize) -> Result<Self> {
        Self::with_boundary(length, Boundary::Periodic)
    }

    pub fn with_boundary(length: usize, boundary: Boundary) -> Result<Self> {
        if length == 0 {
            return Err(FreezeError::InvalidParameter(
                "chain needs at least one site".into(),
            ));
        }
        if length > MAX_SITES {
            return Err(FreezeError::DimensionOverflow {
                len: length,
                cap: MAX_SITES,
            });
        }
        Ok(Self { length, boundary })
    }

    pub fn dim(&self) -> usize {
        1 << self.length
    }

    /// Nearest-neighbour bonds `(i, i+1)`. The periodic closure `(L-1, 0)` is
    /// included literally, so a periodic L = 2 ring counts the single pair twice.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let l = self.length;
        if l < 2 {
            return Vec::new();
        }
        let mut b: Vec<_> = (0..l - 1).map(|i| (i, i + 1)).collect();
        if self.boundary == Boundary::Periodic {
            b.push((l - 1, 0));
        }
        b
    }
}

/// A Hermitian matrix, checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMat);

impl HermitianOperator {
    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(FreezeError::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let err = hermiticity_error(&matrix);
        if err >= HERMITIAN_TOL * (1.0 + crate::linalg::max_abs(&matrix)) {
            return Err(FreezeError::InvalidParameter(format!(
                "matrix is not Hermitian (‖H − H†‖ = {err:e})"
            )));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Sorted real spectrum.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let eig = crate::linalg::HermitianEigen::new(&self.0)?;
        let mut v: Vec<f64> = eig.values.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        Ok(v)
    }
}

/// Time-independent pieces of the drive Hamiltonian, so repeated evaluation
/// at many instants costs one matrix sum.
#[derive(Debug, Clone)]
pub struct DriveHamiltonian {
    params: DriveParams,
    ising: CMat,
    transverse: CMat,
}

impl DriveHamiltonian {
    pub fn new(params: DriveParams, chain: ChainSpec) -> Self {
        let n = chain.length;
        let dim = chain.dim();
        let z = pauli_z();
        let mut zz = CMat::zeros(dim, dim);
        for (i, j) in chain.bonds() {
            zz += site_operator(&z, i, n) * site_operator(&z, j, n);
        }
        let sx = collective(&pauli_x(), n);
        Self {
            params,
            ising: zz * c(-0.5 * params.j_coupling),
            transverse: sx * c(-0.5),
        }
    }

    pub fn params(&self) -> &DriveParams {
        &self.params
    }

    /// `H(t) = −½[𝒥 Σσᶻσᶻ + h₀cos(ωt) Σσˣ]` as a raw matrix.
    pub fn at(&self, t: f64) -> CMat {
        &self.ising + &self.transverse * c(self.params.field(t))
    }
}

/// Driven Ising Hamiltonian at time `t`.
pub fn build_drive_hamiltonian(
    params: &DriveParams,
    chain: &ChainSpec,
    t: f64,
) -> Result<HermitianOperator> {
    if !t.is_finite() {
        return Err(FreezeError::NonFinite(t));
    }
    HermitianOperator::new(DriveHamiltonian::new(*params, *chain).at(t))
}

/// Chemical shifts (Hz) and scalar couplings (Hz) of a homonuclear spin system.
#[derive(Debug, Clone, PartialEq)]
pub struct NmrSystem {
    offsets_hz: Vec<f64>,
    couplings_hz: DMatrix<f64>,
}

impl NmrSystem {
    pub fn new(offsets_hz: Vec<f64>, couplings_hz: DMatrix<f64>) -> Result<Self> {
        let n = offsets_hz.len();
        if n == 0 {
            return Err(FreezeError::InvalidParameter(
                "NMR system needs a spin".into(),
            ));
        }
        if n > MAX_SITES {
            return Err(FreezeError::DimensionOverflow {
                len: n,
                cap: MAX_SITES,
            });
        }
        if couplings_hz.nrows() != n || couplings_hz.ncols() != n {
            return Err(FreezeError::DimensionMismatch {
                expected: n,
                got: couplings_hz.nrows(),
            });
        }
        for i in 0..n {
            if couplings_hz[(i, i)] != 0.0 {
                return Err(FreezeError::InvalidParameter(
                    "coupling matrix must have a zero diagonal".into(),
                ));
            }
            for j in 0..n {
                if couplings_hz[(i, j)] != couplings_hz[(j, i)] {
                    return Err(FreezeError::InvalidParameter(
                        "coupling matrix must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(Self {
            offsets_hz,
            couplings_hz,
        })
    }

    /// Build from offsets and the upper-triangle couplings `J_12, J_13, …, J_23, …`.
    pub fn from_upper(offsets_hz: Vec<f64>, upper: &[f64]) -> Result<Self> {
        let n = offsets_hz.len();
        if upper.len() != n * (n.saturating_sub(1)) / 2 {
            return Err(FreezeError::DimensionMismatch {
                expected: n * (n.saturating_sub(1)) / 2,
                got: upper.len(),
            });
        }
        let mut m = DMatrix::zeros(n, n);
        let mut it = upper.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::new(offsets_hz, m)
    }

    /// Illustrative three-spin system used by the pulse-synthesis examples
    /// and tests. These are made-up numbers, not measured molecular values.
    pub fn example_three_spin() -> Self {
        Self::from_upper(vec![220.0, -80.0, -140.0], &[48.0, -65.0, 35.0])
            .expect("example system is valid")
    }

    pub fn spins(&self) -> usize {
        self.offsets_hz.len()
    }

    pub fn offsets_hz(&self) -> &[f64] {
        &self.offsets_hz
    }

    pub fn coupling_hz(&self, i: usize, j: usize) -> f64 {
        self.couplings_hz[(i, j)]
    }
}

/// `H_int = −π Σ νᵢσᵢᶻ + (π/2) Σ_{i<j} J_ij σᵢᶻσⱼᶻ` in rad/s.
pub fn build_internal_hamiltonian(sys: &NmrSystem) -> HermitianOperator {
    let n = sys.spins();
    let dim = 1 << n;
    let z = pauli_z();
    let zs: Vec<CMat> = (0..n).map(|i| site_operator(&z, i, n)).collect();
    let mut h = CMat::zeros(dim, dim);
    for (i, zi) in zs.iter().enumerate() {
        h += zi * c(-PI * sys.offsets_hz[i]);
        for (j, zj) in zs.iter().enumerate().skip(i + 1) {
            let jij = sys.couplings_hz[(i, j)];
            if jij != 0.0 {
                h += zi * zj * c(0.5 * PI * jij);
            }
        }
    }
    HermitianOperator(h)
}

/// `Σᵢ σᵢˣ / 2`.
pub fn magnetization_operator(chain: &ChainSpec) -> HermitianOperator {
    HermitianOperator(collective(&pauli_x(), chain.length) * c(0.5))
}

/// `m₀ = Tr[(Σσˣ/2)²] = L·2^L/4`.
pub fn magnetization_norm(chain: &ChainSpec) -> f64 {
    chain.length as f64 * chain.dim() as f64 / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Pure,
    Deviation,
}

/// Either a normalized state vector or a traceless deviation density matrix.
/// The identity background and the polarization prefactor of the thermal
/// state are dropped; normalization of observables goes through `m₀`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpinState {
    Pure(CVec),
    Deviation(CMat),
}

impl SpinState {
    pub fn kind(&self) -> StateKind {
        match self {
            SpinState::Pure(_) => StateKind::Pure,
            SpinState::Deviation(_) => StateKind::Deviation,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpinState::Pure(v) => v.len(),
            SpinState::Deviation(m) => m.nrows(),
        }
    }

    /// `ψ ← Uψ` or `ρ ← UρU†`.
    pub fn evolve(&mut self, u: &CMat) {
        match self {
            SpinState::Pure(v) => *v = u * &*v,
            SpinState::Deviation(m) => *m = u * &*m * u.adjoint(),
        }
    }

    /// Deviation from the defining invariant: `|‖ψ‖ − 1|` for pure states,
    /// `max(‖ρ − ρ†‖_max, |Tr ρ|)` for deviation matrices.
    pub fn invariant_error(&self) -> f64 {
        match self {
            SpinState::Pure(v) => (v.norm() - 1.0).abs(),
            SpinState::Deviation(m) => hermiticity_error(m).max(crate::linalg::trace(m).norm()),
        }
    }
}

/// Single-spin `R_y(θ) = exp(−iθσʸ/2)`.
fn ry(angle: f64) -> CMat {
    let (s, co) = (0.5 * angle).sin_cos();
    CMat::from_row_slice(2, 2, &[c(co), c(-s), c(s), c(co)])
}

/// Global rotation `exp(−iθ Σσʸ/2)`.
pub fn global_ry(n: usize, angle: f64) -> CMat {
    let r = ry(angle);
    (0..n).fold(CMat::from_element(1, 1, ONE), |acc, _| acc.kronecker(&r))
}

/// Thermal deviation `Σσᶻ/2` (or the all-up state) rotated by a global `R_y(angle)`.
pub fn initial_state(chain: &ChainSpec, angle: f64, kind: StateKind) -> Result<SpinState> {
    if !(0.0..=PI).contains(&angle) {
        return Err(FreezeError::InvalidParameter(format!(
            "initial angle must lie in [0, π], got {angle}"
        )));
    }
    let n = chain.length;
    Ok(match kind {
        StateKind::Pure => {
            let (s, co) = (0.5 * angle).sin_cos();
            let single = CVec::from_vec(vec![c(co), c(s)]);
            let psi = (1..n).fold(single.clone(), |acc, _| acc.kronecker(&single));
            SpinState::Pure(psi)
        }
        StateKind::Deviation => {
            let r = global_ry(n, angle);
            let sz = collective(&pauli_z(), n) * c(0.5);
            SpinState::Deviation(&r * sz * r.adjoint())
        }
    })
}

/// Normalized transverse magnetization `Tr[ρ Σσˣ/2]/m₀`, or `⟨ψ|Σσˣ/2|ψ⟩/(L/2)`.
pub fn normalized_mx(state: &SpinState, chain: &ChainSpec) -> f64 {
    let mx = magnetization_operator(chain);
    match state {
        SpinState::Pure(psi) => {
            let e = psi.dotc(&(mx.matrix() * psi));
            e.re / (0.5 * chain.length as f64)
        }
        SpinState::Deviation(rho) => trace_product(rho, mx.matrix()).re / magnetization_norm(chain),
    }
}

/// `σʸ` sum, used by the control module for the second RF quadrature.
pub fn collective_y(n: usize) -> CMat {
    collective(&pauli_y(), n)
}

/// `σˣ` sum.
pub fn collective_x(n: usize) -> CMat {
    collective(&pauli_x(), n)
}

/// Instant at which the Hamiltonian is frozen within each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Step `k` (1-based) uses `H(k·δt)`.
    #[default]
    RightEndpoint,
    /// Step `k` uses `H((k − ½)·δt)`.
    Midpoint,
}

/// Piecewise-constant discretization of the drive: `M` steps per cycle, `N` cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub steps_per_cycle: usize,
    pub cycles: usize,
    pub tau: f64,
    pub rule: StepRule,
}

impl TimeGrid {
    pub fn new(steps_per_cycle: usize, cycles: usize, tau: f64) -> Result<Self> {
        if steps_per_cycle == 0 || cycles == 0 {
            return Err(FreezeError::InvalidParameter(
                "steps per cycle and cycle count must be ≥ 1".into(),
            ));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(FreezeError::InvalidParameter(format!(
                "tau must be > 0, got {tau}"
            )));
        }
        Ok(Self {
            steps_per_cycle,
            cycles,
            tau,
            rule: StepRule::RightEndpoint,
        })
    }

    pub fn with_rule(mut self, rule: StepRule) -> Self {
        self.rule = rule;
        self
    }

    /// Sampling instant of step `k` (1-based) within the first cycle.
    pub fn step_time(&self, k: usize) -> f64 {
        match self.rule {
            StepRule::RightEndpoint => k as f64 * self.dt(),
            StepRule::Midpoint => (k as f64 - 0.5) * self.dt(),
        }
    }

    /// Grid matched to the drive period.
    pub fn for_drive(params: &DriveParams, steps_per_cycle: usize, cycles: usize) -> Result<Self> {
        Self::new(steps_per_cycle, cycles, params.period())
    }

    /// δt = τ/M.
    pub fn dt(&self) -> f64 {
        self.tau / self.steps_per_cycle as f64
    }

    pub fn total_time(&self) -> f64 {
        self.tau * self.cycles as f64
    }
}

/// Matrix of the cyclic site shift `i → i+1`, acting on basis states.
pub fn cyclic_shift(chain: &ChainSpec) -> CMat {
    let n = chain.length;
    let dim = chain.dim();
    let mut p = CMat::zeros(dim, dim);
    for b in 0..dim {
        // bit (n-1-i) holds site i; site i moves to site i+1 (mod n)
        let mut out = 0usize;
        for i in 0..n {
            if b >> (n - 1 - i) & 1 == 1 {
                let dest = (i + 1) % n;
                out |= 1 << (n - 1 - dest);
            }
        }
        p[(out, b)] = ONE;
    }
    p
}
