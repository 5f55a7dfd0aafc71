//! Closed-form predictions: J₀, rotating-wave mode parameters, the
//! magnetization envelope, Q for L = 3 and L → ∞, and freezing frequencies.

use std::f64::consts::PI;

use crate::error::{FreezeError, Result};
use crate::fermion::PAIRED_MOMENTUM;
use crate::model::DriveParams;

/// Bessel function of the first kind, order zero.
///
/// Power series for |x| ≤ 8, Miller backward recurrence normalized by
/// `J₀ + 2ΣJ₂ₖ = 1` up to |x| = 50, Hankel asymptotic expansion beyond.
pub fn bessel_j0(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(FreezeError::NonFinite(x));
    }
    let x = x.abs();
    Ok(if x <= 8.0 {
        j0_series(x)
    } else if x <= 50.0 {
        j0_miller(x)
    } else {
        j0_hankel(x)
    })
}

fn j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..100 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-3) {
            break;
        }
    }
    sum
}

fn j0_miller(x: f64) -> f64 {
    // start well above x so the seeded tail has decayed below double precision
    let mut n = (x + 30.0 + 4.0 * x.sqrt()) as usize;
    n += n % 2;
    let (mut jp1, mut j) = (0.0f64, 1e-300f64);
    let mut even_sum = 0.0;
    let mut j0 = 0.0;
    for k in (1..=n).rev() {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        let idx = k - 1;
        if idx == 0 {
            j0 = j;
        } else if idx % 2 == 0 {
            even_sum += j;
        }
        if j.abs() > 1e250 {
            jp1 *= 1e-250;
            j *= 1e-250;
            even_sum *= 1e-250;
        }
    }
    j0 / (j0 + 2.0 * even_sum)
}

fn j0_hankel(x: f64) -> f64 {
    // t_k = (1²·3²⋯(2k−1)²)/(k!·(8x)^k); P = t₀ − t₂ + t₄ − …, Q = −t₁ + t₃ − …
    let (mut p, mut q) = (1.0, 0.0);
    let mut t = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        t *= odd * odd / (8.0 * k as f64 * x);
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * t;
        } else {
            q -= sign * t;
        }
        if t < 1e-17 {
            break;
        }
    }
    let chi = x - 0.25 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Effective Rabi frequency and envelope amplitude of a paired mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwaModeParams {
    pub phi: f64,
    pub amp_sq: f64,
}

/// `φ_k = |𝒥|√(J₀²sin²k + cos²k)` and `A_k² = J₀²𝒥²sin²k/φ_k²`, with
/// `J₀ = J₀(2h₀/ω)`. When `φ_k = 0` (only for J₀ = 0 and cos k = 0, or
/// 𝒥 = 0) the continuous limit `A² = 1` is returned.
pub fn rwa_mode_params(k: f64, params: &DriveParams) -> Result<RwaModeParams> {
    let j0 = bessel_j0(params.bessel_argument())?;
    Ok(mode_params_from_j0(k, params.j_coupling, j0))
}

pub(crate) fn mode_params_from_j0(k: f64, j: f64, j0: f64) -> RwaModeParams {
    let (s, c) = k.sin_cos();
    let s2 = j0 * j0 * s * s;
    let inner = s2 + c * c;
    let phi = j.abs() * inner.sqrt();
    let amp_sq = if inner < 1e-30 || j == 0.0 {
        1.0
    } else {
        (s2 / inner).min(1.0)
    };
    RwaModeParams { phi, amp_sq }
}

/// Whether the drive is in the fast regime where the envelope is expected to
/// hold; taken as `ω ≥ 8|𝒥|`.
pub fn fast_drive_regime(params: &DriveParams) -> bool {
    params.omega >= 8.0 * params.j_coupling.abs()
}

/// `mˣ(t) = Q(L=3) + (2A²/3)·cos(2φt)` for the three-site ring.
pub fn rwa_mx_t(params: &DriveParams, t: f64) -> Result<f64> {
    let m = rwa_mode_params(PAIRED_MOMENTUM, params)?;
    Ok(1.0 - 2.0 * m.amp_sq / 3.0 + 2.0 * m.amp_sq / 3.0 * (2.0 * m.phi * t).cos())
}

/// Long-time average for the three-site ring, `1 − (2/3)A² = (1 + J₀²)/(1 + 3J₀²)`.
pub fn q_l3(params: &DriveParams) -> Result<f64> {
    let j0 = bessel_j0(params.bessel_argument())?;
    Ok((1.0 + j0 * j0) / (1.0 + 3.0 * j0 * j0))
}

/// Infinite-chain freezing parameter `1/(1 + |J₀(2h₀/ω)|)`.
pub fn q_infinite(params: &DriveParams) -> Result<f64> {
    let j0 = bessel_j0(params.bessel_argument())?;
    Ok(1.0 / (1.0 + j0.abs()))
}

/// Drive frequencies in `(lo, hi)` at which `J₀(2h₀/ω) = 0`, ascending.
pub fn freezing_frequencies(h0: f64, omega_range: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = omega_range;
    if !(lo.is_finite() && hi.is_finite() && h0.is_finite()) {
        return Err(FreezeError::NonFinite(if lo.is_finite() { hi } else { lo }));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(FreezeError::EmptyRange { lo, hi });
    }
    if h0 <= 0.0 {
        return Ok(Vec::new());
    }
    let (x_lo, x_hi) = (2.0 * h0 / hi, 2.0 * h0 / lo);
    // zeros of J₀ are spaced by roughly π, so a 0.5 scan cannot skip a pair
    let step = 0.5;
    let mut roots = Vec::new();
    let mut a = x_lo;
    let mut fa = bessel_j0(a)?;
    while a < x_hi {
        let b = (a + step).min(x_hi);
        let fb = bessel_j0(b)?;
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            roots.push(bisect_j0(a, b, fa)?);
        }
        a = b;
        fa = fb;
    }
    let mut omegas: Vec<f64> = roots
        .into_iter()
        .filter(|&x| x > x_lo && x < x_hi)
        .map(|x| 2.0 * h0 / x)
        .collect();
    omegas.sort_by(|a, b| a.total_cmp(b));
    Ok(omegas)
}

fn bisect_j0(mut a: f64, mut b: f64, mut fa: f64) -> Result<f64> {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a <= 1e-15 * m {
            break;
        }
        let fm = bessel_j0(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}
