//! Gaussian window family.
//!
//! The dilated window is `g_σ(τ) = g(τ/σ)/σ` with the unit Gaussian
//! `g(u) = e^{-u²/2}/√(2π)`, so `g_σ` integrates to one and its Fourier
//! transform `ĝ_σ(ξ) = e^{-2π²σ²ξ²}` has unit peak. A threshold `ε` defines
//! the effective frequency support of `ĝ` as `[-α, α]` with
//! `α = √(2 ln(1/ε)) / 2π`.
//!
//! Kernels are sampled at the continuous definition; the `1/Fs` quadrature
//! weight is applied by the transforms, not baked into the taps.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `g(0)` for the unit Gaussian.
pub const GAUSSIAN_PEAK: f64 = 0.398_942_280_401_432_7;

/// Minimum truncation radius in units of σ. The discarded tail is below
/// `e^{-18} ≈ 1.5e-8` of the window peak.
pub const MIN_RADIUS_SIGMAS: f64 = 6.0;

/// Unit Gaussian `g(u)`.
#[inline]
pub fn gaussian(u: f64) -> f64 {
    GAUSSIAN_PEAK * (-0.5 * u * u).exp()
}

/// Fourier transform of the unit Gaussian, `ĝ(ξ) = e^{-2π²ξ²}`.
#[inline]
pub fn gaussian_ft(xi: f64) -> f64 {
    (-2.0 * PI * PI * xi * xi).exp()
}

/// Half-width `α` of the ε-support of `ĝ`.
pub fn alpha_from_epsilon(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    Ok((2.0 * (1.0 / epsilon).ln()).sqrt() / (2.0 * PI))
}

/// A Gaussian window of width `sigma` with its ε-dependent support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    sigma: f64,
    epsilon: f64,
    alpha: f64,
    truncation_radius: f64,
}

impl WindowSpec {
    pub fn new(sigma: f64, epsilon: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::domain(format!(
                "window width must be positive, got {sigma}"
            )));
        }
        let alpha = alpha_from_epsilon(epsilon)?;
        let truncation_radius = (2.0 * PI * alpha * sigma).max(MIN_RADIUS_SIGMAS * sigma);
        Ok(Self {
            sigma,
            epsilon,
            alpha,
            truncation_radius,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Time radius (seconds) beyond which taps are dropped.
    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    /// Truncation radius in whole samples at `sample_rate`.
    pub fn radius_samples(&self, sample_rate: f64) -> usize {
        radius_samples(self.truncation_radius, sample_rate)
    }

    /// Frequency half-width `α/σ` of the ε-support of `ĝ_σ`.
    pub fn frequency_half_width(&self) -> f64 {
        self.alpha / self.sigma
    }
}

#[inline]
pub(crate) fn radius_samples(radius_seconds: f64, sample_rate: f64) -> usize {
    // Guard against 4.9999999 from rounding when radius·Fs is integral.
    (radius_seconds * sample_rate + 1e-9).floor() as usize
}

/// Time duration `4πσα` of `g_σ` at the window's ε.
pub fn window_duration(spec: &WindowSpec) -> f64 {
    4.0 * PI * spec.sigma * spec.alpha
}

/// Which window-derived kernel a transform uses.
///
/// With `u = τ/σ`:
/// * `G`: `g(u)/σ`
/// * `GPrime`: `g'(u)/σ`
/// * `TauG`: `τ g(u)/σ²`
/// * `TauGPrime`: `τ g'(u)/σ²`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WindowKind {
    G,
    GPrime,
    TauG,
    TauGPrime,
}

impl WindowKind {
    pub const ALL: [WindowKind; 4] = [
        WindowKind::G,
        WindowKind::GPrime,
        WindowKind::TauG,
        WindowKind::TauGPrime,
    ];

    /// Kernel value at lag `tau` (seconds) for width `sigma`.
    #[inline]
    pub fn eval(self, tau: f64, sigma: f64) -> f64 {
        let u = tau / sigma;
        let g = gaussian(u) / sigma;
        match self {
            WindowKind::G => g,
            // g'(u) = -u g(u)
            WindowKind::GPrime => -u * g,
            WindowKind::TauG => u * g,
            WindowKind::TauGPrime => -u * u * g,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WindowKind::G => "g",
            WindowKind::GPrime => "g'",
            WindowKind::TauG => "tau*g",
            WindowKind::TauGPrime => "tau*g'",
        }
    }
}

/// A sampled kernel on integer tap offsets `-radius..=radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    radius: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at integer offset `k` (zero outside the support).
    pub fn at(&self, k: isize) -> f64 {
        let idx = k + self.radius as isize;
        if idx < 0 || idx as usize >= self.weights.len() {
            0.0
        } else {
            self.weights[idx as usize]
        }
    }

    /// `(offset, weight)` pairs.
    pub fn taps(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        let r = self.radius as isize;
        self.weights.iter().enumerate().map(move |(i, &w)| (i as isize - r, w))
    }
}

/// Sample a window kernel at `sample_rate`.
pub fn sample_window(spec: &WindowSpec, kind: WindowKind, sample_rate: f64) -> Result<Kernel> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::domain(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    let radius = spec.radius_samples(sample_rate);
    if radius < 1 {
        return Err(Error::Resolution(format!(
            "window width {} s spans fewer than 3 taps at {} Hz",
            spec.sigma, sample_rate
        )));
    }
    let r = radius as isize;
    let weights = (-r..=r)
        .map(|k| kind.eval(k as f64 / sample_rate, spec.sigma))
        .collect();
    Ok(Kernel { radius, weights })
}
