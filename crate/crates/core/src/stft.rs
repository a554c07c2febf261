//! Short-time Fourier transform with a time-varying Gaussian window.
//!
//! For every sample `n` the transform evaluates
//!
//! ```text
//! V[n, m] = Σ_k x[n+k] · w_{σ(t_n)}(k/Fs) · e^{-i2π η_m k/Fs} / Fs
//! ```
//!
//! over the truncated window taps, with zero padding outside the signal and
//! `η_m = m·Fs/nfft`. Taps wider than `nfft` are folded modulo `nfft`, which
//! samples the DTFT exactly at the grid frequencies.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::Signal;
use crate::window::{radius_samples, WindowKind, WindowSpec, GAUSSIAN_PEAK};

/// Which part of the frequency axis a transform keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    /// Bins `0..=nfft/2`, i.e. `[0, Fs/2]`. Used for real signals.
    Half,
    /// All `nfft` bins ordered from `-Fs/2` upward.
    Full,
}

impl Band {
    pub fn for_signal(signal: &Signal) -> Self {
        if signal.is_real() {
            Band::Half
        } else {
            Band::Full
        }
    }

    pub fn num_bins(self, nfft: usize) -> usize {
        match self {
            Band::Half => nfft / 2 + 1,
            Band::Full => nfft,
        }
    }

    /// Signed DFT bin index of output column `col`.
    #[inline]
    fn bin(self, col: usize, nfft: usize) -> isize {
        match self {
            Band::Half => col as isize,
            Band::Full => col as isize - (nfft / 2) as isize,
        }
    }

    pub fn freq_grid(self, nfft: usize, sample_rate: f64) -> Vec<f64> {
        (0..self.num_bins(nfft))
            .map(|c| self.bin(c, nfft) as f64 * sample_rate / nfft as f64)
            .collect()
    }
}

/// Per-sample window width `σ(t)` and its derivative `σ'(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingParam {
    sigma: Vec<f64>,
    sigma_prime: Vec<f64>,
}

impl TimeVaryingParam {
    /// Derivative from central differences, one-sided at the ends.
    pub fn new(sigma: Vec<f64>, sample_rate: f64) -> Result<Self> {
        check_sigma(&sigma)?;
        if !(sample_rate > 0.0) {
            return Err(Error::domain("sample rate must be positive"));
        }
        let n = sigma.len();
        let sigma_prime = (0..n)
            .map(|i| {
                if n == 1 {
                    0.0
                } else if i == 0 {
                    (sigma[1] - sigma[0]) * sample_rate
                } else if i == n - 1 {
                    (sigma[n - 1] - sigma[n - 2]) * sample_rate
                } else {
                    (sigma[i + 1] - sigma[i - 1]) * sample_rate * 0.5
                }
            })
            .collect();
        Ok(Self { sigma, sigma_prime })
    }

    pub fn with_derivative(sigma: Vec<f64>, sigma_prime: Vec<f64>) -> Result<Self> {
        check_sigma(&sigma)?;
        if sigma_prime.len() != sigma.len() {
            return Err(Error::domain("σ and σ' tracks differ in length"));
        }
        if sigma_prime.iter().any(|d| !d.is_finite()) {
            return Err(Error::domain("σ' must be finite"));
        }
        Ok(Self { sigma, sigma_prime })
    }

    pub fn constant(sigma: f64, len: usize) -> Result<Self> {
        Self::with_derivative(vec![sigma; len], vec![0.0; len])
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_prime(&self) -> &[f64] {
        &self.sigma_prime
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// `σ'(t_n)/σ(t_n)`.
    #[inline]
    pub fn log_rate(&self, n: usize) -> f64 {
        self.sigma_prime[n] / self.sigma[n]
    }

    pub fn is_constant(&self) -> bool {
        self.sigma_prime.iter().all(|&d| d == 0.0)
            && self.sigma.windows(2).all(|w| w[0] == w[1])
    }
}

fn check_sigma(sigma: &[f64]) -> Result<()> {
    if sigma.is_empty() {
        return Err(Error::domain("σ track is empty"));
    }
    if let Some(bad) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::domain(format!("σ must be positive everywhere, got {bad}")));
    }
    Ok(())
}

/// A complex time-frequency matrix on explicit grids.
#[derive(Debug, Clone)]
pub struct TfMatrix {
    pub values: Matrix<Complex64>,
    pub time_grid: Vec<f64>,
    pub freq_grid: Vec<f64>,
    pub sigma: TimeVaryingParam,
    pub kind: WindowKind,
    pub band: Band,
    pub sample_rate: f64,
    pub nfft: usize,
}

impl TfMatrix {
    pub fn num_times(&self) -> usize {
        self.values.rows()
    }

    pub fn num_freqs(&self) -> usize {
        self.values.cols()
    }

    /// Frequency grid spacing `Fs/nfft`.
    pub fn freq_step(&self) -> f64 {
        self.sample_rate / self.nfft as f64
    }

    pub fn magnitude(&self) -> Matrix<f64> {
        self.values.map(|z| z.norm())
    }

    pub fn same_grid(&self, other: &TfMatrix) -> bool {
        self.values.shape() == other.values.shape()
            && self.nfft == other.nfft
            && self.band == other.band
            && self.sample_rate == other.sample_rate
    }

    /// Columns with non-negative frequency.
    pub fn nonnegative_columns(&self) -> Range<usize> {
        match self.band {
            Band::Half => 0..self.num_freqs(),
            Band::Full => self.nfft / 2..self.num_freqs(),
        }
    }

    fn like(&self, values: Matrix<Complex64>, kind: WindowKind) -> TfMatrix {
        TfMatrix {
            values,
            time_grid: self.time_grid.clone(),
            freq_grid: self.freq_grid.clone(),
            sigma: self.sigma.clone(),
            kind,
            band: self.band,
            sample_rate: self.sample_rate,
            nfft: self.nfft,
        }
    }
}

fn validate_inputs(
    signal: &Signal,
    sigma: &[f64],
    epsilon: f64,
    nfft: usize,
) -> Result<Vec<usize>> {
    if sigma.len() != signal.len() {
        return Err(Error::domain(format!(
            "σ track has {} samples but the signal has {}",
            sigma.len(),
            signal.len()
        )));
    }
    if nfft < 2 {
        return Err(Error::domain("nfft must be at least 2"));
    }
    let fs = signal.sample_rate();
    sigma
        .iter()
        .map(|&s| {
            let spec = WindowSpec::new(s, epsilon)?;
            let r = spec.radius_samples(fs);
            if r < 1 {
                Err(Error::Resolution(format!(
                    "window width {s} s spans fewer than 3 taps at {fs} Hz"
                )))
            } else {
                Ok(r)
            }
        })
        .collect()
}

/// Compute several kernels' transforms for a range of frames in one pass.
pub(crate) fn transform_frames(
    signal: &Signal,
    sigma: &[f64],
    kinds: &[WindowKind],
    epsilon: f64,
    nfft: usize,
    band: Band,
    frames: Range<usize>,
) -> Result<Vec<Matrix<Complex64>>> {
    let radii = validate_inputs(signal, sigma, epsilon, nfft)?;
    if frames.end > signal.len() {
        return Err(Error::Range("frame range exceeds the signal".into()));
    }
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(nfft);
    let x = signal.samples();
    let n_len = x.len() as isize;
    let fs = signal.sample_rate();
    let cols = band.num_bins(nfft);
    let shared = shared_taps(sigma, &radii, kinds, fs, &frames);

    let rows: Vec<Vec<Vec<Complex64>>> = frames
        .clone()
        .into_par_iter()
        .map(|n| {
            let s = sigma[n];
            let r = radii[n] as isize;
            let mut bufs = vec![vec![Complex64::new(0.0, 0.0); nfft]; kinds.len()];
            let lo = (-r).max(-(n as isize));
            let hi = r.min(n_len - 1 - n as isize);
            let own;
            let taps = match shared.get(&s.to_bits()) {
                Some(t) => t,
                None => {
                    own = window_taps(s, r, kinds, fs);
                    &own
                }
            };
            for k in lo..=hi {
                let xv = x[(n as isize + k) as usize] / fs;
                let slot = k.rem_euclid(nfft as isize) as usize;
                let row = &taps[(k + r) as usize * kinds.len()..][..kinds.len()];
                for (buf, &w) in bufs.iter_mut().zip(row) {
                    buf[slot] += xv * w;
                }
            }
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            bufs.into_iter()
                .map(|mut buf| {
                    fft.process_with_scratch(&mut buf, &mut scratch);
                    (0..cols)
                        .map(|c| buf[band.bin(c, nfft).rem_euclid(nfft as isize) as usize])
                        .collect()
                })
                .collect()
        })
        .collect();

    let n_frames = frames.len();
    let mut out: Vec<Vec<Complex64>> = kinds
        .iter()
        .map(|_| Vec::with_capacity(n_frames * cols))
        .collect();
    for frame in rows {
        for (dst, row) in out.iter_mut().zip(frame) {
            dst.extend(row);
        }
    }
    Ok(out
        .into_iter()
        .map(|data| Matrix::from_vec(n_frames, cols, data))
        .collect())
}

/// Kernel values at taps `-r..=r`, interleaved by kind.
fn window_taps(sigma: f64, r: isize, kinds: &[WindowKind], fs: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity((2 * r as usize + 1) * kinds.len());
    for k in -r..=r {
        let tau = k as f64 / fs;
        out.extend(kinds.iter().map(|kind| kind.eval(tau, sigma)));
    }
    out
}

/// Tap tables for widths used by more than one frame.
fn shared_taps(
    sigma: &[f64],
    radii: &[usize],
    kinds: &[WindowKind],
    fs: f64,
    frames: &Range<usize>,
) -> HashMap<u64, Vec<f64>> {
    let mut seen: HashMap<u64, (usize, usize)> = HashMap::new();
    for n in frames.clone() {
        seen.entry(sigma[n].to_bits()).or_insert((n, 0)).1 += 1;
    }
    seen.into_iter()
        .filter(|(_, (_, count))| *count > 1)
        .map(|(bits, (n, _))| (bits, window_taps(sigma[n], radii[n] as isize, kinds, fs)))
        .collect()
}

fn wrap(
    signal: &Signal,
    sigma: &TimeVaryingParam,
    values: Matrix<Complex64>,
    kind: WindowKind,
    nfft: usize,
    band: Band,
) -> TfMatrix {
    TfMatrix {
        values,
        time_grid: signal.times(),
        freq_grid: band.freq_grid(nfft, signal.sample_rate()),
        sigma: sigma.clone(),
        kind,
        band,
        sample_rate: signal.sample_rate(),
        nfft,
    }
}

/// Adaptive STFT with the band implied by the signal (half for real input).
pub fn adaptive_stft(
    signal: &Signal,
    sigma: &TimeVaryingParam,
    kind: WindowKind,
    epsilon: f64,
    nfft: usize,
) -> Result<TfMatrix> {
    adaptive_stft_band(signal, sigma, kind, epsilon, nfft, Band::for_signal(signal))
}

pub fn adaptive_stft_band(
    signal: &Signal,
    sigma: &TimeVaryingParam,
    kind: WindowKind,
    epsilon: f64,
    nfft: usize,
    band: Band,
) -> Result<TfMatrix> {
    let mut m = transform_frames(
        signal,
        sigma.sigma(),
        &[kind],
        epsilon,
        nfft,
        band,
        0..signal.len(),
    )?;
    Ok(wrap(signal, sigma, m.remove(0), kind, nfft, band))
}

/// The adaptive STFT together with its auxiliary transforms and `∂_t Ṽ`.
#[derive(Debug, Clone)]
pub struct TransformSet {
    pub v: TfMatrix,
    pub v_gprime: TfMatrix,
    pub v_tau_g: TfMatrix,
    pub v_tau_gprime: TfMatrix,
    pub dv_dt: TfMatrix,
}

/// Compute all four kernels and the time derivative
/// `∂_tṼ = i2πηṼ − Ṽ^{g'}/σ − (σ'/σ)(Ṽ + Ṽ^{τg'})`.
pub fn transform_set(
    signal: &Signal,
    sigma: &TimeVaryingParam,
    epsilon: f64,
    nfft: usize,
    band: Band,
) -> Result<TransformSet> {
    let mut mats = transform_frames(
        signal,
        sigma.sigma(),
        &WindowKind::ALL,
        epsilon,
        nfft,
        band,
        0..signal.len(),
    )?
    .into_iter();
    let mut next = |kind| wrap(signal, sigma, mats.next().unwrap(), kind, nfft, band);
    let v = next(WindowKind::G);
    let v_gprime = next(WindowKind::GPrime);
    let v_tau_g = next(WindowKind::TauG);
    let v_tau_gprime = next(WindowKind::TauGPrime);
    let dv = time_derivative(&v, &v_gprime, &v_tau_gprime);
    Ok(TransformSet {
        dv_dt: v.like(dv, WindowKind::G),
        v,
        v_gprime,
        v_tau_g,
        v_tau_gprime,
    })
}

fn time_derivative(v: &TfMatrix, v_gp: &TfMatrix, v_tgp: &TfMatrix) -> Matrix<Complex64> {
    let mut out = Matrix::filled(v.num_times(), v.num_freqs(), Complex64::new(0.0, 0.0));
    for n in 0..v.num_times() {
        let s = v.sigma.sigma()[n];
        let ratio = v.sigma.log_rate(n);
        let (rv, rgp, rtgp) = (v.values.row(n), v_gp.values.row(n), v_tgp.values.row(n));
        for (m, dst) in out.row_mut(n).iter_mut().enumerate() {
            let eta = v.freq_grid[m];
            *dst = Complex64::new(0.0, 2.0 * PI * eta) * rv[m] - rgp[m] / s
                - (rv[m] + rtgp[m]) * ratio;
        }
    }
    out
}

/// `∂_tṼ` from the auxiliary transforms (no finite differencing in time).
pub fn stft_time_derivative(
    signal: &Signal,
    sigma: &TimeVaryingParam,
    epsilon: f64,
    nfft: usize,
) -> Result<TfMatrix> {
    Ok(transform_set(signal, sigma, epsilon, nfft, Band::for_signal(signal))?.dv_dt)
}

/// Per-column quadrature weights for summing a half-band transform into
/// `2·Re(∫_0^{Fs/2})`: the DC and Nyquist bins count once.
pub(crate) fn half_band_weight(col: usize, nfft: usize) -> f64 {
    if col == 0 || (nfft % 2 == 0 && col == nfft / 2) {
        0.5
    } else {
        1.0
    }
}

/// Invert an adaptive STFT: `x(t) = σ(t)/g(0) ∫ Ṽ(t, η) dη`, or the
/// `2σ(t)/g(0) Re ∫_0^∞` form for real input.
pub fn reconstruct_full(
    tf: &TfMatrix,
    sigma: &TimeVaryingParam,
    real_input: bool,
) -> Result<Signal> {
    if tf.kind != WindowKind::G {
        return Err(Error::domain(format!(
            "inversion needs the plain window transform, got kind {}",
            tf.kind.name()
        )));
    }
    if sigma.len() != tf.num_times() {
        return Err(Error::domain("σ track length does not match the time grid"));
    }
    if tf.band == Band::Half && !real_input {
        return Err(Error::domain(
            "a half-band transform can only be inverted for real input",
        ));
    }
    let d_eta = tf.freq_step();
    let samples: Vec<Complex64> = (0..tf.num_times())
        .map(|n| {
            let row = tf.values.row(n);
            let scale = sigma.sigma()[n] / GAUSSIAN_PEAK * d_eta;
            match tf.band {
                Band::Full => {
                    let s: Complex64 = row.iter().sum::<Complex64>() * scale;
                    if real_input {
                        Complex64::new(s.re, 0.0)
                    } else {
                        s
                    }
                }
                Band::Half => {
                    let s: Complex64 = row
                        .iter()
                        .enumerate()
                        .map(|(m, z)| z * half_band_weight(m, tf.nfft))
                        .sum();
                    Complex64::new(2.0 * scale * s.re, 0.0)
                }
            }
        })
        .collect();
    let t0 = tf.time_grid.first().copied().unwrap_or(0.0);
    if real_input {
        Signal::from_real(samples.iter().map(|z| z.re).collect(), tf.sample_rate, t0)
    } else {
        Signal::from_complex(samples, tf.sample_rate, t0)
    }
}

/// Closed-form Gaussian-window STFT of `A e^{i2π(ct + rt²/2)}`.
pub fn lfm_stft_closed_form(a: f64, c: f64, r: f64, sigma: f64, t: f64, eta: f64) -> Complex64 {
    let s2 = sigma * sigma;
    let k = 2.0 * PI * s2 * r;
    let xi = eta - c - r * t;
    let prefactor = a / Complex64::new(1.0, -k).sqrt();
    let carrier = Complex64::from_polar(1.0, 2.0 * PI * (c * t + 0.5 * r * t * t));
    let expo = -(2.0 * PI * PI * s2 / (1.0 + k * k)) * Complex64::new(1.0, k) * xi * xi;
    prefactor * carrier * expo.exp()
}

/// Frames whose truncated window lies fully inside the signal.
pub fn interior_frames(sigma: &TimeVaryingParam, epsilon: f64, sample_rate: f64) -> Vec<bool> {
    let n = sigma.len();
    sigma
        .sigma()
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let r = WindowSpec::new(s, epsilon)
                .map(|w| radius_samples(w.truncation_radius(), sample_rate))
                .unwrap_or(usize::MAX);
            r != usize::MAX && i >= r && i + r < n
        })
        .collect()
}
