//! Data-driven choice of the window width track `σ(t)`.
//!
//! The search starts each time instant at the width of sharpest local
//! Rényi entropy and shrinks it while the peaks of the STFT slice keep
//! disjoint support intervals and their count stays fixed.

use std::f64::consts::PI;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::phase::DEFAULT_THRESHOLD;
use crate::signal::Signal;
use crate::sst::{squeeze_set, SstVariant};
use crate::stft::{transform_frames, transform_set, Band, TfMatrix, TimeVaryingParam};
use crate::window::{alpha_from_epsilon, radius_samples, WindowKind, WindowSpec};

/// Uniform grid of widths, visited from `max` down to `min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaGrid {
    pub max: f64,
    pub min: f64,
    pub step: f64,
}

impl SigmaGrid {
    pub fn new(max: f64, min: f64, step: f64) -> Result<Self> {
        let grid = Self { max, min, step };
        grid.validate("sigma_grid")?;
        Ok(grid)
    }

    pub fn singleton(sigma: f64) -> Result<Self> {
        Self::new(sigma, sigma, sigma)
    }

    fn validate(&self, field: &str) -> Result<()> {
        validate_grid(self.max, self.min, self.step, field)?;
        if self.min <= 0.0 {
            return Err(Error::config(format!("{field}.min"), "must be positive"));
        }
        Ok(())
    }

    /// Descending grid values.
    pub fn values(&self) -> Vec<f64> {
        grid_values(self.max, self.min, self.step)
    }
}

/// Uniform grid of ε values, visited from `max` down to `min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonGrid {
    pub max: f64,
    pub min: f64,
    pub step: f64,
}

impl EpsilonGrid {
    pub fn new(max: f64, min: f64, step: f64) -> Result<Self> {
        let grid = Self { max, min, step };
        grid.validate("epsilon_grid")?;
        Ok(grid)
    }

    pub fn singleton(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, epsilon, 0.01)
    }

    fn validate(&self, field: &str) -> Result<()> {
        validate_grid(self.max, self.min, self.step, field)?;
        if !(self.min > 0.0 && self.max < 1.0) {
            return Err(Error::config(field, "values must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        grid_values(self.max, self.min, self.step)
    }
}

fn validate_grid(max: f64, min: f64, step: f64, field: &str) -> Result<()> {
    if !(max.is_finite() && min.is_finite() && step.is_finite()) {
        return Err(Error::config(field, "bounds and step must be finite"));
    }
    if step <= 0.0 {
        return Err(Error::config(format!("{field}.step"), "must be positive"));
    }
    if max < min {
        return Err(Error::config(format!("{field}.max"), "must not be below min"));
    }
    let count = (max - min) / step;
    if (count - count.round()).abs() > 1e-6 * count.max(1.0) {
        return Err(Error::config(
            format!("{field}.step"),
            "must divide the range into whole steps",
        ));
    }
    Ok(())
}

fn grid_values(max: f64, min: f64, step: f64) -> Vec<f64> {
    let count = ((max - min) / step).round() as usize;
    (0..=count).map(|j| max - j as f64 * step).collect()
}

/// How the lower end of each support interval is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalRule {
    /// `l_k = η_k − α(1/σ + 2π|r̂_k|σ)`, mirroring `h_k`.
    Symmetric,
    /// `l_k` built from the previous peak's frequency and rate. Adjacent
    /// intervals then always overlap, so only one peak ever passes.
    PreviousPeak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub sigma_grid: SigmaGrid,
    /// ε used by the single-threshold search.
    pub epsilon: f64,
    /// ε values scanned by the varying-threshold search.
    pub epsilon_grid: EpsilonGrid,
    /// Peaks below this fraction of the slice maximum are ignored.
    pub gamma1: f64,
    pub renyi_ell: f64,
    /// Half-length of the entropy time window, in samples.
    pub renyi_zeta: usize,
    pub smoothing: Vec<f64>,
    pub interval_rule: IntervalRule,
    /// FFT length; the signal length when absent.
    pub nfft: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            sigma_grid: SigmaGrid {
                max: 0.2,
                min: 0.001,
                step: 0.001,
            },
            epsilon: 0.2,
            epsilon_grid: EpsilonGrid {
                max: 0.8,
                min: 0.2,
                step: 0.01,
            },
            gamma1: 0.3,
            renyi_ell: 2.5,
            renyi_zeta: 4,
            smoothing: vec![0.2; 5],
            interval_rule: IntervalRule::Symmetric,
            nfft: None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.sigma_grid.validate("sigma_grid")?;
        self.epsilon_grid.validate("epsilon_grid")?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config("epsilon", "must lie in (0, 1)"));
        }
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0) {
            return Err(Error::config("gamma1", "must lie in (0, 1)"));
        }
        if !(self.renyi_ell > 1.0 && self.renyi_ell.is_finite()) {
            return Err(Error::config("renyi_ell", "must be greater than 1"));
        }
        if self.smoothing.is_empty() || self.smoothing.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("smoothing", "needs at least one finite tap"));
        }
        if matches!(self.nfft, Some(n) if n < 2) {
            return Err(Error::config("nfft", "must be at least 2"));
        }
        Ok(())
    }

    fn nfft_for(&self, signal: &Signal) -> usize {
        self.nfft.unwrap_or(signal.len())
    }
}

/// Discrete local Rényi entropy of order `ell` over frames
/// `[t−zeta, t+zeta]` and all columns of `mag`. `+∞` when the window is empty.
pub fn renyi_entropy(mag: &Matrix<f64>, t_index: usize, zeta: usize, ell: f64) -> f64 {
    let lo = t_index.saturating_sub(zeta);
    let hi = (t_index + zeta).min(mag.rows().saturating_sub(1));
    let (mut num, mut den) = (0.0, 0.0);
    for n in lo..=hi {
        for &v in mag.row(n) {
            let p = v * v;
            den += p;
            num += p.powf(ell);
        }
    }
    entropy_from_sums(num, den, ell)
}

fn entropy_from_sums(num: f64, den: f64, ell: f64) -> f64 {
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (num / den.powf(ell)).log2() / (1.0 - ell)
}

/// Local entropy at every frame, via per-row sums.
pub fn entropy_track(mag: &Matrix<f64>, zeta: usize, ell: f64) -> Vec<f64> {
    let rows: Vec<(f64, f64)> = (0..mag.rows())
        .into_par_iter()
        .map(|n| {
            mag.row(n).iter().fold((0.0, 0.0), |(num, den), &v| {
                let p = v * v;
                (num + p.powf(ell), den + p)
            })
        })
        .collect();
    (0..rows.len())
        .map(|t| {
            let lo = t.saturating_sub(zeta);
            let hi = (t + zeta).min(rows.len() - 1);
            let (num, den) = rows[lo..=hi]
                .iter()
                .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
            entropy_from_sums(num, den, ell)
        })
        .collect()
}

/// Magnitude of the columns with non-negative frequency.
pub fn nonnegative_magnitude(tf: &TfMatrix) -> (Matrix<f64>, Vec<f64>) {
    let cols = tf.nonnegative_columns();
    let width = cols.len();
    let mut data = Vec::with_capacity(tf.num_times() * width);
    for n in 0..tf.num_times() {
        data.extend(tf.values.row(n)[cols.clone()].iter().map(|z| z.norm()));
    }
    (
        Matrix::from_vec(tf.num_times(), width, data),
        tf.freq_grid[cols].to_vec(),
    )
}

/// Indices of strict local maxima above `gamma1` times the slice maximum.
/// A plateau counts once, at its leftmost bin; the end bins never count.
pub fn extract_peaks(slice: &[f64], gamma1: f64) -> Vec<usize> {
    let peak = slice.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut m = 1;
    while m + 1 < slice.len() {
        if slice[m] > slice[m - 1] {
            let mut end = m;
            while end + 1 < slice.len() && slice[end + 1] == slice[m] {
                end += 1;
            }
            if end + 1 < slice.len() && slice[end + 1] < slice[m] && slice[m] / peak > gamma1 {
                out.push(m);
            }
            m = end + 1;
        } else {
            m += 1;
        }
    }
    out
}

/// Offset in bins of the continuous maximum near bin `i`, from a parabola
/// through the log-magnitudes of `i` and its neighbours. Exact for a
/// Gaussian peak; zero at the slice ends, on flat tops or zero neighbours.
pub fn refine_peak(slice: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= slice.len() {
        return 0.0;
    }
    let (l, c, r) = (slice[i - 1], slice[i], slice[i + 1]);
    if !(l > 0.0 && c > 0.0 && r > 0.0) {
        return 0.0;
    }
    let (l, c, r) = (l.ln(), c.ln(), r.ln());
    let curve = l - 2.0 * c + r;
    if !(curve < 0.0) {
        return 0.0;
    }
    (0.5 * (l - r) / curve).clamp(-0.5, 0.5)
}

fn bin_step(freqs: &[f64]) -> f64 {
    if freqs.len() > 1 {
        freqs[1] - freqs[0]
    } else {
        1.0
    }
}

/// Refined frequencies of the peak bins of `slice`.
pub fn peak_frequencies(slice: &[f64], freqs: &[f64], peaks: &[usize]) -> Vec<f64> {
    let step = bin_step(freqs);
    peaks.iter().map(|&p| freqs[p] + step * refine_peak(slice, p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpFit {
    /// Hz per second.
    pub rate: f64,
    /// Set when fewer than three frames were available for the fit.
    pub degenerate: bool,
}

/// Slope of the local ridge through `(t, η_k)`.
///
/// Over frames within `2πασ` of `t`, the ridge is the argmax of `|V|`
/// within `α/σ` Hz of `η_k` (leftmost on ties), refined with
/// [`refine_peak`]. The line is anchored at `(t, η_k)` and its slope
/// fitted by least squares.
pub fn estimate_chirp_rate(
    mag: &Matrix<f64>,
    freqs: &[f64],
    sample_rate: f64,
    t_index: usize,
    peak_col: usize,
    sigma: f64,
    alpha: f64,
) -> ChirpFit {
    let half = radius_samples(2.0 * PI * alpha * sigma, sample_rate);
    let step = bin_step(freqs);
    let band = ((alpha / sigma) / step + 1e-9).floor() as usize;
    fit_ridge(mag, freqs, sample_rate, t_index, peak_col, half, band)
}

fn fit_ridge(
    mag: &Matrix<f64>,
    freqs: &[f64],
    sample_rate: f64,
    t_index: usize,
    peak_col: usize,
    half: usize,
    band: usize,
) -> ChirpFit {
    let lo = t_index.saturating_sub(half);
    let hi = (t_index + half).min(mag.rows() - 1);
    if hi - lo + 1 < 3 {
        return ChirpFit {
            rate: 0.0,
            degenerate: true,
        };
    }
    let c_lo = peak_col.saturating_sub(band);
    let c_hi = (peak_col + band).min(mag.cols() - 1);
    let step = bin_step(freqs);
    let center = freqs[peak_col] + step * refine_peak(mag.row(t_index), peak_col);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for n in lo..=hi {
        let row = &mag.row(n)[c_lo..=c_hi];
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        let dt = (n as f64 - t_index as f64) / sample_rate;
        let col = c_lo + best;
        let ridge = freqs[col] + step * refine_peak(mag.row(n), col);
        sxy += dt * (ridge - center);
        sxx += dt * dt;
    }
    ChirpFit {
        rate: sxy / sxx,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub peak: f64,
    pub rate: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SupportIntervals {
    pub intervals: Vec<Interval>,
}

impl SupportIntervals {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// `h_k ≤ l_{k+1}` for every adjacent pair.
    pub fn non_overlapping(&self) -> bool {
        self.intervals.windows(2).all(|w| w[0].high <= w[1].low)
    }
}

pub fn support_intervals(
    peaks: &[f64],
    rates: &[f64],
    sigma: f64,
    alpha: f64,
    rule: IntervalRule,
) -> SupportIntervals {
    let half = |k: usize| alpha * (1.0 / sigma + 2.0 * PI * rates[k].abs() * sigma);
    let intervals = (0..peaks.len())
        .map(|k| {
            let low = match rule {
                IntervalRule::PreviousPeak if k > 0 => peaks[k - 1] - half(k - 1),
                _ => peaks[k] - half(k),
            };
            Interval {
                peak: peaks[k],
                rate: rates[k],
                low,
                high: peaks[k] + half(k),
            }
        })
        .collect();
    SupportIntervals { intervals }
}

/// Peaks, chirp rates and support intervals of one STFT slice.
pub fn analyze_slice(
    mag: &Matrix<f64>,
    freqs: &[f64],
    sample_rate: f64,
    t_index: usize,
    sigma: f64,
    alpha: f64,
    config: &EstimatorConfig,
) -> SupportIntervals {
    let peaks = extract_peaks(mag.row(t_index), config.gamma1);
    let rates: Vec<f64> = peaks
        .iter()
        .map(|&p| estimate_chirp_rate(mag, freqs, sample_rate, t_index, p, sigma, alpha).rate)
        .collect();
    let hz = peak_frequencies(mag.row(t_index), freqs, &peaks);
    support_intervals(&hz, &rates, sigma, alpha, config.interval_rule)
}

/// Convolve with `taps`, reflecting the track at both ends.
pub fn smooth_track(track: &[f64], taps: &[f64]) -> Vec<f64> {
    let n = track.len();
    if n == 0 || taps.is_empty() {
        return track.to_vec();
    }
    let left = (taps.len() - 1) / 2;
    let reflect = |i: isize| -> usize {
        if n == 1 {
            return 0;
        }
        let period = 2 * (n as isize - 1);
        let r = i.rem_euclid(period);
        if r < n as isize {
            r as usize
        } else {
            (period - r) as usize
        }
    };
    (0..n)
        .map(|i| {
            taps.iter()
                .enumerate()
                .map(|(k, w)| {
                    // taps[0] weighs the latest sample, as in a causal filter
                    let idx = i as isize + left as isize - k as isize;
                    w * track[reflect(idx)]
                })
                .sum()
        })
        .collect()
}

/// Result of a width search.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaEstimate {
    /// Width of sharpest local entropy per frame.
    pub sigma_u: Vec<f64>,
    /// Smallest accepted width per frame, before smoothing.
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
}

impl SigmaEstimate {
    pub fn param(&self, sample_rate: f64) -> Result<TimeVaryingParam> {
        TimeVaryingParam::new(self.smoothed.clone(), sample_rate)
    }
}

/// Grid values whose window has at least one tap on each side.
fn resolvable_grid(grid: &SigmaGrid, sample_rate: f64, epsilon: f64) -> Result<Vec<f64>> {
    let all = grid.values();
    let kept: Vec<f64> = all
        .iter()
        .copied()
        .filter(|&s| {
            WindowSpec::new(s, epsilon)
                .map(|w| w.radius_samples(sample_rate) >= 1)
                .unwrap_or(false)
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::Resolution(format!(
            "no grid width is resolvable at {sample_rate} Hz"
        )));
    }
    if kept.len() < all.len() {
        warn!(
            "dropping {} grid widths too narrow for {sample_rate} Hz",
            all.len() - kept.len()
        );
    }
    Ok(kept)
}

struct Plane {
    mag: Matrix<f64>,
    freqs: Vec<f64>,
}

fn stft_plane(signal: &Signal, sigma: f64, epsilon: f64, nfft: usize) -> Result<Plane> {
    let band = Band::for_signal(signal);
    let track = vec![sigma; signal.len()];
    let values = transform_frames(
        signal,
        &track,
        &[WindowKind::G],
        epsilon,
        nfft,
        band,
        0..signal.len(),
    )?
    .remove(0);
    let tf = TfMatrix {
        values,
        time_grid: signal.times(),
        freq_grid: band.freq_grid(nfft, signal.sample_rate()),
        sigma: TimeVaryingParam::constant(sigma, signal.len())?,
        kind: WindowKind::G,
        band,
        sample_rate: signal.sample_rate(),
        nfft,
    };
    let (mag, freqs) = nonnegative_magnitude(&tf);
    Ok(Plane { mag, freqs })
}

/// Per-frame argmin of `score(σ)` over `grid`; the first (widest) wins ties.
fn argmin_over_grid(
    grid: &[f64],
    len: usize,
    mut score: impl FnMut(f64) -> Result<Vec<f64>>,
) -> Result<Vec<usize>> {
    let mut best = vec![(f64::INFINITY, 0usize); len];
    for (j, &s) in grid.iter().enumerate() {
        let e = score(s)?;
        for (b, v) in best.iter_mut().zip(e) {
            if v < b.0 {
                *b = (v, j);
            }
        }
    }
    Ok(best.into_iter().map(|(_, j)| j).collect())
}

fn sigma_u_indices(signal: &Signal, config: &EstimatorConfig, grid: &[f64], epsilon: f64) -> Result<Vec<usize>> {
    let nfft = config.nfft_for(signal);
    argmin_over_grid(grid, signal.len(), |s| {
        let plane = stft_plane(signal, s, epsilon, nfft)?;
        Ok(entropy_track(&plane.mag, config.renyi_zeta, config.renyi_ell))
    })
}

/// Width of sharpest local STFT entropy at every frame.
pub fn sigma_u_track(signal: &Signal, config: &EstimatorConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let grid = resolvable_grid(&config.sigma_grid, signal.sample_rate(), config.epsilon)?;
    Ok(sigma_u_indices(signal, config, &grid, config.epsilon)?
        .into_iter()
        .map(|j| grid[j])
        .collect())
}

pub fn sigma_u(signal: &Signal, t_index: usize, config: &EstimatorConfig) -> Result<f64> {
    if t_index >= signal.len() {
        return Err(Error::Range(format!("frame {t_index} is past the signal end")));
    }
    Ok(sigma_u_track(signal, config)?[t_index])
}

#[derive(Debug, Clone, Copy)]
enum Search {
    Waiting(usize),
    Active { count: usize, z: usize },
    Done(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Verdict {
    Reject,
    /// Accept this width but stop shrinking.
    Accept,
    /// Accept this width and try the next one.
    Continue,
}

/// Judge one slice. The last ε decides acceptance; the others must also
/// pass for the search to continue.
fn judge(
    plane: &Plane,
    sample_rate: f64,
    t: usize,
    sigma: f64,
    alphas: &[f64],
    expected: Option<usize>,
    config: &EstimatorConfig,
) -> (usize, Verdict) {
    let peaks = extract_peaks(plane.mag.row(t), config.gamma1);
    let count = peaks.len();
    if count == 0 || expected.is_some_and(|m| m != count) {
        return (count, Verdict::Reject);
    }
    let step = bin_step(&plane.freqs);
    let hz = peak_frequencies(plane.mag.row(t), &plane.freqs, &peaks);
    // fits depend on α only through the rounded window and band sizes
    let mut cache: Vec<((usize, usize), Vec<f64>)> = Vec::new();
    let mut passes = |alpha: f64| -> bool {
        let half = radius_samples(2.0 * PI * alpha * sigma, sample_rate);
        let band = ((alpha / sigma) / step + 1e-9).floor() as usize;
        let rates = match cache.iter().find(|(key, _)| *key == (half, band)) {
            Some((_, r)) => r.clone(),
            None => {
                let r: Vec<f64> = peaks
                    .iter()
                    .map(|&p| fit_ridge(&plane.mag, &plane.freqs, sample_rate, t, p, half, band).rate)
                    .collect();
                cache.push(((half, band), r.clone()));
                r
            }
        };
        support_intervals(&hz, &rates, sigma, alpha, config.interval_rule).non_overlapping()
    };
    let (&last, rest) = alphas.split_last().expect("ε list is never empty");
    if !passes(last) {
        return (count, Verdict::Reject);
    }
    if rest.iter().all(|&a| passes(a)) {
        (count, Verdict::Continue)
    } else {
        (count, Verdict::Accept)
    }
}

/// Shared search. `epsilons` is descending; a single value gives the
/// fixed-threshold search.
fn search(signal: &Signal, config: &EstimatorConfig, epsilons: &[f64]) -> Result<SigmaEstimate> {
    config.validate()?;
    let fs = signal.sample_rate();
    let stft_eps = *epsilons.last().expect("ε list is never empty");
    let grid = resolvable_grid(&config.sigma_grid, fs, stft_eps)?;
    let alphas = epsilons
        .iter()
        .map(|&e| alpha_from_epsilon(e))
        .collect::<Result<Vec<_>>>()?;
    let nfft = config.nfft_for(signal);

    let start = sigma_u_indices(signal, config, &grid, stft_eps)?;
    let mut states: Vec<Search> = start.iter().map(|&j| Search::Waiting(j)).collect();
    let first = start.iter().copied().min().unwrap_or(0);
    for (j, &s) in grid.iter().enumerate().skip(first) {
        if states.iter().all(|st| matches!(st, Search::Done(_))) {
            break;
        }
        let plane = stft_plane(signal, s, stft_eps, nfft)?;
        states.par_iter_mut().enumerate().for_each(|(t, st)| {
            *st = match *st {
                Search::Waiting(ju) if ju == j => {
                    match judge(&plane, fs, t, s, &alphas, None, config) {
                        (count, Verdict::Continue) => Search::Active { count, z: j },
                        _ => Search::Done(j),
                    }
                }
                Search::Active { count, z } => {
                    match judge(&plane, fs, t, s, &alphas, Some(count), config).1 {
                        Verdict::Continue => Search::Active { count, z: j },
                        Verdict::Accept => Search::Done(j),
                        Verdict::Reject => Search::Done(z),
                    }
                }
                other => other,
            };
        });
        debug!(
            "σ = {s:.4}: {} frames still shrinking",
            states.iter().filter(|st| matches!(st, Search::Active { .. })).count()
        );
    }
    let raw: Vec<f64> = states
        .iter()
        .map(|st| match *st {
            Search::Waiting(j) | Search::Done(j) | Search::Active { z: j, .. } => grid[j],
        })
        .collect();
    Ok(SigmaEstimate {
        sigma_u: start.iter().map(|&j| grid[j]).collect(),
        smoothed: smooth_track(&raw, &config.smoothing),
        raw,
    })
}

/// Fixed-threshold search at `config.epsilon`.
pub fn algorithm1(signal: &Signal, config: &EstimatorConfig) -> Result<SigmaEstimate> {
    search(signal, config, &[config.epsilon])
}

/// Varying-threshold search over `config.epsilon_grid`.
pub fn algorithm2(signal: &Signal, config: &EstimatorConfig) -> Result<SigmaEstimate> {
    config.validate()?;
    search(signal, config, &config.epsilon_grid.values())
}

/// Per-frame width minimising the local entropy of the constant-width
/// squeezed transform.
pub fn sigma_renyi_sst(
    signal: &Signal,
    config: &EstimatorConfig,
    variant: SstVariant,
) -> Result<Vec<f64>> {
    if !variant.requires_constant_sigma() {
        return Err(Error::config(
            "variant",
            format!("entropy-optimal widths use a constant-width transform, got {variant}"),
        ));
    }
    config.validate()?;
    let grid = resolvable_grid(&config.sigma_grid, signal.sample_rate(), config.epsilon)?;
    let nfft = config.nfft_for(signal);
    let band = Band::for_signal(signal);
    let best = argmin_over_grid(&grid, signal.len(), |s| {
        let sigma = TimeVaryingParam::constant(s, signal.len())?;
        let set = transform_set(signal, &sigma, config.epsilon, nfft, band)?;
        let sst = squeeze_set(&set, variant, DEFAULT_THRESHOLD)?;
        let (mag, _) = nonnegative_magnitude(&sst.energy);
        Ok(entropy_track(&mag, config.renyi_zeta, config.renyi_ell))
    })?;
    Ok(best.into_iter().map(|j| grid[j]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth, Builtin, ComponentSpec};
    use proptest::prelude::*;

    #[test]
    fn grid_values_descend() {
        let g = SigmaGrid::new(0.2, 0.001, 0.001).unwrap();
        let v = g.values();
        assert_eq!(v.len(), 200);
        assert!((v[199] - 0.001).abs() < 1e-12);
        assert!(SigmaGrid::new(0.2, 0.001, 0.003).is_err());
        assert!(SigmaGrid::new(0.1, 0.2, 0.01).is_err());
        assert_eq!(SigmaGrid::singleton(0.05).unwrap().values(), vec![0.05]);
        assert_eq!(EpsilonGrid::new(0.8, 0.2, 0.01).unwrap().values().len(), 61);
    }

    #[test]
    fn config_validation_names_the_field() {
        let mut c = EstimatorConfig::default();
        c.gamma1 = 1.5;
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "gamma1"),
            other => panic!("{other:?}"),
        }
        let mut c = EstimatorConfig::default();
        c.renyi_ell = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn entropy_examples() {
        let mut m = Matrix::filled(3, 4, 0.0);
        *m.get_mut(1, 2) = 5.0;
        assert_eq!(renyi_entropy(&m, 1, 1, 2.5), 0.0);
        let u = Matrix::filled(1, 8, 0.3);
        assert!((renyi_entropy(&u, 0, 0, 2.5) - 3.0).abs() < 1e-12);
        let z = Matrix::filled(2, 2, 0.0);
        assert_eq!(renyi_entropy(&z, 0, 4, 2.5), f64::INFINITY);
    }

    #[test]
    fn entropy_track_matches_direct_evaluation() {
        let m = Matrix::from_vec(6, 3, (0..18).map(|i| ((i * 7) % 5) as f64).collect());
        let track = entropy_track(&m, 2, 2.5);
        for t in 0..6 {
            assert!((track[t] - renyi_entropy(&m, t, 2, 2.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_examples() {
        let bump = |c: f64, h: f64, x: f64| h * (-(x - c) * (x - c) / 8.0).exp();
        let s: Vec<f64> = (0..60).map(|i| bump(15.0, 1.0, i as f64) + bump(45.0, 0.2, i as f64)).collect();
        assert_eq!(extract_peaks(&s, 0.3), vec![15]);
        assert_eq!(extract_peaks(&s, 0.1), vec![15, 45]);
        assert_eq!(extract_peaks(&[0.0, 1.0, 2.0, 2.0, 2.0, 1.0], 0.3), vec![2]);
        assert!(extract_peaks(&[0.0; 5], 0.3).is_empty());
        // rising into the last bin is not a peak
        assert!(extract_peaks(&[0.0, 1.0, 2.0], 0.3).is_empty());
    }

    #[test]
    fn refined_peak_matches_sampled_gaussian() {
        for centre in [10.0, 10.2, 10.49, 9.7] {
            let slice: Vec<f64> = (0..20)
                .map(|i| (-(i as f64 - centre) * (i as f64 - centre) / 6.0).exp())
                .collect();
            let i = centre.round() as usize;
            assert!((i as f64 + refine_peak(&slice, i) - centre).abs() < 1e-12);
        }
        assert_eq!(refine_peak(&[1.0, 1.0, 1.0], 1), 0.0);
        assert_eq!(refine_peak(&[0.0, 1.0, 0.5], 1), 0.0);
        assert_eq!(refine_peak(&[2.0, 1.0], 0), 0.0);
    }

    #[test]
    fn chirp_rate_of_clean_lfm() {
        let fs = 256.0;
        let s = synth(&[ComponentSpec::lfm(1.0, 34.0, 64.0)], fs, 1.0).unwrap();
        let sigma = 0.05;
        let plane = stft_plane(&s, sigma, 0.2, 256).unwrap();
        let alpha = alpha_from_epsilon(0.2).unwrap();
        let t = 128;
        let peaks = extract_peaks(plane.mag.row(t), 0.3);
        assert_eq!(peaks.len(), 1);
        let fit = estimate_chirp_rate(&plane.mag, &plane.freqs, fs, t, peaks[0], sigma, alpha);
        assert!(!fit.degenerate);
        // one bin over the half window is the slope quantum
        let half = radius_samples(2.0 * PI * alpha * sigma, fs) as f64 / fs;
        assert!((fit.rate - 64.0).abs() <= 1.0 / half, "{}", fit.rate);
    }

    #[test]
    fn chirp_rate_of_tone_and_flat_slices() {
        let s = synth(&[ComponentSpec::lfm(1.0, 40.0, 0.0)], 256.0, 1.0).unwrap();
        let plane = stft_plane(&s, 0.05, 0.2, 256).unwrap();
        let fit = estimate_chirp_rate(&plane.mag, &plane.freqs, 256.0, 128, 40, 0.05, 0.2855);
        assert!(fit.rate.abs() < 1e-9, "{}", fit.rate);
        let flat = Matrix::filled(21, 30, 1.0);
        let freqs: Vec<f64> = (0..30).map(f64::from).collect();
        let fit = estimate_chirp_rate(&flat, &freqs, 100.0, 10, 15, 0.02, 0.2855);
        assert!(fit.rate.abs() < 1e-9);
        let short = estimate_chirp_rate(&flat, &freqs, 100.0, 10, 15, 0.001, 0.2855);
        assert!(short.degenerate && short.rate == 0.0);
    }

    #[test]
    fn interval_examples() {
        let s = support_intervals(&[50.0], &[0.0], 0.1, 0.2855, IntervalRule::Symmetric);
        assert!((s.intervals[0].low - (50.0 - 2.855)).abs() < 1e-12);
        assert!((s.intervals[0].high - (50.0 + 2.855)).abs() < 1e-12);
        assert!(s.non_overlapping());
        // at the separating width with the true rates the intervals just touch
        let alpha = 0.2855;
        let rep = crate::separability::sigma2(&[12.0, 34.0], &[50.0, 64.0], alpha).unwrap();
        let s2 = rep.sigma2.unwrap();
        let iv = support_intervals(&[12.0, 34.0], &[50.0, 64.0], s2, alpha, IntervalRule::Symmetric);
        assert!((iv.intervals[0].high - iv.intervals[1].low).abs() < 1e-9);
        let printed = support_intervals(&[12.0, 34.0], &[50.0, 64.0], 0.01, alpha, IntervalRule::PreviousPeak);
        assert!(!printed.non_overlapping());
    }

    #[test]
    fn smoothing_examples() {
        let c = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(smooth_track(&c, &[1.0]), c.to_vec());
        let s = smooth_track(&c, &[0.2; 5]);
        // reflect padding: [3 2 | 1 2 3 4 5 6 | 5 4]
        assert!((s[0] - (3.0 + 2.0 + 1.0 + 2.0 + 3.0) / 5.0).abs() < 1e-12);
        assert!((s[2] - 3.0).abs() < 1e-12);
        assert!((s[5] - (4.0 + 5.0 + 6.0 + 5.0 + 4.0) / 5.0).abs() < 1e-12);
        assert!((smooth_track(&[7.0], &[0.2; 5])[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_u_of_chirp_and_tone() {
        let mut cfg = EstimatorConfig::default();
        cfg.sigma_grid = SigmaGrid::new(0.12, 0.005, 0.005).unwrap();
        let chirp = synth(&[ComponentSpec::lfm(1.0, 34.0, 64.0)], 256.0, 1.0).unwrap();
        let su = sigma_u(&chirp, 128, &cfg).unwrap();
        let optimum = 1.0 / (2.0 * PI * 64.0f64).sqrt();
        assert!((su - optimum).abs() <= 2.0 * 0.005, "{su} vs {optimum}");
        let tone = synth(&[ComponentSpec::lfm(1.0, 60.0, 0.0)], 256.0, 1.0).unwrap();
        assert!((sigma_u(&tone, 128, &cfg).unwrap() - 0.12).abs() < 1e-12);
    }

    #[test]
    fn single_tone_shrinks_to_grid_floor() {
        let mut cfg = EstimatorConfig::default();
        cfg.sigma_grid = SigmaGrid::new(0.1, 0.01, 0.01).unwrap();
        cfg.smoothing = vec![1.0];
        let tone = synth(&[ComponentSpec::lfm(1.0, 60.0, 0.0)], 256.0, 1.0).unwrap();
        let est = algorithm1(&tone, &cfg).unwrap();
        for t in 40..216 {
            assert!((est.raw[t] - 0.01).abs() < 1e-12, "t={t} {}", est.raw[t]);
        }
        assert_eq!(est.raw, est.smoothed);
    }

    #[test]
    fn single_epsilon_grid_matches_fixed_threshold_search() {
        let mut cfg = EstimatorConfig::default();
        cfg.sigma_grid = SigmaGrid::new(0.1, 0.005, 0.005).unwrap();
        cfg.epsilon_grid = EpsilonGrid::singleton(0.2).unwrap();
        let s = Builtin::TwoChirp.signal();
        let a = algorithm1(&s, &cfg).unwrap();
        let b = algorithm2(&s, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimate_never_exceeds_sigma_u() {
        let mut cfg = EstimatorConfig::default();
        cfg.sigma_grid = SigmaGrid::new(0.1, 0.005, 0.005).unwrap();
        let s = Builtin::TwoChirp.signal();
        let est = algorithm1(&s, &cfg).unwrap();
        for (raw, u) in est.raw.iter().zip(&est.sigma_u) {
            assert!(raw <= u && *raw >= 0.005 - 1e-12);
        }
        assert_eq!(est, algorithm1(&s, &cfg).unwrap());
    }

    #[test]
    fn renyi_sst_singleton_and_variant_check() {
        let mut cfg = EstimatorConfig::default();
        cfg.sigma_grid = SigmaGrid::singleton(0.04).unwrap();
        let s = Builtin::TwoChirp.signal();
        let out = sigma_renyi_sst(&s, &cfg, SstVariant::Fsst).unwrap();
        assert!(out.iter().all(|&v| v == 0.04));
        assert!(sigma_renyi_sst(&s, &cfg, SstVariant::AdpFsst2).is_err());
    }

    #[test]
    fn renyi_sst_is_scale_invariant() {
        let mut cfg = EstimatorConfig::default();
        cfg.sigma_grid = SigmaGrid::new(0.08, 0.02, 0.01).unwrap();
        let s = Builtin::TwoChirp.signal();
        let scaled = Signal::from_real(s.real_part().iter().map(|x| 3.5 * x).collect(), 256.0, 0.0).unwrap();
        assert_eq!(
            sigma_renyi_sst(&s, &cfg, SstVariant::Fsst2).unwrap(),
            sigma_renyi_sst(&scaled, &cfg, SstVariant::Fsst2).unwrap()
        );
    }

    proptest! {
        #[test]
        fn entropy_is_scale_invariant(
            vals in proptest::collection::vec(0.0f64..10.0, 12),
            k in 0.01f64..100.0,
        ) {
            let m = Matrix::from_vec(3, 4, vals.clone());
            let s = Matrix::from_vec(3, 4, vals.iter().map(|v| v * k).collect());
            let (a, b) = (renyi_entropy(&m, 1, 1, 2.5), renyi_entropy(&s, 1, 1, 2.5));
            prop_assert!(a == b || (a - b).abs() < 1e-9);
        }

        #[test]
        fn peaks_are_sorted_local_maxima(vals in proptest::collection::vec(0.0f64..1.0, 3..40)) {
            let peaks = extract_peaks(&vals, 0.3);
            let max = vals.iter().copied().fold(0.0, f64::max);
            for w in peaks.windows(2) { prop_assert!(w[0] < w[1]); }
            for &p in &peaks {
                prop_assert!(p > 0 && p + 1 < vals.len());
                prop_assert!(vals[p] > vals[p - 1] && vals[p] >= vals[p + 1]);
                prop_assert!(vals[p] / max > 0.3);
            }
        }

        #[test]
        fn intervals_contain_their_peaks(
            f0 in 0.0f64..50.0,
            gaps in proptest::collection::vec(0.5f64..30.0, 0..4),
            rates in proptest::collection::vec(-100.0f64..100.0, 5),
            sigma in 0.001f64..0.2,
        ) {
            let mut peaks = vec![f0];
            for g in gaps { peaks.push(peaks.last().unwrap() + g); }
            for rule in [IntervalRule::Symmetric, IntervalRule::PreviousPeak] {
                let iv = support_intervals(&peaks, &rates[..peaks.len()], sigma, 0.2855, rule);
                for i in &iv.intervals {
                    prop_assert!(i.low <= i.peak && i.peak <= i.high);
                }
            }
        }

        #[test]
        fn smoothing_preserves_constants(c in 0.001f64..1.0, n in 1usize..30) {
            let out = smooth_track(&vec![c; n], &[0.2; 5]);
            for v in out { prop_assert!((v - c).abs() < 1e-12); }
        }
    }
}
