//! Sampled signals, synthetic multicomponent models and noise injection.
//!
//! A component is `A(t) e^{i2πφ(t)}` restricted to a support interval. Real
//! signals use the cosine convention `A(t) cos(2πφ(t))`; the analytic form is
//! available for oracle tests.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// A uniformly sampled real or complex time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<Complex64>,
    sample_rate: f64,
    t0: f64,
    real: bool,
}

impl Signal {
    pub fn from_real(samples: Vec<f64>, sample_rate: f64, t0: f64) -> Result<Self> {
        let samples = samples.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        Self::build(samples, sample_rate, t0, true)
    }

    pub fn from_complex(samples: Vec<Complex64>, sample_rate: f64, t0: f64) -> Result<Self> {
        Self::build(samples, sample_rate, t0, false)
    }

    fn build(samples: Vec<Complex64>, sample_rate: f64, t0: f64, real: bool) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::domain(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.len() < 2 {
            return Err(Error::domain("a signal needs at least two samples"));
        }
        if !t0.is_finite() {
            return Err(Error::domain("start time must be finite"));
        }
        Ok(Self {
            samples,
            sample_rate,
            t0,
            real,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.re).collect()
    }

    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.sample_rate
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.time(n)).collect()
    }

    /// Mean power `Σ|x|²/N`.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    /// L2 norm of the samples.
    pub fn norm(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        debug_assert_eq!(samples.len(), self.samples.len());
        Self {
            samples,
            ..self.clone()
        }
    }
}

/// Instantaneous amplitude of a component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amplitude {
    Constant(f64),
    /// `scale · e^{p t + q t²/2}`
    Exponential { scale: f64, p: f64, q: f64 },
}

impl Amplitude {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Amplitude::Constant(a) => a,
            Amplitude::Exponential { scale, p, q } => scale * (p * t + 0.5 * q * t * t).exp(),
        }
    }
}

/// `amplitude · cos(2π·frequency·t + offset)`, in cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineTerm {
    pub amplitude: f64,
    pub frequency: f64,
    pub offset: f64,
}

/// Phase in cycles: `Σ poly[i] (t - origin)^i + Σ cosines`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub origin: f64,
    pub poly: Vec<f64>,
    pub cosines: Vec<CosineTerm>,
}

impl Phase {
    /// Linear chirp `c t + r t²/2`.
    pub fn linear_chirp(c: f64, r: f64) -> Self {
        Self {
            origin: 0.0,
            poly: vec![0.0, c, 0.5 * r],
            cosines: Vec::new(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = t - self.origin;
        let poly = self.poly.iter().rev().fold(0.0, |acc, &c| acc * s + c);
        let cos: f64 = self
            .cosines
            .iter()
            .map(|c| c.amplitude * (2.0 * PI * c.frequency * t + c.offset).cos())
            .sum();
        poly + cos
    }

    /// `φ'(t)` in Hz.
    pub fn derivative(&self, t: f64) -> f64 {
        let s = t - self.origin;
        let poly = self
            .poly
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, &c)| acc * s + i as f64 * c);
        let cos: f64 = self
            .cosines
            .iter()
            .map(|c| {
                let w = 2.0 * PI * c.frequency;
                -c.amplitude * w * (w * t + c.offset).sin()
            })
            .sum();
        poly + cos
    }

    /// `φ''(t)` in Hz/s.
    pub fn second_derivative(&self, t: f64) -> f64 {
        let s = t - self.origin;
        let poly = self
            .poly
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (i, &c)| acc * s + (i * (i - 1)) as f64 * c);
        let cos: f64 = self
            .cosines
            .iter()
            .map(|c| {
                let w = 2.0 * PI * c.frequency;
                -c.amplitude * w * w * (w * t + c.offset).cos()
            })
            .sum();
        poly + cos
    }
}

/// One mode `A(t) e^{i2πφ(t)}` active on `[support.0, support.1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub amplitude: Amplitude,
    pub phase: Phase,
    pub support: (f64, f64),
}

const SUPPORT_SLACK: f64 = 1e-9;

impl ComponentSpec {
    /// Constant-amplitude linear chirp with IF `c + r t`, active everywhere.
    pub fn lfm(amplitude: f64, c: f64, r: f64) -> Self {
        Self {
            amplitude: Amplitude::Constant(amplitude),
            phase: Phase::linear_chirp(c, r),
            support: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn with_support(mut self, start: f64, end: f64) -> Self {
        self.support = (start, end);
        self
    }

    pub fn with_amplitude(mut self, amplitude: Amplitude) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.support.0 - SUPPORT_SLACK && t <= self.support.1 + SUPPORT_SLACK
    }

    /// Real sample `A(t) cos(2πφ(t))`, zero off the support.
    pub fn real_value(&self, t: f64) -> f64 {
        if self.is_active(t) {
            self.amplitude.at(t) * (2.0 * PI * self.phase.value(t)).cos()
        } else {
            0.0
        }
    }

    /// Analytic sample `A(t) e^{i2πφ(t)}`, zero off the support.
    pub fn analytic_value(&self, t: f64) -> Complex64 {
        if self.is_active(t) {
            Complex64::from_polar(self.amplitude.at(t), 2.0 * PI * self.phase.value(t))
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    fn check_valid(&self) -> Result<()> {
        if let Amplitude::Constant(a) = self.amplitude {
            if a < 0.0 {
                return Err(Error::domain("component amplitude must be non-negative"));
            }
        }
        if let Amplitude::Exponential { scale, .. } = self.amplitude {
            if scale < 0.0 {
                return Err(Error::domain("component amplitude must be non-negative"));
            }
        }
        if self.support.0 > self.support.1 {
            return Err(Error::domain("component support is empty"));
        }
        Ok(())
    }
}

fn sample_count(sample_rate: f64, duration: f64) -> Result<usize> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::domain("sample rate must be positive"));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::domain("duration must be positive"));
    }
    Ok((duration * sample_rate).round() as usize)
}

/// Real multicomponent signal on `t_n = n/Fs`, `n < round(duration·Fs)`.
pub fn synth(components: &[ComponentSpec], sample_rate: f64, duration: f64) -> Result<Signal> {
    if components.is_empty() {
        return Err(Error::domain("at least one component is required"));
    }
    components.iter().try_for_each(ComponentSpec::check_valid)?;
    let n = sample_count(sample_rate, duration)?;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            components.iter().map(|c| c.real_value(t)).sum()
        })
        .collect();
    Signal::from_real(samples, sample_rate, 0.0)
}

/// Complex (analytic-model) version of [`synth`].
pub fn synth_analytic(
    components: &[ComponentSpec],
    sample_rate: f64,
    duration: f64,
) -> Result<Signal> {
    if components.is_empty() {
        return Err(Error::domain("at least one component is required"));
    }
    components.iter().try_for_each(ComponentSpec::check_valid)?;
    let n = sample_count(sample_rate, duration)?;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            components.iter().map(|c| c.analytic_value(t)).sum()
        })
        .collect();
    Signal::from_complex(samples, sample_rate, 0.0)
}

/// Each component synthesized separately (real convention).
pub fn synth_components(
    components: &[ComponentSpec],
    sample_rate: f64,
    duration: f64,
) -> Result<Vec<Signal>> {
    components
        .iter()
        .map(|c| synth(std::slice::from_ref(c), sample_rate, duration))
        .collect()
}

/// `φ'(t)` of an active component.
pub fn ground_truth_if(spec: &ComponentSpec, t: f64) -> Result<f64> {
    if !spec.is_active(t) {
        return Err(Error::Range(format!(
            "t = {t} lies outside the support [{}, {}]",
            spec.support.0, spec.support.1
        )));
    }
    Ok(spec.phase.derivative(t))
}

/// `φ''(t)` of an active component.
pub fn ground_truth_chirp_rate(spec: &ComponentSpec, t: f64) -> Result<f64> {
    if !spec.is_active(t) {
        return Err(Error::Range(format!(
            "t = {t} lies outside the support [{}, {}]",
            spec.support.0, spec.support.1
        )));
    }
    Ok(spec.phase.second_derivative(t))
}

/// Add white Gaussian noise at the given SNR.
///
/// The noise realization is rescaled so the empirical power ratio equals
/// `snr_db` exactly. Real signals get real noise, complex signals circular
/// complex noise.
pub fn add_noise(signal: &Signal, snr_db: f64, seed: u64) -> Result<Signal> {
    if !snr_db.is_finite() {
        return Err(Error::domain("SNR must be finite"));
    }
    let p_signal = signal.power();
    if p_signal <= 0.0 {
        return Err(Error::domain("cannot set an SNR for a zero-power signal"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Complex64> = (0..signal.len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            if signal.is_real() {
                Complex64::new(re, 0.0)
            } else {
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            }
        })
        .collect();
    let p_noise = noise.iter().map(|z| z.norm_sqr()).sum::<f64>() / noise.len() as f64;
    let target = p_signal / 10f64.powf(snr_db / 10.0);
    let scale = if p_noise > 0.0 { (target / p_noise).sqrt() } else { 0.0 };
    let samples = signal
        .samples()
        .iter()
        .zip(&noise)
        .map(|(x, n)| x + n * scale)
        .collect();
    Ok(signal.with_samples(samples))
}

/// The built-in test signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// `cos(2π(12t + 25t²)) + cos(2π(34t + 32t²))` on `[0, 1]` at 256 Hz.
    TwoChirp,
    /// Three components with different supports on `[0, 1]` at 512 Hz.
    ThreeComponent,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::TwoChirp => "two-chirp",
            Builtin::ThreeComponent => "three-component",
        }
    }

    pub fn sample_rate(self) -> f64 {
        match self {
            Builtin::TwoChirp => 256.0,
            Builtin::ThreeComponent => 512.0,
        }
    }

    pub fn duration(self) -> f64 {
        1.0
    }

    pub fn components(self) -> Vec<ComponentSpec> {
        match self {
            Builtin::TwoChirp => vec![
                ComponentSpec::lfm(1.0, 12.0, 50.0),
                ComponentSpec::lfm(1.0, 34.0, 64.0),
            ],
            Builtin::ThreeComponent => vec![
                // 118π(t-1/2) + 100π(t-1/2)² rad
                ComponentSpec {
                    amplitude: Amplitude::Constant(1.0),
                    phase: Phase {
                        origin: 0.5,
                        poly: vec![0.0, 59.0, 50.0],
                        cosines: Vec::new(),
                    },
                    support: (0.5, 1.0),
                },
                // 94πt + 13cos(4πt - π/2) + 110πt² rad
                ComponentSpec {
                    amplitude: Amplitude::Constant(1.0),
                    phase: Phase {
                        origin: 0.0,
                        poly: vec![0.0, 47.0, 55.0],
                        cosines: vec![CosineTerm {
                            amplitude: 13.0 / (2.0 * PI),
                            frequency: 2.0,
                            offset: -0.5 * PI,
                        }],
                    },
                    support: (0.0, 1.0),
                },
                // 194πt + 112πt² rad
                ComponentSpec {
                    amplitude: Amplitude::Constant(1.0),
                    phase: Phase::linear_chirp(97.0, 112.0),
                    support: (0.0, 0.75),
                },
            ],
        }
    }

    pub fn signal(self) -> Signal {
        synth(&self.components(), self.sample_rate(), self.duration())
            .expect("builtin signals are valid")
    }

    pub fn component_signals(self) -> Vec<Signal> {
        synth_components(&self.components(), self.sample_rate(), self.duration())
            .expect("builtin signals are valid")
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-chirp" => Ok(Builtin::TwoChirp),
            "three-component" => Ok(Builtin::ThreeComponent),
            other => Err(Error::config(
                "signal",
                format!("unknown builtin `{other}` (expected two-chirp or three-component)"),
            )),
        }
    }
}

/// Sorted IFs and chirp rates of the components active at `t`.
pub fn active_ifs_and_rates(components: &[ComponentSpec], t: f64) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = components
        .iter()
        .filter(|c| c.is_active(t))
        .map(|c| (c.phase.derivative(t), c.phase.second_derivative(t)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}
