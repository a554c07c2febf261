//! Synchrosqueezing: move STFT values along frequency to their IF estimate.

use std::fmt;
use std::str::FromStr;

use log::debug;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::phase::{
    omega_adaptive, omega_adaptive_2nd, omega_conventional, omega_conventional_2nd, PhaseField,
};
use crate::signal::Signal;
use crate::stft::{half_band_weight, transform_set, Band, TfMatrix, TimeVaryingParam, TransformSet};
use crate::window::GAUSSIAN_PEAK;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SstVariant {
    /// Constant window, first-order IF estimate.
    Fsst,
    /// Constant window, second-order IF estimate.
    Fsst2,
    /// Time-varying window with the window-aware first-order estimate.
    AdpFsst,
    /// Time-varying window with the window-aware second-order estimate.
    AdpFsst2,
    /// Time-varying window, but the constant-window first-order estimate.
    RegularPtAdp,
    /// Time-varying window, but the constant-window second-order estimate.
    RegularPtAdp2,
}

impl SstVariant {
    pub const ALL: [SstVariant; 6] = [
        SstVariant::Fsst,
        SstVariant::Fsst2,
        SstVariant::AdpFsst,
        SstVariant::AdpFsst2,
        SstVariant::RegularPtAdp,
        SstVariant::RegularPtAdp2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SstVariant::Fsst => "fsst",
            SstVariant::Fsst2 => "fsst2",
            SstVariant::AdpFsst => "adp-fsst",
            SstVariant::AdpFsst2 => "adp-fsst2",
            SstVariant::RegularPtAdp => "regular-pt-adp",
            SstVariant::RegularPtAdp2 => "regular-pt-adp2",
        }
    }

    pub fn requires_constant_sigma(self) -> bool {
        matches!(self, SstVariant::Fsst | SstVariant::Fsst2)
    }

    pub fn is_second_order(self) -> bool {
        matches!(
            self,
            SstVariant::Fsst2 | SstVariant::AdpFsst2 | SstVariant::RegularPtAdp2
        )
    }
}

impl fmt::Display for SstVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SstVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SstVariant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| Error::config("variant", format!("unknown variant `{s}`")))
    }
}

/// A squeezed representation on the same grid as its source transform.
#[derive(Debug, Clone)]
pub struct SstResult {
    /// Squeezed values. Each entry already carries the `Δη` quadrature factor.
    pub energy: TfMatrix,
    pub phase: PhaseField,
    pub variant: SstVariant,
    /// Per-time sum of valid values whose IF estimate fell off the grid.
    pub dropped: Vec<Complex64>,
}

impl SstResult {
    pub fn magnitude(&self) -> Matrix<f64> {
        self.energy.magnitude()
    }
}

/// Accumulate `Ṽ[n,m]·Δη` into the bin nearest `ω[n,m]` for every valid cell.
pub fn squeeze(v: &TfMatrix, phase: &PhaseField, variant: SstVariant) -> Result<SstResult> {
    if phase.omega.shape() != v.values.shape() {
        return Err(Error::domain("phase field does not match the transform grid"));
    }
    let cols = v.num_freqs();
    let step = v.freq_step();
    let f0 = v.freq_grid[0];
    let mut out = Matrix::filled(v.num_times(), cols, Complex64::new(0.0, 0.0));
    let dropped: Vec<Complex64> = out
        .as_mut_slice()
        .par_chunks_mut(cols)
        .enumerate()
        .map(|(n, row)| {
            let mut lost = Complex64::new(0.0, 0.0);
            for m in 0..cols {
                let Some(w) = phase.at(n, m) else { continue };
                let mass = v.values.get(n, m) * step;
                let bin = ((w - f0) / step).round();
                if bin >= 0.0 && (bin as usize) < cols {
                    row[bin as usize] += mass;
                } else {
                    lost += mass;
                }
            }
            lost
        })
        .collect();
    let lost = dropped.iter().filter(|z| z.norm() > 0.0).count();
    if lost > 0 {
        debug!("{variant}: {lost} frames had IF estimates outside the frequency grid");
    }
    Ok(SstResult {
        energy: TfMatrix {
            values: out,
            time_grid: v.time_grid.clone(),
            freq_grid: v.freq_grid.clone(),
            sigma: v.sigma.clone(),
            kind: v.kind,
            band: v.band,
            sample_rate: v.sample_rate,
            nfft: v.nfft,
        },
        phase: phase.clone(),
        variant,
        dropped,
    })
}

/// IF estimate for `variant` from a precomputed transform set.
pub fn phase_field(set: &TransformSet, variant: SstVariant, threshold: f64) -> Result<PhaseField> {
    if variant.requires_constant_sigma() && !set.v.sigma.is_constant() {
        return Err(Error::domain(format!(
            "{variant} needs a constant window width"
        )));
    }
    match variant {
        SstVariant::Fsst | SstVariant::RegularPtAdp => {
            omega_conventional(&set.v, &set.dv_dt, threshold)
        }
        SstVariant::Fsst2 | SstVariant::RegularPtAdp2 => {
            omega_conventional_2nd(&set.v, &set.v_tau_g, &set.dv_dt, threshold)
        }
        SstVariant::AdpFsst => omega_adaptive(&set.v, &set.v_tau_gprime, &set.dv_dt, threshold),
        SstVariant::AdpFsst2 => omega_adaptive_2nd(
            &set.v,
            &set.v_tau_g,
            &set.v_tau_gprime,
            &set.dv_dt,
            threshold,
        ),
    }
}

pub fn squeeze_set(set: &TransformSet, variant: SstVariant, threshold: f64) -> Result<SstResult> {
    let phase = phase_field(set, variant, threshold)?;
    squeeze(&set.v, &phase, variant)
}

/// Transform, estimate the IF and squeeze in one call.
pub fn synchrosqueeze(
    signal: &Signal,
    sigma: &TimeVaryingParam,
    variant: SstVariant,
    epsilon: f64,
    nfft: usize,
    threshold: f64,
) -> Result<SstResult> {
    if variant.requires_constant_sigma() && !sigma.is_constant() {
        return Err(Error::domain(format!(
            "{variant} needs a constant window width"
        )));
    }
    let set = transform_set(signal, sigma, epsilon, nfft, Band::for_signal(signal))?;
    squeeze_set(&set, variant, threshold)
}

/// Recover one component by summing squeezed values within `gamma_bins` of
/// its ridge. Times with no ridge point reconstruct to zero.
pub fn reconstruct_component(
    sst: &SstResult,
    ridge: &[Option<usize>],
    gamma_bins: usize,
    real_input: bool,
) -> Result<Signal> {
    let tf = &sst.energy;
    if ridge.len() != tf.num_times() {
        return Err(Error::domain(format!(
            "ridge has {} points but the transform has {} frames",
            ridge.len(),
            tf.num_times()
        )));
    }
    if let Some(bad) = ridge.iter().flatten().find(|&&m| m >= tf.num_freqs()) {
        return Err(Error::domain(format!("ridge bin {bad} is off the frequency grid")));
    }
    if tf.band == Band::Half && !real_input {
        return Err(Error::domain(
            "a half-band representation can only be inverted for real input",
        ));
    }
    let samples: Vec<Complex64> = ridge
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let Some(center) = *r else {
                return Complex64::new(0.0, 0.0);
            };
            let lo = center.saturating_sub(gamma_bins);
            let hi = (center + gamma_bins).min(tf.num_freqs() - 1);
            let row = tf.values.row(n);
            let scale = tf.sigma.sigma()[n] / GAUSSIAN_PEAK;
            match tf.band {
                Band::Half => {
                    let s: Complex64 =
                        (lo..=hi).map(|m| row[m] * half_band_weight(m, tf.nfft)).sum();
                    Complex64::new(2.0 * scale * s.re, 0.0)
                }
                Band::Full => {
                    let s = row[lo..=hi].iter().sum::<Complex64>() * scale;
                    if real_input {
                        Complex64::new(s.re, 0.0)
                    } else {
                        s
                    }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::DEFAULT_THRESHOLD;
    use crate::signal::{synth_analytic, Builtin, ComponentSpec};
    use crate::stft::reconstruct_full;

    #[test]
    fn variant_names_round_trip() {
        for v in SstVariant::ALL {
            assert_eq!(v.name().parse::<SstVariant>().unwrap(), v);
        }
        assert_eq!("ADP_FSST2".parse::<SstVariant>().unwrap(), SstVariant::AdpFsst2);
        assert!("wsst".parse::<SstVariant>().is_err());
    }

    #[test]
    fn tone_lands_in_one_bin() {
        let s = synth_analytic(&[ComponentSpec::lfm(1.0, 40.0, 0.0)], 256.0, 1.0).unwrap();
        let sigma = TimeVaryingParam::constant(0.05, 256).unwrap();
        let r = synchrosqueeze(&s, &sigma, SstVariant::Fsst, 0.2, 256, DEFAULT_THRESHOLD).unwrap();
        for n in 70..186 {
            let row = r.energy.values.row(n);
            let total: f64 = row.iter().map(|z| z.norm()).sum();
            let at = row[r.energy.freq_grid.iter().position(|&f| f == 40.0).unwrap()].norm();
            assert!(at > 0.999 * total);
        }
    }

    #[test]
    fn constant_window_variants_reject_varying_sigma() {
        let s = Builtin::TwoChirp.signal();
        let sigma = TimeVaryingParam::new((0..256).map(|i| 0.03 + 1e-4 * i as f64).collect(), 256.0)
            .unwrap();
        assert!(synchrosqueeze(&s, &sigma, SstVariant::Fsst2, 0.2, 256, DEFAULT_THRESHOLD).is_err());
        assert!(synchrosqueeze(&s, &sigma, SstVariant::AdpFsst2, 0.2, 256, DEFAULT_THRESHOLD).is_ok());
    }

    #[test]
    fn regular_transform_differs_from_adaptive_when_sigma_varies() {
        let s = Builtin::TwoChirp.signal();
        let sigma = TimeVaryingParam::new((0..256).map(|i| 0.02 + 1e-4 * i as f64).collect(), 256.0)
            .unwrap();
        let set = transform_set(&s, &sigma, 0.2, 256, Band::Half).unwrap();
        let a = phase_field(&set, SstVariant::AdpFsst, DEFAULT_THRESHOLD).unwrap();
        let r = phase_field(&set, SstVariant::RegularPtAdp, DEFAULT_THRESHOLD).unwrap();
        let diff = a
            .omega
            .as_slice()
            .iter()
            .zip(r.omega.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff > 1e-3);
    }

    #[test]
    fn full_ridge_window_matches_full_inversion() {
        let comps = Builtin::TwoChirp.components();
        let s = synth_analytic(&comps, 256.0, 1.0).unwrap();
        let sigma = TimeVaryingParam::constant(0.04, 256).unwrap();
        let set = transform_set(&s, &sigma, 0.2, 256, Band::Full).unwrap();
        // threshold 0 keeps every cell, so squeezing only moves mass
        let r = squeeze_set(&set, SstVariant::Fsst2, 0.0).unwrap();
        let comp = reconstruct_component(&r, &vec![Some(128); 256], 1000, false).unwrap();
        let full = reconstruct_full(&set.v, &sigma, false).unwrap();
        for n in 0..256 {
            let lost = r.dropped[n] * 0.04 / GAUSSIAN_PEAK;
            assert!((comp.samples()[n] + lost - full.samples()[n]).norm() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn zero_energy_reconstructs_to_zero() {
        let s = Signal::from_real(vec![0.0; 64], 64.0, 0.0).unwrap();
        let sigma = TimeVaryingParam::constant(0.1, 64).unwrap();
        let r = synchrosqueeze(&s, &sigma, SstVariant::AdpFsst2, 0.2, 64, DEFAULT_THRESHOLD).unwrap();
        let back = reconstruct_component(&r, &vec![Some(10); 64], 5, true).unwrap();
        assert!(back.real_part().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn off_grid_ridge_is_rejected() {
        let s = Builtin::TwoChirp.signal();
        let sigma = TimeVaryingParam::constant(0.04, 256).unwrap();
        let r = synchrosqueeze(&s, &sigma, SstVariant::Fsst, 0.2, 256, DEFAULT_THRESHOLD).unwrap();
        assert!(reconstruct_component(&r, &vec![Some(500); 256], 3, true).is_err());
        assert!(reconstruct_component(&r, &vec![Some(5); 10], 3, true).is_err());
    }
}
