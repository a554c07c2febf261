//! Instantaneous-frequency estimates ("phase transforms") on the TF plane.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stft::TfMatrix;
use crate::window::WindowKind;

/// Cells with `|Ṽ|` at or below this fraction of the global maximum are masked.
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

/// Below this `|∂_η(Ṽ^{τg}/Ṽ)|` (in 1/Hz) the second-order estimate falls
/// back to the first-order one.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// IF estimate per TF cell, in Hz, with a validity mask.
#[derive(Debug, Clone)]
pub struct PhaseField {
    pub omega: Matrix<f64>,
    pub valid: Matrix<bool>,
}

impl PhaseField {
    pub fn valid_count(&self) -> usize {
        self.valid.as_slice().iter().filter(|&&v| v).count()
    }

    /// `omega` at a cell, or `None` if masked.
    pub fn at(&self, n: usize, m: usize) -> Option<f64> {
        self.valid.get(n, m).then(|| *self.omega.get(n, m))
    }
}

fn check_grid(reference: &TfMatrix, other: &TfMatrix, what: &str) -> Result<()> {
    if !reference.same_grid(other) {
        return Err(Error::domain(format!("{what} is not on the transform's grid")));
    }
    Ok(())
}

fn check_kind(tf: &TfMatrix, kind: WindowKind, what: &str) -> Result<()> {
    if tf.kind != kind {
        return Err(Error::domain(format!(
            "{what} must use the {} kernel, got {}",
            kind.name(),
            tf.kind.name()
        )));
    }
    Ok(())
}

fn validity(v: &TfMatrix, threshold: f64) -> Matrix<bool> {
    let peak = v
        .values
        .as_slice()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let cut = threshold * peak;
    v.values.map(|z| peak > 0.0 && z.norm() > cut && z.norm().is_finite())
}

/// `Re(z / i2π)`.
#[inline]
fn hz(z: Complex64) -> f64 {
    z.im / (2.0 * PI)
}

/// `Re{∂_tṼ/(i2πṼ)}`.
pub fn omega_conventional(v: &TfMatrix, dv_dt: &TfMatrix, threshold: f64) -> Result<PhaseField> {
    check_grid(v, dv_dt, "time derivative")?;
    first_order(v, dv_dt, None, threshold)
}

/// `Re{∂_tṼ/(i2πṼ)} + (σ'/σ)·Re{Ṽ^{τg'}/(i2πṼ)}`.
pub fn omega_adaptive(
    v: &TfMatrix,
    v_tau_gprime: &TfMatrix,
    dv_dt: &TfMatrix,
    threshold: f64,
) -> Result<PhaseField> {
    check_grid(v, dv_dt, "time derivative")?;
    check_grid(v, v_tau_gprime, "τg' transform")?;
    check_kind(v_tau_gprime, WindowKind::TauGPrime, "τg' transform")?;
    first_order(v, dv_dt, Some(v_tau_gprime), threshold)
}

/// Second-order estimate with a constant window.
pub fn omega_conventional_2nd(
    v: &TfMatrix,
    v_tau_g: &TfMatrix,
    dv_dt: &TfMatrix,
    threshold: f64,
) -> Result<PhaseField> {
    check_grid(v, dv_dt, "time derivative")?;
    check_grid(v, v_tau_g, "τg transform")?;
    check_kind(v_tau_g, WindowKind::TauG, "τg transform")?;
    second_order(v, v_tau_g, dv_dt, None, threshold)
}

/// Second-order estimate with a time-varying window.
pub fn omega_adaptive_2nd(
    v: &TfMatrix,
    v_tau_g: &TfMatrix,
    v_tau_gprime: &TfMatrix,
    dv_dt: &TfMatrix,
    threshold: f64,
) -> Result<PhaseField> {
    check_grid(v, dv_dt, "time derivative")?;
    check_grid(v, v_tau_g, "τg transform")?;
    check_grid(v, v_tau_gprime, "τg' transform")?;
    check_kind(v_tau_g, WindowKind::TauG, "τg transform")?;
    check_kind(v_tau_gprime, WindowKind::TauGPrime, "τg' transform")?;
    second_order(v, v_tau_g, dv_dt, Some(v_tau_gprime), threshold)
}

/// `∂_tṼ/Ṽ`, plus `(σ'/σ)·Ṽ^{τg'}/Ṽ` when the correction is supplied.
#[inline]
fn log_derivative(
    v: Complex64,
    dv: Complex64,
    correction: Option<(Complex64, f64)>,
) -> Complex64 {
    let mut a = dv / v;
    if let Some((tgp, ratio)) = correction {
        a += tgp / v * ratio;
    }
    a
}

fn first_order(
    v: &TfMatrix,
    dv_dt: &TfMatrix,
    v_tau_gprime: Option<&TfMatrix>,
    threshold: f64,
) -> Result<PhaseField> {
    let valid = validity(v, threshold);
    let cols = v.num_freqs();
    let mut omega = Matrix::filled(v.num_times(), cols, 0.0);
    omega
        .as_mut_slice()
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(n, row)| {
            let ratio = v.sigma.log_rate(n);
            for (m, w) in row.iter_mut().enumerate() {
                if !valid.get(n, m) {
                    continue;
                }
                let corr = v_tau_gprime.map(|t| (*t.values.get(n, m), ratio));
                *w = hz(log_derivative(*v.values.get(n, m), *dv_dt.values.get(n, m), corr));
            }
        });
    Ok(PhaseField { omega, valid })
}

/// Derivative along frequency at `m` using only defined neighbours.
fn freq_derivative(x: &[Option<Complex64>], m: usize, step: f64) -> Option<Complex64> {
    let here = x[m]?;
    let left = m.checked_sub(1).and_then(|i| x[i]);
    let right = x.get(m + 1).copied().flatten();
    match (left, right) {
        (Some(l), Some(r)) => Some((r - l) / (2.0 * step)),
        (None, Some(r)) => Some((r - here) / step),
        (Some(l), None) => Some((here - l) / step),
        (None, None) => None,
    }
}

fn second_order(
    v: &TfMatrix,
    v_tau_g: &TfMatrix,
    dv_dt: &TfMatrix,
    v_tau_gprime: Option<&TfMatrix>,
    threshold: f64,
) -> Result<PhaseField> {
    let valid = validity(v, threshold);
    let cols = v.num_freqs();
    let step = v.freq_step();
    let mut omega = Matrix::filled(v.num_times(), cols, 0.0);
    omega
        .as_mut_slice()
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(n, row)| {
            let ratio = v.sigma.log_rate(n);
            let mut a = vec![None; cols];
            let mut b = vec![None; cols];
            for m in 0..cols {
                if *valid.get(n, m) {
                    let z = *v.values.get(n, m);
                    let corr = v_tau_gprime.map(|t| (*t.values.get(n, m), ratio));
                    a[m] = Some(log_derivative(z, *dv_dt.values.get(n, m), corr));
                    b[m] = Some(v_tau_g.values.get(n, m) / z);
                }
            }
            for (m, w) in row.iter_mut().enumerate() {
                let (Some(am), Some(bm)) = (a[m], b[m]) else {
                    continue;
                };
                let mut est = hz(am);
                if let (Some(da), Some(db)) =
                    (freq_derivative(&a, m, step), freq_derivative(&b, m, step))
                {
                    if db.norm() >= DEGENERACY_TOL {
                        est -= hz(bm * da / db);
                    }
                }
                *w = est;
            }
        });
    Ok(PhaseField { omega, valid })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth_analytic, Amplitude, ComponentSpec, Signal};
    use crate::stft::{transform_set, Band, TimeVaryingParam, TransformSet};

    fn set_for(s: &Signal, sigma: &TimeVaryingParam) -> TransformSet {
        transform_set(s, sigma, 0.2, s.len(), Band::for_signal(s)).unwrap()
    }

    fn tone(c: f64) -> Signal {
        synth_analytic(&[ComponentSpec::lfm(1.0, c, 0.0)], 256.0, 1.0).unwrap()
    }

    fn interior_max_error(field: &PhaseField, truth: impl Fn(usize) -> f64, rows: std::ops::Range<usize>) -> f64 {
        let mut worst: f64 = 0.0;
        for n in rows {
            for m in 0..field.omega.cols() {
                if let Some(w) = field.at(n, m) {
                    worst = worst.max((w - truth(n)).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn tone_frequency_is_recovered() {
        let s = tone(40.0);
        let sigma = TimeVaryingParam::constant(0.05, 256).unwrap();
        let set = set_for(&s, &sigma);
        let f = omega_conventional(&set.v, &set.dv_dt, DEFAULT_THRESHOLD).unwrap();
        assert!(f.valid_count() > 0);
        assert!(interior_max_error(&f, |_| 40.0, 64..192) < 0.5);
    }

    #[test]
    fn adaptive_tone_with_varying_sigma() {
        let s = tone(40.0);
        let sig: Vec<f64> = (0..256).map(|i| 0.03 + 0.02 * (i as f64 / 256.0)).collect();
        let sigma = TimeVaryingParam::new(sig, 256.0).unwrap();
        let set = set_for(&s, &sigma);
        let f = omega_adaptive(&set.v, &set.v_tau_gprime, &set.dv_dt, DEFAULT_THRESHOLD).unwrap();
        assert!(interior_max_error(&f, |_| 40.0, 64..192) < 0.5);
    }

    #[test]
    fn zero_signal_is_fully_masked() {
        let s = Signal::from_real(vec![0.0; 64], 64.0, 0.0).unwrap();
        let sigma = TimeVaryingParam::constant(0.1, 64).unwrap();
        let set = set_for(&s, &sigma);
        let f = omega_adaptive_2nd(&set.v, &set.v_tau_g, &set.v_tau_gprime, &set.dv_dt, DEFAULT_THRESHOLD)
            .unwrap();
        assert_eq!(f.valid_count(), 0);
    }

    #[test]
    fn constant_sigma_reduces_to_conventional() {
        let s = synth_analytic(&[ComponentSpec::lfm(1.0, 34.0, 64.0)], 256.0, 1.0).unwrap();
        let sigma = TimeVaryingParam::constant(0.04, 256).unwrap();
        let set = set_for(&s, &sigma);
        let c1 = omega_conventional(&set.v, &set.dv_dt, DEFAULT_THRESHOLD).unwrap();
        let a1 = omega_adaptive(&set.v, &set.v_tau_gprime, &set.dv_dt, DEFAULT_THRESHOLD).unwrap();
        let c2 = omega_conventional_2nd(&set.v, &set.v_tau_g, &set.dv_dt, DEFAULT_THRESHOLD).unwrap();
        let a2 = omega_adaptive_2nd(&set.v, &set.v_tau_g, &set.v_tau_gprime, &set.dv_dt, DEFAULT_THRESHOLD)
            .unwrap();
        assert_eq!(c1.omega.as_slice(), a1.omega.as_slice());
        assert_eq!(c2.omega.as_slice(), a2.omega.as_slice());
    }

    #[test]
    fn second_order_is_exact_on_chirps() {
        let (c, r) = (12.0, 50.0);
        let s = synth_analytic(&[ComponentSpec::lfm(1.0, c, r)], 256.0, 1.0).unwrap();
        let sig: Vec<f64> = (0..256).map(|i| 0.04 + 0.01 * (i as f64 / 256.0)).collect();
        for sigma in [
            TimeVaryingParam::constant(0.04, 256).unwrap(),
            TimeVaryingParam::new(sig, 256.0).unwrap(),
        ] {
            let set = set_for(&s, &sigma);
            let two = omega_adaptive_2nd(&set.v, &set.v_tau_g, &set.v_tau_gprime, &set.dv_dt, DEFAULT_THRESHOLD)
                .unwrap();
            let one = omega_adaptive(&set.v, &set.v_tau_gprime, &set.dv_dt, DEFAULT_THRESHOLD).unwrap();
            let truth = |n: usize| c + r * n as f64 / 256.0;
            let e2 = interior_max_error(&two, truth, 64..192);
            let e1 = interior_max_error(&one, truth, 64..192);
            assert!(e2 < 1.0, "second order error {e2}");
            assert!(e1 > e2, "first order {e1} should be worse than {e2}");
        }
    }

    #[test]
    fn second_order_handles_gaussian_amplitude() {
        let comp = ComponentSpec::lfm(1.0, 40.0, 30.0).with_amplitude(Amplitude::Exponential {
            scale: 1.0,
            p: 1.0,
            q: -4.0,
        });
        let s = synth_analytic(&[comp], 256.0, 1.0).unwrap();
        let sigma = TimeVaryingParam::constant(0.04, 256).unwrap();
        let set = set_for(&s, &sigma);
        let f = omega_adaptive_2nd(&set.v, &set.v_tau_g, &set.v_tau_gprime, &set.dv_dt, DEFAULT_THRESHOLD)
            .unwrap();
        // window truncation limits accuracy in the faintest cells at the mask edge
        let (mut hit, mut total) = (0, 0);
        for n in 64..192 {
            for m in 0..256 {
                if let Some(w) = f.at(n, m) {
                    total += 1;
                    hit += usize::from((w - 40.0 - 30.0 * n as f64 / 256.0).abs() <= 1.0);
                }
            }
        }
        assert!(hit as f64 >= 0.99 * total as f64, "{hit}/{total}");
    }

    #[test]
    fn unit_phase_factor_leaves_estimates_unchanged() {
        let s = synth_analytic(&[ComponentSpec::lfm(1.0, 30.0, 40.0)], 256.0, 1.0).unwrap();
        let rot = Complex64::from_polar(1.0, 0.7);
        let s2 = Signal::from_complex(s.samples().iter().map(|z| z * rot).collect(), 256.0, 0.0).unwrap();
        let sigma = TimeVaryingParam::new((0..256).map(|i| 0.03 + 1e-4 * i as f64).collect(), 256.0).unwrap();
        let (a, b) = (set_for(&s, &sigma), set_for(&s2, &sigma));
        let fa = omega_adaptive_2nd(&a.v, &a.v_tau_g, &a.v_tau_gprime, &a.dv_dt, DEFAULT_THRESHOLD).unwrap();
        let fb = omega_adaptive_2nd(&b.v, &b.v_tau_g, &b.v_tau_gprime, &b.dv_dt, DEFAULT_THRESHOLD).unwrap();
        // compare away from the noise floor, where cancellation amplifies rounding
        let peak = a.v.values.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (i, (x, y)) in fa.omega.as_slice().iter().zip(fb.omega.as_slice()).enumerate() {
            if a.v.values.as_slice()[i].norm() > 1e-2 * peak {
                assert!((x - y).abs() < 1e-6, "{x} {y}");
            }
        }
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let s = tone(20.0);
        let sigma = TimeVaryingParam::constant(0.05, 256).unwrap();
        let a = set_for(&s, &sigma);
        let b = transform_set(&s, &sigma, 0.2, 128, Band::Full).unwrap();
        assert!(omega_conventional(&a.v, &b.dv_dt, DEFAULT_THRESHOLD).is_err());
        assert!(omega_conventional_2nd(&a.v, &a.v_gprime, &a.dv_dt, DEFAULT_THRESHOLD).is_err());
    }
}
