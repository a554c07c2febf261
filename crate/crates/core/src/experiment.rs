//! End-to-end experiment runner: width selection, squeezing, ridge
//! extraction, reconstruction and a seeded noise sweep over four methods.

use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, SigmaPolicy, SignalSource};
use crate::error::{Error, Result, StageExt};
use crate::estimation::{
    algorithm1, algorithm2, entropy_track, nonnegative_magnitude, sigma_renyi_sst, sigma_u_track,
    smooth_track, EstimatorConfig,
};
use crate::io::{export_tf, read_signal_csv, write_signal_csv, TfFormat, TfTable};
use crate::ridge::{extract_ridges, match_ridges, relative_error, rmse, RidgeSet};
use crate::separability::{oracle_sigma_track, OracleBound};
use crate::signal::{add_noise, ground_truth_if, Builtin, ComponentSpec, Signal};
use crate::sst::{reconstruct_component, squeeze_set, SstResult, SstVariant};
use crate::stft::{transform_set, Band, TfMatrix, TimeVaryingParam};
use crate::window::alpha_from_epsilon;

/// A width track and what it was derived from.
#[derive(Debug, Clone)]
pub struct SigmaSelection {
    pub param: TimeVaryingParam,
    /// Per-frame entropy-optimal STFT width, when the policy computed it.
    pub sigma_u: Option<Vec<f64>>,
    /// Unsmoothed search result, when the policy smooths.
    pub raw: Option<Vec<f64>>,
}

/// Choose the window width for `signal` under `policy`.
///
/// `components` is required by the oracle policies. Entropy-derived tracks
/// are smoothed with the estimator's filter before use.
pub fn select_sigma(
    signal: &Signal,
    policy: SigmaPolicy,
    constant: Option<f64>,
    components: Option<&[ComponentSpec]>,
    estimator: &EstimatorConfig,
) -> Result<SigmaSelection> {
    let fs = signal.sample_rate();
    let smoothed = |raw: Vec<f64>| -> Result<SigmaSelection> {
        Ok(SigmaSelection {
            param: TimeVaryingParam::new(smooth_track(&raw, &estimator.smoothing), fs)?,
            sigma_u: None,
            raw: Some(raw),
        })
    };
    match policy {
        SigmaPolicy::Constant => {
            let s = constant.ok_or_else(|| Error::config("sigma.value", "missing"))?;
            Ok(SigmaSelection {
                param: TimeVaryingParam::constant(s, signal.len())?,
                sigma_u: None,
                raw: None,
            })
        }
        SigmaPolicy::Sigma1 | SigmaPolicy::Sigma2 => {
            let comps = components.ok_or_else(|| {
                Error::config("sigma.policy", format!("{policy} needs known components"))
            })?;
            let bound = if policy == SigmaPolicy::Sigma1 {
                OracleBound::Sinusoidal
            } else {
                OracleBound::Chirp
            };
            let alpha = alpha_from_epsilon(estimator.epsilon)?;
            let track = oracle_sigma_track(comps, &signal.times(), alpha, bound)?;
            Ok(SigmaSelection {
                param: TimeVaryingParam::new(track, fs)?,
                sigma_u: None,
                raw: None,
            })
        }
        SigmaPolicy::SigmaU => smoothed(sigma_u_track(signal, estimator)?),
        SigmaPolicy::SigmaRe => smoothed(sigma_renyi_sst(signal, estimator, SstVariant::Fsst)?),
        SigmaPolicy::SigmaRe2 => smoothed(sigma_renyi_sst(signal, estimator, SstVariant::Fsst2)?),
        SigmaPolicy::SigmaEst | SigmaPolicy::SigmaEst2 => {
            let est = if policy == SigmaPolicy::SigmaEst {
                algorithm1(signal, estimator)?
            } else {
                algorithm2(signal, estimator)?
            };
            Ok(SigmaSelection {
                param: est.param(fs)?,
                sigma_u: Some(est.sigma_u),
                raw: Some(est.raw),
            })
        }
    }
}

/// One row of the method comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Method {
    pub label: &'static str,
    pub variant: SstVariant,
    pub policy: SigmaPolicy,
    pub constant: Option<f64>,
}

/// Second-order adaptive with the varying-threshold width, first- and
/// second-order regular-PT adaptive with entropy-optimal squeezed widths,
/// and conventional second-order with σ = 0.01.
pub const METHODS: [Method; 4] = [
    Method {
        label: "method-1",
        variant: SstVariant::AdpFsst2,
        policy: SigmaPolicy::SigmaEst2,
        constant: None,
    },
    Method {
        label: "method-2",
        variant: SstVariant::RegularPtAdp,
        policy: SigmaPolicy::SigmaRe,
        constant: None,
    },
    Method {
        label: "method-3",
        variant: SstVariant::RegularPtAdp2,
        policy: SigmaPolicy::SigmaRe2,
        constant: None,
    },
    Method {
        label: "method-4",
        variant: SstVariant::Fsst2,
        policy: SigmaPolicy::Constant,
        constant: Some(0.01),
    },
];

/// Settings shared by every squeeze in an experiment.
#[derive(Debug, Clone, Copy)]
struct Pipeline {
    epsilon: f64,
    nfft: Option<usize>,
    threshold: f64,
    gamma_bins: usize,
}

impl Pipeline {
    fn squeeze(&self, signal: &Signal, sigma: &TimeVaryingParam, variant: SstVariant) -> Result<(TfMatrix, SstResult)> {
        let nfft = self.nfft.unwrap_or(signal.len());
        let set = transform_set(signal, sigma, self.epsilon, nfft, Band::for_signal(signal))
            .stage("transform")?;
        let sst = squeeze_set(&set, variant, self.threshold).stage("synchrosqueeze")?;
        Ok((set.v, sst))
    }
}

/// Ridges extracted from `sst` and the components rebuilt around them,
/// ordered to match `truth` when given.
fn separate(
    sst: &SstResult,
    count: usize,
    gamma_bins: usize,
    real_input: bool,
    truth: Option<&[Vec<Option<f64>>]>,
) -> Result<(RidgeSet, Vec<Signal>)> {
    let mut set = extract_ridges(sst, count, gamma_bins).stage("ridge")?;
    let frames = sst.energy.num_times();
    while set.ridges.len() < count {
        set.ridges.push(vec![None; frames]);
    }
    if let Some(refs) = truth {
        let freqs = set.frequencies(&sst.energy.freq_grid);
        let order = match_ridges(&freqs, refs).stage("ridge")?;
        set.ridges = order.iter().map(|&j| set.ridges[j].clone()).collect();
    }
    let recs = set
        .ridges
        .iter()
        .map(|r| reconstruct_component(sst, r, gamma_bins, real_input))
        .collect::<Result<Vec<_>>>()
        .stage("reconstruct")?;
    Ok((set, recs))
}

fn truth_tracks(components: &[ComponentSpec], times: &[f64]) -> Vec<Vec<Option<f64>>> {
    components
        .iter()
        .map(|c| times.iter().map(|&t| ground_truth_if(c, t).ok()).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaReport {
    pub policy: String,
    pub sigma: Vec<f64>,
    pub sigma_u: Option<Vec<f64>>,
    pub raw: Option<Vec<f64>>,
}

/// Per-frame local Rényi entropies. `None` where the window holds no energy.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub stft: Vec<Option<f64>>,
    pub sst: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    /// Median |ridge − true IF| in frequency bins over frames where both exist.
    pub if_error_median_bins: Option<f64>,
    /// Fraction of the component's support where the ridge is within 2 bins.
    pub within_two_bins: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodRow {
    pub label: String,
    pub variant: String,
    pub policy: String,
    /// Mean over runs, one entry per SNR.
    pub rmse: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RmseTable {
    pub snr_db: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub methods: Vec<MethodRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub signal: String,
    pub sample_rate: f64,
    pub num_samples: usize,
    pub variant: String,
    pub times: Vec<f64>,
    pub sigma: SigmaReport,
    pub entropy: EntropyReport,
    pub ridges_found: usize,
    /// Present for builtin signals, in component order.
    pub components: Option<Vec<ComponentReport>>,
    pub rmse_table: Option<RmseTable>,
    pub artifacts: Vec<PathBuf>,
}

fn load_signal(cfg: &ExperimentConfig) -> Result<(String, Signal, Option<Builtin>)> {
    let (name, signal, builtin) = match &cfg.source {
        SignalSource::Builtin(b) => (b.name().to_string(), b.signal(), Some(*b)),
        SignalSource::Csv(p) => (p.display().to_string(), read_signal_csv(p)?, None),
    };
    let signal = match cfg.sample_rate {
        Some(fs) if fs != signal.sample_rate() => {
            if signal.is_real() {
                Signal::from_real(signal.real_part(), fs, signal.t0())?
            } else {
                Signal::from_complex(signal.samples().to_vec(), fs, signal.t0())?
            }
        }
        _ => signal,
    };
    Ok((name, signal, builtin))
}

fn finite_or_none(v: Vec<f64>) -> Vec<Option<f64>> {
    v.into_iter().map(|x| x.is_finite().then_some(x)).collect()
}

fn component_report(
    ridge_hz: &[Option<f64>],
    truth_hz: &[Option<f64>],
    step: f64,
    rel: f64,
) -> ComponentReport {
    let mut errs: Vec<f64> = Vec::new();
    let (mut near, mut support) = (0usize, 0usize);
    for (r, f) in ridge_hz.iter().zip(truth_hz) {
        if let Some(f) = f {
            support += 1;
            if let Some(r) = r {
                let e = (r - f).abs() / step;
                errs.push(e);
                if e <= 2.0 {
                    near += 1;
                }
            }
        }
    }
    errs.sort_by(f64::total_cmp);
    let median = (!errs.is_empty()).then(|| {
        let k = errs.len();
        if k % 2 == 1 {
            errs[k / 2]
        } else {
            0.5 * (errs[k / 2 - 1] + errs[k / 2])
        }
    });
    ComponentReport {
        if_error_median_bins: median,
        within_two_bins: if support == 0 { 0.0 } else { near as f64 / support as f64 },
        relative_error: rel,
    }
}

/// RMSE of one method on one noisy realization.
fn method_rmse(
    method: &Method,
    noisy: &Signal,
    truth: &[Signal],
    refs: &[Vec<Option<f64>>],
    components: &[ComponentSpec],
    estimator: &EstimatorConfig,
    pipeline: &Pipeline,
) -> Result<f64> {
    let sel = select_sigma(noisy, method.policy, method.constant, Some(components), estimator)
        .stage("select-sigma")?;
    let (_, sst) = pipeline.squeeze(noisy, &sel.param, method.variant)?;
    let (_, recs) = separate(&sst, truth.len(), pipeline.gamma_bins, noisy.is_real(), Some(refs))?;
    rmse(truth, &recs).stage("score")
}

/// Monte-Carlo RMSE of [`METHODS`] on a builtin signal.
pub fn rmse_sweep(
    builtin: Builtin,
    snr_db: &[f64],
    runs: usize,
    seed: u64,
    estimator: &EstimatorConfig,
    epsilon: f64,
    gamma_bins: usize,
) -> Result<RmseTable> {
    let clean = builtin.signal();
    let truth = builtin.component_signals();
    let components = builtin.components();
    let refs = truth_tracks(&components, &clean.times());
    let pipeline = Pipeline {
        epsilon,
        nfft: None,
        threshold: crate::phase::DEFAULT_THRESHOLD,
        gamma_bins,
    };
    let jobs: Vec<(usize, usize)> = (0..snr_db.len())
        .flat_map(|i| (0..runs).map(move |r| (i, r)))
        .collect();
    let scores: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let noisy = add_noise(&clean, snr_db[i], seed.wrapping_add(r as u64)).stage("noise")?;
            METHODS
                .iter()
                .map(|m| method_rmse(m, &noisy, &truth, &refs, &components, estimator, &pipeline))
                .collect()
        })
        .collect::<Result<_>>()?;
    let methods = METHODS
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let rmse = (0..snr_db.len())
                .map(|i| {
                    let total: f64 = jobs
                        .iter()
                        .zip(&scores)
                        .filter(|((ji, _), _)| *ji == i)
                        .map(|(_, s)| s[k])
                        .sum();
                    total / runs as f64
                })
                .collect();
            MethodRow {
                label: m.label.to_string(),
                variant: m.variant.to_string(),
                policy: m.policy.to_string(),
                rmse,
            }
        })
        .collect();
    Ok(RmseTable {
        snr_db: snr_db.to_vec(),
        runs,
        seed,
        methods,
    })
}

fn write_plane(tf: &TfMatrix, mag: crate::Matrix<f64>, freqs: Vec<f64>, path: &Path, format: TfFormat) -> Result<PathBuf> {
    let table = TfTable {
        magnitude: mag,
        times: tf.time_grid.clone(),
        freqs,
    };
    export_tf(&table, path, format)?;
    Ok(path.to_path_buf())
}

/// Run the configured analysis, write artifacts into the output directory
/// and return the report (also written as `report.json`).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let (name, signal, builtin) = load_signal(cfg).stage("load")?;
    info!("loaded {name}: {} samples at {} Hz", signal.len(), signal.sample_rate());
    let components = builtin.map(Builtin::components);

    let sel = select_sigma(
        &signal,
        cfg.policy,
        cfg.sigma_value,
        components.as_deref(),
        &cfg.estimator,
    )
    .stage("select-sigma")?;
    let pipeline = Pipeline {
        epsilon: cfg.epsilon,
        nfft: cfg.nfft,
        threshold: cfg.threshold,
        gamma_bins: cfg.gamma_bins,
    };
    let (v, sst) = pipeline.squeeze(&signal, &sel.param, cfg.variant)?;

    let (stft_mag, stft_freqs) = nonnegative_magnitude(&v);
    let (sst_mag, sst_freqs) = nonnegative_magnitude(&sst.energy);
    let (zeta, ell) = (cfg.estimator.renyi_zeta, cfg.estimator.renyi_ell);
    let entropy = EntropyReport {
        stft: finite_or_none(entropy_track(&stft_mag, zeta, ell)),
        sst: finite_or_none(entropy_track(&sst_mag, zeta, ell)),
    };

    let count = cfg
        .components
        .or(components.as_ref().map(Vec::len))
        .unwrap_or(1);
    let times = signal.times();
    let refs = components.as_ref().map(|c| truth_tracks(c, &times));
    let (ridges, recs) = separate(&sst, count, cfg.gamma_bins, signal.is_real(), refs.as_deref())?;

    let component_reports = match (builtin, &refs) {
        (Some(b), Some(refs)) => {
            let truth = b.component_signals();
            let freqs = ridges.frequencies(&sst.energy.freq_grid);
            let step = sst.energy.freq_step();
            let mut out = Vec::with_capacity(refs.len());
            for k in 0..refs.len() {
                let rel = relative_error(&truth[k], &recs[k]).stage("score")?;
                out.push(component_report(&freqs[k], &refs[k], step, rel));
            }
            Some(out)
        }
        _ => None,
    };

    let rmse_table = match builtin {
        Some(b) if !cfg.noise.snr_db.is_empty() => Some(
            rmse_sweep(
                b,
                &cfg.noise.snr_db,
                cfg.noise.runs,
                cfg.noise.seed,
                &cfg.estimator,
                cfg.epsilon,
                cfg.gamma_bins,
            )
            .stage("noise-sweep")?,
        ),
        _ => None,
    };

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).stage("write")?;
    let mut artifacts = Vec::new();
    let mut write = || -> Result<()> {
        if cfg.write_pgm {
            artifacts.push(write_plane(&v, stft_mag.clone(), stft_freqs.clone(), &dir.join("stft.pgm"), TfFormat::Pgm)?);
            artifacts.push(write_plane(&sst.energy, sst_mag.clone(), sst_freqs.clone(), &dir.join("sst.pgm"), TfFormat::Pgm)?);
        }
        if cfg.write_csv {
            artifacts.push(write_plane(&sst.energy, sst_mag.clone(), sst_freqs.clone(), &dir.join("sst.csv"), TfFormat::Csv)?);
        }
        for (k, rec) in recs.iter().enumerate() {
            let p = dir.join(format!("component_{k}.csv"));
            write_signal_csv(rec, &p)?;
            artifacts.push(p);
        }
        Ok(())
    };
    write().stage("write")?;
    let report_path = dir.join("report.json");
    artifacts.push(report_path.clone());

    let report = Report {
        signal: name,
        sample_rate: signal.sample_rate(),
        num_samples: signal.len(),
        variant: cfg.variant.to_string(),
        times,
        sigma: SigmaReport {
            policy: cfg.policy.to_string(),
            sigma: sel.param.sigma().to_vec(),
            sigma_u: sel.sigma_u,
            raw: sel.raw,
        },
        entropy,
        ridges_found: ridges.ridges.iter().filter(|r| r.iter().any(Option::is_some)).count(),
        components: component_reports,
        rmse_table,
        artifacts,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::io(&report_path, std::io::Error::other(e)))
        .stage("write")?;
    std::fs::write(&report_path, json)
        .map_err(|e| Error::io(&report_path, e))
        .stage("write")?;
    Ok(report)
}
