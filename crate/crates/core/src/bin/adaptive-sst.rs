use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use adaptive_sst::config::{ExperimentConfig, SigmaPolicy};
use adaptive_sst::estimation::{entropy_track, nonnegative_magnitude, EstimatorConfig};
use adaptive_sst::experiment::{run_experiment, select_sigma, SigmaSelection};
use adaptive_sst::io::{export_tf, read_signal_csv, write_signal_csv, TfFormat, TfTable};
use adaptive_sst::phase::DEFAULT_THRESHOLD;
use adaptive_sst::ridge::extract_ridges;
use adaptive_sst::signal::{add_noise, synth_analytic, Builtin, Signal};
use adaptive_sst::sst::{reconstruct_component, synchrosqueeze, SstResult, SstVariant};
use adaptive_sst::stft::adaptive_stft;
use adaptive_sst::window::WindowKind;
use adaptive_sst::{Error, Result};

#[derive(Parser)]
#[command(name = "adaptive-sst", version, about = "Adaptive STFT and synchrosqueezing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a builtin test signal to CSV, optionally with noise.
    Synth(SynthArgs),
    /// Adaptive STFT magnitude as CSV or PGM.
    Stft(TransformArgs),
    /// Synchrosqueezed magnitude as CSV or PGM.
    Fsst(SqueezeArgs),
    /// Per-sample window width under a selection policy.
    SelectSigma(SelectArgs),
    /// Ridge frequencies of the squeezed transform.
    Ridge(RidgeArgs),
    /// Components rebuilt around the extracted ridges.
    Reconstruct(RidgeArgs),
    /// Per-frame local Rényi entropy of the STFT or squeezed transform.
    Entropy(EntropyArgs),
    /// Run a TOML-configured experiment and write a JSON report.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Signal CSV file.
    #[arg(long, conflicts_with = "builtin")]
    input: Option<PathBuf>,
    /// Builtin signal: two-chirp or three-component.
    #[arg(long)]
    builtin: Option<String>,
    /// Sample rate override (required for one-column CSV without metadata).
    #[arg(long)]
    sample_rate: Option<f64>,
}

#[derive(Args)]
struct SigmaArgs {
    /// Width policy: constant, sigma1, sigma2, sigma-u, sigma-est, sigma-est2, sigma-re, sigma-re2.
    #[arg(long, default_value = "constant")]
    policy: String,
    /// Window width in seconds for the constant policy.
    #[arg(long)]
    sigma: Option<f64>,
    /// TOML file with estimator settings.
    #[arg(long)]
    estimator: Option<PathBuf>,
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    sigma: SigmaArgs,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long)]
    nfft: Option<usize>,
    /// Output file; the format follows the extension (.csv or .pgm).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SqueezeArgs {
    #[command(flatten)]
    transform: TransformArgs,
    /// fsst, fsst2, adp-fsst, adp-fsst2, regular-pt-adp, regular-pt-adp2.
    #[arg(long, default_value = "adp-fsst2")]
    variant: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    sigma: SigmaArgs,
    /// Output CSV of time, sigma.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RidgeArgs {
    #[command(flatten)]
    squeeze: SqueezeArgs,
    /// Number of ridges to extract.
    #[arg(long, default_value_t = 1)]
    components: usize,
    /// Half-width of the band cleared and integrated around each ridge, in bins.
    #[arg(long, default_value_t = 15)]
    gamma_bins: usize,
}

#[derive(Args)]
struct EntropyArgs {
    #[command(flatten)]
    squeeze: SqueezeArgs,
    /// Use the unsqueezed STFT.
    #[arg(long)]
    stft: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    builtin: String,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the complex analytic form.
    #[arg(long)]
    analytic: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the output directory of the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Everything a transform subcommand needs, checked before any compute.
struct Prepared {
    signal: Signal,
    builtin: Option<Builtin>,
    policy: SigmaPolicy,
    constant: Option<f64>,
    estimator: EstimatorConfig,
}

impl Prepared {
    fn new(source: &SourceArgs, sigma: &SigmaArgs) -> Result<Self> {
        let policy: SigmaPolicy = sigma.policy.parse()?;
        let estimator = match &sigma.estimator {
            Some(p) => read_estimator(p)?,
            None => EstimatorConfig::default(),
        };
        match (policy, sigma.sigma) {
            (SigmaPolicy::Constant, None) => {
                return Err(Error::Config {
                    field: "--sigma".into(),
                    message: "the constant policy needs a width".into(),
                })
            }
            (SigmaPolicy::Constant, Some(s)) if !(s.is_finite() && s > 0.0) => {
                return Err(Error::Config {
                    field: "--sigma".into(),
                    message: "must be positive".into(),
                })
            }
            _ => {}
        }
        let (signal, builtin) = load(source)?;
        if policy.needs_ground_truth() && builtin.is_none() {
            return Err(Error::Config {
                field: "--policy".into(),
                message: format!("{policy} needs a builtin signal"),
            });
        }
        Ok(Self {
            signal,
            builtin,
            policy,
            constant: sigma.sigma,
            estimator,
        })
    }

    fn select(&self) -> Result<SigmaSelection> {
        let comps = self.builtin.map(Builtin::components);
        select_sigma(
            &self.signal,
            self.policy,
            self.constant,
            comps.as_deref(),
            &self.estimator,
        )
    }
}

fn read_estimator(path: &Path) -> Result<EstimatorConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let cfg: EstimatorConfig = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e
            .span()
            .map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1) as u64),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn load(source: &SourceArgs) -> Result<(Signal, Option<Builtin>)> {
    let (signal, builtin) = match (&source.input, &source.builtin) {
        (Some(p), None) => (read_signal_csv(p)?, None),
        (None, Some(name)) => {
            let b: Builtin = name.parse()?;
            (b.signal(), Some(b))
        }
        _ => {
            return Err(Error::Config {
                field: "--input".into(),
                message: "give exactly one of --input or --builtin".into(),
            })
        }
    };
    match source.sample_rate {
        Some(fs) if !(fs.is_finite() && fs > 0.0) => Err(Error::Config {
            field: "--sample-rate".into(),
            message: "must be positive".into(),
        }),
        Some(fs) if signal.is_real() => Ok((Signal::from_real(signal.real_part(), fs, signal.t0())?, builtin)),
        Some(fs) => Ok((Signal::from_complex(signal.samples().to_vec(), fs, signal.t0())?, builtin)),
        None => Ok((signal, builtin)),
    }
}

fn parse_variant(s: &str, policy: SigmaPolicy) -> Result<SstVariant> {
    let variant: SstVariant = s.parse()?;
    if variant.requires_constant_sigma() && policy != SigmaPolicy::Constant {
        return Err(Error::Config {
            field: "--variant".into(),
            message: format!("{variant} needs --policy constant"),
        });
    }
    Ok(variant)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::Config {
            field: "--epsilon".into(),
            message: "must lie in (0, 1)".into(),
        })
    }
}

fn squeeze(args: &SqueezeArgs) -> Result<(Prepared, SstResult)> {
    let t = &args.transform;
    let policy: SigmaPolicy = t.sigma.policy.parse()?;
    let variant = parse_variant(&args.variant, policy)?;
    check_epsilon(t.epsilon)?;
    let prep = Prepared::new(&t.source, &t.sigma)?;
    let sel = prep.select()?;
    let nfft = t.nfft.unwrap_or(prep.signal.len());
    let sst = synchrosqueeze(&prep.signal, &sel.param, variant, t.epsilon, nfft, args.threshold)?;
    Ok((prep, sst))
}

fn output_format(path: &Path) -> Result<TfFormat> {
    TfFormat::from_path(path).map_err(|_| Error::Config {
        field: "--out".into(),
        message: format!("use a .csv or .pgm extension, got {}", path.display()),
    })
}

fn write_rows(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{header}").map_err(io)?;
    for row in rows {
        writeln!(out, "{row}").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let b: Builtin = a.builtin.parse()?;
            let mut signal = if a.analytic {
                synth_analytic(&b.components(), b.sample_rate(), b.duration())?
            } else {
                b.signal()
            };
            if let Some(snr) = a.snr_db {
                signal = add_noise(&signal, snr, a.seed)?;
            }
            write_signal_csv(&signal, &a.out)?;
            info!("wrote {} samples to {}", signal.len(), a.out.display());
        }
        Command::Stft(t) => {
            let format = output_format(&t.out)?;
            check_epsilon(t.epsilon)?;
            let prep = Prepared::new(&t.source, &t.sigma)?;
            let sel = prep.select()?;
            let nfft = t.nfft.unwrap_or(prep.signal.len());
            let tf = adaptive_stft(&prep.signal, &sel.param, WindowKind::G, t.epsilon, nfft)?;
            let (magnitude, freqs) = nonnegative_magnitude(&tf);
            let table = TfTable {
                magnitude,
                times: tf.time_grid.clone(),
                freqs,
            };
            export_tf(&table, &t.out, format)?;
        }
        Command::Fsst(s) => {
            let format = output_format(&s.transform.out)?;
            let (_, sst) = squeeze(&s)?;
            let (magnitude, freqs) = nonnegative_magnitude(&sst.energy);
            let table = TfTable {
                magnitude,
                times: sst.energy.time_grid.clone(),
                freqs,
            };
            export_tf(&table, &s.transform.out, format)?;
        }
        Command::SelectSigma(a) => {
            let prep = Prepared::new(&a.source, &a.sigma)?;
            let sel = prep.select()?;
            let times = prep.signal.times();
            write_rows(
                &a.out,
                "time,sigma",
                times.iter().zip(sel.param.sigma()).map(|(t, s)| format!("{t},{s}")),
            )?;
        }
        Command::Ridge(r) => {
            check_components(&r)?;
            let (_, sst) = squeeze(&r.squeeze)?;
            let set = extract_ridges(&sst, r.components, r.gamma_bins)?;
            let freqs = set.frequencies(&sst.energy.freq_grid);
            let header = std::iter::once("time".to_string())
                .chain((0..freqs.len()).map(|k| format!("ridge_{k}")))
                .collect::<Vec<_>>()
                .join(",");
            let rows = sst.energy.time_grid.iter().enumerate().map(|(n, t)| {
                let mut row = t.to_string();
                for f in &freqs {
                    row.push(',');
                    if let Some(f) = f[n] {
                        row.push_str(&f.to_string());
                    }
                }
                row
            });
            write_rows(&r.squeeze.transform.out, &header, rows)?;
            if set.exhausted {
                log::warn!("found only {} of {} ridges", set.len(), r.components);
            }
        }
        Command::Reconstruct(r) => {
            check_components(&r)?;
            let out_dir = &r.squeeze.transform.out;
            let (prep, sst) = squeeze(&r.squeeze)?;
            let set = extract_ridges(&sst, r.components, r.gamma_bins)?;
            std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            for (k, ridge) in set.ridges.iter().enumerate() {
                let rec = reconstruct_component(&sst, ridge, r.gamma_bins, prep.signal.is_real())?;
                write_signal_csv(&rec, out_dir.join(format!("component_{k}.csv")))?;
            }
        }
        Command::Entropy(e) => {
            let zeta_ell = |p: &Prepared| (p.estimator.renyi_zeta, p.estimator.renyi_ell);
            let (times, track) = if e.stft {
                let t = &e.squeeze.transform;
                check_epsilon(t.epsilon)?;
                let prep = Prepared::new(&t.source, &t.sigma)?;
                let sel = prep.select()?;
                let nfft = t.nfft.unwrap_or(prep.signal.len());
                let tf = adaptive_stft(&prep.signal, &sel.param, WindowKind::G, t.epsilon, nfft)?;
                let (mag, _) = nonnegative_magnitude(&tf);
                let (z, l) = zeta_ell(&prep);
                (tf.time_grid.clone(), entropy_track(&mag, z, l))
            } else {
                let (prep, sst) = squeeze(&e.squeeze)?;
                let (mag, _) = nonnegative_magnitude(&sst.energy);
                let (z, l) = zeta_ell(&prep);
                (sst.energy.time_grid.clone(), entropy_track(&mag, z, l))
            };
            write_rows(
                &e.squeeze.transform.out,
                "time,entropy",
                times.iter().zip(&track).map(|(t, h)| format!("{t},{h}")),
            )?;
        }
        Command::Experiment(a) => {
            let mut cfg = ExperimentConfig::from_path(&a.config)?;
            if let Some(dir) = a.out_dir {
                cfg.output_dir = dir;
            }
            let report = run_experiment(&cfg)?;
            println!("{}", cfg.output_dir.join("report.json").display());
            if let Some(table) = &report.rmse_table {
                for m in &table.methods {
                    let cells: Vec<String> = m.rmse.iter().map(|v| format!("{v:.4}")).collect();
                    println!("{} ({} / {}): {}", m.label, m.variant, m.policy, cells.join(" "));
                }
            }
        }
    }
    Ok(())
}

fn check_components(r: &RidgeArgs) -> Result<()> {
    if r.components == 0 {
        return Err(Error::Config {
            field: "--components".into(),
            message: "must be at least 1".into(),
        });
    }
    if r.gamma_bins == 0 {
        return Err(Error::Config {
            field: "--gamma-bins".into(),
            message: "must be at least 1".into(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
