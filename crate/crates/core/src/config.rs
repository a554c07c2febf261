//! TOML experiment configuration.
//!
//! ```toml
//! [signal]
//! builtin = "two-chirp"        # or: csv = "data/bat.csv"
//!
//! [transform]
//! variant = "adp-fsst2"
//! epsilon = 0.2
//! gamma_bins = 15
//!
//! [sigma]
//! policy = "sigma2"            # constant | sigma1 | sigma2 | sigma-u | sigma-est
//!                              # | sigma-est2 | sigma-re | sigma-re2
//! value = 0.04                 # only for `constant`
//!
//! [estimator]                  # defaults shown by `EstimatorConfig::default`
//! renyi_ell = 2.5
//!
//! [noise]
//! snr_db = [0, 5, 10, 15, 20]  # empty: no method comparison
//! seed = 1
//! runs = 5
//!
//! [output]
//! dir = "results"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimation::EstimatorConfig;
use crate::signal::Builtin;
use crate::sst::SstVariant;

/// How the window width is chosen for the main analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaPolicy {
    Constant,
    /// Smallest width separating the ground-truth IFs as sinusoids.
    Sigma1,
    /// Smallest width separating the ground-truth IFs as linear chirps.
    Sigma2,
    /// Width of sharpest local STFT entropy.
    SigmaU,
    /// Fixed-threshold search.
    SigmaEst,
    /// Varying-threshold search.
    SigmaEst2,
    /// Width of sharpest local entropy of the first-order squeezed transform.
    SigmaRe,
    /// Same with the second-order squeezed transform.
    SigmaRe2,
}

impl SigmaPolicy {
    pub const ALL: [SigmaPolicy; 8] = [
        SigmaPolicy::Constant,
        SigmaPolicy::Sigma1,
        SigmaPolicy::Sigma2,
        SigmaPolicy::SigmaU,
        SigmaPolicy::SigmaEst,
        SigmaPolicy::SigmaEst2,
        SigmaPolicy::SigmaRe,
        SigmaPolicy::SigmaRe2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SigmaPolicy::Constant => "constant",
            SigmaPolicy::Sigma1 => "sigma1",
            SigmaPolicy::Sigma2 => "sigma2",
            SigmaPolicy::SigmaU => "sigma-u",
            SigmaPolicy::SigmaEst => "sigma-est",
            SigmaPolicy::SigmaEst2 => "sigma-est2",
            SigmaPolicy::SigmaRe => "sigma-re",
            SigmaPolicy::SigmaRe2 => "sigma-re2",
        }
    }

    /// Policies that read the ground-truth components.
    pub fn needs_ground_truth(self) -> bool {
        matches!(self, SigmaPolicy::Sigma1 | SigmaPolicy::Sigma2)
    }
}

impl fmt::Display for SigmaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SigmaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
                Error::config(
                    "sigma.policy",
                    format!("unknown policy `{s}` (expected one of {})", names.join(", ")),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalSource {
    Builtin(Builtin),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// SNRs of the method comparison sweep, in dB.
    pub snr_db: Vec<f64>,
    pub seed: u64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: SignalSource,
    /// Overrides the rate of a one-column CSV file.
    pub sample_rate: Option<f64>,
    pub variant: SstVariant,
    pub policy: SigmaPolicy,
    /// Window width of the `constant` policy.
    pub sigma_value: Option<f64>,
    pub epsilon: f64,
    pub nfft: Option<usize>,
    pub threshold: f64,
    /// Reconstruction half-band around each ridge, in frequency bins.
    pub gamma_bins: usize,
    /// Number of ridges to extract; defaults to the builtin component count.
    pub components: Option<usize>,
    pub estimator: EstimatorConfig,
    pub noise: NoiseConfig,
    pub output_dir: PathBuf,
    pub write_pgm: bool,
    pub write_csv: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: SignalSource::Builtin(Builtin::TwoChirp),
            sample_rate: None,
            variant: SstVariant::AdpFsst2,
            policy: SigmaPolicy::SigmaEst,
            sigma_value: None,
            epsilon: 0.2,
            nfft: None,
            threshold: crate::phase::DEFAULT_THRESHOLD,
            gamma_bins: 15,
            components: None,
            estimator: EstimatorConfig::default(),
            noise: NoiseConfig {
                snr_db: Vec::new(),
                seed: 1,
                runs: 1,
            },
            output_dir: PathBuf::from("results"),
            write_pgm: true,
            write_csv: false,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    signal: RawSignal,
    #[serde(default)]
    transform: RawTransform,
    #[serde(default)]
    sigma: RawSigma,
    #[serde(default)]
    estimator: Option<EstimatorConfig>,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSignal {
    builtin: Option<String>,
    csv: Option<PathBuf>,
    sample_rate: Option<f64>,
    components: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransform {
    variant: Option<String>,
    epsilon: Option<f64>,
    nfft: Option<usize>,
    threshold: Option<f64>,
    gamma_bins: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSigma {
    policy: Option<String>,
    value: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    snr_db: Option<Vec<f64>>,
    seed: Option<u64>,
    runs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    pgm: Option<bool>,
    csv: Option<bool>,
}

impl ExperimentConfig {
    /// Load and validate a config file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Parse TOML text. `origin` names the source in error messages and
    /// `base` anchors relative paths.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
            Error::Parse {
                path: origin.to_path_buf(),
                line: line as u64,
                message: e.message().to_string(),
            }
        })?;
        let defaults = Self::default();

        let source = match (raw.signal.builtin, raw.signal.csv) {
            (Some(name), None) => SignalSource::Builtin(name.parse().map_err(|_| {
                Error::config("signal.builtin", format!("unknown builtin `{name}`"))
            })?),
            (None, Some(p)) => SignalSource::Csv(base.join(p)),
            (None, None) => defaults.source,
            (Some(_), Some(_)) => {
                return Err(Error::config("signal", "set either `builtin` or `csv`, not both"))
            }
        };
        let variant = match raw.transform.variant {
            Some(s) => s.parse().map_err(|_| {
                Error::config("transform.variant", format!("unknown variant `{s}`"))
            })?,
            None => defaults.variant,
        };
        let policy = match raw.sigma.policy {
            Some(s) => s.parse()?,
            None => defaults.policy,
        };
        let cfg = Self {
            source,
            sample_rate: raw.signal.sample_rate,
            variant,
            policy,
            sigma_value: raw.sigma.value,
            epsilon: raw.transform.epsilon.unwrap_or(defaults.epsilon),
            nfft: raw.transform.nfft,
            threshold: raw.transform.threshold.unwrap_or(defaults.threshold),
            gamma_bins: raw.transform.gamma_bins.unwrap_or(defaults.gamma_bins),
            components: raw.signal.components,
            estimator: raw.estimator.unwrap_or_default(),
            noise: NoiseConfig {
                snr_db: raw.noise.snr_db.unwrap_or_default(),
                seed: raw.noise.seed.unwrap_or(defaults.noise.seed),
                runs: raw.noise.runs.unwrap_or(defaults.noise.runs),
            },
            output_dir: raw.output.dir.map_or_else(|| base.join(defaults.output_dir), |d| base.join(d)),
            write_pgm: raw.output.pgm.unwrap_or(defaults.write_pgm),
            write_csv: raw.output.csv.unwrap_or(defaults.write_csv),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check field ranges, file existence and variant/policy combinations.
    pub fn validate(&self) -> Result<()> {
        if let SignalSource::Csv(p) = &self.source {
            if !p.is_file() {
                return Err(Error::config(
                    "signal.csv",
                    format!("{} does not exist", p.display()),
                ));
            }
        }
        if matches!(self.sample_rate, Some(fs) if !(fs.is_finite() && fs > 0.0)) {
            return Err(Error::config("signal.sample_rate", "must be positive"));
        }
        if self.components == Some(0) {
            return Err(Error::config("signal.components", "must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config("transform.epsilon", "must lie in (0, 1)"));
        }
        if matches!(self.nfft, Some(n) if n < 2) {
            return Err(Error::config("transform.nfft", "must be at least 2"));
        }
        if !(self.threshold >= 0.0 && self.threshold < 1.0) {
            return Err(Error::config("transform.threshold", "must lie in [0, 1)"));
        }
        if self.gamma_bins == 0 {
            return Err(Error::config("transform.gamma_bins", "must be at least 1"));
        }
        let builtin = matches!(self.source, SignalSource::Builtin(_));
        if self.policy.needs_ground_truth() && !builtin {
            return Err(Error::config(
                "sigma.policy",
                format!("{} needs a builtin signal with known components", self.policy),
            ));
        }
        match (self.policy, self.sigma_value) {
            (SigmaPolicy::Constant, None) => {
                return Err(Error::config("sigma.value", "the constant policy needs a value"))
            }
            (SigmaPolicy::Constant, Some(s)) if !(s.is_finite() && s > 0.0) => {
                return Err(Error::config("sigma.value", "must be positive"))
            }
            (SigmaPolicy::Constant, _) => {}
            (_, Some(_)) => {
                return Err(Error::config(
                    "sigma.value",
                    format!("only used by the constant policy, not {}", self.policy),
                ))
            }
            (_, None) => {}
        }
        if self.variant.requires_constant_sigma() && self.policy != SigmaPolicy::Constant {
            return Err(Error::config(
                "transform.variant",
                format!("{} needs the constant sigma policy, got {}", self.variant, self.policy),
            ));
        }
        self.estimator.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: format!("estimator.{field}"),
                message,
            },
            other => other,
        })?;
        if !self.noise.snr_db.is_empty() {
            if !builtin {
                return Err(Error::config(
                    "noise.snr_db",
                    "the method comparison needs a builtin signal with known components",
                ));
            }
            if self.noise.snr_db.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("noise.snr_db", "values must be finite"));
            }
        }
        if self.noise.runs == 0 {
            return Err(Error::config("noise.runs", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("test.toml"), Path::new("."))
    }

    fn field_of(r: Result<ExperimentConfig>) -> String {
        match r {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.policy, SigmaPolicy::SigmaEst);
        assert_eq!(c.gamma_bins, 15);
        assert_eq!(c.estimator, EstimatorConfig::default());
    }

    #[test]
    fn full_file() {
        let c = parse(
            r#"
            [signal]
            builtin = "three-component"
            [transform]
            variant = "ADP_FSST2"
            gamma_bins = 10
            [sigma]
            policy = "sigma_est2"
            [estimator]
            renyi_ell = 3.0
            sigma_grid = { max = 0.1, min = 0.01, step = 0.01 }
            [noise]
            snr_db = [0, 10]
            runs = 3
            "#,
        )
        .unwrap();
        assert_eq!(c.source, SignalSource::Builtin(Builtin::ThreeComponent));
        assert_eq!(c.variant, SstVariant::AdpFsst2);
        assert_eq!(c.policy, SigmaPolicy::SigmaEst2);
        assert_eq!(c.estimator.renyi_ell, 3.0);
        assert_eq!(c.estimator.gamma1, 0.3);
        assert_eq!(c.noise.snr_db, vec![0.0, 10.0]);
    }

    #[test]
    fn invalid_policy_names_the_field() {
        assert_eq!(field_of(parse("[sigma]\npolicy = \"widest\"\n")), "sigma.policy");
    }

    #[test]
    fn invalid_combinations() {
        assert_eq!(
            field_of(parse("[transform]\nvariant = \"fsst2\"\n")),
            "transform.variant"
        );
        assert_eq!(field_of(parse("[sigma]\npolicy = \"constant\"\n")), "sigma.value");
        assert_eq!(
            field_of(parse("[signal]\ncsv = \"/no/such/file.csv\"\n")),
            "signal.csv"
        );
        assert_eq!(field_of(parse("[signal]\nbuiltin = \"bat\"\n")), "signal.builtin");
        assert_eq!(
            field_of(parse("[estimator]\ngamma1 = 2.0\n")),
            "estimator.gamma1"
        );
        assert_eq!(field_of(parse("[noise]\nruns = 0\n")), "noise.runs");
    }

    #[test]
    fn csv_source_rejects_oracle_policies() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.csv"), "0,1\n1,2\n").unwrap();
        let text = "[signal]\ncsv = \"s.csv\"\n[sigma]\npolicy = \"sigma2\"\n";
        let r = ExperimentConfig::parse(text, Path::new("x.toml"), dir.path());
        assert_eq!(field_of(r), "sigma.policy");
        let text = "[signal]\ncsv = \"s.csv\"\n";
        let c = ExperimentConfig::parse(text, Path::new("x.toml"), dir.path()).unwrap();
        assert_eq!(c.source, SignalSource::Csv(dir.path().join("s.csv")));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        match parse("[signal]\nbuiltin = \n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("[signal]\nfoo = 1\n"), Err(Error::Parse { .. })));
    }
}
