//! Experiment configuration, runners and reporting.
//!
//! A run is fully determined by its [`ExperimentConfig`]: every trial gets
//! its own master seed, split into named streams, and CSV output is
//! formatted deterministically, so reruns are byte-identical.
//!
//! ```toml
//! seed = 7
//! trials = 10
//!
//! [experiment]
//! kind = "eval-blackjack"
//! episodes = 100000
//!
//! [experiment.engine]
//! horizon = 20
//! state_model = { kind = "dirichlet", alpha = 0.5 }
//! return_model = { kind = "dirichlet", alpha = 0.5 }
//! ```

mod baseline;
mod blackjack;
mod cert;
mod control;
mod rate;
pub mod stats;

pub use baseline::McBaseline;
pub use blackjack::{run_blackjack_eval, BlackjackEval, CheckpointErrors};
pub use cert::{bundled_corpus, run_oracle_cert, CertRow, OracleCert};
pub use control::{run_control, ControlEnv, ControlSpec, TrialOutcome};
pub use rate::{bundled_rate_mdp, run_rate_test, RateSpec};

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cnc::CncError;
use crate::envs::EnvError;
use crate::oracle::OracleError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot parse configuration: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Env(#[from] EnvError),

    #[error(transparent)]
    Cnc(#[from] CncError),

    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Defaults per experiment kind when absent.
    #[serde(default)]
    pub trials: Option<usize>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    EvalBlackjack(BlackjackEval),
    Control(ControlSpec),
    OracleCert(OracleCert),
    RateTest(RateSpec),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::EvalBlackjack(_) => "eval-blackjack",
            Experiment::Control(_) => "control",
            Experiment::OracleCert(_) => "oracle-cert",
            Experiment::RateTest(_) => "rate-test",
        }
    }

    fn default_trials(&self) -> usize {
        match self {
            Experiment::EvalBlackjack(_) => 10,
            Experiment::Control(_) => 10,
            Experiment::OracleCert(_) => 1,
            Experiment::RateTest(_) => 30,
        }
    }
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            seed: 0,
            trials: None,
            experiment,
        }
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or_else(|| self.experiment.default_trials())
    }

    /// Canonical TOML with every default filled in.
    pub fn to_toml(&self) -> String {
        let mut resolved = self.clone();
        resolved.trials = Some(self.trials());
        toml::to_string(&resolved).expect("configs serialize")
    }

    /// Rebases relative MDP paths onto `base`, typically the directory of
    /// the config file.
    pub fn resolve_paths(&mut self, base: &Path) {
        match &mut self.experiment {
            Experiment::Control(ControlSpec {
                env: ControlEnv::Explicit { path },
                ..
            }) => *path = resolve_path(base, path),
            Experiment::OracleCert(spec) => {
                for f in &mut spec.files {
                    *f = resolve_path(base, f);
                }
            }
            Experiment::RateTest(RateSpec { mdp: Some(path), .. }) => *path = resolve_path(base, path),
            _ => {}
        }
    }

    /// SHA-256 of [`to_toml`](Self::to_toml), hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// One acceptance check of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: &'static str,
    pub checks: Vec<Check>,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_FAILED
        }
    }
}

/// Writes `name` under `out`, creating `out` if needed, and records it.
pub(crate) fn write_output(out: &Path, files: &mut Vec<String>, name: &str, body: &str) -> io::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), body)?;
    files.push(name.to_string());
    Ok(())
}

/// Runs the configured experiment, writing CSVs and `manifest.txt` into
/// `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<Report, HarnessError> {
    if config.trials() == 0 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    fs::create_dir_all(out)?;
    let mut report = match &config.experiment {
        Experiment::EvalBlackjack(spec) => run_blackjack_eval(spec, config.seed, config.trials(), out)?,
        Experiment::Control(spec) => run_control(spec, config.seed, config.trials(), out)?,
        Experiment::OracleCert(spec) => run_oracle_cert(spec, config.seed, out)?,
        Experiment::RateTest(spec) => run_rate_test(spec, config.seed, config.trials(), out)?,
    };
    write_manifest(config, &report, out)?;
    report.files.push("manifest.txt".into());
    Ok(report)
}

fn write_manifest(config: &ExperimentConfig, report: &Report, out: &Path) -> io::Result<()> {
    let mut text = String::new();
    text.push_str(&format!("experiment {}\n", config.experiment.name()));
    text.push_str(&format!("config_sha256 {}\n", config.hash()));
    text.push_str(&format!("seed {}\n", config.seed));
    text.push_str(&format!("trials {}\n", config.trials()));
    text.push_str(&format!("cnc_core {}\n", env!("CARGO_PKG_VERSION")));
    for f in &report.files {
        text.push_str(&format!("output {f}\n"));
    }
    for c in &report.checks {
        text.push_str(&format!("check {c}\n"));
    }
    text.push_str("\n# resolved configuration\n");
    text.push_str(&config.to_toml());
    fs::write(out.join("manifest.txt"), text)
}

/// Resolves `path` against `base` unless it is absolute.
pub fn resolve_path(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_with_defaults() {
        for kind in ["eval-blackjack", "control", "oracle-cert", "rate-test"] {
            let c = ExperimentConfig::parse(&format!("[experiment]\nkind = \"{kind}\"\n")).unwrap();
            assert_eq!(c.experiment.name(), kind);
            assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap().experiment, c.experiment);
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::parse("[experiment]\nkind = \"rate-test\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::parse("sed = 1\n[experiment]\nkind = \"rate-test\"\n").is_err());
        assert!(ExperimentConfig::parse("[experiment]\nkind = \"nope\"\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::parse("[experiment]\nkind = \"rate-test\"\n").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
