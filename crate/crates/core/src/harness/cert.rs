use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_output, Check, HarnessError, Report};
use crate::envs::ExplicitMdp;
use crate::oracle::{
    build_augmented_chain, build_snake_chain, count_windows, q_via_dp, q_via_nu, random_ir_ap_mdp, solve_snake,
    OracleError, RandomMdpParams, DEFAULT_WINDOW_CAP,
};
use crate::rng::{stream, Stream};

const GAP_TOLERANCE: f64 = 1e-9;

const BUNDLED: [(&str, &str); 5] = [
    ("ring5", include_str!("../../data/mdps/ring5.txt")),
    ("chain5", include_str!("../../data/mdps/chain5.txt")),
    ("star5", include_str!("../../data/mdps/star5.txt")),
    ("dense5", include_str!("../../data/mdps/dense5.txt")),
    ("cycle2", include_str!("../../data/mdps/cycle2.txt")),
];

/// The bundled certification corpus, by name.
pub fn bundled_corpus() -> Vec<(&'static str, ExplicitMdp)> {
    BUNDLED
        .iter()
        .map(|(name, text)| (*name, ExplicitMdp::parse(text).expect("bundled MDP parses")))
        .collect()
}

fn yes() -> bool {
    true
}

fn default_random() -> usize {
    100
}

fn default_horizon() -> usize {
    3
}

fn default_max_horizon() -> usize {
    4
}

fn default_cap() -> usize {
    DEFAULT_WINDOW_CAP
}

/// Certifies that `Q` from the stationary law of the snake chain matches
/// finite-horizon dynamic programming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCert {
    #[serde(default = "yes")]
    pub bundled: bool,
    /// Additional explicit MDP files, certified at `horizon`.
    #[serde(default)]
    pub files: Vec<PathBuf>,
    /// Horizon for bundled and file MDPs.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Number of random IR+AP MDPs.
    #[serde(default = "default_random")]
    pub random: usize,
    /// Random MDPs cycle through horizons `1..=max_horizon`.
    #[serde(default = "default_max_horizon")]
    pub max_horizon: usize,
    #[serde(default = "default_cap")]
    pub window_cap: usize,
}

impl Default for OracleCert {
    fn default() -> Self {
        Self {
            bundled: true,
            files: Vec::new(),
            horizon: default_horizon(),
            random: default_random(),
            max_horizon: default_max_horizon(),
            window_cap: default_cap(),
        }
    }
}

/// One certified MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct CertRow {
    pub name: String,
    pub source: &'static str,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub windows: u128,
    pub irreducible: bool,
    pub aperiodic: bool,
    pub period: u64,
    pub residual: f64,
    pub gap: f64,
    /// `ok`, `fail`, `periodic` (excluded from the gap check) or `error: …`.
    pub status: String,
}

impl CertRow {
    fn failed(&self) -> bool {
        self.status != "ok" && self.status != "periodic"
    }
}

fn certify(name: String, source: &'static str, mdp: &ExplicitMdp, m: usize, cap: usize) -> CertRow {
    let mut row = CertRow {
        name,
        source,
        states: mdp.num_states(),
        actions: mdp.num_actions(),
        horizon: m,
        windows: 0,
        irreducible: false,
        aperiodic: false,
        period: 0,
        residual: f64::NAN,
        gap: f64::NAN,
        status: String::new(),
    };
    let outcome = (|| -> Result<(), OracleError> {
        if m == 0 {
            return Err(OracleError::ZeroHorizon);
        }
        let chain = build_augmented_chain(mdp, mdp.policy())?;
        row.windows = count_windows(&chain, m);
        let snake = build_snake_chain(&chain, m, cap)?;
        let result = solve_snake(&snake, &chain)?;
        row.irreducible = result.properties.irreducible;
        row.aperiodic = result.properties.aperiodic;
        row.period = result.properties.period;
        row.residual = result.residual;
        row.gap = q_via_nu(&result).sup_gap(&q_via_dp(mdp, mdp.policy(), m));
        Ok(())
    })();
    row.status = match outcome {
        Err(e) => format!("error: {e}"),
        Ok(()) if !row.aperiodic => "periodic".into(),
        Ok(()) if row.gap <= GAP_TOLERANCE => "ok".into(),
        Ok(()) => "fail".into(),
    };
    row
}

/// Certifies the corpus and writes `oracle_cert.csv`. Solver errors are
/// recorded on their row and count as failures; they never abort the
/// corpus.
pub fn run_oracle_cert(spec: &OracleCert, seed: u64, out: &Path) -> Result<Report, HarnessError> {
    if spec.random > 0 && spec.max_horizon == 0 {
        return Err(HarnessError::Config("max_horizon must be at least 1".into()));
    }
    let mut rows = Vec::new();
    if spec.bundled {
        for (name, mdp) in bundled_corpus() {
            rows.push(certify(name.into(), "bundled", &mdp, spec.horizon, spec.window_cap));
        }
    }
    for path in &spec.files {
        let mdp = ExplicitMdp::load(path)?;
        rows.push(certify(path.display().to_string(), "file", &mdp, spec.horizon, spec.window_cap));
    }
    let mut rng = stream(seed, Stream::Env);
    let params = RandomMdpParams::default();
    for i in 0..spec.random {
        let mdp = random_ir_ap_mdp(&mut rng, &params);
        let m = 1 + i % spec.max_horizon;
        rows.push(certify(format!("random-{i}"), "random", &mdp, m, spec.window_cap));
    }

    let mut csv = String::from("name,source,states,actions,horizon,windows,irreducible,aperiodic,period,residual,gap,status\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{:?},{:?},\"{}\"",
            r.name,
            r.source,
            r.states,
            r.actions,
            r.horizon,
            r.windows,
            r.irreducible,
            r.aperiodic,
            r.period,
            r.residual,
            r.gap,
            r.status.replace('"', "'")
        );
    }
    let mut files = Vec::new();
    write_output(out, &mut files, "oracle_cert.csv", &csv)?;

    let failures: Vec<&str> = rows.iter().filter(|r| r.failed()).map(|r| r.name.as_str()).collect();
    let checked: Vec<f64> = rows.iter().filter(|r| r.status == "ok" || r.status == "fail").map(|r| r.gap).collect();
    let worst = checked.iter().copied().fold(0.0f64, f64::max);
    let periodic = rows.iter().filter(|r| r.status == "periodic").count();
    let detail = if failures.is_empty() {
        format!(
            "{} MDPs, largest gap {worst:.3e} over {} checked, {periodic} periodic excluded",
            rows.len(),
            checked.len()
        )
    } else {
        format!("{} of {} MDPs failed: {}", failures.len(), rows.len(), failures.join(" "))
    };
    Ok(Report {
        experiment: "oracle-cert",
        checks: vec![Check::new("nu-matches-dp", failures.is_empty(), detail)],
        files,
    })
}
