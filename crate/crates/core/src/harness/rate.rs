use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{mean, median, std_error};
use super::{write_output, Check, HarnessError, Report};
use crate::cnc::{CncEngine, EngineConfig};
use crate::coding::ModelSpec;
use crate::envs::{Environment, ExplicitMdp, Policy, TabularEnv};
use crate::oracle::{q_via_dp, QTable};
use crate::rng::{stream, trial_seed, Stream};

const RATE3: &str = include_str!("../../data/mdps/rate3.txt");

/// The three-state MDP the rate test runs on by default.
pub fn bundled_rate_mdp() -> ExplicitMdp {
    ExplicitMdp::parse(RATE3).expect("bundled MDP parses")
}

fn default_engine() -> EngineConfig {
    EngineConfig {
        horizon: 2,
        state_model: ModelSpec::Frequency,
        return_model: ModelSpec::Frequency,
        ..EngineConfig::default()
    }
}

fn default_checkpoints() -> Vec<u64> {
    vec![10_000, 40_000, 160_000]
}

fn default_ratio_range() -> [f64; 2] {
    [1.5, 3.0]
}

/// Convergence rate of `Q̂` to exact `Q` under on-policy sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    /// Explicit MDP file with a policy; the bundled three-state MDP if
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp: Option<PathBuf>,
    #[serde(default = "default_engine")]
    pub engine: EngineConfig,
    /// Sample counts at which the error is measured; each should be four
    /// times the last.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<u64>,
    /// Accepted range of the median error ratio per quadrupling.
    #[serde(default = "default_ratio_range")]
    pub ratio_range: [f64; 2],
}

impl Default for RateSpec {
    fn default() -> Self {
        Self {
            mdp: None,
            engine: default_engine(),
            checkpoints: default_checkpoints(),
            ratio_range: default_ratio_range(),
        }
    }
}

/// `max |Q̂(s,a) − Q(s,a)|` over the pairs where `Q` is defined.
fn sup_error(engine: &CncEngine, truth: &QTable) -> Result<f64, HarnessError> {
    let mut worst = 0.0f64;
    for (s, a, q) in truth.defined() {
        worst = worst.max((engine.q_value(&[s], a)?.value - q).abs());
    }
    Ok(worst)
}

fn run_trial(spec: &RateSpec, mdp: &Arc<ExplicitMdp>, truth: &QTable, seed: u64) -> Result<Vec<f64>, HarnessError> {
    let mut env_rng = stream(seed, Stream::Env);
    let mut policy_rng = stream(seed, Stream::Policy);
    let mut env = TabularEnv::new(Arc::clone(mdp));
    let mut engine = CncEngine::for_env(&spec.engine, &env, seed)?;
    let policy = mdp.policy();
    engine.begin(&[env.state()]);
    let mut errors = Vec::with_capacity(spec.checkpoints.len());
    let mut t = 0;
    for &checkpoint in &spec.checkpoints {
        while t < checkpoint {
            let a = policy.sample(env.state(), &mut policy_rng);
            let step = env.step(a, &mut env_rng)?;
            engine.step(a, &[env.state()], step.reward, step.episode_end)?;
            t += 1;
        }
        errors.push(sup_error(&engine, truth)?);
    }
    Ok(errors)
}

/// Runs the rate test. Writes `rate.csv` (one row per trial and
/// checkpoint) and `rate_summary.csv` (median error per checkpoint and
/// ratio to the next one).
pub fn run_rate_test(spec: &RateSpec, seed: u64, trials: usize, out: &Path) -> Result<Report, HarnessError> {
    if spec.checkpoints.len() < 2 || spec.checkpoints.windows(2).any(|w| w[0] >= w[1]) || spec.checkpoints[0] == 0 {
        return Err(HarnessError::Config("rate checkpoints must be positive, increasing and at least two".into()));
    }
    let mdp = Arc::new(match &spec.mdp {
        Some(path) => ExplicitMdp::load(path)?,
        None => bundled_rate_mdp(),
    });
    let m = spec.engine.horizon;
    let truth = q_via_dp(&mdp, mdp.policy(), m);
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(spec, &mdp, &truth, trial_seed(seed, t as u64)))
        .collect::<Result<_, _>>()?;

    let mut files = Vec::new();
    let mut trial_csv = String::from("trial,samples,error\n");
    for (t, errors) in per_trial.iter().enumerate() {
        for (n, e) in spec.checkpoints.iter().zip(errors) {
            let _ = writeln!(trial_csv, "{t},{n},{e:?}");
        }
    }
    write_output(out, &mut files, "rate.csv", &trial_csv)?;

    let columns: Vec<Vec<f64>> = (0..spec.checkpoints.len())
        .map(|i| per_trial.iter().map(|e| e[i]).collect())
        .collect();
    let medians: Vec<f64> = columns.iter().map(|c| median(c)).collect();
    let ratios: Vec<f64> = medians.windows(2).map(|w| w[0] / w[1]).collect();
    let mut summary = String::from("samples,median_error,mean_error,se_error,ratio_to_next\n");
    for (i, n) in spec.checkpoints.iter().enumerate() {
        let ratio = ratios.get(i).map(|r| format!("{r:?}")).unwrap_or_default();
        let _ = writeln!(
            summary,
            "{n},{:?},{:?},{:?},{ratio}",
            medians[i],
            mean(&columns[i]),
            std_error(&columns[i])
        );
    }
    write_output(out, &mut files, "rate_summary.csv", &summary)?;

    let [lo, hi] = spec.ratio_range;
    let rewards = mdp.rewards();
    let rmin = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let rmax = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bound = m as f64 * (rmax - rmin);
    let largest = per_trial.iter().flatten().fold(0.0f64, |acc, &e| if e.is_finite() { acc.max(e) } else { f64::INFINITY });
    let ratio_list = ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ");
    let checks = vec![
        Check::new(
            "ratio-per-quadrupling",
            ratios.iter().all(|r| (lo..=hi).contains(r)),
            format!("median error ratios {ratio_list} (accepted range [{lo}, {hi}])"),
        ),
        Check::new(
            "errors-bounded",
            largest <= bound,
            format!("largest error {largest:.3e}, bound m·(r_max − r_min) = {bound}"),
        ),
    ];
    Ok(Report {
        experiment: "rate-test",
        checks,
        files,
    })
}
