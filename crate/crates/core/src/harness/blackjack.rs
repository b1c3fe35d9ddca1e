use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{mean, median, std_error};
use super::{write_output, Check, HarnessError, McBaseline, Report};
use crate::cnc::{CncEngine, EngineConfig};
use crate::coding::ModelSpec;
use crate::envs::{Blackjack, Environment, Policy, BLACKJACK_STATES as NUM_STATES};
use crate::oracle::q_via_dp;
use crate::rng::{stream, trial_seed, Stream};

fn default_engine() -> EngineConfig {
    EngineConfig {
        horizon: 20,
        state_model: ModelSpec::Dirichlet { alpha: 0.5 },
        return_model: ModelSpec::Dirichlet { alpha: 0.5 },
        ..EngineConfig::default()
    }
}

fn default_episodes() -> u64 {
    100_000
}

fn default_checkpoints() -> Vec<u64> {
    vec![0, 1_000, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000]
}

fn yes() -> bool {
    true
}

/// Policy evaluation of the stay-on-20 policy against exact `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlackjackEval {
    #[serde(default = "default_engine")]
    pub engine: EngineConfig,
    #[serde(default = "default_episodes")]
    pub episodes: u64,
    /// Episode counts at which errors are measured.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: Vec<u64>,
    /// Take a uniformly random first action in every hand, so that every
    /// state-action pair is visited.
    #[serde(default = "yes")]
    pub exploring_starts: bool,
}

impl Default for BlackjackEval {
    fn default() -> Self {
        Self {
            engine: default_engine(),
            episodes: default_episodes(),
            checkpoints: default_checkpoints(),
            exploring_starts: true,
        }
    }
}

/// Squared-error summaries over all 400 state-action pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointErrors {
    pub episode: u64,
    pub cnc_mse: f64,
    pub cnc_maxse: f64,
    pub mc_mse: f64,
    pub mc_maxse: f64,
}

const ACTIONS: usize = 2;

fn errors(episode: u64, truth: &[f64], engine: &CncEngine, mc: &McBaseline) -> Result<CheckpointErrors, HarnessError> {
    let (mut cnc_sum, mut cnc_max, mut mc_sum, mut mc_max) = (0.0, 0.0f64, 0.0, 0.0f64);
    for s in 0..NUM_STATES {
        let q = engine.q_values(&[s])?;
        for a in 0..ACTIONS {
            let t = truth[s * ACTIONS + a];
            let e = (q[a] - t).powi(2);
            // an unvisited pair is estimated as 0
            let m = (mc.estimate(s, a).unwrap_or(0.0) - t).powi(2);
            cnc_sum += e;
            cnc_max = cnc_max.max(e);
            mc_sum += m;
            mc_max = mc_max.max(m);
        }
    }
    let n = (NUM_STATES * ACTIONS) as f64;
    Ok(CheckpointErrors {
        episode,
        cnc_mse: cnc_sum / n,
        cnc_maxse: cnc_max,
        mc_mse: mc_sum / n,
        mc_maxse: mc_max,
    })
}

fn run_trial(spec: &BlackjackEval, truth: &[f64], seed: u64) -> Result<Vec<CheckpointErrors>, HarnessError> {
    let target = Blackjack::target_policy();
    let mut env_rng = stream(seed, Stream::Env);
    let mut policy_rng = stream(seed, Stream::Policy);
    let mut explore_rng = stream(seed, Stream::Explore);
    let mut env = Blackjack::new(&mut env_rng);
    let mut engine = CncEngine::for_env(&spec.engine, &env, seed)?;
    let mut mc = McBaseline::new(NUM_STATES, ACTIONS);
    let mut out = Vec::with_capacity(spec.checkpoints.len());
    let mut next_checkpoint = spec.checkpoints.iter().peekable();
    let mut hand = Vec::new();
    engine.begin(&[env.state()]);
    for episode in 0..=spec.episodes {
        while next_checkpoint.next_if(|&&c| c == episode).is_some() {
            out.push(errors(episode, truth, &engine, &mc)?);
        }
        if episode == spec.episodes {
            break;
        }
        hand.clear();
        loop {
            let s = env.state();
            let a = if hand.is_empty() && spec.exploring_starts {
                explore_rng.random_range(0..ACTIONS)
            } else {
                target.sample(s, &mut policy_rng)
            };
            let step = env.step(a, &mut env_rng)?;
            engine.step(a, &[env.state()], step.reward, step.episode_end)?;
            hand.push((s, a, step.reward));
            if step.episode_end {
                break;
            }
        }
        mc.update(&hand);
    }
    Ok(out)
}

/// Runs the evaluation and writes `blackjack_trials.csv` (one row per
/// trial and checkpoint) and `blackjack_mse.csv` (means, standard errors
/// and medians across trials).
pub fn run_blackjack_eval(spec: &BlackjackEval, seed: u64, trials: usize, out: &Path) -> Result<Report, HarnessError> {
    let mut checkpoints = spec.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    if checkpoints.iter().any(|&c| c > spec.episodes) {
        return Err(HarnessError::Config("checkpoints must not exceed the episode budget".into()));
    }
    let spec = BlackjackEval {
        checkpoints,
        ..spec.clone()
    };
    let target = Blackjack::target_policy();
    let bound = Blackjack::longest_episode(&target, spec.exploring_starts);
    if spec.engine.horizon < bound {
        return Err(HarnessError::Config(format!(
            "horizon m = {} is shorter than the longest hand ({bound} steps)",
            spec.engine.horizon
        )));
    }
    let mdp = Blackjack::exact_mdp(&target)?;
    let q = q_via_dp(&mdp, mdp.policy(), spec.engine.horizon);
    let truth: Vec<f64> = (0..NUM_STATES * ACTIONS)
        .map(|i| q.get(i / ACTIONS, i % ACTIONS).expect("dp defines every pair"))
        .collect();

    let per_trial: Vec<Vec<CheckpointErrors>> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(&spec, &truth, trial_seed(seed, t as u64)))
        .collect::<Result<_, _>>()?;

    let mut files = Vec::new();
    let mut trial_csv = String::from("trial,episode,cnc_mse,cnc_maxse,mc_mse,mc_maxse\n");
    for (t, rows) in per_trial.iter().enumerate() {
        for r in rows {
            let _ = writeln!(
                trial_csv,
                "{t},{},{:?},{:?},{:?},{:?}",
                r.episode, r.cnc_mse, r.cnc_maxse, r.mc_mse, r.mc_maxse
            );
        }
    }
    write_output(out, &mut files, "blackjack_trials.csv", &trial_csv)?;

    let column = |i: usize, f: fn(&CheckpointErrors) -> f64| -> Vec<f64> { per_trial.iter().map(|rows| f(&rows[i])).collect() };
    let metrics: [fn(&CheckpointErrors) -> f64; 4] = [|r| r.cnc_mse, |r| r.cnc_maxse, |r| r.mc_mse, |r| r.mc_maxse];
    let mut summary = String::from(
        "episode,cnc_mse,cnc_mse_se,cnc_maxse,cnc_maxse_se,mc_mse,mc_mse_se,mc_maxse,mc_maxse_se,\
         cnc_mse_median,cnc_maxse_median,mc_mse_median,mc_maxse_median\n",
    );
    // medians[i] = [cnc_mse, cnc_maxse, mc_mse, mc_maxse]
    let mut medians = Vec::new();
    for (i, &episode) in spec.checkpoints.iter().enumerate() {
        let _ = write!(summary, "{episode}");
        for f in metrics {
            let v = column(i, f);
            let _ = write!(summary, ",{:?},{:?}", mean(&v), std_error(&v));
        }
        let med: Vec<f64> = metrics.iter().map(|&f| median(&column(i, f))).collect();
        for m in &med {
            let _ = write!(summary, ",{m:?}");
        }
        summary.push('\n');
        medians.push((episode, med));
    }
    write_output(out, &mut files, "blackjack_mse.csv", &summary)?;

    Ok(Report {
        experiment: "eval-blackjack",
        checks: blackjack_checks(&medians),
        files,
    })
}

/// Median-over-trials checks: the error falls by a factor of ten from the
/// 1k checkpoint to the last, tracks Monte Carlo from 10k on, and the
/// maximum error does not rise over the last three checkpoints.
fn blackjack_checks(medians: &[(u64, Vec<f64>)]) -> Vec<Check> {
    let mut checks = Vec::new();
    let at = |e: u64| medians.iter().find(|(ep, _)| *ep == e).map(|(_, m)| m);
    if let (Some(early), Some((last_ep, last))) = (at(1_000), medians.last()) {
        let ratio = last[0] / early[0];
        checks.push(Check::new(
            "mse-decay",
            ratio < 0.1,
            format!("median cnc mse {:.3e} at {last_ep} vs {:.3e} at 1000 (ratio {ratio:.3})", last[0], early[0]),
        ));
    }
    let tracked: Vec<_> = medians.iter().filter(|(ep, _)| *ep >= 10_000).collect();
    if !tracked.is_empty() {
        let worst = tracked
            .iter()
            .map(|(ep, m)| (*ep, m[0] / m[2]))
            .fold((0, 0.0f64), |acc, x| if x.1 > acc.1 { x } else { acc });
        checks.push(Check::new(
            "tracks-monte-carlo",
            worst.1 <= 1.5,
            format!("largest cnc/mc mse ratio {:.3} (episode {})", worst.1, worst.0),
        ));
    }
    if medians.len() >= 3 {
        let tail = &medians[medians.len() - 3..];
        let values: Vec<f64> = tail.iter().map(|(_, m)| m[1]).collect();
        checks.push(Check::new(
            "maxse-non-increasing",
            values.windows(2).all(|w| w[1] <= w[0]),
            format!(
                "median cnc max squared error over the last checkpoints: {}",
                values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
            ),
        ));
    }
    checks
}
