use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{mean, std_error};
use super::{write_output, Check, HarnessError, Report};
use crate::cnc::{CncEngine, EngineConfig, EpsilonSchedule};
use crate::coding::{ModelSpec, Symbol};
use crate::envs::{Environment, ExplicitMdp, MiniPong, MiniPongConfig, TabularEnv};
use crate::rng::{stream, trial_seed, Rng, Stream};

/// The environment a control run acts in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControlEnv {
    Minipong(MiniPongConfig),
    Explicit { path: PathBuf },
}

impl Default for ControlEnv {
    fn default() -> Self {
        ControlEnv::Minipong(MiniPongConfig::default())
    }
}

fn default_engine() -> EngineConfig {
    EngineConfig {
        horizon: 80,
        state_model: ModelSpec::FactoredSad { region: 4 },
        return_model: ModelSpec::Sad,
        epsilon: EpsilonSchedule::default(),
    }
}

fn default_steps() -> u64 {
    2_000_000
}

fn default_final_episodes() -> usize {
    50
}

fn default_report_every() -> u64 {
    10_000
}

fn default_margin() -> f64 {
    3.0
}

fn yes() -> bool {
    true
}

/// ε-greedy control with a CNC agent, compared with uniform random play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    #[serde(default)]
    pub env: ControlEnv,
    #[serde(default = "default_engine")]
    pub engine: EngineConfig,
    #[serde(default = "default_steps")]
    pub steps: u64,
    /// The final phase: this many last completed episodes per trial.
    #[serde(default = "default_final_episodes")]
    pub final_episodes: usize,
    /// Width of the reward-averaging buckets of the learning curve.
    #[serde(default = "default_report_every")]
    pub report_every: u64,
    /// Also run the uniform-random baseline and compare.
    #[serde(default = "yes")]
    pub baseline: bool,
    /// Required lead over the baseline, in combined standard errors.
    #[serde(default = "default_margin")]
    pub margin_se: f64,
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            env: ControlEnv::default(),
            engine: default_engine(),
            steps: default_steps(),
            final_episodes: default_final_episodes(),
            report_every: default_report_every(),
            baseline: true,
            margin_se: default_margin(),
        }
    }
}

/// What one trial of one agent produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// `(step at which it ended, score)` per completed episode.
    pub episodes: Vec<(u64, f64)>,
    /// Mean reward per `report_every` steps.
    pub curve: Vec<f64>,
    /// Mean score over the final phase.
    pub final_score: f64,
}

enum Agent<'a> {
    Cnc(&'a EngineConfig),
    Random,
}

fn make_env(spec: &ControlEnv, rng: &mut Rng) -> Result<Box<dyn Environment>, HarnessError> {
    Ok(match spec {
        ControlEnv::Minipong(c) => Box::new(MiniPong::new(c.clone(), rng)?),
        ControlEnv::Explicit { path } => {
            let mdp = ExplicitMdp::load(path)?;
            Box::new(TabularEnv::new(Arc::new(mdp)))
        }
    })
}

fn run_trial(spec: &ControlSpec, agent: Agent<'_>, seed: u64) -> Result<TrialOutcome, HarnessError> {
    let mut env_rng = stream(seed, Stream::Env);
    let mut explore_rng = stream(seed, Stream::Explore);
    let mut env = make_env(&spec.env, &mut env_rng)?;
    let mut engine = match agent {
        Agent::Cnc(config) => Some(CncEngine::for_env(config, env.as_ref(), seed)?),
        Agent::Random => None,
    };
    let actions = env.num_actions();
    let mut obs: Vec<Symbol> = Vec::new();
    env.observe(&mut obs);
    if let Some(e) = engine.as_mut() {
        e.begin(&obs);
    }
    let mut episodes = Vec::new();
    let mut curve = Vec::new();
    let (mut score, mut bucket) = (0.0, 0.0);
    for t in 0..spec.steps {
        let a = match engine.as_mut() {
            Some(e) => e.epsilon_greedy_action(&obs, t)?,
            None => explore_rng.random_range(0..actions),
        };
        let step = env.step(a, &mut env_rng)?;
        env.observe(&mut obs);
        if let Some(e) = engine.as_mut() {
            e.step(a, &obs, step.reward, step.episode_end)?;
        }
        score += step.reward;
        bucket += step.reward;
        if step.episode_end {
            episodes.push((t + 1, score));
            score = 0.0;
        }
        if (t + 1) % spec.report_every == 0 {
            curve.push(bucket / spec.report_every as f64);
            bucket = 0.0;
        }
    }
    let final_score = if episodes.is_empty() {
        // no episode structure: mean reward over the last tenth of the run
        let tail = (curve.len() / 10).max(1).min(curve.len());
        mean(&curve[curve.len() - tail..])
    } else {
        let k = spec.final_episodes.min(episodes.len());
        mean(&episodes[episodes.len() - k..].iter().map(|e| e.1).collect::<Vec<_>>())
    };
    Ok(TrialOutcome {
        episodes,
        curve,
        final_score,
    })
}

/// Runs the CNC agent (and optionally the random baseline) for `trials`
/// trials. Writes `control_episodes.csv`, `control_curve.csv` and
/// `control_summary.csv`.
pub fn run_control(spec: &ControlSpec, seed: u64, trials: usize, out: &Path) -> Result<Report, HarnessError> {
    if spec.steps == 0 || spec.report_every == 0 || spec.final_episodes == 0 {
        return Err(HarnessError::Config("steps, report_every and final_episodes must be positive".into()));
    }
    let run_agent = |agent: fn(&ControlSpec) -> Agent<'_>| -> Result<Vec<TrialOutcome>, HarnessError> {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial(spec, agent(spec), trial_seed(seed, t as u64)))
            .collect()
    };
    let mut agents = vec![("cnc", run_agent(|s| Agent::Cnc(&s.engine))?)];
    if spec.baseline {
        agents.push(("random", run_agent(|_| Agent::Random)?));
    }

    let mut files = Vec::new();
    let mut episodes_csv = String::from("agent,trial,episode,end_step,score\n");
    let mut summary_csv = String::from("agent,trial,final_score,episodes\n");
    for (name, outcomes) in &agents {
        for (t, o) in outcomes.iter().enumerate() {
            for (i, (end, score)) in o.episodes.iter().enumerate() {
                let _ = writeln!(episodes_csv, "{name},{t},{i},{end},{score:?}");
            }
            let _ = writeln!(summary_csv, "{name},{t},{:?},{}", o.final_score, o.episodes.len());
        }
    }
    write_output(out, &mut files, "control_episodes.csv", &episodes_csv)?;

    let mut curve_csv = String::from("agent,step,mean_reward,se_reward,epsilon\n");
    for (name, outcomes) in &agents {
        for k in 0..outcomes[0].curve.len() {
            let v: Vec<f64> = outcomes.iter().map(|o| o.curve[k]).collect();
            let step = (k as u64 + 1) * spec.report_every;
            let eps = if *name == "cnc" { spec.engine.epsilon.at(step) } else { 1.0 };
            let _ = writeln!(curve_csv, "{name},{step},{:?},{:?},{eps:?}", mean(&v), std_error(&v));
        }
    }
    write_output(out, &mut files, "control_curve.csv", &curve_csv)?;

    let finals = |o: &[TrialOutcome]| -> Vec<f64> { o.iter().map(|t| t.final_score).collect() };
    let mut checks = Vec::new();
    let cnc = finals(&agents[0].1);
    let (cnc_mean, cnc_se) = (mean(&cnc), std_error(&cnc));
    let _ = writeln!(summary_csv, "cnc,mean,{cnc_mean:?},\ncnc,se,{cnc_se:?},");
    if let Some((_, random)) = agents.get(1) {
        let random = finals(random);
        let (r_mean, r_se) = (mean(&random), std_error(&random));
        let _ = writeln!(summary_csv, "random,mean,{r_mean:?},\nrandom,se,{r_se:?},");
        let combined = (cnc_se.powi(2) + r_se.powi(2)).sqrt();
        let lead = cnc_mean - r_mean;
        // a single trial has no inter-trial error to compare against
        checks.push(Check::new(
            "beats-random",
            trials >= 2 && lead >= spec.margin_se * combined,
            format!(
                "final score {cnc_mean:.3} ± {cnc_se:.3} vs random {r_mean:.3} ± {r_se:.3}: lead {lead:.3} = {:.2} combined SE (need {})",
                lead / combined,
                spec.margin_se
            ),
        ));
    }
    write_output(out, &mut files, "control_summary.csv", &summary_csv)?;
    Ok(Report {
        experiment: "control",
        checks,
        files,
    })
}
