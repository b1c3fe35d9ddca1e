use std::sync::Arc;
use std::time::Instant;

use cnc_core::cnc::{CncEngine, EngineConfig, EpsilonSchedule, ReturnAlphabet};
use cnc_core::coding::snapshot::{encode_sequential, encode_state};
use cnc_core::coding::{build_state_model, build_symbol_model, Alphabet, ModelSpec, ObservationShape};
use cnc_core::envs::{run_policy, sumset, Environment, ExplicitMdp, TabularEnv, TabularPolicy, Transition};
use cnc_core::oracle::{build_augmented_chain, build_snake_chain, random_ir_ap_mdp, solve_snake, RandomMdpParams};
use cnc_core::rng::{stream, Stream};
use proptest::prelude::*;
use rand::Rng as _;

fn config(m: usize, state_model: ModelSpec, return_model: ModelSpec) -> EngineConfig {
    EngineConfig {
        horizon: m,
        state_model,
        return_model,
        epsilon: EpsilonSchedule::default(),
    }
}

fn frequency(m: usize) -> EngineConfig {
    config(m, ModelSpec::Frequency, ModelSpec::Frequency)
}

#[test]
fn buckets_receive_exactly_the_filtered_subsequences() {
    let mut rng = stream(31, Stream::Trial);
    for case in 0..10u64 {
        let mdp = Arc::new(random_ir_ap_mdp(&mut rng, &RandomMdpParams::default()));
        let m = rng.random_range(1..=4);
        let mut env = TabularEnv::new(mdp.clone());
        let traj = run_policy(
            &mut env,
            mdp.policy(),
            2_000,
            &mut stream(case, Stream::Env),
            &mut stream(case, Stream::Policy),
        )
        .unwrap();
        let env = TabularEnv::new(mdp.clone());
        let mut engine = CncEngine::for_env(&frequency(m), &env, case).unwrap();
        engine.begin(&[traj.start]);
        for s in &traj.steps {
            engine.step(s.action, &[s.state], s.reward, false).unwrap();
        }

        // keep s_{i-1} whenever a_i = a and r_i + … + r_{i+m-1} = z
        let returns = engine.returns().clone();
        let shape = ObservationShape::Atomic { states: mdp.num_states() };
        let na = mdp.num_actions();
        let mut states = vec![build_state_model(&ModelSpec::Frequency, shape).unwrap(); returns.len() * na];
        let mut zs = vec![build_symbol_model(&ModelSpec::Frequency, Alphabet::new(returns.len()).unwrap()).unwrap(); na];
        let n = traj.steps.len();
        for i in 0..=n - m {
            let prev = if i == 0 { traj.start } else { traj.steps[i - 1].state };
            let a = traj.steps[i].action;
            let z: f64 = traj.steps[i..i + m].iter().map(|s| s.reward).sum();
            let j = returns.index_of(z).unwrap();
            states[j * na + a].update(&[prev]).unwrap();
            zs[a].update(j).unwrap();
        }
        let mut total = 0;
        for j in 0..returns.len() {
            for a in 0..na {
                assert_eq!(encode_state(engine.state_model(j, a)), encode_state(states[j * na + a].as_ref()));
                total += engine.bucket_updates(j, a);
            }
        }
        for a in 0..na {
            assert_eq!(encode_sequential(engine.return_model(a)), encode_sequential(zs[a].as_ref()));
        }
        assert_eq!(total, (n - m + 1) as u64);
    }
}

#[test]
fn episode_boundaries_truncate_returns() {
    let cfg = config(3, ModelSpec::Frequency, ModelSpec::Frequency);
    let returns = ReturnAlphabet::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let shape = ObservationShape::Atomic { states: 4 };
    let mut e = CncEngine::new(&cfg, shape, 1, &[0.0, 1.0], returns, true, 0).unwrap();
    e.begin(&[0]);
    e.step(0, &[1], 1.0, false).unwrap();
    e.step(0, &[2], 1.0, true).unwrap();
    // both steps drained with the returns left in their episode
    assert_eq!(e.bucket_updates(2, 0), 1);
    assert_eq!(e.bucket_updates(1, 0), 1);
    assert!(e.window().is_empty());
}

fn two_state_mdp() -> ExplicitMdp {
    let t = |next, reward, prob| Transition { next, reward, prob };
    let kernel = vec![
        vec![t(0, 0, 0.7), t(1, 1, 0.3)],
        vec![t(1, 1, 0.5), t(0, 0, 0.5)],
        vec![t(0, 1, 0.6), t(1, 0, 0.4)],
        vec![t(0, 0, 0.9), t(1, 1, 0.1)],
    ];
    let policy = TabularPolicy::new(vec![vec![0.5, 0.5], vec![0.3, 0.7]]).unwrap();
    ExplicitMdp::new(2, 2, vec![0.0, 1.0], 0, kernel, Some(policy)).unwrap()
}

#[test]
fn frequency_posterior_approaches_the_stationary_conditional() {
    let mdp = Arc::new(two_state_mdp());
    let m = 3;
    let chain = build_augmented_chain(&mdp, mdp.policy()).unwrap();
    let snake = build_snake_chain(&chain, m, 1_000_000).unwrap();
    let exact = solve_snake(&snake, &chain).unwrap();

    let mut env = TabularEnv::new(mdp.clone());
    let mut engine = CncEngine::for_env(&frequency(m), &env, 1).unwrap();
    assert_eq!(engine.returns(), exact.returns());
    let mut env_rng = stream(32, Stream::Env);
    let mut policy_rng = stream(32, Stream::Policy);
    engine.begin(&[env.state()]);
    let traj = run_policy(&mut env, mdp.policy(), 1_000_000, &mut env_rng, &mut policy_rng).unwrap();
    for s in &traj.steps {
        engine.step(s.action, &[s.state], s.reward, false).unwrap();
    }
    let mut worst: f64 = 0.0;
    for s in 0..2 {
        for a in 0..2 {
            let w = engine.return_posterior(&[s], a).unwrap();
            for (z, p) in w.iter().enumerate() {
                worst = worst.max((p - exact.z_given_sa(z, s, a).unwrap()).abs());
            }
        }
    }
    assert!(worst <= 1e-2, "sup-norm {worst}");
}

#[test]
fn identical_state_models_leave_the_return_prior() {
    // a single state: every bucket assigns it probability one once updated
    let cfg = config(1, ModelSpec::Frequency, ModelSpec::Dirichlet { alpha: 0.5 });
    let returns = ReturnAlphabet::new(vec![-1.0, 1.0]).unwrap();
    let mut e = CncEngine::new(&cfg, ObservationShape::Atomic { states: 1 }, 1, &[-1.0, 1.0], returns, false, 0).unwrap();
    e.begin(&[0]);
    for r in [1.0, 1.0, -1.0, 1.0] {
        e.step(0, &[0], r, false).unwrap();
    }
    let w = e.return_posterior(&[0], 0).unwrap();
    let prior = e.return_model(0).probs();
    for (a, b) in w.iter().zip(&prior) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn greedy_ties_are_uniform() {
    let cfg = config(1, ModelSpec::Sad, ModelSpec::Sad);
    let returns = ReturnAlphabet::new(vec![0.0, 1.0]).unwrap();
    let actions = 4;
    let mut e = CncEngine::new(&cfg, ObservationShape::Atomic { states: 2 }, actions, &[0.0, 1.0], returns, false, 9).unwrap();
    let draws = 10_000;
    let mut counts = vec![0u32; actions];
    for _ in 0..draws {
        counts[e.greedy_action(&[0]).unwrap()] += 1;
    }
    let p = 1.0 / actions as f64;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sd, "{c}");
    }
}

#[test]
fn greedy_prefers_the_action_with_the_better_return() {
    let cfg = config(1, ModelSpec::Dirichlet { alpha: 0.5 }, ModelSpec::Dirichlet { alpha: 0.5 });
    let returns = ReturnAlphabet::new(vec![-1.0, 1.0]).unwrap();
    let mut e = CncEngine::new(&cfg, ObservationShape::Atomic { states: 1 }, 3, &[-1.0, 1.0], returns, false, 0).unwrap();
    e.begin(&[0]);
    for _ in 0..20 {
        e.step(0, &[0], -1.0, false).unwrap();
        e.step(1, &[0], 1.0, false).unwrap();
        e.step(2, &[0], -1.0, false).unwrap();
    }
    for _ in 0..50 {
        assert_eq!(e.greedy_action(&[0]).unwrap(), 1);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Engine with `k` returns and every bucket trained.
fn trained_engine(k: usize) -> CncEngine {
    let rewards: Vec<f64> = (0..k).map(|i| i as f64).collect();
    let cfg = config(1, ModelSpec::Ctw { depth: 2 }, ModelSpec::Dirichlet { alpha: 0.5 });
    let shape = ObservationShape::Atomic { states: 16 };
    let returns = ReturnAlphabet::new(rewards.clone()).unwrap();
    let mut e = CncEngine::new(&cfg, shape, 2, &rewards, returns, false, 0).unwrap();
    let mut rng = stream(33, Stream::Trial);
    e.begin(&[0]);
    for _ in 0..20 * k {
        let r = rewards[rng.random_range(0..k)];
        e.step(rng.random_range(0..2), &[rng.random_range(0..16)], r, false).unwrap();
    }
    e
}

/// Seconds per `q_value` call.
fn query_time(e: &CncEngine, queries: usize) -> f64 {
    let started = Instant::now();
    let mut acc = 0.0;
    for i in 0..queries {
        acc += e.q_value(&[i % 16], i % 2).unwrap().value;
    }
    std::hint::black_box(acc);
    started.elapsed().as_secs_f64() / queries as f64
}

#[test]
fn query_cost_is_linear_in_the_return_alphabet() {
    for k in [16, 32, 64] {
        let (small, large) = (trained_engine(k), trained_engine(2 * k));
        let queries = 160_000 / k;
        // alternate so that background load hits both sides alike
        let (mut ts, mut tl) = (Vec::new(), Vec::new());
        for _ in 0..15 {
            ts.push(query_time(&small, queries));
            tl.push(query_time(&large, queries));
        }
        let ratio = median(tl) / median(ts);
        assert!(ratio <= 2.5, "|Z| {k} -> {}: ratio {ratio}", 2 * k);
    }
}

#[test]
fn return_alphabet_respects_the_range_bound() {
    for m in 1..=6 {
        let rewards = [-1.0, 0.0, 2.0];
        let z = ReturnAlphabet::new(sumset(&rewards, m, true)).unwrap();
        assert!(z.len() as f64 <= m as f64 * 3.0 + 1.0);
        assert_eq!(z.values().first(), Some(&(-(m as f64))));
        assert_eq!(z.values().last(), Some(&(2.0 * m as f64)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn posteriors_stay_normalized_and_values_bounded(
        seed in any::<u64>(),
        m in 1usize..4,
        model in 0usize..4,
    ) {
        let spec = [
            ModelSpec::Sad,
            ModelSpec::Dirichlet { alpha: 0.5 },
            ModelSpec::Ctw { depth: 2 },
            ModelSpec::Lz,
        ][model].clone();
        let rewards = [-1.0, 0.0, 1.0];
        let returns = ReturnAlphabet::new(sumset(&rewards, m, true)).unwrap();
        let cfg = config(m, spec, ModelSpec::Sad);
        let shape = ObservationShape::Atomic { states: 5 };
        let mut e = CncEngine::new(&cfg, shape, 3, &rewards, returns, false, seed).unwrap();
        let mut rng = stream(seed, Stream::Trial);
        e.begin(&[0]);
        for _ in 0..60 {
            e.step(rng.random_range(0..3), &[rng.random_range(0..5)], rewards[rng.random_range(0..3)], false).unwrap();
            let s = rng.random_range(0..5);
            for a in 0..3 {
                let q = e.q_value(&[s], a).unwrap();
                let total: f64 = q.posterior.iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-9);
                prop_assert!(q.value >= -(m as f64) - 1e-9 && q.value <= m as f64 + 1e-9);
            }
        }
    }
}
