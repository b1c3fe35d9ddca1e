use cnc_core::coding::snapshot::{decode_sequential_bytes, decode_state_bytes, encode_sequential, encode_state};
use cnc_core::coding::{
    logloss, logloss_trace, lz_parse, lz_unparse, Adagrad, Alphabet, CtwModel, CtwTree, DirichletModel, FactoredCtw,
    FactoredLogistic, FactoredSad, FrequencyModel, GridLayout, LzModel, SadCounter, SadModel, SequentialModel,
    SoftmaxRegression, StateModel, Symbol,
};
use proptest::prelude::*;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

fn normalized_models(k: usize) -> Vec<Box<dyn SequentialModel>> {
    let a = Alphabet::new(k).unwrap();
    vec![
        Box::new(FrequencyModel::new(a)),
        Box::new(DirichletModel::kt(a)),
        Box::new(DirichletModel::new(a, 2.0).unwrap()),
        Box::new(SadModel::new(a)),
        Box::new(CtwModel::new(a, 0).unwrap()),
        Box::new(CtwModel::new(a, 1).unwrap()),
        Box::new(CtwModel::new(a, 3).unwrap()),
    ]
}

fn seq_strategy() -> impl Strategy<Value = (usize, Vec<Symbol>)> {
    (1usize..6).prop_flat_map(|k| (Just(k), prop::collection::vec(0..k, 0..120)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictive_distributions_sum_to_one((k, seq) in seq_strategy()) {
        for mut m in normalized_models(k) {
            for &x in &seq {
                let total: f64 = m.probs().iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-9, "{m:?} sums to {total}");
                prop_assert!(m.probs().iter().all(|p| (0.0..=1.0).contains(p)));
                m.update(x).unwrap();
            }
            let total: f64 = m.probs().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn logloss_obeys_the_chain_rule((k, seq) in seq_strategy()) {
        for mut m in normalized_models(k) {
            let mut replay = m.clone();
            let (bits, trace) = logloss_trace(m.as_mut(), &seq).unwrap();
            let product: f64 = trace.iter().product();
            let joint = (-bits).exp2();
            prop_assert!((joint - product).abs() <= 1e-9 * product.max(f64::MIN_POSITIVE));
            prop_assert_eq!(logloss(replay.as_mut(), &seq).unwrap(), bits);
        }
    }

    #[test]
    fn ctw_weighting_recursion_holds_after_every_update(
        (k, seq) in seq_strategy(),
        depth in 0usize..4,
    ) {
        let mut m = CtwModel::new(Alphabet::new(k).unwrap(), depth).unwrap();
        for &x in &seq {
            m.update(x).unwrap();
            prop_assert!(m.tree().recursion_error() <= 1e-9);
        }
    }

    #[test]
    fn lz_parse_is_distinct_and_invertible(seq in prop::collection::vec(0usize..4, 0..200)) {
        let phrases = lz_parse(&seq);
        prop_assert_eq!(lz_unparse(&phrases), seq);
        let complete: Vec<_> = phrases.iter().filter(|p| p.complete).map(|p| (p.prefix, p.symbol)).collect();
        let mut dedup = complete.clone();
        dedup.sort();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), complete.len());
        prop_assert!(phrases.iter().rev().skip(1).all(|p| p.complete));
    }

    #[test]
    fn lz_scores_lie_in_unit_interval((k, seq) in seq_strategy()) {
        let mut m = LzModel::new(Alphabet::new(k).unwrap());
        for &x in &seq {
            for y in 0..k {
                let s = m.score(y).unwrap();
                prop_assert!(s > 0.0 && s <= 1.0);
            }
            m.extend(&[x]).unwrap();
        }
    }

    #[test]
    fn symbol_model_snapshots_round_trip((k, seq) in seq_strategy()) {
        let mut models = normalized_models(k);
        models.push(Box::new(LzModel::new(Alphabet::new(k).unwrap())));
        for mut m in models {
            for &x in &seq {
                m.update(x).unwrap();
            }
            let bytes = encode_sequential(m.as_ref());
            let restored = decode_sequential_bytes(&bytes).unwrap();
            prop_assert_eq!(encode_sequential(restored.as_ref()), bytes);
            prop_assert_eq!(restored.probs(), m.probs());
            prop_assert_eq!(restored.history_len(), m.history_len());
        }
    }

    #[test]
    fn factored_models_add_up_and_round_trip(
        frames in prop::collection::vec(prop::collection::vec(0usize..3, 12), 1..12),
        depth in 0usize..5,
    ) {
        let layout = GridLayout::new(4, 3, 3).unwrap();
        let mut ctw = FactoredCtw::new(layout, depth).unwrap();
        let mut sad = FactoredSad::new(layout, 2).unwrap();
        let mut lr = FactoredLogistic::new(layout, depth, 0.1, 1e-8).unwrap();
        for f in &frames {
            let parts = ctw.factor_log2_probs(f).unwrap();
            prop_assert_eq!(ctw.log2_prob(f).unwrap(), parts.iter().fold(0.0, |a, b| a + b));
            let parts = sad.factor_log2_probs(f).unwrap();
            prop_assert_eq!(sad.log2_prob(f).unwrap(), parts.iter().fold(0.0, |a, b| a + b));
            let parts = lr.factor_log2_probs(f).unwrap();
            prop_assert_eq!(lr.log2_prob(f).unwrap(), parts.iter().fold(0.0, |a, b| a + b));
            ctw.update(f).unwrap();
            sad.update(f).unwrap();
            lr.update(f).unwrap();
        }
        let probe = &frames[0];
        let models: [&dyn StateModel; 3] = [&ctw, &sad, &lr];
        for m in models {
            let bytes = encode_state(m);
            let restored = decode_state_bytes(&bytes).unwrap();
            prop_assert_eq!(encode_state(restored.as_ref()), bytes);
            prop_assert_eq!(restored.log2_prob(probe).unwrap(), m.log2_prob(probe).unwrap());
        }
    }
}

#[test]
fn frequency_estimator_matches_counts_exactly() {
    let mut m = FrequencyModel::new(Alphabet::new(3).unwrap());
    let seq = [2, 0, 2, 2, 1, 0, 2];
    for (n, &x) in seq.iter().enumerate() {
        m.update(x).unwrap();
        let seen = &seq[..=n];
        for y in 0..3 {
            let c = seen.iter().filter(|&&s| s == y).count();
            // c / (n + 1) as the nearest double
            assert_eq!(m.prob(y).unwrap(), c as f64 / (n + 1) as f64);
        }
    }
}

#[test]
fn sad_is_normalized_over_a_large_sparse_alphabet() {
    let mut c = SadCounter::new(1000.0).unwrap();
    for _ in 0..3 {
        c.update(7);
    }
    let total: f64 = (0..1000).map(|k| c.prob(k)).sum();
    assert!((total - 1.0).abs() <= 1e-9, "{total}");
}

/// Dirichlet(½) block probability in closed form:
/// `Γ(K/2) / Γ(n + K/2) · Π_x Γ(c_x + ½) / Γ(½)`.
fn kt_block_ln(counts: &[u64]) -> f64 {
    let k = counts.len() as f64;
    let n: u64 = counts.iter().sum();
    ln_gamma(k / 2.0) - ln_gamma(n as f64 + k / 2.0)
        + counts.iter().map(|&c| ln_gamma(c as f64 + 0.5) - ln_gamma(0.5)).sum::<f64>()
}

#[test]
fn ctw_estimators_match_the_kt_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in [2usize, 3, 5] {
        let mut tree = CtwTree::new(k, k, 2).unwrap();
        let mut ctx = vec![0usize; 2];
        for _ in 0..500 {
            let x = rng.random_range(0..k);
            tree.update(&ctx, x).unwrap();
            ctx = vec![x, ctx[0]];
        }
        for (counts, lpe, _) in tree.node_stats() {
            let counts: Vec<u64> = counts.iter().map(|&c| c as u64).collect();
            let expected = kt_block_ln(&counts);
            assert!((lpe - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{lpe} vs {expected}");
        }
    }
}

struct MarkovSource {
    rows: Vec<WeightedIndex<f64>>,
    matrix: Vec<Vec<f64>>,
}

impl MarkovSource {
    fn new(matrix: Vec<Vec<f64>>) -> Self {
        let rows = matrix.iter().map(|r| WeightedIndex::new(r).unwrap()).collect();
        Self { rows, matrix }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Symbol> {
        let mut s = 0;
        (0..n)
            .map(|_| {
                s = self.rows[s].sample(rng);
                s
            })
            .collect()
    }

    /// Stationary distribution by power iteration to a fixed point.
    fn stationary(&self) -> Vec<f64> {
        let k = self.matrix.len();
        let mut pi = vec![1.0 / k as f64; k];
        for _ in 0..10_000 {
            let mut next = vec![0.0; k];
            for (i, row) in self.matrix.iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    next[j] += pi[i] * p;
                }
            }
            pi = next;
        }
        pi
    }

    fn entropy_rate(&self) -> f64 {
        let pi = self.stationary();
        self.matrix
            .iter()
            .zip(&pi)
            .map(|(row, w)| w * row.iter().filter(|&&p| p > 0.0).map(|p| -p * p.log2()).sum::<f64>())
            .sum()
    }
}

#[test]
fn ctw_approaches_the_entropy_rate_of_a_markov_source() {
    let source = MarkovSource::new(vec![vec![0.8, 0.15, 0.05], vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.8]]);
    let h = source.entropy_rate();
    let seq = source.sample(&mut ChaCha8Rng::seed_from_u64(2024), 10_000);
    let mut m = CtwModel::new(Alphabet::new(3).unwrap(), 2).unwrap();
    let per_symbol = logloss(&mut m, &seq).unwrap() / seq.len() as f64;
    assert!((per_symbol - h).abs() <= 0.05, "log-loss {per_symbol} vs entropy rate {h}");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median prediction error at n, 4n and 16n symbols; returns the two
/// quadrupling ratios.
fn error_ratios(source: &MarkovSource, depth: usize, trials: u64) -> [f64; 2] {
    let checkpoints = [250usize, 1000, 4000];
    let k = source.matrix.len();
    let mut errs = vec![Vec::new(); 3];
    for t in 0..trials {
        let seq = source.sample(&mut ChaCha8Rng::seed_from_u64(t), checkpoints[2]);
        let mut m = CtwModel::new(Alphabet::new(k).unwrap(), depth).unwrap();
        for (i, &x) in seq.iter().enumerate() {
            m.update(x).unwrap();
            if let Some(c) = checkpoints.iter().position(|&c| c == i + 1) {
                let truth = &source.matrix[x];
                let err: f64 = m.probs().iter().zip(truth).map(|(p, q)| (p - q).abs()).sum();
                errs[c].push(err);
            }
        }
    }
    let med: Vec<f64> = errs.into_iter().map(median).collect();
    [med[0] / med[1], med[1] / med[2]]
}

#[test]
fn ctw_error_shrinks_at_root_n_rate() {
    let iid = MarkovSource::new(vec![vec![0.6, 0.3, 0.1]; 3]);
    let markov = MarkovSource::new(vec![vec![0.7, 0.3], vec![0.2, 0.8]]);
    for (name, source, depth) in [("iid", &iid, 1), ("markov", &markov, 2)] {
        for r in error_ratios(source, depth, 400) {
            assert!((1.5..=3.0).contains(&r), "{name}: ratio {r}");
        }
    }
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    for _ in 0..100 {
        let classes = rng.random_range(2..6);
        let dim = rng.random_range(1..8);
        let mut m = SoftmaxRegression::new(classes, dim).unwrap();
        m.weights_mut().iter_mut().for_each(|w| *w = rng.random_range(-2.0..2.0));
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let y = rng.random_range(0..classes);
        let (_, grad) = m.loss_and_grad(&x, y);
        let numeric: Vec<f64> = (0..grad.len())
            .map(|j| {
                let w0 = m.weights()[j];
                m.weights_mut()[j] = w0 + h;
                let up = m.loss(&x, y);
                m.weights_mut()[j] = w0 - h;
                let down = m.loss(&x, y);
                m.weights_mut()[j] = w0;
                (up - down) / (2.0 * h)
            })
            .collect();
        let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs())).max(1e-8);
        let worst = grad.iter().zip(&numeric).fold(0.0f64, |a, (g, n)| a.max((g - n).abs()));
        assert!(worst / scale <= 1e-4, "relative error {}", worst / scale);
    }
}

#[test]
fn adagrad_learns_a_separable_stream() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (classes, dim) = (3, 6);
    let teacher: Vec<f64> = (0..classes * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let data: Vec<(Vec<f64>, usize)> = (0..1000)
        .map(|_| {
            let mut x: Vec<f64> = (0..dim - 1).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            x.push(1.0);
            let y = (0..classes)
                .max_by(|&a, &b| {
                    let s = |k: usize| teacher[k * dim..(k + 1) * dim].iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
                    s(a).total_cmp(&s(b))
                })
                .unwrap();
            (x, y)
        })
        .collect();
    let mut model = SoftmaxRegression::new(classes, dim).unwrap();
    let mut opt = Adagrad::new(classes * dim, 0.1, 1e-8).unwrap();
    let mut last_accum = vec![0.0; classes * dim];
    for (x, y) in &data {
        let (_, g) = model.loss_and_grad(x, *y);
        opt.step(model.weights_mut(), &g);
        assert!(opt.accumulator().iter().zip(&last_accum).all(|(a, b)| a >= b));
        last_accum = opt.accumulator().to_vec();
    }
    let train: f64 = data.iter().map(|(x, y)| model.loss(x, *y)).sum::<f64>() / data.len() as f64;
    let uniform = (classes as f64).ln();
    assert!(train < uniform, "{train} vs uniform {uniform}");
}

#[test]
fn snapshots_are_stable_across_runs() {
    let build = || {
        let mut m = CtwModel::new(Alphabet::new(4).unwrap(), 2).unwrap();
        for x in [0, 1, 3, 3, 2, 0, 1] {
            m.update(x).unwrap();
        }
        encode_sequential(&m)
    };
    assert_eq!(build(), build());
    assert_eq!(&build()[..4], b"CNCS");
}
