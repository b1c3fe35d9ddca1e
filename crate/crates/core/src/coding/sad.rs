use rustc_hash::FxHashMap;

use super::snapshot::{tag, SnapshotReader, SnapshotWriter};
use super::{Alphabet, CodingError, SequentialModel, Symbol};

/// Sparse adaptive Dirichlet counts over a possibly huge alphabet of
/// `declared` symbols, keyed by `u64`.
///
/// With `n` observations of `m` distinct symbols, a seen symbol gets
/// `count / (n + β)` and every unseen symbol shares the escape mass
/// `β / (n + β)` evenly, where `β = max(1, m) / 2`. Once every symbol of
/// the alphabet has been observed there is nothing left to escape to and
/// `β = 0`, which keeps the distribution normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SadCounter {
    declared: f64,
    counts: FxHashMap<u64, u64>,
    total: u64,
}

impl SadCounter {
    pub fn new(declared: f64) -> Result<Self, CodingError> {
        if !(declared.is_finite() && declared >= 1.0) {
            return Err(CodingError::InvalidParameter(format!(
                "SAD alphabet size must be at least 1, got {declared}"
            )));
        }
        Ok(Self {
            declared,
            counts: FxHashMap::default(),
            total: 0,
        })
    }

    pub fn declared_size(&self) -> f64 {
        self.declared
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, key: u64) -> u64 {
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn escape_mass(&self) -> f64 {
        if self.distinct() as f64 >= self.declared {
            0.0
        } else {
            self.distinct().max(1) as f64 / 2.0
        }
    }

    pub fn prob(&self, key: u64) -> f64 {
        let beta = self.escape_mass();
        let denom = self.total as f64 + beta;
        match self.counts.get(&key) {
            Some(&c) => c as f64 / denom,
            None => {
                let unseen = self.declared - self.distinct() as f64;
                if unseen <= 0.0 {
                    // every symbol has been observed; an unseen key cannot exist
                    0.0
                } else {
                    beta / (denom * unseen)
                }
            }
        }
    }

    pub fn log2_prob(&self, key: u64) -> f64 {
        self.prob(key).log2()
    }

    pub fn update(&mut self, key: u64) {
        *self.counts.entry(key).or_insert(0) += 1;
        self.total += 1;
    }

    fn sorted_entries(&self) -> Vec<(u64, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(&k, &c)| (k, c)).collect();
        v.sort_unstable();
        v
    }

    /// Payload: `declared: f64 | pairs: u64 | (key: u64, count: u64)*`
    /// with keys ascending.
    pub(crate) fn write_payload(&self, w: &mut SnapshotWriter) {
        w.f64(self.declared);
        let entries = self.sorted_entries();
        w.usize(entries.len());
        for (k, c) in entries {
            w.u64(k);
            w.u64(c);
        }
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let mut s = Self::new(r.f64()?)?;
        let n = r.usize()?;
        for _ in 0..n {
            let k = r.u64()?;
            let c = r.u64()?;
            s.counts.insert(k, c);
            s.total += c;
        }
        Ok(s)
    }
}

/// [`SadCounter`] over an ordinary finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct SadModel {
    alphabet: Alphabet,
    counter: SadCounter,
}

impl SadModel {
    pub fn new(alphabet: Alphabet) -> Self {
        Self {
            alphabet,
            counter: SadCounter::new(alphabet.size() as f64).expect("alphabet is non-empty"),
        }
    }

    pub fn counter(&self) -> &SadCounter {
        &self.counter
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let alphabet = Alphabet::new(r.usize()?)?;
        let counter = SadCounter::read_payload(r)?;
        Ok(Self { alphabet, counter })
    }
}

impl SequentialModel for SadModel {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn history_len(&self) -> u64 {
        self.counter.total()
    }

    fn prob(&self, x: Symbol) -> Result<f64, CodingError> {
        self.alphabet.check(x)?;
        Ok(self.counter.prob(x as u64))
    }

    fn update(&mut self, x: Symbol) -> Result<(), CodingError> {
        self.alphabet.check(x)?;
        self.counter.update(x as u64);
        Ok(())
    }

    /// Payload: `size: u64 | counter payload`.
    fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(tag::SAD, |w| {
            w.usize(self.alphabet.size());
            self.counter.write_payload(w);
        });
    }

    fn box_clone(&self) -> Box<dyn SequentialModel> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_is_uniform() {
        let m = SadModel::new(Alphabet::new(4).unwrap());
        assert_eq!(m.probs(), vec![0.25; 4]);
    }

    #[test]
    fn normalized_on_large_sparse_alphabet() {
        let mut m = SadModel::new(Alphabet::new(1000).unwrap());
        for _ in 0..3 {
            m.update(7).unwrap();
        }
        let total: f64 = m.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    /// Hand trace of the escape rule on the sequence 0 0 1 0 2 over N = 4.
    #[test]
    fn golden_trace() {
        // step: (n, m, counts) before predicting -> prob of the next symbol
        //  x=0: n=0, m=0, β=1/2: unseen 0.5/(0.5*4)        = 1/4
        //  x=0: n=1, m=1, β=1/2: seen 1/(1.5)              = 2/3
        //  x=1: n=2, m=1, β=1/2: unseen 0.5/(2.5*3)        = 1/15
        //  x=0: n=3, m=2, β=1:   seen 2/(4)                = 1/2
        //  x=2: n=4, m=2, β=1:   unseen 1/(5*2)            = 1/10
        let expected = [1.0 / 4.0, 2.0 / 3.0, 1.0 / 15.0, 1.0 / 2.0, 1.0 / 10.0];
        let mut m = SadModel::new(Alphabet::new(4).unwrap());
        for (&x, &p) in [0, 0, 1, 0, 2].iter().zip(&expected) {
            let got = m.prob(x).unwrap();
            assert!((got - p).abs() < 1e-15, "x={x}: {got} vs {p}");
            let total: f64 = m.probs().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            m.update(x).unwrap();
        }
    }

    #[test]
    fn fully_seen_alphabet_gives_zero_to_impossible_unseen() {
        let mut c = SadCounter::new(2.0).unwrap();
        c.update(0);
        c.update(1);
        assert_eq!(c.escape_mass(), 0.0);
        assert_eq!(c.prob(5), 0.0);
        assert_eq!(c.prob(0), 0.5);
        assert!((c.prob(0) + c.prob(1) - 1.0).abs() < 1e-12);
    }
}
