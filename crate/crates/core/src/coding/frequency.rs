use super::snapshot::{tag, SnapshotReader, SnapshotWriter};
use super::{Alphabet, CodingError, SequentialModel, Symbol};

/// Empirical frequency estimator: `ρ(x | x_{<n}) = count(x) / (n - 1)`.
///
/// With an empty history the count ratio is undefined; the model then
/// predicts the uniform distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyModel {
    alphabet: Alphabet,
    counts: Vec<u64>,
    total: u64,
}

impl FrequencyModel {
    pub fn new(alphabet: Alphabet) -> Self {
        Self {
            alphabet,
            counts: vec![0; alphabet.size()],
            total: 0,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let alphabet = Alphabet::new(r.usize()?)?;
        let counts = r.u64s()?;
        if counts.len() != alphabet.size() {
            return Err(CodingError::InvalidParameter("frequency counts length".into()));
        }
        let total = counts.iter().sum();
        Ok(Self { alphabet, counts, total })
    }
}

impl SequentialModel for FrequencyModel {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn history_len(&self) -> u64 {
        self.total
    }

    fn prob(&self, x: Symbol) -> Result<f64, CodingError> {
        self.alphabet.check(x)?;
        if self.total == 0 {
            return Ok(1.0 / self.alphabet.size() as f64);
        }
        Ok(self.counts[x] as f64 / self.total as f64)
    }

    fn update(&mut self, x: Symbol) -> Result<(), CodingError> {
        self.alphabet.check(x)?;
        self.counts[x] += 1;
        self.total += 1;
        Ok(())
    }

    /// Payload: `size: u64 | counts: [u64]`.
    fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(tag::FREQUENCY, |w| {
            w.usize(self.alphabet.size());
            w.u64s(&self.counts);
        });
    }

    fn box_clone(&self) -> Box<dyn SequentialModel> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(n: usize) -> FrequencyModel {
        FrequencyModel::new(Alphabet::new(n).unwrap())
    }

    #[test]
    fn empty_history_is_uniform() {
        let m = model(4);
        assert_eq!(m.probs(), vec![0.25; 4]);
    }

    #[test]
    fn matches_counts_after_aab() {
        let mut m = model(2);
        for x in [0, 0, 1] {
            m.update(x).unwrap();
        }
        assert_eq!(m.prob(0).unwrap(), 2.0 / 3.0);
        assert_eq!(m.prob(1).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn single_update_gives_certainty() {
        let mut m = model(3);
        m.update(1).unwrap();
        assert_eq!(m.prob(1).unwrap(), 1.0);
        assert_eq!(m.prob(0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_out_of_alphabet() {
        let mut m = model(2);
        assert!(m.prob(2).is_err());
        assert!(m.update(5).is_err());
        assert_eq!(m.history_len(), 0);
    }

    #[test]
    fn probabilities_are_exact_count_ratios() {
        // p * n must reproduce the integer count exactly for small n.
        let seq = [2, 0, 2, 1, 2, 2, 0];
        let mut m = model(3);
        let mut tally = [0u64; 3];
        for (i, &x) in seq.iter().enumerate() {
            m.update(x).unwrap();
            tally[x] += 1;
            let n = (i + 1) as f64;
            for s in 0..3 {
                assert_eq!(m.counts()[s], tally[s]);
                assert_eq!((m.prob(s).unwrap() * n).round() as u64, tally[s]);
                assert_eq!(m.prob(s).unwrap(), tally[s] as f64 / n);
            }
        }
    }
}
