use super::snapshot::{tag, SnapshotReader, SnapshotWriter};
use super::{Alphabet, CodingError, SequentialModel, Symbol};

/// Dirichlet-multinomial predictor `(count(x) + α) / (n + α|X|)`.
///
/// `α = ½` is the Krichevsky-Trofimov rule.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletModel {
    alphabet: Alphabet,
    alpha: f64,
    counts: Vec<u64>,
    total: u64,
}

impl DirichletModel {
    pub fn new(alphabet: Alphabet, alpha: f64) -> Result<Self, CodingError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(CodingError::InvalidParameter(format!(
                "dirichlet alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            alphabet,
            alpha,
            counts: vec![0; alphabet.size()],
            total: 0,
        })
    }

    pub fn kt(alphabet: Alphabet) -> Self {
        Self::new(alphabet, 0.5).expect("0.5 is a valid concentration")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let alphabet = Alphabet::new(r.usize()?)?;
        let alpha = r.f64()?;
        let counts = r.u64s()?;
        if counts.len() != alphabet.size() {
            return Err(CodingError::InvalidParameter("dirichlet counts length".into()));
        }
        let mut m = Self::new(alphabet, alpha)?;
        m.total = counts.iter().sum();
        m.counts = counts;
        Ok(m)
    }
}

impl SequentialModel for DirichletModel {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn history_len(&self) -> u64 {
        self.total
    }

    fn prob(&self, x: Symbol) -> Result<f64, CodingError> {
        self.alphabet.check(x)?;
        let denom = self.total as f64 + self.alpha * self.alphabet.size() as f64;
        Ok((self.counts[x] as f64 + self.alpha) / denom)
    }

    fn update(&mut self, x: Symbol) -> Result<(), CodingError> {
        self.alphabet.check(x)?;
        self.counts[x] += 1;
        self.total += 1;
        Ok(())
    }

    /// Payload: `size: u64 | alpha: f64 | counts: [u64]`.
    fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(tag::DIRICHLET, |w| {
            w.usize(self.alphabet.size());
            w.f64(self.alpha);
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
    use crate::coding::logloss;

    fn kt2() -> DirichletModel {
        DirichletModel::kt(Alphabet::new(2).unwrap())
    }

    #[test]
    fn prior_is_symmetric() {
        assert_eq!(kt2().prob(0).unwrap(), 0.5);
    }

    #[test]
    fn follows_count_rule() {
        let mut m = kt2();
        m.update(0).unwrap();
        assert_eq!(m.prob(0).unwrap(), 0.75);
        m.update(0).unwrap();
        assert!((m.prob(0).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn code_length_of_01_is_three_bits() {
        let mut m = kt2();
        let bits = logloss(&mut m, &[0, 1]).unwrap();
        assert!((bits - 3.0).abs() < 1e-12);
        assert_eq!(logloss(&mut kt2(), &[]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_alpha() {
        let a = Alphabet::new(2).unwrap();
        assert!(DirichletModel::new(a, 0.0).is_err());
        assert!(DirichletModel::new(a, f64::NAN).is_err());
    }
}
