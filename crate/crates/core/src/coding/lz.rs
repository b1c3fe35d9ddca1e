use rustc_hash::FxHashMap;

use super::snapshot::{tag, SnapshotReader, SnapshotWriter};
use super::{ceil_log2, Alphabet, CodingError, SequentialModel, StateModel, Symbol};

/// One phrase of an LZ78 parse: the dictionary index of the longest
/// previously parsed phrase that prefixes it (0 is the empty phrase)
/// followed by one more symbol.
///
/// Only the last phrase of a parse may be incomplete: the input ended
/// while it still matched an existing dictionary entry, so it repeats
/// that entry instead of adding a new one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phrase {
    pub prefix: usize,
    pub symbol: Symbol,
    pub complete: bool,
}

/// LZ78 incremental parse of `seq`.
pub fn lz_parse(seq: &[Symbol]) -> Vec<Phrase> {
    let mut children: FxHashMap<(usize, Symbol), usize> = FxHashMap::default();
    // parent and last symbol of every dictionary entry except the root
    let mut entries: Vec<(usize, Symbol)> = vec![(0, 0)];
    let mut phrases = Vec::new();
    let mut node = 0;
    for &x in seq {
        match children.get(&(node, x)) {
            Some(&next) => node = next,
            None => {
                let id = entries.len();
                children.insert((node, x), id);
                entries.push((node, x));
                phrases.push(Phrase {
                    prefix: node,
                    symbol: x,
                    complete: true,
                });
                node = 0;
            }
        }
    }
    if node != 0 {
        let (prefix, symbol) = entries[node];
        phrases.push(Phrase {
            prefix,
            symbol,
            complete: false,
        });
    }
    phrases
}

/// Inverse of [`lz_parse`].
pub fn lz_unparse(phrases: &[Phrase]) -> Vec<Symbol> {
    let mut dict: Vec<Vec<Symbol>> = vec![Vec::new()];
    let mut out = Vec::new();
    for p in phrases {
        let mut s = dict[p.prefix].clone();
        s.push(p.symbol);
        out.extend_from_slice(&s);
        if p.complete {
            dict.push(s);
        }
    }
    out
}

/// Coding distribution induced by LZ78 code lengths.
///
/// Every phrase costs `ceil(log2(D + 1)) + ceil(log2 |X|)` bits, where `D`
/// is the number of phrases completed before it; the open phrase at the
/// end of the history is charged as if it were already complete. The
/// score of a continuation `s` is `2^-(ℓ(h s) - ℓ(h))`, evaluated on a
/// scratch copy of the parse state so the committed history only moves on
/// `update`. Scores lie in `(0, 1]` but do not sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct LzModel {
    alphabet: Alphabet,
    symbol_bits: u64,
    children: Edges,
    phrases: u64,
    current: u32,
    closed_bits: u64,
    open_bits: u64,
    history: u64,
}

#[inline]
fn edge(node: u32, x: Symbol) -> u64 {
    ((node as u64) << 32) | x as u64
}

/// Alphabets up to this size keep child links in a flat table.
const DENSE_ALPHABET: usize = 32;

/// Child links of the phrase trie. The flat table is indexed by
/// `node * width + symbol`, with 0 for a missing child: the root is never
/// a child.
#[derive(Debug, Clone, PartialEq)]
enum Edges {
    Dense { width: usize, table: Vec<u32> },
    Sparse(FxHashMap<u64, u32>),
}

impl Edges {
    fn new(size: usize) -> Self {
        if size <= DENSE_ALPHABET {
            Edges::Dense {
                width: size,
                table: Vec::new(),
            }
        } else {
            Edges::Sparse(FxHashMap::default())
        }
    }

    #[inline]
    fn get(&self, node: u32, x: Symbol) -> Option<u32> {
        match self {
            Edges::Dense { width, table } => table.get(node as usize * width + x).copied().filter(|&c| c != 0),
            Edges::Sparse(map) => map.get(&edge(node, x)).copied(),
        }
    }

    fn insert(&mut self, node: u32, x: Symbol, child: u32) {
        match self {
            Edges::Dense { width, table } => {
                let need = (node.max(child) as usize + 1) * *width;
                if table.len() < need {
                    table.resize(need, 0);
                }
                table[node as usize * *width + x] = child;
            }
            Edges::Sparse(map) => {
                map.insert(edge(node, x), child);
            }
        }
    }

    /// `(edge key, child)` pairs in key order.
    fn sorted(&self) -> Vec<(u64, u32)> {
        match self {
            Edges::Dense { width, table } => table
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0)
                .map(|(i, &c)| (edge((i / width) as u32, i % width), c))
                .collect(),
            Edges::Sparse(map) => {
                let mut edges: Vec<(u64, u32)> = map.iter().map(|(&k, &v)| (k, v)).collect();
                edges.sort_unstable();
                edges
            }
        }
    }
}

impl LzModel {
    pub fn new(alphabet: Alphabet) -> Self {
        Self {
            alphabet,
            symbol_bits: ceil_log2(alphabet.size() as u64) as u64,
            children: Edges::new(alphabet.size()),
            phrases: 0,
            current: 0,
            closed_bits: 0,
            open_bits: 0,
            history: 0,
        }
    }

    #[inline]
    fn phrase_cost(&self, completed: u64) -> u64 {
        ceil_log2(completed + 1) as u64 + self.symbol_bits
    }

    /// `ℓ_LZ` of the committed history, in bits.
    pub fn code_length(&self) -> u64 {
        self.closed_bits + self.open_bits
    }

    pub fn phrase_count(&self) -> u64 {
        self.phrases
    }

    /// Extra bits needed to encode `seq` after the committed history.
    pub fn delta_bits(&self, seq: &[Symbol]) -> Result<u64, CodingError> {
        for &x in seq {
            self.alphabet.check(x)?;
        }
        // edges this call would add; only consulted when the trie misses
        let mut overlay: Vec<(u32, Symbol, u32)> = Vec::new();
        let mut node = self.current;
        let mut phrases = self.phrases;
        let mut closed = 0u64;
        let mut open = self.open_bits;
        for &x in seq {
            let child = self
                .children
                .get(node, x)
                .or_else(|| overlay.iter().find(|e| e.0 == node && e.1 == x).map(|e| e.2));
            if node == 0 {
                let cost = self.phrase_cost(phrases);
                match child {
                    Some(c) => {
                        node = c;
                        open = cost;
                    }
                    None => {
                        overlay.push((node, x, (phrases + 1) as u32));
                        phrases += 1;
                        closed += cost;
                    }
                }
            } else {
                match child {
                    Some(c) => node = c,
                    None => {
                        overlay.push((node, x, (phrases + 1) as u32));
                        phrases += 1;
                        closed += open;
                        open = 0;
                        node = 0;
                    }
                }
            }
        }
        Ok(closed + open - self.open_bits)
    }

    /// `2^-Δℓ` for appending the single symbol `x`.
    pub fn score(&self, x: Symbol) -> Result<f64, CodingError> {
        Ok(-(self.delta_bits(&[x])? as f64)).map(f64::exp2)
    }

    fn push(&mut self, x: Symbol) {
        let child = self.children.get(self.current, x);
        if self.current == 0 {
            let cost = self.phrase_cost(self.phrases);
            match child {
                Some(c) => {
                    self.current = c;
                    self.open_bits = cost;
                }
                None => {
                    self.phrases += 1;
                    self.children.insert(self.current, x, self.phrases as u32);
                    self.closed_bits += cost;
                }
            }
        } else {
            match child {
                Some(c) => self.current = c,
                None => {
                    self.phrases += 1;
                    self.children.insert(self.current, x, self.phrases as u32);
                    self.closed_bits += self.open_bits;
                    self.open_bits = 0;
                    self.current = 0;
                }
            }
        }
        self.history += 1;
    }

    /// Appends `seq` to the committed history.
    pub fn extend(&mut self, seq: &[Symbol]) -> Result<(), CodingError> {
        for &x in seq {
            self.alphabet.check(x)?;
        }
        seq.iter().for_each(|&x| self.push(x));
        Ok(())
    }

    fn write_payload(&self, w: &mut SnapshotWriter) {
        w.usize(self.alphabet.size());
        w.u64(self.phrases);
        w.u32(self.current);
        w.u64(self.closed_bits);
        w.u64(self.open_bits);
        w.u64(self.history);
        let edges = self.children.sorted();
        w.usize(edges.len());
        for (k, v) in edges {
            w.u64(k);
            w.u32(v);
        }
    }

    pub(crate) fn read_payload(r: &mut SnapshotReader<'_>) -> Result<Self, CodingError> {
        let mut m = Self::new(Alphabet::new(r.usize()?)?);
        m.phrases = r.u64()?;
        m.current = r.u32()?;
        m.closed_bits = r.u64()?;
        m.open_bits = r.u64()?;
        m.history = r.u64()?;
        let n = r.usize()?;
        let size = m.alphabet.size();
        let mut last = None;
        for _ in 0..n {
            let k = r.u64()?;
            let v = r.u32()?;
            let (node, x) = ((k >> 32) as u32, (k & 0xffff_ffff) as usize);
            if last.is_some_and(|l| l >= k) || x >= size || v == 0 || u64::from(v.max(node)) > m.phrases {
                return Err(CodingError::InvalidParameter("inconsistent LZ snapshot".into()));
            }
            last = Some(k);
            m.children.insert(node, x, v);
        }
        if n as u64 != m.phrases || m.current as u64 > m.phrases {
            return Err(CodingError::InvalidParameter("inconsistent LZ snapshot".into()));
        }
        Ok(m)
    }
}

impl SequentialModel for LzModel {
    fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    fn history_len(&self) -> u64 {
        self.history
    }

    fn prob(&self, x: Symbol) -> Result<f64, CodingError> {
        self.score(x)
    }

    fn log2_prob(&self, x: Symbol) -> Result<f64, CodingError> {
        Ok(-(self.delta_bits(&[x])? as f64))
    }

    fn update(&mut self, x: Symbol) -> Result<(), CodingError> {
        self.extend(&[x])
    }

    fn is_normalized(&self) -> bool {
        false
    }

    /// Payload: `size: u64 | phrases: u64 | current: u32 | closed_bits: u64 |
    /// open_bits: u64 | history: u64 | edges: u64 | (edge: u64, child: u32)*`
    /// with `edge = parent << 32 | symbol`, ascending.
    fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(tag::LZ, |w| self.write_payload(w));
    }

    fn box_clone(&self) -> Box<dyn SequentialModel> {
        Box::new(self.clone())
    }
}

impl StateModel for LzModel {
    fn history_len(&self) -> u64 {
        self.history
    }

    fn log2_prob(&self, obs: &[Symbol]) -> Result<f64, CodingError> {
        Ok(-(self.delta_bits(obs)? as f64))
    }

    fn update(&mut self, obs: &[Symbol]) -> Result<(), CodingError> {
        self.extend(obs)
    }

    fn is_normalized(&self) -> bool {
        false
    }

    fn write_snapshot(&self, w: &mut SnapshotWriter) {
        w.record(tag::LZ, |w| self.write_payload(w));
    }

    fn box_clone(&self) -> Box<dyn StateModel> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(prefix: usize, symbol: Symbol) -> Phrase {
        Phrase {
            prefix,
            symbol,
            complete: true,
        }
    }

    #[test]
    fn parse_abab() {
        assert_eq!(lz_parse(&[0, 1, 0, 1]), vec![p(0, 0), p(0, 1), p(1, 1)]);
    }

    #[test]
    fn parse_aaaa_ends_with_partial_phrase() {
        let phrases = lz_parse(&[0, 0, 0, 0]);
        assert_eq!(
            phrases,
            vec![
                p(0, 0),
                p(1, 0),
                Phrase {
                    prefix: 0,
                    symbol: 0,
                    complete: false
                }
            ]
        );
        assert_eq!(lz_unparse(&phrases), vec![0, 0, 0, 0]);
    }

    #[test]
    fn parse_empty() {
        assert!(lz_parse(&[]).is_empty());
    }

    fn model(k: usize) -> LzModel {
        LzModel::new(Alphabet::new(k).unwrap())
    }

    #[test]
    fn extending_an_open_phrase_is_free() {
        let mut m = model(2);
        m.extend(&[0, 1, 0]).unwrap(); // phrases "0", "1", open at "0"
        assert_eq!(m.delta_bits(&[1]).unwrap(), 0);
        assert_eq!(m.score(1).unwrap(), 1.0);
    }

    #[test]
    fn new_phrase_costs_index_plus_symbol_bits() {
        // 256-symbol alphabet: 8 bits per symbol, no index bits for the
        // very first phrase.
        let m = model(256);
        assert_eq!(m.delta_bits(&[7]).unwrap(), 8);
        assert_eq!(m.score(7).unwrap(), 2f64.powi(-8));
    }

    /// Hand trace over |X| = 3 (2 symbol bits) of 0 1 0 0 2 0 1 2 2 2 0 0.
    #[test]
    fn golden_trace() {
        // D = completed phrases, cost(D) = ceil(log2(D + 1)) + 2
        //  x  state                      action                     Δ
        //  0  root, D=0                  new phrase "0"             cost(0)=2
        //  1  root, D=1                  new phrase "1"             cost(1)=3
        //  0  root, D=2                  open "0"                   cost(2)=4
        //  0  open "0", D=2              close "00"                 0
        //  2  root, D=3                  new phrase "2"             cost(3)=4
        //  0  root, D=4                  open "0"                   cost(4)=5
        //  1  open "0", D=4              close "01"                 0
        //  2  root, D=5                  open "2"                   cost(5)=5
        //  2  open "2", D=5              close "22"                 0
        //  2  root, D=6                  open "2"                   cost(6)=5
        //  0  open "2", D=6              close "20"                 0
        //  0  root, D=7                  open "0"                   cost(7)=5
        let seq = [0, 1, 0, 0, 2, 0, 1, 2, 2, 2, 0, 0];
        let expected = [2, 3, 4, 0, 4, 5, 0, 5, 0, 5, 0, 5];
        let mut m = model(3);
        for (&x, &bits) in seq.iter().zip(&expected) {
            assert_eq!(m.delta_bits(&[x]).unwrap(), bits, "symbol {x}");
            let s = m.score(x).unwrap();
            assert_eq!(s, 2f64.powi(-(bits as i32)));
            m.extend(&[x]).unwrap();
        }
        assert_eq!(m.code_length(), expected.iter().sum::<u64>());
        assert_eq!(m.phrase_count(), 7);
    }

    #[test]
    fn what_if_matches_committed_extension() {
        let mut m = model(3);
        m.extend(&[0, 1, 0, 0, 2]).unwrap();
        let obs = [0, 0, 0, 1, 0, 0, 0, 2];
        let predicted = m.delta_bits(&obs).unwrap();
        let before = m.code_length();
        let snapshot = m.clone();
        m.extend(&obs).unwrap();
        assert_eq!(m.code_length() - before, predicted);
        // scoring did not mutate
        let mut again = snapshot.clone();
        let _ = snapshot.delta_bits(&obs).unwrap();
        again.extend(&[]).unwrap();
        assert_eq!(again, snapshot);
    }

    proptest::proptest! {
        #[test]
        fn dense_and_sparse_tries_agree(
            history in proptest::collection::vec(0usize..5, 0..300),
            probe in proptest::collection::vec(0usize..5, 0..40),
        ) {
            let mut dense = model(5);
            let mut sparse = model(5);
            sparse.children = Edges::Sparse(FxHashMap::default());
            dense.extend(&history).unwrap();
            sparse.extend(&history).unwrap();
            proptest::prop_assert_eq!(dense.delta_bits(&probe).unwrap(), sparse.delta_bits(&probe).unwrap());
            proptest::prop_assert_eq!(dense.children.sorted(), sparse.children.sorted());
            let mut a = SnapshotWriter::new();
            dense.write_payload(&mut a);
            let mut b = SnapshotWriter::new();
            sparse.write_payload(&mut b);
            proptest::prop_assert_eq!(a.into_bytes(), b.into_bytes());
        }
    }

    #[test]
    fn scores_are_not_normalized_but_bounded() {
        let mut m = model(4);
        m.extend(&[0, 1, 2, 3, 0, 0, 1]).unwrap();
        for x in 0..4 {
            let s = SequentialModel::prob(&m, x).unwrap();
            assert!(s > 0.0 && s <= 1.0);
        }
        assert!(!SequentialModel::is_normalized(&m));
    }
}
