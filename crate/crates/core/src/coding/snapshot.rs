//! Deterministic binary snapshots of model sufficient statistics.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! frame   := MAGIC "CNCS" | version: u16 | record
//! record  := tag: u8 | len: u32 | payload[len]
//! ```
//!
//! A payload is a fixed sequence of primitive fields, possibly followed by
//! nested records (composite models nest one record per sub-model).
//! Primitives: `u8`, `u32`, `u64`, `f64` (IEEE-754 bits), `bool` (one byte,
//! 0 or 1) and vectors (`u64` length followed by the elements). `usize`
//! values are widened to `u64`. Hash-map contents are written in ascending
//! key order so that equal models always produce identical bytes.
//!
//! The per-model field order is documented next to each `write_snapshot`
//! implementation and in the book chapter on snapshots.

use thiserror::Error;

use super::{
    AtomicStateModel, CodingError, CtwModel, CtwTree, DirichletModel, FactoredCtw,
    FactoredLogistic, FactoredSad, FrequencyModel, LzModel, SadModel, SequentialModel, StateModel,
};

pub const MAGIC: [u8; 4] = *b"CNCS";
pub const FORMAT_VERSION: u16 = 1;

/// Record tags.
pub mod tag {
    pub const FREQUENCY: u8 = 0x01;
    pub const DIRICHLET: u8 = 0x02;
    pub const SAD: u8 = 0x03;
    pub const CTW: u8 = 0x04;
    pub const LZ: u8 = 0x05;
    pub const CTW_TREE: u8 = 0x08;
    pub const SAD_COUNTER: u8 = 0x09;
    pub const SOFTMAX: u8 = 0x0a;
    pub const ATOMIC: u8 = 0x10;
    pub const FACTORED_CTW: u8 = 0x11;
    pub const FACTORED_SAD: u8 = 0x12;
    pub const FACTORED_LOGISTIC: u8 = 0x13;
    pub const ENGINE: u8 = 0x20;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("snapshot truncated at byte {0}")]
    Truncated(usize),
    #[error("bad snapshot magic")]
    BadMagic,
    #[error("unsupported snapshot version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u16),
    #[error("expected record tag {expected:#04x}, found {got:#04x}")]
    UnexpectedTag { expected: u8, got: u8 },
    #[error("unknown record tag {0:#04x}")]
    UnknownTag(u8),
    #[error("{0} trailing bytes after record")]
    TrailingBytes(usize),
    #[error("invalid snapshot contents: {0}")]
    Invalid(String),
}

#[derive(Debug, Default)]
pub struct SnapshotWriter {
    buf: Vec<u8>,
}

impl SnapshotWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    pub fn u32s(&mut self, v: &[u32]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.u32(x));
    }

    pub fn u64s(&mut self, v: &[u64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.u64(x));
    }

    pub fn usizes(&mut self, v: &[usize]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.usize(x));
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    /// Writes a tagged, length-prefixed record whose payload is produced
    /// by `body`.
    pub fn record(&mut self, tag: u8, body: impl FnOnce(&mut Self)) {
        self.u8(tag);
        let len_at = self.buf.len();
        self.u32(0);
        let start = self.buf.len();
        body(self);
        let len = u32::try_from(self.buf.len() - start).expect("snapshot record exceeds 4 GiB");
        self.buf[len_at..len_at + 4].copy_from_slice(&len.to_le_bytes());
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct SnapshotReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> SnapshotReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        if self.data.len() - self.pos < n {
            return Err(SnapshotError::Truncated(self.pos));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, SnapshotError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(SnapshotError::Invalid(format!("bool byte {b}"))),
        }
    }

    pub fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize, SnapshotError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| SnapshotError::Invalid(format!("length {v} overflows usize")))
    }

    pub fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn len_prefix(&mut self, elem_size: usize) -> Result<usize, SnapshotError> {
        let n = self.usize()?;
        if n.saturating_mul(elem_size) > self.remaining() {
            return Err(SnapshotError::Truncated(self.pos));
        }
        Ok(n)
    }

    pub fn u32s(&mut self) -> Result<Vec<u32>, SnapshotError> {
        let n = self.len_prefix(4)?;
        (0..n).map(|_| self.u32()).collect()
    }

    pub fn u64s(&mut self) -> Result<Vec<u64>, SnapshotError> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.u64()).collect()
    }

    pub fn usizes(&mut self) -> Result<Vec<usize>, SnapshotError> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>, SnapshotError> {
        let n = self.len_prefix(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn peek_tag(&self) -> Result<u8, SnapshotError> {
        self.data
            .get(self.pos)
            .copied()
            .ok_or(SnapshotError::Truncated(self.pos))
    }

    /// Reads the next record header and returns `(tag, payload reader)`.
    pub fn any_record(&mut self) -> Result<(u8, SnapshotReader<'a>), SnapshotError> {
        let tag = self.u8()?;
        let len = self.u32()? as usize;
        let payload = self.take(len)?;
        Ok((tag, SnapshotReader::new(payload)))
    }

    /// Reads the next record, which must carry `expected`.
    pub fn record(&mut self, expected: u8) -> Result<SnapshotReader<'a>, SnapshotError> {
        let (got, payload) = self.any_record()?;
        if got != expected {
            return Err(SnapshotError::UnexpectedTag { expected, got });
        }
        Ok(payload)
    }

    /// Fails if unread bytes remain.
    pub fn finish(&self) -> Result<(), SnapshotError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(SnapshotError::TrailingBytes(n)),
        }
    }
}

/// Wraps a record stream in the versioned frame.
pub fn frame(body: impl FnOnce(&mut SnapshotWriter)) -> Vec<u8> {
    let mut w = SnapshotWriter::new();
    w.buf.extend_from_slice(&MAGIC);
    w.buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    body(&mut w);
    w.into_bytes()
}

/// Validates the frame header and returns a reader over its body.
pub fn open_frame(bytes: &[u8]) -> Result<SnapshotReader<'_>, SnapshotError> {
    if bytes.len() < 6 {
        return Err(SnapshotError::Truncated(bytes.len()));
    }
    if bytes[..4] != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(SnapshotError::UnsupportedVersion(version));
    }
    Ok(SnapshotReader::new(&bytes[6..]))
}

pub fn encode_sequential(model: &dyn SequentialModel) -> Vec<u8> {
    frame(|w| model.write_snapshot(w))
}

pub fn encode_state(model: &dyn StateModel) -> Vec<u8> {
    frame(|w| model.write_snapshot(w))
}

pub fn decode_sequential_bytes(bytes: &[u8]) -> Result<Box<dyn SequentialModel>, CodingError> {
    let mut r = open_frame(bytes)?;
    let model = read_sequential(&mut r)?;
    r.finish()?;
    Ok(model)
}

pub fn decode_state_bytes(bytes: &[u8]) -> Result<Box<dyn StateModel>, CodingError> {
    let mut r = open_frame(bytes)?;
    let model = read_state(&mut r)?;
    r.finish()?;
    Ok(model)
}

/// Reads one symbol-model record, dispatching on its tag.
pub fn read_sequential(r: &mut SnapshotReader<'_>) -> Result<Box<dyn SequentialModel>, CodingError> {
    let (tag, mut payload) = r.any_record()?;
    let model: Box<dyn SequentialModel> = match tag {
        tag::FREQUENCY => Box::new(FrequencyModel::read_payload(&mut payload)?),
        tag::DIRICHLET => Box::new(DirichletModel::read_payload(&mut payload)?),
        tag::SAD => Box::new(SadModel::read_payload(&mut payload)?),
        tag::CTW => Box::new(CtwModel::read_payload(&mut payload)?),
        tag::LZ => Box::new(LzModel::read_payload(&mut payload)?),
        other => return Err(SnapshotError::UnknownTag(other).into()),
    };
    payload.finish()?;
    Ok(model)
}

/// Reads one state-model record, dispatching on its tag.
pub fn read_state(r: &mut SnapshotReader<'_>) -> Result<Box<dyn StateModel>, CodingError> {
    let (tag, mut payload) = r.any_record()?;
    let model: Box<dyn StateModel> = match tag {
        tag::ATOMIC => Box::new(AtomicStateModel::new(read_sequential(&mut payload)?)),
        tag::LZ => Box::new(LzModel::read_payload(&mut payload)?),
        tag::FACTORED_CTW => Box::new(FactoredCtw::read_payload(&mut payload)?),
        tag::FACTORED_SAD => Box::new(FactoredSad::read_payload(&mut payload)?),
        tag::FACTORED_LOGISTIC => Box::new(FactoredLogistic::read_payload(&mut payload)?),
        other => return Err(SnapshotError::UnknownTag(other).into()),
    };
    payload.finish()?;
    Ok(model)
}

pub(crate) fn read_tree(r: &mut SnapshotReader<'_>) -> Result<CtwTree, CodingError> {
    let mut payload = r.record(tag::CTW_TREE)?;
    let tree = CtwTree::read_payload(&mut payload)?;
    payload.finish()?;
    Ok(tree)
}
