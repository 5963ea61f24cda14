//! Little-endian byte helpers shared by the wire protocol and checkpoints.
//!
//! Integers are fixed width, reals are IEEE-754 f64, strings are a `u16`
//! byte length followed by UTF-8, arrays are a `u64` count followed by raw
//! f64 values.

use thiserror::Error;

use crate::corpus::Vocabulary;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated input: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("frame declares {declared} payload bytes but {actual} follow")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("invalid UTF-8 in string at offset {0}")]
    InvalidUtf8(usize),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    /// Panics if `s` is longer than `u16::MAX` bytes.
    pub fn str(&mut self, s: &str) {
        let len = u16::try_from(s.len()).expect("string longer than 65535 bytes");
        self.u16(len);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn f64_array(&mut self, values: &[f64]) {
        self.u64(values.len() as u64);
        self.buf.reserve(values.len() * 8);
        for v in values {
            self.f64(*v);
        }
    }

    pub fn vocabulary(&mut self, vocab: &Vocabulary) {
        self.u32(vocab.len() as u32);
        for (term, freq) in vocab.iter() {
            self.str(term);
            self.f64(freq);
        }
    }
}

#[derive(Debug)]
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: n - self.remaining(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        self.array().map(u16::from_le_bytes)
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        self.array().map(u32::from_le_bytes)
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        self.array().map(u64::from_le_bytes)
    }

    pub fn f64(&mut self) -> Result<f64, DecodeError> {
        self.array().map(f64::from_le_bytes)
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(DecodeError::Invalid(format!("invalid boolean byte {b}"))),
        }
    }

    pub fn str(&mut self) -> Result<String, DecodeError> {
        let len = self.u16()? as usize;
        let at = self.pos;
        let bytes = self.take(len)?;
        std::str::from_utf8(bytes)
            .map(str::to_string)
            .map_err(|_| DecodeError::InvalidUtf8(at))
    }

    pub fn f64_array(&mut self) -> Result<Vec<f64>, DecodeError> {
        let count = self.u64()?;
        let needed = count.checked_mul(8).filter(|&b| b <= self.remaining() as u64);
        let Some(bytes) = needed else {
            return Err(DecodeError::Truncated {
                offset: self.pos,
                needed: (count.saturating_mul(8)).saturating_sub(self.remaining() as u64) as usize,
            });
        };
        let raw = self.take(bytes as usize)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn vocabulary(&mut self) -> Result<Vocabulary, DecodeError> {
        let count = self.u32()? as usize;
        let mut pairs = Vec::with_capacity(count.min(self.remaining() / 10));
        for _ in 0..count {
            let term = self.str()?;
            let freq = self.f64()?;
            pairs.push((term, freq));
        }
        let vocab = Vocabulary::from_pairs(pairs.iter().cloned()).map_err(|e| DecodeError::Invalid(e.to_string()))?;
        // Canonical order on the wire: re-sorting must not have moved anything.
        if vocab.terms().iter().zip(&pairs).any(|(a, (b, _))| a != b) {
            return Err(DecodeError::Invalid("vocabulary terms are not in canonical order".into()));
        }
        Ok(vocab)
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.remaining() != 0 {
            return Err(DecodeError::Invalid(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}
