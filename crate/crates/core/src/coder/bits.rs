//! Bit strings and readers packed most-significant-bit first.
//!
//! Bit `i` of a stream lives in byte `i / 8` at position `7 - i % 8`. Unused
//! trailing bits of the last byte are always zero.

use std::fmt;
use std::str::FromStr;

use super::CoderError;

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bytes: Vec<u8>,
    len: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps `len` bits stored MSB-first in `bytes`.
    pub fn from_bytes(mut bytes: Vec<u8>, len: usize) -> Result<Self, CoderError> {
        let needed = len.div_ceil(8);
        if bytes.len() != needed {
            return Err(CoderError::Truncated {
                needed: len,
                available: bytes.len() * 8,
            });
        }
        if !len.is_multiple_of(8) {
            let mask = 0xffu8 << (8 - len % 8);
            if let Some(last) = bytes.last_mut() {
                *last &= mask;
            }
        }
        Ok(BitString { bytes, len })
    }

    /// The `width` low bits of `value`, most significant first.
    pub fn from_value(value: u128, width: u32) -> Self {
        let mut bits = BitString::new();
        bits.push_value(value, width);
        bits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    pub fn push_value(&mut self, value: u128, width: u32) {
        for i in (0..width).rev() {
            self.push((value >> i) & 1 == 1);
        }
    }

    pub fn extend_from(&mut self, other: &BitString) {
        if self.len.is_multiple_of(8) {
            self.bytes.extend_from_slice(&other.bytes);
            self.len += other.len;
        } else {
            for bit in other.iter() {
                self.push(bit);
            }
        }
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        (i < self.len).then(|| self.bytes[i / 8] & (0x80 >> (i % 8)) != 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.bytes[i / 8] & (0x80 >> (i % 8)) != 0)
    }

    /// Value of the bits read as an unsigned big-endian integer.
    pub fn value(&self) -> Option<u128> {
        (self.len <= 128).then(|| self.iter().fold(0u128, |v, b| (v << 1) | b as u128))
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader::new(&self.bytes, self.len)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString(\"{self}\")")
    }
}

impl FromStr for BitString {
    type Err = CoderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = BitString::new();
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return Err(CoderError::BadBitChar(c)),
            }
        }
        Ok(bits)
    }
}

/// Sequential reader over an MSB-first bit buffer.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    len: usize,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], len: usize) -> Self {
        let len = len.min(bytes.len() * 8);
        BitReader { bytes, len, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.len - self.pos
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        if self.pos >= self.len {
            return None;
        }
        let bit = self.bytes[self.pos / 8] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Some(bit)
    }

    pub fn read_bits(&mut self, n: usize) -> Result<BitString, CoderError> {
        if n > self.remaining() {
            return Err(CoderError::Truncated {
                needed: n,
                available: self.remaining(),
            });
        }
        let mut out = BitString::new();
        for _ in 0..n {
            out.push(self.read_bit().expect("length checked"));
        }
        Ok(out)
    }
}
