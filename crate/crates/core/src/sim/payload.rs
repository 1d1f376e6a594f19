use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::graph::NodeId;

/// A bit string of at most a few machine words.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Payload {
    bits: u32,
    words: SmallVec<[u64; 2]>,
}

impl Payload {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Keeps the low `bits` bits of `words`.
    pub fn from_words(words: &[u64], bits: usize) -> Self {
        let mut w: SmallVec<[u64; 2]> = words.iter().copied().take(bits.div_ceil(64)).collect();
        w.resize(bits.div_ceil(64), 0);
        if !bits.is_multiple_of(64) {
            if let Some(last) = w.last_mut() {
                *last &= (1u64 << (bits % 64)) - 1;
            }
        }
        Self { bits: bits as u32, words: w }
    }

    pub fn bits(&self) -> usize {
        self.bits as usize
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader::new(&self.words, self.bits())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub src: NodeId,
    pub dst: NodeId,
    pub payload: Payload,
}

/// Appends fixed-width fields, least significant bit first.
#[derive(Clone, Debug, Default)]
pub struct BitWriter {
    words: Vec<u64>,
    bits: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writes the low `width` bits of `value` (`width <= 64`).
    pub fn push(&mut self, value: u64, width: u32) -> &mut Self {
        debug_assert!(width <= 64);
        if width == 0 {
            return self;
        }
        let value = if width == 64 { value } else { value & ((1u64 << width) - 1) };
        let off = self.bits % 64;
        if off == 0 {
            self.words.push(value);
        } else {
            *self.words.last_mut().unwrap() |= value << off;
            if off + width as usize > 64 {
                self.words.push(value >> (64 - off));
            }
        }
        self.bits += width as usize;
        self
    }

    pub fn push_bool(&mut self, b: bool) -> &mut Self {
        self.push(b as u64, 1)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn into_words(self) -> (Vec<u64>, usize) {
        (self.words, self.bits)
    }

    pub fn finish(self) -> Payload {
        Payload::from_words(&self.words, self.bits)
    }
}

pub struct BitReader<'a> {
    words: &'a [u64],
    bits: usize,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(words: &'a [u64], bits: usize) -> Self {
        Self { words, bits, pos: 0 }
    }

    pub fn read(&mut self, width: u32) -> Result<u64> {
        if self.pos + width as usize > self.bits {
            return Err(Error::Corruption(format!(
                "read of {width} bits at offset {} overruns {}-bit payload",
                self.pos, self.bits
            )));
        }
        if width == 0 {
            return Ok(0);
        }
        let (i, off) = (self.pos / 64, self.pos % 64);
        let mut v = self.words[i] >> off;
        if off + width as usize > 64 {
            v |= self.words[i + 1] << (64 - off);
        }
        self.pos += width as usize;
        Ok(if width == 64 { v } else { v & ((1u64 << width) - 1) })
    }

    pub fn read_bool(&mut self) -> Result<bool> {
        Ok(self.read(1)? == 1)
    }

    pub fn remaining(&self) -> usize {
        self.bits - self.pos
    }
}

/// Copies bits `[start, start + len)` of a word stream into a new word vector.
pub fn extract_bits(words: &[u64], start: usize, len: usize) -> Vec<u64> {
    let mut r = BitReader::new(words, start + len);
    r.pos = start;
    let mut w = BitWriter::new();
    let mut left = len;
    while left > 0 {
        let take = left.min(64) as u32;
        w.push(r.read(take).expect("range checked by construction"), take);
        left -= take as usize;
    }
    w.into_words().0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_round_trip_across_word_boundaries() {
        let mut w = BitWriter::new();
        w.push(5, 3).push(u64::MAX, 64).push(0x1234, 13).push_bool(true).push(77, 61);
        let p = w.finish();
        assert_eq!(p.bits(), 3 + 64 + 13 + 1 + 61);
        let mut r = p.reader();
        assert_eq!(r.read(3).unwrap(), 5);
        assert_eq!(r.read(64).unwrap(), u64::MAX);
        assert_eq!(r.read(13).unwrap(), 0x1234);
        assert!(r.read_bool().unwrap());
        assert_eq!(r.read(61).unwrap(), 77);
        assert!(r.read(1).is_err());
    }

    #[test]
    fn extract_matches_reader() {
        let words = [0xdead_beef_0123_4567u64, 0x89ab_cdef_fedc_ba98, 0x5555];
        let got = extract_bits(&words, 60, 70);
        let mut r = BitReader::new(&got, 70);
        let mut o = BitReader::new(&words, 192);
        o.read(60).unwrap();
        assert_eq!(r.read(64).unwrap(), o.read(64).unwrap());
        assert_eq!(r.read(6).unwrap(), o.read(6).unwrap());
    }
}
