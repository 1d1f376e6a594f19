//! Splitting long bit strings into message-sized pieces.
//!
//! [`fragment`] prefixes each piece with its index so pieces can arrive in any
//! order. [`split_stream`] produces headerless pieces for schedules where the
//! receiver already knows each piece's position.

use super::payload::{extract_bits, BitWriter, Payload};
use crate::error::{param, Error, Result};

/// Number of `chunk`-bit pieces for a `bits`-long stream (at least one).
pub fn stream_fragments(bits: usize, chunk: usize) -> usize {
    bits.div_ceil(chunk).max(1)
}

pub fn split_stream(words: &[u64], bits: usize, chunk: usize) -> Vec<Payload> {
    (0..stream_fragments(bits, chunk))
        .map(|i| {
            let start = i * chunk;
            let len = chunk.min(bits.saturating_sub(start));
            Payload::from_words(&extract_bits(words, start, len), len)
        })
        .collect()
}

pub fn join_stream<'a>(pieces: impl IntoIterator<Item = &'a Payload>) -> (Vec<u64>, usize) {
    let mut w = BitWriter::new();
    for p in pieces {
        let mut r = p.reader();
        while r.remaining() > 0 {
            let take = r.remaining().min(64) as u32;
            w.push(r.read(take).expect("within payload"), take);
        }
    }
    w.into_words()
}

/// Header width: two words, enough to index `n^2` pieces.
fn header_bits(word_bits: u32) -> u32 {
    2 * word_bits
}

/// Index-tagged pieces of at most `bandwidth` bits each.
pub fn fragment(words: &[u64], bits: usize, bandwidth: usize, word_bits: u32) -> Result<Vec<Payload>> {
    let h = header_bits(word_bits);
    if bandwidth < (h + word_bits) as usize {
        return param(format!("bandwidth {bandwidth} cannot hold a {h}-bit header and one word"));
    }
    let usable = bandwidth - h as usize;
    let count = stream_fragments(bits, usable);
    if h < 64 && count as u64 > 1u64 << h {
        return param(format!("{bits}-bit payload needs {count} fragments, more than a {h}-bit header indexes"));
    }
    Ok(split_stream(words, bits, usable)
        .into_iter()
        .enumerate()
        .map(|(i, piece)| {
            let mut w = BitWriter::new();
            w.push(i as u64, h);
            let mut r = piece.reader();
            while r.remaining() > 0 {
                let take = r.remaining().min(64) as u32;
                w.push(r.read(take).unwrap(), take);
            }
            w.finish()
        })
        .collect())
}

/// Inverse of [`fragment`]; accepts pieces in any order.
pub fn reassemble(pieces: &[Payload], word_bits: u32) -> Result<(Vec<u64>, usize)> {
    let h = header_bits(word_bits);
    let mut indexed = Vec::with_capacity(pieces.len());
    for p in pieces {
        let mut r = p.reader();
        let i = r.read(h)? as usize;
        let rest = r.remaining();
        let mut body = BitWriter::new();
        let mut left = rest;
        while left > 0 {
            let take = left.min(64) as u32;
            body.push(r.read(take)?, take);
            left -= take as usize;
        }
        indexed.push((i, body.finish()));
    }
    indexed.sort_by_key(|(i, _)| *i);
    if indexed.iter().enumerate().any(|(k, (i, _))| k != *i) {
        return Err(Error::Corruption("fragment indices are not contiguous".into()));
    }
    Ok(join_stream(indexed.iter().map(|(_, p)| p)))
}
