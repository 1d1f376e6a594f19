//! k-wise independent hash families over a prime field, derived from a short
//! shared seed, and the Bernoulli samplers built on them.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::graph::ceil_log2;

/// The random bit string a coordinator generates and shares with every node.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SharedSeed {
    words: Vec<u64>,
    bits: usize,
}

impl SharedSeed {
    /// Keeps the low `bits` bits of `words`; any higher bits are cleared.
    pub fn from_words(mut words: Vec<u64>, bits: usize) -> Self {
        words.resize(bits.div_ceil(64), 0);
        if !bits.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (bits % 64)) - 1;
            }
        }
        Self { words, bits }
    }

    pub fn random(rng: &mut impl RngCore, bits: usize) -> Self {
        let words = (0..bits.div_ceil(64)).map(|_| rng.next_u64()).collect();
        Self::from_words(words, bits)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Seed length that supports one degree-`(k-1)` polynomial over the edge
    /// field of an `n`-node graph: `k * ceil(log2 q)` bits.
    pub fn default_bits(n: usize) -> usize {
        let q = edge_field_prime(n);
        default_k(n) * ceil_log2(q) as usize
    }
}

/// Independence parameter: `2 * ceil(log2 n)`, at least 2 (always even).
pub fn default_k(n: usize) -> usize {
    (2 * ceil_log2(n as u64) as usize).max(2)
}

pub fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    if x.is_multiple_of(2) {
        return x == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= x {
        if x.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime strictly greater than `x`.
pub fn smallest_prime_above(x: u64) -> u64 {
    let mut p = x + 1;
    while !is_prime(p) {
        p += 1;
    }
    p
}

/// Field for hashing edge indices of an `n`-node graph (domain `n^2`).
pub fn edge_field_prime(n: usize) -> u64 {
    smallest_prime_above((n as u64) * (n as u64))
}

/// Field for hashing node ids (domain `n`).
pub fn node_field_prime(n: usize) -> u64 {
    smallest_prime_above(n as u64)
}

/// Polynomial hash `x -> sum_j coeffs[j] * x^j mod q` of degree `k - 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFamily {
    k: usize,
    q: u64,
    coeffs: Vec<u64>,
    tag: u64,
}

impl HashFamily {
    /// Directly specified coefficients (used for enumerating whole families).
    pub fn from_coeffs(q: u64, coeffs: Vec<u64>, tag: u64) -> Result<Self> {
        if !is_prime(q) {
            return param(format!("field size {q} is not prime"));
        }
        if coeffs.is_empty() {
            return param("need at least one coefficient");
        }
        if let Some(c) = coeffs.iter().find(|&&c| c >= q) {
            return param(format!("coefficient {c} not reduced mod {q}"));
        }
        Ok(Self { k: coeffs.len(), q, coeffs, tag })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn eval(&self, x: u64) -> Result<u64> {
        if x >= self.q {
            return param(format!("hash input {x} outside field of size {}", self.q));
        }
        Ok(self.eval_unchecked(x))
    }

    /// Horner evaluation; `x` must already be below `q`.
    #[inline]
    pub fn eval_unchecked(&self, x: u64) -> u64 {
        let q = self.q as u128;
        let x = x as u128;
        let mut acc = 0u128;
        for &c in self.coeffs.iter().rev() {
            acc = (acc * x + c as u128) % q;
        }
        acc as u64
    }

    /// Evaluation from precomputed powers `x^0..x^(k-1) mod q` (see [`powers`]).
    #[inline]
    pub fn eval_with_powers(&self, pow: &[u64]) -> u64 {
        debug_assert!(pow.len() >= self.k);
        if self.q < 1 << 28 {
            // Each product is below 2^56, so up to 256 terms fit in a u64.
            let s: u64 = self.coeffs.iter().zip(pow).map(|(&c, &p)| c * p).sum();
            s % self.q
        } else {
            let s: u128 = self.coeffs.iter().zip(pow).map(|(&c, &p)| c as u128 * p as u128).sum();
            (s % self.q as u128) as u64
        }
    }

    /// `floor(p * q)`: the hash values below this count as a success.
    pub fn threshold(&self, p: f64) -> u64 {
        quantize(p, self.q)
    }

    /// True iff `item` hashes below `floor(p * q)`; marginal success
    /// probability is exactly `floor(p * q) / q`.
    pub fn bernoulli_sample(&self, item: u64, p: f64) -> bool {
        self.eval_unchecked(item % self.q) < self.threshold(p)
    }
}

pub fn quantize(p: f64, q: u64) -> u64 {
    ((p.clamp(0.0, 1.0) * q as f64).floor() as u64).min(q)
}

/// `x^0, x^1, ..., x^(k-1)` modulo `q`.
pub fn powers(x: u64, k: usize, q: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(k);
    let mut p = 1u64 % q;
    for _ in 0..k {
        out.push(p);
        p = ((p as u128 * x as u128) % q as u128) as u64;
    }
    out
}

/// Derives the `tag`-th family from the shared seed. The seed and tag are
/// expanded through a keyed stream so that each tag gets its own coefficient
/// stream; within one family the `k` coefficients are uniform in `[0, q)`.
pub fn derive_family(seed: &SharedSeed, k: usize, q: u64, tag: u64) -> Result<HashFamily> {
    if k == 0 {
        return param("k must be positive");
    }
    if !is_prime(q) {
        return param(format!("field size {q} is not prime"));
    }
    let need = k * ceil_log2(q).max(1) as usize;
    if seed.bits() < need {
        return Err(Error::Param(format!(
            "seed has {} bits, need {need} for k = {k} coefficients mod {q}",
            seed.bits()
        )));
    }
    let mut rng = coefficient_stream(seed, tag);
    let coeffs = (0..k).map(|_| rng.gen_range(0..q)).collect();
    Ok(HashFamily { k, q, coeffs, tag })
}

/// A single uniform element of `[lo, hi)` drawn from the `tag` stream of the seed.
pub fn derive_scalar(seed: &SharedSeed, tag: u64, lo: u64, hi: u64) -> u64 {
    coefficient_stream(seed, tag ^ 0xa5a5_a5a5_0000_0001).gen_range(lo..hi)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn coefficient_stream(seed: &SharedSeed, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(tag ^ 0x5151_5151_5151_5151) ^ seed.bits() as u64;
    for (i, w) in seed.words().iter().enumerate() {
        state = splitmix64(state ^ w.rotate_left((i as u32 * 17) % 64));
    }
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state ^ tag);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Exhaustive check over the whole family of degree-`(k-1)` polynomials mod
/// `q`: for every set of `k` distinct points, each of the `q^k` value tuples
/// must be hit by exactly one polynomial.
pub fn joint_distribution_is_uniform(k: usize, q: u64) -> Result<bool> {
    if k == 0 || k as u64 > q || !is_prime(q) || (q as u128).pow(k as u32) > 1 << 24 {
        return param(format!("exhaustive check needs 1 <= k <= q, prime q and q^k <= 2^24, got k = {k}, q = {q}"));
    }
    let size = q.pow(k as u32) as usize;
    let families: Vec<HashFamily> = (0..size as u64)
        .map(|mut code| {
            let coeffs = (0..k)
                .map(|_| {
                    let c = code % q;
                    code /= q;
                    c
                })
                .collect();
            HashFamily::from_coeffs(q, coeffs, 0)
        })
        .collect::<Result<_>>()?;
    let mut points: Vec<u64> = (0..k as u64).collect();
    let mut hits = vec![0u32; size];
    loop {
        hits.fill(0);
        for f in &families {
            let slot = points.iter().fold(0u64, |acc, &x| acc * q + f.eval_unchecked(x));
            hits[slot as usize] += 1;
        }
        if hits.iter().any(|&h| h != 1) {
            return Ok(false);
        }
        // Next k-subset of [0, q) in lexicographic order.
        let Some(i) = (0..k).rev().find(|&i| points[i] < q - (k - i) as u64) else {
            return Ok(true);
        };
        points[i] += 1;
        for j in i + 1..k {
            points[j] = points[j - 1] + 1;
        }
    }
}

/// Combines tag components into one 64-bit tag. Distinct component tuples map
/// to distinct tags with overwhelming probability.
pub fn make_tag(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243f_6a88_85a3_08d3, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Tail bound for sums of k-wise independent 0-1 variables:
/// `sqrt(2) * cosh(sqrt(k^3 / 36C)) * (kC / (e T^2))^(k/2)`, clipped to 1.
pub fn schmidt_tail_bound(k: u32, c: f64, t: f64) -> Result<f64> {
    if k < 2 || !k.is_multiple_of(2) {
        return param(format!("k must be even and at least 2, got {k}"));
    }
    if !(c > 0.0 && t > 0.0) {
        return param("C and T must be positive");
    }
    let kf = k as f64;
    let x = (kf.powi(3) / (36.0 * c)).sqrt();
    // ln cosh x = x + ln(1 + e^-2x) - ln 2, stable for large x.
    let ln_cosh = x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2;
    let ratio = kf * c / (std::f64::consts::E * t * t);
    let ln_bound = 0.5 * std::f64::consts::LN_2 + ln_cosh + 0.5 * kf * ratio.ln();
    if !ln_bound.is_finite() || ln_bound >= 0.0 {
        return Ok(1.0);
    }
    Ok(ln_bound.exp())
}
