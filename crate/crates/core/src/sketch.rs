//! Linear ℓ0-sampling sketches of signed edge-incidence vectors.
//!
//! Entry `index(u, v)` of node `x`'s vector is `+1` when `x = min(u, v)` and
//! `-1` when `x = max(u, v)`, so summing the vectors of a node set cancels
//! internal edges and leaves `±1` on exactly the boundary edges.
//!
//! Each repetition owns one k-wise hash `h_r`; index `i` belongs to level `l`
//! of repetition `r` iff `h_r(i) < floor(q / 2^l)`. Levels are nested, so level
//! 0 holds the whole vector.

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::graph::{ceil_log2, decode_edge_index, edge_index, KeyBound, NodeId, WeightKey};
use crate::kwise::{
    default_k, derive_family, derive_scalar, edge_field_prime, make_tag, powers, HashFamily, SharedSeed,
};
use crate::sim::{BitReader, BitWriter};

/// Fingerprint modulus `2^61 - 1`.
pub const FINGERPRINT_PRIME: u64 = (1 << 61) - 1;

#[inline]
fn mulmod61(a: u64, b: u64) -> u64 {
    let p = a as u128 * b as u128;
    let s = (p as u64 & FINGERPRINT_PRIME) + (p >> 61) as u64;
    if s >= FINGERPRINT_PRIME {
        s - FINGERPRINT_PRIME
    } else {
        s
    }
}

#[inline]
fn addmod61(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= FINGERPRINT_PRIME {
        s - FINGERPRINT_PRIME
    } else {
        s
    }
}

fn powmod61(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod61(acc, base);
        }
        base = mulmod61(base, base);
        exp >>= 1;
    }
    acc
}

/// `a * t mod P` for a signed coefficient `a`.
#[inline]
fn scale61(a: i64, t: u64) -> u64 {
    let m = mulmod61(a.unsigned_abs() % FINGERPRINT_PRIME, t);
    if a < 0 && m != 0 {
        FINGERPRINT_PRIME - m
    } else {
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SketchParams {
    /// Number of levels, `L + 1` with `L = ceil(log2 n^2)`.
    pub levels: usize,
    pub reps: usize,
}

impl SketchParams {
    pub fn for_n(n: usize) -> Self {
        Self::with_reps(n, (2 * ceil_log2(n as u64) as usize).max(1))
    }

    pub fn with_reps(n: usize, reps: usize) -> Self {
        let nn = n as u64 * n as u64;
        Self { levels: ceil_log2(nn) as usize + 1, reps }
    }

    pub fn cells(&self) -> usize {
        self.levels * self.reps
    }

    /// Serialized size: a two-word header plus three words per cell.
    pub fn bits(&self) -> usize {
        64 * (2 + 3 * self.cells())
    }
}

/// Everything needed to build, merge and decode sketches under one tag: the
/// per-repetition hashes and the fingerprint base `z`.
#[derive(Clone, Debug)]
pub struct SketchFamily {
    n: usize,
    params: SketchParams,
    tag: u64,
    z: u64,
    hashes: Vec<HashFamily>,
    thresholds: Vec<u64>,
}

impl SketchFamily {
    /// `z_tag` selects the fingerprint base; sketches derived with the same
    /// `z_tag` can share [`PreparedIndex`] values.
    pub fn derive(seed: &SharedSeed, n: usize, params: SketchParams, tag: u64, z_tag: u64) -> Result<Self> {
        let k = default_k(n);
        let q = edge_field_prime(n);
        let hashes = (0..params.reps)
            .map(|r| derive_family(seed, k, q, make_tag(&[tag, r as u64])))
            .collect::<Result<Vec<_>>>()?;
        let thresholds = (0..params.levels).map(|l| if l >= 64 { 0 } else { q >> l }).collect();
        let z = derive_scalar(seed, make_tag(&[0x7a, z_tag]), 2, FINGERPRINT_PRIME);
        Ok(Self { n, params, tag, z, hashes, thresholds })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> SketchParams {
        self.params
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn z(&self) -> u64 {
        self.z
    }

    pub fn q(&self) -> u64 {
        self.hashes[0].q()
    }

    pub fn k(&self) -> usize {
        self.hashes[0].k()
    }

    pub fn prepare(&self, index: u64) -> PreparedIndex {
        PreparedIndex::new(index, self.k(), self.q(), self.z)
    }

    /// Deepest level containing `index` in repetition `r`.
    #[inline]
    fn top_level(&self, r: usize, pow: &[u64]) -> usize {
        let h = self.hashes[r].eval_with_powers(pow);
        let mut l = 0;
        while l + 1 < self.params.levels && h < self.thresholds[l + 1] {
            l += 1;
        }
        l
    }

    pub fn zero(&self) -> Sketch {
        Sketch {
            levels: self.params.levels as u32,
            reps: self.params.reps as u32,
            tag: self.tag,
            cells: vec![Cell::default(); self.params.cells()],
        }
    }
}

/// Per-index data reused across all sketches sharing a field and `z`:
/// hash-input powers and the fingerprint term `z^index`.
#[derive(Clone, Debug)]
pub struct PreparedIndex {
    pub index: u64,
    powers: SmallVec<[u64; 20]>,
    fp: u64,
}

impl PreparedIndex {
    pub fn new(index: u64, k: usize, q: u64, z: u64) -> Self {
        Self { index, powers: powers(index % q, k, q).into(), fp: powmod61(z, index) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Cell {
    pub count: i64,
    pub indexsum: i64,
    pub fingerprint: u64,
}

impl Cell {
    fn is_zero(&self) -> bool {
        self.count == 0 && self.indexsum == 0 && self.fingerprint == 0
    }

    fn add(&mut self, other: &Cell) {
        self.count = self.count.wrapping_add(other.count);
        self.indexsum = self.indexsum.wrapping_add(other.indexsum);
        self.fingerprint = addmod61(self.fingerprint, other.fingerprint);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sketch {
    levels: u32,
    reps: u32,
    tag: u64,
    /// Level-major: cell `(l, r)` at `l * reps + r`.
    cells: Vec<Cell>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleOutcome {
    /// A boundary edge; `sign` is its entry in the summed vector.
    Edge {
        lo: NodeId,
        hi: NodeId,
        sign: i8,
    },
    Failure,
    Empty,
}

impl Sketch {
    /// Sketch of the general vector with the given `(index, value)` entries.
    pub fn from_entries(family: &SketchFamily, entries: impl IntoIterator<Item = (u64, i64)>) -> Sketch {
        let mut s = family.zero();
        for (index, value) in entries {
            s.add_prepared(family, &family.prepare(index), value);
        }
        s
    }

    #[inline]
    pub fn add_prepared(&mut self, family: &SketchFamily, p: &PreparedIndex, value: i64) {
        if value == 0 {
            return;
        }
        let term =
            Cell { count: value, indexsum: value.wrapping_mul(p.index as i64), fingerprint: scale61(value, p.fp) };
        let reps = self.reps as usize;
        for r in 0..reps {
            let top = family.top_level(r, &p.powers);
            for l in 0..=top {
                self.cells[l * reps + r].add(&term);
            }
        }
    }

    pub fn levels(&self) -> usize {
        self.levels as usize
    }

    pub fn reps(&self) -> usize {
        self.reps as usize
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(Cell::is_zero)
    }

    fn check_compatible(&self, other: &Sketch) -> Result<()> {
        if self.tag != other.tag || self.levels != other.levels || self.reps != other.reps {
            return Err(Error::Incompatible(format!(
                "tag/shape ({:#x}, {}x{}) vs ({:#x}, {}x{})",
                self.tag, self.levels, self.reps, other.tag, other.levels, other.reps
            )));
        }
        Ok(())
    }

    pub fn merge_from(&mut self, other: &Sketch) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.add(b);
        }
        Ok(())
    }

    pub fn merge(a: &Sketch, b: &Sketch) -> Result<Sketch> {
        let mut out = a.clone();
        out.merge_from(b)?;
        Ok(out)
    }

    /// Scans levels from 0 upwards and, within a level, repetitions in order;
    /// the first cell that verifies as 1-sparse with value `±1` is decoded.
    pub fn sample(&self, family: &SketchFamily) -> Result<SampleOutcome> {
        if family.tag != self.tag || family.params.levels != self.levels() || family.params.reps != self.reps() {
            return Err(Error::Incompatible("sketch decoded with a foreign family".into()));
        }
        if self.is_zero() {
            return Ok(SampleOutcome::Empty);
        }
        let reps = self.reps();
        let nn = family.n as u64 * family.n as u64;
        for l in 0..self.levels() {
            for r in 0..reps {
                let c = &self.cells[l * reps + r];
                if c.count != 1 && c.count != -1 {
                    continue;
                }
                let index = c.indexsum.wrapping_mul(c.count);
                if index < 0 || index as u64 >= nn {
                    continue;
                }
                let p = family.prepare(index as u64);
                if scale61(c.count, p.fp) != c.fingerprint || family.top_level(r, &p.powers) < l {
                    continue;
                }
                return match decode_edge_index(family.n, index as u64) {
                    Some((lo, hi)) => Ok(SampleOutcome::Edge { lo, hi, sign: c.count as i8 }),
                    None => Err(Error::Corruption(format!("verified cell decodes to non-edge index {index}"))),
                };
            }
        }
        Ok(SampleOutcome::Failure)
    }

    /// Header `(levels | reps << 32, tag)` followed by three words per cell.
    pub fn to_words(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(2 + 3 * self.cells.len());
        out.push(self.levels as u64 | (self.reps as u64) << 32);
        out.push(self.tag);
        for c in &self.cells {
            out.extend([c.count as u64, c.indexsum as u64, c.fingerprint]);
        }
        out
    }

    pub fn from_words(words: &[u64]) -> Result<Sketch> {
        let corrupt = |m: &str| Error::Corruption(format!("sketch decode: {m}"));
        if words.len() < 2 {
            return Err(corrupt("missing header"));
        }
        let levels = words[0] as u32;
        let reps = (words[0] >> 32) as u32;
        let cells = levels as usize * reps as usize;
        if words.len() != 2 + 3 * cells {
            return Err(corrupt("length does not match header"));
        }
        let cells = words[2..]
            .chunks_exact(3)
            .map(|w| Cell { count: w[0] as i64, indexsum: w[1] as i64, fingerprint: w[2] })
            .collect();
        Ok(Sketch { levels, reps, tag: words[1], cells })
    }

    /// Little-endian byte layout of [`Sketch::to_words`].
    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_words().iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Sketch> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::Corruption("sketch byte length not a multiple of 8".into()));
        }
        let words: Vec<u64> = bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::from_words(&words)
    }
}

/// Bit widths of one cell on the wire for an `n`-node graph: a count of at
/// most `n^2` boundary edges, an index sum of at most `n^4`, both signed,
/// and a fingerprint below `2^61`.
pub fn cell_widths(n: usize) -> (u32, u32, u32) {
    let w = ceil_log2(n as u64).max(1);
    (2 * w + 2, 4 * w + 2, 61)
}

fn push_signed(out: &mut BitWriter, x: i64, width: u32) {
    debug_assert!(width == 64 || (x >> (width - 1) == 0 || x >> (width - 1) == -1), "{x} overflows {width} bits");
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    out.push(x as u64 & mask, width);
}

fn read_signed(r: &mut BitReader<'_>, width: u32) -> Result<i64> {
    let raw = r.read(width)?;
    Ok(if width < 64 && raw >> (width - 1) == 1 { (raw | !((1u64 << width) - 1)) as i64 } else { raw as i64 })
}

impl Sketch {
    /// Headerless encoding of the cells; shape and tag are implied by the
    /// family. A zero cell encodes as zero bits.
    pub fn write_cells(&self, out: &mut BitWriter, n: usize) {
        let (cw, iw, fw) = cell_widths(n);
        for c in &self.cells {
            push_signed(out, c.count, cw);
            push_signed(out, c.indexsum, iw);
            out.push(c.fingerprint, fw);
        }
    }

    pub fn read_cells(family: &SketchFamily, r: &mut BitReader<'_>) -> Result<Sketch> {
        let (cw, iw, fw) = cell_widths(family.n);
        let mut s = family.zero();
        for c in &mut s.cells {
            c.count = read_signed(r, cw)?;
            c.indexsum = read_signed(r, iw)?;
            c.fingerprint = r.read(fw)?;
            if c.fingerprint >= FINGERPRINT_PRIME {
                return Err(Error::Corruption("fingerprint out of range".into()));
            }
        }
        Ok(s)
    }

    /// Adds `value` at edge `{lo, hi}`; used to peel decoded edges.
    pub fn add_edge(&mut self, family: &SketchFamily, lo: NodeId, hi: NodeId, value: i64) {
        let p = family.prepare(edge_index(family.n, lo, hi));
        self.add_prepared(family, &p, value);
    }
}

/// Bits of [`Sketch::write_cells`] output.
pub fn wire_bits(n: usize, params: SketchParams) -> usize {
    let (cw, iw, fw) = cell_widths(n);
    params.cells() * (cw + iw + fw) as usize
}

/// Sign of `node`'s entry for an incident edge.
pub fn incidence_sign(node: NodeId, key: &WeightKey) -> i64 {
    if node == key.lo {
        1
    } else {
        -1
    }
}

/// Sketch of `node`'s incidence vector restricted to edges with key at most
/// `threshold`.
pub fn build_sketch(node: NodeId, incident: &[WeightKey], threshold: KeyBound, family: &SketchFamily) -> Sketch {
    Sketch::from_entries(
        family,
        incident.iter().filter(|e| threshold.admits(e)).map(|e| (e.index(family.n), incidence_sign(node, e))),
    )
}
