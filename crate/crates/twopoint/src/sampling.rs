//! Deterministic low-discrepancy streams for pair scans.
//!
//! Scans must be reproducible from a seed alone, so pair generation avoids
//! shared mutable RNG state: a Halton sequence indexed by draw number gives
//! the same pairs for the same seed regardless of thread count, and auxiliary
//! randomized checks get their own counter-based ChaCha streams.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};

/// Coprime radical-inverse bases, one per product-chart coordinate. Six
/// bases cover pairs of points on domains of dimension up to three.
pub const HALTON_BASES: [u64; 6] = [2, 3, 5, 7, 11, 13];

/// First index handed out for seed zero. The leading entries of a Halton
/// sequence are strongly correlated across bases, so they are skipped.
const INDEX_OFFSET: u64 = 4096;

/// Index stride separating the starting points of distinct seeds.
const SEED_STRIDE: u64 = 17;

/// Fractional part of i written in the given base with reversed digits.
/// Lies in [0, 1) for every index and is zero only at index zero.
pub fn radical_inverse(base: u64, mut index: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// Halton points in the unit cube, indexed deterministically from a seed.
#[derive(Debug, Clone)]
pub struct HaltonSeq {
    dim: usize,
    index: u64,
}

impl HaltonSeq {
    pub fn new(dim: usize, seed: u64) -> Result<HaltonSeq> {
        if dim == 0 || dim > HALTON_BASES.len() {
            return Err(Error::ConfigError(format!(
                "halton dimension {dim} outside 1..={}",
                HALTON_BASES.len()
            )));
        }
        Ok(HaltonSeq { dim, index: INDEX_OFFSET + (seed % 65536) * SEED_STRIDE })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Next point of the sequence; each call advances the index by one.
    pub fn next_point(&mut self) -> Vec<f64> {
        let p = (0..self.dim).map(|c| radical_inverse(HALTON_BASES[c], self.index)).collect();
        self.index += 1;
        p
    }
}

/// Point pairs quasi-uniform over the product of two copies of a domain's
/// chart box. A pair is one 2·dim dimensional Halton draw, so x and y are
/// jointly low-discrepancy rather than independently so.
#[derive(Debug, Clone)]
pub struct PairSampler {
    domain: Arc<DomainSpec>,
    seq: HaltonSeq,
}

impl PairSampler {
    pub fn new(domain: Arc<DomainSpec>, seed: u64) -> Result<PairSampler> {
        let seq = HaltonSeq::new(2 * domain.dim(), seed)?;
        Ok(PairSampler { domain, seq })
    }

    /// Next (x, y) chart pair, both in the closed chart box.
    pub fn next_pair(&mut self) -> (Vec<f64>, Vec<f64>) {
        let u = self.seq.next_point();
        let dim = self.domain.dim();
        let stretch = |c: usize, t: f64| {
            let a = &self.domain.axes()[c];
            a.min + t * (a.max - a.min)
        };
        let x = (0..dim).map(|c| stretch(c, u[c])).collect();
        let y = (0..dim).map(|c| stretch(c, u[dim + c])).collect();
        (x, y)
    }
}

/// ChaCha generator for a (seed, stream) label. Distinct streams of the same
/// seed are decorrelated so independent checks can share one config seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
