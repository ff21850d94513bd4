//! Static canonical code over 32-bit mask blocks.
//!
//! Blocks are grouped by population count. Class `c` gets codewords of a
//! single length derived from the block probability under an independent
//! ones model with rate p = k_count / I, and blocks within a class are
//! ordered by the combinatorial number system, so no code table is ever
//! transmitted: both sides rebuild the code from the packet header alone.
//!
//! Because every class length is at least the block's ideal information
//! content, the total coded size of any mask with exactly k_count ones is
//! at least S_x(k_count / I) * I bits, and the per-block ceiling waste
//! bounds it above by that plus one bit per block.

use super::bits::{BitReader, BitWriter};
use super::CodecError;

pub(crate) const BLOCK_BITS: usize = 32;
const CLASSES: usize = BLOCK_BITS + 1;

pub(crate) struct ClassCode {
    lengths: [u32; CLASSES],
    first: [u64; CLASSES],
    order: [usize; CLASSES],
    binom: [[u64; CLASSES]; CLASSES],
}

fn binom_table() -> [[u64; CLASSES]; CLASSES] {
    let mut t = [[0u64; CLASSES]; CLASSES];
    for n in 0..CLASSES {
        t[n][0] = 1;
        for k in 1..=n {
            t[n][k] = t[n - 1][k - 1] + if k <= n - 1 { t[n - 1][k] } else { 0 };
        }
    }
    t
}

impl ClassCode {
    /// Builds the code for masks of `i_count` bits with exactly `k_count`
    /// ones, 0 < k_count < i_count.
    pub(crate) fn new(k_count: u32, i_count: u32) -> Result<Self, CodecError> {
        if k_count == 0 || k_count >= i_count {
            return Err(CodecError::InvalidField(format!(
                "degenerate mask rate {k_count}/{i_count} needs no code"
            )));
        }
        let binom = binom_table();
        let p = k_count as f64 / i_count as f64;
        let (lp, lq) = (p.log2(), (1.0 - p).log2());
        let mut lengths = [0u32; CLASSES];
        for (c, len) in lengths.iter_mut().enumerate() {
            let nll = -(c as f64 * lp + (BLOCK_BITS - c) as f64 * lq);
            *len = (nll.ceil() as i64).clamp(1, 64) as u32;
        }
        // The ceiling above already satisfies Kraft; the exact integer
        // check guards against boundary rounding, lengthening everything
        // a notch if it ever trips.
        loop {
            let sum: u128 = (0..CLASSES)
                .map(|c| (binom[BLOCK_BITS][c] as u128) << (64 - lengths[c]))
                .sum();
            if sum <= 1u128 << 64 {
                break;
            }
            for len in &mut lengths {
                *len = (*len + 1).min(64);
            }
        }
        let mut order: [usize; CLASSES] = std::array::from_fn(|i| i);
        order.sort_by_key(|&c| (lengths[c], c));
        let mut first = [0u64; CLASSES];
        let mut next: u128 = 0;
        let mut prev_len = lengths[order[0]];
        for &c in &order {
            next <<= lengths[c] - prev_len;
            first[c] = next as u64;
            next += binom[BLOCK_BITS][c] as u128;
            prev_len = lengths[c];
        }
        Ok(Self { lengths, first, order, binom })
    }

    pub(crate) fn block_length(&self, block: u32) -> u32 {
        self.lengths[block.count_ones() as usize]
    }

    /// Total coded bits for a sequence of blocks.
    pub(crate) fn coded_bits(&self, blocks: &[u32]) -> u64 {
        blocks.iter().map(|&b| self.block_length(b) as u64).sum()
    }

    /// Index of `block` among all 32-bit values of equal population count,
    /// in increasing numeric order.
    fn rank(&self, block: u32) -> u64 {
        let mut r = 0u64;
        let mut j = 0usize;
        for b in 0..BLOCK_BITS {
            if block >> b & 1 == 1 {
                j += 1;
                r += self.binom[b][j];
            }
        }
        r
    }

    fn unrank(&self, mut r: u64, c: usize) -> Result<u32, CodecError> {
        let mut block = 0u32;
        let mut prev = BLOCK_BITS;
        for j in (1..=c).rev() {
            let b = (j - 1..prev)
                .rev()
                .find(|&b| self.binom[b][j] <= r)
                .ok_or_else(|| CodecError::InvalidField("mask code rank".into()))?;
            block |= 1 << b;
            r -= self.binom[b][j];
            prev = b;
        }
        if r != 0 {
            return Err(CodecError::InvalidField("mask code rank".into()));
        }
        Ok(block)
    }

    pub(crate) fn encode_block(&self, block: u32, out: &mut BitWriter) {
        let c = block.count_ones() as usize;
        out.write_bits(self.first[c] + self.rank(block), self.lengths[c]);
    }

    pub(crate) fn decode_block(&self, reader: &mut BitReader) -> Result<u32, CodecError> {
        let mut value = 0u64;
        let mut have = 0u32;
        for &c in &self.order {
            while have < self.lengths[c] {
                let bit = reader.read_bit().ok_or(CodecError::TruncatedFrame)?;
                value = value << 1 | bit as u64;
                have += 1;
            }
            let count = self.binom[BLOCK_BITS][c];
            if value >= self.first[c] && value - self.first[c] < count {
                return self.unrank(value - self.first[c], c);
            }
        }
        Err(CodecError::InvalidField("mask codeword out of range".into()))
    }
}
