//! Bit-exact wire format for server-to-edge update packets.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! offset 0   version      u8   (currently 1)
//! offset 1   frame_type   u8   (0 full, 1 sparse, 2 reinit_sparse, 3 skip)
//! offset 2   round        u32
//! offset 6   i_count      u32
//! ...        type-specific body, see below
//! tail       checksum     u32  CRC-32 over every preceding byte
//! ```
//!
//! Bodies:
//! * full: `s_w u8 | i_count values`
//! * sparse: `s_w u8 | k_count u32 | mask_encoding u8 | mask | k_count values`
//! * reinit_sparse: `s_w u8 | k_count u32 | seed u64 | mask_encoding u8 | mask | k_count values`
//! * skip: empty (the whole frame is exactly 14 bytes)
//!
//! Values are IEEE bit patterns, 4 or 8 bytes per the `s_w` field (32-bit
//! frames carry the nearest f32). Transmitted values are absolute new
//! weights, so application is idempotent and never accumulates transport
//! rounding. The mask section is either a raw bitmap (bit `i` lives in
//! byte `i/8` at bit `i%8`) or the block code from [`classcode`], chosen
//! per packet by whichever is smaller; masks with zero or full population
//! are implied by `k_count` and occupy no bytes at all.

mod bits;
mod classcode;
mod crc32;

use thiserror::Error;

use crate::nn::{init_weights, WeightVector};
use crate::update::Mask;
use bits::{BitReader, BitWriter};
use classcode::{ClassCode, BLOCK_BITS};
use crc32::crc32;

pub const WIRE_VERSION: u8 = 1;
/// A skip frame is a bare header plus checksum.
pub const SKIP_FRAME_BYTES: usize = 14;
/// Sanity cap on the declared weight count, so a crafted header cannot
/// demand absurd allocations before the body length catches it.
const MAX_I_COUNT: u32 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("frame checksum mismatch")]
    ChecksumMismatch,
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u8),
    #[error("frame truncated")]
    TruncatedFrame,
    #[error("mask has {actual} ones but the header says {expected}")]
    MaskCountMismatch { expected: u32, actual: u32 },
    #[error("invalid field: {0}")]
    InvalidField(String),
}

fn invalid(msg: impl Into<String>) -> CodecError {
    CodecError::InvalidField(msg.into())
}

/// Transmitted bits per weight value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueWidth {
    W32,
    W64,
}

impl ValueWidth {
    pub fn bits(self) -> u8 {
        match self {
            ValueWidth::W32 => 32,
            ValueWidth::W64 => 64,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    pub fn from_bits(bits: u8) -> Result<Self, CodecError> {
        match bits {
            32 => Ok(ValueWidth::W32),
            64 => Ok(ValueWidth::W64),
            other => Err(invalid(format!("value width {other} bits"))),
        }
    }

    /// The value as the receiver will see it.
    pub fn quantize(self, v: f64) -> f64 {
        match self {
            ValueWidth::W32 => v as f32 as f64,
            ValueWidth::W64 => v,
        }
    }

    fn write_value(self, v: f64, out: &mut Vec<u8>) -> Result<(), CodecError> {
        if !self.quantize(v).is_finite() {
            return Err(invalid(format!("value {v} not representable")));
        }
        match self {
            ValueWidth::W32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            ValueWidth::W64 => out.extend_from_slice(&v.to_le_bytes()),
        }
        Ok(())
    }

    fn read_value(self, bytes: &[u8]) -> Result<f64, CodecError> {
        let v = match self {
            ValueWidth::W32 => f32::from_le_bytes(bytes.try_into().unwrap()) as f64,
            ValueWidth::W64 => f64::from_le_bytes(bytes.try_into().unwrap()),
        };
        if !v.is_finite() {
            return Err(invalid("non-finite transmitted value"));
        }
        Ok(v)
    }
}

/// How the mask section is encoded on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskEncoding {
    RawBitmap,
    BlockCoded,
}

impl MaskEncoding {
    fn code(self) -> u8 {
        match self {
            MaskEncoding::RawBitmap => 0,
            MaskEncoding::BlockCoded => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self, CodecError> {
        match code {
            0 => Ok(MaskEncoding::RawBitmap),
            1 => Ok(MaskEncoding::BlockCoded),
            other => Err(invalid(format!("mask encoding {other}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MaskEncoding::RawBitmap => "raw_bitmap",
            MaskEncoding::BlockCoded => "block_coded",
        }
    }
}

/// Frame body variants.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Full { width: ValueWidth, values: Vec<f64> },
    Sparse { width: ValueWidth, mask: Mask, values: Vec<f64> },
    ReinitSparse { width: ValueWidth, seed: u64, mask: Mask, values: Vec<f64> },
    Skip,
}

impl Frame {
    fn type_code(&self) -> u8 {
        match self {
            Frame::Full { .. } => 0,
            Frame::Sparse { .. } => 1,
            Frame::ReinitSparse { .. } => 2,
            Frame::Skip => 3,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Frame::Full { .. } => "full",
            Frame::Sparse { .. } => "sparse",
            Frame::ReinitSparse { .. } => "reinit_sparse",
            Frame::Skip => "skip",
        }
    }
}

/// One decoded (or to-be-encoded) update packet.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePacket {
    pub version: u8,
    pub round: u32,
    pub i_count: u32,
    pub frame: Frame,
}

impl UpdatePacket {
    pub fn new(round: u32, i_count: u32, frame: Frame) -> Self {
        Self { version: WIRE_VERSION, round, i_count, frame }
    }

    pub fn skip(round: u32, i_count: u32) -> Self {
        Self::new(round, i_count, Frame::Skip)
    }
}

/// Size and layout facts about an encoded packet, for inspection tools.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketInfo {
    pub version: u8,
    pub frame_type: &'static str,
    pub round: u32,
    pub i_count: u32,
    pub s_w: Option<u8>,
    pub k_count: Option<u32>,
    pub seed: Option<u64>,
    pub mask_encoding: Option<MaskEncoding>,
    pub mask_bytes: usize,
    pub value_bytes: usize,
    pub total_bytes: usize,
    pub checksum: u32,
}

fn raw_mask_len(i_count: u32) -> usize {
    (i_count as usize).div_ceil(8)
}

fn mask_to_raw(mask: &Mask) -> Vec<u8> {
    let mut out = vec![0u8; raw_mask_len(mask.len() as u32)];
    for i in mask.ones() {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

fn raw_to_bits(bytes: &[u8], i_count: usize) -> Result<Vec<bool>, CodecError> {
    let mut bits = vec![false; i_count];
    for (i, bit) in bits.iter_mut().enumerate() {
        *bit = bytes[i / 8] >> (i % 8) & 1 == 1;
    }
    for i in i_count..bytes.len() * 8 {
        if bytes[i / 8] >> (i % 8) & 1 == 1 {
            return Err(invalid("raw mask padding not zero"));
        }
    }
    Ok(bits)
}

fn mask_to_blocks(mask: &Mask) -> Vec<u32> {
    let n_blocks = mask.len().div_ceil(BLOCK_BITS);
    let mut blocks = vec![0u32; n_blocks];
    for i in mask.ones() {
        blocks[i / BLOCK_BITS] |= 1 << (i % BLOCK_BITS);
    }
    blocks
}

fn blocks_to_bits(blocks: &[u32], i_count: usize) -> Result<Vec<bool>, CodecError> {
    let mut bits = vec![false; i_count];
    for (b, &block) in blocks.iter().enumerate() {
        for j in 0..BLOCK_BITS {
            let i = b * BLOCK_BITS + j;
            let set = block >> j & 1 == 1;
            if i < i_count {
                bits[i] = set;
            } else if set {
                return Err(invalid("coded mask padding not zero"));
            }
        }
    }
    Ok(bits)
}

fn encode_mask_section(mask: &Mask, k_count: u32, i_count: u32, out: &mut Vec<u8>) {
    if k_count == 0 || k_count == i_count {
        out.push(MaskEncoding::RawBitmap.code());
        return;
    }
    let raw = mask_to_raw(mask);
    // The code construction cannot fail for a non-degenerate rate.
    let code = ClassCode::new(k_count, i_count).expect("non-degenerate rate");
    let blocks = mask_to_blocks(mask);
    let coded_bits = code.coded_bits(&blocks);
    let coded_len = (coded_bits as usize).div_ceil(8);
    if coded_len < raw.len() {
        out.push(MaskEncoding::BlockCoded.code());
        let mut w = BitWriter::new();
        for &b in &blocks {
            code.encode_block(b, &mut w);
        }
        out.extend_from_slice(&w.into_bytes());
    } else {
        out.push(MaskEncoding::RawBitmap.code());
        out.extend_from_slice(&raw);
    }
}

fn encode_sparse_body(
    i_count: u32,
    width: ValueWidth,
    seed: Option<u64>,
    mask: &Mask,
    values: &[f64],
    out: &mut Vec<u8>,
) -> Result<(), CodecError> {
    if mask.len() != i_count as usize {
        return Err(invalid(format!("mask len {} vs i_count {i_count}", mask.len())));
    }
    if values.len() != mask.cardinality() {
        return Err(invalid(format!(
            "{} values for {} mask ones",
            values.len(),
            mask.cardinality()
        )));
    }
    let k_count = mask.cardinality() as u32;
    out.push(width.bits());
    out.extend_from_slice(&k_count.to_le_bytes());
    if let Some(seed) = seed {
        out.extend_from_slice(&seed.to_le_bytes());
    }
    encode_mask_section(mask, k_count, i_count, out);
    for &v in values {
        width.write_value(v, out)?;
    }
    Ok(())
}

/// Serializes a packet to its canonical byte sequence.
pub fn encode_packet(packet: &UpdatePacket) -> Result<Vec<u8>, CodecError> {
    if packet.version != WIRE_VERSION {
        return Err(CodecError::UnsupportedVersion(packet.version));
    }
    if packet.i_count == 0 {
        return Err(invalid("zero weight count"));
    }
    if packet.i_count > MAX_I_COUNT {
        return Err(invalid(format!(
            "weight count {} exceeds the supported maximum",
            packet.i_count
        )));
    }
    let mut out = Vec::new();
    out.push(packet.version);
    out.push(packet.frame.type_code());
    out.extend_from_slice(&packet.round.to_le_bytes());
    out.extend_from_slice(&packet.i_count.to_le_bytes());
    match &packet.frame {
        Frame::Skip => {}
        Frame::Full { width, values } => {
            if values.len() != packet.i_count as usize {
                return Err(invalid(format!(
                    "{} values for {} weights",
                    values.len(),
                    packet.i_count
                )));
            }
            out.push(width.bits());
            for &v in values {
                width.write_value(v, &mut out)?;
            }
        }
        Frame::Sparse { width, mask, values } => {
            encode_sparse_body(packet.i_count, *width, None, mask, values, &mut out)?;
        }
        Frame::ReinitSparse { width, seed, mask, values } => {
            encode_sparse_body(packet.i_count, *width, Some(*seed), mask, values, &mut out)?;
        }
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.bytes.len() {
            return Err(CodecError::TruncatedFrame);
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

fn decode_mask_section(
    cur: &mut Cursor,
    k_count: u32,
    i_count: u32,
) -> Result<(Mask, MaskEncoding), CodecError> {
    let encoding = MaskEncoding::from_code(cur.u8()?)?;
    let i = i_count as usize;
    let bits = if k_count == 0 || k_count == i_count {
        if encoding != MaskEncoding::RawBitmap {
            return Err(invalid("degenerate mask must use the raw encoding"));
        }
        vec![k_count == i_count; i]
    } else {
        match encoding {
            MaskEncoding::RawBitmap => {
                let bytes = cur.take(raw_mask_len(i_count))?;
                raw_to_bits(bytes, i)?
            }
            MaskEncoding::BlockCoded => {
                let code = ClassCode::new(k_count, i_count)?;
                let mut reader = BitReader::new(cur.remaining());
                let n_blocks = i.div_ceil(BLOCK_BITS);
                let mut blocks = Vec::with_capacity(n_blocks);
                for _ in 0..n_blocks {
                    blocks.push(code.decode_block(&mut reader)?);
                }
                let used = reader.bit_pos();
                let byte_len = used.div_ceil(8);
                for _ in used..byte_len * 8 {
                    if reader.read_bit() == Some(true) {
                        return Err(invalid("coded mask padding not zero"));
                    }
                }
                cur.take(byte_len)?;
                blocks_to_bits(&blocks, i)?
            }
        }
    };
    let actual = bits.iter().filter(|&&b| b).count() as u32;
    if actual != k_count {
        return Err(CodecError::MaskCountMismatch { expected: k_count, actual });
    }
    let mask = Mask::from_bits(bits).map_err(|_| invalid("empty mask"))?;
    Ok((mask, encoding))
}

fn decode_values(cur: &mut Cursor, width: ValueWidth, count: usize) -> Result<Vec<f64>, CodecError> {
    if count.checked_mul(width.bytes()).map_or(true, |n| n > cur.remaining().len()) {
        return Err(CodecError::TruncatedFrame);
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(width.read_value(cur.take(width.bytes())?)?);
    }
    Ok(values)
}

fn parse(bytes: &[u8]) -> Result<(UpdatePacket, PacketInfo), CodecError> {
    if bytes.len() < SKIP_FRAME_BYTES {
        return Err(CodecError::TruncatedFrame);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let checksum = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32(body) != checksum {
        return Err(CodecError::ChecksumMismatch);
    }
    let mut cur = Cursor { bytes: body, pos: 0 };
    let version = cur.u8()?;
    if version != WIRE_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let type_code = cur.u8()?;
    let round = cur.u32()?;
    let i_count = cur.u32()?;
    if i_count == 0 {
        return Err(invalid("zero weight count"));
    }
    if i_count > MAX_I_COUNT {
        return Err(invalid(format!("weight count {i_count} exceeds the supported maximum")));
    }
    let mut info = PacketInfo {
        version,
        frame_type: "",
        round,
        i_count,
        s_w: None,
        k_count: None,
        seed: None,
        mask_encoding: None,
        mask_bytes: 0,
        value_bytes: 0,
        total_bytes: bytes.len(),
        checksum,
    };
    let frame = match type_code {
        0 => {
            let width = ValueWidth::from_bits(cur.u8()?)?;
            info.s_w = Some(width.bits());
            let start = cur.pos;
            let values = decode_values(&mut cur, width, i_count as usize)?;
            info.value_bytes = cur.pos - start;
            Frame::Full { width, values }
        }
        1 | 2 => {
            let width = ValueWidth::from_bits(cur.u8()?)?;
            info.s_w = Some(width.bits());
            let k_count = cur.u32()?;
            if k_count > i_count {
                return Err(invalid(format!("k_count {k_count} exceeds {i_count}")));
            }
            info.k_count = Some(k_count);
            let seed = if type_code == 2 {
                let s = cur.u64()?;
                info.seed = Some(s);
                Some(s)
            } else {
                None
            };
            let mask_start = cur.pos;
            let (mask, encoding) = decode_mask_section(&mut cur, k_count, i_count)?;
            info.mask_encoding = Some(encoding);
            info.mask_bytes = cur.pos - mask_start - 1;
            let start = cur.pos;
            let values = decode_values(&mut cur, width, k_count as usize)?;
            info.value_bytes = cur.pos - start;
            match seed {
                Some(seed) => Frame::ReinitSparse { width, seed, mask, values },
                None => Frame::Sparse { width, mask, values },
            }
        }
        3 => Frame::Skip,
        other => return Err(invalid(format!("frame type {other}"))),
    };
    if cur.pos != body.len() {
        return Err(invalid(format!("{} trailing bytes", body.len() - cur.pos)));
    }
    info.frame_type = frame.type_name();
    Ok((UpdatePacket { version, round, i_count, frame }, info))
}

/// Parses and validates a packet; the exact inverse of [`encode_packet`].
pub fn decode_packet(bytes: &[u8]) -> Result<UpdatePacket, CodecError> {
    Ok(parse(bytes)?.0)
}

/// Layout inspection without materializing the packet.
pub fn inspect_packet(bytes: &[u8]) -> Result<PacketInfo, CodecError> {
    Ok(parse(bytes)?.1)
}

/// Applies a decoded packet to the deployed weights, returning the new
/// edge-side weight vector.
pub fn apply_packet(
    deployed: &WeightVector,
    packet: &UpdatePacket,
) -> crate::error::Result<WeightVector> {
    if packet.i_count as usize != deployed.len() {
        return Err(crate::error::Error::DimensionMismatch(format!(
            "packet for {} weights applied to {}",
            packet.i_count,
            deployed.len()
        )));
    }
    let arch = deployed.arch().clone();
    match &packet.frame {
        Frame::Skip => Ok(deployed.clone()),
        Frame::Full { values, .. } => WeightVector::from_values(arch, values.clone()),
        Frame::Sparse { mask, values, .. } => {
            let mut out = deployed.values().to_vec();
            for (i, &v) in mask.ones().zip(values) {
                out[i] = v;
            }
            WeightVector::from_values(arch, out)
        }
        Frame::ReinitSparse { seed, mask, values, .. } => {
            let mut out = init_weights(&arch, *seed).into_values();
            for (i, &v) in mask.ones().zip(values) {
                out[i] = v;
            }
            WeightVector::from_values(arch, out)
        }
    }
}
