//! MSB-first bit stream helpers for the coded mask section.

/// Accumulates bits most-significant-first; the final byte is zero-padded.
pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    pub(crate) fn new() -> Self {
        Self { bytes: Vec::new(), bit_len: 0 }
    }

    pub(crate) fn write_bit(&mut self, bit: bool) {
        let slot = self.bit_len % 8;
        if slot == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> slot;
        }
        self.bit_len += 1;
    }

    /// Writes the low `count` bits of `value`, most significant first.
    pub(crate) fn write_bits(&mut self, value: u64, count: u32) {
        debug_assert!(count <= 64);
        for i in (0..count).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    #[cfg(test)]
    pub(crate) fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub(crate) fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// Reads bits most-significant-first from a byte slice.
pub(crate) struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn read_bit(&mut self) -> Option<bool> {
        let byte = self.bytes.get(self.pos / 8)?;
        let bit = (byte >> (7 - self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Some(bit)
    }

    pub(crate) fn bit_pos(&self) -> usize {
        self.pos
    }

    /// True iff every remaining bit through the end of the slice is zero.
    #[cfg(test)]
    pub(crate) fn remainder_is_zero(&mut self) -> bool {
        while self.pos < self.bytes.len() * 8 {
            if self.read_bit() == Some(true) {
                return false;
            }
        }
        true
    }
}
