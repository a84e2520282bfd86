use super::{ParseError, Result};

/// MSB-first bit cursor over a byte slice.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn at_byte(data: &'a [u8], byte: usize) -> Self {
        Self {
            data,
            pos: 8 * byte.min(data.len()),
        }
    }

    pub fn data(&self) -> &'a [u8] {
        self.data
    }

    /// Bit position from the start of the buffer.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn len_bits(&self) -> usize {
        8 * self.data.len()
    }

    pub fn bits_left(&self) -> usize {
        self.len_bits() - self.pos
    }

    pub fn is_byte_aligned(&self) -> bool {
        self.pos % 8 == 0
    }

    pub fn byte_pos(&self) -> usize {
        self.pos / 8
    }

    /// Next `n` (<= 32) bits without consuming them; zero-padded past the end.
    pub fn peek(&self, n: u32) -> u32 {
        debug_assert!(n <= 32);
        if n == 0 {
            return 0;
        }
        let byte = self.pos / 8;
        let mut word = 0u64;
        for i in 0..8 {
            word = (word << 8) | u64::from(*self.data.get(byte + i).unwrap_or(&0));
        }
        let shifted = word << (self.pos % 8);
        (shifted >> (64 - n)) as u32
    }

    pub fn skip(&mut self, n: usize) -> Result<()> {
        if n > self.bits_left() {
            return Err(ParseError::Truncated {
                bit_offset: self.pos,
                needed: n,
                available: self.bits_left(),
            });
        }
        self.pos += n;
        Ok(())
    }

    pub fn read(&mut self, n: u32) -> Result<u32> {
        let v = self.peek(n);
        self.skip(n as usize)?;
        Ok(v)
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        Ok(self.read(1)? == 1)
    }

    /// Reads a marker bit, which must be 1.
    pub fn marker(&mut self, what: &'static str) -> Result<()> {
        let at = self.pos;
        if self.read_bit()? {
            Ok(())
        } else {
            Err(ParseError::Syntax {
                what: format!("missing marker bit after {what}"),
                bit_offset: at,
            })
        }
    }

    pub fn seek(&mut self, bit: usize) {
        self.pos = bit.min(self.len_bits());
    }
}
