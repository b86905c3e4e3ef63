/// MSB-first bit packer. Pad bits in the final byte are zero.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `len` bits of `code`, most significant first.
    pub fn write(&mut self, code: u64, len: u8) {
        for i in (0..len).rev() {
            let bit = (code >> i) & 1;
            let pos = (self.bit_len % 8) as u8;
            if pos == 0 {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().expect("pushed above") |= 0x80 >> pos;
            }
            self.bit_len += 1;
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn finish(self) -> (Vec<u8>, u64) {
        (self.bytes, self.bit_len)
    }
}

/// Reads bits MSB-first, never past `bit_len`.
#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    bit_len: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], bit_len: u64) -> Self {
        debug_assert!(bit_len <= 8 * bytes.len() as u64);
        Self { bytes, bit_len, pos: 0 }
    }

    pub fn read_bit(&mut self) -> Option<u8> {
        if self.pos >= self.bit_len {
            return None;
        }
        let byte = self.bytes[(self.pos / 8) as usize];
        let bit = (byte >> (7 - (self.pos % 8))) & 1;
        self.pos += 1;
        Some(bit)
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.bit_len - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first_packing() {
        let mut w = BitWriter::new();
        w.write(0b1, 1);
        w.write(0b011, 3);
        w.write(0b1, 1);
        let (bytes, n) = w.finish();
        assert_eq!(n, 5);
        assert_eq!(bytes, vec![0b1011_1000]);
    }

    proptest! {
        #[test]
        fn codes_read_back(codes in proptest::collection::vec((any::<u64>(), 1u8..=40), 0..64)) {
            let mut w = BitWriter::new();
            for &(c, l) in &codes {
                w.write(c, l);
            }
            let (bytes, n) = w.finish();
            prop_assert_eq!(bytes.len() as u64, n.div_ceil(8));
            let mut r = BitReader::new(&bytes, n);
            for &(c, l) in &codes {
                let mut v = 0u64;
                for _ in 0..l {
                    v = (v << 1) | r.read_bit().unwrap() as u64;
                }
                prop_assert_eq!(v, c & ((1u64 << l) - 1));
            }
            prop_assert!(r.read_bit().is_none());
        }
    }
}
