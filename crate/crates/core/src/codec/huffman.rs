//! Huffman code construction and canonical codeword assignment.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::bits::{BitReader, BitWriter};
use super::CodecError;

pub const MAX_CODE_LEN: u8 = 63;

/// Optimal prefix-code lengths for `counts`.
///
/// Every count must be at least 1. Nodes are merged lightest first; equal
/// weights go to the node created earlier, and leaves are created in
/// symbol order before any internal node, so ties prefer the lower symbol.
pub fn build_huffman(counts: &[u64]) -> Result<Vec<u8>, CodecError> {
    if counts.len() < 2 {
        return Err(CodecError::InvalidHistogram("need at least two symbols".into()));
    }
    if counts.contains(&0) {
        return Err(CodecError::InvalidHistogram("zero count; smooth the histogram first".into()));
    }
    let n = counts.len();
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        counts.iter().enumerate().map(|(s, &c)| Reverse((c, s))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().expect("len > 1");
        let Reverse((wb, b)) = heap.pop().expect("len > 1");
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa + wb, next)));
        next += 1;
    }
    // parents are always created after their children
    let root = 2 * n - 2;
    let mut depth = vec![0u32; 2 * n - 1];
    for node in (0..root).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    depth[..n]
        .iter()
        .map(|&d| {
            u8::try_from(d)
                .ok()
                .filter(|&d| d <= MAX_CODE_LEN)
                .ok_or_else(|| CodecError::InvalidHistogram(format!("code length {d} too long")))
        })
        .collect()
}

/// Canonical prefix code defined by a table of code lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanCode {
    lengths: Vec<u8>,
    codes: Vec<u64>,
    // decoding tables indexed by length
    first_code: Vec<u64>,
    first_index: Vec<usize>,
    count: Vec<usize>,
    sorted_symbols: Vec<u32>,
}

impl HuffmanCode {
    /// Assigns codewords in (length, symbol) order. The lengths must satisfy
    /// the Kraft equality and all be non-zero.
    pub fn from_lengths(lengths: Vec<u8>) -> Result<Self, CodecError> {
        if lengths.len() < 2 {
            return Err(CodecError::InvalidHistogram("need at least two symbols".into()));
        }
        if lengths.iter().any(|&l| l == 0 || l > MAX_CODE_LEN) {
            return Err(CodecError::InvalidHistogram("code length outside 1..=63".into()));
        }
        let max_len = *lengths.iter().max().expect("non-empty") as usize;
        let kraft: u128 = lengths.iter().map(|&l| 1u128 << (max_len - l as usize)).sum();
        if kraft != 1u128 << max_len {
            return Err(CodecError::InvalidHistogram("code lengths violate Kraft equality".into()));
        }

        let mut sorted_symbols: Vec<u32> = (0..lengths.len() as u32).collect();
        sorted_symbols.sort_by_key(|&s| (lengths[s as usize], s));

        let mut count = vec![0usize; max_len + 1];
        for &l in &lengths {
            count[l as usize] += 1;
        }
        let mut first_code = vec![0u64; max_len + 1];
        let mut first_index = vec![0usize; max_len + 1];
        let (mut code, mut index) = (0u64, 0usize);
        for len in 1..=max_len {
            // count[0] is always zero
            code = (code + count[len - 1] as u64) << 1;
            first_code[len] = code;
            first_index[len] = index;
            index += count[len];
        }
        let mut codes = vec![0u64; lengths.len()];
        for len in 1..=max_len {
            let start = first_index[len];
            for (offset, &s) in sorted_symbols[start..start + count[len]].iter().enumerate() {
                codes[s as usize] = first_code[len] + offset as u64;
            }
        }
        Ok(Self { lengths, codes, first_code, first_index, count, sorted_symbols })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self, CodecError> {
        Self::from_lengths(build_huffman(counts)?)
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn code(&self, symbol: usize) -> (u64, u8) {
        (self.codes[symbol], self.lengths[symbol])
    }

    pub fn alphabet_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn write_symbol(&self, w: &mut BitWriter, symbol: usize) {
        let (code, len) = self.code(symbol);
        w.write(code, len);
    }

    pub fn read_symbol(&self, r: &mut BitReader<'_>) -> Result<usize, CodecError> {
        let mut code = 0u64;
        for len in 1..self.count.len() {
            let bit = r.read_bit().ok_or_else(|| CodecError::CorruptPayload("bits exhausted mid-codeword".into()))?;
            code = (code << 1) | bit as u64;
            let offset = code.wrapping_sub(self.first_code[len]);
            if code >= self.first_code[len] && (offset as usize) < self.count[len] {
                return Ok(self.sorted_symbols[self.first_index[len] + offset as usize] as usize);
            }
        }
        Err(CodecError::CorruptPayload("invalid codeword".into()))
    }

    /// Mean code length in bits per symbol under `counts`.
    pub fn mean_length(&self, counts: &[u64]) -> f64 {
        let total: u64 = counts.iter().sum();
        let bits: u64 = counts.iter().zip(&self.lengths).map(|(&c, &l)| c * l as u64).sum();
        bits as f64 / total as f64
    }
}

/// Empirical entropy of `counts` in bits per symbol.
pub fn entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}
