use crate::tensor::Tensor;

/// Sample vectors for one channel block: `H·W` vectors of length `d`,
/// stored contiguously in row-major spatial order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSamples {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl BlockSamples {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }
}

pub fn block_count(channels: usize, d: usize) -> usize {
    channels.div_ceil(d)
}

/// Splits the channel axis into `ceil(C/d)` contiguous blocks; each spatial
/// position yields one length-`d` vector per block, zero-padded past `C`.
///
/// # Panics
/// If `x` is not rank 3 or `d == 0`.
pub fn partition_blocks(x: &Tensor, d: usize) -> Vec<BlockSamples> {
    let (c, h, w) = x.chw().expect("partition_blocks needs a C×H×W tensor");
    assert!(d > 0, "block size must be positive");
    let area = h * w;
    let src = x.data();
    (0..block_count(c, d))
        .map(|b| {
            let mut data = vec![0.0f64; area * d];
            for pos in 0..area {
                for i in 0..d {
                    let ch = b * d + i;
                    if ch < c {
                        data[pos * d + i] = src[ch * area + pos] as f64;
                    }
                }
            }
            BlockSamples { dim: d, data }
        })
        .collect()
}
