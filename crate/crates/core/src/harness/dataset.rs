//! `SPLITDAT` v1 datasets.
//!
//! ```text
//! magic "SPLITDAT" | version u32 | count u32 | shape 3 x u32
//! per item: label u32 | f32 x C·H·W | fnv1a64 u64
//! ```

use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::HarnessError;
use crate::fnv::fnv1a64;
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 8] = b"SPLITDAT";
pub const DATASET_VERSION: u32 = 1;

/// Labeled images. The calibration/test split is a fixed function of the
/// item index (see [`is_test_index`]).
#[derive(Debug, Clone)]
pub struct Dataset {
    shape: [usize; 3],
    images: Vec<Tensor>,
    labels: Vec<u32>,
    checksum: u64,
}

/// Roughly one index in five is held out for testing.
pub fn is_test_index(index: usize) -> bool {
    fnv1a64(&(index as u64).to_le_bytes()).is_multiple_of(5)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn new(shape: [usize; 3], images: Vec<Tensor>, labels: Vec<u32>) -> Result<Self, HarnessError> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(HarnessError::Format(format!("{} images for {} labels", images.len(), labels.len())));
        }
        if let Some(t) = images.iter().find(|t| t.shape() != shape) {
            return Err(HarnessError::Format(format!(
                "image shape {:?} differs from dataset shape {shape:?}",
                t.shape()
            )));
        }
        let mut ds = Self { shape, images, labels, checksum: 0 };
        let bytes = ds.to_bytes();
        ds.checksum = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes"));
        Ok(ds)
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, i: usize) -> &Tensor {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// FNV-1a-64 of the serialized file (its trailing checksum).
    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    pub fn split(&self) -> DatasetSplit {
        let (test, calibration) = (0..self.len()).partition(|&i| is_test_index(i));
        DatasetSplit { calibration, test }
    }

    pub fn select(&self, indices: &[usize]) -> (Vec<Tensor>, Vec<u32>) {
        indices.iter().map(|&i| (self.images[i].clone(), self.labels[i])).unzip()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        out.write_u32::<LE>(DATASET_VERSION).unwrap();
        out.write_u32::<LE>(self.len() as u32).unwrap();
        for &s in &self.shape {
            out.write_u32::<LE>(s as u32).unwrap();
        }
        for (img, &label) in self.images.iter().zip(&self.labels) {
            out.write_u32::<LE>(label).unwrap();
            for &v in img.data() {
                out.write_f32::<LE>(v).unwrap();
            }
        }
        let sum = fnv1a64(&out);
        out.write_u64::<LE>(sum).unwrap();
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HarnessError> {
        let eof = |_| HarnessError::Format("truncated dataset file".into());
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != DATASET_MAGIC {
            return Err(HarnessError::Format("bad magic: expected SPLITDAT".into()));
        }
        let version = r.read_u32::<LE>().map_err(eof)?;
        if version != DATASET_VERSION {
            return Err(HarnessError::Format(format!("unsupported dataset version {version}")));
        }
        let count = r.read_u32::<LE>().map_err(eof)? as usize;
        let mut shape = [0usize; 3];
        for s in &mut shape {
            *s = r.read_u32::<LE>().map_err(eof)? as usize;
        }
        let per_image: usize = shape.iter().product();
        if per_image == 0 {
            return Err(HarnessError::Format(format!("invalid image shape {shape:?}")));
        }
        if (r.len() as u64) < count as u64 * (4 + 4 * per_image as u64) + 8 {
            return Err(HarnessError::Format("truncated dataset file".into()));
        }
        let mut images = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            labels.push(r.read_u32::<LE>().map_err(eof)?);
            let mut data = vec![0.0f32; per_image];
            r.read_f32_into::<LE>(&mut data).map_err(eof)?;
            images.push(Tensor::new(shape.to_vec(), data)?);
        }
        let body = bytes.len() - r.len();
        let stored = r.read_u64::<LE>().map_err(eof)?;
        if stored != fnv1a64(&bytes[..body]) {
            return Err(HarnessError::Format("dataset checksum mismatch".into()));
        }
        if !r.is_empty() {
            return Err(HarnessError::Format("trailing bytes after dataset checksum".into()));
        }
        let mut ds = Self::new(shape, images, labels)?;
        ds.checksum = stored;
        Ok(ds)
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, HarnessError> {
    Dataset::from_bytes(&std::fs::read(path)?)
}
