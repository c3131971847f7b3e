//! Pre-tensorized labeled datasets.
//!
//! Layout (little-endian): `"SNNB"`, u32 version, u32 dtype tag, u32 ndim,
//! ndim x u32 dims, u32 sample count, `count * prod(dims)` values, then
//! `count` u16 labels.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const DATASET_MAGIC: &[u8; 4] = b"SNNB";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleDtype {
    F32 = 1,
    F64 = 2,
}

impl SampleDtype {
    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            1 => Ok(SampleDtype::F32),
            2 => Ok(SampleDtype::F64),
            other => Err(Error::Format(format!("unsupported dataset dtype tag {other}"))),
        }
    }

    fn width(self) -> usize {
        match self {
            SampleDtype::F32 => 4,
            SampleDtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sample_shape: Shape,
    pub samples: Vec<Tensor<f64>>,
    pub labels: Vec<u16>,
}

impl Dataset {
    pub fn new(sample_shape: Shape, samples: Vec<Tensor<f64>>, labels: Vec<u16>) -> Result<Self> {
        let ds = Dataset {
            sample_shape,
            samples,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != self.labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} samples but {} labels",
                self.samples.len(),
                self.labels.len()
            )));
        }
        if let Some(bad) = self.samples.iter().find(|s| s.shape() != &self.sample_shape) {
            return Err(Error::InvalidArgument(format!(
                "sample shape {} differs from dataset shape {}",
                bad.shape(),
                self.sample_shape
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// First `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let part = |r: std::ops::Range<usize>| Dataset {
            sample_shape: self.sample_shape.clone(),
            samples: self.samples[r.clone()].to_vec(),
            labels: self.labels[r].to_vec(),
        };
        (part(0..n), part(n..self.len()))
    }

    pub fn take(&self, n: usize) -> Dataset {
        self.split_at(n).0
    }

    pub fn to_bytes(&self, dtype: SampleDtype) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(dtype as u32).to_le_bytes());
        out.extend_from_slice(&(self.sample_shape.rank() as u32).to_le_bytes());
        for &d in self.sample_shape.dims() {
            out.extend_from_slice(&u32::try_from(d).map_err(|_| too_big("dim"))?.to_le_bytes());
        }
        out.extend_from_slice(&u32::try_from(self.len()).map_err(|_| too_big("count"))?.to_le_bytes());
        for s in &self.samples {
            for &v in s.data() {
                match dtype {
                    SampleDtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                    SampleDtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                }
            }
        }
        for &l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != DATASET_MAGIC {
            return Err(Error::Format("dataset magic is not SNNB".into()));
        }
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "dataset version {version} unsupported (expected {DATASET_VERSION})"
            )));
        }
        let dtype = SampleDtype::from_tag(r.u32()?)?;
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let shape = Shape::new(dims);
        let count = r.u32()? as usize;
        let numel = shape.numel();
        let expected = r.pos + count * numel * dtype.width() + count * 2;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "dataset header declares {count} samples of {shape} ({expected} bytes total), file has {} bytes",
                bytes.len()
            )));
        }
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(match dtype {
                    SampleDtype::F32 => f32::from_le_bytes(r.array()?) as f64,
                    SampleDtype::F64 => f64::from_le_bytes(r.array()?),
                });
            }
            samples.push(Tensor::from_vec(shape.clone(), data)?);
        }
        let labels = (0..count)
            .map(|_| r.array().map(u16::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(shape, samples, labels)
    }
}

fn too_big(what: &str) -> Error {
    Error::InvalidArgument(format!("dataset {what} exceeds u32"))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format(format!(
                "dataset truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>, dtype: SampleDtype) -> Result<()> {
    fs::write(path, ds.to_bytes(dtype)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    Dataset::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::load(path, m),
        other => other,
    })
}
