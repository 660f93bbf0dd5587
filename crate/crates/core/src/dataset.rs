//! MNIST-format IDX ingestion and the toy-set derivation: center-crop,
//! average-pool downscale, and mean-threshold binarization.

use std::io::Write;

use thiserror::Error;

use crate::energy_models::Config;

const MAGIC_IMAGES: u32 = 0x0000_0803;
const MAGIC_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("truncated: header claims {want} payload bytes, file has {got}")]
    Truncated { want: usize, got: usize },
    #[error("trailing bytes: {0} past the declared payload")]
    TrailingBytes(usize),
    #[error("file shorter than its header ({0} bytes)")]
    ShortHeader(usize),
    #[error("derive_toy expects 28x28 images, got {rows}x{cols}")]
    WrongShape { rows: usize, cols: usize },
    #[error("derive_toy side must be 4 or 5, got {0}")]
    BadSide(usize),
    #[error("image and label counts differ: {images} vs {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxLabels {
    pub count: usize,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxFile {
    Images(IdxImages),
    Labels(IdxLabels),
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Dispatches on the magic number; pixel values stay raw bytes.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxFile, IdxError> {
    if bytes.len() < 8 {
        return Err(IdxError::ShortHeader(bytes.len()));
    }
    let magic = be_u32(bytes, 0);
    match magic {
        MAGIC_IMAGES => {
            if bytes.len() < 16 {
                return Err(IdxError::ShortHeader(bytes.len()));
            }
            let count = be_u32(bytes, 4) as usize;
            let rows = be_u32(bytes, 8) as usize;
            let cols = be_u32(bytes, 12) as usize;
            let want = count * rows * cols;
            let got = bytes.len() - 16;
            if got < want {
                return Err(IdxError::Truncated { want, got });
            }
            if got > want {
                return Err(IdxError::TrailingBytes(got - want));
            }
            Ok(IdxFile::Images(IdxImages { count, rows, cols, pixels: bytes[16..].to_vec() }))
        }
        MAGIC_LABELS => {
            let count = be_u32(bytes, 4) as usize;
            let got = bytes.len() - 8;
            if got < count {
                return Err(IdxError::Truncated { want: count, got });
            }
            if got > count {
                return Err(IdxError::TrailingBytes(got - count));
            }
            Ok(IdxFile::Labels(IdxLabels { count, labels: bytes[8..].to_vec() }))
        }
        other => Err(IdxError::BadMagic(other)),
    }
}

impl IdxImages {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        out.extend_from_slice(&MAGIC_IMAGES.to_be_bytes());
        out.extend_from_slice(&(self.count as u32).to_be_bytes());
        out.extend_from_slice(&(self.rows as u32).to_be_bytes());
        out.extend_from_slice(&(self.cols as u32).to_be_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn image(&self, idx: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[idx * size..(idx + 1) * size]
    }
}

impl IdxLabels {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&MAGIC_LABELS.to_be_bytes());
        out.extend_from_slice(&(self.count as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }
}

/// Derives the binary toy set: keep labels {0,1}, center-crop 28x28 to
/// 20x20 (rows/cols 4..=23), average-pool to side x side, binarize at the
/// per-image mean of the pooled values (strictly greater -> 1).
pub fn derive_toy(
    images: &IdxImages,
    labels: &IdxLabels,
    side: usize,
) -> Result<Vec<(Config, u8)>, IdxError> {
    if images.rows != 28 || images.cols != 28 {
        return Err(IdxError::WrongShape { rows: images.rows, cols: images.cols });
    }
    if side != 4 && side != 5 {
        return Err(IdxError::BadSide(side));
    }
    if images.count != labels.count {
        return Err(IdxError::CountMismatch { images: images.count, labels: labels.count });
    }
    let pool = 20 / side; // 4x4 cells for side 5, 5x5 for side 4
    let mut out = Vec::new();
    for i in 0..images.count {
        let label = labels.labels[i];
        if label > 1 {
            continue;
        }
        let img = images.image(i);
        let mut pooled = vec![0.0f64; side * side];
        for cy in 0..side {
            for cx in 0..side {
                let mut sum = 0.0;
                for dy in 0..pool {
                    for dx in 0..pool {
                        let y = 4 + cy * pool + dy;
                        let x = 4 + cx * pool + dx;
                        sum += img[y * 28 + x] as f64;
                    }
                }
                pooled[cy * side + cx] = sum / (pool * pool) as f64;
            }
        }
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        let values: Vec<u16> = pooled.iter().map(|&p| (p > mean) as u16).collect();
        out.push((Config::new(values), label));
    }
    Ok(out)
}

/// CSV export `label,v0,...,v{D-1}`.
pub fn write_toy_csv<W: Write>(samples: &[(Config, u8)], out: &mut W) -> Result<(), IdxError> {
    for (config, label) in samples {
        let vals: Vec<String> = config.values.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{}", label, vals.join(","))?;
    }
    Ok(())
}
