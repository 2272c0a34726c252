//! Reader for gzip-compressed IDX image/label files.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::cnn::ImageSet;
use crate::Scalar;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {found} (expected {expected})")]
    Magic { expected: u32, found: u32 },
    #[error("truncated payload")]
    Truncated,
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

fn read_gz(path: &Path) -> Result<Vec<u8>, IdxError> {
    let mut bytes = Vec::new();
    GzDecoder::new(File::open(path)?).read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn be_u32(b: &[u8], at: usize) -> Result<u32, IdxError> {
    b.get(at..at + 4).map(|s| u32::from_be_bytes([s[0], s[1], s[2], s[3]])).ok_or(IdxError::Truncated)
}

/// `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), IdxError> {
    let b = read_gz(path)?;
    let magic = be_u32(&b, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::Magic { expected: IMAGE_MAGIC, found: magic });
    }
    let (n, rows, cols) = (be_u32(&b, 4)? as usize, be_u32(&b, 8)? as usize, be_u32(&b, 12)? as usize);
    let pixels = b.get(16..16 + n * rows * cols).ok_or(IdxError::Truncated)?.to_vec();
    Ok((n, rows, cols, pixels))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    let b = read_gz(path)?;
    let magic = be_u32(&b, 0)?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::Magic { expected: LABEL_MAGIC, found: magic });
    }
    let n = be_u32(&b, 4)? as usize;
    Ok(b.get(8..8 + n).ok_or(IdxError::Truncated)?.to_vec())
}

/// Single-channel images with pixel values scaled to `[0, 1]`.
pub fn load_idx_pair<T: Scalar>(images: &Path, labels: &Path) -> Result<ImageSet<T>, IdxError> {
    let (n, rows, cols, pixels) = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    if labels.len() != n {
        return Err(IdxError::CountMismatch { images: n, labels: labels.len() });
    }
    let data = pixels.iter().map(|&p| T::of(f64::from(p) / 255.0)).collect();
    Ok(ImageSet::new(1, rows, cols, data, labels.iter().map(|&l| usize::from(l)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use std::io::Write;

    fn gz(path: &Path, bytes: &[u8]) {
        let mut e = GzEncoder::new(File::create(path).unwrap(), flate2::Compression::fast());
        e.write_all(bytes).unwrap();
        e.finish().unwrap();
    }

    #[test]
    fn roundtrip_tiny_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Vec::new();
        for v in [2051u32, 2, 1, 2] {
            img.extend(v.to_be_bytes());
        }
        img.extend([0, 255, 51, 0]);
        let mut lab = Vec::new();
        for v in [2049u32, 2] {
            lab.extend(v.to_be_bytes());
        }
        lab.extend([7, 3]);
        gz(&dir.path().join("i.gz"), &img);
        gz(&dir.path().join("l.gz"), &lab);
        let set: ImageSet<f64> = load_idx_pair(&dir.path().join("i.gz"), &dir.path().join("l.gz")).unwrap();
        assert_eq!((set.channels, set.height, set.width), (1, 1, 2));
        assert_eq!(set.labels, vec![7, 3]);
        assert_eq!(set.data, vec![0.0, 1.0, 0.2, 0.0]);
        assert!(matches!(
            read_idx_labels(&dir.path().join("i.gz")),
            Err(IdxError::Magic { expected: 2049, found: 2051 })
        ));
    }
}
