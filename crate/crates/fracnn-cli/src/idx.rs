//! Reading and writing the big-endian IDX container used by the MNIST
//! dataset files, and assembling the loaded arrays into training and test
//! sets.

use std::fs;
use std::path::{Path, PathBuf};

use fracnn::{LabeledImages, Tensor};
use thiserror::Error;

pub const MAGIC_IMAGES: u32 = 0x0000_0803;
pub const MAGIC_LABELS: u32 = 0x0000_0801;
pub const CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: expected magic 0x{expected:08x}, found 0x{found:08x}")]
    MagicMismatch {
        path: String,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated, needed {expected} bytes but found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("{images_path}: {images} images but {labels} labels in {labels_path}")]
    CountMismatch {
        images_path: String,
        labels_path: String,
        images: usize,
        labels: usize,
    },

    #[error("{path}: label value {label} outside 0..={max}")]
    LabelRange { path: String, label: u8, max: u8 },

    #[error("{path}: expected {expected} samples, found {found}")]
    UnexpectedCount {
        path: String,
        expected: usize,
        found: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Tensor(#[from] fracnn::Error),

    #[error("download failed for {url}: {reason}")]
    Download { url: String, reason: String },
}

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>, // count * rows * cols, row-major per image
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32, DataError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DataError::Truncated {
            path: path.into(),
            expected: end,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

pub fn parse_idx_images(bytes: &[u8], path: &str) -> Result<IdxImages, DataError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != MAGIC_IMAGES {
        return Err(DataError::MagicMismatch {
            path: path.into(),
            expected: MAGIC_IMAGES,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.into(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: bytes[16..expected].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &str) -> Result<Vec<u8>, DataError> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != MAGIC_LABELS {
        return Err(DataError::MagicMismatch {
            path: path.into(),
            expected: MAGIC_LABELS,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.into(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

/// Serializes images back into the exact IDX byte layout.
pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&MAGIC_IMAGES.to_be_bytes());
    out.extend_from_slice(&(images.count() as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&MAGIC_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Converts parsed bytes into the tensor pair used everywhere else:
/// images `[n x rows x cols x 1]` with pixels scaled to `[0, 1]` and
/// one-hot label columns `[10 x n]`.
pub fn to_tensors(
    images: &IdxImages,
    labels: &[u8],
    images_path: &str,
    labels_path: &str,
) -> Result<(Tensor, Tensor), DataError> {
    let n = images.count();
    if n != labels.len() {
        return Err(DataError::CountMismatch {
            images_path: images_path.into(),
            labels_path: labels_path.into(),
            images: n,
            labels: labels.len(),
        });
    }
    let image_data: Vec<f64> = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let image_tensor = Tensor::new(vec![n, images.rows, images.cols, 1], image_data)?;
    let mut label_data = vec![0.0; CLASSES * n];
    for (i, &label) in labels.iter().enumerate() {
        if label as usize >= CLASSES {
            return Err(DataError::LabelRange {
                path: labels_path.into(),
                label,
                max: (CLASSES - 1) as u8,
            });
        }
        label_data[label as usize * n + i] = 1.0;
    }
    let label_tensor = Tensor::new(vec![CLASSES, n], label_data)?;
    Ok((image_tensor, label_tensor))
}

/// Loads one image/label file pair from disk.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<(Tensor, Tensor), DataError> {
    let image_bytes = read_file(images_path)?;
    let label_bytes = read_file(labels_path)?;
    let ip = images_path.display().to_string();
    let lp = labels_path.display().to_string();
    let images = parse_idx_images(&image_bytes, &ip)?;
    let labels = parse_idx_labels(&label_bytes, &lp)?;
    to_tensors(&images, &labels, &ip, &lp)
}

/// The four standard MNIST files of a data directory.
#[derive(Debug, Clone)]
pub struct MnistDataset {
    pub train: LabeledImages,
    pub test: LabeledImages,
}

impl MnistDataset {
    /// Loads and validates the canonical 60000/10000 split.
    pub fn load(data_dir: &Path) -> Result<Self, DataError> {
        let load_pair = |images: &str, labels: &str, expected: usize| {
            let ipath = data_dir.join(images);
            let lpath = data_dir.join(labels);
            let (im, lb) = load_idx(&ipath, &lpath)?;
            let n = im.shape()[0];
            if n != expected {
                return Err(DataError::UnexpectedCount {
                    path: ipath.display().to_string(),
                    expected,
                    found: n,
                });
            }
            Ok(LabeledImages::new(im, lb)?)
        };
        Ok(Self {
            train: load_pair(TRAIN_IMAGES, TRAIN_LABELS, 60_000)?,
            test: load_pair(TEST_IMAGES, TEST_LABELS, 10_000)?,
        })
    }

    pub fn standard_paths(data_dir: &Path) -> [PathBuf; 4] {
        [
            data_dir.join(TRAIN_IMAGES),
            data_dir.join(TRAIN_LABELS),
            data_dir.join(TEST_IMAGES),
            data_dir.join(TEST_LABELS),
        ]
    }
}

/// Recovers the original byte-level content from the loaded tensors. The
/// pixel scaling by 1/255 is exactly invertible in 64-bit floats, so a
/// parse/encode round trip reproduces the source file byte for byte.
pub fn reencode_images(images: &Tensor) -> IdxImages {
    let s = images.shape();
    IdxImages {
        rows: s[1],
        cols: s[2],
        pixels: images
            .data()
            .iter()
            .map(|&p| (p * 255.0).round() as u8)
            .collect(),
    }
}

pub fn reencode_labels(labels: &Tensor) -> Vec<u8> {
    let (k, n) = (labels.shape()[0], labels.shape()[1]);
    let d = labels.data();
    (0..n)
        .map(|col| {
            let mut best = (0usize, d[col]);
            for row in 1..k {
                if d[row * n + col] > best.1 {
                    best = (row, d[row * n + col]);
                }
            }
            best.0 as u8
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_images() -> Vec<u8> {
        // two 2x3 images
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC_IMAGES.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&3u32.to_be_bytes());
        bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255, 10, 20, 30, 40, 50, 60]);
        bytes
    }

    fn tiny_labels() -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC_LABELS.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[7, 0]);
        bytes
    }

    #[test]
    fn parses_and_scales_pixels() {
        let images = parse_idx_images(&tiny_images(), "mem").unwrap();
        let labels = parse_idx_labels(&tiny_labels(), "mem").unwrap();
        let (im, lb) = to_tensors(&images, &labels, "mem", "mem").unwrap();
        assert_eq!(im.shape(), &[2, 2, 3, 1]);
        assert_eq!(im.data()[1], 51.0 / 255.0);
        assert_eq!(im.data()[5], 1.0);
        assert_eq!(lb.shape(), &[10, 2]);
        assert_eq!(lb.data()[7 * 2], 1.0); // first sample is class 7
        assert_eq!(lb.data()[1], 1.0); // second sample is class 0
    }

    #[test]
    fn corrupted_magic_is_rejected_with_values() {
        let mut bytes = tiny_images();
        bytes[0] = 0xFF;
        match parse_idx_images(&bytes, "mem") {
            Err(DataError::MagicMismatch {
                expected, found, ..
            }) => {
                assert_eq!(expected, MAGIC_IMAGES);
                assert_eq!(found, 0xFF000803);
            }
            other => panic!("expected magic mismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = tiny_images();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            parse_idx_images(&bytes, "mem"),
            Err(DataError::Truncated { .. })
        ));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let images = parse_idx_images(&tiny_images(), "a").unwrap();
        let labels = vec![1u8; 3];
        assert!(matches!(
            to_tensors(&images, &labels, "a", "b"),
            Err(DataError::CountMismatch { .. })
        ));
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let images = parse_idx_images(&tiny_images(), "a").unwrap();
        let labels = vec![3u8, 10u8];
        assert!(matches!(
            to_tensors(&images, &labels, "a", "b"),
            Err(DataError::LabelRange { label: 10, .. })
        ));
    }

    #[test]
    fn byte_round_trip_through_tensors() {
        let src_images = tiny_images();
        let src_labels = tiny_labels();
        let images = parse_idx_images(&src_images, "mem").unwrap();
        let labels = parse_idx_labels(&src_labels, "mem").unwrap();
        let (im, lb) = to_tensors(&images, &labels, "mem", "mem").unwrap();
        assert_eq!(encode_idx_images(&reencode_images(&im)), src_images);
        assert_eq!(encode_idx_labels(&reencode_labels(&lb)), src_labels);
    }
}
