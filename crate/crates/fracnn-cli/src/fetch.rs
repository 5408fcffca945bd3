//! Optional download of the four standard MNIST files into a local data
//! directory. Files already present and passing validation are left
//! untouched, so the rest of the harness stays fully offline.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::idx::{
    parse_idx_images, parse_idx_labels, DataError, TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES,
    TRAIN_LABELS,
};

const MIRRORS: &[&str] = &[
    "https://ossci-datasets.s3.amazonaws.com/mnist",
    "https://storage.googleapis.com/cvdf-datasets/mnist",
];

/// (file name, expected decompressed byte size, expected sample count)
const FILES: &[(&str, usize, usize)] = &[
    (TRAIN_IMAGES, 47_040_016, 60_000),
    (TRAIN_LABELS, 60_008, 60_000),
    (TEST_IMAGES, 7_840_016, 10_000),
    (TEST_LABELS, 10_008, 10_000),
];

fn validate_file(name: &str, bytes: &[u8], expected_len: usize, expected_count: usize) -> Result<(), DataError> {
    if bytes.len() != expected_len {
        return Err(DataError::Truncated {
            path: name.into(),
            expected: expected_len,
            found: bytes.len(),
        });
    }
    let count = if name.contains("images") {
        parse_idx_images(bytes, name)?.count()
    } else {
        parse_idx_labels(bytes, name)?.len()
    };
    if count != expected_count {
        return Err(DataError::UnexpectedCount {
            path: name.into(),
            expected: expected_count,
            found: count,
        });
    }
    Ok(())
}

fn download(url: &str) -> Result<Vec<u8>, DataError> {
    let map_err = |reason: String| DataError::Download {
        url: url.into(),
        reason,
    };
    let mut response = ureq::get(url)
        .call()
        .map_err(|e| map_err(e.to_string()))?;
    let gz = response
        .body_mut()
        .with_config()
        .limit(64 * 1024 * 1024)
        .read_to_vec()
        .map_err(|e| map_err(e.to_string()))?;
    let mut decoder = GzDecoder::new(&gz[..]);
    let mut out = Vec::new();
    decoder
        .read_to_end(&mut out)
        .map_err(|e| map_err(format!("gzip decode: {e}")))?;
    Ok(out)
}

/// Ensures all four files exist and validate in `data_dir`, downloading
/// any that are missing. Returns the list of files actually fetched.
pub fn fetch_mnist(data_dir: &Path) -> Result<Vec<String>, DataError> {
    fs::create_dir_all(data_dir).map_err(|source| DataError::Io {
        path: data_dir.display().to_string(),
        source,
    })?;
    let mut fetched = Vec::new();
    for &(name, expected_len, expected_count) in FILES {
        let target = data_dir.join(name);
        if let Ok(existing) = fs::read(&target) {
            if validate_file(name, &existing, expected_len, expected_count).is_ok() {
                continue;
            }
        }
        let mut last_err = None;
        let mut done = false;
        for mirror in MIRRORS {
            let url = format!("{mirror}/{name}.gz");
            match download(&url) {
                Ok(bytes) => {
                    validate_file(name, &bytes, expected_len, expected_count)?;
                    fs::write(&target, &bytes).map_err(|source| DataError::Io {
                        path: target.display().to_string(),
                        source,
                    })?;
                    fetched.push(name.to_string());
                    done = true;
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        if !done {
            return Err(last_err.unwrap_or(DataError::Download {
                url: format!("{name}.gz"),
                reason: "no mirror reachable".into(),
            }));
        }
    }
    Ok(fetched)
}
