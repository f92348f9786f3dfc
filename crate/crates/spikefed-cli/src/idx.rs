//! IDX (MNIST-format) dataset ingestion and writing.
//!
//! Big-endian dimension sizes per the de-facto layout: images carry magic
//! 0x00000803 and three dims (count, rows, cols), labels carry 0x00000801
//! and one dim. Gzip-compressed files are accepted transparently (sniffed
//! by magic bytes). Pixels scale to `[0, 1]`.

use flate2::read::GzDecoder;
use spikefed::data::Dataset;
use std::io::Read;
use std::path::{Path, PathBuf};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic {got:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        got: u32,
        expected: u32,
    },
    #[error("{path}: truncated after {offset} bytes")]
    Truncated { path: PathBuf, offset: usize },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("dataset is inconsistent: {0}")]
    Inconsistent(String),
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, IdxError> {
    let raw = std::fs::read(path).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|source| IdxError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn u32_be(&mut self) -> Result<u32, IdxError> {
        let b = self
            .bytes
            .get(self.at..self.at + 4)
            .ok_or(IdxError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.at,
            })?;
        self.at += 4;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IdxError> {
        let b = self.bytes.get(self.at..self.at + n).ok_or(IdxError::Truncated {
            path: self.path.to_path_buf(),
            offset: self.at,
        })?;
        self.at += n;
        Ok(b)
    }
}

/// Load an images/labels pair into a dataset with features in `[0, 1]`.
/// The class count is `max(label) + 1`, at least 10 for MNIST-format data.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, IdxError> {
    let image_bytes = read_maybe_gz(images_path)?;
    let mut img = Cursor {
        bytes: &image_bytes,
        at: 0,
        path: images_path,
    };
    let magic = img.u32_be()?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::BadMagic {
            path: images_path.to_path_buf(),
            got: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = img.u32_be()? as usize;
    let rows = img.u32_be()? as usize;
    let cols = img.u32_be()? as usize;
    let pixels = img.take(count * rows * cols)?;

    let label_bytes = read_maybe_gz(labels_path)?;
    let mut lab = Cursor {
        bytes: &label_bytes,
        at: 0,
        path: labels_path,
    };
    let magic = lab.u32_be()?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::BadMagic {
            path: labels_path.to_path_buf(),
            got: magic,
            expected: LABELS_MAGIC,
        });
    }
    let label_count = lab.u32_be()? as usize;
    if label_count != count {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let labels_raw = lab.take(count)?;

    let samples: Vec<f32> = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let labels: Vec<u32> = labels_raw.iter().map(|&l| l as u32).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m as usize + 1).max(10);
    Dataset::new(samples, rows * cols, labels, num_classes)
        .map_err(|e| IdxError::Inconsistent(e.to_string()))
}

/// Write an images/labels pair in IDX layout. Features are quantized to
/// `round(v * 255)`; `dim` must factor as `rows * cols`.
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    data: &Dataset,
    rows: usize,
    cols: usize,
) -> Result<(), IdxError> {
    if rows * cols != data.dim() {
        return Err(IdxError::Inconsistent(format!(
            "{}x{} does not tile dim {}",
            rows,
            cols,
            data.dim()
        )));
    }
    let n = data.len();
    let mut images = Vec::with_capacity(16 + n * data.dim());
    images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&(n as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    for i in 0..n {
        for &v in data.sample(i) {
            images.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }

    let mut labels = Vec::with_capacity(8 + n);
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for i in 0..n {
        labels.push(data.label(i) as u8);
    }

    std::fs::write(images_path, images).map_err(|source| IdxError::Io {
        path: images_path.to_path_buf(),
        source,
    })?;
    std::fs::write(labels_path, labels).map_err(|source| IdxError::Io {
        path: labels_path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Locate the standard MNIST-format file names under a directory, accepting
/// a `.gz` suffix.
pub fn standard_pair(dir: &Path, train: bool) -> Result<(PathBuf, PathBuf), IdxError> {
    let prefix = if train { "train" } else { "t10k" };
    let pick = |stem: String| -> Result<PathBuf, IdxError> {
        let plain = dir.join(&stem);
        if plain.exists() {
            return Ok(plain);
        }
        let gz = dir.join(format!("{stem}.gz"));
        if gz.exists() {
            return Ok(gz);
        }
        Err(IdxError::Io {
            path: plain,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
        })
    };
    Ok((
        pick(format!("{prefix}-images-idx3-ubyte"))?,
        pick(format!("{prefix}-labels-idx1-ubyte"))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn fixture_bytes() -> (Vec<u8>, Vec<u8>) {
        // One 2x2 image with pixels {0, 255, 128, 64}, label 3.
        let mut images = Vec::new();
        images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        images.extend_from_slice(&1u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&[0, 255, 128, 64]);
        let mut labels = Vec::new();
        labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        labels.extend_from_slice(&1u32.to_be_bytes());
        labels.push(3);
        (images, labels)
    }

    fn write_pair(dir: &Path, images: &[u8], labels: &[u8]) -> (PathBuf, PathBuf) {
        let ip = dir.join("img-idx3-ubyte");
        let lp = dir.join("lab-idx1-ubyte");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn fixture_pixels_scale_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture_bytes();
        let (ip, lp) = write_pair(dir.path(), &images, &labels);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.label(0), 3);
        let want = [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0];
        for (got, want) in ds.sample(0).iter().zip(want) {
            assert!((got - want).abs() < 1e-6);
        }
        assert!((ds.sample(0)[2] - 0.50196).abs() < 1e-5);
        assert!((ds.sample(0)[3] - 0.25098).abs() < 1e-5);
    }

    #[test]
    fn gzip_inputs_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture_bytes();
        let gz = |bytes: &[u8]| {
            let mut enc = GzEncoder::new(Vec::new(), Compression::default());
            enc.write_all(bytes).unwrap();
            enc.finish().unwrap()
        };
        let (ip, lp) = write_pair(dir.path(), &gz(&images), &gz(&labels));
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.sample(0)[1], 1.0);
    }

    #[test]
    fn bad_magic_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let (mut images, labels) = fixture_bytes();
        images[3] = 0x99;
        let (ip, lp) = write_pair(dir.path(), &images, &labels);
        assert!(matches!(load_idx(&ip, &lp), Err(IdxError::BadMagic { .. })));
    }

    #[test]
    fn count_mismatch_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let (images, mut labels) = fixture_bytes();
        labels[4..8].copy_from_slice(&2u32.to_be_bytes());
        labels.push(1);
        let (ip, lp) = write_pair(dir.path(), &images, &labels);
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(IdxError::CountMismatch { images: 1, labels: 2 })
        ));
    }

    #[test]
    fn truncation_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = fixture_bytes();
        let (ip, lp) = write_pair(dir.path(), &images[..images.len() - 2], &labels);
        assert!(matches!(load_idx(&ip, &lp), Err(IdxError::Truncated { .. })));
        let (ip2, lp2) = write_pair(dir.path(), &[], &labels);
        let _ = ip2;
        assert!(matches!(
            load_idx(&dir.path().join("img-idx3-ubyte"), &lp2),
            Err(IdxError::Truncated { .. })
        ));
    }

    #[test]
    fn writer_roundtrips_byte_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let data = spikefed::data::synth_blobs(4, 16, 6, 0.1, 5);
        let ip = dir.path().join("rt-images-idx3-ubyte");
        let lp = dir.path().join("rt-labels-idx1-ubyte");
        write_idx(&ip, &lp, &data, 4, 4).unwrap();
        let back = load_idx(&ip, &lp).unwrap();
        assert_eq!(back.len(), data.len());
        // Quantization to u8 then /255 is the only loss; re-writing the
        // loaded dataset must reproduce identical bytes.
        let ip2 = dir.path().join("rt2-images-idx3-ubyte");
        let lp2 = dir.path().join("rt2-labels-idx1-ubyte");
        write_idx(&ip2, &lp2, &back, 4, 4).unwrap();
        assert_eq!(std::fs::read(&ip).unwrap(), std::fs::read(&ip2).unwrap());
        assert_eq!(std::fs::read(&lp).unwrap(), std::fs::read(&lp2).unwrap());
    }
}
