//! IDX image/label file parsing (the MNIST on-disk format).
//!
//! Big-endian magic and dimension words, then raw bytes. Image files carry
//! magic `0x00000803` and `[count, rows, cols]`; label files carry magic
//! `0x00000801` and `[count]`. Pixels are scaled to `[0, 1]` on load and
//! images are flattened to `rows × cols` features.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxTruncated {
            path: path.display().to_string(),
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

fn read_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let magic = read_u32_be(&bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::IdxMagic {
            path: path.display().to_string(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(&bytes, 4, path)? as usize;
    let rows = read_u32_be(&bytes, 8, path)? as usize;
    let cols = read_u32_be(&bytes, 12, path)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() != expected {
        return Err(Error::IdxTruncated {
            path: path.display().to_string(),
            expected,
            found: bytes.len(),
        });
    }
    Ok((count, rows, cols, bytes[16..].to_vec()))
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let magic = read_u32_be(&bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::IdxMagic {
            path: path.display().to_string(),
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(&bytes, 4, path)? as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(Error::IdxTruncated {
            path: path.display().to_string(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..].to_vec())
}

/// Load an image/label IDX file pair into a dataset with pixel features in
/// `[0, 1]` and `max(label) + 1` classes.
pub fn load_idx<P: AsRef<Path>, Q: AsRef<Path>>(images_path: P, labels_path: Q) -> Result<Dataset> {
    let (count, rows, cols, pixels) = read_images(images_path.as_ref())?;
    let labels_raw = read_labels(labels_path.as_ref())?;
    if labels_raw.len() != count {
        return Err(Error::IdxCountMismatch {
            images: count,
            labels: labels_raw.len(),
        });
    }
    let features: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = labels_raw.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(
        Tensor::from_vec(&[count, rows * cols], features)?,
        labels,
        num_classes,
    )
}

/// Write an image/label IDX file pair. `pixels` is row-major
/// `count × rows × cols` bytes.
pub fn write_idx<P: AsRef<Path>, Q: AsRef<Path>>(
    images_path: P,
    labels_path: Q,
    rows: usize,
    cols: usize,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    let count = labels.len();
    if pixels.len() != count * rows * cols {
        return Err(Error::IdxCountMismatch {
            images: pixels.len() / (rows * cols).max(1),
            labels: count,
        });
    }
    let mut img = fs::File::create(images_path)?;
    img.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    img.write_all(&(count as u32).to_be_bytes())?;
    img.write_all(&(rows as u32).to_be_bytes())?;
    img.write_all(&(cols as u32).to_be_bytes())?;
    img.write_all(pixels)?;

    let mut lbl = fs::File::create(labels_path)?;
    lbl.write_all(&LABEL_MAGIC.to_be_bytes())?;
    lbl.write_all(&(count as u32).to_be_bytes())?;
    lbl.write_all(labels)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        let pixels: Vec<u8> = (0..4 * 6).map(|i| (i * 11 % 256) as u8).collect();
        let labels = vec![0u8, 3, 1, 2];
        write_idx(&img, &lbl, 2, 3, &pixels, &labels).unwrap();

        let ds = load_idx(&img, &lbl).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.feature_dim(), 6);
        assert_eq!(ds.num_classes(), 4);
        for (i, &px) in pixels.iter().enumerate() {
            let v = ds.features().data()[i];
            assert_eq!(v.to_bits(), (px as f64 / 255.0).to_bits());
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(ds.labels(), &[0, 3, 1, 2]);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        write_idx(&img, &lbl, 1, 1, &[5], &[0]).unwrap();
        // Labels file used as an image file has the wrong magic.
        let err = load_idx(&lbl, &lbl).unwrap_err();
        assert!(matches!(err, Error::IdxMagic { found, .. } if found == LABEL_MAGIC));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        write_idx(&img, &lbl, 2, 2, &[1, 2, 3, 4, 5, 6, 7, 8], &[0, 1]).unwrap();
        let mut bytes = fs::read(&img).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&img, bytes).unwrap();
        assert!(matches!(
            load_idx(&img, &lbl),
            Err(Error::IdxTruncated { .. })
        ));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img_a = dir.path().join("img_a");
        let lbl_a = dir.path().join("lbl_a");
        write_idx(&img_a, &lbl_a, 1, 2, &[1, 2, 3, 4], &[0, 1]).unwrap();
        let img_b = dir.path().join("img_b");
        let lbl_b = dir.path().join("lbl_b");
        write_idx(&img_b, &lbl_b, 1, 2, &[1, 2], &[0]).unwrap();
        assert!(matches!(
            load_idx(&img_a, &lbl_b),
            Err(Error::IdxCountMismatch {
                images: 2,
                labels: 1
            })
        ));
    }
}
