//! IDX files: big-endian header, magic `0x00000803` for 3-d unsigned-byte
//! images and `0x00000801` for 1-d unsigned-byte labels.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{LabeledDataset, Provenance};
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("header truncated at byte {at}")))
}

/// Parses an image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() != need {
        return Err(Error::Length(format!(
            "image payload has {} bytes, header implies {need}",
            body.len()
        )));
    }
    Ok((n, rows, cols, body))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Length(format!(
            "label payload has {} bytes, header implies {n}",
            body.len()
        )));
    }
    Ok(body)
}

pub fn encode_idx_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), n * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an image/label pair. Pixels are divided by 255.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    let img_bytes = fs::read(images.as_ref())?;
    let lbl_bytes = fs::read(labels.as_ref())?;
    let (n, rows, cols, pixels) = parse_idx_images(&img_bytes)?;
    let lbls = parse_idx_labels(&lbl_bytes)?;
    if lbls.len() != n {
        return Err(Error::Consistency(format!(
            "{n} images but {} labels",
            lbls.len()
        )));
    }
    let width = rows * cols;
    let features = Array2::from_shape_fn((n, width), |(i, j)| pixels[i * width + j] as f64 / 255.0);
    let classes = lbls.iter().copied().max().map_or(0, |m| m as usize + 1).max(10);
    let is_test = images
        .as_ref()
        .file_name()
        .and_then(|f| f.to_str())
        .is_some_and(|f| f.contains("t10k") || f.contains("test"));
    let provenance = if is_test {
        Provenance::MnistTest
    } else {
        Provenance::MnistTrain
    };
    LabeledDataset::new(features, lbls.to_vec(), classes, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn wrong_magic_is_format_error() {
        let bytes = [0u8; 16];
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Format(_))));
        assert!(matches!(parse_idx_labels(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_length_error() {
        let mut img = encode_idx_images(2, 2, 2, &[0; 8]);
        img.pop();
        assert!(matches!(parse_idx_images(&img), Err(Error::Length(_))));
        assert!(matches!(parse_idx_images(&img[..10]), Err(Error::Length(_))));
        let mut lbl = encode_idx_labels(&[1, 2, 3]);
        lbl.pop();
        assert!(matches!(parse_idx_labels(&lbl), Err(Error::Length(_))));
    }

    #[test]
    fn count_mismatch_is_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        std::fs::File::create(&ip)
            .unwrap()
            .write_all(&encode_idx_images(2, 1, 3, &[0, 255, 10, 20, 30, 40]))
            .unwrap();
        std::fs::File::create(&lp)
            .unwrap()
            .write_all(&encode_idx_labels(&[1, 2, 3]))
            .unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Consistency(_))));

        std::fs::write(&lp, encode_idx_labels(&[1, 9])).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.width(), 3);
        assert_eq!(ds.features[[0, 1]], 1.0);
        assert_eq!(ds.labels, vec![1, 9]);
    }
}
