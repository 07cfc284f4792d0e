use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::nnet::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
/// `|x|₂ ≤ √784 = 28` once pixels are scaled to `[0, 1]`.
pub const MNIST_RADIUS: f64 = 28.0;
pub const MNIST_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, image after image.
    pub pixels: Vec<u8>,
}

fn format(field: &'static str, detail: impl Into<String>) -> Error {
    Error::Format { field, detail: detail.into() }
}

fn be_u32(bytes: &[u8], at: usize, field: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format(field, format!("file ends before byte {}", at + 4)))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != expected {
        return Err(format("magic", format!("expected {expected:#010x}, found {magic:#010x}")));
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, expected: usize) -> Result<()> {
    let actual = bytes.len() - header;
    if actual != expected {
        return Err(format(
            "count",
            format!("header promises {expected} payload bytes, file has {actual}"),
        ));
    }
    Ok(())
}

/// Parses an IDX image file (`0x00000803`, big-endian header).
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4, "count")? as usize;
    let rows = be_u32(bytes, 8, "rows")? as usize;
    let cols = be_u32(bytes, 12, "cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(format("rows", format!("image shape {rows}×{cols} is empty")));
    }
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| format("count", "header sizes overflow"))?;
    check_payload(bytes, 16, expected)?;
    Ok(IdxImages { count, rows, cols, pixels: bytes[16..].to_vec() })
}

/// Parses an IDX label file (`0x00000801`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = be_u32(bytes, 4, "count")? as usize;
    check_payload(bytes, 8, count)?;
    Ok(bytes[8..].to_vec())
}

/// Reads a file, inflating it when it carries the gzip signature.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        return Ok(out);
    }
    Ok(raw)
}

/// Pixels scaled by 1/255 into a `pixels × count` matrix, labels one-hot.
pub fn idx_to_dataset(images: &IdxImages, labels: &[u8]) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(format(
            "count",
            format!("{} images but {} labels", images.count, labels.len()),
        ));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= MNIST_CLASSES) {
        return Err(format("label", format!("label {l} outside 0..=9")));
    }
    let dim = images.rows * images.cols;
    let inputs = DMatrix::from_iterator(dim, images.count, images.pixels.iter().map(|&p| f64::from(p) / 255.0));
    Dataset::from_classes(inputs, labels.to_vec(), MNIST_CLASSES)
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    let dotted = stem.replacen("-idx", ".idx", 1);
    [stem.to_string(), format!("{stem}.gz"), dotted.clone(), format!("{dotted}.gz")]
        .iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::Io(format!("{}: no {stem}[.gz] found", dir.display())))
}

pub fn load_split(images: &Path, labels: &Path) -> Result<Dataset> {
    let imgs = parse_idx_images(&read_maybe_gz(images)?)?;
    if imgs.rows != 28 || imgs.cols != 28 {
        return Err(format("rows", format!("expected 28×28 digits, found {}×{}", imgs.rows, imgs.cols)));
    }
    let labs = parse_idx_labels(&read_maybe_gz(labels)?)?;
    idx_to_dataset(&imgs, &labs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mnist {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads `train-*` and `t10k-*` IDX files (raw or gzipped) from `dir`.
pub fn load_mnist(dir: &Path) -> Result<Mnist> {
    let train = load_split(&locate(dir, "train-images-idx3-ubyte")?, &locate(dir, "train-labels-idx1-ubyte")?)?;
    let test = load_split(&locate(dir, "t10k-images-idx3-ubyte")?, &locate(dir, "t10k-labels-idx1-ubyte")?)?;
    Ok(Mnist { train, test })
}

/// Serializes images back into IDX bytes.
pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_images() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 255, 51, 102, 204, 0, 1, 2]);
        b
    }

    #[test]
    fn handcrafted_fixture() {
        let imgs = parse_idx_images(&two_images()).unwrap();
        assert_eq!((imgs.count, imgs.rows, imgs.cols), (2, 2, 2));
        let ds = idx_to_dataset(&imgs, &[3, 9]).unwrap();
        assert_eq!(ds.inputs()[(1, 0)], 1.0);
        assert_eq!(ds.inputs()[(2, 0)], 0.2);
        assert_eq!(ds.inputs()[(0, 1)], 204.0 / 255.0);
        assert_eq!(ds.classes().unwrap(), &[3, 9]);
        assert_eq!(ds.labels()[(9, 1)], 1.0);
    }

    #[test]
    fn empty_and_truncated_files() {
        assert!(matches!(parse_idx_images(&[]), Err(Error::Format { field: "magic", .. })));
        let mut short = two_images();
        short.pop();
        assert!(matches!(parse_idx_images(&short), Err(Error::Format { field: "count", .. })));
        assert!(matches!(parse_idx_labels(&two_images()), Err(Error::Format { field: "magic", .. })));
    }

    #[test]
    fn every_header_byte_corruption_is_rejected() {
        let good = two_images();
        for at in 0..16 {
            for v in 0..=255u8 {
                if v == good[at] {
                    continue;
                }
                let mut bad = good.clone();
                bad[at] = v;
                assert!(parse_idx_images(&bad).is_err(), "byte {at} = {v} accepted");
            }
        }
        let labels = encode_idx_labels(&[1, 2, 3]);
        for at in 0..8 {
            let mut bad = labels.clone();
            bad[at] ^= 0x40;
            assert!(parse_idx_labels(&bad).is_err());
        }
    }

    #[test]
    fn roundtrip_and_label_checks() {
        let imgs = parse_idx_images(&two_images()).unwrap();
        assert_eq!(encode_idx_images(&imgs), two_images());
        assert!(matches!(idx_to_dataset(&imgs, &[1]), Err(Error::Format { field: "count", .. })));
        assert!(matches!(idx_to_dataset(&imgs, &[1, 10]), Err(Error::Format { field: "label", .. })));
    }
}
