//! IDX files (the MNIST container): `00 00 08 ndim`, big-endian `u32` sizes,
//! then unsigned bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Raw contents of an unsigned-byte IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::format(
            bytes.len(),
            format!("expected 4-byte magic, file has {} bytes", bytes.len()),
        ));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format(
            0,
            format!(
                "bad magic {:02x} {:02x}, expected 00 00",
                bytes[0], bytes[1]
            ),
        ));
    }
    if bytes[2] != 0x08 {
        return Err(Error::format(
            2,
            format!("element type 0x{:02x} unsupported, expected 0x08", bytes[2]),
        ));
    }
    let ndim = bytes[3] as usize;
    if ndim != 1 && ndim != 3 {
        return Err(Error::format(
            3,
            format!("{ndim} dimensions, expected 1 or 3"),
        ));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::format(
            bytes.len(),
            format!("header needs {header} bytes, file has {}", bytes.len()),
        ));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize
        })
        .collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(4, "dimension product overflows"))?;
    let actual = bytes.len() - header;
    if actual != expected {
        return Err(Error::format(
            header + actual.min(expected),
            format!("payload length {actual} bytes, dimensions {dims:?} require {expected}"),
        ));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

/// Images `(n, rows, cols)` scaled to `[0, 1]`.
pub fn idx_images(arr: &IdxArray) -> Result<Tensor<f64>> {
    if arr.dims.len() != 3 {
        return Err(Error::format(
            3,
            format!("image file has {} dimensions, expected 3", arr.dims.len()),
        ));
    }
    Tensor::new(
        &arr.dims,
        arr.data.iter().map(|&b| b as f64 / 255.0).collect(),
    )
}

/// Labels, each checked against `classes`.
pub fn idx_labels(arr: &IdxArray, classes: usize) -> Result<Vec<usize>> {
    if arr.dims.len() != 1 {
        return Err(Error::format(
            3,
            format!("label file has {} dimensions, expected 1", arr.dims.len()),
        ));
    }
    arr.data
        .iter()
        .enumerate()
        .map(|(index, &b)| {
            let label = b as usize;
            if label >= classes {
                Err(Error::LabelOutOfRange {
                    index,
                    label,
                    classes,
                })
            } else {
                Ok(label)
            }
        })
        .collect()
}

/// Loads an image file and its label file.
pub fn load_idx(images: &Path, labels: &Path, classes: usize) -> Result<(Tensor<f64>, Vec<usize>)> {
    let x = idx_images(&parse_idx(&std::fs::read(images)?)?)?;
    let y = idx_labels(&parse_idx(&std::fs::read(labels)?)?, classes)?;
    if x.shape()[0] != y.len() {
        return Err(Error::format(
            4,
            format!("{} images but {} labels", x.shape()[0], y.len()),
        ));
    }
    Ok((x, y))
}

/// Serializes an unsigned-byte IDX array.
pub fn encode_idx(arr: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, arr.dims.len() as u8];
    for &d in &arr.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&arr.data);
    out
}
