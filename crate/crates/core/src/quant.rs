//! Quantizers and the artifacts derived from them.
//!
//! - [`quantize_uniform`]: nearest level of the symmetric b-bit grid
//!   `α·{0, ±1/L, …, ±1}` with `L = 2^(b-1) - 1`, ties away from zero.
//! - [`binarize`]: sign weights with a mean-absolute-value scale.
//! - [`ste_grad`]: clipped straight-through gradient for the binarizer.
//! - [`fold_thresholds`]: per-timestep firing thresholds that absorb the
//!   inverse temporal mix matrix and the weight scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::tri::LowerTriangular;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantSpec {
    pub bits: u32,
    pub scale: f64,
}

impl QuantSpec {
    pub fn new(bits: u32, scale: f64) -> Result<Self> {
        let spec = Self { bits, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=32).contains(&self.bits) {
            return Err(Error::UnsupportedBits { bits: self.bits });
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidScale(self.scale));
        }
        Ok(())
    }

    /// Largest level index `L = 2^(b-1) - 1`.
    pub fn max_level(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    /// Distance between adjacent levels, `α / L`.
    pub fn step(&self) -> f64 {
        self.scale / self.max_level() as f64
    }

    pub fn level_value(&self, level: i64) -> f64 {
        self.scale * level as f64 / self.max_level() as f64
    }
}

/// Integer index in `[-L, L]` of the level nearest to `x`.
pub fn quantize_level(x: f64, spec: &QuantSpec) -> Result<i64> {
    spec.validate()?;
    let l = spec.max_level();
    let scaled = x * l as f64 / spec.scale;
    // f64::round breaks ties away from zero.
    Ok((scaled.round() as i64).clamp(-l, l))
}

pub fn quantize_uniform(x: f64, spec: &QuantSpec) -> Result<f64> {
    Ok(spec.level_value(quantize_level(x, spec)?))
}

/// Sign-binarized linear layer: `W ≈ α·signs`.
///
/// Signs are bit-packed row-major, one row per output neuron, each row padded
/// to a whole byte; bit `j % 8` (LSB first) of byte `j / 8` holds column `j`,
/// with 1 meaning +1.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryLinear<T> {
    rows: usize,
    cols: usize,
    signs: Vec<u8>,
    scale: T,
    latent: Tensor<T>,
    // Unpacked ±1 values, transposed to (cols × rows) for spike-driven row
    // accumulation.
    signs_t: Vec<T>,
}

#[inline]
fn row_stride(cols: usize) -> usize {
    cols.div_ceil(8)
}

impl<T: Real> BinaryLinear<T> {
    /// Reassembles a layer from stored parts. `signs` must agree with the
    /// sign pattern of `latent`.
    pub fn from_parts(latent: Tensor<T>, signs: Vec<u8>, scale: T) -> Result<Self> {
        let (rows, cols) = shape2(&latent)?;
        if signs.len() != rows * row_stride(cols) {
            return Err(Error::shape(format!(
                "packed signs: expected {} bytes for {rows}x{cols}, got {}",
                rows * row_stride(cols),
                signs.len()
            )));
        }
        let rebuilt = pack_signs(&latent, rows, cols);
        if rebuilt != signs {
            return Err(Error::config("packed signs disagree with latent weights"));
        }
        let signs_t = unpack_transposed(&signs, rows, cols);
        Ok(Self {
            rows,
            cols,
            signs,
            scale,
            latent,
            signs_t,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn packed_signs(&self) -> &[u8] {
        &self.signs
    }

    pub fn latent(&self) -> &Tensor<T> {
        &self.latent
    }

    pub fn sign(&self, row: usize, col: usize) -> i8 {
        let byte = self.signs[row * row_stride(self.cols) + col / 8];
        if byte >> (col % 8) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// ±1 values laid out (cols × rows).
    pub fn signs_transposed(&self) -> &[T] {
        &self.signs_t
    }

    /// Dense `α·signs` (rows × cols).
    pub fn dequantized(&self) -> Tensor<T> {
        let mut t = Tensor::zeros(&[self.rows, self.cols]);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set2(i, j, self.scale * T::from_f64(self.sign(i, j) as f64));
            }
        }
        t
    }

    /// Replaces the latent weights and re-derives signs and scale.
    pub fn set_latent(&mut self, latent: Tensor<T>) -> Result<()> {
        *self = binarize(&latent)?;
        Ok(())
    }

    pub(crate) fn latent_mut(&mut self) -> &mut [T] {
        self.latent.data_mut()
    }

    /// Re-derives signs and scale from the (possibly updated) latent weights.
    pub fn rebinarize(&mut self) {
        let (rows, cols) = (self.rows, self.cols);
        self.scale = mean_abs(self.latent.data());
        self.signs = pack_signs(&self.latent, rows, cols);
        self.signs_t = unpack_transposed(&self.signs, rows, cols);
    }
}

fn shape2<T: Real>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match *t.shape() {
        [n] => Ok((1, n)),
        [r, c] => Ok((r, c)),
        _ => Err(Error::shape("binarize expects a 1-D or 2-D tensor")),
    }
}

fn mean_abs<T: Real>(xs: &[T]) -> T {
    let mut s = T::zero();
    for &x in xs {
        s += x.abs();
    }
    s / T::from_usize(xs.len())
}

fn pack_signs<T: Real>(latent: &Tensor<T>, rows: usize, cols: usize) -> Vec<u8> {
    let stride = row_stride(cols);
    let mut out = vec![0u8; rows * stride];
    for (idx, &w) in latent.data().iter().enumerate() {
        if w >= T::zero() {
            let (i, j) = (idx / cols, idx % cols);
            out[i * stride + j / 8] |= 1 << (j % 8);
        }
    }
    out
}

fn unpack_transposed<T: Real>(signs: &[u8], rows: usize, cols: usize) -> Vec<T> {
    let stride = row_stride(cols);
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let bit = signs[i * stride + j / 8] >> (j % 8) & 1;
            out[j * rows + i] = if bit == 1 { T::one() } else { -T::one() };
        }
    }
    out
}

/// Sign binarization with `sign(0) = +1` and `α = mean |latent|`.
///
/// A 1-D input is treated as a single row.
pub fn binarize<T: Real>(latent: &Tensor<T>) -> Result<BinaryLinear<T>> {
    if latent.is_empty() {
        return Err(Error::shape("cannot binarize an empty tensor"));
    }
    let (rows, cols) = shape2(latent)?;
    let latent = latent.clone().reshape(&[rows, cols])?;
    let signs = pack_signs(&latent, rows, cols);
    let signs_t = unpack_transposed(&signs, rows, cols);
    Ok(BinaryLinear {
        rows,
        cols,
        scale: mean_abs(latent.data()),
        signs,
        latent,
        signs_t,
    })
}

/// Straight-through gradient: passes `upstream` where `|latent| ≤ clip`,
/// zero elsewhere.
pub fn ste_grad<T: Real>(upstream: &Tensor<T>, latent: &Tensor<T>, clip: T) -> Result<Tensor<T>> {
    if upstream.shape() != latent.shape() {
        return Err(Error::shape(format!(
            "ste_grad: upstream {:?} vs latent {:?}",
            upstream.shape(),
            latent.shape()
        )));
    }
    upstream.zip_with(latent, |g, w| if w.abs() <= clip { g } else { T::zero() })
}

pub const DEFAULT_STE_CLIP: f64 = 1.0;

/// How the inverse mix matrix is collapsed into one threshold per timestep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldMode {
    /// `V_th · (M⁻¹)[t][t] / α`
    Diagonal,
    /// `V_th · Σ_j (M⁻¹)[t][j] / α`
    Rowsum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldedThresholds<T> {
    pub per_step: Vec<T>,
    pub mode: FoldMode,
}

pub fn fold_thresholds<T: Real>(
    m: &LowerTriangular<T>,
    v_th: T,
    alpha: T,
    mode: FoldMode,
) -> Result<FoldedThresholds<T>> {
    if !(alpha.is_finite() && alpha > T::zero()) {
        return Err(Error::InvalidScale(alpha.as_f64()));
    }
    let inv = m.invert()?;
    let per_step = (0..m.order())
        .map(|t| {
            let factor = match mode {
                FoldMode::Diagonal => inv.diag(t),
                FoldMode::Rowsum => {
                    let mut s = T::zero();
                    for &v in inv.row(t) {
                        s += v;
                    }
                    s
                }
            };
            v_th * factor / alpha
        })
        .collect();
    Ok(FoldedThresholds { per_step, mode })
}

/// Max-abs calibration used for the single shared scale of a quantized tensor.
pub fn calibrate_scale(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}
