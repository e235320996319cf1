use crate::error::{Error, Result};
use crate::tensor::Real;

/// Binary activations over `(time, batch, feature)`, one bit per element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeTrain {
    t_steps: usize,
    batch: usize,
    features: usize,
    words: Vec<u64>,
}

impl SpikeTrain {
    pub fn zeros(t_steps: usize, batch: usize, features: usize) -> Self {
        let n = t_steps * batch * features;
        Self {
            t_steps,
            batch,
            features,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn from_fn(
        t_steps: usize,
        batch: usize,
        features: usize,
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Self {
        let mut s = Self::zeros(t_steps, batch, features);
        for t in 0..t_steps {
            for b in 0..batch {
                for n in 0..features {
                    if f(t, b, n) {
                        s.set(t, b, n, true);
                    }
                }
            }
        }
        s
    }

    /// From `0/1` values laid out `(t, b, n)` row-major; anything else is an
    /// error.
    pub fn from_values<T: Real>(
        t_steps: usize,
        batch: usize,
        features: usize,
        values: &[T],
    ) -> Result<Self> {
        if values.len() != t_steps * batch * features {
            return Err(Error::shape(format!(
                "{} values for a {t_steps}x{batch}x{features} spike train",
                values.len()
            )));
        }
        let mut s = Self::zeros(t_steps, batch, features);
        for (i, &v) in values.iter().enumerate() {
            if v == T::one() {
                s.words[i / 64] |= 1 << (i % 64);
            } else if v != T::zero() {
                return Err(Error::shape(format!(
                    "non-binary spike value {v} at flat index {i}"
                )));
            }
        }
        Ok(s)
    }

    pub fn from_frames(frames: &[SpikeFrame]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::shape("no frames"))?;
        let (batch, features) = (first.batch, first.features);
        let mut s = Self::zeros(frames.len(), batch, features);
        for (t, f) in frames.iter().enumerate() {
            if (f.batch, f.features) != (batch, features) {
                return Err(Error::shape("frames disagree in shape"));
            }
            for (i, &bit) in f.bits.iter().enumerate() {
                if bit {
                    s.set(t, i / features, i % features, true);
                }
            }
        }
        Ok(s)
    }

    pub fn t_steps(&self) -> usize {
        self.t_steps
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn len(&self) -> usize {
        self.t_steps * self.batch * self.features
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn index(&self, t: usize, b: usize, n: usize) -> usize {
        debug_assert!(t < self.t_steps && b < self.batch && n < self.features);
        (t * self.batch + b) * self.features + n
    }

    pub fn get(&self, t: usize, b: usize, n: usize) -> bool {
        let i = self.index(t, b, n);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, t: usize, b: usize, n: usize, v: bool) {
        let i = self.index(t, b, n);
        if v {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn frame(&self, t: usize) -> SpikeFrame {
        let width = self.batch * self.features;
        let start = t * width;
        let bits = (start..start + width)
            .map(|i| self.words[i / 64] >> (i % 64) & 1 == 1)
            .collect();
        SpikeFrame {
            batch: self.batch,
            features: self.features,
            bits,
        }
    }

    /// `0/1` values laid out `(t, b, n)`.
    pub fn to_values<T: Real>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        for (w, &word) in self.words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                out[w * 64 + bits.trailing_zeros() as usize] = T::one();
                bits &= bits - 1;
            }
        }
        out
    }

    /// Picks the batch entries at `indices`, in that order.
    pub fn select_batch(&self, indices: &[usize]) -> Self {
        Self::from_fn(self.t_steps, indices.len(), self.features, |t, b, n| {
            self.get(t, indices[b], n)
        })
    }

    /// Concatenates trains along the batch axis.
    pub fn concat_batch(parts: &[&SpikeTrain]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("nothing to concatenate"))?;
        let (t_steps, features) = (first.t_steps, first.features);
        if parts
            .iter()
            .any(|p| p.t_steps != t_steps || p.features != features)
        {
            return Err(Error::shape(
                "cannot concatenate trains of different T or width",
            ));
        }
        let batch = parts.iter().map(|p| p.batch).sum();
        let mut out = Self::zeros(t_steps, batch, features);
        let mut offset = 0;
        for p in parts {
            for t in 0..t_steps {
                for b in 0..p.batch {
                    for n in 0..features {
                        if p.get(t, b, n) {
                            out.set(t, offset + b, n, true);
                        }
                    }
                }
            }
            offset += p.batch;
        }
        Ok(out)
    }
}

/// Spikes of a single timestep, laid out `(batch, feature)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeFrame {
    pub batch: usize,
    pub features: usize,
    pub bits: Vec<bool>,
}

impl SpikeFrame {
    pub fn zeros(batch: usize, features: usize) -> Self {
        Self {
            batch,
            features,
            bits: vec![false; batch * features],
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_values<T: Real>(&self) -> Vec<T> {
        self.bits
            .iter()
            .map(|&b| if b { T::one() } else { T::zero() })
            .collect()
    }
}
