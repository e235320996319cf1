//! Packed lower-triangular matrices.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Square lower-triangular matrix stored row-wise as `order·(order+1)/2`
/// values. Entries above the diagonal are not stored and read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerTriangular<T> {
    order: usize,
    entries: Vec<T>,
}

#[inline]
pub fn packed_len(order: usize) -> usize {
    order * (order + 1) / 2
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

impl<T: Real> LowerTriangular<T> {
    pub fn from_packed(order: usize, entries: Vec<T>) -> Result<Self> {
        if entries.len() != packed_len(order) {
            return Err(Error::shape(format!(
                "order {order} needs {} packed entries, got {}",
                packed_len(order),
                entries.len()
            )));
        }
        Ok(Self { order, entries })
    }

    pub fn identity(order: usize) -> Self {
        Self::diagonal(&vec![T::one(); order])
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let order = diag.len();
        let mut entries = vec![T::zero(); packed_len(order)];
        for (i, &d) in diag.iter().enumerate() {
            entries[packed_index(i, i)] = d;
        }
        Self { order, entries }
    }

    /// Builds from a dense square matrix, rejecting nonzero entries above the
    /// diagonal.
    pub fn from_dense(m: &Tensor<T>) -> Result<Self> {
        let n = m.rows();
        if m.shape() != [n, n] {
            return Err(Error::shape("lower-triangular source must be square"));
        }
        let mut entries = Vec::with_capacity(packed_len(n));
        for i in 0..n {
            for j in 0..n {
                let v = m.at2(i, j);
                if j <= i {
                    entries.push(v);
                } else if v != T::zero() {
                    return Err(Error::shape(format!(
                        "nonzero entry above diagonal at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { order: n, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn packed(&self) -> &[T] {
        &self.entries
    }

    pub fn packed_mut(&mut self) -> &mut [T] {
        &mut self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if j > i {
            T::zero()
        } else {
            self.entries[packed_index(i, j)]
        }
    }

    /// # Panics
    /// When `j > i`.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(j <= i, "({i},{j}) is above the diagonal");
        self.entries[packed_index(i, j)] = v;
    }

    pub fn diag(&self, i: usize) -> T {
        self.entries[packed_index(i, i)]
    }

    /// Contiguous slice of row `i`, columns `0..=i`.
    pub fn row(&self, i: usize) -> &[T] {
        let start = packed_index(i, 0);
        &self.entries[start..start + i + 1]
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.order).all(|i| (0..i).all(|j| self.get(i, j) == T::zero()))
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let n = self.order;
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..=i {
                t.set2(i, j, self.get(i, j));
            }
        }
        t
    }

    /// Inverse by forward substitution, one column of the identity at a time.
    pub fn invert(&self) -> Result<Self> {
        let n = self.order;
        if let Some(row) = (0..n).find(|&i| self.diag(i) == T::zero()) {
            return Err(Error::Singular { row });
        }
        let mut inv = Self {
            order: n,
            entries: vec![T::zero(); packed_len(n)],
        };
        for col in 0..n {
            inv.set(col, col, T::one() / self.diag(col));
            for i in col + 1..n {
                let mut s = T::zero();
                for k in col..i {
                    s += self.get(i, k) * inv.get(k, col);
                }
                inv.set(i, col, -s / self.diag(i));
            }
        }
        Ok(inv)
    }
}

/// Free-function form of [`LowerTriangular::invert`].
pub fn tri_invert<T: Real>(m: &LowerTriangular<T>) -> Result<LowerTriangular<T>> {
    m.invert()
}
