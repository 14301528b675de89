//! Multi-index monomial basis for local polynomial fitting.
//!
//! The basis of order `L` in `d` variables lists every exponent tuple
//! `λ ∈ N^d` with `|λ| ≤ L` exactly once, in graded lexicographic order:
//! by total degree, then lexicographically descending within a degree, so
//! `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`. The first entry is always
//! the constant monomial.

use crate::error::{Error, Result};
use crate::points::check_dim;
use crate::stats::binomial;

/// Enumerated monomial basis of order `order` in `dim` variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndexBasis {
    dim: usize,
    order: u32,
    indices: Vec<Vec<u32>>,
}

impl MultiIndexBasis {
    /// Enumerates all multi-indices of total degree at most `order`.
    pub fn new(dim: usize, order: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("basis dimension must be positive"));
        }
        let mut indices = Vec::with_capacity(binomial(order as u64 + dim as u64, dim as u64) as usize);
        let mut current = vec![0u32; dim];
        for degree in 0..=order {
            compositions(degree, 0, &mut current, &mut indices);
        }
        Ok(Self { dim, order, indices })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    /// Number of monomials, `C(L + d, d)`.
    pub fn k_star(&self) -> usize {
        self.indices.len()
    }

    /// `Σ_{i=1}^{L} i · C(d + i − 1, i)`: each degree weighted by its number
    /// of monomials.
    pub fn d_const(&self) -> usize {
        (1..=self.order as u64)
            .map(|i| (i * binomial(self.dim as u64 + i - 1, i)) as usize)
            .sum()
    }

    /// Smallest neighbour count for which the local fit carries the bias
    /// guarantee: `(2D + 1) K* + 1`.
    pub fn min_neighbours(&self) -> usize {
        (2 * self.d_const() + 1) * self.k_star() + 1
    }

    /// Local monomials `(z − x)^λ` for every basis entry.
    pub fn monomials(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x)?;
        check_dim(self.dim, z)?;
        let mut out = vec![0.0; self.k_star()];
        self.monomials_scaled_into(x, z, 1.0, &mut out);
        Ok(out)
    }

    /// Writes `((z − x) / scale)^λ` into `out`. Dimensions are not checked.
    pub(crate) fn monomials_scaled_into(&self, x: &[f64], z: &[f64], scale: f64, out: &mut [f64]) {
        let inv = 1.0 / scale;
        for (slot, lambda) in out.iter_mut().zip(&self.indices) {
            *slot = lambda
                .iter()
                .zip(x.iter().zip(z))
                .filter(|(&p, _)| p > 0)
                .map(|(&p, (xi, zi))| ((zi - xi) * inv).powi(p as i32))
                .product();
        }
    }
}

// Appends every composition of `remaining` into the coordinates from `pos`
// onward, largest leading coordinate first.
fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let dim = current.len();
    if pos == dim - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for first in (0..=remaining).rev() {
        current[pos] = first;
        compositions(remaining - first, pos + 1, current, out);
    }
    current[pos] = 0;
}
