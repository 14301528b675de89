//! Catchment counts `M_k*` and catchment-area volumes `Q(A_k(z))`.

use rayon::prelude::*;

use super::{Neighbour, NnIndex, Scratch};
use crate::error::{Error, Result};
use crate::points::{check_dim, squared_distance, PointSet};
use crate::rng;
use crate::sampling::PointSampler;
use crate::stats::Estimate;

/// Per-source match counts: `counts[i]` is the number of targets that have
/// source `i` among their `k` nearest sources.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatchmentProfile {
    pub counts: Vec<usize>,
    pub k: usize,
    pub m: usize,
}

impl CatchmentProfile {
    /// Matching weights `M_k*(X_i) / (m k)`; they sum to one.
    pub fn weights(&self) -> Vec<f64> {
        let denom = (self.m * self.k) as f64;
        self.counts.iter().map(|&c| c as f64 / denom).collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Counts, for every source point, how many targets select it among their
/// `k` nearest sources.
pub fn catchment_counts(index: &NnIndex, targets: &PointSet, k: usize) -> Result<CatchmentProfile> {
    if targets.is_empty() {
        return Err(Error::Empty("target points"));
    }
    check_dim(index.dim(), targets.row(0))?;
    if targets.dim() != index.dim() {
        return Err(Error::DimensionMismatch { expected: index.dim(), got: targets.dim() });
    }
    if k == 0 || k > index.len() {
        return Err(Error::KOutOfRange { k, n: index.len() });
    }
    let n = index.len();
    let counts = (0..targets.len())
        .into_par_iter()
        .fold(
            || (vec![0usize; n], Scratch::default(), Vec::with_capacity(k)),
            |(mut counts, mut scratch, mut buf), j| {
                index.nearest_into(targets.row(j), k, &mut scratch, &mut buf);
                for nb in &buf {
                    counts[nb.index] += 1;
                }
                (counts, scratch, buf)
            },
        )
        .map(|(counts, _, _)| counts)
        .reduce(
            || vec![0usize; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(CatchmentProfile { counts, k, m: targets.len() })
}

/// Membership form of the counts: `Σ_j 1{‖X_i − X*_j‖ ≤ τ_k(X*_j)}`, by
/// brute force. Agrees with [`catchment_counts`] when no distance ties occur.
pub fn catchment_counts_by_radius(index: &NnIndex, targets: &PointSet, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > index.len() {
        return Err(Error::KOutOfRange { k, n: index.len() });
    }
    let mut counts = vec![0usize; index.len()];
    let mut scratch = Scratch::default();
    for t in targets.iter() {
        check_dim(index.dim(), t)?;
        let radius_sq = index.kth_sq_distance(t, k, &mut scratch);
        for (i, p) in index.points().iter().enumerate() {
            if squared_distance(p, t) <= radius_sq {
                counts[i] += 1;
            }
        }
    }
    Ok(counts)
}

/// Monte Carlo estimate of `Q(A_k(z))`, where `A_k(z) = {x : ‖z − x‖ ≤ τ_k(x)}`
/// and `x` is drawn from `q`.
pub fn catchment_volume<S: PointSampler + ?Sized>(
    index: &NnIndex,
    z: &[f64],
    k: usize,
    q: &S,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    check_dim(index.dim(), z)?;
    if q.dim() != index.dim() {
        return Err(Error::DimensionMismatch { expected: index.dim(), got: q.dim() });
    }
    if k == 0 || k > index.len() {
        return Err(Error::KOutOfRange { k, n: index.len() });
    }
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be positive"));
    }
    let chunks: Vec<(u64, usize)> = rng::chunks(n_mc).collect();
    let hits: usize = chunks
        .par_iter()
        .map(|&(c, len)| {
            let mut r = rng::stream(seed, &[c]);
            let mut scratch = Scratch::default();
            let mut x = vec![0.0; index.dim()];
            let mut hits = 0usize;
            for _ in 0..len {
                q.sample_into(&mut r, &mut x);
                if squared_distance(z, &x) <= index.kth_sq_distance(&x, k, &mut scratch) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let p = hits as f64 / n_mc as f64;
    Ok(Estimate { value: p, stderr: (p * (1.0 - p) / n_mc as f64).sqrt() })
}

/// Exact area of the first-order Voronoi cell of source point `site`,
/// clipped to the rectangle `[lower, upper]` (planar indexes only). For
/// uniform `Q` on that rectangle, `Q(A_1(X_site))` is this area over the
/// rectangle's area.
pub fn voronoi_cell_area(index: &NnIndex, site: usize, lower: [f64; 2], upper: [f64; 2]) -> Result<f64> {
    if index.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: index.dim() });
    }
    if site >= index.len() {
        return Err(Error::invalid(format!("site {site} out of range")));
    }
    let z = index.points().row(site);
    let z = [z[0], z[1]];
    let mut poly = vec![
        [lower[0], lower[1]],
        [upper[0], lower[1]],
        [upper[0], upper[1]],
        [lower[0], upper[1]],
    ];
    let mut scratch = Scratch::default();
    let mut buf: Vec<Neighbour> = Vec::new();
    let mut seen = 0usize;
    let mut batch = 16usize;
    loop {
        let kk = batch.min(index.len());
        index.nearest_into(&z, kk, &mut scratch, &mut buf);
        for nb in &buf[seen..] {
            if nb.index == site {
                continue;
            }
            let reach = poly.iter().map(|v| (v[0] - z[0]).hypot(v[1] - z[1])).fold(0.0, f64::max);
            if nb.distance > 2.0 * reach {
                return Ok(polygon_area(&poly));
            }
            let other = index.points().row(nb.index);
            if nb.distance == 0.0 {
                // Coincident points: the smaller index owns the cell.
                if nb.index < site {
                    return Ok(0.0);
                }
                continue;
            }
            poly = clip_half_plane(&poly, z, [other[0], other[1]]);
            if poly.len() < 3 {
                return Ok(0.0);
            }
        }
        seen = kk;
        if kk == index.len() {
            return Ok(polygon_area(&poly));
        }
        batch *= 2;
    }
}

// Keeps the part of `poly` closer to `z` than to `other`.
fn clip_half_plane(poly: &[[f64; 2]], z: [f64; 2], other: [f64; 2]) -> Vec<[f64; 2]> {
    let normal = [other[0] - z[0], other[1] - z[1]];
    let mid = [0.5 * (other[0] + z[0]), 0.5 * (other[1] + z[1])];
    let side = |p: &[f64; 2]| (p[0] - mid[0]) * normal[0] + (p[1] - mid[1]) * normal[1];
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (sa, sb) = (side(&a), side(&b));
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    0.5 * twice.abs()
}
