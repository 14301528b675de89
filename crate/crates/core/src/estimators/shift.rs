use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{anchored_mean, HFunction};
use crate::error::{Error, Result};
use crate::knn::{catchment_counts, Neighbour, NnIndex, Scratch};
use crate::points::PointSet;
use crate::rng::{self, chunks, CHUNK};
use crate::sample::LabeledSample;

/// How [`estimate_csa`] turns the `k` neighbour labels into one value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CsaMode {
    /// Draw one neighbour label uniformly per target.
    Sampled { seed: u64 },
    /// Average `h` over all `k` neighbour labels (the expectation of the
    /// sampled mode given the data).
    ConditionalMean,
}

/// A labelled source sample with its nearest-neighbour index, shared by the
/// estimators that query it.
#[derive(Clone, Debug)]
pub struct Matcher<'a> {
    source: &'a LabeledSample,
    index: NnIndex,
}

impl<'a> Matcher<'a> {
    pub fn new(source: &'a LabeledSample) -> Result<Self> {
        Ok(Self { source, index: NnIndex::build(source.covariates.clone())? })
    }

    pub fn source(&self) -> &LabeledSample {
        self.source
    }

    pub fn index(&self) -> &NnIndex {
        &self.index
    }

    pub(crate) fn check(&self, targets: &PointSet, k: usize) -> Result<()> {
        if targets.is_empty() {
            return Err(Error::Empty("target points"));
        }
        if targets.dim() != self.index.dim() {
            return Err(Error::DimensionMismatch { expected: self.index.dim(), got: targets.dim() });
        }
        if k == 0 || k > self.index.len() {
            return Err(Error::KOutOfRange { k, n: self.index.len() });
        }
        Ok(())
    }

    /// `Σ_i M_k*(X_i)/(m k) · h(X_i, Y_i)`.
    pub fn weight(&self, targets: &PointSet, h: &HFunction, k: usize) -> Result<f64> {
        self.check(targets, k)?;
        let profile = catchment_counts(&self.index, targets, k)?;
        let xs = &self.source.covariates;
        let hv: Vec<f64> = (0..xs.len()).map(|i| h.eval(xs.row(i), self.source.labels[i])).collect();
        let anchor = profile.counts.iter().position(|&c| c > 0).map_or(0.0, |i| hv[i]);
        let total = profile.total();
        let s: f64 = profile.counts.iter().zip(&hv).map(|(&c, v)| c as f64 * (v - anchor)).sum();
        Ok(anchor + s / total as f64)
    }

    /// `(1/m) Σ_j h(X*_j, Ŷ*_j)`.
    pub fn csa(&self, targets: &PointSet, h: &HFunction, k: usize, mode: CsaMode) -> Result<f64> {
        self.check(targets, k)?;
        let m = targets.len();
        let parts: Vec<(f64, f64)> = chunks(m)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(c, len)| {
                let mut scratch = Scratch::default();
                let mut nbrs: Vec<Neighbour> = Vec::with_capacity(k);
                let mut r = match mode {
                    CsaMode::Sampled { seed } => Some(rng::stream(seed, &[c])),
                    CsaMode::ConditionalMean => None,
                };
                let start = c as usize * CHUNK;
                let mut values = Vec::with_capacity(len);
                for j in start..start + len {
                    let x = targets.row(j);
                    self.index.nearest_into(x, k, &mut scratch, &mut nbrs);
                    let v = match r.as_mut() {
                        Some(r) => h.eval(x, self.source.labels[nbrs[r.random_range(0..k)].index]),
                        None => {
                            let first = h.eval(x, self.source.labels[nbrs[0].index]);
                            anchored_mean(nbrs.iter().map(|nb| h.eval(x, self.source.labels[nb.index])), first, k)
                        }
                    };
                    values.push(v);
                }
                let anchor = values[0];
                (anchor, values.iter().map(|v| v - anchor).sum::<f64>())
            })
            .collect();
        let anchor = parts[0].0;
        // Recombine chunk sums around the global anchor.
        let mut total = 0.0;
        for (ci, &(a, s)) in parts.iter().enumerate() {
            let len = CHUNK.min(m - ci * CHUNK) as f64;
            total += s + (a - anchor) * len;
        }
        Ok(anchor + total / m as f64)
    }
}

/// Weighting estimator `ê₂`.
pub fn estimate_weight(source: &LabeledSample, targets: &PointSet, h: &HFunction, k: usize) -> Result<f64> {
    Matcher::new(source)?.weight(targets, h, k)
}

/// Covariate-shift adaptation estimator `ê₁`.
pub fn estimate_csa(source: &LabeledSample, targets: &PointSet, h: &HFunction, k: usize, mode: CsaMode) -> Result<f64> {
    Matcher::new(source)?.csa(targets, h, k, mode)
}
