use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{anchored_mean, HFunction, Matcher};
use crate::error::{Error, Result};
use crate::knn::{Neighbour, NnIndex, Scratch};
use crate::points::{check_dim, PointSet};
use crate::polybasis::MultiIndexBasis;
use crate::rng::{chunks, CHUNK};
use crate::sample::LabeledSample;

/// Largest accepted condition number of the local Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// What to do when the local Gram matrix at some target is ill-conditioned.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    #[default]
    Abort,
    /// Use the plain k-NN mean at that target and count it.
    FallbackConstant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalPolyOptions {
    pub order: u32,
    #[serde(default)]
    pub policy: DegeneratePolicy,
    /// Accept any `k ≥ K*` instead of requiring the minimum-neighbour rule.
    #[serde(default)]
    pub permissive: bool,
}

impl LocalPolyOptions {
    pub fn new(order: u32) -> Self {
        Self { order, policy: DegeneratePolicy::Abort, permissive: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalPolyEstimate {
    pub value: f64,
    /// Targets where the fit fell back to the k-NN mean.
    pub fallbacks: usize,
    /// Whether `k` was below the minimum-neighbour rule.
    pub permissive: bool,
}

pub(crate) struct LocalFitter<'a> {
    index: &'a NnIndex,
    values: &'a [f64],
    basis: MultiIndexBasis,
    k: usize,
}

impl<'a> LocalFitter<'a> {
    pub(crate) fn new(index: &'a NnIndex, values: &'a [f64], order: u32, k: usize, permissive: bool) -> Result<(Self, bool)> {
        let basis = MultiIndexBasis::new(index.dim(), order)?;
        if k == 0 || k > index.len() {
            return Err(Error::KOutOfRange { k, n: index.len() });
        }
        if k < basis.k_star() {
            return Err(Error::invalid(format!("k = {k} is below the basis size {}", basis.k_star())));
        }
        let below_rule = order > 0 && k < basis.min_neighbours();
        if below_rule && !permissive {
            return Err(Error::invalid(format!(
                "k = {k} is below the minimum-neighbour rule {} for order {order}",
                basis.min_neighbours()
            )));
        }
        Ok((Self { index, values, basis, k }, below_rule))
    }

    /// Intercept of the local least-squares fit at `x`.
    pub(crate) fn fit(&self, x: &[f64], scratch: &mut Scratch, nbrs: &mut Vec<Neighbour>) -> Result<f64> {
        self.index.nearest_into(x, self.k, scratch, nbrs);
        if self.basis.order() == 0 {
            return Ok(self.mean(nbrs));
        }
        let ks = self.basis.k_star();
        let radius = nbrs[self.k - 1].distance;
        let scale = if radius > 0.0 { radius } else { 1.0 };
        let mut design = DMatrix::<f64>::zeros(self.k, ks);
        let mut row = vec![0.0; ks];
        let pts = self.index.points();
        for (r, nb) in nbrs.iter().enumerate() {
            self.basis.monomials_scaled_into(x, pts.row(nb.index), scale, &mut row);
            for (c, v) in row.iter().enumerate() {
                design[(r, c)] = *v;
            }
        }
        let rhs = DVector::from_iterator(self.k, nbrs.iter().map(|nb| self.values[nb.index]));
        let svd = design.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::DegenerateFit { point: x.to_vec(), condition });
        }
        let coef = svd.solve(&rhs, 0.0).map_err(|_| Error::DegenerateFit { point: x.to_vec(), condition })?;
        Ok(coef[0])
    }

    pub(crate) fn mean(&self, nbrs: &[Neighbour]) -> f64 {
        let first = self.values[nbrs[0].index];
        anchored_mean(nbrs.iter().map(|nb| self.values[nb.index]), first, nbrs.len())
    }

    /// Fits at every target; returns per-target values and the fallback count.
    pub(crate) fn fit_all(&self, targets: &PointSet, policy: DegeneratePolicy) -> Result<(Vec<f64>, usize)> {
        let parts: Vec<Result<(Vec<f64>, usize)>> = chunks(targets.len())
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(c, len)| {
                let mut scratch = Scratch::default();
                let mut nbrs = Vec::with_capacity(self.k);
                let start = c as usize * CHUNK;
                let mut out = Vec::with_capacity(len);
                let mut fallbacks = 0;
                for j in start..start + len {
                    match self.fit(targets.row(j), &mut scratch, &mut nbrs) {
                        Ok(v) => out.push(v),
                        Err(Error::DegenerateFit { .. }) if policy == DegeneratePolicy::FallbackConstant => {
                            fallbacks += 1;
                            out.push(self.mean(&nbrs));
                        }
                        Err(e) => return Err(e),
                    }
                }
                Ok((out, fallbacks))
            })
            .collect();
        let mut values = Vec::with_capacity(targets.len());
        let mut fallbacks = 0;
        for p in parts {
            let (v, f) = p?;
            values.extend(v);
            fallbacks += f;
        }
        Ok((values, fallbacks))
    }
}

impl Matcher<'_> {
    pub(crate) fn h_values(&self, h: &HFunction) -> Vec<f64> {
        let xs = &self.source().covariates;
        (0..xs.len()).map(|i| h.eval(xs.row(i), self.source().labels[i])).collect()
    }

    /// Local polynomial estimate of `g(x) = E[h(X, Y) | X = x]`.
    pub fn local_poly_at(&self, x: &[f64], h: &HFunction, k: usize, options: LocalPolyOptions) -> Result<f64> {
        check_dim(self.index().dim(), x)?;
        let values = self.h_values(h);
        let (fitter, _) = LocalFitter::new(self.index(), &values, options.order, k, options.permissive)?;
        let mut nbrs = Vec::with_capacity(k);
        let mut scratch = Scratch::default();
        match fitter.fit(x, &mut scratch, &mut nbrs) {
            Err(Error::DegenerateFit { .. }) if options.policy == DegeneratePolicy::FallbackConstant => {
                Ok(fitter.mean(&nbrs))
            }
            other => other,
        }
    }

    /// `ê_L(h) = (1/m) Σ_j ĝ(X*_j)`.
    pub fn local_poly(&self, targets: &PointSet, h: &HFunction, k: usize, options: LocalPolyOptions) -> Result<LocalPolyEstimate> {
        self.check(targets, k)?;
        let values = self.h_values(h);
        let (fitter, permissive) = LocalFitter::new(self.index(), &values, options.order, k, options.permissive)?;
        let (fits, fallbacks) = fitter.fit_all(targets, options.policy)?;
        let value = anchored_mean(fits.iter().copied(), fits[0], fits.len());
        Ok(LocalPolyEstimate { value, fallbacks, permissive })
    }
}

/// Local polynomial regression of `h(X_i, Y_i)` at `x` over the `k` nearest
/// sources; returns the intercept. Requires `k ≥ K*` only.
pub fn local_poly_regress(source: &LabeledSample, x: &[f64], k: usize, basis: &MultiIndexBasis, h: &HFunction) -> Result<f64> {
    if basis.dim() != source.dim() {
        return Err(Error::DimensionMismatch { expected: source.dim(), got: basis.dim() });
    }
    let options = LocalPolyOptions { order: basis.order(), policy: DegeneratePolicy::Abort, permissive: true };
    Matcher::new(source)?.local_poly_at(x, h, k, options)
}

/// Local polynomial covariate-shift estimator `ê_L`.
pub fn estimate_local_poly(
    source: &LabeledSample,
    targets: &PointSet,
    h: &HFunction,
    k: usize,
    options: LocalPolyOptions,
) -> Result<LocalPolyEstimate> {
    Matcher::new(source)?.local_poly(targets, h, k, options)
}
