use serde::{Deserialize, Serialize};

use super::local_poly::LocalFitter;
use super::{anchored_mean, LocalPolyEstimate, LocalPolyOptions};
use crate::error::{Error, Result};
use crate::knn::{NnIndex, Scratch};
use crate::sample::AteSample;

/// Both algebraic forms of a matching estimate; they agree up to roundoff.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    /// `Σ ± (1 + M/k) Y` form.
    pub weighting: f64,
    /// `Σ ± (Y − imputed counterfactual)` form.
    pub imputation: f64,
}

impl AteEstimate {
    pub fn value(&self) -> f64 {
        self.imputation
    }
}

struct ArmMatches {
    /// Opposite-arm matches received by each unit.
    counts: Vec<usize>,
    /// Mean outcome of each unit's `k` nearest opposite-arm units.
    imputed: Vec<f64>,
}

fn check_arms(data: &AteSample, k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let (control, treated) = (data.arm(false), data.arm(true));
    if control.is_empty() || treated.is_empty() {
        return Err(Error::Empty("treatment arm"));
    }
    let n_min = control.len().min(treated.len());
    if k == 0 || k > n_min {
        return Err(Error::KOutOfRange { k, n: n_min });
    }
    Ok((control, treated))
}

fn match_arms(data: &AteSample, k: usize) -> Result<ArmMatches> {
    let arms = check_arms(data, k)?;
    let n = data.len();
    let mut counts = vec![0usize; n];
    let mut imputed = vec![0.0; n];
    for (own, other) in [(&arms.0, &arms.1), (&arms.1, &arms.0)] {
        let index = NnIndex::build(data.covariates.select(other))?;
        let mut scratch = Scratch::default();
        let mut nbrs = Vec::with_capacity(k);
        for &i in own {
            index.nearest_into(data.covariates.row(i), k, &mut scratch, &mut nbrs);
            for nb in &nbrs {
                counts[other[nb.index]] += 1;
            }
            let first = data.outcomes[other[nbrs[0].index]];
            imputed[i] = anchored_mean(nbrs.iter().map(|nb| data.outcomes[other[nb.index]]), first, k);
        }
    }
    Ok(ArmMatches { counts, imputed })
}

fn sign(w: bool) -> f64 {
    if w {
        1.0
    } else {
        -1.0
    }
}

fn assert_forms_agree(est: &AteEstimate, scale: f64) {
    debug_assert!(
        (est.weighting - est.imputation).abs() <= 1e-10 * (1.0 + scale),
        "matching forms disagree: {est:?}"
    );
}

/// Matching estimator of the average treatment effect.
pub fn estimate_ate(data: &AteSample, k: usize) -> Result<AteEstimate> {
    let m = match_arms(data, k)?;
    let n = data.len() as f64;
    let kf = k as f64;
    let (mut wsum, mut isum, mut scale) = (0.0, 0.0, 0.0f64);
    for i in 0..data.len() {
        let (s, y) = (sign(data.treated[i]), data.outcomes[i]);
        wsum += s * (1.0 + m.counts[i] as f64 / kf) * y;
        isum += s * (y - m.imputed[i]);
        scale = scale.max(y.abs());
    }
    let est = AteEstimate { weighting: wsum / n, imputation: isum / n };
    assert_forms_agree(&est, scale);
    Ok(est)
}

/// Matching estimator of the average treatment effect on the treated.
pub fn estimate_att(data: &AteSample, k: usize) -> Result<AteEstimate> {
    let m = match_arms(data, k)?;
    let n1 = data.n_treated() as f64;
    let kf = k as f64;
    let (mut wsum, mut isum, mut scale) = (0.0, 0.0, 0.0f64);
    for i in 0..data.len() {
        let y = data.outcomes[i];
        if data.treated[i] {
            wsum += y;
            isum += y - m.imputed[i];
        } else {
            wsum -= m.counts[i] as f64 / kf * y;
        }
        scale = scale.max(y.abs());
    }
    let est = AteEstimate { weighting: wsum / n1, imputation: isum / n1 };
    assert_forms_agree(&est, scale);
    Ok(est)
}

/// Treatment-effect estimator imputing counterfactuals with per-arm local
/// polynomial fits.
pub fn estimate_ate_local_poly(data: &AteSample, k: usize, options: LocalPolyOptions) -> Result<LocalPolyEstimate> {
    let (control, treated) = check_arms(data, k)?;
    let mut total = 0.0;
    let mut fallbacks = 0;
    let mut permissive = false;
    for (own, other) in [(&control, &treated), (&treated, &control)] {
        let index = NnIndex::build(data.covariates.select(other))?;
        let values: Vec<f64> = other.iter().map(|&j| data.outcomes[j]).collect();
        let (fitter, below) = LocalFitter::new(&index, &values, options.order, k, options.permissive)?;
        permissive |= below;
        let (fits, f) = fitter.fit_all(&data.covariates.select(own), options.policy)?;
        fallbacks += f;
        for (&i, g) in own.iter().zip(fits) {
            total += sign(data.treated[i]) * (data.outcomes[i] - g);
        }
    }
    Ok(LocalPolyEstimate { value: total / data.len() as f64, fallbacks, permissive })
}
