use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Domain;
use crate::error::{Error, Result};
use crate::rng::{self, chunks};
use crate::sampling::{sample_in_ball, PointSampler};
use crate::stats::Estimate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bounded,
    Diverging,
    Inconclusive,
}

/// Classifies a curve sampled along a refining grid (increasing `L`, or
/// decreasing tube width).
///
/// Bounded when the last three values are non-increasing up to three
/// combined standard errors; diverging when the largest value exceeds twice
/// the smallest, separated by at least three combined standard errors.
pub fn classify_curve(values: &[f64], stderrs: &[f64]) -> Verdict {
    let n = values.len();
    let gap = |i: usize, j: usize| 3.0 * (stderrs[i] * stderrs[i] + stderrs[j] * stderrs[j]).sqrt();
    if n >= 3 && (n - 2..n).all(|j| values[j] <= values[j - 1] + gap(j - 1, j)) {
        return Verdict::Bounded;
    }
    let (mut lo, mut hi) = (0, 0);
    for i in 0..n {
        if values[i] < values[lo] {
            lo = i;
        }
        if values[i] > values[hi] {
            hi = i;
        }
    }
    if n >= 2 && values[hi] > 2.0 * values[lo] && values[hi] - values[lo] >= gap(lo, hi) {
        Verdict::Diverging
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    pub l_grid: Vec<f64>,
    pub i_values: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub verdict: Verdict,
}

impl ConditionReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["L", "I", "stderr"])?;
        for ((l, i), s) in self.l_grid.iter().zip(&self.i_values).zip(&self.stderrs) {
            w.write_record([l.to_string(), i.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn value_at(&self, l: f64) -> Option<Estimate> {
        let i = self.l_grid.iter().position(|&x| x == l)?;
        Some(Estimate { value: self.i_values[i], stderr: self.stderrs[i] })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TubeReport {
    pub eps_grid: Vec<f64>,
    pub ratios: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub verdict: Verdict,
}

impl TubeReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eps", "ratio", "stderr"])?;
        for ((e, r), s) in self.eps_grid.iter().zip(&self.ratios).zip(&self.stderrs) {
            w.write_record([e.to_string(), r.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct X2Report {
    pub min_ratio: f64,
    pub stderr: f64,
    pub center: Vec<f64>,
    pub radius: f64,
    pub evaluations: usize,
}

// Per-grid-point sums of f and f² over `n_mc` draws from `q`, using the same
// draws for every grid point. Chunk sums are combined in chunk order so the
// result does not depend on the thread count.
fn grid_moments<F>(domain: &Domain, q: &dyn PointSampler, grid_len: usize, n_mc: usize, seed: u64, f: F) -> Result<Vec<Estimate>>
where
    F: Fn(f64, usize) -> f64 + Sync,
{
    let dim = domain.dim();
    if q.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: q.dim() });
    }
    let parts: Vec<Result<Vec<(f64, f64)>>> = chunks(n_mc)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(c, len)| {
            let mut r = rng::stream(seed, &[c]);
            let mut x = vec![0.0; dim];
            let mut acc = vec![(0.0, 0.0); grid_len];
            for _ in 0..len {
                q.sample_into(&mut r, &mut x);
                let delta = domain
                    .bracket_unchecked(&x)
                    .ok_or_else(|| Error::OutsideDomain { point: x.clone() })?
                    .0;
                for (j, a) in acc.iter_mut().enumerate() {
                    let v = f(delta, j);
                    a.0 += v;
                    a.1 += v * v;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![(0.0, 0.0); grid_len];
    for p in parts {
        for (t, a) in total.iter_mut().zip(p?) {
            t.0 += a.0;
            t.1 += a.1;
        }
    }
    Ok(total.into_iter().map(|(s, s2)| Estimate::from_sums(s, s2, n_mc)).collect())
}

fn check_grid(grid: &[f64], increasing: bool, name: &str) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("{name} must be non-empty and positive")));
    }
    let ordered = grid.windows(2).all(|w| if increasing { w[0] < w[1] } else { w[0] > w[1] });
    if !ordered {
        let dir = if increasing { "increasing" } else { "decreasing" };
        return Err(Error::invalid(format!("{name} must be strictly {dir}")));
    }
    Ok(())
}

/// Estimates `I(L) = L^{1/d} E_Q[exp(−L δ(X)^d)]` on `l_grid`.
pub fn check_condition_a(
    domain: &Domain,
    q: &dyn PointSampler,
    l_grid: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<ConditionReport> {
    domain.validate()?;
    check_grid(l_grid, true, "L grid")?;
    if n_mc < 1000 {
        return Err(Error::invalid("condition (A) check needs at least 1000 draws"));
    }
    let d = domain.dim() as f64;
    let scale: Vec<f64> = l_grid.iter().map(|l| l.powf(1.0 / d)).collect();
    let est = grid_moments(domain, q, l_grid.len(), n_mc, seed, |delta, j| {
        scale[j] * (-l_grid[j] * delta.powf(d)).exp()
    })?;
    let i_values: Vec<f64> = est.iter().map(|e| e.value).collect();
    let stderrs: Vec<f64> = est.iter().map(|e| e.stderr).collect();
    let verdict = classify_curve(&i_values, &stderrs);
    Ok(ConditionReport { l_grid: l_grid.to_vec(), i_values, stderrs, verdict })
}

/// Estimates `Q(δ(X) ≤ ε) / ε` on a decreasing `eps_grid`.
pub fn tube_mass_ratio(
    domain: &Domain,
    q: &dyn PointSampler,
    eps_grid: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<TubeReport> {
    domain.validate()?;
    check_grid(eps_grid, false, "epsilon grid")?;
    if n_mc == 0 {
        return Err(Error::invalid("tube check needs draws"));
    }
    let est = grid_moments(domain, q, eps_grid.len(), n_mc, seed, |delta, j| {
        if delta <= eps_grid[j] {
            1.0 / eps_grid[j]
        } else {
            0.0
        }
    })?;
    let ratios: Vec<f64> = est.iter().map(|e| e.value).collect();
    let stderrs: Vec<f64> = est.iter().map(|e| e.stderr).collect();
    let verdict = classify_curve(&ratios, &stderrs);
    Ok(TubeReport { eps_grid: eps_grid.to_vec(), ratios, stderrs, verdict })
}

/// Smallest estimated `|B(x, r) ∩ X| / |B(x, r)|` over the domain's probe
/// points plus `n_centers` uniform centres, for every `r` in `r_grid`.
pub fn check_condition_x2(
    domain: &Domain,
    n_centers: usize,
    r_grid: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<X2Report> {
    domain.validate()?;
    if r_grid.is_empty() {
        return Err(Error::invalid("radius grid is empty"));
    }
    let diam = domain.diameter();
    if r_grid.iter().any(|&r| !(r > 0.0 && r <= diam * (1.0 + 1e-12))) {
        return Err(Error::invalid(format!("radii must lie in (0, {diam}]")));
    }
    if n_mc == 0 {
        return Err(Error::invalid("X2 check needs draws"));
    }
    let uniform = super::UniformOnDomain::new(domain.clone())?;
    let mut centers = domain.probe_points();
    let mut r = rng::stream(seed, &[rng::label_hash("centers")]);
    centers.extend((0..n_centers).map(|_| uniform.sample(&mut r)));

    let dim = domain.dim();
    let cells: Vec<(usize, usize)> =
        (0..centers.len()).flat_map(|c| (0..r_grid.len()).map(move |j| (c, j))).collect();
    let ratios: Vec<(f64, usize, usize)> = cells
        .par_iter()
        .map(|&(c, j)| {
            let mut rr = rng::stream(seed, &[rng::label_hash("ball"), c as u64, j as u64]);
            let mut y = vec![0.0; dim];
            let hits = (0..n_mc)
                .filter(|_| {
                    sample_in_ball(&mut rr, &centers[c], r_grid[j], &mut y);
                    domain.contains_unchecked(&y)
                })
                .count();
            (hits as f64 / n_mc as f64, c, j)
        })
        .collect();
    let &(p, c, j) = ratios
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
        .expect("at least one cell");
    Ok(X2Report {
        min_ratio: p,
        stderr: (p * (1.0 - p) / n_mc as f64).sqrt(),
        center: centers[c].clone(),
        radius: r_grid[j],
        evaluations: cells.len(),
    })
}
