//! Compact domains, distance to the complement, and numerical checks of the
//! two boundary-regularity conditions used by the bias analysis:
//!
//! * the boundary-mass condition `sup_L L^{1/d} E_Q[exp(−L δ(X)^d)] < ∞`,
//! * the ball-trace condition `|B(x, r) ∩ X| ≥ c |B(x, r)|`.

mod conditions;

pub use conditions::{
    check_condition_a, check_condition_x2, classify_curve, tube_mass_ratio, ConditionReport, TubeReport, Verdict,
    X2Report,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{check_dim, norm};
use crate::rng::SimRng;
use crate::sampling::PointSampler;

/// A compact subset of `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// Axis-aligned box `Π [lower_i, upper_i]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Closed Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// `{x : a_i · x ≤ b_i}`; must be bounded and lie inside `bounding_box`.
    Polytope { normals: Vec<Vec<f64>>, offsets: Vec<f64>, lower: Vec<f64>, upper: Vec<f64> },
    /// `{(x, y) : 0 ≤ x ≤ 1, 0 ≤ y ≤ x²}`, a planar domain with a cusp at the origin.
    ParabolaSubgraph,
    /// Union of the planar annuli `a_k ≤ ‖x‖ ≤ b_k`, `k = 1..=k_max`, with
    /// `a_k = 1/(k+1)` and `b_k = a_{k−1} − delta/(k+1)^4`.
    RingUnion { k_max: usize, delta: f64 },
    /// Finite union of domains of equal dimension.
    Union { parts: Vec<Domain> },
}

impl Domain {
    pub fn unit_box(dim: usize) -> Self {
        Domain::Box { lower: vec![0.0; dim], upper: vec![1.0; dim] }
    }

    pub fn unit_ball(dim: usize) -> Self {
        Domain::Ball { center: vec![0.0; dim], radius: 1.0 }
    }

    pub fn rings(k_max: usize, delta: f64) -> Self {
        Domain::RingUnion { k_max, delta }
    }

    /// Checks the parameters; every constructor path should go through this
    /// before the domain is used.
    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::Config("box bounds must be non-empty and of equal length".into()));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return Err(Error::Config("box lower bounds must be below upper bounds".into()));
                }
            }
            Domain::Ball { center, radius } => {
                if center.is_empty() || !(*radius > 0.0) {
                    return Err(Error::Config("ball needs a centre and a positive radius".into()));
                }
            }
            Domain::Polytope { normals, offsets, lower, upper } => {
                let d = lower.len();
                if d == 0 || upper.len() != d || normals.len() != offsets.len() || normals.is_empty() {
                    return Err(Error::Config("polytope needs matching normals, offsets and bounding box".into()));
                }
                if normals.iter().any(|a| a.len() != d || norm(a) == 0.0) {
                    return Err(Error::Config("polytope normals must be non-zero and of the box dimension".into()));
                }
            }
            Domain::ParabolaSubgraph => {}
            Domain::RingUnion { k_max, delta } => {
                if *k_max == 0 || !(*delta > 0.0 && *delta < 1.0) {
                    return Err(Error::Config("ring union needs k_max ≥ 1 and 0 < delta < 1".into()));
                }
            }
            Domain::Union { parts } => {
                let first = parts.first().ok_or_else(|| Error::Config("union needs at least one part".into()))?;
                for p in parts {
                    p.validate()?;
                    if p.dim() != first.dim() {
                        return Err(Error::Config("union parts must share a dimension".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lower, .. } => lower.len(),
            Domain::Ball { center, .. } => center.len(),
            Domain::Polytope { lower, .. } => lower.len(),
            Domain::ParabolaSubgraph | Domain::RingUnion { .. } => 2,
            Domain::Union { parts } => parts.first().map_or(0, Domain::dim),
        }
    }

    /// Enclosing axis-aligned box.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Box { lower, upper } | Domain::Polytope { lower, upper, .. } => (lower.clone(), upper.clone()),
            Domain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Domain::ParabolaSubgraph => (vec![0.0, 0.0], vec![1.0, 1.0]),
            Domain::RingUnion { .. } => (vec![-1.0, -1.0], vec![1.0, 1.0]),
            Domain::Union { parts } => {
                let d = self.dim();
                parts.iter().fold((vec![f64::INFINITY; d], vec![f64::NEG_INFINITY; d]), |(mut lo, mut hi), p| {
                    let (pl, ph) = p.bounding_box();
                    for i in 0..d {
                        lo[i] = lo[i].min(pl[i]);
                        hi[i] = hi[i].max(ph[i]);
                    }
                    (lo, hi)
                })
            }
        }
    }

    /// Diameter, or the bounding-box diagonal where no closed form is used.
    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Ball { radius, .. } => 2.0 * radius,
            Domain::ParabolaSubgraph => std::f64::consts::SQRT_2,
            Domain::RingUnion { delta, .. } => 2.0 * ring_outer(1, *delta),
            _ => {
                let (lo, hi) = self.bounding_box();
                lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt()
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.dim(), x)?;
        Ok(self.contains_unchecked(x))
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        match self {
            Domain::Box { lower, upper } => x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| l <= v && v <= u),
            Domain::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius
            }
            Domain::Polytope { normals, offsets, .. } => {
                normals.iter().zip(offsets).all(|(a, b)| dot(a, x) <= *b)
            }
            Domain::ParabolaSubgraph => (0.0..=1.0).contains(&x[0]) && x[1] >= 0.0 && x[1] <= x[0] * x[0],
            Domain::RingUnion { k_max, delta } => ring_of(norm(x), *k_max, *delta).is_some(),
            Domain::Union { parts } => parts.iter().any(|p| p.contains_unchecked(x)),
        }
    }

    /// Distance from `x ∈ X` to the complement of `X`.
    ///
    /// Exact for boxes, balls, polytopes and rings; for the parabola subgraph
    /// the upper end of [`Domain::distance_bracket`]; for unions the largest
    /// component value, which is a lower bound.
    pub fn boundary_distance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.distance_bracket(x)?.1)
    }

    /// Certified `(lower, upper)` bracket on `δ(x)`. Errors when `x ∉ X`.
    pub fn distance_bracket(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.dim(), x)?;
        self.bracket_unchecked(x).ok_or_else(|| Error::OutsideDomain { point: x.to_vec() })
    }

    pub(crate) fn bracket_unchecked(&self, x: &[f64]) -> Option<(f64, f64)> {
        if !self.contains_unchecked(x) {
            return None;
        }
        let exact = |v: f64| Some((v.max(0.0), v.max(0.0)));
        match self {
            Domain::Box { lower, upper } => exact(
                x.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(v, (l, u))| (v - l).min(u - v))
                    .fold(f64::INFINITY, f64::min),
            ),
            Domain::Ball { center, radius } => {
                let r = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                exact(radius - r)
            }
            Domain::Polytope { normals, offsets, .. } => exact(
                normals
                    .iter()
                    .zip(offsets)
                    .map(|(a, b)| (b - dot(a, x)) / norm(a))
                    .fold(f64::INFINITY, f64::min),
            ),
            Domain::ParabolaSubgraph => {
                let edges = x[0].min(1.0 - x[0]).min(x[1]).max(0.0);
                let (lo, hi) = parabola_distance(x[0], x[1]);
                Some((lo.min(edges).max(0.0), hi.min(edges)))
            }
            Domain::RingUnion { k_max, delta } => {
                let rho = norm(x);
                let k = ring_of(rho, *k_max, *delta)?;
                exact((rho - ring_inner(k)).min(ring_outer(k, *delta) - rho))
            }
            Domain::Union { parts } => {
                let best = parts
                    .iter()
                    .filter_map(|p| p.bracket_unchecked(x))
                    .fold(0.0f64, |acc, (lo, _)| acc.max(lo));
                Some((best, best))
            }
        }
    }

    /// Points where the ball-trace ratio is expected to be smallest: corners,
    /// cusps and inner rims. Always members of the domain.
    pub fn probe_points(&self) -> Vec<Vec<f64>> {
        let probes: Vec<Vec<f64>> = match self {
            Domain::Box { lower, upper } => {
                let d = lower.len().min(12);
                (0..1usize << d)
                    .map(|mask| {
                        (0..lower.len())
                            .map(|i| if i < d && mask >> i & 1 == 1 { upper[i] } else { lower[i] })
                            .collect()
                    })
                    .collect()
            }
            Domain::Ball { center, radius } => (0..center.len())
                .flat_map(|i| {
                    [1.0, -1.0].map(|s| {
                        let mut p = center.clone();
                        p[i] += s * radius;
                        p
                    })
                })
                .collect(),
            Domain::Polytope { .. } => Vec::new(),
            Domain::ParabolaSubgraph => {
                let mut v = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]];
                for t in [1e-3, 3e-3, 1e-2, 3e-2, 0.1] {
                    v.push(vec![t, 0.5 * t * t]);
                    v.push(vec![t, 0.0]);
                }
                v
            }
            Domain::RingUnion { k_max, delta } => vec![
                vec![ring_inner(*k_max), 0.0],
                vec![ring_outer(*k_max, *delta), 0.0],
                vec![ring_inner(1), 0.0],
                vec![0.0, ring_outer(1, *delta)],
            ],
            Domain::Union { parts } => parts.iter().flat_map(Domain::probe_points).collect(),
        };
        probes.into_iter().filter(|p| self.contains_unchecked(p)).collect()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ring_inner(k: usize) -> f64 {
    1.0 / (k as f64 + 1.0)
}

fn ring_outer(k: usize, delta: f64) -> f64 {
    1.0 / k as f64 - delta / (k as f64 + 1.0).powi(4)
}

// Index of the ring containing radius `rho`, if any.
fn ring_of(rho: f64, k_max: usize, delta: f64) -> Option<usize> {
    if !(rho > 0.0) || rho > 1.0 {
        return None;
    }
    let guess = (1.0 / rho - 1.0).ceil().max(1.0) as usize;
    (guess.saturating_sub(1).max(1)..=(guess + 1).min(k_max))
        .find(|&k| ring_inner(k) <= rho && rho <= ring_outer(k, delta))
}

/// Bracket on the distance from `(x0, y0)` to the curve `y = t²`, over all
/// real `t`. Stationary points of the squared distance solve
/// `2t³ + (1 − 2y0) t − x0 = 0`; each real root is isolated by bisection.
fn parabola_distance(x0: f64, y0: f64) -> (f64, f64) {
    let p = 1.0 - 2.0 * y0;
    let cubic = |t: f64| 2.0 * t * t * t + p * t - x0;
    let bound = 1.0 + p.abs().max(x0.abs());
    let mut pieces = vec![-bound];
    if p < 0.0 {
        let s = (-p / 6.0).sqrt();
        pieces.extend([-s, s]);
    }
    pieces.push(bound);
    let dist = |t: f64| ((t - x0) * (t - x0) + (t * t - y0) * (t * t - y0)).sqrt();
    let lipschitz = (1.0 + 4.0 * bound * bound).sqrt();
    let mut lo = f64::INFINITY;
    let mut hi = f64::INFINITY;
    for w in pieces.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (cubic(a), cubic(b));
        if fa == 0.0 {
            b = a;
        } else if fb == 0.0 {
            a = b;
        } else if fa.signum() == fb.signum() {
            continue;
        } else {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if cubic(m).signum() == fa.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
        }
        let t = 0.5 * (a + b);
        let d = dist(t);
        hi = hi.min(d);
        lo = lo.min(d - lipschitz * 0.5 * (b - a));
    }
    (lo.max(0.0), hi)
}

/// Uniform law on a domain, by rejection from its bounding box.
#[derive(Clone, Debug)]
pub struct UniformOnDomain {
    domain: Domain,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl UniformOnDomain {
    pub fn new(domain: Domain) -> Result<Self> {
        domain.validate()?;
        let (lower, upper) = domain.bounding_box();
        Ok(Self { domain, lower, upper })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
}

impl PointSampler for UniformOnDomain {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        use rand::Rng;
        loop {
            for ((o, l), u) in out.iter_mut().zip(&self.lower).zip(&self.upper) {
                *o = l + (u - l) * rng.random::<f64>();
            }
            if self.domain.contains_unchecked(out) {
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::sampling::sample_in_ball;
    use approx::assert_relative_eq;

    #[test]
    fn membership_examples() {
        assert!(Domain::unit_box(2).contains(&[0.5, 0.5]).unwrap());
        assert!(!Domain::ParabolaSubgraph.contains(&[0.5, 0.3]).unwrap());
        assert!(Domain::ParabolaSubgraph.contains(&[0.5, 0.2]).unwrap());
        // Gap between ring 1 (outer 1 − δ/16) and the unit circle, and
        // between rings 2 and 1 (ring 2 ends at 1/2 − δ/81).
        let rings = Domain::rings(2, 0.01);
        assert!(!rings.contains(&[0.5 - 0.005 / 81.0, 0.0]).unwrap());
        assert!(rings.contains(&[0.45, 0.0]).unwrap());
        assert!(rings.contains(&[0.0, 0.75]).unwrap());
        assert!(!rings.contains(&[0.2, 0.0]).unwrap(), "inside the innermost hole");
        assert!(Domain::unit_box(2).contains(&[0.5]).is_err());
    }

    #[test]
    fn distance_examples() {
        let b = Domain::unit_box(1);
        assert_relative_eq!(b.boundary_distance(&[0.3]).unwrap(), 0.3);
        let ball = Domain::unit_ball(2);
        assert_relative_eq!(ball.boundary_distance(&[0.6, 0.0]).unwrap(), 0.4, epsilon = 1e-15);
        assert!(matches!(b.boundary_distance(&[1.3]), Err(Error::OutsideDomain { .. })));
        // Right edge of the parabola domain.
        assert_eq!(Domain::ParabolaSubgraph.boundary_distance(&[1.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn parabola_distance_against_dense_search() {
        for &(x0, y0) in &[(0.9, 0.5), (0.5, 0.1), (0.8, 0.05), (0.95, 0.85), (0.3, 0.0899)] {
            let (lo, hi) = Domain::ParabolaSubgraph.distance_bracket(&[x0, y0]).unwrap();
            // Brute force over a fine grid of curve parameters plus the edges.
            let curve = (0..400_001)
                .map(|i| -1.0 + 3.0 * i as f64 / 400_000.0)
                .map(|t: f64| ((t - x0).powi(2) + (t * t - y0).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            let oracle = curve.min(x0).min(1.0 - x0).min(y0);
            assert!(lo <= hi);
            assert!(hi - lo <= 1e-6 * hi.max(1e-12), "bracket too wide: {lo} {hi}");
            assert!((hi - oracle).abs() < 1e-5, "({x0},{y0}): {hi} vs {oracle}");
        }
    }

    #[test]
    fn ring_distance_is_gap_aware() {
        let rings = Domain::rings(3, 0.01);
        let outer2 = 0.5 - 0.01 / 81.0;
        let x = [outer2 - 1e-4, 0.0];
        assert_relative_eq!(rings.boundary_distance(&x).unwrap(), 1e-4, epsilon = 1e-12);
    }

    #[test]
    fn polytope_distance_is_facet_distance() {
        // Triangle x ≥ 0, y ≥ 0, x + y ≤ 1.
        let tri = Domain::Polytope {
            normals: vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
            offsets: vec![0.0, 0.0, 1.0],
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        };
        tri.validate().unwrap();
        let d = tri.boundary_distance(&[0.25, 0.25]).unwrap();
        assert_relative_eq!(d, 0.25, epsilon = 1e-15);
        let d = tri.boundary_distance(&[0.4, 0.4]).unwrap();
        assert_relative_eq!(d, 0.2 / 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let json = r#"{"kind":"ring_union","k_max":50,"delta":0.01}"#;
        let d: Domain = serde_json::from_str(json).unwrap();
        assert_eq!(d, Domain::rings(50, 0.01));
        let bad = Domain::Box { lower: vec![1.0], upper: vec![0.0] };
        assert!(bad.validate().is_err());
        assert!(Domain::rings(0, 0.01).validate().is_err());
    }

    #[test]
    fn probes_are_members() {
        for d in [
            Domain::unit_box(3),
            Domain::unit_ball(2),
            Domain::ParabolaSubgraph,
            Domain::rings(50, 0.01),
        ] {
            let probes = d.probe_points();
            assert!(!probes.is_empty());
            assert!(probes.iter().all(|p| d.contains(p).unwrap()));
        }
    }

    // A ball of radius δ(x) around any member stays inside the domain.
    #[test]
    fn distance_balls_stay_inside() {
        let domains = [
            Domain::unit_box(2),
            Domain::unit_ball(3),
            Domain::ParabolaSubgraph,
            Domain::rings(20, 0.01),
            Domain::Union { parts: vec![Domain::unit_box(2), Domain::Ball { center: vec![1.5, 0.5], radius: 0.7 }] },
        ];
        let mut r = rng::stream(77, &[]);
        for dom in &domains {
            let law = UniformOnDomain::new(dom.clone()).unwrap();
            let mut probe = vec![0.0; dom.dim()];
            for _ in 0..300 {
                let x = law.sample(&mut r);
                let delta = dom.boundary_distance(&x).unwrap() * (1.0 - 1e-9);
                for _ in 0..50 {
                    sample_in_ball(&mut r, &x, delta, &mut probe);
                    assert!(dom.contains(&probe).unwrap(), "{dom:?}: {x:?} δ={delta} probe={probe:?}");
                }
            }
        }
    }
}
