//! Exact k-nearest-neighbour search over a fixed source sample.
//!
//! [`NnIndex`] is a kd-tree with bucket leaves. Queries are exact under the
//! Euclidean metric, and ties in distance are broken by ascending source
//! index, so results coincide with [`linear_scan`] bit for bit.

mod catchment;

pub use catchment::{
    catchment_counts, catchment_counts_by_radius, catchment_volume, voronoi_cell_area, CatchmentProfile,
};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::points::{check_dim, squared_distance, PointSet};

const LEAF_SIZE: usize = 12;

/// One query result: source index and Euclidean distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbour {
    pub index: usize,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    sq: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sq.total_cmp(&other.sq).then(self.index.cmp(&other.index))
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Immutable kd-tree over a source sample.
#[derive(Clone, Debug)]
pub struct NnIndex {
    points: PointSet,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Reusable buffer for repeated queries.
#[derive(Default, Debug)]
pub struct Scratch {
    heap: BinaryHeap<Candidate>,
}

impl NnIndex {
    pub fn build(points: PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("source points"));
        }
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid("source points must be finite"));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        let n = order.len();
        build_node(&points, &mut order, 0, n, &mut nodes);
        Ok(Self { points, order, nodes })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::build(PointSet::from_rows(rows)?)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    fn check_query(&self, x: &[f64], k: usize) -> Result<()> {
        check_dim(self.dim(), x)?;
        if k == 0 || k > self.len() {
            return Err(Error::KOutOfRange { k, n: self.len() });
        }
        Ok(())
    }

    /// The `k` nearest source points to `x`, ordered by distance then index.
    pub fn nearest(&self, x: &[f64], k: usize) -> Result<Vec<Neighbour>> {
        self.check_query(x, k)?;
        let mut out = Vec::with_capacity(k);
        self.nearest_into(x, k, &mut Scratch::default(), &mut out);
        Ok(out)
    }

    /// Distance from `x` to its `k`-th nearest source point.
    pub fn knn_radius(&self, x: &[f64], k: usize) -> Result<f64> {
        Ok(self.nearest(x, k)?[k - 1].distance)
    }

    /// Indices of the `k` nearest source points to `x`.
    pub fn knn_indices(&self, x: &[f64], k: usize) -> Result<Vec<usize>> {
        Ok(self.nearest(x, k)?.into_iter().map(|nb| nb.index).collect())
    }

    /// Unchecked query used in hot loops. `out` is cleared and refilled.
    pub(crate) fn nearest_into(&self, x: &[f64], k: usize, scratch: &mut Scratch, out: &mut Vec<Neighbour>) {
        scratch.heap.clear();
        self.search(0, x, k, &mut scratch.heap);
        out.clear();
        out.extend(scratch.heap.drain().map(|c| Neighbour { index: c.index, distance: c.sq.sqrt() }));
        out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
    }

    /// Squared k-NN radius, unchecked.
    pub(crate) fn kth_sq_distance(&self, x: &[f64], k: usize, scratch: &mut Scratch) -> f64 {
        scratch.heap.clear();
        self.search(0, x, k, &mut scratch.heap);
        scratch.heap.peek().map_or(f64::INFINITY, |c| c.sq)
    }

    fn search(&self, node: usize, x: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let cand = Candidate { sq: squared_distance(x, self.points.row(index)), index };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = x[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, x, k, heap);
                // Equal distances must still be visited: a tie may carry a smaller index.
                if heap.len() < k || diff * diff <= heap.peek().expect("heap is non-empty").sq {
                    self.search(far, x, k, heap);
                }
            }
        }
    }
}

fn build_node(points: &PointSet, order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let dim = points.dim();
    let slice = &mut order[start..end];
    let axis = (0..dim)
        .map(|a| {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = points.row(i)[a];
                (lo.min(v), hi.max(v))
            });
            (a, hi - lo)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(a, _)| a);
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&i, &j| {
        points.row(i)[axis].total_cmp(&points.row(j)[axis]).then(i.cmp(&j))
    });
    let value = points.row(slice[mid])[axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}

/// Reference k-NN by sorting all distances. Same ordering contract as
/// [`NnIndex::nearest`].
pub fn linear_scan(points: &PointSet, x: &[f64], k: usize) -> Vec<Neighbour> {
    let mut all: Vec<Candidate> = points
        .iter()
        .enumerate()
        .map(|(index, p)| Candidate { sq: squared_distance(x, p), index })
        .collect();
    all.sort();
    all.truncate(k);
    all.into_iter().map(|c| Neighbour { index: c.index, distance: c.sq.sqrt() }).collect()
}
