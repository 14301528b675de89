//! Fixtures shared by the benchmarks.

use knnshift::datagen::{gen_setup, SetupSpec, SetupDraw};
use knnshift::sampling::{sample_chunked, UniformBox};
use knnshift::PointSet;

/// `n` uniform points in the unit cube of dimension `d`.
pub fn uniform_points(d: usize, n: usize, seed: u64) -> PointSet {
    sample_chunked(&UniformBox::unit(d), n, seed)
}

/// One draw of the truncated-normal shift setup with `n = m`.
pub fn shift_draw(d: usize, n: usize, seed: u64) -> SetupDraw {
    let spec = SetupSpec::by_name("TN0.5-Cubic", d).expect("known setup");
    gen_setup(&spec, n, n, seed).expect("valid setup")
}
