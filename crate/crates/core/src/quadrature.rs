//! Adaptive Gauss–Kronrod (7/15) quadrature on intervals, and an iterated
//! rule for rectangles.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 48;

/// Result of a quadrature call.
#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> Quadrature {
    let (value, error) = whole;
    if error <= tol || depth >= MAX_DEPTH || (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
        return Quadrature { value, error };
    }
    let m = 0.5 * (a + b);
    let left = gk15(f, a, m);
    let right = gk15(f, m, b);
    let l = adapt(f, a, m, left, 0.5 * tol, depth + 1);
    let r = adapt(f, m, b, right, 0.5 * tol, depth + 1);
    Quadrature { value: l.value + r.value, error: l.error + r.error }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol` or relative
/// tolerance `rel_tol`, whichever is looser.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, error: 0.0 };
    }
    let coarse = gk15(&f, a, b);
    let tol = abs_tol.max(rel_tol * coarse.0.abs());
    adapt(&f, a, b, coarse, tol, 0)
}

/// Like [`integrate`], splitting the interval at the given interior points
/// (kinks or jumps of the integrand).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Quadrature {
    let mut knots = vec![a];
    knots.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    let pieces = (knots.len() - 1) as f64;
    knots.windows(2).fold(Quadrature { value: 0.0, error: 0.0 }, |acc, w| {
        let q = integrate(&f, w[0], w[1], abs_tol / pieces, rel_tol);
        Quadrature { value: acc.value + q.value, error: acc.error + q.error }
    })
}

/// Iterated adaptive integration over `[x0, x1] × [y0, y1]`.
pub fn integrate_rect<F: Fn(f64, f64) -> f64>(
    f: F,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    abs_tol: f64,
    rel_tol: f64,
) -> Quadrature {
    let width = (x1 - x0).abs().max(f64::MIN_POSITIVE);
    let inner_tol = abs_tol / width;
    let outer = integrate(
        |x| integrate(|y| f(x, y), y0, y1, inner_tol * 0.1, rel_tol * 0.1).value,
        x0,
        x1,
        abs_tol,
        rel_tol,
    );
    outer
}
