//! Adaptive Gauss–Kronrod (7/15) quadrature with breakpoints.
//!
//! Integrable endpoint singularities of the form `s^{-1/2}` are handled by
//! the callers through the substitution `s = u²` (see
//! [`integrate_sqrt_endpoints`]).

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

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

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Tolerances and limits.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-9,
            max_intervals: 2000,
        }
    }
}

impl QuadOptions {
    pub fn relative(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

/// One 15-point Kronrod rule on `[a, b]`: (value, error estimate).
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * h;
    let error = ((kronrod - gauss) * h).abs();
    (value, error)
}

#[derive(Debug, PartialEq)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]`, splitting first at every breakpoint that
/// falls strictly inside the interval.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: QuadOptions,
) -> Result<Quad> {
    if a == b {
        return Ok(Quad {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > lo && *p < hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));

    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    let mut left = lo;
    for right in cuts.into_iter().chain(std::iter::once(hi)) {
        if right - left <= 0.0 {
            continue;
        }
        let (value, error) = gauss_kronrod(&mut f, left, right);
        evaluations += 15;
        heap.push(Segment {
            a: left,
            b: right,
            value,
            error,
        });
        left = right;
    }

    let mut total: f64 = heap.iter().map(|s| s.value).sum();
    let mut err: f64 = heap.iter().map(|s| s.error).sum();
    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= target {
            return Ok(Quad {
                value: sign * total,
                error: err,
                evaluations,
            });
        }
        if heap.len() >= opts.max_intervals {
            let scale = heap.iter().map(|s| s.value.abs()).sum::<f64>();
            // accept when the remaining error is negligible against the
            // absolute mass of the integrand
            if err <= 1e2 * target.max(opts.rel_tol * scale) {
                return Ok(Quad {
                    value: sign * total,
                    error: err,
                    evaluations,
                });
            }
            return Err(Error::QuadratureNonconvergent {
                value: total,
                error: err,
            });
        }
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at floating-point resolution
            err -= worst.error;
            heap.push(Segment {
                error: 0.0,
                ..worst
            });
            continue;
        }
        let (v1, e1) = gauss_kronrod(&mut f, worst.a, mid);
        let (v2, e2) = gauss_kronrod(&mut f, mid, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        err = (err + e1 + e2 - worst.error).max(0.0);
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
}

/// Integrates over `[a, b]` where `f` may carry `(s-a)^{-1/2}` and
/// `(b-s)^{-1/2}` endpoint singularities: the halves are mapped by
/// `s = a + u²` and `s = b - u²`.
pub fn integrate_sqrt_endpoints<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: QuadOptions,
) -> Result<Quad> {
    if b <= a {
        return Ok(Quad {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let mid = 0.5 * (a + b);
    let um = (mid - a).sqrt();
    let lower_bp: Vec<f64> = breakpoints
        .iter()
        .filter(|&&p| p > a && p < mid)
        .map(|p| (p - a).sqrt())
        .collect();
    let upper_bp: Vec<f64> = breakpoints
        .iter()
        .filter(|&&p| p >= mid && p < b)
        .map(|p| (b - p).sqrt())
        .collect();
    let lower = integrate(|u| 2.0 * u * f(a + u * u), 0.0, um, &lower_bp, opts)?;
    let upper = integrate(
        |u| 2.0 * u * f(b - u * u),
        0.0,
        (b - mid).sqrt(),
        &upper_bp,
        opts,
    )?;
    Ok(Quad {
        value: lower.value + upper.value,
        error: lower.error + upper.error,
        evaluations: lower.evaluations + upper.evaluations,
    })
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}
