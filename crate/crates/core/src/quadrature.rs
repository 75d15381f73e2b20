//! Globally adaptive Gauss–Kronrod (7/15) quadrature, scalar and
//! vector-valued, with maps for half-infinite and infinite ranges.

use std::cmp::Ordering;
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
// Gauss weights for the odd Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 4000;

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut buf = vec![0.0; dim];
    f(c, &mut buf);
    for k in 0..dim {
        kron[k] = WGK[7] * buf[k];
        gauss[k] = WG[3] * buf[k];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let mut lo = vec![0.0; dim];
        f(c - dx, &mut lo);
        f(c + dx, &mut buf);
        for k in 0..dim {
            let s = lo[k] + buf[k];
            kron[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut err: f64 = 0.0;
    for k in 0..dim {
        kron[k] *= h;
        gauss[k] *= h;
        err = err.max((kron[k] - gauss[k]).abs());
    }
    Segment {
        a,
        b,
        value: kron,
        err,
    }
}

/// Stopping rule: the summed error estimate must fall below
/// `max(abs, rel · ‖I‖∞)`. A bare `f64` is an absolute tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self { abs: 0.0, rel }
    }
}

impl From<f64> for Tolerance {
    fn from(abs: f64) -> Self {
        Self { abs, rel: 0.0 }
    }
}

/// Integrates a vector-valued `f` over the finite interval `[a, b]`.
/// `f(x, out)` writes `dim` components into `out`. The error estimate is the
/// max-norm over components.
pub fn integrate_vec<F>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    tol: impl Into<Tolerance>,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    let tol = tol.into();
    let pieces = 8;
    let mut heap = BinaryHeap::new();
    let w = (b - a) / pieces as f64;
    for i in 0..pieces {
        let lo = a + w * i as f64;
        let hi = if i + 1 == pieces { b } else { lo + w };
        heap.push(gk15(&mut f, lo, hi, dim));
    }
    loop {
        let (total, err) = heap.iter().fold((vec![0.0; dim], 0.0), |(mut t, e), s| {
            for (a, v) in t.iter_mut().zip(&s.value) {
                *a += v;
            }
            (t, e + s.err)
        });
        if total.iter().any(|v| !v.is_finite()) {
            return Err(Error::QuadratureFailure("non-finite integrand".into()));
        }
        let size = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = tol.abs.max(tol.rel * size);
        if err <= target {
            return Ok(total);
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::QuadratureFailure(format!(
                "error estimate {err:e} above tolerance {target:e} after {MAX_SEGMENTS} segments"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::QuadratureFailure("interval collapsed".into()));
        }
        heap.push(gk15(&mut f, worst.a, mid, dim));
        heap.push(gk15(&mut f, mid, worst.b, dim));
    }
}

pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    integrate_vec(|x, out| out[0] = f(x), a, b, 1, abs_tol).map(|v| v[0])
}

/// Integrates over the whole real line using `x = center + scale * t / (1 - t^2)`.
pub fn integrate_vec_real_line<F>(
    mut f: F,
    center: f64,
    scale: f64,
    dim: usize,
    tol: impl Into<Tolerance>,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    integrate_vec(
        |t, out| {
            let d = 1.0 - t * t;
            let x = center + scale * t / d;
            let jac = scale * (1.0 + t * t) / (d * d);
            f(x, out);
            for v in out.iter_mut() {
                // tails contribute nothing once the integrand underflows
                *v = if *v == 0.0 { 0.0 } else { *v * jac };
            }
        },
        -1.0,
        1.0,
        dim,
        tol,
    )
}

pub fn integrate_real_line<F: FnMut(f64) -> f64>(
    mut f: F,
    center: f64,
    scale: f64,
    abs_tol: f64,
) -> Result<f64> {
    integrate_vec_real_line(|x, out| out[0] = f(x), center, scale, 1, abs_tol).map(|v| v[0])
}

/// Integrates over `[lower, inf)` using `x = lower + scale * t / (1 - t)`.
pub fn integrate_vec_half_line<F>(
    mut f: F,
    lower: f64,
    scale: f64,
    dim: usize,
    tol: impl Into<Tolerance>,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    integrate_vec(
        |t, out| {
            let d = 1.0 - t;
            f(lower + scale * t / d, out);
            let jac = scale / (d * d);
            for v in out.iter_mut() {
                *v = if *v == 0.0 { 0.0 } else { *v * jac };
            }
        },
        0.0,
        1.0,
        dim,
        tol,
    )
}

pub fn integrate_half_line<F: FnMut(f64) -> f64>(
    mut f: F,
    lower: f64,
    scale: f64,
    abs_tol: f64,
) -> Result<f64> {
    integrate_vec_half_line(|x, out| out[0] = f(x), lower, scale, 1, abs_tol).map(|v| v[0])
}
