//! Gauss–Legendre rules and an adaptive Gauss–Kronrod integrator.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fixed Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T: Real> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// Nodes from Newton iteration on the three-term recurrence, carried out in `f64`.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self {
            nodes: nodes.into_iter().map(T::lit).collect(),
            weights: weights.into_iter().map(T::lit).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let half = (b - a) * T::lit(0.5);
        let mid = (a + b) * T::lit(0.5);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: T, b: T, mut f: impl FnMut(T) -> T) -> T {
        self.mapped(a, b).fold(T::zero(), |acc, (x, w)| acc + w * f(x))
    }

    /// Integral over `[a, b]`, split at every breakpoint strictly inside.
    pub fn integrate_split(&self, a: T, b: T, breaks: &[T], mut f: impl FnMut(T) -> T) -> T {
        let mut total = T::zero();
        for (lo, hi) in pieces(a, b, breaks) {
            total += self.integrate(lo, hi, &mut f);
        }
        total
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Sub-intervals of `[a, b]` delimited by the breakpoints that fall strictly inside.
pub fn pieces<T: Real>(a: T, b: T, breaks: &[T]) -> Vec<(T, T)> {
    let mut cuts: Vec<T> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut lo = a;
    for c in cuts {
        out.push((lo, c));
        lo = c;
    }
    out.push((lo, b));
    out
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Real>(a: T, b: T, f: &mut impl FnMut(T) -> T) -> (T, T) {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let fc = f(mid);
    let mut kronrod = fc * T::lit(KRONROD_WEIGHTS[7]);
    let mut gauss = fc * T::lit(GAUSS7_WEIGHTS[3]);
    for i in 0..7 {
        let dx = half * T::lit(KRONROD_NODES[i]);
        let s = f(mid - dx) + f(mid + dx);
        kronrod += s * T::lit(KRONROD_WEIGHTS[i]);
        if i % 2 == 1 {
            gauss += s * T::lit(GAUSS7_WEIGHTS[i / 2]);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive bisection with the 7/15-point Gauss–Kronrod pair.
///
/// Returns the integral; fails when the error estimate stays above `tol`
/// after `max_depth` levels of bisection.
pub fn adaptive_gauss_kronrod<T: Real>(
    a: T,
    b: T,
    tol: T,
    max_depth: usize,
    mut f: impl FnMut(T) -> T,
) -> Result<T> {
    fn recurse<T: Real>(
        a: T,
        b: T,
        whole: (T, T),
        tol: T,
        depth: usize,
        f: &mut impl FnMut(T) -> T,
    ) -> std::result::Result<T, T> {
        let (value, err) = whole;
        if err <= tol {
            return Ok(value);
        }
        if depth == 0 {
            return Err(err);
        }
        let mid = (a + b) * T::lit(0.5);
        let left = gk15(a, mid, f);
        let right = gk15(mid, b, f);
        let half_tol = tol * T::lit(0.5);
        let l = recurse(a, mid, left, half_tol, depth - 1, f)?;
        let r = recurse(mid, b, right, half_tol, depth - 1, f)?;
        Ok(l + r)
    }
    let whole = gk15(a, b, &mut f);
    recurse(a, b, whole, tol, max_depth, &mut f).map_err(|err| Error::NotConverged {
        what: "adaptive quadrature",
        last_change: err.as_f64(),
    })
}
