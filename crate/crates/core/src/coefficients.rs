//! Per-step Magnus coefficients and their derivatives with respect to the
//! pulse parameters.
//!
//! For step `j` on `[t_j, t_j + dt]` the truncated generator is
//!
//! ```text
//! Omega_j = dt H0 + sum_k c1_kj H_k - i sum_k c2_kj [H0, H_k] - i sum_{k<k'} c3_kk'j [H_k, H_k']
//! ```
//!
//! with `c1 = int u_k`, `c2 = 1/2 int int_{t2<t1} (u_k(t2) - u_k(t1))` and
//! `c3 = 1/2 int int_{t2<t1} (u_k(t1) u_k'(t2) - u_k'(t1) u_k(t2))`.
//!
//! Every scheme reduces to three `b`-independent kernels per step: a weight
//! vector for `c1`, one for `c2`, and an antisymmetric matrix `A` with
//! `c3_kk' = b_k^T A b_k'`. Those kernels are the initialization stage; a
//! [`CoefficientTable`] is then a cheap contraction with the coefficients.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controls::{BasisSet, PulseCoefficients};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_gauss_kronrod, pieces, GaussLegendre};
use crate::scalar::Real;

pub mod cache;

/// Uniform grid of `n_steps` steps over `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TimeGrid<T: Real> {
    duration: T,
    n_steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(duration: T, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidParameter("time grid needs at least one step".into()));
        }
        if !(duration > T::zero()) {
            return Err(Error::InvalidParameter("duration must be positive".into()));
        }
        Ok(Self { duration, n_steps })
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> T {
        self.duration / T::lit(self.n_steps as f64)
    }

    /// Start of step `j`; `t(n_steps)` is exactly `duration`.
    pub fn t(&self, j: usize) -> T {
        if j == self.n_steps {
            self.duration
        } else {
            self.duration * T::lit(j as f64) / T::lit(self.n_steps as f64)
        }
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self {
            duration: self.duration,
            n_steps: self.n_steps * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "M2exact")]
    M2Exact,
    #[serde(rename = "M2approx")]
    M2Approx,
    #[serde(rename = "M4exact")]
    M4Exact,
    #[serde(rename = "M4approx")]
    M4Approx,
    #[serde(rename = "RK4")]
    ReferenceRk,
}

impl SchemeKind {
    pub const MAGNUS: [SchemeKind; 4] = [
        SchemeKind::M2Exact,
        SchemeKind::M2Approx,
        SchemeKind::M4Exact,
        SchemeKind::M4Approx,
    ];

    /// Global order of accuracy in `dt`.
    pub fn order(self) -> u32 {
        match self {
            SchemeKind::M2Exact | SchemeKind::M2Approx => 2,
            SchemeKind::M4Exact | SchemeKind::M4Approx | SchemeKind::ReferenceRk => 4,
        }
    }

    pub fn is_fourth_order_magnus(self) -> bool {
        matches!(self, SchemeKind::M4Exact | SchemeKind::M4Approx)
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::M2Exact => "M2exact",
            SchemeKind::M2Approx => "M2approx",
            SchemeKind::M4Exact => "M4exact",
            SchemeKind::M4Approx => "M4approx",
            SchemeKind::ReferenceRk => "RK4",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m2exact" => Ok(SchemeKind::M2Exact),
            "m2approx" => Ok(SchemeKind::M2Approx),
            "m4exact" => Ok(SchemeKind::M4Exact),
            "m4approx" => Ok(SchemeKind::M4Approx),
            "rk4" | "referencerk" => Ok(SchemeKind::ReferenceRk),
            _ => Err(Error::InvalidParameter(format!("unknown scheme `{s}`"))),
        }
    }
}

/// Control pairs `(k, k')` with `k < k'`, in lexicographic order.
pub fn control_pairs(n_controls: usize) -> Vec<(usize, usize)> {
    (0..n_controls)
        .flat_map(|k| ((k + 1)..n_controls).map(move |kp| (k, kp)))
        .collect()
}

fn pair_index(k: usize, kp: usize, n_controls: usize) -> usize {
    debug_assert!(k < kp && kp < n_controls);
    // pairs before row k: sum_{i<k} (K - 1 - i)
    k * (2 * n_controls - k - 1) / 2 + (kp - k - 1)
}

/// Step integrals of every basis function, computed by composite Gauss–Legendre.
///
/// With `phi` shifted to the step, `Phi(x) = int_0^x phi`:
/// * `single[j, n] = int_0^dt phi_n`
/// * `nested[j, n] = int_0^dt (Phi_n(t1) - t1 phi_n(t1)) dt1`
/// * `cross[j, n, m] = int_0^dt phi_n(t1) Phi_m(t1) dt1`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BasisIntegralCache<T: Real> {
    pub grid: TimeGrid<T>,
    pub n_basis: usize,
    pub single: Vec<T>,
    pub nested: Option<Vec<T>>,
    pub cross: Option<Vec<T>>,
    /// Gauss–Legendre nodes per panel used for the accepted tables.
    pub nodes: usize,
    /// Panels per smooth piece of a step.
    pub panels: usize,
    /// Largest deviation from the adaptive check on the probe set.
    pub validation_defect: f64,
}

impl<T: Real> BasisIntegralCache<T> {
    pub fn single(&self, j: usize, n: usize) -> T {
        self.single[j * self.n_basis + n]
    }

    pub fn nested(&self, j: usize, n: usize) -> Option<T> {
        self.nested.as_ref().map(|v| v[j * self.n_basis + n])
    }

    pub fn cross(&self, j: usize, n: usize, m: usize) -> Option<T> {
        let nb = self.n_basis;
        self.cross.as_ref().map(|v| v[(j * nb + n) * nb + m])
    }

    pub fn has_nested(&self) -> bool {
        self.nested.is_some() && self.cross.is_some()
    }
}

const ESCALATION: [(usize, usize); 5] = [(16, 1), (32, 1), (32, 2), (32, 4), (32, 8)];
const VALIDATION_PROBES: usize = 10;

/// Precomputes the step integrals for `basis` on `grid`.
///
/// `with_nested` adds the double-integral tables needed by M4exact. The
/// result is checked against adaptive Gauss–Kronrod on a fixed probe set;
/// the rule is refined until the defect is below `1e-12` (or the type's
/// precision floor).
pub fn precompute_basis_integrals<T: Real, B: BasisSet<T> + ?Sized>(
    basis: &B,
    grid: &TimeGrid<T>,
    with_nested: bool,
) -> Result<BasisIntegralCache<T>> {
    if basis.duration() != grid.duration() {
        return Err(Error::InvalidParameter("basis and grid durations differ".into()));
    }
    let tol = T::lit(1e-12).max(T::default_epsilon() * T::lit(1e3));
    let mut worst = (0usize, f64::INFINITY);
    for &(nodes, panels) in &ESCALATION {
        let mut cache = integrate_tables(basis, grid, with_nested, nodes, panels);
        let (step, defect) = validate(basis, grid, &cache);
        if defect <= tol.as_f64() {
            cache.validation_defect = defect;
            return Ok(cache);
        }
        worst = (step, defect);
    }
    Err(Error::QuadratureNotConverged {
        step: worst.0,
        defect: worst.1,
    })
}

fn integrate_tables<T: Real, B: BasisSet<T> + ?Sized>(
    basis: &B,
    grid: &TimeGrid<T>,
    with_nested: bool,
    nodes: usize,
    panels: usize,
) -> BasisIntegralCache<T> {
    let nb = basis.n_basis();
    let n_steps = grid.n_steps();
    let dt = grid.dt();
    let rule = GaussLegendre::<T>::new(nodes);
    let breaks = basis.breakpoints();

    let mut single = vec![T::zero(); n_steps * nb];
    let mut nested = with_nested.then(|| vec![T::zero(); n_steps * nb]);
    let mut cross = with_nested.then(|| vec![T::zero(); n_steps * nb * nb]);

    let mut phi = vec![T::zero(); nb];
    let mut inner_phi = vec![T::zero(); nb];
    let mut antideriv = vec![T::zero(); nb];

    for j in 0..n_steps {
        let t0 = grid.t(j);
        let local: Vec<T> = breaks.iter().map(|&b| b - t0).collect();
        let outer = panel_nodes(&rule, T::zero(), dt, &local, panels);
        let s = &mut single[j * nb..(j + 1) * nb];
        for &(x, w) in &outer {
            basis.eval_into(t0 + x, &mut phi);
            for n in 0..nb {
                s[n] += w * phi[n];
            }
            if !with_nested {
                continue;
            }
            antideriv.iter_mut().for_each(|a| *a = T::zero());
            for (y, v) in panel_nodes(&rule, T::zero(), x, &local, panels) {
                basis.eval_into(t0 + y, &mut inner_phi);
                for m in 0..nb {
                    antideriv[m] += v * inner_phi[m];
                }
            }
            if let Some(nested) = nested.as_mut() {
                let row = &mut nested[j * nb..(j + 1) * nb];
                for n in 0..nb {
                    row[n] += w * (antideriv[n] - x * phi[n]);
                }
            }
            if let Some(cross) = cross.as_mut() {
                let block = &mut cross[j * nb * nb..(j + 1) * nb * nb];
                for n in 0..nb {
                    let wp = w * phi[n];
                    for m in 0..nb {
                        block[n * nb + m] += wp * antideriv[m];
                    }
                }
            }
        }
    }
    BasisIntegralCache {
        grid: *grid,
        n_basis: nb,
        single,
        nested,
        cross,
        nodes,
        panels,
        validation_defect: f64::NAN,
    }
}

/// Composite rule on `[a, b]`: split at breakpoints, then into equal panels.
fn panel_nodes<T: Real>(rule: &GaussLegendre<T>, a: T, b: T, breaks: &[T], panels: usize) -> Vec<(T, T)> {
    let mut out = Vec::with_capacity(rule.order() * panels * (breaks.len() + 1));
    if b <= a {
        return out;
    }
    for (lo, hi) in pieces(a, b, breaks) {
        let width = (hi - lo) / T::lit(panels as f64);
        for p in 0..panels {
            let pa = lo + width * T::lit(p as f64);
            let pb = if p + 1 == panels { hi } else { pa + width };
            out.extend(rule.mapped(pa, pb));
        }
    }
    out
}

fn basis_component<T: Real, B: BasisSet<T> + ?Sized>(basis: &B, t: T, n: usize, scratch: &mut Vec<T>) -> T {
    scratch.resize(basis.n_basis(), T::zero());
    basis.eval_into(t, scratch);
    scratch[n]
}

fn adaptive_split<T: Real>(a: T, b: T, breaks: &[T], tol: T, mut f: impl FnMut(T) -> T) -> Result<T> {
    let mut total = T::zero();
    for (lo, hi) in pieces(a, b, breaks) {
        total += adaptive_gauss_kronrod(lo, hi, tol, 40, &mut f)?;
    }
    Ok(total)
}

fn quad_failure() -> Error {
    Error::NotConverged {
        what: "adaptive quadrature",
        last_change: f64::INFINITY,
    }
}

/// Returns `(step, max defect)` of the tables against adaptive quadrature.
fn validate<T: Real, B: BasisSet<T> + ?Sized>(
    basis: &B,
    grid: &TimeGrid<T>,
    cache: &BasisIntegralCache<T>,
) -> (usize, f64) {
    let nb = cache.n_basis;
    let dt = grid.dt();
    let breaks = basis.breakpoints();
    let oracle_tol = T::lit(1e-14).max(T::default_epsilon() * T::lit(64.0));
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d61_676e_7573);
    let mut worst = (0usize, 0.0f64);
    let mut scratch = Vec::new();
    let mut scratch2 = Vec::new();
    for _ in 0..VALIDATION_PROBES {
        let j = rng.random_range(0..grid.n_steps());
        let n = rng.random_range(0..nb);
        let m = rng.random_range(0..nb);
        let t0 = grid.t(j);
        let local: Vec<T> = breaks.iter().map(|&b| b - t0).collect();
        let mut check = |value: T, oracle: Result<T>| {
            let defect = match oracle {
                Ok(o) => (value - o).abs().as_f64(),
                Err(_) => f64::INFINITY,
            };
            if !(defect <= worst.1) {
                worst = (j, defect);
            }
        };
        let single = adaptive_split(T::zero(), dt, &local, oracle_tol, |x| {
            basis_component(basis, t0 + x, n, &mut scratch)
        });
        check(cache.single(j, n), single);

        if let (Some(nested), Some(cross)) = (cache.nested(j, n), cache.cross(j, n, m)) {
            let inner = |x: T, idx: usize, s: &mut Vec<T>| {
                adaptive_split(T::zero(), x, &local, oracle_tol, |y| basis_component(basis, t0 + y, idx, s))
            };
            let mut failed = false;
            let oracle_nested = adaptive_split(T::zero(), dt, &local, oracle_tol, |x| {
                let phi = basis_component(basis, t0 + x, n, &mut scratch);
                match inner(x, n, &mut scratch2) {
                    Ok(a) => a - x * phi,
                    Err(_) => {
                        failed = true;
                        T::zero()
                    }
                }
            });
            check(nested, if failed { Err(quad_failure()) } else { oracle_nested });
            let mut failed = false;
            let oracle_cross = adaptive_split(T::zero(), dt, &local, oracle_tol, |x| {
                let phi = basis_component(basis, t0 + x, n, &mut scratch);
                match inner(x, m, &mut scratch2) {
                    Ok(a) => phi * a,
                    Err(_) => {
                        failed = true;
                        T::zero()
                    }
                }
            });
            check(cross, if failed { Err(quad_failure()) } else { oracle_cross });
        }
    }
    worst
}

/// Basis values at the sampling nodes of the approximate schemes.
///
/// `nodes` holds fractions of the step (`1/2` for the midpoint rule,
/// `1/2 -+ sqrt(3)/6` for two-point Gauss–Legendre); `values[(j * n_nodes + q) * N_b + n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct NodeSamples<T: Real> {
    pub grid: TimeGrid<T>,
    pub n_basis: usize,
    pub nodes: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> NodeSamples<T> {
    pub fn sample<B: BasisSet<T> + ?Sized>(basis: &B, grid: &TimeGrid<T>, nodes: Vec<T>) -> Self {
        let nb = basis.n_basis();
        let dt = grid.dt();
        let mut values = vec![T::zero(); grid.n_steps() * nodes.len() * nb];
        for j in 0..grid.n_steps() {
            for (q, &c) in nodes.iter().enumerate() {
                let off = (j * nodes.len() + q) * nb;
                basis.eval_into(grid.t(j) + c * dt, &mut values[off..off + nb]);
            }
        }
        Self {
            grid: *grid,
            n_basis: nb,
            nodes,
            values,
        }
    }

    pub fn at(&self, j: usize, q: usize) -> &[T] {
        let off = (j * self.nodes.len() + q) * self.n_basis;
        &self.values[off..off + self.n_basis]
    }
}

/// Two-point Gauss–Legendre fractions `1/2 -+ sqrt(3)/6`.
pub fn gauss_fractions<T: Real>() -> [T; 2] {
    let s = T::lit(3.0).sqrt() / T::lit(6.0);
    [T::lit(0.5) - s, T::lit(0.5) + s]
}

/// The `b`-independent part of a scheme: per-step weights for `c1`, `c2` and
/// the antisymmetric `c3` kernel, all contiguous in the basis index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SchemeKernels<T: Real> {
    pub scheme: SchemeKind,
    pub grid: TimeGrid<T>,
    pub n_basis: usize,
    /// `[j * N_b + n]`
    pub c1_weights: Vec<T>,
    /// `[j * N_b + n]`, fourth-order schemes only.
    pub c2_weights: Option<Vec<T>>,
    /// `[(j * N_b + n) * N_b + m]`, antisymmetric in `(n, m)`; fourth-order only.
    pub c3_kernel: Option<Vec<T>>,
}

impl<T: Real> SchemeKernels<T> {
    /// Builds the kernels for `scheme`, running whatever quadrature it needs.
    pub fn precompute<B: BasisSet<T> + ?Sized>(scheme: SchemeKind, basis: &B, grid: &TimeGrid<T>) -> Result<Self> {
        match scheme {
            SchemeKind::M2Exact => Self::from_integrals(scheme, &precompute_basis_integrals(basis, grid, false)?),
            SchemeKind::M4Exact => Self::from_integrals(scheme, &precompute_basis_integrals(basis, grid, true)?),
            SchemeKind::M2Approx => Self::from_samples(
                scheme,
                &NodeSamples::sample(basis, grid, vec![T::lit(0.5)]),
            ),
            SchemeKind::M4Approx => Self::from_samples(
                scheme,
                &NodeSamples::sample(basis, grid, gauss_fractions::<T>().to_vec()),
            ),
            SchemeKind::ReferenceRk => Err(Error::InvalidParameter(
                "the Runge-Kutta reference has no coefficient kernels".into(),
            )),
        }
    }

    pub fn from_integrals(scheme: SchemeKind, cache: &BasisIntegralCache<T>) -> Result<Self> {
        let nb = cache.n_basis;
        match scheme {
            SchemeKind::M2Exact => Ok(Self {
                scheme,
                grid: cache.grid,
                n_basis: nb,
                c1_weights: cache.single.clone(),
                c2_weights: None,
                c3_kernel: None,
            }),
            SchemeKind::M4Exact => {
                let (nested, cross) = match (&cache.nested, &cache.cross) {
                    (Some(n), Some(c)) => (n, c),
                    _ => {
                        return Err(Error::TableMismatch(
                            "M4exact needs the nested integral tables".into(),
                        ))
                    }
                };
                let half = T::lit(0.5);
                let c2 = nested.iter().map(|&v| v * half).collect();
                let mut c3 = vec![T::zero(); cross.len()];
                for j in 0..cache.grid.n_steps() {
                    let block = &cross[j * nb * nb..(j + 1) * nb * nb];
                    let out = &mut c3[j * nb * nb..(j + 1) * nb * nb];
                    for n in 0..nb {
                        for m in 0..nb {
                            out[n * nb + m] = half * (block[n * nb + m] - block[m * nb + n]);
                        }
                    }
                }
                Ok(Self {
                    scheme,
                    grid: cache.grid,
                    n_basis: nb,
                    c1_weights: cache.single.clone(),
                    c2_weights: Some(c2),
                    c3_kernel: Some(c3),
                })
            }
            _ => Err(Error::TableMismatch(format!(
                "{scheme} is not built from exact integrals"
            ))),
        }
    }

    pub fn from_samples(scheme: SchemeKind, samples: &NodeSamples<T>) -> Result<Self> {
        let nb = samples.n_basis;
        let grid = samples.grid;
        let dt = grid.dt();
        let n_steps = grid.n_steps();
        match (scheme, samples.nodes.len()) {
            (SchemeKind::M2Approx, 1) => {
                let c1 = samples.values.iter().map(|&p| dt * p).collect();
                Ok(Self {
                    scheme,
                    grid,
                    n_basis: nb,
                    c1_weights: c1,
                    c2_weights: None,
                    c3_kernel: None,
                })
            }
            (SchemeKind::M4Approx, 2) => {
                let half = T::lit(0.5);
                let s = T::lit(3.0).sqrt() / T::lit(12.0) * dt * dt;
                let mut c1 = vec![T::zero(); n_steps * nb];
                let mut c2 = vec![T::zero(); n_steps * nb];
                let mut c3 = vec![T::zero(); n_steps * nb * nb];
                for j in 0..n_steps {
                    let p1 = samples.at(j, 0);
                    let p2 = samples.at(j, 1);
                    for n in 0..nb {
                        c1[j * nb + n] = dt * half * (p1[n] + p2[n]);
                        c2[j * nb + n] = s * (p1[n] - p2[n]);
                        for m in 0..nb {
                            c3[(j * nb + n) * nb + m] = s * (p2[n] * p1[m] - p1[n] * p2[m]);
                        }
                    }
                }
                Ok(Self {
                    scheme,
                    grid,
                    n_basis: nb,
                    c1_weights: c1,
                    c2_weights: Some(c2),
                    c3_kernel: Some(c3),
                })
            }
            _ => Err(Error::TableMismatch(format!(
                "{scheme} cannot be built from {} sampling nodes",
                samples.nodes.len()
            ))),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    /// Contracts the kernels with `b`.
    pub fn table(&self, b: &PulseCoefficients<T>) -> Result<CoefficientTable<T>> {
        let nb = self.n_basis;
        if b.n_basis() != nb {
            return Err(Error::DimensionMismatch {
                expected: nb,
                found: b.n_basis(),
            });
        }
        let n_controls = b.n_controls();
        let n_steps = self.n_steps();
        let pairs = control_pairs(n_controls);
        let dot = |w: &[T], row: &[T]| w.iter().zip(row).fold(T::zero(), |acc, (&x, &y)| acc + x * y);

        let mut c1 = vec![T::zero(); n_steps * n_controls];
        for j in 0..n_steps {
            let w = &self.c1_weights[j * nb..(j + 1) * nb];
            for k in 0..n_controls {
                c1[j * n_controls + k] = dot(w, b.row(k));
            }
        }
        let c2 = self.c2_weights.as_ref().map(|weights| {
            let mut c2 = vec![T::zero(); n_steps * n_controls];
            for j in 0..n_steps {
                let w = &weights[j * nb..(j + 1) * nb];
                for k in 0..n_controls {
                    c2[j * n_controls + k] = dot(w, b.row(k));
                }
            }
            c2
        });
        let (c3, dc3_left, dc3_right) = match &self.c3_kernel {
            Some(kernel) => {
                let np = pairs.len();
                let mut c3 = vec![T::zero(); n_steps * np];
                let mut left = vec![T::zero(); n_steps * np * nb];
                let mut right = vec![T::zero(); n_steps * np * nb];
                // A b_k for every control, reused across pairs
                let mut ab = vec![T::zero(); n_controls * nb];
                for j in 0..n_steps {
                    let a = &kernel[j * nb * nb..(j + 1) * nb * nb];
                    for k in 0..n_controls {
                        let row = b.row(k);
                        for n in 0..nb {
                            ab[k * nb + n] = dot(&a[n * nb..(n + 1) * nb], row);
                        }
                    }
                    for (p, &(k, kp)) in pairs.iter().enumerate() {
                        let abkp = &ab[kp * nb..(kp + 1) * nb];
                        let abk = &ab[k * nb..(k + 1) * nb];
                        c3[j * np + p] = dot(b.row(k), abkp);
                        let off = (j * np + p) * nb;
                        for n in 0..nb {
                            left[off + n] = abkp[n];
                            right[off + n] = -abk[n];
                        }
                    }
                }
                (Some(c3), Some(left), Some(right))
            }
            None => (None, None, None),
        };
        Ok(CoefficientTable {
            scheme: self.scheme,
            grid: self.grid,
            n_controls,
            n_basis: nb,
            c1,
            c2,
            c3,
            dc1: self.c1_weights.clone(),
            dc2: self.c2_weights.clone(),
            dc3_left,
            dc3_right,
        })
    }
}

/// Per-step coefficients for one pulse, with derivatives in `b`.
///
/// The basis is shared across controls, so `dc1` and `dc2` depend only on
/// `(j, n)`. The `c3` derivatives are stored per pair `k < k'`:
/// `dc3_left = d c3_kk' / d b^(k)` and `dc3_right = d c3_kk' / d b^(k')`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable<T: Real> {
    pub scheme: SchemeKind,
    pub grid: TimeGrid<T>,
    pub n_controls: usize,
    pub n_basis: usize,
    c1: Vec<T>,
    c2: Option<Vec<T>>,
    c3: Option<Vec<T>>,
    dc1: Vec<T>,
    dc2: Option<Vec<T>>,
    dc3_left: Option<Vec<T>>,
    dc3_right: Option<Vec<T>>,
}

impl<T: Real> CoefficientTable<T> {
    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn n_pairs(&self) -> usize {
        self.n_controls * self.n_controls.saturating_sub(1) / 2
    }

    pub fn has_second_term(&self) -> bool {
        self.c2.is_some()
    }

    #[inline]
    pub fn c1(&self, j: usize, k: usize) -> T {
        self.c1[j * self.n_controls + k]
    }

    #[inline]
    pub fn c2(&self, j: usize, k: usize) -> Option<T> {
        self.c2.as_ref().map(|v| v[j * self.n_controls + k])
    }

    /// `c3_kk'j`, antisymmetric in `(k, k')`.
    pub fn c3(&self, j: usize, k: usize, kp: usize) -> Option<T> {
        let c3 = self.c3.as_ref()?;
        Some(match k.cmp(&kp) {
            std::cmp::Ordering::Equal => T::zero(),
            std::cmp::Ordering::Less => c3[j * self.n_pairs() + pair_index(k, kp, self.n_controls)],
            std::cmp::Ordering::Greater => -c3[j * self.n_pairs() + pair_index(kp, k, self.n_controls)],
        })
    }

    /// `c3` by stored pair index.
    #[inline]
    pub fn c3_pair(&self, j: usize, p: usize) -> T {
        self.c3.as_ref().map_or(T::zero(), |v| v[j * self.n_pairs() + p])
    }

    /// `d c1_kj / d b_n^(k)` (zero-based `n`).
    #[inline]
    pub fn dc1(&self, j: usize, n: usize) -> T {
        self.dc1[j * self.n_basis + n]
    }

    pub fn dc1_row(&self, j: usize) -> &[T] {
        &self.dc1[j * self.n_basis..(j + 1) * self.n_basis]
    }

    #[inline]
    pub fn dc2(&self, j: usize, n: usize) -> Option<T> {
        self.dc2.as_ref().map(|v| v[j * self.n_basis + n])
    }

    pub fn dc2_row(&self, j: usize) -> Option<&[T]> {
        self.dc2.as_ref().map(|v| &v[j * self.n_basis..(j + 1) * self.n_basis])
    }

    pub fn dc3_left_row(&self, j: usize, p: usize) -> Option<&[T]> {
        let off = (j * self.n_pairs() + p) * self.n_basis;
        self.dc3_left.as_ref().map(|v| &v[off..off + self.n_basis])
    }

    pub fn dc3_right_row(&self, j: usize, p: usize) -> Option<&[T]> {
        let off = (j * self.n_pairs() + p) * self.n_basis;
        self.dc3_right.as_ref().map(|v| &v[off..off + self.n_basis])
    }

    /// `d c3_kk'j / d b_l^(h)` for any ordering of `(k, k')`.
    pub fn dc3(&self, j: usize, k: usize, kp: usize, h: usize, l: usize) -> Option<T> {
        self.c3.as_ref()?;
        if k == kp {
            return Some(T::zero());
        }
        let (lo, hi, sign) = if k < kp { (k, kp, T::one()) } else { (kp, k, -T::one()) };
        let p = pair_index(lo, hi, self.n_controls);
        let v = if h == lo {
            self.dc3_left_row(j, p)?[l]
        } else if h == hi {
            self.dc3_right_row(j, p)?[l]
        } else {
            T::zero()
        };
        Some(sign * v)
    }
}

/// M2exact: `c1 = sum_n b_n int phi_n` from the cached integrals.
pub fn coefficients_m2exact<T: Real>(
    cache: &BasisIntegralCache<T>,
    b: &PulseCoefficients<T>,
) -> Result<CoefficientTable<T>> {
    SchemeKernels::from_integrals(SchemeKind::M2Exact, cache)?.table(b)
}

/// M2approx: midpoint rule, `c1 = dt u(t_j + dt/2)`.
pub fn coefficients_m2approx<T: Real, B: BasisSet<T> + ?Sized>(
    basis: &B,
    grid: &TimeGrid<T>,
    b: &PulseCoefficients<T>,
) -> Result<CoefficientTable<T>> {
    SchemeKernels::precompute(SchemeKind::M2Approx, basis, grid)?.table(b)
}

/// M4exact: first and second Magnus terms from the nested integral tables.
pub fn coefficients_m4exact<T: Real>(
    cache: &BasisIntegralCache<T>,
    b: &PulseCoefficients<T>,
) -> Result<CoefficientTable<T>> {
    SchemeKernels::from_integrals(SchemeKind::M4Exact, cache)?.table(b)
}

/// M4approx: two-point Gauss–Legendre sampling of the control fields.
pub fn coefficients_m4approx<T: Real, B: BasisSet<T> + ?Sized>(
    basis: &B,
    grid: &TimeGrid<T>,
    b: &PulseCoefficients<T>,
) -> Result<CoefficientTable<T>> {
    SchemeKernels::precompute(SchemeKind::M4Approx, basis, grid)?.table(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::ControlAnsatz;

    struct Constant;
    impl BasisSet<f64> for Constant {
        fn n_basis(&self) -> usize {
            1
        }
        fn duration(&self) -> f64 {
            1.0
        }
        fn eval_into(&self, _t: f64, out: &mut [f64]) {
            out[0] = 1.0;
        }
    }

    struct Linear;
    impl BasisSet<f64> for Linear {
        fn n_basis(&self) -> usize {
            2
        }
        fn duration(&self) -> f64 {
            1.0
        }
        fn eval_into(&self, t: f64, out: &mut [f64]) {
            out[0] = 1.0;
            out[1] = t;
        }
    }

    fn ansatz(n_controls: usize) -> ControlAnsatz<f64> {
        ControlAnsatz::symmetric(n_controls, 8, 2.9, 0.29, None, 1.0).unwrap()
    }

    #[test]
    fn pair_indexing() {
        for k in 1..6 {
            let pairs = control_pairs(k);
            for (p, &(a, b)) in pairs.iter().enumerate() {
                assert_eq!(pair_index(a, b, k), p);
            }
        }
        assert!(control_pairs(1).is_empty());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in SchemeKind::MAGNUS {
            assert_eq!(s.name().parse::<SchemeKind>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
        assert!("M6exact".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = TimeGrid::new(2.9, 7).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(7), 2.9);
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn constant_basis_integrals() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let c = precompute_basis_integrals(&Constant, &grid, true).unwrap();
        assert!((c.single(0, 0) - 1.0).abs() < 1e-15);
        assert!(c.nested(0, 0).unwrap().abs() < 1e-15);
        assert!((c.cross(0, 0, 0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_basis_integral() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let c = precompute_basis_integrals(&Linear, &grid, true).unwrap();
        let dt = 0.25;
        assert!((c.single(0, 1) - dt * dt / 2.0).abs() < 1e-16);
        // int_0^h (t^2/2 - t^2) = -h^3/6 on the first step
        assert!((c.nested(0, 1).unwrap() + dt * dt * dt / 6.0).abs() < 1e-16);
    }

    #[test]
    fn time_translation_invariance_for_constant_basis() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let c = precompute_basis_integrals(&Constant, &grid, true).unwrap();
        for j in 1..8 {
            assert_eq!(c.single(j, 0), c.single(0, 0));
            assert_eq!(c.nested(j, 0), c.nested(0, 0));
            assert_eq!(c.cross(j, 0, 0), c.cross(0, 0, 0));
        }
    }

    #[test]
    fn integration_by_parts_identity() {
        // X_nm + X_mn = I_n I_m
        let a = ansatz(2);
        let grid = TimeGrid::new(2.9, 13).unwrap();
        let c = precompute_basis_integrals(&a, &grid, true).unwrap();
        for j in [0, 1, 6, 12] {
            for n in 0..8 {
                for m in 0..8 {
                    let lhs = c.cross(j, n, m).unwrap() + c.cross(j, m, n).unwrap();
                    let rhs = c.single(j, n) * c.single(j, m);
                    assert!((lhs - rhs).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn coarse_carrier_grid_escalates() {
        let a = ControlAnsatz::symmetric(2, 8, 2.9, 0.29, Some(20.0), 1.0).unwrap();
        let grid = TimeGrid::new(2.9, 2).unwrap();
        let c = precompute_basis_integrals(&a, &grid, true).unwrap();
        assert!(c.nodes * c.panels > 16);
        assert!(c.validation_defect <= 1e-12);
    }

    #[test]
    fn zero_pulse_tables_vanish() {
        let a = ansatz(2);
        let grid = TimeGrid::new(2.9, 10).unwrap();
        let b = PulseCoefficients::zeros(2, 8);
        for scheme in SchemeKind::MAGNUS {
            let t = SchemeKernels::precompute(scheme, &a, &grid).unwrap().table(&b).unwrap();
            for j in 0..10 {
                for k in 0..2 {
                    assert_eq!(t.c1(j, k), 0.0);
                    assert_eq!(t.c2(j, k).unwrap_or(0.0), 0.0);
                }
                assert_eq!(t.c3(j, 0, 1).unwrap_or(0.0), 0.0);
            }
        }
    }

    #[test]
    fn second_order_schemes_have_no_second_term() {
        let a = ansatz(2);
        let grid = TimeGrid::new(2.9, 5).unwrap();
        let b = PulseCoefficients::zeros(2, 8);
        for scheme in [SchemeKind::M2Exact, SchemeKind::M2Approx] {
            let t = SchemeKernels::precompute(scheme, &a, &grid).unwrap().table(&b).unwrap();
            assert!(!t.has_second_term());
            assert!(t.c3(0, 0, 1).is_none());
        }
        assert!(SchemeKernels::precompute(SchemeKind::ReferenceRk, &a, &grid).is_err());
    }

    #[test]
    fn single_control_has_no_pairs() {
        let a = ansatz(1);
        let grid = TimeGrid::new(2.9, 5).unwrap();
        let b = PulseCoefficients::from_flat(1, 8, vec![0.3; 8]).unwrap();
        let t = SchemeKernels::precompute(SchemeKind::M4Exact, &a, &grid).unwrap().table(&b).unwrap();
        assert_eq!(t.n_pairs(), 0);
        assert_eq!(t.c3(2, 0, 0), Some(0.0));
    }

    #[test]
    fn exact_and_approx_kernels_reject_wrong_source() {
        let a = ansatz(2);
        let grid = TimeGrid::new(2.9, 5).unwrap();
        let cache = precompute_basis_integrals(&a, &grid, false).unwrap();
        assert!(SchemeKernels::from_integrals(SchemeKind::M4Exact, &cache).is_err());
        assert!(SchemeKernels::from_integrals(SchemeKind::M2Approx, &cache).is_err());
        let samples = NodeSamples::sample(&a, &grid, vec![0.5]);
        assert!(SchemeKernels::from_samples(SchemeKind::M4Approx, &samples).is_err());
    }
}
