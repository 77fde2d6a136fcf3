//! Bound-constrained pulse optimization.
//!
//! The amplitude bounds are linear in the coefficients once the pulse is
//! sampled on a fixed grid, so every iterate stays inside the sampled
//! polytope: each step solves a convex QP with the current BFGS model and the
//! exact linear constraints, then backtracks along the QP direction. Feasible
//! starting points therefore give feasible iterates throughout.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controls::{BasisSet, ControlAnsatz, PulseCoefficients};
use crate::error::{Error, Result};
use crate::grape::ControlProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationConfig {
    pub max_iterations: usize,
    /// Bound on the infinity norm of the projected gradient step.
    pub gradient_tolerance: f64,
    /// Allowed violation of sampled amplitude bounds.
    pub constraint_tolerance: f64,
    pub seed: u64,
    /// Half-width of the uniform initial-coefficient distribution, in units of J.
    pub initial_coefficient_scale: f64,
    /// Number of uniformly spaced samples on `[0, T]` carrying the bounds.
    pub constraint_samples: usize,
    /// Store coefficients with each record entry.
    pub record_coefficients: bool,
    /// Add the kernel set-up time to the recorded wall times.
    pub include_initialization: bool,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            constraint_tolerance: 1e-9,
            seed: 0,
            initial_coefficient_scale: 0.5,
            constraint_samples: 400,
            record_coefficients: false,
            include_initialization: false,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0 && self.constraint_tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if !(self.initial_coefficient_scale >= 0.0) {
            return Err(Error::InvalidParameter("initial scale must be non-negative".into()));
        }
        if self.constraint_samples < 2 {
            return Err(Error::InvalidParameter("need at least two constraint samples".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Converged,
    MaxIterations,
    /// The line search could not decrease the objective.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationEntry {
    pub iteration: usize,
    pub infidelity: f64,
    /// Seconds since the call started (plus set-up time when configured).
    pub wall_time: f64,
    /// Cumulative matrix exponentials.
    pub exponentials: usize,
    pub coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub iterations: Vec<IterationEntry>,
    pub converged: bool,
    pub termination_reason: Option<TerminationReason>,
    pub function_evaluations: usize,
    pub initialization_time: f64,
}

impl OptimizationRecord {
    fn new(initialization_time: f64) -> Self {
        Self {
            iterations: Vec::new(),
            converged: false,
            termination_reason: None,
            function_evaluations: 0,
            initialization_time,
        }
    }

    pub fn final_infidelity(&self) -> Option<f64> {
        self.iterations.last().map(|e| e.infidelity)
    }

    /// `(wall_time, min-so-far infidelity)` per entry.
    pub fn best_envelope(&self) -> Vec<(f64, f64)> {
        let mut best = f64::INFINITY;
        self.iterations
            .iter()
            .map(|e| {
                best = best.min(e.infidelity);
                (e.wall_time, best)
            })
            .collect()
    }
}

/// Optimization failed part-way; the record up to the failure is kept.
#[derive(Debug, thiserror::Error)]
#[error("optimization aborted after {} recorded iterations: {error}", record.iterations.len())]
pub struct OptimizationFailure {
    pub error: Error,
    pub record: OptimizationRecord,
}

/// A smooth objective with an exponential counter.
pub trait Objective {
    fn n_parameters(&self) -> usize;
    /// `(value, gradient, exponentials spent)`
    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>, usize)>;
}

impl Objective for ControlProblem<f64> {
    fn n_parameters(&self) -> usize {
        self.ansatz().n_parameters()
    }

    fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>, usize)> {
        let a = self.ansatz();
        let b = PulseCoefficients::from_flat(a.n_controls(), a.n_basis(), x.to_vec())?;
        let r = self.gradient(&b)?;
        Ok((r.value, r.grad.into_vec(), r.exponentials))
    }
}

/// `offset + matrix * x >= 0`
#[derive(Debug, Clone)]
pub struct LinearConstraints {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl LinearConstraints {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != offset.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: offset.len(),
            });
        }
        Ok(Self { matrix, offset })
    }

    /// Sampled amplitude bounds of `ansatz`.
    pub fn from_ansatz(ansatz: &ControlAnsatz<f64>, samples: usize) -> Result<Self> {
        let zero = PulseCoefficients::zeros(ansatz.n_controls(), ansatz.n_basis());
        let res = ansatz.constraint_residuals(&zero, &ansatz.uniform_grid(samples))?;
        let rows = res.values.len();
        Self::new(
            DMatrix::from_row_slice(rows, res.n_parameters, &res.jacobian),
            DVector::from_vec(res.values),
        )
    }

    pub fn residuals(&self, x: &[f64]) -> DVector<f64> {
        &self.offset + &self.matrix * DVector::from_column_slice(x)
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.residuals(x).iter().fold(0.0f64, |acc, &r| acc.max(-r))
    }
}

/// Uniform draw in `[-s, s]` per coefficient, shrunk towards zero if the
/// sampled bounds are violated.
pub fn random_seed_pulse(ansatz: &ControlAnsatz<f64>, config: &OptimizationConfig) -> Result<PulseCoefficients<f64>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = config.initial_coefficient_scale;
    let values: Vec<f64> = (0..ansatz.n_parameters()).map(|_| rng.random_range(-s..=s)).collect();
    let mut b = PulseCoefficients::from_flat(ansatz.n_controls(), ansatz.n_basis(), values)?;
    let grid = ansatz.uniform_grid(config.constraint_samples);
    let mut phi = vec![0.0; ansatz.n_basis()];
    let mut factor = 1.0f64;
    for &t in &grid {
        ansatz.eval_into(t, &mut phi);
        for (k, &(lo, hi)) in ansatz.bounds().iter().enumerate() {
            let u: f64 = b.row(k).iter().zip(&phi).map(|(x, p)| x * p).sum();
            if u > hi {
                factor = factor.min(hi / u);
            } else if u < lo {
                factor = factor.min(lo / u);
            }
        }
    }
    if factor < 1.0 {
        let shrink = factor.max(0.0) * (1.0 - 1e-12);
        b.as_mut_slice().iter_mut().for_each(|x| *x *= shrink);
    }
    Ok(b)
}

/// Pulse optimization for a control problem under its ansatz bounds.
pub fn minimize(
    problem: &ControlProblem<f64>,
    b0: &PulseCoefficients<f64>,
    config: &OptimizationConfig,
) -> std::result::Result<(PulseCoefficients<f64>, OptimizationRecord), OptimizationFailure> {
    let fail = |error| OptimizationFailure {
        error,
        record: OptimizationRecord::new(0.0),
    };
    problem.ansatz().check_coeffs(b0).map_err(fail)?;
    let constraints = LinearConstraints::from_ansatz(problem.ansatz(), config.constraint_samples).map_err(fail)?;
    let offset = if config.include_initialization {
        problem.initialization_time()
    } else {
        Duration::ZERO
    };
    let (x, mut record) = minimize_objective(problem, &constraints, b0.as_slice(), config, offset)?;
    record.initialization_time = problem.initialization_time().as_secs_f64();
    let a = problem.ansatz();
    let b = PulseCoefficients::from_flat(a.n_controls(), a.n_basis(), x).map_err(|error| OptimizationFailure {
        error,
        record: record.clone(),
    })?;
    Ok((b, record))
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// SQP with a damped BFGS model on linearly constrained `objective`.
///
/// `time_offset` is added to every recorded wall time.
pub fn minimize_objective<O: Objective + ?Sized>(
    objective: &O,
    constraints: &LinearConstraints,
    x0: &[f64],
    config: &OptimizationConfig,
    time_offset: Duration,
) -> std::result::Result<(Vec<f64>, OptimizationRecord), OptimizationFailure> {
    let start = Instant::now();
    let mut record = OptimizationRecord::new(0.0);
    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(OptimizationFailure { error, record }),
            }
        };
    }
    bail!(config.validate());
    let n = objective.n_parameters();
    if x0.len() != n || constraints.matrix.ncols() != n {
        bail!(Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        }));
    }
    let violation = constraints.max_violation(x0);
    if violation > config.constraint_tolerance {
        bail!(Err(Error::InvalidParameter(format!(
            "initial point violates the bounds by {violation:e}"
        ))));
    }

    let clock = |start: Instant| (start.elapsed() + time_offset).as_secs_f64();
    let mut exponentials = 0usize;
    let mut x = DVector::from_column_slice(x0);
    let (mut f, g0, e0) = bail!(objective.evaluate(x.as_slice()));
    let mut g = DVector::from_vec(g0);
    exponentials += e0;
    record.function_evaluations += 1;
    let push = |record: &mut OptimizationRecord, it: usize, f: f64, x: &DVector<f64>, exps: usize| {
        record.iterations.push(IterationEntry {
            iteration: it,
            infidelity: f,
            wall_time: clock(start),
            exponentials: exps,
            coefficients: config.record_coefficients.then(|| x.as_slice().to_vec()),
        });
    };
    push(&mut record, 0, f, &x, exponentials);

    let identity = DMatrix::<f64>::identity(n, n);
    let mut hess = identity.clone();
    let mut fresh_model = true;
    let mut reason = TerminationReason::MaxIterations;
    for it in 1..=config.max_iterations {
        let slack = constraints.residuals(x.as_slice()).map(|r| r.max(0.0));
        let Some(projected) = solve_qp(&identity, &g, &constraints.matrix, &slack) else {
            reason = TerminationReason::Stalled;
            break;
        };
        if projected.amax() <= config.gradient_tolerance {
            reason = TerminationReason::Converged;
            break;
        }
        let mut d = solve_qp(&hess, &g, &constraints.matrix, &slack).unwrap_or_else(|| projected.clone());
        let mut slope = g.dot(&d);
        if !(slope < 0.0) && !fresh_model {
            hess = identity.clone();
            fresh_model = true;
            d = projected;
            slope = g.dot(&d);
        }
        if !(slope < 0.0) {
            reason = TerminationReason::Stalled;
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &d * alpha;
            let (ft, gt, et) = bail!(objective.evaluate(trial.as_slice()));
            exponentials += et;
            record.function_evaluations += 1;
            if ft <= f + ARMIJO * alpha * slope {
                accepted = Some((trial, ft, DVector::from_vec(gt)));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            reason = TerminationReason::Stalled;
            break;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        if fresh_model {
            let sy = s.dot(&y);
            if sy > 0.0 {
                hess = &identity * (y.dot(&y) / sy);
            }
            fresh_model = false;
        }
        damped_bfgs_update(&mut hess, &s, &y);
        x = x_new;
        f = f_new;
        g = g_new;
        push(&mut record, it, f, &x, exponentials);
    }
    record.termination_reason = Some(reason);
    record.converged = reason == TerminationReason::Converged;
    Ok((x.as_slice().to_vec(), record))
}

/// Powell-damped BFGS update keeping `hess` positive definite.
fn damped_bfgs_update(hess: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*hess * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) {
        return;
    }
    let sy = s.dot(y);
    let r = if sy >= 0.2 * sbs {
        y.clone()
    } else {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    };
    let sr = s.dot(&r);
    if !(sr > 0.0) {
        return;
    }
    *hess += &r * r.transpose() / sr - &bs * bs.transpose() / sbs;
}

/// `min g.d + d.B.d/2  s.t.  slack + A d >= 0` by the Goldfarb–Idnani dual
/// active-set method. `B` must be positive definite. Returns `None` when the
/// constraints cannot be satisfied.
pub(crate) fn solve_qp(
    b: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    slack: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = g.len();
    let m = a.nrows();
    let binv = b.clone().cholesky()?.inverse();
    let mut d = -(&binv * g);
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let scale: Vec<f64> = (0..m).map(|i| 1.0 + slack[i].abs() + a.row(i).norm()).collect();
    let max_steps = 50 * (n + 10);
    for _ in 0..max_steps {
        let values = slack + a * &d;
        let violated = (0..m)
            .filter(|i| !active.contains(i))
            .map(|i| (i, values[i] / scale[i]))
            .filter(|&(_, v)| v < -1e-13)
            .min_by(|x, y| x.1.total_cmp(&y.1));
        let Some((p, _)) = violated else {
            return Some(d);
        };
        let np = a.row(p).transpose();
        let mut u_p = 0.0;
        loop {
            // primal direction z and dual direction r for adding constraint p
            let q = active.len();
            let nmat = DMatrix::from_fn(n, q, |r, c| a[(active[c], r)]);
            let ginv_np = &binv * &np;
            let (z, r) = if q == 0 {
                (ginv_np, DVector::zeros(0))
            } else {
                let ginv_n = &binv * &nmat;
                let gram = nmat.transpose() * &ginv_n;
                let r = gram.lu().solve(&(nmat.transpose() * &ginv_np))?;
                (&ginv_np - &ginv_n * &r, r)
            };
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for j in 0..q {
                if r[j] > 0.0 && mult[j] / r[j] < t1 {
                    t1 = mult[j] / r[j];
                    drop = Some(j);
                }
            }
            let zn = z.dot(&np);
            let t2 = if z.amax() <= 1e-14 * np.amax() || zn <= 0.0 {
                f64::INFINITY
            } else {
                -(slack[p] + np.dot(&d)) / zn
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return None;
            }
            for j in 0..q {
                mult[j] -= t * r[j];
            }
            u_p += t;
            if t2.is_finite() {
                d += &z * t;
            }
            if t2 <= t1 {
                active.push(p);
                mult.push(u_p);
                break;
            }
            let j = drop.expect("finite partial step has an index");
            active.remove(j);
            mult.remove(j);
        }
    }
    Some(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        center: Vec<f64>,
        weights: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn n_parameters(&self) -> usize {
            self.center.len()
        }

        fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>, usize)> {
            let mut f = 0.0;
            let mut g = vec![0.0; x.len()];
            for i in 0..x.len() {
                let r = x[i] - self.center[i];
                f += 0.5 * self.weights[i] * r * r;
                g[i] = self.weights[i] * r;
            }
            Ok((f, g, 1))
        }
    }

    fn tight() -> OptimizationConfig {
        OptimizationConfig {
            gradient_tolerance: 1e-10,
            ..OptimizationConfig::default()
        }
    }

    #[test]
    fn one_dimensional_bound_is_active() {
        // min (x - 2)^2 / 2 subject to x <= 1
        let q = Quadratic {
            center: vec![2.0],
            weights: vec![1.0],
        };
        let c = LinearConstraints::new(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, 1.0)).unwrap();
        let (x, rec) = minimize_objective(&q, &c, &[0.0], &tight(), Duration::ZERO).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!(rec.converged);
        assert!(c.max_violation(&x) <= 1e-12);
    }

    #[test]
    fn unconstrained_optimum_inside_box() {
        let q = Quadratic {
            center: vec![0.3, -0.2, 0.1],
            weights: vec![1.0, 10.0, 100.0],
        };
        let mut a = DMatrix::zeros(6, 3);
        for i in 0..3 {
            a[(2 * i, i)] = -1.0;
            a[(2 * i + 1, i)] = 1.0;
        }
        let c = LinearConstraints::new(a, DVector::from_element(6, 1.0)).unwrap();
        let (x, rec) = minimize_objective(&q, &c, &[0.9, 0.9, -0.9], &tight(), Duration::ZERO).unwrap();
        for (xi, ci) in x.iter().zip(&q.center) {
            assert!((xi - ci).abs() < 1e-8);
        }
        assert_eq!(rec.termination_reason, Some(TerminationReason::Converged));
    }

    #[test]
    fn qp_matches_projection_on_box_corner() {
        // min |d + (1, 2)|^2 / 2 - const, d_0 <= 0.25, d_1 <= 0.5 reversed signs
        let b = DMatrix::identity(2, 2);
        let g = DVector::from_vec(vec![-1.0, -2.0]);
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let slack = DVector::from_vec(vec![0.25, 0.5]);
        let d = solve_qp(&b, &g, &a, &slack).unwrap();
        assert!((d[0] - 0.25).abs() < 1e-14 && (d[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_stops_immediately() {
        let q = Quadratic {
            center: vec![0.1, 0.2],
            weights: vec![1.0, 1.0],
        };
        let c = LinearConstraints::new(DMatrix::zeros(1, 2), DVector::from_element(1, 1.0)).unwrap();
        let (x, rec) = minimize_objective(&q, &c, &[0.1, 0.2], &tight(), Duration::ZERO).unwrap();
        assert_eq!(x, vec![0.1, 0.2]);
        assert!(rec.iterations.len() <= 2);
        assert!(rec.converged);
    }

    #[test]
    fn infeasible_start_rejected() {
        let q = Quadratic {
            center: vec![0.0],
            weights: vec![1.0],
        };
        let c = LinearConstraints::new(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, 1.0)).unwrap();
        let err = minimize_objective(&q, &c, &[2.0], &tight(), Duration::ZERO).unwrap_err();
        assert!(err.record.iterations.is_empty());
    }

    #[test]
    fn seed_pulse_is_deterministic_and_bounded() {
        let ansatz = ControlAnsatz::symmetric(2, 8, 2.9, 0.29, None, 1.0).unwrap();
        let mut cfg = OptimizationConfig {
            seed: 17,
            ..OptimizationConfig::default()
        };
        assert_eq!(random_seed_pulse(&ansatz, &cfg).unwrap(), random_seed_pulse(&ansatz, &cfg).unwrap());
        cfg.initial_coefficient_scale = 0.0;
        assert!(random_seed_pulse(&ansatz, &cfg).unwrap().as_slice().iter().all(|&x| x == 0.0));
        cfg.initial_coefficient_scale = 2.0;
        let c = LinearConstraints::from_ansatz(&ansatz, cfg.constraint_samples).unwrap();
        let b = random_seed_pulse(&ansatz, &cfg).unwrap();
        assert!(c.max_violation(b.as_slice()) <= 0.0);
    }

    #[test]
    fn envelope_is_monotone() {
        let rec = OptimizationRecord {
            iterations: [0.5, 0.3, 0.4, 0.1]
                .iter()
                .enumerate()
                .map(|(i, &f)| IterationEntry {
                    iteration: i,
                    infidelity: f,
                    wall_time: i as f64,
                    exponentials: 0,
                    coefficients: None,
                })
                .collect(),
            converged: false,
            termination_reason: None,
            function_evaluations: 4,
            initialization_time: 0.0,
        };
        let env: Vec<f64> = rec.best_envelope().into_iter().map(|e| e.1).collect();
        assert_eq!(env, vec![0.5, 0.3, 0.3, 0.1]);
    }
}
