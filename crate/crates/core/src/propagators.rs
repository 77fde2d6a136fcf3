//! Step-wise Magnus propagation and the Runge–Kutta reference.

use crate::coefficients::{control_pairs, CoefficientTable, SchemeKernels, SchemeKind, TimeGrid};
use crate::controls::{BasisSet, ControlAnsatz, PulseCoefficients};
use crate::error::{Error, Result};
use crate::operators::{commutator, hermitian_eig, EigenDecomposition, Operator, StateVector};
use crate::scalar::{times_neg_i, Cplx, Real};

/// Drift, controls and their precomputed commutators.
///
/// `comm_drift[k] = [H0, H_k]`, `comm_cross[p] = [H_k, H_k']` for the `p`-th
/// pair `k < k'`. The Hermitian generator directions `-i[., .]` are cached as
/// well since every propagation step needs them.
#[derive(Debug, Clone)]
pub struct ModelOperators<T: Real> {
    h0: Operator<T>,
    hk: Vec<Operator<T>>,
    comm_drift: Vec<Operator<T>>,
    comm_cross: Vec<Operator<T>>,
    drift_directions: Vec<Operator<T>>,
    cross_directions: Vec<Operator<T>>,
}

impl<T: Real> ModelOperators<T> {
    pub fn new(h0: Operator<T>, hk: Vec<Operator<T>>) -> Result<Self> {
        let comm_drift = hk.iter().map(|h| commutator(&h0, h)).collect::<Result<Vec<_>>>()?;
        let comm_cross = control_pairs(hk.len())
            .into_iter()
            .map(|(k, kp)| commutator(&hk[k], &hk[kp]))
            .collect::<Result<Vec<_>>>()?;
        Self::with_commutators(h0, hk, comm_drift, comm_cross)
    }

    /// Accepts externally supplied commutator tables after checking them.
    pub fn with_commutators(
        h0: Operator<T>,
        hk: Vec<Operator<T>>,
        comm_drift: Vec<Operator<T>>,
        comm_cross: Vec<Operator<T>>,
    ) -> Result<Self> {
        if hk.is_empty() {
            return Err(Error::InvalidParameter("model needs at least one control operator".into()));
        }
        for op in std::iter::once(&h0).chain(&hk) {
            if op.dim() != h0.dim() {
                return Err(Error::DimensionMismatch {
                    expected: h0.dim(),
                    found: op.dim(),
                });
            }
            if !op.is_hermitian() {
                return Err(Error::NotHermitian {
                    deviation: op.hermiticity_defect().as_f64(),
                });
            }
        }
        let pairs = control_pairs(hk.len());
        if comm_drift.len() != hk.len() || comm_cross.len() != pairs.len() {
            return Err(Error::InvalidParameter("commutator table has the wrong length".into()));
        }
        let tol = T::structure_tol();
        let close = |given: &Operator<T>, a: &Operator<T>, b: &Operator<T>| -> Result<bool> {
            let fresh = commutator(a, b)?;
            let scale = fresh.max_abs().max(T::one());
            Ok(given.sub(&fresh)?.max_abs() <= tol * scale)
        };
        for (k, c) in comm_drift.iter().enumerate() {
            if !close(c, &h0, &hk[k])? {
                return Err(Error::InvalidParameter(format!("[H0, H_{k}] does not match")));
            }
        }
        for (p, &(k, kp)) in pairs.iter().enumerate() {
            if !close(&comm_cross[p], &hk[k], &hk[kp])? {
                return Err(Error::InvalidParameter(format!("[H_{k}, H_{kp}] does not match")));
            }
        }
        let drift_directions = comm_drift.iter().map(Operator::times_neg_i).collect();
        let cross_directions = comm_cross.iter().map(Operator::times_neg_i).collect();
        Ok(Self {
            h0,
            hk,
            comm_drift,
            comm_cross,
            drift_directions,
            cross_directions,
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn n_controls(&self) -> usize {
        self.hk.len()
    }

    pub fn drift(&self) -> &Operator<T> {
        &self.h0
    }

    pub fn controls(&self) -> &[Operator<T>] {
        &self.hk
    }

    pub fn comm_drift(&self) -> &[Operator<T>] {
        &self.comm_drift
    }

    pub fn comm_cross(&self) -> &[Operator<T>] {
        &self.comm_cross
    }

    /// `-i [H0, H_k]`
    pub fn drift_directions(&self) -> &[Operator<T>] {
        &self.drift_directions
    }

    /// `-i [H_k, H_k']`, pair order as in [`control_pairs`].
    pub fn cross_directions(&self) -> &[Operator<T>] {
        &self.cross_directions
    }

    /// `H(t) = H0 + sum_k u_k H_k`
    pub fn hamiltonian(&self, amplitudes: &[T]) -> Operator<T> {
        let mut h = self.h0.clone();
        for (u, hk) in amplitudes.iter().zip(&self.hk) {
            h.axpy_real(*u, hk);
        }
        h
    }

    /// Same model with `H0 + shift * I`.
    pub fn with_drift_shift(&self, shift: T) -> Result<Self> {
        let h0 = self.h0.add(&Operator::identity(self.dim()).scale_real(shift))?;
        Self::new(h0, self.hk.clone())
    }
}

/// `Omega_j` for step `j` of `table`.
pub fn assemble_generator<T: Real>(
    model: &ModelOperators<T>,
    table: &CoefficientTable<T>,
    j: usize,
) -> Result<Operator<T>> {
    if table.n_controls != model.n_controls() {
        return Err(Error::TableMismatch(format!(
            "table has {} controls, model {}",
            table.n_controls,
            model.n_controls()
        )));
    }
    if j >= table.n_steps() {
        return Err(Error::IndexOutOfRange {
            what: "step",
            index: j,
            len: table.n_steps(),
        });
    }
    let mut omega = model.h0.scale_real(table.grid.dt());
    for (k, hk) in model.hk.iter().enumerate() {
        omega.axpy_real(table.c1(j, k), hk);
    }
    if table.has_second_term() {
        for (k, dir) in model.drift_directions.iter().enumerate() {
            omega.axpy_real(table.c2(j, k).unwrap_or_else(T::zero), dir);
        }
        for (p, dir) in model.cross_directions.iter().enumerate() {
            omega.axpy_real(table.c3_pair(j, p), dir);
        }
    }
    Ok(omega)
}

/// Outcome of [`propagate`].
#[derive(Debug, Clone)]
pub struct PropagationResult<T: Real> {
    pub final_state: StateVector<T>,
    /// `(Omega_j, decomposition)` per step, kept when requested.
    pub step_generators: Option<Vec<(Operator<T>, EigenDecomposition<T>)>>,
    /// Number of matrix exponentials (eigendecompositions) performed.
    pub exponentials: usize,
}

impl<T: Real> PropagationResult<T> {
    /// Dense `U_j` for a retained step.
    pub fn step_unitary(&self, j: usize) -> Option<Operator<T>> {
        self.step_generators.as_ref().map(|g| g[j].1.exp_neg_i())
    }

    /// All retained step propagators.
    pub fn step_unitaries(&self) -> Option<Vec<Operator<T>>> {
        self.step_generators
            .as_ref()
            .map(|g| g.iter().map(|(_, d)| d.exp_neg_i()).collect())
    }
}

/// `psi(T) = U_N ... U_1 psi0` with `U_j = exp(-i Omega_j)`.
pub fn propagate<T: Real>(
    model: &ModelOperators<T>,
    table: &CoefficientTable<T>,
    psi0: &StateVector<T>,
    retain: bool,
) -> Result<PropagationResult<T>> {
    if psi0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: psi0.dim(),
        });
    }
    let n = table.n_steps();
    let mut psi = psi0.clone();
    let mut kept = retain.then(|| Vec::with_capacity(n));
    for j in 0..n {
        let omega = assemble_generator(model, table, j)?;
        let eig = hermitian_eig(&omega)?;
        psi = eig.apply_exp(&psi, false);
        if let Some(kept) = kept.as_mut() {
            kept.push((omega, eig));
        }
    }
    Ok(PropagationResult {
        final_state: psi,
        step_generators: kept,
        exponentials: n,
    })
}

/// `1 - |<target|psi>|^2`
pub fn transfer_infidelity<T: Real>(target: &StateVector<T>, psi: &StateVector<T>) -> T {
    let o = target.inner(psi);
    T::one() - (o.re * o.re + o.im * o.im)
}

/// Classical RK4 solution of the Schrödinger equation.
#[derive(Debug, Clone)]
pub struct RkSolution<T: Real> {
    pub state: StateVector<T>,
    pub n_steps: usize,
    /// `| |psi(T)| - |psi0| |`
    pub norm_drift: T,
    /// Step-halving error estimate of `state` (infinite for a single run).
    pub error_estimate: T,
}

fn apply_hamiltonian<T: Real>(
    model: &ModelOperators<T>,
    amplitudes: &[T],
    psi: &nalgebra::DVector<Cplx<T>>,
) -> nalgebra::DVector<Cplx<T>> {
    let mut out = model.h0.matrix() * psi;
    for (u, hk) in amplitudes.iter().zip(&model.hk) {
        out += (hk.matrix() * psi) * Cplx::new(*u, T::zero());
    }
    out.map(times_neg_i)
}

/// Fixed-step RK4 of `d psi/dt = -i H(t) psi` on `grid`, no renormalization.
pub fn reference_rk<T: Real>(
    model: &ModelOperators<T>,
    ansatz: &ControlAnsatz<T>,
    b: &PulseCoefficients<T>,
    grid: &TimeGrid<T>,
    psi0: &StateVector<T>,
) -> Result<RkSolution<T>> {
    ansatz.check_coeffs(b)?;
    if ansatz.n_controls() != model.n_controls() {
        return Err(Error::DimensionMismatch {
            expected: model.n_controls(),
            found: ansatz.n_controls(),
        });
    }
    if psi0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: psi0.dim(),
        });
    }
    let nb = ansatz.n_basis();
    let nk = ansatz.n_controls();
    let mut phi = vec![T::zero(); nb];
    let mut amps = vec![T::zero(); nk];
    let mut pulses_at = |t: T, out: &mut Vec<T>| {
        ansatz.eval_into(t, &mut phi);
        ansatz.pulses_from_basis(b, &phi, out);
    };
    let dt = grid.dt();
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let mut psi = psi0.amplitudes().clone();
    for j in 0..grid.n_steps() {
        let t0 = grid.t(j);
        let t1 = grid.t(j + 1);
        let tm = t0 + half * dt;
        pulses_at(t0, &mut amps);
        let k1 = apply_hamiltonian(model, &amps, &psi);
        pulses_at(tm, &mut amps);
        let k2 = apply_hamiltonian(model, &amps, &(&psi + &k1 * Cplx::new(half * dt, T::zero())));
        let k3 = apply_hamiltonian(model, &amps, &(&psi + &k2 * Cplx::new(half * dt, T::zero())));
        pulses_at(t1, &mut amps);
        let k4 = apply_hamiltonian(model, &amps, &(&psi + &k3 * Cplx::new(dt, T::zero())));
        let two = Cplx::new(T::lit(2.0), T::zero());
        psi += (k1 + &k2 * two + &k3 * two + k4) * Cplx::new(dt * sixth, T::zero());
    }
    let state = StateVector::new(psi)?;
    let norm_drift = (state.norm() - psi0.norm()).abs();
    Ok(RkSolution {
        state,
        n_steps: grid.n_steps(),
        norm_drift,
        error_estimate: T::lit(f64::INFINITY),
    })
}

/// RK4 with step doubling from `n_start` until the Richardson estimate
/// `|psi_2N - psi_N| / 15` drops below `tolerance`.
pub fn reference_rk_converged<T: Real>(
    model: &ModelOperators<T>,
    ansatz: &ControlAnsatz<T>,
    b: &PulseCoefficients<T>,
    psi0: &StateVector<T>,
    tolerance: T,
    n_start: usize,
    max_steps: usize,
) -> Result<RkSolution<T>> {
    let duration = ansatz.duration();
    let mut n = n_start.max(1);
    let mut coarse = reference_rk(model, ansatz, b, &TimeGrid::new(duration, n)?, psi0)?;
    let mut last = T::lit(f64::INFINITY);
    while 2 * n <= max_steps {
        n *= 2;
        let mut fine = reference_rk(model, ansatz, b, &TimeGrid::new(duration, n)?, psi0)?;
        let estimate = fine.state.distance(&coarse.state) / T::lit(15.0);
        fine.error_estimate = estimate;
        if estimate <= tolerance {
            return Ok(fine);
        }
        last = estimate;
        coarse = fine;
    }
    Err(Error::NotConverged {
        what: "Runge-Kutta reference",
        last_change: last.as_f64(),
    })
}

/// Converged infidelity together with the step count that produced it.
#[derive(Debug, Clone, Copy)]
pub struct TrueInfidelity<T: Real> {
    pub value: T,
    pub n_steps: usize,
    pub last_change: T,
}

/// Upper limit on doublings in [`true_infidelity`].
pub const MAX_DOUBLINGS: usize = 10;

/// M4exact infidelity with `N` doubled from `n_start` until successive values
/// differ by less than `tolerance / 10`.
pub fn true_infidelity<T: Real>(
    model: &ModelOperators<T>,
    ansatz: &ControlAnsatz<T>,
    b: &PulseCoefficients<T>,
    psi0: &StateVector<T>,
    target: &StateVector<T>,
    tolerance: T,
    n_start: usize,
) -> Result<TrueInfidelity<T>> {
    if !(tolerance >= T::lit(1e-12)) {
        return Err(Error::InvalidParameter("tolerance must be at least 1e-12".into()));
    }
    let eval = |n: usize| -> Result<T> {
        let grid = TimeGrid::new(ansatz.duration(), n)?;
        let table = SchemeKernels::precompute(SchemeKind::M4Exact, ansatz, &grid)?.table(b)?;
        let out = propagate(model, &table, psi0, false)?;
        Ok(transfer_infidelity(target, &out.final_state))
    };
    let mut n = n_start.max(1);
    let mut prev = eval(n)?;
    let mut change = T::lit(f64::INFINITY);
    for _ in 0..MAX_DOUBLINGS {
        n *= 2;
        let next = eval(n)?;
        change = (next - prev).abs();
        if change < tolerance / T::lit(10.0) {
            return Ok(TrueInfidelity {
                value: next,
                n_steps: n,
                last_change: change,
            });
        }
        prev = next;
    }
    Err(Error::NotConverged {
        what: "true infidelity",
        last_change: change.as_f64(),
    })
}
