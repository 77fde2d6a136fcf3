//! State-transfer infidelity and its exact gradient in the pulse coefficients.
//!
//! One forward pass keeps `psi_{j-1}` and the eigendecomposition of every
//! `Omega_j`; one backward pass carries `chi_j = U_{j+1}^dag ... U_N^dag psi_t`.
//! For a direction `A` in `Omega_j`,
//!
//! ```text
//! <chi_j| dU_j[A] |psi_{j-1}> = sum_cd A_cd W_cd,   W = conj(V) M V^T,
//! M_ab = conj(chi~_a) Gamma_ab psi~_b,   x~ = V^dag x,
//! ```
//!
//! so all directions of one step share a single `O(d^3)` contraction.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::coefficients::{control_pairs, SchemeKernels, SchemeKind, TimeGrid};
use crate::controls::{BasisSet, ControlAnsatz, PulseCoefficients};
use crate::error::{Error, Result};
use crate::operators::{Operator, StateVector};
use crate::propagators::{propagate, transfer_infidelity, ModelOperators};
use crate::scalar::{Cplx, Real};

/// A state-transfer problem discretized for one scheme.
#[derive(Debug, Clone)]
pub struct ControlProblem<T: Real> {
    model: ModelOperators<T>,
    ansatz: ControlAnsatz<T>,
    psi0: StateVector<T>,
    target: StateVector<T>,
    kernels: SchemeKernels<T>,
    initialization: Duration,
}

impl<T: Real> ControlProblem<T> {
    /// Computes the basis kernels for `scheme` on `grid`.
    pub fn new(
        model: ModelOperators<T>,
        ansatz: ControlAnsatz<T>,
        grid: TimeGrid<T>,
        scheme: SchemeKind,
        psi0: StateVector<T>,
        target: StateVector<T>,
    ) -> Result<Self> {
        if scheme == SchemeKind::ReferenceRk {
            return Err(Error::InvalidParameter("the reference integrator has no gradient".into()));
        }
        if (grid.duration() - ansatz.duration()).abs() > T::structure_tol() * ansatz.duration() {
            return Err(Error::InvalidParameter("grid and ansatz durations differ".into()));
        }
        let start = Instant::now();
        let kernels = SchemeKernels::precompute(scheme, &ansatz, &grid)?;
        let elapsed = start.elapsed();
        Ok(Self::with_kernels(model, ansatz, kernels, psi0, target)?.with_initialization_time(elapsed))
    }

    /// Reuses kernels computed (or loaded) elsewhere.
    pub fn with_kernels(
        model: ModelOperators<T>,
        ansatz: ControlAnsatz<T>,
        kernels: SchemeKernels<T>,
        psi0: StateVector<T>,
        target: StateVector<T>,
    ) -> Result<Self> {
        if ansatz.n_controls() != model.n_controls() {
            return Err(Error::DimensionMismatch {
                expected: model.n_controls(),
                found: ansatz.n_controls(),
            });
        }
        if kernels.n_basis != ansatz.n_basis() {
            return Err(Error::TableMismatch(format!(
                "kernels built for {} basis functions, ansatz has {}",
                kernels.n_basis,
                ansatz.n_basis()
            )));
        }
        for state in [&psi0, &target] {
            if state.dim() != model.dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.dim(),
                    found: state.dim(),
                });
            }
            if (state.norm() - T::one()).abs() > T::structure_tol() {
                return Err(Error::InvalidParameter("states must be normalized".into()));
            }
        }
        Ok(Self {
            model,
            ansatz,
            psi0,
            target,
            kernels,
            initialization: Duration::ZERO,
        })
    }

    /// Overrides the recorded kernel set-up time (e.g. for kernels loaded from a cache).
    pub fn with_initialization_time(mut self, elapsed: Duration) -> Self {
        self.initialization = elapsed;
        self
    }

    /// Time spent building the basis kernels.
    pub fn initialization_time(&self) -> Duration {
        self.initialization
    }

    pub fn model(&self) -> &ModelOperators<T> {
        &self.model
    }

    pub fn ansatz(&self) -> &ControlAnsatz<T> {
        &self.ansatz
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.kernels.grid
    }

    pub fn scheme(&self) -> SchemeKind {
        self.kernels.scheme
    }

    pub fn kernels(&self) -> &SchemeKernels<T> {
        &self.kernels
    }

    pub fn initial_state(&self) -> &StateVector<T> {
        &self.psi0
    }

    pub fn target_state(&self) -> &StateVector<T> {
        &self.target
    }

    /// Same problem with a different target (e.g. a re-phased one).
    pub fn with_target(&self, target: StateVector<T>) -> Result<Self> {
        Self::with_kernels(
            self.model.clone(),
            self.ansatz.clone(),
            self.kernels.clone(),
            self.psi0.clone(),
            target,
        )
        .map(|p| p.with_initialization_time(self.initialization))
    }

    /// Final state for `b`.
    pub fn final_state(&self, b: &PulseCoefficients<T>) -> Result<StateVector<T>> {
        self.ansatz.check_coeffs(b)?;
        let table = self.kernels.table(b)?;
        Ok(propagate(&self.model, &table, &self.psi0, false)?.final_state)
    }

    /// `F = 1 - |<psi_t|psi(T)>|^2`
    pub fn infidelity(&self, b: &PulseCoefficients<T>) -> Result<T> {
        Ok(transfer_infidelity(&self.target, &self.final_state(b)?))
    }

    /// Infidelity and its exact gradient.
    pub fn gradient(&self, b: &PulseCoefficients<T>) -> Result<GradientResult<T>> {
        gradient(self, b)
    }
}

/// `F` and `dF/db_n^(k)`.
#[derive(Debug, Clone)]
pub struct GradientResult<T: Real> {
    pub value: T,
    pub grad: PulseCoefficients<T>,
    /// Matrix exponentials (eigendecompositions) spent, forward and backward together.
    pub exponentials: usize,
}

/// `sum_cd A_cd W_cd`
fn contract<T: Real>(a: &Operator<T>, w: &DMatrix<Cplx<T>>) -> Cplx<T> {
    a.matrix()
        .iter()
        .zip(w.iter())
        .fold(Cplx::new(T::zero(), T::zero()), |acc, (x, y)| acc + *x * *y)
}

/// Forward/backward gradient of the infidelity.
pub fn gradient<T: Real>(problem: &ControlProblem<T>, b: &PulseCoefficients<T>) -> Result<GradientResult<T>> {
    problem.ansatz.check_coeffs(b)?;
    let model = &problem.model;
    let table = problem.kernels.table(b)?;
    let n_steps = table.n_steps();
    let nk = model.n_controls();
    let nb = table.n_basis;
    let pairs = control_pairs(nk);
    let fourth = table.has_second_term();

    // forward: keep the state entering every step
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(problem.psi0.clone());
    let forward = propagate(model, &table, &problem.psi0, true)?;
    let steps = forward
        .step_generators
        .ok_or_else(|| Error::InvalidParameter("propagation did not retain generators".into()))?;
    for (_, eig) in &steps {
        let next = eig.apply_exp(states.last().expect("non-empty"), false);
        states.push(next);
    }
    let overlap = problem.target.inner(&forward.final_state);
    let value = T::one() - (overlap.re * overlap.re + overlap.im * overlap.im);
    let conj_o = overlap.conj();
    let minus_two = T::lit(-2.0);
    let d_f = |d_o: Cplx<T>| minus_two * (conj_o * d_o).re;

    let mut grad = PulseCoefficients::zeros(nk, nb);
    let g = grad.as_mut_slice();
    let mut dc1 = vec![T::zero(); nk];
    let mut dc2 = vec![T::zero(); nk];
    let mut dc3 = vec![T::zero(); pairs.len()];
    let mut chi = problem.target.clone();
    for j in (0..n_steps).rev() {
        let eig = &steps[j].1;
        let v = eig.eigenvectors();
        let chi_t = v.ad_mul(chi.amplitudes());
        let psi_t = v.ad_mul(states[j].amplitudes());
        let gamma = eig.frechet_kernel();
        let m = DMatrix::from_fn(v.nrows(), v.ncols(), |a, c| chi_t[a].conj() * gamma[(a, c)] * psi_t[c]);
        let w = v.map(|x| x.conj()) * m * v.transpose();

        for (k, hk) in model.controls().iter().enumerate() {
            dc1[k] = d_f(contract(hk, &w));
        }
        if fourth {
            for (k, dir) in model.drift_directions().iter().enumerate() {
                dc2[k] = d_f(contract(dir, &w));
            }
            for (p, dir) in model.cross_directions().iter().enumerate() {
                dc3[p] = d_f(contract(dir, &w));
            }
        }

        let e = table.dc1_row(j);
        for k in 0..nk {
            let row = &mut g[k * nb..(k + 1) * nb];
            for n in 0..nb {
                row[n] += dc1[k] * e[n];
            }
        }
        if fourth {
            let d = table.dc2_row(j).expect("fourth-order table");
            for k in 0..nk {
                let row = &mut g[k * nb..(k + 1) * nb];
                for n in 0..nb {
                    row[n] += dc2[k] * d[n];
                }
            }
            for (p, &(k, kp)) in pairs.iter().enumerate() {
                let left = table.dc3_left_row(j, p).expect("fourth-order table");
                let right = table.dc3_right_row(j, p).expect("fourth-order table");
                for n in 0..nb {
                    g[k * nb + n] += dc3[p] * left[n];
                    g[kp * nb + n] += dc3[p] * right[n];
                }
            }
        }
        chi = eig.apply_exp(&chi, true);
    }
    Ok(GradientResult {
        value,
        grad,
        exponentials: forward.exponentials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{pauli_chain_operator, Axis};

    fn two_spin_problem(scheme: SchemeKind, n_steps: usize) -> ControlProblem<f64> {
        let zz = pauli_chain_operator::<f64>(2, Axis::Z, 0)
            .unwrap()
            .mul(&pauli_chain_operator(2, Axis::Z, 1).unwrap())
            .unwrap();
        let x = pauli_chain_operator(2, Axis::X, 0)
            .unwrap()
            .add(&pauli_chain_operator(2, Axis::X, 1).unwrap())
            .unwrap();
        let y = pauli_chain_operator(2, Axis::Y, 0)
            .unwrap()
            .add(&pauli_chain_operator(2, Axis::Y, 1).unwrap())
            .unwrap();
        let model = ModelOperators::new(zz.scale_real(-1.0), vec![x, y]).unwrap();
        let ansatz = ControlAnsatz::symmetric(2, 4, 2.0, 0.2, None, 1.0).unwrap();
        let grid = TimeGrid::new(2.0, n_steps).unwrap();
        ControlProblem::new(
            model,
            ansatz,
            grid,
            scheme,
            StateVector::basis(4, 0).unwrap(),
            StateVector::basis(4, 3).unwrap(),
        )
        .unwrap()
    }

    fn sample_b() -> PulseCoefficients<f64> {
        PulseCoefficients::from_flat(2, 4, vec![0.4, -0.3, 0.7, 0.2, -0.5, 0.1, 0.3, -0.6]).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for scheme in SchemeKind::MAGNUS {
            let p = two_spin_problem(scheme, 7);
            let b = sample_b();
            let r = p.gradient(&b).unwrap();
            assert!((r.value - p.infidelity(&b).unwrap()).abs() < 1e-14);
            let eps = 1e-6;
            for i in 0..b.len() {
                let mut plus = b.clone();
                plus.as_mut_slice()[i] += eps;
                let mut minus = b.clone();
                minus.as_mut_slice()[i] -= eps;
                let fd = (p.infidelity(&plus).unwrap() - p.infidelity(&minus).unwrap()) / (2.0 * eps);
                let got = r.grad.as_slice()[i];
                assert!((got - fd).abs() <= 1e-6 * fd.abs().max(1e-4), "{scheme} {i}: {got} vs {fd}");
            }
        }
    }

    #[test]
    fn one_exponential_per_step() {
        let p = two_spin_problem(SchemeKind::M4Approx, 13);
        assert_eq!(p.gradient(&sample_b()).unwrap().exponentials, 13);
    }

    #[test]
    fn target_phase_does_not_matter() {
        let p = two_spin_problem(SchemeKind::M4Exact, 9);
        let b = sample_b();
        let r = p.gradient(&b).unwrap();
        let phased = p.target_state().scale(Cplx::from_polar(1.0, 0.83));
        let q = p.with_target(phased).unwrap();
        let s = q.gradient(&b).unwrap();
        assert!((r.value - s.value).abs() < 1e-12);
        for (x, y) in r.grad.as_slice().iter().zip(s.grad.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_and_identical_targets() {
        let p = two_spin_problem(SchemeKind::M2Exact, 4);
        let zero = PulseCoefficients::zeros(2, 4);
        // b = 0 leaves |00> an eigenstate, orthogonal to |11>
        assert!((p.infidelity(&zero).unwrap() - 1.0).abs() < 1e-14);
        let q = p.with_target(p.initial_state().clone()).unwrap();
        assert!(q.infidelity(&zero).unwrap().abs() < 1e-14);
    }

    #[test]
    fn rejects_reference_scheme_and_bad_states() {
        let p = two_spin_problem(SchemeKind::M2Exact, 4);
        let grid = TimeGrid::new(2.0, 4).unwrap();
        let r = ControlProblem::new(
            p.model().clone(),
            p.ansatz().clone(),
            grid,
            SchemeKind::ReferenceRk,
            p.initial_state().clone(),
            p.target_state().clone(),
        );
        assert!(r.is_err());
        let unnormalized = p.target_state().scale(Cplx::new(2.0, 0.0));
        assert!(p.with_target(unnormalized).is_err());
    }
}
