//! Periodic Ising chain with global x/y drives.
//!
//! ```text
//! H0  = (w/2) sum_j Z_j - J sum_j Z_j Z_{j+1} - g sum_j Z_j Z_{j+2}
//! H_c = 2 sum_{k=x,y} u_k(t) cos(w t) sum_j sigma^k_j
//! ```
//!
//! In the rotating frame (RWA) the Zeeman term and the carrier drop out and
//! the controls act through `sum_j sigma^k_j` alone. In the lab frame the
//! carrier lives in the basis functions and the factor 2 in the control
//! operators, so the same coefficients describe the same physical drive.

use serde::{Deserialize, Serialize};

use crate::coefficients::{SchemeKind, TimeGrid};
use crate::controls::ControlAnsatz;
use crate::error::{Error, Result};
use crate::grape::ControlProblem;
use crate::operators::{pauli_chain_operator, Axis, Operator, StateVector};
use crate::propagators::ModelOperators;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct SpinChainParams<T: Real> {
    pub n_spins: usize,
    /// Nearest-neighbour coupling; sets the energy unit.
    pub coupling: T,
    /// Next-nearest-neighbour coupling.
    pub next_coupling: T,
    /// Qubit frequency, identical on every site.
    pub frequency: T,
    pub rwa: bool,
}

impl<T: Real> SpinChainParams<T> {
    /// `g = J/10`, `w = 20 J`.
    pub fn new(n_spins: usize, coupling: T, rwa: bool) -> Self {
        Self {
            n_spins,
            coupling,
            next_coupling: coupling / T::lit(10.0),
            frequency: coupling * T::lit(20.0),
            rwa,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }

    fn validate(&self) -> Result<()> {
        if self.n_spins < 3 {
            return Err(Error::InvalidParameter(format!(
                "spin chain needs at least 3 sites, got {}",
                self.n_spins
            )));
        }
        if self.n_spins > 12 {
            return Err(Error::InvalidParameter(format!("{} spins is beyond dense simulation", self.n_spins)));
        }
        if !self.rwa && !(self.frequency > T::zero()) {
            return Err(Error::InvalidParameter("lab-frame model needs a positive frequency".into()));
        }
        Ok(())
    }
}

fn global<T: Real>(n: usize, axis: Axis) -> Result<Operator<T>> {
    let mut sum = Operator::zeros(1 << n);
    for site in 0..n {
        sum.axpy_real(T::one(), &pauli_chain_operator(n, axis, site)?);
    }
    Ok(sum)
}

/// Drift and the two control operators (`x` then `y`).
pub fn build_model<T: Real>(params: &SpinChainParams<T>) -> Result<ModelOperators<T>> {
    params.validate()?;
    let n = params.n_spins;
    let z: Vec<Operator<T>> = (0..n)
        .map(|s| pauli_chain_operator(n, Axis::Z, s))
        .collect::<Result<_>>()?;
    let mut h0 = Operator::zeros(params.dim());
    for j in 0..n {
        h0.axpy_real(-params.coupling, &z[j].mul(&z[(j + 1) % n])?);
        h0.axpy_real(-params.next_coupling, &z[j].mul(&z[(j + 2) % n])?);
    }
    let mut controls = vec![global(n, Axis::X)?, global(n, Axis::Y)?];
    if !params.rwa {
        h0.axpy_real(params.frequency * T::lit(0.5), &global(n, Axis::Z)?);
        for h in &mut controls {
            *h = h.scale_real(T::lit(2.0));
        }
    }
    ModelOperators::new(h0, controls)
}

/// Two-channel ansatz with bounds `|u| <= amplitude`; the carrier is added
/// in the lab frame.
pub fn chain_ansatz<T: Real>(
    params: &SpinChainParams<T>,
    n_basis: usize,
    duration: T,
    ramp: T,
    amplitude: T,
) -> Result<ControlAnsatz<T>> {
    let carrier = (!params.rwa).then_some(params.frequency);
    ControlAnsatz::symmetric(2, n_basis, duration, ramp, carrier, amplitude)
}

/// `|0...0>`
pub fn initial_state<T: Real>(params: &SpinChainParams<T>) -> Result<StateVector<T>> {
    StateVector::basis(params.dim(), 0)
}

/// `|1...1>`
pub fn target_state<T: Real>(params: &SpinChainParams<T>) -> Result<StateVector<T>> {
    StateVector::basis(params.dim(), params.dim() - 1)
}

/// `|0...0> -> |1...1>` on the chain.
pub fn transfer_problem<T: Real>(
    params: &SpinChainParams<T>,
    ansatz: ControlAnsatz<T>,
    grid: TimeGrid<T>,
    scheme: SchemeKind,
) -> Result<ControlProblem<T>> {
    if ansatz.n_controls() != 2 {
        return Err(Error::InvalidParameter("the chain has exactly two controls".into()));
    }
    if ansatz.carrier().is_some() == params.rwa {
        return Err(Error::InvalidParameter(
            "ansatz carrier must be present exactly in the lab frame".into(),
        ));
    }
    ControlProblem::new(
        build_model(params)?,
        ansatz,
        grid,
        scheme,
        initial_state(params)?,
        target_state(params)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::PulseCoefficients;
    use crate::scalar::Cplx;
    use nalgebra::DMatrix;

    fn diag(op: &Operator<f64>, i: usize) -> f64 {
        op.get(i, i).re
    }

    #[test]
    fn aligned_energy_with_periodic_wrap() {
        let p = SpinChainParams::new(3, 1.0, true);
        let m = build_model(&p).unwrap();
        let h0 = m.drift();
        assert!(h0.sub(&Operator::from_real_diagonal(&(0..8).map(|i| diag(h0, i)).collect::<Vec<_>>()))
            .unwrap()
            .max_abs()
            < 1e-15);
        assert!((diag(h0, 0) + 3.0 + 0.3).abs() < 1e-14);
        assert_eq!(diag(h0, 0), diag(h0, 7));
    }

    #[test]
    fn spectrum_matches_enumeration() {
        let (j, g) = (1.0f64, 0.1f64);
        let p = SpinChainParams::new(4, j, true);
        let h0 = build_model(&p).unwrap().drift().clone();
        for state in 0..16usize {
            let spin = |s: usize| if state >> (3 - s) & 1 == 0 { 1.0 } else { -1.0 };
            let e: f64 = (0..4)
                .map(|s| -j * spin(s) * spin((s + 1) % 4) - g * spin(s) * spin((s + 2) % 4))
                .sum();
            assert!((diag(&h0, state) - e).abs() < 1e-14, "state {state}");
        }
    }

    #[test]
    fn global_flip_degeneracy_all_sizes() {
        for n in 3..=6 {
            let p = SpinChainParams::new(n, 0.7, true);
            let h0 = build_model(&p).unwrap().drift().clone();
            assert_eq!(diag(&h0, 0), diag(&h0, (1 << n) - 1));
        }
    }

    #[test]
    fn cyclic_relabelling_leaves_model_invariant() {
        for rwa in [true, false] {
            let p = SpinChainParams::new(5, 1.0, rwa);
            let m = build_model(&p).unwrap();
            let dim = p.dim();
            // site s -> s + 1: rotate the bit string right by one
            let perm = DMatrix::from_fn(dim, dim, |r, c| {
                let rotated = ((c >> 1) | ((c & 1) << 4)) & (dim - 1);
                if r == rotated {
                    Cplx::new(1.0, 0.0)
                } else {
                    Cplx::new(0.0, 0.0)
                }
            });
            let perm = Operator::new(perm).unwrap();
            let conj = |a: &Operator<f64>| perm.mul(a).unwrap().mul(&perm.adjoint()).unwrap();
            for op in std::iter::once(m.drift()).chain(m.controls()) {
                assert!(conj(op).sub(op).unwrap().max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn lab_frame_adds_zeeman_and_doubles_controls() {
        let rwa = build_model(&SpinChainParams::new(3, 1.0, true)).unwrap();
        let lab = build_model(&SpinChainParams::new(3, 1.0, false)).unwrap();
        assert!((diag(lab.drift(), 0) - diag(rwa.drift(), 0) - 30.0).abs() < 1e-12);
        assert!(lab.controls()[0].sub(&rwa.controls()[0].scale_real(2.0)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn rejects_short_chain() {
        assert!(build_model(&SpinChainParams::new(2, 1.0, true)).is_err());
    }

    #[test]
    fn transfer_endpoints_and_selection_rule() {
        let p = SpinChainParams::<f64>::new(3, 1.0, true);
        let psi0 = initial_state(&p).unwrap();
        let target = target_state(&p).unwrap();
        assert_eq!(psi0.inner(&target), Cplx::new(0.0, 0.0));
        assert_eq!(psi0.inner(&psi0), Cplx::new(1.0, 0.0));

        let ansatz = chain_ansatz(&p, 8, 2.9, 0.29, 1.0).unwrap();
        let grid = TimeGrid::new(2.9, 20).unwrap();
        let prob = transfer_problem(&p, ansatz, grid, SchemeKind::M4Exact).unwrap();
        assert!((prob.infidelity(&PulseCoefficients::zeros(2, 8)).unwrap() - 1.0).abs() < 1e-14);
        let b = PulseCoefficients::from_flat(2, 8, (0..16).map(|i| 0.05 * ((i % 5) as f64 - 2.0)).collect())
            .unwrap();
        let f = prob.infidelity(&b).unwrap();
        assert!(f > 0.0 && f < 1.0);
    }

    #[test]
    fn carrier_must_match_frame() {
        let p = SpinChainParams::new(3, 1.0, false);
        let rwa_ansatz = chain_ansatz(&SpinChainParams::new(3, 1.0, true), 4, 1.0, 0.1, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        assert!(transfer_problem(&p, rwa_ansatz, grid, SchemeKind::M2Exact).is_err());
    }
}
