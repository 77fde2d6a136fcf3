//! Pulse parametrization `u_k(t) = sum_n b_n^(k) phi_n(t)`.
//!
//! The basis is a ramped Fourier set: `phi_n(t) = s(t) cos(pi n t / T)` for even
//! `n` and `s(t) sin(pi n t / T)` for odd `n`, `n = 1..=N_b`, optionally
//! multiplied by a carrier `cos(omega t)` when the model is simulated without
//! the rotating-wave approximation. All control channels share one basis set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A family of real basis functions on `[0, T]` shared by every control channel.
pub trait BasisSet<T: Real> {
    fn n_basis(&self) -> usize;

    fn duration(&self) -> T;

    /// Writes `phi_1(t) .. phi_N(t)` into `out`.
    fn eval_into(&self, t: T, out: &mut [T]);

    /// Points where the basis loses smoothness; quadrature splits there.
    fn breakpoints(&self) -> Vec<T> {
        Vec::new()
    }
}

/// Ramp shape `s(t)`: raised-cosine rise on `[0, tau)`, plateau, mirrored fall on `[T - tau, T]`.
pub fn shape_function<T: Real>(t: T, duration: T, ramp: T) -> Result<T> {
    if t < T::zero() || t > duration {
        return Err(Error::TimeOutOfRange {
            t: t.as_f64(),
            duration: duration.as_f64(),
        });
    }
    Ok(shape_unchecked(t, duration, ramp))
}

#[inline]
fn shape_unchecked<T: Real>(t: T, duration: T, ramp: T) -> T {
    let half = T::lit(0.5);
    let pi = T::pi();
    if t < ramp {
        half * ((pi * (t / ramp - T::one())).cos() + T::one())
    } else if t < duration - ramp {
        T::one()
    } else {
        half * ((pi * ((t - duration) / ramp + T::one())).cos() + T::one())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ControlAnsatz<T: Real> {
    n_controls: usize,
    n_basis: usize,
    duration: T,
    ramp: T,
    carrier: Option<T>,
    bounds: Vec<(T, T)>,
}

impl<T: Real> ControlAnsatz<T> {
    pub fn new(
        n_controls: usize,
        n_basis: usize,
        duration: T,
        ramp: T,
        carrier: Option<T>,
        bounds: Vec<(T, T)>,
    ) -> Result<Self> {
        if n_controls == 0 || n_basis == 0 {
            return Err(Error::InvalidParameter(
                "ansatz needs at least one control and one basis function".into(),
            ));
        }
        if !(duration > T::zero()) {
            return Err(Error::InvalidParameter("duration must be positive".into()));
        }
        if !(ramp > T::zero() && ramp <= duration * T::lit(0.5)) {
            return Err(Error::InvalidParameter(format!(
                "ramp time {} must lie in (0, T/2]",
                ramp.as_f64()
            )));
        }
        if bounds.len() != n_controls {
            return Err(Error::DimensionMismatch {
                expected: n_controls,
                found: bounds.len(),
            });
        }
        if let Some((k, _)) = bounds.iter().enumerate().find(|(_, (lo, hi))| !(lo < hi)) {
            return Err(Error::InvalidParameter(format!(
                "control {k}: lower bound must be below upper bound"
            )));
        }
        Ok(Self {
            n_controls,
            n_basis,
            duration,
            ramp,
            carrier,
            bounds,
        })
    }

    /// Symmetric bounds `|u_k| <= amplitude` on every channel.
    pub fn symmetric(
        n_controls: usize,
        n_basis: usize,
        duration: T,
        ramp: T,
        carrier: Option<T>,
        amplitude: T,
    ) -> Result<Self> {
        Self::new(
            n_controls,
            n_basis,
            duration,
            ramp,
            carrier,
            vec![(-amplitude, amplitude); n_controls],
        )
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn n_parameters(&self) -> usize {
        self.n_controls * self.n_basis
    }

    pub fn ramp(&self) -> T {
        self.ramp
    }

    pub fn carrier(&self) -> Option<T> {
        self.carrier
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    fn check_time(&self, t: T) -> Result<()> {
        if t < T::zero() || t > self.duration {
            return Err(Error::TimeOutOfRange {
                t: t.as_f64(),
                duration: self.duration.as_f64(),
            });
        }
        Ok(())
    }

    fn check_control(&self, k: usize) -> Result<()> {
        if k >= self.n_controls {
            return Err(Error::IndexOutOfRange {
                what: "control",
                index: k,
                len: self.n_controls,
            });
        }
        Ok(())
    }

    /// `phi_n^(k)(t)` with `n` counted from 1.
    pub fn basis_value(&self, k: usize, n: usize, t: T) -> Result<T> {
        self.check_control(k)?;
        if n == 0 || n > self.n_basis {
            return Err(Error::IndexOutOfRange {
                what: "basis",
                index: n,
                len: self.n_basis,
            });
        }
        self.check_time(t)?;
        Ok(self.basis_unchecked(n, t))
    }

    #[inline]
    fn basis_unchecked(&self, n: usize, t: T) -> T {
        let arg = T::pi() * T::lit(n as f64) * t / self.duration;
        let trig = if n % 2 == 0 { arg.cos() } else { arg.sin() };
        let mut v = shape_unchecked(t, self.duration, self.ramp) * trig;
        if let Some(w) = self.carrier {
            v *= (w * t).cos();
        }
        v
    }

    pub fn pulse_value(&self, coeffs: &PulseCoefficients<T>, k: usize, t: T) -> Result<T> {
        self.check_coeffs(coeffs)?;
        self.check_control(k)?;
        self.check_time(t)?;
        let mut phi = vec![T::zero(); self.n_basis];
        self.eval_into(t, &mut phi);
        Ok(coeffs.row(k).iter().zip(&phi).fold(T::zero(), |acc, (&b, &p)| acc + b * p))
    }

    /// All control amplitudes at `t` given pre-evaluated basis values.
    pub(crate) fn pulses_from_basis(&self, coeffs: &PulseCoefficients<T>, phi: &[T], out: &mut [T]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = coeffs.row(k).iter().zip(phi).fold(T::zero(), |acc, (&b, &p)| acc + b * p);
        }
    }

    pub fn check_coeffs(&self, coeffs: &PulseCoefficients<T>) -> Result<()> {
        if coeffs.n_controls() != self.n_controls || coeffs.n_basis() != self.n_basis {
            return Err(Error::DimensionMismatch {
                expected: self.n_parameters(),
                found: coeffs.len(),
            });
        }
        Ok(())
    }

    /// `n_samples` uniformly spaced points on `[0, T]`, endpoints included.
    pub fn uniform_grid(&self, n_samples: usize) -> Vec<T> {
        let n = n_samples.max(2);
        let step = self.duration / T::lit((n - 1) as f64);
        (0..n)
            .map(|i| if i == n - 1 { self.duration } else { step * T::lit(i as f64) })
            .collect()
    }

    /// Bound residuals on a sample grid together with their gradient rows.
    ///
    /// Rows are ordered `(sample, control, [upper, lower])`; upper rows hold
    /// `u_max - u(t)`, lower rows `u(t) - u_min`.
    pub fn constraint_residuals(
        &self,
        coeffs: &PulseCoefficients<T>,
        sample_grid: &[T],
    ) -> Result<ConstraintResiduals<T>> {
        self.check_coeffs(coeffs)?;
        for &t in sample_grid {
            self.check_time(t)?;
        }
        let nb = self.n_basis;
        let np = self.n_parameters();
        let rows = sample_grid.len() * self.n_controls * 2;
        let mut values = Vec::with_capacity(rows);
        let mut jacobian = vec![T::zero(); rows * np];
        let mut phi = vec![T::zero(); nb];
        let mut row = 0;
        for &t in sample_grid {
            self.eval_into(t, &mut phi);
            for k in 0..self.n_controls {
                let u = coeffs.row(k).iter().zip(&phi).fold(T::zero(), |acc, (&b, &p)| acc + b * p);
                let (lo, hi) = self.bounds[k];
                values.push(hi - u);
                values.push(u - lo);
                for (n, &p) in phi.iter().enumerate() {
                    jacobian[row * np + k * nb + n] = -p;
                    jacobian[(row + 1) * np + k * nb + n] = p;
                }
                row += 2;
            }
        }
        Ok(ConstraintResiduals {
            values,
            jacobian,
            n_parameters: np,
        })
    }
}

impl<T: Real> BasisSet<T> for ControlAnsatz<T> {
    fn n_basis(&self) -> usize {
        self.n_basis
    }

    fn duration(&self) -> T {
        self.duration
    }

    fn eval_into(&self, t: T, out: &mut [T]) {
        let s = shape_unchecked(t, self.duration, self.ramp);
        let envelope = match self.carrier {
            Some(w) => s * (w * t).cos(),
            None => s,
        };
        let base = T::pi() * t / self.duration;
        for (i, o) in out.iter_mut().enumerate().take(self.n_basis) {
            let n = i + 1;
            let arg = base * T::lit(n as f64);
            *o = envelope * if n % 2 == 0 { arg.cos() } else { arg.sin() };
        }
    }

    fn breakpoints(&self) -> Vec<T> {
        vec![self.ramp, self.duration - self.ramp]
    }
}

/// Coefficients `b_n^(k)`, row `k` holding `b_1 .. b_{N_b}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PulseCoefficients<T: Real> {
    n_controls: usize,
    n_basis: usize,
    values: Vec<T>,
}

impl<T: Real> PulseCoefficients<T> {
    pub fn zeros(n_controls: usize, n_basis: usize) -> Self {
        Self {
            n_controls,
            n_basis,
            values: vec![T::zero(); n_controls * n_basis],
        }
    }

    pub fn from_flat(n_controls: usize, n_basis: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n_controls * n_basis {
            return Err(Error::DimensionMismatch {
                expected: n_controls * n_basis,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("pulse coefficients must be finite".into()));
        }
        Ok(Self {
            n_controls,
            n_basis,
            values,
        })
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[T] {
        &self.values[k * self.n_basis..(k + 1) * self.n_basis]
    }

    /// Zero-based basis index.
    #[inline]
    pub fn get(&self, k: usize, i: usize) -> T {
        self.values[k * self.n_basis + i]
    }

    pub fn set(&mut self, k: usize, i: usize, v: T) {
        self.values[k * self.n_basis + i] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }
}

/// Output of [`ControlAnsatz::constraint_residuals`]; feasible iff every value is `>= 0`.
#[derive(Debug, Clone)]
pub struct ConstraintResiduals<T: Real> {
    pub values: Vec<T>,
    /// Row-major, one row per value, one column per flattened coefficient.
    pub jacobian: Vec<T>,
    pub n_parameters: usize,
}

impl<T: Real> ConstraintResiduals<T> {
    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::max_value().unwrap_or(T::one()), |acc, &v| acc.min(v))
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.jacobian[r * self.n_parameters..(r + 1) * self.n_parameters]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const T_TOTAL: f64 = 2.9;

    fn ansatz(carrier: Option<f64>) -> ControlAnsatz<f64> {
        ControlAnsatz::symmetric(2, 8, T_TOTAL, 0.1 * T_TOTAL, carrier, 1.0).unwrap()
    }

    fn random_coeffs(rng: &mut ChaCha8Rng) -> PulseCoefficients<f64> {
        let v = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        PulseCoefficients::from_flat(2, 8, v).unwrap()
    }

    #[test]
    fn shape_endpoints_and_plateau() {
        let tau = 0.1 * T_TOTAL;
        assert_eq!(shape_function(0.0, T_TOTAL, tau).unwrap(), 0.0);
        assert_eq!(shape_function(T_TOTAL / 2.0, T_TOTAL, tau).unwrap(), 1.0);
        assert!((shape_function(tau / 2.0, T_TOTAL, tau).unwrap() - 0.5).abs() < 1e-15);
        assert!(shape_function(T_TOTAL, T_TOTAL, tau).unwrap().abs() < 1e-15);
        assert!(shape_function(-0.1, T_TOTAL, tau).is_err());
        assert!(shape_function(T_TOTAL + 0.1, T_TOTAL, tau).is_err());
    }

    #[test]
    fn shape_is_continuous_at_breakpoints() {
        let tau = 0.1 * T_TOTAL;
        for b in [tau, T_TOTAL - tau] {
            let l = shape_function(b - 1e-9, T_TOTAL, tau).unwrap();
            let r = shape_function(b + 1e-9, T_TOTAL, tau).unwrap();
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn ansatz_rejects_bad_parameters() {
        assert!(ControlAnsatz::symmetric(2, 8, 1.0, 0.6, None, 1.0).is_err());
        assert!(ControlAnsatz::symmetric(2, 8, 1.0, 0.0, None, 1.0).is_err());
        assert!(ControlAnsatz::new(1, 8, 1.0, 0.1, None, vec![(1.0, -1.0)]).is_err());
        assert!(ControlAnsatz::new(2, 8, 1.0, 0.1, None, vec![(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn basis_values() {
        let a = ansatz(None);
        assert_eq!(a.basis_value(0, 2, 0.0).unwrap(), 0.0);
        assert!((a.basis_value(1, 1, T_TOTAL / 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(a.basis_value(0, 0, 0.1).is_err());
        assert!(a.basis_value(0, 9, 0.1).is_err());
        assert!(a.basis_value(2, 1, 0.1).is_err());
    }

    #[test]
    fn carrier_basis_matches_direct_formula() {
        let w = 20.0;
        let a = ansatz(Some(w));
        let t = T_TOTAL / 2.0;
        let direct = 1.0 * (PI * 2.0 * t / T_TOTAL).cos() * (w * t).cos();
        assert!((a.basis_value(0, 2, t).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn carrier_consistency() {
        let rwa = ansatz(None);
        let lab = ansatz(Some(20.0));
        for i in 0..=50 {
            let t = T_TOTAL * i as f64 / 50.0;
            for n in 1..=8 {
                let lhs = rwa.basis_value(0, n, t).unwrap() * (20.0 * t).cos();
                assert!((lhs - lab.basis_value(0, n, t).unwrap()).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn eval_into_agrees_with_basis_value() {
        let a = ansatz(Some(3.0));
        let mut out = vec![0.0; 8];
        a.eval_into(1.234, &mut out);
        for n in 1..=8 {
            assert_eq!(out[n - 1], a.basis_value(0, n, 1.234).unwrap());
        }
    }

    #[test]
    fn zero_pulse_and_single_coefficient() {
        let a = ansatz(None);
        let zero = PulseCoefficients::zeros(2, 8);
        for i in 0..=10 {
            assert_eq!(a.pulse_value(&zero, 0, T_TOTAL * i as f64 / 10.0).unwrap(), 0.0);
        }
        let mut single = PulseCoefficients::zeros(2, 8);
        single.set(1, 4, 1.0);
        let t = 0.77;
        assert_eq!(a.pulse_value(&single, 1, t).unwrap(), a.basis_value(1, 5, t).unwrap());
    }

    #[test]
    fn pulse_matches_naive_summation() {
        let a = ansatz(None);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_coeffs(&mut rng);
        for i in 0..=20 {
            let t = T_TOTAL * i as f64 / 20.0;
            for k in 0..2 {
                let tau = 0.1 * T_TOTAL;
                let s = if t < tau {
                    0.5 * ((PI * (t / tau - 1.0)).cos() + 1.0)
                } else if t < T_TOTAL - tau {
                    1.0
                } else {
                    0.5 * ((PI * ((t - T_TOTAL) / tau + 1.0)).cos() + 1.0)
                };
                let mut naive = 0.0;
                for n in 1..=8 {
                    let arg = PI * n as f64 * t / T_TOTAL;
                    let trig = if n % 2 == 0 { arg.cos() } else { arg.sin() };
                    naive += b.get(k, n - 1) * s * trig;
                }
                assert!((a.pulse_value(&b, k, t).unwrap() - naive).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn pulse_vanishes_at_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for carrier in [None, Some(20.0)] {
            let a = ansatz(carrier);
            for _ in 0..10 {
                let b = random_coeffs(&mut rng);
                for k in 0..2 {
                    assert_eq!(a.pulse_value(&b, k, 0.0).unwrap(), 0.0);
                    assert!(a.pulse_value(&b, k, T_TOTAL).unwrap().abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn constraint_residuals_zero_pulse() {
        let a = ansatz(None);
        let r = a.constraint_residuals(&PulseCoefficients::zeros(2, 8), &a.uniform_grid(11)).unwrap();
        assert_eq!(r.values.len(), 11 * 2 * 2);
        assert!(r.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constraint_residual_touching_bound() {
        let a = ansatz(None);
        let mut b = PulseCoefficients::zeros(2, 8);
        // sin(pi t / T) peaks at T/2 with value 1 on the plateau
        b.set(0, 0, 1.0);
        let r = a.constraint_residuals(&b, &[T_TOTAL / 2.0]).unwrap();
        assert!(r.values[0].abs() < 1e-15);
        assert!((r.values[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constraint_gradient_matches_finite_differences() {
        let a = ansatz(None);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_coeffs(&mut rng);
        let grid = a.uniform_grid(17);
        let base = a.constraint_residuals(&b, &grid).unwrap();
        let eps = 1e-6;
        for p in 0..16 {
            let mut plus = b.clone();
            plus.as_mut_slice()[p] += eps;
            let mut minus = b.clone();
            minus.as_mut_slice()[p] -= eps;
            let rp = a.constraint_residuals(&plus, &grid).unwrap();
            let rm = a.constraint_residuals(&minus, &grid).unwrap();
            for row in 0..base.values.len() {
                let fd = (rp.values[row] - rm.values[row]) / (2.0 * eps);
                assert!((fd - base.row(row)[p]).abs() <= 1e-8, "row {row} param {p}");
            }
        }
    }

    #[test]
    fn time_outside_interval_rejected() {
        let a = ansatz(None);
        assert!(a.pulse_value(&PulseCoefficients::zeros(2, 8), 0, 3.0).is_err());
        assert!(a.constraint_residuals(&PulseCoefficients::zeros(2, 8), &[-0.1]).is_err());
    }

    #[test]
    fn coefficients_reject_wrong_shape() {
        assert!(PulseCoefficients::<f64>::from_flat(2, 8, vec![0.0; 15]).is_err());
        assert!(PulseCoefficients::<f64>::from_flat(1, 1, vec![f64::NAN]).is_err());
        let a = ansatz(None);
        assert!(a.pulse_value(&PulseCoefficients::zeros(1, 8), 0, 0.1).is_err());
    }
}
