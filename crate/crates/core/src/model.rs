//! Physical parameters, truncated Fock-basis operators and coherent states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thresholds::TAIL_TOL;
use crate::{CMatrix, CVector, C64};

/// Physical parameters of the damped oscillator. Defaults to ħ = m = ω = k_B = 1,
/// γ = 0.2 and T = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub mass: f64,
    pub omega: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub hbar: f64,
    pub k_b: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            omega: 1.0,
            gamma: 0.2,
            temperature: 0.0,
            hbar: 1.0,
            k_b: 1.0,
        }
    }
}

/// Quantities derived from [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derived {
    pub sigma_q: f64,
    pub sigma_p: f64,
    pub n_bar: f64,
    /// Localization time `tanh(ħω/2k_BT)/γ`; infinite when γ = 0.
    pub t_l: f64,
}

impl ModelParams {
    /// Parameters with the temperature chosen so that the thermal occupation
    /// equals `n_bar` (other fields default).
    pub fn with_n_bar(gamma: f64, n_bar: f64) -> Self {
        let mut p = Self {
            gamma,
            ..Self::default()
        };
        p.set_n_bar(n_bar);
        p
    }

    /// Set the temperature that produces mean occupation `n_bar`.
    pub fn set_n_bar(&mut self, n_bar: f64) {
        self.temperature = if n_bar <= 0.0 {
            0.0
        } else {
            self.hbar * self.omega / (self.k_b * (1.0 / n_bar).ln_1p())
        };
    }

    /// Set the temperature from the ratio ħω/(k_B T).
    pub fn set_beta_hbar_omega(&mut self, x: f64) {
        self.temperature = self.hbar * self.omega / (self.k_b * x);
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("omega", self.omega),
            ("hbar", self.hbar),
            ("k_b", self.k_b),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Parameter(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if !(self.temperature >= 0.0) || self.temperature.is_nan() {
            return Err(Error::Parameter(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// ħω/(k_B T); infinite at T = 0.
    pub fn beta_hbar_omega(&self) -> f64 {
        if self.temperature == 0.0 {
            f64::INFINITY
        } else {
            self.hbar * self.omega / (self.k_b * self.temperature)
        }
    }

    pub fn sigma_q(&self) -> f64 {
        (self.hbar / (2.0 * self.mass * self.omega)).sqrt()
    }

    pub fn sigma_p(&self) -> f64 {
        (self.hbar * self.mass * self.omega / 2.0).sqrt()
    }

    /// Bose occupation; exactly zero at T = 0.
    pub fn n_bar(&self) -> f64 {
        if self.temperature == 0.0 {
            return 0.0;
        }
        1.0 / self.beta_hbar_omega().exp_m1()
    }

    pub fn localization_time(&self) -> f64 {
        if self.gamma == 0.0 {
            return f64::INFINITY;
        }
        (0.5 * self.beta_hbar_omega()).tanh() / self.gamma
    }

    /// The minimum localization rate 2γ(n̄ + ½).
    pub fn localization_rate_bound(&self) -> f64 {
        2.0 * self.gamma * (self.n_bar() + 0.5)
    }

    pub fn derive(&self) -> Result<Derived> {
        self.validate()?;
        Ok(Derived {
            sigma_q: self.sigma_q(),
            sigma_p: self.sigma_p(),
            n_bar: self.n_bar(),
            t_l: self.localization_time(),
        })
    }

    /// Phase-space coordinate α = (σ_p q + i σ_q p)/ħ.
    pub fn alpha_from_qp(&self, q: f64, p: f64) -> C64 {
        C64::new(self.sigma_p() * q, self.sigma_q() * p) / self.hbar
    }

    /// Inverse of [`alpha_from_qp`](Self::alpha_from_qp).
    pub fn qp_from_alpha(&self, alpha: C64) -> (f64, f64) {
        (
            2.0 * self.sigma_q() * alpha.re,
            2.0 * self.sigma_p() * alpha.im,
        )
    }
}

/// Dense operators of the oscillator in a Fock basis truncated to `dim` levels.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub params: ModelParams,
    pub dim: usize,
    pub a: CMatrix,
    pub a_dag: CMatrix,
    pub h: CMatrix,
    pub l1: CMatrix,
    pub l2: CMatrix,
    pub q: CMatrix,
    pub p: CMatrix,
    pub n_op: CMatrix,
    /// sqrt((n̄+1)γ), the coefficient of `a` in L1.
    pub l1_coeff: f64,
    /// sqrt(n̄γ), the coefficient of `a†` in L2.
    pub l2_coeff: f64,
    sqrt_n: Vec<f64>,
}

impl OperatorSet {
    pub fn new(params: ModelParams, dim: usize) -> Result<Self> {
        params.validate()?;
        if dim < 2 {
            return Err(Error::Dimension(format!(
                "Fock truncation needs at least 2 levels, got {dim}"
            )));
        }
        let n_bar = params.n_bar();
        let l1_coeff = ((n_bar + 1.0) * params.gamma).sqrt();
        let l2_coeff = (n_bar * params.gamma).sqrt();
        let sqrt_n: Vec<f64> = (0..dim).map(|n| (n as f64).sqrt()).collect();

        let mut a = CMatrix::zeros(dim, dim);
        for n in 1..dim {
            a[(n - 1, n)] = C64::new(sqrt_n[n], 0.0);
        }
        let a_dag = a.adjoint();
        let n_op = &a_dag * &a;
        let hw = params.hbar * params.omega;
        let h = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            dim,
            (0..dim).map(|n| C64::new(hw * (n as f64 + 0.5), 0.0)),
        ));
        let l1 = &a * C64::new(l1_coeff, 0.0);
        let l2 = &a_dag * C64::new(l2_coeff, 0.0);
        let q = (&a + &a_dag) * C64::new(params.sigma_q(), 0.0);
        let p = (&a - &a_dag) * C64::new(0.0, -params.sigma_p());

        Ok(Self {
            params,
            dim,
            a,
            a_dag,
            h,
            l1,
            l2,
            q,
            p,
            n_op,
            l1_coeff,
            l2_coeff,
            sqrt_n,
        })
    }

    pub fn n_bar(&self) -> f64 {
        self.params.n_bar()
    }

    /// `a·ψ` using the bidiagonal structure.
    pub fn apply_a(&self, psi: &CVector) -> CVector {
        let d = self.dim;
        CVector::from_fn(d, |n, _| {
            if n + 1 < d {
                psi[n + 1] * self.sqrt_n[n + 1]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `a†·ψ` using the bidiagonal structure; the top level is dropped.
    pub fn apply_a_dag(&self, psi: &CVector) -> CVector {
        CVector::from_fn(self.dim, |n, _| {
            if n > 0 {
                psi[n - 1] * self.sqrt_n[n]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Coherent state |α⟩ normalized over the truncated basis.
    pub fn coherent_state(&self, alpha: C64) -> Result<StateVector> {
        coherent_state(self.dim, alpha)
    }
}

/// Amplitudes ⟨n|α⟩ = e^{-|α|²/2} αⁿ/√n! for n < dim, without renormalization.
pub fn coherent_amplitudes(dim: usize, alpha: C64) -> CVector {
    let mut c = CVector::zeros(dim);
    let mut cur = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    c[0] = cur;
    for n in 1..dim {
        cur = cur * alpha / (n as f64).sqrt();
        c[n] = cur;
    }
    c
}

/// Coherent state normalized over `dim` levels. Requires
/// `|α|² + 5|α| + 5 ≤ dim` so the Poisson tail beyond the basis is negligible.
pub fn coherent_state(dim: usize, alpha: C64) -> Result<StateVector> {
    let amps = coherent_amplitudes(dim, alpha);
    let lost = 1.0 - amps.norm_squared();
    let mut state = StateVector::from_amplitudes(amps)?;
    let r = alpha.norm();
    if r * r + 5.0 * r + 5.0 > dim as f64 {
        return Err(Error::Truncation {
            tail_mass: lost.max(state.tail_mass()),
            tail_tol: TAIL_TOL,
            time: None,
        });
    }
    state.normalize();
    Ok(state)
}

/// Fock state |n⟩.
pub fn fock_state(dim: usize, n: usize) -> Result<StateVector> {
    if n >= dim {
        return Err(Error::Dimension(format!(
            "Fock level {n} outside a basis of {dim} levels"
        )));
    }
    let mut c = CVector::zeros(dim);
    c[n] = C64::new(1.0, 0.0);
    StateVector::from_amplitudes(c)
}

/// Even cat state ∝ |α⟩ + |−α⟩.
pub fn cat_state(dim: usize, alpha: C64) -> Result<StateVector> {
    let plus = coherent_state(dim, alpha)?;
    let minus = coherent_state(dim, -alpha)?;
    StateVector::from_amplitudes(plus.amplitudes() + minus.amplitudes())
}

/// Normalized pure state over a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(CVector);

impl StateVector {
    /// Wraps and normalizes the amplitudes. Fails on a zero vector.
    pub fn from_amplitudes(amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Parameter(
                "state amplitudes must have finite non-zero norm".into(),
            ));
        }
        Ok(Self(amps / C64::new(norm, 0.0)))
    }

    /// Wraps amplitudes without normalizing them.
    pub fn from_raw(amps: CVector) -> Self {
        Self(amps)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    pub fn into_amplitudes(self) -> CVector {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn normalize(&mut self) {
        let n = self.0.norm();
        self.0 /= C64::new(n, 0.0);
    }

    /// Probability mass in the top ⌈dim/10⌉ levels.
    pub fn tail_mass(&self) -> f64 {
        let d = self.dim();
        let top = d.div_ceil(10);
        self.0.iter().skip(d - top).map(|c| c.norm_sqr()).sum::<f64>() / self.norm_sqr()
    }

    pub fn check_health(&self, tail_tol: f64) -> Result<()> {
        let tail_mass = self.tail_mass();
        if tail_mass >= tail_tol || !tail_mass.is_finite() {
            return Err(Error::Truncation {
                tail_mass,
                tail_tol,
                time: None,
            });
        }
        Ok(())
    }

    /// ⟨ψ|O|ψ⟩ for a dense operator.
    pub fn expectation(&self, op: &CMatrix) -> C64 {
        self.0.dotc(&(op * &self.0))
    }

    /// |⟨n|ψ⟩|² for every level.
    pub fn fock_probabilities(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn projector(&self) -> CMatrix {
        &self.0 * self.0.adjoint()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn n_bar_equals_one_at_ln2() {
        let mut p = ModelParams::default();
        p.set_beta_hbar_omega(2f64.ln());
        assert_abs_diff_eq!(p.n_bar(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_temperature_limits() {
        let p = ModelParams {
            gamma: 0.1,
            ..Default::default()
        };
        let d = p.derive().unwrap();
        assert_eq!(d.n_bar, 0.0);
        assert_abs_diff_eq!(d.t_l, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn unit_dispersions() {
        let d = ModelParams::default().derive().unwrap();
        assert_abs_diff_eq!(d.sigma_q, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.sigma_p, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.sigma_q * d.sigma_p, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn invalid_parameters_rejected() {
        for bad in [
            ModelParams {
                mass: 0.0,
                ..Default::default()
            },
            ModelParams {
                omega: -1.0,
                ..Default::default()
            },
            ModelParams {
                hbar: 0.0,
                ..Default::default()
            },
            ModelParams {
                k_b: 0.0,
                ..Default::default()
            },
            ModelParams {
                temperature: -0.1,
                ..Default::default()
            },
            ModelParams {
                gamma: -0.1,
                ..Default::default()
            },
        ] {
            assert!(matches!(bad.derive(), Err(Error::Parameter(_))), "{bad:?}");
        }
    }

    #[test]
    fn with_n_bar_roundtrips() {
        for nb in [0.0, 0.01, 0.5, 1.0, 5.0, 9.5] {
            let p = ModelParams::with_n_bar(0.2, nb);
            assert_abs_diff_eq!(p.n_bar(), nb, epsilon = 1e-12 * (1.0 + nb));
        }
    }

    #[test]
    fn n_bar_monotone_and_classical_limit() {
        let mut prev = -1.0;
        for i in 1..200 {
            let p = ModelParams {
                temperature: i as f64 * 0.05,
                ..Default::default()
            };
            assert!(p.n_bar() > prev);
            prev = p.n_bar();
        }
        let mut p = ModelParams::default();
        p.set_beta_hbar_omega(0.01);
        let classical = 1.0 / 0.01;
        assert!((p.n_bar() - classical).abs() / classical < 0.01);
    }

    #[test]
    fn two_level_ladder() {
        let ops = OperatorSet::new(ModelParams::default(), 2).unwrap();
        assert_eq!(ops.a[(0, 1)], c(1.0, 0.0));
        assert_eq!(ops.a[(0, 0)], c(0.0, 0.0));
        assert_eq!(ops.a[(1, 0)], c(0.0, 0.0));
        assert_eq!(ops.a[(1, 1)], c(0.0, 0.0));
    }

    #[test]
    fn dimension_error_below_two() {
        assert!(matches!(
            OperatorSet::new(ModelParams::default(), 1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn hamiltonian_diagonal() {
        let ops = OperatorSet::new(ModelParams::default(), 3).unwrap();
        for (n, e) in [0.5, 1.5, 2.5].iter().enumerate() {
            assert_abs_diff_eq!(ops.h[(n, n)].re, *e, epsilon = 1e-15);
        }
        assert_eq!(ops.h[(0, 1)], c(0.0, 0.0));
    }

    #[test]
    fn lindblad_operator_coefficients() {
        let p = ModelParams::with_n_bar(0.2, 1.0);
        let ops = OperatorSet::new(p, 3).unwrap();
        let l1 = &ops.a * c(0.4f64.sqrt(), 0.0);
        let l2 = &ops.a_dag * c(0.2f64.sqrt(), 0.0);
        assert!((&ops.l1 - l1).norm() < 1e-12);
        assert!((&ops.l2 - l2).norm() < 1e-12);
    }

    #[test]
    fn zero_temperature_removes_l2() {
        let ops = OperatorSet::new(ModelParams::default(), 5).unwrap();
        assert_eq!(ops.l2.norm(), 0.0);
    }

    #[test]
    fn operator_invariants() {
        let ops = OperatorSet::new(ModelParams::with_n_bar(0.3, 0.7), 12).unwrap();
        for n in 1..12 {
            assert_abs_diff_eq!(ops.a[(n - 1, n)].re, (n as f64).sqrt(), epsilon = 1e-15);
        }
        assert_eq!(ops.a_dag, ops.a.adjoint());
        for m in [&ops.q, &ops.p, &ops.h] {
            assert!(crate::max_abs(&(m - m.adjoint())) < 1e-14);
        }
        for n in 0..12 {
            assert_abs_diff_eq!(ops.n_op[(n, n)].re, n as f64, epsilon = 1e-14);
        }
        let comm = &ops.q * &ops.p - &ops.p * &ops.q;
        let hbar = ops.params.hbar;
        for i in 0..12 {
            for j in 0..12 {
                if i == 11 && j == 11 {
                    continue;
                }
                let expect = if i == j { c(0.0, hbar) } else { c(0.0, 0.0) };
                assert!((comm[(i, j)] - expect).norm() < 1e-12, "({i},{j})");
            }
        }
        assert!((comm[(11, 11)] - c(0.0, hbar)).norm() > 1.0);
    }

    #[test]
    fn structured_ladder_matches_dense() {
        let ops = OperatorSet::new(ModelParams::default(), 8).unwrap();
        let psi = CVector::from_fn(8, |n, _| c(n as f64 * 0.3 - 1.0, 0.1 * n as f64));
        assert!((ops.apply_a(&psi) - &ops.a * &psi).norm() < 1e-14);
        assert!((ops.apply_a_dag(&psi) - &ops.a_dag * &psi).norm() < 1e-14);
    }

    #[test]
    fn coherent_ground_state() {
        let s = coherent_state(10, c(0.0, 0.0)).unwrap();
        assert_eq!(s.amplitudes()[0], c(1.0, 0.0));
        assert!(s.amplitudes().iter().skip(1).all(|x| x.norm() == 0.0));
    }

    #[test]
    fn coherent_mean_occupation_and_position() {
        let ops = OperatorSet::new(ModelParams::default(), 30).unwrap();
        let s = ops.coherent_state(c(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(s.expectation(&ops.n_op).re, 1.0, epsilon = 1e-10);
        let sq = ops.params.sigma_q();
        assert_abs_diff_eq!(s.expectation(&ops.q).re, 2.0 * sq, epsilon = 1e-10);
        assert!(s.norm_sqr() - 1.0 < 1e-12);
    }

    #[test]
    fn coherent_eigenstate_residual_small() {
        let ops = OperatorSet::new(ModelParams::default(), 40).unwrap();
        let alpha = c(1.5, -0.7);
        let s = ops.coherent_state(alpha).unwrap();
        let resid = ops.apply_a(s.amplitudes()) - s.amplitudes() * alpha;
        assert!(resid.norm() < 10.0 * TAIL_TOL);
    }

    #[test]
    fn coherent_headroom_enforced() {
        let err = coherent_state(20, c(4.0, 0.0)).unwrap_err();
        match err {
            Error::Truncation { tail_mass, .. } => assert!(tail_mass > 0.0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn tail_mass_detects_top_levels() {
        let s = fock_state(20, 19).unwrap();
        assert!(s.check_health(1e-6).is_err());
        let s = fock_state(20, 3).unwrap();
        assert!(s.check_health(1e-6).is_ok());
    }

    #[test]
    fn alpha_qp_roundtrip() {
        let p = ModelParams {
            mass: 2.0,
            omega: 0.5,
            hbar: 0.3,
            ..Default::default()
        };
        let a = c(0.4, -1.2);
        let (q, pp) = p.qp_from_alpha(a);
        assert!((p.alpha_from_qp(q, pp) - a).norm() < 1e-14);
    }
}
