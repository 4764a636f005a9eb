//! Deterministic references for the stochastic integrator.
//!
//! * Lindblad master equation with a fixed-step classical Runge–Kutta stepper.
//! * The thermal state and its stationarity residual.
//! * The Ornstein–Uhlenbeck moment flow of the Glauber–Sudarshan P-function,
//!   which is the exact solution of the linear Fokker–Planck equation for
//!   Gaussian data.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::ensemble::DensityMatrix;
use crate::error::{Error, Result};
use crate::model::{ModelParams, OperatorSet};
use crate::thresholds::DT_ORACLE_GUARD;
use crate::{CMatrix, C64};

/// Tail mass beyond the truncation allowed for [`thermal_state`].
pub const THERMAL_TAIL_TOL: f64 = 1e-10;

/// Trace drift per step that counts as a step-size failure.
pub const TRACE_DRIFT_TOL: f64 = 1e-8;

/// Lindblad generator of the damped oscillator, applied through the ladder
/// structure in O(N²) per call.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    /// Diagonal of K = −iH/ħ − ½(L1†L1 + L2†L2).
    k: Vec<C64>,
    /// sqrt(m+1)·sqrt(n+1) products are formed on the fly from these.
    sqrt_n: Vec<f64>,
    c1_sq: f64,
    c2_sq: f64,
}

impl Generator {
    pub fn new(ops: &OperatorSet) -> Self {
        let d = ops.dim;
        let c1_sq = ops.l1_coeff * ops.l1_coeff;
        let c2_sq = ops.l2_coeff * ops.l2_coeff;
        let k = (0..d)
            .map(|n| {
                let nf = n as f64;
                let aad = if n + 1 == d { 0.0 } else { nf + 1.0 };
                C64::new(
                    -0.5 * (c1_sq * nf + c2_sq * aad),
                    -ops.params.omega * (nf + 0.5),
                )
            })
            .collect();
        Self {
            dim: d,
            k,
            sqrt_n: (0..d).map(|n| (n as f64).sqrt()).collect(),
            c1_sq,
            c2_sq,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// dX/dt for any operator X (Hermitian or not).
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let d = self.dim;
        CMatrix::from_fn(d, d, |m, n| {
            let mut v = x[(m, n)] * (self.k[m] + self.k[n].conj());
            if m + 1 < d && n + 1 < d {
                v += x[(m + 1, n + 1)] * (self.c1_sq * self.sqrt_n[m + 1] * self.sqrt_n[n + 1]);
            }
            if m > 0 && n > 0 {
                v += x[(m - 1, n - 1)] * (self.c2_sq * self.sqrt_n[m] * self.sqrt_n[n]);
            }
            v
        })
    }

    /// One classical fourth-order Runge–Kutta step.
    pub fn rk4_step(&self, x: &CMatrix, dt: f64) -> CMatrix {
        let h = C64::new(dt, 0.0);
        let half = C64::new(0.5 * dt, 0.0);
        let k1 = self.apply(x);
        let k2 = self.apply(&(x + &k1 * half));
        let k3 = self.apply(&(x + &k2 * half));
        let k4 = self.apply(&(x + &k3 * h));
        x + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (h / 6.0)
    }

    /// Propagates an arbitrary operator by `n_steps` steps of size `dt`.
    pub fn propagate(&self, x: &CMatrix, dt: f64, n_steps: usize) -> CMatrix {
        let mut cur = x.clone();
        for _ in 0..n_steps {
            cur = self.rk4_step(&cur, dt);
        }
        cur
    }
}

/// Dense Lindblad right-hand side for arbitrary H and Lindblad operators:
/// `−(i/ħ)[H, ρ] + Σ_n (L_n ρ L_n† − ½{L_n†L_n, ρ})`.
pub fn lindblad_rhs_dense(h: &CMatrix, ls: &[&CMatrix], rho: &CMatrix, hbar: f64) -> CMatrix {
    let i = C64::new(0.0, 1.0 / hbar);
    let mut out = (h * rho - rho * h) * (-i);
    for l in ls {
        let l_dag = l.adjoint();
        let ldl = &l_dag * *l;
        out += *l * rho * &l_dag - (&ldl * rho + rho * &ldl) * C64::new(0.5, 0.0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LindbladPropagatorConfig {
    pub dt_oracle: f64,
    pub t_end: f64,
}

impl Default for LindbladPropagatorConfig {
    fn default() -> Self {
        Self {
            dt_oracle: 0.01,
            t_end: 1.0,
        }
    }
}

impl LindbladPropagatorConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if !(self.dt_oracle > 0.0) {
            return Err(Error::StepSize(format!(
                "dt_oracle must be positive, got {}",
                self.dt_oracle
            )));
        }
        let scale = self.dt_oracle * (params.gamma * (params.n_bar() + 1.0) + params.omega);
        if scale > DT_ORACLE_GUARD {
            return Err(Error::StepSize(format!(
                "dt_oracle·(γ(n̄+1)+ω) = {scale:.3e} exceeds {DT_ORACLE_GUARD}"
            )));
        }
        Ok(())
    }

    /// Number of steps and the exact step size that lands on `duration`.
    pub fn steps_for(&self, duration: f64) -> (usize, f64) {
        if duration <= 0.0 {
            return (0, self.dt_oracle);
        }
        let n = (duration / self.dt_oracle).ceil().max(1.0) as usize;
        (n, duration / n as f64)
    }
}

/// One RK4 step of the master equation followed by Hermitian symmetrization.
pub fn lindblad_step(rho: &DensityMatrix, ops: &OperatorSet, dt: f64) -> Result<DensityMatrix> {
    lindblad_step_with(rho, &Generator::new(ops), dt)
}

pub fn lindblad_step_with(rho: &DensityMatrix, gen: &Generator, dt: f64) -> Result<DensityMatrix> {
    let next = gen.rk4_step(rho.matrix(), dt);
    let next = (&next + next.adjoint()) * C64::new(0.5, 0.0);
    let drift = (next.trace() - rho.matrix().trace()).norm();
    if drift > TRACE_DRIFT_TOL {
        return Err(Error::StepSize(format!(
            "trace drifted by {drift:.3e} in one step of {dt}"
        )));
    }
    Ok(DensityMatrix::from_matrix_unchecked(next))
}

/// Evolves `rho0` and returns snapshots at `times` (ascending, ≥ 0).
pub fn evolve(
    rho0: &DensityMatrix,
    ops: &OperatorSet,
    cfg: &LindbladPropagatorConfig,
    times: &[f64],
) -> Result<Vec<DensityMatrix>> {
    cfg.validate(&ops.params)?;
    let gen = Generator::new(ops);
    let mut out = Vec::with_capacity(times.len());
    let mut rho = rho0.clone();
    let mut t = 0.0;
    for &target in times {
        if target < t {
            return Err(Error::Parameter("snapshot times must be ascending".into()));
        }
        let (n, dt) = cfg.steps_for(target - t);
        for _ in 0..n {
            rho = lindblad_step_with(&rho, &gen, dt)?;
        }
        t = target;
        out.push(rho.clone());
    }
    Ok(out)
}

/// Thermal occupations n̄ⁿ/(1+n̄)^{n+1} renormalized over `dim` levels.
pub fn thermal_occupations(n_bar: f64, dim: usize) -> Vec<f64> {
    if n_bar == 0.0 {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        return v;
    }
    let ratio = n_bar / (1.0 + n_bar);
    let p0 = 1.0 / (1.0 + n_bar);
    (0..dim).map(|n| p0 * ratio.powi(n as i32)).collect()
}

pub fn thermal_state(params: &ModelParams, dim: usize) -> Result<DensityMatrix> {
    params.validate()?;
    let n_bar = params.n_bar();
    let tail = (n_bar / (1.0 + n_bar)).powi(dim as i32);
    if tail >= THERMAL_TAIL_TOL {
        return Err(Error::Dimension(format!(
            "thermal tail mass {tail:.3e} beyond {dim} levels exceeds {THERMAL_TAIL_TOL:.0e}"
        )));
    }
    let mut probs = thermal_occupations(n_bar, dim);
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let m = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        dim,
        probs.into_iter().map(|p| C64::new(p, 0.0)),
    ));
    Ok(DensityMatrix::from_matrix_unchecked(m))
}

/// Frobenius norm of the generator applied to the thermal state.
pub fn stationary_lindblad_check(ops: &OperatorSet) -> Result<f64> {
    let rho = thermal_state(&ops.params, ops.dim)?;
    Ok(generator_residual(rho.matrix(), ops))
}

/// ‖L[ρ]‖_F for any operator.
pub fn generator_residual(rho: &CMatrix, ops: &OperatorSet) -> f64 {
    Generator::new(ops).apply(rho).norm()
}

/// Gaussian P-function moments: mean ⟨α⟩ and variance ⟨|α − ⟨α⟩|²⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUState {
    pub mean_alpha: C64,
    pub var_alpha: f64,
}

/// Exact moment flow: the mean spirals in as exp(−(iω + γ/2)t) and the
/// variance relaxes to n̄ at rate γ.
pub fn ou_flow(initial: &OUState, params: &ModelParams, t: f64) -> OUState {
    let n_bar = params.n_bar();
    let decay = C64::new(-0.5 * params.gamma * t, -params.omega * t).exp();
    OUState {
        mean_alpha: initial.mean_alpha * decay,
        var_alpha: n_bar + (initial.var_alpha - n_bar) * (-params.gamma * t).exp(),
    }
}

/// Oracle mean occupation n̄ + (n₀ − n̄)e^{−γt}.
pub fn mean_occupation_law(n0: f64, params: &ModelParams, t: f64) -> f64 {
    let n_bar = params.n_bar();
    n_bar + (n0 - n_bar) * (-params.gamma * t).exp()
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// ½‖ρ − σ‖₁.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|v| v.abs()).sum::<f64>()
}
