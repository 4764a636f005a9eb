//! Euler–Maruyama integration of the diffusive quantum-state-diffusion equation
//!
//! ```text
//! |dψ⟩ = −(i/ħ)H|ψ⟩dt + Σ_n (⟨L_n†⟩L_n − ½L_n†L_n − ½⟨L_n†⟩⟨L_n⟩)|ψ⟩dt
//!        + Σ_n (L_n − ⟨L_n⟩)|ψ⟩dξ_n
//! ```
//!
//! with `L1 = sqrt((n̄+1)γ)·a`, `L2 = sqrt(n̄γ)·a†` and complex Wiener
//! increments satisfying `M dξ = 0`, `M dξ² = 0`, `M |dξ|² = dt`.
//! Expectations are evaluated in the pre-step state (Itô convention).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OperatorSet, StateVector};
use crate::observables::{bundle_unchecked, ObservableBundle};
use crate::thresholds::{DT_DISSIPATIVE_GUARD, DT_OSCILLATOR_GUARD, TAIL_TOL};
use crate::{CVector, C64};

/// Random number generator used for every trajectory.
pub type TrajectoryRng = ChaCha8Rng;

/// One pair of complex Wiener increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseIncrement {
    pub dxi1: C64,
    pub dxi2: C64,
}

impl NoiseIncrement {
    pub const ZERO: Self = Self {
        dxi1: C64 { re: 0.0, im: 0.0 },
        dxi2: C64 { re: 0.0, im: 0.0 },
    };
}

/// Draws two independent complex increments with real and imaginary parts of
/// variance `dt/2` each.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, dt: f64) -> NoiseIncrement {
    let s = (0.5 * dt).sqrt();
    let mut g = || -> f64 { rng.sample::<f64, _>(StandardNormal) * s };
    let dxi1 = C64::new(g(), g());
    let dxi2 = C64::new(g(), g());
    NoiseIncrement { dxi1, dxi2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Steps between recorded samples.
    pub record_stride: usize,
    pub renormalize: bool,
    pub tail_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            seed: 0,
            record_stride: 100,
            renormalize: true,
            tail_tol: TAIL_TOL,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Parameter(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Parameter("record_stride must be at least 1".into()));
        }
        if !(self.tail_tol > 0.0) {
            return Err(Error::Parameter("tail_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Resolution warnings for the given operators; empty when the step size
    /// resolves both the dissipative and the oscillatory scale.
    pub fn step_warnings(&self, ops: &OperatorSet) -> Vec<String> {
        let p = &ops.params;
        let mut w = Vec::new();
        let diss = self.dt * p.gamma * (p.n_bar() + 1.0);
        if diss > DT_DISSIPATIVE_GUARD {
            w.push(format!(
                "dt·γ·(n̄+1) = {diss:.3e} exceeds {DT_DISSIPATIVE_GUARD}"
            ));
        }
        let osc = self.dt * p.omega;
        if osc > DT_OSCILLATOR_GUARD {
            w.push(format!("dt·ω = {osc:.3e} exceeds {DT_OSCILLATOR_GUARD}"));
        }
        w
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepOptions {
    pub renormalize: bool,
    pub tail_tol: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            renormalize: true,
            tail_tol: TAIL_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub state: StateVector,
    /// ‖ψ + dψ‖² before any renormalization.
    pub norm_sqr: f64,
}

/// Unnormalized `ψ + dψ` for one Euler–Maruyama step.
pub fn qsd_increment(state: &StateVector, ops: &OperatorSet, noise: &NoiseIncrement, dt: f64) -> CVector {
    let psi = state.amplitudes();
    let norm = psi.norm_squared();
    let a_psi = ops.apply_a(psi);
    let ad_psi = ops.apply_a_dag(psi);
    let a_mean = psi.dotc(&a_psi) / norm;

    let (c1, c2) = (ops.l1_coeff, ops.l2_coeff);
    let omega = ops.params.omega;
    // ⟨L1⟩ = c1⟨a⟩, ⟨L2⟩ = c2⟨a†⟩ = c2⟨a⟩*
    let e1 = a_mean * c1;
    let e2 = a_mean.conj() * c2;
    let constant = -0.5 * (e1.norm_sqr() + e2.norm_sqr());
    let last = ops.dim - 1;

    let mut out = psi.clone();
    for n in 0..ops.dim {
        let nf = n as f64;
        // a a† is truncated to zero on the top level, matching the dense L2†L2
        let aad = if n == last { 0.0 } else { nf + 1.0 };
        let diag = C64::new(constant - 0.5 * (c1 * c1 * nf + c2 * c2 * aad), -omega * (nf + 0.5));
        let l1_psi = a_psi[n] * c1;
        let l2_psi = ad_psi[n] * c2;
        let drift = psi[n] * diag + e1.conj() * l1_psi + e2.conj() * l2_psi;
        let diffusion = (l1_psi - e1 * psi[n]) * noise.dxi1 + (l2_psi - e2 * psi[n]) * noise.dxi2;
        out[n] += drift * dt + diffusion;
    }
    out
}

/// One Euler–Maruyama step followed by optional renormalization and a
/// truncation-health check.
pub fn qsd_step(
    state: &StateVector,
    ops: &OperatorSet,
    noise: &NoiseIncrement,
    dt: f64,
    opts: StepOptions,
) -> Result<Step> {
    let next = qsd_increment(state, ops, noise, dt);
    let norm_sqr = next.norm_squared();
    let mut next = StateVector::from_raw(next);
    if opts.renormalize {
        next.normalize();
    }
    next.check_health(opts.tail_tol)?;
    Ok(Step {
        state: next,
        norm_sqr,
    })
}

/// Time series produced by [`run_trajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub bundles: Vec<ObservableBundle>,
    pub final_state: StateVector,
    pub seed: u64,
    /// |‖ψ+dψ‖² − 1| of the step that produced each sample (0 for t = 0).
    pub norm_drift: Vec<f64>,
}

/// Integrates from `initial` using `cfg.seed`, calling `observer` at every
/// recorded sample.
pub fn run_trajectory<F>(
    initial: &StateVector,
    ops: &OperatorSet,
    cfg: &IntegratorConfig,
    observer: F,
) -> Result<TrajectoryRecord>
where
    F: FnMut(usize, f64, &StateVector),
{
    let mut rng = TrajectoryRng::seed_from_u64(cfg.seed);
    run_trajectory_with_rng(initial, ops, cfg, &mut rng, cfg.seed, observer)
}

pub fn run_trajectory_with_rng<F, R>(
    initial: &StateVector,
    ops: &OperatorSet,
    cfg: &IntegratorConfig,
    rng: &mut R,
    seed: u64,
    mut observer: F,
) -> Result<TrajectoryRecord>
where
    F: FnMut(usize, f64, &StateVector),
    R: Rng + ?Sized,
{
    cfg.validate()?;
    if initial.dim() != ops.dim {
        return Err(Error::Dimension(format!(
            "initial state dimension {} does not match operators {}",
            initial.dim(),
            ops.dim
        )));
    }
    initial.check_health(cfg.tail_tol)?;
    let opts = StepOptions {
        renormalize: cfg.renormalize,
        tail_tol: cfg.tail_tol,
    };

    let n_steps = cfg.n_steps();
    let n_samples = n_steps / cfg.record_stride + 1;
    let mut times = Vec::with_capacity(n_samples);
    let mut bundles = Vec::with_capacity(n_samples);
    let mut norm_drift = Vec::with_capacity(n_samples);

    let mut state = initial.clone();
    times.push(0.0);
    bundles.push(bundle_unchecked(&state, ops, 0.0));
    norm_drift.push(0.0);
    observer(0, 0.0, &state);

    for k in 1..=n_steps {
        let noise = draw_noise(rng, cfg.dt);
        let t = k as f64 * cfg.dt;
        let step = qsd_step(&state, ops, &noise, cfg.dt, opts).map_err(|e| e.at(t))?;
        state = step.state;
        if k % cfg.record_stride == 0 {
            times.push(t);
            bundles.push(bundle_unchecked(&state, ops, t));
            norm_drift.push((step.norm_sqr - 1.0).abs());
            observer(times.len() - 1, t, &state);
        }
    }

    Ok(TrajectoryRecord {
        times,
        bundles,
        final_state: state,
        seed,
        norm_drift,
    })
}
