//! Moments and localization diagnostics of a pure state.
//!
//! Naming: `excess_q = Δq²/σ_q² − 1` and `excess_p = Δp²/σ_p² − 1`. Reports
//! and CSV output label them `Q` and `P` respectively, matching the usual
//! convention where `Q` belongs to position and `P` to momentum. The
//! localization rate is symmetric in the two, so nothing downstream depends
//! on the labelling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, OperatorSet, StateVector};
use crate::{CMatrix, C64};

/// Column names of [`ObservableBundle`] in CSV order (after `t`).
pub const FIELD_NAMES: [&str; 9] = [
    "q_mean",
    "p_mean",
    "var_q",
    "var_p",
    "R",
    "P",
    "Q",
    "delta_alpha_sq",
    "n_mean",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableBundle {
    pub t: f64,
    pub q_mean: f64,
    pub p_mean: f64,
    pub var_q: f64,
    pub var_p: f64,
    /// Symmetrized q–p correlation ½⟨{p,q}⟩ − ⟨p⟩⟨q⟩.
    pub r: f64,
    pub excess_q: f64,
    pub excess_p: f64,
    /// σ(a, a) = ⟨a†a⟩ − |⟨a⟩|².
    pub delta_alpha_sq: f64,
    pub n_mean: f64,
}

impl ObservableBundle {
    /// Values in [`FIELD_NAMES`] order.
    pub fn values(&self) -> [f64; 9] {
        [
            self.q_mean,
            self.p_mean,
            self.var_q,
            self.var_p,
            self.r,
            self.excess_p,
            self.excess_q,
            self.delta_alpha_sq,
            self.n_mean,
        ]
    }

    pub fn from_values(t: f64, v: [f64; 9]) -> Self {
        Self {
            t,
            q_mean: v[0],
            p_mean: v[1],
            var_q: v[2],
            var_p: v[3],
            r: v[4],
            excess_p: v[5],
            excess_q: v[6],
            delta_alpha_sq: v[7],
            n_mean: v[8],
        }
    }

    pub fn csv_header() -> String {
        std::iter::once("t")
            .chain(FIELD_NAMES)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn csv_row(&self) -> String {
        std::iter::once(self.t)
            .chain(self.values())
            .map(|v| format!("{v:.12e}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Δα² recomputed from the dispersions, (excess_q + excess_p)/4.
    pub fn delta_alpha_sq_from_excess(&self) -> f64 {
        0.25 * (self.excess_q + self.excess_p)
    }

    /// Largest of |Q|, |P|, |R|/ħ and Δα².
    pub fn max_shape_deviation(&self, hbar: f64) -> f64 {
        self.excess_q
            .abs()
            .max(self.excess_p.abs())
            .max(self.r.abs() / hbar)
            .max(self.delta_alpha_sq)
    }
}

/// σ(Γ, O) = ⟨Γ†O⟩ − ⟨Γ†⟩⟨O⟩.
pub fn sigma(state: &StateVector, gamma: &CMatrix, o: &CMatrix) -> Result<C64> {
    let d = state.dim();
    for (name, m) in [("Gamma", gamma), ("O", o)] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::Dimension(format!(
                "operator {name} is {}x{}, state has dimension {d}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let psi = state.amplitudes();
    let g_psi = gamma * psi;
    let o_psi = o * psi;
    let g_dag = psi.dotc(&g_psi).conj();
    Ok(g_psi.dotc(&o_psi) - g_dag * psi.dotc(&o_psi))
}

/// All moments of `state` at time `t`.
pub fn bundle(state: &StateVector, ops: &OperatorSet, t: f64) -> Result<ObservableBundle> {
    if state.dim() != ops.dim {
        return Err(Error::Dimension(format!(
            "state dimension {} does not match operators {}",
            state.dim(),
            ops.dim
        )));
    }
    Ok(bundle_unchecked(state, ops, t))
}

pub(crate) fn bundle_unchecked(state: &StateVector, ops: &OperatorSet, t: f64) -> ObservableBundle {
    let psi = state.amplitudes();
    let norm = psi.norm_squared();
    let a_psi = ops.apply_a(psi);
    let ad_psi = ops.apply_a_dag(psi);
    let sq = ops.params.sigma_q();
    let sp = ops.params.sigma_p();

    let q_psi = (&a_psi + &ad_psi) * C64::new(sq, 0.0);
    let p_psi = (&a_psi - &ad_psi) * C64::new(0.0, -sp);
    let q_mean = psi.dotc(&q_psi).re / norm;
    let p_mean = psi.dotc(&p_psi).re / norm;
    let q2 = q_psi.norm_squared() / norm;
    let p2 = p_psi.norm_squared() / norm;
    let sym_qp = q_psi.dotc(&p_psi).re / norm;

    let var_q = q2 - q_mean * q_mean;
    let var_p = p2 - p_mean * p_mean;
    let a_mean = psi.dotc(&a_psi) / norm;
    let n_mean = a_psi.norm_squared() / norm;

    ObservableBundle {
        t,
        q_mean,
        p_mean,
        var_q,
        var_p,
        r: sym_qp - p_mean * q_mean,
        excess_q: var_q / (sq * sq) - 1.0,
        excess_p: var_p / (sp * sp) - 1.0,
        delta_alpha_sq: n_mean - a_mean.norm_sqr(),
        n_mean,
    }
}

/// Analytic ensemble rate M d(Δα)²/dt in the P/Q/R form:
/// `−2γ(n̄+½)[R²/ħ² + P²/8 + Q²/8 + Δα²]`.
pub fn localization_rhs(b: &ObservableBundle, params: &ModelParams) -> f64 {
    let hbar = params.hbar;
    let bracket = b.r * b.r / (hbar * hbar)
        + b.excess_p * b.excess_p / 8.0
        + b.excess_q * b.excess_q / 8.0
        + b.delta_alpha_sq;
    -params.localization_rate_bound() * bracket
}

/// The same rate written through the raw dispersions:
/// `γ/(2ħ²)(n̄+½)[ħ² − 4R² − 2(σ_q²/σ_p²)Δp⁴ − 2(σ_p²/σ_q²)Δq⁴]`.
pub fn localization_rhs_dispersion_form(b: &ObservableBundle, params: &ModelParams) -> f64 {
    let hbar = params.hbar;
    let sq2 = params.sigma_q().powi(2);
    let sp2 = params.sigma_p().powi(2);
    let bracket = hbar * hbar
        - 4.0 * b.r * b.r
        - 2.0 * (sq2 / sp2) * b.var_p * b.var_p
        - 2.0 * (sp2 / sq2) * b.var_q * b.var_q;
    params.gamma / (2.0 * hbar * hbar) * (params.n_bar() + 0.5) * bracket
}
