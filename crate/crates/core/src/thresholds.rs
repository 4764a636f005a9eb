//! Pass/fail thresholds used by the experiment drivers and the acceptance
//! suite. These are artifact choices, kept in one place so they can be
//! audited together.

/// Maximum |P|, |Q|, |R|/ħ and Δα² tolerated along a coherent trajectory.
pub const SHAPE_TOL: f64 = 0.05;

/// Off-diagonal decoherence-functional suppression ratio counted as decohered.
pub const SUPPRESSION_TOL: f64 = 0.1;

/// Suppression ratio the unitary control must exceed.
pub const CONTROL_MIN_RATIO: f64 = 0.3;

/// Number of standard errors allowed in Monte-Carlo comparisons.
pub const N_SIGMA: f64 = 4.0;

/// Default truncation-health bound on the top decile of Fock levels.
pub const TAIL_TOL: f64 = 1e-6;

/// Minimum chi-square p-value for the occupation law.
pub const CHI2_MIN_P: f64 = 0.01;

/// Minimum expected count per compared histogram bin.
pub const CHI2_MIN_EXPECTED: f64 = 5.0;

/// Two-sided 95% normal quantile used for fit intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Relative tolerance on the halving of the trace distance when M quadruples.
pub const SQRT_M_SCALING_TOL: f64 = 0.3;

/// Relative tolerance on the factor-4 rate ratio for cat separations d and 2d.
pub const CAT_RATIO_TOL: f64 = 0.5;

/// Factor within which a measured localization time must match t_l.
pub const LOCALIZATION_TIME_FACTOR: f64 = 3.0;

/// Number of samples in the sliding window used for slope regression.
pub const SLOPE_WINDOW: usize = 10;

/// Histories whose diagonal probability is below this floor are left out of
/// suppression-ratio tables; the ratio is numerically meaningless there.
pub const HISTORY_PROB_FLOOR: f64 = 1e-4;

/// Grid spacing above which the coherent-mixture fit warns.
pub const MIXTURE_MAX_SPACING: f64 = 1.0;

/// Step-size guards for the stochastic integrator.
pub const DT_DISSIPATIVE_GUARD: f64 = 0.01;
pub const DT_OSCILLATOR_GUARD: f64 = 0.05;

/// Step-size guard for the deterministic Lindblad stepper.
pub const DT_ORACLE_GUARD: f64 = 0.05;
