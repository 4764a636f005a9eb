//! Experiment drivers shared by the `qsd` binary and the acceptance tests.
//!
//! Each driver runs the numerics and returns an outcome carrying its data
//! series and a list of named [`Check`]s. Nothing here touches the
//! filesystem; see [`crate::output`] for that.

use serde::Serialize;

use crate::ensemble::{run_ensemble, trajectory_seed, DensityMatrix, EnsembleConfig, EnsembleStats, InitialState};
use crate::error::{Error, Result};
use crate::histories::{
    classical_orbit, classical_peaking_report, decoherence_functional, CellPartition, DecoherenceMatrix,
    HistorySpec, PeakingReport, PhaseCell, Suppression,
};
use crate::model::{ModelParams, OperatorSet};
use crate::observables::{localization_rhs, ObservableBundle};
use crate::oracle::{evolve, thermal_occupations, trace_distance, LindbladPropagatorConfig};
use crate::qsd::{run_trajectory, IntegratorConfig};
use crate::stats::{chi_square, fit_decay_rate, mean_stderr, slope, ChiSquare, RateFit};
use crate::thresholds::{
    CAT_RATIO_TOL, CHI2_MIN_EXPECTED, CHI2_MIN_P, CONTROL_MIN_RATIO, HISTORY_PROB_FLOOR, LOCALIZATION_TIME_FACTOR,
    N_SIGMA, SHAPE_TOL, SLOPE_WINDOW, SQRT_M_SCALING_TOL, SUPPRESSION_TOL, Z95,
};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn below(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value, limit, value < limit, format!("{value:.6e} < {limit:.6e}"))
    }

    pub fn above(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value, limit, value > limit, format!("{value:.6e} > {limit:.6e}"))
    }

    pub fn new(name: &str, value: f64, limit: f64, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            value,
            limit,
            passed: passed && value.is_finite(),
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryOutcome {
    pub bundles: Vec<ObservableBundle>,
    pub max_abs_p: f64,
    pub max_abs_q: f64,
    pub max_abs_r_over_hbar: f64,
    pub max_delta_alpha_sq: f64,
    pub checks: Vec<Check>,
}

/// Single trajectory; the coherent shape is preserved when all four
/// diagnostics stay below the tolerance for the whole run.
pub fn stationary(ops: &OperatorSet, integrator: &IntegratorConfig, initial: &InitialState) -> Result<StationaryOutcome> {
    let psi0 = initial.build(ops.dim)?;
    let rec = run_trajectory(&psi0, ops, integrator, |_, _, _| {})?;
    let hbar = ops.params.hbar;
    let max = |f: &dyn Fn(&ObservableBundle) -> f64| rec.bundles.iter().map(f).fold(0.0, f64::max);
    let max_abs_p = max(&|b| b.excess_p.abs());
    let max_abs_q = max(&|b| b.excess_q.abs());
    let max_abs_r_over_hbar = max(&|b| b.r.abs() / hbar);
    let max_delta_alpha_sq = max(&|b| b.delta_alpha_sq);
    let checks = vec![
        Check::below("max |P|", max_abs_p, SHAPE_TOL),
        Check::below("max |Q|", max_abs_q, SHAPE_TOL),
        Check::below("max |R|/hbar", max_abs_r_over_hbar, SHAPE_TOL),
        Check::below("max delta_alpha_sq", max_delta_alpha_sq, SHAPE_TOL),
    ];
    Ok(StationaryOutcome {
        bundles: rec.bundles,
        max_abs_p,
        max_abs_q,
        max_abs_r_over_hbar,
        max_delta_alpha_sq,
        checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeWindow {
    pub t_mid: f64,
    /// Trajectory mean of the regressed d(Δα²)/dt.
    pub slope: f64,
    /// Trajectory mean of the analytic rate averaged over the window.
    pub rhs: f64,
    pub diff_stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizationOutcome {
    pub times: Vec<f64>,
    pub mean_delta: Vec<f64>,
    pub stderr_delta: Vec<f64>,
    pub mean_rhs: Vec<f64>,
    pub fit: RateFit,
    pub bound: f64,
    pub localization_time: f64,
    pub windows: Vec<SlopeWindow>,
    pub max_abs_z: f64,
    pub checks: Vec<Check>,
}

impl LocalizationOutcome {
    pub fn measured_time(&self) -> f64 {
        1.0 / self.fit.rate
    }
}

/// Exponential fit of M Δα²(t) against the lower bound 2γ(n̄+½), and a
/// window-by-window comparison of the regressed slope with M[rhs].
pub fn localization(ops: &OperatorSet, cfg: &EnsembleConfig, floor_fraction: f64) -> Result<LocalizationOutcome> {
    let mut cfg = cfg.clone();
    cfg.keep_trajectories = true;
    let stats = run_ensemble(&cfg, ops)?;
    let params = &ops.params;
    let per_traj = stats.trajectory_bundles.as_ref().expect("kept trajectories");
    let rhs: Vec<Vec<f64>> = per_traj
        .iter()
        .map(|series| series.iter().map(|b| localization_rhs(b, params)).collect())
        .collect();
    let n_samples = stats.times.len();
    let mean_rhs: Vec<f64> = (0..n_samples)
        .map(|k| rhs.iter().map(|r| r[k]).sum::<f64>() / rhs.len() as f64)
        .collect();
    let mean_delta = stats.mean_series(|b| b.delta_alpha_sq);
    let stderr_delta = stats.stderr_series(|b| b.delta_alpha_sq);
    let fit = fit_decay_rate(&stats.times, &mean_delta, floor_fraction)?;
    let bound = params.localization_rate_bound();

    let mut windows = Vec::new();
    let mut start = 0;
    while start + SLOPE_WINDOW <= n_samples {
        let range = start..start + SLOPE_WINDOW;
        let t = &stats.times[range.clone()];
        let diffs: Vec<f64> = per_traj
            .iter()
            .zip(&rhs)
            .map(|(series, r)| {
                let y: Vec<f64> = series[range.clone()].iter().map(|b| b.delta_alpha_sq).collect();
                slope(t, &y) - r[range.clone()].iter().sum::<f64>() / SLOPE_WINDOW as f64
            })
            .collect();
        let (diff_mean, diff_stderr) = mean_stderr(&diffs);
        let rhs_mean = mean_rhs[range.clone()].iter().sum::<f64>() / SLOPE_WINDOW as f64;
        let z = if diff_stderr > 0.0 {
            diff_mean / diff_stderr
        } else if diff_mean.abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        windows.push(SlopeWindow {
            t_mid: 0.5 * (t[0] + t[SLOPE_WINDOW - 1]),
            slope: rhs_mean + diff_mean,
            rhs: rhs_mean,
            diff_stderr,
            z,
        });
        start += SLOPE_WINDOW;
    }
    let max_abs_z = windows.iter().map(|w| w.z.abs()).fold(0.0, f64::max);
    let (_, upper) = fit.interval(Z95);
    let checks = vec![
        Check::new(
            "decay rate reaches 2γ(n̄+½)",
            upper,
            bound,
            upper >= bound,
            format!(
                "rate {:.5} ± {:.5} (95% upper {:.5}) vs bound {:.5}",
                fit.rate,
                Z95 * fit.rate_stderr,
                upper,
                bound
            ),
        ),
        Check::new(
            "pointwise slope matches M[rhs]",
            max_abs_z,
            N_SIGMA,
            max_abs_z <= N_SIGMA && !windows.is_empty(),
            format!("max |z| = {max_abs_z:.3} over {} windows (≤ {N_SIGMA})", windows.len()),
        ),
    ];
    Ok(LocalizationOutcome {
        times: stats.times.clone(),
        mean_delta,
        stderr_delta,
        mean_rhs,
        fit,
        bound,
        localization_time: params.localization_time(),
        windows,
        max_abs_z,
        checks,
    })
}

/// Measured localization time 1/rate within a factor of t_l.
pub fn localization_time_check(name: &str, outcome: &LocalizationOutcome) -> Check {
    let measured = outcome.measured_time();
    let t_l = outcome.localization_time;
    let factor = (measured / t_l).max(t_l / measured);
    Check::new(
        name,
        factor,
        LOCALIZATION_TIME_FACTOR,
        factor <= LOCALIZATION_TIME_FACTOR,
        format!("1/rate = {measured:.5}, t_l = {t_l:.5}, factor {factor:.3} (≤ {LOCALIZATION_TIME_FACTOR})"),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct CatRun {
    pub alpha: f64,
    pub separation_q: f64,
    pub times: Vec<f64>,
    pub mean_delta: Vec<f64>,
    pub fit: RateFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct CatScalingOutcome {
    pub runs: Vec<CatRun>,
    pub ratio: f64,
    pub expected: f64,
    pub checks: Vec<Check>,
}

/// Fitted decay rates of M Δα² for even cats at amplitude `alpha` and
/// `factor·alpha`; the rate ratio is compared with `factor²`.
pub fn cat_scaling(
    ops: &OperatorSet,
    cfg: &EnsembleConfig,
    alpha: f64,
    factor: f64,
    floor_fraction: f64,
) -> Result<CatScalingOutcome> {
    let sigma_q = ops.params.sigma_q();
    let mut runs = Vec::new();
    for a in [alpha, factor * alpha] {
        let mut c = cfg.clone();
        c.initial = InitialState::Cat { re: a, im: 0.0 };
        let stats = run_ensemble(&c, ops)?;
        let mean_delta = stats.mean_series(|b| b.delta_alpha_sq);
        let fit = fit_decay_rate(&stats.times, &mean_delta, floor_fraction)?;
        runs.push(CatRun {
            alpha: a,
            // |α⟩ and |−α⟩ sit at q = ±2σ_q α
            separation_q: 4.0 * sigma_q * a,
            times: stats.times,
            mean_delta,
            fit,
        });
    }
    let ratio = runs[1].fit.rate / runs[0].fit.rate;
    let expected = factor * factor;
    let rel = (ratio / expected - 1.0).abs();
    let checks = vec![Check::new(
        "cat rate ratio scales as d²",
        rel,
        CAT_RATIO_TOL,
        rel <= CAT_RATIO_TOL,
        format!(
            "rates {:.5}, {:.5}: ratio {ratio:.4} vs {expected} (relative deviation {rel:.3} ≤ {CAT_RATIO_TOL})",
            runs[0].fit.rate, runs[1].fit.rate
        ),
    )];
    Ok(CatScalingOutcome { runs, ratio, expected, checks })
}

#[derive(Debug, Clone, Serialize)]
pub struct ThermalizationOutcome {
    pub times: Vec<f64>,
    pub mean_n: Vec<f64>,
    pub stderr_n: Vec<f64>,
    pub n_bar: f64,
    pub late_mean: f64,
    pub late_stderr: f64,
    /// Pooled Born-rule counts per bin; the last bin collects the tail.
    pub observed: Vec<f64>,
    pub expected_probs: Vec<f64>,
    pub chi_square: Option<ChiSquare>,
    /// Ensemble-averaged occupations at the last sample.
    pub final_occupation: Vec<f64>,
    pub checks: Vec<Check>,
}

/// Late-time mean occupation against n̄, and a chi-square test of pooled
/// Fock-basis samples against n̄ⁿ/(1+n̄)^{n+1}.
pub fn thermalization(
    ops: &OperatorSet,
    cfg: &EnsembleConfig,
    late_start: f64,
    measurement_times: &[f64],
    bins: usize,
) -> Result<ThermalizationOutcome> {
    let mut cfg = cfg.clone();
    cfg.keep_trajectories = true;
    cfg.measurement_times = measurement_times.to_vec();
    let stats = run_ensemble(&cfg, ops)?;
    let n_bar = ops.params.n_bar();

    let per_traj = stats.trajectory_bundles.as_ref().expect("kept trajectories");
    let late: Vec<f64> = per_traj
        .iter()
        .map(|series| {
            let xs: Vec<f64> = series.iter().filter(|b| b.t >= late_start).map(|b| b.n_mean).collect();
            xs.iter().sum::<f64>() / xs.len().max(1) as f64
        })
        .collect();
    if per_traj.first().is_none_or(|s| s.iter().all(|b| b.t < late_start)) {
        return Err(Error::Parameter(format!("late window starts after t_end ({late_start})")));
    }
    let (late_mean, late_stderr) = mean_stderr(&late);

    let bins = bins.max(2);
    let law = thermal_occupations(n_bar, 4096.max(ops.dim));
    let mut expected_probs: Vec<f64> = law[..bins].to_vec();
    expected_probs.push(1.0 - expected_probs.iter().sum::<f64>());
    let mut observed = vec![0.0; bins + 1];
    for (_, samples) in &stats.measurements {
        for &n in samples {
            observed[n.min(bins)] += 1.0;
        }
    }
    let mut checks = vec![Check::new(
        "late mean occupation equals n̄",
        (late_mean - n_bar).abs() / late_stderr,
        N_SIGMA,
        (late_mean - n_bar).abs() <= N_SIGMA * late_stderr,
        format!("{late_mean:.5} ± {late_stderr:.5} vs n̄ = {n_bar:.5}"),
    )];
    let chi = if measurement_times.is_empty() {
        None
    } else {
        match chi_square(&observed, &expected_probs, CHI2_MIN_EXPECTED) {
            Ok(c) => {
                checks.push(Check::above("occupation histogram chi-square p", c.p_value, CHI2_MIN_P));
                Some(c)
            }
            Err(e) => {
                checks.push(Check::new(
                    "occupation histogram chi-square p",
                    f64::NAN,
                    CHI2_MIN_P,
                    false,
                    e.to_string(),
                ));
                None
            }
        }
    };
    Ok(ThermalizationOutcome {
        times: stats.times.clone(),
        mean_n: stats.mean_series(|b| b.n_mean),
        stderr_n: stats.stderr_series(|b| b.n_mean),
        n_bar,
        late_mean,
        late_stderr,
        observed,
        expected_probs,
        chi_square: chi,
        final_occupation: stats.occupation.last().cloned().unwrap_or_default(),
        checks,
    })
}

/// Time average of ⟨n⟩ over the second half of one trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct ErgodicOutcome {
    pub time_average: f64,
    /// Batch-means standard error.
    pub stderr: f64,
    pub n_bar: f64,
    pub z: f64,
    /// Soft diagnostic; not part of any pass/fail decision.
    pub within_5_stderr: bool,
}

pub fn ergodic_average(
    ops: &OperatorSet,
    integrator: &IntegratorConfig,
    initial: &InitialState,
    batches: usize,
) -> Result<ErgodicOutcome> {
    let psi0 = initial.build(ops.dim)?;
    let rec = run_trajectory(&psi0, ops, integrator, |_, _, _| {})?;
    let half = 0.5 * integrator.t_end;
    let xs: Vec<f64> = rec.bundles.iter().filter(|b| b.t >= half).map(|b| b.n_mean).collect();
    let batches = batches.max(2);
    if xs.len() < 2 * batches {
        return Err(Error::Statistics(format!(
            "{} samples in the second half, need at least {}",
            xs.len(),
            2 * batches
        )));
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let (time_average, stderr) = mean_stderr(&means);
    let n_bar = ops.params.n_bar();
    let z = (time_average - n_bar).abs() / stderr;
    Ok(ErgodicOutcome {
        time_average,
        stderr,
        n_bar,
        z,
        within_5_stderr: z <= 5.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundDecayOutcome {
    pub times: Vec<f64>,
    pub law: Vec<f64>,
    /// M⟨n⟩ at step sizes dt and dt/2.
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    pub stderr_fine: Vec<f64>,
    /// sqrt(stderr² + (fine − coarse)²) per sample.
    pub sigma: Vec<f64>,
    pub max_z: f64,
    pub final_n: f64,
    pub monotone: bool,
    pub checks: Vec<Check>,
}

/// Zero-temperature relaxation of M⟨n⟩ against ⟨n⟩₀·e^{−γt}. The comparison
/// uses the dt/2 run; its uncertainty adds the Monte-Carlo standard error
/// and the first-order step-size error estimated from the dt run.
pub fn ground_state_decay(ops: &OperatorSet, cfg: &EnsembleConfig) -> Result<GroundDecayOutcome> {
    if ops.params.n_bar() != 0.0 {
        return Err(Error::Parameter("ground-state decay needs T = 0".into()));
    }
    let coarse_stats = run_ensemble(cfg, ops)?;
    let mut fine_cfg = cfg.clone();
    fine_cfg.integrator.dt *= 0.5;
    fine_cfg.integrator.record_stride *= 2;
    let fine_stats = run_ensemble(&fine_cfg, ops)?;

    let coarse = coarse_stats.mean_series(|b| b.n_mean);
    let fine = fine_stats.mean_series(|b| b.n_mean);
    let stderr_fine = fine_stats.stderr_series(|b| b.n_mean);
    let n0 = fine[0];
    let gamma = ops.params.gamma;
    let times = fine_stats.times.clone();
    let law: Vec<f64> = times.iter().map(|t| n0 * (-gamma * t).exp()).collect();
    let sigma: Vec<f64> = (0..times.len())
        .map(|k| (stderr_fine[k].powi(2) + (fine[k] - coarse[k]).powi(2)).sqrt())
        .collect();
    let max_z = (1..times.len())
        .map(|k| (fine[k] - law[k]).abs() / sigma[k])
        .fold(0.0, f64::max);
    let final_n = *fine.last().unwrap_or(&f64::NAN);
    let monotone = fine.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let checks = vec![
        Check::new(
            "M⟨n⟩ follows ⟨n⟩₀e^{−γt}",
            max_z,
            N_SIGMA,
            max_z <= N_SIGMA,
            format!("max |deviation|/σ = {max_z:.3} (≤ {N_SIGMA})"),
        ),
        Check::below("final ⟨n⟩", final_n, 0.01),
        Check::new(
            "M⟨n⟩ decreases monotonically",
            f64::from(u8::from(monotone)),
            1.0,
            monotone,
            format!("monotone = {monotone}"),
        ),
    ];
    Ok(GroundDecayOutcome {
        times,
        law,
        coarse,
        fine,
        stderr_fine,
        sigma,
        max_z,
        final_n,
        monotone,
        checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleCompareOutcome {
    pub time: f64,
    pub trajectories: usize,
    pub distances_m: Vec<f64>,
    pub distances_4m: Vec<f64>,
    pub mean_m: f64,
    pub mean_4m: f64,
    pub ratio: f64,
    pub coarse_dt: f64,
    pub coarse_trajectories: usize,
    pub distance_dt: f64,
    pub distance_half_dt: f64,
    pub checks: Vec<Check>,
}

fn ensemble_rho(ops: &OperatorSet, cfg: &EnsembleConfig, time: f64) -> Result<DensityMatrix> {
    let mut c = cfg.clone();
    c.integrator.t_end = time;
    c.integrator.record_stride = c.integrator.n_steps().max(1);
    c.snapshot_times = vec![time];
    let stats: EnsembleStats = run_ensemble(&c, ops)?;
    Ok(stats.snapshots.into_iter().next().expect("one snapshot").1)
}

/// Trace distance between the ensemble ρ and the Lindblad ρ: for M versus 4M
/// trajectories at fixed dt (averaged over seed replicas), and for dt versus
/// dt/2 at a fixed large ensemble.
pub fn oracle_compare(
    ops: &OperatorSet,
    cfg: &EnsembleConfig,
    oracle: &LindbladPropagatorConfig,
    time: f64,
    replicas: usize,
    coarse_dt: f64,
    coarse_trajectories: usize,
) -> Result<OracleCompareOutcome> {
    let psi0 = cfg.initial.build(ops.dim)?;
    let rho0 = DensityMatrix::from_pure(&psi0);
    let reference = evolve(&rho0, ops, oracle, &[time])?.remove(0);
    let distance = |c: &EnsembleConfig| -> Result<f64> {
        Ok(trace_distance(ensemble_rho(ops, c, time)?.matrix(), reference.matrix()))
    };

    let m = cfg.trajectories;
    let mut distances_m = Vec::new();
    let mut distances_4m = Vec::new();
    for r in 0..replicas.max(1) as u64 {
        let mut c = cfg.clone();
        c.base_seed = trajectory_seed(cfg.base_seed, 2 * r);
        distances_m.push(distance(&c)?);
        c.base_seed = trajectory_seed(cfg.base_seed, 2 * r + 1);
        c.trajectories = 4 * m;
        distances_4m.push(distance(&c)?);
    }
    let mean_m = distances_m.iter().sum::<f64>() / distances_m.len() as f64;
    let mean_4m = distances_4m.iter().sum::<f64>() / distances_4m.len() as f64;
    let ratio = mean_4m / mean_m;

    let mut c = cfg.clone();
    c.trajectories = coarse_trajectories;
    c.integrator.dt = coarse_dt;
    let distance_dt = distance(&c)?;
    c.integrator.dt = 0.5 * coarse_dt;
    let distance_half_dt = distance(&c)?;

    let dev = (ratio / 0.5 - 1.0).abs();
    let checks = vec![
        Check::new(
            "distance halves when M quadruples",
            dev,
            SQRT_M_SCALING_TOL,
            dev <= SQRT_M_SCALING_TOL,
            format!("D(M={m}) = {mean_m:.5}, D(4M) = {mean_4m:.5}, ratio {ratio:.4} vs 0.5 (±{SQRT_M_SCALING_TOL})"),
        ),
        Check::new(
            "distance falls when dt halves",
            distance_half_dt,
            distance_dt,
            distance_half_dt < distance_dt,
            format!("D(dt={coarse_dt}) = {distance_dt:.5}, D(dt/2) = {distance_half_dt:.5}"),
        ),
    ];
    Ok(OracleCompareOutcome {
        time,
        trajectories: m,
        distances_m,
        distances_4m,
        mean_m,
        mean_4m,
        ratio,
        coarse_dt,
        coarse_trajectories,
        distance_dt,
        distance_half_dt,
        checks,
    })
}

#[derive(Debug, Clone)]
pub struct HistoriesOutcome {
    pub spec: HistorySpec,
    pub d: DecoherenceMatrix,
    pub table: Vec<Suppression>,
    pub max_ratio: f64,
    pub control: Option<(DecoherenceMatrix, f64)>,
    pub peaking: Option<PeakingReport>,
    pub checks: Vec<Check>,
}

/// Centres of the branches of the initial state: α for a coherent state,
/// ±α for a cat.
fn branch_centers(initial: &InitialState) -> Result<Vec<C64>> {
    match initial {
        InitialState::Coherent { re, im } => Ok(vec![C64::new(*re, *im)]),
        InitialState::Cat { re, im } => Ok(vec![C64::new(*re, *im), -C64::new(*re, *im)]),
        _ => Err(Error::Config(
            "histories without explicit partitions need a coherent or cat initial state".into(),
        )),
    }
}

/// History set with one cell per branch at each time, each cell following the
/// noise-free orbit of its branch.
pub fn branch_history_spec(
    ops: &OperatorSet,
    initial: &InitialState,
    times: &[f64],
    area_over_hbar: f64,
    refine: usize,
) -> Result<HistorySpec> {
    let centers = branch_centers(initial)?;
    let partitions = times
        .iter()
        .map(|&t| {
            CellPartition::new(
                centers
                    .iter()
                    .map(|c| PhaseCell::square(classical_orbit(*c, &ops.params, t), area_over_hbar, refine))
                    .collect(),
            )
        })
        .collect();
    Ok(HistorySpec {
        times: times.to_vec(),
        partitions,
        initial: DensityMatrix::from_pure(&initial.build(ops.dim)?),
    })
}

/// Decoherence functional of a history set, its off-diagonal suppression and
/// an optional γ = 0 control over the same times and branch cells.
pub fn histories(
    ops: &OperatorSet,
    oracle: &LindbladPropagatorConfig,
    initial: &InitialState,
    cfg: &crate::config::HistoriesConfig,
) -> Result<HistoriesOutcome> {
    let times = if cfg.times.is_empty() {
        let t_l = ops.params.localization_time();
        if !t_l.is_finite() {
            return Err(Error::Config("history times must be given when γ = 0".into()));
        }
        vec![0.0, cfg.intervals * t_l]
    } else {
        cfg.times.clone()
    };
    let build = |o: &OperatorSet| -> Result<HistorySpec> {
        if cfg.partitions.is_empty() {
            branch_history_spec(o, initial, &times, cfg.cell_area_over_hbar, cfg.refine)
        } else {
            Ok(HistorySpec {
                times: times.clone(),
                partitions: cfg.partitions.clone(),
                initial: DensityMatrix::from_pure(&initial.build(o.dim)?),
            })
        }
    };
    let spec = build(ops)?;
    let d = decoherence_functional(&spec, ops, oracle)?;
    let table = d.suppression_table(HISTORY_PROB_FLOOR);
    let max_ratio = table.first().map_or(0.0, |s| s.ratio);
    let total = d.total();

    let mut checks = vec![
        Check::below("off-diagonal suppression", max_ratio, SUPPRESSION_TOL),
        Check::below("D Hermiticity error", d.hermiticity_error(), 1e-10),
        Check::above("D diagonal non-negative", d.min_diagonal(), -1e-10),
        Check::below("|Σ D − 1|", (total - C64::new(1.0, 0.0)).norm(), 1e-6),
    ];
    let control = if cfg.control {
        let params = ModelParams { gamma: 0.0, ..ops.params };
        let ops0 = OperatorSet::new(params, ops.dim)?;
        let spec0 = build(&ops0)?;
        let d0 = decoherence_functional(&spec0, &ops0, oracle)?;
        let r0 = d0.max_suppression(HISTORY_PROB_FLOOR).map_or(0.0, |s| s.ratio);
        checks.push(Check::above("γ = 0 control suppression", r0, CONTROL_MIN_RATIO));
        Some((d0, r0))
    } else {
        None
    };
    let peaking = branch_centers(initial)
        .ok()
        .map(|c| classical_peaking_report(&d, &spec, &ops.params, c[0]));
    Ok(HistoriesOutcome {
        spec,
        d,
        table,
        max_ratio,
        control,
        peaking,
        checks,
    })
}
