//! Parallel trajectory ensembles and density-matrix recovery.
//!
//! Each trajectory gets a seed derived from `(base_seed, index)` and owns its
//! generator, so results do not depend on how trajectories are scheduled.
//! Statistics are merged strictly in trajectory-index order, which makes the
//! output bit-identical for any worker count.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cat_state, coherent_state, fock_state, OperatorSet, StateVector};
use crate::nnls::nnls_gram;
use crate::observables::ObservableBundle;
use crate::oracle::hermitian_eigenvalues;
use crate::qsd::{run_trajectory_with_rng, IntegratorConfig, TrajectoryRng};
use crate::thresholds::MIXTURE_MAX_SPACING;
use crate::{CMatrix, CVector, C64};

/// Initial pure state of every trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Coherent { re: f64, im: f64 },
    Fock { n: usize },
    /// Even superposition of |α⟩ and |−α⟩.
    Cat { re: f64, im: f64 },
    /// Explicit `[re, im]` amplitudes, normalized on use.
    Custom { amplitudes: Vec<[f64; 2]> },
}

impl InitialState {
    pub fn build(&self, dim: usize) -> Result<StateVector> {
        match self {
            InitialState::Coherent { re, im } => coherent_state(dim, C64::new(*re, *im)),
            InitialState::Fock { n } => fock_state(dim, *n),
            InitialState::Cat { re, im } => cat_state(dim, C64::new(*re, *im)),
            InitialState::Custom { amplitudes } => {
                if amplitudes.len() != dim {
                    return Err(Error::Dimension(format!(
                        "{} custom amplitudes for a basis of {dim} levels",
                        amplitudes.len()
                    )));
                }
                StateVector::from_amplitudes(CVector::from_iterator(
                    dim,
                    amplitudes.iter().map(|[r, i]| C64::new(*r, *i)),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub trajectories: usize,
    pub base_seed: u64,
    pub integrator: IntegratorConfig,
    pub initial: InitialState,
    /// Worker threads; 0 uses the global rayon pool.
    #[serde(default)]
    pub workers: usize,
    /// Times at which the ensemble density matrix is accumulated.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Times at which every trajectory draws one Fock-basis outcome.
    #[serde(default)]
    pub measurement_times: Vec<f64>,
    /// Keep every trajectory's observable series in the result.
    #[serde(default)]
    pub keep_trajectories: bool,
    /// Keep every trajectory's final state in the result.
    #[serde(default)]
    pub keep_final_states: bool,
}

impl EnsembleConfig {
    pub fn new(trajectories: usize, base_seed: u64, integrator: IntegratorConfig, initial: InitialState) -> Self {
        Self {
            trajectories,
            base_seed,
            integrator,
            initial,
            workers: 0,
            snapshot_times: Vec::new(),
            measurement_times: Vec::new(),
            keep_trajectories: false,
            keep_final_states: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::Parameter("ensemble needs at least one trajectory".into()));
        }
        self.integrator.validate()
    }

    /// Recorded sample index closest to time `t`.
    fn sample_index(&self, t: f64) -> usize {
        let dt_sample = self.integrator.dt * self.integrator.record_stride as f64;
        (t / dt_sample).round().max(0.0) as usize
    }
}

/// Per-trajectory seed: a SplitMix64 finalizer applied to
/// `base_seed + index·φ64`. For fixed `base_seed` the map is a bijection of
/// the index, so seeds never collide.
pub fn trajectory_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hermitian, unit-trace, positive semi-definite complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates Hermiticity (1e-12), trace (1e-10) and positivity (−1e-10).
    pub fn new(m: CMatrix) -> Result<Self> {
        let rho = Self(m);
        rho.validate()?;
        Ok(rho)
    }

    pub fn from_matrix_unchecked(m: CMatrix) -> Self {
        Self(m)
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        Self(psi.projector())
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.0;
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        let herm = crate::max_abs(&(m - m.adjoint()));
        if herm > 1e-12 {
            return Err(Error::Parameter(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Parameter(format!("density matrix trace {tr}")));
        }
        let min_ev = self.eigenvalues()[0];
        if min_ev < -1e-10 {
            return Err(Error::Parameter(format!("negative eigenvalue {min_ev:.3e}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    pub fn expectation(&self, op: &CMatrix) -> C64 {
        (op * &self.0).trace()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.0)
    }

    pub fn occupations(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.0[(n, n)].re).collect()
    }

    /// `{"dim": N, "data": [[re, im], ...]}` in row-major order.
    pub fn to_json(&self) -> serde_json::Value {
        let n = self.dim();
        let data: Vec<[f64; 2]> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| [self.0[(i, j)].re, self.0[(i, j)].im])
            .collect();
        serde_json::json!({ "dim": n, "data": data })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            dim: usize,
            data: Vec<[f64; 2]>,
        }
        let raw: Raw = serde_json::from_value(v.clone())?;
        if raw.data.len() != raw.dim * raw.dim {
            return Err(Error::Dimension(format!(
                "{} entries for dimension {}",
                raw.data.len(),
                raw.dim
            )));
        }
        Self::new(CMatrix::from_fn(raw.dim, raw.dim, |i, j| {
            let [re, im] = raw.data[i * raw.dim + j];
            C64::new(re, im)
        }))
    }
}

/// ρ = (1/M) Σ_k |ψ_k⟩⟨ψ_k|.
pub fn density_matrix(states: &[StateVector]) -> Result<DensityMatrix> {
    let first = states
        .first()
        .ok_or_else(|| Error::Parameter("no states to average".into()))?;
    let d = first.dim();
    let mut acc = CMatrix::zeros(d, d);
    for s in states {
        if s.dim() != d {
            return Err(Error::Dimension(format!(
                "state of dimension {} in an ensemble of dimension {d}",
                s.dim()
            )));
        }
        acc += s.projector();
    }
    Ok(DensityMatrix(acc / C64::new(states.len() as f64, 0.0)))
}

/// Ensemble averages and their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub trajectories: usize,
    pub times: Vec<f64>,
    pub mean: Vec<ObservableBundle>,
    /// Sample standard deviation / sqrt(M) of every field.
    pub stderr: Vec<ObservableBundle>,
    /// M-averaged |⟨n|ψ⟩|² at every sampled time.
    pub occupation: Vec<Vec<f64>>,
    /// (time, ensemble ρ) at the requested snapshot times.
    pub snapshots: Vec<(f64, DensityMatrix)>,
    /// (time, one Fock outcome per trajectory in index order).
    pub measurements: Vec<(f64, Vec<usize>)>,
    pub trajectory_bundles: Option<Vec<Vec<ObservableBundle>>>,
    pub final_states: Option<Vec<StateVector>>,
    pub seeds: Vec<u64>,
}

impl EnsembleStats {
    /// Series of one field's mean, selected by closure.
    pub fn mean_series(&self, f: impl Fn(&ObservableBundle) -> f64) -> Vec<f64> {
        self.mean.iter().map(f).collect()
    }

    pub fn stderr_series(&self, f: impl Fn(&ObservableBundle) -> f64) -> Vec<f64> {
        self.stderr.iter().map(f).collect()
    }
}

struct TrajectoryOutput {
    bundles: Vec<ObservableBundle>,
    occupation: Vec<Vec<f64>>,
    snapshots: Vec<CVector>,
    measurements: Vec<usize>,
    final_state: StateVector,
}

/// Trajectories simulated per parallel batch before merging.
const BATCH: usize = 256;

pub fn run_ensemble(cfg: &EnsembleConfig, ops: &OperatorSet) -> Result<EnsembleStats> {
    cfg.validate()?;
    let initial = cfg.initial.build(ops.dim)?;
    initial.check_health(cfg.integrator.tail_tol)?;
    for w in cfg.integrator.step_warnings(ops) {
        log::warn!("{w}");
    }
    if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        pool.install(|| run_ensemble_inner(cfg, ops, &initial))
    } else {
        run_ensemble_inner(cfg, ops, &initial)
    }
}

fn run_ensemble_inner(cfg: &EnsembleConfig, ops: &OperatorSet, initial: &StateVector) -> Result<EnsembleStats> {
    let snapshot_idx: Vec<usize> = cfg.snapshot_times.iter().map(|t| cfg.sample_index(*t)).collect();
    let measure_idx: Vec<usize> = cfg.measurement_times.iter().map(|t| cfg.sample_index(*t)).collect();
    let n_samples = cfg.integrator.n_steps() / cfg.integrator.record_stride + 1;
    for (&i, t) in snapshot_idx.iter().chain(&measure_idx).zip(cfg.snapshot_times.iter().chain(&cfg.measurement_times)) {
        if i >= n_samples {
            return Err(Error::Parameter(format!("requested time {t} lies beyond t_end")));
        }
    }

    let d = ops.dim;
    let mut acc = Accumulator::new(n_samples, d, snapshot_idx.len());
    let mut measurements: Vec<Vec<usize>> = vec![Vec::with_capacity(cfg.trajectories); measure_idx.len()];
    let mut kept_bundles = cfg.keep_trajectories.then(Vec::new);
    let mut kept_states = cfg.keep_final_states.then(Vec::new);
    let seeds: Vec<u64> = (0..cfg.trajectories as u64).map(|i| trajectory_seed(cfg.base_seed, i)).collect();

    for start in (0..cfg.trajectories).step_by(BATCH) {
        let end = (start + BATCH).min(cfg.trajectories);
        let outputs: Vec<Result<TrajectoryOutput>> = (start..end)
            .into_par_iter()
            .map(|index| {
                run_one(cfg, ops, initial, seeds[index], &snapshot_idx, &measure_idx)
                    .map_err(|e| Error::Trajectory { index, source: Box::new(e) })
            })
            .collect();
        for out in outputs {
            let out = out?;
            acc.push(&out);
            for (k, m) in out.measurements.iter().enumerate() {
                measurements[k].push(*m);
            }
            if let Some(v) = kept_bundles.as_mut() {
                v.push(out.bundles);
            }
            if let Some(v) = kept_states.as_mut() {
                v.push(out.final_state);
            }
        }
    }

    let m = cfg.trajectories as f64;
    let times: Vec<f64> = acc.times.clone();
    let mut mean = Vec::with_capacity(n_samples);
    let mut stderr = Vec::with_capacity(n_samples);
    for (k, t) in times.iter().enumerate() {
        let mut mu = [0.0; 9];
        let mut se = [0.0; 9];
        for f in 0..9 {
            mu[f] = acc.mean[k][f];
            se[f] = if cfg.trajectories > 1 {
                (acc.m2[k][f] / (m - 1.0) / m).sqrt()
            } else {
                0.0
            };
        }
        mean.push(ObservableBundle::from_values(*t, mu));
        stderr.push(ObservableBundle::from_values(*t, se));
    }
    let occupation = acc
        .occupation
        .into_iter()
        .map(|row| row.into_iter().map(|v| v / m).collect())
        .collect();
    let snapshots = acc
        .rho
        .into_iter()
        .zip(&snapshot_idx)
        .map(|(r, &i)| (times[i], DensityMatrix(r / C64::new(m, 0.0))))
        .collect();
    let measurements = measure_idx.iter().map(|&i| times[i]).zip(measurements).collect();

    Ok(EnsembleStats {
        trajectories: cfg.trajectories,
        times,
        mean,
        stderr,
        occupation,
        snapshots,
        measurements,
        trajectory_bundles: kept_bundles,
        final_states: kept_states,
        seeds,
    })
}

fn run_one(
    cfg: &EnsembleConfig,
    ops: &OperatorSet,
    initial: &StateVector,
    seed: u64,
    snapshot_idx: &[usize],
    measure_idx: &[usize],
) -> Result<TrajectoryOutput> {
    let mut rng = TrajectoryRng::seed_from_u64(seed);
    let mut measure_rng = TrajectoryRng::seed_from_u64(seed);
    measure_rng.set_stream(1);

    let mut occupation = Vec::new();
    let mut snapshots = vec![CVector::zeros(0); snapshot_idx.len()];
    let mut measurements = vec![0usize; measure_idx.len()];
    let record = run_trajectory_with_rng(initial, ops, &cfg.integrator, &mut rng, seed, |k, _t, psi| {
        let probs = psi.fock_probabilities();
        for (slot, _) in snapshot_idx.iter().enumerate().filter(|(_, &i)| i == k) {
            snapshots[slot] = psi.amplitudes().clone();
        }
        for (slot, _) in measure_idx.iter().enumerate().filter(|(_, &i)| i == k) {
            measurements[slot] = sample_index(&probs, measure_rng.random::<f64>());
        }
        occupation.push(probs);
    })?;
    Ok(TrajectoryOutput {
        bundles: record.bundles,
        occupation,
        snapshots,
        measurements,
        final_state: record.final_state,
    })
}

/// Inverse-CDF draw from a discrete distribution that sums to one.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if target < cum {
            return i;
        }
    }
    probs.len() - 1
}

/// Welford accumulation in trajectory-index order.
struct Accumulator {
    count: f64,
    times: Vec<f64>,
    mean: Vec<[f64; 9]>,
    m2: Vec<[f64; 9]>,
    occupation: Vec<Vec<f64>>,
    rho: Vec<CMatrix>,
}

impl Accumulator {
    fn new(n_samples: usize, dim: usize, n_snapshots: usize) -> Self {
        Self {
            count: 0.0,
            times: Vec::new(),
            mean: vec![[0.0; 9]; n_samples],
            m2: vec![[0.0; 9]; n_samples],
            occupation: vec![vec![0.0; dim]; n_samples],
            rho: vec![CMatrix::zeros(dim, dim); n_snapshots],
        }
    }

    fn push(&mut self, out: &TrajectoryOutput) {
        self.count += 1.0;
        if self.times.is_empty() {
            self.times = out.bundles.iter().map(|b| b.t).collect();
        }
        for (k, b) in out.bundles.iter().enumerate() {
            let v = b.values();
            for f in 0..9 {
                let delta = v[f] - self.mean[k][f];
                self.mean[k][f] += delta / self.count;
                self.m2[k][f] += delta * (v[f] - self.mean[k][f]);
            }
        }
        for (row, probs) in self.occupation.iter_mut().zip(&out.occupation) {
            for (a, p) in row.iter_mut().zip(probs) {
                *a += p;
            }
        }
        for (r, psi) in self.rho.iter_mut().zip(&out.snapshots) {
            *r += psi * psi.adjoint();
        }
    }
}

/// Phase-space grid for the coherent-mixture fit: a square of half-width
/// `half_extent` around `center` with the given spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureGrid {
    pub center: [f64; 2],
    pub half_extent: f64,
    pub spacing: f64,
}

impl MixtureGrid {
    pub fn points(&self) -> Vec<C64> {
        let n = (self.half_extent / self.spacing).round() as i64;
        let mut pts = Vec::new();
        for i in -n..=n {
            for j in -n..=n {
                pts.push(C64::new(
                    self.center[0] + i as f64 * self.spacing,
                    self.center[1] + j as f64 * self.spacing,
                ));
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MixtureFit {
    pub purity: f64,
    /// Frobenius residual ‖ρ − Σ w_i |α_i⟩⟨α_i|‖.
    pub residual: f64,
    /// Non-zero weights with their grid points.
    pub weights: Vec<(C64, f64)>,
    pub total_weight: f64,
    /// Weighted mean of |α|² over the fitted mixture.
    pub mean_abs_alpha_sq: f64,
    pub warnings: Vec<String>,
}

/// Purity and the best non-negative mixture of coherent projectors on a grid.
pub fn purity_and_coherent_overlap(rho: &DensityMatrix, grid: &MixtureGrid) -> Result<MixtureFit> {
    if !(grid.spacing > 0.0 && grid.half_extent >= 0.0) {
        return Err(Error::Parameter("grid spacing must be positive".into()));
    }
    let d = rho.dim();
    let pts = grid.points();
    let vecs: Vec<CVector> = pts
        .iter()
        .map(|a| {
            let v = crate::model::coherent_amplitudes(d, *a);
            let n = v.norm();
            v / C64::new(n, 0.0)
        })
        .collect();
    let k = pts.len();
    // Gram of the projectors: Tr(P_i P_j) = |⟨α_i|α_j⟩|²
    let gram = nalgebra::DMatrix::from_fn(k, k, |i, j| vecs[i].dotc(&vecs[j]).norm_sqr());
    let m = rho.matrix();
    let atb = nalgebra::DVector::from_fn(k, |i, _| vecs[i].dotc(&(m * &vecs[i])).re);
    let w = nnls_gram(&gram, &atb, 20 * k);

    let mut fitted = CMatrix::zeros(d, d);
    let mut weights = Vec::new();
    let mut total = 0.0;
    let mut moment = 0.0;
    for (i, wi) in w.iter().enumerate() {
        if *wi > 0.0 {
            fitted += &vecs[i] * vecs[i].adjoint() * C64::new(*wi, 0.0);
            weights.push((pts[i], *wi));
            total += wi;
            moment += wi * pts[i].norm_sqr();
        }
    }
    let residual = (m - fitted).norm();
    let mut warnings = Vec::new();
    if grid.spacing > MIXTURE_MAX_SPACING {
        warnings.push(format!(
            "grid spacing {} exceeds the coherent-state width {MIXTURE_MAX_SPACING}; residual {residual:.3e} may be dominated by discretization",
            grid.spacing
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(MixtureFit {
        purity: rho.purity(),
        residual,
        weights,
        total_weight: total,
        mean_abs_alpha_sq: if total > 0.0 { moment / total } else { 0.0 },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::oracle::thermal_state;
    use approx::assert_abs_diff_eq;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let s: std::collections::HashSet<u64> = (0..100_000).map(|i| trajectory_seed(7, i)).collect();
        assert_eq!(s.len(), 100_000);
        assert_eq!(trajectory_seed(7, 3), trajectory_seed(7, 3));
        assert_ne!(trajectory_seed(7, 3), trajectory_seed(8, 3));
    }

    #[test]
    fn density_matrix_examples() {
        let rho = density_matrix(&[fock_state(4, 0).unwrap()]).unwrap();
        assert_eq!(rho.occupations(), vec![1.0, 0.0, 0.0, 0.0]);
        let rho = density_matrix(&[fock_state(4, 0).unwrap(), fock_state(4, 1).unwrap()]).unwrap();
        assert_eq!(rho.occupations(), vec![0.5, 0.5, 0.0, 0.0]);
        assert!(rho.validate().is_ok());
        assert!(density_matrix(&[]).is_err());
        assert!(density_matrix(&[fock_state(4, 0).unwrap(), fock_state(5, 0).unwrap()]).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let mut m = CMatrix::identity(2, 2) * C64::new(0.5, 0.0);
        assert!(DensityMatrix::new(m.clone()).is_ok());
        m[(0, 1)] = C64::new(0.0, 0.1);
        assert!(DensityMatrix::new(m.clone()).is_err());
        let neg = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(1.2, 0.0), C64::new(-0.2, 0.0)]));
        assert!(DensityMatrix::new(neg).is_err());
    }

    #[test]
    fn json_layout_roundtrip() {
        let rho = DensityMatrix::from_pure(&coherent_state(12, C64::new(0.3, 0.2)).unwrap());
        let v = rho.to_json();
        assert_eq!(v["dim"], 12);
        assert_eq!(v["data"].as_array().unwrap().len(), 144);
        let back = DensityMatrix::from_json(&v).unwrap();
        assert!(crate::max_abs(&(back.matrix() - rho.matrix())) < 1e-15);
    }

    fn small_cfg(m: usize, initial: InitialState) -> EnsembleConfig {
        EnsembleConfig::new(
            m,
            11,
            IntegratorConfig {
                dt: 0.01,
                t_end: 1.0,
                record_stride: 10,
                ..Default::default()
            },
            initial,
        )
    }

    #[test]
    fn single_trajectory_has_zero_stderr() {
        let ops = OperatorSet::new(ModelParams::with_n_bar(0.2, 0.5), 20).unwrap();
        let cfg = small_cfg(1, InitialState::Coherent { re: 1.0, im: 0.0 });
        let stats = run_ensemble(&cfg, &ops).unwrap();
        let mut rng = TrajectoryRng::seed_from_u64(trajectory_seed(11, 0));
        let init = cfg.initial.build(20).unwrap();
        let rec = run_trajectory_with_rng(&init, &ops, &cfg.integrator, &mut rng, 0, |_, _, _| {}).unwrap();
        assert_eq!(stats.mean, rec.bundles);
        assert!(stats.stderr.iter().all(|b| b.values().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn vacuum_stays_empty_at_zero_temperature() {
        let ops = OperatorSet::new(ModelParams::default(), 10).unwrap();
        let stats = run_ensemble(&small_cfg(8, InitialState::Fock { n: 0 }), &ops).unwrap();
        assert!(stats.mean.iter().all(|b| b.n_mean == 0.0));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let ops = OperatorSet::new(ModelParams::with_n_bar(0.3, 0.5), 20).unwrap();
        let mut cfg = small_cfg(40, InitialState::Fock { n: 1 });
        cfg.snapshot_times = vec![0.5, 1.0];
        cfg.measurement_times = vec![1.0];
        cfg.workers = 1;
        let a = run_ensemble(&cfg, &ops).unwrap();
        cfg.workers = 4;
        let b = run_ensemble(&cfg, &ops).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn histogram_is_normalized() {
        let ops = OperatorSet::new(ModelParams::with_n_bar(0.3, 0.5), 20).unwrap();
        let stats = run_ensemble(&small_cfg(16, InitialState::Cat { re: 1.0, im: 0.0 }), &ops).unwrap();
        for row in &stats.occupation {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn snapshot_matches_final_states() {
        let ops = OperatorSet::new(ModelParams::with_n_bar(0.3, 0.5), 20).unwrap();
        let mut cfg = small_cfg(12, InitialState::Coherent { re: 0.5, im: 0.5 });
        cfg.snapshot_times = vec![1.0];
        cfg.keep_final_states = true;
        let stats = run_ensemble(&cfg, &ops).unwrap();
        let rho = density_matrix(stats.final_states.as_ref().unwrap()).unwrap();
        assert!(crate::max_abs(&(rho.matrix() - stats.snapshots[0].1.matrix())) < 1e-14);
        assert!(stats.snapshots[0].1.validate().is_ok());
    }

    #[test]
    fn trajectory_error_carries_index() {
        let ops = OperatorSet::new(ModelParams::with_n_bar(1.0, 3.0), 12).unwrap();
        let mut cfg = small_cfg(4, InitialState::Fock { n: 5 });
        cfg.integrator.t_end = 20.0;
        match run_ensemble(&cfg, &ops) {
            Err(Error::Trajectory { index, .. }) => assert!(index < 4),
            other => panic!("expected trajectory error, got {other:?}"),
        }
    }

    #[test]
    fn custom_initial_state_dimension_checked() {
        let s = InitialState::Custom { amplitudes: vec![[1.0, 0.0], [0.0, 1.0]] };
        assert!(s.build(2).is_ok());
        assert!(s.build(3).is_err());
    }

    #[test]
    fn mixture_fit_recovers_coherent_state() {
        let alpha = C64::new(1.0, -0.5);
        let rho = DensityMatrix::from_pure(&coherent_state(30, alpha).unwrap());
        let grid = MixtureGrid { center: [0.0, 0.0], half_extent: 2.0, spacing: 0.5 };
        let fit = purity_and_coherent_overlap(&rho, &grid).unwrap();
        assert!(fit.residual < 1e-6, "{}", fit.residual);
        let (best, w) = fit.weights.iter().cloned().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!((best - alpha).norm() < 1e-12);
        assert!(w > 0.999);
        assert_abs_diff_eq!(fit.purity, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixture_fit_on_thermal_state() {
        let rho = thermal_state(&ModelParams::with_n_bar(0.2, 0.5), 30).unwrap();
        let grid = MixtureGrid { center: [0.0, 0.0], half_extent: 3.0, spacing: 0.25 };
        let fit = purity_and_coherent_overlap(&rho, &grid).unwrap();
        assert!(fit.residual < 0.02, "{}", fit.residual);
        assert!((fit.mean_abs_alpha_sq - 0.5).abs() < 0.1, "{}", fit.mean_abs_alpha_sq);
    }

    #[test]
    fn mixture_fit_rejects_cat_state() {
        let rho = DensityMatrix::from_pure(&cat_state(30, C64::new(2.0, 0.0)).unwrap());
        let grid = MixtureGrid { center: [0.0, 0.0], half_extent: 3.0, spacing: 0.25 };
        let fit = purity_and_coherent_overlap(&rho, &grid).unwrap();
        assert!(fit.residual > 0.1, "{}", fit.residual);
    }

    #[test]
    fn coarse_grid_warns() {
        let rho = thermal_state(&ModelParams::with_n_bar(0.2, 0.5), 30).unwrap();
        let grid = MixtureGrid { center: [0.0, 0.0], half_extent: 3.0, spacing: 1.5 };
        let fit = purity_and_coherent_overlap(&rho, &grid).unwrap();
        assert_eq!(fit.warnings.len(), 1);
    }
}
