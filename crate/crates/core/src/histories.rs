//! Phase-space histories: coherent-state cell projectors and the decoherence
//! functional under the Lindblad propagator.
//!
//! A cell is an axis-aligned rectangle in the α plane. With
//! `α = (σp q + iσq p)/ħ` the Jacobian is `dq dp = 2ħ d²α`, so a cell of
//! α-area `A` covers `2A` in units of ħ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::DensityMatrix;
use crate::error::{Error, Result};
use crate::model::{coherent_amplitudes, ModelParams, OperatorSet};
use crate::oracle::{Generator, LindbladPropagatorConfig, TRACE_DRIFT_TOL};
use crate::{CMatrix, C64};

pub const MAX_HISTORY_DEPTH: usize = 3;
pub const MAX_CELLS_PER_TIME: usize = 16;

/// Label of the implicit complement cell in history strings.
pub const COMPLEMENT_LABEL: &str = "~";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseCell {
    pub center: [f64; 2],
    pub half_width_re: f64,
    pub half_width_im: f64,
    /// Quadrature spacing along each axis.
    pub spacing: f64,
}

impl PhaseCell {
    /// Square cell covering `area_over_hbar` units of ħ, with quadrature
    /// spacing `half_width / refine`.
    pub fn square(center: C64, area_over_hbar: f64, refine: usize) -> Self {
        let w = (area_over_hbar / 8.0).sqrt();
        Self {
            center: [center.re, center.im],
            half_width_re: w,
            half_width_im: w,
            spacing: w / refine.max(1) as f64,
        }
    }

    pub fn center(&self) -> C64 {
        C64::new(self.center[0], self.center[1])
    }

    pub fn area_alpha(&self) -> f64 {
        4.0 * self.half_width_re * self.half_width_im
    }

    pub fn area_over_hbar(&self) -> f64 {
        2.0 * self.area_alpha()
    }

    pub fn contains(&self, alpha: C64) -> bool {
        (alpha.re - self.center[0]).abs() <= self.half_width_re
            && (alpha.im - self.center[1]).abs() <= self.half_width_im
    }

    /// True when the interiors do not intersect (shared edges are allowed).
    pub fn disjoint(&self, other: &PhaseCell) -> bool {
        let eps = 1e-12;
        (self.center[0] - other.center[0]).abs() >= self.half_width_re + other.half_width_re - eps
            || (self.center[1] - other.center[1]).abs() >= self.half_width_im + other.half_width_im - eps
    }

    pub fn moved_to(&self, center: C64) -> Self {
        Self {
            center: [center.re, center.im],
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width_re > 0.0 && self.half_width_im > 0.0) {
            return Err(Error::Parameter("cell half-widths must be positive".into()));
        }
        let limit = self.half_width_re.min(self.half_width_im) / 4.0;
        if !(self.spacing > 0.0) || self.spacing > limit * (1.0 + 1e-12) {
            return Err(Error::Quadrature(format!(
                "spacing {} exceeds a quarter of the smallest half-width ({limit})",
                self.spacing
            )));
        }
        Ok(())
    }

    /// Midpoint nodes along one axis: `n` equal sub-intervals no wider than
    /// the requested spacing.
    fn nodes(&self, center: f64, half_width: f64) -> (Vec<f64>, f64) {
        let n = ((2.0 * half_width / self.spacing) - 1e-9).ceil().max(1.0) as usize;
        let h = 2.0 * half_width / n as f64;
        let nodes = (0..n).map(|k| center - half_width + (k as f64 + 0.5) * h).collect();
        (nodes, h)
    }
}

/// Midpoint-rule approximation of `∫_cell |α⟩⟨α| d²α/π` on `dim` levels.
pub fn cell_projector(cell: &PhaseCell, dim: usize) -> Result<CMatrix> {
    cell.validate()?;
    let (xs, hx) = cell.nodes(cell.center[0], cell.half_width_re);
    let (ys, hy) = cell.nodes(cell.center[1], cell.half_width_im);
    let scale = (hx * hy / std::f64::consts::PI).sqrt();
    let cols: Vec<_> = ys
        .iter()
        .flat_map(|y| xs.iter().map(move |x| C64::new(*x, *y)))
        .map(|a| coherent_amplitudes(dim, a) * C64::new(scale, 0.0))
        .collect();
    let v = CMatrix::from_columns(&cols);
    Ok(&v * v.adjoint())
}

/// Cells at one time; the complement `I − ΣP` is appended when requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellPartition {
    pub cells: Vec<PhaseCell>,
    #[serde(default = "default_true")]
    pub complement: bool,
}

fn default_true() -> bool {
    true
}

impl CellPartition {
    pub fn new(cells: Vec<PhaseCell>) -> Self {
        Self { cells, complement: true }
    }

    pub fn len(&self) -> usize {
        self.cells.len() + usize::from(self.complement)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.cells.len()).map(|k| k.to_string()).collect();
        if self.complement {
            v.push(COMPLEMENT_LABEL.to_string());
        }
        v
    }

    pub fn projectors(&self, dim: usize) -> Result<Vec<CMatrix>> {
        let mut ps: Vec<CMatrix> = self
            .cells
            .par_iter()
            .map(|c| cell_projector(c, dim))
            .collect::<Result<_>>()?;
        if self.complement {
            let mut comp = CMatrix::identity(dim, dim);
            for p in &ps {
                comp -= p;
            }
            ps.push(comp);
        }
        Ok(ps)
    }

    /// Square grid of `n × n` adjacent square cells centred on `center`.
    pub fn grid(center: C64, n: usize, area_over_hbar: f64, refine: usize) -> Self {
        let proto = PhaseCell::square(C64::new(0.0, 0.0), area_over_hbar, refine);
        let step = 2.0 * proto.half_width_re;
        let off = 0.5 * (n as f64 - 1.0);
        let cells = (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| {
                proto.moved_to(center + C64::new((i as f64 - off) * step, (j as f64 - off) * step))
            })
            .collect();
        Self::new(cells)
    }
}

#[derive(Debug, Clone)]
pub struct HistorySpec {
    /// Strictly increasing projection times, the first one ≥ 0.
    pub times: Vec<f64>,
    pub partitions: Vec<CellPartition>,
    /// State at t = 0.
    pub initial: DensityMatrix,
}

impl HistorySpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n == 0 || n > MAX_HISTORY_DEPTH {
            return Err(Error::Parameter(format!(
                "history depth {n} outside 1..={MAX_HISTORY_DEPTH}"
            )));
        }
        if self.partitions.len() != n {
            return Err(Error::Parameter(format!(
                "{} partitions for {n} times",
                self.partitions.len()
            )));
        }
        if self.times[0] < 0.0 || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("history times must be strictly increasing and ≥ 0".into()));
        }
        for (k, part) in self.partitions.iter().enumerate() {
            if part.cells.len() > MAX_CELLS_PER_TIME {
                return Err(Error::Parameter(format!(
                    "{} cells at time index {k}, at most {MAX_CELLS_PER_TIME}",
                    part.cells.len()
                )));
            }
            if part.is_empty() {
                return Err(Error::Parameter(format!("no cells at time index {k}")));
            }
            for (i, a) in part.cells.iter().enumerate() {
                a.validate()?;
                if part.cells[..i].iter().any(|b| !a.disjoint(b)) {
                    return Err(Error::Parameter(format!(
                        "cell {i} at time index {k} overlaps an earlier cell"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of history strings.
    pub fn history_count(&self) -> usize {
        self.partitions.iter().map(CellPartition::len).product()
    }

    /// Per-time cell indices of history `index` (first time most significant).
    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.partitions.len()];
        for (k, p) in self.partitions.iter().enumerate().rev() {
            out[k] = index % p.len();
            index /= p.len();
        }
        out
    }

    pub fn labels(&self) -> Vec<String> {
        let per_time: Vec<Vec<String>> = self.partitions.iter().map(CellPartition::labels).collect();
        (0..self.history_count())
            .map(|h| {
                self.decode(h)
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| per_time[k][c].as_str())
                    .collect::<Vec<_>>()
                    .join("-")
            })
            .collect()
    }

    /// Cell at time `k` for a history's component, `None` for the complement.
    pub fn cell(&self, k: usize, c: usize) -> Option<&PhaseCell> {
        self.partitions[k].cells.get(c)
    }
}

/// D(a, a′) over history strings.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceMatrix {
    pub labels: Vec<String>,
    pub d: CMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suppression {
    pub a: String,
    pub b: String,
    pub ratio: f64,
}

impl DecoherenceMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.d[(i, i)].re
    }

    pub fn hermiticity_error(&self) -> f64 {
        crate::max_abs(&(&self.d - self.d.adjoint()))
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..self.len()).map(|i| self.probability(i)).fold(f64::INFINITY, f64::min)
    }

    /// Σ over all pairs, which equals Tr ρ at the last time when every
    /// partition includes its complement.
    pub fn total(&self) -> C64 {
        self.d.iter().sum()
    }

    pub fn suppression_ratio(&self, i: usize, j: usize) -> f64 {
        let den = (self.probability(i) * self.probability(j)).sqrt();
        self.d[(i, j)].norm() / den
    }

    /// Off-diagonal ratios between histories whose probabilities both reach
    /// `floor`, sorted by decreasing ratio.
    pub fn suppression_table(&self, floor: f64) -> Vec<Suppression> {
        let live: Vec<usize> = (0..self.len()).filter(|&i| self.probability(i) >= floor).collect();
        let mut out = Vec::new();
        for (x, &i) in live.iter().enumerate() {
            for &j in &live[x + 1..] {
                out.push(Suppression {
                    a: self.labels[i].clone(),
                    b: self.labels[j].clone(),
                    ratio: self.suppression_ratio(i, j),
                });
            }
        }
        out.sort_by(|p, q| q.ratio.total_cmp(&p.ratio));
        out
    }

    pub fn max_suppression(&self, floor: f64) -> Option<Suppression> {
        self.suppression_table(floor).into_iter().next()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let n = self.len();
        let data: Vec<[f64; 2]> = self.d.transpose().iter().map(|z| [z.re, z.im]).collect();
        debug_assert_eq!(data.len(), n * n);
        serde_json::json!({ "labels": self.labels, "dim": n, "data": data })
    }

    pub fn suppression_csv(&self, floor: f64) -> String {
        let mut s = String::from("history_a,history_b,ratio\n");
        for e in self.suppression_table(floor) {
            s.push_str(&format!("{},{},{:.9e}\n", e.a, e.b, e.ratio));
        }
        s
    }
}

struct PropagationCtx<'a> {
    gen: &'a Generator,
    cfg: &'a LindbladPropagatorConfig,
}

impl PropagationCtx<'_> {
    fn propagate(&self, x: &CMatrix, duration: f64) -> Result<CMatrix> {
        let (n, dt) = self.cfg.steps_for(duration);
        let y = self.gen.propagate(x, dt, n);
        let drift = (y.trace() - x.trace()).norm();
        let tol = TRACE_DRIFT_TOL * (n.max(1) as f64) * x.norm().max(1.0);
        if drift > tol {
            return Err(Error::StepSize(format!(
                "trace drifted by {drift:.3e} over {n} steps of {dt}"
            )));
        }
        Ok(y)
    }
}

/// D(a, a′) = Tr(P_{a_n} K[… P_{a_1} K[ρ₀] P_{a′_1} …] P_{a′_n}).
///
/// Prefix pairs are expanded level by level; each level is evaluated in
/// parallel and collected in index order.
pub fn decoherence_functional(
    spec: &HistorySpec,
    ops: &OperatorSet,
    cfg: &LindbladPropagatorConfig,
) -> Result<DecoherenceMatrix> {
    spec.validate()?;
    cfg.validate(&ops.params)?;
    if spec.initial.dim() != ops.dim {
        return Err(Error::Dimension(format!(
            "initial state of dimension {} with {} levels",
            spec.initial.dim(),
            ops.dim
        )));
    }
    let gen = Generator::new(ops);
    let ctx = PropagationCtx { gen: &gen, cfg };
    let projectors: Vec<Vec<CMatrix>> = spec
        .partitions
        .iter()
        .map(|p| p.projectors(ops.dim))
        .collect::<Result<_>>()?;

    let rho1 = ctx
        .propagate(spec.initial.matrix(), spec.times[0])
        .map_err(|e| Error::History { index: 0, source: Box::new(e) })?;
    // (prefix a, prefix a′, K-propagated sandwich)
    let mut level: Vec<(usize, usize, CMatrix)> = vec![(0, 0, rho1)];
    let depth = spec.times.len();
    for k in 0..depth - 1 {
        let ps = &projectors[k];
        let c = ps.len();
        let duration = spec.times[k + 1] - spec.times[k];
        let width_after = spec.partitions[k + 1..].iter().map(CellPartition::len).product::<usize>();
        level = level
            .par_iter()
            .flat_map_iter(|(i, j, x)| {
                (0..c * c).map(move |ab| (i * c + ab / c, j * c + ab % c, x))
            })
            .map(|(i, j, x)| {
                let a = i % c;
                let b = j % c;
                let y = &ps[a] * x * &ps[b];
                ctx.propagate(&y, duration)
                    .map(|z| (i, j, z))
                    .map_err(|e| Error::History { index: i * width_after, source: Box::new(e) })
            })
            .collect::<Result<_>>()?;
    }

    let ps = &projectors[depth - 1];
    let c = ps.len();
    let n = spec.history_count();
    let entries: Vec<(usize, usize, C64)> = level
        .par_iter()
        .flat_map_iter(|(i, j, x)| {
            let right: Vec<CMatrix> = ps.iter().map(|p| x * p).collect();
            let mut out = Vec::with_capacity(c * c);
            for (a, pa) in ps.iter().enumerate() {
                for (b, r) in right.iter().enumerate() {
                    // Tr(P_a · X P_b)
                    let tr: C64 = pa.transpose().component_mul(r).iter().sum();
                    out.push((i * c + a, j * c + b, tr));
                }
            }
            out
        })
        .collect();
    let mut d = CMatrix::zeros(n, n);
    for (i, j, v) in entries {
        d[(i, j)] = v;
    }
    Ok(DecoherenceMatrix {
        labels: spec.labels(),
        d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakingStep {
    pub time: f64,
    pub cell_label: String,
    /// Cell centre, `None` for the complement.
    pub cell_center: Option<[f64; 2]>,
    pub classical: [f64; 2],
    pub distance: Option<f64>,
    /// Distance within one cell width along both axes.
    pub within_cell_width: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakingReport {
    pub history: String,
    pub probability: f64,
    pub steps: Vec<PeakingStep>,
}

impl PeakingReport {
    pub fn follows_classical_path(&self) -> bool {
        self.steps.iter().all(|s| s.within_cell_width)
    }
}

/// Noise-free mean orbit α₀·exp(−(iω + γ/2)t).
pub fn classical_orbit(alpha0: C64, params: &ModelParams, t: f64) -> C64 {
    alpha0 * (C64::new(-0.5 * params.gamma, -params.omega) * t).exp()
}

/// Compares the most probable history against the damped classical orbit.
pub fn classical_peaking_report(
    d: &DecoherenceMatrix,
    spec: &HistorySpec,
    params: &ModelParams,
    alpha0: C64,
) -> PeakingReport {
    let best = (0..d.len())
        .max_by(|&i, &j| d.probability(i).total_cmp(&d.probability(j)))
        .unwrap_or(0);
    let steps = spec
        .decode(best)
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let t = spec.times[k];
            let orbit = classical_orbit(alpha0, params, t);
            let cell = spec.cell(k, c);
            let within = cell.is_some_and(|cell| {
                let off = cell.center() - orbit;
                off.re.abs() <= 2.0 * cell.half_width_re && off.im.abs() <= 2.0 * cell.half_width_im
            });
            PeakingStep {
                time: t,
                cell_label: spec.partitions[k].labels()[c].clone(),
                cell_center: cell.map(|c| c.center),
                classical: [orbit.re, orbit.im],
                distance: cell.map(|c| (c.center() - orbit).norm()),
                within_cell_width: within,
            }
        })
        .collect();
    PeakingReport {
        history: d.labels.get(best).cloned().unwrap_or_default(),
        probability: d.probability(best),
        steps,
    }
}

/// Two-time histories of an even cat `|α⟩ + |−α⟩`: one cell on each branch
/// at t = 0 and the same cells carried along the classical orbit to
/// t = `interval`. Returns the suppression ratio between the two branch
/// histories that end in the same cell, maximised over the two end cells.
pub fn cat_branch_suppression(
    ops: &OperatorSet,
    cfg: &LindbladPropagatorConfig,
    alpha: C64,
    area_over_hbar: f64,
    refine: usize,
    interval: f64,
) -> Result<f64> {
    let spec = cat_branch_spec(ops, alpha, area_over_hbar, refine, interval)?;
    let d = decoherence_functional(&spec, ops, cfg)?;
    let labels = spec.labels();
    let idx = |l: &str| labels.iter().position(|x| x == l).expect("label");
    let mut worst: f64 = 0.0;
    for end in ["0", "1"] {
        let i = idx(&format!("0-{end}"));
        let j = idx(&format!("1-{end}"));
        worst = worst.max(d.suppression_ratio(i, j));
    }
    Ok(worst)
}

pub fn cat_branch_spec(
    ops: &OperatorSet,
    alpha: C64,
    area_over_hbar: f64,
    refine: usize,
    interval: f64,
) -> Result<HistorySpec> {
    let rho = DensityMatrix::from_pure(&crate::model::cat_state(ops.dim, alpha)?);
    let at = |a: C64| PhaseCell::square(a, area_over_hbar, refine);
    let moved = classical_orbit(alpha, &ops.params, interval);
    Ok(HistorySpec {
        times: vec![0.0, interval],
        partitions: vec![
            CellPartition::new(vec![at(alpha), at(-alpha)]),
            CellPartition::new(vec![at(moved), at(-moved)]),
        ],
        initial: rho,
    })
}

/// Smallest interval on `grid` (ascending) at which the cat branch
/// suppression falls below `threshold`, refined by bisection between the
/// bracketing grid points.
pub fn decoherence_interval(
    ops: &OperatorSet,
    cfg: &LindbladPropagatorConfig,
    alpha: C64,
    area_over_hbar: f64,
    refine: usize,
    threshold: f64,
    grid: &[f64],
) -> Result<f64> {
    let eval = |t: f64| cat_branch_suppression(ops, cfg, alpha, area_over_hbar, refine, t);
    let mut lo = 0.0;
    let mut hi = None;
    for &t in grid {
        if eval(t)? < threshold {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let mut hi = hi.ok_or_else(|| {
        Error::Fit(format!("suppression never fell below {threshold} on the interval grid"))
    })?;
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? < threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaScanPoint {
    pub area_over_hbar: f64,
    pub max_ratio: f64,
}

/// Largest suppression ratio of a single-cell-per-branch history set as the
/// cell area shrinks toward ħ.
pub fn area_scan(
    ops: &OperatorSet,
    cfg: &LindbladPropagatorConfig,
    alpha: C64,
    interval: f64,
    areas: &[f64],
    refine: usize,
) -> Result<Vec<AreaScanPoint>> {
    areas
        .iter()
        .map(|&area| {
            let spec = cat_branch_spec(ops, alpha, area, refine, interval)?;
            let d = decoherence_functional(&spec, ops, cfg)?;
            let max_ratio = d
                .suppression_table(crate::thresholds::HISTORY_PROB_FLOOR)
                .first()
                .map_or(0.0, |s| s.ratio);
            Ok(AreaScanPoint { area_over_hbar: area, max_ratio })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::coherent_state;
    use crate::oracle::{hermitian_eigenvalues, thermal_state};

    fn ops(gamma: f64, n_bar: f64, dim: usize) -> OperatorSet {
        OperatorSet::new(ModelParams::with_n_bar(gamma, n_bar), dim).unwrap()
    }

    #[test]
    fn area_in_hbar_units() {
        let c = PhaseCell::square(C64::new(0.0, 0.0), 8.0, 4);
        assert!((c.half_width_re - 1.0).abs() < 1e-15);
        assert!((c.area_over_hbar() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_spacing_rejected() {
        let mut c = PhaseCell::square(C64::new(0.0, 0.0), 8.0, 4);
        c.spacing = 0.3;
        assert!(matches!(cell_projector(&c, 10), Err(Error::Quadrature(_))));
    }

    #[test]
    fn cells_cover_identity_on_thermal_state() {
        let dim = 30;
        let rho = thermal_state(&ModelParams::with_n_bar(0.2, 0.5), dim).unwrap();
        let part = CellPartition {
            complement: false,
            ..CellPartition::grid(C64::new(0.0, 0.0), 6, 8.0, 8)
        };
        let mut sum = CMatrix::zeros(dim, dim);
        for p in part.projectors(dim).unwrap() {
            sum += p;
        }
        let err = ((sum - CMatrix::identity(dim, dim)) * rho.matrix()).norm();
        assert!(err < 0.01, "{err}");
    }

    #[test]
    fn large_cell_captures_coherent_state() {
        let a0 = C64::new(1.0, 0.5);
        let cell = PhaseCell::square(a0, 2.0 * 4.0 * 3.0 * 3.0, 12);
        let p = cell_projector(&cell, 40).unwrap();
        let psi = coherent_state(40, a0).unwrap();
        assert!(psi.expectation(&p).re > 0.95);
    }

    #[test]
    fn projector_spectrum_bounded() {
        for refine in [4, 8] {
            let cell = PhaseCell::square(C64::new(0.5, 0.0), 8.0, refine);
            let p = cell_projector(&cell, 30).unwrap();
            assert!(crate::max_abs(&(&p - p.adjoint())) < 1e-14);
            let ev = hermitian_eigenvalues(&p);
            assert!(ev[0] > -1e-10);
            assert!(*ev.last().unwrap() <= 1.05);
        }
    }

    #[test]
    fn overlapping_cells_rejected() {
        let a = PhaseCell::square(C64::new(0.0, 0.0), 8.0, 4);
        let b = a.moved_to(C64::new(1.0, 0.0));
        let spec = HistorySpec {
            times: vec![1.0],
            partitions: vec![CellPartition::new(vec![a, b])],
            initial: thermal_state(&ModelParams::with_n_bar(0.2, 0.5), 25).unwrap(),
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn labels_and_decoding() {
        let a = PhaseCell::square(C64::new(0.0, 0.0), 8.0, 4);
        let spec = HistorySpec {
            times: vec![0.0, 1.0],
            partitions: vec![
                CellPartition::new(vec![a, a.moved_to(C64::new(2.0, 0.0))]),
                CellPartition::new(vec![a]),
            ],
            initial: thermal_state(&ModelParams::with_n_bar(0.2, 0.5), 25).unwrap(),
        };
        assert_eq!(spec.history_count(), 6);
        assert_eq!(spec.labels(), vec!["0-0", "0-~", "1-0", "1-~", "~-0", "~-~"]);
        assert_eq!(spec.decode(3), vec![1, 1]);
    }

    #[test]
    fn single_time_marginals() {
        let o = ops(0.2, 0.5, 25);
        let rho = DensityMatrix::from_pure(&coherent_state(25, C64::new(1.0, 0.0)).unwrap());
        let part = CellPartition::grid(C64::new(0.0, 0.0), 3, 8.0, 4);
        let spec = HistorySpec {
            times: vec![0.5],
            partitions: vec![part.clone()],
            initial: rho.clone(),
        };
        let cfg = LindbladPropagatorConfig { dt_oracle: 0.01, t_end: 1.0 };
        let d = decoherence_functional(&spec, &o, &cfg).unwrap();
        let rho_t = crate::oracle::evolve(&rho, &o, &cfg, &[0.5]).unwrap().remove(0);
        let ps = part.projectors(25).unwrap();
        for (a, p) in ps.iter().enumerate() {
            let prob = (p * rho_t.matrix() * p).trace().re;
            assert!((d.probability(a) - prob).abs() < 1e-10, "{} {}", d.probability(a), prob);
        }
        assert!((d.total() - C64::new(1.0, 0.0)).norm() < 1e-9);
        assert!(d.hermiticity_error() < 1e-10);
        let diag: f64 = (0..d.len()).map(|i| d.probability(i)).sum();
        assert!(diag > 0.0 && diag < 1.0, "{diag}");
    }

    #[test]
    fn two_time_invariants() {
        let o = ops(0.3, 1.0, 25);
        let rho = DensityMatrix::from_pure(&coherent_state(25, C64::new(1.0, 0.0)).unwrap());
        let part = CellPartition::grid(C64::new(0.0, 0.0), 2, 8.0, 4);
        let spec = HistorySpec {
            times: vec![0.0, 1.0],
            partitions: vec![part.clone(), part],
            initial: rho,
        };
        let cfg = LindbladPropagatorConfig { dt_oracle: 0.02, t_end: 1.0 };
        let d = decoherence_functional(&spec, &o, &cfg).unwrap();
        assert!(d.hermiticity_error() < 1e-10);
        assert!(d.min_diagonal() > -1e-10);
        assert!((d.total() - C64::new(1.0, 0.0)).norm() < 1e-9);
        let json = d.to_json();
        assert_eq!(json["labels"].as_array().unwrap().len(), 25);
    }

    #[test]
    fn peaking_follows_orbit() {
        let o = ops(0.1, 0.2, 30);
        let a0 = C64::new(2.0, 0.0);
        let rho = DensityMatrix::from_pure(&coherent_state(30, a0).unwrap());
        let t2 = 0.3;
        let part = CellPartition::grid(C64::new(0.0, 0.0), 4, 8.0, 4);
        let spec = HistorySpec {
            times: vec![0.0, t2],
            partitions: vec![part.clone(), part],
            initial: rho,
        };
        let cfg = LindbladPropagatorConfig { dt_oracle: 0.01, t_end: t2 };
        let d = decoherence_functional(&spec, &o, &cfg).unwrap();
        let rep = classical_peaking_report(&d, &spec, &o.params, a0);
        assert!(rep.follows_classical_path(), "{rep:?}");
    }
}
