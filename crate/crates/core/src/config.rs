//! JSON experiment configuration for the `qsd` binary.
//!
//! Every section has defaults so a config file only needs to name what it
//! changes. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleConfig, InitialState};
use crate::error::{Error, Result};
use crate::histories::CellPartition;
use crate::model::{ModelParams, OperatorSet};
use crate::oracle::LindbladPropagatorConfig;
use crate::qsd::IntegratorConfig;
use crate::thresholds::TAIL_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    /// Thermal occupation; when present it overrides `params.temperature`.
    pub n_bar: Option<f64>,
    pub fock: FockConfig,
    pub integrator: IntegratorSection,
    pub ensemble: EnsembleSection,
    pub initial: InitialState,
    pub oracle: LindbladPropagatorConfig,
    pub localize: LocalizeConfig,
    pub thermalize: ThermalizeConfig,
    pub oracle_compare: OracleCompareConfig,
    pub histories: HistoriesConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::default(),
            n_bar: None,
            fock: FockConfig::default(),
            integrator: IntegratorSection::default(),
            ensemble: EnsembleSection::default(),
            initial: InitialState::Coherent { re: 1.0, im: 0.0 },
            oracle: LindbladPropagatorConfig::default(),
            localize: LocalizeConfig::default(),
            thermalize: ThermalizeConfig::default(),
            oracle_compare: OracleCompareConfig::default(),
            histories: HistoriesConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockConfig {
    pub n_f: usize,
    pub tail_tol: f64,
}

impl Default for FockConfig {
    fn default() -> Self {
        Self { n_f: 40, tail_tol: TAIL_TOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self { dt: 1e-3, t_end: 10.0, record_stride: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    #[serde(alias = "M")]
    pub trajectories: usize,
    pub base_seed: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { trajectories: 100, base_seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizeConfig {
    /// The decay fit uses the leading samples above this fraction of the
    /// initial M Δα².
    pub floor_fraction: f64,
    /// Separation multiplier of the second cat run.
    pub sweep_factor: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self { floor_fraction: 0.05, sweep_factor: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalizeConfig {
    /// Start of the late-time window for the occupation average.
    pub late_start: f64,
    /// Times at which one Fock outcome per trajectory is drawn.
    pub measurement_times: Vec<f64>,
    /// Bins 0..bins−1 are compared individually, the rest are pooled.
    pub bins: usize,
}

impl Default for ThermalizeConfig {
    fn default() -> Self {
        Self {
            late_start: 20.0,
            measurement_times: vec![24.0, 28.0, 32.0, 36.0, 40.0],
            bins: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleCompareConfig {
    pub time: f64,
    /// Independent seed replicas averaged for each ensemble size.
    pub replicas: usize,
    /// Step size and ensemble size of the dt-halving comparison.
    pub coarse_dt: f64,
    pub coarse_trajectories: usize,
}

impl Default for OracleCompareConfig {
    fn default() -> Self {
        Self { time: 5.0, replicas: 8, coarse_dt: 0.005, coarse_trajectories: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistoriesConfig {
    /// Projection times; when empty, `[0, intervals·t_l]`.
    pub times: Vec<f64>,
    /// Cells per time; when empty, one cell on each branch of the initial
    /// state, carried along the classical orbit.
    pub partitions: Vec<CellPartition>,
    pub cell_area_over_hbar: f64,
    pub intervals: f64,
    /// Quadrature nodes per half-width.
    pub refine: usize,
    /// Re-run with γ = 0 as a control.
    pub control: bool,
}

impl Default for HistoriesConfig {
    fn default() -> Self {
        Self {
            times: Vec::new(),
            partitions: Vec::new(),
            cell_area_over_hbar: 8.0,
            intervals: 3.0,
            refine: 4,
            control: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.model_params().validate().map_err(cfg_err)?;
        if self.fock.n_f < 2 {
            return Err(Error::Config("fock.n_f must be at least 2".into()));
        }
        if self.ensemble.trajectories == 0 {
            return Err(Error::Config("ensemble.trajectories must be at least 1".into()));
        }
        self.integrator_config(self.ensemble.base_seed).validate().map_err(cfg_err)?;
        if let Some(n) = self.n_bar {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(Error::Config(format!("n_bar must be finite and ≥ 0, got {n}")));
            }
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config("output.formats must name at least one format".into()));
        }
        Ok(())
    }

    pub fn model_params(&self) -> ModelParams {
        let mut p = self.params;
        if let Some(n) = self.n_bar {
            p.set_n_bar(n);
        }
        p
    }

    pub fn operators(&self) -> Result<OperatorSet> {
        OperatorSet::new(self.model_params(), self.fock.n_f)
    }

    pub fn integrator_config(&self, seed: u64) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.integrator.dt,
            t_end: self.integrator.t_end,
            seed,
            record_stride: self.integrator.record_stride,
            renormalize: true,
            tail_tol: self.fock.tail_tol,
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig::new(
            self.ensemble.trajectories,
            self.ensemble.base_seed,
            self.integrator_config(self.ensemble.base_seed),
            self.initial.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_uses_defaults() {
        let cfg = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        for doc in [
            r#"{"bogus": 1}"#,
            r#"{"params": {"gama": 0.1}}"#,
            r#"{"ensemble": {"trajectories": 3, "extra": true}}"#,
            r#"{"initial": {"kind": "coherent", "re": 1, "im": 0, "x": 2}}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json_str(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for doc in [
            r#"{"params": {"mass": -1}}"#,
            r#"{"fock": {"n_f": 1}}"#,
            r#"{"integrator": {"dt": 0}}"#,
            r#"{"ensemble": {"M": 0}}"#,
        ] {
            let e = ExperimentConfig::from_json_str(doc).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{doc}: {e}");
        }
    }

    #[test]
    fn n_bar_overrides_temperature() {
        let cfg = ExperimentConfig::from_json_str(r#"{"n_bar": 1.0, "ensemble": {"M": 7}}"#).unwrap();
        assert!((cfg.model_params().n_bar() - 1.0).abs() < 1e-12);
        assert_eq!(cfg.ensemble_config().trajectories, 7);
    }

    #[test]
    fn initial_state_variants_parse() {
        let cfg = ExperimentConfig::from_json_str(r#"{"initial": {"kind": "fock", "n": 2}}"#).unwrap();
        assert_eq!(cfg.initial, InitialState::Fock { n: 2 });
        let cfg = ExperimentConfig::from_json_str(r#"{"initial": {"kind": "cat", "re": 1.5, "im": 0}}"#).unwrap();
        assert_eq!(cfg.initial, InitialState::Cat { re: 1.5, im: 0.0 });
    }
}
