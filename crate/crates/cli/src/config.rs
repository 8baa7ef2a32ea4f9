//! Experiment configuration: a TOML file with one section per pipeline stage.
//!
//! Every key is optional and unknown keys are rejected. The hash embedded in
//! output artifacts covers the effective configuration (file plus flag
//! overrides) but not the output directory.

use std::path::{Path, PathBuf};

use qcbm_core::landscape::PairPolicy;
use qcbm_core::minima::ClusterOptions;
use qcbm_core::neb::{NebOptions, OutcomeThresholds};
use qcbm_core::trainer::{AdamConfig, EnsembleSplit, TrainConfig};
use qcbm_core::{CircuitSpec, KernelSpec, Layout, Parameterization, Shots};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Infinite-shot evaluation in every stage.
    pub exact: bool,
    pub out: PathBuf,
    pub circuit: CircuitSection,
    pub train: TrainSection,
    pub kernel: KernelSection,
    pub minima: MinimaSection,
    pub landscape: LandscapeSection,
    pub neb: NebSection,
    pub traces: TracesSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            exact: false,
            out: PathBuf::from("out"),
            circuit: CircuitSection::default(),
            train: TrainSection::default(),
            kernel: KernelSection::default(),
            minima: MinimaSection::default(),
            landscape: LandscapeSection::default(),
            neb: NebSection::default(),
            traces: TracesSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitSection {
    pub n_qubits: usize,
    pub depth: usize,
    pub parameterization: Parameterization,
    /// Defaults to `pc`, or `none` at depth 0.
    pub layout: Option<Layout>,
    pub elide_redundant_z: bool,
}

impl Default for CircuitSection {
    fn default() -> Self {
        Self {
            n_qubits: 2,
            depth: 1,
            parameterization: Parameterization::Sgp,
            layout: None,
            elide_redundant_z: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub shots: u32,
    pub runs_zero: usize,
    pub runs_uniform: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let split = EnsembleSplit::default();
        Self {
            steps: 50,
            shots: 2048,
            runs_zero: split.zero,
            runs_uniform: split.uniform,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub bandwidths: Vec<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            bandwidths: KernelSpec::default().bandwidths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimaSection {
    pub quantile: f64,
    pub confidence: f64,
    pub two_sided: bool,
    /// Shots for re-evaluating each cluster center.
    pub shots: u32,
}

impl Default for MinimaSection {
    fn default() -> Self {
        let o = ClusterOptions::default();
        Self {
            quantile: o.quantile,
            confidence: o.confidence,
            two_sided: o.two_sided,
            shots: o.center_shots.count().unwrap_or(8192),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeSection {
    /// Points per straight-line barrier scan.
    pub resolution: usize,
    pub shots: u32,
    /// `all` or `sample:K`.
    pub pairs: String,
    pub grid_resolution: usize,
    /// Grid window on both axes as multiples of the anchor-triangle extent.
    pub window_lo: f64,
    pub window_hi: f64,
}

impl Default for LandscapeSection {
    fn default() -> Self {
        Self {
            resolution: 25,
            shots: qcbm_core::landscape::DEFAULT_LANDSCAPE_SHOTS,
            pairs: "all".into(),
            grid_resolution: 25,
            window_lo: -0.5,
            window_hi: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NebSection {
    pub segments: usize,
    pub spring: f64,
    pub lr: f64,
    pub steps: usize,
    pub shots: u32,
    /// Profile points per segment.
    pub profile_resolution: usize,
    pub flat: f64,
    pub ratio: f64,
}

impl Default for NebSection {
    fn default() -> Self {
        let o = NebOptions::default();
        let t = OutcomeThresholds::default();
        Self {
            segments: o.segments,
            spring: o.spring,
            lr: o.lr,
            steps: o.steps,
            shots: qcbm_core::landscape::DEFAULT_LANDSCAPE_SHOTS,
            profile_resolution: 4,
            flat: t.flat,
            ratio: t.ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TracesSection {
    pub plateau_steps: usize,
    pub plateau_delta: f64,
}

impl Default for TracesSection {
    fn default() -> Self {
        Self {
            plateau_steps: 10,
            plateau_delta: 0.01,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Checks every derived core type without running anything.
    pub fn validate(&self) -> Result<(), CliError> {
        let config = |e: qcbm_core::Error| CliError::Config(e.to_string());
        self.train_config().validate().map_err(config)?;
        self.pair_policy()?;
        let positive = [
            ("train.shots", self.train.shots),
            ("minima.shots", self.minima.shots),
            ("landscape.shots", self.landscape.shots),
            ("neb.shots", self.neb.shots),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(CliError::Config(format!("{key} must be at least 1")));
        }
        if self.train.runs_zero + self.train.runs_uniform == 0 {
            return Err(CliError::Config("the ensemble needs at least one run".into()));
        }
        if !(self.minima.quantile > 0.0 && self.minima.quantile <= 1.0) {
            return Err(CliError::Config("minima.quantile must lie in (0, 1]".into()));
        }
        if !(self.minima.confidence > 0.0 && self.minima.confidence < 1.0) {
            return Err(CliError::Config("minima.confidence must lie in (0, 1)".into()));
        }
        if self.landscape.resolution < 2 || self.landscape.grid_resolution < 2 {
            return Err(CliError::Config("landscape resolutions must be at least 2".into()));
        }
        let (lo, hi) = (self.landscape.window_lo, self.landscape.window_hi);
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(CliError::Config("landscape.window_lo must be below window_hi".into()));
        }
        if self.neb.segments < 2 || self.neb.steps == 0 || self.neb.profile_resolution == 0 {
            return Err(CliError::Config(
                "neb needs segments >= 2, steps >= 1 and profile_resolution >= 1".into(),
            ));
        }
        if self.traces.plateau_steps == 0 {
            return Err(CliError::Config("traces.plateau_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Short hex digest of the effective configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn circuit(&self) -> CircuitSpec {
        let c = &self.circuit;
        let layout = c
            .layout
            .unwrap_or(if c.depth == 0 { Layout::None } else { Layout::Pc });
        CircuitSpec {
            n_qubits: c.n_qubits,
            depth: c.depth,
            parameterization: c.parameterization,
            layout,
            elide_redundant_z: c.elide_redundant_z,
        }
    }

    fn shots(&self, count: u32) -> Shots {
        if self.exact {
            Shots::Exact
        } else {
            Shots::Finite(count)
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec {
            bandwidths: self.kernel.bandwidths.clone(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.circuit());
        cfg.steps = self.train.steps;
        cfg.shots = self.shots(self.train.shots);
        cfg.adam = AdamConfig {
            lr: self.train.lr,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            epsilon: self.train.epsilon,
        };
        cfg.kernel = self.kernel();
        cfg.seed = self.seed;
        cfg
    }

    pub fn split(&self) -> EnsembleSplit {
        EnsembleSplit {
            zero: self.train.runs_zero,
            uniform: self.train.runs_uniform,
        }
    }

    pub fn cluster_options(&self) -> ClusterOptions {
        ClusterOptions {
            quantile: self.minima.quantile,
            confidence: self.minima.confidence,
            two_sided: self.minima.two_sided,
            center_shots: self.shots(self.minima.shots),
        }
    }

    pub fn landscape_shots(&self) -> Shots {
        self.shots(self.landscape.shots)
    }

    pub fn pair_policy(&self) -> Result<PairPolicy, CliError> {
        self.landscape
            .pairs
            .parse()
            .map_err(|e: qcbm_core::Error| CliError::Config(e.to_string()))
    }

    pub fn neb_options(&self) -> NebOptions {
        NebOptions {
            segments: self.neb.segments,
            spring: self.neb.spring,
            lr: self.neb.lr,
            steps: self.neb.steps,
        }
    }

    pub fn neb_shots(&self) -> Shots {
        self.shots(self.neb.shots)
    }

    pub fn thresholds(&self) -> OutcomeThresholds {
        OutcomeThresholds {
            flat: self.neb.flat,
            ratio: self.neb.ratio,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.circuit().layout, Layout::Pc);
        assert_eq!(c.split().total(), 50);
        assert_eq!(c.train_config().shots, Shots::Finite(2048));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ExperimentConfig::parse("[train]\nstepz = 3\n"),
            Err(CliError::Config(_))
        ));
        assert!(ExperimentConfig::parse("colour = 1\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::default();
        c.circuit.n_qubits = 4;
        c.circuit.layout = Some(Layout::TwoDesign);
        c.circuit.parameterization = Parameterization::Agp;
        c.landscape.pairs = "sample:4".into();
        let back = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn hash_ignores_output_directory_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "[circuit]\nn_qubits = 1\n",
            "[circuit]\nn_qubits = 3\nlayout = \"two_design\"\n",
            "[train]\nshots = 0\n",
            "[landscape]\npairs = \"some\"\n",
            "[neb]\nsegments = 1\n",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn exact_mode_applies_to_every_stage() {
        let c = ExperimentConfig::parse("exact = true\n").unwrap();
        assert_eq!(c.train_config().shots, Shots::Exact);
        assert_eq!(c.cluster_options().center_shots, Shots::Exact);
        assert_eq!(c.landscape_shots(), Shots::Exact);
        assert_eq!(c.neb_shots(), Shots::Exact);
    }
}
