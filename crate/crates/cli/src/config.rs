//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hyfl::data::{LabelMapping, SynthSpec};
use hyfl::fedavg::FedAvgParams;
use hyfl::hyfdca::{HyfdcaParams, Schedule, StopRule};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DatasetSource {
    /// LIBSVM text file, optionally gzipped. Relative paths are resolved
    /// against `HYFL_DATA_DIR` when it is set.
    Libsvm {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_features: Option<usize>,
    },
    Synth {
        seed: u64,
        n_samples: usize,
        n_features: usize,
        margin: f64,
        noise_rate: f64,
    },
}

impl DatasetSource {
    pub fn synth(spec: SynthSpec) -> Self {
        DatasetSource::Synth {
            seed: spec.seed,
            n_samples: spec.n_samples,
            n_features: spec.n_features,
            margin: spec.margin,
            noise_rate: spec.noise_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme", deny_unknown_fields)]
pub enum PartitionSpec {
    Horizontal { clients: usize },
    Vertical {
        clients: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    NonzeroSplit { sample_groups: usize, feature_groups: usize, seed: u64 },
    /// MNIST image quadrants; appends a constant bias feature.
    Quadrant { clients: usize, bias: f64 },
}

impl PartitionSpec {
    pub fn n_clients(&self) -> usize {
        match *self {
            PartitionSpec::Horizontal { clients }
            | PartitionSpec::Vertical { clients, .. }
            | PartitionSpec::Quadrant { clients, .. } => clients,
            PartitionSpec::NonzeroSplit { sample_groups, feature_groups, .. } => sample_groups * feature_groups,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Hyfdca,
    Fedavg,
    Central,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Hyfdca => "hyfdca",
            Algorithm::Fedavg => "fedavg",
            Algorithm::Central => "central",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralSpec {
    /// Coordinate steps.
    pub iterations: usize,
    pub gap_target: f64,
}

impl Default for CentralSpec {
    fn default() -> Self {
        Self { iterations: 10_000_000, gap_target: hyfl::centralized::DEFAULT_GAP_TARGET }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSpec {
    pub points: usize,
    pub seed: u64,
    /// Smoothing window of the divergence test.
    pub divergence_window: usize,
}

impl Default for TuneSpec {
    fn default() -> Self {
        Self { points: 20, seed: 0, divergence_window: 50 }
    }
}

fn yes() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub label_mapping: LabelMapping,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    /// Scale every sample to unit norm after any bias feature is added.
    #[serde(default = "yes")]
    pub normalize: bool,
    pub partition: PartitionSpec,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub hyfdca: HyfdcaParams,
    #[serde(default)]
    pub fedavg: FedAvgParams,
    #[serde(default)]
    pub central: CentralSpec,
    #[serde(default)]
    pub schedule: Schedule,
    pub lambda: f64,
    pub stop: StopRule,
    /// Seconds per round trip.
    #[serde(default)]
    pub latency: f64,
    /// Master seed; replaces the algorithm seeds.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Centralized optimum, for relative loss reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_star: Option<f64>,
    #[serde(default)]
    pub tune: TuneSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads, parses and validates; relative dataset paths are joined onto
    /// `data_dir` when given.
    pub fn load(path: &Path, data_dir: Option<&Path>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(data_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, data_dir: Option<&Path>) {
        if let (DatasetSource::Libsvm { path, .. }, Some(dir)) = (&mut self.dataset, data_dir) {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        match &self.dataset {
            DatasetSource::Libsvm { path, .. } if !path.is_file() => {
                return bad(format!("dataset not found: {}", path.display()))
            }
            DatasetSource::Synth { n_samples, n_features, .. } if *n_samples == 0 || *n_features == 0 => {
                return bad("synthetic dataset needs samples and features".into())
            }
            _ => {}
        }
        if let Some(s) = self.split {
            if !(s.train_fraction > 0.0 && s.train_fraction <= 1.0) {
                return bad(format!("train_fraction {} outside (0, 1]", s.train_fraction));
            }
        }
        if self.partition.n_clients() == 0 {
            return bad("partition needs at least one client".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive and finite, got {}", self.lambda));
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return bad(format!("latency must be non-negative, got {}", self.latency));
        }
        match self.stop {
            StopRule::Iterations(0) => return bad("stop needs at least one iteration".into()),
            StopRule::WallTime(s) if !(s > 0.0 && s.is_finite()) => {
                return bad(format!("wall time budget must be positive, got {s}"))
            }
            _ => {}
        }
        self.schedule.validate(self.partition.n_clients()).map_err(|e| CliError::Config(e.to_string()))?;
        if self.algorithm == Algorithm::Fedavg {
            self.fedavg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.tune.points == 0 {
            return bad("tune.points must be at least 1".into());
        }
        if let Some(p) = self.p_star {
            if !(p > 0.0) {
                return bad(format!("p_star must be positive, got {p}"));
            }
        }
        Ok(())
    }

    pub fn hyfdca_params(&self) -> HyfdcaParams {
        HyfdcaParams { seed: self.seed, ..self.hyfdca }
    }

    pub fn fedavg_params(&self) -> FedAvgParams {
        FedAvgParams { seed: self.seed, ..self.fedavg }
    }
}
