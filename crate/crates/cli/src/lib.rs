//! Batch front-end for the `hyfl` simulator: config-driven runs, the central
//! oracle, hyperparameter search, partition summaries and SVG plots.

pub mod config;
pub mod plot;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use hyfl::centralized::{run_sdca_central, CentralRun};
use hyfl::data::{load_libsvm, normalize_samples, synth_dataset, train_validation_split};
use hyfl::fedavg::run_fedavg;
use hyfl::hyfdca::{run_hyfdca, FederatedProblem};
use hyfl::metrics::{accuracy, relative_loss, RunHistory, TimingModel};
use hyfl::objective::Regularization;
use hyfl::partition::{
    partition_horizontal, partition_nonzero_split, partition_quadrant, partition_vertical, Partition,
    PartitionSummary,
};
use hyfl::tuning::{inner_iterations, random_search, write_search_csv, HyperConfig, SearchSpace};
use hyfl::Dataset;

pub use config::{Algorithm, DatasetSource, ExperimentConfig, PartitionSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<hyfl::Error> for CliError {
    fn from(e: hyfl::Error) -> Self {
        match e {
            hyfl::Error::Config(_) | hyfl::Error::Dimension { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Training data, optional validation data and the partition, ready to run.
pub struct Prepared {
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub partition: Partition,
}

impl Prepared {
    pub fn problem(&self, lambda: f64) -> CliResult<FederatedProblem<'_, f64>> {
        let p = FederatedProblem::new(&self.train, &self.partition, lambda)?;
        Ok(match &self.validation {
            Some(v) => p.with_validation(v)?,
            None => p,
        })
    }
}

/// Load, split, partition (adding the bias feature for quadrants) and
/// normalize.
pub fn prepare(cfg: &ExperimentConfig) -> CliResult<Prepared> {
    let raw: Dataset = match &cfg.dataset {
        DatasetSource::Libsvm { path, n_features } => load_libsvm(path, *n_features, &cfg.label_mapping)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
        DatasetSource::Synth { seed, n_samples, n_features, margin, noise_rate } => {
            synth_dataset(*seed, *n_samples, *n_features, *margin, *noise_rate)?
        }
    };
    let (train, validation) = match cfg.split {
        Some(s) => {
            let (t, v) = train_validation_split(&raw, s.train_fraction, s.seed)?;
            (t, (v.n_samples() > 0).then_some(v))
        }
        None => (raw, None),
    };
    let (train, validation, partition) = match cfg.partition {
        PartitionSpec::Quadrant { clients, bias } => {
            let (aug, p) = partition_quadrant(&train, clients, bias)?;
            (aug, validation.map(|v| v.with_constant_feature(bias)), p)
        }
        PartitionSpec::Horizontal { clients } => {
            let p = partition_horizontal(&train, clients)?;
            (train, validation, p)
        }
        PartitionSpec::Vertical { clients, seed } => {
            let p = partition_vertical(&train, clients, seed)?;
            (train, validation, p)
        }
        PartitionSpec::NonzeroSplit { sample_groups, feature_groups, seed } => {
            let p = partition_nonzero_split(&train, sample_groups, feature_groups, seed)?;
            (train, validation, p)
        }
    };
    if cfg.normalize {
        Ok(Prepared {
            train: normalize_samples(&train),
            validation: validation.as_ref().map(normalize_samples),
            partition,
        })
    } else {
        Ok(Prepared { train, validation, partition })
    }
}

fn timing(alg: Algorithm, latency: f64) -> TimingModel {
    match alg {
        Algorithm::Fedavg => TimingModel::fedavg(latency),
        _ => TimingModel::hyfdca(latency),
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Summary printed by `run` and `central`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub primal: f64,
    pub relative_loss: Option<f64>,
    pub accuracy: f64,
    pub simulated_s: f64,
    pub files: Vec<PathBuf>,
}

impl std::fmt::Display for RunReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "algorithm       {}", self.algorithm.name())?;
        writeln!(f, "iterations      {}", self.iterations)?;
        writeln!(f, "final P         {}", self.primal)?;
        if let Some(r) = self.relative_loss {
            writeln!(f, "final P_R       {r}")?;
        }
        writeln!(f, "accuracy        {}", self.accuracy)?;
        writeln!(f, "simulated time  {} s", self.simulated_s)?;
        for p in &self.files {
            writeln!(f, "wrote           {}", p.display())?;
        }
        Ok(())
    }
}

fn federated_run(cfg: &ExperimentConfig, prep: &Prepared, hyper: Option<&HyperConfig>) -> CliResult<RunHistory> {
    let prob = prep.problem(cfg.lambda)?;
    let n = prep.train.n_samples();
    let clients = prep.partition.n_clients();
    let t = timing(cfg.algorithm, cfg.latency);
    let h = match cfg.algorithm {
        Algorithm::Hyfdca => {
            let mut params = cfg.hyfdca_params();
            if let Some(hc) = hyper {
                params.inner_iterations = inner_iterations(hc.iic, n, clients);
            }
            run_hyfdca(prob, params, cfg.schedule, t, cfg.stop)?
        }
        Algorithm::Fedavg => {
            let mut params = cfg.fedavg_params();
            if let Some(hc) = hyper {
                params.inner_iterations = inner_iterations(hc.iic, n, clients);
                params.a = hc.a.unwrap_or(params.a);
                params.b = hc.b.unwrap_or(params.b);
            }
            run_fedavg(prob, params, cfg.schedule, t, cfg.stop)?
        }
        Algorithm::Central => return Err(CliError::Config("central is not a federated algorithm".into())),
    };
    Ok(h)
}

/// Runs the configured algorithm; writes `<algorithm>.csv` and
/// `<algorithm>.json` (or `central.json`) under the output directory.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    if cfg.algorithm == Algorithm::Central {
        return cmd_central(cfg).map(|(c, files)| RunReport {
            algorithm: Algorithm::Central,
            iterations: c.iterations,
            primal: c.p_star,
            relative_loss: None,
            accuracy: c.accuracy,
            simulated_s: 0.0,
            files,
        });
    }
    let prep = prepare(cfg)?;
    let h = federated_run(cfg, &prep, None)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let stem = cfg.algorithm.name();
    h.save(&cfg.output_dir, stem)?;
    let last = h.rows.last().ok_or_else(|| CliError::Runtime("run produced no iterations".into()))?;
    Ok(RunReport {
        algorithm: cfg.algorithm,
        iterations: h.rows.len(),
        primal: last.primal,
        relative_loss: cfg.p_star.map(|p| relative_loss(last.primal, p)).transpose()?,
        accuracy: last.accuracy,
        simulated_s: h.final_time(),
        files: vec![cfg.output_dir.join(format!("{stem}.csv")), cfg.output_dir.join(format!("{stem}.json"))],
    })
}

/// Central oracle output: the solver result plus validation accuracy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralReport {
    #[serde(flatten)]
    pub run: CentralRun,
    pub accuracy: f64,
}

impl std::ops::Deref for CentralReport {
    type Target = CentralRun;
    fn deref(&self) -> &CentralRun {
        &self.run
    }
}

/// Centralized SDCA on the prepared training data; writes `central.json`.
pub fn cmd_central(cfg: &ExperimentConfig) -> CliResult<(CentralReport, Vec<PathBuf>)> {
    let prep = prepare(cfg)?;
    let reg = Regularization::new(cfg.lambda, prep.train.n_samples())?;
    let run = run_sdca_central(&prep.train, &reg, cfg.central.iterations, cfg.seed, cfg.central.gap_target)?;
    let acc = accuracy(&run.w_star, prep.validation.as_ref().unwrap_or(&prep.train));
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("central.json");
    run.save_json(&path)?;
    Ok((CentralReport { run, accuracy: acc }, vec![path]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selected {
    pub algorithm: Algorithm,
    pub config: HyperConfig,
    pub inner_iterations: usize,
    pub grade: f64,
}

/// Random search plus grey relational selection. Writes `search.csv`,
/// `selected.json` and the selected run's history as `selected_run.csv` and
/// `selected_run.json`.
pub fn cmd_tune(cfg: &ExperimentConfig, jobs: usize) -> CliResult<(Selected, Vec<PathBuf>)> {
    let prep = prepare(cfg)?;
    let n = prep.train.n_samples();
    let clients = prep.partition.n_clients();
    let space = match cfg.algorithm {
        Algorithm::Hyfdca => SearchSpace::hyfdca(clients, n),
        Algorithm::Fedavg => SearchSpace::fedavg(clients, n),
        Algorithm::Central => return Err(CliError::Config("tune needs a federated algorithm".into())),
    };
    let points = space.sample(cfg.tune.seed, cfg.tune.points)?;
    let outcome = random_search(&points, jobs, cfg.tune.divergence_window, |hc| {
        federated_run(cfg, &prep, Some(hc)).map_err(|e| match e {
            CliError::Config(m) => hyfl::Error::Config(m),
            CliError::Runtime(m) => hyfl::Error::Contract(m),
        })
    })?;
    let best = &outcome.records[outcome.best];
    let selected = Selected {
        algorithm: cfg.algorithm,
        config: best.config,
        inner_iterations: inner_iterations(best.config.iic, n, clients),
        grade: best.grade.expect("selected point is graded"),
    };
    std::fs::create_dir_all(&cfg.output_dir)?;
    let csv_path = cfg.output_dir.join("search.csv");
    write_search_csv(&outcome.records, BufWriter::new(File::create(&csv_path)?))?;
    let sel_path = cfg.output_dir.join("selected.json");
    write_json(&sel_path, &selected)?;
    outcome.histories[outcome.best].save(&cfg.output_dir, "selected_run")?;
    Ok((
        selected,
        vec![
            csv_path,
            sel_path,
            cfg.output_dir.join("selected_run.csv"),
            cfg.output_dir.join("selected_run.json"),
        ],
    ))
}

/// Per-client sample, feature and nonzero counts; writes `partition.json`.
pub fn cmd_partition_info(cfg: &ExperimentConfig) -> CliResult<(PartitionSummary, PathBuf)> {
    let prep = prepare(cfg)?;
    let summary = prep.partition.summary(&prep.train);
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("partition.json");
    write_json(&path, &summary)?;
    Ok((summary, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hyfl::data::SynthSpec;

    fn cfg(dir: &Path) -> ExperimentConfig {
        let text = r#"{
            "dataset": {"kind": "synth", "seed": 7, "n_samples": 60, "n_features": 8, "margin": 0.1, "noise_rate": 0.0},
            "partition": {"scheme": "nonzero_split", "sample_groups": 2, "feature_groups": 2, "seed": 0},
            "algorithm": "hyfdca",
            "hyfdca": {"inner_iterations": 5},
            "lambda": 0.01,
            "stop": {"iterations": 30}
        }"#;
        let mut c = ExperimentConfig::from_json(text).unwrap();
        c.output_dir = dir.to_path_buf();
        c
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 1);
        assert_eq!(CliError::from(hyfl::Error::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(hyfl::Error::Contract("x".into())).exit_code(), 1);
    }

    #[test]
    fn split_and_quadrant_bias_reach_validation() {
        let mut c = cfg(Path::new("unused"));
        c.dataset = DatasetSource::synth(SynthSpec { seed: 1, n_samples: 40, n_features: 784, margin: 0.1, noise_rate: 0.0 });
        c.split = Some(config::SplitSpec { train_fraction: 0.5, seed: 3 });
        c.partition = PartitionSpec::Quadrant { clients: 8, bias: 10.0 };
        let p = prepare(&c).unwrap();
        assert_eq!(p.train.n_samples(), 20);
        assert_eq!(p.train.n_features(), 785);
        let v = p.validation.unwrap();
        assert_eq!(v.n_features(), 785);
        for x in p.train.samples().iter().chain(v.samples()) {
            assert!((x.norm_sq() - 1.0).abs() < 1e-12);
            assert_eq!(x.indices().last(), Some(&784));
        }
    }

    #[test]
    fn run_reports_relative_loss_and_writes_history() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path());
        c.p_star = Some(0.1);
        let r = cmd_run(&c).unwrap();
        assert_eq!(r.iterations, 30);
        assert_eq!(r.relative_loss, Some((r.primal - 0.1) / 0.1));
        assert!(r.files.iter().all(|f| f.is_file()));
        assert!(r.to_string().contains("final P_R"));
    }

    #[test]
    fn central_through_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path());
        c.algorithm = Algorithm::Central;
        let r = cmd_run(&c).unwrap();
        let saved = CentralRun::load_json(&dir.path().join("central.json")).unwrap();
        assert_eq!(saved.p_star, r.primal);
        assert!(saved.gap <= c.central.gap_target);
    }

    #[test]
    fn tune_selects_a_graded_point() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(dir.path());
        c.tune.points = 4;
        c.tune.divergence_window = 5;
        let (sel, files) = cmd_tune(&c, 2).unwrap();
        assert!(sel.grade > 0.0 && sel.grade <= 1.0);
        assert!(files.iter().all(|f| f.is_file()));
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.lines().count(), 5);
        c.algorithm = Algorithm::Central;
        assert_eq!(cmd_tune(&c, 1).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn partition_info_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (s, path) = cmd_partition_info(&cfg(dir.path())).unwrap();
        assert_eq!(s.n_clients, 4);
        assert_eq!(s.clients.iter().map(|c| c.samples).sum::<usize>(), 120);
        assert!(path.is_file());
    }
}
