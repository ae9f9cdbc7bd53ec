//! Registered experiments, run directories and metrics.

pub mod checks;
pub mod metrics;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use metrics::{
    dominant_level_ratio, export_grid, field_fn, grid_points, partition_metrics, relative_l2, FieldGrid, FieldKind,
    PartitionMetrics, GRID_RES,
};

use crate::network::{self, Activation, NetworkError, NetworkSpec};
use crate::pde::{self, ManufacturedCase, PdeError};
use crate::pou::PartitionModel;
use crate::train::checkpoint::to_precise_json;
use crate::train::{
    self, rng_stream, BcMode, Checkpoint, CollocationSpec, InitMode, LossParts, ModelSet, PdeProblem, Problem, TrainConfig,
    TrainError, TrainOutcome, UNet, STREAM_DATA, STREAM_POU_INIT, STREAM_U_INIT,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment '{name}'; valid names: {valid}", name = .0, valid = names().join(", "))]
    Unknown(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    pub fn is_usage(&self) -> bool {
        matches!(self, ExperimentError::Unknown(_) | ExperimentError::Usage(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PinnForward,
    PouSupervised,
    PoupinnJoint,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::PinnForward => "pinn-forward",
            Mode::PouSupervised => "pou-supervised",
            Mode::PoupinnJoint => "poupinn-joint",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub relative_l2: Option<f64>,
    pub partition_accuracy: Option<f64>,
    pub conductivity_error: Option<f64>,
    /// Required `log10(initial / final)` of the total loss.
    pub loss_reduction_orders: Option<f64>,
    /// Allowed relative deviation of the dominant level ratio from the truth.
    pub level_ratio_tolerance: Option<f64>,
}

impl Thresholds {
    const NONE: Thresholds = Thresholds {
        relative_l2: None,
        partition_accuracy: None,
        conductivity_error: None,
        loss_reduction_orders: None,
        level_ratio_tolerance: None,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub mode: Mode,
    /// Registry name of the manufactured case.
    pub case: String,
    /// Hidden widths of the solution network (tanh layers, linear head).
    pub u_hidden: Option<Vec<usize>>,
    /// Hidden widths of the partition network (tanh layers, softmax head).
    pub pou_hidden: Option<Vec<usize>>,
    pub partitions: Option<usize>,
    pub train: TrainConfig,
    /// Uniform random supervised samples.
    pub supervised_points: usize,
    /// Evenly spaced samples per edge appended to the supervised data.
    pub boundary_points_per_edge: usize,
    /// Exclusion band around true interfaces for partition accuracy.
    pub interface_band: f64,
    /// Links of the warm-started chain run by default.
    pub chain_links: usize,
    pub thresholds: Thresholds,
}

const SEED: u64 = 12345;

fn pou_spec(name: &str, hidden: &[usize], n: usize, epochs: u64, lr: f64, l2: f64, band: f64) -> ExperimentSpec {
    ExperimentSpec {
        name: name.into(),
        mode: Mode::PouSupervised,
        case: name.into(),
        u_hidden: None,
        pou_hidden: Some(hidden.to_vec()),
        partitions: Some(n),
        train: TrainConfig {
            epochs,
            lr,
            l2_lambda: l2,
            seed: SEED,
            batch_size: Some(32),
            ..TrainConfig::default()
        },
        supervised_points: 8192,
        boundary_points_per_edge: 0,
        interface_band: band,
        chain_links: 1,
        thresholds: Thresholds::NONE,
    }
}

fn pinn_spec(name: &str, hidden: &[usize], epochs: u64, lr: f64) -> ExperimentSpec {
    ExperimentSpec {
        name: name.into(),
        mode: Mode::PinnForward,
        case: name.into(),
        u_hidden: Some(hidden.to_vec()),
        pou_hidden: None,
        partitions: None,
        train: TrainConfig {
            epochs,
            lr,
            seed: SEED,
            bc_mode: BcMode::HardDirichlet,
            collocation: CollocationSpec {
                side: 32,
                ..CollocationSpec::default()
            },
            ..TrainConfig::default()
        },
        supervised_points: 0,
        boundary_points_per_edge: 0,
        interface_band: 0.0,
        chain_links: 1,
        thresholds: Thresholds {
            relative_l2: Some(2e-2),
            ..Thresholds::NONE
        },
    }
}

fn poupinn_spec(name: &str) -> ExperimentSpec {
    ExperimentSpec {
        name: name.into(),
        mode: Mode::PoupinnJoint,
        case: name.into(),
        u_hidden: Some(vec![40; 4]),
        pou_hidden: Some(vec![40; 4]),
        partitions: Some(2),
        train: TrainConfig {
            epochs: 6000,
            lr: 0.001,
            l2_lambda: 1e-4,
            seed: SEED,
            bc_mode: BcMode::Soft,
            collocation: CollocationSpec {
                side: 32,
                ..CollocationSpec::default()
            },
            ..TrainConfig::default()
        },
        supervised_points: 0,
        boundary_points_per_edge: 0,
        interface_band: 0.02,
        chain_links: 1,
        thresholds: Thresholds {
            loss_reduction_orders: Some(3.0),
            level_ratio_tolerance: Some(0.25),
            ..Thresholds::NONE
        },
    }
}

/// All registered experiments in stable order.
pub fn registry() -> Vec<ExperimentSpec> {
    let supervised_ok = Thresholds {
        partition_accuracy: Some(0.99),
        conductivity_error: Some(0.05),
        ..Thresholds::NONE
    };
    let mut pou_ex1 = pou_spec("pou-ex1", &[40], 2, 1000, 0.0005, 0.0, 0.03);
    pou_ex1.thresholds = supervised_ok.clone();
    let pou_ex2 = pou_spec("pou-ex2", &[40], 4, 600, 0.00025, 1e-6, 0.03);
    let mut pou_ex3 = pou_spec("pou-ex3", &[40, 40, 40, 40], 4, 10000, 0.000125, 1e-6, 0.02);
    pou_ex3.chain_links = 8;
    let mut pou_ex4 = pou_spec("pou-ex4", &[40, 40], 4, 3000, 0.000125, 1e-6, 0.02);
    pou_ex4.boundary_points_per_edge = 64;
    let mut pou_ex5 = pou_spec("pou-ex5", &[40], 2, 100, 0.00025, 1e-6, 0.02);
    pou_ex5.thresholds = supervised_ok.clone();
    let mut pou_ex6 = pou_spec("pou-ex6", &[40], 2, 100, 0.00025, 1e-6, 0.02);
    pou_ex6.thresholds = supervised_ok;
    vec![
        pinn_spec("pinn-ex1", &[40, 40, 40, 40], 3000, 0.003),
        pinn_spec("pinn-ex2", &[40, 40, 40, 40], 3000, 0.003),
        pou_ex1,
        pou_ex2,
        pou_ex3,
        pou_ex4,
        pou_ex5,
        pou_ex6,
        poupinn_spec("poupinn-ex1"),
        poupinn_spec("poupinn-ex2"),
    ]
}

pub fn names() -> Vec<String> {
    registry().into_iter().map(|e| e.name).collect()
}

pub fn lookup(name: &str) -> Result<ExperimentSpec, ExperimentError> {
    registry()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| ExperimentError::Unknown(name.into()))
}

/// Applies dotted `key=value` overrides to a training configuration. Keys
/// must already exist; values are parsed as JSON, falling back to a string.
pub fn apply_overrides(config: &TrainConfig, overrides: &[(String, String)]) -> Result<TrainConfig, ExperimentError> {
    let mut root = serde_json::to_value(config)?;
    for (key, raw) in overrides {
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| ExperimentError::Usage(format!("unknown override key '{key}'")))?;
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
    }
    let out: TrainConfig = serde_json::from_value(root)
        .map_err(|e| ExperimentError::Usage(format!("invalid override value: {e}")))?;
    out.validate().map_err(|e| ExperimentError::Usage(e.to_string()))?;
    Ok(out)
}

/// Parses `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), ExperimentError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ExperimentError::Usage(format!("override '{s}' is not of the form key=value")))?;
    if k.is_empty() {
        return Err(ExperimentError::Usage(format!("override '{s}' has an empty key")));
    }
    Ok((k.to_string(), v.to_string()))
}

impl ExperimentSpec {
    pub fn manufactured_case(&self) -> Result<ManufacturedCase, ExperimentError> {
        Ok(pde::case(&self.case)?)
    }

    fn check(&self) -> Result<(), ExperimentError> {
        let usage = |m: String| Err(ExperimentError::Usage(m));
        let needs_u = self.mode != Mode::PouSupervised;
        let needs_pou = self.mode != Mode::PinnForward;
        if needs_u != self.u_hidden.is_some() {
            return usage(format!("{}: u_hidden does not fit mode {}", self.name, self.mode.name()));
        }
        if needs_pou != (self.pou_hidden.is_some() && self.partitions.is_some()) {
            return usage(format!("{}: partition network does not fit mode {}", self.name, self.mode.name()));
        }
        if self.mode == Mode::PouSupervised && self.supervised_points + 4 * self.boundary_points_per_edge == 0 {
            return usage(format!("{}: no supervised samples", self.name));
        }
        Ok(())
    }

    /// Freshly initialised models: u-net and partition network from their
    /// own rng streams of the run seed.
    pub fn init_models(&self) -> Result<ModelSet, ExperimentError> {
        self.check()?;
        let case = self.manufactured_case()?;
        let seed = self.train.seed;
        let u = match &self.u_hidden {
            Some(hidden) => {
                let spec = NetworkSpec::mlp(hidden, 1, Activation::Linear)?;
                let params = network::init_glorot_with(&spec, &mut rng_stream(seed, STREAM_U_INIT));
                let ansatz = match self.train.bc_mode {
                    BcMode::HardDirichlet => Some(case.boundary.dirichlet_edges().to_vec()),
                    BcMode::Soft => None,
                };
                Some(UNet { spec, params, ansatz })
            }
            None => None,
        };
        let pou = match (&self.pou_hidden, self.partitions) {
            (Some(hidden), Some(n)) => Some(PartitionModel::init(hidden, n, &mut rng_stream(seed, STREAM_POU_INIT))?),
            _ => None,
        };
        Ok(ModelSet { u, pou })
    }

    /// Training data: supervised samples or collocated PDE data.
    pub fn problem(&self) -> Result<Problem, ExperimentError> {
        self.check()?;
        let case = self.manufactured_case()?;
        Ok(match self.mode {
            Mode::PouSupervised => Problem::Supervised {
                data: supervised_data(&case, self.supervised_points, self.boundary_points_per_edge, self.train.seed),
            },
            Mode::PinnForward | Mode::PoupinnJoint => {
                let set = train::sample_collocation(&self.train.collocation, self.train.seed)?;
                Problem::Pde(PdeProblem::new(&case, &set, self.mode == Mode::PoupinnJoint)?)
            }
        })
    }
}

/// `count` uniform points (data stream of `seed`) plus `per_edge` evenly
/// spaced points on each edge, labelled with the case's conductivity.
pub fn supervised_data(case: &ManufacturedCase, count: usize, per_edge: usize, seed: u64) -> Vec<([f64; 2], f64)> {
    use rand::distributions::{Distribution, Uniform};
    let mut rng = rng_stream(seed, STREAM_DATA);
    let unit = Uniform::new(0.0, 1.0);
    let mut pts: Vec<[f64; 2]> = (0..count).map(|_| [unit.sample(&mut rng), unit.sample(&mut rng)]).collect();
    for e in pde::Edge::ALL {
        for i in 0..per_edge {
            pts.push(e.point((i as f64 + 0.5) / per_edge as f64));
        }
    }
    pts.into_iter().map(|p| (p, case.field.value(p))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossSummary {
    pub total: f64,
    pub pde: f64,
    pub bc: f64,
    pub l2: f64,
}

impl From<LossParts> for LossSummary {
    fn from(p: LossParts) -> Self {
        LossSummary {
            total: p.total,
            pde: p.pde,
            bc: p.bc,
            l2: p.l2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdCheck {
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub experiment: String,
    pub mode: Mode,
    pub epochs: u64,
    pub initial_loss: LossSummary,
    pub final_loss: LossSummary,
    pub loss_reduction_orders: f64,
    pub relative_l2: Option<f64>,
    pub partition: Option<PartitionMetrics>,
    pub level_ratio: Option<f64>,
    pub true_level_ratio: Option<f64>,
    pub checks: Vec<ThresholdCheck>,
}

impl Metrics {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Accuracy metrics of trained models against the experiment's truth.
pub fn evaluate_models(
    spec: &ExperimentSpec,
    models: &ModelSet,
    initial: LossParts,
    final_loss: LossParts,
    epochs: u64,
) -> Result<Metrics, ExperimentError> {
    let case = spec.manufactured_case()?;
    let pts = grid_points(GRID_RES, GRID_RES);
    let relative = match (&models.u, case.u_true) {
        (Some(u), Some(t)) => Some(relative_l2(&|p| u.value(p), &|p| t.value(p), &pts)),
        _ => None,
    };
    let piecewise = case.piecewise();
    let partition = match (&models.pou, piecewise) {
        (Some(m), Some(f)) => Some(partition_metrics(m, f, &pts, spec.interface_band)),
        _ => None,
    };
    let (level_ratio, true_level_ratio) = match (&models.pou, piecewise) {
        (Some(m), Some(f)) if spec.mode == Mode::PoupinnJoint => {
            let lv = f.levels();
            (
                Some(dominant_level_ratio(m, &pts)),
                Some(lv.iter().cloned().fold(f64::MIN, f64::max) / lv.iter().cloned().fold(f64::MAX, f64::min)),
            )
        }
        _ => (None, None),
    };
    let reduction = (initial.total / final_loss.total).log10();
    let t = &spec.thresholds;
    let mut checks = Vec::new();
    let mut at_most = |metric: &str, value: Option<f64>, threshold: Option<f64>| {
        if let (Some(v), Some(th)) = (value, threshold) {
            checks.push(ThresholdCheck {
                metric: metric.into(),
                value: v,
                threshold: th,
                pass: v <= th,
            });
        }
    };
    at_most("relative_l2", relative, t.relative_l2);
    at_most(
        "max_conductivity_error",
        partition
            .as_ref()
            .map(|p| p.conductivity_errors.iter().cloned().fold(0.0, f64::max)),
        t.conductivity_error,
    );
    at_most(
        "level_ratio_deviation",
        level_ratio.zip(true_level_ratio).map(|(r, tr)| (r - tr).abs() / tr),
        t.level_ratio_tolerance,
    );
    if let (Some(p), Some(th)) = (&partition, t.partition_accuracy) {
        checks.push(ThresholdCheck {
            metric: "partition_accuracy".into(),
            value: p.accuracy,
            threshold: th,
            pass: p.accuracy >= th,
        });
    }
    if let Some(th) = t.loss_reduction_orders {
        checks.push(ThresholdCheck {
            metric: "loss_reduction_orders".into(),
            value: reduction,
            threshold: th,
            pass: reduction >= th,
        });
    }
    Ok(Metrics {
        experiment: spec.name.clone(),
        mode: spec.mode,
        epochs,
        initial_loss: initial.into(),
        final_loss: final_loss.into(),
        loss_reduction_orders: reduction,
        relative_l2: relative,
        partition,
        level_ratio,
        true_level_ratio,
        checks,
    })
}

/// Field kinds that make sense for a mode.
pub fn field_kinds(mode: Mode) -> &'static [FieldKind] {
    match mode {
        Mode::PinnForward => &[FieldKind::U, FieldKind::K, FieldKind::Error, FieldKind::Residual],
        Mode::PouSupervised => &[FieldKind::K, FieldKind::Partition],
        Mode::PoupinnJoint => &FieldKind::ALL,
    }
}

pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub outcome: TrainOutcome,
    pub metrics: Metrics,
}

fn write_fields(spec: &ExperimentSpec, models: &ModelSet, dir: &Path) -> Result<(), ExperimentError> {
    let case = spec.manufactured_case()?;
    let fields = dir.join("fields");
    std::fs::create_dir_all(&fields)?;
    for &kind in field_kinds(spec.mode) {
        let f = field_fn(models, &case, kind)?;
        let grid = export_grid(f.as_ref(), kind, GRID_RES, GRID_RES)?;
        std::fs::write(fields.join(format!("{kind}.csv")), grid.to_csv())?;
    }
    Ok(())
}

/// Trains `spec` and writes `history.csv`, `checkpoint.json`,
/// `fields/<kind>.csv`, `metrics.json` and `config.json` into `dir`. On
/// failure the partial outputs are kept next to a `FAILED` marker.
pub fn run_experiment(spec: &ExperimentSpec, dir: &Path) -> Result<RunSummary, ExperimentError> {
    std::fs::create_dir_all(dir)?;
    let marker = dir.join(FAILURE_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker)?;
    }
    std::fs::write(dir.join("config.json"), to_precise_json(spec)?)?;
    let result = (|| {
        let models = spec.init_models()?;
        let problem = spec.problem()?;
        match train::train_loop(&problem, models, &spec.train, None, &spec.case) {
            Ok(outcome) => Ok(outcome),
            Err(TrainError::NonFinite {
                epoch,
                point,
                detail,
                last_good,
                history,
            }) => {
                train::write_history(&dir.join("history.csv"), &history)?;
                last_good.save(&dir.join("checkpoint.json"))?;
                Err(TrainError::NonFinite {
                    epoch,
                    point,
                    detail,
                    last_good,
                    history,
                }
                .into())
            }
            Err(e) => Err(e.into()),
        }
    })();
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            std::fs::write(&marker, format!("{e}\n"))?;
            return Err(e);
        }
    };
    let finish = || -> Result<Metrics, ExperimentError> {
        train::write_history(&dir.join("history.csv"), &outcome.history)?;
        outcome.checkpoint.save(&dir.join("checkpoint.json"))?;
        write_fields(spec, &outcome.models, dir)?;
        let metrics = evaluate_models(
            spec,
            &outcome.models,
            outcome.initial,
            outcome.final_loss,
            outcome.checkpoint.epoch,
        )?;
        std::fs::write(dir.join("metrics.json"), to_precise_json(&metrics)?)?;
        Ok(metrics)
    };
    match finish() {
        Ok(metrics) => Ok(RunSummary {
            dir: dir.to_path_buf(),
            outcome,
            metrics,
        }),
        Err(e) => {
            std::fs::write(&marker, format!("{e}\n"))?;
            Err(e)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainLink {
    pub link: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `|initial − previous final|`, zero for the first link.
    pub warm_start_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainSummary {
    pub experiment: String,
    pub links: Vec<ChainLink>,
}

/// Runs `links` trainings in `dir/link-k`, each link starting from the
/// weights of the previous link's checkpoint with a fresh optimizer.
pub fn run_chain(spec: &ExperimentSpec, links: usize, dir: &Path) -> Result<ChainSummary, ExperimentError> {
    if links == 0 {
        return Err(ExperimentError::Usage("--links must be at least 1".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut summary = ChainSummary {
        experiment: spec.name.clone(),
        links: Vec::with_capacity(links),
    };
    let mut prev: Option<(PathBuf, f64)> = None;
    for k in 0..links {
        let mut link = spec.clone();
        if let Some((ck, _)) = &prev {
            link.train.init_from = Some(ck.clone());
            link.train.init_mode = InitMode::Weights;
        }
        let sub = dir.join(format!("link-{k}"));
        let run = run_experiment(&link, &sub)?;
        let initial = run.outcome.initial.total;
        let fin = run.outcome.final_loss.total;
        summary.links.push(ChainLink {
            link: k,
            initial_loss: initial,
            final_loss: fin,
            warm_start_gap: prev.as_ref().map_or(0.0, |(_, f)| (initial - f).abs()),
        });
        prev = Some((sub.join("checkpoint.json"), fin));
    }
    std::fs::write(dir.join("chain.json"), to_precise_json(&summary)?)?;
    Ok(summary)
}

/// Metrics of a saved checkpoint against a registered experiment.
pub fn evaluate_checkpoint(spec: &ExperimentSpec, ck: &Checkpoint) -> Result<Metrics, ExperimentError> {
    let problem = spec.problem()?;
    let mut engine = train::Engine::new();
    let flat = ck.models.flat();
    let loss = engine
        .evaluate(
            &problem,
            &ck.models,
            &flat,
            spec.train.l2_lambda,
            spec.train.bc_weight,
            None,
            None,
        )
        .map_err(|e| ExperimentError::Usage(format!("non-finite loss at {:?}: {}", e.point, e.detail)))?;
    evaluate_models(spec, &ck.models, loss, loss, ck.epoch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_pins_published_hyperparameters() {
        let r = registry();
        assert_eq!(r.len(), 10);
        let get = |n: &str| lookup(n).unwrap();

        let e = get("pou-ex1");
        assert_eq!((e.train.epochs, e.train.lr, e.train.l2_lambda), (1000, 0.0005, 0.0));
        assert_eq!(e.pou_hidden, Some(vec![40]));
        assert_eq!(e.partitions, Some(2));
        let e = get("pou-ex2");
        assert_eq!((e.train.epochs, e.train.lr, e.train.l2_lambda), (600, 0.00025, 1e-6));
        assert_eq!((e.pou_hidden, e.partitions), (Some(vec![40]), Some(4)));
        let e = get("pou-ex3");
        assert_eq!((e.train.epochs, e.train.lr, e.train.l2_lambda), (10000, 0.000125, 1e-6));
        assert_eq!(e.pou_hidden, Some(vec![40; 4]));
        assert_eq!(e.chain_links, 8);
        let e = get("pou-ex4");
        assert_eq!((e.train.epochs, e.train.lr, e.train.l2_lambda), (3000, 0.000125, 1e-6));
        assert_eq!(e.pou_hidden, Some(vec![40, 40]));
        assert_eq!(e.boundary_points_per_edge, 64);
        for n in ["pou-ex5", "pou-ex6"] {
            let e = get(n);
            assert_eq!((e.train.epochs, e.train.lr, e.train.l2_lambda), (100, 0.00025, 1e-6));
            assert_eq!((e.pou_hidden, e.partitions), (Some(vec![40]), Some(2)));
        }
        for n in ["pinn-ex1", "pinn-ex2"] {
            let e = get(n);
            assert_eq!((e.train.epochs, e.train.lr, e.train.collocation.side), (3000, 0.003, 32));
        }
        assert_eq!(get("pinn-ex1").train.bc_mode, BcMode::HardDirichlet);
        for n in ["poupinn-ex1", "poupinn-ex2"] {
            let e = get(n);
            assert_eq!((e.train.epochs, e.train.lr, e.train.l2_lambda), (6000, 0.001, 1e-4));
            assert_eq!(e.u_hidden, Some(vec![40; 4]));
            assert_eq!(e.pou_hidden, Some(vec![40; 4]));
            assert_eq!(e.train.bc_mode, BcMode::Soft);
        }
        for e in &r {
            assert_eq!(e.train.seed, 12345, "{}", e.name);
            assert!(e.init_models().is_ok(), "{}", e.name);
        }
    }

    #[test]
    fn unknown_name_is_an_error() {
        let err = lookup("nosuch").unwrap_err();
        assert!(err.is_usage());
        assert!(err.to_string().contains("pou-ex3"));
    }

    #[test]
    fn overrides() {
        let base = TrainConfig::default();
        let set = |k: &str, v: &str| apply_overrides(&base, &[(k.into(), v.into())]);
        assert_eq!(set("epochs", "7").unwrap().epochs, 7);
        assert_eq!(set("collocation.side", "8").unwrap().collocation.side, 8);
        assert_eq!(set("bc_mode", "hard-dirichlet").unwrap().bc_mode, BcMode::HardDirichlet);
        assert_eq!(set("init_from", "a/b.json").unwrap().init_from, Some(PathBuf::from("a/b.json")));
        assert!(set("nosuch", "1").unwrap_err().is_usage());
        assert!(set("collocation.nosuch", "1").unwrap_err().is_usage());
        assert!(set("epochs", "-3").unwrap_err().is_usage());
        assert!(set("lr", "0").unwrap_err().is_usage());
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn supervised_data_is_reproducible() {
        let case = pde::case("pou-ex4").unwrap();
        let a = supervised_data(&case, 100, 64, 12345);
        assert_eq!(a.len(), 100 + 256);
        assert_eq!(a, supervised_data(&case, 100, 64, 12345));
        assert!(a.iter().all(|(_, k)| *k > 0.0));
    }
}
