//! Training: problems, configuration, the Adam loop, checkpoints and history.

pub mod adam;
pub mod checkpoint;
pub mod collocation;
pub mod loss;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{Checkpoint, RngState};
pub use collocation::{sample_collocation, CollocationKind, CollocationSet, CollocationSpec};
pub use loss::{hard_dirichlet_ansatz, loss_bc, loss_pde, loss_total, Engine, LossParts};

use crate::network::{self, NetworkError, NetworkParams, NetworkSpec};
use crate::numcore::{Jet2, NumError, Objective};
use crate::pde::{Edge, ManufacturedCase, PdeError};
use crate::pou::PartitionModel;

pub const STREAM_U_INIT: u64 = 0;
pub const STREAM_POU_INIT: u64 = 1;
pub const STREAM_DATA: u64 = 2;
pub const STREAM_SHUFFLE: u64 = 3;

/// A ChaCha8 generator seeded with `seed` on the given stream.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("non-finite loss at epoch {epoch}: {detail} at ({}, {})", point[0], point[1])]
    NonFinite {
        epoch: u64,
        point: [f64; 2],
        detail: String,
        last_good: Box<Checkpoint>,
        history: Vec<HistoryRow>,
    },
    #[error("checkpoint does not match the run: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcMode {
    Soft,
    HardDirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Parameters, optimizer moments, rng and epoch counter continue.
    Resume,
    /// Only parameters are taken; the optimizer starts fresh.
    Weights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u64,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub l2_lambda: f64,
    pub seed: u64,
    pub collocation: CollocationSpec,
    pub bc_mode: BcMode,
    pub bc_weight: f64,
    /// Minibatch size for supervised fitting; `None` is full batch.
    pub batch_size: Option<usize>,
    pub init_from: Option<PathBuf>,
    pub init_mode: InitMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            l2_lambda: 0.0,
            seed: 12345,
            collocation: CollocationSpec::default(),
            bc_mode: BcMode::Soft,
            bc_weight: 1.0,
            batch_size: None,
            init_from: None,
            init_mode: InitMode::Resume,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Invalid(m.into()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(0.0..1.0).contains(&b) {
                return bad("Adam betas must lie in [0, 1)");
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !(self.l2_lambda >= 0.0) || !(self.bc_weight >= 0.0) {
            return bad("l2_lambda and bc_weight must be non-negative");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be positive");
        }
        Ok(())
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Solution network, optionally wrapped in the hard Dirichlet ansatz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UNet {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
    /// Dirichlet edges multiplied into the output (`None` for soft mode).
    pub ansatz: Option<Vec<Edge>>,
}

impl UNet {
    pub fn jet(&self, x: [f64; 2]) -> Jet2 {
        let raw = network::forward_jet(&self.params, &self.spec, x)[0];
        match &self.ansatz {
            Some(edges) => hard_dirichlet_ansatz(&raw, x, edges),
            None => raw,
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        match &self.ansatz {
            Some(_) => self.jet(x).value,
            None => network::forward(&self.params, &self.spec, x)[0],
        }
    }
}

/// The trainable models of a run. The flat parameter vector is the u-net
/// parameters followed by `ζ` and then `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub u: Option<UNet>,
    pub pou: Option<PartitionModel>,
}

impl ModelSet {
    pub fn pou_only(model: PartitionModel) -> Self {
        ModelSet {
            u: None,
            pou: Some(model),
        }
    }

    pub fn param_count(&self) -> usize {
        self.u.as_ref().map_or(0, |u| u.spec.param_count()) + self.pou.as_ref().map_or(0, |p| p.param_count())
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        if let Some(u) = &self.u {
            v.extend_from_slice(&u.params.values);
        }
        if let Some(p) = &self.pou {
            v.extend(p.flat());
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut off = 0;
        if let Some(u) = &mut self.u {
            let n = u.params.values.len();
            u.params.values.copy_from_slice(&flat[..n]);
            off = n;
        }
        if let Some(p) = &mut self.pou {
            p.set_flat(&flat[off..]);
        }
    }

    /// `true` for weight-matrix entries of every network.
    pub fn weight_mask(&self) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.param_count());
        if let Some(u) = &self.u {
            m.extend(u.spec.weight_mask());
        }
        if let Some(p) = &self.pou {
            m.extend(p.spec.weight_mask());
            m.extend(std::iter::repeat_n(false, p.n_partitions()));
        }
        m
    }

    /// Same architectures and ansatz, parameters aside.
    pub fn same_shape(&self, other: &ModelSet) -> bool {
        let u_eq = match (&self.u, &other.u) {
            (None, None) => true,
            (Some(a), Some(b)) => a.spec == b.spec && a.ansatz == b.ansatz,
            _ => false,
        };
        let p_eq = match (&self.pou, &other.pou) {
            (None, None) => true,
            (Some(a), Some(b)) => a.spec == b.spec && a.n_partitions() == b.n_partitions(),
            _ => false,
        };
        u_eq && p_eq
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub x: [f64; 2],
    pub edge: Edge,
    pub dirichlet: bool,
    /// `g_D` or `g_N` at `x`.
    pub g: f64,
}

/// Collocated PDE data: interior points with oracle forcing, boundary
/// points with their data, and the conductivity when it is not learned.
#[derive(Clone, Debug)]
pub struct PdeProblem {
    pub interior: Vec<[f64; 2]>,
    pub forcing: Vec<f64>,
    pub boundary: Vec<BoundaryPoint>,
    pub fixed_k_interior: Option<Vec<Jet2>>,
    pub fixed_k_boundary: Option<Vec<Jet2>>,
}

impl PdeProblem {
    /// Interior points on a conductivity interface are dropped.
    pub fn new(case: &ManufacturedCase, set: &CollocationSet, learned_k: bool) -> Result<Self, TrainError> {
        let forcing_fn = case.forcing()?;
        let mut interior = Vec::with_capacity(set.interior.len());
        let mut forcing = Vec::with_capacity(set.interior.len());
        for &p in &set.interior {
            if case.field.is_on_interface(p) {
                continue;
            }
            interior.push(p);
            forcing.push(forcing_fn.eval(p)?);
        }
        let mut boundary = Vec::with_capacity(set.boundary_len());
        for (e, pts) in &set.boundary {
            let dirichlet = case.boundary.is_dirichlet(*e);
            for &x in pts {
                let g = if dirichlet {
                    case.boundary.g_d(x)
                } else {
                    case.boundary.g_n(x)
                };
                boundary.push(BoundaryPoint {
                    x,
                    edge: *e,
                    dirichlet,
                    g,
                });
            }
        }
        if interior.is_empty() || boundary.is_empty() {
            return Err(TrainError::Invalid("empty collocation set".into()));
        }
        let (fixed_k_interior, fixed_k_boundary) = if learned_k {
            (None, None)
        } else {
            let ki = interior.iter().map(|&p| case.field.jet(p)).collect::<Result<Vec<_>, _>>()?;
            let kb = boundary.iter().map(|b| Jet2::constant(case.field.value(b.x))).collect();
            (Some(ki), Some(kb))
        };
        Ok(PdeProblem {
            interior,
            forcing,
            boundary,
            fixed_k_interior,
            fixed_k_boundary,
        })
    }
}

#[derive(Clone, Debug)]
pub enum Problem {
    /// Fit `K` to `(x, K)` samples.
    Supervised { data: Vec<([f64; 2], f64)> },
    /// Residual-driven training; `K` is learned when the problem carries none.
    Pde(PdeProblem),
}

impl Problem {
    fn check_models(&self, models: &ModelSet) -> Result<(), TrainError> {
        match self {
            Problem::Supervised { data } => {
                if models.pou.is_none() {
                    return Err(TrainError::Invalid("supervised fitting needs a partition model".into()));
                }
                if data.is_empty() {
                    return Err(TrainError::Invalid("empty supervised dataset".into()));
                }
            }
            Problem::Pde(p) => {
                let u = models
                    .u
                    .as_ref()
                    .ok_or_else(|| TrainError::Invalid("PDE training needs a solution network".into()))?;
                if u.spec.output_dim() != 1 {
                    return Err(TrainError::Invalid("solution network must have one output".into()));
                }
                if p.fixed_k_interior.is_none() && models.pou.is_none() {
                    return Err(TrainError::Invalid("learned conductivity needs a partition model".into()));
                }
                if u.ansatz.is_some() && p.boundary.iter().any(|b| b.dirichlet && b.g != 0.0) {
                    return Err(TrainError::Invalid("hard Dirichlet ansatz requires g_D = 0".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: u64,
    pub loss_total: f64,
    pub loss_pde: f64,
    pub loss_bc: f64,
    pub loss_l2: f64,
}

impl HistoryRow {
    fn new(epoch: u64, p: &LossParts) -> Self {
        HistoryRow {
            epoch,
            loss_total: p.total,
            loss_pde: p.pde,
            loss_bc: p.bc,
            loss_l2: p.l2,
        }
    }
}

pub const HISTORY_HEADER: &str = "epoch,loss_total,loss_pde,loss_bc,loss_l2";

pub fn history_csv(rows: &[HistoryRow]) -> String {
    use checkpoint::format_real as f;
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            f(r.loss_total),
            f(r.loss_pde),
            f(r.loss_bc),
            f(r.loss_l2)
        ));
    }
    s
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<(), TrainError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(history_csv(rows).as_bytes())?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub models: ModelSet,
    pub history: Vec<HistoryRow>,
    /// Full-data loss before the first update.
    pub initial: LossParts,
    /// Full-data loss after the last update.
    pub final_loss: LossParts,
    pub checkpoint: Checkpoint,
}

/// Runs `config.epochs` epochs of Adam.
///
/// A full-batch epoch is one update and its history row holds the loss at
/// the parameters before that update. With `batch_size`, a supervised epoch
/// visits the data in a reshuffled order and its row holds the mean of the
/// minibatch losses. `init` (or `config.init_from`) warm-starts the run.
pub fn train_loop(
    problem: &Problem,
    mut models: ModelSet,
    config: &TrainConfig,
    init: Option<&Checkpoint>,
    case_name: &str,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    problem.check_models(&models)?;
    let loaded;
    let init = match (init, &config.init_from) {
        (Some(c), _) => Some(c),
        (None, Some(path)) => {
            loaded = Checkpoint::load(path)?;
            Some(&loaded)
        }
        (None, None) => None,
    };

    let n = models.param_count();
    let mut adam = AdamState::new(n);
    let mut rng = rng_stream(config.seed, STREAM_SHUFFLE);
    let mut epoch = 0u64;
    if let Some(ck) = init {
        if !models.same_shape(&ck.models) {
            return Err(TrainError::Mismatch("model architectures differ".into()));
        }
        models = ck.models.clone();
        if config.init_mode == InitMode::Resume {
            adam = ck.adam.clone();
            rng = ck.rng.restore()?;
            epoch = ck.epoch;
        }
    }

    let digest = checkpoint::config_digest(config);
    let snapshot = |models: &ModelSet, adam: &AdamState, rng: &ChaCha8Rng, epoch: u64| Checkpoint {
        version: checkpoint::CHECKPOINT_VERSION,
        config_digest: digest.clone(),
        case: case_name.to_string(),
        bc_mode: config.bc_mode,
        models: models.clone(),
        adam: adam.clone(),
        epoch,
        rng: RngState::capture(rng),
    };

    let mut engine = Engine::new();
    let mut flat = models.flat();
    let mut grad = vec![0.0; n];
    let hyper = config.hyper();
    let (l2, bcw) = (config.l2_lambda, config.bc_weight);
    let mut history = Vec::with_capacity(config.epochs as usize);

    let fail = |e: loss::NonFiniteResidual, epoch: u64, ck: Checkpoint, history: Vec<HistoryRow>| TrainError::NonFinite {
        epoch,
        point: e.point,
        detail: e.detail,
        last_good: Box::new(ck),
        history,
    };

    let initial = match engine.evaluate(problem, &models, &flat, l2, bcw, None, None) {
        Ok(p) => p,
        Err(e) => return Err(fail(e, epoch, snapshot(&models, &adam, &rng, epoch), history)),
    };
    let batch = match (problem, config.batch_size) {
        (Problem::Supervised { data }, Some(b)) if b < data.len() => Some((data.len(), b)),
        _ => None,
    };
    let mut order: Vec<usize> = batch.map_or(Vec::new(), |(len, _)| (0..len).collect());

    for _ in 0..config.epochs {
        let e = epoch + 1;
        let row = match batch {
            None => {
                let parts = engine
                    .evaluate(problem, &models, &flat, l2, bcw, None, Some(&mut grad))
                    .map_err(|err| fail(err, e, snapshot(&models, &adam, &rng, epoch), history.clone()))?;
                if !parts.total.is_finite() {
                    return Err(fail(
                        loss::NonFiniteResidual {
                            point: [f64::NAN; 2],
                            detail: format!("total loss {}", parts.total),
                        },
                        e,
                        snapshot(&models, &adam, &rng, epoch),
                        history,
                    ));
                }
                adam_step(&mut flat, &grad, &mut adam, hyper);
                HistoryRow::new(e, &parts)
            }
            Some((_, b)) => {
                for (i, o) in order.iter_mut().enumerate() {
                    *o = i;
                }
                order.shuffle(&mut rng);
                let mut sum = LossParts::default();
                let mut count = 0usize;
                for chunk in order.chunks(b) {
                    let before = (flat.clone(), adam.clone());
                    let parts = engine
                        .evaluate(problem, &models, &flat, l2, bcw, Some(chunk), Some(&mut grad))
                        .map_err(|err| {
                            let mut good = models.clone();
                            good.set_flat(&before.0);
                            fail(err, e, snapshot(&good, &before.1, &rng, epoch), history.clone())
                        })?;
                    adam_step(&mut flat, &grad, &mut adam, hyper);
                    sum.pde += parts.pde;
                    sum.bc += parts.bc;
                    sum.l2 += parts.l2;
                    sum.total += parts.total;
                    count += 1;
                }
                let c = count as f64;
                HistoryRow::new(
                    e,
                    &LossParts {
                        pde: sum.pde / c,
                        bc: sum.bc / c,
                        l2: sum.l2 / c,
                        total: sum.total / c,
                    },
                )
            }
        };
        models.set_flat(&flat);
        epoch = e;
        history.push(row);
    }

    let final_loss = engine
        .evaluate(problem, &models, &flat, l2, bcw, None, None)
        .map_err(|err| fail(err, epoch, snapshot(&models, &adam, &rng, epoch), history.clone()))?;
    let checkpoint = snapshot(&models, &adam, &rng, epoch);
    Ok(TrainOutcome {
        models,
        history,
        initial,
        final_loss,
        checkpoint,
    })
}

/// Full-data training loss as a function of the flat parameter vector.
pub struct TrainObjective<'a> {
    pub problem: &'a Problem,
    pub models: &'a ModelSet,
    pub l2_lambda: f64,
    pub bc_weight: f64,
}

impl Objective for TrainObjective<'_> {
    fn loss(&self, params: &[f64]) -> Result<f64, NumError> {
        let mut m = self.models.clone();
        m.set_flat(params);
        let p = Engine::new()
            .evaluate(self.problem, &m, params, self.l2_lambda, self.bc_weight, None, None)
            .map_err(|_| NumError::NonFinite(f64::NAN))?;
        Ok(p.total)
    }

    fn gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>), NumError> {
        let mut m = self.models.clone();
        m.set_flat(params);
        let mut g = vec![0.0; params.len()];
        let p = Engine::new()
            .evaluate(self.problem, &m, params, self.l2_lambda, self.bc_weight, None, Some(&mut g))
            .map_err(|_| NumError::NonFinite(f64::NAN))?;
        Ok((p.total, g))
    }
}
