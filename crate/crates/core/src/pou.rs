//! Partition-of-unity conductivity model.
//!
//! A softmax-headed network produces partition functions `φᵢ(x)` that sum to
//! one; each partition carries a log-conductivity `cᵢ`, and the modelled
//! conductivity is the convex combination `K(x) = Σ φᵢ(x)·exp(cᵢ)`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::network::{self, Activation, NetworkError, NetworkParams, NetworkSpec};
use crate::numcore::Jet2;
use crate::train::{self, HistoryRow, TrainConfig, TrainError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionModel {
    pub spec: NetworkSpec,
    pub zeta: NetworkParams,
    pub logc: Vec<f64>,
}

impl PartitionModel {
    pub fn new(spec: NetworkSpec, zeta: NetworkParams, logc: Vec<f64>) -> Result<Self, NetworkError> {
        let head = *spec.layers().last().expect("validated spec is non-empty");
        if head.activation != Activation::Softmax {
            return Err(NetworkError::SoftmaxNotLast(spec.layers().len() - 1));
        }
        if head.out_dim != logc.len() {
            return Err(NetworkError::ParamLength {
                expected: head.out_dim,
                got: logc.len(),
            });
        }
        let zeta = NetworkParams::from_flat(&spec, zeta.values)?;
        Ok(PartitionModel { spec, zeta, logc })
    }

    /// `hidden` tanh layers, a softmax head of width `n`, Glorot weights and `c = 0`.
    pub fn init(hidden: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Result<Self, NetworkError> {
        let spec = NetworkSpec::mlp(hidden, n, Activation::Softmax)?;
        let zeta = network::init_glorot_with(&spec, rng);
        Self::new(spec, zeta, vec![0.0; n])
    }

    pub fn n_partitions(&self) -> usize {
        self.logc.len()
    }

    /// Learned conductivity level `exp(cᵢ)` of each partition.
    pub fn levels(&self) -> Vec<f64> {
        self.logc.iter().map(|c| c.exp()).collect()
    }

    pub fn phi(&self, x: [f64; 2]) -> Vec<f64> {
        network::forward(&self.zeta, &self.spec, x)
    }

    pub fn phi_jets(&self, x: [f64; 2]) -> Vec<Jet2> {
        network::forward_jet(&self.zeta, &self.spec, x)
    }

    pub fn conductivity(&self, x: [f64; 2]) -> f64 {
        conductivity_from_phi(&self.phi(x), &self.logc)
    }

    pub fn conductivity_jet(&self, x: [f64; 2]) -> Jet2 {
        conductivity_jet_from_phi(&self.phi_jets(x), &self.logc)
    }

    pub fn hard_partition(&self, x: [f64; 2]) -> usize {
        argmax_lowest(&self.phi(x))
    }

    /// `ζ` followed by `c`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.zeta.values.clone();
        v.extend_from_slice(&self.logc);
        v
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count() + self.logc.len()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let nz = self.spec.param_count();
        self.zeta.values.copy_from_slice(&flat[..nz]);
        let n = self.logc.len();
        self.logc.copy_from_slice(&flat[nz..nz + n]);
    }
}

/// `Σ φᵢ·exp(cᵢ)`, left to right.
pub fn conductivity_from_phi(phi: &[f64], logc: &[f64]) -> f64 {
    let mut k = 0.0;
    for (p, c) in phi.iter().zip(logc) {
        k += p * c.exp();
    }
    k
}

pub fn conductivity_jet_from_phi(phi: &[Jet2], logc: &[f64]) -> Jet2 {
    let mut k = Jet2::ZERO;
    for (p, c) in phi.iter().zip(logc) {
        k += p.scale(c.exp());
    }
    k
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fits `Σ φᵢ(x)·exp(cᵢ)` to `(x, K)` samples by Adam on the mean squared
/// error plus the weight penalty.
pub fn fit_supervised(
    model: &PartitionModel,
    dataset: &[([f64; 2], f64)],
    config: &TrainConfig,
) -> Result<(PartitionModel, Vec<HistoryRow>), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::Invalid("empty supervised dataset".into()));
    }
    if let Some((x, k)) = dataset.iter().find(|(_, k)| !(*k > 0.0)) {
        return Err(TrainError::Invalid(format!(
            "non-positive target {k} at ({}, {})",
            x[0], x[1]
        )));
    }
    let models = train::ModelSet::pou_only(model.clone());
    let problem = train::Problem::Supervised {
        data: dataset.to_vec(),
    };
    let outcome = train::train_loop(&problem, models, config, None, "supervised")?;
    let fitted = outcome.models.pou.expect("supervised run keeps its partition model");
    Ok((fitted, outcome.history))
}
