//! Collocation point sets on the unit square.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainError, STREAM_DATA};
use crate::pde::Edge;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollocationKind {
    /// Cell centres of a `side × side` grid.
    Grid,
    /// `count` points drawn uniformly from the open square.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollocationSpec {
    pub kind: CollocationKind,
    pub side: usize,
    pub count: usize,
    pub boundary_per_edge: usize,
}

impl Default for CollocationSpec {
    fn default() -> Self {
        CollocationSpec {
            kind: CollocationKind::Grid,
            side: 64,
            count: 4096,
            boundary_per_edge: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<[f64; 2]>,
    /// Points of each edge in [`Edge::ALL`] order.
    pub boundary: Vec<(Edge, Vec<[f64; 2]>)>,
    pub spec: CollocationSpec,
    pub seed: u64,
}

impl CollocationSet {
    pub fn boundary_len(&self) -> usize {
        self.boundary.iter().map(|(_, v)| v.len()).sum()
    }
}

pub fn sample_collocation(spec: &CollocationSpec, seed: u64) -> Result<CollocationSet, TrainError> {
    let interior_n = match spec.kind {
        CollocationKind::Grid => spec.side,
        CollocationKind::Uniform => spec.count,
    };
    if interior_n == 0 || spec.boundary_per_edge == 0 {
        return Err(TrainError::Invalid("collocation counts must be positive".into()));
    }
    let interior = match spec.kind {
        CollocationKind::Grid => {
            let n = spec.side;
            let mut pts = Vec::with_capacity(n * n);
            for j in 0..n {
                for i in 0..n {
                    pts.push([(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64]);
                }
            }
            pts
        }
        CollocationKind::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(STREAM_DATA);
            let u = Uniform::new(0.0, 1.0);
            let mut open = || loop {
                let v: f64 = u.sample(&mut rng);
                if v > 0.0 {
                    return v;
                }
            };
            (0..spec.count).map(|_| [open(), open()]).collect()
        }
    };
    let n = spec.boundary_per_edge;
    let boundary = Edge::ALL
        .iter()
        .map(|&e| (e, (0..n).map(|i| e.point((i as f64 + 0.5) / n as f64)).collect()))
        .collect();
    Ok(CollocationSet {
        interior,
        boundary,
        spec: spec.clone(),
        seed,
    })
}
