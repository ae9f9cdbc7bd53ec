//! Grid exports and accuracy metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::pde::{ConductivityField, ManufacturedCase, PiecewiseField};
use crate::pou::PartitionModel;
use crate::train::checkpoint::format_real;
use crate::train::ModelSet;

use super::ExperimentError;

pub const GRID_RES: usize = 101;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    #[serde(rename = "u")]
    U,
    #[serde(rename = "K")]
    K,
    #[serde(rename = "partition")]
    Partition,
    #[serde(rename = "error")]
    Error,
    #[serde(rename = "residual")]
    Residual,
}

impl FieldKind {
    pub const ALL: [FieldKind; 5] = [
        FieldKind::U,
        FieldKind::K,
        FieldKind::Partition,
        FieldKind::Error,
        FieldKind::Residual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::U => "u",
            FieldKind::K => "K",
            FieldKind::Partition => "partition",
            FieldKind::Error => "error",
            FieldKind::Residual => "residual",
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FieldKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        FieldKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown field kind '{s}' (expected u, K, partition, error or residual)"))
    }
}

/// Values on an inclusive `nx × ny` grid over the unit square, row-major
/// with `x` varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub nx: usize,
    pub ny: usize,
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

pub fn grid_points(nx: usize, ny: usize) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            pts.push([i as f64 / (nx - 1) as f64, j as f64 / (ny - 1) as f64]);
        }
    }
    pts
}

impl FieldGrid {
    pub fn points(&self) -> Vec<[f64; 2]> {
        grid_points(self.nx, self.ny)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,value\n");
        for (p, v) in self.points().iter().zip(&self.values) {
            let value = if self.kind == FieldKind::Partition {
                format!("{}", *v as i64)
            } else {
                format_real(*v)
            };
            s.push_str(&format!("{},{},{}\n", format_real(p[0]), format_real(p[1]), value));
        }
        s
    }
}

pub fn export_grid(
    field: &dyn Fn([f64; 2]) -> f64,
    kind: FieldKind,
    nx: usize,
    ny: usize,
) -> Result<FieldGrid, ExperimentError> {
    if nx < 2 || ny < 2 {
        return Err(ExperimentError::Usage("grid resolution must be at least 2 per axis".into()));
    }
    let values = grid_points(nx, ny).into_iter().map(field).collect();
    Ok(FieldGrid { nx, ny, kind, values })
}

/// Pointwise evaluator of `kind` for trained models on a registered case.
/// Residuals at points where the truth conductivity jumps are NaN.
pub fn field_fn<'a>(
    models: &'a ModelSet,
    case: &'a ManufacturedCase,
    kind: FieldKind,
) -> Result<Box<dyn Fn([f64; 2]) -> f64 + 'a>, ExperimentError> {
    let missing = |what: &str| ExperimentError::Usage(format!("field '{kind}' needs {what}"));
    Ok(match kind {
        FieldKind::U => {
            let u = models.u.as_ref().ok_or_else(|| missing("a solution network"))?;
            Box::new(move |p| u.value(p))
        }
        FieldKind::K => match &models.pou {
            Some(m) => Box::new(move |p| m.conductivity(p)),
            None => Box::new(move |p| case.field.value(p)),
        },
        FieldKind::Partition => {
            let m = models.pou.as_ref().ok_or_else(|| missing("a partition model"))?;
            Box::new(move |p| m.hard_partition(p) as f64)
        }
        FieldKind::Error => {
            let u = models.u.as_ref().ok_or_else(|| missing("a solution network"))?;
            let t = case.u_true.ok_or_else(|| missing("an exact solution"))?;
            Box::new(move |p| (u.value(p) - t.value(p)).abs())
        }
        FieldKind::Residual => {
            let u = models.u.as_ref().ok_or_else(|| missing("a solution network"))?;
            let f = case.forcing()?;
            let k_field = match &models.pou {
                Some(m) => ConductivityField::Learned(m.clone()),
                None => case.field.clone(),
            };
            Box::new(move |p| match (k_field.jet(p), f.eval(p)) {
                (Ok(k), Ok(fv)) => crate::pde::residual_interior(&u.jet(p), &k, fv),
                _ => f64::NAN,
            })
        }
    })
}

/// `‖u − u_true‖ / ‖u_true‖` over `points`, or the absolute norm when `u_true` vanishes.
pub fn relative_l2(u: &dyn Fn([f64; 2]) -> f64, u_true: &dyn Fn([f64; 2]) -> f64, points: &[[f64; 2]]) -> f64 {
    assert!(!points.is_empty(), "relative_l2 over an empty grid");
    let mut num = 0.0;
    let mut den = 0.0;
    for &p in points {
        let t = u_true(p);
        let d = u(p) - t;
        num += d * d;
        den += t * t;
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionMetrics {
    pub accuracy: f64,
    /// `|e^{c} − K_true| / K_true` per true region, using the matched partition.
    pub conductivity_errors: Vec<f64>,
    /// Partition index matched to each true region.
    pub assignment: Vec<usize>,
    /// Learned level `e^{c}` of each partition.
    pub levels: Vec<f64>,
    pub evaluated_points: usize,
}

fn assignments(regions: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(regions);
    fn rec(regions: usize, parts: usize, injective: bool, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == regions {
            out.push(cur.clone());
            return;
        }
        for p in 0..parts {
            if injective && cur.contains(&p) {
                continue;
            }
            cur.push(p);
            rec(regions, parts, injective, cur, out);
            cur.pop();
        }
    }
    rec(regions, parts, regions <= parts, &mut cur, &mut out);
    out
}

fn nearest_level(levels: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (i, l) in levels.iter().enumerate().skip(1) {
        if (l - target).abs() < (levels[best] - target).abs() {
            best = i;
        }
    }
    best
}

/// Accuracy of the hard partition on grid points farther than `band` from
/// every interface, under the best one-to-one matching of partitions to
/// true regions. A point counts when its argmax partition is the matched
/// one and its level is the learned level nearest the true conductivity.
pub fn partition_metrics(
    model: &PartitionModel,
    truth: PiecewiseField,
    points: &[[f64; 2]],
    band: f64,
) -> PartitionMetrics {
    let levels = model.levels();
    let regions = truth.region_count();
    let mut samples = Vec::new();
    let mut region_k = vec![f64::NAN; regions];
    for &p in points {
        if truth.interface_distance(p) <= band {
            continue;
        }
        let Some(r) = truth.region(p) else { continue };
        let k = truth.eval(p);
        region_k[r] = k;
        let h = model.hard_partition(p);
        samples.push((r, h, nearest_level(&levels, k) == h));
    }
    let mut best: Option<(usize, Vec<usize>)> = None;
    for a in assignments(regions, levels.len()) {
        let hits = samples.iter().filter(|(r, h, near)| *near && a[*r] == *h).count();
        if best.as_ref().is_none_or(|(b, _)| hits > *b) {
            best = Some((hits, a));
        }
    }
    let (hits, assignment) = best.expect("at least one assignment");
    let conductivity_errors = assignment
        .iter()
        .zip(&region_k)
        .map(|(&p, &k)| (levels[p] - k).abs() / k)
        .collect();
    PartitionMetrics {
        accuracy: if samples.is_empty() {
            0.0
        } else {
            hits as f64 / samples.len() as f64
        },
        conductivity_errors,
        assignment,
        levels,
        evaluated_points: samples.len(),
    }
}

/// Learned levels of the two partitions owning the most grid points, as
/// `max / min`.
pub fn dominant_level_ratio(model: &PartitionModel, points: &[[f64; 2]]) -> f64 {
    let levels = model.levels();
    let mut counts = vec![0usize; levels.len()];
    for &p in points {
        counts[model.hard_partition(p)] += 1;
    }
    let mut idx: Vec<usize> = (0..levels.len()).collect();
    idx.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    if idx.len() < 2 {
        return 1.0;
    }
    let (a, b) = (levels[idx[0]], levels[idx[1]]);
    a.max(b) / a.min(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, NetworkParams, NetworkSpec};

    /// Softmax over `(s·(x − 0.5), −s·(x − 0.5))`.
    fn strip_model(s: f64, logc: Vec<f64>) -> PartitionModel {
        let spec = NetworkSpec::mlp(&[], 2, Activation::Softmax).unwrap();
        let zeta = NetworkParams::from_flat(&spec, vec![s, 0.0, -s, 0.0, -0.5 * s, 0.5 * s]).unwrap();
        PartitionModel::new(spec, zeta, logc).unwrap()
    }

    #[test]
    fn relative_l2_cases() {
        let pts = grid_points(11, 11);
        let t = |p: [f64; 2]| (p[0] * 3.0).sin() + p[1];
        assert_eq!(relative_l2(&t, &t, &pts), 0.0);
        assert!((relative_l2(&|p| 2.0 * t(p), &t, &pts) - 1.0).abs() < 1e-14);
        let eps = 1e-3;
        let norm = pts.iter().map(|&p| t(p) * t(p)).sum::<f64>().sqrt();
        let expect = eps * (pts.len() as f64).sqrt() / norm;
        assert!((relative_l2(&|p| t(p) + eps, &t, &pts) - expect).abs() < 1e-12);
        assert!((relative_l2(&|_| 0.5, &|_| 0.0, &pts) - 0.5 * 11.0).abs() < 1e-12);
    }

    #[test]
    fn export_grid_shape() {
        let g = export_grid(&|_| 3.0, FieldKind::K, 101, 101).unwrap();
        assert_eq!(g.values.len(), 10_201);
        assert!(g.values.iter().all(|&v| v == 3.0));
        let csv = g.to_csv();
        assert_eq!(csv.lines().count(), 10_202);
        assert!(csv.starts_with("x,y,value\n"));
        assert!(export_grid(&|_| 0.0, FieldKind::U, 1, 5).is_err());
        let pts = g.points();
        assert_eq!(pts[0], [0.0, 0.0]);
        assert_eq!(pts[100], [1.0, 0.0]);
        assert_eq!(pts[10_200], [1.0, 1.0]);
    }

    #[test]
    fn perfect_and_permuted_strip_models() {
        let pts = grid_points(GRID_RES, GRID_RES);
        // partition 1 wins for x < 0.5, partition 0 for x > 0.5
        let m = strip_model(200.0, vec![4f64.ln(), 0.0]);
        let r = partition_metrics(&m, PiecewiseField::Strips, &pts, 0.02);
        assert_eq!(r.accuracy, 1.0);
        assert!(r.conductivity_errors.iter().all(|&e| e < 1e-12));
        assert_eq!(r.assignment, vec![1, 0]);
        let swapped = strip_model(-200.0, vec![0.0, 4f64.ln()]);
        let s = partition_metrics(&swapped, PiecewiseField::Strips, &pts, 0.02);
        assert_eq!(s.accuracy, r.accuracy);
        assert!((dominant_level_ratio(&m, &pts) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn untrained_model_scores_about_half() {
        let pts = grid_points(GRID_RES, GRID_RES);
        let m = strip_model(0.0, vec![0.0, 0.0]);
        let r = partition_metrics(&m, PiecewiseField::Strips, &pts, 0.02);
        assert!((r.accuracy - 0.5).abs() < 0.01, "{}", r.accuracy);
    }

    #[test]
    fn field_kind_parsing() {
        for k in FieldKind::ALL {
            assert_eq!(k.name().parse::<FieldKind>().unwrap(), k);
        }
        assert!("k".parse::<FieldKind>().is_err());
    }
}
