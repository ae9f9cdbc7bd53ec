//! Steady diffusion `∇·(−K∇u) = f` on the unit square: residual operators,
//! boundary specifications, piecewise conductivity fields and manufactured
//! cases whose forcing is derived from analytic jets of the exact solution.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::Jet2;
use crate::pou::PartitionModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("point ({0}, {1}) lies on a conductivity interface; the jet is undefined there")]
    OnInterface(f64, f64),
    #[error("boundary edges must be disjoint and cover the square: {0}")]
    Boundary(String),
    #[error("unknown case '{0}'")]
    UnknownCase(String),
    #[error("case '{0}' has no exact solution")]
    NoExactSolution(String),
}

/// `−K·Δu − ∇K·∇u − f`.
pub fn residual_interior(u: &Jet2, k: &Jet2, f: f64) -> f64 {
    -k.value * u.laplacian() - (k.grad[0] * u.grad[0] + k.grad[1] * u.grad[1]) - f
}

pub fn residual_dirichlet(u_value: f64, g_d: f64) -> f64 {
    u_value - g_d
}

/// `(−K∇u)·n̂ − g_N`.
pub fn residual_neumann(u: &Jet2, k_value: f64, normal: [f64; 2], g_n: f64) -> f64 {
    -k_value * (u.grad[0] * normal[0] + u.grad[1] * normal[1]) - g_n
}

/// Mismatch of the normal flux `K∇u·n̂` across an interface for a shared `u`.
pub fn flux_jump(u: &Jet2, k_left: f64, k_right: f64, normal: [f64; 2]) -> f64 {
    let dn = u.grad[0] * normal[0] + u.grad[1] * normal[1];
    (k_left * dn - k_right * dn).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Edge {
    /// x = 0
    Left,
    /// x = 1
    Right,
    /// y = 0
    Bottom,
    /// y = 1
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Edge::Left => [-1.0, 0.0],
            Edge::Right => [1.0, 0.0],
            Edge::Bottom => [0.0, -1.0],
            Edge::Top => [0.0, 1.0],
        }
    }

    /// Point on the edge at arclength parameter `t ∈ [0, 1]`.
    pub fn point(self, t: f64) -> [f64; 2] {
        match self {
            Edge::Left => [0.0, t],
            Edge::Right => [1.0, t],
            Edge::Bottom => [t, 0.0],
            Edge::Top => [t, 1.0],
        }
    }

    pub fn contains(self, p: [f64; 2]) -> bool {
        match self {
            Edge::Left => p[0] == 0.0,
            Edge::Right => p[0] == 1.0,
            Edge::Bottom => p[1] == 0.0,
            Edge::Top => p[1] == 1.0,
        }
    }
}

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Split of `∂Ω` into Dirichlet and Neumann edges with their data.
#[derive(Clone)]
pub struct BoundarySpec {
    dirichlet: Vec<Edge>,
    neumann: Vec<Edge>,
    g_d: ScalarFn,
    g_n: ScalarFn,
}

impl fmt::Debug for BoundarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundarySpec")
            .field("dirichlet", &self.dirichlet)
            .field("neumann", &self.neumann)
            .finish_non_exhaustive()
    }
}

impl BoundarySpec {
    pub fn new(dirichlet: Vec<Edge>, neumann: Vec<Edge>, g_d: ScalarFn, g_n: ScalarFn) -> Result<Self, PdeError> {
        for e in Edge::ALL {
            let n = dirichlet.iter().filter(|&&d| d == e).count() + neumann.iter().filter(|&&d| d == e).count();
            if n != 1 {
                return Err(PdeError::Boundary(format!("edge {e:?} assigned {n} times")));
            }
        }
        Ok(BoundarySpec {
            dirichlet,
            neumann,
            g_d,
            g_n,
        })
    }

    /// Homogeneous Dirichlet on every edge.
    pub fn all_dirichlet_zero() -> Self {
        Self::new(Edge::ALL.to_vec(), vec![], zero_fn(), zero_fn()).expect("valid split")
    }

    /// Homogeneous Dirichlet on x = 0, 1 and homogeneous Neumann on y = 0, 1.
    pub fn dirichlet_x_neumann_y_zero() -> Self {
        Self::new(vec![Edge::Left, Edge::Right], vec![Edge::Bottom, Edge::Top], zero_fn(), zero_fn())
            .expect("valid split")
    }

    pub fn dirichlet_edges(&self) -> &[Edge] {
        &self.dirichlet
    }

    pub fn neumann_edges(&self) -> &[Edge] {
        &self.neumann
    }

    pub fn is_dirichlet(&self, e: Edge) -> bool {
        self.dirichlet.contains(&e)
    }

    pub fn g_d(&self, p: [f64; 2]) -> f64 {
        (self.g_d)(p)
    }

    pub fn g_n(&self, p: [f64; 2]) -> f64 {
        (self.g_n)(p)
    }

    /// True when every Dirichlet edge is homogeneous, so `g_D` lifts to zero.
    pub fn has_zero_dirichlet(&self) -> bool {
        (0..=16).all(|i| {
            let t = i as f64 / 16.0;
            self.dirichlet.iter().all(|e| self.g_d(e.point(t)) == 0.0)
        })
    }
}

fn zero_fn() -> ScalarFn {
    Arc::new(|_| 0.0)
}

/// Closed-form piecewise-constant conductivities built from `sign`, with
/// `sign(0) = 0` so interface points take the average of adjacent values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiecewiseField {
    /// `1·(1 − sign(x + y − 1))/2 + 10·(1 + sign(x + y − 1))/2`
    Triangles,
    /// `1·(1 − sign(x − 0.5))/2 + 4·(1 + sign(x − 0.5))/2`
    Strips,
    /// `4·(1 − sign(x − 0.5))/2 + 1·(1 + sign(x − 0.5))/2`
    StripsInverted,
    /// Quadrant boxes with values 1, 4, 7, 10 (reconstruction, no closed form published).
    Boxes,
    /// Quadrant boxes with the values permuted (reconstruction).
    ShuffledBoxes,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn lower(s: f64) -> f64 {
    (1.0 - s) / 2.0
}

fn upper(s: f64) -> f64 {
    (1.0 + s) / 2.0
}

impl PiecewiseField {
    pub fn eval(self, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        match self {
            PiecewiseField::Triangles => {
                let s = sign(x + y - 1.0);
                lower(s) + 10.0 * upper(s)
            }
            PiecewiseField::Strips => {
                let s = sign(x - 0.5);
                lower(s) + 4.0 * upper(s)
            }
            PiecewiseField::StripsInverted => {
                let s = sign(x - 0.5);
                4.0 * lower(s) + upper(s)
            }
            PiecewiseField::Boxes | PiecewiseField::ShuffledBoxes => {
                let [bl, br, tl, tr] = self.box_values();
                let (sx, sy) = (sign(x - 0.5), sign(y - 0.5));
                bl * lower(sx) * lower(sy) + br * upper(sx) * lower(sy) + tl * lower(sx) * upper(sy) + tr * upper(sx) * upper(sy)
            }
        }
    }

    /// `[bottom-left, bottom-right, top-left, top-right]` for the box fields.
    fn box_values(self) -> [f64; 4] {
        match self {
            PiecewiseField::ShuffledBoxes => [7.0, 1.0, 10.0, 4.0],
            _ => [1.0, 4.0, 7.0, 10.0],
        }
    }

    /// Distinct conductivity levels, ascending.
    pub fn levels(self) -> Vec<f64> {
        match self {
            PiecewiseField::Triangles => vec![1.0, 10.0],
            PiecewiseField::Strips | PiecewiseField::StripsInverted => vec![1.0, 4.0],
            PiecewiseField::Boxes | PiecewiseField::ShuffledBoxes => vec![1.0, 4.0, 7.0, 10.0],
        }
    }

    /// Number of open subdomains.
    pub fn region_count(self) -> usize {
        match self {
            PiecewiseField::Boxes | PiecewiseField::ShuffledBoxes => 4,
            _ => 2,
        }
    }

    /// Index of the open subdomain containing `p`, `None` on an interface.
    pub fn region(self, p: [f64; 2]) -> Option<usize> {
        let [x, y] = p;
        match self {
            PiecewiseField::Triangles => match sign(x + y - 1.0) {
                s if s < 0.0 => Some(0),
                s if s > 0.0 => Some(1),
                _ => None,
            },
            PiecewiseField::Strips | PiecewiseField::StripsInverted => match sign(x - 0.5) {
                s if s < 0.0 => Some(0),
                s if s > 0.0 => Some(1),
                _ => None,
            },
            PiecewiseField::Boxes | PiecewiseField::ShuffledBoxes => {
                let (sx, sy) = (sign(x - 0.5), sign(y - 0.5));
                if sx == 0.0 || sy == 0.0 {
                    None
                } else {
                    Some(usize::from(sx > 0.0) + 2 * usize::from(sy > 0.0))
                }
            }
        }
    }

    /// Euclidean distance from `p` to the nearest interface.
    pub fn interface_distance(self, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        match self {
            PiecewiseField::Triangles => (x + y - 1.0).abs() / 2f64.sqrt(),
            PiecewiseField::Strips | PiecewiseField::StripsInverted => (x - 0.5).abs(),
            PiecewiseField::Boxes | PiecewiseField::ShuffledBoxes => (x - 0.5).abs().min((y - 0.5).abs()),
        }
    }
}

/// The conductivity `K(x)` entering the residual.
#[derive(Clone, Debug)]
pub enum ConductivityField {
    Constant(f64),
    Piecewise(PiecewiseField),
    Learned(PartitionModel),
}

impl ConductivityField {
    pub fn value(&self, p: [f64; 2]) -> f64 {
        match self {
            ConductivityField::Constant(k) => *k,
            ConductivityField::Piecewise(f) => f.eval(p),
            ConductivityField::Learned(m) => m.conductivity(p),
        }
    }

    /// Value and spatial derivatives; piecewise fields refuse interface points.
    pub fn jet(&self, p: [f64; 2]) -> Result<Jet2, PdeError> {
        match self {
            ConductivityField::Constant(k) => Ok(Jet2::constant(*k)),
            ConductivityField::Piecewise(f) => {
                if f.region(p).is_none() {
                    Err(PdeError::OnInterface(p[0], p[1]))
                } else {
                    Ok(Jet2::constant(f.eval(p)))
                }
            }
            ConductivityField::Learned(m) => Ok(m.conductivity_jet(p)),
        }
    }

    pub fn is_on_interface(&self, p: [f64; 2]) -> bool {
        matches!(self, ConductivityField::Piecewise(f) if f.region(p).is_none())
    }
}

/// Exact solutions with analytic jets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExactSolution {
    /// `sin(2πx)·sin(2πy)`
    ProductSine,
    /// `sin(mπx)`
    SineX { m: u32 },
    /// `c`
    Constant { c: f64 },
}

impl ExactSolution {
    pub fn value(&self, p: [f64; 2]) -> f64 {
        self.jet(p).value
    }

    pub fn jet(&self, p: [f64; 2]) -> Jet2 {
        let [x, y] = p;
        match *self {
            ExactSolution::ProductSine => {
                let w = 2.0 * PI;
                let (sx, cx) = (w * x).sin_cos();
                let (sy, cy) = (w * y).sin_cos();
                Jet2::new(
                    sx * sy,
                    [w * cx * sy, w * sx * cy],
                    [-w * w * sx * sy, w * w * cx * cy, -w * w * sx * sy],
                )
            }
            ExactSolution::SineX { m } => {
                let w = m as f64 * PI;
                let (s, c) = (w * x).sin_cos();
                Jet2::new(s, [w * c, 0.0], [-w * w * s, 0.0, 0.0])
            }
            ExactSolution::Constant { c } => Jet2::constant(c),
        }
    }
}

/// Forcing derived from an exact solution and a conductivity field:
/// `f = −K·Δu − ∇K·∇u`.
#[derive(Clone, Debug)]
pub struct Forcing {
    u: ExactSolution,
    field: ConductivityField,
}

impl Forcing {
    pub fn eval(&self, p: [f64; 2]) -> Result<f64, PdeError> {
        let k = self.field.jet(p)?;
        let u = self.u.jet(p);
        Ok(-k.value * u.laplacian() - (k.grad[0] * u.grad[0] + k.grad[1] * u.grad[1]))
    }

    /// Same forcing from fourth-order central differences of `u` (independent check).
    pub fn eval_fd(&self, p: [f64; 2], h: f64) -> Result<f64, PdeError> {
        let k = self.field.jet(p)?;
        let u = |q: [f64; 2]| self.u.value(q);
        let axis = |d: usize| {
            let at = |s: f64| {
                let mut q = p;
                q[d] += s * h;
                u(q)
            };
            let d1 = (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h);
            let d2 = (-at(2.0) + 16.0 * at(1.0) - 30.0 * at(0.0) + 16.0 * at(-1.0) - at(-2.0)) / (12.0 * h * h);
            (d1, d2)
        };
        let (ux, uxx) = axis(0);
        let (uy, uyy) = axis(1);
        Ok(-k.value * (uxx + uyy) - (k.grad[0] * ux + k.grad[1] * uy))
    }
}

pub fn forcing_oracle(u: ExactSolution, field: ConductivityField) -> Forcing {
    Forcing { u, field }
}

/// Evaluates one of the closed-form conductivity fields.
pub fn k_field_eval(field: PiecewiseField, p: [f64; 2]) -> f64 {
    field.eval(p)
}

/// A registered problem: truth conductivity, boundary data and, for the
/// PDE-driven cases, the exact solution generating the forcing.
#[derive(Clone, Debug)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub u_true: Option<ExactSolution>,
    pub field: ConductivityField,
    pub boundary: BoundarySpec,
    pub description: &'static str,
}

impl ManufacturedCase {
    pub fn forcing(&self) -> Result<Forcing, PdeError> {
        let u = self.u_true.ok_or_else(|| PdeError::NoExactSolution(self.name.into()))?;
        Ok(forcing_oracle(u, self.field.clone()))
    }

    pub fn piecewise(&self) -> Option<PiecewiseField> {
        match self.field {
            ConductivityField::Piecewise(f) => Some(f),
            _ => None,
        }
    }
}

pub const CASE_NAMES: [&str; 10] = [
    "pinn-ex1",
    "pinn-ex2",
    "pou-ex1",
    "pou-ex2",
    "pou-ex3",
    "pou-ex4",
    "pou-ex5",
    "pou-ex6",
    "poupinn-ex1",
    "poupinn-ex2",
];

/// Looks up a case by its registry name.
pub fn case(name: &str) -> Result<ManufacturedCase, PdeError> {
    use PiecewiseField::*;
    let supervised = |name, f, description| ManufacturedCase {
        name,
        u_true: None,
        field: ConductivityField::Piecewise(f),
        boundary: BoundarySpec::all_dirichlet_zero(),
        description,
    };
    Ok(match name {
        "pinn-ex1" => ManufacturedCase {
            name: "pinn-ex1",
            u_true: Some(ExactSolution::ProductSine),
            field: ConductivityField::Constant(1.0),
            boundary: BoundarySpec::all_dirichlet_zero(),
            description: "u = sin(2πx)sin(2πy), K = 1, homogeneous Dirichlet",
        },
        "pinn-ex2" => ManufacturedCase {
            name: "pinn-ex2",
            u_true: Some(ExactSolution::SineX { m: 2 }),
            field: ConductivityField::Constant(1.0),
            boundary: BoundarySpec::dirichlet_x_neumann_y_zero(),
            description: "u = sin(2πx), K = 1, Dirichlet on x-edges, Neumann on y-edges",
        },
        "pou-ex1" => supervised("pou-ex1", Triangles, "triangles {1, 10}, two partitions"),
        "pou-ex2" => supervised("pou-ex2", Triangles, "triangles {1, 10}, four partitions"),
        "pou-ex3" => supervised("pou-ex3", ShuffledBoxes, "shuffled quadrant boxes, four partitions"),
        "pou-ex4" => supervised("pou-ex4", Boxes, "quadrant boxes, four partitions"),
        "pou-ex5" => supervised("pou-ex5", Strips, "strips {1, 4}, two partitions"),
        "pou-ex6" => supervised("pou-ex6", StripsInverted, "inverted strips {4, 1}, two partitions"),
        "poupinn-ex1" => ManufacturedCase {
            name: "poupinn-ex1",
            u_true: Some(ExactSolution::SineX { m: 2 }),
            field: ConductivityField::Piecewise(Strips),
            boundary: BoundarySpec::dirichlet_x_neumann_y_zero(),
            description: "strips {1, 4} discovered from the residual, u = sin(2πx)",
        },
        "poupinn-ex2" => ManufacturedCase {
            name: "poupinn-ex2",
            u_true: Some(ExactSolution::SineX { m: 2 }),
            field: ConductivityField::Piecewise(StripsInverted),
            boundary: BoundarySpec::dirichlet_x_neumann_y_zero(),
            description: "inverted strips {4, 1} discovered from the residual, u = sin(2πx)",
        },
        other => return Err(PdeError::UnknownCase(other.to_string())),
    })
}

/// The forcing printed for the product-sine case, `−8π²K·sin(2πx)·sin(2πy)`.
pub fn printed_product_sine_forcing(k: f64, p: [f64; 2]) -> f64 {
    -8.0 * PI * PI * k * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin()
}
