//! Loss functionals and their batched evaluation with exact gradients.
//!
//! The free functions evaluate losses pointwise from closures and serve as
//! the readable reference. [`Engine`] computes the same quantities in chunks
//! through the batched network kernels, propagating residual adjoints back
//! through the jets into every trainable parameter.

use std::ops::Range;

use crate::network::{self, Channels, NetworkSpec, Workspace};
use crate::numcore::jet::mul_adjoint;
use crate::numcore::Jet2;
use crate::pde::{self, BoundarySpec, ConductivityField, Edge};

use super::{BoundaryPoint, ModelSet, PdeProblem, Problem};

/// Points per chunk in the batched evaluation. Chunks are reduced in order.
pub const CHUNK: usize = 128;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub pde: f64,
    pub bc: f64,
    pub l2: f64,
    pub total: f64,
}

/// `pde + bc + l2`.
pub fn loss_total(pde: f64, bc: f64, l2: f64) -> f64 {
    pde + bc + l2
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonFiniteResidual {
    pub point: [f64; 2],
    pub detail: String,
}

fn mean_square(residuals: impl Iterator<Item = ([f64; 2], f64, String)>) -> Result<f64, NonFiniteResidual> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (p, r, ctx) in residuals {
        if !r.is_finite() {
            return Err(NonFiniteResidual {
                point: p,
                detail: format!("residual {r} ({ctx})"),
            });
        }
        acc += r * r;
        n += 1;
    }
    assert!(n > 0, "loss over an empty point set");
    Ok(acc / n as f64)
}

/// Mean squared interior residual.
pub fn loss_pde(
    u: &dyn Fn([f64; 2]) -> Jet2,
    field: &ConductivityField,
    forcing: &dyn Fn([f64; 2]) -> f64,
    points: &[[f64; 2]],
) -> Result<f64, NonFiniteResidual> {
    mean_square(points.iter().map(|&p| {
        let uj = u(p);
        let f = forcing(p);
        match field.jet(p) {
            Ok(k) => (p, pde::residual_interior(&uj, &k, f), format!("u={:?} K={:?} f={f}", uj.value, k.value)),
            Err(e) => (p, f64::NAN, e.to_string()),
        }
    }))
}

/// Mean squared boundary residual over all points; Dirichlet edges use
/// `u − g_D`, Neumann edges `(−K∇u)·n̂ − g_N`.
pub fn loss_bc(
    u: &dyn Fn([f64; 2]) -> Jet2,
    k: &dyn Fn([f64; 2]) -> f64,
    boundary: &BoundarySpec,
    points: &[(Edge, Vec<[f64; 2]>)],
) -> Result<f64, NonFiniteResidual> {
    mean_square(points.iter().flat_map(|(e, pts)| {
        pts.iter().map(move |&p| {
            let uj = u(p);
            let r = if boundary.is_dirichlet(*e) {
                pde::residual_dirichlet(uj.value, boundary.g_d(p))
            } else {
                pde::residual_neumann(&uj, k(p), e.outward_normal(), boundary.g_n(p))
            };
            (p, r, format!("{e:?} edge, u={}", uj.value))
        })
    }))
}

/// Product over the Dirichlet edges of the distance-like factors
/// `x`, `1 − x`, `y`, `1 − y`.
pub fn dirichlet_factor(x: [f64; 2], edges: &[Edge]) -> Jet2 {
    let (jx, jy) = crate::numcore::jet_seed(x);
    let one = Jet2::constant(1.0);
    let mut d = one;
    for e in edges {
        let f = match e {
            Edge::Left => jx,
            Edge::Right => one - jx,
            Edge::Bottom => jy,
            Edge::Top => one - jy,
        };
        d = d.mul(&f);
    }
    d
}

/// `D(x)·raw(x)`; vanishes on every edge in `edges`.
pub fn hard_dirichlet_ansatz(raw: &Jet2, x: [f64; 2], edges: &[Edge]) -> Jet2 {
    dirichlet_factor(x, edges).mul(raw)
}

struct UPart<'a> {
    spec: &'a NetworkSpec,
    range: Range<usize>,
    ansatz: Option<&'a [Edge]>,
}

struct PouPart<'a> {
    spec: &'a NetworkSpec,
    zeta: Range<usize>,
    logc: Range<usize>,
}

/// Scratch state for repeated loss/gradient evaluation.
#[derive(Default)]
pub struct Engine {
    ws_u: Workspace,
    ws_p: Workspace,
    bar_u: Vec<f64>,
    bar_p: Vec<f64>,
    pts: Vec<[f64; 2]>,
    levels: Vec<f64>,
    u_jets: Vec<Jet2>,
    k_jets: Vec<Jet2>,
}

#[inline]
fn put_jet(buf: &mut [f64], j: usize, s: usize, b: usize, v: &Jet2) {
    let base = j * 6 * b + s;
    for (c, x) in v.to_array().into_iter().enumerate() {
        buf[base + c * b] = x;
    }
}

#[inline]
fn jet_dot(a: &Jet2, b: &Jet2) -> f64 {
    a.to_array().iter().zip(b.to_array()).map(|(x, y)| x * y).sum()
}

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loss at `flat` (laid out as [`ModelSet::flat`]); when `grad` is given,
    /// `∂loss/∂flat` is written into it. `subset` restricts a supervised
    /// problem to those samples, in that order.
    pub fn evaluate(
        &mut self,
        problem: &Problem,
        models: &ModelSet,
        flat: &[f64],
        l2_lambda: f64,
        bc_weight: f64,
        subset: Option<&[usize]>,
        mut grad: Option<&mut [f64]>,
    ) -> Result<LossParts, NonFiniteResidual> {
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut off = 0;
        let u = models.u.as_ref().map(|m| {
            let n = m.spec.param_count();
            off += n;
            UPart {
                spec: &m.spec,
                range: 0..n,
                ansatz: m.ansatz.as_deref(),
            }
        });
        let pou = models.pou.as_ref().map(|m| {
            let nz = m.spec.param_count();
            let p = PouPart {
                spec: &m.spec,
                zeta: off..off + nz,
                logc: off + nz..off + nz + m.n_partitions(),
            };
            off += nz + m.n_partitions();
            p
        });
        if let Some(p) = &pou {
            self.levels.clear();
            self.levels.extend(flat[p.logc.clone()].iter().map(|c| c.exp()));
        }

        let (pde_loss, bc_loss) = match problem {
            Problem::Supervised { data } => {
                let pou = pou.as_ref().expect("supervised fitting needs a partition model");
                let all: Vec<usize>;
                let idx = match subset {
                    Some(s) => s,
                    None => {
                        all = (0..data.len()).collect();
                        &all
                    }
                };
                let scale = 1.0 / idx.len() as f64;
                let mut acc = 0.0;
                for chunk in idx.chunks(CHUNK) {
                    acc += self.supervised_chunk(data, chunk, pou, flat, scale, grad.as_deref_mut())?;
                }
                (acc * scale, 0.0)
            }
            Problem::Pde(pp) => {
                let u = u.as_ref().expect("PDE problems need a solution network");
                let ni = pp.interior.len();
                let scale = 1.0 / ni as f64;
                let mut acc = 0.0;
                let mut s = 0;
                while s < ni {
                    let e = (s + CHUNK).min(ni);
                    acc += self.interior_chunk(pp, s..e, u, pou.as_ref(), flat, scale, grad.as_deref_mut())?;
                    s = e;
                }
                let pde_loss = acc * scale;
                let nb = pp.boundary.len();
                let bscale = 1.0 / nb as f64;
                let mut bacc = 0.0;
                let mut s = 0;
                while s < nb {
                    let e = (s + CHUNK).min(nb);
                    bacc += self.boundary_chunk(
                        pp,
                        s..e,
                        u,
                        pou.as_ref(),
                        flat,
                        bscale * bc_weight,
                        grad.as_deref_mut(),
                    )?;
                    s = e;
                }
                (pde_loss, bacc * bscale)
            }
        };

        let mask = models.weight_mask();
        let mut l2 = 0.0;
        if l2_lambda != 0.0 {
            let mut acc = 0.0;
            for (i, (&w, &is_w)) in flat.iter().zip(&mask).enumerate() {
                if is_w {
                    acc += w * w;
                    if let Some(g) = grad.as_deref_mut() {
                        g[i] += 2.0 * l2_lambda * w;
                    }
                }
            }
            l2 = l2_lambda * acc;
        }
        Ok(LossParts {
            pde: pde_loss,
            bc: bc_loss,
            l2,
            total: loss_total(pde_loss, bc_weight * bc_loss, l2),
        })
    }

    /// Returns `Σ r²` over the chunk and accumulates `scale·∂(Σ r²)`.
    fn supervised_chunk(
        &mut self,
        data: &[([f64; 2], f64)],
        idx: &[usize],
        pou: &PouPart<'_>,
        flat: &[f64],
        scale: f64,
        grad: Option<&mut [f64]>,
    ) -> Result<f64, NonFiniteResidual> {
        self.pts.clear();
        self.pts.extend(idx.iter().map(|&i| data[i].0));
        let b = idx.len();
        let n = pou.logc.len();
        network::forward_batch(pou.spec, &flat[pou.zeta.clone()], &self.pts, Channels::Value, &mut self.ws_p);
        let out = self.ws_p.output();
        let mut acc = 0.0;
        let want_grad = grad.is_some();
        if want_grad {
            self.bar_p.clear();
            self.bar_p.resize(n * b, 0.0);
        }
        let mut c_bar = vec![0.0; n];
        for (s, &i) in idx.iter().enumerate() {
            let mut k = 0.0;
            for j in 0..n {
                k += out[j * b + s] * self.levels[j];
            }
            let r = k - data[i].1;
            if !r.is_finite() {
                return Err(NonFiniteResidual {
                    point: data[i].0,
                    detail: format!("K={k}, target={}", data[i].1),
                });
            }
            acc += r * r;
            if want_grad {
                let rb = 2.0 * r * scale;
                for j in 0..n {
                    self.bar_p[j * b + s] = rb * self.levels[j];
                    c_bar[j] += rb * self.levels[j] * out[j * b + s];
                }
            }
        }
        if let Some(g) = grad {
            network::backward_batch(
                pou.spec,
                &flat[pou.zeta.clone()],
                &mut self.ws_p,
                &self.bar_p,
                &mut g[pou.zeta.clone()],
            );
            for (j, cb) in c_bar.iter().enumerate() {
                g[pou.logc.start + j] += cb;
            }
        }
        Ok(acc)
    }

    /// Fills `u_jets` (after the ansatz) and `k_jets` for `self.pts`.
    fn jets(
        &mut self,
        u: &UPart<'_>,
        pou: Option<&PouPart<'_>>,
        fixed_k: Option<&[Jet2]>,
        flat: &[f64],
    ) {
        let b = self.pts.len();
        network::forward_batch(u.spec, &flat[u.range.clone()], &self.pts, Channels::Jet, &mut self.ws_u);
        self.u_jets.clear();
        for s in 0..b {
            let raw = self.ws_u.output_jet(0, s);
            self.u_jets.push(match u.ansatz {
                Some(edges) => hard_dirichlet_ansatz(&raw, self.pts[s], edges),
                None => raw,
            });
        }
        self.k_jets.clear();
        match (fixed_k, pou) {
            (Some(k), _) => self.k_jets.extend_from_slice(k),
            (None, Some(p)) => {
                network::forward_batch(p.spec, &flat[p.zeta.clone()], &self.pts, Channels::Jet, &mut self.ws_p);
                for s in 0..b {
                    let mut k = Jet2::ZERO;
                    for (j, lv) in self.levels.iter().enumerate() {
                        k += self.ws_p.output_jet(j, s).scale(*lv);
                    }
                    self.k_jets.push(k);
                }
            }
            (None, None) => panic!("PDE problem without a conductivity"),
        }
    }

    /// Propagates per-point `ū` (after the ansatz) and `K̄` jets into `grad`.
    #[allow(clippy::too_many_arguments)]
    fn backprop(
        &mut self,
        u: &UPart<'_>,
        pou: Option<&PouPart<'_>>,
        learned_k: bool,
        flat: &[f64],
        u_bar: &[Jet2],
        k_bar: &[Jet2],
        grad: &mut [f64],
    ) {
        let b = self.pts.len();
        self.bar_u.clear();
        self.bar_u.resize(6 * b, 0.0);
        for s in 0..b {
            let raw_bar = match u.ansatz {
                Some(edges) => mul_adjoint(&dirichlet_factor(self.pts[s], edges), &u_bar[s]),
                None => u_bar[s],
            };
            put_jet(&mut self.bar_u, 0, s, b, &raw_bar);
        }
        network::backward_batch(
            u.spec,
            &flat[u.range.clone()],
            &mut self.ws_u,
            &self.bar_u,
            &mut grad[u.range.clone()],
        );
        if !learned_k {
            return;
        }
        let p = pou.expect("learned conductivity needs a partition model");
        let n = self.levels.len();
        self.bar_p.clear();
        self.bar_p.resize(n * 6 * b, 0.0);
        for s in 0..b {
            for j in 0..n {
                let phi = self.ws_p.output_jet(j, s);
                put_jet(&mut self.bar_p, j, s, b, &k_bar[s].scale(self.levels[j]));
                grad[p.logc.start + j] += self.levels[j] * jet_dot(&phi, &k_bar[s]);
            }
        }
        network::backward_batch(
            p.spec,
            &flat[p.zeta.clone()],
            &mut self.ws_p,
            &self.bar_p,
            &mut grad[p.zeta.clone()],
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn interior_chunk(
        &mut self,
        pp: &PdeProblem,
        range: Range<usize>,
        u: &UPart<'_>,
        pou: Option<&PouPart<'_>>,
        flat: &[f64],
        scale: f64,
        grad: Option<&mut [f64]>,
    ) -> Result<f64, NonFiniteResidual> {
        self.pts.clear();
        self.pts.extend_from_slice(&pp.interior[range.clone()]);
        let fixed = pp.fixed_k_interior.as_ref().map(|k| &k[range.clone()]);
        self.jets(u, pou, fixed, flat);
        let mut acc = 0.0;
        let want = grad.is_some();
        let mut u_bar = Vec::with_capacity(if want { range.len() } else { 0 });
        let mut k_bar = Vec::with_capacity(if want { range.len() } else { 0 });
        for (s, i) in range.clone().enumerate() {
            let (uj, kj, f) = (self.u_jets[s], self.k_jets[s], pp.forcing[i]);
            let r = pde::residual_interior(&uj, &kj, f);
            if !r.is_finite() {
                return Err(NonFiniteResidual {
                    point: self.pts[s],
                    detail: format!("interior residual {r}: u={} K={} f={f}", uj.value, kj.value),
                });
            }
            acc += r * r;
            if want {
                let rb = 2.0 * r * scale;
                let mut ub = Jet2::ZERO;
                ub.grad = [-kj.grad[0] * rb, -kj.grad[1] * rb];
                ub.hess = [-kj.value * rb, 0.0, -kj.value * rb];
                u_bar.push(ub);
                let mut kb = Jet2::ZERO;
                kb.value = -uj.laplacian() * rb;
                kb.grad = [-uj.grad[0] * rb, -uj.grad[1] * rb];
                k_bar.push(kb);
            }
        }
        if let Some(g) = grad {
            self.backprop(u, pou, fixed.is_none(), flat, &u_bar, &k_bar, g);
        }
        Ok(acc)
    }

    #[allow(clippy::too_many_arguments)]
    fn boundary_chunk(
        &mut self,
        pp: &PdeProblem,
        range: Range<usize>,
        u: &UPart<'_>,
        pou: Option<&PouPart<'_>>,
        flat: &[f64],
        scale: f64,
        grad: Option<&mut [f64]>,
    ) -> Result<f64, NonFiniteResidual> {
        let pts: &[BoundaryPoint] = &pp.boundary[range.clone()];
        self.pts.clear();
        self.pts.extend(pts.iter().map(|b| b.x));
        let fixed = pp.fixed_k_boundary.as_ref().map(|k| &k[range.clone()]);
        self.jets(u, pou, fixed, flat);
        let mut acc = 0.0;
        let want = grad.is_some();
        let mut u_bar = Vec::new();
        let mut k_bar = Vec::new();
        for (s, bp) in pts.iter().enumerate() {
            let (uj, kj) = (self.u_jets[s], self.k_jets[s]);
            let n = bp.edge.outward_normal();
            let r = if bp.dirichlet {
                pde::residual_dirichlet(uj.value, bp.g)
            } else {
                pde::residual_neumann(&uj, kj.value, n, bp.g)
            };
            if !r.is_finite() {
                return Err(NonFiniteResidual {
                    point: bp.x,
                    detail: format!("{:?} boundary residual {r}: u={} K={}", bp.edge, uj.value, kj.value),
                });
            }
            acc += r * r;
            if want {
                let rb = 2.0 * r * scale;
                let mut ub = Jet2::ZERO;
                let mut kb = Jet2::ZERO;
                if bp.dirichlet {
                    ub.value = rb;
                } else {
                    ub.grad = [-kj.value * n[0] * rb, -kj.value * n[1] * rb];
                    kb.value = -(uj.grad[0] * n[0] + uj.grad[1] * n[1]) * rb;
                }
                u_bar.push(ub);
                k_bar.push(kb);
            }
        }
        if let Some(g) = grad {
            self.backprop(u, pou, fixed.is_none(), flat, &u_bar, &k_bar, g);
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::ExactSolution;

    #[test]
    fn loss_pde_of_exact_solution_vanishes() {
        let c = crate::pde::case("pinn-ex1").unwrap();
        let u_true = c.u_true.unwrap();
        let f = c.forcing().unwrap();
        let pts: Vec<[f64; 2]> = (1..20).map(|i| [i as f64 / 20.0, (i as f64 * 0.37).fract()]).collect();
        let l = loss_pde(&|p| u_true.jet(p), &c.field, &|p| f.eval(p).unwrap(), &pts).unwrap();
        assert!(l <= 1e-20, "{l}");
    }

    #[test]
    fn loss_pde_is_mean_square() {
        let k = ConductivityField::Constant(1.0);
        let zero = |_: [f64; 2]| Jet2::ZERO;
        // r = −f for u ≡ 0
        assert_eq!(loss_pde(&zero, &k, &|_| -2.0, &[[0.5, 0.5]]).unwrap(), 4.0);
        let f = |p: [f64; 2]| if p[0] < 0.5 { 1.0 } else { 3.0 };
        assert_eq!(loss_pde(&zero, &k, &f, &[[0.25, 0.5], [0.75, 0.5]]).unwrap(), 5.0);
        assert!(loss_pde(&zero, &k, &|_| f64::NAN, &[[0.5, 0.5]]).is_err());
    }

    #[test]
    fn loss_bc_cases() {
        let spec = BoundarySpec::all_dirichlet_zero();
        let pts: Vec<(Edge, Vec<[f64; 2]>)> = Edge::ALL.iter().map(|&e| (e, vec![e.point(0.3)])).collect();
        let one = |_: [f64; 2]| 1.0;
        assert_eq!(loss_bc(&|_| Jet2::ZERO, &one, &spec, &pts).unwrap(), 0.0);
        assert_eq!(loss_bc(&|_| Jet2::constant(3.0), &one, &spec, &pts).unwrap(), 9.0);
        let mixed = BoundarySpec::dirichlet_x_neumann_y_zero();
        let u = ExactSolution::SineX { m: 2 };
        assert!(loss_bc(&|p| u.jet(p), &one, &mixed, &pts).unwrap() < 1e-28);
    }

    #[test]
    fn ansatz_vanishes_and_matches_fd() {
        let edges = Edge::ALL;
        let raw = Jet2::constant(1.0);
        assert_eq!(hard_dirichlet_ansatz(&raw, [0.0, 0.7], &edges).value, 0.0);
        assert_eq!(hard_dirichlet_ansatz(&raw, [0.5, 0.5], &edges).value, 0.0625);
        let raw_at = |p: [f64; 2]| {
            let (x, y) = crate::numcore::jet_seed(p);
            x.mul(&y).tanh()
        };
        let val = |p: [f64; 2]| hard_dirichlet_ansatz(&raw_at(p), p, &edges[..2]).value;
        let p = [0.3, 0.6];
        let j = hard_dirichlet_ansatz(&raw_at(p), p, &edges[..2]);
        let h = 1e-4;
        let fx = (val([p[0] + h, p[1]]) - val([p[0] - h, p[1]])) / (2.0 * h);
        let fyy = (val([p[0], p[1] + h]) - 2.0 * val(p) + val([p[0], p[1] - h])) / (h * h);
        let fxy = (val([p[0] + h, p[1] + h]) - val([p[0] + h, p[1] - h]) - val([p[0] - h, p[1] + h])
            + val([p[0] - h, p[1] - h]))
            / (4.0 * h * h);
        assert!((j.grad[0] - fx).abs() / fx.abs() < 1e-6);
        assert!((j.hess[2] - fyy).abs() / fyy.abs() < 1e-5);
        assert!((j.hess[1] - fxy).abs() / fxy.abs() < 1e-5);
    }

    #[test]
    fn total_is_sum() {
        assert_eq!(loss_total(0.0, 0.0, 0.0), 0.0);
        assert_eq!(loss_total(1.0, 2.0, 3.5), 6.5);
    }
}
