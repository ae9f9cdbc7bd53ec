//! Reverse accumulation over jet-valued nodes.
//!
//! Each node holds a full [`Jet2`], so a loss that depends on spatial
//! derivatives (a PDE residual) can be differentiated exactly with respect
//! to the parameters it reads through [`Tape::param`] and [`Tape::affine`].

use super::jet::{mul_adjoint, recip_derivs, tanh_derivs, unary_adjoint, Jet2, XX, YY};
use super::NumError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Unary {
        src: usize,
        d1: f64,
        d2: f64,
        d3: f64,
    },
    Affine {
        inputs: Vec<usize>,
        weights: usize,
        bias: Option<usize>,
    },
    Sum(Vec<usize>),
    Laplacian(usize),
    GradDot(usize, usize),
}

/// Parameter gradient plus the adjoint of every node.
#[derive(Clone, Debug)]
pub struct Adjoints {
    pub params: Vec<f64>,
    nodes: Vec<Jet2>,
}

impl Adjoints {
    pub fn of(&self, v: Var) -> Jet2 {
        self.nodes[v.0]
    }
}

pub struct Tape<'p> {
    params: &'p [f64],
    ops: Vec<Op>,
    values: Vec<Jet2>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        Tape {
            params,
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p [f64] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, value: Jet2) -> Var {
        self.ops.push(op);
        self.values.push(value);
        Var(self.ops.len() - 1)
    }

    pub fn value(&self, v: Var) -> Jet2 {
        self.values[v.0]
    }

    /// A jet that does not depend on parameters (inputs, constants).
    pub fn leaf(&mut self, jet: Jet2) -> Var {
        self.push(Op::Leaf, jet)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.leaf(Jet2::constant(value))
    }

    pub fn param(&mut self, index: usize) -> Var {
        let v = Jet2::constant(self.params[index]);
        self.push(Op::Param(index), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0] + self.values[b.0];
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0] - self.values[b.0];
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0].mul(&self.values[b.0]);
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.values[a.0].scale(k);
        self.push(Op::Scale(a.0, k), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    fn unary(&mut self, a: Var, d: (f64, f64, f64, f64)) -> Var {
        let v = self.values[a.0].unary(d.0, d.1, d.2);
        self.push(
            Op::Unary {
                src: a.0,
                d1: d.1,
                d2: d.2,
                d3: d.3,
            },
            v,
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let d = tanh_derivs(self.values[a.0].value);
        self.unary(a, d)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.values[a.0].value.exp();
        self.unary(a, (e, e, e, e))
    }

    /// `exp(a - shift)` with a constant shift.
    pub fn exp_shifted(&mut self, a: Var, shift: f64) -> Var {
        let e = (self.values[a.0].value - shift).exp();
        self.unary(a, (e, e, e, e))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var, NumError> {
        let d = recip_derivs(self.values[a.0].value)?;
        Ok(self.unary(a, d))
    }

    /// `Σ params[weights + k]·inputs[k] (+ params[bias])`.
    pub fn affine(&mut self, inputs: &[Var], weights: usize, bias: Option<usize>) -> Var {
        let xs: Vec<Jet2> = inputs.iter().map(|v| self.values[v.0]).collect();
        let w = &self.params[weights..weights + inputs.len()];
        let b = bias.map_or(0.0, |i| self.params[i]);
        let v = Jet2::affine(&xs, w, b);
        self.push(
            Op::Affine {
                inputs: inputs.iter().map(|v| v.0).collect(),
                weights,
                bias,
            },
            v,
        )
    }

    /// Left-to-right sum.
    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let mut acc = Jet2::ZERO;
        for t in terms {
            acc += self.values[t.0];
        }
        self.push(Op::Sum(terms.iter().map(|v| v.0).collect()), acc)
    }

    /// Softmax composed from shifted exponentials, a sum, a reciprocal and products.
    pub fn softmax(&mut self, logits: &[Var]) -> Vec<Var> {
        let m = logits
            .iter()
            .map(|z| self.values[z.0].value)
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<Var> = logits.iter().map(|&z| self.exp_shifted(z, m)).collect();
        let s = self.sum(&exps);
        let r = self.recip(s).expect("softmax normaliser is at least one");
        exps.iter().map(|&e| self.mul(e, r)).collect()
    }

    /// Scalar node holding `Δa`.
    pub fn laplacian(&mut self, a: Var) -> Var {
        let v = Jet2::constant(self.values[a.0].laplacian());
        self.push(Op::Laplacian(a.0), v)
    }

    /// Scalar node holding `∇a·∇b`.
    pub fn grad_dot(&mut self, a: Var, b: Var) -> Var {
        let (ga, gb) = (self.values[a.0].grad, self.values[b.0].grad);
        let v = Jet2::constant(ga[0] * gb[0] + ga[1] * gb[1]);
        self.push(Op::GradDot(a.0, b.0), v)
    }

    /// Reverse sweep seeded with `∂root/∂root.value = 1`.
    pub fn backward(&self, root: Var) -> Adjoints {
        let mut bars = vec![Jet2::ZERO; self.ops.len()];
        let mut grads = vec![0.0; self.params.len()];
        bars[root.0].value = 1.0;
        for i in (0..=root.0).rev() {
            let bar = bars[i];
            if bar == Jet2::ZERO {
                continue;
            }
            match &self.ops[i] {
                Op::Leaf => {}
                Op::Param(p) => grads[*p] += bar.value,
                Op::Add(a, b) => {
                    bars[*a] += bar;
                    bars[*b] += bar;
                }
                Op::Sub(a, b) => {
                    bars[*a] += bar;
                    bars[*b] += -bar;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.values[*a], self.values[*b]);
                    bars[*a] += mul_adjoint(&vb, &bar);
                    bars[*b] += mul_adjoint(&va, &bar);
                }
                Op::Scale(a, k) => bars[*a] += bar.scale(*k),
                Op::Unary { src, d1, d2, d3 } => {
                    bars[*src] += unary_adjoint(&self.values[*src], *d1, *d2, *d3, &bar);
                }
                Op::Affine {
                    inputs,
                    weights,
                    bias,
                } => {
                    for (k, &src) in inputs.iter().enumerate() {
                        let w = self.params[weights + k];
                        bars[src] += bar.scale(w);
                        let a = self.values[src].to_array();
                        let b = bar.to_array();
                        grads[weights + k] += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                    }
                    if let Some(bi) = bias {
                        grads[*bi] += bar.value;
                    }
                }
                Op::Sum(terms) => {
                    for &t in terms {
                        bars[t] += bar;
                    }
                }
                Op::Laplacian(a) => {
                    bars[*a].hess[XX] += bar.value;
                    bars[*a].hess[YY] += bar.value;
                }
                Op::GradDot(a, b) => {
                    let (ga, gb) = (self.values[*a].grad, self.values[*b].grad);
                    bars[*a].grad[0] += bar.value * gb[0];
                    bars[*a].grad[1] += bar.value * gb[1];
                    bars[*b].grad[0] += bar.value * ga[0];
                    bars[*b].grad[1] += bar.value * ga[1];
                }
            }
        }
        Adjoints {
            params: grads,
            nodes: bars,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::jet::jet_seed;

    #[test]
    fn square_of_param() {
        let p = [3.0];
        let mut t = Tape::new(&p);
        let w = t.param(0);
        let l = t.square(w);
        assert_eq!(t.value(l).value, 9.0);
        assert_eq!(t.backward(l).params, vec![6.0]);
    }

    #[test]
    fn laplacian_of_product_reaches_inputs() {
        // d/dw Δ(w·x·y + w²·x²) = 2w·2 = 4w
        let p = [1.5];
        let mut t = Tape::new(&p);
        let (jx, jy) = jet_seed([0.2, 0.9]);
        let x = t.leaf(jx);
        let y = t.leaf(jy);
        let w = t.param(0);
        let xy = t.mul(x, y);
        let wxy = t.mul(w, xy);
        let wx = t.mul(w, x);
        let wx2 = t.square(wx);
        let s = t.add(wxy, wx2);
        let lap = t.laplacian(s);
        assert!((t.value(lap).value - 2.0 * 1.5 * 1.5).abs() < 1e-14);
        let g = t.backward(lap).params;
        assert!((g[0] - 4.0 * 1.5).abs() < 1e-14);
    }

    #[test]
    fn node_adjoints_are_exposed() {
        let p: [f64; 0] = [];
        let mut t = Tape::new(&p);
        let a = t.leaf(Jet2::constant(2.0));
        let b = t.leaf(Jet2::constant(5.0));
        let c = t.mul(a, b);
        let adj = t.backward(c);
        assert_eq!(adj.of(a).value, 5.0);
        assert_eq!(adj.of(b).value, 2.0);
    }
}
