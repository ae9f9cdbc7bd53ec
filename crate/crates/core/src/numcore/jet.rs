//! Second-order forward jets over the 2-D spatial input.
//!
//! A [`Jet2`] carries a scalar together with its gradient and Hessian with
//! respect to `(x, y)`. Every primitive also has an adjoint rule
//! (`*_adjoint`) so that reverse accumulation can run *through* a jet
//! computation: the adjoint of a jet is itself stored as a `Jet2` whose
//! slots hold `∂L/∂value`, `∂L/∂grad` and `∂L/∂hess`.

use std::ops::{Add, AddAssign, Neg, Sub};

use super::NumError;

/// Index of `∂xx` in [`Jet2::hess`].
pub const XX: usize = 0;
/// Index of `∂xy` in [`Jet2::hess`].
pub const XY: usize = 1;
/// Index of `∂yy` in [`Jet2::hess`].
pub const YY: usize = 2;

/// Value, gradient and symmetric Hessian of a scalar field at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    /// `(∂/∂x, ∂/∂y)`
    pub grad: [f64; 2],
    /// `(∂xx, ∂xy, ∂yy)`
    pub hess: [f64; 3],
}

/// Seed jets for the two coordinates of `x`.
pub fn jet_seed(x: [f64; 2]) -> (Jet2, Jet2) {
    (
        Jet2 {
            value: x[0],
            grad: [1.0, 0.0],
            hess: [0.0; 3],
        },
        Jet2 {
            value: x[1],
            grad: [0.0, 1.0],
            hess: [0.0; 3],
        },
    )
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 {
        value: 0.0,
        grad: [0.0; 2],
        hess: [0.0; 3],
    };

    pub fn constant(value: f64) -> Self {
        Jet2 {
            value,
            ..Jet2::ZERO
        }
    }

    pub fn new(value: f64, grad: [f64; 2], hess: [f64; 3]) -> Self {
        Jet2 { value, grad, hess }
    }

    pub fn laplacian(&self) -> f64 {
        self.hess[XX] + self.hess[YY]
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.hess.iter().all(|h| h.is_finite())
    }

    /// Flattened as `[value, ∂x, ∂y, ∂xx, ∂xy, ∂yy]`.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.value,
            self.grad[0],
            self.grad[1],
            self.hess[XX],
            self.hess[XY],
            self.hess[YY],
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Jet2 {
            value: a[0],
            grad: [a[1], a[2]],
            hess: [a[3], a[4], a[5]],
        }
    }

    pub fn scale(&self, k: f64) -> Jet2 {
        Jet2 {
            value: k * self.value,
            grad: [k * self.grad[0], k * self.grad[1]],
            hess: [k * self.hess[0], k * self.hess[1], k * self.hess[2]],
        }
    }

    /// Composition with a scalar function `g` given `g(v), g'(v), g''(v)`.
    pub fn unary(&self, d0: f64, d1: f64, d2: f64) -> Jet2 {
        let [gx, gy] = self.grad;
        Jet2 {
            value: d0,
            grad: [d1 * gx, d1 * gy],
            hess: [
                d1 * self.hess[XX] + d2 * gx * gx,
                d1 * self.hess[XY] + d2 * gx * gy,
                d1 * self.hess[YY] + d2 * gy * gy,
            ],
        }
    }

    pub fn mul(&self, b: &Jet2) -> Jet2 {
        let a = self;
        Jet2 {
            value: a.value * b.value,
            grad: [
                a.value * b.grad[0] + b.value * a.grad[0],
                a.value * b.grad[1] + b.value * a.grad[1],
            ],
            hess: [
                a.value * b.hess[XX] + b.value * a.hess[XX] + 2.0 * a.grad[0] * b.grad[0],
                a.value * b.hess[XY]
                    + b.value * a.hess[XY]
                    + (a.grad[0] * b.grad[1] + a.grad[1] * b.grad[0]),
                a.value * b.hess[YY] + b.value * a.hess[YY] + 2.0 * a.grad[1] * b.grad[1],
            ],
        }
    }

    pub fn tanh(&self) -> Jet2 {
        let (d0, d1, d2, _) = tanh_derivs(self.value);
        self.unary(d0, d1, d2)
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.unary(e, e, e)
    }

    pub fn recip(&self) -> Result<Jet2, NumError> {
        let (d0, d1, d2, _) = recip_derivs(self.value)?;
        Ok(self.unary(d0, d1, d2))
    }

    /// `Σ wᵢ·aᵢ + bias`, accumulated left to right with the bias added last.
    pub fn affine(inputs: &[Jet2], weights: &[f64], bias: f64) -> Jet2 {
        debug_assert_eq!(inputs.len(), weights.len());
        let mut acc = Jet2::ZERO;
        for (a, &w) in inputs.iter().zip(weights) {
            acc.value += w * a.value;
            acc.grad[0] += w * a.grad[0];
            acc.grad[1] += w * a.grad[1];
            acc.hess[0] += w * a.hess[0];
            acc.hess[1] += w * a.hess[1];
            acc.hess[2] += w * a.hess[2];
        }
        acc.value += bias;
        acc
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, b: Jet2) -> Jet2 {
        Jet2 {
            value: self.value + b.value,
            grad: [self.grad[0] + b.grad[0], self.grad[1] + b.grad[1]],
            hess: [
                self.hess[0] + b.hess[0],
                self.hess[1] + b.hess[1],
                self.hess[2] + b.hess[2],
            ],
        }
    }
}

impl AddAssign for Jet2 {
    fn add_assign(&mut self, b: Jet2) {
        *self = *self + b;
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, b: Jet2) -> Jet2 {
        self + (-b)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

/// `tanh` through a single `exp`; saturates cleanly to ±1.
#[inline]
pub fn tanh(v: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * v).exp() + 1.0)
}

/// `(tanh, tanh′, tanh″, tanh‴)` at `v`.
pub fn tanh_derivs(v: f64) -> (f64, f64, f64, f64) {
    let t = tanh(v);
    let s = 1.0 - t * t;
    (t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0))
}

/// `(1/v, -1/v², 2/v³, -6/v⁴)`.
pub fn recip_derivs(v: f64) -> Result<(f64, f64, f64, f64), NumError> {
    if v == 0.0 {
        return Err(NumError::Domain("reciprocal of zero"));
    }
    let r = 1.0 / v;
    let r2 = r * r;
    Ok((r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2))
}

/// Adjoint of [`Jet2::unary`]: maps the output adjoint to the input adjoint.
pub fn unary_adjoint(input: &Jet2, d1: f64, d2: f64, d3: f64, out_bar: &Jet2) -> Jet2 {
    let [gx, gy] = input.grad;
    let [hxx, hxy, hyy] = input.hess;
    let [bxx, bxy, byy] = out_bar.hess;
    let [bgx, bgy] = out_bar.grad;
    Jet2 {
        value: d1 * out_bar.value
            + d2 * (gx * bgx + gy * bgy + hxx * bxx + hxy * bxy + hyy * byy)
            + d3 * (gx * gx * bxx + gx * gy * bxy + gy * gy * byy),
        grad: [
            d1 * bgx + d2 * (2.0 * gx * bxx + gy * bxy),
            d1 * bgy + d2 * (2.0 * gy * byy + gx * bxy),
        ],
        hess: [d1 * bxx, d1 * bxy, d1 * byy],
    }
}

/// Adjoint of [`Jet2::mul`] with respect to its left operand `a`, given the
/// right operand `b`. The right adjoint is `mul_adjoint(a, out_bar)`.
pub fn mul_adjoint(b: &Jet2, out_bar: &Jet2) -> Jet2 {
    let [bxx, bxy, byy] = out_bar.hess;
    Jet2 {
        value: b.value * out_bar.value
            + b.grad[0] * out_bar.grad[0]
            + b.grad[1] * out_bar.grad[1]
            + b.hess[XX] * bxx
            + b.hess[XY] * bxy
            + b.hess[YY] * byy,
        grad: [
            b.value * out_bar.grad[0] + 2.0 * b.grad[0] * bxx + b.grad[1] * bxy,
            b.value * out_bar.grad[1] + 2.0 * b.grad[1] * byy + b.grad[0] * bxy,
        ],
        hess: [b.value * bxx, b.value * bxy, b.value * byy],
    }
}

/// Softmax over a vector of jets with max-subtraction. The shift is a
/// constant so it does not enter the derivatives.
pub fn softmax_jets(logits: &[Jet2]) -> Vec<Jet2> {
    let m = logits
        .iter()
        .map(|z| z.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<Jet2> = logits
        .iter()
        .map(|z| {
            let mut s = *z;
            s.value -= m;
            s.exp()
        })
        .collect();
    let mut sum = Jet2::ZERO;
    for e in &exps {
        sum += *e;
    }
    // sum ≥ 1 because the max logit contributes exp(0)
    let r = sum.recip().expect("softmax normaliser is at least one");
    exps.iter().map(|e| e.mul(&r)).collect()
}

/// Elementary operations a jet can be pushed through.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Affine { weights: Vec<f64>, bias: f64 },
    Tanh,
    Exp,
    /// Component `i` of the softmax over all inputs.
    SoftmaxComponent(usize),
    Reciprocal,
}

/// Apply a primitive to its input jets.
pub fn jet_apply(primitive: &Primitive, inputs: &[Jet2]) -> Result<Jet2, NumError> {
    let arity = |n: usize| -> Result<(), NumError> {
        if inputs.len() == n {
            Ok(())
        } else {
            Err(NumError::Arity {
                expected: n,
                got: inputs.len(),
            })
        }
    };
    match primitive {
        Primitive::Add => {
            arity(2)?;
            Ok(inputs[0] + inputs[1])
        }
        Primitive::Sub => {
            arity(2)?;
            Ok(inputs[0] - inputs[1])
        }
        Primitive::Mul => {
            arity(2)?;
            Ok(inputs[0].mul(&inputs[1]))
        }
        Primitive::Affine { weights, bias } => {
            arity(weights.len())?;
            Ok(Jet2::affine(inputs, weights, *bias))
        }
        Primitive::Tanh => {
            arity(1)?;
            Ok(inputs[0].tanh())
        }
        Primitive::Exp => {
            arity(1)?;
            Ok(inputs[0].exp())
        }
        Primitive::SoftmaxComponent(i) => {
            if *i >= inputs.len() {
                return Err(NumError::Arity {
                    expected: i + 1,
                    got: inputs.len(),
                });
            }
            Ok(softmax_jets(inputs)[*i])
        }
        Primitive::Reciprocal => {
            arity(1)?;
            inputs[0].recip()
        }
    }
}
