//! Numerical kernel: second-order spatial jets and exact parameter gradients.

pub mod jet;
pub mod tape;

pub use jet::{jet_apply, jet_seed, softmax_jets, Jet2, Primitive};
pub use tape::{Adjoints, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("primitive expects {expected} inputs, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("non-finite loss {0}")]
    NonFinite(f64),
}

/// `∂loss/∂params`, aligned with the flattening of the owning parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient {
    pub entries: Vec<f64>,
}

impl ParamGradient {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A scalar loss of a flat parameter vector with an exact gradient.
pub trait Objective {
    fn loss(&self, params: &[f64]) -> Result<f64, NumError>;
    fn gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>), NumError>;
}

/// Adapts a tape-building closure into an [`Objective`].
pub struct TapeObjective<F>(pub F);

impl<F> Objective for TapeObjective<F>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Var,
{
    fn loss(&self, params: &[f64]) -> Result<f64, NumError> {
        let mut tape = Tape::new(params);
        let root = (self.0)(&mut tape);
        finite(tape.value(root).value)
    }

    fn gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>), NumError> {
        let mut tape = Tape::new(params);
        let root = (self.0)(&mut tape);
        let loss = finite(tape.value(root).value)?;
        Ok((loss, tape.backward(root).params))
    }
}

fn finite(v: f64) -> Result<f64, NumError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NumError::NonFinite(v))
    }
}

/// Exact gradient of a loss built on a [`Tape`] from `params`.
pub fn param_gradient<F>(loss_evaluator: F, params: &[f64]) -> Result<ParamGradient, NumError>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Var,
{
    let (_, entries) = TapeObjective(loss_evaluator).gradient(params)?;
    Ok(ParamGradient { entries })
}

/// Fourth-order central-difference gradient of `objective.loss`.
pub fn fd_gradient(objective: &dyn Objective, params: &[f64], step: f64) -> Result<Vec<f64>, NumError> {
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        let mut at = |k: f64| {
            p[i] = orig + k * step;
            objective.loss(&p)
        };
        let (u2, u1, d1, d2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
        p[i] = orig;
        out.push((-u2 + 8.0 * u1 - 8.0 * d1 + d2) / (12.0 * step));
    }
    Ok(out)
}

/// `max_i |analytic_i − fd_i| / max(|analytic_i|, 1e-3·max_j |analytic_j|, 1e-12)`.
pub fn max_relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / a.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Compares the exact gradient of `objective` against central differences.
pub fn fd_check(objective: &dyn Objective, params: &[f64], step: f64) -> Result<f64, NumError> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let (_, analytic) = objective.gradient(params)?;
    let fd = fd_gradient(objective, params, step)?;
    Ok(max_relative_error(&analytic, &fd))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_square() {
        let g = param_gradient(
            |t| {
                let w = t.param(0);
                t.square(w)
            },
            &[3.0],
        )
        .unwrap();
        assert_eq!(g.entries, vec![6.0]);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let g = param_gradient(|t| t.constant(4.0), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(g.entries, vec![0.0; 3]);
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let r = param_gradient(|t| t.constant(f64::NAN), &[1.0]);
        assert!(matches!(r, Err(NumError::NonFinite(_))));
    }

    #[test]
    fn fd_exact_for_linear_loss() {
        let obj = TapeObjective(|t: &mut Tape<'_>| {
            let a = t.param(0);
            let b = t.param(1);
            let b3 = t.scale(b, 3.0);
            t.add(a, b3)
        });
        for step in [1e-2, 1e-5, 1e-3] {
            assert!(fd_check(&obj, &[0.7, -1.3], step).unwrap() < 1e-10);
        }
    }

    #[test]
    fn fd_square_at_one() {
        let obj = TapeObjective(|t: &mut Tape<'_>| {
            let w = t.param(0);
            t.square(w)
        });
        assert!(fd_check(&obj, &[1.0], 1e-5).unwrap() <= 1e-9);
    }

    #[test]
    fn gradient_is_linear_in_losses() {
        let p = [0.4, -0.8];
        let f1 = |t: &mut Tape<'_>| {
            let a = t.param(0);
            let e = t.exp(a);
            let b = t.param(1);
            t.mul(e, b)
        };
        let f2 = |t: &mut Tape<'_>| {
            let b = t.param(1);
            t.tanh(b)
        };
        let g1 = param_gradient(f1, &p).unwrap().entries;
        let g2 = param_gradient(f2, &p).unwrap().entries;
        let gs = param_gradient(
            |t| {
                let l1 = f1(t);
                let l2 = f2(t);
                t.add(l1, l2)
            },
            &p,
        )
        .unwrap()
        .entries;
        for i in 0..2 {
            assert_eq!(gs[i], g1[i] + g2[i]);
        }
    }
}
