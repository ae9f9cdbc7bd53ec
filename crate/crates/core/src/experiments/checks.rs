//! Numerical self-checks: jets and parameter gradients against finite
//! differences, partition unity and positivity, and manufactured residuals.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::Serialize;

use crate::network::{self, Activation, NetworkSpec};
use crate::numcore::fd_check;
use crate::pde::{self, Edge, ExactSolution};
use crate::pou::PartitionModel;
use crate::train::{
    rng_stream, sample_collocation, CollocationKind, CollocationSpec, ModelSet, PdeProblem, Problem, TrainObjective,
    UNet, STREAM_POU_INIT, STREAM_U_INIT,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub note: Option<String>,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        CheckResult {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
            note: None,
        }
    }
}

/// `|a − b| / max(|a|, floor)`.
fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(floor)
}

const JET_FLOOR: f64 = 1e-3;

fn random_spec(rng: &mut impl Rng) -> NetworkSpec {
    let depth = rng.gen_range(1..=3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..=10)).collect();
    if rng.gen_bool(0.5) {
        NetworkSpec::mlp(&hidden, rng.gen_range(1..=3), Activation::Linear).unwrap()
    } else {
        NetworkSpec::mlp(&hidden, rng.gen_range(2..=4), Activation::Softmax).unwrap()
    }
}

/// Worst relative errors of jet gradients and Hessians against fourth-order
/// central differences of the network value over `trials` random networks.
pub fn jet_fd_errors(trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_stream(seed, STREAM_U_INIT);
    let unit = Uniform::new(0.05, 0.95);
    let h = 1e-3;
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let spec = random_spec(&mut rng);
        let params = network::init_glorot_with(&spec, &mut rng);
        let x = [unit.sample(&mut rng), unit.sample(&mut rng)];
        let jets = network::forward_jet(&params, &spec, x);
        let f = |dx: f64, dy: f64| network::forward(&params, &spec, [x[0] + dx, x[1] + dy]);
        let d1 = |o: usize, ax: usize| {
            let at = |k: f64| if ax == 0 { f(k * h, 0.0)[o] } else { f(0.0, k * h)[o] };
            (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h)
        };
        let d2 = |o: usize, ax: usize| {
            let at = |k: f64| if ax == 0 { f(k * h, 0.0)[o] } else { f(0.0, k * h)[o] };
            (-at(2.0) + 16.0 * at(1.0) - 30.0 * at(0.0) + 16.0 * at(-1.0) - at(-2.0)) / (12.0 * h * h)
        };
        for (o, j) in jets.iter().enumerate() {
            worst_g = worst_g.max(rel(j.grad[0], d1(o, 0), JET_FLOOR));
            worst_g = worst_g.max(rel(j.grad[1], d1(o, 1), JET_FLOOR));
            let w = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
            let mut dxy = 0.0;
            for (a, wa) in w {
                for (b, wb) in w {
                    dxy += wa * wb * f(a * h, b * h)[o];
                }
            }
            dxy /= 144.0 * h * h;
            worst_h = worst_h.max(rel(j.hess[0], d2(o, 0), JET_FLOOR));
            worst_h = worst_h.max(rel(j.hess[1], dxy, JET_FLOOR));
            worst_h = worst_h.max(rel(j.hess[2], d2(o, 1), JET_FLOOR));
        }
    }
    (worst_g, worst_h)
}

/// Worst relative error of full-loss parameter gradients against central
/// differences: 2-16-1 networks on 8 collocation points for the forward,
/// hard-ansatz and joint modes, plus a supervised partition fit.
pub fn loss_gradient_error(seed: u64) -> f64 {
    loss_gradient_error_step(seed, 1e-3)
}

/// As [`loss_gradient_error`] with an explicit finite-difference step.
pub fn loss_gradient_error_step(seed: u64, step: f64) -> f64 {
    let set = sample_collocation(
        &CollocationSpec {
            kind: CollocationKind::Uniform,
            side: 0,
            count: 8,
            boundary_per_edge: 2,
        },
        seed,
    )
    .expect("valid collocation spec");
    let unet = |ansatz: Option<Vec<Edge>>| {
        let spec = NetworkSpec::mlp(&[16], 1, Activation::Linear).unwrap();
        let params = network::init_glorot_with(&spec, &mut rng_stream(seed, STREAM_U_INIT));
        UNet { spec, params, ansatz }
    };
    let pou = || {
        let mut m = PartitionModel::init(&[8], 2, &mut rng_stream(seed, STREAM_POU_INIT)).unwrap();
        m.logc = vec![0.4, -0.3];
        m
    };
    let mut runs: Vec<(Problem, ModelSet, f64)> = Vec::new();
    let ex2 = pde::case("pinn-ex2").unwrap();
    runs.push((
        Problem::Pde(PdeProblem::new(&ex2, &set, false).unwrap()),
        ModelSet {
            u: Some(unet(None)),
            pou: None,
        },
        1e-3,
    ));
    let ex1 = pde::case("pinn-ex1").unwrap();
    runs.push((
        Problem::Pde(PdeProblem::new(&ex1, &set, false).unwrap()),
        ModelSet {
            u: Some(unet(Some(Edge::ALL.to_vec()))),
            pou: None,
        },
        0.0,
    ));
    let joint = pde::case("poupinn-ex1").unwrap();
    runs.push((
        Problem::Pde(PdeProblem::new(&joint, &set, true).unwrap()),
        ModelSet {
            u: Some(unet(None)),
            pou: Some(pou()),
        },
        1e-4,
    ));
    let data = set
        .interior
        .iter()
        .map(|&p| (p, pde::k_field_eval(pde::PiecewiseField::Strips, p)))
        .collect();
    runs.push((Problem::Supervised { data }, ModelSet::pou_only(pou()), 1e-6));

    runs.iter()
        .map(|(problem, models, l2)| {
            let obj = TrainObjective {
                problem,
                models,
                l2_lambda: *l2,
                bc_weight: 1.0,
            };
            fd_check(&obj, &models.flat(), step).expect("finite losses")
        })
        .fold(0.0, f64::max)
}

/// Max `|Σφ − 1|` and min `K` over `points` random points, drawing fresh
/// random parameters every 100 points.
pub fn unity_and_positivity(points: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_stream(seed, STREAM_POU_INIT);
    let unit = Uniform::new(0.0, 1.0);
    let coeff = Uniform::new(-3.0, 3.0);
    let (mut worst, mut min_k) = (0.0f64, f64::INFINITY);
    let mut model = None;
    for i in 0..points {
        if i % 100 == 0 {
            let n = rng.gen_range(1..=5);
            let mut m = PartitionModel::init(&[10, 10], n, &mut rng).unwrap();
            for v in m.zeta.values.iter_mut() {
                *v *= 4.0;
            }
            m.logc = (0..n).map(|_| coeff.sample(&mut rng)).collect();
            model = Some(m);
        }
        let m = model.as_ref().unwrap();
        let x = [unit.sample(&mut rng), unit.sample(&mut rng)];
        let s: f64 = m.phi(x).iter().sum();
        worst = worst.max((s - 1.0).abs());
        min_k = min_k.min(m.conductivity(x));
    }
    (worst, min_k)
}

/// Max interior residual of the exact solution with oracle forcing and max
/// oracle-vs-FD forcing difference on a `n × n` grid, skipping interfaces.
pub fn manufactured_errors(case_name: &str, n: usize) -> Result<(f64, f64), pde::PdeError> {
    let case = pde::case(case_name)?;
    let u = case.u_true.ok_or_else(|| pde::PdeError::NoExactSolution(case_name.into()))?;
    let f = case.forcing()?;
    let (mut res, mut fd) = (0.0f64, 0.0f64);
    for j in 0..n {
        for i in 0..n {
            let p = [i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64];
            if case.field.is_on_interface(p) {
                continue;
            }
            let k = case.field.jet(p)?;
            let fv = f.eval(p)?;
            res = res.max(pde::residual_interior(&u.jet(p), &k, fv).abs());
            let scale = fv.abs().max(1.0);
            fd = fd.max((fv - f.eval_fd(p, 1e-3)?).abs() / scale);
        }
    }
    Ok((res, fd))
}

/// Compares the printed product-sine forcing with the oracle. Returns the
/// max deviation and whether the printed formula is exactly the negated oracle.
pub fn product_sine_sign_check() -> (f64, bool) {
    let u = ExactSolution::ProductSine;
    let mut dev = 0.0f64;
    let mut negated = true;
    for j in 1..8 {
        for i in 1..8 {
            let p = [i as f64 / 8.0 + 0.01, j as f64 / 8.0 + 0.02];
            let oracle = -u.jet(p).laplacian();
            let printed = pde::printed_product_sine_forcing(1.0, p);
            dev = dev.max((oracle - printed).abs());
            negated &= (oracle + printed).abs() <= 1e-9 * oracle.abs().max(1.0);
        }
    }
    (dev, negated)
}

/// The full suite printed by `check`.
pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let (g, h) = jet_fd_errors(100, 2024);
    out.push(CheckResult::at_most("jet gradient vs FD (rel)", g, 1e-6));
    out.push(CheckResult::at_most("jet Hessian vs FD (rel)", h, 1e-4));
    out.push(CheckResult::at_most("loss parameter gradient vs FD (rel)", loss_gradient_error(7), 1e-6));
    let (unity, min_k) = unity_and_positivity(10_000, 99);
    out.push(CheckResult::at_most("max |sum(phi) - 1|", unity, 1e-12));
    out.push(CheckResult {
        name: "min conductivity".into(),
        value: min_k,
        threshold: 0.0,
        pass: min_k > 0.0,
        note: None,
    });
    for name in ["pinn-ex1", "pinn-ex2", "poupinn-ex1", "poupinn-ex2"] {
        match manufactured_errors(name, 33) {
            Ok((r, fd)) => {
                out.push(CheckResult::at_most(&format!("{name} max |residual(u_true)|"), r, 1e-10));
                out.push(CheckResult::at_most(&format!("{name} oracle vs FD forcing (rel)"), fd, 1e-7));
            }
            Err(e) => out.push(CheckResult {
                name: format!("{name} manufactured residual"),
                value: f64::NAN,
                threshold: 0.0,
                pass: false,
                note: Some(e.to_string()),
            }),
        }
    }
    let (dev, negated) = product_sine_sign_check();
    out.push(CheckResult {
        name: "pinn-ex1 printed forcing sign".into(),
        value: dev,
        threshold: 0.0,
        pass: negated,
        note: Some(if negated {
            "printed forcing -8*pi^2*K*sin(2 pi x)sin(2 pi y) is the negative of the forcing implied by \
             div(-K grad u) = f; runs use the derived forcing"
                .into()
        } else {
            "printed forcing no longer differs from the derived forcing by a sign".into()
        }),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_discrepancy_detected() {
        let (dev, negated) = product_sine_sign_check();
        assert!(negated);
        assert!(dev > 1.0);
    }

    #[test]
    fn jet_fd_small_sample() {
        let (g, h) = jet_fd_errors(10, 1);
        assert!(g <= 1e-6 && h <= 1e-4, "{g} {h}");
    }
}
