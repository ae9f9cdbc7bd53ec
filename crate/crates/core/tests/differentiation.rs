use poupinn::numcore::{jet_apply, Jet2, Primitive};
use poupinn::train::rng_stream;
use rand::Rng;

/// `c0 + c1 x + c2 y + c3 xy + c4 x² + c5 y²` with its exact jet.
#[derive(Clone, Copy)]
struct Quad([f64; 6]);

impl Quad {
    fn value(&self, x: f64, y: f64) -> f64 {
        let c = self.0;
        c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * x * x + c[5] * y * y
    }

    fn jet(&self, x: f64, y: f64) -> Jet2 {
        let c = self.0;
        Jet2::new(
            self.value(x, y),
            [c[1] + c[3] * y + 2.0 * c[4] * x, c[2] + c[3] * x + 2.0 * c[5] * y],
            [2.0 * c[4], c[3], 2.0 * c[5]],
        )
    }
}

const W: [(f64, f64); 4] = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];

fn fd_jet(f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64, h: f64) -> Jet2 {
    let (mut gx, mut gy, mut xy) = (0.0, 0.0, 0.0);
    for (a, wa) in W {
        gx += wa * f(x + a * h, y);
        gy += wa * f(x, y + a * h);
        for (b, wb) in W {
            xy += wa * wb * f(x + a * h, y + b * h);
        }
    }
    let d2 = |g: &dyn Fn(f64) -> f64| (-g(2.0) + 16.0 * g(1.0) - 30.0 * g(0.0) + 16.0 * g(-1.0) - g(-2.0)) / (12.0 * h * h);
    Jet2::new(
        f(x, y),
        [gx / (12.0 * h), gy / (12.0 * h)],
        [d2(&|k| f(x + k * h, y)), xy / (144.0 * h * h), d2(&|k| f(x, y + k * h))],
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(1e-3)
}

fn check_primitive(p: Primitive, arity: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_stream(seed, 0);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    let mut trials = 0;
    while trials < 100 {
        let quads: Vec<Quad> = (0..arity)
            .map(|_| Quad(std::array::from_fn(|_| rng.gen_range(-1.0..1.0))))
            .collect();
        let (x, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        if p == Primitive::Reciprocal && quads[0].value(x, y).abs() < 0.5 {
            continue;
        }
        trials += 1;
        let inputs: Vec<Jet2> = quads.iter().map(|q| q.jet(x, y)).collect();
        let out = jet_apply(&p, &inputs).unwrap();
        let f = |x: f64, y: f64| {
            let v: Vec<Jet2> = quads.iter().map(|q| Jet2::constant(q.value(x, y))).collect();
            jet_apply(&p, &v).unwrap().value
        };
        let fd = fd_jet(&f, x, y, 1e-3);
        for i in 0..2 {
            worst_g = worst_g.max(rel(out.grad[i], fd.grad[i]));
        }
        for i in 0..3 {
            worst_h = worst_h.max(rel(out.hess[i], fd.hess[i]));
        }
    }
    (worst_g, worst_h)
}

#[test]
fn primitive_jets_match_finite_differences() {
    let cases = [
        (Primitive::Add, 2),
        (Primitive::Sub, 2),
        (Primitive::Mul, 2),
        (
            Primitive::Affine {
                weights: vec![0.7, -1.3, 0.4],
                bias: 0.2,
            },
            3,
        ),
        (Primitive::Tanh, 1),
        (Primitive::Exp, 1),
        (Primitive::SoftmaxComponent(1), 3),
        (Primitive::Reciprocal, 1),
    ];
    for (i, (p, arity)) in cases.into_iter().enumerate() {
        let name = format!("{p:?}");
        let (g, h) = check_primitive(p, arity, i as u64);
        assert!(g <= 1e-6, "{name} gradient {g:e}");
        assert!(h <= 1e-4, "{name} hessian {h:e}");
    }
}

#[test]
fn network_jets_match_finite_differences() {
    let (g, h) = poupinn::experiments::checks::jet_fd_errors(100, 5);
    assert!(g <= 1e-6 && h <= 1e-4, "{g:e} {h:e}");
}

#[test]
fn loss_gradients_match_finite_differences() {
    for seed in [1, 2, 3] {
        let e = poupinn::experiments::checks::loss_gradient_error(seed);
        assert!(e <= 1e-6, "seed {seed}: {e:e}");
    }
}
