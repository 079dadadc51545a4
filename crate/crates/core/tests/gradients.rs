//! Analytic gradients against central finite differences.

use nsdx_core::neural::{Arch, LossKind, Target, ToyModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONFIGS: usize = 100;
const STEP: f64 = 1e-4;
const MAX_REL_ERR: f64 = 1e-4;
/// Denominator floor so near-zero partials are compared absolutely.
const FLOOR: f64 = 1e-2;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

struct Case {
    model: ToyModel,
    x: Vec<f64>,
    target: Target,
}

fn random_case(rng: &mut ChaCha8Rng, arch: Arch) -> Case {
    let input = rng.gen_range(1..=8);
    let hidden = rng.gen_range(1..=6);
    let kind = if rng.gen_bool(0.5) {
        LossKind::BinaryCe
    } else {
        LossKind::CategoricalCe
    };
    let output = match kind {
        LossKind::BinaryCe => rng.gen_range(1..=5),
        LossKind::CategoricalCe => rng.gen_range(2..=5),
    };
    let mut model = ToyModel::zeros(arch, input, hidden, output, kind).unwrap();
    for w in &mut model.weights {
        *w = rng.gen_range(-1.0..1.0);
    }
    let x = (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target = match kind {
        LossKind::BinaryCe => Target::Binary(
            (0..output)
                .map(|_| f64::from(rng.gen_range(0..2u8)))
                .collect(),
        ),
        LossKind::CategoricalCe => Target::Class(rng.gen_range(0..output)),
    };
    Case { model, x, target }
}

fn worst_param_error(c: &Case) -> f64 {
    let (_, grad) = c.model.param_gradient(&c.x, &c.target).unwrap();
    let mut worst: f64 = 0.0;
    for (i, g) in grad.iter().enumerate() {
        let mut plus = c.model.clone();
        plus.weights[i] += STEP;
        let mut minus = c.model.clone();
        minus.weights[i] -= STEP;
        let numeric = (plus.loss(&c.x, &c.target).unwrap() - minus.loss(&c.x, &c.target).unwrap())
            / (2.0 * STEP);
        worst = worst.max(rel_err(*g, numeric));
    }
    worst
}

fn worst_input_error(c: &Case) -> f64 {
    let grad = c.model.loss_input_gradient(&c.x, &c.target).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..c.x.len() {
        let mut plus = c.x.clone();
        plus[i] += STEP;
        let mut minus = c.x.clone();
        minus[i] -= STEP;
        let numeric = (c.model.loss(&plus, &c.target).unwrap()
            - c.model.loss(&minus, &c.target).unwrap())
            / (2.0 * STEP);
        worst = worst.max(rel_err(grad[i], numeric));
    }
    for out in 0..c.model.output_dim {
        let grad = c.model.logit_input_gradient(&c.x, out).unwrap();
        for i in 0..c.x.len() {
            let mut plus = c.x.clone();
            plus[i] += STEP;
            let mut minus = c.x.clone();
            minus[i] -= STEP;
            let numeric = (c.model.logits(&plus).unwrap()[out]
                - c.model.logits(&minus).unwrap()[out])
                / (2.0 * STEP);
            worst = worst.max(rel_err(grad[i], numeric));
        }
    }
    worst
}

fn check_arch(arch: Arch, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..CONFIGS {
        let c = random_case(&mut rng, arch);
        let p = worst_param_error(&c);
        let i = worst_input_error(&c);
        assert!(
            p <= MAX_REL_ERR,
            "{arch:?} config {n}: parameter gradient rel err {p:e}"
        );
        assert!(
            i <= MAX_REL_ERR,
            "{arch:?} config {n}: input gradient rel err {i:e}"
        );
    }
}

#[test]
fn linear_gradients_match_finite_differences() {
    check_arch(Arch::Linear, 11);
}

#[test]
fn mlp1_gradients_match_finite_differences() {
    check_arch(Arch::Mlp1, 12);
}
