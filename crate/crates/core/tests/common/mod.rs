#![allow(dead_code)]

use monomlp::activation::{ActivationKind, ActivationSpec};
use monomlp::diff::{Matrix, Vector};
use monomlp::layer::{Layer, LayerKind, LayerParams, LayerSpec, Reparam, Sign};
use monomlp::network::{Direction, FeatureAnnotation, Network};
use rand::seq::SliceRandom;
use rand::Rng;

/// Monotone activations with moderate growth, so random stacks stay finite.
pub const MONOTONE: [ActivationKind; 10] = [
    ActivationKind::Relu,
    ActivationKind::LeakyRelu,
    ActivationKind::Relu6,
    ActivationKind::Elu,
    ActivationKind::Selu,
    ActivationKind::Celu,
    ActivationKind::Sigmoid,
    ActivationKind::Tanh,
    ActivationKind::Softplus,
    ActivationKind::Softsign,
];

pub fn random_activation(rng: &mut impl Rng, for_switch: bool) -> ActivationSpec {
    loop {
        let mut a = ActivationSpec::new(*MONOTONE.choose(rng).unwrap());
        if rng.gen_bool(0.3) {
            a = a.reflect();
        }
        if !for_switch || a.usable_for_switch() {
            return a;
        }
    }
}

pub fn random_params(rng: &mut impl Rng, out_dim: usize, in_dim: usize, scale: f64) -> LayerParams<f64> {
    let w = Matrix::from_fn(out_dim, in_dim, |_, _| rng.gen_range(-scale..scale));
    let b = Vector::from((0..out_dim).map(|_| rng.gen_range(-scale..scale)).collect::<Vec<_>>());
    LayerParams::new(w, b).unwrap()
}

pub fn random_layer(rng: &mut impl Rng, spec: LayerSpec, scale: f64) -> Layer<f64> {
    Layer::new(spec, random_params(rng, spec.out_dim, spec.in_dim, scale)).unwrap()
}

pub fn random_annotation(rng: &mut impl Rng, n_mono: usize, n_free: usize) -> FeatureAnnotation {
    let mut dirs: Vec<Direction> = (0..n_mono)
        .map(|_| if rng.gen_bool(0.5) { Direction::Increasing } else { Direction::Decreasing })
        .collect();
    dirs.extend(std::iter::repeat(Direction::Free).take(n_free));
    dirs.shuffle(rng);
    FeatureAnnotation(dirs)
}

/// A random network that the certificate accepts: constrained and switch
/// layers mixed, an even number of non-positive constrained layers, and an
/// optional free subnetwork.
pub fn random_certified(rng: &mut impl Rng, depth: usize) -> Network<f64> {
    let n_mono = rng.gen_range(1..=3);
    let n_free = rng.gen_range(0..=2);
    let ann = random_annotation(rng, n_mono, n_free);
    let mut free = Vec::new();
    let tail = if n_free > 0 && rng.gen_bool(0.5) {
        let w = rng.gen_range(1..=4);
        let act = random_activation(rng, false);
        free.push(random_layer(rng, LayerSpec::free(n_free, w, Some(act)), 1.0));
        w
    } else {
        n_free
    };
    let kinds: Vec<LayerKind> = (0..depth)
        .map(|_| match rng.gen_range(0..3) {
            0 => LayerKind::ConstrainedAffine,
            1 => LayerKind::SwitchPre,
            _ => LayerKind::SwitchPost,
        })
        .collect();
    let constrained: Vec<usize> = (0..depth).filter(|&k| kinds[k] == LayerKind::ConstrainedAffine).collect();
    let mut negative: Vec<bool> = constrained.iter().map(|_| rng.gen_bool(0.5)).collect();
    if negative.iter().filter(|&&n| n).count() % 2 == 1 {
        let i = rng.gen_range(0..negative.len());
        negative[i] = !negative[i];
    }
    let mut layers = Vec::new();
    let mut in_dim = n_mono + tail;
    for k in 0..depth {
        let last = k + 1 == depth;
        let out = if last { 1 } else { rng.gen_range(1..=6) };
        let act = random_activation(rng, kinds[k] != LayerKind::ConstrainedAffine);
        let mut spec = match kinds[k] {
            LayerKind::ConstrainedAffine => {
                let i = constrained.iter().position(|&c| c == k).unwrap();
                let sign = if negative[i] { Sign::NonPositive } else { Sign::NonNegative };
                let reparam = if rng.gen_bool(0.5) { Reparam::Abs } else { Reparam::Square };
                LayerSpec::constrained(in_dim, out, sign, Some(act)).with_reparam(reparam)
            }
            LayerKind::SwitchPre => LayerSpec::switch_pre(in_dim, out, act),
            _ => LayerSpec::switch_post(in_dim, out, act),
        };
        if k == 0 {
            spec = spec.with_free_inputs(tail);
        }
        layers.push(random_layer(rng, spec, 1.0));
        in_dim = out;
    }
    Network::new(ann, free, layers).unwrap()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
