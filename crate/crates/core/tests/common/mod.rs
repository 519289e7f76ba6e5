//! Shared test support: a central-difference gradient oracle that only ever
//! evaluates forward passes.
#![allow(dead_code)]

pub mod fixtures;
pub mod rerank;
pub mod sampler;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Floor on the denominator of the relative error, so entries whose true
/// gradient is (near) zero are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad<F: FnMut(&[f64]) -> f64>(x: &[f64], mut f: F) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Max relative error between analytic and central-difference gradients of
/// `l_base + l_align` over every parameter of the miniature network, with
/// random theta-layer weights so the sampling grid depends on the input.
pub fn miniature_gradient_error(seed: u64) -> f64 {
    use pan_core::autodiff::Graph;
    use pan_core::network::{Mode, PanConfig, PanModel};
    use pan_core::Tensor;

    let mut r = rng(seed);
    let cfg = PanConfig {
        seed,
        ..PanConfig::miniature()
    };
    let mut model = PanModel::new(cfg).unwrap();
    let [tw, _] = model.theta_layer_ids();
    for v in model.params_mut().get_mut(tw).data_mut() {
        *v = r.gen_range(-0.1..0.1);
    }
    let x = Tensor::new(&[2, 3, 8, 8], uniform(&mut r, 2 * 3 * 64, 0.0, 1.0)).unwrap();
    let labels = [0usize, 2];
    let total = |m: &PanModel, g: &mut Graph| {
        let xv = g.input(x.clone());
        let out = m.forward_graph(g, xv, Mode::Joint).unwrap();
        let lb = g.softmax_cross_entropy(out.base_logits, &labels).unwrap();
        let la = g
            .softmax_cross_entropy(out.align_logits.unwrap(), &labels)
            .unwrap();
        g.add(lb, la).unwrap()
    };

    let mut g = Graph::new();
    let l = total(&model, &mut g);
    model.params_mut().zero_grad();
    g.backward(l, model.params_mut()).unwrap();
    let ids: Vec<_> = model.params().ids().collect();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for id in ids {
        let n = model.params().get(id).len();
        let grad = model
            .params()
            .get(id)
            .grad()
            .map(<[f64]>::to_vec)
            .unwrap_or(vec![0.0; n]);
        analytic.extend(grad);
        let base = model.params().get(id).data().to_vec();
        numeric.extend(numeric_grad(&base, |p| {
            model.params_mut().get_mut(id).data_mut().copy_from_slice(p);
            let mut g = Graph::new();
            let l = total(&model, &mut g);
            g.value(l).data()[0]
        }));
        model
            .params_mut()
            .get_mut(id)
            .data_mut()
            .copy_from_slice(&base);
    }
    max_rel_err(&analytic, &numeric)
}
