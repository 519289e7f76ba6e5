//! Two-stage training: the base branch alone, then the grid network and
//! alignment branch with the base branch frozen.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, Sgd};
use crate::error::{PanError, Result};
use crate::tensor::Tensor;

use super::augment::augment;
use super::model::{Mode, PanModel};

/// Images with dense labels in `[0, K)`.
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub images: &'a [Tensor],
    pub labels: &'a [usize],
}

impl TrainSet<'_> {
    fn validate(&self, classes: usize) -> Result<()> {
        if self.images.is_empty() {
            return Err(PanError::arg("training set is empty"));
        }
        if self.images.len() != self.labels.len() {
            return Err(PanError::arg(format!(
                "{} images but {} labels",
                self.images.len(),
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= classes) {
            return Err(PanError::InvalidLabel {
                label: bad,
                classes,
            });
        }
        Ok(())
    }
}

/// One JSON-lines record of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: u8,
    pub lr: f64,
    pub l_base: f64,
    pub l_align: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaStats {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Theta statistics over the last stage-2 epoch (pre-augmentation
    /// batches as seen by the network).
    pub theta: Option<ThetaStats>,
}

/// Optional per-epoch observer, e.g. for streaming the log to disk.
pub type EpochHook<'a> = &'a mut dyn FnMut(&EpochLog);

fn batches(n: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

fn stage_rng(seed: u64, stage: u8) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (0x5eed_0000 + stage as u64))
}

/// Trains the base branch. Only base parameters move.
pub fn train_stage1(
    model: &mut PanModel,
    data: TrainSet<'_>,
    mut hook: Option<EpochHook<'_>>,
) -> Result<TrainReport> {
    let cfg = model.config().clone();
    data.validate(cfg.num_classes)?;
    let ids = model.base_param_ids();
    let mut opt = Sgd::new(cfg.momentum, cfg.nesterov)?;
    let mut rng = stage_rng(cfg.seed, 1);
    let mut report = TrainReport::default();

    for epoch in 1..=cfg.total_epochs {
        let start = Instant::now();
        let lr = cfg.lr_main * cfg.lr_scale(epoch);
        let mut sum = 0.0;
        for idx in batches(data.images.len(), cfg.batch_size, &mut rng) {
            let (batch, labels) = make_batch(&data, &idx, &cfg.augment, &mut rng)?;
            let mut g = Graph::new();
            let x = g.input(batch);
            let out = model.forward_graph(&mut g, x, Mode::Stage1)?;
            let l = g.softmax_cross_entropy(out.base_logits, &labels)?;
            let value = g.value(l).data()[0];
            if !value.is_finite() {
                return Err(PanError::Divergence { stage: 1, epoch });
            }
            sum += value * idx.len() as f64;
            let params = model.params_mut();
            params.zero_grad();
            g.backward(l, params)?;
            opt.step(params, &ids, |_| lr)?;
        }
        let log = EpochLog {
            epoch,
            stage: 1,
            lr,
            l_base: sum / data.images.len() as f64,
            l_align: None,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        if let Some(h) = hook.as_mut() {
            h(&log);
        }
        report.epochs.push(log);
    }
    model.params_mut().zero_grad();
    Ok(report)
}

/// Trains the grid network and alignment branch on `l_base + l_align`.
///
/// Gradients flow through the frozen base activations but are never applied
/// to base parameters; since nothing trainable sits upstream of them the
/// base subgraph is simply not differentiated.
pub fn train_stage2(
    model: &mut PanModel,
    data: TrainSet<'_>,
    mut hook: Option<EpochHook<'_>>,
) -> Result<TrainReport> {
    let cfg = model.config().clone();
    data.validate(cfg.num_classes)?;
    let ids = model.stage2_param_ids();
    let theta_ids = model.theta_layer_ids();
    let is_theta = |id: ParamId| theta_ids.contains(&id);
    let mut opt = Sgd::new(cfg.momentum, cfg.nesterov)?;
    let mut rng = stage_rng(cfg.seed, 2);
    let mut report = TrainReport::default();

    for epoch in 1..=cfg.total_epochs {
        let start = Instant::now();
        let scale = cfg.lr_scale(epoch);
        let lr = cfg.lr_main * scale;
        let lr_theta = cfg.lr_theta_layer * scale;
        let (mut sum_b, mut sum_a) = (0.0, 0.0);
        let mut thetas: Vec<[f64; 6]> = Vec::new();
        for idx in batches(data.images.len(), cfg.batch_size, &mut rng) {
            let (batch, labels) = make_batch(&data, &idx, &cfg.augment, &mut rng)?;
            let mut g = Graph::new();
            let x = g.input(batch);
            let out = model.forward_graph(&mut g, x, Mode::Stage2)?;
            let lb = g.softmax_cross_entropy(out.base_logits, &labels)?;
            let la = g.softmax_cross_entropy(out.align_logits.expect("stage 2"), &labels)?;
            let total = g.add(lb, la)?;
            let (vb, va) = (g.value(lb).data()[0], g.value(la).data()[0]);
            if !(vb.is_finite() && va.is_finite()) {
                return Err(PanError::Divergence { stage: 2, epoch });
            }
            sum_b += vb * idx.len() as f64;
            sum_a += va * idx.len() as f64;
            if epoch == cfg.total_epochs {
                let t = g.value(out.theta.expect("stage 2")).data();
                thetas.extend(t.chunks(6).map(|c| <[f64; 6]>::try_from(c).expect("6")));
            }
            let params = model.params_mut();
            params.zero_grad();
            g.backward(total, params)?;
            opt.step(params, &ids, |id| if is_theta(id) { lr_theta } else { lr })?;
        }
        let n = data.images.len() as f64;
        let log = EpochLog {
            epoch,
            stage: 2,
            lr,
            l_base: sum_b / n,
            l_align: Some(sum_a / n),
            wall_ms: start.elapsed().as_millis() as u64,
        };
        if let Some(h) = hook.as_mut() {
            h(&log);
        }
        report.epochs.push(log);
        if !thetas.is_empty() {
            report.theta = Some(theta_stats(&thetas));
        }
    }
    model.params_mut().zero_grad();
    Ok(report)
}

fn make_batch(
    data: &TrainSet<'_>,
    idx: &[usize],
    aug: &super::config::Augment,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Vec<usize>)> {
    let imgs: Vec<Tensor> = idx
        .iter()
        .map(|&i| augment(&data.images[i], aug, rng))
        .collect();
    let refs: Vec<&Tensor> = imgs.iter().collect();
    let labels = idx.iter().map(|&i| data.labels[i]).collect();
    Ok((Tensor::stack(&refs)?, labels))
}

/// Per-component mean and population standard deviation.
pub fn theta_stats(thetas: &[[f64; 6]]) -> ThetaStats {
    let n = thetas.len() as f64;
    let mut s = ThetaStats::default();
    for k in 0..6 {
        let mean = thetas.iter().map(|t| t[k]).sum::<f64>() / n;
        let var = thetas.iter().map(|t| (t[k] - mean).powi(2)).sum::<f64>() / n;
        s.mean[k] = mean;
        s.std[k] = var.sqrt();
    }
    s
}
