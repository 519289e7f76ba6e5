//! End-to-end synthetic benchmark: generate, train both stages, embed the
//! test split and compare base, fused and re-ranked retrieval.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, GenSpec, Split};
use crate::descriptor::{fuse_vectors, l2_normalize, DescriptorMeta};
use crate::error::{PanError, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::network::{
    theta_stats, train_stage1, train_stage2, Embedding, EpochLog, PanConfig, PanModel, ThetaStats,
    TrainSet,
};
use crate::retrieval::{pairwise_sqdist, rerank, RerankParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: GenSpec,
    pub network: PanConfig,
    pub rerank: RerankParams,
    pub cross_camera_only: bool,
}

/// Main learning rate of the synthetic benchmark. Training from scratch on
/// the small corpus barely moves at the default `1e-3`.
pub const BENCHMARK_LR_MAIN: f64 = 0.01;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: GenSpec::default(),
            network: PanConfig {
                lr_main: BENCHMARK_LR_MAIN,
                ..Default::default()
            },
            rerank: RerankParams::default(),
            cross_camera_only: true,
        }
    }
}

impl ExperimentConfig {
    /// Corpus and network both seeded from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.corpus.seed = seed;
        self.network.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    /// Base-branch descriptor alone.
    pub base: EvalReport,
    /// Alignment-branch descriptor alone.
    pub align: EvalReport,
    /// Fused descriptor at `network.alpha`.
    pub fused: EvalReport,
    /// Fused descriptor after k-reciprocal re-ranking.
    pub fused_reranked: EvalReport,
    /// Pearson correlation of predicted `(theta_13, theta_23)` with the
    /// offsets that undo each injected perturbation. Both components are
    /// pooled after centering each on its own mean.
    pub theta_offset_pearson: f64,
    /// Per component, `[theta_13, theta_23]`.
    pub theta_offset_pearson_xy: [f64; 2],
    /// Pearson correlation of predicted `(theta_11, theta_22)` with the
    /// corrective scales `(1/sx, 1/sy)`, pooled.
    pub theta_scale_pearson: f64,
    /// Mean and standard deviation of the predicted theta over the test
    /// split.
    pub theta_test: ThetaStats,
    /// Test images whose predicted theta differs from the initial value
    /// after the first stage.
    pub stage1_theta_mismatches: usize,
    pub train_log: Vec<EpochLog>,
}

impl ExperimentReport {
    /// Serialization without wall-clock fields, so repeated runs compare
    /// byte for byte.
    pub fn eval_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable");
        v.as_object_mut().expect("object").remove("train_log");
        serde_json::to_string_pretty(&v).expect("serializable") + "\n"
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn pooled_centered(parts: &[Vec<f64>]) -> Vec<f64> {
    parts
        .iter()
        .flat_map(|v| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(move |x| x - m)
        })
        .collect()
}

/// Offsets of the transform that maps a perturbed image back onto its
/// canonical framing.
pub fn corrective_offset(gt: &crate::spatial::AffineParams) -> Result<[f64; 2]> {
    let (tx, ty) = gt.inverse()?.offset();
    Ok([tx, ty])
}

/// Retrieval reports for base, alignment, fused and re-ranked fused
/// descriptors.
pub fn retrieval_reports(
    query: &[(DescriptorMeta, &Embedding)],
    gallery: &[(DescriptorMeta, &Embedding)],
    alpha: f64,
    params: RerankParams,
    cross_camera_only: bool,
) -> Result<[EvalReport; 4]> {
    let qm: Vec<DescriptorMeta> = query.iter().map(|q| q.0).collect();
    let gm: Vec<DescriptorMeta> = gallery.iter().map(|g| g.0).collect();
    let eval = |f: &dyn Fn(&Embedding) -> Result<Vec<f64>>| -> Result<(EvalReport, Vec<Vec<f64>>)> {
        let q = query
            .iter()
            .map(|(_, e)| f(e))
            .collect::<Result<Vec<_>>>()?;
        let g = gallery
            .iter()
            .map(|(_, e)| f(e))
            .collect::<Result<Vec<_>>>()?;
        let d = pairwise_sqdist(&q, &g)?;
        let report = evaluate(&d, &qm, &gm, cross_camera_only)?;
        Ok((report, q.into_iter().chain(g).collect()))
    };
    let (base, _) = eval(&|e| Ok(l2_normalize(&e.base)))?;
    let (align, _) = eval(&|e| Ok(l2_normalize(&e.align)))?;
    let (fused, joint) = eval(&|e| fuse_vectors(&e.base, &e.align, alpha))?;

    let nq = query.len();
    let full = pairwise_sqdist(&joint, &joint)?;
    let reranked = rerank(&full, params)?.block(0..nq, nq..joint.len())?;
    let fused_reranked = evaluate(&reranked, &qm, &gm, cross_camera_only)?;
    Ok([base, align, fused, fused_reranked])
}

pub fn run(
    config: &ExperimentConfig,
    mut hook: Option<&mut dyn FnMut(&EpochLog)>,
) -> Result<ExperimentReport> {
    let corpus = Corpus::synthesize(&config.corpus)?;
    let (images, labels, k) = corpus.train_set();
    let mut net = config.network.clone();
    net.num_classes = k;
    net.input_h = config.corpus.height;
    net.input_w = config.corpus.width;
    let mut model = PanModel::new(net)?;
    let data = TrainSet {
        images: &images,
        labels: &labels,
    };
    let mut log = Vec::new();
    let mut record = |l: &EpochLog| {
        if let Some(h) = hook.as_mut() {
            h(l);
        }
        log.push(l.clone());
    };
    let test: Vec<(usize, &crate::corpus::CorpusSample)> = corpus
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.split != Split::Train)
        .collect();
    let refs: Vec<&crate::tensor::Tensor> = test.iter().map(|(_, s)| &s.image).collect();

    train_stage1(&mut model, data, Some(&mut record))?;
    let init = model.config().theta_init_scale;
    let init = [init, 0.0, 0.0, 0.0, init, 0.0];
    let stage1_theta_mismatches = model
        .embed_all(&refs)?
        .iter()
        .filter(|e| e.theta.as_array() != init)
        .count();
    train_stage2(&mut model, data, Some(&mut record))?;
    let emb = model.embed_all(&refs)?;

    let (mut pred, mut truth) = ([Vec::new(), Vec::new()], [Vec::new(), Vec::new()]);
    let (mut pred_s, mut truth_s) = (Vec::new(), Vec::new());
    for ((_, s), e) in test.iter().zip(&emb) {
        let c = corrective_offset(&s.gt_perturb)?;
        let (px, py) = e.theta.offset();
        for (d, p) in [px, py].into_iter().enumerate() {
            pred[d].push(p);
            truth[d].push(c[d]);
        }
        let (t, g) = (e.theta.as_array(), s.gt_perturb.as_array());
        pred_s.extend([t[0], t[4]]);
        truth_s.extend([1.0 / g[0], 1.0 / g[4]]);
    }
    let xy = [pearson(&pred[0], &truth[0]), pearson(&pred[1], &truth[1])];
    let pooled = pearson(&pooled_centered(&pred), &pooled_centered(&truth));
    let thetas: Vec<[f64; 6]> = emb.iter().map(|e| e.theta.as_array()).collect();

    let pick = |split: Split| -> Vec<(DescriptorMeta, &Embedding)> {
        test.iter()
            .zip(&emb)
            .filter(|((_, s), _)| s.split == split)
            .map(|((i, s), e)| {
                let meta = DescriptorMeta {
                    sample_id: *i as u32,
                    identity: s.identity,
                    camera: s.camera,
                };
                (meta, e)
            })
            .collect()
    };
    let (query, gallery) = (pick(Split::Query), pick(Split::Gallery));
    if query.is_empty() || gallery.is_empty() {
        return Err(PanError::EmptyProtocol);
    }
    let [base, align, fused, fused_reranked] = retrieval_reports(
        &query,
        &gallery,
        model.config().alpha,
        config.rerank,
        config.cross_camera_only,
    )?;
    Ok(ExperimentReport {
        seed: config.network.seed,
        base,
        align,
        fused,
        fused_reranked,
        theta_offset_pearson: pooled,
        theta_offset_pearson_xy: xy,
        theta_scale_pearson: pearson(&pred_s, &truth_s),
        theta_test: theta_stats(&thetas),
        stage1_theta_mismatches,
        train_log: log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centering_removes_component_means() {
        let pred = [vec![1.0, 2.0, 3.0], vec![10.0, 11.0, 12.0]];
        let truth = [vec![-1.0, 0.0, 1.0], vec![5.0, 6.0, 7.0]];
        assert!((pearson(&pooled_centered(&pred), &pooled_centered(&truth)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_basics() {
        assert!(
            (pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]) - 4.5 / (61.0f64 / 3.0).sqrt()).abs()
                < 1e-12
        );
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn corrective_offset_inverts_scale_offset() {
        let gt = crate::spatial::AffineParams::scale_offset(2.0, 0.5, 0.2, -0.1).unwrap();
        let c = corrective_offset(&gt).unwrap();
        assert!((c[0] + 0.1).abs() < 1e-12 && (c[1] - 0.2).abs() < 1e-12);
    }
}
