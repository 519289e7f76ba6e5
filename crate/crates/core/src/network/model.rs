//! The two-branch network.
//!
//! ```text
//! image ─ B1 ─ B2 ─ … ─ Bn ─ GAP ─ FC ──────────────▶ base logits
//!          │               │
//!          │               └─ grid block ─ GAP ─ FC ─▶ theta
//!          │                                           │
//!          └─────────── bilinear sampler ◀─────────────┘
//!                            │
//!                            A1 ─ … ─ Am ─ GAP ─ FC ─▶ alignment logits
//! ```
//!
//! Each block is conv3x3 (padding 1) → ReLU → 2x2 max-pool.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::error::{PanError, Result};
use crate::spatial::AffineParams;
use crate::tensor::Tensor;

use super::config::PanConfig;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layer {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub base_blocks: Vec<Layer>,
    pub base_fc: Layer,
    pub grid_block: Layer,
    pub grid_fc: Layer,
    pub align_blocks: Vec<Layer>,
    pub align_fc: Layer,
}

/// Which parameters a forward pass differentiates, and which heads it runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Base branch only, base parameters trainable.
    Stage1,
    /// Full network, base parameters frozen.
    Stage2,
    /// Full network, every parameter trainable (gradient checks).
    Joint,
    /// Full network, nothing trainable.
    Inference,
}

/// Handles to the outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub base_logits: Var,
    pub base_embed: Var,
    pub theta: Option<Var>,
    pub align_logits: Option<Var>,
    pub align_embed: Option<Var>,
}

/// Materialised outputs of [`PanModel::forward`].
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub base_logits: Tensor,
    pub align_logits: Tensor,
    pub theta: Tensor,
    pub base_embed: Tensor,
    pub align_embed: Tensor,
}

/// Per-image inference result.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub base: Vec<f64>,
    pub align: Vec<f64>,
    pub theta: AffineParams,
}

#[derive(Debug, Clone)]
pub struct PanModel {
    config: PanConfig,
    params: ParamStore,
    layout: Layout,
}

fn add_layer(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    w_shape: &[usize],
    fan_in: usize,
    out: usize,
) -> Layer {
    let w = store.insert(
        format!("{name}.weight"),
        Tensor::uniform_fan_in(w_shape, fan_in, rng),
    );
    let b = store.insert(
        format!("{name}.bias"),
        Tensor::uniform_fan_in(&[out], fan_in, rng),
    );
    Layer { w, b }
}

impl PanModel {
    pub fn new(config: PanConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let conv =
            |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize| {
                add_layer(store, rng, name, &[cout, cin, 3, 3], cin * 9, cout)
            };

        let mut base_blocks = Vec::new();
        let mut cin = config.in_channels;
        for (i, &c) in config.base_channels.iter().enumerate() {
            base_blocks.push(conv(
                &mut store,
                &mut rng,
                &format!("base.block{}", i + 1),
                cin,
                c,
            ));
            cin = c;
        }
        let deep = cin;
        let base_fc = add_layer(
            &mut store,
            &mut rng,
            "base.classifier",
            &[config.num_classes, deep],
            deep,
            config.num_classes,
        );

        let grid_block = conv(
            &mut store,
            &mut rng,
            "grid.block",
            deep,
            config.grid_channels,
        );
        let gc = config.grid_channels;
        let grid_fc = Layer {
            w: store.insert("grid.theta.weight", Tensor::zeros(&[6, gc])),
            b: store.insert("grid.theta.bias", Self::theta_init(config.theta_init_scale)),
        };

        let mut align_blocks = Vec::new();
        let mut cin = config.base_channels[0];
        for (i, &c) in config.align_channels.iter().enumerate() {
            align_blocks.push(conv(
                &mut store,
                &mut rng,
                &format!("align.block{}", i + 1),
                cin,
                c,
            ));
            cin = c;
        }
        let align_fc = add_layer(
            &mut store,
            &mut rng,
            "align.classifier",
            &[config.num_classes, cin],
            cin,
            config.num_classes,
        );

        Ok(PanModel {
            config,
            params: store,
            layout: Layout {
                base_blocks,
                base_fc,
                grid_block,
                grid_fc,
                align_blocks,
                align_fc,
            },
        })
    }

    fn theta_init(scale: f64) -> Tensor {
        Tensor::new(&[6], vec![scale, 0.0, 0.0, 0.0, scale, 0.0]).expect("6 values")
    }

    /// Rebuilds a model from a checkpoint; `config` must describe the same
    /// architecture.
    pub fn from_params(config: PanConfig, params: ParamStore, source: &Path) -> Result<Self> {
        let mut model = Self::new(config)?;
        let expected = model.params.len();
        if params.len() != expected {
            return Err(PanError::format(
                source,
                format!(
                    "checkpoint holds {} tensors, model expects {expected}",
                    params.len()
                ),
            ));
        }
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = model.params.name(id).to_string();
            let loaded = params
                .id_of(&name)
                .map(|i| params.get(i))
                .ok_or_else(|| PanError::format(source, format!("missing tensor {name}")))?;
            let slot = model.params.get_mut(id);
            if loaded.shape() != slot.shape() {
                return Err(PanError::format(
                    source,
                    format!(
                        "tensor {name}: shape {:?}, expected {:?}",
                        loaded.shape(),
                        slot.shape()
                    ),
                ));
            }
            *slot = loaded.clone();
        }
        Ok(model)
    }

    pub fn config(&self) -> &PanConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn layer_ids(layers: &[Layer]) -> impl Iterator<Item = ParamId> + '_ {
        layers.iter().flat_map(|l| [l.w, l.b])
    }

    /// Base-branch parameters (blocks and classifier).
    pub fn base_param_ids(&self) -> Vec<ParamId> {
        Self::layer_ids(&self.layout.base_blocks)
            .chain([self.layout.base_fc.w, self.layout.base_fc.b])
            .collect()
    }

    /// Grid-network and alignment-branch parameters.
    pub fn stage2_param_ids(&self) -> Vec<ParamId> {
        let l = &self.layout;
        [l.grid_block.w, l.grid_block.b, l.grid_fc.w, l.grid_fc.b]
            .into_iter()
            .chain(Self::layer_ids(&l.align_blocks))
            .chain([l.align_fc.w, l.align_fc.b])
            .collect()
    }

    /// The final grid layer, trained at its own learning rate.
    pub fn theta_layer_ids(&self) -> [ParamId; 2] {
        [self.layout.grid_fc.w, self.layout.grid_fc.b]
    }

    pub fn base_classifier_ids(&self) -> [ParamId; 2] {
        [self.layout.base_fc.w, self.layout.base_fc.b]
    }

    fn block(&self, g: &mut Graph, x: Var, layer: Layer, trainable: bool) -> Result<Var> {
        let w = g.param(&self.params, layer.w, trainable);
        let b = g.param(&self.params, layer.b, trainable);
        let c = g.conv2d(x, w, Some(b), 1, 1)?;
        let a = g.relu(c);
        g.max_pool2d(a)
    }

    fn head(&self, g: &mut Graph, x: Var, layer: Layer, trainable: bool) -> Result<Var> {
        let w = g.param(&self.params, layer.w, trainable);
        let b = g.param(&self.params, layer.b, trainable);
        g.fully_connected(x, w, Some(b))
    }

    /// Records the network on `g` for a `[N, C, H, W]` input node.
    pub fn forward_graph(&self, g: &mut Graph, x: Var, mode: Mode) -> Result<ForwardVars> {
        let expected = [
            self.config.in_channels,
            self.config.input_h,
            self.config.input_w,
        ];
        let shape = g.shape(x);
        if shape.len() != 4 || shape[1..] != expected {
            return Err(PanError::shape(
                "forward",
                &[0, expected[0], expected[1], expected[2]],
                shape,
            ));
        }
        let base_tr = matches!(mode, Mode::Stage1 | Mode::Joint);
        let rest_tr = matches!(mode, Mode::Stage2 | Mode::Joint);

        let c = &self.config;
        let mut h = g.affine(x, 1.0 / c.input_std, -c.input_mean / c.input_std);
        let mut shallow = None;
        for &layer in &self.layout.base_blocks {
            h = self.block(g, h, layer, base_tr)?;
            shallow.get_or_insert(h);
        }
        let deep = h;
        let shallow = shallow.expect("at least one block");
        let base_embed = g.avg_pool_global(deep)?;
        let base_logits = self.head(g, base_embed, self.layout.base_fc, base_tr)?;
        if mode == Mode::Stage1 {
            return Ok(ForwardVars {
                base_logits,
                base_embed,
                theta: None,
                align_logits: None,
                align_embed: None,
            });
        }

        let gb = self.block(g, deep, self.layout.grid_block, rest_tr)?;
        let gp = g.avg_pool_global(gb)?;
        let theta = self.head(g, gp, self.layout.grid_fc, rest_tr)?;

        let (sh, sw) = (g.shape(shallow)[2], g.shape(shallow)[3]);
        let grid = g.affine_grid(theta, sh, sw)?;
        let mut a = g.grid_sample(shallow, grid)?;
        for &layer in &self.layout.align_blocks {
            a = self.block(g, a, layer, rest_tr)?;
        }
        let align_embed = g.avg_pool_global(a)?;
        let align_logits = self.head(g, align_embed, self.layout.align_fc, rest_tr)?;
        Ok(ForwardVars {
            base_logits,
            base_embed,
            theta: Some(theta),
            align_logits: Some(align_logits),
            align_embed: Some(align_embed),
        })
    }

    /// Full inference pass over a batch.
    pub fn forward(&self, batch: &Tensor) -> Result<ForwardOutput> {
        let mut g = Graph::new();
        let x = g.input(batch.clone());
        let v = self.forward_graph(&mut g, x, Mode::Inference)?;
        let get = |v: Option<Var>| g.value(v.expect("full pass")).clone();
        Ok(ForwardOutput {
            base_logits: g.value(v.base_logits).clone(),
            align_logits: get(v.align_logits),
            theta: get(v.theta),
            base_embed: g.value(v.base_embed).clone(),
            align_embed: get(v.align_embed),
        })
    }

    /// Inference for a list of `[C, H, W]` images, processed in fixed-size
    /// chunks so results do not depend on how callers group images.
    pub fn embed_all(&self, images: &[&Tensor]) -> Result<Vec<Embedding>> {
        const CHUNK: usize = 32;
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(CHUNK) {
            let batch = Tensor::stack(chunk)?;
            let f = self.forward(&batch)?;
            let (db, da) = (self.config.base_embed_dim(), self.config.align_embed_dim());
            for i in 0..chunk.len() {
                let t = &f.theta.data()[i * 6..(i + 1) * 6];
                out.push(Embedding {
                    base: f.base_embed.data()[i * db..(i + 1) * db].to_vec(),
                    align: f.align_embed.data()[i * da..(i + 1) * da].to_vec(),
                    theta: AffineParams::new(t.try_into().expect("6 values"))?,
                });
            }
        }
        Ok(out)
    }

    pub fn embed(&self, image: &Tensor) -> Result<Embedding> {
        Ok(self.embed_all(&[image])?.remove(0))
    }
}

/// Mean cross-entropy of both heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_base: f64,
    pub l_align: f64,
    pub l_total: f64,
}

/// Evaluates both identification losses; `l_total` is `l_base` alone in
/// stage 1 and `l_base + l_align` in stage 2.
pub fn loss(
    base_logits: &Tensor,
    align_logits: &Tensor,
    labels: &[usize],
    stage: u8,
) -> Result<LossBreakdown> {
    if stage != 1 && stage != 2 {
        return Err(PanError::arg(format!("stage must be 1 or 2, got {stage}")));
    }
    let mut g = Graph::new();
    let b = g.input(base_logits.clone());
    let a = g.input(align_logits.clone());
    let lb = g.softmax_cross_entropy(b, labels)?;
    let la = g.softmax_cross_entropy(a, labels)?;
    let l_base = g.value(lb).data()[0];
    let l_align = g.value(la).data()[0];
    let l_total = if stage == 1 { l_base } else { l_base + l_align };
    Ok(LossBreakdown {
        l_base,
        l_align,
        l_total,
    })
}
