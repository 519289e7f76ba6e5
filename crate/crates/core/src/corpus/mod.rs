//! Synthetic misdetection corpus with ground-truth framing errors, and
//! loading of re-ID style image folders.
//!
//! On disk a corpus is `train/`, `query/` and `gallery/` subdirectories of
//! 8-bit RGB PNGs plus a `manifest.jsonl` at the root with one
//! `{path, identity, camera, split, theta}` object per image.

mod io;
mod render;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};
use crate::spatial::{apply_affine_to_image, AffineParams};
use crate::tensor::Tensor;

pub use io::{
    encode_png, generate, load, parse_market_name, read_image, write_image_png, MANIFEST,
};
pub use render::{render_identity, CameraStyle, IdentityParams, TorsoPattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Query,
    Gallery,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSample {
    /// `[3, H, W]` in `[0, 1]`, quantized to 8 bits.
    pub image: Tensor,
    pub identity: u32,
    pub camera: u16,
    pub split: Split,
    /// Transform applied to the canonical framing; identity for loaded
    /// external images.
    pub gt_perturb: AffineParams,
    /// Path relative to the corpus root.
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub samples: Vec<CorpusSample>,
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub n_train_ids: u32,
    pub n_test_ids: u32,
    pub images_per_id: u32,
    pub n_cameras: u16,
    pub height: usize,
    pub width: usize,
    pub scale_range: (f64, f64),
    pub offset_max: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            n_train_ids: 16,
            n_test_ids: 16,
            images_per_id: 40,
            n_cameras: 4,
            height: 64,
            width: 32,
            scale_range: (0.6, 1.5),
            offset_max: 0.25,
            noise_std: 0.02,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(PanError::arg(format!("bad scale range [{lo}, {hi}]")));
        }
        if !(self.offset_max >= 0.0 && self.offset_max.is_finite()) {
            return Err(PanError::arg(format!(
                "bad offset range {}",
                self.offset_max
            )));
        }
        if self.n_cameras < 2 {
            return Err(PanError::arg(
                "need at least two cameras for query/gallery pairs",
            ));
        }
        if self.images_per_id < self.n_cameras as u32 {
            return Err(PanError::arg("images_per_id must be at least n_cameras"));
        }
        if self.height < 2 || self.width < 2 {
            return Err(PanError::arg("image must be at least 2x2"));
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(PanError::arg("noise_std must be non-negative"));
        }
        Ok(())
    }
}

/// Resamples `image` through `scale_offset(sx, sy, tx, ty)`. Scales below
/// one zoom in (parts fall off the border), scales above one zoom out and
/// pad zeros around the figure.
pub fn perturb(
    image: &Tensor,
    scale: (f64, f64),
    offset: (f64, f64),
) -> Result<(Tensor, AffineParams)> {
    let (sx, sy) = scale;
    if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
        return Err(PanError::arg(format!(
            "invalid perturbation scale ({sx}, {sy})"
        )));
    }
    let theta = AffineParams::scale_offset(sx, sy, offset.0, offset.1)?;
    let s = image.shape();
    if s.len() != 3 {
        return Err(PanError::shape("perturb", s, &[3, 0, 0]));
    }
    Ok((apply_affine_to_image(image, &theta, s[1], s[2])?, theta))
}

pub fn quantize(image: &mut Tensor) {
    for v in image.data_mut() {
        *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
    }
}

struct Plan {
    identity: u32,
    index: u32,
    camera: u16,
    split: Split,
}

impl Corpus {
    /// Builds the corpus in memory; [`generate`] writes the same samples to
    /// disk.
    pub fn synthesize(spec: &GenSpec) -> Result<Corpus> {
        spec.validate()?;
        let mut plan = Vec::new();
        for identity in 0..spec.n_train_ids + spec.n_test_ids {
            let test = identity >= spec.n_train_ids;
            for index in 0..spec.images_per_id {
                let camera = (index % spec.n_cameras as u32) as u16 + 1;
                // first image of every camera is a query
                let split = match (test, index < spec.n_cameras as u32) {
                    (false, _) => Split::Train,
                    (true, true) => Split::Query,
                    (true, false) => Split::Gallery,
                };
                plan.push(Plan {
                    identity,
                    index,
                    camera,
                    split,
                });
            }
        }
        let samples = plan
            .par_iter()
            .map(|p| Self::make_sample(spec, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus { samples })
    }

    fn make_sample(spec: &GenSpec, p: &Plan) -> Result<CorpusSample> {
        let seed = render::mix_seed(&[spec.seed, p.identity as u64, p.index as u64]);
        let params = IdentityParams::sample(spec.seed, p.identity);
        let canonical = render_identity(
            &params,
            p.camera,
            seed,
            spec.height,
            spec.width,
            spec.noise_std,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(render::mix_seed(&[seed, 0xa11]));
        let (lo, hi) = spec.scale_range;
        let t = spec.offset_max;
        let mut draw = |lo: f64, hi: f64| if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let scale = (draw(lo, hi), draw(lo, hi));
        let offset = (draw(-t, t), draw(-t, t));
        let (mut image, theta) = perturb(&canonical, scale, offset)?;
        quantize(&mut image);
        Ok(CorpusSample {
            image,
            identity: p.identity,
            camera: p.camera,
            split: p.split,
            gt_perturb: theta,
            path: format!(
                "{}/{:04}_c{}_{:06}.png",
                p.split.dir_name(),
                p.identity,
                p.camera,
                p.index
            ),
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = (usize, &CorpusSample)> {
        self.samples
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.split == split)
    }

    /// Training images with identities remapped to dense labels `[0, K)` in
    /// ascending identity order.
    pub fn train_set(&self) -> (Vec<Tensor>, Vec<usize>, usize) {
        let mut ids: Vec<u32> = self.split(Split::Train).map(|(_, s)| s.identity).collect();
        ids.sort_unstable();
        ids.dedup();
        let (images, labels) = self
            .split(Split::Train)
            .map(|(_, s)| {
                let label = ids.binary_search(&s.identity).expect("present");
                (s.image.clone(), label)
            })
            .unzip();
        (images, labels, ids.len())
    }
}
