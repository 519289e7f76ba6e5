use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Augment {
    pub horizontal_flip: bool,
    pub random_crop: bool,
    /// Reflective padding applied before cropping back to the input size.
    pub crop_pad: usize,
}

impl Default for Augment {
    fn default() -> Self {
        Augment {
            horizontal_flip: true,
            random_crop: true,
            crop_pad: 4,
        }
    }
}

impl Augment {
    pub fn none() -> Self {
        Augment {
            horizontal_flip: false,
            random_crop: false,
            crop_pad: 0,
        }
    }
}

/// Architecture and optimisation settings for the two-branch network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub in_channels: usize,
    /// Inputs are standardized as `(x - input_mean) / input_std` before the
    /// first block.
    pub input_mean: f64,
    pub input_std: f64,
    pub num_classes: usize,
    /// Channel widths of the base blocks; the grid is applied to the output
    /// of the first block and regressed from the output of the last.
    pub base_channels: Vec<usize>,
    pub align_channels: Vec<usize>,
    pub grid_channels: usize,
    pub alpha: f64,
    pub lr_main: f64,
    pub lr_decay_epoch: usize,
    pub lr_decay_factor: f64,
    pub total_epochs: usize,
    /// Learning rate of the final layer of the grid network.
    pub lr_theta_layer: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub batch_size: usize,
    pub augment: Augment,
    /// Initial scale on the diagonal of theta.
    pub theta_init_scale: f64,
    pub seed: u64,
}

impl Default for PanConfig {
    fn default() -> Self {
        PanConfig {
            input_h: 64,
            input_w: 32,
            in_channels: 3,
            input_mean: 0.45,
            input_std: 0.25,
            num_classes: 16,
            base_channels: vec![16, 32, 64, 128],
            align_channels: vec![64, 128],
            grid_channels: 64,
            alpha: 0.5,
            lr_main: 1e-3,
            lr_decay_epoch: 30,
            lr_decay_factor: 0.1,
            total_epochs: 40,
            lr_theta_layer: 1e-5,
            momentum: 0.9,
            nesterov: true,
            batch_size: 16,
            augment: Augment::default(),
            theta_init_scale: 0.8,
            seed: 0,
        }
    }
}

impl PanConfig {
    /// The small network used for end-to-end gradient checks.
    pub fn miniature() -> Self {
        PanConfig {
            input_h: 8,
            input_w: 8,
            num_classes: 3,
            base_channels: vec![2, 2, 2, 2],
            align_channels: vec![2, 2],
            grid_channels: 2,
            batch_size: 2,
            augment: Augment::none(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(PanError::InvalidArgument(m));
        if self.num_classes < 2 {
            return fail(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha {} outside [0, 1]", self.alpha));
        }
        for (name, lr) in [
            ("lr_main", self.lr_main),
            ("lr_theta_layer", self.lr_theta_layer),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return fail(format!("{name} must be finite and non-negative, got {lr}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.base_channels.is_empty() || self.align_channels.is_empty() {
            return fail("base and alignment branches need at least one block".into());
        }
        if self
            .base_channels
            .iter()
            .chain(&self.align_channels)
            .any(|&c| c == 0)
            || self.grid_channels == 0
            || self.in_channels == 0
        {
            return fail("channel widths must be positive".into());
        }
        if !(self.input_std > 0.0 && self.input_std.is_finite() && self.input_mean.is_finite()) {
            return fail(format!(
                "bad input standardization ({}, {})",
                self.input_mean, self.input_std
            ));
        }
        if self.input_h == 0 || self.input_w == 0 || self.batch_size == 0 {
            return fail("input size and batch size must be positive".into());
        }
        Ok(())
    }

    /// Learning-rate multiplier for a 1-based epoch.
    pub fn lr_scale(&self, epoch: usize) -> f64 {
        if epoch > self.lr_decay_epoch {
            self.lr_decay_factor
        } else {
            1.0
        }
    }

    pub fn base_embed_dim(&self) -> usize {
        *self.base_channels.last().expect("validated")
    }

    pub fn align_embed_dim(&self) -> usize {
        *self.align_channels.last().expect("validated")
    }
}
