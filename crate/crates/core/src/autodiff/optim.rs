use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use crate::error::{PanError, Result};

/// Mini-batch SGD with (optionally Nesterov) momentum.
///
/// With velocity `v` and gradient `g`:
///
/// ```text
/// v <- momentum * v + g
/// p <- p - lr * (g + momentum * v)     // nesterov
/// p <- p - lr * v                      // classical
/// ```
#[derive(Debug, Clone)]
pub struct Sgd {
    momentum: f64,
    nesterov: bool,
    velocity: HashMap<ParamId, Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, nesterov: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(PanError::arg(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(Sgd {
            momentum,
            nesterov,
            velocity: HashMap::new(),
        })
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn velocity(&self, id: ParamId) -> Option<&[f64]> {
        self.velocity.get(&id).map(Vec::as_slice)
    }

    /// Updates one parameter in place from its accumulated gradient. A
    /// parameter without a gradient is left alone.
    pub fn step_param(&mut self, store: &mut ParamStore, id: ParamId, lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(PanError::arg(format!(
                "learning rate {lr} must be finite and >= 0"
            )));
        }
        let t = store.get_mut(id);
        let Some(grad) = t.grad().map(<[f64]>::to_vec) else {
            return Ok(());
        };
        let v = self
            .velocity
            .entry(id)
            .or_insert_with(|| vec![0.0; grad.len()]);
        let mu = self.momentum;
        for ((p, vi), g) in t.data_mut().iter_mut().zip(v.iter_mut()).zip(&grad) {
            *vi = mu * *vi + g;
            let update = if self.nesterov { g + mu * *vi } else { *vi };
            *p -= lr * update;
        }
        Ok(())
    }

    /// Steps every listed parameter with its own learning rate.
    pub fn step<F>(&mut self, store: &mut ParamStore, ids: &[ParamId], lr_for: F) -> Result<()>
    where
        F: Fn(ParamId) -> f64,
    {
        for &id in ids {
            self.step_param(store, id, lr_for(id))?;
        }
        Ok(())
    }
}
