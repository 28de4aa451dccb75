//! Adaptive-gradient optimizer for sparse embedding updates.
//!
//! Per coordinate: `accum += g^2; param -= lr * g / (sqrt(accum) + eps)`.
//! Only the rows a batch actually touched are ever visited, so untouched
//! rows are bit-identical across steps.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdagradConfig {
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl Default for AdagradConfig {
    fn default() -> Self {
        AdagradConfig {
            learning_rate: 0.1,
            epsilon: 1e-10,
        }
    }
}

/// Accumulator state for one parameter tensor (flattened).
#[derive(Debug, Clone)]
pub struct Adagrad {
    cfg: AdagradConfig,
    accum: Vec<f64>,
}

impl Adagrad {
    pub fn new(len: usize, cfg: AdagradConfig) -> Self {
        Adagrad {
            cfg,
            accum: vec![0.0; len],
        }
    }

    /// Update the slice of parameters starting at `offset` in the flat
    /// tensor. `label` names the parameter in the training fault raised on a
    /// non-finite gradient; it is only evaluated on that path.
    pub fn step(
        &mut self,
        offset: usize,
        param: &mut [f64],
        grad: &[f64],
        label: impl FnOnce() -> String,
    ) -> Result<()> {
        assert_eq!(param.len(), grad.len(), "optimizer shape mismatch");
        assert!(
            offset + param.len() <= self.accum.len(),
            "optimizer offset out of range"
        );
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient for {}",
                label()
            )));
        }
        let acc = &mut self.accum[offset..offset + param.len()];
        for ((p, &g), a) in param.iter_mut().zip(grad).zip(acc) {
            if g == 0.0 {
                continue;
            }
            *a += g * g;
            *p -= self.cfg.learning_rate * g / (a.sqrt() + self.cfg.epsilon);
        }
        Ok(())
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accum
    }
}
