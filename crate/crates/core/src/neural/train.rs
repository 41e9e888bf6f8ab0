use nalgebra::DMatrix;

use super::{AdamState, Parameterized};
use crate::error::{Result, TbnnError};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Stop after this many epochs without improvement; 0 disables early stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 1e-2,
            patience: 5,
            min_delta: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Training loss of the parameters entering each epoch.
    pub train_trace: Vec<f64>,
    /// Validation loss per epoch (empty without a validation closure).
    pub val_trace: Vec<f64>,
    pub best_epoch: usize,
    /// Monitored loss at the restored parameters.
    pub best_loss: f64,
    pub stopped_early: bool,
}

/// Full-batch Adam. `objective` returns the loss and gradients in parameter order.
/// The parameters with the best monitored loss (validation if given, else training) are restored.
pub fn train<M, F>(
    model: &mut M,
    config: &TrainConfig,
    mut objective: F,
    mut validation: Option<&mut dyn FnMut(&M) -> Result<f64>>,
) -> Result<TrainOutcome>
where
    M: Parameterized + Clone,
    F: FnMut(&M) -> Result<(f64, Vec<DMatrix<f64>>)>,
{
    let names = model.parameter_names();
    let mut adam = AdamState::with_hyper(config.lr, config.beta1, config.beta2, config.eps);
    let mut train_trace = Vec::with_capacity(config.epochs);
    let mut val_trace = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 0..config.epochs {
        let (loss, grads) = objective(model)?;
        log::trace!("epoch {epoch}: loss {loss:.6e}");
        train_trace.push(loss);
        if !loss.is_finite() {
            return Err(TbnnError::Diverged { epoch, trace: train_trace });
        }
        let monitored = match validation.as_mut() {
            Some(v) => {
                let l = v(model)?;
                val_trace.push(l);
                l
            }
            None => loss,
        };
        if monitored < best.0 - config.min_delta {
            best = (monitored, epoch, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
        let mut params = model.parameters_mut();
        adam.step(&mut params, &grads, &names)?;
    }
    let (best_loss, best_epoch, best_model) = best;
    if best_loss.is_finite() {
        *model = best_model;
    }
    log::debug!(
        "training finished: best {best_loss:.6e} at epoch {best_epoch}, {} epochs run",
        train_trace.len()
    );
    Ok(TrainOutcome {
        train_trace,
        val_trace,
        best_epoch,
        best_loss,
        stopped_early,
    })
}
