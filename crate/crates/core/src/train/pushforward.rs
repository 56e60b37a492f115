use super::loss::mse_loss;
use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;
use crate::operator::{GradientTape, OperatorModel, ParameterGradients};

/// Loss and gradients of one pushforward window.
#[derive(Debug, Clone)]
pub struct PushforwardOutcome {
    pub loss: f64,
    pub grads: ParameterGradients,
    /// Number of forward passes that recorded a tape; always one.
    pub taped_passes: usize,
}

/// Rolls the model `t - 1` times from `window[0]` without recording, then
/// applies it once more with a tape and differentiates the MSE against
/// `window[t]`. `t = 1` is plain one-step training.
pub fn pushforward_step(model: &OperatorModel, window: &[Tensor], t: usize) -> Result<PushforwardOutcome> {
    if t == 0 {
        return Err(Error::Config("pushforward horizon must be at least 1".into()));
    }
    if window.len() < t + 1 {
        return Err(Error::Shape(format!(
            "pushforward with T = {t} needs {} frames, window has {}",
            t + 1,
            window.len()
        )));
    }
    let mut state = window[0].clone();
    for _ in 1..t {
        state = model.forward(&state, None)?;
    }
    let mut tape = GradientTape::new();
    let pred = model.forward(&state, Some(&mut tape))?;
    let (loss, dpred) = mse_loss(&pred, &window[t])?;
    let grads = model.backward(&tape, &dpred)?;
    Ok(PushforwardOutcome {
        loss,
        grads,
        taped_passes: 1,
    })
}

/// Loss of the same window without gradients.
pub fn pushforward_loss(model: &OperatorModel, window: &[Tensor], t: usize) -> Result<f64> {
    if t == 0 || window.len() < t + 1 {
        return Err(Error::Shape(format!("pushforward with T = {t} needs {} frames", t + 1)));
    }
    let mut state = window[0].clone();
    for _ in 0..t {
        state = model.forward(&state, None)?;
    }
    Ok(mse_loss(&state, &window[t])?.0)
}
