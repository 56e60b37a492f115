use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;
use crate::operator::OperatorModel;

/// Anything that maps one frame to the next.
pub trait Surrogate: Sync {
    fn predict(&self, u: &Tensor) -> Result<Tensor>;
}

impl Surrogate for OperatorModel {
    fn predict(&self, u: &Tensor) -> Result<Tensor> {
        self.forward(u, None)
    }
}

impl<F> Surrogate for F
where
    F: Fn(&Tensor) -> Result<Tensor> + Sync,
{
    fn predict(&self, u: &Tensor) -> Result<Tensor> {
        self(u)
    }
}

/// Feeds each prediction back as the next input. Returns the `horizon`
/// predicted frames (the initial frame is not included).
pub fn rollout<S: Surrogate + ?Sized>(model: &S, initial: &Tensor, horizon: usize) -> Result<Vec<Tensor>> {
    if horizon == 0 {
        return Err(Error::Config("rollout horizon must be at least 1".into()));
    }
    let mut frames: Vec<Tensor> = Vec::with_capacity(horizon);
    for step in 1..=horizon {
        let prev = frames.last().unwrap_or(initial);
        let next = match model.predict(prev) {
            Ok(t) if t.all_finite() => t,
            Ok(_) | Err(Error::NonFinite(_)) => return Err(Error::RolloutDiverged { step }),
            Err(e) => return Err(e),
        };
        frames.push(next);
    }
    Ok(frames)
}
