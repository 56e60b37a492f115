use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} and target {:?} differ",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("MSE of an empty tensor".into()));
    }
    let count = pred.len() as f64;
    let diff: Vec<f64> = pred.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
    let value = diff.iter().map(|d| d * d).sum::<f64>() / count;
    let grad = diff.iter().map(|d| 2.0 * d / count).collect();
    Ok((value, Tensor::from_vec(pred.shape(), grad)?))
}
