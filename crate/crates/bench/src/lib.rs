//! Fixtures shared by the benchmarks.

use geoop::numerics::{RngStream, Tensor};
use geoop::operator::{AugmentationConfig, ModelConfig, OperatorModel};

pub fn gaussian(seed: u64, shape: &[usize]) -> Tensor {
    let mut rng = RngStream::new(seed, 0);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gaussian()).collect()).expect("shape")
}

/// Desk-scale 1-D model: width 32, 16 modes, 4 layers.
pub fn desk_model(augmentation: AugmentationConfig) -> OperatorModel {
    let cfg = ModelConfig {
        augmentation,
        ..ModelConfig::default()
    };
    OperatorModel::init(cfg, 0).expect("valid config")
}
