//! Fourier neural operator with per-layer augmentation slots and
//! hand-written reverse-mode gradients.

mod dense;
mod model;
mod resample;
mod spectral;

pub use dense::{gelu, gelu_grad, Affine};
pub use model::{
    Augmentation, AugmentationConfig, GradientTape, ModelConfig, OperatorBlock, OperatorModel, ParamCount,
    ParameterGradients,
};
pub use resample::{downsample, downsample_axes};
pub use spectral::{mode_count, SpectralCache, SpectralLayer};
