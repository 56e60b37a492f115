//! Foundational kernels: tensors, FFT, dense algebra, conjugate gradients,
//! random streams and Gaussian random fields.

pub mod cg;
pub mod dense;
pub mod fft;
pub mod grf;
pub mod rng;
pub mod tensor;

pub use cg::{cg_solve, CgSolution};
pub use dense::{matrix_exp, matrix_exp_tensor, Mat};
pub use fft::{dft, dft_real, fft_nd, Direction};
pub use grf::{grf_sample, GrfParams};
pub use rng::RngStream;
pub use tensor::{CTensor, Tensor};
