//! Deterministic `f64` tensors, a reverse-mode autodiff tape, real FFTs and
//! finite-difference gradient checking.

pub mod fft;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use fft::{irfft, rfft, rfft_bins, ComplexTensor};
pub use gradcheck::{grad_check, grad_check_inputs, GradCheckOptions, GradCheckReport};
pub use params::{Init, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
