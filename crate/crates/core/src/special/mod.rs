//! Special functions and numerical kernels shared by the physics modules.

pub mod airy;
pub mod fourier;
pub mod quad;
pub mod zeros;

pub use airy::{airy, airy_ai, airy_ai_prime};
pub use fourier::{fourier_transform_padded, fourier_transform_tabulated, inverse_fourier_transform, Tabulated};
pub use quad::quadrature;
pub use zeros::{airy_zeros, AiryZeroTable};
