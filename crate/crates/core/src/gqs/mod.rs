//! Gravitational quantum states above the mirror.

pub mod basis;
pub mod momentum;

pub use basis::{project_coefficients, project_on_zeros, EigenGridSpec, EigenTable, GqsBasis, DEFAULT_STATE_COUNT};
pub use momentum::{cross_density, default_p_grid, eigen_momentum, momentum_density, MomentumDensity};
