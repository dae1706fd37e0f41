pub mod diffusion_maps;
pub mod error;
pub mod estimator;
pub mod hermite;
pub mod kernel;
pub mod linalg;
pub mod random_features;
pub mod sampling;
pub mod samples;
pub mod stiefel;

pub use error::{Error, Result};
pub use estimator::{Method, PoincareEstimate};
pub use kernel::GaussianKernelConfig;
pub use samples::SampleSet;
