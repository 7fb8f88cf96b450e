//! Classification of finite sets of quantum measurements by generalized
//! incompatibility, with depolarizing-noise thresholds for each class.

// Links the system OpenBLAS used by the PSD cone of the conic backend.
use openblas_src as _;

pub mod assemblage;
pub mod conic;
pub mod error;
pub mod hermitian;
pub mod hierarchy;
pub mod jm;
pub mod multicopy;
pub mod parent;
pub mod scalar;
pub mod simgrid;
pub mod structures;

pub use error::{Error, Result};
pub use scalar::Real;

pub type HermitianOp64 = hermitian::HermitianOp<f64>;
pub type Measurement64 = assemblage::Measurement<f64>;
pub type Assemblage64 = assemblage::Assemblage<f64>;
pub type Visibility64 = assemblage::Visibility<f64>;
