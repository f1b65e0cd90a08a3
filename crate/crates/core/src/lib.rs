pub mod error;
pub mod experiments;
pub mod ode;
pub mod op;
pub mod semigroup;
pub mod unraveling;

pub use error::{Error, Result};
pub use op::{C64, ComplexMat, DensityOp, ProjectorFamily, PureState};
