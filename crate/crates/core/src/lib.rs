pub mod autograd;
pub mod cyclic;
pub mod deformable;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod tensor;
pub mod vector_field;

pub use error::{Error, Result};
