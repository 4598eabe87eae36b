pub mod adjoint;
pub mod error;
pub mod forward;
pub mod grid;
pub mod matfun;
pub mod models;
pub mod nonlocal;
pub mod optimizer;
pub mod problem;
pub mod steppers;
pub mod study;

pub use error::{Error, Result};
