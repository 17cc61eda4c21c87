pub mod adjoint;
pub mod blockla;
pub mod error;
pub mod exec;
pub mod io;
pub mod optim;
pub mod precond;
pub mod radiff;
pub mod timeint;

pub use error::{Error, Result};
