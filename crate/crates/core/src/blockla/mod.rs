//! Block vectors, block operators and Schur-complement solves for 2x2
//! partitioned linear systems.

mod banded;
mod mat;
mod op;
mod schur;
mod vec;

pub use banded::{Banded, BandedLu};
pub use mat::{Factor, Mat};
pub use op::BlockOp;
pub use schur::{schur_solve, schur_solve_transpose, SchurFactors};
pub use vec::{BlockShape, BlockVec};
