//! Power coefficients and their max-min allocation.

mod ccp;
mod vector;

pub use ccp::*;
pub use vector::PowerVector;
