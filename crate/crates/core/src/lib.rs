//! Open-system simulation of dynamically decoupled dissipative state preparation.

extern crate blas_src;

pub mod cluster;
pub mod dynamic_noise;
pub mod error;
pub mod linalg;
pub mod liouville;
pub mod magnus;
pub mod ode;
pub mod protocol;
pub mod pulses;
pub mod singlet;
pub mod spin;

pub use error::{Error, Result};
