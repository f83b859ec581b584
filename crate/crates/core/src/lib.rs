pub mod bv_rep;
pub mod cell_solver;
pub mod density;
mod discrete;
pub mod error;
pub mod gamma_lab;
pub mod grid;
pub mod integrand;
pub mod interface_solver;
pub mod linalg;
pub mod manifold;
mod mfield;
pub mod optim;
mod precond;
pub mod rng;

pub use error::{Error, Result};
