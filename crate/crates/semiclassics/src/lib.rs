//! Semi-classical mean-field tools for fermions: Thomas-Fermi and Vlasov
//! minimisation, coherent-state Husimi and Wigner transforms, spectral
//! projectors of magnetic Dirichlet Laplacians and reduced Hartree-Fock.

extern crate openblas_src;

pub mod error;
pub mod linalg;
pub mod manybody;
pub mod phasespace;
pub mod semiclassic;
pub mod spectral;
pub mod tf;
pub mod vlasov;

pub use error::{Error, Result};
