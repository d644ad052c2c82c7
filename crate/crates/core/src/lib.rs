//! Birkhoff normal forms for random coupled oscillators on `Z^d`: monomial
//! algebra, random media, non-resonance checks, the iterative normal-form
//! construction and symplectic integration of the original dynamics.

pub mod algebra;
pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod media;
pub mod nonres;
pub mod normal_form;
pub mod ode;
pub mod selftest;
pub mod state;

pub use error::{Error, Result};
