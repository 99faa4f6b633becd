//! Digital quantum simulation of a magnetized thin-film topological insulator
//! on an NV-center register of one electron spin, one ¹³C and the host ¹⁴N.

pub mod error;
pub mod numeric;
pub mod spin;
pub mod ti;
pub mod nv;
pub mod trotter;
pub mod spectroscopy;

pub use error::{Error, Result};
