//! Numerical verification toolkit for two explicit complete Kähler–Einstein
//! metrics on the punctured neighbourhood of the zero section of a negative
//! line bundle over an abelian variety.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abelian;
pub mod ball;
pub mod calabi;
pub mod error;
pub mod quadrature;
pub mod quasi;
pub mod sampling;
pub mod wirtinger;

pub use abelian::{LatticeVector, PeriodData};
pub use ball::{BundlePoint, DeckElement, FiberChart, HeisenbergPoint, UpstairsPoint};
pub use calabi::{AnsatzProfile, LineBundleGeom};
pub use error::{Error, Result};
pub use nalgebra;
pub use num_complex::Complex64;
pub use quasi::{QuasiChart, ReferenceDomains};
pub use wirtinger::{CPoint, FnField, HermitianForm, ScalarField, StencilConfig};
