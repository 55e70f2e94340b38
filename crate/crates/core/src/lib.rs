//! Finite element library for planar elliptic equations in non-divergence
//! form, A : D2u = f, with oblique boundary conditions ell . grad u = c on a
//! smooth curved boundary. The constant c is part of the unknown. The
//! discretization uses C0 cubic Hermite elements on curved triangles with a
//! Miranda-Talenti-type stabilization, and enforces the zero-mean gauge
//! through a single Lagrange multiplier.

pub mod assembly;
pub mod element;
mod error;
pub mod experiments;
pub mod geometry;
pub mod interp;
pub mod mesh;
pub mod norms;
pub mod plot;
pub mod quadrature;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
