//! Two-dimensional collocated finite-volume solver for incompressible flow
//! with a momentum-weighted interpolation family, its discrete adjoint, and
//! finite-difference sensitivity verification.

pub mod adjoint;
pub mod bc;
pub mod cases;
pub mod config;
pub mod fields;
pub mod geom;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod ops;
pub mod primal;
pub mod sensitivity;
pub mod transport;
pub mod verify;
