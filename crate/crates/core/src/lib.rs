//! Nonlinear cardiac mechanics with substructuring (BDDC) and algebraic
//! multigrid preconditioners.

pub mod amg;
pub mod bddc;
pub mod constitutive;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod timestepper;
