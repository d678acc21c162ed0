//! Numerical toolkit for degenerate, fully nonlinear, nonlocal mean field
//! games on the periodic unit torus.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`], [`levy`], [`operator`], [`holder`]: grids, Lévy measures of
//!   order below one, their quadrature operators and Hölder seminorms;
//! * [`hamiltonian`]: cost/Hamiltonian conjugate pairs and regularity checks;
//! * [`hjb`]: monotone explicit scheme for the backward HJB equation;
//! * [`fp`]: forward Fokker–Planck solver, the dual equation and the duality
//!   (Holmgren) residual;
//! * [`regularity`]: exponent recursions and uniqueness thresholds;
//! * [`mfg`]: monotone couplings and the damped fixed-point loop;
//! * [`sde`]: Monte Carlo simulation of the controlled time-change model;
//! * [`config`], [`acceptance`]: experiment configuration and the
//!   end-to-end verification suite used by `levy-mfg verify-all`.

pub mod acceptance;
pub mod config;
pub mod dense;
pub mod error;
pub mod fp;
pub mod grid;
pub mod hjb;
pub mod holder;
pub mod levy;
pub mod mfg;
pub mod operator;
pub mod hamiltonian;
pub mod regularity;
pub mod sde;
pub mod special;

pub use error::{Error, Result};
pub use grid::{Grid, SpaceTimeField};
pub use levy::LevyMeasureSpec;
pub use operator::{assemble_operator, DiscreteOperator};
