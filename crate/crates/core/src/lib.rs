//! Hyperfine structure of Kramers rare-earth ions in a magnetic field.
//!
//! * [`spin`] builds and diagonalises the effective spin Hamiltonian.
//! * [`ion_file`] reads and writes ground/excited parameter files.
//! * [`field_map`] maps transition frequencies over the applied field and
//!   locates clock (ZEFOZ) points.
//! * [`transitions`] computes optical line strengths, finds symmetric
//!   Λ-systems and synthesises absorption spectra.
//! * [`lineshape`] holds the profile functions and the Faddeeva function.
//! * [`eit`] models the EIT window with its superhyperfine comb and the
//!   field-noise linewidth.

// NaN-rejecting checks are written as `!(x > 0.0)` throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eit;
pub mod error;
pub mod field_map;
pub mod ion_file;
pub mod lineshape;
pub mod spin;
pub mod transitions;

pub use error::{Error, Result};
pub use spin::{
    build_hamiltonian, diagonalize, state_composition, Axis, Component, FieldVector, HermitianMatrix, Level,
    LevelSet, ProductBasis, Projection, Spin, SpinParams, SpinSystem,
};
pub use field_map::{
    quadratic_model, AxisRange, FieldGrid, FieldMap, FrequencyHessian, Gradient, LevelDiagram, Manifold,
    TransitionSelector, ZefozPoint,
};
pub use ion_file::{Ion, State};
