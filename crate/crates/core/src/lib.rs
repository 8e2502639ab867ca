//! Small conductive inclusion imaging from eddy-current response matrices.
//!
//! The crate is organised along the processing chain:
//!
//! * [`geometry`]: Laplace Green's function, its Hessian and dipole fields.
//! * [`forward`]: leading-order perturbation formulas and response matrices.
//! * [`acquisition`]: standard and Hadamard-multiplexed noisy measurements.
//! * [`random_matrix`]: quarter-circle law, Tracy-Widom (type 1) and the
//!   spiked-model predictions for the top singular value.
//! * [`detection`]: ratio statistic, Neyman-Pearson threshold and POD.
//! * [`imaging`]: MUSIC localization.
//! * [`characterization`]: least-squares strength and multi-frequency fits.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod characterization;
pub mod detection;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod imaging;
pub mod random_matrix;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{Dyadic3, Point3, Vec3};
