//! Fluid-model laboratory for multipath TCP equilibria and their stability.
//!
//! The pipeline: [`net_model`] builds a scenario, [`equilibrium`] computes
//! the single-path baseline and multipath optima, [`dynamics`] integrates
//! controller ODEs (optionally under [`traffic`] modulation), [`stability`]
//! measures the displacement between equilibria, and [`experiment`] runs
//! seeded ensembles and writes reports.

// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod equilibrium;
pub mod experiment;
pub mod net_model;
pub mod stability;
pub mod traffic;
pub mod utility;
