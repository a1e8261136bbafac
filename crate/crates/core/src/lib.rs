//! Risk-averse performance-specified (RAPS) measurement selection for
//! GNSS-style state estimation.
//!
//! The crate bundles everything needed to compare three measurement-update
//! strategies on the same measurement stream:
//!
//! * **EKF**: every measurement is used.
//! * **TD**: threshold decisions on prior residuals (`|r_i| >= lambda * sigma_ri`
//!   removes measurement `i`).
//! * **RAPS**: the binary selection vector minimizing the MAP risk subject to a
//!   lower bound on the diagonal of the posterior information matrix, solved
//!   either exactly (exhaustive enumeration) or with a greedy block-coordinate
//!   scheme.
//!
//! Around the selectors sit the supporting pieces: WGS-84 geodesy
//! ([`geodesy`]), pseudorange/Doppler models ([`models`]), PVA + clock
//! propagation ([`propagation`]), the Gauss-Newton MAP update
//! ([`estimation`]), a synthetic multi-constellation scenario generator with
//! multipath outlier injection ([`simulator`]), error statistics
//! ([`metrics`]) and a batch front end ([`cli`]).
//!
//! ```
//! use nalgebra::{dmatrix, dvector};
//! use raps::estimation::{map_update, LinearObservations};
//! use raps::types::{SelectionVector, StateEstimate};
//!
//! // One scalar state, unit prior, two direct observations.
//! let prior = StateEstimate::from_covariance(0.0, dvector![0.0], dmatrix![1.0]).unwrap();
//! let obs = LinearObservations::new(dmatrix![1.0; 1.0], dvector![0.1, 3.0], dvector![1.0, 1.0]).unwrap();
//! let b = SelectionVector::from_flags(vec![true, false]);
//! let result = map_update(&prior, &obs, &b).unwrap();
//! assert!((result.x_plus[0] - 0.05).abs() < 1e-12);
//! assert!((result.risk - 0.005).abs() < 1e-12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod geodesy;
pub mod metrics;
pub mod models;
pub mod propagation;
pub mod selection;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
