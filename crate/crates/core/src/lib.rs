//! Restricted mean time lost (RMTL) regression for competing-risks data.
//!
//! The cumulative effect of each covariate on the mean life lost to the cause
//! of interest is modelled as a quadratic polynomial in the restriction horizon
//! `l`. Estimation stacks one IPCW-weighted copy of the cohort per horizon and
//! solves a single estimating equation with a subject-clustered sandwich
//! variance. The static regression at a single horizon `tau` falls out as the
//! one-point, constant-basis special case.
//!
//! Layout:
//!
//! - [`data`] subject records, covariate schema, CSV ingestion
//! - [`nonparam`] censoring Kaplan-Meier, Aalen-Johansen CIF, group RMTL
//! - [`stacking`] horizon grid, restriction, time basis, stacked dataset
//! - [`estimator`] fitting, sandwich variance, Wald tests, stepwise selection
//! - [`simulation`] Gompertz generator, true values, Monte Carlo harness
//! - [`evaluation`] effect trajectories, predictions, C-index, prediction error
//! - [`cli`] and [`serve`] the `rmtl` binary and its HTTP service
//!
//! Runnable walkthroughs live in `examples/`; see the README for a map.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod nonparam;
pub mod serve;
pub mod simulation;
pub mod stacking;

pub use data::{CompetingRisksDataset, CovariateSchema, EventCode, PatientProfile, SubjectRecord};
pub use error::{Error, Result};
pub use estimator::{fit, FitOptions, FittedModel, Link};
pub use stacking::{build_stacked, HorizonGrid, TimeBasis};
