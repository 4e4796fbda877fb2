//! Prediction deviation and worst-case experiment impact for ODE models
//! fit to noisy time-course data.

pub mod design;
pub mod deviation;
pub mod error;
pub mod estimation;
pub mod io;
pub mod models;
pub(crate) mod objective;
pub mod ode;
pub mod optim;
pub mod rng;
pub mod validation;

pub use error::{Error, Result};
