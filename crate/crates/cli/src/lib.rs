//! Command-line front end: holdout reproduction on the two-game panel,
//! single estimates, and the synthetic validation battery.

pub mod app;
pub mod estimate;
pub mod failure;
pub mod reproduce;
pub mod validate;

pub use app::{main_with, Cli};
pub use failure::{ExitStatus, Failure};
