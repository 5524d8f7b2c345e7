pub mod calibration;
pub mod ctmc;
pub mod designs;
pub mod error;
pub mod estimators;
pub mod exact_pair;
pub mod hazard;
pub mod io;
mod ode;
pub mod rng;
pub mod simulator;
pub mod sweep;

pub use error::{Error, Result};
pub use hazard::EpidemicParams;
