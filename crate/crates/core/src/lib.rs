pub mod cli;
pub mod config;
pub mod error;
pub mod kinetics;
pub mod plot;
pub mod profiles;
pub mod pulsating;
pub mod run;
pub mod semiflow;
pub mod speeds;
pub mod waves;

pub use error::{Error, Result};
