pub mod error;
pub mod fft;
pub mod filterbank;
pub mod io;
pub mod joint;
pub mod models;
pub mod network;
pub mod reconstruction;
pub mod scalogram;
pub mod signal;
pub mod time_scattering;
pub mod validation;

pub use error::{Error, Result};
