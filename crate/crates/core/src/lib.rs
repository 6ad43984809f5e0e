pub mod cpa_net;
pub mod density;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod polarity;
pub mod seed;
pub mod spectral;
pub mod toy;

pub use error::{Error, Result};
