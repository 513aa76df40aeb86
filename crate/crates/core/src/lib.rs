//! Cell-free massive MIMO integrated sensing and communication simulator.

pub mod assignment;
pub mod beamforming;
pub mod channel;
pub mod config;
pub mod detection;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod power;
pub mod rng;
pub mod scenario;
pub mod sinr;
pub mod validate;

pub use config::SystemConfig;
pub use error::{IsacError, Result};
pub use scenario::Scenario;
