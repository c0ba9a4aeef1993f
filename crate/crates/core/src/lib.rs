pub mod controllers;
pub mod error;
pub mod freqresp;
pub mod interconnect;
pub mod lifting;
pub mod loops;
pub mod lti;
pub mod poly;
pub mod qft;
pub mod report;
pub mod scenario;
pub mod simulation;
pub mod ugv;

pub use error::{Error, Result};
