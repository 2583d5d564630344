//! Private linear computation over prime fields: the JPLC and IPLC
//! encoders, a private-linear-combination engine for the servers, privacy
//! audits and the PIR reductions.

pub mod audit;
pub mod cli;
pub mod error;
pub mod ffield;
pub mod gflinalg;
pub mod iplc;
pub mod jplc;
pub mod pipeline;
pub mod plc;
pub mod protocol;
pub mod reductions;
pub mod transcript;

pub use error::{PlcError, Result};
pub use ffield::{Fe, PrimeField};
pub use gflinalg::{IndexSet, MatrixGF, VectorGF};
pub use protocol::{Dataset, Demand, PrivacyMode, RateReport, Rational, SetupParams};
