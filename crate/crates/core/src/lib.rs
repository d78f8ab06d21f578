//! Link-level simulator for grant-free uplink access with index-modulated
//! pilots, compared against single-pilot transmission.

pub mod channel;
pub mod cli;
pub mod codec;
pub mod error;
pub mod pilots;
pub mod rx;
pub mod sim;
pub mod tx;
pub mod validate;

pub use error::{Error, Result};
