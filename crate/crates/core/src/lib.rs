#![allow(clippy::needless_range_loop)]

pub mod certify;
pub mod cli;
pub mod error;
pub mod graphs;
pub mod par;
pub mod spine2;
pub mod stallings;
pub mod traintrack;
pub mod words;

pub use error::{Error, Result};
