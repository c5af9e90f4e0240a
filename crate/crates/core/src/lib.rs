pub mod cli;
pub mod controller;
pub mod cost;
pub mod error;
pub mod hull;
pub mod learner;
pub mod lipnet;
pub mod model;
pub mod record;
pub mod rtopt;
pub mod scenario;

pub use error::{Error, Result};
