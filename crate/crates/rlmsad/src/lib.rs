//! Time-series anomaly detection by dynamic detector selection: five
//! unsupervised base detectors score every test instance, and a Q-learning
//! policy picks which detector's verdict to trust at each timestep, guided
//! by two confidence scores describing detector trustworthiness.

pub mod confidence;
pub mod config;
pub mod dataio;
pub mod detectors;
pub mod dqnagent;
pub mod error;
pub mod evalharness;
pub mod mdpenv;
pub mod neuralcore;
pub mod runtime;

pub use error::{Error, Result};
