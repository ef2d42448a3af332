//! Moderate-deviations toolkit for slow-fast SDEs driven by fractional
//! Brownian motion.

pub mod cameron_martin;
pub mod cli;
pub mod error;
pub mod fbm;
pub mod fraccalc;
pub mod grid;
pub mod invariants;
pub mod mdp;
pub mod models;
pub mod operator;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod table;
pub mod young;

pub use error::{Error, Result};
pub use fbm::{HurstParam, Regime, SamplingMethod};
pub use grid::{Path, QuadratureRule, TimeGrid};
pub use operator::OperatorMatrix;
