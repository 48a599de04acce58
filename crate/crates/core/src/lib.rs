//! Systemic-risk analysis for equity price panels.
//!
//! The pipeline runs from a CSV panel of daily prices to:
//!
//! - log returns, normalized prices and descriptive statistics ([`marketdata`]),
//! - empirical VaR / CVaR per asset ([`risk`]),
//! - correlation and exposure networks with threshold filtering, clustering
//!   coefficients and Erdős-Rényi benchmarks ([`netbuild`]),
//! - deterministic threshold cascades driven by correlation influence
//!   ([`cascade_det`]),
//! - Monte Carlo capital-shortfall cascades over the exposure network
//!   ([`cascade_mc`]),
//! - CSV / JSON / DOT emitters and run manifests ([`report`]).

pub mod cascade_det;
pub mod cascade_mc;
pub mod error;
pub mod marketdata;
pub mod matrix;
pub mod netbuild;
pub mod report;
pub mod risk;

pub use error::{Error, Result};
pub use marketdata::{AssetMeta, PricePanel, Region, ReturnPanel};
pub use matrix::Matrix;
