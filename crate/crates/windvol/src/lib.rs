//! Spatiotemporal volatility modelling for daily wind-speed panels.
//!
//! The crate covers the full workflow: loading a station panel from CSV
//! ([`ingest`]), removing seasonality and short-run persistence
//! ([`preprocess`]), building spatial weight matrices ([`weights`]),
//! residual diagnostics ([`diagnostics`]), univariate GARCH/EGARCH
//! benchmarks ([`unigarch`]), a joint spatiotemporal ARMA-GARCH model
//! ([`stgarch`]), a spatial dynamic panel alternative ([`sdpd`]), a
//! bivariate spatiotemporal log-ARCH linking two measurement heights
//! ([`mvlogarch`]), and out-of-sample forecast evaluation against realized
//! volatility proxies ([`evaluate`]). The `windvol` binary exposes the
//! same steps as a pipeline with deterministic, hash-stamped artifacts.

pub mod diagnostics;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod mvlogarch;
pub mod optim;
pub mod pipeline;
pub mod preprocess;
pub mod sdpd;
pub mod stgarch;
pub mod unigarch;
pub mod weights;

pub use error::{Result, WindvolError};
