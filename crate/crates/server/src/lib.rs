//! HTTP service and command-line front end over `pdt-tracker`.

pub mod api;
pub mod cli;
pub mod config;
pub mod service;

pub use api::router;
pub use config::Config;
pub use service::{Clock, FixedClock, Service, SystemClock, DEMO_GRAPH};
