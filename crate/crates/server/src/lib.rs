//! HTTP service and command-line tools around `narrator-core`.

pub mod app;
pub mod cli;
pub mod config;
pub mod error;
pub mod runtime;
pub mod view;
