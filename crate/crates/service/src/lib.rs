//! Command-line tool and HTTP service around the interview engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod store;
pub mod views;

pub use api::{router, AppState};
pub use config::AppConfig;
pub use store::FileStore;
