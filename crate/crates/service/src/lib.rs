//! Command-line tools and the WebSocket event service.

pub mod cli;
pub mod config;
pub mod engine;
pub mod hub;
pub mod server;
