//! Network host for tour-guide sessions: configuration, wire schema,
//! session manager and the HTTP/WebSocket server.

pub mod config;
pub mod manager;
pub mod server;
pub mod wire;

use std::sync::Arc;

use manager::{BackendFactory, SessionManager};

/// Builds the session manager described by `config`.
pub fn manager_from_config(config: &config::ServerConfig) -> Result<SessionManager, config::ConfigError> {
    let scenario = Arc::new(config.scenario()?);
    let backend_config = config.clone();
    let backends: BackendFactory = Arc::new(move || backend_config.backend().map_err(|e| e.to_string()));
    Ok(SessionManager::new(scenario, backends, config.max_sessions, Some(config.log_dir.clone())))
}
