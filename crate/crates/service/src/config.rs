//! Server configuration: a TOML file plus `TOURGUIDE_*` environment
//! overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tourguide_core::catalog::CourseCatalog;
use tourguide_core::gateway::{BackendHandle, RemoteConfig, ScriptError, ScriptedBackend};
use tourguide_core::knowledge::{
    ClockTime, FixtureRoutes, HttpRouteProvider, KnowledgeHub, RouteProvider, RouteTemplates, SpotDirectory,
};
use tourguide_core::phase::PhaseTable;
use tourguide_core::prompt::PromptLibrary;
use tourguide_core::segment::PunctuationSet;
use tourguide_core::session::{Scenario, SessionSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKindConfig {
    Scripted,
    Echo,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKindConfig,
    /// Script file for the scripted backend; every session replays it from
    /// the start.
    pub script: Option<PathBuf>,
    pub endpoint: String,
    pub model_id: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKindConfig::Echo,
            script: None,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_id: "gpt-4-32k-0613".into(),
            api_key: None,
            timeout_secs: 30,
            max_retries: 1,
        }
    }
}

/// Fixture paths. Unset paths use the data compiled into the binary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub spots: Option<PathBuf>,
    pub routes: Option<PathBuf>,
    pub courses: Option<PathBuf>,
    pub route_templates: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteApiConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    #[serde(default = "default_route_timeout")]
    pub timeout_secs: u64,
}

fn default_route_timeout() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub max_sessions: usize,
    pub log_dir: PathBuf,
    pub backend: BackendConfig,
    pub data: DataConfig,
    pub route_api: Option<RouteApiConfig>,
    /// Turn caps for phases 1 to 5.
    pub phase_caps: [u32; 5],
    pub punctuation: String,
    pub start_time: String,
    pub day_cutoff: String,
    pub max_prompt_chars: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let settings = SessionSettings::default();
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            max_sessions: 64,
            log_dir: PathBuf::from("transcripts"),
            backend: BackendConfig::default(),
            data: DataConfig::default(),
            route_api: None,
            phase_caps: [3, 5, 10, 6, 2],
            punctuation: settings.punctuation.into(),
            start_time: settings.start_time.to_string(),
            day_cutoff: settings.day_cutoff.to_string(),
            max_prompt_chars: tourguide_core::prompt::DEFAULT_MAX_PROMPT_CHARS,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("environment variable {name}: {reason}")]
    Env { name: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Script(#[from] ScriptError),
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })
    }

    /// Loads `path` if given, else defaults, then applies the environment.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        config.apply_env(|name| std::env::var(name).ok())?;
        config.validate()?;
        Ok(config)
    }

    /// Applies overrides from `TOURGUIDE_LISTEN`, `TOURGUIDE_MAX_SESSIONS`,
    /// `TOURGUIDE_LOG_DIR`, `TOURGUIDE_BACKEND`, `TOURGUIDE_SCRIPT`,
    /// `TOURGUIDE_ENDPOINT`, `TOURGUIDE_MODEL` and `TOURGUIDE_API_KEY`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parsed<T: std::str::FromStr>(name: &str, value: String) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::Env { name: name.into(), reason: e.to_string() })
        }
        if let Some(v) = get("TOURGUIDE_LISTEN") {
            self.listen = parsed("TOURGUIDE_LISTEN", v)?;
        }
        if let Some(v) = get("TOURGUIDE_MAX_SESSIONS") {
            self.max_sessions = parsed("TOURGUIDE_MAX_SESSIONS", v)?;
        }
        if let Some(v) = get("TOURGUIDE_LOG_DIR") {
            self.log_dir = v.into();
        }
        if let Some(v) = get("TOURGUIDE_BACKEND") {
            self.backend.kind = match v.as_str() {
                "scripted" => BackendKindConfig::Scripted,
                "echo" => BackendKindConfig::Echo,
                "remote" => BackendKindConfig::Remote,
                other => {
                    return Err(ConfigError::Env {
                        name: "TOURGUIDE_BACKEND".into(),
                        reason: format!("unknown backend {other:?}"),
                    })
                }
            };
        }
        if let Some(v) = get("TOURGUIDE_SCRIPT") {
            self.backend.script = Some(v.into());
        }
        if let Some(v) = get("TOURGUIDE_ENDPOINT") {
            self.backend.endpoint = v;
        }
        if let Some(v) = get("TOURGUIDE_MODEL") {
            self.backend.model_id = v;
        }
        if let Some(v) = get("TOURGUIDE_API_KEY") {
            self.backend.api_key = Some(v);
        }
        Ok(())
    }

    /// Checks that referenced files exist and values are in range.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.listen.port() == 0 {
            return Err(ConfigError::Invalid("listen port must be non-zero".into()));
        }
        if self.max_sessions == 0 {
            return Err(ConfigError::Invalid("max_sessions must be at least 1".into()));
        }
        let data = &self.data;
        let paths = [&data.spots, &data.routes, &data.courses, &data.route_templates, &data.templates_dir, &self.backend.script];
        for path in paths.into_iter().flatten() {
            if !path.exists() {
                return Err(ConfigError::Invalid(format!("{} does not exist", path.display())));
            }
        }
        if self.backend.kind == BackendKindConfig::Scripted && self.backend.script.is_none() {
            return Err(ConfigError::Invalid("scripted backend needs backend.script".into()));
        }
        if self.backend.kind == BackendKindConfig::Remote && self.backend.api_key.is_none() {
            return Err(ConfigError::Invalid("remote backend needs an API key (TOURGUIDE_API_KEY)".into()));
        }
        Ok(())
    }

    pub fn settings(&self) -> Result<SessionSettings, ConfigError> {
        let time = |s: &str| s.parse::<ClockTime>().map_err(ConfigError::Invalid);
        let punctuation = PunctuationSet::try_from(self.punctuation.clone())
            .map_err(|_| ConfigError::Invalid("punctuation set is empty".into()))?;
        Ok(SessionSettings { punctuation, start_time: time(&self.start_time)?, day_cutoff: time(&self.day_cutoff)? })
    }

    /// Loads fixtures and templates into a scenario.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let data_err = |e: &dyn std::fmt::Display| ConfigError::Data(e.to_string());
        let spots = match &self.data.spots {
            Some(p) => SpotDirectory::load(p).map_err(|e| data_err(&e))?,
            None => SpotDirectory::builtin(),
        };
        let routes: Arc<dyn RouteProvider> = match (&self.route_api, &self.data.routes) {
            (Some(api), _) => {
                Arc::new(HttpRouteProvider::new(&api.endpoint, api.api_key.clone(), Duration::from_secs(api.timeout_secs)))
            }
            (None, Some(p)) => Arc::new(FixtureRoutes::load(p).map_err(|e| data_err(&e))?),
            (None, None) => Arc::new(FixtureRoutes::builtin()),
        };
        let templates = match &self.data.route_templates {
            Some(p) => RouteTemplates::load(p).map_err(|e| data_err(&e))?,
            None => RouteTemplates::builtin(),
        };
        let knowledge = KnowledgeHub::new(spots, routes, templates);
        let catalog = match &self.data.courses {
            Some(p) => CourseCatalog::load(p, &knowledge.spots).map_err(|e| data_err(&e))?,
            None => CourseCatalog::builtin(&knowledge.spots),
        };
        let prompts = match &self.data.templates_dir {
            Some(dir) => PromptLibrary::load_dir(dir).map_err(|e| data_err(&e))?,
            None => PromptLibrary::builtin(),
        }
        .with_max_chars(self.max_prompt_chars);
        let phases = PhaseTable::default().with_caps(self.phase_caps).map_err(|e| data_err(&e))?;
        Scenario::new(phases, prompts, catalog, knowledge, self.settings()?).map_err(|e| data_err(&e))
    }

    /// Builds the backend for one new session.
    pub fn backend(&self) -> Result<BackendHandle, ConfigError> {
        let b = &self.backend;
        Ok(match b.kind {
            BackendKindConfig::Echo => BackendHandle::echo(),
            BackendKindConfig::Scripted => {
                let path = b.script.as_ref().ok_or_else(|| ConfigError::Invalid("scripted backend needs backend.script".into()))?;
                BackendHandle::scripted(ScriptedBackend::from_file(path)?)
            }
            BackendKindConfig::Remote => BackendHandle::remote(
                RemoteConfig {
                    endpoint: b.endpoint.clone(),
                    model_id: b.model_id.clone(),
                    api_key: b.api_key.clone(),
                    timeout: Duration::from_secs(b.timeout_secs),
                },
                b.max_retries,
            ),
        }
        .with_max_retries(b.max_retries))
    }
}
