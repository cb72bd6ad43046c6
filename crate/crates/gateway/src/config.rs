use std::path::PathBuf;

use limes_core::registry::default_data_dir;

pub const PORT_ENV: &str = "LIMES_PORT";
pub const MAX_CONCURRENCY_ENV: &str = "LIMES_MAX_CONCURRENCY";

pub const DEFAULT_PORT: u16 = 7070;
pub const DEFAULT_MAX_CONCURRENT: usize = 64;
pub const DEFAULT_DEADLINE_MS: u64 = 30_000;
pub const DEFAULT_MAX_BODY_BYTES: usize = 64 << 20;
pub const RECORD_CAPACITY: usize = 10_000;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub listen_port: u16,
    pub max_concurrent_invocations: usize,
    pub default_deadline_ms: u64,
    pub data_dir: PathBuf,
    pub max_body_bytes: usize,
    /// Files copied into every invocation's fresh sandbox directory.
    pub seed_dir: Option<PathBuf>,
    /// Whether guests may write inside their sandbox directory.
    pub allow_writes: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{var}: {msg}")]
    Env { var: &'static str, msg: String },
    #[error("{0} must be positive")]
    NotPositive(&'static str),
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen_port: DEFAULT_PORT,
            max_concurrent_invocations: DEFAULT_MAX_CONCURRENT,
            default_deadline_ms: DEFAULT_DEADLINE_MS,
            data_dir: default_data_dir(),
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            seed_dir: None,
            allow_writes: true,
        }
    }
}

fn env_num<T: std::str::FromStr>(var: &'static str) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match std::env::var(var) {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|e: T::Err| ConfigError::Env { var, msg: e.to_string() }),
        Err(_) => Ok(None),
    }
}

impl ServiceConfig {
    /// Defaults overridden by `LIMES_PORT`, `LIMES_DATA_DIR` and
    /// `LIMES_MAX_CONCURRENCY`.
    pub fn from_env() -> Result<Self, ConfigError> {
        let mut config = ServiceConfig::default();
        if let Some(port) = env_num(PORT_ENV)? {
            config.listen_port = port;
        }
        if let Some(n) = env_num(MAX_CONCURRENCY_ENV)? {
            config.max_concurrent_invocations = n;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_concurrent_invocations == 0 {
            return Err(ConfigError::NotPositive("max_concurrent_invocations"));
        }
        if self.default_deadline_ms == 0 {
            return Err(ConfigError::NotPositive("default_deadline_ms"));
        }
        if self.max_body_bytes == 0 {
            return Err(ConfigError::NotPositive("max_body_bytes"));
        }
        Ok(())
    }
}
