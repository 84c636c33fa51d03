//! Server configuration.
//!
//! Values come from command-line flags, `SNS_*` environment variables and an
//! optional `key = value` file, in that order of precedence. Every file key
//! is the long flag name without the leading dashes, with `_` or `-` as the
//! word separator (`cell_size_cm` for `--cell-size-cm`).

use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;
use ipnet::IpNet;
use sns_core::protocol::AuthToken;
use sns_core::registry::DEFAULT_MAX_RESULTS;
use sns_core::{CellId, GridConfig};
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 4700;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    File {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

/// Raw settings as parsed from flags, environment or one file line.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "sns-server", version, about = "Spatial name system server")]
pub struct Args {
    /// Config file of `key = value` lines.
    #[arg(long, env = "SNS_CONFIG")]
    pub config: Option<PathBuf>,
    /// UDP and TCP listen address.
    #[arg(long, env = "SNS_BIND")]
    pub bind: Option<SocketAddr>,
    #[arg(long, env = "SNS_CELL_ID")]
    pub cell_id: Option<u64>,
    /// Hilbert curve order, 1 to 16.
    #[arg(long, env = "SNS_ORDER", value_parser = clap::value_parser!(u8).range(1..=16))]
    pub order: Option<u8>,
    #[arg(long, env = "SNS_CELL_SIZE_CM")]
    pub cell_size_cm: Option<u32>,
    #[arg(long, env = "SNS_ORIGIN_X_CM", allow_hyphen_values = true)]
    pub origin_x_cm: Option<i64>,
    #[arg(long, env = "SNS_ORIGIN_Y_CM", allow_hyphen_values = true)]
    pub origin_y_cm: Option<i64>,
    /// Upper bound on results per query.
    #[arg(long, env = "SNS_MAX_RESULTS")]
    pub max_results: Option<usize>,
    /// Shared secret, 16 to 64 bytes; enables auth for untrusted peers.
    #[arg(long, env = "SNS_AUTH_TOKEN", hide_env_values = true)]
    pub auth_token: Option<String>,
    /// Comma-separated prefixes exempt from auth; empty for none.
    #[arg(long, env = "SNS_TRUSTED")]
    pub trusted: Option<String>,
    /// Survey file of statically placed devices.
    #[arg(long, env = "SNS_SURVEY")]
    pub survey: Option<PathBuf>,
    #[arg(long, env = "SNS_SNAPSHOT")]
    pub snapshot: Option<PathBuf>,
    #[arg(long, env = "SNS_SNAPSHOT_INTERVAL_SECS")]
    pub snapshot_interval_secs: Option<u64>,
    /// UDP worker threads.
    #[arg(long, env = "SNS_WORKERS")]
    pub workers: Option<usize>,
    /// Concurrent TCP connections; further connections are refused.
    #[arg(long, env = "SNS_MAX_CONNECTIONS")]
    pub max_connections: Option<usize>,
    /// Log filter, e.g. `info` or `debug`.
    #[arg(long, env = "SNS_LOG_LEVEL")]
    pub log_level: Option<String>,
}

macro_rules! merge_fields {
    ($hi:expr, $lo:expr, $($field:ident),*) => {
        Args { $($field: $hi.$field.or($lo.$field)),* }
    };
}

impl Args {
    /// Fills unset fields from `lower`.
    pub fn or(self, lower: Args) -> Args {
        merge_fields!(
            self, lower, config, bind, cell_id, order, cell_size_cm, origin_x_cm, origin_y_cm,
            max_results, auth_token, trusted, survey, snapshot, snapshot_interval_secs, workers,
            max_connections, log_level
        )
    }
}

/// Parses a config file body. Blank lines and `#` comments are ignored.
pub fn parse_file(text: &str, path: &std::path::Path) -> Result<Args, ConfigError> {
    let mut acc = Args::default();
    for (i, raw) in text.lines().enumerate() {
        let err = |message: String| ConfigError::File {
            path: path.to_owned(),
            line: i + 1,
            message,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let key = key.trim();
        if key == "config" {
            return Err(err("config files cannot include other files".into()));
        }
        let flag = format!("--{}={}", key.replace('_', "-"), value.trim());
        // parse each line alone so that errors carry a line number; the
        // environment is cleared so only the file value is seen
        let one = Args::try_parse_from_env_free(["sns-server", flag.as_str()])
            .map_err(|e| err(e.kind().to_string() + ": " + &flag))?;
        acc = acc.or(one);
    }
    Ok(acc)
}

impl Args {
    fn try_parse_from_env_free<I, T>(args: I) -> Result<Args, clap::Error>
    where
        I: IntoIterator<Item = T>,
        T: Into<std::ffi::OsString> + Clone,
    {
        use clap::{CommandFactory, FromArgMatches};
        let mut cmd = Args::command();
        let ids: Vec<_> = cmd.get_arguments().map(|a| a.get_id().clone()).collect();
        for id in ids {
            cmd = cmd.mut_arg(id, |a| a.env(None::<&str>));
        }
        let matches = cmd.try_get_matches_from(args)?;
        Args::from_arg_matches(&matches)
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub cell_id: CellId,
    pub grid: GridConfig,
    pub max_results: usize,
    pub auth_token: Option<AuthToken>,
    pub trusted: Vec<IpNet>,
    pub survey: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
    pub snapshot_interval: Duration,
    pub workers: usize,
    pub max_connections: usize,
    pub log_level: String,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([0, 0, 0, 0], DEFAULT_PORT)),
            cell_id: CellId(0),
            grid: GridConfig::new(10, 10).expect("valid default grid"),
            max_results: DEFAULT_MAX_RESULTS,
            auth_token: None,
            trusted: default_trusted(),
            survey: None,
            snapshot: None,
            snapshot_interval: Duration::from_secs(60),
            workers: 4,
            max_connections: 64,
            log_level: "info".into(),
        }
    }
}

fn default_trusted() -> Vec<IpNet> {
    vec!["127.0.0.0/8".parse().unwrap(), "::1/128".parse().unwrap()]
}

fn parse_trusted(text: &str) -> Result<Vec<IpNet>, ConfigError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| ConfigError::Invalid {
                key: "trusted",
                message: format!("{s:?} is not an address prefix"),
            })
        })
        .collect()
}

impl ServerConfig {
    /// Resolves flags and environment, then the config file they name, then
    /// defaults.
    pub fn from_args(args: Args) -> Result<Self, ConfigError> {
        let args = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.clone(),
                    source,
                })?;
                let file = parse_file(&text, path)?;
                args.or(file)
            }
            None => args,
        };
        let d = ServerConfig::default();
        let (dx, dy) = d.grid.origin_cm();
        let grid = GridConfig::with_origin(
            args.order.unwrap_or(d.grid.order()),
            args.cell_size_cm.unwrap_or(d.grid.cell_size_cm()),
            args.origin_x_cm.unwrap_or(dx),
            args.origin_y_cm.unwrap_or(dy),
        )
        .map_err(|e| ConfigError::Invalid {
            key: "grid",
            message: e.to_string(),
        })?;
        let auth_token = args
            .auth_token
            .map(|t| AuthToken::new(t.into_bytes()))
            .transpose()
            .map_err(|e| ConfigError::Invalid {
                key: "auth_token",
                message: e.to_string(),
            })?;
        let max_results = args.max_results.unwrap_or(d.max_results);
        if max_results == 0 || max_results > usize::from(u16::MAX) {
            return Err(ConfigError::Invalid {
                key: "max_results",
                message: "must be between 1 and 65535".into(),
            });
        }
        let workers = args.workers.unwrap_or(d.workers);
        if workers == 0 {
            return Err(ConfigError::Invalid {
                key: "workers",
                message: "must be at least 1".into(),
            });
        }
        Ok(Self {
            bind: args.bind.unwrap_or(d.bind),
            cell_id: args.cell_id.map_or(d.cell_id, CellId),
            grid,
            max_results,
            auth_token,
            trusted: match args.trusted {
                Some(text) => parse_trusted(&text)?,
                None => d.trusted,
            },
            survey: args.survey,
            snapshot: args.snapshot,
            snapshot_interval: args
                .snapshot_interval_secs
                .map_or(d.snapshot_interval, |s| Duration::from_secs(s.max(1))),
            workers,
            max_connections: args.max_connections.unwrap_or(d.max_connections).max(1),
            log_level: args.log_level.unwrap_or(d.log_level),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn from_file(text: &str) -> Result<Args, ConfigError> {
        parse_file(text, Path::new("test.conf"))
    }

    #[test]
    fn file_lines() {
        let args = from_file(
            "# lab\n\nbind = 127.0.0.1:4800\norder=6\norigin_x_cm = -250\ntrusted = 10.0.0.0/8, ::1/128\n",
        )
        .unwrap();
        assert_eq!(args.bind, Some("127.0.0.1:4800".parse().unwrap()));
        assert_eq!(args.order, Some(6));
        assert_eq!(args.origin_x_cm, Some(-250));
        let cfg = ServerConfig::from_args(args).unwrap();
        assert_eq!(cfg.grid.origin_cm(), (-250, 0));
        assert_eq!(cfg.trusted.len(), 2);
    }

    #[test]
    fn file_errors_name_the_line() {
        let err = from_file("order = 4\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().starts_with("test.conf:2:"), "{err}");
        let err = from_file("order = 4\norder = 40\n").unwrap_err();
        assert!(err.to_string().starts_with("test.conf:2:"), "{err}");
        let err = from_file("just words\n").unwrap_err();
        assert!(err.to_string().starts_with("test.conf:1:"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sns.conf");
        fs::write(&path, "order = 5\ncell_size_cm = 20\n").unwrap();
        let args = Args::try_parse_from_env_free([
            "sns-server",
            "--config",
            path.to_str().unwrap(),
            "--order",
            "7",
        ])
        .unwrap();
        let cfg = ServerConfig::from_args(args).unwrap();
        assert_eq!(cfg.grid.order(), 7);
        assert_eq!(cfg.grid.cell_size_cm(), 20);
        assert_eq!(cfg.bind.port(), DEFAULT_PORT);
    }

    #[test]
    fn invalid_values() {
        let short = Args {
            auth_token: Some("short".into()),
            ..Args::default()
        };
        assert!(ServerConfig::from_args(short).is_err());
        let none_trusted = Args {
            trusted: Some(String::new()),
            ..Args::default()
        };
        assert!(ServerConfig::from_args(none_trusted).unwrap().trusted.is_empty());
        let zero = Args {
            max_results: Some(0),
            ..Args::default()
        };
        assert!(ServerConfig::from_args(zero).is_err());
    }
}
