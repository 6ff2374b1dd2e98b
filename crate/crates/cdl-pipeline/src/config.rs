//! Pipeline configuration: key=value lines under `[section]` headers. All
//! paths are resolved relative to the config file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::gateway::ProviderConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing required key [{section}] {key}")]
    MissingKey { section: String, key: String },
    #[error("bad value for [{section}] {key}: {value}")]
    BadValue {
        section: String,
        key: String,
        value: String,
    },
    #[error("mode {mode} requires a cassette path")]
    CassetteRequired { mode: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Live,
    Replay,
    Record,
}

impl RunMode {
    pub fn parse(s: &str) -> Option<RunMode> {
        match s {
            "live" => Some(RunMode::Live),
            "replay" => Some(RunMode::Replay),
            "record" => Some(RunMode::Record),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RunMode::Live => "live",
            RunMode::Replay => "replay",
            RunMode::Record => "record",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub library_root: PathBuf,
    pub library_version: String,
    pub rename_map: Option<PathBuf>,
    pub index_file: Option<PathBuf>,
    pub provider: ProviderConfig,
    pub max_compile_iters: usize,
    pub max_sim_iters: usize,
    pub ai_eval: bool,
    pub behavioral_repair: bool,
    pub step_size: f64,
    pub horizon: f64,
    pub out_dir: PathBuf,
    pub mode: RunMode,
    pub cassette: Option<PathBuf>,
}

/// Raw parse: section → key → value. Later duplicate keys win.
pub fn parse_sections(
    text: &str,
) -> Result<BTreeMap<String, BTreeMap<String, String>>, ConfigError> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(head) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = head.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Malformed {
            line: lineno + 1,
            message: "expected key=value".to_string(),
        })?;
        sections
            .entry(current.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

struct Lookup<'a> {
    sections: &'a BTreeMap<String, BTreeMap<String, String>>,
    base: &'a Path,
}

impl<'a> Lookup<'a> {
    fn get(&self, section: &str, key: &str) -> Option<&'a str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(String::as_str)
            .filter(|v| !v.is_empty())
    }

    fn require(&self, section: &str, key: &str) -> Result<&'a str, ConfigError> {
        self.get(section, key).ok_or_else(|| ConfigError::MissingKey {
            section: section.to_string(),
            key: key.to_string(),
        })
    }

    fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.get(section, key).map(|p| self.base.join(p))
    }

    fn parse<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                section: section.to_string(),
                key: key.to_string(),
                value: v.to_string(),
            }),
        }
    }
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let sections = parse_sections(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let look = Lookup {
        sections: &sections,
        base,
    };
    let mode = {
        let raw = look.get("run", "mode").unwrap_or("replay");
        RunMode::parse(raw).ok_or_else(|| ConfigError::BadValue {
            section: "run".to_string(),
            key: "mode".to_string(),
            value: raw.to_string(),
        })?
    };
    let cassette = look.path("run", "cassette");
    if cassette.is_none() && matches!(mode, RunMode::Replay | RunMode::Record) {
        return Err(ConfigError::CassetteRequired {
            mode: mode.as_str().to_string(),
        });
    }
    let provider = ProviderConfig {
        provider: look.get("provider", "name").unwrap_or("generic").to_string(),
        base_url: look.get("provider", "base_url").unwrap_or("").to_string(),
        model_id: look.require("provider", "model_id")?.to_string(),
        auth_env_var: look
            .get("provider", "auth_env_var")
            .unwrap_or("CDL_API_KEY")
            .to_string(),
        timeout_s: look.parse("provider", "timeout_s", 60u64)?,
        max_tokens: look.parse("provider", "max_tokens", 4096u32)?,
    };
    Ok(PipelineConfig {
        library_root: look
            .path("library", "root")
            .ok_or_else(|| ConfigError::MissingKey {
                section: "library".to_string(),
                key: "root".to_string(),
            })?,
        library_version: look
            .get("library", "version")
            .unwrap_or("current")
            .to_string(),
        rename_map: look.path("library", "rename_map"),
        index_file: look.path("library", "index"),
        provider,
        max_compile_iters: look.parse("loops", "max_compile_iters", 3usize)?,
        max_sim_iters: look.parse("loops", "max_sim_iters", 2usize)?,
        ai_eval: look.parse("loops", "ai_eval", false)?,
        behavioral_repair: look.parse("loops", "behavioral_repair", false)?,
        step_size: look.parse("simulation", "step_size", 10.0f64)?,
        horizon: look.parse("simulation", "horizon", 3600.0f64)?,
        out_dir: look
            .path("run", "out_dir")
            .unwrap_or_else(|| base.join("sessions")),
        mode,
        cassette,
    })
}
