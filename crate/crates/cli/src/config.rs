//! Run configuration: flags over config file over environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use radjudge::backend::{
    CacheMode, CachedBackend, ChatBackend, HttpBackend, HttpConfig, RetryPolicy, RetryingBackend,
    API_KEY_ENV, BASE_URL_ENV, DEFAULT_BASE_URL, DEFAULT_TIMEOUT_SECS,
};
use radjudge::judge::{JudgeParams, PromptSet};
use radjudge::metrics::ScoreMode;
use radjudge::types::JudgeStrategy;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Answer only from the response cache; a miss is an error.
    Replay,
    /// Answer from the cache, calling the provider and recording on a miss.
    Record,
    /// Always call the provider.
    Live,
}

/// Keys accepted in the TOML config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<BackendKind>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub screen_model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub cache_dir: Option<PathBuf>,
    pub max_attempts: Option<u32>,
    pub base_delay_ms: Option<u64>,
    pub timeout_secs: Option<u64>,
    pub strategy: Option<String>,
    pub prompt_version: Option<String>,
    pub templates_dir: Option<PathBuf>,
    pub screen_template: Option<PathBuf>,
    pub parse_retries: Option<u32>,
    pub concurrency: Option<usize>,
    pub score_mode: Option<String>,
    pub seed: Option<u64>,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file. Relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output artifacts.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long, global = true)]
    pub screen_model: Option<String>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub max_tokens: Option<u32>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub max_attempts: Option<u32>,
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    #[arg(long, global = true)]
    pub prompt_version: Option<String>,
    #[arg(long, global = true)]
    pub templates_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub parse_retries: Option<u32>,
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    #[arg(long, global = true)]
    pub score_mode: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Exit 1 when any pair fails.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Include repair traces in judgment output.
    #[arg(long, global = true)]
    pub verbose: bool,
}

/// Fully resolved configuration, echoed into every artifact. The API key
/// itself is never written out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub config_file: Option<String>,
    pub backend: BackendKind,
    pub base_url: String,
    pub api_key_set: bool,
    pub model: String,
    pub screen_model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub cache_dir: Option<String>,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub timeout_secs: u64,
    pub strategy: JudgeStrategy,
    pub prompt_version: String,
    pub templates_dir: Option<String>,
    pub screen_template: Option<String>,
    pub parse_retries: u32,
    pub concurrency: usize,
    pub score_mode: ScoreMode,
    pub seed: u64,
    pub strict: bool,
    pub inputs: BTreeMap<String, String>,
    pub out_dir: String,
    #[serde(skip)]
    pub api_key: Option<String>,
}

/// Environment seen by the resolver; injectable for tests.
#[derive(Debug, Clone, Default)]
pub struct Env {
    pub api_key: Option<String>,
    pub base_url: Option<String>,
}

impl Env {
    pub fn from_process() -> Self {
        let get = |k| std::env::var(k).ok().filter(|v: &String| !v.is_empty());
        Self {
            api_key: get(API_KEY_ENV),
            base_url: get(BASE_URL_ENV),
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

pub fn load_file(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn resolve(command: &str, args: &CommonArgs, env: &Env) -> CliResult<Self> {
        let file = match &args.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let base = args
            .config
            .as_ref()
            .and_then(|p| p.parent())
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let rel = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };

        let strategy_s = args.strategy.clone().or(file.strategy).unwrap_or_else(|| "two_stage".into());
        let strategy: JudgeStrategy = strategy_s.parse().map_err(|e: String| CliError::config(e))?;
        let score_s = args.score_mode.clone().or(file.score_mode).unwrap_or_else(|| "total".into());
        let score_mode: ScoreMode = score_s.parse().map_err(|e: String| CliError::config(e))?;
        let defaults = JudgeParams::default();

        let cfg = RunConfig {
            command: command.to_owned(),
            config_file: args.config.as_deref().map(display),
            backend: args.backend.or(file.backend).unwrap_or(BackendKind::Replay),
            base_url: args
                .base_url
                .clone()
                .or(file.base_url)
                .or_else(|| env.base_url.clone())
                .unwrap_or_else(|| DEFAULT_BASE_URL.to_owned()),
            api_key_set: env.api_key.is_some(),
            model: args.model.clone().or(file.model).unwrap_or(defaults.model),
            screen_model: args
                .screen_model
                .clone()
                .or(file.screen_model)
                .unwrap_or_else(|| "gpt-3.5-turbo".into()),
            temperature: args.temperature.or(file.temperature).unwrap_or(defaults.temperature),
            max_tokens: args.max_tokens.or(file.max_tokens).unwrap_or(defaults.max_tokens),
            cache_dir: args.cache_dir.clone().or(file.cache_dir.as_ref().map(rel)).as_deref().map(display),
            max_attempts: args.max_attempts.or(file.max_attempts).unwrap_or(RetryPolicy::default().max_attempts),
            base_delay_ms: file.base_delay_ms.unwrap_or(RetryPolicy::default().base_delay_ms),
            timeout_secs: file.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS),
            strategy,
            prompt_version: args.prompt_version.clone().or(file.prompt_version).unwrap_or_else(|| "v1".into()),
            templates_dir: args
                .templates_dir
                .clone()
                .or(file.templates_dir.as_ref().map(rel))
                .as_deref()
                .map(display),
            screen_template: file.screen_template.as_ref().map(rel).as_deref().map(display),
            parse_retries: args.parse_retries.or(file.parse_retries).unwrap_or(defaults.parse_retries),
            concurrency: args.concurrency.or(file.concurrency).unwrap_or(defaults.concurrency),
            score_mode,
            seed: args.seed.or(file.seed).unwrap_or(0),
            strict: args.strict,
            inputs: BTreeMap::new(),
            out_dir: args.out_dir.as_deref().map(display).unwrap_or_else(|| ".".into()),
            api_key: env.api_key.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(CliError::config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(CliError::config("max_tokens must be positive"));
        }
        if self.concurrency == 0 {
            return Err(CliError::config("concurrency must be positive"));
        }
        if self.max_attempts == 0 {
            return Err(CliError::config("max_attempts must be positive"));
        }
        Ok(())
    }

    pub fn with_input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.to_owned(), display(path));
        self
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out_dir)
    }

    pub fn judge_params(&self) -> JudgeParams {
        JudgeParams {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            parse_retries: self.parse_retries,
            concurrency: self.concurrency,
        }
    }

    pub fn prompts(&self) -> CliResult<PromptSet> {
        let set = match &self.templates_dir {
            Some(dir) => PromptSet::load_dir(Path::new(dir)),
            None => PromptSet::builtin(&self.prompt_version),
        }
        .map_err(|e| CliError::config(e.to_string()))?;
        if set.version != self.prompt_version && self.templates_dir.is_none() {
            return Err(CliError::config(format!("prompt version mismatch: {}", set.version)));
        }
        Ok(set)
    }

    fn http(&self) -> CliResult<RetryingBackend<HttpBackend>> {
        if self.api_key.is_none() {
            return Err(CliError::config(format!(
                "backend `{}` needs an API key in {API_KEY_ENV}",
                serde_json::to_value(self.backend).unwrap().as_str().unwrap_or_default()
            )));
        }
        let http = HttpBackend::new(HttpConfig {
            base_url: self.base_url.clone(),
            api_key: self.api_key.clone(),
            timeout: std::time::Duration::from_secs(self.timeout_secs),
        });
        Ok(RetryingBackend::new(
            http,
            RetryPolicy {
                max_attempts: self.max_attempts,
                base_delay_ms: self.base_delay_ms,
            },
        ))
    }

    /// Builds the configured backend. Fails before any request is made when
    /// a live backend has no API key or replay has no cache directory.
    pub fn backend(&self) -> CliResult<Box<dyn ChatBackend>> {
        match self.backend {
            BackendKind::Replay => {
                let dir = self
                    .cache_dir
                    .as_ref()
                    .ok_or_else(|| CliError::config("replay backend needs cache_dir"))?;
                if !Path::new(dir).is_dir() {
                    return Err(CliError::config(format!("cache directory {dir} does not exist")));
                }
                Ok(Box::new(CachedBackend::replay(dir)))
            }
            BackendKind::Record => {
                let dir = self
                    .cache_dir
                    .as_ref()
                    .ok_or_else(|| CliError::config("record backend needs cache_dir"))?;
                Ok(Box::new(CachedBackend::new(dir, CacheMode::ReplayOrRecord, Some(Box::new(self.http()?)))))
            }
            BackendKind::Live => match &self.cache_dir {
                Some(dir) => Ok(Box::new(CachedBackend::new(dir, CacheMode::Record, Some(Box::new(self.http()?))))),
                None => Ok(Box::new(self.http()?)),
            },
        }
    }
}
