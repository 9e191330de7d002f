use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use refkit::lmclient::{
    LmClient, RecordingClient, RemoteClient, RemoteConfig, ReplayClient, ReplayMode, ScriptedClient, BASE_URL_ENV,
};
use refkit::stategym::{echo_lm, lossy_lm, oracle_lm};

use crate::{fail, UsageError};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    /// Chat-completions endpoint from the config file or REFKIT_LM_BASE_URL.
    Remote,
    /// Recorded cassette (`--cassette`).
    Replay,
    /// Fixed replies from a JSON list of strings (`--script`).
    Scripted,
    /// Answers preference prompts exactly.
    Oracle,
    /// Repeats the initial preferences.
    Echo,
    /// Drops each preference update with probability `--drop`.
    Lossy,
}

#[derive(Args, Clone)]
pub struct LmArgs {
    #[arg(long, value_enum)]
    pub lm: Option<Backend>,
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "digest")]
    pub replay_mode: Mode,
    /// Record every call to this cassette.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long, default_value_t = 0.02)]
    pub drop: f64,
    #[arg(long, default_value_t = 0)]
    pub lm_seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Digest,
    Sequence,
}

fn remote_config(from_file: Option<RemoteConfig>) -> Result<RemoteConfig, UsageError> {
    let mut config = match (from_file, std::env::var(BASE_URL_ENV).ok().filter(|v| !v.trim().is_empty())) {
        (Some(mut c), Some(url)) => {
            c.base_url = url;
            c
        }
        (Some(c), None) => c,
        (None, Some(url)) => RemoteConfig::new(url),
        (None, None) => return fail(format!("remote backend needs {BASE_URL_ENV} or a [remote] base_url in --config")),
    };
    if config.base_url.trim().is_empty() {
        return fail("remote base_url is empty");
    }
    if std::env::var(&config.api_key_env).map_or(true, |v| v.is_empty()) {
        return fail(format!("{} is not set", config.api_key_env));
    }
    config.base_url = config.base_url.trim().to_string();
    Ok(config)
}

fn read_script(path: &Path) -> Result<Vec<String>, UsageError> {
    let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("{}: expected a JSON list of strings: {e}", path.display())))
}

/// Builds the requested model, wrapped in a recorder when `--record` is given.
pub fn build(
    args: &LmArgs,
    remote: Option<RemoteConfig>,
    allowed: &[Backend],
) -> Result<Box<dyn LmClient>, UsageError> {
    let Some(backend) = args.lm else { return fail("no model configured (--lm)") };
    if !allowed.contains(&backend) {
        return fail(format!(
            "--lm {} is not available for this command",
            backend.to_possible_value().unwrap().get_name()
        ));
    }
    let client: Box<dyn LmClient> = match backend {
        Backend::Remote => Box::new(RemoteClient::new(remote_config(remote)?)),
        Backend::Replay => {
            let Some(path) = &args.cassette else { return fail("--lm replay needs --cassette") };
            let mode = match args.replay_mode {
                Mode::Digest => ReplayMode::Digest,
                Mode::Sequence => ReplayMode::Sequence,
            };
            Box::new(ReplayClient::open(path, mode)?)
        }
        Backend::Scripted => {
            let Some(path) = &args.script else { return fail("--lm scripted needs --script") };
            Box::new(ScriptedClient::new(read_script(path)?))
        }
        Backend::Oracle => Box::new(oracle_lm()),
        Backend::Echo => Box::new(echo_lm()),
        Backend::Lossy => {
            if !(0.0..=1.0).contains(&args.drop) {
                return fail("--drop must be within [0, 1]");
            }
            Box::new(lossy_lm(args.drop, args.lm_seed))
        }
    };
    match &args.record {
        Some(path) => Ok(Box::new(RecordingClient::create(client, path)?)),
        None => Ok(client),
    }
}
