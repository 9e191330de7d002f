use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parse_prompt, parse_reply, render_prompt, replay_oracle, SyntheticRun};
use crate::lmclient::{ChatRequest, FnClient, LmClient, LmError, Message, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub model: String,
    /// Prefix lengths to probe.
    pub grid: Vec<usize>,
    pub jobs: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { model: "offline".into(), grid: vec![0, 10, 20, 30, 40, 50], jobs: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub n: usize,
    pub runs: usize,
    pub exact_match_rate: f64,
    pub per_entry_rate: f64,
    pub unparseable: usize,
    pub lm_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub n: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
    pub failures: Vec<RunFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoreError {
    #[error("grid point {n} exceeds run {run}'s {actions} actions")]
    GridBeyondActions { n: usize, run: usize, actions: usize },
    #[error("no runs to score")]
    NoRuns,
}

enum Cell {
    Scored { exact: bool, agree: usize },
    Unparseable,
    Failed(LmError),
}

/// Prompts every run at every prefix length and compares the parsed reply with the replayed state.
/// Failed calls and unparseable replies score zero.
pub fn score(runs: &[SyntheticRun], lm: &dyn LmClient, config: &ScoreConfig) -> Result<AccuracyTable, ScoreError> {
    if runs.is_empty() {
        return Err(ScoreError::NoRuns);
    }
    for &n in &config.grid {
        if let Some((i, r)) = runs.iter().enumerate().find(|(_, r)| r.actions.len() < n) {
            return Err(ScoreError::GridBeyondActions { n, run: i, actions: r.actions.len() });
        }
    }
    let jobs: Vec<(usize, usize)> = config.grid.iter().flat_map(|&n| (0..runs.len()).map(move |r| (n, r))).collect();
    let cell = |&(n, r): &(usize, usize)| {
        let run = &runs[r];
        let prompt = render_prompt(&run.initial, &run.actions[..n]);
        let request = ChatRequest::new(config.model.clone(), vec![Message::new(Role::User, prompt)]);
        match lm.complete(&request) {
            Err(e) => Cell::Failed(e),
            Ok(reply) => match parse_reply(&reply.text) {
                Err(_) => Cell::Unparseable,
                Ok(state) => {
                    let truth = replay_oracle(&run.initial, &run.actions[..n]);
                    Cell::Scored { exact: state == truth, agree: state.agreement(&truth) }
                }
            },
        }
    };
    let cells: Vec<Cell> = match rayon::ThreadPoolBuilder::new().num_threads(config.jobs.max(1)).build() {
        Ok(pool) if config.jobs > 1 => pool.install(|| jobs.par_iter().map(cell).collect()),
        _ => jobs.iter().map(cell).collect(),
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (g, &n) in config.grid.iter().enumerate() {
        let (mut exact, mut agree, mut unparseable, mut lm_failures) = (0usize, 0usize, 0usize, 0usize);
        for r in 0..runs.len() {
            match &cells[g * runs.len() + r] {
                Cell::Scored { exact: e, agree: a } => {
                    exact += usize::from(*e);
                    agree += a;
                }
                Cell::Unparseable => unparseable += 1,
                Cell::Failed(err) => {
                    lm_failures += 1;
                    failures.push(RunFailure { run: r, n, error: err.to_string() });
                }
            }
        }
        let total = runs.len() as f64;
        rows.push(AccuracyRow {
            n,
            runs: runs.len(),
            exact_match_rate: exact as f64 / total,
            per_entry_rate: agree as f64 / (15.0 * total),
            unparseable,
            lm_failures,
        });
    }
    Ok(AccuracyTable { rows, failures })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    /// Least-squares slope of exact-match rate against n.
    pub slope: f64,
    /// Spearman correlation between n and exact-match rate (0 when either side is constant).
    pub rank_correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrendError {
    #[error("need at least 3 distinct grid points, got {0}")]
    InsufficientPoints(usize),
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

pub fn trend(table: &AccuracyTable) -> Result<Trend, TrendError> {
    let x: Vec<f64> = table.rows.iter().map(|r| r.n as f64).collect();
    let y: Vec<f64> = table.rows.iter().map(|r| r.exact_match_rate).collect();
    let mut distinct = table.rows.iter().map(|r| r.n).collect::<Vec<_>>();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(TrendError::InsufficientPoints(distinct.len()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(Trend { slope: sxy / sxx, rank_correlation: pearson(&average_ranks(&x), &average_ranks(&y)) })
}

// ---- simulated models ----

fn prompt_of(request: &ChatRequest) -> Result<(super::PreferenceState, Vec<super::PrefAction>), LmError> {
    parse_prompt(request.last_user_text()).map_err(|e| LmError::Protocol(e.to_string()))
}

/// Answers with the exact replayed state.
pub fn oracle_lm() -> FnClient {
    FnClient::new("oracle", |r| {
        let (initial, actions) = prompt_of(r)?;
        Ok(replay_oracle(&initial, &actions).to_string())
    })
}

/// Repeats the initial state, ignoring every action.
pub fn echo_lm() -> FnClient {
    FnClient::new("echo", |r| Ok(prompt_of(r)?.0.to_string()))
}

/// Skips each action independently with probability `p`. The draws depend only on
/// `seed` and the prompt text, so scoring order does not matter.
pub fn lossy_lm(p: f64, seed: u64) -> FnClient {
    FnClient::new("lossy", move |r| {
        let (initial, actions) = prompt_of(r)?;
        let h = Sha256::digest(r.last_user_text().as_bytes());
        let mut key = [0u8; 8];
        key.copy_from_slice(&h[..8]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(key));
        let kept: Vec<_> =
            actions.into_iter().filter(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 >= p).collect();
        Ok(replay_oracle(&initial, &kept).to_string())
    })
}
