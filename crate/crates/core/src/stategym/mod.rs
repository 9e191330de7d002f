//! Synthetic preference-tracking task: how well does a model rebuild a small
//! state after a growing list of updates?

mod runfile;
mod score;

use std::fmt;
use std::sync::OnceLock;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

pub use runfile::{export_runs, import_runs, RunFileError, RUN_FILE_SCHEMA_VERSION};
pub use score::{
    echo_lm, lossy_lm, oracle_lm, score, trend, AccuracyRow, AccuracyTable, RunFailure, ScoreConfig, ScoreError, Trend,
    TrendError,
};

pub const CATEGORIES: [&str; 5] = ["Electronics", "Books", "Clothing", "Garden", "Games"];
pub const PRODUCTS: [[&str; 3]; 5] = [
    ["Laptop", "Smartphone", "Headphones"],
    ["Novel", "Biography", "Science Fiction"],
    ["Jeans", "T-Shirt", "Jacket"],
    ["Shovel", "Lawn Mower", "Gloves"],
    ["Board Game", "Video Game", "Puzzle"],
];
/// Name and version of the random stream behind `generate_runs`.
pub const GENERATOR: &str = "chacha8-uniform-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pref {
    Likes,
    Dislikes,
    NA,
}

impl Pref {
    pub const ALL: [Pref; 3] = [Pref::Likes, Pref::Dislikes, Pref::NA];

    pub fn as_str(self) -> &'static str {
        match self {
            Pref::Likes => "Likes",
            Pref::Dislikes => "Dislikes",
            Pref::NA => "NA",
        }
    }

    pub fn from_name(s: &str) -> Option<Pref> {
        Pref::ALL.into_iter().find(|p| p.as_str().eq_ignore_ascii_case(s))
    }
}

/// Category index → product index → preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PreferenceState(pub [[Pref; 3]; 5]);

impl PreferenceState {
    pub fn get(&self, category: usize, product: usize) -> Pref {
        self.0[category][product]
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), Pref)> + '_ {
        (0..5).flat_map(move |c| (0..3).map(move |p| ((c, p), self.0[c][p])))
    }

    /// Number of the 15 entries equal in both states.
    pub fn agreement(&self, other: &PreferenceState) -> usize {
        self.entries().zip(other.entries()).filter(|(a, b)| a.1 == b.1).count()
    }
}

/// `{ 'Electronics': { 'Laptop': 'Likes', ... }, ... }`
impl fmt::Display for PreferenceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks: Vec<String> = (0..5)
            .map(|c| {
                let items: Vec<String> =
                    (0..3).map(|p| format!("'{}': '{}'", PRODUCTS[c][p], self.0[c][p].as_str())).collect();
                format!("'{}': {{ {} }}", CATEGORIES[c], items.join(", "))
            })
            .collect();
        write!(f, "{{ {} }}", blocks.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrefAction {
    pub category: usize,
    pub product: usize,
    pub new_preference: Pref,
}

impl PrefAction {
    pub fn line(&self, k: usize) -> String {
        format!(
            "Action {k}: {} - {} to '{}'.",
            CATEGORIES[self.category],
            PRODUCTS[self.category][self.product],
            self.new_preference.as_str()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticRun {
    pub seed: u64,
    pub initial_index: usize,
    pub trajectory_index: usize,
    pub initial: PreferenceState,
    pub actions: Vec<PrefAction>,
    /// State after each action.
    pub checkpoints: Vec<PreferenceState>,
}

impl SyntheticRun {
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = export_runs(std::slice::from_ref(self), self.seed);
        format!("sha256:{}", hex::encode(Sha256::digest(text.as_bytes())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateConfig {
    pub n_initial: usize,
    pub per_state: usize,
    pub n_actions: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig { n_initial: 50, per_state: 5, n_actions: 50 }
    }
}

/// Unbiased draw from `0..n` by rejection over 32-bit words.
fn uniform(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let n = n as u64;
    let zone = (1u64 << 32) - (1u64 << 32) % n;
    loop {
        let x = u64::from(rng.next_u32());
        if x < zone {
            return (x % n) as usize;
        }
    }
}

fn random_pref(rng: &mut ChaCha8Rng) -> Pref {
    Pref::ALL[uniform(rng, 3)]
}

/// `n_initial` random starting states, each followed by `per_state` independent action lists.
pub fn generate_runs(seed: u64, config: GenerateConfig) -> Vec<SyntheticRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs = Vec::with_capacity(config.n_initial * config.per_state);
    for i in 0..config.n_initial {
        let mut initial = [[Pref::NA; 3]; 5];
        for row in &mut initial {
            for slot in row.iter_mut() {
                *slot = random_pref(&mut rng);
            }
        }
        let initial = PreferenceState(initial);
        for t in 0..config.per_state {
            let mut state = initial;
            let mut actions = Vec::with_capacity(config.n_actions);
            let mut checkpoints = Vec::with_capacity(config.n_actions);
            for _ in 0..config.n_actions {
                let category = uniform(&mut rng, 5);
                let product = uniform(&mut rng, 3);
                let old = state.0[category][product];
                let mut new = random_pref(&mut rng);
                while new == old {
                    new = random_pref(&mut rng);
                }
                state.0[category][product] = new;
                actions.push(PrefAction { category, product, new_preference: new });
                checkpoints.push(state);
            }
            runs.push(SyntheticRun { seed, initial_index: i, trajectory_index: t, initial, actions, checkpoints });
        }
    }
    runs
}

/// Applies the actions in order.
pub fn replay_oracle(initial: &PreferenceState, actions: &[PrefAction]) -> PreferenceState {
    let mut s = *initial;
    for a in actions {
        s.0[a.category][a.product] = a.new_preference;
    }
    s
}

pub fn render_prompt(initial: &PreferenceState, actions: &[PrefAction]) -> String {
    let mut out = String::from("Here are your initial preferences on 5 different categories.\nPreferences:\n");
    out.push_str(&initial.to_string());
    out.push_str("\nHere are the actions in order after that initial state:\n");
    for (k, a) in actions.iter().enumerate() {
        out.push_str(&a.line(k + 1));
        out.push('\n');
    }
    out.push_str(
        "This is the end of the changes. What is the state of preferences on all categories after the actions? \
         Format your response EXACTLY how I formatted the input initial preferences state. Preferences:",
    );
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{0}")]
    MissingCategory(String),
    #[error("{category}/{product}")]
    MissingProduct { category: String, product: String },
    #[error("no preference for {category}/{product}")]
    MissingPreference { category: String, product: String },
    #[error("malformed prompt: {0}")]
    MalformedPrompt(String),
}

fn key_pattern(name: &str) -> Regex {
    Regex::new(&format!(r#"['"]?\s*\b{}\b\s*['"]?\s*:"#, regex::escape(name))).expect("valid pattern")
}

struct Patterns {
    categories: Vec<Regex>,
    products: Vec<Vec<Regex>>,
    pref: Regex,
    action: Regex,
}

fn patterns() -> &'static Patterns {
    static CELL: OnceLock<Patterns> = OnceLock::new();
    CELL.get_or_init(|| Patterns {
        categories: CATEGORIES.iter().map(|c| key_pattern(c)).collect(),
        products: PRODUCTS.iter().map(|ps| ps.iter().map(|p| key_pattern(p)).collect()).collect(),
        pref: Regex::new(r#"^\s*['"]?\s*(?i:(likes|dislikes|na))\b"#).expect("valid pattern"),
        action: Regex::new(r"^Action (\d+): (.+) - (.+) to '(\w+)'\.$").expect("valid pattern"),
    })
}

/// Lenient reading of a state in any quote style or spacing; category blocks are
/// located by name, then each product inside its block.
pub fn parse_reply(text: &str) -> Result<PreferenceState, ParseError> {
    let pats = patterns();
    let mut starts = Vec::with_capacity(5);
    for (name, re) in CATEGORIES.iter().zip(&pats.categories) {
        let m = re.find(text).ok_or_else(|| ParseError::MissingCategory(name.to_string()))?;
        starts.push((m.start(), m.end()));
    }
    let pref = &pats.pref;
    let mut state = [[Pref::NA; 3]; 5];
    for c in 0..5 {
        let (_, body_start) = starts[c];
        let body_end = starts.iter().map(|s| s.0).filter(|s| *s > body_start).min().unwrap_or(text.len());
        let block = &text[body_start..body_end];
        for p in 0..3 {
            let missing = || (CATEGORIES[c].to_string(), PRODUCTS[c][p].to_string());
            let m = pats.products[c][p].find(block).ok_or_else(|| {
                let (category, product) = missing();
                ParseError::MissingProduct { category, product }
            })?;
            let value = pref.captures(&block[m.end()..]).and_then(|cap| Pref::from_name(&cap[1])).ok_or_else(|| {
                let (category, product) = missing();
                ParseError::MissingPreference { category, product }
            })?;
            state[c][p] = value;
        }
    }
    Ok(PreferenceState(state))
}

/// Inverse of `render_prompt`.
pub fn parse_prompt(prompt: &str) -> Result<(PreferenceState, Vec<PrefAction>), ParseError> {
    let bad = |m: &str| ParseError::MalformedPrompt(m.to_string());
    let (head, rest) = prompt
        .split_once("\nHere are the actions in order after that initial state:\n")
        .ok_or_else(|| bad("no action header"))?;
    let initial = parse_reply(head)?;
    let line = &patterns().action;
    let mut actions = Vec::new();
    for l in rest.lines().take_while(|l| l.starts_with("Action ")) {
        let cap = line.captures(l).ok_or_else(|| bad(l))?;
        if cap[1].parse::<usize>().ok() != Some(actions.len() + 1) {
            return Err(bad(l));
        }
        let category = CATEGORIES.iter().position(|c| *c == &cap[2]).ok_or_else(|| bad(l))?;
        let product = PRODUCTS[category].iter().position(|p| *p == &cap[3]).ok_or_else(|| bad(l))?;
        let new_preference = Pref::from_name(&cap[4]).ok_or_else(|| bad(l))?;
        actions.push(PrefAction { category, product, new_preference });
    }
    Ok((initial, actions))
}
