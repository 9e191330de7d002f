//! Run files: the generated runs as a JSON document other implementations can share.

use serde_json::Value;

use super::{replay_oracle, Pref, PrefAction, PreferenceState, SyntheticRun, CATEGORIES, GENERATOR, PRODUCTS};

pub const RUN_FILE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunFileError {
    #[error("malformed run file at {location}: {reason}")]
    Malformed { location: String, reason: String },
    #[error("unsupported run file schema_version {0}")]
    SchemaVersion(u64),
    #[error("run {run}: stored state after action {action} disagrees with replay")]
    CheckpointMismatch { run: usize, action: usize },
}

fn malformed(location: impl Into<String>, reason: impl Into<String>) -> RunFileError {
    RunFileError::Malformed { location: location.into(), reason: reason.into() }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn state_json(s: &PreferenceState) -> String {
    let cats: Vec<String> = (0..5)
        .map(|c| {
            let items: Vec<String> =
                (0..3).map(|p| format!("{}: {}", quote(PRODUCTS[c][p]), quote(s.0[c][p].as_str()))).collect();
            format!("{}: {{{}}}", quote(CATEGORIES[c]), items.join(", "))
        })
        .collect();
    format!("{{{}}}", cats.join(", "))
}

/// One run per line, keys in a fixed order.
pub fn export_runs(runs: &[SyntheticRun], seed: u64) -> String {
    let mut out = format!(
        "{{\n\"schema_version\": {RUN_FILE_SCHEMA_VERSION},\n\"generator\": {},\n\"seed\": {seed},\n\"runs\": [",
        quote(GENERATOR)
    );
    for (i, r) in runs.iter().enumerate() {
        let actions: Vec<String> = r
            .actions
            .iter()
            .map(|a| {
                format!(
                    "{{\"action\": \"SetPreference\", \"category\": {}, \"product\": {}, \"new_preference\": {}}}",
                    quote(CATEGORIES[a.category]),
                    quote(PRODUCTS[a.category][a.product]),
                    quote(a.new_preference.as_str())
                )
            })
            .collect();
        let states: Vec<String> =
            r.checkpoints.iter().enumerate().map(|(k, s)| format!("\"Action{}\": {}", k + 1, state_json(s))).collect();
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(&format!(
            "{{\"initial_index\": {}, \"trajectory_index\": {}, \"initial_preferences\": {}, \"actions\": [{}], \"states\": {{{}}}}}",
            r.initial_index,
            r.trajectory_index,
            state_json(&r.initial),
            actions.join(", "),
            states.join(", ")
        ));
    }
    out.push_str(if runs.is_empty() { "]\n}\n" } else { "\n]\n}\n" });
    out
}

fn read_state(v: &Value, at: &str) -> Result<PreferenceState, RunFileError> {
    let obj = v.as_object().ok_or_else(|| malformed(at, "expected an object"))?;
    if obj.len() != 5 {
        return Err(malformed(at, format!("expected 5 categories, found {}", obj.len())));
    }
    let mut s = [[Pref::NA; 3]; 5];
    for (c, cat) in CATEGORIES.iter().enumerate() {
        let inner = obj.get(*cat).and_then(Value::as_object).ok_or_else(|| malformed(at, format!("missing {cat}")))?;
        if inner.len() != 3 {
            return Err(malformed(format!("{at}.{cat}"), format!("expected 3 products, found {}", inner.len())));
        }
        for (p, prod) in PRODUCTS[c].iter().enumerate() {
            let name = inner
                .get(*prod)
                .and_then(Value::as_str)
                .ok_or_else(|| malformed(format!("{at}.{cat}"), format!("missing {prod}")))?;
            s[c][p] = parse_pref(name, &format!("{at}.{cat}.{prod}"))?;
        }
    }
    Ok(PreferenceState(s))
}

fn parse_pref(name: &str, at: &str) -> Result<Pref, RunFileError> {
    Pref::ALL
        .into_iter()
        .find(|p| p.as_str() == name)
        .ok_or_else(|| malformed(at, format!("unknown preference {name:?}")))
}

fn read_action(v: &Value, at: &str) -> Result<PrefAction, RunFileError> {
    let field = |k: &str| v.get(k).and_then(Value::as_str).ok_or_else(|| malformed(at, format!("missing {k}")));
    if let Some(kind) = v.get("action") {
        if kind != "SetPreference" {
            return Err(malformed(at, format!("unknown action {kind}")));
        }
    }
    let cat = field("category")?;
    let category =
        CATEGORIES.iter().position(|c| *c == cat).ok_or_else(|| malformed(at, format!("unknown category {cat:?}")))?;
    let prod = field("product")?;
    let product = PRODUCTS[category]
        .iter()
        .position(|p| *p == prod)
        .ok_or_else(|| malformed(at, format!("unknown product {prod:?}")))?;
    Ok(PrefAction { category, product, new_preference: parse_pref(field("new_preference")?, at)? })
}

fn read_trajectory(
    v: &Value,
    at: &str,
    initial: PreferenceState,
    seed: u64,
    initial_index: usize,
    trajectory_index: usize,
    run_no: usize,
) -> Result<SyntheticRun, RunFileError> {
    let list = v.get("actions").and_then(Value::as_array).ok_or_else(|| malformed(at, "missing actions"))?;
    let actions = list
        .iter()
        .enumerate()
        .map(|(k, a)| read_action(a, &format!("{at}.actions[{k}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut checkpoints = Vec::with_capacity(actions.len());
    let mut state = initial;
    for a in &actions {
        state = replay_oracle(&state, std::slice::from_ref(a));
        checkpoints.push(state);
    }
    if let Some(states) = v.get("states") {
        let map = states.as_object().ok_or_else(|| malformed(format!("{at}.states"), "expected an object"))?;
        if map.len() != actions.len() {
            return Err(malformed(
                format!("{at}.states"),
                format!("{} states for {} actions", map.len(), actions.len()),
            ));
        }
        for (k, expected) in checkpoints.iter().enumerate() {
            let key = format!("Action{}", k + 1);
            let stored = map.get(&key).ok_or_else(|| malformed(format!("{at}.states"), format!("missing {key}")))?;
            if read_state(stored, &format!("{at}.states.{key}"))? != *expected {
                return Err(RunFileError::CheckpointMismatch { run: run_no, action: k + 1 });
            }
        }
    }
    Ok(SyntheticRun { seed, initial_index, trajectory_index, initial, actions, checkpoints })
}

/// Reads an exported document, or a bare list of `{initial_preferences, trajectories: [...]}` groups.
/// Stored states are checked against replay.
pub fn import_runs(text: &str) -> Result<Vec<SyntheticRun>, RunFileError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| malformed("$", e.to_string()))?;
    let mut runs = Vec::new();
    match &doc {
        Value::Array(groups) => {
            for (i, g) in groups.iter().enumerate() {
                let at = format!("[{i}]");
                let initial = read_state(
                    g.get("initial_preferences").unwrap_or(&Value::Null),
                    &format!("{at}.initial_preferences"),
                )?;
                let trajs = g
                    .get("trajectories")
                    .and_then(Value::as_array)
                    .ok_or_else(|| malformed(&at, "missing trajectories"))?;
                for (t, tr) in trajs.iter().enumerate() {
                    let n = runs.len();
                    runs.push(read_trajectory(tr, &format!("{at}.trajectories[{t}]"), initial, 0, i, t, n)?);
                }
            }
        }
        Value::Object(obj) => {
            let version = obj
                .get("schema_version")
                .and_then(Value::as_u64)
                .ok_or_else(|| malformed("$", "missing schema_version"))?;
            if version != u64::from(RUN_FILE_SCHEMA_VERSION) {
                return Err(RunFileError::SchemaVersion(version));
            }
            let seed = obj.get("seed").and_then(Value::as_u64).ok_or_else(|| malformed("$", "missing seed"))?;
            let list = obj.get("runs").and_then(Value::as_array).ok_or_else(|| malformed("$", "missing runs"))?;
            for (i, r) in list.iter().enumerate() {
                let at = format!("runs[{i}]");
                let index = |k: &str| {
                    r.get(k)
                        .and_then(Value::as_u64)
                        .map(|v| v as usize)
                        .ok_or_else(|| malformed(&at, format!("missing {k}")))
                };
                let initial = read_state(
                    r.get("initial_preferences").unwrap_or(&Value::Null),
                    &format!("{at}.initial_preferences"),
                )?;
                runs.push(read_trajectory(
                    r,
                    &at,
                    initial,
                    seed,
                    index("initial_index")?,
                    index("trajectory_index")?,
                    i,
                )?);
            }
        }
        _ => return Err(malformed("$", "expected an object or a list")),
    }
    Ok(runs)
}
