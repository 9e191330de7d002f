use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, Stdio};
use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refkit::lmclient::{FnClient, LmError};
use refkit::stategym::{
    echo_lm, export_runs, generate_runs, import_runs, lossy_lm, oracle_lm, parse_prompt, parse_reply, render_prompt,
    replay_oracle, score, trend, AccuracyRow, AccuracyTable, GenerateConfig, ParseError, Pref, PrefAction,
    PreferenceState, RunFileError, ScoreConfig, ScoreError, SyntheticRun, TrendError, CATEGORIES, PRODUCTS,
};

const FIGURE_INITIAL: &str =
    "{ 'Electronics': { 'Laptop': 'Likes', 'Smartphone': 'Likes', 'Headphones': 'Dislikes' }, \
'Books': { 'Novel': 'Dislikes', 'Biography': 'NA', 'Science Fiction': 'Dislikes' }, \
'Clothing': { 'Jeans': 'Likes', 'T-Shirt': 'Likes', 'Jacket': 'Likes' }, \
'Garden': { 'Shovel': 'Likes', 'Lawn Mower': 'NA', 'Gloves': 'NA' }, \
'Games': { 'Board Game': 'Likes', 'Video Game': 'Likes', 'Puzzle': 'Likes' } }";

const FIGURE_ANSWER: &str = "{ 'Electronics': { 'Laptop': 'NA', 'Smartphone': 'Likes', 'Headphones': 'Dislikes' }, \
'Books': { 'Novel': 'Dislikes', 'Biography': 'NA', 'Science Fiction': 'Dislikes' }, \
'Clothing': { 'Jeans': 'Likes', 'T-Shirt': 'NA', 'Jacket': 'Likes' }, \
'Garden': { 'Shovel': 'Likes', 'Lawn Mower': 'Dislikes', 'Gloves': 'NA' }, \
'Games': { 'Board Game': 'Likes', 'Video Game': 'Dislikes', 'Puzzle': 'Likes' } }";

fn act(category: &str, product: &str, pref: Pref) -> PrefAction {
    let c = CATEGORIES.iter().position(|x| *x == category).unwrap();
    let p = PRODUCTS[c].iter().position(|x| *x == product).unwrap();
    PrefAction { category: c, product: p, new_preference: pref }
}

/// Name-keyed replay, independent of the indexed representation.
fn naive_replay(initial: &PreferenceState, actions: &[PrefAction]) -> BTreeMap<String, BTreeMap<String, String>> {
    let mut m: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for (c, cat) in CATEGORIES.iter().enumerate() {
        for (p, prod) in PRODUCTS[c].iter().enumerate() {
            m.entry(cat.to_string()).or_default().insert(prod.to_string(), format!("{:?}", initial.get(c, p)));
        }
    }
    for a in actions {
        let line = a.line(1);
        // "Action 1: {cat} - {prod} to '{pref}'."
        let body = line.strip_prefix("Action 1: ").unwrap();
        let (cat, rest) = body.split_once(" - ").unwrap();
        let (prod, pref) = rest.rsplit_once(" to '").unwrap();
        m.get_mut(cat).unwrap().insert(prod.to_string(), pref.trim_end_matches("'.").to_string());
    }
    m
}

fn as_names(s: &PreferenceState) -> BTreeMap<String, BTreeMap<String, String>> {
    naive_replay(s, &[])
}

// ---- generation ----

#[test]
fn defaults_give_250_runs_of_50_actions_without_noops() {
    let runs = generate_runs(7, GenerateConfig::default());
    assert_eq!(runs.len(), 250);
    for run in &runs {
        assert_eq!(run.actions.len(), 50);
        assert_eq!(run.checkpoints.len(), 50);
        let mut state = run.initial;
        for a in &run.actions {
            assert_ne!(state.get(a.category, a.product), a.new_preference);
            state.0[a.category][a.product] = a.new_preference;
        }
    }
    // five trajectories share each initial state
    for group in runs.chunks(5) {
        assert!(group.iter().all(|r| r.initial == group[0].initial && r.initial_index == group[0].initial_index));
        assert_eq!(group.iter().map(|r| r.trajectory_index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }
}

#[test]
fn checkpoints_agree_with_naive_replay_on_1000_runs() {
    let runs = generate_runs(2024, GenerateConfig { n_initial: 200, per_state: 5, n_actions: 50 });
    assert_eq!(runs.len(), 1000);
    for run in &runs {
        for k in 0..=run.actions.len() {
            let fast = replay_oracle(&run.initial, &run.actions[..k]);
            assert_eq!(as_names(&fast), naive_replay(&run.initial, &run.actions[..k]));
            if k > 0 {
                assert_eq!(run.checkpoints[k - 1], fast);
            }
        }
    }
}

#[test]
fn same_seed_same_runs() {
    let a = generate_runs(11, GenerateConfig { n_initial: 4, per_state: 3, n_actions: 20 });
    let b = generate_runs(11, GenerateConfig { n_initial: 4, per_state: 3, n_actions: 20 });
    let c = generate_runs(12, GenerateConfig { n_initial: 4, per_state: 3, n_actions: 20 });
    assert_eq!(a, b);
    assert_eq!(
        a.iter().map(SyntheticRun::digest).collect::<Vec<_>>(),
        b.iter().map(SyntheticRun::digest).collect::<Vec<_>>()
    );
    assert_ne!(a[0].digest(), c[0].digest());
}

#[test]
fn generated_values_cover_the_alphabet_evenly() {
    let runs = generate_runs(5, GenerateConfig::default());
    let mut counts = BTreeMap::new();
    for r in &runs {
        for (_, v) in r.initial.entries() {
            *counts.entry(v).or_insert(0usize) += 1;
        }
    }
    // 50 distinct initial states × 15 entries, each value expected 250 times
    for p in Pref::ALL {
        let n = counts[&p] as f64 / 5.0;
        assert!((n - 250.0).abs() < 60.0, "{p:?}: {n}");
    }
}

// ---- replay and the worked example ----

#[test]
fn empty_prefix_is_identity() {
    let run = &generate_runs(3, GenerateConfig { n_initial: 1, per_state: 1, n_actions: 5 })[0];
    assert_eq!(replay_oracle(&run.initial, &[]), run.initial);
}

#[test]
fn worked_example_reaches_the_desired_answer() {
    let initial = parse_reply(FIGURE_INITIAL).unwrap();
    assert_eq!(initial.to_string(), FIGURE_INITIAL);
    // the elided middle actions are the two other changes visible in the answer
    let actions = [
        act("Electronics", "Laptop", Pref::NA),
        act("Garden", "Lawn Mower", Pref::Dislikes),
        act("Games", "Video Game", Pref::Dislikes),
        act("Clothing", "T-Shirt", Pref::NA),
    ];
    let end = replay_oracle(&initial, &actions);
    assert_eq!(end, parse_reply(FIGURE_ANSWER).unwrap());
    assert_eq!(end.to_string(), FIGURE_ANSWER);
    assert_eq!(initial.agreement(&end), 11);

    let prompt = render_prompt(&initial, &actions);
    let lines: Vec<&str> = prompt.lines().collect();
    assert_eq!(lines[0], "Here are your initial preferences on 5 different categories.");
    assert_eq!(lines[1], "Preferences:");
    assert_eq!(lines[2], FIGURE_INITIAL);
    assert_eq!(lines[3], "Here are the actions in order after that initial state:");
    assert_eq!(lines[4], "Action 1: Electronics - Laptop to 'NA'.");
    assert_eq!(lines[7], "Action 4: Clothing - T-Shirt to 'NA'.");
    assert_eq!(
        lines[8],
        "This is the end of the changes. What is the state of preferences on all categories after the actions? \
         Format your response EXACTLY how I formatted the input initial preferences state. Preferences:"
    );
    assert_eq!(lines.len(), 9);
}

#[test]
fn prompt_with_no_actions() {
    let s = parse_reply(FIGURE_INITIAL).unwrap();
    let prompt = render_prompt(&s, &[]);
    assert!(prompt.contains("initial state:\nThis is the end of the changes."));
    assert!(!prompt.contains("Action 1"));
    assert_eq!(parse_prompt(&prompt).unwrap(), (s, vec![]));
}

#[test]
fn rendered_state_is_a_python_literal() {
    let s = generate_runs(9, GenerateConfig { n_initial: 1, per_state: 1, n_actions: 1 })[0].initial;
    let script = "import ast,json,sys; print(json.dumps(ast.literal_eval(sys.stdin.read()), sort_keys=True))";
    let Ok(mut child) =
        Command::new("python3").args(["-c", script]).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()
    else {
        eprintln!("python3 unavailable; skipped");
        return;
    };
    child.stdin.take().unwrap().write_all(s.to_string().as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let parsed: BTreeMap<String, BTreeMap<String, String>> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed, as_names(&s));
}

// ---- lenient parsing ----

#[test]
fn parse_tolerates_quote_and_spacing_variants() {
    let want = parse_reply(FIGURE_ANSWER).unwrap();
    assert_eq!(parse_reply(&FIGURE_ANSWER.replace('\'', "\"")).unwrap(), want);
    let loose = FIGURE_ANSWER.replace(": ", ":").replace(", ", ",\n    ").replace("{ ", "{\n  ");
    assert_eq!(parse_reply(&loose).unwrap(), want);
    let chatty =
        format!("Sure! Here is the final state.\nPreferences:\n{}\nLet me know if you need more.", FIGURE_ANSWER);
    assert_eq!(parse_reply(&chatty).unwrap(), want);
    let unquoted = FIGURE_ANSWER.replace('\'', "");
    assert_eq!(parse_reply(&unquoted).unwrap(), want);
    let lower = FIGURE_ANSWER.replace("'NA'", "'na'");
    assert_eq!(parse_reply(&lower).unwrap(), want);
    // a reordered answer still parses by name
    let json = serde_json::json!({"Games": {"Puzzle": "Likes", "Video Game": "Dislikes", "Board Game": "Likes"},
        "Garden": {"Shovel": "Likes", "Lawn Mower": "Dislikes", "Gloves": "NA"},
        "Clothing": {"Jeans": "Likes", "T-Shirt": "NA", "Jacket": "Likes"},
        "Books": {"Novel": "Dislikes", "Biography": "NA", "Science Fiction": "Dislikes"},
        "Electronics": {"Laptop": "NA", "Smartphone": "Likes", "Headphones": "Dislikes"}});
    assert_eq!(parse_reply(&serde_json::to_string_pretty(&json).unwrap()).unwrap(), want);
}

#[test]
fn parse_names_the_gap() {
    let no_garden =
        FIGURE_ANSWER.replace("'Garden': { 'Shovel': 'Likes', 'Lawn Mower': 'Dislikes', 'Gloves': 'NA' }, ", "");
    let err = parse_reply(&no_garden).unwrap_err();
    assert_eq!(err, ParseError::MissingCategory("Garden".into()));
    assert_eq!(err.to_string(), "Garden");
    let no_jacket = FIGURE_ANSWER.replace(", 'Jacket': 'Likes'", "");
    assert_eq!(
        parse_reply(&no_jacket).unwrap_err(),
        ParseError::MissingProduct { category: "Clothing".into(), product: "Jacket".into() }
    );
    let bad_value = FIGURE_ANSWER.replace("'Puzzle': 'Likes'", "'Puzzle': 'Maybe'");
    assert!(matches!(parse_reply(&bad_value), Err(ParseError::MissingPreference { .. })));
    assert!(parse_reply("").is_err());
}

fn arb_state() -> impl Strategy<Value = PreferenceState> {
    proptest::collection::vec(0usize..3, 15).prop_map(|v| {
        let mut s = [[Pref::NA; 3]; 5];
        for (i, x) in v.into_iter().enumerate() {
            s[i / 3][i % 3] = Pref::ALL[x];
        }
        PreferenceState(s)
    })
}

fn arb_action() -> impl Strategy<Value = PrefAction> {
    (0usize..5, 0usize..3, 0usize..3).prop_map(|(c, p, v)| PrefAction {
        category: c,
        product: p,
        new_preference: Pref::ALL[v],
    })
}

proptest! {
    #[test]
    fn render_then_parse_round_trips(s in arb_state()) {
        prop_assert_eq!(parse_reply(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn prompt_parses_back(s in arb_state(), actions in proptest::collection::vec(arb_action(), 0..60)) {
        let prompt = render_prompt(&s, &actions);
        prop_assert_eq!(parse_prompt(&prompt).unwrap(), (s, actions.clone()));
        let action_lines = prompt.lines().filter(|l| l.starts_with("Action ")).count();
        prop_assert_eq!(action_lines, actions.len());
    }
}

// ---- run files ----

#[test]
fn run_file_round_trip() {
    let runs = generate_runs(99, GenerateConfig { n_initial: 3, per_state: 2, n_actions: 12 });
    let text = export_runs(&runs, 99);
    assert_eq!(import_runs(&text).unwrap(), runs);
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["generator"], "chacha8-uniform-v1");
    assert_eq!(doc["runs"][0]["actions"][0]["action"], "SetPreference");
    assert_eq!(doc["runs"][0]["states"].as_object().unwrap().len(), 12);
}

#[test]
fn run_file_rejects_inconsistent_states() {
    let runs = generate_runs(1, GenerateConfig { n_initial: 1, per_state: 1, n_actions: 3 });
    let mut doc: serde_json::Value = serde_json::from_str(&export_runs(&runs, 1)).unwrap();
    let a = &runs[0].actions[1];
    let other = Pref::ALL.into_iter().find(|p| *p != a.new_preference).unwrap();
    doc["runs"][0]["states"]["Action2"][CATEGORIES[a.category]][PRODUCTS[a.category][a.product]] =
        other.as_str().into();
    let err = import_runs(&doc.to_string()).unwrap_err();
    assert_eq!(err, RunFileError::CheckpointMismatch { run: 0, action: 2 });
    doc["schema_version"] = 7.into();
    assert_eq!(import_runs(&doc.to_string()).unwrap_err(), RunFileError::SchemaVersion(7));
    assert!(matches!(import_runs("{\"runs\": 3}"), Err(RunFileError::Malformed { .. })));
}

/// Runs produced by an independent generator in another language import cleanly.
#[test]
fn imports_grouped_layout_from_python() {
    let script = r#"
import json, random
random.seed(4)
cats = {"Electronics": ["Laptop", "Smartphone", "Headphones"], "Books": ["Novel", "Biography", "Science Fiction"],
        "Clothing": ["Jeans", "T-Shirt", "Jacket"], "Garden": ["Shovel", "Lawn Mower", "Gloves"],
        "Games": ["Board Game", "Video Game", "Puzzle"]}
vals = ["Likes", "Dislikes", "NA"]
out = []
for _ in range(6):
    init = {c: {p: random.choice(vals) for p in ps} for c, ps in cats.items()}
    trajs = []
    for _ in range(3):
        cur = json.loads(json.dumps(init))
        acts, states = [], {}
        for i in range(1, 31):
            c = random.choice(list(cats)); p = random.choice(cats[c])
            v = random.choice([x for x in vals if x != cur[c][p]])
            cur[c][p] = v
            acts.append({"action": "SetPreference", "category": c, "product": p, "new_preference": v})
            states["Action%d" % i] = json.loads(json.dumps(cur))
        trajs.append({"actions": acts, "states": states})
    out.append({"initial_preferences": init, "trajectories": trajs})
print(json.dumps(out))
"#;
    let Ok(out) = Command::new("python3").args(["-c", script]).output() else {
        eprintln!("python3 unavailable; skipped");
        return;
    };
    assert!(out.status.success());
    let runs = import_runs(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(runs.len(), 18);
    assert!(runs.iter().all(|r| r.actions.len() == 30));
    assert_eq!(runs[4].initial_index, 1);
    assert_eq!(runs[4].trajectory_index, 1);
}

// ---- scoring ----

fn grid() -> Vec<usize> {
    vec![0, 10, 20, 30, 40, 50]
}

#[test]
fn oracle_model_is_perfect() {
    let runs = generate_runs(21, GenerateConfig::default());
    let table = score(&runs, &oracle_lm(), &ScoreConfig { grid: grid(), ..ScoreConfig::default() }).unwrap();
    assert_eq!(table.rows.len(), 6);
    for row in &table.rows {
        assert_eq!((row.exact_match_rate, row.per_entry_rate, row.runs), (1.0, 1.0, 250));
    }
    assert!(table.failures.is_empty());
}

#[test]
fn echo_model_is_right_only_at_zero() {
    let runs = generate_runs(22, GenerateConfig { n_initial: 10, per_state: 2, n_actions: 50 });
    let table = score(&runs, &echo_lm(), &ScoreConfig { grid: grid(), ..ScoreConfig::default() }).unwrap();
    assert_eq!(table.rows[0].exact_match_rate, 1.0);
    assert!(table.rows[5].exact_match_rate < 0.2);
    // per-entry accuracy of the echo equals the fraction of entries untouched at n, computed directly
    for row in &table.rows {
        let direct: usize =
            runs.iter().map(|r| r.initial.agreement(&replay_oracle(&r.initial, &r.actions[..row.n]))).sum();
        assert!((row.per_entry_rate - direct as f64 / (15.0 * runs.len() as f64)).abs() < 1e-12);
    }
}

#[test]
fn bad_replies_and_failures_score_zero() {
    let runs = generate_runs(23, GenerateConfig { n_initial: 2, per_state: 1, n_actions: 5 });
    let garbage = FnClient::new("garbage", |_| Ok("I am not sure.".into()));
    let t = score(&runs, &garbage, &ScoreConfig { grid: vec![0, 5], ..ScoreConfig::default() }).unwrap();
    assert!(t.rows.iter().all(|r| r.exact_match_rate == 0.0 && r.per_entry_rate == 0.0 && r.unparseable == 2));
    let down = FnClient::new("down", |_| Err(LmError::Timeout { attempts: 2 }));
    let t = score(&runs, &down, &ScoreConfig { grid: vec![0, 5], ..ScoreConfig::default() }).unwrap();
    assert_eq!(t.failures.len(), 4);
    assert!(t.rows.iter().all(|r| r.lm_failures == 2 && r.exact_match_rate == 0.0));
    assert_eq!(
        score(&runs, &down, &ScoreConfig { grid: vec![6], ..ScoreConfig::default() }).unwrap_err(),
        ScoreError::GridBeyondActions { n: 6, run: 0, actions: 5 }
    );
}

#[test]
fn parallel_scoring_matches_sequential() {
    let runs = generate_runs(24, GenerateConfig { n_initial: 10, per_state: 3, n_actions: 50 });
    let lm = lossy_lm(0.05, 3);
    let seq = score(&runs, &lm, &ScoreConfig { grid: grid(), jobs: 1, ..ScoreConfig::default() }).unwrap();
    let par = score(&runs, &lm, &ScoreConfig { grid: grid(), jobs: 4, ..ScoreConfig::default() }).unwrap();
    assert_eq!(seq, par);
}

/// Expected exact-match curve of the lossy model, by direct simulation of its drop masks.
fn monte_carlo_curve(runs: &[SyntheticRun], p: f64, seeds: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
    grid()
        .iter()
        .map(|&n| {
            let mut hits = 0u64;
            for run in runs {
                let truth = replay_oracle(&run.initial, &run.actions[..n]);
                for _ in 0..seeds {
                    let mut s = run.initial;
                    for a in &run.actions[..n] {
                        if !rng.random_bool(p) {
                            s.0[a.category][a.product] = a.new_preference;
                        }
                    }
                    hits += u64::from(s == truth);
                }
            }
            hits as f64 / (runs.len() as u64 * seeds) as f64
        })
        .collect()
}

#[test]
fn lossy_model_accuracy_drops_with_more_actions() {
    let started = Instant::now();
    let runs = generate_runs(25, GenerateConfig::default());
    let expected = monte_carlo_curve(&runs, 0.02, 100);
    assert!(expected.windows(2).all(|w| w[1] < w[0]), "expected curve not decreasing: {expected:?}");

    let seeds = 100u64;
    let mut mean = table_of(&grid().into_iter().map(|n| (n, 0.0)).collect::<Vec<_>>());
    for seed in 0..seeds {
        let table =
            score(&runs, &lossy_lm(0.02, seed), &ScoreConfig { grid: grid(), ..ScoreConfig::default() }).unwrap();
        for (m, row) in mean.rows.iter_mut().zip(&table.rows) {
            m.exact_match_rate += row.exact_match_rate / seeds as f64;
        }
    }
    let observed: Vec<f64> = mean.rows.iter().map(|r| r.exact_match_rate).collect();
    // 25000 trials per point: standard error below 0.003
    for (o, e) in observed.iter().zip(&expected) {
        assert!((o - e).abs() < 0.015, "observed {observed:?} vs expected {expected:?}");
    }
    assert!(observed.windows(2).all(|w| w[1] <= w[0] + 0.01), "{observed:?}");
    let t = trend(&mean).unwrap();
    assert!(t.rank_correlation <= -0.8, "{t:?} {observed:?}");
    assert!(t.slope < 0.0);
    assert!(started.elapsed().as_secs() < 60, "{:?}", started.elapsed());
}

fn table_of(points: &[(usize, f64)]) -> AccuracyTable {
    AccuracyTable {
        rows: points
            .iter()
            .map(|&(n, e)| AccuracyRow {
                n,
                runs: 1,
                exact_match_rate: e,
                per_entry_rate: e,
                unparseable: 0,
                lm_failures: 0,
            })
            .collect(),
        failures: vec![],
    }
}

#[test]
fn trend_examples() {
    let flat = trend(&table_of(&[(0, 0.5), (10, 0.5), (20, 0.5)])).unwrap();
    assert_eq!((flat.slope, flat.rank_correlation), (0.0, 0.0));
    let down = trend(&table_of(&[(0, 1.0), (10, 0.8), (20, 0.7), (30, 0.2)])).unwrap();
    assert!((down.rank_correlation + 1.0).abs() < 1e-12);
    // least squares by hand: x̄=15, ȳ=0.675, Σdxdy=-12.5, Σdx²=500
    assert!((down.slope + 0.025).abs() < 1e-12);
    assert_eq!(trend(&table_of(&[(0, 1.0), (10, 0.5)])).unwrap_err(), TrendError::InsufficientPoints(2));
    assert_eq!(trend(&table_of(&[(0, 1.0), (0, 0.5), (10, 0.2)])).unwrap_err(), TrendError::InsufficientPoints(2));
}
