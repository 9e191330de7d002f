use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refkit::assertlang::{load_suite, Status};
use refkit::evaluator::patch::{diff_trees, LineKind};
use refkit::evaluator::{
    evaluate_batch, evaluate_suite, evaluate_task, materialize_workspace, parse_machine_report, render_batch,
    render_report, score_run, target_coverage, EvalError, EvaluationReport, Patch, PatchError, ReportFormat, SuiteJob,
};
use refkit::taskspec::{load_manifest, Corpus};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn corpus() -> Corpus {
    load_manifest(&fixtures().join("corpus/manifest.json")).expect("fixture manifest loads")
}

fn reference(c: &Corpus, task: &str) -> String {
    c.reference_patch_text(task).expect("has reference").expect("readable")
}

fn partitions() -> serde_json::Value {
    let text = std::fs::read_to_string(fixtures().join("corpus/expected/partitions.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn strings(v: &serde_json::Value) -> BTreeSet<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

fn task_ids(c: &Corpus) -> Vec<String> {
    c.manifest.tasks.iter().map(|t| t.id.clone()).collect()
}

// ---- workspaces ----

#[test]
fn materialized_workspaces_are_separate_identical_copies() {
    let c = corpus();
    let a = materialize_workspace(&c, "parameterize-gunzip").unwrap();
    let b = materialize_workspace(&c, "parameterize-gunzip").unwrap();
    assert_ne!(a.root(), b.root());
    assert_eq!(a.digest().unwrap(), b.digest().unwrap());
    assert_eq!(a.digest().unwrap(), c.digests["scrapy-mini"]);
    assert!(!a.dirty);
}

#[test]
fn workspace_holds_exactly_the_listed_files() {
    let c = corpus();
    let listing = std::fs::read_to_string(fixtures().join("corpus/expected/snapshot_files.txt")).unwrap();
    for task in task_ids(&c) {
        let repo = &c.task(&task).unwrap().repo_id;
        let expected: BTreeSet<String> =
            listing.lines().filter_map(|l| l.strip_prefix(&format!("{repo}/"))).map(str::to_string).collect();
        let ws = materialize_workspace(&c, &task).unwrap();
        let got: BTreeSet<String> = ws.files().unwrap().into_keys().collect();
        assert_eq!(got, expected, "{task}");
    }
}

#[test]
fn tampered_snapshot_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let src = fixtures().join("corpus");
    for entry in walkdir::WalkDir::new(&src) {
        let entry = entry.unwrap();
        let rel = entry.path().strip_prefix(&src).unwrap();
        let dst = tmp.path().join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&dst).unwrap();
        } else {
            std::fs::copy(entry.path(), &dst).unwrap();
        }
    }
    let c = load_manifest(&tmp.path().join("manifest.json")).unwrap();
    std::fs::write(tmp.path().join("repos/scrapy-mini/scrapy/utils/gz.py"), "tampered = True\n").unwrap();
    match materialize_workspace(&c, "parameterize-gunzip") {
        Err(EvalError::DigestMismatch { repo_id, .. }) => assert_eq!(repo_id, "scrapy-mini"),
        other => panic!("expected DigestMismatch, got {other:?}"),
    }
    let report = evaluate_task(&c, "parameterize-gunzip", &reference(&c, "parameterize-gunzip")).unwrap();
    assert!(!report.resolved);
    assert!(report.outcomes.iter().all(|o| o.status == Status::Error));
    // the other repo is untouched
    assert!(materialize_workspace(&c, "rename-send-from-directory").is_ok());
}

// ---- patch application ----

#[test]
fn empty_patch_touches_nothing() {
    let c = corpus();
    let mut ws = materialize_workspace(&c, "rename-iterloc").unwrap();
    let before = ws.digest().unwrap();
    let touched = ws.apply_patch(&Patch::parse("").unwrap()).unwrap();
    assert!(touched.is_empty());
    assert_eq!(ws.digest().unwrap(), before);
    assert!(!ws.dirty);
}

#[test]
fn rename_patch_touches_two_files() {
    let c = corpus();
    let mut ws = materialize_workspace(&c, "rename-iterloc").unwrap();
    let patch = Patch::parse(&reference(&c, "rename-iterloc")).unwrap();
    let touched = ws.apply_patch(&patch).unwrap();
    let expected = strings(&partitions()["rename-iterloc"]["reference_files_edited"]);
    assert_eq!(touched.len(), 2);
    assert_eq!(touched, expected);
    assert!(ws.dirty);
}

#[test]
fn reference_patches_round_trip_byte_for_byte() {
    let c = corpus();
    for task in task_ids(&c) {
        let text = reference(&c, &task);
        let patch = Patch::parse(&text).unwrap();
        assert_eq!(patch.to_text().trim_end_matches('\n'), text.trim_end_matches('\n'), "{task}");
        assert_eq!(Patch::parse(&patch.to_text()).unwrap(), patch);
    }
}

#[test]
fn workspace_and_in_memory_application_agree() {
    let c = corpus();
    for task in task_ids(&c) {
        let patch = Patch::parse(&reference(&c, &task)).unwrap();
        let mut ws = materialize_workspace(&c, &task).unwrap();
        ws.apply_patch(&patch).unwrap();
        let mut mem = c.snapshot_files(&c.task(&task).unwrap().repo_id).unwrap();
        patch.apply_to(&mut mem).unwrap();
        assert_eq!(ws.files().unwrap(), mem, "{task}");
    }
}

#[test]
fn patches_stack() {
    let c = corpus();
    let mut ws = materialize_workspace(&c, "parameterize-gunzip").unwrap();
    ws.apply_patch(&Patch::parse(&reference(&c, "parameterize-gunzip")).unwrap()).unwrap();
    ws.apply_patch(&Patch::parse(&reference(&c, "add-log-parameter-xmliter")).unwrap()).unwrap();
    ws.apply_patch(&Patch::parse(&reference(&c, "rename-iterloc")).unwrap()).unwrap();
    for task in ["parameterize-gunzip", "add-log-parameter-xmliter", "rename-iterloc"] {
        let outcomes = refkit::assertlang::run_suite(c.suite(task).unwrap(), &ws);
        assert!(outcomes.iter().all(|o| o.passed()), "{task}: {outcomes:?}");
    }
}

#[test]
fn stale_context_rejects_whole_patch_and_leaves_workspace_pristine() {
    let c = corpus();
    let tasks = task_ids(&c);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for trial in 0..100 {
        let task = &tasks[rng.random_range(0..tasks.len())];
        let mut patch = Patch::parse(&reference(&c, task)).unwrap();
        // candidate (file, hunk, line) positions whose text must already exist in the file
        let mut spots = Vec::new();
        for (fi, f) in patch.files.iter().enumerate() {
            for (hi, h) in f.hunks.iter().enumerate() {
                for (li, l) in h.lines.iter().enumerate() {
                    if l.kind != LineKind::Add {
                        spots.push((fi, hi, li));
                    }
                }
            }
        }
        let (fi, hi, li) = spots[rng.random_range(0..spots.len())];
        patch.files[fi].hunks[hi].lines[li].text.push_str(&format!("  # stale {trial}"));
        let mut ws = materialize_workspace(&c, task).unwrap();
        let before = ws.digest().unwrap();
        match ws.apply_patch(&patch) {
            Err(PatchError::ContextMismatch { file, hunk }) => {
                assert_eq!(file, patch.files[fi].path());
                assert_eq!(hunk, hi + 1);
            }
            other => panic!("trial {trial}: expected ContextMismatch, got {other:?}"),
        }
        assert_eq!(ws.digest().unwrap(), before, "trial {trial}");
        assert_eq!(ws.digest().unwrap(), c.digests[&c.task(task).unwrap().repo_id]);
    }
}

#[test]
fn malformed_patch_is_rejected_in_report() {
    let c = corpus();
    let report = evaluate_task(&c, "parameterize-gunzip", "this is not a diff\n").unwrap();
    assert!(!report.resolved);
    assert_eq!(report.subtask_rate, 0.0);
    assert_eq!(report.outcomes.len(), 9);
    assert!(report.outcomes.iter().all(|o| o.status == Status::Error && o.message == "patch rejected"));
    assert!(report.patch_error.is_some());
    assert!(report.files_edited.is_empty());
}

// ---- task evaluation ----

#[test]
fn reference_patches_resolve_every_task() {
    let c = corpus();
    let parts = partitions();
    for task in task_ids(&c) {
        let report = evaluate_task(&c, &task, &reference(&c, &task)).unwrap();
        assert!(report.resolved, "{task}: {:?}", report.outcomes);
        assert_eq!(report.subtask_rate, 1.0);
        assert_eq!(report.files_edited, strings(&parts[&task]["reference_files_edited"]), "{task}");
        assert_eq!(report.target_coverage, 1.0, "{task}");
    }
}

#[test]
fn gunzip_reference_passes_nine_of_nine_quickly() {
    let c = corpus();
    let start = Instant::now();
    let report = evaluate_task(&c, "parameterize-gunzip", &reference(&c, "parameterize-gunzip")).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert_eq!(report.outcomes.len(), 9);
    assert_eq!(report.outcomes.iter().filter(|o| o.passed()).count(), 9);
}

#[test]
fn empty_patch_yields_the_enumerated_partition() {
    let c = corpus();
    let parts = partitions();
    for task in task_ids(&c) {
        let report = evaluate_task(&c, &task, "").unwrap();
        let expected = strings(&parts[&task]["unpatched_pass"]);
        let passed: BTreeSet<String> = report.outcomes.iter().filter(|o| o.passed()).map(|o| o.id.clone()).collect();
        assert_eq!(passed, expected, "{task}");
        assert_eq!(report.subtask_rate, expected.len() as f64 / report.outcomes.len() as f64);
        assert!(!report.resolved);
        assert!(report.files_edited.is_empty());
    }
}

#[test]
fn one_of_five_targets_gives_coverage_one_fifth() {
    let c = corpus();
    let full = Patch::parse(&reference(&c, "parameterize-gunzip")).unwrap();
    let targets = refkit::taskspec::derive_target_files(c.suite("parameterize-gunzip").unwrap());
    assert_eq!(targets.len(), 5);
    let one = Patch {
        preamble: Vec::new(),
        files: full.files.iter().filter(|f| f.path() == "scrapy/utils/gz.py").cloned().collect(),
    };
    assert_eq!(one.files.len(), 1);
    let report = evaluate_task(&c, "parameterize-gunzip", &one.to_text()).unwrap();
    assert_eq!(report.files_edited.len(), 1);
    assert_eq!(report.target_coverage, 0.2);
    assert!(!report.resolved);
}

#[test]
fn coverage_ratio_definition() {
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    assert_eq!(target_coverage(&set(&["a", "z"]), &set(&["a", "b", "c", "d", "e"])), 0.2);
    assert_eq!(target_coverage(&set(&[]), &set(&["a"])), 0.0);
    assert_eq!(target_coverage(&set(&["x"]), &set(&[])), 1.0);
}

#[test]
fn resolution_implies_full_subtask_rate_and_mutants_do_not_resolve() {
    let c = corpus();
    for task in task_ids(&c) {
        let full = Patch::parse(&reference(&c, &task)).unwrap();
        let unpatched = evaluate_task(&c, &task, "").unwrap();
        // files hosting an assertion that fails before the patch
        let needed: BTreeSet<&str> = unpatched
            .outcomes
            .iter()
            .zip(&unpatched.checks)
            .filter(|(o, _)| !o.passed())
            .map(|(_, k)| k.path.as_str())
            .collect();
        for skip in 0..full.files.len() {
            let mut mutant = full.clone();
            mutant.files.remove(skip);
            let r = evaluate_task(&c, &task, &mutant.to_text()).unwrap();
            assert_eq!(r.resolved, r.subtask_rate == 1.0);
            if needed.contains(full.files[skip].path()) {
                assert!(!r.resolved, "{task} without {}", full.files[skip].path());
            }
        }
    }
}

#[test]
fn newly_passing_assertions_name_edited_files() {
    let c = corpus();
    for task in task_ids(&c) {
        let before = evaluate_task(&c, &task, "").unwrap();
        let after = evaluate_task(&c, &task, &reference(&c, &task)).unwrap();
        for (i, o) in after.outcomes.iter().enumerate() {
            if o.passed() && !before.outcomes[i].passed() {
                assert!(after.files_edited.contains(&after.checks[i].path), "{task}/{}", o.id);
            }
        }
    }
}

#[test]
fn repeated_evaluation_is_hermetic() {
    let c = corpus();
    let patch = reference(&c, "parameterize-gunzip");
    let first = render_report(
        &evaluate_task(&c, "parameterize-gunzip", &patch).unwrap().without_timings(),
        ReportFormat::Machine,
    );
    for _ in 0..100 {
        let r = evaluate_task(&c, "parameterize-gunzip", &patch).unwrap();
        assert_eq!(render_report(&r.without_timings(), ReportFormat::Machine), first);
    }
}

// ---- scoring ----

fn stub(resolved: bool, rate: f64, coverage: f64) -> EvaluationReport {
    EvaluationReport {
        task_id: "t".into(),
        suite_label: "t".into(),
        suite_file: "suites/t.json".into(),
        resolved,
        outcomes: Vec::new(),
        checks: Vec::new(),
        subtask_rate: rate,
        files_edited: BTreeSet::new(),
        target_files: BTreeSet::new(),
        target_coverage: coverage,
        patch_error: None,
        timings: Default::default(),
    }
}

#[test]
fn score_run_examples() {
    assert!(score_run(&[]).is_err());
    let half = score_run(&[stub(true, 1.0, 1.0), stub(false, 0.5, 0.0)]).unwrap();
    assert_eq!(half.resolution_rate, 0.5);
    assert_eq!(half.mean_subtask_rate, 0.75);
    assert_eq!(half.mean_target_coverage, 0.5);
    let all = score_run(&[stub(true, 1.0, 1.0), stub(true, 1.0, 1.0)]).unwrap();
    assert_eq!(all.resolution_rate, 1.0);
}

#[test]
fn fixture_batch_of_three_with_two_resolved() {
    let c = corpus();
    let items = vec![
        ("parameterize-gunzip".to_string(), reference(&c, "parameterize-gunzip")),
        ("add-log-parameter-xmliter".to_string(), reference(&c, "add-log-parameter-xmliter")),
        ("rename-iterloc".to_string(), String::new()),
    ];
    let reports = evaluate_batch(&c, &items, 3).unwrap();
    let score = score_run(&reports).unwrap();
    assert_eq!(score.resolved, 2);
    assert_eq!(score.resolution_rate, 2.0 / 3.0);
    // brute-force recomputation from outcomes and edited files
    let mut coverage = 0.0;
    let mut rate = 0.0;
    for (r, (task, _)) in reports.iter().zip(&items) {
        assert_eq!(&r.task_id, task);
        let targets: BTreeSet<&str> = c.suite(task).unwrap().assertions.iter().map(|a| a.path.as_str()).collect();
        let hit = targets.iter().filter(|t| r.files_edited.contains(**t)).count();
        coverage += hit as f64 / targets.len() as f64;
        rate += r.outcomes.iter().filter(|o| o.status == Status::Pass).count() as f64 / r.outcomes.len() as f64;
    }
    assert!((score.mean_target_coverage - coverage / 3.0).abs() < 1e-12);
    assert!((score.mean_subtask_rate - rate / 3.0).abs() < 1e-12);
}

#[test]
fn parallel_batch_matches_sequential() {
    let c = corpus();
    let mut items = Vec::new();
    for task in task_ids(&c) {
        items.push((task.clone(), reference(&c, &task)));
        items.push((task.clone(), String::new()));
    }
    let strip = |rs: Vec<EvaluationReport>| rs.into_iter().map(|r| r.without_timings()).collect::<Vec<_>>();
    let one = strip(evaluate_batch(&c, &items, 1).unwrap());
    let many = strip(evaluate_batch(&c, &items, 8).unwrap());
    assert_eq!(one, many);
}

// ---- rendering ----

fn mask_durations(text: &str) -> String {
    let re = regex::Regex::new(r"(?m)^(Ran \d+ tests in )\d+\.\d{3}s$").unwrap();
    re.replace_all(text, "${1}X.XXXs").into_owned()
}

fn mixed_report(c: &Corpus) -> EvaluationReport {
    let text = std::fs::read_to_string(fixtures().join("golden/mixed-checks.json")).unwrap();
    let suite = load_suite(&text).unwrap();
    evaluate_suite(
        c,
        &SuiteJob {
            task_id: "mixed-checks",
            repo_id: "scrapy-mini",
            suite: &suite,
            suite_file: "suites/mixed-checks.json",
            patch_text: "",
        },
    )
}

#[test]
fn text_report_matches_golden_for_eight_outcomes_five_failures() {
    let c = corpus();
    let report = mixed_report(&c);
    assert_eq!(report.outcomes.len(), 8);
    assert_eq!(report.failures(), 5);
    let text = render_report(&report, ReportFormat::Text);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.iter().any(|l| l.starts_with("Ran 8 tests in ")));
    assert!(lines.contains(&"FAILED (failures=5)"));
    let golden = std::fs::read_to_string(fixtures().join("golden/mixed-checks.txt")).unwrap();
    assert_eq!(mask_durations(&text), golden);
}

#[test]
fn passing_suite_renders_passed_line() {
    let c = corpus();
    let report = evaluate_task(&c, "rename-iterloc", &reference(&c, "rename-iterloc")).unwrap();
    let text = render_report(&report, ReportFormat::Text);
    let expected = format!(
        "    Patch Evaluation Results\n{eq}\nTest file: suites/rename-iterloc.json\nTest results: Passed\n{eq}\n",
        eq = "=".repeat(80)
    );
    assert_eq!(text, expected);
}

#[test]
fn batch_text_concatenates_sections() {
    let c = corpus();
    let a = evaluate_task(&c, "rename-iterloc", &reference(&c, "rename-iterloc")).unwrap();
    let b = mixed_report(&c);
    let batch = render_batch(&[a.clone(), b.clone()], ReportFormat::Text);
    let single_b = render_report(&b, ReportFormat::Text);
    let header = format!("    Patch Evaluation Results\n{}\n", "=".repeat(80));
    let section_b = single_b.strip_prefix(&header).unwrap();
    assert!(batch.ends_with(section_b));
    assert_eq!(batch.matches("Test file: ").count(), 2);
}

#[test]
fn reports_carry_no_absolute_paths() {
    let c = corpus();
    let root = c.base_dir.canonicalize().unwrap();
    let tmp = std::env::temp_dir();
    for task in task_ids(&c) {
        for patch in [String::new(), reference(&c, &task), "garbage".to_string()] {
            let r = evaluate_task(&c, &task, &patch).unwrap();
            for format in [ReportFormat::Text, ReportFormat::Machine] {
                let doc = render_report(&r, format);
                assert!(!doc.contains(root.to_str().unwrap()));
                assert!(!doc.contains(tmp.to_str().unwrap()));
            }
        }
    }
}

#[test]
fn machine_report_round_trips() {
    let c = corpus();
    for task in task_ids(&c) {
        for patch in [String::new(), reference(&c, &task), "garbage".to_string()] {
            let r = evaluate_task(&c, &task, &patch).unwrap();
            let doc = render_report(&r, ReportFormat::Machine);
            let value: serde_json::Value = serde_json::from_str(&doc).unwrap();
            assert_eq!(value["schema_version"], 1);
            assert_eq!(parse_machine_report(&doc).unwrap(), r);
        }
    }
    let bad = render_report(&stub(true, 1.0, 1.0), ReportFormat::Machine)
        .replace("\"schema_version\": 1", "\"schema_version\": 7");
    assert!(parse_machine_report(&bad).is_err());
}

// ---- diff generation ----

fn text_file() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "def x():", "    return 1", ""]), 0..24)
        .prop_flat_map(|lines| {
            any::<bool>().prop_map(move |terminated| {
                let mut s = lines.join("\n");
                if terminated && !s.is_empty() {
                    s.push('\n');
                }
                s.into_bytes()
            })
        })
}

fn tree() -> impl Strategy<Value = BTreeMap<String, Vec<u8>>> {
    prop::collection::btree_map(
        prop::sample::select(vec!["m.py", "pkg/a.py", "pkg/b.py", "t/test_x.py"]).prop_map(String::from),
        text_file(),
        0..4,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn generated_diff_transforms_old_into_new(old in tree(), new in tree()) {
        let patch = diff_trees(&old, &new);
        let mut applied = old.clone();
        let touched = patch.apply_to(&mut applied).unwrap();
        prop_assert_eq!(&applied, &new);
        let changed: BTreeSet<String> = old.keys().chain(new.keys())
            .filter(|k| old.get(*k) != new.get(*k)).cloned().collect();
        prop_assert_eq!(touched, changed);
        let reparsed = Patch::parse(&patch.to_text()).unwrap();
        prop_assert_eq!(&reparsed, &patch);
    }

    #[test]
    fn failed_application_leaves_tree_unchanged(old in tree(), new in tree(), other in tree()) {
        let patch = diff_trees(&old, &new);
        let mut target = other.clone();
        if patch.apply_to(&mut target).is_err() {
            prop_assert_eq!(target, other);
        }
    }
}

// ---- cross-check against git ----

fn git(dir: &std::path::Path, args: &[&str], stdin: Option<&[u8]>) -> std::process::Output {
    use std::io::Write;
    let mut child = std::process::Command::new("git")
        .args(args)
        .current_dir(dir)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("HOME", dir)
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .expect("git runs");
    if let Some(bytes) = stdin {
        child.stdin.take().unwrap().write_all(bytes).unwrap();
    }
    child.wait_with_output().unwrap()
}

#[test]
fn diffs_interoperate_with_git_in_both_directions() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    let strategy = (tree(), tree());
    for case in 0..60 {
        let (old, new) = strategy.new_tree(&mut runner).unwrap().current();
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        refkit::taskspec::snapshot::write_tree(&old, &a).unwrap();
        refkit::taskspec::snapshot::write_tree(&new, &b).unwrap();
        std::fs::create_dir_all(&a).unwrap();
        std::fs::create_dir_all(&b).unwrap();

        // git's diff, applied by us
        let repo = tmp.path().join("repo");
        refkit::taskspec::snapshot::write_tree(&old, &repo).unwrap();
        std::fs::create_dir_all(&repo).unwrap();
        for args in [
            &["init", "-q"][..],
            &["add", "-A"],
            &["-c", "user.name=t", "-c", "user.email=t@t", "commit", "-q", "--allow-empty", "-m", "old"],
        ] {
            assert!(git(&repo, args, None).status.success());
        }
        for entry in std::fs::read_dir(&repo).unwrap() {
            let entry = entry.unwrap();
            if entry.file_name() != ".git" {
                let p = entry.path();
                if p.is_dir() {
                    std::fs::remove_dir_all(p).unwrap()
                } else {
                    std::fs::remove_file(p).unwrap()
                }
            }
        }
        refkit::taskspec::snapshot::write_tree(&new, &repo).unwrap();
        assert!(git(&repo, &["add", "-A"], None).status.success());
        let out = git(&repo, &["diff", "--cached", "--no-color", "--no-renames"], None);
        let text = String::from_utf8(out.stdout).unwrap();
        let theirs = Patch::parse(&text).unwrap_or_else(|e| panic!("case {case}: {e}\n{text}"));
        let mut applied = old.clone();
        theirs.apply_to(&mut applied).unwrap();
        assert_eq!(applied, new, "case {case}: git diff applied by us\n{text}");

        // our diff, applied by git
        let ours = diff_trees(&old, &new).to_text();
        if ours.is_empty() {
            assert_eq!(old, new);
            continue;
        }
        let out = git(&a, &["apply", "--whitespace=nowarn", "-"], Some(ours.as_bytes()));
        assert!(out.status.success(), "case {case}: {}\n{ours}", String::from_utf8_lossy(&out.stderr));
        let got = refkit::taskspec::snapshot::read_dir_tree(&a).unwrap();
        assert_eq!(got, new, "case {case}: our diff applied by git\n{ours}");
    }
}
