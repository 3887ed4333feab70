use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use subsetsearch::experiment::ResultsFile;

const CONFIG: &str = "
experiment.name = cli
experiment.seeds = 1, 2
experiment.baselines = random
experiment.consensus = 3
pool.samples_per_cluster = 25
pool.test_samples_per_cluster = 10
pool.redundancy = 0.2
search.scheme = build_up
search.target_size = 64
acquisition.ensemble = combined
acquisition.runs = 2
acquisition.checkpoints = 2
train.max_epochs = 6
train.harvest_window = 4
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_subsetsearch"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.conf");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn only_results_file(dir: &Path) -> std::path::PathBuf {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    assert_eq!(files.len(), 1, "{files:?}");
    files.pop().unwrap()
}

#[test]
fn repeated_search_gives_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let mut docs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "2")] {
        let out_dir = dir.path().join(name);
        let out = run(&["--config", &cfg, "--jobs", jobs, "--out", out_dir.to_str().unwrap(), "search"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let file = only_results_file(&out_dir);
        docs.push((file.file_name().unwrap().to_owned(), ResultsFile::read(&file).unwrap().without_timing()));
    }
    assert_eq!(docs[0], docs[1]);

    let hash = docs[0].1.config_hash.clone();
    let subset = |name: &str| fs::read(dir.path().join(name).join(format!("artifacts-{hash}/seed-1/subset.csv"))).unwrap();
    assert_eq!(subset("a"), subset("b"));
}

#[test]
fn repeated_search_appends_to_the_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("out");
    for _ in 0..2 {
        let out = run(&["--config", &cfg, "--seed", "5", "--out", out_dir.to_str().unwrap(), "search"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let file = ResultsFile::read(&only_results_file(&out_dir)).unwrap().without_timing();
    assert_eq!(file.runs.len(), 2);
    assert_eq!(file.runs[0], file.runs[1]);
    assert_eq!(file.runs[0].trials.len(), 1);
    assert_eq!(file.runs[0].trials[0].seed, 5);
}

#[test]
fn exit_codes_distinguish_config_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--no-such-flag", "search"])), 1);
    // search without a config
    assert_eq!(code(&run(&["--out", out, "search"])), 1);

    let bad = write_config(dir.path(), "experiment.seeds = 1\nsearch.sheme = build_up\n");
    let r = run(&["--config", &bad, "--out", out, "search"]);
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stderr).contains("search.sheme"));

    let missing = dir.path().join("missing.csv");
    let r = run(&["--out", out, "score", "--pool", missing.to_str().unwrap(), "--store", out]);
    assert_eq!(code(&r), 2);

    // a trial that cannot run is recorded and turns the exit code to 2
    let too_big = write_config(dir.path(), &format!("{CONFIG}search.target_size = 100000\n").replace("search.target_size = 64\n", ""));
    let r = run(&["--config", &too_big, "--out", out, "search"]);
    assert_eq!(code(&r), 2, "{}", String::from_utf8_lossy(&r.stderr));
    let file = ResultsFile::read(&only_results_file(dir.path())).unwrap();
    assert!(file.runs[0].trials.iter().all(|t| t.failed()));
}

#[test]
fn data_score_analyze_export_flow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("out");
    let out = out_dir.to_str().unwrap();

    let r = run(&["--config", &cfg, "--seed", "1", "--out", out, "gen-data"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["pool.csv", "test.csv", "meta.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }

    let r = run(&["--config", &cfg, "--out", out, "search"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let results = only_results_file(&out_dir);
    let hash = ResultsFile::read(&results).unwrap().config_hash;
    let seed_dir = out_dir.join(format!("artifacts-{hash}/seed-1"));
    let store = seed_dir.join("store");
    let subset = seed_dir.join("subset.csv");
    let pool = out_dir.join("pool.csv");

    let score_dir = dir.path().join("score");
    let r = run(&[
        "--out",
        score_dir.to_str().unwrap(),
        "score",
        "--pool",
        pool.to_str().unwrap(),
        "--store",
        store.to_str().unwrap(),
        "--function",
        "entropy",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let scores = fs::read_to_string(score_dir.join("scores.csv")).unwrap();
    // header plus one line per pool sample (4 classes x 2 clusters x 25)
    assert_eq!(scores.lines().count(), 201);
    assert!(score_dir.join("predictions.alpt").exists());

    let analyze_dir = dir.path().join("analyze");
    let r = run(&[
        "--out",
        analyze_dir.to_str().unwrap(),
        "analyze",
        "--pool",
        pool.to_str().unwrap(),
        "--store",
        store.to_str().unwrap(),
        "--subset",
        subset.to_str().unwrap(),
        "--consensus",
        "3",
        "--csv",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(analyze_dir.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(report["pool_size"], 200);
    let cumulative = report["consensus"]["cumulative"].as_array().unwrap();
    assert_eq!(cumulative.len(), 3);
    assert_eq!(cumulative[0], report["consensus"]["eval_size"]);
    assert!(analyze_dir.join("consensus.csv").exists());
    assert!(analyze_dir.join("histogram.csv").exists());

    let export_dir = dir.path().join("export");
    let r = run(&["--out", export_dir.to_str().unwrap(), "export", "--results", results.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for kind in ["learning_curve", "consensus", "histogram", "scheme_comparison"] {
        let text = fs::read_to_string(export_dir.join(format!("{kind}.csv"))).unwrap();
        assert!(text.lines().any(|l| !l.starts_with('#')), "{kind} has no header");
    }
    let r = run(&["--out", export_dir.to_str().unwrap(), "export", "--results", results.to_str().unwrap(), "--kind", "violin"]);
    assert_eq!(code(&r), 1);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        if let Err(e) = subsetsearch::experiment::ExperimentConfig::parse(&text) {
            panic!("{}: {e}", path.display());
        }
        n += 1;
    }
    assert!(n >= 2);
}
