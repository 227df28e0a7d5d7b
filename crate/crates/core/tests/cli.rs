use std::path::Path;
use std::process::{Command, Output};

use mtlab::corpus::{MonoEntry, ParallelEntry};
use mtlab::harness::{load_rows, DeskWorld, ExperimentConfig, RESULT_CSV_HEADER, PIVOT, ZERO};

fn mtlab(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtlab"))
        .args(args)
        .env("MTLAB_OUT", root)
        .output()
        .expect("spawn mtlab")
}

fn ok(args: &[&str], root: &Path) -> String {
    let o = mtlab(args, root);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.world.mono_sentences = 100;
    cfg.world.parallel_total = 200;
    cfg.world.test_sentences = 10;
    cfg.model.d_model = 16;
    cfg.model.d_ff = 32;
    cfg.train.steps = 5;
    cfg.train.batch.batch_tokens = 256;
    cfg.ibt.steps = 0;
    cfg.seeds = vec![1];
    cfg
}

fn assert_same_tree(a: &Path, b: &Path) {
    for f in std::fs::read_dir(a).unwrap() {
        let name = f.unwrap().file_name();
        let (x, y) = (a.join(&name), b.join(&name));
        if x.is_dir() {
            assert_same_tree(&x, &y);
        } else {
            assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&y).unwrap(), "{} differs", x.display());
        }
    }
}

#[test]
fn pipeline_from_corpus_to_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut m = DeskWorld::default().manifest();
    m.mono.push(MonoEntry::new(ZERO, "news", 100, "train"));
    m.parallel.push(ParallelEntry::new("a1", PIVOT, "news", 100, "train"));
    m.parallel.push(ParallelEntry::new(ZERO, PIVOT, "news", 10, "test"));
    std::fs::write(d.join("manifest.toml"), m.to_toml()).unwrap();
    let mut cfg = small_config();
    cfg.out_dir = d.join("exp");
    std::fs::write(d.join("config.toml"), cfg.to_toml()).unwrap();

    let p = |s: &str| d.join(s).to_str().unwrap().to_string();
    let listing = ok(&["corpus", "gen", "--manifest", &p("manifest.toml"), "--out", &p("corpus")], d);
    assert!(listing.contains("a1__pv.tsv"));
    ok(&["vocab", "train", "--corpus", &p("corpus"), "--size", "500", "--out", &p("vocab")], d);
    let train = ["train", "--corpus", &p("corpus"), "--vocab", &p("vocab"), "--config", &p("config.toml")];
    ok(&[&train[..], &["--steps", "4", "--out", &p("ck")]].concat(), d);
    assert!(d.join("ck").is_dir());

    let test = format!("{ZERO}:{PIVOT}:{}", p("corpus/parallel/test/news/a3__pv.tsv"));
    let csv = ok(&["eval", "--checkpoint", &p("ck"), "--vocab", &p("vocab"), "--test", &test], d);
    assert!(csv.lines().count() > 1);
    assert!(csv.contains("bleu"));
}

#[test]
fn resumed_training_matches_one_long_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut m = DeskWorld::default().manifest();
    m.mono.push(MonoEntry::new(ZERO, "news", 100, "train"));
    m.parallel.push(ParallelEntry::new("a1", PIVOT, "news", 100, "train"));
    std::fs::write(d.join("manifest.toml"), m.to_toml()).unwrap();
    std::fs::write(d.join("config.toml"), small_config().to_toml()).unwrap();
    let p = |s: &str| d.join(s).to_str().unwrap().to_string();
    ok(&["corpus", "gen", "--manifest", &p("manifest.toml"), "--out", &p("corpus")], d);
    ok(&["vocab", "train", "--corpus", &p("corpus"), "--size", "500", "--out", &p("vocab")], d);
    let train = ["train", "--corpus", &p("corpus"), "--vocab", &p("vocab"), "--config", &p("config.toml")];
    ok(&[&train[..], &["--steps", "6", "--out", &p("long")]].concat(), d);
    ok(&[&train[..], &["--steps", "3", "--out", &p("half")]].concat(), d);
    ok(&[&train[..], &["--steps", "3", "--resume", &p("half"), "--out", &p("resumed")]].concat(), d);
    assert_same_tree(&d.join("long"), &d.join("resumed"));
}

#[test]
fn experiment_writes_results_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg = small_config();
    cfg.out_dir = d.join("exp");
    std::fs::write(d.join("config.toml"), cfg.to_toml()).unwrap();
    let out = ok(&["experiment", "run", "e2", "--config", d.join("config.toml").to_str().unwrap()], d);
    let csv = Path::new(out.trim());
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next(), Some(RESULT_CSV_HEADER));
    let rows = load_rows(csv).unwrap();
    assert!(rows.iter().any(|r| r.run == "k4" && r.src_lang == ZERO));
    assert!(csv.parent().unwrap().join("log.txt").exists());

    let svg = d.join("plot.svg");
    ok(&["plot", "--csv", csv.to_str().unwrap(), "--metric", "bleu", "--out", svg.to_str().unwrap()], d);
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn default_config_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["experiment", "config"], dir.path());
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), ExperimentConfig::default());
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = mtlab(&["vocab", "train", "--corpus", "/nonexistent", "--out", "/tmp/x"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let usage = mtlab(&["experiment", "run", "E9"], dir.path());
    assert_eq!(usage.status.code(), Some(2));
}
