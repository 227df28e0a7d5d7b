use std::path::Path;

use mtlab::harness::{run_experiment, ExperimentConfig, Scenario, PIVOT, ZERO};

fn tiny(scenario: Scenario, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { scenario, out_dir: out.to_path_buf(), ..ExperimentConfig::default() };
    cfg.world.mono_sentences = 100;
    cfg.world.parallel_total = 200;
    cfg.world.parallel_sentences = 50;
    cfg.world.test_sentences = 10;
    cfg.model.d_model = 16;
    cfg.model.d_ff = 32;
    cfg.train.steps = 4;
    cfg.train.batch.batch_tokens = 256;
    cfg.ibt.steps = 2;
    cfg.ibt.refresh_every = 2;
    cfg.ibt.pool_size = 10;
    cfg.seeds = vec![1];
    cfg
}

#[test]
fn second_run_reuses_cached_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Scenario::E1, dir.path());
    let first = run_experiment(&cfg, |_| {}).unwrap();
    assert!(first.timings.iter().all(|t| !t.cached));
    let bytes = std::fs::read(&first.csv).unwrap();
    let second = run_experiment(&cfg, |_| {}).unwrap();
    assert!(second.timings.iter().filter(|t| t.stage != "eval").all(|t| t.cached));
    assert_eq!(std::fs::read(&second.csv).unwrap(), bytes);
    for run in ["supervised", "zero", "no_mono"] {
        assert!(first.rows.iter().any(|r| r.run == run && r.src_lang == ZERO && r.tgt_lang == PIVOT));
    }
    assert!(first.rows.iter().any(|r| r.run == "zero" && r.stage == "ibt"));
}

#[test]
fn scenarios_share_stage_one_models() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&tiny(Scenario::E1, dir.path()), |_| {}).unwrap();
    let e7 = run_experiment(&tiny(Scenario::E7, dir.path()), |_| {}).unwrap();
    let cotrain = e7.timings.iter().find(|t| t.run == "cotrain" && t.stage == "stage1").unwrap();
    assert!(cotrain.cached);
}

#[test]
fn scatter_scenario_writes_a_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Scenario::F2, dir.path());
    let r = run_experiment(&cfg, |_| {}).unwrap();
    let svg = std::fs::read_to_string(cfg.scenario_dir().join("scatter.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(r.rows.iter().any(|x| x.src_lang == "b3"));
    assert!(cfg.scenario_dir().join("timings.csv").exists());
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Scenario::E2, dir.path());
    cfg.seeds.clear();
    assert!(run_experiment(&cfg, |_| {}).is_err());
    assert!(!cfg.scenario_dir().join("results.csv").exists());
}
