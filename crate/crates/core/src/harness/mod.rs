//! Named experiment scenarios over the desk world, written out as CSV.

mod plot;
mod run;
mod scenarios;
mod text;
mod world;

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::model::{DecodeMode, ModelConfig, OptimConfig};
use crate::sampler::BatchParams;
use crate::selftrain::IbtConfig;
use crate::train::TrainConfig;
use crate::util::sha256_hex;

pub use plot::{plot_scatter, ScatterSpec};
pub use run::{cache_dir, Recipe, RunSpec, Timing};
pub use text::{PreparedData, TextCorpus};
pub use scenarios::{ibt_only, subruns, zero_resource};
pub use world::{DeskWorld, FAMILY_A, FAMILY_B, PIVOT, SUPERVISED_ORDER, ZERO};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MTLAB_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
pub enum Scenario {
    /// Zero-resource vs supervised, with and without the language's mono data.
    #[value(name = "E1", alias = "e1")]
    E1,
    /// Number of supervised languages at a fixed total of parallel pairs.
    #[value(name = "E2", alias = "e2")]
    E2,
    /// Supervised languages traded for mono-only ones.
    #[value(name = "E3", alias = "e3")]
    E3,
    /// Supervision from the same or another family.
    #[value(name = "E4", alias = "e4")]
    E4,
    /// Mono and parallel amounts.
    #[value(name = "E5", alias = "e5")]
    E5,
    /// Domain of the parallel and mono data.
    #[value(name = "E6", alias = "e6")]
    E6,
    /// Co-training vs pretrain-then-finetune, and IBT variants.
    #[value(name = "E7", alias = "e7")]
    E7,
    /// Score against mono size for several zero-resource languages.
    #[value(name = "F2", alias = "f2")]
    F2,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <Scenario as clap::ValueEnum>::from_str(s, true).map_err(|_| Error::Config(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub decode: DecodeMode,
    /// Add-epsilon BLEU smoothing, for small test sets.
    pub smooth: bool,
    pub chunk: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { decode: DecodeMode::Greedy, smooth: true, chunk: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub world: DeskWorld,
    /// `vocab_size` and `seed` are filled in per run.
    pub model: ModelConfig,
    /// Upper bound on the trained vocabulary.
    pub vocab_size: usize,
    pub train: TrainConfig,
    pub temperature: f64,
    pub mono_fraction: f64,
    pub ibt: IbtConfig,
    pub eval: EvalConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let batch = BatchParams { batch_tokens: 1024, max_len: 40, ..BatchParams::default() };
        ExperimentConfig {
            scenario: Scenario::E1,
            world: DeskWorld::default(),
            model: ModelConfig { d_model: 64, d_ff: 128, max_positions: 64, ..ModelConfig::desk(0) },
            vocab_size: 4000,
            train: TrainConfig {
                steps: 4000,
                batch,
                optim: OptimConfig { peak_lr: 3e-3, warmup_steps: 200, ..OptimConfig::default() },
            },
            temperature: 5.0,
            mono_fraction: 0.5,
            ibt: IbtConfig { steps: 2000, batch, ..IbtConfig::default() },
            eval: EvalConfig::default(),
            seeds: vec![1, 2],
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.temperature > 0.0) || !(0.0..=1.0).contains(&self.mono_fraction) {
            return Err(Error::Config("temperature must be positive and mono_fraction in [0, 1]".into()));
        }
        self.world.manifest().validate()?;
        ModelConfig { vocab_size: 16, ..self.model.clone() }.validate()
    }

    /// Hash of everything that affects results; the output directory is
    /// excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())[..16].to_string()
    }

    pub fn scenario_dir(&self) -> PathBuf {
        self.out_dir.join(self.scenario.to_string())
    }
}

/// One (sub-run, stage, direction, metric) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub run: String,
    /// `stage1` or `ibt`.
    pub stage: String,
    pub seed: u64,
    pub config_hash: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub metric: String,
    pub value: f64,
    /// Mono sentences of the non-pivot language of the pair.
    pub mono_size: usize,
    pub sentences: usize,
}

pub const RESULT_CSV_HEADER: &str = "scenario,run,stage,seed,config_hash,src_lang,tgt_lang,metric,value,mono_size,sentences";

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.4},{},{}",
            r.scenario, r.run, r.stage, r.seed, r.config_hash, r.src_lang, r.tgt_lang, r.metric, r.value, r.mono_size, r.sentences
        );
    }
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULT_CSV_HEADER => {}
        _ => return Err(Error::Parse("result CSV header missing or unexpected".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse(format!("result CSV line {}: {line:?}", i + 2));
        if f.len() != 11 {
            return Err(bad());
        }
        rows.push(ResultRow {
            scenario: f[0].into(),
            run: f[1].into(),
            stage: f[2].into(),
            seed: f[3].parse().map_err(|_| bad())?,
            config_hash: f[4].into(),
            src_lang: f[5].into(),
            tgt_lang: f[6].into(),
            metric: f[7].into(),
            value: f[8].parse().map_err(|_| bad())?,
            mono_size: f[9].parse().map_err(|_| bad())?,
            sentences: f[10].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// Value of one measurement, if present.
pub fn lookup(rows: &[ResultRow], run: &str, stage: &str, seed: u64, src: &str, tgt: &str, metric: &str) -> Option<f64> {
    rows.iter()
        .find(|r| r.run == run && r.stage == stage && r.seed == seed && r.src_lang == src && r.tgt_lang == tgt && r.metric == metric)
        .map(|r| r.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<Timing>,
    pub csv: PathBuf,
}

/// Run every sub-run of the scenario. Stage-1 and IBT models are cached
/// under `out_dir/cache` and shared between scenarios. On failure the rows
/// gathered so far are written to `results.partial.csv`.
pub fn run_experiment(cfg: &ExperimentConfig, mut log: impl FnMut(&str)) -> Result<ExperimentResult> {
    cfg.validate()?;
    let dir = cfg.scenario_dir();
    fs::create_dir_all(&dir).at(&dir)?;
    let cfg_path = dir.join("config.toml");
    fs::write(&cfg_path, cfg.to_toml()).at(&cfg_path)?;
    let hash = cfg.hash();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut sink = |line: String| log(&line);
    for spec in subruns(cfg) {
        sink(format!("{} {} seed {}", cfg.scenario, spec.name, spec.seed));
        match run::execute(cfg, &spec, &hash, &mut sink) {
            Ok((r, t)) => {
                rows.extend(r);
                timings.extend(t);
            }
            Err(e) => {
                let partial = dir.join("results.partial.csv");
                fs::write(&partial, rows_to_csv(&rows)).at(&partial)?;
                return Err(Error::Experiment {
                    scenario: cfg.scenario.to_string(),
                    subrun: spec.name,
                    reason: e.to_string(),
                });
            }
        }
    }
    let csv = dir.join("results.csv");
    fs::write(&csv, rows_to_csv(&rows)).at(&csv)?;
    let stale = dir.join("results.partial.csv");
    if stale.exists() {
        fs::remove_file(&stale).at(&stale)?;
    }
    if cfg.scenario == Scenario::F2 {
        let svg = dir.join("scatter.svg");
        plot_scatter(&rows, &ScatterSpec { metric: "bleu".into(), target: Some(PIVOT.into()) }, &svg)?;
    }
    let mut t = String::from("run,seed,stage,seconds,cached\n");
    for x in &timings {
        let _ = writeln!(t, "{},{},{},{:.1},{}", x.run, x.seed, x.stage, x.seconds, x.cached);
    }
    let tp = dir.join("timings.csv");
    fs::write(&tp, t).at(&tp)?;
    Ok(ExperimentResult { rows, timings, csv })
}

/// Read a results CSV from disk.
pub fn load_rows(path: &Path) -> Result<Vec<ResultRow>> {
    rows_from_csv(&fs::read_to_string(path).at(path)?)
}
