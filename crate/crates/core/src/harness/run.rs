//! One sub-run: build its corpus, train (or reuse) the stage-1 model,
//! optionally fine-tune with IBT, and score the zero-resource pairs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::text::{PreparedData, TextCorpus};
use super::world::{DeskWorld, PIVOT};
use super::{ExperimentConfig, ResultRow};
use crate::corpus::{CorpusManifest, MonoEntry, ParallelEntry, World};
use crate::error::{Error, IoContext, Result};
use crate::eval::{eval_report, ModelTranslator, TestSet};
use crate::model::{Checkpoint, Model, OptimizerState};
use crate::selftrain::{finetune_ibt, IbtConfig, IbtInputs, Mixture};
use crate::tokenizer::{train_vocab, VocabMode, Vocabulary};
use crate::train::train_loop;
use crate::util::{derive_seed, rng_from_seed, sha256_hex, Rng, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// MASS and translation sampled together from the first step.
    CoTrain,
    /// MASS only for the first half of the steps, translation only after.
    PretrainFinetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub name: String,
    pub seed: u64,
    /// Languages paired with the pivot, with pair counts.
    pub supervised: Vec<(String, usize)>,
    /// Languages with mono data, with sentence counts.
    pub mono: Vec<(String, usize)>,
    pub parallel_domain: String,
    pub mono_domain: String,
    pub eval_domain: String,
    pub recipe: Recipe,
    /// Fine-tune after stage 1 with this mixture.
    pub ibt: Option<Mixture>,
    /// Languages scored against the pivot in both directions.
    pub evaluate: Vec<String>,
}

impl RunSpec {
    /// Co-training on news with every supervised and mono language also
    /// getting mono data, plus pivot mono.
    pub fn cotrain(name: &str, seed: u64, supervised: &[(&str, usize)], extra_mono: &[&str], mono_n: usize) -> RunSpec {
        let mut mono: Vec<(String, usize)> = vec![(PIVOT.to_string(), mono_n)];
        mono.extend(supervised.iter().map(|(l, _)| (l.to_string(), mono_n)));
        mono.extend(extra_mono.iter().map(|l| (l.to_string(), mono_n)));
        RunSpec {
            name: name.into(),
            seed,
            supervised: supervised.iter().map(|(l, n)| (l.to_string(), *n)).collect(),
            mono,
            parallel_domain: "news".into(),
            mono_domain: "news".into(),
            eval_domain: "news".into(),
            recipe: Recipe::CoTrain,
            ibt: None,
            evaluate: vec![super::world::ZERO.into()],
        }
    }

    pub fn mono_size(&self, lang: &str) -> usize {
        self.mono.iter().find(|(l, _)| l == lang).map_or(0, |(_, n)| *n)
    }

    fn training_manifest(&self, base: &CorpusManifest) -> CorpusManifest {
        let mut m = base.clone();
        let mut mono: Vec<_> = self.mono.iter().filter(|(_, n)| *n > 0).collect();
        mono.sort();
        m.mono = mono
            .into_iter()
            .map(|(l, n)| MonoEntry::new(l, &self.mono_domain, *n, "train"))
            .collect();
        let mut sup: Vec<_> = self.supervised.iter().filter(|(_, n)| *n > 0).collect();
        sup.sort();
        m.parallel = sup
            .into_iter()
            .map(|(l, n)| ParallelEntry::new(l, PIVOT, &self.parallel_domain, *n, "train"))
            .collect();
        m
    }
}

struct RunCorpus {
    text: TextCorpus,
    tests: Vec<TestSet>,
}

fn build_corpus(world: &World, spec: &RunSpec, test_sentences: usize) -> Result<RunCorpus> {
    let text = TextCorpus::generate(world)?;
    let mut tests = Vec::new();
    for lang in &spec.evaluate {
        let entry = ParallelEntry::new(lang, PIVOT, &spec.eval_domain, test_sentences, "test");
        let (xs, ps): (Vec<String>, Vec<String>) = world.parallel_lines(&entry)?.into_iter().unzip();
        tests.push(TestSet { src_lang: lang.clone(), tgt_lang: PIVOT.into(), sources: xs.clone(), references: ps.clone() });
        tests.push(TestSet { src_lang: PIVOT.into(), tgt_lang: lang.clone(), sources: ps, references: xs });
    }
    Ok(RunCorpus { text, tests })
}

struct Prepared {
    vocab: Vocabulary,
    data: PreparedData,
}

fn prepare(corpus: &RunCorpus, vocab_size: usize) -> Result<Prepared> {
    let vocab = train_vocab(corpus.text.lines(), &DeskWorld::languages(), vocab_size, VocabMode::Word)?;
    let data = corpus.text.task_data(&vocab);
    Ok(Prepared { vocab, data })
}

/// Wall-clock cost of one stage of a sub-run. For cached stages this is
/// the time recorded when the stage was first computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub run: String,
    pub seed: u64,
    /// `stage1`, `ibt` or `eval`.
    pub stage: String,
    pub seconds: f64,
    pub cached: bool,
}

const TIMING_FILE: &str = "timing.json";

/// A trained model with the state needed to keep training it.
pub(crate) struct Trained {
    pub model: Model<f32>,
    pub opt: OptimizerState,
    pub rng: Rng,
}

fn save_stage(dir: &Path, t: &Trained, vocab: &Vocabulary, seconds: f64) -> Result<()> {
    let tmp = dir.with_extension("tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).at(&tmp)?;
    }
    Checkpoint {
        model: t.model.clone(),
        opt: t.opt.clone(),
        rng: Some(RngState::capture(&t.rng)),
        vocab_hash: vocab.hash(),
    }
    .save(&tmp)?;
    let tp = tmp.join(TIMING_FILE);
    fs::write(&tp, serde_json::json!({ "seconds": seconds }).to_string()).at(&tp)?;
    if dir.exists() {
        fs::remove_dir_all(dir).at(dir)?;
    }
    fs::rename(&tmp, dir).at(dir)
}

fn recorded_seconds(dir: &Path) -> f64 {
    fs::read_to_string(dir.join(TIMING_FILE))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["seconds"].as_f64())
        .unwrap_or(0.0)
}

fn load_stage(dir: &Path, vocab: &Vocabulary) -> Result<Option<Trained>> {
    if !dir.join("manifest.json").exists() {
        return Ok(None);
    }
    let c = Checkpoint::load(dir, Some(&vocab.hash()))?;
    let rng = c
        .rng
        .and_then(|r| r.restore())
        .ok_or_else(|| Error::Checkpoint(format!("{} has no rng state", dir.display())))?;
    Ok(Some(Trained { model: c.model, opt: c.opt, rng }))
}

fn key(parts: &impl Serialize) -> Result<String> {
    let json = serde_json::to_vec(parts).map_err(|e| Error::Config(e.to_string()))?;
    Ok(sha256_hex(&json)[..16].to_string())
}

fn stage1(cfg: &ExperimentConfig, spec: &RunSpec, p: &Prepared, log: &mut dyn FnMut(String)) -> Result<Trained> {
    let model_cfg = crate::model::ModelConfig {
        vocab_size: p.vocab.len(),
        seed: derive_seed(spec.seed, "init"),
        ..cfg.model.clone()
    };
    let mut model = Model::init(&model_cfg)?;
    let mut opt = OptimizerState::new(cfg.train.optim.clone(), model.num_params());
    let mut rng = rng_from_seed(derive_seed(spec.seed, "train"));
    let steps = cfg.train.steps;
    let phases: Vec<(u64, f64)> = match spec.recipe {
        Recipe::CoTrain => vec![(steps, cfg.mono_fraction)],
        Recipe::PretrainFinetune => vec![(steps / 2, 1.0), (steps - steps / 2, 0.0)],
    };
    let every = (steps / 10).max(1);
    let mut acc = 0.0;
    let start = Instant::now();
    for (n, fraction) in phases {
        let sched = p.data.schedule(cfg.temperature, fraction)?;
        train_loop(&mut model, &mut opt, &sched, &p.data.data, &p.vocab, &cfg.train.batch, n, &mut rng, |r| {
            acc += r.stats.loss;
            if r.step % every == 0 {
                log(format!(
                    "{} step {} loss {:.4} ({:.0}s)",
                    spec.name,
                    r.step,
                    acc / every as f64,
                    start.elapsed().as_secs_f64()
                ));
                acc = 0.0;
            }
        })?;
    }
    Ok(Trained { model, opt, rng })
}

fn ibt(
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    mix: Mixture,
    corpus: &RunCorpus,
    p: &Prepared,
    t: &mut Trained,
    log: &mut dyn FnMut(String),
) -> Result<()> {
    // languages without mono data still get pivot-side back-translation
    let clean: BTreeMap<String, Vec<String>> = spec
        .evaluate
        .iter()
        .map(|l| (l.clone(), corpus.text.mono.get(l).cloned().unwrap_or_default()))
        .collect();
    let pivot_mono = corpus.text.mono.get(PIVOT).cloned().unwrap_or_default();
    if pivot_mono.is_empty() && clean.values().all(Vec::is_empty) {
        return Err(Error::Config(format!("{}: IBT needs mono data", spec.name)));
    }
    let sched = p.data.schedule(cfg.temperature, cfg.mono_fraction)?;
    let inputs = IbtInputs {
        vocab: &p.vocab,
        pivot: PIVOT,
        clean_mono: &clean,
        pivot_mono: &pivot_mono,
        data: &p.data.data,
        schedule: &sched,
    };
    let ibt_cfg = IbtConfig { mixture: mix, ..cfg.ibt.clone() };
    let start = Instant::now();
    let out = finetune_ibt(&mut t.model, &mut t.opt, &inputs, &ibt_cfg, &mut t.rng)?;
    for r in &out.refreshes {
        log(format!(
            "{} ibt refresh at {}: {} {}->{} kept {}/{}",
            spec.name, r.step, r.provenance, r.src_lang, r.tgt_lang, r.report.kept, r.report.total
        ));
    }
    for w in &out.warnings {
        log(format!("{} warning: {w}", spec.name));
    }
    log(format!("{} ibt done ({:.0}s)", spec.name, start.elapsed().as_secs_f64()));
    Ok(())
}

/// Where cached stage outputs live under the output root.
pub fn cache_dir(out: &Path) -> PathBuf {
    out.join("cache")
}

pub(crate) fn execute(
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    config_hash: &str,
    log: &mut dyn FnMut(String),
) -> Result<(Vec<ResultRow>, Vec<Timing>)> {
    let base = cfg.world.manifest();
    let manifest = spec.training_manifest(&base);
    let world = World::new(manifest.clone())?;
    let corpus = build_corpus(&world, spec, cfg.world.test_sentences)?;
    let p = prepare(&corpus, cfg.vocab_size)?;
    let mut timings = Vec::new();
    let timing = |stage: &str, seconds: f64, cached: bool| Timing {
        run: spec.name.clone(),
        seed: spec.seed,
        stage: stage.into(),
        seconds,
        cached,
    };

    let stage_key = key(&(
        "stage1",
        &manifest,
        spec.seed,
        spec.recipe,
        &cfg.model,
        &cfg.train,
        cfg.temperature,
        cfg.mono_fraction,
        cfg.vocab_size,
    ))?;
    let cache = cache_dir(&cfg.out_dir);
    let dir = cache.join(format!("stage1-{stage_key}"));
    let mut trained = match load_stage(&dir, &p.vocab)? {
        Some(t) => {
            log(format!("{} stage 1 from cache {}", spec.name, dir.display()));
            timings.push(timing("stage1", recorded_seconds(&dir), true));
            t
        }
        None => {
            let start = Instant::now();
            let t = stage1(cfg, spec, &p, log)?;
            let secs = start.elapsed().as_secs_f64();
            save_stage(&dir, &t, &p.vocab, secs)?;
            timings.push(timing("stage1", secs, false));
            t
        }
    };
    let start = Instant::now();
    let mut rows = score(cfg, spec, "stage1", &trained.model, &p.vocab, &corpus.tests, config_hash)?;
    timings.push(timing("eval", start.elapsed().as_secs_f64(), false));

    if let Some(mix) = spec.ibt {
        let ibt_key = key(&("ibt", &stage_key, &spec.evaluate, &cfg.ibt, mix))?;
        let dir = cache.join(format!("ibt-{ibt_key}"));
        trained = match load_stage(&dir, &p.vocab)? {
            Some(t) => {
                log(format!("{} IBT from cache {}", spec.name, dir.display()));
                timings.push(timing("ibt", recorded_seconds(&dir), true));
                t
            }
            None => {
                let start = Instant::now();
                ibt(cfg, spec, mix, &corpus, &p, &mut trained, log)?;
                let secs = start.elapsed().as_secs_f64();
                save_stage(&dir, &trained, &p.vocab, secs)?;
                timings.push(timing("ibt", secs, false));
                trained
            }
        };
        let start = Instant::now();
        rows.extend(score(cfg, spec, "ibt", &trained.model, &p.vocab, &corpus.tests, config_hash)?);
        timings.push(timing("eval", start.elapsed().as_secs_f64(), false));
    }
    Ok((rows, timings))
}

fn score(
    cfg: &ExperimentConfig,
    spec: &RunSpec,
    stage: &str,
    model: &Model<f32>,
    vocab: &Vocabulary,
    tests: &[TestSet],
    config_hash: &str,
) -> Result<Vec<ResultRow>> {
    let translator = ModelTranslator { model, vocab, mode: cfg.eval.decode, chunk: cfg.eval.chunk };
    let report = eval_report(&translator, tests, &cfg.eval.decode.to_string(), stage, cfg.eval.smooth)?;
    let mut rows = Vec::new();
    for r in report.rows {
        let zero = if r.src_lang == PIVOT { &r.tgt_lang } else { &r.src_lang };
        for (metric, value) in [("bleu", r.bleu), ("chrf", r.chrf)] {
            rows.push(ResultRow {
                scenario: cfg.scenario.to_string(),
                run: spec.name.clone(),
                stage: stage.into(),
                seed: spec.seed,
                config_hash: config_hash.into(),
                src_lang: r.src_lang.clone(),
                tgt_lang: r.tgt_lang.clone(),
                metric: metric.into(),
                value,
                mono_size: spec.mono_size(zero),
                sentences: r.sentences,
            });
        }
    }
    Ok(rows)
}
