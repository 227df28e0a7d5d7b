//! Iterative back-translation: synthetic pairs from monolingual text, their
//! filtering, and the fine-tuning loop that mixes them with the original
//! tasks.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ParallelExample;
use crate::error::{Error, IoContext, Result};
use crate::model::{train_step, translate, DecodeMode, Model, OptimizerState};
use crate::sampler::{make_batch, BatchParams, SamplingSchedule, Task, TaskData};
use crate::tokenizer::Vocabulary;
use crate::util::{sample_cdf, unit_f64, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Synthetic source, genuine target.
    BackTranslation,
    /// Genuine source, synthetic target.
    SelfTraining,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::BackTranslation => "back_translation",
            Provenance::SelfTraining => "self_training",
        })
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "back_translation" => Ok(Provenance::BackTranslation),
            "self_training" => Ok(Provenance::SelfTraining),
            _ => Err(Error::Parse(format!("unknown provenance {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPair {
    pub pair: ParallelExample,
    pub provenance: Provenance,
    pub decode_mode: String,
    pub model_step: u64,
    /// Whether the model emitted EOS for the synthetic side.
    pub terminated: bool,
}

impl SyntheticPair {
    pub fn genuine(&self) -> &str {
        match self.provenance {
            Provenance::BackTranslation => &self.pair.tgt_text,
            Provenance::SelfTraining => &self.pair.src_text,
        }
    }

    pub fn synthetic(&self) -> &str {
        match self.provenance {
            Provenance::BackTranslation => &self.pair.src_text,
            Provenance::SelfTraining => &self.pair.tgt_text,
        }
    }
}

pub fn mode_label(mode: &DecodeMode) -> String {
    match mode {
        DecodeMode::Greedy => "greedy".into(),
        DecodeMode::Beam { k, alpha } => format!("beam{k}@{alpha}"),
    }
}

/// Translate genuine `mono_lang` lines into `other_lang` and emit one pair
/// per requested provenance. Lines the model cannot decode are counted and
/// skipped.
pub fn generate_synthetic(
    model: &Model<f32>,
    vocab: &Vocabulary,
    mono: &[String],
    mono_lang: &str,
    other_lang: &str,
    mode: DecodeMode,
    provenances: &[Provenance],
    chunk: usize,
    model_step: u64,
) -> Result<(Vec<SyntheticPair>, usize)> {
    let mut out = Vec::with_capacity(mono.len() * provenances.len());
    let mut failed = 0;
    let label = mode_label(&mode);
    for part in mono.chunks(chunk.max(1)) {
        let texts: Vec<&str> = part.iter().map(String::as_str).collect();
        let translations = match translate(model, vocab, &texts, other_lang, mode, chunk) {
            Ok(t) => t,
            Err(Error::UnknownLanguage(l)) => return Err(Error::UnknownLanguage(l)),
            Err(Error::TokenOutOfRange { .. }) | Err(Error::InvalidArgument(_)) => {
                failed += part.len();
                continue;
            }
            Err(e) => return Err(e),
        };
        for (genuine, t) in part.iter().zip(translations) {
            if t.text.trim().is_empty() {
                failed += 1;
                continue;
            }
            for &p in provenances {
                let pair = match p {
                    Provenance::BackTranslation => ParallelExample {
                        src_lang: other_lang.into(),
                        tgt_lang: mono_lang.into(),
                        src_text: t.text.clone(),
                        tgt_text: genuine.clone(),
                    },
                    Provenance::SelfTraining => ParallelExample {
                        src_lang: mono_lang.into(),
                        tgt_lang: other_lang.into(),
                        src_text: genuine.clone(),
                        tgt_text: t.text.clone(),
                    },
                };
                out.push(SyntheticPair {
                    pair,
                    provenance: p,
                    decode_mode: label.clone(),
                    model_step,
                    terminated: t.terminated,
                });
            }
        }
    }
    Ok((out, failed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFilterRules {
    /// A single token may make up at most this share of the output.
    pub max_token_share: f64,
    /// A 2-gram repeated back to back this many times marks a loop.
    pub max_bigram_run: usize,
    pub min_length_ratio: f64,
    pub max_length_ratio: f64,
    pub drop_nonterminated: bool,
}

impl Default for SyntheticFilterRules {
    fn default() -> Self {
        SyntheticFilterRules {
            max_token_share: 0.4,
            max_bigram_run: 4,
            min_length_ratio: 1.0 / 3.0,
            max_length_ratio: 3.0,
            drop_nonterminated: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub kept: usize,
    pub dropped_copy: usize,
    pub dropped_repetition: usize,
    pub dropped_length_ratio: usize,
    pub dropped_nonterminated: usize,
}

impl FilterReport {
    pub fn dropped(&self) -> usize {
        self.dropped_copy + self.dropped_repetition + self.dropped_length_ratio + self.dropped_nonterminated
    }

    pub fn is_balanced(&self) -> bool {
        self.kept + self.dropped() == self.total
    }

    pub fn add(&mut self, o: &FilterReport) {
        self.total += o.total;
        self.kept += o.kept;
        self.dropped_copy += o.dropped_copy;
        self.dropped_repetition += o.dropped_repetition;
        self.dropped_length_ratio += o.dropped_length_ratio;
        self.dropped_nonterminated += o.dropped_nonterminated;
    }
}

impl fmt::Display for FilterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total\t{}", self.total)?;
        writeln!(f, "kept\t{}", self.kept)?;
        writeln!(f, "dropped_copy\t{}", self.dropped_copy)?;
        writeln!(f, "dropped_repetition\t{}", self.dropped_repetition)?;
        writeln!(f, "dropped_length_ratio\t{}", self.dropped_length_ratio)?;
        writeln!(f, "dropped_nonterminated\t{}", self.dropped_nonterminated)
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// Whether a token sequence looks like a decoding loop.
pub fn is_repetitive(tokens: &[&str], rules: &SyntheticFilterRules) -> bool {
    if tokens.is_empty() {
        return false;
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t).or_default() += 1;
    }
    let max = *counts.values().max().unwrap();
    if max as f64 > rules.max_token_share * tokens.len() as f64 {
        return true;
    }
    // back-to-back repeats of the 2-gram starting at each offset
    let run = rules.max_bigram_run.max(1);
    for start in 0..tokens.len().saturating_sub(1) {
        let mut reps = 1;
        let mut i = start + 2;
        while i + 2 <= tokens.len() && tokens[i..i + 2] == tokens[start..start + 2] {
            reps += 1;
            i += 2;
        }
        if reps >= run {
            return true;
        }
    }
    false
}

/// Drop copies, loops, implausible length ratios and unfinished outputs,
/// checked in that order.
pub fn filter_synthetic(pairs: Vec<SyntheticPair>, rules: &SyntheticFilterRules) -> (Vec<SyntheticPair>, FilterReport) {
    let mut report = FilterReport {
        total: pairs.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(pairs.len());
    for p in pairs {
        let src: Vec<&str> = p.pair.src_text.split_whitespace().collect();
        let tgt: Vec<&str> = p.pair.tgt_text.split_whitespace().collect();
        let out: Vec<&str> = p.synthetic().split_whitespace().collect();
        if normalize(&p.pair.src_text) == normalize(&p.pair.tgt_text) {
            report.dropped_copy += 1;
        } else if is_repetitive(&out, rules) {
            report.dropped_repetition += 1;
        } else if src.is_empty() || {
            let r = tgt.len() as f64 / src.len() as f64;
            r < rules.min_length_ratio || r > rules.max_length_ratio
        } {
            report.dropped_length_ratio += 1;
        } else if rules.drop_nonterminated && !p.terminated {
            report.dropped_nonterminated += 1;
        } else {
            kept.push(p);
        }
    }
    report.kept = kept.len();
    (kept, report)
}

/// Write `<stem>.tsv` with the pairs and `<stem>.provenance.tsv` alongside.
pub fn save_pool(stem: &Path, pairs: &[SyntheticPair]) -> Result<()> {
    let mut body = String::new();
    let mut side = String::from("provenance\tsrc_lang\ttgt_lang\tdecode_mode\tmodel_step\tterminated\n");
    for p in pairs {
        body.push_str(&format!("{}\t{}\n", p.pair.src_text, p.pair.tgt_text));
        side.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            p.provenance, p.pair.src_lang, p.pair.tgt_lang, p.decode_mode, p.model_step, p.terminated
        ));
    }
    let a = stem.with_extension("tsv");
    let b = stem.with_extension("provenance.tsv");
    fs::write(&a, body).at(&a)?;
    fs::write(&b, side).at(&b)
}

pub fn load_pool(stem: &Path) -> Result<Vec<SyntheticPair>> {
    let a = stem.with_extension("tsv");
    let b = stem.with_extension("provenance.tsv");
    let body = fs::read_to_string(&a).at(&a)?;
    let side = fs::read_to_string(&b).at(&b)?;
    let mut out = Vec::new();
    let mut meta = side.lines().skip(1);
    for (i, line) in body.lines().enumerate() {
        let bad = || Error::Parse(format!("{}: malformed line {}", a.display(), i + 1));
        let (s, t) = line.split_once('\t').ok_or_else(bad)?;
        let m: Vec<&str> = meta.next().ok_or_else(bad)?.split('\t').collect();
        if m.len() != 6 {
            return Err(bad());
        }
        out.push(SyntheticPair {
            pair: ParallelExample {
                src_lang: m[1].into(),
                tgt_lang: m[2].into(),
                src_text: s.into(),
                tgt_text: t.into(),
            },
            provenance: m[0].parse()?,
            decode_mode: m[3].into(),
            model_step: m[4].parse().map_err(|_| bad())?,
            terminated: m[5].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Fine-tune mixture weights; they need not sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub back_translation: f64,
    pub self_training: f64,
    pub parallel: f64,
    pub mass: f64,
}

impl Default for Mixture {
    fn default() -> Self {
        Mixture {
            back_translation: 0.25,
            self_training: 0.25,
            parallel: 0.25,
            mass: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbtConfig {
    pub steps: u64,
    pub refresh_every: u64,
    pub mixture: Mixture,
    pub decode: DecodeMode,
    pub filter: SyntheticFilterRules,
    pub batch: BatchParams,
    /// Mono sentences translated per language and refresh.
    pub pool_size: usize,
    pub chunk: usize,
}

impl Default for IbtConfig {
    fn default() -> Self {
        IbtConfig {
            steps: 2000,
            refresh_every: 500,
            mixture: Mixture::default(),
            decode: DecodeMode::Greedy,
            filter: SyntheticFilterRules::default(),
            batch: BatchParams {
                batch_tokens: 1024,
                max_len: 40,
                ..BatchParams::default()
            },
            pool_size: 2000,
            chunk: 64,
        }
    }
}

/// Everything the fine-tune stage reads.
pub struct IbtInputs<'a> {
    pub vocab: &'a Vocabulary,
    pub pivot: &'a str,
    /// Cleaned mono text of each zero-resource language, for generation.
    pub clean_mono: &'a BTreeMap<String, Vec<String>>,
    /// Cleaned pivot text, back-translated into each zero-resource
    /// language; may be empty.
    pub pivot_mono: &'a [String],
    /// Original parallel and (raw) mono tasks.
    pub data: &'a TaskData,
    pub schedule: &'a SamplingSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshRecord {
    pub step: u64,
    /// Direction the pairs train.
    pub src_lang: String,
    pub tgt_lang: String,
    pub provenance: Provenance,
    pub report: FilterReport,
    pub decode_failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IbtOutcome {
    pub refreshes: Vec<RefreshRecord>,
    pub warnings: Vec<String>,
    pub losses: Vec<f64>,
}

/// Regenerate and filter the synthetic pools with the current model.
fn refresh(
    model: &Model<f32>,
    inputs: &IbtInputs,
    cfg: &IbtConfig,
    step: u64,
    out: &mut IbtOutcome,
) -> Result<[TaskData; 2]> {
    let mut pools = [TaskData::default(), TaskData::default()];
    let both = [Provenance::BackTranslation, Provenance::SelfTraining];
    for (lang, lines) in inputs.clean_mono {
        // genuine zero-resource text, then genuine pivot text
        let mut jobs = vec![(lang.as_str(), inputs.pivot, lines.as_slice(), &both[..])];
        if !inputs.pivot_mono.is_empty() {
            jobs.push((inputs.pivot, lang.as_str(), inputs.pivot_mono, &both[..1]));
        }
        for (mono_lang, other, lines, provs) in jobs {
            let take = &lines[..lines.len().min(cfg.pool_size)];
            let (pairs, failed) =
                generate_synthetic(model, inputs.vocab, take, mono_lang, other, cfg.decode, provs, cfg.chunk, step)?;
            for &prov in provs {
                let slot = prov as usize;
                let mine: Vec<SyntheticPair> = pairs.iter().filter(|p| p.provenance == prov).cloned().collect();
                let (kept, report) = filter_synthetic(mine, &cfg.filter);
                let (src, tgt) = match prov {
                    Provenance::BackTranslation => (other, mono_lang),
                    Provenance::SelfTraining => (mono_lang, other),
                };
                if kept.is_empty() {
                    out.warnings.push(format!(
                        "step {step}: every {prov} pair for {src}->{tgt} was filtered out; its weight is redistributed"
                    ));
                } else {
                    let rows = kept
                        .iter()
                        .map(|p| (inputs.vocab.encode_text(&p.pair.src_text), inputs.vocab.encode_text(&p.pair.tgt_text)))
                        .collect();
                    pools[slot].add_directed(src, tgt, rows);
                }
                out.refreshes.push(RefreshRecord {
                    step,
                    src_lang: src.into(),
                    tgt_lang: tgt.into(),
                    provenance: prov,
                    report,
                    decode_failures: failed,
                });
            }
        }
    }
    Ok(pools)
}

fn pool_tasks(pool: &TaskData) -> Vec<Task> {
    pool.parallel
        .iter()
        .filter(|(_, rows)| !rows.is_empty())
        .map(|((s, t), _)| Task::Translation { src: s.clone(), tgt: t.clone() })
        .collect()
}

fn draw<'a>(options: &'a [(Task, f64)], rng: &mut Rng) -> &'a Task {
    let total: f64 = options.iter().map(|o| o.1).sum();
    let mut acc = 0.0;
    let cdf: Vec<f64> = options
        .iter()
        .map(|o| {
            acc += o.1 / total;
            acc
        })
        .collect();
    &options[sample_cdf(&cdf, unit_f64(rng))].0
}

/// Fine-tune with online back-translation and self-training mixed with the
/// original parallel and MASS tasks. Pools are rebuilt every
/// `refresh_every` steps from the current model.
pub fn finetune_ibt(
    model: &mut Model<f32>,
    opt: &mut OptimizerState,
    inputs: &IbtInputs,
    cfg: &IbtConfig,
    rng: &mut Rng,
) -> Result<IbtOutcome> {
    let mut out = IbtOutcome::default();
    if cfg.steps == 0 {
        return Ok(out);
    }
    if cfg.refresh_every == 0 {
        return Err(Error::InvalidArgument("refresh_every must be positive".into()));
    }
    let m = &cfg.mixture;
    let weights = [m.back_translation, m.self_training, m.parallel, m.mass];
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument("mixture weights must be non-negative".into()));
    }
    let mut pools = [TaskData::default(), TaskData::default()];
    for i in 0..cfg.steps {
        if i % cfg.refresh_every == 0 {
            pools = refresh(model, inputs, cfg, opt.step, &mut out)?;
        }
        let options: [Vec<(Task, f64)>; 4] = [
            pool_tasks(&pools[0]).into_iter().map(|t| (t, 1.0)).collect(),
            pool_tasks(&pools[1]).into_iter().map(|t| (t, 1.0)).collect(),
            inputs.schedule.parallel_probs().to_vec(),
            inputs.schedule.mono_probs().to_vec(),
        ];
        let mut live: Vec<(usize, f64)> = (0..4)
            .filter(|&c| weights[c] > 0.0 && !options[c].is_empty())
            .map(|c| (c, weights[c]))
            .collect();
        if live.is_empty() {
            // every weighted pool is empty; keep training on the original tasks
            live = (2..4).filter(|&c| !options[c].is_empty()).map(|c| (c, 1.0)).collect();
            if live.is_empty() {
                return Err(Error::EmptyCorpus("no fine-tuning task has data".into()));
            }
            if i % cfg.refresh_every == 0 {
                out.warnings.push(format!("step {}: no weighted task has data; using the original tasks", opt.step));
            }
        }
        let total: f64 = live.iter().map(|l| l.1).sum();
        let mut acc = 0.0;
        let cdf: Vec<f64> = live
            .iter()
            .map(|l| {
                acc += l.1 / total;
                acc
            })
            .collect();
        let cat = live[sample_cdf(&cdf, unit_f64(rng))].0;
        let task = draw(&options[cat], rng).clone();
        let data = if cat < 2 { &pools[cat] } else { inputs.data };
        let batch = make_batch(&task, data, &cfg.batch, rng, inputs.vocab)?;
        let stats = train_step(model, opt, &batch, rng)?;
        out.losses.push(stats.loss);
    }
    Ok(out)
}
