use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mtlab::corpus::{build_corpus, ingest_external, CorpusManifest, Example, Layout};
use mtlab::datafilter::{filter_mono, tfiif_wordlist, train_langid, FilterMode, MonoFilterRules, DEFAULT_SMOOTHING};
use mtlab::eval::{eval_report, ModelTranslator, TestSet};
use mtlab::harness::{
    load_rows, plot_scatter, run_experiment, DeskWorld, ExperimentConfig, Scenario, ScatterSpec, TextCorpus, OUT_ENV,
    PIVOT,
};
use mtlab::model::{Checkpoint, DecodeMode, Model, ModelConfig, OptimizerState};
use mtlab::selftrain::{finetune_ibt, IbtInputs};
use mtlab::tokenizer::{train_vocab, VocabMode, Vocabulary};
use mtlab::train::train_loop;
use mtlab::util::{derive_seed, rng_from_seed, RngState};
use mtlab::{Error, Result};

#[derive(Parser)]
#[command(name = "mtlab", version, about = "Desk-scale multilingual NMT laboratory")]
struct Cli {
    /// Output root; defaults to $MTLAB_OUT, then ./out.
    #[arg(long, global = true, env = OUT_ENV)]
    out_root: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate or ingest corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Train vocabularies.
    #[command(subcommand)]
    Vocab(VocabCmd),
    /// Stage-1 training on a corpus directory.
    Train(TrainArgs),
    /// Fine-tune a checkpoint with iterative back-translation.
    Ibt(IbtArgs),
    /// Clean a mono file with LangID and, in tight mode, a TF-IIF wordlist.
    Filter(FilterArgs),
    /// Score a checkpoint on test files.
    Eval(EvalArgs),
    /// Run named scenarios.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Scatter plot of a results CSV.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Write every file of a manifest (the desk world with no manifest).
    Gen {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read external `<lang>.txt` or `<src>__<tgt>.tsv` files and report.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, value_parser = parse_layout)]
        layout: Layout,
    },
}

#[derive(Subcommand)]
enum VocabCmd {
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 4000)]
        size: usize,
        #[arg(long, default_value = "word")]
        mode: VocabMode,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config supplying model, optimizer and batch settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    steps: Option<u64>,
    /// Continue from this checkpoint instead of initializing.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IbtArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Zero-resource languages whose mono text feeds the pools.
    #[arg(long, required = true, value_delimiter = ',')]
    langs: Vec<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    /// Corpus directory whose train-split mono files train LangID and the wordlist.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    lang: String,
    #[arg(long, value_enum, default_value = "tight")]
    mode: FilterMode,
    #[arg(long, default_value_t = mtlab::datafilter::DEFAULT_COVERAGE)]
    coverage: f64,
    #[arg(long, default_value_t = mtlab::datafilter::DEFAULT_WORDLIST_SIZE)]
    wordlist_size: usize,
    #[arg(long)]
    dedup: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// `src:tgt:path` with `source<TAB>reference` lines; repeatable.
    #[arg(long = "test", required = true)]
    tests: Vec<String>,
    /// Beam width; greedy when absent.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long)]
    no_smooth: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    Run {
        #[arg(value_enum)]
        scenario: Scenario,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override stage-1 steps.
        #[arg(long)]
        steps: Option<u64>,
        /// Override IBT steps.
        #[arg(long)]
        ibt_steps: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Print the default configuration as TOML.
    Config,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value = "bleu")]
    metric: String,
    /// Plot only directions into this language.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_layout(s: &str) -> std::result::Result<Layout, String> {
    match s {
        "mono" | "mono-lines" => Ok(Layout::MonoLines),
        "parallel" | "parallel-tsv" => Ok(Layout::ParallelTsv),
        _ => Err(format!("unknown layout {s:?} (mono-lines | parallel-tsv)")),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_toml(&fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_trained(dir: &Path, vocab: &Vocabulary) -> Result<(Model<f32>, OptimizerState, mtlab::util::Rng)> {
    let c = Checkpoint::load(dir, Some(&vocab.hash()))?;
    let rng = c.rng.and_then(|r| r.restore()).unwrap_or_else(|| rng_from_seed(0));
    Ok((c.model, c.opt, rng))
}

fn save_trained(dir: &Path, model: &Model<f32>, opt: &OptimizerState, rng: &mtlab::util::Rng, vocab: &Vocabulary) -> Result<()> {
    Checkpoint { model: model.clone(), opt: opt.clone(), rng: Some(RngState::capture(rng)), vocab_hash: vocab.hash() }.save(dir)
}

fn progress(line: &str) {
    eprintln!("{line}");
}

fn run(cli: Cli) -> Result<()> {
    let out_root = cli.out_root.unwrap_or_else(|| PathBuf::from("out"));
    match cli.cmd {
        Cmd::Corpus(CorpusCmd::Gen { manifest, out }) => {
            let m = match manifest {
                Some(p) => CorpusManifest::load(&p)?,
                None => desk_corpus_manifest(),
            };
            let summary = build_corpus(&m, &out)?;
            for (path, n) in summary {
                println!("{}\t{n}", path.display());
            }
        }
        Cmd::Corpus(CorpusCmd::Ingest { root, layout }) => {
            let (examples, summary) = ingest_external(&root, layout)?.collect_all()?;
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for ex in &examples {
                let k = match ex {
                    Example::Mono(m) => m.lang.clone(),
                    Example::Parallel(p) => format!("{}-{}", p.src_lang, p.tgt_lang),
                };
                *counts.entry(k).or_default() += 1;
            }
            for (k, n) in counts {
                println!("{k}\t{n}");
            }
            println!("files\t{}\nblank\t{}\nmalformed\t{}", summary.files, summary.blank_lines, summary.malformed.len());
            for s in &summary.malformed {
                eprintln!("{}:{}: {}", s.file.display(), s.line, s.reason);
            }
        }
        Cmd::Vocab(VocabCmd::Train { corpus, size, mode, out }) => {
            let text = TextCorpus::load(&corpus)?;
            let manifest = CorpusManifest::load(&corpus.join("manifest.toml"))?;
            let langs: Vec<String> = manifest.languages.iter().map(|l| l.tag.clone()).collect();
            let vocab = train_vocab(text.lines(), &langs, size, mode)?;
            vocab.save(&out)?;
            println!("{} entries, hash {}", vocab.len(), vocab.hash());
        }
        Cmd::Train(a) => {
            let cfg = load_config(a.common.config.as_deref())?;
            let vocab = Vocabulary::load(&a.common.vocab)?;
            let prepared = TextCorpus::load(&a.common.corpus)?.task_data(&vocab);
            let (mut model, mut opt, mut rng) = match &a.resume {
                Some(dir) => load_trained(dir, &vocab)?,
                None => {
                    let mc = ModelConfig { vocab_size: vocab.len(), seed: derive_seed(a.common.seed, "init"), ..cfg.model.clone() };
                    let model = Model::init(&mc)?;
                    let opt = OptimizerState::new(cfg.train.optim.clone(), model.num_params());
                    (model, opt, rng_from_seed(derive_seed(a.common.seed, "train")))
                }
            };
            let sched = prepared.schedule(cfg.temperature, cfg.mono_fraction)?;
            let steps = a.steps.unwrap_or(cfg.train.steps);
            let every = (steps / 20).max(1);
            train_loop(&mut model, &mut opt, &sched, &prepared.data, &vocab, &cfg.train.batch, steps, &mut rng, |r| {
                if r.step % every == 0 {
                    eprintln!("step {} {} loss {:.4}", r.step, r.task, r.stats.loss);
                }
            })?;
            save_trained(&a.out, &model, &opt, &rng, &vocab)?;
        }
        Cmd::Ibt(a) => {
            let cfg = load_config(a.common.config.as_deref())?;
            let vocab = Vocabulary::load(&a.common.vocab)?;
            let text = TextCorpus::load(&a.common.corpus)?;
            let prepared = text.task_data(&vocab);
            let (mut model, mut opt, mut rng) = load_trained(&a.checkpoint, &vocab)?;
            let mut clean = BTreeMap::new();
            for l in &a.langs {
                let lines = text.mono.get(l).ok_or_else(|| Error::EmptyCorpus(format!("no mono text for {l}")))?;
                clean.insert(l.clone(), lines.clone());
            }
            let pivot_mono = text.mono.get(PIVOT).cloned().unwrap_or_default();
            let sched = prepared.schedule(cfg.temperature, cfg.mono_fraction)?;
            let inputs = IbtInputs {
                vocab: &vocab,
                pivot: PIVOT,
                clean_mono: &clean,
                pivot_mono: &pivot_mono,
                data: &prepared.data,
                schedule: &sched,
            };
            let mut ibt = cfg.ibt.clone();
            if let Some(s) = a.steps {
                ibt.steps = s;
            }
            let outcome = finetune_ibt(&mut model, &mut opt, &inputs, &ibt, &mut rng)?;
            for r in &outcome.refreshes {
                eprintln!("refresh {} {} {}->{}: kept {}/{}", r.step, r.provenance, r.src_lang, r.tgt_lang, r.report.kept, r.report.total);
            }
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            save_trained(&a.out, &model, &opt, &rng, &vocab)?;
        }
        Cmd::Filter(a) => {
            let text = TextCorpus::load(&a.corpus)?;
            let langid = train_langid(&text.mono, DEFAULT_SMOOTHING)?;
            let wordlist = tfiif_wordlist(&text.mono, &a.lang, a.wordlist_size)?;
            let input = fs::read_to_string(&a.input).map_err(|e| Error::Config(format!("{}: {e}", a.input.display())))?;
            let lines: Vec<String> = input.lines().map(String::from).collect();
            let rules = MonoFilterRules { mode: a.mode, coverage: a.coverage, dedup: a.dedup };
            let (kept, report) = filter_mono(&lines, &a.lang, &langid, Some(&wordlist), &rules)?;
            let mut body = kept.join("\n");
            if !body.is_empty() {
                body.push('\n');
            }
            fs::write(&a.out, body).map_err(|e| Error::Config(format!("{}: {e}", a.out.display())))?;
            print!("{report}");
        }
        Cmd::Eval(a) => {
            let vocab = Vocabulary::load(&a.vocab)?;
            let ck = Checkpoint::load(&a.checkpoint, Some(&vocab.hash()))?;
            let mut sets = Vec::new();
            for spec in &a.tests {
                let mut parts = spec.splitn(3, ':');
                let (Some(s), Some(t), Some(p)) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(Error::InvalidArgument(format!("--test expects src:tgt:path, got {spec:?}")));
                };
                sets.push(TestSet::load(Path::new(p), s, t)?);
            }
            let mode = match a.beam {
                Some(k) => DecodeMode::Beam { k, alpha: a.alpha },
                None => DecodeMode::Greedy,
            };
            let translator = ModelTranslator { model: &ck.model, vocab: &vocab, mode, chunk: 64 };
            let id = a.checkpoint.display().to_string();
            let report = eval_report(&translator, &sets, &mode.to_string(), &id, !a.no_smooth)?;
            match a.out {
                Some(p) => fs::write(&p, report.to_csv()).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                None => print!("{}", report.to_csv()),
            }
        }
        Cmd::Experiment(ExperimentCmd::Config) => print!("{}", ExperimentConfig::default().to_toml()),
        Cmd::Experiment(ExperimentCmd::Run { scenario, config, steps, ibt_steps, seeds }) => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.scenario = scenario;
            if config.is_none() {
                cfg.out_dir = out_root;
            }
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            if let Some(s) = ibt_steps {
                cfg.ibt.steps = s;
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            let log_path = cfg.scenario_dir().join("log.txt");
            fs::create_dir_all(cfg.scenario_dir()).map_err(|e| Error::Config(e.to_string()))?;
            let mut log_file = fs::File::create(&log_path).map_err(|e| Error::Config(format!("{}: {e}", log_path.display())))?;
            let result = run_experiment(&cfg, |line| {
                progress(line);
                let _ = writeln!(log_file, "{line}");
            })?;
            println!("{}", result.csv.display());
        }
        Cmd::Plot(a) => {
            let rows = load_rows(&a.csv)?;
            plot_scatter(&rows, &ScatterSpec { metric: a.metric, target: a.target }, &a.out)?;
        }
    }
    Ok(())
}

/// The desk world with the corpus of the zero-resource scenario.
fn desk_corpus_manifest() -> CorpusManifest {
    let w = DeskWorld::default();
    let mut m = w.manifest();
    let zero = mtlab::harness::zero_resource(&w, 1);
    for (lang, n) in &zero.mono {
        m.mono.push(mtlab::corpus::MonoEntry::new(lang, "news", *n, "train"));
    }
    for (lang, n) in &zero.supervised {
        m.parallel.push(mtlab::corpus::ParallelEntry::new(lang, PIVOT, "news", *n, "train"));
    }
    m.parallel.push(mtlab::corpus::ParallelEntry::new(mtlab::harness::ZERO, PIVOT, "news", w.test_sentences, "test"));
    m
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
