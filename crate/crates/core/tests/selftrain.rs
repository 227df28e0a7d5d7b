use std::collections::BTreeMap;

use mtlab::corpus::{MonoEntry, ParallelEntry, World};
use mtlab::harness::{DeskWorld, PreparedData, TextCorpus, PIVOT, ZERO};
use mtlab::model::{DecodeMode, Model, ModelConfig, OptimConfig, OptimizerState};
use mtlab::sampler::BatchParams;
use mtlab::selftrain::{
    filter_synthetic, finetune_ibt, generate_synthetic, load_pool, save_pool, IbtConfig, IbtInputs, Provenance,
    SyntheticFilterRules,
};
use mtlab::tokenizer::{train_vocab, VocabMode, Vocabulary};
use mtlab::train::train_loop;
use mtlab::util::rng_from_seed;

struct Setup {
    text: TextCorpus,
    vocab: Vocabulary,
    prepared: PreparedData,
    model: Model<f32>,
    opt: OptimizerState,
}

fn setup() -> Setup {
    let mut m = DeskWorld::default().manifest();
    m.mono.push(MonoEntry::new(ZERO, "news", 200, "train"));
    m.mono.push(MonoEntry::new(PIVOT, "news", 200, "train"));
    m.parallel.push(ParallelEntry::new("a1", PIVOT, "news", 200, "train"));
    let world = World::new(m).unwrap();
    let text = TextCorpus::generate(&world).unwrap();
    let vocab = train_vocab(text.lines(), &DeskWorld::languages(), 2000, VocabMode::Word).unwrap();
    let prepared = text.task_data(&vocab);
    let cfg = ModelConfig { d_model: 16, d_ff: 32, ..ModelConfig::desk(vocab.len()) };
    let mut model = Model::init(&cfg).unwrap();
    let mut opt = OptimizerState::new(OptimConfig::default(), model.num_params());
    let sched = prepared.schedule(5.0, 0.5).unwrap();
    let batch = BatchParams { batch_tokens: 256, max_len: 40, ..BatchParams::default() };
    train_loop(&mut model, &mut opt, &sched, &prepared.data, &vocab, &batch, 20, &mut rng_from_seed(1), |_| {}).unwrap();
    Setup { text, vocab, prepared, model, opt }
}

fn small_ibt(steps: u64) -> IbtConfig {
    IbtConfig {
        steps,
        refresh_every: 5,
        pool_size: 30,
        chunk: 16,
        batch: BatchParams { batch_tokens: 256, max_len: 40, ..BatchParams::default() },
        ..IbtConfig::default()
    }
}

#[test]
fn zero_steps_leave_the_model_untouched() {
    let mut s = setup();
    let before = s.model.params.clone();
    let clean = BTreeMap::from([(ZERO.to_string(), s.text.mono[ZERO].clone())]);
    let sched = s.prepared.schedule(5.0, 0.5).unwrap();
    let inputs = IbtInputs {
        vocab: &s.vocab,
        pivot: PIVOT,
        clean_mono: &clean,
        pivot_mono: &s.text.mono[PIVOT],
        data: &s.prepared.data,
        schedule: &sched,
    };
    let out = finetune_ibt(&mut s.model, &mut s.opt, &inputs, &small_ibt(0), &mut rng_from_seed(2)).unwrap();
    assert!(out.refreshes.is_empty() && out.losses.is_empty());
    assert_eq!(s.model.params, before);
}

#[test]
fn synthetic_pairs_keep_the_genuine_side() {
    let s = setup();
    let mono = &s.text.mono[ZERO][..30];
    let provs = [Provenance::BackTranslation, Provenance::SelfTraining];
    let (pairs, failed) =
        generate_synthetic(&s.model, &s.vocab, mono, ZERO, PIVOT, DecodeMode::Greedy, &provs, 8, 20).unwrap();
    assert_eq!(pairs.len() + failed * provs.len(), mono.len() * provs.len());
    for p in &pairs {
        assert!(mono.contains(&p.genuine().to_string()));
        match p.provenance {
            Provenance::BackTranslation => assert_eq!(p.pair.tgt_lang, ZERO),
            Provenance::SelfTraining => assert_eq!(p.pair.src_lang, ZERO),
        }
        assert_eq!(p.model_step, 20);
    }
}

#[test]
fn refreshing_with_a_fixed_model_is_idempotent() {
    let s = setup();
    let mono = &s.text.mono[ZERO][..20];
    let run = || {
        let (pairs, _) =
            generate_synthetic(&s.model, &s.vocab, mono, ZERO, PIVOT, DecodeMode::Greedy, &[Provenance::SelfTraining], 8, 0)
                .unwrap();
        filter_synthetic(pairs, &SyntheticFilterRules::default())
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn pools_survive_a_round_trip() {
    let s = setup();
    let mono = &s.text.mono[ZERO][..10];
    let (pairs, _) =
        generate_synthetic(&s.model, &s.vocab, mono, ZERO, PIVOT, DecodeMode::Greedy, &[Provenance::BackTranslation], 4, 3)
            .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("pool");
    save_pool(&stem, &pairs).unwrap();
    assert_eq!(load_pool(&stem).unwrap(), pairs);
}

#[test]
fn short_fine_tune_records_refreshes_and_losses() {
    let mut s = setup();
    let clean = BTreeMap::from([(ZERO.to_string(), s.text.mono[ZERO].clone())]);
    let sched = s.prepared.schedule(5.0, 0.5).unwrap();
    let inputs = IbtInputs {
        vocab: &s.vocab,
        pivot: PIVOT,
        clean_mono: &clean,
        pivot_mono: &s.text.mono[PIVOT],
        data: &s.prepared.data,
        schedule: &sched,
    };
    let out = finetune_ibt(&mut s.model, &mut s.opt, &inputs, &small_ibt(10), &mut rng_from_seed(2)).unwrap();
    assert_eq!(out.losses.len(), 10);
    assert!(out.losses.iter().all(|l| l.is_finite()));
    // two refreshes, each with BT and ST from a3 plus BT from the pivot
    assert_eq!(out.refreshes.len(), 6);
    for r in &out.refreshes {
        assert!(r.report.is_balanced());
    }
}
