//! Task sampling (temperature-balanced parallel, uniform mono, Bernoulli
//! mixture) and token-budgeted batch assembly.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{make_translation_ids, mass_mask, MaskPolicy, Seq2SeqExample};
use crate::tokenizer::{Vocabulary, PAD};
use crate::util::{sample_cdf, unit_f64, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Translation { src: String, tgt: String },
    Mass { lang: String },
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Translation { src, tgt } => write!(f, "translation:{src}->{tgt}"),
            Task::Mass { lang } => write!(f, "mass:{lang}"),
        }
    }
}

/// `p_k = n_k^(1/T) / Σ_j n_j^(1/T)`, evaluated in log space.
pub fn temperature_weights<K: Ord + Clone>(sizes: &BTreeMap<K, u64>, t: f64) -> Result<BTreeMap<K, f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {t}")));
    }
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("no corpus sizes to weight".into()));
    }
    if sizes.values().any(|&n| n == 0) {
        return Err(Error::InvalidArgument("corpus sizes must be positive".into()));
    }
    let logs: Vec<f64> = sizes.values().map(|&n| (n as f64).ln() / t).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(sizes.keys().cloned().zip(exps.into_iter().map(|e| e / z)).collect())
}

fn cdf_of(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// Per-task probabilities plus the mono/parallel mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSchedule {
    parallel: Vec<(Task, f64)>,
    mono: Vec<(Task, f64)>,
    parallel_cdf: Vec<f64>,
    mono_cdf: Vec<f64>,
    pub mono_fraction: f64,
}

impl SamplingSchedule {
    /// Pairs are weighted by temperature over their sizes; each of the two
    /// directions then gets half of its pair's mass. Mono languages are
    /// uniform.
    pub fn new(
        pair_sizes: &BTreeMap<(String, String), u64>,
        mono_langs: &[String],
        temperature: f64,
        mono_fraction: f64,
    ) -> Result<SamplingSchedule> {
        let mut parallel = Vec::new();
        if !pair_sizes.is_empty() {
            for ((a, b), p) in temperature_weights(pair_sizes, temperature)? {
                parallel.push((Task::Translation { src: a.clone(), tgt: b.clone() }, p / 2.0));
                parallel.push((Task::Translation { src: b, tgt: a }, p / 2.0));
            }
        }
        let mut langs = mono_langs.to_vec();
        langs.sort();
        langs.dedup();
        let mono = langs
            .iter()
            .map(|l| (Task::Mass { lang: l.clone() }, 1.0 / langs.len() as f64))
            .collect();
        SamplingSchedule::from_parts(parallel, mono, mono_fraction)
    }

    pub fn from_parts(parallel: Vec<(Task, f64)>, mono: Vec<(Task, f64)>, mono_fraction: f64) -> Result<SamplingSchedule> {
        if !(0.0..=1.0).contains(&mono_fraction) {
            return Err(Error::InvalidArgument(format!("mono_fraction {mono_fraction} outside [0, 1]")));
        }
        for side in [&parallel, &mono] {
            if side.iter().any(|(_, p)| !(*p >= 0.0)) {
                return Err(Error::InvalidArgument("negative task probability".into()));
            }
            let total: f64 = side.iter().map(|(_, p)| p).sum();
            if !side.is_empty() && (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("task probabilities sum to {total}")));
            }
        }
        let parallel_cdf = cdf_of(&parallel.iter().map(|(_, p)| *p).collect::<Vec<_>>());
        let mono_cdf = cdf_of(&mono.iter().map(|(_, p)| *p).collect::<Vec<_>>());
        Ok(SamplingSchedule {
            parallel,
            mono,
            parallel_cdf,
            mono_cdf,
            mono_fraction,
        })
    }

    pub fn parallel_probs(&self) -> &[(Task, f64)] {
        &self.parallel
    }

    pub fn mono_probs(&self) -> &[(Task, f64)] {
        &self.mono
    }

    /// Draw one task.
    pub fn next_task(&self, rng: &mut Rng) -> Result<Task> {
        let mono_side = unit_f64(rng) < self.mono_fraction;
        let (side, cdf, name) = if mono_side {
            (&self.mono, &self.mono_cdf, "monolingual")
        } else {
            (&self.parallel, &self.parallel_cdf, "parallel")
        };
        if side.is_empty() {
            return Err(Error::InvalidArgument(format!("schedule selected the empty {name} side")));
        }
        Ok(side[sample_cdf(cdf, unit_f64(rng))].0.clone())
    }

    /// `task\tprobability` rows; probabilities include the mixture weight.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("task\tprobability\n");
        for (t, p) in &self.parallel {
            s.push_str(&format!("{t}\t{:.9}\n", p * (1.0 - self.mono_fraction)));
        }
        for (t, p) in &self.mono {
            s.push_str(&format!("{t}\t{:.9}\n", p * self.mono_fraction));
        }
        s
    }
}

/// Pre-tokenized training text, keyed by task.
#[derive(Debug, Clone, Default)]
pub struct TaskData {
    /// Directed pairs `(src, tgt)` → aligned text-token sequences.
    pub parallel: BTreeMap<(String, String), Vec<(Vec<u32>, Vec<u32>)>>,
    pub mono: BTreeMap<String, Vec<Vec<u32>>>,
}

impl TaskData {
    /// Add a pair corpus in both directions.
    pub fn add_pair(&mut self, a: &str, b: &str, rows: Vec<(Vec<u32>, Vec<u32>)>) {
        let rev: Vec<_> = rows.iter().map(|(x, y)| (y.clone(), x.clone())).collect();
        self.parallel.entry((a.into(), b.into())).or_default().extend(rows);
        self.parallel.entry((b.into(), a.into())).or_default().extend(rev);
    }

    pub fn add_directed(&mut self, src: &str, tgt: &str, rows: Vec<(Vec<u32>, Vec<u32>)>) {
        self.parallel.entry((src.into(), tgt.into())).or_default().extend(rows);
    }

    pub fn add_mono(&mut self, lang: &str, rows: Vec<Vec<u32>>) {
        self.mono.entry(lang.into()).or_default().extend(rows);
    }

    fn len_for(&self, task: &Task) -> usize {
        match task {
            Task::Translation { src, tgt } => self.parallel.get(&(src.clone(), tgt.clone())).map_or(0, Vec::len),
            Task::Mass { lang } => self.mono.get(lang).map_or(0, Vec::len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchParams {
    pub batch_tokens: usize,
    pub max_len: usize,
    pub mask_fraction: f64,
    pub mask_policy: MaskPolicy,
}

impl Default for BatchParams {
    fn default() -> Self {
        BatchParams {
            batch_tokens: 4096,
            max_len: 64,
            mask_fraction: 0.5,
            mask_policy: MaskPolicy::Mass801010,
        }
    }
}

/// Padded row-major matrices, `rows × enc_len` and `rows × dec_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub task: Option<Task>,
    pub rows: usize,
    pub enc_len: usize,
    pub dec_len: usize,
    pub encoder_ids: Vec<u32>,
    pub decoder_input_ids: Vec<u32>,
    pub decoder_target_ids: Vec<u32>,
    pub decoder_positions: Vec<u32>,
    pub loss_mask: Vec<bool>,
    pub enc_lengths: Vec<usize>,
    pub dec_lengths: Vec<usize>,
}

impl Batch {
    pub fn from_examples(task: Option<Task>, examples: &[Seq2SeqExample]) -> Result<Batch> {
        if examples.is_empty() {
            return Err(Error::InvalidArgument("batch needs at least one example".into()));
        }
        let rows = examples.len();
        let enc_len = examples.iter().map(|e| e.encoder_ids.len()).max().unwrap();
        let dec_len = examples.iter().map(|e| e.decoder_target_ids.len()).max().unwrap();
        let mut b = Batch {
            task,
            rows,
            enc_len,
            dec_len,
            encoder_ids: vec![PAD; rows * enc_len],
            decoder_input_ids: vec![PAD; rows * dec_len],
            decoder_target_ids: vec![PAD; rows * dec_len],
            decoder_positions: vec![0; rows * dec_len],
            loss_mask: vec![false; rows * dec_len],
            enc_lengths: Vec::with_capacity(rows),
            dec_lengths: Vec::with_capacity(rows),
        };
        for (r, e) in examples.iter().enumerate() {
            let n = e.decoder_target_ids.len();
            if e.encoder_ids.is_empty() || n == 0 || e.decoder_input_ids.len() != n || e.decoder_positions.len() != n {
                return Err(Error::InvalidArgument("malformed example".into()));
            }
            b.encoder_ids[r * enc_len..r * enc_len + e.encoder_ids.len()].copy_from_slice(&e.encoder_ids);
            let d = r * dec_len;
            b.decoder_input_ids[d..d + n].copy_from_slice(&e.decoder_input_ids);
            b.decoder_target_ids[d..d + n].copy_from_slice(&e.decoder_target_ids);
            b.decoder_positions[d..d + n].copy_from_slice(&e.decoder_positions);
            b.loss_mask[d..d + n].iter_mut().for_each(|m| *m = true);
            b.enc_lengths.push(e.encoder_ids.len());
            b.dec_lengths.push(n);
        }
        Ok(b)
    }

    pub fn target_tokens(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}

/// Sample examples for `task` without replacement, packing rows until the
/// next one would push either padded side past `batch_tokens`.
pub fn make_batch(task: &Task, data: &TaskData, params: &BatchParams, rng: &mut Rng, vocab: &Vocabulary) -> Result<Batch> {
    let available = data.len_for(task);
    if available == 0 {
        return Err(Error::EmptyCorpus(format!("no data for task {task}")));
    }
    if params.max_len == 0 || params.batch_tokens < params.max_len + 2 {
        return Err(Error::InvalidArgument(format!(
            "batch_tokens {} cannot hold one sequence of max_len {}",
            params.batch_tokens, params.max_len
        )));
    }
    let tag = match task {
        Task::Translation { tgt, .. } => vocab.tag_id(tgt)?,
        Task::Mass { lang } => vocab.tag_id(lang)?,
    };
    let mut used = HashSet::new();
    let mut examples: Vec<Seq2SeqExample> = Vec::new();
    let (mut enc_max, mut dec_max) = (0usize, 0usize);
    while used.len() < available {
        let idx = rng.gen_range(0..available);
        if !used.insert(idx) {
            continue;
        }
        let ex: Seq2SeqExample = match task {
            Task::Translation { src, tgt } => {
                let (s, t) = &data.parallel[&(src.clone(), tgt.clone())][idx];
                let s = &s[..s.len().min(params.max_len)];
                let t = &t[..t.len().min(params.max_len)];
                make_translation_ids(s, t, tag)?.into()
            }
            Task::Mass { lang } => {
                let ids = &data.mono[lang][idx];
                let ids = &ids[..ids.len().min(params.max_len)];
                mass_mask(ids, params.mask_fraction, rng, params.mask_policy, lang, vocab)?.into()
            }
        };
        let e = enc_max.max(ex.encoder_ids.len());
        let d = dec_max.max(ex.decoder_target_ids.len());
        let rows = examples.len() + 1;
        if rows * e > params.batch_tokens || rows * d > params.batch_tokens {
            if examples.is_empty() {
                return Err(Error::InvalidArgument("single example exceeds the batch budget".into()));
            }
            break;
        }
        enc_max = e;
        dec_max = d;
        examples.push(ex);
    }
    Batch::from_examples(Some(task.clone()), &examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{train_vocab, VocabMode, EOS};
    use crate::util::rng_from_seed;
    use proptest::prelude::*;

    fn sizes(v: &[(&str, u64)]) -> BTreeMap<String, u64> {
        v.iter().map(|(k, n)| (k.to_string(), *n)).collect()
    }

    #[test]
    fn proportional_at_t1() {
        let p = temperature_weights(&sizes(&[("a", 3), ("b", 1)]), 1.0).unwrap();
        assert!((p["a"] - 0.75).abs() < 1e-12 && (p["b"] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn closed_form_at_t5() {
        let p = temperature_weights(&sizes(&[("a", 100), ("b", 1)]), 5.0).unwrap();
        let oracle = 100f64.powf(0.2) / (100f64.powf(0.2) + 1.0);
        assert!((p["a"] - oracle).abs() < 1e-12);
        assert!((p["a"] - 0.7152).abs() < 1e-4 && (p["b"] - 0.2848).abs() < 1e-4);
    }

    #[test]
    fn invalid_weights() {
        assert!(temperature_weights(&sizes(&[("a", 0)]), 1.0).is_err());
        assert!(temperature_weights(&sizes(&[("a", 1)]), 0.0).is_err());
        assert!(temperature_weights(&sizes(&[("a", 1)]), -2.0).is_err());
    }

    #[test]
    fn high_temperature_is_near_uniform() {
        let p = temperature_weights(&sizes(&[("a", 1), ("b", 1000), ("c", 1_000_000)]), 1e6).unwrap();
        let max = p.values().cloned().fold(0.0, f64::max);
        let min = p.values().cloned().fold(1.0, f64::min);
        assert!(max - min < 1e-4);
    }

    proptest! {
        #[test]
        fn scale_invariant(ns in proptest::collection::vec(1u64..10_000, 1..6), c in 1u64..50, t in 0.5f64..10.0) {
            let a: BTreeMap<usize, u64> = ns.iter().cloned().enumerate().collect();
            let b: BTreeMap<usize, u64> = ns.iter().map(|n| n * c).enumerate().collect();
            let (pa, pb) = (temperature_weights(&a, t).unwrap(), temperature_weights(&b, t).unwrap());
            prop_assert!((pa.values().sum::<f64>() - 1.0).abs() < 1e-9);
            for k in pa.keys() {
                prop_assert!((pa[k] - pb[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn lower_temperature_favours_largest(small in 1u64..1000, extra in 1u64..1000, t in 1.0f64..10.0) {
            let s: BTreeMap<u8, u64> = [(0, small), (1, small + extra)].into_iter().collect();
            let hi = temperature_weights(&s, t).unwrap()[&1];
            let lo = temperature_weights(&s, t / 2.0).unwrap()[&1];
            prop_assert!(lo > hi);
        }
    }

    fn pair_sizes() -> BTreeMap<(String, String), u64> {
        [(("a".to_string(), "p".to_string()), 100), (("b".to_string(), "p".to_string()), 1)]
            .into_iter()
            .collect()
    }

    #[test]
    fn directions_split_pair_mass() {
        let s = SamplingSchedule::new(&pair_sizes(), &[], 5.0, 0.0).unwrap();
        let probs: BTreeMap<String, f64> = s.parallel_probs().iter().map(|(t, p)| (t.to_string(), *p)).collect();
        assert!((probs["translation:a->p"] - 0.7152 / 2.0).abs() < 1e-4);
        assert_eq!(probs["translation:a->p"], probs["translation:p->a"]);
        assert!(s.to_tsv().starts_with("task\tprobability\n"));
    }

    #[test]
    fn mixture_frequencies() {
        let langs = vec!["a".to_string(), "b".to_string(), "p".to_string()];
        let s = SamplingSchedule::new(&pair_sizes(), &langs, 5.0, 0.5).unwrap();
        let mut rng = rng_from_seed(11);
        let mut counts: BTreeMap<Task, usize> = BTreeMap::new();
        let n = 100_000;
        for _ in 0..n {
            *counts.entry(s.next_task(&mut rng).unwrap()).or_default() += 1;
        }
        let mono: usize = counts.iter().filter(|(t, _)| matches!(t, Task::Mass { .. })).map(|(_, c)| c).sum();
        assert!((mono as f64 / n as f64 - 0.5).abs() <= 0.01);
        let para = n - mono;
        for (t, p) in s.parallel_probs() {
            let f = counts.get(t).copied().unwrap_or(0) as f64 / para as f64;
            assert!((f - p).abs() <= 0.01, "{t}: {f} vs {p}");
        }
    }

    #[test]
    fn boundaries() {
        let s = SamplingSchedule::new(&pair_sizes(), &["a".to_string()], 5.0, 0.0).unwrap();
        let mut rng = rng_from_seed(2);
        for _ in 0..1000 {
            assert!(matches!(s.next_task(&mut rng).unwrap(), Task::Translation { .. }));
        }
        let s = SamplingSchedule::new(&pair_sizes(), &[], 5.0, 1.0).unwrap();
        assert!(s.next_task(&mut rng).is_err());
    }

    fn setup() -> (Vocabulary, TaskData) {
        let langs = vec!["A".to_string(), "B".to_string()];
        let v = train_vocab(["a b c d e f g h i j"], &langs, 30, VocabMode::Word).unwrap();
        let mut data = TaskData::default();
        data.add_pair(
            "A",
            "B",
            vec![
                (v.encode_text("a b c d e"), v.encode_text("f g")),
                (v.encode_text("a b"), v.encode_text("h i j")),
                (v.encode_text("c"), v.encode_text("d e f g h i j a")),
            ],
        );
        data.add_mono("A", vec![v.encode_text("a b c d e f")]);
        (v, data)
    }

    #[test]
    fn single_sentence_batch() {
        let (v, mut data) = setup();
        data.parallel.insert(("A".into(), "B".into()), vec![(v.encode_text("a b c d e"), v.encode_text("f g h"))]);
        let p = BatchParams { batch_tokens: 100, ..Default::default() };
        let b = make_batch(&Task::Translation { src: "A".into(), tgt: "B".into() }, &data, &p, &mut rng_from_seed(0), &v).unwrap();
        assert_eq!(b.rows, 1);
        assert_eq!(b.enc_len, 7);
        assert!(b.encoder_ids.iter().all(|&t| t != PAD));
        assert_eq!(b.decoder_target_ids[3], EOS);
    }

    #[test]
    fn padding_contract_and_determinism() {
        let (v, data) = setup();
        let p = BatchParams { batch_tokens: 100, max_len: 6, ..Default::default() };
        let t = Task::Translation { src: "B".into(), tgt: "A".into() };
        let b = make_batch(&t, &data, &p, &mut rng_from_seed(4), &v).unwrap();
        assert_eq!(b.rows, 3);
        assert_eq!(b.dec_len, 6);
        for i in 0..b.rows * b.dec_len {
            assert_eq!(b.loss_mask[i], b.decoder_target_ids[i] != PAD);
        }
        // truncated to max_len text tokens, plus tag and EOS
        assert_eq!(b.enc_len, 8);
        assert_eq!(b, make_batch(&t, &data, &p, &mut rng_from_seed(4), &v).unwrap());
        let mass = make_batch(&Task::Mass { lang: "A".into() }, &data, &p, &mut rng_from_seed(4), &v).unwrap();
        assert_eq!(mass.target_tokens(), 3);
    }

    #[test]
    fn budget_limits_rows() {
        let (v, data) = setup();
        let p = BatchParams { batch_tokens: 16, max_len: 6, ..Default::default() };
        let t = Task::Translation { src: "A".into(), tgt: "B".into() };
        for seed in 0..20 {
            let b = make_batch(&t, &data, &p, &mut rng_from_seed(seed), &v).unwrap();
            assert!(b.rows * b.enc_len <= 16 && b.rows * b.dec_len <= 16);
        }
        let empty = Task::Mass { lang: "B".into() };
        assert!(matches!(make_batch(&empty, &data, &p, &mut rng_from_seed(0), &v), Err(Error::EmptyCorpus(_))));
    }
}
