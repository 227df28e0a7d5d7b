//! Corpus BLEU, chrF and evaluation reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const BLEU_MAX_N: usize = 4;
pub const CHRF_MAX_N: usize = 6;
pub const CHRF_BETA: f64 = 2.0;
/// Additive constant used on orders ≥ 2 when BLEU smoothing is on.
pub const BLEU_SMOOTH_EPS: f64 = 0.1;

fn check_lists(hyps: &[&str], refs: &[&str]) -> Result<()> {
    if hyps.len() != refs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    if refs.is_empty() {
        return Err(Error::InvalidArgument("no references".into()));
    }
    if let Some(i) = refs.iter().position(|r| r.trim().is_empty()) {
        return Err(Error::InvalidArgument(format!("reference line {i} is empty")));
    }
    Ok(())
}

fn ngram_counts<T: Eq + std::hash::Hash + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut out = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Clipped matches and hypothesis n-gram totals per order, plus lengths.
/// Additive over sentences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; BLEU_MAX_N],
    pub totals: [usize; BLEU_MAX_N],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn sentence(hyp: &str, reference: &str) -> BleuStats {
        let h: Vec<&str> = hyp.split_whitespace().collect();
        let r: Vec<&str> = reference.split_whitespace().collect();
        let mut s = BleuStats {
            hyp_len: h.len(),
            ref_len: r.len(),
            ..Default::default()
        };
        for n in 1..=BLEU_MAX_N {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            s.totals[n - 1] = h.len().saturating_sub(n - 1);
            s.matches[n - 1] = hc.iter().map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    pub fn add(&mut self, o: &BleuStats) {
        for n in 0..BLEU_MAX_N {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }

    pub fn score(&self, smooth: bool) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        // orders longer than every hypothesis carry no evidence and are
        // left out of the geometric mean
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 0..BLEU_MAX_N {
            let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
            if t == 0.0 {
                continue;
            }
            let p = if smooth && n > 0 { (m + BLEU_SMOOTH_EPS) / (t + BLEU_SMOOTH_EPS) } else { m / t };
            if p == 0.0 {
                return 0.0;
            }
            log_sum += p.ln();
            orders += 1;
        }
        let (h, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = if h < r { (1.0 - r / h).exp() } else { 1.0 };
        100.0 * bp * (log_sum / orders as f64).exp()
    }
}

/// Corpus BLEU with whitespace tokenization.
pub fn bleu(hyps: &[&str], refs: &[&str], smooth: bool) -> Result<f64> {
    check_lists(hyps, refs)?;
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&BleuStats::sentence(h, r));
    }
    Ok(total.score(smooth))
}

/// Per-order character n-gram statistics for chrF, with whitespace removed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChrfStats {
    pub matches: [usize; CHRF_MAX_N],
    pub hyp: [usize; CHRF_MAX_N],
    pub reference: [usize; CHRF_MAX_N],
}

impl ChrfStats {
    pub fn sentence(hyp: &str, reference: &str) -> ChrfStats {
        let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
        let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
        let mut s = ChrfStats::default();
        for n in 1..=CHRF_MAX_N {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            s.hyp[n - 1] = hc.values().sum();
            s.reference[n - 1] = rc.values().sum();
            s.matches[n - 1] = hc.iter().map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    pub fn add(&mut self, o: &ChrfStats) {
        for n in 0..CHRF_MAX_N {
            self.matches[n] += o.matches[n];
            self.hyp[n] += o.hyp[n];
            self.reference[n] += o.reference[n];
        }
    }

    /// Precision and recall of one order; orders absent on either side
    /// are `None`.
    pub fn order(&self, n: usize) -> Option<(f64, f64)> {
        let (m, h, r) = (self.matches[n - 1], self.hyp[n - 1], self.reference[n - 1]);
        if h == 0 || r == 0 {
            return None;
        }
        Some((m as f64 / h as f64, m as f64 / r as f64))
    }

    pub fn score(&self, beta: f64) -> f64 {
        let orders: Vec<(f64, f64)> = (1..=CHRF_MAX_N).filter_map(|n| self.order(n)).collect();
        if orders.is_empty() {
            return 0.0;
        }
        let k = orders.len() as f64;
        let p = orders.iter().map(|o| o.0).sum::<f64>() / k;
        let r = orders.iter().map(|o| o.1).sum::<f64>() / k;
        if p + r == 0.0 {
            return 0.0;
        }
        let b2 = beta * beta;
        100.0 * (1.0 + b2) * p * r / (b2 * p + r)
    }
}

/// Corpus chrF: statistics summed over sentences, precision and recall
/// averaged over the orders present, then F-beta.
pub fn chrf(hyps: &[&str], refs: &[&str], beta: f64) -> Result<f64> {
    check_lists(hyps, refs)?;
    let mut total = ChrfStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&ChrfStats::sentence(h, r));
    }
    Ok(total.score(beta))
}

/// Anything that turns source sentences into target sentences.
pub trait Translator {
    fn translate(&self, sources: &[&str], src_lang: &str, tgt_lang: &str) -> Result<Vec<String>>;
}

/// Exact reference translation between the languages of a world.
pub struct GroundTruth<'a>(pub &'a crate::corpus::World);

impl Translator for GroundTruth<'_> {
    fn translate(&self, sources: &[&str], src_lang: &str, tgt_lang: &str) -> Result<Vec<String>> {
        let from = self.0.language(src_lang)?;
        let to = self.0.language(tgt_lang)?;
        sources
            .iter()
            .map(|s| crate::corpus::ground_truth_translate(s, from, to))
            .collect()
    }
}

/// A trained model plus its vocabulary.
pub struct ModelTranslator<'a> {
    pub model: &'a crate::model::Model<f32>,
    pub vocab: &'a crate::tokenizer::Vocabulary,
    pub mode: crate::model::DecodeMode,
    pub chunk: usize,
}

impl Translator for ModelTranslator<'_> {
    fn translate(&self, sources: &[&str], _src_lang: &str, tgt_lang: &str) -> Result<Vec<String>> {
        Ok(crate::model::translate(self.model, self.vocab, sources, tgt_lang, self.mode, self.chunk)?
            .into_iter()
            .map(|t| t.text)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub src_lang: String,
    pub tgt_lang: String,
    pub sources: Vec<String>,
    pub references: Vec<String>,
}

impl TestSet {
    /// Read a `source<TAB>reference` file.
    pub fn load(path: &Path, src_lang: &str, tgt_lang: &str) -> Result<TestSet> {
        let text = fs::read_to_string(path).at(path)?;
        let mut set = TestSet {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            sources: Vec::new(),
            references: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let (s, r) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("{}:{}: expected two tab-separated fields", path.display(), i + 1)))?;
            set.sources.push(s.into());
            set.references.push(r.into());
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub src_lang: String,
    pub tgt_lang: String,
    pub bleu: f64,
    pub chrf: f64,
    pub sentences: usize,
    pub decode_mode: String,
    pub checkpoint: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

pub const EVAL_CSV_HEADER: &str = "src_lang,tgt_lang,bleu,chrf,sentences,decode_mode,checkpoint";

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(EVAL_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.2},{:.2},{},{},{}",
                r.src_lang, r.tgt_lang, r.bleu, r.chrf, r.sentences, r.decode_mode, r.checkpoint
            );
        }
        out
    }

    pub fn row(&self, src: &str, tgt: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.src_lang == src && r.tgt_lang == tgt)
    }
}

/// Translate every test set and score it.
pub fn eval_report(
    translator: &dyn Translator,
    sets: &[TestSet],
    decode_mode: &str,
    checkpoint: &str,
    smooth: bool,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for set in sets {
        let srcs: Vec<&str> = set.sources.iter().map(String::as_str).collect();
        let refs: Vec<&str> = set.references.iter().map(String::as_str).collect();
        let hyps = translator.translate(&srcs, &set.src_lang, &set.tgt_lang)?;
        let hyps: Vec<&str> = hyps.iter().map(String::as_str).collect();
        report.rows.push(EvalRow {
            src_lang: set.src_lang.clone(),
            tgt_lang: set.tgt_lang.clone(),
            bleu: bleu(&hyps, &refs, smooth)?,
            chrf: chrf(&hyps, &refs, CHRF_BETA)?,
            sentences: set.sources.len(),
            decode_mode: decode_mode.into(),
            checkpoint: checkpoint.into(),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bleu_hand_case() {
        let s = bleu(&["the cat sat on the mat"], &["the cat sat on a mat"], false).unwrap();
        assert!((s - 100.0 * (1.0f64 / 12.0).powf(0.25)).abs() < 1e-9);
        assert!((s - 53.73).abs() < 0.01);
        let st = BleuStats::sentence("the cat sat on the mat", "the cat sat on a mat");
        assert_eq!(st.matches, [5, 3, 2, 1]);
        assert_eq!(st.totals, [6, 5, 4, 3]);
    }

    #[test]
    fn bleu_zero_four_gram() {
        assert_eq!(bleu(&["a b c d"], &["a b c e"], false).unwrap(), 0.0);
        assert!(bleu(&["a b c d"], &["a b c e"], true).unwrap() > 0.0);
    }

    #[test]
    fn brevity_penalty_applies() {
        let s = bleu(&["a b c d"], &["a b c d e f g h"], false).unwrap();
        assert!((s - 100.0 * (1.0f64 - 2.0).exp()).abs() < 1e-9);
    }

    #[test]
    fn identical_corpora_score_100() {
        let c = ["ka po ne", "x", "zu zu zu zu zu"];
        assert_eq!(bleu(&c, &c, false).unwrap(), 100.0);
        assert_eq!(bleu(&c[..1], &c[..1], false).unwrap(), 100.0);
        assert_eq!(chrf(&c, &c, CHRF_BETA).unwrap(), 100.0);
    }

    #[test]
    fn argument_errors() {
        assert!(bleu(&["a"], &["a", "b"], false).is_err());
        assert!(bleu(&["a"], &[" "], false).is_err());
        assert!(chrf(&[], &[], 2.0).is_err());
    }

    #[test]
    fn chrf_empty_hypothesis() {
        assert_eq!(chrf(&[""], &["abc"], CHRF_BETA).unwrap(), 0.0);
    }

    /// Exhaustive enumeration of all substrings of each length.
    fn brute(h: &str, r: &str, n: usize) -> (f64, f64) {
        let h: Vec<char> = h.chars().collect();
        let r: Vec<char> = r.chars().collect();
        let grams = |s: &[char]| -> Vec<String> {
            (0..s.len().saturating_sub(n - 1)).map(|i| s[i..i + n].iter().collect()).collect()
        };
        let (hg, mut rg) = (grams(&h), grams(&r));
        let mut m = 0;
        for g in &hg {
            if let Some(p) = rg.iter().position(|x| x == g) {
                rg.remove(p);
                m += 1;
            }
        }
        (m as f64 / hg.len() as f64, m as f64 / grams(&r).len() as f64)
    }

    #[test]
    fn chrf_matches_brute_force() {
        let st = ChrfStats::sentence("abcd", "abce");
        for n in 1..=4 {
            let (p, r) = st.order(n).unwrap();
            let (bp, br) = brute("abcd", "abce", n);
            assert!((p - bp).abs() < 1e-6 && (r - br).abs() < 1e-6);
            assert!((p - r).abs() < 1e-12);
        }
        assert!(st.order(5).is_none());
        let avg = [0.75, 2.0 / 3.0, 0.5, 0.0].iter().sum::<f64>() / 4.0;
        assert!((chrf(&["abcd"], &["abce"], 2.0).unwrap() - 100.0 * avg).abs() < 1e-6);
    }

    #[test]
    fn chrf_ignores_whitespace() {
        assert_eq!(chrf(&["ab cd"], &["abcd"], 2.0).unwrap(), 100.0);
    }

    #[test]
    fn ground_truth_report_is_perfect() {
        use crate::corpus::*;
        let lang = |tag: &str, seed, fam: &str, alpha: &str, order| LanguageSpec {
            tag: tag.into(),
            lexicon_seed: seed,
            order_transform: order,
            suffix: None,
            family_id: fam.into(),
            alphabet_id: alpha.into(),
            cognate_rate: 0.0,
        };
        let m = CorpusManifest {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            domains: vec![DomainSpec::news(50)],
            languages: vec![
                lang("pv", 1, "p", "latin", OrderTransform::Identity),
                lang("a", 2, "a", "greek", OrderTransform::Reverse),
            ],
            mono: vec![],
            parallel: vec![ParallelEntry::new("a", "pv", "news", 20, "test")],
        };
        let world = World::new(m.clone()).unwrap();
        let (src, refs): (Vec<String>, Vec<String>) = world.parallel_lines(&m.parallel[0]).unwrap().into_iter().unzip();
        let sets = vec![
            TestSet { src_lang: "a".into(), tgt_lang: "pv".into(), sources: src.clone(), references: refs.clone() },
            TestSet { src_lang: "pv".into(), tgt_lang: "a".into(), sources: refs, references: src },
        ];
        let rep = eval_report(&GroundTruth(&world), &sets, "oracle", "-", false).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.rows.iter().all(|r| r.bleu == 100.0 && r.chrf == 100.0));
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("a,pv,100.00,100.00,20,oracle,"));
    }

    #[test]
    fn missing_reference_file() {
        assert!(matches!(TestSet::load(Path::new("/nonexistent/x.tsv"), "a", "b"), Err(Error::Io { .. })));
    }

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec!["ka", "po", "ne", "zu", "mi"]), 1..8).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn bleu_is_order_free(pairs in prop::collection::vec((sentence(), sentence()), 1..12), seed in 0u64..1000) {
            let h: Vec<&str> = pairs.iter().map(|p| p.0.as_str()).collect();
            let r: Vec<&str> = pairs.iter().map(|p| p.1.as_str()).collect();
            let mut idx: Vec<usize> = (0..pairs.len()).collect();
            use rand::seq::SliceRandom;
            idx.shuffle(&mut crate::util::rng_from_seed(seed));
            let hs: Vec<&str> = idx.iter().map(|&i| h[i]).collect();
            let rs: Vec<&str> = idx.iter().map(|&i| r[i]).collect();
            for smooth in [false, true] {
                let a = bleu(&h, &r, smooth).unwrap();
                let b = bleu(&hs, &rs, smooth).unwrap();
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!((0.0..=100.0).contains(&a));
            }
            let c = chrf(&h, &r, 2.0).unwrap();
            prop_assert!((c - chrf(&hs, &rs, 2.0).unwrap()).abs() < 1e-9);
            prop_assert!((0.0..=100.0 + 1e-9).contains(&c));
        }

        #[test]
        fn adding_exact_pair_never_hurts(pairs in prop::collection::vec((sentence(), sentence()), 1..8), extra in sentence()) {
            let h: Vec<&str> = pairs.iter().map(|p| p.0.as_str()).collect();
            let r: Vec<&str> = pairs.iter().map(|p| p.1.as_str()).collect();
            let mut st = BleuStats::default();
            for (a, b) in h.iter().zip(&r) { st.add(&BleuStats::sentence(a, b)); }
            prop_assume!(st.hyp_len >= st.ref_len);
            let before = bleu(&h, &r, true).unwrap();
            let (mut h2, mut r2) = (h.clone(), r.clone());
            h2.push(&extra);
            r2.push(&extra);
            prop_assert!(bleu(&h2, &r2, true).unwrap() >= before - 1e-9);
        }

        #[test]
        fn chrf_beta_one_is_symmetric(a in sentence(), b in sentence()) {
            let x = chrf(&[a.as_str()], &[b.as_str()], 1.0).unwrap();
            let y = chrf(&[b.as_str()], &[a.as_str()], 1.0).unwrap();
            prop_assert!((x - y).abs() < 1e-9);
        }

        #[test]
        fn identical_is_100(a in prop::collection::vec(sentence(), 1..6)) {
            let s: Vec<&str> = a.iter().map(String::as_str).collect();
            prop_assert_eq!(bleu(&s, &s, false).unwrap(), 100.0);
            prop_assert_eq!(chrf(&s, &s, 2.0).unwrap(), 100.0);
        }
    }
}
