//! Monolingual data cleaning: character n-gram language identification and
//! TF-IIF wordlists, combined into a loose and a tight filter.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const LANGID_MAX_N: usize = 3;
pub const DEFAULT_SMOOTHING: f64 = 0.5;
pub const DEFAULT_COVERAGE: f64 = 0.2;
pub const MIN_WORD_COUNT: u64 = 3;
/// Wordlist length used by the CLI and the tight filter defaults.
pub const DEFAULT_WORDLIST_SIZE: usize = 30;

/// Character n-grams of orders 1..=3 over the line with a space on each side
/// so word edges become features.
fn features(text: &str) -> Vec<String> {
    let norm: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if norm.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = format!(" {norm} ").chars().collect();
    let mut out = Vec::new();
    for n in 1..=LANGID_MAX_N {
        for w in chars.windows(n) {
            if n == 1 && w[0] == ' ' {
                continue;
            }
            out.push(w.iter().collect());
        }
    }
    out
}

/// Multinomial Naive Bayes over character n-grams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangIdModel {
    pub languages: Vec<String>,
    pub smoothing: f64,
    pub log_priors: Vec<f64>,
    /// Per-language log-probability of each feature seen in training;
    /// other features carry no evidence.
    pub log_probs: BTreeMap<String, Vec<f64>>,
}

pub fn train_langid(corpora: &BTreeMap<String, Vec<String>>, smoothing: f64) -> Result<LangIdModel> {
    if corpora.len() < 2 {
        return Err(Error::InvalidArgument("language identification needs at least two languages".into()));
    }
    if !(smoothing > 0.0) {
        return Err(Error::InvalidArgument("smoothing must be positive".into()));
    }
    let languages: Vec<String> = corpora.keys().cloned().collect();
    let mut counts: HashMap<String, Vec<u64>> = HashMap::new();
    let mut totals = vec![0u64; languages.len()];
    let mut lines = vec![0u64; languages.len()];
    for (li, lang) in languages.iter().enumerate() {
        let corpus = &corpora[lang];
        if corpus.iter().all(|l| l.trim().is_empty()) {
            return Err(Error::EmptyCorpus(format!("no language identification data for {lang}")));
        }
        for line in corpus {
            lines[li] += 1;
            for f in features(line) {
                counts.entry(f).or_insert_with(|| vec![0; languages.len()])[li] += 1;
                totals[li] += 1;
            }
        }
    }
    let v = counts.len() as f64;
    let denom: Vec<f64> = totals.iter().map(|&t| (t as f64 + smoothing * v).ln()).collect();
    let log_probs = counts
        .into_iter()
        .map(|(f, c)| {
            let lp = c.iter().zip(&denom).map(|(&k, d)| (k as f64 + smoothing).ln() - d).collect();
            (f, lp)
        })
        .collect();
    let n_lines: u64 = lines.iter().sum();
    Ok(LangIdModel {
        log_priors: lines.iter().map(|&k| (k as f64 / n_lines as f64).ln()).collect(),
        languages,
        smoothing,
        log_probs,
    })
}

impl LangIdModel {
    /// Posterior over all languages, in `languages` order.
    pub fn posteriors(&self, text: &str) -> Vec<f64> {
        let mut score = self.log_priors.clone();
        for f in features(text) {
            if let Some(lp) = self.log_probs.get(&f) {
                for (s, x) in score.iter_mut().zip(lp) {
                    *s += x;
                }
            }
        }
        let max = score.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = score.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }

    /// Most probable language (first in tag order on ties) and its posterior.
    pub fn classify(&self, text: &str) -> (&str, f64) {
        let post = self.posteriors(text);
        let best = (0..post.len()).fold(0, |b, i| if post[i] > post[b] { i } else { b });
        (&self.languages[best], post[best])
    }

    /// Fraction of `lines` classified as `lang`.
    pub fn accuracy(&self, lines: &[String], lang: &str) -> f64 {
        if lines.is_empty() {
            return 0.0;
        }
        let hits = lines.iter().filter(|l| self.classify(l).0 == lang).count();
        hits as f64 / lines.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wordlist {
    pub lang: String,
    /// Sorted by score, descending; ties by word.
    pub words: Vec<(String, f64)>,
    /// Fewer eligible words than requested.
    pub short: bool,
}

/// Score words of `lang` by relative frequency in `lang` over relative
/// frequency in the union of all corpora, keeping the top `k`.
pub fn tfiif_wordlist(corpora: &BTreeMap<String, Vec<String>>, lang: &str, k: usize) -> Result<Wordlist> {
    if k == 0 {
        return Err(Error::InvalidArgument("wordlist size must be positive".into()));
    }
    let own = corpora.get(lang).ok_or_else(|| Error::UnknownLanguage(lang.into()))?;
    let count = |lines: &[String], into: &mut HashMap<String, u64>| -> u64 {
        let mut n = 0;
        for l in lines {
            for w in l.split_whitespace() {
                *into.entry(w.to_string()).or_default() += 1;
                n += 1;
            }
        }
        n
    };
    let mut own_counts = HashMap::new();
    let own_total = count(own, &mut own_counts);
    if own_total == 0 {
        return Err(Error::EmptyCorpus(format!("no text for {lang}")));
    }
    let mut all_counts = HashMap::new();
    let mut all_total = 0;
    for lines in corpora.values() {
        all_total += count(lines, &mut all_counts);
    }
    let mut scored: Vec<(String, f64)> = own_counts
        .into_iter()
        .filter(|(_, c)| *c >= MIN_WORD_COUNT)
        .map(|(w, c)| {
            let score = (c as f64 / own_total as f64) / (all_counts[&w] as f64 / all_total as f64);
            (w, score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let short = scored.len() < k;
    scored.truncate(k);
    Ok(Wordlist {
        lang: lang.into(),
        words: scored,
        short,
    })
}

impl Wordlist {
    pub fn to_tsv(&self) -> String {
        self.words.iter().map(|(w, s)| format!("{w}\t{s}\n")).collect()
    }

    pub fn from_tsv(lang: &str, text: &str) -> Result<Wordlist> {
        let mut words = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (w, s) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("wordlist line {}: expected word<TAB>score", i + 1)))?;
            let s: f64 = s.parse().map_err(|_| Error::Parse(format!("wordlist line {}: bad score {s:?}", i + 1)))?;
            words.push((w.to_string(), s));
        }
        if words.is_empty() {
            return Err(Error::Parse("empty wordlist".into()));
        }
        Ok(Wordlist {
            lang: lang.into(),
            words,
            short: false,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).at(path)
    }

    pub fn load(path: &Path, lang: &str) -> Result<Wordlist> {
        let text = fs::read_to_string(path).at(path)?;
        Wordlist::from_tsv(lang, &text)
    }

    pub fn word_set(&self) -> HashSet<&str> {
        self.words.iter().map(|(w, _)| w.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    Loose,
    Tight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonoFilterRules {
    pub mode: FilterMode,
    /// Minimum fraction of a line's tokens found in the wordlist (tight).
    pub coverage: f64,
    /// Drop exact repeats of an earlier line.
    pub dedup: bool,
}

impl Default for MonoFilterRules {
    fn default() -> Self {
        MonoFilterRules {
            mode: FilterMode::Tight,
            coverage: DEFAULT_COVERAGE,
            dedup: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonoFilterReport {
    pub total: usize,
    pub kept: usize,
    pub dropped_duplicate: usize,
    pub dropped_langid: usize,
    pub dropped_wordlist: usize,
}

impl MonoFilterReport {
    pub fn is_balanced(&self) -> bool {
        self.kept + self.dropped_duplicate + self.dropped_langid + self.dropped_wordlist == self.total
    }
}

impl fmt::Display for MonoFilterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total\t{}", self.total)?;
        writeln!(f, "kept\t{}", self.kept)?;
        writeln!(f, "dropped_duplicate\t{}", self.dropped_duplicate)?;
        writeln!(f, "dropped_langid\t{}", self.dropped_langid)?;
        writeln!(f, "dropped_wordlist\t{}", self.dropped_wordlist)
    }
}

/// Keep lines identified as `lang`; in tight mode also require wordlist
/// coverage. Order-preserving.
pub fn filter_mono(
    lines: &[String],
    lang: &str,
    langid: &LangIdModel,
    wordlist: Option<&Wordlist>,
    rules: &MonoFilterRules,
) -> Result<(Vec<String>, MonoFilterReport)> {
    if !langid.languages.iter().any(|l| l == lang) {
        return Err(Error::UnknownLanguage(lang.into()));
    }
    let words = match (rules.mode, wordlist) {
        (FilterMode::Tight, None) => return Err(Error::InvalidArgument("tight filtering needs a wordlist".into())),
        (FilterMode::Tight, Some(w)) => Some(w.word_set()),
        (FilterMode::Loose, _) => None,
    };
    let mut report = MonoFilterReport {
        total: lines.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for line in lines {
        if rules.dedup && !seen.insert(line.as_str()) {
            report.dropped_duplicate += 1;
            continue;
        }
        if langid.classify(line).0 != lang {
            report.dropped_langid += 1;
            continue;
        }
        if let Some(words) = &words {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let hits = toks.iter().filter(|t| words.contains(*t)).count();
            if toks.is_empty() || (hits as f64) < rules.coverage * toks.len() as f64 {
                report.dropped_wordlist += 1;
                continue;
            }
        }
        kept.push(line.clone());
    }
    report.kept = kept.len();
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::*;
    use proptest::prelude::*;

    fn world(cognate: f64, same_alphabet: bool) -> World {
        let lang = |tag: &str, seed, fam: &str, alpha: &str| LanguageSpec {
            tag: tag.into(),
            lexicon_seed: seed,
            order_transform: OrderTransform::Identity,
            suffix: None,
            family_id: fam.into(),
            alphabet_id: alpha.into(),
            cognate_rate: cognate,
        };
        let (fb, ab) = if same_alphabet { ("f", "greek") } else { ("g", "cyrillic") };
        World::new(CorpusManifest {
            schema_version: SCHEMA_VERSION,
            seed: 2,
            domains: vec![DomainSpec { length_min: 4, length_max: 9, ..DomainSpec::news(60) }],
            languages: vec![lang("a", 1, "f", "greek"), lang("b", 2, fb, ab)],
            mono: vec![],
            parallel: vec![],
        })
        .unwrap()
    }

    fn lines(w: &World, lang: &str, n: usize, split: &str) -> Vec<String> {
        w.mono_lines(&MonoEntry::new(lang, "news", n, split))
            .unwrap()
            .into_iter()
            .map(|l| l.text)
            .collect()
    }

    fn model_for(w: &World) -> LangIdModel {
        let corpora = ["a", "b"].iter().map(|l| (l.to_string(), lines(w, l, 400, "train"))).collect();
        train_langid(&corpora, DEFAULT_SMOOTHING).unwrap()
    }

    fn accuracy(w: &World, m: &LangIdModel) -> f64 {
        (m.accuracy(&lines(w, "a", 500, "dev"), "a") + m.accuracy(&lines(w, "b", 500, "dev"), "b")) / 2.0
    }

    #[test]
    fn disjoint_alphabets_are_separable() {
        let w = world(0.0, false);
        let m = model_for(&w);
        assert!(accuracy(&w, &m) >= 0.99);
        for l in lines(&w, "a", 100, "dev").iter().filter(|l| l.split_whitespace().count() >= 5) {
            let (tag, p) = m.classify(l);
            assert_eq!(tag, "a");
            assert!(p >= 0.9);
        }
    }

    #[test]
    fn related_languages_are_confusable() {
        let far = world(0.8, false);
        let near = world(0.8, true);
        assert!(accuracy(&near, &model_for(&near)) < accuracy(&far, &model_for(&far)));
    }

    #[test]
    fn empty_text_falls_back_to_priors() {
        let mut corpora = BTreeMap::new();
        corpora.insert("x".to_string(), vec!["ab ab".to_string()]);
        corpora.insert("y".to_string(), vec!["cd".to_string(), "dc".to_string(), "cc".to_string()]);
        let m = train_langid(&corpora, 1.0).unwrap();
        let (tag, p) = m.classify("");
        assert_eq!(tag, "y");
        assert!((p - 0.75).abs() < 1e-12);
        assert!((m.posteriors("zzz").iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn langid_input_errors() {
        let mut c = BTreeMap::new();
        c.insert("x".to_string(), vec!["ab".to_string()]);
        assert!(train_langid(&c, 1.0).is_err());
        c.insert("y".to_string(), vec![]);
        assert!(matches!(train_langid(&c, 1.0), Err(Error::EmptyCorpus(_))));
    }

    fn toy_corpora() -> BTreeMap<String, Vec<String>> {
        // l: 100 tokens with zeb×10; union 1000 tokens with zeb×10
        let mut l = vec!["zeb".to_string(); 10];
        l.extend((0..90).map(|i| format!("w{}", i % 30)));
        let other: Vec<String> = (0..900).map(|i| format!("w{}", i % 30)).collect();
        BTreeMap::from([("l".to_string(), vec![l.join(" ")]), ("m".to_string(), vec![other.join(" ")])])
    }

    #[test]
    fn tfiif_arithmetic() {
        let wl = tfiif_wordlist(&toy_corpora(), "l", 1).unwrap();
        assert_eq!(wl.words[0].0, "zeb");
        assert!((wl.words[0].1 - 10.0).abs() < 1e-12);
        assert!(!wl.short);
        // w0: 3 of 100 in l, 33 of 1000 overall
        let all = tfiif_wordlist(&toy_corpora(), "l", 100).unwrap();
        assert!(all.short);
        assert_eq!(all.words.len(), 31);
        assert!(all.words[1..].iter().all(|(_, s)| (s - 0.03 / 0.033).abs() < 1e-12));
        assert!(all.words.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(all.words[1].0, "w0");
        assert!(all.words.iter().all(|(w, _)| !w.is_empty()));
    }

    #[test]
    fn rare_and_foreign_words_never_listed() {
        let c = BTreeMap::from([
            ("l".to_string(), vec!["a a a b b".to_string()]),
            ("m".to_string(), vec!["c c c c".to_string()]),
        ]);
        let wl = tfiif_wordlist(&c, "l", 10).unwrap();
        assert_eq!(wl.words.iter().map(|w| w.0.as_str()).collect::<Vec<_>>(), vec!["a"]);
    }

    #[test]
    fn wordlist_tsv_round_trip() {
        let wl = tfiif_wordlist(&toy_corpora(), "l", 5).unwrap();
        let back = Wordlist::from_tsv("l", &wl.to_tsv()).unwrap();
        assert_eq!(back.words, wl.words);
    }

    fn noisy_setup() -> (Vec<String>, Vec<String>, LangIdModel, Wordlist) {
        let w = world(0.0, false);
        let m = model_for(&w);
        let mut entry = MonoEntry::new("a", "news", 600, "train");
        entry.noise_rate = 0.3;
        entry.noise_langs = vec!["b".into()];
        let noisy = w.mono_lines(&entry).unwrap();
        let src: Vec<String> = noisy.iter().map(|l| l.source_lang.clone()).collect();
        let text: Vec<String> = noisy.into_iter().map(|l| l.text).collect();
        let corpora = BTreeMap::from([("a".to_string(), text.clone()), ("b".to_string(), lines(&w, "b", 600, "train"))]);
        let wl = tfiif_wordlist(&corpora, "a", 20).unwrap();
        (text, src, m, wl)
    }

    #[test]
    fn loose_drops_foreign_lines_and_tight_is_a_subset() {
        let (text, src, m, wl) = noisy_setup();
        let loose = MonoFilterRules { mode: FilterMode::Loose, ..Default::default() };
        let (kept, rep) = filter_mono(&text, "a", &m, Some(&wl), &loose).unwrap();
        assert!(rep.is_balanced());
        let expected: Vec<String> = text.iter().zip(&src).filter(|(_, s)| *s == "a").map(|(t, _)| t.clone()).collect();
        assert_eq!(kept, expected);
        let (tight, rep) = filter_mono(&text, "a", &m, Some(&wl), &MonoFilterRules::default()).unwrap();
        assert!(rep.is_balanced());
        let mut it = kept.iter();
        assert!(tight.iter().all(|t| it.any(|k| k == t)));
        assert!(tight.len() < kept.len());
    }

    #[test]
    fn filtering_is_idempotent() {
        let (text, _, m, wl) = noisy_setup();
        for mode in [FilterMode::Loose, FilterMode::Tight] {
            let rules = MonoFilterRules { mode, dedup: true, ..Default::default() };
            let (once, _) = filter_mono(&text, "a", &m, Some(&wl), &rules).unwrap();
            let (twice, rep) = filter_mono(&once, "a", &m, Some(&wl), &rules).unwrap();
            assert_eq!(once, twice);
            assert_eq!(rep.kept, rep.total);
        }
    }

    #[test]
    fn tight_without_wordlist_is_an_error() {
        let (text, _, m, _) = noisy_setup();
        assert!(filter_mono(&text, "a", &m, None, &MonoFilterRules::default()).is_err());
        assert!(filter_mono(&text, "zz", &m, None, &MonoFilterRules { mode: FilterMode::Loose, ..Default::default() }).is_err());
    }

    proptest! {
        #[test]
        fn posteriors_normalized_and_pure(s in "[a-zβγδ ]{0,30}") {
            let mut c = BTreeMap::new();
            c.insert("x".to_string(), vec!["abab ba".to_string()]);
            c.insert("y".to_string(), vec!["βγδ γδβ".to_string()]);
            let m = train_langid(&c, 0.5).unwrap();
            let p = m.posteriors(&s);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert_eq!(m.classify(&s), m.classify(&s));
        }
    }
}
