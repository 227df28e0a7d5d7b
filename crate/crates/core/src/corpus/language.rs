use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng_from_seed, unit_f64};

/// Word-order rule applied to the concept sequence before lexical lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderTransform {
    Identity,
    Reverse,
    /// Swap positions (0,1), (2,3), ...; a trailing odd element stays put.
    SwapAdjacent,
    /// Rotate left by `k` (modulo the sentence length).
    RotateK(usize),
}

impl OrderTransform {
    pub fn apply<T: Clone>(&self, seq: &[T]) -> Vec<T> {
        let n = seq.len();
        match *self {
            OrderTransform::Identity => seq.to_vec(),
            OrderTransform::Reverse => seq.iter().rev().cloned().collect(),
            OrderTransform::SwapAdjacent => {
                let mut out = seq.to_vec();
                for pair in out.chunks_mut(2) {
                    if pair.len() == 2 {
                        pair.swap(0, 1);
                    }
                }
                out
            }
            OrderTransform::RotateK(k) => {
                if n == 0 {
                    return Vec::new();
                }
                (0..n).map(|i| seq[(i + k) % n].clone()).collect()
            }
        }
    }

    pub fn invert<T: Clone>(&self, seq: &[T]) -> Vec<T> {
        let n = seq.len();
        match *self {
            OrderTransform::RotateK(k) => {
                if n == 0 {
                    return Vec::new();
                }
                let k = k % n;
                (0..n).map(|i| seq[(i + n - k) % n].clone()).collect()
            }
            // the others are involutions
            other => other.apply(seq),
        }
    }
}

/// Definition of one synthetic language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub tag: String,
    pub lexicon_seed: u64,
    #[serde(rename = "order")]
    pub order_transform: OrderTransform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix: Option<String>,
    pub family_id: String,
    pub alphabet_id: String,
    /// Probability that a concept keeps its family root word instead of a
    /// language-specific one. Zero gives a lexicon unrelated to the family.
    #[serde(default)]
    pub cognate_rate: f64,
}

impl LanguageSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tag.is_empty()
            || !self
                .tag
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-')
        {
            return Err(Error::Manifest(format!(
                "language tag {:?} must be non-empty ASCII alphanumerics or '-'",
                self.tag
            )));
        }
        if let Some(s) = &self.suffix {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::Manifest(format!(
                    "suffix {s:?} of {} must be non-empty without whitespace",
                    self.tag
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.cognate_rate) {
            return Err(Error::Manifest(format!(
                "cognate_rate of {} must lie in [0,1]",
                self.tag
            )));
        }
        Alphabet::by_id(&self.alphabet_id)?;
        Ok(())
    }
}

/// Check that languages sharing a family agree on everything but lexicon
/// seed and suffix.
pub fn check_family_coherence(specs: &[LanguageSpec]) -> Result<()> {
    let mut first: HashMap<&str, &LanguageSpec> = HashMap::new();
    for spec in specs {
        match first.get(spec.family_id.as_str()) {
            None => {
                first.insert(&spec.family_id, spec);
            }
            Some(head) => {
                if head.order_transform != spec.order_transform
                    || head.alphabet_id != spec.alphabet_id
                    || head.cognate_rate != spec.cognate_rate
                {
                    return Err(Error::Manifest(format!(
                        "languages {} and {} share family {} but differ in order, alphabet or cognate rate",
                        head.tag, spec.tag, spec.family_id
                    )));
                }
            }
        }
    }
    Ok(())
}

/// A bijection between concept ids and surface words.
#[derive(Debug, Clone)]
pub struct Lexicon {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Lexicon {
    pub fn from_words(words: Vec<String>) -> Result<Lexicon> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Manifest(format!("invalid lexicon word {w:?}")));
            }
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Manifest(format!("duplicate lexicon word {w:?}")));
            }
        }
        Ok(Lexicon { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, concept: u32) -> Option<&str> {
        self.words.get(concept as usize).map(String::as_str)
    }

    pub fn concept(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Family root words, consonant-initial, generated in concept order so that a
/// larger vocabulary extends a smaller one.
fn family_roots(alphabet: &Alphabet, family_id: &str, n: usize) -> Vec<String> {
    let mut rng = rng_from_seed(derive_seed(0x5eed_f00d, &format!("root:{family_id}:{}", alphabet.id)));
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = alphabet.word(&mut rng, true);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// A language ready to realize and parse sentences.
#[derive(Debug, Clone)]
pub struct Language {
    pub spec: LanguageSpec,
    lexicon: Lexicon,
}

impl Language {
    /// Materialize the lexicon for concepts `0..concept_count`.
    pub fn new(spec: LanguageSpec, concept_count: usize) -> Result<Language> {
        spec.validate()?;
        let alphabet = Alphabet::by_id(&spec.alphabet_id)?;
        let roots = if spec.cognate_rate > 0.0 {
            family_roots(&alphabet, &spec.family_id, concept_count)
        } else {
            Vec::new()
        };
        let mut rng = rng_from_seed(derive_seed(spec.lexicon_seed, "lexicon"));
        let mut own = HashSet::new();
        let suffix = spec.suffix.as_deref().unwrap_or("");
        let mut words = Vec::with_capacity(concept_count);
        for c in 0..concept_count {
            let keep_root = spec.cognate_rate > 0.0 && {
                let mut r = rng_from_seed(derive_seed(spec.lexicon_seed, &format!("cognate:{c}")));
                unit_f64(&mut r) < spec.cognate_rate
            };
            let stem = if keep_root {
                roots[c].clone()
            } else {
                loop {
                    let w = alphabet.word(&mut rng, false);
                    if own.insert(w.clone()) {
                        break w;
                    }
                }
            };
            words.push(format!("{stem}{suffix}"));
        }
        let lexicon = Lexicon::from_words(words)?;
        Ok(Language { spec, lexicon })
    }

    /// Use an explicit lexicon instead of the generated one.
    pub fn with_lexicon(spec: LanguageSpec, lexicon: Lexicon) -> Language {
        Language { spec, lexicon }
    }

    pub fn tag(&self) -> &str {
        &self.spec.tag
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn concept_count(&self) -> usize {
        self.lexicon.len()
    }

    /// Reorder, look up and join a concept sequence.
    pub fn realize(&self, concepts: &[u32]) -> Result<String> {
        let ordered = self.spec.order_transform.apply(concepts);
        let mut words = Vec::with_capacity(ordered.len());
        for c in ordered {
            let w = self.lexicon.word(c).ok_or(Error::ConceptOutOfRange {
                id: c,
                size: self.lexicon.len(),
            })?;
            words.push(w);
        }
        Ok(words.join(" "))
    }

    /// Recover the concept sequence of a valid sentence.
    pub fn parse(&self, text: &str) -> Result<Vec<u32>> {
        let mut ordered = Vec::new();
        for w in text.split_whitespace() {
            let c = self.lexicon.concept(w).ok_or_else(|| Error::UnknownWord {
                word: w.to_string(),
                lang: self.spec.tag.clone(),
            })?;
            ordered.push(c);
        }
        Ok(self.spec.order_transform.invert(&ordered))
    }
}

/// Exact reference translation between two synthetic languages.
pub fn ground_truth_translate(text: &str, from: &Language, to: &Language) -> Result<String> {
    let concepts = from.parse(text)?;
    to.realize(&concepts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(tag: &str, order: OrderTransform, suffix: Option<&str>) -> LanguageSpec {
        LanguageSpec {
            tag: tag.into(),
            lexicon_seed: 11,
            order_transform: order,
            suffix: suffix.map(str::to_string),
            family_id: "f".into(),
            alphabet_id: "latin".into(),
            cognate_rate: 0.0,
        }
    }

    fn toy(order: OrderTransform, suffix: Option<&str>) -> Language {
        let sfx = suffix.unwrap_or("");
        let words = ["zu", "po", "ne", "ka"].iter().map(|w| format!("{w}{sfx}")).collect();
        Language::with_lexicon(spec("toy", order, suffix), Lexicon::from_words(words).unwrap())
    }

    #[test]
    fn realize_identity() {
        let lang = toy(OrderTransform::Identity, None);
        assert_eq!(lang.realize(&[3, 1, 2]).unwrap(), "ka po ne");
    }

    #[test]
    fn realize_reverse() {
        let lang = toy(OrderTransform::Reverse, None);
        assert_eq!(lang.realize(&[3, 1, 2]).unwrap(), "ne po ka");
    }

    #[test]
    fn realize_suffix() {
        let lang = toy(OrderTransform::Identity, Some("-ta"));
        assert_eq!(lang.realize(&[3]).unwrap(), "ka-ta");
    }

    #[test]
    fn realize_rejects_out_of_range() {
        let lang = toy(OrderTransform::Identity, None);
        assert!(matches!(
            lang.realize(&[4]),
            Err(Error::ConceptOutOfRange { id: 4, size: 4 })
        ));
    }

    #[test]
    fn parse_rejects_unknown_word() {
        let lang = toy(OrderTransform::Identity, None);
        assert!(matches!(lang.parse("ka xyz"), Err(Error::UnknownWord { .. })));
    }

    #[test]
    fn rotate_and_swap_invert() {
        let seq: Vec<u32> = (0..7).collect();
        for t in [
            OrderTransform::SwapAdjacent,
            OrderTransform::RotateK(3),
            OrderTransform::RotateK(10),
            OrderTransform::Reverse,
        ] {
            assert_eq!(t.invert(&t.apply(&seq)), seq, "{t:?}");
        }
        assert_eq!(OrderTransform::SwapAdjacent.apply(&[1, 2, 3]), vec![2, 1, 3]);
        assert_eq!(OrderTransform::RotateK(1).apply(&[1, 2, 3]), vec![2, 3, 1]);
    }

    #[test]
    fn generated_lexicon_is_prefix_stable_and_pronounceable() {
        let mut s = spec("a", OrderTransform::Identity, None);
        s.cognate_rate = 0.5;
        let small = Language::new(s.clone(), 50).unwrap();
        let big = Language::new(s, 200).unwrap();
        assert_eq!(small.lexicon().words(), &big.lexicon().words()[..50]);
        for w in big.lexicon().words() {
            let n = w.chars().count();
            assert!((3..=6).contains(&n), "{w}");
        }
    }

    #[test]
    fn cognates_are_shared_within_family() {
        let mut a = spec("a", OrderTransform::Identity, None);
        a.cognate_rate = 0.8;
        let mut b = a.clone();
        b.tag = "b".into();
        b.lexicon_seed = 99;
        let la = Language::new(a, 300).unwrap();
        let lb = Language::new(b, 300).unwrap();
        let shared = (0..300u32)
            .filter(|&c| la.lexicon().word(c) == lb.lexicon().word(c))
            .count();
        // both keep the root with probability 0.8 each: expected 0.64 * 300 = 192
        assert!((150..=235).contains(&shared), "shared = {shared}");
    }

    #[test]
    fn family_coherence_violation_detected() {
        let a = spec("a", OrderTransform::Identity, None);
        let mut b = spec("b", OrderTransform::Reverse, None);
        assert!(check_family_coherence(&[a.clone(), b.clone()]).is_err());
        b.order_transform = OrderTransform::Identity;
        b.suffix = Some("-x".into());
        assert!(check_family_coherence(&[a, b]).is_ok());
    }

    proptest! {
        #[test]
        fn parse_inverts_realize(concepts in proptest::collection::vec(0u32..120, 0..20),
                                 k in 0usize..5, which in 0usize..4, rate in 0.0f64..1.0) {
            let order = [OrderTransform::Identity, OrderTransform::Reverse,
                         OrderTransform::SwapAdjacent, OrderTransform::RotateK(k)][which];
            let mut s = spec("p", order, Some("-ri"));
            s.cognate_rate = rate;
            let lang = Language::new(s, 120).unwrap();
            let text = lang.realize(&concepts).unwrap();
            prop_assert_eq!(lang.parse(&text).unwrap(), concepts);
        }

        #[test]
        fn translation_round_trips(concepts in proptest::collection::vec(0u32..60, 1..15)) {
            let a = Language::new(spec("a", OrderTransform::Reverse, None), 60).unwrap();
            let mut sb = spec("b", OrderTransform::RotateK(2), Some("-mo"));
            sb.lexicon_seed = 5;
            sb.alphabet_id = "greek".into();
            let b = Language::new(sb, 60).unwrap();
            let x = a.realize(&concepts).unwrap();
            prop_assert_eq!(ground_truth_translate(&x, &a, &a).unwrap(), x.clone());
            let y = ground_truth_translate(&x, &a, &b).unwrap();
            prop_assert_eq!(ground_truth_translate(&y, &b, &a).unwrap(), x);
        }
    }
}
