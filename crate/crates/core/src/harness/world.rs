//! The desk-scale world every scenario draws from: a latin pivot and two
//! three-language families.

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, DomainSpec, LanguageSpec, OrderTransform, SCHEMA_VERSION};

pub const PIVOT: &str = "pv";
pub const FAMILY_A: [&str; 3] = ["a1", "a2", "a3"];
pub const FAMILY_B: [&str; 3] = ["b1", "b2", "b3"];
/// The default zero-resource language.
pub const ZERO: &str = "a3";
/// Supervised languages in the order sweeps add them; the related one first.
pub const SUPERVISED_ORDER: [&str; 4] = ["a1", "a2", "b1", "b2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeskWorld {
    pub seed: u64,
    pub concepts: usize,
    pub length_min: usize,
    pub length_max: usize,
    pub zipf_exponent: f64,
    pub coherence: f64,
    pub successors: usize,
    pub cognate_rate: f64,
    /// Mono sentences per language.
    pub mono_sentences: usize,
    /// Parallel pairs per supervised language when the count is per language.
    pub parallel_sentences: usize,
    /// Parallel pairs shared out when the total is held fixed.
    pub parallel_total: usize,
    pub test_sentences: usize,
}

impl Default for DeskWorld {
    fn default() -> Self {
        DeskWorld {
            seed: 3,
            concepts: 60,
            length_min: 4,
            length_max: 9,
            zipf_exponent: 1.0,
            coherence: 0.95,
            successors: 2,
            cognate_rate: 0.7,
            mono_sentences: 5000,
            parallel_sentences: 2500,
            parallel_total: 10000,
            test_sentences: 300,
        }
    }
}

impl DeskWorld {
    pub fn languages() -> Vec<String> {
        std::iter::once(PIVOT)
            .chain(FAMILY_A)
            .chain(FAMILY_B)
            .map(String::from)
            .collect()
    }

    /// Same length range and structure for both domains; `bible` has its
    /// own successor sets, frequency ranking and a steeper Zipf tail.
    pub fn domains(&self) -> Vec<DomainSpec> {
        let news = DomainSpec {
            length_min: self.length_min,
            length_max: self.length_max,
            zipf_exponent: self.zipf_exponent,
            coherence: self.coherence,
            successors: self.successors,
            structure_seed: 0,
            rank_seed: None,
            ..DomainSpec::news(self.concepts)
        };
        let bible = DomainSpec {
            id: "bible".into(),
            zipf_exponent: self.zipf_exponent + 0.3,
            structure_seed: 1,
            rank_seed: Some(1),
            ..news.clone()
        };
        vec![news, bible]
    }

    fn language(&self, tag: &str) -> LanguageSpec {
        let (family, alphabet, order, seed) = match tag {
            PIVOT => ("pivot", "latin", OrderTransform::Identity, 1),
            t if FAMILY_A.contains(&t) => ("a", "greek", OrderTransform::Reverse, 10),
            _ => ("b", "cyrillic", OrderTransform::SwapAdjacent, 20),
        };
        let index = tag[1..].parse::<u64>().unwrap_or(0);
        LanguageSpec {
            tag: tag.into(),
            lexicon_seed: seed + index,
            order_transform: order,
            suffix: None,
            family_id: family.into(),
            alphabet_id: alphabet.into(),
            cognate_rate: if tag == PIVOT { 0.0 } else { self.cognate_rate },
        }
    }

    /// Languages and domains only; runs add their own corpus entries.
    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            domains: self.domains(),
            languages: Self::languages().iter().map(|t| self.language(t)).collect(),
            mono: Vec::new(),
            parallel: Vec::new(),
        }
    }
}
