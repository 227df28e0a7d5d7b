//! Synthetic multilingual corpora with exact ground truth, plus readers for
//! external plain-text corpora.

mod alphabet;
mod ingest;
mod interlingua;
mod language;
mod manifest;

use serde::{Deserialize, Serialize};

pub use alphabet::Alphabet;
pub use ingest::{ingest_external, Example, Ingest, IngestSummary, Layout, Skipped};
pub use interlingua::{gen_interlingua, DomainSpec, ZipfTable};
pub use language::{
    check_family_coherence, ground_truth_translate, Language, LanguageSpec, Lexicon, OrderTransform,
};
pub use manifest::{
    build_corpus, BuildSummary, CorpusManifest, MonoEntry, MonoLine, ParallelEntry, World,
    SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParallelExample {
    pub src_lang: String,
    pub tgt_lang: String,
    pub src_text: String,
    pub tgt_text: String,
}

impl ParallelExample {
    pub fn reversed(&self) -> ParallelExample {
        ParallelExample {
            src_lang: self.tgt_lang.clone(),
            tgt_lang: self.src_lang.clone(),
            src_text: self.tgt_text.clone(),
            tgt_text: self.src_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MonoExample {
    pub lang: String,
    pub text: String,
}
