//! Untokenized training text and its conversion to task data.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::corpus::{CorpusManifest, World};
use crate::error::{Error, IoContext, Result};
use crate::sampler::{SamplingSchedule, TaskData};
use crate::tokenizer::Vocabulary;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextCorpus {
    pub mono: BTreeMap<String, Vec<String>>,
    pub parallel: BTreeMap<(String, String), Vec<(String, String)>>,
}

impl TextCorpus {
    /// Generate the train-split entries of a manifest in memory.
    pub fn generate(world: &World) -> Result<TextCorpus> {
        let mut c = TextCorpus::default();
        for e in world.manifest.mono.iter().filter(|e| e.split == "train") {
            let lines = world.mono_lines(e)?.into_iter().map(|l| l.text);
            c.mono.entry(e.lang.clone()).or_default().extend(lines);
        }
        for e in world.manifest.parallel.iter().filter(|e| e.split == "train") {
            let pairs = world.parallel_lines(e)?;
            c.parallel.entry((e.src.clone(), e.tgt.clone())).or_default().extend(pairs);
        }
        Ok(c)
    }

    /// Read the train-split files of a corpus directory written by
    /// `build_corpus`.
    pub fn load(dir: &Path) -> Result<TextCorpus> {
        let manifest = CorpusManifest::load(&dir.join("manifest.toml"))?;
        let mut c = TextCorpus::default();
        for e in manifest.mono.iter().filter(|e| e.split == "train") {
            let p = dir.join(e.rel_path());
            let text = fs::read_to_string(&p).at(&p)?;
            c.mono
                .entry(e.lang.clone())
                .or_default()
                .extend(text.lines().filter(|l| !l.trim().is_empty()).map(String::from));
        }
        for e in manifest.parallel.iter().filter(|e| e.split == "train") {
            let p = dir.join(e.rel_path());
            let text = fs::read_to_string(&p).at(&p)?;
            let rows = c.parallel.entry((e.src.clone(), e.tgt.clone())).or_default();
            for (i, line) in text.lines().enumerate() {
                let (a, b) = line
                    .split_once('\t')
                    .ok_or_else(|| Error::Parse(format!("{}:{}: expected a tab", p.display(), i + 1)))?;
                rows.push((a.to_string(), b.to_string()));
            }
        }
        Ok(c)
    }

    pub fn lines(&self) -> impl Iterator<Item = &str> {
        self.parallel
            .values()
            .flat_map(|rows| rows.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]))
            .chain(self.mono.values().flat_map(|rows| rows.iter().map(String::as_str)))
    }

    pub fn task_data(&self, vocab: &Vocabulary) -> PreparedData {
        let mut data = TaskData::default();
        let mut sizes = BTreeMap::new();
        for ((src, tgt), pairs) in &self.parallel {
            let rows = pairs.iter().map(|(a, b)| (vocab.encode_text(a), vocab.encode_text(b))).collect();
            data.add_pair(src, tgt, rows);
            sizes.insert((src.clone(), tgt.clone()), pairs.len() as u64);
        }
        for (lang, text) in &self.mono {
            data.add_mono(lang, text.iter().map(|t| vocab.encode_text(t)).collect());
        }
        PreparedData { data, sizes, mono_langs: self.mono.keys().cloned().collect() }
    }
}

pub struct PreparedData {
    pub data: TaskData,
    pub sizes: BTreeMap<(String, String), u64>,
    pub mono_langs: Vec<String>,
}

impl PreparedData {
    /// Schedule with the requested mono share, forced to 0 or 1 when one
    /// side has no data.
    pub fn schedule(&self, temperature: f64, mono_fraction: f64) -> Result<SamplingSchedule> {
        let f = if self.mono_langs.is_empty() {
            0.0
        } else if self.sizes.is_empty() {
            1.0
        } else {
            mono_fraction
        };
        SamplingSchedule::new(&self.sizes, &self.mono_langs, temperature, f)
    }
}
