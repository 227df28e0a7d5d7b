//! Corpus manifests and the deterministic on-disk corpus builder.
//!
//! Manifest schema (TOML, `schema_version = 1`):
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [[domains]]
//! id = "news"
//! concept_vocab_size = 100
//! length_min = 6
//! length_max = 16
//! zipf_exponent = 1.1
//!
//! [[languages]]
//! tag = "pv"
//! lexicon_seed = 1
//! order = "identity"            # identity | reverse | swap_adjacent | { rotate_k = 2 }
//! family_id = "pivot"
//! alphabet_id = "latin"
//! suffix = "-ta"                # optional
//! cognate_rate = 0.0            # optional
//!
//! [[mono]]
//! lang = "a1"
//! domain = "news"
//! count = 1000
//! split = "train"               # optional, default "train"
//! noise_rate = 0.3              # optional contamination
//! noise_langs = ["b1"]
//!
//! [[parallel]]
//! src = "pv"
//! tgt = "a1"
//! domain = "news"
//! count = 500
//! split = "train"
//! ```
//!
//! Files are written as `mono/<split>/<domain>/<lang>.txt` and
//! `parallel/<split>/<domain>/<src>__<tgt>.tsv`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::interlingua::{gen_interlingua, DomainSpec};
use super::language::{check_family_coherence, Language, LanguageSpec};
use crate::error::{Error, IoContext, Result};
use crate::util::{derive_seed, rng_from_seed, unit_f64};
use rand::Rng as _;

pub const SCHEMA_VERSION: u32 = 1;

fn default_split() -> String {
    "train".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonoEntry {
    pub lang: String,
    pub domain: String,
    pub count: usize,
    #[serde(default = "default_split")]
    pub split: String,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub noise_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noise_langs: Vec<String>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl MonoEntry {
    pub fn new(lang: &str, domain: &str, count: usize, split: &str) -> MonoEntry {
        MonoEntry {
            lang: lang.into(),
            domain: domain.into(),
            count,
            split: split.into(),
            noise_rate: 0.0,
            noise_langs: Vec::new(),
        }
    }

    pub fn rel_path(&self) -> PathBuf {
        PathBuf::from("mono")
            .join(&self.split)
            .join(&self.domain)
            .join(format!("{}.txt", self.lang))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelEntry {
    pub src: String,
    pub tgt: String,
    pub domain: String,
    pub count: usize,
    #[serde(default = "default_split")]
    pub split: String,
}

impl ParallelEntry {
    pub fn new(src: &str, tgt: &str, domain: &str, count: usize, split: &str) -> ParallelEntry {
        ParallelEntry {
            src: src.into(),
            tgt: tgt.into(),
            domain: domain.into(),
            count,
            split: split.into(),
        }
    }

    pub fn rel_path(&self) -> PathBuf {
        PathBuf::from("parallel")
            .join(&self.split)
            .join(&self.domain)
            .join(format!("{}__{}.tsv", self.src, self.tgt))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub domains: Vec<DomainSpec>,
    pub languages: Vec<LanguageSpec>,
    #[serde(default)]
    pub mono: Vec<MonoEntry>,
    #[serde(default)]
    pub parallel: Vec<ParallelEntry>,
}

impl CorpusManifest {
    pub fn from_toml(text: &str) -> Result<CorpusManifest> {
        let m: CorpusManifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<CorpusManifest> {
        let text = fs::read_to_string(path).at(path)?;
        CorpusManifest::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut domains = BTreeSet::new();
        for d in &self.domains {
            d.validate()?;
            if !domains.insert(d.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate domain {}", d.id)));
            }
        }
        let mut tags = BTreeSet::new();
        for l in &self.languages {
            l.validate()?;
            if !tags.insert(l.tag.as_str()) {
                return Err(Error::Manifest(format!("duplicate language {}", l.tag)));
            }
        }
        check_family_coherence(&self.languages)?;
        let lang_ok = |t: &str| -> Result<()> {
            if tags.contains(t) {
                Ok(())
            } else {
                Err(Error::Manifest(format!("unknown language {t}")))
            }
        };
        let domain_ok = |d: &str| -> Result<()> {
            if domains.contains(d) {
                Ok(())
            } else {
                Err(Error::Manifest(format!("unknown domain {d}")))
            }
        };
        let mut files = BTreeSet::new();
        for m in &self.mono {
            lang_ok(&m.lang)?;
            domain_ok(&m.domain)?;
            for n in &m.noise_langs {
                lang_ok(n)?;
            }
            if !(0.0..=1.0).contains(&m.noise_rate) || (m.noise_rate > 0.0 && m.noise_langs.is_empty()) {
                return Err(Error::Manifest(format!(
                    "mono {}: noise_rate must be in [0,1] and needs noise_langs",
                    m.lang
                )));
            }
            if !files.insert(m.rel_path()) {
                return Err(Error::Manifest(format!("duplicate mono entry {}", m.rel_path().display())));
            }
        }
        for p in &self.parallel {
            lang_ok(&p.src)?;
            lang_ok(&p.tgt)?;
            domain_ok(&p.domain)?;
            if p.src == p.tgt {
                return Err(Error::Manifest(format!("parallel pair {}-{} is not a pair", p.src, p.tgt)));
            }
            if !files.insert(p.rel_path()) {
                return Err(Error::Manifest(format!(
                    "duplicate parallel entry {}",
                    p.rel_path().display()
                )));
            }
        }
        Ok(())
    }

    /// Size of the concept space shared by all domains.
    pub fn concept_count(&self) -> usize {
        self.domains.iter().map(|d| d.concept_vocab_size).max().unwrap_or(0)
    }

    pub fn domain(&self, id: &str) -> Result<&DomainSpec> {
        self.domains
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| Error::Manifest(format!("unknown domain {id}")))
    }
}

/// One line of a generated monolingual file, with the language that
/// actually produced it (differs from the file language for noise lines).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonoLine {
    pub text: String,
    pub source_lang: String,
}

/// The materialized languages of a manifest.
#[derive(Debug, Clone)]
pub struct World {
    pub manifest: CorpusManifest,
    languages: HashMap<String, Language>,
}

impl World {
    pub fn new(manifest: CorpusManifest) -> Result<World> {
        manifest.validate()?;
        let n = manifest.concept_count();
        let languages = manifest
            .languages
            .iter()
            .map(|s| Ok((s.tag.clone(), Language::new(s.clone(), n)?)))
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(World { manifest, languages })
    }

    pub fn language(&self, tag: &str) -> Result<&Language> {
        self.languages
            .get(tag)
            .ok_or_else(|| Error::UnknownLanguage(tag.to_string()))
    }

    pub fn file_seed(&self, rel: &Path) -> u64 {
        derive_seed(self.manifest.seed, &rel.to_string_lossy())
    }

    pub fn mono_lines(&self, entry: &MonoEntry) -> Result<Vec<MonoLine>> {
        let domain = self.manifest.domain(&entry.domain)?;
        let seed = self.file_seed(&entry.rel_path());
        let concepts = gen_interlingua(domain, entry.count, seed)?;
        let main = self.language(&entry.lang)?;
        let noise: Vec<&Language> = entry
            .noise_langs
            .iter()
            .map(|t| self.language(t))
            .collect::<Result<_>>()?;
        let mut rng = rng_from_seed(derive_seed(seed, "noise"));
        concepts
            .iter()
            .map(|seq| {
                let lang = if entry.noise_rate > 0.0 && unit_f64(&mut rng) < entry.noise_rate {
                    noise[rng.gen_range(0..noise.len())]
                } else {
                    main
                };
                Ok(MonoLine {
                    text: lang.realize(seq)?,
                    source_lang: lang.tag().to_string(),
                })
            })
            .collect()
    }

    pub fn parallel_lines(&self, entry: &ParallelEntry) -> Result<Vec<(String, String)>> {
        let domain = self.manifest.domain(&entry.domain)?;
        let concepts = gen_interlingua(domain, entry.count, self.file_seed(&entry.rel_path()))?;
        let src = self.language(&entry.src)?;
        let tgt = self.language(&entry.tgt)?;
        concepts
            .iter()
            .map(|seq| Ok((src.realize(seq)?, tgt.realize(seq)?)))
            .collect()
    }
}

/// Summary of a `build_corpus` run: relative path → line count.
pub type BuildSummary = BTreeMap<PathBuf, usize>;

/// Write every corpus file of the manifest under `out`.
pub fn build_corpus(manifest: &CorpusManifest, out: &Path) -> Result<BuildSummary> {
    let world = World::new(manifest.clone())?;
    fs::create_dir_all(out).at(out)?;
    let manifest_path = out.join("manifest.toml");
    fs::write(&manifest_path, manifest.to_toml()).at(&manifest_path)?;
    let mut summary = BuildSummary::new();
    for entry in &manifest.mono {
        let lines = world.mono_lines(entry)?;
        let mut body = String::new();
        for l in &lines {
            body.push_str(&l.text);
            body.push('\n');
        }
        write_file(out, &entry.rel_path(), &body)?;
        summary.insert(entry.rel_path(), lines.len());
    }
    for entry in &manifest.parallel {
        let pairs = world.parallel_lines(entry)?;
        let mut body = String::new();
        for (s, t) in &pairs {
            body.push_str(s);
            body.push('\t');
            body.push_str(t);
            body.push('\n');
        }
        write_file(out, &entry.rel_path(), &body)?;
        summary.insert(entry.rel_path(), pairs.len());
    }
    Ok(summary)
}

fn write_file(root: &Path, rel: &Path, body: &str) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    fs::write(&path, body).at(&path)
}
