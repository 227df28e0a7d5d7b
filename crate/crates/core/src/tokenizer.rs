//! Shared multilingual vocabulary: whitespace words or a minimal BPE, with
//! fixed special tokens and one `<2xx>` target-language tag per language.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::util::sha256_hex;

pub const PAD: u32 = 0;
pub const EOS: u32 = 1;
pub const UNK: u32 = 2;
pub const MASK: u32 = 3;
const FIXED_SPECIALS: [&str; 4] = ["<pad>", "</s>", "<unk>", "<mask>"];

const VOCAB_HEADER: &str = "#mtlab-vocab v1";
const BPE_HEADER: &str = "#mtlab-bpe v1";
pub const END_OF_WORD: &str = "</w>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabMode {
    Word,
    Bpe,
}

impl std::str::FromStr for VocabMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(VocabMode::Word),
            "bpe" => Ok(VocabMode::Bpe),
            other => Err(Error::InvalidArgument(format!("unknown vocabulary mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for VocabMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VocabMode::Word => "word",
            VocabMode::Bpe => "bpe",
        })
    }
}

pub fn tag_token(lang: &str) -> String {
    format!("<2{lang}>")
}

/// Split a whitespace word into morphemes: a hyphen starts a new piece.
fn morphemes(word: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, ch) in word.char_indices() {
        if ch == '-' && i > start {
            out.push(&word[start..i]);
            start = i;
        }
    }
    out.push(&word[start..]);
    out
}

/// Initial symbol sequences of a word: one per morpheme, characters with the
/// end-of-word marker on the very last one.
fn initial_symbols(word: &str) -> Vec<Vec<String>> {
    let pieces = morphemes(word);
    let last = pieces.len() - 1;
    pieces
        .iter()
        .enumerate()
        .map(|(pi, piece)| {
            let chars: Vec<char> = piece.chars().collect();
            chars
                .iter()
                .enumerate()
                .map(|(ci, ch)| {
                    if pi == last && ci + 1 == chars.len() {
                        format!("{ch}{END_OF_WORD}")
                    } else {
                        ch.to_string()
                    }
                })
                .collect()
        })
        .collect()
}

/// Ordered merge rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl BpeModel {
    pub fn new(merges: Vec<(String, String)>) -> BpeModel {
        let ranks = merges.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        BpeModel { merges, ranks }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Apply merges by rank until none applies.
    pub fn segment(&self, symbols: &mut Vec<String>) {
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    self.ranks
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|&r| (r, i))
                })
                .min();
            let Some((rank, _)) = best else { break };
            let (l, r) = &self.merges[rank];
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == l && &symbols[i + 1] == r {
                    out.push(format!("{l}{r}"));
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            *symbols = out;
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(BPE_HEADER);
        s.push('\n');
        for (l, r) in &self.merges {
            s.push_str(l);
            s.push(' ');
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<BpeModel> {
        let mut lines = text.lines();
        if lines.next() != Some(BPE_HEADER) {
            return Err(Error::Parse("missing BPE merges header".into()));
        }
        let merges = lines
            .map(|l| {
                l.split_once(' ')
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .ok_or_else(|| Error::Parse(format!("bad merge line {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BpeModel::new(merges))
    }
}

/// Token ↔ id bijection with specials first.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    mode: VocabMode,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    langs: Vec<String>,
    bpe: Option<BpeModel>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode && self.tokens == other.tokens && self.bpe == other.bpe
    }
}

impl Vocabulary {
    fn assemble(mode: VocabMode, langs: &[String], text_tokens: Vec<String>, bpe: Option<BpeModel>) -> Result<Vocabulary> {
        let mut tokens: Vec<String> = FIXED_SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(langs.iter().map(|l| tag_token(l)));
        tokens.extend(text_tokens);
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Parse(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary {
            mode,
            tokens,
            index,
            langs: langs.to_vec(),
            bpe,
        })
    }

    pub fn mode(&self) -> VocabMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_specials(&self) -> usize {
        FIXED_SPECIALS.len() + self.langs.len()
    }

    pub fn languages(&self) -> &[String] {
        &self.langs
    }

    pub fn bpe(&self) -> Option<&BpeModel> {
        self.bpe.as_ref()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < self.num_specials()
    }

    pub fn tag_id(&self, lang: &str) -> Result<u32> {
        self.id(&tag_token(lang))
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    /// Ids of the text tokens of `text`, without tag or EOS.
    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            match &self.bpe {
                None => out.push(self.id(word).unwrap_or(UNK)),
                Some(bpe) => {
                    for mut piece in initial_symbols(word) {
                        bpe.segment(&mut piece);
                        for sym in &piece {
                            match self.id(sym) {
                                Some(id) => out.push(id),
                                // character fallback, then UNK
                                None => out.extend(sym_chars(sym).map(|c| self.id(&c).unwrap_or(UNK))),
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `[<2tgt>] + text ids + [EOS]`.
    pub fn encode(&self, text: &str, target_lang: Option<&str>) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        if let Some(lang) = target_lang {
            out.push(self.tag_id(lang)?);
        }
        out.extend(self.encode_text(text));
        out.push(EOS);
        Ok(out)
    }

    /// Drop specials and join the remaining tokens.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or(Error::TokenOutOfRange { id, size: self.len() })?;
            if self.is_special(id) {
                continue;
            }
            match self.mode {
                VocabMode::Word => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
                VocabMode::Bpe => match tok.strip_suffix(END_OF_WORD) {
                    Some(stem) => {
                        out.push_str(stem);
                        out.push(' ');
                    }
                    None => out.push_str(tok),
                },
            }
        }
        Ok(out.trim_end().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{VOCAB_HEADER} mode={} langs={}\n", self.mode, self.langs.join(","));
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, bpe: Option<BpeModel>) -> Result<Vocabulary> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let rest = header
            .strip_prefix(VOCAB_HEADER)
            .ok_or_else(|| Error::Parse("missing vocabulary header".into()))?;
        let mut mode = None;
        let mut langs = Vec::new();
        for field in rest.split_whitespace() {
            if let Some(m) = field.strip_prefix("mode=") {
                mode = Some(m.parse::<VocabMode>()?);
            } else if let Some(l) = field.strip_prefix("langs=") {
                langs = l.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect();
            }
        }
        let mode = mode.ok_or_else(|| Error::Parse("vocabulary header lacks mode".into()))?;
        if (mode == VocabMode::Bpe) != bpe.is_some() {
            return Err(Error::Parse("BPE vocabulary requires its merges file (and only then)".into()));
        }
        let tokens: Vec<String> = lines.map(str::to_string).collect();
        let n_special = FIXED_SPECIALS.len() + langs.len();
        if tokens.len() < n_special
            || tokens[..FIXED_SPECIALS.len()] != FIXED_SPECIALS
            || tokens[FIXED_SPECIALS.len()..n_special]
                .iter()
                .zip(&langs)
                .any(|(t, l)| *t != tag_token(l))
        {
            return Err(Error::Parse("vocabulary specials are malformed".into()));
        }
        Vocabulary::assemble(mode, &langs, tokens[n_special..].to_vec(), bpe)
    }

    /// Write `vocab.txt` (and `merges.txt` in BPE mode) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).at(dir)?;
        let vp = dir.join("vocab.txt");
        fs::write(&vp, self.to_text()).at(&vp)?;
        if let Some(bpe) = &self.bpe {
            let mp = dir.join("merges.txt");
            fs::write(&mp, bpe.to_text()).at(&mp)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Vocabulary> {
        let vp = dir.join("vocab.txt");
        let text = fs::read_to_string(&vp).at(&vp)?;
        let mp = dir.join("merges.txt");
        let bpe = if mp.exists() {
            Some(BpeModel::from_text(&fs::read_to_string(&mp).at(&mp)?)?)
        } else {
            None
        };
        Vocabulary::from_text(&text, bpe)
    }

    /// Content hash used to bind checkpoints to a vocabulary.
    pub fn hash(&self) -> String {
        let mut bytes = self.to_text().into_bytes();
        if let Some(bpe) = &self.bpe {
            bytes.extend(bpe.to_text().into_bytes());
        }
        sha256_hex(&bytes)
    }
}

fn sym_chars(sym: &str) -> impl Iterator<Item = String> + '_ {
    let (body, eow) = match sym.strip_suffix(END_OF_WORD) {
        Some(b) => (b, true),
        None => (sym, false),
    };
    let n = body.chars().count();
    body.chars().enumerate().map(move |(i, c)| {
        if eow && i + 1 == n {
            format!("{c}{END_OF_WORD}")
        } else {
            c.to_string()
        }
    })
}

/// Train a vocabulary of `size` ids in total (specials included) over the
/// given lines. `langs` fixes the `<2xx>` tags.
pub fn train_vocab<'a, I>(lines: I, langs: &[String], size: usize, mode: VocabMode) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a str>,
{
    let n_special = FIXED_SPECIALS.len() + langs.len();
    if size <= n_special {
        return Err(Error::InvalidArgument(format!(
            "vocabulary size {size} must exceed the {n_special} special tokens"
        )));
    }
    let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
    for line in lines {
        for w in line.split_whitespace() {
            *word_counts.entry(w.to_string()).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(Error::EmptyCorpus("no tokens to build a vocabulary from".into()));
    }
    let budget = size - n_special;
    match mode {
        VocabMode::Word => {
            let mut ranked: Vec<(String, u64)> = word_counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let tokens = ranked.into_iter().take(budget).map(|(w, _)| w).collect();
            Vocabulary::assemble(VocabMode::Word, langs, tokens, None)
        }
        VocabMode::Bpe => {
            let (tokens, merges) = train_bpe(&word_counts, budget);
            Vocabulary::assemble(VocabMode::Bpe, langs, tokens, Some(BpeModel::new(merges)))
        }
    }
}

fn train_bpe(word_counts: &BTreeMap<String, u64>, budget: usize) -> (Vec<String>, Vec<(String, String)>) {
    let mut pieces: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for (w, &c) in word_counts {
        for p in initial_symbols(w) {
            *pieces.entry(p).or_default() += c;
        }
    }
    let mut sym_counts: BTreeMap<String, u64> = BTreeMap::new();
    for (p, &c) in &pieces {
        for s in p {
            *sym_counts.entry(s.clone()).or_default() += c;
        }
    }
    let mut base: Vec<(String, u64)> = sym_counts.into_iter().collect();
    base.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    base.truncate(budget);
    let mut tokens: Vec<String> = base.into_iter().map(|(s, _)| s).collect();
    let mut known: std::collections::HashSet<String> = tokens.iter().cloned().collect();

    let mut corpus: Vec<(Vec<String>, u64)> = pieces.into_iter().collect();
    let mut merges = Vec::new();
    while tokens.len() < budget {
        let mut pair_counts: HashMap<(&str, &str), u64> = HashMap::new();
        for (syms, c) in &corpus {
            for w in syms.windows(2) {
                if known.contains(&w[0]) && known.contains(&w[1]) {
                    *pair_counts.entry((&w[0], &w[1])).or_default() += c;
                }
            }
        }
        let best = pair_counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        let Some(((l, r), _)) = best else { break };
        let (l, r) = (l.to_string(), r.to_string());
        let merged = format!("{l}{r}");
        for (syms, _) in corpus.iter_mut() {
            let mut i = 0;
            while i + 1 < syms.len() {
                if syms[i] == l && syms[i + 1] == r {
                    syms[i] = merged.clone();
                    syms.remove(i + 1);
                }
                i += 1;
            }
        }
        known.insert(merged.clone());
        tokens.push(merged);
        merges.push((l, r));
    }
    (tokens, merges)
}
