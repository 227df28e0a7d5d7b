//! Character inventories for synthetic surface words.
//!
//! Every alphabet is disjoint from every other one, so languages that use
//! different alphabets never share a character.

use crate::error::{Error, Result};
use crate::util::Rng;
use rand::Rng as _;

#[derive(Debug, Clone)]
pub struct Alphabet {
    pub id: &'static str,
    pub consonants: Vec<char>,
    pub vowels: Vec<char>,
}

const TABLE: &[(&str, &str, &str)] = &[
    ("latin", "bdfgklmnprstvz", "aeiou"),
    ("latin_ext", "çðħłñŋřšþž", "áéíóúåø"),
    ("greek", "βγδζθκλμνξπρστφχψ", "αεηιουω"),
    ("cyrillic", "бвгджзклмнпрстфхцчш", "аеиоуыэюя"),
    ("armenian", "բգդզթժլխծկհձղճմյնշչպջռսվտրցփքֆ", "աեէըիոօ"),
    ("georgian", "ბგდვზთკლმნპჟრსტფქღყშჩცძწჭხჯჰ", "აეიოუ"),
];

impl Alphabet {
    pub fn by_id(id: &str) -> Result<Alphabet> {
        TABLE
            .iter()
            .find(|(name, _, _)| *name == id)
            .map(|(name, c, v)| Alphabet {
                id: name,
                consonants: c.chars().collect(),
                vowels: v.chars().collect(),
            })
            .ok_or_else(|| Error::Manifest(format!("unknown alphabet_id {id:?}")))
    }

    pub fn ids() -> impl Iterator<Item = &'static str> {
        TABLE.iter().map(|(name, _, _)| *name)
    }

    pub fn contains(&self, ch: char) -> bool {
        self.consonants.contains(&ch) || self.vowels.contains(&ch)
    }

    /// A pronounceable word of 3 to 6 characters alternating consonants and
    /// vowels. Family roots start with a consonant, language-specific words
    /// with a vowel, which keeps the two pools disjoint.
    pub fn word(&self, rng: &mut Rng, consonant_initial: bool) -> String {
        let len = rng.gen_range(3..=6);
        let mut out = String::with_capacity(len * 2);
        for i in 0..len {
            let consonant = (i % 2 == 0) == consonant_initial;
            let pool = if consonant { &self.consonants } else { &self.vowels };
            out.push(pool[rng.gen_range(0..pool.len())]);
        }
        out
    }
}
