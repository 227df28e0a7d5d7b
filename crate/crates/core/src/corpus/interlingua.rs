use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derive_seed, rng_from_seed, sample_cdf, unit_f64};
use rand::seq::SliceRandom;
use rand::Rng as _;

/// Distribution over concept sequences for one text domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub id: String,
    pub concept_vocab_size: usize,
    pub length_min: usize,
    pub length_max: usize,
    pub zipf_exponent: f64,
    /// Probability that a concept is drawn from the previous concept's
    /// successor set instead of the Zipf table. Zero gives i.i.d. draws.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub coherence: f64,
    /// Size of each concept's successor set.
    #[serde(default = "default_successors")]
    pub successors: usize,
    /// Seeds the successor sets.
    #[serde(default)]
    pub structure_seed: u64,
    /// When set, Zipf ranks are mapped to concepts through a permutation
    /// seeded by this value, so domains can differ in which concepts are
    /// frequent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_seed: Option<u64>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn default_successors() -> usize {
    4
}

impl DomainSpec {
    /// Broad, mildly skewed domain with long sentences.
    pub fn news(concept_vocab_size: usize) -> DomainSpec {
        DomainSpec {
            id: "news".into(),
            concept_vocab_size,
            length_min: 6,
            length_max: 16,
            zipf_exponent: 1.1,
            coherence: 0.0,
            successors: default_successors(),
            structure_seed: 0,
            rank_seed: None,
        }
    }

    /// Narrow, heavily skewed domain with short sentences.
    pub fn bible(concept_vocab_size: usize) -> DomainSpec {
        DomainSpec {
            id: "bible".into(),
            concept_vocab_size,
            length_min: 4,
            length_max: 10,
            zipf_exponent: 1.6,
            coherence: 0.0,
            successors: default_successors(),
            structure_seed: 0,
            rank_seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length_min == 0 || self.length_min > self.length_max {
            return Err(Error::Manifest(format!(
                "domain {}: need 0 < length_min <= length_max",
                self.id
            )));
        }
        if self.concept_vocab_size < self.length_max {
            return Err(Error::Manifest(format!(
                "domain {}: concept_vocab_size must be >= length_max",
                self.id
            )));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::Manifest(format!(
                "domain {}: zipf_exponent must be a finite non-negative number",
                self.id
            )));
        }
        if !(0.0..=1.0).contains(&self.coherence) || (self.coherence > 0.0 && self.successors == 0) {
            return Err(Error::Manifest(format!(
                "domain {}: coherence must lie in [0,1] and needs successors > 0",
                self.id
            )));
        }
        Ok(())
    }

    /// Concept id of each Zipf rank.
    pub fn rank_map(&self) -> Vec<u32> {
        let mut map: Vec<u32> = (0..self.concept_vocab_size as u32).collect();
        if let Some(seed) = self.rank_seed {
            map.shuffle(&mut rng_from_seed(derive_seed(seed, "ranks")));
        }
        map
    }

    /// Successor set of every concept, drawn from the domain's Zipf law.
    pub fn successor_sets(&self) -> Vec<Vec<u32>> {
        let table = ZipfTable::new(self.concept_vocab_size, self.zipf_exponent);
        let ranks = self.rank_map();
        let mut rng = rng_from_seed(derive_seed(self.structure_seed, "successors"));
        (0..self.concept_vocab_size)
            .map(|_| (0..self.successors).map(|_| ranks[table.sample(&mut rng) as usize]).collect())
            .collect()
    }
}

/// Inverse-CDF table for Zipf(s) over ranks 1..=n; concept `k` has rank `k + 1`.
#[derive(Debug, Clone)]
pub struct ZipfTable {
    cdf: Vec<f64>,
}

impl ZipfTable {
    pub fn new(n: usize, exponent: f64) -> ZipfTable {
        let mut acc = 0.0;
        let cdf = (1..=n)
            .map(|k| {
                acc += (k as f64).powf(-exponent);
                acc
            })
            .collect();
        ZipfTable { cdf }
    }

    pub fn probability(&self, concept: usize) -> f64 {
        let total = self.cdf[self.cdf.len() - 1];
        let lo = if concept == 0 { 0.0 } else { self.cdf[concept - 1] };
        (self.cdf[concept] - lo) / total
    }

    pub fn sample(&self, rng: &mut crate::util::Rng) -> u32 {
        sample_cdf(&self.cdf, unit_f64(rng)) as u32
    }
}

/// Draw `n` concept sequences; a pure function of `(domain, n, seed)`.
pub fn gen_interlingua(domain: &DomainSpec, n: usize, seed: u64) -> Result<Vec<Vec<u32>>> {
    domain.validate()?;
    let table = ZipfTable::new(domain.concept_vocab_size, domain.zipf_exponent);
    let ranks = domain.rank_map();
    let successors = if domain.coherence > 0.0 { domain.successor_sets() } else { Vec::new() };
    let mut rng = rng_from_seed(seed);
    Ok((0..n)
        .map(|_| {
            let len = rng.gen_range(domain.length_min..=domain.length_max);
            let mut seq: Vec<u32> = Vec::with_capacity(len);
            for _ in 0..len {
                let c = match seq.last() {
                    Some(&prev) if domain.coherence > 0.0 && unit_f64(&mut rng) < domain.coherence => {
                        let set = &successors[prev as usize];
                        set[rng.gen_range(0..set.len())]
                    }
                    _ => ranks[table.sample(&mut rng) as usize],
                };
                seq.push(c);
            }
            seq
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(vocab: usize, len: usize) -> DomainSpec {
        DomainSpec {
            id: "flat".into(),
            concept_vocab_size: vocab,
            length_min: len,
            length_max: len,
            zipf_exponent: 0.0,
            ..DomainSpec::news(vocab)
        }
    }

    #[test]
    fn zero_count_is_empty() {
        assert!(gen_interlingua(&DomainSpec::news(100), 0, 7).unwrap().is_empty());
    }

    #[test]
    fn deterministic() {
        let d = DomainSpec::bible(80);
        assert_eq!(gen_interlingua(&d, 50, 3).unwrap(), gen_interlingua(&d, 50, 3).unwrap());
        assert_ne!(gen_interlingua(&d, 50, 3).unwrap(), gen_interlingua(&d, 50, 4).unwrap());
    }

    #[test]
    fn lengths_within_bounds() {
        let d = DomainSpec::news(100);
        for s in gen_interlingua(&d, 500, 1).unwrap() {
            assert!((6..=16).contains(&s.len()));
            assert!(s.iter().all(|&c| c < 100));
        }
    }

    #[test]
    fn uniform_when_exponent_zero() {
        // oracle: uniform over 100 concepts, 50_000 draws → 500 expected each;
        // ±20% is ~9 standard deviations of a binomial(50k, 0.01)
        let seqs = gen_interlingua(&flat(100, 5), 10_000, 1).unwrap();
        let mut counts = [0usize; 100];
        for s in &seqs {
            assert_eq!(s.len(), 5);
            for &c in s {
                counts[c as usize] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        for (c, &k) in counts.iter().enumerate() {
            let f = k as f64 / total as f64;
            assert!((f - 0.01).abs() <= 0.002, "concept {c}: {f}");
        }
    }

    #[test]
    fn zipf_table_matches_closed_form() {
        let t = ZipfTable::new(4, 1.0);
        let h = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
        assert!((t.probability(0) - 1.0 / h).abs() < 1e-12);
        assert!((t.probability(3) - 0.25 / h).abs() < 1e-12);
    }

    #[test]
    fn invalid_domain_rejected() {
        let mut d = flat(3, 5);
        assert!(d.validate().is_err());
        d.concept_vocab_size = 10;
        d.length_min = 6;
        assert!(d.validate().is_err());
    }

    #[test]
    fn coherent_domains_follow_successor_sets() {
        let d = DomainSpec { coherence: 1.0, successors: 3, ..DomainSpec::news(100) };
        let sets = d.successor_sets();
        for s in gen_interlingua(&d, 200, 2).unwrap() {
            for w in s.windows(2) {
                assert!(sets[w[0] as usize].contains(&w[1]));
            }
        }
        let loose = DomainSpec { coherence: 0.5, ..d.clone() };
        assert_ne!(gen_interlingua(&loose, 50, 2).unwrap(), gen_interlingua(&d, 50, 2).unwrap());
    }

    #[test]
    fn rank_seed_moves_frequent_concepts() {
        let d = DomainSpec { zipf_exponent: 2.0, ..DomainSpec::news(100) };
        let p = DomainSpec { rank_seed: Some(9), ..d.clone() };
        let map = p.rank_map();
        let mut sorted = map.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<u32>>());
        let top = |dom: &DomainSpec| {
            let mut counts = vec![0usize; 100];
            gen_interlingua(dom, 500, 1).unwrap().iter().flatten().for_each(|&c| counts[c as usize] += 1);
            (0..100).max_by_key(|&c| counts[c]).unwrap() as u32
        };
        assert_eq!(top(&d), 0);
        assert_eq!(top(&p), map[0]);
    }
}
