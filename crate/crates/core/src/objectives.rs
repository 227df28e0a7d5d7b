//! Training examples for the two objectives: MASS span reconstruction and
//! tagged translation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{Vocabulary, EOS, MASK};
use crate::util::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    AlwaysMask,
    #[default]
    Mass801010,
}

/// Encoder/decoder sequences for one training row, before padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seq2SeqExample {
    pub encoder_ids: Vec<u32>,
    pub decoder_input_ids: Vec<u32>,
    pub decoder_target_ids: Vec<u32>,
    /// Positional index of each decoder slot.
    pub decoder_positions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedExample {
    pub encoder_ids: Vec<u32>,
    pub decoder_input_ids: Vec<u32>,
    pub decoder_target_ids: Vec<u32>,
    pub span_start: usize,
    pub span_len: usize,
    pub original_positions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationExample {
    pub encoder_ids: Vec<u32>,
    pub decoder_input_ids: Vec<u32>,
    pub decoder_target_ids: Vec<u32>,
}

pub fn span_len(len: usize, fraction: f64) -> usize {
    ((fraction * len as f64).ceil() as usize).clamp(1, len)
}

/// Mask one contiguous span of `ids` (text tokens only). The encoder input is
/// `[<2lang>] + masked ids + [EOS]`; the decoder reconstructs the span, fed
/// the token preceding each span position.
pub fn mass_mask(
    ids: &[u32],
    fraction: f64,
    rng: &mut Rng,
    policy: MaskPolicy,
    lang: &str,
    vocab: &Vocabulary,
) -> Result<MaskedExample> {
    if ids.is_empty() {
        return Err(Error::InvalidArgument("cannot mask an empty sentence".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("mask fraction {fraction} outside (0, 1]")));
    }
    let tag = vocab.tag_id(lang)?;
    let n = ids.len();
    let k = span_len(n, fraction);
    let start = rng.gen_range(0..=n - k);
    let first_text = vocab.num_specials() as u32;
    let v = vocab.len() as u32;

    let mut encoder_ids = Vec::with_capacity(n + 2);
    encoder_ids.push(tag);
    for (i, &id) in ids.iter().enumerate() {
        if i < start || i >= start + k {
            encoder_ids.push(id);
            continue;
        }
        let replaced = match policy {
            MaskPolicy::AlwaysMask => MASK,
            MaskPolicy::Mass801010 => {
                let u: f64 = rng.gen();
                if u < 0.8 {
                    MASK
                } else if u < 0.9 && first_text < v {
                    rng.gen_range(first_text..v)
                } else {
                    id
                }
            }
        };
        encoder_ids.push(replaced);
    }
    encoder_ids.push(EOS);

    let target = ids[start..start + k].to_vec();
    let mut decoder_input_ids = Vec::with_capacity(k);
    decoder_input_ids.push(if start == 0 { EOS } else { ids[start - 1] });
    decoder_input_ids.extend_from_slice(&target[..k - 1]);
    Ok(MaskedExample {
        encoder_ids,
        decoder_input_ids,
        decoder_target_ids: target,
        span_start: start,
        span_len: k,
        original_positions: (start as u32..(start + k) as u32).collect(),
    })
}

/// `src_ids`/`tgt_ids` are text tokens without tag or EOS.
pub fn make_translation_ids(src_ids: &[u32], tgt_ids: &[u32], tgt_tag: u32) -> Result<TranslationExample> {
    if src_ids.is_empty() || tgt_ids.is_empty() {
        return Err(Error::InvalidArgument("translation example has an empty side".into()));
    }
    let mut encoder_ids = Vec::with_capacity(src_ids.len() + 2);
    encoder_ids.push(tgt_tag);
    encoder_ids.extend_from_slice(src_ids);
    encoder_ids.push(EOS);
    let mut decoder_target_ids = tgt_ids.to_vec();
    decoder_target_ids.push(EOS);
    let mut decoder_input_ids = Vec::with_capacity(decoder_target_ids.len());
    decoder_input_ids.push(EOS);
    decoder_input_ids.extend_from_slice(tgt_ids);
    Ok(TranslationExample {
        encoder_ids,
        decoder_input_ids,
        decoder_target_ids,
    })
}

pub fn make_translation_example(pair: &crate::corpus::ParallelExample, vocab: &Vocabulary) -> Result<TranslationExample> {
    let tag = vocab.tag_id(&pair.tgt_lang)?;
    make_translation_ids(&vocab.encode_text(&pair.src_text), &vocab.encode_text(&pair.tgt_text), tag)
}

pub trait LossTargets {
    /// Decoder targets and the positions that count towards the loss.
    fn loss_targets(&self) -> (Vec<u32>, Vec<bool>);
}

impl LossTargets for MaskedExample {
    fn loss_targets(&self) -> (Vec<u32>, Vec<bool>) {
        (self.decoder_target_ids.clone(), vec![true; self.span_len])
    }
}

impl LossTargets for TranslationExample {
    fn loss_targets(&self) -> (Vec<u32>, Vec<bool>) {
        (self.decoder_target_ids.clone(), vec![true; self.decoder_target_ids.len()])
    }
}

pub fn loss_targets<E: LossTargets>(example: &E) -> (Vec<u32>, Vec<bool>) {
    example.loss_targets()
}

impl From<MaskedExample> for Seq2SeqExample {
    fn from(m: MaskedExample) -> Self {
        Seq2SeqExample {
            encoder_ids: m.encoder_ids,
            decoder_input_ids: m.decoder_input_ids,
            decoder_target_ids: m.decoder_target_ids,
            decoder_positions: m.original_positions,
        }
    }
}

impl From<TranslationExample> for Seq2SeqExample {
    fn from(t: TranslationExample) -> Self {
        let n = t.decoder_target_ids.len() as u32;
        Seq2SeqExample {
            encoder_ids: t.encoder_ids,
            decoder_input_ids: t.decoder_input_ids,
            decoder_target_ids: t.decoder_target_ids,
            decoder_positions: (0..n).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ParallelExample;
    use crate::tokenizer::{train_vocab, VocabMode};
    use crate::util::rng_from_seed;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        let langs = vec!["A".to_string(), "B".to_string()];
        train_vocab(["ka po ne zu mi ra so te li vo"], &langs, 20, VocabMode::Word).unwrap()
    }

    fn ten(v: &Vocabulary) -> Vec<u32> {
        v.encode_text("ka po ne zu mi ra so te li vo")
    }

    #[test]
    fn always_mask_alters_exactly_the_span() {
        let v = vocab();
        let ids = ten(&v);
        let m = mass_mask(&ids, 0.5, &mut rng_from_seed(1), MaskPolicy::AlwaysMask, "A", &v).unwrap();
        assert_eq!(m.span_len, 5);
        assert_eq!(m.encoder_ids[0], v.tag_id("A").unwrap());
        assert_eq!(*m.encoder_ids.last().unwrap(), EOS);
        let body = &m.encoder_ids[1..m.encoder_ids.len() - 1];
        let altered: Vec<usize> = (0..10).filter(|&i| body[i] != ids[i]).collect();
        assert_eq!(altered, (m.span_start..m.span_start + 5).collect::<Vec<_>>());
        assert!(altered.iter().all(|&i| body[i] == MASK));
        assert_eq!(m.decoder_target_ids, ids[m.span_start..m.span_start + 5]);
        assert_eq!(m.loss_targets().1.iter().filter(|&&b| b).count(), 5);
    }

    #[test]
    fn decoder_input_is_previous_token() {
        let v = vocab();
        let ids = ten(&v);
        for seed in 0..20 {
            let m = mass_mask(&ids, 0.3, &mut rng_from_seed(seed), MaskPolicy::AlwaysMask, "B", &v).unwrap();
            let s = m.span_start;
            let prev = if s == 0 { EOS } else { ids[s - 1] };
            assert_eq!(m.decoder_input_ids[0], prev);
            assert_eq!(m.decoder_input_ids[1..], ids[s..s + m.span_len - 1]);
            assert_eq!(m.original_positions[0] as usize, s);
        }
    }

    #[test]
    fn degenerate_lengths_and_errors() {
        let v = vocab();
        let m = mass_mask(&[5], 0.5, &mut rng_from_seed(0), MaskPolicy::AlwaysMask, "A", &v).unwrap();
        assert_eq!((m.span_len, m.span_start), (1, 0));
        let mut r = rng_from_seed(0);
        assert!(mass_mask(&[], 0.5, &mut r, MaskPolicy::AlwaysMask, "A", &v).is_err());
        assert!(mass_mask(&[5], 0.0, &mut r, MaskPolicy::AlwaysMask, "A", &v).is_err());
        assert!(mass_mask(&[5], 1.5, &mut r, MaskPolicy::AlwaysMask, "A", &v).is_err());
        assert!(mass_mask(&[5], 0.5, &mut r, MaskPolicy::AlwaysMask, "Z", &v).is_err());
    }

    #[test]
    fn replacement_rates_match_policy() {
        // 10k spans of 5 positions: MASK count ~ Binomial(50k, 0.8), sd ≈ 0.0018
        let v = vocab();
        let ids = ten(&v);
        let mut rng = rng_from_seed(9);
        let (mut masked, mut total) = (0usize, 0usize);
        for _ in 0..10_000 {
            let m = mass_mask(&ids, 0.5, &mut rng, MaskPolicy::Mass801010, "A", &v).unwrap();
            let body = &m.encoder_ids[1..11];
            masked += body[m.span_start..m.span_start + 5].iter().filter(|&&t| t == MASK).count();
            total += 5;
        }
        let f = masked as f64 / total as f64;
        assert!((f - 0.8).abs() <= 0.015, "{f}");
    }

    #[test]
    fn span_start_is_uniform() {
        let v = vocab();
        let ids = ten(&v);
        let mut rng = rng_from_seed(3);
        let mut counts = [0usize; 6];
        for _ in 0..10_000 {
            let m = mass_mask(&ids, 0.5, &mut rng, MaskPolicy::AlwaysMask, "A", &v).unwrap();
            counts[m.span_start] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 1.0 / 6.0).abs() <= 0.02);
        }
    }

    #[test]
    fn translation_example_definition() {
        let v = vocab();
        let pair = ParallelExample {
            src_lang: "A".into(),
            tgt_lang: "B".into(),
            src_text: "ka".into(),
            tgt_text: "po".into(),
        };
        let t = make_translation_example(&pair, &v).unwrap();
        let (ka, po) = (v.id("ka").unwrap(), v.id("po").unwrap());
        assert_eq!(t.encoder_ids, vec![v.tag_id("B").unwrap(), ka, EOS]);
        assert_eq!(t.decoder_target_ids, vec![po, EOS]);
        assert_eq!(t.decoder_input_ids, vec![EOS, po]);
        let r = make_translation_example(&pair.reversed(), &v).unwrap();
        assert_eq!(r.encoder_ids, vec![v.tag_id("A").unwrap(), po, EOS]);
        assert_eq!(r.decoder_target_ids, vec![ka, EOS]);
        let empty = ParallelExample { tgt_text: "".into(), ..pair };
        assert!(make_translation_example(&empty, &v).is_err());
    }

    proptest! {
        #[test]
        fn mass_reconstructs_span(len in 1usize..30, frac in 0.05f64..=1.0, seed in any::<u64>()) {
            let v = vocab();
            let ids: Vec<u32> = (0..len).map(|i| 6 + (i as u32 * 7) % 10).collect();
            let m = mass_mask(&ids, frac, &mut rng_from_seed(seed), MaskPolicy::AlwaysMask, "A", &v).unwrap();
            prop_assert_eq!(m.span_len, ((frac * len as f64).ceil() as usize).max(1));
            prop_assert_eq!(&m.decoder_target_ids[..], &ids[m.span_start..m.span_start + m.span_len]);
            prop_assert_eq!(m.decoder_input_ids.len(), m.span_len);
            let body = &m.encoder_ids[1..=len];
            for i in 0..len {
                let inside = i >= m.span_start && i < m.span_start + m.span_len;
                prop_assert_eq!(body[i] == MASK, inside);
            }
        }

        #[test]
        fn shift_contract(tgt in proptest::collection::vec(6u32..20, 1..20), src in proptest::collection::vec(6u32..20, 1..20)) {
            let t = make_translation_ids(&src, &tgt, 4).unwrap();
            let n = t.decoder_target_ids.len();
            prop_assert_eq!(t.decoder_input_ids[0], EOS);
            prop_assert_eq!(&t.decoder_input_ids[1..], &t.decoder_target_ids[..n - 1]);
            prop_assert_eq!(t.loss_targets().1.len(), n);
        }
    }
}
