//! C interface to mtlab: metrics, synthetic ground truth and model
//! translation behind opaque handles.
//!
//! Every function returns an `MtlabStatus`. On failure a message is kept
//! per thread and can be read with `mtlab_last_error`. Strings returned
//! through out-parameters are owned by the caller and must be released
//! with `mtlab_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mtlab::corpus::{ground_truth_translate, CorpusManifest, World};
use mtlab::eval::{bleu, chrf};
use mtlab::model::{translate, Checkpoint, DecodeMode, Model};
use mtlab::tokenizer::Vocabulary;
use mtlab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    UnknownLanguage = 6,
    Checkpoint = 7,
    Model = 8,
    Panic = 9,
}

/// A loaded checkpoint and its vocabulary.
pub struct MtlabTranslator {
    model: Model<f32>,
    vocab: Vocabulary,
}

/// The languages of a corpus manifest.
pub struct MtlabWorld {
    world: World,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(MtlabStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => MtlabStatus::Io,
            Error::Parse(_) | Error::Manifest(_) | Error::Config(_) => MtlabStatus::Parse,
            Error::UnknownLanguage(_) | Error::UnknownWord { .. } => MtlabStatus::UnknownLanguage,
            Error::Checkpoint(_) | Error::VocabMismatch { .. } => MtlabStatus::Checkpoint,
            Error::InvalidArgument(_) | Error::EmptyCorpus(_) | Error::ConceptOutOfRange { .. } => MtlabStatus::InvalidArgument,
            _ => MtlabStatus::Model,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MtlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MtlabStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MtlabStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(MtlabStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MtlabStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn texts<'a>(p: *const *const c_char, n: usize, what: &str) -> Result<Vec<&'a str>, Fail> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Fail(MtlabStatus::NullPointer, format!("{what} is null")));
    }
    (0..n).map(|i| text(*p.add(i), what)).collect()
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(MtlabStatus::NullPointer, format!("{what} is null")))
}

fn owned(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(MtlabStatus::InvalidArgument, "output contains a NUL byte".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mtlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mtlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Corpus BLEU over `n` whitespace-tokenized hypothesis/reference pairs.
///
/// # Safety
/// `hyps` and `refs` must point to `n` valid NUL-terminated strings and
/// `score` to writable memory.
#[no_mangle]
pub unsafe extern "C" fn mtlab_bleu(
    hyps: *const *const c_char,
    refs: *const *const c_char,
    n: usize,
    smooth: bool,
    score: *mut f64,
) -> MtlabStatus {
    guard(|| {
        let h = texts(hyps, n, "hyps")?;
        let r = texts(refs, n, "refs")?;
        *out(score, "score")? = bleu(&h, &r, smooth)?;
        Ok(())
    })
}

/// Corpus chrF with character n-grams up to 6 and the given beta.
///
/// # Safety
/// As for `mtlab_bleu`.
#[no_mangle]
pub unsafe extern "C" fn mtlab_chrf(
    hyps: *const *const c_char,
    refs: *const *const c_char,
    n: usize,
    beta: f64,
    score: *mut f64,
) -> MtlabStatus {
    guard(|| {
        let h = texts(hyps, n, "hyps")?;
        let r = texts(refs, n, "refs")?;
        *out(score, "score")? = chrf(&h, &r, beta)?;
        Ok(())
    })
}

/// Build the languages of a TOML corpus manifest file.
///
/// # Safety
/// `manifest_path` must be a valid string and `world` writable.
#[no_mangle]
pub unsafe extern "C" fn mtlab_world_open(manifest_path: *const c_char, world: *mut *mut MtlabWorld) -> MtlabStatus {
    guard(|| {
        let path = text(manifest_path, "manifest_path")?;
        let slot = out(world, "world")?;
        let w = World::new(CorpusManifest::load(Path::new(path))?)?;
        *slot = Box::into_raw(Box::new(MtlabWorld { world: w }));
        Ok(())
    })
}

/// # Safety
/// `world` must be null or a handle from `mtlab_world_open`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtlab_world_free(world: *mut MtlabWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Exact translation of `text` between two languages of the world.
///
/// # Safety
/// Pointers must be valid; `*result` receives a string to free with
/// `mtlab_string_free`.
#[no_mangle]
pub unsafe extern "C" fn mtlab_ground_truth(
    world: *const MtlabWorld,
    text_in: *const c_char,
    from: *const c_char,
    to: *const c_char,
    result: *mut *mut c_char,
) -> MtlabStatus {
    guard(|| {
        let w = &world
            .as_ref()
            .ok_or_else(|| Fail(MtlabStatus::NullPointer, "world is null".into()))?
            .world;
        let s = text(text_in, "text")?;
        let a = w.language(text(from, "from")?)?;
        let b = w.language(text(to, "to")?)?;
        let slot = out(result, "result")?;
        *slot = owned(ground_truth_translate(s, a, b)?)?;
        Ok(())
    })
}

/// Load a checkpoint directory together with the vocabulary it was
/// trained with.
///
/// # Safety
/// Paths must be valid strings and `translator` writable.
#[no_mangle]
pub unsafe extern "C" fn mtlab_translator_open(
    checkpoint_dir: *const c_char,
    vocab_dir: *const c_char,
    translator: *mut *mut MtlabTranslator,
) -> MtlabStatus {
    guard(|| {
        let ck = text(checkpoint_dir, "checkpoint_dir")?;
        let vd = text(vocab_dir, "vocab_dir")?;
        let slot = out(translator, "translator")?;
        let vocab = Vocabulary::load(Path::new(vd))?;
        let c = Checkpoint::load(Path::new(ck), Some(&vocab.hash()))?;
        *slot = Box::into_raw(Box::new(MtlabTranslator { model: c.model, vocab }));
        Ok(())
    })
}

/// # Safety
/// `translator` must be null or a handle from `mtlab_translator_open`,
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtlab_translator_free(translator: *mut MtlabTranslator) {
    if !translator.is_null() {
        drop(Box::from_raw(translator));
    }
}

/// Translate one sentence into `tgt_lang`. `beam` of 0 or 1 decodes
/// greedily; larger values run beam search with length penalty `alpha`.
///
/// # Safety
/// Pointers must be valid; `*result` receives a string to free with
/// `mtlab_string_free`.
#[no_mangle]
pub unsafe extern "C" fn mtlab_translate(
    translator: *const MtlabTranslator,
    source: *const c_char,
    tgt_lang: *const c_char,
    beam: usize,
    alpha: f64,
    result: *mut *mut c_char,
) -> MtlabStatus {
    guard(|| {
        let t = translator
            .as_ref()
            .ok_or_else(|| Fail(MtlabStatus::NullPointer, "translator is null".into()))?;
        let src = text(source, "source")?;
        let lang = text(tgt_lang, "tgt_lang")?;
        let slot = out(result, "result")?;
        let mode = if beam > 1 { DecodeMode::Beam { k: beam, alpha } } else { DecodeMode::Greedy };
        let mut outs = translate(&t.model, &t.vocab, &[src], lang, mode, 1)?;
        *slot = owned(outs.pop().map(|o| o.text).unwrap_or_default())?;
        Ok(())
    })
}

/// Vocabulary size of a loaded translator, or 0 for a null handle.
///
/// # Safety
/// `translator` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mtlab_translator_vocab_size(translator: *const MtlabTranslator) -> usize {
    translator.as_ref().map_or(0, |t| t.vocab.len())
}
