use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::process::Command;
use std::ptr;

use mtlab::harness::DeskWorld;
use mtlab::model::{Checkpoint, Model, ModelConfig, OptimConfig, OptimizerState};
use mtlab::tokenizer::{train_vocab, VocabMode};
use mtlab_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mtlab_last_error()) }.to_string_lossy().into_owned()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_string_lossy().into_owned();
    mtlab_string_free(p);
    s
}

#[test]
fn bleu_and_chrf_through_the_c_interface() {
    let h = [c("the cat sat on the mat")];
    let r = [c("the cat sat on a mat")];
    let hp: Vec<*const c_char> = h.iter().map(|s| s.as_ptr()).collect();
    let rp: Vec<*const c_char> = r.iter().map(|s| s.as_ptr()).collect();
    let mut score = 0.0;
    let st = unsafe { mtlab_bleu(hp.as_ptr(), rp.as_ptr(), 1, false, &mut score) };
    assert_eq!(st, MtlabStatus::Ok);
    assert!((score - 53.73).abs() < 0.01);
    let st = unsafe { mtlab_chrf(hp.as_ptr(), hp.as_ptr(), 1, 2.0, &mut score) };
    assert_eq!(st, MtlabStatus::Ok);
    assert_eq!(score, 100.0);
}

#[test]
fn errors_are_codes_with_messages() {
    let mut score = 0.0;
    let st = unsafe { mtlab_bleu(ptr::null(), ptr::null(), 1, false, &mut score) };
    assert_eq!(st, MtlabStatus::NullPointer);
    assert!(last_error().contains("hyps"));
    let h = [c("a"), c("b")];
    let hp: Vec<*const c_char> = h.iter().map(|s| s.as_ptr()).collect();
    let empty = [c("")];
    let ep: Vec<*const c_char> = empty.iter().map(|s| s.as_ptr()).collect();
    let st = unsafe { mtlab_bleu(hp.as_ptr(), ep.as_ptr(), 1, false, &mut score) };
    assert_eq!(st, MtlabStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    let st = unsafe { mtlab_bleu(hp.as_ptr(), hp.as_ptr(), 2, false, &mut score) };
    assert_eq!(st, MtlabStatus::Ok);
    assert_eq!(last_error(), "");
    let bad = [0xffu8, 0];
    let bp = [bad.as_ptr() as *const c_char];
    let st = unsafe { mtlab_bleu(bp.as_ptr(), bp.as_ptr(), 1, false, &mut score) };
    assert_eq!(st, MtlabStatus::InvalidUtf8);
    let mut w = ptr::null_mut();
    let st = unsafe { mtlab_world_open(c("/nonexistent/manifest.toml").as_ptr(), &mut w) };
    assert_eq!(st, MtlabStatus::Io);
    assert!(w.is_null());
    unsafe {
        mtlab_world_free(ptr::null_mut());
        mtlab_translator_free(ptr::null_mut());
        mtlab_string_free(ptr::null_mut());
    }
}

#[test]
fn ground_truth_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.toml");
    std::fs::write(&path, DeskWorld::default().manifest().to_toml()).unwrap();
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { mtlab_world_open(c(path.to_str().unwrap()).as_ptr(), &mut w) }, MtlabStatus::Ok);
    let world = mtlab::corpus::World::new(DeskWorld::default().manifest()).unwrap();
    let src = world.language("a1").unwrap().realize(&[1, 2, 3, 4]).unwrap();
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(mtlab_ground_truth(w, c(&src).as_ptr(), c("a1").as_ptr(), c("pv").as_ptr(), &mut out), MtlabStatus::Ok);
        let pv = take(out);
        assert_eq!(pv, world.language("pv").unwrap().realize(&[1, 2, 3, 4]).unwrap());
        assert_eq!(mtlab_ground_truth(w, c(&pv).as_ptr(), c("pv").as_ptr(), c("a1").as_ptr(), &mut out), MtlabStatus::Ok);
        assert_eq!(take(out), src);
        assert_eq!(
            mtlab_ground_truth(w, c(&pv).as_ptr(), c("pv").as_ptr(), c("zz").as_ptr(), &mut out),
            MtlabStatus::UnknownLanguage
        );
        mtlab_world_free(w);
    }
}

#[test]
fn translator_handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let langs = vec!["l1".to_string(), "l2".to_string()];
    let vocab = train_vocab(["a b c", "d e f"], &langs, 100, VocabMode::Word).unwrap();
    let vdir = dir.path().join("vocab");
    vocab.save(&vdir).unwrap();
    let cfg = ModelConfig { d_model: 16, d_ff: 32, heads: 2, max_positions: 32, ..ModelConfig::desk(vocab.len()) };
    let model = Model::init(&cfg).unwrap();
    let opt = OptimizerState::new(OptimConfig::default(), model.num_params());
    let cdir = dir.path().join("ck");
    Checkpoint { model, opt, rng: None, vocab_hash: vocab.hash() }.save(&cdir).unwrap();

    let mut t = ptr::null_mut();
    unsafe {
        let st = mtlab_translator_open(c(cdir.to_str().unwrap()).as_ptr(), c(vdir.to_str().unwrap()).as_ptr(), &mut t);
        assert_eq!(st, MtlabStatus::Ok, "{}", last_error());
        assert_eq!(mtlab_translator_vocab_size(t), vocab.len());
        let mut out = ptr::null_mut();
        let st = mtlab_translate(t, c("a b c").as_ptr(), c("l2").as_ptr(), 1, 0.6, &mut out);
        assert_eq!(st, MtlabStatus::Ok, "{}", last_error());
        let greedy = take(out);
        let st = mtlab_translate(t, c("a b c").as_ptr(), c("l2").as_ptr(), 1, 0.6, &mut out);
        assert_eq!(st, MtlabStatus::Ok);
        assert_eq!(take(out), greedy);
        let st = mtlab_translate(t, c("a b c").as_ptr(), c("l9").as_ptr(), 1, 0.6, &mut out);
        assert_ne!(st, MtlabStatus::Ok);
        mtlab_translator_free(t);
    }

    let other = train_vocab(["x y z"], &langs, 100, VocabMode::Word).unwrap();
    let odir = dir.path().join("other");
    other.save(&odir).unwrap();
    let mut t = ptr::null_mut();
    let st = unsafe { mtlab_translator_open(c(cdir.to_str().unwrap()).as_ptr(), c(odir.to_str().unwrap()).as_ptr(), &mut t) };
    assert_eq!(st, MtlabStatus::Checkpoint);
    assert!(t.is_null());
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(mtlab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/mtlab.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in ["mtlab_bleu", "mtlab_translate", "mtlab_translator_open", "mtlab_last_error", "MTLAB_STATUS_OK"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99", header]).output() else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
