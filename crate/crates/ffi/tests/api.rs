use std::ffi::{CStr, CString};
use std::fs::File;
use std::ptr;
use std::thread;

use factcon::contrast::{loss_coenc, DenominatorMode};
use factcon::synth::{self, SynthConfig};
use factcon_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(fc_last_error()) }
        .to_string_lossy()
        .into_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    corpus: CString,
    embeddings: CString,
}

fn fixture(docs: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth::generate(&SynthConfig {
        docs,
        ..SynthConfig::default()
    });
    let cp = dir.path().join("corpus.jsonl");
    let ep = dir.path().join("embeddings.txt");
    factcon::corpus::write_corpus(File::create(&cp).unwrap(), &corpus.docs).unwrap();
    corpus.embeddings.write_text(File::create(&ep).unwrap()).unwrap();
    Fixture {
        corpus: c(cp.to_str().unwrap()),
        embeddings: c(ep.to_str().unwrap()),
        _dir: dir,
    }
}

fn train(f: &Fixture) -> *mut FcModel {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { fc_model_train(f.corpus.as_ptr(), 3, 0.01, &mut m) },
        FcStatus::Ok
    );
    assert!(!m.is_null());
    m
}

#[test]
fn scores_match_the_native_model() {
    let f = fixture(8);
    let m = train(&f);
    let path = f.corpus.to_str().unwrap();
    let docs = factcon::corpus::load_corpus(path.as_ref(), factcon::corpus::LoadMode::Strict)
        .unwrap()
        .documents;
    let native = factcon::lm::train_on_documents(&docs, factcon::lm::NGramConfig::new(3, 0.01)).unwrap();
    let words = |s: &str| -> Vec<String> { s.split_whitespace().map(String::from).collect() };
    for (target, condition) in [
        ("the council said", "in riga ,"),
        ("unseen words here", ""),
        ("", "the"),
    ] {
        let (mut a, mut b) = (0.0, 0.0);
        unsafe {
            assert_eq!(fc_model_logprob(m, c(target).as_ptr(), &mut a), FcStatus::Ok);
            assert_eq!(
                fc_model_conditional_logprob(m, c(target).as_ptr(), c(condition).as_ptr(), &mut b),
                FcStatus::Ok
            );
        }
        assert_eq!(a, native.logprob(&words(target)));
        assert_eq!(b, native.conditional_logprob(&words(target), &words(condition)));
    }
    unsafe { fc_model_free(m) };
}

#[test]
fn candidate_counts_match_the_closed_form() {
    let mut n = 0;
    for (s, t, l, want) in [
        ("a b c", 1, 1, 3),
        ("a b c", 1, 2, 5),
        ("a b c d", 2, 1, 10),
        ("a b", 3, 3, 2),
    ] {
        assert_eq!(unsafe { fc_candidate_count(c(s).as_ptr(), t, l, &mut n) }, FcStatus::Ok);
        assert_eq!(n, want, "{s} T={t} L={l}");
    }
}

#[test]
fn negatives_roundtrip_through_json() {
    let f = fixture(12);
    let m = train(&f);
    let mut opts = std::mem::MaybeUninit::<FcLfnOptions>::uninit();
    let opts = unsafe {
        assert_eq!(fc_lfn_options_default(opts.as_mut_ptr()), FcStatus::Ok);
        opts.assume_init()
    };
    assert_eq!(
        (opts.max_iterations, opts.max_span_length, opts.replacement_ratio),
        (3, 3, 0.15)
    );
    let mut negs = ptr::null_mut();
    unsafe {
        assert_eq!(
            fc_negatives_build(m, f.corpus.as_ptr(), f.embeddings.as_ptr(), &opts, 0, &mut negs),
            FcStatus::Ok
        );
        let n = fc_negatives_len(negs);
        assert_eq!(n + fc_negatives_failed(negs), 12);
        for i in 0..n {
            let mut json = ptr::null_mut();
            assert_eq!(fc_negatives_get_json(negs, i, &mut json), FcStatus::Ok);
            let rec: factcon::lfn::NegativeRecord =
                serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
            let sample = rec.into_sample().unwrap();
            assert_eq!(sample.tokens.len(), sample.gold_tokens.len());
            assert!(!sample.replaced_positions.is_empty());
            fc_string_free(json);
        }
        fc_negatives_free(negs);
        fc_model_free(m);
    }
}

#[test]
fn losses_match_the_library() {
    let mut out = f64::NAN;
    unsafe {
        let (g, n, r) = ([-0.5, -0.5, -1.0], [-0.5, -0.5, -2.0], [2usize]);
        assert_eq!(
            fc_loss_codec_pm(g.as_ptr(), n.as_ptr(), 3, r.as_ptr(), 1, 0.5, &mut out),
            FcStatus::Ok
        );
        assert_eq!(out, 0.0);
        let (s, p, negs) = ([0.3, -0.2, 0.5], [0.1, 0.4, -0.3], [0.1, 0.4, -0.3, 0.9, 0.0, 0.2]);
        for literal in [0, 1] {
            assert_eq!(
                fc_loss_coenc(s.as_ptr(), p.as_ptr(), negs.as_ptr(), 3, 2, 0.1, literal, &mut out),
                FcStatus::Ok
            );
            let mode = if literal == 1 {
                DenominatorMode::Literal
            } else {
                DenominatorMode::Standard
            };
            assert_eq!(
                out,
                loss_coenc(&s, &p, &[negs[..3].to_vec(), negs[3..].to_vec()], 0.1, mode)
            );
        }
    }
}

#[test]
fn failures_report_status_and_message() {
    let mut m = ptr::null_mut();
    let mut x = 0.0;
    let mut n = 0usize;
    unsafe {
        assert_eq!(fc_model_train(ptr::null(), 3, 0.01, &mut m), FcStatus::NullArgument);
        assert_eq!(last_error(), "corpus_path is null");
        assert_eq!(
            fc_model_train(c("/nonexistent.jsonl").as_ptr(), 3, 0.01, &mut m),
            FcStatus::Io
        );
        assert!(last_error().contains("nonexistent"), "{}", last_error());
        assert!(m.is_null(), "out pointer untouched on failure");
        assert_eq!(
            fc_model_train(c("x").as_ptr(), 0, 0.01, &mut m),
            FcStatus::InvalidArgument
        );
        assert_eq!(fc_model_load(c("/nonexistent.json").as_ptr(), &mut m), FcStatus::Io);
        assert_eq!(
            fc_model_logprob(ptr::null(), c("a").as_ptr(), &mut x),
            FcStatus::NullArgument
        );

        let bad = [0x61u8, 0xff, 0x00];
        assert_eq!(
            fc_candidate_count(bad.as_ptr().cast(), 1, 1, &mut n),
            FcStatus::InvalidUtf8
        );
        assert_eq!(
            fc_candidate_count(c("a b").as_ptr(), 1, 1, ptr::null_mut()),
            FcStatus::NullArgument
        );

        let (g, r) = ([-1.0, -2.0], [5usize]);
        assert_eq!(
            fc_loss_codec_pm(g.as_ptr(), g.as_ptr(), 2, r.as_ptr(), 1, 1.0, &mut x),
            FcStatus::InvalidArgument
        );
        assert!(last_error().contains("position 5"), "{}", last_error());
        assert_eq!(
            fc_loss_codec_pm(g.as_ptr(), ptr::null(), 2, r.as_ptr(), 1, 1.0, &mut x),
            FcStatus::NullArgument
        );
        assert_eq!(
            fc_loss_coenc(g.as_ptr(), g.as_ptr(), g.as_ptr(), 2, 1, 0.0, 0, &mut x),
            FcStatus::InvalidArgument
        );

        // a success clears the message
        assert_eq!(fc_candidate_count(c("a b").as_ptr(), 1, 1, &mut n), FcStatus::Ok);
        assert_eq!(last_error(), "");

        assert_eq!(fc_negatives_len(ptr::null()), 0);
        fc_model_free(ptr::null_mut());
        fc_negatives_free(ptr::null_mut());
        fc_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_options_are_rejected() {
    let f = fixture(4);
    let m = train(&f);
    let mut opts = std::mem::MaybeUninit::<FcLfnOptions>::uninit();
    let mut opts = unsafe {
        fc_lfn_options_default(opts.as_mut_ptr());
        opts.assume_init()
    };
    opts.replacement_ratio = 0.0;
    let mut negs = ptr::null_mut();
    unsafe {
        let st = fc_negatives_build(m, f.corpus.as_ptr(), f.embeddings.as_ptr(), &opts, 0, &mut negs);
        assert_eq!(st, FcStatus::InvalidArgument);
        assert!(last_error().contains("replacement_ratio"), "{}", last_error());
        assert!(negs.is_null());
        fc_model_free(m);
    }
}

#[test]
fn errors_are_per_thread() {
    let mut x = 0.0;
    unsafe {
        assert_eq!(
            fc_model_logprob(ptr::null(), c("a").as_ptr(), &mut x),
            FcStatus::NullArgument
        );
    }
    let other = thread::spawn(last_error).join().unwrap();
    assert_eq!(other, "");
    assert_eq!(last_error(), "model is null");
}
