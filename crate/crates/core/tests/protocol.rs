use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::Duration;

use factcon::corpus::{load_corpus, Document, LoadMode};
use factcon::lfn::{build_corpus_negatives, LfnConfig};
use factcon::lm::protocol::serve;
use factcon::lm::{train_on_documents, ExternalScorer, LmError, NGramConfig, NGramModel, Scorer, ScorerSpec};
use factcon::synth::{self, SynthConfig};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/protocol")
        .join(name)
}

fn corpus_path() -> String {
    fixture("corpus.jsonl").display().to_string()
}

fn fixture_model() -> NGramModel {
    let docs = load_corpus(&fixture("corpus.jsonl"), LoadMode::Strict)
        .unwrap()
        .documents;
    train_on_documents(&docs, NGramConfig::default()).unwrap()
}

/// Request lines and expected response lines of a transcript.
fn transcript(name: &str) -> (String, String) {
    let text = fs::read_to_string(fixture(name)).unwrap();
    let (mut requests, mut responses) = (String::new(), String::new());
    for line in text.lines() {
        if let Some(r) = line.strip_prefix("> ") {
            requests.push_str(r);
            requests.push('\n');
        } else if let Some(r) = line.strip_prefix("< ") {
            responses.push_str(r);
            responses.push('\n');
        }
    }
    (requests, responses)
}

const TRANSCRIPTS: [&str; 4] = ["ping.txt", "logprob.txt", "cond.txt", "malformed.txt"];

#[test]
fn transcripts_replay_byte_for_byte_in_process() {
    let mut model = fixture_model();
    for name in TRANSCRIPTS {
        let (requests, expected) = transcript(name);
        let mut out = Vec::new();
        serve(&mut model, Cursor::new(requests), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), expected, "{name}");
    }
}

#[test]
fn transcripts_replay_byte_for_byte_through_the_binary() {
    for name in TRANSCRIPTS {
        let (requests, expected) = transcript(name);
        let mut child = Command::new(env!("CARGO_BIN_EXE_factcon"))
            .args(["serve", "--corpus", &corpus_path()])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(requests.as_bytes()).unwrap();
        let out = child.wait_with_output().unwrap();
        assert!(out.status.success());
        assert_eq!(String::from_utf8(out.stdout).unwrap(), expected, "{name}");
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn serve_argv() -> Vec<String> {
    vec![
        env!("CARGO_BIN_EXE_factcon").to_string(),
        "serve".into(),
        "--corpus".into(),
        corpus_path(),
    ]
}

#[test]
fn external_client_reproduces_native_scores() {
    let mut native = fixture_model();
    let mut remote = ExternalScorer::spawn(&serve_argv()).unwrap();
    for (target, condition) in [
        ("the council opened a library in riga .", ""),
        ("in riga .", "the council opened a library"),
        ("storm harbor", "a"),
        ("", "the"),
    ] {
        let (t, c) = (words(target), words(condition));
        assert_eq!(remote.logprob_total(&t).unwrap(), native.logprob_total(&t).unwrap());
        assert_eq!(
            remote.conditional_total(&t, &c).unwrap(),
            native.conditional_total(&t, &c).unwrap()
        );
    }
    let t = words("a storm closed the harbor .");
    assert!((remote.conditional_total(&t, &[]).unwrap() - remote.logprob_total(&t).unwrap()).abs() < 1e-6);
}

fn mock(name: &str) -> Vec<String> {
    vec!["sh".into(), fixture(name).display().to_string()]
}

#[test]
fn mock_scorer_values_pass_through() {
    let mut s = ExternalScorer::spawn(&mock("mock_fixed.sh")).unwrap();
    assert_eq!(s.logprob_total(&words("a b")).unwrap(), -1.5);
    assert_eq!(s.conditional_total(&words("a"), &words("b")).unwrap(), -1.5);
}

#[test]
fn client_rejects_protocol_violations() {
    let probe = |name: &str| {
        let mut s = ExternalScorer::spawn_with_timeout(&mock(name), Duration::from_secs(5)).unwrap();
        s.logprob_total(&words("a b")).unwrap_err()
    };
    let wrong = probe("mock_wrong_id.sh");
    assert!(
        matches!(&wrong, LmError::Protocol { reason, .. } if reason.contains("expected response id")),
        "{wrong}"
    );
    assert!(matches!(probe("mock_garbage.sh"), LmError::Protocol { line: Some(l), .. } if l == "hello there"));
    assert!(matches!(probe("mock_remote_error.sh"), LmError::Remote { message, .. } if message == "model not loaded"));
    let gone = probe("mock_exit.sh");
    assert!(matches!(&gone, LmError::Protocol { .. }), "{gone}");
}

#[test]
fn client_times_out_on_a_silent_scorer() {
    let mut s = ExternalScorer::spawn_with_timeout(&mock("mock_silent.sh"), Duration::from_millis(300)).unwrap();
    let err = s.logprob_total(&words("a")).unwrap_err();
    assert!(err.to_string().contains("within"), "{err}");
}

#[test]
fn spawn_requires_a_pong() {
    assert!(matches!(
        ExternalScorer::spawn(&mock("mock_no_pong.sh")),
        Err(LmError::Spawn { .. })
    ));
    let missing = vec!["/nonexistent/scorer".to_string()];
    assert!(matches!(ExternalScorer::spawn(&missing), Err(LmError::Spawn { .. })));
    assert!(matches!(ExternalScorer::spawn(&[]), Err(LmError::Spawn { .. })));
}

#[test]
fn external_pipeline_matches_native_pipeline() {
    let corpus = synth::generate(&SynthConfig {
        docs: 12,
        ..SynthConfig::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    factcon::corpus::write_corpus(fs::File::create(&path).unwrap(), &corpus.docs).unwrap();
    let docs: Vec<(Document, _)> = corpus.docs.iter().map(|d| (d.clone(), d.align())).collect();
    let model = Arc::new(train_on_documents(&corpus.docs, NGramConfig::default()).unwrap());
    let cfg = LfnConfig::default();
    let native = build_corpus_negatives(&docs, &ScorerSpec::Native(model), &corpus.embeddings, &cfg, 0, 1).unwrap();
    let argv = vec![
        env!("CARGO_BIN_EXE_factcon").to_string(),
        "serve".into(),
        "--corpus".into(),
        path.display().to_string(),
    ];
    let external = build_corpus_negatives(&docs, &ScorerSpec::External(argv), &corpus.embeddings, &cfg, 0, 2).unwrap();
    assert_eq!(native.samples, external.samples);
    assert_eq!(native.diagnostics, external.diagnostics);
}
