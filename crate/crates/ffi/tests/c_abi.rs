//! Compiles a C program against the generated header and the static
//! library, then checks its output against the Rust API.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use factcon::lfn::{build_corpus_negatives, write_negatives, LfnConfig};
use factcon::lm::{train_on_documents, NGramConfig, ScorerSpec};
use factcon::synth::{self, SynthConfig};

fn manifest() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

/// `cargo test` only builds the rlib, so ask for the staticlib explicitly.
fn static_lib() -> PathBuf {
    let out = Command::new(env!("CARGO"))
        .args([
            "build",
            "--profile",
            "test",
            "-p",
            "factcon-ffi",
            "--lib",
            "--message-format=json",
        ])
        .current_dir(manifest())
        .output()
        .expect("cargo runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|m| m["reason"] == "compiler-artifact" && m["target"]["name"] == "factcon_ffi")
        .flat_map(|m| m["filenames"].as_array().cloned().unwrap_or_default())
        .filter_map(|f| f.as_str().map(PathBuf::from))
        .find(|f| f.extension().is_some_and(|e| e == "a"))
        .expect("staticlib artifact")
}

#[test]
fn c_program_links_and_agrees_with_rust() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth::generate(&SynthConfig {
        docs: 10,
        ..SynthConfig::default()
    });
    let corpus_path = dir.path().join("corpus.jsonl");
    let emb_path = dir.path().join("embeddings.txt");
    factcon::corpus::write_corpus(File::create(&corpus_path).unwrap(), &corpus.docs).unwrap();
    corpus.embeddings.write_text(File::create(&emb_path).unwrap()).unwrap();

    let exe = dir.path().join("smoke");
    let cc = Command::new("cc")
        .arg(manifest().join("tests/c/smoke.c"))
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest().join("include"))
        .arg(static_lib())
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("cc runs");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));

    let run = Command::new(&exe).arg(&corpus_path).arg(&emb_path).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    let field = |key: &str| -> String {
        stdout
            .lines()
            .find_map(|l| l.strip_prefix(key).map(|r| r.trim_start().to_string()))
            .unwrap_or_else(|| panic!("no `{key}` in {stdout}"))
    };

    let model = Arc::new(train_on_documents(&corpus.docs, NGramConfig::new(3, 0.01)).unwrap());
    let words: Vec<String> = "the council said .".split(' ').map(String::from).collect();
    assert_eq!(field("logprob").parse::<f64>().unwrap(), model.logprob(&words));
    assert_eq!(field("candidates"), "5");
    assert_eq!(field("pm"), "2.5");
    assert_eq!(field("missing"), "4");
    assert!(field("out of range").starts_with("5 index 1000000"));
    assert_eq!(field("version"), env!("CARGO_PKG_VERSION"));

    let cfg = LfnConfig {
        seed: 7,
        ..LfnConfig::default()
    };
    let docs: Vec<_> = corpus.docs.iter().map(|d| (d.clone(), d.align())).collect();
    let built = build_corpus_negatives(&docs, &ScorerSpec::Native(model), &corpus.embeddings, &cfg, 0, 1).unwrap();
    assert_eq!(
        field("negatives"),
        format!("{} failed {}", built.samples.len(), built.diagnostics.len())
    );
    let mut first = Vec::new();
    write_negatives(&mut first, &built.samples[..1]).unwrap();
    assert_eq!(field("first"), String::from_utf8(first).unwrap().trim_end());
}

#[test]
fn committed_header_declares_every_export() {
    let header = fs::read_to_string(manifest().join("include/factcon.h")).unwrap();
    let source = fs::read_to_string(manifest().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .filter_map(|rest| rest.split('(').next())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in [
        "typedef struct FcModel FcModel;",
        "typedef struct FcNegatives FcNegatives;",
        "FC_STATUS_NULL_ARGUMENT = 1",
    ] {
        assert!(header.contains(ty), "{ty}");
    }
}
