use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use rhs_core::corpus::{AnnotatedSentence, Sentence};
use rhs_core::helpfulness::train_tfidf_ridge;
use rhs_core::textvec::{TokenizerConfig, VocabularyConfig};
use rhs_ffi::*;
use serde_json::{json, Value};

const CONSENSUS: &str = "The battery life is excellent and easily lasts a full week of daily use.";

fn train_model(dir: &Path) -> PathBuf {
    let rows = [
        (CONSENSUS, 1.8),
        ("I ordered this for my sister on a Monday afternoon.", 0.2),
        ("It came in a blue box along with a paper manual.", 0.3),
        ("The strap is sturdy compared to the one on my old phone.", 1.3),
    ];
    let data: Vec<AnnotatedSentence> = rows
        .iter()
        .enumerate()
        .map(|(i, (t, h))| AnnotatedSentence {
            sentence: Sentence::new(&format!("t{i}"), None, 0, *t),
            ratings: Vec::new(),
            helpfulness: *h,
        })
        .collect();
    let model = train_tfidf_ridge(&data, 0.01, TokenizerConfig::default(), &VocabularyConfig::default()).unwrap();
    let path = dir.join("model.json");
    model.save(&path).unwrap();
    path
}

fn last_error() -> String {
    let p = rhs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(path: &Path) -> *mut RhsModel {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { rhs_model_load(c.as_ptr(), &mut m) }, RhsStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn model_round_trip_predicts_like_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = train_model(dir.path());
    let m = load(&path);
    let text = CString::new(CONSENSUS).unwrap();
    let (mut score, mut raw) = (f64::NAN, f64::NAN);
    assert_eq!(
        unsafe { rhs_model_predict(m, text.as_ptr(), &mut score, &mut raw) },
        RhsStatus::Ok
    );
    let expected = rhs_core::helpfulness::RidgeModel::load(&path)
        .unwrap()
        .score("x", CONSENSUS, None)
        .unwrap();
    assert_eq!(score, expected.score);
    assert_eq!(raw, expected.raw_score);
    // null outputs are allowed
    assert_eq!(
        unsafe { rhs_model_predict(m, text.as_ptr(), ptr::null_mut(), ptr::null_mut()) },
        RhsStatus::Ok
    );
    assert!(rhs_last_error().is_null());
    unsafe { rhs_model_free(m) };
    unsafe { rhs_model_free(ptr::null_mut()) };
}

#[test]
fn errors_set_status_and_message() {
    let missing = CString::new("/nonexistent/model.json").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { rhs_model_load(missing.as_ptr(), &mut m) }, RhsStatus::Io);
    assert!(m.is_null());
    assert!(last_error().contains("/nonexistent/model.json"));

    assert_eq!(unsafe { rhs_model_load(ptr::null(), &mut m) }, RhsStatus::NullArgument);
    assert_eq!(
        unsafe { rhs_model_load(missing.as_ptr(), ptr::null_mut()) },
        RhsStatus::NullArgument
    );

    let bad = [0xffu8, 0xfe, 0];
    let mut s = RhsSentiment {
        label: RhsSentimentLabel::Neutral,
        positive: 0.0,
        negative: 0.0,
        neutral: 0.0,
        mixed: 0.0,
    };
    assert_eq!(
        unsafe { rhs_sentiment_classify(bad.as_ptr().cast(), &mut s) },
        RhsStatus::InvalidUtf8
    );

    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "not json").unwrap();
    let g = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rhs_model_load(g.as_ptr(), &mut m) }, RhsStatus::Parse);
}

#[test]
fn sentiment_matches_lexicon_provider() {
    let text = CString::new("The screen is great but the speaker is awful.").unwrap();
    let mut s = RhsSentiment {
        label: RhsSentimentLabel::Neutral,
        positive: 0.0,
        negative: 0.0,
        neutral: 0.0,
        mixed: 0.0,
    };
    assert_eq!(unsafe { rhs_sentiment_classify(text.as_ptr(), &mut s) }, RhsStatus::Ok);
    let r = rhs_core::sentiment::LexiconProvider::default().classify_text(text.to_str().unwrap());
    assert_eq!(s.positive, r.scores.positive);
    assert_eq!(s.negative, r.scores.negative);
    assert_eq!(s.neutral, r.scores.neutral);
    assert_eq!(s.mixed, r.scores.mixed);
    assert_eq!(format!("{:?}", s.label).to_lowercase(), r.label.as_str());
    assert!((s.positive + s.negative + s.neutral + s.mixed - 1.0).abs() < 1e-9);
}

fn extract(m: *const RhsModel, reviews: &Value, cfg: Option<&RhsConfig>) -> Value {
    let input = CString::new(reviews.to_string()).unwrap();
    let mut out = ptr::null_mut();
    let cfg = cfg.map_or(ptr::null(), |c| c as *const RhsConfig);
    let status = unsafe { rhs_extract_json(m, input.as_ptr(), cfg, &mut out) };
    assert_eq!(status, RhsStatus::Ok, "{}", last_error());
    let v = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    unsafe { rhs_string_free(out) };
    v
}

#[test]
fn extract_json_finds_repeated_sentence() {
    let dir = tempfile::tempdir().unwrap();
    let m = load(&train_model(dir.path()));
    let mut reviews = Vec::new();
    for i in 0..7 {
        reviews.push(json!({"review_id": format!("r{i}"), "product_id": "P", "text": CONSENSUS}));
    }
    reviews.push(
        json!({"review_id": "x", "product_id": "Q", "text": "I ordered this for my sister on a Monday afternoon."}),
    );
    let v = extract(m, &Value::Array(reviews), None);
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[0]["product_id"], "P");
    assert_eq!(v[0]["positive"]["sentence"]["text"], CONSENSUS);
    assert_eq!(v[0]["positive"]["support"], 6);
    assert!(v[1]["positive"].is_null());

    // raising min_support above the copy count empties the slot
    let mut cfg = rhs_config_default();
    cfg.min_support = 7;
    let v = extract(
        m,
        &json!([{"review_id": "a", "product_id": "P", "text": CONSENSUS}]),
        Some(&cfg),
    );
    assert!(v[0]["positive"].is_null());

    let v = extract(m, &json!([]), None);
    assert_eq!(
        v,
        json!([{"product_id": "", "positive": null, "negative": null, "diagnostics": v[0]["diagnostics"]}])
    );

    let mut out = ptr::null_mut();
    let bad = CString::new("[{\"review_id\": 1}]").unwrap();
    assert_eq!(
        unsafe { rhs_extract_json(m, bad.as_ptr(), ptr::null(), &mut out) },
        RhsStatus::Parse
    );
    assert!(out.is_null());
    let mut cfg = rhs_config_default();
    cfg.sigma = 2.0;
    let ok = CString::new("[]").unwrap();
    assert_eq!(
        unsafe { rhs_extract_json(m, ok.as_ptr(), &cfg, &mut out) },
        RhsStatus::InvalidInput
    );
    unsafe { rhs_model_free(m) };
}

#[test]
fn config_defaults_match_core() {
    let d = rhs_config_default();
    assert_eq!(d.sigma, rhs_core::rhs::DEFAULT_SIGMA);
    assert_eq!(d.min_support, rhs_core::rhs::DEFAULT_MIN_SUPPORT);
    assert_eq!(d.alpha, rhs_core::rhs::DEFAULT_ALPHA);
    assert_eq!((d.min_chars, d.max_chars), (30, 200));
    let r = rhs_config_relaxed();
    assert_eq!((r.sigma, r.min_support), (rhs_core::rhs::RELAXED_SIGMA, 0));
    let v = unsafe { CStr::from_ptr(rhs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "rhs.h"

int main(void) {
    RhsSentiment s;
    if (rhs_sentiment_classify("This is a great and reliable product.", &s) != RHS_STATUS_OK) return 1;
    if (s.label != RHS_SENTIMENT_LABEL_POSITIVE) return 2;
    RhsModel *m = NULL;
    if (rhs_model_load("/nonexistent/model.json", &m) != RHS_STATUS_IO) return 3;
    if (m != NULL || rhs_last_error() == NULL) return 4;
    RhsConfig c = rhs_config_default();
    if (c.min_support != 5 || c.similarity != RHS_SIMILARITY_IDF_BOW) return 5;
    if (strlen(rhs_version()) == 0) return 6;
    puts("ok");
    return 0;
}
"#;

/// Compiles a C program against the generated header and the shared
/// library. Skipped when no C compiler is installed.
#[test]
fn header_compiles_and_links_from_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let lib_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    if !lib_dir.join("librhs_ffi.so").exists() {
        eprintln!("skipping: no shared library in {}", lib_dir.display());
        return;
    }
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lrhs_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
