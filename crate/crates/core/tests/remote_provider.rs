use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rhs_core::sentiment::{RemoteConfig, RemoteProvider, SentimentLabel, SentimentProvider};
use rhs_core::Error;
use serde_json::{json, Value};

/// Serves `responses` in order, one per connection, and records request bodies.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, thread::JoinHandle<Vec<Value>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/classify", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            counter.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                if let Some((k, v)) = l.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(serde_json::from_slice(&buf).unwrap_or(Value::Null));
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
        }
        bodies
    });
    (url, hits, handle)
}

fn config(url: &str) -> RemoteConfig {
    let mut c = RemoteConfig::new(url);
    c.initial_backoff = Duration::from_millis(5);
    c.timeout = Duration::from_secs(5);
    c
}

fn result(label: &str, pos: f64, neg: f64, neu: f64, mix: f64) -> Value {
    json!({"label": label, "scores": {"positive": pos, "negative": neg, "neutral": neu, "mixed": mix}})
}

#[test]
fn results_align_with_request_order() {
    let body = json!({"results": [
        result("positive", 0.7, 0.1, 0.1, 0.1),
        result("negative", 0.1, 0.8, 0.1, 0.0),
    ]})
    .to_string();
    let (url, _, handle) = serve(vec![(200, body)]);
    let provider = RemoteProvider::new(config(&url)).unwrap();
    let out = provider.classify_batch(&["good", "bad"]).unwrap();
    assert_eq!(out[0].label, SentimentLabel::Positive);
    assert_eq!(out[1].label, SentimentLabel::Negative);
    let bodies = handle.join().unwrap();
    assert_eq!(bodies[0], json!({"texts": ["good", "bad"]}));
}

#[test]
fn scores_are_normalized_and_label_follows_argmax() {
    let body = json!({"results": [result("neutral", 2.0, 1.0, 1.0, 0.0)]}).to_string();
    let (url, _, handle) = serve(vec![(200, body)]);
    let provider = RemoteProvider::new(config(&url)).unwrap();
    let r = provider.classify("x").unwrap();
    assert_eq!(r.label, SentimentLabel::Positive);
    assert_eq!(r.scores.positive, 0.5);
    assert!(r.is_valid());
    handle.join().unwrap();
}

#[test]
fn server_errors_are_retried() {
    let ok = json!({"results": [result("mixed", 0.1, 0.1, 0.1, 0.7)]}).to_string();
    let (url, hits, handle) = serve(vec![(503, "{}".into()), (500, "{}".into()), (200, ok)]);
    let provider = RemoteProvider::new(config(&url)).unwrap();
    assert_eq!(provider.classify("x").unwrap().label, SentimentLabel::Mixed);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    handle.join().unwrap();
}

#[test]
fn retries_exhausted_reports_metadata() {
    let (url, _, handle) = serve(vec![(502, "{}".into()); 3]);
    let provider = RemoteProvider::new(config(&url)).unwrap();
    match provider.classify("x") {
        Err(Error::Provider {
            status,
            retryable,
            attempts,
            ..
        }) => {
            assert_eq!(status, Some(502));
            assert!(retryable);
            assert_eq!(attempts, 3);
        }
        other => panic!("expected provider error, got {other:?}"),
    }
    handle.join().unwrap();
}

#[test]
fn client_errors_are_not_retried() {
    let (url, hits, handle) = serve(vec![(400, "{}".into())]);
    let provider = RemoteProvider::new(config(&url)).unwrap();
    let err = provider.classify("x").unwrap_err();
    assert!(matches!(
        err,
        Error::Provider {
            status: Some(400),
            retryable: false,
            attempts: 1,
            ..
        }
    ));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    handle.join().unwrap();
}

#[test]
fn malformed_bodies_are_errors() {
    let short = json!({"results": []}).to_string();
    let (url, _, handle) = serve(vec![(200, "not json".into()), (200, short)]);
    let provider = RemoteProvider::new(config(&url)).unwrap();
    assert!(matches!(
        provider.classify("x"),
        Err(Error::Provider { retryable: false, .. })
    ));
    assert!(matches!(
        provider.classify("x"),
        Err(Error::Provider { retryable: false, .. })
    ));
    handle.join().unwrap();
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut cfg = config(&format!("http://127.0.0.1:{port}/"));
    cfg.max_attempts = 2;
    let provider = RemoteProvider::new(cfg).unwrap();
    match provider.classify("x") {
        Err(Error::Provider {
            status: None,
            retryable: true,
            attempts: 2,
            ..
        }) => {}
        other => panic!("expected transport error, got {other:?}"),
    }
}
