use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use neuroground::gateway::http::HttpBackend;
use neuroground::gateway::{
    GatewayErrorKind, HttpApiConfig, ModelBackend, ModelRequest, Provider, RateLimiter, RetryPolicy,
};

const KEY_VAR: &str = "NEUROGROUND_STUB_KEY";

/// Serves the scripted (status, body) replies in order, one per connection,
/// and records each request's headers and body.
fn stub(replies: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            log.lock().unwrap().push(format!("{head}\n{}", String::from_utf8_lossy(&payload)));
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn config(endpoint: String) -> HttpApiConfig {
    HttpApiConfig {
        provider: Provider::Openai,
        endpoint,
        model_id: "stub-model".into(),
        auth_env: KEY_VAR.into(),
        rate_limit: 1000,
        retries: RetryPolicy {
            max_attempts: 4,
            backoff_base_ms: 5,
        },
        timeout_secs: 5,
    }
}

const OK: &str = r#"{"choices":[{"message":{"content":"Plan:\n1. goto(a)"}}]}"#;

#[test]
fn http_backend_against_stub() {
    std::env::set_var(KEY_VAR, "secret");

    // Retries on 429 and 5xx, then succeeds.
    let (url, seen) = stub(vec![(429, "{}"), (503, "{}"), (200, OK)]);
    let done = HttpBackend::new(config(url)).complete(&ModelRequest::text("hello")).unwrap();
    assert_eq!(done.text, "Plan:\n1. goto(a)");
    assert_eq!(done.attempts, 3);
    let requests = seen.lock().unwrap();
    assert_eq!(requests.len(), 3);
    assert!(requests[0].to_ascii_lowercase().contains("authorization: bearer secret"));
    let body: serde_json::Value = serde_json::from_str(requests[0].split_once("\n\n").unwrap().1).unwrap();
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["messages"][0]["content"][0]["text"], "hello");
    drop(requests);

    // Authentication failures are not retried.
    let (url, seen) = stub(vec![(401, "{\"error\":\"bad key\"}")]);
    let err = HttpBackend::new(config(url)).complete(&ModelRequest::text("hello")).unwrap_err();
    assert_eq!(err.kind, GatewayErrorKind::Auth);
    assert_eq!(err.attempts, 1);
    assert_eq!(seen.lock().unwrap().len(), 1);

    // Exhausted retries report the last failure.
    let (url, _) = stub(vec![(429, "{}"); 4]);
    let err = HttpBackend::new(config(url)).complete(&ModelRequest::text("hello")).unwrap_err();
    assert_eq!(err.kind, GatewayErrorKind::RateLimited);
    assert_eq!(err.attempts, 4);

    // A 200 with an unexpected shape.
    let (url, _) = stub(vec![(200, "{\"choices\":[]}")]);
    let err = HttpBackend::new(config(url)).complete(&ModelRequest::text("hello")).unwrap_err();
    assert_eq!(err.kind, GatewayErrorKind::MalformedResponse);

    // The shared limiter spaces dispatches across workers.
    let window = Duration::from_millis(300);
    let (url, seen) = stub(vec![(200, OK); 4]);
    let limiter = Arc::new(RateLimiter::new(2, window));
    let backend = Arc::new(HttpBackend::with_limiter(config(url), limiter));
    let started = Instant::now();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let b = backend.clone();
            thread::spawn(move || b.complete(&ModelRequest::text("x")).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert!(started.elapsed() >= window, "{:?}", started.elapsed());
    assert_eq!(seen.lock().unwrap().len(), 4);
}
