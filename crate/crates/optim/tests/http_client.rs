//! HTTP backend against a local scripted server: wire format, retry
//! classes, and error mapping.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread::JoinHandle;
use std::time::Duration;

use opto_optim::llmclient::{ApiKey, BackendConfig, BackendError, ChatBackend, ChatMessage, HttpBackend};

struct Exchange {
    status: u16,
    reason: &'static str,
    body: String,
}

/// Serves one scripted exchange per incoming connection and returns the
/// raw requests it saw.
fn serve(exchanges: Vec<Exchange>) -> (String, JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for exchange in exchanges {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut request = String::new();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(value) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = value.trim().parse().unwrap();
                }
                request.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; content_length];
            reader.read_exact(&mut body).unwrap();
            request.push_str(&String::from_utf8_lossy(&body));
            seen.push(request);

            let response = format!(
                "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                exchange.status,
                exchange.reason,
                exchange.body.len(),
                exchange.body
            );
            reader.into_inner().write_all(response.as_bytes()).unwrap();
        }
        seen
    });
    (base_url, handle)
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": content } }],
        "usage": { "prompt_tokens": 42, "completion_tokens": 7 }
    })
    .to_string()
}

fn test_config(base_url: &str) -> BackendConfig {
    let mut config = BackendConfig::new(base_url, ApiKey::new("test-key"), "test-model");
    config.backoff_base = Duration::from_millis(5);
    config.timeout = Duration::from_secs(5);
    config
}

fn messages() -> Vec<ChatMessage> {
    vec![
        ChatMessage::system("system prompt"),
        ChatMessage::user("user prompt"),
    ]
}

#[test]
fn echoes_the_first_choice_and_reports_usage() {
    let payload = r#"{"reasoning":"r","answer":"","suggestion":{"x":"0.5"}}"#;
    let (base_url, handle) = serve(vec![Exchange {
        status: 200,
        reason: "OK",
        body: ok_body(payload),
    }]);
    let backend = HttpBackend::new(test_config(&base_url));
    let reply = backend.complete(&messages(), None).unwrap();
    assert_eq!(reply.content, payload);
    assert_eq!(reply.prompt_tokens, Some(42));
    assert_eq!(reply.completion_tokens, Some(7));

    let seen = handle.join().unwrap();
    assert_eq!(seen.len(), 1);
    let request = &seen[0];
    assert!(request.starts_with("POST /chat/completions HTTP/1.1\r\n"));
    assert!(request.contains("authorization: Bearer test-key") ||
            request.contains("Authorization: Bearer test-key"));
    let body_start = request.find("\r\n\r\n").unwrap() + 4;
    let body: serde_json::Value = serde_json::from_str(&request[body_start..]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "user prompt");
}

#[test]
fn rate_limits_are_retried_until_success() {
    let (base_url, handle) = serve(vec![
        Exchange { status: 429, reason: "Too Many Requests", body: "slow down".into() },
        Exchange { status: 429, reason: "Too Many Requests", body: "slow down".into() },
        Exchange { status: 200, reason: "OK", body: ok_body("TERMINATE") },
    ]);
    let backend = HttpBackend::new(test_config(&base_url));
    let reply = backend.complete(&messages(), None).unwrap();
    assert_eq!(reply.content, "TERMINATE");
    // Two retries -> three attempts in total.
    assert_eq!(handle.join().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (base_url, handle) = serve(vec![Exchange {
        status: 401,
        reason: "Unauthorized",
        body: "bad key".into(),
    }]);
    let backend = HttpBackend::new(test_config(&base_url));
    let err = backend.complete(&messages(), None).unwrap_err();
    match err {
        BackendError::HttpStatus { status, .. } => assert_eq!(status, 401),
        other => panic!("expected HttpStatus, got {other:?}"),
    }
    assert_eq!(handle.join().unwrap().len(), 1);
}

#[test]
fn malformed_payload_is_reported() {
    let (base_url, _handle) = serve(vec![Exchange {
        status: 200,
        reason: "OK",
        body: r#"{"unexpected":"shape"}"#.into(),
    }]);
    let backend = HttpBackend::new(test_config(&base_url));
    let err = backend.complete(&messages(), None).unwrap_err();
    assert!(matches!(err, BackendError::MalformedResponse(_)));
}

#[test]
fn empty_user_content_is_rejected_before_sending() {
    let backend = HttpBackend::new(test_config("http://127.0.0.1:9"));
    let err = backend
        .complete(&[ChatMessage::user("")], None)
        .unwrap_err();
    assert!(matches!(err, BackendError::InvalidRequest(_)));
}

#[test]
fn exhausted_retries_surface_the_last_error() {
    let (base_url, _handle) = serve(vec![
        Exchange { status: 500, reason: "Internal Server Error", body: "boom".into() },
        Exchange { status: 500, reason: "Internal Server Error", body: "boom".into() },
    ]);
    let mut config = test_config(&base_url);
    config.max_retries = 1;
    let backend = HttpBackend::new(config);
    let err = backend.complete(&messages(), None).unwrap_err();
    assert!(matches!(err, BackendError::HttpStatus { status: 500, .. }));
}

#[test]
fn api_key_debug_output_is_redacted() {
    let config = test_config("http://example.invalid");
    let rendered = format!("{config:?}");
    assert!(!rendered.contains("test-key"));
    assert!(rendered.contains("redacted"));
}
