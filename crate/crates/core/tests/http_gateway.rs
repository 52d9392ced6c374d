//! The HTTP gateway against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use nncaption_core::gateway::{ChatRequest, Completer, EndpointConfig, FinishReason, GatewayError, HttpGateway};

struct Seen {
    headers: Vec<String>,
    body: String,
}

/// Serves the canned `(status, body)` replies in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                headers,
                body: String::from_utf8(buf).unwrap(),
            });
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

fn completion(text: &str, finish: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": finish}]}).to_string()
}

fn gateway(url: &str) -> HttpGateway {
    let mut c = EndpointConfig::new(url);
    c.initial_backoff = Duration::from_millis(5);
    c.timeout = Duration::from_secs(10);
    c.api_key = Some("secret".into());
    HttpGateway::new(c)
}

fn request() -> ChatRequest {
    ChatRequest {
        system_message: "system text".into(),
        user_message: "user text".into(),
        temperature: 0.8,
        max_tokens: 256,
        model_name: "tiny-model".into(),
    }
}

#[test]
fn retries_transient_failures_then_succeeds() {
    let (url, seen) = serve(vec![
        (503, "busy".into()),
        (429, "slow down".into()),
        (200, completion("```python\nx = 1\n```", "length")),
    ]);
    let reply = gateway(&url).complete(&request()).unwrap();
    assert_eq!(reply.raw_text, "```python\nx = 1\n```");
    assert_eq!(reply.finish_reason, FinishReason::Length);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    let body: serde_json::Value = serde_json::from_str(&seen[2].body).unwrap();
    assert_eq!(body["model"], "tiny-model");
    assert_eq!(body["messages"][0]["content"], "system text");
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["max_tokens"], 256);
    assert!(seen[0]
        .headers
        .iter()
        .any(|h| h.eq_ignore_ascii_case("authorization: Bearer secret")));
}

#[test]
fn gives_up_after_the_retry_limit() {
    let (url, seen) = serve(vec![(500, String::new()), (502, String::new()), (504, String::new())]);
    match gateway(&url).complete(&request()) {
        Err(GatewayError::EndpointFailure { attempts, last }) => {
            assert_eq!(attempts, 3);
            assert!(last.contains("504"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, "bad request".into())]);
    let err = gateway(&url).complete(&request()).unwrap_err();
    assert!(matches!(err, GatewayError::HttpStatus { status: 400, .. }));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_success_body_is_an_error() {
    let (url, _) = serve(vec![(200, r#"{"choices": []}"#.into())]);
    assert!(matches!(gateway(&url).complete(&request()), Err(GatewayError::Malformed(_))));
}
