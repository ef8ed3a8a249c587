//! Remote learner against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use teachsize::drawing::{ConceptName, Drawing, Stroke};
use teachsize::learner::{Learner, LearnerConfig, LearnerError, Query, RemoteLearner};
use teachsize::render::{Modality, RenderStyle, Stimulus};
use teachsize::simplify::Epsilon;

#[derive(Debug, Clone)]
struct Seen {
    request_line: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves the scripted `(status, body)` replies in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap();
                }
                headers.push((k.trim().to_owned(), v.trim().to_owned()));
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                request_line: request_line.trim_end().to_owned(),
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut out = stream;
            write!(
                out,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            out.flush().unwrap();
        }
    });
    (url, seen, handle)
}

fn ok_reply(text: &str) -> (u16, String) {
    (
        200,
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string(),
    )
}

fn stimulus(modality: Modality) -> Stimulus {
    let d = Drawing::new(
        "h1",
        ConceptName::new("house"),
        true,
        vec![Stroke::from_coords(&[(10, 200), (10, 80), (128, 10), (246, 80), (246, 200), (10, 200)]).unwrap()],
    )
    .unwrap();
    Stimulus::render(&d, Epsilon::DATASET, modality, &RenderStyle::default())
}

fn config(url: &str, key_env: Option<&str>) -> LearnerConfig {
    let mut cfg = LearnerConfig::new("mock", "remote");
    cfg.endpoint = Some(url.to_owned());
    cfg.model = Some("mock-vision-1".into());
    cfg.api_key_env = key_env.map(str::to_owned);
    cfg.retry_base_delay_ms = 1;
    cfg.rate_limit_per_sec = 0.0;
    cfg.request_timeout_secs = 5.0;
    cfg
}

fn ask(learner: &RemoteLearner, s: &Stimulus, t: f64) -> Result<String, LearnerError> {
    learner.identify(&Query { stimulus: s, temperature: t }, &mut ChaCha8Rng::seed_from_u64(0))
}

#[test]
fn answers_and_sends_bearer_key() {
    std::env::set_var("TEACHSIZE_TEST_KEY_A", "sk-test");
    let (url, seen, h) = serve(vec![ok_reply("  House\n")]);
    let l = RemoteLearner::from_config(&config(&url, Some("TEACHSIZE_TEST_KEY_A"))).unwrap();
    let s = stimulus(Modality::Bitmap);
    assert_eq!(ask(&l, &s, 0.0).unwrap(), "House");
    h.join().unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(seen[0].header("authorization"), Some("Bearer sk-test"));
    let body = &seen[0].body;
    assert_eq!(body["model"], "mock-vision-1");
    assert_eq!(body["temperature"], 0.0);
    let content = &body["messages"][0]["content"];
    assert!(content[0]["text"].as_str().unwrap().contains("image"));
    assert!(content[1]["image_url"]["url"]
        .as_str()
        .unwrap()
        .starts_with("data:image/png;base64,iVBOR"));
}

#[test]
fn coordinates_prompt_carries_tikz() {
    let (url, seen, h) = serve(vec![ok_reply("house")]);
    let l = RemoteLearner::from_config(&config(&url, None)).unwrap();
    let s = stimulus(Modality::Coordinates);
    assert_eq!(ask(&l, &s, 1.0).unwrap(), "house");
    h.join().unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].header("authorization"), None);
    let content = &seen[0].body["messages"][0]["content"];
    assert_eq!(content.as_array().unwrap().len(), 1);
    assert!(content[0]["text"]
        .as_str()
        .unwrap()
        .contains("```\\draw (10, 200) -- (10, 80)"));
}

#[test]
fn retries_rate_limit_and_server_errors() {
    let (url, seen, h) = serve(vec![
        (429, "{\"error\":\"slow down\"}".into()),
        (503, "{}".into()),
        ok_reply("cat"),
    ]);
    let l = RemoteLearner::from_config(&config(&url, None)).unwrap();
    assert_eq!(ask(&l, &stimulus(Modality::Coordinates), 0.0).unwrap(), "cat");
    h.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_max_retries() {
    let (url, seen, h) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let mut cfg = config(&url, None);
    cfg.max_retries = 2;
    let l = RemoteLearner::from_config(&cfg).unwrap();
    let err = ask(&l, &stimulus(Modality::Coordinates), 0.0).unwrap_err();
    assert!(matches!(err, LearnerError::Transport { attempts: 3, .. }), "{err}");
    h.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_error_is_not_retried() {
    let (url, seen, h) = serve(vec![(400, "{\"error\":\"bad request\"}".into())]);
    let l = RemoteLearner::from_config(&config(&url, None)).unwrap();
    let err = ask(&l, &stimulus(Modality::Coordinates), 0.0).unwrap_err();
    assert!(matches!(err, LearnerError::Protocol(ref m) if m.contains("400")), "{err}");
    h.join().unwrap();
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn missing_key_fails_before_any_request() {
    std::env::remove_var("TEACHSIZE_TEST_KEY_MISSING");
    let l = RemoteLearner::from_config(&config("http://127.0.0.1:9", Some("TEACHSIZE_TEST_KEY_MISSING"))).unwrap();
    let err = ask(&l, &stimulus(Modality::Coordinates), 0.0).unwrap_err();
    assert!(matches!(err, LearnerError::Config(ref m) if m.contains("TEACHSIZE_TEST_KEY_MISSING")));
}

#[test]
fn temperature_out_of_range_is_rejected() {
    let l = RemoteLearner::from_config(&config("http://127.0.0.1:9", None)).unwrap();
    let err = ask(&l, &stimulus(Modality::Coordinates), 2.5).unwrap_err();
    assert!(matches!(err, LearnerError::Config(_)));
}

#[test]
fn custom_auth_header_without_scheme() {
    std::env::set_var("TEACHSIZE_TEST_KEY_B", "k-123");
    let (url, seen, h) = serve(vec![(
        200,
        serde_json::json!({"content": [{"type": "text", "text": "sun"}]}).to_string(),
    )]);
    let mut cfg = config(&url, Some("TEACHSIZE_TEST_KEY_B"));
    cfg.auth_header = "x-api-key".into();
    cfg.auth_scheme = String::new();
    cfg.path = "/v1/messages".into();
    let l = RemoteLearner::from_config(&cfg).unwrap();
    assert_eq!(ask(&l, &stimulus(Modality::Coordinates), 0.0).unwrap(), "sun");
    h.join().unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].request_line, "POST /v1/messages HTTP/1.1");
    assert_eq!(seen[0].header("x-api-key"), Some("k-123"));
}
