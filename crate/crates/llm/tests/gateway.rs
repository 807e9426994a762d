use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use aspbench_core::syntax::{parse_program, PredicateMapping};
use aspbench_llm::{
    matcher_prompt, paraphrase_prompt, EndpointKind, Gateway, LlmEndpoint, LlmError, PromptCache, PromptRecord, Role,
    Stage,
};

#[derive(Debug, Clone)]
struct Seen {
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves the scripted `(status, body)` replies in order, one per
/// connection, and records what each request carried.
struct MockServer {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl MockServer {
    fn start(script: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        thread::spawn(move || {
            for (status, reply) in script {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0;
                let mut authorization = None;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let (name, value) = line.split_once(':').unwrap_or((line, ""));
                    match name.to_ascii_lowercase().as_str() {
                        "content-length" => length = value.trim().parse().unwrap(),
                        "authorization" => authorization = Some(value.trim().to_string()),
                        _ => {}
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                log.lock().unwrap().push(Seen {
                    authorization,
                    body: serde_json::from_slice(&body).unwrap(),
                });
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                )
                .unwrap();
            }
        });
        MockServer { url, seen }
    }

    fn seen(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn completion(content: &str) -> (u16, String) {
    (
        200,
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string(),
    )
}

fn endpoint(url: &str) -> LlmEndpoint {
    LlmEndpoint {
        retry_backoff_ms: 1,
        ..LlmEndpoint::live(url, "mock-model", None)
    }
}

const DESCRIPTION: &str = "Color the nodes of a graph so that adjacent nodes differ.";

#[test]
fn generated_program_is_cleaned_and_cached() {
    let server = MockServer::start(vec![completion(
        "Sure! Here is the program:\n```asp\nnode(1..3).\ncolor(r;g;b).\n1 { chosenColor(N,C) : color(C) } 1 :- node(N).\n```\nLet me know.",
    )]);
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(endpoint(&server.url), Some(PromptCache::new(dir.path())));

    let first = gw.generate_program(DESCRIPTION, 1).unwrap();
    assert_eq!(
        first.response_clean,
        "node(1..3).\ncolor(r;g;b).\n1 { chosenColor(N,C) : color(C) } 1 :- node(N).\n"
    );
    assert!(first.response_raw.starts_with("Sure!"));
    assert_eq!(first.role, Role::Generator);

    let second = gw.generate_program(DESCRIPTION, 1).unwrap();
    assert_eq!(first, second);
    assert_eq!(gw.requests(), 1);
    assert_eq!(server.seen().len(), 1);

    // A fresh gateway over the same cache directory needs no request either.
    let again = Gateway::new(endpoint(&server.url), Some(PromptCache::new(dir.path())));
    assert_eq!(again.generate_program(DESCRIPTION, 1).unwrap(), first);
    assert_eq!(again.requests(), 0);
}

#[test]
fn request_carries_model_temperature_and_prompt() {
    let server = MockServer::start(vec![completion("a.")]);
    let gw = Gateway::new(endpoint(&server.url), None);
    gw.generate_program(DESCRIPTION, 3).unwrap();
    let body = &server.seen()[0].body;
    assert_eq!(body["model"], "mock-model");
    assert_eq!(body["temperature"], 0.7);
    let content = body["messages"][0]["content"].as_str().unwrap();
    assert!(content.starts_with(DESCRIPTION));
    assert!(content.ends_with("Generate the program only, without any additional text."));
}

#[test]
fn distinct_runs_are_distinct_requests() {
    let server = MockServer::start(vec![completion("a."), completion("b.")]);
    let gw = Gateway::new(
        endpoint(&server.url),
        Some(PromptCache::new(tempfile::tempdir().unwrap().keep())),
    );
    assert_eq!(gw.generate_program(DESCRIPTION, 1).unwrap().response_clean, "a.");
    assert_eq!(gw.generate_program(DESCRIPTION, 2).unwrap().response_clean, "b.");
    assert_eq!(gw.requests(), 2);
}

#[test]
fn server_errors_are_retried() {
    let server = MockServer::start(vec![(503, "busy".into()), (429, "slow down".into()), completion("a.")]);
    let gw = Gateway::new(endpoint(&server.url), None);
    assert_eq!(gw.generate_program(DESCRIPTION, 1).unwrap().response_clean, "a.");
    assert_eq!(server.seen().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let server = MockServer::start(vec![(500, "a".into()), (500, "b".into()), (500, "c".into())]);
    let gw = Gateway::new(
        LlmEndpoint {
            max_retries: 2,
            ..endpoint(&server.url)
        },
        None,
    );
    match gw.generate_program(DESCRIPTION, 1) {
        Err(LlmError::Http { status: 500, body }) => assert_eq!(body, "c"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(vec![(400, "bad request".into()), completion("never")]);
    let gw = Gateway::new(endpoint(&server.url), None);
    assert!(matches!(
        gw.generate_program(DESCRIPTION, 1),
        Err(LlmError::Http { status: 400, .. })
    ));
    assert_eq!(server.seen().len(), 1);
}

#[test]
fn empty_and_malformed_replies_are_errors() {
    let server = MockServer::start(vec![completion("  \n"), (200, "{\"choices\":[]}".into())]);
    let gw = Gateway::new(endpoint(&server.url), None);
    assert!(matches!(
        gw.generate_program(DESCRIPTION, 1),
        Err(LlmError::EmptyResponse)
    ));
    assert!(matches!(
        gw.generate_program(DESCRIPTION, 2),
        Err(LlmError::InvalidResponse(_))
    ));
    assert!(matches!(gw.generate_program("  ", 1), Err(LlmError::EmptyInput(_))));
}

#[test]
fn api_key_goes_to_the_header_and_nowhere_else() {
    let var = "ASPBENCH_LLM_TEST_KEY";
    std::env::set_var(var, "sk-test-123");
    let server = MockServer::start(vec![completion("a.")]);
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::new(
        LlmEndpoint {
            api_key_env: Some(var.into()),
            ..endpoint(&server.url)
        },
        Some(PromptCache::new(dir.path())),
    );
    gw.generate_program(DESCRIPTION, 1).unwrap();
    assert_eq!(server.seen()[0].authorization.as_deref(), Some("Bearer sk-test-123"));
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(!text.contains("sk-test-123"));
    }
    assert!(!serde_json::to_string(gw.endpoint()).unwrap().contains("sk-test-123"));

    let missing = Gateway::new(
        LlmEndpoint {
            api_key_env: Some("ASPBENCH_LLM_TEST_UNSET".into()),
            ..endpoint(&server.url)
        },
        None,
    );
    assert!(matches!(
        missing.generate_program(DESCRIPTION, 1),
        Err(LlmError::MissingApiKey(_))
    ));
}

const GOLD: &str = "node(1). node(2). node(3).
edge(1,2). edge(1,3). edge(2,1). edge(2,3).
color(red). color(green). color(black).
1 {chosen(N,C) : color(C)} 1 :- node(N).
:- edge(U,V), U < V, chosen(U,C), chosen(V,C).";

const CANDIDATE: &str = "node(a). node(b). node(c).
edge(a, b). edge(b, c). edge(c, d).
colour(1). colour(2). colour(3).
1 {assign(N, C) : colour(C)} 1 :- node(N).
:- edge(X, Y), assign(X, C), assign(Y, C).";

#[test]
fn matcher_replies_are_parsed() {
    let server = MockServer::start(vec![
        completion("{'node':'node', 'edge':'edge', 'color':'colour', 'chosen':'assign'}"),
        completion("No semantic match"),
        completion("here is the mapping: node -> node, edge => edge"),
    ]);
    let gw = Gateway::new(endpoint(&server.url), None);
    let (gold, cand) = (parse_program(GOLD).unwrap(), parse_program(CANDIDATE).unwrap());

    let m = gw.match_predicates(&gold, &cand, 1).unwrap();
    let pairs =
        |v: &[(&str, &str)]| PredicateMapping::Pairs(v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect());
    assert_eq!(
        m.mapping.unwrap(),
        pairs(&[
            ("node", "node"),
            ("edge", "edge"),
            ("color", "colour"),
            ("chosen", "assign")
        ])
    );
    let prompt = &server.seen()[0].body["messages"][0]["content"];
    assert_eq!(
        prompt.as_str().unwrap(),
        matcher_prompt(&gold.to_source(), &cand.to_source())
    );

    assert_eq!(
        gw.match_predicates(&gold, &cand, 2).unwrap().mapping.unwrap(),
        PredicateMapping::NoSemanticMatch
    );
    let bad = gw.match_predicates(&gold, &cand, 3).unwrap();
    assert!(bad.mapping.is_err());
    assert_eq!(
        bad.record.response_clean,
        "here is the mapping: node -> node, edge => edge"
    );
}

#[test]
fn paraphrasing_chains_the_stages() {
    let server = MockServer::start(vec![completion("first version"), completion("second version")]);
    let gw = Gateway::new(endpoint(&server.url), None);
    let p1 = gw.paraphrase(DESCRIPTION, Stage::First).unwrap().response_clean;
    let p2 = gw.paraphrase(&p1, Stage::Second).unwrap().response_clean;
    assert_eq!((p1.as_str(), p2.as_str()), ("first version", "second version"));
    let seen = server.seen();
    let second_prompt = seen[1].body["messages"][0]["content"].as_str().unwrap();
    assert_eq!(second_prompt, paraphrase_prompt("first version", Stage::Second));
    assert!(!second_prompt.contains(DESCRIPTION));
}

#[test]
fn shipped_paraphrases_need_no_endpoint() {
    let gw = Gateway::new(endpoint("http://127.0.0.1:9"), None);
    let text = gw
        .paraphrase_or_shipped(Some("shipped text"), DESCRIPTION, Stage::First)
        .unwrap();
    assert_eq!(text, "shipped text");
    assert_eq!(gw.requests(), 0);
}

#[test]
fn replay_serves_recorded_fixtures() {
    let fixtures = tempfile::tempdir().unwrap();
    let replay = LlmEndpoint::replay(fixtures.path().to_str().unwrap(), "recorded-model");
    assert_eq!(replay.kind, EndpointKind::Replay);
    let raw = "```\np(1).\n```\ntrailing prose";
    let record = PromptRecord::new(
        &replay,
        Role::Generator,
        aspbench_llm::generator_prompt(DESCRIPTION),
        4,
        raw.into(),
    );
    PromptCache::new(fixtures.path()).put(&record).unwrap();

    let gw = Gateway::new(replay.clone(), None);
    let got = gw.generate_program(DESCRIPTION, 4).unwrap();
    assert_eq!(got.response_clean, "p(1).\n");
    assert_eq!(got, record);
    assert!(matches!(
        gw.generate_program(DESCRIPTION, 5),
        Err(LlmError::MissingFixture { .. })
    ));
}
