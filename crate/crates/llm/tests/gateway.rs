use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use isoscope_llm::{
    Gateway, GatewayConfig, HttpChatBackend, RecordingBackend, ReplayBackend, Role, RoleConfig,
    ScriptedBackend,
};

/// Serves exactly one canned HTTP response and hands back the request body.
fn one_shot_server(reply_json: &'static str) -> (String, std::thread::JoinHandle<(String, String)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let h = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut len = 0usize;
        let mut auth = String::new();
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" {
                break;
            }
            let lower = line.to_ascii_lowercase();
            if let Some(v) = lower.strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            if lower.starts_with("authorization:") {
                auth = line.trim().to_string();
            }
        }
        let mut body = vec![0u8; len];
        reader.read_exact(&mut body).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
            reply_json.len(),
            reply_json
        )
        .unwrap();
        (String::from_utf8(body).unwrap(), auth)
    });
    (url, h)
}

#[test]
fn live_wire_round_trip() {
    let (url, server) = one_shot_server(r#"{"choices":[{"message":{"content":"Final Answer: 4"}}]}"#);
    std::env::set_var("ISOSCOPE_TEST_KEY", "sekrit");
    let mut cfg = GatewayConfig::default();
    cfg.set_role(
        Role::Orchestration,
        RoleConfig {
            endpoint_url: Some(url),
            api_key_env: Some("ISOSCOPE_TEST_KEY".into()),
            ..RoleConfig::defaults_for(Role::Orchestration)
        },
    )
    .unwrap();
    let g = Gateway::new(cfg, Arc::new(HttpChatBackend::new(Duration::from_secs(10)).unwrap()));
    let c = g.complete(Role::Orchestration, "how many datasets?").unwrap();
    assert_eq!(c.text, "Final Answer: 4");
    let (body, auth) = server.join().unwrap();
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["model"], "gpt-4o");
    assert_eq!(v["temperature"], 0.0);
    assert_eq!(v["messages"][0]["role"], "user");
    assert_eq!(v["messages"][0]["content"], "how many datasets?");
    assert_eq!(auth.to_ascii_lowercase(), "authorization: bearer sekrit");
}

#[test]
fn record_then_replay_consumes_each_entry_once() {
    let scripted = Arc::new(
        ScriptedBackend::new()
            .with(Role::Orchestration, ["a", "b"])
            .with(Role::Judge, ["77"]),
    );
    let rec = Arc::new(RecordingBackend::new(scripted));
    let g = Gateway::new(GatewayConfig::default(), rec.clone());
    let run = |g: &Gateway| {
        vec![
            g.complete(Role::Orchestration, "first").unwrap().text,
            g.judge_caption("x", "y").unwrap().to_string(),
            g.complete(Role::Orchestration, "second").unwrap().text,
        ]
    };
    let live = run(&g);
    let replay = Arc::new(ReplayBackend::new(rec.transcript()));
    let again = run(&g.with_backend(replay.clone()));
    assert_eq!(live, again);
    assert_eq!(replay.consumed(), 3);
    assert_eq!(replay.remaining(), 0);
    assert!(g.with_backend(replay).complete(Role::Qa, "extra").is_err());
}

#[test]
fn qa_model_change_does_not_touch_codegen_routing() {
    let mut cfg = GatewayConfig::default();
    let before = cfg.role(Role::CodeGeneration).clone();
    cfg.set_role(
        Role::Qa,
        RoleConfig {
            model_id: "other-model".into(),
            ..RoleConfig::defaults_for(Role::Qa)
        },
    )
    .unwrap();
    assert_eq!(cfg.role(Role::CodeGeneration), &before);
    let g = Gateway::new(cfg, Arc::new(ScriptedBackend::new()));
    assert_eq!(g.route(Role::CodeGeneration).model_id, "o3-mini");
    assert_eq!(g.route(Role::Qa).model_id, "other-model");
}

#[test]
fn judging_session_replays_to_same_scores() {
    let replies: Vec<String> = (0..10).map(|i| format!("Score: {}", i * 7 % 101)).collect();
    let scripted = Arc::new(ScriptedBackend::new().with(Role::Judge, replies));
    let rec = Arc::new(RecordingBackend::new(scripted));
    let g = Gateway::new(GatewayConfig::default(), rec.clone());
    let score_all = |g: &Gateway| -> Vec<f64> {
        (0..10)
            .map(|i| g.judge_caption(&format!("caption {i}"), "a crater on an asteroid").unwrap())
            .collect()
    };
    let first = score_all(&g);
    let t = rec.transcript();
    for _ in 0..2 {
        let again = score_all(&g.with_backend(Arc::new(ReplayBackend::new(t.clone()))));
        assert_eq!(first, again);
    }
}
