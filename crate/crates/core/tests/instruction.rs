use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use lca_core::executive::record_demo;
use lca_core::instruction::{
    decompose, external_decompose, parse_completion, parse_task, render_prompt, Curriculum, EndpointConfig,
    PromptTemplate,
};
use lca_core::semantics::{Caption, Oracle};
use lca_core::world::{self, ObjectId, Task};
use lca_core::ParseError;
use proptest::prelude::*;

use ObjectId::*;

const RB: Task = Task::PairStack { top: Red, bottom: Blue };

/// Answers `replies.len()` requests in order, then stops. Request bodies
/// are sent back through the channel.
fn mock_endpoint(replies: Vec<String>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/complete", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for reply in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            tx.send(String::from_utf8(body).unwrap()).unwrap();
            let payload = serde_json::json!({ "text": reply }).to_string();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                payload.len(),
                payload
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn endpoint(url: String) -> EndpointConfig {
    EndpointConfig {
        timeout: Duration::from_secs(5),
        ..EndpointConfig::new(url)
    }
}

#[test]
fn endpoint_reply_matches_rule_decomposition() {
    let reply = r#"Sure. ["The robot is grasping the red object", "The red object is on top of the blue object"]"#;
    let (url, requests) = mock_endpoint(vec![reply.to_string()]);
    let out = external_decompose(&endpoint(url), RB);
    assert_eq!(out.curriculum, decompose(RB));
    assert!(!out.fell_back);
    assert_eq!(out.attempts, 1);
    let body: serde_json::Value = serde_json::from_str(&requests.recv().unwrap()).unwrap();
    assert_eq!(body["prompt"], render_prompt(&PromptTemplate::default(), RB));
}

#[test]
fn malformed_replies_retry_then_fall_back() {
    let (url, requests) = mock_endpoint(vec!["no list here".into(), "[\"The robot dances\"]".into(), "[]".into()]);
    let out = external_decompose(&endpoint(url), RB);
    assert!(out.fell_back);
    assert_eq!(out.attempts, 3);
    assert_eq!(out.warnings.len(), 3);
    assert_eq!(out.curriculum, decompose(RB));
    assert_eq!(requests.iter().take(3).count(), 3);
}

#[test]
fn unreachable_endpoint_falls_back() {
    // Bind then drop to get a port nothing listens on.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = external_decompose(&endpoint(format!("http://127.0.0.1:{port}/")), Task::TripleStack);
    assert!(out.fell_back);
    assert_eq!(out.warnings.len(), 1);
    assert_eq!(out.curriculum, decompose(Task::TripleStack));
}

#[test]
fn task_grammar() {
    assert_eq!(parse_task("Stack the red object on top of the blue object").unwrap(), RB);
    assert_eq!(parse_task("  STACK ALL THREE OBJECTS ").unwrap(), Task::TripleStack);
    assert_eq!(parse_task("grasp the green object").unwrap(), Task::Grasp(Green));
    assert!(matches!(parse_task("Fold the laundry"), Err(ParseError::Task { .. })));
    assert!(parse_task("Stack the red object on top of the red object").is_err());
}

#[test]
fn completion_errors_name_the_fragment() {
    match parse_completion(r#"["The robot dances"]"#) {
        Err(ParseError::Caption(f)) => assert_eq!(f, "The robot dances"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_completion("[]"), Err(ParseError::EmptyCurriculum)));
    assert!(matches!(parse_completion("nothing"), Err(ParseError::NoList(_))));
}

#[test]
fn prompt_contains_examples_and_query_once() {
    let t = PromptTemplate::default();
    for task in Task::all() {
        let p = render_prompt(&t, task);
        assert_eq!(p, render_prompt(&t, task));
        assert_eq!(p.matches(&task.text()).count(), 1, "{task}");
        for (instruction, goals) in &t.examples {
            assert!(p.contains(instruction.as_str()));
            for g in goals {
                assert!(p.contains(g.as_str()));
            }
        }
    }
}

#[test]
fn final_caption_holds_exactly_when_the_task_is_solved() {
    // Along the expert's path from many layouts, the last caption and task
    // success agree at every state.
    for task in Task::all() {
        let last = decompose(task).last();
        for seed in 0..20 {
            let mut s = world::reset(seed);
            let plan = world::scripted_expert(task, &s).unwrap();
            for a in std::iter::once(None).chain(plan.into_iter().map(Some)) {
                if let Some(a) = a {
                    s = world::step(&s, a).unwrap();
                }
                // The triple's canonical last caption implies some tower of three.
                let holds = last.holds_in(&world::snapshot(&s));
                if task == Task::TripleStack {
                    assert!(!holds || world::task_success(&s, task));
                } else {
                    assert_eq!(holds, world::task_success(&s, task), "{task} seed {seed}");
                }
            }
            assert!(last.holds_in(&world::snapshot(&s)));
        }
    }
}

#[test]
fn expert_achieves_subgoals_in_order() {
    let oracle = Oracle::perfect();
    for task in Task::all() {
        let curriculum = decompose(task);
        for seed in 0..20 {
            let demo = record_demo(task, seed).unwrap();
            let hits = oracle.detect_achieved(demo.frames(), curriculum.captions());
            assert_eq!(hits.len(), curriculum.len(), "{task}");
            assert!(hits.windows(2).all(|w| w[0].timestep < w[1].timestep));
            let order: Vec<Caption> = hits.iter().map(|d| d.caption).collect();
            assert_eq!(order, curriculum.captions());
        }
    }
}

proptest! {
    #[test]
    fn list_text_round_trips(idx in prop::collection::vec(0usize..9, 1..8)) {
        let c = Curriculum::new(idx.into_iter().map(|i| Caption::from_index(i).unwrap()).collect()).unwrap();
        prop_assert_eq!(parse_completion(&c.to_list_text()).unwrap(), c.clone());
        prop_assert!(c.captions().windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn caption_parsing_ignores_case(i in 0usize..9, upper in any::<bool>()) {
        let c = Caption::from_index(i).unwrap();
        let text = if upper { c.text().to_uppercase() } else { c.text().to_lowercase() };
        prop_assert_eq!(Caption::parse(&text).unwrap(), c);
    }
}
