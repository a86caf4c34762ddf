//! Runs the browser view-state tests under node against an event log
//! produced by the live engine. Skipped when node is not installed.
//! `REPWATCH_WRITE_FIXTURE=1` refreshes the checked-in fixture.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::sync::Arc;

use repwatch::engine::Engine;
use repwatch::hub::Hub;
use repwatch_core::session::{trace_samples, ClientMsg, Command, Envelope, EventMsg, Incoming, Metric};

fn control(c: Command) -> String {
    Incoming::new(ClientMsg::Control(c)).to_line()
}

/// Three sets, a baseline reset after the first, a metric switch in the
/// last, as seen by the controlling client.
fn three_set_log() -> Vec<String> {
    let hub = Arc::new(Hub::new(1_000_000));
    let me = hub.subscribe();
    let mut engine = Engine::new(common::session("fixture"), hub.clone());
    engine.handle_line(me.id, &control(Command::Start));
    let samples = trace_samples(&common::short_session(21, 3, 4));
    let mut sets_ended = 0;
    let mut lines = Vec::new();
    let mut updates = 0;
    for chunk in samples.chunks(10) {
        engine.handle_line(me.id, &Incoming::new(ClientMsg::Batch { samples: chunk.to_vec() }).to_line());
        while let Some(line) = me.queue.try_recv() {
            let e = Envelope::parse(&line).unwrap();
            match e.msg {
                EventMsg::SampleAck { .. } => continue,
                EventMsg::OrientationUpdate { .. } => {
                    updates += 1;
                    if updates % 10 != 0 {
                        continue;
                    }
                }
                EventMsg::SetEnded { .. } => {
                    sets_ended += 1;
                    lines.push(line.to_string());
                    match sets_ended {
                        1 => engine.handle_line(me.id, &control(Command::ResetBaseline)),
                        2 => engine.handle_line(me.id, &control(Command::SelectMetric { metric: Metric::Velocity })),
                        _ => {}
                    }
                    continue;
                }
                _ => {}
            }
            lines.push(line.to_string());
        }
    }
    engine.handle_line(me.id, &control(Command::Stop));
    lines.extend(std::iter::from_fn(|| me.queue.try_recv()).map(|l| l.to_string()));
    lines
}

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/three_sets.jsonl")
}

fn node_available() -> bool {
    Process::new("node").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn fixture_log_is_valid_protocol() {
    let text = std::fs::read_to_string(fixture_path()).unwrap();
    let msgs: Vec<Envelope> = text.lines().map(|l| Envelope::parse(l).unwrap()).collect();
    let ended = msgs.iter().filter(|e| matches!(e.msg, EventMsg::SetEnded { .. })).count();
    assert_eq!(ended, 3);
    assert!(msgs.iter().any(|e| matches!(e.msg, EventMsg::BaselineCleared)));
}

#[test]
fn view_state_follows_event_log() {
    let log = three_set_log();
    let body = log.join("\n") + "\n";
    if std::env::var_os("REPWATCH_WRITE_FIXTURE").is_some() {
        std::fs::create_dir_all(fixture_path().parent().unwrap()).unwrap();
        std::fs::write(fixture_path(), &body).unwrap();
    }
    if !node_available() {
        eprintln!("node not found; skipping view-state tests");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let fresh = dir.path().join("log.jsonl");
    std::fs::write(&fresh, &body).unwrap();
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("static/view.test.mjs");
    for fixture in [fresh, fixture_path()] {
        let out = Process::new("node")
            .arg("--test")
            .arg(&script)
            .env("REPWATCH_FIXTURE", &fixture)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
