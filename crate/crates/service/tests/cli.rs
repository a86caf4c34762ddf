mod common;

use std::path::Path;
use std::process::Command;

use clap::Parser;
use repwatch::cli::{run, Cli, Cmd, EvalCmd};
use repwatch::config::ServiceConfig;
use repwatch_core::eval::read_report;
use repwatch_core::repdetect::{DnbModel, Mode};
use repwatch_core::session::{Envelope, EventMsg};
use repwatch_core::trace::save_trace;

fn cli(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("repwatch").chain(args.iter().copied())).unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn parses_subcommands() {
    let c = cli(&["--config", "a.toml", "serve", "--listen", "0.0.0.0:9001", "--mode", "ld"]);
    assert_eq!(c.config.as_deref(), Some(Path::new("a.toml")));
    let Cmd::Serve(s) = c.command else { panic!("serve") };
    assert_eq!(s.listen.unwrap().port(), 9001);
    assert_eq!(s.model.mode, Some(Mode::LD));

    let Cmd::Replay(r) = cli(&["replay", "--trace", "t.csv"]).command else { panic!("replay") };
    assert_eq!(r.speed, 1.0);
    assert!(r.listen.is_none() && !r.wait);

    let Cmd::Eval(EvalCmd::Sweep { thresholds, .. }) =
        cli(&["eval", "sweep", "--synthetic", "2", "--thresholds", "0.5,0.7", "--out", "o"]).command
    else {
        panic!("sweep")
    };
    assert_eq!(thresholds, [0.5, 0.7]);

    let Cmd::Synth(s) = cli(&["synth", "--out", "d", "--profiles", "flys,push_jerk", "--imu"]).command else {
        panic!("synth")
    };
    assert_eq!(s.profiles, ["flys", "push_jerk"]);
    assert_eq!((s.sessions, s.seed, s.imu, s.zero_noise), (20, 1, true, false));
}

#[test]
fn rejects_bad_arguments() {
    let bad: &[&[&str]] = &[
        &["serve", "--mode", "fast"],
        &["train", "--corpus", "c", "--synthetic", "3", "--out", "m"],
        &["replay"],
        &["eval", "run", "--out"],
        &["frobnicate"],
    ];
    for args in bad {
        assert!(
            Cli::try_parse_from(std::iter::once("repwatch").chain(args.iter().copied())).is_err(),
            "{args:?}"
        );
    }
}

#[test]
fn synth_train_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let model = dir.path().join("model.txt");
    let tables = dir.path().join("tables");
    run(cli(&["synth", "--out", arg(&corpus), "--sessions", "3", "--seed", "4", "--profiles", "bench_press,flys"]))
        .unwrap();
    let files = std::fs::read_dir(&corpus).unwrap().count();
    assert_eq!(files, 12, "six traces plus sidecars");

    run(cli(&["train", "--corpus", arg(&corpus), "--out", arg(&model)])).unwrap();
    let trained = DnbModel::load(&model).unwrap();
    assert!(trained.validate().is_ok());

    run(cli(&["eval", "run", "--corpus", arg(&corpus), "--model", arg(&model), "--out", arg(&tables)])).unwrap();
    let report = read_report(&tables).unwrap();
    assert_eq!(report.detection.len(), 3);
    assert!(report.detection.iter().all(|r| r.truth_reps > 0));

    run(cli(&[
        "eval", "sweep", "--corpus", arg(&corpus), "--model", arg(&model), "--thresholds", "0.6,0.9", "--out",
        arg(&tables),
    ]))
    .unwrap();
    assert_eq!(read_report(&tables).unwrap().sweep.len(), 2);

    let bad = run(cli(&["eval", "sweep", "--corpus", arg(&corpus), "--model", arg(&model), "--thresholds", "0.9,0.6", "--out", arg(&tables)]));
    assert!(bad.is_err());
}

#[test]
fn unknown_profile_and_empty_corpus_fail() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(cli(&["synth", "--out", arg(dir.path()), "--profiles", "curls"])).is_err());
    let model = dir.path().join("m.txt");
    assert!(run(cli(&["train", "--corpus", arg(dir.path()), "--out", arg(&model)])).is_err());
}

#[test]
fn replay_binary_prints_event_lines() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("session.csv");
    save_trace(&common::short_session(3, 1, 3), &trace).unwrap();
    let model = dir.path().join("model.txt");
    common::model().save(&model).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_repwatch"))
        .args(["replay", "--trace", arg(&trace), "--speed", "0", "--model", arg(&model)])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<Envelope> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| Envelope::parse(l).unwrap())
        .collect();
    assert!(matches!(lines[0].msg, EventMsg::OrientationUpdate { .. }));
    let Some(EventMsg::SessionSummary { reps, sets, .. }) = lines.last().map(|e| &e.msg) else {
        panic!("summary last")
    };
    assert_eq!((*reps, *sets), (3, 1));
    assert!(lines.windows(2).all(|w| w[1].seq == w[0].seq + 1));
}

#[test]
fn config_binary_prints_parseable_toml() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "[engine]\nrate_hz = 25.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_repwatch"))
        .args(["--config", arg(&path), "config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let c = ServiceConfig::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(c.engine.rate_hz, 25.0);
}
