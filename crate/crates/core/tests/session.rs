mod common;

use repwatch_core::pipeline::PipelineConfig;
use repwatch_core::repdetect::Mode;
use repwatch_core::session::{
    run_replay, trace_samples, Command, Envelope, EventMsg, Metric, Sample, Session, SessionError,
};
use repwatch_core::trace::{OrientationSample, Trace, TraceMeta};

fn session() -> Session {
    Session::new("test", PipelineConfig::default(), common::model().clone(), Mode::HA, 50.0).unwrap()
}

fn replay(trace: &Trace, speed: f64) -> Vec<Envelope> {
    let mut out = Vec::new();
    run_replay(trace, speed, session(), |e| out.push(e), || 0).unwrap();
    out
}

fn kinds(msgs: &[Envelope]) -> Vec<&'static str> {
    msgs.iter()
        .map(|e| e.msg.kind())
        .filter(|k| *k != "OrientationUpdate")
        .collect()
}

fn is_subsequence(needle: &[&str], hay: &[&str]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

fn net_reps(msgs: &[EventMsg]) -> usize {
    let finals = msgs.iter().filter(|m| matches!(m, EventMsg::RepFinalized { .. })).count();
    let retracted = msgs.iter().filter(|m| matches!(m, EventMsg::RepRetracted { .. })).count();
    finals - retracted
}

#[test]
fn three_rep_replay_orders_events() {
    let trace = common::short_session(5, 1, 3);
    let msgs = replay(&trace, 0.0);
    let k = kinds(&msgs);
    assert!(is_subsequence(
        &[
            "SetStarted",
            "RepDetected",
            "RepFinalized",
            "BaselineSet",
            "RepDetected",
            "RepFinalized",
            "RepDetected",
            "RepFinalized",
            "SetEnded",
            "SessionSummary"
        ],
        &k
    ), "{k:?}");
    let plain: Vec<EventMsg> = msgs.iter().map(|e| e.msg.clone()).collect();
    assert_eq!(net_reps(&plain), 3);
    assert_eq!(k.iter().filter(|x| **x == "SetEnded").count(), 1);
    for (i, e) in msgs.iter().enumerate() {
        assert_eq!(e.seq, i as u64 + 1);
        assert_eq!(e.v, 1);
    }
}

#[test]
fn empty_trace_gives_summary_only() {
    let trace = Trace::from_orientation(Vec::new(), TraceMeta::default());
    let msgs = replay(&trace, 0.0);
    assert_eq!(kinds(&msgs), ["SessionSummary"]);
}

#[test]
fn paced_replay_matches_fast_replay() {
    let mut trace = common::short_session(6, 1, 2);
    // keep the paced run short: first 8 s at 4x
    let o = trace.orientation.take().unwrap();
    trace.orientation = Some(o.into_iter().filter(|s| s.t < 8.0).collect());
    trace.samples = None;
    let fast = replay(&trace, 0.0);
    let paced = replay(&trace, 4.0);
    assert_eq!(fast, paced);
}

#[test]
fn live_ingest_acks_and_rejects_regressions() {
    let mut s = session();
    assert!(matches!(
        s.ingest(Sample::Orientation(OrientationSample::new(0.0, 1.0))),
        Err(SessionError::NotOpen)
    ));
    s.start().unwrap();
    let out = s.ingest(Sample::Orientation(OrientationSample::new(1.0, 10.0))).unwrap();
    assert_eq!(out[0], EventMsg::SampleAck { t: 1.0 });
    let before = s.status();
    for t in [0.5, 1.0] {
        assert!(matches!(
            s.ingest(Sample::Orientation(OrientationSample::new(t, 10.0))),
            Err(SessionError::TimestampRegression { .. })
        ));
    }
    assert!(matches!(
        s.ingest(Sample::Orientation(OrientationSample::new(2.0, f64::NAN))),
        Err(SessionError::NonFinite(_))
    ));
    assert_eq!(s.status(), before);
    assert!(s.ingest(Sample::Orientation(OrientationSample::new(1.02, 10.0))).is_ok());
}

#[test]
fn stop_requires_open_session() {
    let mut s = session();
    assert!(matches!(s.control(Command::Stop), Err(SessionError::NotOpen)));
    s.control(Command::Start).unwrap();
    assert!(matches!(s.control(Command::Start), Err(SessionError::AlreadyOpen)));
    let out = s.control(Command::Stop).unwrap();
    assert!(matches!(out[0], EventMsg::ControlAck { .. }));
    assert!(matches!(out.last(), Some(EventMsg::SessionSummary { .. })));
}

fn drive(s: &mut Session, samples: &[Sample], at: usize, cmd: Command) -> Vec<EventMsg> {
    let mut out = Vec::new();
    for (i, x) in samples.iter().enumerate() {
        if i == at {
            out.extend(s.control(cmd).unwrap());
        }
        out.extend(s.ingest(*x).unwrap());
    }
    out.extend(s.control(Command::Stop).unwrap());
    out
}

#[test]
fn duration_metric_rides_on_finalized_reps() {
    let samples = trace_samples(&common::short_session(7, 1, 4));
    let mut s = session();
    s.control(Command::Start).unwrap();
    let out = drive(&mut s, &samples, 0, Command::SelectMetric { metric: Metric::Duration });
    for m in &out {
        if let EventMsg::RepFinalized { rep, metric, value } = m {
            assert_eq!(*metric, Metric::Duration);
            assert_eq!(*value, rep.metrics.duration);
        }
    }
    assert_eq!(net_reps(&out), 4);
}

#[test]
fn baseline_set_once_then_again_after_reset() {
    let samples = trace_samples(&common::short_session(8, 1, 5));
    let mut s = session();
    s.control(Command::Start).unwrap();
    let plain = drive(&mut s, &samples, usize::MAX, Command::ResetBaseline);
    let count = |v: &[EventMsg]| v.iter().filter(|m| matches!(m, EventMsg::BaselineSet { .. })).count();
    assert_eq!(count(&plain), 1);

    // reset after the second finalized rep
    let finals: Vec<f64> = plain
        .iter()
        .filter_map(|m| match m {
            EventMsg::RepFinalized { rep, .. } => Some(rep.end_t),
            _ => None,
        })
        .collect();
    let at = samples.iter().position(|x| x.t() > finals[1] + 0.5).unwrap();
    s.control(Command::Start).unwrap();
    let reset = drive(&mut s, &samples, at, Command::ResetBaseline);
    assert_eq!(count(&reset), 2);
    assert!(reset.iter().any(|m| matches!(m, EventMsg::BaselineCleared)));
}

#[test]
fn metric_switch_reissues_baseline() {
    let samples = trace_samples(&common::short_session(9, 1, 3));
    let mut s = session();
    s.control(Command::Start).unwrap();
    for x in &samples {
        s.ingest(*x).unwrap();
    }
    let out = s.control(Command::SelectMetric { metric: Metric::Velocity }).unwrap();
    assert!(matches!(out[1], EventMsg::BaselineSet { metric: Metric::Velocity, .. }));
}

#[test]
fn batch_size_does_not_change_events() {
    let samples = trace_samples(&common::short_session(10, 2, 3));
    let run = |chunk: usize| {
        let mut s = session();
        s.start().unwrap();
        let mut out = Vec::new();
        for batch in samples.chunks(chunk) {
            let mut msgs = Vec::new();
            for x in batch {
                msgs.extend(s.feed(*x).unwrap());
            }
            out.extend(s.seal(msgs));
        }
        let tail = s.stop().unwrap();
        out.extend(s.seal(tail));
        out
    };
    assert_eq!(run(1), run(5));
}

#[test]
fn envelopes_round_trip_through_json() {
    let trace = common::short_session(11, 1, 2);
    for e in replay(&trace, 0.0) {
        let line = e.to_line();
        assert!(!line.contains('\n'));
        assert_eq!(Envelope::parse(&line).unwrap(), e);
    }
}

