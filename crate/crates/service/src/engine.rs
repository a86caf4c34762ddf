//! The single lane that owns a session: client lines come in over a
//! channel, sealed messages go out through the hub.

use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use repwatch_core::session::{
    run_replay, ClientMsg, Command, Envelope, EventMsg, Incoming, ReplayStats, Sample, Session, SessionError,
    SCHEMA_VERSION,
};
use repwatch_core::trace::Trace;

use crate::hub::{ClientId, Hub};

#[derive(Debug)]
pub enum EngineInput {
    Line { client: ClientId, text: String },
    Shutdown,
}

/// Messages meant only for the client that caused them.
fn is_private(msg: &EventMsg) -> bool {
    matches!(
        msg,
        EventMsg::SampleAck { .. } | EventMsg::Rejected { .. } | EventMsg::Error { .. } | EventMsg::ControlAck { .. }
    )
}

/// Messages worth replaying to clients that connect later.
fn is_recorded(msg: &EventMsg) -> bool {
    !is_private(msg) && !matches!(msg, EventMsg::OrientationUpdate { .. })
}

/// Sends sealed messages to the hub, privately or to everyone.
pub fn publish(hub: &Hub, client: Option<ClientId>, envelopes: Vec<Envelope>) {
    for e in envelopes {
        let line = e.to_line();
        match client {
            Some(id) if is_private(&e.msg) => hub.send_to(id, line),
            _ => hub.publish(line, is_recorded(&e.msg)),
        }
    }
}

/// A message outside any session sequence.
pub fn unsequenced(msg: EventMsg) -> String {
    Envelope {
        v: SCHEMA_VERSION,
        seq: 0,
        msg,
    }
    .to_line()
}

fn rejected(err: &SessionError, t: Option<f64>) -> EventMsg {
    match err {
        SessionError::Schema(m) => EventMsg::Error { message: m.clone() },
        e => EventMsg::Rejected {
            reason: e.to_string(),
            t,
        },
    }
}

pub struct Engine {
    session: Session,
    hub: Arc<Hub>,
}

impl Engine {
    pub fn new(session: Session, hub: Arc<Hub>) -> Self {
        Self { session, hub }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn handle_line(&mut self, client: ClientId, text: &str) {
        let msgs = match Incoming::parse(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![rejected(&e, None)],
        };
        let sealed = self.session.seal(msgs);
        publish(&self.hub, Some(client), sealed);
    }

    fn handle(&mut self, msg: ClientMsg) -> Vec<EventMsg> {
        let ingest = |session: &mut Session, s: Sample, out: &mut Vec<EventMsg>| match session.ingest(s) {
            Ok(m) => out.extend(m),
            Err(e) => out.push(rejected(&e, Some(s.t()))),
        };
        let mut out = Vec::new();
        match msg {
            ClientMsg::Imu(s) => ingest(&mut self.session, Sample::Imu(s), &mut out),
            ClientMsg::Orientation(s) => ingest(&mut self.session, Sample::Orientation(s), &mut out),
            ClientMsg::Batch { samples } => {
                for s in samples {
                    ingest(&mut self.session, s, &mut out);
                }
            }
            ClientMsg::Control(cmd) => {
                self.session.note_dropped(self.hub.dropped());
                let starting = cmd == Command::Start;
                match self.session.control(cmd) {
                    Ok(m) => {
                        if starting {
                            // late joiners should only see the new session
                            self.hub.clear_history();
                        }
                        out.extend(m)
                    }
                    Err(e) => out.push(rejected(&e, None)),
                }
            }
        }
        out
    }

    pub fn run(mut self, input: Receiver<EngineInput>) -> Session {
        while let Ok(msg) = input.recv() {
            match msg {
                EngineInput::Line { client, text } => self.handle_line(client, &text),
                EngineInput::Shutdown => break,
            }
        }
        self.session
    }
}

/// Starts the live engine on its own thread.
pub fn spawn_live(session: Session, hub: Arc<Hub>) -> (Sender<EngineInput>, JoinHandle<Session>) {
    let (tx, rx) = mpsc::channel();
    let engine = Engine::new(session, hub);
    let handle = std::thread::Builder::new()
        .name("engine".into())
        .spawn(move || engine.run(rx))
        .expect("spawn engine thread");
    (tx, handle)
}

/// Replays a trace into the hub on its own thread.
pub fn spawn_replay(
    trace: Trace,
    speed: f64,
    session: Session,
    hub: Arc<Hub>,
) -> JoinHandle<Result<ReplayStats, SessionError>> {
    std::thread::Builder::new()
        .name("replay".into())
        .spawn(move || {
            let counter = hub.clone();
            run_replay(&trace, speed, session, |e| publish(&hub, None, vec![e]), move || counter.dropped())
        })
        .expect("spawn replay thread")
}
