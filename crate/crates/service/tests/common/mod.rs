#![allow(dead_code)]

use std::sync::OnceLock;

use repwatch_core::eval::synthetic_model;
use repwatch_core::pipeline::PipelineConfig;
use repwatch_core::repdetect::{DnbModel, Mode};
use repwatch_core::session::Session;
use repwatch_core::synth::{generate_session, ExerciseProfile, Range, SessionPlan};
use repwatch_core::trace::Trace;

pub fn model() -> &'static DnbModel {
    static MODEL: OnceLock<DnbModel> = OnceLock::new();
    MODEL.get_or_init(|| synthetic_model(10, 2, &PipelineConfig::default()).expect("training succeeds"))
}

pub fn session(id: &str) -> Session {
    Session::new(id, PipelineConfig::default(), model().clone(), Mode::HA, 50.0).expect("valid session")
}

/// Bench-press session with a fixed number of reps per set.
pub fn short_session(seed: u64, sets: usize, reps: usize) -> Trace {
    let mut plan = SessionPlan::new(ExerciseProfile::bench_press(), seed);
    plan.sets = sets;
    plan.reps_per_set = (reps, reps);
    plan.lead_in = Range::new(3.0, 3.0);
    plan.lead_out = Range::new(6.0, 6.0);
    plan.profile.rest = Range::new(15.0, 20.0);
    generate_session(&plan).expect("valid plan")
}
