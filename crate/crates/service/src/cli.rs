use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use tracing::info;

use repwatch_core::eval::{
    calibrate_dtw, delay_f1_sweep, export_report, feature_ablation, train_on_cache, windowing_model,
    CorpusCache, EvalReport, MatchPolicy, ALL,
};
use repwatch_core::repdetect::{DnbModel, Feature, Mode, RepTemplate, TrainConfig};
use repwatch_core::session::{run_replay, Session};
use repwatch_core::synth::{generate_corpus, generate_imu, ExerciseProfile, NoiseProfile};
use repwatch_core::trace::{load_trace, save_trace, Trace};

use crate::config::ServiceConfig;
use crate::engine::{spawn_live, spawn_replay, EngineInput};
use crate::hub::Hub;
use crate::server::{router, AppState};

#[derive(Debug, Parser)]
#[command(name = "repwatch", version, about = "Set segmentation and early rep detection for strength training")]
pub struct Cli {
    /// TOML config file; every setting has a default.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Write a seeded synthetic corpus with ground-truth sidecars.
    Synth(SynthArgs),
    /// Train a detection model on an annotated corpus.
    Train(TrainArgs),
    /// Batch evaluation.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Accept live samples over WebSocket and publish session events.
    Serve(ServeArgs),
    /// Replay a trace file, printing events or publishing them over WebSocket.
    Replay(ReplayArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Sessions per profile.
    #[arg(long, default_value_t = 20)]
    pub sessions: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated profile names; all shipped profiles by default.
    #[arg(long, value_delimiter = ',')]
    pub profiles: Vec<String>,
    /// Also write 6-axis IMU columns.
    #[arg(long)]
    pub imu: bool,
    /// Noise-free sessions.
    #[arg(long)]
    pub zero_noise: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Directory of trace files with `.truth.csv` sidecars.
    #[arg(long, conflicts_with = "synthetic")]
    pub corpus: Option<PathBuf>,
    /// Generate this many synthetic sessions per profile instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Seconds before the apex from which windows count as Event.
    #[arg(long, default_value_t = 0.0)]
    pub lead: f64,
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file; falls back to the config, then to synthetic training.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Detection, segmentation and LD/HA tables.
    Run {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Median delay and F1 across decision thresholds.
    Sweep {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision per feature subset.
    Ablate {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Training corpus directory; synthetic (seed + 1000) when absent.
        #[arg(long)]
        training: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        /// Subsets like `corr+rom`; every single feature plus all four by default.
        #[arg(long, value_delimiter = ',')]
        subsets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Acceptance rates of candidate DTW thresholds.
    CalibrateDtw {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_delimiter = ',')]
        candidates: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Multiple of real time; 0 runs as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Publish over WebSocket instead of printing to stdout.
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    /// With --listen, hold the replay until a client connects.
    #[arg(long)]
    pub wait: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    match cli.command {
        Cmd::Synth(a) => synth(&a),
        Cmd::Train(a) => train(&config, &a),
        Cmd::Eval(e) => eval(&config, e),
        Cmd::Serve(a) => serve(config, a),
        Cmd::Replay(a) => replay(config, a),
        Cmd::Config => {
            print!("{}", config.to_toml());
            Ok(())
        }
    }
}

fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let profiles = if a.profiles.is_empty() {
        ExerciseProfile::all()
    } else {
        a.profiles
            .iter()
            .map(|n| ExerciseProfile::by_name(n).with_context(|| format!("unknown profile {n:?}")))
            .collect::<anyhow::Result<_>>()?
    };
    let noise = if a.zero_noise { NoiseProfile::zero() } else { NoiseProfile::default() };
    let corpus = generate_corpus(&profiles, a.sessions, a.seed, noise)?;
    std::fs::create_dir_all(&a.out)?;
    for (i, trace) in corpus.iter().enumerate() {
        let trace = if a.imu {
            generate_imu(trace, &noise, &Default::default(), a.seed.wrapping_add(i as u64))?
        } else {
            trace.clone()
        };
        let path = a.out.join(format!("{}_{:03}.csv", trace.meta.exercise, i));
        save_trace(&trace, &path)?;
    }
    println!("wrote {} sessions to {}", corpus.len(), a.out.display());
    Ok(())
}

/// Trace files in a directory, sorted by name, sidecars excluded.
pub fn load_corpus(dir: &Path) -> anyhow::Result<Vec<Trace>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.ends_with(".csv") && !name.ends_with(".truth.csv")
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no trace files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| load_trace(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn corpus_of(a: &CorpusArgs) -> anyhow::Result<Vec<Trace>> {
    match (&a.corpus, a.synthetic) {
        (Some(dir), _) => load_corpus(dir),
        (None, Some(n)) => Ok(generate_corpus(&ExerciseProfile::all(), n, a.seed, NoiseProfile::default())?),
        (None, None) => bail!("give --corpus DIR or --synthetic N"),
    }
}

fn train_config(features: &[String]) -> anyhow::Result<TrainConfig> {
    let mut config = TrainConfig::default();
    if !features.is_empty() {
        let mut fs: Vec<Feature> = features
            .iter()
            .map(|n| Feature::parse(n).with_context(|| format!("unknown feature {n:?}")))
            .collect::<anyhow::Result<_>>()?;
        fs.sort();
        config.features = fs;
    }
    Ok(config)
}

fn train(config: &ServiceConfig, a: &TrainArgs) -> anyhow::Result<()> {
    let corpus = corpus_of(&a.corpus)?;
    let tc = train_config(&a.features)?;
    let cache = CorpusCache::build(&corpus, &windowing_model(&tc), &config.pipeline())?;
    let report = train_on_cache(&cache, a.lead, &tc)?;
    report.model.save(&a.out)?;
    println!(
        "trained on {} sessions in {} EM iterations (converged: {}); wrote {}",
        corpus.len(),
        report.log_likelihood.len(),
        report.converged,
        a.out.display()
    );
    Ok(())
}

fn model_of(config: &ServiceConfig, a: &ModelArgs) -> anyhow::Result<(DnbModel, Mode)> {
    let mut config = config.clone();
    if let Some(p) = &a.model {
        config.model.path = Some(p.clone());
    }
    Ok((config.resolve_model()?, a.mode.unwrap_or(config.engine.mode)))
}

fn print_detection(report: &EvalReport) {
    for r in report.detection.iter().chain(&report.comparison) {
        println!(
            "{:>18}  P {:.3}  R {:.3}  F1 {:.3}  median delay {:+.3} s",
            r.exercise, r.precision, r.recall, r.f1, r.delay_median
        );
    }
}

fn eval(config: &ServiceConfig, cmd: EvalCmd) -> anyhow::Result<()> {
    let policy = MatchPolicy::default();
    match cmd {
        EvalCmd::Run { corpus, model, out } => {
            let traces = corpus_of(&corpus)?;
            let (model, mode) = model_of(config, &model)?;
            let cache = CorpusCache::build(&traces, &model, &config.pipeline())?;
            let report = repwatch_core::eval::evaluate_cached(&cache, &model, model.threshold(mode), &policy)?;
            export_report(&report, &out)?;
            print_detection(&report);
            for s in &report.segmentation {
                println!(
                    "{:>18}  set hits {:.3}  noise excluded {:.3}",
                    s.exercise, s.hit_rate, s.noise_excluded_fraction
                );
            }
            println!("tables written to {}", out.display());
        }
        EvalCmd::Sweep {
            corpus,
            model,
            thresholds,
            out,
        } => {
            let traces = corpus_of(&corpus)?;
            let (model, _) = model_of(config, &model)?;
            let thresholds = if thresholds.is_empty() { default_sweep() } else { thresholds };
            let cache = CorpusCache::build(&traces, &model, &config.pipeline())?;
            let report = EvalReport {
                sweep: delay_f1_sweep(&cache, &model, &thresholds)?,
                ..Default::default()
            };
            export_report(&report, &out)?;
            for p in &report.sweep {
                println!("threshold {:.3}  median delay {:+.3} s  F1 {:.3}", p.threshold, p.median_delay, p.f1);
            }
        }
        EvalCmd::Ablate {
            corpus,
            training,
            mode,
            subsets,
            out,
        } => {
            let test = corpus_of(&corpus)?;
            let train_traces = match &training {
                Some(dir) => load_corpus(dir)?,
                None => generate_corpus(
                    &ExerciseProfile::all(),
                    10,
                    corpus.seed.wrapping_add(1000),
                    NoiseProfile::default(),
                )?,
            };
            let subsets = parse_subsets(&subsets)?;
            let tc = TrainConfig::default();
            let base = windowing_model(&tc);
            let test_cache = CorpusCache::build(&test, &base, &config.pipeline())?;
            let train_cache = CorpusCache::build(&train_traces, &base, &config.pipeline())?;
            let threshold = match mode.unwrap_or(config.engine.mode) {
                Mode::LD => tc.ld_threshold,
                Mode::HA => tc.ha_threshold,
            };
            let report = EvalReport {
                ablation: feature_ablation(&test_cache, &train_cache, &subsets, 0.0, &tc, threshold)?,
                ..Default::default()
            };
            export_report(&report, &out)?;
            for r in report.ablation.iter().filter(|r| r.exercise == ALL) {
                println!("{:>24}  precision {:.3}  recall {:.3}", r.features, r.precision, r.recall);
            }
        }
        EvalCmd::CalibrateDtw {
            corpus,
            candidates,
            out,
        } => {
            let traces = corpus_of(&corpus)?;
            let candidates = if candidates.is_empty() {
                vec![0.1, 0.2, 0.3, 0.35, 0.4, 0.5, 0.75, 1.0]
            } else {
                candidates
            };
            let tc = TrainConfig::default();
            let points = calibrate_dtw(&traces, tc.w0, &RepTemplate::v_shape(tc.template_len), &candidates)?;
            let mut csv = String::from("dtw_accept,rep_accept_rate,noise_reject_rate\n");
            for p in &points {
                let _ = writeln!(csv, "{},{},{}", p.dtw_accept, p.rep_accept_rate, p.noise_reject_rate);
                println!(
                    "dtw_accept {:.3}  reps aggregated {:.3}  noise rejected {:.3}",
                    p.dtw_accept, p.rep_accept_rate, p.noise_reject_rate
                );
            }
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("calibration.csv"), csv)?;
        }
    }
    Ok(())
}

pub fn default_sweep() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

fn parse_subsets(specs: &[String]) -> anyhow::Result<Vec<Vec<Feature>>> {
    if specs.is_empty() {
        let mut all: Vec<Vec<Feature>> = Feature::ALL.iter().map(|f| vec![*f]).collect();
        all.push(Feature::ALL.to_vec());
        return Ok(all);
    }
    specs
        .iter()
        .map(|s| {
            let mut fs: Vec<Feature> = s
                .split('+')
                .map(|n| Feature::parse(n.trim()).with_context(|| format!("unknown feature {n:?}")))
                .collect::<anyhow::Result<_>>()?;
            fs.sort();
            Ok(fs)
        })
        .collect()
}

fn session_for(config: &ServiceConfig, model: DnbModel, mode: Mode, rate_hz: f64) -> anyhow::Result<Session> {
    Ok(Session::new(
        config.engine.session_id.clone(),
        config.pipeline(),
        model,
        mode,
        rate_hz,
    )?)
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn serve(config: ServiceConfig, a: ServeArgs) -> anyhow::Result<()> {
    let (model, mode) = model_of(&config, &a.model)?;
    let listen = a.listen.unwrap_or(config.engine.listen);
    let hub = Arc::new(Hub::new(config.engine.queue_capacity));
    let session = session_for(&config, model, mode, config.engine.rate_hz)?;
    let (input, engine) = spawn_live(session, hub.clone());
    let state = AppState {
        hub: hub.clone(),
        input: Some(input.clone()),
    };
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        info!("serving {mode:?} session on ws://{}/ws", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    let _ = input.send(EngineInput::Shutdown);
    let _ = engine.join();
    hub.close_all();
    Ok(())
}

fn replay(config: ServiceConfig, a: ReplayArgs) -> anyhow::Result<()> {
    let trace = load_trace(&a.trace).with_context(|| format!("loading {}", a.trace.display()))?;
    let (model, mode) = model_of(&config, &a.model)?;
    let session = session_for(&config, model, mode, trace.meta.rate_hz)?;
    let Some(listen) = a.listen else {
        use std::io::Write;
        let stdout = std::io::stdout();
        let mut out = std::io::BufWriter::new(stdout.lock());
        let mut failed = None;
        run_replay(
            &trace,
            a.speed,
            session,
            |e| {
                if failed.is_none() {
                    if let Err(err) = writeln!(out, "{}", e.to_line()).and_then(|_| out.flush()) {
                        failed = Some(err);
                    }
                }
            },
            || 0,
        )?;
        return match failed {
            Some(e) => Err(e.into()),
            None => Ok(()),
        };
    };
    let hub = Arc::new(Hub::new(config.engine.queue_capacity));
    let state = AppState {
        hub: hub.clone(),
        input: None,
    };
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        info!("replaying {} on ws://{}/ws", a.trace.display(), listener.local_addr()?);
        let server = tokio::spawn(async move { axum::serve(listener, router(state)).await });
        if a.wait {
            while hub.client_count() == 0 {
                tokio::time::sleep(std::time::Duration::from_millis(50)).await;
            }
        }
        let job = spawn_replay(trace, a.speed, session, hub.clone());
        let stats = tokio::task::spawn_blocking(move || job.join())
            .await?
            .map_err(|_| anyhow::anyhow!("replay thread panicked"))??;
        info!("replayed {} samples, {} messages", stats.samples, stats.messages);
        // let clients drain before closing
        tokio::time::sleep(std::time::Duration::from_millis(500)).await;
        hub.close_all();
        server.abort();
        anyhow::Ok(())
    })
}
