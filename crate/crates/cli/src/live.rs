use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use nocisense::evaluation::{StateSchedule, SynthStream};
use nocisense::ingest::load_recording;
use nocisense::models::load_model;
use nocisense::realtime::wire::{write_frame, Frame};
use nocisense::realtime::{
    run_loop, stream_feature_matrix, ClockMode, EventSink, FileReplaySource, FrontEnd, FrontEndConfig, JsonLinesSink, LoopConfig,
    Publisher, SocketSource, StreamSource, StreamTrainingConfig, SyntheticSource, TickPipeline,
};

use crate::common::{create, header, open, usage, write_features, Ctx};
use crate::offline::{synth_config, FeatureArgs, ProfileArg};

#[derive(Debug, Args)]
pub struct LoopArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
    /// Seconds above threshold before an alert is raised.
    #[arg(long, default_value_t = 10.0)]
    pub sustain: f64,
    #[arg(long, default_value_t = 125.0)]
    pub tick_ms: f64,
    /// Publish events to subscribers on this address (JSON lines or WebSocket).
    #[arg(long)]
    pub publish: Option<String>,
    /// Event log as JSON lines; `-` for standard output.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Stop after this many seconds of stream time.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Simulated clock: tick as fast as the data allows.
    #[arg(long)]
    pub simulate: bool,
    /// Wait for this many subscribers before starting.
    #[arg(long, default_value_t = 0)]
    pub wait_subscribers: usize,
    #[arg(long, default_value_t = nocisense::realtime::DEFAULT_QUEUE_CAPACITY)]
    pub queue: usize,
    /// Feature config file (TOML, `version = 1`).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn run(ctx: &Ctx, command: &str, source: Box<dyn StreamSource>, a: &LoopArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(usage("--threshold must lie in [0, 1]"));
    }
    let fa = FeatureArgs { config: a.config.clone(), profile: ProfileArg::Realtime };
    let fcfg = fa.load(ctx)?;
    let model = Arc::new(load_model(&ctx.path(&a.model)).with_context(|| format!("loading {}", a.model.display()))?);
    let front = FrontEnd::new(FrontEndConfig::default(), fcfg, source.channel_names().to_vec(), source.rate_hz())?;
    header(command, front.extractor().manifest_hash(), model.meta.seed);
    let pipeline = TickPipeline::new(front, Some(model), a.threshold)?;
    let cfg = LoopConfig {
        tick_ms: a.tick_ms,
        clock: if a.simulate { ClockMode::Virtual } else { ClockMode::Real },
        max_ticks: None,
        duration_seconds: a.duration,
        sustain_seconds: a.sustain,
    };
    let mut sinks: Vec<Box<dyn EventSink>> = Vec::new();
    let mut control = None;
    if let Some(addr) = &a.publish {
        let (publisher, rx) = Publisher::bind(addr.as_str(), a.queue).with_context(|| format!("binding {addr}"))?;
        eprintln!("publishing on {}", publisher.local_addr());
        if a.wait_subscribers > 0 {
            while !publisher.wait_for_subscribers(a.wait_subscribers, Duration::from_secs(1)) {}
        }
        sinks.push(Box::new(publisher));
        control = Some(rx);
    }
    match a.events.as_deref() {
        Some(p) if p == Path::new("-") => sinks.push(Box::new(JsonLinesSink(std::io::stdout()))),
        Some(p) => sinks.push(Box::new(JsonLinesSink(create(&ctx.path(p))?))),
        None if a.publish.is_none() => sinks.push(Box::new(JsonLinesSink(std::io::stdout()))),
        None => {}
    }
    let stats = run_loop(source, pipeline, &cfg, &mut sinks, control.as_ref())?;
    eprintln!("summary: {}", serde_json::to_string(&stats)?);
    if let Some(e) = stats.source_error {
        anyhow::bail!("source failed: {e}");
    }
    Ok(())
}

fn header_path(prefix: &Path) -> PathBuf {
    if prefix.extension().is_some_and(|e| e.eq_ignore_ascii_case("vhdr")) {
        prefix.to_path_buf()
    } else {
        let mut p = prefix.as_os_str().to_owned();
        p.push(".vhdr");
        PathBuf::from(p)
    }
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Recording path without extension (or the .vhdr file).
    #[arg(long)]
    pub bundle: PathBuf,
    /// 1.0 keeps the recorded timing; 0 runs as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Samples per chunk.
    #[arg(long, default_value_t = 16)]
    pub chunk: usize,
    #[command(flatten)]
    pub run: LoopArgs,
}

pub fn replay(ctx: &Ctx, a: &ReplayArgs) -> Result<()> {
    let path = header_path(&ctx.path(&a.bundle));
    let rec = load_recording(&path).with_context(|| format!("loading {}", path.display()))?;
    if a.speed == 0.0 && !a.run.simulate {
        log::warn!("--speed 0 with the real clock keeps only the latest window; add --simulate to tick every window");
    }
    run(ctx, "replay", Box::new(FileReplaySource::new(&rec, a.chunk, a.speed)), &a.run)
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "input")]
pub struct StreamInput {
    /// Wait for one producer on this address.
    #[arg(long)]
    pub listen: Option<String>,
    /// Connect to a producer.
    #[arg(long)]
    pub connect: Option<String>,
    /// Read a recorded frame file.
    #[arg(long)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[command(flatten)]
    pub input: StreamInput,
    #[command(flatten)]
    pub run: LoopArgs,
}

fn socket_source(ctx: &Ctx, input: &StreamInput) -> Result<Box<dyn StreamSource>> {
    Ok(Box::new(if let Some(addr) = &input.listen {
        eprintln!("waiting for a producer on {addr}");
        SocketSource::listen(addr.as_str())?
    } else if let Some(addr) = &input.connect {
        SocketSource::connect(addr.as_str())?
    } else if let Some(p) = &input.file {
        SocketSource::from_reader(Box::new(open(&ctx.path(p))?))?
    } else {
        return Err(usage("give --listen, --connect or --file"));
    }))
}

pub fn stream(ctx: &Ctx, a: &StreamArgs) -> Result<()> {
    let source = socket_source(ctx, &a.input)?;
    run(ctx, "stream", source, &a.run)
}

/// `low`, `high`, `onset:<s>` or `alternating:<low_s>,<high_s>`.
pub fn parse_schedule(s: &str) -> Result<StateSchedule> {
    let bad = || usage(format!("bad schedule '{s}': use low, high, onset:<s> or alternating:<low_s>,<high_s>"));
    let num = |x: &str| x.trim().parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0).ok_or_else(bad);
    match s.split_once(':') {
        None if s == "low" => Ok(StateSchedule::Constant { high: false }),
        None if s == "high" => Ok(StateSchedule::Constant { high: true }),
        Some(("onset", t)) => Ok(StateSchedule::Onset { at_s: num(t)? }),
        Some(("alternating", rest)) => {
            let (lo, hi) = rest.split_once(',').ok_or_else(bad)?;
            let (low_s, high_s) = (num(lo)?, num(hi)?);
            if low_s + high_s <= 0.0 {
                return Err(bad());
            }
            Ok(StateSchedule::Alternating { low_s, high_s })
        }
        _ => Err(bad()),
    }
}

#[derive(Debug, Args)]
pub struct SynthSourceArgs {
    /// Synthetic subject index.
    #[arg(long, default_value_t = 0)]
    pub subject: usize,
    #[arg(long, default_value_t = 128.0)]
    pub rate_hz: f64,
    /// low | high | onset:<s> | alternating:<low_s>,<high_s>
    #[arg(long, default_value = "alternating:30,30")]
    pub schedule: String,
    #[arg(long, default_value_t = 16)]
    pub chunk: usize,
    /// Generator settings as TOML.
    #[arg(long)]
    pub synth_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// `synth`, `bundle:<prefix>`, `listen:<addr>` or `file:<path>`.
    #[arg(long, default_value = "synth")]
    pub source: String,
    #[command(flatten)]
    pub synth: SynthSourceArgs,
    /// Replay speed for synth and bundle sources.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    #[command(flatten)]
    pub run: LoopArgs,
}

fn synth_stream(ctx: &Ctx, s: &SynthSourceArgs) -> Result<SynthStream> {
    let cfg = synth_config(ctx, s.synth_config.as_deref())?;
    Ok(SynthStream::new(&cfg, s.subject, s.rate_hz, parse_schedule(&s.schedule)?).map_err(|e| usage(e.to_string()))?)
}

pub fn serve(ctx: &Ctx, a: &ServeArgs) -> Result<()> {
    if a.run.publish.is_none() {
        return Err(usage("serve needs --publish <addr>"));
    }
    let source: Box<dyn StreamSource> = match a.source.split_once(':') {
        None if a.source == "synth" => {
            let limit = a.run.duration.map(|d| (d * a.synth.rate_hz).round() as u64);
            Box::new(SyntheticSource::new(synth_stream(ctx, &a.synth)?, a.synth.chunk, limit, a.speed))
        }
        Some(("bundle", p)) => {
            let path = header_path(&ctx.path(Path::new(p)));
            Box::new(FileReplaySource::new(&load_recording(&path)?, a.synth.chunk, a.speed))
        }
        Some(("listen", addr)) => socket_source(ctx, &StreamInput { listen: Some(addr.into()), connect: None, file: None })?,
        Some(("file", p)) => socket_source(ctx, &StreamInput { listen: None, connect: None, file: Some(p.into()) })?,
        _ => return Err(usage(format!("unknown source '{}'", a.source))),
    };
    run(ctx, "serve", source, &a.run)
}

#[derive(Debug, Args)]
pub struct SynthStreamArgs {
    #[command(flatten)]
    pub synth: SynthSourceArgs,
    /// Stream length in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    /// 1.0 sends in real time; 0 as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Send frames to a listening consumer.
    #[arg(long, conflicts_with = "out")]
    pub connect: Option<String>,
    /// Write frames to a file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write a realtime-profile training matrix of stream windows.
    #[arg(long)]
    pub features_out: Option<PathBuf>,
    /// Subjects in the training matrix.
    #[arg(long, default_value_t = 6)]
    pub train_subjects: usize,
    /// Seconds of stream per training subject.
    #[arg(long, default_value_t = 96.0)]
    pub train_seconds: f64,
}

pub fn synth_stream_cmd(ctx: &Ctx, a: &SynthStreamArgs) -> Result<()> {
    if a.connect.is_none() && a.out.is_none() && a.features_out.is_none() {
        return Err(usage("give --connect, --out or --features-out"));
    }
    let synth = synth_config(ctx, a.synth.synth_config.as_deref())?;
    let fcfg = FeatureArgs { config: None, profile: ProfileArg::Realtime }.load(ctx)?;
    let hash = crate::common::extractor(fcfg.clone())?.manifest_hash().to_string();
    header("synth-stream", &hash, synth.seed);
    if let Some(p) = &a.features_out {
        let tc = StreamTrainingConfig {
            subjects: (0..a.train_subjects).collect(),
            seconds_per_subject: a.train_seconds,
            source_rate_hz: a.synth.rate_hz,
            ..Default::default()
        };
        let m = stream_feature_matrix(&synth, &FrontEndConfig::default(), &fcfg, &tc)?;
        write_features(&m, &ctx.path(p))?;
        println!("{} training windows -> {}", m.n_rows(), ctx.path(p).display());
    }
    if a.connect.is_none() && a.out.is_none() {
        return Ok(());
    }
    let stream = synth_stream(ctx, &a.synth)?;
    let limit = (a.duration * a.synth.rate_hz).round() as u64;
    let mut source = SyntheticSource::new(stream, a.synth.chunk, Some(limit), a.speed);
    let mut w: Box<dyn std::io::Write> = match (&a.connect, &a.out) {
        (Some(addr), _) => {
            let s = TcpStream::connect(addr.as_str()).with_context(|| format!("connecting to {addr}"))?;
            s.set_nodelay(true).ok();
            Box::new(s)
        }
        (None, Some(p)) => Box::new(create(&ctx.path(p))?),
        (None, None) => unreachable!(),
    };
    write_frame(&mut w, &Frame::Hello { channels: source.channel_names().to_vec(), rate_hz: a.synth.rate_hz as f32 })?;
    let mut sent = 0u64;
    while let Some(c) = source.next_chunk()? {
        sent += c.samples.ncols() as u64;
        write_frame(&mut w, &Frame::Chunk { first_sample: c.first_sample, samples: c.samples.mapv(|v| v as f32) })?;
        w.flush()?;
    }
    write_frame(&mut w, &Frame::Bye)?;
    w.flush()?;
    println!("sent {sent} samples");
    Ok(())
}
