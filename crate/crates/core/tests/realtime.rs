use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use byteorder::{LittleEndian, WriteBytesExt};
use ndarray::{Array1, Array2};
use nocisense::evaluation::{StateSchedule, SynthConfig, SynthStream};
use nocisense::realtime::wire::{encode_frame, write_frame, FRAME_CHUNK, FRAME_HELLO, WIRE_MAGIC, WIRE_VERSION};
use nocisense::realtime::{
    run_loop, stream_feature_matrix, AlertState, ClockMode, ControlMessage, FileReplaySource, Frame, FrameReader, FrontEnd,
    FrontEndConfig, LoopConfig, PublishMessage, Publisher, RealtimeError, RingBuffer, SocketSource, StreamSource,
    StreamTrainingConfig, SyntheticSource, TickPipeline, VecSink,
};
use nocisense::{AlgorithmId, FeatureConfig, Hyperparams, TrainedModel};
use proptest::prelude::*;
use serde_json::Value;

const FS: f64 = 128.0;

/// Logistic model on a few dozen synthetic stream windows; enough to drive
/// the loop, not to classify well.
fn quick_model() -> Arc<TrainedModel> {
    static MODEL: OnceLock<Arc<TrainedModel>> = OnceLock::new();
    MODEL
        .get_or_init(|| {
            let tc = StreamTrainingConfig { subjects: vec![0, 1], seconds_per_subject: 32.0, hop_seconds: 1.0, ..Default::default() };
            let m = stream_feature_matrix(&SynthConfig::default(), &FrontEndConfig::default(), &FeatureConfig::realtime(), &tc).unwrap();
            Arc::new(TrainedModel::fit(AlgorithmId::LogisticRegression, &m, &Hyperparams::default(), 1).unwrap())
        })
        .clone()
}

fn pipeline(names: Vec<String>) -> TickPipeline {
    let front = FrontEnd::new(FrontEndConfig::default(), FeatureConfig::realtime(), names, FS).unwrap();
    TickPipeline::new(front, Some(quick_model()), 0.5).unwrap()
}

fn synth_source(subject: usize, seconds: f64, speed: f64) -> SyntheticSource {
    let stream = SynthStream::new(&SynthConfig::default(), subject, FS, StateSchedule::Constant { high: false }).unwrap();
    SyntheticSource::new(stream, 16, Some((seconds * FS) as u64), speed)
}

fn names() -> Vec<String> {
    synth_source(0, 1.0, 0.0).channel_names().to_vec()
}

fn predictions(msgs: &[PublishMessage]) -> Vec<&nocisense::realtime::PredictionEvent> {
    msgs.iter()
        .filter_map(|m| match m {
            PublishMessage::Prediction(e) => Some(e),
            _ => None,
        })
        .collect()
}

#[test]
fn ring_examples() {
    let mut r = RingBuffer::new(1, 4);
    let partial = {
        r.push_chunk(Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap().view()).unwrap();
        r.snapshot()
    };
    assert!(partial.partial);
    assert_eq!(partial.samples.row(0).to_vec(), [0.0, 0.0, 1.0, 2.0]);
    r.push_chunk(Array2::from_shape_vec((1, 4), vec![3.0, 4.0, 5.0, 6.0]).unwrap().view()).unwrap();
    let s = r.snapshot();
    assert_eq!(s.samples.row(0).to_vec(), [3.0, 4.0, 5.0, 6.0]);
    assert!(!s.partial);
    assert_eq!(s.end_sample, 6);
    let mut exact = RingBuffer::new(2, 3);
    let chunk = Array2::from_shape_fn((2, 3), |(c, t)| (10 * c + t) as f64);
    exact.push_chunk(chunk.view()).unwrap();
    assert_eq!(exact.snapshot().samples, chunk);
    assert!(matches!(exact.push_chunk(Array2::zeros((3, 1)).view()), Err(RealtimeError::ChannelMismatch { expected: 2, got: 3 })));
}

proptest! {
    #[test]
    fn ring_snapshot_is_latest_samples(cap in 1usize..40, sizes in prop::collection::vec(0usize..60, 0..12)) {
        let mut r = RingBuffer::new(2, cap);
        let mut all: Vec<f64> = Vec::new();
        for n in sizes {
            let start = all.len();
            let chunk = Array2::from_shape_fn((2, n), |(c, t)| (start + t) as f64 * if c == 0 { 1.0 } else { -1.0 });
            all.extend((start..start + n).map(|v| v as f64));
            r.push_chunk(chunk.view()).unwrap();
            let s = r.snapshot();
            let keep = all.len().min(cap);
            let mut want = vec![0.0; cap - keep];
            want.extend_from_slice(&all[all.len() - keep..]);
            prop_assert_eq!(s.samples.row(0).to_vec(), want.clone());
            prop_assert_eq!(s.samples.row(1).to_vec(), want.iter().map(|v| -v).collect::<Vec<_>>());
            prop_assert_eq!(s.partial, all.len() < cap);
            prop_assert_eq!(s.end_sample, all.len() as u64);
        }
    }

    #[test]
    fn wire_frames_round_trip(
        names in prop::collection::vec("[A-Za-z0-9µ]{0,6}", 1..6),
        rate in 1.0f32..2000.0,
        chunks in prop::collection::vec((any::<u64>(), prop::collection::vec(any::<f32>(), 0..40)), 0..4),
    ) {
        let nch = names.len();
        let mut frames = vec![Frame::Hello { channels: names.clone(), rate_hz: rate }];
        for (first, values) in chunks {
            let n = values.len() / nch;
            let samples = Array2::from_shape_vec((nch, n), values[..n * nch].to_vec()).unwrap();
            frames.push(Frame::Chunk { first_sample: first, samples });
        }
        frames.push(Frame::Bye);
        let mut bytes = Vec::new();
        for f in &frames {
            write_frame(&mut bytes, f).unwrap();
        }
        let mut reader = FrameReader::new(&bytes[..]);
        for f in &frames {
            let back = reader.read_frame().unwrap().unwrap();
            match (f, &back) {
                // NaN payloads compare by bits
                (Frame::Chunk { first_sample: a, samples: x }, Frame::Chunk { first_sample: b, samples: y }) => {
                    prop_assert_eq!(a, b);
                    prop_assert_eq!(x.dim(), y.dim());
                    prop_assert!(x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
                }
                _ => prop_assert_eq!(f, &back),
            }
        }
        prop_assert!(reader.read_frame().unwrap().is_none());
    }

    #[test]
    fn alert_transitions_alternate(ps in prop::collection::vec(0.0f64..1.0, 1..400), threshold in 0.3f64..0.9, sustain_ticks in 0u32..20) {
        let dt = 0.125;
        let sustain = sustain_ticks as f64 * dt;
        let mut a = AlertState::new(threshold, sustain);
        let mut expect_active = true;
        let mut streak = 0u32;
        let mut active = false;
        for (k, &p) in ps.iter().enumerate() {
            let t = k as f64 * dt;
            // reference: streak of ticks at or above threshold, hysteresis on release
            streak = if p >= threshold { streak + 1 } else { 0 };
            let was = active;
            if !active && p >= threshold && streak as f64 * dt >= sustain - 1e-9 {
                active = true;
            } else if active && p < threshold - 0.05 {
                active = false;
            }
            let tr = a.update(p, t, dt);
            prop_assert_eq!(tr.is_some(), was != active);
            if let Some(tr) = tr {
                prop_assert_eq!(tr.active, expect_active);
                prop_assert_eq!(tr.at, t);
                expect_active = !expect_active;
            }
            prop_assert_eq!(a.active, active);
        }
    }
}

#[test]
fn wire_bytes_match_hand_encoding() {
    let samples = Array2::from_shape_vec((2, 3), vec![1.0f32, 2.0, 3.0, -1.0, -2.5, f32::MAX]).unwrap();
    let mut want = Vec::new();
    want.write_u32::<LittleEndian>(4 + 1 + 1 + 8 + 6 * 4).unwrap();
    want.extend_from_slice(b"EEGS");
    want.extend_from_slice(&[1, 2]);
    want.write_u64::<LittleEndian>(77).unwrap();
    for v in [1.0f32, 2.0, 3.0, -1.0, -2.5, f32::MAX] {
        want.write_f32::<LittleEndian>(v).unwrap();
    }
    assert_eq!(encode_frame(&Frame::Chunk { first_sample: 77, samples }).unwrap(), want);
    assert_eq!((WIRE_MAGIC, WIRE_VERSION, FRAME_HELLO, FRAME_CHUNK), (b"EEGS", 1, 1, 2));

    let hello = encode_frame(&Frame::Hello { channels: vec!["C4".into(), "Cz".into()], rate_hz: 128.0 }).unwrap();
    let mut want = Vec::new();
    want.write_u32::<LittleEndian>(4 + 1 + 1 + 2 + 4 + 2 * (2 + 2)).unwrap();
    want.extend_from_slice(b"EEGS");
    want.extend_from_slice(&[1, 1]);
    want.write_u16::<LittleEndian>(2).unwrap();
    want.write_f32::<LittleEndian>(128.0).unwrap();
    for name in ["C4", "Cz"] {
        want.write_u16::<LittleEndian>(2).unwrap();
        want.extend_from_slice(name.as_bytes());
    }
    assert_eq!(hello, want);

    let mut bad = want.clone();
    bad[8] = 9;
    assert!(matches!(FrameReader::new(&bad[..]).read_frame(), Err(RealtimeError::WireVersion(9))));
}

#[test]
fn alert_examples() {
    let dt = 0.125;
    let mut a = AlertState::new(0.8, 10.0);
    let raised: Vec<usize> = (0..100).filter(|&k| a.update(0.9, k as f64 * dt, dt).is_some()).collect();
    assert_eq!(raised, [79]);

    let mut b = AlertState::new(0.8, 10.0);
    for k in 0..72 {
        assert!(b.update(0.9, k as f64 * dt, dt).is_none());
    }
    for k in 72..200 {
        assert!(b.update(0.5, k as f64 * dt, dt).is_none());
    }
    assert!(!b.active);

    assert!(a.active);
    assert!(a.update(0.78, 12.5, dt).is_none());
    assert!(a.active);
    let tr = a.update(0.74, 12.625, dt).unwrap();
    assert!(!tr.active);
    assert_eq!(tr.since, 79.0 * dt);
}

#[test]
fn degenerate_windows_never_crash_the_tick() {
    let names = names();
    let mut pipe = pipeline(names.clone());
    let n = 128;
    let mut ring = RingBuffer::new(names.len(), n);
    let zero = pipe.model().classifier.proba(Array1::zeros(pipe.model().standardization.n_slots()).view());
    ring.push_chunk(Array2::zeros((names.len(), n)).view()).unwrap();
    let ev = pipe.tick(&ring.snapshot(), 1.0);
    assert_eq!(ev.masked.len(), names.len());
    assert!((ev.p - zero).abs() <= 1e-12, "{} vs {zero}", ev.p);

    let mut t = 1.0;
    let cases: Vec<Array2<f64>> = vec![
        Array2::from_elem((names.len(), 16), f64::NAN),
        Array2::from_elem((names.len(), 16), f64::INFINITY),
        Array2::from_shape_fn((names.len(), 16), |(c, k)| 1e12 * ((c + k) as f64).sin()),
        Array2::from_shape_fn((names.len(), 16), |(c, k)| if c == 3 { f64::NAN } else { (k as f64).cos() }),
        Array2::from_elem((names.len(), 16), -1e300),
        Array2::zeros((names.len(), 300)),
    ];
    let mut last_seq = ev.seq;
    for chunk in cases.iter().cycle().take(30) {
        ring.push_chunk(chunk.view()).unwrap();
        t += 0.125;
        let ev = pipe.tick(&ring.snapshot(), t);
        assert!(ev.p.is_finite() && (0.0..=1.0).contains(&ev.p));
        assert_eq!(ev.seq, last_seq + 1);
        last_seq = ev.seq;
        assert!(ev.latency_us.total >= ev.latency_us.resample + ev.latency_us.filter);
    }
}

#[test]
fn virtual_minute_has_480_events() {
    let mut sink = VecSink::default();
    let cfg = LoopConfig { clock: ClockMode::Virtual, ..Default::default() };
    let stats = run_loop(Box::new(synth_source(3, 60.0, 0.0)), pipeline(names()), &cfg, &mut sink, None).unwrap();
    let evs = predictions(&sink.0);
    assert!((479..=481).contains(&evs.len()), "{}", evs.len());
    assert_eq!(stats.events, evs.len() as u64);
    assert_eq!(stats.frames_dropped, 0);
    assert_eq!(stats.samples_received, 60 * 128);
    assert!(evs.windows(2).all(|w| w[1].t > w[0].t && w[1].seq == w[0].seq + 1));
    assert!(evs.iter().take(7).all(|e| e.is_partial()));
    assert!(evs.iter().skip(8).all(|e| !e.is_partial()));
}

#[test]
fn slow_feature_stage_counts_missed_deadlines() {
    let mut pipe = pipeline(names());
    pipe.front.feature_delay = Some(Duration::from_millis(200));
    let mut sink = VecSink::default();
    let cfg = LoopConfig { max_ticks: Some(6), ..Default::default() };
    let stats = run_loop(Box::new(synth_source(0, 30.0, 1.0)), pipe, &cfg, &mut sink, None).unwrap();
    assert!(stats.missed_deadlines >= 3, "{stats:?}");
    let evs = predictions(&sink.0);
    assert!(!evs.is_empty());
    assert!(evs.windows(2).all(|w| w[1].t > w[0].t && w[1].wall >= w[0].wall));
}

#[test]
fn socket_source_reads_a_tcp_stream() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let names = names();
    let data = Array2::from_shape_fn((names.len(), 128 * 4), |(c, t)| ((t as f64) * 0.05 + c as f64).sin() as f32 * 20.0);
    let sent = data.clone();
    let hello_names = names.clone();
    let producer = std::thread::spawn(move || {
        let mut s = TcpStream::connect(addr).unwrap();
        write_frame(&mut s, &Frame::Hello { channels: hello_names, rate_hz: 128.0 }).unwrap();
        for k in 0..32usize {
            // chunk 20 is skipped, leaving a gap
            if k == 20 {
                continue;
            }
            let samples = sent.slice(ndarray::s![.., k * 16..(k + 1) * 16]).to_owned();
            write_frame(&mut s, &Frame::Chunk { first_sample: (k * 16) as u64, samples }).unwrap();
        }
        write_frame(&mut s, &Frame::Bye).unwrap();
    });
    let (stream, _) = listener.accept().unwrap();
    let mut src = SocketSource::from_stream(stream).unwrap();
    assert_eq!(src.channel_names(), &names[..]);
    assert_eq!(src.rate_hz(), 128.0);
    let first = src.next_chunk().unwrap().unwrap();
    assert_eq!(first.first_sample, 0);
    assert_eq!(first.samples, data.slice(ndarray::s![.., 0..16]).mapv(f64::from));
    let mut sink = VecSink::default();
    let cfg = LoopConfig { clock: ClockMode::Virtual, ..Default::default() };
    let stats = run_loop(Box::new(src), pipeline(names), &cfg, &mut sink, None).unwrap();
    producer.join().unwrap();
    assert_eq!(stats.frames_received, 30);
    assert_eq!(stats.frames_dropped, 1);
    assert_eq!(stats.samples_received, 30 * 16);
    assert!(stats.source_error.is_none());
}

#[test]
fn socket_source_rejects_chunks_before_hello() {
    let mut bytes = Vec::new();
    write_frame(&mut bytes, &Frame::Bye).unwrap();
    assert!(matches!(SocketSource::from_reader(Box::new(std::io::Cursor::new(bytes))), Err(RealtimeError::Protocol(_))));
}

fn read_json_line(r: &mut impl BufRead) -> Value {
    let mut line = String::new();
    r.read_line(&mut line).unwrap();
    serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line:?}"))
}

#[test]
fn control_is_echoed_and_applied_within_two_ticks() {
    let (mut publisher, control) = Publisher::bind("127.0.0.1:0", 1024).unwrap();
    let addr = publisher.local_addr();
    let client = std::thread::spawn(move || {
        let stream = TcpStream::connect(addr).unwrap();
        let mut w = stream.try_clone().unwrap();
        let mut r = BufReader::new(stream);
        let mut seen = 0;
        let mut sent_at = None;
        let mut after_send = 0;
        let mut echo = None;
        loop {
            let msg = read_json_line(&mut r);
            match msg["type"].as_str().unwrap() {
                "prediction" => {
                    for key in ["t", "p", "label", "latency_us", "masked", "flags", "threshold"] {
                        assert!(msg.get(key).is_some(), "{key} missing");
                    }
                    seen += 1;
                    if sent_at.is_some() {
                        after_send += 1;
                    }
                    if let Some(e) = &echo {
                        assert_eq!(msg["threshold"], 0.6, "prediction after echo {e}");
                        return after_send;
                    }
                    if seen == 4 {
                        writeln!(w, r#"{{"type":"set_threshold","value":0.6}}"#).unwrap();
                        sent_at = Some(Instant::now());
                    }
                }
                "control" => {
                    assert_eq!(msg["threshold"], 0.6);
                    assert_eq!(msg["paused"], false);
                    assert!(sent_at.unwrap().elapsed() <= Duration::from_millis(250));
                    echo = Some(msg);
                }
                other => panic!("unexpected {other}"),
            }
        }
    });
    assert!(publisher.wait_for_subscribers(1, Duration::from_secs(5)));
    let cfg = LoopConfig { duration_seconds: Some(4.0), ..Default::default() };
    run_loop(Box::new(synth_source(0, 30.0, 1.0)), pipeline(names()), &cfg, &mut publisher, Some(&control)).unwrap();
    let ticks_until_echo = client.join().unwrap();
    assert!(ticks_until_echo <= 3, "{ticks_until_echo}");
}

#[test]
fn websocket_subscriber_gets_events_and_controls_the_loop() {
    let (mut publisher, control) = Publisher::bind("127.0.0.1:0", 1024).unwrap();
    let url = format!("ws://{}/", publisher.local_addr());
    let client = std::thread::spawn(move || {
        let (mut ws, _) = tungstenite::connect(url).unwrap();
        let mut predictions = 0;
        loop {
            let text = match ws.read().unwrap() {
                tungstenite::Message::Text(t) => t.to_string(),
                _ => continue,
            };
            let msg: Value = serde_json::from_str(&text).unwrap();
            match msg["type"].as_str().unwrap() {
                "prediction" => {
                    predictions += 1;
                    if predictions == 3 {
                        ws.send(tungstenite::Message::text(r#"{"type":"pause"}"#)).unwrap();
                        ws.send(tungstenite::Message::text(r#"{"type":"set_threshold","value":7}"#)).unwrap();
                    }
                }
                "control" => {
                    assert_eq!(msg["paused"], true);
                    return predictions;
                }
                "error" => assert!(msg["message"].as_str().unwrap().contains("threshold")),
                other => panic!("unexpected {other}"),
            }
        }
    });
    assert!(publisher.wait_for_subscribers(1, Duration::from_secs(5)));
    let cfg = LoopConfig { duration_seconds: Some(3.0), ..Default::default() };
    let stats = run_loop(Box::new(synth_source(0, 30.0, 1.0)), pipeline(names()), &cfg, &mut publisher, Some(&control)).unwrap();
    let seen = client.join().unwrap();
    assert!(seen >= 3);
    assert!(stats.paused_ticks > 0);
    assert!(stats.events < stats.ticks);
}

#[test]
fn slow_subscriber_gets_gap_notices_without_stalling_the_publisher() {
    let (publisher, _control) = Publisher::bind("127.0.0.1:0", 8).unwrap();
    let stream = TcpStream::connect(publisher.local_addr()).unwrap();
    assert!(publisher.wait_for_subscribers(1, Duration::from_secs(5)));
    let pad = "x".repeat(2000);
    let total = 20_000u64;
    let t0 = Instant::now();
    for i in 0..total {
        publisher.send(&PublishMessage::Error { message: format!("{i} {pad}") });
    }
    assert!(t0.elapsed() < Duration::from_secs(20));
    let mut r = BufReader::new(stream);
    let (mut delivered, mut dropped, mut last) = (0u64, 0u64, None::<u64>);
    while last != Some(total - 1) {
        let msg = read_json_line(&mut r);
        match msg["type"].as_str().unwrap() {
            "gap" => dropped += msg["dropped"].as_u64().unwrap(),
            "error" => {
                let i: u64 = msg["message"].as_str().unwrap().split(' ').next().unwrap().parse().unwrap();
                assert!(last.is_none_or(|l| i > l));
                last = Some(i);
                delivered += 1;
            }
            other => panic!("unexpected {other}"),
        }
    }
    assert!(dropped > 0);
    assert_eq!(delivered + dropped, total);
}

#[test]
fn file_replay_stream_through_loop() {
    let names = names();
    let data = Array2::from_shape_fn((names.len(), 128 * 5), |(c, t)| 10.0 * ((t as f64) * 0.3 + c as f64).sin());
    let src = FileReplaySource::from_samples(data, names.clone(), FS, 32, 0.0);
    let mut sink = VecSink::default();
    let cfg = LoopConfig { clock: ClockMode::Virtual, ..Default::default() };
    let stats = run_loop(Box::new(src), pipeline(names), &cfg, &mut sink, None).unwrap();
    assert_eq!(stats.events, 40);
    assert_eq!(predictions(&sink.0).last().unwrap().window_end, 128 * 5);
}

#[test]
fn mismatched_channels_are_a_config_error() {
    let mut other = names();
    other.swap(0, 1);
    let cfg = LoopConfig { clock: ClockMode::Virtual, ..Default::default() };
    let r = run_loop(Box::new(synth_source(0, 2.0, 0.0)), pipeline(other), &cfg, &mut VecSink::default(), None);
    assert!(matches!(r, Err(RealtimeError::Config(_))));
    let front = FrontEnd::new(FrontEndConfig::default(), FeatureConfig::realtime(), names(), FS).unwrap();
    assert!(matches!(TickPipeline::new(front, None, 0.5), Err(RealtimeError::ModelMissing)));
}

#[test]
fn control_messages_parse_from_json() {
    assert_eq!(ControlMessage::parse(r#"{"type":"set_sustain","value":4}"#).unwrap(), ControlMessage::SetSustain { value: 4.0 });
    assert_eq!(ControlMessage::parse(r#" {"type":"resume"} "#).unwrap(), ControlMessage::Resume);
    assert!(ControlMessage::parse(r#"{"type":"reboot"}"#).is_err());
}

#[test]
fn probability_rises_after_signature_onset() {
    let synth = SynthConfig::default();
    let fcfg = FeatureConfig::realtime();
    let m = stream_feature_matrix(&synth, &FrontEndConfig::default(), &fcfg, &StreamTrainingConfig::default()).unwrap();
    let model = Arc::new(TrainedModel::fit(AlgorithmId::SvmRbf, &m, &Hyperparams::default(), 1).unwrap());
    // a subject outside the training set, high state from 20 s
    let onset = 20.0;
    let stream = SynthStream::new(&synth, 11, FS, StateSchedule::Onset { at_s: onset }).unwrap();
    let names = stream.channel_names().to_vec();
    let src = SyntheticSource::new(stream, 16, Some((40.0 * FS) as u64), 0.0);
    let front = FrontEnd::new(FrontEndConfig::default(), fcfg, names, FS).unwrap();
    let pipe = TickPipeline::new(front, Some(model), 0.5).unwrap();
    let mut sink = VecSink::default();
    let cfg = LoopConfig { clock: ClockMode::Virtual, ..Default::default() };
    run_loop(Box::new(src), pipe, &cfg, &mut sink, None).unwrap();
    let evs = predictions(&sink.0);
    // first tick whose one-second window lies wholly after the onset
    let covered = evs.iter().position(|e| e.t >= onset + 1.0 - 1e-9).unwrap();
    assert!(evs[covered..covered + 2].iter().any(|e| e.p >= 0.5), "{:?}", evs[covered..covered + 2].iter().map(|e| e.p).collect::<Vec<_>>());
    let mean = |lo: f64, hi: f64| {
        let ps: Vec<f64> = evs.iter().filter(|e| e.t >= lo && e.t < hi).map(|e| e.p).collect();
        ps.iter().sum::<f64>() / ps.len() as f64
    };
    let (low, high) = (mean(2.0, onset), mean(onset + 1.0, 40.0));
    assert!(high - low >= 0.25, "low {low} high {high}");
}
