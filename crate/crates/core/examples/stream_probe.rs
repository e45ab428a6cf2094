//! Trains an svm on synthetic stream windows, then runs a simulated loop
//! over a fresh subject whose high state starts at 20 s and prints tick
//! latencies and the probability trace around the onset.

use std::sync::Arc;
use std::time::Instant;

use nocisense::evaluation::{StateSchedule, SynthConfig, SynthStream};
use nocisense::realtime::{
    run_loop, stream_feature_matrix, ClockMode, FrontEnd, FrontEndConfig, LoopConfig, PublishMessage, StreamTrainingConfig,
    SyntheticSource, TickPipeline, VecSink,
};
use nocisense::{AlgorithmId, FeatureConfig, Hyperparams, TrainedModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = SynthConfig::default();
    let mut front = FrontEndConfig::default();
    if let Ok(z) = std::env::var("MASK_Z") {
        front.mask_z = z.parse()?;
    }
    let fcfg = FeatureConfig::realtime();
    let tc = StreamTrainingConfig::default();
    let t0 = Instant::now();
    let m = stream_feature_matrix(&synth, &front, &fcfg, &tc)?;
    println!("training windows {:?} in {:.1}s", m.rows.dim(), t0.elapsed().as_secs_f64());
    let t1 = Instant::now();
    let model = Arc::new(TrainedModel::fit(AlgorithmId::SvmRbf, &m, &Hyperparams::default(), 1)?);
    println!("trained in {:.1}s", t1.elapsed().as_secs_f64());

    let fs = tc.source_rate_hz;
    let stream = SynthStream::new(&synth, 11, fs, StateSchedule::Onset { at_s: 20.0 })?;
    let names = stream.channel_names().to_vec();
    let source = SyntheticSource::new(stream, 16, Some((40.0 * fs) as u64), 0.0);
    let fe = FrontEnd::new(front, fcfg, names, fs)?;
    let pipe = TickPipeline::new(fe, Some(model), 0.5)?;
    let mut sink = VecSink::default();
    let cfg = LoopConfig { clock: ClockMode::Virtual, ..Default::default() };
    let stats = run_loop(Box::new(source), pipe, &cfg, &mut sink, None)?;
    println!("{stats:?}");
    for msg in &sink.0 {
        if let PublishMessage::Prediction(ev) = msg {
            if (17.0..=23.0).contains(&ev.t) {
                println!("t={:.3} p={:.3} total={}us feat={}us masked={:?}", ev.t, ev.p, ev.latency_us.total, ev.latency_us.features, ev.masked);
            }
        }
    }
    let (mut lo, mut hi, mut nl, mut nh) = (0.0, 0.0, 0, 0);
    for msg in &sink.0 {
        if let PublishMessage::Prediction(ev) = msg {
            if ev.t > 2.0 && ev.t < 19.0 {
                lo += (ev.p < 0.5) as u32 as f64;
                nl += 1;
            } else if ev.t > 22.0 {
                hi += (ev.p >= 0.5) as u32 as f64;
                nh += 1;
            }
        }
    }
    println!("low-state correct {:.3}, high-state correct {:.3}", lo / nl as f64, hi / nh as f64);
    Ok(())
}
