//! Runs the synthetic leave-one-participant-out suite and prints the table
//! and top importances. Usage: `cargo run --release --example pilot [scale]`
//! where `scale` multiplies the planted effect sizes.

use std::time::Instant;

use nocisense::evaluation::{lopo_importance, planted_slots, run_eval, synth_generate, EvalConfig, SynthConfig};
use nocisense::features::{extract_all, FeatureExtractor};
use nocisense::preprocess::{preprocess_epochs, PreprocessConfig};
use nocisense::{AlgorithmId, FeatureConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scale: f64 = std::env::args().nth(1).map_or(Ok(1.0), |s| s.parse())?;
    let algs: Vec<AlgorithmId> = match std::env::args().nth(2) {
        Some(list) => list.split(',').map(|a| a.parse()).collect::<Result<_, _>>()?,
        None => AlgorithmId::ALL.to_vec(),
    };
    let synth = SynthConfig::default().with_effects(scale);
    let t0 = Instant::now();
    let raw = synth_generate(&synth)?;
    let (set, report) = preprocess_epochs(&raw, &PreprocessConfig::default())?;
    println!("generated + preprocessed {} epochs in {:.1}s ({} rejected)", set.len(), t0.elapsed().as_secs_f64(), report.epochs_before - report.epochs_after);
    let fcfg = FeatureConfig::default();
    let ex = FeatureExtractor::new(fcfg.clone())?;
    let t1 = Instant::now();
    let m = extract_all(&set, &ex)?;
    println!("features {:?} in {:.1}s", m.rows.dim(), t1.elapsed().as_secs_f64());
    let cfg = EvalConfig::default();
    let t2 = Instant::now();
    let rep = run_eval(&m, &algs, &cfg)?;
    println!("{}", rep.to_table());
    println!("eval {:.1}s", t2.elapsed().as_secs_f64());
    let t3 = Instant::now();
    let imp = lopo_importance(&m, AlgorithmId::SvmRbf, &cfg, 10, Some(ex.manifest()))?;
    println!("{}", imp.to_table(20));
    for (name, slots) in ["alpha", "theta", "gamma"].iter().zip(planted_slots(ex.manifest(), &fcfg, &synth)) {
        println!("{name}: best rank {:?}", imp.best_rank(&slots));
    }
    println!("importance {:.1}s", t3.elapsed().as_secs_f64());
    Ok(())
}
