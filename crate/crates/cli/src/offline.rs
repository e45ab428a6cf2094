use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use nocisense::evaluation::{lopo_importance, permutation_importance, run_eval, synth_generate, EvalConfig, SynthConfig};
use nocisense::features::{extract_all, Profile};
use nocisense::ingest::{extract_epochs, load_recording, load_recording_as, EpochConfig};
use nocisense::models::{load_model, save_model};
use nocisense::preprocess::{preprocess_epochs, preprocess_recording, PreprocessConfig, PreprocessReport};
use nocisense::{AlgorithmId, EpochSet, Hyperparams, TrainedModel};

use crate::common::{
    config_text, extractor, feature_config, header, read_epochs, read_features, usage, write_epochs, write_features,
    write_json, Ctx,
};

const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Offline,
    Realtime,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Offline => Profile::Offline,
            ProfileArg::Realtime => Profile::Realtime,
        }
    }
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Feature config file (TOML, `version = 1`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in feature profile used when no config file is given.
    #[arg(long, value_enum, default_value = "offline")]
    pub profile: ProfileArg,
}

impl FeatureArgs {
    pub fn load(&self, ctx: &Ctx) -> Result<nocisense::FeatureConfig> {
        feature_config(self.config.as_deref().map(|p| ctx.path(p)).as_deref(), self.profile.into())
    }
}

fn default_manifest_hash() -> String {
    extractor(nocisense::FeatureConfig::offline()).map(|e| e.manifest_hash().to_string()).unwrap_or_default()
}

fn parse_overrides(items: &[String]) -> Result<Hyperparams> {
    let mut hp = Hyperparams::default();
    for kv in items {
        hp.apply_override(kv).map_err(|e| usage(e.to_string()))?;
    }
    Ok(hp)
}

fn parse_algorithm(s: &str) -> Result<AlgorithmId> {
    s.parse::<AlgorithmId>().map_err(|e| usage(e.to_string()))
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// BrainVision header files (.vhdr).
    #[arg(long = "vhdr", required = true, num_args = 1..)]
    pub headers: Vec<PathBuf>,
    /// Subject id; only with a single header (default: file stem).
    #[arg(long)]
    pub subject: Option<String>,
    #[arg(long, default_value_t = 4.0)]
    pub epoch_seconds: f64,
    /// Output epoch cache.
    #[arg(long)]
    pub out: PathBuf,
}

fn load_recordings(ctx: &Ctx, headers: &[PathBuf], subject: Option<&str>) -> Result<Vec<nocisense::RawRecording>> {
    if subject.is_some() && headers.len() > 1 {
        return Err(usage("--subject needs exactly one --vhdr"));
    }
    headers
        .iter()
        .map(|h| {
            let p = ctx.path(h);
            match subject {
                Some(s) => load_recording_as(&p, s),
                None => load_recording(&p),
            }
            .with_context(|| format!("loading {}", p.display()))
        })
        .collect()
}

pub fn ingest(ctx: &Ctx, a: &IngestArgs) -> Result<()> {
    header("ingest", &default_manifest_hash(), ctx.seed_or(DEFAULT_SEED));
    let cfg = EpochConfig { epoch_seconds: a.epoch_seconds, ..Default::default() };
    let mut all: Option<EpochSet> = None;
    for rec in load_recordings(ctx, &a.headers, a.subject.as_deref())? {
        let (set, stats) = extract_epochs(&rec, &cfg)?;
        println!(
            "{}: {} channels @ {} Hz, {} samples; epochs low {} high {}, skipped {}, overrun {}",
            rec.subject_id,
            rec.header.channel_names.len(),
            rec.header.sampling_rate_hz,
            rec.samples.ncols(),
            stats.low,
            stats.high,
            stats.skipped,
            stats.overrun
        );
        match &mut all {
            Some(acc) => acc.merge(set)?,
            None => all = Some(set),
        }
    }
    let set = all.unwrap_or_default();
    write_epochs(&set, &ctx.path(&a.out))?;
    println!("wrote {} epochs to {}", set.len(), ctx.path(&a.out).display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Continuous recordings to filter, then epoch.
    #[arg(long = "vhdr", num_args = 1.., conflicts_with = "epochs")]
    pub headers: Vec<PathBuf>,
    /// Epoch cache to clean instead of recordings.
    #[arg(long)]
    pub epochs: Option<PathBuf>,
    #[arg(long)]
    pub subject: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-recording reports as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    pub z_threshold: f64,
    /// Peak-to-peak rejection threshold (µV).
    #[arg(long, alias = "ptp-uv", default_value_t = 150.0)]
    pub ptp_threshold: f64,
    #[arg(long, alias = "rate-hz", default_value_t = 500.0)]
    pub target_rate: f64,
    /// High-pass cutoff (Hz).
    #[arg(long, default_value_t = 1.0)]
    pub highpass: f64,
    /// Notch centre (Hz).
    #[arg(long, default_value_t = 50.0)]
    pub notch: f64,
}

fn print_report(r: &PreprocessReport) {
    let db = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.1} dB"));
    println!(
        "{}: {} -> {} Hz, bad channels [{}], epochs {} -> {} ({:.1}% rejected), SNR {} -> {}",
        r.subject_id,
        r.source_rate_hz,
        r.output_rate_hz,
        r.bad_channels.join(", "),
        r.epochs_before,
        r.epochs_after,
        100.0 * r.rejection_rate,
        db(r.snr_before_db),
        db(r.snr_after_db)
    );
}

pub fn preprocess(ctx: &Ctx, a: &PreprocessArgs) -> Result<()> {
    header("preprocess", &default_manifest_hash(), ctx.seed_or(DEFAULT_SEED));
    let mut cfg =
        PreprocessConfig { z_threshold: a.z_threshold, ptp_threshold_uv: a.ptp_threshold, target_rate_hz: a.target_rate, ..Default::default() };
    cfg.filter.highpass_cutoff_hz = a.highpass;
    cfg.filter.notch_hz = a.notch;
    cfg.filter.validate(a.target_rate).map_err(|e| usage(e.to_string()))?;
    let mut reports = Vec::new();
    let set = if let Some(e) = &a.epochs {
        let (set, r) = preprocess_epochs(&read_epochs(&ctx.path(e))?, &cfg)?;
        reports.push(r);
        set
    } else if !a.headers.is_empty() {
        let mut all: Option<EpochSet> = None;
        for rec in load_recordings(ctx, &a.headers, a.subject.as_deref())? {
            let (set, r) = preprocess_recording(&rec, &cfg)?;
            reports.push(r);
            match &mut all {
                Some(acc) => acc.merge(set)?,
                None => all = Some(set),
            }
        }
        all.unwrap_or_default()
    } else {
        return Err(usage("give --vhdr recordings or --epochs"));
    };
    reports.iter().for_each(print_report);
    write_epochs(&set, &ctx.path(&a.out))?;
    if let Some(p) = &a.report {
        write_json(&reports, &ctx.path(p))?;
    }
    println!("wrote {} epochs to {}", set.len(), ctx.path(&a.out).display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub epochs: Option<PathBuf>,
    #[arg(long, requires = "epochs")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Write the slot manifest as text.
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
    /// Write the effective feature config as TOML.
    #[arg(long)]
    pub write_config: Option<PathBuf>,
}

pub fn featurize(ctx: &Ctx, a: &FeaturizeArgs) -> Result<()> {
    let cfg = a.features.load(ctx)?;
    let ex = extractor(cfg.clone())?;
    header("featurize", ex.manifest_hash(), ctx.seed_or(DEFAULT_SEED));
    if a.epochs.is_none() && a.write_config.is_none() && a.manifest_out.is_none() {
        return Err(usage("nothing to do: give --epochs/--out, --write-config or --manifest-out"));
    }
    if let Some(p) = &a.write_config {
        std::fs::write(ctx.path(p), config_text(&cfg)).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.manifest_out {
        std::fs::write(ctx.path(p), ex.manifest().to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(e) = &a.epochs {
        let out = a.out.as_ref().ok_or_else(|| usage("--epochs needs --out"))?;
        let set = read_epochs(&ctx.path(e))?;
        let m = extract_all(&set, &ex)?;
        write_features(&m, &ctx.path(out))?;
        let flagged = m.flags.iter().filter(|f| f.0 != 0).count();
        println!("{} vectors x {} slots ({} flagged) -> {}", m.n_rows(), m.rows.ncols(), flagged, ctx.path(out).display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value = "svm_rbf")]
    pub algorithm: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Hyperparameter override `key=value`, repeatable (e.g. svm.c=2).
    #[arg(long = "set", alias = "hyper")]
    pub overrides: Vec<String>,
    /// Feature config the matrix must have been built with.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
}

pub fn train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let alg = parse_algorithm(&a.algorithm)?;
    let hp = parse_overrides(&a.overrides)?;
    let seed = ctx.seed_or(DEFAULT_SEED);
    let m = read_features(&ctx.path(&a.features))?;
    header("train", &m.manifest_hash, seed);
    if a.config.is_some() || a.profile.is_some() {
        let cfg = feature_config(a.config.as_deref().map(|p| ctx.path(p)).as_deref(), a.profile.map_or(Profile::Offline, Into::into))?;
        extractor(cfg)?.expect_hash(&m.manifest_hash)?;
    }
    let model = TrainedModel::fit(alg, &m, &hp, seed)?;
    save_model(&model, &ctx.path(&a.out))?;
    println!("{} trained on {} rows in {:.1} ms -> {}", alg, model.meta.n_train, model.meta.train_ms, ctx.path(&a.out).display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, required_unless_present = "epochs", conflicts_with = "epochs")]
    pub features: Option<PathBuf>,
    /// Epoch cache to featurize in-process instead of a feature file.
    #[arg(long)]
    pub epochs: Option<PathBuf>,
    #[command(flatten)]
    pub feature_cfg: FeatureArgs,
    /// Comma-separated algorithm list (default: all eight).
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Vec<String>,
    #[arg(long = "set", alias = "hyper")]
    pub overrides: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Full report as JSON.
    #[arg(long, alias = "report-out")]
    pub report: Option<PathBuf>,
}

fn algorithms(list: &[String]) -> Result<Vec<AlgorithmId>> {
    if list.is_empty() {
        return Ok(AlgorithmId::ALL.to_vec());
    }
    list.iter().map(|s| parse_algorithm(s.trim())).collect()
}

pub fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let algs = algorithms(&a.algorithms)?;
    let cfg = EvalConfig {
        hyperparams: parse_overrides(&a.overrides)?,
        seed: ctx.seed_or(DEFAULT_SEED),
        bootstrap_resamples: a.bootstrap,
        ci_level: a.ci_level,
        threshold: a.threshold,
        ..Default::default()
    };
    let m = match (&a.features, &a.epochs) {
        (Some(f), _) => read_features(&ctx.path(f))?,
        (None, Some(e)) => extract_all(&read_epochs(&ctx.path(e))?, &extractor(a.feature_cfg.load(ctx)?)?)?,
        (None, None) => return Err(usage("give --features or --epochs")),
    };
    header("evaluate", &m.manifest_hash, cfg.seed);
    let rep = run_eval(&m, &algs, &cfg)?;
    print!("{}", rep.to_table());
    if let Some(p) = &a.report {
        write_json(&rep, &ctx.path(p))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Score a saved model on the matrix instead of pooling LOPO folds.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "svm_rbf")]
    pub algorithm: String,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    #[arg(long = "set", alias = "hyper")]
    pub overrides: Vec<String>,
    #[command(flatten)]
    pub feature_cfg: FeatureArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn importance(ctx: &Ctx, a: &ImportanceArgs) -> Result<()> {
    let seed = ctx.seed_or(DEFAULT_SEED);
    let m = read_features(&ctx.path(&a.features))?;
    header("importance", &m.manifest_hash, seed);
    let ex = extractor(a.feature_cfg.load(ctx)?)?;
    let manifest = (ex.manifest_hash() == m.manifest_hash).then(|| ex.manifest());
    let rep = match &a.model {
        Some(p) => {
            let model = load_model(&ctx.path(p))?;
            model.check_manifest(&m.manifest_hash)?;
            permutation_importance(&model, &m, a.repeats, seed, manifest)?
        }
        None => {
            let cfg = EvalConfig { hyperparams: parse_overrides(&a.overrides)?, seed, ..Default::default() };
            lopo_importance(&m, parse_algorithm(&a.algorithm)?, &cfg, a.repeats, manifest)?
        }
    };
    print!("{}", rep.to_table(a.top));
    if let Some(p) = &a.out {
        write_json(&rep, &ctx.path(p))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub subjects: usize,
    #[arg(long, default_value_t = 40)]
    pub epochs_per_class: usize,
    #[arg(long, default_value_t = 4.0)]
    pub epoch_seconds: f64,
    #[arg(long, default_value_t = 500.0)]
    pub rate_hz: f64,
    /// Multiplies the planted effect sizes.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Generator settings as TOML; flags above override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn synth_config(ctx: &Ctx, path: Option<&Path>) -> Result<SynthConfig> {
    let mut cfg = match path {
        Some(p) => {
            let p = ctx.path(p);
            toml::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = ctx.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_subjects: a.subjects,
        epochs_per_class_per_subject: a.epochs_per_class,
        epoch_seconds: a.epoch_seconds,
        fs_hz: a.rate_hz,
        ..synth_config(ctx, a.config.as_deref())?
    }
    .with_effects(a.scale);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    header("synth", &default_manifest_hash(), cfg.seed);
    let set = synth_generate(&cfg)?;
    write_epochs(&set, &ctx.path(&a.out))?;
    let (lo, hi) = set.label_counts();
    println!("{} subjects, {} epochs ({lo} low, {hi} high) -> {}", cfg.n_subjects, set.len(), ctx.path(&a.out).display());
    Ok(())
}
