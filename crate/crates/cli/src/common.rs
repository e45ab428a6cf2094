use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nocisense::features::{read_feature_matrix, write_feature_matrix, FeatureExtractor, Profile};
use nocisense::ingest::{read_epoch_cache, write_epoch_cache};
use nocisense::{EpochSet, FeatureConfig, FeatureMatrix};

/// Feature config files carry this version.
pub const CONFIG_VERSION: i64 = 1;

/// Bad invocation: exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Global context shared by subcommands.
pub struct Ctx {
    pub data_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Ctx {
    /// Relative paths resolve against the data directory when one is set.
    pub fn path(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn seed_or(&self, default: u64) -> u64 {
        self.seed.unwrap_or(default)
    }
}

/// Reproducibility header, on standard error.
pub fn header(command: &str, manifest_hash: &str, seed: u64) {
    eprintln!("nocisense {} {command}: manifest {manifest_hash} seed {seed}", env!("CARGO_PKG_VERSION"));
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn read_epochs(path: &Path) -> Result<EpochSet> {
    read_epoch_cache(open(path)?).with_context(|| format!("reading epoch cache {}", path.display()))
}

pub fn write_epochs(set: &EpochSet, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_epoch_cache(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    read_feature_matrix(open(path)?).with_context(|| format!("reading features {}", path.display()))
}

pub fn write_features(m: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_feature_matrix(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Loads a versioned TOML feature config, or the profile's defaults.
pub fn feature_config(path: Option<&Path>, profile: Profile) -> Result<FeatureConfig> {
    let Some(path) = path else {
        return Ok(FeatureConfig::for_profile(profile));
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    match table.remove("version") {
        None => {}
        Some(toml::Value::Integer(CONFIG_VERSION)) => {}
        Some(v) => anyhow::bail!("{}: unsupported config version {v}", path.display()),
    }
    Ok(FeatureConfig::from_toml(&toml::to_string(&table)?)?)
}

pub fn config_text(cfg: &FeatureConfig) -> String {
    format!("version = {CONFIG_VERSION}\n{}", cfg.to_toml())
}

pub fn extractor(cfg: FeatureConfig) -> Result<FeatureExtractor> {
    Ok(FeatureExtractor::new(cfg)?)
}
