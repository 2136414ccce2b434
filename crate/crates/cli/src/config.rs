//! Experiment files: TOML with `[experiment]`, `[network]`, `[optimizer]`
//! and `[run]` tables. Unknown keys are rejected.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer};
use sha2::{Digest, Sha256};

use rkan_core::experiments::{OptimizerConfig, OptimizerKind, Target};
use rkan_core::layers::{LayerKind, NetworkConfig, NetworkMode, Squash};
use rkan_core::mapping::MappingKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Regression,
    LaneEmden,
    EllipticPde,
    Gradcheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Regression => "regression",
            ExperimentKind::LaneEmden => "lane-emden",
            ExperimentKind::EllipticPde => "elliptic-pde",
            ExperimentKind::Gradcheck => "gradcheck",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "regression" => Ok(ExperimentKind::Regression),
            "lane-emden" => Ok(ExperimentKind::LaneEmden),
            "elliptic-pde" => Ok(ExperimentKind::EllipticPde),
            "gradcheck" => Ok(ExperimentKind::Gradcheck),
            _ => Err(format!("unknown experiment `{s}`")),
        }
    }
}

// Enum-valued keys go through the core `FromStr` impls so the names match
// what the library prints. Errors raised here carry the TOML span.
fn parsed<'de, D, T>(d: D) -> Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    Option::<String>::deserialize(d)?
        .map(|s| s.parse().map_err(serde::de::Error::custom))
        .transpose()
}

fn degree<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
    match Option::<i64>::deserialize(d)? {
        Some(v) if v < 0 => Err(serde::de::Error::custom(format!("degree must be ≥ 0, got {v}"))),
        Some(v) => Ok(Some(v as usize)),
        None => Ok(None),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    #[serde(default)]
    network: RawNetwork,
    #[serde(default)]
    optimizer: RawOptimizer,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    #[serde(default, deserialize_with = "parsed")]
    kind: Option<ExperimentKind>,
    #[serde(default, deserialize_with = "parsed")]
    target: Option<Target>,
    w: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    #[serde(default, deserialize_with = "parsed")]
    layer: Option<LayerKind>,
    #[serde(default, rename = "K", deserialize_with = "degree")]
    k: Option<usize>,
    #[serde(default, deserialize_with = "degree")]
    p: Option<usize>,
    #[serde(default, deserialize_with = "parsed")]
    mapping: Option<MappingKind>,
    #[serde(default, deserialize_with = "parsed")]
    squash: Option<Squash>,
    architecture: Option<Vec<usize>>,
    #[serde(default, deserialize_with = "parsed")]
    mode: Option<NetworkMode>,
    input_affine: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    #[serde(default, deserialize_with = "parsed")]
    name: Option<OptimizerKind>,
    epochs: Option<usize>,
    lr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub target: Option<Target>,
    pub w: Option<u32>,
    pub network: NetworkConfig,
    pub optimizer: OptimizerConfig,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
}

fn default_epochs(kind: ExperimentKind) -> usize {
    match kind {
        ExperimentKind::Regression => 50,
        ExperimentKind::LaneEmden => 2000,
        ExperimentKind::EllipticPde => 500,
        ExperimentKind::Gradcheck => 0,
    }
}

fn default_architecture(kind: ExperimentKind) -> Vec<usize> {
    match kind {
        ExperimentKind::EllipticPde => vec![2, 10, 10, 1],
        _ => vec![1, 10, 1],
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;
    let kind = raw
        .experiment
        .kind
        .ok_or_else(|| invalid("missing key `experiment.kind`"))?;
    let target = raw.experiment.target;
    let w = raw.experiment.w;
    match kind {
        ExperimentKind::Regression if target.is_none() => return Err(invalid("regression needs `experiment.target`")),
        ExperimentKind::LaneEmden => match w {
            None => return Err(invalid("lane-emden needs `experiment.w`")),
            Some(w) if w > 4 => return Err(invalid(format!("`experiment.w` must lie in 0..=4, got {w}"))),
            _ => {}
        },
        _ => {}
    }

    let n = raw.network;
    let layer = n.layer.unwrap_or(LayerKind::JacobiRKan);
    let k = n.k.unwrap_or(2);
    let architecture = n.architecture.unwrap_or_else(|| default_architecture(kind));
    if architecture.len() < 2 || architecture.contains(&0) {
        return Err(invalid("`network.architecture` needs at least two positive widths"));
    }
    let mut network = NetworkConfig::new(layer, k, architecture);
    network.den_degree = n.p.unwrap_or(k);
    if let Some(m) = n.mapping {
        network.mapping = m;
    }
    if let Some(s) = n.squash {
        network.squash = s;
    }
    if let Some(m) = n.mode {
        network.mode = m;
    }
    network.input_affine = n.input_affine.map(|[a, b]| (a, b));
    if let Some((a, b)) = network.input_affine {
        if !(a.is_finite() && b.is_finite() && a != 0.0) {
            return Err(invalid(
                "`network.input_affine` needs a finite non-zero scale and a finite shift",
            ));
        }
    }

    let o = raw.optimizer;
    let epochs = o.epochs.unwrap_or_else(|| default_epochs(kind));
    let optimizer = match o.name.unwrap_or(OptimizerKind::Lbfgs) {
        OptimizerKind::Lbfgs => OptimizerConfig::lbfgs(epochs),
        OptimizerKind::Adam => OptimizerConfig::adam(epochs, o.lr.unwrap_or(OptimizerConfig::lbfgs(0).lr)),
    };
    if !(optimizer.lr > 0.0 && optimizer.lr.is_finite()) {
        return Err(invalid("`optimizer.lr` must be positive"));
    }

    let seeds = raw.run.seeds.unwrap_or_else(|| vec![0]);
    if seeds.is_empty() {
        return Err(invalid("`run.seeds` must not be empty"));
    }
    Ok(ExperimentConfig {
        kind,
        target,
        w,
        network,
        optimizer,
        seeds,
        out: raw.run.out,
    })
}

impl ExperimentConfig {
    /// SHA-256 over everything that determines a row except the seed list and
    /// output path, as 16 hex digits.
    pub fn hash(&self) -> String {
        let n = &self.network;
        let canon = format!(
            "{}|{:?}|{:?}|{}|{}|{}|{}|{}|{}|{:?}|{:?}|{}|{}|{:e}",
            self.kind.name(),
            self.target.map(|t| t.name()),
            self.w,
            n.layer,
            n.degree,
            n.den_degree,
            n.mapping,
            n.squash,
            n.mode,
            n.architecture,
            n.input_affine.map(|(a, b)| (a.to_bits(), b.to_bits())),
            self.optimizer.kind.name(),
            self.optimizer.epochs,
            self.optimizer.lr,
        );
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed list from `RKAN_SEED`: one integer or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, ConfigError> {
    let seeds = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|e| invalid(format!("bad seed `{t}`: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err(invalid("empty seed list"));
    }
    Ok(seeds)
}
