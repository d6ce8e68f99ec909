use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::events::EventFormat;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::reservoir::{DistanceKind, SamplingRule, UpdatePolicy};

/// Streaming arm: which parts of the online update are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Distance-weighted sampling plus forced inclusion of novel sessions.
    #[default]
    Full,
    /// No online update at all.
    Static,
    /// Uniform sampling, no forced inclusion.
    RanUni,
    /// Forced inclusion, uniform sampling for the rest.
    FixNew,
    /// Distance-weighted sampling, no forced inclusion.
    WassUni,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::Static,
        Variant::RanUni,
        Variant::FixNew,
        Variant::WassUni,
    ];

    /// The update policy of this arm, or `None` when updates are disabled.
    pub fn policy(self, distance: DistanceKind) -> Option<UpdatePolicy> {
        let weighted = SamplingRule::Weighted(distance);
        let (forced_inclusion, sampling) = match self {
            Variant::Static => return None,
            Variant::Full => (true, weighted),
            Variant::RanUni => (false, SamplingRule::Uniform),
            Variant::FixNew => (true, SamplingRule::Uniform),
            Variant::WassUni => (false, weighted),
        };
        Some(UpdatePolicy {
            forced_inclusion,
            sampling,
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" | "gag" => Ok(Variant::Full),
            "static" | "gag_static" => Ok(Variant::Static),
            "ran_uni" | "gag_ranuni" => Ok(Variant::RanUni),
            "fix_new" | "gag_fixnew" => Ok(Variant::FixNew),
            "wass_uni" | "gag_wassuni" => Ok(Variant::WassUni),
            other => Err(Error::config(
                "variant",
                format!("unknown variant `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::Static => "static",
            Variant::RanUni => "ran_uni",
            Variant::FixNew => "fix_new",
            Variant::WassUni => "wass_uni",
        })
    }
}

/// Recommender evaluated by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Gag,
    Pop,
    Spop,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gag" => Ok(Method::Gag),
            "pop" => Ok(Method::Pop),
            "spop" | "s_pop" => Ok(Method::Spop),
            other => Err(Error::config("method", format!("unknown method `{other}`"))),
        }
    }
}

/// Everything a streaming run needs. Mirrored 1:1 by a flat `key = value`
/// file and by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Event log or corpus file.
    pub dataset: PathBuf,
    pub format: EventFormat,
    pub session_gap_hours: f64,
    pub top_n_items: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub offline_epochs: usize,
    /// Offline training stops once an epoch improves the mean loss by less
    /// than this fraction.
    pub plateau_tolerance: f64,
    pub online_epochs: usize,
    pub reservoir_capacity_divisor: usize,
    pub window_divisor: usize,
    pub distance_kind: DistanceKind,
    pub variant: Variant,
    pub method: Method,
    /// Keep counting clicks for POP/S-POP while streaming.
    pub pop_online: bool,
    pub ks: Vec<usize>,
    pub rng_seed: u64,
    pub train_frac: f64,
    pub num_chunks: usize,
    pub edge_out_uses_receiver: bool,
    /// Start from this checkpoint instead of training offline.
    pub checkpoint: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        RunConfig {
            dataset: PathBuf::new(),
            format: EventFormat::Triples,
            session_gap_hours: 8.0,
            top_n_items: 10_000,
            embed_dim: model.embed_dim,
            num_layers: model.num_layers,
            learning_rate: model.learning_rate,
            batch_size: model.batch_size,
            offline_epochs: 10,
            plateau_tolerance: 1e-3,
            online_epochs: 1,
            reservoir_capacity_divisor: 100,
            window_divisor: 2,
            distance_kind: DistanceKind::Wasserstein,
            variant: Variant::Full,
            method: Method::Gag,
            pop_online: false,
            ks: vec![5, 10, 20],
            rng_seed: 0,
            train_frac: 0.6,
            num_chunks: 5,
            edge_out_uses_receiver: false,
            checkpoint: None,
            output: PathBuf::from("reports.jsonl"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(
            key,
            format!("expected a boolean, got `{value}`"),
        )),
    }
}

impl RunConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            num_layers: self.num_layers,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            rng_seed: self.rng_seed,
            edge_out_uses_receiver: self.edge_out_uses_receiver,
        }
    }

    pub fn session_gap_secs(&self) -> i64 {
        (self.session_gap_hours * 3600.0).round() as i64
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if self.reservoir_capacity_divisor == 0 {
            return Err(Error::config(
                "reservoir_capacity_divisor",
                "must be at least 1",
            ));
        }
        if self.window_divisor == 0 {
            return Err(Error::config("window_divisor", "must be at least 1"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::config(
                "ks",
                "cutoffs must be positive and non-empty",
            ));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::config(
                "train_frac",
                "must lie strictly between 0 and 1",
            ));
        }
        if self.num_chunks == 0 {
            return Err(Error::config("num_chunks", "must be at least 1"));
        }
        if !(self.session_gap_hours.is_finite() && self.session_gap_hours >= 0.0) {
            return Err(Error::config("session_gap_hours", "must be non-negative"));
        }
        if self.top_n_items == 0 {
            return Err(Error::config("top_n_items", "must be at least 1"));
        }
        if self.plateau_tolerance.is_nan() || self.plateau_tolerance < 0.0 {
            return Err(Error::config("plateau_tolerance", "must be non-negative"));
        }
        Ok(())
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        match k {
            "dataset" => self.dataset = PathBuf::from(value),
            "format" => self.format = value.parse()?,
            "session_gap_hours" => self.session_gap_hours = parse(k, value)?,
            "top_n_items" => self.top_n_items = parse(k, value)?,
            "embed_dim" => self.embed_dim = parse(k, value)?,
            "num_layers" => self.num_layers = parse(k, value)?,
            "learning_rate" => self.learning_rate = parse(k, value)?,
            "batch_size" => self.batch_size = parse(k, value)?,
            "offline_epochs" => self.offline_epochs = parse(k, value)?,
            "plateau_tolerance" => self.plateau_tolerance = parse(k, value)?,
            "online_epochs" => self.online_epochs = parse(k, value)?,
            "reservoir_capacity_divisor" => self.reservoir_capacity_divisor = parse(k, value)?,
            "window_divisor" => self.window_divisor = parse(k, value)?,
            "distance_kind" => self.distance_kind = value.parse()?,
            "variant" => self.variant = value.parse()?,
            "method" => self.method = value.parse()?,
            "pop_online" => self.pop_online = parse_bool(k, value)?,
            "ks" => {
                self.ks = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(k, s.trim()))
                    .collect::<Result<_>>()?
            }
            "rng_seed" | "seed" => self.rng_seed = parse("rng_seed", value)?,
            "train_frac" => self.train_frac = parse(k, value)?,
            "num_chunks" => self.num_chunks = parse(k, value)?,
            "edge_out_uses_receiver" => self.edge_out_uses_receiver = parse_bool(k, value)?,
            "checkpoint" => {
                self.checkpoint = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "output" => self.output = PathBuf::from(value),
            _ => return Err(Error::config(k, "unknown configuration key")),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Loads a config file: either a flat key-value file or a run manifest
    /// (JSON with a `config` object), which makes manifests replayable.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let config = value.get("config").cloned().unwrap_or(value);
            return Ok(serde_json::from_value(config)?);
        }
        let mut config = RunConfig::default();
        config.apply_kv_str(&text)?;
        Ok(config)
    }

    /// The flat `key = value` form understood by [`RunConfig::apply_kv_str`].
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("dataset", self.dataset.display().to_string());
        line(
            "format",
            serde_json::to_value(self.format)
                .unwrap()
                .as_str()
                .unwrap()
                .into(),
        );
        line("session_gap_hours", self.session_gap_hours.to_string());
        line("top_n_items", self.top_n_items.to_string());
        line("embed_dim", self.embed_dim.to_string());
        line("num_layers", self.num_layers.to_string());
        line("learning_rate", self.learning_rate.to_string());
        line("batch_size", self.batch_size.to_string());
        line("offline_epochs", self.offline_epochs.to_string());
        line("plateau_tolerance", self.plateau_tolerance.to_string());
        line("online_epochs", self.online_epochs.to_string());
        line(
            "reservoir_capacity_divisor",
            self.reservoir_capacity_divisor.to_string(),
        );
        line("window_divisor", self.window_divisor.to_string());
        line("distance_kind", self.distance_kind.to_string());
        line("variant", self.variant.to_string());
        line(
            "method",
            serde_json::to_value(self.method)
                .unwrap()
                .as_str()
                .unwrap()
                .into(),
        );
        line("pop_online", self.pop_online.to_string());
        line(
            "ks",
            self.ks
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        line("rng_seed", self.rng_seed.to_string());
        line("train_frac", self.train_frac.to_string());
        line("num_chunks", self.num_chunks.to_string());
        line(
            "edge_out_uses_receiver",
            self.edge_out_uses_receiver.to_string(),
        );
        line(
            "checkpoint",
            self.checkpoint
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        line("output", self.output.display().to_string());
        out
    }
}
