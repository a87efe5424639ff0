//! Run configuration: a flat JSON object holding the run keys plus every
//! training hyperparameter.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use timelowfer::{EncoderKind, Error, Result, TrainConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointPolicy {
    /// Keep the checkpoint with the best validation MRR.
    Best,
    /// Save every N epochs (and after the final epoch).
    Every(usize),
    Last,
}

impl FromStr for CheckpointPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" => Ok(Self::Best),
            "last" => Ok(Self::Last),
            _ => s
                .strip_prefix("every-")
                .and_then(|n| n.parse().ok())
                .filter(|&n| n > 0)
                .map(Self::Every)
                .ok_or_else(|| Error::Config(format!("checkpoint policy must be best, last or every-N, got `{s}`"))),
        }
    }
}

impl std::fmt::Display for CheckpointPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Best => f.write_str("best"),
            Self::Every(n) => write!(f, "every-{n}"),
            Self::Last => f.write_str("last"),
        }
    }
}

impl Serialize for CheckpointPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CheckpointPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub eval_interval: usize,
    pub checkpoint: CheckpointPolicy,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            output: None,
            eval_interval: 1,
            checkpoint: CheckpointPolicy::Best,
            train: TrainConfig::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(config_err)?;
        let Value::Object(mut map) = value else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let mut run = Self::default();
        let mut take = |key: &str| map.remove(key);
        if let Some(v) = take("dataset") {
            run.dataset = serde_json::from_value(v).map_err(config_err)?;
        }
        if let Some(v) = take("output") {
            run.output = serde_json::from_value(v).map_err(config_err)?;
        }
        if let Some(v) = take("eval_interval") {
            run.eval_interval = serde_json::from_value(v).map_err(config_err)?;
        }
        if let Some(v) = take("checkpoint") {
            run.checkpoint = serde_json::from_value(v).map_err(config_err)?;
        }
        run.train = serde_json::from_value(Value::Object(map)).map_err(config_err)?;
        Ok(run)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be >= 1".into()));
        }
        if self.dataset.is_none() {
            return Err(Error::Config("no dataset given (--dataset or `dataset` in the config)".into()));
        }
        if self.output.is_none() {
            return Err(Error::Config("no output directory given (--out or `output` in the config)".into()));
        }
        self.train.validate()
    }
}

/// Flag values that override the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub encoder: Option<EncoderKind>,
    #[arg(long)]
    pub time_rate: Option<usize>,
    #[arg(long)]
    pub d_e: Option<usize>,
    #[arg(long)]
    pub d_r: Option<usize>,
    #[arg(long)]
    pub d_t: Option<usize>,
    /// Sets d_e, d_r and d_t together.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub label_smoothing: Option<f64>,
    #[arg(long)]
    pub input_dropout: Option<f64>,
    #[arg(long)]
    pub hidden_dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    /// best, last or every-N.
    #[arg(long)]
    pub checkpoint: Option<CheckpointPolicy>,
}

impl Overrides {
    pub fn apply(&self, run: &mut RunConfig) {
        let t = &mut run.train;
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        if let Some(d) = self.dim {
            t.d_e = d;
            t.d_r = d;
            t.d_t = d;
        }
        set!(
            seed => t.seed,
            variant => t.variant,
            encoder => t.encoder,
            time_rate => t.time_sampling_rate,
            d_e => t.d_e,
            d_r => t.d_r,
            d_t => t.d_t,
            k => t.k,
            lr => t.lr,
            decay => t.decay,
            batch_size => t.batch_size,
            label_smoothing => t.label_smoothing,
            input_dropout => t.input_dropout,
            hidden_dropout => t.hidden_dropout,
            epochs => t.epochs,
            eval_interval => run.eval_interval,
            checkpoint => run.checkpoint,
        );
        if self.patience.is_some() {
            t.patience = self.patience;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_parse() {
        assert_eq!("best".parse::<CheckpointPolicy>().unwrap(), CheckpointPolicy::Best);
        assert_eq!("every-5".parse::<CheckpointPolicy>().unwrap(), CheckpointPolicy::Every(5));
        assert!("every-0".parse::<CheckpointPolicy>().is_err());
        assert!("sometimes".parse::<CheckpointPolicy>().is_err());
    }

    #[test]
    fn flat_json_round_trip() {
        let run = RunConfig::from_json(r#"{"dataset": "d", "checkpoint": "every-2", "variant": "tnt", "k": 4}"#).unwrap();
        assert_eq!(run.checkpoint, CheckpointPolicy::Every(2));
        assert_eq!(run.train.variant, Variant::Tnt);
        assert_eq!(run.train.k, 4);
        let again = RunConfig::from_json(&run.to_json().unwrap()).unwrap();
        assert_eq!(again, run);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"learning_rate": 0.1}"#).is_err());
        assert!(RunConfig::from_json("[1, 2]").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let mut run = RunConfig::from_json(r#"{"lr": 0.5, "epochs": 3}"#).unwrap();
        let o = Overrides {
            lr: Some(0.1),
            dim: Some(16),
            ..Overrides::default()
        };
        o.apply(&mut run);
        assert_eq!(run.train.lr, 0.1);
        assert_eq!(run.train.epochs, 3);
        assert_eq!((run.train.d_e, run.train.d_r, run.train.d_t), (16, 16, 16));
    }
}
