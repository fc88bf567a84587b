use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volcast::data::{SplitRatios, SvSimParams, ValueKind};
use volcast::dsvm::ModelConfig;
use volcast::garch::Variant;
use volcast::nn::AdamConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub n_series: usize,
    pub length: usize,
    pub sv: SvSimParams,
    /// First business day of the synthetic calendar.
    pub start_date: String,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n_series: 50,
            length: 1500,
            sv: SvSimParams {
                mu: -1.0,
                ar_phi: 0.95,
                sigma_z: 0.2,
                rho: -0.4,
            },
            start_date: "2001-01-02".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub valid_every: usize,
    pub valid_samples: usize,
    pub clip_norm: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 300,
            adam: AdamConfig::default(),
            valid_every: 1,
            valid_samples: 1,
            clip_norm: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Span {
    /// Observations after the last validation window.
    Test,
    /// Every index with enough history.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastSection {
    pub models: Vec<String>,
    pub samples: usize,
    pub analytic: bool,
    pub span: Span,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            models: vec!["dsvm".into()],
            samples: 1000,
            analytic: false,
            span: Span::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    pub window: usize,
    pub p: usize,
    pub q: usize,
    pub starts: usize,
    pub warm_start: bool,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            window: 1000,
            p: 1,
            q: 1,
            starts: 3,
            warm_start: true,
        }
    }
}

/// Fully resolved run configuration. Every field has a default except the
/// seed, which must come from the file or `--seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub forecasts: Option<PathBuf>,
    pub threads: Option<usize>,
    pub value_kind: ValueKind,
    /// Sequence length `T`.
    pub window: usize,
    pub stride: usize,
    pub split: SplitRatios,
    pub model: ModelConfig,
    pub simulate: SimulateSection,
    pub train: TrainSection,
    pub forecast: ForecastSection,
    pub baseline: BaselineSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            data: None,
            out: None,
            checkpoint: None,
            forecasts: None,
            threads: None,
            value_kind: ValueKind::Return,
            window: 10,
            stride: 1,
            split: SplitRatios::default(),
            model: ModelConfig::default(),
            simulate: SimulateSection::default(),
            train: TrainSection::default(),
            forecast: ForecastSection::default(),
            baseline: BaselineSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub forecasts: Option<PathBuf>,
    pub models: Option<Vec<String>>,
    pub window: Option<usize>,
    pub samples: Option<usize>,
    pub threads: Option<usize>,
    pub stride: Option<usize>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
}

pub const MODEL_TAGS: [&str; 5] = ["dsvm", "garch", "gjr", "tgarch", "egarch"];

/// Parses a model tag into `None` for the DSVM or the GARCH variant.
pub fn model_variant(tag: &str) -> Result<Option<Variant>, CliError> {
    if tag == "dsvm" {
        return Ok(None);
    }
    tag.parse::<Variant>()
        .map(Some)
        .map_err(|_| CliError::config(format!("unknown model {tag:?}; expected one of {}", MODEL_TAGS.join("|"))))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    /// Reads `path` (if any) and applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text)?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        let set = |dst: &mut Option<PathBuf>, src: &Option<PathBuf>| {
            if src.is_some() {
                dst.clone_from(src);
            }
        };
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        set(&mut self.data, &o.data);
        set(&mut self.out, &o.out);
        set(&mut self.checkpoint, &o.checkpoint);
        set(&mut self.forecasts, &o.forecasts);
        if let Some(m) = &o.models {
            self.forecast.models.clone_from(m);
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        if let Some(v) = o.window {
            self.window = v;
        }
        if let Some(v) = o.samples {
            self.forecast.samples = v;
        }
        if let Some(v) = o.stride {
            self.stride = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.batch {
            self.train.batch_size = v;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seed.is_none() {
            return Err(CliError::config("a seed is required (--seed or \"seed\" in the config)"));
        }
        let positive = [
            ("window", self.window),
            ("stride", self.stride),
            ("forecast.samples", self.forecast.samples),
            ("train.batch_size", self.train.batch_size),
            ("train.epochs", self.train.epochs),
            ("train.valid_every", self.train.valid_every),
            ("train.valid_samples", self.train.valid_samples),
            ("baseline.window", self.baseline.window),
            ("baseline.starts", self.baseline.starts),
            ("simulate.n_series", self.simulate.n_series),
            ("simulate.length", self.simulate.length),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(CliError::config(format!("{name} must be positive")));
        }
        if self.threads == Some(0) {
            return Err(CliError::config("threads must be positive"));
        }
        self.split.validate().map_err(CliError::from_config)?;
        self.model.validate().map_err(CliError::from_config)?;
        self.simulate.sv.validate().map_err(CliError::from_config)?;
        chrono::NaiveDate::parse_from_str(&self.simulate.start_date, "%Y-%m-%d")
            .map_err(|e| CliError::config(format!("simulate.start_date: {e}")))?;
        if self.forecast.models.is_empty() {
            return Err(CliError::config("forecast.models is empty"));
        }
        for m in &self.forecast.models {
            model_variant(m)?;
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
