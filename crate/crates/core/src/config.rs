//! Pipeline configuration: defaults, overlaid by an INI file, overlaid by flags.
//!
//! ```ini
//! [paths]
//! corpus = data/corpus.jsonl
//! embeddings = data/vectors.txt
//! out = run
//!
//! [lfn]
//! replacement_ratio = 0.15
//! dynamic = true
//!
//! [scorer]
//! kind = native
//! order = 3
//! k = 0.01
//!
//! [train]
//! steps = 800
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use thiserror::Error;

use crate::contrast::{CodecMode, DenominatorMode, ModelConfig, TrainConfig};
use crate::lfn::LfnConfig;

#[derive(Debug, Error)]
#[error("invalid config: {field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: &str, reason: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub lm: Option<PathBuf>,
    pub negatives: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScorerKind {
    #[default]
    Native,
    External,
}

impl FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "native" => Ok(Self::Native),
            "external" => Ok(Self::External),
            other => Err(format!("expected native or external, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    pub order: usize,
    pub k: f64,
    /// Whitespace-separated argv of an external scorer.
    pub command: Option<String>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            kind: ScorerKind::Native,
            order: 3,
            k: 0.01,
            command: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub lfn: LfnConfig,
    pub scorer: ScorerConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub ratios: Vec<f64>,
    /// Fraction of documents held out from `train`, taken from the end.
    pub holdout: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            lfn: LfnConfig::default(),
            scorer: ScorerConfig::default(),
            train: TrainConfig::default(),
            model: ModelConfig::new(0),
            ratios: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            holdout: 0.0,
        }
    }
}

fn parse<T: FromStr>(field: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| ConfigError::new(field, format!("cannot parse `{raw}`: {e}")))
}

fn parse_mode<T>(field: &str, raw: &str, options: &[(&str, T)]) -> Result<T, ConfigError>
where
    T: Copy,
{
    options
        .iter()
        .find(|(name, _)| *name == raw.trim())
        .map(|(_, v)| *v)
        .ok_or_else(|| ConfigError::new(field, format!("unknown value `{raw}`")))
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_file(path).map_err(|e| ConfigError::new("config", e.to_string()))?;
        let mut cfg = Self::default();
        cfg.apply_ini(&ini)?;
        Ok(cfg)
    }

    pub fn from_ini_str(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
        let mut cfg = Self::default();
        cfg.apply_ini(&ini)?;
        Ok(cfg)
    }

    fn apply_ini(&mut self, ini: &Ini) -> Result<(), ConfigError> {
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                self.set(&format!("{section}.{key}"), value)?;
            }
        }
        Ok(())
    }

    /// Sets one `section.key` field from its textual value.
    pub fn set(&mut self, field: &str, v: &str) -> Result<(), ConfigError> {
        let path = || Some(PathBuf::from(v.trim()));
        match field {
            "paths.corpus" => self.paths.corpus = path(),
            "paths.embeddings" => self.paths.embeddings = path(),
            "paths.out" => self.paths.out = path(),
            "paths.lm" => self.paths.lm = path(),
            "paths.negatives" => self.paths.negatives = path(),
            "paths.checkpoint" => self.paths.checkpoint = path(),
            "lfn.max_iterations" => self.lfn.max_iterations = parse(field, v)?,
            "lfn.max_span_length" => self.lfn.max_span_length = parse(field, v)?,
            "lfn.rank_topk" => self.lfn.rank_topk = parse(field, v)?,
            "lfn.replace_topk" => self.lfn.replace_topk = parse(field, v)?,
            "lfn.replacement_ratio" => self.lfn.replacement_ratio = parse(field, v)?,
            "lfn.seed" => self.lfn.seed = parse(field, v)?,
            "lfn.dynamic" => self.lfn.dynamic = parse(field, v)?,
            "lfn.literal_argmin" => self.lfn.literal_argmin = parse(field, v)?,
            "scorer.kind" => self.scorer.kind = parse(field, v)?,
            "scorer.order" => self.scorer.order = parse(field, v)?,
            "scorer.k" => self.scorer.k = parse(field, v)?,
            "scorer.command" => self.scorer.command = Some(v.trim().to_string()),
            "train.gamma" => self.train.gamma = parse(field, v)?,
            "train.k" => self.train.k = parse(field, v)?,
            "train.eta" => self.train.eta = parse(field, v)?,
            "train.lambda_enc" => self.train.lambda_enc = parse(field, v)?,
            "train.lambda_dec" => self.train.lambda_dec = parse(field, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(field, v)?,
            "train.steps" => self.train.steps = parse(field, v)?,
            "train.batch_size" => self.train.batch_size = parse(field, v)?,
            "train.seed" => self.train.seed = parse(field, v)?,
            "train.max_grad_norm" => {
                self.train.max_grad_norm = match v.trim() {
                    "none" | "" => None,
                    _ => Some(parse(field, v)?),
                }
            }
            "train.denominator_mode" => {
                self.train.denominator_mode = parse_mode(
                    field,
                    v,
                    &[
                        ("standard", DenominatorMode::Standard),
                        ("literal", DenominatorMode::Literal),
                    ],
                )?
            }
            "train.codec_mode" => {
                self.train.codec_mode = parse_mode(field, v, &[("pm", CodecMode::Pm), ("vanilla", CodecMode::Vanilla)])?
            }
            "train.embed_dim" => self.model.embed_dim = parse(field, v)?,
            "train.max_len" => self.model.max_len = parse(field, v)?,
            "train.init_scale" => self.model.init_scale = parse(field, v)?,
            "train.holdout" => self.holdout = parse(field, v)?,
            "sweep.ratios" => self.ratios = v.split(',').map(|r| parse(field, r)).collect::<Result<Vec<f64>, _>>()?,
            other => return Err(ConfigError::new(other, "unknown key")),
        }
        Ok(())
    }

    /// Numeric range checks shared by every subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.lfn
            .validate()
            .map_err(|e| ConfigError::new(&format!("lfn.{}", lfn_field(&e)), "out of range"))?;
        self.train.validate().map_err(|e| match e {
            crate::contrast::ContrastError::InvalidConfig(f) => ConfigError::new(&format!("train.{f}"), "out of range"),
            other => ConfigError::new("train", other.to_string()),
        })?;
        if self.scorer.order < 1 {
            return Err(ConfigError::new("scorer.order", "must be at least 1"));
        }
        if !(self.scorer.k >= 0.0) {
            return Err(ConfigError::new("scorer.k", "must be non-negative"));
        }
        if self.model.embed_dim < 1 {
            return Err(ConfigError::new("train.embed_dim", "must be at least 1"));
        }
        if self.model.max_len < 1 {
            return Err(ConfigError::new("train.max_len", "must be at least 1"));
        }
        if !(self.model.init_scale > 0.0) {
            return Err(ConfigError::new("train.init_scale", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(ConfigError::new("train.holdout", "must lie in [0, 1)"));
        }
        let increasing = self.ratios.windows(2).all(|w| w[0] < w[1]);
        if self.ratios.is_empty() || !increasing || self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(ConfigError::new(
                "sweep.ratios",
                "must be strictly increasing within [0, 1]",
            ));
        }
        Ok(())
    }

    /// The path for `field`, which must be set and exist.
    pub fn require_existing(&self, field: &str) -> Result<&Path, ConfigError> {
        let p = self.path(field).ok_or_else(|| ConfigError::new(field, "not set"))?;
        if !p.exists() {
            return Err(ConfigError::new(field, format!("{} does not exist", p.display())));
        }
        Ok(p)
    }

    /// The path for `field`, which must be set.
    pub fn require(&self, field: &str) -> Result<&Path, ConfigError> {
        self.path(field).ok_or_else(|| ConfigError::new(field, "not set"))
    }

    fn path(&self, field: &str) -> Option<&Path> {
        let p = match field {
            "paths.corpus" => &self.paths.corpus,
            "paths.embeddings" => &self.paths.embeddings,
            "paths.out" => &self.paths.out,
            "paths.lm" => &self.paths.lm,
            "paths.negatives" => &self.paths.negatives,
            "paths.checkpoint" => &self.paths.checkpoint,
            _ => return None,
        };
        p.as_deref()
    }

    /// The external scorer argv, split on whitespace.
    pub fn scorer_argv(&self) -> Result<Vec<String>, ConfigError> {
        let cmd = self
            .scorer
            .command
            .as_deref()
            .ok_or_else(|| ConfigError::new("scorer.command", "required for an external scorer"))?;
        let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
        if argv.is_empty() {
            return Err(ConfigError::new("scorer.command", "empty command"));
        }
        Ok(argv)
    }
}

fn lfn_field(e: &crate::lfn::LfnError) -> String {
    match e {
        crate::lfn::LfnError::InvalidConfig(f) => f.clone(),
        _ => "config".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ini_overrides_defaults() {
        let cfg = PipelineConfig::from_ini_str(
            "[paths]\ncorpus = c.jsonl\n[lfn]\nreplacement_ratio = 0.3\ndynamic = true\n[train]\ncodec_mode = vanilla\nmax_grad_norm = none\n[sweep]\nratios = 0, 0.5, 1\n",
        )
        .unwrap();
        assert_eq!(cfg.paths.corpus.as_deref(), Some(Path::new("c.jsonl")));
        assert_eq!(cfg.lfn.replacement_ratio, 0.3);
        assert!(cfg.lfn.dynamic);
        assert_eq!(cfg.train.codec_mode, CodecMode::Vanilla);
        assert_eq!(cfg.train.max_grad_norm, None);
        assert_eq!(cfg.ratios, [0.0, 0.5, 1.0]);
        assert_eq!(cfg.train.gamma, 0.1);
    }

    #[test]
    fn bad_values_name_their_field() {
        let e = PipelineConfig::from_ini_str("[lfn]\nrank_topk = many\n").unwrap_err();
        assert_eq!(e.field, "lfn.rank_topk");
        let e = PipelineConfig::from_ini_str("[train]\nwat = 1\n").unwrap_err();
        assert_eq!(e.field, "train.wat");
        let mut cfg = PipelineConfig::default();
        cfg.train.gamma = 0.0;
        assert_eq!(cfg.validate().unwrap_err().field, "train.gamma");
        cfg = PipelineConfig::default();
        cfg.lfn.replacement_ratio = 2.0;
        assert_eq!(cfg.validate().unwrap_err().field, "lfn.replacement_ratio");
        assert_eq!(cfg.require_existing("paths.corpus").unwrap_err().field, "paths.corpus");
    }
}
