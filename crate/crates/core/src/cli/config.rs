//! Experiment configuration documents (JSON).
//!
//! ```json
//! {
//!   "mode": "verify-theorem",
//!   "model": {
//!     "interarrival":  {"family": "exponential", "rate": 1},
//!     "service_time":  {"family": "deterministic", "value": 1},
//!     "arrival_batch": {"family": "deterministic", "value": 1},
//!     "service_batch": {"family": "deterministic", "value": 1},
//!     "capacity": 5,
//!     "policy": "full"
//!   },
//!   "num_cycles": 200000,
//!   "seed": 1,
//!   "sweep": [1, 2, 5]
//! }
//! ```

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::{DistError, DistributionSpec};
use crate::engine::QueueModel;
use crate::stats::{
    check_lemma_conditions, check_theorem_conditions, LemmaCondition, TheoremCondition,
};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_CYCLES: usize = 100_000;
pub const DEFAULT_SAMPLES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {reason}")]
    Field { field: String, reason: String },
    #[error("{field} is required for {mode}")]
    Missing { field: &'static str, mode: Mode },
    #[error("verify-theorem: {0}")]
    Theorem(TheoremCondition),
    #[error("verify-lemma at n = {capacity}: {condition}")]
    Lemma {
        capacity: f64,
        condition: LemmaCondition,
    },
}

impl From<DistError> for ConfigError {
    fn from(e: DistError) -> Self {
        match e {
            DistError::InvalidParameter { field, reason } => ConfigError::Field { field, reason },
            other => ConfigError::Field {
                field: "distribution".into(),
                reason: other.to_string(),
            },
        }
    }
}

fn field_error(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Simulate,
    VerifyTheorem,
    VerifyLemma,
    Oracle,
    ClassifyDist,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Simulate => "simulate",
            Mode::VerifyTheorem => "verify-theorem",
            Mode::VerifyLemma => "verify-lemma",
            Mode::Oracle => "oracle",
            Mode::ClassifyDist => "classify-dist",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    #[default]
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    mode: Mode,
    model: Option<QueueModel<f64>>,
    distribution: Option<DistributionSpec<f64>>,
    grid: Option<Vec<f64>>,
    samples: Option<usize>,
    num_cycles: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    sweep: Option<Vec<f64>>,
    level: Option<f64>,
    alpha: Option<f64>,
    #[serde(default)]
    output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub model: Option<QueueModel<f64>>,
    /// Distribution examined by `classify-dist`.
    pub distribution: Option<DistributionSpec<f64>>,
    /// Mean-residual-life grid for `classify-dist`.
    pub grid: Option<Vec<f64>>,
    /// Sample count for the empirical check of `classify-dist`.
    pub samples: usize,
    pub num_cycles: usize,
    pub seed: u64,
    pub workers: usize,
    /// Capacities to run; `None` runs the model's own capacity.
    pub sweep: Option<Vec<f64>>,
    pub level: f64,
    pub alpha: f64,
    pub output: OutputSpec,
    /// Normalizations applied while parsing.
    pub warnings: Vec<String>,
}

fn normalize(
    spec: DistributionSpec<f64>,
    path: &str,
    warnings: &mut Vec<String>,
) -> DistributionSpec<f64> {
    let (spec, warning) = spec.normalized();
    if let Some(w) = warning {
        warnings.push(format!("{path}: {w}"));
    }
    spec
}

/// Parses and range-checks a configuration document. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut warnings = Vec::new();
    let model = raw.model.map(|m| QueueModel {
        interarrival: normalize(m.interarrival, "model.interarrival", &mut warnings),
        service_time: normalize(m.service_time, "model.service_time", &mut warnings),
        arrival_batch: normalize(m.arrival_batch, "model.arrival_batch", &mut warnings),
        service_batch: normalize(m.service_batch, "model.service_batch", &mut warnings),
        ..m
    });
    let distribution = raw
        .distribution
        .map(|d| normalize(d, "distribution", &mut warnings));
    for w in &warnings {
        log::warn!("{w}");
    }
    let config = ExperimentConfig {
        mode: raw.mode,
        model,
        distribution,
        grid: raw.grid,
        samples: raw.samples.unwrap_or(DEFAULT_SAMPLES),
        num_cycles: raw.num_cycles.unwrap_or(DEFAULT_CYCLES),
        seed: raw.seed.unwrap_or(0),
        workers: raw.workers.unwrap_or(1),
        sweep: raw.sweep,
        level: raw.level.unwrap_or(DEFAULT_LEVEL),
        alpha: raw.alpha.unwrap_or(DEFAULT_ALPHA),
        output: raw.output,
        warnings,
    };
    config.check_ranges()?;
    Ok(config)
}

impl ExperimentConfig {
    /// Field-level range checks, independent of the mode.
    pub fn check_ranges(&self) -> Result<(), ConfigError> {
        if let Some(m) = &self.model {
            m.validate()
                .map_err(|e| ConfigError::from(e.within("model")))?;
        }
        if let Some(d) = &self.distribution {
            d.validate()
                .map_err(|e| ConfigError::from(e.within("distribution")))?;
        }
        if self.num_cycles < 2 {
            return Err(field_error(
                "num_cycles",
                format!("must be at least 2, got {}", self.num_cycles),
            ));
        }
        if self.workers == 0 {
            return Err(field_error("workers", "must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(field_error(
                "level",
                format!("must lie in (0, 1), got {}", self.level),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(field_error(
                "alpha",
                format!("must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() {
                return Err(field_error("sweep", "must not be empty"));
            }
            if let Some(n) = sweep.iter().find(|n| !(n.is_finite() && **n > 0.0)) {
                return Err(field_error(
                    "sweep",
                    format!("capacities must be positive, got {n}"),
                ));
            }
        }
        if let Some(grid) = &self.grid {
            if let Some(x) = grid.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(field_error(
                    "grid",
                    format!("points must be nonnegative, got {x}"),
                ));
            }
        }
        if self.samples < crate::dists::MRL_MIN_SAMPLES {
            return Err(field_error(
                "samples",
                format!(
                    "must be at least {}, got {}",
                    crate::dists::MRL_MIN_SAMPLES,
                    self.samples
                ),
            ));
        }
        Ok(())
    }

    pub fn require_model(&self) -> Result<&QueueModel<f64>, ConfigError> {
        self.model.as_ref().ok_or(ConfigError::Missing {
            field: "model",
            mode: self.mode,
        })
    }

    /// The models to run, one per sweep capacity.
    pub fn sweep_models(&self) -> Result<Vec<QueueModel<f64>>, ConfigError> {
        let model = self.require_model()?;
        Ok(match &self.sweep {
            Some(caps) => caps.iter().map(|&n| model.with_capacity(n)).collect(),
            None => vec![model.clone()],
        })
    }

    /// Mode-specific hypothesis checks; each failure names the violated condition.
    pub fn validate_for_mode(&self) -> Result<(), ConfigError> {
        self.check_ranges()?;
        match self.mode {
            Mode::Simulate | Mode::Oracle => {
                self.require_model()?;
            }
            Mode::VerifyTheorem => {
                check_theorem_conditions(self.require_model()?).map_err(ConfigError::Theorem)?;
            }
            Mode::VerifyLemma => {
                for m in self.sweep_models()? {
                    check_lemma_conditions(&m).map_err(|condition| ConfigError::Lemma {
                        capacity: m.capacity,
                        condition,
                    })?;
                }
            }
            Mode::ClassifyDist => {
                if self.distribution.is_none() {
                    return Err(ConfigError::Missing {
                        field: "distribution",
                        mode: self.mode,
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {
            "interarrival": {"family": "exponential", "rate": 1},
            "service_time": {"family": "deterministic", "value": 1},
            "arrival_batch": {"family": "deterministic", "value": 1},
            "service_batch": {"family": "deterministic", "value": 1},
            "capacity": 5,
            "policy": "full"
        }
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Simulate);
        assert_eq!(c.level, 0.95);
        assert_eq!(c.alpha, 0.01);
        assert_eq!(c.workers, 1);
        assert_eq!(c.num_cycles, DEFAULT_CYCLES);
        assert_eq!(c.output.format, OutputFormat::Report);
        assert!(c.validate_for_mode().is_ok());
    }

    #[test]
    fn negative_rate_names_field() {
        let text = MINIMAL.replace(r#""rate": 1"#, r#""rate": -1"#);
        let err = parse_config(&text).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Field { field, .. } if field == "model.interarrival.rate"),
            "{err}"
        );
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let text = MINIMAL.replacen('{', r#"{"cycles": 5,"#, 1);
        match parse_config(&text).unwrap_err() {
            ConfigError::Syntax { line, message, .. } => {
                assert_eq!(line, 1);
                assert!(message.contains("cycles"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace(r#""policy": "full""#, r#""policy": "full", "k": 1"#);
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Syntax { .. })
        ));
        assert!(matches!(parse_config("{"), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn lattice_multipliers_are_normalized_with_warning() {
        let text = MINIMAL.replace(
            r#""arrival_batch": {"family": "deterministic", "value": 1}"#,
            r#""arrival_batch": {"family": "lattice", "span": 1, "multipliers": [2, 4], "probs": [0.5, 0.5]}"#,
        );
        let c = parse_config(&text).unwrap();
        assert_eq!(
            c.model.unwrap().arrival_batch,
            DistributionSpec::LatticeDiscrete {
                span: 2.0,
                multipliers: vec![1, 2],
                probs: vec![0.5, 0.5]
            }
        );
        assert_eq!(c.warnings.len(), 1);
        assert!(c.warnings[0].starts_with("model.arrival_batch"));
    }

    #[test]
    fn range_checks() {
        let text = MINIMAL.replace(r#""capacity": 5"#, r#""capacity": 0"#);
        assert!(
            matches!(parse_config(&text), Err(ConfigError::Field { field, .. }) if field == "model.capacity")
        );
        let text = MINIMAL.replacen('{', r#"{"level": 1.5,"#, 1);
        assert!(
            matches!(parse_config(&text), Err(ConfigError::Field { field, .. }) if field == "level")
        );
        let text = MINIMAL.replacen('{', r#"{"sweep": [1, -2],"#, 1);
        assert!(
            matches!(parse_config(&text), Err(ConfigError::Field { field, .. }) if field == "sweep")
        );
        let text = MINIMAL.replacen('{', r#"{"workers": 0,"#, 1);
        assert!(
            matches!(parse_config(&text), Err(ConfigError::Field { field, .. }) if field == "workers")
        );
        let text = MINIMAL.replacen('{', r#"{"alpha": 0,"#, 1);
        assert!(
            matches!(parse_config(&text), Err(ConfigError::Field { field, .. }) if field == "alpha")
        );
    }

    #[test]
    fn theorem_conditions_enforced_per_hypothesis() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.mode = Mode::VerifyTheorem;
        assert!(c.validate_for_mode().is_ok());
        let base = c.model.clone().unwrap();
        let cases = [
            (
                QueueModel {
                    interarrival: DistributionSpec::Erlang {
                        shape: 2,
                        rate: 2.0,
                    },
                    ..base.clone()
                },
                TheoremCondition::PoissonArrivals,
            ),
            (
                QueueModel {
                    service_batch: DistributionSpec::Uniform { lo: 0.5, hi: 1.5 },
                    ..base.clone()
                },
                TheoremCondition::DeterministicServiceBatch,
            ),
            (
                QueueModel {
                    arrival_batch: DistributionSpec::Exponential { rate: 1.0 },
                    ..base.clone()
                },
                TheoremCondition::LatticeArrivalBatch,
            ),
            (
                QueueModel {
                    interarrival: DistributionSpec::Exponential { rate: 0.5 },
                    ..base.clone()
                },
                TheoremCondition::MeanBalance,
            ),
        ];
        for (model, cond) in cases {
            c.model = Some(model);
            assert_eq!(c.validate_for_mode(), Err(ConfigError::Theorem(cond)));
        }
    }

    #[test]
    fn lemma_conditions_enforced_per_hypothesis() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.mode = Mode::VerifyLemma;
        let err = c.validate_for_mode().unwrap_err();
        assert!(err.to_string().contains("Y_1 must be nontrivial"), "{err}");
        let base = QueueModel {
            service_batch: DistributionSpec::LatticeDiscrete {
                span: 0.5,
                multipliers: vec![1, 3],
                probs: vec![0.5, 0.5],
            },
            interarrival: DistributionSpec::HyperExponential {
                weights: vec![0.9, 0.1],
                rates: vec![2.0, 0.25],
            },
            ..c.model.clone().unwrap()
        };
        c.model = Some(base.clone());
        assert_eq!(c.validate_for_mode(), Ok(()));
        let cases = [
            (
                QueueModel {
                    interarrival: DistributionSpec::Uniform { lo: 0.5, hi: 1.2 },
                    ..base.clone()
                },
                LemmaCondition::NwueArrivals,
            ),
            (
                QueueModel {
                    service_time: DistributionSpec::Deterministic { value: 0.5 },
                    ..base.clone()
                },
                LemmaCondition::MassRate,
            ),
            (
                QueueModel {
                    capacity: 0.5,
                    ..base.clone()
                },
                LemmaCondition::ArrivalFits,
            ),
        ];
        for (model, cond) in cases {
            c.model = Some(model);
            match c.validate_for_mode() {
                Err(ConfigError::Lemma { condition, .. }) => assert_eq!(condition, cond),
                other => panic!("{other:?}"),
            }
        }
        c.model = Some(base);
        c.sweep = Some(vec![2.0, 0.25]);
        assert!(matches!(
            c.validate_for_mode(),
            Err(ConfigError::Lemma { capacity, condition: LemmaCondition::ArrivalFits }) if capacity == 0.25
        ));
    }

    #[test]
    fn missing_sections() {
        let c = parse_config(r#"{"mode": "classify-dist"}"#).unwrap();
        assert!(matches!(
            c.validate_for_mode(),
            Err(ConfigError::Missing {
                field: "distribution",
                ..
            })
        ));
        let c = parse_config(r#"{"mode": "oracle"}"#).unwrap();
        assert!(matches!(
            c.validate_for_mode(),
            Err(ConfigError::Missing { field: "model", .. })
        ));
    }
}
