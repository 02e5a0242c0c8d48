//! Run configuration: defaults, overridden by a TOML file, overridden by
//! command-line flags. The resolved result is echoed to every manifest.

use std::path::Path;

use logltn::experiments::{ClusterOptions, DigitAddOptions};
use logltn::graph::Precision;
use logltn::semantics::{Schedule, SemanticsConfig, SemanticsKind};
use logltn::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A constant or a linear ramp. `steps` defaults to the last training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Constant(f64),
    Linear {
        start: f64,
        end: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<usize>,
    },
}

impl ScheduleSpec {
    fn resolve(self, train_steps: usize) -> Schedule {
        match self {
            ScheduleSpec::Constant(v) => Schedule::Constant(v),
            ScheduleSpec::Linear { start, end, steps } => Schedule::Linear {
                start,
                end,
                total_steps: steps.unwrap_or(train_steps.saturating_sub(1)),
            },
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub semantics: SemanticsSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub task: TaskSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticsSection {
    pub kind: Option<String>,
    pub alpha: Option<ScheduleSpec>,
    pub p: Option<ScheduleSpec>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub precision: Option<String>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub name: Option<String>,
    /// Dataset for a knowledgebase file: `clustering` or `digitadd`.
    pub data: Option<String>,
    pub points: Option<usize>,
    pub clusters: Option<usize>,
    pub dim: Option<usize>,
    pub spread: Option<f64>,
    pub min_separation: Option<f64>,
    pub percentile: Option<f64>,
    pub train_samples: Option<usize>,
    pub hidden: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }
}

/// Values given on the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub task: Option<String>,
    pub semantics: Option<String>,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub precision: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Clustering,
    DigitAdd,
}

impl Dataset {
    pub fn name(self) -> &'static str {
        match self {
            Dataset::Clustering => "clustering",
            Dataset::DigitAdd => "digitadd",
        }
    }

    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "clustering" | "cluster" => Ok(Dataset::Clustering),
            "digitadd" | "digit-add" => Ok(Dataset::DigitAdd),
            _ => Err(CliError::Invalid(format!("unknown dataset `{s}`"))),
        }
    }
}

/// Fully resolved run settings.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub semantics: EffSemantics,
    pub train: EffTrain,
    pub task: EffTask,
}

#[derive(Debug, Clone, Serialize)]
pub struct EffSemantics {
    pub kind: String,
    pub alpha: ScheduleSpec,
    pub p: ScheduleSpec,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EffTrain {
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub precision: String,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EffTask {
    pub name: String,
    pub data: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kb_file: Option<String>,
    pub points: usize,
    pub clusters: usize,
    pub dim: usize,
    pub spread: f64,
    pub min_separation: f64,
    pub percentile: f64,
    pub train_samples: usize,
    pub hidden: Vec<usize>,
}

impl Effective {
    pub fn resolve(file: &FileConfig, cli: &Overrides) -> Result<Self, CliError> {
        let task_name = cli
            .task
            .clone()
            .or_else(|| file.task.name.clone())
            .ok_or_else(|| CliError::Invalid("no task given (use --task or task.name)".into()))?;
        let (data, kb_file) = match Dataset::parse(&task_name) {
            Ok(d) => (d, None),
            Err(_) => {
                let data = Dataset::parse(file.task.data.as_deref().unwrap_or("clustering"))?;
                (data, Some(task_name.clone()))
            }
        };
        let kind_name = cli
            .semantics
            .clone()
            .or_else(|| file.semantics.kind.clone())
            .unwrap_or_else(|| "logltn".into());
        let kind: SemanticsKind = kind_name.parse().map_err(|e| CliError::Invalid(format!("{e}")))?;

        let (def_steps, def_lr) = match data {
            Dataset::Clustering => (1000, 0.002),
            Dataset::DigitAdd => (500, 0.001),
        };
        let t = &file.train;
        let train = EffTrain {
            steps: cli.steps.or(t.steps).unwrap_or(def_steps),
            learning_rate: cli.learning_rate.or(t.learning_rate).unwrap_or(def_lr),
            batch_size: cli.batch_size.or(t.batch_size),
            seed: cli.seed.or(t.seed).unwrap_or(0),
            precision: cli
                .precision
                .clone()
                .or_else(|| t.precision.clone())
                .unwrap_or_else(|| "f64".into()),
            beta1: t.beta1.unwrap_or(0.9),
            beta2: t.beta2.unwrap_or(0.999),
            adam_eps: t.adam_eps.unwrap_or(1e-8),
        };
        parse_precision(&train.precision)?;

        let defaults = SemanticsConfig::new(kind, train.steps);
        let as_spec = |s: Schedule| match s {
            Schedule::Constant(v) => ScheduleSpec::Constant(v),
            Schedule::Linear {
                start,
                end,
                total_steps,
            } => ScheduleSpec::Linear {
                start,
                end,
                steps: Some(total_steps),
            },
        };
        let fill = |s: ScheduleSpec| as_spec(s.resolve(train.steps));
        let semantics = EffSemantics {
            kind: kind.name().to_string(),
            alpha: file
                .semantics
                .alpha
                .map(fill)
                .unwrap_or_else(|| as_spec(defaults.alpha)),
            p: file.semantics.p.map(fill).unwrap_or_else(|| as_spec(defaults.p)),
            epsilon: file.semantics.epsilon.unwrap_or(defaults.epsilon),
        };

        let c = ClusterOptions::default();
        let d = DigitAddOptions::default();
        let k = &file.task;
        let task = EffTask {
            name: task_name,
            data: data.name().into(),
            kb_file,
            points: k.points.unwrap_or(c.points),
            clusters: k.clusters.unwrap_or(c.clusters),
            dim: k.dim.unwrap_or(match data {
                Dataset::Clustering => c.dim,
                Dataset::DigitAdd => d.dim,
            }),
            spread: k.spread.unwrap_or(match data {
                Dataset::Clustering => c.spread,
                Dataset::DigitAdd => d.sigma,
            }),
            min_separation: k.min_separation.unwrap_or(match data {
                Dataset::Clustering => c.min_separation,
                Dataset::DigitAdd => d.min_separation,
            }),
            percentile: k.percentile.unwrap_or(c.percentile),
            train_samples: k.train_samples.unwrap_or(d.train_samples),
            hidden: k.hidden.clone().unwrap_or(match data {
                Dataset::Clustering => c.hidden,
                Dataset::DigitAdd => d.hidden,
            }),
        };
        let eff = Effective { semantics, train, task };
        eff.semantics_config()?;
        eff.train_config()?
            .validate()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        Ok(eff)
    }

    pub fn dataset(&self) -> Dataset {
        Dataset::parse(&self.task.data).expect("resolved")
    }

    pub fn semantics_config(&self) -> Result<SemanticsConfig, CliError> {
        let kind: SemanticsKind = self
            .semantics
            .kind
            .parse()
            .map_err(|e| CliError::Invalid(format!("{e}")))?;
        let cfg = SemanticsConfig {
            kind,
            alpha: self.semantics.alpha.resolve(self.train.steps),
            p: self.semantics.p.resolve(self.train.steps),
            epsilon: self.semantics.epsilon,
        };
        cfg.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let mut tc = TrainConfig::new(self.train.steps, self.train.learning_rate, self.train.seed);
        tc.batch_size = self.train.batch_size;
        tc.precision = parse_precision(&self.train.precision)?;
        tc.beta1 = self.train.beta1;
        tc.beta2 = self.train.beta2;
        tc.adam_eps = self.train.adam_eps;
        Ok(tc)
    }

    pub fn cluster_options(&self) -> ClusterOptions {
        ClusterOptions {
            points: self.task.points,
            dim: self.task.dim,
            clusters: self.task.clusters,
            spread: self.task.spread,
            min_separation: self.task.min_separation,
            percentile: self.task.percentile,
            hidden: self.task.hidden.clone(),
            ..ClusterOptions::default()
        }
    }

    pub fn digitadd_options(&self) -> DigitAddOptions {
        DigitAddOptions {
            dim: self.task.dim,
            sigma: self.task.spread,
            min_separation: self.task.min_separation,
            train_samples: self.task.train_samples,
            hidden: self.task.hidden.clone(),
            ..DigitAddOptions::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut e = self.clone();
        e.train.seed = seed;
        e
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }
}

pub fn parse_precision(s: &str) -> Result<Precision, CliError> {
    match s {
        "f64" | "64" => Ok(Precision::F64),
        "f32" | "32" => Ok(Precision::f32()),
        _ => Err(CliError::Invalid(format!("unknown precision `{s}` (use f32 or f64)"))),
    }
}
