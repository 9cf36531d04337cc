//! Experiment runner: configuration, artifact writing and the manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use awsde_core::models::{builtin_model, CoefficientSpec};
use awsde_core::schemes::SchemeKind;
use awsde_core::stopping::Objective;
use serde::{Deserialize, Serialize};
use serde_json::Value;

mod experiments;
mod output;

pub use output::{write_csv, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: awsde_core::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn core(context: impl Into<String>) -> impl FnOnce(awsde_core::Error) -> Self {
        let context = context.into();
        move |source| Self::Core { context, source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Core { source, .. } => match innermost(source) {
                awsde_core::Error::StepSize { .. } => "step_size",
                awsde_core::Error::Config(_) | awsde_core::Error::UnknownModel(_) => "config",
                awsde_core::Error::InstanceTooLarge { .. } => "instance_too_large",
                _ => "numerical",
            },
            Self::Io { .. } | Self::Csv(_) => "io",
            Self::Json { .. } => "config",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" | "config" => 2,
            _ => 1,
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> Value {
        let mut chain = Vec::new();
        let mut cur: Option<&dyn std::error::Error> = std::error::Error::source(self);
        while let Some(e) = cur {
            chain.push(e.to_string());
            cur = e.source();
        }
        let context = match self {
            Self::Core { context, .. } => Some(context.clone()),
            _ => None,
        };
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "context": context,
                "causes": chain,
            }
        })
    }
}

fn innermost(e: &awsde_core::Error) -> &awsde_core::Error {
    match e {
        awsde_core::Error::AtStep { source, .. } => innermost(source),
        other => other,
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    /// Brownian motion against drift `k/10 sign(x)`, `k = 0..10`.
    FigDisc,
    /// CIR model against perturbed speed, level and diffusion parameters.
    FigCir,
    /// Strong convergence rates and moment bounds of one scheme.
    Rates,
    /// Exact values on the small discrete counterexamples.
    Counterexamples,
    /// Stability of optimal stopping values on random trees.
    Stopping,
    /// Values of the drift-removing transformation.
    TransformDump,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FigDisc => "fig_disc",
            Self::FigCir => "fig_cir",
            Self::Rates => "rates",
            Self::Counterexamples => "counterexamples",
            Self::Stopping => "stopping",
            Self::TransformDump => "transform_dump",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `h = 2^-9` and `2^10` paths, for quick runs.
    Desk,
    /// `h = 2^-12` and `2^12` paths.
    #[default]
    Paper,
}

impl Preset {
    pub fn steps(&self) -> usize {
        match self {
            Self::Desk => 1 << 9,
            Self::Paper => 1 << 12,
        }
    }

    pub fn paths(&self) -> usize {
        match self {
            Self::Desk => 1 << 10,
            Self::Paper => 1 << 12,
        }
    }
}

/// `"cubic"` or `{"name": "perturbed_sign", "params": {"k": 3}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Name(String),
    Full {
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

impl ModelChoice {
    pub fn name(&self) -> &str {
        match self {
            Self::Name(n) | Self::Full { name: n, .. } => n,
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        match self {
            Self::Name(_) => BTreeMap::new(),
            Self::Full { params, .. } => params.clone(),
        }
    }

    pub fn build(&self) -> Result<CoefficientSpec> {
        builtin_model(self.name(), &self.params()).map_err(CliError::core(format!("model {}", self.name())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffChoice {
    pub name: String,
    /// `strike` and `h` for the Asian payoff.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_objective")]
    pub objective: Objective,
}

fn default_objective() -> Objective {
    Objective::Sup
}

/// Everything a run depends on. Fields left out take per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Number of time steps on `[0, 1]`.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub paths: Option<usize>,
    #[serde(default)]
    pub model: Option<ModelChoice>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub scheme: Option<String>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub payoff: Option<PayoffChoice>,
    #[serde(default)]
    pub dump_transform: bool,
    /// Write this many simulated paths of the experiment's model to `paths.csv`.
    #[serde(default)]
    pub dump_paths: Option<usize>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            preset: Preset::Paper,
            seed: 0,
            out: default_out(),
            steps: None,
            paths: None,
            model: None,
            p: None,
            scheme: None,
            workers: None,
            payoff: None,
            dump_transform: false,
            dump_paths: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.into(), source })
    }

    pub fn steps(&self) -> usize {
        self.steps.unwrap_or(self.preset.steps())
    }

    pub fn paths(&self) -> usize {
        self.paths.unwrap_or(self.preset.paths())
    }

    pub fn scheme_or(&self, default: SchemeKind) -> Result<SchemeKind> {
        match &self.scheme {
            None => Ok(default),
            Some(s) => s.parse().map_err(|e: awsde_core::Error| CliError::Usage(e.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == Some(0) || self.paths == Some(0) || self.workers == Some(0) {
            return Err(CliError::Usage("steps, paths and workers must be positive".into()));
        }
        if let Some(p) = self.p {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(CliError::Usage(format!("p must be a finite number >= 1, got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub versions: BTreeMap<String, String>,
    pub wall_time_seconds: f64,
    pub artifacts: Vec<Artifact>,
    pub report: Value,
}

/// Output of one experiment before the manifest is written.
pub(crate) struct Outcome {
    pub tables: Vec<(String, Table)>,
    pub report: Value,
}

/// Runs the experiment, writes its CSVs, `report.json` and `manifest.json`
/// into `config.out`, and returns the manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest> {
    config.validate()?;
    let start = Instant::now();
    let mut outcome = match config.experiment {
        Experiment::FigDisc => experiments::fig_disc(config)?,
        Experiment::FigCir => experiments::fig_cir(config)?,
        Experiment::Rates => experiments::rates(config)?,
        Experiment::Counterexamples => experiments::counterexamples(config)?,
        Experiment::Stopping => experiments::stopping(config)?,
        Experiment::TransformDump => experiments::transform_dump(config)?,
    };
    if config.dump_transform && config.experiment != Experiment::TransformDump {
        outcome.tables.push(("transform.csv".into(), experiments::transform_table(config)?));
    }
    if let Some(n) = config.dump_paths {
        outcome.tables.push(("paths.csv".into(), experiments::path_table(config, n)?));
    }
    let out = &config.out;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io { path: out.clone(), source })?;
    let mut artifacts = Vec::new();
    for (name, table) in &outcome.tables {
        write_csv(&out.join(name), table)?;
        artifacts.push(Artifact { file: name.clone(), rows: table.rows.len() });
    }
    write_json(&out.join("report.json"), &outcome.report)?;
    artifacts.push(Artifact { file: "report.json".into(), rows: 0 });
    let manifest = Manifest {
        experiment: config.experiment,
        config: config.clone(),
        versions: BTreeMap::from([
            ("awsde".to_string(), VERSION.to_string()),
            ("awsde-core".to_string(), awsde_core::VERSION.to_string()),
        ]),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        artifacts,
        report: outcome.report,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| CliError::Json { path: path.into(), source })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source })
}

/// The manifest's JSON schema, as published in `schema/manifest.schema.json`.
pub const MANIFEST_SCHEMA: &str = include_str!("../schema/manifest.schema.json");
