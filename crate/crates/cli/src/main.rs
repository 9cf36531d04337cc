use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use awsde::{run_experiment, CliError, Experiment, ExperimentConfig, ModelChoice, Preset};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "awsde", version, about = "Adapted Wasserstein distances between SDE laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment to run; may come from --config instead.
    #[arg(value_enum)]
    experiment: Option<Experiment>,
    /// JSON file with the same fields as the flags; flags given as well win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Time steps on [0, 1].
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    model: Option<String>,
    /// Model parameter as key=value, repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    #[arg(long)]
    p: Option<f64>,
    /// em, iem, tiem, tiem-mono or sym-em.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Also write transform.csv for the model.
    #[arg(long)]
    dump_transform: bool,
    /// Also write the first N simulated paths to paths.csv.
    #[arg(long, value_name = "N")]
    dump_paths: Option<usize>,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|e| format!("parameter {k}: {e}"))?;
    Ok((k.to_string(), v))
}

fn resolve(args: RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut config = match (&args.config, args.experiment) {
        (Some(path), _) => ExperimentConfig::from_file(path)?,
        (None, Some(e)) => ExperimentConfig::new(e),
        (None, None) => return Err(CliError::Usage("name an experiment or pass --config".into())),
    };
    if let Some(e) = args.experiment {
        config.experiment = e;
    }
    if let Some(v) = args.preset {
        config.preset = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.out {
        config.out = v;
    }
    config.steps = args.steps.or(config.steps);
    config.paths = args.paths.or(config.paths);
    config.p = args.p.or(config.p);
    config.scheme = args.scheme.or(config.scheme);
    config.workers = args.workers.or(config.workers);
    config.dump_transform |= args.dump_transform;
    config.dump_paths = args.dump_paths.or(config.dump_paths);
    match (args.model, args.params.is_empty()) {
        (Some(name), true) => config.model = Some(ModelChoice::Name(name)),
        (Some(name), false) => {
            config.model = Some(ModelChoice::Full { name, params: args.params.into_iter().collect() })
        }
        (None, false) => {
            let base = config.model.take().ok_or_else(|| CliError::Usage("--param needs --model".into()))?;
            let mut params: BTreeMap<String, f64> = base.params();
            params.extend(args.params);
            config.model = Some(ModelChoice::Full { name: base.name().to_string(), params });
        }
        (None, true) => {}
    }
    Ok(config)
}

fn fail(e: CliError) -> ExitCode {
    println!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CliError::Usage(e.to_string())),
    };
    let Command::Run(args) = cli.command;
    match resolve(args).and_then(|c| run_experiment(&c)) {
        Ok(manifest) => {
            println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serialises"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}
