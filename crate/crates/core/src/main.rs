use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shotbench::config::{apply_overrides, parse_task_spec, validate_plan, Algorithm, ExperimentConfig, OverrideSet, TaskSpec};
use shotbench::dataset::{write_feature_dataset, DatasetRegistry};
use shotbench::engine::{default_results_path, run_experiment, EngineError, FrozenClock, RunContext};
use shotbench::query::QueryStrategy;
use shotbench::report::{build_report, ReportFormat};
use shotbench::results::{read_metadata, read_results};
use shotbench::selector::select_source;
use shotbench::synth::{generate_synthetic_domains, standard_benchmark, DomainTransform, SynthSpec, MID_SEVERITY};

/// Multi-stage, domain-adaptive, incremental n-shot learning harness.
///
/// Exit codes: 0 success, 2 config error, 3 data error, 4 runtime error.
#[derive(Debug, Parser)]
#[command(name = "shotbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage of a task and write a results file.
    Run {
        /// Task file (JSON).
        task: PathBuf,
        /// Learner: centroid, mme or consistency.
        #[arg(long, short)]
        algorithm: String,
        /// Master seed for every random stream.
        #[arg(long, short, default_value_t = 0)]
        seed: u64,
        /// Directory holding `*.manifest.json` datasets.
        #[arg(long, default_value = "data")]
        data: PathBuf,
        /// Acquisition strategy for label checkpoints: random, entropy or margin.
        #[arg(long, default_value = "random")]
        query: String,
        /// Skip source selection and use this dataset.
        #[arg(long)]
        source: Option<String>,
        /// Override a config value, e.g. `algorithm_params.lambda=0.2` or
        /// `task.stages.0.seed_budgets=1,2,5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Results path. Defaults to outputs/<date>/<time>/<results_file>.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Record elapsed_ms as 0 so reruns are byte-identical.
        #[arg(long)]
        frozen_clock: bool,
    },
    /// Turn a results file into a CSV table or an SVG plot.
    Report {
        results: PathBuf,
        /// csv or svg.
        #[arg(long, short, default_value = "csv")]
        format: String,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write synthetic domain datasets (manifest plus CSVs per domain).
    Synth {
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the standard benchmark (bench-src, bench-tgt, bench-adapt)
        /// and ignore the shape options below except --severity.
        #[arg(long)]
        standard: bool,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        /// Train samples per class.
        #[arg(long, default_value_t = 100)]
        train: usize,
        /// Test samples per class.
        #[arg(long, default_value_t = 40)]
        test: usize,
        /// One domain per value; 0 is unshifted. Comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, MID_SEVERITY])]
        severity: Vec<f64>,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 5.0)]
        separation: f64,
        /// Domain names are `<prefix><index>`.
        #[arg(long, default_value = "synth")]
        prefix: String,
    },
    /// Parse a task file and check it against the datasets without running.
    Validate {
        task: PathBuf,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        #[arg(long, default_value = "centroid")]
        algorithm: String,
    },
    /// Rank candidate source datasets by distance to a target, as CSV.
    SelectSource {
        /// Target dataset name.
        #[arg(long, short)]
        target: String,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        /// Candidate names, comma separated. Defaults to every other dataset.
        #[arg(long, value_delimiter = ',')]
        whitelist: Vec<String>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    fn config(e: impl Display) -> Self {
        Self::Config(e.to_string())
    }

    fn data(e: impl Display) -> Self {
        Self::Data(e.to_string())
    }

    fn runtime(e: impl Display) -> Self {
        Self::Runtime(e.to_string())
    }

    fn report(&self) -> ExitCode {
        let (code, category, detail) = match self {
            Self::Config(d) => (2, "config", d),
            Self::Data(d) => (3, "data", d),
            Self::Runtime(d) => (4, "runtime", d),
        };
        eprintln!("error: {category}: {}", detail.replace('\n', " "));
        ExitCode::from(code)
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Plan(_) | EngineError::Config(_) | EngineError::Schedule(_) => Self::config(e),
            EngineError::Data(_) | EngineError::EmptyTestSet | EngineError::Selector(_) => Self::data(e),
            _ => Self::runtime(e),
        }
    }
}

fn load_task(path: &Path) -> Result<TaskSpec, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_task_spec(&text).map_err(Failure::config)
}

fn load_registry(dir: &Path) -> Result<DatasetRegistry, Failure> {
    DatasetRegistry::load_dir(dir).map_err(Failure::data)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
            }
            fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            task,
            algorithm,
            seed,
            data,
            query,
            source,
            overrides,
            out,
            frozen_clock,
        } => {
            let algorithm: Algorithm = algorithm.parse().map_err(Failure::Config)?;
            let strategy: QueryStrategy = query.parse().map_err(Failure::Config)?;
            let task = load_task(&task)?;
            let mut config = ExperimentConfig::new(task, algorithm, seed);
            config.query_strategy = strategy;
            config.pinned_source = source;
            let overrides = OverrideSet::parse(&overrides).map_err(Failure::config)?;
            let config = apply_overrides(&config, &overrides).map_err(Failure::config)?;
            let registry = load_registry(&data)?;
            let results = out.unwrap_or_else(|| default_results_path(".", &config.task, chrono::Local::now()));
            let mut ctx = RunContext::new(config, registry);
            if frozen_clock {
                ctx = ctx.with_clock(FrozenClock);
            }
            let outcome = run_experiment(&ctx, &results)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", outcome.results_path.display());
            Ok(())
        }
        Command::Report { results, format, out } => {
            let format: ReportFormat = format.parse().map_err(Failure::Config)?;
            let records = read_results(&results).map_err(Failure::data)?;
            let meta = read_metadata(&results).map_err(Failure::data)?;
            let table = build_report(&records, &meta).map_err(Failure::data)?;
            write_output(out.as_deref(), &table.render(format))
        }
        Command::Synth {
            out,
            seed,
            standard,
            classes,
            dim,
            train,
            test,
            severity,
            noise,
            separation,
            prefix,
        } => {
            let spec = if standard {
                standard_benchmark(seed, severity.last().copied().unwrap_or(MID_SEVERITY))
            } else {
                SynthSpec {
                    classes,
                    dim,
                    per_class_train: train,
                    per_class_test: test,
                    domains: severity
                        .iter()
                        .enumerate()
                        .map(|(i, &s)| DomainTransform::with_severity(format!("{prefix}{i}"), s, dim, noise, i))
                        .collect(),
                    separation,
                    seed,
                }
            };
            let datasets = generate_synthetic_domains(&spec).map_err(Failure::config)?;
            for ds in &datasets {
                write_feature_dataset(ds, &out).map_err(Failure::runtime)?;
            }
            println!("{}", out.display());
            Ok(())
        }
        Command::Validate { task, data, algorithm } => {
            let algorithm: Algorithm = algorithm.parse().map_err(Failure::Config)?;
            let task = load_task(&task)?;
            let config = ExperimentConfig::new(task, algorithm, 0);
            let registry = load_registry(&data)?;
            let plan = validate_plan(&config, &registry).map_err(|errs| Failure::from(EngineError::Plan(errs)))?;
            for w in &plan.warnings {
                eprintln!("warning: {w}");
            }
            println!("ok: {} stage(s), {} checkpoint(s)", config.task.stages.len(), config.task.checkpoint_count());
            Ok(())
        }
        Command::SelectSource { target, data, whitelist } => {
            let registry = load_registry(&data)?;
            let handle = registry
                .get(&target)
                .ok_or_else(|| Failure::Data(format!("unknown target dataset '{target}'")))?;
            let whitelist: Vec<String> = if whitelist.is_empty() {
                registry.names().filter(|n| *n != target).map(str::to_string).collect()
            } else {
                whitelist
            };
            let report = select_source(handle, &registry, &whitelist).map_err(Failure::data)?;
            print!("{}", report.to_csv());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return Failure::Config(first.to_string()).report();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
