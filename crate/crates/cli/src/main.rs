//! `tram`: run experiments, aggregate their results and inspect checkpoints.
//!
//! Exit status is 0 on success, 1 for usage errors (bad arguments, missing
//! or invalid configuration) and 2 when work fails at runtime.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use tram::analysis::{cka, model_sharpness, SharpnessConfig, SignificanceTest};
use tram::harness::{
    aggregate, domain_correlations, domains_with_tag, emit_scatter_plot, make_domain_suite, run_experiment,
    sharpness_correlations, write_atomic, write_outcome, DomainTag, ExperimentConfig, RunResult, SuiteConfig,
    TableFormat, TableMetric,
};
use tram::models::{Batch, Checkpoint, Mlp, PassCounter};
use tram::optim::Algorithm;

#[derive(Parser)]
#[command(name = "tram", version, about = "Trust-region aware sharpness minimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured (algorithm, seed) pair and write one result
    /// file per run. Extra `--key=value` arguments override config fields,
    /// e.g. `--steps=100 --hyperparams.rho_asam=0.25`.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Maximum number of concurrent runs.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory; takes precedence over TRAM_OUT_DIR and the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
    /// Summarize result files into a per-algorithm table.
    Aggregate {
        /// Result files or glob patterns; checkpoint files are skipped.
        #[arg(required = true)]
        inputs: Vec<String>,
        /// Defaults to the baseline recorded in the results.
        #[arg(long)]
        baseline: Option<Algorithm>,
        #[arg(long, value_parser = parse_test)]
        test: Option<SignificanceTest>,
        #[arg(long, value_parser = parse_metric, default_value = "accuracy")]
        metric: TableMetric,
        #[arg(long, default_value = "markdown")]
        format: TableFormat,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print cross-run accuracy and sharpness correlations as JSON.
        #[arg(long)]
        correlations: bool,
    },
    /// ε-sharpness of a checkpoint on a dataset.
    Sharpness {
        #[arg(long)]
        checkpoint: PathBuf,
        /// A batch file as written by `tram suite`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Linear CKA between the features of two parameter sets on a dataset.
    Cka {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the checkpoint architecture's initialization.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
    },
    /// Scatter plot of accuracy on one domain against mean accuracy on others.
    Plot {
        #[arg(required = true)]
        inputs: Vec<String>,
        #[arg(long, default_value = "train")]
        x: String,
        /// Comma-separated domain names, or `correlated` / `anticorrelated`.
        #[arg(long, default_value = "anticorrelated")]
        y: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a domain suite and write one batch file per split and domain.
    Suite {
        /// Suite settings as in the `suite` section of a run config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_test(s: &str) -> Result<SignificanceTest, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown test `{s}`"))
}

fn parse_metric(s: &str) -> Result<TableMetric, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown metric `{s}`"))
}

/// A failure and the exit status it maps to.
enum Failure {
    Usage(String),
    Runtime(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn expand(inputs: &[String]) -> Result<Vec<PathBuf>, Failure> {
    let mut paths = Vec::new();
    for pattern in inputs {
        let matches: Vec<PathBuf> = glob::glob(pattern)
            .map_err(|e| usage(format!("{pattern}: {e}")))?
            .filter_map(|p| p.ok())
            .filter(|p| !p.to_string_lossy().ends_with(".ckpt.json"))
            .collect();
        if matches.is_empty() {
            return Err(usage(format!("{pattern}: no result files match")));
        }
        paths.extend(matches);
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

fn load_results(inputs: &[String]) -> Result<Vec<RunResult>, Failure> {
    expand(inputs)?
        .iter()
        .map(|p| RunResult::load(p).map_err(|e| usage(format!("{}: {e}", p.display()))))
        .collect()
}

fn load_batch(path: &Path) -> Result<Batch, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(usage)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            threads,
            out,
            overrides,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(usage)?;
            for o in &overrides {
                let assignment = o
                    .strip_prefix("--")
                    .ok_or_else(|| usage(format!("unexpected argument `{o}`; overrides look like --key=value")))?;
                cfg.apply_override(assignment).map_err(usage)?;
            }
            let dir = out.unwrap_or_else(|| cfg.resolved_output_dir());
            std::fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
            let s = &cfg.suite;
            let suite = make_domain_suite(s.seed, s.k_correlated, s.k_anticorrelated, &s.params).map_err(usage)?;
            let outcome = run_experiment(&cfg, &suite, threads).map_err(runtime)?;
            let written = write_outcome(&outcome, &dir).map_err(runtime)?;
            for (r, path) in outcome.results.iter().zip(&written) {
                println!(
                    "{} seed {}: train acc {:.4}, zero-shot acc {:.4} -> {}",
                    r.algorithm,
                    r.seed,
                    r.domains[0].accuracy,
                    r.zero_shot_accuracy(),
                    path.display()
                );
            }
            if !outcome.failures.is_empty() {
                for f in &outcome.failures {
                    eprintln!("error: {} seed {}: {}", f.algorithm, f.seed, f.message);
                }
                return Err(runtime(format!("{} run(s) failed", outcome.failures.len())));
            }
            Ok(())
        }
        Command::Aggregate {
            inputs,
            baseline,
            test,
            metric,
            format,
            out,
            correlations,
        } => {
            let results = load_results(&inputs)?;
            let first = &results[0].config;
            let table = aggregate(
                &results,
                metric,
                baseline.unwrap_or(first.baseline),
                test.unwrap_or(first.significance),
            )
            .map_err(runtime)?;
            let text = table.render(format).map_err(runtime)?;
            match out {
                Some(path) => write_atomic(&path, text.as_bytes()).map_err(runtime)?,
                None => print!("{text}"),
            }
            if correlations {
                let report = serde_json::json!({
                    "accuracy": domain_correlations(&results),
                    "sharpness": sharpness_correlations(&results),
                });
                println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
            }
            Ok(())
        }
        Command::Sharpness {
            checkpoint,
            data,
            epsilon,
            lr,
            steps,
            seed,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let batch = load_batch(&data)?;
            let mut cfg = SharpnessConfig::default();
            cfg.epsilon = epsilon.unwrap_or(cfg.epsilon);
            cfg.lr = lr.unwrap_or(cfg.lr);
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.validate().map_err(usage)?;
            let model = Mlp::new(ck.model.clone()).map_err(usage)?;
            let phi = model_sharpness(&model, &ck.params, &batch, &cfg, seed).map_err(runtime)?;
            println!("{}", serde_json::json!({ "sharpness": phi }));
            Ok(())
        }
        Command::Cka {
            checkpoint,
            reference,
            data,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let batch = load_batch(&data)?;
            let model = Mlp::new(ck.model.clone()).map_err(usage)?;
            let other = match reference {
                Some(path) => load_checkpoint(&path)?.params,
                None => model.init(),
            };
            let counter = PassCounter::new();
            let (_, a) = model.forward(&ck.params, &batch.x, &counter).map_err(runtime)?;
            let (_, b) = model.forward(&other, &batch.x, &counter).map_err(runtime)?;
            let value = cka(&a, &b).map_err(runtime)?;
            println!("{}", serde_json::json!({ "cka": value.value() }));
            Ok(())
        }
        Command::Plot { inputs, x, y, out } => {
            let results = load_results(&inputs)?;
            let y_domains = match y.as_str() {
                "correlated" => domains_with_tag(&results[0], DomainTag::Correlated),
                "anticorrelated" => domains_with_tag(&results[0], DomainTag::Anticorrelated),
                list => list.split(',').map(|s| s.trim().to_string()).collect(),
            };
            let plot = emit_scatter_plot(&results, &x, &y_domains, &out).map_err(usage)?;
            println!("{} points -> {}", plot.points.len(), out.display());
            Ok(())
        }
        Command::Suite { config, seed, out } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                    serde_json::from_str::<SuiteConfig>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
                }
                None => SuiteConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            let suite = make_domain_suite(cfg.seed, cfg.k_correlated, cfg.k_anticorrelated, &cfg.params).map_err(usage)?;
            std::fs::create_dir_all(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
            write_json(&out, "suite", &suite)?;
            write_json(&out, "train_split", &suite.train)?;
            write_json(&out, "val_split", &suite.val)?;
            for d in &suite.domains {
                write_json(&out, &d.name, &d.test)?;
            }
            println!("{} domains -> {}", suite.domains.len(), out.display());
            Ok(())
        }
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    write_atomic(&dir.join(format!("{name}.json")), text.as_bytes()).map_err(runtime)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
