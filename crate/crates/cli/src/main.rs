use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use icl_data::evalgen::{self, TemplateRegistry};
use icl_data::packer::DEFAULT_MAX_LEN;
use icl_data::pipeline::{self, RunConfig};
use icl_data::{seed, synth, WhitespaceLength};

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "icl-data",
    version,
    about = "Build self-supervised in-context training data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a JSON config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config and the environment.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print counts for output files.
    Stats {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Re-check instance invariants; exits 1 on any violation.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
        max_len: usize,
    },
    /// Render few-shot evaluation prompts.
    RenderEval {
        #[arg(long)]
        task: String,
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = 0)]
        shots: usize,
        /// Demonstration pool; defaults to the records file.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Extra templates (JSON object or array).
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a seeded synthetic JSONL corpus.
    Synth {
        #[arg(long)]
        docs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "default")]
        domains: Vec<String>,
        #[arg(long)]
        output: PathBuf,
    },
}

fn generate(config: PathBuf, seed: Option<u64>, workers: Option<usize>) -> Result<ExitCode> {
    let mut cfg = RunConfig::from_path(&config)?;
    cfg.apply_env()?;
    if let Some(s) = seed {
        cfg.global_seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    let report = pipeline::generate(&cfg)?;
    for (task, t) in &report.tasks {
        println!(
            "{:8} {:>8} instances {:>9} examples  mean {:.2}",
            task.to_string(),
            t.instances,
            t.examples,
            t.mean_examples_per_instance
        );
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} documents, {} shards, {:.2}s, config {}",
        report.documents,
        report.shards,
        report.wall_clock_secs,
        &report.config_hash[..16]
    );
    Ok(ExitCode::SUCCESS)
}

fn validate(files: Vec<PathBuf>, max_len: usize) -> Result<ExitCode> {
    let report = pipeline::validate(&files, max_len, &WhitespaceLength)?;
    for v in &report.violations {
        println!(
            "{}:{}: {}: {}",
            v.file.display(),
            v.line,
            v.record_id,
            v.message
        );
    }
    if report.passed() {
        println!("ok: {} records in {} files", report.records, report.files);
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAILED: {} violations", report.violations.len());
        Ok(ExitCode::from(EXIT_VALIDATION))
    }
}

#[allow(clippy::too_many_arguments)]
fn render_eval(
    task: String,
    records: PathBuf,
    shots: usize,
    pool: Option<PathBuf>,
    seed: u64,
    templates: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut registry = TemplateRegistry::default();
    if let Some(t) = &templates {
        registry.load(t)?;
    }
    registry.get(&task)?;
    let queries: Vec<_> = pipeline::read_eval_records(&records)?
        .into_iter()
        .filter(|r| r.task_id == task)
        .collect();
    let pool = match &pool {
        Some(p) => pipeline::read_eval_records(p)?,
        None => queries.clone(),
    };
    let mut out: Box<dyn Write> = match &output {
        Some(p) => Box::new(io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    };
    let mut short = 0;
    for record in &queries {
        let mut rng = seed::unit_rng(seed, &["eval", &record.record_id()]);
        let assembled = evalgen::assemble(record, &pool, shots, &registry, &mut rng)?;
        short += usize::from(assembled.short_pool);
        for inst in assembled.instances {
            serde_json::to_writer(&mut out, &inst)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    if short > 0 {
        eprintln!("warning: {short} records had fewer than {shots} demonstrations available");
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate {
            config,
            seed,
            workers,
        } => generate(config, seed, workers),
        Command::Stats { files } => {
            let report = pipeline::stats(&files, &WhitespaceLength)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { files, max_len } => validate(files, max_len),
        Command::RenderEval {
            task,
            records,
            shots,
            pool,
            seed,
            templates,
            output,
        } => render_eval(task, records, shots, pool, seed, templates, output),
        Command::Synth {
            docs,
            seed,
            domains,
            output,
        } => {
            let domains: Vec<&str> = domains.iter().map(String::as_str).collect();
            std::fs::write(&output, synth::corpus_jsonl(docs, &domains, seed))
                .with_context(|| format!("writing {}", output.display()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<icl_data::Error>() {
                Some(icl_data::Error::Config(_) | icl_data::Error::Precondition(_)) => {
                    ExitCode::from(EXIT_CONFIG)
                }
                _ => ExitCode::from(EXIT_VALIDATION),
            }
        }
    }
}
