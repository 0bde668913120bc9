//! `coq` command line: single-question runs, batch evaluation, and live
//! recording for later replay.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use coq::config::{BackendChoice, RunConfig};
use coq::error::{CoqError, Result};
use coq::eval::{load_dataset, report, EvalExample};
use coq::llm::{
    LiveBackend, LlmBackend, PromptCatalog, RecordingBackend, ReplayBackend, ScriptedBackend,
};
use coq::orchestrator::{batch_status, run_batch, run_question, RunRecord};
use coq::table::{infer_types, ingest_table, TableFormat};

const API_KEY_VAR: &str = "COQ_API_KEY";

#[derive(Parser)]
#[command(name = "coq", about = "SQL-aided table question answering", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay fixtures file (shorthand for backend.kind = "replay")
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Use the built-in offline heuristic backend
    #[arg(long)]
    scripted: bool,
    /// Per-question LLM call budget
    #[arg(long)]
    budget: Option<u32>,
    /// Disable zero-call shortcuts
    #[arg(long)]
    strict: bool,
    /// Prompt template override directory
    #[arg(long)]
    prompt_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question about one table
    Run {
        /// CSV or JSON table file
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        question: String,
        /// Where to write the run record (JSONL)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a JSONL dataset and score it
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for records.jsonl / report.json / report.txt
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a dataset while persisting every exchange for later replay
    Record {
        #[arg(long)]
        dataset: PathBuf,
        /// Fixtures file to append exchanges to
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(path) = &common.replay {
        config.backend = BackendChoice::Replay { path: path.clone() };
    }
    if common.scripted {
        config.backend = BackendChoice::Scripted;
    }
    if let Some(budget) = common.budget {
        config.budget = budget;
    }
    if common.strict {
        config.strict = true;
    }
    if let Some(dir) = &common.prompt_dir {
        config.prompt_dir = Some(dir.clone());
    }
    config.validate()?;
    Ok(config)
}

fn build_backend(config: &RunConfig) -> Result<Arc<dyn LlmBackend>> {
    let backend: Arc<dyn LlmBackend> = match &config.backend {
        BackendChoice::Scripted => Arc::new(ScriptedBackend::heuristic()),
        BackendChoice::Replay { path } => Arc::new(ReplayBackend::load(path)?),
        BackendChoice::Live {
            base_url,
            model,
            temperature,
            top_p,
        } => {
            let key = std::env::var(API_KEY_VAR).map_err(|_| {
                CoqError::Config(format!("{API_KEY_VAR} must be set for the live backend"))
            })?;
            Arc::new(LiveBackend::new(
                base_url,
                model,
                &key,
                *temperature as f64,
                *top_p as f64,
            ))
        }
    };
    Ok(match &config.record_path {
        Some(path) => Arc::new(RecordingBackend::create(backend, path)?),
        None => backend,
    })
}

fn build_catalog(config: &RunConfig) -> Result<Arc<PromptCatalog>> {
    let mut catalog = PromptCatalog::builtin();
    if let Some(dir) = &config.prompt_dir {
        catalog.load_overrides(dir)?;
    }
    Ok(Arc::new(catalog))
}

fn load_table_file(path: &Path) -> Result<coq::table::Table> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => TableFormat::Json,
        _ => TableFormat::Csv,
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "table".into());
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    Ok(infer_types(ingest_table(&mut reader, format, &name)?))
}

fn write_records(records: &[RunRecord], path: &Path) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    for record in records {
        writeln!(file, "{}", serde_json::to_string(record).expect("record serializes"))?;
    }
    Ok(())
}

fn cmd_run(table: &Path, question: &str, out: Option<&Path>, common: &CommonArgs) -> Result<i32> {
    let config = load_config(common)?;
    let backend = build_backend(&config)?;
    let catalog = build_catalog(&config)?;
    let table_data = load_table_file(table)?;
    let table_id = table_data.name.clone();
    let record = run_question(&table_data, question, &table_id, &config, backend, catalog);
    println!("{}", record.final_answer.text);
    println!("calls: {} status: {:?}", record.call_count, record.status);
    if let Some(path) = out {
        write_records(std::slice::from_ref(&record), path)?;
    }
    Ok(record.status.exit_code())
}

fn run_dataset(
    dataset: &Path,
    config: &RunConfig,
) -> Result<(Vec<EvalExample>, Vec<RunRecord>)> {
    let examples = load_dataset(dataset)?;
    let backend = build_backend(config)?;
    let catalog = build_catalog(config)?;
    let records = run_batch(&examples, config, backend, catalog);
    Ok((examples, records))
}

fn cmd_eval(
    dataset: &Path,
    out: &Path,
    parallelism: Option<usize>,
    common: &CommonArgs,
) -> Result<i32> {
    let mut config = load_config(common)?;
    if let Some(p) = parallelism {
        config.parallelism = p;
        config.validate()?;
    }
    std::fs::create_dir_all(out)?;
    let (examples, records) = run_dataset(dataset, &config)?;
    let eval_report = report(&records, &examples)?;
    write_records(&records, &out.join("records.jsonl"))?;
    std::fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&eval_report).expect("report serializes"),
    )?;
    std::fs::write(out.join("report.txt"), eval_report.render_text())?;
    println!("{}", eval_report.summary_line());
    Ok(batch_status(&records).exit_code())
}

fn cmd_record(dataset: &Path, out: &Path, common: &CommonArgs) -> Result<i32> {
    let mut config = load_config(common)?;
    if matches!(config.backend, BackendChoice::Live { .. })
        && std::env::var(API_KEY_VAR).is_err()
    {
        // fail before any call
        return Err(CoqError::Config(format!(
            "{API_KEY_VAR} must be set before recording from a live backend"
        )));
    }
    config.record_path = Some(out.to_path_buf());
    let (_, records) = run_dataset(dataset, &config)?;
    println!("recorded {} question(s) to {}", records.len(), out.display());
    Ok(batch_status(&records).exit_code())
}

fn dispatch(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Run {
            table,
            question,
            out,
            common,
        } => cmd_run(table, question, out.as_deref(), common),
        Command::Eval {
            dataset,
            out,
            parallelism,
            common,
        } => cmd_eval(dataset, out, *parallelism, common),
        Command::Record {
            dataset,
            out,
            common,
        } => cmd_record(dataset, out, common),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                // config / usage problems
                CoqError::Config(_)
                | CoqError::Template(_)
                | CoqError::MalformedDataset(_)
                | CoqError::Io(_) => 1,
                // run failures
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
