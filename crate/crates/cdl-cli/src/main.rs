//! `cdlgen`: command-line entry point for the CDL generation toolchain.
//!
//! Exit codes are part of the contract: 0 success, 1 domain failure
//! (lookup miss, validation errors, failed session), 2 empty index on
//! `index`, 64 usage errors. Diagnostics go to standard error; data goes to
//! standard output or the `-o` target.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use cdl_core::ast;
use cdl_core::index::{
    baseline_fuzzy_search, build_index, hard_rule_lookup, load_index, load_rename_map,
    resolve_version, save_index, IndexError, LibraryIndex,
};
use cdl_core::interp::{elaborate, parse_csv, simulate, to_csv_string};
use cdl_core::validate::{report_lines, validate};
use cdl_pipeline::config::{load_config, PipelineConfig, RunMode};
use cdl_pipeline::evalrec::{
    aggregate_report, human_eval_form, ingest_human_eval, render_report_csv, render_report_text,
};
use cdl_pipeline::gateway::{Cassette, Gateway};
use cdl_pipeline::http::HttpTransport;
use cdl_pipeline::oracle::check_conformance;
use cdl_pipeline::orchestrate::{
    run_session, write_session_dir, CompileBackend, SessionConfig, SessionStatus,
};
use cdl_pipeline::tasks::{resolve_task, ReferenceTask};

#[derive(Parser)]
#[command(name = "cdlgen", version, about = "CDL control-module generation toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index a library tree of .mo files.
    Index {
        /// Library root directory.
        root: PathBuf,
        /// Library version tag stored in the index.
        #[arg(long, default_value = "current")]
        version: String,
        /// Rename map TSV (old-prefix <TAB> new-prefix per line).
        #[arg(long)]
        rename_map: Option<PathBuf>,
        /// Output index file; standard output when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Look up a class name in an index.
    Lookup {
        /// Class name (terminal or fully qualified).
        name: String,
        /// Index file produced by `index`.
        #[arg(long)]
        index: PathBuf,
        /// Use the token-overlap fuzzy baseline instead of hard-rule lookup.
        #[arg(long)]
        fuzzy: bool,
        /// Result count for fuzzy lookup.
        #[arg(short, default_value_t = 3)]
        k: usize,
    },
    /// Statically validate a Modelica block file.
    Validate {
        /// Block source file.
        file: PathBuf,
        /// Index file for class grounding.
        #[arg(long)]
        index: PathBuf,
        /// Reference task (1-5 or a task file) for interface checks.
        #[arg(long)]
        task: Option<String>,
    },
    /// Simulate a block against an input trace.
    Simulate {
        /// Block source file.
        file: PathBuf,
        /// Input trace CSV (time_s first column).
        #[arg(long)]
        inputs: PathBuf,
        /// Index file for class grounding.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Step size in seconds.
        #[arg(long, default_value_t = 10.0)]
        step: f64,
        /// Output trace CSV; standard output when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the generation pipeline for one or more tasks.
    Generate {
        /// Task id (1-5) or task file; repeatable.
        #[arg(long, required = true)]
        task: Vec<String>,
        /// Pipeline config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's run mode.
        #[arg(long)]
        mode: Option<String>,
        /// Override the config's output directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Parallel sessions (replay/live only; record is serialized).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a block against its task's conformance oracle.
    Conform {
        /// Block source file.
        file: PathBuf,
        /// Reference task (1-5 or a task file).
        #[arg(long)]
        task: String,
        /// Index file for class grounding.
        #[arg(long)]
        index: PathBuf,
    },
    /// Human/AI evaluation workflow.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Emit a blank evaluation form for a session.
    Form {
        session_id: String,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a completed form.
    Ingest { form: PathBuf },
    /// Aggregate completed forms from a directory.
    Report {
        dir: PathBuf,
        /// Emit the machine-readable CSV instead of the text table.
        #[arg(long)]
        csv: bool,
    },
}

fn emit(out: &Option<PathBuf>, data: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, data)?,
        None => print!("{data}"),
    }
    Ok(())
}

fn load_grounding_index(path: &Path) -> anyhow::Result<LibraryIndex> {
    Ok(load_index(path)?)
}

fn cmd_index(
    root: &Path,
    version: &str,
    rename_map: Option<&Path>,
    out: Option<&Path>,
) -> anyhow::Result<u8> {
    let mut index = match build_index(root, version) {
        Ok(index) => index,
        Err(IndexError::EmptyIndex(path)) => {
            eprintln!("error: no parseable classes under {}", path.display());
            return Ok(2);
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(map) = rename_map {
        index.rename_map = load_rename_map(map)?;
    }
    for warning in &index.warnings {
        eprintln!("warning: skipped {}: {}", warning.path.display(), warning.reason);
    }
    match out {
        Some(path) => save_index(&index, path)?,
        None => {
            let mut buf = Vec::new();
            cdl_core::index::write_index_file(&index, &mut buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
    }
    eprintln!("indexed {} classes ({version})", index.len());
    Ok(0)
}

fn cmd_lookup(name: &str, index_path: &Path, fuzzy: bool, k: usize) -> anyhow::Result<u8> {
    let index = load_grounding_index(index_path)?;
    let result = if fuzzy {
        baseline_fuzzy_search(&index, name, k)
    } else {
        hard_rule_lookup(&index, name)
    };
    for (fqn, score) in &result.hits {
        println!("{fqn}\t{score:.3}");
    }
    if result.hits.is_empty() {
        eprintln!("not found: {name}");
        return Ok(1);
    }
    // Version drift advisories for the top hit.
    if let Some(fqn) = cdl_core::ast::QualifiedName::parse_str(&result.hits[0].0) {
        let resolution = resolve_version(&index, &fqn);
        if !matches!(resolution, cdl_core::index::VersionResolution::Found) {
            eprintln!("version: {resolution}");
        }
    }
    Ok(0)
}

fn cmd_validate(file: &Path, index_path: &Path, task: Option<&str>) -> anyhow::Result<u8> {
    let index = load_grounding_index(index_path)?;
    let source = fs::read_to_string(file)?;
    let block = match ast::parse(&source) {
        Ok(block) => block,
        Err(e) => {
            eprintln!("parse error: {e}");
            return Ok(1);
        }
    };
    let task = task.map(resolve_task).transpose()?;
    let spec = task.as_ref().map(ReferenceTask::to_task_spec);
    let report = validate(&block, &index, spec.as_ref());
    print!("{}", report_lines(&report));
    Ok(if report.passed { 0 } else { 1 })
}

fn cmd_simulate(
    file: &Path,
    inputs: &Path,
    index_path: Option<&Path>,
    step: f64,
    out: Option<&Path>,
) -> anyhow::Result<u8> {
    let index = index_path.map(load_grounding_index).transpose()?;
    let source = fs::read_to_string(file)?;
    let block = match ast::parse(&source) {
        Ok(block) => block,
        Err(e) => {
            eprintln!("parse error: {e}");
            return Ok(1);
        }
    };
    // Pin input-column kinds to the block's declared ports so 0/1 Boolean
    // columns are not misread as Integers.
    let kinds: std::collections::BTreeMap<String, cdl_core::ast::SignalKind> =
        ast::interface_of(&block)
            .inputs
            .iter()
            .map(|p| (p.name.clone(), p.signal_kind))
            .collect();
    let trace = parse_csv(&fs::read_to_string(inputs)?, step, Some(&kinds))?;
    let net = match elaborate(&block, index.as_ref()) {
        Ok(net) => net,
        Err(e) => {
            eprintln!("elaboration error: {e}");
            return Ok(1);
        }
    };
    match simulate(&net, &trace) {
        Ok(result) => {
            emit(&out.map(Path::to_path_buf), &to_csv_string(&result))?;
            Ok(0)
        }
        Err(e) => {
            eprintln!("simulation error: {e}");
            Ok(1)
        }
    }
}

fn make_gateway(config: &PipelineConfig) -> anyhow::Result<Gateway> {
    match config.mode {
        RunMode::Replay => {
            let path = config.cassette.as_ref().expect("validated by load_config");
            Ok(Gateway::replay(Cassette::load(path)?))
        }
        RunMode::Record | RunMode::Live => {
            if std::env::var_os(&config.provider.auth_env_var).is_none() {
                anyhow::bail!(
                    "{} mode needs the API key in ${}",
                    config.mode.as_str(),
                    config.provider.auth_env_var
                );
            }
            let transport = Box::new(HttpTransport::default());
            let provider = config.provider.clone();
            Ok(match config.mode {
                RunMode::Record => {
                    let path = config.cassette.as_ref().expect("validated by load_config");
                    let cassette = if path.exists() {
                        Cassette::load(path)?
                    } else {
                        let name = path
                            .file_stem()
                            .map(|s| s.to_string_lossy().into_owned())
                            .unwrap_or_else(|| "cassette".to_string());
                        Cassette::new(&name)
                    };
                    Gateway::record(provider, transport, cassette)
                }
                _ => Gateway::live(provider, transport),
            })
        }
    }
}

fn run_one_task(
    task_arg: &str,
    config: &PipelineConfig,
    index: &LibraryIndex,
    out_dir: &Path,
) -> anyhow::Result<SessionStatus> {
    let task = resolve_task(task_arg)?;
    let mut session_config =
        SessionConfig::new(&format!("task{}", task.task_id), &config.provider.model_id);
    session_config.max_tokens = config.provider.max_tokens;
    session_config.max_compile_iters = config.max_compile_iters;
    session_config.max_sim_iters = config.max_sim_iters;
    session_config.ai_eval = config.ai_eval;
    session_config.behavioral_repair = config.behavioral_repair;
    session_config.compile_backend = CompileBackend::BuiltinValidator;
    let mut gateway = make_gateway(config)?;
    let session = run_session(&task, index, &session_config, &mut gateway);
    if config.mode == RunMode::Record {
        if let (Some(path), Some(cassette)) = (&config.cassette, gateway.cassette()) {
            cassette.save(path)?;
        }
    }
    let dir = write_session_dir(&session, out_dir)?;
    eprintln!(
        "task {}: {} ({})",
        task.task_id,
        session.status,
        dir.display()
    );
    if let Some(cause) = &session.failure_cause {
        eprintln!("task {}: {cause}", task.task_id);
    }
    Ok(session.status)
}

fn cmd_generate(
    tasks: &[String],
    config_path: &Path,
    mode: Option<&str>,
    out: Option<&Path>,
    jobs: usize,
) -> anyhow::Result<u8> {
    let mut config = load_config(config_path)?;
    if let Some(mode) = mode {
        let mode = RunMode::parse(mode)
            .ok_or_else(|| anyhow::anyhow!("unknown mode {mode} (live|replay|record)"))?;
        if config.cassette.is_none() && matches!(mode, RunMode::Replay | RunMode::Record) {
            anyhow::bail!("mode {} requires a cassette path in the config", mode.as_str());
        }
        config.mode = mode;
    }
    if let Some(out) = out {
        config.out_dir = out.to_path_buf();
    }
    let index = match &config.index_file {
        Some(path) => load_grounding_index(path)?,
        None => {
            let mut index = build_index(&config.library_root, &config.library_version)?;
            if let Some(map) = &config.rename_map {
                index.rename_map = load_rename_map(map)?;
            }
            index
        }
    };
    // Recording into one cassette file from several threads would interleave
    // writes; record runs serially regardless of --jobs.
    let jobs = if config.mode == RunMode::Record { 1 } else { jobs.max(1) };
    let mut all_converged = true;
    if jobs == 1 || tasks.len() == 1 {
        for task_arg in tasks {
            let status = run_one_task(task_arg, &config, &index, &config.out_dir)?;
            all_converged &= status == SessionStatus::Converged;
        }
    } else {
        let results = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk in tasks.chunks(tasks.len().div_ceil(jobs)) {
                let config = &config;
                let index = &index;
                handles.push(scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|t| run_one_task(t, config, index, &config.out_dir))
                        .collect::<Vec<_>>()
                }));
            }
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("session thread panicked"))
                .collect::<Vec<_>>()
        });
        for result in results {
            all_converged &= result? == SessionStatus::Converged;
        }
    }
    Ok(if all_converged { 0 } else { 1 })
}

fn cmd_conform(file: &Path, task_arg: &str, index_path: &Path) -> anyhow::Result<u8> {
    let index = load_grounding_index(index_path)?;
    let task = resolve_task(task_arg)?;
    let source = fs::read_to_string(file)?;
    let block = match ast::parse(&source) {
        Ok(block) => block,
        Err(e) => {
            eprintln!("parse error: {e}");
            return Ok(1);
        }
    };
    let outcome = match check_conformance(&task.oracle_id, &block, &index) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("{e}");
            return Ok(1);
        }
    };
    for (name, ok) in &outcome.verdicts {
        println!("{name}\t{}", if *ok { "pass" } else { "fail" });
    }
    Ok(if outcome.pass { 0 } else { 1 })
}

fn cmd_eval(command: &EvalCommand) -> anyhow::Result<u8> {
    match command {
        EvalCommand::Form { session_id, out } => {
            emit(out, &human_eval_form(session_id))?;
            Ok(0)
        }
        EvalCommand::Ingest { form } => {
            let text = fs::read_to_string(form)?;
            match ingest_human_eval(&text) {
                Ok(record) => {
                    print!("{}", render_report_csv(std::slice::from_ref(&record)));
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("{e}");
                    Ok(1)
                }
            }
        }
        EvalCommand::Report { dir, csv } => {
            let mut records = Vec::new();
            let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for path in entries {
                let text = fs::read_to_string(&path)?;
                match ingest_human_eval(&text) {
                    Ok(record) => records.push(record),
                    Err(e) => eprintln!("skipping {}: {e}", path.display()),
                }
            }
            if *csv {
                print!("{}", render_report_csv(&records));
            } else {
                print!("{}", render_report_text(&aggregate_report(&records)));
            }
            Ok(0)
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Index {
            root,
            version,
            rename_map,
            out,
        } => cmd_index(root, version, rename_map.as_deref(), out.as_deref()),
        Command::Lookup {
            name,
            index,
            fuzzy,
            k,
        } => cmd_lookup(name, index, *fuzzy, *k),
        Command::Validate { file, index, task } => cmd_validate(file, index, task.as_deref()),
        Command::Simulate {
            file,
            inputs,
            index,
            step,
            out,
        } => cmd_simulate(file, inputs, index.as_deref(), *step, out.as_deref()),
        Command::Generate {
            task,
            config,
            mode,
            out,
            jobs,
        } => cmd_generate(task, config, mode.as_deref(), out.as_deref(), *jobs),
        Command::Conform { file, task, index } => cmd_conform(file, task, index),
        Command::Eval { command } => cmd_eval(command),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
