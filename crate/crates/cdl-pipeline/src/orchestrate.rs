//! The generation pipeline: module selection, code generation, the compile
//! and simulate gates with repair loops, and full session transcripting.
//!
//! A session always returns; unrecoverable conditions (empty code, no
//! selectable modules, a replay miss) are recorded on the session rather
//! than raised. Wall-clock timestamps live in a separate file next to the
//! session directory contents so that replayed sessions are byte-identical.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use cdl_core::ast::{parse, ModelicaBlock};
use cdl_core::index::{hard_rule_lookup, LibraryIndex};
use cdl_core::interp::{elaborate, simulate, to_csv_string, SimulationTrace};
use cdl_core::validate::{report_lines, validate};
use thiserror::Error;

use crate::evalrec::{ai_evaluate, AiPathway, EvaluationRecord};
use crate::gateway::{extract_code, ChatRequest, ChatResponse, Gateway, GatewayError, ModelMetrics};
use crate::oracle::{check_conformance, probe_trace};
use crate::prompt::{
    code_generator_template, control_expert_template, iteration_template, render, RoleId,
};
use crate::tasks::{control_task_prompt, ReferenceTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    HardRule,
    Fuzzy,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::HardRule => "hard_rule",
            Provenance::Fuzzy => "fuzzy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Converged,
    FailedMaxIterations,
    FailedUnrecoverable,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionStatus::Converged => "converged",
            SessionStatus::FailedMaxIterations => "failed_max_iterations",
            SessionStatus::FailedUnrecoverable => "failed_unrecoverable",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    pub role: RoleId,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub iteration: usize,
    pub source: String,
    pub diagnostics: String,
    pub gate_passed: bool,
    pub trace: Option<SimulationTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileBackend {
    BuiltinValidator,
    ExternalToolchain(ToolchainConfig),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolchainConfig {
    pub command: String,
    pub script_template_path: PathBuf,
    pub timeout_s: u64,
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub session_id: String,
    pub model_id: String,
    pub max_tokens: u32,
    pub max_compile_iters: usize,
    pub max_sim_iters: usize,
    pub ai_eval: bool,
    /// Behavior failures do not loop by default; they route to human
    /// evaluation. This flag enables an experimental repair pass.
    pub behavioral_repair: bool,
    pub compile_backend: CompileBackend,
}

impl SessionConfig {
    pub fn new(session_id: &str, model_id: &str) -> SessionConfig {
        SessionConfig {
            session_id: session_id.to_string(),
            model_id: model_id.to_string(),
            max_tokens: 4096,
            max_compile_iters: 3,
            max_sim_iters: 2,
            ai_eval: false,
            behavioral_repair: false,
            compile_backend: CompileBackend::BuiltinValidator,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationSession {
    pub session_id: String,
    pub task_id: String,
    pub selected_modules: Vec<(String, Provenance)>,
    pub transcript: Vec<TranscriptEntry>,
    pub artifacts: Vec<Artifact>,
    pub notes: Vec<String>,
    pub status: SessionStatus,
    pub failure_cause: Option<String>,
    pub compile_iters: usize,
    pub sim_iters: usize,
    pub eval_calls: usize,
    /// Behavioral conformance of the final artifact: None when never run.
    pub conformance: Option<(bool, Vec<(String, bool)>)>,
    pub ai_record: Option<EvaluationRecord>,
    pub metrics: BTreeMap<String, ModelMetrics>,
}

#[derive(Debug, Error)]
pub enum OrchestrateError {
    #[error("no selected module survived lookup")]
    NoModulesSelected,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error("toolchain command `{0}` is unavailable")]
    Unavailable(String),
    #[error("toolchain i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileOutcome {
    Ok,
    Error(String),
}

/// Strip a leading bullet glyph (and any list numbering) from a selector
/// reply line.
fn strip_bullet(line: &str) -> &str {
    let mut s = line.trim();
    for prefix in ["-", "*", "•", "·"] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest.trim();
            break;
        }
    }
    // Tolerate "1." / "1)" numbering.
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            s = r.trim();
        }
    }
    s.trim_matches('`').trim()
}

fn complete_logged(
    gateway: &mut Gateway,
    role: RoleId,
    request: ChatRequest,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<ChatResponse, GatewayError> {
    let response = gateway.complete(&request)?;
    transcript.push(TranscriptEntry {
        role,
        request,
        response: response.clone(),
    });
    Ok(response)
}

/// Ask the control-expert model for a module list and ground every name via
/// hard-rule lookup. Unknown names are dropped with a note.
pub fn select_modules(
    task: &ReferenceTask,
    index: &LibraryIndex,
    config: &SessionConfig,
    gateway: &mut Gateway,
    transcript: &mut Vec<TranscriptEntry>,
    notes: &mut Vec<String>,
) -> Result<Vec<(String, Provenance)>, OrchestrateError> {
    let mut values = BTreeMap::new();
    values.insert("task".to_string(), control_task_prompt(task));
    values.insert("txt".to_string(), index.terminal_names().join("\n"));
    let bundle = render(&control_expert_template(), &values).expect("template covers values");
    let mut request = ChatRequest::new(&config.model_id, &bundle.system_text, &bundle.user_text);
    request.max_tokens = config.max_tokens;
    let response = complete_logged(gateway, RoleId::ControlExpert, request, transcript)?;
    let mut selected: Vec<(String, Provenance)> = Vec::new();
    for line in response.text.lines() {
        let name = strip_bullet(line);
        if name.is_empty() {
            continue;
        }
        let result = hard_rule_lookup(index, name);
        if result.hits.is_empty() {
            notes.push(format!("selector name dropped (no hard-rule match): {name}"));
            continue;
        }
        for (fqn, _score) in &result.hits {
            if !selected.iter().any(|(sel, _)| sel == fqn) {
                selected.push((fqn.clone(), Provenance::HardRule));
            }
        }
    }
    if selected.is_empty() {
        return Err(OrchestrateError::NoModulesSelected);
    }
    Ok(selected)
}

/// Run the external compile backend: write the source to a scratch file,
/// render the load-and-check script, and classify by exit status.
pub fn compile_external(
    source: &str,
    toolchain: &ToolchainConfig,
) -> Result<CompileOutcome, ToolchainError> {
    let dir = tempfile::tempdir()?;
    let source_path = dir.path().join("candidate.mo");
    fs::write(&source_path, source)?;
    let template = fs::read_to_string(&toolchain.script_template_path)?;
    let script = template.replace("{source_path}", &source_path.display().to_string());
    let script_path = dir.path().join("check.script");
    fs::write(&script_path, script)?;
    let mut child = std::process::Command::new(&toolchain.command)
        .arg(&script_path)
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ToolchainError::Unavailable(toolchain.command.clone())
            } else {
                ToolchainError::Io(e)
            }
        })?;
    let started = Instant::now();
    loop {
        match child.try_wait()? {
            Some(_) => break,
            None if started.elapsed() > Duration::from_secs(toolchain.timeout_s) => {
                let _ = child.kill();
                let _ = child.wait();
                return Ok(CompileOutcome::Error(format!(
                    "toolchain timed out after {} s",
                    toolchain.timeout_s
                )));
            }
            None => std::thread::sleep(Duration::from_millis(20)),
        }
    }
    let output = child.wait_with_output()?;
    let log = format!(
        "{}{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    if output.status.success() {
        Ok(CompileOutcome::Ok)
    } else {
        Ok(CompileOutcome::Error(log))
    }
}

enum GateCheck {
    Passed(ModelicaBlock, String),
    Failed(String),
}

/// Compile-gate check for one artifact: parse, then validate (or run the
/// external toolchain). Returns the diagnostics text either way.
fn compile_gate(
    source: &str,
    task: &ReferenceTask,
    index: &LibraryIndex,
    backend: &CompileBackend,
    notes: &mut Vec<String>,
) -> GateCheck {
    let block = match parse(source) {
        Ok(block) => block,
        Err(e) => return GateCheck::Failed(format!("parse error: {e}")),
    };
    if let CompileBackend::ExternalToolchain(tc) = backend {
        match compile_external(source, tc) {
            Ok(CompileOutcome::Ok) => return GateCheck::Passed(block, String::new()),
            Ok(CompileOutcome::Error(log)) => return GateCheck::Failed(log),
            Err(ToolchainError::Unavailable(cmd)) => {
                notes.push(format!(
                    "external toolchain `{cmd}` unavailable; fell back to the builtin validator"
                ));
            }
            Err(ToolchainError::Io(e)) => {
                notes.push(format!(
                    "external toolchain i/o failure ({e}); fell back to the builtin validator"
                ));
            }
        }
    }
    let spec = task.to_task_spec();
    let report = validate(&block, index, Some(&spec));
    let diagnostics = report_lines(&report);
    if report.passed {
        GateCheck::Passed(block, diagnostics)
    } else {
        GateCheck::Failed(diagnostics)
    }
}

/// Run the full pipeline for one task. The session always comes back; its
/// status says how far it got.
pub fn run_session(
    task: &ReferenceTask,
    index: &LibraryIndex,
    config: &SessionConfig,
    gateway: &mut Gateway,
) -> GenerationSession {
    let mut session = GenerationSession {
        session_id: config.session_id.clone(),
        task_id: task.task_id.clone(),
        selected_modules: Vec::new(),
        transcript: Vec::new(),
        artifacts: Vec::new(),
        notes: Vec::new(),
        status: SessionStatus::FailedUnrecoverable,
        failure_cause: None,
        compile_iters: 0,
        sim_iters: 0,
        eval_calls: 0,
        conformance: None,
        ai_record: None,
        metrics: BTreeMap::new(),
    };
    let outcome = drive(task, index, config, gateway, &mut session);
    if let Err(e) = outcome {
        session.status = SessionStatus::FailedUnrecoverable;
        session.failure_cause = Some(e.to_string());
    }
    session.metrics = crate::gateway::metrics_summary(
        &session
            .transcript
            .iter()
            .map(|t| t.response.clone())
            .collect::<Vec<_>>(),
    );
    session
}

/// The fallible middle of run_session; errors here mean unrecoverable.
fn drive(
    task: &ReferenceTask,
    index: &LibraryIndex,
    config: &SessionConfig,
    gateway: &mut Gateway,
    session: &mut GenerationSession,
) -> Result<(), OrchestrateError> {
    let task_text = control_task_prompt(task);

    session.selected_modules = select_modules(
        task,
        index,
        config,
        gateway,
        &mut session.transcript,
        &mut session.notes,
    )?;

    let mut values = BTreeMap::new();
    values.insert(
        "modules".to_string(),
        session
            .selected_modules
            .iter()
            .map(|(fqn, _)| fqn.as_str())
            .collect::<Vec<_>>()
            .join("\n"),
    );
    values.insert("task".to_string(), task_text.clone());
    let bundle = render(&code_generator_template(), &values).expect("template covers values");
    let mut request = ChatRequest::new(&config.model_id, &bundle.system_text, &bundle.user_text);
    request.max_tokens = config.max_tokens;
    let response = complete_logged(
        gateway,
        RoleId::CodeGenerator,
        request,
        &mut session.transcript,
    )?;
    let mut source = extract_code(&response.text)?;

    let mut iteration = 0usize;
    let repair = |source: &str,
                  error_log: &str,
                  gateway: &mut Gateway,
                  transcript: &mut Vec<TranscriptEntry>|
     -> Result<String, OrchestrateError> {
        let mut values = BTreeMap::new();
        values.insert("error_log".to_string(), error_log.to_string());
        values.insert("code_content".to_string(), source.to_string());
        let bundle = render(&iteration_template(), &values).expect("template covers values");
        let mut request =
            ChatRequest::new(&config.model_id, &bundle.system_text, &bundle.user_text);
        request.max_tokens = config.max_tokens;
        let response =
            complete_logged(gateway, RoleId::IterationEvaluator, request, transcript)?;
        Ok(extract_code(&response.text)?)
    };

    // Compile gate with repair loop.
    let mut block = None;
    for attempt in 1..=config.max_compile_iters {
        session.compile_iters = attempt;
        iteration += 1;
        match compile_gate(&source, task, index, &config.compile_backend, &mut session.notes) {
            GateCheck::Passed(b, diagnostics) => {
                session.artifacts.push(Artifact {
                    iteration,
                    source: source.clone(),
                    diagnostics,
                    gate_passed: true,
                    trace: None,
                });
                block = Some(b);
                break;
            }
            GateCheck::Failed(diagnostics) => {
                session.artifacts.push(Artifact {
                    iteration,
                    source: source.clone(),
                    diagnostics: diagnostics.clone(),
                    gate_passed: false,
                    trace: None,
                });
                if attempt == config.max_compile_iters {
                    session.status = SessionStatus::FailedMaxIterations;
                    session.failure_cause = Some("compile gate never passed".to_string());
                    return Ok(());
                }
                source = repair(&source, &diagnostics, gateway, &mut session.transcript)?;
            }
        }
    }
    let mut block = block.expect("loop either breaks with a block or returns");

    // Simulate gate with repair loop.
    let probe = match probe_trace(&task.oracle_id) {
        Ok(p) => p,
        Err(_) => {
            session.notes.push(format!(
                "no oracle `{}`; simulate gate and conformance skipped",
                task.oracle_id
            ));
            session.status = SessionStatus::Converged;
            return Ok(());
        }
    };
    let mut simulated = false;
    for attempt in 1..=config.max_sim_iters {
        session.sim_iters = attempt;
        // Elaboration and simulation errors both feed the repair prompt.
        let result: Result<SimulationTrace, String> = match elaborate(&block, Some(index)) {
            Ok(net) => simulate(&net, &probe).map_err(|e| format!("simulation error: {e}")),
            Err(e) => Err(format!("elaboration error: {e}")),
        };
        let error_log = match result {
            Ok(trace) => {
                if let Some(a) = session.artifacts.last_mut() {
                    a.trace = Some(trace);
                }
                simulated = true;
                break;
            }
            Err(log) => log,
        };
        if attempt == config.max_sim_iters {
            session.status = SessionStatus::FailedMaxIterations;
            session.failure_cause = Some("simulate gate never passed".to_string());
            return Ok(());
        }
        source = repair(&source, &error_log, gateway, &mut session.transcript)?;
        iteration += 1;
        match compile_gate(&source, task, index, &config.compile_backend, &mut session.notes) {
            GateCheck::Passed(b, diagnostics) => {
                session.artifacts.push(Artifact {
                    iteration,
                    source: source.clone(),
                    diagnostics,
                    gate_passed: true,
                    trace: None,
                });
                block = b;
            }
            GateCheck::Failed(diagnostics) => {
                session.artifacts.push(Artifact {
                    iteration,
                    source: source.clone(),
                    diagnostics,
                    gate_passed: false,
                    trace: None,
                });
                // The repaired artifact fails static validity again; it never
                // reaches the simulate gate. Count the attempt and stop.
                session.status = SessionStatus::FailedMaxIterations;
                session.failure_cause =
                    Some("simulate-gate repair failed the compile gate".to_string());
                return Ok(());
            }
        }
    }
    debug_assert!(simulated);

    // Behavioral conformance is recorded, not gated: failures route to human
    // evaluation unless experimental behavioral repair is enabled.
    if let Ok(outcome) = check_conformance(&task.oracle_id, &block, index) {
        if !outcome.pass {
            session
                .notes
                .push("behavioral conformance failed; routed to human evaluation".to_string());
        }
        session.conformance = Some((outcome.pass, outcome.verdicts));
    }

    if config.ai_eval {
        let payload = session
            .artifacts
            .last()
            .and_then(|a| a.trace.as_ref())
            .map(to_csv_string)
            .unwrap_or_default();
        let record = ai_evaluate(
            &config.session_id,
            &task_text,
            &payload,
            AiPathway::TraceBased,
            &config.model_id,
            gateway,
        )
        .map_err(|e| match e {
            crate::evalrec::AiEvalError::Gateway(g) => OrchestrateError::Gateway(g),
            crate::evalrec::AiEvalError::Prompt(_) => unreachable!("static template"),
        })?;
        session.eval_calls += 1;
        session.ai_record = Some(record);
    }

    session.status = SessionStatus::Converged;
    Ok(())
}

/// Render the transcript: request and response texts with token counts, no
/// wall-clock data.
pub fn transcript_text(session: &GenerationSession) -> String {
    let mut out = String::new();
    for (i, entry) in session.transcript.iter().enumerate() {
        out.push_str(&format!(
            "=== call {} role={} key={}\n",
            i + 1,
            entry.role,
            entry.request.request_key()
        ));
        out.push_str("--- system\n");
        out.push_str(&entry.request.system_text);
        out.push_str("\n--- user\n");
        out.push_str(&entry.request.user_text);
        out.push_str(&format!(
            "\n--- response (prompt_tokens={} completion_tokens={} latency_s={} replay={})\n",
            entry.response.prompt_tokens,
            entry.response.completion_tokens,
            entry.response.latency_s,
            entry.response.from_replay
        ));
        out.push_str(&entry.response.text);
        out.push('\n');
    }
    for note in &session.notes {
        out.push_str(&format!("note: {note}\n"));
    }
    out
}

pub fn summary_text(session: &GenerationSession) -> String {
    let mut out = String::new();
    out.push_str(&format!("status={}\n", session.status));
    out.push_str(&format!("task_id={}\n", session.task_id));
    out.push_str(&format!("compile_iters={}\n", session.compile_iters));
    out.push_str(&format!("sim_iters={}\n", session.sim_iters));
    out.push_str(&format!("eval_calls={}\n", session.eval_calls));
    let (p, c): (u64, u64) = session
        .metrics
        .values()
        .fold((0, 0), |(p, c), m| (p + m.prompt_tokens, c + m.completion_tokens));
    out.push_str(&format!("prompt_tokens={p}\n"));
    out.push_str(&format!("completion_tokens={c}\n"));
    out.push_str(&format!(
        "selected_modules={}\n",
        session
            .selected_modules
            .iter()
            .map(|(fqn, prov)| format!("{fqn}:{prov}"))
            .collect::<Vec<_>>()
            .join(",")
    ));
    match &session.conformance {
        Some((pass, _)) => out.push_str(&format!(
            "conformance={}\n",
            if *pass { "pass" } else { "fail" }
        )),
        None => out.push_str("conformance=not_run\n"),
    }
    if let Some(cause) = &session.failure_cause {
        out.push_str(&format!("failure_cause={cause}\n"));
    }
    out
}

/// Write `sessions/<id>/`: transcript, per-iteration artifacts, diagnostics
/// and traces, the summary, and (separately) wall-clock timestamps.
pub fn write_session_dir(
    session: &GenerationSession,
    base_dir: &Path,
) -> std::io::Result<PathBuf> {
    let dir = base_dir.join(&session.session_id);
    for sub in ["artifacts", "diagnostics", "traces"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    fs::write(dir.join("transcript.txt"), transcript_text(session))?;
    for artifact in &session.artifacts {
        fs::write(
            dir.join("artifacts")
                .join(format!("iter_{}.mo", artifact.iteration)),
            &artifact.source,
        )?;
        fs::write(
            dir.join("diagnostics")
                .join(format!("iter_{}.txt", artifact.iteration)),
            &artifact.diagnostics,
        )?;
        if let Some(trace) = &artifact.trace {
            fs::write(
                dir.join("traces")
                    .join(format!("iter_{}.csv", artifact.iteration)),
                to_csv_string(trace),
            )?;
        }
    }
    fs::write(dir.join("session.summary"), summary_text(session))?;
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut stamps = fs::File::create(dir.join("session.timestamps"))?;
    writeln!(stamps, "written_unix={now}")?;
    Ok(dir)
}
