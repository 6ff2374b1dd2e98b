//! The five reference control tasks, their interface declarations, numeric
//! constants, polarity probes, and the uniform task-prompt template.
//!
//! Tasks are data: the shipped tasks 1–5 are built in code, and the same
//! key=value file format loads custom tasks from disk.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cdl_core::ast::SignalKind;
use cdl_core::interp::SignalValue;
use cdl_core::validate::{PolarityProbe, TaskSpec};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConnector {
    pub name: String,
    pub kind: SignalKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTask {
    pub task_id: String,
    pub title: String,
    pub goal_phrase: String,
    pub inputs: Vec<TaskConnector>,
    pub outputs: Vec<TaskConnector>,
    pub sequence_rules: Vec<String>,
    pub oracle_id: String,
    pub numeric_params: Vec<(String, f64)>,
    pub probes: Vec<PolarityProbe>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("unknown task id {0}")]
    UnknownTask(String),
    #[error("malformed task file: {0}")]
    Malformed(String),
}

impl ReferenceTask {
    pub fn to_task_spec(&self) -> TaskSpec {
        TaskSpec {
            task_id: self.task_id.clone(),
            inputs: self
                .inputs
                .iter()
                .map(|c| (c.name.clone(), c.kind))
                .collect(),
            outputs: self
                .outputs
                .iter()
                .map(|c| (c.name.clone(), c.kind))
                .collect(),
            probes: self.probes.clone(),
        }
    }

    pub fn input_kind(&self, name: &str) -> Option<SignalKind> {
        self.inputs
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.kind)
    }
}

/// The three-part prompt every task shares: goal sentence, interface
/// declaration, sequence rules. Tasks differ only in content, not in form.
pub fn control_task_prompt(task: &ReferenceTask) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Please {}.", task.goal_phrase);
    out.push_str("The inputs are:\n");
    for c in &task.inputs {
        let _ = writeln!(out, "- {} ({}): {}", c.name, kind_name(c.kind), c.description);
    }
    out.push_str("The outputs are:\n");
    for c in &task.outputs {
        let _ = writeln!(out, "- {} ({}): {}", c.name, kind_name(c.kind), c.description);
    }
    out.push_str("The control sequence is:\n");
    for (i, rule) in task.sequence_rules.iter().enumerate() {
        let _ = writeln!(out, "{}. {}", i + 1, rule);
    }
    if !task.numeric_params.is_empty() {
        out.push_str("Constants:\n");
        for (name, value) in &task.numeric_params {
            let _ = writeln!(out, "- {name} = {value}");
        }
    }
    out.trim_end().to_string()
}

fn kind_name(kind: SignalKind) -> &'static str {
    match kind {
        SignalKind::Real => "Real",
        SignalKind::Boolean => "Boolean",
        SignalKind::Integer => "Integer",
    }
}

fn conn(name: &str, kind: SignalKind, description: &str) -> TaskConnector {
    TaskConnector {
        name: name.to_string(),
        kind,
        description: description.to_string(),
    }
}

fn probe(
    output: &str,
    expected_sign: i8,
    low: &[(&str, SignalValue)],
    high: &[(&str, SignalValue)],
    step_size: f64,
    hold_steps: usize,
) -> PolarityProbe {
    PolarityProbe {
        output: output.to_string(),
        expected_sign,
        low: low.iter().map(|(n, v)| (n.to_string(), v.clone())).collect(),
        high: high
            .iter()
            .map(|(n, v)| (n.to_string(), v.clone()))
            .collect(),
        step_size,
        hold_steps,
    }
}

/// The shipped reference task definitions.
pub fn builtin_task(id: u32) -> Result<ReferenceTask, TaskError> {
    use SignalValue::{Boolean, Integer, Real};
    let task = match id {
        1 => ReferenceTask {
            task_id: "1".to_string(),
            title: "Chiller enable/disable".to_string(),
            goal_phrase: "generate a Modelica control block for enabling and disabling a chiller"
                .to_string(),
            inputs: vec![
                conn("TChi_CHWST", SignalKind::Real, "chilled water supply temperature in K"),
                conn("TChiSet", SignalKind::Real, "chilled water supply temperature setpoint in K"),
            ],
            outputs: vec![conn("y", SignalKind::Boolean, "chiller enable command")],
            sequence_rules: vec![
                "Enable the chiller if TChi_CHWST > TChiSet + TDeaBan.".to_string(),
                "Disable the chiller if TChi_CHWST <= TChiSet.".to_string(),
                "Hold the previous command inside the dead band to avoid short cycling."
                    .to_string(),
            ],
            oracle_id: "O1".to_string(),
            numeric_params: vec![("TDeaBan".to_string(), 1.0)],
            probes: vec![probe(
                "y",
                1,
                &[("TChi_CHWST", Real(279.0)), ("TChiSet", Real(280.0))],
                &[("TChi_CHWST", Real(283.0)), ("TChiSet", Real(280.0))],
                60.0,
                5,
            )],
        },
        2 => ReferenceTask {
            task_id: "2".to_string(),
            title: "CHW minimum-flow bypass valve".to_string(),
            goal_phrase:
                "generate a block for the chilled water minimum-flow bypass valve controller"
                    .to_string(),
            inputs: vec![
                conn("VChiWat_flow", SignalKind::Real, "measured chilled water flow rate in m3/s"),
                conn(
                    "VChiWatSet_flow",
                    SignalKind::Real,
                    "minimum chilled water flow setpoint in m3/s",
                ),
                conn(
                    "uChiWatPum",
                    SignalKind::Boolean,
                    "true if any chilled water pump is proven on",
                ),
            ],
            outputs: vec![conn("yValPos", SignalKind::Real, "bypass valve position, 0 to 1")],
            sequence_rules: vec![
                "If any chilled water pump is proven on, enable the PI loop that maintains VChiWat_flow at VChiWatSet_flow.".to_string(),
                "Otherwise, drive the valve 100% open.".to_string(),
                "Set the loop bias to 100% when enabled, so the valve opens fully at enable and throttles down as flow rises.".to_string(),
            ],
            oracle_id: "O2".to_string(),
            numeric_params: vec![("yBia".to_string(), 1.0), ("yDis".to_string(), 1.0)],
            // Low point is an over-flow (valve throttles below full open),
            // high point is starved (valve rides at the 100% bias); an
            // inverted loop produces a negative delta rather than pinning
            // both points at the output clamp.
            probes: vec![probe(
                "yValPos",
                1,
                &[
                    ("VChiWat_flow", Real(0.8)),
                    ("VChiWatSet_flow", Real(0.5)),
                    ("uChiWatPum", Boolean(true)),
                ],
                &[
                    ("VChiWat_flow", Real(0.3)),
                    ("VChiWatSet_flow", Real(0.5)),
                    ("uChiWatPum", Boolean(true)),
                ],
                10.0,
                6,
            )],
        },
        3 => ReferenceTask {
            task_id: "3".to_string(),
            title: "Cooling-tower fan speed".to_string(),
            goal_phrase: "generate a Modelica control block for cooling-tower speed control"
                .to_string(),
            inputs: vec![
                conn("TCWSupSet", SignalKind::Real, "condenser water supply temperature setpoint in K"),
                conn("TCWSup", SignalKind::Real, "condenser water supply temperature in K"),
                conn("TCHWSupSet", SignalKind::Real, "chilled water supply temperature setpoint in K"),
                conn("TCHWSup", SignalKind::Real, "chilled water supply temperature in K"),
                conn(
                    "cooMod",
                    SignalKind::Integer,
                    "cooling mode: 1 full mechanical, 2 part mechanical, 3 free cooling",
                ),
            ],
            outputs: vec![conn("y", SignalKind::Real, "cooling tower fan speed, 0 to 1")],
            sequence_rules: vec![
                "Full mechanical cooling (cooMod = 1): track TCWSup to TCWSupSet.".to_string(),
                "Part mechanical cooling (cooMod = 2): run the fan at 100% speed.".to_string(),
                "Free cooling (cooMod = 3): track TCHWSup to TCHWSupSet.".to_string(),
            ],
            oracle_id: "O3".to_string(),
            numeric_params: vec![],
            probes: vec![
                probe(
                    "y",
                    1,
                    &[
                        ("TCWSupSet", Real(300.0)),
                        ("TCWSup", Real(300.0)),
                        ("TCHWSupSet", Real(280.0)),
                        ("TCHWSup", Real(280.0)),
                        ("cooMod", Integer(1)),
                    ],
                    &[
                        ("TCWSupSet", Real(300.0)),
                        ("TCWSup", Real(303.0)),
                        ("TCHWSupSet", Real(280.0)),
                        ("TCHWSup", Real(280.0)),
                        ("cooMod", Integer(1)),
                    ],
                    10.0,
                    5,
                ),
                probe(
                    "y",
                    1,
                    &[
                        ("TCWSupSet", Real(300.0)),
                        ("TCWSup", Real(300.0)),
                        ("TCHWSupSet", Real(280.0)),
                        ("TCHWSup", Real(280.0)),
                        ("cooMod", Integer(3)),
                    ],
                    &[
                        ("TCWSupSet", Real(300.0)),
                        ("TCWSup", Real(300.0)),
                        ("TCHWSupSet", Real(280.0)),
                        ("TCHWSup", Real(283.0)),
                        ("cooMod", Integer(3)),
                    ],
                    10.0,
                    5,
                ),
            ],
        },
        4 => ReferenceTask {
            task_id: "4".to_string(),
            title: "Plant requests".to_string(),
            goal_phrase: "generate a Modelica control block for chilled-water reset request and chiller plant request".to_string(),
            inputs: vec![
                conn("TAirSup", SignalKind::Real, "supply air temperature in K"),
                conn("TAirSupSet", SignalKind::Real, "supply air temperature setpoint in K"),
                conn("uCooCoi", SignalKind::Real, "chilled water valve position, 0 to 1"),
            ],
            outputs: vec![
                conn("yChiWatResReq", SignalKind::Integer, "chilled water reset request"),
                conn("yChiPlaReq", SignalKind::Integer, "chiller plant request"),
            ],
            sequence_rules: vec![
                "Send 3 chilled water reset requests while TAirSup exceeds TAirSupSet by more than 3 K for 2 minutes.".to_string(),
                "Else send 2 requests while TAirSup exceeds TAirSupSet by more than 2 K for 2 minutes.".to_string(),
                "Else send 1 request while uCooCoi is greater than 0.95, until uCooCoi drops below 0.85.".to_string(),
                "Else send 0 requests.".to_string(),
                "Send 1 chiller plant request while uCooCoi is greater than 0.95, until uCooCoi drops below 0.1; else send 0.".to_string(),
            ],
            oracle_id: "O4".to_string(),
            numeric_params: vec![
                ("TDif3K".to_string(), 3.0),
                ("TDif2K".to_string(), 2.0),
                ("delay".to_string(), 120.0),
                ("valHig".to_string(), 0.95),
                ("valResLow".to_string(), 0.85),
                ("valPlaLow".to_string(), 0.1),
            ],
            probes: vec![probe(
                "yChiWatResReq",
                1,
                &[
                    ("TAirSup", Real(287.0)),
                    ("TAirSupSet", Real(287.0)),
                    ("uCooCoi", Real(0.05)),
                ],
                &[
                    ("TAirSup", Real(287.0)),
                    ("TAirSupSet", Real(287.0)),
                    ("uCooCoi", Real(0.96)),
                ],
                60.0,
                5,
            )],
        },
        5 => ReferenceTask {
            task_id: "5".to_string(),
            title: "Relief-damper control".to_string(),
            goal_phrase:
                "generate a Modelica control block for relief-damper control for a system without a relief fan"
                    .to_string(),
            inputs: vec![
                conn("dpBui", SignalKind::Real, "building static pressure in Pa"),
                conn("u1SupFan", SignalKind::Boolean, "true if the supply fan is proven on"),
            ],
            outputs: vec![conn("yRelDam", SignalKind::Real, "relief damper position, 0 to 1")],
            sequence_rules: vec![
                "Enable the control when the supply fan is proven on.".to_string(),
                "While enabled, activate the P-only loop to maintain dpBui at the dpSet setpoint; the damper opens as building pressure rises.".to_string(),
                "Close the damper when disabled.".to_string(),
            ],
            oracle_id: "O5".to_string(),
            numeric_params: vec![("dpSet".to_string(), 12.0)],
            probes: vec![probe(
                "yRelDam",
                1,
                // Both points sit off the setpoint so an inverted loop shows
                // a wrong-signed delta instead of clamping to zero.
                &[("dpBui", Real(4.0)), ("u1SupFan", Boolean(true))],
                &[("dpBui", Real(22.0)), ("u1SupFan", Boolean(true))],
                10.0,
                5,
            )],
        },
        other => return Err(TaskError::UnknownTask(other.to_string())),
    };
    Ok(task)
}

pub fn all_builtin_tasks() -> Vec<ReferenceTask> {
    (1..=5).map(|i| builtin_task(i).unwrap()).collect()
}

fn fmt_signal(v: &SignalValue) -> String {
    match v {
        SignalValue::Real(x) => format!("{x}"),
        SignalValue::Boolean(b) => format!("{b}"),
        SignalValue::Integer(i) => format!("{i}"),
    }
}

fn parse_signal(kind: SignalKind, s: &str) -> Result<SignalValue, TaskError> {
    let bad = || TaskError::Malformed(format!("bad {} value: {s}", kind_name(kind)));
    Ok(match kind {
        SignalKind::Real => SignalValue::Real(s.parse().map_err(|_| bad())?),
        SignalKind::Boolean => SignalValue::Boolean(s.parse().map_err(|_| bad())?),
        SignalKind::Integer => SignalValue::Integer(s.parse().map_err(|_| bad())?),
    })
}

/// Serialize a task in the key=value file format.
pub fn task_to_string(task: &ReferenceTask) -> String {
    let mut out = String::new();
    out.push_str("[task]\n");
    let _ = writeln!(out, "id={}", task.task_id);
    let _ = writeln!(out, "title={}", task.title);
    let _ = writeln!(out, "goal={}", task.goal_phrase);
    let _ = writeln!(out, "oracle={}", task.oracle_id);
    out.push_str("[inputs]\n");
    for c in &task.inputs {
        let _ = writeln!(out, "{}={}|{}", c.name, kind_name(c.kind), c.description);
    }
    out.push_str("[outputs]\n");
    for c in &task.outputs {
        let _ = writeln!(out, "{}={}|{}", c.name, kind_name(c.kind), c.description);
    }
    out.push_str("[params]\n");
    for (name, value) in &task.numeric_params {
        let _ = writeln!(out, "{name}={value}");
    }
    out.push_str("[rules]\n");
    for (i, rule) in task.sequence_rules.iter().enumerate() {
        let _ = writeln!(out, "{}={}", i + 1, rule);
    }
    for p in &task.probes {
        let _ = writeln!(out, "[probe {}]", p.output);
        let _ = writeln!(out, "sign={}", p.expected_sign);
        let _ = writeln!(out, "step={}", p.step_size);
        let _ = writeln!(out, "hold={}", p.hold_steps);
        let join = |assigns: &[(String, SignalValue)]| {
            assigns
                .iter()
                .map(|(n, v)| format!("{n}:{}", fmt_signal(v)))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(out, "low={}", join(&p.low));
        let _ = writeln!(out, "high={}", join(&p.high));
    }
    out
}

/// Parse the key=value task file format produced by [`task_to_string`].
pub fn parse_task(text: &str) -> Result<ReferenceTask, TaskError> {
    let mut task = ReferenceTask {
        task_id: String::new(),
        title: String::new(),
        goal_phrase: String::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        sequence_rules: Vec::new(),
        oracle_id: String::new(),
        numeric_params: Vec::new(),
        probes: Vec::new(),
    };
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(head) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = head.trim().to_string();
            if let Some(output) = section.strip_prefix("probe ") {
                task.probes.push(PolarityProbe {
                    output: output.trim().to_string(),
                    expected_sign: 1,
                    low: Vec::new(),
                    high: Vec::new(),
                    step_size: 10.0,
                    hold_steps: 5,
                });
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            TaskError::Malformed(format!("line {}: expected key=value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match section.as_str() {
            "task" => match key {
                "id" => task.task_id = value.to_string(),
                "title" => task.title = value.to_string(),
                "goal" => task.goal_phrase = value.to_string(),
                "oracle" => task.oracle_id = value.to_string(),
                other => {
                    return Err(TaskError::Malformed(format!("unknown task key {other}")))
                }
            },
            "inputs" | "outputs" => {
                let (kind, description) = value.split_once('|').unwrap_or((value, ""));
                let kind = match kind.trim() {
                    "Real" => SignalKind::Real,
                    "Boolean" => SignalKind::Boolean,
                    "Integer" => SignalKind::Integer,
                    other => {
                        return Err(TaskError::Malformed(format!("unknown kind {other}")))
                    }
                };
                let c = conn(key, kind, description.trim());
                if section == "inputs" {
                    task.inputs.push(c);
                } else {
                    task.outputs.push(c);
                }
            }
            "params" => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| TaskError::Malformed(format!("bad number for {key}")))?;
                task.numeric_params.push((key.to_string(), v));
            }
            "rules" => task.sequence_rules.push(value.to_string()),
            s if s.starts_with("probe ") => {
                let p = task
                    .probes
                    .last_mut()
                    .expect("probe section opened before keys");
                match key {
                    "sign" => {
                        p.expected_sign = value
                            .parse()
                            .map_err(|_| TaskError::Malformed("bad probe sign".into()))?
                    }
                    "step" => {
                        p.step_size = value
                            .parse()
                            .map_err(|_| TaskError::Malformed("bad probe step".into()))?
                    }
                    "hold" => {
                        p.hold_steps = value
                            .parse()
                            .map_err(|_| TaskError::Malformed("bad probe hold".into()))?
                    }
                    "low" | "high" => {
                        let mut assigns = Vec::new();
                        for pair in value.split(',').filter(|s| !s.is_empty()) {
                            let (name, v) = pair.split_once(':').ok_or_else(|| {
                                TaskError::Malformed(format!("bad probe assignment {pair}"))
                            })?;
                            let kind = task
                                .inputs
                                .iter()
                                .find(|c| c.name == name.trim())
                                .map(|c| c.kind)
                                .ok_or_else(|| {
                                    TaskError::Malformed(format!(
                                        "probe names unknown input {name}"
                                    ))
                                })?;
                            assigns.push((name.trim().to_string(), parse_signal(kind, v.trim())?));
                        }
                        if key == "low" {
                            p.low = assigns;
                        } else {
                            p.high = assigns;
                        }
                    }
                    other => {
                        return Err(TaskError::Malformed(format!("unknown probe key {other}")))
                    }
                }
            }
            other => {
                return Err(TaskError::Malformed(format!("unknown section [{other}]")))
            }
        }
    }
    if task.task_id.is_empty() {
        return Err(TaskError::Malformed("missing [task] id".into()));
    }
    Ok(task)
}

pub fn load_task(path: &Path) -> Result<ReferenceTask, TaskError> {
    let text = fs::read_to_string(path)
        .map_err(|e| TaskError::Malformed(format!("{}: {e}", path.display())))?;
    parse_task(&text)
}

/// Resolve a `--task` argument: a bare 1–5 id loads the shipped definition,
/// anything else is treated as a task file path.
pub fn resolve_task(arg: &str) -> Result<ReferenceTask, TaskError> {
    if let Ok(id) = arg.parse::<u32>() {
        builtin_task(id)
    } else {
        load_task(Path::new(arg))
    }
}
