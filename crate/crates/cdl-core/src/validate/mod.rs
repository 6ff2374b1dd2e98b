//! Pre-simulation checks over a parsed block, producing machine-readable
//! diagnostics keyed by rule id and fault class.

use crate::ast::{ModelicaBlock, Modifier, ModifierValue, PortPath, QualifiedName, SignalKind};
use crate::index::{resolve_version, LibraryIndex, VersionResolution};
use crate::interp::{self, elaborate, input_trace, simulate, SignalValue};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultClass {
    DuplicatePath,
    InvertedDirection,
    UnknownClass,
    BrokenConnection,
    VersionDrift,
    ScopeViolation,
    TypeMismatch,
    InterfaceMismatch,
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FaultClass::DuplicatePath => "duplicate_path",
            FaultClass::InvertedDirection => "inverted_direction",
            FaultClass::UnknownClass => "unknown_class",
            FaultClass::BrokenConnection => "broken_connection",
            FaultClass::VersionDrift => "version_drift",
            FaultClass::ScopeViolation => "scope_violation",
            FaultClass::TypeMismatch => "type_mismatch",
            FaultClass::InterfaceMismatch => "interface_mismatch",
        };
        write!(f, "{}", s)
    }
}

impl FaultClass {
    pub fn parse(s: &str) -> Option<FaultClass> {
        Some(match s {
            "duplicate_path" => FaultClass::DuplicatePath,
            "inverted_direction" => FaultClass::InvertedDirection,
            "unknown_class" => FaultClass::UnknownClass,
            "broken_connection" => FaultClass::BrokenConnection,
            "version_drift" => FaultClass::VersionDrift,
            "scope_violation" => FaultClass::ScopeViolation,
            "type_mismatch" => FaultClass::TypeMismatch,
            "interface_mismatch" => FaultClass::InterfaceMismatch,
            _ => return None,
        })
    }
}

/// Where a diagnostic points: a declaration or equation by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Location {
    Block,
    Connector(usize),
    Instance(usize),
    Connect(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Block => write!(f, "block"),
            Location::Connector(i) => write!(f, "connector[{}]", i),
            Location::Instance(i) => write!(f, "instance[{}]", i),
            Location::Connect(i) => write!(f, "connect[{}]", i),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub rule_id: &'static str,
    pub severity: Severity,
    pub location: Location,
    pub message: String,
    pub fault_class: Option<FaultClass>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
    pub passed: bool,
    pub checked_rules: Vec<&'static str>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }

    pub fn has_fault(&self, fault: FaultClass) -> bool {
        self.diagnostics.iter().any(|d| d.fault_class == Some(fault))
    }
}

/// Line-oriented diagnostic records:
/// `severity<TAB>rule_id<TAB>fault_class<TAB>location<TAB>message`.
pub fn report_lines(report: &ValidationReport) -> String {
    let mut out = String::new();
    for d in &report.diagnostics {
        let fault = d
            .fault_class
            .map(|f| f.to_string())
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            d.severity, d.rule_id, fault, d.location, d.message
        ));
    }
    out
}

/// Interface expectation and polarity probes for task-aware rules (R6/R7).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskSpec {
    pub task_id: String,
    pub inputs: Vec<(String, SignalKind)>,
    pub outputs: Vec<(String, SignalKind)>,
    pub probes: Vec<PolarityProbe>,
}

/// Two-point direction probe: the block is held at `low` then at `high`
/// input constants; the settled output delta must match `expected_sign`.
/// Magnitude is ignored; a zero delta is not treated as an inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarityProbe {
    pub output: String,
    /// +1: output must rise from `low` to `high`; -1: must fall.
    pub expected_sign: i8,
    pub low: Vec<(String, SignalValue)>,
    pub high: Vec<(String, SignalValue)>,
    pub step_size: f64,
    pub hold_steps: usize,
}

const CDL_ROOT: &str = "Buildings.Controls.OBC.CDL";

/// Standard-library roots tolerated next to the CDL subset; anything else
/// outside CDL is a scope violation.
const SCOPE_ALLOWLIST: [&str; 4] = [
    "Modelica.Blocks.Interfaces",
    "Modelica.Blocks.Logical",
    "Modelica.Blocks.Math",
    "Modelica.Blocks.Sources",
];

fn under(class_ref: &QualifiedName, root: &str) -> bool {
    let root = QualifiedName::parse_str(root).expect("static root");
    class_ref.starts_with(&root)
}

/// The class path R3/R5/R7 should reason with: renamed classes resolve to
/// their current path, everything else passes through.
fn effective_class<'a>(
    class_ref: &'a QualifiedName,
    index: &LibraryIndex,
) -> std::borrow::Cow<'a, QualifiedName> {
    match resolve_version(index, class_ref) {
        VersionResolution::Renamed(new) => std::borrow::Cow::Owned(new),
        _ => std::borrow::Cow::Borrowed(class_ref),
    }
}

enum Resolved {
    BlockInput(usize),
    BlockOutput(usize),
    InstanceInput { inst: usize, kind: SignalKind },
    InstanceOutput { inst: usize, kind: SignalKind },
    /// Instance exists but its class has no known port map.
    Opaque,
    Unknown,
}

fn resolve_endpoint(path: &PortPath, block: &ModelicaBlock, index: &LibraryIndex) -> Resolved {
    match path.segments.as_slice() {
        [name] => {
            if let Some(i) = block.connectors.iter().position(|c| &c.name == name) {
                match block.connectors[i].direction {
                    crate::ast::Direction::Input => Resolved::BlockInput(i),
                    crate::ast::Direction::Output => Resolved::BlockOutput(i),
                }
            } else {
                Resolved::Unknown
            }
        }
        [inst_name, port] => {
            let Some(i) = block
                .instances
                .iter()
                .position(|x| &x.instance_name == inst_name)
            else {
                return Resolved::Unknown;
            };
            let class = effective_class(&block.instances[i].class_ref, index);
            let Some((ins, outs)) = interp::class_ports(&class) else {
                return Resolved::Opaque;
            };
            if let Some((_, kind)) = ins.iter().find(|(n, _)| n == port) {
                Resolved::InstanceInput { inst: i, kind: *kind }
            } else if let Some((_, kind)) = outs.iter().find(|(n, _)| n == port) {
                Resolved::InstanceOutput { inst: i, kind: *kind }
            } else {
                Resolved::Unknown
            }
        }
        _ => Resolved::Unknown,
    }
}

fn endpoint_kind(r: &Resolved, block: &ModelicaBlock) -> Option<SignalKind> {
    match r {
        Resolved::BlockInput(i) | Resolved::BlockOutput(i) => {
            Some(block.connectors[*i].signal_kind)
        }
        Resolved::InstanceInput { kind, .. } | Resolved::InstanceOutput { kind, .. } => {
            Some(*kind)
        }
        _ => None,
    }
}

fn is_source(r: &Resolved) -> bool {
    matches!(r, Resolved::BlockInput(_) | Resolved::InstanceOutput { .. })
}

fn is_sink(r: &Resolved) -> bool {
    matches!(r, Resolved::BlockOutput(_) | Resolved::InstanceInput { .. })
}

/// Runs every rule; R6 and R7 only when a task is given. Diagnostics are
/// ordered by (rule_id, location).
pub fn validate(
    block: &ModelicaBlock,
    index: &LibraryIndex,
    task: Option<&TaskSpec>,
) -> ValidationReport {
    let mut diags = Vec::new();
    rule_r1_unknown_class(block, index, &mut diags);
    rule_r2_scope(block, &mut diags);
    rule_r3_type_mismatch(block, index, &mut diags);
    rule_r4_reachability(block, index, &mut diags);
    rule_r5_duplicate_path(block, index, &mut diags);
    let mut checked = vec!["R1", "R2", "R3", "R4", "R5"];
    if let Some(task) = task {
        rule_r6_interface(block, task, &mut diags);
        rule_r7_polarity(block, index, task, &mut diags);
        checked.push("R6");
        checked.push("R7");
    }
    diags.sort_by(|a, b| a.rule_id.cmp(b.rule_id).then(a.location.cmp(&b.location)));
    let passed = !diags.iter().any(|d| d.severity == Severity::Error);
    ValidationReport {
        diagnostics: diags,
        passed,
        checked_rules: checked,
    }
}

fn rule_r1_unknown_class(
    block: &ModelicaBlock,
    index: &LibraryIndex,
    diags: &mut Vec<Diagnostic>,
) {
    for (i, inst) in block.instances.iter().enumerate() {
        if !under(&inst.class_ref, CDL_ROOT) {
            // non-CDL classes are R2's concern
            continue;
        }
        match resolve_version(index, &inst.class_ref) {
            VersionResolution::Found => {}
            VersionResolution::Renamed(new) => diags.push(Diagnostic {
                rule_id: "R1",
                severity: Severity::Warning,
                location: Location::Instance(i),
                message: format!(
                    "`{}` ({}) refers to a renamed class; use `{}`",
                    inst.instance_name, inst.class_ref, new
                ),
                fault_class: Some(FaultClass::VersionDrift),
            }),
            VersionResolution::Unknown => diags.push(Diagnostic {
                rule_id: "R1",
                severity: Severity::Error,
                location: Location::Instance(i),
                message: format!(
                    "`{}` refers to unknown class `{}`",
                    inst.instance_name, inst.class_ref
                ),
                fault_class: Some(FaultClass::UnknownClass),
            }),
        }
    }
}

fn rule_r2_scope(block: &ModelicaBlock, diags: &mut Vec<Diagnostic>) {
    for (i, inst) in block.instances.iter().enumerate() {
        let ok = under(&inst.class_ref, CDL_ROOT)
            || SCOPE_ALLOWLIST.iter().any(|r| under(&inst.class_ref, r));
        if !ok {
            diags.push(Diagnostic {
                rule_id: "R2",
                severity: Severity::Error,
                location: Location::Instance(i),
                message: format!(
                    "`{}` uses class `{}` outside the allowed library roots",
                    inst.instance_name, inst.class_ref
                ),
                fault_class: Some(FaultClass::ScopeViolation),
            });
        }
    }
}

fn rule_r3_type_mismatch(
    block: &ModelicaBlock,
    index: &LibraryIndex,
    diags: &mut Vec<Diagnostic>,
) {
    for (ci, eq) in block.connects.iter().enumerate() {
        let a = resolve_endpoint(&eq.source, block, index);
        let b = resolve_endpoint(&eq.target, block, index);
        if matches!(a, Resolved::Unknown | Resolved::Opaque)
            || matches!(b, Resolved::Unknown | Resolved::Opaque)
        {
            // unresolved endpoints are reported by R4; opaque ones by R1/R2
            continue;
        }
        let sources = is_source(&a) as u8 + is_source(&b) as u8;
        let sinks = is_sink(&a) as u8 + is_sink(&b) as u8;
        if sources != 1 || sinks != 1 {
            diags.push(Diagnostic {
                rule_id: "R3",
                severity: Severity::Error,
                location: Location::Connect(ci),
                message: format!(
                    "connect({}, {}) does not pair an output with an input",
                    eq.source, eq.target
                ),
                fault_class: Some(FaultClass::TypeMismatch),
            });
            continue;
        }
        let ka = endpoint_kind(&a, block);
        let kb = endpoint_kind(&b, block);
        if let (Some(ka), Some(kb)) = (ka, kb) {
            if ka != kb {
                diags.push(Diagnostic {
                    rule_id: "R3",
                    severity: Severity::Error,
                    location: Location::Connect(ci),
                    message: format!(
                        "connect({}, {}) joins {} with {}",
                        eq.source, eq.target, ka, kb
                    ),
                    fault_class: Some(FaultClass::TypeMismatch),
                });
            }
        }
    }
}

fn rule_r4_reachability(
    block: &ModelicaBlock,
    index: &LibraryIndex,
    diags: &mut Vec<Diagnostic>,
) {
    // unresolved endpoints first: a connect that dangles is a broken wire
    let mut resolved: Vec<(Resolved, Resolved)> = Vec::new();
    for (ci, eq) in block.connects.iter().enumerate() {
        let a = resolve_endpoint(&eq.source, block, index);
        let b = resolve_endpoint(&eq.target, block, index);
        for (ep, path) in [(&a, &eq.source), (&b, &eq.target)] {
            if matches!(ep, Resolved::Unknown) {
                diags.push(Diagnostic {
                    rule_id: "R4",
                    severity: Severity::Error,
                    location: Location::Connect(ci),
                    message: format!("connect endpoint `{}` does not resolve", path),
                    fault_class: Some(FaultClass::BrokenConnection),
                });
            }
        }
        resolved.push((a, b));
    }

    // reachability over instances: roots are block inputs and source
    // instances (no input ports); an instance fires once any input is fed
    let n_inst = block.instances.len();
    let mut inst_reached = vec![false; n_inst];
    let mut conn_reached = vec![false; block.connectors.len()];
    for (i, inst) in block.instances.iter().enumerate() {
        let class = effective_class(&inst.class_ref, index);
        match interp::class_ports(&class) {
            Some((ins, _)) if ins.is_empty() => inst_reached[i] = true,
            None => inst_reached[i] = true, // unknown class: give R4 no extra voice
            _ => {}
        }
    }
    for (i, c) in block.connectors.iter().enumerate() {
        if c.direction == crate::ast::Direction::Input {
            conn_reached[i] = true;
        }
    }
    loop {
        let mut changed = false;
        for (a, b) in &resolved {
            let src_live = match (a, b) {
                _ if is_source(a) => match a {
                    Resolved::BlockInput(i) => conn_reached[*i],
                    Resolved::InstanceOutput { inst, .. } => inst_reached[*inst],
                    _ => false,
                },
                _ if is_source(b) => match b {
                    Resolved::BlockInput(i) => conn_reached[*i],
                    Resolved::InstanceOutput { inst, .. } => inst_reached[*inst],
                    _ => false,
                },
                _ => false,
            };
            if !src_live {
                continue;
            }
            let sink = if is_source(a) { b } else { a };
            match sink {
                Resolved::BlockOutput(i) if !conn_reached[*i] => {
                    conn_reached[*i] = true;
                    changed = true;
                }
                Resolved::InstanceInput { inst, .. } if !inst_reached[*inst] => {
                    inst_reached[*inst] = true;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    for (i, c) in block.connectors.iter().enumerate() {
        if c.direction == crate::ast::Direction::Output && !conn_reached[i] {
            // guarded declarations may be absent at build time
            if c.condition.as_deref().is_some_and(|g| !g.trim().is_empty()) {
                continue;
            }
            diags.push(Diagnostic {
                rule_id: "R4",
                severity: Severity::Error,
                location: Location::Connector(i),
                message: format!("output `{}` is not driven by any signal path", c.name),
                fault_class: Some(FaultClass::BrokenConnection),
            });
        }
    }
    // instances never referenced by any connect contribute nothing
    let mut referenced = vec![false; n_inst];
    for eq in &block.connects {
        for path in [&eq.source, &eq.target] {
            if let [inst_name, _] = path.segments.as_slice() {
                if let Some(i) = block
                    .instances
                    .iter()
                    .position(|x| &x.instance_name == inst_name)
                {
                    referenced[i] = true;
                }
            }
        }
    }
    for (i, inst) in block.instances.iter().enumerate() {
        if !referenced[i] {
            diags.push(Diagnostic {
                rule_id: "R4",
                severity: Severity::Warning,
                location: Location::Instance(i),
                message: format!("instance `{}` is never connected", inst.instance_name),
                fault_class: Some(FaultClass::BrokenConnection),
            });
        }
    }
}

fn rule_r5_duplicate_path(
    block: &ModelicaBlock,
    index: &LibraryIndex,
    diags: &mut Vec<Diagnostic>,
) {
    // sink port -> controller instances wired straight into it
    let mut feeders: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut sink_connect: BTreeMap<String, usize> = BTreeMap::new();
    for (ci, eq) in block.connects.iter().enumerate() {
        let a = resolve_endpoint(&eq.source, block, index);
        let b = resolve_endpoint(&eq.target, block, index);
        let (src, src_path, sink_path) = if is_source(&a) && is_sink(&b) {
            (&a, &eq.source, &eq.target)
        } else if is_source(&b) && is_sink(&a) {
            (&b, &eq.target, &eq.source)
        } else {
            continue;
        };
        let _ = src_path;
        if let Resolved::InstanceOutput { inst, .. } = src {
            let class = effective_class(&block.instances[*inst].class_ref, index);
            if interp::is_controller_class(&class) {
                feeders
                    .entry(sink_path.to_string())
                    .or_default()
                    .insert(block.instances[*inst].instance_name.clone());
                sink_connect.entry(sink_path.to_string()).or_insert(ci);
            }
        }
    }
    for (sink, insts) in feeders {
        if insts.len() > 1 {
            let names: Vec<String> = insts.into_iter().collect();
            diags.push(Diagnostic {
                rule_id: "R5",
                severity: Severity::Error,
                location: Location::Connect(sink_connect[&sink]),
                message: format!(
                    "controllers {} all feed `{}`",
                    names.join(", "),
                    sink
                ),
                fault_class: Some(FaultClass::DuplicatePath),
            });
        }
    }
}

fn rule_r6_interface(block: &ModelicaBlock, task: &TaskSpec, diags: &mut Vec<Diagnostic>) {
    let sig = crate::ast::interface_of(block);
    let check = |want: &[(String, SignalKind)],
                     have: &[crate::ast::InterfacePort],
                     dir: &str,
                     diags: &mut Vec<Diagnostic>| {
        for (name, kind) in want {
            match have.iter().find(|p| &p.name == name) {
                None => diags.push(Diagnostic {
                    rule_id: "R6",
                    severity: Severity::Error,
                    location: Location::Block,
                    message: format!("task {} expects {} `{}`", task.task_id, dir, name),
                    fault_class: Some(FaultClass::InterfaceMismatch),
                }),
                Some(p) if p.signal_kind != *kind => diags.push(Diagnostic {
                    rule_id: "R6",
                    severity: Severity::Error,
                    location: Location::Block,
                    message: format!(
                        "{} `{}` is {}, task {} expects {}",
                        dir, name, p.signal_kind, task.task_id, kind
                    ),
                    fault_class: Some(FaultClass::InterfaceMismatch),
                }),
                _ => {}
            }
        }
        for p in have {
            if !want.iter().any(|(n, _)| n == &p.name) {
                diags.push(Diagnostic {
                    rule_id: "R6",
                    severity: Severity::Error,
                    location: Location::Block,
                    message: format!(
                        "{} `{}` is not part of task {}'s interface",
                        dir, p.name, task.task_id
                    ),
                    fault_class: Some(FaultClass::InterfaceMismatch),
                });
            }
        }
    };
    check(&task.inputs, &sig.inputs, "input", diags);
    check(&task.outputs, &sig.outputs, "output", diags);
}

fn rule_r7_polarity(
    block: &ModelicaBlock,
    index: &LibraryIndex,
    task: &TaskSpec,
    diags: &mut Vec<Diagnostic>,
) {
    let Ok(net) = elaborate(block, Some(index)) else {
        // a block that cannot elaborate is already failing other rules
        return;
    };
    for probe in &task.probes {
        let run = |point: &[(String, SignalValue)]| -> Option<f64> {
            let ports: Vec<(&str, Vec<SignalValue>)> = point
                .iter()
                .map(|(n, v)| (n.as_str(), vec![*v; probe.hold_steps]))
                .collect();
            let trace = input_trace(probe.step_size, &ports);
            let out = simulate(&net, &trace).ok()?;
            Some(out.probe(&probe.output).ok()?.last()?.as_real())
        };
        let (Some(lo), Some(hi)) = (run(&probe.low), run(&probe.high)) else {
            continue;
        };
        let delta = hi - lo;
        if delta * f64::from(probe.expected_sign) < 0.0 {
            diags.push(Diagnostic {
                rule_id: "R7",
                severity: Severity::Error,
                location: Location::Block,
                message: format!(
                    "output `{}` moves {} when it should move {} (delta {:.6})",
                    probe.output,
                    if delta > 0.0 { "up" } else { "down" },
                    if probe.expected_sign > 0 { "up" } else { "down" },
                    delta
                ),
                fault_class: Some(FaultClass::InvertedDirection),
            });
        }
    }
}

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("fault `{0}` cannot be injected into this block")]
    NotInjectable(FaultClass),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionRecord {
    pub fault: FaultClass,
    pub location: Location,
    pub description: String,
}

/// Mutates a valid block by exactly one fault from the four-class taxonomy,
/// for detector calibration. Deterministic per (block, fault, seed).
pub fn seed_fault(
    block: &ModelicaBlock,
    fault: FaultClass,
    rng_seed: u64,
) -> Result<(ModelicaBlock, InjectionRecord), SeedError> {
    let mut rng = StdRng::seed_from_u64(rng_seed);
    let mut mutated = block.clone();
    match fault {
        FaultClass::BrokenConnection => {
            // cut a wire that feeds a block output connector
            let candidates: Vec<usize> = block
                .connects
                .iter()
                .enumerate()
                .filter(|(_, eq)| {
                    [&eq.source, &eq.target].iter().any(|p| {
                        p.segments.len() == 1
                            && block
                                .connector(&p.segments[0])
                                .is_some_and(|c| c.direction == crate::ast::Direction::Output)
                    })
                })
                .map(|(i, _)| i)
                .collect();
            if candidates.is_empty() {
                return Err(SeedError::NotInjectable(fault));
            }
            let pick = candidates[rng.gen_range(0..candidates.len())];
            let eq = mutated.connects.remove(pick);
            Ok((
                mutated,
                InjectionRecord {
                    fault,
                    location: Location::Connect(pick),
                    description: format!("removed connect({}, {})", eq.source, eq.target),
                },
            ))
        }
        FaultClass::UnknownClass => {
            if block.instances.is_empty() {
                return Err(SeedError::NotInjectable(fault));
            }
            let pick = rng.gen_range(0..block.instances.len());
            let inst = &mut mutated.instances[pick];
            let last = inst.class_ref.segments.last_mut().expect("non-empty path");
            let original = last.clone();
            if last.len() > 2 {
                // drop an interior character, the classic typo; dropping the
                // final one can collide with a real class (PI -> P)
                last.remove(last.len() - 2);
            } else {
                last.push('X');
            }
            let description = format!(
                "class terminal `{}` rewritten to `{}`",
                original,
                inst.class_ref.terminal()
            );
            Ok((
                mutated,
                InjectionRecord {
                    fault,
                    location: Location::Instance(pick),
                    description,
                },
            ))
        }
        FaultClass::DuplicatePath => {
            // clone a controller and aim it at the same sink
            let found = block.instances.iter().enumerate().find_map(|(i, inst)| {
                if !interp::is_controller_class(&inst.class_ref) {
                    return None;
                }
                let feed = block.connects.iter().find(|eq| {
                    eq.source.segments.as_slice()
                        == [inst.instance_name.clone(), "y".to_string()]
                })?;
                Some((i, feed.target.clone()))
            });
            let Some((idx, sink)) = found else {
                return Err(SeedError::NotInjectable(fault));
            };
            let mut dup = block.instances[idx].clone();
            dup.instance_name = format!("{}Dup", dup.instance_name);
            let dup_name = dup.instance_name.clone();
            mutated.instances.push(dup);
            mutated.connects.push(crate::ast::ConnectEquation {
                source: PortPath {
                    segments: vec![dup_name.clone(), "y".to_string()],
                },
                target: sink.clone(),
                annotation_text: None,
            });
            Ok((
                mutated,
                InjectionRecord {
                    fault,
                    location: Location::Instance(block.instances.len()),
                    description: format!("added `{}` also feeding `{}`", dup_name, sink),
                },
            ))
        }
        FaultClass::InvertedDirection => {
            // flip a controller's acting direction, else swap a subtraction
            if let Some((i, inst)) = block
                .instances
                .iter()
                .enumerate()
                .find(|(_, x)| interp::is_controller_class(&x.class_ref))
            {
                let target = &mut mutated.instances[i];
                let current = matches!(
                    inst.modifier("reverseActing"),
                    Some(ModifierValue::Boolean(true)) | None
                );
                if let Some(m) = target
                    .modifiers
                    .iter_mut()
                    .find(|m| m.name == "reverseActing")
                {
                    m.value = ModifierValue::Boolean(!current);
                } else {
                    target.modifiers.push(Modifier {
                        name: "reverseActing".to_string(),
                        value: ModifierValue::Boolean(!current),
                        is_final: false,
                    });
                }
                return Ok((
                    mutated,
                    InjectionRecord {
                        fault,
                        location: Location::Instance(i),
                        description: format!(
                            "`{}` reverseActing flipped to {}",
                            inst.instance_name, !current
                        ),
                    },
                ));
            }
            let sub = block.instances.iter().position(|x| {
                x.class_ref.terminal() == "Subtract"
            });
            let Some(si) = sub else {
                return Err(SeedError::NotInjectable(fault));
            };
            let name = block.instances[si].instance_name.clone();
            let mut swapped = 0usize;
            for eq in &mut mutated.connects {
                for path in [&mut eq.source, &mut eq.target] {
                    if path.segments.len() == 2 && path.segments[0] == name {
                        if path.segments[1] == "u1" {
                            path.segments[1] = "u2".to_string();
                            swapped += 1;
                        } else if path.segments[1] == "u2" {
                            path.segments[1] = "u1".to_string();
                            swapped += 1;
                        }
                    }
                }
            }
            if swapped == 0 {
                return Err(SeedError::NotInjectable(fault));
            }
            Ok((
                mutated,
                InjectionRecord {
                    fault,
                    location: Location::Instance(si),
                    description: format!("swapped `{}` minuend and subtrahend", name),
                },
            ))
        }
        other => Err(SeedError::NotInjectable(other)),
    }
}
