//! Fixed-step synchronous interpreter for elaborated block diagrams.
//!
//! [`elaborate`] turns a parsed block into a [`Network`]: every instance is
//! bound to an executable element, every connect endpoint is resolved, and a
//! deterministic evaluation order is fixed. [`simulate`] then steps the
//! network over an input trace. Within a step, evaluation follows the
//! elaboration order; a port read before its driver has run this step
//! observes the previous step's value, which is how state-holding elements
//! (hysteresis, latch, delay, PI integrator) break feedback cycles.

pub mod trace;

pub use trace::{
    parse_csv, to_csv_string, write_csv, SignalValue, SimulationTrace, TraceError,
};

use crate::ast::{
    ComponentInstance, Direction, ModelicaBlock, ModifierValue, PortPath, QualifiedName,
    SignalKind,
};
use crate::index::{resolve_version, LibraryIndex, VersionResolution};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ElabError {
    #[error("instance `{instance}` uses class `{class}` with no registered behavior")]
    UnknownBehavior { instance: String, class: String },
    #[error("connect endpoint `{path}` does not resolve to a known port")]
    UnresolvedPort { path: String },
    #[error("connect({left}, {right}): {message}")]
    BadConnect {
        left: String,
        right: String,
        message: String,
    },
    #[error("port `{path}` carries {found} but {expected} is required")]
    KindMismatch {
        path: String,
        expected: SignalKind,
        found: SignalKind,
    },
    #[error("port `{path}` is driven by more than one source")]
    MultiplyDriven { path: String },
    #[error("algebraic loop through instances: {}", instances.join(", "))]
    AlgebraicLoop { instances: Vec<String> },
    #[error("instance `{instance}`, parameter `{name}`: {message}")]
    BadParameter {
        instance: String,
        name: String,
        message: String,
    },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no input series supplied for port `{0}`")]
    MissingInput(String),
    #[error("input series `{port}` carries {found} but {expected} is required")]
    InputKindMismatch {
        port: String,
        expected: SignalKind,
        found: SignalKind,
    },
    #[error("input series `{port}` has {found} samples, expected {expected}")]
    InputLengthMismatch {
        port: String,
        expected: usize,
        found: usize,
    },
    #[error("step size {step} does not divide delayTime {delay} of `{instance}`")]
    BadStepSize {
        instance: String,
        step: f64,
        delay: f64,
    },
    #[error("step size and horizon must be positive")]
    BadTimeGrid,
}

/// Executable element with parameters already resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    And,
    Or,
    Not,
    Xor,
    Nand,
    Nor,
    SwitchBool,
    SwitchReal,
    SwitchInt,
    TrueDelay { delay: f64 },
    Latch,
    EdgeDetect,
    ConstBool { k: bool },
    Add,
    Subtract,
    Multiply,
    Max,
    Min,
    Abs,
    Gain { k: f64 },
    GreaterThreshold { t: f64, h: f64 },
    LessThreshold { t: f64, h: f64 },
    Hysteresis { u_low: f64, u_high: f64 },
    PLoop {
        k: f64,
        y_min: f64,
        y_max: f64,
        reverse: bool,
    },
    PiLoop {
        k: f64,
        ti: f64,
        y_bia: f64,
        y_dis: f64,
        y_min: f64,
        y_max: f64,
        reverse: bool,
    },
    ConstReal { k: f64 },
    ConstInt { k: i64 },
    IntEqual,
    IntGreaterThreshold { t: i64 },
}

impl Element {
    /// Input ports in positional order, as (name, kind).
    pub fn input_ports(&self) -> Vec<(&'static str, SignalKind)> {
        use Element::*;
        use SignalKind::*;
        match self {
            And | Or | Xor | Nand | Nor => vec![("u1", Boolean), ("u2", Boolean)],
            Not | EdgeDetect => vec![("u", Boolean)],
            SwitchBool => vec![("u1", Boolean), ("u2", Boolean), ("u3", Boolean)],
            SwitchReal => vec![("u1", Real), ("u2", Boolean), ("u3", Real)],
            SwitchInt => vec![("u1", Integer), ("u2", Boolean), ("u3", Integer)],
            TrueDelay { .. } => vec![("u", Boolean)],
            Latch => vec![("u", Boolean), ("clr", Boolean)],
            ConstBool { .. } | ConstReal { .. } | ConstInt { .. } => vec![],
            Add | Subtract | Multiply | Max | Min => vec![("u1", Real), ("u2", Real)],
            Abs | Gain { .. } => vec![("u", Real)],
            GreaterThreshold { .. } | LessThreshold { .. } | Hysteresis { .. } => {
                vec![("u", Real)]
            }
            PLoop { .. } => vec![("u_s", Real), ("u_m", Real)],
            PiLoop { .. } => vec![("u_s", Real), ("u_m", Real), ("uEna", Boolean)],
            IntEqual => vec![("u1", Integer), ("u2", Integer)],
            IntGreaterThreshold { .. } => vec![("u", Integer)],
        }
    }

    pub fn output_ports(&self) -> Vec<(&'static str, SignalKind)> {
        use Element::*;
        use SignalKind::*;
        let kind = match self {
            And | Or | Not | Xor | Nand | Nor | SwitchBool | TrueDelay { .. } | Latch
            | EdgeDetect | ConstBool { .. } | GreaterThreshold { .. } | LessThreshold { .. }
            | Hysteresis { .. } | IntEqual | IntGreaterThreshold { .. } => Boolean,
            SwitchInt | ConstInt { .. } => Integer,
            _ => Real,
        };
        vec![("y", kind)]
    }

    /// True for elements whose output at a step may lawfully be read as the
    /// previous step's value, letting them break feedback cycles.
    pub fn is_state_lagged(&self) -> bool {
        matches!(
            self,
            Element::TrueDelay { .. }
                | Element::Latch
                | Element::EdgeDetect
                | Element::Hysteresis { .. }
                | Element::PiLoop { .. }
        )
    }

    pub fn is_controller(&self) -> bool {
        matches!(self, Element::PLoop { .. } | Element::PiLoop { .. })
    }
}

/// Per-instance mutable simulation state.
#[derive(Debug, Clone)]
enum ElemState {
    None,
    /// Held Boolean output (hysteresis and friends).
    Flag(bool),
    TrueDelay { since: Option<f64> },
    Latch { prev_u: bool, out: bool },
    Edge { prev: bool },
    Pi { integ: f64, prev_ena: bool },
}

fn initial_state(elem: &Element) -> ElemState {
    match elem {
        Element::Hysteresis { .. }
        | Element::GreaterThreshold { .. }
        | Element::LessThreshold { .. } => ElemState::Flag(false),
        Element::TrueDelay { .. } => ElemState::TrueDelay { since: None },
        Element::Latch => ElemState::Latch {
            prev_u: false,
            out: false,
        },
        Element::EdgeDetect => ElemState::Edge { prev: false },
        Element::PiLoop { .. } => ElemState::Pi {
            integ: 0.0,
            prev_ena: false,
        },
        _ => ElemState::None,
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

fn step_element(
    elem: &Element,
    state: &mut ElemState,
    inputs: &[SignalValue],
    t: f64,
    dt: f64,
) -> Vec<SignalValue> {
    use Element::*;
    use SignalValue::*;
    let b = |i: usize| inputs[i].as_bool();
    let r = |i: usize| inputs[i].as_real();
    let n = |i: usize| inputs[i].as_int();
    let out = match elem {
        And => Boolean(b(0) && b(1)),
        Or => Boolean(b(0) || b(1)),
        Not => Boolean(!b(0)),
        Xor => Boolean(b(0) != b(1)),
        Nand => Boolean(!(b(0) && b(1))),
        Nor => Boolean(!(b(0) || b(1))),
        SwitchBool => Boolean(if b(1) { b(0) } else { b(2) }),
        SwitchReal => Real(if inputs[1].as_bool() { r(0) } else { r(2) }),
        SwitchInt => Integer(if inputs[1].as_bool() { n(0) } else { n(2) }),
        ConstBool { k } => Boolean(*k),
        ConstReal { k } => Real(*k),
        ConstInt { k } => Integer(*k),
        Add => Real(r(0) + r(1)),
        Subtract => Real(r(0) - r(1)),
        Multiply => Real(r(0) * r(1)),
        Max => Real(r(0).max(r(1))),
        Min => Real(r(0).min(r(1))),
        Abs => Real(r(0).abs()),
        Gain { k } => Real(k * r(0)),
        IntEqual => Boolean(n(0) == n(1)),
        IntGreaterThreshold { t } => Boolean(n(0) > *t),
        Hysteresis { u_low, u_high } => {
            let prev = match state {
                ElemState::Flag(p) => *p,
                _ => false,
            };
            let u = r(0);
            let y = if u > *u_high {
                true
            } else if u < *u_low {
                false
            } else {
                prev
            };
            *state = ElemState::Flag(y);
            Boolean(y)
        }
        GreaterThreshold { t, h } => {
            let prev = match state {
                ElemState::Flag(p) => *p,
                _ => false,
            };
            let u = r(0);
            let y = if u > *t {
                true
            } else if u <= *t - *h {
                false
            } else {
                prev
            };
            *state = ElemState::Flag(y);
            Boolean(y)
        }
        LessThreshold { t, h } => {
            let prev = match state {
                ElemState::Flag(p) => *p,
                _ => false,
            };
            let u = r(0);
            let y = if u < *t {
                true
            } else if u >= *t + *h {
                false
            } else {
                prev
            };
            *state = ElemState::Flag(y);
            Boolean(y)
        }
        TrueDelay { delay } => {
            let since = match state {
                ElemState::TrueDelay { since } => since,
                _ => unreachable!("state for TrueDelay"),
            };
            let y = if b(0) {
                let s = since.get_or_insert(t);
                t - *s + 1e-9 >= *delay
            } else {
                *since = None;
                false
            };
            Boolean(y)
        }
        Latch => {
            let (prev_u, out) = match state {
                ElemState::Latch { prev_u, out } => (prev_u, out),
                _ => unreachable!("state for Latch"),
            };
            let u = b(0);
            let clr = b(1);
            if clr {
                *out = false;
            } else if u && !*prev_u {
                *out = true;
            }
            *prev_u = u;
            Boolean(*out)
        }
        EdgeDetect => {
            let prev = match state {
                ElemState::Edge { prev } => prev,
                _ => unreachable!("state for Edge"),
            };
            let u = b(0);
            let y = u && !*prev;
            *prev = u;
            Boolean(y)
        }
        PLoop {
            k,
            y_min,
            y_max,
            reverse,
        } => {
            let e = if *reverse { r(0) - r(1) } else { r(1) - r(0) };
            Real(clamp(k * e, *y_min, *y_max))
        }
        PiLoop {
            k,
            ti,
            y_bia,
            y_dis,
            y_min,
            y_max,
            reverse,
        } => {
            let (integ, prev_ena) = match state {
                ElemState::Pi { integ, prev_ena } => (integ, prev_ena),
                _ => unreachable!("state for PI"),
            };
            let ena = b(2);
            if ena && !*prev_ena {
                *integ = *y_bia;
            }
            *prev_ena = ena;
            if !ena {
                Real(*y_dis)
            } else {
                let e = if *reverse { r(0) - r(1) } else { r(1) - r(0) };
                let raw = k * e + *integ;
                let y = clamp(raw, *y_min, *y_max);
                let di = k / ti * e * dt;
                // anti-windup: freeze the integrator while it would push
                // the output further past a limit
                if !((raw > *y_max && di > 0.0) || (raw < *y_min && di < 0.0)) {
                    *integ += di;
                }
                Real(y)
            }
        }
    };
    vec![out]
}

const CDL_ROOT: [&str; 4] = ["Buildings", "Controls", "OBC", "CDL"];

/// Path below `Buildings.Controls.OBC.CDL`, if the class lives there.
fn cdl_suffix(class_ref: &QualifiedName) -> Option<String> {
    if class_ref.segments.len() > CDL_ROOT.len()
        && class_ref.segments[..CDL_ROOT.len()] == CDL_ROOT
    {
        Some(class_ref.segments[CDL_ROOT.len()..].join("."))
    } else {
        None
    }
}

fn real_param(
    inst: &ComponentInstance,
    block: &ModelicaBlock,
    name: &str,
    default: f64,
) -> Result<f64, ElabError> {
    match inst.modifier(name) {
        None => Ok(default),
        Some(ModifierValue::Real(v)) => Ok(*v),
        Some(ModifierValue::Integer(v)) => Ok(*v as f64),
        Some(ModifierValue::Opaque(text)) => resolve_param_ref(block, text)
            .ok_or_else(|| ElabError::BadParameter {
                instance: inst.instance_name.clone(),
                name: name.to_string(),
                message: format!("`{}` is not a numeric literal or block parameter", text),
            }),
        Some(other) => Err(ElabError::BadParameter {
            instance: inst.instance_name.clone(),
            name: name.to_string(),
            message: format!("expected a Real value, found `{}`", other),
        }),
    }
}

/// A bare identifier modifier value resolves against a block parameter with
/// a numeric literal default (`h=Thys` in hand-written modules).
fn resolve_param_ref(block: &ModelicaBlock, text: &str) -> Option<f64> {
    if !crate::ast::is_identifier(text) {
        return None;
    }
    match block.parameter(text)?.default.as_ref()? {
        ModifierValue::Real(v) => Some(*v),
        ModifierValue::Integer(v) => Some(*v as f64),
        _ => None,
    }
}

fn int_param(
    inst: &ComponentInstance,
    block: &ModelicaBlock,
    name: &str,
    default: i64,
) -> Result<i64, ElabError> {
    match inst.modifier(name) {
        None => Ok(default),
        Some(ModifierValue::Integer(v)) => Ok(*v),
        Some(ModifierValue::Opaque(text)) => resolve_param_ref(block, text)
            .map(|v| v as i64)
            .ok_or_else(|| ElabError::BadParameter {
                instance: inst.instance_name.clone(),
                name: name.to_string(),
                message: format!("`{}` is not an integer literal or block parameter", text),
            }),
        Some(other) => Err(ElabError::BadParameter {
            instance: inst.instance_name.clone(),
            name: name.to_string(),
            message: format!("expected an Integer value, found `{}`", other),
        }),
    }
}

fn bool_param(
    inst: &ComponentInstance,
    name: &str,
    default: bool,
) -> Result<bool, ElabError> {
    match inst.modifier(name) {
        None => Ok(default),
        Some(ModifierValue::Boolean(v)) => Ok(*v),
        Some(ModifierValue::Opaque(text)) if text == "true" || text == "false" => {
            Ok(text == "true")
        }
        Some(other) => Err(ElabError::BadParameter {
            instance: inst.instance_name.clone(),
            name: name.to_string(),
            message: format!("expected a Boolean value, found `{}`", other),
        }),
    }
}

/// Binds one instance to an element, resolving its parameters. `Ok(None)`
/// means the class path is outside the behavior registry.
fn bind_element(
    inst: &ComponentInstance,
    block: &ModelicaBlock,
    suffix: &str,
) -> Result<Option<Element>, ElabError> {
    let elem = match suffix {
        "Logical.And" => Element::And,
        "Logical.Or" => Element::Or,
        "Logical.Not" => Element::Not,
        "Logical.Xor" => Element::Xor,
        "Logical.Nand" => Element::Nand,
        "Logical.Nor" => Element::Nor,
        "Logical.Switch" => Element::SwitchBool,
        "Logical.TrueDelay" => Element::TrueDelay {
            delay: real_param(inst, block, "delayTime", 0.0)?,
        },
        "Logical.Latch" => Element::Latch,
        "Logical.Edge" => Element::EdgeDetect,
        "Logical.Sources.Constant" => Element::ConstBool {
            k: bool_param(inst, "k", false)?,
        },
        "Reals.Add" => Element::Add,
        "Reals.Subtract" => Element::Subtract,
        "Reals.Multiply" => Element::Multiply,
        "Reals.Max" => Element::Max,
        "Reals.Min" => Element::Min,
        "Reals.Abs" => Element::Abs,
        "Reals.MultiplyByParameter" => Element::Gain {
            k: real_param(inst, block, "k", 1.0)?,
        },
        "Reals.GreaterThreshold" => Element::GreaterThreshold {
            t: real_param(inst, block, "t", 0.0)?,
            h: real_param(inst, block, "h", 0.0)?,
        },
        "Reals.LessThreshold" => Element::LessThreshold {
            t: real_param(inst, block, "t", 0.0)?,
            h: real_param(inst, block, "h", 0.0)?,
        },
        "Reals.Hysteresis" => Element::Hysteresis {
            u_low: real_param(inst, block, "uLow", 0.0)?,
            u_high: real_param(inst, block, "uHigh", 1.0)?,
        },
        "Reals.Switch" => Element::SwitchReal,
        "Reals.P" => Element::PLoop {
            k: real_param(inst, block, "k", 1.0)?,
            y_min: real_param(inst, block, "yMin", 0.0)?,
            y_max: real_param(inst, block, "yMax", 1.0)?,
            reverse: bool_param(inst, "reverseActing", true)?,
        },
        "Reals.PI" => Element::PiLoop {
            k: real_param(inst, block, "k", 1.0)?,
            ti: real_param(inst, block, "Ti", 0.5)?,
            y_bia: real_param(inst, block, "yBia", 0.0)?,
            y_dis: real_param(inst, block, "yDis", 0.0)?,
            y_min: real_param(inst, block, "yMin", 0.0)?,
            y_max: real_param(inst, block, "yMax", 1.0)?,
            reverse: bool_param(inst, "reverseActing", true)?,
        },
        "Reals.Sources.Constant" => Element::ConstReal {
            k: real_param(inst, block, "k", 0.0)?,
        },
        "Integers.Switch" => Element::SwitchInt,
        "Integers.Equal" => Element::IntEqual,
        "Integers.GreaterThreshold" => Element::IntGreaterThreshold {
            t: int_param(inst, block, "t", 0)?,
        },
        "Integers.Sources.Constant" => Element::ConstInt {
            k: int_param(inst, block, "k", 0)?,
        },
        _ => return Ok(None),
    };
    Ok(Some(elem))
}

/// Port signature of a registered CDL class, without instantiating it.
/// Used by diagnostics that only need kinds and directions.
pub fn class_ports(
    class_ref: &QualifiedName,
) -> Option<(Vec<(&'static str, SignalKind)>, Vec<(&'static str, SignalKind)>)> {
    let suffix = cdl_suffix(class_ref)?;
    let dummy = ComponentInstance {
        class_ref: class_ref.clone(),
        instance_name: "probe".to_string(),
        modifiers: Vec::new(),
        protected: false,
        condition: None,
        doc: None,
        annotation_text: None,
    };
    let empty = ModelicaBlock {
        name: "Probe".to_string(),
        kind: crate::ast::BlockKind::Block,
        within_clause: None,
        doc: None,
        connectors: Vec::new(),
        parameters: Vec::new(),
        instances: Vec::new(),
        connects: Vec::new(),
        annotation_text: None,
    };
    let elem = bind_element(&dummy, &empty, &suffix).ok()??;
    Some((elem.input_ports(), elem.output_ports()))
}

/// True if the class is a feedback controller (P or PI loop).
pub fn is_controller_class(class_ref: &QualifiedName) -> bool {
    matches!(
        cdl_suffix(class_ref).as_deref(),
        Some("Reals.P") | Some("Reals.PI")
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Src {
    BlockInput(usize),
    Node { node: usize, port: usize },
}

#[derive(Debug, Clone)]
struct NodeDef {
    name: String,
    elem: Element,
    in_ports: Vec<(String, SignalKind)>,
    out_ports: Vec<(String, SignalKind)>,
    in_srcs: Vec<Option<Src>>,
}

/// Elaborated block: instances bound to elements, wiring resolved,
/// evaluation order fixed.
#[derive(Debug, Clone)]
pub struct Network {
    pub block_name: String,
    inputs: Vec<(String, SignalKind)>,
    outputs: Vec<(String, SignalKind)>,
    nodes: Vec<NodeDef>,
    output_srcs: Vec<Option<Src>>,
    order: Vec<usize>,
}

impl Network {
    pub fn inputs(&self) -> &[(String, SignalKind)] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[(String, SignalKind)] {
        &self.outputs
    }

    /// Instance names in evaluation order.
    pub fn evaluation_order(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.nodes[i].name.as_str()).collect()
    }

    pub fn element(&self, instance: &str) -> Option<&Element> {
        self.nodes.iter().find(|n| n.name == instance).map(|n| &n.elem)
    }
}

enum Endpoint {
    BlockInput(usize),
    BlockOutput(usize),
    NodeInput { node: usize, port: usize },
    NodeOutput { node: usize, port: usize },
}

fn classify_endpoint(
    path: &PortPath,
    net: &Network,
    node_by_name: &BTreeMap<String, usize>,
) -> Result<Endpoint, ElabError> {
    let unresolved = || ElabError::UnresolvedPort {
        path: path.to_string(),
    };
    match path.segments.as_slice() {
        [name] => {
            if let Some(i) = net.inputs.iter().position(|(n, _)| n == name) {
                Ok(Endpoint::BlockInput(i))
            } else if let Some(i) = net.outputs.iter().position(|(n, _)| n == name) {
                Ok(Endpoint::BlockOutput(i))
            } else {
                Err(unresolved())
            }
        }
        [inst, port] => {
            let &node = node_by_name.get(inst).ok_or_else(unresolved)?;
            let def = &net.nodes[node];
            if let Some(i) = def.in_ports.iter().position(|(n, _)| n == port) {
                Ok(Endpoint::NodeInput { node, port: i })
            } else if let Some(i) = def.out_ports.iter().position(|(n, _)| n == port) {
                Ok(Endpoint::NodeOutput { node, port: i })
            } else {
                Err(unresolved())
            }
        }
        _ => Err(unresolved()),
    }
}

fn endpoint_kind(ep: &Endpoint, net: &Network) -> SignalKind {
    match ep {
        Endpoint::BlockInput(i) => net.inputs[*i].1,
        Endpoint::BlockOutput(i) => net.outputs[*i].1,
        Endpoint::NodeInput { node, port } => net.nodes[*node].in_ports[*port].1,
        Endpoint::NodeOutput { node, port } => net.nodes[*node].out_ports[*port].1,
    }
}

/// Elaborates a parsed block against the behavior registry. The index, when
/// given, lets renamed class paths from older library versions resolve to
/// their current behavior. Conditional declarations are treated as present.
pub fn elaborate(
    block: &ModelicaBlock,
    index: Option<&LibraryIndex>,
) -> Result<Network, ElabError> {
    let mut net = Network {
        block_name: block.name.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        nodes: Vec::new(),
        output_srcs: Vec::new(),
        order: Vec::new(),
    };
    for c in &block.connectors {
        match c.direction {
            Direction::Input => net.inputs.push((c.name.clone(), c.signal_kind)),
            Direction::Output => net.outputs.push((c.name.clone(), c.signal_kind)),
        }
    }
    net.output_srcs = vec![None; net.outputs.len()];

    let mut node_by_name = BTreeMap::new();
    for inst in &block.instances {
        let mut class_ref = inst.class_ref.clone();
        let mut elem = match cdl_suffix(&class_ref) {
            Some(suffix) => bind_element(inst, block, &suffix)?,
            None => None,
        };
        if elem.is_none() {
            if let Some(idx) = index {
                if let VersionResolution::Renamed(new) = resolve_version(idx, &class_ref) {
                    class_ref = new;
                    if let Some(suffix) = cdl_suffix(&class_ref) {
                        elem = bind_element(inst, block, &suffix)?;
                    }
                }
            }
        }
        let elem = elem.ok_or_else(|| ElabError::UnknownBehavior {
            instance: inst.instance_name.clone(),
            class: inst.class_ref.to_string(),
        })?;
        let in_ports: Vec<(String, SignalKind)> = elem
            .input_ports()
            .into_iter()
            .map(|(n, k)| (n.to_string(), k))
            .collect();
        let out_ports: Vec<(String, SignalKind)> = elem
            .output_ports()
            .into_iter()
            .map(|(n, k)| (n.to_string(), k))
            .collect();
        let in_srcs = vec![None; in_ports.len()];
        node_by_name.insert(inst.instance_name.clone(), net.nodes.len());
        net.nodes.push(NodeDef {
            name: inst.instance_name.clone(),
            elem,
            in_ports,
            out_ports,
            in_srcs,
        });
    }

    for eq in &block.connects {
        let a = classify_endpoint(&eq.source, &net, &node_by_name)?;
        let b = classify_endpoint(&eq.target, &net, &node_by_name)?;
        // connect() is order-agnostic: identify the signal source and sink
        let (src_ep, src_path, sink_ep, sink_path) = match (&a, &b) {
            (Endpoint::BlockInput(_) | Endpoint::NodeOutput { .. }, _) => {
                (&a, &eq.source, &b, &eq.target)
            }
            (_, Endpoint::BlockInput(_) | Endpoint::NodeOutput { .. }) => {
                (&b, &eq.target, &a, &eq.source)
            }
            _ => {
                return Err(ElabError::BadConnect {
                    left: eq.source.to_string(),
                    right: eq.target.to_string(),
                    message: "neither endpoint is a signal source".to_string(),
                })
            }
        };
        let src = match src_ep {
            Endpoint::BlockInput(i) => Src::BlockInput(*i),
            Endpoint::NodeOutput { node, port } => Src::Node {
                node: *node,
                port: *port,
            },
            _ => unreachable!("source endpoint"),
        };
        let src_kind = endpoint_kind(src_ep, &net);
        let sink_kind = endpoint_kind(sink_ep, &net);
        if src_kind != sink_kind {
            return Err(ElabError::KindMismatch {
                path: sink_path.to_string(),
                expected: sink_kind,
                found: src_kind,
            });
        }
        let _ = src_path;
        let slot = match sink_ep {
            Endpoint::BlockOutput(i) => &mut net.output_srcs[*i],
            Endpoint::NodeInput { node, port } => &mut net.nodes[*node].in_srcs[*port],
            _ => {
                return Err(ElabError::BadConnect {
                    left: eq.source.to_string(),
                    right: eq.target.to_string(),
                    message: "both endpoints are signal sources".to_string(),
                })
            }
        };
        if slot.is_some() {
            return Err(ElabError::MultiplyDriven {
                path: sink_path.to_string(),
            });
        }
        *slot = Some(src);
    }

    net.order = evaluation_order(&net)?;
    Ok(net)
}

/// Kahn topological sort, smallest node index first for determinism.
/// Runs over all node-to-node edges; if a cycle remains, edges leaving
/// state-lagged elements are removed and the sort retried. A cycle that
/// survives that is a true algebraic loop.
fn evaluation_order(net: &Network) -> Result<Vec<usize>, ElabError> {
    let all_edges = node_edges(net, false);
    if let Some(order) = kahn(net.nodes.len(), &all_edges) {
        return Ok(order);
    }
    let cut_edges = node_edges(net, true);
    if let Some(order) = kahn(net.nodes.len(), &cut_edges) {
        return Ok(order);
    }
    // report the instances still stuck in a cycle
    let order_partial = kahn_partial(net.nodes.len(), &cut_edges);
    let mut stuck: Vec<String> = (0..net.nodes.len())
        .filter(|i| !order_partial.contains(i))
        .map(|i| net.nodes[i].name.clone())
        .collect();
    stuck.sort();
    Err(ElabError::AlgebraicLoop { instances: stuck })
}

fn node_edges(net: &Network, cut_lagged: bool) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for (ni, node) in net.nodes.iter().enumerate() {
        for src in node.in_srcs.iter().flatten() {
            if let Src::Node { node: from, .. } = src {
                if cut_lagged && net.nodes[*from].elem.is_state_lagged() {
                    continue;
                }
                edges.push((*from, ni));
            }
        }
    }
    edges
}

fn kahn(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let order = kahn_partial(n, edges);
    (order.len() == n).then_some(order)
}

fn kahn_partial(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut indeg = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        indeg[b] += 1;
        succ[a].push(b);
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&i) = ready.iter().next() {
        ready.remove(&i);
        order.push(i);
        for &j in &succ[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.insert(j);
            }
        }
    }
    order
}

/// Steps the network over the input trace. The result records every block
/// connector (declaration order) followed by every instance output port
/// (lexicographic), one sample per step.
pub fn simulate(net: &Network, inputs: &SimulationTrace) -> Result<SimulationTrace, SimError> {
    if inputs.step_size <= 0.0 || inputs.horizon < 0.0 {
        return Err(SimError::BadTimeGrid);
    }
    let dt = inputs.step_size;
    let steps = inputs.step_count();
    let mut input_series: Vec<&[SignalValue]> = Vec::with_capacity(net.inputs.len());
    for (name, kind) in &net.inputs {
        let series = inputs
            .series
            .get(name)
            .ok_or_else(|| SimError::MissingInput(name.clone()))?;
        if series.len() != steps {
            return Err(SimError::InputLengthMismatch {
                port: name.clone(),
                expected: steps,
                found: series.len(),
            });
        }
        if let Some(v) = series.iter().find(|v| v.kind() != *kind) {
            return Err(SimError::InputKindMismatch {
                port: name.clone(),
                expected: *kind,
                found: v.kind(),
            });
        }
        input_series.push(series);
    }
    for node in &net.nodes {
        if let Element::TrueDelay { delay } = node.elem {
            let ratio = delay / dt;
            if (ratio - ratio.round()).abs() > 1e-9 {
                return Err(SimError::BadStepSize {
                    instance: node.name.clone(),
                    step: dt,
                    delay,
                });
            }
        }
    }

    let mut states: Vec<ElemState> = net.nodes.iter().map(|n| initial_state(&n.elem)).collect();
    let mut node_out: Vec<Vec<SignalValue>> = net
        .nodes
        .iter()
        .map(|n| {
            n.out_ports
                .iter()
                .map(|(_, k)| SignalValue::default_for(*k))
                .collect()
        })
        .collect();

    // column layout: block connectors in declaration order, then instance
    // output ports sorted by path
    let mut out = SimulationTrace::new(dt, inputs.horizon);
    let mut connector_cols: Vec<String> = Vec::new();
    for (name, _) in net.inputs.iter().chain(net.outputs.iter()) {
        connector_cols.push(name.clone());
    }
    let mut port_cols: Vec<(String, usize, usize)> = Vec::new();
    for (ni, node) in net.nodes.iter().enumerate() {
        for (pi, (pname, _)) in node.out_ports.iter().enumerate() {
            port_cols.push((format!("{}.{}", node.name, pname), ni, pi));
        }
    }
    port_cols.sort_by(|a, b| a.0.cmp(&b.0));
    let mut recorded: BTreeMap<String, Vec<SignalValue>> = BTreeMap::new();

    for step in 0..steps {
        let t = step as f64 * dt;
        for &ni in &net.order {
            let node = &net.nodes[ni];
            let vals: Vec<SignalValue> = node
                .in_srcs
                .iter()
                .zip(node.in_ports.iter())
                .map(|(src, (_, kind))| match src {
                    Some(Src::BlockInput(i)) => input_series[*i][step],
                    Some(Src::Node { node, port }) => node_out[*node][*port],
                    None => SignalValue::default_for(*kind),
                })
                .collect();
            let outputs = step_element(&node.elem, &mut states[ni], &vals, t, dt);
            node_out[ni] = outputs;
        }
        for (i, (name, kind)) in net.outputs.iter().enumerate() {
            let v = match net.output_srcs[i] {
                Some(Src::BlockInput(j)) => input_series[j][step],
                Some(Src::Node { node, port }) => node_out[node][port],
                None => SignalValue::default_for(*kind),
            };
            recorded.entry(name.clone()).or_default().push(v);
        }
        for (i, _) in net.inputs.iter().enumerate() {
            recorded
                .entry(net.inputs[i].0.clone())
                .or_default()
                .push(input_series[i][step]);
        }
        for (col, ni, pi) in &port_cols {
            recorded.entry(col.clone()).or_default().push(node_out[*ni][*pi]);
        }
    }

    for name in connector_cols {
        let series = recorded.remove(&name).unwrap_or_default();
        out.insert(&name, series);
    }
    for (col, _, _) in &port_cols {
        if let Some(series) = recorded.remove(col) {
            out.insert(col, series);
        }
    }
    Ok(out)
}

/// Builds an input trace from per-port sample vectors; a convenience for
/// probes and tests.
pub fn input_trace(
    step_size: f64,
    ports: &[(&str, Vec<SignalValue>)],
) -> SimulationTrace {
    let steps = ports.first().map(|(_, v)| v.len()).unwrap_or(1);
    let horizon = (steps.saturating_sub(1)) as f64 * step_size;
    let mut t = SimulationTrace::new(step_size, horizon);
    for (name, values) in ports {
        t.insert(name, values.clone());
    }
    t
}
