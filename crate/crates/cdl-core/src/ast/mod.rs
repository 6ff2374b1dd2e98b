//! AST for the CDL Modelica subset, plus the parser and canonical printer.

mod lexer;
mod parser;
mod printer;

pub use parser::{parse, ParseError};
pub use printer::print;

use std::fmt;

/// Dotted Modelica class path, e.g. `Buildings.Controls.OBC.CDL.Logical.And`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualifiedName {
    pub segments: Vec<String>,
}

impl QualifiedName {
    pub fn new(segments: Vec<String>) -> Self {
        debug_assert!(!segments.is_empty());
        QualifiedName { segments }
    }

    pub fn parse_str(s: &str) -> Option<Self> {
        let segments: Vec<String> = s.split('.').map(str::to_string).collect();
        if segments.is_empty() || !segments.iter().all(|seg| is_identifier(seg)) {
            return None;
        }
        Some(QualifiedName { segments })
    }

    /// Last path segment, e.g. `And`.
    pub fn terminal(&self) -> &str {
        self.segments.last().expect("non-empty")
    }

    pub fn starts_with(&self, prefix: &QualifiedName) -> bool {
        self.segments.len() >= prefix.segments.len()
            && self.segments[..prefix.segments.len()] == prefix.segments[..]
    }

    /// Replaces a leading `old` prefix with `new`, segment-aligned.
    pub fn with_prefix_replaced(&self, old: &QualifiedName, new: &QualifiedName) -> Option<Self> {
        if !self.starts_with(old) {
            return None;
        }
        let mut segments = new.segments.clone();
        segments.extend_from_slice(&self.segments[old.segments.len()..]);
        Some(QualifiedName { segments })
    }
}

impl fmt::Display for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.segments.join("."))
    }
}

/// Modelica identifier lexical rule: ASCII letter or underscore start,
/// alphanumeric/underscore continuation.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalKind {
    Real,
    Boolean,
    Integer,
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalKind::Real => write!(f, "Real"),
            SignalKind::Boolean => write!(f, "Boolean"),
            SignalKind::Integer => write!(f, "Integer"),
        }
    }
}

/// One attribute in a connector modification, e.g. `final unit="K"`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attr<T> {
    pub value: T,
    pub is_final: bool,
}

/// Real-connector attribute set. Only legal on Real connectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConnectorAttrs {
    pub unit: Option<Attr<String>>,
    pub display_unit: Option<Attr<String>>,
    pub quantity: Option<Attr<String>>,
    pub min: Option<Attr<f64>>,
    pub max: Option<Attr<f64>>,
}

impl ConnectorAttrs {
    pub fn is_empty(&self) -> bool {
        self.unit.is_none()
            && self.display_unit.is_none()
            && self.quantity.is_none()
            && self.min.is_none()
            && self.max.is_none()
    }
}

/// Top-level input/output connector of a block.
#[derive(Debug, Clone, PartialEq)]
pub struct Connector {
    pub name: String,
    /// Full class path as declared, e.g. `Buildings.Controls.OBC.CDL.Interfaces.RealInput`.
    pub class_ref: QualifiedName,
    pub direction: Direction,
    pub signal_kind: SignalKind,
    pub attrs: ConnectorAttrs,
    /// Guard text of a conditional declaration, carried opaquely.
    pub condition: Option<String>,
    pub doc: Option<String>,
    pub annotation_text: Option<String>,
}

/// Literal or opaque modifier value.
#[derive(Debug, Clone, PartialEq)]
pub enum ModifierValue {
    Real(f64),
    Integer(i64),
    Boolean(bool),
    Str(String),
    /// Anything else, captured as balanced-delimiter raw text.
    Opaque(String),
}

impl fmt::Display for ModifierValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModifierValue::Real(v) => {
                if v.fract() == 0.0 && v.abs() < 1e15 {
                    write!(f, "{:.1}", v)
                } else {
                    write!(f, "{}", v)
                }
            }
            ModifierValue::Integer(v) => write!(f, "{}", v),
            ModifierValue::Boolean(v) => write!(f, "{}", v),
            ModifierValue::Str(s) => write!(f, "\"{}\"", escape_string(s)),
            ModifierValue::Opaque(s) => write!(f, "{}", s),
        }
    }
}

pub(crate) fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Modifier {
    pub name: String,
    pub value: ModifierValue,
    pub is_final: bool,
}

/// Instantiation of a library class inside a block.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentInstance {
    pub class_ref: QualifiedName,
    pub instance_name: String,
    pub modifiers: Vec<Modifier>,
    pub protected: bool,
    /// Guard text of a conditional declaration, carried opaquely.
    pub condition: Option<String>,
    pub doc: Option<String>,
    pub annotation_text: Option<String>,
}

impl ComponentInstance {
    pub fn modifier(&self, name: &str) -> Option<&ModifierValue> {
        self.modifiers.iter().find(|m| m.name == name).map(|m| &m.value)
    }
}

/// Dotted port path in a connect equation: `instance.port` or a bare connector name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PortPath {
    pub segments: Vec<String>,
}

impl PortPath {
    pub fn parse_str(s: &str) -> Option<Self> {
        let segments: Vec<String> = s.split('.').map(str::to_string).collect();
        if segments.is_empty() || segments.len() > 2 || !segments.iter().all(|x| is_identifier(x)) {
            return None;
        }
        Some(PortPath { segments })
    }
}

impl fmt::Display for PortPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.segments.join("."))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectEquation {
    pub source: PortPath,
    pub target: PortPath,
    pub annotation_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Block,
    Model,
}

/// Declared block parameter: `parameter Real Thys = 0.1 "doc";`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    /// Type name as written: `Real`, `Boolean`, `Integer`, `String`, or a class path.
    pub kind: String,
    pub name: String,
    pub default: Option<ModifierValue>,
    pub doc: Option<String>,
    pub annotation_text: Option<String>,
}

/// One parsed CDL-subset block or model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelicaBlock {
    pub name: String,
    pub kind: BlockKind,
    pub within_clause: Option<QualifiedName>,
    pub doc: Option<String>,
    pub connectors: Vec<Connector>,
    pub parameters: Vec<Parameter>,
    pub instances: Vec<ComponentInstance>,
    pub connects: Vec<ConnectEquation>,
    pub annotation_text: Option<String>,
}

/// One connector entry of an interface summary.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfacePort {
    pub name: String,
    pub direction: Direction,
    pub signal_kind: SignalKind,
    pub conditional: bool,
}

/// Interface signature: connectors in declaration order, inputs before outputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InterfaceSignature {
    pub inputs: Vec<InterfacePort>,
    pub outputs: Vec<InterfacePort>,
}

impl ModelicaBlock {
    pub fn connector(&self, name: &str) -> Option<&Connector> {
        self.connectors.iter().find(|c| c.name == name)
    }

    pub fn instance(&self, name: &str) -> Option<&ComponentInstance> {
        self.instances.iter().find(|i| i.instance_name == name)
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Connector list in declaration order with inputs ahead of outputs.
pub fn interface_of(block: &ModelicaBlock) -> InterfaceSignature {
    let mut sig = InterfaceSignature::default();
    for c in &block.connectors {
        let port = InterfacePort {
            name: c.name.clone(),
            direction: c.direction,
            signal_kind: c.signal_kind,
            conditional: c.condition.is_some(),
        };
        match c.direction {
            Direction::Input => sig.inputs.push(port),
            Direction::Output => sig.outputs.push(port),
        }
    }
    sig
}
