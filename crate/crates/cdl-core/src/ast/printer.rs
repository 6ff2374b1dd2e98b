//! Canonical source printer: 2-space indentation, one declaration per line,
//! fixed section order (connectors, parameters, public instances, protected
//! instances, equation). `parse(print(b))` is structurally equal to `b`.

use super::*;
use std::fmt::Write;

pub fn print(block: &ModelicaBlock) -> String {
    let mut out = String::new();
    if let Some(within) = &block.within_clause {
        let _ = writeln!(out, "within {};", within);
    }
    let kind = match block.kind {
        BlockKind::Block => "block",
        BlockKind::Model => "model",
    };
    let _ = write!(out, "{} {}", kind, block.name);
    if let Some(doc) = &block.doc {
        let _ = write!(out, " \"{}\"", escape_string(doc));
    }
    out.push('\n');

    for c in &block.connectors {
        out.push_str("  ");
        out.push_str(&connector_line(c));
        out.push('\n');
    }
    for p in &block.parameters {
        out.push_str("  ");
        out.push_str(&parameter_line(p));
        out.push('\n');
    }
    for inst in block.instances.iter().filter(|i| !i.protected) {
        out.push_str("  ");
        out.push_str(&instance_line(inst));
        out.push('\n');
    }
    if block.instances.iter().any(|i| i.protected) {
        out.push_str("protected\n");
        for inst in block.instances.iter().filter(|i| i.protected) {
            out.push_str("  ");
            out.push_str(&instance_line(inst));
            out.push('\n');
        }
    }
    if !block.connects.is_empty() {
        out.push_str("equation\n");
        for conn in &block.connects {
            let _ = write!(out, "  connect({}, {})", conn.source, conn.target);
            if let Some(ann) = &conn.annotation_text {
                let _ = write!(out, " annotation {}", ann);
            }
            out.push_str(";\n");
        }
    }
    if let Some(ann) = &block.annotation_text {
        let _ = writeln!(out, "  annotation {};", ann);
    }
    let _ = writeln!(out, "end {};", block.name);
    out
}

fn fmt_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{}", v)
    }
}

fn connector_line(c: &Connector) -> String {
    let mut line = format!("{} {}", c.class_ref, c.name);
    if !c.attrs.is_empty() {
        let mut parts = Vec::new();
        let fin = |is_final: bool| if is_final { "final " } else { "" };
        if let Some(a) = &c.attrs.quantity {
            parts.push(format!("{}quantity=\"{}\"", fin(a.is_final), escape_string(&a.value)));
        }
        if let Some(a) = &c.attrs.unit {
            parts.push(format!("{}unit=\"{}\"", fin(a.is_final), escape_string(&a.value)));
        }
        if let Some(a) = &c.attrs.display_unit {
            parts.push(format!(
                "{}displayUnit=\"{}\"",
                fin(a.is_final),
                escape_string(&a.value)
            ));
        }
        if let Some(a) = &c.attrs.min {
            parts.push(format!("{}min={}", fin(a.is_final), fmt_number(a.value)));
        }
        if let Some(a) = &c.attrs.max {
            parts.push(format!("{}max={}", fin(a.is_final), fmt_number(a.value)));
        }
        line.push('(');
        line.push_str(&parts.join(", "));
        line.push(')');
    }
    push_tail(&mut line, c.condition.as_deref(), c.doc.as_deref(), c.annotation_text.as_deref());
    line
}

fn parameter_line(p: &Parameter) -> String {
    let mut line = format!("parameter {} {}", p.kind, p.name);
    if let Some(default) = &p.default {
        line.push_str(" = ");
        line.push_str(&default.to_string());
    }
    push_tail(&mut line, None, p.doc.as_deref(), p.annotation_text.as_deref());
    line
}

fn instance_line(inst: &ComponentInstance) -> String {
    let mut line = format!("{} {}", inst.class_ref, inst.instance_name);
    if !inst.modifiers.is_empty() {
        let parts: Vec<String> = inst
            .modifiers
            .iter()
            .map(|m| {
                format!(
                    "{}{}={}",
                    if m.is_final { "final " } else { "" },
                    m.name,
                    m.value
                )
            })
            .collect();
        line.push('(');
        line.push_str(&parts.join(", "));
        line.push(')');
    }
    push_tail(
        &mut line,
        inst.condition.as_deref(),
        inst.doc.as_deref(),
        inst.annotation_text.as_deref(),
    );
    line
}

fn push_tail(line: &mut String, condition: Option<&str>, doc: Option<&str>, ann: Option<&str>) {
    if let Some(cond) = condition {
        let _ = write!(line, " if {}", cond);
    }
    if let Some(doc) = doc {
        let _ = write!(line, " \"{}\"", escape_string(doc));
    }
    if let Some(ann) = ann {
        let _ = write!(line, " annotation {}", ann);
    }
    line.push(';');
}
