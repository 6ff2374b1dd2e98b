//! Recursive-descent parser for the CDL Modelica subset.
//!
//! Scope: `block`/`model` definitions with connector and parameter
//! declarations, component instances (including conditional and protected
//! ones), connect equations, and opaque annotations. Everything else is
//! rejected as an unsupported construct rather than silently misparsed.

use super::lexer::{lex, Token, TokenKind};
use super::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: found {found}, expected {}", expected.join(" or "))]
    Syntax {
        line: usize,
        col: usize,
        found: String,
        expected: Vec<String>,
    },
    #[error("unsupported construct at {line}:{col}: {construct}")]
    UnsupportedConstruct {
        construct: String,
        line: usize,
        col: usize,
    },
    #[error("invalid declaration at {line}:{col}: {message}")]
    Invalid {
        message: String,
        line: usize,
        col: usize,
    },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::UnsupportedConstruct { line, .. }
            | ParseError::Invalid { line, .. } => *line,
        }
    }
}

const CONNECTOR_CLASSES: &[(&str, Direction, SignalKind)] = &[
    ("RealInput", Direction::Input, SignalKind::Real),
    ("RealOutput", Direction::Output, SignalKind::Real),
    ("BooleanInput", Direction::Input, SignalKind::Boolean),
    ("BooleanOutput", Direction::Output, SignalKind::Boolean),
    ("IntegerInput", Direction::Input, SignalKind::Integer),
    ("IntegerOutput", Direction::Output, SignalKind::Integer),
];

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "algorithm", "initial", "function", "package", "record", "connector",
    "extends", "import", "type", "class", "partial", "encapsulated",
    "replaceable", "redeclare", "input", "output", "der", "when", "for",
    "while", "external", "inner", "outer", "stream", "flow", "constant",
    "discrete",
];

pub fn parse(source: &str) -> Result<ModelicaBlock, ParseError> {
    let tokens = lex(source).map_err(|e| ParseError::Syntax {
        line: e.line,
        col: e.col,
        found: e.message,
        expected: vec!["a token".into()],
    })?;
    Parser {
        source,
        tokens,
        pos: 0,
    }
    .parse_file()
}

struct Parser<'a> {
    source: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_kind(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn at_ident(&self, word: &str) -> bool {
        matches!(self.peek_kind(), TokenKind::Ident(s) if s == word)
    }

    fn err_here(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        ParseError::Syntax {
            line: t.line,
            col: t.col,
            found: t.kind.to_string(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn unsupported(&self, construct: &str) -> ParseError {
        let t = self.peek();
        ParseError::UnsupportedConstruct {
            construct: construct.into(),
            line: t.line,
            col: t.col,
        }
    }

    fn expect_ident_word(&mut self, word: &str) -> Result<Token, ParseError> {
        if self.at_ident(word) {
            Ok(self.bump())
        } else {
            Err(self.err_here(&[&format!("`{}`", word)]))
        }
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<Token, ParseError> {
        if std::mem::discriminant(self.peek_kind()) == std::mem::discriminant(kind) {
            Ok(self.bump())
        } else {
            Err(self.err_here(&[what]))
        }
    }

    fn take_identifier(&mut self, what: &str) -> Result<(String, Token), ParseError> {
        match self.peek_kind().clone() {
            TokenKind::Ident(s) => {
                let t = self.bump();
                Ok((s, t))
            }
            _ => Err(self.err_here(&[what])),
        }
    }

    fn parse_qualified_name(&mut self) -> Result<QualifiedName, ParseError> {
        let (first, _) = self.take_identifier("class path")?;
        let mut segments = vec![first];
        while matches!(self.peek_kind(), TokenKind::Dot) {
            self.bump();
            let (seg, _) = self.take_identifier("class path segment")?;
            segments.push(seg);
        }
        Ok(QualifiedName::new(segments))
    }

    fn parse_file(mut self) -> Result<ModelicaBlock, ParseError> {
        let within_clause = if self.at_ident("within") {
            self.bump();
            let name = self.parse_qualified_name()?;
            self.expect(&TokenKind::Semi, "`;`")?;
            Some(name)
        } else {
            None
        };

        let kind = if self.at_ident("block") {
            self.bump();
            BlockKind::Block
        } else if self.at_ident("model") {
            self.bump();
            BlockKind::Model
        } else if let TokenKind::Ident(word) = self.peek_kind() {
            if UNSUPPORTED_KEYWORDS.contains(&word.as_str()) {
                return Err(self.unsupported(&format!("`{}` class definition", word)));
            }
            return Err(self.err_here(&["`block`", "`model`"]));
        } else {
            return Err(self.err_here(&["`block`", "`model`"]));
        };

        let (name, _) = self.take_identifier("block name")?;
        let doc = self.take_opt_doc();

        let mut block = ModelicaBlock {
            name,
            kind,
            within_clause,
            doc,
            connectors: Vec::new(),
            parameters: Vec::new(),
            instances: Vec::new(),
            connects: Vec::new(),
            annotation_text: None,
        };

        let mut in_protected = false;
        loop {
            if self.at_ident("protected") {
                self.bump();
                in_protected = true;
                continue;
            }
            if self.at_ident("public") {
                self.bump();
                in_protected = false;
                continue;
            }
            if self.at_ident("equation") {
                self.bump();
                break;
            }
            if self.at_ident("end") {
                break;
            }
            if self.at_ident("annotation") {
                block.annotation_text = Some(self.parse_annotation()?);
                self.expect(&TokenKind::Semi, "`;`")?;
                continue;
            }
            self.parse_element(&mut block, in_protected)?;
        }

        // equation section (may be absent when we broke on `end`)
        while !self.at_ident("end") {
            if self.at_ident("connect") {
                block.connects.push(self.parse_connect()?);
            } else if self.at_ident("annotation") {
                block.annotation_text = Some(self.parse_annotation()?);
                self.expect(&TokenKind::Semi, "`;`")?;
            } else if matches!(self.peek_kind(), TokenKind::Eof) {
                return Err(self.err_here(&["`end`"]));
            } else {
                return Err(self.unsupported("equation other than connect"));
            }
        }

        self.expect_ident_word("end")?;
        let (end_name, end_tok) = self.take_identifier("block name after `end`")?;
        if end_name != block.name {
            return Err(ParseError::Invalid {
                message: format!(
                    "`end {}` does not match block name `{}`",
                    end_name, block.name
                ),
                line: end_tok.line,
                col: end_tok.col,
            });
        }
        self.expect(&TokenKind::Semi, "`;`")?;
        if !matches!(self.peek_kind(), TokenKind::Eof) {
            return Err(self.err_here(&["end of input"]));
        }

        self.check_invariants(&block)?;
        Ok(block)
    }

    fn check_invariants(&self, block: &ModelicaBlock) -> Result<(), ParseError> {
        let mut seen = std::collections::HashSet::new();
        for n in block
            .connectors
            .iter()
            .map(|c| c.name.as_str())
            .chain(block.parameters.iter().map(|p| p.name.as_str()))
            .chain(block.instances.iter().map(|i| i.instance_name.as_str()))
        {
            if !seen.insert(n) {
                return Err(ParseError::Invalid {
                    message: format!("name `{}` declared more than once", n),
                    line: 1,
                    col: 1,
                });
            }
        }
        if block.connectors.is_empty() {
            return Err(ParseError::Invalid {
                message: "block declares no connectors".into(),
                line: 1,
                col: 1,
            });
        }
        Ok(())
    }

    fn take_opt_doc(&mut self) -> Option<String> {
        if let TokenKind::Str(s) = self.peek_kind().clone() {
            self.bump();
            Some(s)
        } else {
            None
        }
    }

    /// `annotation ( ... )` with the parenthesized text captured verbatim.
    fn parse_annotation(&mut self) -> Result<String, ParseError> {
        self.expect_ident_word("annotation")?;
        if !matches!(self.peek_kind(), TokenKind::LParen) {
            return Err(self.err_here(&["`(`"]));
        }
        let open = self.bump();
        let mut depth = 1usize;
        let close;
        loop {
            match self.peek_kind() {
                TokenKind::LParen => {
                    depth += 1;
                    self.bump();
                }
                TokenKind::RParen => {
                    depth -= 1;
                    let t = self.bump();
                    if depth == 0 {
                        close = t;
                        break;
                    }
                }
                TokenKind::Eof => return Err(self.err_here(&["`)`"])),
                _ => {
                    self.bump();
                }
            }
        }
        Ok(self.source[open.start..close.end].to_string())
    }

    /// Raw-text scan for opaque expressions. Stops at `,`/`)` (depth 0) when
    /// `stop_comma_rparen`, and always at `;`, a string literal, `annotation`,
    /// or `if` at depth 0.
    fn scan_opaque(&mut self, stop_comma_rparen: bool) -> Result<String, ParseError> {
        let start = self.peek().start;
        let mut end = start;
        let mut depth = 0usize;
        let mut consumed = 0usize;
        loop {
            match self.peek_kind() {
                TokenKind::Eof => break,
                TokenKind::Semi if depth == 0 => break,
                TokenKind::Str(_) if depth == 0 => break,
                TokenKind::Ident(s) if depth == 0 && (s == "annotation" || s == "if") => break,
                TokenKind::Comma | TokenKind::RParen
                    if depth == 0 && stop_comma_rparen =>
                {
                    break
                }
                TokenKind::LParen | TokenKind::LBracket | TokenKind::LBrace => {
                    depth += 1;
                    end = self.bump().end;
                    consumed += 1;
                }
                TokenKind::RParen | TokenKind::RBracket | TokenKind::RBrace => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                    end = self.bump().end;
                    consumed += 1;
                }
                _ => {
                    end = self.bump().end;
                    consumed += 1;
                }
            }
        }
        if consumed == 0 {
            return Err(self.err_here(&["an expression"]));
        }
        Ok(normalize_opaque(&self.source[start..end]))
    }

    /// Literal if the expression is a single (possibly negated) literal token,
    /// otherwise opaque text.
    fn parse_value(&mut self, stop_comma_rparen: bool) -> Result<ModifierValue, ParseError> {
        let start_pos = self.pos;
        let negative = matches!(self.peek_kind(), TokenKind::Op(s) if s == "-");
        let lit_idx = if negative { self.pos + 1 } else { self.pos };
        if lit_idx + 1 >= self.tokens.len() {
            return Ok(ModifierValue::Opaque(self.scan_opaque(stop_comma_rparen)?));
        }
        let lit = self.tokens[lit_idx].clone();
        let after = &self.tokens[lit_idx + 1].kind;
        let terminator = matches!(
            after,
            TokenKind::Semi | TokenKind::Str(_) | TokenKind::Eof
        ) || matches!(after, TokenKind::Ident(s) if s == "annotation" || s == "if")
            || (stop_comma_rparen && matches!(after, TokenKind::Comma | TokenKind::RParen));
        if terminator {
            match &lit.kind {
                TokenKind::Number(n) => {
                    self.pos = lit_idx + 1;
                    let raw = &self.source[lit.start..lit.end];
                    let is_real = raw.contains('.') || raw.contains('e') || raw.contains('E');
                    let sign = if negative { -1.0 } else { 1.0 };
                    return Ok(if is_real {
                        ModifierValue::Real(sign * n)
                    } else {
                        ModifierValue::Integer((sign * n) as i64)
                    });
                }
                TokenKind::Ident(s) if !negative && (s == "true" || s == "false") => {
                    self.pos = lit_idx + 1;
                    return Ok(ModifierValue::Boolean(s == "true"));
                }
                TokenKind::Str(s) if !negative => {
                    let s = s.clone();
                    self.pos = lit_idx + 1;
                    return Ok(ModifierValue::Str(s));
                }
                _ => {}
            }
        }
        self.pos = start_pos;
        Ok(ModifierValue::Opaque(self.scan_opaque(stop_comma_rparen)?))
    }

    fn parse_modifier_list(&mut self) -> Result<Vec<Modifier>, ParseError> {
        self.expect(&TokenKind::LParen, "`(`")?;
        let mut mods = Vec::new();
        if matches!(self.peek_kind(), TokenKind::RParen) {
            self.bump();
            return Ok(mods);
        }
        loop {
            let is_final = if self.at_ident("final") {
                self.bump();
                true
            } else {
                false
            };
            let (name, name_tok) = self.take_identifier("modifier name")?;
            if mods.iter().any(|m: &Modifier| m.name == name) {
                return Err(ParseError::Invalid {
                    message: format!("modifier `{}` given more than once", name),
                    line: name_tok.line,
                    col: name_tok.col,
                });
            }
            self.expect(&TokenKind::Eq, "`=`")?;
            let value = self.parse_value(true)?;
            mods.push(Modifier {
                name,
                value,
                is_final,
            });
            match self.peek_kind() {
                TokenKind::Comma => {
                    self.bump();
                }
                TokenKind::RParen => {
                    self.bump();
                    break;
                }
                _ => return Err(self.err_here(&["`,`", "`)`"])),
            }
        }
        Ok(mods)
    }

    fn parse_element(
        &mut self,
        block: &mut ModelicaBlock,
        protected: bool,
    ) -> Result<(), ParseError> {
        if let TokenKind::Ident(word) = self.peek_kind() {
            if word == "parameter" {
                return self.parse_parameter(block);
            }
            if UNSUPPORTED_KEYWORDS.contains(&word.as_str()) {
                return Err(self.unsupported(&format!("`{}` declaration", word)));
            }
            if matches!(word.as_str(), "Real" | "Boolean" | "Integer" | "String") {
                return Err(self.unsupported("bare variable declaration"));
            }
        } else {
            return Err(self.err_here(&["a declaration", "`equation`", "`end`"]));
        }

        let class_ref = self.parse_qualified_name()?;
        let (instance_name, name_tok) = self.take_identifier("declaration name")?;
        let modifiers = if matches!(self.peek_kind(), TokenKind::LParen) {
            self.parse_modifier_list()?
        } else {
            Vec::new()
        };
        let condition = if self.at_ident("if") {
            self.bump();
            Some(self.scan_opaque(false)?)
        } else {
            None
        };
        let doc = self.take_opt_doc();
        let annotation_text = if self.at_ident("annotation") {
            Some(self.parse_annotation()?)
        } else {
            None
        };
        self.expect(&TokenKind::Semi, "`;`")?;

        let connector_kind = CONNECTOR_CLASSES
            .iter()
            .find(|(t, _, _)| *t == class_ref.terminal());
        if let Some((_, direction, signal_kind)) = connector_kind {
            if protected {
                return Err(ParseError::Invalid {
                    message: format!("connector `{}` in protected section", instance_name),
                    line: name_tok.line,
                    col: name_tok.col,
                });
            }
            let attrs = connector_attrs(&modifiers, *signal_kind, &name_tok)?;
            block.connectors.push(Connector {
                name: instance_name,
                class_ref,
                direction: *direction,
                signal_kind: *signal_kind,
                attrs,
                condition,
                doc,
                annotation_text,
            });
        } else {
            block.instances.push(ComponentInstance {
                class_ref,
                instance_name,
                modifiers,
                protected,
                condition,
                doc,
                annotation_text,
            });
        }
        Ok(())
    }

    fn parse_parameter(&mut self, block: &mut ModelicaBlock) -> Result<(), ParseError> {
        self.expect_ident_word("parameter")?;
        let type_name = self.parse_qualified_name()?;
        let (name, _) = self.take_identifier("parameter name")?;
        let default = if matches!(self.peek_kind(), TokenKind::Eq) {
            self.bump();
            Some(self.parse_value(false)?)
        } else {
            None
        };
        let doc = self.take_opt_doc();
        let annotation_text = if self.at_ident("annotation") {
            Some(self.parse_annotation()?)
        } else {
            None
        };
        self.expect(&TokenKind::Semi, "`;`")?;
        block.parameters.push(Parameter {
            kind: type_name.to_string(),
            name,
            default,
            doc,
            annotation_text,
        });
        Ok(())
    }

    fn parse_port_path(&mut self) -> Result<PortPath, ParseError> {
        let (first, _) = self.take_identifier("port path")?;
        let mut segments = vec![first];
        if matches!(self.peek_kind(), TokenKind::Dot) {
            self.bump();
            let (second, _) = self.take_identifier("port name")?;
            segments.push(second);
        }
        if matches!(self.peek_kind(), TokenKind::Dot) {
            return Err(self.unsupported("port path deeper than instance.port"));
        }
        Ok(PortPath { segments })
    }

    fn parse_connect(&mut self) -> Result<ConnectEquation, ParseError> {
        self.expect_ident_word("connect")?;
        self.expect(&TokenKind::LParen, "`(`")?;
        let source = self.parse_port_path()?;
        self.expect(&TokenKind::Comma, "`,`")?;
        let target = self.parse_port_path()?;
        self.expect(&TokenKind::RParen, "`)`")?;
        let annotation_text = if self.at_ident("annotation") {
            Some(self.parse_annotation()?)
        } else {
            None
        };
        self.expect(&TokenKind::Semi, "`;`")?;
        Ok(ConnectEquation {
            source,
            target,
            annotation_text,
        })
    }
}

/// Collapses runs of whitespace in opaque expression text so that the
/// canonical printer re-emits a stable single-line form.
fn normalize_opaque(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn connector_attrs(
    modifiers: &[Modifier],
    kind: SignalKind,
    at: &Token,
) -> Result<ConnectorAttrs, ParseError> {
    let mut attrs = ConnectorAttrs::default();
    for m in modifiers {
        if kind != SignalKind::Real {
            return Err(ParseError::Invalid {
                message: format!(
                    "attribute `{}` is only legal on Real connectors",
                    m.name
                ),
                line: at.line,
                col: at.col,
            });
        }
        let string_value = || match &m.value {
            ModifierValue::Str(s) => Ok(Attr {
                value: s.clone(),
                is_final: m.is_final,
            }),
            _ => Err(ParseError::Invalid {
                message: format!("attribute `{}` must be a string", m.name),
                line: at.line,
                col: at.col,
            }),
        };
        let number_value = || match &m.value {
            ModifierValue::Real(v) => Ok(Attr {
                value: *v,
                is_final: m.is_final,
            }),
            ModifierValue::Integer(v) => Ok(Attr {
                value: *v as f64,
                is_final: m.is_final,
            }),
            _ => Err(ParseError::Invalid {
                message: format!("attribute `{}` must be numeric", m.name),
                line: at.line,
                col: at.col,
            }),
        };
        match m.name.as_str() {
            "unit" => attrs.unit = Some(string_value()?),
            "displayUnit" => attrs.display_unit = Some(string_value()?),
            "quantity" => attrs.quantity = Some(string_value()?),
            "min" => attrs.min = Some(number_value()?),
            "max" => attrs.max = Some(number_value()?),
            other => {
                return Err(ParseError::Invalid {
                    message: format!("unknown connector attribute `{}`", other),
                    line: at.line,
                    col: at.col,
                })
            }
        }
    }
    if let (Some(min), Some(max)) = (&attrs.min, &attrs.max) {
        if min.value > max.value {
            return Err(ParseError::Invalid {
                message: format!("min {} exceeds max {}", min.value, max.value),
                line: at.line,
                col: at.col,
            });
        }
    }
    Ok(attrs)
}
