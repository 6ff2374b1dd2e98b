//! Hand-rolled lexer with byte spans so opaque regions (annotations,
//! modifier expressions, condition guards) can be sliced verbatim from
//! the source.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Number(f64),
    /// String literal, unescaped content.
    Str(String),
    Dot,
    Comma,
    Semi,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Eq,
    /// Multi-char or arithmetic operator carried opaquely: `==`, `<=`, `+`, ...
    Op(String),
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "identifier `{}`", s),
            TokenKind::Number(n) => write!(f, "number `{}`", n),
            TokenKind::Str(_) => write!(f, "string literal"),
            TokenKind::Dot => write!(f, "`.`"),
            TokenKind::Comma => write!(f, "`,`"),
            TokenKind::Semi => write!(f, "`;`"),
            TokenKind::LParen => write!(f, "`(`"),
            TokenKind::RParen => write!(f, "`)`"),
            TokenKind::LBracket => write!(f, "`[`"),
            TokenKind::RBracket => write!(f, "`]`"),
            TokenKind::LBrace => write!(f, "`{{`"),
            TokenKind::RBrace => write!(f, "`}}`"),
            TokenKind::Eq => write!(f, "`=`"),
            TokenKind::Op(s) => write!(f, "`{}`", s),
            TokenKind::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset of the first character.
    pub start: usize,
    /// Byte offset one past the last character.
    pub end: usize,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
pub struct LexError {
    pub message: String,
    pub line: usize,
    pub col: usize,
}

pub fn lex(source: &str) -> Result<Vec<Token>, LexError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0usize;
    let mut line = 1usize;
    let mut col = 1usize;

    macro_rules! bump {
        () => {{
            if bytes[i] == b'\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < bytes.len() {
        let c = bytes[i];
        let (tline, tcol, start) = (line, col, i);
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                bump!();
            }
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    bump!();
                }
            }
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'*' => {
                bump!();
                bump!();
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(LexError {
                            message: "unterminated block comment".into(),
                            line: tline,
                            col: tcol,
                        });
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        bump!();
                        bump!();
                        break;
                    }
                    bump!();
                }
            }
            b'"' => {
                bump!();
                let mut value = String::new();
                loop {
                    if i >= bytes.len() {
                        return Err(LexError {
                            message: "unterminated string literal".into(),
                            line: tline,
                            col: tcol,
                        });
                    }
                    match bytes[i] {
                        b'"' => {
                            bump!();
                            break;
                        }
                        b'\\' => {
                            bump!();
                            if i >= bytes.len() {
                                return Err(LexError {
                                    message: "unterminated escape in string".into(),
                                    line: tline,
                                    col: tcol,
                                });
                            }
                            let esc = bytes[i];
                            value.push(match esc {
                                b'"' => '"',
                                b'\\' => '\\',
                                b'n' => '\n',
                                b't' => '\t',
                                other => other as char,
                            });
                            bump!();
                        }
                        _ => {
                            // Advance over a whole UTF-8 scalar.
                            let s = &source[i..];
                            let ch = s.chars().next().unwrap();
                            value.push(ch);
                            for _ in 0..ch.len_utf8() {
                                bump!();
                            }
                        }
                    }
                }
                tokens.push(Token {
                    kind: TokenKind::Str(value),
                    start,
                    end: i,
                    line: tline,
                    col: tcol,
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    bump!();
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(source[start..i].to_string()),
                    start,
                    end: i,
                    line: tline,
                    col: tcol,
                });
            }
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    bump!();
                }
                if i < bytes.len() && bytes[i] == b'.' && i + 1 < bytes.len()
                    && bytes[i + 1].is_ascii_digit()
                {
                    bump!();
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        bump!();
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while i < j {
                            bump!();
                        }
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            bump!();
                        }
                    }
                }
                let text = &source[start..i];
                let value: f64 = text.parse().map_err(|_| LexError {
                    message: format!("malformed number `{}`", text),
                    line: tline,
                    col: tcol,
                })?;
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    start,
                    end: i,
                    line: tline,
                    col: tcol,
                });
            }
            _ => {
                let kind = match c {
                    b'.' => {
                        bump!();
                        TokenKind::Dot
                    }
                    b',' => {
                        bump!();
                        TokenKind::Comma
                    }
                    b';' => {
                        bump!();
                        TokenKind::Semi
                    }
                    b'(' => {
                        bump!();
                        TokenKind::LParen
                    }
                    b')' => {
                        bump!();
                        TokenKind::RParen
                    }
                    b'[' => {
                        bump!();
                        TokenKind::LBracket
                    }
                    b']' => {
                        bump!();
                        TokenKind::RBracket
                    }
                    b'{' => {
                        bump!();
                        TokenKind::LBrace
                    }
                    b'}' => {
                        bump!();
                        TokenKind::RBrace
                    }
                    b'=' => {
                        bump!();
                        if i < bytes.len() && bytes[i] == b'=' {
                            bump!();
                            TokenKind::Op("==".into())
                        } else {
                            TokenKind::Eq
                        }
                    }
                    b'<' | b'>' => {
                        let first = c as char;
                        bump!();
                        if i < bytes.len() && (bytes[i] == b'=' || (first == '<' && bytes[i] == b'>'))
                        {
                            let second = bytes[i] as char;
                            bump!();
                            TokenKind::Op(format!("{}{}", first, second))
                        } else {
                            TokenKind::Op(first.to_string())
                        }
                    }
                    b'+' | b'-' | b'*' | b'/' | b':' => {
                        bump!();
                        TokenKind::Op((c as char).to_string())
                    }
                    _ => {
                        return Err(LexError {
                            message: format!(
                                "unexpected character `{}`",
                                &source[start..].chars().next().unwrap()
                            ),
                            line: tline,
                            col: tcol,
                        });
                    }
                };
                tokens.push(Token {
                    kind,
                    start,
                    end: i,
                    line: tline,
                    col: tcol,
                });
            }
        }
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        start: i,
        end: i,
        line,
        col,
    });
    Ok(tokens)
}
