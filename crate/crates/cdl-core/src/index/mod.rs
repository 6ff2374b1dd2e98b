//! Deterministic index over a tree of CDL-subset `.mo` files with hard-rule
//! exact-name lookup, a token-overlap fuzzy baseline for comparison runs,
//! and version-rename resolution.

use crate::ast::{self, interface_of, InterfaceSignature, QualifiedName};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("no parseable classes found under {0}")]
    EmptyIndex(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed index file {path} at line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// One indexed library class.
#[derive(Debug, Clone)]
pub struct LibraryEntry {
    pub fqn: QualifiedName,
    pub kind: String,
    pub n_inputs: usize,
    pub n_outputs: usize,
    /// Present when the entry was built from source; absent when loaded
    /// from a persisted index file (the file stores port counts only).
    pub interface: Option<InterfaceSignature>,
    pub doc_text: String,
    pub source_path: String,
}

/// `(old prefix, new prefix)` rewrite pair across library releases.
#[derive(Debug, Clone)]
pub struct RenamePair {
    pub old_prefix: QualifiedName,
    pub new_prefix: QualifiedName,
}

#[derive(Debug, Clone)]
pub struct SkipWarning {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LibraryIndex {
    entries: BTreeMap<String, LibraryEntry>,
    pub version: String,
    pub rename_map: Vec<RenamePair>,
    pub warnings: Vec<SkipWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMode {
    HardRule,
    BaselineFuzzy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub query: String,
    pub mode: RetrievalMode,
    /// `(fqn, score)` ordered best-first. Hard-rule hits all score 1.0.
    pub hits: Vec<(String, f64)>,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VersionResolution {
    Found,
    Renamed(QualifiedName),
    Unknown,
}

impl fmt::Display for VersionResolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VersionResolution::Found => write!(f, "found"),
            VersionResolution::Renamed(fqn) => write!(f, "renamed({})", fqn),
            VersionResolution::Unknown => write!(f, "unknown"),
        }
    }
}

impl LibraryIndex {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Entries in lexicographic fqn order.
    pub fn entries(&self) -> impl Iterator<Item = &LibraryEntry> {
        self.entries.values()
    }

    pub fn get(&self, fqn: &str) -> Option<&LibraryEntry> {
        self.entries.get(fqn)
    }

    pub fn contains(&self, fqn: &QualifiedName) -> bool {
        self.entries.contains_key(&fqn.to_string())
    }

    /// Unqualified class names, one per entry, in index order. This is the
    /// `{txt}` payload handed to the module-selector prompt.
    pub fn terminal_names(&self) -> Vec<String> {
        self.entries
            .values()
            .map(|e| e.fqn.terminal().to_string())
            .collect()
    }
}

/// Scans `root` recursively for `.mo` files and indexes every parseable
/// class. Unparseable files are skipped with a warning record.
pub fn build_index(root: &Path, version: &str) -> Result<LibraryIndex, IndexError> {
    let mut files = Vec::new();
    collect_mo_files(root, &mut files)?;
    files.sort();

    let mut entries = BTreeMap::new();
    let mut warnings = Vec::new();
    for path in files {
        let source = fs::read_to_string(&path).map_err(|source| IndexError::Io {
            path: path.clone(),
            source,
        })?;
        match ast::parse(&source) {
            Ok(block) => {
                let fqn = class_fqn(&block, &path, root);
                let interface = interface_of(&block);
                let entry = LibraryEntry {
                    kind: match block.kind {
                        ast::BlockKind::Block => "block".to_string(),
                        ast::BlockKind::Model => "model".to_string(),
                    },
                    n_inputs: interface.inputs.len(),
                    n_outputs: interface.outputs.len(),
                    interface: Some(interface),
                    doc_text: doc_text_of(&block),
                    // root-relative with forward slashes, so index files are
                    // stable across checkouts
                    source_path: path
                        .strip_prefix(root)
                        .unwrap_or(&path)
                        .components()
                        .map(|c| c.as_os_str().to_string_lossy())
                        .collect::<Vec<_>>()
                        .join("/"),
                    fqn,
                };
                entries.insert(entry.fqn.to_string(), entry);
            }
            Err(err) => warnings.push(SkipWarning {
                path: path.clone(),
                reason: err.to_string(),
            }),
        }
    }
    if entries.is_empty() {
        return Err(IndexError::EmptyIndex(root.to_path_buf()));
    }
    Ok(LibraryIndex {
        entries,
        version: version.to_string(),
        rename_map: Vec::new(),
        warnings,
    })
}

fn collect_mo_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), IndexError> {
    let rd = fs::read_dir(dir).map_err(|source| IndexError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for dirent in rd {
        let dirent = dirent.map_err(|source| IndexError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dirent.path();
        if path.is_dir() {
            collect_mo_files(&path, out)?;
        } else if path.extension().and_then(|e| e.to_str()) == Some("mo") {
            out.push(path);
        }
    }
    Ok(())
}

/// Fully qualified class name: the `within` clause plus the class name when
/// present, else the root-relative directory path.
fn class_fqn(block: &ast::ModelicaBlock, path: &Path, root: &Path) -> QualifiedName {
    if let Some(within) = &block.within_clause {
        let mut segments = within.segments.clone();
        segments.push(block.name.clone());
        return QualifiedName::new(segments);
    }
    let rel = path.strip_prefix(root).unwrap_or(path);
    let mut segments: Vec<String> = rel
        .parent()
        .map(|p| {
            p.components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    segments.push(block.name.clone());
    QualifiedName::new(segments)
}

/// Class description string plus declaration comment strings; this is the
/// "documentation" a fuzzy retriever sees.
fn doc_text_of(block: &ast::ModelicaBlock) -> String {
    let mut parts = Vec::new();
    if let Some(doc) = &block.doc {
        parts.push(doc.clone());
    }
    for c in &block.connectors {
        if let Some(doc) = &c.doc {
            parts.push(doc.clone());
        }
    }
    for p in &block.parameters {
        if let Some(doc) = &p.doc {
            parts.push(doc.clone());
        }
    }
    for i in &block.instances {
        if let Some(doc) = &i.doc {
            parts.push(doc.clone());
        }
    }
    parts.join(" ")
}

/// Exact-name lookup: hits are entries whose fqn equals `name`, or whose
/// terminal segment equals `name` when `name` is unqualified. Case-sensitive.
pub fn hard_rule_lookup(index: &LibraryIndex, name: &str) -> RetrievalResult {
    let qualified = name.contains('.');
    let hits: Vec<(String, f64)> = index
        .entries()
        .filter(|e| {
            if qualified {
                e.fqn.to_string() == name
            } else {
                e.fqn.terminal() == name
            }
        })
        .map(|e| (e.fqn.to_string(), 1.0))
        .collect();
    RetrievalResult {
        query: name.to_string(),
        mode: RetrievalMode::HardRule,
        hits,
        exact: true,
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            current.push(c.to_ascii_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Occurrence count of query tokens within the entry's fqn + doc text.
pub fn overlap_count(query_tokens: &[String], entry: &LibraryEntry) -> usize {
    let text = format!("{} {}", entry.fqn, entry.doc_text);
    tokenize(&text)
        .iter()
        .filter(|t| query_tokens.contains(t))
        .count()
}

/// Token-overlap retrieval baseline. Scores are occurrence counts normalized
/// by the best hit, descending, ties broken lexicographically by fqn.
pub fn baseline_fuzzy_search(index: &LibraryIndex, query: &str, k: usize) -> RetrievalResult {
    assert!(k >= 1, "k must be at least 1");
    let query_tokens = tokenize(query);
    let mut scored: Vec<(String, usize)> = index
        .entries()
        .map(|e| (e.fqn.to_string(), overlap_count(&query_tokens, e)))
        .filter(|(_, c)| *c > 0)
        .collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let best = scored.first().map(|(_, c)| *c).unwrap_or(0).max(1) as f64;
    let hits = scored
        .into_iter()
        .take(k)
        .map(|(fqn, c)| (fqn, c as f64 / best))
        .collect();
    RetrievalResult {
        query: query.to_string(),
        mode: RetrievalMode::BaselineFuzzy,
        hits,
        exact: false,
    }
}

/// Found if present; renamed if a rename prefix applies and the rewritten fqn
/// is present; unknown otherwise.
pub fn resolve_version(index: &LibraryIndex, fqn: &QualifiedName) -> VersionResolution {
    if index.contains(fqn) {
        return VersionResolution::Found;
    }
    for pair in &index.rename_map {
        if let Some(rewritten) = fqn.with_prefix_replaced(&pair.old_prefix, &pair.new_prefix) {
            if index.contains(&rewritten) {
                return VersionResolution::Renamed(rewritten);
            }
        }
    }
    VersionResolution::Unknown
}

const ESCAPES: &[(char, &str)] = &[('\\', "\\\\"), ('\t', "\\t"), ('\n', "\\n")];

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match ESCAPES.iter().find(|(from, _)| *from == c) {
            Some((_, to)) => out.push_str(to),
            None => out.push(c),
        }
    }
    out
}

fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Writes the line-oriented index file. Golden tests diff this byte-exact.
pub fn write_index_file<W: Write>(index: &LibraryIndex, mut w: W) -> io::Result<()> {
    writeln!(w, "#cdl-index v1 {}", index.version)?;
    for e in index.entries() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.fqn,
            e.kind,
            e.n_inputs,
            e.n_outputs,
            escape_field(&e.source_path),
            escape_field(&e.doc_text)
        )?;
    }
    Ok(())
}

pub fn save_index(index: &LibraryIndex, path: &Path) -> Result<(), IndexError> {
    let mut buf = Vec::new();
    write_index_file(index, &mut buf).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, buf).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_index(path: &Path) -> Result<LibraryIndex, IndexError> {
    let text = fs::read_to_string(path).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |line: usize, message: &str| IndexError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "empty index file"))?;
    let version = header
        .strip_prefix("#cdl-index v1 ")
        .ok_or_else(|| malformed(1, "missing `#cdl-index v1` header"))?
        .to_string();
    let mut entries = BTreeMap::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(malformed(i + 1, "expected 6 tab-separated fields"));
        }
        let fqn = QualifiedName::parse_str(fields[0])
            .ok_or_else(|| malformed(i + 1, "bad fully qualified name"))?;
        let n_inputs: usize = fields[2]
            .parse()
            .map_err(|_| malformed(i + 1, "bad input count"))?;
        let n_outputs: usize = fields[3]
            .parse()
            .map_err(|_| malformed(i + 1, "bad output count"))?;
        let entry = LibraryEntry {
            kind: fields[1].to_string(),
            n_inputs,
            n_outputs,
            interface: None,
            source_path: unescape_field(fields[4]),
            doc_text: unescape_field(fields[5]),
            fqn,
        };
        entries.insert(entry.fqn.to_string(), entry);
    }
    if entries.is_empty() {
        return Err(IndexError::EmptyIndex(path.to_path_buf()));
    }
    Ok(LibraryIndex {
        entries,
        version,
        rename_map: Vec::new(),
        warnings: Vec::new(),
    })
}

/// Parses a rename-map file: lines of `old-prefix<TAB>new-prefix`.
pub fn load_rename_map(path: &Path) -> Result<Vec<RenamePair>, IndexError> {
    let text = fs::read_to_string(path).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (old, new) = line.split_once('\t').ok_or_else(|| IndexError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `old-prefix<TAB>new-prefix`".into(),
        })?;
        let parse = |s: &str| {
            QualifiedName::parse_str(s).ok_or_else(|| IndexError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("bad prefix `{}`", s),
            })
        };
        pairs.push(RenamePair {
            old_prefix: parse(old)?,
            new_prefix: parse(new)?,
        });
    }
    Ok(pairs)
}
