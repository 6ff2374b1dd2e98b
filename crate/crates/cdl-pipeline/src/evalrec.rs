//! Human-evaluation records, the plain-text form they travel in, the AI
//! evaluation pathway, and aggregate/cost-benefit reporting.
//!
//! A record follows the two-path template: a yes/no task-compliance gate,
//! then either the five Path A quality bits (behavior correct) or the four
//! Path B salvage bits (behavior wrong), never both.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use cdl_core::validate::FaultClass;
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::prompt;

pub const PATH_A_BITS: [&str; 5] = [
    "library_appropriateness",
    "structure_modularity_readability",
    "interface_accuracy",
    "logic_simplicity_clarity",
    "robustness",
];

pub const PATH_B_BITS: [&str; 4] = [
    "simulation_syntax_validity",
    "semantic_correctness",
    "logical_soundness",
    "interface_appropriateness",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Evaluator {
    Human(String),
    Ai(String),
}

impl Evaluator {
    fn as_field(&self) -> String {
        match self {
            Evaluator::Human(name) => format!("human:{name}"),
            Evaluator::Ai(model) => format!("ai:{model}"),
        }
    }

    fn parse(s: &str) -> Option<Evaluator> {
        let (kind, who) = s.split_once(':')?;
        if who.is_empty() {
            return None;
        }
        match kind {
            "human" => Some(Evaluator::Human(who.to_string())),
            "ai" => Some(Evaluator::Ai(who.to_string())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffortBand {
    Minor,
    /// 1–8 hours.
    Moderate,
    Major,
}

impl EffortBand {
    pub fn as_str(&self) -> &'static str {
        match self {
            EffortBand::Minor => "minor",
            EffortBand::Moderate => "moderate",
            EffortBand::Major => "major",
        }
    }

    pub fn parse(s: &str) -> Option<EffortBand> {
        match s {
            "minor" => Some(EffortBand::Minor),
            "moderate" => Some(EffortBand::Moderate),
            "major" => Some(EffortBand::Major),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub session_id: String,
    pub evaluator: Evaluator,
    /// The task-compliance verdict; absent when an AI reply was unparseable.
    pub gate: Option<bool>,
    pub path_a_bits: Option<Vec<(String, bool)>>,
    pub path_b_bits: Option<Vec<(String, bool)>>,
    pub fault_notes: Vec<(FaultClass, String)>,
    pub effort_band: Option<EffortBand>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormError {
    #[error("invalid form field: {0}")]
    FormInvalid(String),
}

#[derive(Debug, Error)]
pub enum AiEvalError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] prompt::PromptError),
}

impl EvaluationRecord {
    /// Mean of the present bit vector, in [0, 1].
    pub fn score(&self) -> Option<f64> {
        let bits = self.path_a_bits.as_ref().or(self.path_b_bits.as_ref())?;
        if bits.is_empty() {
            return None;
        }
        let ones = bits.iter().filter(|(_, b)| *b).count();
        Some(ones as f64 / bits.len() as f64)
    }

    /// Gate/path exclusivity: gate=yes carries exactly the Path A bits,
    /// gate=no exactly the Path B bits.
    pub fn check(&self) -> Result<(), FormError> {
        match self.gate {
            Some(true) => {
                if self.path_b_bits.is_some() {
                    return Err(FormError::FormInvalid(
                        "path_b filled although the gate is yes".into(),
                    ));
                }
                let bits = self.path_a_bits.as_ref().ok_or_else(|| {
                    FormError::FormInvalid("gate is yes but path_a is empty".into())
                })?;
                for name in PATH_A_BITS {
                    if !bits.iter().any(|(n, _)| n == name) {
                        return Err(FormError::FormInvalid(format!("path_a missing {name}")));
                    }
                }
            }
            Some(false) => {
                if self.path_a_bits.is_some() {
                    return Err(FormError::FormInvalid(
                        "path_a filled although the gate is no".into(),
                    ));
                }
                let bits = self.path_b_bits.as_ref().ok_or_else(|| {
                    FormError::FormInvalid("gate is no but path_b is empty".into())
                })?;
                for name in PATH_B_BITS {
                    if !bits.iter().any(|(n, _)| n == name) {
                        return Err(FormError::FormInvalid(format!("path_b missing {name}")));
                    }
                }
            }
            None => {
                if self.path_a_bits.is_some() || self.path_b_bits.is_some() {
                    return Err(FormError::FormInvalid(
                        "score bits present without a gate verdict".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Emit an empty evaluation form, pre-filled with session metadata, for a
/// reviewer to complete offline. Score bits are left blank; blank lines in
/// the inapplicable path section are simply deleted before ingestion.
pub fn human_eval_form(session_id: &str) -> String {
    let mut out = String::new();
    out.push_str("# Control block evaluation form. Fill behaves_correctly with yes or no;\n");
    out.push_str("# then score ONLY the matching path section with 0/1 bits and delete the\n");
    out.push_str("# other section's lines. Faults are `fault_class=note` lines.\n");
    out.push_str("[gate]\n");
    let _ = writeln!(out, "session_id={session_id}");
    out.push_str("evaluator=human:\n");
    out.push_str("behaves_correctly=\n");
    out.push_str("[path_a]\n");
    for bit in PATH_A_BITS {
        let _ = writeln!(out, "{bit}=");
    }
    out.push_str("[path_b]\n");
    for bit in PATH_B_BITS {
        let _ = writeln!(out, "{bit}=");
    }
    out.push_str("[faults]\n");
    out.push_str("[effort]\n");
    out.push_str("band=\n");
    out
}

/// Serialize a completed record back to the form format.
pub fn record_to_form(record: &EvaluationRecord) -> String {
    let mut out = String::new();
    out.push_str("[gate]\n");
    let _ = writeln!(out, "session_id={}", record.session_id);
    let _ = writeln!(out, "evaluator={}", record.evaluator.as_field());
    let gate = match record.gate {
        Some(true) => "yes",
        Some(false) => "no",
        None => "",
    };
    let _ = writeln!(out, "behaves_correctly={gate}");
    out.push_str("[path_a]\n");
    if let Some(bits) = &record.path_a_bits {
        for (name, bit) in bits {
            let _ = writeln!(out, "{name}={}", u8::from(*bit));
        }
    }
    out.push_str("[path_b]\n");
    if let Some(bits) = &record.path_b_bits {
        for (name, bit) in bits {
            let _ = writeln!(out, "{name}={}", u8::from(*bit));
        }
    }
    out.push_str("[faults]\n");
    for (fault, note) in &record.fault_notes {
        let _ = writeln!(out, "{fault}={note}");
    }
    out.push_str("[effort]\n");
    let band = record.effort_band.map(|b| b.as_str()).unwrap_or("");
    let _ = writeln!(out, "band={band}");
    out
}

/// Parse a completed form, enforcing gate/path exclusivity.
pub fn ingest_human_eval(form: &str) -> Result<EvaluationRecord, FormError> {
    let mut section = String::new();
    let mut session_id = String::new();
    let mut evaluator: Option<Evaluator> = None;
    let mut gate: Option<bool> = None;
    let mut path_a: Vec<(String, bool)> = Vec::new();
    let mut path_b: Vec<(String, bool)> = Vec::new();
    let mut faults: Vec<(FaultClass, String)> = Vec::new();
    let mut effort: Option<EffortBand> = None;
    for raw in form.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(head) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = head.trim().to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| FormError::FormInvalid(format!("not key=value: {line}")))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            // An untouched blank from the emitted template.
            continue;
        }
        match section.as_str() {
            "gate" => match key {
                "session_id" => session_id = value.to_string(),
                "evaluator" => {
                    evaluator = Some(Evaluator::parse(value).ok_or_else(|| {
                        FormError::FormInvalid(format!("evaluator: {value}"))
                    })?)
                }
                "behaves_correctly" => {
                    gate = Some(match value {
                        "yes" => true,
                        "no" => false,
                        other => {
                            return Err(FormError::FormInvalid(format!(
                                "behaves_correctly: {other}"
                            )))
                        }
                    })
                }
                other => return Err(FormError::FormInvalid(format!("gate.{other}"))),
            },
            "path_a" | "path_b" => {
                let allowed: &[&str] = if section == "path_a" {
                    &PATH_A_BITS
                } else {
                    &PATH_B_BITS
                };
                if !allowed.contains(&key) {
                    return Err(FormError::FormInvalid(format!("{section}.{key}")));
                }
                let bit = match value {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(FormError::FormInvalid(format!(
                            "{section}.{key}: {other} (want 0 or 1)"
                        )))
                    }
                };
                if section == "path_a" {
                    path_a.push((key.to_string(), bit));
                } else {
                    path_b.push((key.to_string(), bit));
                }
            }
            "faults" => {
                let fault = FaultClass::parse(key)
                    .ok_or_else(|| FormError::FormInvalid(format!("fault class {key}")))?;
                faults.push((fault, value.to_string()));
            }
            "effort" => {
                if key != "band" {
                    return Err(FormError::FormInvalid(format!("effort.{key}")));
                }
                effort = Some(
                    EffortBand::parse(value)
                        .ok_or_else(|| FormError::FormInvalid(format!("effort band {value}")))?,
                );
            }
            other => return Err(FormError::FormInvalid(format!("section [{other}]"))),
        }
    }
    if session_id.is_empty() {
        return Err(FormError::FormInvalid("missing session_id".into()));
    }
    let record = EvaluationRecord {
        session_id,
        evaluator: evaluator
            .ok_or_else(|| FormError::FormInvalid("missing evaluator".into()))?,
        gate,
        path_a_bits: if path_a.is_empty() { None } else { Some(path_a) },
        path_b_bits: if path_b.is_empty() { None } else { Some(path_b) },
        fault_notes: faults,
        effort_band: effort,
    };
    record.check()?;
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AiPathway {
    TraceBased,
    CodeBased,
}

/// Ask the evaluator model for a yes/no task-compliance verdict. The AI
/// pathway never fills score bits: the model is constrained to the gate
/// question only.
pub fn ai_evaluate(
    session_id: &str,
    task_text: &str,
    payload: &str,
    pathway: AiPathway,
    model_id: &str,
    gateway: &mut Gateway,
) -> Result<EvaluationRecord, AiEvalError> {
    let what = match pathway {
        AiPathway::TraceBased => "simulation results as time-series data for",
        AiPathway::CodeBased => "the Modelica source code of",
    };
    let user_text = format!(
        "The control task is:\n\n{task_text}\n\nThe following is {what} the generated control module:\n\n{payload}\n\nDoes the module behave correctly for the control task?"
    );
    let system_text = prompt::iteration_template().system_text;
    let request = ChatRequest::new(model_id, &system_text, &user_text);
    let response = gateway.complete(&request)?;
    let verdict = response.text.trim().to_ascii_lowercase();
    let gate = if verdict == "yes" || verdict.starts_with("yes.") {
        Some(true)
    } else if verdict == "no" || verdict.starts_with("no.") {
        Some(false)
    } else {
        // UnparseableVerdict: recorded with the gate left absent.
        None
    };
    Ok(EvaluationRecord {
        session_id: session_id.to_string(),
        evaluator: Evaluator::Ai(model_id.to_string()),
        gate,
        path_a_bits: None,
        path_b_bits: None,
        fault_notes: Vec::new(),
        effort_band: None,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgreementMatrix {
    pub yes_yes: usize,
    pub yes_no: usize,
    pub no_yes: usize,
    pub no_no: usize,
    pub no_data: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub sessions: usize,
    /// Fraction of sessions whose human gate is yes.
    pub success_rate: f64,
    pub per_criterion: Vec<(String, f64)>,
    pub fault_distribution: Vec<(FaultClass, usize)>,
    pub effort_distribution: Vec<(EffortBand, usize)>,
    /// Human verdict (rows) against AI verdict (columns).
    pub agreement: AgreementMatrix,
}

/// Aggregate evaluation records across sessions. Sessions are identified by
/// the record's session_id; when a session has both a human and an AI
/// record, the pair feeds the agreement matrix.
pub fn aggregate_report(records: &[EvaluationRecord]) -> AggregateReport {
    let mut by_session: BTreeMap<&str, (Option<&EvaluationRecord>, Option<&EvaluationRecord>)> =
        BTreeMap::new();
    for r in records {
        let slot = by_session.entry(&r.session_id).or_default();
        match r.evaluator {
            Evaluator::Human(_) => slot.0 = Some(r),
            Evaluator::Ai(_) => slot.1 = Some(r),
        }
    }
    let sessions = by_session.len();
    let successes = by_session
        .values()
        .filter(|(h, _)| h.and_then(|r| r.gate) == Some(true))
        .count();
    let mut criterion_counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut faults: BTreeMap<FaultClass, usize> = BTreeMap::new();
    let mut efforts: BTreeMap<&'static str, (EffortBand, usize)> = BTreeMap::new();
    for r in records {
        for (name, bit) in r
            .path_a_bits
            .iter()
            .flatten()
            .chain(r.path_b_bits.iter().flatten())
        {
            let slot = criterion_counts.entry(name.clone()).or_default();
            slot.1 += 1;
            if *bit {
                slot.0 += 1;
            }
        }
        for (fault, _) in &r.fault_notes {
            *faults.entry(*fault).or_default() += 1;
        }
        if let Some(band) = r.effort_band {
            efforts.entry(band.as_str()).or_insert((band, 0)).1 += 1;
        }
    }
    let mut agreement = AgreementMatrix::default();
    for (human, ai) in by_session.values() {
        match (human.and_then(|r| r.gate), ai.and_then(|r| r.gate)) {
            (Some(true), Some(true)) => agreement.yes_yes += 1,
            (Some(true), Some(false)) => agreement.yes_no += 1,
            (Some(false), Some(true)) => agreement.no_yes += 1,
            (Some(false), Some(false)) => agreement.no_no += 1,
            // Absent records are no-data, not disagreement.
            _ => agreement.no_data += 1,
        }
    }
    AggregateReport {
        sessions,
        success_rate: if sessions == 0 {
            0.0
        } else {
            successes as f64 / sessions as f64
        },
        per_criterion: criterion_counts
            .into_iter()
            .map(|(name, (ones, total))| (name, ones as f64 / total as f64))
            .collect(),
        fault_distribution: faults.into_iter().collect(),
        effort_distribution: efforts.into_values().collect(),
        agreement,
    }
}

pub fn render_report_text(report: &AggregateReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sessions: {}", report.sessions);
    let _ = writeln!(out, "success rate: {:.1}%", report.success_rate * 100.0);
    out.push_str("per-criterion pass rates:\n");
    for (name, rate) in &report.per_criterion {
        let _ = writeln!(out, "  {name}: {:.1}%", rate * 100.0);
    }
    out.push_str("fault distribution:\n");
    for (fault, n) in &report.fault_distribution {
        let _ = writeln!(out, "  {fault}: {n}");
    }
    out.push_str("effort distribution:\n");
    for (band, n) in &report.effort_distribution {
        let _ = writeln!(out, "  {}: {n}", band.as_str());
    }
    let a = &report.agreement;
    out.push_str("human/AI agreement (human rows, ai columns):\n");
    let _ = writeln!(out, "  yes/yes {}  yes/no {}", a.yes_yes, a.yes_no);
    let _ = writeln!(out, "  no/yes  {}  no/no  {}", a.no_yes, a.no_no);
    let _ = writeln!(out, "  no-data {}", a.no_data);
    out
}

/// One CSV row per record: session, evaluator, gate, score, effort.
pub fn render_report_csv(records: &[EvaluationRecord]) -> String {
    let mut out = String::from("session_id,evaluator,gate,score,effort\n");
    for r in records {
        let gate = match r.gate {
            Some(true) => "yes",
            Some(false) => "no",
            None => "",
        };
        let score = r
            .score()
            .map(|s| format!("{s:.3}"))
            .unwrap_or_default();
        let effort = r.effort_band.map(|b| b.as_str()).unwrap_or("");
        let _ = writeln!(
            out,
            "{},{},{gate},{score},{effort}",
            r.session_id,
            r.evaluator.as_field()
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostBenefitReport {
    pub baseline_hours: f64,
    pub assisted_hours: f64,
    pub rate_per_hour: f64,
    pub savings_per_module: f64,
    pub savings_percent: f64,
    pub n_modules: u64,
    pub portfolio_savings: f64,
}

/// Labor savings: (baseline − assisted) × rate per module, linear in the
/// module count.
pub fn cost_benefit(
    baseline_hours: f64,
    assisted_hours: f64,
    rate_per_hour: f64,
    n_modules: u64,
) -> CostBenefitReport {
    let savings_per_module = (baseline_hours - assisted_hours) * rate_per_hour;
    CostBenefitReport {
        baseline_hours,
        assisted_hours,
        rate_per_hour,
        savings_per_module,
        savings_percent: (baseline_hours - assisted_hours) / baseline_hours,
        n_modules,
        portfolio_savings: savings_per_module * n_modules as f64,
    }
}
