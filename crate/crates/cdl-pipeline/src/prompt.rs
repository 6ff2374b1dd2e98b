//! Prompt scaffolds for the three pipeline LLM roles and the basic-logic
//! experiments.
//!
//! Templates use single-brace `{name}` placeholders. Substitution is byte
//! exact: values are inserted raw, with no escaping or trimming, so a value
//! containing a literal `{name}` would be passed through unchanged — a known
//! limitation of the single-brace syntax.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RoleId {
    CodeGenerator,
    ControlExpert,
    IterationEvaluator,
    BasicLogic,
}

impl RoleId {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoleId::CodeGenerator => "code_generator",
            RoleId::ControlExpert => "control_expert",
            RoleId::IterationEvaluator => "iteration_evaluator",
            RoleId::BasicLogic => "basic_logic",
        }
    }

    pub fn parse(s: &str) -> Option<RoleId> {
        match s {
            "code_generator" => Some(RoleId::CodeGenerator),
            "control_expert" => Some(RoleId::ControlExpert),
            "iteration_evaluator" => Some(RoleId::IterationEvaluator),
            "basic_logic" => Some(RoleId::BasicLogic),
            _ => None,
        }
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub role_id: RoleId,
    pub system_text: String,
    pub user_template: String,
    pub placeholder_set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub role_id: RoleId,
    pub system_text: String,
    pub user_text: String,
    pub substitutions: BTreeMap<String, String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing placeholder value: {0}")]
    MissingPlaceholder(String),
    #[error("extra placeholder value not in template: {0}")]
    ExtraPlaceholder(String),
    #[error("malformed template file: {0}")]
    TemplateInvalid(String),
}

/// Placeholder names appearing in a template body, in order of first
/// occurrence, deduplicated. A placeholder is `{ident}` where `ident` is an
/// ASCII identifier.
pub fn find_placeholders(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = text[i + 1..].find(['}', '{']) {
                let inner = &text[i + 1..i + 1 + end];
                if bytes[i + 1 + end] == b'}'
                    && !inner.is_empty()
                    && inner
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    if !out.iter().any(|p| p == inner) {
                        out.push(inner.to_string());
                    }
                    i += end + 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    out
}

/// Substitute placeholder values into a template, byte exact.
pub fn render(
    template: &PromptTemplate,
    values: &BTreeMap<String, String>,
) -> Result<PromptBundle, PromptError> {
    for name in &template.placeholder_set {
        if !values.contains_key(name) {
            return Err(PromptError::MissingPlaceholder(name.clone()));
        }
    }
    for name in values.keys() {
        if !template.placeholder_set.iter().any(|p| p == name) {
            return Err(PromptError::ExtraPlaceholder(name.clone()));
        }
    }
    let mut user_text = template.user_template.clone();
    for (name, value) in values {
        user_text = user_text.replace(&format!("{{{name}}}"), value);
    }
    Ok(PromptBundle {
        role_id: template.role_id,
        system_text: template.system_text.clone(),
        user_text,
        substitutions: values.clone(),
    })
}

const CODE_GENERATOR_SYSTEM: &str = "\
You are a code generator. Only return valid Modelica code with no natural language, no explanations, and no comments.

Follow these additional modeling and layout conventions:

- Use only modules from Buildings.Controls.OBC.CDL or the Modelica Standard Library.

- For any temperature-related `input` or `parameter`, use:
`final unit=\"K\", displayUnit=\"degC\", final quantity=\"ThermodynamicTemperature\"`.

- For Boolean or normalized output signals (e.g., y = 0 or 1), use:
`final min=0, final max=1, final unit=\"1\"`.

Graphic layout guidance:

- Use the order of `connect()` statements in the `equation` section to infer logic flow: upstream instances appear earlier as sources, downstream ones appear later as targets.

- Reflect this left-to-right logic flow in the `annotation` section by placing upstream components to the left and downstream components to the right.

- Ensure all instances are positioned with unique `(x, y)` coordinates to avoid overlapping.

- Use clear spacing between instances to improve readability in the `diagram` layer.

- Annotate instances with their names where appropriate to enhance visual understanding.";

const CODE_GENERATOR_USER: &str = "\
Using these relevant CDL modules: {modules}
and the control task: {task}
Generate the Modelica code block that fulfills the control task.";

const CONTROL_EXPERT_SYSTEM: &str =
    "You are an expert Building Control engineer. Respond in structured, clear text.";

const CONTROL_EXPERT_USER: &str = "\
Given the following control task, and available CDL module name, list the **CDL modules** you would use in bullet points with no explanations, no comments. As few as possible CDL modules should be used to achieve the task.

Task:

{task}

available CDL modules:

{txt}";

const ITERATION_SYSTEM: &str =
    "You are an expert to evaluate Modelica models. You can only answer yes or no.";

const ITERATION_USER: &str = "\
The following Modelica code has compilation errors:

{error_log}

Please suggest a corrected version of the code.

Code: {code_content}

Corrected Modelica code:";

pub fn code_generator_template() -> PromptTemplate {
    PromptTemplate {
        role_id: RoleId::CodeGenerator,
        system_text: CODE_GENERATOR_SYSTEM.to_string(),
        user_template: CODE_GENERATOR_USER.to_string(),
        placeholder_set: vec!["modules".to_string(), "task".to_string()],
    }
}

pub fn control_expert_template() -> PromptTemplate {
    PromptTemplate {
        role_id: RoleId::ControlExpert,
        system_text: CONTROL_EXPERT_SYSTEM.to_string(),
        user_template: CONTROL_EXPERT_USER.to_string(),
        placeholder_set: vec!["task".to_string(), "txt".to_string()],
    }
}

pub fn iteration_template() -> PromptTemplate {
    PromptTemplate {
        role_id: RoleId::IterationEvaluator,
        system_text: ITERATION_SYSTEM.to_string(),
        user_template: ITERATION_USER.to_string(),
        placeholder_set: vec!["error_log".to_string(), "code_content".to_string()],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogicBlock {
    And,
    Or,
    Not,
    Switch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogicVariant {
    AMinimal,
    BDetailed,
}

const BASIC_LOGIC_TAIL: &str = "Use only the Modelica Standard Library, and \
return only Modelica code. Do not include comments or explanations.";

/// The basic-logic prompt texts, one per block and level of detail.
pub fn basic_logic_prompt(block: LogicBlock, variant: LogicVariant) -> PromptBundle {
    let name = match block {
        LogicBlock::And => "AND",
        LogicBlock::Or => "OR",
        LogicBlock::Not => "NOT",
        LogicBlock::Switch => "SWITCH",
    };
    let lead =
        format!("Write a Modelica component that implements a parameterized logical {name} block.");
    let user_text = match variant {
        LogicVariant::AMinimal => format!("{lead} {BASIC_LOGIC_TAIL}"),
        LogicVariant::BDetailed => {
            let detail = match block {
                LogicBlock::And => {
                    "- Be named `And`.\n\
                     - Accept an array of Boolean inputs as a parameterized input.\n\
                     - Output a single Boolean y, which is the logical AND of all inputs in the array."
                }
                LogicBlock::Or => {
                    "- Be named `Or`.\n\
                     - Accept an array of Boolean inputs as a parameterized input.\n\
                     - Output a single Boolean y, which is the logical OR of all inputs in the array."
                }
                LogicBlock::Not => {
                    "- Be named `Not`.\n\
                     - Accept a single Boolean input as a parameterized input.\n\
                     - Output a single Boolean y, which is the logical negation of the input."
                }
                LogicBlock::Switch => {
                    "- Be named `Switch`.\n\
                     - Accept three Boolean inputs as a parameterized input. The first input is the first input signal. The second input is the Boolean switch that determines which input signal is passed to the output. The third input is the second input signal.\n\
                     - Output a single Boolean y."
                }
            };
            format!("{lead} The block should:\n{detail}\n{BASIC_LOGIC_TAIL}")
        }
    };
    PromptBundle {
        role_id: RoleId::BasicLogic,
        system_text: String::new(),
        user_text,
        substitutions: BTreeMap::new(),
    }
}

const TEMPLATE_HEADER: &str = "#prompt-template v1";
const SYSTEM_MARK: &str = "--- system ---";
const USER_MARK: &str = "--- user ---";

/// Serialize a template to its on-disk form: a one-line header naming the
/// role and placeholder set, then the system and user sections.
pub fn template_to_string(template: &PromptTemplate) -> String {
    format!(
        "{TEMPLATE_HEADER} role={} placeholders={}\n{SYSTEM_MARK}\n{}\n{USER_MARK}\n{}\n",
        template.role_id,
        template.placeholder_set.join(","),
        template.system_text,
        template.user_template,
    )
}

pub fn parse_template(text: &str) -> Result<PromptTemplate, PromptError> {
    let text = text.replace("\r\n", "\n");
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| PromptError::TemplateInvalid("empty file".into()))?;
    if !header.starts_with(TEMPLATE_HEADER) {
        return Err(PromptError::TemplateInvalid(format!(
            "bad header: {header}"
        )));
    }
    let mut role_id = None;
    let mut placeholders: Vec<String> = Vec::new();
    for field in header[TEMPLATE_HEADER.len()..].split_whitespace() {
        if let Some(r) = field.strip_prefix("role=") {
            role_id =
                Some(RoleId::parse(r).ok_or_else(|| {
                    PromptError::TemplateInvalid(format!("unknown role: {r}"))
                })?);
        } else if let Some(p) = field.strip_prefix("placeholders=") {
            placeholders = p
                .split(',')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
        }
    }
    let role_id =
        role_id.ok_or_else(|| PromptError::TemplateInvalid("header missing role".into()))?;
    let body: Vec<&str> = lines.collect();
    let sys_at = body
        .iter()
        .position(|l| *l == SYSTEM_MARK)
        .ok_or_else(|| PromptError::TemplateInvalid("missing system section".into()))?;
    let user_at = body
        .iter()
        .position(|l| *l == USER_MARK)
        .ok_or_else(|| PromptError::TemplateInvalid("missing user section".into()))?;
    if user_at < sys_at {
        return Err(PromptError::TemplateInvalid(
            "user section before system section".into(),
        ));
    }
    let system_text = body[sys_at + 1..user_at].join("\n");
    let user_template = body[user_at + 1..].join("\n");
    let template = PromptTemplate {
        role_id,
        system_text,
        user_template,
        placeholder_set: placeholders,
    };
    let found = find_placeholders(&template.user_template);
    for p in &template.placeholder_set {
        if !found.contains(p) {
            return Err(PromptError::TemplateInvalid(format!(
                "declared placeholder {{{p}}} not present in user template"
            )));
        }
    }
    for p in &found {
        if !template.placeholder_set.contains(p) {
            return Err(PromptError::TemplateInvalid(format!(
                "undeclared placeholder {{{p}}} in user template"
            )));
        }
    }
    Ok(template)
}

pub fn load_template(path: &Path) -> Result<PromptTemplate, PromptError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PromptError::TemplateInvalid(format!("{}: {e}", path.display())))?;
    parse_template(&text)
}
