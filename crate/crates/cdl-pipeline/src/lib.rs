//! Generation pipeline for CDL control blocks: prompt scaffolds, an LLM
//! gateway with deterministic record/replay, reference task definitions,
//! behavioral conformance oracles, the evaluation workflow, and the
//! orchestrated compile/simulate repair loops.

pub mod config;
pub mod evalrec;
pub mod gateway;
pub mod http;
pub mod oracle;
pub mod orchestrate;
pub mod prompt;
pub mod tasks;
