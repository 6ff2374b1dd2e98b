//! Desk-scale toolchain for CDL-subset Modelica building-control blocks:
//! parsing and canonical printing, deterministic library indexing and lookup,
//! fixed-step block-diagram simulation, and rule-based static validation.

pub mod ast;
pub mod index;
pub mod interp;
pub mod validate;
