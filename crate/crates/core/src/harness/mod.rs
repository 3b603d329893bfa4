//! Experiment plumbing on top of the library: witness searches, configs,
//! reports and tower diagrams.

pub mod experiment;
pub mod render;
pub mod report;
pub mod witness;

use thiserror::Error;

use crate::cell::CellError;
use crate::lemma::LemmaError;
use crate::oracle::OracleError;
use crate::product::ProductError;
use crate::rule::RuleError;

pub use experiment::{emit_experiment, parse_experiment, run_batch, run_experiment, Experiment, Mode};
pub use render::{TowerDiagram, TowerRow};
pub use report::{emit_report, Format, Report};
pub use witness::{MinimalWitness, RecipeOptions, Verdict, WitnessParams, WitnessReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error(transparent)]
    Lemma(#[from] LemmaError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("no rectangle more than 3/4 full was found within the search limits")]
    NoRectangleFound,
    #[error("input sets must have positive measure")]
    EmptyInput,
    #[error("expected arity {expected}, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("stage or height too large for this operation")]
    TooDeep,
    #[error("column C_{stage} has {height} levels, too many to draw")]
    TooTall { stage: u32, height: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error("cannot emit {0} output for this report")]
    Unsupported(&'static str),
    #[error("csv output failed: {0}")]
    Csv(String),
}

impl HarnessError {
    /// Process exit code: 1 when a search came up empty, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::NoRectangleFound => 1,
            _ => 2,
        }
    }
}
