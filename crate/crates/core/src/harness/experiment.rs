//! JSON experiment configs and their execution.

use num_rational::BigRational;
use num_traits::One;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::Cell;
use crate::harness::report::{
    CrescentOutcome, DoubleApproxOutcome, DoubleApproxRow, Report,
};
use crate::harness::witness::RecipeOptions;
use crate::harness::HarnessError;
use crate::oracle::check_equivalence;
use crate::product::{ExponentVector, RectSet, Rectangle};
use crate::ratio::serde_ratio_opt;
use crate::rule::{Rule, RuleSpec, PAPER_PRESET};

/// A named preset or an explicit rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleRef {
    Preset(String),
    Spec(RuleSpec),
}

impl Default for RuleRef {
    fn default() -> Self {
        RuleRef::Preset(PAPER_PRESET.to_string())
    }
}

impl RuleRef {
    pub fn resolve(&self) -> Result<Rule, HarnessError> {
        let spec = match self {
            RuleRef::Preset(name) => RuleSpec::preset(name)?,
            RuleRef::Spec(spec) => spec.clone(),
        };
        Ok(Rule::new(spec)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    WitnessRecipe,
    MinimalWitness,
    Crescent,
    DoubleApprox,
    OracleCheck,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_ratio_opt")]
    pub delta: Option<BigRational>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_ratio_opt")]
    pub tau: Option<BigRational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<u64>,
}

/// `a` and `b` are the sets `A` and `B` as unions of rectangles; `target` is
/// the crescent source level or the rectangle a double approximation refines.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub rule: RuleRef,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<ExponentVector>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<Rectangle>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<Rectangle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Rectangle>,
    #[serde(default)]
    pub params: ExperimentParams,
}

pub fn parse_experiment(text: &str) -> Result<Experiment, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn emit_experiment(x: &Experiment) -> String {
    let mut s = serde_json::to_string_pretty(x).expect("experiments serialize");
    s.push('\n');
    s
}

fn missing(field: &str, mode: Mode) -> HarnessError {
    HarnessError::Config(format!("{mode:?} needs `{field}`"))
}

fn single_cell(target: &Option<Rectangle>, mode: Mode) -> Result<Cell, HarnessError> {
    match target.as_ref().map(|r| r.0.as_slice()) {
        Some([c]) => Ok(c.clone()),
        _ => Err(HarnessError::Config(format!("{mode:?} needs a one-cell `target`"))),
    }
}

fn one_rect(v: &[Rectangle], field: &str, mode: Mode) -> Result<Rectangle, HarnessError> {
    match v {
        [r] => Ok(r.clone()),
        _ => Err(HarnessError::Config(format!("{mode:?} needs exactly one rectangle in `{field}`"))),
    }
}

/// Double-approximation fractions for every stage `k+1..=n`.
pub fn double_approx_outcome(
    rule: &Rule,
    a: &RectSet,
    rect: &Rectangle,
    n: u32,
    delta: &BigRational,
    tau: Option<BigRational>,
) -> Result<DoubleApproxOutcome, HarnessError> {
    let k = rect.0.iter().map(|c| c.stage).max().unwrap_or(1);
    let mut rows = Vec::new();
    for stage in k + 1..=n {
        let da = rule.double_approx_fraction(a, rect, stage, delta)?;
        rows.push(DoubleApproxRow {
            stage,
            fraction: da.fraction,
            full: da.full,
            total: da.total,
        });
    }
    let non_decreasing = rows.windows(2).all(|w| w[0].fraction <= w[1].fraction);
    let pass = tau
        .as_ref()
        .is_none_or(|t| rows.iter().any(|r| &r.fraction > t));
    Ok(DoubleApproxOutcome {
        fullness: rule.rect_fullness(a, rect)?,
        rect: rect.clone(),
        delta: delta.clone(),
        tau,
        rows,
        non_decreasing,
        pass,
    })
}

pub fn run_experiment(x: &Experiment) -> Result<Report, HarnessError> {
    let rule = x.rule.resolve()?;
    let p = &x.params;
    match x.mode {
        Mode::WitnessRecipe => {
            let k = x.exponents.as_ref().ok_or_else(|| missing("exponents", x.mode))?;
            let a = rule.rect_set(&x.a)?;
            let b = rule.rect_set(&x.b)?;
            let mut options = RecipeOptions::default();
            if let Some(depth) = p.depth {
                options.max_extra_stages = depth;
            }
            Ok(Report::Witness(rule.recipe_witness(k, &a, &b, &options)?))
        }
        Mode::MinimalWitness => {
            let k = x.exponents.as_ref().ok_or_else(|| missing("exponents", x.mode))?;
            let i = one_rect(&x.a, "a", x.mode)?;
            let j = one_rect(&x.b, "b", x.mode)?;
            let h_max = p.h_max.ok_or_else(|| missing("params.h_max", x.mode))?;
            for c in i.0.iter().chain(&j.0) {
                rule.check_cell(c)?;
            }
            Ok(Report::MinimalWitness(rule.minimal_witness(k, &i, &j, h_max)?))
        }
        Mode::Crescent => {
            let source = single_cell(&x.target, x.mode)?;
            rule.check_cell(&source)?;
            let ell = p.ell.unwrap_or(1);
            let depth = p.depth.unwrap_or(source.stage + ell as u32 + 4);
            let c = rule.crescent(&source, ell, p.extra.unwrap_or(0), depth)?;
            Ok(Report::Crescent(CrescentOutcome::new(&rule, c)))
        }
        Mode::DoubleApprox => {
            let rect = x.target.clone().ok_or_else(|| missing("target", x.mode))?;
            let a = rule.rect_set(&x.a)?;
            let n = p.stage.ok_or_else(|| missing("params.stage", x.mode))?;
            let delta = p.delta.clone().ok_or_else(|| missing("params.delta", x.mode))?;
            if delta <= BigRational::from_integer(0.into()) || delta >= BigRational::one() {
                return Err(HarnessError::Config("delta must lie in (0, 1)".into()));
            }
            Ok(Report::DoubleApprox(double_approx_outcome(
                &rule,
                &a,
                &rect,
                n,
                &delta,
                p.tau.clone(),
            )?))
        }
        Mode::OracleCheck => {
            let n = p.stage.ok_or_else(|| missing("params.stage", x.mode))?;
            let m_max = p.m_max.unwrap_or(0);
            Ok(Report::OracleCheck(check_equivalence(&rule, n, m_max)?))
        }
    }
}

/// Runs independent experiments concurrently; results keep input order.
pub fn run_batch(xs: &[Experiment]) -> Vec<Result<Report, HarnessError>> {
    xs.par_iter().map(run_experiment).collect()
}
