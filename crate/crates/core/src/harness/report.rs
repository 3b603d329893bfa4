//! Serializable results and their JSON / CSV renderings.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Serialize, Serializer};

use crate::cell::CellSet;
use crate::harness::render::TowerDiagram;
use crate::harness::witness::{MinimalWitness, WitnessReport};
use crate::harness::HarnessError;
use crate::lemma::{eighth_power, staircase_sum, CrescentReport};
use crate::oracle::EquivalenceReport;
use crate::product::Rectangle;
use crate::ratio::{format_ratio, serde_ratio, serde_uint};
use crate::rule::{Rule, RuleSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

fn uint_list<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Wrap<'a>(#[serde(with = "serde_uint")] &'a BigUint);
    s.collect_seq(v.iter().map(Wrap))
}

fn uint_range<S: Serializer>(v: &[BigUint; 2], s: S) -> Result<S::Ok, S::Error> {
    uint_list(v, s)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayoutSummary {
    #[serde(serialize_with = "uint_list")]
    pub copy_offsets: Vec<BigUint>,
    /// Half-open index range of the spacer block.
    #[serde(serialize_with = "uint_range")]
    pub spacer_block: [BigUint; 2],
    #[serde(with = "serde_uint")]
    pub staircase: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageSummary {
    pub stage: u32,
    #[serde(with = "serde_uint")]
    pub height: BigUint,
    #[serde(with = "serde_ratio")]
    pub width: BigRational,
    #[serde(with = "serde_ratio")]
    pub column_measure: BigRational,
    /// How `C_{stage+1}` is stacked from this column.
    pub layout: LayoutSummary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub rule: RuleSpec,
    pub warnings: Vec<String>,
    pub stages: Vec<StageSummary>,
}

impl BuildReport {
    pub fn new(rule: &Rule, n: u32) -> Result<Self, HarnessError> {
        rule.try_stage(n)?;
        let stages = (1..=n)
            .map(|s| {
                let layout = rule.layout(s);
                StageSummary {
                    stage: s,
                    height: rule.height(s).clone(),
                    width: rule.level_width(s).clone(),
                    column_measure: rule.column_measure(s),
                    layout: LayoutSummary {
                        copy_offsets: layout.copy_offsets.clone(),
                        spacer_block: [layout.spacer_block.start.clone(), layout.spacer_block.end.clone()],
                        staircase: layout.staircase_index.clone(),
                    },
                }
            })
            .collect();
        Ok(BuildReport {
            rule: rule.spec().clone(),
            warnings: rule.warnings().to_vec(),
            stages,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TranslateReport {
    pub source: CellSet,
    pub power: i64,
    pub image: CellSet,
    #[serde(with = "serde_ratio")]
    pub measure: BigRational,
    /// Mass of the preimage left unresolved at the depth cap (always 0 forwards).
    #[serde(with = "serde_ratio")]
    pub residual: BigRational,
}

impl TranslateReport {
    pub fn new(rule: &Rule, source: CellSet, power: i64, depth: u32) -> Self {
        let (image, residual) = if power >= 0 {
            (rule.translate(&source, power.unsigned_abs()), BigRational::zero())
        } else {
            rule.translate_inverse(&source, power.unsigned_abs(), depth)
        };
        TranslateReport {
            measure: rule.measure(&image),
            source,
            power,
            image,
            residual,
        }
    }
}

/// A crescent together with the checks the construction promises about it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CrescentOutcome {
    #[serde(flatten)]
    pub crescent: CrescentReport,
    pub pass_limit: u64,
    #[serde(with = "serde_ratio")]
    pub measure_bound: BigRational,
    pub displacement_law: bool,
    pub pass: bool,
}

impl CrescentOutcome {
    pub fn new(rule: &Rule, crescent: CrescentReport) -> Self {
        let pass_limit = staircase_sum(crescent.ell);
        let measure_bound = eighth_power(crescent.ell) * rule.cell_measure(&crescent.source);
        let displacement_law = crescent.displacement_law_holds();
        let pass = displacement_law
            && crescent.max_passes() <= pass_limit
            && crescent.aggregate >= measure_bound;
        CrescentOutcome {
            crescent,
            pass_limit,
            measure_bound,
            displacement_law,
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DoubleApproxRow {
    pub stage: u32,
    #[serde(with = "serde_ratio")]
    pub fraction: BigRational,
    pub full: u64,
    pub total: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DoubleApproxOutcome {
    pub rect: Rectangle,
    #[serde(with = "serde_ratio")]
    pub fullness: BigRational,
    #[serde(with = "serde_ratio")]
    pub delta: BigRational,
    #[serde(with = "crate::ratio::serde_ratio_opt")]
    pub tau: Option<BigRational>,
    pub rows: Vec<DoubleApproxRow>,
    pub non_decreasing: bool,
    /// With `tau` set: some row's fraction exceeds it.
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "report", rename_all = "kebab-case")]
pub enum Report {
    Build(BuildReport),
    Translate(TranslateReport),
    Crescent(CrescentOutcome),
    DoubleApprox(DoubleApproxOutcome),
    Witness(WitnessReport),
    MinimalWitness(MinimalWitness),
    OracleCheck(EquivalenceReport),
    Render(TowerDiagram),
}

impl Report {
    /// Whether every verdict carried by the report holds.
    pub fn passed(&self) -> bool {
        match self {
            Report::Build(_) | Report::Translate(_) | Report::Render(_) => true,
            Report::Crescent(c) => c.pass,
            Report::DoubleApprox(d) => d.pass,
            Report::Witness(w) => w.verdict.pass,
            Report::MinimalWitness(m) => m.h_min.is_some() && m.cross_check,
            Report::OracleCheck(o) => o.passed(),
        }
    }

    fn table(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let r = |x: &BigRational| format_ratio(x);
        let cells = |s: &CellSet| {
            s.cells()
                .iter()
                .map(|c| vec![c.stage.to_string(), c.index.to_string()])
                .collect::<Vec<_>>()
        };
        match self {
            Report::Build(b) => (
                vec!["stage", "height", "width", "column_measure"],
                b.stages
                    .iter()
                    .map(|s| vec![s.stage.to_string(), s.height.to_string(), r(&s.width), r(&s.column_measure)])
                    .collect(),
            ),
            Report::Translate(t) => (vec!["stage", "index"], cells(&t.image)),
            Report::Crescent(c) => (
                vec!["level", "drop", "staircase_passes", "cells", "measure"],
                c.crescent
                    .pieces
                    .iter()
                    .map(|p| {
                        vec![
                            p.level.to_string(),
                            p.drop.to_string(),
                            p.staircase_passes.to_string(),
                            p.cells.len().to_string(),
                            r(&p.measure),
                        ]
                    })
                    .collect(),
            ),
            Report::DoubleApprox(d) => (
                vec!["stage", "fraction", "full", "total"],
                d.rows
                    .iter()
                    .map(|x| vec![x.stage.to_string(), r(&x.fraction), x.full.to_string(), x.total.to_string()])
                    .collect(),
            ),
            Report::Witness(w) => (
                vec!["exponents", "stage", "h", "rect_measure", "bound", "set_measure", "pass"],
                vec![vec![
                    join(&w.exponents),
                    w.params.stage.to_string(),
                    w.params.h.to_string(),
                    r(&w.rect_measure),
                    r(&w.bound),
                    r(&w.set_measure),
                    w.verdict.pass.to_string(),
                ]],
            ),
            Report::MinimalWitness(m) => (
                vec!["exponents", "h_max", "h_min", "measure"],
                vec![vec![
                    join(&m.exponents),
                    m.h_max.to_string(),
                    m.h_min.map_or_else(String::new, |h| h.to_string()),
                    r(&m.measure),
                ]],
            ),
            Report::OracleCheck(o) => (
                vec!["stage", "m_max", "checked", "skipped", "mismatches"],
                vec![vec![
                    o.stage.to_string(),
                    o.m_max.to_string(),
                    o.checked.to_string(),
                    o.skipped.to_string(),
                    o.mismatches.len().to_string(),
                ]],
            ),
            Report::Render(d) => (
                vec!["level", "segment", "marks", "coverage"],
                d.rows
                    .iter()
                    .map(|row| {
                        vec![
                            row.level.to_string(),
                            row.segment.clone(),
                            row.marks.join(" "),
                            row.coverage.iter().map(format_ratio).collect::<Vec<_>>().join(" "),
                        ]
                    })
                    .collect(),
            ),
        }
    }
}

fn join(k: &[i64]) -> String {
    k.iter().map(i64::to_string).collect::<Vec<_>>().join(" ")
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| HarnessError::Csv(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Renders one report; text output exists only for tower diagrams.
pub fn emit_report(report: &Report, format: Format) -> Result<String, HarnessError> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let (header, rows) = report.table();
            csv_text(&header, &rows)
        }
        Format::Text => match report {
            Report::Render(d) => Ok(d.to_text()),
            _ => Err(HarnessError::Unsupported("text")),
        },
    }
}

/// JSON array of several reports, in input order.
pub fn emit_reports_json(reports: &[Report]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}
