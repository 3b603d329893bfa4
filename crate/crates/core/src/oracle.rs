//! Brute-force realization of the tower on `[0, ∞)`.
//!
//! Every level of every column up to stage `N` gets an explicit interval and
//! `T` is replayed one step at a time as a translation between consecutive
//! levels. This shares nothing with the symbolic engine beyond the rule
//! parameters, so the two can check each other.
//!
//! Spacer coordinates are a convention: each new spacer takes the lowest
//! unused coordinate, in stacking order (left copy to right, bottom spacer to
//! top). Only measures are intrinsic, so every measure-theoretic quantity is
//! independent of this choice.

use std::collections::BTreeMap;
use std::io::Write;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cell::{Cell, CellSet};
use crate::ratio::format_ratio;
use crate::rule::{Rule, RuleSpec};

/// Largest column the oracle will materialize.
pub const MAX_LEVELS: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("column C_{stage} would need {levels} levels (limit {MAX_LEVELS})")]
    TooLarge { stage: u32, levels: u64 },
    #[error("the orbit leaves column C_{stage}")]
    LeftColumn { stage: u32 },
    #[error("point is not inside column C_{stage}")]
    NotInColumn { stage: u32 },
}

/// Explicit left endpoints of the levels of one column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddingTable {
    pub stage: u32,
    pub left_endpoints: Vec<BigRational>,
    pub width: BigRational,
    by_left: BTreeMap<BigRational, usize>,
}

impl EmbeddingTable {
    fn new(stage: u32, left_endpoints: Vec<BigRational>, width: BigRational) -> Self {
        let by_left = left_endpoints
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        EmbeddingTable {
            stage,
            left_endpoints,
            width,
            by_left,
        }
    }

    pub fn height(&self) -> usize {
        self.left_endpoints.len()
    }

    pub fn interval(&self, level: usize) -> (BigRational, BigRational) {
        let l = self.left_endpoints[level].clone();
        let r = &l + &self.width;
        (l, r)
    }

    /// The level whose interval contains `x`.
    pub fn level_of(&self, x: &BigRational) -> Option<usize> {
        let (left, &level) = self.by_left.range(..=x.clone()).next_back()?;
        (x < &(left + &self.width)).then_some(level)
    }

    /// Levels whose intervals lie inside `[lo, hi)`.
    pub fn levels_within(&self, lo: &BigRational, hi: &BigRational) -> Vec<usize> {
        self.by_left
            .range(lo.clone()..hi.clone())
            .filter(|(l, _)| *l + &self.width <= *hi)
            .map(|(_, &i)| i)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "left"])?;
        for (i, l) in self.left_endpoints.iter().enumerate() {
            w.write_record([i.to_string(), format_ratio(l)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tables for every stage `1..=N`.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub tables: Vec<EmbeddingTable>,
}

impl Embedding {
    pub fn stage(&self) -> u32 {
        self.tables.len() as u32
    }

    pub fn table(&self, n: u32) -> &EmbeddingTable {
        &self.tables[(n - 1) as usize]
    }

    pub fn top(&self) -> &EmbeddingTable {
        self.tables.last().expect("at least one stage")
    }

    pub fn cell_interval(&self, cell: &Cell) -> Option<(BigRational, BigRational)> {
        if cell.stage == 0 || cell.stage > self.stage() {
            return None;
        }
        let t = self.table(cell.stage);
        let j = cell.index.to_usize()?;
        (j < t.height()).then(|| t.interval(j))
    }
}

pub fn build_embedding(spec: &RuleSpec, n: u32) -> Result<Embedding, OracleError> {
    let cuts = spec.cuts as usize;
    let mut heights = vec![spec.initial_height];
    for s in 1..n {
        let h = heights[s as usize - 1];
        let next = h
            .checked_mul(cuts as u64 + 1)
            .and_then(|v| v.checked_add(1))
            .filter(|&v| v <= MAX_LEVELS)
            .ok_or(OracleError::TooLarge {
                stage: s + 1,
                levels: u64::MAX,
            })?;
        heights.push(next);
    }
    if heights[0] > MAX_LEVELS {
        return Err(OracleError::TooLarge {
            stage: 1,
            levels: heights[0],
        });
    }

    let mut width = spec.base_width.clone();
    let mut lefts: Vec<BigRational> = (0..spec.initial_height)
        .map(|i| &width * BigRational::from_integer(i.into()))
        .collect();
    let mut frontier = &width * BigRational::from_integer(spec.initial_height.into());
    let mut tables = vec![EmbeddingTable::new(1, lefts.clone(), width.clone())];

    for s in 2..=n {
        let slice = &width / BigRational::from_integer(cuts.into());
        let mut next = Vec::with_capacity(heights[s as usize - 1] as usize);
        for column in 1..=cuts {
            let shift = &slice * BigRational::from_integer((column - 1).into());
            next.extend(lefts.iter().map(|l| l + &shift));
            let mut spacers = 0;
            if column == spec.spacer_block_column as usize {
                spacers += lefts.len();
            }
            if column == spec.staircase_column as usize {
                spacers += 1;
            }
            for _ in 0..spacers {
                next.push(frontier.clone());
                frontier += &slice;
            }
        }
        width = slice;
        lefts = next;
        tables.push(EmbeddingTable::new(s, lefts.clone(), width.clone()));
    }
    Ok(Embedding { tables })
}

/// `T^m(x)` by `|m|` single steps through the levels of `table`.
pub fn oracle_apply_t(
    table: &EmbeddingTable,
    x: &BigRational,
    m: i64,
) -> Result<BigRational, OracleError> {
    let stage = table.stage;
    let start = table.level_of(x).ok_or(OracleError::NotInColumn { stage })?;
    let mut level = start;
    for _ in 0..m.unsigned_abs() {
        level = if m > 0 {
            if level + 1 >= table.height() {
                return Err(OracleError::LeftColumn { stage });
            }
            level + 1
        } else {
            level
                .checked_sub(1)
                .ok_or(OracleError::LeftColumn { stage })?
        };
    }
    Ok(x + &table.left_endpoints[level] - &table.left_endpoints[start])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub source: Cell,
    pub power: u64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EquivalenceReport {
    pub stage: u32,
    pub m_max: u64,
    pub checked: u64,
    /// Pairs whose oracle orbit leaves `C_N`.
    pub skipped: u64,
    pub mismatches: Vec<Mismatch>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Sorted, merged half-open intervals.
pub fn normalize_intervals(mut v: Vec<(BigRational, BigRational)>) -> Vec<(BigRational, BigRational)> {
    v.sort();
    let mut out: Vec<(BigRational, BigRational)> = Vec::with_capacity(v.len());
    for (l, r) in v {
        match out.last_mut() {
            Some(last) if last.1 >= l => {
                if r > last.1 {
                    last.1 = r;
                }
            }
            _ => out.push((l, r)),
        }
    }
    out
}

/// Interval image of a cell set under the embedding; `None` if some cell is deeper than the tables.
pub fn cell_set_intervals(
    emb: &Embedding,
    s: &CellSet,
) -> Option<Vec<(BigRational, BigRational)>> {
    let v = s
        .cells()
        .iter()
        .map(|c| emb.cell_interval(c))
        .collect::<Option<Vec<_>>>()?;
    Some(normalize_intervals(v))
}

/// Oracle image of level `(s, j)` under `T^m`, or `None` if it leaves `C_N`.
fn oracle_image(
    emb: &Embedding,
    source: &Cell,
    m: u64,
) -> Option<Vec<(BigRational, BigRational)>> {
    let (lo, hi) = emb.cell_interval(source)?;
    let top = emb.top();
    let mut out = Vec::new();
    for level in top.levels_within(&lo, &hi) {
        let (l, _) = top.interval(level);
        let moved = oracle_apply_t(top, &l, m as i64).ok()?;
        out.push((moved.clone(), moved + &top.width));
    }
    debug_assert!(!out.is_empty());
    Some(normalize_intervals(out))
}

/// Compares the symbolic push-forward with the interval oracle for every
/// level of every column up to `C_N` and every power `0..=m_max` whose
/// oracle orbit stays inside `C_N`. Source levels are scanned in parallel;
/// mismatches are reported in source order.
pub fn check_equivalence(rule: &Rule, n: u32, m_max: u64) -> Result<EquivalenceReport, OracleError> {
    let emb = build_embedding(rule.spec(), n)?;
    let sources: Vec<Cell> = (1..=n)
        .flat_map(|s| (0..emb.table(s).height()).map(move |j| Cell::new(s, j as u64)))
        .collect();
    let per_source: Vec<(u64, u64, Vec<Mismatch>)> = sources
        .par_iter()
        .map(|source| {
            let (mut checked, mut skipped, mut bad) = (0, 0, Vec::new());
            let single = rule.cell_set([source.clone()]);
            for m in 0..=m_max {
                let Some(expected) = oracle_image(&emb, source, m) else {
                    skipped += 1;
                    continue;
                };
                checked += 1;
                let image = rule.translate(&single, BigUint::from(m));
                let detail = match cell_set_intervals(&emb, &image) {
                    None => Some("symbolic image reaches past the oracle tables".to_string()),
                    Some(got) if got != expected => Some(format!(
                        "symbolic {} intervals vs oracle {}",
                        got.len(),
                        expected.len()
                    )),
                    Some(_) => None,
                };
                if let Some(detail) = detail {
                    bad.push(Mismatch {
                        source: source.clone(),
                        power: m,
                        detail,
                    });
                }
            }
            (checked, skipped, bad)
        })
        .collect();
    let mut report = EquivalenceReport {
        stage: n,
        m_max,
        checked: 0,
        skipped: 0,
        mismatches: Vec::new(),
    };
    for (checked, skipped, bad) in per_source {
        report.checked += checked;
        report.skipped += skipped;
        report.mismatches.extend(bad);
    }
    Ok(report)
}

/// Total length of a normalized interval list.
pub fn total_length(v: &[(BigRational, BigRational)]) -> BigRational {
    v.iter()
        .fold(BigRational::zero(), |acc, (l, r)| acc + (r - l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::ratio;

    #[test]
    fn first_stages() {
        let emb = build_embedding(&RuleSpec::paper(), 3).unwrap();
        let t1 = emb.table(1);
        assert_eq!(t1.interval(0), (ratio(0, 1), ratio(1, 1)));
        let t2 = emb.table(2);
        assert_eq!(t2.height(), 6);
        assert_eq!(t2.interval(0), (ratio(0, 1), ratio(1, 4)));
        assert_eq!(t2.interval(2), (ratio(1, 1), ratio(5, 4)));
        let t3 = emb.table(3);
        assert_eq!(t3.height(), 31);
        let total = total_length(&normalize_intervals(
            (0..31).map(|i| t3.interval(i)).collect(),
        ));
        assert_eq!(total, ratio(31, 16));
    }

    #[test]
    fn stepping() {
        let emb = build_embedding(&RuleSpec::paper(), 3).unwrap();
        let t2 = emb.table(2);
        let x = ratio(1, 10);
        let shift = &t2.left_endpoints[1] - &t2.left_endpoints[0];
        assert_eq!(oracle_apply_t(t2, &x, 1).unwrap(), &x + shift);

        let t3 = emb.table(3);
        let x = ratio(1, 40);
        let y = oracle_apply_t(t3, &x, 30).unwrap();
        assert_eq!(t3.level_of(&y), Some(30));
        assert_eq!(&y - &t3.left_endpoints[30], &x - &t3.left_endpoints[0]);

        let inside_level_1 = &t3.left_endpoints[1] + ratio(1, 100);
        assert_eq!(
            oracle_apply_t(t3, &inside_level_1, 31),
            Err(OracleError::LeftColumn { stage: 3 })
        );
    }

    #[test]
    fn trivial_equivalence() {
        let rule = Rule::paper();
        let report = check_equivalence(&rule, 2, 0).unwrap();
        assert!(report.passed());
        assert_eq!(report.checked, 7);
    }

    #[test]
    fn guard_rejects_huge_columns() {
        assert!(matches!(
            build_embedding(&RuleSpec::paper(), 12),
            Err(OracleError::TooLarge { .. })
        ));
    }

    #[test]
    fn csv_export() {
        let emb = build_embedding(&RuleSpec::paper(), 2).unwrap();
        let mut buf = Vec::new();
        emb.table(2).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("level,left\n0,0/1\n1,1/4\n2,1/1"), "{text}");
    }
}
