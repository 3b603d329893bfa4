//! Text diagrams of a column with highlighted cell sets.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::cell::{Cell, CellSet, num_iter};
use crate::harness::HarnessError;
use crate::ratio::format_ratio;
use crate::rule::{Rule, Segment};

/// Tallest column that will be drawn.
pub const MAX_ROWS: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TowerRow {
    pub level: u64,
    pub segment: String,
    /// One string per highlight: `#` full, `+` partial, `.` empty, one mark per subcolumn.
    pub marks: Vec<String>,
    #[serde(serialize_with = "ratio_list")]
    pub coverage: Vec<BigRational>,
}

fn ratio_list<S: serde::Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(format_ratio))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TowerDiagram {
    pub stage: u32,
    pub highlights: Vec<String>,
    /// Top row first.
    pub rows: Vec<TowerRow>,
}

impl TowerDiagram {
    pub fn to_text(&self) -> String {
        let label_w = self.rows.iter().map(|r| r.segment.len()).max().unwrap_or(0);
        let index_w = self.rows.first().map_or(1, |r| r.level.to_string().len());
        let mut out = format!("C_{}", self.stage);
        for h in &self.highlights {
            let _ = write!(out, "  [{h}]");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:>index_w$} {:<label_w$} |", row.level, row.segment);
            for (marks, cov) in row.marks.iter().zip(&row.coverage) {
                let _ = write!(out, " {marks} {:<7}", format_ratio(cov));
            }
            out.truncate(out.trim_end().len());
            out.push('\n');
        }
        out
    }
}

fn segment_label(rule: &Rule, n: u32, index: &BigUint) -> String {
    if n == 1 {
        return "base".to_string();
    }
    match rule.layout(n - 1).locate(index) {
        Some(Segment::Copy { copy, level }) => format!("copy {} level {level}", copy + 1),
        Some(Segment::SpacerBlock { offset }) => format!("spacer {offset}"),
        Some(Segment::Staircase) => "staircase".to_string(),
        None => unreachable!("index below the column height"),
    }
}

impl Rule {
    /// Draws `C_n` top to bottom, marking how much of each subcolumn slice of a
    /// level every highlighted set covers.
    pub fn render_tower(
        &self,
        n: u32,
        highlights: &[(String, CellSet)],
    ) -> Result<TowerDiagram, HarnessError> {
        let height = self.try_stage(n)?.height.clone();
        if height > BigUint::from(MAX_ROWS) {
            return Err(HarnessError::TooTall {
                stage: n,
                height: height.to_string(),
            });
        }
        let layout = self.layout(n);
        let slice_measure = self.level_width(n + 1);
        let level_measure = self.level_width(n);
        let mut rows = Vec::with_capacity(height.to_usize().unwrap_or(0));
        for j in num_iter(&height) {
            let level = Cell::new(n, j.clone());
            let slices: Vec<CellSet> = layout
                .copy_offsets
                .iter()
                .map(|off| self.cell_set([Cell::new(n + 1, off + &j)]))
                .collect();
            let mut marks = Vec::with_capacity(highlights.len());
            let mut coverage = Vec::with_capacity(highlights.len());
            for (_, set) in highlights {
                let mark: String = slices
                    .iter()
                    .map(|s| {
                        let hit = self.intersection_measure(s, set);
                        if hit.is_zero() {
                            '.'
                        } else if &hit == slice_measure {
                            '#'
                        } else {
                            '+'
                        }
                    })
                    .collect();
                marks.push(mark);
                let whole = self.cell_set([level.clone()]);
                coverage.push(self.intersection_measure(&whole, set) / level_measure);
            }
            rows.push(TowerRow {
                level: j.to_u64().expect("height below MAX_ROWS"),
                segment: segment_label(self, n, &j),
                marks,
                coverage,
            });
        }
        rows.reverse();
        Ok(TowerDiagram {
            stage: n,
            highlights: highlights.iter().map(|(name, _)| name.clone()).collect(),
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_column_layout() {
        let rule = Rule::paper();
        let d = rule.render_tower(2, &[]).unwrap();
        let labels: Vec<&str> = d.rows.iter().map(|r| r.segment.as_str()).collect();
        assert_eq!(
            labels,
            ["staircase", "copy 4 level 0", "copy 3 level 0", "spacer 0", "copy 2 level 0", "copy 1 level 0"]
        );
        assert_eq!(d.to_text().lines().count(), 7);
    }

    #[test]
    fn single_row_base() {
        let rule = Rule::paper();
        let d = rule.render_tower(1, &[]).unwrap();
        assert_eq!(d.rows.len(), 1);
        assert_eq!(d.rows[0].segment, "base");
    }

    #[test]
    fn marks_follow_subcolumns() {
        let rule = Rule::paper();
        let set = rule.cell_set([Cell::new(3, 1u32), Cell::new(4, 2u32)]);
        let d = rule.render_tower(2, &[("x".into(), set)]).unwrap();
        let row1 = d.rows.iter().find(|r| r.level == 1).unwrap();
        assert_eq!(row1.marks[0], "#...");
        let row2 = d.rows.iter().find(|r| r.level == 2).unwrap();
        assert_eq!(row2.marks[0], "+...");
    }

    #[test]
    fn tall_columns_refused() {
        let rule = Rule::paper();
        assert!(matches!(rule.render_tower(7, &[]), Err(HarnessError::TooTall { .. })));
    }
}
