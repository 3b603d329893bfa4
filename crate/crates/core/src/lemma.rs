//! Executable forms of the approximation lemmas and the crescent bookkeeping
//! behind the product-ergodicity estimates.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{Ancestry, Cell, CellSet};
use crate::product::{Block, RectSet, Rectangle};
use crate::ratio::{from_uint, serde_ratio};
use crate::rule::{Rule, Segment};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LemmaError {
    #[error("target set has measure zero")]
    EmptyTarget,
    #[error("refinement stage {n} must exceed the rectangle stage {k}")]
    StageOrder { k: u32, n: u32 },
    #[error("inputs must all sit in one column; found stages {0} and {1}")]
    StageMismatch(u32, u32),
    #[error("arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),
    #[error("depth {depth} cannot resolve a push-forward from stage {stage}")]
    DepthExceeded { stage: u32, depth: u32 },
    #[error("parameter out of range: {0}")]
    BadParameter(&'static str),
}

/// `epsilon`, `delta` in (0, 1) and a percentage `tau` below `100 (1 - epsilon)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FullnessParams {
    #[serde(with = "serde_ratio")]
    pub epsilon: BigRational,
    #[serde(with = "serde_ratio")]
    pub delta: BigRational,
    #[serde(with = "serde_ratio")]
    pub tau: BigRational,
}

impl FullnessParams {
    pub fn new(
        epsilon: BigRational,
        delta: BigRational,
        tau: BigRational,
    ) -> Result<Self, LemmaError> {
        let zero = BigRational::zero();
        let one = BigRational::one();
        if epsilon <= zero || epsilon >= one {
            return Err(LemmaError::BadParameter("epsilon must lie in (0, 1)"));
        }
        if delta <= zero || delta >= one {
            return Err(LemmaError::BadParameter("delta must lie in (0, 1)"));
        }
        let cap = BigRational::from_integer(100.into()) * (&one - &epsilon);
        if tau <= zero || tau >= cap {
            return Err(LemmaError::BadParameter("tau must lie in (0, 100(1 - epsilon))"));
        }
        Ok(FullnessParams {
            epsilon,
            delta,
            tau,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// `I_m` strictly above `J_m`.
    Above,
    /// `I_m` strictly below `J_m`.
    Below,
}

impl Placement {
    pub fn for_exponent(k: i64) -> Placement {
        if k > 0 {
            Placement::Above
        } else {
            Placement::Below
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DoubleApprox {
    #[serde(with = "serde_ratio")]
    pub fraction: BigRational,
    pub full: u64,
    pub total: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CrescentPiece {
    #[serde(serialize_with = "crate::ratio::serde_uint::serialize")]
    pub level: BigUint,
    pub drop: u64,
    pub staircase_passes: u64,
    pub cells: Vec<Cell>,
    #[serde(with = "serde_ratio")]
    pub measure: BigRational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CrescentReport {
    pub source: Cell,
    pub ell: u64,
    pub extra: u64,
    pub depth: u32,
    /// Pieces on the first subcolumn of `C_n`, ordered by increasing drop.
    pub pieces: Vec<CrescentPiece>,
    #[serde(with = "serde_ratio")]
    pub aggregate: BigRational,
    /// Measure of the smallest-drop piece group.
    #[serde(with = "serde_ratio")]
    pub top_measure: BigRational,
    #[serde(with = "serde_ratio")]
    pub unresolved_tail: BigRational,
}

impl CrescentReport {
    /// Every piece's level drop equals its staircase pass count.
    pub fn displacement_law_holds(&self) -> bool {
        self.pieces.iter().all(|p| p.drop == p.staircase_passes)
    }

    pub fn max_passes(&self) -> u64 {
        self.pieces.iter().map(|p| p.staircase_passes).max().unwrap_or(0)
    }
}

/// Maximum number of staircase spacers a crescent passes in `ell` trips: `1 + 2 + ... + ell`.
pub fn staircase_sum(ell: u64) -> u64 {
    ell * (ell + 1) / 2
}

/// `8^(-e)`.
pub fn eighth_power(e: u64) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(8u32).pow(e as u32))
}

impl Rule {
    /// `mu(I ∩ A) / mu(I)`.
    pub fn fullness(&self, a: &CellSet, target: &CellSet) -> Result<BigRational, LemmaError> {
        let total = self.measure(target);
        if total.is_zero() {
            return Err(LemmaError::EmptyTarget);
        }
        Ok(self.intersection_measure(target, a) / total)
    }

    /// `nu(I ∩ A) / nu(I)` for a rectangle `I`.
    pub fn rect_fullness(&self, a: &RectSet, target: &Rectangle) -> Result<BigRational, LemmaError> {
        if a.arity() != target.arity() {
            return Err(LemmaError::ArityMismatch(a.arity(), target.arity()));
        }
        let coords: Block = self.block(target);
        let mut hit = BigRational::zero();
        for block in a.blocks() {
            let mut term = BigRational::one();
            for (x, y) in block.iter().zip(&coords) {
                term *= self.intersection_measure(x, y);
                if term.is_zero() {
                    break;
                }
            }
            hit += term;
        }
        Ok(hit / self.rectangle_measure(target))
    }

    /// Moves each pair one stage deeper, putting `I_m` in the last copy and
    /// `J_m` in the first (or the reverse) so that the requested order holds.
    pub fn place_above_below(
        &self,
        i_prime: &[Cell],
        j_prime: &[Cell],
        signs: &[Placement],
    ) -> Result<(Vec<Cell>, Vec<Cell>), LemmaError> {
        if i_prime.len() != j_prime.len() {
            return Err(LemmaError::ArityMismatch(i_prime.len(), j_prime.len()));
        }
        if signs.len() != i_prime.len() {
            return Err(LemmaError::ArityMismatch(i_prime.len(), signs.len()));
        }
        let Some(stage) = i_prime.first().map(|c| c.stage) else {
            return Ok((Vec::new(), Vec::new()));
        };
        if let Some(c) = i_prime.iter().chain(j_prime).find(|c| c.stage != stage) {
            return Err(LemmaError::StageMismatch(stage, c.stage));
        }
        let layout = self.layout(stage);
        let first = &layout.copy_offsets[0];
        let last = layout.copy_offsets.last().expect("cuts >= 2");
        let mut out_i = Vec::with_capacity(signs.len());
        let mut out_j = Vec::with_capacity(signs.len());
        for ((i, j), sign) in i_prime.iter().zip(j_prime).zip(signs) {
            let (oi, oj) = match sign {
                Placement::Above => (last, first),
                Placement::Below => (first, last),
            };
            out_i.push(Cell::new(stage + 1, oi + &i.index));
            out_j.push(Cell::new(stage + 1, oj + &j.index));
        }
        Ok((out_i, out_j))
    }

    /// Sublevels of `cell` in `C_n`, ordered by the copy of `C_{cell.stage}` they sit in.
    pub fn sublevels(&self, cell: &Cell, n: u32) -> Vec<Cell> {
        let mut level = vec![cell.clone()];
        for _ in cell.stage..n {
            level = level.iter().flat_map(|c| self.refine(c)).collect();
        }
        // Bottom-to-top order of the C_k copies inside C_n.
        level.sort_by(|a, b| a.index.cmp(&b.index));
        level
    }

    /// Fraction of the `P_n^r` sub-rectangles of `I` (one sublevel per
    /// coordinate, each in some copy of `C_k`) that are `(1 - delta)`-full of `A`.
    pub fn double_approx_fraction(
        &self,
        a: &RectSet,
        rect: &Rectangle,
        n: u32,
        delta: &BigRational,
    ) -> Result<DoubleApprox, LemmaError> {
        let r = rect.arity();
        if a.arity() != r {
            return Err(LemmaError::ArityMismatch(a.arity(), r));
        }
        let k = rect.0.first().map_or(1, |c| c.stage);
        if let Some(c) = rect.0.iter().find(|c| c.stage != k) {
            return Err(LemmaError::StageMismatch(k, c.stage));
        }
        if n <= k {
            return Err(LemmaError::StageOrder { k, n });
        }
        let subs: Vec<Vec<Cell>> = rect.0.iter().map(|c| self.sublevels(c, n)).collect();
        // Intersection measures per coordinate, sublevel and block of A, as
        // integer multiples of the finest width appearing in that coordinate.
        let mut finest = vec![n; r];
        for block in a.blocks() {
            for (m, coord) in block.iter().enumerate() {
                finest[m] = finest[m].max(coord.max_stage().unwrap_or(n));
            }
        }
        let tables: Vec<Vec<Vec<BigUint>>> = (0..r)
            .map(|m| {
                let unit = self.level_width(finest[m]);
                subs[m]
                    .iter()
                    .map(|sub| {
                        let sub_set = self.cell_set([sub.clone()]);
                        a.blocks()
                            .iter()
                            .map(|block| {
                                let q = self.intersection_measure(&sub_set, &block[m]) / unit;
                                debug_assert!(q.is_integer());
                                q.to_integer().to_biguint().expect("non-negative")
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        // Full iff hits > (1 - delta) * prod_m (w_n / w_finest_m).
        let capacity = (0..r).fold(BigRational::one(), |acc, m| {
            acc * (self.level_width(n) / self.level_width(finest[m]))
        });
        let threshold = (BigRational::one() - delta) * capacity;
        let per_coord = subs[0].len();
        let total_u = (per_coord as u64)
            .checked_pow(r as u32)
            .expect("sub-rectangle count fits in u64");
        let mut digits = vec![0usize; r];
        let mut full = 0u64;
        let blocks = a.blocks().len();
        loop {
            let mut hits = BigUint::zero();
            for b in 0..blocks {
                let mut term = BigUint::one();
                for m in 0..r {
                    let v = &tables[m][digits[m]][b];
                    if v.is_zero() {
                        term = BigUint::zero();
                        break;
                    }
                    term *= v;
                }
                hits += term;
            }
            if from_uint(&hits) > threshold {
                full += 1;
            }
            // Odometer over V^r.
            let mut m = 0;
            loop {
                if m == r {
                    let fraction = BigRational::new(full.into(), total_u.into());
                    return Ok(DoubleApprox {
                        fraction,
                        full,
                        total: total_u,
                    });
                }
                digits[m] += 1;
                if digits[m] < per_coord {
                    break;
                }
                digits[m] = 0;
                m += 1;
            }
        }
    }

    /// Measures of `T^t(L) ∩ (level i of C_n)` for every level `i`, computed exactly.
    pub fn level_profile(&self, source: &Cell, n: u32, t: &BigUint) -> Vec<BigRational> {
        let (pieces, _) = self.push_forward(std::slice::from_ref(source), t, None);
        let height = self
            .height(n)
            .to_usize()
            .expect("profiled column fits in memory");
        let mut counts: Vec<BTreeMap<u32, u64>> = vec![BTreeMap::new(); height];
        for piece in &pieces {
            if piece.stage < n {
                for sub in self.sublevels(piece, n) {
                    let i = sub.index.to_usize().expect("level index");
                    *counts[i].entry(n).or_default() += 1;
                }
            } else if let Ancestry::Level(i) = self.ancestor_level(piece, n) {
                let i = i.to_usize().expect("level index");
                *counts[i].entry(piece.stage).or_default() += 1;
            }
        }
        counts
            .into_iter()
            .map(|per_stage| {
                per_stage
                    .into_iter()
                    .fold(BigRational::zero(), |acc, (stage, k)| {
                        acc + self.level_width(stage) * BigRational::from_integer(k.into())
                    })
            })
            .collect()
    }

    /// The part of `T^{ell h_n + extra}(L)` on the first subcolumn of `C_n`, grouped
    /// by landing level and staircase passes. Pieces needing refinement past
    /// stage `depth` are left out and bounded by `unresolved_tail`.
    pub fn crescent(
        &self,
        source: &Cell,
        ell: u64,
        extra: u64,
        depth: u32,
    ) -> Result<CrescentReport, LemmaError> {
        let n = source.stage;
        if ell == 0 {
            return Err(LemmaError::BadParameter("ell must be at least 1"));
        }
        if depth <= n {
            return Err(LemmaError::DepthExceeded { stage: n, depth });
        }
        let h = self.height(n).clone();
        let t = &h * ell + extra;
        let (pieces, tail) = self.push_forward(std::slice::from_ref(source), &t, Some(depth));
        let first_layout = self.layout(n);
        let start = &source.index + extra;
        let mut groups: BTreeMap<(u64, BigUint, u64), Vec<Cell>> = BTreeMap::new();
        for piece in pieces {
            // ell >= 1 forces at least one wrap, so every piece is below stage n.
            debug_assert!(piece.stage > n);
            let Ancestry::Level(idx) = self.ancestor_level(&piece, n + 1) else {
                continue;
            };
            let Some(Segment::Copy { copy: 0, level }) = first_layout.locate(&idx) else {
                continue;
            };
            let src = &piece.index - &t;
            let passes = self
                .staircases_in_range(piece.stage, n, &(&src + 1u32), &(&piece.index + 1u32))
                .to_u64()
                .expect("pass count fits");
            let drop = (BigInt::from(start.clone()) - BigInt::from(level.clone()))
                .mod_floor(&BigInt::from(h.clone()))
                .to_u64()
                .expect("drop below column height");
            groups.entry((drop, level, passes)).or_default().push(piece);
        }
        let mut out = Vec::new();
        for ((drop, level, passes), mut cells) in groups {
            cells.sort();
            let measure = self.measure_of(&cells);
            out.push(CrescentPiece {
                level,
                drop,
                staircase_passes: passes,
                cells,
                measure,
            });
        }
        let aggregate = out
            .iter()
            .fold(BigRational::zero(), |acc, p| acc + &p.measure);
        let top_measure = out.first().map_or(BigRational::zero(), |p| p.measure.clone());
        Ok(CrescentReport {
            source: source.clone(),
            ell,
            extra,
            depth,
            pieces: out,
            aggregate,
            top_measure,
            unresolved_tail: tail,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::ratio;

    fn c(n: u32, j: u64) -> Cell {
        Cell::new(n, j)
    }

    #[test]
    fn staircase_sums() {
        assert_eq!(staircase_sum(1), 1);
        assert_eq!(staircase_sum(3), 6);
        assert_eq!(staircase_sum(5), 15);
    }

    #[test]
    fn fullness_examples() {
        let rule = Rule::paper();
        let i = rule.cell_set([c(2, 1)]);
        assert_eq!(rule.fullness(&i, &i).unwrap(), ratio(1, 1));
        assert_eq!(
            rule.fullness(&rule.cell_set([c(3, 7)]), &i).unwrap(),
            ratio(1, 4)
        );
        assert_eq!(
            rule.fullness(&rule.cell_set([c(3, 7)]), &rule.cell_set([c(2, 0)]))
                .unwrap(),
            ratio(0, 1)
        );
        assert_eq!(
            rule.fullness(&rule.cell_set([c(3, 6)]), &rule.cell_set([c(2, 0)]))
                .unwrap(),
            ratio(1, 4)
        );
        assert_eq!(
            rule.fullness(&i, &CellSet::empty()),
            Err(LemmaError::EmptyTarget)
        );
    }

    #[test]
    fn placement_examples() {
        let rule = Rule::paper();
        let (i, j) = rule
            .place_above_below(&[c(1, 0)], &[c(1, 0)], &[Placement::Above])
            .unwrap();
        assert_eq!((i, j), (vec![c(2, 4)], vec![c(2, 0)]));
        let (i, j) = rule
            .place_above_below(&[c(1, 0)], &[c(1, 0)], &[Placement::Below])
            .unwrap();
        assert_eq!((i, j), (vec![c(2, 0)], vec![c(2, 4)]));
        let (i, j) = rule
            .place_above_below(&[c(2, 3)], &[c(2, 5)], &[Placement::Above])
            .unwrap();
        assert_eq!((i, j), (vec![c(3, 27)], vec![c(3, 5)]));
        assert!(matches!(
            rule.place_above_below(&[c(2, 3)], &[c(3, 5)], &[Placement::Above]),
            Err(LemmaError::StageMismatch(2, 3))
        ));
    }

    #[test]
    fn double_approx_examples() {
        let rule = Rule::paper();
        let i = Rectangle(vec![c(1, 0)]);
        let half = ratio(1, 2);

        let whole = rule.rect_set(&[i.clone()]).unwrap();
        for n in 2..5 {
            let da = rule.double_approx_fraction(&whole, &i, n, &half).unwrap();
            assert_eq!(da.fraction, ratio(1, 1));
        }

        let one_copy = rule.rect_set(&[Rectangle(vec![c(2, 0)])]).unwrap();
        let da = rule.double_approx_fraction(&one_copy, &i, 2, &half).unwrap();
        assert_eq!((da.full, da.total), (1, 4));

        let three = rule
            .rect_set(&[
                Rectangle(vec![c(2, 0)]),
                Rectangle(vec![c(2, 1)]),
                Rectangle(vec![c(2, 3)]),
            ])
            .unwrap();
        let da = rule.double_approx_fraction(&three, &i, 2, &half).unwrap();
        assert_eq!(da.fraction, ratio(3, 4));

        assert_eq!(
            rule.double_approx_fraction(&three, &i, 1, &half),
            Err(LemmaError::StageOrder { k: 1, n: 1 })
        );
    }

    #[test]
    fn crescent_of_level_five() {
        let rule = Rule::paper();
        let report = rule.crescent(&c(3, 5), 1, 0, 3 + 1 + 4).unwrap();
        let top = &report.pieces[0];
        assert_eq!(top.level, BigUint::from(4u32));
        assert_eq!(top.drop, 1);
        assert_eq!(top.staircase_passes, 1);
        assert!(top.cells.contains(&c(5, 160)));
        assert!(top.cells.contains(&c(5, 628)));
        assert!(report.aggregate >= ratio(1, 128));
        assert!(report.displacement_law_holds());
    }

    #[test]
    fn crescent_of_base_has_no_shallow_pieces() {
        let rule = Rule::paper();
        let report = rule.crescent(&c(2, 0), 1, 0, 2 + 1 + 4).unwrap();
        assert!(report.pieces.is_empty());
        assert!(report.unresolved_tail.is_zero());
        assert!(matches!(
            rule.crescent(&c(2, 0), 1, 0, 2),
            Err(LemmaError::DepthExceeded { .. })
        ));
    }

    #[test]
    fn level_profile_matches_direct_intersection() {
        let rule = Rule::paper();
        let profile = rule.level_profile(&c(2, 0), 2, &BigUint::from(7u32));
        assert_eq!(profile[0], ratio(1, 32));
        let image = rule.translate(&rule.cell_set([c(2, 0)]), 7u32);
        for (i, m) in profile.iter().enumerate() {
            let level = rule.cell_set([c(2, i as u64)]);
            assert_eq!(*m, rule.intersection_measure(&image, &level));
        }
    }
}
