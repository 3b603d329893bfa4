//! Levels of the tower as symbolic cells, canonical finite unions of cells,
//! and exact push-forwards of those unions under powers of `T`.
//!
//! Cells form a laminar family: two cells are either nested or disjoint. A
//! cell `(n, j)` is refined into `cuts` children at stage `n + 1`, child `i`
//! being the `i`-th equal-width slice of the level, sitting in copy `i` of
//! `C_n` inside `C_{n+1}`. Spacer levels created at stage `m` have no
//! ancestor at stage `m - 1`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeTuple;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rule::{Rule, Segment};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub stage: u32,
    pub index: BigUint,
}

impl Cell {
    pub fn new(stage: u32, index: impl Into<BigUint>) -> Cell {
        Cell {
            stage,
            index: index.into(),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.stage, self.index)
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Index<'a>(&'a BigUint);
        impl Serialize for Index<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                crate::ratio::serde_uint::serialize(self.0, s)
            }
        }
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&self.stage)?;
        t.serialize_element(&Index(&self.index))?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Cell, D::Error> {
        struct CellVisitor;
        #[derive(Deserialize)]
        struct Index(#[serde(with = "crate::ratio::serde_uint")] BigUint);

        impl<'de> Visitor<'de> for CellVisitor {
            type Value = Cell;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a cell [stage, index]")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Cell, A::Error> {
                let stage: u32 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let Index(index) = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(Cell { stage, index })
            }
        }
        d.deserialize_tuple(2, CellVisitor)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CellError {
    #[error("cell {0} does not exist: stage must be >= 1 and index below the column height")]
    NoSuchCell(Cell),
}

/// Where a cell sits relative to an earlier column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ancestry {
    /// Inside level `j` of the earlier column.
    Level(BigUint),
    /// Inside a spacer created at this stage, after the earlier column.
    SpacerOrigin(u32),
}

/// A finite disjoint union of cells in canonical form: no `cuts` siblings
/// that could merge into their parent, sorted by `(stage, index)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct CellSet {
    cells: Vec<Cell>,
}

impl CellSet {
    pub fn empty() -> CellSet {
        CellSet { cells: Vec::new() }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn max_stage(&self) -> Option<u32> {
        self.cells.iter().map(|c| c.stage).max()
    }
}

/// Membership index keyed by stage, for ancestor-chain lookups.
struct StageIndex<'a> {
    by_stage: HashMap<u32, HashSet<&'a BigUint>>,
    min_stage: u32,
}

impl<'a> StageIndex<'a> {
    fn new(cells: &'a [Cell]) -> Self {
        let mut by_stage: HashMap<u32, HashSet<&BigUint>> = HashMap::new();
        for c in cells {
            by_stage.entry(c.stage).or_default().insert(&c.index);
        }
        let min_stage = cells.iter().map(|c| c.stage).min().unwrap_or(u32::MAX);
        StageIndex {
            by_stage,
            min_stage,
        }
    }

    fn contains(&self, stage: u32, index: &BigUint) -> bool {
        self.by_stage
            .get(&stage)
            .is_some_and(|set| set.contains(index))
    }
}

impl Rule {
    pub fn check_cell(&self, cell: &Cell) -> Result<(), CellError> {
        if cell.stage == 0 || cell.stage > crate::rule::MAX_STAGE || cell.index >= *self.height(cell.stage)
        {
            return Err(CellError::NoSuchCell(cell.clone()));
        }
        Ok(())
    }

    pub fn cell_measure(&self, cell: &Cell) -> &BigRational {
        self.level_width(cell.stage)
    }

    /// The `cuts` sublevels of `cell` in `C_{stage+1}`, in copy order.
    pub fn refine(&self, cell: &Cell) -> Vec<Cell> {
        self.layout(cell.stage)
            .copy_offsets
            .iter()
            .map(|o| Cell {
                stage: cell.stage + 1,
                index: o + &cell.index,
            })
            .collect()
    }

    /// The cell directly containing `cell` one stage up, with the copy it sits in.
    pub fn parent(&self, cell: &Cell) -> Option<(Cell, usize)> {
        if cell.stage <= 1 {
            return None;
        }
        match self.layout(cell.stage - 1).locate(&cell.index) {
            Some(Segment::Copy { copy, level }) => Some((Cell::new(cell.stage - 1, level), copy)),
            _ => None,
        }
    }

    pub fn ancestor_level(&self, cell: &Cell, n: u32) -> Ancestry {
        assert!(n <= cell.stage, "ancestor_level needs n <= cell.stage");
        let mut index = cell.index.clone();
        for s in ((n + 1)..=cell.stage).rev() {
            match self.layout(s - 1).locate(&index) {
                Some(Segment::Copy { level, .. }) => index = level,
                _ => return Ancestry::SpacerOrigin(s),
            }
        }
        Ancestry::Level(index)
    }

    /// True when `outer` contains `inner` (or equals it).
    pub fn contains_cell(&self, outer: &Cell, inner: &Cell) -> bool {
        outer.stage <= inner.stage
            && self.ancestor_level(inner, outer.stage) == Ancestry::Level(outer.index.clone())
    }

    /// Whether some ancestor-or-self of `cell` is in `index`, with `strict`
    /// excluding the cell itself.
    fn has_ancestor_in(&self, cell: &Cell, index: &StageIndex<'_>, strict: bool) -> bool {
        if !strict && index.contains(cell.stage, &cell.index) {
            return true;
        }
        let mut current = cell.index.clone();
        let mut s = cell.stage;
        while s > index.min_stage && s > 1 {
            match self.layout(s - 1).locate(&current) {
                Some(Segment::Copy { level, .. }) => current = level,
                _ => return false,
            }
            s -= 1;
            if index.contains(s, &current) {
                return true;
            }
        }
        false
    }

    /// Builds a canonical set from arbitrary (possibly overlapping) cells. Panics on invalid cells.
    pub fn cell_set(&self, cells: impl IntoIterator<Item = Cell>) -> CellSet {
        let mut all: Vec<Cell> = cells.into_iter().collect();
        for c in &all {
            if let Err(e) = self.check_cell(c) {
                panic!("{e}");
            }
        }
        all.sort();
        all.dedup();
        let index = StageIndex::new(&all);
        let kept: Vec<Cell> = all
            .iter()
            .filter(|c| !self.has_ancestor_in(c, &index, true))
            .cloned()
            .collect();
        self.canonicalize_disjoint(kept)
    }

    pub fn try_cell_set(&self, cells: impl IntoIterator<Item = Cell>) -> Result<CellSet, CellError> {
        let all: Vec<Cell> = cells.into_iter().collect();
        for c in &all {
            self.check_cell(c)?;
        }
        Ok(self.cell_set(all))
    }

    /// Canonical form of pairwise disjoint cells: merges complete sibling groups bottom-up.
    pub fn canonicalize_disjoint(&self, cells: Vec<Cell>) -> CellSet {
        let cuts = self.cuts() as usize;
        let mut by_stage: BTreeMap<u32, BTreeSet<BigUint>> = BTreeMap::new();
        for c in cells {
            by_stage.entry(c.stage).or_default().insert(c.index);
        }
        let Some(&max_stage) = by_stage.keys().next_back() else {
            return CellSet::empty();
        };
        for s in (2..=max_stage).rev() {
            let Some(level_set) = by_stage.get(&s) else {
                continue;
            };
            if level_set.len() < cuts {
                continue;
            }
            let layout = self.layout(s - 1);
            let mut groups: HashMap<BigUint, usize> = HashMap::new();
            for idx in level_set {
                if let Some(Segment::Copy { level, .. }) = layout.locate(idx) {
                    *groups.entry(level).or_default() += 1;
                }
            }
            let complete: Vec<BigUint> = groups
                .into_iter()
                .filter(|(_, n)| *n == cuts)
                .map(|(p, _)| p)
                .collect();
            if complete.is_empty() {
                continue;
            }
            let level_set = by_stage.get_mut(&s).expect("present");
            for parent in &complete {
                for o in &layout.copy_offsets {
                    level_set.remove(&(o + parent));
                }
            }
            by_stage.entry(s - 1).or_default().extend(complete);
        }
        let cells = by_stage
            .into_iter()
            .flat_map(|(stage, set)| set.into_iter().map(move |index| Cell { stage, index }))
            .collect();
        CellSet { cells }
    }

    pub fn measure(&self, s: &CellSet) -> BigRational {
        self.measure_of(s.cells())
    }

    /// Total width of disjoint cells, summed per stage.
    pub fn measure_of(&self, cells: &[Cell]) -> BigRational {
        let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
        for c in cells {
            *counts.entry(c.stage).or_default() += 1;
        }
        counts
            .into_iter()
            .fold(BigRational::zero(), |acc, (stage, n)| {
                acc + self.level_width(stage) * BigRational::from_integer(n.into())
            })
    }

    pub fn intersect(&self, a: &CellSet, b: &CellSet) -> CellSet {
        if a.is_empty() || b.is_empty() {
            return CellSet::empty();
        }
        let ia = StageIndex::new(&a.cells);
        let ib = StageIndex::new(&b.cells);
        let mut out: Vec<Cell> = a
            .cells
            .iter()
            .filter(|x| self.has_ancestor_in(x, &ib, false))
            .cloned()
            .collect();
        out.extend(
            b.cells
                .iter()
                .filter(|y| self.has_ancestor_in(y, &ia, true))
                .cloned(),
        );
        self.canonicalize_disjoint(out)
    }

    pub fn intersection_measure(&self, a: &CellSet, b: &CellSet) -> BigRational {
        self.measure(&self.intersect(a, b))
    }

    pub fn difference(&self, a: &CellSet, b: &CellSet) -> CellSet {
        if a.is_empty() || b.is_empty() {
            return a.clone();
        }
        let ib = StageIndex::new(&b.cells);
        let ia = StageIndex::new(&a.cells);
        // Cells of b strictly inside some cell of a, keyed by that cell.
        let mut holes: HashMap<Cell, Vec<Cell>> = HashMap::new();
        for y in &b.cells {
            if !self.has_ancestor_in(y, &ia, true) {
                continue;
            }
            let mut s = y.stage;
            let mut idx = y.index.clone();
            while s > 1 {
                let Some(Segment::Copy { level, .. }) = self.layout(s - 1).locate(&idx) else {
                    break;
                };
                idx = level;
                s -= 1;
                if ia.contains(s, &idx) {
                    holes
                        .entry(Cell::new(s, idx.clone()))
                        .or_default()
                        .push(y.clone());
                    break;
                }
            }
        }
        let mut out = Vec::new();
        for x in &a.cells {
            if self.has_ancestor_in(x, &ib, false) {
                continue;
            }
            match holes.get(x) {
                None => out.push(x.clone()),
                Some(inner) => self.carve(x, inner, &mut out),
            }
        }
        self.canonicalize_disjoint(out)
    }

    /// Pushes the parts of `cell` not covered by `holes` (strict descendants) into `out`.
    fn carve(&self, cell: &Cell, holes: &[Cell], out: &mut Vec<Cell>) {
        for child in self.refine(cell) {
            let inside: Vec<Cell> = holes
                .iter()
                .filter(|h| self.contains_cell(&child, h))
                .cloned()
                .collect();
            if inside.is_empty() {
                out.push(child);
            } else if inside.iter().any(|h| *h == child) {
                continue;
            } else {
                self.carve(&child, &inside, out);
            }
        }
    }

    pub fn union(&self, a: &CellSet, b: &CellSet) -> CellSet {
        let rest = self.difference(b, a);
        let mut cells = a.cells.clone();
        cells.extend(rest.cells);
        self.canonicalize_disjoint(cells)
    }

    pub fn is_subset(&self, a: &CellSet, b: &CellSet) -> bool {
        self.difference(a, b).is_empty()
    }

    /// Raw pieces of `T^m` applied to disjoint cells. Pieces that would need
    /// refining past `max_stage` are dropped and their width added to the
    /// returned tail.
    pub fn push_forward(
        &self,
        cells: &[Cell],
        m: &BigUint,
        max_stage: Option<u32>,
    ) -> (Vec<Cell>, BigRational) {
        let mut out = Vec::new();
        let mut tail = BigRational::zero();
        let mut work: Vec<(Cell, BigUint)> = cells.iter().map(|c| (c.clone(), m.clone())).collect();
        while let Some((cell, rest)) = work.pop() {
            let height = self.height(cell.stage);
            let headroom = height - 1u32 - &cell.index;
            if rest <= headroom {
                out.push(Cell {
                    stage: cell.stage,
                    index: cell.index + rest,
                });
                continue;
            }
            if max_stage.is_some_and(|limit| cell.stage >= limit) {
                tail += self.level_width(cell.stage);
                continue;
            }
            // Climb to the top level, then continue from each sublevel of the top.
            let rest = rest - headroom;
            let top = Cell {
                stage: cell.stage,
                index: height - 1u32,
            };
            for child in self.refine(&top) {
                work.push((child, rest.clone()));
            }
            // Each sublevel of the top sits below a spacer or the next copy, so
            // rest >= 1 steps always make progress.
        }
        (out, tail)
    }

    /// Exact image `T^m(s)`.
    pub fn translate(&self, s: &CellSet, m: impl Into<BigUint>) -> CellSet {
        let m = m.into();
        if m.is_zero() {
            return s.clone();
        }
        let (pieces, _) = self.push_forward(s.cells(), &m, None);
        self.canonicalize_disjoint(pieces)
    }

    /// The resolved part of `T^{-m}(s)` and a bound on the mass left unresolved.
    ///
    /// Preimages of base levels are infinite unions of cells; each time a piece
    /// has to descend past the bottom of its column it is refined, and after
    /// `depth` such refinements the remaining bottom sliver is given up and
    /// counted in the residual.
    pub fn translate_inverse(
        &self,
        s: &CellSet,
        m: impl Into<BigUint>,
        depth: u32,
    ) -> (CellSet, BigRational) {
        let m = m.into();
        let mut out = Vec::new();
        let mut residual = BigRational::zero();
        let mut work: Vec<(Cell, BigUint, u32)> = s
            .cells()
            .iter()
            .map(|c| (c.clone(), m.clone(), 0))
            .collect();
        while let Some((cell, rest, used)) = work.pop() {
            if cell.index >= rest {
                out.push(Cell {
                    stage: cell.stage,
                    index: cell.index - rest,
                });
                continue;
            }
            let rest = rest - &cell.index;
            if used >= depth {
                residual += self.level_width(cell.stage);
                continue;
            }
            let base = Cell {
                stage: cell.stage,
                index: BigUint::zero(),
            };
            for child in self.refine(&base) {
                if child.index.is_zero() {
                    work.push((child, rest.clone(), used + 1));
                } else {
                    // One step down lands on the level below this copy.
                    let below = Cell {
                        stage: child.stage,
                        index: child.index - 1u32,
                    };
                    work.push((below, &rest - 1u32, used + 1));
                }
            }
        }
        (self.canonicalize_disjoint(out), residual)
    }

    /// Every level of `C_n`, bottom to top.
    pub fn column_levels(&self, n: u32) -> Vec<Cell> {
        let h = self.height(n);
        num_iter(h).map(|j| Cell::new(n, j)).collect()
    }
}

/// `0..n` over big integers.
pub fn num_iter(n: &BigUint) -> impl Iterator<Item = BigUint> + '_ {
    let mut i = BigUint::zero();
    std::iter::from_fn(move || {
        if &i < n {
            let v = i.clone();
            i += BigUint::one();
            Some(v)
        } else {
            None
        }
    })
}
