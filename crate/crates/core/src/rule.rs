//! Cutting-and-stacking rules and the per-stage column geometry they generate.
//!
//! A rule cuts column `C_n` into `cuts` equal-width copies, puts a block of
//! `h_n` spacers on top of one copy and a single staircase spacer on top of
//! another, then stacks the copies left to right to form `C_{n+1}`. The
//! resulting heights satisfy `h_{n+1} = (cuts + 1) * h_n + 1` and level
//! widths shrink by a factor of `cuts` per stage.
//!
//! Stage data is computed on first use and memoized; entries are never
//! modified afterwards, so a [`Rule`] can be shared freely across threads.

use std::ops::Range;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratio::{from_uint, serde_ratio};

/// Name under which the four-cut staircase construction is addressable.
pub const PAPER_PRESET: &str = "paper-T";

/// Deepest stage the memo table can hold.
pub const MAX_STAGE: u32 = 1 << 14;
const CHUNK: usize = 256;
const CHUNKS: usize = (MAX_STAGE as usize) / CHUNK + 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("unknown rule preset {0:?}")]
    UnknownPreset(String),
    #[error("stage {0} is outside [1, {MAX_STAGE}]")]
    StageOutOfRange(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub cuts: u32,
    pub spacer_block_column: u32,
    pub staircase_column: u32,
    #[serde(with = "serde_ratio")]
    pub base_width: BigRational,
    pub initial_height: u64,
}

impl RuleSpec {
    /// Four copies, the `h_n`-high block over copy 2, the staircase over copy 4.
    pub fn paper() -> Self {
        RuleSpec {
            cuts: 4,
            spacer_block_column: 2,
            staircase_column: 4,
            base_width: BigRational::one(),
            initial_height: 1,
        }
    }

    pub fn preset(name: &str) -> Result<Self, RuleError> {
        match name {
            PAPER_PRESET => Ok(Self::paper()),
            other => Err(RuleError::UnknownPreset(other.to_string())),
        }
    }
}

impl Default for RuleSpec {
    fn default() -> Self {
        Self::paper()
    }
}

/// What occupies a given index of `C_{n+1}` relative to the copies of `C_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segment {
    Copy { copy: usize, level: BigUint },
    SpacerBlock { offset: BigUint },
    Staircase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    Copy(usize),
    SpacerBlock,
    Staircase,
}

/// Segment map of `C_{n+1}` in terms of `C_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub stage: u32,
    pub copy_height: BigUint,
    pub copy_offsets: Vec<BigUint>,
    pub spacer_block: Range<BigUint>,
    pub staircase_index: BigUint,
    pub next_height: BigUint,
}

impl Layout {
    fn build(spec: &RuleSpec, stage: u32, height: &BigUint) -> Layout {
        let mut cursor = BigUint::zero();
        let mut copy_offsets = Vec::with_capacity(spec.cuts as usize);
        let mut spacer_block = BigUint::zero()..BigUint::zero();
        let mut staircase_index = BigUint::zero();
        for column in 1..=spec.cuts {
            copy_offsets.push(cursor.clone());
            cursor += height;
            if column == spec.spacer_block_column {
                let start = cursor.clone();
                cursor += height;
                spacer_block = start..cursor.clone();
            }
            if column == spec.staircase_column {
                staircase_index = cursor.clone();
                cursor += 1u32;
            }
        }
        Layout {
            stage,
            copy_height: height.clone(),
            copy_offsets,
            spacer_block,
            staircase_index,
            next_height: cursor,
        }
    }

    /// Classifies an index of `C_{n+1}`; `None` past the top.
    pub fn locate(&self, index: &BigUint) -> Option<Segment> {
        if *index >= self.next_height {
            return None;
        }
        let slot = self.copy_offsets.partition_point(|o| o <= index);
        // copy_offsets[0] == 0, so slot >= 1.
        let offset = &self.copy_offsets[slot - 1];
        let level = index - offset;
        if level < self.copy_height {
            return Some(Segment::Copy {
                copy: slot - 1,
                level,
            });
        }
        if self.spacer_block.contains(index) {
            return Some(Segment::SpacerBlock {
                offset: index - &self.spacer_block.start,
            });
        }
        debug_assert_eq!(*index, self.staircase_index);
        Some(Segment::Staircase)
    }

    /// All segments in index order; they tile `[0, next_height)`.
    pub fn segments(&self) -> Vec<(Range<BigUint>, SegmentKind)> {
        let mut out: Vec<(Range<BigUint>, SegmentKind)> = self
            .copy_offsets
            .iter()
            .enumerate()
            .map(|(i, o)| (o.clone()..o + &self.copy_height, SegmentKind::Copy(i)))
            .collect();
        out.push((self.spacer_block.clone(), SegmentKind::SpacerBlock));
        out.push((
            self.staircase_index.clone()..&self.staircase_index + 1u32,
            SegmentKind::Staircase,
        ));
        out.sort_by(|a, b| a.0.start.cmp(&b.0.start));
        out
    }

    pub fn is_copy_top(&self, index: &BigUint) -> bool {
        matches!(self.locate(index), Some(Segment::Copy { level, .. }) if &level + 1u32 == self.copy_height)
    }
}

/// Height, level width and layout of one stage.
#[derive(Clone, Debug)]
pub struct StageGeometry {
    pub stage: u32,
    pub height: BigUint,
    pub width: BigRational,
    pub layout: Layout,
}

/// A validated rule with its lazily grown schedule.
pub struct Rule {
    spec: RuleSpec,
    warnings: Vec<String>,
    chunks: Box<[OnceLock<Box<[OnceLock<StageGeometry>]>>]>,
    ready: AtomicU32,
}

impl std::fmt::Debug for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Rule")
            .field("spec", &self.spec)
            .field("warnings", &self.warnings)
            .finish_non_exhaustive()
    }
}

impl Clone for Rule {
    fn clone(&self) -> Self {
        Rule::new(self.spec.clone()).expect("spec was already validated")
    }
}

pub fn validate_rule(spec: RuleSpec) -> Result<Rule, RuleError> {
    Rule::new(spec)
}

impl Rule {
    pub fn new(spec: RuleSpec) -> Result<Rule, RuleError> {
        let invalid = |msg: &str| Err(RuleError::InvalidRule(msg.to_string()));
        let c = spec.cuts;
        if c < 2 {
            return invalid("cuts must be at least 2");
        }
        if !(1..=c).contains(&spec.spacer_block_column) {
            return invalid("spacer_block_column must lie in [1, cuts]");
        }
        if !(1..=c).contains(&spec.staircase_column) {
            return invalid("staircase_column must lie in [1, cuts]");
        }
        if spec.spacer_block_column == spec.staircase_column {
            return invalid("spacer_block_column and staircase_column must differ");
        }
        if spec.base_width <= BigRational::zero() {
            return invalid("base_width must be positive");
        }
        if spec.initial_height == 0 {
            return invalid("initial_height must be positive");
        }
        if spec.spacer_block_column != c && spec.staircase_column != c {
            // Without a spacer over the last copy the top of C_{n+1} is the top of
            // C_n again and T of a top level is never a finite union of levels.
            return invalid("the last subcolumn must carry the staircase or the spacer block");
        }
        let mut warnings = Vec::new();
        if spec.spacer_block_column == 1 || spec.spacer_block_column == c {
            warnings.push(format!(
                "spacer_block_column {} is not an interior subcolumn",
                spec.spacer_block_column
            ));
        }
        if spec.staircase_column != c {
            warnings.push(format!(
                "staircase_column {} is not the last subcolumn",
                spec.staircase_column
            ));
        }
        let chunks = (0..CHUNKS).map(|_| OnceLock::new()).collect();
        Ok(Rule {
            spec,
            warnings,
            chunks,
            ready: AtomicU32::new(0),
        })
    }

    pub fn paper() -> Rule {
        Rule::new(RuleSpec::paper()).expect("paper preset is valid")
    }

    pub fn spec(&self) -> &RuleSpec {
        &self.spec
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn cuts(&self) -> u32 {
        self.spec.cuts
    }

    fn slot(&self, n: u32) -> &OnceLock<StageGeometry> {
        let i = n as usize;
        let chunk = self.chunks[i / CHUNK]
            .get_or_init(|| (0..CHUNK).map(|_| OnceLock::new()).collect());
        &chunk[i % CHUNK]
    }

    /// Geometry of stage `n`. Panics outside `[1, MAX_STAGE]`; use
    /// [`Rule::try_stage`] to get an error instead.
    pub fn stage(&self, n: u32) -> &StageGeometry {
        match self.try_stage(n) {
            Ok(g) => g,
            Err(e) => panic!("{e}"),
        }
    }

    pub fn try_stage(&self, n: u32) -> Result<&StageGeometry, RuleError> {
        if n == 0 || n > MAX_STAGE {
            return Err(RuleError::StageOutOfRange(n));
        }
        if n <= self.ready.load(Ordering::Acquire) {
            return Ok(self.slot(n).get().expect("ready stages are initialized"));
        }
        let start = self.ready.load(Ordering::Acquire).max(1);
        for s in start..=n {
            let slot = self.slot(s);
            if slot.get().is_none() {
                let geometry = if s == 1 {
                    self.first_stage()
                } else {
                    let prev = self.slot(s - 1).get().expect("built in order");
                    self.next_stage(prev)
                };
                let _ = slot.set(geometry);
            }
            self.ready.fetch_max(s, Ordering::AcqRel);
        }
        Ok(self.slot(n).get().expect("just initialized"))
    }

    fn first_stage(&self) -> StageGeometry {
        let height = BigUint::from(self.spec.initial_height);
        let layout = Layout::build(&self.spec, 1, &height);
        StageGeometry {
            stage: 1,
            height,
            width: self.spec.base_width.clone(),
            layout,
        }
    }

    fn next_stage(&self, prev: &StageGeometry) -> StageGeometry {
        let stage = prev.stage + 1;
        let height = prev.layout.next_height.clone();
        let width = &prev.width / BigRational::from_integer(BigInt::from(self.spec.cuts));
        let layout = Layout::build(&self.spec, stage, &height);
        StageGeometry {
            stage,
            height,
            width,
            layout,
        }
    }

    pub fn height(&self, n: u32) -> &BigUint {
        &self.stage(n).height
    }

    pub fn level_width(&self, n: u32) -> &BigRational {
        &self.stage(n).width
    }

    /// Segment map of `C_{n+1}` in terms of copies of `C_n`.
    pub fn layout(&self, n: u32) -> &Layout {
        &self.stage(n).layout
    }

    /// Number of `C_k` copies inside `C_n`, i.e. `cuts^(n-k)`.
    pub fn copies_between(&self, k: u32, n: u32) -> BigUint {
        assert!(k <= n, "copies_between requires k <= n");
        BigUint::from(self.spec.cuts).pow(n - k)
    }

    pub fn column_measure(&self, n: u32) -> BigRational {
        let g = self.stage(n);
        from_uint(&g.height) * &g.width
    }

    /// Number of staircase spacers created at stages `base+1 ..= n` that sit inside `C_n`.
    pub fn staircases_in_column(&self, n: u32, base: u32) -> BigUint {
        let mut count = BigUint::zero();
        for _ in base..n {
            count = count * self.spec.cuts + 1u32;
        }
        count
    }

    /// Counts staircase spacers created at stages `base+1 ..= n` whose index in
    /// `C_n` lies in `[lo, hi)`.
    pub fn staircases_in_range(&self, n: u32, base: u32, lo: &BigUint, hi: &BigUint) -> BigUint {
        if n <= base || lo >= hi {
            return BigUint::zero();
        }
        let layout = self.layout(n - 1);
        let mut count = BigUint::zero();
        for offset in &layout.copy_offsets {
            let end = offset + &layout.copy_height;
            if &end <= lo || offset >= hi {
                continue;
            }
            if lo <= offset && &end <= hi {
                count += self.staircases_in_column(n - 1, base);
            } else {
                let sub_lo = if lo > offset { lo - offset } else { BigUint::zero() };
                let sub_hi = if hi < &end { hi - offset } else { layout.copy_height.clone() };
                count += self.staircases_in_range(n - 1, base, &sub_lo, &sub_hi);
            }
        }
        if lo <= &layout.staircase_index && &layout.staircase_index < hi {
            count += 1u32;
        }
        count
    }
}
