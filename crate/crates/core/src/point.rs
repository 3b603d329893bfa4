//! Concrete points of `X`, addressed by a level and a rational offset inside it.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{Ancestry, Cell};
use crate::rule::{Rule, Segment};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PointError {
    #[error("the bottom point of the base has no preimage")]
    OrbitBottom,
    #[error("offset must lie in [0, 1)")]
    BadOffset,
    #[error("no such level {0}")]
    NoSuchLevel(Cell),
}

/// `offset` is the position inside the level as a fraction of its width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointAddress {
    pub stage: u32,
    #[serde(with = "crate::ratio::serde_uint")]
    pub index: BigUint,
    #[serde(with = "crate::ratio::serde_ratio")]
    pub offset: BigRational,
}

impl PointAddress {
    pub fn new(stage: u32, index: impl Into<BigUint>, offset: BigRational) -> Self {
        PointAddress {
            stage,
            index: index.into(),
            offset,
        }
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.stage, self.index.clone())
    }
}

/// Splits `offset` into the base-`cuts` digit selecting a copy and the offset inside it.
fn split_offset(offset: &BigRational, cuts: u32) -> (usize, BigRational) {
    let scaled = offset * BigRational::from_integer(BigInt::from(cuts));
    let digit = scaled.to_integer();
    let rest = scaled - BigRational::from_integer(digit.clone());
    (digit.to_usize().expect("digit < cuts"), rest)
}

impl Rule {
    fn check_point(&self, p: &PointAddress) -> Result<(), PointError> {
        if p.offset < BigRational::zero() || p.offset >= BigRational::from_integer(1.into()) {
            return Err(PointError::BadOffset);
        }
        self.check_cell(&p.cell())
            .map_err(|_| PointError::NoSuchLevel(p.cell()))
    }

    /// The same point addressed one stage deeper.
    pub fn refine_point(&self, p: &PointAddress) -> PointAddress {
        let (digit, offset) = split_offset(&p.offset, self.cuts());
        let layout = self.layout(p.stage);
        PointAddress {
            stage: p.stage + 1,
            index: &layout.copy_offsets[digit] + &p.index,
            offset,
        }
    }

    /// The same point addressed at an earlier stage; `None` if it lies in a
    /// spacer created after stage `n`.
    pub fn coarsen_point(&self, p: &PointAddress, n: u32) -> Option<PointAddress> {
        let mut q = p.clone();
        let cuts = BigRational::from_integer(BigInt::from(self.cuts()));
        while q.stage > n {
            match self.layout(q.stage - 1).locate(&q.index) {
                Some(Segment::Copy { copy, level }) => {
                    q.offset = (BigRational::from_integer(BigInt::from(copy)) + &q.offset) / &cuts;
                    q.index = level;
                    q.stage -= 1;
                }
                _ => return None,
            }
        }
        Some(q)
    }

    pub fn point_in_cell(&self, p: &PointAddress, cell: &Cell) -> bool {
        if cell.stage <= p.stage {
            return self.ancestor_level(&p.cell(), cell.stage) == Ancestry::Level(cell.index.clone());
        }
        let mut q = p.clone();
        while q.stage < cell.stage {
            q = self.refine_point(&q);
        }
        q.index == cell.index
    }

    /// Address of `T^m(p)`.
    pub fn apply_t_point(&self, p: &PointAddress, m: i64) -> Result<PointAddress, PointError> {
        self.check_point(p)?;
        let mut q = p.clone();
        let mut rest = BigUint::from(m.unsigned_abs());
        if m >= 0 {
            while !rest.is_zero() {
                let headroom = self.height(q.stage) - 1u32 - &q.index;
                if rest <= headroom {
                    q.index += &rest;
                    break;
                }
                rest -= &headroom;
                q.index += headroom;
                // At the top: the next stage always has a level above this sublevel.
                q = self.refine_point(&q);
                q.index += 1u32;
                rest -= 1u32;
            }
        } else {
            while !rest.is_zero() {
                if q.index >= rest {
                    q.index -= &rest;
                    break;
                }
                rest -= &q.index;
                q.index = BigUint::zero();
                loop {
                    // Index 0 with offset 0 is the point 0 itself at every stage.
                    if q.offset.is_zero() {
                        return Err(PointError::OrbitBottom);
                    }
                    q = self.refine_point(&q);
                    if !q.index.is_zero() {
                        break;
                    }
                }
                q.index -= 1u32;
                rest -= 1u32;
            }
        }
        Ok(q)
    }
}
