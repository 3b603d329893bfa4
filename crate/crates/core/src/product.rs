//! r-fold products: rectangles of levels, factored unions of them, and the
//! product dynamics `T^{k_1} x ... x T^{k_r}`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{de, Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::cell::{Cell, CellSet};
use crate::rule::Rule;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProductError {
    #[error("exponent vectors must be non-empty with nonzero entries")]
    BadExponents,
    #[error("exponent {0} is negative; use the adjoint form")]
    NegativeExponent(i64),
    #[error("arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),
    #[error("rectangles {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("invalid cell: {0}")]
    Cell(#[from] crate::cell::CellError),
}

/// Nonzero integer exponents, one per coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ExponentVector(Vec<i64>);

impl ExponentVector {
    pub fn new(k: Vec<i64>) -> Result<Self, ProductError> {
        if k.is_empty() || k.contains(&0) {
            return Err(ProductError::BadExponents);
        }
        Ok(ExponentVector(k))
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }
}

impl<'de> Deserialize<'de> for ExponentVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl<'de> de::Visitor<'de> for Visitor {
            type Value = ExponentVector;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a non-empty list of nonzero integers")
            }
            fn visit_seq<A: de::SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let mut k = Vec::new();
                // Checked per element so parse errors point at the offending entry.
                while let Some(e) = seq.next_element::<i64>()? {
                    if e == 0 {
                        return Err(de::Error::custom("exponents must be nonzero integers"));
                    }
                    k.push(e);
                }
                ExponentVector::new(k).map_err(de::Error::custom)
            }
        }
        d.deserialize_seq(Visitor)
    }
}

/// Product of one level per coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rectangle(pub Vec<Cell>);

impl Rectangle {
    pub fn arity(&self) -> usize {
        self.0.len()
    }
}

/// Product of one cell set per coordinate.
pub type Block = Vec<CellSet>;

/// A finite disjoint union of products of cell sets.
///
/// Blocks stay factored: intersecting two blocks intersects coordinate-wise,
/// and the measure of a block is the product of its coordinate measures, so
/// cross products of pieces are never expanded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RectSet {
    arity: usize,
    blocks: Vec<Block>,
}

impl RectSet {
    pub fn empty(arity: usize) -> RectSet {
        RectSet {
            arity,
            blocks: Vec::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Single-rectangle sets, the shape the witness recipe accepts directly.
    pub fn as_single_rectangle(&self) -> Option<Rectangle> {
        match self.blocks.as_slice() {
            [block] if block.iter().all(|s| s.len() == 1) => {
                Some(Rectangle(block.iter().map(|s| s.cells()[0].clone()).collect()))
            }
            _ => None,
        }
    }

    /// Expands every block into its rectangles.
    pub fn rectangles(&self) -> Vec<Rectangle> {
        let mut out = Vec::new();
        for block in &self.blocks {
            let mut partial: Vec<Vec<Cell>> = vec![Vec::new()];
            for coord in block {
                partial = partial
                    .into_iter()
                    .flat_map(|p| {
                        coord.cells().iter().map(move |c| {
                            let mut next = p.clone();
                            next.push(c.clone());
                            next
                        })
                    })
                    .collect();
            }
            out.extend(partial.into_iter().map(Rectangle));
        }
        out.sort();
        out
    }
}

impl Rule {
    pub fn rectangle_measure(&self, r: &Rectangle) -> BigRational {
        r.0.iter()
            .fold(BigRational::one(), |acc, c| acc * self.level_width(c.stage))
    }

    pub fn block(&self, r: &Rectangle) -> Block {
        r.0.iter().map(|c| self.cell_set([c.clone()])).collect()
    }

    pub fn rect_set_from_blocks(&self, arity: usize, blocks: Vec<Block>) -> RectSet {
        let mut blocks: Vec<Block> = blocks
            .into_iter()
            .filter(|b| b.iter().all(|s| !s.is_empty()))
            .collect();
        debug_assert!(blocks.iter().all(|b| b.len() == arity));
        blocks.sort_by(|a, b| {
            let ka: Vec<&[Cell]> = a.iter().map(|s| s.cells()).collect();
            let kb: Vec<&[Cell]> = b.iter().map(|s| s.cells()).collect();
            ka.cmp(&kb)
        });
        RectSet { arity, blocks }
    }

    /// A union of pairwise disjoint rectangles of equal arity.
    pub fn rect_set(&self, rects: &[Rectangle]) -> Result<RectSet, ProductError> {
        let arity = rects.first().map_or(0, Rectangle::arity);
        for r in rects {
            if r.arity() != arity {
                return Err(ProductError::ArityMismatch(arity, r.arity()));
            }
            for c in &r.0 {
                self.check_cell(c)?;
            }
        }
        for i in 0..rects.len() {
            for j in (i + 1)..rects.len() {
                let disjoint = rects[i].0.iter().zip(&rects[j].0).any(|(a, b)| {
                    !self.contains_cell(a, b) && !self.contains_cell(b, a)
                });
                if !disjoint {
                    return Err(ProductError::Overlap(i, j));
                }
            }
        }
        let blocks = rects.iter().map(|r| self.block(r)).collect();
        Ok(self.rect_set_from_blocks(arity, blocks))
    }

    pub fn product_measure(&self, s: &RectSet) -> BigRational {
        s.blocks.iter().fold(BigRational::zero(), |acc, block| {
            acc + block
                .iter()
                .fold(BigRational::one(), |m, coord| m * self.measure(coord))
        })
    }

    /// Coordinate `i` pushed forward by `k_i * h`; every exponent must be positive.
    pub fn product_translate(
        &self,
        s: &RectSet,
        k: &ExponentVector,
        h: u64,
    ) -> Result<RectSet, ProductError> {
        if k.arity() != s.arity {
            return Err(ProductError::ArityMismatch(s.arity, k.arity()));
        }
        if let Some(&neg) = k.as_slice().iter().find(|&&e| e < 0) {
            return Err(ProductError::NegativeExponent(neg));
        }
        let powers: Vec<BigUint> = k
            .as_slice()
            .iter()
            .map(|&e| BigUint::from(e as u64) * h)
            .collect();
        let blocks = s
            .blocks
            .iter()
            .map(|block| {
                block
                    .iter()
                    .zip(&powers)
                    .map(|(coord, m)| self.translate(coord, m.clone()))
                    .collect()
            })
            .collect();
        Ok(self.rect_set_from_blocks(s.arity, blocks))
    }

    pub fn rect_intersect(&self, a: &RectSet, b: &RectSet) -> Result<RectSet, ProductError> {
        if a.arity != b.arity {
            return Err(ProductError::ArityMismatch(a.arity, b.arity));
        }
        let mut blocks = Vec::new();
        for x in &a.blocks {
            for y in &b.blocks {
                let block: Block = x
                    .iter()
                    .zip(y)
                    .map(|(p, q)| self.intersect(p, q))
                    .collect();
                if block.iter().all(|s| !s.is_empty()) {
                    blocks.push(block);
                }
            }
        }
        Ok(self.rect_set_from_blocks(a.arity, blocks))
    }

    /// Exact set equality: equal measure and intersection of full measure.
    pub fn rect_set_eq(&self, a: &RectSet, b: &RectSet) -> bool {
        let ma = self.product_measure(a);
        ma == self.product_measure(b)
            && self
                .rect_intersect(a, b)
                .is_ok_and(|i| self.product_measure(&i) == ma)
    }

    /// `mu(T^{k h} a ∩ b)` for one coordinate; negative `k` is rewritten as
    /// `mu(a ∩ T^{|k| h} b)` so only forward push-forwards are computed.
    pub fn coupled_measure(&self, a: &CellSet, b: &CellSet, k: i64, h: u64) -> BigRational {
        let power = BigUint::from(k.unsigned_abs()) * h;
        if k >= 0 {
            self.intersection_measure(&self.translate(a, power), b)
        } else {
            self.intersection_measure(a, &self.translate(b, power))
        }
    }

    /// `nu((T^{k_1} x ... x T^{k_r})^h a ∩ b)`, exact, any signs.
    pub fn product_coupled_measure(
        &self,
        a: &RectSet,
        b: &RectSet,
        k: &ExponentVector,
        h: u64,
    ) -> Result<BigRational, ProductError> {
        if a.arity != b.arity {
            return Err(ProductError::ArityMismatch(a.arity, b.arity));
        }
        if k.arity() != a.arity {
            return Err(ProductError::ArityMismatch(a.arity, k.arity()));
        }
        let mut total = BigRational::zero();
        for x in &a.blocks {
            // Images depend only on the block, so compute them once per block.
            let moved: Vec<Option<CellSet>> = x
                .iter()
                .zip(k.as_slice())
                .map(|(coord, &e)| {
                    (e > 0).then(|| self.translate(coord, BigUint::from(e as u64) * h))
                })
                .collect();
            for y in &b.blocks {
                let mut term = BigRational::one();
                for (i, &e) in k.as_slice().iter().enumerate() {
                    let m = match &moved[i] {
                        Some(image) => self.intersection_measure(image, &y[i]),
                        None => self.coupled_measure(&x[i], &y[i], e, h),
                    };
                    if m.is_zero() {
                        term = m;
                        break;
                    }
                    term *= m;
                }
                total += term;
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::ratio;

    fn rect(cells: &[(u32, u64)]) -> Rectangle {
        Rectangle(cells.iter().map(|&(n, j)| Cell::new(n, j)).collect())
    }

    #[test]
    fn exponent_vectors_reject_zero() {
        assert!(ExponentVector::new(vec![1, 0]).is_err());
        assert!(ExponentVector::new(vec![]).is_err());
        assert!(ExponentVector::new(vec![-3, 2]).is_ok());
        assert!(serde_json::from_str::<ExponentVector>("[1,0]").is_err());
    }

    #[test]
    fn measures() {
        let rule = Rule::paper();
        let s = rule.rect_set(&[rect(&[(2, 0), (2, 3)])]).unwrap();
        assert_eq!(rule.product_measure(&s), ratio(1, 16));
        assert_eq!(rule.product_measure(&RectSet::empty(2)), ratio(0, 1));
        let s = rule.rect_set(&[rect(&[(3, 1)])]).unwrap();
        assert_eq!(rule.product_measure(&s), ratio(1, 16));
    }

    #[test]
    fn translate_examples() {
        let rule = Rule::paper();
        let s = rule.rect_set(&[rect(&[(2, 0)])]).unwrap();
        let k = ExponentVector::new(vec![1]).unwrap();
        let out = rule.product_translate(&s, &k, 7).unwrap();
        let expected = rule.cell_set(
            [(3, 7), (3, 13), (3, 25), (4, 31), (4, 62), (4, 124), (4, 155)]
                .map(|(n, j)| Cell::new(n, j as u64)),
        );
        assert_eq!(out.blocks(), &[vec![expected]]);

        let k2 = ExponentVector::new(vec![2]).unwrap();
        let out = rule.product_translate(&s, &k2, 3).unwrap();
        let expected = rule.cell_set([(3, 6), (3, 12), (3, 24), (3, 30)].map(|(n, j)| Cell::new(n, j as u64)));
        assert_eq!(out.blocks(), &[vec![expected]]);

        let pair = rule.rect_set(&[rect(&[(2, 0), (3, 4)])]).unwrap();
        let k12 = ExponentVector::new(vec![1, 2]).unwrap();
        assert_eq!(rule.product_translate(&pair, &k12, 0).unwrap(), pair);

        let kneg = ExponentVector::new(vec![-1]).unwrap();
        assert_eq!(
            rule.product_translate(&s, &kneg, 1),
            Err(ProductError::NegativeExponent(-1))
        );
    }

    #[test]
    fn intersect_examples() {
        let rule = Rule::paper();
        let a = rule.rect_set(&[rect(&[(2, 0), (2, 1)])]).unwrap();
        assert!(rule.rect_set_eq(&rule.rect_intersect(&a, &a).unwrap(), &a));

        // Index 6 is the bottom of the second copy, so (3,6) is a sublevel of (2,0).
        let a = rule.rect_set(&[rect(&[(2, 0)])]).unwrap();
        let b = rule.rect_set(&[rect(&[(3, 6)])]).unwrap();
        assert_eq!(rule.rect_intersect(&a, &b).unwrap(), b);
        let b = rule.rect_set(&[rect(&[(3, 7)])]).unwrap();
        assert!(rule.rect_intersect(&a, &b).unwrap().is_empty());

        let a = rule.rect_set(&[rect(&[(2, 1)])]).unwrap();
        let b = rule.rect_set(&[rect(&[(3, 7)])]).unwrap();
        assert_eq!(rule.rect_intersect(&a, &b).unwrap(), b);

        let c = rule.rect_set(&[rect(&[(2, 1), (2, 1)])]).unwrap();
        assert_eq!(
            rule.rect_intersect(&a, &c),
            Err(ProductError::ArityMismatch(1, 2))
        );
    }

    #[test]
    fn overlapping_rectangles_rejected() {
        let rule = Rule::paper();
        let err = rule
            .rect_set(&[rect(&[(2, 1), (2, 0)]), rect(&[(3, 7), (2, 0)])])
            .unwrap_err();
        assert_eq!(err, ProductError::Overlap(0, 1));
        assert!(rule
            .rect_set(&[rect(&[(2, 1), (2, 0)]), rect(&[(3, 7), (2, 1)])])
            .is_ok());
    }
}
