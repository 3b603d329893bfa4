//! Constructive witnesses for the ergodicity of `T^{k_1} x ... x T^{k_r}`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::cell::{Ancestry, Cell, CellSet};
use crate::harness::HarnessError;
use crate::lemma::{eighth_power, staircase_sum, Placement};
use crate::product::{ExponentVector, RectSet, Rectangle};
use crate::rule::Rule;

/// Search limits for the approximation steps of the recipe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecipeOptions {
    /// How many stages past the approximating column the search may go.
    pub max_extra_stages: u32,
    /// Largest number of candidate sub-rectangles examined per stage.
    pub enumeration_cap: u64,
}

impl Default for RecipeOptions {
    fn default() -> Self {
        RecipeOptions {
            max_extra_stages: 8,
            enumeration_cap: 1 << 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessParams {
    pub arity: usize,
    pub k_max: u64,
    pub s_max: u64,
    pub d: u64,
    #[serde(with = "crate::ratio::serde_ratio")]
    pub delta: BigRational,
    pub stage: u32,
    pub h: u64,
}

impl WitnessParams {
    /// `K + d + K S`.
    pub fn exponent(&self) -> u64 {
        self.k_max + self.d + self.k_max * self.s_max
    }

    /// `(1/8^{K+d+KS})^r`.
    pub fn factor(&self) -> BigRational {
        let one = eighth_power(self.exponent());
        (0..self.arity).fold(BigRational::one(), |acc, _| acc * &one)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApproxMode {
    DegenerateDa,
    DoubleApprox,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub bound_met: bool,
    pub positive: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessReport {
    pub exponents: Vec<i64>,
    pub mode: ApproxMode,
    pub params: WitnessParams,
    /// The `3/4`-full rectangles in a common column.
    pub i: Rectangle,
    pub j: Rectangle,
    pub signs: Vec<Placement>,
    /// Whether the order of `I` and `J` had to be forced one stage deeper.
    pub placed: bool,
    /// The `(1 - delta)`-full rectangles in `C_n`.
    pub i_prime: Rectangle,
    pub j_prime: Rectangle,
    #[serde(with = "crate::ratio::serde_ratio")]
    pub fullness_i: BigRational,
    #[serde(with = "crate::ratio::serde_ratio")]
    pub fullness_j: BigRational,
    #[serde(with = "crate::ratio::serde_ratio")]
    pub nu_i_prime: BigRational,
    /// `nu((T^{k_1} x ... x T^{k_r})^H I' ∩ J')`.
    #[serde(with = "crate::ratio::serde_ratio")]
    pub rect_measure: BigRational,
    /// `(1/8^{K+d+KS})^r nu(I')`.
    #[serde(with = "crate::ratio::serde_ratio")]
    pub bound: BigRational,
    /// `nu((T^{k_1} x ... x T^{k_r})^H A ∩ B)`.
    #[serde(with = "crate::ratio::serde_ratio")]
    pub set_measure: BigRational,
    pub verdict: Verdict,
}

impl WitnessReport {
    pub fn recompute_verdict(&self) -> Verdict {
        let bound = self.params.factor() * &self.nu_i_prime;
        let bound_met = self.rect_measure >= bound && bound == self.bound;
        let positive = self.set_measure > BigRational::zero();
        Verdict {
            bound_met,
            positive,
            pass: bound_met && positive,
        }
    }
}

fn same_index_at(cell: &Cell, n: u32) -> Cell {
    // The bottom copy sits at offset 0, so its sublevels keep their index.
    Cell::new(n, cell.index.clone())
}

fn lift_rect(r: &Rectangle, n: u32) -> Rectangle {
    Rectangle(r.0.iter().map(|c| same_index_at(c, n)).collect())
}

fn rect_stage(r: &Rectangle) -> u32 {
    r.0.iter().map(|c| c.stage).max().unwrap_or(1)
}

fn as_set(rule: &Rule, r: &Rectangle) -> RectSet {
    rule.rect_set(std::slice::from_ref(r))
        .expect("a rectangle of valid cells")
}

fn index_u64(cell: &Cell) -> Result<u64, HarnessError> {
    cell.index.to_u64().ok_or(HarnessError::TooDeep)
}

fn order_holds(i: &Rectangle, j: &Rectangle, signs: &[Placement]) -> bool {
    i.0.iter().zip(&j.0).zip(signs).all(|((a, b), s)| match s {
        Placement::Above => a.index >= b.index,
        Placement::Below => a.index <= b.index,
    })
}

fn below_top(rule: &Rule, i: &Rectangle, j: &Rectangle, n: u32, margin: u64) -> bool {
    let top = rule.height(n) - 1u32;
    i.0.iter().zip(&j.0).all(|(a, b)| {
        let hi = a.index.clone().max(b.index.clone());
        hi <= top && &top - hi > BigUint::from(margin)
    })
}

impl Rule {
    /// Coarsest rectangle in a common column that is more than `3/4` full of `a`.
    fn three_quarter_rectangle(&self, a: &RectSet) -> Result<(Rectangle, BigRational), HarnessError> {
        let three_quarters = BigRational::new(3.into(), 4.into());
        let mut best: Option<(Rectangle, BigRational)> = None;
        for rect in a.rectangles() {
            let fine = rect_stage(&rect);
            for s in 1..=fine {
                let coarse: Option<Vec<Cell>> = rect
                    .0
                    .iter()
                    .map(|c| {
                        if c.stage <= s {
                            Some(same_index_at(c, s))
                        } else {
                            match self.ancestor_level(c, s) {
                                Ancestry::Level(j) => Some(Cell::new(s, j)),
                                Ancestry::SpacerOrigin(_) => None,
                            }
                        }
                    })
                    .collect();
                let Some(coarse) = coarse.map(Rectangle) else {
                    continue;
                };
                let f = self.rect_fullness(a, &coarse)?;
                if f > three_quarters {
                    if best.as_ref().is_none_or(|(b, _)| rect_stage(b) > s) {
                        best = Some((coarse, f));
                    }
                    break;
                }
            }
        }
        best.ok_or(HarnessError::NoRectangleFound)
    }

    /// The child rectangle of `r` with the largest fullness; first in index order on ties.
    fn best_child(&self, a: &RectSet, r: &Rectangle) -> Result<(Rectangle, BigRational), HarnessError> {
        let children: Vec<Vec<Cell>> = r.0.iter().map(|c| self.refine(c)).collect();
        let mut digits = vec![0usize; r.arity()];
        let mut best: Option<(Rectangle, BigRational)> = None;
        loop {
            let cand = Rectangle(
                digits
                    .iter()
                    .enumerate()
                    .map(|(m, &q)| children[m][q].clone())
                    .collect(),
            );
            let f = self.rect_fullness(a, &cand)?;
            if best.as_ref().is_none_or(|(_, g)| f > *g) {
                best = Some((cand, f));
            }
            let mut m = 0;
            loop {
                if m == digits.len() {
                    return Ok(best.expect("at least one child"));
                }
                digits[m] += 1;
                if digits[m] < children[m].len() {
                    break;
                }
                digits[m] = 0;
                m += 1;
            }
        }
    }

    fn refine_to(
        &self,
        a: &RectSet,
        mut r: Rectangle,
        mut f: BigRational,
        n: u32,
    ) -> Result<(Rectangle, BigRational), HarnessError> {
        while rect_stage(&r) < n {
            (r, f) = self.best_child(a, &r)?;
        }
        Ok((r, f))
    }

    /// Builds and checks the witness of the product ergodicity argument:
    /// approximating rectangles, Lemma-1 placement, double approximation,
    /// the choice `H = h_n + S` and the exact intersection measures.
    pub fn recipe_witness(
        &self,
        k: &ExponentVector,
        a: &RectSet,
        b: &RectSet,
        options: &RecipeOptions,
    ) -> Result<WitnessReport, HarnessError> {
        let r = k.arity();
        if a.arity() != r || b.arity() != r {
            return Err(HarnessError::Arity {
                expected: r,
                found: if a.arity() != r { a.arity() } else { b.arity() },
            });
        }
        if self.product_measure(a).is_zero() || self.product_measure(b).is_zero() {
            return Err(HarnessError::EmptyInput);
        }
        let signs: Vec<Placement> = k.as_slice().iter().map(|&e| Placement::for_exponent(e)).collect();
        let k_max = k.as_slice().iter().map(|e| e.unsigned_abs()).max().unwrap_or(1);
        let s_max = k
            .as_slice()
            .iter()
            .map(|e| staircase_sum(e.unsigned_abs()))
            .max()
            .unwrap_or(1);
        let margin = s_max * k_max;

        let degenerate = a.as_single_rectangle().zip(b.as_single_rectangle());
        let mode = if degenerate.is_some() {
            ApproxMode::DegenerateDa
        } else {
            ApproxMode::DoubleApprox
        };

        // Step 1: 3/4-full rectangles in a common column, in the required order.
        let (mut i, mut fi, mut j, mut fj) = match &degenerate {
            Some((ra, rb)) => {
                let s = rect_stage(ra).max(rect_stage(rb));
                let one = BigRational::one();
                (lift_rect(ra, s), one.clone(), lift_rect(rb, s), one)
            }
            None => {
                let (ri, fi) = self.three_quarter_rectangle(a)?;
                let (rj, fj) = self.three_quarter_rectangle(b)?;
                let s = rect_stage(&ri).max(rect_stage(&rj));
                let (ri, fi) = self.refine_to(a, ri, fi, s)?;
                let (rj, fj) = self.refine_to(b, rj, fj, s)?;
                (ri, fi, rj, fj)
            }
        };
        let mut placed = false;
        let three_quarters = BigRational::new(3.into(), 4.into());
        let start = rect_stage(&i);
        while !order_holds(&i, &j, &signs) {
            if rect_stage(&i) > start + options.max_extra_stages {
                return Err(HarnessError::NoRectangleFound);
            }
            let (pi, pj) = self.place_above_below(&i.0, &j.0, &signs)?;
            let (pi, pj) = (Rectangle(pi), Rectangle(pj));
            let gi = self.rect_fullness(a, &pi)?;
            let gj = self.rect_fullness(b, &pj)?;
            if gi > three_quarters && gj > three_quarters {
                (i, fi, j, fj) = (pi, gi, pj, gj);
                placed = true;
            } else {
                (i, fi) = self.best_child(a, &i)?;
                (j, fj) = self.best_child(b, &j)?;
            }
        }
        let k_stage = rect_stage(&i);
        let mut d = 0u64;
        for (x, y) in i.0.iter().zip(&j.0) {
            d = d.max(index_u64(x)?.abs_diff(index_u64(y)?));
        }
        let mut params = WitnessParams {
            arity: r,
            k_max,
            s_max,
            d,
            delta: BigRational::zero(),
            stage: k_stage,
            h: 0,
        };
        params.delta = params.factor() / BigRational::from_integer(2.into());

        // Step 2: (1 - delta)-full rectangles in a common copy of C_k, far below the top.
        let (i_prime, j_prime, fi_prime, fj_prime, n) = match mode {
            ApproxMode::DegenerateDa => {
                let mut n = k_stage;
                while !below_top(self, &i, &j, n, margin) {
                    n += 1;
                }
                (lift_rect(&i, n), lift_rect(&j, n), fi.clone(), fj.clone(), n)
            }
            ApproxMode::DoubleApprox => self.double_approx_search(a, b, &i, &j, &params, margin, options)?,
        };
        params.stage = n;
        params.h = self
            .height(n)
            .to_u64()
            .and_then(|h| h.checked_add(s_max))
            .ok_or(HarnessError::TooDeep)?;

        let ip = as_set(self, &i_prime);
        let jp = as_set(self, &j_prime);
        let rect_measure = self.product_coupled_measure(&ip, &jp, k, params.h)?;
        let nu_i_prime = self.rectangle_measure(&i_prime);
        let bound = params.factor() * &nu_i_prime;
        let set_measure = self.product_coupled_measure(a, b, k, params.h)?;
        let mut report = WitnessReport {
            exponents: k.as_slice().to_vec(),
            mode,
            params,
            i,
            j,
            signs,
            placed,
            i_prime,
            j_prime,
            fullness_i: fi_prime,
            fullness_j: fj_prime,
            nu_i_prime,
            rect_measure,
            bound,
            set_measure,
            verdict: Verdict {
                bound_met: false,
                positive: false,
                pass: false,
            },
        };
        report.verdict = report.recompute_verdict();
        Ok(report)
    }

    #[allow(clippy::too_many_arguments)]
    fn double_approx_search(
        &self,
        a: &RectSet,
        b: &RectSet,
        i: &Rectangle,
        j: &Rectangle,
        params: &WitnessParams,
        margin: u64,
        options: &RecipeOptions,
    ) -> Result<(Rectangle, Rectangle, BigRational, BigRational, u32), HarnessError> {
        let k = rect_stage(i);
        let r = i.arity();
        let threshold = BigRational::one() - &params.delta;
        for n in k + 1..=k + options.max_extra_stages {
            let per = self.copies_between(k, n).to_u64().ok_or(HarnessError::TooDeep)?;
            let total = per.checked_pow(r as u32);
            if total.is_none_or(|t| t > options.enumeration_cap) {
                break;
            }
            let subs_i: Vec<Vec<Cell>> = i.0.iter().map(|c| self.sublevels(c, n)).collect();
            let subs_j: Vec<Vec<Cell>> = j.0.iter().map(|c| self.sublevels(c, n)).collect();
            let table_i = self.coverage_table(a, &subs_i);
            let table_j = self.coverage_table(b, &subs_j);
            let cell_w = self.level_width(n);
            let volume = (0..r).fold(BigRational::one(), |acc, _| acc * cell_w);
            let mut digits = vec![0usize; r];
            'odometer: loop {
                let fi = product_fullness(&table_i, &digits) / &volume;
                if fi > threshold {
                    let fj = product_fullness(&table_j, &digits) / &volume;
                    let ip = Rectangle(digits.iter().enumerate().map(|(m, &q)| subs_i[m][q].clone()).collect());
                    let jp = Rectangle(digits.iter().enumerate().map(|(m, &q)| subs_j[m][q].clone()).collect());
                    if fj > threshold && below_top(self, &ip, &jp, n, margin) {
                        return Ok((ip, jp, fi, fj, n));
                    }
                }
                let mut m = 0;
                loop {
                    if m == r {
                        break 'odometer;
                    }
                    digits[m] += 1;
                    if digits[m] < per as usize {
                        break;
                    }
                    digits[m] = 0;
                    m += 1;
                }
            }
        }
        Err(HarnessError::NoRectangleFound)
    }

    /// `table[m][q][b]` = measure of sublevel `q` of coordinate `m` inside block `b`.
    fn coverage_table(&self, a: &RectSet, subs: &[Vec<Cell>]) -> Vec<Vec<Vec<BigRational>>> {
        subs.iter()
            .enumerate()
            .map(|(m, levels)| {
                levels
                    .iter()
                    .map(|c| {
                        let single = self.cell_set([c.clone()]);
                        a.blocks()
                            .iter()
                            .map(|block| self.intersection_measure(&single, &block[m]))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Smallest `H` in `1..=h_max` with `nu((T^{k_1} x ... x T^{k_r})^H I ∩ J) > 0`.
    pub fn minimal_witness(
        &self,
        k: &ExponentVector,
        i: &Rectangle,
        j: &Rectangle,
        h_max: u64,
    ) -> Result<MinimalWitness, HarnessError> {
        let r = k.arity();
        if i.arity() != r || j.arity() != r {
            return Err(HarnessError::Arity {
                expected: r,
                found: if i.arity() != r { i.arity() } else { j.arity() },
            });
        }
        let ia = as_set(self, i);
        let ja = as_set(self, j);
        // Per coordinate, the moving side and the fixed side of the intersection.
        let mut moving: Vec<CellSet> = Vec::with_capacity(r);
        let mut fixed: Vec<CellSet> = Vec::with_capacity(r);
        for (m, &e) in k.as_slice().iter().enumerate() {
            let (src, dst) = if e > 0 { (&i.0[m], &j.0[m]) } else { (&j.0[m], &i.0[m]) };
            moving.push(self.cell_set([src.clone()]));
            fixed.push(self.cell_set([dst.clone()]));
        }
        for h in 1..=h_max {
            let mut measure = BigRational::one();
            for (m, &e) in k.as_slice().iter().enumerate() {
                moving[m] = self.translate(&moving[m], e.unsigned_abs());
                if !measure.is_zero() {
                    measure *= self.intersection_measure(&moving[m], &fixed[m]);
                }
            }
            if measure > BigRational::zero() {
                let recomputed = self.product_coupled_measure(&ia, &ja, k, h)?;
                return Ok(MinimalWitness {
                    exponents: k.as_slice().to_vec(),
                    h_max,
                    h_min: Some(h),
                    cross_check: recomputed == measure,
                    measure,
                });
            }
        }
        Ok(MinimalWitness {
            exponents: k.as_slice().to_vec(),
            h_max,
            h_min: None,
            measure: BigRational::zero(),
            cross_check: true,
        })
    }
}

fn product_fullness(table: &[Vec<Vec<BigRational>>], digits: &[usize]) -> BigRational {
    let blocks = table.first().map_or(0, |t| t.first().map_or(0, |v| v.len()));
    (0..blocks)
        .map(|b| {
            digits
                .iter()
                .enumerate()
                .fold(BigRational::one(), |acc, (m, &q)| acc * &table[m][q][b])
        })
        .fold(BigRational::zero(), |acc, t| acc + t)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MinimalWitness {
    pub exponents: Vec<i64>,
    pub h_max: u64,
    pub h_min: Option<u64>,
    #[serde(with = "crate::ratio::serde_ratio")]
    pub measure: BigRational,
    /// Whether the incremental measure agrees with a full product recomputation.
    pub cross_check: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::ratio;

    fn single(rule: &Rule, cells: &[(u32, u64)]) -> RectSet {
        rule.rect_set(&[Rectangle(cells.iter().map(|&(n, j)| Cell::new(n, j)).collect())])
            .unwrap()
    }

    #[test]
    fn base_case_matches_hand_computation() {
        let rule = Rule::paper();
        let a = single(&rule, &[(2, 0)]);
        let k = ExponentVector::new(vec![1]).unwrap();
        let w = rule.recipe_witness(&k, &a, &a, &RecipeOptions::default()).unwrap();
        assert_eq!(w.mode, ApproxMode::DegenerateDa);
        assert_eq!(w.params.h, 7);
        assert_eq!(w.set_measure, ratio(1, 32));
        assert_eq!(w.bound, ratio(1, 256));
        assert!(w.verdict.pass);
        assert_eq!(w.recompute_verdict(), w.verdict);
    }

    #[test]
    fn negative_exponent_uses_adjoint() {
        let rule = Rule::paper();
        let a = single(&rule, &[(2, 0)]);
        let k = ExponentVector::new(vec![-1]).unwrap();
        let w = rule.recipe_witness(&k, &a, &a, &RecipeOptions::default()).unwrap();
        assert_eq!(w.set_measure, ratio(1, 32));
        assert!(w.verdict.pass);
    }

    #[test]
    fn squares_factor() {
        let rule = Rule::paper();
        let a = single(&rule, &[(2, 0), (2, 0)]);
        let k = ExponentVector::new(vec![1, 1]).unwrap();
        let w = rule.recipe_witness(&k, &a, &a, &RecipeOptions::default()).unwrap();
        assert_eq!(w.set_measure, ratio(1, 1024));
    }

    #[test]
    fn wrong_order_is_placed() {
        let rule = Rule::paper();
        let a = single(&rule, &[(2, 0)]);
        let b = single(&rule, &[(2, 3)]);
        let k = ExponentVector::new(vec![1]).unwrap();
        let w = rule.recipe_witness(&k, &a, &b, &RecipeOptions::default()).unwrap();
        assert!(w.placed);
        assert_eq!(w.i.0, vec![Cell::new(3, 24u32)]);
        assert_eq!(w.j.0, vec![Cell::new(3, 3u32)]);
        assert!(w.verdict.pass, "{w:?}");
    }

    #[test]
    fn minimal_examples() {
        let rule = Rule::paper();
        let k = ExponentVector::new(vec![1]).unwrap();
        let b1 = Rectangle(vec![Cell::new(1, 0u32)]);
        let m = rule.minimal_witness(&k, &b1, &b1, 10).unwrap();
        assert!(m.h_min.is_some() && m.measure > BigRational::zero() && m.cross_check);

        let b2 = Rectangle(vec![Cell::new(2, 0u32)]);
        let m = rule.minimal_witness(&k, &b2, &b2, 7).unwrap();
        assert!(m.h_min.is_some_and(|h| h <= 7));

        let m = rule.minimal_witness(&k, &b2, &b2, 0).unwrap();
        assert_eq!(m.h_min, None);
    }
}
