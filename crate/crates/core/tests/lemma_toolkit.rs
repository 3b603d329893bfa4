use std::sync::OnceLock;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;

use stacklab::lemma::{eighth_power, staircase_sum, FullnessParams};
use stacklab::oracle::{build_embedding, cell_set_intervals, oracle_apply_t, Embedding};
use stacklab::{Cell, LemmaError, Placement, Rectangle, Rule};

type Intervals = Vec<(BigRational, BigRational)>;

fn oracle8() -> &'static Embedding {
    static EMB: OnceLock<Embedding> = OnceLock::new();
    EMB.get_or_init(|| build_embedding(Rule::paper().spec(), 8).unwrap())
}

fn oracle6() -> &'static Embedding {
    static EMB: OnceLock<Embedding> = OnceLock::new();
    EMB.get_or_init(|| build_embedding(Rule::paper().spec(), 6).unwrap())
}

fn overlap(a: &Intervals, b: &Intervals) -> BigRational {
    let mut total = BigRational::zero();
    for (l1, r1) in a {
        for (l2, r2) in b {
            let (lo, hi) = (l1.max(l2), r1.min(r2));
            if lo < hi {
                total += hi - lo;
            }
        }
    }
    total
}

fn q(p: i64, d: i64) -> BigRational {
    BigRational::new(p.into(), d.into())
}

/// Oracle image of a level under `T^t`, as top-level intervals, plus the mass leaving the column.
fn oracle_orbit(emb: &Embedding, source: &Cell, t: u64) -> (Intervals, BigRational) {
    let (lo, hi) = emb.cell_interval(source).unwrap();
    let top = emb.top();
    let mut out = Vec::new();
    let mut lost = BigRational::zero();
    for level in top.levels_within(&lo, &hi) {
        let (l, _) = top.interval(level);
        match oracle_apply_t(top, &l, t as i64) {
            Ok(x) => out.push((x.clone(), x + &top.width)),
            Err(_) => lost += &top.width,
        }
    }
    (out, lost)
}

#[test]
fn crescents_agree_with_the_interval_oracle() {
    let rule = Rule::paper();
    let emb = oracle8();
    for (n, ell) in [(3u32, 1u64), (3, 2), (3, 3), (4, 1), (4, 2)] {
        let h = rule.height(n).to_u64().unwrap();
        for j in (0..h).step_by(if n == 3 { 1 } else { 17 }) {
            let source = Cell::new(n, j);
            let report = rule.crescent(&source, ell, 0, 8).unwrap();
            let (image, lost) = oracle_orbit(emb, &source, ell * h);
            let mut symbolic = vec![BigRational::zero(); h as usize];
            for piece in &report.pieces {
                symbolic[piece.level.to_usize().unwrap()] += &piece.measure;
            }
            for (i, mass) in symbolic.iter().enumerate() {
                let first_copy = emb.cell_interval(&Cell::new(n + 1, i as u64)).unwrap();
                let expected = overlap(&image, &vec![first_copy]);
                assert_eq!(mass, &expected, "source {source} ell {ell} level {i}");
            }
            assert_eq!(report.unresolved_tail, lost, "source {source} ell {ell}");
        }
    }
}

#[test]
fn level_profiles_agree_with_the_interval_oracle() {
    let rule = Rule::paper();
    let emb = oracle8();
    for (source, t) in [(Cell::new(2, 3u32), 40u64), (Cell::new(3, 0u32), 31), (Cell::new(3, 29u32), 200)] {
        let (image, lost) = oracle_orbit(emb, &source, t);
        let profile = rule.level_profile(&source, 4, &BigUint::from(t));
        let mut slack = BigRational::zero();
        for (i, mass) in profile.iter().enumerate() {
            let level = emb.cell_interval(&Cell::new(4, i as u64)).unwrap();
            let expected = overlap(&image, &vec![level]);
            assert!(mass >= &expected, "{source} level {i}");
            slack += mass - expected;
        }
        // Mass the oracle loses past the top of C_8 is the only possible difference.
        assert!(slack <= lost);
    }
}

#[test]
fn displacement_law_on_small_columns() {
    let rule = Rule::paper();
    for n in 2..=4 {
        for j in rule.column_levels(n) {
            for ell in 1..=2 {
                let report = rule.crescent(&j, ell, 0, n + ell as u32 + 4).unwrap();
                assert!(report.displacement_law_holds(), "{j} ell {ell}");
                let drops: Vec<u64> = report.pieces.iter().map(|p| p.drop).collect();
                assert!(drops.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}

#[test]
fn crescent_parameters_are_checked() {
    let rule = Rule::paper();
    let l = Cell::new(3, 4u32);
    assert!(matches!(rule.crescent(&l, 0, 0, 8), Err(LemmaError::BadParameter(_))));
    assert!(matches!(rule.crescent(&l, 1, 0, 3), Err(LemmaError::DepthExceeded { .. })));
    let shallow = rule.crescent(&l, 1, 0, 4).unwrap();
    let deep = rule.crescent(&l, 1, 0, 9).unwrap();
    assert!(deep.unresolved_tail <= shallow.unresolved_tail);
    assert!(&shallow.aggregate + &shallow.unresolved_tail >= deep.aggregate);
}

#[test]
fn staircase_and_bound_constants() {
    assert_eq!((1..=4).map(staircase_sum).collect::<Vec<_>>(), [1, 3, 6, 10]);
    assert_eq!(eighth_power(0), BigRational::one());
    assert_eq!(eighth_power(2), q(1, 64));
}

#[test]
fn fullness_on_known_sets() {
    let rule = Rule::paper();
    let s = |cells: &[(u32, u64)]| rule.cell_set(cells.iter().map(|&(n, j)| Cell::new(n, j)));
    assert_eq!(rule.fullness(&s(&[(3, 6)]), &s(&[(2, 0)])).unwrap(), q(1, 4));
    assert!(rule.fullness(&s(&[(3, 7)]), &s(&[(2, 0)])).unwrap().is_zero());
    assert_eq!(rule.fullness(&s(&[(2, 0)]), &s(&[(3, 6)])).unwrap(), BigRational::one());
    assert!(matches!(rule.fullness(&s(&[(2, 0)]), &s(&[])), Err(LemmaError::EmptyTarget)));
}

#[test]
fn placement_orders_each_pair() {
    let rule = Rule::paper();
    let i = [Cell::new(2, 3u32), Cell::new(2, 0u32)];
    let j = [Cell::new(2, 1u32), Cell::new(2, 5u32)];
    let signs = [Placement::for_exponent(2), Placement::for_exponent(-1)];
    let (pi, pj) = rule.place_above_below(&i, &j, &signs).unwrap();
    assert!(pi[0].index > pj[0].index);
    assert!(pi[1].index < pj[1].index);
    for (parent, child) in i.iter().chain(&j).zip(pi.iter().chain(&pj)) {
        assert!(rule.contains_cell(parent, child));
        assert_eq!(child.stage, 3);
    }
    assert!(matches!(
        rule.place_above_below(&i[..1], &[Cell::new(3, 0u32)], &signs[..1]),
        Err(LemmaError::StageMismatch(2, 3))
    ));
}

#[test]
fn fullness_parameters_are_validated() {
    assert!(FullnessParams::new(q(1, 2), q(1, 10), q(1, 1)).is_ok());
    assert!(FullnessParams::new(q(0, 1), q(1, 10), q(1, 1)).is_err());
    assert!(FullnessParams::new(q(1, 2), q(1, 1), q(1, 1)).is_err());
    assert!(FullnessParams::new(q(99, 100), q(1, 10), q(1, 1)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Fractions of full sub-rectangles recounted from oracle intervals.
    #[test]
    fn double_approx_matches_interval_count(
        base in prop::collection::vec(0u64..6, 2),
        extra in prop::collection::vec((3u32..=5, any::<u64>()), 2..24),
        n in 3u32..=4,
        delta in 1i64..8,
    ) {
        let rule = Rule::paper();
        let emb = oracle6();
        let target = Rectangle(base.iter().map(|&j| Cell::new(2, j)).collect());
        let mut rects = Vec::new();
        for &(s, raw) in &extra {
            // Sublevels of the target, so that some sub-rectangles come out full.
            let xs = rule.sublevels(&target.0[0], s);
            let ys = rule.sublevels(&target.0[1], s);
            let r = Rectangle(vec![
                xs[(raw % xs.len() as u64) as usize].clone(),
                ys[((raw >> 20) % ys.len() as u64) as usize].clone(),
            ]);
            if rule.rect_set(&[rects.clone(), vec![r.clone()]].concat()).is_ok() {
                rects.push(r);
            }
        }
        let a = rule.rect_set(&rects).unwrap();
        let delta = q(delta, 8);
        let got = rule.double_approx_fraction(&a, &target, n, &delta).unwrap();

        let w = rule.level_width(n).clone();
        let subs: Vec<Vec<Intervals>> = target.0.iter().map(|c| {
            let (lo, hi) = emb.cell_interval(c).unwrap();
            let table = emb.table(n);
            table.levels_within(&lo, &hi).into_iter().map(|l| vec![table.interval(l)]).collect()
        }).collect();
        let coords: Vec<Vec<Intervals>> = rects.iter().map(|r| {
            r.0.iter().map(|c| cell_set_intervals(emb, &rule.cell_set([c.clone()])).unwrap()).collect()
        }).collect();
        let mut full = 0u64;
        for x in &subs[0] {
            for y in &subs[1] {
                let hit: BigRational = coords.iter().map(|c| overlap(x, &c[0]) * overlap(y, &c[1])).sum();
                if hit / (&w * &w) > BigRational::one() - &delta {
                    full += 1;
                }
            }
        }
        let total = (subs[0].len() * subs[1].len()) as u64;
        prop_assert_eq!(got.total, total);
        if full > 0 {
            prop_assert!(rule.product_measure(&a) > BigRational::zero());
        }
        prop_assert_eq!(got.full, full);
        prop_assert_eq!(got.fraction, q(full as i64, total as i64));
    }
}
