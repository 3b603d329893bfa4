use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;

use stacklab::{Ancestry, Cell, CellSet, PointAddress, Rule};

fn to_cell(rule: &Rule, (stage, raw): (u32, u64)) -> Cell {
    let h = rule.height(stage).to_u64().unwrap();
    Cell::new(stage, raw % h)
}

fn cells() -> impl Strategy<Value = Vec<(u32, u64)>> {
    prop::collection::vec((1u32..=5, any::<u64>()), 1..6)
}

fn set(rule: &Rule, raw: &[(u32, u64)]) -> CellSet {
    rule.cell_set(raw.iter().map(|&c| to_cell(rule, c)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_preserves_measure(raw in cells(), m in 0u64..400) {
        let rule = Rule::paper();
        let s = set(&rule, &raw);
        prop_assert_eq!(rule.measure(&rule.translate(&s, m)), rule.measure(&s));
    }

    #[test]
    fn powers_compose(raw in cells(), a in 0u64..200, b in 0u64..200) {
        let rule = Rule::paper();
        let s = set(&rule, &raw);
        prop_assert_eq!(rule.translate(&rule.translate(&s, a), b), rule.translate(&s, a + b));
    }

    #[test]
    fn disjoint_sets_stay_disjoint(x in cells(), y in cells(), m in 1u64..300) {
        let rule = Rule::paper();
        let a = set(&rule, &x);
        let b = rule.difference(&set(&rule, &y), &a);
        let ta = rule.translate(&a, m);
        let tb = rule.translate(&b, m);
        prop_assert!(rule.intersection_measure(&ta, &tb).is_zero());
    }

    #[test]
    fn inverse_undoes_forward(raw in cells(), m in 0u64..300) {
        let rule = Rule::paper();
        let s = set(&rule, &raw);
        let (back, residual) = rule.translate_inverse(&rule.translate(&s, m), m, 0);
        prop_assert!(residual.is_zero());
        prop_assert_eq!(back, s);
    }

    #[test]
    fn columns_are_carried_to_disjoint_images(n in 1u32..=3, m in 1u64..200) {
        let rule = Rule::paper();
        let images: Vec<CellSet> = rule
            .column_levels(n)
            .into_iter()
            .map(|c| rule.translate(&rule.cell_set([c]), m))
            .collect();
        let mut union = CellSet::empty();
        let mut total = BigRational::zero();
        for img in &images {
            total += rule.measure(img);
            union = rule.union(&union, img);
        }
        prop_assert_eq!(rule.measure(&union), total.clone());
        prop_assert_eq!(total, rule.column_measure(n));
    }

    #[test]
    fn points_follow_their_cells(c in (1u32..=4, any::<u64>()), num in 0u64..97, m in 0i64..250) {
        let rule = Rule::paper();
        let level = to_cell(&rule, c);
        let offset = BigRational::new(num.into(), 97.into());
        let p = PointAddress::new(level.stage, level.index.clone(), offset);
        let q = rule.apply_t_point(&p, m).unwrap();
        let image = rule.translate(&rule.cell_set([level]), m.unsigned_abs());
        prop_assert!(image.cells().iter().any(|cell| rule.point_in_cell(&q, cell)));
        let back = rule.apply_t_point(&q, -m).unwrap();
        prop_assert_eq!(rule.coarsen_point(&back, p.stage).unwrap(), p);
    }

    #[test]
    fn set_algebra_laws(x in cells(), y in cells()) {
        let rule = Rule::paper();
        let a = set(&rule, &x);
        let b = set(&rule, &y);
        let i = rule.intersect(&a, &b);
        let d = rule.difference(&a, &b);
        prop_assert!(rule.is_subset(&i, &a) && rule.is_subset(&i, &b));
        prop_assert_eq!(rule.measure(&i) + rule.measure(&d), rule.measure(&a));
        prop_assert_eq!(rule.union(&i, &d), a.clone());
        prop_assert_eq!(rule.measure(&rule.union(&a, &b)), rule.measure(&a) + rule.measure(&b) - rule.measure(&i));
    }
}

#[test]
fn hand_unfolded_images() {
    let rule = Rule::paper();
    let c = |n: u32, j: u64| Cell::new(n, j);
    let t = |s: Cell, m: u64| rule.translate(&rule.cell_set([s]), m);
    let stair = vec![c(3, 6), c(3, 12), c(3, 24), c(3, 30)];
    assert_eq!(t(c(2, 5), 1).cells(), stair.as_slice());
    assert_eq!(t(c(2, 0), 6).cells(), stair.as_slice());
    assert_eq!(
        t(c(2, 0), 7).cells(),
        [c(3, 7), c(3, 13), c(3, 25), c(4, 31), c(4, 62), c(4, 124), c(4, 155)]
    );
    assert_eq!(t(c(2, 0), 0).cells(), [c(2, 0)]);
}

#[test]
fn ancestry_and_canonical_form() {
    let rule = Rule::paper();
    assert_eq!(rule.ancestor_level(&Cell::new(3, 7u32), 2), Ancestry::Level(BigUint::from(1u32)));
    assert_eq!(rule.ancestor_level(&Cell::new(3, 6u32), 2), Ancestry::Level(BigUint::from(0u32)));
    assert_eq!(rule.ancestor_level(&Cell::new(3, 12u32), 2), Ancestry::SpacerOrigin(3));
    let children = rule.refine(&Cell::new(2, 3u32));
    assert_eq!(rule.cell_set(children), rule.cell_set([Cell::new(2, 3u32)]));
    let partial = rule.cell_set(rule.refine(&Cell::new(2, 3u32)).into_iter().take(3));
    assert_eq!(partial.len(), 3);
}

#[test]
fn deep_chains_use_big_indices() {
    let rule = Rule::paper();
    let image = rule.translate(&rule.cell_set([Cell::new(1, 0u32)]), 2000u32);
    assert!(image.max_stage().unwrap() > 40);
    assert!(image.cells().iter().any(|c| c.index.to_u64().is_none()));
    assert_eq!(rule.measure(&image), BigRational::from_integer(1.into()));
}

#[test]
fn inverse_of_the_base_needs_depth() {
    let rule = Rule::paper();
    let base = rule.cell_set([Cell::new(1, 0u32)]);
    let (shallow, r1) = rule.translate_inverse(&base, 3u32, 2);
    let (deep, r2) = rule.translate_inverse(&base, 3u32, 8);
    assert!(r2 < r1);
    assert_eq!(rule.measure(&shallow) + r1, BigRational::from_integer(1.into()));
    assert_eq!(rule.measure(&deep) + r2, BigRational::from_integer(1.into()));
    assert_eq!(rule.translate(&deep, 3u32), rule.intersect(&rule.translate(&deep, 3u32), &base));
}
