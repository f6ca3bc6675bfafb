mod common;

use bvk_core::algebroid::{
    base_change, base_change_ce, ce_algebra, transfer_linfty, validate_algebroid, ModuleRetract, RingMap,
};
use bvk_core::derham::GradedMixed;
use bvk_core::{Derivation, DgaPresentation, TruncationBounds};
use common::corpus::{corpus, table, Family};
use common::polynomial_ring;
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Jacobi), Just(Family::Anchor), Just(Family::Leibniz)]
}

fn bounds() -> TruncationBounds {
    TruncationBounds::new(4, -3, 1, 3).unwrap()
}

fn images_by_name(p: &DgaPresentation) -> Vec<(String, String)> {
    (0..p.alg.len())
        .map(|g| {
            let img = p.differential.image(g).cloned().unwrap_or_default();
            (p.alg.name(g).to_string(), p.alg.format(&img))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn square_zero_iff_axioms(fam in family(), seed in any::<u64>()) {
        let t = table(fam, seed);
        let ce = ce_algebra(&t.algebroid, 3).unwrap();
        prop_assert_eq!(ce.pres.square_zero(Some(3)).unwrap().holds, t.valid, "{}", t.label);
        let report = validate_algebroid(&t.algebroid, &bounds()).unwrap();
        prop_assert_eq!(report.valid, t.valid);
        if !t.valid {
            prop_assert!(report.failures.iter().any(|f| f.identity == fam.identity()), "{:?}", report.failures);
        }
    }

    #[test]
    fn weight_split_is_graded_mixed(fam in family(), seed in any::<u64>()) {
        let t = table(fam, seed);
        let ce = ce_algebra(&t.algebroid, 3).unwrap();
        let parts = ce.weight_split();
        let mut sum = Derivation::zero(&ce.pres.alg, 1);
        for p in &parts {
            sum = sum.add(p).unwrap();
        }
        prop_assert_eq!(&sum, &ce.pres.differential);
        let check = GradedMixed::from_ce(&ce).check().unwrap();
        prop_assert_eq!(check.holds, t.valid);
    }
}

#[test]
fn corpus_is_balanced_and_deterministic() {
    let c = corpus(7);
    assert_eq!(c.len(), 50);
    assert_eq!(c.iter().filter(|t| t.valid).count(), 25);
    for fam in [Family::Jacobi, Family::Anchor, Family::Leibniz] {
        assert!(c.iter().any(|t| t.family == fam && !t.valid));
        assert!(c.iter().any(|t| t.family == fam && t.valid));
    }
    let labels: Vec<String> = c.iter().map(|t| t.label.clone()).collect();
    assert_eq!(labels, corpus(7).iter().map(|t| t.label.clone()).collect::<Vec<_>>());
}

#[test]
fn base_change_identity_and_composition() {
    let mid = polynomial_ring(&["x", "y", "z"]);
    let last = polynomial_ring(&["x", "y", "z", "w"]);
    for t in corpus(11).into_iter().filter(|t| t.valid && t.family == Family::Anchor) {
        let a = &t.algebroid;
        let id = RingMap::by_name(a.base.clone(), a.base.clone()).unwrap();
        let same = base_change_ce(a, &id, 3).unwrap();
        assert_eq!(same.pres.differential, ce_algebra(a, 3).unwrap().pres.differential, "{}", t.label);

        let f = RingMap::by_name(a.base.clone(), mid.clone()).unwrap();
        let g = RingMap::by_name(mid.clone(), last.clone()).unwrap();
        let step = base_change(&base_change(a, &f).unwrap(), &g).unwrap();
        let direct = base_change(a, &RingMap::by_name(a.base.clone(), last.clone()).unwrap()).unwrap();
        let (cs, cd) = (ce_algebra(&step, 3).unwrap(), ce_algebra(&direct, 3).unwrap());
        assert_eq!(images_by_name(&cs.pres), images_by_name(&cd.pres), "{}", t.label);
        assert!(cd.pres.square_zero(Some(3)).unwrap().holds);
    }
}

#[test]
fn identity_transfer_reproduces_the_brackets() {
    for t in corpus(13).into_iter().filter(|t| t.valid) {
        let a = &t.algebroid;
        let tr = transfer_linfty(a, &ModuleRetract::identity(a), 2).unwrap();
        for x in 0..a.rank() {
            for y in x..a.rank() {
                assert_eq!(tr.algebroid.format_lvec(&tr.algebroid.bracket(x, y)), a.format_lvec(&a.bracket(x, y)));
            }
        }
        assert_eq!(images_by_name(&tr.ce.pres), images_by_name(&ce_algebra(a, 2).unwrap().pres), "{}", t.label);
    }
}
