mod common;

use bvk_core::critical_locus::{almost_critical, hessian_form, koszul_from, koszul_tate, tangent_complex_crit};
use bvk_core::gca::{Algebra, Element, Monomial};
use bvk_core::TruncationBounds;
use common::*;
use proptest::prelude::*;

/// Monomials in `vars` of total degree at most `d`, by plain nested enumeration.
fn monomials(vars: &[usize], d: u32) -> Vec<Vec<(usize, u32)>> {
    let mut out = vec![vec![]];
    for &v in vars {
        let mut next = Vec::new();
        for m in &out {
            let used: u32 = m.iter().map(|(_, e)| e).sum();
            for e in 0..=(d - used) {
                let mut m2 = m.clone();
                if e > 0 {
                    m2.push((v, e));
                }
                next.push(m2);
            }
        }
        out = next;
    }
    out
}

/// `dim (A/I)_{≤d}` for the ideal of partials of a homogeneous `f` of degree `n`.
fn quotient_dim(alg: &Algebra, vars: &[usize], partials: &[Element], n: u32, d: u32) -> usize {
    let polys = monomials(vars, d);
    let index: std::collections::HashMap<Monomial, usize> =
        polys.iter().enumerate().map(|(i, m)| (Monomial::from_sorted(m.clone()), i)).collect();
    let mut rows = Vec::new();
    if d + 1 >= n {
        for m in monomials(vars, d + 1 - n) {
            let me = Element::term(Monomial::from_sorted(m), q(1));
            for p in partials {
                let prod = alg.mul(&me, p).unwrap();
                let mut row = vec![q(0); polys.len()];
                for (t, c) in prod.terms() {
                    row[index[t]] = c.clone();
                }
                rows.push(row);
            }
        }
    }
    polys.len() - dense_rank(rows)
}

fn homogeneous_poly(vars: usize, n: u32) -> impl Strategy<Value = Vec<(Vec<u32>, i64)>> {
    prop::collection::vec((0..=n, -3i64..=3), 1..=4).prop_map(move |terms| {
        terms
            .into_iter()
            .map(|(a, c)| {
                let mut e = vec![0; vars];
                e[0] = a;
                if vars > 1 {
                    e[1] = n - a;
                }
                (e, c)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn koszul_squares_to_zero(f in poly_coeffs(3, 6)) {
        let base = polynomial_ring(&["x", "y", "z"]);
        let k = koszul_from(&base.alg, &polynomial(&[0, 1, 2], &f, 5)).unwrap();
        prop_assert!(k.pres.square_zero(None).unwrap().holds);
    }

    #[test]
    fn tate_clears_and_matches_quotient(n in 2u32..=3, f in homogeneous_poly(2, 3), d in 2u32..=4) {
        let f: Vec<(Vec<u32>, i64)> = f.into_iter().map(|(e, c)| (vec![e[0].min(n), n - e[0].min(n)], c)).collect();
        let base = polynomial_ring(&["x", "y"]);
        let fe = polynomial(&[0, 1], &f, n);
        prop_assume!(!fe.is_zero());
        let k = koszul_from(&base.alg, &fe).unwrap();
        let bounds = TruncationBounds::new(d, -3, 0, 0).unwrap();
        let t = koszul_tate(&k, &bounds, 3).unwrap();
        for h in &t.cohomology {
            if h.degree < 0 && !t.uncleared.contains(&h.degree) {
                prop_assert_eq!(h.dim, 0, "degree {}", h.degree);
            }
        }
        let partials: Vec<Element> =
            k.vars.iter().map(|&v| bvk_core::derivation::partial(&k.pres.alg, &k.f, v).unwrap()).collect();
        let h0 = t.cohomology.iter().find(|h| h.degree == 0).unwrap();
        prop_assert_eq!(h0.dim, quotient_dim(&k.pres.alg, &k.vars, &partials, n, d));
    }

    #[test]
    fn syzygy_extension_commutes(f in poly_coeffs(2, 5)) {
        let base = polynomial_ring(&["x", "y"]);
        let fe = polynomial(&[0, 1], &f, 4);
        let k = koszul_from(&base.alg, &fe).unwrap();
        let alg = &k.pres.alg;
        let fx = bvk_core::derivation::partial(alg, &k.f, 0).unwrap();
        let fy = bvk_core::derivation::partial(alg, &k.f, 1).unwrap();
        let syz = &alg.mul(&fy, &Element::gen(k.xis[0])).unwrap() - &alg.mul(&fx, &Element::gen(k.xis[1])).unwrap();
        let src = alg.format(&syz);
        let s = almost_critical(&k, &[("c", -2, src.as_str())]).unwrap();
        prop_assert!(s.check_maps().unwrap());
        prop_assert!(s.pres.square_zero(None).unwrap().holds);
    }

    #[test]
    fn connecting_map_is_the_hessian(f in poly_coeffs(3, 6)) {
        let base = polynomial_ring(&["x", "y", "z"]);
        let fe = polynomial(&[0, 1, 2], &f, 4);
        // shift so that the origin is critical
        let linear: Vec<Monomial> = (0..3).map(Monomial::gen).collect();
        let fe = fe.filter(|m| !m.is_one() && !linear.contains(m));
        let src = base.alg.format(&fe);
        let k = koszul_from(&base.alg, &fe).unwrap();
        let t = tangent_complex_crit(&k).unwrap();
        let h = hessian_form(&["x", "y", "z"], &src, &[q(0), q(0), q(0)]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(t.alg.format(&t.connecting[i][j]), h.matrix[i][j].clone());
            }
        }
    }
}
