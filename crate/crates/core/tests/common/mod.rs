#![allow(dead_code)]

use bvk_core::gca::{Algebra, Element, Generator, Monomial, Q};
use bvk_core::{DgaPresentation, Derivation, Provenance};
use num_rational::BigRational;
use proptest::prelude::*;

pub mod corpus;

pub fn q(n: i64) -> Q {
    BigRational::from_integer(n.into())
}

pub fn qf(n: i64, d: i64) -> Q {
    BigRational::new(n.into(), d.into())
}

/// One raw term: exponent per generator and a small rational coefficient.
pub type RawTerm = (Vec<u32>, i64, i64);

fn exponent() -> impl Strategy<Value = u32> {
    prop_oneof![6 => Just(0u32), 3 => Just(1u32), 1 => Just(2u32)]
}

pub fn raw_terms(n_gens: usize, max_terms: usize) -> impl Strategy<Value = Vec<RawTerm>> {
    prop::collection::vec((prop::collection::vec(exponent(), n_gens), -4i64..=4, 1i64..=3), 1..=max_terms)
}

/// Builds `Σ c · g_0^{e_0} g_1^{e_1} ...`, multiplying letters in a scrambled order so
/// that reordering signs are exercised.
pub fn build(alg: &Algebra, raw: &[RawTerm]) -> Element {
    let mut out = Element::zero();
    for (exps, n, d) in raw {
        let mut letters: Vec<(usize, u32)> = exps.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, &e)| (i, e)).collect();
        letters.reverse();
        let mono = alg.normalize_indices(&letters).unwrap();
        out.add_scaled(&mono, &qf(*n, *d));
    }
    out
}

/// Keeps the terms sharing the degree of the first term.
pub fn homogeneous(alg: &Algebra, e: &Element) -> Element {
    let Some((m, _)) = e.terms().next() else { return Element::zero() };
    let k = alg.mono_degree(m);
    e.filter(|t| alg.mono_degree(t) == k)
}

/// Keeps only the terms of degree `k`.
pub fn of_degree(alg: &Algebra, e: &Element, k: i64) -> Element {
    e.filter(|t| alg.mono_degree(t) == k)
}

pub fn deg(alg: &Algebra, e: &Element) -> i64 {
    alg.degree(e).unwrap_or(0)
}

pub fn sign(odd: bool) -> Q {
    if odd {
        q(-1)
    } else {
        q(1)
    }
}

/// `x, y` (degree 0), `xi` (-1), `c` (-2), `eta` (1), `t` (2).
pub fn mixed_algebra() -> Algebra {
    let mut a = Algebra::new();
    a.add(Generator::base("x")).unwrap();
    a.add(Generator::base("y")).unwrap();
    a.add(Generator::extra("xi", -1)).unwrap();
    a.add(Generator::extra("c", -2)).unwrap();
    a.add(Generator::ghost("eta", 1)).unwrap();
    a.add(Generator::extra("t", 2)).unwrap();
    a
}

/// A derivation of degree `d` with images assembled from raw terms, one batch per generator.
pub fn derivation(alg: &Algebra, d: i64, raws: &[Vec<RawTerm>]) -> Derivation {
    let mut out = Derivation::zero(alg, d);
    for g in 0..alg.len() {
        let img = raws.get(g).map(|r| build(alg, r)).unwrap_or_default();
        let img = of_degree(alg, &img, alg.gen(g).degree + d);
        out.set(alg, g, img).unwrap();
    }
    out
}

pub fn polynomial_ring(vars: &[&str]) -> DgaPresentation {
    let alg = bvk_core::critical_locus::polynomial_ring(vars).unwrap();
    let d = Derivation::zero(&alg, 1);
    DgaPresentation::new(alg, d, Provenance::Other).unwrap()
}

/// A random polynomial in `vars` of total degree at most `max_deg`.
pub fn polynomial(vars: &[usize], coeffs: &[(Vec<u32>, i64)], max_deg: u32) -> Element {
    let mut out = Element::zero();
    for (exps, c) in coeffs {
        let letters: Vec<(usize, u32)> = vars.iter().zip(exps).filter(|(_, &e)| e > 0).map(|(&v, &e)| (v, e)).collect();
        if letters.iter().map(|(_, e)| e).sum::<u32>() > max_deg {
            continue;
        }
        out.add_term(Monomial::from_sorted(letters), q(*c));
    }
    out
}

pub fn poly_coeffs(n_vars: usize, max_terms: usize) -> impl Strategy<Value = Vec<(Vec<u32>, i64)>> {
    prop::collection::vec((prop::collection::vec(0u32..=3, n_vars), -3i64..=3), 1..=max_terms)
}

/// Rank of a dense rational matrix by plain Gaussian elimination (independent of the crate's linalg).
pub fn dense_rank(mut rows: Vec<Vec<Q>>) -> usize {
    use num_traits::Zero;
    let ncols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..ncols {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else { continue };
        rows.swap(rank, p);
        let pivot = rows[rank][col].clone();
        for r in 0..rows.len() {
            if r != rank && !rows[r][col].is_zero() {
                let f = &rows[r][col] / &pivot;
                for c in col..ncols {
                    let v = &rows[rank][c] * &f;
                    rows[r][c] -= v;
                }
            }
        }
        rank += 1;
    }
    rank
}
