mod common;

use std::collections::{BTreeMap, HashMap};

use bvk_core::critical_locus::koszul_from;
use bvk_core::homology::{basis_enumerate, cohomology, homotopy_cartesian_check, ChainMap, FiniteComplex, Square};
use bvk_core::linalg::Matrix;
use bvk_core::{Q, TruncationBounds};
use common::*;
use num_traits::Zero;
use proptest::prelude::*;

/// An elementary row operation `row_i += c row_j` (i ≠ j) and its inverse.
type Elem = (usize, usize, i64);

fn apply_ops(n: usize, ops: &[Elem]) -> (Matrix, Matrix) {
    let mut g = Matrix::identity(n);
    let mut inv = Matrix::identity(n);
    for &(i, j, c) in ops {
        let (i, j) = (i % n, j % n);
        if i == j {
            continue;
        }
        let mut e = Matrix::identity(n);
        e.set(i, j, q(c));
        let mut ei = Matrix::identity(n);
        ei.set(i, j, q(-c));
        g = e.mul(&g);
        inv = inv.mul(&ei);
    }
    (g, inv)
}

/// A complex on degrees 0..=3 assembled from `h_k` cohomology classes and `r_k` acyclic
/// pairs `C_k → B_{k+1}`, then disguised by random changes of basis.
struct Built {
    c: FiniteComplex,
    h: Vec<usize>,
    g: Vec<Matrix>,
    ginv: Vec<Matrix>,
}

fn build_complex(h: &[usize], r: &[usize], ops: &[Vec<Elem>]) -> Built {
    let n = h.len();
    // V_k = H_k ⊕ B_k ⊕ C_k with B_k = image of C_{k-1}
    let b = |k: usize| if k == 0 { 0 } else { r[k - 1] };
    let c_dim = |k: usize| if k + 1 < n { r[k] } else { 0 };
    let dims: Vec<usize> = (0..n).map(|k| h[k] + b(k) + c_dim(k)).collect();
    let mut g = Vec::new();
    let mut ginv = Vec::new();
    for k in 0..n {
        let (a, ai) = apply_ops(dims[k].max(1), &ops[k]);
        if dims[k] == 0 {
            g.push(Matrix::zeros(0, 0));
            ginv.push(Matrix::zeros(0, 0));
        } else {
            g.push(a);
            ginv.push(ai);
        }
    }
    let mut c = FiniteComplex::new((0..n).map(|k| (k as i64, dims[k])).collect());
    for k in 0..n.saturating_sub(1) {
        let mut d = Matrix::zeros(dims[k + 1], dims[k]);
        for t in 0..c_dim(k) {
            d.set(h[k + 1] + t, h[k] + b(k) + t, q(1));
        }
        let d = g[k + 1].mul(&d).mul(&ginv[k]);
        c.set_diff(k as i64, d).unwrap();
    }
    Built { c, h: h.to_vec(), g, ginv }
}

fn complex_params() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<Vec<Elem>>)> {
    (prop::collection::vec(0usize..=3, 4), prop::collection::vec(0usize..=4, 3))
        .prop_flat_map(|(h, r)| {
            let ops = prop::collection::vec(prop::collection::vec((0usize..12, 0usize..12, -2i64..=2), 0..12), 4);
            (Just(h), Just(r), ops)
        })
}

fn oracle_dim(c: &FiniteComplex, k: i64) -> usize {
    let rows = |m: &Matrix| (0..m.rows).map(|i| m.row(i).to_vec()).collect::<Vec<Vec<Q>>>();
    c.dim(k) - dense_rank(rows(&c.diff(k))) - dense_rank(rows(&c.diff(k - 1)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn finite_cohomology_matches_oracle((h, r, ops) in complex_params()) {
        let b = build_complex(&h, &r, &ops);
        let total: usize = b.c.dims.values().sum();
        prop_assume!(total <= 40);
        b.c.check_square_zero().unwrap();
        for k in 0..4 {
            let got = b.c.cohomology_dim(k);
            prop_assert_eq!(got, oracle_dim(&b.c, k));
            prop_assert_eq!(got, b.h[k as usize]);
        }
    }

    #[test]
    fn rank_nullity_and_cycles(f in poly_coeffs(2, 4), d in 2u32..=4) {
        let base = polynomial_ring(&["x", "y"]);
        let fe = polynomial(&[0, 1], &f, 3);
        let k = koszul_from(&base.alg, &fe).unwrap();
        let bounds = TruncationBounds::new(d, -2, 0, 0).unwrap();
        let rep = cohomology(&k.pres, &bounds).unwrap();
        let alg = &k.pres.alg;
        for h in &rep.degrees {
            let basis = basis_enumerate(alg, h.degree, &bounds).unwrap();
            prop_assert_eq!(basis.len(), h.rank.basis_size);
            // exact image map, targets unbounded
            let images: Vec<_> = basis.iter().map(|m| k.pres.differential.apply_mono(alg, m).unwrap()).collect();
            let mut index = HashMap::new();
            for img in &images {
                for (t, _) in img.terms() {
                    let n = index.len();
                    index.entry(t.clone()).or_insert(n);
                }
            }
            let mut rows = vec![vec![Q::zero(); basis.len()]; index.len()];
            for (j, img) in images.iter().enumerate() {
                for (t, c) in img.terms() {
                    rows[index[t]][j] = c.clone();
                }
            }
            let rank = dense_rank(rows);
            prop_assert_eq!(h.rank.cycles + rank, basis.len());
            prop_assert_eq!(h.dim, h.rank.cycles - h.rank.boundaries);
            prop_assert_eq!(h.dim, h.representatives.len());
            for z in &h.representatives {
                prop_assert!(k.pres.d(z).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn cartesian_when_parallel_maps_are_isomorphisms(
        (h, r, ops) in complex_params(),
        (h2, r2, ops2) in complex_params(),
    ) {
        let a = build_complex(&h, &r, &ops);
        let e = build_complex(&h2, &r2, &ops2);
        prop_assume!(a.c.dims.values().sum::<usize>() + e.c.dims.values().sum::<usize>() <= 30);
        // B = "A in the standard basis" via f = G^{-1}; C = D = A ⊕ E; g inclusion; γ = id
        let mut bcx = FiniteComplex::new(a.c.dims.clone());
        let mut ccx = FiniteComplex::new((0..4).map(|k| (k, a.c.dim(k) + e.c.dim(k))).collect());
        let mut f = ChainMap::zero();
        let mut g = ChainMap::zero();
        let mut beta = ChainMap::zero();
        let mut gamma = ChainMap::zero();
        for k in 0..4usize {
            let ki = k as i64;
            let (na, ne) = (a.c.dim(ki), e.c.dim(ki));
            let incl = |m: &Matrix| {
                let mut out = Matrix::zeros(na + ne, m.cols);
                for i in 0..m.rows {
                    for j in 0..m.cols {
                        out.set(i, j, m.get(i, j).clone());
                    }
                }
                out
            };
            f.components.insert(ki, a.ginv[k].clone());
            g.components.insert(ki, incl(&Matrix::identity(na)));
            beta.components.insert(ki, incl(&a.g[k]));
            gamma.components.insert(ki, Matrix::identity(na + ne));
            if k < 3 {
                let da = a.c.diff(ki);
                bcx.set_diff(ki, a.ginv[k + 1].mul(&da).mul(&a.g[k])).unwrap();
                let de = e.c.diff(ki);
                let (na1, ne1) = (a.c.dim(ki + 1), e.c.dim(ki + 1));
                let mut m = Matrix::zeros(na1 + ne1, na + ne);
                for i in 0..na1 {
                    for j in 0..na {
                        m.set(i, j, da.get(i, j).clone());
                    }
                }
                for i in 0..ne1 {
                    for j in 0..ne {
                        m.set(na1 + i, na + j, de.get(i, j).clone());
                    }
                }
                ccx.set_diff(ki, m).unwrap();
            }
        }
        let dcx = ccx.clone();
        let sq = Square { a: a.c.clone(), b: bcx, c: ccx, d: dcx, f, g, beta, gamma };
        let rep = homotopy_cartesian_check(&sq, (-1, 4)).unwrap();
        prop_assert!(rep.holds, "{:?}", rep.defects);
    }
}

#[test]
fn oracle_sees_a_defect() {
    // sanity check of the construction itself: a nonzero class is counted
    let b = build_complex(&[1, 0, 0, 0], &[1, 0, 0], &[vec![], vec![], vec![], vec![]]);
    let dims: BTreeMap<i64, usize> = b.c.dims.clone();
    assert_eq!(dims[&0], 2);
    assert_eq!(b.c.cohomology_dim(0), 1);
    assert_eq!(oracle_dim(&b.c, 1), 0);
}
