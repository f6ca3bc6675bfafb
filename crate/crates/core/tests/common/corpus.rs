//! Randomly generated bracket tables labelled by independent oracles.
//!
//! Three families, each checked directly on structure constants (never through the CE algebra):
//! constant brackets on a rank-3 module (Jacobi), linear anchors on the plane with a
//! rank-2 bracket (anchor morphism), and a rank-1 action on the Koszul complex of `x²y`
//! (compatibility of the anchor with the base differential).

use bvk_core::algebroid::AlgebroidPresentation;
use bvk_core::critical_locus::koszul_complex;
use bvk_core::gca::Element;
use bvk_core::Derivation;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{polynomial_ring, q};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Jacobi,
    Anchor,
    Leibniz,
}

impl Family {
    /// Identity the validator should name when a table of this family is defective.
    pub fn identity(self) -> &'static str {
        match self {
            Family::Jacobi => "jacobi",
            Family::Anchor => "anchor_morphism",
            Family::Leibniz => "leibniz",
        }
    }
}

pub struct Table {
    pub family: Family,
    pub valid: bool,
    pub algebroid: AlgebroidPresentation,
    pub label: String,
}

fn small(rng: &mut StdRng, zero_bias: f64) -> i64 {
    if rng.gen_bool(zero_bias) {
        0
    } else if rng.gen_bool(0.5) {
        1
    } else {
        -1
    }
}

/// `[e_i, e_j] = Σ_k c[i][j][k] e_k`, antisymmetric in `i, j`.
type Structure = [[[i64; 3]; 3]; 3];

fn jacobi_holds(c: &Structure) -> bool {
    // [[e_i,e_j],e_k] + [[e_j,e_k],e_i] + [[e_k,e_i],e_j] for the one independent triple
    let br = |v: [i64; 3], k: usize| -> [i64; 3] {
        let mut out = [0; 3];
        for (l, &vl) in v.iter().enumerate() {
            for m in 0..3 {
                out[m] += vl * c[l][k][m];
            }
        }
        out
    };
    let (i, j, k) = (0, 1, 2);
    let mut total = [0; 3];
    for (a, b, d) in [(i, j, k), (j, k, i), (k, i, j)] {
        let t = br(c[a][b], d);
        for m in 0..3 {
            total[m] += t[m];
        }
    }
    total == [0; 3]
}

pub fn jacobi_table(rng: &mut StdRng) -> Table {
    let mut c: Structure = [[[0; 3]; 3]; 3];
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        for k in 0..3 {
            let v = small(rng, 0.65);
            c[i][j][k] = v;
            c[j][i][k] = -v;
        }
    }
    let valid = jacobi_holds(&c);
    let mut a = AlgebroidPresentation::new(polynomial_ring(&["x"]), &[("a", 0), ("b", 0), ("c", 0)]).unwrap();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        a.set_bracket(i, j, c[i][j].iter().map(|&v| Element::constant(q(v))).collect()).unwrap();
    }
    Table { family: Family::Jacobi, valid, label: format!("brackets {:?}", [c[0][1], c[0][2], c[1][2]]), algebroid: a }
}

type Mat2 = [[i64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// The linear field `X_M = Σ M_ij x_j ∂_i` satisfies `[X_A, X_B] = X_{BA - AB}`.
fn anchor_holds(a: &Mat2, b: &Mat2, alpha: i64, beta: i64) -> bool {
    let (ba, ab) = (mat_mul(b, a), mat_mul(a, b));
    (0..2).all(|i| (0..2).all(|j| ba[i][j] - ab[i][j] == alpha * a[i][j] + beta * b[i][j]))
}

fn linear_field(base: &bvk_core::Algebra, m: &Mat2) -> Derivation {
    let mut d = Derivation::zero(base, 0);
    for i in 0..2 {
        let mut img = Element::zero();
        for j in 0..2 {
            img.add_scaled(&Element::gen(j), &q(m[i][j]));
        }
        d.set(base, i, img).unwrap();
    }
    d
}

pub fn anchor_table(rng: &mut StdRng) -> Table {
    let mut m = || -> Mat2 { [[small(rng, 0.5), small(rng, 0.5)], [small(rng, 0.5), small(rng, 0.5)]] };
    let (ma, mb) = (m(), m());
    let (alpha, beta) = (small(rng, 0.5), small(rng, 0.5));
    let valid = anchor_holds(&ma, &mb, alpha, beta);
    let mut a = AlgebroidPresentation::new(polynomial_ring(&["x", "y"]), &[("a", 0), ("b", 0)]).unwrap();
    let base = a.base.alg.clone();
    a.set_anchor(0, linear_field(&base, &ma)).unwrap();
    a.set_anchor(1, linear_field(&base, &mb)).unwrap();
    a.set_bracket(0, 1, vec![Element::constant(q(alpha)), Element::constant(q(beta))]).unwrap();
    Table {
        family: Family::Anchor,
        valid,
        label: format!("anchors {ma:?} {mb:?}, [a,b] = {alpha}a + {beta}b"),
        algebroid: a,
    }
}

pub fn leibniz_table(rng: &mut StdRng) -> Table {
    let (p, qq) = (rng.gen_range(-2i64..=2), rng.gen_range(-2i64..=2));
    let mut r = |exact: i64| if rng.gen_bool(0.6) { exact } else { rng.gen_range(-3i64..=3) };
    let (rx, ry) = (r(p + qq), r(2 * p));
    // δξ_x = 2xy and δξ_y = x², so ρ commutes with δ iff r_x = p + q and r_y = 2p
    let valid = rx == p + qq && ry == 2 * p;
    let k = koszul_complex(&["x", "y"], "x^2*y").unwrap();
    let mut a = AlgebroidPresentation::new(k.pres, &[("e", 0)]).unwrap();
    let alg = a.base.alg.clone();
    let mut d = Derivation::zero(&alg, 0);
    for (name, c) in [("x", p), ("y", qq), ("xi_x", rx), ("xi_y", ry)] {
        let g = alg.index_of(name).unwrap();
        d.set(&alg, g, Element::gen(g).scale(&q(c))).unwrap();
    }
    a.set_anchor(0, d).unwrap();
    Table {
        family: Family::Leibniz,
        valid,
        label: format!("weights ({p}, {qq}), antifield weights ({rx}, {ry})"),
        algebroid: a,
    }
}

fn draw(family: Family, rng: &mut StdRng) -> Table {
    match family {
        Family::Jacobi => jacobi_table(rng),
        Family::Anchor => anchor_table(rng),
        Family::Leibniz => leibniz_table(rng),
    }
}

/// Fifty tables, twenty-five valid and twenty-five defective, spread over the three families.
pub fn corpus(seed: u64) -> Vec<Table> {
    let mut rng = StdRng::seed_from_u64(seed);
    // (family, valid wanted, defective wanted)
    let quotas = [(Family::Jacobi, 8, 9), (Family::Anchor, 9, 8), (Family::Leibniz, 8, 8)];
    let mut out = Vec::new();
    for (family, mut good, mut bad) in quotas {
        while good + bad > 0 {
            let t = draw(family, &mut rng);
            if t.valid && good > 0 {
                good -= 1;
                out.push(t);
            } else if !t.valid && bad > 0 {
                bad -= 1;
                out.push(t);
            }
        }
    }
    out
}

/// A single table of the given family from a seed, for property tests.
pub fn table(family: Family, seed: u64) -> Table {
    draw(family, &mut StdRng::seed_from_u64(seed))
}
