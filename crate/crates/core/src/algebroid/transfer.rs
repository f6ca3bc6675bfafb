//! Homotopy transfer of algebroid structure along a deformation retract of the underlying
//! modules, computed by perturbing the CE side and reading brackets off weight components.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use super::{ce_algebra, multiset_factor, AlgebroidPresentation, Ce};
use crate::derivation::Derivation;
use crate::error::{Error, Result};
use crate::gca::{Algebra, Element, Generator, Monomial, Q};
use crate::linalg::Matrix;

/// Constant-coefficient retract of free modules on the module generators. Matrices act on
/// coefficient columns: column `j` of `i` is `i(l_j)` in the big basis.
#[derive(Clone, Debug)]
pub struct ModuleRetract {
    pub small: Vec<(String, i64)>,
    pub i: Matrix,
    pub p: Matrix,
    pub h: Matrix,
}

#[derive(Clone, Debug)]
pub struct Transferred {
    pub algebroid: AlgebroidPresentation,
    pub ce: Ce,
}

fn differential_matrix(a: &AlgebroidPresentation) -> Result<Matrix> {
    let n = a.rank();
    let mut d = Matrix::zeros(n, n);
    for (&src, v) in &a.differential {
        for (c, f) in v.iter().enumerate() {
            if f.terms().any(|(m, _)| !m.is_one()) {
                return Err(Error::Invalid("transfer needs a constant internal differential".into()));
            }
            d.set(c, src, f.constant_part());
        }
    }
    Ok(d)
}

fn check_degree(m: &Matrix, row_deg: &[i64], col_deg: &[i64], shift: i64, what: &str) -> Result<()> {
    for r in 0..m.rows {
        for c in 0..m.cols {
            if !m.get(r, c).is_zero() && row_deg[r] != col_deg[c] + shift {
                return Err(Error::Degree(format!("{what} is not homogeneous of degree {shift}")));
            }
        }
    }
    Ok(())
}

impl ModuleRetract {
    /// Checks `pi = 1`, `di = i d'`, `pd = d' p`, `1 - ip = dh + hd` and the side conditions,
    /// returning the small differential `d' = p d i`.
    pub fn verify(&self, a: &AlgebroidPresentation) -> Result<Matrix> {
        let (n, m) = (a.rank(), self.small.len());
        if (self.i.rows, self.i.cols, self.p.rows, self.p.cols, self.h.rows, self.h.cols) != (n, m, m, n, n, n) {
            return Err(Error::Invalid("retract matrices have the wrong shape".into()));
        }
        let big: Vec<i64> = a.module_gens.iter().map(|g| g.degree).collect();
        let small: Vec<i64> = self.small.iter().map(|s| s.1).collect();
        check_degree(&self.i, &big, &small, 0, "i")?;
        check_degree(&self.p, &small, &big, 0, "p")?;
        check_degree(&self.h, &big, &big, -1, "h")?;
        let d = differential_matrix(a)?;
        let ds = self.p.mul(&d).mul(&self.i);
        let fail = |what: &str| Err(Error::Invalid(format!("retract identity fails: {what}")));
        if self.p.mul(&self.i) != Matrix::identity(m) {
            return fail("pi = 1");
        }
        if d.mul(&self.i) != self.i.mul(&ds) {
            return fail("di = i d'");
        }
        if self.p.mul(&d) != ds.mul(&self.p) {
            return fail("pd = d'p");
        }
        let lhs = Matrix::identity(n).sub_mat(&self.i.mul(&self.p));
        let dh = d.mul(&self.h);
        let hd = self.h.mul(&d);
        let mut rhs = dh.clone();
        for r in 0..n {
            for c in 0..n {
                rhs.set(r, c, dh.get(r, c) + hd.get(r, c));
            }
        }
        if lhs != rhs {
            return fail("1 - ip = dh + hd");
        }
        if !self.h.mul(&self.h).is_zero() || !self.h.mul(&self.i).is_zero() || !self.p.mul(&self.h).is_zero() {
            return fail("side conditions h^2 = hi = ph = 0");
        }
        Ok(ds)
    }

    pub fn identity(a: &AlgebroidPresentation) -> Self {
        let n = a.rank();
        ModuleRetract {
            small: a.module_gens.iter().map(|g| (g.name.clone(), g.degree)).collect(),
            i: Matrix::identity(n),
            p: Matrix::identity(n),
            h: Matrix::zeros(n, n),
        }
    }
}

/// Basis `{i(l_j)} ∪ {h(u_k)} ∪ {u_k}` with `u_k` spanning `im(dh)`; returns (columns, #fiber pairs).
fn adapted_basis(a: &AlgebroidPresentation, r: &ModuleRetract) -> Result<(Vec<Vec<Q>>, usize)> {
    let n = a.rank();
    let d = differential_matrix(a)?;
    let dh = d.mul(&r.h);
    let mut us: Vec<Vec<Q>> = Vec::new();
    for c in 0..n {
        let col = dh.col(c);
        if col.iter().all(Zero::is_zero) {
            continue;
        }
        let mut trial = us.clone();
        trial.push(col.clone());
        if Matrix::from_cols(n, &trial).rank() == trial.len() {
            us.push(col);
        }
    }
    let ws: Vec<Vec<Q>> = us.iter().map(|u| r.h.mul_vec(u)).collect();
    let mut cols: Vec<Vec<Q>> = (0..r.small.len()).map(|j| r.i.col(j)).collect();
    cols.extend(ws);
    cols.extend(us.iter().cloned());
    if cols.len() != n || Matrix::from_cols(n, &cols).rank() != n {
        return Err(Error::Invalid("retract does not split the module as i(small) plus an acyclic part".into()));
    }
    Ok((cols, us.len()))
}

fn homogeneous_degree(a: &AlgebroidPresentation, v: &[Q]) -> i64 {
    let k = v.iter().position(|x| !x.is_zero()).expect("basis vectors are nonzero");
    a.module_gens[k].degree
}

/// Transfers the algebroid structure along `r`, keeping brackets up to `arity_max`.
pub fn transfer_linfty(a: &AlgebroidPresentation, r: &ModuleRetract, arity_max: u32) -> Result<Transferred> {
    r.verify(a)?;
    let arity_max = arity_max.max(1);
    let n = a.rank();
    let m = r.small.len();
    let (cols, k) = adapted_basis(a, r)?;
    let b = Matrix::from_cols(n, &cols);
    let mut binv_cols = Vec::new();
    for e in 0..n {
        let mut unit = vec![Q::zero(); n];
        unit[e] = Q::one();
        binv_cols.push(b.solve(&unit).expect("basis is invertible"));
    }
    let binv = Matrix::from_cols(n, &binv_cols);

    let ce = ce_algebra(a, arity_max)?;
    let nb = ce.base_len;

    let mut alg2: Algebra = a.base.alg.clone();
    for (name, deg) in &r.small {
        alg2.add(Generator::ghost(format!("eta_{name}"), 1 - deg))?;
    }
    for (t, v) in cols.iter().enumerate().skip(m) {
        let label = if t < m + k { format!("__w{}", t - m) } else { format!("__u{}", t - m - k) };
        alg2.add(Generator::ghost(label, 1 - homogeneous_degree(a, v)))?;
    }
    let fiber = |g: usize| g >= nb + m;
    let fiber_count = |mono: &Monomial| -> u32 { mono.factors().iter().filter(|f| fiber(f.0)).map(|f| f.1).sum() };

    // φ: CE(big) → CE(adapted), η^a ↦ Σ_b B_ab η'^b
    let mut phi = Vec::new();
    for g in 0..nb {
        phi.push(Element::gen(g));
    }
    for ai in 0..n {
        let mut img = Element::zero();
        for bi in 0..n {
            img.add_term(Monomial::gen(nb + bi), b.get(ai, bi).clone());
        }
        phi.push(img);
    }
    let ce_alg = &ce.pres.alg;
    let to_new = |e: &Element| ce_alg.map_to(&alg2, e, &phi);
    let mut dnew = Derivation::zero(&alg2, 1);
    for g in 0..nb {
        let img = to_new(&ce.pres.d(&Element::gen(g))?)?;
        dnew.set(&alg2, g, img.filter(|mm| alg2.mono_weight(mm) <= arity_max))?;
    }
    for bi in 0..n {
        let mut pre = Element::zero();
        for ai in 0..n {
            pre.add_term(Monomial::gen(ce.ghosts[ai]), binv.get(bi, ai).clone());
        }
        let img = to_new(&ce.pres.d(&pre)?)?;
        dnew.set(&alg2, nb + bi, img.filter(|mm| alg2.mono_weight(mm) <= arity_max))?;
    }
    let dlin = dnew.filter_images(|g, mm| alg2.mono_weight(mm) == alg2.gen(g).weight);
    let delta = dnew.sub(&dlin)?;

    // K: η_w ↦ -η_u, so that [D_lin, K] counts fiber letters
    let mut kd = Derivation::zero(&alg2, -1);
    for t in 0..k {
        kd.set(&alg2, nb + m + t, Element::gen(nb + m + k + t).scale(&-Q::one()))?;
    }
    for g in 0..alg2.len() {
        let x = Element::gen(g);
        let comm = &dlin.apply(&alg2, &kd.apply(&alg2, &x)?)? + &kd.apply(&alg2, &dlin.apply(&alg2, &x)?)?;
        let want = if fiber(g) { x } else { Element::zero() };
        if comm != want {
            return Err(Error::Invariant(format!("fiber homotopy fails on `{}`", alg2.name(g))));
        }
    }
    let hmap = |e: &Element| -> Result<Element> {
        let mut out = Element::zero();
        for (mono, c) in e.terms() {
            let nf = fiber_count(mono);
            if nf == 0 {
                continue;
            }
            let km = kd.apply_mono(&alg2, mono)?;
            out.add_scaled(&km, &(c / Q::from_integer(nf.into())));
        }
        Ok(out)
    };

    // D_∞(s) = D_lin(s) + P Σ_k Δ(-HΔ)^k (s) on small generators
    let small_gens = nb + m;
    let mut dinf: BTreeMap<usize, Element> = BTreeMap::new();
    for s in 0..small_gens {
        let x0 = Element::gen(s);
        let mut total = dlin.apply(&alg2, &x0)?;
        let mut x = delta.apply(&alg2, &x0)?;
        let mut guard = 0;
        while !x.is_zero() {
            total += &x;
            let hx = hmap(&x)?;
            x = delta.apply(&alg2, &hx)?.scale(&-Q::one()).filter(|mm| alg2.mono_weight(mm) <= arity_max);
            guard += 1;
            if guard > arity_max as usize + 2 {
                return Err(Error::Invariant("perturbation series does not terminate".into()));
            }
        }
        let projected = total.filter(|mm| fiber_count(mm) == 0 && alg2.mono_weight(mm) <= arity_max);
        dinf.insert(s, projected);
    }

    let spec: Vec<(&str, i64)> = r.small.iter().map(|(s, d)| (s.as_str(), *d)).collect();
    let mut out = AlgebroidPresentation::new(a.base.clone(), &spec)?;
    let mut anchors: Vec<Vec<Element>> = vec![vec![Element::zero(); nb]; m];
    for (&s, img) in &dinf {
        for (mono, c) in img.terms() {
            let (base_part, ghosts): (Vec<_>, Vec<_>) = mono.factors().iter().copied().partition(|f| f.0 < nb);
            let bm = Monomial::from_sorted(base_part);
            let gm = Monomial::from_sorted(ghosts.clone());
            let sign_odd = alg2.mono_is_odd(&bm) && alg2.mono_is_odd(&gm);
            let c = if sign_odd { -c.clone() } else { c.clone() };
            let key: Vec<usize> =
                ghosts.iter().flat_map(|&(g, e)| std::iter::repeat(g - nb).take(e as usize)).collect();
            if s < nb {
                match key.len() {
                    0 => {}
                    1 => anchors[key[0]][s].add_term(bm, c),
                    _ => return Err(Error::Invalid("transfer produced higher anchor terms".into())),
                }
                continue;
            }
            let target = s - nb;
            let coeff = Element::term(bm, -c / multiset_factor(&key));
            match key.len() {
                0 => return Err(Error::Invariant("ghost differential has a weight-0 term".into())),
                1 => {
                    let e = out.differential.entry(key[0]).or_insert_with(|| vec![Element::zero(); m]);
                    e[target] += &coeff;
                }
                2 => {
                    let e = out.brackets.entry((key[0], key[1])).or_insert_with(|| vec![Element::zero(); m]);
                    e[target] += &coeff;
                }
                _ => {
                    let e = out.higher_brackets.entry(key.clone()).or_insert_with(|| vec![Element::zero(); m]);
                    e[target] += &coeff;
                }
            }
        }
    }
    for (j, rows) in anchors.into_iter().enumerate() {
        let mut v = Derivation::zero(&a.base.alg, out.module_gens[j].degree);
        for (g, img) in rows.into_iter().enumerate() {
            v.set(&a.base.alg, g, img)?;
        }
        out.set_anchor(j, v)?;
    }
    let ce_out = ce_algebra(&out, arity_max)?;
    for (&s, img) in &dinf {
        let got = ce_out.pres.differential.image(s).cloned().unwrap_or_default();
        if &got != img {
            return Err(Error::Invariant(format!(
                "transferred CE differential is not of algebroid form on `{}`",
                alg2.name(s)
            )));
        }
    }
    let sz = ce_out.pres.square_zero(Some(arity_max))?;
    if !sz.holds {
        return Err(Error::NotSquareZero(sz.witness.unwrap_or_default()));
    }
    Ok(Transferred { algebroid: out, ce: ce_out })
}
