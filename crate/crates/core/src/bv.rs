//! Strict (-1)-shifted symplectic structures, the odd Poisson bracket, the linear-stack
//! retract with its perturbation, BV charges and the classical master equation.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::algebroid::{validate_algebroid, AlgebroidPresentation};
use crate::critical_locus::{evaluate, koszul_from, xi_name};
use crate::derham::{de_rham, DeRham};
use crate::derivation::{partial, Derivation};
use crate::error::{Error, Result};
use crate::gca::{Algebra, Element, GenKind, Generator, Monomial, Q};
use crate::homology::{
    basis_enumerate, homotopy_cartesian_check, CartesianReport, ChainMap, DgaPresentation, FiniteComplex, Provenance,
    Square, TruncationBounds,
};
use crate::linalg::Matrix;

fn sign(odd: bool) -> Q {
    if odd {
        -Q::one()
    } else {
        Q::one()
    }
}

fn odd(n: i64) -> bool {
    n.rem_euclid(2) == 1
}

/// A BV algebra: an almost derived critical locus `S` with ghosts adjoined and paired.
#[derive(Clone, Debug)]
pub struct BvPresentation {
    /// `S`, an almost derived critical locus over `A = Q[x_1..x_n]`.
    pub base_crit: DgaPresentation,
    /// The BV algebra: generators of `S` (same indices) followed by the ghosts.
    pub bv: DgaPresentation,
    pub vars: Vec<usize>,
    pub ghosts: Vec<usize>,
    /// `f`, as an element of the BV algebra.
    pub functional: Element,
    /// Involution on generators; `None` marks an unpaired generator.
    pub pairing: Vec<Option<usize>>,
    pub weight_max: u32,
}

/// Default pairing from names: `xi_<v> ↔ v` and `eta_<c> ↔ c`.
pub fn pairing_by_name(alg: &Algebra) -> Vec<Option<usize>> {
    let mut out = vec![None; alg.len()];
    for i in 0..alg.len() {
        let name = alg.name(i);
        for prefix in ["xi_", "eta_"] {
            if let Some(rest) = name.strip_prefix(prefix) {
                if let Some(j) = alg.index_of(rest) {
                    out[i] = Some(j);
                    out[j] = Some(i);
                }
            }
        }
    }
    out
}

impl BvPresentation {
    /// Assembles and checks the invariants: paired degrees sum to -1, and the ghosts
    /// are exactly the partners of the generators of `S` of degree at most -2.
    pub fn new(
        base_crit: DgaPresentation,
        bv: DgaPresentation,
        ghosts: Vec<usize>,
        functional: Element,
        pairing: Vec<Option<usize>>,
        weight_max: u32,
    ) -> Result<Self> {
        let alg = &bv.alg;
        if pairing.len() != alg.len() {
            return Err(Error::Invalid(format!("pairing covers {} generators, expected {}", pairing.len(), alg.len())));
        }
        for (i, p) in pairing.iter().enumerate() {
            let Some(j) = *p else { continue };
            if j >= alg.len() || pairing[j] != Some(i) || i == j {
                return Err(Error::Invalid(format!("pairing is not an involution at `{}`", alg.name(i))));
            }
            if alg.gen(i).degree + alg.gen(j).degree != -1 {
                return Err(Error::Degree(format!(
                    "paired generators `{}` and `{}` have degrees {} and {}; they must add up to -1",
                    alg.name(i),
                    alg.name(j),
                    alg.gen(i).degree,
                    alg.gen(j).degree
                )));
            }
        }
        let s_len = base_crit.alg.len();
        for (i, g) in base_crit.alg.gens().iter().enumerate() {
            if alg.name(i) != g.name {
                return Err(Error::MismatchedAlgebra(i));
            }
        }
        let antighosts: Vec<usize> = (0..s_len).filter(|&i| base_crit.alg.gen(i).degree <= -2).collect();
        let mut partners: Vec<usize> = antighosts.iter().filter_map(|&c| pairing[c]).collect();
        partners.sort_unstable();
        let mut gs = ghosts.clone();
        gs.sort_unstable();
        if partners != gs || partners.len() != antighosts.len() || ghosts.iter().any(|&g| g < s_len) {
            return Err(Error::Invalid("the ghosts must be exactly the partners of the degree ≤ -2 generators".into()));
        }
        let vars = (0..s_len).filter(|&i| alg.gen(i).kind == GenKind::Base).collect();
        alg.check(&functional)?;
        Ok(BvPresentation { base_crit, bv, vars, ghosts, functional, pairing, weight_max })
    }

    pub fn alg(&self) -> &Algebra {
        &self.bv.alg
    }

    pub fn parse(&self, src: &str) -> Result<Element> {
        self.bv.alg.parse(src)
    }

    pub fn format(&self, e: &Element) -> String {
        format_ghost_left(&self.bv.alg, e, &self.ghosts)
    }

    /// Paired generators `(g, h)` with `g` the even member.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let alg = &self.bv.alg;
        let mut out = Vec::new();
        for (i, p) in self.pairing.iter().enumerate() {
            if let Some(j) = *p {
                if !alg.is_odd(i) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn d_sign(&self, a: &Element) -> Result<Element> {
        self.bv.d(a)
    }

    /// `{a, b} = Σ (∂a/∂g ∂b/∂h - ∂a/∂h ∂b/∂g)` over pairs, right derivatives on `a`,
    /// left derivatives on `b`. Satisfies `{g, pair(g)} = 1` for the even member `g`.
    pub fn bracket(&self, a: &Element, b: &Element) -> Result<Element> {
        let alg = &self.bv.alg;
        alg.check(a)?;
        alg.check(b)?;
        let mut out = Element::zero();
        for (g, h) in self.pairs() {
            for (u, v, c) in [(g, h, Q::one()), (h, g, -Q::one())] {
                let ra = right_partial(alg, a, u)?;
                if ra.is_zero() {
                    continue;
                }
                let lb = partial(alg, b, v)?;
                out.add_scaled(&alg.mul(&ra, &lb)?, &c);
            }
        }
        Ok(out.filter(|m| alg.mono_weight(m) <= self.weight_max))
    }

    /// The derivation `{Q, -}`.
    pub fn hamiltonian_vf(&self, q: &Element) -> Result<Derivation> {
        let alg = &self.bv.alg;
        let deg = if q.is_zero() { 0 } else { homogeneous_degree(alg, q)? };
        let mut d = Derivation::zero(alg, deg + 1);
        for g in 0..alg.len() {
            d.set(alg, g, self.bracket(q, &Element::gen(g))?)?;
        }
        Ok(d)
    }

    pub fn de_rham(&self) -> Result<DeRham> {
        de_rham(&self.bv)
    }

    /// `ω^st = Σ dg∧dh` over pairs, `g` the even member, inside `DR(BV)`.
    pub fn strict_symplectic(&self, dr: &DeRham) -> Result<Element> {
        let alg = &self.bv.alg;
        if let Some(i) = self.pairing.iter().position(Option::is_none) {
            return Err(Error::Invalid(format!("unpaired generator `{}`", alg.name(i))));
        }
        let mut w = Element::zero();
        for (g, h) in self.pairs() {
            w += &dr.alg().mul(&Element::gen(dr.form(g)), &Element::gen(dr.form(h)))?;
        }
        Ok(w)
    }

    /// Checks `ι_{Q,-} ω^st = d_dR Q`.
    pub fn check_hamiltonian(&self, q: &Element) -> Result<bool> {
        let dr = self.de_rham()?;
        let w = self.strict_symplectic(&dr)?;
        let x = self.hamiltonian_vf(q)?;
        let lhs = contraction(&dr, &x)?.apply(dr.alg(), &w)?;
        let rhs = dr.d_dr.apply(dr.alg(), &self.bv.alg.transport(dr.alg(), q)?)?;
        let keep = |m: &Monomial| dr.alg().mono_weight(m) <= self.weight_max;
        Ok(lhs.filter(keep) == rhs.filter(keep))
    }

    /// `{Q, Q}` and whether `{Q, -}` squares to zero on generators.
    pub fn cme_check(&self, q: &Element) -> Result<CmeReport> {
        if !q.is_zero() && homogeneous_degree(&self.bv.alg, q)? != 0 {
            return Err(Error::Degree("the BV charge must have degree 0".into()));
        }
        let residual = self.bracket(q, q)?;
        let x = self.hamiltonian_vf(q)?;
        let sz = x.check_square_zero(&self.bv.alg, Some(self.weight_max))?;
        Ok(CmeReport {
            holds: residual.is_zero(),
            residual_string: self.format(&residual),
            residual,
            vector_field_square_zero: sz.holds,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CmeReport {
    pub holds: bool,
    pub residual: Element,
    pub residual_string: String,
    pub vector_field_square_zero: bool,
}

fn homogeneous_degree(alg: &Algebra, a: &Element) -> Result<i64> {
    alg.degree(a).ok_or_else(|| Error::Degree(format!("`{}` is not homogeneous", alg.format(a))))
}

/// Right derivative `a ∂/∂v`, term by term.
pub fn right_partial(alg: &Algebra, a: &Element, v: usize) -> Result<Element> {
    let dv = alg.gen(v).degree;
    let mut out = Element::zero();
    for (m, c) in a.terms() {
        if m.exponent(v) == 0 {
            continue;
        }
        let t = Element::term(m.clone(), c.clone());
        let l = partial(alg, &t, v)?;
        let s = sign(odd(dv * (alg.mono_degree(m) + 1)));
        out.add_scaled(&l, &s);
    }
    Ok(out)
}

/// The contraction `ι_X` on `DR(B)`: `g ↦ 0`, `dg ↦ X(g)`, of degree `|X| - 1`.
pub fn contraction(dr: &DeRham, x: &Derivation) -> Result<Derivation> {
    let alg = dr.alg();
    let mut c = Derivation::zero(alg, x.degree - 1);
    for g in 0..dr.source_len {
        let img = x.image(g).cloned().unwrap_or_default();
        c.set(alg, dr.form(g), img)?;
    }
    Ok(c)
}

/// Formats with the listed letters pulled to the left and factored:
/// `x^2*y + eta*(x*xi_x - 2*y*xi_y)`.
pub fn format_ghost_left(alg: &Algebra, e: &Element, left: &[usize]) -> String {
    if e.is_zero() {
        return "0".into();
    }
    let mut groups: BTreeMap<Monomial, Element> = BTreeMap::new();
    for (m, c) in e.terms() {
        let (g, r): (Vec<_>, Vec<_>) = m.factors().iter().partition(|(i, _)| left.contains(i));
        let gm = Monomial::from_sorted(g);
        let rm = Monomial::from_sorted(r);
        // m = ± gm * rm
        let neg = alg.mul_mono(&gm, &rm).map(|(n, _)| n).unwrap_or(false);
        let c = if neg { -c.clone() } else { c.clone() };
        groups.entry(gm).or_default().add_term(rm, c);
    }
    let mut keys: Vec<&Monomial> = groups.keys().collect();
    keys.sort_by(|a, b| a.letters().cmp(&b.letters()).then_with(|| alg.display_cmp(a, b)));
    let mut out = String::new();
    for (k, gm) in keys.into_iter().enumerate() {
        let rest = &groups[gm];
        let body = alg.format(rest);
        let piece = if gm.is_one() {
            body
        } else if rest.len() == 1 && rest.terms().all(|(m, _)| m.is_one()) {
            let c = rest.constant_part();
            let g = alg.format_monomial(gm);
            if c.is_one() {
                g
            } else if c == -Q::one() {
                format!("-{g}")
            } else {
                format!("{}*{g}", crate::gca::format_q(&c))
            }
        } else if rest.len() == 1 {
            let (m, c) = rest.terms().next().expect("one term");
            let g = alg.format_monomial(gm);
            let r = alg.format_monomial(m);
            if c.is_one() {
                format!("{g}*{r}")
            } else if *c == -Q::one() {
                format!("-{g}*{r}")
            } else {
                format!("{}*{g}*{r}", crate::gca::format_q(c))
            }
        } else {
            format!("{}*({body})", alg.format_monomial(gm))
        };
        if k == 0 {
            out.push_str(&piece);
        } else if let Some(p) = piece.strip_prefix('-') {
            out.push_str(" - ");
            out.push_str(p);
        } else {
            out.push_str(" + ");
            out.push_str(&piece);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Linear-stack retract DR(A) ⇄ DR(B)

/// The retract of `DR(B)` onto `DR(A)` for `B` semi-free over `A` with fiber generators.
#[derive(Clone, Debug)]
pub struct RetractData {
    pub dr: DeRham,
    pub fibers: Vec<usize>,
    /// Generators of `DR(B)` that are fiber letters (fiber coordinates and their forms).
    pub fiber_letter: Vec<bool>,
    /// Unperturbed differential `δ' = d_dR + δ_A + (fiber-linear part of δ)`.
    pub d_prime: Derivation,
    /// `Δ = D_B - δ'`.
    pub delta: Derivation,
    /// The degree -1 derivation `dξ ↦ ξ`.
    pub k: Derivation,
    pub weight_max: u32,
    /// Multiplier on `h` (1 for the genuine homotopy).
    pub h_scale: Q,
}

/// Builds the unperturbed retract. `fibers` are generators of `b`; everything else is the base.
pub fn retract_linear(b: &DgaPresentation, fibers: &[usize], weight_max: u32) -> Result<RetractData> {
    let n = b.alg.len();
    if let Some(&v) = fibers.iter().find(|&&v| v >= n) {
        return Err(Error::MismatchedAlgebra(v));
    }
    if b.alg.gens().iter().any(|g| matches!(g.kind, GenKind::Form(_))) {
        return Err(Error::Invalid("the presentation already contains de Rham forms".into()));
    }
    let dr = de_rham(b)?;
    let alg = dr.alg().clone();
    let mut fiber_letter = vec![false; alg.len()];
    for &v in fibers {
        fiber_letter[v] = true;
        fiber_letter[dr.form(v)] = true;
    }
    let count = |m: &Monomial| -> u32 { m.factors().iter().filter(|(i, _)| fiber_letter[*i]).map(|(_, e)| e).sum() };
    let mut vertical = Derivation::zero(&alg, 1);
    for g in 0..n {
        let want = u32::from(fiber_letter[g]);
        let img = b.differential.image(g).cloned().unwrap_or_default();
        let lin = img.filter(|m| count(m) == want);
        vertical.set(&alg, g, lin)?;
    }
    for g in 0..n {
        let img = vertical.image(g).cloned().unwrap_or_default();
        let dimg = dr.d_dr.apply(&alg, &img)?;
        vertical.set(&alg, dr.form(g), -&dimg)?;
    }
    let d_prime = vertical.add(&dr.d_dr)?;
    let delta = dr.total()?.sub(&d_prime)?;
    let mut k = Derivation::zero(&alg, -1);
    for &v in fibers {
        k.set(&alg, dr.form(v), Element::gen(v))?;
    }
    let r = RetractData { dr, fibers: fibers.to_vec(), fiber_letter, d_prime, delta, k, weight_max, h_scale: Q::one() };
    // a split presentation has a differential δ' commuting with the fiber count: [δ', K] = N
    let sz = r.d_prime.check_square_zero(&alg, None)?;
    if !sz.holds {
        return Err(Error::Invalid(format!(
            "presentation does not split over the base: the unperturbed differential fails on `{}`",
            sz.witness.unwrap_or_default()
        )));
    }
    let comm = Derivation::commutator(&alg, &r.d_prime, &r.k)?;
    for g in 0..alg.len() {
        let want = if r.fiber_letter[g] { Element::gen(g) } else { Element::zero() };
        if comm.image(g).cloned().unwrap_or_default() != want {
            return Err(Error::Invalid(format!(
                "presentation does not split over the base: [δ', K] differs from the fiber count on `{}`",
                alg.name(g)
            )));
        }
    }
    Ok(r)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Letter {
    Base,
    BaseForm,
    FiberForm,
    Fiber,
}

impl RetractData {
    pub fn alg(&self) -> &Algebra {
        self.dr.alg()
    }

    fn truncate(&self, e: Element) -> Element {
        let alg = self.alg();
        e.filter(|m| alg.mono_weight(m) <= self.weight_max)
    }

    pub fn fiber_count(&self, m: &Monomial) -> u32 {
        m.factors().iter().filter(|(i, _)| self.fiber_letter[*i]).map(|(_, e)| e).sum()
    }

    /// `i`: `DR(A)` sits inside `DR(B)`; rejects elements with fiber letters.
    pub fn i(&self, a: &Element) -> Result<Element> {
        if let Some((m, _)) = a.terms().find(|(m, _)| self.fiber_count(m) > 0) {
            return Err(Error::OutsideDomain(self.alg().format_monomial(m)));
        }
        Ok(a.clone())
    }

    /// `p`: sets fiber coordinates and their forms to zero.
    pub fn p(&self, a: &Element) -> Element {
        a.filter(|m| self.fiber_count(m) == 0)
    }

    fn class(&self, g: usize) -> Letter {
        match (self.alg().gen(g).kind.clone(), self.fiber_letter[g]) {
            (GenKind::Form(_), true) => Letter::FiberForm,
            (GenKind::Form(_), false) => Letter::BaseForm,
            (_, true) => Letter::Fiber,
            (_, false) => Letter::Base,
        }
    }

    /// `h` on a monomial: the word is rewritten as `f·α·dξ_1..dξ_m·η_1..η_m'` and
    /// `h = 1/(m+m') Σ_i ε f α dξ_1..(dξ_i omitted)..dξ_m ξ_i η` with
    /// `ε = (-1)^{|f|+|α| + n_h}`, `n_h = Σ_{j<i}(|ξ_j|+1) + Σ_{j>i}(|ξ_j|+1)|ξ_i|`.
    pub fn h_mono(&self, m: &Monomial) -> Result<Element> {
        let alg = self.alg();
        let mut letters: Vec<usize> = Vec::new();
        for &(g, e) in m.factors() {
            letters.extend(std::iter::repeat(g).take(e as usize));
        }
        // sign of sorting the canonical word into the normal form f α dξ η
        let mut neg = false;
        for a in 0..letters.len() {
            for b in a + 1..letters.len() {
                if self.class(letters[a]) > self.class(letters[b])
                    && alg.is_odd(letters[a])
                    && alg.is_odd(letters[b])
                {
                    neg = !neg;
                }
            }
        }
        let mut sorted = letters.clone();
        sorted.sort_by_key(|&g| self.class(g));
        let of = |c: Letter| -> Vec<usize> { sorted.iter().copied().filter(|&g| self.class(g) == c).collect() };
        let (f, alpha, dxi, eta) = (of(Letter::Base), of(Letter::BaseForm), of(Letter::FiberForm), of(Letter::Fiber));
        let total = dxi.len() + eta.len();
        if dxi.is_empty() || total == 0 {
            return Ok(Element::zero());
        }
        let under = |g: usize| match alg.gen(g).kind {
            GenKind::Form(s) => s,
            _ => unreachable!("fiber forms are forms"),
        };
        let deg = |g: usize| alg.gen(g).degree;
        let prefix: i64 = f.iter().chain(&alpha).map(|&g| deg(g)).sum();
        let mut out = Element::zero();
        for i in 0..dxi.len() {
            let xi_i = under(dxi[i]);
            let mut n_h: i64 = 0;
            for (j, &dj) in dxi.iter().enumerate() {
                let w = deg(under(dj)) + 1;
                if j < i {
                    n_h += w;
                } else if j > i {
                    n_h += w * deg(xi_i);
                }
            }
            let mut word: Vec<Element> = Vec::new();
            word.extend(f.iter().chain(&alpha).map(|&g| Element::gen(g)));
            word.extend(dxi.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &g)| Element::gen(g)));
            word.push(Element::gen(xi_i));
            word.extend(eta.iter().map(|&g| Element::gen(g)));
            let t = alg.mul_all(&word)?;
            out.add_scaled(&t, &sign(odd(prefix + n_h) ^ neg));
        }
        let c = Q::one() / Q::from_integer((total as i64).into());
        Ok(out.scale(&c))
    }

    pub fn h(&self, a: &Element) -> Result<Element> {
        let mut out = Element::zero();
        for (m, c) in a.terms() {
            out.add_scaled(&self.h_mono(m)?, c);
        }
        Ok(out.scale(&self.h_scale))
    }

    /// `K/N`, the same operator assembled from the derivation `K` and the fiber count.
    pub fn h_from_derivation(&self, a: &Element) -> Result<Element> {
        let alg = self.alg();
        let mut out = Element::zero();
        for (m, c) in a.terms() {
            let n = self.fiber_count(m);
            if n == 0 {
                continue;
            }
            let t = self.k.apply(alg, &Element::term(m.clone(), c.clone()))?;
            out.add_scaled(&t, &(Q::one() / Q::from_integer(i64::from(n).into())));
        }
        Ok(out.scale(&self.h_scale))
    }

    fn d_on(&self, d: &Derivation, a: &Element) -> Result<Element> {
        Ok(self.truncate(d.apply(self.alg(), a)?))
    }

    /// `D_B = δ + d_dR` on `DR(B)`.
    pub fn total(&self) -> Result<Derivation> {
        self.d_prime.add(&self.delta)
    }

    /// Checks that `Δ` strictly raises the CE weight on every generator.
    pub fn delta_raises_weight(&self) -> std::result::Result<(), String> {
        let alg = self.alg();
        for (g, img) in self.delta.images() {
            let w = alg.gen(g).weight;
            if let Some((m, _)) = img.terms().find(|(m, _)| alg.mono_weight(m) <= w) {
                return Err(format!(
                    "Δ({}) has the term `{}` of CE weight {} ≤ {w}",
                    alg.name(g),
                    alg.format_monomial(m),
                    alg.mono_weight(m)
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SdrFailure {
    pub identity: String,
    pub witness: String,
    pub residual: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SdrReport {
    pub holds: bool,
    pub words_checked: usize,
    /// First failure of each identity.
    pub failures: Vec<SdrFailure>,
}

/// Checks `pi = id`, `[δ', h] = id - ip`, `ph = 0`, `hi = 0`, `h² = 0` on every basis word.
pub fn verify_sdr(r: &RetractData, bounds: &TruncationBounds) -> Result<SdrReport> {
    let alg = r.alg().clone();
    let mut words = 0;
    let mut failures: Vec<SdrFailure> = Vec::new();
    let fail = |failures: &mut Vec<SdrFailure>, id: &str, m: &Monomial, res: &Element| {
        if !failures.iter().any(|f| f.identity == id) {
            failures.push(SdrFailure {
                identity: id.into(),
                witness: alg.format_monomial(m),
                residual: alg.format(res),
            });
        }
    };
    for k in bounds.coh_window.0..=bounds.coh_window.1 {
        for m in basis_enumerate(&alg, k, bounds)? {
            words += 1;
            let w = Element::term(m.clone(), Q::one());
            let base = r.fiber_count(&m) == 0;
            let hw = r.h(&w)?;
            if base {
                let pi = r.p(&r.i(&w)?);
                if pi != w {
                    fail(&mut failures, "pi = id", &m, &(&pi - &w));
                }
                let hi = r.h(&r.i(&w)?)?;
                if !hi.is_zero() {
                    fail(&mut failures, "hi = 0", &m, &hi);
                }
            }
            let lhs = &r.d_on(&r.d_prime, &hw)? + &r.h(&r.d_on(&r.d_prime, &w)?)?;
            let rhs = &w - &r.p(&w);
            if lhs != rhs {
                fail(&mut failures, "[d', h] = id - ip", &m, &(&lhs - &rhs));
            }
            let ph = r.p(&hw);
            if !ph.is_zero() {
                fail(&mut failures, "ph = 0", &m, &ph);
            }
            let hh = r.h(&hw)?;
            if !hh.is_zero() {
                fail(&mut failures, "hh = 0", &m, &hh);
            }
        }
    }
    Ok(SdrReport { holds: failures.is_empty(), words_checked: words, failures })
}

/// The perturbed data of the homological perturbation lemma.
///
/// With `[δ', h] = id - ip` and `X = Σ_k (-1)^k (Δh)^k Δ`:
/// `i_∞ = i - hXi`, `h_∞ = h - hXh`, `p_∞ = p - pXh`, `D_∞ = D_A + pXi`.
#[derive(Clone, Debug)]
pub struct Perturbed<'a> {
    pub r: &'a RetractData,
    pub order_max: usize,
}

pub fn perturb(r: &RetractData, order_max: usize) -> Result<Perturbed<'_>> {
    r.delta_raises_weight().map_err(|m| Error::Invalid(format!("perturbation does not raise the CE weight: {m}")))?;
    Ok(Perturbed { r, order_max })
}

impl Perturbed<'_> {
    fn series(&self, a: &Element) -> Result<Element> {
        let r = self.r;
        let mut term = r.d_on(&r.delta, a)?;
        let mut out = term.clone();
        for k in 1..=self.order_max {
            if term.is_zero() {
                break;
            }
            term = r.d_on(&r.delta, &r.h(&term)?)?;
            out.add_scaled(&term, &sign(k % 2 == 1));
        }
        if !term.is_zero() && !r.d_on(&r.delta, &r.h(&term)?)?.is_zero() {
            return Err(Error::Budget(format!("perturbation series did not terminate within order {}", self.order_max)));
        }
        Ok(out)
    }

    pub fn i_inf(&self, a: &Element) -> Result<Element> {
        let ia = self.r.i(a)?;
        Ok(&ia - &self.r.h(&self.series(&ia)?)?)
    }

    pub fn h_inf(&self, a: &Element) -> Result<Element> {
        let ha = self.r.h(a)?;
        Ok(&ha - &self.r.h(&self.series(&ha)?)?)
    }

    pub fn p_inf(&self, a: &Element) -> Result<Element> {
        let ha = self.r.h(a)?;
        Ok(&self.r.p(a) - &self.r.p(&self.series(&ha)?))
    }

    pub fn d_inf(&self, a: &Element) -> Result<Element> {
        let ia = self.r.i(a)?;
        let da = self.r.p(&self.r.d_on(&self.r.d_prime, &ia)?);
        Ok(&da + &self.r.p(&self.series(&ia)?))
    }
}

// ---------------------------------------------------------------------------
// BV charge

#[derive(Clone, Debug)]
pub struct ChargeResult {
    pub q: Element,
    pub q_string: String,
    /// `ι_δ ω^st` inside `DR(BV)`.
    pub contraction: Element,
}

/// `Q = i_∞(f) + h_∞(ι_δ ω^st)` for the retract of `DR(BV)` onto `DR(S)` along the ghosts.
pub fn bv_charge(bv: &BvPresentation) -> Result<ChargeResult> {
    let r = retract_linear(&bv.bv, &bv.ghosts, bv.weight_max)?;
    let pert = perturb(&r, bv.weight_max as usize + 1)?;
    let dr = &r.dr;
    let omega = bv.strict_symplectic(dr)?;
    let iota = contraction(dr, &bv.bv.differential)?;
    let contr = r.truncate(iota.apply(dr.alg(), &omega)?);
    let f = bv.alg().transport(dr.alg(), &bv.functional)?;
    let df = dr.d_dr.apply(dr.alg(), &f)?;
    let proj = r.p(&contr);
    if proj != df {
        return Err(Error::Invalid(format!(
            "the projection of ι_δ ω is `{}`, not d_dR f = `{}`; the differential is not generated by a charge \
             (is f invariant?)",
            dr.alg().format(&proj),
            dr.alg().format(&df)
        )));
    }
    let q_dr = &pert.i_inf(&f)? + &pert.h_inf(&contr)?;
    if let Some((m, _)) = q_dr.terms().find(|(m, _)| dr.alg().mono_dr(m) > 0) {
        return Err(Error::Invariant(format!("charge has a form component `{}`", dr.alg().format_monomial(m))));
    }
    let q = dr.alg().transport(bv.alg(), &q_dr)?;
    if !q.is_zero() && homogeneous_degree(bv.alg(), &q)? != 0 {
        return Err(Error::Invariant("charge is not of degree 0".into()));
    }
    let x = bv.hamiltonian_vf(&q)?;
    for g in 0..bv.alg().len() {
        let want = bv.d_sign(&Element::gen(g))?.filter(|m| bv.alg().mono_weight(m) <= bv.weight_max);
        let got = x.image(g).cloned().unwrap_or_default();
        if got != want {
            return Err(Error::Invariant(format!(
                "{{Q, {}}} = {} but δ({}) = {}",
                bv.alg().name(g),
                bv.alg().format(&got),
                bv.alg().name(g),
                bv.alg().format(&want)
            )));
        }
    }
    Ok(ChargeResult { q_string: bv.format(&q), q, contraction: contr })
}

// ---------------------------------------------------------------------------
// Constructions

fn ghost_names(a: &AlgebroidPresentation) -> Vec<(String, String)> {
    if a.rank() == 1 {
        return vec![("c".into(), "eta".into())];
    }
    a.module_gens.iter().map(|g| (format!("c_{}", g.name), format!("eta_{}", g.name))).collect()
}

/// `ρ(e_a)(f)` for the first generator that does not annihilate `f`.
pub fn invariance_witness(f: &Element, a: &AlgebroidPresentation) -> Result<Option<(String, Element)>> {
    for (k, rho) in a.anchor.iter().enumerate() {
        let v = rho.apply(&a.base.alg, f)?;
        if !v.is_zero() {
            return Ok(Some((a.module_gens[k].name.clone(), v)));
        }
    }
    Ok(None)
}

/// The BV algebra of `f` with off-shell symmetries generated by a Lie algebroid with
/// constant structure constants.
pub fn equivariant_bv(f: &Element, a: &AlgebroidPresentation, weight_max: u32) -> Result<BvPresentation> {
    let base = &a.base.alg;
    if let Some((e, v)) = invariance_witness(f, a)? {
        return Err(Error::Invalid(format!("f is not invariant: ρ({e})(f) = {}", base.format(&v))));
    }
    if a.module_gens.iter().any(|g| g.degree != 0) || !a.differential.is_empty() || !a.higher_brackets.is_empty() {
        return Err(Error::Invalid("equivariant BV needs a Lie algebroid concentrated in degree 0".into()));
    }
    let rank = a.rank();
    if rank > 0 && weight_max == 0 {
        return Err(Error::Budget("weight_max = 0 leaves no room for ghosts".into()));
    }
    let mut structure = vec![vec![vec![Q::zero(); rank]; rank]; rank];
    for x in 0..rank {
        for y in 0..rank {
            for (z, c) in a.bracket(x, y).iter().enumerate() {
                if c.terms().any(|(m, _)| !m.is_one()) {
                    return Err(Error::Invalid(format!(
                        "equivariant BV needs constant structure constants; [{}, {}] = {}",
                        a.module_gens[x].name,
                        a.module_gens[y].name,
                        a.format_lvec(&a.bracket(x, y))
                    )));
                }
                structure[x][y][z] = c.constant_part();
            }
        }
    }
    let report = validate_algebroid(a, &TruncationBounds::new(4, -4, 4, weight_max.max(3))?)?;
    if !report.valid {
        let f0 = &report.failures[0];
        return Err(Error::Invalid(format!("the algebroid fails `{}` at {:?}", f0.identity, f0.witness)));
    }
    let k = koszul_from(base, f)?;
    let mut alg = k.pres.alg.clone();
    let names = ghost_names(a);
    let mut anti = Vec::new();
    for (c, _) in &names {
        anti.push(alg.add(Generator::extra(c.clone(), -2))?);
    }
    let mut d = k.pres.differential.clone();
    d.extend_by_zero(&alg);
    let lift = |alg: &Algebra, rho: &Derivation| -> Result<Element> {
        let mut out = Element::zero();
        for (&v, &xi) in k.vars.iter().zip(&k.xis) {
            let coeff = base.transport(alg, &rho.image(v).cloned().unwrap_or_default())?;
            out += &alg.mul(&coeff, &Element::gen(xi))?;
        }
        Ok(out)
    };
    for (j, &c) in anti.iter().enumerate() {
        let img = lift(&alg, &a.anchor[j])?;
        d.set(&alg, c, img)?;
    }
    let s = DgaPresentation::new(alg.clone(), d.clone(), Provenance::AlmostCrit)?;
    let sz = s.square_zero(None)?;
    if !sz.holds {
        return Err(Error::Invariant(format!("δ_S² ≠ 0 on `{}`", sz.witness.unwrap_or_default())));
    }
    let mut ghosts = Vec::new();
    for (_, eta) in &names {
        ghosts.push(alg.add(Generator::ghost(eta.clone(), 1))?);
    }
    let mut full = Derivation::zero(&alg, 1);
    let f_bv = base.transport(&alg, f)?;
    let eta = |b: usize| Element::gen(ghosts[b]);
    for (&v, &xi) in k.vars.iter().zip(&k.xis) {
        // x ↦ -Σ η^b ρ_b(x): the CE differential of the opposite algebroid, which is
        // the one generated by a charge under the bracket with {x, ξ} = 1
        let mut dx = Element::zero();
        // ξ_i ↦ ∂_i f + Σ η^b Σ_j ∂_i ρ_b^j ξ_j
        let mut dxi = partial(&alg, &f_bv, v)?;
        for b in 0..rank {
            let rho = base.transport(&alg, &a.anchor[b].image(v).cloned().unwrap_or_default())?;
            dx -= &alg.mul(&eta(b), &rho)?;
            let mut l = Element::zero();
            for (&w, &xj) in k.vars.iter().zip(&k.xis) {
                let rw = base.transport(&alg, &a.anchor[b].image(w).cloned().unwrap_or_default())?;
                l += &alg.mul(&partial(&alg, &rw, v)?, &Element::gen(xj))?;
            }
            dxi += &alg.mul(&eta(b), &l)?;
        }
        full.set(&alg, v, dx)?;
        full.set(&alg, xi, dxi)?;
    }
    for (dd, &c) in anti.iter().enumerate() {
        // c_d ↦ ι_{ρ_d} ξ - Σ_b η^b C^e_{bd} c_e
        let mut img = d.image(c).cloned().unwrap_or_default();
        for b in 0..rank {
            for (e, &ce) in anti.iter().enumerate() {
                let coeff = &structure[b][dd][e];
                if !coeff.is_zero() {
                    img.add_scaled(&alg.mul(&eta(b), &Element::gen(ce))?, &-coeff.clone());
                }
            }
        }
        full.set(&alg, c, img)?;
    }
    for e in 0..rank {
        // η^e ↦ Σ_{a<b} C^e_{ab} η^a η^b
        let mut img = Element::zero();
        for x in 0..rank {
            for y in x + 1..rank {
                let coeff = &structure[x][y][e];
                if !coeff.is_zero() {
                    img.add_scaled(&alg.mul(&eta(x), &eta(y))?, coeff);
                }
            }
        }
        full.set(&alg, ghosts[e], img)?;
    }
    let bvp = DgaPresentation::new(alg.clone(), full, Provenance::Bv)?;
    let sz = bvp.square_zero(Some(weight_max))?;
    if !sz.holds {
        return Err(Error::Invariant(format!("δ_BV² ≠ 0 on `{}`: {}", sz.witness.unwrap_or_default(), sz.residual)));
    }
    let mut pairing = vec![None; alg.len()];
    for (&v, &xi) in k.vars.iter().zip(&k.xis) {
        pairing[v] = Some(xi);
        pairing[xi] = Some(v);
    }
    for (&c, &g) in anti.iter().zip(&ghosts) {
        pairing[c] = Some(g);
        pairing[g] = Some(c);
    }
    BvPresentation::new(s, bvp, ghosts, f_bv, pairing, weight_max)
}

/// A BV candidate whose charge could only be completed up to some ghost weight.
#[derive(Clone, Debug)]
pub struct BvCandidate {
    pub bv: BvPresentation,
    pub charge: Element,
    /// Ghost weight and residual at which the master equation has no solution.
    pub obstruction: Option<(u32, String)>,
}

/// BV algebra of an almost critical locus `S` (for instance a Koszul-Tate resolution)
/// whose antighosts all get a ghost `eta_<c>`. The charge starts as
/// `Q = f + Σ η^c δ(c)` and is completed weight by weight by solving the classical
/// master equation within the polynomial bound. The differential is `{Q, -}`; when a
/// weight is obstructed the completion stops there and the obstruction is returned.
pub fn bv_from_almost_critical(s: &DgaPresentation, f: &Element, bounds: &TruncationBounds) -> Result<BvCandidate> {
    let weight_max = bounds.weight_max;
    let mut alg = s.alg.clone();
    let anti: Vec<usize> = (0..alg.len()).filter(|&i| alg.gen(i).degree <= -2).collect();
    if !anti.is_empty() && weight_max == 0 {
        return Err(Error::Budget("weight_max = 0 leaves no room for ghosts".into()));
    }
    let mut ghosts = Vec::new();
    for &c in &anti {
        let name = format!("eta_{}", s.alg.name(c));
        ghosts.push(alg.add(Generator::ghost(name, -1 - s.alg.gen(c).degree))?);
    }
    let f = s.alg.transport(&alg, f)?;
    let mut pairing = vec![None; alg.len()];
    for i in 0..s.alg.len() {
        if let Some(v) = s.alg.name(i).strip_prefix("xi_").and_then(|v| s.alg.index_of(v)) {
            pairing[i] = Some(v);
            pairing[v] = Some(i);
        }
    }
    for (&c, &g) in anti.iter().zip(&ghosts) {
        pairing[c] = Some(g);
        pairing[g] = Some(c);
    }
    let mut q = f.clone();
    for (&c, &g) in anti.iter().zip(&ghosts) {
        let dc = s.alg.transport(&alg, &s.differential.image(c).cloned().unwrap_or_default())?;
        q += &alg.mul(&Element::gen(g), &dc)?;
    }
    let probe = DgaPresentation::new(alg.clone(), Derivation::zero(&alg, 1), Provenance::Bv)?;
    let bvp = BvPresentation {
        base_crit: s.clone(),
        bv: probe,
        vars: (0..s.alg.len()).filter(|&i| s.alg.gen(i).kind == GenKind::Base).collect(),
        ghosts: ghosts.clone(),
        functional: f.clone(),
        pairing: pairing.clone(),
        weight_max,
    };
    let mut obstruction = None;
    for k in 2..=weight_max {
        let res = bvp.bracket(&q, &q)?.filter(|m| alg.mono_weight(m) == k);
        if res.is_zero() {
            continue;
        }
        let mb = TruncationBounds { weight_max: k, dr_window: None, ..bounds.clone() };
        let unknowns: Vec<Monomial> =
            basis_enumerate(&alg, 0, &mb)?.into_iter().filter(|m| alg.mono_weight(m) == k).collect();
        let anchor: Element = q.filter(|m| alg.mono_weight(m) <= 1);
        let mut cols = Vec::new();
        let mut rows: BTreeMap<Monomial, usize> = BTreeMap::new();
        for (m, _) in res.terms() {
            let n = rows.len();
            rows.entry(m.clone()).or_insert(n);
        }
        for u in &unknowns {
            let t = bvp.bracket(&anchor, &Element::term(u.clone(), Q::one()))?;
            let t = t.filter(|m| alg.mono_weight(m) == k).scale(&Q::from_integer(2.into()));
            for (m, _) in t.terms() {
                let n = rows.len();
                rows.entry(m.clone()).or_insert(n);
            }
            cols.push(t);
        }
        let mut mat = Matrix::zeros(rows.len(), unknowns.len());
        for (j, t) in cols.iter().enumerate() {
            for (m, c) in t.terms() {
                mat.set(rows[m], j, c.clone());
            }
        }
        let mut rhs = vec![Q::zero(); rows.len()];
        for (m, c) in res.terms() {
            rhs[rows[m]] = -c.clone();
        }
        let Some(sol) = mat.solve(&rhs) else {
            obstruction = Some((k, format_ghost_left(&alg, &res, &ghosts)));
            break;
        };
        for (u, c) in unknowns.iter().zip(sol) {
            if !c.is_zero() {
                q.add_term(u.clone(), c);
            }
        }
    }
    let x = bvp.hamiltonian_vf(&q)?;
    let full = DgaPresentation::new(alg.clone(), x, Provenance::Bv)?;
    if obstruction.is_none() {
        let sz = full.square_zero(Some(weight_max))?;
        if !sz.holds {
            return Err(Error::Invariant(format!("δ_BV² ≠ 0 on `{}`", sz.witness.unwrap_or_default())));
        }
    }
    for i in 0..s.alg.len() {
        let got = full.d(&Element::gen(i))?.filter(|m| alg.mono_weight(m) == 0);
        let want = s.alg.transport(&alg, &s.differential.image(i).cloned().unwrap_or_default())?;
        if got != want {
            return Err(Error::Invariant(format!("the BV differential does not restrict to δ_S on `{}`", alg.name(i))));
        }
    }
    let bv = BvPresentation::new(s.clone(), full, ghosts, f, pairing, weight_max)?;
    Ok(BvCandidate { bv, charge: q, obstruction })
}

// ---------------------------------------------------------------------------
// Lagrangian correspondence

/// Linear part at `point` (values of the base variables) of a differential, as a matrix
/// `J[g][h]`: coefficient of the generator `h` in the linearization of `δ(g)`.
fn linearize(pres: &DgaPresentation, vars: &[usize], point: &[Q]) -> Result<Vec<BTreeMap<usize, Q>>> {
    let alg = &pres.alg;
    let mut shift: Vec<Element> = (0..alg.len()).map(Element::gen).collect();
    for (&v, c) in vars.iter().zip(point) {
        shift[v] = &Element::gen(v) + &Element::constant(c.clone());
    }
    let mut out = Vec::new();
    for g in 0..alg.len() {
        let img = pres.differential.image(g).cloned().unwrap_or_default();
        let moved = alg.map_to(alg, &img, &shift)?;
        let mut row = BTreeMap::new();
        for (m, c) in moved.terms() {
            if m.letters() == 1 {
                row.insert(m.factors()[0].0, c.clone());
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Finite complexes at a point: the cotangent fiber `L[-1]` (basis `dg` in degree
/// `|g| + 1`) and the tangent fiber (basis `∂_g` in degree `-|g|`).
#[derive(Clone, Debug)]
struct PointComplexes {
    degrees: Vec<i64>,
    jac: Vec<BTreeMap<usize, Q>>,
}

impl PointComplexes {
    fn new(pres: &DgaPresentation, vars: &[usize], point: &[Q]) -> Result<Self> {
        Ok(PointComplexes {
            degrees: pres.alg.gens().iter().map(|g| g.degree).collect(),
            jac: linearize(pres, vars, point)?,
        })
    }

    fn slots(&self, deg_of: impl Fn(i64) -> i64) -> BTreeMap<i64, Vec<usize>> {
        let mut out: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (g, &d) in self.degrees.iter().enumerate() {
            out.entry(deg_of(d)).or_default().push(g);
        }
        out
    }

    /// `d(dg) = -Σ_h J[g][h] dh`.
    fn cotangent(&self) -> (FiniteComplex, BTreeMap<i64, Vec<usize>>) {
        let slots = self.slots(|d| d + 1);
        let mut c = FiniteComplex::new(slots.iter().map(|(&k, v)| (k, v.len())).collect());
        for (&k, src) in &slots {
            let Some(tgt) = slots.get(&(k + 1)) else { continue };
            let mut m = Matrix::zeros(tgt.len(), src.len());
            for (j, &g) in src.iter().enumerate() {
                for (i, &h) in tgt.iter().enumerate() {
                    if let Some(v) = self.jac[g].get(&h) {
                        m.set(i, j, -v.clone());
                    }
                }
            }
            c.d.insert(k, m);
        }
        (c, slots)
    }

    /// `d(∂_h) = -(-1)^{|h|} Σ_g J[g][h] ∂_g`.
    fn tangent(&self) -> (FiniteComplex, BTreeMap<i64, Vec<usize>>) {
        let slots = self.slots(|d| -d);
        let mut c = FiniteComplex::new(slots.iter().map(|(&k, v)| (k, v.len())).collect());
        for (&k, src) in &slots {
            let Some(tgt) = slots.get(&(k + 1)) else { continue };
            let mut m = Matrix::zeros(tgt.len(), src.len());
            for (j, &h) in src.iter().enumerate() {
                for (i, &g) in tgt.iter().enumerate() {
                    if let Some(v) = self.jac[g].get(&h) {
                        m.set(i, j, -(sign(odd(self.degrees[h])) * v));
                    }
                }
            }
            c.d.insert(k, m);
        }
        (c, slots)
    }
}

/// A map between slot-indexed complexes sending basis element `g` to `Σ c·target`.
fn slot_map(
    src: &BTreeMap<i64, Vec<usize>>,
    tgt: &BTreeMap<i64, Vec<usize>>,
    image: impl Fn(usize) -> Option<(usize, Q)>,
) -> ChainMap {
    let mut out = ChainMap::zero();
    for (&k, s) in src {
        let t = tgt.get(&k).cloned().unwrap_or_default();
        let mut m = Matrix::zeros(t.len(), s.len());
        for (j, &g) in s.iter().enumerate() {
            if let Some((h, c)) = image(g) {
                if let Some(i) = t.iter().position(|&x| x == h) {
                    m.set(i, j, c);
                }
            }
        }
        out.components.insert(k, m);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LagrangianReport {
    pub holds: bool,
    /// Pullbacks of the two symplectic forms to `S` agree on the nose.
    pub isotropic: bool,
    /// `β∘f = γ∘g`; fails when a pairing row used by one side is removed.
    pub commutes: bool,
    pub cartesian: CartesianReport,
}

/// The tangent square
/// ```text
/// T_S ───────→ T_Crit
///  │             │ ω_Crit
///  ↓             ↓
/// T_BV ─ω_BV─→ L_S[-1]
/// ```
/// at a point of the classical critical locus, checked for homotopy cartesianness.
/// `dropped` lists generators whose pairing row is removed from `ω_BV`.
pub fn lagrangian_correspondence_check(
    bv: &BvPresentation,
    point: &[Q],
    window: (i64, i64),
    dropped: &[usize],
) -> Result<LagrangianReport> {
    let s = &bv.base_crit;
    let alg = bv.alg();
    if point.len() != bv.vars.len() {
        return Err(Error::Invalid(format!("point has {} coordinates, expected {}", point.len(), bv.vars.len())));
    }
    for g in 0..s.alg.len() {
        let img = s.differential.image(g).cloned().unwrap_or_default();
        let at = img.filter(|m| m.factors().iter().all(|(i, _)| bv.vars.contains(i)));
        if !evaluate(&s.alg, &bv.vars, point, &at)?.is_zero() {
            return Err(Error::Invalid(format!("the point is not in the critical locus: δ({}) ≠ 0", s.alg.name(g))));
        }
    }
    // Koszul part: base variables and their xi
    let k_gens: Vec<usize> = (0..s.alg.len()).filter(|&i| bv.vars.contains(&i) || alg.gen(i).degree == -1).collect();
    let mut k_alg = Algebra::new();
    for &i in &k_gens {
        k_alg.add(alg.gen(i).clone())?;
    }
    let mut k_d = Derivation::zero(&k_alg, 1);
    for (j, &i) in k_gens.iter().enumerate() {
        let img = s.differential.image(i).cloned().unwrap_or_default();
        k_d.set(&k_alg, j, s.alg.transport(&k_alg, &img)?)?;
    }
    let k_pres = DgaPresentation::new(k_alg.clone(), k_d, Provenance::Koszul)?;
    let k_vars: Vec<usize> = bv.vars.iter().map(|&v| k_gens.iter().position(|&x| x == v).expect("var")).collect();
    let ps = PointComplexes::new(s, &bv.vars, point)?;
    let pk = PointComplexes::new(&k_pres, &k_vars, point)?;
    let pb = PointComplexes::new(&bv.bv, &bv.vars, point)?;
    let (a, a_sl) = ps.tangent();
    let (b, b_sl) = pk.tangent();
    let (c, c_sl) = pb.tangent();
    let (d, d_sl) = ps.cotangent();
    let s_len = s.alg.len();
    let f = slot_map(&a_sl, &b_sl, |g| k_gens.iter().position(|&x| x == g).map(|j| (j, Q::one())));
    let g = slot_map(&a_sl, &c_sl, |g| Some((g, Q::one())));
    let beta = slot_map(&b_sl, &d_sl, |j| {
        let i = k_gens[j];
        bv.pairing[i].map(|p| (p, Q::one()))
    });
    let gamma = slot_map(&c_sl, &d_sl, |i| {
        if dropped.contains(&i) {
            return None;
        }
        bv.pairing[i].filter(|&p| p < s_len).map(|p| (p, Q::one()))
    });
    let sq = Square { a, b, c, d, f, g, beta, gamma };
    let commutes = sq.noncommuting_degree().is_none();
    let cartesian = if commutes {
        homotopy_cartesian_check(&sq, window)?
    } else {
        CartesianReport { holds: false, defects: Vec::new() }
    };
    // ω_BV pulled back along BV → S kills the ghost terms; ω_Crit pulled back along K → S
    let pulled_bv: Vec<(usize, usize)> = bv.pairs().into_iter().filter(|&(x, y)| x < s_len && y < s_len).collect();
    let mut pulled_k: Vec<(usize, usize)> = Vec::new();
    for &i in &k_gens {
        if let Some(p) = bv.pairing[i] {
            if !alg.is_odd(i) && k_gens.contains(&p) {
                pulled_k.push((i, p));
            }
        }
    }
    let isotropic = pulled_bv == pulled_k;
    Ok(LagrangianReport { holds: isotropic && commutes && cartesian.holds, isotropic, commutes, cartesian })
}

/// Koszul-side helper: the BV presentation of a bare Koszul complex (no ghosts).
pub fn koszul_bv(vars: &[&str], f: &str) -> Result<BvPresentation> {
    let k = crate::critical_locus::koszul_complex(vars, f)?;
    let mut pairing = vec![None; k.pres.alg.len()];
    for (&v, &xi) in k.vars.iter().zip(&k.xis) {
        pairing[v] = Some(xi);
        pairing[xi] = Some(v);
    }
    BvPresentation::new(k.pres.clone(), k.pres.clone(), Vec::new(), k.f.clone(), pairing, 1)
}

pub fn xi_of(alg: &Algebra, var: &str) -> Result<usize> {
    alg.id(&xi_name(var))
}
