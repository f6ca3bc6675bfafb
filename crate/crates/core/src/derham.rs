//! De Rham algebras of semi-free presentations, graded mixed complexes and closed forms.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::algebroid::Ce;
use crate::derivation::Derivation;
use crate::error::{Error, Result};
use crate::gca::{Algebra, Element, GenKind, Generator, Monomial, Q};
use crate::homology::{basis_enumerate, DgaPresentation, FiniteComplex, Provenance, TruncationBounds};
use crate::linalg::Matrix;

/// Name of the de Rham image of a generator: `x ↦ dx`.
pub fn form_name(g: &str) -> String {
    format!("d{g}")
}

/// `DR(B)`: the generators of `B` followed by one `dg` per generator.
#[derive(Clone, Debug)]
pub struct DeRham {
    /// Internal differential `δ`, extended by `δ(dg) = -d(δg)`.
    pub pres: DgaPresentation,
    pub d_dr: Derivation,
    /// Number of generators of the source algebra.
    pub source_len: usize,
}

impl DeRham {
    pub fn form(&self, g: usize) -> usize {
        self.source_len + g
    }

    pub fn alg(&self) -> &Algebra {
        &self.pres.alg
    }

    /// `δ + d_dR`.
    pub fn total(&self) -> Result<Derivation> {
        self.pres.differential.add(&self.d_dr)
    }

    pub fn mixed(&self) -> GradedMixed {
        GradedMixed {
            alg: self.pres.alg.clone(),
            d: self.pres.differential.clone(),
            eps: vec![self.d_dr.clone()],
            weight: WeightKind::DeRham,
        }
    }

    pub fn parse(&self, src: &str) -> Result<Element> {
        self.pres.alg.parse(src)
    }
}

pub fn de_rham(b: &DgaPresentation) -> Result<DeRham> {
    let mut alg = b.alg.clone();
    let n = alg.len();
    for g in 0..n {
        let src = b.alg.gen(g);
        let mut f = Generator::new(form_name(&src.name), src.degree + 1, GenKind::Form(g));
        f.poly = src.poly;
        f.weight = src.weight;
        f.dr_weight = src.dr_weight + 1;
        alg.add(f)?;
    }
    let mut d_dr = Derivation::zero(&alg, 1);
    for g in 0..n {
        d_dr.set(&alg, g, Element::gen(n + g))?;
        d_dr.set(&alg, n + g, Element::zero())?;
    }
    let mut delta = Derivation::zero(&alg, 1);
    for g in 0..n {
        let img = b.differential.image(g).cloned().unwrap_or_default();
        let dimg = d_dr.apply(&alg, &img)?;
        delta.set(&alg, g, img)?;
        delta.set(&alg, n + g, -&dimg)?;
    }
    let pres = DgaPresentation::new(alg, delta, Provenance::Derham)?;
    Ok(DeRham { pres, d_dr, source_len: n })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    DeRham,
    Ce,
}

fn weight_of(alg: &Algebra, kind: WeightKind, m: &Monomial) -> u32 {
    match kind {
        WeightKind::DeRham => alg.mono_dr(m),
        WeightKind::Ce => alg.mono_weight(m),
    }
}

fn gen_weight(alg: &Algebra, kind: WeightKind, g: usize) -> u32 {
    match kind {
        WeightKind::DeRham => alg.gen(g).dr_weight,
        WeightKind::Ce => alg.gen(g).weight,
    }
}

/// A weight-graded algebra with internal differential `d` and mixed maps `ε_k`
/// (`eps[k-1]` raises the weight by exactly `k`).
#[derive(Clone, Debug)]
pub struct GradedMixed {
    pub alg: Algebra,
    pub d: Derivation,
    pub eps: Vec<Derivation>,
    pub weight: WeightKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MixedCheck {
    pub holds: bool,
    /// Weight jumps `k` at which `Σ_{i+j=k} ε_i ε_j = 0` fails (with `ε_0 = d`).
    pub failing_jumps: Vec<usize>,
}

impl GradedMixed {
    /// CE algebra as a graded mixed algebra: `d = δ_0`, `ε_k = δ_k`.
    pub fn from_ce(ce: &Ce) -> Self {
        let mut parts = ce.weight_split();
        let d = parts.remove(0);
        GradedMixed { alg: ce.pres.alg.clone(), d, eps: parts, weight: WeightKind::Ce }
    }

    pub fn total(&self) -> Result<Derivation> {
        let mut t = self.d.clone();
        for e in &self.eps {
            t = t.add(e)?;
        }
        Ok(t)
    }

    fn piece(&self, k: usize) -> Option<&Derivation> {
        if k == 0 {
            Some(&self.d)
        } else {
            self.eps.get(k - 1)
        }
    }

    /// Checks homogeneity of every piece and the weight-graded square-zero equations.
    pub fn check(&self) -> Result<MixedCheck> {
        for k in 0..=self.eps.len() {
            let p = self.piece(k).expect("in range");
            for (g, img) in p.images() {
                let w = gen_weight(&self.alg, self.weight, g);
                if img.terms().any(|(m, _)| weight_of(&self.alg, self.weight, m) != w + k as u32) {
                    return Err(Error::Invalid(format!(
                        "mixed piece {k} does not raise the weight by exactly {k} on `{}`",
                        self.alg.name(g)
                    )));
                }
            }
        }
        let mut failing = Vec::new();
        for k in 0..=2 * self.eps.len() {
            let mut ok = true;
            for g in 0..self.alg.len() {
                let x = Element::gen(g);
                let mut acc = Element::zero();
                for i in 0..=k {
                    let (Some(a), Some(b)) = (self.piece(i), self.piece(k - i)) else { continue };
                    acc += &a.apply(&self.alg, &b.apply(&self.alg, &x)?)?;
                }
                if !acc.is_zero() {
                    ok = false;
                    break;
                }
            }
            if !ok {
                failing.push(k);
            }
        }
        Ok(MixedCheck { holds: failing.is_empty(), failing_jumps: failing })
    }

    /// The weight-`p` component with its internal differential, within `bounds`.
    pub fn weight_component(&self, p: u32, bounds: &TruncationBounds) -> Result<Realization> {
        realize(&self.alg, &self.d, self.weight, (p, p), bounds)
    }
}

/// A finite complex cut out of a weight window, with its monomial bases.
#[derive(Clone, Debug)]
pub struct Realization {
    pub complex: FiniteComplex,
    pub bases: BTreeMap<i64, Vec<Monomial>>,
    /// Per degree, the number of basis elements whose image leaves the window at the top.
    pub leakage: BTreeMap<i64, usize>,
}

impl Realization {
    pub fn leaks(&self) -> bool {
        self.leakage.values().any(|&n| n > 0)
    }

    pub fn cohomology_dim(&self, k: i64) -> usize {
        self.complex.cohomology_dim(k)
    }
}

/// `|E|` over a weight window: the direct sum of the weight components with the total differential.
pub fn realization(e: &GradedMixed, window: (u32, u32), bounds: &TruncationBounds) -> Result<Realization> {
    if window.0 > window.1 {
        return Err(Error::Invalid(format!("empty weight window [{}, {}]", window.0, window.1)));
    }
    let total = e.total()?;
    realize(&e.alg, &total, e.weight, window, bounds)
}

fn realize(
    alg: &Algebra,
    d: &Derivation,
    kind: WeightKind,
    window: (u32, u32),
    bounds: &TruncationBounds,
) -> Result<Realization> {
    let mut b = bounds.clone();
    match kind {
        WeightKind::DeRham => b.dr_window = Some(window),
        WeightKind::Ce => b.weight_max = window.1,
    }
    let (lo, hi) = bounds.coh_window;
    let in_window = |m: &Monomial| (window.0..=window.1).contains(&weight_of(alg, kind, m));
    let mut bases = BTreeMap::new();
    for k in lo..=hi + 1 {
        let basis: Vec<Monomial> = basis_enumerate(alg, k, &b)?.into_iter().filter(|m| in_window(m)).collect();
        bases.insert(k, basis);
    }
    let mut complex = FiniteComplex::new(bases.iter().map(|(&k, v)| (k, v.len())).collect());
    let mut leakage = BTreeMap::new();
    for k in lo..=hi {
        let src = &bases[&k];
        let tgt = &bases[&(k + 1)];
        let index: HashMap<&Monomial, usize> = tgt.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let mut mat = Matrix::zeros(tgt.len(), src.len());
        let mut leaked = 0;
        for (j, m) in src.iter().enumerate() {
            let img = d.apply_mono(alg, m)?;
            let mut leak = false;
            for (t, c) in img.terms() {
                match index.get(t) {
                    Some(&i) => mat.set(i, j, c.clone()),
                    None => leak |= weight_of(alg, kind, t) > window.1,
                }
            }
            leaked += usize::from(leak);
        }
        complex.set_diff(k, mat)?;
        leakage.insert(k, leaked);
    }
    Ok(Realization { complex, bases, leakage })
}

/// A closed `p`-form of degree `n` given by its components `ω_i` of weight `p + i`.
#[derive(Clone, Debug)]
pub struct ClosedFormSequence {
    pub p: u32,
    pub n: i64,
    pub components: Vec<Element>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClosedCheck {
    pub closed: bool,
    /// `δω₀ = 0`.
    pub underlying_closed: bool,
    /// First `i` with `d_dR ω_i + δ ω_{i+1} ≠ 0`.
    pub first_failing: Option<usize>,
}

/// Checks `δω₀ = 0` and `d_dR ω_i = -δ ω_{i+1}` for `i ≤ i_max` (with `ω_{i_max+1} = 0`).
pub fn check_closed_form(dr: &DeRham, w: &ClosedFormSequence) -> Result<ClosedCheck> {
    let alg = dr.alg();
    let want_deg = w.n + w.p as i64;
    for (i, c) in w.components.iter().enumerate() {
        alg.check(c)?;
        for (m, _) in c.terms() {
            if alg.mono_dr(m) != w.p + i as u32 || alg.mono_degree(m) != want_deg {
                return Err(Error::Degree(format!(
                    "component {i} has a term `{}` outside weight {} and degree {want_deg}",
                    alg.format_monomial(m),
                    w.p + i as u32
                )));
            }
        }
    }
    let zero = Element::zero();
    let first = w.components.first().unwrap_or(&zero);
    let underlying_closed = dr.pres.d(first)?.is_zero();
    let mut first_failing = None;
    for i in 0..w.components.len() {
        let next = w.components.get(i + 1).unwrap_or(&zero);
        let lhs = &dr.d_dr.apply(alg, &w.components[i])? + &dr.pres.d(next)?;
        if !lhs.is_zero() {
            first_failing = Some(i);
            break;
        }
    }
    Ok(ClosedCheck { closed: underlying_closed && first_failing.is_none(), underlying_closed, first_failing })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NondegReport {
    pub nondegenerate: bool,
    pub rank: usize,
    pub size: usize,
}

/// Evaluates a coefficient at a point of the base: variables take the given values,
/// every other letter vanishes.
fn eval_at(alg: &Algebra, e: &Element, point: &[Q]) -> Q {
    let mut total = Q::zero();
    'terms: for (m, c) in e.terms() {
        let mut v = c.clone();
        for &(g, k) in m.factors() {
            if alg.gen(g).kind != GenKind::Base {
                continue 'terms;
            }
            let x = point.get(g).cloned().unwrap_or_else(Q::zero);
            for _ in 0..k {
                v *= &x;
            }
        }
        total += v;
    }
    total
}

/// Pairing matrix `Ω_{gh}` of a weight-2 form `Σ c·dg·dh`, evaluated at `point`.
pub fn pairing_matrix(dr: &DeRham, omega: &Element, point: &[Q]) -> Result<Matrix> {
    let alg = dr.alg();
    let n = dr.source_len;
    let mut om = Matrix::zeros(n, n);
    for (m, c) in omega.terms() {
        let forms: Vec<(usize, u32)> = m.factors().iter().copied().filter(|&(g, _)| g >= n).collect();
        let rest = Element::term(
            Monomial::from_sorted(m.factors().iter().copied().filter(|&(g, _)| g < n).collect()),
            c.clone(),
        );
        let v = eval_at(alg, &rest, point);
        if v.is_zero() {
            continue;
        }
        match forms.as_slice() {
            [(g, 2)] => {
                let g = g - n;
                om.set(g, g, om.get(g, g) + &v + &v);
            }
            [(g, 1), (h, 1)] => {
                let (g, h) = (g - n, h - n);
                let s = if (alg.gen(n + g).is_odd()) && alg.gen(n + h).is_odd() { -v.clone() } else { v.clone() };
                om.set(g, h, om.get(g, h) + &v);
                om.set(h, g, om.get(h, g) + &s);
            }
            _ => return Err(Error::Degree("form is not of de Rham weight 2".into())),
        }
    }
    Ok(om)
}

/// `ω₀♭` from the tangent generators to the shifted cotangent generators is invertible at `point`.
pub fn nondegeneracy_check(dr: &DeRham, omega: &Element, point: &[Q]) -> Result<NondegReport> {
    if !dr.pres.d(omega)?.is_zero() {
        return Err(Error::Invalid("2-form is not closed for the internal differential".into()));
    }
    let om = pairing_matrix(dr, omega, point)?;
    let rank = om.rank();
    Ok(NondegReport { nondegenerate: rank == dr.source_len, rank, size: dr.source_len })
}

/// The span of monomials of weight `≥ p` within bounds, verified stable under `d`.
#[derive(Clone, Debug)]
pub struct FiltrationComponent {
    pub p: u32,
    pub kind: WeightKind,
    pub bases: BTreeMap<i64, Vec<Monomial>>,
}

impl FiltrationComponent {
    pub fn contains(&self, alg: &Algebra, e: &Element) -> bool {
        e.terms().all(|(m, _)| weight_of(alg, self.kind, m) >= self.p)
    }
}

pub fn filtration_component(
    alg: &Algebra,
    d: &Derivation,
    p: u32,
    kind: WeightKind,
    bounds: &TruncationBounds,
) -> Result<FiltrationComponent> {
    let mut bases = BTreeMap::new();
    for k in bounds.coh_window.0..=bounds.coh_window.1 {
        let basis: Vec<Monomial> =
            basis_enumerate(alg, k, bounds)?.into_iter().filter(|m| weight_of(alg, kind, m) >= p).collect();
        for m in &basis {
            let img = d.apply_mono(alg, m)?;
            let escaped = img.terms().find(|(t, _)| weight_of(alg, kind, t) < p).map(|(t, _)| alg.format_monomial(t));
            if let Some(t) = escaped {
                return Err(Error::Invariant(format!(
                    "differential takes `{}` out of F^{p} (to `{t}`)",
                    alg.format_monomial(m)
                )));
            }
        }
        bases.insert(k, basis);
    }
    Ok(FiltrationComponent { p, kind, bases })
}

/// Compares the kernel of `DR(B) → DR(A)` (killing `fiber` and their forms) with the
/// ideal they generate, in degree `k`. Returns (kernel dimension, ideal dimension).
pub fn projection_kernel(dr: &DeRham, fiber: &[usize], k: i64, bounds: &TruncationBounds) -> Result<(usize, usize)> {
    let alg = dr.alg();
    let killed: Vec<usize> = fiber.iter().flat_map(|&g| [g, dr.form(g)]).collect();
    let basis = basis_enumerate(alg, k, bounds)?;
    let images: Vec<Element> = basis
        .iter()
        .map(|m| {
            if m.factors().iter().any(|(g, _)| killed.contains(g)) {
                Element::zero()
            } else {
                Element::term(m.clone(), Q::one())
            }
        })
        .collect();
    let mut rows: BTreeMap<&Monomial, usize> = BTreeMap::new();
    for img in &images {
        for (t, _) in img.terms() {
            let next = rows.len();
            rows.entry(t).or_insert(next);
        }
    }
    let mut mat = Matrix::zeros(rows.len(), basis.len());
    for (j, img) in images.iter().enumerate() {
        for (t, c) in img.terms() {
            mat.set(rows[t], j, c.clone());
        }
    }
    let kernel = mat.kernel().len();
    let ideal = basis.iter().filter(|m| m.factors().iter().any(|(g, _)| killed.contains(g))).count();
    Ok((kernel, ideal))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WeightComponent {
    pub ce_shift: i64,
    pub dr_shift: i64,
    pub terms: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WeightTable {
    pub components: Vec<WeightComponent>,
    /// Components outside the support `{(0,1)} ∪ {(k,0) : k ≥ 0}`.
    pub outside: Vec<(i64, i64)>,
}

/// Decomposes a derivation of `DR(CE)` by (CE-weight shift, de Rham-weight shift).
pub fn classify_differential(alg: &Algebra, d: &Derivation) -> WeightTable {
    let mut counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for (g, img) in d.images() {
        let gen = alg.gen(g);
        for (m, _) in img.terms() {
            let key = (
                alg.mono_weight(m) as i64 - gen.weight as i64,
                alg.mono_dr(m) as i64 - gen.dr_weight as i64,
            );
            *counts.entry(key).or_default() += 1;
        }
    }
    let outside = counts.keys().copied().filter(|&(c, r)| !((c == 0 && r == 1) || (c >= 0 && r == 0))).collect();
    WeightTable {
        components: counts.into_iter().map(|((c, r), n)| WeightComponent { ce_shift: c, dr_shift: r, terms: n }).collect(),
        outside,
    }
}

/// Splits a derivation into its `(CE shift, dR shift)` components.
pub fn weight_components(alg: &Algebra, d: &Derivation) -> BTreeMap<(i64, i64), Derivation> {
    let table = classify_differential(alg, d);
    table
        .components
        .iter()
        .map(|c| {
            let key = (c.ce_shift, c.dr_shift);
            let part = d.filter_images(|g, m| {
                let gen = alg.gen(g);
                alg.mono_weight(m) as i64 - gen.weight as i64 == key.0
                    && alg.mono_dr(m) as i64 - gen.dr_weight as i64 == key.1
            });
            (key, part)
        })
        .collect()
}
