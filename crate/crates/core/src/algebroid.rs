//! Lie and L∞ algebroid presentations and their Chevalley-Eilenberg algebras.

use std::collections::BTreeMap;

use num_traits::One;
use serde::Serialize;

use crate::derivation::Derivation;
use crate::error::{Error, Result};
use crate::gca::{Algebra, Element, GenKind, Generator, Monomial, Q};
use crate::homology::{DgaPresentation, Provenance, TruncationBounds};

mod transfer;
pub use transfer::{transfer_linfty, ModuleRetract, Transferred};

/// Coefficients `(f_c)` of an `L`-valued element `Σ_c f_c e_c`, with `f_c` in the base.
pub type LVec = Vec<Element>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModuleGen {
    pub name: String,
    pub degree: i64,
    /// Name of the dual ghost in the CE algebra.
    pub ghost: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlgebroidPresentation {
    pub base: DgaPresentation,
    pub module_gens: Vec<ModuleGen>,
    /// `anchor[a]` is a derivation of the base of degree `|e_a|`.
    pub anchor: Vec<Derivation>,
    /// Internal differential `d e_a = Σ_c D_a^c e_c`.
    pub differential: BTreeMap<usize, LVec>,
    /// Brackets `[e_a, e_b]` for `a ≤ b`.
    pub brackets: BTreeMap<(usize, usize), LVec>,
    /// Brackets of arity ≥ 3 keyed by non-decreasing index tuples.
    pub higher_brackets: BTreeMap<Vec<usize>, LVec>,
}

impl AlgebroidPresentation {
    /// An algebroid with zero anchor and brackets.
    pub fn new(base: DgaPresentation, gens: &[(&str, i64)]) -> Result<Self> {
        let mut module_gens = Vec::new();
        for &(name, degree) in gens {
            if degree > 0 {
                return Err(Error::Degree(format!("module generator `{name}` has positive degree {degree}")));
            }
            if module_gens.iter().any(|g: &ModuleGen| g.name == name) || base.alg.index_of(name).is_some() {
                return Err(Error::DuplicateGenerator(name.to_string()));
            }
            module_gens.push(ModuleGen { name: name.to_string(), degree, ghost: format!("eta_{name}") });
        }
        let anchor = module_gens.iter().map(|g| Derivation::zero(&base.alg, g.degree)).collect();
        Ok(AlgebroidPresentation {
            base,
            module_gens,
            anchor,
            differential: BTreeMap::new(),
            brackets: BTreeMap::new(),
            higher_brackets: BTreeMap::new(),
        })
    }

    pub fn rank(&self) -> usize {
        self.module_gens.len()
    }

    pub fn gen_index(&self, name: &str) -> Result<usize> {
        self.module_gens
            .iter()
            .position(|g| g.name == name)
            .ok_or_else(|| Error::UnknownGenerator(name.to_string()))
    }

    pub fn set_ghost_name(&mut self, a: usize, name: &str) {
        self.module_gens[a].ghost = name.to_string();
    }

    pub fn zero_lvec(&self) -> LVec {
        vec![Element::zero(); self.rank()]
    }

    /// Algebra of base generators followed by the module generators, for parsing `L`-valued text.
    fn lvalued_algebra(&self) -> Result<Algebra> {
        let mut a = self.base.alg.clone();
        for g in &self.module_gens {
            a.add(Generator::extra(&g.name, g.degree))?;
        }
        Ok(a)
    }

    /// Parses `Σ f_c e_c`; every term must contain exactly one module generator.
    pub fn parse_lvec(&self, src: &str) -> Result<LVec> {
        let la = self.lvalued_algebra()?;
        let e = la.parse(src)?;
        let nb = self.base.alg.len();
        let mut out = self.zero_lvec();
        for (m, c) in e.terms() {
            let module: Vec<(usize, u32)> = m.factors().iter().copied().filter(|&(i, _)| i >= nb).collect();
            if module.len() != 1 || module[0].1 != 1 {
                return Err(Error::Invalid(format!("`{src}` is not linear in the module generators")));
            }
            let rest = Monomial::from_sorted(m.factors().iter().copied().filter(|&(i, _)| i < nb).collect());
            out[module[0].0 - nb].add_term(rest, c.clone());
        }
        Ok(out)
    }

    pub fn format_lvec(&self, v: &LVec) -> String {
        let la = self.lvalued_algebra().expect("names checked at construction");
        let nb = self.base.alg.len();
        let mut e = Element::zero();
        for (c, f) in v.iter().enumerate() {
            e += &la.mul_unchecked(f, &Element::gen(nb + c));
        }
        la.format(&e)
    }

    pub fn set_anchor(&mut self, a: usize, v: Derivation) -> Result<()> {
        if v.degree != self.module_gens[a].degree {
            return Err(Error::Degree(format!(
                "anchor of `{}` has degree {}, expected {}",
                self.module_gens[a].name, v.degree, self.module_gens[a].degree
            )));
        }
        let mut v = v;
        v.extend_by_zero(&self.base.alg);
        v.validate(&self.base.alg)?;
        self.anchor[a] = v;
        Ok(())
    }

    /// Parses a vector field written with `d_<g>` for `∂/∂g`, e.g. `x*d_x - 2*y*d_y`.
    pub fn set_anchor_str(&mut self, a: usize, src: &str) -> Result<()> {
        let v = parse_vector_field(&self.base.alg, self.module_gens[a].degree, src)?;
        self.set_anchor(a, v)
    }

    pub fn set_bracket(&mut self, a: usize, b: usize, v: LVec) -> Result<()> {
        self.check_lvec(&v, self.module_gens[a].degree + self.module_gens[b].degree)?;
        let (a, b, v) = if a <= b {
            (a, b, v)
        } else {
            let s = self.module_gens[a].degree * self.module_gens[b].degree;
            let sign = if s.rem_euclid(2) == 1 { Q::one() } else { -Q::one() };
            (b, a, v.iter().map(|e| e.scale(&sign)).collect())
        };
        self.brackets.insert((a, b), v);
        Ok(())
    }

    pub fn set_bracket_str(&mut self, a: usize, b: usize, src: &str) -> Result<()> {
        let v = self.parse_lvec(src)?;
        self.set_bracket(a, b, v)
    }

    pub fn set_higher(&mut self, slots: &[usize], v: LVec) -> Result<()> {
        if slots.len() < 3 {
            return Err(Error::Invalid("higher brackets need arity at least 3".into()));
        }
        let deg: i64 = slots.iter().map(|&s| self.module_gens[s].degree).sum::<i64>() + 2 - slots.len() as i64 + 0;
        self.check_lvec(&v, deg)?;
        let mut key = slots.to_vec();
        key.sort_unstable();
        self.higher_brackets.insert(key, v);
        Ok(())
    }

    pub fn set_differential(&mut self, a: usize, v: LVec) -> Result<()> {
        self.check_lvec(&v, self.module_gens[a].degree + 1)?;
        self.differential.insert(a, v);
        Ok(())
    }

    /// Checks that `Σ f_c e_c` is homogeneous of degree `deg`.
    fn check_lvec(&self, v: &LVec, deg: i64) -> Result<()> {
        if v.len() != self.rank() {
            return Err(Error::Invalid("L-valued element has the wrong length".into()));
        }
        for (c, f) in v.iter().enumerate() {
            self.base.alg.check(f)?;
            for (m, _) in f.terms() {
                let got = self.base.alg.mono_degree(m) + self.module_gens[c].degree;
                if got != deg {
                    return Err(Error::Degree(format!(
                        "term `{}*{}` has degree {got}, expected {deg}",
                        self.base.alg.format_monomial(m),
                        self.module_gens[c].name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn bracket(&self, a: usize, b: usize) -> LVec {
        if a <= b {
            self.brackets.get(&(a, b)).cloned().unwrap_or_else(|| self.zero_lvec())
        } else {
            let s = self.module_gens[a].degree * self.module_gens[b].degree;
            let sign = if s.rem_euclid(2) == 1 { Q::one() } else { -Q::one() };
            self.bracket(b, a).iter().map(|e| e.scale(&sign)).collect()
        }
    }

    pub fn ghost_degree(&self, a: usize) -> i64 {
        1 - self.module_gens[a].degree
    }

    pub fn max_arity(&self) -> usize {
        let mut n = if self.brackets.values().any(|v| v.iter().any(|e| !e.is_zero())) { 2 } else { 1 };
        for k in self.higher_brackets.keys() {
            n = n.max(k.len());
        }
        n
    }
}

/// Parses `Σ v^g d_g` into the derivation `g ↦ v^g` of degree `degree`.
pub fn parse_vector_field(base: &Algebra, degree: i64, src: &str) -> Result<Derivation> {
    let mut va = base.clone();
    let nb = base.len();
    for g in base.gens() {
        va.add(Generator::extra(format!("d_{}", g.name), -g.degree))?;
    }
    let e = va.parse(src)?;
    let mut images = vec![Element::zero(); nb];
    for (m, c) in e.terms() {
        let ds: Vec<(usize, u32)> = m.factors().iter().copied().filter(|&(i, _)| i >= nb).collect();
        if ds.len() != 1 || ds[0].1 != 1 {
            return Err(Error::Invalid(format!("`{src}` is not a vector field (one d_ factor per term)")));
        }
        let rest = Monomial::from_sorted(m.factors().iter().copied().filter(|&(i, _)| i < nb).collect());
        images[ds[0].0 - nb].add_term(rest, c.clone());
    }
    let mut d = Derivation::zero(base, degree);
    for (g, img) in images.into_iter().enumerate() {
        d.set(base, g, img)?;
    }
    Ok(d)
}

/// Text form of a derivation as a vector field `Σ v^g*d_g`, in the grammar of [`parse_vector_field`].
pub fn format_vector_field(base: &Algebra, v: &Derivation) -> String {
    let mut va = base.clone();
    let nb = base.len();
    for g in base.gens() {
        va.add(Generator::extra(format!("d_{}", g.name), -g.degree)).expect("fresh names");
    }
    let mut e = Element::zero();
    for (g, img) in v.images() {
        e += &va.mul_unchecked(img, &Element::gen(nb + g));
    }
    va.format(&e)
}

/// A Chevalley-Eilenberg algebra together with its ghost bookkeeping.
#[derive(Clone, Debug)]
pub struct Ce {
    pub pres: DgaPresentation,
    pub ghosts: Vec<usize>,
    pub base_len: usize,
    pub weight_max: u32,
}

fn multiset_factor(key: &[usize]) -> Q {
    let mut f = Q::one();
    let mut k = 0;
    while k < key.len() {
        let mut j = k;
        while j < key.len() && key[j] == key[k] {
            j += 1;
        }
        for m in 2..=(j - k) {
            f *= Q::from_integer((m as i64).into());
        }
        k = j;
    }
    Q::one() / f
}

/// Builds the CE algebra, truncating generator images to CE weight ≤ `weight_max`.
pub fn ce_algebra(a: &AlgebroidPresentation, weight_max: u32) -> Result<Ce> {
    if a.rank() > 0 && weight_max == 0 {
        return Err(Error::Budget("weight_max = 0 leaves no room for ghosts".into()));
    }
    let mut alg = a.base.alg.clone();
    let base_len = alg.len();
    let mut ghosts = Vec::new();
    for (i, g) in a.module_gens.iter().enumerate() {
        ghosts.push(alg.add(Generator::ghost(&g.ghost, a.ghost_degree(i)))?);
    }
    let lift = |e: &Element| -> Element { e.clone() };
    let eta = |i: usize| Element::gen(ghosts[i]);
    let mut d = Derivation::zero(&alg, 1);
    for g in 0..base_len {
        let mut img = lift(a.base.differential.image(g).unwrap_or(&Element::zero()));
        for (i, rho) in a.anchor.iter().enumerate() {
            let v = rho.image(g).cloned().unwrap_or_default();
            if !v.is_zero() {
                img += &alg.mul_unchecked(&eta(i), &v);
            }
        }
        d.set(&alg, g, img.filter(|m| alg.mono_weight(m) <= weight_max))?;
    }
    for c in 0..a.rank() {
        let mut img = Element::zero();
        for (&i, dv) in &a.differential {
            img -= &alg.mul_unchecked(&eta(i), &dv[c]);
        }
        let mut tables: Vec<(Vec<usize>, &LVec)> = a.brackets.iter().map(|(&(x, y), v)| (vec![x, y], v)).collect();
        tables.extend(a.higher_brackets.iter().map(|(k, v)| (k.clone(), v)));
        for (key, v) in tables {
            if v[c].is_zero() || key.len() as u32 > weight_max {
                continue;
            }
            let mut prod = Element::constant(-multiset_factor(&key));
            for &s in &key {
                prod = alg.mul_unchecked(&prod, &eta(s));
            }
            img += &alg.mul_unchecked(&prod, &v[c]);
        }
        d.set(&alg, ghosts[c], img.filter(|m| alg.mono_weight(m) <= weight_max))?;
    }
    let pres = DgaPresentation::new(alg, d, Provenance::Ce)?;
    Ok(Ce { pres, ghosts, base_len, weight_max })
}

impl Ce {
    /// Weight-homogeneous pieces `δ_k` raising CE weight by exactly `k`.
    pub fn weight_split(&self) -> Vec<Derivation> {
        ce_weight_split(&self.pres)
    }
}

/// Splits a differential into pieces raising the CE weight by exactly `k`.
pub fn ce_weight_split(pres: &DgaPresentation) -> Vec<Derivation> {
    let alg = &pres.alg;
    let mut max_shift = 0u32;
    for (g, img) in pres.differential.images() {
        for (m, _) in img.terms() {
            let s = alg.mono_weight(m).saturating_sub(alg.gen(g).weight);
            max_shift = max_shift.max(s);
        }
    }
    (0..=max_shift)
        .map(|k| {
            pres.differential
                .filter_images(|g, m| alg.mono_weight(m) as i64 - alg.gen(g).weight as i64 == k as i64)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub identity: String,
    pub witness: Vec<String>,
    pub residual: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub failures: Vec<Failure>,
}

impl ValidationReport {
    fn from_failures(failures: Vec<Failure>) -> Self {
        ValidationReport { valid: failures.is_empty(), failures }
    }
}

/// Checks the anchor morphism property, Jacobi (through `δ_CE² = 0` on ghosts) and the
/// compatibility of the anchor with the base differential.
pub fn validate_algebroid(a: &AlgebroidPresentation, bounds: &TruncationBounds) -> Result<ValidationReport> {
    let w = bounds.weight_max.max(a.max_arity() as u32 + 1);
    let ce = ce_algebra(a, w.max(1))?;
    let alg = &ce.pres.alg;
    let balg = &a.base.alg;
    let mut failures = Vec::new();

    // direct anchor-morphism check on base generators
    for x in 0..a.rank() {
        for y in x..a.rank() {
            let (ex, ey) = (a.ghost_degree(x), a.ghost_degree(y));
            if x == y && ex.rem_euclid(2) == 1 {
                continue;
            }
            let br = a.bracket(x, y);
            for g in 0..balg.len() {
                let gx = Element::gen(g);
                let ry = a.anchor[y].apply(balg, &gx)?;
                let rx = a.anchor[x].apply(balg, &gx)?;
                let mut defect = Element::zero();
                let s1 = if ex.rem_euclid(2) == 1 { -Q::one() } else { Q::one() };
                defect.add_scaled(&a.anchor[y].apply(balg, &rx)?, &s1);
                if x != y {
                    let s2 = if (ey + ex * ey).rem_euclid(2) == 1 { -Q::one() } else { Q::one() };
                    defect.add_scaled(&a.anchor[x].apply(balg, &ry)?, &s2);
                }
                let mut rhs = Element::zero();
                for (c, f) in br.iter().enumerate() {
                    if !f.is_zero() {
                        let rc = a.anchor[c].apply(balg, &gx)?;
                        rhs += &balg.mul_unchecked(f, &rc);
                    }
                }
                if x == y {
                    rhs = rhs.scale(&crate::gca::qf(1, 2));
                }
                defect -= &rhs;
                if !defect.is_zero() {
                    failures.push(Failure {
                        identity: "anchor_morphism".into(),
                        witness: vec![a.module_gens[x].name.clone(), a.module_gens[y].name.clone(), balg.name(g).to_string()],
                        residual: balg.format(&defect),
                    });
                }
            }
        }
    }

    // δ² on base generators: weight 0 is the base, weight 1 is anchor/base compatibility
    for g in 0..ce.base_len {
        let dd = ce.pres.d(&ce.pres.d(&Element::gen(g))?)?;
        for wt in 0..=1u32 {
            let part = dd.filter(|m| alg.mono_weight(m) == wt);
            if part.is_zero() {
                continue;
            }
            let mut witness = ghost_witness(&ce, &part);
            witness.push(alg.name(g).to_string());
            failures.push(Failure {
                identity: if wt == 0 { "base_square_zero".into() } else { "leibniz".into() },
                witness,
                residual: alg.format(&part),
            });
        }
    }
    // δ² on ghosts: Jacobi, with a witness triple read off the first offending ghost monomial
    for (c, &gh) in ce.ghosts.iter().enumerate() {
        let dd = ce.pres.d(&ce.pres.d(&Element::gen(gh))?)?.filter(|m| alg.mono_weight(m) <= w);
        if !dd.is_zero() {
            let mut witness = ghost_witness(&ce, &dd);
            witness.push(a.module_gens[c].name.clone());
            failures.push(Failure { identity: "jacobi".into(), witness, residual: alg.format(&dd) });
        }
    }
    Ok(ValidationReport::from_failures(failures))
}

/// Module generator names dual to the ghosts of the first term of `e`.
fn ghost_witness(ce: &Ce, e: &Element) -> Vec<String> {
    let alg = &ce.pres.alg;
    let Some((m, _)) = e.terms().next() else { return vec![] };
    let mut out = Vec::new();
    for &(i, k) in m.factors() {
        if alg.gen(i).kind == GenKind::Ghost {
            let a = ce.ghosts.iter().position(|&g| g == i).expect("ghost index");
            for _ in 0..k {
                out.push(alg.name(ce.ghosts[a]).to_string());
            }
        }
    }
    out
}

/// Action algebroid `A ⊗ g` of a Lie algebra acting by vector fields on a polynomial base.
pub fn action_algebroid(
    base: DgaPresentation,
    gens: &[&str],
    brackets: &[(&str, &str, &str)],
    action: &[(&str, &str)],
) -> Result<AlgebroidPresentation> {
    let spec: Vec<(&str, i64)> = gens.iter().map(|&g| (g, 0)).collect();
    let mut a = AlgebroidPresentation::new(base, &spec)?;
    for &(x, y, v) in brackets {
        let (i, j) = (a.gen_index(x)?, a.gen_index(y)?);
        let lv = a.parse_lvec(v)?;
        if lv.iter().any(|f| f.terms().any(|(m, _)| !m.is_one())) {
            return Err(Error::Invalid(format!("bracket [{x}, {y}] must have constant coefficients")));
        }
        a.set_bracket(i, j, lv)?;
    }
    for &(x, v) in action {
        let i = a.gen_index(x)?;
        a.set_anchor_str(i, v)?;
    }
    let bounds = TruncationBounds::new(0, 0, 0, 3)?;
    let report = validate_algebroid(&a, &bounds)?;
    if let Some(f) = report.failures.iter().find(|f| f.identity == "anchor_morphism") {
        return Err(Error::Invalid(format!(
            "action is not a Lie algebra morphism: defect {} on ({})",
            f.residual,
            f.witness.join(", ")
        )));
    }
    if let Some(f) = report.failures.first() {
        return Err(Error::Invalid(format!("invalid action algebroid: {} fails ({})", f.identity, f.residual)));
    }
    Ok(a)
}

/// The tangent algebroid of a polynomial base: `∂_i` with identity anchor and zero brackets.
pub fn tangent_algebroid(base: DgaPresentation) -> Result<AlgebroidPresentation> {
    let names: Vec<String> = base.alg.gens().iter().map(|g| format!("D{}", g.name)).collect();
    let spec: Vec<(&str, i64)> = names.iter().map(|n| (n.as_str(), 0)).collect();
    let mut a = AlgebroidPresentation::new(base, &spec)?;
    for i in 0..a.rank() {
        let name = format!("d_{}", a.base.alg.name(i));
        a.set_anchor_str(i, &name)?;
    }
    Ok(a)
}

/// A map of semi-free base algebras given on generators.
#[derive(Clone, Debug)]
pub struct RingMap {
    pub source: DgaPresentation,
    pub target: DgaPresentation,
    pub images: Vec<Element>,
}

impl RingMap {
    pub fn apply(&self, e: &Element) -> Result<Element> {
        self.source.alg.map_to(&self.target.alg, e, &self.images)
    }

    /// `φ ∘ δ_source = δ_target ∘ φ` on generators.
    pub fn respects_differential(&self) -> Result<bool> {
        for g in 0..self.source.alg.len() {
            let lhs = self.apply(&self.source.d(&Element::gen(g))?)?;
            let rhs = self.target.d(&self.images[g])?;
            if lhs != rhs {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The map sending each source generator to the target generator of the same name.
    pub fn by_name(source: DgaPresentation, target: DgaPresentation) -> Result<Self> {
        let images = source.alg.gens().iter().map(|g| target.alg.var(&g.name)).collect::<Result<_>>()?;
        Ok(RingMap { source, target, images })
    }
}

/// Lift of a vector field `v` on the base variables to the Koszul generators:
/// `ξ_i ↦ -Σ_j (∂_i v^j) ξ_j`.
pub fn cotangent_lift(alg: &Algebra, vars: &[usize], xis: &[usize], v: &Derivation) -> Result<Derivation> {
    let mut out = Derivation::zero(alg, v.degree);
    for &x in vars {
        out.set(alg, x, v.image(x).cloned().unwrap_or_default())?;
    }
    for (i, &xi) in xis.iter().enumerate() {
        let mut img = Element::zero();
        for (j, &xj) in vars.iter().enumerate() {
            let vj = v.image(xj).cloned().unwrap_or_default();
            let dij = crate::derivation::partial(alg, &vj, vars[i])?;
            img -= &alg.mul_unchecked(&dij, &Element::gen(xis[j]));
        }
        out.set(alg, xi, img)?;
    }
    Ok(out)
}

/// Base change of the CE algebra along `φ`: anchors are transported to the target, with
/// `ξ_v ↦` cotangent lift on Koszul antifields and zero on other new generators.
pub fn base_change(a: &AlgebroidPresentation, map: &RingMap) -> Result<AlgebroidPresentation> {
    if !map.respects_differential()? {
        return Err(Error::Invalid("ring map does not commute with the differentials".into()));
    }
    let tgt = &map.target.alg;
    let spec: Vec<(&str, i64)> = a.module_gens.iter().map(|g| (g.name.as_str(), g.degree)).collect();
    let mut out = AlgebroidPresentation::new(map.target.clone(), &spec)?;
    for (i, g) in a.module_gens.iter().enumerate() {
        out.set_ghost_name(i, &g.ghost);
    }
    // target generators hit by a source generator
    let mut pre: BTreeMap<usize, usize> = BTreeMap::new();
    for (g, img) in map.images.iter().enumerate() {
        if let Some((m, c)) = img.terms().next() {
            if img.len() == 1 && c.is_one() && m.factors().len() == 1 && m.factors()[0].1 == 1 {
                pre.insert(m.factors()[0].0, g);
            }
        }
    }
    let vars: Vec<usize> = (0..tgt.len()).filter(|&i| tgt.gen(i).kind == GenKind::Base).collect();
    for (i, rho) in a.anchor.iter().enumerate() {
        let mut lifted = Derivation::zero(tgt, rho.degree);
        for t in 0..tgt.len() {
            if let Some(&g) = pre.get(&t) {
                lifted.set(tgt, t, map.apply(rho.image(g).unwrap_or(&Element::zero()))?)?;
            }
        }
        // Koszul antifields `xi_<v>` over transported base variables get the cotangent lift
        let mut xis = Vec::new();
        let mut xvars = Vec::new();
        for &v in &vars {
            if let Some(xi) = tgt.index_of(&crate::critical_locus::xi_name(tgt.name(v))) {
                if !pre.contains_key(&xi) {
                    xvars.push(v);
                    xis.push(xi);
                }
            }
        }
        if !xis.is_empty() {
            let lift = cotangent_lift(tgt, &vars, &xis, &lifted)?;
            if xvars.len() == vars.len() {
                for &xi in &xis {
                    lifted.set(tgt, xi, lift.image(xi).cloned().unwrap_or_default())?;
                }
            }
        }
        out.set_anchor(i, lifted)?;
        for t in 0..map.source.alg.len() {
            let lhs = out.anchor[i].apply(tgt, &map.images[t])?;
            let rhs = map.apply(&rho.apply(&map.source.alg, &Element::gen(t))?)?;
            if lhs != rhs {
                return Err(Error::Invalid(format!(
                    "anchor of `{}` does not lift along the ring map at `{}`",
                    a.module_gens[i].name,
                    map.source.alg.name(t)
                )));
            }
        }
    }
    let tr = |v: &LVec| -> Result<LVec> { v.iter().map(|e| map.apply(e)).collect() };
    for (&k, v) in &a.brackets {
        out.brackets.insert(k, tr(v)?);
    }
    for (k, v) in &a.higher_brackets {
        out.higher_brackets.insert(k.clone(), tr(v)?);
    }
    for (&k, v) in &a.differential {
        out.differential.insert(k, tr(v)?);
    }
    Ok(out)
}

pub fn base_change_ce(a: &AlgebroidPresentation, map: &RingMap, weight_max: u32) -> Result<Ce> {
    let b = base_change(a, map)?;
    let ce = ce_algebra(&b, weight_max)?;
    let sz = ce.pres.square_zero(Some(weight_max))?;
    if !sz.holds {
        return Err(Error::NotSquareZero(sz.witness.unwrap_or_default()));
    }
    Ok(ce)
}

/// A representation up to homotopy on a free module `E`.
#[derive(Clone, Debug)]
pub struct RepUpToHomotopy {
    /// CE algebra of `L` with the module letters `E` appended.
    pub alg: Algebra,
    pub ce: Ce,
    pub module: Vec<usize>,
    /// `d_E`, `∇` and the `ω_i`, all given as images of the module letters.
    pub d_e: Vec<Element>,
    pub connection: Vec<Vec<Element>>,
    pub corrections: BTreeMap<u32, Vec<Element>>,
}

impl RepUpToHomotopy {
    pub fn new(ce: &Ce, module: &[(&str, i64)]) -> Result<Self> {
        let mut alg = ce.pres.alg.clone();
        let mut idx = Vec::new();
        for &(n, d) in module {
            idx.push(alg.add(Generator::new(n, d, GenKind::Module))?);
        }
        let z = vec![Element::zero(); idx.len()];
        Ok(RepUpToHomotopy {
            alg,
            ce: ce.clone(),
            module: idx,
            d_e: z.clone(),
            connection: vec![z; ce.ghosts.len()],
            corrections: BTreeMap::new(),
        })
    }

    fn module_pos(&self, name: &str) -> Result<usize> {
        let i = self.alg.id(name)?;
        self.module.iter().position(|&m| m == i).ok_or_else(|| Error::UnknownGenerator(name.to_string()))
    }

    pub fn set_d_e(&mut self, e: &str, img: &str) -> Result<()> {
        let k = self.module_pos(e)?;
        self.d_e[k] = self.alg.parse(img)?;
        Ok(())
    }

    /// `∇_{e_a}(e) = img`.
    pub fn set_connection(&mut self, a: usize, e: &str, img: &str) -> Result<()> {
        let k = self.module_pos(e)?;
        self.connection[a][k] = self.alg.parse(img)?;
        Ok(())
    }

    /// `ω_i(e) = img`, with `img` a CE-weight-`i` element linear in the module letters.
    pub fn set_correction(&mut self, i: u32, e: &str, img: &str) -> Result<()> {
        let k = self.module_pos(e)?;
        let n = self.module.len();
        let v = self.alg.parse(img)?;
        self.corrections.entry(i).or_insert_with(|| vec![Element::zero(); n])[k] = v;
        Ok(())
    }

    /// The total operator `D = d_E + d_∇ + Σ ω_i` on `CE(L) ⊗ E`.
    pub fn total(&self) -> Result<Derivation> {
        let mut d = Derivation::zero(&self.alg, 1);
        for (g, img) in self.ce.pres.differential.images() {
            d.set(&self.alg, g, img.clone())?;
        }
        for (k, &m) in self.module.iter().enumerate() {
            let mut img = self.d_e[k].clone();
            for (a, &gh) in self.ce.ghosts.iter().enumerate() {
                img += &self.alg.mul_unchecked(&Element::gen(gh), &self.connection[a][k]);
            }
            for v in self.corrections.values() {
                img += &v[k];
            }
            d.set(&self.alg, m, img)?;
        }
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RepEquation {
    pub weight: u32,
    pub holds: bool,
    pub residual: String,
}

/// Checks `Σ_{p+q=i} ω_p ∘ ω_q = 0` for each `i ≤ weight_max` on the module letters.
pub fn validate_rep_up_to_homotopy(r: &RepUpToHomotopy, bounds: &TruncationBounds) -> Result<Vec<RepEquation>> {
    let d = r.total()?;
    let mut out = Vec::new();
    let mut residuals: Vec<Element> = Vec::new();
    for &m in &r.module {
        residuals.push(d.apply(&r.alg, d.image(m).expect("set above"))?);
    }
    for i in 0..=bounds.weight_max {
        let mut res = Element::zero();
        for e in &residuals {
            res += &e.filter(|mm| r.alg.mono_weight(mm) == i);
        }
        out.push(RepEquation { weight: i, holds: res.is_zero(), residual: r.alg.format(&res) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical_locus::polynomial_ring;

    fn poly_base(vars: &[&str]) -> DgaPresentation {
        let a = polynomial_ring(vars).unwrap();
        let d = Derivation::zero(&a, 1);
        DgaPresentation::new(a, d, Provenance::Other).unwrap()
    }

    fn bounds() -> TruncationBounds {
        TruncationBounds::new(3, 0, 3, 3).unwrap()
    }

    #[test]
    fn abelian_on_line() {
        let a = action_algebroid(poly_base(&["x"]), &["e"], &[], &[("e", "x*d_x")]).unwrap();
        let ce = ce_algebra(&a, 3).unwrap();
        let alg = &ce.pres.alg;
        assert_eq!(alg.format(&ce.pres.d(&alg.var("x").unwrap()).unwrap()), "x*eta_e");
        assert!(ce.pres.d(&alg.var("eta_e").unwrap()).unwrap().is_zero());
    }

    #[test]
    fn two_dim_lie_algebra() {
        let a = action_algebroid(poly_base(&[]), &["e1", "e2"], &[("e1", "e2", "e1")], &[]).unwrap();
        let ce = ce_algebra(&a, 3).unwrap();
        let alg = &ce.pres.alg;
        assert_eq!(alg.format(&ce.pres.d(&alg.var("eta_e1").unwrap()).unwrap()), "-eta_e1*eta_e2");
        assert!(ce.pres.d(&alg.var("eta_e2").unwrap()).unwrap().is_zero());
        assert!(ce.pres.square_zero(None).unwrap().holds);
    }

    #[test]
    fn anchor_defect_detected() {
        let mut a = AlgebroidPresentation::new(poly_base(&["x", "y"]), &[("e1", 0), ("e2", 0)]).unwrap();
        a.set_bracket_str(0, 1, "e1").unwrap();
        a.set_anchor_str(0, "d_x").unwrap();
        let r = validate_algebroid(&a, &bounds()).unwrap();
        assert!(!r.valid);
        assert!(r.failures.iter().any(|f| f.identity == "anchor_morphism"));
        let ce = ce_algebra(&a, 3).unwrap();
        assert!(!ce.pres.square_zero(None).unwrap().holds);
        assert!(action_algebroid(poly_base(&["x", "y"]), &["e1", "e2"], &[("e1", "e2", "e1")], &[("e1", "d_x")]).is_err());
    }

    #[test]
    fn tangent_algebroid_valid() {
        let t = tangent_algebroid(poly_base(&["x", "y"])).unwrap();
        assert!(validate_algebroid(&t, &bounds()).unwrap().valid);
    }

    #[test]
    fn weight_split_strict() {
        let a = action_algebroid(poly_base(&["x", "y"]), &["e"], &[], &[("e", "x*d_x - 2*y*d_y")]).unwrap();
        let ce = ce_algebra(&a, 3).unwrap();
        let parts = ce.weight_split();
        assert_eq!(parts.len(), 2);
        assert!(parts[0].is_zero());
        let trivial = AlgebroidPresentation::new(poly_base(&["x"]), &[]).unwrap();
        assert_eq!(ce_algebra(&trivial, 0).unwrap().weight_split().len(), 1);
    }

    #[test]
    fn weight_zero_refuses_ghosts() {
        let a = action_algebroid(poly_base(&["x"]), &["e"], &[], &[("e", "x*d_x")]).unwrap();
        assert!(matches!(ce_algebra(&a, 0), Err(Error::Budget(_))));
    }

    #[test]
    fn lvec_round_trip() {
        let mut a = AlgebroidPresentation::new(poly_base(&["x"]), &[("e1", 0), ("e2", 0)]).unwrap();
        let v = a.parse_lvec("x*e1 - 2*e2").unwrap();
        assert_eq!(a.format_lvec(&v), "x*e1 - 2*e2");
        assert!(a.parse_lvec("x").is_err());
        assert!(a.set_bracket_str(0, 1, "e3").is_err());
    }

    #[test]
    fn non_equivariant_action_rejected() {
        let r = action_algebroid(poly_base(&["x", "y"]), &["h", "e"], &[("h", "e", "2*e")], &[("h", "x*d_x"), ("e", "y*d_x")]);
        assert!(matches!(r, Err(Error::Invalid(_))));
        let ok = action_algebroid(poly_base(&["x", "y"]), &["h", "e"], &[("h", "e", "2*e")], &[("h", "2*x*d_x"), ("e", "x^2*d_x")]);
        assert!(ok.is_ok());
        let ok = action_algebroid(poly_base(&["x"]), &["h", "e"], &[("h", "e", "2*e")], &[("h", "-2*x*d_x"), ("e", "d_x")]);
        assert!(ok.is_ok());
    }

    #[test]
    fn ternary_bracket_weight_split() {
        let mut a = AlgebroidPresentation::new(poly_base(&[]), &[("e1", 0), ("e2", 0), ("e3", 0), ("f", -1)]).unwrap();
        let v = a.parse_lvec("f").unwrap();
        a.set_higher(&[2, 0, 1], v).unwrap();
        let ce = ce_algebra(&a, 3).unwrap();
        let alg = &ce.pres.alg;
        assert_eq!(alg.format(&ce.pres.d(&alg.var("eta_f").unwrap()).unwrap()), "-eta_e1*eta_e2*eta_e3");
        assert_eq!(ce.weight_split().len(), 3);
        assert!(ce.pres.square_zero(None).unwrap().holds);
    }

    fn lie2() -> Ce {
        let a = action_algebroid(poly_base(&[]), &["e1", "e2"], &[("e1", "e2", "e1")], &[]).unwrap();
        ce_algebra(&a, 3).unwrap()
    }

    #[test]
    fn flat_representation() {
        let mut r = RepUpToHomotopy::new(&lie2(), &[("f", 0)]).unwrap();
        r.set_connection(1, "f", "f").unwrap();
        let eqs = validate_rep_up_to_homotopy(&r, &bounds()).unwrap();
        assert!(eqs.iter().all(|e| e.holds));
    }

    #[test]
    fn curved_connection_fails_at_two() {
        let mut r = RepUpToHomotopy::new(&lie2(), &[("f", 0)]).unwrap();
        r.set_connection(0, "f", "f").unwrap();
        let eqs = validate_rep_up_to_homotopy(&r, &bounds()).unwrap();
        let bad: Vec<u32> = eqs.iter().filter(|e| !e.holds).map(|e| e.weight).collect();
        assert_eq!(bad, vec![2]);
    }

    #[test]
    fn two_term_module_compensates_curvature() {
        let mut r = RepUpToHomotopy::new(&lie2(), &[("f0", 0), ("f1", 1)]).unwrap();
        r.set_d_e("f0", "f1").unwrap();
        r.set_connection(0, "f0", "f0").unwrap();
        r.set_connection(0, "f1", "f1").unwrap();
        let eqs = validate_rep_up_to_homotopy(&r, &bounds()).unwrap();
        assert!(!eqs[2].holds);
        r.set_correction(2, "f1", "eta_e1*eta_e2*f0").unwrap();
        let eqs = validate_rep_up_to_homotopy(&r, &bounds()).unwrap();
        assert!(eqs.iter().all(|e| e.holds), "{eqs:?}");
    }

    fn gm_action() -> AlgebroidPresentation {
        action_algebroid(poly_base(&["x", "y"]), &["e"], &[], &[("e", "x*d_x - 2*y*d_y")]).unwrap()
    }

    #[test]
    fn base_change_to_koszul() {
        let a = gm_action();
        let k = crate::critical_locus::koszul_complex(&["x", "y"], "x^2*y").unwrap();
        let map = RingMap::by_name(a.base.clone(), k.pres.clone()).unwrap();
        let ce = base_change_ce(&a, &map, 3).unwrap();
        let alg = &ce.pres.alg;
        let names: Vec<&str> = alg.gens().iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, ["x", "y", "xi_x", "xi_y", "eta_e"]);
        let d = |n: &str| alg.format(&ce.pres.d(&alg.var(n).unwrap()).unwrap());
        assert_eq!(d("x"), "x*eta_e");
        assert_eq!(d("y"), "-2*y*eta_e");
        assert_eq!(d("xi_x"), "2*x*y + xi_x*eta_e");
        assert_eq!(d("xi_y"), "x^2 - 2*xi_y*eta_e");
        assert!(ce.pres.square_zero(None).unwrap().holds);
    }

    #[test]
    fn base_change_adds_variable() {
        let a = action_algebroid(poly_base(&["x"]), &["e"], &[], &[("e", "x*d_x")]).unwrap();
        let map = RingMap::by_name(a.base.clone(), poly_base(&["x", "y"])).unwrap();
        let b = base_change(&a, &map).unwrap();
        assert_eq!(format_vector_field(&b.base.alg, &b.anchor[0]), "x*d_x");
        assert!(base_change_ce(&a, &map, 3).unwrap().pres.square_zero(None).unwrap().holds);
    }

    #[test]
    fn base_change_identity_and_composite() {
        let a = gm_action();
        let id = RingMap::by_name(a.base.clone(), a.base.clone()).unwrap();
        let same = base_change_ce(&a, &id, 3).unwrap();
        assert_eq!(same.pres.differential, ce_algebra(&a, 3).unwrap().pres.differential);

        let mid = poly_base(&["x", "y", "z"]);
        let last = poly_base(&["x", "y", "z", "w"]);
        let f = RingMap::by_name(a.base.clone(), mid.clone()).unwrap();
        let g = RingMap::by_name(mid.clone(), last.clone()).unwrap();
        let step = base_change(&base_change(&a, &f).unwrap(), &g).unwrap();
        let direct = base_change(&a, &RingMap::by_name(a.base.clone(), last).unwrap()).unwrap();
        assert_eq!(ce_algebra(&step, 3).unwrap().pres.differential, ce_algebra(&direct, 3).unwrap().pres.differential);
    }

    #[test]
    fn ring_map_must_respect_differential() {
        let a = gm_action();
        let k = crate::critical_locus::koszul_complex(&["x", "y"], "x^2*y").unwrap();
        let back = RingMap::by_name(k.pres.clone(), a.base.clone());
        assert!(back.is_err());
        let mut images = vec![k.pres.alg.var("x").unwrap(), k.pres.alg.var("y").unwrap()];
        images[0] = k.pres.alg.var("x").unwrap();
        let bad = RingMap { source: a.base.clone(), target: k.pres.clone(), images: images.clone() };
        assert!(bad.respects_differential().unwrap());
        let zero_d = Derivation::zero(&k.pres.alg, 1);
        let flat = DgaPresentation::new(k.pres.alg.clone(), zero_d, Provenance::Other).unwrap();
        let kt = RingMap { source: k.pres.clone(), target: flat, images: (0..4).map(Element::gen).collect() };
        assert!(!kt.respects_differential().unwrap());
    }
}
