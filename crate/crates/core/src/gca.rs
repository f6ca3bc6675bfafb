//! Graded-commutative polynomial algebras over Q with Koszul signs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qf(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Role of a generator inside a presentation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    /// Polynomial base variable.
    Base,
    /// Antifield, antighost or any other adjoined generator.
    Extra,
    /// Chevalley-Eilenberg ghost dual to a module generator.
    Ghost,
    /// Letter of a module (used for representations).
    Module,
    /// The de Rham image `dg` of generator `g`.
    Form(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Generator {
    pub name: String,
    /// Cohomological degree; the differential has degree +1.
    pub degree: i64,
    /// Chevalley-Eilenberg weight tag.
    pub weight: u32,
    /// Contribution to the polynomial degree (1 for base variables and their `d`).
    pub poly: u32,
    /// De Rham weight (1 for `dg`).
    pub dr_weight: u32,
    pub kind: GenKind,
}

impl Generator {
    pub fn new(name: impl Into<String>, degree: i64, kind: GenKind) -> Self {
        let poly = u32::from(kind == GenKind::Base);
        let weight = u32::from(kind == GenKind::Ghost);
        Generator { name: name.into(), degree, weight, poly, dr_weight: 0, kind }
    }

    pub fn base(name: impl Into<String>) -> Self {
        Self::new(name, 0, GenKind::Base)
    }

    pub fn extra(name: impl Into<String>, degree: i64) -> Self {
        Self::new(name, degree, GenKind::Extra)
    }

    pub fn ghost(name: impl Into<String>, degree: i64) -> Self {
        Self::new(name, degree, GenKind::Ghost)
    }

    pub fn with_weight(mut self, w: u32) -> Self {
        self.weight = w;
        self
    }

    pub fn is_odd(&self) -> bool {
        self.degree.rem_euclid(2) == 1
    }
}

/// A normal-form monomial: generator indices strictly increasing, odd exponents equal to 1.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<(usize, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn gen(i: usize) -> Self {
        Monomial(vec![(i, 1)])
    }

    /// Builds a monomial from already sorted factors. Caller guarantees normal form.
    pub fn from_sorted(factors: Vec<(usize, u32)>) -> Self {
        debug_assert!(factors.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(factors.iter().all(|&(_, e)| e > 0));
        Monomial(factors)
    }

    pub fn factors(&self) -> &[(usize, u32)] {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, g: usize) -> u32 {
        match self.0.binary_search_by_key(&g, |&(i, _)| i) {
            Ok(k) => self.0[k].1,
            Err(_) => 0,
        }
    }

    pub fn letters(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().map(|&(i, _)| i)
    }

    /// `self` with one factor of `g` removed, if present.
    pub fn without_one(&self, g: usize) -> Option<Monomial> {
        let k = self.0.binary_search_by_key(&g, |&(i, _)| i).ok()?;
        let mut f = self.0.clone();
        if f[k].1 == 1 {
            f.remove(k);
        } else {
            f[k].1 -= 1;
        }
        Some(Monomial(f))
    }
}

/// Lexicographic significance: `Greater` when `a` carries more of an earlier generator.
pub fn lex_cmp(a: &Monomial, b: &Monomial) -> Ordering {
    for (&(ia, ea), &(ib, eb)) in a.0.iter().zip(b.0.iter()) {
        if ia != ib {
            return ib.cmp(&ia);
        }
        if ea != eb {
            return ea.cmp(&eb);
        }
    }
    a.0.len().cmp(&b.0.len())
}

/// A rational linear combination of normal-form monomials with nonzero coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Element {
    terms: BTreeMap<Monomial, Q>,
}

impl Element {
    pub fn zero() -> Self {
        Element::default()
    }

    pub fn one() -> Self {
        Element::constant(Q::one())
    }

    pub fn constant(c: Q) -> Self {
        Element::term(Monomial::one(), c)
    }

    pub fn gen(i: usize) -> Self {
        Element::term(Monomial::gen(i), Q::one())
    }

    pub fn term(m: Monomial, c: Q) -> Self {
        let mut e = Element::zero();
        e.add_term(m, c);
        e
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Q)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> Q {
        self.terms.get(m).cloned().unwrap_or_else(Q::zero)
    }

    pub fn add_term(&mut self, m: Monomial, c: Q) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Element, c: &Q) {
        if c.is_zero() {
            return;
        }
        for (m, v) in &other.terms {
            self.add_term(m.clone(), v * c);
        }
    }

    pub fn scale(&self, c: &Q) -> Element {
        if c.is_zero() {
            return Element::zero();
        }
        Element { terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect() }
    }

    pub fn filter(&self, mut keep: impl FnMut(&Monomial) -> bool) -> Element {
        Element {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| keep(m))
                .map(|(m, v)| (m.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.keys().filter_map(Monomial::max_index).max()
    }

    /// The constant term.
    pub fn constant_part(&self) -> Q {
        self.coeff(&Monomial::one())
    }
}

impl std::ops::Add for &Element {
    type Output = Element;
    fn add(self, rhs: &Element) -> Element {
        let mut out = self.clone();
        out.add_scaled(rhs, &Q::one());
        out
    }
}

impl std::ops::Sub for &Element {
    type Output = Element;
    fn sub(self, rhs: &Element) -> Element {
        let mut out = self.clone();
        out.add_scaled(rhs, &-Q::one());
        out
    }
}

impl std::ops::Neg for &Element {
    type Output = Element;
    fn neg(self) -> Element {
        self.scale(&-Q::one())
    }
}

impl std::ops::AddAssign<&Element> for Element {
    fn add_assign(&mut self, rhs: &Element) {
        self.add_scaled(rhs, &Q::one());
    }
}

impl std::ops::SubAssign<&Element> for Element {
    fn sub_assign(&mut self, rhs: &Element) {
        self.add_scaled(rhs, &-Q::one());
    }
}

/// An ordered list of generators; elements index into it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Algebra {
    gens: Vec<Generator>,
    by_name: HashMap<String, usize>,
}

impl Algebra {
    pub fn new() -> Self {
        Algebra::default()
    }

    pub fn add(&mut self, g: Generator) -> Result<usize> {
        if !is_identifier(&g.name) {
            return Err(Error::Invalid(format!("`{}` is not a valid generator name", g.name)));
        }
        if self.by_name.contains_key(&g.name) {
            return Err(Error::DuplicateGenerator(g.name));
        }
        let i = self.gens.len();
        self.by_name.insert(g.name.clone(), i);
        self.gens.push(g);
        Ok(i)
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn gens(&self) -> &[Generator] {
        &self.gens
    }

    pub fn gen(&self, i: usize) -> &Generator {
        &self.gens[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.gens[i].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::UnknownGenerator(name.to_string()))
    }

    /// The element `name`, or an error for unknown names.
    pub fn var(&self, name: &str) -> Result<Element> {
        Ok(Element::gen(self.id(name)?))
    }

    pub fn is_odd(&self, i: usize) -> bool {
        self.gens[i].is_odd()
    }

    pub fn check(&self, a: &Element) -> Result<()> {
        match a.max_index() {
            Some(i) if i >= self.len() => Err(Error::MismatchedAlgebra(i)),
            _ => Ok(()),
        }
    }

    pub fn mono_degree(&self, m: &Monomial) -> i64 {
        m.0.iter().map(|&(i, e)| self.gens[i].degree * i64::from(e)).sum()
    }

    pub fn mono_poly(&self, m: &Monomial) -> u32 {
        m.0.iter().map(|&(i, e)| self.gens[i].poly * e).sum()
    }

    pub fn mono_weight(&self, m: &Monomial) -> u32 {
        m.0.iter().map(|&(i, e)| self.gens[i].weight * e).sum()
    }

    pub fn mono_dr(&self, m: &Monomial) -> u32 {
        m.0.iter().map(|&(i, e)| self.gens[i].dr_weight * e).sum()
    }

    pub fn mono_is_odd(&self, m: &Monomial) -> bool {
        self.mono_degree(m).rem_euclid(2) == 1
    }

    /// Common degree of all terms; `None` for zero or inhomogeneous elements.
    pub fn degree(&self, a: &Element) -> Option<i64> {
        let mut it = a.terms().map(|(m, _)| self.mono_degree(m));
        let d = it.next()?;
        it.all(|e| e == d).then_some(d)
    }

    /// Product of two monomials: `None` if it vanishes, otherwise (negated?, monomial).
    pub fn mul_mono(&self, a: &Monomial, b: &Monomial) -> Option<(bool, Monomial)> {
        let mut out = Vec::with_capacity(a.0.len() + b.0.len());
        let mut neg = false;
        // number of odd letters of `a` still to the right of the merge cursor
        let mut odd_a_right = a.0.iter().filter(|&&(i, _)| self.is_odd(i)).count();
        let (mut ia, mut ib) = (0, 0);
        while ia < a.0.len() || ib < b.0.len() {
            let take_a = ib >= b.0.len() || (ia < a.0.len() && a.0[ia].0 < b.0[ib].0);
            if take_a {
                let f = a.0[ia];
                if self.is_odd(f.0) {
                    odd_a_right -= 1;
                }
                out.push(f);
                ia += 1;
            } else if ia < a.0.len() && a.0[ia].0 == b.0[ib].0 {
                let g = a.0[ia].0;
                if self.is_odd(g) {
                    return None;
                }
                out.push((g, a.0[ia].1 + b.0[ib].1));
                ia += 1;
                ib += 1;
            } else {
                let f = b.0[ib];
                if self.is_odd(f.0) && odd_a_right % 2 == 1 {
                    neg = !neg;
                }
                out.push(f);
                ib += 1;
            }
        }
        Some((neg, Monomial(out)))
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Result<Element> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    pub(crate) fn mul_unchecked(&self, a: &Element, b: &Element) -> Element {
        let mut out = Element::zero();
        for (ma, ca) in &a.terms {
            for (mb, cb) in &b.terms {
                if let Some((neg, m)) = self.mul_mono(ma, mb) {
                    let c = ca * cb;
                    out.add_term(m, if neg { -c } else { c });
                }
            }
        }
        out
    }

    pub fn mul_all(&self, factors: &[Element]) -> Result<Element> {
        let mut acc = Element::one();
        for f in factors {
            acc = self.mul(&acc, f)?;
        }
        Ok(acc)
    }

    pub fn pow(&self, a: &Element, n: u32) -> Result<Element> {
        self.check(a)?;
        let mut acc = Element::one();
        for _ in 0..n {
            acc = self.mul_unchecked(&acc, a);
        }
        Ok(acc)
    }

    /// Normal form of an ordered product of named generator powers.
    pub fn normalize(&self, raw: &[(&str, u32)]) -> Result<Element> {
        let mut acc = Element::one();
        for &(name, e) in raw {
            let g = self.var(name)?;
            acc = self.mul_unchecked(&acc, &self.pow(&g, e)?);
        }
        Ok(acc)
    }

    /// Normal form of an ordered product of generator powers given by index.
    pub fn normalize_indices(&self, raw: &[(usize, u32)]) -> Result<Element> {
        let mut acc = Element::one();
        for &(i, e) in raw {
            if i >= self.len() {
                return Err(Error::MismatchedAlgebra(i));
            }
            acc = self.mul_unchecked(&acc, &self.pow(&Element::gen(i), e)?);
        }
        Ok(acc)
    }

    /// Applies the algebra map sending generator `i` to `images[i]` (in `target`).
    pub fn map_to(&self, target: &Algebra, a: &Element, images: &[Element]) -> Result<Element> {
        self.check(a)?;
        let mut out = Element::zero();
        for (m, c) in a.terms() {
            let mut acc = Element::constant(c.clone());
            for &(i, e) in m.factors() {
                let img = images.get(i).ok_or_else(|| Error::OutsideDomain(self.name(i).to_string()))?;
                for _ in 0..e {
                    acc = target.mul_unchecked(&acc, img);
                }
            }
            out += &acc;
        }
        Ok(out)
    }

    /// Renames `a` into `target` by generator name.
    pub fn transport(&self, target: &Algebra, a: &Element) -> Result<Element> {
        self.check(a)?;
        let mut out = Element::zero();
        for (m, c) in a.terms() {
            let mut acc = Element::constant(c.clone());
            for &(i, e) in m.factors() {
                let j = target.id(self.name(i))?;
                acc = target.mul_unchecked(&acc, &target.pow(&Element::gen(j), e)?);
            }
            out += &acc;
        }
        Ok(out)
    }

    /// Display order of terms: more letters first, then lexicographic significance.
    pub fn display_cmp(&self, a: &Monomial, b: &Monomial) -> Ordering {
        b.letters().cmp(&a.letters()).then_with(|| lex_cmp(b, a))
    }

    pub fn format_monomial(&self, m: &Monomial) -> String {
        let parts: Vec<String> = m
            .factors()
            .iter()
            .map(|&(i, e)| {
                if e == 1 {
                    self.name(i).to_string()
                } else {
                    format!("{}^{}", self.name(i), e)
                }
            })
            .collect();
        parts.join("*")
    }

    /// Deterministic text form accepted back by [`Algebra::parse`].
    pub fn format(&self, a: &Element) -> String {
        if a.is_zero() {
            return "0".to_string();
        }
        let mut terms: Vec<(&Monomial, &Q)> = a.terms().collect();
        terms.sort_by(|x, y| self.display_cmp(x.0, y.0));
        let mut out = String::new();
        for (k, (m, c)) in terms.into_iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if k == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            if m.is_one() {
                out.push_str(&format_q(&abs));
            } else if abs.is_one() {
                out.push_str(&self.format_monomial(m));
            } else {
                out.push_str(&format_q(&abs));
                out.push('*');
                out.push_str(&self.format_monomial(m));
            }
        }
        out
    }

    pub fn display<'a>(&'a self, a: &'a Element) -> Displayed<'a> {
        Displayed { alg: self, elem: a }
    }
}

pub struct Displayed<'a> {
    alg: &'a Algebra,
    elem: &'a Element,
}

impl fmt::Display for Displayed<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.alg.format(self.elem))
    }
}

pub fn format_q(c: &Q) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
