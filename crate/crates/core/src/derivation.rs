//! Graded derivations specified on generators and extended by the Leibniz rule.

use std::collections::BTreeMap;

use num_traits::One;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gca::{Algebra, Element, Monomial, Q};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub degree: i64,
    images: BTreeMap<usize, Element>,
}

/// Outcome of a square-zero test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SquareZero {
    pub holds: bool,
    /// First generator (in order) on which `D∘D` does not vanish.
    pub witness: Option<String>,
    pub residual: String,
}

impl Derivation {
    /// A derivation with an empty domain.
    pub fn empty(degree: i64) -> Self {
        Derivation { degree, images: BTreeMap::new() }
    }

    /// The zero derivation on every generator of `alg`.
    pub fn zero(alg: &Algebra, degree: i64) -> Self {
        Derivation { degree, images: (0..alg.len()).map(|i| (i, Element::zero())).collect() }
    }

    /// Builds a derivation from named images; unnamed generators map to zero.
    pub fn from_named(alg: &Algebra, degree: i64, images: &[(&str, &str)]) -> Result<Self> {
        let mut d = Derivation::zero(alg, degree);
        for &(g, img) in images {
            let gi = alg.id(g)?;
            d.set(alg, gi, alg.parse(img)?)?;
        }
        Ok(d)
    }

    /// Sets the image of generator `g`, checking its degree.
    pub fn set(&mut self, alg: &Algebra, g: usize, img: Element) -> Result<()> {
        alg.check(&img)?;
        if g >= alg.len() {
            return Err(Error::MismatchedAlgebra(g));
        }
        let want = alg.gen(g).degree + self.degree;
        for (m, _) in img.terms() {
            let got = alg.mono_degree(m);
            if got != want {
                return Err(Error::Degree(format!(
                    "image of `{}` has a term `{}` of degree {got}, expected {want}",
                    alg.name(g),
                    alg.format_monomial(m)
                )));
            }
        }
        self.images.insert(g, img);
        Ok(())
    }

    /// Sets an image without the degree check (for operators assembled term by term).
    pub(crate) fn set_raw(&mut self, g: usize, img: Element) {
        self.images.insert(g, img);
    }

    pub fn image(&self, g: usize) -> Option<&Element> {
        self.images.get(&g)
    }

    pub fn images(&self) -> impl Iterator<Item = (usize, &Element)> {
        self.images.iter().map(|(&g, e)| (g, e))
    }

    pub fn domain_contains(&self, g: usize) -> bool {
        self.images.contains_key(&g)
    }

    pub fn is_odd(&self) -> bool {
        self.degree.rem_euclid(2) == 1
    }

    pub fn is_zero(&self) -> bool {
        self.images.values().all(Element::is_zero)
    }

    /// Extends the domain with zero images for any generator not yet covered.
    pub fn extend_by_zero(&mut self, alg: &Algebra) {
        for g in 0..alg.len() {
            self.images.entry(g).or_default();
        }
    }

    /// Re-checks every generator image for degree consistency.
    pub fn validate(&self, alg: &Algebra) -> Result<()> {
        let mut copy = Derivation::empty(self.degree);
        for (&g, img) in &self.images {
            copy.set(alg, g, img.clone())?;
        }
        Ok(())
    }

    fn image_or_err(&self, alg: &Algebra, g: usize) -> Result<&Element> {
        self.images.get(&g).ok_or_else(|| Error::OutsideDomain(alg.name(g).to_string()))
    }

    /// Applies the derivation to a monomial.
    pub fn apply_mono(&self, alg: &Algebra, m: &Monomial) -> Result<Element> {
        let f = m.factors();
        let mut out = Element::zero();
        let mut prefix_deg: i64 = 0;
        for (k, &(g, e)) in f.iter().enumerate() {
            let dg = self.image_or_err(alg, g)?;
            let gdeg = alg.gen(g).degree;
            if !dg.is_zero() {
                let sign_neg = (self.degree * prefix_deg).rem_euclid(2) == 1;
                let mut coeff = Q::from_integer(e.into());
                if sign_neg {
                    coeff = -coeff;
                }
                // prefix * g^(e-1) * D(g) * suffix; g^(e-1) is even whenever e > 1
                let mut left: Vec<(usize, u32)> = f[..k].to_vec();
                if e > 1 {
                    left.push((g, e - 1));
                }
                let left = Element::term(Monomial::from_sorted(left), coeff);
                let right = Element::term(Monomial::from_sorted(f[k + 1..].to_vec()), Q::one());
                let t = alg.mul_unchecked(&alg.mul_unchecked(&left, dg), &right);
                out += &t;
            }
            prefix_deg += gdeg * i64::from(e);
        }
        Ok(out)
    }

    pub fn apply(&self, alg: &Algebra, a: &Element) -> Result<Element> {
        alg.check(a)?;
        let mut out = Element::zero();
        for (m, c) in a.terms() {
            if m.is_one() {
                continue;
            }
            let t = self.apply_mono(alg, m)?;
            out.add_scaled(&t, c);
        }
        Ok(out)
    }

    pub fn add(&self, other: &Derivation) -> Result<Derivation> {
        self.combine(other, &Q::one())
    }

    pub fn sub(&self, other: &Derivation) -> Result<Derivation> {
        self.combine(other, &-Q::one())
    }

    fn combine(&self, other: &Derivation, c: &Q) -> Result<Derivation> {
        if self.degree != other.degree {
            return Err(Error::Degree(format!(
                "cannot add derivations of degrees {} and {}",
                self.degree, other.degree
            )));
        }
        let mut out = self.clone();
        for (&g, img) in &other.images {
            out.images.entry(g).or_default().add_scaled(img, c);
        }
        Ok(out)
    }

    pub fn scale(&self, c: &Q) -> Derivation {
        Derivation {
            degree: self.degree,
            images: self.images.iter().map(|(&g, e)| (g, e.scale(c))).collect(),
        }
    }

    /// Graded commutator `[D1, D2] = D1 D2 - (-1)^{|D1||D2|} D2 D1`.
    pub fn commutator(alg: &Algebra, d1: &Derivation, d2: &Derivation) -> Result<Derivation> {
        let sign = if (d1.degree * d2.degree).rem_euclid(2) == 1 { Q::one() } else { -Q::one() };
        let mut out = Derivation::empty(d1.degree + d2.degree);
        for g in 0..alg.len() {
            if !(d1.domain_contains(g) && d2.domain_contains(g)) {
                continue;
            }
            let a = d1.apply(alg, d2.image_or_err(alg, g)?)?;
            let b = d2.apply(alg, d1.image_or_err(alg, g)?)?;
            let mut img = a;
            img.add_scaled(&b, &sign);
            out.images.insert(g, img);
        }
        Ok(out)
    }

    /// Tests `D∘D = 0` on generators; terms of CE weight above `weight_max` are discarded.
    pub fn check_square_zero(&self, alg: &Algebra, weight_max: Option<u32>) -> Result<SquareZero> {
        if !self.is_odd() {
            return Err(Error::Degree(format!(
                "square-zero test needs an odd derivation, got degree {}",
                self.degree
            )));
        }
        self.validate(alg)?;
        for g in 0..alg.len() {
            let Some(img) = self.images.get(&g) else { continue };
            let dd = self.apply(alg, img)?;
            let dd = match weight_max {
                Some(w) => dd.filter(|m| alg.mono_weight(m) <= w),
                None => dd,
            };
            if !dd.is_zero() {
                return Ok(SquareZero {
                    holds: false,
                    witness: Some(alg.name(g).to_string()),
                    residual: alg.format(&dd),
                });
            }
        }
        Ok(SquareZero { holds: true, witness: None, residual: "0".into() })
    }

    /// Keeps only the part of every image satisfying `keep`.
    pub fn filter_images(&self, mut keep: impl FnMut(usize, &Monomial) -> bool) -> Derivation {
        Derivation {
            degree: self.degree,
            images: self.images.iter().map(|(&g, e)| (g, e.filter(|m| keep(g, m)))).collect(),
        }
    }
}

/// Applies `d` and truncates the result to CE weight at most `w`.
pub fn apply_truncated(d: &Derivation, alg: &Algebra, a: &Element, w: u32) -> Result<Element> {
    Ok(d.apply(alg, a)?.filter(|m| alg.mono_weight(m) <= w))
}

/// Pointwise composite `D1(D2(a)) - (-1)^{|D1||D2|} D2(D1(a))`.
pub fn pointwise_commutator(alg: &Algebra, d1: &Derivation, d2: &Derivation, a: &Element) -> Result<Element> {
    let mut out = d1.apply(alg, &d2.apply(alg, a)?)?;
    let sign = if (d1.degree * d2.degree).rem_euclid(2) == 1 { Q::one() } else { -Q::one() };
    out.add_scaled(&d2.apply(alg, &d1.apply(alg, a)?)?, &sign);
    Ok(out)
}

/// The contraction `ι_df` on a Koszul-type algebra: `ξ_i ↦ ∂f/∂x_i`.
pub fn partial(alg: &Algebra, f: &Element, x: usize) -> Result<Element> {
    let mut d = Derivation::zero(alg, -alg.gen(x).degree);
    d.set_raw(x, Element::one());
    d.apply(alg, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gca::Generator;

    fn koszul(f: &str) -> (Algebra, Derivation) {
        let mut a = Algebra::new();
        a.add(Generator::base("x")).unwrap();
        a.add(Generator::base("y")).unwrap();
        a.add(Generator::extra("xi_x", -1)).unwrap();
        a.add(Generator::extra("xi_y", -1)).unwrap();
        let f = a.parse(f).unwrap();
        let mut d = Derivation::zero(&a, 1);
        d.set(&a, 2, partial(&a, &f, 0).unwrap()).unwrap();
        d.set(&a, 3, partial(&a, &f, 1).unwrap()).unwrap();
        (a, d)
    }

    #[test]
    fn contraction_reads_partials() {
        let (a, d) = koszul("x^3/3");
        assert_eq!(a.format(&d.apply(&a, &a.parse("xi_x").unwrap()).unwrap()), "x^2");
        assert_eq!(a.format(&d.apply(&a, &a.parse("x*xi_x").unwrap()).unwrap()), "x^3");
    }

    #[test]
    fn contraction_on_pair() {
        let (a, d) = koszul("x^2*y");
        let out = d.apply(&a, &a.parse("xi_x*xi_y").unwrap()).unwrap();
        assert_eq!(out, a.parse("2*x*y*xi_y - x^2*xi_x").unwrap());
    }

    #[test]
    fn square_zero_of_contraction() {
        let (a, d) = koszul("x^2*y");
        assert!(d.check_square_zero(&a, None).unwrap().holds);
        let c = Derivation::commutator(&a, &d, &d).unwrap();
        assert!(c.is_zero());
    }

    #[test]
    fn degree_check_on_construction() {
        let mut a = Algebra::new();
        a.add(Generator::base("x")).unwrap();
        a.add(Generator::extra("xi", -1)).unwrap();
        let mut d = Derivation::zero(&a, 1);
        assert!(d.set(&a, 1, a.parse("x").unwrap()).is_ok());
        assert!(matches!(d.set(&a, 0, a.parse("xi").unwrap()), Err(Error::Degree(_))));
    }

    #[test]
    fn even_derivation_rejected_by_square_zero() {
        let (a, _) = koszul("x");
        let d = Derivation::zero(&a, 0);
        assert!(d.check_square_zero(&a, None).is_err());
    }

    #[test]
    fn vector_field_bracket() {
        let mut a = Algebra::new();
        a.add(Generator::base("x")).unwrap();
        let dx = Derivation::from_named(&a, 0, &[("x", "1")]).unwrap();
        let xdx = Derivation::from_named(&a, 0, &[("x", "x")]).unwrap();
        let c = Derivation::commutator(&a, &dx, &xdx).unwrap();
        assert_eq!(c, dx);
    }

    #[test]
    fn outside_domain() {
        let (a, _) = koszul("x");
        let d = Derivation::empty(1);
        assert!(matches!(d.apply(&a, &a.parse("x").unwrap()), Err(Error::OutsideDomain(_))));
    }
}
