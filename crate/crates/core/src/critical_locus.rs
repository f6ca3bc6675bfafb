//! Koszul complexes of functions, Tate's algorithm, almost critical loci, Hessians.

use serde::Serialize;

use crate::derivation::{partial, Derivation};
use crate::error::{Error, Result};
use crate::gca::{Algebra, Element, GenKind, Generator, Monomial, Q};
use crate::homology::{cohomology_at, DegreeCohomology, DgaPresentation, Provenance, TruncationBounds};
use crate::linalg::Matrix;

/// The Koszul complex `Sym_A(T_A[1])` with differential `ι_df`.
#[derive(Clone, Debug)]
pub struct Koszul {
    pub pres: DgaPresentation,
    pub f: Element,
    pub vars: Vec<usize>,
    pub xis: Vec<usize>,
}

pub fn xi_name(var: &str) -> String {
    format!("xi_{var}")
}

/// Base algebra `Q[x_1..x_n]`.
pub fn polynomial_ring(vars: &[&str]) -> Result<Algebra> {
    let mut a = Algebra::new();
    for v in vars {
        a.add(Generator::base(*v))?;
    }
    Ok(a)
}

/// Parses `f` as a polynomial in the given variables.
pub fn parse_function(vars: &[&str], f: &str) -> Result<(Algebra, Element)> {
    let a = polynomial_ring(vars)?;
    let e = a.parse(f)?;
    Ok((a, e))
}

pub fn koszul_complex(vars: &[&str], f: &str) -> Result<Koszul> {
    let (base, fe) = parse_function(vars, f)?;
    koszul_from(&base, &fe)
}

/// Koszul complex of `f` over a polynomial ring given as an algebra of base variables.
pub fn koszul_from(base: &Algebra, f: &Element) -> Result<Koszul> {
    if base.gens().iter().any(|g| g.kind != GenKind::Base || g.degree != 0) {
        return Err(Error::Invalid("the base must consist of degree 0 variables".into()));
    }
    let mut alg = base.clone();
    let vars: Vec<usize> = (0..base.len()).collect();
    let mut xis = Vec::new();
    for &v in &vars {
        let name = xi_name(base.name(v));
        xis.push(alg.add(Generator::extra(name, -1))?);
    }
    let f = base.transport(&alg, f)?;
    let mut d = Derivation::zero(&alg, 1);
    for (&v, &xi) in vars.iter().zip(&xis) {
        d.set(&alg, xi, partial(&alg, &f, v)?)?;
    }
    let pres = DgaPresentation::new(alg, d, Provenance::Koszul)?;
    Ok(Koszul { pres, f, vars, xis })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GeneratorLogEntry {
    pub name: String,
    pub degree: i64,
    pub differential: String,
    pub iteration: usize,
}

#[derive(Clone, Debug)]
pub struct TateResult {
    pub pres: DgaPresentation,
    pub log: Vec<GeneratorLogEntry>,
    /// Degrees that still carry cohomology when the budget ran out.
    pub uncleared: Vec<i64>,
    /// Final cohomology in the degrees `(lo, 0]`.
    pub cohomology: Vec<DegreeCohomology>,
}

impl TateResult {
    pub fn complete(&self) -> bool {
        self.uncleared.is_empty()
    }

    /// True when every negative degree in the window vanishes with certification.
    pub fn certified(&self) -> bool {
        self.cohomology.iter().filter(|h| h.degree < 0).all(|h| h.dim == 0 && h.certified)
    }
}

/// Tate's algorithm: kill `H^k` for `k = -1` down to `lo + 1` by adjoining generators.
pub fn koszul_tate(k: &Koszul, bounds: &TruncationBounds, max_generators: usize) -> Result<TateResult> {
    bounds.validate()?;
    let (lo, _) = bounds.coh_window;
    if lo > -2 {
        return Err(Error::Invalid(format!("the window must reach degree -2 or lower, got {lo}")));
    }
    let mut alg = k.pres.alg.clone();
    let mut d = k.pres.differential.clone();
    let mut log = Vec::new();
    let mut uncleared = Vec::new();
    let mut iteration = 0;
    let mut counters = std::collections::BTreeMap::<i64, usize>::new();
    for deg in ((lo + 1)..=-1).rev() {
        loop {
            let h = cohomology_at(&alg, &d, deg, bounds)?;
            if h.dim == 0 {
                break;
            }
            if log.len() >= max_generators {
                uncleared.push(deg);
                break;
            }
            iteration += 1;
            let lead = |e: &Element| e.terms().map(|(m, _)| alg.mono_poly(m)).max().unwrap_or(0);
            let min_poly = h.representatives.iter().map(lead).min().unwrap_or(0);
            let chosen: Vec<Element> = h.representatives.iter().filter(|r| lead(r) == min_poly).cloned().collect();
            for rep in chosen {
                if log.len() >= max_generators {
                    break;
                }
                let idx = counters.entry(deg - 1).or_insert(0);
                let name = format!("c_{}_{}", -(deg - 1), idx);
                *idx += 1;
                let g = alg.add(Generator::extra(&name, deg - 1))?;
                d.extend_by_zero(&alg);
                d.set(&alg, g, rep.clone())?;
                log.push(GeneratorLogEntry { name, degree: deg - 1, differential: alg.format(&rep), iteration });
            }
        }
    }
    let mut cohomology = Vec::new();
    for deg in (lo + 1)..=0 {
        cohomology.push(cohomology_at(&alg, &d, deg, bounds)?);
    }
    let provenance = if log.is_empty() { Provenance::Koszul } else { Provenance::KoszulTate };
    let pres = DgaPresentation::new(alg, d, provenance)?;
    Ok(TateResult { pres, log, uncleared, cohomology })
}

/// An almost derived critical locus together with its comparison maps.
#[derive(Clone, Debug)]
pub struct AlmostCrit {
    pub pres: DgaPresentation,
    pub koszul: Koszul,
    /// Indices of the Koszul generators inside `pres`.
    pub inclusion: Vec<usize>,
    /// The adjoined generators (degree ≤ -2).
    pub extra: Vec<usize>,
}

pub fn almost_critical(k: &Koszul, extra: &[(&str, i64, &str)]) -> Result<AlmostCrit> {
    let mut alg = k.pres.alg.clone();
    let mut d = k.pres.differential.clone();
    let mut added = Vec::new();
    for &(name, degree, diff) in extra {
        if degree > -2 {
            return Err(Error::Invalid(format!("extra generator `{name}` has degree {degree}; it must be at most -2")));
        }
        let g = alg.add(Generator::extra(name, degree))?;
        d.extend_by_zero(&alg);
        let img = alg.parse(diff)?;
        let dimg = d.apply(&alg, &img)?;
        if !dimg.is_zero() {
            return Err(Error::Invalid(format!(
                "differential of `{name}` is not a cycle: d({}) = {}",
                alg.format(&img),
                alg.format(&dimg)
            )));
        }
        d.set(&alg, g, img)?;
        added.push(g);
    }
    let sz = d.check_square_zero(&alg, None)?;
    if !sz.holds {
        return Err(Error::NotSquareZero(sz.witness.unwrap_or_default()));
    }
    let provenance = if added.is_empty() { Provenance::Koszul } else { Provenance::AlmostCrit };
    let inclusion = (0..k.pres.alg.len()).collect();
    Ok(AlmostCrit { pres: DgaPresentation::new(alg, d, provenance)?, koszul: k.clone(), inclusion, extra: added })
}

impl AlmostCrit {
    /// Checks that `Koszul → S` commutes with the differentials on generators.
    pub fn check_maps(&self) -> Result<bool> {
        let kalg = &self.koszul.pres.alg;
        for (g, &gi) in self.inclusion.iter().enumerate() {
            let lhs = kalg.transport(&self.pres.alg, &self.koszul.pres.d(&Element::gen(g))?)?;
            let rhs = self.pres.d(&Element::gen(gi))?;
            if lhs != rhs {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HessianData {
    /// Symbolic second partials, as polynomial strings.
    pub matrix: Vec<Vec<String>>,
    pub evaluation_point: Vec<String>,
    pub evaluated: Vec<Vec<String>>,
    pub normal_rank: usize,
}

/// Evaluates a polynomial in the base variables at a rational point.
pub fn evaluate(alg: &Algebra, vars: &[usize], point: &[Q], e: &Element) -> Result<Q> {
    let mut images: Vec<Element> = (0..alg.len()).map(Element::gen).collect();
    for (&v, c) in vars.iter().zip(point) {
        images[v] = Element::constant(c.clone());
    }
    let out = alg.map_to(alg, e, &images)?;
    if out.terms().any(|(m, _)| !m.is_one()) {
        return Err(Error::Invalid("evaluation left non-constant terms".into()));
    }
    Ok(out.constant_part())
}

pub fn hessian_form(vars: &[&str], f: &str, point: &[Q]) -> Result<HessianData> {
    let (alg, fe) = parse_function(vars, f)?;
    if point.len() != vars.len() {
        return Err(Error::Invalid(format!("point has {} coordinates, expected {}", point.len(), vars.len())));
    }
    let idx: Vec<usize> = (0..vars.len()).collect();
    for &i in &idx {
        let p = evaluate(&alg, &idx, point, &partial(&alg, &fe, i)?)?;
        if !num_traits::Zero::is_zero(&p) {
            return Err(Error::Invalid(format!(
                "point is not critical: d f/d {} = {}",
                vars[i],
                crate::gca::format_q(&p)
            )));
        }
    }
    let mut sym = Vec::new();
    let mut num = Vec::new();
    for &i in &idx {
        let di = partial(&alg, &fe, i)?;
        let mut srow = Vec::new();
        let mut nrow = Vec::new();
        for &j in &idx {
            let dij = partial(&alg, &di, j)?;
            nrow.push(evaluate(&alg, &idx, point, &dij)?);
            srow.push(alg.format(&dij));
        }
        sym.push(srow);
        num.push(nrow);
    }
    let m = Matrix::from_rows(num.clone());
    Ok(HessianData {
        matrix: sym,
        evaluation_point: point.iter().map(crate::gca::format_q).collect(),
        evaluated: num.iter().map(|r| r.iter().map(crate::gca::format_q).collect()).collect(),
        normal_rank: if vars.is_empty() { 0 } else { m.rank() },
    })
}

/// The complex `π*(T_X ⊕ L_X[-1])` over the Koszul algebra, with the trivial connection.
#[derive(Clone, Debug)]
pub struct TangentComplexCrit {
    pub alg: Algebra,
    /// Tangent generators `∂_i` (degree 0) and cotangent generators `dx_i` (degree 1).
    pub tangent: Vec<String>,
    pub cotangent: Vec<String>,
    /// `connecting[i][j]`: coefficient of `dx_j` in the image of `∂_i`.
    pub connecting: Vec<Vec<Element>>,
}

impl TangentComplexCrit {
    pub fn image_string(&self, i: usize) -> String {
        let mut parts = Vec::new();
        for (j, c) in self.connecting[i].iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let s = self.alg.format(c);
            parts.push(if s == "1" { self.cotangent[j].clone() } else { format!("({s})*{}", self.cotangent[j]) });
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ")
        }
    }
}

pub fn tangent_complex_crit(k: &Koszul) -> Result<TangentComplexCrit> {
    let alg = k.pres.alg.clone();
    let mut connecting = Vec::new();
    for &i in &k.vars {
        let di = partial(&alg, &k.f, i)?;
        let row = k.vars.iter().map(|&j| partial(&alg, &di, j)).collect::<Result<Vec<_>>>()?;
        connecting.push(row);
    }
    let tangent = k.vars.iter().map(|&v| format!("d_{}", alg.name(v))).collect();
    let cotangent = k.vars.iter().map(|&v| format!("d{}", alg.name(v))).collect();
    Ok(TangentComplexCrit { alg, tangent, cotangent, connecting })
}

/// Monomials of degree `d` in the variables, used by ideal-dimension oracles.
pub fn monomials_up_to(alg: &Algebra, vars: &[usize], d: u32) -> Vec<Monomial> {
    let mut out = vec![Monomial::one()];
    let mut frontier = vec![Monomial::one()];
    for _ in 0..d {
        let mut next = Vec::new();
        for m in &frontier {
            for &v in vars {
                if m.max_index().is_some_and(|l| l > v) {
                    continue;
                }
                if let Some((_, p)) = alg.mul_mono(m, &Monomial::gen(v)) {
                    next.push(p);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gca::q;

    #[test]
    fn koszul_examples() {
        let k = koszul_complex(&["x"], "x^3/3").unwrap();
        assert_eq!(k.pres.alg.format(k.pres.differential.image(1).unwrap()), "x^2");
        let k = koszul_complex(&["x", "y"], "x*y").unwrap();
        assert_eq!(k.pres.alg.format(k.pres.differential.image(2).unwrap()), "y");
        assert_eq!(k.pres.alg.format(k.pres.differential.image(3).unwrap()), "x");
        let k = koszul_complex(&["x"], "0").unwrap();
        assert!(k.pres.differential.is_zero());
        assert!(koszul_complex(&["x"], "x*z").is_err());
    }

    #[test]
    fn tate_for_zero_function() {
        let k = koszul_complex(&["x"], "0").unwrap();
        let b = TruncationBounds::new(3, -3, 0, 0).unwrap();
        let t = koszul_tate(&k, &b, 10).unwrap();
        assert_eq!(t.log.len(), 1);
        assert_eq!(t.log[0].degree, -2);
        assert_eq!(t.log[0].differential, "xi_x");
        assert!(t.certified());
    }

    #[test]
    fn tate_for_x2y() {
        let k = koszul_complex(&["x", "y"], "x^2*y").unwrap();
        let b = TruncationBounds::new(5, -3, 0, 0).unwrap();
        let t = koszul_tate(&k, &b, 10).unwrap();
        let got: Vec<(i64, String)> = t.log.iter().map(|e| (e.degree, e.differential.clone())).collect();
        assert_eq!(
            got,
            vec![(-2, "x*xi_x - 2*y*xi_y".to_string()), (-3, "x*c_2_0 + xi_x*xi_y".to_string())]
        );
        assert!(t.certified());
    }

    #[test]
    fn almost_critical_checks() {
        let k = koszul_complex(&["x", "y"], "x^2*y").unwrap();
        let s = almost_critical(&k, &[("c", -2, "x*xi_x - 2*y*xi_y")]).unwrap();
        assert!(s.check_maps().unwrap());
        assert!(almost_critical(&k, &[("c", -2, "xi_x")]).is_err());
        assert!(almost_critical(&k, &[("c", -1, "x")]).is_err());
        assert_eq!(almost_critical(&k, &[]).unwrap().pres, k.pres);
    }

    #[test]
    fn hessians() {
        let h = hessian_form(&["x"], "x^3/3", &[q(0)]).unwrap();
        assert_eq!(h.evaluated, vec![vec!["0".to_string()]]);
        assert_eq!(h.normal_rank, 0);
        let h = hessian_form(&["x"], "x^2/2", &[q(0)]).unwrap();
        assert_eq!(h.normal_rank, 1);
        let h = hessian_form(&["x", "y"], "x^2*y", &[q(0), q(3)]).unwrap();
        assert_eq!(h.evaluated, vec![vec!["6".to_string(), "0".into()], vec!["0".into(), "0".into()]]);
        assert_eq!(h.normal_rank, 1);
        assert!(hessian_form(&["x"], "x^2/2", &[q(1)]).is_err());
    }

    #[test]
    fn tangent_connecting_maps() {
        let k = koszul_complex(&["x"], "x^3/3").unwrap();
        let t = tangent_complex_crit(&k).unwrap();
        assert_eq!(t.image_string(0), "(2*x)*dx");
        let k = koszul_complex(&["x", "y"], "x*y").unwrap();
        let t = tangent_complex_crit(&k).unwrap();
        assert_eq!(t.image_string(0), "dy");
        assert_eq!(t.image_string(1), "dx");
        let k = koszul_complex(&["x"], "0").unwrap();
        assert_eq!(tangent_complex_crit(&k).unwrap().image_string(0), "0");
    }

    #[test]
    fn monomial_listing() {
        let a = polynomial_ring(&["x", "y"]).unwrap();
        assert_eq!(monomials_up_to(&a, &[0, 1], 2).len(), 6);
    }
}
