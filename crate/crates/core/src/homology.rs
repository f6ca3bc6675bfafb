//! Truncated exact cohomology of semi-free dg-algebras and of finite complexes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::derivation::{Derivation, SquareZero};
use crate::error::{Error, Result};
use crate::gca::{lex_cmp, Algebra, Element, Monomial, Q};
use crate::linalg::{reduce_against, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Koszul,
    KoszulTate,
    AlmostCrit,
    Ce,
    Derham,
    Bv,
    Other,
}

/// A semi-free graded-commutative algebra with a differential.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DgaPresentation {
    pub alg: Algebra,
    pub differential: Derivation,
    pub provenance: Provenance,
}

impl DgaPresentation {
    pub fn new(alg: Algebra, differential: Derivation, provenance: Provenance) -> Result<Self> {
        if differential.degree != 1 {
            return Err(Error::Degree(format!("differential has degree {}", differential.degree)));
        }
        differential.validate(&alg)?;
        Ok(DgaPresentation { alg, differential, provenance })
    }

    pub fn base_vars(&self) -> Vec<usize> {
        (0..self.alg.len()).filter(|&i| self.alg.gen(i).kind == crate::gca::GenKind::Base).collect()
    }

    pub fn extra_gens(&self) -> Vec<usize> {
        (0..self.alg.len()).filter(|&i| self.alg.gen(i).kind != crate::gca::GenKind::Base).collect()
    }

    pub fn d(&self, a: &Element) -> Result<Element> {
        self.differential.apply(&self.alg, a)
    }

    pub fn square_zero(&self, weight_max: Option<u32>) -> Result<SquareZero> {
        self.differential.check_square_zero(&self.alg, weight_max)
    }

    /// True when no generator image has a term with smaller poly degree, CE weight or de Rham weight.
    pub fn never_lowers(&self) -> bool {
        never_lowers(&self.alg, &self.differential)
    }
}

pub fn never_lowers(alg: &Algebra, d: &Derivation) -> bool {
    d.images().all(|(g, img)| {
        let gen = alg.gen(g);
        img.terms().all(|(m, _)| {
            alg.mono_poly(m) >= gen.poly && alg.mono_weight(m) >= gen.weight && alg.mono_dr(m) >= gen.dr_weight
        })
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TruncationBounds {
    pub poly_degree_max: u32,
    pub coh_window: (i64, i64),
    pub weight_max: u32,
    /// Optional de Rham weight window `[lo, hi]`.
    pub dr_window: Option<(u32, u32)>,
}

impl TruncationBounds {
    pub fn new(poly_degree_max: u32, lo: i64, hi: i64, weight_max: u32) -> Result<Self> {
        let b = TruncationBounds { poly_degree_max, coh_window: (lo, hi), weight_max, dr_window: None };
        b.validate()?;
        Ok(b)
    }

    pub fn with_dr(mut self, lo: u32, hi: u32) -> Self {
        self.dr_window = Some((lo, hi));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.coh_window.0 > self.coh_window.1 {
            return Err(Error::Invalid(format!(
                "empty cohomological window [{}, {}]",
                self.coh_window.0, self.coh_window.1
            )));
        }
        if let Some((lo, hi)) = self.dr_window {
            if lo > hi {
                return Err(Error::Invalid(format!("empty de Rham window [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, alg: &Algebra, m: &Monomial) -> bool {
        alg.mono_poly(m) <= self.poly_degree_max
            && alg.mono_weight(m) <= self.weight_max
            && self.dr_window.is_none_or(|(lo, hi)| (lo..=hi).contains(&alg.mono_dr(m)))
    }
}

/// Graded-lex order used for listing bases: poly degree ascending, then lexicographic significance.
pub fn grlex_cmp(alg: &Algebra, a: &Monomial, b: &Monomial) -> Ordering {
    alg.mono_poly(a).cmp(&alg.mono_poly(b)).then_with(|| lex_cmp(b, a))
}

/// Significance used for pivoting: higher poly degree first, then lexicographic.
fn significance_cmp(alg: &Algebra, a: &Monomial, b: &Monomial) -> Ordering {
    alg.mono_poly(b).cmp(&alg.mono_poly(a)).then_with(|| lex_cmp(b, a))
}

static BASIS_LIMIT: AtomicUsize = AtomicUsize::new(usize::MAX);

/// Caps the number of monomials any single basis enumeration may produce; `None` lifts the cap.
/// Exceeding it is reported as [`Error::Budget`].
pub fn set_basis_limit(limit: Option<usize>) {
    BASIS_LIMIT.store(limit.unwrap_or(usize::MAX), AtomicOrdering::Relaxed);
}

pub fn basis_limit() -> Option<usize> {
    let l = BASIS_LIMIT.load(AtomicOrdering::Relaxed);
    (l != usize::MAX).then_some(l)
}

/// All normal-form monomials of degree `k` within the bounds, in graded-lex order.
pub fn basis_enumerate(alg: &Algebra, k: i64, bounds: &TruncationBounds) -> Result<Vec<Monomial>> {
    let n = alg.len();
    let mut cap: Vec<Option<u32>> = Vec::with_capacity(n);
    for g in alg.gens() {
        if g.is_odd() {
            cap.push(Some(1));
            continue;
        }
        let mut c: Option<u32> = None;
        let mut tighten = |v: u32| c = Some(c.map_or(v, |x| x.min(v)));
        if g.poly > 0 {
            tighten(bounds.poly_degree_max / g.poly);
        }
        if g.weight > 0 {
            tighten(bounds.weight_max / g.weight);
        }
        if g.dr_weight > 0 {
            if let Some((_, hi)) = bounds.dr_window {
                tighten(hi / g.dr_weight);
            }
        }
        cap.push(c);
    }
    let (mut dmin, mut dmax) = (0i64, 0i64);
    for (i, g) in alg.gens().iter().enumerate() {
        if let Some(c) = cap[i] {
            let t = g.degree * i64::from(c);
            dmin += t.min(0);
            dmax += t.max(0);
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| cap[i].is_none()).collect();
    let pos = free.iter().any(|&i| alg.gen(i).degree > 0);
    let neg = free.iter().any(|&i| alg.gen(i).degree < 0);
    if let Some(&z) = free.iter().find(|&&i| alg.gen(i).degree == 0) {
        return Err(Error::InfiniteBasis(format!(
            "even generator `{}` of degree 0 is not bounded by any weight",
            alg.name(z)
        )));
    }
    if pos && neg {
        return Err(Error::InfiniteBasis("unbounded even generators of both signs".into()));
    }
    for &i in &free {
        let d = alg.gen(i).degree;
        let room = if d > 0 { k - dmin } else { dmax - k };
        cap[i] = Some(u32::try_from((room / d.abs()).max(0)).unwrap_or(u32::MAX));
    }
    let caps: Vec<u32> = cap.into_iter().map(|c| c.unwrap_or(0)).collect();
    // suffix degree ranges for pruning
    let mut suf_min = vec![0i64; n + 1];
    let mut suf_max = vec![0i64; n + 1];
    for i in (0..n).rev() {
        let t = alg.gen(i).degree * i64::from(caps[i]);
        suf_min[i] = suf_min[i + 1] + t.min(0);
        suf_max[i] = suf_max[i + 1] + t.max(0);
    }
    let mut out = Vec::new();
    let mut cur: Vec<(usize, u32)> = Vec::new();
    let limit = BASIS_LIMIT.load(AtomicOrdering::Relaxed);
    let st = EnumState { alg, bounds, caps: &caps, suf_min: &suf_min, suf_max: &suf_max, k, limit };
    st.dfs(0, 0, 0, 0, 0, &mut cur, &mut out);
    if out.len() > limit {
        return Err(Error::Budget(format!("the degree {k} basis exceeds {limit} monomials")));
    }
    if let Some((lo, _)) = bounds.dr_window {
        out.retain(|m| alg.mono_dr(m) >= lo);
    }
    out.sort_by(|a, b| grlex_cmp(alg, a, b));
    Ok(out)
}

struct EnumState<'a> {
    alg: &'a Algebra,
    bounds: &'a TruncationBounds,
    caps: &'a [u32],
    suf_min: &'a [i64],
    suf_max: &'a [i64],
    k: i64,
    limit: usize,
}

impl EnumState<'_> {
    #[allow(clippy::too_many_arguments)]
    fn dfs(&self, i: usize, deg: i64, poly: u32, w: u32, dr: u32, cur: &mut Vec<(usize, u32)>, out: &mut Vec<Monomial>) {
        let rem = self.k - deg;
        if out.len() > self.limit || rem < self.suf_min[i] || rem > self.suf_max[i] {
            return;
        }
        if i == self.caps.len() {
            out.push(Monomial::from_sorted(cur.clone()));
            return;
        }
        let g = self.alg.gen(i);
        let dr_hi = self.bounds.dr_window.map_or(u32::MAX, |(_, hi)| hi);
        for e in 0..=self.caps[i] {
            let (p, ww, r) = (poly + g.poly * e, w + g.weight * e, dr + g.dr_weight * e);
            if p > self.bounds.poly_degree_max || ww > self.bounds.weight_max || r > dr_hi {
                break;
            }
            if e > 0 {
                cur.push((i, e));
            }
            self.dfs(i + 1, deg + g.degree * i64::from(e), p, ww, r, cur, out);
            if e > 0 {
                cur.pop();
            }
        }
    }
}

/// Matrix of a degree +1 derivation between truncated bases.
#[derive(Clone, Debug)]
pub struct DiffMatrix {
    pub source: Vec<Monomial>,
    pub target: Vec<Monomial>,
    /// Rows indexed by `target`, columns by `source`.
    pub matrix: Matrix,
    /// Columns whose exact image has a term outside the bounds.
    pub flagged: Vec<bool>,
}

pub fn differential_matrix(alg: &Algebra, d: &Derivation, k: i64, bounds: &TruncationBounds) -> Result<DiffMatrix> {
    let source = basis_enumerate(alg, k, bounds)?;
    let target = basis_enumerate(alg, k + d.degree, bounds)?;
    let index: HashMap<&Monomial, usize> = target.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut matrix = Matrix::zeros(target.len(), source.len());
    let mut flagged = vec![false; source.len()];
    for (j, m) in source.iter().enumerate() {
        let img = d.apply_mono(alg, m)?;
        for (t, c) in img.terms() {
            match index.get(t) {
                Some(&i) => matrix.set(i, j, c.clone()),
                None => flagged[j] = true,
            }
        }
    }
    Ok(DiffMatrix { source, target, matrix, flagged })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RankData {
    pub basis_size: usize,
    pub cycles: usize,
    pub boundaries: usize,
    pub truncated_image_rank: usize,
    pub flagged_columns: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeCohomology {
    pub degree: i64,
    pub dim: usize,
    pub certified: bool,
    pub representatives: Vec<Element>,
    pub rank: RankData,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CohomologyReport {
    pub degrees: Vec<DegreeCohomology>,
}

#[derive(Serialize)]
struct DegreeJson<'a> {
    degree: i64,
    dim: usize,
    certified: bool,
    representatives: Vec<String>,
    rank: &'a RankData,
}

impl CohomologyReport {
    pub fn at(&self, k: i64) -> Option<&DegreeCohomology> {
        self.degrees.iter().find(|d| d.degree == k)
    }

    pub fn to_json(&self, alg: &Algebra) -> serde_json::Value {
        let v: Vec<DegreeJson> = self
            .degrees
            .iter()
            .map(|d| DegreeJson {
                degree: d.degree,
                dim: d.dim,
                certified: d.certified,
                representatives: d.representatives.iter().map(|r| alg.format(r)).collect(),
                rank: &d.rank,
            })
            .collect();
        serde_json::to_value(v).expect("serializable")
    }
}

/// Cohomology of one degree of the truncated complex.
pub fn cohomology_at(alg: &Algebra, d: &Derivation, k: i64, bounds: &TruncationBounds) -> Result<DegreeCohomology> {
    let basis = basis_enumerate(alg, k, bounds)?;
    let below = basis_enumerate(alg, k - 1, bounds)?;
    let n = basis.len();
    let idx: HashMap<&Monomial, usize> = basis.iter().enumerate().map(|(i, m)| (m, i)).collect();

    // cycles: kernel of the exact image map (targets unbounded)
    let images: Vec<Element> = basis.iter().map(|m| d.apply_mono(alg, m)).collect::<Result<_>>()?;
    let flagged = images.iter().filter(|img| img.terms().any(|(t, _)| !bounds.contains(alg, t))).count();
    let mut rows: BTreeMap<&Monomial, usize> = BTreeMap::new();
    for img in &images {
        for (t, _) in img.terms() {
            let next = rows.len();
            rows.entry(t).or_insert(next);
        }
    }
    let mut out_mat = Matrix::zeros(rows.len(), n);
    for (j, img) in images.iter().enumerate() {
        for (t, c) in img.terms() {
            out_mat.set(rows[t], j, c.clone());
        }
    }
    let cycles = out_mat.kernel();

    // boundaries of bounded chains that stay bounded
    let pre: Vec<Element> = below.iter().map(|m| d.apply_mono(alg, m)).collect::<Result<_>>()?;
    let mut outside: BTreeMap<&Monomial, usize> = BTreeMap::new();
    for img in &pre {
        for (t, _) in img.terms() {
            if !idx.contains_key(t) {
                let next = outside.len();
                outside.entry(t).or_insert(next);
            }
        }
    }
    let mut inside_mat = Matrix::zeros(n, below.len());
    let mut outside_mat = Matrix::zeros(outside.len(), below.len());
    for (j, img) in pre.iter().enumerate() {
        for (t, c) in img.terms() {
            match idx.get(t) {
                Some(&i) => inside_mat.set(i, j, c.clone()),
                None => outside_mat.set(outside[t], j, c.clone()),
            }
        }
    }
    let truncated_image_rank = inside_mat.rank();
    let combos = if outside.is_empty() { identity_vectors(below.len()) } else { outside_mat.kernel() };
    let boundaries: Vec<Vec<Q>> = combos.iter().map(|c| inside_mat.mul_vec(c)).collect();

    // significance permutation: position -> basis index
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&a, &b| significance_cmp(alg, &basis[a], &basis[b]));
    let permute = |v: &[Q]| perm.iter().map(|&i| v[i].clone()).collect::<Vec<Q>>();

    let bmat = Matrix::from_rows(if boundaries.is_empty() { vec![] } else { boundaries.iter().map(|v| permute(v)).collect() });
    let (brref, bpiv) = if boundaries.is_empty() { (Matrix::zeros(0, n), vec![]) } else { bmat.rref() };
    let rank_b = bpiv.len();
    let mut reduced: Vec<Vec<Q>> = Vec::new();
    for z in &cycles {
        let mut v = permute(z);
        reduce_against(&mut v, &brref, &bpiv);
        if v.iter().any(|c| !c.is_zero()) {
            reduced.push(v);
        }
    }
    let reps_rows = if reduced.is_empty() { vec![] } else { Matrix::from_rows(reduced).rref().0.rows_vec() };
    let mut reps: Vec<(u32, Element)> = Vec::new();
    for row in reps_rows {
        let mut e = Element::zero();
        let mut lead_poly = None;
        for (pos, c) in row.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let m = &basis[perm[pos]];
            if lead_poly.is_none() {
                lead_poly = Some(alg.mono_poly(m));
            }
            e.add_term(m.clone(), c.clone());
        }
        reps.push((lead_poly.unwrap_or(0), e));
    }
    reps.sort_by_key(|(p, _)| *p);
    let dim = cycles.len() - rank_b;
    debug_assert_eq!(dim, reps.len());
    let dr_ok = bounds.dr_window.is_none_or(|(lo, _)| lo == 0);
    // a vanishing answer only uses exact cycles and genuine boundaries
    let certified = dim == 0 || (never_lowers(alg, d) && dr_ok && truncated_image_rank == rank_b);
    Ok(DegreeCohomology {
        degree: k,
        dim,
        certified,
        representatives: reps.into_iter().map(|(_, e)| e).collect(),
        rank: RankData {
            basis_size: n,
            cycles: cycles.len(),
            boundaries: rank_b,
            truncated_image_rank,
            flagged_columns: flagged,
        },
    })
}

/// Cohomology over the whole window, after checking `d² = 0`.
pub fn cohomology(pres: &DgaPresentation, bounds: &TruncationBounds) -> Result<CohomologyReport> {
    bounds.validate()?;
    let sz = pres.square_zero(Some(bounds.weight_max))?;
    if !sz.holds {
        return Err(Error::NotSquareZero(sz.witness.unwrap_or_default()));
    }
    let mut degrees = Vec::new();
    for k in bounds.coh_window.0..=bounds.coh_window.1 {
        degrees.push(cohomology_at(&pres.alg, &pres.differential, k, bounds)?);
    }
    Ok(CohomologyReport { degrees })
}

impl Matrix {
    fn rows_vec(&self) -> Vec<Vec<Q>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// A bounded complex of finite-dimensional Q-vector spaces.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FiniteComplex {
    pub dims: BTreeMap<i64, usize>,
    /// `d[k]` maps degree `k` to `k + 1` (rows `dims[k+1]`, columns `dims[k]`).
    pub d: BTreeMap<i64, Matrix>,
}

impl FiniteComplex {
    pub fn new(dims: BTreeMap<i64, usize>) -> Self {
        FiniteComplex { dims, d: BTreeMap::new() }
    }

    pub fn dim(&self, k: i64) -> usize {
        self.dims.get(&k).copied().unwrap_or(0)
    }

    /// Differential from degree `k` (zero matrix where unspecified).
    pub fn diff(&self, k: i64) -> Matrix {
        self.d.get(&k).cloned().unwrap_or_else(|| Matrix::zeros(self.dim(k + 1), self.dim(k)))
    }

    pub fn set_diff(&mut self, k: i64, m: Matrix) -> Result<()> {
        if m.rows != self.dim(k + 1) || m.cols != self.dim(k) {
            return Err(Error::Invalid(format!(
                "differential from degree {k} has shape {}x{}, expected {}x{}",
                m.rows,
                m.cols,
                self.dim(k + 1),
                self.dim(k)
            )));
        }
        self.d.insert(k, m);
        Ok(())
    }

    pub fn degree_range(&self) -> Option<(i64, i64)> {
        let lo = self.dims.iter().find(|(_, &n)| n > 0).map(|(&k, _)| k)?;
        let hi = self.dims.iter().rev().find(|(_, &n)| n > 0).map(|(&k, _)| k)?;
        Some((lo, hi))
    }

    pub fn check_square_zero(&self) -> Result<()> {
        for (&k, m) in &self.d {
            let next = self.diff(k + 1);
            if !next.mul(m).is_zero() {
                return Err(Error::NotSquareZero(format!("degree {k}")));
            }
        }
        Ok(())
    }

    pub fn cohomology_dim(&self, k: i64) -> usize {
        let out = self.diff(k);
        let inc = self.diff(k - 1);
        self.dim(k) - out.rank() - inc.rank()
    }
}

/// A chain map between finite complexes, by degree.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChainMap {
    pub components: BTreeMap<i64, Matrix>,
}

impl ChainMap {
    pub fn at(&self, k: i64, rows: usize, cols: usize) -> Matrix {
        self.components.get(&k).cloned().unwrap_or_else(|| Matrix::zeros(rows, cols))
    }

    pub fn identity(c: &FiniteComplex) -> Self {
        ChainMap { components: c.dims.iter().map(|(&k, &n)| (k, Matrix::identity(n))).collect() }
    }

    pub fn zero() -> Self {
        ChainMap::default()
    }

    /// Checks `d f = f d` between `src` and `tgt`.
    pub fn is_chain_map(&self, src: &FiniteComplex, tgt: &FiniteComplex) -> bool {
        let lo = src.dims.keys().chain(tgt.dims.keys()).min().copied().unwrap_or(0) - 1;
        let hi = src.dims.keys().chain(tgt.dims.keys()).max().copied().unwrap_or(0) + 1;
        (lo..=hi).all(|k| {
            let fk = self.at(k, tgt.dim(k), src.dim(k));
            let fk1 = self.at(k + 1, tgt.dim(k + 1), src.dim(k + 1));
            tgt.diff(k).mul(&fk) == fk1.mul(&src.diff(k))
        })
    }
}

fn block(rows: &[usize], cols: &[usize], blocks: &[(usize, usize, Matrix)]) -> Matrix {
    let r_off: Vec<usize> = rows.iter().scan(0, |s, &n| { let o = *s; *s += n; Some(o) }).collect();
    let c_off: Vec<usize> = cols.iter().scan(0, |s, &n| { let o = *s; *s += n; Some(o) }).collect();
    let mut out = Matrix::zeros(rows.iter().sum(), cols.iter().sum());
    for (bi, bj, m) in blocks {
        for i in 0..m.rows {
            for j in 0..m.cols {
                let v = m.get(i, j);
                if !v.is_zero() {
                    out.set(r_off[*bi] + i, c_off[*bj] + j, v.clone());
                }
            }
        }
    }
    out
}

/// Mapping cone of `f: A → B`, in degree `k`: `A^{k+1} ⊕ B^k`, `d(a, b) = (-da, f a + db)`.
pub fn mapping_cone(a: &FiniteComplex, b: &FiniteComplex, f: &ChainMap) -> FiniteComplex {
    let degs: Vec<i64> = a.dims.keys().map(|k| k - 1).chain(b.dims.keys().copied()).collect();
    let (lo, hi) = (degs.iter().min().copied().unwrap_or(0), degs.iter().max().copied().unwrap_or(0));
    let mut c = FiniteComplex::default();
    for k in lo..=hi {
        c.dims.insert(k, a.dim(k + 1) + b.dim(k));
    }
    for k in lo..hi {
        let neg_da = a.diff(k + 1).scale_by(&-Q::one());
        let fk = f.at(k + 1, b.dim(k + 1), a.dim(k + 1));
        let m = block(
            &[a.dim(k + 2), b.dim(k + 1)],
            &[a.dim(k + 1), b.dim(k)],
            &[(0, 0, neg_da), (1, 0, fk), (1, 1, b.diff(k))],
        );
        c.d.insert(k, m);
    }
    c
}

impl Matrix {
    pub fn scale_by(&self, c: &Q) -> Matrix {
        let mut m = self.clone();
        for i in 0..m.rows {
            for j in 0..m.cols {
                let v = m.get(i, j) * c;
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn sub_mat(&self, other: &Matrix) -> Matrix {
        let mut m = self.clone();
        for i in 0..m.rows {
            for j in 0..m.cols {
                let v = m.get(i, j) - other.get(i, j);
                m.set(i, j, v);
            }
        }
        m
    }
}

/// A commutative square `A → B → D`, `A → C → D` of finite complexes.
#[derive(Clone, Debug, Default)]
pub struct Square {
    pub a: FiniteComplex,
    pub b: FiniteComplex,
    pub c: FiniteComplex,
    pub d: FiniteComplex,
    pub f: ChainMap,
    pub g: ChainMap,
    pub beta: ChainMap,
    pub gamma: ChainMap,
}

impl Square {
    fn degree_span(&self) -> (i64, i64) {
        let all: Vec<i64> = [&self.a, &self.b, &self.c, &self.d].iter().flat_map(|c| c.dims.keys().copied()).collect();
        (all.iter().min().copied().unwrap_or(0) - 1, all.iter().max().copied().unwrap_or(0) + 1)
    }

    /// First degree where `β∘f ≠ γ∘g`.
    pub fn noncommuting_degree(&self) -> Option<i64> {
        let (lo, hi) = self.degree_span();
        (lo..=hi).find(|&k| {
            let bf = self.beta.at(k, self.d.dim(k), self.b.dim(k)).mul(&self.f.at(k, self.b.dim(k), self.a.dim(k)));
            let cg = self.gamma.at(k, self.d.dim(k), self.c.dim(k)).mul(&self.g.at(k, self.c.dim(k), self.a.dim(k)));
            bf != cg
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CartesianReport {
    pub holds: bool,
    /// Degrees (of the comparison cone) with nonzero cohomology, and its dimension.
    pub defects: Vec<(i64, usize)>,
}

pub fn homotopy_cartesian_check(sq: &Square, window: (i64, i64)) -> Result<CartesianReport> {
    for (name, m, s, t) in [("f", &sq.f, &sq.a, &sq.b), ("g", &sq.g, &sq.a, &sq.c), ("beta", &sq.beta, &sq.b, &sq.d), ("gamma", &sq.gamma, &sq.c, &sq.d)] {
        if !m.is_chain_map(s, t) {
            return Err(Error::Invalid(format!("`{name}` is not a chain map")));
        }
    }
    if let Some(k) = sq.noncommuting_degree() {
        return Err(Error::Invalid(format!("square does not commute in degree {k}")));
    }
    let (lo, hi) = sq.degree_span();
    // P^k = B^k ⊕ C^k ⊕ D^{k-1}, d(b, c, t) = (db, dc, -dt + βb - γc)
    let mut p = FiniteComplex::default();
    for k in lo..=hi {
        p.dims.insert(k, sq.b.dim(k) + sq.c.dim(k) + sq.d.dim(k - 1));
    }
    for k in lo..hi {
        let rows = [sq.b.dim(k + 1), sq.c.dim(k + 1), sq.d.dim(k)];
        let cols = [sq.b.dim(k), sq.c.dim(k), sq.d.dim(k - 1)];
        let m = block(
            &rows,
            &cols,
            &[
                (0, 0, sq.b.diff(k)),
                (1, 1, sq.c.diff(k)),
                (2, 2, sq.d.diff(k - 1).scale_by(&-Q::one())),
                (2, 0, sq.beta.at(k, sq.d.dim(k), sq.b.dim(k))),
                (2, 1, sq.gamma.at(k, sq.d.dim(k), sq.c.dim(k)).scale_by(&-Q::one())),
            ],
        );
        p.d.insert(k, m);
    }
    let mut phi = ChainMap::zero();
    for k in lo..=hi {
        let rows = [sq.b.dim(k), sq.c.dim(k), sq.d.dim(k - 1)];
        let m = block(
            &rows,
            &[sq.a.dim(k)],
            &[(0, 0, sq.f.at(k, sq.b.dim(k), sq.a.dim(k))), (1, 0, sq.g.at(k, sq.c.dim(k), sq.a.dim(k)))],
        );
        phi.components.insert(k, m);
    }
    let cone = mapping_cone(&sq.a, &p, &phi);
    cone.check_square_zero().map_err(|_| Error::Invariant("comparison cone is not a complex".into()))?;
    let mut defects = Vec::new();
    for k in (window.0 - 1)..=window.1 {
        let h = cone.cohomology_dim(k);
        if h > 0 {
            defects.push((k, h));
        }
    }
    Ok(CartesianReport { holds: defects.is_empty(), defects })
}

/// Degree-wise rescaling helper for tests and callers.
pub fn scalar(c: i64) -> Q {
    Q::from_integer(c.into())
}

fn identity_vectors(n: usize) -> Vec<Vec<Q>> {
    (0..n)
        .map(|i| {
            let mut v = vec![Q::zero(); n];
            v[i] = Q::one();
            v
        })
        .collect()
}
