//! Problem files, stage orchestration and run reports.
//!
//! A problem file is TOML:
//!
//! ```toml
//! pipeline = ["bv-charge", "cme"]
//!
//! [base]
//! vars = ["x", "y"]
//!
//! [functional]
//! f = "x^2*y"
//!
//! [algebroid]
//! generators = ["e"]
//! anchor = { e = "x*d_x - 2*y*d_y" }
//!
//! [bounds]
//! poly_degree_max = 5
//! coh_window = [-3, 0]
//! weight_max = 2
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use toml::Spanned;

use crate::algebroid::{ce_algebra, format_vector_field, validate_algebroid, AlgebroidPresentation, Ce};
use crate::bv::{
    bv_charge, bv_from_almost_critical, equivariant_bv, koszul_bv, lagrangian_correspondence_check, BvPresentation,
};
use crate::critical_locus::{koszul_from, polynomial_ring, Koszul};
use crate::error::{Error, Result};
use crate::gca::{Algebra, Element, Q};
use crate::homology::{cohomology, DgaPresentation, Provenance, TruncationBounds};

pub const SCHEMA: &str = "bvk-report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stage {
    #[serde(rename = "koszul-tate")]
    KoszulTate,
    #[serde(rename = "ce")]
    Ce,
    #[serde(rename = "bv-charge")]
    BvCharge,
    #[serde(rename = "cme")]
    Cme,
    #[serde(rename = "cohomology")]
    Cohomology,
    #[serde(rename = "lagrangian-check")]
    LagrangianCheck,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::KoszulTate, Stage::Ce, Stage::BvCharge, Stage::Cme, Stage::Cohomology, Stage::LagrangianCheck];

    pub fn name(self) -> &'static str {
        match self {
            Stage::KoszulTate => "koszul-tate",
            Stage::Ce => "ce",
            Stage::BvCharge => "bv-charge",
            Stage::Cme => "cme",
            Stage::Cohomology => "cohomology",
            Stage::LagrangianCheck => "lagrangian-check",
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
            format!("unknown stage `{s}` (expected one of {})", names.join(", "))
        })
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A problem-file error with a 1-based line and column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SpecError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecErrors(pub Vec<SpecError>);

impl fmt::Display for SpecErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SpecErrors {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    pipeline: Spanned<Vec<Spanned<String>>>,
    base: RawBase,
    functional: RawFunctional,
    algebroid: Option<RawAlgebroid>,
    #[serde(default)]
    bounds: RawBounds,
    #[serde(default)]
    pairing: BTreeMap<String, Spanned<String>>,
    lagrangian: Option<RawLagrangian>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBase {
    vars: Vec<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunctional {
    f: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlgebroid {
    generators: Vec<Spanned<String>>,
    #[serde(default)]
    anchor: BTreeMap<String, Spanned<String>>,
    #[serde(default)]
    bracket: BTreeMap<String, BTreeMap<String, Spanned<String>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    #[serde(default = "default_poly")]
    poly_degree_max: Spanned<i64>,
    #[serde(default = "default_window")]
    coh_window: Spanned<Vec<i64>>,
    #[serde(default = "default_weight")]
    weight_max: Spanned<i64>,
    order_max: Option<Spanned<i64>>,
    #[serde(default = "default_generators")]
    max_generators: Spanned<i64>,
}

fn default_poly() -> Spanned<i64> {
    Spanned::new(0..0, 6)
}
fn default_window() -> Spanned<Vec<i64>> {
    Spanned::new(0..0, vec![-3, 0])
}
fn default_weight() -> Spanned<i64> {
    Spanned::new(0..0, 2)
}
fn default_generators() -> Spanned<i64> {
    Spanned::new(0..0, 8)
}

impl Default for RawBounds {
    fn default() -> Self {
        RawBounds {
            poly_degree_max: default_poly(),
            coh_window: default_window(),
            weight_max: default_weight(),
            order_max: None,
            max_generators: default_generators(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLagrangian {
    #[serde(default)]
    point: Vec<Spanned<String>>,
    #[serde(default)]
    drop: Vec<Spanned<String>>,
    window: Option<Spanned<Vec<i64>>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AlgebroidSpec {
    pub generators: Vec<String>,
    pub anchor: BTreeMap<String, String>,
    /// `(a, b, [a, b])`
    pub bracket: Vec<(String, String, String)>,
}

/// A validated problem file.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub vars: Vec<String>,
    pub f: String,
    pub base: Algebra,
    pub functional: Element,
    pub algebroid: Option<AlgebroidSpec>,
    pub bounds: TruncationBounds,
    pub order_max: u32,
    pub max_generators: usize,
    pub pairing: BTreeMap<String, String>,
    pub point: Vec<Q>,
    pub drop: Vec<String>,
    pub lagrangian_window: (i64, i64),
    pub pipeline: Vec<Stage>,
}

struct Lines<'a> {
    src: &'a str,
}

impl Lines<'_> {
    fn at(&self, offset: usize) -> (usize, usize) {
        let before = &self.src[..offset.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> SpecError {
        let (line, column) = self.at(offset);
        SpecError { line, column, message: message.into() }
    }

    /// Error inside a quoted string value, at character column `col` of the string.
    fn err_in<T>(&self, s: &Spanned<T>, col: usize, message: impl Into<String>) -> SpecError {
        let start = s.span().start;
        let quoted = self.src[start..].starts_with('"') || self.src[start..].starts_with('\'');
        let (line, column) = self.at(start);
        SpecError { line, column: column + col - 1 + usize::from(quoted), message: message.into() }
    }
}

fn syntax_of(e: &Error) -> (usize, String) {
    match e {
        Error::Syntax { col, msg } => (*col, msg.clone()),
        other => (1, other.to_string()),
    }
}

pub fn parse_spec(path: impl AsRef<Path>) -> std::result::Result<ProblemSpec, SpecErrors> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|e| {
        SpecErrors(vec![SpecError { line: 0, column: 0, message: format!("cannot read {}: {e}", path.display()) }])
    })?;
    parse_spec_str(&src)
}

/// Parses and validates a problem file, collecting every error found.
pub fn parse_spec_str(src: &str) -> std::result::Result<ProblemSpec, SpecErrors> {
    let lines = Lines { src };
    let raw: RawSpec = toml::from_str(src).map_err(|e| {
        let off = e.span().map_or(0, |s| s.start);
        SpecErrors(vec![lines.err(off, e.message().trim().to_string())])
    })?;
    let mut errs = Vec::new();

    let mut pipeline = Vec::new();
    for s in raw.pipeline.get_ref() {
        match s.get_ref().parse::<Stage>() {
            Ok(st) => pipeline.push(st),
            Err(m) => errs.push(lines.err(s.span().start, m)),
        }
    }
    if raw.pipeline.get_ref().is_empty() {
        errs.push(lines.err(raw.pipeline.span().start, "the pipeline is empty"));
    }

    let mut vars = Vec::new();
    for v in &raw.base.vars {
        if !crate::gca::is_identifier(v.get_ref()) {
            errs.push(lines.err(v.span().start, format!("`{}` is not a valid variable name", v.get_ref())));
        } else if vars.contains(v.get_ref()) {
            errs.push(lines.err(v.span().start, format!("variable `{}` is declared twice", v.get_ref())));
        } else {
            vars.push(v.get_ref().clone());
        }
    }
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    let base = polynomial_ring(&names).map_err(|e| SpecErrors(vec![lines.err(0, e.to_string())]))?;

    let f_src = &raw.functional.f;
    let functional = match base.parse(f_src.get_ref()) {
        Ok(e) => e,
        Err(e) => {
            let (col, msg) = syntax_of(&e);
            errs.push(lines.err_in(f_src, col, msg));
            Element::zero()
        }
    };

    let algebroid = raw.algebroid.as_ref().map(|a| check_algebroid(a, &base, &lines, &mut errs));

    let b = &raw.bounds;
    let mut nonneg = |v: &Spanned<i64>, what: &str, positive: bool| -> u32 {
        let x = *v.get_ref();
        if x < i64::from(positive) || x > 1_000 {
            let need = if positive { "a positive integer" } else { "a non-negative integer" };
            errs.push(lines.err(v.span().start, format!("{what} must be {need} at most 1000, got {x}")));
            0
        } else {
            x as u32
        }
    };
    let poly = nonneg(&b.poly_degree_max, "poly_degree_max", true);
    let weight_max = nonneg(&b.weight_max, "weight_max", false);
    let order_max = b.order_max.as_ref().map_or(weight_max.max(1), |o| nonneg(o, "order_max", true));
    let max_generators = nonneg(&b.max_generators, "max_generators", false) as usize;
    let window = |w: &Spanned<Vec<i64>>, errs: &mut Vec<SpecError>| -> (i64, i64) {
        match w.get_ref().as_slice() {
            &[lo, hi] if lo <= hi && lo > -100 && hi < 100 => (lo, hi),
            _ => {
                errs.push(lines.err(w.span().start, "a window must be [lo, hi] with lo <= hi, both finite"));
                (0, 0)
            }
        }
    };
    let (lo, hi) = window(&b.coh_window, &mut errs);
    let bounds = TruncationBounds { poly_degree_max: poly, coh_window: (lo, hi), weight_max, dr_window: None };

    let mut pairing = BTreeMap::new();
    for (k, v) in &raw.pairing {
        pairing.insert(k.clone(), v.get_ref().clone());
    }

    let mut point = Vec::new();
    let mut drop = Vec::new();
    let mut lagrangian_window = (lo, 1.max(lo));
    if let Some(l) = &raw.lagrangian {
        for p in &l.point {
            match Algebra::new().parse(p.get_ref()) {
                Ok(e) if e.terms().all(|(m, _)| m.is_one()) => point.push(e.constant_part()),
                Ok(_) => errs.push(lines.err(p.span().start, "point coordinates must be rational numbers")),
                Err(e) => {
                    let (col, msg) = syntax_of(&e);
                    errs.push(lines.err_in(p, col, msg));
                }
            }
        }
        if !l.point.is_empty() && l.point.len() != vars.len() {
            errs.push(lines.err(
                l.point[0].span().start,
                format!("the point has {} coordinates but there are {} variables", l.point.len(), vars.len()),
            ));
        }
        drop = l.drop.iter().map(|d| d.get_ref().clone()).collect();
        if let Some(w) = &l.window {
            lagrangian_window = window(w, &mut errs);
        }
    }
    if point.is_empty() {
        point = vec![Q::from_integer(0.into()); vars.len()];
    }

    if !errs.is_empty() {
        errs.sort_by_key(|e| (e.line, e.column));
        return Err(SpecErrors(errs));
    }
    Ok(ProblemSpec {
        vars,
        f: f_src.get_ref().clone(),
        base,
        functional,
        algebroid,
        bounds,
        order_max,
        max_generators,
        pairing,
        point,
        drop,
        lagrangian_window,
        pipeline,
    })
}

fn check_algebroid(a: &RawAlgebroid, base: &Algebra, lines: &Lines, errs: &mut Vec<SpecError>) -> AlgebroidSpec {
    let mut gens: Vec<String> = Vec::new();
    for g in &a.generators {
        if !crate::gca::is_identifier(g.get_ref()) || base.index_of(g.get_ref()).is_some() {
            errs.push(lines.err(g.span().start, format!("`{}` cannot name an algebroid generator", g.get_ref())));
        } else if gens.contains(g.get_ref()) {
            errs.push(lines.err(g.span().start, format!("algebroid generator `{}` is declared twice", g.get_ref())));
        } else {
            gens.push(g.get_ref().clone());
        }
    }
    let mut probe = base.clone();
    for v in 0..base.len() {
        let _ = probe.add(crate::gca::Generator::extra(format!("d_{}", base.name(v)), 0));
    }
    let mut lvals = base.clone();
    for g in &gens {
        let _ = lvals.add(crate::gca::Generator::extra(g, 0));
    }
    let mut anchor = BTreeMap::new();
    for (k, v) in &a.anchor {
        if !gens.contains(k) {
            errs.push(lines.err(v.span().start, format!("anchor of undeclared generator `{k}`")));
            continue;
        }
        if let Err(e) = probe.parse(v.get_ref()) {
            let (col, msg) = syntax_of(&e);
            errs.push(lines.err_in(v, col, msg));
            continue;
        }
        anchor.insert(k.clone(), v.get_ref().clone());
    }
    let mut bracket = Vec::new();
    for (x, row) in &a.bracket {
        for (y, v) in row {
            for g in [x, y] {
                if !gens.contains(g) {
                    errs.push(lines.err(v.span().start, format!("bracket references undeclared generator `{g}`")));
                }
            }
            if let Err(e) = lvals.parse(v.get_ref()) {
                let (col, msg) = syntax_of(&e);
                errs.push(lines.err_in(v, col, msg));
                continue;
            }
            bracket.push((x.clone(), y.clone(), v.get_ref().clone()));
        }
    }
    AlgebroidSpec { generators: gens, anchor, bracket }
}

impl ProblemSpec {
    /// The base ring as a presentation with zero differential.
    pub fn base_presentation(&self) -> Result<DgaPresentation> {
        let d = crate::derivation::Derivation::zero(&self.base, 1);
        DgaPresentation::new(self.base.clone(), d, Provenance::Other)
    }

    pub fn build_algebroid(&self) -> Result<Option<AlgebroidPresentation>> {
        let Some(spec) = &self.algebroid else { return Ok(None) };
        let gens: Vec<(&str, i64)> = spec.generators.iter().map(|g| (g.as_str(), 0)).collect();
        let mut a = AlgebroidPresentation::new(self.base_presentation()?, &gens)?;
        for (g, v) in &spec.anchor {
            let i = a.gen_index(g)?;
            a.set_anchor_str(i, v)?;
        }
        for (x, y, v) in &spec.bracket {
            let (i, j) = (a.gen_index(x)?, a.gen_index(y)?);
            a.set_bracket_str(i, j, v)?;
        }
        Ok(Some(a))
    }

    /// Configuration echo for reports, with stable field order.
    pub fn echo(&self) -> Value {
        let bounds = json!({
            "poly_degree_max": self.bounds.poly_degree_max,
            "coh_window": [self.bounds.coh_window.0, self.bounds.coh_window.1],
            "weight_max": self.bounds.weight_max,
            "order_max": self.order_max,
            "max_generators": self.max_generators,
        });
        json!({
            "vars": self.vars,
            "f": self.f,
            "algebroid": self.algebroid,
            "bounds": bounds,
            "pairing": self.pairing,
            "lagrangian": {
                "point": self.point.iter().map(crate::gca::format_q).collect::<Vec<_>>(),
                "drop": self.drop,
                "window": [self.lagrangian_window.0, self.lagrangian_window.1],
            },
            "pipeline": self.pipeline.iter().map(|s| s.name()).collect::<Vec<_>>(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
    Uncertified,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub payload: Value,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub version: &'static str,
    pub config: Value,
    pub stages: Vec<StageReport>,
    pub exit_code: i32,
}

/// Exit code of an error: 1 invalid input, 2 budget, 3 internal invariant.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Budget(_) => 2,
        Error::Invariant(_) | Error::NotSquareZero(_) => 3,
        _ => 1,
    }
}

#[derive(Default)]
struct State {
    koszul: Option<Koszul>,
    crit: Option<DgaPresentation>,
    algebroid: Option<AlgebroidPresentation>,
    ce: Option<Ce>,
    bv: Option<BvPresentation>,
    charge: Option<Element>,
    obstruction: Option<(u32, String)>,
    current: Option<DgaPresentation>,
}

/// Outcome of one stage: a status, its payload and, for failures, the exit code.
struct Outcome {
    status: Status,
    payload: Value,
    code: i32,
    error: Option<String>,
}

impl Outcome {
    fn ok(payload: Value) -> Self {
        Outcome { status: Status::Ok, payload, code: 0, error: None }
    }
    fn check(holds: bool, payload: Value, what: &str) -> Self {
        if holds {
            Outcome::ok(payload)
        } else {
            Outcome { status: Status::Failed, payload, code: 3, error: Some(format!("{what} does not hold")) }
        }
    }
    fn uncertified(payload: Value, why: String) -> Self {
        Outcome { status: Status::Uncertified, payload, code: 2, error: Some(why) }
    }
}

/// Runs the stages in order. A stage that errors or fails stops the run; an uncertified
/// stage does not. The exit code is that of the first failure, otherwise 2 if some stage
/// is uncertified, otherwise 0.
pub fn run_pipeline(spec: &ProblemSpec) -> RunReport {
    run_stages(spec, &spec.pipeline)
}

/// Runs the pipeline up to and including the first occurrence of `last`.
pub fn run_until(spec: &ProblemSpec, last: Stage) -> std::result::Result<RunReport, String> {
    let pos = spec.pipeline.iter().position(|&s| s == last).ok_or_else(|| format!("stage `{last}` is not in the pipeline"))?;
    Ok(run_stages(spec, &spec.pipeline[..=pos]))
}

fn run_stages(spec: &ProblemSpec, stages: &[Stage]) -> RunReport {
    let mut state = State::default();
    let mut reports = Vec::new();
    let mut exit = 0;
    for &stage in stages {
        let t0 = Instant::now();
        let out = run_stage(spec, stage, &mut state).unwrap_or_else(|e| {
            let code = exit_code(&e);
            let status = if code == 2 { Status::Uncertified } else { Status::Failed };
            Outcome { status, payload: json!({}), code, error: Some(e.to_string()) }
        });
        let ms = (t0.elapsed().as_secs_f64() * 1e6).round() / 1e3;
        let stop = out.status == Status::Failed || (out.status == Status::Uncertified && out.payload == json!({}));
        if out.code != 0 && (exit == 0 || (exit == 2 && out.status == Status::Failed)) {
            exit = out.code;
        }
        reports.push(StageReport { stage, status: out.status, error: out.error, payload: out.payload, wall_time_ms: ms });
        if stop {
            break;
        }
    }
    RunReport { schema: SCHEMA, version: env!("CARGO_PKG_VERSION"), config: spec.echo(), stages: reports, exit_code: exit }
}

fn koszul(spec: &ProblemSpec, st: &mut State) -> Result<Koszul> {
    if st.koszul.is_none() {
        st.koszul = Some(koszul_from(&spec.base, &spec.functional)?);
    }
    Ok(st.koszul.clone().expect("set above"))
}

fn algebroid(spec: &ProblemSpec, st: &mut State) -> Result<Option<AlgebroidPresentation>> {
    if st.algebroid.is_none() {
        st.algebroid = spec.build_algebroid()?;
    }
    Ok(st.algebroid.clone())
}

fn apply_pairing(spec: &ProblemSpec, bv: BvPresentation) -> Result<BvPresentation> {
    if spec.pairing.is_empty() {
        return Ok(bv);
    }
    let alg = bv.alg().clone();
    let mut pairing = bv.pairing.clone();
    for (a, b) in &spec.pairing {
        let (i, j) = (alg.id(a)?, alg.id(b)?);
        for k in [i, j] {
            if let Some(old) = pairing[k] {
                pairing[old] = None;
            }
        }
        pairing[i] = Some(j);
        pairing[j] = Some(i);
    }
    BvPresentation::new(bv.base_crit, bv.bv, bv.ghosts, bv.functional, pairing, bv.weight_max)
}

fn ensure_bv(spec: &ProblemSpec, st: &mut State) -> Result<()> {
    if st.bv.is_some() {
        return Ok(());
    }
    let bv = if let Some(a) = algebroid(spec, st)? {
        equivariant_bv(&spec.functional, &a, spec.bounds.weight_max)?
    } else if let Some(crit) = st.crit.clone().filter(|c| c.provenance == Provenance::KoszulTate) {
        let kf = koszul(spec, st)?.f;
        let cand = bv_from_almost_critical(&crit, &kf, &spec.bounds)?;
        st.charge = Some(cand.charge);
        st.obstruction = cand.obstruction;
        cand.bv
    } else {
        let names: Vec<&str> = spec.vars.iter().map(String::as_str).collect();
        koszul_bv(&names, &spec.f)?
    };
    st.bv = Some(apply_pairing(spec, bv)?);
    Ok(())
}

fn run_stage(spec: &ProblemSpec, stage: Stage, st: &mut State) -> Result<Outcome> {
    match stage {
        Stage::KoszulTate => {
            let k = koszul(spec, st)?;
            let t = crate::critical_locus::koszul_tate(&k, &spec.bounds, spec.max_generators)?;
            let coh: Vec<Value> = t
                .cohomology
                .iter()
                .map(|h| json!({"degree": h.degree, "dim": h.dim, "certified": h.certified}))
                .collect();
            let payload = json!({
                "generators": t.log.len(),
                "log": t.log,
                "uncleared": t.uncleared,
                "cohomology": coh,
            });
            let certified = t.certified() && t.complete();
            st.crit = Some(t.pres.clone());
            st.current = Some(t.pres);
            if certified {
                Ok(Outcome::ok(payload))
            } else {
                Ok(Outcome::uncertified(payload, "negative cohomology is not certified to vanish".into()))
            }
        }
        Stage::Ce => {
            let a = algebroid(spec, st)?.ok_or_else(|| Error::Invalid("the ce stage needs an [algebroid] section".into()))?;
            let report = validate_algebroid(&a, &spec.bounds)?;
            let ce = ce_algebra(&a, spec.bounds.weight_max)?;
            let sz = ce.pres.square_zero(Some(spec.bounds.weight_max))?;
            let alg = &ce.pres.alg;
            let differential: BTreeMap<String, String> = ce
                .pres
                .differential
                .images()
                .map(|(g, img)| (alg.name(g).to_string(), alg.format(img)))
                .collect();
            let anchors: BTreeMap<String, String> = (0..a.rank())
                .map(|i| (a.module_gens[i].name.clone(), format_vector_field(&a.base.alg, &a.anchor[i])))
                .collect();
            let failures: Vec<Value> = report
                .failures
                .iter()
                .map(|f| json!({"identity": f.identity, "witness": f.witness, "residual": f.residual}))
                .collect();
            let payload = json!({
                "ghosts": ce.ghosts.iter().map(|&g| alg.name(g)).collect::<Vec<_>>(),
                "anchor": anchors,
                "differential": differential,
                "square_zero": sz.holds,
                "axiom_failures": failures,
            });
            let holds = sz.holds && report.failures.is_empty();
            st.current = Some(ce.pres.clone());
            st.ce = Some(ce);
            if holds {
                Ok(Outcome::ok(payload))
            } else {
                Ok(Outcome { status: Status::Failed, payload, code: 1, error: Some("the algebroid axioms fail".into()) })
            }
        }
        Stage::BvCharge => {
            ensure_bv(spec, st)?;
            let bv = st.bv.clone().expect("built");
            let (q, q_string) = match &st.charge {
                Some(q) => (q.clone(), bv.format(q)),
                None => {
                    let r = bv_charge(&bv)?;
                    (r.q, r.q_string)
                }
            };
            let payload = json!({
                "generators": bv.alg().gens().iter().map(|g| json!({"name": g.name, "degree": g.degree})).collect::<Vec<_>>(),
                "pairs": bv.pairs().iter().map(|&(a, b)| [bv.alg().name(a), bv.alg().name(b)]).collect::<Vec<_>>(),
                "q": q_string,
                "obstruction": st.obstruction.as_ref().map(|(w, r)| json!({"weight": w, "residual": r})),
            });
            st.current = Some(bv.bv.clone());
            st.charge = Some(q);
            match &st.obstruction {
                Some((w, _)) => Ok(Outcome::uncertified(payload, format!("the master equation is obstructed at ghost weight {w}"))),
                None => Ok(Outcome::ok(payload)),
            }
        }
        Stage::Cme => {
            let (Some(bv), Some(q)) = (st.bv.clone(), st.charge.clone()) else {
                return Err(Error::Invalid("the cme stage needs a bv-charge stage before it".into()));
            };
            let r = bv.cme_check(&q)?;
            let payload = json!({
                "residual": r.residual_string,
                "holds": r.holds,
                "vector_field_square_zero": r.vector_field_square_zero,
            });
            if st.obstruction.is_some() && !r.holds {
                return Ok(Outcome::uncertified(payload, "the charge is a truncated candidate".into()));
            }
            Ok(Outcome::check(r.holds, payload, "the classical master equation"))
        }
        Stage::Cohomology => {
            let pres = match &st.current {
                Some(p) => p.clone(),
                None => koszul(spec, st)?.pres,
            };
            let rep = cohomology(&pres, &spec.bounds)?;
            let certified = rep.degrees.iter().all(|d| d.certified);
            let payload = json!({
                "provenance": pres.provenance,
                "degrees": rep.to_json(&pres.alg),
            });
            if certified {
                Ok(Outcome::ok(payload))
            } else {
                Ok(Outcome::uncertified(payload, "some degrees are not certified within the bounds".into()))
            }
        }
        Stage::LagrangianCheck => {
            ensure_bv(spec, st)?;
            let bv = st.bv.clone().expect("built");
            let dropped: Vec<usize> = spec.drop.iter().map(|n| bv.alg().id(n)).collect::<Result<_>>()?;
            let r = lagrangian_correspondence_check(&bv, &spec.point, spec.lagrangian_window, &dropped)?;
            let payload = json!({
                "holds": r.holds,
                "isotropic": r.isotropic,
                "commutes": r.commutes,
                "defects": r.cartesian.defects,
            });
            Ok(Outcome::check(r.holds, payload, "the Lagrangian correspondence"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "text" => Ok(Format::Text),
            _ => Err(format!("unknown format `{s}` (expected json or text)")),
        }
    }
}

pub fn emit_report(r: &RunReport, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("serializable");
            s.push('\n');
            s.into_bytes()
        }
        Format::Text => render_text(r).into_bytes(),
    }
}

fn render_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn render_text(r: &RunReport) -> String {
    let mut out = format!("bvk {} ({})\n", r.version, r.schema);
    for (i, s) in r.stages.iter().enumerate() {
        let status = match s.status {
            Status::Ok => "ok",
            Status::Failed => "failed",
            Status::Uncertified => "uncertified",
        };
        out.push_str(&format!("[{}] {}: {} ({:.3} ms)\n", i + 1, s.stage, status, s.wall_time_ms));
        if let Some(e) = &s.error {
            out.push_str(&format!("    error: {e}\n"));
        }
        if let Value::Object(m) = &s.payload {
            for (k, v) in m {
                out.push_str(&format!("    {k}: {}\n", render_value(v)));
            }
        }
    }
    out.push_str(&format!("exit code: {}\n", r.exit_code));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const GM: &str = r#"
pipeline = ["bv-charge", "cme"]

[base]
vars = ["x", "y"]

[functional]
f = "x^2*y"

[algebroid]
generators = ["e"]
anchor = { e = "x*d_x - 2*y*d_y" }

[bounds]
poly_degree_max = 5
weight_max = 2
"#;

    fn stage<'a>(r: &'a RunReport, s: Stage) -> &'a StageReport {
        r.stages.iter().find(|x| x.stage == s).unwrap()
    }

    #[test]
    fn minimal_spec() {
        let s = parse_spec_str("pipeline = [\"cohomology\"]\n[base]\nvars = [\"x\"]\n[functional]\nf = \"x^3/3\"\n").unwrap();
        assert_eq!(s.vars, ["x"]);
        assert_eq!(s.order_max, 2);
    }

    #[test]
    fn positioned_syntax_error() {
        let src = "pipeline = [\"cohomology\"]\n[base]\nvars = [\"x\"]\n[functional]\nf = \"x^^2\"\n";
        let e = parse_spec_str(src).unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!((e.0[0].line, e.0[0].column), (5, 8), "{e}");
    }

    #[test]
    fn toml_error_is_positioned() {
        let e = parse_spec_str("pipeline = [\n[base]\n").unwrap_err();
        assert!(e.0[0].line >= 1);
        let e = parse_spec_str("pipeline = [\"cohomology\"]\nbogus = 1\n[base]\nvars=[\"x\"]\n[functional]\nf=\"x\"\n").unwrap_err();
        assert_eq!(e.0[0].line, 2, "{e}");
    }

    #[test]
    fn undeclared_bracket_generator() {
        let src = r#"
pipeline = ["ce"]
[base]
vars = ["x"]
[functional]
f = "0"
[algebroid]
generators = ["e1", "e2"]
bracket = { e1 = { e3 = "e2" } }
"#;
        let e = parse_spec_str(src).unwrap_err();
        assert!(e.0.iter().any(|x| x.message.contains("undeclared generator `e3`") && x.line == 9), "{e}");
    }

    #[test]
    fn unknown_stage() {
        let e = parse_spec_str("pipeline = [\"solve\"]\n[base]\nvars = [\"x\"]\n[functional]\nf = \"x\"\n").unwrap_err();
        assert_eq!((e.0[0].line, e.0[0].column), (1, 13));
    }

    #[test]
    fn cubic_koszul_tate() {
        let src = "pipeline = [\"koszul-tate\", \"cohomology\"]\n[base]\nvars = [\"x\"]\n[functional]\nf = \"x^3/3\"\n[bounds]\npoly_degree_max = 6\ncoh_window = [-3, 0]\n";
        let r = run_pipeline(&parse_spec_str(src).unwrap());
        assert_eq!(r.exit_code, 0, "{}", String::from_utf8(emit_report(&r, Format::Text)).unwrap());
        assert_eq!(stage(&r, Stage::KoszulTate).payload["generators"], 0);
        let degs = &stage(&r, Stage::Cohomology).payload["degrees"];
        let h0 = degs.as_array().unwrap().iter().find(|d| d["degree"] == 0).unwrap();
        assert_eq!(h0["dim"], 2);
    }

    #[test]
    fn gm_charge_and_cme() {
        let r = run_pipeline(&parse_spec_str(GM).unwrap());
        assert_eq!(r.exit_code, 0);
        assert_eq!(stage(&r, Stage::BvCharge).payload["q"], "x^2*y + eta*(x*xi_x - 2*y*xi_y)");
        assert_eq!(stage(&r, Stage::Cme).payload["residual"], "0");
    }

    #[test]
    fn zero_weight_is_budget() {
        let src = GM.replace("weight_max = 2", "weight_max = 0");
        let r = run_pipeline(&parse_spec_str(&src).unwrap());
        assert_eq!(r.exit_code, 2);
        assert_eq!(r.stages[0].status, Status::Uncertified);
        assert_eq!(r.stages.len(), 1);
    }

    #[test]
    fn non_invariant_is_invalid() {
        let src = GM.replace("- 2*y*d_y", "+ y*d_y");
        let r = run_pipeline(&parse_spec_str(&src).unwrap());
        assert_eq!(r.exit_code, 1);
        assert!(r.stages[0].error.as_ref().unwrap().contains("3*x^2*y"));
    }

    #[test]
    fn deterministic_json() {
        let s = parse_spec_str(GM).unwrap();
        let strip = |r: RunReport| {
            let mut v = serde_json::to_value(r).unwrap();
            for s in v["stages"].as_array_mut().unwrap() {
                s["wall_time_ms"] = json!(0);
            }
            v.to_string()
        };
        assert_eq!(strip(run_pipeline(&s)), strip(run_pipeline(&s)));
    }

    #[test]
    fn tate_bv_lagrangian() {
        let src = r#"
pipeline = ["koszul-tate", "bv-charge", "lagrangian-check"]
[base]
vars = ["x", "y"]
[functional]
f = "x^2*y"
[bounds]
poly_degree_max = 5
coh_window = [-3, 0]
weight_max = 2
[lagrangian]
point = ["0", "1"]
"#;
        let r = run_pipeline(&parse_spec_str(src).unwrap());
        assert_eq!(stage(&r, Stage::KoszulTate).payload["generators"], 2);
        assert_eq!(stage(&r, Stage::BvCharge).status, Status::Uncertified);
        assert_eq!(stage(&r, Stage::LagrangianCheck).status, Status::Ok);
        assert_eq!(r.exit_code, 2);
    }

    #[test]
    fn run_until_stage() {
        let s = parse_spec_str(GM).unwrap();
        let r = run_until(&s, Stage::BvCharge).unwrap();
        assert_eq!(r.stages.len(), 1);
        assert!(run_until(&s, Stage::Ce).is_err());
    }

    #[test]
    fn text_report() {
        let r = run_pipeline(&parse_spec_str(GM).unwrap());
        let t = String::from_utf8(emit_report(&r, Format::Text)).unwrap();
        assert!(t.contains("    q: x^2*y + eta*(x*xi_x - 2*y*xi_y)\n"), "{t}");
        assert!(t.ends_with("exit code: 0\n"));
    }
}
