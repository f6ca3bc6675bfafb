use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use bvk_core::algebroid::AlgebroidPresentation;
use bvk_core::bv::{self, BvPresentation};
use bvk_core::critical_locus::{koszul_complex, koszul_tate as tate};
use bvk_core::homology::{cohomology as coh, DgaPresentation, Provenance, TruncationBounds};
use bvk_core::pipeline::{emit_report, parse_spec_str, run_pipeline, Format};
use bvk_core::{Derivation, Error};

create_exception!(bvk, BudgetError, PyException, "A truncation or memory budget was exhausted.");
create_exception!(bvk, InvariantError, PyException, "An identity that must hold failed; treat as a bug.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Budget(_) => BudgetError::new_err(e.to_string()),
        Error::Invariant(_) | Error::NotSquareZero(_) => InvariantError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn bounds(poly_degree_max: u32, coh_window: (i64, i64), weight_max: u32) -> PyResult<TruncationBounds> {
    TruncationBounds::new(poly_degree_max, coh_window.0, coh_window.1, weight_max).map_err(to_py)
}

/// Runs a TOML problem file given as a string; returns `(exit_code, report_json)`.
#[pyfunction]
fn run(spec: &str) -> PyResult<(i32, String)> {
    let s = parse_spec_str(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let r = run_pipeline(&s);
    let out = String::from_utf8(emit_report(&r, Format::Json)).expect("utf-8");
    Ok((r.exit_code, out))
}

/// Tate's algorithm on the Koszul complex of `f`; returns the generator log as
/// `(name, degree, differential)` triples.
#[pyfunction]
#[pyo3(signature = (vars, f, poly_degree_max = 6, coh_window = (-3, 0), max_generators = 8))]
fn koszul_tate(
    vars: Vec<String>,
    f: &str,
    poly_degree_max: u32,
    coh_window: (i64, i64),
    max_generators: usize,
) -> PyResult<Vec<(String, i64, String)>> {
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    let k = koszul_complex(&names, f).map_err(to_py)?;
    let t = tate(&k, &bounds(poly_degree_max, coh_window, 0)?, max_generators).map_err(to_py)?;
    Ok(t.log.into_iter().map(|g| (g.name, g.degree, g.differential)).collect())
}

/// Cohomology of the Koszul complex of `f`: `(degree, dim, certified)` per degree.
#[pyfunction]
#[pyo3(signature = (vars, f, poly_degree_max = 6, coh_window = (-3, 0)))]
fn cohomology(vars: Vec<String>, f: &str, poly_degree_max: u32, coh_window: (i64, i64)) -> PyResult<Vec<(i64, usize, bool)>> {
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    let k = koszul_complex(&names, f).map_err(to_py)?;
    let r = coh(&k.pres, &bounds(poly_degree_max, coh_window, 0)?).map_err(to_py)?;
    Ok(r.degrees.iter().map(|d| (d.degree, d.dim, d.certified)).collect())
}

/// A strict BV presentation with its canonical bracket.
#[pyclass(module = "bvk")]
struct Bv {
    inner: BvPresentation,
}

#[pymethods]
impl Bv {
    /// Equivariant BV algebra of `f` under a Lie algebra acting by vector fields
    /// (`anchor` maps generator names to `Σ v*d_x` strings; `brackets` lists `(a, b, [a, b])`).
    #[staticmethod]
    #[pyo3(signature = (vars, f, generators, anchor, brackets = Vec::new(), weight_max = 2))]
    fn equivariant(
        vars: Vec<String>,
        f: &str,
        generators: Vec<String>,
        anchor: Vec<(String, String)>,
        brackets: Vec<(String, String, String)>,
        weight_max: u32,
    ) -> PyResult<Self> {
        let names: Vec<&str> = vars.iter().map(String::as_str).collect();
        let base = bvk_core::critical_locus::polynomial_ring(&names).map_err(to_py)?;
        let fe = base.parse(f).map_err(to_py)?;
        let pres = DgaPresentation::new(base.clone(), Derivation::zero(&base, 1), Provenance::Other).map_err(to_py)?;
        let gens: Vec<(&str, i64)> = generators.iter().map(|g| (g.as_str(), 0)).collect();
        let mut a = AlgebroidPresentation::new(pres, &gens).map_err(to_py)?;
        for (g, v) in &anchor {
            let i = a.gen_index(g).map_err(to_py)?;
            a.set_anchor_str(i, v).map_err(to_py)?;
        }
        for (x, y, v) in &brackets {
            let (i, j) = (a.gen_index(x).map_err(to_py)?, a.gen_index(y).map_err(to_py)?);
            a.set_bracket_str(i, j, v).map_err(to_py)?;
        }
        Ok(Bv { inner: bv::equivariant_bv(&fe, &a, weight_max).map_err(to_py)? })
    }

    /// BV presentation of the bare Koszul complex of `f`.
    #[staticmethod]
    fn koszul(vars: Vec<String>, f: &str) -> PyResult<Self> {
        let names: Vec<&str> = vars.iter().map(String::as_str).collect();
        Ok(Bv { inner: bv::koszul_bv(&names, f).map_err(to_py)? })
    }

    fn generators(&self) -> Vec<(String, i64)> {
        self.inner.alg().gens().iter().map(|g| (g.name.clone(), g.degree)).collect()
    }

    fn pairs(&self) -> Vec<(String, String)> {
        let a = self.inner.alg();
        self.inner.pairs().into_iter().map(|(x, y)| (a.name(x).to_string(), a.name(y).to_string())).collect()
    }

    fn bracket(&self, a: &str, b: &str) -> PyResult<String> {
        let (x, y) = (self.inner.parse(a).map_err(to_py)?, self.inner.parse(b).map_err(to_py)?);
        Ok(self.inner.format(&self.inner.bracket(&x, &y).map_err(to_py)?))
    }

    /// The BV charge from the perturbation series.
    fn charge(&self) -> PyResult<String> {
        Ok(bv::bv_charge(&self.inner).map_err(to_py)?.q_string)
    }

    /// `{Q, Q}` as a string; `"0"` when the master equation holds.
    fn cme_residual(&self, q: &str) -> PyResult<String> {
        let qe = self.inner.parse(q).map_err(to_py)?;
        Ok(self.inner.cme_check(&qe).map_err(to_py)?.residual_string)
    }

    fn __repr__(&self) -> String {
        let names: Vec<String> = self.generators().into_iter().map(|(n, d)| format!("{n}:{d}")).collect();
        format!("Bv([{}])", names.join(", "))
    }
}

#[pymodule]
fn bvk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BudgetError", m.py().get_type::<BudgetError>())?;
    m.add("InvariantError", m.py().get_type::<InvariantError>())?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(koszul_tate, m)?)?;
    m.add_function(wrap_pyfunction!(cohomology, m)?)?;
    m.add_class::<Bv>()?;
    Ok(())
}
