//! Python bindings: load a scenario configuration, check no-arbitrage, solve,
//! verify, and cross-check against the grid oracle.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use robustdp::dp::{backward_solve, forward_verify, worst_case_measures, DpError, DpOptions, SolveReport};
use robustdp::na::{check_global_na, NaReport};
use robustdp::oracle::{brute_force_value, compare_report, GridSpec, OracleResult};
use robustdp::payoff::CompiledModel;
use robustdp::scenario::{load_config, Config, PathPrefix};

create_exception!(robustdp, NoArbitrageError, PyValueError, "The market admits an arbitrage direction.");
create_exception!(robustdp, CapExceededError, PyRuntimeError, "A size cap was reached.");

fn dp_err(e: DpError) -> PyErr {
    match e {
        DpError::NaFailed { .. } => NoArbitrageError::new_err(e.to_string()),
        DpError::MemoCap { .. } => CapExceededError::new_err(e.to_string()),
        DpError::Payoff(_) | DpError::Scenario(_) | DpError::PrefixLength { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A validated scenario tree with its payoff model and solver settings.
#[pyclass(frozen, module = "robustdp")]
struct Model {
    cfg: Config,
    compiled: CompiledModel,
}

fn node_ids(cfg: &Config, nodes: &[usize]) -> Vec<String> {
    nodes.iter().map(|&n| cfg.tree.node(n).id.clone()).collect()
}

#[pymethods]
impl Model {
    /// Parses a configuration document.
    #[staticmethod]
    fn from_str(text: &str) -> PyResult<Self> {
        let cfg = load_config(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let compiled = CompiledModel::new(&cfg.model, &cfg.tree).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { cfg, compiled })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyValueError::new_err(format!("reading {path}: {e}")))?;
        Self::from_str(&text)
    }

    #[getter]
    fn depth(&self) -> usize {
        self.cfg.tree.depth()
    }

    #[getter]
    fn market_dim(&self) -> usize {
        self.cfg.tree.market_dim()
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.cfg.tree.nodes().iter().map(|n| n.id.clone()).collect()
    }

    #[getter]
    fn leaves(&self) -> Vec<String> {
        node_ids(&self.cfg, self.cfg.tree.leaves())
    }

    /// Upper bound `C` on every payoff.
    #[getter]
    fn bound(&self) -> f64 {
        self.compiled.bound
    }

    /// Payoff at the leaf reached by `path` (e.g. "0,1") for the stacked
    /// decisions `z`; `-inf` outside the domain.
    fn payoff(&self, path: &str, z: Vec<f64>) -> PyResult<f64> {
        let pos = self.leaf(path)?;
        self.check_len(&z)?;
        Ok(self.compiled.payoffs[pos].eval(&z).to_f64())
    }

    /// Horizon (recession) function of the payoff at a leaf.
    fn horizon(&self, path: &str, ray: Vec<f64>) -> PyResult<f64> {
        let pos = self.leaf(path)?;
        self.check_len(&ray)?;
        Ok(self.compiled.horizons[pos].eval(&ray).to_f64())
    }

    fn check_na(&self, py: Python<'_>) -> PyResult<NaResult> {
        let na = py
            .detach(|| check_global_na(&self.cfg.tree, &self.compiled, self.cfg.solver.sign_pattern_cap))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(NaResult::from(&na))
    }

    /// Robust value and optimal policy. Raises `NoArbitrageError` when the
    /// no-arbitrage check fails.
    #[pyo3(signature = (tol=None, jobs=1, memoize=true))]
    fn solve(&self, py: Python<'_>, tol: Option<f64>, jobs: usize, memoize: bool) -> PyResult<Solution> {
        let mut opts = DpOptions::from_settings(&self.cfg.solver);
        if let Some(t) = tol {
            if !(t > 0.0) {
                return Err(PyValueError::new_err("tol must be positive"));
            }
            opts.tol = t;
        }
        opts.jobs = jobs.max(1);
        opts.memoize = memoize;
        let report = py.detach(|| backward_solve(&self.cfg.tree, &self.cfg.model, &opts)).map_err(dp_err)?;
        Solution::new(&self.cfg, &self.compiled, report)
    }

    /// Exhaustive grid search over every policy on `[lo, hi]` with the given
    /// step, refined `refine` times.
    #[pyo3(signature = (lo, hi, step, refine=2))]
    fn oracle(&self, py: Python<'_>, lo: f64, hi: f64, step: f64, refine: usize) -> PyResult<OracleSolution> {
        let spec = GridSpec { cap: self.cfg.solver.grid_cap, ..GridSpec::new(lo, hi, step, refine) };
        let res = py
            .detach(|| brute_force_value(&self.cfg.tree, &self.compiled, &spec, self.cfg.solver.measure_cap, None))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(OracleSolution::new(&self.cfg, res))
    }

    /// Forward verification of a solution: every product measure attains
    /// the value and no sampled alternative policy beats it, up to `eps`.
    #[pyo3(signature = (solution, eps=1e-6))]
    fn verify(&self, py: Python<'_>, solution: &Solution, eps: f64) -> PyResult<Verification> {
        let v = py
            .detach(|| {
                forward_verify(&self.cfg.tree, &self.compiled, solution.report.value, &solution.report.policy, eps, self.cfg.solver.measure_cap)
            })
            .map_err(dp_err)?;
        Ok(Verification {
            passed: v.pass(),
            attainment_margin: v.attainment_margin,
            optimality_margin: v.optimality_margin,
            measures_checked: v.measures_checked,
        })
    }

    /// Value gap and policy gap between a solution and an oracle result.
    fn compare(&self, solution: &Solution, oracle: &OracleSolution) -> (f64, f64) {
        let c = compare_report(&self.cfg.tree, &self.compiled, &solution.report, &oracle.result, 0.0);
        (c.value_gap, c.policy_gap)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(nodes={}, depth={}, d={}, preset={:?})",
            self.cfg.tree.nodes().len(),
            self.cfg.tree.depth(),
            self.cfg.model.d,
            self.cfg.model.preset.name()
        )
    }
}

impl Model {
    fn leaf(&self, path: &str) -> PyResult<usize> {
        let prefix: PathPrefix = path.parse().map_err(|e| PyValueError::new_err(format!("{e}")))?;
        let node = self.cfg.tree.node_at(&prefix).map_err(|e| PyValueError::new_err(e.to_string()))?;
        self.cfg.tree.leaf_position(node).ok_or_else(|| PyValueError::new_err(format!("path {path} is not a leaf")))
    }

    fn check_len(&self, v: &[f64]) -> PyResult<()> {
        if v.len() != self.compiled.dim {
            return Err(PyValueError::new_err(format!("expected {} entries, got {}", self.compiled.dim, v.len())));
        }
        Ok(())
    }
}

/// Per-node linearity verdicts of the local recession cones.
#[pyclass(frozen, get_all, module = "robustdp")]
struct NaResult {
    passed: bool,
    exact: bool,
    /// Failing node ids with their arbitrage rays.
    failures: BTreeMap<String, Vec<f64>>,
    /// Lineality dimension per checked node.
    lineality: BTreeMap<String, usize>,
}

impl From<&NaReport> for NaResult {
    fn from(na: &NaReport) -> Self {
        Self {
            passed: na.pass(),
            exact: na.exact(),
            failures: na
                .failures()
                .map(|v| (v.id.clone(), v.linearity.certificate.clone().unwrap_or_default()))
                .collect(),
            lineality: na.nodes.iter().map(|v| (v.id.clone(), v.linearity.lineality.len())).collect(),
        }
    }
}

#[pymethods]
impl NaResult {
    fn __repr__(&self) -> String {
        format!("NaResult(passed={}, exact={}, failures={:?})", self.passed, self.exact, self.failures)
    }
}

#[pyclass(frozen, module = "robustdp")]
struct Solution {
    report: SolveReport,
    #[pyo3(get)]
    value: f64,
    #[pyo3(get)]
    certificate_value: f64,
    /// Decision per node id along the optimal trajectory.
    #[pyo3(get)]
    policy: BTreeMap<String, Vec<f64>>,
    /// Worst-case measure index per node id.
    #[pyo3(get)]
    worst_measures: BTreeMap<String, usize>,
}

impl Solution {
    fn new(cfg: &Config, compiled: &CompiledModel, report: SolveReport) -> PyResult<Self> {
        let worst = worst_case_measures(&cfg.tree, compiled, &report.policy).map_err(dp_err)?;
        Ok(Self {
            value: report.value,
            certificate_value: report.certificate_value,
            policy: report.policy.entries.iter().map(|e| (e.id.clone(), e.h.clone())).collect(),
            worst_measures: worst.into_iter().map(|(n, k)| (cfg.tree.node(n).id.clone(), k)).collect(),
            report,
        })
    }
}

#[pymethods]
impl Solution {
    fn __repr__(&self) -> String {
        format!("Solution(value={}, policy={:?})", self.value, self.policy)
    }
}

#[pyclass(frozen, module = "robustdp")]
struct OracleSolution {
    result: OracleResult,
    #[pyo3(get)]
    value: f64,
    #[pyo3(get)]
    policy: BTreeMap<String, Vec<f64>>,
}

impl OracleSolution {
    fn new(cfg: &Config, result: OracleResult) -> Self {
        Self {
            value: result.value,
            policy: result.policy.iter().map(|(n, h)| (cfg.tree.node(*n).id.clone(), h.clone())).collect(),
            result,
        }
    }
}

#[pymethods]
impl OracleSolution {
    fn __repr__(&self) -> String {
        format!("OracleSolution(value={}, policy={:?})", self.value, self.policy)
    }
}

#[pyclass(frozen, get_all, module = "robustdp")]
struct Verification {
    passed: bool,
    attainment_margin: f64,
    optimality_margin: f64,
    measures_checked: usize,
}

#[pymethods]
impl Verification {
    fn __repr__(&self) -> String {
        format!(
            "Verification(passed={}, attainment_margin={:e}, optimality_margin={:e})",
            self.passed, self.attainment_margin, self.optimality_margin
        )
    }
}

#[pymodule(name = "robustdp")]
fn robustdp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<NaResult>()?;
    m.add_class::<Solution>()?;
    m.add_class::<OracleSolution>()?;
    m.add_class::<Verification>()?;
    m.add("NoArbitrageError", m.py().get_type::<NoArbitrageError>())?;
    m.add("CapExceededError", m.py().get_type::<CapExceededError>())?;
    Ok(())
}
