//! Python bindings. Indices are 0-based, as in the Rust library; JSON problem
//! files keep their 1-based convention.

use diagsdp_core as core;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use core::imgseg::{self, SegmentOptions};
use core::rng::{derive_seed, stream_rng, STREAM_INIT, STREAM_ROUNDING, STREAM_SCHEDULE};
use core::{FactorState, Instance, ScheduleMode};

fn py_err(e: core::Error) -> PyErr {
    let msg = format!("{}: {e}", e.code());
    if e.is_validation() {
        PyValueError::new_err(msg)
    } else {
        PyRuntimeError::new_err(msg)
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn factor(columns: Vec<Vec<f64>>) -> PyResult<FactorState> {
    FactorState::from_columns(&columns).or_py()
}

fn to_columns(v: &FactorState) -> Vec<Vec<f64>> {
    v.columns().map(<[f64]>::to_vec).collect()
}

fn initial(n: usize, seed: u64, init: &str) -> PyResult<FactorState> {
    let p = core::choose_rank(n);
    let mut rng = stream_rng(seed, STREAM_INIT);
    match init {
        "random" => FactorState::random(p, n, &mut rng).or_py(),
        "common" => FactorState::common(p, n, &mut rng).or_py(),
        other => Err(PyValueError::new_err(format!(
            "init must be 'random' or 'common', got '{other}'"
        ))),
    }
}

/// Coefficient matrix together with its agent tree.
#[pyclass(frozen, module = "diagsdp")]
struct Problem {
    inner: Instance,
    file_warnings: Vec<String>,
}

#[pymethods]
impl Problem {
    /// `edges` holds `(j, l, w, owner)` tuples with `j < l`; `agents` lists
    /// the index set of each agent.
    #[new]
    fn new(
        n: usize,
        edges: Vec<(usize, usize, f64, usize)>,
        agents: Vec<Vec<usize>>,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: Instance::from_owned_entries(n, &edges, agents).or_py()?,
            file_warnings: Vec::new(),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let p = core::parse_problem(text).or_py()?;
        Ok(Self {
            inner: p.instance,
            file_warnings: p.warnings,
        })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        let p = core::load_problem(&path).or_py()?;
        Ok(Self {
            inner: p.instance,
            file_warnings: p.warnings,
        })
    }

    #[staticmethod]
    fn triangle() -> Self {
        Self {
            inner: core::instances::triangle(),
            file_warnings: Vec::new(),
        }
    }

    /// Random tree-structured instance with U[0, 1] weights.
    #[staticmethod]
    fn random_tree(seed: u64) -> Self {
        Self {
            inner: core::instances::random_tree(&mut stream_rng(seed, STREAM_INIT)),
            file_warnings: Vec::new(),
        }
    }

    fn to_json(&self) -> String {
        core::problem_to_json(&self.inner.matrix, &self.inner.partition)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.matrix.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.partition.m()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.matrix.nnz()
    }

    /// Number of shared column variables.
    #[getter]
    fn sn(&self) -> usize {
        self.inner.partition.shared_count()
    }

    #[getter]
    fn parents(&self) -> Vec<Option<usize>> {
        (0..self.inner.partition.m())
            .map(|i| self.inner.partition.parent(i))
            .collect()
    }

    fn coupling(&self, agent: usize) -> PyResult<Vec<usize>> {
        self.check_agent(agent)?;
        Ok(self.inner.partition.coupling(agent).to_vec())
    }

    fn uncoupling(&self, agent: usize) -> PyResult<Vec<usize>> {
        self.check_agent(agent)?;
        Ok(self.inner.partition.uncoupling(agent).to_vec())
    }

    /// File warnings plus agents whose child shares an index with their parent.
    #[getter]
    fn warnings(&self) -> Vec<String> {
        let mut out = self.file_warnings.clone();
        out.extend(self.inner.partition.warnings().iter().map(|w| {
            format!(
                "agent {}: child {} shares {:?} with parent {}",
                w.agent, w.child, w.indices, w.parent
            )
        }));
        out
    }

    /// Entries as `(j, l, w, owner)`.
    #[getter]
    fn edges(&self) -> Vec<(usize, usize, f64, usize)> {
        self.inner
            .matrix
            .entries()
            .iter()
            .zip(self.inner.partition.owners())
            .map(|(e, &o)| (e.row, e.col, e.weight, o))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(n={}, agents={}, nnz={}, sn={})",
            self.n(),
            self.m(),
            self.nnz(),
            self.sn()
        )
    }
}

impl Problem {
    fn check_agent(&self, agent: usize) -> PyResult<()> {
        if agent >= self.inner.partition.m() {
            return Err(PyValueError::new_err(format!("no agent {agent}")));
        }
        Ok(())
    }
}

/// Outcome of a solver run.
#[pyclass(frozen, get_all, module = "diagsdp")]
struct SolveResult {
    converged: bool,
    f: f64,
    grad_norm: f64,
    /// Sweeps for the synchronous solver, ticks for the asynchronous one.
    iterations: usize,
    consensus_gap: f64,
    /// Final factor, one list per column.
    columns: Vec<Vec<f64>>,
    trace_csv: String,
    /// Largest observed read staleness (asynchronous runs only).
    max_staleness: Option<usize>,
}

#[pymethods]
impl SolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(converged={}, f={}, grad_norm={:e}, iterations={})",
            self.converged, self.f, self.grad_norm, self.iterations
        )
    }
}

#[pyfunction]
fn choose_rank(n: usize) -> usize {
    core::choose_rank(n)
}

#[pyfunction]
fn objective(problem: &Problem, columns: Vec<Vec<f64>>) -> PyResult<f64> {
    core::objective(&problem.inner.matrix, &factor(columns)?).or_py()
}

#[pyfunction]
fn riemannian_grad_norm(problem: &Problem, columns: Vec<Vec<f64>>) -> PyResult<f64> {
    core::riemannian_grad_norm(&problem.inner.matrix, &factor(columns)?).or_py()
}

#[pyfunction]
#[pyo3(signature = (problem, seed=0, sigma=0.5, grad_tol=1e-6, max_iters=None, init="random", timing=false))]
fn solve_sync(
    problem: &Problem,
    seed: u64,
    sigma: f64,
    grad_tol: f64,
    max_iters: Option<usize>,
    init: &str,
    timing: bool,
) -> PyResult<SolveResult> {
    let inst = &problem.inner;
    let steps = core::sync_step_sizes(&inst.partition, &inst.matrix, sigma).or_py()?;
    let v0 = initial(inst.matrix.n(), seed, init)?;
    let opts = core::SyncOptions {
        max_iters,
        grad_tol,
        timing,
        record_iterates: false,
    };
    let run = core::run_sync(&inst.matrix, &inst.partition, &steps, &v0, &opts).or_py()?;
    let last = run.trace.last().expect("trace has an initial row");
    Ok(SolveResult {
        converged: run.converged,
        f: last.f,
        grad_norm: last.grad_norm,
        iterations: run.iterations,
        consensus_gap: last.consensus_gap,
        columns: to_columns(&run.state),
        trace_csv: run.trace.to_csv_string().or_py()?,
        max_staleness: None,
    })
}

#[pyfunction]
#[pyo3(signature = (problem, b=5, schedule="uniform", seed=0, sigma=0.5, tol=1e-7, max_iters=10_000, init="random", timing=false))]
#[allow(clippy::too_many_arguments)]
fn solve_async(
    problem: &Problem,
    b: usize,
    schedule: &str,
    seed: u64,
    sigma: f64,
    tol: f64,
    max_iters: usize,
    init: &str,
    timing: bool,
) -> PyResult<SolveResult> {
    let inst = &problem.inner;
    let n = inst.matrix.n();
    let mode: ScheduleMode = schedule.parse().or_py()?;
    let steps = core::async_step_sizes(&inst.partition, &inst.matrix, b, sigma).or_py()?;
    let sched = core::make_schedule(
        inst.partition.m(),
        n,
        b,
        derive_seed(seed, STREAM_SCHEDULE),
        mode,
        max_iters,
    )
    .or_py()?;
    let v0 = initial(n, seed, init)?;
    let opts = core::AsyncOptions {
        max_iters,
        tol,
        timing,
        record_updates: false,
    };
    let run = core::run_async(&inst.matrix, &inst.partition, &steps, &sched, &v0, &opts).or_py()?;
    let last = run.trace.last().expect("trace has an initial row");
    Ok(SolveResult {
        converged: run.converged,
        f: last.f,
        grad_norm: last.grad_norm,
        iterations: run.ticks,
        consensus_gap: last.consensus_gap,
        columns: to_columns(&run.state),
        trace_csv: run.trace.to_csv_string().or_py()?,
        max_staleness: Some(run.diagnostics.max_staleness),
    })
}

/// Exhaustive maximum cut; returns `(value, labels)` with labels in `{-1, 1}`.
#[pyfunction]
fn brute_force_maxcut(problem: &Problem) -> PyResult<(f64, Vec<i8>)> {
    let (value, cut) = core::brute_force_maxcut(&problem.inner.matrix).or_py()?;
    Ok((value, cut.signs))
}

/// Best of `trials` random-hyperplane roundings of `columns`.
#[pyfunction]
#[pyo3(signature = (problem, columns, trials=200, seed=0))]
fn hyperplane_round(
    problem: &Problem,
    columns: Vec<Vec<f64>>,
    trials: usize,
    seed: u64,
) -> PyResult<(f64, Vec<i8>)> {
    let (value, cut) = core::hyperplane_round(
        &factor(columns)?,
        &problem.inner.matrix,
        trials,
        derive_seed(seed, STREAM_ROUNDING),
    )
    .or_py()?;
    Ok((value, cut.signs))
}

#[pyfunction]
fn sdp_cut_bound(problem: &Problem, f_star: f64) -> f64 {
    core::sdp_cut_bound(&problem.inner.matrix, f_star)
}

/// Segments a PPM image; returns `(mask, width, height, cut_value, converged)`
/// with mask values in `{0, 255}`, row-major.
#[pyfunction]
#[pyo3(signature = (path, threshold=100.0, agents=4, b=3, schedule="uniform", seed=0, sigma=0.5, tol=1e-7, max_iters=10_000, trials=200))]
#[allow(clippy::too_many_arguments)]
fn segment_image(
    path: std::path::PathBuf,
    threshold: f64,
    agents: usize,
    b: usize,
    schedule: &str,
    seed: u64,
    sigma: f64,
    tol: f64,
    max_iters: usize,
    trials: usize,
) -> PyResult<(Vec<u8>, usize, usize, f64, bool)> {
    let image = imgseg::load_image(&path).or_py()?;
    let opts = SegmentOptions {
        threshold,
        agents,
        b,
        mode: schedule.parse().or_py()?,
        seed,
        sigma,
        max_iters,
        tol,
        trials,
        timing: false,
    };
    let seg = imgseg::segment(&image, &opts).or_py()?;
    Ok((
        seg.mask(),
        image.width,
        image.height,
        seg.cut_value,
        seg.run.converged,
    ))
}

/// Writes the synthetic two-block test image (left black, right red) as PPM.
#[pyfunction]
fn write_two_block(path: std::path::PathBuf, width: usize, height: usize) -> PyResult<()> {
    std::fs::write(path, imgseg::two_block(width, height).to_ppm_binary())
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "diagsdp")]
fn diagsdp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<SolveResult>()?;
    m.add_function(wrap_pyfunction!(choose_rank, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(riemannian_grad_norm, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sync, m)?)?;
    m.add_function(wrap_pyfunction!(solve_async, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_maxcut, m)?)?;
    m.add_function(wrap_pyfunction!(hyperplane_round, m)?)?;
    m.add_function(wrap_pyfunction!(sdp_cut_bound, m)?)?;
    m.add_function(wrap_pyfunction!(segment_image, m)?)?;
    m.add_function(wrap_pyfunction!(write_two_block, m)?)?;
    Ok(())
}
