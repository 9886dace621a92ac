//! Python bindings: datasets, plans, model sizes, the CPG heuristic, the
//! built-in solver and plan evaluation.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rdao::dataset::spec_entries;
use rdao::evaluate::minimum_target_dose;
use rdao::robust::{build_fmo, build_rfmo, fluence_from_assignment};
use rdao::solver::{solve as solve_model, SolveOptions};
use rdao::{Allocation, BeamGeometry, Error, NormalizationReference, PlanningConfig, SymmetryMode, Variant};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NotFound(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::Spec(_) | Error::Range { .. } | Error::InfeasibleSet(_) | Error::Invalid(_) | Error::Shape(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for rdao::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Beam angles, the `rows x cols` beamlet grid and the aperture budget.
#[pyclass(name = "Geometry", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyGeometry(BeamGeometry);

#[pymethods]
impl PyGeometry {
    #[new]
    fn new(angles: usize, rows: usize, cols: usize, apertures: usize) -> PyResult<Self> {
        BeamGeometry::new(angles, rows, cols, apertures).py().map(Self)
    }
    #[getter]
    fn angles(&self) -> usize {
        self.0.num_angles()
    }
    #[getter]
    fn rows(&self) -> usize {
        self.0.num_rows()
    }
    #[getter]
    fn cols(&self) -> usize {
        self.0.num_cols()
    }
    #[getter]
    fn apertures(&self) -> usize {
        self.0.num_apertures()
    }
    #[getter]
    fn beamlets(&self) -> usize {
        self.0.num_beamlets()
    }
    fn __repr__(&self) -> String {
        let g = &self.0;
        format!("Geometry(angles={}, rows={}, cols={}, apertures={})", g.num_angles(), g.num_rows(), g.num_cols(), g.num_apertures())
    }
}

/// Box-constrained set of breathing proportions.
#[pyclass(name = "UncertaintySet", frozen, from_py_object)]
#[derive(Clone)]
struct PyUncertaintySet(rdao::UncertaintySet);

#[pymethods]
impl PyUncertaintySet {
    #[new]
    #[pyo3(signature = (nominal, deviation=0.0, upper_deviation=None))]
    fn new(nominal: Vec<f64>, deviation: f64, upper_deviation: Option<f64>) -> PyResult<Self> {
        let n = nominal.len();
        rdao::UncertaintySet::new(nominal, vec![deviation; n], vec![upper_deviation.unwrap_or(deviation); n]).py().map(Self)
    }
    /// Nominal five-phase breathing pattern with a symmetric deviation.
    #[staticmethod]
    #[pyo3(signature = (deviation=0.1))]
    fn breathing(deviation: f64) -> PyResult<Self> {
        let nominal = rdao::UncertaintySet::breathing(0.0).nominal().to_vec();
        rdao::UncertaintySet::symmetric(nominal, deviation).py().map(Self)
    }
    #[getter]
    fn nominal(&self) -> Vec<f64> {
        self.0.nominal().to_vec()
    }
    #[getter]
    fn lower(&self) -> Vec<f64> {
        self.0.lower().to_vec()
    }
    #[getter]
    fn upper(&self) -> Vec<f64> {
        self.0.upper().to_vec()
    }
    fn vertices(&self) -> Vec<Vec<f64>> {
        self.0.vertices()
    }
    /// Smallest `p . d` over the set.
    fn worst_case(&self, phase_dose: Vec<f64>) -> PyResult<f64> {
        self.0.worst_case(&phase_dose).py()
    }
    fn contains(&self, p: Vec<f64>) -> bool {
        self.0.contains(&p, 1e-9)
    }
}

/// Dose tensor, structures and geometry.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: rdao::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Seeded synthetic phantom.
    #[staticmethod]
    #[pyo3(signature = (seed, geometry, targets, healthy=0, phases=5, motion_amplitude=0.5, prescription=42.4))]
    fn phantom(
        seed: u64,
        geometry: PyGeometry,
        targets: usize,
        healthy: usize,
        phases: usize,
        motion_amplitude: f64,
        prescription: f64,
    ) -> PyResult<Self> {
        let spec = rdao::PhantomSpec { motion_amplitude, prescription, ..rdao::PhantomSpec::new(seed, geometry.0, targets, healthy, phases) };
        let (dose, structures, geometry) = rdao::generate_phantom(&spec).py()?;
        // Round trip through a scratch directory so the manifest and checksum are real.
        let dir = std::env::temp_dir().join(format!("rdao-py-{}-{seed}-{:?}", std::process::id(), std::thread::current().id()));
        rdao::save_dataset(&dir, &dose, &structures, &geometry, spec_entries(&spec)).py()?;
        let inner = rdao::load_dataset(&dir).py();
        let _ = std::fs::remove_dir_all(&dir);
        Ok(Self { inner: inner? })
    }
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: rdao::load_dataset(&path).py()? })
    }
    fn save(&self, path: PathBuf) -> PyResult<()> {
        let d = &self.inner;
        rdao::save_dataset(&path, &d.dose, &d.structures, &d.geometry, d.manifest.extra.clone()).py().map(|_| ())
    }
    #[getter]
    fn geometry(&self) -> PyGeometry {
        PyGeometry(self.inner.geometry)
    }
    #[getter]
    fn checksum(&self) -> String {
        format!("{:016x}", self.inner.manifest.checksum)
    }
    #[getter]
    fn num_voxels(&self) -> usize {
        self.inner.dose.num_voxels()
    }
    #[getter]
    fn num_phases(&self) -> usize {
        self.inner.dose.num_phases()
    }
    #[getter]
    fn target(&self) -> Vec<usize> {
        self.inner.structures.target().to_vec()
    }
    #[getter]
    fn prescription(&self) -> Vec<f64> {
        self.inner.structures.prescription().to_vec()
    }
    /// Healthy structures as `{name: voxels}`.
    fn healthy<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for h in self.inner.structures.healthy() {
            d.set_item(&h.name, h.voxels.clone())?;
        }
        Ok(d)
    }
    /// Influence of beamlet `b` on voxel `v` in phase `i`.
    fn dose(&self, v: usize, b: usize, i: usize) -> PyResult<f64> {
        let (nv, nb, ni) = self.inner.dose.dims();
        if v >= nv || b >= nb || i >= ni {
            return Err(PyValueError::new_err(format!("index ({v}, {b}, {i}) outside ({nv}, {nb}, {ni})")));
        }
        Ok(self.inner.dose.get(v, b, i))
    }
}

/// Apertures with intensities; each row is open on `[first, last]` or closed.
#[pyclass(name = "Plan", frozen, from_py_object)]
#[derive(Clone)]
struct PyPlan(rdao::FluencePlan);

#[pymethods]
impl PyPlan {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        rdao::FluencePlan::load(&path).py().map(Self)
    }
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        rdao::FluencePlan::from_text(text).py().map(Self)
    }
    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).py()
    }
    fn to_text(&self) -> String {
        self.0.to_text()
    }
    /// Beamlet fluence, angle-major then row then column.
    fn fluence(&self) -> Vec<f64> {
        self.0.fluence()
    }
    fn scaled(&self, c: f64) -> Self {
        Self(self.0.scaled(c))
    }
    #[getter]
    fn geometry(&self) -> PyGeometry {
        PyGeometry(self.0.geometry)
    }
    #[getter]
    fn apertures_used(&self) -> usize {
        self.0.apertures_used()
    }
    /// `(angle, intensity, rows)` per aperture, rows as `(first, last)` or `None`.
    fn apertures(&self) -> Vec<(usize, f64, Vec<Option<(usize, usize)>>)> {
        self.0.apertures.iter().map(|a| (a.angle, a.intensity, a.rows.clone())).collect()
    }
    /// Deliverability problems under a variant's rules, as messages.
    #[pyo3(signature = (variant="DAO"))]
    fn check(&self, variant: &str) -> PyResult<Vec<String>> {
        let v: Variant = variant.parse().py()?;
        Ok(rdao::plan::check_deliverability(&self.0, v).iter().map(|p| p.to_string()).collect())
    }
    fn __repr__(&self) -> String {
        format!("Plan(apertures={}, used={})", self.0.apertures.len(), self.0.apertures_used())
    }
}

#[allow(clippy::too_many_arguments)]
fn config(
    geom: &BeamGeometry,
    variant: &str,
    c_target: f64,
    c_healthy: f64,
    alpha: f64,
    big_m: Option<f64>,
    symmetry: Option<&str>,
    equal_blocks: bool,
) -> PyResult<PlanningConfig> {
    let v: Variant = variant.parse().py()?;
    let mut cfg = PlanningConfig::default_for(geom, v);
    cfg.weight_target = c_target;
    cfg.weight_healthy = c_healthy;
    cfg.alpha = alpha;
    cfg.big_m = big_m;
    if let Some(s) = symmetry {
        cfg.symmetry = s.parse::<SymmetryMode>().py()?;
    }
    if equal_blocks {
        cfg.allocation = Allocation::equal_blocks(geom);
    }
    cfg.validate(geom).py()?;
    Ok(cfg)
}

fn geometry_for(d: &rdao::Dataset, apertures: Option<usize>) -> PyResult<BeamGeometry> {
    let g = d.geometry;
    match apertures {
        Some(n) => BeamGeometry::new(g.num_angles(), g.num_rows(), g.num_cols(), n).py(),
        None => Ok(g),
    }
}

/// Constraint, variable and binary counts of a variant.
#[pyfunction]
#[pyo3(signature = (geometry, targets, phases=5, variant="DAO"))]
fn model_size(geometry: PyGeometry, targets: usize, phases: usize, variant: &str) -> PyResult<(usize, usize, usize)> {
    let v: Variant = variant.parse().py()?;
    let r = rdao::size_only(&geometry.0, targets, phases, v, &PlanningConfig::default_for(&geometry.0, v)).py()?;
    Ok((r.constraints, r.variables, r.binaries))
}

/// Outcome of the candidate plan generation heuristic.
#[pyclass(name = "CpgResult", frozen, get_all)]
struct PyCpgResult {
    plan: PyPlan,
    z_cpg: f64,
    z_lower: f64,
    gap: f64,
    lower_fluence: Vec<f64>,
}

#[pyfunction]
#[pyo3(signature = (dataset, uncertainty, variant="DAO", apertures=None, c_target=0.7, c_healthy=0.3, alpha=0.4, big_m=None, symmetry=None, equal_blocks=false))]
#[allow(clippy::too_many_arguments)]
fn run_cpg(
    dataset: &PyDataset,
    uncertainty: &PyUncertaintySet,
    variant: &str,
    apertures: Option<usize>,
    c_target: f64,
    c_healthy: f64,
    alpha: f64,
    big_m: Option<f64>,
    symmetry: Option<&str>,
    equal_blocks: bool,
) -> PyResult<PyCpgResult> {
    let d = &dataset.inner;
    let geom = geometry_for(d, apertures)?;
    let cfg = config(&geom, variant, c_target, c_healthy, alpha, big_m, symmetry, equal_blocks)?;
    let r = rdao::run_cpg(&d.dose, &d.structures, &geom, &uncertainty.0, &cfg).py()?;
    Ok(PyCpgResult { gap: r.gap(), plan: PyPlan(r.plan), z_cpg: r.z_cpg, z_lower: r.z_lower, lower_fluence: r.lower_fluence })
}

/// Solver outcome; `plan` is set for aperture models, `fluence` always when
/// a solution exists.
#[pyclass(name = "SolveResult", frozen, get_all)]
struct PySolveResult {
    status: String,
    objective: f64,
    best_bound: f64,
    gap: f64,
    nodes: usize,
    wall_time: f64,
    /// `(time, objective, bound, gap)` per improving solution.
    incumbents: Vec<(f64, f64, f64, f64)>,
    plan: Option<PyPlan>,
    fluence: Option<Vec<f64>>,
}

#[pyfunction]
#[pyo3(signature = (dataset, uncertainty, variant="DAO", warm_start=false, time_limit=3600.0, node_limit=None, apertures=None, c_target=0.7, c_healthy=0.3, alpha=0.4, big_m=None, symmetry=None, equal_blocks=false))]
#[allow(clippy::too_many_arguments)]
fn solve(
    dataset: &PyDataset,
    uncertainty: &PyUncertaintySet,
    variant: &str,
    warm_start: bool,
    time_limit: f64,
    node_limit: Option<usize>,
    apertures: Option<usize>,
    c_target: f64,
    c_healthy: f64,
    alpha: f64,
    big_m: Option<f64>,
    symmetry: Option<&str>,
    equal_blocks: bool,
) -> PyResult<PySolveResult> {
    let d = &dataset.inner;
    let set = &uncertainty.0;
    let geom = geometry_for(d, apertures)?;
    let cfg = config(&geom, variant, c_target, c_healthy, alpha, big_m, symmetry, equal_blocks)?;
    let mut options = SolveOptions::from_env();
    options.time_limit = time_limit;
    options.node_limit = node_limit;
    options.validate().py()?;
    let (out, plan, fluence) = if cfg.variant.is_mip() {
        let mut inst = rdao::assemble(cfg.variant, &d.dose, &d.structures, &geom, set, &cfg).py()?;
        if warm_start {
            let r = rdao::run_cpg(&d.dose, &d.structures, &geom, set, &cfg).py()?;
            let ws = rdao::generate_warm_start(&r.plan, &inst).py()?;
            inst.warm_start = Some(ws.clone());
            options.warm_start = Some(ws);
        }
        let out = solve_model(&inst.model, &options).py()?;
        let plan = match &out.assignment {
            Some(x) => Some(rdao::decode(&inst, x).py()?.0),
            None => None,
        };
        let fluence = plan.as_ref().map(|p| p.fluence());
        (out, plan.map(PyPlan), fluence)
    } else {
        if warm_start {
            return Err(PyValueError::new_err("a warm start needs an aperture model"));
        }
        let model = if cfg.variant.is_robust() {
            build_rfmo(&d.dose, &d.structures, &geom, set, &cfg).py()?
        } else {
            build_fmo(&d.dose, &d.structures, &geom, &set.nominal_only(), &cfg).py()?
        };
        let out = solve_model(&model, &options).py()?;
        let fluence = match &out.assignment {
            Some(x) => Some(fluence_from_assignment(&model, x, geom.num_beamlets()).py()?),
            None => None,
        };
        (out, None, fluence)
    };
    let r = out.report;
    Ok(PySolveResult {
        status: r.status.name().to_string(),
        objective: r.objective,
        best_bound: r.best_bound,
        gap: r.gap,
        nodes: r.nodes,
        wall_time: r.wall_time,
        incumbents: r.incumbents.iter().map(|i| (i.time, i.objective, i.bound, i.gap)).collect(),
        plan,
        fluence,
    })
}

/// Dose statistics of a plan at realized proportions, as a dict.
#[pyfunction]
#[pyo3(signature = (plan, dataset, p_real, uncertainty=None))]
fn evaluate<'py>(
    py: Python<'py>,
    plan: &PyPlan,
    dataset: &PyDataset,
    p_real: Vec<f64>,
    uncertainty: Option<&PyUncertaintySet>,
) -> PyResult<Bound<'py, PyDict>> {
    let d = &dataset.inner;
    let r = rdao::evaluate_plan(&plan.0, &d.dose, &d.structures, &p_real).py()?;
    let out = PyDict::new(py);
    out.set_item("t_min", r.t_min)?;
    out.set_item("t_ave", r.t_ave)?;
    out.set_item("t_max", r.t_max)?;
    out.set_item("h_ave", r.h_ave)?;
    out.set_item("h_max", r.h_max)?;
    out.set_item("underdose", r.underdose_flag)?;
    out.set_item("underdosed_voxels", r.underdosed_voxels)?;
    out.set_item("apertures_used", r.aperture_count_used)?;
    let healthy = PyDict::new(py);
    for h in &r.healthy {
        healthy.set_item(&h.name, (h.ave, h.max))?;
    }
    out.set_item("healthy", healthy)?;
    if let Some(set) = uncertainty {
        out.set_item("vertex_underdoses", rdao::evaluate::vertex_underdoses(&plan.0, &d.dose, &d.structures, &set.0).py()?)?;
    }
    Ok(out)
}

/// Scales a plan so 95% of the target reaches 95% of the reference: the
/// prescription, or the given dose level. Returns `(plan, factor)`.
#[pyfunction]
#[pyo3(signature = (plan, dataset, p, level=None))]
fn normalize(plan: &PyPlan, dataset: &PyDataset, p: Vec<f64>, level: Option<f64>) -> PyResult<(PyPlan, f64)> {
    let d = &dataset.inner;
    let reference = level.map_or(NormalizationReference::Prescription, NormalizationReference::Level);
    let (scaled, factor) = rdao::normalize_plan(&plan.0, &d.dose, &d.structures, &p, reference).py()?;
    Ok((PyPlan(scaled), factor))
}

/// Smallest target dose of a plan at proportions `p`.
#[pyfunction]
fn min_target_dose(plan: &PyPlan, dataset: &PyDataset, p: Vec<f64>) -> PyResult<f64> {
    let d = &dataset.inner;
    minimum_target_dose(&plan.0, &d.dose, &d.structures, &p).py()
}

/// Sorted voxel doses per structure, `{name: doses}`.
#[pyfunction]
fn dvh<'py>(py: Python<'py>, plan: &PyPlan, dataset: &PyDataset, p_real: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let d = &dataset.inner;
    let out = PyDict::new(py);
    for c in rdao::dvh(&plan.0, &d.dose, &d.structures, &p_real).py()? {
        out.set_item(c.structure, c.doses)?;
    }
    Ok(out)
}

#[pymodule]
fn rdao_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyUncertaintySet>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PyCpgResult>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(model_size, m)?)?;
    m.add_function(wrap_pyfunction!(run_cpg, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(min_target_dose, m)?)?;
    m.add_function(wrap_pyfunction!(dvh, m)?)?;
    Ok(())
}
