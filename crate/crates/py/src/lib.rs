//! Python bindings: grids, fields, diffusivity models, the time series,
//! the explicit reference solver, residual checks, and the open-space
//! inversion routes. Fields cross the boundary as flat `list[float]` in
//! x-fastest order.

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nldiff_core::identities as ids;
use nldiff_core::poisson;
use nldiff_core::reference;
use nldiff_core::taylor;
use nldiff_core::{
    Boundary, DiffusivityModel, EquationId, Error as CoreError, Grid3, ScalarField3, Scheme,
    SolverConfig, TaylorState,
};

fn err(e: CoreError) -> PyErr {
    match e {
        CoreError::Divergence { .. } | CoreError::Instability { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_boundary(name: &str) -> PyResult<Boundary> {
    match name {
        "periodic" => Ok(Boundary::Periodic),
        "free_decay" => Ok(Boundary::FreeDecay),
        other => Err(PyValueError::new_err(format!(
            "boundary must be `periodic` or `free_decay`, got `{other}`"
        ))),
    }
}

/// Uniform cell-centered box, centered on the origin.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Grid {
    inner: Grid3,
}

#[pymethods]
impl Grid {
    #[new]
    #[pyo3(signature = (nx, ny, nz, h, boundary = "free_decay"))]
    fn new(nx: usize, ny: usize, nz: usize, h: f64, boundary: &str) -> PyResult<Self> {
        let inner = Grid3::centered(nx, ny, nz, h, parse_boundary(boundary)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn nx(&self) -> usize {
        self.inner.nx
    }

    #[getter]
    fn ny(&self) -> usize {
        self.inner.ny
    }

    #[getter]
    fn nz(&self) -> usize {
        self.inner.nz
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn boundary(&self) -> &'static str {
        self.inner.boundary.name()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid({}x{}x{}, h={}, {})",
            self.inner.nx,
            self.inner.ny,
            self.inner.nz,
            self.inner.h,
            self.inner.boundary.name()
        )
    }
}

/// Scalar samples on a [`Grid`].
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Field {
    inner: ScalarField3,
}

#[pymethods]
impl Field {
    #[new]
    fn new(grid: &Grid, values: Vec<f64>) -> PyResult<Self> {
        let inner = ScalarField3::from_values(grid.inner, values).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            inner: ScalarField3::constant(grid.inner, value),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (grid, amp, sigma, base = 0.0))]
    fn gaussian(grid: &Grid, amp: f64, sigma: f64, base: f64) -> PyResult<Self> {
        if sigma <= 0.0 {
            return Err(PyValueError::new_err("sigma must be positive"));
        }
        let inv = 1.0 / (sigma * sigma);
        Ok(Self {
            inner: ScalarField3::from_fn(grid.inner, |x, y, z| {
                base + amp * (-(x * x + y * y + z * z) * inv).exp()
            }),
        })
    }

    #[getter]
    fn grid(&self) -> Grid {
        Grid {
            inner: *self.inner.grid(),
        }
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn at(&self, i: usize, j: usize, k: usize) -> PyResult<f64> {
        let g = self.inner.grid();
        if i >= g.nx || j >= g.ny || k >= g.nz {
            return Err(PyIndexError::new_err(format!(
                "({i}, {j}, {k}) outside {}x{}x{}",
                g.nx, g.ny, g.nz
            )));
        }
        Ok(self.inner.at(i, j, k))
    }

    fn sub(&self, other: &Field) -> PyResult<Field> {
        Ok(Field {
            inner: self.inner.sub(&other.inner).map_err(err)?,
        })
    }

    fn scaled(&self, s: f64) -> Field {
        Field {
            inner: self.inner.scaled(s),
        }
    }

    fn linf(&self) -> f64 {
        self.inner.linf()
    }

    fn l2(&self) -> f64 {
        self.inner.l2()
    }

    fn l1(&self) -> f64 {
        self.inner.l1()
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }

    fn __len__(&self) -> usize {
        self.inner.grid().len()
    }
}

/// Concentration-dependent diffusion coefficient D(c).
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Diffusivity {
    inner: DiffusivityModel,
}

#[pymethods]
impl Diffusivity {
    #[staticmethod]
    fn constant(d0: f64) -> PyResult<Self> {
        Ok(Self {
            inner: DiffusivityModel::constant(d0).map_err(err)?,
        })
    }

    #[staticmethod]
    fn power_law(d0: f64, m: f64) -> PyResult<Self> {
        Ok(Self {
            inner: DiffusivityModel::power_law(d0, m).map_err(err)?,
        })
    }

    #[staticmethod]
    fn exponential(d0: f64, beta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: DiffusivityModel::exponential(d0, beta).map_err(err)?,
        })
    }

    #[staticmethod]
    fn tabulated(knots: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: DiffusivityModel::tabulated(&knots).map_err(err)?,
        })
    }

    /// New model with the integration base point of F moved to `c_ref`.
    fn with_c_ref(&self, c_ref: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.clone().with_c_ref(c_ref).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn c_ref(&self) -> f64 {
        self.inner.c_ref()
    }

    fn eval_d(&self, c: f64) -> PyResult<f64> {
        self.inner.eval_d(c).map_err(err)
    }

    fn kirchhoff_f(&self, c: f64) -> PyResult<f64> {
        self.inner.kirchhoff_f(c).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Diffusivity({})", self.inner.name())
    }
}

/// Truncated power series of the solution in time.
#[pyclass(frozen, skip_from_py_object)]
struct Series {
    inner: TaylorState,
}

#[pymethods]
impl Series {
    #[new]
    fn new(c0: &Field, model: &Diffusivity, order: usize) -> PyResult<Self> {
        Ok(Self {
            inner: taylor::build_series(&c0.inner, &model.inner, order).map_err(err)?,
        })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    fn coefficient(&self, n: usize) -> PyResult<Field> {
        if n > self.inner.order() {
            return Err(PyIndexError::new_err(format!(
                "coefficient {n} beyond order {}",
                self.inner.order()
            )));
        }
        Ok(Field {
            inner: self.inner.coefficient(n).clone(),
        })
    }

    fn coefficient_norms(&self) -> Vec<f64> {
        self.inner.coefficient_norms()
    }

    fn evaluate(&self, t: f64) -> Field {
        Field {
            inner: self.inner.evaluate(t),
        }
    }

    fn evaluate_f(&self, t: f64) -> Field {
        Field {
            inner: self.inner.evaluate_f(t),
        }
    }

    fn remainder_linf(&self, t: f64) -> f64 {
        self.inner.remainder_estimate(t).linf
    }

    fn convergence_radius(&self) -> PyResult<f64> {
        self.inner.convergence_radius().map_err(err)
    }

    #[getter]
    fn clamped_cells(&self) -> usize {
        self.inner.clamped_cells()
    }
}

/// Snapshots of one run, with enough structure to difference in time.
#[pyclass(frozen, skip_from_py_object)]
struct Trajectory {
    inner: ids::Trajectory,
}

#[pymethods]
impl Trajectory {
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    fn field(&self, idx: usize) -> PyResult<Field> {
        if idx >= self.inner.len() {
            return Err(PyIndexError::new_err(format!(
                "snapshot {idx} beyond {}",
                self.inner.len()
            )));
        }
        Ok(Field {
            inner: self.inner.field(idx).clone(),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Interior residual norms of one consistency identity, as a dict.
    ///
    /// `index` defaults to the middle snapshot (ignored by E2200, which uses
    /// the last, and E5200, which spans the whole run). `transport_order` is
    /// the derivative level N of the E6690 family.
    #[pyo3(signature = (equation, index = None, transport_order = 1))]
    fn residual(
        &self,
        py: Python<'_>,
        equation: &str,
        index: Option<usize>,
        transport_order: usize,
    ) -> PyResult<Py<PyDict>> {
        let eq = EquationId::all()
            .into_iter()
            .find(|e| e.as_str() == equation.to_uppercase())
            .ok_or_else(|| PyValueError::new_err(format!("unknown equation `{equation}`")))?;
        let traj = &self.inner;
        let mid = index.unwrap_or(traj.len() / 2);
        let r = match eq {
            EquationId::E2200 => ids::residual_e2200(traj, index.unwrap_or(traj.len() - 1)),
            EquationId::E3090 => ids::residual_e3090(traj, mid),
            EquationId::E4710 => ids::residual_e4710_e4720(traj, mid).map(|(r, _)| r),
            EquationId::E4720 => ids::residual_e4710_e4720(traj, mid).map(|(_, r)| r),
            EquationId::E5020 => ids::residual_e5020(traj, mid),
            EquationId::E5100 => ids::residual_e5100(traj, mid),
            EquationId::E5120 => ids::residual_e5120(traj, mid),
            EquationId::E5160 => ids::residual_e5160(traj, mid),
            EquationId::E5200 => ids::residual_e5200(traj),
            EquationId::E5680 => ids::residual_e5680(traj, mid),
            EquationId::E6690 => ids::residual_e6690(traj, mid, transport_order),
        }
        .map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("equation", r.equation.as_str())?;
        out.set_item("t", r.t)?;
        out.set_item("h", r.h)?;
        out.set_item("dt", r.dt)?;
        out.set_item("norm_l2", r.norm_l2)?;
        out.set_item("norm_linf", r.norm_linf)?;
        out.set_item("normalization", r.normalization)?;
        out.set_item("normalized_l2", r.normalized_l2())?;
        out.set_item("normalized_linf", r.normalized_linf())?;
        out.set_item("warnings", r.warnings)?;
        Ok(out.into())
    }
}

/// Forward-Euler reference run with uniformly spaced snapshots.
#[pyfunction]
#[pyo3(signature = (c0, model, t_end, snapshots = 3, scheme = "flux_form", cfl_safety = None))]
fn solve(
    c0: &Field,
    model: &Diffusivity,
    t_end: f64,
    snapshots: usize,
    scheme: &str,
    cfl_safety: Option<f64>,
) -> PyResult<Trajectory> {
    let scheme = match scheme {
        "flux_form" => Scheme::ExplicitFluxForm,
        "kirchhoff" => Scheme::KirchhoffExplicit,
        other => {
            return Err(PyValueError::new_err(format!(
                "scheme must be `flux_form` or `kirchhoff`, got `{other}`"
            )))
        }
    };
    let mut sc = SolverConfig::uniform(t_end, snapshots, scheme).map_err(err)?;
    if let Some(cfl) = cfl_safety {
        sc = sc.with_cfl_safety(cfl).map_err(err)?;
    }
    Ok(Trajectory {
        inner: reference::solve(&c0.inner, &model.inner, &sc).map_err(err)?,
    })
}

/// Zero-at-infinity solution V of lap(V) = -k, by FFT convolution.
#[pyfunction]
fn greens_fft(source: &Field) -> PyResult<Field> {
    Ok(Field {
        inner: poisson::greens_fft(&source.inner).map_err(err)?.v,
    })
}

/// Same solution by direct kernel summation; O(N^2), small grids only.
#[pyfunction]
fn greens_direct(source: &Field) -> PyResult<Field> {
    Ok(Field {
        inner: poisson::greens_direct(&source.inner).map_err(err)?.v,
    })
}

/// Recovers the rate potential F from dc/dt on a decaying grid.
#[pyfunction]
fn invert_for_f(dcdt: &Field) -> PyResult<Field> {
    Ok(Field {
        inner: poisson::invert_for_f(&dcdt.inner).map_err(err)?,
    })
}

#[pymodule]
fn nldiff_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Field>()?;
    m.add_class::<Diffusivity>()?;
    m.add_class::<Series>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(greens_fft, m)?)?;
    m.add_function(wrap_pyfunction!(greens_direct, m)?)?;
    m.add_function(wrap_pyfunction!(invert_for_f, m)?)?;
    Ok(())
}
