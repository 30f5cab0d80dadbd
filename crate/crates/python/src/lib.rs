//! Python bindings for `wetbeam`.
//!
//! Complex vectors cross the boundary as lists of Python `complex`; matrices
//! as lists of rows.

use std::collections::BTreeMap;

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use wetbeam::analytics::{self, GammaParams};
use wetbeam::channel;
use wetbeam::config::{self, Scenario};
use wetbeam::linalg::CMatrix;
use wetbeam::precoding;
use wetbeam::selfcheck;
use wetbeam::simulation::{self, Scheme, SimOptions};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<CMatrix> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(value_err("expected a non-empty rectangular list of rows"));
    }
    Ok(CMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

/// ULA response towards `phi_deg`.
#[pyfunction]
#[pyo3(signature = (phi_deg, num_antennas, spacing = channel::DEFAULT_ELEMENT_SPACING))]
fn steering_vector(phi_deg: f64, num_antennas: usize, spacing: f64) -> Vec<Complex64> {
    channel::steering_vector(phi_deg, num_antennas, spacing).iter().copied().collect()
}

/// `(alpha_los, alpha_mp)` for linear gain `beta` and Rician factor `kappa`.
#[pyfunction]
fn rician_weights(beta: f64, kappa: f64) -> PyResult<(f64, f64)> {
    channel::rician_weights(beta, kappa).map_err(value_err)
}

/// Beam of power `px` maximizing `‖A x‖²`.
#[pyfunction]
fn precoder_stat(a: Vec<Vec<Complex64>>, px: f64) -> PyResult<Vec<Complex64>> {
    let beam = precoding::precoder_stat(&matrix(a)?, px).map_err(value_err)?;
    Ok(beam.x.iter().copied().collect())
}

/// Equal-power beam over `num_antennas`.
#[pyfunction]
fn precoder_aa(num_antennas: usize, px: f64) -> PyResult<Vec<Complex64>> {
    let beam = precoding::precoder_aa(num_antennas, px).map_err(value_err)?;
    Ok(beam.x.iter().copied().collect())
}

/// `|h_k x|²` for every row of `h`.
#[pyfunction]
fn received_powers(h: Vec<Vec<Complex64>>, x: Vec<Complex64>) -> PyResult<Vec<f64>> {
    precoding::received_powers(&matrix(h)?, &x.into()).map_err(value_err)
}

#[pyclass(name = "GammaParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyGamma(GammaParams);

#[pymethods]
impl PyGamma {
    #[new]
    fn new(shape: f64, scale: f64) -> PyResult<Self> {
        GammaParams::new(shape, scale).map(Self).map_err(value_err)
    }

    #[getter]
    fn shape(&self) -> f64 {
        self.0.shape
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.0.scale
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn variance(&self) -> f64 {
        self.0.variance()
    }

    fn pdf(&self, x: f64) -> PyResult<f64> {
        self.0.pdf(x).map_err(value_err)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    fn __repr__(&self) -> String {
        format!("GammaParams(shape={}, scale={})", self.0.shape, self.0.scale)
    }
}

#[pyfunction]
fn aa_baseline(k: usize, l: usize, beta_eq: f64) -> PyResult<PyGamma> {
    analytics::aa_baseline(k, l, beta_eq).map(PyGamma).map_err(value_err)
}

#[pyfunction]
fn sa_baseline(m: usize, k: usize, l: usize, beta_eq: f64) -> PyResult<PyGamma> {
    analytics::sa_baseline(m, k, l, beta_eq).map(PyGamma).map_err(value_err)
}

/// A validated scenario: array, clusters, harvester and solver settings.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario(Scenario);

#[pymethods]
impl PyScenario {
    /// The default operating point.
    #[new]
    fn new() -> Self {
        Self(Scenario::operating_point())
    }

    /// Parse a TOML scenario file body.
    #[staticmethod]
    fn from_toml(source: &str) -> PyResult<Self> {
        config::parse_scenario(source).map(Self).map_err(value_err)
    }

    #[getter]
    fn num_antennas(&self) -> usize {
        self.0.system.num_antennas
    }

    #[getter]
    fn num_clusters(&self) -> usize {
        self.0.system.clusters.len()
    }

    #[getter]
    fn tx_power_w(&self) -> f64 {
        self.0.system.tx_power_w
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.system.master_seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.system.master_seed = seed;
    }

    /// Monte Carlo comparison. Returns `{scheme: {"mean_w", "variance_w2",
    /// "harvested_mean_w", "infeasible", "per_cluster_mean_w"}}`.
    #[pyo3(signature = (schemes, trials = 1000))]
    fn compare(
        &self,
        py: Python<'_>,
        schemes: Vec<String>,
        trials: u64,
    ) -> PyResult<BTreeMap<String, BTreeMap<&'static str, Py<PyAny>>>> {
        let parsed = schemes.iter().map(|s| s.parse::<Scheme>()).collect::<Result<Vec<_>, _>>().map_err(value_err)?;
        let options = SimOptions { threads: None, solver: self.0.solver.clone() };
        let (system, circuit) = (&self.0.system, &self.0.eh_circuit);
        let summaries =
            py.detach(|| simulation::compare_schemes(system, circuit, &parsed, trials, &options)).map_err(value_err)?;
        summaries
            .into_iter()
            .map(|(scheme, s)| {
                let per_cluster: Vec<f64> = s.per_cluster.iter().map(|m| m.mean).collect();
                let row = BTreeMap::from([
                    ("mean_w", s.mean.into_pyobject(py)?.into_any().unbind()),
                    ("variance_w2", s.variance.into_pyobject(py)?.into_any().unbind()),
                    ("harvested_mean_w", s.harvested_mean.into_pyobject(py)?.into_any().unbind()),
                    ("infeasible", s.infeasible.into_pyobject(py)?.into_any().unbind()),
                    ("per_cluster_mean_w", per_cluster.into_pyobject(py)?.into_any().unbind()),
                ]);
                Ok((scheme.name().to_string(), row))
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(num_antennas={}, num_clusters={}, tx_power_w={})",
            self.num_antennas(),
            self.num_clusters(),
            self.tx_power_w()
        )
    }
}

/// Statistical self-check battery as `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (trials = 10_000, seed = 1))]
fn run_selfcheck(py: Python<'_>, trials: u64, seed: u64) -> PyResult<Vec<(String, bool, String)>> {
    let results = py.detach(|| selfcheck::run_selfcheck(trials, seed, 1.0)).map_err(value_err)?;
    Ok(results.into_iter().map(|r| (r.name, r.passed, r.detail)).collect())
}

#[pymodule]
fn pywetbeam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(steering_vector, m)?)?;
    m.add_function(wrap_pyfunction!(rician_weights, m)?)?;
    m.add_function(wrap_pyfunction!(precoder_stat, m)?)?;
    m.add_function(wrap_pyfunction!(precoder_aa, m)?)?;
    m.add_function(wrap_pyfunction!(received_powers, m)?)?;
    m.add_function(wrap_pyfunction!(aa_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(sa_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(run_selfcheck, m)?)?;
    m.add_class::<PyGamma>()?;
    m.add_class::<PyScenario>()?;
    m.add("SCHEMES", Scheme::ALL.iter().map(|s| s.name()).collect::<Vec<_>>())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_rows_are_rectangular() {
        let z = Complex64::new(1.0, -2.0);
        let m = matrix(vec![vec![z, z.conj()], vec![-z, z * z]]).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m[(1, 1)], z * z);
        assert!(matrix(vec![vec![z], vec![z, z]]).is_err());
        assert!(matrix(Vec::new()).is_err());
    }
}
