//! Python module `glasslocal_py`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use glasslocal::amp::{amp_run, History};
use glasslocal::baselines::exact::exact_gibbs;
use glasslocal::baselines::transport::{empirical_w2, overlap_moment};
use glasslocal::baselines::{Provenance, SampleBatch};
use glasslocal::disorder::{self, DisorderTensors};
use glasslocal::localization::{self, MeanParams, SamplerParams};
use glasslocal::state_evolution::{self, DEFAULT_C0};
use glasslocal::{scalar, Error, MixtureSpec};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        Error::Numeric { .. } | Error::NoConvergence(_) | Error::InStage { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Covariance mixture `xi(t) = sum_p c_p^2 t^p`.
#[pyclass(name = "Mixture", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMixture {
    pub inner: MixtureSpec,
}

#[pymethods]
impl PyMixture {
    /// `terms` maps degree `p` to `c_p^2`.
    #[new]
    pub fn new(terms: BTreeMap<u32, f64>) -> PyResult<Self> {
        Ok(Self { inner: MixtureSpec::new(terms).map_err(to_py)? })
    }

    #[staticmethod]
    pub fn sk() -> Self {
        Self { inner: MixtureSpec::sk() }
    }

    /// `order`-th derivative of `xi` at `t`.
    #[pyo3(signature = (t, order = 0))]
    pub fn xi(&self, t: f64, order: u32) -> PyResult<f64> {
        self.inner.xi(t, order).map_err(to_py)
    }

    pub fn terms(&self) -> Vec<(u32, f64)> {
        self.inner.terms().to_vec()
    }

    fn __repr__(&self) -> String {
        let parts: Vec<String> = self.inner.terms().iter().map(|(p, c)| format!("{p}: {c}")).collect();
        format!("Mixture({{{}}})", parts.join(", "))
    }
}

/// Coupling tensors of one disorder realization.
#[pyclass(name = "Disorder", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDisorder {
    pub inner: DisorderTensors,
}

#[pymethods]
impl PyDisorder {
    #[staticmethod]
    pub fn random(mixture: &PyMixture, n: usize, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: disorder::gen_random(&mixture.inner, n, seed).map_err(to_py)? })
    }

    /// Planted disorder whose hidden spins are drawn from `seed`.
    #[staticmethod]
    pub fn planted(mixture: &PyMixture, n: usize, beta: f64, seed: u64) -> PyResult<Self> {
        let spins = disorder::draw_planted_spins(n, seed);
        Ok(Self { inner: disorder::gen_planted(&mixture.inner, n, beta, &spins, seed).map_err(to_py)? })
    }

    #[staticmethod]
    pub fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: disorder::load_tensors(&path).map_err(to_py)? })
    }

    pub fn save(&self, path: PathBuf) -> PyResult<()> {
        disorder::save_tensors(&self.inner, &path).map_err(to_py)
    }

    #[getter]
    pub fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    pub fn seed(&self) -> u64 {
        self.inner.seed()
    }

    #[getter]
    pub fn mixture(&self) -> PyMixture {
        PyMixture { inner: self.inner.spec().clone() }
    }

    #[getter]
    pub fn planted_spins(&self) -> Option<Vec<i8>> {
        self.inner.planted().map(<[i8]>::to_vec)
    }

    pub fn hamiltonian(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.hamiltonian(&x).map_err(to_py)
    }

    pub fn grad(&self, m: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad(&m).map_err(to_py)
    }

    /// `sqrt(1 - s^2) self + s other`.
    pub fn interpolate(&self, other: &PyDisorder, s: f64) -> PyResult<Self> {
        Ok(Self { inner: disorder::interpolate(&self.inner, &other.inner, s).map_err(to_py)? })
    }

    pub fn negated(&self) -> Self {
        Self { inner: self.inner.negated() }
    }

    fn __repr__(&self) -> String {
        format!("Disorder(n={}, seed={})", self.inner.n(), self.inner.seed())
    }
}

#[pyfunction]
pub fn psi(gamma: f64) -> PyResult<f64> {
    scalar::psi(gamma).map_err(to_py)
}

#[pyfunction]
pub fn phi(q: f64) -> PyResult<f64> {
    scalar::phi(q).map_err(to_py)
}

#[pyfunction]
pub fn q_star(mixture: &PyMixture, beta: f64, t: f64) -> PyResult<f64> {
    state_evolution::q_star(&mixture.inner, beta, t).map_err(to_py)
}

/// `beta1, beta2, beta3, beta_c_rs, beta_dyn`; `beta_dyn` is `None` when no
/// dynamical transition was found.
#[pyfunction]
#[pyo3(signature = (mixture, c0 = DEFAULT_C0))]
pub fn thresholds(mixture: &PyMixture, c0: f64) -> PyResult<BTreeMap<&'static str, Option<f64>>> {
    let r = state_evolution::threshold_report(&mixture.inner, c0).map_err(to_py)?;
    Ok(BTreeMap::from([
        ("beta1", Some(r.beta1)),
        ("beta2", Some(r.beta2)),
        ("beta3", Some(r.beta3)),
        ("beta_c_rs", Some(r.beta_c_rs)),
        ("beta_dyn", r.beta_dyn),
    ]))
}

/// Final AMP estimate `tanh(z^K)` and the `q_hat` sequence.
#[pyfunction]
pub fn amp(disorder: &PyDisorder, y: Vec<f64>, beta: f64, iterations: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let tr = amp_run(&disorder.inner, &y, beta, iterations, History::Last).map_err(to_py)?;
    let q_hats = tr.steps.iter().map(|s| s.q_hat).collect();
    Ok((tr.last().m_hat.clone(), q_hats))
}

/// AMP warm start followed by natural gradient descent on the TAP free
/// energy; returns the mean and the final gradient norm.
#[pyfunction]
#[pyo3(signature = (disorder, y, beta, q, k_amp = 30, k_ngd = 100))]
pub fn mean_estimate(
    disorder: &PyDisorder,
    y: Vec<f64>,
    beta: f64,
    q: f64,
    k_amp: usize,
    k_ngd: usize,
) -> PyResult<(Vec<f64>, f64)> {
    let params = MeanParams { k_amp, k_ngd, ..MeanParams::default() };
    let est = localization::mean_estimate(&disorder.inner, &y, beta, q, &params).map_err(to_py)?;
    Ok((est.mean, est.grad_norm))
}

/// One sampler run; returns the spins and the final mean.
#[pyfunction]
#[pyo3(signature = (disorder, beta, seed, delta = 0.05, steps = 400))]
pub fn sample(
    py: Python<'_>,
    disorder: &PyDisorder,
    beta: f64,
    seed: u64,
    delta: f64,
    steps: usize,
) -> PyResult<(Vec<i8>, Vec<f64>)> {
    let params = SamplerParams { beta, seed, delta, steps, ..SamplerParams::default() };
    let g = &disorder.inner;
    let run = py.detach(|| localization::sample(g, &params)).map_err(to_py)?;
    Ok((run.x_alg, run.mean_final))
}

/// Exact Gibbs means by enumeration (small `n` only).
#[pyfunction]
pub fn exact_means(py: Python<'_>, disorder: &PyDisorder, beta: f64) -> PyResult<Vec<f64>> {
    let g = &disorder.inner;
    let zeros = vec![0.0; g.n()];
    let dist = py.detach(|| exact_gibbs(g, beta, &zeros)).map_err(to_py)?;
    Ok(dist.mean)
}

fn batch(samples: Vec<Vec<i8>>) -> PyResult<SampleBatch> {
    let n = samples.first().map_or(0, Vec::len);
    SampleBatch::new(n, samples, Provenance::Algorithm, 0).map_err(to_py)
}

/// Normalized empirical `W_2` between two equal-size spin batches.
#[pyfunction]
pub fn w2(a: Vec<Vec<i8>>, b: Vec<Vec<i8>>) -> PyResult<f64> {
    empirical_w2(&batch(a)?, &batch(b)?).map_err(to_py)
}

/// Mean of `(<x, x'> / n)^2` over all cross pairs.
#[pyfunction]
pub fn overlap(a: Vec<Vec<i8>>, b: Vec<Vec<i8>>) -> PyResult<f64> {
    overlap_moment(&batch(a)?, &batch(b)?).map_err(to_py)
}

#[pymodule]
fn glasslocal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMixture>()?;
    m.add_class::<PyDisorder>()?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(q_star, m)?)?;
    m.add_function(wrap_pyfunction!(thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(amp, m)?)?;
    m.add_function(wrap_pyfunction!(mean_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(exact_means, m)?)?;
    m.add_function(wrap_pyfunction!(w2, m)?)?;
    m.add_function(wrap_pyfunction!(overlap, m)?)?;
    Ok(())
}
