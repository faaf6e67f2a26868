//! Heat-bath Glauber dynamics with systematic scan.

use super::batch::{Provenance, SampleBatch};
use crate::disorder::DisorderTensors;
use crate::error::{Error, Result};
use crate::rng::{uniforms, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GlauberParams {
    pub sweeps: usize,
    pub burn_in: usize,
    /// Record the state after every `thin`-th sweep past burn-in.
    pub thin: usize,
}

impl Default for GlauberParams {
    fn default() -> Self {
        Self { sweeps: 1000, burn_in: 100, thin: 1 }
    }
}

/// `H(x with x_i = +1) - H(x with x_i = -1)`.
pub fn energy_gap(g: &DisorderTensors, x: &mut [f64], i: usize) -> f64 {
    let only_pairs = g.tensors().iter().all(|t| t.degree == 2);
    if only_pairs {
        let n = g.n();
        let t = &g.tensors()[0];
        let mut field = 0.0;
        for b in 0..n {
            if b != i {
                field += (t.data[i * n + b] + t.data[b * n + i]) * x[b];
            }
        }
        return 2.0 * t.scale * field;
    }
    let keep = x[i];
    x[i] = 1.0;
    let up = g.hamiltonian_unchecked(x);
    x[i] = -1.0;
    let down = g.hamiltonian_unchecked(x);
    x[i] = keep;
    up - down
}

/// Conditional probability that `x_i = +1` given the other spins.
pub fn plus_probability(g: &DisorderTensors, beta: f64, x: &mut [f64], i: usize) -> f64 {
    let gap = beta * energy_gap(g, x, i);
    0.5 * (1.0 + (0.5 * gap).tanh())
}

/// Runs `params.sweeps` sweeps from `x0`; sweep `s` reads uniform `i` of
/// sub-stream `s` for site `i`.
pub fn glauber_run(g: &DisorderTensors, beta: f64, x0: &[i8], params: GlauberParams, seed: u64) -> Result<SampleBatch> {
    let n = g.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    if x0.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::Domain("initial state must have entries in {-1, +1}".into()));
    }
    if params.thin == 0 {
        return Err(Error::Domain("thinning interval must be at least 1".into()));
    }
    let mut x: Vec<f64> = x0.iter().map(|&s| f64::from(s)).collect();
    let mut samples = Vec::new();
    for sweep in 0..params.sweeps {
        let u = uniforms(seed, Purpose::Glauber, sweep as u64, n);
        for i in 0..n {
            let p = plus_probability(g, beta, &mut x, i);
            x[i] = if u[i] < p { 1.0 } else { -1.0 };
        }
        let done = sweep + 1;
        if done > params.burn_in && (done - params.burn_in).is_multiple_of(params.thin) {
            samples.push(x.iter().map(|&v| if v > 0.0 { 1 } else { -1 }).collect());
        }
    }
    SampleBatch::new(n, samples, Provenance::Glauber, seed)
}
