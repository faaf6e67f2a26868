//! Approximate message passing for the tilted Gibbs mean.
//!
//! From `z^0 = 0`, `m^{-1} = 0`:
//! `m^k = tanh(z^k)`, `b_k = beta^2 (1 - q_k) xi''(q_k)` with `q_k` the mean of
//! `tanh^2(z^k)`, and `z^{k+1} = beta grad H(m^k) + y - b_k m^{k-1}`.

use crate::disorder::DisorderTensors;
use crate::error::{Error, Result};
use crate::mixture::MixtureSpec;

/// Arguments of `tanh` are clamped to this magnitude.
pub const TANH_CLAMP: f64 = 40.0;

/// Snapshot at iteration `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmpState {
    pub k: usize,
    pub m_hat: Vec<f64>,
    pub m_hat_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub q_hat: f64,
    pub onsager_b: f64,
}

/// Per-iteration scalars, always recorded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmpStep {
    pub k: usize,
    pub q_hat: f64,
    pub onsager_b: f64,
    /// `||z^k - z^{k-1}|| / ||z^{k-1}||`, `NaN` when undefined.
    pub z_increment_ratio: f64,
    /// Coordinates whose `|z|` hit [`TANH_CLAMP`].
    pub clamped: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum History {
    /// Only the final state is kept.
    #[default]
    Last,
    /// Every state `0..=K` is kept.
    Full,
}

#[derive(Clone, Debug)]
pub struct AmpTrajectory {
    /// States `0..=K`, or only state `K` with [`History::Last`].
    pub states: Vec<AmpState>,
    pub steps: Vec<AmpStep>,
}

impl AmpTrajectory {
    pub fn last(&self) -> &AmpState {
        self.states.last().expect("trajectory holds at least one state")
    }
    /// State `k`, if retained.
    pub fn state(&self, k: usize) -> Option<&AmpState> {
        self.states.iter().find(|s| s.k == k)
    }
}

/// `b = beta^2 (1 - q) xi''(q)`.
pub fn onsager(spec: &MixtureSpec, beta: f64, q_hat: f64) -> f64 {
    beta * beta * (1.0 - q_hat) * spec.xi_d2(q_hat)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn make_state(spec: &MixtureSpec, beta: f64, k: usize, z: Vec<f64>, m_prev: Vec<f64>) -> (AmpState, usize) {
    let mut clamped = 0;
    let m_hat: Vec<f64> = z
        .iter()
        .map(|&v| {
            if v.abs() > TANH_CLAMP {
                clamped += 1;
            }
            v.clamp(-TANH_CLAMP, TANH_CLAMP).tanh()
        })
        .collect();
    let q_hat = if m_hat.is_empty() { 0.0 } else { m_hat.iter().map(|m| m * m).sum::<f64>() / m_hat.len() as f64 };
    let onsager_b = onsager(spec, beta, q_hat);
    (AmpState { k, m_hat, m_hat_prev: m_prev, z, q_hat, onsager_b }, clamped)
}

/// Runs `k_iters` AMP updates and returns states `0..=k_iters`.
pub fn amp_run(g: &DisorderTensors, y: &[f64], beta: f64, k_iters: usize, history: History) -> Result<AmpTrajectory> {
    let n = g.n();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if k_iters == 0 {
        return Err(Error::Domain("AMP needs K >= 1".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("tilt y has non-finite entries".into()));
    }
    let spec = g.spec();
    let (mut state, clamped) = make_state(spec, beta, 0, vec![0.0; n], vec![0.0; n]);
    let mut steps =
        vec![AmpStep { k: 0, q_hat: state.q_hat, onsager_b: state.onsager_b, z_increment_ratio: f64::NAN, clamped }];
    let mut states = Vec::new();
    for k in 0..k_iters {
        let grad = g.grad_unchecked(&state.m_hat);
        let b = state.onsager_b;
        let z_next: Vec<f64> =
            grad.iter().zip(y).zip(&state.m_hat_prev).map(|((gr, yi), mp)| beta * gr + yi - b * mp).collect();
        if let Some(i) = z_next.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric("amp", format!("non-finite z at iteration {}, coordinate {i}", k + 1)));
        }
        let zn = norm(&state.z);
        let ratio = if zn > 0.0 { dist(&z_next, &state.z) / zn } else { f64::NAN };
        let prev = state.m_hat.clone();
        let (next, clamped) = make_state(spec, beta, k + 1, z_next, prev);
        steps.push(AmpStep {
            k: k + 1,
            q_hat: next.q_hat,
            onsager_b: next.onsager_b,
            z_increment_ratio: ratio,
            clamped,
        });
        let done = std::mem::replace(&mut state, next);
        if history == History::Full {
            states.push(done);
        }
    }
    states.push(state);
    Ok(AmpTrajectory { states, steps })
}

/// `||z^k(y) - z^k(y')|| / ||y - y'||` for `k = 1..=K`; all zeros when `y = y'`.
///
/// `z^k` is the natural parameter `atanh(m^k)` up to the clamp.
pub fn amp_lipschitz_probe(
    g: &DisorderTensors,
    y: &[f64],
    y_perturbed: &[f64],
    beta: f64,
    k_iters: usize,
) -> Result<Vec<f64>> {
    let dy = dist(y, y_perturbed);
    if y.len() != y_perturbed.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: y_perturbed.len() });
    }
    let a = amp_run(g, y, beta, k_iters, History::Full)?;
    if dy == 0.0 {
        return Ok(vec![0.0; k_iters]);
    }
    let b = amp_run(g, y_perturbed, beta, k_iters, History::Full)?;
    Ok((1..=k_iters).map(|k| dist(&a.states[k].z, &b.states[k].z) / dy).collect())
}
