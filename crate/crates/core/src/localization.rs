//! Sampling by discretized stochastic localization.
//!
//! `y_{l+1} = y_l + m(G, y_l) delta + sqrt(delta) w_{l+1}` from `y_0 = 0`,
//! with `m` the AMP + NGD mean estimate, followed by independent rounding of
//! the final mean.

use crate::amp::{amp_run, History};
use crate::baselines::exact::EnergyTable;
use crate::disorder::DisorderTensors;
use crate::error::{Error, Result};
use crate::rng::{normals, uniforms, Purpose};
use crate::state_evolution::{q_schedule, QSchedule};
use crate::tap::{ngd_run, TapParams, DEFAULT_ETA, DEFAULT_GAMMA};

/// Iteration budget and step of the mean estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanParams {
    pub k_amp: usize,
    pub k_ngd: usize,
    pub eta: f64,
    pub gamma_reg: f64,
}

impl Default for MeanParams {
    fn default() -> Self {
        Self { k_amp: 30, k_ngd: 100, eta: DEFAULT_ETA, gamma_reg: DEFAULT_GAMMA }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanEstimate {
    pub mean: Vec<f64>,
    /// Natural parameter `atanh(mean)` at the last NGD iterate.
    pub natural: Vec<f64>,
    pub grad_norm: f64,
    pub halvings: usize,
}

/// AMP for `k_amp` steps, then NGD from `u^0 = z^{k_amp}` for `k_ngd` steps.
pub fn mean_estimate(g: &DisorderTensors, y: &[f64], beta: f64, q: f64, params: &MeanParams) -> Result<MeanEstimate> {
    let amp = amp_run(g, y, beta, params.k_amp, History::Last).map_err(|e| e.in_stage("mean estimate"))?;
    ngd_from(g, y, beta, q, params, &amp.last().z)
}

fn ngd_from(
    g: &DisorderTensors,
    y: &[f64],
    beta: f64,
    q: f64,
    params: &MeanParams,
    u0: &[f64],
) -> Result<MeanEstimate> {
    let tap = TapParams::new(beta, q, params.gamma_reg, y.to_vec())?;
    let run = ngd_run(g, u0, &tap, params.eta, params.k_ngd, false).map_err(|e| e.in_stage("mean estimate"))?;
    let last = run.last();
    Ok(MeanEstimate {
        mean: last.m.clone(),
        natural: last.u.clone(),
        grad_norm: last.grad_norm,
        halvings: run.halvings.len(),
    })
}

/// How the drift of the SDE is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DriftMode {
    /// AMP followed by NGD.
    #[default]
    Algorithm,
    /// Exact tilted mean by enumeration (small `n` only).
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerParams {
    pub beta: f64,
    pub delta: f64,
    /// Number of Euler steps `L`; the final time is `L delta`.
    pub steps: usize,
    pub mean: MeanParams,
    pub seed: u64,
    pub keep_trajectory: bool,
    /// Start each step's NGD from the previous step's final natural parameter
    /// instead of rerunning AMP from zero. Not part of the reference algorithm.
    pub warm_start: bool,
    pub drift: DriftMode,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            beta: 0.25,
            delta: 0.05,
            steps: 400,
            mean: MeanParams::default(),
            seed: 0,
            keep_trajectory: false,
            warm_start: false,
            drift: DriftMode::Algorithm,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::Domain(format!("delta = {} must be positive", self.delta)));
        }
        if self.steps == 0 || self.mean.k_amp == 0 || self.mean.k_ngd == 0 {
            return Err(Error::Domain("L, K_AMP and K_NGD must all be at least 1".into()));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Domain(format!("beta = {} must be finite and >= 0", self.beta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub q: f64,
    /// `||grad F||` at the returned mean; `NaN` in exact-drift mode.
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRun {
    /// `y_0, ..., y_L` when requested.
    pub y_trajectory: Option<Vec<Vec<f64>>>,
    pub mean_final: Vec<f64>,
    pub x_alg: Vec<i8>,
    pub seed: u64,
    /// Steps `0..=L`; the last entry belongs to the final mean.
    pub steps: Vec<StepDiagnostics>,
}

/// Rounds each coordinate independently with `P(x_i = +1) = (1 + m_i) / 2`
/// using `uniforms[i]`.
pub fn round(m: &[f64], uniforms: &[f64]) -> Result<Vec<i8>> {
    if m.len() != uniforms.len() {
        return Err(Error::DimensionMismatch { expected: m.len(), got: uniforms.len() });
    }
    if let Some(i) = m.iter().position(|v| !(v.abs() <= 1.0)) {
        return Err(Error::Domain(format!("m[{i}] = {} outside [-1, 1]", m[i])));
    }
    Ok(m.iter().zip(uniforms).map(|(&mi, &u)| if u < 0.5 * (1.0 + mi) { 1 } else { -1 }).collect())
}

/// Rounding with the uniforms of `seed`'s rounding stream.
pub fn round_seeded(m: &[f64], seed: u64) -> Result<Vec<i8>> {
    round(m, &uniforms(seed, Purpose::Rounding, 0, m.len()))
}

enum Drift<'a> {
    Algorithm(&'a MeanParams),
    Exact(EnergyTable),
}

/// Runs the sampler with a precomputed `q` table.
pub fn sample_with_schedule(g: &DisorderTensors, params: &SamplerParams, schedule: &QSchedule) -> Result<SampleRun> {
    params.validate()?;
    if schedule.q.len() < params.steps + 1 {
        return Err(Error::Domain(format!("q schedule has {} entries, need {}", schedule.q.len(), params.steps + 1)));
    }
    let n = g.n();
    let drift = match params.drift {
        DriftMode::Algorithm => Drift::Algorithm(&params.mean),
        DriftMode::Exact => Drift::Exact(EnergyTable::new(g, params.beta)?),
    };
    let sqrt_delta = params.delta.sqrt();
    let mut y = vec![0.0; n];
    let mut traj = params.keep_trajectory.then(|| vec![y.clone()]);
    let mut steps = Vec::with_capacity(params.steps + 1);
    let mut warm: Option<Vec<f64>> = None;
    let estimate = |y: &[f64], q: f64, warm: &mut Option<Vec<f64>>| -> Result<(Vec<f64>, f64)> {
        match &drift {
            Drift::Algorithm(mp) => {
                let est = match (params.warm_start, warm.as_ref()) {
                    (true, Some(u0)) => ngd_from(g, y, params.beta, q, mp, u0)?,
                    _ => mean_estimate(g, y, params.beta, q, mp)?,
                };
                *warm = Some(est.natural);
                Ok((est.mean, est.grad_norm))
            }
            Drift::Exact(table) => Ok((table.tilted_mean(y)?, f64::NAN)),
        }
    };
    for l in 0..params.steps {
        let q = schedule.at(l);
        let (m, grad_norm) = estimate(&y, q, &mut warm).map_err(|e| e.in_stage(&format!("sampler step {l}")))?;
        steps.push(StepDiagnostics { q, grad_norm });
        let w = normals(params.seed, Purpose::Brownian, l as u64, n);
        for i in 0..n {
            y[i] += m[i] * params.delta + sqrt_delta * w[i];
        }
        if let Some(t) = traj.as_mut() {
            t.push(y.clone());
        }
    }
    let q = schedule.at(params.steps);
    let (mean_final, grad_norm) = estimate(&y, q, &mut warm).map_err(|e| e.in_stage("sampler final mean"))?;
    steps.push(StepDiagnostics { q, grad_norm });
    let x_alg = round_seeded(&mean_final, params.seed)?;
    Ok(SampleRun { y_trajectory: traj, mean_final, x_alg, seed: params.seed, steps })
}

/// Full sampler run.
pub fn sample(g: &DisorderTensors, params: &SamplerParams) -> Result<SampleRun> {
    params.validate()?;
    let schedule = q_schedule(g.spec(), params.beta, params.delta, params.steps)?;
    sample_with_schedule(g, params, &schedule)
}

/// `y(t_j) = t_j x + B(t_j)` on an increasing grid; the increment into `t_j`
/// uses sub-stream `j` of the Brownian stream of `seed`.
pub fn simulate_planted_path(spins: &[i8], times: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut prev = 0.0;
    let mut b = vec![0.0; spins.len()];
    let mut out = Vec::with_capacity(times.len());
    for (j, &t) in times.iter().enumerate() {
        if !(t >= prev) || (j > 0 && t == prev) || !t.is_finite() {
            return Err(Error::Domain(format!("time grid must be increasing and start at >= 0 (t[{j}] = {t})")));
        }
        let dt = t - prev;
        if dt > 0.0 {
            let w = normals(seed, Purpose::Brownian, j as u64, spins.len());
            let s = dt.sqrt();
            b.iter_mut().zip(w).for_each(|(bi, wi)| *bi += s * wi);
        }
        out.push(spins.iter().zip(&b).map(|(&x, &bi)| t * f64::from(x) + bi).collect());
        prev = t;
    }
    Ok(out)
}
