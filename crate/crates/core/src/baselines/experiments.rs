//! Disorder-chaos and algorithmic-stability experiments.

use rayon::prelude::*;
use serde::Serialize;

use super::exact::{exact_gibbs, exact_sample_stream};
use super::transport::{empirical_w2, overlap_moment};
use crate::disorder::{gen_random, interpolate, DisorderTensors};
use crate::error::{Error, Result};
use crate::localization::{sample_with_schedule, SamplerParams};
use crate::mixture::MixtureSpec;
use crate::rng::{child_seed, Purpose};
use crate::state_evolution::q_schedule;

#[derive(Clone, Debug, PartialEq)]
pub struct ChaosConfig {
    pub n: usize,
    pub beta: f64,
    pub s_list: Vec<f64>,
    /// Exact samples per batch.
    pub batch_size: usize,
    /// Disorder pairs `(G_0, G_1)` averaged inside one seed aggregate.
    pub disorders: usize,
    /// Also average over `(G_0, -G_1)`, which has the same law and cancels the
    /// first-order fluctuation in `s`.
    pub antithetic: bool,
    pub compute_w2: bool,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self {
            n: 12,
            beta: 2.0,
            s_list: vec![0.0, 0.1, 0.3, 1.0],
            batch_size: 200,
            disorders: 100,
            antithetic: true,
            compute_w2: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaosRow {
    pub seed: u64,
    pub s: f64,
    pub overlap_moment: f64,
    pub w2: Option<f64>,
}

/// Seed `seed` selects the disorder pairs of one aggregate. Batch `a` comes
/// from `mu_{G_0}`; batches `b_s` from `mu_{G_s}` share one uniform stream
/// across `s`.
fn chaos_aggregate(spec: &MixtureSpec, cfg: &ChaosConfig, seed: u64) -> Result<Vec<ChaosRow>> {
    let per_disorder: Vec<Vec<(f64, Option<f64>)>> = (0..cfg.disorders as u64)
        .into_par_iter()
        .map(|d| -> Result<Vec<(f64, Option<f64>)>> {
            let g0 = gen_random(spec, cfg.n, child_seed(seed, 2 * d))?;
            let g1 = gen_random(spec, cfg.n, child_seed(seed, 2 * d + 1))?;
            let sample_seed = child_seed(seed, 1 << 40 | d);
            let mu0 = exact_gibbs(&g0, cfg.beta, &vec![0.0; cfg.n])?;
            let a = exact_sample_stream(&mu0, cfg.batch_size, sample_seed, Purpose::Auxiliary(10));
            let partners: Vec<DisorderTensors> = if cfg.antithetic { vec![g1.clone(), g1.negated()] } else { vec![g1] };
            cfg.s_list
                .iter()
                .map(|&s| {
                    let mut ov = 0.0;
                    let mut w2 = 0.0;
                    for partner in &partners {
                        let gs = interpolate(&g0, partner, s)?;
                        let mus = exact_gibbs(&gs, cfg.beta, &vec![0.0; cfg.n])?;
                        let b = exact_sample_stream(&mus, cfg.batch_size, sample_seed, Purpose::Auxiliary(11));
                        ov += overlap_moment(&a, &b)?;
                        if cfg.compute_w2 {
                            w2 += empirical_w2(&a, &b)?;
                        }
                    }
                    let k = partners.len() as f64;
                    Ok((ov / k, cfg.compute_w2.then_some(w2 / k)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let k = cfg.disorders as f64;
    Ok(cfg
        .s_list
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let ov = per_disorder.iter().map(|r| r[j].0).sum::<f64>() / k;
            let w2 = cfg.compute_w2.then(|| per_disorder.iter().map(|r| r[j].1.unwrap_or(0.0)).sum::<f64>() / k);
            ChaosRow { seed, s, overlap_moment: ov, w2 }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaosTable {
    /// One row per `(seed, s)`.
    pub per_seed: Vec<ChaosRow>,
    /// Averages over seeds, one row per `s` (seed field is 0).
    pub averaged: Vec<ChaosRow>,
}

/// Cross-overlap second moment (and optionally `W_2`) between the Gibbs
/// measures of `G_0` and `G_s = sqrt(1 - s^2) G_0 + s G_1`, exact sampling.
pub fn chaos_experiment(spec: &MixtureSpec, cfg: &ChaosConfig, seeds: &[u64]) -> Result<ChaosTable> {
    if cfg.batch_size == 0 || cfg.disorders == 0 || seeds.is_empty() {
        return Err(Error::Domain("chaos experiment needs batch size, disorders and seeds >= 1".into()));
    }
    let per_seed: Vec<ChaosRow> = seeds
        .iter()
        .map(|&seed| chaos_aggregate(spec, cfg, seed))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let k = seeds.len() as f64;
    let averaged = cfg
        .s_list
        .iter()
        .map(|&s| {
            let rows: Vec<&ChaosRow> = per_seed.iter().filter(|r| r.s == s).collect();
            ChaosRow {
                seed: 0,
                s,
                overlap_moment: rows.iter().map(|r| r.overlap_moment).sum::<f64>() / k,
                w2: cfg.compute_w2.then(|| rows.iter().map(|r| r.w2.unwrap_or(0.0)).sum::<f64>() / k),
            }
        })
        .collect();
    Ok(ChaosTable { per_seed, averaged })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityRow {
    /// Perturbation size: `s` for disorder, `beta'` for temperature.
    pub perturbation: f64,
    /// `(1/n) E ||x(G_0) - x(G_s)||^2`.
    pub sample_distance: f64,
    /// `(1/n) E ||m(G_0) - m(G_s)||^2` for the final means.
    pub mean_distance: f64,
    pub replicas: usize,
}

fn sq_dist_i8(a: &[i8], b: &[i8]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(x - y).powi(2)).sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Runs the sampler on `G_0` and `G_s` with shared randomness `omega`
/// (Brownian increments and rounding uniforms) for each replica seed.
///
/// Replica `r` uses disorders `child_seed(r, 0)`, `child_seed(r, 1)` and
/// sampler seed `child_seed(r, 2)`.
pub fn stability_experiment(
    spec: &MixtureSpec,
    n: usize,
    s_list: &[f64],
    params: &SamplerParams,
    seeds: &[u64],
) -> Result<Vec<StabilityRow>> {
    params.validate()?;
    let schedule = q_schedule(spec, params.beta, params.delta, params.steps)?;
    let per_replica: Vec<Vec<(f64, f64)>> = seeds
        .par_iter()
        .map(|&r| -> Result<Vec<(f64, f64)>> {
            let g0 = gen_random(spec, n, child_seed(r, 0))?;
            let g1 = gen_random(spec, n, child_seed(r, 1))?;
            let p = SamplerParams { seed: child_seed(r, 2), keep_trajectory: false, ..params.clone() };
            let base = sample_with_schedule(&g0, &p, &schedule)?;
            s_list
                .iter()
                .map(|&s| {
                    let gs = interpolate(&g0, &g1, s)?;
                    let run = sample_with_schedule(&gs, &p, &schedule)?;
                    Ok((
                        sq_dist_i8(&base.x_alg, &run.x_alg) / n as f64,
                        sq_dist(&base.mean_final, &run.mean_final) / n as f64,
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(summarize(s_list, &per_replica))
}

/// Temperature variant: the same disorder and `omega` at `beta` and each `beta'`.
pub fn temperature_stability_experiment(
    spec: &MixtureSpec,
    n: usize,
    beta_list: &[f64],
    params: &SamplerParams,
    seeds: &[u64],
) -> Result<Vec<StabilityRow>> {
    params.validate()?;
    let schedule = q_schedule(spec, params.beta, params.delta, params.steps)?;
    let per_replica: Vec<Vec<(f64, f64)>> = seeds
        .par_iter()
        .map(|&r| -> Result<Vec<(f64, f64)>> {
            let g0 = gen_random(spec, n, child_seed(r, 0))?;
            let p = SamplerParams { seed: child_seed(r, 2), keep_trajectory: false, ..params.clone() };
            let base = sample_with_schedule(&g0, &p, &schedule)?;
            beta_list
                .iter()
                .map(|&b| {
                    let pb = SamplerParams { beta: b, ..p.clone() };
                    let run = if b == params.beta {
                        sample_with_schedule(&g0, &pb, &schedule)?
                    } else {
                        sample_with_schedule(&g0, &pb, &q_schedule(spec, b, params.delta, params.steps)?)?
                    };
                    Ok((
                        sq_dist_i8(&base.x_alg, &run.x_alg) / n as f64,
                        sq_dist(&base.mean_final, &run.mean_final) / n as f64,
                    ))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(summarize(beta_list, &per_replica))
}

fn summarize(perturbations: &[f64], per_replica: &[Vec<(f64, f64)>]) -> Vec<StabilityRow> {
    let k = per_replica.len() as f64;
    perturbations
        .iter()
        .enumerate()
        .map(|(j, &p)| StabilityRow {
            perturbation: p,
            sample_distance: per_replica.iter().map(|r| r[j].0).sum::<f64>() / k,
            mean_distance: per_replica.iter().map(|r| r[j].1).sum::<f64>() / k,
            replicas: per_replica.len(),
        })
        .collect()
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let mean = (a.len() as f64 - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - mean) * (y - mean)).sum();
    let va: f64 = ra.iter().map(|x| (x - mean).powi(2)).sum();
    let vb: f64 = rb.iter().map(|x| (x - mean).powi(2)).sum();
    cov / (va * vb).sqrt()
}
