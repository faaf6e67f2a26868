//! Invariant suites run by the `validate` subcommand.

use std::fmt::Write as _;

use super::config::ExperimentConfig;
use crate::amp::{amp_run, History};
use crate::baselines::batch::{Provenance, SampleBatch};
use crate::baselines::exact::exact_gibbs;
use crate::baselines::transport::empirical_w2;
use crate::disorder::{config_from_code, gen_random, read_tensors, write_tensors};
use crate::error::{Error, Result};
use crate::localization::{mean_estimate, round, MeanParams};
use crate::mixture::MixtureSpec;
use crate::quadrature::QuadratureRule;
use crate::rng::{uniforms, Purpose};
use crate::scalar::{mutual_info_scalar, phi, psi, psi_prime};
use crate::state_evolution::{beta1, beta2, q_star, se_map};
use crate::tap::{bregman, ftap_grad, ftap_hessian, ftap_value, ons, ons_prime, TapParams};

struct Check {
    suite: &'static str,
    name: &'static str,
    /// Measured quantity; the check passes when it is at most `bound`.
    value: f64,
    bound: f64,
}

fn rel(fd: f64, exact: f64) -> f64 {
    (fd - exact).abs() / exact.abs().max(1.0)
}

fn scalar_checks(out: &mut Vec<Check>) -> Result<()> {
    let rule = QuadratureRule::gauss_hermite(81);
    out.push(Check {
        suite: "scalar",
        name: "quadrature weights sum",
        value: (rule.weights().iter().sum::<f64>() - 1.0).abs(),
        bound: 1e-12,
    });
    out.push(Check { suite: "scalar", name: "psi(0)", value: psi(0.0)?.abs(), bound: 1e-12 });
    out.push(Check { suite: "scalar", name: "psi'(0) - 1", value: (psi_prime(0.0)? - 1.0).abs(), bound: 1e-6 });
    let mut inv: f64 = 0.0;
    for q in [0.1, 0.5, 0.9] {
        inv = inv.max((psi(phi(q)?)? - q).abs());
    }
    out.push(Check { suite: "scalar", name: "psi(phi(q)) - q", value: inv, bound: 1e-10 });
    let h = 1e-5;
    let fd = (psi(0.5 + h)? - psi(0.5 - h)?) / (2.0 * h);
    out.push(Check {
        suite: "scalar",
        name: "psi' finite difference",
        value: (fd - psi_prime(0.5)?).abs(),
        bound: 1e-6,
    });
    let fd = (mutual_info_scalar(1.0 + h)? - mutual_info_scalar(1.0 - h)?) / (2.0 * h);
    out.push(Check { suite: "scalar", name: "I-MMSE", value: (fd - (1.0 - psi(1.0)?) / 2.0).abs(), bound: 1e-5 });
    Ok(())
}

fn state_evolution_checks(out: &mut Vec<Check>) -> Result<()> {
    let sk = MixtureSpec::sk();
    let q = q_star(&sk, 0.5, 1.0)?;
    out.push(Check {
        suite: "state_evolution",
        name: "fixed point residual",
        value: (q - se_map(&sk, 0.5, 1.0, q)).abs(),
        bound: 1e-10,
    });
    out.push(Check { suite: "state_evolution", name: "SK beta1", value: (beta1(&sk)? - 1.0).abs(), bound: 1e-3 });
    out.push(Check { suite: "state_evolution", name: "SK beta2", value: (beta2(&sk)? - 1.0).abs(), bound: 1e-3 });
    Ok(())
}

fn interior(n: usize, seed: u64) -> Vec<f64> {
    uniforms(seed, Purpose::Auxiliary(60), 0, n).iter().map(|u| 1.6 * u - 0.8).collect()
}

fn calculus_checks(out: &mut Vec<Check>) -> Result<()> {
    let spec = MixtureSpec::new([(2, 0.5), (3, 0.3), (4, 0.2)])?;
    let n = 8;
    let g = gen_random(&spec, n, 11)?;
    let m = interior(n, 11);
    let params = TapParams::new(0.6, 0.3, 1.0, interior(n, 12))?;
    let h = 1e-6;
    let (grad, hess) = (g.grad(&m)?, g.hessian(&m)?);
    let (tgrad, thess) = (ftap_grad(&g, &m, &params)?, ftap_hessian(&g, &m, &params)?);
    let mut worst = [0.0f64; 4];
    for i in 0..n {
        let (mut up, mut down) = (m.clone(), m.clone());
        up[i] += h;
        down[i] -= h;
        worst[0] = worst[0].max(rel((g.hamiltonian(&up)? - g.hamiltonian(&down)?) / (2.0 * h), grad[i]));
        worst[2] =
            worst[2].max(rel((ftap_value(&g, &up, &params)? - ftap_value(&g, &down, &params)?) / (2.0 * h), tgrad[i]));
        let (gu, gd) = (g.grad(&up)?, g.grad(&down)?);
        let (tu, td) = (ftap_grad(&g, &up, &params)?, ftap_grad(&g, &down, &params)?);
        for j in 0..n {
            worst[1] = worst[1].max(rel((gu[j] - gd[j]) / (2.0 * h), hess[(j, i)]));
            worst[3] = worst[3].max(rel((tu[j] - td[j]) / (2.0 * h), thess[(j, i)]));
        }
    }
    out.push(Check { suite: "disorder", name: "H gradient finite difference", value: worst[0], bound: 1e-6 });
    out.push(Check { suite: "disorder", name: "H Hessian finite difference", value: worst[1], bound: 1e-5 });
    out.push(Check { suite: "tap", name: "F gradient finite difference", value: worst[2], bound: 1e-6 });
    out.push(Check { suite: "tap", name: "F Hessian finite difference", value: worst[3], bound: 1e-5 });
    let q = 0.4;
    let fd = (ons(&spec, 0.6, q + 1e-5) - ons(&spec, 0.6, q - 1e-5)) / 2e-5;
    out.push(Check {
        suite: "tap",
        name: "ONS' finite difference",
        value: (fd - ons_prime(&spec, 0.6, q)).abs(),
        bound: 1e-8,
    });
    let other = interior(n, 13);
    let half_sq: f64 = m.iter().zip(&other).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2.0;
    out.push(Check { suite: "tap", name: "Bregman lower bound", value: half_sq - bregman(&m, &other)?, bound: 0.0 });
    let mut buf = Vec::new();
    write_tensors(&g, &mut buf)?;
    let back = read_tensors(&mut buf.as_slice())?;
    out.push(Check {
        suite: "disorder",
        name: "tensor file round trip",
        value: f64::from(u8::from(back != g)),
        bound: 0.0,
    });
    Ok(())
}

fn algorithm_checks(out: &mut Vec<Check>) -> Result<()> {
    let sk = MixtureSpec::sk();
    let g = gen_random(&sk, 20, 5)?;
    let tr = amp_run(&g, &[0.0; 20], 0.4, 5, History::Last)?;
    out.push(Check {
        suite: "amp",
        name: "zero field fixed point",
        value: tr.last().m_hat.iter().fold(0.0, |a, v| a.max(v.abs())),
        bound: 0.0,
    });
    let est = mean_estimate(&g, &[0.0; 20], 0.4, 0.0, &MeanParams::default())?;
    out.push(Check {
        suite: "localization",
        name: "symmetric point mean",
        value: est.mean.iter().fold(0.0, |a, v| a.max(v.abs())),
        bound: 0.0,
    });
    let ones = round(&[1.0; 6], &uniforms(1, Purpose::Rounding, 0, 6))?;
    out.push(Check {
        suite: "localization",
        name: "rounding of all-ones",
        value: ones.iter().filter(|&&x| x != 1).count() as f64,
        bound: 0.0,
    });
    let small = gen_random(&sk, 6, 6)?;
    let dist = exact_gibbs(&small, 0.7, &[0.0; 6])?;
    out.push(Check {
        suite: "baselines",
        name: "exact probabilities sum",
        value: (dist.probs.iter().sum::<f64>() - 1.0).abs(),
        bound: 1e-12,
    });
    let samples: Vec<Vec<i8>> =
        (0..8usize).map(|c| config_from_code(c * 7, 6).iter().map(|&v| v as i8).collect()).collect();
    let a = SampleBatch::new(6, samples.clone(), Provenance::Exact, 0)?;
    let mut rev = samples;
    rev.reverse();
    let b = SampleBatch::new(6, rev, Provenance::Exact, 0)?;
    out.push(Check { suite: "baselines", name: "W2 of a permuted batch", value: empirical_w2(&a, &b)?, bound: 0.0 });
    let mut buf = Vec::new();
    a.write(&mut buf)?;
    out.push(Check {
        suite: "baselines",
        name: "batch round trip",
        value: f64::from(u8::from(SampleBatch::read(&mut buf.as_slice())? != a)),
        bound: 0.0,
    });
    Ok(())
}

/// Runs every suite; the CSV lists each check, and any failure is an error
/// after the CSV is written.
pub fn run_suites(cfg: &ExperimentConfig) -> Result<Option<String>> {
    let mut checks = Vec::new();
    scalar_checks(&mut checks).map_err(|e| e.in_stage("validate scalar"))?;
    state_evolution_checks(&mut checks).map_err(|e| e.in_stage("validate state_evolution"))?;
    calculus_checks(&mut checks).map_err(|e| e.in_stage("validate calculus"))?;
    algorithm_checks(&mut checks).map_err(|e| e.in_stage("validate algorithms"))?;
    let mut csv = String::from("suite,check,passed,value,bound\n");
    let mut failed = Vec::new();
    for c in &checks {
        let ok = c.value <= c.bound;
        if !ok {
            failed.push(format!("{}: {}", c.suite, c.name));
        }
        let _ = writeln!(csv, "{},{},{},{:.16e},{:.16e}", c.suite, c.name, ok, c.value, c.bound);
    }
    if failed.is_empty() {
        return Ok(Some(csv));
    }
    super::emit(cfg, &csv)?;
    Err(Error::numeric("validate", format!("failed checks: {}", failed.join("; "))))
}
