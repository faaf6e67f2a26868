//! The regularized TAP free energy
//!
//! `F(m) = -beta H(m) - <y,m> - sum_i h(m_i) - ONS(q) - ONS'(q)(Q - q) + n Gamma beta (Q - q)^2 / 8`
//!
//! with `Q = ||m||^2 / n` and `ONS(Q) = beta^2 n / 2 (xi(1) - xi(Q) - (1-Q) xi'(Q))`,
//! together with natural gradient descent on it.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::disorder::{DisorderTensors, DEFAULT_HESSIAN_CAP};
use crate::error::{Error, Result};
use crate::mixture::{entropy_unchecked, MixtureSpec};

/// Magnetizations are clamped to this magnitude before `atanh`.
pub const ATANH_CLAMP: f64 = 1.0 - 1e-12;
/// Default quadratic regularization weight.
pub const DEFAULT_GAMMA: f64 = 1.0;
/// Default NGD step size.
pub const DEFAULT_ETA: f64 = 0.1;
/// Maximum step halvings per NGD step.
/// Relative size of an `F` change attributed to rounding.
const ROUNDING_SLACK: f64 = 1e-12;
pub const MAX_HALVINGS: u32 = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct TapParams {
    pub beta: f64,
    /// Linearization point of the Onsager term.
    pub q: f64,
    pub gamma_reg: f64,
    pub y: Vec<f64>,
}

impl TapParams {
    pub fn new(beta: f64, q: f64, gamma_reg: f64, y: Vec<f64>) -> Result<Self> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::Domain(format!("TAP linearization point q = {q} must lie in [0, 1)")));
        }
        if !gamma_reg.is_finite() || gamma_reg < 0.0 {
            return Err(Error::Domain(format!("Gamma = {gamma_reg} must be finite and >= 0")));
        }
        if !beta.is_finite() {
            return Err(Error::Domain(format!("beta = {beta}")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("tilt y has non-finite entries".into()));
        }
        Ok(Self { beta, q, gamma_reg, y })
    }
}

/// `ONS(Q) / n`.
pub fn ons(spec: &MixtureSpec, beta: f64, overlap: f64) -> f64 {
    0.5 * beta * beta * (spec.xi_at(1.0) - spec.xi_at(overlap) - (1.0 - overlap) * spec.xi_d1(overlap))
}

/// `d/dQ ONS(Q) / n = -beta^2 (1 - Q) xi''(Q) / 2`.
pub fn ons_prime(spec: &MixtureSpec, beta: f64, overlap: f64) -> f64 {
    -0.5 * beta * beta * (1.0 - overlap) * spec.xi_d2(overlap)
}

fn self_overlap(m: &[f64]) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64
}

fn check_interior(g: &DisorderTensors, m: &[f64], params: &TapParams) -> Result<()> {
    if m.len() != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), got: m.len() });
    }
    if params.y.len() != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), got: params.y.len() });
    }
    if let Some(i) = m.iter().position(|v| !(v.abs() < 1.0)) {
        return Err(Error::Domain(format!("m[{i}] = {} is not interior", m[i])));
    }
    Ok(())
}

/// Value on the closed cube; `h(+-1) = 0`.
fn value_closed(g: &DisorderTensors, m: &[f64], p: &TapParams) -> f64 {
    value_with_energy(g, m, p, g.hamiltonian_unchecked(m))
}

fn value_with_energy(g: &DisorderTensors, m: &[f64], p: &TapParams, energy: f64) -> f64 {
    let n = m.len() as f64;
    let spec = g.spec();
    let big_q = self_overlap(m);
    let dq = big_q - p.q;
    let field: f64 = p.y.iter().zip(m).map(|(a, b)| a * b).sum();
    let entropy: f64 = m.iter().map(|&v| entropy_unchecked(v.clamp(-1.0, 1.0))).sum();
    -p.beta * energy - field - entropy - n * ons(spec, p.beta, p.q) - n * ons_prime(spec, p.beta, p.q) * dq
        + n * p.gamma_reg * p.beta * dq * dq / 8.0
}

/// Gradient with `atanh(m)` supplied by the caller.
fn grad_with_natural(g: &DisorderTensors, m: &[f64], natural: &[f64], p: &TapParams) -> Vec<f64> {
    grad_from_parts(g, m, natural, p, &g.grad_unchecked(m))
}

fn grad_from_parts(g: &DisorderTensors, m: &[f64], natural: &[f64], p: &TapParams, dh: &[f64]) -> Vec<f64> {
    let spec = g.spec();
    let big_q = self_overlap(m);
    let diag = p.beta * p.beta * (1.0 - p.q) * spec.xi_d2(p.q) + 0.5 * p.gamma_reg * p.beta * (big_q - p.q);
    (0..m.len()).map(|i| -p.beta * dh[i] - p.y[i] + natural[i] + diag * m[i]).collect()
}

pub fn ftap_value(g: &DisorderTensors, m: &[f64], params: &TapParams) -> Result<f64> {
    check_interior(g, m, params)?;
    Ok(value_closed(g, m, params))
}

pub fn ftap_grad(g: &DisorderTensors, m: &[f64], params: &TapParams) -> Result<Vec<f64>> {
    check_interior(g, m, params)?;
    let natural: Vec<f64> = m.iter().map(|v| v.clamp(-ATANH_CLAMP, ATANH_CLAMP).atanh()).collect();
    Ok(grad_with_natural(g, m, &natural, params))
}

/// Gradient at `m = tanh(u)`, using `u` itself for `atanh(m)`.
pub fn ftap_grad_natural(g: &DisorderTensors, u: &[f64], params: &TapParams) -> Result<Vec<f64>> {
    if u.len() != g.n() || params.y.len() != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), got: u.len() });
    }
    let m: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
    Ok(grad_with_natural(g, &m, u, params))
}

pub fn ftap_hessian(g: &DisorderTensors, m: &[f64], params: &TapParams) -> Result<DMatrix<f64>> {
    check_interior(g, m, params)?;
    let n = m.len();
    if n > DEFAULT_HESSIAN_CAP {
        return Err(Error::CapExceeded { what: "Hessian dimension", value: n, cap: DEFAULT_HESSIAN_CAP });
    }
    let spec = g.spec();
    let (beta, gam) = (params.beta, params.gamma_reg);
    let big_q = self_overlap(m);
    let shift = beta * beta * (1.0 - params.q) * spec.xi_d2(params.q) + 0.5 * gam * beta * (big_q - params.q);
    let mut h = g.hessian(m)? * (-beta);
    let rank_one = gam * beta / n as f64;
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] += rank_one * m[i] * m[j];
        }
        h[(i, i)] += 1.0 / (1.0 - m[i] * m[i]) + shift;
    }
    Ok(h)
}

/// Extreme eigenvalues of `D(m)^{-1/2} hess F D(m)^{-1/2}` with `D = diag(1/(1 - m_i^2))`.
pub fn relative_hessian_extremes(g: &DisorderTensors, m: &[f64], params: &TapParams) -> Result<(f64, f64)> {
    let mut h = ftap_hessian(g, m, params)?;
    let s: Vec<f64> = m.iter().map(|v| (1.0 - v * v).sqrt()).collect();
    let n = m.len();
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] *= s[i] * s[j];
        }
    }
    // exact symmetry survives the scaling; enforce it against rounding anyway
    let sym = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// `D(m, n) = -h(m) + h(n) + <grad h(n), m - n>`, with `grad h(n) = -atanh(n)`.
pub fn bregman(m: &[f64], other: &[f64]) -> Result<f64> {
    if m.len() != other.len() {
        return Err(Error::DimensionMismatch { expected: m.len(), got: other.len() });
    }
    if m.iter().chain(other).any(|v| !(v.abs() < 1.0)) {
        return Err(Error::Domain("Bregman divergence needs interior points".into()));
    }
    Ok(m.iter().zip(other).map(|(&a, &b)| -entropy_unchecked(a) + entropy_unchecked(b) - b.atanh() * (a - b)).sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TapIterate {
    pub u: Vec<f64>,
    pub m: Vec<f64>,
    pub ftap: f64,
    pub grad_norm: f64,
}

impl TapIterate {
    fn at(g: &DisorderTensors, u: Vec<f64>, params: &TapParams) -> Result<(Self, Vec<f64>)> {
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric("ngd", format!("non-finite natural parameter at coordinate {i}")));
        }
        let m: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
        let (dh, energy) = g.grad_and_value_unchecked(&m);
        let grad = grad_from_parts(g, &m, &u, params, &dh);
        let ftap = value_with_energy(g, &m, params, energy);
        let grad_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok((Self { u, m, ftap, grad_norm }, grad))
    }
}

#[derive(Clone, Debug)]
pub struct NgdRun {
    /// Iterates `0..=K`, or only the last when history is off.
    pub iterates: Vec<TapIterate>,
    /// `(step, halvings)` for every step that needed the safeguard.
    pub halvings: Vec<(usize, u32)>,
    /// Per step, `max_i |tanh(atanh(m_i) - eta g_i) - tanh(u'_i)|`: the gap
    /// between the mirror-descent proximal point and the natural step.
    pub mirror_residuals: Vec<f64>,
    /// `F` before each step and after the last.
    pub values: Vec<f64>,
    /// Steps where `F` could only rise by rounding and the iterate was kept.
    pub held_steps: Vec<usize>,
}

impl NgdRun {
    pub fn last(&self) -> &TapIterate {
        self.iterates.last().expect("at least one iterate")
    }
}

/// Minimizer of `<grad, x - m> + D(x, m) / eta`, computed in primal coordinates.
pub fn mirror_step(m: &[f64], grad: &[f64], eta: f64) -> Vec<f64> {
    m.iter().zip(grad).map(|(&mi, &gi)| (mi.clamp(-ATANH_CLAMP, ATANH_CLAMP).atanh() - eta * gi).tanh()).collect()
}

/// `u^{k+1} = u^k - eta grad F(tanh u^k)`, halving `eta` for a step whenever
/// `F` would increase.
pub fn ngd_run(
    g: &DisorderTensors,
    u0: &[f64],
    params: &TapParams,
    eta: f64,
    k_iters: usize,
    keep_history: bool,
) -> Result<NgdRun> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!("eta = {eta} must be positive")));
    }
    if k_iters == 0 {
        return Err(Error::Domain("NGD needs K >= 1".into()));
    }
    if u0.len() != g.n() || params.y.len() != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), got: u0.len() });
    }
    let (mut cur, mut grad) = TapIterate::at(g, u0.to_vec(), params)?;
    let mut run = NgdRun {
        iterates: Vec::new(),
        halvings: Vec::new(),
        mirror_residuals: Vec::with_capacity(k_iters),
        values: vec![cur.ftap],
        held_steps: Vec::new(),
    };
    for step in 0..k_iters {
        let mut step_eta = eta;
        let mut halved = 0;
        let grad_sq: f64 = grad.iter().map(|v| v * v).sum();
        let tol = ROUNDING_SLACK * cur.ftap.abs().max(1.0);
        let (next, next_grad) = loop {
            let u: Vec<f64> = cur.u.iter().zip(&grad).map(|(u, g)| u - step_eta * g).collect();
            let (cand, cand_grad) = TapIterate::at(g, u, params)?;
            if cand.ftap <= cur.ftap {
                break (cand, cand_grad);
            }
            if cand.ftap - cur.ftap <= tol && step_eta * grad_sq <= tol {
                // stationary to working precision: hold the iterate
                run.held_steps.push(step);
                step_eta = 0.0;
                break (cur.clone(), grad.clone());
            }
            halved += 1;
            if halved > MAX_HALVINGS {
                return Err(Error::numeric(
                    "ngd",
                    format!("step {step}: F still increases after {MAX_HALVINGS} halvings"),
                ));
            }
            step_eta *= 0.5;
        };
        if halved > 0 {
            run.halvings.push((step, halved));
        }
        let prox = mirror_step(&cur.m, &grad, step_eta);
        let residual = prox.iter().zip(&next.m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        run.mirror_residuals.push(residual);
        run.values.push(next.ftap);
        let done = std::mem::replace(&mut cur, next);
        grad = next_grad;
        if keep_history {
            run.iterates.push(done);
        }
    }
    run.iterates.push(cur);
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::gen_random;
    use crate::rng::{normals, Purpose};

    fn interior(n: usize, seed: u64, amp: f64) -> Vec<f64> {
        normals(seed, Purpose::Auxiliary(5), 0, n).into_iter().map(|v| amp * v.tanh()).collect()
    }

    fn mixed(n: usize, seed: u64) -> DisorderTensors {
        gen_random(&MixtureSpec::new([(2, 0.5), (3, 0.25), (4, 0.1)]).unwrap(), n, seed).unwrap()
    }

    #[test]
    fn ons_values_and_derivative() {
        let sk = MixtureSpec::sk();
        assert_eq!(ons(&sk, 1.3, 1.0), 0.0);
        assert!((ons(&sk, 0.8, 0.0) - 0.64 / 4.0).abs() < 1e-15);
        let mix = MixtureSpec::new([(2, 0.5), (3, 0.25), (4, 0.1)]).unwrap();
        for &q in &[0.1, 0.4, 0.77] {
            let h = 1e-6;
            let fd = (ons(&mix, 0.9, q + h) - ons(&mix, 0.9, q - h)) / (2.0 * h);
            assert!((fd - ons_prime(&mix, 0.9, q)).abs() < 1e-8);
        }
    }

    /// Term-by-term evaluation from the definition, written against the raw
    /// mixture polynomial rather than the `ons` helpers.
    fn naive_value(g: &DisorderTensors, m: &[f64], p: &TapParams) -> f64 {
        let n = m.len() as f64;
        let xi = |t: f64| g.spec().terms().iter().map(|&(k, c)| c * t.powi(k as i32)).sum::<f64>();
        let dxi = |t: f64| g.spec().terms().iter().map(|&(k, c)| c * f64::from(k) * t.powi(k as i32 - 1)).sum::<f64>();
        let onsn = |s: f64| p.beta * p.beta * n / 2.0 * (xi(1.0) - xi(s) - (1.0 - s) * dxi(s));
        let hs = 1e-7;
        let onsn_prime = (onsn(p.q + hs) - onsn(p.q - hs)) / (2.0 * hs);
        let big_q = m.iter().map(|v| v * v).sum::<f64>() / n;
        let mut ent = 0.0;
        for &v in m {
            let a = (1.0 + v) / 2.0;
            let b = (1.0 - v) / 2.0;
            ent += -a * a.ln() - b * b.ln();
        }
        let field: f64 = p.y.iter().zip(m).map(|(a, b)| a * b).sum();
        -p.beta * g.hamiltonian(m).unwrap() - field - ent - onsn(p.q) - onsn_prime * (big_q - p.q)
            + n * p.gamma_reg * p.beta / 8.0 * (big_q - p.q).powi(2)
    }

    #[test]
    fn value_special_cases() {
        let g = mixed(6, 1);
        let n = 6.0;
        let p = TapParams::new(0.7, 0.0, 1.0, vec![0.0; 6]).unwrap();
        let want = -n * std::f64::consts::LN_2 - 0.49 * n * g.spec().xi_at(1.0) / 2.0;
        assert!((ftap_value(&g, &[0.0; 6], &p).unwrap() - want).abs() < 1e-12);
        let m = interior(6, 3, 0.8);
        let y = normals(2, Purpose::Auxiliary(9), 0, 6);
        let p = TapParams::new(0.7, 0.3, 1.3, y.clone()).unwrap();
        let v = ftap_value(&g, &m, &p).unwrap();
        assert!((v - naive_value(&g, &m, &p)).abs() < 1e-6 * v.abs().max(1.0));
        // Gamma = 0 and q = Q(m): plain TAP
        let big_q = self_overlap(&m);
        let p0 = TapParams::new(0.7, big_q, 0.0, y.clone()).unwrap();
        let plain = -0.7 * g.hamiltonian(&m).unwrap()
            - y.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>()
            - crate::mixture::binary_entropy_sum(&m).unwrap()
            - n * ons(g.spec(), 0.7, big_q);
        assert!((ftap_value(&g, &m, &p0).unwrap() - plain).abs() < 1e-12);
        assert!(ftap_value(&g, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &p).is_err());
        assert!(TapParams::new(0.7, 1.0, 1.0, vec![0.0; 6]).is_err());
    }

    #[test]
    fn value_matches_naive_to_high_precision() {
        // exact ONS' is used in place of the numerical derivative here
        let g = mixed(6, 4);
        let m = interior(6, 8, 0.9);
        let p = TapParams::new(1.1, 0.45, 0.5, normals(3, Purpose::Auxiliary(9), 0, 6)).unwrap();
        let n = 6.0;
        let big_q = self_overlap(&m);
        let xi = |t: f64| 0.5 * t * t + 0.25 * t.powi(3) + 0.1 * t.powi(4);
        let dxi = |t: f64| t + 0.75 * t * t + 0.4 * t.powi(3);
        let d2xi = |t: f64| 1.0 + 1.5 * t + 1.2 * t * t;
        let b2 = 1.21;
        let onsn = b2 * n / 2.0 * (xi(1.0) - xi(0.45) - 0.55 * dxi(0.45));
        let onsn_prime = -b2 * n / 2.0 * 0.55 * d2xi(0.45);
        let ent: f64 = m
            .iter()
            .map(|&v| {
                let (a, b) = ((1.0 + v) / 2.0, (1.0 - v) / 2.0);
                -a * a.ln() - b * b.ln()
            })
            .sum();
        let field: f64 = p.y.iter().zip(&m).map(|(a, b)| a * b).sum();
        let want = -1.1 * g.hamiltonian(&m).unwrap() - field - ent - onsn - onsn_prime * (big_q - 0.45)
            + n * 0.5 * 1.1 / 8.0 * (big_q - 0.45).powi(2);
        assert!((ftap_value(&g, &m, &p).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn gradient_and_hessian_finite_differences() {
        let n = 8;
        let g = mixed(n, 2);
        let m = interior(n, 5, 0.7);
        let p = TapParams::new(0.9, 0.35, 1.0, normals(7, Purpose::Auxiliary(9), 0, n)).unwrap();
        let grad = ftap_grad(&g, &m, &p).unwrap();
        let h = 1e-6;
        for i in 0..n {
            let (mut a, mut b) = (m.clone(), m.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (ftap_value(&g, &a, &p).unwrap() - ftap_value(&g, &b, &p).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1.0), "{i}: {fd} {}", grad[i]);
        }
        let hess = ftap_hessian(&g, &m, &p).unwrap();
        assert_eq!(hess, hess.transpose());
        for j in 0..n {
            let (mut a, mut b) = (m.clone(), m.clone());
            a[j] += h;
            b[j] -= h;
            let ga = ftap_grad(&g, &a, &p).unwrap();
            let gb = ftap_grad(&g, &b, &p).unwrap();
            for i in 0..n {
                let fd = (ga[i] - gb[i]) / (2.0 * h);
                assert!((fd - hess[(i, j)]).abs() <= 1e-5 * hess[(i, j)].abs().max(1.0));
            }
        }
        let u: Vec<f64> = m.iter().map(|v| v.atanh()).collect();
        let gn = ftap_grad_natural(&g, &u, &p).unwrap();
        for i in 0..n {
            assert!((gn[i] - grad[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_temperature_cases() {
        let g = mixed(5, 1);
        let p = TapParams::new(0.0, 0.0, 1.0, vec![0.0; 5]).unwrap();
        assert!(ftap_grad(&g, &[0.0; 5], &p).unwrap().iter().all(|&v| v == 0.0));
        let hess = ftap_hessian(&g, &[0.0; 5], &p).unwrap();
        assert_eq!(hess, DMatrix::identity(5, 5));
        let m = interior(5, 2, 0.9);
        let (lo, hi) = relative_hessian_extremes(&g, &m, &p).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bregman_bounds() {
        let m = interior(20, 1, 0.95);
        assert_eq!(bregman(&m, &m).unwrap(), 0.0);
        for s in 0..50 {
            let a = interior(20, 100 + s, 0.99);
            let b = interior(20, 200 + s, 0.99);
            let d = bregman(&a, &b).unwrap();
            let l2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
            let nat: f64 = a.iter().zip(&b).map(|(x, y)| (x.atanh() - y.atanh()).powi(2)).sum();
            assert!(d >= l2 / 2.0 - 1e-12);
            assert!(d <= nat + 1e-12);
        }
        assert!(bregman(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn ngd_fixed_point_and_monotonicity() {
        let g = mixed(10, 3);
        let p = TapParams::new(0.0, 0.0, 1.0, vec![0.0; 10]).unwrap();
        let run = ngd_run(&g, &[0.0; 10], &p, 0.1, 5, true).unwrap();
        assert!(run.iterates.iter().all(|it| it.u == vec![0.0; 10]));

        let y = normals(4, Purpose::Auxiliary(9), 0, 10);
        let p = TapParams::new(0.4, 0.3, 1.0, y).unwrap();
        let run = ngd_run(&g, &[0.0; 10], &p, 0.5, 60, true).unwrap();
        for w in run.values.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        assert!(run.mirror_residuals.iter().all(|&r| r <= 1e-10));
        assert!(run.last().grad_norm < 1e-6);
        for it in &run.iterates {
            for (m, u) in it.m.iter().zip(&it.u) {
                assert_eq!(*m, u.tanh());
            }
        }
        assert!(ngd_run(&g, &[0.0; 10], &p, 0.0, 5, false).is_err());
    }

    #[test]
    fn safeguard_engages_for_huge_steps() {
        let g = mixed(10, 3);
        let y = normals(4, Purpose::Auxiliary(9), 0, 10);
        let p = TapParams::new(0.4, 0.3, 1.0, y).unwrap();
        let run = ngd_run(&g, &[0.0; 10], &p, 50.0, 10, false).unwrap();
        assert!(!run.halvings.is_empty());
        for w in run.values.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }
}
