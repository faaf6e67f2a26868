//! Scalar state evolution `q_{k+1} = psi(beta^2 xi'(q_k) + t)`, its fixed
//! points, MSE predictions, the free-energy functional `Psi_*` and the
//! inverse-temperature thresholds that depend only on the mixture.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mixture::{entropy_unchecked, MixtureSpec};
use crate::scalar::{mutual_info_unchecked, phi, phi_prime, psi_complement_unchecked, psi_unchecked};

/// Stopping tolerance on `|q_{k+1} - q_k|`.
pub const SE_TOL: f64 = 1e-12;
/// Iteration cap when continuing to the fixed point.
pub const SE_CAP: usize = 10_000;

/// A state-evolution trajectory for one `(beta, t)` pair.
#[derive(Clone, Debug, Serialize)]
pub struct SEProfile {
    pub beta: f64,
    pub t: f64,
    /// `q_0 = 0, q_1, ..., q_K`.
    pub q_sequence: Vec<f64>,
    pub q_star: f64,
    /// `beta^2 xi'(q_star)`.
    pub gamma_star: f64,
    pub converged: bool,
    /// Iterations spent reaching `q_star`.
    pub iterations: usize,
}

impl SEProfile {
    pub fn q(&self, k: usize) -> Option<f64> {
        self.q_sequence.get(k).copied()
    }
}

/// `f_t(q) = psi(beta^2 xi'(q) + t)`.
pub fn se_map(spec: &MixtureSpec, beta: f64, t: f64, q: f64) -> f64 {
    psi_unchecked(beta * beta * spec.xi_d1(q.clamp(-1.0, 1.0)) + t)
}

fn check_bt(beta: f64, t: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta = {beta}, need beta >= 0")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t = {t}, need t >= 0")));
    }
    Ok(())
}

/// Runs `K` recursion steps from `q_0 = 0`, then keeps iterating until the
/// increment drops below [`SE_TOL`] or [`SE_CAP`] steps have been taken.
/// Hitting the cap is reported through `converged`, not as an error.
pub fn se_recursion(spec: &MixtureSpec, beta: f64, t: f64, k_steps: usize) -> Result<SEProfile> {
    check_bt(beta, t)?;
    if k_steps == 0 {
        return Err(Error::Domain("state evolution needs K >= 1".into()));
    }
    let mut q_sequence = Vec::with_capacity(k_steps + 1);
    q_sequence.push(0.0);
    let mut q = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..SE_CAP.max(k_steps) {
        let next = se_map(spec, beta, t, q);
        if k < k_steps {
            q_sequence.push(next);
        }
        let step = (next - q).abs();
        q = next;
        if !converged {
            iterations = k + 1;
        }
        if step <= SE_TOL {
            converged = true;
            if k + 1 >= k_steps {
                break;
            }
        }
    }
    let q_star = q;
    Ok(SEProfile { beta, t, q_sequence, q_star, gamma_star: beta * beta * spec.xi_d1(q_star), converged, iterations })
}

/// Fixed point `q_*(beta, t)` only.
pub fn q_star(spec: &MixtureSpec, beta: f64, t: f64) -> Result<f64> {
    let prof = se_recursion(spec, beta, t, 1)?;
    if prof.converged {
        Ok(prof.q_star)
    } else {
        Err(Error::NoConvergence(format!("state evolution at beta={beta}, t={t} after {SE_CAP} steps")))
    }
}

/// Predicted AMP mean-squared error `1 - q_{k+1}`.
///
/// `tanh(z^{k+1})` is the estimate whose limiting law is that of
/// `tanh(gamma_k X + sigma_k Z + Y)`, so this is the MSE of the iterate after
/// `k + 1` AMP updates.
pub fn mse_prediction(profile: &SEProfile, k: usize) -> Result<f64> {
    profile.q(k + 1).map(|q| 1.0 - q).ok_or_else(|| {
        Error::Domain(format!(
            "k + 1 = {} outside a state-evolution sequence of length {}",
            k + 1,
            profile.q_sequence.len()
        ))
    })
}

/// All roots of `q = f_t(q)` in `[0, 1]`, located by sign changes on a
/// uniform grid and refined by bisection. `q = 0` is included when it is an
/// exact root (`t = 0`).
pub fn se_fixed_points(spec: &MixtureSpec, beta: f64, t: f64, grid: usize) -> Result<Vec<f64>> {
    check_bt(beta, t)?;
    let g = |q: f64| q - se_map(spec, beta, t, q);
    let mut roots = Vec::new();
    if g(0.0) == 0.0 {
        roots.push(0.0);
    }
    let qs: Vec<f64> = (1..=grid).map(|i| i as f64 / grid as f64).collect();
    let vals: Vec<f64> = qs.par_iter().map(|&q| g(q)).collect();
    let mut prev_q = 0.0;
    let mut prev_v = g(0.0);
    for (&q, &v) in qs.iter().zip(&vals) {
        if prev_v != 0.0 && v != 0.0 && (prev_v < 0.0) != (v < 0.0) {
            roots.push(bisect(&g, prev_q, q, 1e-14));
        } else if v == 0.0 {
            roots.push(q);
        }
        prev_q = q;
        prev_v = v;
    }
    Ok(roots)
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Grid and tolerance settings recorded alongside each threshold.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdMethods {
    pub beta1_grid: usize,
    pub beta1_tol: f64,
    pub beta2_grid: usize,
    pub beta2_tol: f64,
    pub beta3_c0: f64,
    pub beta3_heuristic: bool,
    pub beta_c_rs_panels: usize,
    pub beta_c_rs_tol: f64,
    pub beta_dyn_step: f64,
    pub beta_dyn_grid: usize,
    pub beta_dyn_ceiling: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdReport {
    pub mixture: MixtureSpec,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta_c_rs: f64,
    pub beta_dyn: Option<f64>,
    pub methods: ThresholdMethods,
}

pub const BETA1_GRID: usize = 4096;
pub const BETA1_TOL: f64 = 1e-4;
pub const BETA2_GRID: usize = 10_000;
pub const BETA2_TOL: f64 = 1e-4;
pub const RS_PANELS: usize = 2048;
pub const RS_TOL: f64 = 1e-3;
/// Slack on `max_t RS(t) <= 0` absorbing rounding in the cumulative integral.
const RS_ZERO_SLACK: f64 = 1e-13;
pub const DYN_STEP: f64 = 1e-3;
pub const DYN_GRID: usize = 4096;
pub const DYN_CEILING: f64 = 10.0;
/// Default for the unspecified small constant in the general `beta_3` branch.
pub const DEFAULT_C0: f64 = 0.25;

/// Every threshold for `spec`.
pub fn threshold_report(spec: &MixtureSpec, c0: f64) -> Result<ThresholdReport> {
    Ok(ThresholdReport {
        mixture: spec.clone(),
        beta1: beta1(spec)?,
        beta2: beta2(spec)?,
        beta3: beta3(spec, c0)?,
        beta_c_rs: beta_c_rs(spec)?,
        beta_dyn: beta_dyn(spec)?,
        methods: ThresholdMethods {
            beta1_grid: BETA1_GRID,
            beta1_tol: BETA1_TOL,
            beta2_grid: BETA2_GRID,
            beta2_tol: BETA2_TOL,
            beta3_c0: c0,
            beta3_heuristic: !spec.is_sk_form(),
            beta_c_rs_panels: RS_PANELS,
            beta_c_rs_tol: RS_TOL,
            beta_dyn_step: DYN_STEP,
            beta_dyn_grid: DYN_GRID,
            beta_dyn_ceiling: DYN_CEILING,
        },
    })
}

/// `beta_1 = inf_q sqrt(phi'(q) / xi''(q))`.
///
/// Log-spaced grid clustered at both ends of `(0, 1)`, then golden-section
/// refinement around the best grid point.
pub fn beta1(spec: &MixtureSpec) -> Result<f64> {
    let ratio = |q: f64| -> f64 {
        let d2 = spec.xi_d2(q);
        if d2 <= 0.0 {
            return f64::INFINITY;
        }
        match phi_prime(q) {
            Ok(v) => v / d2,
            Err(_) => f64::INFINITY,
        }
    };
    let half = BETA1_GRID / 2;
    let mut grid: Vec<f64> = Vec::with_capacity(BETA1_GRID);
    let (lo, hi) = (1e-9f64.ln(), 0.5f64.ln());
    for i in 0..half {
        grid.push((lo + (hi - lo) * i as f64 / (half - 1) as f64).exp());
    }
    for i in (0..half - 1).rev() {
        grid.push(1.0 - (lo + (hi - lo) * i as f64 / (half - 1) as f64).exp());
    }
    let vals: Vec<f64> = grid.par_iter().map(|&q| ratio(q)).collect();
    let (imin, &vmin) = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty grid");
    if !vmin.is_finite() {
        return Err(Error::Domain("xi'' vanishes on (0,1)".into()));
    }
    let a = if imin == 0 { 0.0 } else { grid[imin - 1] };
    let b = if imin + 1 == grid.len() { grid[imin] } else { grid[imin + 1] };
    let (_, refined) = golden_min(ratio, a.max(1e-12), b, 1e-10);
    let mut best = vmin.min(refined);
    // the q -> 0 limit phi'(0)/xi''(0) = 1/xi''(0)
    let d20 = spec.xi_d2(0.0);
    if d20 > 0.0 {
        best = best.min(1.0 / d20);
    }
    Ok(best.sqrt())
}

/// `log 2 - h(q) = sum_k q^{2k} / (2k (2k - 1))`, accurate as `q -> 0`.
fn entropy_deficit(q: f64) -> f64 {
    let q = q.abs();
    if q < 0.1 {
        let q2 = q * q;
        let mut term = q2;
        let mut acc = 0.0;
        for k in 1..=20 {
            let k = f64::from(k);
            acc += term / (2.0 * k * (2.0 * k - 1.0));
            term *= q2;
        }
        acc
    } else {
        std::f64::consts::LN_2 - entropy_unchecked(q)
    }
}

/// `max_q { beta^2 xi(q) + h(q) - log 2 } / q^2`, which has the sign of the
/// `beta_2` condition but does not vanish at `q = 0`.
fn beta2_excess(spec: &MixtureSpec, beta: f64) -> f64 {
    let b2 = beta * beta;
    let f = |q: f64| (b2 * spec.xi_at(q) - entropy_deficit(q)) / (q * q);
    let n = BETA2_GRID;
    let mut best_i = 1;
    let mut best = f64::NEG_INFINITY;
    for i in 1..n {
        let v = f(i as f64 / n as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // q -> 0 limit
    best = best.max(0.5 * (b2 * spec.xi_d2(0.0) - 1.0));
    let a = (best_i - 1) as f64 / n as f64;
    let b = (best_i + 1) as f64 / n as f64;
    let (_, neg) = golden_min(|q| -f(q), a.max(1e-9), b.min(1.0 - 1e-12), 1e-12);
    best.max(-neg)
}

/// `beta_2 = sup { beta : beta^2 xi(q) + h(q) - log 2 < 0 on (0,1) }`.
pub fn beta2(spec: &MixtureSpec) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = (std::f64::consts::LN_2 / spec.xi_at(1.0)).sqrt() * 1.01;
    if beta2_excess(spec, hi) < 0.0 {
        return Err(Error::numeric("beta2", "upper bracket does not violate the condition"));
    }
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if beta2_excess(spec, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `beta_3`: exact in the SK form, `c0 / sqrt(xi''(1) log xi_hat^{(8)}(1))` otherwise.
pub fn beta3(spec: &MixtureSpec, c0: f64) -> Result<f64> {
    if spec.is_sk_form() {
        return Ok(1.0 / (2.0 * spec.xi_d2(0.0).sqrt()));
    }
    if !(c0 > 0.0) {
        return Err(Error::Domain(format!("beta3 needs c0 > 0, got {c0}")));
    }
    let xh = spec.xi_hat(8);
    if xh <= 1.0 {
        return Err(Error::Domain(format!("log xi_hat^(8)(1) undefined or nonpositive (xi_hat = {xh})")));
    }
    Ok(c0 / (spec.xi_d2(1.0) * xh.ln()).sqrt())
}

/// `max_{t in [0,1]} RS(t)` with `RS(t) = int_0^t xi''(s) (psi(beta^2 xi'(s)) - s) ds`,
/// by cumulative composite Simpson over [`RS_PANELS`] panels.
pub fn rs_max(spec: &MixtureSpec, beta: f64) -> f64 {
    let m = 2 * RS_PANELS;
    let h = 1.0 / m as f64;
    let b2 = beta * beta;
    let vals: Vec<f64> = (0..=m)
        .into_par_iter()
        .map(|j| {
            let s = j as f64 * h;
            spec.xi_d2(s) * (psi_unchecked(b2 * spec.xi_d1(s)) - s)
        })
        .collect();
    let mut acc = 0.0;
    let mut best = 0.0f64;
    for k in 0..RS_PANELS {
        let j = 2 * k;
        acc += h / 3.0 * (vals[j] + 4.0 * vals[j + 1] + vals[j + 2]);
        best = best.max(acc);
    }
    best
}

/// Replica-symmetric critical temperature: largest `beta` with
/// `max_t RS(t) <= 0`.
pub fn beta_c_rs(spec: &MixtureSpec) -> Result<f64> {
    let ok = |b: f64| rs_max(spec, b) <= RS_ZERO_SLACK;
    let d20 = spec.xi_d2(0.0);
    let mut hi = if d20 > 0.0 { 1.05 / d20.sqrt() } else { 1.0 };
    let mut lo = 0.0;
    let mut guard = 0;
    while ok(hi) {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 40 {
            return Err(Error::numeric("beta_c_rs", "no upper bracket"));
        }
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `1 - H(lambda)` with `H(lambda) = E[cosh(lG) tanh(lG)^2] / E[cosh(lG)]`.
///
/// Absorbing `cosh` into the measure, `E[cosh(lG) g(lG)] =
/// e^{l^2/2} (E g(lG + l^2) + E g(lG - l^2)) / 2`, which for even `g` makes
/// `H(l) = E tanh^2(l^2 + l G)` and `1 - H = E sech^2(l^2 + l G)`; no
/// exponential growth is ever formed.
pub fn dyn_h_complement(lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    if l2 == 0.0 {
        return 1.0;
    }
    if l2 > crate::scalar::ASYMPTOTIC_GAMMA {
        return psi_complement_unchecked(l2);
    }
    let up = crate::quadrature::expect_channel(l2, |v| v.cosh().powi(-2));
    let down = crate::quadrature::expect_scaled(lambda, |v| (v - l2).cosh().powi(-2));
    0.5 * (up + down)
}

fn dyn_has_solution(spec: &MixtureSpec, beta: f64, qs: &[f64]) -> bool {
    qs.iter().any(|&q| {
        let lambda = beta * spec.xi_d1(q).sqrt();
        // q - H = (1 - H) - (1 - q)
        dyn_h_complement(lambda) - (1.0 - q) <= 0.0
    })
}

/// Dynamical transition: infimum `beta` for which `q = H(beta sqrt(xi'(q)))`
/// has a solution in `(1e-4, 1]`. `None` below [`DYN_CEILING`] means no
/// solution was found.
///
/// Solvability is monotone in `beta`, so a coarse scan locates the bracket and
/// a fine scan with step [`DYN_STEP`] inside it returns what a full fine scan
/// would.
pub fn beta_dyn(spec: &MixtureSpec) -> Result<Option<f64>> {
    let lo_q = 1e-4;
    let qs: Vec<f64> = (0..DYN_GRID).map(|i| lo_q + (1.0 - lo_q) * (i + 1) as f64 / DYN_GRID as f64).collect();
    let coarse = 100.0 * DYN_STEP;
    let n_coarse = (DYN_CEILING / coarse).round() as usize;
    let mut first = None;
    for k in 1..=n_coarse {
        let b = k as f64 * coarse;
        if dyn_has_solution(spec, b, &qs) {
            first = Some(k);
            break;
        }
    }
    let Some(k) = first else { return Ok(None) };
    let start = ((k - 1) * 100) + 1;
    let end = k * 100;
    let fine: Vec<usize> = (start..=end).collect();
    let hits: Vec<bool> = fine.par_iter().map(|&j| dyn_has_solution(spec, j as f64 * DYN_STEP, &qs)).collect();
    let idx = hits.iter().position(|&h| h).expect("coarse hit implies a fine hit");
    Ok(Some(fine[idx] as f64 * DYN_STEP))
}

/// `Psi(q; beta, t) = beta^2/2 (xi(1) - xi(q) - (1-q) xi'(q)) + I(beta^2 xi'(q) + t)`.
pub fn psi_functional(spec: &MixtureSpec, beta: f64, t: f64, q: f64) -> f64 {
    let b2 = beta * beta;
    0.5 * b2 * (spec.xi_at(1.0) - spec.xi_at(q) - (1.0 - q) * spec.xi_d1(q))
        + mutual_info_unchecked(b2 * spec.xi_d1(q) + t)
}

/// `Psi_*(beta, t)`, the functional at the state-evolution fixed point.
///
/// Only meaningful for `beta < beta_1`; above it the smallest fixed point is
/// used.
pub fn psi_star(spec: &MixtureSpec, beta: f64, t: f64) -> Result<f64> {
    let q = q_star(spec, beta, t)?;
    Ok(psi_functional(spec, beta, t, q))
}

/// Precomputed fixed points along the Euler time grid.
#[derive(Clone, Debug, Serialize)]
pub struct QSchedule {
    pub delta: f64,
    /// `q_*(beta, l delta)` for `l = 0..=L`.
    pub q: Vec<f64>,
}

impl QSchedule {
    pub fn at(&self, step: usize) -> f64 {
        self.q[step.min(self.q.len() - 1)]
    }
}

pub fn q_schedule(spec: &MixtureSpec, beta: f64, delta: f64, steps: usize) -> Result<QSchedule> {
    if !(delta > 0.0) || steps == 0 {
        return Err(Error::Domain(format!("q schedule needs delta > 0 and L >= 1 (got {delta}, {steps})")));
    }
    let q = (0..=steps).into_par_iter().map(|l| q_star(spec, beta, l as f64 * delta)).collect::<Result<Vec<f64>>>()?;
    Ok(QSchedule { delta, q })
}

/// `phi` re-exported for callers that work on the `q` scale.
pub fn gamma_of_q(q: f64) -> Result<f64> {
    phi(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::expect_scaled;

    #[test]
    fn trivial_recursions() {
        let sk = MixtureSpec::sk();
        let p = se_recursion(&sk, 0.5, 0.0, 5).unwrap();
        assert!(p.q_sequence.iter().all(|&q| q == 0.0));
        assert_eq!(p.q_star, 0.0);
        assert!(p.converged);
        for k in 0..4 {
            assert_eq!(mse_prediction(&p, k).unwrap(), 1.0);
        }
        assert!(mse_prediction(&p, 5).is_err());

        let p = se_recursion(&sk, 0.0, 1.3, 6).unwrap();
        let want = psi_unchecked(1.3);
        assert!(p.q_sequence[1..].iter().all(|&q| q == want));
    }

    #[test]
    fn sk_half_one_golden() {
        // recursion run at tolerance 1e-14 before pinning
        let sk = MixtureSpec::sk();
        let p = se_recursion(&sk, 0.5, 1.0, 10).unwrap();
        assert!(p.converged);
        assert!((p.q_star - 0.594_639).abs() < 1e-6, "q* = {}", p.q_star);
        assert!((mse_prediction(&p, 3).unwrap() - (1.0 - p.q_sequence[4])).abs() < 1e-15);
        assert!((p.q_star - se_map(&sk, 0.5, 1.0, p.q_star)).abs() <= 1e-10);
        assert!((p.gamma_star - 0.25 * p.q_star).abs() < 1e-15);
    }

    #[test]
    fn monotone_and_bounded() {
        let sk = MixtureSpec::sk();
        for &t in &[0.1, 1.0, 4.0] {
            let p = se_recursion(&sk, 0.7, t, 30).unwrap();
            for w in p.q_sequence.windows(2) {
                assert!(w[1] >= w[0]);
            }
            assert!(p.q_sequence.iter().all(|&q| q <= p.q_star + 1e-15));
        }
    }

    #[test]
    fn contraction_below_beta1() {
        let sk = MixtureSpec::sk();
        let beta = 0.8;
        let b1 = 1.0;
        let mut state = 12345u64;
        let mut unif = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let (q1, q2, t) = (unif(), unif(), 5.0 * unif());
            let d = (se_map(&sk, beta, t, q1) - se_map(&sk, beta, t, q2)).abs();
            assert!(d <= (beta / b1).powi(2) * (q1 - q2).abs() + 1e-9);
        }
    }

    #[test]
    fn geometric_convergence() {
        let sk = MixtureSpec::sk();
        let beta: f64 = 0.6;
        for &t in &[0.2, 1.0, 3.0] {
            let p = se_recursion(&sk, beta, t, 20).unwrap();
            for (k, &q) in p.q_sequence.iter().enumerate() {
                assert!(1.0 - q / p.q_star <= (beta * beta).powi(k as i32) + 1e-6);
            }
        }
    }

    #[test]
    fn q_star_over_t_bounded() {
        let sk = MixtureSpec::sk();
        for i in 1..=50 {
            let t = 0.1 * f64::from(i);
            let r = q_star(&sk, 0.5, t).unwrap() / t;
            assert!((0.01..=100.0).contains(&r));
        }
    }

    #[test]
    fn multiple_fixed_points_above_beta1() {
        let sk = MixtureSpec::sk();
        // at t = 0 the SK map has the trivial root plus a nontrivial one
        let roots = se_fixed_points(&sk, 1.5, 0.0, 2000).unwrap();
        assert!(roots.len() >= 2, "{roots:?}");
        // a mixture with a strong 4-spin part has two separated roots at t > 0
        let mix = MixtureSpec::new([(2, 0.05), (4, 1.0)]).unwrap();
        let b1 = beta1(&mix).unwrap();
        let beta = 1.3 * b1;
        let found = (0..200).any(|i| {
            let t = 0.005 * f64::from(i);
            se_fixed_points(&mix, beta, t, 2000).unwrap().len() >= 3
        });
        assert!(found);
        // below beta1 there is exactly one
        for i in 0..20 {
            let t = 0.05 * f64::from(i) + 0.01;
            assert_eq!(se_fixed_points(&mix, 0.9 * b1, t, 2000).unwrap().len(), 1);
        }
    }

    #[test]
    fn sk_thresholds() {
        let sk = MixtureSpec::sk();
        let b1 = beta1(&sk).unwrap();
        assert!((b1 - 1.0).abs() <= 1e-3, "beta1 {b1}");
        let b2 = beta2(&sk).unwrap();
        assert!((b2 - 1.0).abs() <= 1e-3, "beta2 {b2}");
        assert_eq!(beta3(&sk, DEFAULT_C0).unwrap(), 0.5);
        let bc = beta_c_rs(&sk).unwrap();
        assert!((bc - 1.0).abs() <= 2e-3, "beta_c {bc}");
    }

    #[test]
    fn beta3_branches() {
        let m = MixtureSpec::pure(2).unwrap();
        assert!((beta3(&m, 0.25).unwrap() - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        let m = MixtureSpec::pure(3).unwrap();
        let want = 0.25 / (6.0 * 6561f64.ln()).sqrt();
        assert!((beta3(&m, 0.25).unwrap() - want).abs() < 1e-15);
        let tiny = MixtureSpec::new([(2, 1e-5), (3, 1e-5)]).unwrap();
        assert!(beta3(&tiny, 0.25).is_err());
    }

    #[test]
    fn threshold_orderings() {
        for mix in [
            MixtureSpec::new([(2, 0.5), (3, 0.2)]).unwrap(),
            MixtureSpec::new([(2, 0.3), (4, 0.5)]).unwrap(),
            MixtureSpec::pure(3).unwrap(),
        ] {
            let b1 = beta1(&mix).unwrap();
            let bc = beta_c_rs(&mix).unwrap();
            let b2 = beta2(&mix).unwrap();
            assert!(b1 >= mix.xi_d2(1.0).powf(-0.5) - 1e-6, "{mix}: lower bound");
            assert!(bc >= b1 - RS_TOL, "{mix}: beta_c {bc} < beta1 {b1}");
            let d20 = mix.xi_d2(0.0);
            if d20 > 0.0 {
                assert!(bc <= d20.powf(-0.5) + 2e-3);
                assert!(b2 <= d20.powf(-0.5) + 1e-3);
            }
        }
    }

    /// Independent dense scan over gamma: q = psi(g), phi'(q) = 1/psi'(g),
    /// using the sech-forms of 1-psi and psi'.
    fn beta1_oracle(spec: &MixtureSpec) -> f64 {
        let n = 1_000_000;
        let mut best = f64::INFINITY;
        for i in 0..n {
            let g = (1e-6f64.ln() + (60f64.ln() - 1e-6f64.ln()) * i as f64 / (n - 1) as f64).exp();
            let s = g.sqrt();
            let q = 1.0 - (-0.5 * g).exp() * expect_scaled(s, |v| 1.0 / v.cosh());
            let dpsi = (-0.5 * g).exp() * expect_scaled(s, |v| v.cosh().powi(-3));
            let r = 1.0 / (dpsi * spec.xi_d2(q));
            best = best.min(r);
        }
        best.sqrt()
    }

    #[test]
    fn beta1_pure3_against_dense_scan() {
        let m = MixtureSpec::pure(3).unwrap();
        let got = beta1(&m).unwrap();
        let want = beta1_oracle(&m);
        assert!((got - want).abs() <= 1e-4, "{got} vs {want}");
    }

    #[test]
    fn beta2_pure4_against_dense_grid() {
        let m = MixtureSpec::pure(4).unwrap();
        let got = beta2(&m).unwrap();
        // brute force: beta2 = min_q sqrt((log 2 - h(q)) / xi(q)) over a fine grid
        let n = 1_000_000;
        let mut best = f64::INFINITY;
        for i in 1..n {
            let q = i as f64 / n as f64;
            let v = ((std::f64::consts::LN_2 - entropy_unchecked(q)) / m.xi_at(q)).sqrt();
            best = best.min(v);
        }
        assert!((got - best).abs() <= 1e-4, "{got} vs {best}");
    }

    #[test]
    fn psi_star_limits_and_derivative() {
        let sk = MixtureSpec::sk();
        let beta = 0.6;
        let v0 = psi_star(&sk, beta, 0.0).unwrap();
        assert!((v0 - beta * beta * 0.25).abs() < 1e-14);
        let vinf = psi_star(&sk, beta, 500.0).unwrap();
        assert!((vinf - std::f64::consts::LN_2).abs() < 1e-9);
        for &t in &[0.3, 1.0, 2.5] {
            let h = 1e-4;
            let fd = (psi_star(&sk, beta, t + h).unwrap() - psi_star(&sk, beta, t - h).unwrap()) / (2.0 * h);
            let want = 0.5 * (1.0 - q_star(&sk, beta, t).unwrap());
            assert!((fd - want).abs() <= 1e-4, "t={t}: {fd} vs {want}");
        }
    }

    #[test]
    fn schedule() {
        let sk = MixtureSpec::sk();
        let s = q_schedule(&sk, 0.5, 0.5, 4).unwrap();
        assert_eq!(s.q.len(), 5);
        assert_eq!(s.q[0], 0.0);
        for w in s.q.windows(2) {
            assert!(w[1] >= w[0]);
        }
        // independent recursion oracle for the pinned table
        for (l, &q) in s.q.iter().enumerate() {
            let t = 0.5 * l as f64;
            let mut x = 0.0;
            for _ in 0..100_000 {
                let nx = psi_unchecked(0.25 * x + t);
                if (nx - x).abs() < 1e-15 {
                    x = nx;
                    break;
                }
                x = nx;
            }
            assert!((q - x).abs() < 1e-11);
        }
        let pinned = [0.0, 0.397_953, 0.594_639, 0.715_844, 0.796_345];
        for (q, want) in s.q.iter().zip(pinned) {
            assert!((q - want).abs() < 1e-6);
        }
        assert!(q_schedule(&sk, 0.5, 0.0, 4).is_err());
    }

    #[test]
    fn beta_dyn_sk_is_the_continuous_transition() {
        let b = beta_dyn(&MixtureSpec::sk()).unwrap().unwrap();
        assert!((b - 1.0).abs() < 0.02, "{b}");
    }

    /// Direct quadrature of E[cosh(lG) tanh^2(lG)] / E[cosh(lG)] on a
    /// trapezoid grid, with no change of measure.
    fn h_direct(lambda: f64) -> f64 {
        let h = 1e-3;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut g: f64 = -20.0;
        while g <= 20.0 {
            let w = (-0.5 * g * g).exp() * (lambda * g).cosh();
            num += w * (lambda * g).tanh().powi(2);
            den += w;
            g += h;
        }
        num / den
    }

    #[test]
    fn beta_dyn_pure3_against_double_grid() {
        let m = MixtureSpec::pure(3).unwrap();
        let got = beta_dyn(&m).unwrap().unwrap();
        // tabulate H on a lambda grid, then a 1e3 x 1e5 (beta, q) scan
        let lmax = 6.0;
        let nl = 20_000;
        let table: Vec<f64> = (0..=nl).map(|i| h_direct(lmax * i as f64 / nl as f64)).collect();
        let h_of = |l: f64| {
            let x = l / lmax * nl as f64;
            let i = (x.floor() as usize).min(nl - 1);
            let f = x - i as f64;
            table[i] * (1.0 - f) + table[i + 1] * f
        };
        let nq = 100_000;
        let mut oracle = None;
        'outer: for bi in 1..=1000 {
            let beta = 2.0 * bi as f64 / 1000.0;
            for qi in 1..=nq {
                let q = 1e-4 + (1.0 - 1e-4) * qi as f64 / nq as f64;
                if q - h_of(beta * m.xi_d1(q).sqrt()) <= 0.0 {
                    oracle = Some(beta);
                    break 'outer;
                }
            }
        }
        let oracle = oracle.expect("pure p=3 has a dynamical transition below 2");
        assert!((got - oracle).abs() <= 2.5e-3, "{got} vs {oracle}");
        // the shifted-measure form agrees with direct quadrature
        for &l in &[0.3, 1.0, 2.0, 3.0] {
            assert!((1.0 - dyn_h_complement(l) - h_direct(l)).abs() < 1e-9);
        }
    }
}
