//! Scalar Rademacher channel `V = gamma X + sqrt(gamma) Z`: the overlap
//! function `psi`, its inverse `phi`, and the mutual information `I(gamma)`.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::quadrature::{expect_channel, expect_scaled};

/// Above this signal level `1 - psi` is below `1e-44` and the closed-form
/// tail is used.
pub const ASYMPTOTIC_GAMMA: f64 = 200.0;

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("gamma = {gamma}, need gamma >= 0")))
    }
}

/// `psi(gamma) = E[tanh(gamma + sqrt(gamma) Z)]`.
pub fn psi(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(psi_unchecked(gamma))
}

pub(crate) fn psi_unchecked(gamma: f64) -> f64 {
    if gamma == 0.0 {
        0.0
    } else if gamma > ASYMPTOTIC_GAMMA {
        1.0 - asymptotic_tail(gamma)
    } else {
        expect_channel(gamma, f64::tanh)
    }
}

/// `sqrt(pi / (2 gamma)) exp(-gamma / 2)`, the leading term of `1 - psi`.
fn asymptotic_tail(gamma: f64) -> f64 {
    (PI / (2.0 * gamma)).sqrt() * (-0.5 * gamma).exp()
}

/// `1 - psi(gamma)` without cancellation, through the identity
/// `1 - psi(gamma) = exp(-gamma/2) E[sech(sqrt(gamma) Z)]`.
pub fn psi_complement(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(psi_complement_unchecked(gamma))
}

pub(crate) fn psi_complement_unchecked(gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 1.0;
    }
    (-0.5 * gamma).exp() * expect_scaled(gamma.sqrt(), |v| 1.0 / v.cosh())
}

/// `psi'(gamma)` in Gaussian-integration-by-parts form,
/// `E[2 tanh tanh' + tanh'^2 + tanh tanh''](V)`.
pub fn psi_prime(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(psi_prime_unchecked(gamma))
}

pub(crate) fn psi_prime_unchecked(gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 1.0;
    }
    if gamma > ASYMPTOTIC_GAMMA {
        return 0.5 * asymptotic_tail(gamma) * (1.0 + 1.0 / gamma);
    }
    // with t = tanh v the integrand factors as sech^2(v) (1 - t) (1 + 3t)
    expect_channel(gamma, |v| {
        let t = v.tanh();
        let s = 1.0 / v.cosh();
        s * s * (1.0 - t) * (1.0 + 3.0 * t)
    })
}

/// `phi = psi^{-1}` on `[0, 1)`.
pub fn phi(q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Domain(format!("phi(q) needs 0 <= q < 1, got {q}")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    // bracket, then Newton with bisection fallback
    let mut lo = 0.0;
    let mut hi = 1.0;
    while psi_unchecked(hi) < q {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::numeric("phi", format!("cannot bracket q = {q}")));
        }
    }
    // residual on the complement side keeps precision as q -> 1
    let use_complement = q > 0.5;
    let target_c = 1.0 - q;
    let residual = |g: f64| {
        if use_complement {
            target_c - psi_complement_unchecked(g)
        } else {
            psi_unchecked(g) - q
        }
    };
    let mut g = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = residual(g);
        if r == 0.0 {
            return Ok(g);
        }
        if r > 0.0 {
            hi = g;
        } else {
            lo = g;
        }
        let d = psi_prime_unchecked(g);
        let newton = g - r / d;
        let next = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let settled = (next - g).abs() <= 1e-14 * g.max(1e-300) || hi - lo <= 1e-15 * hi;
        if settled && (psi_unchecked(next) - q).abs() <= 1e-11 {
            return Ok(next);
        }
        g = next;
    }
    if (psi_unchecked(g) - q).abs() <= 1e-11 {
        Ok(g)
    } else {
        Err(Error::NoConvergence(format!("phi({q}) after 200 iterations")))
    }
}

/// `phi'(q) = 1 / psi'(phi(q))`.
pub fn phi_prime(q: f64) -> Result<f64> {
    let g = phi(q)?;
    Ok(1.0 / psi_prime_unchecked(g))
}

/// `I(gamma) = gamma - E log cosh(gamma + sqrt(gamma) Z)`, clamped to
/// `[0, log 2]`.
pub fn mutual_info_scalar(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(mutual_info_unchecked(gamma))
}

pub(crate) fn mutual_info_unchecked(gamma: f64) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    if gamma > ASYMPTOTIC_GAMMA {
        return LN_2;
    }
    let elc = expect_channel(gamma, log_cosh);
    (gamma - elc).clamp(0.0, LN_2)
}

pub(crate) fn log_cosh(v: f64) -> f64 {
    let a = v.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}
