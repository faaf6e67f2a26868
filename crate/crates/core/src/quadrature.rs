//! Expectations over a standard normal variable.
//!
//! Gauss-Hermite rules are exact for polynomials but converge slowly when the
//! integrand has poles close to the real axis, which is the case for
//! `tanh(gamma + sqrt(gamma) z)` once `gamma` is moderately large (the poles sit
//! at imaginary distance `pi / (2 sqrt(gamma))`). [`NormalExpectation`] uses the
//! Gauss-Hermite rule for small `gamma` and a step-adapted trapezoid rule, which
//! converges exponentially for analytic integrands, above that.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Default node count.
pub const DEFAULT_NODES: usize = 81;

/// Gauss-Hermite rule for `E[f(Z)]`, `Z ~ N(0, 1)`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Nodes and weights by Newton iteration on the orthonormal Hermite
    /// recurrence, then rescaled from the `exp(-x^2)` weight to the normal
    /// density.
    pub fn gauss_hermite(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z1.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[m - 1] = 0.0;
        }
        let sqrt_pi = PI.sqrt();
        let nodes = x.iter().rev().map(|&xi| xi * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().rev().map(|&wi| wi / sqrt_pi).collect();
        Self { nodes, weights }
    }

    /// Same rule from the eigen-decomposition of the Jacobi matrix of the
    /// probabilists' Hermite recurrence. Less accurate in the tiny outer
    /// weights, but stable for any node count.
    pub fn golub_welsch(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let jacobi =
            nalgebra::DMatrix::from_fn(
                n,
                n,
                |i, j| {
                    if i + 1 == j || j + 1 == i {
                        (i.max(j) as f64).sqrt()
                    } else {
                        0.0
                    }
                },
            );
        let eig = nalgebra::SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> =
            (0..n).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(Z)]` for standard normal `Z`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

/// The shared 81-node rule.
pub fn default_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| QuadratureRule::gauss_hermite(DEFAULT_NODES))
}

/// Above this signal level the trapezoid rule takes over from Gauss-Hermite.
pub const GH_MAX_SCALE: f64 = 0.7;

/// `E[f(s Z)]` for `Z ~ N(0,1)` and a scale `s >= 0`, where `f` is analytic
/// with singularities no closer than `pi/2` to the real axis.
pub fn expect_scaled(scale: f64, f: impl Fn(f64) -> f64) -> f64 {
    if scale <= GH_MAX_SCALE {
        return default_rule().expect(|z| f(scale * z));
    }
    // trapezoid in z; step resolves features of width 1/scale
    let h = 0.1 / scale;
    let half_width = 14.0;
    let steps = (half_width / h).ceil() as usize;
    let norm = h / (2.0 * PI).sqrt();
    let mut acc = f(0.0);
    for k in 1..=steps {
        let z = k as f64 * h;
        let dens = (-0.5 * z * z).exp();
        acc += dens * (f(scale * z) + f(-scale * z));
    }
    acc * norm
}

/// `E[f(gamma + sqrt(gamma) Z)]`, `Z ~ N(0,1)`, `gamma >= 0`.
pub fn expect_channel(gamma: f64, f: impl Fn(f64) -> f64) -> f64 {
    let s = gamma.sqrt();
    expect_scaled(s, |v| f(gamma + v))
}
