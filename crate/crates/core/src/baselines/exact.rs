//! Exact Gibbs measures by enumeration of all `2^n` configurations.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::batch::{Provenance, SampleBatch};
use crate::disorder::{all_energies, DisorderTensors, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::rng::{uniforms, Purpose};

/// Configurations per reduction block.
const BLOCK: usize = 4096;

/// `beta H(x)` for every configuration; configuration `c` has `x_i = +1`
/// exactly when bit `i` of `c` is set.
#[derive(Clone, Debug)]
pub struct EnergyTable {
    n: usize,
    beta: f64,
    scaled_energy: Vec<f64>,
}

fn spin(code: usize, i: usize) -> f64 {
    if code >> i & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

impl EnergyTable {
    pub fn new(g: &DisorderTensors, beta: f64) -> Result<Self> {
        let n = g.n();
        if n > DEFAULT_ENUMERATION_CAP {
            return Err(Error::CapExceeded { what: "enumeration dimension", value: n, cap: DEFAULT_ENUMERATION_CAP });
        }
        if !beta.is_finite() {
            return Err(Error::Domain(format!("beta = {beta}")));
        }
        let scaled_energy = all_energies(g).into_iter().map(|h| beta * h).collect();
        Ok(Self { n, beta, scaled_energy })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn scaled_energies(&self) -> &[f64] {
        &self.scaled_energy
    }

    fn log_weights(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        self.scaled_energy
            .par_iter()
            .enumerate()
            .map(|(c, &e)| e + (0..n).map(|i| y[i] * spin(c, i)).sum::<f64>())
            .collect()
    }

    fn check_tilt(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("tilt y has non-finite entries".into()));
        }
        Ok(())
    }

    /// Mean of the tilted measure, skipping the covariance.
    pub fn tilted_mean(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_tilt(y)?;
        let logw = self.log_weights(y);
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = self.n;
        let partials: Vec<(f64, Vec<f64>)> = logw
            .par_chunks(BLOCK)
            .enumerate()
            .map(|(b, chunk)| {
                let mut z = 0.0;
                let mut s = vec![0.0; n];
                for (k, &l) in chunk.iter().enumerate() {
                    let w = (l - top).exp();
                    let c = b * BLOCK + k;
                    z += w;
                    for (i, si) in s.iter_mut().enumerate() {
                        *si += w * spin(c, i);
                    }
                }
                (z, s)
            })
            .collect();
        let mut z = 0.0;
        let mut s = vec![0.0; n];
        for (pz, ps) in partials {
            z += pz;
            for (a, b) in s.iter_mut().zip(ps) {
                *a += b;
            }
        }
        Ok(s.into_iter().map(|v| v / z).collect())
    }

    /// Full tilted measure.
    pub fn tilted(&self, y: &[f64]) -> Result<ExactGibbs> {
        self.check_tilt(y)?;
        let n = self.n;
        let logw = self.log_weights(y);
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logw.iter().map(|&l| (l - top).exp()).collect();
        let partials: Vec<(f64, Vec<f64>, Vec<f64>)> = weights
            .par_chunks(BLOCK)
            .enumerate()
            .map(|(b, chunk)| {
                let mut z = 0.0;
                let mut s = vec![0.0; n];
                let mut ss = vec![0.0; n * n];
                let mut x = vec![0.0; n];
                for (k, &w) in chunk.iter().enumerate() {
                    let c = b * BLOCK + k;
                    z += w;
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi = spin(c, i);
                        s[i] += w * *xi;
                    }
                    for i in 0..n {
                        let wx = w * x[i];
                        for j in 0..n {
                            ss[i * n + j] += wx * x[j];
                        }
                    }
                }
                (z, s, ss)
            })
            .collect();
        let mut z = 0.0;
        let mut s = vec![0.0; n];
        let mut ss = vec![0.0; n * n];
        for (pz, ps, pss) in partials {
            z += pz;
            s.iter_mut().zip(ps).for_each(|(a, b)| *a += b);
            ss.iter_mut().zip(pss).for_each(|(a, b)| *a += b);
        }
        let mean: Vec<f64> = s.iter().map(|v| v / z).collect();
        let mut covariance = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                covariance[(i, j)] =
                    if i == j { 1.0 - mean[i] * mean[i] } else { ss[i * n + j] / z - mean[i] * mean[j] };
            }
        }
        let log_z = top + z.ln();
        let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
        Ok(ExactGibbs { n, beta: self.beta, y: y.to_vec(), log_partition: log_z, probs, mean, covariance })
    }
}

/// An exactly enumerated tilted Gibbs measure
/// `mu(x) = exp(beta H(x) + <y, x>) / Z`.
#[derive(Clone, Debug)]
pub struct ExactGibbs {
    pub n: usize,
    pub beta: f64,
    pub y: Vec<f64>,
    /// `log Z`.
    pub log_partition: f64,
    /// Probabilities indexed by configuration code.
    pub probs: Vec<f64>,
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

impl ExactGibbs {
    /// `E_mu[f(x)]` for a function of the configuration code.
    pub fn expect(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.probs.iter().enumerate().map(|(c, p)| p * f(c)).sum()
    }

    /// Spin vector of configuration `code`.
    pub fn config(&self, code: usize) -> Vec<i8> {
        (0..self.n).map(|i| if code >> i & 1 == 1 { 1 } else { -1 }).collect()
    }

    /// Second-moment matrix `E[x x^T]`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        let mut m = self.covariance.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] += self.mean[i] * self.mean[j];
            }
        }
        m
    }
}

/// Exact tilted Gibbs measure of `g` at inverse temperature `beta`.
pub fn exact_gibbs(g: &DisorderTensors, beta: f64, y: &[f64]) -> Result<ExactGibbs> {
    EnergyTable::new(g, beta)?.tilted(y)
}

/// `m` i.i.d. draws by inverse CDF over the configuration table. Draw `k`
/// uses uniform `k` of the stream, so equal seeds couple batches drawn from
/// different measures.
pub fn exact_sample(dist: &ExactGibbs, m: usize, seed: u64) -> SampleBatch {
    exact_sample_stream(dist, m, seed, Purpose::Auxiliary(1))
}

pub fn exact_sample_stream(dist: &ExactGibbs, m: usize, seed: u64, purpose: Purpose) -> SampleBatch {
    let mut cdf = Vec::with_capacity(dist.probs.len());
    let mut acc = 0.0;
    for p in &dist.probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let samples = uniforms(seed, purpose, 0, m)
        .into_iter()
        .map(|u| {
            let target = u * total;
            let code = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
            dist.config(code)
        })
        .collect();
    SampleBatch::new(dist.n, samples, Provenance::Exact, seed).expect("configurations are spins")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{gen_random, CouplingTensor};
    use crate::mixture::MixtureSpec;
    use crate::rng::normals;

    #[test]
    fn infinite_temperature() {
        let g = gen_random(&MixtureSpec::sk(), 6, 1).unwrap();
        let d = exact_gibbs(&g, 0.0, &[0.0; 6]).unwrap();
        assert!(d.mean.iter().all(|m| m.abs() < 1e-15));
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d.covariance[(i, j)] - want).abs() < 1e-14);
            }
        }
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let y = normals(1, Purpose::Auxiliary(3), 0, 6);
        let d = exact_gibbs(&g, 0.0, &y).unwrap();
        for i in 0..6 {
            assert!((d.mean[i] - y[i].tanh()).abs() < 1e-14);
        }
        let table = EnergyTable::new(&g, 0.0).unwrap();
        assert_eq!(table.tilted_mean(&y).unwrap(), d.mean);
    }

    #[test]
    fn hand_enumerated_pair() {
        // G = [[0.3, -1.2], [0.5, 0.7]], c_2 = 1/sqrt 2, n = 2
        let mut g = gen_random(&MixtureSpec::sk(), 2, 0).unwrap();
        let t: &mut CouplingTensor = first_tensor(&mut g);
        t.data = vec![0.3, -1.2, 0.5, 0.7];
        let beta = 0.9;
        let y = [0.2, -0.4];
        let scale = 0.5f64.sqrt() / 2f64.sqrt();
        // H(x) = scale (0.3 + 0.7 + (-1.2 + 0.5) x1 x2)
        let mut z = 0.0;
        let mut m = [0.0; 2];
        for &(a, b) in &[(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let h = scale * (1.0 + (-0.7) * a * b);
            let w = f64::exp(beta * h + y[0] * a + y[1] * b);
            z += w;
            m[0] += w * a;
            m[1] += w * b;
        }
        let d = exact_gibbs(&g, beta, &y).unwrap();
        assert!((d.mean[0] - m[0] / z).abs() < 1e-14);
        assert!((d.mean[1] - m[1] / z).abs() < 1e-14);
        assert!((d.log_partition - z.ln()).abs() < 1e-13);
    }

    fn first_tensor(g: &mut crate::disorder::DisorderTensors) -> &mut CouplingTensor {
        g.tensors_mut().first_mut().unwrap()
    }

    #[test]
    fn sampling() {
        let g = gen_random(&MixtureSpec::sk(), 4, 2).unwrap();
        let d = exact_gibbs(&g, 0.0, &[0.0; 4]).unwrap();
        let b = exact_sample(&d, 20_000, 5);
        for i in 0..4 {
            let mean = b.samples().iter().map(|x| f64::from(x[i])).sum::<f64>() / 20_000.0;
            assert!(mean.abs() <= 3.0 / 20_000f64.sqrt());
        }
        // strong field collapses onto the argmax
        let d = exact_gibbs(&g, 5.0, &[30.0, -30.0, 30.0, 30.0]).unwrap();
        let b = exact_sample(&d, 100, 1);
        assert!(b.samples().iter().all(|x| x == &vec![1, -1, 1, 1]));
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        let g = gen_random(&MixtureSpec::sk(), 4, 3).unwrap();
        let d = exact_gibbs(&g, 1.0, &[0.3, 0.0, -0.2, 0.1]).unwrap();
        let m = 100_000;
        let b = exact_sample(&d, m, 8);
        let mut counts = [0usize; 16];
        for x in b.samples() {
            let code: usize = x.iter().enumerate().map(|(i, &s)| if s == 1 { 1 << i } else { 0 }).sum();
            counts[code] += 1;
        }
        let chi2: f64 =
            counts.iter().zip(&d.probs).map(|(&c, &p)| (c as f64 - m as f64 * p).powi(2) / (m as f64 * p)).sum();
        // 99th percentile of chi-square with 15 degrees of freedom
        assert!(chi2 < 30.578, "{chi2}");
    }

    #[test]
    fn log_partition_derivative_is_mean_energy() {
        let g = gen_random(&MixtureSpec::sk(), 10, 4).unwrap();
        let beta = 0.7;
        let h = 1e-5;
        let lz = |b: f64| exact_gibbs(&g, b, &[0.0; 10]).unwrap().log_partition;
        let fd = (lz(beta + h) - lz(beta - h)) / (2.0 * h);
        let table = EnergyTable::new(&g, 1.0).unwrap();
        let d = exact_gibbs(&g, beta, &[0.0; 10]).unwrap();
        let mean_h = d.expect(|c| table.scaled_energies()[c]);
        assert!((fd - mean_h).abs() < 1e-8, "{fd} vs {mean_h}");
    }

    #[test]
    fn cap() {
        let g = gen_random(&MixtureSpec::sk(), 21, 4).unwrap();
        assert!(exact_gibbs(&g, 0.1, &[0.0; 21]).is_err());
    }
}
