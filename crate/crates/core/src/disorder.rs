//! Gaussian disorder tensors and the Hamiltonian they define.
//!
//! Tensors are stored raw (not symmetrized) as flat row-major vectors. With
//! `c_p` the square root of the stored mixture coefficient,
//!
//! `H(x) = sum_p c_p n^{-(p-1)/2} <G^(p), x^{(x)p}>`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mixture::{MixtureSpec, DEFAULT_TENSOR_DEGREE_CAP};
use crate::rng::{fill_normals, uniforms, Purpose};

/// Default cap on `sum_p n^p` stored entries.
pub const DEFAULT_TENSOR_BUDGET: usize = 200_000_000;
/// Default cap on `n` for dense Hessians.
pub const DEFAULT_HESSIAN_CAP: usize = 512;
/// Default cap on `n` for `2^n` enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Rows handled per parallel task in weighted row sums. Fixed so the
/// reduction order never depends on the thread pool.
const ROW_CHUNK: usize = 64;
/// Below this many entries contractions run on the calling thread. The
/// arithmetic is the same either way.
const PARALLEL_MIN: usize = 1 << 15;

/// How a disorder instance was produced.
#[derive(Clone, Debug, PartialEq)]
pub enum DisorderKind {
    Random,
    Planted { beta: f64, spins: Vec<i8> },
    Interpolated { s: f64, seed0: u64, seed1: u64 },
}

impl DisorderKind {
    fn tag(&self) -> u8 {
        match self {
            DisorderKind::Random => 0,
            DisorderKind::Planted { .. } => 1,
            DisorderKind::Interpolated { .. } => 2,
        }
    }
}

/// One raw tensor `G^(p)` of shape `n^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTensor {
    pub degree: u32,
    /// `c_p n^{-(p-1)/2}`.
    pub scale: f64,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisorderTensors {
    n: usize,
    spec: MixtureSpec,
    seed: u64,
    kind: DisorderKind,
    tensors: Vec<CouplingTensor>,
}

fn check_shape(spec: &MixtureSpec, n: usize, budget: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let pmax = spec.max_degree();
    if pmax > DEFAULT_TENSOR_DEGREE_CAP {
        return Err(Error::UnsupportedOrder(pmax));
    }
    let mut total: usize = 0;
    for p in spec.degrees() {
        let count = (n as u128).pow(p);
        total = total.saturating_add(usize::try_from(count).unwrap_or(usize::MAX));
    }
    if total > budget {
        return Err(Error::CapExceeded { what: "tensor entries", value: total, cap: budget });
    }
    Ok(())
}

fn scale_for(spec: &MixtureSpec, p: u32, n: usize) -> f64 {
    spec.coeff(p) * (n as f64).powf(-(f64::from(p) - 1.0) / 2.0)
}

fn noise(spec: &MixtureSpec, n: usize, seed: u64) -> Vec<CouplingTensor> {
    spec.degrees()
        .map(|p| {
            let len = n.pow(p);
            let mut data = vec![0.0; len];
            let chunk = crate::rng::BLOCK * 16;
            data.par_chunks_mut(chunk).enumerate().for_each(|(c, out)| {
                fill_normals(seed, Purpose::Disorder(p), c * chunk, out);
            });
            CouplingTensor { degree: p, scale: scale_for(spec, p, n), data }
        })
        .collect()
}

/// `x^{(x)k}` flattened row-major; length `n^k`, `[1.0]` for `k = 0`.
pub fn tensor_power(x: &[f64], k: u32) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..k {
        let mut next = Vec::with_capacity(out.len() * x.len());
        for &a in &out {
            next.extend(x.iter().map(|&b| a * b));
        }
        out = next;
    }
    out
}

/// `v[r] = sum_b data[r * |w| + b] w[b]` for every row `r`.
fn contract_trailing(data: &[f64], w: &[f64]) -> Vec<f64> {
    if w.len() == 1 {
        let s = w[0];
        return data.iter().map(|&d| d * s).collect();
    }
    let dot = |row: &[f64]| -> f64 { row.iter().zip(w).map(|(a, b)| a * b).sum() };
    if data.len() < PARALLEL_MIN {
        data.chunks(w.len()).map(dot).collect()
    } else {
        data.par_chunks(w.len()).map(dot).collect()
    }
}

/// `out[j] = sum_a weights[a] v[a * width + j]`, reduced over fixed row chunks.
fn weighted_row_sum(v: &[f64], weights: &[f64], width: usize) -> Vec<f64> {
    debug_assert_eq!(v.len(), weights.len() * width);
    let partial = |(block, ws): (&[f64], &[f64])| -> Vec<f64> {
        let mut acc = vec![0.0; width];
        for (row, &w) in block.chunks(width).zip(ws) {
            if w != 0.0 {
                for (a, &r) in acc.iter_mut().zip(row) {
                    *a += w * r;
                }
            }
        }
        acc
    };
    let partials: Vec<Vec<f64>> = if v.len() < PARALLEL_MIN {
        v.chunks(width * ROW_CHUNK).zip(weights.chunks(ROW_CHUNK)).map(partial).collect()
    } else {
        v.par_chunks(width * ROW_CHUNK).zip(weights.par_chunks(ROW_CHUNK)).map(partial).collect()
    };
    let mut out = vec![0.0; width];
    for part in partials {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    out
}

/// `(G + G^T) x` in one sequential pass, for matrices below the parallel cutoff.
fn pair_grad_small(data: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; n];
    for (a, row) in data.chunks_exact(n).enumerate() {
        let xa = x[a];
        let mut dot = 0.0;
        for ((&g, &xb), c) in row.iter().zip(x).zip(cols.iter_mut()) {
            dot += g * xb;
            *c += xa * g;
        }
        rows[a] = dot;
    }
    rows.iter_mut().zip(cols).for_each(|(r, c)| *r += c);
    rows
}

impl CouplingTensor {
    /// `<G, x^{(x)p}>` without the scale.
    pub fn contract_full(&self, x: &[f64]) -> f64 {
        let v = contract_trailing(&self.data, &tensor_power(x, self.degree - 1));
        v.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Gradient of `<G, x^{(x)p}>` without the scale.
    pub fn contract_grad(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let p = self.degree;
        if p == 2 && self.data.len() < PARALLEL_MIN {
            return pair_grad_small(&self.data, x);
        }
        let mut out = vec![0.0; n];
        for slot in 0..p {
            let left = tensor_power(x, slot);
            let part = if slot + 1 == p {
                weighted_row_sum(&self.data, &left, n)
            } else {
                let v = contract_trailing(&self.data, &tensor_power(x, p - 1 - slot));
                weighted_row_sum(&v, &left, n)
            };
            for (o, q) in out.iter_mut().zip(part) {
                *o += q;
            }
        }
        out
    }

    /// Hessian of `<G, x^{(x)p}>` without the scale, symmetric by assembly.
    pub fn contract_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let p = self.degree;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for s in 0..p {
            for r in (s + 1)..p {
                let right = tensor_power(x, p - 1 - r);
                // v over (a, i, b, j)
                let v = contract_trailing(&self.data, &right);
                let left = tensor_power(x, s);
                let gap = r - s - 1;
                let width = n * n.pow(gap) * n;
                // w over (i, b, j)
                let w = weighted_row_sum(&v, &left, width);
                let mid = tensor_power(x, gap);
                let inner = mid.len() * n;
                let mut m = DMatrix::<f64>::zeros(n, n);
                for i in 0..n {
                    let block = &w[i * inner..(i + 1) * inner];
                    for (b, &mb) in mid.iter().enumerate() {
                        let row = &block[b * n..(b + 1) * n];
                        for j in 0..n {
                            m[(i, j)] += mb * row[j];
                        }
                    }
                }
                h += &m + m.transpose();
            }
        }
        h
    }
}

impl DisorderTensors {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn spec(&self) -> &MixtureSpec {
        &self.spec
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn kind(&self) -> &DisorderKind {
        &self.kind
    }
    pub fn tensors(&self) -> &[CouplingTensor] {
        &self.tensors
    }
    /// `-G`, which has the same law as `G`.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        for t in &mut out.tensors {
            t.data.iter_mut().for_each(|v| *v = -*v);
        }
        out
    }
    #[cfg(test)]
    pub(crate) fn tensors_mut(&mut self) -> &mut [CouplingTensor] {
        &mut self.tensors
    }
    pub fn tensor(&self, p: u32) -> Option<&CouplingTensor> {
        self.tensors.iter().find(|t| t.degree == p)
    }
    /// Planted spins, if any.
    pub fn planted(&self) -> Option<&[i8]> {
        match &self.kind {
            DisorderKind::Planted { spins, .. } => Some(spins),
            _ => None,
        }
    }
    pub fn entry_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: x.len() });
        }
        Ok(())
    }

    /// `H(x)`.
    pub fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.hamiltonian_unchecked(x))
    }

    pub(crate) fn hamiltonian_unchecked(&self, x: &[f64]) -> f64 {
        self.tensors.iter().map(|t| t.scale * t.contract_full(x)).sum()
    }

    /// `grad H(m)`.
    pub fn grad(&self, m: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(m)?;
        Ok(self.grad_unchecked(m))
    }

    /// `(grad H(m), H(m))`, the value from Euler's identity
    /// `<x, grad <G, x^{(x)p}>> = p <G, x^{(x)p}>` per degree.
    pub(crate) fn grad_and_value_unchecked(&self, m: &[f64]) -> (Vec<f64>, f64) {
        let mut out = vec![0.0; self.n];
        let mut value = 0.0;
        for t in &self.tensors {
            let g = t.contract_grad(m);
            let dot: f64 = g.iter().zip(m).map(|(a, b)| a * b).sum();
            value += t.scale * dot / f64::from(t.degree);
            for (o, v) in out.iter_mut().zip(g) {
                *o += t.scale * v;
            }
        }
        (out, value)
    }

    pub(crate) fn grad_unchecked(&self, m: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for t in &self.tensors {
            let g = t.contract_grad(m);
            for (o, v) in out.iter_mut().zip(g) {
                *o += t.scale * v;
            }
        }
        out
    }

    /// Dense Hessian of `H` at `m`, subject to `cap` on `n`.
    pub fn hessian_with_cap(&self, m: &[f64], cap: usize) -> Result<DMatrix<f64>> {
        self.check_dim(m)?;
        if self.n > cap {
            return Err(Error::CapExceeded { what: "Hessian dimension", value: self.n, cap });
        }
        let mut h = DMatrix::<f64>::zeros(self.n, self.n);
        for t in &self.tensors {
            h += t.contract_hessian(m) * t.scale;
        }
        Ok(h)
    }

    pub fn hessian(&self, m: &[f64]) -> Result<DMatrix<f64>> {
        self.hessian_with_cap(m, DEFAULT_HESSIAN_CAP)
    }

    /// `Z = 2^{-n} sum_x exp(beta H(x) - n beta^2 xi(1) / 2)` by enumeration.
    pub fn partition_rescaled(&self, beta: f64) -> Result<f64> {
        if self.n > DEFAULT_ENUMERATION_CAP {
            return Err(Error::CapExceeded {
                what: "enumeration dimension",
                value: self.n,
                cap: DEFAULT_ENUMERATION_CAP,
            });
        }
        if beta == 0.0 {
            return Ok(1.0);
        }
        let energies = all_energies(self);
        let shift = self.n as f64 * beta * beta * self.spec.xi_at(1.0) / 2.0;
        let logs: Vec<f64> = energies.iter().map(|&h| beta * h - shift).collect();
        let lse = log_sum_exp(&logs);
        Ok((lse - self.n as f64 * std::f64::consts::LN_2).exp())
    }
}

/// Spin configuration with index `code`: bit `i` set means `x_i = +1`.
pub fn config_from_code(code: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| if code >> i & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// `H(x)` for all `2^n` configurations, indexed by [`config_from_code`].
pub fn all_energies(g: &DisorderTensors) -> Vec<f64> {
    let n = g.n();
    (0..1usize << n).into_par_iter().map(|code| g.hamiltonian_unchecked(&config_from_code(code, n))).collect()
}

/// Sequential log-sum-exp.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&a| (a - m).exp()).sum::<f64>().ln()
}

/// Tensors of i.i.d. standard normals.
pub fn gen_random(spec: &MixtureSpec, n: usize, seed: u64) -> Result<DisorderTensors> {
    gen_random_with_budget(spec, n, seed, DEFAULT_TENSOR_BUDGET)
}

pub fn gen_random_with_budget(spec: &MixtureSpec, n: usize, seed: u64, budget: usize) -> Result<DisorderTensors> {
    check_shape(spec, n, budget)?;
    Ok(DisorderTensors { n, spec: spec.clone(), seed, kind: DisorderKind::Random, tensors: noise(spec, n, seed) })
}

/// Uniform random spins from the planted stream of `seed`.
pub fn draw_planted_spins(n: usize, seed: u64) -> Vec<i8> {
    uniforms(seed, Purpose::Planted, 0, n).into_iter().map(|u| if u < 0.5 { 1 } else { -1 }).collect()
}

/// `G^(p) = beta c_p n^{-(p-1)/2} x^{(x)p} + W^(p)`, with `W` the noise that
/// [`gen_random`] draws for the same seed.
pub fn gen_planted(spec: &MixtureSpec, n: usize, beta: f64, spins: &[i8], seed: u64) -> Result<DisorderTensors> {
    if spins.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: spins.len() });
    }
    if spins.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::Domain("planted vector must have entries in {-1, +1}".into()));
    }
    if !beta.is_finite() {
        return Err(Error::Domain(format!("beta = {beta}")));
    }
    let mut g = gen_random(spec, n, seed)?;
    let x: Vec<f64> = spins.iter().map(|&s| f64::from(s)).collect();
    for t in &mut g.tensors {
        let spike = beta * t.scale;
        if spike != 0.0 {
            let outer = tensor_power(&x, t.degree);
            t.data.par_iter_mut().zip(outer.par_iter()).for_each(|(d, &o)| *d += spike * o);
        }
    }
    g.kind = DisorderKind::Planted { beta, spins: spins.to_vec() };
    Ok(g)
}

/// `G_s = sqrt(1 - s^2) G_0 + s G_1`.
pub fn interpolate(g0: &DisorderTensors, g1: &DisorderTensors, s: f64) -> Result<DisorderTensors> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("interpolation s = {s} outside [0, 1]")));
    }
    if g0.n != g1.n {
        return Err(Error::DimensionMismatch { expected: g0.n, got: g1.n });
    }
    if g0.spec != g1.spec {
        return Err(Error::InvalidMixture("interpolated instances need the same mixture".into()));
    }
    let kind = DisorderKind::Interpolated { s, seed0: g0.seed, seed1: g1.seed };
    if s == 0.0 {
        return Ok(DisorderTensors { kind, ..g0.clone() });
    }
    if s == 1.0 {
        return Ok(DisorderTensors { kind, ..g1.clone() });
    }
    let a = (1.0 - s * s).sqrt();
    let tensors = g0
        .tensors
        .iter()
        .zip(&g1.tensors)
        .map(|(t0, t1)| CouplingTensor {
            degree: t0.degree,
            scale: t0.scale,
            data: t0.data.par_iter().zip(&t1.data).map(|(x, y)| a * x + s * y).collect(),
        })
        .collect();
    Ok(DisorderTensors { n: g0.n, spec: g0.spec.clone(), seed: g0.seed, kind, tensors })
}

const TENSOR_MAGIC: &[u8; 5] = b"GLTN1";

/// Writes the GLTN1 format.
///
/// Layout (little-endian): magic, `n: u32`, `P: u32`, `c_p^2: f64` for
/// `p = 2..=P`, `seed: u64`, kind tag `u8`; a planted instance then stores
/// `beta: f64` and `n` spins as `i8`, an interpolated one `s: f64`,
/// `seed0: u64`, `seed1: u64`. Tensors follow for every `p` with nonzero
/// coefficient, in increasing `p`, as `n^p` row-major `f64`.
pub fn write_tensors(g: &DisorderTensors, w: &mut impl Write) -> Result<()> {
    let pmax = g.spec.max_degree();
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(g.n as u32).to_le_bytes())?;
    w.write_all(&pmax.to_le_bytes())?;
    for p in 2..=pmax {
        w.write_all(&g.spec.coeff_sq(p).to_le_bytes())?;
    }
    w.write_all(&g.seed.to_le_bytes())?;
    w.write_all(&[g.kind.tag()])?;
    match &g.kind {
        DisorderKind::Random => {}
        DisorderKind::Planted { beta, spins } => {
            w.write_all(&beta.to_le_bytes())?;
            let bytes: Vec<u8> = spins.iter().map(|&s| s as u8).collect();
            w.write_all(&bytes)?;
        }
        DisorderKind::Interpolated { s, seed0, seed1 } => {
            w.write_all(&s.to_le_bytes())?;
            w.write_all(&seed0.to_le_bytes())?;
            w.write_all(&seed1.to_le_bytes())?;
        }
    }
    let mut buf = Vec::new();
    for t in &g.tensors {
        buf.clear();
        buf.reserve(t.data.len() * 8);
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated tensor file: {e}")))?;
    Ok(b)
}

/// Reads the GLTN1 format written by [`write_tensors`].
pub fn read_tensors(r: &mut impl Read) -> Result<DisorderTensors> {
    let magic: [u8; 5] = read_array(r)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format("bad magic, expected GLTN1".into()));
    }
    let n = u32::from_le_bytes(read_array(r)?) as usize;
    let pmax = u32::from_le_bytes(read_array(r)?);
    if pmax < 2 {
        return Err(Error::Format(format!("max degree {pmax} < 2")));
    }
    let mut terms = Vec::new();
    for p in 2..=pmax {
        terms.push((p, f64::from_le_bytes(read_array(r)?)));
    }
    let spec = MixtureSpec::new(terms)?;
    check_shape(&spec, n, DEFAULT_TENSOR_BUDGET)?;
    let seed = u64::from_le_bytes(read_array(r)?);
    let [tag] = read_array::<1>(r)?;
    let kind = match tag {
        0 => DisorderKind::Random,
        1 => {
            let beta = f64::from_le_bytes(read_array(r)?);
            let mut bytes = vec![0u8; n];
            r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated planted spins: {e}")))?;
            let spins: Vec<i8> = bytes.into_iter().map(|b| b as i8).collect();
            if spins.iter().any(|&s| s != 1 && s != -1) {
                return Err(Error::Format("planted spins not in {-1, +1}".into()));
            }
            DisorderKind::Planted { beta, spins }
        }
        2 => DisorderKind::Interpolated {
            s: f64::from_le_bytes(read_array(r)?),
            seed0: u64::from_le_bytes(read_array(r)?),
            seed1: u64::from_le_bytes(read_array(r)?),
        },
        other => return Err(Error::Format(format!("unknown kind tag {other}"))),
    };
    let mut tensors = Vec::new();
    for p in spec.degrees() {
        let len = n.pow(p);
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated degree-{p} tensor: {e}")))?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push(CouplingTensor { degree: p, scale: scale_for(&spec, p, n), data });
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::Format("trailing bytes after tensors".into()));
    }
    Ok(DisorderTensors { n, spec, seed, kind, tensors })
}

pub fn save_tensors(g: &DisorderTensors, path: &std::path::Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tensors(g, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_tensors(path: &std::path::Path) -> Result<DisorderTensors> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_tensors(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normals;

    fn rand_vec(n: usize, seed: u64, amp: f64) -> Vec<f64> {
        normals(seed, Purpose::Auxiliary(77), 0, n).into_iter().map(|v| amp * v.tanh()).collect()
    }

    /// Naive nested-loop evaluation straight from the definition.
    fn naive_h(g: &DisorderTensors, x: &[f64]) -> f64 {
        let n = g.n();
        let mut total = 0.0;
        for t in g.tensors() {
            let p = t.degree as usize;
            let mut acc = 0.0;
            for (flat, &v) in t.data.iter().enumerate() {
                let mut prod = v;
                let mut rest = flat;
                for _ in 0..p {
                    prod *= x[rest % n];
                    rest /= n;
                }
                acc += prod;
            }
            total += t.scale * acc;
        }
        total
    }

    #[test]
    fn determinism_and_seeds() {
        let sk = MixtureSpec::sk();
        let a = gen_random(&sk, 2, 5).unwrap();
        let b = gen_random(&sk, 2, 5).unwrap();
        assert_eq!(a.tensors()[0].data.len(), 4);
        assert_eq!(
            a.tensors()[0].data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.tensors()[0].data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let c = gen_random(&sk, 2, 6).unwrap();
        assert_ne!(a.tensors()[0].data[0], c.tensors()[0].data[0]);
    }

    #[test]
    fn thread_count_invariance() {
        let spec = MixtureSpec::new([(2, 0.5), (3, 0.3)]).unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let x = rand_vec(40, 3, 0.8);
        let (g1, h1, d1) = pool1.install(|| {
            let g = gen_random(&spec, 40, 9).unwrap();
            let h = g.hamiltonian(&x).unwrap();
            let d = g.grad(&x).unwrap();
            (g, h, d)
        });
        let (g4, h4, d4) = pool4.install(|| {
            let g = gen_random(&spec, 40, 9).unwrap();
            let h = g.hamiltonian(&x).unwrap();
            let d = g.grad(&x).unwrap();
            (g, h, d)
        });
        assert_eq!(g1, g4);
        assert_eq!(h1.to_bits(), h4.to_bits());
        assert_eq!(d1, d4);
    }

    #[test]
    fn normality() {
        let g = gen_random(&MixtureSpec::sk(), 1000, 1).unwrap();
        let d = &g.tensors()[0].data;
        let c = d.len() as f64;
        let mean = d.iter().sum::<f64>() / c;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
        assert!(mean.abs() <= 4.0 / c.sqrt());
        assert!((0.99..=1.01).contains(&var), "{var}");
    }

    #[test]
    fn budget_and_degree_caps() {
        let sk = MixtureSpec::sk();
        assert!(matches!(gen_random_with_budget(&sk, 100, 0, 9_999), Err(Error::CapExceeded { .. })));
        assert!(gen_random(&sk, 0, 0).is_err());
        let p5 = MixtureSpec::pure(5).unwrap();
        assert!(matches!(gen_random(&p5, 3, 0), Err(Error::UnsupportedOrder(5))));
    }

    #[test]
    fn planted_basics() {
        let sk = MixtureSpec::sk();
        let spins = draw_planted_spins(30, 4);
        let r = gen_random(&sk, 30, 11).unwrap();
        let p0 = gen_planted(&sk, 30, 0.0, &spins, 11).unwrap();
        assert_eq!(r.tensors(), p0.tensors());
        let one = gen_planted(&sk, 1, 0.7, &[1], 3).unwrap();
        let w = gen_random(&sk, 1, 3).unwrap().tensors()[0].data[0];
        let want = 0.7 / 2f64.sqrt() + w;
        assert!((one.tensors()[0].data[0] - want).abs() < 1e-15);
        assert!(gen_planted(&sk, 2, 1.0, &[1, 0], 3).is_err());
        assert!(gen_planted(&sk, 2, 1.0, &[1], 3).is_err());
    }

    #[test]
    fn planted_spike_mean() {
        // Monte Carlo over seeds of a diagonal entry at n = 3, p = 3
        let spec = MixtureSpec::pure(3).unwrap();
        let beta = 1.2;
        let n = 3;
        let reps = 10_000;
        let vals: Vec<f64> =
            (0..reps).map(|s| gen_planted(&spec, n, beta, &[1, -1, 1], s).unwrap().tensors()[0].data[0]).collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        let want = beta * (n as f64).powf(-1.0);
        assert!((mean - want).abs() <= 5.0 * sd / (reps as f64).sqrt());
    }

    #[test]
    fn interpolation() {
        let sk = MixtureSpec::sk();
        let g0 = gen_random(&sk, 400, 1).unwrap();
        let g1 = gen_random(&sk, 400, 2).unwrap();
        assert_eq!(interpolate(&g0, &g1, 0.0).unwrap().tensors(), g0.tensors());
        assert_eq!(interpolate(&g0, &g1, 1.0).unwrap().tensors(), g1.tensors());
        let gs = interpolate(&g0, &g1, 0.6).unwrap();
        let d = &gs.tensors()[0].data;
        let var = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        assert!((var - 1.0).abs() < 0.02);
        let other = gen_random(&sk, 10, 1).unwrap();
        assert!(interpolate(&g0, &other, 0.5).is_err());
        assert!(interpolate(&g0, &g1, 1.5).is_err());
    }

    #[test]
    fn hamiltonian_matches_naive() {
        let spec = MixtureSpec::new([(2, 0.5), (3, 0.25), (4, 0.1)]).unwrap();
        let g = gen_random(&spec, 6, 21).unwrap();
        let x = rand_vec(6, 1, 0.9);
        assert!((g.hamiltonian(&x).unwrap() - naive_h(&g, &x)).abs() < 1e-12);
        assert_eq!(g.hamiltonian(&[0.0; 6]).unwrap(), 0.0);
        assert!(g.hamiltonian(&[0.0; 5]).is_err());
        let one = gen_random(&MixtureSpec::sk(), 1, 3).unwrap();
        let c = one.tensors()[0].data[0];
        assert!((one.hamiltonian(&[0.7]).unwrap() - 0.5f64.sqrt() * c * 0.49).abs() < 1e-15);
    }

    #[test]
    fn gradient_and_hessian_finite_differences() {
        let spec = MixtureSpec::new([(2, 0.5), (3, 0.25), (4, 0.1)]).unwrap();
        let n = 8;
        let g = gen_random(&spec, n, 5).unwrap();
        let m = rand_vec(n, 2, 0.8);
        let grad = g.grad(&m).unwrap();
        let h = 1e-5;
        for i in 0..n {
            let mut a = m.clone();
            let mut b = m.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (g.hamiltonian(&a).unwrap() - g.hamiltonian(&b).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1.0), "grad {i}");
        }
        let hess = g.hessian(&m).unwrap();
        assert_eq!(hess, hess.transpose());
        for j in 0..n {
            let mut a = m.clone();
            let mut b = m.clone();
            a[j] += h;
            b[j] -= h;
            let ga = g.grad(&a).unwrap();
            let gb = g.grad(&b).unwrap();
            for i in 0..n {
                let fd = (ga[i] - gb[i]) / (2.0 * h);
                assert!((fd - hess[(i, j)]).abs() <= 1e-5 * hess[(i, j)].abs().max(1.0));
            }
        }
        assert_eq!(g.grad(&vec![0.0; n]).unwrap(), vec![0.0; n]);
        let p3 = gen_random(&MixtureSpec::pure(3).unwrap(), 5, 1).unwrap();
        assert!(p3.hessian(&[0.0; 5]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sk_gradient_is_matrix_product() {
        let g = gen_random(&MixtureSpec::sk(), 12, 8).unwrap();
        let j = DMatrix::from_row_slice(12, 12, &g.tensors()[0].data);
        let m = rand_vec(12, 4, 1.0);
        let mv = nalgebra::DVector::from_column_slice(&m);
        let want = (&j + j.transpose()) * mv * (0.5f64.sqrt() / 12f64.sqrt());
        let got = g.grad(&m).unwrap();
        for i in 0..12 {
            assert!((got[i] - want[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_cap() {
        let g = gen_random(&MixtureSpec::sk(), 20, 8).unwrap();
        assert!(matches!(g.hessian_with_cap(&[0.0; 20], 10), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn partition_small_cases() {
        let sk = MixtureSpec::sk();
        let g = gen_random(&sk, 6, 2).unwrap();
        assert_eq!(g.partition_rescaled(0.0).unwrap(), 1.0);
        let one = gen_random(&sk, 1, 3).unwrap();
        let c = one.tensors()[0].data[0];
        let beta = 0.8;
        let c2 = 0.5f64.sqrt();
        let want = (beta * c2 * c - beta * beta * 0.5 / 2.0).exp();
        assert!((one.partition_rescaled(beta).unwrap() - want).abs() < 1e-14);
        let big = gen_random(&sk, 21, 1).unwrap();
        assert!(big.partition_rescaled(0.3).is_err());
    }

    #[test]
    fn covariance_identity() {
        // Cov(H(x1), H(x2)) = n xi(<x1,x2>/n), Monte Carlo over 2000 seeds
        let spec = MixtureSpec::new([(2, 0.5), (3, 0.5)]).unwrap();
        let n = 6;
        let x1 = [1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        let x2 = [1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        let reps = 2000;
        let prods: Vec<f64> = (0..reps)
            .map(|s| {
                let g = gen_random(&spec, n, 1000 + s).unwrap();
                g.hamiltonian(&x1).unwrap() * g.hamiltonian(&x2).unwrap()
            })
            .collect();
        let mean = prods.iter().sum::<f64>() / reps as f64;
        let sd = (prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        let overlap: f64 = x1.iter().zip(&x2).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        let want = n as f64 * spec.xi_at(overlap);
        assert!((mean - want).abs() <= 5.0 * sd / (reps as f64).sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn planted_alignment() {
        let sk = MixtureSpec::sk();
        let n = 200;
        let hits = (0..100)
            .filter(|&s| {
                let spins = draw_planted_spins(n, s);
                let g = gen_planted(&sk, n, 3.0, &spins, s).unwrap();
                let x: Vec<f64> = spins.iter().map(|&v| f64::from(v)).collect();
                let gr = g.grad(&x).unwrap();
                gr.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / n as f64 > 0.0
            })
            .count();
        assert!(hits >= 99);
    }

    #[test]
    fn file_round_trip() {
        let spec = MixtureSpec::new([(2, 0.5), (4, 0.2)]).unwrap();
        let spins = draw_planted_spins(5, 1);
        for g in [
            gen_random(&spec, 5, 3).unwrap(),
            gen_planted(&spec, 5, 0.7, &spins, 3).unwrap(),
            interpolate(&gen_random(&spec, 5, 3).unwrap(), &gen_random(&spec, 5, 4).unwrap(), 0.3).unwrap(),
        ] {
            let mut buf = Vec::new();
            write_tensors(&g, &mut buf).unwrap();
            assert_eq!(&buf[..5], b"GLTN1");
            let back = read_tensors(&mut buf.as_slice()).unwrap();
            assert_eq!(back, g);
            assert!(read_tensors(&mut &buf[..buf.len() - 1]).is_err());
        }
        assert!(read_tensors(&mut &b"GLTN2xxxxxxxx"[..]).is_err());
    }
}
