//! Batches of spin configurations and their packed binary format.
//!
//! Layout (little-endian): magic `GLSB1`, `n: u32`, `M: u32`, provenance `u8`,
//! `seed: u64`, then `M` records of `ceil(n/8)` bytes where bit `i % 8` of
//! byte `i / 8` is set when `x_i = +1`.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"GLSB1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Algorithm,
    Exact,
    Glauber,
}

impl Provenance {
    fn tag(self) -> u8 {
        match self {
            Provenance::Algorithm => 0,
            Provenance::Exact => 1,
            Provenance::Glauber => 2,
        }
    }
    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Provenance::Algorithm),
            1 => Ok(Provenance::Exact),
            2 => Ok(Provenance::Glauber),
            other => Err(Error::Format(format!("unknown batch provenance {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    n: usize,
    samples: Vec<Vec<i8>>,
    provenance: Provenance,
    seed: u64,
}

impl SampleBatch {
    pub fn new(n: usize, samples: Vec<Vec<i8>>, provenance: Provenance, seed: u64) -> Result<Self> {
        for (k, x) in samples.iter().enumerate() {
            if x.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: x.len() });
            }
            if x.iter().any(|&s| s != 1 && s != -1) {
                return Err(Error::Domain(format!("sample {k} has an entry outside {{-1, +1}}")));
            }
        }
        Ok(Self { n, samples, provenance, seed })
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn samples(&self) -> &[Vec<i8>] {
        &self.samples
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sample `k` packed into 64-bit words, bit set for `+1`.
    pub(crate) fn packed_words(&self) -> Vec<Vec<u64>> {
        let words = self.n.div_ceil(64);
        self.samples
            .iter()
            .map(|x| {
                let mut w = vec![0u64; words];
                for (i, &s) in x.iter().enumerate() {
                    if s == 1 {
                        w[i / 64] |= 1 << (i % 64);
                    }
                }
                w
            })
            .collect()
    }

    /// Sample `k` as bytes in file order.
    pub fn packed_bytes(x: &[i8]) -> Vec<u8> {
        let mut b = vec![0u8; x.len().div_ceil(8)];
        for (i, &s) in x.iter().enumerate() {
            if s == 1 {
                b[i / 8] |= 1 << (i % 8);
            }
        }
        b
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.samples.len() as u32).to_le_bytes())?;
        w.write_all(&[self.provenance.tag()])?;
        w.write_all(&self.seed.to_le_bytes())?;
        for x in &self.samples {
            w.write_all(&Self::packed_bytes(x))?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 5 + 4 + 4 + 1 + 8];
        r.read_exact(&mut head).map_err(|e| Error::Format(format!("truncated batch header: {e}")))?;
        if &head[..5] != MAGIC {
            return Err(Error::Format("bad magic, expected GLSB1".into()));
        }
        let n = u32::from_le_bytes(head[5..9].try_into().expect("4 bytes")) as usize;
        let m = u32::from_le_bytes(head[9..13].try_into().expect("4 bytes")) as usize;
        let provenance = Provenance::from_tag(head[13])?;
        let seed = u64::from_le_bytes(head[14..22].try_into().expect("8 bytes"));
        let stride = n.div_ceil(8);
        let mut buf = vec![0u8; stride];
        let mut samples = Vec::with_capacity(m);
        for k in 0..m {
            r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated sample {k}: {e}")))?;
            samples.push((0..n).map(|i| if buf[i / 8] >> (i % 8) & 1 == 1 { 1 } else { -1 }).collect());
        }
        Self::new(n, samples, provenance, seed)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
