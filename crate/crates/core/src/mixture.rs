//! The mixture polynomial `xi(t) = sum_p c_p^2 t^p` and binary entropy.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the largest degree that gets dense tensor support.
pub const DEFAULT_TENSOR_DEGREE_CAP: u32 = 4;

/// Mixture coefficients, stored as `c_p^2` keyed by degree `p >= 2`.
///
/// The squared coefficient is the canonical parameter; `c_p` is recovered by
/// square root when tensors are scaled.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec {
    terms: Vec<(u32, f64)>,
}

impl MixtureSpec {
    /// Build from `(p, c_p^2)` pairs. Zero coefficients are dropped.
    pub fn new(terms: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (p, c2) in terms {
            if p < 2 {
                return Err(Error::InvalidMixture(format!("degree {p} not allowed (p >= 2, no external field)")));
            }
            if !c2.is_finite() || c2 < 0.0 {
                return Err(Error::InvalidMixture(format!(
                    "coefficient c_{p}^2 = {c2} must be finite and nonnegative"
                )));
            }
            if map.insert(p, c2).is_some() {
                return Err(Error::InvalidMixture(format!("degree {p} given twice")));
            }
        }
        let terms: Vec<(u32, f64)> = map.into_iter().filter(|&(_, c2)| c2 > 0.0).collect();
        if terms.is_empty() {
            return Err(Error::InvalidMixture("at least one coefficient must be positive".into()));
        }
        Ok(Self { terms })
    }

    /// SK model, `xi(t) = t^2 / 2`.
    pub fn sk() -> Self {
        Self { terms: vec![(2, 0.5)] }
    }

    /// Pure p-spin with `c_p = 1`, i.e. `xi(t) = t^p`.
    pub fn pure(p: u32) -> Result<Self> {
        Self::new([(p, 1.0)])
    }

    /// `(p, c_p^2)` pairs with strictly increasing `p`.
    pub fn terms(&self) -> &[(u32, f64)] {
        &self.terms
    }

    pub fn degrees(&self) -> impl Iterator<Item = u32> + '_ {
        self.terms.iter().map(|&(p, _)| p)
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.last().map(|&(p, _)| p).unwrap_or(0)
    }

    /// `c_p` (not squared), zero for absent degrees.
    pub fn coeff(&self, p: u32) -> f64 {
        self.coeff_sq(p).sqrt()
    }

    pub fn coeff_sq(&self, p: u32) -> f64 {
        self.terms.iter().find(|&&(q, _)| q == p).map(|&(_, c2)| c2).unwrap_or(0.0)
    }

    /// Whether dense tensors may be built for this mixture under `cap`.
    pub fn supports_tensors(&self, cap: u32) -> bool {
        self.max_degree() <= cap
    }

    /// `xi(t) = c_2^2 t^2` with no other terms.
    pub fn is_sk_form(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].0 == 2
    }

    /// `d^order xi / dt^order` at `t`, for `|t| <= 1` and `order <= 4`.
    pub fn xi(&self, t: f64, order: u32) -> Result<f64> {
        if order > 4 {
            return Err(Error::UnsupportedOrder(order));
        }
        if !(t.abs() <= 1.0) {
            return Err(Error::Domain(format!("xi evaluated at t = {t}, need |t| <= 1")));
        }
        Ok(self.xi_unchecked(t, order))
    }

    pub(crate) fn xi_unchecked(&self, t: f64, order: u32) -> f64 {
        self.terms
            .iter()
            .filter(|&&(p, _)| p >= order)
            .map(|&(p, c2)| {
                let falling: f64 = (0..order).map(|j| f64::from(p - j)).product();
                c2 * falling * t.powi((p - order) as i32)
            })
            .sum()
    }

    /// `xi_hat^{(ell)}(1) = sum_p c_p^2 p^ell`.
    pub fn xi_hat(&self, ell: u32) -> f64 {
        self.terms.iter().map(|&(p, c2)| c2 * f64::from(p).powi(ell as i32)).sum()
    }

    pub fn xi_at(&self, t: f64) -> f64 {
        self.xi_unchecked(t, 0)
    }
    pub fn xi_d1(&self, t: f64) -> f64 {
        self.xi_unchecked(t, 1)
    }
    pub fn xi_d2(&self, t: f64) -> f64 {
        self.xi_unchecked(t, 2)
    }
}

impl fmt::Display for MixtureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(|(p, c2)| format!("{p}:{c2}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl std::str::FromStr for MixtureSpec {
    type Err = Error;

    /// Parses `"2:0.5,3:1"` (degree:c_p^2 pairs).
    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (p, c2) =
                part.split_once(':').ok_or_else(|| Error::InvalidMixture(format!("expected p:c2, got `{part}`")))?;
            let p: u32 = p.trim().parse().map_err(|_| Error::InvalidMixture(format!("bad degree `{p}`")))?;
            let c2: f64 = c2.trim().parse().map_err(|_| Error::InvalidMixture(format!("bad coefficient `{c2}`")))?;
            terms.push((p, c2));
        }
        Self::new(terms)
    }
}

impl Serialize for MixtureSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.terms.len()))?;
        for (p, c2) in &self.terms {
            map.serialize_entry(&p.to_string(), c2)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for MixtureSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct MixtureVisitor;

        impl<'de> Visitor<'de> for MixtureVisitor {
            type Value = MixtureSpec;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from degree p (as a string) to c_p^2")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<MixtureSpec, A::Error> {
                let mut terms = Vec::new();
                while let Some((key, c2)) = access.next_entry::<String, f64>()? {
                    let p: u32 =
                        key.parse().map_err(|_| de::Error::custom(format!("mixture key `{key}` is not a degree")))?;
                    terms.push((p, c2));
                }
                MixtureSpec::new(terms).map_err(de::Error::custom)
            }
        }

        deserializer.deserialize_map(MixtureVisitor)
    }
}

/// Binary entropy `h(m)` of a `+-1` variable with mean `m`, in nats.
pub fn binary_entropy(m: f64) -> Result<f64> {
    if !(m.abs() <= 1.0) {
        return Err(Error::Domain(format!("binary entropy at m = {m}, need |m| <= 1")));
    }
    Ok(entropy_unchecked(m))
}

pub(crate) fn entropy_unchecked(m: f64) -> f64 {
    let a = 0.5 * (1.0 + m);
    let b = 0.5 * (1.0 - m);
    let xlogx = |p: f64| if p <= 0.0 { 0.0 } else { p * p.ln() };
    -(xlogx(a) + xlogx(b))
}

/// `sum_i h(m_i)`.
pub fn binary_entropy_sum(m: &[f64]) -> Result<f64> {
    if let Some(bad) = m.iter().find(|v| !(v.abs() <= 1.0)) {
        return Err(Error::Domain(format!("binary entropy at m = {bad}, need |m| <= 1")));
    }
    Ok(m.iter().map(|&v| entropy_unchecked(v)).sum())
}
