//! Experiment configuration: JSON file, flag overrides, schema.

use std::path::{Path, PathBuf};

use schemars::{json_schema, JsonSchema, Schema, SchemaGenerator};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::experiments::ChaosConfig;
use crate::baselines::glauber::GlauberParams;
use crate::disorder::DEFAULT_TENSOR_BUDGET;
use crate::error::{Error, Result};
use crate::localization::{DriftMode, MeanParams, SamplerParams};
use crate::mixture::MixtureSpec;
use crate::state_evolution::DEFAULT_C0;
use crate::tap::{DEFAULT_ETA, DEFAULT_GAMMA};

/// Environment variable consulted when neither `--threads` nor the config
/// sets a thread count.
pub const THREADS_ENV: &str = "GLASSLOCAL_THREADS";

fn mixture_schema(_: &mut SchemaGenerator) -> Schema {
    json_schema!({
        "type": "object",
        "description": "degree p (decimal string) -> c_p^2",
        "patternProperties": { "^[0-9]+$": { "type": "number", "minimum": 0.0 } },
        "additionalProperties": false,
        "minProperties": 1
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[schemars(schema_with = "mixture_schema")]
    pub mixture: MixtureSpec,
    pub n: usize,
    pub beta: f64,
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    /// Field strength `t` of the planted observation `y = t x + sqrt(t) w`.
    pub t: f64,
    /// Worker threads; never changes results.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    /// Tensor file to read instead of generating disorder from the seed.
    pub tensors: Option<PathBuf>,
    /// Packed sign-bit batch written by `sample`, `exact` and `glauber`.
    pub batch_output: Option<PathBuf>,
    pub disorder: DisorderSection,
    pub sampler: SamplerSection,
    pub amp: AmpSection,
    pub se: SeSection,
    pub tap: TapSection,
    pub thresholds: ThresholdsSection,
    pub sample: SampleSection,
    pub exact: ExactSection,
    pub glauber: GlauberSection,
    pub w2: W2Section,
    pub chaos: ChaosSection,
    pub stability: StabilitySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mixture: MixtureSpec::sk(),
            n: 10,
            beta: 0.25,
            seed: 0,
            t: 1.0,
            threads: None,
            output: None,
            tensors: None,
            batch_output: None,
            disorder: DisorderSection::default(),
            sampler: SamplerSection::default(),
            amp: AmpSection::default(),
            se: SeSection::default(),
            tap: TapSection::default(),
            thresholds: ThresholdsSection::default(),
            sample: SampleSection::default(),
            exact: ExactSection::default(),
            glauber: GlauberSection::default(),
            w2: W2Section::default(),
            chaos: ChaosSection::default(),
            stability: StabilitySection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DisorderKindTag {
    #[default]
    Random,
    Planted,
    Interpolated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct DisorderSection {
    pub kind: DisorderKindTag,
    /// Spike strength of a planted instance; `beta` when absent.
    pub planted_beta: Option<f64>,
    /// Interpolation weight for `interpolated`: `sqrt(1 - s^2) G_0 + s G_1`.
    pub s: f64,
    /// Seed of `G_1`; derived from the master seed when absent.
    pub partner_seed: Option<u64>,
    /// Largest number of tensor entries that may be allocated.
    pub budget: usize,
}

impl Default for DisorderSection {
    fn default() -> Self {
        Self {
            kind: DisorderKindTag::Random,
            planted_beta: None,
            s: 0.0,
            partner_seed: None,
            budget: DEFAULT_TENSOR_BUDGET,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DriftTag {
    #[default]
    Algorithm,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub delta: f64,
    /// Number of Euler steps `L`.
    pub steps: usize,
    pub k_amp: usize,
    pub k_ngd: usize,
    pub eta: f64,
    pub gamma: f64,
    /// Non-canonical: NGD starts from the previous step's natural parameter.
    pub warm_start: bool,
    pub drift: DriftTag,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerParams::default();
        Self {
            delta: d.delta,
            steps: d.steps,
            k_amp: d.mean.k_amp,
            k_ngd: d.mean.k_ngd,
            eta: d.mean.eta,
            gamma: d.mean.gamma_reg,
            warm_start: d.warm_start,
            drift: DriftTag::Algorithm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct AmpSection {
    pub iterations: usize,
}

impl Default for AmpSection {
    fn default() -> Self {
        Self { iterations: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SeSection {
    pub t_values: Vec<f64>,
}

impl Default for SeSection {
    fn default() -> Self {
        Self { t_values: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MSource {
    /// `tanh(z^K)` after the AMP pass.
    Amp,
    /// AMP followed by NGD.
    #[default]
    Ngd,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct TapSection {
    pub m_source: MSource,
    /// Linearization point; `q*(beta, t)` when absent.
    pub q: Option<f64>,
    pub gamma: f64,
    pub eta: f64,
    pub k_amp: usize,
    pub k_ngd: usize,
    /// Report relative-Hessian extremes when `n` is within the Hessian cap.
    pub spectrum: bool,
}

impl Default for TapSection {
    fn default() -> Self {
        let m = MeanParams::default();
        Self {
            m_source: MSource::Ngd,
            q: None,
            gamma: DEFAULT_GAMMA,
            eta: DEFAULT_ETA,
            k_amp: m.k_amp,
            k_ngd: m.k_ngd,
            spectrum: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdsSection {
    /// Small constant of the general `beta_3` branch.
    pub c0: f64,
}

impl Default for ThresholdsSection {
    fn default() -> Self {
        Self { c0: DEFAULT_C0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub replicas: usize,
    /// Binary dump of `y_0..y_L` (little-endian f64) for replica 0.
    pub trajectory_output: Option<PathBuf>,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { replicas: 1, trajectory_output: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ExactSection {
    pub samples: usize,
}

impl Default for ExactSection {
    fn default() -> Self {
        Self { samples: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct GlauberSection {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for GlauberSection {
    fn default() -> Self {
        let d = GlauberParams::default();
        Self { sweeps: d.sweeps, burn_in: d.burn_in, thin: d.thin }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct W2Section {
    pub batch_a: Option<PathBuf>,
    pub batch_b: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ChaosSection {
    pub s_values: Vec<f64>,
    pub batch_size: usize,
    /// Disorder pairs per aggregate.
    pub disorders: usize,
    /// Number of aggregates; aggregate `k` uses seed `child_seed(seed, k)`.
    pub aggregates: usize,
    pub antithetic: bool,
    pub compute_w2: bool,
}

impl Default for ChaosSection {
    fn default() -> Self {
        let d = ChaosConfig::default();
        Self {
            s_values: d.s_list,
            batch_size: d.batch_size,
            disorders: d.disorders,
            aggregates: 20,
            antithetic: d.antithetic,
            compute_w2: d.compute_w2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationTag {
    #[default]
    Disorder,
    Temperature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    pub perturbation: PerturbationTag,
    /// `s` values for disorder perturbations.
    pub s_values: Vec<f64>,
    /// `beta'` values for temperature perturbations.
    pub beta_values: Vec<f64>,
    pub replicas: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            perturbation: PerturbationTag::Disorder,
            s_values: vec![0.0, 0.01, 0.03, 0.1, 0.3],
            beta_values: vec![0.25, 0.26, 0.28, 0.3],
            replicas: 8,
        }
    }
}

impl ExperimentConfig {
    pub fn sampler_params(&self, seed: u64) -> SamplerParams {
        let s = &self.sampler;
        SamplerParams {
            beta: self.beta,
            delta: s.delta,
            steps: s.steps,
            mean: MeanParams { k_amp: s.k_amp, k_ngd: s.k_ngd, eta: s.eta, gamma_reg: s.gamma },
            seed,
            keep_trajectory: false,
            warm_start: s.warm_start,
            drift: match s.drift {
                DriftTag::Algorithm => DriftMode::Algorithm,
                DriftTag::Exact => DriftMode::Exact,
            },
        }
    }

    pub fn chaos_config(&self) -> ChaosConfig {
        let c = &self.chaos;
        ChaosConfig {
            n: self.n,
            beta: self.beta,
            s_list: c.s_values.clone(),
            batch_size: c.batch_size,
            disorders: c.disorders,
            antithetic: c.antithetic,
            compute_w2: c.compute_w2,
        }
    }

    /// Range checks that the schema cannot express.
    pub fn check(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("`{field}`: {why}")));
        if self.n == 0 {
            return bad("n", "must be at least 1");
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad("beta", "must be finite and >= 0");
        }
        if !(self.t >= 0.0) || !self.t.is_finite() {
            return bad("t", "must be finite and >= 0");
        }
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.disorder.s) {
            return bad("disorder.s", "must lie in [0, 1]");
        }
        if !(self.sampler.delta > 0.0) {
            return bad("sampler.delta", "must be positive");
        }
        for (field, v) in [
            ("sampler.steps", self.sampler.steps),
            ("sampler.k_amp", self.sampler.k_amp),
            ("sampler.k_ngd", self.sampler.k_ngd),
            ("amp.iterations", self.amp.iterations),
            ("tap.k_amp", self.tap.k_amp),
            ("tap.k_ngd", self.tap.k_ngd),
            ("sample.replicas", self.sample.replicas),
            ("exact.samples", self.exact.samples),
            ("glauber.thin", self.glauber.thin),
            ("chaos.batch_size", self.chaos.batch_size),
            ("chaos.disorders", self.chaos.disorders),
            ("chaos.aggregates", self.chaos.aggregates),
            ("stability.replicas", self.stability.replicas),
        ] {
            if v == 0 {
                return bad(field, "must be at least 1");
            }
        }
        if !(self.sampler.eta > 0.0) || !(self.tap.eta > 0.0) {
            return bad("eta", "step sizes must be positive");
        }
        if let Some(q) = self.tap.q {
            if !(0.0..1.0).contains(&q) {
                return bad("tap.q", "must lie in [0, 1)");
            }
        }
        Ok(())
    }
}

/// JSON schema of [`ExperimentConfig`].
pub fn config_schema() -> Value {
    serde_json::to_value(schemars::schema_for!(ExperimentConfig)).expect("schema serializes")
}

/// Sets `path` (dot-separated) in `root` to `value`, creating objects on the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad key path `{path}`")));
    }
    for (i, part) in parts.iter().enumerate() {
        let obj =
            cur.as_object_mut().ok_or_else(|| Error::Config(format!("`{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = obj.entry((*part).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("path has at least one part")
}

/// Parses a flag value as JSON, falling back to a JSON string.
pub fn parse_flag_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Deserializes with the offending key path in the error.
pub fn from_value(v: Value) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at `{path}`: {}", e.into_inner()))
    })?;
    cfg.check()?;
    Ok(cfg)
}

pub fn read_config_value(path: &Path) -> Result<Value> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let v: Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{} is not valid JSON: {e}", path.display())))?;
    if !v.is_object() {
        return Err(Error::Config("config root must be a JSON object".into()));
    }
    Ok(v)
}

/// Thread count from flag, config, then environment.
pub fn resolve_threads(flag: Option<usize>, cfg: &ExperimentConfig) -> Result<Option<usize>> {
    if let Some(t) = flag.or(cfg.threads) {
        return Ok(Some(t));
    }
    match std::env::var(THREADS_ENV) {
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(Error::Config(format!("{THREADS_ENV}=`{raw}` is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(from_value(v).unwrap(), cfg);
        assert_eq!(from_value(json!({})).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_name_the_path() {
        let err = from_value(json!({"sampler": {"dleta": 0.1}})).unwrap_err().to_string();
        assert!(err.contains("sampler") && err.contains("dleta"), "{err}");
        let err = from_value(json!({"betta": 1})).unwrap_err().to_string();
        assert!(err.contains("betta"), "{err}");
        let err = from_value(json!({"n": 0})).unwrap_err().to_string();
        assert!(err.contains("`n`"), "{err}");
        let err = from_value(json!({"mixture": {"x": 1}})).unwrap_err().to_string();
        assert!(err.contains("mixture"), "{err}");
    }

    #[test]
    fn overrides() {
        let mut v = json!({"n": 4});
        set_path(&mut v, "sampler.delta", parse_flag_value("0.01")).unwrap();
        set_path(&mut v, "mixture", parse_flag_value(r#"{"3": 1.0}"#)).unwrap();
        let cfg = from_value(v).unwrap();
        assert_eq!(cfg.sampler.delta, 0.01);
        assert_eq!(cfg.mixture.max_degree(), 3);
        assert_eq!(parse_flag_value("abc"), json!("abc"));
        assert!(set_path(&mut json!({"n": 1}), "n.x", json!(1)).is_err());
    }

    #[test]
    fn schema_lists_every_key() {
        let schema = config_schema();
        let props = schema["properties"].as_object().unwrap();
        let v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        for key in v.as_object().unwrap().keys() {
            assert!(props.contains_key(key), "{key}");
        }
        assert!(props.contains_key("threads"));
        assert_eq!(schema["additionalProperties"], json!(false));
    }
}
