//! Command-line front end: config resolution and subcommand dispatch.

pub mod config;
pub mod validate;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::amp::{amp_run, History};
use crate::baselines::batch::{Provenance, SampleBatch};
use crate::baselines::exact::{exact_gibbs, exact_sample};
use crate::baselines::experiments::{chaos_experiment, stability_experiment, temperature_stability_experiment};
use crate::baselines::glauber::{glauber_run, GlauberParams};
use crate::baselines::transport::{empirical_w2, overlap_moment};
use crate::disorder::{
    draw_planted_spins, gen_planted, gen_random_with_budget, interpolate, load_tensors, save_tensors, DisorderTensors,
    DEFAULT_HESSIAN_CAP,
};
use crate::error::{Error, Result};
use crate::localization::{mean_estimate, sample_with_schedule, MeanParams};
use crate::mixture::MixtureSpec;
use crate::rng::{child_seed, normals, uniforms, Purpose};
use crate::state_evolution::{psi_star, q_schedule, q_star, se_recursion, threshold_report};
use crate::tap::{ftap_grad, ftap_value, relative_hessian_extremes, TapParams};
use config::{
    from_value, parse_flag_value, read_config_value, resolve_threads, set_path, DisorderKindTag, ExperimentConfig,
    MSource, PerturbationTag,
};

#[derive(Debug, Parser)]
#[command(name = "glasslocal", version, about = "Stochastic-localization sampling for mixed p-spin Gibbs measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config file; flags below override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (falls back to GLASSLOCAL_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub t: Option<f64>,
    /// Mixture as `p:c2` pairs, e.g. `2:0.5,3:1`.
    #[arg(long, global = true, value_name = "P:C2,...")]
    pub mixture: Option<String>,
    #[arg(long, global = true)]
    pub tensors: Option<PathBuf>,
    #[arg(long, global = true)]
    pub batch_output: Option<PathBuf>,
    /// Any config key by dotted path, e.g. `--set sampler.delta=0.01`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a GLTN1 tensor file.
    GenDisorder,
    /// Threshold report as JSON.
    Thresholds,
    /// State-evolution fixed points over a grid of t.
    Se,
    /// AMP trajectory against its state-evolution prediction.
    Amp,
    /// TAP free-energy report as JSON.
    Tap,
    /// Run the sampler for a number of replicas.
    Sample,
    /// Exact Gibbs sampling by enumeration.
    Exact,
    /// Glauber dynamics baseline.
    Glauber,
    /// W2 and overlap moment between two batch files.
    W2,
    /// Disorder-chaos experiment with exact sampling.
    Chaos,
    /// Algorithmic stability under disorder or temperature perturbation.
    Stability,
    /// Run the built-in invariant suites.
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenDisorder => "gen-disorder",
            Command::Thresholds => "thresholds",
            Command::Se => "se",
            Command::Amp => "amp",
            Command::Tap => "tap",
            Command::Sample => "sample",
            Command::Exact => "exact",
            Command::Glauber => "glauber",
            Command::W2 => "w2",
            Command::Chaos => "chaos",
            Command::Stability => "stability",
            Command::Validate => "validate",
        }
    }
}

/// Config file, then `--set`, then the dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut v = match &cli.config {
        Some(p) => read_config_value(p)?,
        None => Value::Object(Default::default()),
    };
    for entry in &cli.set {
        let (key, raw) =
            entry.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{entry}`")))?;
        set_path(&mut v, key.trim(), parse_flag_value(raw))?;
    }
    if let Some(m) = &cli.mixture {
        let spec: MixtureSpec = m.parse().map_err(|e| Error::Config(format!("`mixture`: {e}")))?;
        set_path(&mut v, "mixture", serde_json::to_value(&spec).expect("mixture serializes"))?;
    }
    let path_value = |p: &Path| Value::String(p.to_string_lossy().into_owned());
    if let Some(n) = cli.n {
        set_path(&mut v, "n", n.into())?;
    }
    if let Some(b) = cli.beta {
        set_path(&mut v, "beta", b.into())?;
    }
    if let Some(s) = cli.seed {
        set_path(&mut v, "seed", s.into())?;
    }
    if let Some(t) = cli.t {
        set_path(&mut v, "t", t.into())?;
    }
    if let Some(o) = &cli.output {
        set_path(&mut v, "output", path_value(o))?;
    }
    if let Some(p) = &cli.tensors {
        set_path(&mut v, "tensors", path_value(p))?;
    }
    if let Some(p) = &cli.batch_output {
        set_path(&mut v, "batch_output", path_value(p))?;
    }
    // amp and tap compare against a planted signal unless told otherwise
    if matches!(cli.command, Command::Amp | Command::Tap) && v.pointer("/disorder/kind").is_none() {
        set_path(&mut v, "disorder.kind", Value::String("planted".into()))?;
    }
    from_value(v)
}

/// Parses `args` and runs the command; the entry point of the binary.
pub fn run_from_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            Ok(())
        }
        Err(e) => {
            let text = e.to_string();
            Err(Error::Config(text.trim_start_matches("error: ").trim_end().to_string()))
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = resolve_config(cli)?;
    let threads = resolve_threads(cli.threads, &cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let command = cli.command;
    pool.install(|| dispatch(command, &mut cfg)).map_err(|e| match e {
        Error::Numeric { stage, detail } => Error::Numeric { stage: format!("{}/{stage}", command.name()), detail },
        Error::Config(msg) => Error::Config(msg),
        other => Error::InStage { stage: command.name().to_string(), source: Box::new(other) },
    })
}

fn dispatch(command: Command, cfg: &mut ExperimentConfig) -> Result<()> {
    let body = match command {
        Command::GenDisorder => gen_disorder(cfg)?,
        Command::Thresholds => thresholds(cfg)?,
        Command::Se => se(cfg)?,
        Command::Amp => amp(cfg)?,
        Command::Tap => tap(cfg)?,
        Command::Sample => sample(cfg)?,
        Command::Exact => exact(cfg)?,
        Command::Glauber => glauber(cfg)?,
        Command::W2 => w2(cfg)?,
        Command::Chaos => chaos(cfg)?,
        Command::Stability => stability(cfg)?,
        Command::Validate => validate::run_suites(cfg)?,
    };
    if let Some(text) = body {
        emit(cfg, &text)?;
    }
    if let Some(out) = &cfg.output {
        let mut echo = serde_json::to_string_pretty(cfg).expect("config serializes");
        echo.push('\n');
        std::fs::write(config_echo_path(out), echo)?;
    }
    Ok(())
}

/// `<output>.config.json`.
pub fn config_echo_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

fn emit(cfg: &ExperimentConfig, text: &str) -> Result<()> {
    match &cfg.output {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Loads the tensor file or builds disorder from the seed; a loaded file
/// overwrites `n` and `mixture` in the resolved config.
fn disorder(cfg: &mut ExperimentConfig) -> Result<DisorderTensors> {
    if let Some(path) = &cfg.tensors {
        let g = load_tensors(path)?;
        cfg.n = g.n();
        cfg.mixture = g.spec().clone();
        return Ok(g);
    }
    let (spec, n, seed) = (&cfg.mixture, cfg.n, cfg.seed);
    let d = &cfg.disorder;
    match d.kind {
        DisorderKindTag::Random => gen_random_with_budget(spec, n, seed, d.budget),
        DisorderKindTag::Planted => {
            let spins = draw_planted_spins(n, seed);
            gen_planted(spec, n, d.planted_beta.unwrap_or(cfg.beta), &spins, seed)
        }
        DisorderKindTag::Interpolated => {
            let g0 = gen_random_with_budget(spec, n, seed, d.budget)?;
            let g1 = gen_random_with_budget(spec, n, d.partner_seed.unwrap_or(child_seed(seed, 1)), d.budget)?;
            interpolate(&g0, &g1, d.s)
        }
    }
}

/// `y = t x + sqrt(t) w` with `x` the planted spins, or `sqrt(t) w` without them.
fn observation(g: &DisorderTensors, t: f64, seed: u64) -> (Vec<f64>, Option<Vec<f64>>) {
    let w = normals(seed, Purpose::Brownian, 0, g.n());
    let x: Option<Vec<f64>> = g.planted().map(|s| s.iter().map(|&v| f64::from(v)).collect());
    let y = match &x {
        Some(x) => x.iter().zip(&w).map(|(a, b)| t * a + t.sqrt() * b).collect(),
        None => w.iter().map(|b| t.sqrt() * b).collect(),
    };
    (y, x)
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| Error::Config(format!("`{key}` is required for this command")))
}

fn gen_disorder(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    let out = require(&cfg.output, "output")?.clone();
    cfg.tensors = None;
    let g = disorder(cfg)?;
    save_tensors(&g, &out)?;
    Ok(None)
}

fn thresholds(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    Ok(Some(json(&threshold_report(&cfg.mixture, cfg.thresholds.c0)?)))
}

fn se(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    let rows: Vec<Result<String>> = cfg
        .se
        .t_values
        .par_iter()
        .map(|&t| {
            let q = q_star(&cfg.mixture, cfg.beta, t)?;
            let psi = psi_star(&cfg.mixture, cfg.beta, t)?;
            Ok(format!("{},{},{},{}\n", num(t), num(q), num(psi), num(1.0 - q)))
        })
        .collect();
    let mut out = String::from("t,q_star,psi_star,mmse\n");
    for r in rows {
        out.push_str(&r?);
    }
    Ok(Some(out))
}

fn amp(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    let g = disorder(cfg)?;
    let (y, x) = observation(&g, cfg.t, cfg.seed);
    let k_iters = cfg.amp.iterations;
    let tr = amp_run(&g, &y, cfg.beta, k_iters, History::Full)?;
    let profile = se_recursion(&cfg.mixture, cfg.beta, cfg.t, k_iters)?;
    let n = g.n() as f64;
    let mut out = String::from("k,q_hat,mse_empirical,mse_predicted,z_increment_ratio\n");
    // row k: input m^k, output m^{k+1} = tanh(z^{k+1})
    for k in 0..k_iters {
        let next = &tr.states[k + 1];
        let mse = match &x {
            Some(x) => next.m_hat.iter().zip(x).map(|(m, s)| (m - s).powi(2)).sum::<f64>() / n,
            None => f64::NAN,
        };
        let predicted = 1.0 - profile.q_sequence[k + 1];
        let _ = writeln!(
            out,
            "{k},{},{},{},{}",
            num(tr.states[k].q_hat),
            num(mse),
            num(predicted),
            num(tr.steps[k + 1].z_increment_ratio)
        );
    }
    Ok(Some(out))
}

#[derive(Serialize)]
struct TapReport {
    n: usize,
    beta: f64,
    t: f64,
    q: f64,
    gamma: f64,
    m_source: MSource,
    overlap: f64,
    ftap: f64,
    grad_norm: f64,
    grad_norm_per_sqrt_n: f64,
    relative_hessian_min: Option<f64>,
    relative_hessian_max: Option<f64>,
    ngd_halvings: Option<usize>,
}

fn tap(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    let g = disorder(cfg)?;
    let (y, _) = observation(&g, cfg.t, cfg.seed);
    let n = g.n();
    let section = cfg.tap.clone();
    let q = match section.q {
        Some(q) => q,
        None => q_star(&cfg.mixture, cfg.beta, cfg.t)?,
    };
    let params = TapParams::new(cfg.beta, q, section.gamma, y.clone())?;
    let mean = MeanParams { k_amp: section.k_amp, k_ngd: section.k_ngd, eta: section.eta, gamma_reg: section.gamma };
    let (m, halvings) = match section.m_source {
        MSource::Zero => (vec![0.0; n], None),
        MSource::Amp => (amp_run(&g, &y, cfg.beta, section.k_amp, History::Last)?.last().m_hat.clone(), None),
        MSource::Ngd => {
            let est = mean_estimate(&g, &y, cfg.beta, q, &mean)?;
            (est.mean, Some(est.halvings))
        }
    };
    let grad = ftap_grad(&g, &m, &params)?;
    let grad_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (lo, hi) = if section.spectrum && n <= DEFAULT_HESSIAN_CAP {
        let (lo, hi) = relative_hessian_extremes(&g, &m, &params)?;
        (Some(lo), Some(hi))
    } else {
        (None, None)
    };
    let report = TapReport {
        n,
        beta: cfg.beta,
        t: cfg.t,
        q,
        gamma: section.gamma,
        m_source: section.m_source,
        overlap: m.iter().map(|v| v * v).sum::<f64>() / n as f64,
        ftap: ftap_value(&g, &m, &params)?,
        grad_norm,
        grad_norm_per_sqrt_n: grad_norm / (n as f64).sqrt(),
        relative_hessian_min: lo,
        relative_hessian_max: hi,
        ngd_halvings: halvings,
    };
    Ok(Some(json(&report)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn sample(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    let g = disorder(cfg)?;
    let n = g.n();
    let base = cfg.sampler_params(0);
    base.validate()?;
    let schedule = q_schedule(&cfg.mixture, cfg.beta, base.delta, base.steps)?;
    let traj_path = cfg.sample.trajectory_output.clone();
    let runs: Vec<_> = (0..cfg.sample.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let params = crate::localization::SamplerParams {
                seed: child_seed(cfg.seed, r),
                keep_trajectory: r == 0 && traj_path.is_some(),
                ..base.clone()
            };
            sample_with_schedule(&g, &params, &schedule).map_err(|e| e.in_stage(&format!("replica {r}")))
        })
        .collect::<Result<_>>()?;
    let mut out = String::from("replica,seed,final_q,grad_norm_last,x_bits_hex\n");
    for (r, run) in runs.iter().enumerate() {
        let final_q = run.mean_final.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let grad = run.steps.last().map_or(f64::NAN, |s| s.grad_norm);
        let _ = writeln!(
            out,
            "{r},{},{},{},{}",
            run.seed,
            num(final_q),
            num(grad),
            hex(&SampleBatch::packed_bytes(&run.x_alg))
        );
    }
    if let Some(p) = &traj_path {
        let traj = runs[0].y_trajectory.as_ref().expect("replica 0 keeps its trajectory");
        let mut bytes = Vec::with_capacity(traj.len() * n * 8);
        for y in traj {
            for v in y {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(p, bytes)?;
    }
    if let Some(p) = &cfg.batch_output {
        let batch = SampleBatch::new(n, runs.into_iter().map(|r| r.x_alg).collect(), Provenance::Algorithm, cfg.seed)?;
        batch.save(p)?;
    }
    Ok(Some(out))
}

fn site_means(batch: &SampleBatch) -> Vec<f64> {
    let m = batch.len().max(1) as f64;
    (0..batch.n()).map(|i| batch.samples().iter().map(|x| f64::from(x[i])).sum::<f64>() / m).collect()
}

fn exact(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    let g = disorder(cfg)?;
    let dist = exact_gibbs(&g, cfg.beta, &vec![0.0; g.n()])?;
    let batch = exact_sample(&dist, cfg.exact.samples, cfg.seed);
    let empirical = site_means(&batch);
    let mut out = String::from("site,exact_mean,sample_mean\n");
    for i in 0..g.n() {
        let _ = writeln!(out, "{i},{},{}", num(dist.mean[i]), num(empirical[i]));
    }
    if let Some(p) = &cfg.batch_output {
        batch.save(p)?;
    }
    Ok(Some(out))
}

fn glauber(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    let g = disorder(cfg)?;
    let x0: Vec<i8> =
        uniforms(cfg.seed, Purpose::Auxiliary(50), 0, g.n()).iter().map(|&u| if u < 0.5 { 1 } else { -1 }).collect();
    let s = &cfg.glauber;
    let params = GlauberParams { sweeps: s.sweeps, burn_in: s.burn_in, thin: s.thin };
    let batch = glauber_run(&g, cfg.beta, &x0, params, cfg.seed)?;
    let mut out = String::from("site,sample_mean\n");
    for (i, m) in site_means(&batch).iter().enumerate() {
        let _ = writeln!(out, "{i},{}", num(*m));
    }
    if let Some(p) = &cfg.batch_output {
        batch.save(p)?;
    }
    Ok(Some(out))
}

fn w2(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    let a = SampleBatch::load(require(&cfg.w2.batch_a, "w2.batch_a")?)?;
    let b = SampleBatch::load(require(&cfg.w2.batch_b, "w2.batch_b")?)?;
    let w = empirical_w2(&a, &b)?;
    let ov = overlap_moment(&a, &b)?;
    Ok(Some(format!("n,m,w2,overlap_moment\n{},{},{},{}\n", a.n(), a.len(), num(w), num(ov))))
}

fn chaos(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    let seeds: Vec<u64> = (0..cfg.chaos.aggregates as u64).map(|k| child_seed(cfg.seed, k)).collect();
    let table = chaos_experiment(&cfg.mixture, &cfg.chaos_config(), &seeds)?;
    let mut out = String::from("scope,seed,s,overlap_moment,w2\n");
    let w2_text = |w: Option<f64>| w.map(num).unwrap_or_default();
    for r in &table.per_seed {
        let _ = writeln!(out, "aggregate,{},{},{},{}", r.seed, num(r.s), num(r.overlap_moment), w2_text(r.w2));
    }
    for r in &table.averaged {
        let _ = writeln!(out, "mean,,{},{},{}", num(r.s), num(r.overlap_moment), w2_text(r.w2));
    }
    Ok(Some(out))
}

fn stability(cfg: &mut ExperimentConfig) -> Result<Option<String>> {
    let seeds: Vec<u64> = (0..cfg.stability.replicas as u64).map(|k| child_seed(cfg.seed, k)).collect();
    let params = cfg.sampler_params(cfg.seed);
    let (label, rows) = match cfg.stability.perturbation {
        PerturbationTag::Disorder => {
            ("disorder", stability_experiment(&cfg.mixture, cfg.n, &cfg.stability.s_values, &params, &seeds)?)
        }
        PerturbationTag::Temperature => (
            "temperature",
            temperature_stability_experiment(&cfg.mixture, cfg.n, &cfg.stability.beta_values, &params, &seeds)?,
        ),
    };
    let mut out = String::from("perturbation,value,sample_distance,mean_distance,replicas\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{label},{},{},{},{}",
            num(r.perturbation),
            num(r.sample_distance),
            num(r.mean_distance),
            r.replicas
        );
    }
    Ok(Some(out))
}
