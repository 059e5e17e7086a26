//! Experiment orchestration: configuration, training runs, evaluation
//! sweeps, metric batches and run manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{write_trace_jsonl, Env, EnvConfig, EnvError};
use crate::fov::{synth_head_trace, FovError};
use crate::frame::{load_frame, FrameError};
use crate::metrics::{format_db, ws_psnr, ws_ssim, MetricError};
use crate::qos::{score_cdf, EmpiricalCdf, ScoreBreakdown};
use crate::quality::{default_surrogate, fit_surrogate, read_samples, QualityError, QualityKind, SurrogateModel};
use crate::rl::train::{evaluate_episode, train_with_callback, write_train_log, EpisodeLog};
use crate::rl::{Checkpoint, PpoConfig, RlError};
use crate::rsma::Scheme;
use crate::util::mix_seed;

/// Episode indices used for evaluation start here, well clear of the
/// indices seen in training.
pub const EVAL_EPISODE_BASE: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl ExperimentError {
    /// Process exit code: 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Data(_) => 3,
        }
    }
}

impl From<EnvError> for ExperimentError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config(_) | EnvError::Channel(_) => ExperimentError::Config(e.to_string()),
            _ => ExperimentError::Data(e.to_string()),
        }
    }
}

impl From<RlError> for ExperimentError {
    fn from(e: RlError) -> Self {
        match e {
            RlError::Env(inner) => inner.into(),
            RlError::Config(_) | RlError::Shape(_) => ExperimentError::Config(e.to_string()),
            _ => ExperimentError::Data(e.to_string()),
        }
    }
}

fn data_err(context: impl fmt::Display, e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    pub kind: QualityKind,
    /// Fitted surrogate JSON; the built-in default for `kind` when absent.
    pub surrogate: Option<PathBuf>,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            kind: QualityKind::WsPsnr,
            surrogate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub kappa: Vec<f64>,
    pub t_max_ms: Vec<f64>,
    pub q_min_db: Vec<f64>,
    pub bandwidth_mhz: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kappa: vec![0.5, 1.0, 1.5],
            t_max_ms: vec![5.0, 10.0, 20.0],
            q_min_db: vec![15.0, 20.0, 25.0],
            bandwidth_mhz: vec![100.0, 200.0, 400.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub quality: QualityConfig,
    pub schemes: Vec<Scheme>,
    pub sweeps: SweepConfig,
    pub seed: u64,
    pub workers: usize,
    /// Deterministic evaluation episodes per sweep point.
    pub eval_episodes: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            quality: QualityConfig::default(),
            schemes: Scheme::ALL.to_vec(),
            sweeps: SweepConfig::default(),
            seed: 1,
            workers: 1,
            eval_episodes: 10,
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            ExperimentError::Config(m) => ExperimentError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::Config(m));
        self.env.validate().map_err(|e| ExperimentError::Config(format!("env: {e}")))?;
        self.ppo.validate().map_err(|e| ExperimentError::Config(format!("ppo: {e}")))?;
        if self.schemes.is_empty() {
            return fail("schemes: at least one scheme is required".into());
        }
        if self.workers == 0 {
            return fail("workers: must be at least 1".into());
        }
        if self.eval_episodes == 0 {
            return fail("eval_episodes: must be at least 1".into());
        }
        for kind in SweepKind::ALL {
            for &v in self.sweeps.values(kind) {
                let mut env = self.env.clone();
                kind.apply(&mut env, v);
                if let Err(e) = env.validate() {
                    return fail(format!("sweeps.{}: value {v}: {e}", kind.key()));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn load_model(&self) -> Result<SurrogateModel, ExperimentError> {
        let model = match &self.quality.surrogate {
            Some(p) => SurrogateModel::load(p).map_err(|e| data_err(p.display(), e))?,
            None => default_surrogate(self.quality.kind),
        };
        if model.kind != self.quality.kind {
            return Err(ExperimentError::Config(format!(
                "quality.kind is {} but the surrogate models {}",
                self.quality.kind, model.kind
            )));
        }
        Ok(model)
    }

    pub fn env_for(&self, scheme: Scheme) -> EnvConfig {
        let mut env = self.env.clone();
        env.scheme = scheme;
        env
    }
}

impl SweepConfig {
    pub fn values(&self, kind: SweepKind) -> &[f64] {
        match kind {
            SweepKind::Kappa => &self.kappa,
            SweepKind::TMax => &self.t_max_ms,
            SweepKind::QMin => &self.q_min_db,
            SweepKind::Bandwidth => &self.bandwidth_mhz,
        }
    }
}

/// Which configuration knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Kappa,
    TMax,
    QMin,
    Bandwidth,
}

impl SweepKind {
    pub const ALL: [SweepKind; 4] = [SweepKind::Kappa, SweepKind::TMax, SweepKind::QMin, SweepKind::Bandwidth];

    pub fn key(self) -> &'static str {
        match self {
            SweepKind::Kappa => "kappa",
            SweepKind::TMax => "t_max_ms",
            SweepKind::QMin => "q_min_db",
            SweepKind::Bandwidth => "bandwidth_mhz",
        }
    }

    /// Writes a sweep value (in the units of `key`) into an env config.
    pub fn apply(self, env: &mut EnvConfig, value: f64) {
        match self {
            SweepKind::Kappa => env.qos.kappa = value,
            SweepKind::TMax => env.qos.t_max_s = value * 1e-3,
            SweepKind::QMin => env.qos.q_min = value,
            SweepKind::Bandwidth => env.channel.bandwidth_hz = value * 1e6,
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kappa" => Ok(SweepKind::Kappa),
            "t_max" | "t_max_ms" => Ok(SweepKind::TMax),
            "q_min" | "q_min_db" => Ok(SweepKind::QMin),
            "bandwidth" | "bandwidth_mhz" => Ok(SweepKind::Bandwidth),
            other => Err(format!(
                "unknown sweep `{other}` (expected kappa, t_max, q_min or bandwidth)"
            )),
        }
    }
}

/// Replay information written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub schemes: Vec<Scheme>,
    pub package: String,
    pub version: String,
    pub outputs: Vec<String>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, outputs: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            workers: cfg.workers,
            schemes: cfg.schemes.clone(),
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
            config: cfg.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, ExperimentError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        std::fs::write(&path, text).map_err(|e| data_err(path.display(), e))?;
        Ok(path)
    }
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, ExperimentError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| data_err(path.display(), e))
}

fn ensure_dir(dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|e| data_err(dir.display(), e))
}

pub const REWARD_CSV_HEADER: &str = "episode,mean_reward,scheme,metric";

pub fn training_log_name(scheme: Scheme) -> String {
    format!("train_{}.csv", scheme.as_str())
}

pub fn checkpoint_name(scheme: Scheme) -> String {
    format!("checkpoint_{}.json", scheme.as_str())
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub scheme: Scheme,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub history: Vec<EpisodeLog>,
}

/// Trains one policy per configured scheme with shared seeds and writes a
/// checkpoint and training log per scheme, a combined reward curve and the
/// run manifest into `out`.
pub fn run_train(
    cfg: &ExperimentConfig,
    out: &Path,
    mut progress: impl FnMut(Scheme, &EpisodeLog),
) -> Result<Vec<TrainArtifacts>, ExperimentError> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    ensure_dir(out)?;
    let mut artifacts = Vec::with_capacity(cfg.schemes.len());
    let mut outputs = Vec::new();
    for &scheme in &cfg.schemes {
        let env = cfg.env_for(scheme);
        let outcome = train_with_callback(&env, &model, &cfg.ppo, cfg.seed, cfg.workers, |row| {
            progress(scheme, row)
        })?;
        let log = out.join(training_log_name(scheme));
        write_train_log(create_file(&log)?, &outcome.history).map_err(|e| data_err(log.display(), e))?;
        let checkpoint = out.join(checkpoint_name(scheme));
        Checkpoint {
            ppo: cfg.ppo.clone(),
            env,
            update_counter: outcome.learner.updates,
            policy: outcome.policy,
        }
        .save(&checkpoint)
        .map_err(|e| data_err(checkpoint.display(), e))?;
        outputs.push(training_log_name(scheme));
        outputs.push(checkpoint_name(scheme));
        artifacts.push(TrainArtifacts {
            scheme,
            checkpoint,
            log,
            history: outcome.history,
        });
    }
    let curve = out.join("rewards.csv");
    let mut w = create_file(&curve)?;
    let write = |w: &mut std::io::BufWriter<std::fs::File>| -> std::io::Result<()> {
        writeln!(w, "{REWARD_CSV_HEADER}")?;
        for a in &artifacts {
            for row in &a.history {
                writeln!(w, "{},{},{},{}", row.episode, row.mean_reward, a.scheme.as_str(), cfg.quality.kind)?;
            }
        }
        w.flush()
    };
    write(&mut w).map_err(|e| data_err(curve.display(), e))?;
    outputs.push("rewards.csv".into());
    Manifest::new("train", cfg, outputs).write(out)?;
    Ok(artifacts)
}

/// Per-user scores from deterministic evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub scores: Vec<ScoreBreakdown>,
    pub mean_reward: f64,
}

impl EvalSummary {
    fn mean_of(&self, f: impl Fn(&ScoreBreakdown) -> f64) -> f64 {
        self.scores.iter().map(f).sum::<f64>() / self.scores.len() as f64
    }

    pub fn mean_total(&self) -> f64 {
        self.mean_of(|s| s.total)
    }

    pub fn mean_delay_score(&self) -> f64 {
        self.mean_of(|s| s.delay_score)
    }

    pub fn mean_quality_score(&self) -> f64 {
        self.mean_of(|s| s.quality_score)
    }

    pub fn cdf(&self, kind: ScoreKind) -> EmpiricalCdf {
        let v: Vec<f64> = self.scores.iter().map(|s| kind.pick(s)).collect();
        score_cdf(&v).expect("scores are finite and non-empty")
    }
}

/// Runs `episodes` noise-free episodes of a checkpointed policy.
pub fn evaluate_policy(
    ck: &Checkpoint,
    env_cfg: &EnvConfig,
    model: &SurrogateModel,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary, ExperimentError> {
    ck.check_compatible(env_cfg)?;
    let mut env = Env::new(env_cfg.clone(), model.clone())?;
    let mut scores = Vec::new();
    let mut reward = 0.0;
    let mut slots = 0usize;
    for e in 0..episodes as u64 {
        for rec in evaluate_episode(&mut env, &ck.policy, EVAL_EPISODE_BASE + e, seed)? {
            reward += rec.reward;
            slots += 1;
            scores.extend(rec.per_user);
        }
    }
    Ok(EvalSummary {
        scores,
        mean_reward: reward / slots as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Total,
    Delay,
    Quality,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 3] = [ScoreKind::Total, ScoreKind::Delay, ScoreKind::Quality];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Total => "total",
            ScoreKind::Delay => "delay",
            ScoreKind::Quality => "quality",
        }
    }

    pub fn pick(self, s: &ScoreBreakdown) -> f64 {
        match self {
            ScoreKind::Total => s.total,
            ScoreKind::Delay => s.delay_score,
            ScoreKind::Quality => s.quality_score,
        }
    }
}

/// One evaluated point: a scheme under one sweep setting (or the base
/// configuration when `sweep` is `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub scheme: Scheme,
    pub sweep: Option<SweepKind>,
    pub value: f64,
    pub summary: EvalSummary,
}

pub const SWEEP_CSV_HEADER: &str = "scheme,sweep,value,mean_reward,mean_total,mean_delay_score,mean_quality_score";
pub const CDF_CSV_HEADER: &str = "scheme,sweep,value,score,threshold,fraction";

fn sweep_label(s: Option<SweepKind>) -> &'static str {
    s.map(SweepKind::key).unwrap_or("base")
}

pub fn write_sweep_csv<W: Write>(mut out: W, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.scheme.as_str(),
            sweep_label(p.sweep),
            p.value,
            p.summary.mean_reward,
            p.summary.mean_total(),
            p.summary.mean_delay_score(),
            p.summary.mean_quality_score()
        )?;
    }
    Ok(())
}

pub fn write_cdf_csv<W: Write>(mut out: W, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(out, "{CDF_CSV_HEADER}")?;
    for p in points {
        for kind in ScoreKind::ALL {
            let cdf = p.summary.cdf(kind);
            for (t, f) in cdf.thresholds.iter().zip(&cdf.fractions) {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    p.scheme.as_str(),
                    sweep_label(p.sweep),
                    p.value,
                    kind.as_str(),
                    t,
                    f
                )?;
            }
        }
    }
    Ok(())
}

/// Evaluates each checkpoint at every value of `sweep` (or once at the
/// configured settings when `sweep` is `None`).
pub fn run_sweep(
    cfg: &ExperimentConfig,
    checkpoints: &[Checkpoint],
    sweep: Option<SweepKind>,
) -> Result<Vec<SweepPoint>, ExperimentError> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let mut points = Vec::new();
    for ck in checkpoints {
        let scheme = ck.env.scheme;
        let base = cfg.env_for(scheme);
        let settings: Vec<(f64, EnvConfig)> = match sweep {
            None => vec![(f64::NAN, base)],
            Some(kind) => cfg
                .sweeps
                .values(kind)
                .iter()
                .map(|&v| {
                    let mut env = base.clone();
                    kind.apply(&mut env, v);
                    (v, env)
                })
                .collect(),
        };
        for (value, env) in settings {
            let summary = evaluate_policy(ck, &env, &model, cfg.eval_episodes, cfg.seed)?;
            points.push(SweepPoint {
                scheme,
                sweep,
                value,
                summary,
            });
        }
    }
    Ok(points)
}

/// Loads `checkpoint_<scheme>.json` for every configured scheme from `dir`.
pub fn load_checkpoints(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Checkpoint>, ExperimentError> {
    cfg.schemes
        .iter()
        .map(|&s| {
            let p = dir.join(checkpoint_name(s));
            Checkpoint::load(&p).map_err(|e| data_err(p.display(), e))
        })
        .collect()
}

/// Runs sweeps and writes `sweep_<kind>.csv` and `cdf_<kind>.csv` (or
/// `eval.csv` / `cdf_base.csv`), one episode trace per scheme for the base
/// evaluation, and the manifest.
pub fn run_eval(
    cfg: &ExperimentConfig,
    checkpoints: &[Checkpoint],
    sweeps: &[Option<SweepKind>],
    out: &Path,
) -> Result<Vec<SweepPoint>, ExperimentError> {
    ensure_dir(out)?;
    let mut outputs = Vec::new();
    let mut all = Vec::new();
    for &sweep in sweeps {
        let points = run_sweep(cfg, checkpoints, sweep)?;
        let (table, cdfs) = match sweep {
            None => ("eval.csv".to_string(), "cdf_base.csv".to_string()),
            Some(k) => (format!("sweep_{}.csv", k.key()), format!("cdf_{}.csv", k.key())),
        };
        let p = out.join(&table);
        write_sweep_csv(create_file(&p)?, &points).map_err(|e| data_err(p.display(), e))?;
        let p = out.join(&cdfs);
        write_cdf_csv(create_file(&p)?, &points).map_err(|e| data_err(p.display(), e))?;
        outputs.push(table);
        outputs.push(cdfs);
        if sweep.is_none() {
            let model = cfg.load_model()?;
            for ck in checkpoints {
                let env_cfg = cfg.env_for(ck.env.scheme);
                let mut env = Env::new(env_cfg, model.clone())?;
                let recs = evaluate_episode(&mut env, &ck.policy, EVAL_EPISODE_BASE, cfg.seed)?;
                let name = format!("trace_{}.jsonl", ck.env.scheme.as_str());
                let p = out.join(&name);
                write_trace_jsonl(create_file(&p)?, &recs).map_err(|e| data_err(p.display(), e))?;
                outputs.push(name);
            }
        }
        all.extend(points);
    }
    Manifest::new("eval", cfg, outputs).write(out)?;
    Ok(all)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub ws_psnr_db: f64,
    pub ws_ssim_db: f64,
}

pub const METRIC_CSV_HEADER: &str = "name,ws_psnr_db,ws_ssim_db";

fn metric_err(context: impl fmt::Display, e: MetricError) -> ExperimentError {
    data_err(context, e)
}

fn frame_err(path: &Path, e: FrameError) -> ExperimentError {
    data_err(path.display(), e)
}

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, ExperimentError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| data_err(dir.display(), e))? {
        let entry = entry.map_err(|e| data_err(dir.display(), e))?;
        let path = entry.path();
        if path.is_file() {
            out.insert(entry.file_name().to_string_lossy().into_owned(), path);
        }
    }
    Ok(out)
}

fn metric_pair(name: String, a: &Path, b: &Path) -> Result<MetricRow, ExperimentError> {
    let x = load_frame(a).map_err(|e| frame_err(a, e))?;
    let y = load_frame(b).map_err(|e| frame_err(b, e))?;
    Ok(MetricRow {
        ws_psnr_db: ws_psnr(&x, &y).map_err(|e| metric_err(&name, e))?,
        ws_ssim_db: ws_ssim(&x, &y).map_err(|e| metric_err(&name, e))?,
        name,
    })
}

/// WS-PSNR and WS-SSIM for a file pair or for same-named files in two
/// directories.
pub fn run_metrics(a: &Path, b: &Path) -> Result<Vec<MetricRow>, ExperimentError> {
    if a.is_dir() && b.is_dir() {
        let fa = image_files(a)?;
        let fb = image_files(b)?;
        let unpaired: Vec<&str> = fa
            .keys()
            .filter(|k| !fb.contains_key(*k))
            .chain(fb.keys().filter(|k| !fa.contains_key(*k)))
            .map(String::as_str)
            .collect();
        if !unpaired.is_empty() {
            return Err(ExperimentError::Data(format!("unpaired files: {}", unpaired.join(", "))));
        }
        fa.into_iter().map(|(name, pa)| metric_pair(name.clone(), &pa, &fb[&name])).collect()
    } else if a.is_file() && b.is_file() {
        let name = a.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(vec![metric_pair(name, a, b)?])
    } else {
        let missing = if !a.exists() { a } else { b };
        Err(ExperimentError::Data(format!(
            "{}: expected two files or two directories",
            missing.display()
        )))
    }
}

pub fn write_metric_csv<W: Write>(mut out: W, rows: &[MetricRow]) -> std::io::Result<()> {
    writeln!(out, "{METRIC_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.name, format_db(r.ws_psnr_db), format_db(r.ws_ssim_db))?;
    }
    Ok(())
}

/// Fits a polynomial surrogate to a sample CSV.
pub fn run_fit_quality(samples: &Path, degree: usize) -> Result<SurrogateModel, ExperimentError> {
    let file = std::fs::File::open(samples).map_err(|e| data_err(samples.display(), e))?;
    let (kind, data) =
        read_samples(std::io::BufReader::new(file)).map_err(|e: QualityError| data_err(samples.display(), e))?;
    fit_surrogate(kind, &data, degree).map_err(|e| data_err(samples.display(), e))
}

/// Writes `user_<u>.csv` head traces for `users` viewers.
pub fn run_trace_synth(
    out: &Path,
    users: usize,
    duration_s: f64,
    dt_s: f64,
    seed: u64,
) -> Result<Vec<PathBuf>, ExperimentError> {
    ensure_dir(out)?;
    (0..users)
        .map(|u| {
            let trace = synth_head_trace(mix_seed(&[seed, u as u64]), duration_s, dt_s)
                .map_err(|e: FovError| ExperimentError::Config(e.to_string()))?;
            let p = out.join(format!("user_{u}.csv"));
            trace.write_csv(create_file(&p)?).map_err(|e| data_err(p.display(), e))?;
            Ok(p)
        })
        .collect()
}
