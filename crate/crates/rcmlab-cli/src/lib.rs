//! Experiment runner behind the `rcmlab` binary: config resolution, hashing,
//! seeding, parallel execution and result files.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rcmlab::io::Table;
use rcmlab::rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub mod experiments;

use experiments::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    EnvSample,
    Walk,
    HkSolve,
    LltQuenched,
    LltAnnealed,
    LltDynamic,
    Sigma,
    RegCheck,
    GlSim,
    GlCov,
    GlScaling,
    GlGff,
    DiagBounds,
    Osc,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::EnvSample => "env-sample",
            Kind::Walk => "walk",
            Kind::HkSolve => "hk-solve",
            Kind::LltQuenched => "llt-quenched",
            Kind::LltAnnealed => "llt-annealed",
            Kind::LltDynamic => "llt-dynamic",
            Kind::Sigma => "sigma",
            Kind::RegCheck => "reg-check",
            Kind::GlSim => "gl-sim",
            Kind::GlCov => "gl-cov",
            Kind::GlScaling => "gl-scaling",
            Kind::GlGff => "gl-gff",
            Kind::DiagBounds => "diag-bounds",
            Kind::Osc => "osc",
        }
    }

    pub fn all() -> &'static [Kind] {
        Kind::value_variants()
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad config, with the offending field path.
    Config { path: String, reason: String },
    Run(rcmlab::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { path, reason } => write!(f, "invalid config at `{path}`: {reason}"),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rcmlab::Error> for CliError {
    fn from(e: rcmlab::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), reason: reason.into() }
    }

    /// 2 for validation errors, 3 for numerical guards, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use rcmlab::Error as E;
        match self {
            CliError::Config { .. } => 2,
            CliError::Run(e) if e.is_guard() => 3,
            CliError::Run(E::InvalidParam { .. } | E::EvenSide(_) | E::VertexOutside(_) | E::BallExceedsBox { .. } | E::NotPeriodic) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Top-level config file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Must match the experiment named on the command line when present.
    #[serde(default)]
    pub experiment: Option<Kind>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: Option<Value>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(if path == "." { "config".to_string() } else { path }, e.into_inner().to_string())
        })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Parameters of one experiment kind.
pub trait Experiment: Serialize + DeserializeOwned + Default {
    fn validate(&self) -> CliResult<()>;
    fn run(&self, ctx: &Context) -> CliResult<Output>;
}

/// Seeding context of a run.
#[derive(Clone, Debug)]
pub struct Context {
    pub kind: Kind,
    pub master_seed: u64,
}

impl Context {
    /// Stream seed for a task path below this experiment.
    pub fn seed(&self, path: &[&str]) -> u64 {
        let mut keys = vec![rng::label(self.kind.name())];
        keys.extend(path.iter().map(|p| rng::label(p)));
        rng::derive(self.master_seed, &keys)
    }
}

/// Tables and JSON documents produced by an experiment.
#[derive(Debug, Default)]
pub struct Output {
    pub tables: Vec<(String, Table)>,
    pub documents: Vec<(String, Value)>,
    pub summary: Value,
}

/// A config with defaults filled in.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub kind: Kind,
    pub master_seed: u64,
    pub params: Value,
    pub hash: String,
}

fn parse_params<P: Experiment>(raw: Option<&Value>) -> CliResult<P> {
    let v = raw.cloned().unwrap_or_else(|| json!({}));
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "params".to_string() } else { format!("params.{path}") };
        CliError::config(path, e.into_inner().to_string())
    })
}

/// sha256 over the experiment name, master seed and resolved parameters;
/// keys are serialized in sorted order.
pub fn config_hash(kind: Kind, master_seed: u64, params: &Value) -> String {
    let canonical = json!({ "experiment": kind.name(), "master_seed": master_seed, "params": params }).to_string();
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn resolve_as<P: Experiment>(kind: Kind, file: &ConfigFile, seed: Option<u64>) -> CliResult<(P, Resolved)> {
    if let Some(k) = file.experiment {
        if k != kind {
            return Err(CliError::config("experiment", format!("config is for `{k}`, not `{kind}`")));
        }
    }
    let p: P = parse_params(file.params.as_ref())?;
    p.validate()?;
    let params = serde_json::to_value(&p).map_err(|e| CliError::config("params", e.to_string()))?;
    let master_seed = seed.unwrap_or(file.master_seed);
    let hash = config_hash(kind, master_seed, &params);
    Ok((p, Resolved { kind, master_seed, params, hash }))
}

macro_rules! by_kind {
    ($kind:expr, $f:ident ( $($arg:expr),* )) => {
        match $kind {
            Kind::EnvSample => $f::<EnvSample>($($arg),*),
            Kind::Walk => $f::<Walk>($($arg),*),
            Kind::HkSolve => $f::<HkSolve>($($arg),*),
            Kind::LltQuenched => $f::<LltQuenched>($($arg),*),
            Kind::LltAnnealed => $f::<LltAnnealed>($($arg),*),
            Kind::LltDynamic => $f::<LltDynamic>($($arg),*),
            Kind::Sigma => $f::<Sigma>($($arg),*),
            Kind::RegCheck => $f::<RegCheck>($($arg),*),
            Kind::GlSim => $f::<GlSim>($($arg),*),
            Kind::GlCov => $f::<GlCov>($($arg),*),
            Kind::GlScaling => $f::<GlScaling>($($arg),*),
            Kind::GlGff => $f::<GlGff>($($arg),*),
            Kind::DiagBounds => $f::<DiagBounds>($($arg),*),
            Kind::Osc => $f::<Osc>($($arg),*),
        }
    };
}

fn resolve_only<P: Experiment>(kind: Kind, file: &ConfigFile, seed: Option<u64>) -> CliResult<Resolved> {
    resolve_as::<P>(kind, file, seed).map(|(_, r)| r)
}

/// Parse and check a config without running it.
pub fn validate(kind: Kind, file: &ConfigFile, seed: Option<u64>) -> CliResult<Resolved> {
    by_kind!(kind, resolve_only(kind, file, seed))
}

fn default_params<P: Experiment>() -> Value {
    serde_json::to_value(P::default()).expect("defaults serialize")
}

/// Every parameter of an experiment with its default value.
pub fn describe(kind: Kind) -> Value {
    json!({ "experiment": kind.name(), "params": by_kind!(kind, default_params()) })
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub jobs: usize,
    pub seed: Option<u64>,
}

fn execute<P: Experiment>(kind: Kind, file: &ConfigFile, seed: Option<u64>) -> CliResult<(Resolved, Output)> {
    let (p, resolved) = resolve_as::<P>(kind, file, seed)?;
    let ctx = Context { kind, master_seed: resolved.master_seed };
    let out = p.run(&ctx)?;
    Ok((resolved, out))
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Run an experiment and write its CSV files, JSON documents and
/// `manifest.json` into `opts.out`. Returns the manifest.
pub fn run(kind: Kind, file: &ConfigFile, opts: &RunOptions) -> CliResult<Value> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::config("--jobs", e.to_string()))?;
    let (resolved, output) = pool.install(|| by_kind!(kind, execute(kind, file, opts.seed)))?;
    std::fs::create_dir_all(&opts.out)?;
    let mut files = Vec::new();
    for (name, table) in output.tables {
        let path = opts.out.join(format!("{name}.csv"));
        let rows = table.rows.len();
        table.with_leading_column("config_hash", &resolved.hash).write(&path)?;
        files.push(json!({ "file": format!("{name}.csv"), "rows": rows, "sha256": sha256_file(&path)? }));
    }
    for (name, mut doc) in output.documents {
        if let Value::Object(m) = &mut doc {
            m.insert("config_hash".into(), Value::String(resolved.hash.clone()));
        }
        let path = opts.out.join(format!("{name}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
        files.push(json!({ "file": format!("{name}.json"), "sha256": sha256_file(&path)? }));
    }
    let manifest = json!({
        "experiment": kind.name(),
        "config_hash": resolved.hash,
        "master_seed": resolved.master_seed,
        "experiment_seed": Context { kind, master_seed: resolved.master_seed }.seed(&[]),
        "seed_derivation": "derive(master_seed, [label(experiment), label(task)..., index...])",
        "versions": { "rcmlab": env!("CARGO_PKG_VERSION") },
        "params": resolved.params,
        "files": files,
        "summary": output.summary,
    });
    std::fs::write(opts.out.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("json") + "\n")?;
    Ok(manifest)
}
