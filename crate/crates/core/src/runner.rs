//! Batch driver: a JSON experiment config in, CSV and JSON artifacts out.
//!
//! Parsing happens in two stages. The envelope (`command`, `inputs`,
//! `params`, `seed`, `out_dir`) is read first; every other top-level key is
//! folded into `params`. The merged params are then decoded into the
//! command's own schema, which rejects unknown keys. Nothing is computed
//! until both stages succeed.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::grid::{DomainMask, DomainSpec};
use crate::lattice::RadiusLadder;
use crate::maximal::{distribution, fractional_maximal, weak_type_constant, MaximalConfig};
use crate::report::{num, nums, CheckReport};
use crate::solver::{solve, ProblemSpec, SolveOptions};
use crate::spaces::{generalized_lorentz_norm, lorentz_norm, morrey_scan, sigma_doubling_checks, weighted_lq_norm, LorentzIndices, MorreyShape, Psi, SigmaFunction};
use crate::verify::{
    check_comparison, check_energy_estimate, check_levelset, check_maximal_indicator, check_norm_transfer, check_vphi, random_family, shorthand,
    solve_checked, ComparisonParams, InstanceSpec, LevelSetParams, MatrixGen, ScalarGen, SpaceSpec, VectorGen,
};
use crate::weights::{
    a_infty_params, ellipticity_lambda, log_bmo_scan, muckenhoupt_aq_scan, scalar_weight_of, ScalarWeight, SubsetFamily, WeightRole,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Malformed config or parameters; nothing was computed.
    #[error("config error: {0}")]
    Schema(String),
    /// A module failed while computing.
    #[error("numerical failure: {0}")]
    Numerical(Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(io) => RunError::Io(io),
            other => RunError::Numerical(other),
        }
    }
}

fn schema<T>(r: std::result::Result<T, Error>) -> Result<T, RunError> {
    r.map_err(|e| RunError::Schema(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Maxop,
    Norms,
    Weights,
    Verify,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Maxop => "maxop",
            Command::Norms => "norms",
            Command::Weights => "weights",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }
}

#[derive(Debug, Deserialize)]
struct Envelope {
    #[serde(default)]
    command: Option<String>,
    #[serde(default)]
    inputs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    params: Option<Map<String, Value>>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    #[serde(flatten)]
    rest: Map<String, Value>,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub inputs: BTreeMap<String, PathBuf>,
    pub params: Map<String, Value>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Relative paths resolve against this directory.
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// First parsing stage. `expected` is the command named on the command
    /// line, which must agree with the config's own `command` when both exist.
    pub fn from_json_str(text: &str, base_dir: &Path, expected: Option<Command>) -> Result<Self, RunError> {
        let env: Envelope = serde_json::from_str(text).map_err(|e| RunError::Schema(format!("line {} column {}: {e}", e.line(), e.column())))?;
        let named = match env.command.as_deref() {
            Some(s) => Some(Command::parse(s).ok_or_else(|| RunError::Schema(format!("field `command`: unknown command `{s}`")))?),
            None => None,
        };
        let command = match (named, expected) {
            (Some(a), Some(b)) if a != b => {
                return Err(RunError::Schema(format!("field `command`: config says `{}` but `{}` was requested", a.name(), b.name())))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(RunError::Schema("field `command`: missing".into())),
        };
        let mut params = env.params.unwrap_or_default();
        for (k, v) in env.rest {
            if params.contains_key(&k) {
                return Err(RunError::Schema(format!("field `{k}`: given both at top level and inside `params`")));
            }
            params.insert(k, v);
        }
        let cfg = ExperimentConfig { command, inputs: env.inputs, params, seed: env.seed.unwrap_or(0), out_dir: env.out_dir, base_dir: base_dir.to_path_buf() };
        for (name, path) in &cfg.inputs {
            let p = cfg.resolve(path);
            if !p.is_file() {
                return Err(RunError::Schema(format!("inputs.{name}: file {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, expected: Option<Command>) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(|e| RunError::Schema(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json_str(&text, &base, expected)
    }

    /// Named inputs first, then paths relative to the config's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if let Some(p) = path.to_str().and_then(|s| self.inputs.get(s)) {
            return if p.is_absolute() { p.clone() } else { self.base_dir.join(p) };
        }
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// SHA-256 of the canonical (key-sorted) effective config.
    pub fn hash(&self) -> String {
        let v = json!({
            "command": self.command.name(),
            "inputs": self.inputs,
            "params": Value::Object(self.params.clone()),
            "seed": self.seed,
        });
        let mut out = String::new();
        canonical(&v, &mut out);
        let digest = Sha256::digest(out.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                canonical(&m[k], out);
            }
            out.push('}');
        }
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical(x, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

fn decode<T: DeserializeOwned>(params: &Map<String, Value>, what: &str) -> Result<T, RunError> {
    let v = Value::Object(params.clone());
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { String::new() } else { format!(" at `{path}`") };
        RunError::Schema(format!("{what} params{at}: {}", e.into_inner()))
    })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    /// Worker threads for maximal scans; `None` keeps everything serial.
    pub parallel: Option<usize>,
    /// Replaces the config seed (the `DEGLAP_SEED` variable).
    pub seed_override: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub reports: Vec<CheckReport>,
}

fn default_n() -> Option<usize> {
    None
}

/// Domain choice shared by the field commands: either `n` for the unit
/// square with `n x n` cells, or a full `domain` object.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Where {
    #[serde(default = "default_n")]
    n: Option<usize>,
    #[serde(default)]
    domain: Option<DomainSpec>,
}

impl Where {
    fn mask(&self) -> Result<DomainMask, RunError> {
        match (&self.domain, self.n) {
            (Some(_), Some(_)) => Err(RunError::Schema("give either `n` or `domain`, not both".into())),
            (Some(d), None) => schema(d.build()),
            (None, n) => {
                let n = n.unwrap_or(33);
                if n < 3 {
                    return Err(RunError::Schema(format!("field `n`: need at least 3, got {n}")));
                }
                schema(crate::grid::make_rect_domain(n, n, 1.0 / (n - 1) as f64))
            }
        }
    }
}

fn split_where(params: &Map<String, Value>) -> (Where, Map<String, Value>) {
    let mut rest = params.clone();
    let n = rest.remove("n").and_then(|v| v.as_u64()).map(|v| v as usize);
    let domain = rest.remove("domain").and_then(|v| serde_json::from_value(v).ok());
    (Where { n, domain }, rest)
}

fn where_checked(params: &Map<String, Value>) -> Result<(Where, Map<String, Value>), RunError> {
    let mut probe = Map::new();
    for k in ["n", "domain"] {
        if let Some(v) = params.get(k) {
            probe.insert(k.into(), v.clone());
        }
    }
    let _: Where = decode(&probe, "domain")?;
    Ok(split_where(params))
}

fn default_tol() -> f64 {
    1e-9
}
fn default_max_iter() -> usize {
    500
}
fn identity_weight() -> MatrixGen {
    MatrixGen::Identity
}
fn zero_vector() -> VectorGen {
    VectorGen::Zero
}
fn zero_scalar() -> ScalarGen {
    ScalarGen::Zero
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveParams {
    p: f64,
    #[serde(alias = "P", default = "identity_weight", deserialize_with = "shorthand")]
    weight: MatrixGen,
    #[serde(alias = "F", default = "zero_vector", deserialize_with = "shorthand")]
    forcing: VectorGen,
    #[serde(alias = "g", default = "zero_scalar", deserialize_with = "shorthand")]
    boundary: ScalarGen,
    #[serde(default)]
    delta: f64,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
}

fn default_levels() -> usize {
    32
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaxopParams {
    #[serde(alias = "f", deserialize_with = "shorthand")]
    field: ScalarGen,
    #[serde(default)]
    alpha: f64,
    #[serde(default)]
    rho_cut: Option<f64>,
    #[serde(default)]
    ladder: Option<RadiusLadder>,
    #[serde(default, deserialize_with = "opt_shorthand")]
    mu: Option<ScalarGen>,
    #[serde(default)]
    lambdas: Option<Vec<f64>>,
    #[serde(default = "default_levels")]
    levels: usize,
    #[serde(default)]
    weak_q: Option<f64>,
}

fn opt_shorthand<'de, D, T>(d: D) -> std::result::Result<Option<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: DeserializeOwned,
{
    shorthand(d).map(Some)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LorentzPair {
    q: f64,
    #[serde(deserialize_with = "extended_real")]
    s: f64,
}

fn extended_real<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let v = Value::deserialize(d)?;
    match &v {
        Value::Number(n) => n.as_f64().ok_or_else(|| serde::de::Error::custom("bad number")),
        Value::String(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
        _ => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {v}"))),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MorreyParams {
    psi: Psi,
    q: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LqParams {
    #[serde(deserialize_with = "shorthand")]
    omega: ScalarGen,
    q: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormsParams {
    #[serde(alias = "f", deserialize_with = "shorthand")]
    field: ScalarGen,
    #[serde(default, deserialize_with = "opt_shorthand")]
    mu: Option<ScalarGen>,
    #[serde(default)]
    lorentz: Vec<LorentzPair>,
    #[serde(default)]
    sigma: Option<SigmaFunction>,
    #[serde(default)]
    morrey: Option<MorreyParams>,
    #[serde(default)]
    lq: Option<LqParams>,
}

fn default_aq() -> Vec<f64> {
    vec![2.0]
}
fn default_true() -> bool {
    true
}
fn default_power() -> f64 {
    1.0
}
fn default_centers() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsParams {
    #[serde(alias = "P", deserialize_with = "shorthand")]
    weight: MatrixGen,
    /// Exponent applied to `|P|` before the Muckenhoupt and A-infinity scans.
    #[serde(default = "default_power")]
    power: f64,
    #[serde(default = "default_aq")]
    aq: Vec<f64>,
    #[serde(default = "default_true")]
    log_bmo: bool,
    #[serde(default = "default_true")]
    a_infty: bool,
    #[serde(default = "default_centers")]
    a_infty_centers: usize,
}

fn default_trials() -> usize {
    100_000
}
fn default_samples() -> usize {
    10_000
}
fn default_count() -> usize {
    20
}
fn default_family_n() -> usize {
    33
}
fn default_max_log_bmo() -> f64 {
    0.1
}
fn default_instance() -> InstanceSpec {
    InstanceSpec::new(33, 2.0, MatrixGen::Identity, VectorGen::Fourier { modes: 3, amplitude: 1.0 }, ScalarGen::Fourier { modes: 3, amplitude: 1.0 }, 0)
}
fn default_center() -> [f64; 2] {
    [0.5, 0.5]
}
fn default_radius() -> f64 {
    0.5
}
fn default_comparison_eps() -> Vec<f64> {
    vec![0.5, 0.1]
}
fn default_rh_gammas() -> Vec<f64> {
    vec![1.0, 1.5, 2.0]
}
fn default_ls_gammas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_theta() -> f64 {
    0.5
}
fn default_ls_eps() -> Vec<f64> {
    vec![0.5, 0.1]
}
fn default_ls_levels() -> usize {
    49
}
fn default_cap() -> f64 {
    1e6
}
fn default_indicator_n() -> usize {
    129
}
fn default_j_max() -> u32 {
    3
}
fn default_slack() -> f64 {
    8.0
}
fn default_space() -> SpaceSpec {
    SpaceSpec::lorentz()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
enum VerifyParams {
    Vphi {
        p: f64,
        #[serde(default = "default_trials")]
        trials: usize,
    },
    Sigma {
        sigma: SigmaFunction,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    EnergyEstimate {
        #[serde(default = "default_count")]
        count: usize,
        #[serde(default = "default_family_n")]
        n: usize,
        #[serde(default = "default_max_log_bmo")]
        max_log_bmo: f64,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Comparison {
        #[serde(default = "default_instance")]
        instance: InstanceSpec,
        #[serde(default = "default_center")]
        center: [f64; 2],
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_comparison_eps")]
        eps: Vec<f64>,
        #[serde(default = "default_rh_gammas")]
        gammas: Vec<f64>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Levelset {
        #[serde(default = "default_instance")]
        instance: InstanceSpec,
        #[serde(default)]
        alpha: f64,
        #[serde(default = "default_theta")]
        theta: f64,
        #[serde(default = "default_ls_eps")]
        eps: Vec<f64>,
        #[serde(default = "default_ls_gammas")]
        gammas: Vec<f64>,
        #[serde(default)]
        lambdas: Option<Vec<f64>>,
        #[serde(default = "default_ls_levels")]
        levels: usize,
        #[serde(default = "default_cap")]
        cap: f64,
        #[serde(default, deserialize_with = "opt_shorthand")]
        mu: Option<ScalarGen>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    NormTransfer {
        #[serde(default = "default_instance")]
        instance: InstanceSpec,
        #[serde(default)]
        alpha: f64,
        #[serde(default = "default_space")]
        space: SpaceSpec,
        #[serde(default, deserialize_with = "opt_shorthand")]
        mu: Option<ScalarGen>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    MaximalIndicator {
        #[serde(default = "default_indicator_n")]
        n: usize,
        #[serde(default)]
        y: Option<[f64; 2]>,
        rho: f64,
        #[serde(default = "default_j_max")]
        j_max: u32,
        #[serde(default = "default_slack")]
        slack: f64,
    },
}

impl VerifyParams {
    fn check_name(&self) -> &'static str {
        match self {
            VerifyParams::Vphi { .. } => "vphi",
            VerifyParams::Sigma { .. } => "sigma",
            VerifyParams::EnergyEstimate { .. } => "energy_estimate",
            VerifyParams::Comparison { .. } => "comparison",
            VerifyParams::Levelset { .. } => "levelset",
            VerifyParams::NormTransfer { .. } => "norm_transfer",
            VerifyParams::MaximalIndicator { .. } => "maximal_indicator",
        }
    }

    fn resolve_paths(&mut self, cfg: &ExperimentConfig) {
        let inst = match self {
            VerifyParams::Comparison { instance, .. } | VerifyParams::Levelset { instance, .. } | VerifyParams::NormTransfer { instance, .. } => instance,
            _ => return,
        };
        resolve_matrix(&mut inst.weight, cfg);
        resolve_vector(&mut inst.forcing, cfg);
        resolve_scalar(&mut inst.boundary, cfg);
    }
}

fn resolve_scalar(g: &mut ScalarGen, cfg: &ExperimentConfig) {
    if let ScalarGen::Csv { path } = g {
        *path = cfg.resolve(path);
    }
}

fn resolve_vector(g: &mut VectorGen, cfg: &ExperimentConfig) {
    match g {
        VectorGen::Csv { path } => *path = cfg.resolve(path),
        VectorGen::Sum { terms } => terms.iter_mut().for_each(|t| resolve_vector(t, cfg)),
        _ => {}
    }
}

fn resolve_matrix(g: &mut MatrixGen, cfg: &ExperimentConfig) {
    if let MatrixGen::Csv { path } = g {
        *path = cfg.resolve(path);
    }
}

fn csv_paths_exist(paths: &[&Path]) -> Result<(), RunError> {
    for p in paths {
        if !p.is_file() {
            return Err(RunError::Schema(format!("referenced file {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn scalar_paths(g: &ScalarGen) -> Vec<&Path> {
    match g {
        ScalarGen::Csv { path } => vec![path.as_path()],
        _ => vec![],
    }
}

fn vector_paths(g: &VectorGen) -> Vec<&Path> {
    match g {
        VectorGen::Csv { path } => vec![path.as_path()],
        VectorGen::Sum { terms } => terms.iter().flat_map(vector_paths).collect(),
        _ => vec![],
    }
}

fn matrix_paths(g: &MatrixGen) -> Vec<&Path> {
    match g {
        MatrixGen::Csv { path } => vec![path.as_path()],
        _ => vec![],
    }
}

/// Writes via a temporary file in the same directory and renames it into place.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

struct Sink<'a> {
    dir: PathBuf,
    hash: &'a str,
    outcome: RunOutcome,
}

impl Sink<'_> {
    fn json(&mut self, name: &str, mut v: Value) -> Result<(), RunError> {
        v["config_hash"] = Value::String(self.hash.to_string());
        let mut s = serde_json::to_string_pretty(&v).map_err(|e| RunError::Numerical(e.into()))?;
        s.push('\n');
        let p = write_atomic(&self.dir, name, s.as_bytes())?;
        self.outcome.artifacts.push(p);
        Ok(())
    }

    fn report(&mut self, name: &str, mut rep: CheckReport) -> Result<(), RunError> {
        rep.config_hash = Some(self.hash.to_string());
        let p = write_atomic(&self.dir, name, rep.to_json().as_bytes())?;
        self.outcome.artifacts.push(p);
        self.outcome.reports.push(rep);
        Ok(())
    }

    /// CSV with a leading `# config_hash=` comment line.
    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>) -> Result<(), RunError> {
        let mut buf = format!("# config_hash={}\n", self.hash).into_bytes();
        write(&mut buf)?;
        let p = write_atomic(&self.dir, name, &buf)?;
        self.outcome.artifacts.push(p);
        Ok(())
    }
}

/// Runs a validated config. Reports and artifacts depend only on the config
/// and seed in serial mode.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed_override {
        cfg.seed = s;
    }
    let plan = Plan::build(&cfg)?;
    let dir = opts.out_dir.clone().or_else(|| cfg.out_dir.as_ref().map(|p| cfg.resolve(p))).unwrap_or_else(|| PathBuf::from("out"));
    let hash = cfg.hash();
    let mut sink = Sink { dir, hash: &hash, outcome: RunOutcome::default() };
    let parallel = opts.parallel.is_some();
    match opts.parallel {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().map_err(|e| RunError::Schema(format!("--parallel: {e}")))?;
            pool.install(|| plan.execute(&cfg, &mut sink, parallel))?;
        }
        None => plan.execute(&cfg, &mut sink, false)?,
    }
    Ok(sink.outcome)
}

/// Fully decoded work, built before anything runs.
enum Plan {
    Solve(DomainMask, SolveParams),
    Maxop(DomainMask, MaxopParams),
    Norms(DomainMask, NormsParams),
    Weights(DomainMask, WeightsParams),
    Verify(VerifyParams),
    Sweep { check: String, axis: String, values: Vec<Value>, runs: Vec<VerifyParams> },
}

fn sweep_axis(check: &str) -> &'static str {
    match check {
        "vphi" => "p",
        "sigma" => "samples",
        "energy_estimate" => "n",
        "comparison" => "radius",
        "levelset" => "eps",
        "norm_transfer" => "alpha",
        _ => "rho",
    }
}

impl Plan {
    fn build(cfg: &ExperimentConfig) -> Result<Self, RunError> {
        let params = &cfg.params;
        Ok(match cfg.command {
            Command::Solve => {
                let (w, rest) = where_checked(params)?;
                let mut p: SolveParams = decode(&rest, "solve")?;
                resolve_matrix(&mut p.weight, cfg);
                resolve_vector(&mut p.forcing, cfg);
                resolve_scalar(&mut p.boundary, cfg);
                csv_paths_exist(&[matrix_paths(&p.weight), vector_paths(&p.forcing), scalar_paths(&p.boundary)].concat())?;
                if !(p.p > 1.0 && p.p.is_finite()) {
                    return Err(RunError::Schema(format!("field `p`: need 1 < p < inf, got {}", p.p)));
                }
                if !(p.tol > 0.0) {
                    return Err(RunError::Schema(format!("field `tol`: must be positive, got {}", p.tol)));
                }
                Plan::Solve(w.mask()?, p)
            }
            Command::Maxop => {
                let (w, rest) = where_checked(params)?;
                let mut p: MaxopParams = decode(&rest, "maxop")?;
                resolve_scalar(&mut p.field, cfg);
                if let Some(m) = p.mu.as_mut() {
                    resolve_scalar(m, cfg);
                }
                csv_paths_exist(&[scalar_paths(&p.field), p.mu.as_ref().map(scalar_paths).unwrap_or_default()].concat())?;
                if let Some(l) = &p.lambdas {
                    if l.is_empty() || l.windows(2).any(|w| !(w[0] < w[1])) || l.iter().any(|v| !v.is_finite()) {
                        return Err(RunError::Schema("field `lambdas`: need a non-empty ascending list of finite levels".into()));
                    }
                }
                let mask = w.mask()?;
                let ladder = p.ladder.clone().unwrap_or_else(|| RadiusLadder::default_for(&mask));
                let cfg_m = schema(MaximalConfig::new(p.alpha, ladder))?;
                if let Some(r) = p.rho_cut {
                    schema(cfg_m.with_rho_cut(r))?;
                }
                Plan::Maxop(mask, p)
            }
            Command::Norms => {
                let (w, rest) = where_checked(params)?;
                let mut p: NormsParams = decode(&rest, "norms")?;
                resolve_scalar(&mut p.field, cfg);
                if let Some(m) = p.mu.as_mut() {
                    resolve_scalar(m, cfg);
                }
                if let Some(l) = p.lq.as_mut() {
                    resolve_scalar(&mut l.omega, cfg);
                }
                for pair in &p.lorentz {
                    schema(LorentzIndices::new(pair.q, pair.s))?;
                }
                if let Some(s) = &p.sigma {
                    schema(s.validate())?;
                }
                Plan::Norms(w.mask()?, p)
            }
            Command::Weights => {
                let (w, rest) = where_checked(params)?;
                let mut p: WeightsParams = decode(&rest, "weights")?;
                resolve_matrix(&mut p.weight, cfg);
                csv_paths_exist(&matrix_paths(&p.weight))?;
                Plan::Weights(w.mask()?, p)
            }
            Command::Verify => {
                let mut p: VerifyParams = decode(params, "verify")?;
                p.resolve_paths(cfg);
                Plan::Verify(p)
            }
            Command::Sweep => {
                let mut base = params.clone();
                let check = base.get("check").and_then(Value::as_str).ok_or_else(|| RunError::Schema("field `check`: missing".into()))?.to_string();
                let axis = match base.remove("axis") {
                    Some(Value::String(s)) => s,
                    Some(other) => return Err(RunError::Schema(format!("field `axis`: expected a key name, got {other}"))),
                    None => sweep_axis(&check).to_string(),
                };
                let values = match base.get(&axis) {
                    Some(Value::Array(a)) if !a.is_empty() => a.clone(),
                    _ => return Err(RunError::Schema(format!("field `{axis}`: sweep needs a non-empty array"))),
                };
                let mut runs = Vec::new();
                for v in &values {
                    let mut one = base.clone();
                    // The level-set check takes a list of eps; sweep one at a time.
                    let item = if check == "levelset" && axis == "eps" { Value::Array(vec![v.clone()]) } else { v.clone() };
                    one.insert(axis.clone(), item);
                    let mut p: VerifyParams = decode(&one, "sweep")?;
                    p.resolve_paths(cfg);
                    runs.push(p);
                }
                Plan::Sweep { check, axis, values, runs }
            }
        })
    }

    fn execute(&self, cfg: &ExperimentConfig, sink: &mut Sink<'_>, parallel: bool) -> Result<(), RunError> {
        match self {
            Plan::Solve(mask, p) => run_solve(cfg, mask, p, sink),
            Plan::Maxop(mask, p) => run_maxop(cfg, mask, p, sink, parallel),
            Plan::Norms(mask, p) => run_norms(cfg, mask, p, sink),
            Plan::Weights(mask, p) => run_weights(cfg, mask, p, sink),
            Plan::Verify(p) => {
                let rep = run_check(p, cfg.seed, parallel)?;
                sink.report(&format!("{}.json", p.check_name()), rep)
            }
            Plan::Sweep { check, axis, values, runs } => {
                let mut rows = Vec::new();
                for (i, (p, v)) in runs.iter().zip(values).enumerate() {
                    let rep = run_check(p, cfg.seed, parallel)?;
                    rows.push((v.to_string(), rep.name.clone(), rep.empirical_c, rep.passed));
                    sink.report(&format!("sweep_{check}_{i:03}.json", check = check), rep)?;
                }
                let axis = axis.clone();
                sink.csv("sweep.csv", move |buf| {
                    let mut w = csv::Writer::from_writer(buf);
                    w.write_record([axis.as_str(), "check", "empirical_C", "passed"])?;
                    for (v, name, c, ok) in rows {
                        w.write_record([v, name, c.map_or("inf".to_string(), crate::grid::fmt_f64), ok.to_string()])?;
                    }
                    w.flush()?;
                    Ok(())
                })
            }
        }
    }
}

fn mu_field(mask: &DomainMask, gen: &Option<ScalarGen>, seed: u64) -> Result<ScalarWeight, RunError> {
    match gen {
        None => Ok(ScalarWeight::unit(*mask.grid(), WeightRole::Mu)),
        Some(g) => Ok(ScalarWeight::new(g.build(mask, seed)?, WeightRole::Mu)?),
    }
}

fn run_solve(cfg: &ExperimentConfig, mask: &DomainMask, p: &SolveParams, sink: &mut Sink<'_>) -> Result<(), RunError> {
    let boundary = p.boundary.build(mask, cfg.seed)?;
    let forcing = p.forcing.build(mask, &boundary, cfg.seed)?;
    let weight = p.weight.build(mask, cfg.seed)?;
    let spec = ProblemSpec::new(mask.clone(), weight, p.p, forcing, boundary)?.with_delta(p.delta)?;
    let opts = SolveOptions { tol: p.tol, max_iter: p.max_iter, ..Default::default() };
    let rep = solve(&spec, &opts)?;
    let u = rep.u.clone();
    sink.csv("solution.csv", |buf| u.write_csv(buf))?;
    let trace = rep.trace.clone();
    sink.csv("trace.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["stage", "delta", "iteration", "energy", "step", "gradient_fallback"])?;
        for t in trace {
            w.write_record([
                t.stage.to_string(),
                crate::grid::fmt_f64(t.delta),
                t.iteration.to_string(),
                crate::grid::fmt_f64(t.energy),
                crate::grid::fmt_f64(t.step),
                t.gradient_fallback.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut meta = rep.metadata();
    meta["p"] = json!(p.p);
    meta["grid"] = serde_json::to_value(crate::report::GridInfo::from(mask.grid()))?;
    meta["weight"] = json!(p.weight.label());
    meta["forcing"] = json!(p.forcing.label());
    meta["boundary"] = json!(p.boundary.label());
    meta["seed"] = json!(cfg.seed);
    sink.json("solve.json", meta)
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Numerical(e.into())
    }
}

fn run_maxop(cfg: &ExperimentConfig, mask: &DomainMask, p: &MaxopParams, sink: &mut Sink<'_>, parallel: bool) -> Result<(), RunError> {
    let f = p.field.build(mask, cfg.seed)?;
    let ladder = p.ladder.clone().unwrap_or_else(|| RadiusLadder::default_for(mask));
    let mut mcfg = MaximalConfig::new(p.alpha, ladder)?.with_parallel(parallel);
    if let Some(r) = p.rho_cut {
        mcfg = mcfg.with_rho_cut(r)?;
    }
    let m = fractional_maximal(&f, mask, &mcfg)?;
    let mu = mu_field(mask, &p.mu, cfg.seed)?;
    let top = m.max_abs(mask);
    let lambdas = match &p.lambdas {
        Some(l) => l.clone(),
        None if top > 0.0 => (0..p.levels.max(1)).rev().map(|k| top * 2f64.powf(-(k as f64) / 2.0)).collect(),
        None => vec![1.0],
    };
    let curve = distribution(&m, &mu, mask, &lambdas)?;
    let mut meta = json!({
        "alpha": p.alpha,
        "radii": nums(&mcfg.effective_radii()),
        "max_value": num(top),
        "mu": mu.id(),
        "grid": crate::report::GridInfo::from(mask.grid()),
        "seed": cfg.seed,
    });
    if let Some(q) = p.weak_q {
        let est = weak_type_constant(&f, mask, &mcfg, q)?;
        meta["weak_type"] = json!({ "q": q, "constant": num(est.constant), "lambda": num(est.lambda) });
    }
    sink.csv("maximal.csv", |buf| m.write_csv(buf))?;
    sink.csv("distribution.csv", |buf| curve.write_csv(buf))?;
    sink.json("maxop.json", meta)
}

fn run_norms(cfg: &ExperimentConfig, mask: &DomainMask, p: &NormsParams, sink: &mut Sink<'_>) -> Result<(), RunError> {
    let f = p.field.build(mask, cfg.seed)?;
    let mu = mu_field(mask, &p.mu, cfg.seed)?;
    let mut rows: Vec<(String, String, f64)> = Vec::new();
    for pair in &p.lorentz {
        let idx = LorentzIndices::new(pair.q, pair.s)?;
        rows.push(("lorentz".into(), idx.label(), lorentz_norm(&f, &mu, mask, idx)?));
        if let Some(sigma) = &p.sigma {
            rows.push((format!("generalized_lorentz[{}]", sigma.label()), idx.label(), generalized_lorentz_norm(&f, &mu, mask, sigma, idx)?));
        }
    }
    if let Some(m) = &p.morrey {
        let shape = match &m.psi {
            Psi::Power { upsilon } => MorreyShape::power(*upsilon)?,
            Psi::BallArea => MorreyShape::ball_area(),
            Psi::Table { radii, values } => MorreyShape::table(radii.clone(), values.clone())?,
        };
        let ladder = RadiusLadder::default_for(mask);
        for &q in &m.q {
            let est = morrey_scan(&f, mask, &shape, q, &ladder)?;
            rows.push(("morrey".into(), format!("q={q},upsilon={}", shape.upsilon), est.value));
        }
    }
    if let Some(l) = &p.lq {
        let omega = ScalarWeight::new(l.omega.build(mask, cfg.seed)?, WeightRole::Omega)?;
        rows.push(("weighted_lq".into(), format!("q={}", l.q), weighted_lq_norm(&f, &omega, mask, l.q)?));
    }
    let table: Vec<Value> = rows.iter().map(|(s, i, v)| json!({ "space": s, "indices": i, "value": num(*v) })).collect();
    sink.csv("norms.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["space", "indices", "value"])?;
        for (s, i, v) in &rows {
            w.write_record([s.as_str(), i.as_str(), &crate::grid::fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    })?;
    sink.json("norms.json", json!({ "field": p.field.label(), "mu": mu.id(), "norms": table, "grid": crate::report::GridInfo::from(mask.grid()), "seed": cfg.seed }))
}

fn run_weights(cfg: &ExperimentConfig, mask: &DomainMask, p: &WeightsParams, sink: &mut Sink<'_>) -> Result<(), RunError> {
    let field = p.weight.build(mask, cfg.seed)?;
    let ladder = RadiusLadder::default_for(mask);
    let mut out = json!({
        "weight": p.weight.label(),
        "lambda": num(ellipticity_lambda(&field)),
        "grid": crate::report::GridInfo::from(mask.grid()),
        "seed": cfg.seed,
        "power": p.power,
    });
    if p.log_bmo {
        let est = log_bmo_scan(&field, mask, &ladder, 1)?;
        out["log_bmo"] = json!({ "value": num(est.value), "center": est.center, "radius": num(est.radius) });
    }
    let omega = scalar_weight_of(&field).powf(p.power)?;
    let mut aq = Vec::new();
    for &q in &p.aq {
        let est = muckenhoupt_aq_scan(&omega, mask, q, &ladder)?;
        aq.push(json!({ "q": q, "value": num(est.value), "center": est.center, "radius": num(est.radius) }));
    }
    out["aq"] = Value::Array(aq);
    if p.a_infty {
        let family = SubsetFamily::generate(mask, &ladder, p.a_infty_centers, 2, cfg.seed);
        let params = a_infty_params(&omega, mask, &family)?;
        out["a_infty"] = serde_json::to_value(params)?;
    }
    sink.json("weights.json", out)
}

fn instance_of(spec: &InstanceSpec, seed: u64) -> Result<crate::verify::Instance, RunError> {
    let mut s = spec.clone();
    s.seed = seed;
    Ok(s.build()?)
}

fn run_check(p: &VerifyParams, seed: u64, parallel: bool) -> Result<CheckReport, RunError> {
    let solve_opts = |tol: f64| SolveOptions { tol, ..Default::default() };
    let rep = match p {
        VerifyParams::Vphi { p, trials } => check_vphi(*p, *trials, seed)?,
        VerifyParams::Sigma { sigma, samples } => sigma_doubling_checks(sigma, *samples, seed)?,
        VerifyParams::EnergyEstimate { count, n, max_log_bmo, tol } => {
            let insts = random_family(seed, *count, *n, *max_log_bmo).iter().map(|s| s.build()).collect::<crate::Result<Vec<_>>>()?;
            check_energy_estimate(&insts, &solve_opts(*tol))?
        }
        VerifyParams::Comparison { instance, center, radius, eps, gammas, tol } => {
            let inst = instance_of(instance, seed)?;
            let params = ComparisonParams { center: *center, radius: *radius, eps: eps.clone(), gammas: gammas.clone() };
            check_comparison(&inst, &params, &solve_opts(*tol))?
        }
        VerifyParams::Levelset { instance, alpha, theta, eps, gammas, lambdas, levels, cap, mu, tol } => {
            let inst = instance_of(instance, seed)?;
            let u = solve_checked(&inst, &solve_opts(*tol))?.u;
            let mu = mu_field(&inst.spec.mask, mu, seed)?;
            let params = LevelSetParams {
                alpha: *alpha,
                theta: *theta,
                eps: eps.clone(),
                gammas: gammas.clone(),
                lambdas: lambdas.clone(),
                levels: *levels,
                cap: *cap,
                parallel,
            };
            check_levelset(&inst, &u, &mu, &params)?
        }
        VerifyParams::NormTransfer { instance, alpha, space, mu, tol } => {
            let inst = instance_of(instance, seed)?;
            let u = solve_checked(&inst, &solve_opts(*tol))?.u;
            let mu = mu_field(&inst.spec.mask, mu, seed)?;
            check_norm_transfer(&inst, &u, &mu, *alpha, space, parallel)?
        }
        VerifyParams::MaximalIndicator { n, y, rho, j_max, slack } => {
            if *n < 3 {
                return Err(RunError::Schema(format!("field `n`: need at least 3, got {n}")));
            }
            let mask = crate::grid::make_rect_domain(*n, *n, 1.0 / (*n - 1) as f64)?;
            let y = y.unwrap_or_else(|| mask.grid().center((n - 1) / 2, (n - 1) / 2));
            match check_maximal_indicator(&mask, y, *rho, *j_max, *slack, parallel) {
                Err(Error::InvalidParameter { name, reason }) => return Err(RunError::Schema(format!("field `{name}`: {reason}"))),
                other => other?,
            }
        }
    };
    Ok(rep)
}

/// Markdown and CSV tables over every check report in `dir`.
pub fn report_summary(dir: &Path, allow_mixed: bool) -> Result<Vec<PathBuf>, RunError> {
    let mut names: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect(),
        Err(e) => return Err(RunError::Schema(format!("cannot read {}: {e}", dir.display()))),
    };
    names.sort();
    let mut reports = Vec::new();
    for p in &names {
        let text = fs::read_to_string(p)?;
        if let Ok(rep) = serde_json::from_str::<CheckReport>(&text) {
            reports.push(rep);
        }
    }
    if reports.is_empty() {
        return Err(RunError::Schema(format!("{} holds no check reports", dir.display())));
    }
    let mut hashes: Vec<String> = reports.iter().map(|r| r.config_hash.clone().unwrap_or_else(|| "none".into())).collect();
    hashes.sort();
    hashes.dedup();
    if hashes.len() > 1 && !allow_mixed {
        return Err(RunError::Schema(format!("reports come from {} different configs ({}); pass --allow-mixed to combine them", hashes.len(), hashes.join(", "))));
    }
    let grid = |r: &CheckReport| r.grid.map_or("-".to_string(), |g| format!("{}x{} h={}", g.nx, g.ny, g.h));
    let c = |r: &CheckReport| r.empirical_c.map_or("inf".to_string(), |v| format!("{v:.6e}"));
    let mut md = format!("<!-- config_hash: {} -->\n\n", hashes.join(", "));
    md.push_str("| check | statement | empirical_C | result | grid |\n|---|---|---|---|---|\n");
    for r in &reports {
        let verdict = if r.passed { "pass" } else { "**FAIL**" };
        md.push_str(&format!("| {} | {} | {} | {} | {} |\n", r.name, r.statement, c(r), verdict, grid(r)));
    }
    let mut buf = format!("# config_hash={}\n", hashes.join(";")).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["check", "statement", "empirical_C", "passed", "grid"]).map_err(|e| RunError::Numerical(e.into()))?;
        for r in &reports {
            w.write_record([r.name.clone(), r.statement.clone(), c(r), r.passed.to_string(), grid(r)]).map_err(|e| RunError::Numerical(e.into()))?;
        }
        w.flush()?;
    }
    Ok(vec![write_atomic(dir, "summary.md", md.as_bytes())?, write_atomic(dir, "summary.csv", &buf)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_merges_top_level_params() {
        let cfg = ExperimentConfig::from_json_str(r#"{"command":"solve","p":2,"P":"identity","F":"zero","g":"affine"}"#, Path::new("."), None).unwrap();
        assert_eq!(cfg.command, Command::Solve);
        assert_eq!(cfg.params.len(), 4);
        assert!(Plan::build(&cfg).is_ok());
        let a = cfg.hash();
        let reordered = ExperimentConfig::from_json_str(r#"{"g":"affine","F":"zero","P":"identity","p":2,"command":"solve"}"#, Path::new("."), None).unwrap();
        assert_eq!(a, reordered.hash());
    }

    #[test]
    fn unknown_keys_are_schema_errors() {
        let cfg = ExperimentConfig::from_json_str(r#"{"command":"solve","p":2,"tole":1e-9}"#, Path::new("."), None).unwrap();
        let err = Plan::build(&cfg).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("tole"), "{err}");
        let err = ExperimentConfig::from_json_str(r#"{"command":"solve","p":2,"params":{"p":3}}"#, Path::new("."), None).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        let err = ExperimentConfig::from_json_str("{\"command\":\"solve\",\n\"p\":}", Path::new("."), None).err().unwrap();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
