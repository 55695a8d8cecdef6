//! Command-line front end: subcommands, flat `key=value` configs, seeded
//! runs, JSON on stdout, CSV files and exit codes (0 pass, 1 check failed, 2 usage).

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use crate::asymptotics::{
    audit_psi0, energy_audit, eps_grid, generic_psi0, rayleigh_audit, residual_audit, AuditSetup, SphereRule,
};
use crate::clifford::build_rep;
use crate::curvature::{
    b_inverse_residual, b_relation_residual, det_expansion_check, det_expansion_check_with, random_riemann,
    random_weyl, CurvatureJets, DET_QUARTIC_RR_DIRECT,
};
use crate::dirac_torus::{solve_ground_state, SpectralBasis, SpinStructure};
use crate::error::{Error, Result};
use crate::reduction::{
    check_hypotheses, default_scales, energy_bound_audit, minimize_nehari, random_direction, HypothesisConstants,
    IndefiniteProblem,
};
use crate::spinor_fields::{find_psi0, weyl_contraction_identity, QuarticCoeffs, TestSpinor, TestSpinorParams};
use crate::util::{linear_fit, random_unit, rng};

/// Environment variable naming the default CSV directory.
pub const OUT_DIR_ENV: &str = "SPINLAB_OUT_DIR";

// ---------------------------------------------------------------------------
// Value types

/// Dimension list: `5`, `4,5,6` or `2..8` (inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct Dims(pub Vec<usize>);

impl FromStr for Dims {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("invalid dimension list '{s}'");
        let v: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            (a..=b).collect()
        } else {
            s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<std::result::Result<_, _>>()?
        };
        if v.is_empty() {
            return Err(bad());
        }
        Ok(Dims(v))
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|m| m.to_string()).collect();
        f.write_str(&s.join(","))
    }
}

/// Comma-separated reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Reals(pub Vec<f64>);

impl FromStr for Reals {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v = s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("invalid number list '{s}'")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("non-finite entry in '{s}'"));
        }
        Ok(Reals(v))
    }
}

impl fmt::Display for Reals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&s.join(","))
    }
}

/// Geometric ε grid `lo:hi:n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsSpec {
    /// Smallest ε.
    pub lo: f64,
    /// Largest ε.
    pub hi: f64,
    /// Number of points.
    pub n: usize,
}

impl FromStr for EpsSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("invalid eps grid '{s}' (expected lo:hi:n)");
        let p: Vec<&str> = s.split(':').collect();
        if p.len() != 3 {
            return Err(bad());
        }
        Ok(EpsSpec {
            lo: p[0].trim().parse().map_err(|_| bad())?,
            hi: p[1].trim().parse().map_err(|_| bad())?,
            n: p[2].trim().parse().map_err(|_| bad())?,
        })
    }
}

impl fmt::Display for EpsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

macro_rules! display_serialize {
    ($($t:ty),*) => {$(
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_string())
            }
        }
    )*};
}
display_serialize!(Dims, Reals, EpsSpec);

/// Curvature data for the audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditData {
    /// Weyl tensor with conformal-normal-coordinate jets.
    Cnc,
    /// Weyl tensor with unconstrained random jets.
    Generic,
    /// Euclidean data.
    Flat,
}

/// Choice of `Ψ₀` for the audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Psi0Choice {
    /// Root of the Θ-derived quartic form.
    Cancel,
    /// Fixed generic unit spinor.
    Generic,
}

/// Nonlinearity for `solve generic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityKind {
    /// `¼|u|⁴`.
    Quartic,
    /// `¼Σ c_k (a_k·u)⁴` with random directions.
    SumOfQuartics,
}

// ---------------------------------------------------------------------------
// Argument structs

#[derive(Debug, Parser)]
#[command(name = "spinlab", version, about = "Spinorial Yamabe-type numerics: verifications, audits and solvers", args_override_self = true)]
struct Cli {
    /// Flat key=value file supplying flag values (command-line flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV output (default: $SPINLAB_OUT_DIR; none if unset).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Algebraic and analytic identity suites.
    #[command(subcommand)]
    Verify(Verify),
    /// ε-asymptotic audits.
    #[command(subcommand)]
    Audit(Audit),
    /// Root of the quartic form for random coefficients.
    Psi0(Psi0Args),
    /// Variational solvers.
    #[command(subcommand)]
    Solve(Solve),
}

#[derive(Debug, Subcommand)]
enum Verify {
    /// Clifford representation residuals.
    Clifford(CliffordArgs),
    /// Test-spinor equation residuals.
    Spinor(SpinorArgs),
    /// Metric-jet identities and the Ricci-flat contraction identity.
    Curvature(CurvatureArgs),
}

#[derive(Debug, Subcommand)]
enum Audit {
    /// Norms of the residual terms and their orders.
    Residual(AuditArgs),
    /// Energy decomposition terms.
    Energy(AuditArgs),
    /// Rayleigh quotient of the transplanted test spinor.
    Rayleigh(AuditArgs),
}

#[derive(Debug, Subcommand)]
enum Solve {
    /// Two-dimensional model problem.
    Toy(ToyArgs),
    /// Diagonal indefinite problem from a spectrum.
    Generic(GenericArgs),
    /// Truncated Dirac problem on the flat torus.
    Torus(TorusArgs),
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct CliffordArgs {
    /// Smallest dimension.
    #[arg(long, default_value_t = 2)]
    m_min: usize,
    /// Largest dimension.
    #[arg(long, default_value_t = 9)]
    m_max: usize,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SpinorArgs {
    /// Dimensions.
    #[arg(long, default_value = "2..8")]
    m: Dims,
    /// Random points per dimension.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Points are uniform in `[−radius, radius]^m`.
    #[arg(long, default_value_t = 2.0)]
    radius: f64,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Allowed deviation of the finite-difference slope from 2.
    #[arg(long, default_value_t = 0.2)]
    slope_tol: f64,
    /// Seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct CurvatureArgs {
    /// Dimensions.
    #[arg(long, default_value = "4,5,6")]
    m: Dims,
    /// Random tensors per dimension.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Points per tensor for the contraction identity.
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Jet identity tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Relative tolerance of the contraction identity.
    #[arg(long, default_value_t = 1e-10)]
    identity_tol: f64,
    /// Seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct Psi0Args {
    /// Dimensions.
    #[arg(long, default_value = "5")]
    m: Dims,
    /// Random coefficient sets per dimension.
    #[arg(long, default_value_t = 1)]
    sets: usize,
    /// Tolerance on `|F(Ψ₀)|`.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct AuditArgs {
    /// Dimension.
    #[arg(long, default_value_t = 6)]
    m: usize,
    /// ε grid `lo:hi:n`.
    #[arg(long, default_value = "1e-3:1e-1:8")]
    eps: EpsSpec,
    /// Curvature data (default: generic for residual, cnc otherwise).
    #[arg(long, value_enum)]
    data: Option<AuditData>,
    /// `Ψ₀` (default: generic for residual, cancel otherwise).
    #[arg(long, value_enum)]
    psi0: Option<Psi0Choice>,
    /// Cutoff radius.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Polar nodes of the sphere rule.
    #[arg(long, default_value_t = 5)]
    polar: usize,
    /// Azimuthal nodes of the sphere rule.
    #[arg(long, default_value_t = 10)]
    azimuth: usize,
    /// Allowed slope deviation.
    #[arg(long, default_value_t = 0.15)]
    slope_tol: f64,
    /// Seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ToyArgs {
    /// Random starts.
    #[arg(long, default_value_t = 20)]
    starts: usize,
    /// Gradient tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Hypothesis samples.
    #[arg(long, default_value_t = 10000)]
    samples: usize,
    /// Seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct GenericArgs {
    /// Diagonal spectrum; positive entries span `X`, negative entries `Y`.
    #[arg(long, default_value = "1,2,-1,-2", allow_hyphen_values = true)]
    spectrum: Reals,
    /// Nonlinearity.
    #[arg(long, value_enum, default_value_t = NonlinearityKind::SumOfQuartics)]
    nonlinearity: NonlinearityKind,
    /// Number of quartic terms.
    #[arg(long, default_value_t = 8)]
    terms: usize,
    /// Exponent `p` (default 4).
    #[arg(long)]
    p: Option<f64>,
    /// Growth constant `K` (default derived from the nonlinearity).
    #[arg(long)]
    k: Option<f64>,
    /// Growth exponent `μ` (default 0.75).
    #[arg(long)]
    mu: Option<f64>,
    /// Convexity constant `κ` (default 5/3).
    #[arg(long)]
    kappa: Option<f64>,
    /// Random starts.
    #[arg(long, default_value_t = 5)]
    starts: usize,
    /// Gradient tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Hypothesis samples.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
struct TorusArgs {
    /// Spin structure offsets `δ₁,δ₂`, each 0 or 0.5.
    #[arg(long, default_value = "0.5,0.5")]
    spin: Reals,
    /// Mode cutoff `Λ_max`.
    #[arg(long, default_value_t = 8.0)]
    modes: f64,
    /// Gradient tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Tolerance of the critical identity.
    #[arg(long, default_value_t = 1e-6)]
    identity_tol: f64,
    /// Starts (lowest modes plus random mixtures).
    #[arg(long, default_value_t = 3)]
    starts: usize,
    /// Seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

// ---------------------------------------------------------------------------
// Config files

/// Flat `key=value` configuration; `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    /// Entries by key.
    pub entries: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parse configuration text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("config line {}: expected key=value", n + 1)))?;
            let k = k.trim();
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-') {
                return Err(Error::InvalidParameter(format!("config line {}: invalid key '{k}'", n + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::InvalidParameter(format!("config line {}: duplicate key '{k}'", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// Canonical text: sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn from_args<T: Serialize>(args: &T) -> Self {
        let mut entries = BTreeMap::new();
        if let Ok(Value::Object(map)) = serde_json::to_value(args) {
            for (k, v) in map {
                let s = match v {
                    Value::Null => continue,
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                entries.insert(k, s);
            }
        }
        Self { entries }
    }

    fn as_flags(&self) -> Vec<String> {
        self.entries.iter().flat_map(|(k, v)| [format!("--{k}"), v.clone()]).collect()
    }
}

fn option_value(argv: &[String], name: &str) -> Option<String> {
    let flag = format!("--{name}");
    let eq = format!("--{name}=");
    argv.iter().enumerate().find_map(|(i, a)| {
        if *a == flag {
            argv.get(i + 1).cloned()
        } else {
            a.strip_prefix(&eq).map(str::to_string)
        }
    })
}

/// Position just past the subcommand path, where config flags are spliced.
fn leaf_position(argv: &[String]) -> usize {
    let mut i = 1;
    let mut words = 0;
    while i < argv.len() {
        let a = &argv[i];
        if a == "--config" || a == "--out" {
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            i += 1;
            continue;
        }
        words += 1;
        i += 1;
        if words == 1 && a == "psi0" || words == 2 {
            return i;
        }
    }
    argv.len()
}

// ---------------------------------------------------------------------------
// Running

struct CsvTable {
    name: String,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

struct Outcome {
    pass: bool,
    result: Value,
    tables: Vec<CsvTable>,
}

fn fmt_f(x: f64) -> String {
    format!("{x:e}")
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidDimension { .. }
        | Error::InvalidParameter(_)
        | Error::DimensionMismatch { .. }
        | Error::IndexOutOfRange { .. } => 2,
        _ => 1,
    }
}

fn emit_error(err: &mut dyn Write, kind: &str, message: &str) {
    let _ = writeln!(err, "{}", json!({ "error": kind, "message": message }));
}

/// Run with process arguments; prints to stdout/stderr and returns the exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Run with explicit output streams.
pub fn run_with(mut argv: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if argv.is_empty() {
        argv.push("spinlab".into());
    }
    if let Some(path) = option_value(&argv, "config") {
        let cfg = match std::fs::read_to_string(&path) {
            Ok(t) => RunConfig::parse(&t),
            Err(e) => Err(Error::InvalidParameter(format!("cannot read config '{path}': {e}"))),
        };
        match cfg {
            Ok(c) => {
                let at = leaf_position(&argv);
                argv.splice(at..at, c.as_flags());
            }
            Err(e) => {
                emit_error(err, "usage", &e.to_string());
                return 2;
            }
        }
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    emit_error(err, "usage", e.to_string().lines().next().unwrap_or("invalid arguments"));
                    2
                }
            };
        }
    };
    let out_dir = cli.out.clone().or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));
    let (name, config, seed, outcome) = dispatch(&cli.command);
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            let code = exit_code_for(&e);
            emit_error(err, if code == 2 { "usage" } else { "failure" }, &e.to_string());
            return code;
        }
    };
    let mut files = Vec::new();
    if let Some(dir) = &out_dir {
        for t in &outcome.tables {
            match write_csv(dir, t) {
                Ok(f) => files.push(f),
                Err(e) => {
                    emit_error(err, "io", &e);
                    return 1;
                }
            }
        }
    }
    let doc = json!({
        "command": name,
        "seed": seed,
        "config": config.entries,
        "pass": outcome.pass,
        "result": outcome.result,
        "files": files,
    });
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("JSON values serialize"));
    if outcome.pass {
        0
    } else {
        1
    }
}

fn write_csv(dir: &Path, t: &CsvTable) -> std::result::Result<String, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create '{}': {e}", dir.display()))?;
    let file = format!("{}.csv", t.name);
    let mut w = csv::Writer::from_path(dir.join(&file)).map_err(|e| e.to_string())?;
    w.write_record(&t.header).map_err(|e| e.to_string())?;
    for r in &t.rows {
        w.write_record(r).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())?;
    Ok(file)
}

fn dispatch(c: &Command) -> (&'static str, RunConfig, Option<u64>, Result<Outcome>) {
    match c {
        Command::Verify(Verify::Clifford(a)) => ("verify clifford", RunConfig::from_args(a), None, verify_clifford(a)),
        Command::Verify(Verify::Spinor(a)) => ("verify spinor", RunConfig::from_args(a), Some(a.seed), verify_spinor(a)),
        Command::Verify(Verify::Curvature(a)) => ("verify curvature", RunConfig::from_args(a), Some(a.seed), verify_curvature(a)),
        Command::Psi0(a) => ("psi0", RunConfig::from_args(a), Some(a.seed), psi0(a)),
        Command::Audit(x) => {
            let (name, kind, a) = match x {
                Audit::Residual(a) => ("audit residual", 0, a),
                Audit::Energy(a) => ("audit energy", 1, a),
                Audit::Rayleigh(a) => ("audit rayleigh", 2, a),
            };
            let resolved = AuditArgs {
                data: Some(a.data.unwrap_or(if kind == 0 { AuditData::Generic } else { AuditData::Cnc })),
                psi0: Some(a.psi0.unwrap_or(if kind == 0 { Psi0Choice::Generic } else { Psi0Choice::Cancel })),
                ..*a
            };
            (name, RunConfig::from_args(&resolved), Some(a.seed), audit(kind, &resolved))
        }
        Command::Solve(Solve::Toy(a)) => ("solve toy", RunConfig::from_args(a), Some(a.seed), solve_toy(a)),
        Command::Solve(Solve::Generic(a)) => ("solve generic", RunConfig::from_args(a), Some(a.seed), solve_generic(a)),
        Command::Solve(Solve::Torus(a)) => ("solve torus", RunConfig::from_args(a), Some(a.seed), solve_torus(a)),
    }
}

// ---------------------------------------------------------------------------
// Commands

fn verify_clifford(a: &CliffordArgs) -> Result<Outcome> {
    if a.m_min < 1 || a.m_max < a.m_min {
        return Err(Error::InvalidParameter("need 1 <= m-min <= m-max".into()));
    }
    let mut rows = Vec::new();
    let mut res = Vec::new();
    let mut pass = true;
    for m in a.m_min..=a.m_max {
        let rep = build_rep(m)?;
        let ac = rep.anticommutation_residual();
        let ah = rep.antihermitian_residual();
        pass &= ac <= a.tol && ah <= a.tol;
        res.push(json!({ "m": m, "spinor_dim": rep.spinor_dim(), "anticommutation": ac, "antihermitian": ah }));
        rows.push(vec![m.to_string(), rep.spinor_dim().to_string(), fmt_f(ac), fmt_f(ah)]);
    }
    Ok(Outcome {
        pass,
        result: json!({ "tolerance": a.tol, "dimensions": res }),
        tables: vec![CsvTable { name: "clifford".into(), header: vec!["m", "spinor_dim", "anticommutation", "antihermitian"], rows }],
    })
}

/// Worst analytic residual over random points and the finite-difference order.
fn spinor_suite(m: usize, samples: usize, radius: f64, seed: u64) -> Result<(f64, f64)> {
    let ts = TestSpinor::new(TestSpinorParams::standard(m)?)?;
    let mut r = rng(seed ^ (m as u64) << 32);
    let mut worst = 0.0f64;
    let mut pts = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x: Vec<f64> = (0..m).map(|_| r.gen_range(-radius..radius)).collect();
        worst = worst.max(ts.dirac_residual(&x)?);
        pts.push(x);
    }
    let hs = [4e-2, 2e-2, 1e-2, 5e-3];
    let mut slopes = Vec::new();
    for x in pts.iter().take(5) {
        let v: Vec<f64> = hs.iter().map(|h| ts.dirac_residual_fd(x, *h)).collect::<Result<_>>()?;
        let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = v.iter().map(|y| y.max(1e-300).ln()).collect();
        slopes.push(linear_fit(&lx, &ly).0);
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((worst, slopes[slopes.len() / 2]))
}

fn verify_spinor(a: &SpinorArgs) -> Result<Outcome> {
    if a.samples == 0 || !(a.radius > 0.0) {
        return Err(Error::InvalidParameter("samples and radius must be positive".into()));
    }
    let mut res = Vec::new();
    let mut rows = Vec::new();
    let mut pass = true;
    for &m in &a.m.0 {
        let (worst, slope) = spinor_suite(m, a.samples, a.radius, a.seed)?;
        let ok = worst <= a.tol && (slope - 2.0).abs() <= a.slope_tol;
        pass &= ok;
        res.push(json!({ "m": m, "max_residual": worst, "fd_slope": slope, "pass": ok }));
        rows.push(vec![m.to_string(), a.samples.to_string(), fmt_f(worst), format!("{slope:.6}")]);
    }
    Ok(Outcome {
        pass,
        result: json!({ "tolerance": a.tol, "dimensions": res }),
        tables: vec![CsvTable { name: "spinor".into(), header: vec!["m", "samples", "max_residual", "fd_slope"], rows }],
    })
}

fn verify_curvature(a: &CurvatureArgs) -> Result<Outcome> {
    if a.trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let mut rows = Vec::new();
    let mut res = Vec::new();
    let mut pass = true;
    for &m in &a.m.0 {
        let mut worst = [0.0f64; 5];
        for t in 0..a.trials {
            let s = a.seed.wrapping_mul(1_000_003).wrapping_add((m * 10_000 + t) as u64);
            let r = random_riemann(m, s);
            let j = CurvatureJets::random(m, s);
            worst[0] = worst[0].max(b_relation_residual(&r, &j));
            worst[1] = worst[1].max(b_inverse_residual(&r, &j));
            worst[2] = worst[2].max(det_expansion_check(&r, &j));
            worst[3] = worst[3].max(det_expansion_check_with(&r, &j, DET_QUARTIC_RR_DIRECT));
            if m >= 4 {
                let w = random_weyl(m, s)?;
                let ts = TestSpinor::new(TestSpinorParams::standard(m)?)?;
                let mut g = rng(s ^ 0xabcdef);
                for _ in 0..a.points {
                    let x: Vec<f64> = random_unit(&mut g, m).iter().map(|v| v * g.gen_range(0.1..3.0)).collect();
                    let (v, size) = weyl_contraction_identity(&ts, &w, &x)?;
                    worst[4] = worst[4].max(v / size.max(1e-300));
                }
            }
        }
        let ok = worst[0] <= a.tol && worst[1] <= a.tol && worst[3] <= a.tol && worst[4] <= a.identity_tol;
        pass &= ok;
        let names = ["b_squared_metric", "b_inverse", "det_stated_weight", "det_direct_weight", "ricci_flat_contraction"];
        for (n, w) in names.iter().zip(worst) {
            rows.push(vec![n.to_string(), m.to_string(), a.trials.to_string(), fmt_f(w)]);
        }
        res.push(json!({
            "m": m,
            "b_squared_metric": worst[0],
            "b_inverse": worst[1],
            "det_stated_weight": worst[2],
            "det_stated_weight_pass": worst[2] <= a.tol,
            "det_direct_weight": worst[3],
            "ricci_flat_contraction": worst[4],
            "pass": ok,
        }));
    }
    Ok(Outcome {
        pass,
        result: json!({ "tolerance": a.tol, "identity_tolerance": a.identity_tol, "dimensions": res }),
        tables: vec![CsvTable { name: "curvature".into(), header: vec!["identity", "m", "trials", "max_residual"], rows }],
    })
}

fn psi0(a: &Psi0Args) -> Result<Outcome> {
    let mut res = Vec::new();
    let mut rows = Vec::new();
    let mut pass = true;
    for &m in &a.m.0 {
        let rep = build_rep(m)?;
        for s in 0..a.sets.max(1) {
            let seed = a.seed.wrapping_add(s as u64);
            let q = QuarticCoeffs::random(m, seed);
            let p = find_psi0(&rep, &q)?;
            let ok = p.residual <= a.tol;
            pass &= ok;
            let comps: Vec<[f64; 2]> = p.psi0.iter().map(|c| [c.re, c.im]).collect();
            res.push(json!({ "m": m, "set": s, "residual": p.residual, "scale": p.scale, "psi0": comps }));
            for (i, c) in comps.iter().enumerate() {
                rows.push(vec![m.to_string(), s.to_string(), i.to_string(), fmt_f(c[0]), fmt_f(c[1])]);
            }
        }
    }
    Ok(Outcome {
        pass,
        result: json!({ "tolerance": a.tol, "roots": res }),
        tables: vec![CsvTable { name: "psi0".into(), header: vec!["m", "set", "component", "re", "im"], rows }],
    })
}

fn audit(kind: usize, a: &AuditArgs) -> Result<Outcome> {
    let data = a.data.expect("resolved");
    let setup = match data {
        AuditData::Cnc => AuditSetup::cnc(a.m, a.seed, a.delta)?,
        AuditData::Generic => AuditSetup::generic(a.m, a.seed, a.delta)?,
        AuditData::Flat => AuditSetup::flat(a.m, a.delta),
    };
    let psi = match a.psi0.expect("resolved") {
        Psi0Choice::Cancel => audit_psi0(&setup)?.psi0,
        Psi0Choice::Generic => generic_psi0(a.m),
    };
    let eps = eps_grid(a.eps.lo, a.eps.hi, a.eps.n)?;
    let rule = SphereRule::new(a.m, a.polar, a.azimuth)?;
    let mut rows = Vec::new();
    let (pass, result, name) = match kind {
        0 => {
            let rep = residual_audit(&setup, &psi, &eps, &rule)?;
            let mut pass = true;
            let mut checks = Vec::new();
            for t in &rep.terms {
                for (e, v) in eps.iter().zip(&t.values) {
                    rows.push(vec![t.name.clone(), fmt_f(*e), fmt_f(*v)]);
                }
                let slope = t.fit.as_ref().map(|f| f.slope);
                let ok = t.vanishes || t.log_factor || slope.is_some_and(|s| (s - t.expected).abs() <= a.slope_tol);
                pass &= ok;
                checks.push(json!({
                    "term": t.name, "slope": slope, "expected": t.expected,
                    "log_factor": t.log_factor, "vanishes": t.vanishes, "pass": ok,
                }));
            }
            (pass, json!({ "m": a.m, "eps": eps, "slope_tol": a.slope_tol, "terms": checks, "report": rep }), "residual")
        }
        1 => {
            let rep = energy_audit(&setup, &psi, &eps, &rule)?;
            for (e, row) in eps.iter().zip(&rep.j) {
                for (k, v) in row.iter().enumerate() {
                    rows.push(vec![format!("J{}", k + 1), fmt_f(*e), fmt_f(*v)]);
                }
            }
            let last = rep.j.len() - 1;
            let j1 = rep.j.iter().all(|r| r[0] == 0.0);
            let j57 = rep.j.iter().map(|r| r[4].abs().max(r[6].abs())).fold(0.0, f64::max);
            let j2_rel = (rep.j[last][1] - rep.j2_limit).abs() / rep.j2_limit;
            let j6_slope = rep.j6_fit.as_ref().map(|f| f.slope);
            let j6_neg = rep.j.iter().all(|r| r[5] < 0.0);
            let ratio = rep.j6_ratio[last];
            let checks = json!({
                "j1_zero": j1,
                "j5_j7_max": j57,
                "j2_limit_relative_error": j2_rel,
                "j2_error_slope": rep.j2_fit.as_ref().map(|f| f.slope),
                "j3_slope": rep.j3_fit.as_ref().map(|f| f.slope),
                "j6_slope": j6_slope,
                "j6_negative": j6_neg,
                "j6_ratio_smallest_eps": ratio,
                "critical_level_residual": rep.critical_level_residual,
            });
            let pass = j1
                && j57 <= 1e-12
                && j2_rel <= 1e-6
                && j6_slope.is_some_and(|s| (s - 4.0).abs() <= 0.1)
                && j6_neg
                && (ratio - 1.0).abs() <= 0.05
                && rep.critical_level_residual <= 1e-9;
            (pass, json!({ "m": a.m, "eps": eps, "checks": checks, "report": rep }), "energy")
        }
        _ => {
            let rep = rayleigh_audit(&setup, &psi, &eps, &rule)?;
            for (k, e) in eps.iter().enumerate() {
                rows.push(vec!["numerator".into(), fmt_f(*e), fmt_f(rep.numerator[k])]);
                rows.push(vec!["denominator".into(), fmt_f(*e), fmt_f(rep.denominator[k])]);
                rows.push(vec!["quotient".into(), fmt_f(*e), fmt_f(rep.quotient[k])]);
                rows.push(vec!["excess".into(), fmt_f(*e), fmt_f(rep.excess[k])]);
            }
            let n = eps.len();
            let num_rel = (rep.numerator[n - 1] - rep.numerator_limit).abs() / rep.numerator_limit;
            let den_rel = (rep.denominator[n - 1] - rep.denominator_limit).abs() / rep.denominator_limit;
            let positive = n >= 2 && rep.excess[n - 1] > 0.0 && rep.excess[n - 2] > 0.0;
            let pass = num_rel <= 0.01 && den_rel <= 0.01 && positive;
            let checks = json!({
                "numerator_relative_error": num_rel,
                "denominator_relative_error": den_rel,
                "excess_positive_at_two_smallest_eps": positive,
                "excess_positive_everywhere": rep.excess.iter().all(|x| *x > 0.0),
            });
            (pass, json!({ "m": a.m, "eps": eps, "checks": checks, "report": rep }), "rayleigh")
        }
    };
    Ok(Outcome {
        pass,
        result,
        tables: vec![CsvTable { name: format!("{name}_m{}", a.m), header: vec!["term", "eps", "value"], rows }],
    })
}

fn solve_problem(p: &IndefiniteProblem, starts: usize, tol: f64, samples: usize, seed: u64, name: &str) -> Result<Outcome> {
    let hyp = check_hypotheses(p, samples, seed)?;
    let min = minimize_nehari(p, starts, tol, seed)?;
    let dir = random_direction(p.dim(), seed ^ 0x5eed);
    let env = energy_bound_audit(p, min.gamma, &min.critical_point, &dir, &default_scales())?;
    let pass = min.grad_norm <= tol && min.gamma > 0.0 && env.bound_ok;
    let rows = env
        .scales
        .iter()
        .zip(env.lagrangian.iter().zip(&env.grad_norm))
        .map(|(s, (l, g))| vec![fmt_f(*s), fmt_f(*l), fmt_f(*g)])
        .collect();
    Ok(Outcome {
        pass,
        result: json!({
            "gamma": min.gamma,
            "grad_norm": min.grad_norm,
            "nehari_scale": min.nehari_scale,
            "iterations": min.iterations,
            "start_values": min.start_values,
            "critical_point": min.critical_point,
            "constants": p.constants(),
            "hypotheses": hyp,
            "envelope": env,
        }),
        tables: vec![CsvTable { name: format!("{name}_envelope"), header: vec!["scale", "lagrangian", "grad_norm"], rows }],
    })
}

fn solve_toy(a: &ToyArgs) -> Result<Outcome> {
    solve_problem(&IndefiniteProblem::toy(), a.starts, a.tol, a.samples, a.seed, "toy")
}

fn solve_generic(a: &GenericArgs) -> Result<Outcome> {
    let p = match a.nonlinearity {
        NonlinearityKind::Quartic => IndefiniteProblem::diagonal_quartic(&a.spectrum.0)?,
        NonlinearityKind::SumOfQuartics => IndefiniteProblem::diagonal_sum_of_quartics(&a.spectrum.0, a.terms, a.seed)?,
    };
    let d = p.constants();
    let c = HypothesisConstants { p: a.p.unwrap_or(d.p), k: a.k.unwrap_or(d.k), mu: a.mu.unwrap_or(d.mu), kappa: a.kappa.unwrap_or(d.kappa) };
    let p = p.with_constants(c)?;
    solve_problem(&p, a.starts, a.tol, a.samples, a.seed, "generic")
}

fn solve_torus(a: &TorusArgs) -> Result<Outcome> {
    if a.spin.0.len() != 2 {
        return Err(Error::InvalidParameter("spin takes two offsets".into()));
    }
    let spin = SpinStructure::new([a.spin.0[0], a.spin.0[1]])?;
    let basis = Arc::new(SpectralBasis::new(a.modes, spin)?);
    let gs = solve_ground_state(basis.clone(), 0.1 * a.tol, a.seed, a.starts)?;
    let pass = gs.grad_norm <= a.tol && gs.critical_identity_residual <= a.identity_tol && gs.energy > 0.0;
    let mut rows = Vec::new();
    for (j, m) in basis.modes().iter().enumerate() {
        for (block, c) in [("plus", gs.psi.plus[j]), ("minus", gs.psi.minus[j])] {
            rows.push(vec![format!("{}:{}", m.k[0], m.k[1]), block.into(), fmt_f(c.re), fmt_f(c.im)]);
        }
    }
    for (i, c) in gs.psi.kernel.iter().enumerate().take(basis.kernel_dim()) {
        rows.push(vec![format!("kernel{i}"), "kernel".into(), fmt_f(c.re), fmt_f(c.im)]);
    }
    Ok(Outcome {
        pass,
        result: json!({
            "energy": gs.energy,
            "quartic_mass": gs.quartic_mass,
            "grad_norm": gs.grad_norm,
            "gamma_crit": gs.gamma_crit,
            "energy_minus_gamma_crit": gs.energy - gs.gamma_crit,
            "critical_identity_residual": gs.critical_identity_residual,
            "kernel_dim": gs.kernel_dim,
            "modes": gs.modes,
            "grid": basis.n_grid(),
            "smallest_positive_eigenvalue": basis.smallest_positive(),
            "nehari_scale": gs.nehari_scale,
            "iterations": gs.iterations,
        }),
        tables: vec![CsvTable { name: "torus_spinor".into(), header: vec!["mode", "block", "re", "im"], rows }],
    })
}
