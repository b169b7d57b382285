//! Experiment orchestration for the relay selection game: binds scenario
//! files and command-line overrides to the solvers and the simulator, and
//! writes every result as CSV next to a manifest of the resolved settings.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use relay_game::co::{evaluate_policy_pair, solve_nepp, verify_nepp, IterOptions};
use relay_game::coop::{coop_value_iteration, pareto_sweep};
use relay_game::geo::build_reward_model;
use relay_game::netsim::{build_network, mean_se, simulate, NetSimResult};
use relay_game::po::solve_po_nepp;
use relay_game::scenario::ScenarioFile;
use relay_game::single::solve_threshold;
use relay_game::{CostPair, Family, Forwarder, GameConfig, PolicyPairCO, RewardModel, Variant};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Solver(#[from] relay_game::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit code for a failed run.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveCo,
    SolvePo,
    SolveCoop,
    EvalSimple,
    OnehopSweep,
    Netsim,
    Verify,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::SolveCo,
        Command::SolvePo,
        Command::SolveCoop,
        Command::EvalSimple,
        Command::OnehopSweep,
        Command::Netsim,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SolveCo => "solve-co",
            Command::SolvePo => "solve-po",
            Command::SolveCoop => "solve-coop",
            Command::EvalSimple => "eval-simple",
            Command::OnehopSweep => "onehop-sweep",
            Command::Netsim => "netsim",
            Command::Verify => "verify",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown command {s:?}")))
    }
}

/// One `key=value` override. Keys are dotted paths into the scenario file
/// (`game.tradeoff_1`) or one of the short aliases listed in [`ALIASES`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Override {
    pub key: String,
    pub value: String,
}

impl FromStr for Override {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {s:?} is not key=value")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("override {s:?} has an empty key")));
        }
        Ok(Override { key: key.to_string(), value: value.trim().to_string() })
    }
}

/// Short names and the scenario keys they set.
pub const ALIASES: &[(&str, &[&str])] = &[
    ("theta", &["sweep.thetas"]),
    ("eta", &["game.tradeoff_1", "game.tradeoff_2", "netsim.eta"]),
    ("eta1", &["game.tradeoff_1"]),
    ("eta2", &["game.tradeoff_2"]),
    ("a", &["geo.tradeoff_a"]),
    ("nu1", &["game.win_prob_1"]),
    ("tau", &["game.mean_interarrival_s"]),
    ("family", &["solver.family"]),
    ("variant", &["solver.variant"]),
    ("gamma", &["solver.gammas"]),
    ("lambda", &["netsim.lambdas"]),
    ("seeds", &["netsim.seeds"]),
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub command: Command,
    /// `None` runs on the built-in defaults.
    pub scenario: Option<PathBuf>,
    pub overrides: Vec<Override>,
    /// Replaces the simulator seed list with this single seed.
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl ExperimentSpec {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        ExperimentSpec { command, scenario: None, overrides: Vec::new(), seed: None, out: out.into() }
    }

    pub fn with_override(mut self, key: &str, value: &str) -> Self {
        self.overrides.push(Override { key: key.into(), value: value.into() });
        self
    }

    /// Loads the scenario and applies overrides and the seed.
    pub fn resolve(&self) -> Result<ScenarioFile> {
        let base = match &self.scenario {
            Some(path) => ScenarioFile::load(path).map_err(|e| CliError::Config(e.to_string()))?,
            None => ScenarioFile::default(),
        };
        let mut table = toml::Table::try_from(&base).map_err(|e| CliError::Config(e.to_string()))?;
        for o in &self.overrides {
            apply_override(&mut table, o)?;
        }
        if let Some(seed) = self.seed {
            set_path(&mut table, "netsim.seeds", toml::Value::Array(vec![toml::Value::Integer(seed as i64)]))?;
        }
        let text = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
        ScenarioFile::from_toml(&text).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn parse_value(key: &str, raw: &str) -> toml::Value {
    if key.ends_with("family") || key.ends_with("variant") {
        return toml::Value::String(raw.to_ascii_lowercase());
    }
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, o: &Override) -> Result<()> {
    let targets: Vec<&str> = match ALIASES.iter().find(|(alias, _)| *alias == o.key) {
        Some((_, keys)) => keys.to_vec(),
        None => vec![o.key.as_str()],
    };
    for key in targets {
        set_path(table, key, parse_value(key, &o.value))?;
    }
    Ok(())
}

/// Replaces an existing value. Scalars assigned to list-valued keys become
/// one-element lists and integers assigned to float keys are widened; any
/// other type mismatch is left for the schema to reject.
fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        let slot = cur.get_mut(part).ok_or_else(|| CliError::Config(format!("unknown override key {key:?}")))?;
        if parts.peek().is_none() {
            *slot = coerce(slot, value);
            return Ok(());
        }
        cur = slot
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override key {key:?} goes through a non-table")))?;
    }
    Err(CliError::Config(format!("unknown override key {key:?}")))
}

fn coerce(old: &toml::Value, new: toml::Value) -> toml::Value {
    use toml::Value::*;
    match (old, new) {
        (Float(_), Integer(i)) => Float(i as f64),
        (Array(items), Array(xs)) if matches!(items.first(), Some(Float(_))) => {
            Array(xs.into_iter().map(|x| if let Integer(i) = x { Float(i as f64) } else { x }).collect())
        }
        (Array(items), x) if !matches!(x, Array(_)) => {
            let x = match (items.first(), x) {
                (Some(Float(_)), Integer(i)) => Float(i as f64),
                (_, x) => x,
            };
            Array(vec![x])
        }
        (_, x) => x,
    }
}

/// What a successful run produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    /// Recorded failures that did not stop the run.
    pub issues: Vec<String>,
}

impl RunReport {
    pub fn is_partial(&self) -> bool {
        !self.issues.is_empty()
    }

    /// 0 on full success, 2 when some cells failed.
    pub fn exit_code(&self) -> i32 {
        if self.is_partial() {
            2
        } else {
            0
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: Command,
    crate_version: &'static str,
    scenario_path: Option<&'a Path>,
    overrides: &'a [Override],
    seed: Option<u64>,
    resolved: &'a ScenarioFile,
    status: &'static str,
    issues: &'a [String],
    files: Vec<String>,
}

/// Runs a command end to end and writes its manifest.
pub fn run(spec: &ExperimentSpec) -> Result<RunReport> {
    let scenario = spec.resolve()?;
    fs::create_dir_all(&spec.out).map_err(|source| CliError::Io { path: spec.out.clone(), source })?;
    info!("{} -> {}", spec.command, spec.out.display());
    let report = match spec.command {
        Command::SolveCo => run_solve_co(&scenario, &spec.out)?,
        Command::SolvePo => run_solve_po(&scenario, &spec.out)?,
        Command::SolveCoop => run_solve_coop(&scenario, &spec.out)?,
        Command::EvalSimple => run_eval_simple(&scenario, &spec.out)?,
        Command::OnehopSweep => run_onehop_sweep(&scenario, &spec.out)?,
        Command::Netsim => run_netsim(&scenario, &spec.out)?,
        Command::Verify => run_verify(&scenario, &spec.out)?,
    };
    for issue in &report.issues {
        warn!("{issue}");
    }
    let manifest = Manifest {
        command: spec.command,
        crate_version: env!("CARGO_PKG_VERSION"),
        scenario_path: spec.scenario.as_deref(),
        overrides: &spec.overrides,
        seed: spec.seed,
        resolved: &scenario,
        status: if report.is_partial() { "partial" } else { "ok" },
        issues: &report.issues,
        files: report.files.iter().map(|p| file_name(p)).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    write_atomic(&spec.out.join("manifest.json"), format!("{json}\n").as_bytes())?;
    Ok(report)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Header is written up front so empty tables keep their columns.
fn write_csv<R: Serialize>(dir: &Path, name: &str, columns: &[&str], rows: &[R], report: &mut RunReport) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    let path = dir.join(name);
    write_atomic(&path, &bytes)?;
    report.files.push(path);
    Ok(())
}

/// Maps `f` over `items` on all available cores, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(k) else { break };
                let r = f(item);
                out.lock().unwrap()[k] = Some(r);
            });
        }
    });
    out.into_inner().unwrap().into_iter().map(|r| r.expect("every cell ran")).collect()
}

fn thetas(scenario: &ScenarioFile) -> Result<&[f64]> {
    if scenario.sweep.thetas.is_empty() {
        return Err(CliError::Config("the theta sweep is empty".into()));
    }
    Ok(&scenario.sweep.thetas)
}

fn models(scenario: &ScenarioFile) -> Result<Vec<(f64, RewardModel)>> {
    let thetas = thetas(scenario)?;
    par_map(thetas, |&t| build_reward_model(&scenario.geo_at(t), scenario.solver.merge_tolerance).map(|m| (t, m)))
        .into_iter()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Point of the one-hop comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Point {
    Co(Family),
    Po(Variant),
    Simple,
}

impl Point {
    pub const ALL: [Point; 6] = [
        Point::Co(Family::Sc),
        Point::Co(Family::Cs),
        Point::Co(Family::Mixed),
        Point::Po(Variant::Nabla),
        Point::Po(Variant::Delta),
        Point::Simple,
    ];

    /// Legend name used in the CSV.
    pub fn name(self) -> &'static str {
        match self {
            Point::Co(Family::Sc) => "star",
            Point::Co(Family::Cs) => "circle",
            Point::Co(Family::Mixed) => "square",
            Point::Po(Variant::Nabla) => "nabla",
            Point::Po(Variant::Delta) => "delta",
            Point::Simple => "simple",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OnehopRow {
    pub theta: f64,
    pub point: &'static str,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontierRow {
    pub theta: f64,
    pub gamma: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
}

/// Lone thresholds and the cost of the pair that ignores the competitor.
pub fn simple_point(model: &RewardModel, cfg: &GameConfig, opts: &IterOptions) -> relay_game::Result<([f64; 2], CostPair)> {
    let lone = |who: Forwarder| solve_threshold(&model.marginal_pmf(who), cfg, who, opts.single_tol).map(|s| s.alpha);
    let alpha = [lone(Forwarder::First)?, lone(Forwarder::Second)?];
    let values = evaluate_policy_pair(&PolicyPairCO::Simple { alpha }, model, cfg)?;
    Ok((alpha, values.cost))
}

fn solve_point(point: Point, model: &RewardModel, cfg: &GameConfig, opts: &IterOptions) -> relay_game::Result<(CostPair, usize)> {
    match point {
        Point::Co(family) => solve_nepp(model, cfg, family, opts).map(|s| (s.cost_pair, s.iterations)),
        Point::Po(variant) => solve_po_nepp(model, cfg, variant, opts).map(|s| (s.cost_pair, s.iterations)),
        Point::Simple => simple_point(model, cfg, opts).map(|(_, c)| (c, 0)),
    }
}

fn failed_row(theta: f64, point: &'static str) -> OnehopRow {
    OnehopRow { theta, point, c1: f64::NAN, c2: f64::NAN, converged: false, iterations: 0 }
}

/// Every equilibrium point and the cooperative frontier at each separation.
/// Writes `onehop.csv` and `onehop_frontier.csv`.
pub fn run_onehop_sweep(scenario: &ScenarioFile, out: &Path) -> Result<RunReport> {
    let mut report = RunReport::default();
    let models = models(scenario)?;
    let (cfg, opts) = (&scenario.game, &scenario.solver.iter);
    let cells: Vec<(usize, Point)> = (0..models.len()).flat_map(|m| Point::ALL.map(|p| (m, p))).collect();
    let solved = par_map(&cells, |&(m, p)| solve_point(p, &models[m].1, cfg, opts));
    let mut rows = Vec::with_capacity(cells.len());
    for (&(m, p), r) in cells.iter().zip(solved) {
        let theta = models[m].0;
        rows.push(match r {
            Ok((c, iterations)) => OnehopRow { theta, point: p.name(), c1: c.c1, c2: c.c2, converged: true, iterations },
            Err(e) => {
                report.issues.push(format!("theta {theta}, {}: {e}", p.name()));
                failed_row(theta, p.name())
            }
        });
    }
    write_csv(out, "onehop.csv", &["theta", "point", "C1", "C2", "converged", "iterations"], &rows, &mut report)?;

    let frontiers = par_map(&models, |(_, model)| pareto_sweep(model, cfg, &scenario.solver.gammas, opts.tol));
    let mut frontier = Vec::new();
    for ((theta, _), f) in models.iter().zip(frontiers) {
        match f {
            Ok(points) => frontier.extend(points.into_iter().map(|(gamma, c)| FrontierRow { theta: *theta, gamma, c1: c.c1, c2: c.c2 })),
            Err(e) => report.issues.push(format!("theta {theta}, frontier: {e}")),
        }
    }
    write_csv(out, "onehop_frontier.csv", &["theta", "gamma", "C1", "C2"], &frontier, &mut report)?;
    Ok(report)
}

#[derive(Serialize)]
struct CoRow {
    theta: f64,
    family: Family,
    #[serde(rename = "C1")]
    c1: f64,
    #[serde(rename = "C2")]
    c2: f64,
    zeta1: f64,
    zeta2: f64,
    alpha1: f64,
    alpha2: f64,
    converged: bool,
    iterations: usize,
}

/// The configured family at every separation: `co.csv` plus one JSON
/// solution record per separation.
fn run_solve_co(scenario: &ScenarioFile, out: &Path) -> Result<RunReport> {
    let mut report = RunReport::default();
    let family = scenario.solver.family;
    let models = models(scenario)?;
    let solved = par_map(&models, |(_, m)| solve_nepp(m, &scenario.game, family, &scenario.solver.iter));
    let mut rows = Vec::new();
    for ((theta, model), r) in models.iter().zip(solved) {
        match r {
            Ok(sol) => {
                let th = sol.thresholds;
                rows.push(CoRow {
                    theta: *theta,
                    family,
                    c1: sol.cost_pair.c1,
                    c2: sol.cost_pair.c2,
                    zeta1: th.zeta[0],
                    zeta2: th.zeta[1],
                    alpha1: th.alpha[0],
                    alpha2: th.alpha[1],
                    converged: true,
                    iterations: sol.iterations,
                });
                let record = sol.to_record(model)?;
                let json = serde_json::to_string_pretty(&record).map_err(|e| CliError::Config(e.to_string()))?;
                let path = out.join(format!("co_{family}_theta_{theta}.json"));
                write_atomic(&path, format!("{json}\n").as_bytes())?;
                report.files.push(path);
            }
            Err(e) => {
                report.issues.push(format!("theta {theta}: {e}"));
                let nan = f64::NAN;
                rows.push(CoRow {
                    theta: *theta,
                    family,
                    c1: nan,
                    c2: nan,
                    zeta1: nan,
                    zeta2: nan,
                    alpha1: nan,
                    alpha2: nan,
                    converged: false,
                    iterations: 0,
                });
            }
        }
    }
    write_csv(out, "co.csv", &["theta", "family", "C1", "C2", "zeta1", "zeta2", "alpha1", "alpha2", "converged", "iterations"], &rows, &mut report)?;
    Ok(report)
}

#[derive(Serialize)]
struct PoRow {
    theta: f64,
    variant: Variant,
    #[serde(rename = "C1")]
    c1: f64,
    #[serde(rename = "C2")]
    c2: f64,
    converged: bool,
    iterations: usize,
}

#[derive(Serialize)]
struct PoThresholdRow {
    theta: f64,
    location: usize,
    phi: usize,
    psi: usize,
}

/// The configured variant at every separation: `po.csv` and the per-location
/// thresholds in `po_thresholds.csv`.
fn run_solve_po(scenario: &ScenarioFile, out: &Path) -> Result<RunReport> {
    let mut report = RunReport::default();
    let variant = scenario.solver.variant;
    let models = models(scenario)?;
    let solved = par_map(&models, |(_, m)| solve_po_nepp(m, &scenario.game, variant, &scenario.solver.iter));
    let (mut rows, mut thresholds) = (Vec::new(), Vec::new());
    for ((theta, _), r) in models.iter().zip(solved) {
        let theta = *theta;
        match r {
            Ok(sol) => {
                rows.push(PoRow { theta, variant, c1: sol.cost_pair.c1, c2: sol.cost_pair.c2, converged: true, iterations: sol.iterations });
                thresholds.extend(sol.thresholds.iter().map(|t| PoThresholdRow { theta, location: t.location, phi: t.phi, psi: t.psi }));
            }
            Err(e) => {
                report.issues.push(format!("theta {theta}: {e}"));
                rows.push(PoRow { theta, variant, c1: f64::NAN, c2: f64::NAN, converged: false, iterations: 0 });
            }
        }
    }
    write_csv(out, "po.csv", &["theta", "variant", "C1", "C2", "converged", "iterations"], &rows, &mut report)?;
    write_csv(out, "po_thresholds.csv", &["theta", "location", "phi", "psi"], &thresholds, &mut report)?;
    Ok(report)
}

#[derive(Serialize)]
struct CoopRow {
    theta: f64,
    gamma: f64,
    #[serde(rename = "C1")]
    c1: f64,
    #[serde(rename = "C2")]
    c2: f64,
    converged: bool,
    iterations: usize,
}

/// The cooperative optimum for every weight: `coop.csv`.
fn run_solve_coop(scenario: &ScenarioFile, out: &Path) -> Result<RunReport> {
    let mut report = RunReport::default();
    let models = models(scenario)?;
    let cells: Vec<(usize, f64)> = (0..models.len()).flat_map(|m| scenario.solver.gammas.iter().map(move |&g| (m, g))).collect();
    let solved = par_map(&cells, |&(m, g)| coop_value_iteration(&models[m].1, &scenario.game, g, scenario.solver.iter.tol));
    let mut rows = Vec::new();
    for (&(m, gamma), r) in cells.iter().zip(solved) {
        let theta = models[m].0;
        rows.push(match r {
            Ok(s) => CoopRow { theta, gamma, c1: s.cost_pair.c1, c2: s.cost_pair.c2, converged: true, iterations: s.iterations },
            Err(e) => {
                report.issues.push(format!("theta {theta}, gamma {gamma}: {e}"));
                CoopRow { theta, gamma, c1: f64::NAN, c2: f64::NAN, converged: false, iterations: 0 }
            }
        });
    }
    write_csv(out, "coop.csv", &["theta", "gamma", "C1", "C2", "converged", "iterations"], &rows, &mut report)?;
    Ok(report)
}

#[derive(Serialize)]
struct SimpleRow {
    theta: f64,
    alpha1: f64,
    alpha2: f64,
    #[serde(rename = "C1")]
    c1: f64,
    #[serde(rename = "C2")]
    c2: f64,
}

/// Costs of the lone-threshold pair: `simple.csv`.
fn run_eval_simple(scenario: &ScenarioFile, out: &Path) -> Result<RunReport> {
    let mut report = RunReport::default();
    let models = models(scenario)?;
    let solved = par_map(&models, |(_, m)| simple_point(m, &scenario.game, &scenario.solver.iter));
    let mut rows = Vec::new();
    for ((theta, _), r) in models.iter().zip(solved) {
        let ([a1, a2], c) = r?;
        rows.push(SimpleRow { theta: *theta, alpha1: a1, alpha2: a2, c1: c.c1, c2: c.c2 });
    }
    write_csv(out, "simple.csv", &["theta", "alpha1", "alpha2", "C1", "C2"], &rows, &mut report)?;
    Ok(report)
}

#[derive(Serialize)]
struct VerifyRow {
    theta: f64,
    family: Family,
    converged: bool,
    passed: bool,
    max_gain_1: f64,
    max_gain_2: f64,
    max_stage_gain: f64,
    cost_gap: f64,
}

/// Deviation tolerance of the equilibrium check.
pub const VERIFY_TOL: f64 = 1e-6;

/// Solves every family at every separation and certifies each solution
/// against unilateral deviations: `verify.csv`.
fn run_verify(scenario: &ScenarioFile, out: &Path) -> Result<RunReport> {
    let mut report = RunReport::default();
    let models = models(scenario)?;
    let cells: Vec<(usize, Family)> = (0..models.len()).flat_map(|m| Family::ALL.map(|f| (m, f))).collect();
    let checked = par_map(&cells, |&(m, family)| {
        let model = &models[m].1;
        solve_nepp(model, &scenario.game, family, &scenario.solver.iter)
            .map(|sol| verify_nepp(&sol, model, &scenario.game, VERIFY_TOL))
    });
    let mut rows = Vec::new();
    for (&(m, family), r) in cells.iter().zip(checked) {
        let theta = models[m].0;
        let nan = f64::NAN;
        let row = |converged, passed, g: [f64; 4]| VerifyRow {
            theta,
            family,
            converged,
            passed,
            max_gain_1: g[0],
            max_gain_2: g[1],
            max_stage_gain: g[2],
            cost_gap: g[3],
        };
        rows.push(match r {
            Ok(Ok(v)) => row(true, true, [v.max_gain[0], v.max_gain[1], v.max_stage_gain, v.cost_gap]),
            Ok(Err(e)) => {
                report.issues.push(format!("theta {theta}, {family}: certification failed: {e}"));
                row(true, false, [nan; 4])
            }
            Err(e) => {
                report.issues.push(format!("theta {theta}, {family}: {e}"));
                row(false, false, [nan; 4])
            }
        });
    }
    write_csv(out, "verify.csv", &["theta", "family", "converged", "passed", "max_gain_1", "max_gain_2", "max_stage_gain", "cost_gap"], &rows, &mut report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacketRow {
    pub lambda: f64,
    pub seed: u64,
    pub packet_id: usize,
    pub delay_s: f64,
    pub power_mw: f64,
    pub hops: u32,
    pub contentions: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DropRow {
    pub lambda: f64,
    pub seed: u64,
    pub packet_id: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub lambda: f64,
    pub mean_delay: f64,
    pub se_delay: f64,
    pub mean_power: f64,
    pub se_power: f64,
}

/// Packet rates to simulate: the configured grid with the lone-packet
/// baseline `0` always first.
pub fn lambda_grid(scenario: &ScenarioFile) -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend(scenario.netsim.lambdas.iter().copied().filter(|&l| l != 0.0));
    grid
}

/// Pools delivered packets over seeds for each rate.
pub fn aggregate(lambdas: &[f64], packets: &[PacketRow]) -> Vec<AggregateRow> {
    lambdas
        .iter()
        .map(|&lambda| {
            let (delays, powers): (Vec<f64>, Vec<f64>) =
                packets.iter().filter(|p| p.lambda == lambda).map(|p| (p.delay_s, p.power_mw)).unzip();
            let (mean_delay, se_delay) = mean_se(&delays);
            let (mean_power, se_power) = mean_se(&powers);
            AggregateRow { lambda, mean_delay, se_delay, mean_power, se_power }
        })
        .collect()
}

/// The rate by seed grid: `netsim_packets.csv` with delivered packets,
/// `netsim_drops.csv` with dropped ones and `netsim_aggregate.csv`.
pub fn run_netsim(scenario: &ScenarioFile, out: &Path) -> Result<RunReport> {
    let mut report = RunReport::default();
    let ns = &scenario.netsim;
    if ns.seeds.is_empty() {
        return Err(CliError::Config("the seed list is empty".into()));
    }
    let lambdas = lambda_grid(scenario);
    let cells: Vec<(f64, u64)> = lambdas.iter().flat_map(|&l| ns.seeds.iter().map(move |&s| (l, s))).collect();
    let results = par_map(&cells, |&(lambda, seed)| -> relay_game::Result<NetSimResult> {
        let cfg = ns.config(&scenario.geo.radio, lambda, seed);
        simulate(&build_network(&cfg)?, &cfg)
    });
    let (mut packets, mut drops) = (Vec::new(), Vec::new());
    for (&(lambda, seed), r) in cells.iter().zip(results) {
        let result = match r {
            Ok(r) => r,
            Err(e) => {
                report.issues.push(format!("lambda {lambda}, seed {seed}: {e}"));
                continue;
            }
        };
        if result.partial {
            report.issues.push(format!("lambda {lambda}, seed {seed}: horizon reached at {} s", result.end_time_s));
        }
        for p in result.packets {
            match p.drop_reason {
                None => packets.push(PacketRow {
                    lambda,
                    seed,
                    packet_id: p.packet_id,
                    delay_s: p.delay_s,
                    power_mw: p.power_mw,
                    hops: p.hops,
                    contentions: p.contentions,
                }),
                Some(reason) => drops.push(DropRow { lambda, seed, packet_id: p.packet_id, reason }),
            }
        }
    }
    let agg = aggregate(&lambdas, &packets);
    write_csv(out, "netsim_packets.csv", &["lambda", "seed", "packet_id", "delay_s", "power_mw", "hops", "contentions"], &packets, &mut report)?;
    write_csv(out, "netsim_drops.csv", &["lambda", "seed", "packet_id", "reason"], &drops, &mut report)?;
    write_csv(out, "netsim_aggregate.csv", &["lambda", "mean_delay", "se_delay", "mean_power", "se_power"], &agg, &mut report)?;
    Ok(report)
}
