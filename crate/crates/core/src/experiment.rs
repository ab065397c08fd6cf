//! JSON-configured experiments. Every kind computes all of its artifacts in
//! memory first, so a failure before the end leaves nothing on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::aiming::{simulate_traced, upper_estimate_check, AimingSchedule, CheckStatus};
use crate::cell_solver::{solve_cell_cascade, viscosity_residual, CellSolution};
use crate::error::{invalid, io_err, Error, Result};
use crate::lagrangian::{LagrangianSpec, VelocityBox};
use crate::lower_bound::{
    field_hash, fuzz_lower, verify_lower, CounterexampleContext, FuzzConfig, GeneratorKind,
    ProcessGenerator, MAX_SEGMENTS, QUADRATURE_RATE,
};
use crate::mather::{build_lp, occupation_measure, solve_lp, HolonomyBasis, LpReport};
use crate::process::Partition;
use crate::torus::{GridSpec, TorusPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Cell,
    Aim,
    LowerFuzz,
    Mather,
    Triangle,
}

impl ExperimentKind {
    pub fn is_stochastic(self) -> bool {
        matches!(self, Self::Aim | Self::LowerFuzz | Self::Triangle)
    }
}

/// How the aiming rollout partitions `[0, r]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionRule {
    /// Fineness `delta(kappa)` from the schedule.
    Schedule,
    /// Uniform with this many steps.
    Steps(usize),
    /// Coarsest uniform partition with at most this step.
    Fineness(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleParams {
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    /// Defaults to the largest admissible `kappa0`.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "defaults::horizon")]
    pub horizon: f64,
    #[serde(default = "defaults::partition")]
    pub partition: PartitionRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellParams {
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AimParams {
    /// Number of seeded start points.
    #[serde(default = "defaults::starts")]
    pub starts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzParams {
    #[serde(default = "defaults::generator")]
    pub generator: GeneratorKind,
    #[serde(default = "defaults::proposals")]
    pub proposals: usize,
    #[serde(default = "defaults::segments")]
    pub segments: usize,
    #[serde(default = "defaults::chains")]
    pub chains: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpParams {
    /// Points per axis of the LP's spatial grid.
    #[serde(default = "defaults::lp_n")]
    pub n: usize,
    /// Solved in order; the optimum must not decrease.
    #[serde(default = "defaults::max_modes")]
    pub max_modes: Vec<usize>,
    #[serde(default = "defaults::velocity_radius")]
    pub velocity_radius: f64,
    /// Per-axis velocity samples (nodes per axis minus one).
    #[serde(default = "defaults::velocity_samples")]
    pub velocity_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriangleParams {
    /// Largest allowed pairwise gap between the three estimates.
    #[serde(default = "defaults::triangle_tolerance")]
    pub tolerance: f64,
}

mod defaults {
    use super::*;

    pub fn epsilon() -> f64 {
        0.1
    }
    pub fn horizon() -> f64 {
        10.0
    }
    pub fn partition() -> PartitionRule {
        PartitionRule::Schedule
    }
    pub fn tol() -> f64 {
        1e-5
    }
    pub fn max_iter() -> usize {
        2_000_000
    }
    pub fn starts() -> usize {
        1
    }
    pub fn generator() -> GeneratorKind {
        GeneratorKind::AdversarialAnnealed
    }
    pub fn proposals() -> usize {
        10_000
    }
    pub fn segments() -> usize {
        MAX_SEGMENTS
    }
    pub fn chains() -> usize {
        4
    }
    pub fn lp_n() -> usize {
        64
    }
    pub fn max_modes() -> Vec<usize> {
        vec![4, 8]
    }
    pub fn velocity_radius() -> f64 {
        4.0
    }
    pub fn velocity_samples() -> usize {
        128
    }
    pub fn triangle_tolerance() -> f64 {
        0.05
    }
}

macro_rules! default_from_serde {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                serde_json::from_str("{}").expect("every field has a default")
            }
        }
    )*};
}

default_from_serde!(ScheduleParams, CellParams, AimParams, FuzzParams, LpParams, TriangleParams);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub lagrangian: LagrangianSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub schedule: ScheduleParams,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cell: CellParams,
    #[serde(default)]
    pub aim: AimParams,
    #[serde(default)]
    pub fuzz: FuzzParams,
    #[serde(default)]
    pub lp: LpParams,
    #[serde(default)]
    pub triangle: TriangleParams,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config = Self::parse(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses without [`validate`](Self::validate), so that command-line
    /// overrides can be applied first.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads and parses; the caller validates.
    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    /// Checks everything that can be checked before any computation.
    pub fn validate(&self) -> Result<()> {
        self.lagrangian.check_dim(self.grid.dim())?;
        if self.kind.is_stochastic() && self.seed.is_none() {
            return Err(invalid(format!("kind {:?} needs a seed", self.kind)));
        }
        let s = &self.schedule;
        if !(s.epsilon.is_finite() && s.epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {}", s.epsilon)));
        }
        if !(s.horizon.is_finite() && s.horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {}", s.horizon)));
        }
        if let Some(k) = s.kappa {
            if !(k.is_finite() && k > 0.0) {
                return Err(invalid(format!("kappa must be positive, got {k}")));
            }
        }
        match s.partition {
            PartitionRule::Steps(0) => return Err(invalid("partition needs at least one step")),
            PartitionRule::Fineness(f) if !(f.is_finite() && f > 0.0) => {
                return Err(invalid(format!("partition fineness must be positive, got {f}")))
            }
            _ => {}
        }
        if !(self.cell.tol.is_finite() && self.cell.tol > 0.0) || self.cell.max_iter == 0 {
            return Err(invalid("cell tolerance and iteration cap must be positive"));
        }
        if self.aim.starts == 0 {
            return Err(invalid("aim needs at least one start"));
        }
        if self.fuzz.proposals == 0 || self.fuzz.chains == 0 {
            return Err(invalid("fuzzing needs proposals and chains"));
        }
        if !(1..=MAX_SEGMENTS).contains(&self.fuzz.segments) {
            return Err(invalid(format!("fuzz segments must be in 1..={MAX_SEGMENTS}")));
        }
        if matches!(self.kind, ExperimentKind::Mather | ExperimentKind::Triangle) {
            GridSpec::new(self.grid.dim(), self.lp.n)?;
            VelocityBox::new(self.grid.dim(), self.lp.velocity_radius, self.lp.velocity_samples)?;
            if self.lp.max_modes.is_empty() {
                return Err(invalid("lp.max_modes is empty"));
            }
        }
        if !(self.triangle.tolerance >= 0.0) {
            return Err(invalid("triangle tolerance must be >= 0"));
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// One checked claim.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// The bound `value` is compared against.
    pub limit: f64,
}

impl Assertion {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= limit,
            value,
            limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub kind: ExperimentKind,
    pub family: String,
    pub grid: GridSpec,
    pub seed: Option<u64>,
    pub hbar_estimates: BTreeMap<String, f64>,
    pub residuals: BTreeMap<String, f64>,
    pub slack_budgets: BTreeMap<String, f64>,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
    pub details: Value,
    pub error: Option<String>,
    pub elapsed_seconds: f64,
}

/// Everything a run produces, before it touches the disk.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    /// Artifact name and contents, in write order.
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.report.passed
    }

    /// 0 when every assertion holds, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    /// Writes the artifacts, `report.json` and `manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let report = serde_json::to_vec_pretty(&self.report)?;
        let mut entries = Vec::new();
        for (name, bytes) in self.files.iter().chain(std::iter::once(&("report.json".to_string(), report))) {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(io_err(&path))?;
            entries.push(json!({
                "path": name,
                "bytes": bytes.len(),
                "sha256": hex::encode(Sha256::digest(bytes)),
            }));
        }
        let manifest = serde_json::to_vec_pretty(&json!({ "files": entries }))?;
        let path = dir.join("manifest.json");
        fs::write(&path, manifest).map_err(io_err(&path))?;
        Ok(())
    }
}

/// Whether an error stems from the configuration rather than the run.
pub fn is_usage_error(err: &Error) -> bool {
    matches!(err, Error::InvalidArgument(_) | Error::Parse(_) | Error::Json(_))
}

struct Builder {
    report: Report,
    files: Vec<(String, Vec<u8>)>,
}

impl Builder {
    fn file(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.file(name, bytes);
        Ok(())
    }

    fn check(&mut self, a: Assertion) {
        self.report.assertions.push(a);
    }

    fn hbar(&mut self, name: &str, v: f64) {
        self.report.hbar_estimates.insert(name.into(), v);
    }

    fn residual(&mut self, name: &str, v: f64) {
        self.report.residuals.insert(name.into(), v);
    }

    fn slack(&mut self, name: &str, v: f64) {
        self.report.slack_budgets.insert(name.into(), v);
    }

    fn detail(&mut self, name: &str, v: impl Serialize) -> Result<()> {
        if let Value::Object(map) = &mut self.report.details {
            map.insert(name.into(), serde_json::to_value(v)?);
        }
        Ok(())
    }
}

/// Runs the experiment. Usage errors (see [`is_usage_error`]) are returned
/// as `Err`; failures of the computation itself end up in a failed report.
pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let started = Instant::now();
    let mut b = Builder {
        report: Report {
            kind: config.kind,
            family: config.lagrangian.family_name().into(),
            grid: config.grid,
            seed: config.seed,
            hbar_estimates: BTreeMap::new(),
            residuals: BTreeMap::new(),
            slack_budgets: BTreeMap::new(),
            assertions: Vec::new(),
            passed: false,
            details: Value::Object(Default::default()),
            error: None,
            elapsed_seconds: 0.0,
        },
        files: Vec::new(),
    };
    b.json("config.json", config)?;
    let result = match config.kind {
        ExperimentKind::Cell => run_cell(config, &mut b),
        ExperimentKind::Aim => run_aim(config, &mut b),
        ExperimentKind::LowerFuzz => run_fuzz(config, &mut b),
        ExperimentKind::Mather => run_mather(config, &mut b),
        ExperimentKind::Triangle => run_triangle(config, &mut b),
    };
    match result {
        Err(e) if is_usage_error(&e) => return Err(e),
        Err(e) => b.report.error = Some(e.to_string()),
        Ok(()) => {}
    }
    b.report.passed = b.report.error.is_none() && b.report.assertions.iter().all(|a| a.passed);
    b.report.elapsed_seconds = started.elapsed().as_secs_f64();
    Ok(Outcome {
        report: b.report,
        files: b.files,
    })
}

/// `max_x V(x)` on a fine sampling grid; equal to `Hbar` for every built-in
/// family because each kinetic part is nonnegative and vanishes at `v = 0`.
pub fn critical_value(spec: &LagrangianSpec, dim: usize) -> f64 {
    let n: usize = if dim == 1 { 1 << 14 } else { 1 << 9 };
    let g = GridSpec::new(dim, n).expect("valid sampling grid");
    (0..g.node_count())
        .map(|i| spec.potential().value(g.node(i).coords()))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn solve(config: &ExperimentConfig, b: &mut Builder) -> Result<CellSolution> {
    let sol = solve_cell_cascade(&config.lagrangian, config.grid, config.cell.tol, config.cell.max_iter)?;
    b.hbar("cell", sol.hbar);
    b.residual("cell_increment_sup", sol.residual_sup);
    b.detail("cell", sol.summary())?;
    b.file("cell_phi.csv", sol.phi.to_csv_string());
    Ok(sol)
}

fn run_cell(config: &ExperimentConfig, b: &mut Builder) -> Result<()> {
    let spec = &config.lagrangian;
    let sol = solve(config, b)?;
    let visc = viscosity_residual(&sol, spec, &sol.velocity_box)?;
    b.residual("viscosity", visc);
    let critical = critical_value(spec, config.grid.dim());
    b.detail("max_potential", critical)?;
    b.check(Assertion::at_most("cell_converged", sol.residual_sup, config.cell.tol));
    b.check(Assertion::at_most("hbar_matches_max_potential", (sol.hbar - critical).abs(), 0.05));
    Ok(())
}

fn schedule_for(config: &ExperimentConfig, sol: &CellSolution) -> Result<(AimingSchedule, Partition)> {
    let spec = &config.lagrangian;
    let s = &config.schedule;
    let mut schedule = AimingSchedule::new(spec, &sol.phi, s.epsilon)?;
    if let Some(k) = s.kappa {
        schedule = schedule.with_kappa(spec, k)?;
    }
    let partition = match s.partition {
        PartitionRule::Schedule => schedule.partition(s.horizon)?,
        PartitionRule::Steps(n) => Partition::uniform(s.horizon, n)?,
        PartitionRule::Fineness(f) => Partition::with_fineness(s.horizon, f)?,
    };
    Ok((schedule, partition))
}

fn random_start(rng: &mut ChaCha8Rng, dim: usize) -> TorusPoint {
    let raw: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    TorusPoint::wrap(&raw).expect("finite start")
}

fn run_aim(config: &ExperimentConfig, b: &mut Builder) -> Result<()> {
    let spec = &config.lagrangian;
    let dim = config.grid.dim();
    let sol = solve(config, b)?;
    let (schedule, partition) = schedule_for(config, &sol)?;
    b.detail("schedule", &schedule)?;
    b.detail("steps", partition.steps())?;
    let eps = config.schedule.epsilon;
    let r = config.schedule.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed());
    let mut csv = String::from("start");
    for a in 0..dim {
        write!(csv, ",y{a}").unwrap();
    }
    csv.push_str(",cost,lhs,rhs,upper_slack,upper_margin,status,lower_margin,lower_slack\n");
    let (mut worst_upper_slack, mut worst_lower) = (0.0f64, f64::INFINITY);
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut mean_cost = 0.0;
    for i in 0..config.aim.starts {
        let y = random_start(&mut rng, dim);
        let (proc, trace) = simulate_traced(y, &sol.phi, schedule.kappa, &partition, spec)?;
        let up = upper_estimate_check(
            &proc,
            &trace,
            &sol.phi,
            sol.hbar,
            eps,
            spec,
            schedule.kappa,
            partition.fineness(),
            Some(&schedule),
        );
        let low = verify_lower(&proc, &sol.phi, sol.hbar, sol.residual_sup);
        let status = match up.status {
            CheckStatus::CertifiedPass => "certified-pass",
            CheckStatus::CertifiedFail => "certified-fail",
            CheckStatus::Uncertified => "uncertified",
        };
        *counts.entry(status).or_default() += 1;
        write!(csv, "{i}").unwrap();
        for c in y.as_slice() {
            write!(csv, ",{c}").unwrap();
        }
        writeln!(
            csv,
            ",{},{},{},{},{},{status},{},{}",
            proc.cost(),
            up.lhs,
            up.rhs,
            up.slack,
            up.margin,
            low.margin,
            low.slack.total
        )
        .unwrap();
        worst_upper_slack = worst_upper_slack.max(up.slack);
        worst_lower = worst_lower.min(low.margin + low.slack.total);
        mean_cost += proc.cost() / config.aim.starts as f64;
        if i == 0 {
            b.file("aim_process.csv", proc.to_csv_string());
        }
    }
    b.file("aim_runs.csv", csv);
    b.hbar("aim", -mean_cost / r);
    b.slack("upper_supersolution_defect", worst_upper_slack);
    b.slack("lower", sol.residual_sup * r + QUADRATURE_RATE * r);
    b.detail("status_counts", &counts)?;
    b.check(Assertion::at_most(
        "no_certified_failures",
        counts.get("certified-fail").copied().unwrap_or(0) as f64,
        0.0,
    ));
    b.check(Assertion::at_least("lower_sandwich", worst_lower, 0.0));
    Ok(())
}

fn run_fuzz(config: &ExperimentConfig, b: &mut Builder) -> Result<()> {
    let spec = &config.lagrangian;
    let sol = solve(config, b)?;
    let fc = FuzzConfig {
        kind: config.fuzz.generator,
        seed: config.seed(),
        proposals: config.fuzz.proposals,
        horizon: config.schedule.horizon,
        segments: config.fuzz.segments,
        chains: config.fuzz.chains,
    };
    let rep = fuzz_lower(spec, &sol.phi, sol.hbar, sol.residual_sup, &fc)?;
    b.slack("lower_residual_term", rep.slack.residual_term);
    b.slack("lower_quadrature_budget", rep.slack.quadrature_budget);
    b.detail("fuzz", &rep)?;
    b.file("fuzz_worst.csv", rep.worst.to_csv_string());
    if !rep.holds {
        let ctx = CounterexampleContext {
            phi_sha256: field_hash(&sol.phi),
            hbar: sol.hbar,
            residual_sup: sol.residual_sup,
            generator: ProcessGenerator::for_field(fc.kind, fc.seed, spec, &sol.phi, fc.segments)?,
            report: verify_lower(&rep.worst, &sol.phi, sol.hbar, sol.residual_sup),
        };
        b.json("counterexample.json", &ctx)?;
        b.file("counterexample.csv", rep.worst.to_csv_string());
    }
    b.check(Assertion::at_least("lower_bound_margin", rep.min_margin, -rep.slack.total));
    Ok(())
}

// Solves the LP for each requested mode bound; returns the last optimum.
fn lp_sweep(config: &ExperimentConfig, b: &mut Builder) -> Result<f64> {
    let spec = &config.lagrangian;
    let dim = config.grid.dim();
    let grid = GridSpec::new(dim, config.lp.n)?;
    let vbox = VelocityBox::new(dim, config.lp.velocity_radius, config.lp.velocity_samples)?;
    let mut csv = String::from("max_mode,value,iterations,rows,cols,primal_residual,dual_residual,complementarity_residual,max_holonomy_residual\n");
    let mut reports: Vec<(usize, LpReport)> = Vec::new();
    for &m in &config.lp.max_modes {
        let problem = build_lp(spec, grid, vbox, HolonomyBasis::new(dim, m)?)?;
        let (value, measure, rep) = solve_lp(&problem)?;
        writeln!(
            csv,
            "{m},{value},{},{},{},{},{},{},{}",
            rep.iterations,
            rep.rows,
            rep.cols,
            rep.primal_residual,
            rep.dual_residual,
            rep.complementarity_residual,
            rep.max_holonomy_residual
        )
        .unwrap();
        b.file(&format!("mather_measure_m{m}.csv"), measure.to_csv_string());
        reports.push((m, rep));
    }
    b.file("mather_lp.csv", csv);
    let residual = reports
        .iter()
        .map(|(_, r)| r.primal_residual.max(r.dual_residual).max(r.complementarity_residual))
        .fold(0.0, f64::max);
    let holonomy = reports.iter().map(|(_, r)| r.max_holonomy_residual).fold(0.0, f64::max);
    b.residual("lp_optimality", residual);
    b.residual("lp_holonomy", holonomy);
    b.check(Assertion::at_most("lp_optimality", residual, 1e-8));
    b.check(Assertion::at_most("lp_holonomy", holonomy, 1e-8));
    // the constraint sets shrink as modes are added
    let drop = reports
        .windows(2)
        .map(|w| w[0].1.value - w[1].1.value)
        .fold(0.0, f64::max);
    b.check(Assertion::at_most("lp_monotone_in_modes", drop, 1e-7));
    let value = reports.last().expect("at least one mode bound").1.value;
    b.hbar("lp", -value);
    b.detail("lp", reports.iter().map(|(m, r)| json!({"max_mode": m, "report": r})).collect::<Vec<_>>())?;
    Ok(value)
}

fn run_mather(config: &ExperimentConfig, b: &mut Builder) -> Result<()> {
    lp_sweep(config, b)?;
    Ok(())
}

fn run_triangle(config: &ExperimentConfig, b: &mut Builder) -> Result<()> {
    let spec = &config.lagrangian;
    let dim = config.grid.dim();
    let sol = solve(config, b)?;
    let (schedule, partition) = schedule_for(config, &sol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed());
    let y = random_start(&mut rng, dim);
    let (proc, _) = simulate_traced(y, &sol.phi, schedule.kappa, &partition, spec)?;
    b.file("aim_process.csv", proc.to_csv_string());
    let aim = -proc.cost() / proc.duration();
    b.hbar("aim", aim);
    b.detail("schedule", &schedule)?;
    let occupation = occupation_measure(
        &proc,
        GridSpec::new(dim, config.lp.n)?,
        VelocityBox::new(dim, config.lp.velocity_radius, config.lp.velocity_samples)?,
    )?;
    let basis = HolonomyBasis::new(dim, *config.lp.max_modes.last().unwrap_or(&0))?;
    b.residual("occupation_holonomy", occupation.max_holonomy_residual(&basis));
    let lp = -lp_sweep(config, b)?;
    let tol = config.triangle.tolerance;
    b.check(Assertion::at_most("cell_vs_aim", (sol.hbar - aim).abs(), tol));
    b.check(Assertion::at_most("cell_vs_lp", (sol.hbar - lp).abs(), tol));
    b.check(Assertion::at_most("aim_vs_lp", (aim - lp).abs(), tol));
    let mut csv = String::from("estimator,hbar\n");
    for (k, v) in [("cell", sol.hbar), ("aim", aim), ("lp", lp)] {
        writeln!(csv, "{k},{v}").unwrap();
    }
    b.file("triangle.csv", csv);
    Ok(())
}
