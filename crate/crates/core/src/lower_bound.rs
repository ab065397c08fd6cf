//! Falsification harness for the lower estimate
//!
//! ```text
//! phi(x(r)) + int_0^r L dt >= phi(x(0)) - Hbar r
//! ```
//!
//! over every controlled process. Processes are sampled or searched for;
//! any margin below the numerical slack is reported as a counterexample.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, io_err, Result};
use crate::lagrangian::LagrangianSpec;
use crate::process::{ControlledProcess, Partition};
use crate::torus::{GridScalarField, TorusPoint, Vector};

/// Largest number of segments a generated process may have.
pub const MAX_SEGMENTS: usize = 64;

/// Allowance per unit time for the discretization error of `phi` and the
/// segment integration.
pub const QUADRATURE_RATE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Independent uniform velocities at a random overall scale.
    RandomPiecewiseConstant,
    /// Every coordinate at `+a` or `-a` for one random amplitude `a`.
    BangBang,
    /// `v = -g grad phi(x) + noise`, re-evaluated at each segment start.
    GradientDescentHeuristic,
    /// Simulated annealing on the margin, seeded by the heuristic.
    AdversarialAnnealed,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 4] = [
        GeneratorKind::RandomPiecewiseConstant,
        GeneratorKind::BangBang,
        GeneratorKind::GradientDescentHeuristic,
        GeneratorKind::AdversarialAnnealed,
    ];
}

/// Seeded source of piecewise-constant processes on a uniform partition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProcessGenerator {
    pub kind: GeneratorKind,
    pub seed: u64,
    /// Bound on every velocity component.
    pub cap: f64,
    pub segments: usize,
}

impl ProcessGenerator {
    pub fn new(kind: GeneratorKind, seed: u64, cap: f64, segments: usize) -> Result<Self> {
        if !(cap.is_finite() && cap > 0.0) {
            return Err(invalid(format!("velocity cap must be finite and positive, got {cap}")));
        }
        if !(1..=MAX_SEGMENTS).contains(&segments) {
            return Err(invalid(format!("segment count {segments} not in 1..={MAX_SEGMENTS}")));
        }
        Ok(Self {
            kind,
            seed,
            cap,
            segments,
        })
    }

    /// Cap `2 C3`, with `C3` the velocity bound for the slope of `phi`.
    pub fn for_field(
        kind: GeneratorKind,
        seed: u64,
        spec: &LagrangianSpec,
        phi: &GridScalarField,
        segments: usize,
    ) -> Result<Self> {
        Self::new(kind, seed, 2.0 * spec.velocity_bound(phi.lipschitz()), segments)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(stream))
    }

    /// The `index`-th sample. For the annealed kind this is the starting
    /// point of chain `index`.
    pub fn generate(
        &self,
        spec: &LagrangianSpec,
        phi: &GridScalarField,
        horizon: f64,
        index: u64,
    ) -> Result<ControlledProcess> {
        let mut rng = self.rng(index);
        let (y, vs) = self.draw(&mut rng, phi, horizon);
        build(spec, y, horizon, &vs)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, phi: &GridScalarField, horizon: f64) -> (TorusPoint, Vec<Vector>) {
        let d = phi.grid().dim();
        let y = random_point(rng, d);
        let vs = match self.kind {
            GeneratorKind::RandomPiecewiseConstant => {
                let scale = self.cap * rng.random::<f64>();
                (0..self.segments)
                    .map(|_| draw_vector(d, || scale * (2.0 * rng.random::<f64>() - 1.0)))
                    .collect()
            }
            GeneratorKind::BangBang => {
                let a = self.cap * rng.random::<f64>();
                (0..self.segments)
                    .map(|_| draw_vector(d, || if rng.random::<bool>() { a } else { -a }))
                    .collect()
            }
            GeneratorKind::GradientDescentHeuristic | GeneratorKind::AdversarialAnnealed => {
                let gain = 2.0 * rng.random::<f64>();
                let noise = 0.1 * self.cap * rng.random::<f64>();
                let tau = horizon / self.segments as f64;
                let mut x = y;
                let mut vs = Vec::with_capacity(self.segments);
                for _ in 0..self.segments {
                    let g = interpolant_gradient(phi, &x);
                    let z = draw_vector(d, || rng.sample(StandardNormal));
                    let v = clamp(g * -gain + z * noise, self.cap);
                    x = x.translate(&(v * tau));
                    vs.push(v);
                }
                vs
            }
        };
        (y, vs)
    }
}

fn draw_vector(d: usize, mut f: impl FnMut() -> f64) -> Vector {
    let c: Vec<f64> = (0..d).map(|_| f()).collect();
    Vector::new(&c).expect("dimension in range")
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> TorusPoint {
    let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    TorusPoint::wrap(&raw).expect("finite coordinates")
}

// Gradient of the interpolant by symmetric differences at half a cell.
fn interpolant_gradient(phi: &GridScalarField, x: &TorusPoint) -> Vector {
    let h = 0.5 * phi.grid().spacing();
    let d = x.dim();
    Vector::from_fn(d, |axis| {
        let e = Vector::from_fn(d, |i| if i == axis { h } else { 0.0 });
        let plus = phi.interpolate(&x.translate(&e));
        let minus = phi.interpolate(&x.translate(&(e * -1.0)));
        (plus - minus) / (2.0 * h)
    })
}

fn build(spec: &LagrangianSpec, y: TorusPoint, horizon: f64, vs: &[Vector]) -> Result<ControlledProcess> {
    ControlledProcess::from_velocities(spec, y, &Partition::uniform(horizon, vs.len())?, vs)
}

/// `phi(x(r)) + int_0^r L dt`.
pub fn total_functional(proc: &ControlledProcess, phi: &GridScalarField) -> f64 {
    proc.total_functional(phi)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerSlack {
    /// `residual_sup * r`.
    pub residual_term: f64,
    /// `QUADRATURE_RATE * r`.
    pub quadrature_budget: f64,
    pub total: f64,
}

impl LowerSlack {
    pub fn new(residual_sup: f64, horizon: f64) -> Self {
        let residual_term = residual_sup * horizon;
        let quadrature_budget = QUADRATURE_RATE * horizon;
        Self {
            residual_term,
            quadrature_budget,
            total: residual_term + quadrature_budget,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowerReport {
    pub horizon: f64,
    pub total_functional: f64,
    pub bound: f64,
    /// `total_functional - (phi(x(0)) - hbar r)`.
    pub margin: f64,
    pub slack: LowerSlack,
    pub holds: bool,
}

/// `total_functional - (phi(x(0)) - hbar r)`.
pub fn lower_margin(proc: &ControlledProcess, phi: &GridScalarField, hbar: f64) -> f64 {
    let r = proc.duration();
    let start = phi.interpolate(proc.initial());
    // difference first so that a constant shift of phi cancels to rounding
    (phi.interpolate(proc.terminal()) - start) + proc.cost() + hbar * r
}

/// Compares the margin of `proc` against `-(residual_sup r + budget)`.
pub fn verify_lower(
    proc: &ControlledProcess,
    phi: &GridScalarField,
    hbar: f64,
    residual_sup: f64,
) -> LowerReport {
    let r = proc.duration();
    let margin = lower_margin(proc, phi, hbar);
    let slack = LowerSlack::new(residual_sup, r);
    LowerReport {
        horizon: r,
        total_functional: proc.total_functional(phi),
        bound: phi.interpolate(proc.initial()) - hbar * r,
        margin,
        holds: margin >= -slack.total,
        slack,
    }
}

/// Hex SHA-256 of the CSV form of `phi`.
pub fn field_hash(phi: &GridScalarField) -> String {
    hex::encode(Sha256::digest(phi.to_csv_string().as_bytes()))
}

/// What is written next to a process whose margin broke the slack.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterexampleContext {
    pub phi_sha256: String,
    pub hbar: f64,
    pub residual_sup: f64,
    pub generator: ProcessGenerator,
    pub report: LowerReport,
}

/// Writes `<stem>.csv` (the process) and `<stem>.json` (the context).
pub fn write_counterexample(
    dir: &Path,
    stem: &str,
    proc: &ControlledProcess,
    context: &CounterexampleContext,
) -> Result<()> {
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, proc.to_csv_string()).map_err(io_err(&csv))?;
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(context)? + "\n").map_err(io_err(&json))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub kind: GeneratorKind,
    pub seed: u64,
    /// Margin evaluations in total.
    pub proposals: usize,
    pub horizon: f64,
    #[serde(default = "default_segments")]
    pub segments: usize,
    /// Annealing chains; ignored by the sampling kinds.
    #[serde(default = "default_chains")]
    pub chains: usize,
}

fn default_segments() -> usize {
    MAX_SEGMENTS
}

fn default_chains() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FuzzReport {
    pub kind: GeneratorKind,
    pub seed: u64,
    pub proposals: usize,
    pub cap: f64,
    pub min_margin: f64,
    pub mean_margin: f64,
    pub slack: LowerSlack,
    pub holds: bool,
    /// The process attaining `min_margin`.
    #[serde(skip)]
    pub worst: ControlledProcess,
}

/// Searches for the smallest margin. Samples (or chains) are independent
/// and seeded by `seed + index`, so the outcome does not depend on the
/// thread count.
pub fn fuzz_lower(
    spec: &LagrangianSpec,
    phi: &GridScalarField,
    hbar: f64,
    residual_sup: f64,
    config: &FuzzConfig,
) -> Result<FuzzReport> {
    if !(config.horizon.is_finite() && config.horizon > 0.0) {
        return Err(invalid(format!("horizon must be positive, got {}", config.horizon)));
    }
    if config.proposals == 0 {
        return Err(invalid("at least one proposal is needed"));
    }
    let gen = ProcessGenerator::for_field(config.kind, config.seed, spec, phi, config.segments)?;
    let results: Vec<(f64, f64, ControlledProcess)> = match config.kind {
        GeneratorKind::AdversarialAnnealed => {
            let chains = config.chains.clamp(1, config.proposals);
            (0..chains)
                .into_par_iter()
                .map(|c| {
                    let share = config.proposals / chains + usize::from(c < config.proposals % chains);
                    anneal(&gen, spec, phi, hbar, config.horizon, c as u64, share)
                })
                .collect::<Result<_>>()?
        }
        _ => (0..config.proposals)
            .into_par_iter()
            .map(|i| {
                let proc = gen.generate(spec, phi, config.horizon, i as u64)?;
                let m = lower_margin(&proc, phi, hbar);
                Ok((m, m, proc))
            })
            .collect::<Result<_>>()?,
    };
    let sum: f64 = results.iter().map(|(_, s, _)| s).sum();
    let (min_margin, _, worst) = results
        .into_iter()
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .expect("at least one result");
    let slack = LowerSlack::new(residual_sup, config.horizon);
    Ok(FuzzReport {
        kind: config.kind,
        seed: config.seed,
        proposals: config.proposals,
        cap: gen.cap,
        min_margin,
        mean_margin: sum / config.proposals as f64,
        holds: min_margin >= -slack.total,
        slack,
        worst,
    })
}

// One Metropolis chain over (start point, velocities). Returns the best
// margin, the sum of all evaluated margins and the best process.
fn anneal(
    gen: &ProcessGenerator,
    spec: &LagrangianSpec,
    phi: &GridScalarField,
    hbar: f64,
    horizon: f64,
    chain: u64,
    proposals: usize,
) -> Result<(f64, f64, ControlledProcess)> {
    let mut rng = gen.rng(chain);
    // start from the best of a few heuristic draws
    let seeds = (proposals / 8).clamp(1, 16);
    let mut sum = 0.0;
    let mut start: Option<(f64, TorusPoint, Vec<Vector>, ControlledProcess)> = None;
    for _ in 0..seeds {
        let (y, vs) = gen.draw(&mut rng, phi, horizon);
        let proc = build(spec, y, horizon, &vs)?;
        let m = lower_margin(&proc, phi, hbar);
        sum += m;
        if start.as_ref().is_none_or(|s| m < s.0) {
            start = Some((m, y, vs, proc));
        }
    }
    let (mut cur_m, mut y, mut vs, proc) = start.expect("at least one draw");
    let mut best = (cur_m, proc);
    let d = y.dim();
    let tau = horizon / vs.len() as f64;
    let (t_hot, t_cold): (f64, f64) = (0.05, 1e-5);
    // proposal scale adapts towards an acceptance rate near one in four
    let mut scale = 0.05 * gen.cap;
    let (s_min, s_max) = (1e-6 * gen.cap, 0.5 * gen.cap);
    let n = vs.len();
    for step in seeds..proposals {
        let frac = step as f64 / proposals as f64;
        let temp = t_hot * (t_cold / t_hot).powf(frac);
        let (mut y2, mut vs2) = (y, vs.clone());
        let dv = draw_vector(d, || scale * rng.sample::<f64, _>(StandardNormal));
        let u: f64 = rng.random();
        if u < 0.1 {
            // move the start, keeping x(t_1) fixed
            y2 = y.translate(&(dv * tau));
            vs2[0] = clamp(vs2[0] + dv * -1.0, gen.cap);
        } else if u < 0.5 && n > 1 {
            // bend the path locally, keeping x(t_{i+2}) fixed
            let i = rng.random_range(0..n - 1);
            vs2[i] = clamp(vs2[i] + dv, gen.cap);
            vs2[i + 1] = clamp(vs2[i + 1] + dv * -1.0, gen.cap);
        } else if u < 0.75 {
            let i = rng.random_range(0..n);
            vs2[i] = clamp(vs2[i] + dv, gen.cap);
        } else if u < 0.85 {
            // slow down a stretch of the path
            let i = rng.random_range(0..n);
            let j = rng.random_range(i..n);
            let f = (1.0 - scale / gen.cap).max(0.0);
            for v in &mut vs2[i..=j] {
                *v = *v * f;
            }
        } else if u < 0.9 && n > 1 {
            let i = rng.random_range(1..n);
            vs2[i] = vs2[i - 1];
        } else {
            for v in &mut vs2 {
                *v = clamp(*v + dv * 0.2, gen.cap);
            }
        }
        let cand = build(spec, y2, horizon, &vs2)?;
        let m = lower_margin(&cand, phi, hbar);
        sum += m;
        if m < best.0 {
            best = (m, cand.clone());
        }
        if m <= cur_m || rng.random::<f64>() < ((cur_m - m) / temp).exp() {
            y = y2;
            vs = vs2;
            cur_m = m;
            scale = (scale * 1.3).min(s_max);
        } else {
            scale = (scale * 0.9).max(s_min);
        }
    }
    Ok((best.0, sum, best.1))
}

fn clamp(v: Vector, cap: f64) -> Vector {
    Vector::from_fn(v.dim(), |i| v[i].clamp(-cap, cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::Potential;
    use crate::torus::GridSpec;

    fn pendulum() -> LagrangianSpec {
        LagrangianSpec::mechanical(Potential::single_cosine(1.0))
    }

    fn pendulum_phi(n: usize) -> GridScalarField {
        use std::f64::consts::PI;
        GridScalarField::from_fn(GridSpec::new(1, n).unwrap(), |x| {
            let s = x.as_slice()[0];
            let s = s.min(1.0 - s);
            2.0 * (1.0 - (PI * s).cos()) / PI
        })
    }

    #[test]
    fn generator_validation() {
        assert!(ProcessGenerator::new(GeneratorKind::BangBang, 0, f64::INFINITY, 4).is_err());
        assert!(ProcessGenerator::new(GeneratorKind::BangBang, 0, 1.0, 0).is_err());
        assert!(ProcessGenerator::new(GeneratorKind::BangBang, 0, 1.0, 65).is_err());
    }

    #[test]
    fn generated_processes_respect_cap_and_seed() {
        let spec = pendulum();
        let phi = pendulum_phi(64);
        for kind in GeneratorKind::ALL {
            let gen = ProcessGenerator::new(kind, 7, 3.0, 16).unwrap();
            let a = gen.generate(&spec, &phi, 2.0, 5).unwrap();
            let b = gen.generate(&spec, &phi, 2.0, 5).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.segments(), 16);
            assert!((a.duration() - 2.0).abs() < 1e-12);
            assert!(a.velocities().iter().all(|v| v.as_slice().iter().all(|c| c.abs() <= 3.0)));
            assert_ne!(a, gen.generate(&spec, &phi, 2.0, 6).unwrap());
        }
    }

    #[test]
    fn bang_bang_uses_one_amplitude() {
        let spec = pendulum();
        let phi = pendulum_phi(64);
        let gen = ProcessGenerator::new(GeneratorKind::BangBang, 1, 5.0, 32).unwrap();
        let p = gen.generate(&spec, &phi, 1.0, 0).unwrap();
        let a = p.velocities()[0][0].abs();
        assert!(p.velocities().iter().all(|v| v[0].abs() == a));
    }

    #[test]
    fn resting_at_the_top_has_zero_margin() {
        // L(0, 0) = -1 = -Hbar and phi(0) = 0
        let spec = pendulum();
        let phi = pendulum_phi(128);
        let p = Partition::uniform(3.0, 3).unwrap();
        let proc = ControlledProcess::from_velocities(&spec, TorusPoint::origin(1), &p, &[Vector::zeros(1); 3]).unwrap();
        let rep = verify_lower(&proc, &phi, 1.0, 0.0);
        assert!(rep.margin.abs() < 1e-12);
        assert!(rep.holds);
        // resting elsewhere costs (L(x, 0) + Hbar) r = (1 - cos 2 pi x) r
        let x = TorusPoint::wrap(&[0.25]).unwrap();
        let proc = ControlledProcess::from_velocities(&spec, x, &p, &[Vector::zeros(1); 3]).unwrap();
        assert!((verify_lower(&proc, &phi, 1.0, 0.0).margin - 3.0).abs() < 1e-12);
    }

    #[test]
    fn a_wrong_hbar_is_caught() {
        let spec = pendulum();
        let phi = pendulum_phi(128);
        let cfg = FuzzConfig {
            kind: GeneratorKind::GradientDescentHeuristic,
            seed: 3,
            proposals: 200,
            horizon: 5.0,
            segments: 16,
            chains: 1,
        };
        let ok = fuzz_lower(&spec, &phi, 1.0, 0.0, &cfg).unwrap();
        assert!(ok.holds, "{ok:?}");
        let bad = fuzz_lower(&spec, &phi, 0.9, 0.0, &cfg).unwrap();
        assert!(!bad.holds);
        assert!((bad.min_margin - lower_margin(&bad.worst, &phi, 0.9)).abs() < 1e-12);
    }

    #[test]
    fn annealing_is_deterministic_and_improves() {
        let spec = pendulum();
        let phi = pendulum_phi(128);
        let cfg = FuzzConfig {
            kind: GeneratorKind::AdversarialAnnealed,
            seed: 11,
            proposals: 2000,
            horizon: 4.0,
            segments: 16,
            chains: 4,
        };
        let a = fuzz_lower(&spec, &phi, 1.0, 0.0, &cfg).unwrap();
        let b = fuzz_lower(&spec, &phi, 1.0, 0.0, &cfg).unwrap();
        assert_eq!(a, b);
        let start = (0..4)
            .map(|c| {
                let gen = ProcessGenerator::for_field(cfg.kind, cfg.seed, &spec, &phi, 16).unwrap();
                lower_margin(&gen.generate(&spec, &phi, 4.0, c).unwrap(), &phi, 1.0)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(a.min_margin <= start);
        assert!(a.holds, "{a:?}");
    }

    #[test]
    fn counterexample_dump() {
        let spec = pendulum();
        let phi = pendulum_phi(32);
        let gen = ProcessGenerator::new(GeneratorKind::BangBang, 0, 2.0, 4).unwrap();
        let proc = gen.generate(&spec, &phi, 1.0, 0).unwrap();
        let ctx = CounterexampleContext {
            phi_sha256: field_hash(&phi),
            hbar: 1.0,
            residual_sup: 0.0,
            generator: gen,
            report: verify_lower(&proc, &phi, 1.0, 0.0),
        };
        let dir = tempfile::tempdir().unwrap();
        write_counterexample(dir.path(), "cx", &proc, &ctx).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("cx.csv")).unwrap();
        assert_eq!(csv.lines().count(), 6);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("cx.json")).unwrap()).unwrap();
        assert_eq!(json["phi_sha256"].as_str().unwrap().len(), 64);
        assert_eq!(json["generator"]["kind"], "bang-bang");
    }
}
