//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use weakkam_core::aiming::{simulate_traced, upper_estimate_check, AimingSchedule, CheckStatus};
use weakkam_core::cell_solver::{solve_cell_cascade, CellSolution};
use weakkam_core::envelope::{lower_envelope, mollify, lower_envelope_field, upper_envelope, upper_envelope_field, EnvelopeConstants};
use weakkam_core::experiment::{run, ExperimentConfig};
use weakkam_core::lagrangian::{hamiltonian, LagrangianSpec, VelocityBox};
use weakkam_core::lower_bound::{fuzz_lower, lower_margin, FuzzConfig, GeneratorKind, LowerSlack};
use weakkam_core::mather::{build_lp, occupation_measure, solve_lp, subsolution_residual_mollified, HolonomyBasis};
use weakkam_core::process::ControlledProcess;
use weakkam_core::torus::{GridSpec, TorusPoint};

use common::{families, offset, pendulum, point, random_field};

const EPS: f64 = 0.1;
const TOL: f64 = 1e-5;
const MAX_ITER: usize = 2_000_000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

struct Cache {
    cells: BTreeMap<(usize, usize), CellSolution>,
}

impl Cache {
    fn cell(&mut self, family: usize, n: usize) -> &CellSolution {
        self.cells.entry((family, n)).or_insert_with(|| {
            let spec = &families()[family];
            solve_cell_cascade(spec, GridSpec::new(1, n).unwrap(), TOL, MAX_ITER).unwrap()
        })
    }
}

fn envelope_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut sign_changing_excess = 0usize;
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, excess: f64| {
        let e = worst.entry(name).or_insert(f64::NEG_INFINITY);
        *e = e.max(excess);
    };
    for _ in 0..200 {
        let phi = random_field(&mut rng, 128);
        let c = EnvelopeConstants::of(&phi);
        let k = c.lipschitz;
        let h = phi.grid().spacing();
        // offsets are unchanged by adding constants, so the radius bound
        // applies to phi - min phi, which is bounded by osc(phi)
        let radius = (2.0 * phi.oscillation()).sqrt();
        let literal = (2.0 * phi.sup_abs()).sqrt();
        for kappa in [0.2, 0.1, 0.05] {
            let tiny = 1e-12 * (1.0 + phi.sup_abs());
            let lower_field = lower_envelope_field(&phi, kappa).unwrap();
            let upper_field = upper_envelope_field(&phi, kappa).unwrap();
            note("lipschitz_lower", lower_field.lipschitz() - (k + 2.0 * h * k));
            note("lipschitz_upper", upper_field.lipschitz() - (k + 2.0 * h * k));
            let p_cap = k + 2.0 * h / (kappa * kappa);
            for _ in 0..16 {
                let x = point(&mut rng);
                let fx = phi.interpolate(&x);
                let lo = lower_envelope(&phi, kappa, &x).unwrap();
                let up = upper_envelope(&phi, kappa, &x).unwrap();
                for env in [&lo, &up] {
                    note("offset_radius", env.b.norm() - radius * kappa - tiny);
                    if env.b.norm() > literal * kappa + tiny {
                        sign_changing_excess += 1;
                    }
                    note("offset_power", env.b.norm() - c.c1 * kappa.powf(1.5) - tiny);
                    note("gap", (fx - env.value).abs() - c.c2 * kappa - tiny);
                    note("gradient", env.p.norm() - p_cap);
                }
                let prox = lo.proximal_point(&x);
                let up_prox = up.proximal_point(&x);
                for _ in 0..8 {
                    let w = offset(&mut rng, 0.25);
                    let xw = x.translate(&w);
                    let lw = lower_envelope(&phi, kappa, &xw).unwrap().value;
                    let uw = upper_envelope(&phi, kappa, &xw).unwrap().value;
                    let quad = w.norm_sq() / (2.0 * kappa * kappa);
                    note("taylor_lower", lw - (lo.value + lo.p.dot(&w) + quad + 1e-6));
                    note("taylor_upper", (up.p.dot(&w) - quad - 1e-6) - (uw - fx));
                    // proximal supergradient at the proximal point
                    let z = up_prox.translate(&w);
                    note(
                        "supergradient",
                        phi.interpolate(&z) - (phi.interpolate(&up_prox) + up.p.dot(&w) + quad) - 1e-9,
                    );
                    let z = prox.translate(&w);
                    note(
                        "subgradient",
                        (phi.interpolate(&prox) + lo.p.dot(&w) - quad) - phi.interpolate(&z) - 1e-9,
                    );
                }
            }
        }
    }
    let passed = worst.values().all(|&e| e <= 0.0);
    let detail = worst.iter().map(|(k, v)| format!("{k}={v:.1e}")).collect::<Vec<_>>().join(" ");
    outcome(
        passed,
        format!("worst excess over bound: {detail}; offsets beyond sqrt(2 sup|phi|) kappa: {sign_changing_excess}"),
    )
}

fn cell_golden(cache: &mut Cache) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (family, name) in [(0, "pendulum"), (1, "kinked")] {
        let coarse = cache.cell(family, 256).hbar;
        let fine = cache.cell(family, 512).hbar;
        ok &= (coarse - 1.0).abs() <= 0.05 && (fine - coarse).abs() <= 0.02;
        parts.push(format!("{name}: hbar256={coarse:.6} hbar512={fine:.6}"));
    }
    outcome(ok, parts.join("; "))
}

struct AimRun {
    status: CheckStatus,
    certified: bool,
    margin: f64,
    lower_slack: f64,
    upper_slack: f64,
}

fn aim_runs(spec: &LagrangianSpec, sol: &CellSolution, horizon: f64, starts: usize, seed: u64) -> Vec<AimRun> {
    let schedule = AimingSchedule::new(spec, &sol.phi, EPS).unwrap();
    let partition = schedule.partition(horizon).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..starts)
        .map(|_| {
            let y = point(&mut rng);
            let (proc, trace) = simulate_traced(y, &sol.phi, schedule.kappa, &partition, spec).unwrap();
            let up = upper_estimate_check(
                &proc,
                &trace,
                &sol.phi,
                sol.hbar,
                EPS,
                spec,
                schedule.kappa,
                partition.fineness(),
                Some(&schedule),
            );
            AimRun {
                status: up.status,
                certified: schedule.certifies(schedule.kappa, partition.fineness()),
                margin: lower_margin(&proc, &sol.phi, sol.hbar),
                lower_slack: LowerSlack::new(sol.residual_sup, horizon).total,
                upper_slack: up.slack,
            }
        })
        .collect()
}

fn certified_runs(cache: &mut Cache, runs: &mut BTreeMap<usize, Vec<AimRun>>) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (f, spec) in families().iter().enumerate() {
        let sol = cache.cell(f, 256);
        let rs = aim_runs(spec, sol, 10.0, 50, 100 + f as u64);
        let passes = rs.iter().filter(|r| r.status == CheckStatus::CertifiedPass).count();
        let mislabels = rs
            .iter()
            .filter(|r| (r.status != CheckStatus::Uncertified) != r.certified)
            .count();
        ok &= passes == rs.len() && mislabels == 0;
        let slack = rs.iter().map(|r| r.upper_slack).fold(0.0, f64::max);
        parts.push(format!(
            "{}: {passes}/{} certified passes, {mislabels} mislabels, max slack {slack:.1e}",
            spec.family_name(),
            rs.len()
        ));
        runs.insert(f, rs);
    }
    outcome(ok, parts.join("; "))
}

fn adversary(cache: &mut Cache) -> Outcome {
    let sol = cache.cell(0, 256);
    let cfg = FuzzConfig {
        kind: GeneratorKind::AdversarialAnnealed,
        seed: 7,
        proposals: 10_000,
        horizon: 10.0,
        segments: 64,
        chains: 4,
    };
    let rep = fuzz_lower(&pendulum(), &sol.phi, sol.hbar, sol.residual_sup, &cfg).unwrap();
    outcome(
        rep.min_margin >= -rep.slack.total,
        format!("min margin {:.3e} vs -slack {:.3e}", rep.min_margin, -rep.slack.total),
    )
}

fn sandwich(cache: &mut Cache, runs: &BTreeMap<usize, Vec<AimRun>>) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (f, spec) in families().iter().enumerate() {
        let sol = cache.cell(f, 256);
        let long = aim_runs(spec, sol, 50.0, 8, 200 + f as u64);
        for (r, rs) in [(10.0, &runs[&f]), (50.0, &long)] {
            let lo = rs.iter().map(|x| x.margin + x.lower_slack).fold(f64::INFINITY, f64::min);
            let hi = rs
                .iter()
                .map(|x| (r + 1.0) * EPS + x.upper_slack - x.margin)
                .fold(f64::INFINITY, f64::min);
            ok &= lo >= 0.0 && hi >= 0.0;
            parts.push(format!("{} r={r}: room below {lo:.2e}, above {hi:.2e}", spec.family_name()));
        }
    }
    outcome(ok, parts.join("; "))
}

fn pendulum_run(cache: &mut Cache, horizon: f64) -> ControlledProcess {
    let sol = cache.cell(0, 256);
    let schedule = AimingSchedule::new(&pendulum(), &sol.phi, EPS).unwrap();
    let partition = schedule.partition(horizon).unwrap();
    let y = TorusPoint::wrap(&[0.3]).unwrap();
    simulate_traced(y, &sol.phi, schedule.kappa, &partition, &pendulum()).unwrap().0
}

fn averaging(long: &ControlledProcess) -> Outcome {
    let avg = long.cost() / long.duration();
    outcome(
        (-1.02..=-0.85).contains(&avg),
        format!("average cost {avg:.5} over r={}", long.duration()),
    )
}

fn triangle(cache: &mut Cache) -> Outcome {
    let grid = GridSpec::new(1, 64).unwrap();
    let vbox = VelocityBox::new(1, 4.0, 128).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (f, spec) in families().iter().enumerate() {
        let hbar = cache.cell(f, 64).hbar;
        let mut values = Vec::new();
        for m in [1, 2, 4, 8] {
            let lp = build_lp(spec, grid, vbox, HolonomyBasis::new(1, m).unwrap()).unwrap();
            values.push(solve_lp(&lp).unwrap().0);
        }
        let drop = values.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        let gap = (values[3] + hbar).abs();
        ok &= gap <= 0.05 && drop <= 1e-7;
        parts.push(format!("{}: lp={:.6} hbar={hbar:.6} drop={drop:.1e}", spec.family_name(), values[3]));
    }
    outcome(ok, parts.join("; "))
}

fn occupation(runs: &[ControlledProcess]) -> Outcome {
    let grid = GridSpec::new(1, 1024).unwrap();
    let vbox = VelocityBox::new(1, 4.0, 512).unwrap();
    let basis = HolonomyBasis::new(1, 4).unwrap();
    let res: Vec<f64> = runs
        .iter()
        .map(|p| occupation_measure(p, grid, vbox).unwrap().max_holonomy_residual(&basis))
        .collect();
    let ratios: Vec<f64> = res.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = res.last().is_some_and(|&r| r <= 0.05) && ratios.iter().all(|q| (q / 2.0 - 1.0).abs() <= 0.3);
    let fmt = |v: &[f64], f: fn(&f64) -> String| v.iter().map(f).collect::<Vec<_>>().join(", ");
    outcome(
        ok,
        format!(
            "residuals r=50,100,200: [{}], ratios [{}]",
            fmt(&res, |x| format!("{x:.3e}")),
            fmt(&ratios, |x| format!("{x:.3}"))
        ),
    )
}

fn mollified(cache: &mut Cache) -> Outcome {
    let sol = cache.cell(0, 512);
    let spec = pendulum();
    let res = subsolution_residual_mollified(&sol.phi, 0.02, sol.hbar, &spec, &sol.velocity_box).unwrap();
    // the same sup without the modulus shift, for the record
    let smooth = mollify(&sol.phi, 0.02).unwrap();
    let grid = *smooth.grid();
    let raw = (0..grid.node_count())
        .map(|i| {
            let p = -smooth.centered_gradient(i);
            let vbox = sol.velocity_box.widened(spec.velocity_bound(p.norm()));
            hamiltonian(&spec, &grid.node(i), &p, &vbox).unwrap() - sol.hbar
        })
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        res <= 0.05,
        format!("residual {res:.3e} (shift {:.3e}, unshifted sup {raw:.3e})", spec.modulus(sol.velocity_box.radius(), 0.02)),
    )
}

fn determinism() -> Outcome {
    let lag = r#"{"family": "kinked", "lambda": 0.5, "potential": {"cos_coeffs": [[1, 1.0]]}}"#;
    let configs = [
        ("cell", r#""grid": {"d": 1, "n": 64}"#),
        ("aim", r#""grid": {"d": 1, "n": 64}, "seed": 3, "aim": {"starts": 3}, "schedule": {"horizon": 2.0}"#),
        (
            "lower-fuzz",
            r#""grid": {"d": 1, "n": 64}, "seed": 3, "schedule": {"horizon": 2.0},
               "fuzz": {"proposals": 400, "segments": 16, "chains": 2}"#,
        ),
        (
            "mather",
            r#""grid": {"d": 1, "n": 64}, "lp": {"n": 16, "max_modes": [2, 4], "velocity_samples": 32}"#,
        ),
        (
            "triangle",
            r#""grid": {"d": 1, "n": 64}, "seed": 3, "schedule": {"horizon": 5.0},
               "lp": {"n": 16, "max_modes": [2, 4], "velocity_samples": 32}"#,
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, rest) in configs {
        let text = format!(r#"{{"kind": "{kind}", "lagrangian": {lag}, {rest}}}"#);
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let csvs = || -> Vec<(String, Vec<u8>)> {
            run(&cfg)
                .unwrap()
                .files
                .into_iter()
                .filter(|(name, _)| name.ends_with(".csv"))
                .collect()
        };
        let (a, b) = (csvs(), csvs());
        let same = !a.is_empty() && a == b;
        ok &= same;
        parts.push(format!("{kind}: {} csv files {}", a.len(), if same { "identical" } else { "DIFFER" }));
    }
    outcome(ok, parts.join("; "))
}

fn main() {
    let mut cache = Cache { cells: BTreeMap::new() };
    let mut runs = BTreeMap::new();
    let mut failed = 0;
    let mut report = |index: usize, name: &str, start: Instant, o: Outcome| {
        println!(
            "criterion {index:>2} {name}: {} ({:.1}s) {}",
            if o.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.passed {
            failed += 1;
        }
    };
    let t = Instant::now();
    report(1, "envelope calculus", t, envelope_suite());
    let t = Instant::now();
    report(2, "cell golden values", t, cell_golden(&mut cache));
    let t = Instant::now();
    report(3, "certified upper runs", t, certified_runs(&mut cache, &mut runs));
    let t = Instant::now();
    report(4, "lower-bound adversary", t, adversary(&mut cache));
    let t = Instant::now();
    report(5, "two-sided sandwich", t, sandwich(&mut cache, &runs));
    let t = Instant::now();
    let long: Vec<ControlledProcess> = [50.0, 100.0, 200.0].iter().map(|&r| pendulum_run(&mut cache, r)).collect();
    report(6, "long-run average cost", t, averaging(&long[2]));
    let t = Instant::now();
    report(7, "three-way critical value", t, triangle(&mut cache));
    let t = Instant::now();
    report(8, "occupation holonomy", t, occupation(&long));
    let t = Instant::now();
    report(9, "mollified subsolution", t, mollified(&mut cache));
    let t = Instant::now();
    report(10, "determinism", t, determinism());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
