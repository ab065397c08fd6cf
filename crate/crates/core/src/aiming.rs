//! Proximal-aiming feedback and its step-by-step (Krasovskii–Subbotin)
//! rollout, with the error ledger of the upper estimate
//!
//! ```text
//! phi(x(r)) + int_0^r L dt <= phi(y) - Hbar r + (r + 1) eps.
//! ```

use serde::Serialize;

use crate::envelope::lower_envelope;
use crate::error::{invalid, Error, Result};
use crate::lagrangian::{conjugate_maximizer, LagrangianSpec, VelocityBox};
use crate::process::{ControlledProcess, Partition};
use crate::torus::{GridScalarField, TorusPoint, Vector};

/// Per-axis velocity samples used by the feedback maximization.
pub const FEEDBACK_VELOCITY_SAMPLES: usize = 64;

/// Parameters `(kappa0, kappa, delta(kappa))` for a target accuracy `eps`.
///
/// For a field with Lipschitz constant `K` the envelope offset obeys
/// `|b| <= K kappa^2` and `phi - phi_kappa <= K^2 kappa^2 / 2`, so the
/// constants are taken as `C1 = K sqrt(kappa0)` and `C2 = K^2 kappa0 / 2`,
/// valid for every `kappa <= kappa0`. The step-size conditions use the
/// largest speed `S` the feedback can produce when `|p| <= K`; `C3` is
/// the radius of the velocity box searched.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AimingSchedule {
    pub epsilon: f64,
    pub lipschitz: f64,
    pub speed: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub kappa0: f64,
    pub kappa: f64,
    /// `delta(kappa)`.
    pub delta: f64,
    /// `omega^{-1}(eps/4) / S`, the part of `delta` independent of `kappa`.
    pub motion_step: f64,
}

// Largest step ever allowed.
const MAX_DELTA: f64 = 0.25;

impl AimingSchedule {
    /// Largest admissible `kappa0`, with `kappa = kappa0`.
    pub fn new(spec: &LagrangianSpec, phi: &GridScalarField, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        let k = phi.lipschitz();
        let dim = phi.grid().dim();
        let kappa0 = if k == 0.0 {
            1.0
        } else {
            let by_gap = (2.0 * epsilon).sqrt() / k;
            let by_offset = (spec.modulus_inverse(epsilon / 2.0) / k).sqrt();
            by_gap.min(by_offset).min(1.0)
        };
        let speed = spec.speed_bound(k, dim);
        let motion_step = if speed == 0.0 {
            MAX_DELTA
        } else {
            (spec.modulus_inverse(epsilon / 4.0) / speed).min(MAX_DELTA)
        };
        let mut s = Self {
            epsilon,
            lipschitz: k,
            speed,
            c1: k * kappa0.sqrt(),
            c2: 0.5 * k * k * kappa0,
            c3: spec.velocity_bound(k),
            kappa0,
            kappa: kappa0,
            delta: 0.0,
            motion_step,
        };
        s.delta = s.delta_of(kappa0);
        s.check(spec)?;
        Ok(s)
    }

    /// Same constants with a smaller `kappa`.
    pub fn with_kappa(&self, spec: &LagrangianSpec, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= self.kappa0) {
            return Err(invalid(format!("kappa {kappa} not in (0, {}]", self.kappa0)));
        }
        let mut s = self.clone();
        s.kappa = kappa;
        s.delta = s.delta_of(kappa);
        s.check(spec)?;
        Ok(s)
    }

    /// `delta(kappa) = min(eps kappa^2 / (2 S^2), omega^{-1}(eps/4) / S)`.
    pub fn delta_of(&self, kappa: f64) -> f64 {
        if self.speed == 0.0 {
            return self.motion_step;
        }
        let by_taylor = self.epsilon * kappa * kappa / (2.0 * self.speed * self.speed);
        by_taylor.min(self.motion_step)
    }

    /// The four schedule conditions.
    pub fn check(&self, spec: &LagrangianSpec) -> Result<()> {
        let eps = self.epsilon;
        let slack = 1.0 + 1e-9;
        let fail = |what: &str| Err(Error::Property(format!("schedule condition {what} fails")));
        if self.c2 * self.kappa0 > eps * slack {
            return fail("C2 kappa0 <= eps");
        }
        if spec.modulus(self.c3, self.c1 * self.kappa0.powf(1.5)) > eps / 2.0 * slack {
            return fail("omega(C1 kappa0^3/2) <= eps/2");
        }
        let s2 = self.speed * self.speed;
        if self.delta * s2 > eps * self.kappa * self.kappa / 2.0 * slack {
            return fail("delta S^2 <= eps kappa^2 / 2");
        }
        if spec.modulus(self.c3, self.delta * self.speed) > eps / 4.0 * slack {
            return fail("omega(delta S) <= eps/4");
        }
        Ok(())
    }

    /// Whether a run with this `kappa` and partition fineness is covered.
    pub fn certifies(&self, kappa: f64, fineness: f64) -> bool {
        kappa > 0.0 && kappa <= self.kappa0 && fineness <= self.delta_of(kappa)
    }

    /// Uniform partition of `[0, r]` with fineness `delta(kappa)`.
    pub fn partition(&self, horizon: f64) -> Result<Partition> {
        Partition::with_fineness(horizon, self.delta)
    }
}

/// The feedback `v_kappa[x] = argmax_v [-p_kappa[x] v - L(x + b_kappa[x], v)]`.
#[derive(Clone, Debug)]
pub struct ProximalAiming<'a> {
    phi: &'a GridScalarField,
    spec: &'a LagrangianSpec,
    kappa: f64,
    vbox: VelocityBox,
}

/// One evaluation of the feedback.
#[derive(Clone, Copy, Debug)]
pub struct AimingStep {
    pub velocity: Vector,
    pub proximal_point: TorusPoint,
    pub p: Vector,
    /// `H(x + b, -p)`.
    pub hamiltonian: f64,
}

impl<'a> ProximalAiming<'a> {
    pub fn new(phi: &'a GridScalarField, spec: &'a LagrangianSpec, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(invalid(format!("kappa must be positive, got {kappa}")));
        }
        let dim = phi.grid().dim();
        spec.check_dim(dim)?;
        let vbox = VelocityBox::for_slope(spec, dim, phi.lipschitz(), FEEDBACK_VELOCITY_SAMPLES)?;
        Ok(Self { phi, spec, kappa, vbox })
    }

    /// `C3` for this field.
    pub fn bound(&self) -> f64 {
        self.vbox.radius()
    }

    pub fn step(&self, x: &TorusPoint) -> Result<AimingStep> {
        let env = lower_envelope(self.phi, self.kappa, x)?;
        let y = env.proximal_point(x);
        let q = -env.p;
        let (velocity, hamiltonian) = conjugate_maximizer(self.spec, &y, &q, &self.vbox)?;
        if velocity.norm() > self.bound() * (1.0 + 1e-12) {
            return Err(Error::Property(format!(
                "feedback speed {} exceeds C3 = {}",
                velocity.norm(),
                self.bound()
            )));
        }
        Ok(AimingStep {
            velocity,
            proximal_point: y,
            p: env.p,
            hamiltonian,
        })
    }

    pub fn direction(&self, x: &TorusPoint) -> Result<Vector> {
        self.step(x).map(|s| s.velocity)
    }
}

/// `v_kappa[x]` for a single point.
pub fn feedback_direction(
    phi: &GridScalarField,
    kappa: f64,
    spec: &LagrangianSpec,
    x: &TorusPoint,
) -> Result<Vector> {
    ProximalAiming::new(phi, spec, kappa)?.direction(x)
}

/// What a rollout saw along the way.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AimingTrace {
    /// Smallest `H(x_i + b_i, -p_i)` over the steps.
    pub min_hamiltonian: f64,
    pub max_speed: f64,
}

/// Rollout from `y`: on `[t_i, t_{i+1})` the velocity is `v_kappa[x(t_i)]`.
pub fn simulate(
    y: TorusPoint,
    phi: &GridScalarField,
    kappa: f64,
    partition: &Partition,
    spec: &LagrangianSpec,
) -> Result<ControlledProcess> {
    simulate_traced(y, phi, kappa, partition, spec).map(|(p, _)| p)
}

pub fn simulate_traced(
    y: TorusPoint,
    phi: &GridScalarField,
    kappa: f64,
    partition: &Partition,
    spec: &LagrangianSpec,
) -> Result<(ControlledProcess, AimingTrace)> {
    if y.dim() != phi.grid().dim() {
        return Err(invalid("start point and field dimensions differ"));
    }
    let aim = ProximalAiming::new(phi, spec, kappa)?;
    let mut proc = ControlledProcess::start(y);
    let mut trace = AimingTrace {
        min_hamiltonian: f64::INFINITY,
        max_speed: 0.0,
    };
    for i in 0..partition.steps() {
        let step = aim.step(proc.terminal())?;
        trace.min_hamiltonian = trace.min_hamiltonian.min(step.hamiltonian);
        trace.max_speed = trace.max_speed.max(step.velocity.norm());
        proc.push(spec, step.velocity, partition.step(i))?;
    }
    Ok((proc, trace))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    CertifiedPass,
    CertifiedFail,
    /// The schedule does not cover the run; the inequality is reported
    /// but carries no guarantee.
    Uncertified,
}

/// The terms of the upper-estimate proof evaluated for one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UpperLedger {
    /// `sum_i (t_{i+1} - t_i)^2 S^2 / (2 kappa^2)`.
    pub taylor_term: f64,
    /// `r omega(d(Delta) S)`.
    pub motion_modulus_term: f64,
    /// `r omega(K kappa^2)`.
    pub offset_modulus_term: f64,
    /// `K^2 kappa^2 / 2`.
    pub envelope_gap_term: f64,
    /// `r [Hbar - min_i H(x_i + b_i, -p_i)]_+`: measured failure of the
    /// supersolution inequality at the proximal points.
    pub supersolution_defect_term: f64,
    /// Exact segment integration leaves only rounding.
    pub quadrature_budget: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UpperReport {
    pub status: CheckStatus,
    pub holds: bool,
    pub horizon: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// `rhs + slack - lhs`.
    pub margin: f64,
    pub ledger: UpperLedger,
}

/// Checks the upper estimate for a rollout produced by [`simulate_traced`].
///
/// The run is certified when `schedule` covers its `kappa` and fineness.
/// The slack is the measured supersolution defect plus the rounding budget.
pub fn upper_estimate_check(
    proc: &ControlledProcess,
    trace: &AimingTrace,
    phi: &GridScalarField,
    hbar: f64,
    epsilon: f64,
    spec: &LagrangianSpec,
    kappa: f64,
    fineness: f64,
    schedule: Option<&AimingSchedule>,
) -> UpperReport {
    let r = proc.duration();
    let k = phi.lipschitz();
    let speed = spec.speed_bound(k, phi.grid().dim()).max(trace.max_speed);
    let taylor_term = proc
        .times()
        .windows(2)
        .map(|w| (w[1] - w[0]).powi(2))
        .sum::<f64>()
        * speed
        * speed
        / (2.0 * kappa * kappa);
    let c3 = spec.velocity_bound(k);
    let defect = if proc.segments() == 0 {
        0.0
    } else {
        (hbar - trace.min_hamiltonian).max(0.0)
    };
    let ledger = UpperLedger {
        taylor_term,
        motion_modulus_term: r * spec.modulus(c3, fineness * speed),
        offset_modulus_term: r * spec.modulus(c3, k * kappa * kappa),
        envelope_gap_term: 0.5 * k * k * kappa * kappa,
        supersolution_defect_term: r * defect,
        quadrature_budget: 1e-9 * (1.0 + r) * (1.0 + proc.cost().abs()),
    };
    let lhs = proc.total_functional(phi);
    let rhs = phi.interpolate(proc.initial()) - hbar * r + (r + 1.0) * epsilon;
    let slack = ledger.supersolution_defect_term + ledger.quadrature_budget;
    let holds = lhs <= rhs + slack;
    let certified = schedule.is_some_and(|s| {
        s.epsilon <= epsilon && s.lipschitz >= k && s.certifies(kappa, fineness)
    });
    let status = match (certified, holds) {
        (true, true) => CheckStatus::CertifiedPass,
        (true, false) => CheckStatus::CertifiedFail,
        (false, _) => CheckStatus::Uncertified,
    };
    UpperReport {
        status,
        holds,
        horizon: r,
        lhs,
        rhs,
        slack,
        margin: rhs + slack - lhs,
        ledger,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::Potential;
    use crate::torus::GridSpec;

    fn flat(n: usize) -> GridScalarField {
        GridScalarField::constant(GridSpec::new(1, n).unwrap(), 0.0)
    }

    #[test]
    fn constant_field_gives_rest() {
        let spec = LagrangianSpec::mechanical(Potential::zero());
        let phi = flat(32);
        let v = feedback_direction(&phi, 0.1, &spec, &TorusPoint::wrap(&[0.3]).unwrap()).unwrap();
        assert_eq!(v[0], 0.0);
        let p = Partition::uniform(2.0, 20).unwrap();
        let (proc, trace) = simulate_traced(TorusPoint::wrap(&[0.3]).unwrap(), &phi, 0.1, &p, &spec).unwrap();
        assert!(proc.positions().iter().all(|x| x.as_slice()[0] == 0.3));
        assert_eq!(proc.cost(), 0.0);
        let schedule = AimingSchedule::new(&spec, &phi, 0.1).unwrap();
        let rep = upper_estimate_check(&proc, &trace, &phi, 0.0, 0.1, &spec, 0.1, p.fineness(), Some(&schedule));
        assert_eq!(rep.status, CheckStatus::CertifiedPass);
        assert!((rep.rhs - 0.3).abs() < 1e-12);
    }

    #[test]
    fn schedule_conditions_hold_for_pendulum_shape() {
        let spec = LagrangianSpec::mechanical(Potential::single_cosine(1.0));
        let g = GridSpec::new(1, 256).unwrap();
        let phi = GridScalarField::from_fn(g, |x| {
            2.0 * (1.0 - (std::f64::consts::PI * x.as_slice()[0]).cos()) / std::f64::consts::PI
        });
        let s = AimingSchedule::new(&spec, &phi, 0.1).unwrap();
        assert!(s.c2 * s.kappa0 <= 0.1 + 1e-12);
        assert!(spec.modulus(s.c3, s.c1 * s.kappa0.powf(1.5)) <= 0.05 + 1e-12);
        assert!(s.delta <= 0.1 * s.kappa * s.kappa / (2.0 * s.speed * s.speed) + 1e-15);
        assert!(spec.modulus(s.c3, s.delta * s.speed) <= 0.025 + 1e-12);
        assert!(s.certifies(s.kappa, s.delta));
        assert!(!s.certifies(s.kappa, 100.0 * s.delta));
        assert!(!s.certifies(2.0 * s.kappa0, s.delta));
        let half = s.with_kappa(&spec, s.kappa / 2.0).unwrap();
        assert!((half.delta - s.delta / 4.0).abs() < 1e-15);
        assert!(s.with_kappa(&spec, 2.0 * s.kappa0).is_err());
    }

    #[test]
    fn feedback_is_bounded_and_descends() {
        let spec = LagrangianSpec::kinked(0.5, Potential::single_cosine(1.0)).unwrap();
        let g = GridSpec::new(1, 128).unwrap();
        let phi = GridScalarField::from_fn(g, |x| (2.0 * std::f64::consts::PI * x.as_slice()[0]).sin());
        let aim = ProximalAiming::new(&phi, &spec, 0.1).unwrap();
        for j in 0..20 {
            let x = TorusPoint::wrap(&[j as f64 / 20.0 + 0.013]).unwrap();
            let s = aim.step(&x).unwrap();
            assert!(s.velocity.norm() <= aim.bound());
            // velocity opposes the proximal gradient
            assert!(s.velocity.dot(&s.p) <= 1e-12);
        }
    }

    #[test]
    fn uncertified_runs_are_tagged() {
        let spec = LagrangianSpec::mechanical(Potential::zero());
        let phi = flat(32);
        let p = Partition::uniform(1.0, 2).unwrap();
        let (proc, trace) = simulate_traced(TorusPoint::origin(1), &phi, 0.1, &p, &spec).unwrap();
        let rep = upper_estimate_check(&proc, &trace, &phi, 0.0, 0.1, &spec, 0.1, p.fineness(), None);
        assert_eq!(rep.status, CheckStatus::Uncertified);
        assert!(rep.holds);
    }
}
