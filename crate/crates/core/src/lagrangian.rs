//! Built-in Lagrangian families `L(x, v) = kinetic(v) - V(x)` together with
//! the numeric Legendre transform and the growth certificates the feedback
//! constructions rely on.
//!
//! Every family separates into a convex, superlinear, possibly nonsmooth
//! kinetic part and a finite cosine potential
//! `V(x) = sum_k a_k cos(2 pi k.x)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::torus::{TorusPoint, Vector, MAX_DIM};

/// Golden-section tolerance used by the velocity refinement.
pub const GOLDEN_TOL: f64 = 1e-8;

/// One term `a cos(2 pi k.x)` of a potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosMode {
    pub wave: [i64; MAX_DIM],
    pub amplitude: f64,
}

/// Finite cosine sum on the torus.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Potential {
    modes: Vec<CosMode>,
    sup_abs: f64,
}

impl Potential {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `V(x) = amplitude * cos(2 pi x_0)`.
    pub fn single_cosine(amplitude: f64) -> Self {
        Self::from_modes(vec![(vec![1], amplitude)]).expect("valid single mode")
    }

    pub fn from_modes(modes: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        let mut out = Vec::with_capacity(modes.len());
        for (k, a) in modes {
            if k.is_empty() || k.len() > MAX_DIM {
                return Err(invalid(format!("wave vector {k:?} has bad length")));
            }
            if !a.is_finite() {
                return Err(invalid(format!("non-finite amplitude for mode {k:?}")));
            }
            let mut wave = [0; MAX_DIM];
            wave[..k.len()].copy_from_slice(&k);
            out.push(CosMode { wave, amplitude: a });
        }
        let mut p = Self {
            modes: out,
            sup_abs: 0.0,
        };
        p.sup_abs = p.sup_abs_bound();
        Ok(p)
    }

    pub fn modes(&self) -> &[CosMode] {
        &self.modes
    }

    /// Number of leading axes the wave vectors actually use.
    pub fn used_dim(&self) -> usize {
        self.modes
            .iter()
            .map(|m| {
                m.wave
                    .iter()
                    .rposition(|&k| k != 0)
                    .map_or(1, |i| i + 1)
            })
            .max()
            .unwrap_or(1)
    }

    #[inline]
    pub fn value(&self, x: &Vector) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let phase: f64 = (0..x.dim()).map(|i| m.wave[i] as f64 * x[i]).sum();
                m.amplitude * (2.0 * PI * phase).cos()
            })
            .sum()
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        Vector::from_fn(x.dim(), |axis| {
            self.modes
                .iter()
                .map(|m| {
                    let phase: f64 = (0..x.dim()).map(|i| m.wave[i] as f64 * x[i]).sum();
                    -m.amplitude * 2.0 * PI * m.wave[axis] as f64 * (2.0 * PI * phase).sin()
                })
                .sum()
        })
    }

    /// Exact `int_0^tau V(x + s v) ds`.
    pub fn segment_integral(&self, x: &Vector, v: &Vector, tau: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (mut phase, mut drift) = (0.0, 0.0);
                for i in 0..x.dim() {
                    phase += m.wave[i] as f64 * x[i];
                    drift += m.wave[i] as f64 * v[i];
                }
                let half = PI * drift * tau;
                let sinc = if half.abs() < 1e-4 {
                    1.0 - half * half / 6.0
                } else {
                    half.sin() / half
                };
                m.amplitude * tau * (2.0 * PI * phase + half).cos() * sinc
            })
            .sum()
    }

    /// Upper bound for the Lipschitz constant of `V`.
    pub fn lipschitz(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let k = m.wave.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt();
                2.0 * PI * k * m.amplitude.abs()
            })
            .sum()
    }

    /// Certified upper bound for `sup |V|`.
    pub fn sup_abs(&self) -> f64 {
        self.sup_abs
    }

    /// Largest (wave-vector norm) frequency present.
    pub fn max_frequency(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.wave.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    // Dense sample plus a Lipschitz correction, capped by sum |a_k|. The cap
    // is attained for single modes, where the sample hits the maximum too.
    fn sup_abs_bound(&self) -> f64 {
        let l1: f64 = self.modes.iter().map(|m| m.amplitude.abs()).sum();
        if self.modes.is_empty() {
            return 0.0;
        }
        let dim = self.used_dim();
        let per_axis: usize = if dim == 1 { 4096 } else { 256 };
        let h = 1.0 / per_axis as f64;
        let total = per_axis.pow(dim as u32);
        let mut sampled: f64 = 0.0;
        for idx in 0..total {
            let x = Vector::from_fn(dim, |axis| {
                let stride = per_axis.pow((dim - 1 - axis) as u32);
                ((idx / stride) % per_axis) as f64 * h
            });
            sampled = sampled.max(self.value(&x).abs());
        }
        let correction = self.lipschitz() * 0.5 * h * (dim as f64).sqrt();
        l1.min(sampled + correction)
    }
}

/// Velocity-dependent part of a Lagrangian.
#[derive(Clone, Debug, PartialEq)]
pub enum Kinetic {
    /// `|v|^2 / 2`
    Mechanical,
    /// `|v|^2 / 2 + lambda |v|`
    Kinked { lambda: f64 },
    /// `|v|^2 / 2 + sum_j lambda_j |v_j|`
    AnisotropicKink { lambdas: Vec<f64> },
    /// `max(|v|^{3/2}, |v|^2 / 2)`
    PiecewisePower,
}

impl Kinetic {
    #[inline]
    pub fn eval(&self, v: &Vector) -> f64 {
        let s2 = v.norm_sq();
        match self {
            Kinetic::Mechanical => 0.5 * s2,
            Kinetic::Kinked { lambda } => 0.5 * s2 + lambda * s2.sqrt(),
            Kinetic::AnisotropicKink { lambdas } => {
                0.5 * s2
                    + v.as_slice()
                        .iter()
                        .zip(lambdas)
                        .map(|(c, l)| l * c.abs())
                        .sum::<f64>()
            }
            Kinetic::PiecewisePower => {
                let s = s2.sqrt();
                (s * s.sqrt()).max(0.5 * s2)
            }
        }
    }

    /// `sup { kinetic(v) : |v| = s }`.
    pub fn sup_on_sphere(&self, s: f64) -> f64 {
        match self {
            Kinetic::Mechanical => 0.5 * s * s,
            Kinetic::Kinked { lambda } => 0.5 * s * s + lambda * s,
            Kinetic::AnisotropicKink { lambdas } => {
                0.5 * s * s + s * lambdas.iter().map(|l| l * l).sum::<f64>().sqrt()
            }
            Kinetic::PiecewisePower => (s * s.sqrt()).max(0.5 * s * s),
        }
    }

    // Smallest slope of the kink part over all directions.
    fn min_kink(&self, dim: usize) -> f64 {
        match self {
            Kinetic::Kinked { lambda } => *lambda,
            Kinetic::AnisotropicKink { lambdas } => {
                lambdas.iter().take(dim).copied().fold(f64::INFINITY, f64::min)
            }
            _ => 0.0,
        }
    }

    /// Closed-form radius `c` with `kinetic(v) - vmax >= m |v|` whenever
    /// `|v| >= c`.
    pub fn growth_radius(&self, slope: f64, vmax: f64, dim: usize) -> f64 {
        // Every family dominates |v|^2/2 + lambda_min |v|.
        let a = slope - self.min_kink(dim);
        (a + (a * a + 2.0 * vmax).sqrt()).max(0.0)
    }

    /// `sup { |v*(p)| : |p| <= k }` where `v*(p)` maximizes `p.v - kinetic(v)`.
    pub fn speed_bound(&self, k: f64, dim: usize) -> f64 {
        match self {
            Kinetic::Mechanical => k,
            // soft thresholding against an l-infinity ball shrinks at least
            // as much as radial thresholding against the inscribed l2 ball
            Kinetic::Kinked { .. } | Kinetic::AnisotropicKink { .. } => {
                (k - self.min_kink(dim)).max(0.0)
            }
            Kinetic::PiecewisePower => {
                if k <= 3.0 {
                    4.0 * k * k / 9.0
                } else if k <= 4.0 {
                    4.0
                } else {
                    k
                }
            }
        }
    }
}

/// A member of one of the built-in Lagrangian families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLagrangian", into = "RawLagrangian")]
pub struct LagrangianSpec {
    kinetic: Kinetic,
    potential: Potential,
}

impl LagrangianSpec {
    pub fn new(kinetic: Kinetic, potential: Potential) -> Result<Self> {
        match &kinetic {
            Kinetic::Kinked { lambda } if !(lambda.is_finite() && *lambda >= 0.0) => {
                return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
            }
            Kinetic::AnisotropicKink { lambdas }
                if lambdas.is_empty()
                    || lambdas.len() > MAX_DIM
                    || lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) =>
            {
                return Err(invalid(format!("bad anisotropic lambdas {lambdas:?}")));
            }
            _ => {}
        }
        Ok(Self { kinetic, potential })
    }

    pub fn mechanical(potential: Potential) -> Self {
        Self::new(Kinetic::Mechanical, potential).expect("mechanical is always valid")
    }

    pub fn kinked(lambda: f64, potential: Potential) -> Result<Self> {
        Self::new(Kinetic::Kinked { lambda }, potential)
    }

    pub fn anisotropic(lambdas: Vec<f64>, potential: Potential) -> Result<Self> {
        Self::new(Kinetic::AnisotropicKink { lambdas }, potential)
    }

    pub fn piecewise_power(potential: Potential) -> Self {
        Self::new(Kinetic::PiecewisePower, potential).expect("piecewise power is always valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn family_name(&self) -> &'static str {
        match self.kinetic {
            Kinetic::Mechanical => "mechanical",
            Kinetic::Kinked { .. } => "kinked",
            Kinetic::AnisotropicKink { .. } => "anisotropic-kink",
            Kinetic::PiecewisePower => "piecewise-power",
        }
    }

    pub fn kinetic(&self) -> &Kinetic {
        &self.kinetic
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Fails if the spec cannot be evaluated on `T^dim`.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.potential.used_dim() > dim {
            return Err(invalid(format!(
                "potential uses {} axes but the torus has {dim}",
                self.potential.used_dim()
            )));
        }
        if let Kinetic::AnisotropicKink { lambdas } = &self.kinetic {
            if lambdas.len() != dim {
                return Err(invalid(format!(
                    "anisotropic family needs {dim} lambdas, got {}",
                    lambdas.len()
                )));
            }
        }
        Ok(())
    }

    /// `C1' = sup_y |L(y, 0)|`.
    pub fn c1_prime(&self) -> f64 {
        self.potential.sup_abs()
    }

    /// Lower bound `C2' <= inf L`, nonpositive.
    pub fn c2_prime(&self) -> f64 {
        -self.potential.sup_abs()
    }

    #[inline]
    pub fn eval(&self, x: &TorusPoint, v: &Vector) -> f64 {
        self.eval_raw(x.coords(), v)
    }

    /// Evaluation at unwrapped coordinates (the potential is periodic).
    #[inline]
    pub fn eval_raw(&self, x: &Vector, v: &Vector) -> f64 {
        self.kinetic.eval(v) - self.potential.value(x)
    }

    /// Exact `int_0^tau L(x + s v, v) ds` along a straight segment.
    pub fn segment_cost(&self, x: &Vector, v: &Vector, tau: f64) -> f64 {
        tau * self.kinetic.eval(v) - self.potential.segment_integral(x, v, tau)
    }

    /// Radius `c(m)` with `L(x, v) >= m |v|` for all `x` and `|v| >= c(m)`.
    pub fn growth_radius(&self, slope: f64) -> f64 {
        self.kinetic
            .growth_radius(slope, self.potential.sup_abs(), MAX_DIM)
    }

    /// `C3 = max(c(K + C1' + 1), 1)`: maximizers of `p.v - L(x, v)` with
    /// `|p| <= K` lie in the ball of this radius.
    pub fn velocity_bound(&self, k: f64) -> f64 {
        self.growth_radius(k + self.c1_prime() + 1.0).max(1.0)
    }

    /// Exact speed of the conjugate maximizer, uniformly over `|p| <= k`.
    pub fn speed_bound(&self, k: f64, dim: usize) -> f64 {
        self.kinetic.speed_bound(k, dim)
    }

    /// Upper estimate of the modulus `omega_A(delta)` in the `x` variable.
    /// The built-ins confine `x` to the potential, so `A` is irrelevant.
    pub fn modulus(&self, _radius: f64, delta: f64) -> f64 {
        (self.potential.lipschitz() * delta.max(0.0)).min(2.0 * self.potential.sup_abs())
    }

    /// Smallest `delta` with `modulus(delta) >= target`; `f64::INFINITY`
    /// when the modulus never reaches it.
    pub fn modulus_inverse(&self, target: f64) -> f64 {
        if target >= 2.0 * self.potential.sup_abs() {
            return f64::INFINITY;
        }
        let lip = self.potential.lipschitz();
        if lip == 0.0 {
            return f64::INFINITY;
        }
        target / lip
    }

    /// Bound on the Lipschitz constant of any viscosity solution of the
    /// cell problem.
    pub fn solution_lipschitz_bound(&self) -> f64 {
        // H(x, p) >= s|p| - sup_{|v|=s} kinetic - sup|V| and Hbar <= sup|V|.
        let v = self.potential.sup_abs();
        (1..=400)
            .map(|i| {
                let s = i as f64 * 0.025;
                (self.kinetic.sup_on_sphere(s) + 2.0 * v) / s
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawWave {
    Scalar(i64),
    Vector(Vec<i64>),
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    #[serde(default)]
    cos_coeffs: Vec<(RawWave, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLagrangian {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambdas: Option<Vec<f64>>,
    #[serde(default)]
    potential: RawPotential,
}

impl TryFrom<RawLagrangian> for LagrangianSpec {
    type Error = Error;

    fn try_from(raw: RawLagrangian) -> Result<Self> {
        let modes = raw
            .potential
            .cos_coeffs
            .into_iter()
            .map(|(k, a)| {
                let k = match k {
                    RawWave::Scalar(k) => vec![k],
                    RawWave::Vector(k) => k,
                };
                (k, a)
            })
            .collect();
        let potential = Potential::from_modes(modes)?;
        let kinetic = match raw.family.as_str() {
            "mechanical" => Kinetic::Mechanical,
            "kinked" => Kinetic::Kinked {
                lambda: raw
                    .lambda
                    .ok_or_else(|| invalid("kinked family needs \"lambda\""))?,
            },
            "anisotropic-kink" => Kinetic::AnisotropicKink {
                lambdas: raw
                    .lambdas
                    .ok_or_else(|| invalid("anisotropic-kink family needs \"lambdas\""))?,
            },
            "piecewise-power" => Kinetic::PiecewisePower,
            other => return Err(invalid(format!("unknown Lagrangian family {other:?}"))),
        };
        LagrangianSpec::new(kinetic, potential)
    }
}

impl From<LagrangianSpec> for RawLagrangian {
    fn from(spec: LagrangianSpec) -> Self {
        let family = spec.family_name().to_string();
        let (lambda, lambdas) = match spec.kinetic {
            Kinetic::Kinked { lambda } => (Some(lambda), None),
            Kinetic::AnisotropicKink { lambdas } => (None, Some(lambdas)),
            _ => (None, None),
        };
        let cos_coeffs = spec
            .potential
            .modes
            .iter()
            .map(|m| {
                let k = if m.wave[1..].iter().all(|&k| k == 0) {
                    RawWave::Scalar(m.wave[0])
                } else {
                    RawWave::Vector(m.wave.to_vec())
                };
                (k, m.amplitude)
            })
            .collect();
        RawLagrangian {
            family,
            lambda,
            lambdas,
            potential: RawPotential { cos_coeffs },
        }
    }
}

/// Square velocity lattice `{-A + j h_v}^d`, `h_v = 2A / m_v`, covering the
/// ball of radius `A`. `m_v` is even so the origin is a lattice node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityBox {
    dim: usize,
    radius: f64,
    samples: usize,
}

impl VelocityBox {
    pub fn new(dim: usize, radius: f64, samples: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(invalid(format!("velocity dimension {dim} out of range")));
        }
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(invalid(format!("velocity radius {radius} must be >= 0")));
        }
        if samples < 2 || samples % 2 != 0 {
            return Err(invalid(format!(
                "per-axis velocity samples {samples} must be even and >= 2"
            )));
        }
        Ok(Self {
            dim,
            radius,
            samples,
        })
    }

    /// Box sized by `velocity_bound(spec, k)`.
    pub fn for_slope(spec: &LagrangianSpec, dim: usize, k: f64, samples: usize) -> Result<Self> {
        Self::new(dim, spec.velocity_bound(k), samples)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / self.samples as f64
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.samples + 1
    }

    pub fn len(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Same spacing, radius grown to at least `radius` (in whole steps).
    pub fn widened(&self, radius: f64) -> Self {
        if radius <= self.radius {
            return *self;
        }
        let h = self.spacing();
        if h == 0.0 {
            return Self {
                radius,
                ..*self
            };
        }
        let half = (radius / h).ceil() as usize;
        Self {
            dim: self.dim,
            radius: half as f64 * h,
            samples: 2 * half,
        }
    }

    pub fn axis_value(&self, j: usize) -> f64 {
        let half = self.samples / 2;
        (j as f64 - half as f64) * self.spacing()
    }

    pub fn point(&self, index: usize) -> Vector {
        let m = self.nodes_per_axis();
        match self.dim {
            1 => Vector::from_fn(1, |_| self.axis_value(index)),
            _ => Vector::from_fn(2, |axis| {
                let j = if axis == 0 { index / m } else { index % m };
                self.axis_value(j)
            }),
        }
    }

    /// Index of the lattice node nearest to `v` (clamped to the box).
    pub fn nearest(&self, v: &Vector) -> usize {
        let m = self.nodes_per_axis();
        let h = self.spacing();
        let half = (self.samples / 2) as f64;
        let axis_index = |c: f64| -> usize {
            if h == 0.0 {
                return self.samples / 2;
            }
            let j = (c / h + half + 0.5).floor();
            j.clamp(0.0, self.samples as f64) as usize
        };
        match self.dim {
            1 => axis_index(v[0]),
            _ => axis_index(v[0]) * m + axis_index(v[1]),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = Vector> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

/// Maximizes a concave function of one variable on `[a, b]`.
pub(crate) fn golden_section_max(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 > best.1 { cand } else { best })
}

fn value_tol(v: f64) -> f64 {
    1e-13 * v.abs().max(1.0)
}

/// Maximizer and maximum of `p.v - L(x, v)`: lattice scan followed by
/// per-axis golden-section refinement around the lattice argmax.
pub fn conjugate_maximizer(
    spec: &LagrangianSpec,
    x: &TorusPoint,
    p: &Vector,
    vbox: &VelocityBox,
) -> Result<(Vector, f64)> {
    if p.dim() != x.dim() || vbox.dim() != x.dim() {
        return Err(invalid("dimension mismatch between point, covector and box"));
    }
    let required = spec.velocity_bound(p.norm());
    if vbox.radius() < required * (1.0 - 1e-12) {
        return Err(Error::BoxTooSmall {
            radius: vbox.radius(),
            required,
        });
    }
    // V(x) is a constant shift of the objective
    let shift = spec.potential().value(x.coords());
    let objective = |v: &Vector| p.dot(v) - spec.kinetic().eval(v);

    let mut best_v = vbox.point(0);
    let mut best = objective(&best_v);
    for v in vbox.points().skip(1) {
        let val = objective(&v);
        if val > best + value_tol(best) || ((val - best).abs() <= value_tol(best) && v.tie_break_less(&best_v)) {
            best = val;
            best_v = v;
        }
    }

    let h = vbox.spacing();
    if h > 0.0 {
        let mut cur = best_v;
        let mut cur_val = best;
        let sweeps = if x.dim() == 1 { 1 } else { 60 };
        for _ in 0..sweeps {
            let before = cur_val;
            for axis in 0..x.dim() {
                let center = cur[axis];
                let (t, val) = golden_section_max(center - h, center + h, GOLDEN_TOL, |t| {
                    let mut v = cur;
                    v.set(axis, t);
                    objective(&v)
                });
                if val > cur_val {
                    cur.set(axis, t);
                    cur_val = val;
                }
            }
            if cur_val - before <= 1e-15 {
                break;
            }
        }
        if cur_val > best {
            best = cur_val;
            best_v = cur;
        }
    }
    Ok((best_v, best + shift))
}

/// `H(x, p) = max_v [p.v - L(x, v)]`.
pub fn hamiltonian(spec: &LagrangianSpec, x: &TorusPoint, p: &Vector, vbox: &VelocityBox) -> Result<f64> {
    conjugate_maximizer(spec, x, p, vbox).map(|(_, h)| h)
}

/// A maximizer of `p.v - L(x, v)`; smallest norm, then lexicographic, on ties.
pub fn argmax_velocity(spec: &LagrangianSpec, x: &TorusPoint, p: &Vector, vbox: &VelocityBox) -> Result<Vector> {
    conjugate_maximizer(spec, x, p, vbox).map(|(v, _)| v)
}

/// Free-function form of [`LagrangianSpec::velocity_bound`].
pub fn velocity_bound(spec: &LagrangianSpec, k: f64) -> f64 {
    spec.velocity_bound(k)
}

/// Free-function form of [`LagrangianSpec::modulus`].
pub fn modulus(spec: &LagrangianSpec, radius: f64, delta: f64) -> f64 {
    spec.modulus(radius, delta)
}
