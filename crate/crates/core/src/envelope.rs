//! Lower and upper Moreau–Yosida transforms of grid functions on the torus,
//! and bump-kernel mollification.
//!
//! For a field `phi` (evaluated through its multilinear interpolant) and
//! `kappa > 0`:
//!
//! ```text
//! phi_kappa(x) = min_w  phi(x + w) + |w|^2 / (2 kappa^2)     (lower)
//! phi^kappa(x) = max_w  phi(x + w) - |w|^2 / (2 kappa^2)     (upper)
//! ```
//!
//! The interpolant is affine (d = 1) or bilinear (d = 2) on every grid cell,
//! so the minimization is carried out exactly cell by cell: on each cell the
//! objective is a quadratic whose minimizer over the closed cell is found in
//! closed form (interior stationary point or edge minima). Only cells meeting
//! the ball of radius `sqrt(2 osc(phi)) kappa` are visited; the minimizer
//! cannot lie outside it because `phi(x + b) + |b|^2/(2 kappa^2) <= phi(x)`.

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::torus::{GridScalarField, TorusPoint, Vector, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeResult {
    /// `phi_kappa(x)` or `phi^kappa(x)`.
    pub value: f64,
    /// Offset `b` of the proximal point `x + b`.
    pub b: Vector,
    /// Proximal sub/supergradient at `x + b`: `-b/kappa^2` (lower) or
    /// `+b/kappa^2` (upper).
    pub p: Vector,
    pub kappa: f64,
}

impl EnvelopeResult {
    pub fn proximal_point(&self, x: &TorusPoint) -> TorusPoint {
        x.translate(&self.b)
    }
}

/// Radius of the ball that always contains the envelope offset.
pub fn search_radius(phi: &GridScalarField, kappa: f64) -> f64 {
    (2.0 * phi.oscillation()).sqrt() * kappa
}

/// Explicit constants for fields with Lipschitz constant `K`, valid for
/// `kappa <= 1`.
///
/// Moving the proximal point towards `x` shows `|b| <= K kappa^2`, so
/// `|b| <= C1 kappa^{3/2}` with `C1 = K`, and
/// `0 <= phi - phi_kappa <= K |b| - |b|^2/(2 kappa^2) <= K^2 kappa^2 / 2`,
/// which is below `C2 kappa` with `C2 = K sqrt(2 sup|phi|) + C1^2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EnvelopeConstants {
    pub lipschitz: f64,
    pub sup_abs: f64,
    pub c1: f64,
    pub c2: f64,
}

impl EnvelopeConstants {
    pub fn of(phi: &GridScalarField) -> Self {
        let k = phi.lipschitz();
        let sup_abs = phi.sup_abs();
        let c1 = k;
        Self {
            lipschitz: k,
            sup_abs,
            c1,
            c2: k * (2.0 * sup_abs).sqrt() + 0.5 * c1 * c1,
        }
    }

    /// `|b| <= K kappa^2`.
    pub fn offset_bound(&self, kappa: f64) -> f64 {
        self.lipschitz * kappa * kappa
    }

    /// `0 <= phi - phi_kappa <= K^2 kappa^2 / 2`.
    pub fn gap_bound(&self, kappa: f64) -> f64 {
        0.5 * self.lipschitz * self.lipschitz * kappa * kappa
    }
}

#[derive(Clone, Copy)]
struct Best {
    value: f64,
    w: Vector,
}

impl Best {
    fn offer(&mut self, value: f64, w: Vector) {
        if !self.value.is_finite() {
            self.value = value;
            self.w = w;
            return;
        }
        let tol = 1e-13 * self.value.abs().max(1.0);
        if value < self.value - tol || ((value - self.value).abs() <= tol && w.tie_break_less(&self.w)) {
            self.value = value;
            self.w = w;
        }
    }
}

/// Exact minimum of `sign * phi(x + w) + |w|^2 / (2 kappa^2)` over `w`.
fn prox_search(phi: &GridScalarField, sign: f64, kappa: f64, x: &TorusPoint) -> (f64, Vector) {
    let grid = *phi.grid();
    let n = grid.n();
    let h = grid.spacing();
    let vals = phi.values();
    let k2 = kappa * kappa;
    let radius = search_radius(phi, kappa);
    let c = x.coords();
    let wrap = |j: i64| j.rem_euclid(n as i64) as usize;

    let mut best = Best {
        value: f64::INFINITY,
        w: Vector::zeros(grid.dim()),
    };
    match grid.dim() {
        1 => {
            let c0 = c[0];
            let lo = ((c0 - radius) * n as f64).floor() as i64;
            let hi = ((c0 + radius) * n as f64).floor() as i64;
            for j in lo..=hi {
                let left = j as f64 * h;
                let a = sign * vals[wrap(j)];
                let b = sign * vals[wrap(j + 1)];
                let slope = (b - a) / h;
                let y = (c0 - slope * k2).clamp(left, left + h);
                let t = ((y - left) / h).clamp(0.0, 1.0);
                let w = y - c0;
                let value = a + t * (b - a) + w * w / (2.0 * k2);
                best.offer(value, Vector::from_fn(1, |_| w));
            }
        }
        _ => {
            let lo0 = ((c[0] - radius) * n as f64).floor() as i64;
            let hi0 = ((c[0] + radius) * n as f64).floor() as i64;
            let lo1 = ((c[1] - radius) * n as f64).floor() as i64;
            let hi1 = ((c[1] + radius) * n as f64).floor() as i64;
            let q = h * h / k2;
            for j0 in lo0..=hi0 {
                let e0 = j0 as f64 * h - c[0];
                let gap0 = if e0 > 0.0 { e0 } else if e0 + h < 0.0 { -(e0 + h) } else { 0.0 };
                for j1 in lo1..=hi1 {
                    let e1 = j1 as f64 * h - c[1];
                    let gap1 = if e1 > 0.0 { e1 } else if e1 + h < 0.0 { -(e1 + h) } else { 0.0 };
                    if gap0 * gap0 + gap1 * gap1 > radius * radius * (1.0 + 1e-12) + 1e-300 {
                        continue;
                    }
                    let f00 = sign * vals[wrap(j0) * n + wrap(j1)];
                    let f10 = sign * vals[wrap(j0 + 1) * n + wrap(j1)];
                    let f01 = sign * vals[wrap(j0) * n + wrap(j1 + 1)];
                    let f11 = sign * vals[wrap(j0 + 1) * n + wrap(j1 + 1)];
                    let (ca, cb, cc, cd) = (f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00);
                    let mut eval = |u: f64, t: f64, w0: f64, w1: f64| {
                        let value = ca + cb * u + cc * t + cd * u * t + (w0 * w0 + w1 * w1) / (2.0 * k2);
                        best.offer(value, Vector::from_fn(2, |i| if i == 0 { w0 } else { w1 }));
                    };
                    // free offset along one axis clamped into the cell: (u, w)
                    let clamp_axis = |free: f64, e: f64| {
                        let u = (free - e) / h;
                        if u <= 0.0 {
                            (0.0, e)
                        } else if u >= 1.0 {
                            (1.0, e + h)
                        } else {
                            (u, free)
                        }
                    };
                    // stationary point of the cell quadratic
                    let r0 = -cb - h * e0 / k2;
                    let r1 = -cc - h * e1 / k2;
                    let det = q * q - cd * cd;
                    if det > 0.0 {
                        let u = (r0 * q - cd * r1) / det;
                        let t = (q * r1 - cd * r0) / det;
                        if (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&t) {
                            eval(u, t, -k2 * (cb + cd * t) / h, -k2 * (cc + cd * u) / h);
                        }
                    }
                    // edge minima (each edge restriction is a convex quadratic)
                    for u in [0.0, 1.0] {
                        let (t, w1) = clamp_axis(-k2 * (cc + cd * u) / h, e1);
                        eval(u, t, e0 + h * u, w1);
                    }
                    for t in [0.0, 1.0] {
                        let (u, w0) = clamp_axis(-k2 * (cb + cd * t) / h, e0);
                        eval(u, t, w0, e1 + h * t);
                    }
                }
            }
        }
    }
    (best.value, best.w)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(invalid(format!("kappa must be positive, got {kappa}")));
    }
    Ok(())
}

fn check_point(phi: &GridScalarField, x: &TorusPoint) -> Result<()> {
    if x.dim() != phi.grid().dim() {
        return Err(invalid("point and field dimensions differ"));
    }
    Ok(())
}

/// Lower Moreau–Yosida transform at `x`.
pub fn lower_envelope(phi: &GridScalarField, kappa: f64, x: &TorusPoint) -> Result<EnvelopeResult> {
    check_kappa(kappa)?;
    check_point(phi, x)?;
    let (value, b) = prox_search(phi, 1.0, kappa, x);
    Ok(EnvelopeResult {
        value,
        b,
        p: b * (-1.0 / (kappa * kappa)),
        kappa,
    })
}

/// Upper Moreau–Yosida transform at `x`, `phi^kappa = -(-phi)_kappa`.
pub fn upper_envelope(phi: &GridScalarField, kappa: f64, x: &TorusPoint) -> Result<EnvelopeResult> {
    check_kappa(kappa)?;
    check_point(phi, x)?;
    let (value, b) = prox_search(phi, -1.0, kappa, x);
    Ok(EnvelopeResult {
        value: -value,
        b,
        p: b * (1.0 / (kappa * kappa)),
        kappa,
    })
}

fn envelope_field(phi: &GridScalarField, kappa: f64, sign: f64) -> Result<GridScalarField> {
    check_kappa(kappa)?;
    let grid = *phi.grid();
    let values = (0..grid.node_count())
        .into_par_iter()
        .map(|i| sign * prox_search(phi, sign, kappa, &grid.node(i)).0)
        .collect();
    GridScalarField::new(grid, values)
}

/// `phi_kappa` sampled at every grid node.
pub fn lower_envelope_field(phi: &GridScalarField, kappa: f64) -> Result<GridScalarField> {
    envelope_field(phi, kappa, 1.0)
}

/// `phi^kappa` sampled at every grid node.
pub fn upper_envelope_field(phi: &GridScalarField, kappa: f64) -> Result<GridScalarField> {
    envelope_field(phi, kappa, -1.0)
}

/// Discrete bump kernel `exp(-1/(1 - |w/delta|^2))` on the grid offsets
/// inside the open ball of radius `delta`, normalized to unit sum.
pub fn bump_kernel(dim: usize, h: f64, delta: f64) -> Vec<([i64; MAX_DIM], f64)> {
    let reach = (delta / h).ceil() as i64;
    let mut out = Vec::new();
    let range: Vec<i64> = (-reach..=reach).collect();
    let offsets: Vec<[i64; MAX_DIM]> = match dim {
        1 => range.iter().map(|&i| [i, 0]).collect(),
        _ => range
            .iter()
            .flat_map(|&i| range.iter().map(move |&j| [i, j]))
            .collect(),
    };
    for o in offsets {
        let r2 = o.iter().take(dim).map(|&k| (k as f64 * h / delta).powi(2)).sum::<f64>();
        if r2 < 1.0 {
            out.push((o, (-1.0 / (1.0 - r2)).exp()));
        }
    }
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    for (_, w) in &mut out {
        *w /= total;
    }
    out
}

/// Periodic convolution `phi * eta_delta` with the discrete bump kernel.
pub fn mollify(phi: &GridScalarField, delta: f64) -> Result<GridScalarField> {
    if !(delta > 0.0 && delta < 0.25) {
        return Err(invalid(format!("mollifier radius {delta} not in (0, 1/4)")));
    }
    let grid = *phi.grid();
    let kernel = bump_kernel(grid.dim(), grid.spacing(), delta);
    let vals = phi.values();
    let values = (0..grid.node_count())
        .into_par_iter()
        .map(|i| {
            kernel
                .iter()
                .map(|(o, w)| {
                    let back = [-o[0], -o[1]];
                    w * vals[grid.shifted_index(i, &back)]
                })
                .sum()
        })
        .collect();
    GridScalarField::new(grid, values)
}
