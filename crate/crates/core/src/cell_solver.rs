//! Discrete viscosity solutions of the cell problem `H(x, -grad phi) = Hbar`
//! by semi-Lagrangian Lax–Oleinik iteration.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_err, Error, Result};
use crate::lagrangian::{hamiltonian, LagrangianSpec, VelocityBox};
use crate::torus::{GridScalarField, GridSpec, MAX_DIM};

/// Default per-axis velocity samples of the solver's box, by dimension.
/// The lattice spacing limits how well slow approaches to an equilibrium
/// are resolved, so the one-dimensional lattice is fine.
pub const DEFAULT_VELOCITY_SAMPLES: [usize; 2] = [256, 32];

#[derive(Clone, Debug, PartialEq)]
pub struct CellSolution {
    /// Normalized so that its smallest node value is 0.
    pub phi: GridScalarField,
    pub hbar: f64,
    /// Oscillation of the last increment divided by `dt`.
    pub residual_sup: f64,
    pub iterations: usize,
    pub dt: f64,
    pub velocity_box: VelocityBox,
}

/// The scalar part of a [`CellSolution`], as written to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub hbar: f64,
    pub residual_sup: f64,
    pub iterations: usize,
    pub dt: f64,
}

impl CellSolution {
    pub fn summary(&self) -> CellSummary {
        CellSummary {
            hbar: self.hbar,
            residual_sup: self.residual_sup,
            iterations: self.iterations,
            dt: self.dt,
        }
    }

    /// Writes `<stem>.json` and the `<stem>_phi.csv` sidecar into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, serde_json::to_string_pretty(&self.summary())? + "\n").map_err(io_err(&json))?;
        let csv = dir.join(format!("{stem}_phi.csv"));
        fs::write(&csv, self.phi.to_csv_string()).map_err(io_err(&csv))?;
        Ok(())
    }
}

/// Box large enough for every conjugate maximizer along a solution.
pub fn default_velocity_box(spec: &LagrangianSpec, dim: usize) -> Result<VelocityBox> {
    VelocityBox::new(
        dim,
        spec.velocity_bound(spec.solution_lipschitz_bound()),
        DEFAULT_VELOCITY_SAMPLES[dim.clamp(1, 2) - 1],
    )
}

/// `dt = h / C3` for the default box.
pub fn default_dt(spec: &LagrangianSpec, grid: &GridSpec) -> Result<f64> {
    Ok(grid.spacing() / default_velocity_box(spec, grid.dim())?.radius())
}

// One velocity of the lattice: interpolation corners relative to the foot
// node and their weights, plus the kinetic cost dt * kinetic(v).
struct Foot {
    corners: Vec<([i64; MAX_DIM], f64)>,
    cost: f64,
}

/// One discrete Lax–Oleinik step, precomputed for a fixed grid, step and
/// velocity lattice.
pub struct LaxOleinik {
    grid: GridSpec,
    dt: f64,
    feet: Vec<Foot>,
    // -dt * V(x_j)
    potential_cost: Vec<f64>,
}

impl LaxOleinik {
    pub fn new(spec: &LagrangianSpec, grid: GridSpec, dt: f64, vbox: &VelocityBox) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        if dt * vbox.radius() > 0.25 {
            return Err(invalid(format!(
                "dt * radius = {} exceeds 1/4",
                dt * vbox.radius()
            )));
        }
        if vbox.dim() != grid.dim() {
            return Err(invalid("velocity box and grid dimensions differ"));
        }
        spec.check_dim(grid.dim())?;
        let n = grid.n() as f64;
        let feet = vbox
            .points()
            .map(|v| {
                let mut axes = [(0i64, 0.0f64); MAX_DIM];
                for (a, slot) in axes.iter_mut().enumerate().take(grid.dim()) {
                    let s = dt * v[a] * n;
                    let k = s.floor();
                    *slot = (k as i64, s - k);
                }
                let corners = match grid.dim() {
                    1 => {
                        let (k, t) = axes[0];
                        vec![([k, 0], 1.0 - t), ([k + 1, 0], t)]
                    }
                    _ => {
                        let ((k0, t0), (k1, t1)) = (axes[0], axes[1]);
                        vec![
                            ([k0, k1], (1.0 - t0) * (1.0 - t1)),
                            ([k0 + 1, k1], t0 * (1.0 - t1)),
                            ([k0, k1 + 1], (1.0 - t0) * t1),
                            ([k0 + 1, k1 + 1], t0 * t1),
                        ]
                    }
                };
                Foot {
                    corners: corners.into_iter().filter(|c| c.1 != 0.0).collect(),
                    cost: dt * spec.kinetic().eval(&v),
                }
            })
            .collect();
        let potential_cost = (0..grid.node_count())
            .map(|i| -dt * spec.potential().value(grid.node(i).coords()))
            .collect();
        Ok(Self {
            grid,
            dt,
            feet,
            potential_cost,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn apply_values(&self, values: &[f64]) -> Vec<f64> {
        let grid = self.grid;
        // n is a power of two, so periodic wrapping is a bit mask
        let mask = grid.n() as i64 - 1;
        let shift = grid.n().trailing_zeros();
        let two_d = grid.dim() == 2;
        (0..grid.node_count())
            .into_par_iter()
            .map(|i| {
                let (i0, i1) = if two_d {
                    ((i >> shift) as i64, (i as i64) & mask)
                } else {
                    (i as i64, 0)
                };
                let best = self
                    .feet
                    .iter()
                    .map(|f| {
                        f.corners
                            .iter()
                            .map(|(o, w)| {
                                let j = if two_d {
                                    (((i0 + o[0]) & mask) << shift) | ((i1 + o[1]) & mask)
                                } else {
                                    (i0 + o[0]) & mask
                                };
                                w * values[j as usize]
                            })
                            .sum::<f64>()
                            + f.cost
                    })
                    .fold(f64::INFINITY, f64::min);
                best + self.potential_cost[i]
            })
            .collect()
    }

    pub fn apply(&self, phi: &GridScalarField) -> Result<GridScalarField> {
        if phi.grid() != &self.grid {
            return Err(invalid("field grid differs from the operator grid"));
        }
        GridScalarField::new(self.grid, self.apply_values(phi.values()))
    }
}

/// `(T_dt phi)(x_j) = min_v [phi(x_j + dt v) + dt L(x_j, v)]` over the
/// velocity lattice, with `phi` interpolated.
pub fn lax_oleinik_step(
    phi: &GridScalarField,
    dt: f64,
    spec: &LagrangianSpec,
    vbox: &VelocityBox,
) -> Result<GridScalarField> {
    LaxOleinik::new(spec, *phi.grid(), dt, vbox)?.apply(phi)
}

/// Iterates `psi_{k+1} = T psi_k` from `psi_0 = 0` until the oscillation of
/// the increment drops below `tol * dt`.
pub fn solve_cell(spec: &LagrangianSpec, grid: GridSpec, dt: f64, tol: f64, max_iter: usize) -> Result<CellSolution> {
    let vbox = default_velocity_box(spec, grid.dim())?;
    solve_cell_from(spec, &GridScalarField::constant(grid, 0.0), dt, tol, max_iter, &vbox)
}

/// [`solve_cell`] warm-started through a cascade of coarser grids (down to
/// `n = 32`), each level using `dt = h / C3` and the interpolated solution
/// of the level below as its initial iterate.
pub fn solve_cell_cascade(spec: &LagrangianSpec, grid: GridSpec, tol: f64, max_iter: usize) -> Result<CellSolution> {
    let vbox = default_velocity_box(spec, grid.dim())?;
    let mut n = grid.n();
    while n > 32 && n > 4 {
        n /= 2;
    }
    let mut phi = GridScalarField::constant(GridSpec::new(grid.dim(), n)?, 0.0);
    loop {
        let level = *phi.grid();
        let dt = level.spacing() / vbox.radius();
        let sol = solve_cell_from(spec, &phi, dt, tol, max_iter, &vbox)?;
        if level.n() == grid.n() {
            return Ok(sol);
        }
        let finer = GridSpec::new(grid.dim(), level.n() * 2)?;
        phi = GridScalarField::from_fn(finer, |x| sol.phi.interpolate(x));
    }
}

/// [`solve_cell`] with an explicit initial iterate and velocity box.
pub fn solve_cell_from(
    spec: &LagrangianSpec,
    initial: &GridScalarField,
    dt: f64,
    tol: f64,
    max_iter: usize,
    vbox: &VelocityBox,
) -> Result<CellSolution> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let grid = *initial.grid();
    let op = LaxOleinik::new(spec, grid, dt, vbox)?;
    let mut psi = initial.values().to_vec();
    let mut spread = f64::INFINITY;
    for iteration in 1..=max_iter {
        let next = op.apply_values(&psi);
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for (a, b) in next.iter().zip(&psi) {
            let d = a - b;
            hi = hi.max(d);
            lo = lo.min(d);
        }
        spread = hi - lo;
        if spread < tol * dt {
            let phi = GridScalarField::new(grid, psi)?;
            let phi = phi.shifted(-phi.min());
            return Ok(CellSolution {
                phi,
                hbar: -(hi + lo) / (2.0 * dt),
                residual_sup: spread / dt,
                iterations: iteration,
                dt,
                velocity_box: *vbox,
            });
        }
        let base = next[0];
        psi = next.into_iter().map(|v| v - base).collect();
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual: spread / dt,
    })
}

/// Sup over non-kink nodes of `|H(x, -D_h phi(x)) - hbar|`, with `D_h` the
/// centered difference. Nodes whose slope jump exceeds three times the
/// median jump are treated as kinks and skipped. The box is widened when a
/// difference quotient needs a larger one.
pub fn viscosity_residual(sol: &CellSolution, spec: &LagrangianSpec, vbox: &VelocityBox) -> Result<f64> {
    let phi = &sol.phi;
    let grid = *phi.grid();
    let jumps: Vec<f64> = (0..grid.node_count()).map(|i| phi.slope_jump(i)).collect();
    let mut sorted = jumps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let cutoff = 3.0 * median + 1e-12 * phi.lipschitz().max(1.0);
    (0..grid.node_count())
        .into_par_iter()
        .filter(|&i| jumps[i] <= cutoff)
        .map(|i| {
            let p = -phi.centered_gradient(i);
            let b = vbox.widened(spec.velocity_bound(p.norm()));
            hamiltonian(spec, &grid.node(i), &p, &b).map(|h| (h - sol.hbar).abs())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}
