//! Holonomic measures on a product grid: the linear program whose optimum
//! is `-Hbar`, occupation measures of trajectories, and the mollified
//! subsolution residual.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::envelope::mollify;
use crate::error::{invalid, Error, Result};
use crate::lagrangian::{hamiltonian, LagrangianSpec, VelocityBox};
use crate::process::ControlledProcess;
use crate::simplex::{self, LinearProgram};
use crate::torus::{torus_dist, GridScalarField, GridSpec, TorusPoint, Vector, MAX_DIM};

/// Test functions `cos(2 pi k.x)` and `sin(2 pi k.x)` for the nonzero modes
/// `|k|_inf <= M`, one representative of each `{k, -k}` pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolonomyBasis {
    pub dim: usize,
    pub max_mode: usize,
    pub modes: Vec<[i64; MAX_DIM]>,
}

impl HolonomyBasis {
    pub fn new(dim: usize, max_mode: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(invalid(format!("dimension {dim} out of range")));
        }
        let m = max_mode as i64;
        let mut modes = Vec::new();
        match dim {
            1 => modes.extend((1..=m).map(|k| [k, 0])),
            _ => {
                for k0 in 0..=m {
                    for k1 in -m..=m {
                        if k0 > 0 || k1 > 0 {
                            modes.push([k0, k1]);
                        }
                    }
                }
            }
        }
        Ok(Self { dim, max_mode, modes })
    }

    /// Constraint rows: a cosine and a sine row per mode.
    pub fn rows(&self) -> usize {
        2 * self.modes.len()
    }

    /// `grad cos(2 pi k.x) . v` and `grad sin(2 pi k.x) . v`.
    pub fn gradient_pairing(&self, mode: usize, x: &TorusPoint, v: &Vector) -> (f64, f64) {
        let k = self.modes[mode];
        let (mut phase, mut kv) = (0.0, 0.0);
        for a in 0..self.dim {
            phase += k[a] as f64 * x.as_slice()[a];
            kv += k[a] as f64 * v[a];
        }
        let angle = 2.0 * PI * phase;
        (-2.0 * PI * kv * angle.sin(), 2.0 * PI * kv * angle.cos())
    }
}

/// Nonnegative weights on `grid nodes x velocity lattice`, summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    grid: GridSpec,
    vbox: VelocityBox,
    weights: BTreeMap<(usize, usize), f64>,
}

impl DiscreteMeasure {
    pub fn new(grid: GridSpec, vbox: VelocityBox, weights: BTreeMap<(usize, usize), f64>) -> Result<Self> {
        if vbox.dim() != grid.dim() {
            return Err(invalid("velocity lattice and grid dimensions differ"));
        }
        let mut total = 0.0;
        for (&(i, j), &w) in &weights {
            if i >= grid.node_count() || j >= vbox.len() {
                return Err(invalid(format!("atom ({i}, {j}) outside the product grid")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid(format!("weight {w} is not a nonnegative number")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { grid, vbox, weights })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn velocity_box(&self) -> &VelocityBox {
        &self.vbox
    }

    pub fn weights(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (TorusPoint, Vector, f64)> + '_ {
        self.weights
            .iter()
            .map(|(&(i, j), &w)| (self.grid.node(i), self.vbox.point(j), w))
    }

    pub fn integrate(&self, f: impl Fn(&TorusPoint, &Vector) -> f64) -> f64 {
        self.atoms().map(|(x, v, w)| w * f(&x, &v)).sum()
    }

    /// `int L dnu`.
    pub fn action(&self, spec: &LagrangianSpec) -> f64 {
        self.integrate(|x, v| spec.eval(x, v))
    }

    /// `|int grad phi_k . v dnu|` for each test function, cosine then sine
    /// per mode.
    pub fn holonomy_residuals(&self, basis: &HolonomyBasis) -> Vec<f64> {
        (0..basis.modes.len())
            .flat_map(|m| {
                let (c, s) = self.atoms().fold((0.0, 0.0), |(c, s), (x, v, w)| {
                    let (gc, gs) = basis.gradient_pairing(m, &x, &v);
                    (c + w * gc, s + w * gs)
                });
                [c.abs(), s.abs()]
            })
            .collect()
    }

    pub fn max_holonomy_residual(&self, basis: &HolonomyBasis) -> f64 {
        self.holonomy_residuals(basis).into_iter().fold(0.0, f64::max)
    }

    /// Mass within product distance `radius` of `(x, v)`.
    pub fn mass_near(&self, x: &TorusPoint, v: &Vector, radius: f64) -> f64 {
        self.atoms()
            .filter(|(y, u, _)| {
                let dx = torus_dist(x, y);
                let dv = (*u - *v).norm();
                (dx * dx + dv * dv).sqrt() <= radius
            })
            .map(|(_, _, w)| w)
            .sum()
    }

    /// Rows `x.., v.., weight`, atoms below `1e-12` omitted.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.grid.dim();
        let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        header.extend((0..d).map(|i| format!("v{i}")));
        header.push("weight".into());
        writeln!(out, "{}", header.join(","))?;
        for (x, v, w) in self.atoms() {
            if w < 1e-12 {
                continue;
            }
            let mut row: Vec<String> = x.as_slice().iter().map(|c| format!("{c}")).collect();
            row.extend(v.as_slice().iter().map(|c| format!("{c}")));
            row.push(format!("{w}"));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// The holonomic linear program on `grid x vbox`, variables ordered node
/// major, velocity minor.
#[derive(Clone, Debug)]
pub struct MatherLp {
    pub lp: LinearProgram,
    pub grid: GridSpec,
    pub vbox: VelocityBox,
    pub basis: HolonomyBasis,
}

/// Objective `L(x_i, v_j)`, holonomy rows for every basis function and the
/// normalization row. The lattice must contain every velocity a Mather
/// measure can use, which the conjugate speed bound for the solution's
/// Lipschitz constant guarantees.
pub fn build_lp(spec: &LagrangianSpec, grid: GridSpec, vbox: VelocityBox, basis: HolonomyBasis) -> Result<MatherLp> {
    if vbox.dim() != grid.dim() || basis.dim != grid.dim() {
        return Err(invalid("grid, lattice and basis dimensions differ"));
    }
    if vbox.radius() == 0.0 {
        return Err(invalid("velocity lattice is a single point"));
    }
    spec.check_dim(grid.dim())?;
    let needed = spec.speed_bound(spec.solution_lipschitz_bound(), grid.dim());
    if vbox.radius() < needed {
        return Err(invalid(format!(
            "velocity lattice radius {} below the speed bound {needed}",
            vbox.radius()
        )));
    }
    let nv = vbox.len();
    let cols = grid.node_count() * nv;
    let rows = basis.rows() + 1;
    let columns: Vec<(f64, Vec<f64>)> = (0..cols)
        .into_par_iter()
        .map(|col| {
            let x = grid.node(col / nv);
            let v = vbox.point(col % nv);
            let mut entries = Vec::with_capacity(rows);
            for m in 0..basis.modes.len() {
                let (gc, gs) = basis.gradient_pairing(m, &x, &v);
                entries.push(gc);
                entries.push(gs);
            }
            entries.push(1.0);
            (spec.eval(&x, &v), entries)
        })
        .collect();
    let mut a = vec![0.0; rows * cols];
    let mut c = Vec::with_capacity(cols);
    for (col, (cost, entries)) in columns.into_iter().enumerate() {
        c.push(cost);
        for (r, e) in entries.into_iter().enumerate() {
            a[r * cols + col] = e;
        }
    }
    let mut b = vec![0.0; rows];
    b[rows - 1] = 1.0;
    Ok(MatherLp {
        lp: LinearProgram::new(rows, cols, a, b, c)?,
        grid,
        vbox,
        basis,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpReport {
    pub value: f64,
    pub iterations: usize,
    pub rows: usize,
    pub cols: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity_residual: f64,
    pub max_holonomy_residual: f64,
}

/// Optimum and an optimal measure.
pub fn solve_lp(problem: &MatherLp) -> Result<(f64, DiscreteMeasure, LpReport)> {
    let max_iter = 50 * (problem.lp.rows + problem.lp.cols);
    let sol = simplex::solve(&problem.lp, max_iter)?;
    let nv = problem.vbox.len();
    let mut weights = BTreeMap::new();
    let mass: f64 = sol.x.iter().sum();
    for (col, &w) in sol.x.iter().enumerate() {
        if w > 0.0 {
            weights.insert((col / nv, col % nv), w / mass);
        }
    }
    let measure = DiscreteMeasure::new(problem.grid, problem.vbox, weights)
        .map_err(|e| Error::Lp(format!("optimal point is not a probability measure: {e}")))?;
    let report = LpReport {
        value: sol.value,
        iterations: sol.iterations,
        rows: problem.lp.rows,
        cols: problem.lp.cols,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        complementarity_residual: sol.complementarity_residual,
        max_holonomy_residual: measure.max_holonomy_residual(&problem.basis),
    };
    Ok((sol.value, measure, report))
}

/// Time-averaged measure of a process: `x` binned to the nearest grid node,
/// `v` to the nearest lattice velocity.
pub fn occupation_measure(proc: &ControlledProcess, grid: GridSpec, vbox: VelocityBox) -> Result<DiscreteMeasure> {
    if proc.segments() == 0 || proc.duration() <= 0.0 {
        return Err(invalid("occupation measure of an empty process"));
    }
    if proc.dim() != grid.dim() || vbox.dim() != grid.dim() {
        return Err(invalid("process, grid and lattice dimensions differ"));
    }
    let h = grid.spacing();
    let dim = grid.dim();
    let r = proc.duration();
    let pieces: Vec<Vec<((usize, usize), f64)>> = (0..proc.segments())
        .into_par_iter()
        .map(|s| {
            let x0 = proc.positions()[s];
            let v = proc.velocities()[s];
            let tau = proc.times()[s + 1] - proc.times()[s];
            let vi = vbox.nearest(&v);
            let mut out = Vec::new();
            let mut t = 0.0;
            while t < tau {
                // next crossing of a cell boundary (k + 1/2) h on any axis
                let mut next = tau;
                for a in 0..dim {
                    if v[a] == 0.0 {
                        continue;
                    }
                    let pos = x0.as_slice()[a] + v[a] * t;
                    let cell = (pos / h - 0.5).floor();
                    let bound = if v[a] > 0.0 { (cell + 1.5) * h } else { (cell + 0.5) * h };
                    let dt = (bound - pos) / v[a];
                    let dt = if dt <= 1e-15 { h / v[a].abs() } else { dt };
                    next = next.min(t + dt);
                }
                let mid = x0.translate(&(v * (0.5 * (t + next))));
                out.push(((grid.nearest_node(&mid), vi), next - t));
                t = next;
            }
            out
        })
        .collect();
    let mut weights = BTreeMap::new();
    for (key, dt) in pieces.into_iter().flatten() {
        *weights.entry(key).or_insert(0.0) += dt / r;
    }
    DiscreteMeasure::new(grid, vbox, weights)
}

/// `sup_x [H(x, -grad phi_delta(x)) - hbar - omega(delta)]_+` with
/// `phi_delta = phi * eta_delta` and centered differences for the gradient.
pub fn subsolution_residual_mollified(
    phi: &GridScalarField,
    delta: f64,
    hbar: f64,
    spec: &LagrangianSpec,
    vbox: &VelocityBox,
) -> Result<f64> {
    let smooth = mollify(phi, delta)?;
    let grid = *phi.grid();
    let shift = spec.modulus(vbox.radius(), delta);
    (0..grid.node_count())
        .into_par_iter()
        .map(|i| {
            let p = -smooth.centered_gradient(i);
            let b = vbox.widened(spec.velocity_bound(p.norm()));
            hamiltonian(spec, &grid.node(i), &p, &b).map(|h| (h - hbar - shift).max(0.0))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::Potential;
    use crate::process::Partition;

    fn lattice(radius: f64, samples: usize) -> VelocityBox {
        VelocityBox::new(1, radius, samples).unwrap()
    }

    #[test]
    fn basis_row_count() {
        assert_eq!(HolonomyBasis::new(1, 8).unwrap().rows(), 16);
        let b2 = HolonomyBasis::new(2, 2).unwrap();
        assert_eq!(b2.rows(), 25 - 1);
        assert!(b2.rows() <= 2 * (25 - 1));
        assert_eq!(HolonomyBasis::new(1, 0).unwrap().rows(), 0);
    }

    #[test]
    fn no_holonomy_gives_cheapest_atom() {
        let spec = LagrangianSpec::mechanical(Potential::single_cosine(1.0));
        let g = GridSpec::new(1, 16).unwrap();
        let vb = lattice(4.0, 16);
        let lp = build_lp(&spec, g, vb, HolonomyBasis::new(1, 0).unwrap()).unwrap();
        let (value, measure, _) = solve_lp(&lp).unwrap();
        let oracle = (0..16)
            .flat_map(|i| vb.points().map(move |v| (i, v)))
            .map(|(i, v)| spec.eval(&g.node(i), &v))
            .fold(f64::INFINITY, f64::min);
        assert!((value - oracle).abs() < 1e-12);
        assert_eq!(measure.weights().len(), 1);
    }

    #[test]
    fn free_particle_rests() {
        let spec = LagrangianSpec::mechanical(Potential::zero());
        let g = GridSpec::new(1, 16).unwrap();
        let lp = build_lp(&spec, g, lattice(4.0, 16), HolonomyBasis::new(1, 4).unwrap()).unwrap();
        let (value, measure, report) = solve_lp(&lp).unwrap();
        assert!(value.abs() < 1e-12);
        assert!(measure.atoms().all(|(_, v, _)| v.norm() == 0.0));
        assert!(report.max_holonomy_residual < 1e-12);
    }

    #[test]
    fn rejects_narrow_lattice() {
        let spec = LagrangianSpec::mechanical(Potential::single_cosine(1.0));
        let g = GridSpec::new(1, 16).unwrap();
        assert!(build_lp(&spec, g, lattice(1.0, 16), HolonomyBasis::new(1, 2).unwrap()).is_err());
    }

    #[test]
    fn measure_validation() {
        let g = GridSpec::new(1, 16).unwrap();
        let vb = lattice(1.0, 4);
        let mut w = BTreeMap::new();
        w.insert((0, 2), 0.5);
        assert!(DiscreteMeasure::new(g, vb, w.clone()).is_err());
        w.insert((3, 1), 0.5);
        let m = DiscreteMeasure::new(g, vb, w.clone()).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
        w.insert((99, 1), 0.0);
        assert!(DiscreteMeasure::new(g, vb, w).is_err());
        assert_eq!(m.to_csv_string().lines().count(), 3);
    }

    #[test]
    fn occupation_of_simple_processes() {
        let spec = LagrangianSpec::mechanical(Potential::zero());
        let g = GridSpec::new(1, 16).unwrap();
        let vb = lattice(2.0, 8);
        let still = ControlledProcess::from_velocities(
            &spec,
            TorusPoint::wrap(&[0.26]).unwrap(),
            &Partition::uniform(1.0, 1).unwrap(),
            &[Vector::zeros(1)],
        )
        .unwrap();
        let m = occupation_measure(&still, g, vb).unwrap();
        assert_eq!(m.weights().len(), 1);
        assert_eq!(m.weights().get(&(4, 4)), Some(&1.0));

        // two equal halves at different rest points
        let mut two = ControlledProcess::start(TorusPoint::wrap(&[0.5]).unwrap());
        two.push(&spec, Vector::zeros(1), 0.5).unwrap();
        two.push(&spec, Vector::new(&[1.0]).unwrap(), 0.5).unwrap();
        let m = occupation_measure(&two, g, vb).unwrap();
        let at_rest: f64 = m.atoms().filter(|(_, v, _)| v.norm() == 0.0).map(|(_, _, w)| w).sum();
        assert!((at_rest - 0.5).abs() < 1e-12);
        // the moving half spreads evenly over the cells it sweeps
        let moving: Vec<f64> = m.atoms().filter(|(_, v, _)| v.norm() > 0.0).map(|(_, _, w)| w).collect();
        assert_eq!(moving.len(), 9);
        assert!((moving.iter().sum::<f64>() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn closed_loop_is_holonomic() {
        let spec = LagrangianSpec::mechanical(Potential::zero());
        let g = GridSpec::new(1, 32).unwrap();
        let vb = lattice(2.0, 8);
        let proc = ControlledProcess::from_velocities(
            &spec,
            TorusPoint::origin(1),
            &Partition::uniform(1.0, 1).unwrap(),
            &[Vector::new(&[1.0]).unwrap()],
        )
        .unwrap();
        let m = occupation_measure(&proc, g, vb).unwrap();
        assert!(m.max_holonomy_residual(&HolonomyBasis::new(1, 4).unwrap()) < 1e-12);
    }

    #[test]
    fn mollified_residual_of_constant_is_zero() {
        let spec = LagrangianSpec::mechanical(Potential::zero());
        let phi = GridScalarField::constant(GridSpec::new(1, 64).unwrap(), 0.0);
        let r = subsolution_residual_mollified(&phi, 0.05, 0.0, &spec, &lattice(2.0, 16)).unwrap();
        assert_eq!(r, 0.0);
    }
}
