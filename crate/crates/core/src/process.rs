//! Partitions of `[0, r]` and piecewise-constant-velocity controlled
//! processes with their running cost.

use std::io::Write;

use crate::error::{invalid, Result};
use crate::lagrangian::LagrangianSpec;
use crate::torus::{GridScalarField, TorusPoint, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    /// `times` must start at 0 and increase strictly.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(invalid("a partition needs t_0 = 0 and at least one step"));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("partition times must be finite and strictly increasing"));
        }
        Ok(Self { times })
    }

    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || steps == 0 {
            return Err(invalid(format!("bad uniform partition r={horizon}, steps={steps}")));
        }
        let mut times: Vec<f64> = (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect();
        times[steps] = horizon;
        Self::new(times)
    }

    /// Coarsest uniform partition with fineness at most `max_step`.
    pub fn with_fineness(horizon: f64, max_step: f64) -> Result<Self> {
        if !(max_step > 0.0) {
            return Err(invalid(format!("fineness must be positive, got {max_step}")));
        }
        let steps = (horizon / max_step).ceil().max(1.0);
        if steps > 1e9 {
            return Err(invalid(format!("{steps} steps requested")));
        }
        let mut p = Self::uniform(horizon, steps as usize)?;
        // rounding may push a step a hair above max_step
        if p.fineness() > max_step {
            p = Self::uniform(horizon, steps as usize + 1)?;
        }
        Ok(p)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn step(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    /// `d(Delta) = max (t_{i+1} - t_i)`.
    pub fn fineness(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// A curve `x(t)` on the torus with velocity `v_i` on `[t_i, t_{i+1})`.
///
/// `costs[i]` is `int_0^{t_i} L(x(t), v(t)) dt`, integrated exactly along
/// each straight segment.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledProcess {
    times: Vec<f64>,
    positions: Vec<TorusPoint>,
    velocities: Vec<Vector>,
    costs: Vec<f64>,
}

impl ControlledProcess {
    pub fn start(y: TorusPoint) -> Self {
        Self::start_at(y, 0.0)
    }

    pub fn start_at(y: TorusPoint, t0: f64) -> Self {
        Self {
            times: vec![t0],
            positions: vec![y],
            velocities: Vec::new(),
            costs: vec![0.0],
        }
    }

    /// Appends a segment of duration `tau` with velocity `v`.
    pub fn push(&mut self, spec: &LagrangianSpec, v: Vector, tau: f64) -> Result<()> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(invalid(format!("segment duration must be positive, got {tau}")));
        }
        let x = *self.positions.last().unwrap();
        if v.dim() != x.dim() || !v.is_finite() {
            return Err(invalid("segment velocity must be finite and match the dimension"));
        }
        let cost = spec.segment_cost(x.coords(), &v, tau);
        self.times.push(self.times.last().unwrap() + tau);
        self.positions.push(x.translate(&(v * tau)));
        self.velocities.push(v);
        self.costs.push(self.costs.last().unwrap() + cost);
        Ok(())
    }

    pub fn from_velocities(
        spec: &LagrangianSpec,
        y: TorusPoint,
        partition: &Partition,
        velocities: &[Vector],
    ) -> Result<Self> {
        if velocities.len() != partition.steps() {
            return Err(invalid(format!(
                "{} velocities for {} segments",
                velocities.len(),
                partition.steps()
            )));
        }
        let mut proc = Self::start(y);
        for (i, v) in velocities.iter().enumerate() {
            proc.push(spec, *v, partition.step(i))?;
        }
        Ok(proc)
    }

    pub fn dim(&self) -> usize {
        self.positions[0].dim()
    }

    pub fn segments(&self) -> usize {
        self.velocities.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[TorusPoint] {
        &self.positions
    }

    pub fn velocities(&self) -> &[Vector] {
        &self.velocities
    }

    pub fn running_costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn initial(&self) -> &TorusPoint {
        &self.positions[0]
    }

    pub fn terminal(&self) -> &TorusPoint {
        self.positions.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.times.last().unwrap() - self.times[0]
    }

    pub fn cost(&self) -> f64 {
        *self.costs.last().unwrap()
    }

    /// `phi(x(r)) + int_0^r L dt`.
    pub fn total_functional(&self, phi: &GridScalarField) -> f64 {
        phi.interpolate(self.terminal()) + self.cost()
    }

    /// Prefix up to and including segment `segments - 1`.
    pub fn prefix(&self, segments: usize) -> Self {
        let k = segments.min(self.segments());
        Self {
            times: self.times[..=k].to_vec(),
            positions: self.positions[..=k].to_vec(),
            velocities: self.velocities[..k].to_vec(),
            costs: self.costs[..=k].to_vec(),
        }
    }

    /// Rows `t, x.., v.., running_cost`; the final row repeats the last
    /// velocity (zero for an empty process).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("x{i}")));
        header.extend((0..d).map(|i| format!("v{i}")));
        header.push("running_cost".into());
        writeln!(out, "{}", header.join(","))?;
        let zero = Vector::zeros(d);
        for i in 0..self.times.len() {
            let v = self
                .velocities
                .get(i)
                .or(self.velocities.last())
                .unwrap_or(&zero);
            let mut row = vec![format!("{}", self.times[i])];
            row.extend(self.positions[i].as_slice().iter().map(|c| format!("{c}")));
            row.extend(v.as_slice().iter().map(|c| format!("{c}")));
            row.push(format!("{}", self.costs[i]));
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::Potential;
    use crate::torus::GridSpec;

    fn pendulum() -> LagrangianSpec {
        LagrangianSpec::mechanical(Potential::single_cosine(1.0))
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0.0]).is_err());
        assert!(Partition::new(vec![0.1, 1.0]).is_err());
        assert!(Partition::new(vec![0.0, 0.5, 0.5]).is_err());
        let p = Partition::uniform(2.0, 4).unwrap();
        assert_eq!(p.steps(), 4);
        assert_eq!(p.horizon(), 2.0);
        assert!((p.fineness() - 0.5).abs() < 1e-15);
        let q = Partition::with_fineness(1.0, 0.3).unwrap();
        assert!(q.fineness() <= 0.3);
        assert_eq!(q.steps(), 4);
    }

    #[test]
    fn constant_process_costs_l_at_rest() {
        let spec = pendulum();
        let x = TorusPoint::wrap(&[0.25]).unwrap();
        let p = Partition::uniform(1.0, 3).unwrap();
        let proc = ControlledProcess::from_velocities(&spec, x, &p, &[Vector::zeros(1); 3]).unwrap();
        assert!((proc.cost() - spec.eval(&x, &Vector::zeros(1))).abs() < 1e-15);
        let phi = GridScalarField::constant(GridSpec::new(1, 16).unwrap(), 0.0);
        assert!((proc.total_functional(&phi) - proc.cost()).abs() < 1e-15);
    }

    #[test]
    fn empty_process_is_terminal_cost() {
        let g = GridSpec::new(1, 16).unwrap();
        let phi = GridScalarField::from_fn(g, |x| x.as_slice()[0]);
        let y = TorusPoint::wrap(&[0.5]).unwrap();
        let proc = ControlledProcess::start(y);
        assert_eq!(proc.total_functional(&phi), 0.5);
        assert_eq!(proc.duration(), 0.0);
    }

    #[test]
    fn positions_follow_velocities() {
        let spec = pendulum();
        let y = TorusPoint::wrap(&[0.9]).unwrap();
        let mut proc = ControlledProcess::start(y);
        proc.push(&spec, Vector::new(&[0.5]).unwrap(), 0.4).unwrap();
        assert!((proc.terminal().as_slice()[0] - 0.1).abs() < 1e-12);
        assert!(proc.push(&spec, Vector::new(&[0.5]).unwrap(), 0.0).is_err());
    }

    #[test]
    fn segment_cost_matches_fine_midpoint_rule() {
        let spec = LagrangianSpec::kinked(
            0.5,
            Potential::from_modes(vec![(vec![1, 0], 1.0), (vec![2, 1], 0.3)]).unwrap(),
        )
        .unwrap();
        let x = Vector::new(&[0.3, 0.7]).unwrap();
        let v = Vector::new(&[1.7, -0.4]).unwrap();
        let tau = 0.8;
        let m = 200_000;
        let oracle: f64 = (0..m)
            .map(|i| {
                let s = (i as f64 + 0.5) * tau / m as f64;
                spec.eval_raw(&(x + v * s), &v) * tau / m as f64
            })
            .sum();
        assert!((spec.segment_cost(&x, &v, tau) - oracle).abs() < 1e-9);
        let still = Vector::zeros(2);
        assert!((spec.segment_cost(&x, &still, tau) - tau * spec.eval_raw(&x, &still)).abs() < 1e-14);
    }

    #[test]
    fn csv_has_one_row_per_time() {
        let spec = pendulum();
        let p = Partition::uniform(1.0, 2).unwrap();
        let vs = [Vector::new(&[0.1]).unwrap(), Vector::new(&[0.2]).unwrap()];
        let proc = ControlledProcess::from_velocities(&spec, TorusPoint::origin(1), &p, &vs).unwrap();
        let csv = proc.to_csv_string();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,x0,v0,running_cost");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("1,"));
        assert_eq!(proc.prefix(1).segments(), 1);
    }
}
