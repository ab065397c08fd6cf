//! Geometry of the flat torus `T^d = R^d / Z^d` for `d` in {1, 2}.
//!
//! Points are stored by their canonical representative in `[0, 1)^d`.
//! Tangent vectors and covectors share the small [`Vector`] type, which is
//! `Copy` so the inner loops of the solvers never allocate.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::{Add, Index, Mul, Neg, Sub};

use crate::error::{invalid, Error, Result};

/// Largest supported torus dimension.
pub const MAX_DIM: usize = 2;

/// A vector of `R^d` (velocity, displacement or covector).
#[derive(Clone, Copy, PartialEq)]
pub struct Vector {
    dim: usize,
    data: [f64; MAX_DIM],
}

impl Vector {
    pub fn new(components: &[f64]) -> Result<Self> {
        let dim = components.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(invalid(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        let mut data = [0.0; MAX_DIM];
        data[..dim].copy_from_slice(components);
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Self {
            dim,
            data: [0.0; MAX_DIM],
        }
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize) -> f64) -> Self {
        let mut v = Self::zeros(dim);
        for i in 0..dim {
            v.data[i] = f(i);
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.dim]
    }

    pub fn set(&mut self, axis: usize, value: f64) {
        assert!(axis < self.dim);
        self.data[axis] = value;
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|c| c.is_finite())
    }

    /// Total order used for deterministic tie-breaking: smaller norm first,
    /// then lexicographic.
    pub fn tie_break_less(&self, other: &Vector) -> bool {
        let (a, b) = (self.norm_sq(), other.norm_sq());
        if a != b {
            return a < b;
        }
        self.as_slice() < other.as_slice()
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, axis: usize) -> &f64 {
        &self.as_slice()[axis]
    }
}

impl Add for Vector {
    type Output = Vector;

    fn add(self, rhs: Vector) -> Vector {
        debug_assert_eq!(self.dim, rhs.dim);
        Vector::from_fn(self.dim, |i| self.data[i] + rhs.data[i])
    }
}

impl Sub for Vector {
    type Output = Vector;

    fn sub(self, rhs: Vector) -> Vector {
        debug_assert_eq!(self.dim, rhs.dim);
        Vector::from_fn(self.dim, |i| self.data[i] - rhs.data[i])
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;

    fn mul(self, rhs: f64) -> Vector {
        Vector::from_fn(self.dim, |i| self.data[i] * rhs)
    }
}

impl Neg for Vector {
    type Output = Vector;

    fn neg(self) -> Vector {
        self * -1.0
    }
}

fn wrap_coord(c: f64) -> f64 {
    let r = c - c.floor();
    // c slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point of `T^d`, stored canonically with every coordinate in `[0, 1)`.
#[derive(Clone, Copy, PartialEq)]
pub struct TorusPoint {
    coords: Vector,
}

impl TorusPoint {
    /// Projects raw real coordinates onto the torus.
    pub fn wrap(raw: &[f64]) -> Result<Self> {
        let v = Vector::new(raw)?;
        if !v.is_finite() {
            return Err(invalid(format!("non-finite coordinates {raw:?}")));
        }
        Ok(Self::from_vector(v))
    }

    /// Infallible wrap for vectors already known to be finite.
    pub fn from_vector(v: Vector) -> Self {
        debug_assert!(v.is_finite(), "non-finite torus coordinates {v:?}");
        Self {
            coords: Vector::from_fn(v.dim(), |i| wrap_coord(v[i])),
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            coords: Vector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.dim()
    }

    pub fn coords(&self) -> &Vector {
        &self.coords
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coords.as_slice()
    }

    /// `x + v` on the torus.
    pub fn translate(&self, v: &Vector) -> TorusPoint {
        Self::from_vector(self.coords + *v)
    }
}

impl fmt::Debug for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{:?}", self.coords)
    }
}

/// Convenience wrapper for [`TorusPoint::wrap`].
pub fn wrap(raw: &[f64]) -> Result<TorusPoint> {
    TorusPoint::wrap(raw)
}

/// Shortest displacement `v` with `x + v = y`; each component lies in
/// `(-1/2, 1/2]`.
pub fn min_displacement(x: &TorusPoint, y: &TorusPoint) -> Vector {
    assert_eq!(x.dim(), y.dim(), "dimension mismatch");
    Vector::from_fn(x.dim(), |i| {
        let d = y.coords[i] - x.coords[i];
        if d > 0.5 {
            d - 1.0
        } else if d <= -0.5 {
            d + 1.0
        } else {
            d
        }
    })
}

/// Flat torus metric.
pub fn torus_dist(x: &TorusPoint, y: &TorusPoint) -> f64 {
    min_displacement(x, y).norm()
}

/// Uniform periodic grid with `n` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    #[serde(rename = "d")]
    dim: usize,
    n: usize,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    d: usize,
    n: usize,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = crate::error::Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.d, raw.n)
    }
}

impl GridSpec {
    /// `n` must be a power of two so that `h = 1/n` is exact.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(invalid(format!("grid dimension {dim} not in 1..={MAX_DIM}")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(invalid(format!(
                "points per axis {n} must be a power of two >= 4"
            )));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Lexicographic multi-index of a flat node index (first axis slowest).
    pub fn multi_index(&self, index: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rest = index;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % self.n;
            rest /= self.n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.dim]
            .iter()
            .fold(0, |acc, &i| acc * self.n + (i % self.n))
    }

    /// Flat index of the node offset from `index` by `offset` (periodic).
    pub fn shifted_index(&self, index: usize, offset: &[i64]) -> usize {
        let multi = self.multi_index(index);
        let n = self.n as i64;
        let mut shifted = [0usize; MAX_DIM];
        for axis in 0..self.dim {
            shifted[axis] = (multi[axis] as i64 + offset[axis]).rem_euclid(n) as usize;
        }
        self.flat_index(&shifted)
    }

    pub fn node(&self, index: usize) -> TorusPoint {
        let multi = self.multi_index(index);
        let h = self.spacing();
        TorusPoint {
            coords: Vector::from_fn(self.dim, |i| multi[i] as f64 * h),
        }
    }

    /// Flat index of the node nearest to `x` (ties round up).
    pub fn nearest_node(&self, x: &TorusPoint) -> usize {
        let n = self.n as f64;
        let mut multi = [0usize; MAX_DIM];
        for (axis, m) in multi.iter_mut().enumerate().take(self.dim) {
            *m = ((x.coords[axis] * n + 0.5).floor() as usize) % self.n;
        }
        self.flat_index(&multi)
    }
}

/// Splits a real coordinate into a periodic cell index and the fractional
/// position inside that cell.
#[inline]
pub(crate) fn locate(c: f64, n: usize) -> (usize, f64) {
    let s = c * n as f64;
    let fl = s.floor();
    let mut frac = s - fl;
    if frac >= 1.0 {
        frac = 0.0;
    }
    let i = (fl as i64).rem_euclid(n as i64) as usize;
    (i, frac)
}

/// A real function on `T^d` sampled at the nodes of a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(invalid(format!(
                "expected {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.node_count()],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&TorusPoint) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|i| f(&grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn shifted(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Max adjacent-node difference divided by `h`, per axis.
    pub fn axis_slopes(&self) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        let h = self.grid.spacing();
        for (axis, slot) in out.iter_mut().enumerate().take(self.grid.dim) {
            let mut offset = [0i64; MAX_DIM];
            offset[axis] = 1;
            *slot = (0..self.values.len())
                .map(|i| {
                    let j = self.grid.shifted_index(i, &offset);
                    (self.values[j] - self.values[i]).abs()
                })
                .fold(0.0, f64::max)
                / h;
        }
        out
    }

    /// Lipschitz constant of the multilinear interpolant in the Euclidean
    /// norm.
    pub fn lipschitz(&self) -> f64 {
        self.axis_slopes().iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Periodic multilinear interpolation at a point of the torus.
    pub fn interpolate(&self, x: &TorusPoint) -> f64 {
        self.value_at(x.coords())
    }

    /// Interpolation at unwrapped real coordinates.
    #[inline]
    pub fn value_at(&self, raw: &Vector) -> f64 {
        let n = self.grid.n;
        match self.grid.dim {
            1 => {
                let (i, t) = locate(raw[0], n);
                let a = self.values[i];
                let b = self.values[(i + 1) % n];
                a + t * (b - a)
            }
            _ => {
                let (i, s) = locate(raw[0], n);
                let (j, t) = locate(raw[1], n);
                let i1 = (i + 1) % n;
                let j1 = (j + 1) % n;
                let f00 = self.values[i * n + j];
                let f10 = self.values[i1 * n + j];
                let f01 = self.values[i * n + j1];
                let f11 = self.values[i1 * n + j1];
                let lo = f00 + t * (f01 - f00);
                let hi = f10 + t * (f11 - f10);
                lo + s * (hi - lo)
            }
        }
    }

    /// Centered-difference gradient at a node.
    pub fn centered_gradient(&self, index: usize) -> Vector {
        let h = self.grid.spacing();
        Vector::from_fn(self.grid.dim, |axis| {
            let mut plus = [0i64; MAX_DIM];
            let mut minus = [0i64; MAX_DIM];
            plus[axis] = 1;
            minus[axis] = -1;
            let f_plus = self.values[self.grid.shifted_index(index, &plus)];
            let f_minus = self.values[self.grid.shifted_index(index, &minus)];
            (f_plus - f_minus) / (2.0 * h)
        })
    }

    /// Largest one-sided slope jump at a node over all axes.
    pub fn slope_jump(&self, index: usize) -> f64 {
        let h = self.grid.spacing();
        let mut jump: f64 = 0.0;
        for axis in 0..self.grid.dim {
            let mut plus = [0i64; MAX_DIM];
            let mut minus = [0i64; MAX_DIM];
            plus[axis] = 1;
            minus[axis] = -1;
            let f = self.values[index];
            let f_plus = self.values[self.grid.shifted_index(index, &plus)];
            let f_minus = self.values[self.grid.shifted_index(index, &minus)];
            jump = jump.max(((f_plus - f) - (f - f_minus)).abs() / h);
        }
        jump
    }

    /// Writes `# d=<d> n=<n>` followed by one value per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# d={} n={}", self.grid.dim, self.grid.n)?;
        for v in &self.values {
            writeln!(out, "{v}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field csv".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let (dim, n) = parse_header(&header)?;
        let grid = GridSpec::new(dim, n)?;
        let mut values = Vec::with_capacity(grid.node_count());
        for line in lines {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::Parse(format!("bad value {line:?}")))?;
            values.push(v);
        }
        Self::new(grid, values)
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse(format!("bad field header {header:?}"));
    let rest = header.trim().strip_prefix('#').ok_or_else(bad)?;
    let mut dim = None;
    let mut n = None;
    for token in rest.split_whitespace() {
        match token.split_once('=') {
            Some(("d", v)) => dim = v.parse().ok(),
            Some(("n", v)) => n = v.parse().ok(),
            _ => return Err(bad()),
        }
    }
    Ok((dim.ok_or_else(bad)?, n.ok_or_else(bad)?))
}
