//! Discretized fundamental densities on a window of lattice translates.
//!
//! The window is the union of `(2R+1)^N` translates of the fundamental
//! parallelepiped. Grid point `c ∈ [0, (2R+1)n)^N` sits at lattice
//! coordinates `(c + ½)/n - R - ½`, and its orbit under the lattice is
//! indexed by `j = c mod n`. The window is centered, so the central translate is the
//! parallelepiped `B·[-½, ½)^N`.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{norm, Lattice};

pub const CONSTRAINT_TOL: f64 = 1e-12;
pub const BINARITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lattice: Lattice,
    pub samples_per_axis: usize,
    pub window_hops: usize,
}

impl GridSpec {
    pub fn new(lattice: Lattice, samples_per_axis: usize, window_hops: usize) -> Result<Self> {
        if samples_per_axis == 0 {
            return Err(Error::InvalidParameter("grid.n must be positive".into()));
        }
        let spec = Self { lattice, samples_per_axis, window_hops };
        if spec.num_points() > 50_000_000 {
            return Err(Error::InvalidParameter(format!(
                "grid has {} points, more than the supported 5e7",
                spec.num_points()
            )));
        }
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    /// Grid points per axis across the whole window.
    pub fn side(&self) -> usize {
        (2 * self.window_hops + 1) * self.samples_per_axis
    }

    pub fn copies_per_axis(&self) -> usize {
        2 * self.window_hops + 1
    }

    pub fn num_points(&self) -> usize {
        self.side().pow(self.dim() as u32)
    }

    pub fn num_orbits(&self) -> usize {
        self.samples_per_axis.pow(self.dim() as u32)
    }

    pub fn orbit_size(&self) -> usize {
        self.copies_per_axis().pow(self.dim() as u32)
    }

    /// Quadrature weight of one sample, `covolume / n^N`.
    pub fn weight(&self) -> f64 {
        self.lattice.covolume() / self.num_orbits() as f64
    }

    pub fn window_measure(&self) -> f64 {
        self.orbit_size() as f64 * self.lattice.covolume()
    }

    /// Global integer coordinates of a flat index (last axis fastest).
    pub fn coords(&self, flat: usize) -> Vec<usize> {
        let side = self.side();
        let mut c = vec![0; self.dim()];
        let mut rem = flat;
        for k in (0..self.dim()).rev() {
            c[k] = rem % side;
            rem /= side;
        }
        c
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.side() + c)
    }

    /// Lattice coordinates `(c + ½)/n - R - ½`.
    pub fn lattice_coordinates(&self, flat: usize) -> Vec<f64> {
        let n = self.samples_per_axis as f64;
        let r = self.window_hops as f64 + 0.5;
        self.coords(flat).iter().map(|&c| (c as f64 + 0.5) / n - r).collect()
    }

    /// Cartesian position of a grid point.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.lattice.point(&self.lattice_coordinates(flat))
    }

    pub fn orbit_id(&self, flat: usize) -> usize {
        let n = self.samples_per_axis;
        self.coords(flat).iter().fold(0, |acc, &c| acc * n + c % n)
    }

    /// Flat indices of the orbit, ordered by increasing flat index.
    pub fn orbit_members(&self, orbit: usize) -> Vec<usize> {
        let n = self.samples_per_axis;
        let dim = self.dim();
        let mut base = vec![0; dim];
        let mut rem = orbit;
        for k in (0..dim).rev() {
            base[k] = rem % n;
            rem /= n;
        }
        let copies = self.copies_per_axis();
        (0..self.orbit_size())
            .map(|idx| {
                let mut rem = idx;
                let mut c = vec![0; dim];
                for k in (0..dim).rev() {
                    c[k] = base[k] + n * (rem % copies);
                    rem /= copies;
                }
                self.flat_index(&c)
            })
            .collect()
    }

    pub fn orbits(&self) -> Vec<Vec<usize>> {
        (0..self.num_orbits()).map(|o| self.orbit_members(o)).collect()
    }

    /// Whether the point lies in the central translate.
    pub fn is_central(&self, flat: usize) -> bool {
        let n = self.samples_per_axis;
        self.coords(flat).iter().all(|&c| c / n == self.window_hops)
    }

    /// Largest `|x|` over grid points.
    pub fn window_circumradius(&self) -> f64 {
        (0..self.num_points()).map(|i| norm(&self.point(i))).fold(0.0, f64::max)
    }

    /// `max |x - y|` over grid points of the window.
    pub fn window_diameter(&self) -> f64 {
        let dim = self.dim();
        let side = self.side();
        let mut best: f64 = 0.0;
        for mask in 0..(1usize << dim) {
            let c: Vec<usize> = (0..dim).map(|k| if mask >> k & 1 == 1 { side - 1 } else { 0 }).collect();
            let p = self.point(self.flat_index(&c));
            let q = self.point(self.flat_index(&c.iter().map(|&x| side - 1 - x).collect::<Vec<_>>()));
            best = best.max(norm(&p.iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<_>>()));
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Orbit sums equal 1.
    Exact,
    /// Orbit sums at most 1.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub mode: ConstraintMode,
}

/// Euclidean projection onto `{v ∈ [0,1]^k : Σ v = 1}`.
///
/// The projection is `clamp(v_i - τ, 0, 1)` for the shift `τ` solving
/// `Σ clamp(v_i - τ, 0, 1) = 1`; the sum is piecewise linear in `τ` with
/// breakpoints `v_i` and `v_i - 1`.
pub fn project_exact(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("cannot project an empty orbit".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value in orbit".into()));
    }
    let total = |tau: f64| values.iter().map(|v| (v - tau).clamp(0.0, 1.0)).sum::<f64>();
    let mut breaks: Vec<f64> = values.iter().flat_map(|&v| [v - 1.0, v]).collect();
    breaks.sort_by(f64::total_cmp);
    // total(breaks[0]) = min(k, ...) ≥ 1 and total(last) = 0.
    let mut lo = breaks[0];
    let mut s_lo = total(lo);
    let mut tau = lo;
    for &b in &breaks[1..] {
        let s_b = total(b);
        if s_b <= 1.0 {
            tau = if s_lo == s_b { b } else { lo + (s_lo - 1.0) * (b - lo) / (s_lo - s_b) };
            break;
        }
        lo = b;
        s_lo = s_b;
    }
    let mut out: Vec<f64> = values.iter().map(|v| (v - tau).clamp(0.0, 1.0)).collect();
    // Absorb rounding drift into a free coordinate, if any.
    let drift = 1.0 - out.iter().sum::<f64>();
    if drift != 0.0 {
        if let Some(i) = (0..out.len())
            .filter(|&i| out[i] + drift > 0.0 && out[i] + drift < 1.0 && out[i] > 0.0)
            .max_by(|&a, &b| out[a].total_cmp(&out[b]))
        {
            out[i] += drift;
        }
    }
    Ok(out)
}

/// Euclidean projection onto `{v ∈ [0,1]^k : Σ v ≤ 1}`.
pub fn project_relaxed(values: &[f64]) -> Result<Vec<f64>> {
    let clipped: Vec<f64> = values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    if clipped.iter().sum::<f64>() <= 1.0 {
        Ok(clipped)
    } else {
        project_exact(values)
    }
}

impl DensityField {
    pub fn new(spec: GridSpec, values: Vec<f64>, mode: ConstraintMode) -> Result<Self> {
        if values.len() != spec.num_points() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                spec.num_points(),
                values.len()
            )));
        }
        let field = Self { spec, values, mode };
        field.check_invariants(CONSTRAINT_TOL)?;
        Ok(field)
    }

    /// One on the central translate, zero elsewhere.
    pub fn indicator_of_cell(spec: &GridSpec) -> Self {
        let values = (0..spec.num_points())
            .map(|i| if spec.is_central(i) { 1.0 } else { 0.0 })
            .collect();
        Self { spec: spec.clone(), values, mode: ConstraintMode::Exact }
    }

    /// `1/k` everywhere, `k` the orbit size.
    pub fn uniform(spec: &GridSpec) -> Self {
        let v = 1.0 / spec.orbit_size() as f64;
        Self { spec: spec.clone(), values: vec![v; spec.num_points()], mode: ConstraintMode::Exact }
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        Self { spec: spec.clone(), values: vec![0.0; spec.num_points()], mode: ConstraintMode::Relaxed }
    }

    /// Uniform noise projected onto the exact constraint set.
    pub fn random(spec: &GridSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..spec.num_points()).map(|_| rng.gen::<f64>()).collect();
        let mut field = Self { spec: spec.clone(), values, mode: ConstraintMode::Exact };
        field.project();
        field
    }

    pub fn weight(&self) -> f64 {
        self.spec.weight()
    }

    /// Orbit sum through the grid point `flat`.
    pub fn periodization(&self, flat: usize) -> f64 {
        self.spec.orbit_members(self.spec.orbit_id(flat)).iter().map(|&i| self.values[i]).sum()
    }

    /// Projects every orbit onto the constraint set of the field's mode.
    pub fn project(&mut self) {
        let orbits = self.spec.orbits();
        let mode = self.mode;
        let projected: Vec<Vec<f64>> = orbits
            .par_iter()
            .map(|members| {
                let v: Vec<f64> = members.iter().map(|&i| self.values[i]).collect();
                match mode {
                    ConstraintMode::Exact => project_exact(&v),
                    ConstraintMode::Relaxed => project_relaxed(&v),
                }
                .expect("orbits are nonempty and finite")
            })
            .collect();
        for (members, vals) in orbits.iter().zip(projected) {
            for (&i, v) in members.iter().zip(vals) {
                self.values[i] = v;
            }
        }
    }

    /// `w Σ f` with a fixed summation order.
    pub fn mass(&self) -> f64 {
        self.weight() * self.values.iter().sum::<f64>()
    }

    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        if let Some(v) = self.values.iter().find(|v| !(**v >= -tol && **v <= 1.0 + tol)) {
            return Err(Error::Infeasible(format!("value {v} outside [0,1]")));
        }
        for members in self.spec.orbits() {
            let s: f64 = members.iter().map(|&i| self.values[i]).sum();
            let ok = match self.mode {
                ConstraintMode::Exact => (s - 1.0).abs() <= tol,
                ConstraintMode::Relaxed => s <= 1.0 + tol,
            };
            if !ok {
                return Err(Error::Infeasible(format!("orbit sum {s} violates the constraint")));
            }
        }
        Ok(())
    }

    /// Per orbit: 1 at the largest value (smallest flat index on ties).
    pub fn threshold(&self) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for members in self.spec.orbits() {
            let mut best = members[0];
            for &i in &members[1..] {
                if self.values[i] > self.values[best] {
                    best = i;
                }
            }
            values[best] = 1.0;
        }
        Self { spec: self.spec.clone(), values, mode: ConstraintMode::Exact }
    }

    /// Measure of the set where `tol < f < 1 - tol`.
    pub fn binarity_deficit(&self) -> f64 {
        let count = self
            .values
            .iter()
            .filter(|&&v| v > BINARITY_TOL && v < 1.0 - BINARITY_TOL)
            .count();
        self.weight() * count as f64
    }

    pub fn is_binary(&self) -> bool {
        self.binarity_deficit() == 0.0
    }

    /// Largest `|x|` where `f(x) > 1e-6`.
    pub fn support_radius(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > BINARITY_TOL)
            .map(|(i, _)| norm(&self.spec.point(i)))
            .fold(0.0, f64::max)
    }

    /// Whether the support stays one cell diameter away from the window edge.
    pub fn window_adequate(&self) -> bool {
        self.support_radius()
            < self.spec.window_circumradius() - self.spec.lattice.reduce().cell_diameter()
    }

    /// CSV dump: a `# {json}` header line with the grid and mode, a column
    /// line, then `x_0,...,value,orbit_id` per grid point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header = CsvHeader { grid: self.spec.clone(), mode: self.mode };
        writeln!(out, "# {}", serde_json::to_string(&header)?)?;
        let cols: Vec<String> = (0..self.spec.dim()).map(|k| format!("x{k}")).collect();
        writeln!(out, "{},value,orbit_id", cols.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let x = self.spec.point(i);
            let xs: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{},{},{}", xs.join(","), v, self.spec.orbit_id(i))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines.next().ok_or_else(|| Error::Parse("empty density file".into()))??;
        let json = first
            .strip_prefix("# ")
            .ok_or_else(|| Error::Parse("missing '# {json}' header".into()))?;
        let header: CsvHeader = serde_json::from_str(json)?;
        lines.next().ok_or_else(|| Error::Parse("missing column line".into()))??;
        let dim = header.grid.dim();
        let mut values = Vec::with_capacity(header.grid.num_points());
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let field = line
                .split(',')
                .nth(dim)
                .ok_or_else(|| Error::Parse(format!("row {row}: too few columns")))?;
            let v: f64 = field
                .parse()
                .map_err(|e| Error::Parse(format!("row {row}: bad value {field:?}: {e}")))?;
            values.push(v);
        }
        DensityField::new(header.grid, values, header.mode)
    }
}

#[derive(Serialize, Deserialize)]
struct CsvHeader {
    grid: GridSpec,
    mode: ConstraintMode,
}
