//! Interaction energies of densities on the grid window.
//!
//! All sums go through [`Interaction`], which applies the matrix
//! `A[x][y] = K(x - y)` restricted to the window. Because grid differences
//! are `B·d/n` for integer `d`, the matrix is a multilevel Toeplitz matrix
//! given by a table over `d`, and it can be applied either directly or by
//! zero-padded FFT convolution.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::density::{DensityField, GridSpec};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, PeriodizedKernel};

/// Window sizes at or below this many points use the direct path by default.
const DIRECT_LIMIT: usize = 4096;

/// Point budget for the explicit part of [`grid_l1`].
const MAX_TABLE_POINTS: f64 = 4.0e6;

#[derive(Debug, Clone)]
pub struct Interaction {
    spec: GridSpec,
    /// Window side per axis, padded to three axes with 1.
    sides: [usize; 3],
    /// Table side per axis, `2·side - 1`.
    tsides: [usize; 3],
    table: Vec<f64>,
    diagonal: f64,
}

impl Interaction {
    /// Full interaction including the diagonal `K(0)`; needs a bounded kernel.
    pub fn new(spec: &GridSpec, kernel: &Kernel) -> Result<Self> {
        kernel.require_integrable("density energy")?;
        Self::build(spec, kernel, false)
    }

    /// Interaction with the diagonal removed; valid for singular kernels.
    pub fn off_diagonal(spec: &GridSpec, kernel: &Kernel) -> Result<Self> {
        Self::build(spec, kernel, true)
    }

    fn build(spec: &GridSpec, kernel: &Kernel, drop_diagonal: bool) -> Result<Self> {
        if kernel.dim() != spec.dim() {
            return Err(Error::InvalidParameter("kernel and grid dimensions differ".into()));
        }
        let dim = spec.dim();
        let side = spec.side();
        let mut sides = [1; 3];
        let mut tsides = [1; 3];
        for k in 0..dim {
            sides[k] = side;
            tsides[k] = 2 * side - 1;
        }
        let n = spec.samples_per_axis as f64;
        let len = tsides.iter().product();
        let table: Vec<f64> = (0..len)
            .into_par_iter()
            .map(|idx| {
                let d = [
                    idx / (tsides[1] * tsides[2]),
                    idx / tsides[2] % tsides[1],
                    idx % tsides[2],
                ];
                let coeffs: Vec<f64> =
                    (0..dim).map(|k| (d[k] as f64 - (sides[k] - 1) as f64) / n).collect();
                let is_origin = (0..dim).all(|k| d[k] == sides[k] - 1);
                if is_origin && drop_diagonal {
                    0.0
                } else {
                    kernel.profile(crate::lattice::norm(&spec.lattice.point(&coeffs)))
                }
            })
            .collect();
        let centre = ((sides[0] - 1) * tsides[1] + sides[1] - 1) * tsides[2] + sides[2] - 1;
        let diagonal = table[centre];
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel table".into()));
        }
        Ok(Self { spec: spec.clone(), sides, tsides, table, diagonal })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn diagonal(&self) -> f64 {
        self.diagonal
    }

    pub fn len(&self) -> usize {
        self.spec.num_points()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `K(x - y)` for flat indices `x`, `y`.
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        let (cx, cy) = (self.split(x), self.split(y));
        self.table[self.table_index(cx, cy)]
    }

    fn split(&self, flat: usize) -> [usize; 3] {
        let [_, s1, s2] = self.sides;
        [flat / (s1 * s2), flat / s2 % s1, flat % s2]
    }

    fn table_index(&self, cx: [usize; 3], cy: [usize; 3]) -> usize {
        let [s0, s1, s2] = self.sides;
        let [_, t1, t2] = self.tsides;
        ((cx[0] + s0 - 1 - cy[0]) * t1 + cx[1] + s1 - 1 - cy[1]) * t2 + cx[2] + s2 - 1 - cy[2]
    }

    /// `(A f)(x) = Σ_y K(x - y) f(y)`, choosing the path by window size.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        if self.len() <= DIRECT_LIMIT {
            self.apply_direct(f)
        } else {
            self.apply_fft(f)
        }
    }

    pub fn apply_direct(&self, f: &[f64]) -> Vec<f64> {
        let [s0, s1, s2] = self.sides;
        let [_, t1, t2] = self.tsides;
        (0..self.len())
            .into_par_iter()
            .map(|x| {
                let cx = self.split(x);
                let mut acc = 0.0;
                for y0 in 0..s0 {
                    let b0 = (cx[0] + s0 - 1 - y0) * t1;
                    for y1 in 0..s1 {
                        let base = (b0 + cx[1] + s1 - 1 - y1) * t2 + cx[2] + s2 - 1;
                        let row = &f[(y0 * s1 + y1) * s2..][..s2];
                        for (y2, fy) in row.iter().enumerate() {
                            acc += fy * self.table[base - y2];
                        }
                    }
                }
                acc
            })
            .collect()
    }

    /// Same product by zero-padded FFT convolution.
    pub fn apply_fft(&self, f: &[f64]) -> Vec<f64> {
        let dims: [usize; 3] = [0, 1, 2].map(|k| if self.sides[k] > 1 { 2 * self.sides[k] } else { 1 });
        let total: usize = dims.iter().product();
        let at = |i: [usize; 3]| (i[0] * dims[1] + i[1]) * dims[2] + i[2];

        let mut kbuf = vec![Complex::new(0.0, 0.0); total];
        for idx in 0..self.table.len() {
            let d = [
                idx / (self.tsides[1] * self.tsides[2]),
                idx / self.tsides[2] % self.tsides[1],
                idx % self.tsides[2],
            ];
            let wrapped = [0, 1, 2].map(|k| {
                let off = d[k] as isize - (self.sides[k] as isize - 1);
                off.rem_euclid(dims[k] as isize) as usize
            });
            kbuf[at(wrapped)] = Complex::new(self.table[idx], 0.0);
        }
        let mut fbuf = vec![Complex::new(0.0, 0.0); total];
        for (flat, v) in f.iter().enumerate() {
            fbuf[at(self.split(flat))] = Complex::new(*v, 0.0);
        }
        let mut planner = FftPlanner::new();
        fft_nd(&mut planner, &mut kbuf, dims, false);
        fft_nd(&mut planner, &mut fbuf, dims, false);
        for (a, b) in fbuf.iter_mut().zip(&kbuf) {
            *a *= b;
        }
        fft_nd(&mut planner, &mut fbuf, dims, true);
        let scale = 1.0 / total as f64;
        (0..self.len()).map(|flat| fbuf[at(self.split(flat))].re * scale).collect()
    }

    /// `Σ_y K(x - y)` over the window.
    pub fn row_sums(&self) -> Vec<f64> {
        self.apply(&vec![1.0; self.len()])
    }

    /// Largest absolute row sum, an upper bound on the operator norm.
    pub fn max_abs_row_sum(&self) -> f64 {
        let abs_table: Vec<f64> = self.table.iter().map(|v| v.abs()).collect();
        let abs = Self { table: abs_table, ..self.clone() };
        abs.row_sums().into_iter().fold(0.0, f64::max)
    }

    /// `𝒥 = w² Σ f(x) f(y) K(x - y)`.
    pub fn j(&self, f: &[f64]) -> f64 {
        let w = self.spec.weight();
        w * w * dot(f, &self.apply(f))
    }

    /// `∇𝒥 = 2 w² A f`.
    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        let w = self.spec.weight();
        self.apply(f).into_iter().map(|v| 2.0 * w * w * v).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fft_nd(planner: &mut FftPlanner<f64>, buf: &mut [Complex<f64>], dims: [usize; 3], inverse: bool) {
    let strides = [dims[1] * dims[2], dims[2], 1];
    for axis in 0..3 {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let mut line = vec![Complex::new(0.0, 0.0); n];
        let others: Vec<usize> = (0..3).filter(|&k| k != axis).collect();
        for i in 0..dims[others[0]] {
            for j in 0..dims[others[1]] {
                let start = i * strides[others[0]] + j * strides[others[1]];
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = buf[start + k * strides[axis]];
                }
                fft.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    buf[start + k * strides[axis]] = *v;
                }
            }
        }
    }
}

/// `w Σ_z K(z)` over the infinite sample grid `{B d / n}`: an explicit sum
/// over `|z| ≤ radius` plus the analytic tail `∫_{|z| > radius} K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridL1 {
    pub value: f64,
    pub tail: f64,
    pub radius: f64,
}

/// Grid-consistent L¹ norm; with `include_origin = false` the `z = 0` term
/// is dropped (needed for singular kernels).
pub fn grid_l1(spec: &GridSpec, kernel: &Kernel, include_origin: bool) -> Result<GridL1> {
    let fine = spec.lattice.scaled(1.0 / spec.samples_per_axis as f64)?;
    let w = spec.weight();
    let diameter = spec.window_diameter() * (1.0 + 1e-9) + 1e-12;
    // Extend the explicit sum until the analytic tail is negligible, within a
    // budget of about MAX_TABLE_POINTS grid points.
    let omega = crate::kernel::sphere_area(spec.dim()) / spec.dim() as f64;
    let budget = (MAX_TABLE_POINTS * w / omega).powf(1.0 / spec.dim() as f64);
    let mut radius = diameter;
    if kernel.is_integrable() {
        let target = 1e-17 * kernel.l1_norm();
        while kernel.tail_integral(radius) > target && radius < budget {
            radius = (radius * 1.25).min(budget.max(diameter));
        }
    }
    let mut points = fine.points_in_ball(radius);
    // Fixed order for a deterministic sum.
    points.sort_by(|a, b| a.iter().zip(b).fold(std::cmp::Ordering::Equal, |o, (x, y)| o.then(x.total_cmp(y))));
    let mut sum = 0.0;
    for z in &points {
        let r = crate::lattice::norm(z);
        if r == 0.0 && !include_origin {
            continue;
        }
        sum += kernel.profile(r);
    }
    let tail = kernel.tail_integral(radius);
    Ok(GridL1 { value: w * sum + tail, tail, radius })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub j_value: f64,
    pub p_value: f64,
    pub mass: f64,
    /// Grid-consistent `‖K‖₁`, the constant for which the discrete identity holds.
    pub kernel_l1: f64,
    /// Closed-form `‖K‖₁`.
    pub kernel_l1_exact: f64,
    /// Part of `p_value` from points outside the window.
    pub exterior: f64,
    pub identity_residual: f64,
}

/// `𝒥_K(f) = w² Σ_{x,y} f(x) f(y) K(x - y)`.
pub fn j_energy(f: &DensityField, kernel: &Kernel) -> Result<f64> {
    Ok(Interaction::new(&f.spec, kernel)?.j(&f.values))
}

/// `∇𝒥_K(f) = 2 w² Σ_y f(y) K(x - y)`.
pub fn gradient_j(f: &DensityField, kernel: &Kernel) -> Result<Vec<f64>> {
    Ok(Interaction::new(&f.spec, kernel)?.gradient(&f.values))
}

/// `𝒫_K(f) = ∫∫ f(x)(1 - f(y)) K(x - y)`, with `1 - f` equal to 1 outside the
/// window. The exterior part uses the grid-consistent L¹ norm.
pub fn p_energy(f: &DensityField, kernel: &Kernel) -> Result<EnergyBreakdown> {
    let inter = Interaction::new(&f.spec, kernel)?;
    let l1 = grid_l1(&f.spec, kernel, true)?;
    p_energy_with(&inter, &l1, f, kernel)
}

/// [`p_energy`] with a prebuilt interaction and grid L¹ norm.
pub fn p_energy_with(
    inter: &Interaction,
    l1: &GridL1,
    f: &DensityField,
    kernel: &Kernel,
) -> Result<EnergyBreakdown> {
    let w = f.weight();
    let complement: Vec<f64> = f.values.iter().map(|v| 1.0 - v).collect();
    let interior = w * w * dot(&f.values, &inter.apply(&complement));
    let rows = inter.row_sums();
    let exterior = w * f.values.iter().zip(&rows).map(|(v, r)| v * (l1.value - w * r)).sum::<f64>();
    let j_value = inter.j(&f.values);
    let mass = f.mass();
    let p_value = interior + exterior;
    let identity_residual = (p_value - (mass * l1.value - j_value)).abs();
    let out = EnergyBreakdown {
        j_value,
        p_value,
        mass,
        kernel_l1: l1.value,
        kernel_l1_exact: kernel.l1_norm(),
        exterior,
        identity_residual,
    };
    if [j_value, p_value].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("energy".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetPerimeter {
    /// `w² Σ_{x ∈ E, y ∈ window \ E} K(x - y)`.
    pub interior: f64,
    /// Interaction of `E` with grid points outside the window.
    pub exterior: f64,
    /// Part of `exterior` given by the analytic tail beyond the summation radius.
    pub exterior_tail: f64,
    pub total: f64,
}

/// Nonlocal perimeter of the set `{f = 1}`; values strictly between 0 and 1
/// are used as weights. Works for singular kernels since the diagonal never
/// contributes.
pub fn per_k_set(f: &DensityField, kernel: &Kernel, exterior_correction: bool) -> Result<SetPerimeter> {
    let inter = Interaction::off_diagonal(&f.spec, kernel)?;
    let w = f.weight();
    let complement: Vec<f64> = f.values.iter().map(|v| 1.0 - v).collect();
    let interior = w * w * dot(&f.values, &inter.apply(&complement));
    let (exterior, exterior_tail) = if exterior_correction {
        let l1 = grid_l1(&f.spec, kernel, false)?;
        let rows = inter.row_sums();
        let ext = w * f.values.iter().zip(&rows).map(|(v, r)| v * (l1.value - w * r)).sum::<f64>();
        (ext, w * f.values.iter().sum::<f64>() * l1.tail)
    } else {
        (0.0, 0.0)
    };
    Ok(SetPerimeter { interior, exterior, exterior_tail, total: interior + exterior })
}

/// Potential `V(x) = w Σ_y f(y) K(x - y)` on the window, and its lattice
/// periodization `Σ_g V(x + g)` at the central sample of every orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    /// `Σ_g V(x_o + g)` per orbit `o`, computed with the periodized kernel.
    pub orbit_sums: Vec<f64>,
    pub kernel_l1: f64,
    /// `w Σ f · tail_bound` of the periodized kernel.
    pub truncation_bound: f64,
}

impl PotentialField {
    /// `max_o |Σ_g V(x_o + g) - ‖K‖₁|`.
    pub fn periodization_deviation(&self) -> f64 {
        self.orbit_sums.iter().map(|s| (s - self.kernel_l1).abs()).fold(0.0, f64::max)
    }
}

pub fn potential(f: &DensityField, kernel: &Kernel, pk: &PeriodizedKernel) -> Result<PotentialField> {
    let inter = Interaction::new(&f.spec, kernel)?;
    let w = f.weight();
    let values: Vec<f64> = inter.apply(&f.values).into_iter().map(|v| w * v).collect();
    let spec = &f.spec;
    let orbits = spec.orbits();
    // Orbit masses F_o; the periodized kernel only sees y modulo the lattice.
    let masses: Vec<f64> = orbits.iter().map(|m| m.iter().map(|&i| f.values[i]).sum()).collect();
    let bases: Vec<Vec<f64>> = orbits
        .iter()
        .map(|m| spec.point(*m.iter().find(|&&i| spec.is_central(i)).expect("central member")))
        .collect();
    let orbit_sums: Vec<f64> = bases
        .par_iter()
        .map(|x| {
            w * bases
                .iter()
                .zip(&masses)
                .filter(|(_, &mass)| mass != 0.0)
                .map(|(y, mass)| {
                    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                    mass * pk.eval(&d)
                })
                .sum::<f64>()
        })
        .collect();
    Ok(PotentialField {
        spec: spec.clone(),
        values,
        orbit_sums,
        kernel_l1: kernel.l1_norm(),
        truncation_bound: f.mass() * pk.tail_bound,
    })
}
