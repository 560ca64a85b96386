//! Projected gradient ascent of `𝒥_K` over exact-mode densities, with
//! first- and second-order optimality diagnostics.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{project_exact, ConstraintMode, DensityField, GridSpec, BINARITY_TOL, CONSTRAINT_TOL};
use crate::energy::Interaction;
use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Consecutive small improvements needed to stop.
const STALL_WINDOW: usize = 10;
/// Candidate limit for the exhaustive oracle.
pub const ORACLE_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform `1/k` plus seeded noise, projected.
    Noise,
    /// Indicator of the central translate.
    Cell,
    /// Indicator of the Voronoi cell (closest-to-origin orbit member).
    Voronoi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// `None` selects `0.9 / (w² L)`.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub seed: u64,
    pub init: Init,
    /// Noise amplitude for [`Init::Noise`], relative to `1/k`.
    pub noise: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { step_size: None, max_iters: 5000, stop_tol: 1e-10, seed: 0, init: Init::Noise, noise: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub res_d: f64,
    pub res_s: f64,
    pub res_n: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.res_d.max(self.res_s).max(self.res_n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub j_trace: Vec<f64>,
    pub final_field: DensityField,
    pub residuals: Residuals,
    pub second_order_samples: Vec<f64>,
    pub binarity: f64,
    pub support_radius: f64,
    pub converged: bool,
    pub iterations: usize,
    pub step_size: f64,
    pub step_halvings: usize,
    /// `𝒥` of the thresholded final field.
    pub thresholded_j: f64,
}

impl OptimizationReport {
    pub fn final_j(&self) -> f64 {
        *self.j_trace.last().expect("trace starts with f0")
    }
}

/// Starting density for the solver.
pub fn initial_field(spec: &GridSpec, params: &SolverParams) -> DensityField {
    match params.init {
        Init::Cell => DensityField::indicator_of_cell(spec),
        Init::Voronoi => voronoi_indicator(spec),
        Init::Noise => {
            let k = spec.orbit_size() as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let values = (0..spec.num_points())
                .map(|_| (1.0 + params.noise * (2.0 * rng.gen::<f64>() - 1.0)) / k)
                .collect();
            let mut f = DensityField { spec: spec.clone(), values, mode: ConstraintMode::Exact };
            f.project();
            f
        }
    }
}

/// Per orbit, 1 at the member nearest the origin (smallest flat index on ties).
pub fn voronoi_indicator(spec: &GridSpec) -> DensityField {
    let mut values = vec![0.0; spec.num_points()];
    for members in spec.orbits() {
        let mut best = members[0];
        let mut best_r = crate::lattice::norm(&spec.point(best));
        for &i in &members[1..] {
            let r = crate::lattice::norm(&spec.point(i));
            if r < best_r - 1e-12 {
                best = i;
                best_r = r;
            }
        }
        values[best] = 1.0;
    }
    DensityField { spec: spec.clone(), values, mode: ConstraintMode::Exact }
}

/// Largest stable step `1 / (w² L)` with `L = max_x Σ_y |K(x - y)|`.
pub fn step_bound(inter: &Interaction) -> f64 {
    let w = inter.spec().weight();
    1.0 / (w * w * inter.max_abs_row_sum())
}

/// Projected gradient ascent `f ← P(f + τ ∇𝒥(f))`.
pub fn ascend(f0: &DensityField, kernel: &Kernel, params: &SolverParams) -> Result<OptimizationReport> {
    let inter = Interaction::new(&f0.spec, kernel)?;
    ascend_with(&inter, f0, kernel, params)
}

/// [`ascend`] with a prebuilt interaction operator.
pub fn ascend_with(
    inter: &Interaction,
    f0: &DensityField,
    kernel: &Kernel,
    params: &SolverParams,
) -> Result<OptimizationReport> {
    if f0.mode != ConstraintMode::Exact {
        return Err(Error::Infeasible("solver needs an exact-mode start".into()));
    }
    f0.check_invariants(1e-9)?;
    if !(params.stop_tol >= 0.0) {
        return Err(Error::InvalidParameter("solver.stop_tol must be nonnegative".into()));
    }
    let bound = step_bound(inter);
    let mut step = match params.step_size {
        Some(s) if !(s > 0.0 && s.is_finite()) => {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {s}")));
        }
        Some(s) if s > bound => return Err(Error::StepTooLarge { step: s, bound }),
        Some(s) => s,
        None => 0.9 * bound,
    };
    let nominal_step = step;
    let spec = &f0.spec;
    let orbits = spec.orbits();
    let w = spec.weight();

    let mut f = f0.values.clone();
    let mut kf = inter.apply(&f);
    let mut j = w * w * dot(&f, &kf);
    check_finite(j)?;
    let mut trace = vec![j];
    let mut stalled = 0;
    let mut converged = false;
    let mut halvings = 0;
    let mut iterations = 0;

    while iterations < params.max_iters {
        iterations += 1;
        let candidate = loop {
            let moved: Vec<f64> = f.iter().zip(&kf).map(|(v, g)| v + step * 2.0 * w * w * g).collect();
            let next = project_orbits(&orbits, &moved);
            let next_kf = inter.apply(&next);
            let next_j = w * w * dot(&next, &next_kf);
            check_finite(next_j)?;
            if next_j >= j - 1e-13 * j.abs().max(1.0) || step < 1e-12 * nominal_step {
                break (next, next_kf, next_j);
            }
            // Only reachable for kernels whose interaction matrix is indefinite.
            step *= 0.5;
            halvings += 1;
        };
        let (next, next_kf, next_j) = candidate;
        if next_j < j - 1e-12 {
            break;
        }
        let gain = (next_j - j) / j.abs().max(f64::MIN_POSITIVE);
        let unchanged = next == f;
        f = next;
        kf = next_kf;
        j = next_j;
        trace.push(j);
        if unchanged {
            converged = true;
            break;
        }
        stalled = if gain < params.stop_tol { stalled + 1 } else { 0 };
        if stalled >= STALL_WINDOW {
            converged = true;
            break;
        }
    }

    let final_field = DensityField { spec: spec.clone(), values: f, mode: ConstraintMode::Exact };
    final_field.check_invariants(CONSTRAINT_TOL * spec.orbit_size() as f64)?;
    let potential: Vec<f64> = kf.iter().map(|v| w * v).collect();
    let residuals = first_order_residuals(&final_field, &potential);
    let second_order_samples = second_order_probe(&final_field, kernel, 32, params.seed)?;
    let thresholded = final_field.threshold();
    let thresholded_j = inter.j(&thresholded.values);
    Ok(OptimizationReport {
        j_trace: trace,
        binarity: final_field.binarity_deficit(),
        support_radius: final_field.support_radius(),
        final_field,
        residuals,
        second_order_samples,
        converged,
        iterations,
        step_size: step,
        step_halvings: halvings,
        thresholded_j,
    })
}

/// Runs `starts` solves with seeds `seed, seed+1, ...` concurrently and
/// returns all reports plus the index of the best thresholded `𝒥`
/// (lowest index on ties).
pub fn ascend_multistart(
    spec: &GridSpec,
    kernel: &Kernel,
    params: &SolverParams,
    starts: usize,
) -> Result<(Vec<OptimizationReport>, usize)> {
    let inter = Interaction::new(spec, kernel)?;
    let starts = starts.max(1);
    let reports = (0..starts)
        .into_par_iter()
        .map(|i| {
            let p = SolverParams { seed: params.seed.wrapping_add(i as u64), ..params.clone() };
            let f0 = initial_field(spec, &p);
            ascend_with(&inter, &f0, kernel, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.thresholded_j > reports[best].thresholded_j {
            best = i;
        }
    }
    Ok((reports, best))
}

fn project_orbits(orbits: &[Vec<usize>], values: &[f64]) -> Vec<f64> {
    let projected: Vec<Vec<f64>> = orbits
        .par_iter()
        .map(|m| {
            let v: Vec<f64> = m.iter().map(|&i| values[i]).collect();
            project_exact(&v).expect("orbits are nonempty")
        })
        .collect();
    let mut out = vec![0.0; values.len()];
    for (m, p) in orbits.iter().zip(projected) {
        for (&i, v) in m.iter().zip(p) {
            out[i] = v;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(j: f64) -> Result<()> {
    if j.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite("energy".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    S,
    N,
    D,
}

fn classify(v: f64) -> Class {
    if v >= 1.0 - BINARITY_TOL {
        Class::S
    } else if v <= BINARITY_TOL {
        Class::N
    } else {
        Class::D
    }
}

/// Discrete versions of the conditions (D), (S), (N) on potential values
/// `V(x)` over each orbit.
pub fn first_order_residuals(f: &DensityField, potential: &[f64]) -> Residuals {
    let mut r = Residuals { res_d: 0.0, res_s: 0.0, res_n: 0.0 };
    for members in f.spec.orbits() {
        for &x in &members {
            let cx = classify(f.values[x]);
            for &y in &members {
                if x == y {
                    continue;
                }
                let cy = classify(f.values[y]);
                let diff = potential[y] - potential[x];
                match cx {
                    Class::D if cy == Class::D => r.res_d = r.res_d.max(diff.abs()),
                    Class::S => r.res_s = r.res_s.max(diff),
                    Class::N if cy != Class::N => r.res_n = r.res_n.max(-diff),
                    _ => {}
                }
            }
        }
    }
    r
}

/// Second variation `w² Σ K(u - v) ψ(u) ψ(v) = 2 w² (K(0) - K(g))` along
/// random two-point variations `ψ = δ_x - δ_{x+g}` inside `D`.
pub fn second_order_probe(f: &DensityField, kernel: &Kernel, trials: usize, seed: u64) -> Result<Vec<f64>> {
    kernel.require_integrable("second-order probe")?;
    let pairs: Vec<(usize, usize)> = f
        .spec
        .orbits()
        .iter()
        .flat_map(|m| {
            let d: Vec<usize> = m.iter().cloned().filter(|&i| classify(f.values[i]) == Class::D).collect();
            let mut out = Vec::new();
            for a in 0..d.len() {
                for b in 0..d.len() {
                    if a != b {
                        out.push((d[a], d[b]));
                    }
                }
            }
            out
        })
        .collect();
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = f.weight();
    (0..trials)
        .map(|_| {
            let (x, y) = pairs[rng.gen_range(0..pairs.len())];
            let g: Vec<f64> = f.spec.point(y).iter().zip(f.spec.point(x)).map(|(a, b)| a - b).collect();
            Ok(2.0 * w * w * (kernel.eval_radius(0.0)? - kernel.eval(&g)?))
        })
        .collect()
}

/// Best binary exact-mode field by enumerating one member per orbit.
pub fn exhaustive_binary_oracle(spec: &GridSpec, kernel: &Kernel) -> Result<(DensityField, f64)> {
    let k = spec.orbit_size();
    let orbits = spec.orbits();
    let candidates = (k as f64).powi(orbits.len() as i32);
    if candidates > ORACLE_LIMIT {
        return Err(Error::InstanceTooLarge { candidates, bound: ORACLE_LIMIT });
    }
    let inter = Interaction::new(spec, kernel)?;
    let w = spec.weight();
    let m = orbits.len();
    // Pairwise kernel values between chosen members, indexed by (orbit, member).
    let choose = |code: usize| -> Vec<usize> {
        let mut rem = code;
        (0..m)
            .map(|o| {
                let c = rem % k;
                rem /= k;
                orbits[o][c]
            })
            .collect()
    };
    let (best_code, best_j) = (0..candidates as usize)
        .into_par_iter()
        .map(|code| {
            let pts = choose(code);
            let mut s = 0.0;
            for &a in &pts {
                for &b in &pts {
                    s += inter.entry(a, b);
                }
            }
            (code, w * w * s)
        })
        .reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    let mut values = vec![0.0; spec.num_points()];
    for i in choose(best_code) {
        values[i] = 1.0;
    }
    let field = DensityField { spec: spec.clone(), values, mode: ConstraintMode::Exact };
    Ok((field, best_j))
}
