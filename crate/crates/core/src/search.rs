//! Outer search over planar lattices of fixed covolume.
//!
//! Each moduli point is evaluated by the multistart density solver; the
//! perimeter of the best thresholded tile is `m ‖K‖₁ - 𝒥`. After the grid
//! sweep, the incumbent is refined by golden-section steps along `a` and `b`
//! inside the reduced moduli cell.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::GridSpec;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::lattice::{moduli_grid, Lattice, ModuliPoint2D, MODULI_A_MIN_FRACTION};
use crate::optimizer::{ascend_multistart, OptimizationReport, SolverParams};

/// Default nondegeneracy floor relative to `√m`.
pub const NONDEGENERACY_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub grid_steps: usize,
    pub refine_rounds: usize,
    /// Solver starts per moduli point.
    pub starts: usize,
    pub samples_per_axis: usize,
    pub window_hops: usize,
    pub solver: SolverParams,
    /// Wall-clock budget for the refinement phase, in seconds.
    pub time_budget: Option<f64>,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            grid_steps: 4,
            refine_rounds: 2,
            starts: 3,
            samples_per_axis: 8,
            window_hops: 1,
            solver: SolverParams::default(),
            time_budget: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub moduli: ModuliPoint2D,
    pub covolume: f64,
    pub j_best: f64,
    pub per_k: f64,
    pub binarity: f64,
    pub converged: bool,
    pub refinement: bool,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_lattice: Lattice,
    pub best_moduli: ModuliPoint2D,
    pub best_report: OptimizationReport,
    pub landscape: Vec<LandscapeRow>,
    /// Smallest minimum distance among visited lattices.
    pub nondegeneracy: f64,
    pub nondegenerate: bool,
    /// Incumbent `Per_K` after the sweep and after each accepted refinement.
    pub incumbent_trace: Vec<f64>,
}

impl SearchResult {
    pub fn write_landscape_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_landscape_csv(&self.landscape, out)
    }
}

pub fn write_landscape_csv<W: Write>(rows: &[LandscapeRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "a,b,covolume,j_best,per_k,binarity,converged")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.moduli.a, r.moduli.b, r.covolume, r.j_best, r.per_k, r.binarity, r.converged
        )?;
    }
    Ok(())
}

struct Evaluation {
    row: LandscapeRow,
    report: OptimizationReport,
    lattice: Lattice,
}

fn evaluate(point: ModuliPoint2D, kernel: &Kernel, params: &SearchParams, refinement: bool) -> Result<Evaluation> {
    let lattice = point.to_lattice()?;
    let spec = GridSpec::new(lattice.clone(), params.samples_per_axis, params.window_hops)?;
    let (mut reports, best) = ascend_multistart(&spec, kernel, &params.solver, params.starts)?;
    let report = reports.swap_remove(best);
    let j_best = report.thresholded_j;
    let row = LandscapeRow {
        moduli: point,
        covolume: lattice.covolume(),
        j_best,
        per_k: lattice.covolume() * kernel.l1_norm() - j_best,
        binarity: report.binarity,
        converged: report.converged,
        refinement,
    };
    Ok(Evaluation { row, report, lattice })
}

/// Grid sweep over the reduced moduli cell followed by coordinate refinement.
pub fn search_lattices(m: f64, kernel: &Kernel, params: &SearchParams) -> Result<SearchResult> {
    if kernel.dim() != 2 {
        return Err(Error::UnsupportedDimension { dim: kernel.dim(), context: "lattice search" });
    }
    kernel.require_integrable("lattice search")?;
    let points = moduli_grid(m, params.grid_steps)?;
    let evals = points
        .par_iter()
        .map(|p| evaluate(*p, kernel, params, false))
        .collect::<Result<Vec<_>>>()?;

    let mut landscape: Vec<LandscapeRow> = evals.iter().map(|e| e.row).collect();
    let mut visited: Vec<Lattice> = evals.iter().map(|e| e.lattice.clone()).collect();
    let mut best = evals
        .into_iter()
        .reduce(|a, b| if b.row.per_k < a.row.per_k { b } else { a })
        .ok_or(Error::NoSamples)?;
    let mut trace = vec![best.row.per_k];

    let start = Instant::now();
    let out_of_time = || params.time_budget.is_some_and(|t| start.elapsed().as_secs_f64() > t);
    let a_lo = MODULI_A_MIN_FRACTION * m.sqrt();
    let a_hi = ModuliPoint2D::hexagonal(m).a;
    let mut half_width = (a_hi - a_lo) / params.grid_steps.max(1) as f64;

    for _ in 0..params.refine_rounds {
        for axis in 0..2 {
            if out_of_time() {
                break;
            }
            let centre = best.row.moduli;
            let (lo, hi) = match axis {
                0 => ((centre.a - half_width).max(a_lo), (centre.a + half_width).min(a_hi)),
                _ => {
                    let b_lo = ModuliPoint2D::b_min(centre.a, m);
                    ((centre.b - half_width).max(b_lo), (centre.b + half_width).min(centre.a / 2.0))
                }
            };
            if !(hi > lo) {
                continue;
            }
            let make = |t: f64| -> ModuliPoint2D {
                let (a, b) = if axis == 0 { (t, centre.b) } else { (centre.a, t) };
                let b = b.clamp(ModuliPoint2D::b_min(a, m), a / 2.0);
                ModuliPoint2D { a, b, m }
            };
            let mut cache: Vec<Evaluation> = Vec::new();
            let mut objective = |t: f64| -> Result<f64> {
                let e = evaluate(make(t), kernel, params, true)?;
                let v = e.row.per_k;
                cache.push(e);
                Ok(v)
            };
            golden_section(&mut objective, lo, hi, 5)?;
            for e in cache {
                landscape.push(e.row);
                visited.push(e.lattice.clone());
                if e.row.per_k < best.row.per_k {
                    best = e;
                    trace.push(best.row.per_k);
                }
            }
        }
        half_width *= 0.5;
    }

    let j_values: Vec<f64> = landscape.iter().map(|r| r.j_best).collect();
    let nondegeneracy = visited.iter().map(|l| l.min_distance()).fold(f64::INFINITY, f64::min);
    let nondegenerate = nondegeneracy_check(&visited, &j_values, NONDEGENERACY_FRACTION * m.sqrt())?;
    Ok(SearchResult {
        best_lattice: best.lattice,
        best_moduli: best.row.moduli,
        best_report: best.report,
        landscape,
        nondegeneracy,
        nondegenerate,
        incumbent_trace: trace,
    })
}

/// Golden-section minimization with a fixed number of interior evaluations.
fn golden_section(f: &mut dyn FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64, evaluations: usize) -> Result<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 2..evaluations {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { x1 } else { x2 })
}

/// True iff every `𝒥` is positive and no lattice is shorter than `floor`.
pub fn nondegeneracy_check(visited: &[Lattice], j_values: &[f64], floor: f64) -> Result<bool> {
    if visited.is_empty() || j_values.is_empty() {
        return Err(Error::NoSamples);
    }
    if visited.len() != j_values.len() {
        return Err(Error::InvalidParameter("lattice and energy lists differ in length".into()));
    }
    let min_j = j_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_dist = visited.iter().map(|l| l.min_distance()).fold(f64::INFINITY, f64::min);
    Ok(min_j > 0.0 && min_dist >= floor)
}
