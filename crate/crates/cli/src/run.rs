//! Command orchestration and report emission.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};
use tileopt_core::density::{DensityField, GridSpec};
use tileopt_core::energy::{p_energy, per_k_set};
use tileopt_core::kernel::{AssumptionFlags, Kernel, KernelFamily, StrictClause};
use tileopt_core::lattice::{Lattice, ModuliPoint2D, VoronoiCell};
use tileopt_core::optimizer::{ascend_multistart, voronoi_indicator, Init, OptimizationReport, SolverParams};
use tileopt_core::polygon2d::{hexagon_sweep, per_k_polygon, QuadratureParams, SweepSpec};
use tileopt_core::search::{search_lattices, SearchParams};

use crate::config::Config;
use crate::error::CliError;

/// Longest `j_trace` written to a report.
pub const TRACE_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Check,
    Perimeter,
    Optimize,
    Search,
    HexagonSweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Perimeter => "perimeter",
            Command::Optimize => "optimize",
            Command::Search => "search",
            Command::HexagonSweep => "hexagon-sweep",
        }
    }
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config: &'a BTreeMap<String, String>,
    kernel: &'a Kernel,
    assumptions: &'a AssumptionFlags,
    result: Value,
    /// The only field allowed to differ between identical runs.
    timing: Timing,
}

#[derive(Serialize)]
struct Timing {
    wall_seconds: f64,
    finished_unix_seconds: f64,
}

pub fn build_kernel(cfg: &Config, dim: usize) -> Result<Kernel, CliError> {
    let family = match cfg.require_str("kernel.family")? {
        "gaussian" => KernelFamily::Gaussian { alpha: cfg.require_f64("kernel.alpha")? },
        "exponential" => KernelFamily::Exponential { beta: cfg.require_f64("kernel.beta")? },
        "indicator" => KernelFamily::Indicator { radius: cfg.require_f64("kernel.r")? },
        "fractional" => KernelFamily::Fractional { c: cfg.require_f64("kernel.c")?, s: cfg.require_f64("kernel.s")? },
        "regularized_fractional" => KernelFamily::RegularizedFractional {
            c: cfg.require_f64("kernel.c")?,
            s: cfg.require_f64("kernel.s")?,
            delta: cfg.require_f64("kernel.delta")?,
        },
        "table" => KernelFamily::Table {
            dr: cfg.require_f64("kernel.dr")?,
            values: cfg
                .f64_list("kernel.values")?
                .ok_or_else(|| CliError::Validation("missing required key `kernel.values`".into()))?,
        },
        other => {
            return Err(CliError::Validation(format!(
                "unknown kernel family `{other}`; expected gaussian, exponential, indicator, fractional, \
                 regularized_fractional or table"
            )))
        }
    };
    Ok(Kernel::new(family, dim)?)
}

/// Lattice from `lattice.basis` or the moduli `lattice.a`, `lattice.b`, `lattice.m`.
pub fn build_lattice(cfg: &Config) -> Result<Lattice, CliError> {
    let moduli = ["lattice.a", "lattice.b", "lattice.m"].iter().any(|k| cfg.has(k));
    if moduli {
        if cfg.has("lattice.basis") {
            return Err(CliError::Validation("give either `lattice.basis` or lattice moduli, not both".into()));
        }
        let point = ModuliPoint2D {
            a: cfg.require_f64("lattice.a")?,
            b: cfg.require_f64("lattice.b")?,
            m: cfg.f64("lattice.m")?.unwrap_or(1.0),
        };
        return Ok(point.to_lattice()?);
    }
    let basis = cfg.matrix("lattice.basis")?.unwrap_or_else(|| vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    Ok(Lattice::new(basis)?)
}

fn grid(cfg: &Config, lattice: Lattice) -> Result<GridSpec, CliError> {
    Ok(GridSpec::new(lattice, cfg.usize("grid.n")?, cfg.usize("grid.R")?)?)
}

fn solver_params(cfg: &Config, seed: u64) -> Result<SolverParams, CliError> {
    let init = match cfg.require_str("solver.init")? {
        "noise" => Init::Noise,
        "cell" => Init::Cell,
        "voronoi" => Init::Voronoi,
        other => {
            return Err(CliError::Validation(format!(
                "unknown `solver.init` value `{other}`; expected noise, cell or voronoi"
            )))
        }
    };
    Ok(SolverParams {
        step_size: cfg.f64("solver.step")?,
        max_iters: cfg.usize("solver.max_iters")?,
        stop_tol: cfg.require_f64("solver.stop_tol")?,
        seed,
        init,
        noise: cfg.require_f64("solver.noise")?,
    })
}

fn quad_params(cfg: &Config) -> Result<QuadratureParams, CliError> {
    Ok(QuadratureParams { order: cfg.usize("quad.order")?, panels: cfg.usize("quad.panels")? })
}

/// Keeps the first entry, every `stride`-th entry and the last.
pub fn decimate(trace: &[f64], limit: usize) -> (Vec<f64>, usize) {
    if trace.len() <= limit {
        return (trace.to_vec(), 1);
    }
    let stride = trace.len().div_ceil(limit - 1);
    let mut out: Vec<f64> = trace.iter().step_by(stride).copied().collect();
    if (trace.len() - 1) % stride != 0 {
        out.push(*trace.last().expect("nonempty"));
    }
    (out, stride)
}

fn grid_json(spec: &GridSpec) -> Value {
    json!({
        "n": spec.samples_per_axis,
        "R": spec.window_hops,
        "num_points": spec.num_points(),
        "weight": spec.weight(),
        "window_measure": spec.window_measure(),
    })
}

fn lattice_json(lattice: &Lattice) -> Value {
    json!({
        "basis": lattice.basis(),
        "covolume": lattice.covolume(),
        "min_distance": lattice.min_distance(),
    })
}

fn solve_json(report: &OptimizationReport, kernel: &Kernel) -> Result<Value, CliError> {
    let (trace, stride) = decimate(&report.j_trace, TRACE_LIMIT);
    let f = &report.final_field;
    let energy = p_energy(f, kernel)?;
    let second_min = report.second_order_samples.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(json!({
        "j_trace": trace,
        "j_trace_stride": stride,
        "final_j": report.final_j(),
        "thresholded_j": report.thresholded_j,
        "iterations": report.iterations,
        "converged": report.converged,
        "step_size": report.step_size,
        "step_halvings": report.step_halvings,
        "residuals": report.residuals,
        "residual_max": report.residuals.max(),
        "second_order_count": report.second_order_samples.len(),
        "second_order_min": if report.second_order_samples.is_empty() { None } else { Some(second_min) },
        "binarity": report.binarity,
        "binarity_fraction": report.binarity / f.spec.window_measure(),
        "is_binary": f.is_binary(),
        "support_radius": report.support_radius,
        "window_adequate": f.window_adequate(),
        "energy": energy,
    }))
}

fn write_density(path: &Path, f: &DensityField) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    f.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn check(cfg: &Config, kernel: &Kernel, flags: &AssumptionFlags) -> Result<Value, CliError> {
    println!("kernel: {}", kernel.name());
    println!("integrable: {}", flags.integrable);
    println!("satisfies_frac: {}", flags.satisfies_frac);
    println!("satisfies_int: {}", flags.satisfies_int);
    println!("strictly_decreasing: {}", flags.strictly_decreasing);
    let clause = match flags.strict_clause {
        StrictClause::Certified => "certified",
        StrictClause::Unverified => "unverified",
        StrictClause::NotApplicable => "not_applicable",
    };
    println!("strict_clause: {clause}");
    for m in &flags.messages {
        println!("note: {m}");
    }
    let lattice = build_lattice(cfg)?;
    Ok(json!({
        "l1_norm": kernel.is_integrable().then(|| kernel.l1_norm()),
        "support_radius": kernel.support_radius(),
        "lattice": lattice_json(&lattice),
    }))
}

fn perimeter(cfg: &Config, kernel: &Kernel, lattice: Lattice, out: &Path) -> Result<Value, CliError> {
    let spec = grid(cfg, lattice.clone())?;
    let field = match cfg.require_str("perimeter.set")? {
        "cell" => DensityField::indicator_of_cell(&spec),
        "voronoi" => voronoi_indicator(&spec),
        other => {
            return Err(CliError::Validation(format!(
                "unknown `perimeter.set` value `{other}`; expected cell or voronoi"
            )))
        }
    };
    let set = per_k_set(&field, kernel, cfg.bool("perimeter.exterior")?)?;
    if !set.total.is_finite() {
        return Err(CliError::Numeric("non-finite perimeter".into()));
    }
    let energy = if kernel.is_integrable() { Some(p_energy(&field, kernel)?) } else { None };
    let polygon = match lattice.voronoi_cell()? {
        VoronoiCell::Polygon(p) => {
            let per = per_k_polygon(&p, kernel, &quad_params(cfg)?)?;
            Some(json!({ "cell": p, "per_k": per }))
        }
        VoronoiCell::Interval(..) => None,
    };
    write_density(&out.join("density.csv"), &field)?;
    Ok(json!({
        "grid": grid_json(&spec),
        "lattice": lattice_json(&lattice),
        "mass": field.mass(),
        "set_perimeter": set,
        "energy": energy,
        "voronoi_polygon": polygon,
    }))
}

fn optimize(cfg: &Config, kernel: &Kernel, lattice: Lattice, out: &Path) -> Result<Value, CliError> {
    let seed = cfg.seed()?;
    let spec = grid(cfg, lattice.clone())?;
    let params = solver_params(cfg, seed)?;
    let starts = cfg.usize("solver.starts")?.max(1);
    let (reports, best) = ascend_multistart(&spec, kernel, &params, starts)?;
    let summary: Vec<Value> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "seed": seed.wrapping_add(i as u64),
                "final_j": r.final_j(),
                "thresholded_j": r.thresholded_j,
                "converged": r.converged,
                "iterations": r.iterations,
            })
        })
        .collect();
    let report = &reports[best];
    write_density(&out.join("density.csv"), &report.final_field)?;
    Ok(json!({
        "grid": grid_json(&spec),
        "lattice": lattice_json(&lattice),
        "solver": params,
        "starts": summary,
        "best_start": best,
        "best": solve_json(report, kernel)?,
    }))
}

fn search(cfg: &Config, kernel: &Kernel, out: &Path) -> Result<Value, CliError> {
    let seed = cfg.seed()?;
    let m = cfg.require_f64("search.m")?;
    let params = SearchParams {
        grid_steps: cfg.usize("search.steps")?,
        refine_rounds: cfg.usize("search.refine_rounds")?,
        starts: cfg.usize("solver.starts")?.max(1),
        samples_per_axis: cfg.usize("grid.n")?,
        window_hops: cfg.usize("grid.R")?,
        solver: solver_params(cfg, seed)?,
        time_budget: cfg.f64("search.time_budget")?,
    };
    let result = search_lattices(m, kernel, &params)?;
    let mut w = BufWriter::new(File::create(out.join("landscape.csv"))?);
    result.write_landscape_csv(&mut w)?;
    w.flush()?;
    write_density(&out.join("density.csv"), &result.best_report.final_field)?;
    let best_row = result
        .landscape
        .iter()
        .filter(|r| r.moduli == result.best_moduli)
        .map(|r| r.per_k)
        .fold(f64::INFINITY, f64::min);
    Ok(json!({
        "m": m,
        "params": params,
        "best_moduli": result.best_moduli,
        "best_lattice": lattice_json(&result.best_lattice),
        "best_per_k": best_row,
        "best_is_hexagonal": result.best_moduli.is_hexagonal(1e-9),
        "best_is_square": result.best_moduli.is_square(1e-9),
        "incumbent_trace": result.incumbent_trace,
        "landscape_rows": result.landscape.len(),
        "nondegeneracy": result.nondegeneracy,
        "nondegenerate": result.nondegenerate,
        "best": solve_json(&result.best_report, kernel)?,
    }))
}

fn sweep(cfg: &Config, kernel: &Kernel, out: &Path) -> Result<Value, CliError> {
    let random_samples = cfg.usize("sweep.random")?;
    let seed = if random_samples > 0 { cfg.seed()? } else { cfg.u64("seed")?.unwrap_or(0) };
    let spec = SweepSpec { steps: cfg.usize("sweep.steps")?, random_samples, seed, quad: quad_params(cfg)? };
    let table = hexagon_sweep(kernel, &spec)?;
    let mut w = BufWriter::new(File::create(out.join("sweep.csv"))?);
    table.write_csv(&mut w)?;
    w.flush()?;
    let regular = table.regular().cloned();
    let square = table.square().cloned();
    // Regular hexagon beats every other sample by twice the combined error.
    let regular_is_minimal = regular.as_ref().map(|reg| {
        table
            .rows
            .iter()
            .filter(|r| !r.is_regular_hexagon)
            .all(|r| reg.per_k <= r.per_k - 2.0 * (reg.error_estimate + r.error_estimate))
    });
    let below_square = match (&regular, &square) {
        (Some(r), Some(s)) => Some(r.per_k < s.per_k),
        _ => None,
    };
    Ok(json!({
        "spec": spec,
        "samples": table.rows.len(),
        "best": table.best(),
        "regular": regular,
        "square": square,
        "regular_is_minimal": regular_is_minimal,
        "regular_below_square": below_square,
    }))
}

/// Runs one command and writes `<out>/report.json`; returns the report path.
pub fn run(command: Command, cfg: &Config) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let threads = cfg.usize("threads")?;
    // A second call in the same process keeps the existing pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();

    let lattice = match command {
        Command::Search | Command::HexagonSweep => None,
        _ => Some(build_lattice(cfg)?),
    };
    let dim = lattice.as_ref().map_or(2, Lattice::dim);
    let kernel = build_kernel(cfg, dim)?;
    let flags = kernel.check_assumptions();
    let out = PathBuf::from(cfg.require_str("out")?);
    fs::create_dir_all(&out)?;

    let result = match command {
        Command::Check => check(cfg, &kernel, &flags)?,
        Command::Perimeter => perimeter(cfg, &kernel, lattice.expect("lattice"), &out)?,
        Command::Optimize => optimize(cfg, &kernel, lattice.expect("lattice"), &out)?,
        Command::Search => search(cfg, &kernel, &out)?,
        Command::HexagonSweep => sweep(cfg, &kernel, &out)?,
    };
    let finished = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let report = Report {
        command: command.name(),
        config: cfg.resolved(),
        kernel: &kernel,
        assumptions: &flags,
        result,
        timing: Timing { wall_seconds: started.elapsed().as_secs_f64(), finished_unix_seconds: finished },
    };
    let path = out.join("report.json");
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}
