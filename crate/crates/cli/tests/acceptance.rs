//! Acceptance criteria 1 to 11. Each test prints one `PASS`/`FAIL` line.
//!
//! Run with `cargo test -p tileopt --test acceptance -- --nocapture`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tileopt_core::density::{project_exact, DensityField, GridSpec, CONSTRAINT_TOL};
use tileopt_core::energy::{p_energy, potential, Interaction};
use tileopt_core::kernel::Kernel;
use tileopt_core::lattice::Lattice;
use tileopt_core::optimizer::{
    ascend, ascend_multistart, exhaustive_binary_oracle, initial_field, second_order_probe, SolverParams,
};
use tileopt_core::polygon2d::{
    hexagon_sweep, per_k_polygon, random_hexagon, regular_hexagon, two_step_regularize, HexParams,
    QuadratureParams, SweepSpec, SweepTable,
};

fn verdict(id: u32, name: &str, pass: bool, elapsed: Duration, limit: Duration, detail: String) {
    let in_time = elapsed <= limit;
    let status = if pass && in_time { "PASS" } else { "FAIL" };
    println!(
        "criterion {id:>2} [{name}]: {status} ({detail}; {:.2}s of {}s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(pass, "criterion {id} failed: {detail}");
    assert!(in_time, "criterion {id} exceeded its time budget");
}

fn z2_grid(n: usize) -> GridSpec {
    GridSpec::new(Lattice::integer(2).unwrap(), n, 1).unwrap()
}

fn gaussian2() -> Kernel {
    Kernel::gaussian(1.0, 2).unwrap()
}

fn tileopt(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tileopt")).args(args).output().expect("binary runs")
}

fn read_report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn criterion_01_energy_identity() {
    let t = Instant::now();
    let spec = z2_grid(8);
    let k = gaussian2();
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let e = p_energy(&DensityField::random(&spec, seed), &k).unwrap();
        let gap = (e.p_value - (e.mass * e.kernel_l1 - e.j_value)).abs();
        worst = worst.max(gap / e.p_value.abs().max(1.0));
    }
    let detail = format!("max relative gap {worst:.3e}, bound 1e-10");
    verdict(1, "energy identity", worst <= 1e-10, t.elapsed(), Duration::from_secs(30), detail);
}

#[test]
fn criterion_02_gradient() {
    let t = Instant::now();
    let spec = z2_grid(8);
    let inter = Interaction::new(&spec, &gaussian2()).unwrap();
    let f = DensityField::random(&spec, 7).values;
    let grad = inter.gradient(&f);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let i = rng.gen_range(0..f.len());
        let (mut up, mut down) = (f.clone(), f.clone());
        up[i] += h;
        down[i] -= h;
        let fd = (inter.j(&up) - inter.j(&down)) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / grad[i].abs());
    }
    let detail = format!("max relative error {worst:.3e}, bound 1e-6");
    verdict(2, "gradient", worst <= 1e-6, t.elapsed(), Duration::from_secs(30), detail);
}

/// Exhaustive active-set search for the projection onto the capped simplex:
/// each coordinate is pinned at 0, pinned at 1, or free with a common shift.
fn active_set_projection(v: &[f64]) -> Vec<f64> {
    let k = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for code in 0..3usize.pow(k as u32) {
        let state: Vec<usize> = (0..k).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let ones = state.iter().filter(|&&s| s == 1).count() as f64;
        let free: Vec<usize> = (0..k).filter(|&i| state[i] == 2).collect();
        let mut x: Vec<f64> = state.iter().map(|&s| if s == 1 { 1.0 } else { 0.0 }).collect();
        if free.is_empty() {
            if ones != 1.0 {
                continue;
            }
        } else {
            let shift = (free.iter().map(|&i| v[i]).sum::<f64>() - (1.0 - ones)) / free.len() as f64;
            for &i in &free {
                x[i] = v[i] - shift;
            }
            if free.iter().any(|&i| !(0.0..=1.0).contains(&x[i])) {
                continue;
            }
        }
        let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    best.expect("the simplex is nonempty").1
}

#[test]
fn criterion_03_projection_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.gen_range(1..=4);
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.5..2.5)).collect();
        let p = project_exact(&v).unwrap();
        let q = active_set_projection(&v);
        worst = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let detail = format!("max error {worst:.3e}, bound 1e-8");
    verdict(3, "projection oracle", worst <= 1e-8, t.elapsed(), Duration::from_secs(10), detail);
}

#[test]
fn criterion_04_monotone_ascent() {
    let t = Instant::now();
    let spec = z2_grid(8);
    let k = gaussian2();
    let checkpoints = [1usize, 10, 100, 1000];
    let mut worst_drop: f64 = 0.0;
    let mut infeasible = 0;
    let mut trace_mismatch: f64 = 0.0;
    for seed in 0..10 {
        let params = SolverParams { seed, max_iters: 5000, ..Default::default() };
        let f0 = initial_field(&spec, &params);
        if f0.check_invariants(CONSTRAINT_TOL).is_err() {
            infeasible += 1;
        }
        let full = ascend(&f0, &k, &params).unwrap();
        for w in full.j_trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        if full.final_field.check_invariants(CONSTRAINT_TOL).is_err() {
            infeasible += 1;
        }
        // Deterministic restarts stopped early reproduce the intermediate iterates.
        for &c in checkpoints.iter().filter(|&&c| c < full.iterations) {
            let part = ascend(&f0, &k, &SolverParams { max_iters: c, ..params.clone() }).unwrap();
            if part.final_field.check_invariants(CONSTRAINT_TOL).is_err() {
                infeasible += 1;
            }
            trace_mismatch = trace_mismatch.max((part.final_j() - full.j_trace[part.iterations]).abs());
        }
    }
    let pass = worst_drop <= 1e-12 && infeasible == 0 && trace_mismatch == 0.0;
    let detail = format!(
        "largest per-step decrease {worst_drop:.3e}, infeasible checkpoints {infeasible}, \
         checkpoint mismatch {trace_mismatch:.1e}"
    );
    verdict(4, "monotone ascent", pass, t.elapsed(), Duration::from_secs(300), detail);
}

#[test]
fn criterion_05_desk_scale_optimality() {
    let t = Instant::now();
    let spec = GridSpec::new(Lattice::integer(1).unwrap(), 4, 1).unwrap();
    let k = Kernel::exponential(1.0, 1).unwrap();
    let (_, oracle_j) = exhaustive_binary_oracle(&spec, &k).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let params = SolverParams { seed, ..Default::default() };
        let report = ascend(&initial_field(&spec, &params), &k, &params).unwrap();
        worst = worst.max((report.thresholded_j - oracle_j).abs());
    }
    let detail = format!("oracle J {oracle_j:.12}, max gap {worst:.3e}, bound 1e-9");
    verdict(5, "desk-scale optimality", worst <= 1e-9, t.elapsed(), Duration::from_secs(60), detail);
}

#[test]
fn criterion_06_binarity_dichotomy() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut worst_fraction: f64 = 0.0;
    for seed in ["1", "2", "3"] {
        let out = dir.path().join(format!("g{seed}"));
        let o = tileopt(&[
            "optimize", "--kernel.family", "gaussian", "--kernel.alpha", "1", "--seed", seed, "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        let r = read_report(&out);
        worst_fraction = worst_fraction.max(r["result"]["best"]["binarity_fraction"].as_f64().unwrap());
    }
    let out = dir.path().join("indicator");
    let o = tileopt(&[
        "optimize", "--kernel.family", "indicator", "--kernel.r", "0.6", "--seed", "1", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_report(&out);
    let flagged = r["assumptions"]["strict_clause"] == "unverified"
        && r["assumptions"]["messages"]
            .as_array()
            .unwrap()
            .iter()
            .any(|m| m.as_str().unwrap().contains("strict clause unverified"));
    let reported = r["result"]["best"]["binarity"].is_number();
    let pass = worst_fraction <= 0.01 && flagged && reported;
    let detail = format!(
        "gaussian max deficit fraction {worst_fraction:.3e} (bound 1e-2), indicator flagged {flagged}, \
         indicator binarity reported {reported}"
    );
    verdict(6, "binarity dichotomy", pass, t.elapsed(), Duration::from_secs(300), detail);
}

#[test]
fn criterion_07_optimality_conditions() {
    let t = Instant::now();
    let spec = z2_grid(8);
    let k = gaussian2();
    let bound = 1e-3 * k.l1_norm();
    let mut worst_res: f64 = 0.0;
    let mut converged = 0;
    for seed in 0..5 {
        let params = SolverParams { seed, ..Default::default() };
        let (reports, best) = ascend_multistart(&spec, &k, &params, 1).unwrap();
        let r = &reports[best];
        if r.converged {
            converged += 1;
            worst_res = worst_res.max(r.residuals.max());
        }
    }

    // Second variation on a field with a full diffuse set.
    let uniform = DensityField::uniform(&spec);
    let probes = second_order_probe(&uniform, &k, 500, 9).unwrap();
    let w = spec.weight();
    let inter = Interaction::new(&spec, &k).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut closed_form_gap: f64 = 0.0;
    for _ in 0..200 {
        let orbit = spec.orbit_members(rng.gen_range(0..spec.num_orbits()));
        let (x, y) = (orbit[rng.gen_range(0..orbit.len())], orbit[rng.gen_range(0..orbit.len())]);
        let quadratic = w * w * (inter.entry(x, x) + inter.entry(y, y) - 2.0 * inter.entry(x, y));
        let g: Vec<f64> = spec.point(y).iter().zip(spec.point(x)).map(|(a, b)| a - b).collect();
        let closed = 2.0 * w * w * (k.eval_radius(0.0).unwrap() - k.eval(&g).unwrap());
        closed_form_gap = closed_form_gap.max((quadratic - closed).abs());
        let zero_only_at_origin = if x == y { closed == 0.0 } else { closed > 0.0 };
        assert!(zero_only_at_origin);
    }
    let probes_positive = !probes.is_empty() && probes.iter().all(|&v| v > 0.0);
    let pass = converged == 5 && worst_res <= bound && probes_positive && closed_form_gap <= 1e-15;
    let detail = format!(
        "{converged}/5 converged, max residual {worst_res:.3e} (bound {bound:.3e}), \
         {} probes all > 0: {probes_positive}, closed-form gap {closed_form_gap:.1e}",
        probes.len()
    );
    verdict(7, "optimality conditions", pass, t.elapsed(), Duration::from_secs(120), detail);
}

#[test]
fn criterion_08_potential_periodization() {
    let t = Instant::now();
    let lattice = Lattice::integer(2).unwrap();
    let k = Kernel::exponential(2.0, 2).unwrap();
    let pk = k.periodize(&lattice, 1e-14).unwrap();
    let ns = [4usize, 8, 16];
    let mut devs = Vec::new();
    let mut tails = Vec::new();
    for &n in &ns {
        let spec = GridSpec::new(lattice.clone(), n, 1).unwrap();
        let v = potential(&DensityField::indicator_of_cell(&spec), &k, &pk).unwrap();
        devs.push(v.periodization_deviation());
        tails.push(v.truncation_bound);
    }
    // Least-squares slope of log(deviation) against log(n).
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = devs.iter().map(|d| d.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    let order = -slope;
    // Quadrature constant fitted on the two coarse grids, checked on the fine one.
    let c = (0..2).map(|i| (devs[i] - tails[i]).max(0.0) * (ns[i] * ns[i]) as f64).fold(0.0, f64::max);
    let bound = tails[2] + c / (ns[2] * ns[2]) as f64;
    let pass = order >= 1.8 && devs[2] <= bound;
    let detail = format!(
        "deviations {:.3e} {:.3e} {:.3e}, observed order {order:.2} (min 1.8), fine-grid bound {bound:.3e}",
        devs[0], devs[1], devs[2]
    );
    verdict(8, "potential periodization", pass, t.elapsed(), Duration::from_secs(120), detail);
}

#[test]
fn criterion_09_hexagon_regularization() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut inputs: Vec<HexParams> = (0..50).map(|_| random_hexagon(&mut rng)).collect();
    inputs.push(HexParams::square());
    let mut worst_dev: f64 = 0.0;
    let mut worst_area: f64 = 0.0;
    let mut regular = 0;
    for hex in &inputs {
        let r = two_step_regularize(hex).unwrap();
        worst_dev = worst_dev.max(r.deviation);
        let a0 = r.input.area();
        worst_area = worst_area.max((r.first.area() - a0).abs()).max((r.second.area() - a0).abs());
        if r.regular {
            regular += 1;
        }
    }
    let pass = worst_dev <= 1e-9 && worst_area <= 1e-12;
    let detail = format!(
        "{regular}/{} regular, max vertex deviation {worst_dev:.3e} (bound 1e-9), max area change {worst_area:.1e} \
         (bound 1e-12)",
        inputs.len()
    );
    verdict(9, "hexagon regularization", pass, t.elapsed(), Duration::from_secs(60), detail);
}

/// Regular hexagon beats every other sample by `slack(regular, other)` and
/// lies strictly below the square.
fn regular_wins(table: &SweepTable, slack: impl Fn(f64, f64, f64, f64) -> f64) -> (bool, bool, f64) {
    let reg = table.regular().expect("regular hexagon sampled");
    let sq = table.square().expect("square sampled");
    let mut margin = f64::INFINITY;
    let mut all = true;
    for r in table.rows.iter().filter(|r| !r.is_regular_hexagon) {
        let gap = r.per_k - reg.per_k - slack(reg.per_k, reg.error_estimate, r.per_k, r.error_estimate);
        margin = margin.min(gap);
        all &= gap >= 0.0;
    }
    (all, reg.per_k < sq.per_k, margin)
}

#[test]
fn criterion_10_hexagon_optimality() {
    let t = Instant::now();
    let spec = SweepSpec { steps: 20, random_samples: 0, seed: 0, quad: QuadratureParams::default() };

    let gaussian = hexagon_sweep(&gaussian2(), &spec).unwrap();
    let (g_min, g_sq, g_margin) = regular_wins(&gaussian, |_, ea, _, eb| 2.0 * (ea + eb));

    let fractional = Kernel::fractional(1.0, 0.5, 2).unwrap();
    let frac = hexagon_sweep(&fractional, &spec).unwrap();
    // Within 1% error bars on both values.
    let (f_min, f_sq, f_margin) = regular_wins(&frac, |a, _, b, _| -0.01 * (a + b));

    let hex = regular_hexagon(1.0);
    let quad = QuadratureParams::default();
    let base = per_k_polygon(&hex, &fractional, &quad).unwrap().value;
    let mut scaling_err: f64 = 0.0;
    for lambda in [0.5, 2.0] {
        let scaled = per_k_polygon(&hex.scaled(lambda), &fractional, &quad).unwrap().value;
        let expected = lambda.powf(1.5) * base;
        scaling_err = scaling_err.max((scaled - expected).abs() / expected);
    }
    let pass = g_min && g_sq && f_min && f_sq && scaling_err <= 0.01;
    let detail = format!(
        "{} samples; gaussian minimal {g_min} (margin {g_margin:.3e}), below square {g_sq}; \
         fractional minimal {f_min} (margin {f_margin:.3e}), below square {f_sq}; scaling error {scaling_err:.1e}",
        gaussian.rows.len()
    );
    verdict(10, "hexagon optimality", pass, t.elapsed(), Duration::from_secs(1200), detail);
}

/// Raw `report.json` bytes up to the trailing `timing` block, plus the density dump.
fn without_timing(out: &Path) -> (String, Vec<u8>) {
    let raw = fs::read_to_string(out.join("report.json")).unwrap();
    let cut = raw.rfind(",\n  \"timing\"").expect("timing is the last field");
    (raw[..cut].to_string(), fs::read(out.join("density.csv")).unwrap())
}

#[test]
fn criterion_11_reproducibility() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("repro.cfg");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "kernel.family = gaussian\nkernel.alpha = 1\ngrid.n = 8\ngrid.R = 1\nseed = 42\nsolver.starts = 3\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let runs: Vec<(String, Vec<u8>)> = (0..2)
        .map(|_| {
            let o = tileopt(&["optimize", "--config", cfg.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0));
            without_timing(&out)
        })
        .collect();
    let same_report = runs[0].0 == runs[1].0;
    let same_density = runs[0].1 == runs[1].1;
    let detail = format!("report identical {same_report}, density identical {same_density}");
    verdict(11, "reproducibility", same_report && same_density, t.elapsed(), Duration::from_secs(120), detail);
}
