//! Radial interaction kernels.
//!
//! Every family is radial, `K(h) = φ(|h|)`, so symmetry `K(h) = K(-h)` holds
//! by construction. Besides pointwise evaluation each family provides exact
//! radial moments `∫_a^b φ(r) r^j dr`, which give L¹ norms, tail integrals and
//! the radial part of the polygon perimeter quadrature.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{dist, norm, Lattice, VoronoiCell};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `C |h|^{-N-s}`.
    Fractional { c: f64, s: f64 },
    /// `C max(|h|, δ)^{-N-s}`: the fractional kernel clamped inside `B_δ`.
    RegularizedFractional { c: f64, s: f64, delta: f64 },
    /// `exp(-α |h|²)`.
    Gaussian { alpha: f64 },
    /// `exp(-β |h|)`.
    Exponential { beta: f64 },
    /// Characteristic function of the closed ball `B_r`.
    Indicator { radius: f64 },
    /// Radial samples `values[i] = φ(i·dr)`, linear in between, zero past the end.
    Table { dr: f64, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    pub dim: usize,
}

/// Outcome of the strict-decrease clause of the integrability assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrictClause {
    /// Radial profile strictly decreasing: the liminf condition holds.
    Certified,
    /// Not certified by the radial test (for example locally constant near 0).
    Unverified,
    /// Kernel is not integrable, the clause does not apply.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionFlags {
    pub integrable: bool,
    pub satisfies_frac: bool,
    /// Integrable and strict clause certified.
    pub satisfies_int: bool,
    pub strictly_decreasing: bool,
    pub strict_clause: StrictClause,
    pub messages: Vec<String>,
}

/// Surface area of the unit sphere in `R^N` (counting measure for N = 1).
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

impl Kernel {
    pub fn new(family: KernelFamily, dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension { dim, context: "kernel" });
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match &family {
            KernelFamily::Fractional { c, s } => {
                positive("kernel.c", *c)?;
                fractional_order(*s)?;
            }
            KernelFamily::RegularizedFractional { c, s, delta } => {
                positive("kernel.c", *c)?;
                fractional_order(*s)?;
                positive("kernel.delta", *delta)?;
            }
            KernelFamily::Gaussian { alpha } => positive("kernel.alpha", *alpha)?,
            KernelFamily::Exponential { beta } => positive("kernel.beta", *beta)?,
            KernelFamily::Indicator { radius } => positive("kernel.radius", *radius)?,
            KernelFamily::Table { dr, values } => {
                positive("kernel.dr", *dr)?;
                if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidParameter(
                        "table kernel needs nonnegative finite samples".into(),
                    ));
                }
            }
        }
        Ok(Self { family, dim })
    }

    pub fn fractional(c: f64, s: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Fractional { c, s }, dim)
    }

    pub fn gaussian(alpha: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Gaussian { alpha }, dim)
    }

    pub fn exponential(beta: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Exponential { beta }, dim)
    }

    pub fn indicator(radius: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Indicator { radius }, dim)
    }

    pub fn table(dr: f64, values: Vec<f64>, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Table { dr, values }, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Fractional { .. } => "fractional",
            KernelFamily::RegularizedFractional { .. } => "regularized_fractional",
            KernelFamily::Gaussian { .. } => "gaussian",
            KernelFamily::Exponential { .. } => "exponential",
            KernelFamily::Indicator { .. } => "indicator",
            KernelFamily::Table { .. } => "table",
        }
    }

    pub fn is_integrable(&self) -> bool {
        !matches!(self.family, KernelFamily::Fractional { .. })
    }

    /// Fails with a descriptive error for the unregularized fractional family.
    pub fn require_integrable(&self, what: &'static str) -> Result<()> {
        if self.is_integrable() {
            Ok(())
        } else {
            Err(Error::NonIntegrableKernel(what))
        }
    }

    /// Radial profile `φ(r)`; `+∞` at the origin for the fractional family.
    pub fn profile(&self, r: f64) -> f64 {
        let n = self.dim as f64;
        match &self.family {
            KernelFamily::Fractional { c, s } => c * r.powf(-n - s),
            KernelFamily::RegularizedFractional { c, s, delta } => c * r.max(*delta).powf(-n - s),
            KernelFamily::Gaussian { alpha } => (-alpha * r * r).exp(),
            KernelFamily::Exponential { beta } => (-beta * r).exp(),
            KernelFamily::Indicator { radius } => {
                if r <= *radius {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::Table { dr, values } => {
                let x = r / dr;
                let i = x.floor() as usize;
                if i + 1 < values.len() {
                    let t = x - i as f64;
                    values[i] * (1.0 - t) + values[i + 1] * t
                } else if i + 1 == values.len() && x == i as f64 {
                    values[i]
                } else {
                    0.0
                }
            }
        }
    }

    pub fn eval_radius(&self, r: f64) -> Result<f64> {
        if r == 0.0 && !self.is_integrable() {
            return Err(Error::SingularAtOrigin);
        }
        Ok(self.profile(r))
    }

    pub fn eval(&self, h: &[f64]) -> Result<f64> {
        self.eval_radius(norm(h))
    }

    /// Radius beyond which the kernel vanishes, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match &self.family {
            KernelFamily::Indicator { radius } => Some(*radius),
            KernelFamily::Table { dr, values } => Some(dr * (values.len() - 1) as f64),
            _ => None,
        }
    }

    /// `‖K‖₁`, `+∞` for the fractional family.
    pub fn l1_norm(&self) -> f64 {
        if !self.is_integrable() {
            return f64::INFINITY;
        }
        sphere_area(self.dim) * self.radial_moment(self.dim - 1, 0.0, f64::INFINITY)
    }

    /// `∫_{|y| > ρ} K(y) dy`.
    pub fn tail_integral(&self, rho: f64) -> f64 {
        sphere_area(self.dim) * self.radial_moment(self.dim - 1, rho.max(0.0), f64::INFINITY)
    }

    /// `∫_a^b φ(r) r^j dr` in closed form; `b` may be `+∞`.
    pub fn radial_moment(&self, j: usize, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let n = self.dim as f64;
        match &self.family {
            KernelFamily::Fractional { c, s } => c * power_moment(j as f64 - n - s, a, b),
            KernelFamily::RegularizedFractional { c, s, delta } => {
                let inner = if a < *delta {
                    c * delta.powf(-n - s) * power_moment(j as f64, a, b.min(*delta))
                } else {
                    0.0
                };
                inner + c * power_moment(j as f64 - n - s, a.max(*delta), b.max(*delta))
            }
            KernelFamily::Gaussian { alpha } => gaussian_moment(*alpha, j, a, b),
            KernelFamily::Exponential { beta } => exponential_moment(*beta, j, a, b),
            KernelFamily::Indicator { radius } => power_moment(j as f64, a, b.min(*radius)),
            KernelFamily::Table { dr, values } => {
                table_moment(*dr, values, j, a, b, |i| values[i], |i| values[i + 1])
            }
        }
    }

    /// Moments of the nonincreasing envelope `φ*(r) = sup_{t ≥ r} φ(t)`
    /// (an upper bound of it for tables), used for rigorous tail bounds.
    fn envelope_moment(&self, j: usize, a: f64, b: f64) -> f64 {
        match &self.family {
            KernelFamily::Table { dr, values } => {
                let mut suffix_max = values.clone();
                for i in (0..values.len().saturating_sub(1)).rev() {
                    suffix_max[i] = suffix_max[i].max(suffix_max[i + 1]);
                }
                table_moment(*dr, values, j, a, b, |i| suffix_max[i], |i| suffix_max[i])
            }
            _ => self.radial_moment(j, a, b),
        }
    }

    /// Value of the envelope at the origin.
    fn envelope_at_zero(&self) -> f64 {
        match &self.family {
            KernelFamily::Table { values, .. } => values.iter().cloned().fold(0.0, f64::max),
            _ => self.profile(0.0),
        }
    }

    pub fn check_assumptions(&self) -> AssumptionFlags {
        let integrable = self.is_integrable();
        let mut messages = Vec::new();
        let (satisfies_frac, strictly_decreasing) = match &self.family {
            KernelFamily::Fractional { c, s } => {
                messages.push(format!(
                    "fractional bound K(h) <= C|h|^(-N-s) holds with C = {c}, s = {s} in (0,1)"
                ));
                (true, true)
            }
            KernelFamily::RegularizedFractional { .. } => (false, false),
            KernelFamily::Gaussian { .. } | KernelFamily::Exponential { .. } => (false, true),
            KernelFamily::Indicator { .. } => (false, false),
            KernelFamily::Table { values, .. } => {
                (false, values.windows(2).all(|w| w[1] < w[0]))
            }
        };
        let strict_clause = if !integrable {
            StrictClause::NotApplicable
        } else if strictly_decreasing {
            StrictClause::Certified
        } else {
            StrictClause::Unverified
        };
        if strict_clause == StrictClause::Unverified {
            messages.push(
                "strict clause unverified: liminf_{z->0+} [K(z) - K(z+x)] > 0 is not certified; \
                 the profile is locally constant around the origin or not strictly decreasing"
                    .into(),
            );
        }
        AssumptionFlags {
            integrable,
            satisfies_frac,
            satisfies_int: integrable && strict_clause == StrictClause::Certified,
            strictly_decreasing,
            strict_clause,
            messages,
        }
    }

    /// Bounded approximation `K_δ(h) = min(K(h), K(δ e₁))` of a fractional kernel.
    pub fn regularize_fractional(&self, delta: f64) -> Result<Kernel> {
        match self.family {
            KernelFamily::Fractional { c, s } => {
                Kernel::new(KernelFamily::RegularizedFractional { c, s, delta }, self.dim)
            }
            _ => Err(Error::InvalidParameter(
                "only fractional kernels can be regularized".into(),
            )),
        }
    }

    /// Periodizes the kernel over `lattice` with the minimal cutoff whose
    /// rigorous tail bound is at most `tail_tolerance`.
    pub fn periodize(&self, lattice: &Lattice, tail_tolerance: f64) -> Result<PeriodizedKernel> {
        PeriodizedKernel::new(self.clone(), lattice, tail_tolerance)
    }
}

fn fractional_order(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("fractional order s must lie in (0,1), got {s}")))
    }
}

/// `∫_a^b r^p dr` for `b` possibly infinite (requires `p < -1` then).
fn power_moment(p: f64, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let q = p + 1.0;
    if q.abs() < 1e-300 {
        return (b / a).ln();
    }
    let upper = if b.is_infinite() {
        if q < 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        b.powf(q)
    };
    let lower = if a == 0.0 {
        if q > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        a.powf(q)
    };
    (upper - lower) / q
}

/// `∫_a^b r^j e^{-α r²} dr` via the standard recurrence.
fn gaussian_moment(alpha: f64, j: usize, a: f64, b: f64) -> f64 {
    let term = |r: f64, k: i32| {
        if r.is_infinite() {
            0.0
        } else if k == 0 {
            (-alpha * r * r).exp()
        } else {
            r.powi(k) * (-alpha * r * r).exp()
        }
    };
    match j {
        0 => {
            let sa = alpha.sqrt();
            let scale = 0.5 * (PI / alpha).sqrt();
            // erfc difference keeps precision in the far tail.
            let ea = libm::erfc(sa * a);
            let eb = if b.is_infinite() { 0.0 } else { libm::erfc(sa * b) };
            scale * (ea - eb)
        }
        1 => (term(a, 0) - term(b, 0)) / (2.0 * alpha),
        _ => {
            let k = j as i32 - 1;
            (term(a, k) - term(b, k)) / (2.0 * alpha)
                + (j as f64 - 1.0) / (2.0 * alpha) * gaussian_moment(alpha, j - 2, a, b)
        }
    }
}

/// `∫_a^b r^j e^{-β r} dr`.
fn exponential_moment(beta: f64, j: usize, a: f64, b: f64) -> f64 {
    let term = |r: f64, k: i32| {
        if r.is_infinite() {
            0.0
        } else if k == 0 {
            (-beta * r).exp()
        } else {
            r.powi(k) * (-beta * r).exp()
        }
    };
    if j == 0 {
        (term(a, 0) - term(b, 0)) / beta
    } else {
        (term(a, j as i32) - term(b, j as i32)) / beta
            + j as f64 / beta * exponential_moment(beta, j - 1, a, b)
    }
}

/// Moments of a piecewise linear profile with node values `left(i)` and
/// `right(i)` on `[i·dr, (i+1)·dr]`.
fn table_moment(
    dr: f64,
    values: &[f64],
    j: usize,
    a: f64,
    b: f64,
    left: impl Fn(usize) -> f64,
    right: impl Fn(usize) -> f64,
) -> f64 {
    let mut total = 0.0;
    for i in 0..values.len().saturating_sub(1) {
        let (r0, r1) = (i as f64 * dr, (i + 1) as f64 * dr);
        let lo = a.max(r0);
        let hi = b.min(r1);
        if hi <= lo {
            continue;
        }
        // φ(r) = v0 + slope (r - r0) on the piece.
        let (v0, v1) = (left(i), right(i));
        let slope = (v1 - v0) / dr;
        let jf = j as f64;
        let pow = |e: f64| (hi.powf(e) - lo.powf(e)) / e;
        total += (v0 - slope * r0) * pow(jf + 1.0) + slope * pow(jf + 2.0);
    }
    total
}

/// Lattice periodization `Σ_{g ∈ G, |g| ≤ R} K(x + g)` with a tail bound.
///
/// Points are first reduced into the Voronoi cell of the origin, so that
/// `|x| ≤ ρ` with `ρ` the covering radius. For `|g| > R` the Voronoi tiles
/// `g + V` lie outside `B(0, R - ρ)` and `|x + g| ≥ |y| - 2ρ` on each tile,
/// which gives
///
/// `tail ≤ (1/m) ∫_{|y| > R-ρ} K*(|y| - 2ρ) dy`
///
/// with `K*` the nonincreasing envelope of the profile.
#[derive(Debug, Clone)]
pub struct PeriodizedKernel {
    pub kernel: Kernel,
    pub lattice: Lattice,
    pub cutoff_radius: f64,
    pub tail_bound: f64,
    covering_radius: f64,
    offsets: Vec<Vec<f64>>,
}

impl PeriodizedKernel {
    fn new(kernel: Kernel, lattice: &Lattice, tail_tolerance: f64) -> Result<Self> {
        kernel.require_integrable("periodization")?;
        if kernel.dim != lattice.dim() {
            return Err(Error::InvalidParameter("kernel and lattice dimensions differ".into()));
        }
        if !(tail_tolerance > 0.0) {
            return Err(Error::InvalidParameter("tail tolerance must be positive".into()));
        }
        let lattice = lattice.reduce();
        let covering_radius = match lattice.voronoi_cell() {
            Ok(VoronoiCell::Interval(_, hi)) => hi,
            Ok(VoronoiCell::Polygon(p)) => {
                p.vertices().iter().map(|v| norm(v)).fold(0.0, f64::max)
            }
            Err(_) => lattice.covering_radius_bound(),
        };
        let bound = |r: f64| tail_bound(&kernel, lattice.covolume(), covering_radius, r);
        let cutoff_radius = match kernel.support_radius() {
            Some(support) => {
                // Nonzero terms need |x + g| ≤ support with |x| ≤ |x + g|.
                let cut = (2.0 * support).min(support + covering_radius);
                if bound(cut) <= tail_tolerance {
                    cut
                } else {
                    minimal_cutoff(&bound, tail_tolerance, covering_radius)
                }
            }
            None => minimal_cutoff(&bound, tail_tolerance, covering_radius),
        };
        let tail = if kernel.support_radius().is_some_and(|s| {
            cutoff_radius >= (2.0 * s).min(s + covering_radius)
        }) {
            0.0
        } else {
            bound(cutoff_radius)
        };
        let offsets = lattice.points_in_ball(cutoff_radius);
        Ok(Self { kernel, lattice, cutoff_radius, tail_bound: tail, covering_radius, offsets })
    }

    pub fn covering_radius(&self) -> f64 {
        self.covering_radius
    }

    /// Truncated lattice sum at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_with_cutoff(x, self.cutoff_radius)
    }

    /// Truncated lattice sum using only offsets with `|g| ≤ cutoff`.
    pub fn eval_with_cutoff(&self, x: &[f64], cutoff: f64) -> f64 {
        let y = self.reduce(x);
        let origin = vec![0.0; y.len()];
        self.offsets
            .iter()
            .filter(|g| dist(g, &origin) <= cutoff)
            .map(|g| {
                let r = y.iter().zip(g).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
                self.kernel.profile(r)
            })
            .sum()
    }

    /// Representative of `x` modulo the lattice in the Voronoi cell.
    pub fn reduce(&self, x: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = self.lattice.coordinates(x).iter().map(|c| c.round()).collect();
        let dim = x.len();
        let mut best = x.to_vec();
        let mut best_d = f64::INFINITY;
        let span = 2i64;
        let count = (2 * span + 1).pow(dim as u32);
        for idx in 0..count {
            let mut rem = idx;
            let mut coeffs = c.clone();
            for k in coeffs.iter_mut() {
                *k += (rem % (2 * span + 1)) as f64 - span as f64;
                rem /= 2 * span + 1;
            }
            let g = self.lattice.point(&coeffs);
            let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
            let d = norm(&y);
            if d < best_d {
                best_d = d;
                best = y;
            }
        }
        best
    }
}

fn tail_bound(kernel: &Kernel, covolume: f64, rho: f64, cutoff: f64) -> f64 {
    let lower = (cutoff - rho).max(0.0);
    let n = kernel.dim;
    // Region r ∈ [lower, 2ρ] where the shifted envelope equals φ*(0).
    let flat = if lower < 2.0 * rho {
        kernel.envelope_at_zero() * ((2.0 * rho).powi(n as i32) - lower.powi(n as i32)) / n as f64
    } else {
        0.0
    };
    let u0 = (lower - 2.0 * rho).max(0.0);
    let m = |j: usize| kernel.envelope_moment(j, u0, f64::INFINITY);
    let shifted = match n {
        1 => m(0),
        2 => m(1) + 2.0 * rho * m(0),
        _ => m(2) + 4.0 * rho * m(1) + 4.0 * rho * rho * m(0),
    };
    sphere_area(n) / covolume * (flat + shifted)
}

fn minimal_cutoff(bound: &dyn Fn(f64) -> f64, tol: f64, scale: f64) -> f64 {
    let mut hi = scale.max(1e-3);
    while bound(hi) > tol {
        hi *= 2.0;
        if hi > 1e9 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if bound(mid) <= tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn pointwise_examples() {
        let frac = Kernel::fractional(1.0, 0.5, 2).unwrap();
        assert_eq!(frac.eval(&[1.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(frac.eval(&[0.0, 0.0]), Err(Error::SingularAtOrigin)));
        assert_eq!(Kernel::gaussian(1.0, 2).unwrap().eval(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(Kernel::indicator(1.0, 2).unwrap().eval(&[2.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn l1_examples() {
        assert!(close(Kernel::gaussian(1.0, 2).unwrap().l1_norm(), PI, 1e-15));
        assert!(close(Kernel::exponential(1.0, 2).unwrap().l1_norm(), 2.0 * PI, 1e-15));
        assert!(close(Kernel::exponential(1.0, 1).unwrap().l1_norm(), 2.0, 1e-15));
        assert!(Kernel::fractional(1.0, 0.5, 2).unwrap().l1_norm().is_infinite());
        assert!(close(Kernel::indicator(0.5, 2).unwrap().l1_norm(), PI * 0.25, 1e-15));
        assert!(close(Kernel::gaussian(2.0, 3).unwrap().l1_norm(), (PI / 2.0).powf(1.5), 1e-14));
    }

    #[test]
    fn moments_match_quadrature() {
        let rule = GaussLegendre::new(30);
        let kernels = [
            Kernel::gaussian(1.3, 2).unwrap(),
            Kernel::exponential(0.7, 2).unwrap(),
            Kernel::fractional(2.0, 0.3, 2).unwrap(),
            Kernel::table(0.25, vec![1.0, 0.9, 0.4, 0.45, 0.1], 2).unwrap(),
        ];
        for k in &kernels {
            for j in 0..4 {
                let (a, b) = (0.3, 1.1);
                let exact = k.radial_moment(j, a, b);
                let pieces = 16;
                let quad = rule.integrate_composite(a, b, pieces, |r| {
                    k.profile(r) * r.powi(j as i32)
                });
                assert!(close(exact, quad, 1e-9), "{} j={j}: {exact} vs {quad}", k.name());
            }
        }
    }

    #[test]
    fn tail_moments_are_consistent() {
        let k = Kernel::gaussian(1.0, 2).unwrap();
        let head = k.radial_moment(1, 0.0, 3.0);
        let tail = k.radial_moment(1, 3.0, f64::INFINITY);
        assert!(close(2.0 * PI * (head + tail), PI, 1e-15));
        let e = Kernel::exponential(1.0, 1).unwrap();
        assert!(close(e.tail_integral(2.0), 2.0 * (-2f64).exp(), 1e-15));
    }

    #[test]
    fn assumption_flags() {
        let g = Kernel::gaussian(1.0, 2).unwrap().check_assumptions();
        assert!(g.satisfies_int && g.strictly_decreasing);
        assert_eq!(g.strict_clause, StrictClause::Certified);

        let ind = Kernel::indicator(1.0, 2).unwrap().check_assumptions();
        assert!(ind.integrable && !ind.satisfies_int);
        assert_eq!(ind.strict_clause, StrictClause::Unverified);
        assert!(ind.messages.iter().any(|m| m.contains("locally constant around the origin")));

        let f = Kernel::fractional(1.0, 0.5, 2).unwrap().check_assumptions();
        assert!(f.satisfies_frac && !f.integrable);
        assert_eq!(f.strict_clause, StrictClause::NotApplicable);
    }

    #[test]
    fn invalid_parameters() {
        assert!(Kernel::fractional(1.0, 1.0, 2).is_err());
        assert!(Kernel::fractional(1.0, 0.0, 2).is_err());
        assert!(Kernel::gaussian(-1.0, 2).is_err());
        assert!(Kernel::gaussian(1.0, 4).is_err());
        assert!(Kernel::table(0.1, vec![], 2).is_err());
    }

    #[test]
    fn regularized_fractional() {
        let f = Kernel::fractional(1.0, 0.5, 2).unwrap();
        let r = f.regularize_fractional(0.1).unwrap();
        assert!(close(r.eval(&[0.05, 0.0]).unwrap(), 0.1f64.powf(-2.5), 1e-14));
        assert!(close(r.eval(&[1.0, 0.0]).unwrap(), 1.0, 1e-15));
        assert!(r.is_integrable());
        // Radial quadrature oracle, split at δ where the profile has a kink.
        let rule = GaussLegendre::new(20);
        let inner = rule.integrate(0.0, 0.1, |x| r.profile(x) * x);
        let mid = rule.integrate_composite(0.1, 10.0, 200, |x| r.profile(x) * x);
        // Beyond 10 the profile is x^{-2.5}: ∫_10^∞ x^{-1.5} dx = 2/√10.
        let quad = 2.0 * PI * (inner + mid + 2.0 / 10f64.sqrt());
        assert!(close(r.l1_norm(), quad, 1e-10), "{} vs {quad}", r.l1_norm());
        let closed = PI * 0.1f64.powf(-0.5) * (1.0 + 2.0 / 0.5);
        assert!(close(r.l1_norm(), closed, 1e-13));
        assert!(Kernel::gaussian(1.0, 2).unwrap().regularize_fractional(0.1).is_err());
    }

    #[test]
    fn regularization_is_monotone_in_delta() {
        let f = Kernel::fractional(1.0, 0.5, 2).unwrap();
        let h = [0.03, 0.0];
        let values: Vec<f64> = [0.2, 0.1, 0.05, 0.01]
            .iter()
            .map(|&d| f.regularize_fractional(d).unwrap().eval(&h).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
        assert!(close(values[3], f.eval(&h).unwrap(), 1e-15));
    }

    #[test]
    fn periodize_gaussian_on_z2() {
        let z2 = Lattice::integer(2).unwrap();
        let k = Kernel::gaussian(1.0, 2).unwrap();
        let pk = k.periodize(&z2, 1e-8).unwrap();
        assert!(pk.tail_bound <= 1e-8);
        // Doubling the cutoff changes the sum by less than the bound.
        let wide = k.periodize(&z2, 1e-30).unwrap();
        for x in [[0.1, 0.2], [0.5, 0.5], [-0.3, 0.45]] {
            let diff = (wide.eval(&x) - pk.eval(&x)).abs();
            assert!(diff <= pk.tail_bound, "{diff} > {}", pk.tail_bound);
        }
    }

    #[test]
    fn periodize_indicator_has_no_tail() {
        let z2 = Lattice::integer(2).unwrap();
        let k = Kernel::indicator(0.4, 2).unwrap();
        let pk = k.periodize(&z2, 1e-12).unwrap();
        assert_eq!(pk.tail_bound, 0.0);
        for x in [[0.1, 0.2], [0.5, 0.5], [0.95, 0.05], [0.35, 0.0]] {
            assert_eq!(pk.eval_with_cutoff(&x, 0.4), pk.eval(&x));
        }
    }

    #[test]
    fn periodize_exponential_on_z1() {
        let z1 = Lattice::integer(1).unwrap();
        let k = Kernel::exponential(1.0, 1).unwrap();
        let pk = k.periodize(&z1, 1e-6).unwrap();
        assert!(pk.cutoff_radius > 10.0 && pk.cutoff_radius < 25.0, "{}", pk.cutoff_radius);
        // Geometric-series oracle: Σ_g e^{-|x+g|} = cosh(x - ½)/sinh(½) on [0, 1].
        for x in [0.0, 0.2, 0.5, 0.9] {
            let exact = (x - 0.5f64).cosh() / 0.5f64.sinh();
            let err = (pk.eval(&[x]) - exact).abs();
            assert!(err <= pk.tail_bound, "{err} > {}", pk.tail_bound);
        }
        assert!(Kernel::fractional(1.0, 0.5, 1).unwrap().periodize(&z1, 1e-6).is_err());
    }
}
