//! Convex polygons, centrally symmetric hexagons, Steiner symmetrization and
//! the nonlocal perimeter of polygons.
//!
//! The perimeter uses the covariogram identity
//! `Per_K(P) = ∫ K(z) (|P| - |P ∩ (P + z)|) dz`. In polar coordinates the
//! integrand is, along each ray, a piecewise quadratic polynomial in `r`
//! whose breakpoints are known in closed form, so the radial integral is
//! exact given the kernel's radial moments. Only the angular integral is
//! numerical (composite Gauss-Legendre split at every kink direction).

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::lattice::{clip_halfplane, moduli_grid, ModuliPoint2D, VoronoiCell};
use crate::quadrature::GaussLegendre;

pub type Point = [f64; 2];

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

fn scale(a: Point, f: f64) -> Point {
    [a[0] * f, a[1] * f]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot2(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn len(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    (0..n).map(|i| cross(v[i], v[(i + 1) % n])).sum::<f64>() / 2.0
}

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonJson", into = "PolygonJson")]
pub struct Polygon {
    vertices: Vec<Point>,
    area: f64,
}

#[derive(Serialize, Deserialize)]
struct PolygonJson {
    vertices: Vec<Point>,
}

impl TryFrom<PolygonJson> for Polygon {
    type Error = Error;
    fn try_from(p: PolygonJson) -> Result<Self> {
        Polygon::new(p.vertices)
    }
}

impl From<Polygon> for PolygonJson {
    fn from(p: Polygon) -> Self {
        PolygonJson { vertices: p.vertices }
    }
}

impl Polygon {
    /// Validates convexity and reorients clockwise input.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let mut v = dedup_cyclic(vertices);
        if v.len() < 3 {
            return Err(Error::DegeneratePolygon("fewer than three distinct vertices".into()));
        }
        if v.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::DegeneratePolygon("non-finite vertex".into()));
        }
        let mut area = signed_area(&v);
        if area < 0.0 {
            v.reverse();
            area = -area;
        }
        let diam2 = v
            .iter()
            .flat_map(|a| v.iter().map(move |b| dot2(sub(*a, *b), sub(*a, *b))))
            .fold(0.0, f64::max);
        if !(area > 1e-14 * diam2) {
            return Err(Error::DegeneratePolygon("zero area".into()));
        }
        let n = v.len();
        for i in 0..n {
            let turn = cross(sub(v[(i + 1) % n], v[i]), sub(v[(i + 2) % n], v[(i + 1) % n]));
            if turn < -1e-10 * diam2 {
                return Err(Error::DegeneratePolygon("polygon is not convex".into()));
            }
        }
        Ok(Self { vertices: v, area })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn centroid(&self) -> Point {
        let v = &self.vertices;
        let n = v.len();
        let mut c = [0.0, 0.0];
        for i in 0..n {
            let (p, q) = (v[i], v[(i + 1) % n]);
            let w = cross(p, q);
            c[0] += (p[0] + q[0]) * w;
            c[1] += (p[1] + q[1]) * w;
        }
        scale(c, 1.0 / (6.0 * signed_area(v)))
    }

    pub fn contains(&self, x: Point) -> bool {
        let v = &self.vertices;
        let n = v.len();
        (0..n).all(|i| cross(sub(v[(i + 1) % n], v[i]), sub(x, v[i])) >= -1e-12 * self.area)
    }

    pub fn translated(&self, t: Point) -> Polygon {
        self.map(|p| add(p, t))
    }

    /// Dilation about the origin.
    pub fn scaled(&self, factor: f64) -> Polygon {
        let mut p = self.map(|p| scale(p, factor.abs()));
        p.area = self.area * factor * factor;
        p
    }

    pub fn rotated(&self, angle: f64) -> Polygon {
        let (s, c) = angle.sin_cos();
        self.map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
    }

    pub fn centered(&self) -> Polygon {
        let c = self.centroid();
        self.translated([-c[0], -c[1]])
    }

    /// Rescaled about the centroid to unit area.
    pub fn normalized(&self) -> Polygon {
        let c = self.centroid();
        let mut p = self.translated([-c[0], -c[1]]).scaled(1.0 / self.area.sqrt());
        p.area = 1.0;
        p
    }

    /// Drops vertices whose turn is below `tol` relative to the squared diameter.
    pub fn simplified(&self, tol: f64) -> Polygon {
        let diam2 = self.diameter().powi(2);
        let mut v = self.vertices.clone();
        loop {
            let n = v.len();
            if n <= 3 {
                break;
            }
            let flat = (0..n).find(|&i| {
                let (a, b, c) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
                cross(sub(b, a), sub(c, b)).abs() <= tol * diam2
            });
            match flat {
                Some(i) => {
                    v.remove(i);
                }
                None => break,
            }
        }
        Polygon { vertices: v, area: self.area }
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        v.iter()
            .flat_map(|a| v.iter().map(move |b| len(sub(*a, *b))))
            .fold(0.0, f64::max)
    }

    /// Extent of the projection onto `direction`.
    pub fn width(&self, direction: Point) -> f64 {
        let u = scale(direction, 1.0 / len(direction));
        let proj = self.vertices.iter().map(|p| dot2(*p, u));
        let (lo, hi) = proj.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
        hi - lo
    }

    pub fn is_centrally_symmetric(&self, tol: f64) -> bool {
        let c = self.centroid();
        self.vertices.iter().all(|p| {
            let q = sub(scale(c, 2.0), *p);
            self.vertices.iter().any(|r| len(sub(*r, q)) <= tol)
        })
    }

    /// Area of `P ∩ (P + z)`.
    pub fn covariogram(&self, z: Point) -> f64 {
        let mut clipped: Vec<Point> = self.vertices.iter().map(|p| add(*p, z)).collect();
        let v = &self.vertices;
        let n = v.len();
        for i in 0..n {
            if clipped.len() < 3 {
                return 0.0;
            }
            let e = sub(v[(i + 1) % n], v[i]);
            // Left of a counterclockwise edge: ⟨(e_y, -e_x), x⟩ ≤ ⟨(e_y, -e_x), v_i⟩.
            let normal = [e[1], -e[0]];
            clipped = clip_halfplane(&clipped, normal, dot2(normal, v[i]));
        }
        if clipped.len() < 3 {
            0.0
        } else {
            signed_area(&clipped).max(0.0)
        }
    }

    fn map(&self, f: impl Fn(Point) -> Point) -> Polygon {
        Polygon { vertices: self.vertices.iter().map(|p| f(*p)).collect(), area: self.area }
    }
}

fn dedup_cyclic(vertices: Vec<Point>) -> Vec<Point> {
    let scale_ = vertices.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-300);
    let mut out: Vec<Point> = Vec::with_capacity(vertices.len());
    for p in vertices {
        if out.last().map_or(true, |q| len(sub(p, *q)) > 1e-14 * scale_) {
            out.push(p);
        }
    }
    while out.len() > 1 && len(sub(out[0], out[out.len() - 1])) <= 1e-14 * scale_ {
        out.pop();
    }
    out
}

/// Regular hexagon of the given area with a vertex on the positive x-axis.
pub fn regular_hexagon(area: f64) -> Polygon {
    let r = (2.0 * area / (3.0 * 3f64.sqrt())).sqrt();
    let vertices = (0..6)
        .map(|k| {
            let t = k as f64 * PI / 3.0;
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    Polygon::new(vertices).expect("regular hexagon is valid")
}

/// Axis-aligned unit square centered at the origin.
pub fn unit_square() -> Polygon {
    Polygon::new(vec![[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]).expect("valid square")
}

/// Centrally symmetric hexagon `(A, B, C, -A, -B, -C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexParams {
    pub a: Point,
    pub b: Point,
    pub c: Point,
}

impl HexParams {
    pub fn new(a: Point, b: Point, c: Point) -> Self {
        Self { a, b, c }
    }

    /// Hexagon labels `A..F` in counterclockwise order.
    pub fn labelled_vertices(&self) -> [Point; 6] {
        let (a, b, c) = (self.a, self.b, self.c);
        let neg = |p: Point| scale(p, -1.0);
        let v = [a, b, c, neg(a), neg(b), neg(c)];
        if signed_area(&v) >= 0.0 {
            v
        } else {
            [a, neg(c), neg(b), neg(a), c, b]
        }
    }

    /// True when one of the triples `ABC`, `BCD`, `CDE` is collinear.
    pub fn is_degenerate(&self, tol: f64) -> bool {
        let v = self.labelled_vertices();
        let d2 = v.iter().map(|p| dot2(*p, *p)).fold(0.0, f64::max);
        (0..3).any(|i| cross(sub(v[i + 1], v[i]), sub(v[i + 2], v[i + 1])).abs() <= tol * d2)
    }

    pub fn to_polygon(&self) -> Result<Polygon> {
        let v = self.labelled_vertices().to_vec();
        if signed_area(&v).abs() <= 1e-300 {
            return Err(Error::DegeneratePolygon("zero area hexagon".into()));
        }
        Polygon::new(v)
    }

    /// Same shape rescaled to unit area.
    pub fn normalized(&self) -> Result<HexParams> {
        let area = self.to_polygon()?.area();
        let f = 1.0 / area.sqrt();
        Ok(Self { a: scale(self.a, f), b: scale(self.b, f), c: scale(self.c, f) })
    }

    /// Reads a centrally symmetric hexagon or a parallelogram, the latter
    /// encoded with an edge midpoint as the collinear vertex.
    pub fn from_polygon(poly: &Polygon) -> Result<Self> {
        let p = poly.centered().simplified(1e-12);
        let v = p.vertices();
        if !p.is_centrally_symmetric(1e-9 * p.diameter()) {
            return Err(Error::InvalidParameter("polygon is not centrally symmetric".into()));
        }
        match v.len() {
            6 => Ok(Self::new(v[0], v[1], v[2])),
            4 => Ok(Self::new(v[0], scale(add(v[0], v[1]), 0.5), v[1])),
            k => Err(Error::InvalidParameter(format!(
                "expected a hexagon or parallelogram, got {k} vertices"
            ))),
        }
    }

    pub fn regular() -> Self {
        Self::from_polygon(&regular_hexagon(1.0)).expect("regular hexagon")
    }

    pub fn square() -> Self {
        Self::from_polygon(&unit_square()).expect("unit square")
    }
}

/// Random convex centrally symmetric hexagon of unit area.
pub fn random_hexagon<R: Rng>(rng: &mut R) -> HexParams {
    loop {
        let mut angles: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..PI)).collect();
        angles.sort_by(f64::total_cmp);
        let pts: Vec<Point> = angles
            .iter()
            .map(|t| {
                let r = rng.gen_range(0.5..1.5);
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        let hex = HexParams::new(pts[0], pts[1], pts[2]);
        let v = hex.labelled_vertices();
        let convex = (0..6).all(|i| {
            let (a, b, c) = (v[i], v[(i + 1) % 6], v[(i + 2) % 6]);
            cross(sub(b, a), sub(c, b)) > 0.02
        });
        if convex {
            return hex.normalized().expect("convex hexagon");
        }
    }
}

/// Line through `point` with unit `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub point: Point,
    pub direction: Point,
}

impl Axis {
    pub fn new(point: Point, direction: Point) -> Result<Self> {
        let l = len(direction);
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParameter("axis direction must be nonzero".into()));
        }
        Ok(Self { point, direction: scale(direction, 1.0 / l) })
    }

    /// Mirror line exchanging `p` and `q`.
    pub fn perpendicular_bisector(p: Point, q: Point) -> Result<Self> {
        let d = sub(q, p);
        Self::new(scale(add(p, q), 0.5), [-d[1], d[0]])
    }

    fn normal(&self) -> Point {
        [-self.direction[1], self.direction[0]]
    }

    /// Coordinates `(s, t)` along the axis and its normal.
    fn frame(&self, x: Point) -> (f64, f64) {
        let r = sub(x, self.point);
        (dot2(r, self.direction), dot2(r, self.normal()))
    }

    fn unframe(&self, s: f64, t: f64) -> Point {
        add(self.point, add(scale(self.direction, s), scale(self.normal(), t)))
    }
}

/// Chord `[t_min, t_max]` of the polygon at axis coordinate `s`.
fn chord(frame: &[(f64, f64)], s: f64) -> (f64, f64) {
    let n = frame.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let (s0, t0) = frame[i];
        let (s1, t1) = frame[(i + 1) % n];
        if (s0 - s) * (s1 - s) > 0.0 {
            continue;
        }
        let ts: [f64; 2] = if s0 == s1 {
            [t0, t1]
        } else {
            let t = t0 + (t1 - t0) * (s - s0) / (s1 - s0);
            [t, t]
        };
        for t in ts {
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    (lo, hi)
}

/// Steiner symmetrization: every chord perpendicular to the axis is moved
/// along itself so that its midpoint lies on the axis.
pub fn steiner_symmetrize(poly: &Polygon, axis: &Axis) -> Polygon {
    let frame: Vec<(f64, f64)> = poly.vertices().iter().map(|p| axis.frame(*p)).collect();
    let mut levels: Vec<f64> = frame.iter().map(|f| f.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let half: Vec<f64> = levels
        .iter()
        .map(|&s| {
            let (lo, hi) = chord(&frame, s);
            0.5 * (hi - lo).max(0.0)
        })
        .collect();
    // Lower side with increasing s, then upper side back: counterclockwise.
    let mut pts: Vec<Point> = levels.iter().zip(&half).map(|(&s, &h)| axis.unframe(s, -h)).collect();
    pts.extend(levels.iter().zip(&half).rev().map(|(&s, &h)| axis.unframe(s, h)));
    let v = dedup_cyclic(pts);
    Polygon { vertices: v, area: poly.area() }.simplified(1e-13)
}

/// Result of the two prescribed symmetrizations of a hexagon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Regularization {
    pub input: Polygon,
    pub first: Polygon,
    pub second: Polygon,
    pub first_axis: Axis,
    pub second_axis: Axis,
    /// Vertex-matching distance of `second` to the regular hexagon of equal area.
    pub deviation: f64,
    pub regular: bool,
}

/// Tolerance on `deviation` for calling the output regular.
pub const REGULAR_TOLERANCE: f64 = 1e-9;

/// Symmetrizes first about the perpendicular bisector of `AE`, then about
/// the perpendicular bisector of `F'D'`, where `F'` and `D'` are the images
/// of `F` and of the endpoint `D` of the chord `BD` on the side of `E`.
pub fn two_step_regularize(hex: &HexParams) -> Result<Regularization> {
    let labels = hex.normalized()?.labelled_vertices();
    let input = Polygon::new(labels.to_vec())?;
    let [a, b, _c, d, e, f] = labels;

    let first_axis = Axis::perpendicular_bisector(a, e)?;
    let first = steiner_symmetrize(&input, &first_axis);
    let frame: Vec<(f64, f64)> = input.vertices().iter().map(|p| first_axis.frame(*p)).collect();
    let (_, t_a) = first_axis.frame(a);
    let (_, t_e) = first_axis.frame(e);
    let e_side = if t_e >= t_a { 1.0 } else { -1.0 };

    let (s_d, _) = first_axis.frame(d);
    let (lo_bd, hi_bd) = chord(&frame, s_d);
    let _ = b;
    let d_image = first_axis.unframe(s_d, e_side * 0.5 * (hi_bd - lo_bd));

    let (s_f, t_f) = first_axis.frame(f);
    let (lo_f, hi_f) = chord(&frame, s_f);
    let f_side = if t_f >= 0.5 * (lo_f + hi_f) { 1.0 } else { -1.0 };
    let f_image = first_axis.unframe(s_f, f_side * 0.5 * (hi_f - lo_f));

    let second_axis = Axis::perpendicular_bisector(f_image, d_image)?;
    let second = steiner_symmetrize(&first, &second_axis);
    let deviation = hexagon_deviation(&second);
    Ok(Regularization {
        input,
        first,
        second,
        first_axis,
        second_axis,
        deviation,
        regular: deviation <= REGULAR_TOLERANCE,
    })
}

/// Hausdorff distance between the vertex set of `poly` and that of the
/// best-rotated regular hexagon of equal area, both centered at their
/// centroids.
pub fn hexagon_deviation(poly: &Polygon) -> f64 {
    let p = poly.centered().simplified(1e-12);
    let r = (2.0 * p.area() / (3.0 * 3f64.sqrt())).sqrt();
    let reference = |phi: f64| -> Vec<Point> {
        (0..6)
            .map(|k| {
                let t = phi + k as f64 * PI / 3.0;
                [r * t.cos(), r * t.sin()]
            })
            .collect()
    };
    let nearest = |x: Point, set: &[Point]| set.iter().map(|y| len(sub(x, *y))).fold(f64::INFINITY, f64::min);
    let cost = |phi: f64| {
        let refs = reference(phi);
        p.vertices().iter().map(|v| nearest(*v, &refs)).sum::<f64>()
    };
    let samples = 360;
    let step = PI / 3.0 / samples as f64;
    let best = (0..samples)
        .map(|i| i as f64 * step)
        .min_by(|x, y| cost(*x).total_cmp(&cost(*y)))
        .unwrap_or(0.0);
    let phi = golden_section(&cost, best - step, best + step, 1e-15);
    let refs = reference(phi);
    let forward = p.vertices().iter().map(|v| nearest(*v, &refs)).fold(0.0, f64::max);
    let backward = refs.iter().map(|v| nearest(*v, p.vertices())).fold(0.0, f64::max);
    forward.max(backward)
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Angular quadrature: Gauss-Legendre nodes per panel and panels per
/// smooth angular interval at the coarse level. The fine level doubles
/// the panels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureParams {
    pub order: usize,
    pub panels: usize,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        Self { order: 8, panels: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolygonPerimeter {
    pub value: f64,
    pub error_estimate: f64,
}

/// Nonlocal perimeter `∫_P ∫_{P^c} K(x - y) dy dx` of a convex polygon.
pub fn per_k_polygon(poly: &Polygon, kernel: &Kernel, quad: &QuadratureParams) -> Result<PolygonPerimeter> {
    if kernel.dim() != 2 {
        return Err(Error::UnsupportedDimension { dim: kernel.dim(), context: "polygon perimeter" });
    }
    if quad.order == 0 || quad.panels == 0 {
        return Err(Error::InvalidParameter("quadrature order and panels must be positive".into()));
    }
    let eval = RayIntegrand::new(poly, kernel);
    let kinks = eval.kink_angles();
    let rule = GaussLegendre::new(quad.order);
    let level = |panels: usize| -> f64 {
        kinks
            .windows(2)
            .map(|w| rule.integrate_composite(w[0], w[1], panels, |t| eval.value(t)))
            .sum::<f64>()
            * 2.0
    };
    let coarse = level(quad.panels);
    let fine = level(2 * quad.panels);
    let error_estimate = (fine - coarse).abs() + 1e-14 * fine.abs();
    if !fine.is_finite() {
        return Err(Error::NonFinite("polygon perimeter".into()));
    }
    Ok(PolygonPerimeter { value: fine, error_estimate })
}

/// `F(θ) = ∫_0^∞ K(r) (|P| - g(r u_θ)) r dr`.
struct RayIntegrand<'a> {
    poly: &'a Polygon,
    kernel: &'a Kernel,
    /// Outward normals and offsets of the difference body `P - P`.
    body: Vec<(Point, f64)>,
}

impl<'a> RayIntegrand<'a> {
    fn new(poly: &'a Polygon, kernel: &'a Kernel) -> Self {
        let v = poly.vertices();
        let diffs: Vec<Point> = v.iter().flat_map(|a| v.iter().map(move |b| sub(*a, *b))).collect();
        let hull = convex_hull(diffs);
        let n = hull.len();
        let body = (0..n)
            .map(|i| {
                let e = sub(hull[(i + 1) % n], hull[i]);
                let normal = scale([e[1], -e[0]], 1.0 / len(e));
                (normal, dot2(normal, hull[i]))
            })
            .collect();
        Self { poly, kernel, body }
    }

    /// Angles in `[0, π]` where the ray structure can change.
    fn kink_angles(&self) -> Vec<f64> {
        let v = self.poly.vertices();
        let n = v.len();
        let mut angles = vec![0.0, PI];
        let mut push = |d: Point| {
            if len(d) > 0.0 {
                angles.push(d[1].atan2(d[0]).rem_euclid(PI));
            }
        };
        for i in 0..n {
            push(sub(v[(i + 1) % n], v[i]));
            for j in 0..n {
                push(sub(v[i], v[j]));
            }
        }
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        angles.retain(|a| (0.0..=PI).contains(a));
        angles
    }

    /// Radial function of `P - P`: `g(r u) > 0` exactly for `r < ρ(θ)`.
    fn reach(&self, u: Point) -> f64 {
        self.body
            .iter()
            .filter(|(nrm, _)| dot2(*nrm, u) > 1e-15)
            .map(|(nrm, off)| off / dot2(*nrm, u))
            .fold(f64::INFINITY, f64::min)
    }

    fn value(&self, theta: f64) -> f64 {
        let u = [theta.cos(), theta.sin()];
        let rho = self.reach(u);
        let v = self.poly.vertices();
        let n = v.len();
        let mut nodes = vec![0.0];
        for i in 0..n {
            let p = v[i];
            let e = sub(v[(i + 1) % n], p);
            let denom = cross(e, u);
            if denom.abs() <= 1e-14 * len(e) {
                continue;
            }
            for w in v {
                let t = cross(e, sub(p, *w)) / denom;
                for r in [t, -t] {
                    if r > 1e-12 * rho && r < rho * (1.0 - 1e-12) {
                        nodes.push(r);
                    }
                }
            }
        }
        nodes.push(rho);
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * rho);

        let area = self.poly.area();
        let h = |r: f64| area - self.poly.covariogram(scale(u, r));
        let k = self.kernel;
        let mut total = 0.0;
        for (idx, w) in nodes.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if idx == 0 {
                // h(r) = c1 r + c2 r² since h(0) = 0.
                let (r1, r2) = (b / 3.0, 2.0 * b / 3.0);
                let (h1, h2) = (h(r1), h(r2));
                let c2 = (h2 / r2 - h1 / r1) / (r2 - r1);
                let c1 = h1 / r1 - c2 * r1;
                total += c1 * k.radial_moment(2, a, b) + c2 * k.radial_moment(3, a, b);
            } else {
                // Expand about the midpoint to keep short pieces well conditioned.
                let m = 0.5 * (a + b);
                let q = (b - a) / 3.0;
                let (hm, h0, hp) = (h(m - q), h(m), h(m + q));
                let d1 = (hp - hm) / (2.0 * q);
                let d2 = (hp - 2.0 * h0 + hm) / (2.0 * q * q);
                let m1 = k.radial_moment(1, a, b);
                let m2 = k.radial_moment(2, a, b);
                let m3 = k.radial_moment(3, a, b);
                total += h0 * m1 + d1 * (m2 - m * m1) + d2 * (m3 - 2.0 * m * m2 + m * m * m1);
            }
        }
        total + area * k.radial_moment(1, rho, f64::INFINITY)
    }
}

/// Andrew's monotone chain, counterclockwise, without collinear points.
fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if cross(sub(b, a), sub(p, b)) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Sweep over unit-area centrally symmetric hexagons: the Voronoi cells of
/// the reduced moduli grid at covolume 1 plus seeded random hexagons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub steps: usize,
    pub random_samples: usize,
    pub seed: u64,
    pub quad: QuadratureParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub moduli: Option<ModuliPoint2D>,
    pub hex: HexParams,
    pub degenerate: bool,
    pub per_k: f64,
    pub error_estimate: f64,
    pub is_regular_hexagon: bool,
    pub is_square: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub argmin: usize,
}

impl SweepTable {
    pub fn best(&self) -> &SweepRow {
        &self.rows[self.argmin]
    }

    pub fn regular(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.is_regular_hexagon)
    }

    pub fn square(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.is_square)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "moduli_a,moduli_b,ax,ay,bx,by,cx,cy,per_k,error_estimate,is_regular_hexagon,is_square"
        )?;
        for r in &self.rows {
            let (ma, mb) = match &r.moduli {
                Some(m) => (m.a.to_string(), m.b.to_string()),
                None => (String::new(), String::new()),
            };
            let h = &r.hex;
            writeln!(
                out,
                "{ma},{mb},{},{},{},{},{},{},{},{},{},{}",
                h.a[0], h.a[1], h.b[0], h.b[1], h.c[0], h.c[1],
                r.per_k, r.error_estimate, r.is_regular_hexagon, r.is_square
            )?;
        }
        Ok(())
    }
}

/// Evaluates the polygon perimeter over the sweep in parallel.
pub fn hexagon_sweep(kernel: &Kernel, spec: &SweepSpec) -> Result<SweepTable> {
    let mut samples: Vec<(Option<ModuliPoint2D>, HexParams, bool, bool)> = Vec::new();
    for point in moduli_grid(1.0, spec.steps.max(1))? {
        let lattice = point.to_lattice()?;
        let cell = match lattice.voronoi_cell()? {
            VoronoiCell::Polygon(p) => p,
            VoronoiCell::Interval(..) => unreachable!("planar lattice"),
        };
        let hex = HexParams::from_polygon(&cell)?.normalized()?;
        let regular = point.is_hexagonal(1e-12);
        let square = point.is_square(1e-12);
        samples.push((Some(point), hex, regular, square));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..spec.random_samples {
        samples.push((None, random_hexagon(&mut rng), false, false));
    }
    let rows = samples
        .into_par_iter()
        .map(|(moduli, hex, is_regular_hexagon, is_square)| {
            let poly = hex.to_polygon()?;
            let p = per_k_polygon(&poly, kernel, &spec.quad)?;
            Ok(SweepRow {
                moduli,
                hex,
                degenerate: hex.is_degenerate(1e-12),
                per_k: p.value,
                error_estimate: p.error_estimate,
                is_regular_hexagon,
                is_square,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let argmin = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.per_k.total_cmp(&b.1.per_k))
        .map(|(i, _)| i)
        .ok_or(Error::NoSamples)?;
    Ok(SweepTable { rows, argmin })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_vertex_gap(p: &Polygon, q: &Polygon) -> f64 {
        let near = |x: Point, set: &[Point]| {
            set.iter().map(|y| len(sub(x, *y))).fold(f64::INFINITY, f64::min)
        };
        let a = p.vertices().iter().map(|x| near(*x, q.vertices())).fold(0.0, f64::max);
        let b = q.vertices().iter().map(|x| near(*x, p.vertices())).fold(0.0, f64::max);
        a.max(b)
    }

    #[test]
    fn polygon_basics() {
        let sq = unit_square();
        assert_eq!(sq.area(), 1.0);
        assert_eq!(sq.centroid(), [0.0, 0.0]);
        assert!(sq.contains([0.5, 0.2]) && !sq.contains([0.6, 0.0]));
        let cw = Polygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!((cw.area() - 0.5).abs() < 1e-15);
        assert!(Polygon::new(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_err());
        let dart = vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.3], [1.0, 2.0]];
        assert!(Polygon::new(dart).is_err());
    }

    #[test]
    fn regular_hexagon_radius() {
        let h = regular_hexagon(1.0);
        let r = len(h.vertices()[0]);
        assert!((r - 0.620403).abs() < 1e-6);
        assert!((h.area() - 1.0).abs() < 1e-14);
        assert!(hexagon_deviation(&h.rotated(0.3).translated([2.0, -1.0])) < 1e-12);
        assert!(hexagon_deviation(&unit_square()) > 0.05);
    }

    #[test]
    fn covariogram_of_square() {
        let sq = unit_square();
        assert!((sq.covariogram([0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((sq.covariogram([0.25, 0.5]) - 0.375).abs() < 1e-15);
        assert_eq!(sq.covariogram([1.5, 0.0]), 0.0);
    }

    #[test]
    fn hex_params_round_trip() {
        let reg = HexParams::regular();
        assert!(!reg.is_degenerate(1e-12));
        assert!((reg.to_polygon().unwrap().area() - 1.0).abs() < 1e-14);
        let sq = HexParams::square();
        assert!(sq.is_degenerate(1e-12));
        let poly = sq.to_polygon().unwrap();
        assert_eq!(poly.vertices().len(), 6);
        assert!((poly.area() - 1.0).abs() < 1e-15);
        assert!(HexParams::new([1.0, 0.0], [2.0, 0.0], [3.0, 0.0]).to_polygon().is_err());
    }

    #[test]
    fn symmetric_input_is_fixed() {
        let sq = unit_square();
        let axis = Axis::new([0.0, 0.0], [1.0, 0.0]).unwrap();
        let out = steiner_symmetrize(&sq, &axis);
        assert!(max_vertex_gap(&sq, &out) < 1e-12);
        let hex = regular_hexagon(1.0);
        let out = steiner_symmetrize(&hex, &Axis::new([0.0, 0.0], [0.0, 1.0]).unwrap());
        assert!(max_vertex_gap(&hex, &out) < 1e-12);
    }

    #[test]
    fn square_about_diagonal_keeps_area_and_width() {
        let sq = unit_square();
        let axis = Axis::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        let out = steiner_symmetrize(&sq, &axis);
        assert!((out.area() - 1.0).abs() < 1e-12);
        assert!((signed_area(out.vertices()) - 1.0).abs() < 1e-12);
        // Symmetrization keeps the width along the axis direction.
        assert!((out.width([1.0, 1.0]) - sq.width([1.0, 1.0])).abs() < 1e-12);
        for k in 0..360 {
            let t = k as f64 * PI / 180.0;
            let d = [t.cos(), t.sin()];
            assert!((out.width(d) - sq.width(d)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetrization_preserves_area_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let hex = random_hexagon(&mut rng).to_polygon().unwrap();
            let dir = rng.gen_range(0.0..PI);
            let axis = Axis::new([0.0, 0.0], [dir.cos(), dir.sin()]).unwrap();
            let out = steiner_symmetrize(&hex, &axis);
            let shoelace = signed_area(out.vertices());
            assert!((shoelace - hex.area()).abs() <= 1e-12 * hex.area());
            assert!(out.is_centrally_symmetric(1e-12));
            assert!(Polygon::new(out.vertices().to_vec()).is_ok());
        }
    }

    #[test]
    fn regularization_of_regular_hexagon() {
        let out = two_step_regularize(&HexParams::regular()).unwrap();
        assert!(out.regular, "deviation {}", out.deviation);
        assert!((out.second.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regularization_of_square_reports_deviation() {
        let out = two_step_regularize(&HexParams::square()).unwrap();
        assert!((signed_area(out.first.vertices()) - 1.0).abs() < 1e-12);
        assert!((signed_area(out.second.vertices()) - 1.0).abs() < 1e-12);
        assert!(out.deviation.is_finite());
    }

    #[test]
    fn gaussian_perimeter_of_square_matches_product_formula() {
        // For separable K = e^{-x²} e^{-y²} and the unit square the covariogram
        // factorizes, giving Per = π - (∫∫_{[0,1]²} e^{-(x-y)²})².
        let k = Kernel::gaussian(1.0, 2).unwrap();
        let p = per_k_polygon(&unit_square(), &k, &QuadratureParams::default()).unwrap();
        let one_d = PI.sqrt() * libm::erf(1.0) + (-1f64).exp() - 1.0;
        let exact = PI - one_d * one_d;
        assert!((p.value - exact).abs() < 1e-10, "{} vs {exact}", p.value);
        assert!(p.error_estimate < 1e-8);
    }

    #[test]
    fn indicator_perimeter_matches_direct_formula() {
        // Small radius: Per = ∫ χ_{B_r}(z) (1 - (1-|z_x|)(1-|z_y|)) dz on the square.
        let r: f64 = 0.3;
        let k = Kernel::indicator(r, 2).unwrap();
        let p = per_k_polygon(&unit_square(), &k, &QuadratureParams::default()).unwrap();
        // ∫_{B_r} (|x| + |y| - |x||y|) = 8r³/3 - r⁴/2.
        let exact = 8.0 * r.powi(3) / 3.0 - r.powi(4) / 2.0;
        assert!((p.value - exact).abs() < 1e-12, "{} vs {exact}", p.value);
    }

    #[test]
    fn hexagon_beats_square() {
        let k = Kernel::gaussian(1.0, 2).unwrap();
        let q = QuadratureParams::default();
        let hex = per_k_polygon(&regular_hexagon(1.0), &k, &q).unwrap();
        let sq = per_k_polygon(&unit_square(), &k, &q).unwrap();
        assert!(hex.value < sq.value);
    }

    #[test]
    fn translation_and_scaling() {
        let k = Kernel::fractional(1.0, 0.5, 2).unwrap();
        let q = QuadratureParams::default();
        let hex = regular_hexagon(1.0);
        let base = per_k_polygon(&hex, &k, &q).unwrap().value;
        let moved = per_k_polygon(&hex.translated([3.0, -2.0]), &k, &q).unwrap().value;
        assert!((base - moved).abs() < 1e-9 * base);
        for lambda in [0.5, 2.0] {
            let v = per_k_polygon(&hex.scaled(lambda), &k, &q).unwrap().value;
            let expect = lambda.powf(1.5) * base;
            assert!((v - expect).abs() < 1e-9 * expect, "{v} vs {expect}");
        }
    }

    #[test]
    fn perimeter_rejects_wrong_dimension() {
        let k = Kernel::gaussian(1.0, 3).unwrap();
        assert!(per_k_polygon(&unit_square(), &k, &QuadratureParams::default()).is_err());
    }

    #[test]
    fn small_sweep_has_mandatory_rows() {
        let k = Kernel::gaussian(1.0, 2).unwrap();
        let spec = SweepSpec { steps: 3, random_samples: 2, seed: 1, quad: QuadratureParams::default() };
        let table = hexagon_sweep(&k, &spec).unwrap();
        assert!(table.regular().is_some() && table.square().is_some());
        assert!(table.best().is_regular_hexagon);
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), table.rows.len() + 1);
    }
}
