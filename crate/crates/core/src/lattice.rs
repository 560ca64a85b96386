//! Lattices in dimension 1 to 3.
//!
//! A [`Lattice`] stores its basis as a list of column vectors. Reduction is
//! Lagrange-Gauss in 2D and pairwise size reduction with swap passes in 3D.
//! Shortest vectors, ball enumeration and nearest-point queries all enumerate
//! integer coefficient boxes whose half-widths come from the rows of the
//! inverse basis, so they are exact for any basis (reduction only keeps the
//! boxes small).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polygon2d::Polygon;

/// Declared product bound `∏|v_i| ≤ C_N · covolume` for reduced bases.
pub const PRODUCT_BOUND_2D: f64 = 1.154_700_538_379_251_5; // 2/√3
pub const PRODUCT_BOUND_3D: f64 = 2.0;

/// Lower edge of the moduli grid, as a fraction of `√m`.
pub const MODULI_A_MIN_FRACTION: f64 = 0.6;

const SINGULAR_TOL: f64 = 1e-12;

/// Serialized as `{"dim": N, "basis": [[...], ...]}` with one list per basis
/// vector; the covolume is always recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeJson", into = "LatticeJson")]
pub struct Lattice {
    basis: Vec<Vec<f64>>,
    covolume: f64,
}

#[derive(Serialize, Deserialize)]
struct LatticeJson {
    dim: usize,
    basis: Vec<Vec<f64>>,
}

impl TryFrom<LatticeJson> for Lattice {
    type Error = Error;

    fn try_from(value: LatticeJson) -> Result<Self> {
        if value.basis.len() != value.dim {
            return Err(Error::DegenerateLattice(format!(
                "dim {} but {} basis vectors",
                value.dim,
                value.basis.len()
            )));
        }
        Lattice::new(value.basis)
    }
}

impl From<Lattice> for LatticeJson {
    fn from(value: Lattice) -> Self {
        Self { dim: value.dim(), basis: value.basis }
    }
}

/// `|det|` of the matrix whose columns are `basis`.
pub fn covolume(basis: &[Vec<f64>]) -> Result<f64> {
    let dim = basis.len();
    if !(1..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension { dim, context: "lattice basis" });
    }
    if basis.iter().any(|v| v.len() != dim) {
        return Err(Error::DegenerateLattice(format!(
            "basis vectors must have length {dim}"
        )));
    }
    if basis.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateLattice("non-finite basis entry".into()));
    }
    let det = determinant(basis).abs();
    let scale: f64 = basis.iter().map(|v| norm(v)).product();
    if det <= SINGULAR_TOL * scale.max(f64::MIN_POSITIVE) || det == 0.0 {
        return Err(Error::DegenerateLattice("singular basis".into()));
    }
    Ok(det)
}

impl Lattice {
    pub fn new(basis: Vec<Vec<f64>>) -> Result<Self> {
        let covolume = covolume(&basis)?;
        Ok(Self { basis, covolume })
    }

    pub fn integer(dim: usize) -> Result<Self> {
        Self::new(
            (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    /// Hexagonal lattice with unit minimum distance.
    pub fn hexagonal() -> Self {
        Self::new(vec![vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]]).expect("hexagonal basis")
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn covolume(&self) -> f64 {
        self.covolume
    }

    /// Uniform rescaling by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.basis
                .iter()
                .map(|v| v.iter().map(|x| x * factor).collect())
                .collect(),
        )
    }

    /// Point `Σ c_i v_i`.
    pub fn point(&self, coeffs: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        let mut out = vec![0.0; dim];
        for (c, v) in coeffs.iter().zip(&self.basis) {
            for k in 0..dim {
                out[k] += c * v[k];
            }
        }
        out
    }

    /// Lattice coordinates `B⁻¹ x`.
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        let inv = inverse(&self.basis);
        (0..self.dim())
            .map(|i| inv[i].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Equivalent basis after reduction; the covolume is carried over unchanged.
    pub fn reduce(&self) -> Self {
        let mut basis = self.basis.clone();
        match basis.len() {
            1 => {}
            2 => lagrange_gauss(&mut basis),
            _ => pairwise_reduce(&mut basis),
        }
        for v in basis.iter_mut() {
            canonical_sign(v);
        }
        Self { basis, covolume: self.covolume }
    }

    pub fn product_bound_constant(&self) -> f64 {
        match self.dim() {
            1 => 1.0,
            2 => PRODUCT_BOUND_2D,
            _ => PRODUCT_BOUND_3D,
        }
    }

    /// `∏|v_i| / covolume`; at most the declared constant after reduction.
    pub fn orthogonality_defect(&self) -> f64 {
        self.basis.iter().map(|v| norm(v)).product::<f64>() / self.covolume
    }

    /// Longest basis vector length.
    pub fn max_basis_length(&self) -> f64 {
        self.basis.iter().map(|v| norm(v)).fold(0.0, f64::max)
    }

    /// Diameter of the fundamental parallelepiped spanned by the basis.
    pub fn cell_diameter(&self) -> f64 {
        let dim = self.dim();
        let mut best: f64 = 0.0;
        for mask in 0..(1usize << dim) {
            let coeffs: Vec<f64> = (0..dim)
                .map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            // The diagonal with sign pattern `coeffs` has length |Σ ±v_i|.
            best = best.max(norm(&self.point(&coeffs)));
        }
        best
    }

    /// Enumerates integer coefficient vectors `c` such that every lattice
    /// point within `radius` of `center` appears, plus some outside.
    fn coefficient_box(&self, center: &[f64], radius: f64) -> Vec<Vec<i64>> {
        let inv = inverse(&self.basis);
        let c0 = self.coordinates(center);
        let ranges: Vec<(i64, i64)> = (0..self.dim())
            .map(|i| {
                let w = norm(&inv[i]) * radius;
                ((c0[i] - w).floor() as i64, (c0[i] + w).ceil() as i64)
            })
            .collect();
        let mut out = Vec::new();
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(cur.clone());
            let mut axis = 0;
            loop {
                if axis == cur.len() {
                    return out;
                }
                cur[axis] += 1;
                if cur[axis] <= ranges[axis].1 {
                    break;
                }
                cur[axis] = ranges[axis].0;
                axis += 1;
            }
        }
    }

    /// All lattice points `g` with `|g - center| ≤ radius`.
    pub fn points_near(&self, center: &[f64], radius: f64) -> Vec<Vec<f64>> {
        let reduced = self.reduce();
        reduced
            .coefficient_box(center, radius)
            .into_iter()
            .map(|c| reduced.point(&c.iter().map(|&x| x as f64).collect::<Vec<_>>()))
            .filter(|g| dist(g, center) <= radius)
            .collect()
    }

    /// All lattice points in the closed ball `B(0, radius)`.
    pub fn points_in_ball(&self, radius: f64) -> Vec<Vec<f64>> {
        self.points_near(&vec![0.0; self.dim()], radius)
    }

    /// Length of the shortest nonzero lattice vector.
    pub fn min_distance(&self) -> f64 {
        let reduced = self.reduce();
        let bound = reduced
            .basis
            .iter()
            .map(|v| norm(v))
            .fold(f64::INFINITY, f64::min);
        reduced
            .points_in_ball(bound * (1.0 + 1e-12))
            .iter()
            .map(|g| norm(g))
            .filter(|&r| r > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Closest lattice point to `x` (ties broken by enumeration order).
    pub fn nearest_point(&self, x: &[f64]) -> Vec<f64> {
        let reduced = self.reduce();
        let c: Vec<f64> = reduced.coordinates(x).iter().map(|c| c.round()).collect();
        let guess = reduced.point(&c);
        let radius = dist(&guess, x) * (1.0 + 1e-12) + 1e-300;
        reduced
            .points_near(x, radius)
            .into_iter()
            .fold((guess.clone(), dist(&guess, x)), |best, g| {
                let d = dist(&g, x);
                if d < best.1 {
                    (g, d)
                } else {
                    best
                }
            })
            .0
    }

    /// Distance from `x` to the nearest lattice point.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        dist(&self.nearest_point(x), x)
    }

    /// Representative of `x` modulo the lattice inside the Voronoi cell.
    pub fn reduce_to_voronoi(&self, x: &[f64]) -> Vec<f64> {
        let g = self.nearest_point(x);
        x.iter().zip(&g).map(|(a, b)| a - b).collect()
    }

    /// Covering radius upper bound: half the diameter of the reduced cell.
    pub fn covering_radius_bound(&self) -> f64 {
        0.5 * self.reduce().cell_diameter()
    }

    /// Voronoi cell of the origin.
    pub fn voronoi_cell(&self) -> Result<VoronoiCell> {
        match self.dim() {
            1 => {
                let half = self.basis[0][0].abs() / 2.0;
                Ok(VoronoiCell::Interval(-half, half))
            }
            2 => {
                let reduced = self.reduce();
                let cutoff = 2.0 * reduced.max_basis_length();
                let big = reduced.basis.iter().map(|v| norm(v)).sum::<f64>();
                let mut cell = vec![[-big, -big], [big, -big], [big, big], [-big, big]];
                for g in reduced.points_in_ball(cutoff) {
                    let n2 = g[0] * g[0] + g[1] * g[1];
                    if n2 == 0.0 {
                        continue;
                    }
                    cell = clip_halfplane(&cell, [g[0], g[1]], n2 / 2.0);
                }
                Ok(VoronoiCell::Polygon(Polygon::new(cell)?))
            }
            dim => Err(Error::UnsupportedDimension { dim, context: "Voronoi cell" }),
        }
    }
}

/// Voronoi cell of a 1D or 2D lattice.
#[derive(Debug, Clone)]
pub enum VoronoiCell {
    Interval(f64, f64),
    Polygon(Polygon),
}

impl VoronoiCell {
    pub fn measure(&self) -> f64 {
        match self {
            VoronoiCell::Interval(a, b) => b - a,
            VoronoiCell::Polygon(p) => p.area(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            VoronoiCell::Interval(a, b) => x[0] >= *a && x[0] < *b,
            VoronoiCell::Polygon(p) => p.contains([x[0], x[1]]),
        }
    }
}

/// Keeps the part of a convex polygon with `⟨n, x⟩ ≤ offset`.
pub(crate) fn clip_halfplane(poly: &[[f64; 2]], n: [f64; 2], offset: f64) -> Vec<[f64; 2]> {
    let side = |p: &[f64; 2]| n[0] * p[0] + n[1] * p[1] - offset;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (sp, sq) = (side(&p), side(&q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Hausdorff-type distance between `G1 ∩ B(0,r)` and `G2 ∩ B(0,r)`.
///
/// Each truncated set is compared against the full other lattice, which makes
/// the value stable when points sit near the sphere `|x| = r`.
pub fn kuratowski_distance(g1: &Lattice, g2: &Lattice, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("radius must be positive".into()));
    }
    if g1.dim() != g2.dim() {
        return Err(Error::InvalidParameter("lattices must share a dimension".into()));
    }
    let one_sided = |a: &Lattice, b: &Lattice| {
        a.points_in_ball(radius)
            .iter()
            .map(|p| b.distance_to(p))
            .fold(0.0, f64::max)
    };
    Ok(one_sided(g1, g2).max(one_sided(g2, g1)))
}

/// Point of the 2D moduli space: basis `v1 = (a, 0)`, `v2 = (b, m/a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuliPoint2D {
    pub a: f64,
    pub b: f64,
    pub m: f64,
}

impl ModuliPoint2D {
    pub fn square(m: f64) -> Self {
        Self { a: m.sqrt(), b: 0.0, m }
    }

    pub fn hexagonal(m: f64) -> Self {
        let a = (2.0 * m / 3f64.sqrt()).sqrt();
        Self { a, b: a / 2.0, m }
    }

    /// Smallest admissible `b` for a given `a` in the reduced cell.
    pub fn b_min(a: f64, m: f64) -> f64 {
        let h = m / a;
        (a * a - h * h).max(0.0).sqrt()
    }

    pub fn is_reduced(&self, tol: f64) -> bool {
        let h = self.m / self.a;
        self.a > 0.0
            && self.m > 0.0
            && self.b >= -tol
            && self.b <= self.a / 2.0 + tol
            && self.a * self.a <= self.b * self.b + h * h + tol
    }

    pub fn to_lattice(&self) -> Result<Lattice> {
        Lattice::new(vec![vec![self.a, 0.0], vec![self.b, self.m / self.a]])
    }

    /// Moduli coordinates of a 2D lattice (up to rotation and reflection).
    pub fn from_lattice(lattice: &Lattice) -> Result<Self> {
        if lattice.dim() != 2 {
            return Err(Error::UnsupportedDimension { dim: lattice.dim(), context: "moduli" });
        }
        let r = lattice.reduce();
        let (v1, v2) = (&r.basis[0], &r.basis[1]);
        let a = norm(v1);
        let b = (dot(v1, v2) / a).abs();
        Ok(Self { a, b, m: r.covolume })
    }

    /// Euclidean distance in the `(a, b)` chart.
    pub fn distance(&self, other: &Self) -> f64 {
        ((self.a - other.a).powi(2) + (self.b - other.b).powi(2)).sqrt()
    }

    pub fn is_square(&self, tol: f64) -> bool {
        self.distance(&Self::square(self.m)) <= tol
    }

    pub fn is_hexagonal(&self, tol: f64) -> bool {
        self.distance(&Self::hexagonal(self.m)) <= tol
    }
}

/// Grid over the reduced moduli cell with the square and hexagonal points
/// always included.
///
/// `a` runs over `steps` values in `[0.6√m, a_hex]` and, for each `a`, `b`
/// runs over `steps` values in `[b_min(a), a/2]`. Duplicates are dropped.
pub fn moduli_grid(m: f64, steps: usize) -> Result<Vec<ModuliPoint2D>> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter("covolume must be positive".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    let hex = ModuliPoint2D::hexagonal(m);
    let square = ModuliPoint2D::square(m);
    let a_lo = MODULI_A_MIN_FRACTION * m.sqrt();
    let frac = |i: usize| if steps == 1 { 1.0 } else { i as f64 / (steps - 1) as f64 };
    let mut out: Vec<ModuliPoint2D> = Vec::new();
    let push = |p: ModuliPoint2D, out: &mut Vec<ModuliPoint2D>| {
        if !out.iter().any(|q| q.distance(&p) <= 1e-12 * m.sqrt()) {
            out.push(p);
        }
    };
    for i in 0..steps {
        let a = if i + 1 == steps { hex.a } else { a_lo + (hex.a - a_lo) * frac(i) };
        let b_lo = ModuliPoint2D::b_min(a, m);
        let b_hi = a / 2.0;
        for j in 0..steps {
            let b = if j + 1 == steps { b_hi } else { b_lo + (b_hi - b_lo) * frac(j) };
            push(ModuliPoint2D { a, b: b.min(b_hi), m }, &mut out);
        }
    }
    push(square, &mut out);
    push(hex, &mut out);
    Ok(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn determinant(basis: &[Vec<f64>]) -> f64 {
    let c = |i: usize, j: usize| basis[j][i];
    match basis.len() {
        1 => c(0, 0),
        2 => c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0),
        _ => {
            c(0, 0) * (c(1, 1) * c(2, 2) - c(1, 2) * c(2, 1))
                - c(0, 1) * (c(1, 0) * c(2, 2) - c(1, 2) * c(2, 0))
                + c(0, 2) * (c(1, 0) * c(2, 1) - c(1, 1) * c(2, 0))
        }
    }
}

/// Rows of the inverse of the column matrix `basis`.
fn inverse(basis: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let det = determinant(basis);
    let c = |i: usize, j: usize| basis[j][i];
    match basis.len() {
        1 => vec![vec![1.0 / det]],
        2 => vec![
            vec![c(1, 1) / det, -c(0, 1) / det],
            vec![-c(1, 0) / det, c(0, 0) / det],
        ],
        _ => {
            let mut inv = vec![vec![0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    // Cofactor of entry (j, i) of the matrix gives inverse entry (i, j).
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    inv[i][j] = (c(r0, c0) * c(r1, c1) - c(r0, c1) * c(r1, c0)) / det;
                }
            }
            inv
        }
    }
}

fn lagrange_gauss(basis: &mut [Vec<f64>]) {
    for _ in 0..10_000 {
        if longer(&basis[0], &basis[1]) {
            basis.swap(0, 1);
        }
        let n0 = dot(&basis[0], &basis[0]);
        let mu = size_coefficient(dot(&basis[0], &basis[1]) / n0);
        if mu == 0.0 {
            break;
        }
        let v0 = basis[0].clone();
        for (x, y) in basis[1].iter_mut().zip(&v0) {
            *x -= mu * y;
        }
    }
    if longer(&basis[0], &basis[1]) {
        basis.swap(0, 1);
    }
}

/// Strictly longer beyond rounding noise, so ties keep their order.
fn longer(a: &[f64], b: &[f64]) -> bool {
    norm(a) > norm(b) * (1.0 + 1e-12)
}

/// Nearest integer to `ratio`, with ratios at ±½ (up to rounding) mapped to 0.
fn size_coefficient(ratio: f64) -> f64 {
    if ratio.abs() <= 0.5 + 1e-12 {
        0.0
    } else {
        ratio.round()
    }
}

fn pairwise_reduce(basis: &mut [Vec<f64>]) {
    for _ in 0..10_000 {
        basis.sort_by(|a, b| norm(a).total_cmp(&norm(b)));
        let mut changed = false;
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                if i == j {
                    continue;
                }
                let ni = dot(&basis[i], &basis[i]);
                let mu = size_coefficient(dot(&basis[i], &basis[j]) / ni);
                if mu != 0.0 {
                    let vi = basis[i].clone();
                    let candidate: Vec<f64> =
                        basis[j].iter().zip(&vi).map(|(x, y)| x - mu * y).collect();
                    if norm(&candidate) < norm(&basis[j]) * (1.0 - 1e-14) {
                        basis[j] = candidate;
                        changed = true;
                    }
                }
            }
        }
        // Try v_k ± v_i ± v_j combinations, which pairwise steps miss.
        for k in 0..basis.len() {
            let others: Vec<usize> = (0..basis.len()).filter(|&x| x != k).collect();
            for si in [-1.0, 1.0] {
                for sj in [-1.0, 1.0] {
                    let candidate: Vec<f64> = (0..basis.len())
                        .map(|c| {
                            basis[k][c] + si * basis[others[0]][c] + sj * basis[others[1]][c]
                        })
                        .collect();
                    if norm(&candidate) < norm(&basis[k]) * (1.0 - 1e-14) {
                        basis[k] = candidate;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    basis.sort_by(|a, b| norm(a).total_cmp(&norm(b)));
}

/// Flips `v` so that its first nonzero coordinate is positive.
fn canonical_sign(v: &mut [f64]) {
    if let Some(&lead) = v.iter().find(|x| x.abs() > 0.0) {
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}
