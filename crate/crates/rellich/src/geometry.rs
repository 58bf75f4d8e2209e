//! Exact distance fields `d`, `∇d`, `Δd` for the model geometries, plus the
//! sampled checker for the sign condition `(k+s-p)(dΔd - k + 1) ≥ 0`.
//!
//! Only geometries with closed-form distance are admitted: a point, an
//! affine subspace of codimension `k`, the boundary of a ball, the two walls
//! of a slab, and the boundary of a convex polygon in the plane.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point lies on the singular set K (d = {d})")]
    OnSingularSet { d: f64 },
    #[error("point lies outside the domain")]
    OutsideDomain,
    #[error("p = k + s = {p} is excluded by the sign condition")]
    DegenerateExponents { p: f64 },
    #[error("dimension mismatch: field is in R^{expected}, point in R^{got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polygon must be convex with vertices in counterclockwise order")]
    NotConvex,
    #[error("polygon needs at least 3 vertices, got {got}")]
    TooFewVertices { got: usize },
    #[error("descriptor parameter {name} = {value} must be positive")]
    BadParameter { name: &'static str, value: f64 },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// A distance field with exact `d`, `∇d` (unit a.e.) and `Δd`.
#[derive(Debug, Clone)]
pub enum DistanceField {
    /// `K = {center}` in `R^N`, `Ω` the ball of radius `omega_radius` around it.
    /// `d = |x - c|`, `Δd = (N-1)/d`, codimension `k = N`.
    PointSet {
        dim: usize,
        center: Vec<f64>,
        omega_radius: f64,
    },
    /// `K` an affine flat of codimension `k` through `origin`, spanned
    /// orthogonally by `normals` (an orthonormal basis of the normal space).
    /// `Ω` is the tube `d < omega_radius`. `Δd = (k-1)/d` exactly.
    AffineSubspace {
        dim: usize,
        origin: Vec<f64>,
        normals: Vec<Vec<f64>>,
        omega_radius: f64,
    },
    /// `Ω` the ball of radius `r0`, `K = ∂Ω`: `d = r0 - |x|`,
    /// `Δd = -(N-1)/|x|`, codimension 1.
    BallBoundary { dim: usize, r0: f64 },
    /// `Ω = (0, L) × R^{N-1}`, `K` the two walls: `d = min(t, L-t)` in the
    /// first coordinate, `Δd = 0` a.e., codimension 1.
    SlabBoundary { dim: usize, length: f64 },
    /// Convex polygon interior in the plane, `K = ∂Ω`. `Δd = 0` off the
    /// medial axis and a nonpositive measure on it.
    ConvexPolygonBoundary { vertices: Vec<[f64; 2]> },
}

/// Pointwise field data. `medial_axis` flags polygon points equidistant to
/// two or more edges, where `Δd` is distributional and reported as 0.
#[derive(Debug, Clone)]
pub struct FieldPoint {
    pub d: f64,
    pub grad: Vec<f64>,
    pub laplacian: f64,
    pub medial_axis: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

impl DistanceField {
    pub fn point(dim: usize, omega_radius: f64) -> Result<Self> {
        if omega_radius <= 0.0 {
            return Err(GeometryError::BadParameter {
                name: "omega_radius",
                value: omega_radius,
            });
        }
        Ok(Self::PointSet {
            dim,
            center: vec![0.0; dim],
            omega_radius,
        })
    }

    /// Axis-aligned flat of codimension `k`: the normal space is spanned by
    /// the first `k` coordinate directions.
    pub fn subspace(dim: usize, codim: usize, omega_radius: f64) -> Result<Self> {
        if omega_radius <= 0.0 {
            return Err(GeometryError::BadParameter {
                name: "omega_radius",
                value: omega_radius,
            });
        }
        let mut normals = Vec::with_capacity(codim);
        for j in 0..codim {
            let mut n = vec![0.0; dim];
            n[j] = 1.0;
            normals.push(n);
        }
        Ok(Self::AffineSubspace {
            dim,
            origin: vec![0.0; dim],
            normals,
            omega_radius,
        })
    }

    pub fn ball(dim: usize, r0: f64) -> Result<Self> {
        if r0 <= 0.0 {
            return Err(GeometryError::BadParameter {
                name: "r0",
                value: r0,
            });
        }
        Ok(Self::BallBoundary { dim, r0 })
    }

    pub fn slab(dim: usize, length: f64) -> Result<Self> {
        if length <= 0.0 {
            return Err(GeometryError::BadParameter {
                name: "length",
                value: length,
            });
        }
        Ok(Self::SlabBoundary { dim, length })
    }

    pub fn convex_polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices {
                got: vertices.len(),
            });
        }
        // counterclockwise strict convexity via cross products
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross <= 0.0 {
                return Err(GeometryError::NotConvex);
            }
        }
        Ok(Self::ConvexPolygonBoundary { vertices })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::PointSet { dim, .. }
            | Self::AffineSubspace { dim, .. }
            | Self::BallBoundary { dim, .. }
            | Self::SlabBoundary { dim, .. } => *dim,
            Self::ConvexPolygonBoundary { .. } => 2,
        }
    }

    /// Codimension of `K`.
    pub fn codim(&self) -> usize {
        match self {
            Self::PointSet { dim, .. } => *dim,
            Self::AffineSubspace { normals, .. } => normals.len(),
            _ => 1,
        }
    }

    /// `sup_Ω d`, exact per variant (the polygon via its Chebyshev center).
    pub fn sup_distance(&self) -> f64 {
        match self {
            Self::PointSet { omega_radius, .. } | Self::AffineSubspace { omega_radius, .. } => {
                *omega_radius
            }
            Self::BallBoundary { r0, .. } => *r0,
            Self::SlabBoundary { length, .. } => 0.5 * length,
            Self::ConvexPolygonBoundary { vertices } => chebyshev_radius(vertices),
        }
    }

    /// Evaluates `(d, ∇d, Δd)` at an interior point off `K`.
    pub fn eval(&self, x: &[f64]) -> Result<FieldPoint> {
        if x.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        match self {
            Self::PointSet {
                dim,
                center,
                omega_radius,
            } => {
                let y: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                let d = norm(&y);
                if d == 0.0 {
                    return Err(GeometryError::OnSingularSet { d });
                }
                if d >= *omega_radius {
                    return Err(GeometryError::OutsideDomain);
                }
                Ok(FieldPoint {
                    d,
                    grad: y.iter().map(|a| a / d).collect(),
                    laplacian: (*dim as f64 - 1.0) / d,
                    medial_axis: false,
                })
            }
            Self::AffineSubspace {
                dim: _,
                origin,
                normals,
                omega_radius,
            } => {
                let rel: Vec<f64> = x.iter().zip(origin).map(|(a, o)| a - o).collect();
                let mut y = vec![0.0; x.len()];
                for n in normals {
                    let c: f64 = rel.iter().zip(n).map(|(a, b)| a * b).sum();
                    for (yi, ni) in y.iter_mut().zip(n) {
                        *yi += c * ni;
                    }
                }
                let d = norm(&y);
                if d == 0.0 {
                    return Err(GeometryError::OnSingularSet { d });
                }
                if d >= *omega_radius {
                    return Err(GeometryError::OutsideDomain);
                }
                let k = normals.len() as f64;
                Ok(FieldPoint {
                    d,
                    grad: y.iter().map(|a| a / d).collect(),
                    laplacian: (k - 1.0) / d,
                    medial_axis: false,
                })
            }
            Self::BallBoundary { dim, r0 } => {
                let rho = norm(x);
                if rho >= *r0 {
                    return Err(if rho == *r0 {
                        GeometryError::OnSingularSet { d: 0.0 }
                    } else {
                        GeometryError::OutsideDomain
                    });
                }
                let d = r0 - rho;
                if rho == 0.0 {
                    // the center is the medial axis of the ball
                    return Ok(FieldPoint {
                        d,
                        grad: vec![0.0; *dim],
                        laplacian: 0.0,
                        medial_axis: true,
                    });
                }
                Ok(FieldPoint {
                    d,
                    grad: x.iter().map(|a| -a / rho).collect(),
                    laplacian: -(*dim as f64 - 1.0) / rho,
                    medial_axis: false,
                })
            }
            Self::SlabBoundary { dim, length } => {
                let t = x[0];
                if t <= 0.0 || t >= *length {
                    return Err(if t == 0.0 || t == *length {
                        GeometryError::OnSingularSet { d: 0.0 }
                    } else {
                        GeometryError::OutsideDomain
                    });
                }
                let mut grad = vec![0.0; *dim];
                let (d, medial) = if (t - 0.5 * length).abs() < 1e-12 * length {
                    grad[0] = 0.0;
                    (0.5 * length, true)
                } else if t < 0.5 * length {
                    grad[0] = 1.0;
                    (t, false)
                } else {
                    grad[0] = -1.0;
                    (length - t, false)
                };
                Ok(FieldPoint {
                    d,
                    grad,
                    laplacian: 0.0,
                    medial_axis: medial,
                })
            }
            Self::ConvexPolygonBoundary { vertices } => {
                let scale = polygon_scale(vertices);
                let mut best = f64::INFINITY;
                let mut second = f64::INFINITY;
                let mut grad = vec![0.0; 2];
                for (n_in, b) in polygon_edges(vertices) {
                    // distance to the edge line, positive on the interior side
                    let dist = n_in[0] * x[0] + n_in[1] * x[1] - b;
                    if dist <= 0.0 {
                        return Err(if dist == 0.0 {
                            GeometryError::OnSingularSet { d: 0.0 }
                        } else {
                            GeometryError::OutsideDomain
                        });
                    }
                    if dist < best {
                        second = best;
                        best = dist;
                        // d grows inward from the nearest edge
                        grad = vec![n_in[0], n_in[1]];
                    } else if dist < second {
                        second = dist;
                    }
                }
                let medial = (second - best).abs() <= 1e-12 * scale;
                Ok(FieldPoint {
                    d: best,
                    grad: if medial { vec![0.0, 0.0] } else { grad },
                    laplacian: 0.0,
                    medial_axis: medial,
                })
            }
        }
    }

    /// Draws points uniformly from a box cover of `Ω`, rejecting exterior and
    /// near-singular draws. Deterministic in the seed.
    pub fn sample_interior(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.dim();
        let mut pts = Vec::with_capacity(count);
        let sup = self.sup_distance();
        while pts.len() < count {
            let x: Vec<f64> = match self {
                Self::PointSet { omega_radius, .. }
                | Self::AffineSubspace { omega_radius, .. } => (0..dim)
                    .map(|_| rng.random_range(-omega_radius..*omega_radius))
                    .collect(),
                Self::BallBoundary { r0, .. } => {
                    (0..dim).map(|_| rng.random_range(-r0..*r0)).collect()
                }
                Self::SlabBoundary { length, .. } => {
                    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                    v[0] = rng.random_range(0.0..*length);
                    v
                }
                Self::ConvexPolygonBoundary { vertices } => {
                    let (lo, hi) = polygon_bbox(vertices);
                    vec![
                        rng.random_range(lo[0]..hi[0]),
                        rng.random_range(lo[1]..hi[1]),
                    ]
                }
            };
            if let Ok(fp) = self.eval(&x) {
                // keep clear of K and of medial kinks
                if fp.d > 1e-6 * sup && !fp.medial_axis {
                    pts.push(x);
                }
            }
        }
        pts
    }
}

fn polygon_edges(vertices: &[[f64; 2]]) -> Vec<([f64; 2], f64)> {
    // inward unit normal n and offset b with the interior satisfying n·x < b…
    // stored as (n_in, b) with n_in·x > b on the interior
    let n = vertices.len();
    let mut edges = Vec::with_capacity(n);
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let e = [b[0] - a[0], b[1] - a[1]];
        let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
        // counterclockwise order: inward normal is the left-hand normal
        let n_in = [-e[1] / len, e[0] / len];
        let offset = n_in[0] * a[0] + n_in[1] * a[1];
        edges.push((n_in, offset));
    }
    edges
}

fn polygon_bbox(vertices: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for v in vertices {
        for j in 0..2 {
            lo[j] = lo[j].min(v[j]);
            hi[j] = hi[j].max(v[j]);
        }
    }
    (lo, hi)
}

fn polygon_scale(vertices: &[[f64; 2]]) -> f64 {
    let (lo, hi) = polygon_bbox(vertices);
    (hi[0] - lo[0]).max(hi[1] - lo[1])
}

/// Inradius via the Chebyshev center: maximize `r` subject to
/// `dist(x, edge_i) ≥ r`. The optimum activates two or three edges, so all
/// small systems are enumerated directly.
fn chebyshev_radius(vertices: &[[f64; 2]]) -> f64 {
    let edges = polygon_edges(vertices);
    let m = edges.len();
    let feasible = |x: f64, y: f64, r: f64| {
        edges
            .iter()
            .all(|(n, b)| n[0] * x + n[1] * y - b >= r - 1e-9 * polygon_scale(vertices))
    };
    let mut best = 0.0f64;
    for i in 0..m {
        for j in (i + 1)..m {
            for k in (j + 1)..m {
                // solve n_l·x - r = b_l for the three active edges
                let rows = [&edges[i], &edges[j], &edges[k]];
                let a = [
                    [rows[0].0[0], rows[0].0[1], -1.0],
                    [rows[1].0[0], rows[1].0[1], -1.0],
                    [rows[2].0[0], rows[2].0[1], -1.0],
                ];
                let rhs = [rows[0].1, rows[1].1, rows[2].1];
                if let Some(sol) = solve3(a, rhs) {
                    let (x, y, r) = (sol[0], sol[1], sol[2]);
                    if r > best && feasible(x, y, r) {
                        best = r;
                    }
                }
            }
        }
    }
    best
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-14 {
        return None;
    }
    let mut out = [0.0; 3];
    for col in 0..3 {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        out[col] = det(m) / d;
    }
    Some(out)
}

/// Outcome of the sampled sign-condition check.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub k: f64,
    pub s: f64,
    pub p: f64,
    /// min over samples of `(k+s-p)(dΔd - k + 1)`
    pub min_value: f64,
    pub samples: usize,
    pub passed: bool,
    /// status of the sufficient condition `s + 1 - p < 0` for convex
    /// boundary-distance geometries (`k = 1`)
    pub convex_note: Option<String>,
    /// max of the weak-form functionals `∫ d Δφ dx` for the polygon checker
    pub weak_form_max: Option<f64>,
}

/// Evaluates the sign of `(k+s-p)(dΔd - k + 1)` at sampled interior points.
/// For the polygon the pointwise product is zero a.e.; the distributional
/// content is checked weakly as `∫ d Δφ dx ≤ tol` over nonnegative bumps.
pub fn check_condition(
    field: &DistanceField,
    k: f64,
    s: f64,
    p: f64,
    samples: &[Vec<f64>],
) -> Result<ConditionReport> {
    if k + s == p {
        return Err(GeometryError::DegenerateExponents { p });
    }
    let factor = k + s - p;
    let mut min_value = f64::INFINITY;
    let mut used = 0usize;
    for x in samples {
        let fp = field.eval(x)?;
        if fp.medial_axis {
            continue;
        }
        let value = factor * (fp.d * fp.laplacian - k + 1.0);
        min_value = min_value.min(value);
        used += 1;
    }
    let mut weak_form_max = None;
    if let DistanceField::ConvexPolygonBoundary { vertices } = field {
        let wf = polygon_weak_form_max(vertices);
        // Δd ≤ 0 distributionally needs factor ≤ 0 … = (k+s-p) ≤ 0 to pass
        let scale = polygon_scale(vertices);
        let ok = if factor <= 0.0 {
            wf <= 1e-6 * scale
        } else {
            false
        };
        weak_form_max = Some(wf);
        let passed = min_value >= -1e-12 && ok;
        return Ok(ConditionReport {
            k,
            s,
            p,
            min_value,
            samples: used,
            passed,
            convex_note: convex_note(field, k, s, p),
            weak_form_max,
        });
    }
    Ok(ConditionReport {
        k,
        s,
        p,
        min_value,
        samples: used,
        passed: min_value >= -1e-12,
        convex_note: convex_note(field, k, s, p),
        weak_form_max,
    })
}

fn convex_note(field: &DistanceField, k: f64, s: f64, p: f64) -> Option<String> {
    let boundary = matches!(
        field,
        DistanceField::BallBoundary { .. }
            | DistanceField::SlabBoundary { .. }
            | DistanceField::ConvexPolygonBoundary { .. }
    );
    if !boundary || k != 1.0 {
        return None;
    }
    let v = s + 1.0 - p;
    if v < 0.0 {
        Some(format!(
            "sufficient condition holds: s+1-p = {v} < 0 on a convex domain"
        ))
    } else {
        Some(format!(
            "hypothesis violated: s+1-p = {v} ≥ 0; the convex-domain sufficient condition fails"
        ))
    }
}

/// `max_φ ∫ d Δφ dx` over a grid of nonnegative C² bumps inside the polygon.
/// Convexity makes `Δd ≤ 0` distributionally, so every value must be ≤ 0 up
/// to quadrature error. The integrand needs only `d`, which is continuous
/// across the medial axis.
fn polygon_weak_form_max(vertices: &[[f64; 2]]) -> f64 {
    let field = DistanceField::ConvexPolygonBoundary {
        vertices: vertices.to_vec(),
    };
    let (lo, hi) = polygon_bbox(vertices);
    let mut worst = f64::NEG_INFINITY;
    // bump centers on a coarse grid, radius limited by the wall distance
    for ic in 1..=3 {
        for jc in 1..=3 {
            let cx = lo[0] + (hi[0] - lo[0]) * ic as f64 / 4.0;
            let cy = lo[1] + (hi[1] - lo[1]) * jc as f64 / 4.0;
            let Ok(fp) = field.eval(&[cx, cy]) else {
                continue;
            };
            let rho = 0.9 * fp.d;
            if rho <= 0.0 {
                continue;
            }
            // midpoint sums at two resolutions, Richardson-combined
            let coarse = bump_weak_form(&field, cx, cy, rho, 120);
            let fine = bump_weak_form(&field, cx, cy, rho, 240);
            worst = worst.max((4.0 * fine - coarse) / 3.0);
        }
    }
    worst
}

/// `∫ d Δφ dx` for the bump `φ = (1 - |x-c|²/ρ²)³` on its disk, by midpoint
/// quadrature. `Δφ = (4/ρ²)(σ B''(σ) + B'(σ))` with `B(σ) = (1-σ)³`.
fn bump_weak_form(field: &DistanceField, cx: f64, cy: f64, rho: f64, n_grid: usize) -> f64 {
    let h = 2.0 * rho / n_grid as f64;
    let mut integral = 0.0;
    for gi in 0..n_grid {
        for gj in 0..n_grid {
            let x = cx - rho + (gi as f64 + 0.5) * h;
            let y = cy - rho + (gj as f64 + 0.5) * h;
            let sigma = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (rho * rho);
            if sigma >= 1.0 {
                continue;
            }
            let Ok(p) = field.eval(&[x, y]) else {
                continue;
            };
            let one = 1.0 - sigma;
            let laplacian_phi = 4.0 / (rho * rho) * (sigma * 6.0 * one - 3.0 * one * one);
            integral += p.d * laplacian_phi * h * h;
        }
    }
    integral
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> DistanceField {
        DistanceField::convex_polygon(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .unwrap()
    }

    #[test]
    fn subspace_equality_case() {
        // codim 3 in R^5 at d = 2: Δd = (k-1)/d = 1 and dΔd - k + 1 = 0
        let f = DistanceField::subspace(5, 3, 4.0).unwrap();
        let x = vec![2.0, 0.0, 0.0, 0.7, -0.3];
        let fp = f.eval(&x).unwrap();
        assert!((fp.d - 2.0).abs() < 1e-15);
        assert!((fp.laplacian - 1.0).abs() < 1e-15);
        assert_eq!(fp.d * fp.laplacian - 3.0 + 1.0, 0.0);
    }

    #[test]
    fn ball_boundary_values() {
        let f = DistanceField::ball(2, 1.0).unwrap();
        let fp = f.eval(&[0.5, 0.0]).unwrap();
        assert!((fp.d - 0.5).abs() < 1e-15);
        assert!((fp.laplacian + 2.0).abs() < 1e-15);
    }

    #[test]
    fn point_equality_case() {
        // k = N: dΔd = N - 1 exactly
        let f = DistanceField::point(5, 1.0).unwrap();
        let fp = f.eval(&[0.1, 0.2, -0.1, 0.05, 0.3]).unwrap();
        assert!((fp.d * fp.laplacian - 4.0).abs() < 1e-12);
    }

    #[test]
    fn eval_rejects_bad_points() {
        let f = DistanceField::point(3, 1.0).unwrap();
        assert!(matches!(
            f.eval(&[0.0, 0.0, 0.0]),
            Err(GeometryError::OnSingularSet { .. })
        ));
        assert!(matches!(
            f.eval(&[2.0, 0.0, 0.0]),
            Err(GeometryError::OutsideDomain)
        ));
        assert!(matches!(
            f.eval(&[0.1, 0.1]),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sup_distances() {
        assert_eq!(DistanceField::point(3, 1.0).unwrap().sup_distance(), 1.0);
        assert_eq!(DistanceField::slab(1, 2.0).unwrap().sup_distance(), 1.0);
        let sq = unit_square();
        assert!((sq.sup_distance() - 0.5).abs() < 1e-9);
        // 3-4-5 right triangle: inradius (a + b - c)/2 = 1
        let tri = DistanceField::convex_polygon(vec![[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]]).unwrap();
        assert!((tri.sup_distance() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn polygon_distance_and_gradient() {
        let sq = unit_square();
        let fp = sq.eval(&[0.3, 0.1]).unwrap();
        assert!((fp.d - 0.1).abs() < 1e-15);
        assert!((fp.grad[1] - 1.0).abs() < 1e-15);
        assert_eq!(fp.laplacian, 0.0);
        // the diagonal is the medial axis
        let fp = sq.eval(&[0.25, 0.25]).unwrap();
        assert!(fp.medial_axis);
    }

    #[test]
    fn gradient_is_unit_against_finite_differences() {
        let fields: Vec<DistanceField> = vec![
            DistanceField::point(5, 1.0).unwrap(),
            DistanceField::subspace(7, 5, 1.0).unwrap(),
            DistanceField::ball(2, 1.0).unwrap(),
            DistanceField::slab(3, 2.0).unwrap(),
            unit_square(),
        ];
        for (fi, field) in fields.iter().enumerate() {
            let pts = field.sample_interior(1000, 7 + fi as u64);
            let sup = field.sup_distance();
            for x in &pts {
                let fp = field.eval(x).unwrap();
                let g = norm(&fp.grad);
                assert!((g - 1.0).abs() < 1e-12, "non-unit gradient in field {fi}");
                if fp.d < 1e-2 * sup {
                    // too close to K for a clean finite-difference step
                    continue;
                }
                // finite-difference gradient; skip steps that exit Ω or cross kinks
                let h = 1e-6 * sup;
                let mut ok = true;
                let mut fd = vec![0.0; x.len()];
                for j in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    match (field.eval(&xp), field.eval(&xm)) {
                        (Ok(a), Ok(b)) if !a.medial_axis && !b.medial_axis => {
                            fd[j] = (a.d - b.d) / (2.0 * h);
                        }
                        _ => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                for j in 0..x.len() {
                    assert!(
                        (fd[j] - fp.grad[j]).abs() < 1e-6,
                        "field {fi}: grad[{j}] = {} vs fd {}",
                        fp.grad[j],
                        fd[j]
                    );
                }
            }
        }
    }

    #[test]
    fn laplacian_matches_finite_differences() {
        let fields: Vec<DistanceField> = vec![
            DistanceField::point(5, 1.0).unwrap(),
            DistanceField::subspace(7, 5, 1.0).unwrap(),
            DistanceField::ball(2, 1.0).unwrap(),
        ];
        for (fi, field) in fields.iter().enumerate() {
            let pts = field.sample_interior(200, 23 + fi as u64);
            let sup = field.sup_distance();
            for x in &pts {
                let fp = field.eval(x).unwrap();
                // stay away from both K and high-curvature medial regions
                if fp.d < 1e-2 * sup || fp.laplacian.abs() > 20.0 {
                    continue;
                }
                let h = 1e-4 * sup;
                let mut lap = 0.0;
                let mut ok = true;
                for j in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    match (field.eval(&xp), field.eval(&xm)) {
                        (Ok(a), Ok(b)) => lap += (a.d - 2.0 * fp.d + b.d) / (h * h),
                        _ => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                let denom = fp.laplacian.abs().max(1.0);
                assert!(
                    (lap - fp.laplacian).abs() / denom < 1e-5,
                    "field {fi}: Δd = {} vs fd {lap}",
                    fp.laplacian
                );
            }
        }
    }

    #[test]
    fn convex_variants_have_nonpositive_laplacian() {
        let fields: Vec<DistanceField> = vec![
            DistanceField::ball(2, 1.0).unwrap(),
            DistanceField::slab(2, 2.0).unwrap(),
            unit_square(),
        ];
        for field in &fields {
            for x in field.sample_interior(500, 99) {
                let fp = field.eval(&x).unwrap();
                assert!(fp.laplacian <= 1e-12);
            }
        }
    }

    #[test]
    fn condition_subspace_all_zero() {
        let f = DistanceField::subspace(7, 5, 1.0).unwrap();
        let pts = f.sample_interior(100, 5);
        let rep = check_condition(&f, 5.0, 0.3, 2.0, &pts).unwrap();
        assert!(rep.passed);
        assert!(rep.min_value.abs() < 1e-12);
    }

    #[test]
    fn condition_ball_positive() {
        let f = DistanceField::ball(2, 1.0).unwrap();
        let pts = f.sample_interior(100, 6);
        let rep = check_condition(&f, 1.0, 0.0, 2.0, &pts).unwrap();
        assert!(rep.passed);
        assert!(rep.min_value > 0.0);
        assert!(rep.convex_note.unwrap().contains("holds"));
    }

    #[test]
    fn condition_ball_sign_flip_fails() {
        // p = 1/2 flips k+s-p to positive while dΔd - k + 1 < 0
        let f = DistanceField::ball(2, 1.0).unwrap();
        let pts = f.sample_interior(100, 6);
        let rep = check_condition(&f, 1.0, 0.0, 0.5, &pts).unwrap();
        assert!(!rep.passed);
        assert!(rep.convex_note.unwrap().contains("violated"));
    }

    #[test]
    fn condition_rejects_p_equal_k_plus_s() {
        let f = DistanceField::ball(2, 1.0).unwrap();
        assert!(matches!(
            check_condition(&f, 1.0, 1.0, 2.0, &[]),
            Err(GeometryError::DegenerateExponents { .. })
        ));
    }

    #[test]
    fn polygon_weak_form_is_nonpositive() {
        let sq = unit_square();
        let pts = sq.sample_interior(200, 11);
        let rep = check_condition(&sq, 1.0, 0.0, 2.0, &pts).unwrap();
        assert!(rep.passed, "{rep:?}");
        let wf = rep.weak_form_max.unwrap();
        assert!(wf <= 1e-6, "weak form max {wf}");
        // strictly negative in fact: mass sits on the diagonals
        assert!(wf < -1e-3, "weak form should see the medial axis, got {wf}");
    }

    #[test]
    fn polygon_rejects_nonconvex() {
        let err = DistanceField::convex_polygon(vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.2, 0.2],
            [0.0, 1.0],
        ]);
        assert!(matches!(err, Err(GeometryError::NotConvex)));
    }
}
