//! Evaluation of the inequality functionals: the weighted Hardy deficit, the
//! Rellich quotient, the improvement functionals `J_m`, the integral
//! inequality behind them, and the `d^{-2q}` special case.
//!
//! All in-scope geometries reduce to one radial coordinate; an inequality
//! "holds numerically" when its deficit is at least `-10×` the summed
//! quadrature error bounds, which separates analysis failure from
//! integration error.

use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cascade::{self, CascadeError};
use crate::constants::{self, ConstantsError, InequalityParams};
use crate::geometry::{DistanceField, GeometryError};
use crate::quadrature::{self, Integral, QuadratureError, RadialMeasure};

#[derive(Debug, Error)]
pub enum FunctionalsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error("profile support [{a}, {b}] must satisfy 0 < a < b ≤ sup d = {sup}")]
    BadSupport { a: f64, b: f64, sup: f64 },
    #[error("slab profiles must vanish before the midline (support hits sup d)")]
    SlabMidline,
    #[error("closed-form derivatives disagree with finite differences (rel {rel:.2e} at r = {at})")]
    InconsistentDerivatives { rel: f64, at: f64 },
    #[error("grid mesh needs at least 8 strictly increasing nodes")]
    MeshTooCoarse,
    #[error("grid profile must carry zero boundary values")]
    NonzeroBoundary,
    #[error("scale D = {d} must dominate sup d = {sup}")]
    BadScale { d: f64, sup: f64 },
    #[error("weight ψ is not positive on the support (min ψ = {min_psi}); D too small")]
    PsiNotPositive { min_psi: f64 },
    #[error("denominator below floor; degenerate profile")]
    DegenerateProfile,
    #[error("geometry has no radial reduction (polygon integrals are out of scope)")]
    NotRadiallyReducible,
}

pub type Result<T> = std::result::Result<T, FunctionalsError>;

/// Deficits pass when they exceed `-TOLERANCE_FACTOR × error bound`.
pub const TOLERANCE_FACTOR: f64 = 10.0;

const DEFAULT_TOL: f64 = 1e-9;

/// Radial reduction of a distance field: volume element
/// `front · r^{weight_exp} · extra(r) dr` and the distance Laplacian as a
/// function of the distance value.
pub(crate) struct RadialReduction {
    pub weight_exp: f64,
    pub front: f64,
    pub sup_d: f64,
    pub k: f64,
    pub extra: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    pub delta_d: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// the product `d · Δd`, well-defined down to `r = 0` where `Δd` alone
    /// overflows (it is `k - 1` exactly in the flat cases)
    pub d_delta_d: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl RadialReduction {
    pub fn jacobian_extra(&self, r: f64) -> f64 {
        self.extra.as_ref().map_or(1.0, |e| e(r))
    }

}

pub(crate) fn reduce(field: &DistanceField) -> Result<RadialReduction> {
    let sup_d = field.sup_distance();
    match field {
        DistanceField::PointSet { dim, .. } => {
            let n = *dim as f64;
            Ok(RadialReduction {
                weight_exp: n - 1.0,
                front: 1.0,
                sup_d,
                k: n,
                extra: None,
                delta_d: Arc::new(move |r| (n - 1.0) / r),
                d_delta_d: Arc::new(move |_| n - 1.0),
            })
        }
        DistanceField::AffineSubspace { normals, .. } => {
            let k = normals.len() as f64;
            Ok(RadialReduction {
                weight_exp: k - 1.0,
                front: 1.0,
                sup_d,
                k,
                extra: None,
                delta_d: Arc::new(move |r| (k - 1.0) / r),
                d_delta_d: Arc::new(move |_| k - 1.0),
            })
        }
        DistanceField::BallBoundary { dim, r0 } => {
            let n = *dim as f64;
            let r0 = *r0;
            Ok(RadialReduction {
                weight_exp: 0.0,
                front: 1.0,
                sup_d,
                k: 1.0,
                extra: Some(Arc::new(move |r: f64| (r0 - r).powf(n - 1.0))),
                delta_d: Arc::new(move |r| -(n - 1.0) / (r0 - r)),
                d_delta_d: Arc::new(move |r| -r * (n - 1.0) / (r0 - r)),
            })
        }
        DistanceField::SlabBoundary { .. } => Ok(RadialReduction {
            weight_exp: 0.0,
            front: 2.0,
            sup_d,
            k: 1.0,
            extra: None,
            delta_d: Arc::new(|_| 0.0),
            d_delta_d: Arc::new(|_| 0.0),
        }),
        DistanceField::ConvexPolygonBoundary { .. } => Err(FunctionalsError::NotRadiallyReducible),
    }
}

/// A radial test function with two derivatives, vanishing outside its
/// support; mirrors compactly supported smooth functions off `K`.
#[derive(Clone)]
pub enum Profile {
    ClosedForm(ClosedFormProfile),
    Grid(GridProfile),
}

#[derive(Clone)]
pub struct ClosedFormProfile {
    support: (f64, f64),
    eval: Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>,
}

impl ClosedFormProfile {
    /// Validates the supplied derivatives against central differences at a
    /// handful of interior points (relative 1e-6) before accepting.
    pub fn new(
        support: (f64, f64),
        eval: Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>,
    ) -> Result<Self> {
        let (a, b) = support;
        if !(a > 0.0 && b > a) {
            return Err(FunctionalsError::BadSupport { a, b, sup: b });
        }
        let h = 1e-5 * (b - a);
        for i in 1..=7 {
            let r = a + (b - a) * i as f64 / 8.0;
            let (_, du, ddu) = eval(r);
            let fd1 = (eval(r + h).0 - eval(r - h).0) / (2.0 * h);
            let fd2 = (eval(r + h).1 - eval(r - h).1) / (2.0 * h);
            let scale1 = du.abs().max(fd1.abs()).max(1e-6);
            let scale2 = ddu.abs().max(fd2.abs()).max(1e-6);
            if (du - fd1).abs() / scale1 > 1e-4 {
                return Err(FunctionalsError::InconsistentDerivatives {
                    rel: (du - fd1).abs() / scale1,
                    at: r,
                });
            }
            if (ddu - fd2).abs() / scale2 > 1e-4 {
                return Err(FunctionalsError::InconsistentDerivatives {
                    rel: (ddu - fd2).abs() / scale2,
                    at: r,
                });
            }
        }
        Ok(Self { support, eval })
    }

    /// Skips the consistency probe; for families whose derivatives are exact
    /// by construction.
    pub fn new_unchecked(
        support: (f64, f64),
        eval: Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>,
    ) -> Self {
        Self { support, eval }
    }

    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        if r <= self.support.0 || r >= self.support.1 {
            return (0.0, 0.0, 0.0);
        }
        (self.eval)(r)
    }
}

#[derive(Clone)]
pub struct GridProfile {
    mesh: Vec<f64>,
    values: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl GridProfile {
    pub fn new(mesh: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if mesh.len() < 8 || mesh.len() != values.len() {
            return Err(FunctionalsError::MeshTooCoarse);
        }
        if mesh.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FunctionalsError::MeshTooCoarse);
        }
        if values[0] != 0.0 || values[values.len() - 1] != 0.0 {
            return Err(FunctionalsError::NonzeroBoundary);
        }
        let n = mesh.len();
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        for i in 1..n - 1 {
            let hm = mesh[i] - mesh[i - 1];
            let hp = mesh[i + 1] - mesh[i];
            let denom = hm * hp * (hm + hp);
            d1[i] = (hm * hm * values[i + 1] - hp * hp * values[i - 1]
                + (hp * hp - hm * hm) * values[i])
                / denom;
            d2[i] = 2.0 * (hm * values[i + 1] + hp * values[i - 1] - (hm + hp) * values[i])
                / denom;
        }
        // second-order one-sided closures at the ends
        d1[0] = d1[1];
        d2[0] = d2[1];
        d1[n - 1] = d1[n - 2];
        d2[n - 1] = d2[n - 2];
        Ok(Self {
            mesh,
            values,
            d1,
            d2,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.mesh
    }
}

impl Profile {
    pub fn support(&self) -> (f64, f64) {
        match self {
            Profile::ClosedForm(p) => p.support,
            Profile::Grid(g) => (g.mesh[0], g.mesh[g.mesh.len() - 1]),
        }
    }

    /// Samples a closed-form profile on a grid, for cross-route checks.
    pub fn to_grid(&self, nodes: usize) -> Result<Profile> {
        let (a, b) = self.support();
        let mesh: Vec<f64> = (0..nodes)
            .map(|i| a + (b - a) * i as f64 / (nodes - 1) as f64)
            .collect();
        let values = mesh
            .iter()
            .map(|&r| match self {
                Profile::ClosedForm(p) => p.eval(r).0,
                Profile::Grid(_) => 0.0,
            })
            .collect();
        Ok(Profile::Grid(GridProfile::new(mesh, values)?))
    }

    /// Scalar multiple, used by the homogeneity checks.
    pub fn scaled(&self, c: f64) -> Profile {
        match self {
            Profile::ClosedForm(p) => {
                let inner = p.eval.clone();
                Profile::ClosedForm(ClosedFormProfile {
                    support: p.support,
                    eval: Arc::new(move |r| {
                        let (u, du, ddu) = inner(r);
                        (c * u, c * du, c * ddu)
                    }),
                })
            }
            Profile::Grid(g) => {
                let mut g = g.clone();
                for v in g
                    .values
                    .iter_mut()
                    .chain(g.d1.iter_mut())
                    .chain(g.d2.iter_mut())
                {
                    *v *= c;
                }
                Profile::Grid(g)
            }
        }
    }
}

/// Reproducible bump: polynomial times quintic smoothstep windows on a
/// support `[a, b]` inside `(0, sup d)`.
#[derive(Debug, Clone, Serialize)]
pub struct BumpSpec {
    pub seed: u64,
    pub support: (f64, f64),
    pub coeffs: [f64; 4],
}

pub(crate) fn smoothstep(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let s = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
        let ds = 30.0 * x * x * (1.0 - x) * (1.0 - x);
        let dds = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
        (s, ds, dds)
    }
}

/// Builds the profile described by a bump spec; derivatives are analytic.
pub fn bump_profile(spec: &BumpSpec) -> ClosedFormProfile {
    let (a, b) = spec.support;
    let len = b - a;
    let w = 0.35;
    let coeffs = spec.coeffs;
    ClosedFormProfile::new_unchecked(
        spec.support,
        Arc::new(move |r: f64| {
            let xi = (r - a) / len;
            let dxi = 1.0 / len;
            // polynomial in xi
            let p = coeffs[0] + xi * (coeffs[1] + xi * (coeffs[2] + xi * coeffs[3]));
            let dp = (coeffs[1] + xi * (2.0 * coeffs[2] + xi * 3.0 * coeffs[3])) * dxi;
            let ddp = (2.0 * coeffs[2] + 6.0 * coeffs[3] * xi) * dxi * dxi;
            // rise and fall windows
            let (s1, ds1, dds1) = smoothstep(xi / w);
            let (s2, ds2, dds2) = smoothstep((1.0 - xi) / w);
            let q1 = dxi / w;
            let q2 = -dxi / w;
            let win = s1 * s2;
            let dwin = ds1 * q1 * s2 + s1 * ds2 * q2;
            let ddwin = dds1 * q1 * q1 * s2 + 2.0 * ds1 * q1 * ds2 * q2 + s1 * dds2 * q2 * q2;
            (
                p * win,
                dp * win + p * dwin,
                ddp * win + 2.0 * dp * dwin + p * ddwin,
            )
        }),
    )
}

/// Seeded random bump strictly inside `(0, sup d)`.
pub fn random_bump(sup_d: f64, seed: u64) -> (Profile, BumpSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = sup_d * 10f64.powf(rng.random_range(-3.0..-0.75));
    let b_max = 0.9 * sup_d;
    let b = (a * rng.random_range(2.0..20.0)).min(b_max);
    let mut coeffs = [0.0f64; 4];
    for c in coeffs.iter_mut() {
        *c = rng.random_range(-1.0..1.0);
    }
    // keep the polynomial from vanishing identically
    if coeffs.iter().map(|c| c.abs()).sum::<f64>() < 0.3 {
        coeffs[0] += 0.5;
    }
    let spec = BumpSpec {
        seed,
        support: (a, b),
        coeffs,
    };
    (Profile::ClosedForm(bump_profile(&spec)), spec)
}

/// `Δu` along the radial coordinate: `u'' + Δd(r) u'`.
pub fn radial_laplacian(
    profile: &Profile,
    field: &DistanceField,
) -> Result<impl Fn(f64) -> f64 + use<>> {
    let red = reduce(field)?;
    let profile = profile.clone();
    let delta_d = red.delta_d.clone();
    Ok(move |r: f64| match &profile {
        Profile::ClosedForm(p) => {
            let (_, du, ddu) = p.eval(r);
            ddu + delta_d(r) * du
        }
        Profile::Grid(g) => {
            // nearest node; grid laplacians are meant to be sampled at nodes
            let i = match g.mesh.binary_search_by(|m| m.partial_cmp(&r).unwrap()) {
                Ok(i) => i,
                Err(i) => i.min(g.mesh.len() - 1),
            };
            g.d2[i] + delta_d(g.mesh[i]) * g.d1[i]
        }
    })
}

/// Integrates `weight(r, u, u', u'') · J(r) dr` over the profile support.
fn integrate_profile(
    profile: &Profile,
    red: &RadialReduction,
    weight: &dyn Fn(f64, f64, f64, f64) -> f64,
    tol: f64,
) -> Result<Integral> {
    match profile {
        Profile::ClosedForm(p) => {
            let (a, b) = p.support;
            if b > red.sup_d * (1.0 + 1e-12) {
                return Err(FunctionalsError::BadSupport {
                    a,
                    b,
                    sup: red.sup_d,
                });
            }
            if red.front == 2.0 && b >= red.sup_d {
                return Err(FunctionalsError::SlabMidline);
            }
            let measure = RadialMeasure::linear(a, b, red.weight_exp);
            let got = quadrature::integrate(
                |r: f64| {
                    let (u, du, ddu) = p.eval(r);
                    weight(r, u, du, ddu) * red.jacobian_extra(r) * red.front
                },
                &measure,
                tol,
            )?;
            Ok(got)
        }
        Profile::Grid(g) => {
            let f: Vec<f64> = g
                .mesh
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    weight(r, g.values[i], g.d1[i], g.d2[i])
                        * r.powf(red.weight_exp)
                        * red.jacobian_extra(r)
                        * red.front
                })
                .collect();
            let full = trapezoid(&g.mesh, &f);
            // halved-resolution comparison gives the error estimate
            let mut keep: Vec<usize> = (0..g.mesh.len()).step_by(2).collect();
            if *keep.last().unwrap() != g.mesh.len() - 1 {
                keep.push(g.mesh.len() - 1);
            }
            let coarse_mesh: Vec<f64> = keep.iter().map(|&i| g.mesh[i]).collect();
            let coarse_f: Vec<f64> = keep.iter().map(|&i| f[i]).collect();
            let coarse = trapezoid(&coarse_mesh, &coarse_f);
            Ok(Integral {
                value: full,
                error: (full - coarse).abs() / 3.0,
            })
        }
    }
}

fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..x.len() {
        acc += 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
    }
    acc
}

/// A signed inequality deficit with its quadrature error budget.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Deficit {
    pub value: f64,
    pub error_bound: f64,
}

impl Deficit {
    /// Nonnegative up to `10×` the integration error.
    pub fn passes(&self) -> bool {
        self.value >= -TOLERANCE_FACTOR * self.error_bound
    }
}

/// Full record of one weighted-Hardy evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct HardyReport {
    pub lhs: Integral,
    pub rhs_main: f64,
    pub rhs_eta: f64,
    pub rhs_eta_sq: f64,
    pub rhs_zeta: f64,
    pub rhs_total: Integral,
    pub deficit: Deficit,
    pub psi_min: f64,
    pub d_scale: f64,
    pub params: InequalityParams,
}

/// Weighted improved Hardy deficit
/// `∫ d^s ψ |∇u|^p - Σ c_i ∫ d^{s-p} w_i |u|^p` with
/// `ψ = 1 + α eta_m + β eta_m² + γ zeta_m`, all cascades at `d/D`.
pub fn hardy_deficit(
    profile: &Profile,
    field: &DistanceField,
    params: &InequalityParams,
) -> Result<HardyReport> {
    let red = reduce(field)?;
    if params.d_scale < red.sup_d * (1.0 - 1e-12) {
        return Err(FunctionalsError::BadScale {
            d: params.d_scale,
            sup: red.sup_d,
        });
    }
    let coeff = constants::hardy_constants(params)?;
    let (a, b) = profile.support();
    let m = params.m;
    let dd = params.d_scale;
    // ψ positivity scan over the support
    let mut psi_min = f64::INFINITY;
    for i in 0..=200 {
        let r = a + (b - a) * i as f64 / 200.0;
        let v = cascade::cascade_value(r / dd, m)?;
        let psi = 1.0 + params.alpha * v.eta + params.beta * v.eta * v.eta + params.gamma * v.zeta;
        psi_min = psi_min.min(psi);
    }
    if psi_min <= 0.0 {
        return Err(FunctionalsError::PsiNotPositive { min_psi: psi_min });
    }
    let (alpha, beta, gamma, s, p) = (params.alpha, params.beta, params.gamma, params.s, params.p);
    let lhs = integrate_profile(
        profile,
        &red,
        &|r, _u, du, _ddu| {
            let v = cascade::cascade_value(r / dd, m).expect("t in (0,1]");
            let psi = 1.0 + alpha * v.eta + beta * v.eta * v.eta + gamma * v.zeta;
            r.powf(s) * psi * du.abs().powf(p)
        },
        DEFAULT_TOL,
    )?;
    // the four RHS terms share the measure; integrate separately for the
    // report but bound the error by the combined run
    let mut parts = [0.0f64; 4];
    let mut rhs_err = 0.0;
    for (idx, part) in parts.iter_mut().enumerate() {
        let got = integrate_profile(
            profile,
            &red,
            &|r, u, _du, _ddu| {
                let v = cascade::cascade_value(r / dd, m).expect("t in (0,1]");
                let w = match idx {
                    0 => 1.0,
                    1 => v.eta,
                    2 => v.eta * v.eta,
                    _ => v.zeta,
                };
                let c = match idx {
                    0 => coeff.h_abs_p,
                    1 => coeff.c1,
                    2 => coeff.c2,
                    _ => coeff.c3,
                };
                c * r.powf(s - p) * w * u.abs().powf(p)
            },
            DEFAULT_TOL,
        )?;
        *part = got.value;
        rhs_err += got.error;
    }
    let rhs_total = Integral {
        value: parts.iter().sum(),
        error: rhs_err,
    };
    Ok(HardyReport {
        lhs,
        rhs_main: parts[0],
        rhs_eta: parts[1],
        rhs_eta_sq: parts[2],
        rhs_zeta: parts[3],
        rhs_total,
        deficit: Deficit {
            value: lhs.value - rhs_total.value,
            error_bound: lhs.error + rhs_total.error,
        },
        psi_min,
        d_scale: dd,
        params: *params,
    })
}

/// Doubles `D` until the deficit clears the tolerance (or the cap is hit),
/// mirroring the theorems' existential `D_0`. Returns the last report and
/// the scale that produced it.
pub fn hardy_deficit_with_search(
    profile: &Profile,
    field: &DistanceField,
    params: &InequalityParams,
    max_doublings: u32,
) -> Result<(HardyReport, f64)> {
    let mut params = *params;
    let mut last = hardy_deficit(profile, field, &params)?;
    for _ in 0..max_doublings {
        if last.deficit.passes() {
            break;
        }
        params.d_scale *= 2.0;
        last = hardy_deficit(profile, field, &params)?;
    }
    let d_used = params.d_scale;
    Ok((last, d_used))
}

/// Rellich quotient record.
#[derive(Debug, Clone, Serialize)]
pub struct QuotientReport {
    pub numerator: Integral,
    pub denominator: Integral,
    pub ratio: f64,
    pub ratio_error: f64,
    pub p: f64,
    pub k: f64,
}

/// `∫ |Δu|^p dx / ∫ |u|^p d^{-2p} dx` with propagated error bars.
pub fn rellich_quotient(profile: &Profile, field: &DistanceField, p: f64) -> Result<QuotientReport> {
    let red = reduce(field)?;
    let delta_d = red.delta_d.clone();
    let numerator = integrate_profile(
        profile,
        &red,
        &|r, _u, du, ddu| (ddu + delta_d(r) * du).abs().powf(p),
        DEFAULT_TOL,
    )?;
    let denominator = integrate_profile(
        profile,
        &red,
        &|r, u, _du, _ddu| u.abs().powf(p) * r.powf(-2.0 * p),
        DEFAULT_TOL,
    )?;
    if denominator.value.abs() < 1e-300 {
        return Err(FunctionalsError::DegenerateProfile);
    }
    let ratio = numerator.value / denominator.value;
    let ratio_error = ratio.abs()
        * (numerator.error / numerator.value.abs().max(1e-300)
            + denominator.error / denominator.value);
    Ok(QuotientReport {
        numerator,
        denominator,
        ratio,
        ratio_error,
        p,
        k: red.k,
    })
}

/// One `J_m` evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct JReport {
    pub numerator: Integral,
    pub denominator: Integral,
    pub zeta_term: Integral,
    pub q_abs_p: f64,
    pub g: f64,
    pub m: usize,
    pub d_scale: f64,
    pub value: Deficit,
}

/// `J_m[u] = ∫|Δu|^p - |Q|^p ∫ |u|^p d^{-2p} - G ∫ |u|^p d^{-2p} zeta_m(d/D)`;
/// nonnegative under the improved Rellich inequality once `D` is large enough.
pub fn j_functional(
    profile: &Profile,
    field: &DistanceField,
    p: f64,
    m: usize,
    d_scale: f64,
) -> Result<JReport> {
    let red = reduce(field)?;
    if d_scale < red.sup_d * (1.0 - 1e-12) {
        return Err(FunctionalsError::BadScale {
            d: d_scale,
            sup: red.sup_d,
        });
    }
    let set = constants::rellich_constants(p, red.k)?;
    let delta_d = red.delta_d.clone();
    let numerator = integrate_profile(
        profile,
        &red,
        &|r, _u, du, ddu| (ddu + delta_d(r) * du).abs().powf(p),
        DEFAULT_TOL,
    )?;
    let denominator = integrate_profile(
        profile,
        &red,
        &|r, u, _du, _ddu| u.abs().powf(p) * r.powf(-2.0 * p),
        DEFAULT_TOL,
    )?;
    let zeta_term = if m == 0 {
        Integral::ZERO
    } else {
        integrate_profile(
            profile,
            &red,
            &|r, u, _du, _ddu| {
                let v = cascade::cascade_value(r / d_scale, m).expect("t in (0,1]");
                u.abs().powf(p) * r.powf(-2.0 * p) * v.zeta
            },
            DEFAULT_TOL,
        )?
    };
    let value = numerator.value - set.q_abs_p * denominator.value - set.g * zeta_term.value;
    let error_bound =
        numerator.error + set.q_abs_p * denominator.error + set.g * zeta_term.error;
    Ok(JReport {
        numerator,
        denominator,
        zeta_term,
        q_abs_p: set.q_abs_p,
        g: set.g,
        m,
        d_scale,
        value: Deficit { value, error_bound },
    })
}

/// Doubling search on `D` for `J_m`, as for the Hardy deficit.
pub fn j_functional_with_search(
    profile: &Profile,
    field: &DistanceField,
    p: f64,
    m: usize,
    d_scale: f64,
    max_doublings: u32,
) -> Result<(JReport, f64)> {
    let mut d = d_scale;
    let mut last = j_functional(profile, field, p, m, d)?;
    for _ in 0..max_doublings {
        if last.value.passes() {
            break;
        }
        d *= 2.0;
        last = j_functional(profile, field, p, m, d)?;
    }
    Ok((last, d))
}

/// A radial weight `φ(d)` with its distributional Laplacian in closed form.
pub enum RadialWeight {
    Zero,
    /// `φ = λ d^e`
    PowerLaw { lambda: f64, exponent: f64 },
    /// `φ = λ d^{-2p+2} (1 + α eta_m + β eta_m²)`, the Rellich proof choice
    RellichChoice {
        lambda: f64,
        alpha: f64,
        beta: f64,
        p: f64,
        m: usize,
        d_scale: f64,
    },
}

impl RadialWeight {
    fn eval(&self, r: f64) -> f64 {
        match self {
            RadialWeight::Zero => 0.0,
            RadialWeight::PowerLaw { lambda, exponent } => lambda * r.powf(*exponent),
            RadialWeight::RellichChoice {
                lambda,
                alpha,
                beta,
                p,
                m,
                d_scale,
            } => {
                let v = cascade::cascade_value(r / d_scale, *m).expect("t in (0,1]");
                lambda
                    * r.powf(-2.0 * p + 2.0)
                    * (1.0 + alpha * v.eta + beta * v.eta * v.eta)
            }
        }
    }

    /// `Δφ = φ''(d) + Δd · φ'(d)` along the radial coordinate.
    fn laplacian(&self, r: f64, delta_d: f64) -> f64 {
        match self {
            RadialWeight::Zero => 0.0,
            RadialWeight::PowerLaw { lambda, exponent } => {
                // φ'' + Δd φ' = λ e d^{e-2} (e - 1 + d Δd)
                let e = *exponent;
                lambda * e * r.powf(e - 2.0) * (e - 1.0 + r * delta_d)
            }
            RadialWeight::RellichChoice {
                lambda,
                alpha,
                beta,
                p,
                m,
                d_scale,
            } => {
                let t = r / d_scale;
                let v = cascade::cascade_value(t, *m).expect("t in (0,1]");
                let e = -2.0 * p + 2.0;
                let psi = 1.0 + alpha * v.eta + beta * v.eta * v.eta;
                // chain rule in t = r/D: dψ/dr = ψ'(t)/D
                let dpsi_dt = (alpha + 2.0 * beta * v.eta) * v.eta_prime();
                let ddpsi_dt = 2.0 * beta * v.eta_prime() * v.eta_prime()
                    + (alpha + 2.0 * beta * v.eta) * v.eta_second();
                let dpsi = dpsi_dt / d_scale;
                let ddpsi = ddpsi_dt / (d_scale * d_scale);
                let phi_r = lambda
                    * (e * r.powf(e - 1.0) * psi + r.powf(e) * dpsi);
                let phi_rr = lambda
                    * (e * (e - 1.0) * r.powf(e - 2.0) * psi
                        + 2.0 * e * r.powf(e - 1.0) * dpsi
                        + r.powf(e) * ddpsi);
                phi_rr + delta_d * phi_r
            }
        }
    }
}

/// The integral inequality
/// `∫|Δu|^p ≥ p(p-1) ∫ φ |u|^{p-2}|∇u|² - ∫ (Δφ + (p-1)|φ|^{p/(p-1)}) |u|^p`
/// as a signed gap (LHS − RHS ≥ 0 expected for any admissible weight).
pub fn lemma_gap(
    phi: &RadialWeight,
    profile: &Profile,
    field: &DistanceField,
    p: f64,
) -> Result<Deficit> {
    let red = reduce(field)?;
    let delta_d = red.delta_d.clone();
    let lap = integrate_profile(
        profile,
        &red,
        &|r, _u, du, ddu| (ddu + delta_d(r) * du).abs().powf(p),
        DEFAULT_TOL,
    )?;
    let cross = integrate_profile(
        profile,
        &red,
        &|r, u, du, _ddu| phi.eval(r) * u.abs().powf(p - 2.0) * du * du,
        DEFAULT_TOL,
    )?;
    let delta_d = red.delta_d.clone();
    let zero_order = integrate_profile(
        profile,
        &red,
        &|r, u, _du, _ddu| {
            let phi_v = phi.eval(r);
            (phi.laplacian(r, delta_d(r)) + (p - 1.0) * phi_v.abs().powf(p / (p - 1.0)))
                * u.abs().powf(p)
        },
        DEFAULT_TOL,
    )?;
    let value = lap.value - p * (p - 1.0) * cross.value + zero_order.value;
    let error_bound = lap.error + p * (p - 1.0) * cross.error + zero_order.error;
    Ok(Deficit { value, error_bound })
}

/// Deficit of the `d^{-2q}` special-case inequality (`p = 2`, `s = -2q+2`),
/// requiring `k ≠ 2q` and the matching sign condition.
pub fn hardy_special_nd(
    profile: &Profile,
    field: &DistanceField,
    q: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    m: usize,
    d_scale: f64,
) -> Result<HardyReport> {
    let red = reduce(field)?;
    if red.k == 2.0 * q {
        return Err(FunctionalsError::Constants(
            ConstantsError::RellichDegenerate { k: red.k },
        ));
    }
    let params = InequalityParams::new(2.0, -2.0 * q + 2.0, red.k, m, d_scale)?
        .with_weights(alpha, beta, gamma);
    hardy_deficit(profile, field, &params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point5() -> DistanceField {
        DistanceField::point(5, 1.0).unwrap()
    }

    fn power_profile(a: f64, b: f64, e: f64) -> Profile {
        Profile::ClosedForm(
            ClosedFormProfile::new(
                (a, b),
                Arc::new(move |r: f64| {
                    (
                        r.powf(e),
                        e * r.powf(e - 1.0),
                        e * (e - 1.0) * r.powf(e - 2.0),
                    )
                }),
            )
            .unwrap(),
        )
    }

    #[test]
    fn radial_laplacian_of_r_squared() {
        // Δ(r²) = 2 + (N-1)/r · 2r = 2N = 10 in R^5
        let prof = power_profile(0.1, 0.9, 2.0);
        let lap = radial_laplacian(&prof, &point5()).unwrap();
        for &r in &[0.2, 0.5, 0.8] {
            assert!((lap(r) - 10.0).abs() < 1e-10);
        }
    }

    #[test]
    fn radial_laplacian_euler_formula() {
        // Δ(r^a) = a(a + N - 2) r^{a-2}
        for &a in &[1.5f64, 3.0, -1.0] {
            let prof = power_profile(0.1, 0.9, a);
            let lap = radial_laplacian(&prof, &point5()).unwrap();
            for &r in &[0.3f64, 0.6] {
                let expect = a * (a + 3.0) * r.powf(a - 2.0);
                assert!(
                    (lap(r) - expect).abs() < 1e-9 * expect.abs().max(1.0),
                    "a={a} r={r}"
                );
            }
        }
    }

    #[test]
    fn grid_laplacian_converges() {
        // sampled r² on 200 nodes: nonuniform 3-point stencils are exact on
        // quadratics up to roundoff
        let mesh: Vec<f64> = (0..200).map(|i| 0.1 + 0.8 * i as f64 / 199.0).collect();
        let mut values: Vec<f64> = mesh.iter().map(|r| r * r).collect();
        values[0] = 0.0;
        *values.last_mut().unwrap() = 0.0;
        let g = GridProfile::new(mesh.clone(), values).unwrap();
        let prof = Profile::Grid(g);
        let lap = radial_laplacian(&prof, &point5()).unwrap();
        for &r in &[0.3, 0.5, 0.7] {
            assert!((lap(r) - 10.0).abs() < 1e-6, "r={r}: {}", lap(r));
        }
    }

    #[test]
    fn closed_form_validation_catches_wrong_derivatives() {
        let err = ClosedFormProfile::new(
            (0.1, 0.9),
            Arc::new(|r: f64| (r * r, 7.0 * r, 2.0)),
        );
        assert!(matches!(
            err,
            Err(FunctionalsError::InconsistentDerivatives { .. })
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(
            GridProfile::new(vec![0.1, 0.2], vec![0.0, 0.0]),
            Err(FunctionalsError::MeshTooCoarse)
        ));
        let mesh: Vec<f64> = (0..10).map(|i| 0.1 + i as f64 * 0.05).collect();
        let mut vals = vec![1.0; 10];
        vals[0] = 0.0;
        assert!(matches!(
            GridProfile::new(mesh, vals),
            Err(FunctionalsError::NonzeroBoundary)
        ));
    }

    #[test]
    fn hardy_deficit_zero_profile() {
        let spec = BumpSpec {
            seed: 0,
            support: (0.2, 0.6),
            coeffs: [0.0; 4],
        };
        let prof = Profile::ClosedForm(bump_profile(&spec));
        let params = InequalityParams::new(2.0, 0.0, 5.0, 2, 1.0).unwrap();
        let rep = hardy_deficit(&prof, &point5(), &params).unwrap();
        assert_eq!(rep.deficit.value, 0.0);
    }

    #[test]
    fn hardy_deficit_point_case_nonnegative() {
        // s = α = β = γ = 0, k = N, p = 2: the classical improved Hardy
        for seed in 0..20 {
            let (prof, _) = random_bump(1.0, seed);
            let params = InequalityParams::new(2.0, 0.0, 5.0, 3, 1.0).unwrap();
            let (rep, _d) = hardy_deficit_with_search(&prof, &point5(), &params, 8).unwrap();
            assert!(
                rep.deficit.passes(),
                "seed {seed}: deficit {} err {}",
                rep.deficit.value,
                rep.deficit.error_bound
            );
        }
    }

    #[test]
    fn hardy_near_extremizer_small_deficit() {
        // u = rise(r) · d^{(p-k-s+ε)/p} · fall(r): the inner rise hugging
        // r_in keeps u admissible; the power-law plateau carries the mass,
        // so the deficit is a boundary effect, small against the RHS.
        let eps = 0.05;
        let (p, k) = (2.0f64, 5.0f64);
        let e = (p - k + eps) / p;
        let r_in = 1e-16;
        let rise_w = 7.0 * r_in;
        let (c1, c2) = (0.45, 0.9);
        let prof = Profile::ClosedForm(
            ClosedFormProfile::new(
                (r_in, c2),
                Arc::new(move |r: f64| {
                    let (w1, dw1_x, ddw1_x) = smoothstep((r - r_in) / rise_w);
                    let (dw1, ddw1) = (dw1_x / rise_w, ddw1_x / (rise_w * rise_w));
                    let fall_w = c2 - c1;
                    let (w2, dw2_y, ddw2_y) = smoothstep((c2 - r) / fall_w);
                    let (dw2, ddw2) = (-dw2_y / fall_w, ddw2_y / (fall_w * fall_w));
                    let v = r.powf(e);
                    let dv = e * r.powf(e - 1.0);
                    let ddv = e * (e - 1.0) * r.powf(e - 2.0);
                    let w = w1 * w2;
                    let dw = dw1 * w2 + w1 * dw2;
                    let ddw = ddw1 * w2 + 2.0 * dw1 * dw2 + w1 * ddw2;
                    (
                        w * v,
                        dw * v + w * dv,
                        ddw * v + 2.0 * dw * dv + w * ddv,
                    )
                }),
            )
            .unwrap(),
        );
        let params = InequalityParams::new(p, 0.0, k, 1, 1.0).unwrap();
        let rep = hardy_deficit(&prof, &point5(), &params).unwrap();
        assert!(rep.deficit.passes());
        assert!(
            rep.deficit.value < 0.1 * rep.rhs_total.value,
            "deficit {} vs rhs {}",
            rep.deficit.value,
            rep.rhs_total.value
        );
    }

    #[test]
    fn hardy_rejects_small_d() {
        let (prof, _) = random_bump(1.0, 3);
        let params = InequalityParams::new(2.0, 0.0, 5.0, 2, 0.5).unwrap();
        assert!(matches!(
            hardy_deficit(&prof, &point5(), &params),
            Err(FunctionalsError::BadScale { .. })
        ));
    }

    #[test]
    fn hardy_reports_psi_hypothesis_failure() {
        let (prof, _) = random_bump(1.0, 4);
        let params = InequalityParams::new(2.0, 0.0, 5.0, 2, 1.0)
            .unwrap()
            .with_weights(-30.0, 0.0, 0.0);
        assert!(matches!(
            hardy_deficit(&prof, &point5(), &params),
            Err(FunctionalsError::PsiNotPositive { .. })
        ));
    }

    #[test]
    fn rellich_quotient_above_sharp_constant() {
        // Q(2,5)² = 25/16: every admissible profile stays above it
        for seed in 40..48 {
            let (prof, _) = random_bump(1.0, seed);
            let rep = rellich_quotient(&prof, &point5(), 2.0).unwrap();
            assert!(
                rep.ratio >= 25.0 / 16.0 - TOLERANCE_FACTOR * rep.ratio_error,
                "seed {seed}: ratio {}",
                rep.ratio
            );
        }
    }

    #[test]
    fn rellich_quotient_slab_above_nine_sixteenths() {
        let slab = DistanceField::slab(1, 1.0).unwrap();
        for seed in 60..66 {
            let (prof, _) = random_bump(0.5, seed);
            let rep = rellich_quotient(&prof, &slab, 2.0).unwrap();
            assert!(
                rep.ratio >= 9.0 / 16.0 - TOLERANCE_FACTOR * rep.ratio_error,
                "seed {seed}: ratio {}",
                rep.ratio
            );
        }
    }

    #[test]
    fn rellich_quotient_rejects_zero_profile() {
        let spec = BumpSpec {
            seed: 0,
            support: (0.2, 0.6),
            coeffs: [0.0; 4],
        };
        let prof = Profile::ClosedForm(bump_profile(&spec));
        assert!(matches!(
            rellich_quotient(&prof, &point5(), 2.0),
            Err(FunctionalsError::DegenerateProfile)
        ));
    }

    #[test]
    fn j_functional_consistency_with_quotient() {
        let (prof, _) = random_bump(1.0, 70);
        let q = rellich_quotient(&prof, &point5(), 2.0).unwrap();
        let j0 = j_functional(&prof, &point5(), 2.0, 0, 1.0).unwrap();
        let expect = q.numerator.value - 25.0 / 16.0 * q.denominator.value;
        assert!(
            (j0.value.value - expect).abs() < 1e-9 * expect.abs().max(1.0),
            "{} vs {expect}",
            j0.value.value
        );
    }

    #[test]
    fn j_functional_nonnegative_on_bumps() {
        for seed in 80..92 {
            let (prof, _) = random_bump(1.0, seed);
            let (rep, _d) =
                j_functional_with_search(&prof, &point5(), 2.0, 3, 1.0, 8).unwrap();
            assert!(
                rep.value.passes(),
                "seed {seed}: J_3 = {} err {}",
                rep.value.value,
                rep.value.error_bound
            );
        }
    }

    #[test]
    fn lemma_gap_zero_weight_is_laplacian_norm() {
        let (prof, _) = random_bump(1.0, 100);
        let gap = lemma_gap(&RadialWeight::Zero, &prof, &point5(), 2.0).unwrap();
        assert!(gap.value > 0.0);
    }

    #[test]
    fn rellich_choice_weight_laplacian_matches_differences() {
        // φ = λ d^{-2p+2}(1 + α eta_m + β eta_m²): the closed-form Δφ goes
        // through the exact cascade rates; finite differences are the oracle
        let p = 2.0;
        let set = constants::rellich_constants(p, 5.0).unwrap();
        let w = RadialWeight::RellichChoice {
            lambda: set.lambda,
            alpha: set.alpha_star,
            beta: -0.7,
            p,
            m: 2,
            d_scale: 1.0,
        };
        for &r in &[0.12f64, 0.35, 0.8] {
            let h = 1e-4 * r;
            let phi = |x: f64| w.eval(x);
            let d1 = (phi(r + h) - phi(r - h)) / (2.0 * h);
            let d2 = (phi(r + h) - 2.0 * phi(r) + phi(r - h)) / (h * h);
            let delta_d = 4.0 / r; // point case in R^5
            let fd = d2 + delta_d * d1;
            let exact = w.laplacian(r, delta_d);
            assert!(
                (exact - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "r={r}: exact {exact} vs fd {fd}"
            );
        }
        // α = β = 0 must coincide with the plain power law
        let plain = RadialWeight::PowerLaw {
            lambda: set.lambda,
            exponent: -2.0 * p + 2.0,
        };
        let reduced = RadialWeight::RellichChoice {
            lambda: set.lambda,
            alpha: 0.0,
            beta: 0.0,
            p,
            m: 2,
            d_scale: 1.0,
        };
        for &r in &[0.2f64, 0.6] {
            let dd = 4.0 / r;
            assert!((plain.eval(r) - reduced.eval(r)).abs() < 1e-14);
            assert!(
                (plain.laplacian(r, dd) - reduced.laplacian(r, dd)).abs()
                    < 1e-11 * plain.laplacian(r, dd).abs()
            );
        }
    }

    #[test]
    fn lemma_gap_full_proof_weight_nonnegative() {
        // the proof's weight with both cascade corrections switched on
        let p = 2.0;
        let set = constants::rellich_constants(p, 5.0).unwrap();
        let phi = RadialWeight::RellichChoice {
            lambda: set.lambda,
            alpha: set.alpha_star,
            beta: -2.0,
            p,
            m: 2,
            d_scale: 4.0,
        };
        for seed in 200..206 {
            let (prof, _) = random_bump(1.0, seed);
            let gap = lemma_gap(&phi, &prof, &point5(), p).unwrap();
            assert!(
                gap.passes(),
                "seed {seed}: gap {} err {}",
                gap.value,
                gap.error_bound
            );
        }
    }

    #[test]
    fn lemma_gap_rellich_weight_nonnegative() {
        // φ = λ d^{-2p+2} with λ = Q^{p-1}, the proof's choice at α = β = 0
        let p = 2.0;
        let set = constants::rellich_constants(p, 5.0).unwrap();
        let phi = RadialWeight::PowerLaw {
            lambda: set.lambda,
            exponent: -2.0 * p + 2.0,
        };
        for seed in 110..116 {
            let (prof, _) = random_bump(1.0, seed);
            let gap = lemma_gap(&phi, &prof, &point5(), p).unwrap();
            assert!(
                gap.passes(),
                "seed {seed}: gap {} err {}",
                gap.value,
                gap.error_bound
            );
        }
    }

    #[test]
    fn lemma_gap_flipped_weight_grows() {
        let phi_neg = RadialWeight::PowerLaw {
            lambda: -40.0,
            exponent: -2.0,
        };
        let (prof, _) = random_bump(1.0, 120);
        let base = lemma_gap(&RadialWeight::Zero, &prof, &point5(), 2.0).unwrap();
        let flipped = lemma_gap(&phi_neg, &prof, &point5(), 2.0).unwrap();
        // -p(p-1)∫φ... turns positive and the |φ| term only adds
        assert!(flipped.value > base.value);
    }

    #[test]
    fn special_nd_consistency_and_nonnegativity() {
        let field = point5();
        let (prof, _) = random_bump(1.0, 130);
        // q = p = 2 reduces to the plain Hardy at s = -2
        let rep = hardy_special_nd(&prof, &field, 2.0, 0.0, 0.0, 0.0, 2, 1.0).unwrap();
        let params = InequalityParams::new(2.0, -2.0, 5.0, 2, 1.0).unwrap();
        let direct = hardy_deficit(&prof, &field, &params).unwrap();
        assert!((rep.deficit.value - direct.deficit.value).abs() < 1e-12);
        assert!(rep.deficit.passes());
        // coefficient echo: (k-2q)²/4 against hardy_constants at s = -2q+2
        let c = constants::hardy_constants(&params).unwrap();
        assert!((c.h_abs_p - 0.25).abs() < 1e-15);
    }

    #[test]
    fn special_nd_rejects_k_equal_two_q() {
        let field = point5();
        let (prof, _) = random_bump(1.0, 131);
        assert!(hardy_special_nd(&prof, &field, 2.5, 0.0, 0.0, 0.0, 2, 1.0).is_err());
    }

    #[test]
    fn homogeneity_of_reports() {
        let (prof, _) = random_bump(1.0, 140);
        let scaled = prof.scaled(-3.7);
        let q1 = rellich_quotient(&prof, &point5(), 2.0).unwrap();
        let q2 = rellich_quotient(&scaled, &point5(), 2.0).unwrap();
        assert!((q1.ratio - q2.ratio).abs() <= 1e-12 * q1.ratio);
        let c = 3.7f64;
        assert!(
            (q2.numerator.value - c.powf(2.0) * q1.numerator.value).abs()
                <= 1e-9 * q2.numerator.value
        );
    }

    #[test]
    fn grid_and_closed_form_agree() {
        let (prof, _) = random_bump(1.0, 150);
        let grid = prof.to_grid(2000).unwrap();
        let q_exact = rellich_quotient(&prof, &point5(), 2.0).unwrap();
        let q_grid = rellich_quotient(&grid, &point5(), 2.0).unwrap();
        let rel = (q_exact.ratio - q_grid.ratio).abs() / q_exact.ratio;
        assert!(rel < 1e-4, "rel {rel}");
        // second-order improvement under refinement
        let fine = prof.to_grid(4000).unwrap();
        let q_fine = rellich_quotient(&fine, &point5(), 2.0).unwrap();
        let rel_fine = (q_exact.ratio - q_fine.ratio).abs() / q_exact.ratio;
        assert!(
            rel_fine < rel / 2.5,
            "no second-order gain: {rel} -> {rel_fine}"
        );
    }

    #[test]
    fn polygon_has_no_radial_reduction() {
        let poly = DistanceField::convex_polygon(vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
        ])
        .unwrap();
        let (prof, _) = random_bump(0.5, 160);
        assert!(matches!(
            rellich_quotient(&prof, &poly, 2.0),
            Err(FunctionalsError::NotRadiallyReducible)
        ));
    }
}
