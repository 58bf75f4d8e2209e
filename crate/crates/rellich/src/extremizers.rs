//! Near-extremizer families and epsilon sweeps.
//!
//! The families are `u = W(r) · r^{(β+ε_0)/p} X_1^{(-1+ε_1)/p} ⋯ X_m^{(-1+ε_m)/p}`
//! with `β = 2p - k` (Rellich mode) or `β = p - k - s` (Hardy mode), an outer
//! smoothstep window `W` standing in for the localization cutoff, and a hard
//! inner truncation at `r_in` whose sensitivity every sweep reports. Driving
//! the `ε_i` to zero in index order sends the quotients to the sharp
//! constants; the divergence of the innermost integral is the mechanism, so
//! it is surfaced, never silently truncated.

use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

use crate::cascade::{self, CascadeError, EpsilonSchedule};
use crate::constants::{self, ConstantsError};
use crate::functionals::{self, smoothstep, ClosedFormProfile, FunctionalsError, Profile};
use crate::geometry::DistanceField;
use crate::quadrature::{self, Integral, QuadratureError, RadialMeasure};

#[derive(Debug, Error)]
pub enum ExtremizerError {
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Functionals(#[from] FunctionalsError),
    #[error("window [{c1}, {c2}] must satisfy 0 < c1 < c2 ≤ sup d = {sup}")]
    BadWindow { c1: f64, c2: f64, sup: f64 },
    #[error("inner radius r_in = {r_in} must lie in (0, c1)")]
    BadInnerRadius { r_in: f64 },
    #[error("sweep schedules need ε_0 > 0 (schedule {index} has ε_0 = 0)")]
    ZeroEpsilonZero { index: usize },
    #[error("sweep needs at least 2 schedules")]
    TooFewSchedules,
    #[error("improved-ratio and power-probe sweeps need depth m ≥ 1")]
    ImprovedNeedsDepth,
    #[error("schedules must shrink ε_0 first: ε_0 not nonincreasing at step {index}")]
    BadSweepOrder { index: usize },
}

pub type Result<T> = std::result::Result<T, ExtremizerError>;

/// Specification of one near-extremizer test function.
#[derive(Debug, Clone)]
pub struct ExtremizerSpec {
    pub p: f64,
    pub m: usize,
    /// Scale `D` in `X_i(d/D)`, at least `sup d`.
    pub d_scale: f64,
    pub schedule: EpsilonSchedule,
    /// Inner truncation radius; `None` picks `D e^{-20/ε_0}` so the
    /// truncated tail stays below the sweep tolerances.
    pub r_in: Option<f64>,
    /// Outer window: identity on `[0, c1]`, zero beyond `c2`, falling as a
    /// quintic smoothstep in `log r`. The log profile keeps the window's
    /// `|Δ(Wv)|^p` mass an order of magnitude below a linear-scale fall,
    /// which is what lets the quotients approach the sharp constants at
    /// `ε_0 ~ 0.01`.
    pub window: (f64, f64),
}

/// Window value and radial derivatives at `r`: quintic smoothstep in
/// `x = log(c2/r)/log(c2/c1)`.
fn log_window(r: f64, c1: f64, c2: f64) -> (f64, f64, f64) {
    let l = (c2 / c1).ln();
    let x = (c2 / r).ln() / l;
    let (s, ds, dds) = smoothstep(x);
    let dx = -1.0 / (r * l);
    let ddx = 1.0 / (r * r * l);
    (s, ds * dx, dds * dx * dx + ds * ddx)
}

impl ExtremizerSpec {
    fn check(&self, sup_d: f64) -> Result<()> {
        let (c1, c2) = self.window;
        if !(c1 > 0.0 && c1 < c2 && c2 <= sup_d * (1.0 + 1e-12)) {
            return Err(ExtremizerError::BadWindow {
                c1,
                c2,
                sup: sup_d,
            });
        }
        if let Some(r_in) = self.r_in {
            if !(r_in > 0.0 && r_in < c1) {
                return Err(ExtremizerError::BadInnerRadius { r_in });
            }
        }
        Ok(())
    }

    /// Inner cutoff as `ξ = log(1/r_in)`; kept in log form because the
    /// default `D e^{-20/ε_0}` underflows f64 for small `ε_0`.
    fn inner_xi(&self) -> f64 {
        match self.r_in {
            Some(r_in) => -r_in.ln(),
            None => 20.0 / self.schedule.eps0().max(1e-3) - self.d_scale.ln(),
        }
    }

    /// Representable stand-in for `r_in`, used only by the closed-form
    /// profile whose support must be a positive interval.
    fn inner_radius_clamped(&self) -> f64 {
        (-self.inner_xi().min(570.0)).exp()
    }
}

/// `Q + (R/p) g - g²/p² - h/p`, the expansion factor of `|Δv|` in the
/// equality case `dΔd = k - 1`; `Δv = -(this) · d^{(-k+ε_0)/p} ∏ X_i^{…}`.
pub fn rellich_braces(p: f64, k: f64, g: f64, h: f64) -> f64 {
    let q = (p - 1.0) * k * (k - 2.0 * p) / (p * p);
    let r = (2.0 * k - p * k - 2.0 * p) / p;
    q + r / p * g - g * g / (p * p) - h / p
}

/// The same factor for a general radial geometry, written through the local
/// `dΔd`: `B = (β'+g)(β+g)/p² + dΔd (β+g)/p` with `β = 2p-k`, `β' = p-k`,
/// plus `h/p`; `Δv = B · v / d²`.
fn delta_v_factor(p: f64, beta: f64, g: f64, h: f64, d_delta_d: f64) -> f64 {
    ((beta - p + g) / p + d_delta_d) * ((beta + g) / p) + h / p
}

/// Closed-form family member. Exact `u, u', u''`; `Δu` follows from the
/// field's `Δd` through the functionals layer. The window region uses the
/// product rule, the plateau is the pure family.
fn family_profile(
    field: &DistanceField,
    spec: &ExtremizerSpec,
    beta: f64,
) -> Result<Profile> {
    let red = functionals::reduce(field)?;
    spec.check(red.sup_d)?;
    let (c1, c2) = spec.window;
    let r_in = spec.inner_radius_clamped();
    let p = spec.p;
    let m = spec.m;
    let d_scale = spec.d_scale;
    let schedule = spec.schedule.clone();
    let eps0 = schedule.eps0();
    let eval = move |r: f64| {
        let t = r / d_scale;
        let (g, h) = cascade::g_h_eval(t, m, &schedule).expect("t in (0,1]");
        let mut v = r.powf((beta + eps0) / p);
        if m > 0 {
            let xs = cascade::x_chain(t, m).expect("t in (0,1]");
            for (i, &x) in xs.iter().enumerate() {
                v *= x.powf((-1.0 + schedule.eps()[i + 1]) / p);
            }
        }
        let dv = v * (beta + g) / (p * r);
        let ddv = v * ((beta - p + g) * (beta + g) / (p * p) + h / p) / (r * r);
        let (w, dw, ddw) = log_window(r, c1, c2);
        (
            w * v,
            dw * v + w * dv,
            ddw * v + 2.0 * dw * dv + w * ddv,
        )
    };
    Ok(Profile::ClosedForm(ClosedFormProfile::new_unchecked(
        (r_in, c2),
        Arc::new(eval),
    )))
}

/// The Rellich near-extremizer `u = W · d^{(-k+2p+ε_0)/p} ∏ X_i^{(-1+ε_i)/p}`.
pub fn build_rellich_family(field: &DistanceField, spec: &ExtremizerSpec) -> Result<Profile> {
    let red = functionals::reduce(field)?;
    family_profile(field, spec, 2.0 * spec.p - red.k)
}

/// The Hardy-side analogue `u = W · d^{(p-k-s+ε_0)/p} ∏ X_i^{(-1+ε_i)/p}`;
/// provided as a sweep mode only, with no acceptance-grade convergence claim.
pub fn build_hardy_family(
    field: &DistanceField,
    spec: &ExtremizerSpec,
    s: f64,
) -> Result<Profile> {
    let red = functionals::reduce(field)?;
    family_profile(field, spec, spec.p - red.k - s)
}

/// Lexicographic integrability of
/// `∫ φ^p d^{-k+β_0} X_1^{1+β_1} ⋯ X_m^{1+β_m} dx` near `K`: finite exactly
/// when the first nonzero `β_i` is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntegrabilityClass {
    Finite,
    Infinite,
}

pub fn integrability_class(betas: &[f64]) -> IntegrabilityClass {
    for &b in betas {
        if b > 0.0 {
            return IntegrabilityClass::Finite;
        }
        if b < 0.0 {
            return IntegrabilityClass::Infinite;
        }
    }
    IntegrabilityClass::Infinite
}

/// Sweep modes: the plain Rellich quotient, the improvement ratio
/// `J_{m-1}[u] / ∫ |u|^p d^{-2p} X_1²⋯X_m²`, and the power probe with
/// `X_m^{2-ε}` in the denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SweepMode {
    PlainQuotient,
    ImprovedRatio,
    PowerProbe { eps: f64 },
    /// Hardy-side family `d^{(p-k-s+ε_0)/p} ∏ X_i^{(-1+ε_i)/p}`:
    /// `∫ d^s |∇u|^p / ∫ d^{s-p} |u|^p` trending toward `|H|^p`. Trend only;
    /// no convergence-grade claim is attached to this mode.
    HardyQuotient { s: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub schedule: Vec<f64>,
    /// inner cutoff as `log(1/r_in)`; `r_in` itself can underflow f64
    pub neg_log_r_in: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
    pub error_bound: f64,
    /// max relative change of any integral when `r_in` drops tenfold
    pub truncation_sensitivity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub mode: SweepMode,
    pub p: f64,
    pub k: f64,
    pub m: usize,
    pub d_scale: f64,
    /// sharp target: `|Q|^p` for the plain quotient, `G` for the improved ratio
    pub target: Option<f64>,
    pub rows: Vec<SweepRow>,
    pub strictly_decreasing: bool,
    /// fraction of the first row's gap to `target` closed by the last row
    pub gap_shrink: Option<f64>,
    /// set when the denominator class is finite only through positive ε and
    /// the sweep did not expose its growth (factor < 10): `r_in` too large
    pub divergence_warning: bool,
}

/// All integrals of one sweep point. Each splits into a log-coordinate part
/// over `[r_in, c1]`, where the window is identically 1 and only products of
/// powers appear, and a linear part over the window `[c1, c2]`.
struct FamilyIntegrals {
    red: functionals::RadialReduction,
    p: f64,
    m: usize,
    d_scale: f64,
    schedule: EpsilonSchedule,
    window: (f64, f64),
    beta: f64,
}

/// Which integrand the shared driver assembles over the family measure.
#[derive(Clone, Copy)]
enum Factor {
    /// `|Δu|^p J`
    RellichDelta,
    /// `|u|^p d^{-2p} X^{shift} J`
    RellichPlain,
    /// `d^s |∇u|^p J`
    HardyGrad { s: f64 },
    /// `d^{s-p} |u|^p X^{shift} J`
    HardyPlain { s: f64 },
}

const SWEEP_TOL: f64 = 1e-10;

impl FamilyIntegrals {
    fn new(field: &DistanceField, spec: &ExtremizerSpec) -> Result<Self> {
        let red = functionals::reduce(field)?;
        spec.check(red.sup_d)?;
        let beta = 2.0 * spec.p - red.k;
        Ok(Self {
            red,
            p: spec.p,
            m: spec.m,
            d_scale: spec.d_scale,
            schedule: spec.schedule.clone(),
            window: spec.window,
            beta,
        })
    }

    fn new_hardy(field: &DistanceField, spec: &ExtremizerSpec, s: f64) -> Result<Self> {
        let mut ints = Self::new(field, spec)?;
        ints.beta = spec.p - ints.red.k - s;
        Ok(ints)
    }

    /// One family integral down to `r = e^{-xi_in}`, per `factor`.
    fn integral(&self, xi_in: f64, x_shift: &[f64], factor: Factor) -> Result<Integral> {
        let (c1, c2) = self.window;
        let p = self.p;
        let m = self.m;
        let d = self.d_scale;
        let eps = self.schedule.eps().to_vec();
        let eps0 = eps[0];
        let beta = self.beta;
        let weight_exp = self.red.weight_exp;
        let delta_d = self.red.delta_d.clone();
        let d_delta_d = self.red.d_delta_d.clone();

        // base power of r in the integrand, with the singular weight and the
        // Jacobian r^{weight_exp} folded in, +1 from dr = -r dξ; every
        // factor variant lands on the same exponent
        let base_pow = match factor {
            Factor::RellichDelta | Factor::RellichPlain => {
                beta + eps0 - 2.0 * p + weight_exp + 1.0
            }
            Factor::HardyGrad { s } | Factor::HardyPlain { s } => {
                beta + eps0 + s - p + weight_exp + 1.0
            }
        };

        let red_extra: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>> = self.red.extra.clone();
        let front = self.red.front;
        let x_shift = x_shift.to_vec();
        let log_part = {
            let eps = eps.clone();
            let sched = EpsilonSchedule::new(eps.clone()).expect("validated");
            let x_shift = x_shift.clone();
            let red_extra = red_extra.clone();
            let d_delta_d = d_delta_d.clone();
            let log_f = move |xi: f64| {
                // xi = log(1/r); t = r/d
                let r = (-xi).exp();
                let u_t = xi + d.ln();
                let mut acc = base_pow * -xi + front.ln();
                if let Some(extra) = &red_extra {
                    acc += extra(r).ln();
                }
                if m > 0 {
                    let xs = cascade::x_chain_neg_log(u_t, m).expect("u ≥ 0");
                    for (i, &x) in xs.iter().enumerate() {
                        let mut e = -1.0 + eps[i + 1];
                        e += x_shift.get(i).copied().unwrap_or(0.0);
                        acc += e * x.ln();
                    }
                }
                match factor {
                    Factor::RellichDelta => {
                        let (g, h) =
                            cascade::g_h_eval_neg_log(u_t, m, &sched).expect("u ≥ 0");
                        let b = delta_v_factor(p, beta, g, h, d_delta_d(r));
                        acc += p * b.abs().max(1e-300).ln();
                    }
                    Factor::HardyGrad { .. } => {
                        let (g, _h) =
                            cascade::g_h_eval_neg_log(u_t, m, &sched).expect("u ≥ 0");
                        acc += p * ((beta + g) / p).abs().max(1e-300).ln();
                    }
                    Factor::RellichPlain | Factor::HardyPlain { .. } => {}
                }
                acc
            };
            quadrature::integrate_log(log_f, -c1.ln(), xi_in, SWEEP_TOL)?
        };

        // window region in linear coordinates
        let schedule = self.schedule.clone();
        let lin_f = move |r: f64| {
            let t = r / d;
            let (g, h) = cascade::g_h_eval(t, m, &schedule).expect("t in (0,1]");
            let mut v = r.powf((beta + eps0) / p);
            let mut x_extra = 1.0;
            if m > 0 {
                let xs = cascade::x_chain(t, m).expect("t in (0,1]");
                for (i, &x) in xs.iter().enumerate() {
                    v *= x.powf((-1.0 + eps[i + 1]) / p);
                    x_extra *= x.powf(x_shift.get(i).copied().unwrap_or(0.0));
                }
            }
            let (w, dw, ddw) = log_window(r, c1, c2);
            let extra = red_extra.as_ref().map_or(1.0, |e| e(r)) * front;
            let dv = v * (beta + g) / (p * r);
            match factor {
                Factor::RellichDelta => {
                    let ddv =
                        v * ((beta - p + g) * (beta + g) / (p * p) + h / p) / (r * r);
                    let du = dw * v + w * dv;
                    let ddu = ddw * v + 2.0 * dw * dv + w * ddv;
                    let lap = ddu + delta_d(r) * du;
                    lap.abs().powf(p) * extra
                }
                Factor::RellichPlain => {
                    (w * v).abs().powf(p) * r.powf(-2.0 * p) * x_extra * extra
                }
                Factor::HardyGrad { s } => {
                    let du = dw * v + w * dv;
                    du.abs().powf(p) * r.powf(s) * extra
                }
                Factor::HardyPlain { s } => {
                    (w * v).abs().powf(p) * r.powf(s - p) * x_extra * extra
                }
            }
        };
        let measure = RadialMeasure::linear(c1, c2, weight_exp);
        let lin_part = quadrature::integrate(lin_f, &measure, SWEEP_TOL)?;
        Ok(Integral {
            value: log_part.value + lin_part.value,
            error: log_part.error + lin_part.error,
        })
    }
}

/// Runs one sweep. Schedules must shrink `ε_0` first (nonincreasing, with
/// later entries free to shrink after it), matching the nested limits of the
/// sharpness argument.
pub fn epsilon_sweep(
    field: &DistanceField,
    base: &ExtremizerSpec,
    schedules: &[EpsilonSchedule],
    mode: SweepMode,
) -> Result<SweepTable> {
    if schedules.len() < 2 {
        return Err(ExtremizerError::TooFewSchedules);
    }
    for (index, w) in schedules.windows(2).enumerate() {
        if w[1].eps0() > w[0].eps0() * (1.0 + 1e-12) {
            return Err(ExtremizerError::BadSweepOrder { index });
        }
    }
    for (index, s) in schedules.iter().enumerate() {
        if s.eps0() <= 0.0 {
            return Err(ExtremizerError::ZeroEpsilonZero { index });
        }
    }
    let red = functionals::reduce(field)?;
    let set = constants::rellich_constants(base.p, red.k)?;
    let m = base.m;
    if m == 0 && matches!(mode, SweepMode::ImprovedRatio | SweepMode::PowerProbe { .. }) {
        return Err(ExtremizerError::ImprovedNeedsDepth);
    }
    let target = match mode {
        SweepMode::PlainQuotient => Some(set.q_abs_p),
        SweepMode::ImprovedRatio => Some(set.g),
        SweepMode::PowerProbe { .. } => None,
        SweepMode::HardyQuotient { s } => {
            let h = (red.k + s - base.p) / base.p;
            Some(h.abs().powf(base.p))
        }
    };
    let mut rows = Vec::with_capacity(schedules.len());
    for schedule in schedules {
        let spec = ExtremizerSpec {
            p: base.p,
            m,
            d_scale: base.d_scale,
            schedule: schedule.clone(),
            r_in: base.r_in,
            window: base.window,
        };
        let (ints, num_factor, den_factor) = match mode {
            SweepMode::HardyQuotient { s } => (
                FamilyIntegrals::new_hardy(field, &spec, s)?,
                Factor::HardyGrad { s },
                Factor::HardyPlain { s },
            ),
            _ => (
                FamilyIntegrals::new(field, &spec)?,
                Factor::RellichDelta,
                Factor::RellichPlain,
            ),
        };
        let xi_in = spec.inner_xi();
        let no_shift = vec![0.0; m];
        let mut full_shift = vec![2.0; m];
        if let SweepMode::PowerProbe { eps } = mode {
            if m > 0 {
                full_shift[m - 1] = 2.0 - eps;
            }
        }
        let numerator = ints.integral(xi_in, &no_shift, num_factor)?;
        let den0 = ints.integral(xi_in, &no_shift, den_factor)?;
        let (num_value, num_err, den, den_err) = match mode {
            SweepMode::PlainQuotient | SweepMode::HardyQuotient { .. } => {
                (numerator.value, numerator.error, den0.value, den0.error)
            }
            SweepMode::ImprovedRatio | SweepMode::PowerProbe { .. } => {
                // J_{m-1}[u] over the shifted denominator
                let mut j = numerator.value - set.q_abs_p * den0.value;
                let mut j_err = numerator.error + set.q_abs_p * den0.error;
                for i in 1..m {
                    let mut shift = vec![0.0; m];
                    for s in shift.iter_mut().take(i) {
                        *s = 2.0;
                    }
                    let a_i = ints.integral(xi_in, &shift, den_factor)?;
                    j -= set.g * a_i.value;
                    j_err += set.g * a_i.error;
                }
                let den = ints.integral(xi_in, &full_shift, den_factor)?;
                (j, j_err, den.value, den.error)
            }
        };
        let ratio = num_value / den;
        let error_bound =
            (num_err + ratio.abs() * den_err) / den.abs().max(1e-300);
        // truncation sensitivity: redo the dominant integrals at r_in/10
        let xi_deep = xi_in + std::f64::consts::LN_10;
        let num_deep = ints.integral(xi_deep, &no_shift, num_factor)?;
        let den_deep = ints.integral(xi_deep, &full_shift, den_factor)?;
        let den_now = ints.integral(xi_in, &full_shift, den_factor)?;
        let sens_num = (num_deep.value - numerator.value).abs() / numerator.value.abs().max(1e-300);
        let sens_den = (den_deep.value - den_now.value).abs() / den_now.value.abs().max(1e-300);
        rows.push(SweepRow {
            schedule: schedule.eps().to_vec(),
            neg_log_r_in: xi_in,
            numerator: num_value,
            denominator: den,
            ratio,
            error_bound,
            truncation_sensitivity: sens_num.max(sens_den),
        });
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].ratio < w[0].ratio);
    let gap_shrink = target.map(|t| {
        let first = (rows.first().unwrap().ratio - t).abs();
        let last = (rows.last().unwrap().ratio - t).abs();
        if first <= 0.0 {
            1.0
        } else {
            1.0 - last / first
        }
    });
    // ε → 0 limit of the denominator exponents is the all-zero vector, which
    // classifies infinite; warn when the sweep never exposed that growth
    let growth = rows.last().unwrap().denominator / rows.first().unwrap().denominator;
    let limit_betas = vec![0.0; m + 1];
    let divergence_warning =
        integrability_class(&limit_betas) == IntegrabilityClass::Infinite && growth < 10.0;
    Ok(SweepTable {
        mode,
        p: base.p,
        k: red.k,
        m,
        d_scale: base.d_scale,
        target,
        rows,
        strictly_decreasing,
        gap_shrink,
        divergence_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::radial_laplacian;

    fn point5() -> DistanceField {
        DistanceField::point(5, 1.0).unwrap()
    }

    fn spec(p: f64, m: usize, eps: Vec<f64>) -> ExtremizerSpec {
        ExtremizerSpec {
            p,
            m,
            d_scale: 1.0,
            schedule: EpsilonSchedule::new(eps).unwrap(),
            r_in: Some(1e-3),
            window: (0.45, 0.9),
        }
    }

    #[test]
    fn braces_reduces_to_q_at_zero() {
        // equality case, all ε = 0: the factor is exactly Q (and the general
        // form with dΔd = k-1 agrees up to sign)
        let (p, k) = (2.0, 5.0);
        let q = constants::rellich_constants(p, k).unwrap().q;
        assert!((rellich_braces(p, k, 0.0, 0.0) - q).abs() < 1e-15);
        let b = delta_v_factor(p, 2.0 * p - k, 0.0, 0.0, k - 1.0);
        assert!((b + q).abs() < 1e-14);
    }

    #[test]
    fn braces_identity_with_g_h() {
        // F(g,h) = -B(g,h) for the equality case, any (g, h)
        let (p, k) = (2.0, 5.0);
        for &(g, h) in &[(0.1, -0.2), (-0.5, 0.3), (0.01, 0.0)] {
            let f = rellich_braces(p, k, g, h);
            let b = delta_v_factor(p, 2.0 * p - k, g, h, k - 1.0);
            assert!((f + b).abs() < 1e-13, "g={g} h={h}");
        }
    }

    #[test]
    fn depth_zero_family_is_power_law() {
        // m = 0, ε_0 = ε: Δu = -(Q + Rε/p - ε²/p²) d^{(-k+ε)/p} inside the window
        let eps = 0.1;
        let s = spec(2.0, 0, vec![eps]);
        let prof = build_rellich_family(&point5(), &s).unwrap();
        let lap = radial_laplacian(&prof, &point5()).unwrap();
        let set = constants::rellich_constants(2.0, 5.0).unwrap();
        for &r in &[0.05f64, 0.2, 0.4] {
            let expect = -(set.q + set.r * eps / 2.0 - eps * eps / 4.0)
                * r.powf((-5.0 + eps) / 2.0);
            assert!(
                (lap(r) - expect).abs() < 1e-9 * expect.abs(),
                "r={r}: {} vs {expect}",
                lap(r)
            );
        }
    }

    #[test]
    fn all_ones_epsilons_give_pure_power() {
        let s = spec(2.0, 2, vec![0.3, 1.0, 1.0]);
        let prof = build_rellich_family(&point5(), &s).unwrap();
        let Profile::ClosedForm(cf) = &prof else {
            panic!("closed form expected")
        };
        for &r in &[0.1f64, 0.3] {
            let (u, _, _) = cf.eval(r);
            let expect = r.powf((-5.0 + 4.0 + 0.3) / 2.0);
            assert!((u - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn closed_form_laplacian_matches_grid() {
        // geometric mesh: the family varies on log scale, so uniform meshes
        // cannot reach second-order accuracy near the inner end
        let s = spec(2.0, 1, vec![0.05, 0.2]);
        let prof = build_rellich_family(&point5(), &s).unwrap();
        let Profile::ClosedForm(cf) = &prof else {
            unreachable!()
        };
        let n = 4000usize;
        let (a, b) = (1e-3f64, 0.9f64);
        let mesh: Vec<f64> = (0..n)
            .map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64))
            .collect();
        let mut values: Vec<f64> = mesh.iter().map(|&r| cf.eval(r).0).collect();
        values[0] = 0.0;
        *values.last_mut().unwrap() = 0.0;
        let grid = Profile::Grid(crate::functionals::GridProfile::new(mesh.clone(), values).unwrap());
        let lap_exact = radial_laplacian(&prof, &point5()).unwrap();
        let lap_grid = radial_laplacian(&grid, &point5()).unwrap();
        // compare on the plateau, where the cascade closed form is exercised
        for &r in mesh.iter().skip(40).step_by(50) {
            if r > 0.44 {
                continue;
            }
            let a = lap_exact(r);
            let b = lap_grid(r);
            assert!(
                (a - b).abs() <= 1e-5 * a.abs().max(1.0) + 1e-7,
                "r={r}: exact {a} vs grid {b}"
            );
        }
    }

    #[test]
    fn integrability_examples() {
        assert_eq!(
            integrability_class(&[0.1, -1.0, -1.0]),
            IntegrabilityClass::Finite
        );
        assert_eq!(
            integrability_class(&[0.0, 0.0, 0.0]),
            IntegrabilityClass::Infinite
        );
        assert_eq!(
            integrability_class(&[0.0, 0.5, -1.0]),
            IntegrabilityClass::Finite
        );
        assert_eq!(integrability_class(&[]), IntegrabilityClass::Infinite);
        assert_eq!(
            integrability_class(&[0.0, -0.2, 0.5]),
            IntegrabilityClass::Infinite
        );
    }

    #[test]
    fn plain_sweep_decreases_to_sharp_constant() {
        let base = ExtremizerSpec {
            p: 2.0,
            m: 0,
            d_scale: 1.0,
            schedule: EpsilonSchedule::new(vec![0.2]).unwrap(),
            r_in: None,
            window: (1e-3, 0.9),
        };
        let schedules: Vec<EpsilonSchedule> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&e| EpsilonSchedule::new(vec![e]).unwrap())
            .collect();
        let table =
            epsilon_sweep(&point5(), &base, &schedules, SweepMode::PlainQuotient).unwrap();
        let q2 = 25.0 / 16.0;
        assert!(table.strictly_decreasing, "{table:?}");
        for row in &table.rows {
            assert!(row.ratio >= q2 - 10.0 * row.error_bound, "{row:?}");
            assert!(row.truncation_sensitivity < 1e-6, "{row:?}");
        }
        assert!(table.rows.last().unwrap().ratio < 1.10 * q2);
    }

    #[test]
    fn hardy_sweep_trends_toward_hardy_constant() {
        // |H|^p = (3/2)² = 2.25 for k = 5, s = 0, p = 2; trend only
        let base = ExtremizerSpec {
            p: 2.0,
            m: 0,
            d_scale: 1.0,
            schedule: EpsilonSchedule::new(vec![0.2]).unwrap(),
            r_in: None,
            window: (1e-3, 0.9),
        };
        let schedules: Vec<EpsilonSchedule> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&e| EpsilonSchedule::new(vec![e]).unwrap())
            .collect();
        let table = epsilon_sweep(
            &point5(),
            &base,
            &schedules,
            SweepMode::HardyQuotient { s: 0.0 },
        )
        .unwrap();
        assert_eq!(table.target, Some(2.25));
        assert!(table.strictly_decreasing, "{table:?}");
        let last = table.rows.last().unwrap().ratio;
        assert!(last > 2.25 * 0.98 && last < 2.25 * 1.2, "last {last}");
    }

    #[test]
    fn sweep_rejects_bad_order() {
        let base = ExtremizerSpec {
            p: 2.0,
            m: 0,
            d_scale: 1.0,
            schedule: EpsilonSchedule::new(vec![0.1]).unwrap(),
            r_in: None,
            window: (0.45, 0.9),
        };
        let schedules: Vec<EpsilonSchedule> = [0.05, 0.2]
            .iter()
            .map(|&e| EpsilonSchedule::new(vec![e]).unwrap())
            .collect();
        assert!(matches!(
            epsilon_sweep(&point5(), &base, &schedules, SweepMode::PlainQuotient),
            Err(ExtremizerError::BadSweepOrder { .. })
        ));
    }

    #[test]
    fn integrability_class_matches_quadrature_behavior() {
        // finite-class integrands settle as the cutoff deepens; the
        // infinite-class limit keeps growing without settling
        let finite = |xi_lo: f64| {
            // ∫ r^{-1+0.3} X_1^{0} … : β_0 = 0.3 > 0, finite
            quadrature::integrate_log(|u: f64| -0.3 * u, 0.0, xi_lo, 1e-12)
                .unwrap()
                .value
        };
        assert_eq!(
            integrability_class(&[0.3]),
            IntegrabilityClass::Finite
        );
        let shallow = finite(200.0);
        let deep = finite(200.0 + 2.0 * std::f64::consts::LN_10);
        assert!((deep - shallow).abs() < 1e-6 * shallow.abs());

        // β = (0): ∫ r^{-1} dr grows linearly in the log cutoff
        assert_eq!(integrability_class(&[0.0]), IntegrabilityClass::Infinite);
        let grow = |xi_lo: f64| {
            quadrature::integrate_log(|_u: f64| 0.0, 0.0, xi_lo, 1e-12)
                .unwrap()
                .value
        };
        assert!(grow(400.0) > grow(200.0) + 100.0);
    }

    #[test]
    fn divergence_warning_when_r_in_too_large() {
        // a huge r_in hides the ε-driven growth of the denominator
        let base = ExtremizerSpec {
            p: 2.0,
            m: 0,
            d_scale: 1.0,
            schedule: EpsilonSchedule::new(vec![0.2]).unwrap(),
            r_in: Some(0.2),
            window: (0.45, 0.9),
        };
        let schedules: Vec<EpsilonSchedule> = [0.2, 0.15]
            .iter()
            .map(|&e| EpsilonSchedule::new(vec![e]).unwrap())
            .collect();
        let table =
            epsilon_sweep(&point5(), &base, &schedules, SweepMode::PlainQuotient).unwrap();
        assert!(table.divergence_warning);
    }
}
