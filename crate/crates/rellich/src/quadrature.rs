//! Singularity-aware one-dimensional quadrature.
//!
//! Adaptive bisection over a Gauss(7)/Kronrod(15) embedded pair, in either
//! linear radial coordinates or the log coordinate `u = log(D/r)`. The log
//! mode accepts the integrand through its logarithm so products of powers of
//! `d` and the cascade stay representable down to `u ~ 1e4`.

use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("integration interval [{a}, {b}] is empty or not finite")]
    BadInterval { a: f64, b: f64 },
    #[error("requested tolerance {tol} below supported floor 1e-13")]
    TolTooTight { tol: f64 },
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
    #[error(
        "no convergence within {evals} evaluations: partial value {value}, \
         error estimate {error}"
    )]
    Budget { value: f64, error: f64, evals: usize },
}

pub type Result<T> = std::result::Result<T, QuadratureError>;

/// Integral value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

impl Integral {
    pub const ZERO: Integral = Integral {
        value: 0.0,
        error: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateMode {
    Linear,
    Log,
}

/// Radial measure `r^w dr` on `[a, b]`, integrated in linear or log coordinates.
#[derive(Debug, Clone, Copy)]
pub struct RadialMeasure {
    pub a: f64,
    pub b: f64,
    /// Radial weight exponent: `N-1` for point distance, `k-1` cross-sectionally
    /// for subspace distance, `0` for slab halves.
    pub weight: f64,
    pub mode: CoordinateMode,
}

impl RadialMeasure {
    pub fn linear(a: f64, b: f64, weight: f64) -> Self {
        Self {
            a,
            b,
            weight,
            mode: CoordinateMode::Linear,
        }
    }

    pub fn log(a: f64, b: f64, weight: f64) -> Self {
        Self {
            a,
            b,
            weight,
            mode: CoordinateMode::Log,
        }
    }
}

/// Default evaluation budget per integral.
pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

#[allow(clippy::excessive_precision)]
const GK_XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
#[allow(clippy::excessive_precision)]
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];
#[allow(clippy::excessive_precision)]
const GK_WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// QUADPACK-style error rescaling from the raw `|K15 - G7|` difference.
fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// One G7/K15 panel.
fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    if !f_center.is_finite() {
        return Err(QuadratureError::NonFinite { at: center });
    }
    let mut res_gauss = GK_WG[3] * f_center;
    let mut res_kronrod = f_center * GK_WGK[7];
    let mut res_abs = res_kronrod.abs();
    let mut fv1 = [0.0f64; 7];
    let mut fv2 = [0.0f64; 7];
    for j in 0..7 {
        let abscissa = half * GK_XGK[j];
        let f1 = f(center - abscissa);
        let f2 = f(center + abscissa);
        if !f1.is_finite() {
            return Err(QuadratureError::NonFinite {
                at: center - abscissa,
            });
        }
        if !f2.is_finite() {
            return Err(QuadratureError::NonFinite {
                at: center + abscissa,
            });
        }
        fv1[j] = f1;
        fv2[j] = f2;
        let fsum = f1 + f2;
        if j % 2 != 0 {
            res_gauss += GK_WG[j / 2] * fsum;
        }
        res_kronrod += GK_WGK[j] * fsum;
        res_abs += GK_WGK[j] * (f1.abs() + f2.abs());
    }
    let mean = res_kronrod * 0.5;
    let mut res_asc = GK_WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += GK_WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let raw_err = (res_kronrod - res_gauss) * half;
    let value = res_kronrod * half;
    let error = rescale_error(raw_err, res_abs * half.abs(), res_asc * half.abs());
    Ok((value, error))
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Repeated Aitken Δ² (the even columns of the epsilon algorithm), limited to
/// a few passes so roundoff in the inputs is not amplified. Returns the
/// estimate from the quietest pass; the caller judges convergence by how the
/// estimate stabilizes across successive peel levels.
fn aitken_value(seq: &[f64]) -> f64 {
    let start = seq.len().saturating_sub(24);
    let mut cur: Vec<f64> = seq[start..].to_vec();
    let mut estimate = *cur.last().unwrap();
    let mut quietest = if cur.len() >= 2 {
        (cur[cur.len() - 1] - cur[cur.len() - 2]).abs()
    } else {
        f64::INFINITY
    };
    for _ in 0..4 {
        if cur.len() < 3 {
            break;
        }
        let mut next = Vec::with_capacity(cur.len() - 2);
        for w in cur.windows(3) {
            let denom = w[2] - 2.0 * w[1] + w[0];
            let num = w[2] - w[1];
            if denom.abs() <= 1e-300 || !denom.is_finite() {
                // no geometric contraction to exploit; keep the raw value
                next.push(w[2]);
            } else {
                next.push(w[2] - num * num / denom);
            }
        }
        if next.len() >= 2 {
            let intra = (next[next.len() - 1] - next[next.len() - 2]).abs();
            if intra < quietest {
                quietest = intra;
                estimate = *next.last().unwrap();
            }
        }
        cur = next;
    }
    estimate
}

struct Adaptive<'f, F: Fn(f64) -> f64> {
    f: &'f F,
    heap: BinaryHeap<Panel>,
    evals: usize,
    budget: usize,
}

impl<'f, F: Fn(f64) -> f64> Adaptive<'f, F> {
    fn totals(&self) -> (f64, f64) {
        let v = self.heap.iter().map(|p| p.value).sum();
        let e = self.heap.iter().map(|p| p.error).sum();
        (v, e)
    }

    fn bisect_worst(&mut self) -> Result<Option<Panel>> {
        let worst = self.heap.pop().expect("heap never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // f64 resolution exhausted; keep the panel's own estimate
            self.heap.push(worst);
            return Ok(None);
        }
        let (lv, le) = qk15(self.f, worst.a, mid)?;
        let (rv, re) = qk15(self.f, mid, worst.b)?;
        self.evals += 30;
        self.heap.push(Panel {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        self.heap.push(Panel {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
        Ok(Some(worst))
    }
}

/// Adaptive bisection on `[a, b]` with an accelerated peel for endpoint
/// singularities. When refinement keeps hammering a panel that touches an
/// endpoint, the dyadic descent toward that endpoint forms a near-geometric
/// sequence of partial integrals; Aitken extrapolation of its partial sums
/// reaches the limit without sampling depths where power-law integrands stop
/// being representable.
fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, budget: usize) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(QuadratureError::BadInterval { a, b });
    }
    if tol < 1e-13 {
        return Err(QuadratureError::TolTooTight { tol });
    }
    let (value, error) = qk15(f, a, b)?;
    let mut driver = Adaptive {
        f,
        heap: BinaryHeap::new(),
        evals: 15,
        budget,
    };
    driver.heap.push(Panel {
        a,
        b,
        value,
        error,
    });
    let mut left_streak = 0usize;
    let mut right_streak = 0usize;
    loop {
        let (total_value, total_error) = driver.totals();
        if total_error <= tol * total_value.abs() || total_error == 0.0 {
            return Ok(Integral {
                value: total_value,
                error: total_error,
            });
        }
        if driver.evals + 30 > driver.budget {
            return Err(QuadratureError::Budget {
                value: total_value,
                error: total_error,
                evals: driver.evals,
            });
        }
        let Some(worst) = driver.bisect_worst()? else {
            let (value, error) = driver.totals();
            return Ok(Integral { value, error });
        };
        let width = worst.b - worst.a;
        left_streak = if worst.a == a { left_streak + 1 } else { 0 };
        right_streak = if worst.b == b { right_streak + 1 } else { 0 };
        let narrow = width <= 1e-2 * (b - a);
        if narrow && left_streak >= 6 {
            return peel_endpoint(driver, tol, Side::Left);
        }
        if narrow && right_streak >= 6 {
            return peel_endpoint(driver, tol, Side::Right);
        }
    }
}

enum Side {
    Left,
    Right,
}

const PEEL_LEVELS: usize = 220;

/// Endpoint acceleration: strip the panel hugging the singular endpoint,
/// refine everything else, then peel dyadic slices toward the endpoint and
/// extrapolate the partial sums.
fn peel_endpoint<F: Fn(f64) -> f64>(
    mut driver: Adaptive<'_, F>,
    tol: f64,
    side: Side,
) -> Result<Integral> {
    // extract the endpoint panel
    let mut panels: Vec<Panel> = std::mem::take(&mut driver.heap).into_vec();
    let idx = match side {
        Side::Left => {
            let a = panels.iter().map(|p| p.a).fold(f64::INFINITY, f64::min);
            panels.iter().position(|p| p.a == a).expect("panel exists")
        }
        Side::Right => {
            let b = panels.iter().map(|p| p.b).fold(f64::NEG_INFINITY, f64::max);
            panels.iter().position(|p| p.b == b).expect("panel exists")
        }
    };
    let endpoint_panel = panels.swap_remove(idx);
    driver.heap = panels.into();

    // the regular panels must not pollute the extrapolation signal
    loop {
        let (v, e) = driver.totals();
        if e <= 0.1 * tol * v.abs().max(1e-300) || e == 0.0 {
            break;
        }
        if driver.evals + 30 > driver.budget {
            return Err(QuadratureError::Budget {
                value: v + endpoint_panel.value,
                error: e + endpoint_panel.error,
                evals: driver.evals,
            });
        }
        if driver.bisect_worst()?.is_none() {
            break;
        }
    }
    let (mut base, base_err) = driver.totals();

    let (mut lo, mut hi) = (endpoint_panel.a, endpoint_panel.b);
    let mut partials = Vec::with_capacity(PEEL_LEVELS);
    let mut estimates: Vec<f64> = Vec::with_capacity(PEEL_LEVELS);
    let mut slice_err = 0.0;
    let mut slice_mags: Vec<f64> = Vec::with_capacity(PEEL_LEVELS);
    for _ in 0..PEEL_LEVELS {
        let mid = match side {
            Side::Left => lo + 0.5 * (hi - lo),
            Side::Right => hi - 0.5 * (hi - lo),
        };
        if mid <= lo || mid >= hi {
            break;
        }
        let (slice_a, slice_b) = match side {
            Side::Left => (mid, hi),
            Side::Right => (lo, mid),
        };
        // each slice sits a dyadic margin away from the singularity
        let (sv, se) = qk15(driver.f, slice_a, slice_b)?;
        driver.evals += 15;
        let mut slice = Integral {
            value: sv,
            error: se,
        };
        if slice.error > 0.02 * tol * slice.value.abs().max(1e-300) {
            slice = adapt_plain(
                driver.f,
                slice_a,
                slice_b,
                0.02 * tol,
                (driver.budget - driver.evals).min(20_000),
            )?;
            driver.evals += 200; // coarse accounting for the nested refinement
        }
        base += slice.value;
        slice_err += slice.error;
        partials.push(base);
        slice_mags.push(slice.value.abs());
        match side {
            Side::Left => hi = mid,
            Side::Right => lo = mid,
        }
        if partials.len() >= 6 {
            let est = aitken_value(&partials);
            estimates.push(est);
            // Extrapolation is only meaningful on a contracting tail: a
            // growing dyadic sequence (slices still climbing toward the mass
            // of the integrand) extrapolates to its additive constant, not
            // to the integral. Require the recent slices to shrink, or to be
            // negligible outright.
            let n_s = slice_mags.len();
            let scale = est.abs().max(base.abs()).max(1e-300);
            let contracting = n_s >= 3
                && (0..2).all(|b| {
                    let cur = slice_mags[n_s - 1 - b];
                    let prev = slice_mags[n_s - 2 - b];
                    cur <= 0.985 * prev + 1e-3 * tol * scale
                });
            // converged when the extrapolated value has stopped moving
            if contracting && estimates.len() >= 3 {
                let n = estimates.len();
                let wobble =
                    (estimates[n - 1] - estimates[n - 2]).abs()
                        + (estimates[n - 1] - estimates[n - 3]).abs();
                let total_err = wobble + base_err + slice_err;
                if est.is_finite() && total_err <= tol * est.abs().max(1e-300) {
                    return Ok(Integral {
                        value: est,
                        error: total_err,
                    });
                }
            }
        }
        if driver.evals + 30 > driver.budget {
            break;
        }
    }
    let (value, error) = match estimates.len() {
        0 => (
            base + endpoint_panel.value,
            base_err + endpoint_panel.error,
        ),
        1 => (estimates[0], base_err + slice_err),
        n => (
            estimates[n - 1],
            (estimates[n - 1] - estimates[n - 2]).abs() + base_err + slice_err,
        ),
    };
    Err(QuadratureError::Budget {
        value,
        error,
        evals: driver.evals,
    })
}

/// Plain adaptive bisection without the endpoint accelerator; used on the
/// peel slices, which are smooth.
fn adapt_plain<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    budget: usize,
) -> Result<Integral> {
    let (value, error) = qk15(f, a, b)?;
    let mut driver = Adaptive {
        f,
        heap: BinaryHeap::new(),
        evals: 15,
        budget,
    };
    driver.heap.push(Panel {
        a,
        b,
        value,
        error,
    });
    loop {
        let (total_value, total_error) = driver.totals();
        if total_error <= tol * total_value.abs().max(1e-300) || total_error == 0.0 {
            return Ok(Integral {
                value: total_value,
                error: total_error,
            });
        }
        if driver.evals + 30 > driver.budget {
            return Ok(Integral {
                value: total_value,
                error: total_error,
            });
        }
        if driver.bisect_worst()?.is_none() {
            let (value, error) = driver.totals();
            return Ok(Integral { value, error });
        }
    }
}

/// Integrates `f(r) r^w dr` over the measure's interval at relative
/// tolerance `tol`, with the default node budget.
pub fn integrate<F: Fn(f64) -> f64>(f: F, measure: &RadialMeasure, tol: f64) -> Result<Integral> {
    integrate_with_budget(f, measure, tol, DEFAULT_NODE_BUDGET)
}

pub fn integrate_with_budget<F: Fn(f64) -> f64>(
    f: F,
    measure: &RadialMeasure,
    tol: f64,
    budget: usize,
) -> Result<Integral> {
    let w = measure.weight;
    match measure.mode {
        CoordinateMode::Linear => {
            if measure.a < 0.0 {
                return Err(QuadratureError::BadInterval {
                    a: measure.a,
                    b: measure.b,
                });
            }
            adapt(&|r: f64| f(r) * r.powf(w), measure.a, measure.b, tol, budget)
        }
        CoordinateMode::Log => {
            if measure.a <= 0.0 {
                return Err(QuadratureError::BadInterval {
                    a: measure.a,
                    b: measure.b,
                });
            }
            // r = e^{-u}: ∫ f r^w dr = ∫ f(e^{-u}) e^{-(w+1)u} du
            let u_lo = -measure.b.ln();
            let u_hi = -measure.a.ln();
            adapt(
                &|u: f64| {
                    let r = (-u).exp();
                    f(r) * (-(w + 1.0) * u).exp()
                },
                u_lo,
                u_hi,
                tol,
                budget,
            )
        }
    }
}

/// Integrates `exp(log_f(u)) du` over `[u_lo, u_hi]`, where
/// `log_f(u) = log f(r) + log |dr/du|` for `r = scale · e^{-u}` is assembled
/// by the caller. Pure power products stay linear in `u`, so intervals
/// reaching `u ~ 1e4` neither overflow nor lose the integrand to rounding
/// before the tail is truly negligible.
pub fn integrate_log<F: Fn(f64) -> f64>(
    log_f: F,
    u_lo: f64,
    u_hi: f64,
    tol: f64,
) -> Result<Integral> {
    integrate_log_with_budget(log_f, u_lo, u_hi, tol, DEFAULT_NODE_BUDGET)
}

pub fn integrate_log_with_budget<F: Fn(f64) -> f64>(
    log_f: F,
    u_lo: f64,
    u_hi: f64,
    tol: f64,
    budget: usize,
) -> Result<Integral> {
    adapt(
        &|u: f64| {
            let lg = log_f(u);
            if lg == f64::NEG_INFINITY {
                0.0
            } else {
                lg.exp()
            }
        },
        u_lo,
        u_hi,
        tol,
        budget,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_singularity_linear_mode() {
        // ∫_0^1 r^{N-1} r^{-N+ε} dr = 1/ε = 10 for ε = 0.1, N = 5
        let eps = 0.1;
        let m = RadialMeasure::linear(0.0, 1.0, 4.0);
        let got = integrate(|r: f64| r.powf(-5.0 + eps), &m, 1e-10).unwrap();
        assert!(
            (got.value - 10.0).abs() <= 10.0 * 1e-9,
            "value {} err {}",
            got.value,
            got.error
        );
    }

    #[test]
    fn cascade_antiderivative_beta_one() {
        // ∫_0^1 r^{-1} X_1²(r) dr = X_1(1) - X_1(0⁺) = 1.
        // In u = log(1/r) the integrand is (1+u)^{-2}; the tail beyond U is
        // 1/(1+U), far below tolerance at U = 1e12.
        let got = integrate_log(|u: f64| -2.0 * (1.0 + u).ln(), 0.0, 1e12, 1e-11).unwrap();
        assert!((got.value - 1.0).abs() < 1e-10, "value {}", got.value);
    }

    #[test]
    fn cascade_antiderivative_beta_half() {
        // ∫_0^1 r^{-1} X_1^{1.5}(r) dr = 1/0.5 = 2
        let got = integrate_log(|u: f64| -1.5 * (1.0 + u).ln(), 0.0, 1e22, 1e-11).unwrap();
        assert!((got.value - 2.0).abs() < 2.0 * 1e-10, "value {}", got.value);
    }

    #[test]
    fn deep_exponential_interval() {
        // ∫ r^{-1+ε} dr over [e^{-T}, 1] = (1 - e^{-εT})/ε
        let eps = 0.01;
        for &(t_depth, expect) in &[
            (2000.0, (1.0 - (-20.0f64).exp()) / 0.01),
            (100.0, (1.0 - (-1.0f64).exp()) / 0.01),
        ] {
            let got = integrate_log(|u: f64| -eps * u, 0.0, t_depth, 1e-12).unwrap();
            assert!(
                (got.value - expect).abs() < expect * 1e-11,
                "T={t_depth}: {} vs {expect}",
                got.value
            );
        }
        let exact = (1.0 - (-1.0f64).exp()) / 0.01;
        assert!((exact - 63.212_055_882_855_77).abs() < 1e-12);
    }

    #[test]
    fn log_and_linear_modes_agree() {
        let lin = integrate(
            |r: f64| r * r,
            &RadialMeasure::linear(0.1, 1.0, 0.0),
            1e-12,
        )
        .unwrap();
        let log = integrate(|r: f64| r * r, &RadialMeasure::log(0.1, 1.0, 0.0), 1e-12).unwrap();
        assert!((lin.value - log.value).abs() < 1e-12);
        let exact = (1.0f64 - 0.001) / 3.0;
        assert!((lin.value - exact).abs() < 1e-12);
    }

    #[test]
    fn smooth_reference_value() {
        let m = RadialMeasure::linear(0.0, std::f64::consts::PI, 0.0);
        let got = integrate(|r: f64| r.sin(), &m, 1e-12).unwrap();
        assert!((got.value - 2.0).abs() < 1e-11);
    }

    #[test]
    fn error_estimate_covers_true_error() {
        let m = RadialMeasure::linear(0.0, 1.0, 0.0);
        let got = integrate(|r: f64| r.powf(-0.5), &m, 1e-9).unwrap();
        assert!((got.value - 2.0).abs() <= got.error.max(2.0 * 1e-9));
    }

    #[test]
    fn divergent_integral_reports_budget_failure() {
        let m = RadialMeasure::linear(0.0, 1.0, 0.0);
        let err = integrate_with_budget(|r: f64| 1.0 / r, &m, 1e-10, 50_000);
        match err {
            Err(QuadratureError::Budget { value, evals, .. }) => {
                assert!(value > 0.0);
                assert!(evals <= 50_000);
            }
            other => panic!("expected budget failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = RadialMeasure::linear(1.0, 0.0, 0.0);
        assert!(matches!(
            integrate(|_| 1.0, &m, 1e-10),
            Err(QuadratureError::BadInterval { .. })
        ));
        let m = RadialMeasure::linear(0.0, 1.0, 0.0);
        assert!(matches!(
            integrate(|_| 1.0, &m, 1e-14),
            Err(QuadratureError::TolTooTight { .. })
        ));
        assert!(matches!(
            integrate(|_| f64::NAN, &m, 1e-10),
            Err(QuadratureError::NonFinite { .. })
        ));
    }

    #[test]
    fn zero_integrand_is_exact() {
        let m = RadialMeasure::linear(0.0, 1.0, 0.0);
        let got = integrate(|_| 0.0, &m, 1e-12).unwrap();
        assert_eq!(got.value, 0.0);
        assert_eq!(got.error, 0.0);
    }
}
