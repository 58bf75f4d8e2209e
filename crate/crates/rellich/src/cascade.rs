//! Iterated-logarithm cascade `X_1, X_2, ...` and its aggregate sums.
//!
//! `X_1(t) = (1 - log t)^{-1}` on `(0, 1]` and `X_i = X_1 ∘ X_{i-1}`.
//! The aggregates are `eta_m = Σ X_1⋯X_i`, `zeta_m = Σ X_1²⋯X_i²` and the
//! derivative aggregate `theta_m` with `zeta_m'(t) = theta_m(t)/t`.
//! All derivatives here are exact term-wise expansions of the product rule
//! `d/dt X_i^β = (β/t) X_1⋯X_{i-1} X_i^{1+β}`; nothing is differenced.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CascadeError {
    #[error("scaled distance t = {t} outside (0, 1]")]
    OutOfRange { t: f64 },
    #[error("log coordinate u = {u} must be finite and nonnegative")]
    BadLogCoordinate { u: f64 },
    #[error("cascade depth must be at least 1")]
    ZeroDepth,
    #[error("chain index must be at least 1")]
    ZeroIndex,
    #[error("power exponent beta must be nonzero")]
    ZeroExponent,
    #[error("epsilon schedule has {got} entries, depth {depth} needs {want}")]
    ScheduleLength { got: usize, depth: usize, want: usize },
    #[error("epsilon value {value} at index {index} outside [0, 1]")]
    ScheduleRange { index: usize, value: f64 },
    #[error(
        "series tail certified only to {achieved:.3e} (requested {requested:.3e}) \
         within depth budget {budget}"
    )]
    TailNotCertified {
        achieved: f64,
        requested: f64,
        budget: usize,
    },
}

pub type Result<T> = std::result::Result<T, CascadeError>;

/// Converts `t ∈ (0, 1]` to the internal log coordinate `u = log(1/t)`.
fn neg_log_of(t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(CascadeError::OutOfRange { t });
    }
    Ok(-t.ln())
}

fn check_neg_log(u: f64) -> Result<f64> {
    if !u.is_finite() || u < 0.0 {
        return Err(CascadeError::BadLogCoordinate { u });
    }
    Ok(u)
}

/// `X_1..X_m` at `t`, by exact recursion.
pub fn x_chain(t: f64, m: usize) -> Result<Vec<f64>> {
    x_chain_neg_log(neg_log_of(t)?, m)
}

/// `X_1..X_m` at `t = e^{-u}`. Evaluating from `u` avoids the cancellation
/// in `1 - log t` and admits points as deep as `u ~ 1e4`.
pub fn x_chain_neg_log(u: f64, m: usize) -> Result<Vec<f64>> {
    check_neg_log(u)?;
    if m == 0 {
        return Err(CascadeError::ZeroDepth);
    }
    let mut xs = Vec::with_capacity(m);
    // y_1 = 1 - log t = 1 + u, y_{i+1} = 1 + log y_i, X_i = 1/y_i
    let mut y = 1.0 + u;
    xs.push(1.0 / y);
    for _ in 1..m {
        y = 1.0 + y.ln();
        xs.push(1.0 / y);
    }
    Ok(xs)
}

/// The cascade and its aggregates at one scaled point.
#[derive(Debug, Clone)]
pub struct CascadeValue {
    pub t: f64,
    pub depth: usize,
    pub x: Vec<f64>,
    pub eta: f64,
    pub zeta: f64,
    pub theta: f64,
}

impl CascadeValue {
    /// `eta_m'(t) = (zeta_m + eta_m²) / (2t)`, the exact rate behind identity
    /// `t eta_m' = ½ zeta_m + ½ eta_m²`.
    pub fn eta_prime(&self) -> f64 {
        (self.zeta + self.eta * self.eta) / (2.0 * self.t)
    }

    /// `zeta_m'(t) = theta_m(t)/t`.
    pub fn zeta_prime(&self) -> f64 {
        self.theta / self.t
    }

    /// `eta_m''(t) = [theta_m + (eta_m - 1)(zeta_m + eta_m²)] / (2t²)`.
    pub fn eta_second(&self) -> f64 {
        let s = self.zeta + self.eta * self.eta;
        (self.theta + (self.eta - 1.0) * s) / (2.0 * self.t * self.t)
    }
}

/// Evaluates `(x, eta_m, zeta_m, theta_m)` at `t`.
pub fn cascade_value(t: f64, m: usize) -> Result<CascadeValue> {
    let u = neg_log_of(t)?;
    let xs = x_chain_neg_log(u, m)?;
    let mut prod = 1.0;
    let mut prod_sq = 1.0;
    let mut eta = 0.0;
    let mut zeta = 0.0;
    let mut theta = 0.0;
    for &x in &xs {
        prod *= x;
        prod_sq *= x * x;
        eta += prod;
        zeta += prod_sq;
        // theta_m = 2 Σ_i (X_1²⋯X_i²) eta_i, term-wise product rule on zeta_m
        theta += 2.0 * prod_sq * eta;
    }
    Ok(CascadeValue {
        t,
        depth: m,
        x: xs,
        eta,
        zeta,
        theta,
    })
}

/// `(eta_m, zeta_m, theta_m)` at `t`.
pub fn eta_zeta_theta(t: f64, m: usize) -> Result<(f64, f64, f64)> {
    let v = cascade_value(t, m)?;
    Ok((v.eta, v.zeta, v.theta))
}

/// Exact derivative `d/dt X_i^β = (β/t) X_1⋯X_{i-1} X_i^{1+β}` for `β ≠ 0`.
pub fn chain_power_derivative(t: f64, i: usize, beta: f64) -> Result<f64> {
    neg_log_of(t)?;
    if i == 0 {
        return Err(CascadeError::ZeroIndex);
    }
    if beta == 0.0 || !beta.is_finite() {
        return Err(CascadeError::ZeroExponent);
    }
    let xs = x_chain(t, i)?;
    let mut value = beta / t;
    for &x in &xs[..i - 1] {
        value *= x;
    }
    value *= xs[i - 1].powf(1.0 + beta);
    Ok(value)
}

/// The perturbation exponents `ε_0, ε_1, ..., ε_m` of the near-extremizer
/// families. Sweeps drive them to zero in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSchedule {
    eps: Vec<f64>,
}

impl EpsilonSchedule {
    /// Validates `ε_i ∈ [0, 1]`; the entry count fixes the depth as `len - 1`.
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() {
            return Err(CascadeError::ZeroDepth);
        }
        for (index, &value) in eps.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(CascadeError::ScheduleRange { index, value });
            }
        }
        Ok(Self { eps })
    }

    /// All-zero schedule of depth `m`.
    pub fn zeros(m: usize) -> Self {
        Self {
            eps: vec![0.0; m + 1],
        }
    }

    pub fn depth(&self) -> usize {
        self.eps.len() - 1
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn eps0(&self) -> f64 {
        self.eps[0]
    }

    fn check_depth(&self, m: usize) -> Result<()> {
        if self.depth() != m {
            return Err(CascadeError::ScheduleLength {
                got: self.eps.len(),
                depth: m,
                want: m + 1,
            });
        }
        Ok(())
    }
}

/// `g = ε_0 + Σ_i (-1+ε_i) X_1⋯X_i` and its exact derivative aggregate
/// `h = Σ_{1≤i≤j≤m} (-1+ε_j) X_1²⋯X_i² X_{i+1}⋯X_j`, so that `g'(t) = h(t)/t`.
/// With every ε zero, `g = -eta_m`.
pub fn g_h_eval(t: f64, m: usize, schedule: &EpsilonSchedule) -> Result<(f64, f64)> {
    schedule.check_depth(m)?;
    g_h_eval_neg_log(neg_log_of(t)?, m, schedule)
}

/// `g_h_eval` in the log coordinate `u = log(1/t)`.
pub fn g_h_eval_neg_log(u: f64, m: usize, schedule: &EpsilonSchedule) -> Result<(f64, f64)> {
    schedule.check_depth(m)?;
    if m == 0 {
        return Ok((schedule.eps0(), 0.0));
    }
    let xs = x_chain_neg_log(u, m)?;
    let eps = schedule.eps();
    let mut g = eps[0];
    let mut h = 0.0;
    let mut prod = 1.0;
    let mut eta = 0.0;
    for (j, &x) in xs.iter().enumerate() {
        prod *= x;
        eta += prod;
        let weight = -1.0 + eps[j + 1];
        g += weight * prod;
        // Σ_{i≤j} X_1²⋯X_i² X_{i+1}⋯X_j collapses to P_j · eta_j
        h += weight * prod * eta;
    }
    Ok((g, h))
}

/// A truncated series value with a rigorously certified remainder bound.
#[derive(Debug, Clone, Copy)]
pub struct SeriesValue {
    pub value: f64,
    pub tail_bound: f64,
    pub depth_used: usize,
}

const INF_DEPTH_BUDGET: usize = 50_000_000;
// depth at which the 1/m² decay law projects whether the budget can certify
const INF_PROJECT_AT: usize = 10_000;

/// `eta_∞(s) ≤ 2/log(1/s)`: from `e_{i+1} ≥ 2e_i/(2+e_i)` the partial products
/// telescope to `X_1⋯X_i ≤ a(a+1)/((a+i)(a+i+1))` with `a = 2/log(1/s)`, and
/// the tail sum telescopes to `a`.
fn eta_inf_upper(w: f64) -> f64 {
    2.0 / w
}

/// Lower counterpart: `e_j ≤ q/(b+j-1)` with `q = 2 + w`, `b = q/w` gives
/// `X_1⋯X_i ≥ e^{-q/b} (b/(b+i-1))^q` and summation by integral comparison.
fn eta_inf_lower(w: f64) -> f64 {
    let q = 2.0 + w;
    let b = q / w;
    (-q / b).exp() * b / (q - 1.0)
}

/// `zeta_∞(s) ≤ a²/(a+2)` with `a = 2/log(1/s)`, by the same product bound.
fn zeta_inf_upper(w: f64) -> f64 {
    let a = 2.0 / w;
    a * a / (a + 2.0)
}

struct InfSums {
    eta: SeriesValue,
    zeta: SeriesValue,
    theta: SeriesValue,
}

/// Shared driver: sums the three series together until each requested bound
/// certifies, using the self-similarity `tail_m = (X_1⋯X_m)^k · series(X_m)`.
fn sum_infinite(u: f64, tol_eta: Option<f64>, tol_zeta: f64) -> Result<InfSums> {
    check_neg_log(u)?;
    if u == 0.0 {
        // every series diverges at t = 1
        return Err(CascadeError::OutOfRange { t: 1.0 });
    }
    let a_t = 2.0 / u; // eta_∞(t) ≤ a_t, used by the theta tail
    let mut y = 1.0 + u;
    let mut prod = 1.0 / y; // X_1⋯X_m
    let mut prod_sq = prod * prod;
    // compensated accumulators: the eta sum can take ~1e7 terms
    let (mut eta, mut eta_c) = (prod, 0.0);
    let (mut zeta, mut zeta_c) = (prod_sq, 0.0);
    let (mut theta, mut theta_c) = (2.0 * prod_sq * eta, 0.0);
    let mut depth = 1usize;
    loop {
        // w = log y_m = log(1/X_m) controls every tail bound
        let w = y.ln();
        let eta_hi = prod * eta_inf_upper(w);
        let eta_lo = prod * eta_inf_lower(w);
        let zeta_hi = prod_sq * zeta_inf_upper(w);
        let theta_hi = 2.0 * a_t * zeta_hi;
        let eta_err = 0.5 * (eta_hi - eta_lo);
        let zeta_err = 0.5 * zeta_hi;
        let theta_err = 0.5 * theta_hi;
        let eta_ok = match tol_eta {
            Some(tol) => eta_err <= tol * eta.abs().max(1.0),
            None => true,
        };
        if let Some(tol) = tol_eta {
            // eta_err shrinks like 1/m²; bail out early on hopeless requests
            if !eta_ok && depth == INF_PROJECT_AT {
                let target = tol * eta.abs().max(1.0);
                let projected = depth as f64 * (eta_err / target).sqrt();
                if projected > INF_DEPTH_BUDGET as f64 {
                    return Err(CascadeError::TailNotCertified {
                        achieved: eta_err,
                        requested: tol,
                        budget: INF_DEPTH_BUDGET,
                    });
                }
            }
        }
        let zeta_ok = zeta_err <= tol_zeta * zeta.abs().max(1.0)
            && theta_err <= tol_zeta * theta.abs().max(1.0);
        if (eta_ok && zeta_ok) || depth >= INF_DEPTH_BUDGET {
            if !(eta_ok && zeta_ok) {
                let achieved = if eta_ok { zeta_err } else { eta_err };
                let requested = tol_eta.unwrap_or(tol_zeta);
                return Err(CascadeError::TailNotCertified {
                    achieved,
                    requested,
                    budget: INF_DEPTH_BUDGET,
                });
            }
            return Ok(InfSums {
                eta: SeriesValue {
                    value: eta + eta_c + 0.5 * (eta_hi + eta_lo),
                    tail_bound: eta_err,
                    depth_used: depth,
                },
                zeta: SeriesValue {
                    value: zeta + zeta_c + 0.5 * zeta_hi,
                    tail_bound: zeta_err,
                    depth_used: depth,
                },
                theta: SeriesValue {
                    value: theta + theta_c + 0.5 * theta_hi,
                    tail_bound: theta_err,
                    depth_used: depth,
                },
            });
        }
        y = 1.0 + w;
        let x = 1.0 / y;
        prod *= x;
        prod_sq *= x * x;
        kahan_add(&mut eta, &mut eta_c, prod);
        kahan_add(&mut zeta, &mut zeta_c, prod_sq);
        kahan_add(&mut theta, &mut theta_c, 2.0 * prod_sq * (eta + eta_c));
        depth += 1;
    }
}

fn kahan_add(sum: &mut f64, comp: &mut f64, term: f64) {
    let y = term - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

/// `eta_∞(t)` with a certified two-sided tail enclosure. The eta tail decays
/// only like `1/m`, so tolerances much below 1e-12 exhaust the depth budget.
pub fn eta_inf(t: f64, tol: f64) -> Result<SeriesValue> {
    Ok(sum_infinite(neg_log_of(t)?, Some(tol), 1.0)?.eta)
}

/// `zeta_∞(t)` certified to `tol` (relative to `max(1, value)`).
pub fn zeta_inf(t: f64, tol: f64) -> Result<SeriesValue> {
    Ok(sum_infinite(neg_log_of(t)?, None, tol)?.zeta)
}

/// `theta_∞(t)` certified to `tol`, alongside the zeta driver.
pub fn theta_inf(t: f64, tol: f64) -> Result<SeriesValue> {
    Ok(sum_infinite(neg_log_of(t)?, None, tol)?.theta)
}
