//! Closed-form constants of the weighted Hardy and improved Rellich
//! inequalities, the coefficient identities behind the Rellich proof, and
//! cross-checks against the classical inequalities they generalize.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConstantsError {
    #[error("p = {p} must exceed 1")]
    BadP { p: f64 },
    #[error("p = k + s = {p} makes H vanish; the Hardy constant degenerates")]
    HardyDegenerate { p: f64 },
    #[error("k = 2p = {k} makes Q vanish; the Rellich choice α* is singular")]
    RellichDegenerate { k: f64 },
    #[error("Rellich mode requires k > 2p (k = {k}, p = {p})")]
    NeedsKAboveTwoP { k: f64, p: f64 },
}

pub type Result<T> = std::result::Result<T, ConstantsError>;

/// Every knob of the weighted improved Hardy inequality.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InequalityParams {
    /// Lebesgue exponent, `p > 1`.
    pub p: f64,
    /// Weight power `s` in `d^s |∇u|^p`.
    pub s: f64,
    /// Codimension parameter; any real `≥ 1` is accepted by the formulas.
    pub k: f64,
    /// Cascade depth.
    pub m: usize,
    /// Scale in `X_i(d/D)`; must dominate `sup d`.
    pub d_scale: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl InequalityParams {
    pub fn new(p: f64, s: f64, k: f64, m: usize, d_scale: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(ConstantsError::BadP { p });
        }
        Ok(Self {
            p,
            s,
            k,
            m,
            d_scale,
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
        })
    }

    pub fn with_weights(mut self, alpha: f64, beta: f64, gamma: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self.gamma = gamma;
        self
    }

    /// `H = (k + s - p)/p`.
    pub fn hardy_h(&self) -> f64 {
        (self.k + self.s - self.p) / self.p
    }
}

/// The four right-hand-side coefficients of the weighted improved Hardy
/// inequality: weights of `1`, `eta_m`, `eta_m²`, `zeta_m` against
/// `d^{s-p}|u|^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardyCoefficients {
    pub h_abs_p: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// `|H|^p`, `|H|^p α`, `|H|^p β + |H|^{p-2}H α/2`,
/// `(p-1)/(2p) |H|^{p-2} + |H|^{p-2}H α/2 + |H|^p γ`.
pub fn hardy_constants(params: &InequalityParams) -> Result<HardyCoefficients> {
    if !(params.p > 1.0) {
        return Err(ConstantsError::BadP { p: params.p });
    }
    let h = params.hardy_h();
    if h == 0.0 {
        return Err(ConstantsError::HardyDegenerate { p: params.p });
    }
    let p = params.p;
    let h_abs = h.abs();
    let h_abs_p = h_abs.powf(p);
    let h_pm2_h = h_abs.powf(p - 2.0) * h;
    Ok(HardyCoefficients {
        h_abs_p,
        c1: h_abs_p * params.alpha,
        c2: h_abs_p * params.beta + 0.5 * h_pm2_h * params.alpha,
        c3: (p - 1.0) / (2.0 * p) * h_abs.powf(p - 2.0)
            + 0.5 * h_pm2_h * params.alpha
            + h_abs_p * params.gamma,
    })
}

/// The constants of the improved Rellich inequality and its sharpness proof.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstantSet {
    pub p: f64,
    pub k: f64,
    /// `Q = (p-1) k (k-2p) / p²`; `Q^p` is the sharp plain constant.
    pub q: f64,
    pub q_abs_p: f64,
    /// `R = (2k - pk - 2p)/p`, the coefficient of `g` in the expansion of `|Δv|`.
    pub r: f64,
    /// `P = -(1/p)|Q|^{p-2}Q + ((p-1)/(2p))|Q|^{p-2}R²`.
    pub p_const: f64,
    /// `G = ((p-1)/(2p³))|Q|^{p-2}{k²(p-1)² + (k-2p)²}`, the improvement
    /// coefficient; `P + |Q|^{p-2}Q = G`.
    pub g: f64,
    /// Proof choice `λ = Q^{p-1}`.
    pub lambda: f64,
    /// Proof choice `α* = (p-1)(pk - 2k + 2p)/(p² Q)`.
    pub alpha_star: f64,
}

/// Constants for the Rellich family at `(p, k)`. Signed values are allowed
/// for `k < 2p` (the boundary case `k = 1, p = 2` uses them), but `k = 2p`
/// is rejected because `α*` is singular there.
pub fn rellich_constants(p: f64, k: f64) -> Result<ConstantSet> {
    if !(p > 1.0) {
        return Err(ConstantsError::BadP { p });
    }
    let q = (p - 1.0) * k * (k - 2.0 * p) / (p * p);
    if q == 0.0 {
        return Err(ConstantsError::RellichDegenerate { k });
    }
    let q_abs = q.abs();
    let r = (2.0 * k - p * k - 2.0 * p) / p;
    let q_pm2 = q_abs.powf(p - 2.0);
    let p_const = -(1.0 / p) * q_pm2 * q + (p - 1.0) / (2.0 * p) * q_pm2 * r * r;
    let g = (p - 1.0) / (2.0 * p.powi(3))
        * q_pm2
        * (k * k * (p - 1.0) * (p - 1.0) + (k - 2.0 * p) * (k - 2.0 * p));
    let w = p * k - 2.0 * k + 2.0 * p;
    Ok(ConstantSet {
        p,
        k,
        q,
        q_abs_p: q_abs.powf(p),
        r,
        p_const,
        g,
        lambda: q.powf(p - 1.0),
        alpha_star: (p - 1.0) * w / (p * p * q),
    })
}

/// Residuals of the coefficient identities in the Rellich proof, evaluated
/// numerically from the three contributing estimates rather than from the
/// simplified formulas, so agreement is an actual check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityReport {
    pub p: f64,
    pub k: f64,
    /// `r_0 - Q^p`
    pub r0_residual: f64,
    /// `r_1` (must vanish)
    pub r1_residual: f64,
    /// `r_2` (must vanish irrespective of β)
    pub r2_residual: f64,
    /// `r_2' - ((p-1)/p) Q^{p-2}(Q + (pk-2k+2p)²/(2p²))`
    pub r2p_residual: f64,
    /// `P + |Q|^{p-2}Q - G`
    pub pg_residual: f64,
    /// residuals are relative, scaled by `|Q|^p`
    pub max_residual: f64,
}

impl IdentityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual <= tol
    }
}

/// Assembles `r_0, r_1, r_2, r_2'` by summing the contributions of the three
/// estimates in the proof (the Hardy step, the `-Δφ` step and the `|φ|^{p/(p-1)}`
/// step) under the choices `λ = Q^{p-1}`, `α = α*`, then checks that they
/// collapse as the proof claims. The checks are β-independent; a nonzero β
/// exercises that.
pub fn coefficient_identities(p: f64, k: f64, beta: f64) -> Result<IdentityReport> {
    if !(p > 1.0) {
        return Err(ConstantsError::BadP { p });
    }
    if k <= 2.0 * p {
        return Err(ConstantsError::NeedsKAboveTwoP { k, p });
    }
    let set = rellich_constants(p, k)?;
    let lambda = set.lambda;
    let alpha = set.alpha_star;
    let q = set.q;
    // λ^{p/(p-1)} = Q^p for λ = Q^{p-1}, but keep the power explicit
    let lam_pow = lambda.powf(p / (p - 1.0));

    // T1: Hardy step with weight d^{-2p+2}(1 + α eta + β eta²), q = p
    let km2p = k - 2.0 * p;
    let t1_scale = 4.0 * (p - 1.0) * lambda / p;
    let t1_const = t1_scale * km2p * km2p / 4.0;
    let t1_eta = t1_scale * km2p * km2p * alpha / 4.0;
    let t1_eta2 = t1_scale * (km2p * alpha / 4.0 + km2p * km2p * beta / 4.0);
    let t1_zeta = t1_scale * (0.25 + km2p * alpha / 4.0);

    // T2: the -∫Δφ|u|^p estimate under dΔd ≥ k-1
    let t2_const = lambda * 2.0 * (p - 1.0) * km2p;
    let t2_eta = lambda * 2.0 * (p - 1.0) * km2p * alpha;
    let t2_eta2 = lambda * (2.0 * (p - 1.0) * km2p * beta + 0.5 * (-k + 4.0 * p - 2.0) * alpha);
    let t2_zeta = lambda * 0.5 * (-k + 4.0 * p - 2.0) * alpha;

    // T3: -(p-1)|φ|^{p/(p-1)} via the Taylor expansion of the weight power
    let t3_const = -(p - 1.0) * lam_pow;
    let t3_eta = -p * alpha * lam_pow;
    let t3_eta2 = -(p - 1.0)
        * (p * beta / (p - 1.0) + p * alpha * alpha / (2.0 * (p - 1.0) * (p - 1.0)))
        * lam_pow;

    let r0 = t1_const + t2_const + t3_const;
    let r1 = t1_eta + t2_eta + t3_eta;
    let r2 = t1_eta2 + t2_eta2 + t3_eta2;
    let r2p = t1_zeta + t2_zeta;

    let w = p * k - 2.0 * k + 2.0 * p;
    let q_pm2 = q.abs().powf(p - 2.0);
    let r2p_target = (p - 1.0) / p * q_pm2 * (q + w * w / (2.0 * p * p));
    let scale = set.q_abs_p.max(1e-300);

    let r0_residual = (r0 - set.q_abs_p.copysign(q)) / scale;
    let r1_residual = r1 / scale;
    let r2_residual = r2 / scale;
    let r2p_residual = (r2p - r2p_target) / scale;
    let pg_residual = (set.p_const + q_pm2 * q - set.g) / scale;
    let max_residual = [
        r0_residual,
        r1_residual,
        r2_residual,
        r2p_residual,
        pg_residual,
    ]
    .iter()
    .fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(IdentityReport {
        p,
        k,
        r0_residual,
        r1_residual,
        r2_residual,
        r2p_residual,
        pg_residual,
        max_residual,
    })
}

/// One classical cross-check.
#[derive(Debug, Clone, Serialize)]
pub struct ClassicalCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_error: f64,
}

/// Verifies that the general constants reproduce the one-dimensional Rellich
/// constant, the multi-dimensional constants at `k = N`, the boundary-distance
/// constants, and the improvement coefficient of the point case.
pub fn cross_check_classical() -> Vec<ClassicalCheck> {
    let mut checks = Vec::new();
    let mut push = |name: String, lhs: f64, rhs: f64| {
        let rel_error = (lhs - rhs).abs() / rhs.abs().max(1e-300);
        checks.push(ClassicalCheck {
            name,
            lhs,
            rhs,
            rel_error,
        });
    };

    // (p-1)^p (2p-1)^p / p^{2p} = |Q(p, 1)|^p, the half-line constant
    for &p in &[1.5, 2.0, 3.0] {
        let set = rellich_constants(p, 1.0).unwrap();
        let classic = ((p - 1.0) * (2.0 * p - 1.0) / (p * p)).powf(p);
        push(format!("halfline_rellich_p{p}"), set.q_abs_p, classic);
    }
    // N²(N-4)²/16 = Q(2, N)², the biharmonic point constant
    for n in 5..=12 {
        let set = rellich_constants(2.0, n as f64).unwrap();
        let classic = (n * n * (n - 4) * (n - 4)) as f64 / 16.0;
        push(format!("point_rellich_n{n}"), set.q_abs_p, classic);
    }
    // ((p-1) N |N-2p| / p²)^p = |Q(p, N)|^p
    for &(p, n) in &[(1.5, 5.0), (2.0, 7.0), (3.0, 9.0)] {
        let set = rellich_constants(p, n).unwrap();
        let classic = ((p - 1.0) * n * (n - 2.0 * p).abs() / (p * p)).powf(p);
        push(format!("davies_hinz_p{p}_n{n}"), set.q_abs_p, classic);
    }
    // boundary distance, convex domain: Q(2,1)² = 9/16 and G(2,1) = 5/8
    let set = rellich_constants(2.0, 1.0).unwrap();
    push("owen_boundary".into(), set.q_abs_p, 9.0 / 16.0);
    push("boundary_improvement".into(), set.g, 5.0 / 8.0);
    // point improvement coefficient: G(2,N) = 1 + N(N-4)/8 for N ≥ 5
    for n in 5..=9 {
        let set = rellich_constants(2.0, n as f64).unwrap();
        let classic = 1.0 + (n * (n - 4)) as f64 / 8.0;
        push(format!("point_improvement_n{n}"), set.g, classic);
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, s: f64, k: f64) -> InequalityParams {
        InequalityParams::new(p, s, k, 1, 1.0).unwrap()
    }

    #[test]
    fn hardy_boundary_case_quarters() {
        // k=1, s=0, p=2: both the main and the zeta coefficient are 1/4
        let c = hardy_constants(&params(2.0, 0.0, 1.0)).unwrap();
        assert_eq!(c.h_abs_p, 0.25);
        assert_eq!(c.c1, 0.0);
        assert_eq!(c.c2, 0.0);
        assert_eq!(c.c3, 0.25);
    }

    #[test]
    fn hardy_point_case() {
        let c = hardy_constants(&params(2.0, 0.0, 5.0)).unwrap();
        assert!((c.h_abs_p - 2.25).abs() < 1e-15); // H = 3/2
    }

    #[test]
    fn hardy_matches_special_case_at_q_two() {
        // p=2, s=-2q+2 with q=2 reproduces the special-case coefficients
        // (k-2q)²/4 and 1/4 + (k-2q)²γ/4
        let k = 5.0;
        let q = 2.0;
        let c = hardy_constants(&params(2.0, -2.0 * q + 2.0, k).with_weights(0.0, 0.0, 1.0))
            .unwrap();
        let km2q = k - 2.0 * q;
        assert!((c.h_abs_p - km2q * km2q / 4.0).abs() < 1e-15);
        assert!((c.c3 - (0.25 + km2q * km2q / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn hardy_rejects_degenerate() {
        assert!(matches!(
            hardy_constants(&params(2.0, 1.0, 1.0)),
            Err(ConstantsError::HardyDegenerate { .. })
        ));
        assert!(matches!(
            InequalityParams::new(1.0, 0.0, 5.0, 1, 1.0),
            Err(ConstantsError::BadP { .. })
        ));
    }

    #[test]
    fn rellich_point_five() {
        let set = rellich_constants(2.0, 5.0).unwrap();
        assert!((set.q - 1.25).abs() < 1e-15);
        assert!((set.r + 2.0).abs() < 1e-15);
        assert!((set.p_const - 0.375).abs() < 1e-15);
        assert!((set.g - 1.625).abs() < 1e-15);
        assert!((set.lambda - 1.25).abs() < 1e-15);
        assert!((set.alpha_star - 0.8).abs() < 1e-15);
        // P + |Q|^{p-2} Q = G
        assert!((set.p_const + set.q - set.g).abs() < 1e-15);
    }

    #[test]
    fn rellich_boundary_and_point_classics() {
        let set = rellich_constants(2.0, 1.0).unwrap();
        assert!((set.q + 0.75).abs() < 1e-15);
        assert!((set.q_abs_p - 9.0 / 16.0).abs() < 1e-15);
        assert!((set.g - 5.0 / 8.0).abs() < 1e-15);
        for n in 5..=9 {
            let set = rellich_constants(2.0, n as f64).unwrap();
            let expect = (n * n * (n - 4) * (n - 4)) as f64 / 16.0;
            assert!((set.q_abs_p - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn rellich_rejects_k_equals_two_p() {
        assert!(matches!(
            rellich_constants(2.0, 4.0),
            Err(ConstantsError::RellichDegenerate { .. })
        ));
    }

    #[test]
    fn q_changes_sign_at_zero_and_two_p() {
        for &p in &[1.5, 2.0, 3.0] {
            let below = rellich_constants(p, 2.0 * p - 0.1).unwrap().q;
            let above = rellich_constants(p, 2.0 * p + 0.1).unwrap().q;
            assert!(below < 0.0 && above > 0.0);
            let neg = rellich_constants(p, -0.1).unwrap().q;
            let pos = rellich_constants(p, 0.1).unwrap().q;
            assert!(neg > 0.0 && pos < 0.0);
        }
    }

    #[test]
    fn identities_at_reference_points() {
        let rep = coefficient_identities(2.0, 5.0, 0.7).unwrap();
        assert!(rep.max_residual <= 1e-12, "{rep:?}");
        // r_2' equals G here: 13/8
        let set = rellich_constants(2.0, 5.0).unwrap();
        let r2p = (set.p - 1.0) / set.p
            * set.q.abs().powf(set.p - 2.0)
            * (set.q + (set.p * set.k - 2.0 * set.k + 2.0 * set.p).powi(2) / (2.0 * set.p * set.p));
        assert!((r2p - 1.625).abs() < 1e-15);
        assert!((r2p - set.g).abs() < 1e-15);

        let rep = coefficient_identities(3.0, 7.0, -1.3).unwrap();
        assert!(rep.max_residual <= 1e-10, "{rep:?}");
    }

    #[test]
    fn identities_random_sweep() {
        // 50 seeded (p, k) pairs with k > 2p + 0.1; β varies too
        let mut state = 0x243f6a8885a308d3u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let p = 1.0 + 1e-3 + next() * 4.0;
            let k = 2.0 * p + 0.1 + next() * 15.0;
            let beta = -2.0 + 4.0 * next();
            let rep = coefficient_identities(p, k, beta).unwrap();
            worst = worst.max(rep.max_residual);
        }
        assert!(worst <= 1e-9, "worst residual {worst}");
    }

    #[test]
    fn identities_require_k_above_two_p() {
        assert!(matches!(
            coefficient_identities(2.0, 3.0, 0.0),
            Err(ConstantsError::NeedsKAboveTwoP { .. })
        ));
    }

    #[test]
    fn classical_cross_checks_tight() {
        for check in cross_check_classical() {
            assert!(
                check.rel_error <= 1e-12,
                "{}: {} vs {}",
                check.name,
                check.lhs,
                check.rhs
            );
        }
    }
}
