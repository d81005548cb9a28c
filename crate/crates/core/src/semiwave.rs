//! Semi-wave profiles and the front speed `β₀`.
//!
//! A semi-wave with speed `β` is the unique monotone solution of
//!
//! ```text
//! -d U'' + β U' = a U - δ U²,   U(0) = 0,  U(+∞) = a/δ,  U' > 0
//! ```
//!
//! which exists for every `β ∈ [0, 2√(a·d))`. The free-boundary front moves
//! asymptotically at the unique `β₀` satisfying the Stefan consistency
//! condition `μ·U'_β₀(0) = β₀`.
//!
//! In the `(U, U')` phase plane the profile is the heteroclinic orbit from
//! `(0, U'(0))` to the saddle `(a/δ, 0)`. Shooting forward from `U = 0` is
//! exponentially ill-conditioned, so the orbit is integrated *backward* from
//! a small displacement along the stable eigendirection of the saddle until
//! it crosses `U = 0`; backward integration is self-correcting (the manifold
//! attracts in reverse time) and the crossing slope is read off as `U'(0)`.

use thiserror::Error;

use crate::model::{ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum SemiWaveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("beta = {beta} outside admissible range [0, {max})")]
    BetaRange { beta: f64, max: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Coefficients of the semi-wave equation. In the free-boundary application
/// `a` plays the role of the birth rate and `delta` of the self-limitation.
#[derive(Debug, Clone, Copy)]
pub struct SemiWaveProblem {
    pub d: f64,
    pub a: f64,
    pub delta: f64,
    pub mu: f64,
}

impl SemiWaveProblem {
    fn validate(&self) -> Result<(), SemiWaveError> {
        for (name, v) in [
            ("d", self.d),
            ("a", self.a),
            ("delta", self.delta),
            ("mu", self.mu),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::invalid(name, format!("must be > 0, got {v}")).into());
            }
        }
        Ok(())
    }

    /// Carrying capacity `a/δ` — the far-field value of every profile.
    pub fn kappa(&self) -> f64 {
        self.a / self.delta
    }

    /// Admissible speeds are `[0, 2√(a·d))`; the endpoint is the classical
    /// KPP invasion speed.
    pub fn kpp_speed(&self) -> f64 {
        2.0 * (self.a * self.d).sqrt()
    }
}

/// Semi-wave profile for one admissible `β`.
#[derive(Debug, Clone)]
pub struct ProfileSolve {
    pub beta: f64,
    /// Boundary slope `U'(0)`.
    pub uprime0: f64,
    /// Uniform grid `x_j = j·Δ` up to `X_profile = 40·√(d/a)`.
    pub xs: Vec<f64>,
    pub us: Vec<f64>,
}

/// Solution of the Stefan consistency condition `μ U'(0) = β`.
#[derive(Debug, Clone)]
pub struct SpeedResult {
    pub beta0: f64,
    pub uprime0: f64,
    pub profile: ProfileSolve,
    /// Max finite-difference residual of the profile in the semi-wave ODE.
    pub residual: f64,
}

/// Integration step as a fraction of the intrinsic length √(d/a).
const STEP_FRACTION: f64 = 0.0025;
/// Profile window in units of √(d/a).
const PROFILE_LENGTHS: f64 = 40.0;
const MAX_STEPS: usize = 5_000_000;

/// Relative displacement from the saddle used to seed the stable manifold.
const MANIFOLD_EPS: f64 = 1e-8;

/// Phase-plane vector field integrated backward in x:
/// `dU/ds = -V`, `dV/ds = -(βV - aU + δU²)/d` with `s = -x`.
#[inline]
fn backward_rhs(p: &SemiWaveProblem, beta: f64, u: f64, v: f64) -> (f64, f64) {
    (-v, -(beta * v - p.a * u + p.delta * u * u) / p.d)
}

#[inline]
fn rk4_backward(p: &SemiWaveProblem, beta: f64, u: f64, v: f64, h: f64) -> (f64, f64) {
    let (k1u, k1v) = backward_rhs(p, beta, u, v);
    let (k2u, k2v) = backward_rhs(p, beta, u + 0.5 * h * k1u, v + 0.5 * h * k1v);
    let (k3u, k3v) = backward_rhs(p, beta, u + 0.5 * h * k2u, v + 0.5 * h * k2v);
    let (k4u, k4v) = backward_rhs(p, beta, u + h * k3u, v + h * k3v);
    (
        u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

enum OrbitEnd {
    /// Crossed `U = 0` after `steps` whole steps plus a fraction `sigma`;
    /// `v_cross` is the slope there.
    Crossed {
        steps: usize,
        sigma: f64,
        v_cross: f64,
    },
    /// Spiraled into the origin without crossing (β essentially at the KPP
    /// limit): the boundary slope is zero to machine precision.
    Collapsed,
}

struct Shot {
    end: OrbitEnd,
    /// Stored trajectory `(U, V)` at `s = k·Δ` (empty unless requested).
    traj: Vec<(f64, f64)>,
    /// Decay rate `λ_s < 0` of the saddle's stable eigendirection.
    lambda_s: f64,
}

fn shoot(p: &SemiWaveProblem, beta: f64, store_traj: bool) -> Result<Shot, SemiWaveError> {
    let kappa = p.kappa();
    let lambda_s = (beta - (beta * beta + 4.0 * p.a * p.d).sqrt()) / (2.0 * p.d);
    let eps = MANIFOLD_EPS * kappa;
    let dt = STEP_FRACTION * (p.d / p.a).sqrt();

    let mut u = kappa - eps;
    let mut v = -lambda_s * eps;
    let mut traj = Vec::new();
    if store_traj {
        traj.push((u, v));
    }
    // collapse detection scales: U ~ κ, V ~ κ·√(a/d)
    let v_scale = kappa * (p.a / p.d).sqrt();

    for step in 0..MAX_STEPS {
        let (un, vn) = rk4_backward(p, beta, u, v, dt);
        if un <= 0.0 {
            // refine the crossing fraction by bisection on partial steps
            let mut lo = 0.0f64;
            let mut hi = 1.0f64;
            let mut v_cross = vn;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let (um, vm) = rk4_backward(p, beta, u, v, mid * dt);
                if um <= 0.0 {
                    hi = mid;
                    v_cross = vm;
                } else {
                    lo = mid;
                }
                if (hi - lo).abs() < f64::EPSILON {
                    break;
                }
            }
            return Ok(Shot {
                end: OrbitEnd::Crossed {
                    steps: step,
                    sigma: 0.5 * (lo + hi),
                    v_cross,
                },
                traj,
                lambda_s,
            });
        }
        u = un;
        v = vn;
        if store_traj {
            traj.push((u, v));
        }
        if (u / kappa).abs() < 1e-280 && (v / v_scale).abs() < 1e-280 {
            return Ok(Shot {
                end: OrbitEnd::Collapsed,
                traj,
                lambda_s,
            });
        }
    }
    Err(SemiWaveError::Numerical(format!(
        "no U = 0 crossing within {MAX_STEPS} steps at beta = {beta} \
         (last state U = {u:.3e}, V = {v:.3e})"
    )))
}

fn check_beta(p: &SemiWaveProblem, beta: f64) -> Result<(), SemiWaveError> {
    let max = p.kpp_speed();
    if !(0.0..max).contains(&beta) {
        return Err(SemiWaveError::BetaRange { beta, max });
    }
    Ok(())
}

/// Computes the profile `U_β` and its boundary slope for one admissible `β`.
pub fn solve_profile(p: &SemiWaveProblem, beta: f64) -> Result<ProfileSolve, SemiWaveError> {
    p.validate()?;
    check_beta(p, beta)?;
    let shot = shoot(p, beta, true)?;
    let (steps, sigma, v_cross) = match shot.end {
        OrbitEnd::Crossed {
            steps,
            sigma,
            v_cross,
        } => (steps, sigma, v_cross),
        OrbitEnd::Collapsed => {
            return Err(SemiWaveError::Numerical(format!(
                "orbit collapsed into the origin before crossing U = 0; \
                 beta = {beta} is numerically at the KPP limit"
            )))
        }
    };

    let kappa = p.kappa();
    let dt = STEP_FRACTION * (p.d / p.a).sqrt();
    let n_profile = (PROFILE_LENGTHS / STEP_FRACTION).round() as usize; // 16000 cells
    let s_c = (steps as f64 + sigma) * dt;

    let mut xs = Vec::with_capacity(n_profile + 1);
    let mut us = Vec::with_capacity(n_profile + 1);
    xs.push(0.0);
    us.push(0.0);
    for j in 1..=n_profile {
        let x = j as f64 * dt;
        xs.push(x);
        if j <= steps {
            // partial RK4 step of σ·Δ from the stored node at s = (steps-j)·Δ
            // lands exactly on x_j; local error O(Δ⁵)
            let (u0, v0) = shot.traj[steps - j];
            let (u, _) = rk4_backward(p, beta, u0, v0, sigma * dt);
            us.push(u);
        } else {
            // beyond the manifold seed: linearized saddle tail
            us.push(kappa - MANIFOLD_EPS * kappa * (shot.lambda_s * (x - s_c)).exp());
        }
    }

    Ok(ProfileSolve {
        beta,
        uprime0: v_cross,
        xs,
        us,
    })
}

/// Boundary slope only (no profile assembly); used by the β₀ bisection.
/// Returns 0 when the orbit collapses into the origin (degenerate β).
fn uprime0_of(p: &SemiWaveProblem, beta: f64) -> Result<f64, SemiWaveError> {
    match shoot(p, beta, false)?.end {
        OrbitEnd::Crossed { v_cross, .. } => Ok(v_cross),
        OrbitEnd::Collapsed => Ok(0.0),
    }
}

/// Max finite-difference residual of a profile in `-dU'' + βU' - aU + δU²`.
pub fn profile_residual(p: &SemiWaveProblem, prof: &ProfileSolve) -> f64 {
    let n = prof.xs.len();
    let dx = prof.xs[1] - prof.xs[0];
    let mut worst = 0.0f64;
    for j in 1..n - 1 {
        let (um, u0, up) = (prof.us[j - 1], prof.us[j], prof.us[j + 1]);
        let upp = (up - 2.0 * u0 + um) / (dx * dx);
        let upr = (up - um) / (2.0 * dx);
        let r = -p.d * upp + prof.beta * upr - p.a * u0 + p.delta * u0 * u0;
        worst = worst.max(r.abs());
    }
    worst
}

/// Solves `g(β) = μ·U'_β(0) − β = 0` by bisection on `[0, 2√(a·d))`.
///
/// `g(0) > 0` (positive slope, nothing subtracted) and `g < 0` near the KPP
/// endpoint (the slope degenerates), so the root is bracketed from the
/// start; `g` is strictly decreasing, making it unique.
pub fn solve_beta0(p: &SemiWaveProblem) -> Result<SpeedResult, SemiWaveError> {
    p.validate()?;
    let beta_max = p.kpp_speed();
    let mut lo = 0.0f64;
    let mut hi = (1.0 - 1e-6) * beta_max;

    let g = |beta: f64| -> Result<f64, SemiWaveError> { Ok(p.mu * uprime0_of(p, beta)? - beta) };
    let g_lo = g(lo)?;
    let g_hi = g(hi)?;
    if g_lo <= 0.0 || g_hi >= 0.0 {
        return Err(SemiWaveError::Numerical(format!(
            "β₀ not bracketed: g(0) = {g_lo}, g({hi}) = {g_hi}"
        )));
    }
    while hi - lo > 1e-8 * beta_max {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta0 = 0.5 * (lo + hi);
    let profile = solve_profile(p, beta0)?;
    let residual = profile_residual(p, &profile);
    Ok(SpeedResult {
        beta0,
        uprime0: profile.uprime0,
        profile,
        residual,
    })
}

/// Bounds for the asymptotic front speed of the two-species system with
/// constant coefficients in the fitness-benefit regime:
/// `β₀(μ, κ1−κ2, 1, d1) ≤ lim h(t)/t ≤ β₀(μ, b1, δ1, d1)`.
///
/// The lower problem's reaction is `u((κ1−κ2) − u)`, i.e. unit
/// self-limitation.
pub fn speed_bracket(params: &ModelParams) -> Result<(f64, f64), SemiWaveError> {
    let (b1, k1, k2) = match (params.b1.as_constant(), params.kappa1(), params.kappa2()) {
        (Some(b1), Some(k1), Some(k2)) => (b1, k1, k2),
        _ => {
            return Err(SemiWaveError::Model(ModelError::Domain(
                "speed bracket requires constant birth rates".to_string(),
            )))
        }
    };
    if k1 <= k2 {
        return Err(SemiWaveError::Model(ModelError::Domain(format!(
            "fitness-cost regime (κ1 = {k1} ≤ κ2 = {k2}): no spreading speed bracket"
        ))));
    }
    let lower = solve_beta0(&SemiWaveProblem {
        d: params.d1,
        a: k1 - k2,
        delta: 1.0,
        mu: params.mu,
    })?;
    let upper = solve_beta0(&SemiWaveProblem {
        d: params.d1,
        a: b1,
        delta: params.delta1,
        mu: params.mu,
    })?;
    Ok((lower.beta0, upper.beta0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BirthRateField;

    const P: SemiWaveProblem = SemiWaveProblem {
        d: 1.0,
        a: 1.0,
        delta: 1.0,
        mu: 1.0,
    };

    #[test]
    fn zero_speed_slope_matches_energy_integral() {
        // At β = 0, multiply -dU'' = aU - δU² by U' and integrate:
        // U'(0)² = κ²·a/(3d) × (2·(1/2 − 1/3)·3) ... = a·κ²/(3d)
        let prof = solve_profile(&P, 0.0).unwrap();
        let want = (P.a * P.kappa() * P.kappa() / (3.0 * P.d)).sqrt();
        assert!(
            (prof.uprime0 - want).abs() < 1e-7 * want,
            "got {}, want {want}",
            prof.uprime0
        );
    }

    #[test]
    fn profile_shape_monotone_and_saturating() {
        let prof = solve_profile(&P, 0.7).unwrap();
        assert_eq!(prof.us[0], 0.0);
        let kappa = P.kappa();
        // strictly increasing until the tail saturates at f64 resolution
        let mut prev = -1.0;
        for &u in &prof.us {
            if u < kappa * (1.0 - 1e-12) {
                assert!(u > prev, "profile must increase strictly, {u} after {prev}");
            }
            assert!(u <= kappa * (1.0 + 1e-12));
            prev = u;
        }
        // far field
        let last = *prof.us.last().unwrap();
        assert!((last - kappa).abs() <= 1e-6 * kappa);
        // residual in the ODE
        let res = profile_residual(&P, &prof);
        assert!(res < 1e-6 * P.a * P.a / P.delta, "residual {res}");
    }

    #[test]
    fn uprime0_decays_toward_kpp_limit() {
        let mut prev = f64::INFINITY;
        for &frac in &[0.2, 0.5, 0.8, 0.95, 0.995] {
            let beta = frac * P.kpp_speed();
            let prof = solve_profile(&P, beta).unwrap();
            assert!(prof.uprime0 > 0.0);
            assert!(prof.uprime0 < prev, "U'(0) must decay as β → KPP limit");
            prev = prof.uprime0;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn beta_range_enforced() {
        assert!(matches!(
            solve_profile(&P, 2.0),
            Err(SemiWaveError::BetaRange { .. })
        ));
        assert!(matches!(
            solve_profile(&P, -0.1),
            Err(SemiWaveError::BetaRange { .. })
        ));
        let bad = SemiWaveProblem { a: -1.0, ..P };
        assert!(solve_profile(&bad, 0.1).is_err());
    }

    #[test]
    fn beta0_consistency_and_bracket() {
        let r = solve_beta0(&P).unwrap();
        assert!(r.beta0 > 0.0 && r.beta0 < P.kpp_speed());
        // Stefan consistency: μ·U'(0) = β₀ up to bisection tolerance
        assert!(
            (P.mu * r.uprime0 - r.beta0).abs() < 1e-6 * r.beta0,
            "μU'(0) = {}, β₀ = {}",
            P.mu * r.uprime0,
            r.beta0
        );
        assert!(r.residual < 1e-6 * P.a * P.a / P.delta);
    }

    #[test]
    fn beta0_monotone_in_mu() {
        let mut prev = 0.0;
        for &mu in &[0.25, 1.0, 4.0, 16.0, 64.0] {
            let r = solve_beta0(&SemiWaveProblem { mu, ..P }).unwrap();
            assert!(r.beta0 > prev, "β₀ must increase with μ");
            prev = r.beta0;
        }
        assert!(prev < P.kpp_speed());
    }

    #[test]
    fn scaling_invariance_in_delta_mu() {
        // U ↦ U/2 turns (a, δ, μ) into (a, 2δ, 2μ) with the same β₀
        let base = solve_beta0(&SemiWaveProblem {
            d: 1.3,
            a: 0.8,
            delta: 1.0,
            mu: 2.0,
        })
        .unwrap();
        let scaled = solve_beta0(&SemiWaveProblem {
            d: 1.3,
            a: 0.8,
            delta: 2.0,
            mu: 4.0,
        })
        .unwrap();
        assert!(
            (base.beta0 - scaled.beta0).abs() < 1e-7 * base.beta0,
            "{} vs {}",
            base.beta0,
            scaled.beta0
        );
    }

    #[test]
    fn g_is_strictly_decreasing() {
        let mut prev = f64::INFINITY;
        for &frac in &[0.05, 0.2, 0.4, 0.6, 0.8, 0.95] {
            let beta = frac * P.kpp_speed();
            let g = P.mu * solve_profile(&P, beta).unwrap().uprime0 - beta;
            assert!(g < prev, "g(β) must decrease");
            prev = g;
        }
    }

    #[test]
    fn bracket_ordering_and_collapse() {
        let params = ModelParams {
            d1: 1.0,
            d2: 1.0,
            delta1: 1.0,
            delta2: 1.0,
            mu: 1.0,
            h0: 1.0,
            b1: BirthRateField::constant(2.0).unwrap(),
            b2: BirthRateField::constant(1.0).unwrap(),
        };
        let (lo, hi) = speed_bracket(&params).unwrap();
        assert!(lo > 0.0 && lo <= hi);

        // κ2 → 0 with δ1 = 1: identical semi-wave problems, bracket collapses
        let degenerate = ModelParams {
            b1: BirthRateField::constant(1.0).unwrap(),
            b2: BirthRateField::constant(0.0).unwrap(),
            ..params.clone()
        };
        let (lo2, hi2) = speed_bracket(&degenerate).unwrap();
        assert!((lo2 - hi2).abs() < 1e-9 * hi2);

        // fitness-cost regime rejected
        let cost = ModelParams {
            b1: BirthRateField::constant(1.0).unwrap(),
            b2: BirthRateField::constant(2.0).unwrap(),
            ..params
        };
        assert!(speed_bracket(&cost).is_err());
    }
}
