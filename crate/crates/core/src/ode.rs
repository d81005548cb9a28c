//! Well-mixed (space-free) compartment models the PDE system descends from.
//!
//! Two levels of detail:
//!
//! - the aggregated 2-species system
//!   `u' = u[b1 − δ1(u+v)]`, `v' = v[b2·v/(u+v) − δ2(u+v)]`,
//! - the 6-compartment release model tracking released infected females and
//!   males `(rf, rm)` plus wild infected/uninfected reproductive females and
//!   males `(If, Im, Uf, Um)`, with complete cytoplasmic incompatibility: the
//!   uninfected birth terms carry the factor `Um/(rm+Im+Um)` (share of
//!   matings involving an uninfected male that are actually viable).
//!
//! In the equal-determination case (`δ = 1/2`, `If = Im`, `Uf = Um`,
//! `rf = rm = 0`) the 6-compartment model collapses onto the 2-species system
//! with `b1 = bI/2`, `b2 = bU/2`; tests pin that reduction.
//!
//! Classical fixed-step RK4 throughout — reproducibility over adaptivity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state left the nonnegative cone at t = {t}: {what} = {value}")]
    NegativeState {
        t: f64,
        what: &'static str,
        value: f64,
    },
}

/// Relative clipping window for tiny negative undershoots.
const CLIP_REL: f64 = 1e-12;

/// Division guard for the CI ratio terms; mirrors the PDE convention.
pub(crate) fn ci_ratio(num: f64, den: f64, eps: f64) -> f64 {
    if den > eps {
        num / den
    } else if num > 0.0 {
        1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// 2-species system

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UvParams {
    pub b1: f64,
    pub b2: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl UvParams {
    fn validate(&self) -> Result<(), OdeError> {
        for (name, v) in [
            ("b1", self.b1),
            ("b2", self.b2),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::invalid(name, format!("must be ≥ 0, got {v}")).into());
            }
        }
        Ok(())
    }

    pub fn kappa1(&self) -> f64 {
        self.b1 / self.delta1
    }

    pub fn kappa2(&self) -> f64 {
        self.b2 / self.delta2
    }
}

fn uv_rhs(p: &UvParams, u: f64, v: f64, eps: f64) -> (f64, f64) {
    let total = u + v;
    let du = u * (p.b1 - p.delta1 * total);
    let dv = v * (p.b2 * ci_ratio(v, total, eps) - p.delta2 * total);
    (du, dv)
}

/// Fixed-step RK4 integration of the 2-species system; returns samples
/// `(t, u, v)` at every step including `t = 0`.
pub fn integrate_uv(
    p: &UvParams,
    u0: f64,
    v0: f64,
    horizon: f64,
    dt: f64,
) -> Result<Vec<(f64, f64, f64)>, OdeError> {
    p.validate()?;
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(ModelError::invalid("dt/horizon", "must be > 0").into());
    }
    if u0 < 0.0 || v0 < 0.0 {
        return Err(ModelError::invalid("u0/v0", "must be ≥ 0").into());
    }
    let eps = 1e-12 * (p.kappa1().max(p.kappa2()).max(1.0));
    let scale = (u0 + v0).max(p.kappa1()).max(p.kappa2());
    let steps = (horizon / dt).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let (mut u, mut v) = (u0, v0);
    out.push((0.0, u, v));
    for k in 0..steps {
        let t = k as f64 * dt;
        let h = dt.min(horizon - t);
        let (k1u, k1v) = uv_rhs(p, u, v, eps);
        let (k2u, k2v) = uv_rhs(p, u + 0.5 * h * k1u, v + 0.5 * h * k1v, eps);
        let (k3u, k3v) = uv_rhs(p, u + 0.5 * h * k2u, v + 0.5 * h * k2v, eps);
        let (k4u, k4v) = uv_rhs(p, u + h * k3u, v + h * k3v, eps);
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        u = clip_negative(u, scale, t + h, "u")?;
        v = clip_negative(v, scale, t + h, "v")?;
        out.push((t + h, u, v));
    }
    Ok(out)
}

fn clip_negative(x: f64, scale: f64, t: f64, what: &'static str) -> Result<f64, OdeError> {
    if x >= 0.0 {
        Ok(x)
    } else if -x <= CLIP_REL * scale {
        Ok(0.0)
    } else {
        Err(OdeError::NegativeState { t, what, value: x })
    }
}

// ---------------------------------------------------------------------------
// 6-compartment release model

/// Which release compartment feeds the infected-male birth term.
///
/// The source model couples `Im' = (1−δ)·bI·[If + rm] − …`, pairing a *male*
/// release count with a female birth bracket — most likely a slip for `rf`,
/// but kept verbatim as the default; `Rf` switches to the symmetric reading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImReleaseSource {
    #[default]
    Rm,
    Rf,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompartmentParams {
    /// Natural birth rate of infected mosquitoes.
    pub b_i: f64,
    /// Natural birth rate of uninfected mosquitoes.
    pub b_u: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Proportion of mosquitoes born female, in `[0, 1]`.
    pub delta_sex: f64,
    #[serde(default)]
    pub im_release_source: ImReleaseSource,
}

impl CompartmentParams {
    fn validate(&self) -> Result<(), OdeError> {
        for (name, v) in [
            ("b_i", self.b_i),
            ("b_u", self.b_u),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::invalid(name, format!("must be ≥ 0, got {v}")).into());
            }
        }
        if !(0.0..=1.0).contains(&self.delta_sex) {
            return Err(ModelError::invalid(
                "delta_sex",
                format!("must lie in [0, 1], got {}", self.delta_sex),
            )
            .into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompartmentState {
    pub rf: f64,
    pub rm: f64,
    pub i_f: f64,
    pub i_m: f64,
    pub u_f: f64,
    pub u_m: f64,
}

impl CompartmentState {
    pub fn total(&self) -> f64 {
        self.rf + self.rm + self.i_f + self.i_m + self.u_f + self.u_m
    }

    /// Aggregates `(u, v) = (If + Im, Uf + Um)`.
    pub fn uv(&self) -> (f64, f64) {
        (self.i_f + self.i_m, self.u_f + self.u_m)
    }

    fn validate(&self) -> Result<(), OdeError> {
        for (name, v) in [
            ("rf", self.rf),
            ("rm", self.rm),
            ("i_f", self.i_f),
            ("i_m", self.i_m),
            ("u_f", self.u_f),
            ("u_m", self.u_m),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::invalid(name, format!("must be ≥ 0, got {v}")).into());
            }
        }
        Ok(())
    }

    fn map2(&self, other: &CompartmentState, f: impl Fn(f64, f64) -> f64) -> CompartmentState {
        CompartmentState {
            rf: f(self.rf, other.rf),
            rm: f(self.rm, other.rm),
            i_f: f(self.i_f, other.i_f),
            i_m: f(self.i_m, other.i_m),
            u_f: f(self.u_f, other.u_f),
            u_m: f(self.u_m, other.u_m),
        }
    }
}

fn compartment_rhs(p: &CompartmentParams, s: &CompartmentState, eps: f64) -> CompartmentState {
    let t = s.total();
    let ds = p.delta_sex;
    // viable-mating share for uninfected females: only uninfected males sire
    // viable offspring; no males at all means no offspring (ratio → 0).
    let viable = if s.u_m > 0.0 {
        ci_ratio(s.u_m, s.rm + s.i_m + s.u_m, eps)
    } else {
        0.0
    };
    let im_release = match p.im_release_source {
        ImReleaseSource::Rm => s.rm,
        ImReleaseSource::Rf => s.rf,
    };
    CompartmentState {
        rf: -p.delta1 * s.rf * t,
        rm: -p.delta1 * s.rm * t,
        i_f: ds * p.b_i * (s.i_f + s.rf) - p.delta1 * s.i_f * t,
        i_m: (1.0 - ds) * p.b_i * (s.i_f + im_release) - p.delta1 * s.i_m * t,
        u_f: ds * p.b_u * s.u_f * viable - p.delta2 * s.u_f * t,
        u_m: (1.0 - ds) * p.b_u * s.u_f * viable - p.delta2 * s.u_m * t,
    }
}

/// Fixed-step RK4 integration of the 6-compartment model; returns samples
/// `(t, state)` at every step including `t = 0`.
pub fn integrate_compartments(
    p: &CompartmentParams,
    state0: &CompartmentState,
    horizon: f64,
    dt: f64,
) -> Result<Vec<(f64, CompartmentState)>, OdeError> {
    p.validate()?;
    state0.validate()?;
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(ModelError::invalid("dt/horizon", "must be > 0").into());
    }
    let eps = 1e-12 * state0.total().max(1.0);
    let scale = state0
        .total()
        .max(p.b_i / p.delta1.max(f64::MIN_POSITIVE))
        .max(p.b_u / p.delta2.max(f64::MIN_POSITIVE));
    let steps = (horizon / dt).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = *state0;
    out.push((0.0, s));
    for k in 0..steps {
        let t = k as f64 * dt;
        let h = dt.min(horizon - t);
        let k1 = compartment_rhs(p, &s, eps);
        let k2 = compartment_rhs(p, &s.map2(&k1, |y, d| y + 0.5 * h * d), eps);
        let k3 = compartment_rhs(p, &s.map2(&k2, |y, d| y + 0.5 * h * d), eps);
        let k4 = compartment_rhs(p, &s.map2(&k3, |y, d| y + h * d), eps);
        let zero = CompartmentState {
            rf: 0.0,
            rm: 0.0,
            i_f: 0.0,
            i_m: 0.0,
            u_f: 0.0,
            u_m: 0.0,
        };
        let incr = zero
            .map2(&k1, |a, b| a + b)
            .map2(&k2, |a, b| a + 2.0 * b)
            .map2(&k3, |a, b| a + 2.0 * b)
            .map2(&k4, |a, b| a + b);
        s = s.map2(&incr, |y, d| y + h / 6.0 * d);
        let tn = t + h;
        s = CompartmentState {
            rf: clip_negative(s.rf, scale, tn, "rf")?,
            rm: clip_negative(s.rm, scale, tn, "rm")?,
            i_f: clip_negative(s.i_f, scale, tn, "i_f")?,
            i_m: clip_negative(s.i_m, scale, tn, "i_m")?,
            u_f: clip_negative(s.u_f, scale, tn, "u_f")?,
            u_m: clip_negative(s.u_m, scale, tn, "u_m")?,
        };
        out.push((tn, s));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P_UV: UvParams = UvParams {
        b1: 2.0,
        b2: 1.0,
        delta1: 1.0,
        delta2: 1.0,
    };

    #[test]
    fn converges_to_infected_equilibrium_in_benefit_regime() {
        // κ1 = 2 > κ2 = 1 and u0 > 0 ⇒ (u, v) → (κ1, 0)
        let traj = integrate_uv(&P_UV, 0.3, 1.0, 200.0, 1e-2).unwrap();
        let &(_, u, v) = traj.last().unwrap();
        assert!((u - 2.0).abs() < 1e-6, "u → κ1, got {u}");
        assert!(v < 1e-6, "v → 0, got {v}");
    }

    #[test]
    fn u_axis_invariance_and_logistic_v() {
        let traj = integrate_uv(&P_UV, 0.0, 0.2, 60.0, 1e-2).unwrap();
        for &(_, u, _) in &traj {
            assert_eq!(u, 0.0);
        }
        let &(_, _, v) = traj.last().unwrap();
        assert!((v - 1.0).abs() < 1e-9, "v → κ2 logistically, got {v}");
    }

    #[test]
    fn infected_equilibrium_is_exact_fixed_point() {
        let (du, dv) = uv_rhs(&P_UV, P_UV.kappa1(), 0.0, 1e-12);
        assert_eq!(du, 0.0);
        assert_eq!(dv, 0.0);
    }

    #[test]
    fn rk4_is_fourth_order() {
        // terminal error vs a fine reference trajectory
        let reference = integrate_uv(&P_UV, 0.3, 1.0, 2.0, 1e-5).unwrap();
        let &(_, ur, vr) = reference.last().unwrap();
        let err = |dt: f64| {
            let t = integrate_uv(&P_UV, 0.3, 1.0, 2.0, dt).unwrap();
            let &(_, u, v) = t.last().unwrap();
            ((u - ur).powi(2) + (v - vr).powi(2)).sqrt()
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 14.0, "expected ~16× per halving, got {ratio}");
    }

    #[test]
    fn releases_decay_to_zero() {
        let p = CompartmentParams {
            b_i: 2.0,
            b_u: 1.6,
            delta1: 1.0,
            delta2: 1.0,
            delta_sex: 0.5,
            im_release_source: ImReleaseSource::default(),
        };
        let s0 = CompartmentState {
            rf: 0.5,
            rm: 0.5,
            i_f: 0.1,
            i_m: 0.1,
            u_f: 0.4,
            u_m: 0.4,
        };
        let traj = integrate_compartments(&p, &s0, 80.0, 1e-2).unwrap();
        let (_, last) = traj.last().unwrap();
        assert!(last.rf < 1e-8 && last.rm < 1e-8);
        for (_, s) in &traj {
            for v in [s.rf, s.rm, s.i_f, s.i_m, s.u_f, s.u_m] {
                assert!(v >= 0.0);
            }
            assert_eq!(s.total(), s.rf + s.rm + s.i_f + s.i_m + s.u_f + s.u_m);
        }
    }

    #[test]
    fn all_zero_state_stays_zero() {
        let p = CompartmentParams {
            b_i: 2.0,
            b_u: 1.0,
            delta1: 1.0,
            delta2: 1.0,
            delta_sex: 0.5,
            im_release_source: ImReleaseSource::default(),
        };
        let zero = CompartmentState {
            rf: 0.0,
            rm: 0.0,
            i_f: 0.0,
            i_m: 0.0,
            u_f: 0.0,
            u_m: 0.0,
        };
        let traj = integrate_compartments(&p, &zero, 5.0, 1e-2).unwrap();
        for (_, s) in traj {
            assert_eq!(s.total(), 0.0);
        }
    }

    #[test]
    fn equal_determination_reduces_to_uv() {
        // δ = 1/2, If = Im, Uf = Um, rf = rm = 0 ⇒ (u, v) follows the
        // 2-species system with b1 = bI/2, b2 = bU/2
        let p6 = CompartmentParams {
            b_i: 3.0,
            b_u: 2.2,
            delta1: 0.7,
            delta2: 1.1,
            delta_sex: 0.5,
            im_release_source: ImReleaseSource::default(),
        };
        let s0 = CompartmentState {
            rf: 0.0,
            rm: 0.0,
            i_f: 0.15,
            i_m: 0.15,
            u_f: 0.6,
            u_m: 0.6,
        };
        let p2 = UvParams {
            b1: p6.b_i / 2.0,
            b2: p6.b_u / 2.0,
            delta1: p6.delta1,
            delta2: p6.delta2,
        };
        let traj6 = integrate_compartments(&p6, &s0, 50.0, 1e-3).unwrap();
        let traj2 = integrate_uv(&p2, 0.3, 1.2, 50.0, 1e-3).unwrap();
        assert_eq!(traj6.len(), traj2.len());
        let scale = p2.kappa1().max(p2.kappa2());
        for ((_, s), &(_, u2, v2)) in traj6.iter().zip(&traj2).step_by(500) {
            let (u6, v6) = s.uv();
            assert!((u6 - u2).abs() < 1e-6 * scale, "u: {u6} vs {u2}");
            assert!((v6 - v2).abs() < 1e-6 * scale, "v: {v6} vs {v2}");
        }
    }

    #[test]
    fn im_release_source_switch_changes_only_im_coupling() {
        let base = CompartmentParams {
            b_i: 2.0,
            b_u: 1.0,
            delta1: 1.0,
            delta2: 1.0,
            delta_sex: 0.5,
            im_release_source: ImReleaseSource::Rm,
        };
        let alt = CompartmentParams {
            im_release_source: ImReleaseSource::Rf,
            ..base
        };
        // asymmetric releases expose the difference…
        let s0 = CompartmentState {
            rf: 0.8,
            rm: 0.1,
            i_f: 0.1,
            i_m: 0.1,
            u_f: 0.3,
            u_m: 0.3,
        };
        let a = integrate_compartments(&base, &s0, 5.0, 1e-3).unwrap();
        let b = integrate_compartments(&alt, &s0, 5.0, 1e-3).unwrap();
        let (_, sa) = a.last().unwrap();
        let (_, sb) = b.last().unwrap();
        assert!((sa.i_m - sb.i_m).abs() > 1e-3);
        // …while symmetric releases make the readings coincide
        let sym = CompartmentState {
            rf: 0.4,
            rm: 0.4,
            ..s0
        };
        let a = integrate_compartments(&base, &sym, 5.0, 1e-3).unwrap();
        let b = integrate_compartments(&alt, &sym, 5.0, 1e-3).unwrap();
        let (_, sa) = a.last().unwrap();
        let (_, sb) = b.last().unwrap();
        assert!((sa.i_m - sb.i_m).abs() < 1e-12);
    }

    #[test]
    fn no_males_means_no_uninfected_births() {
        let p = CompartmentParams {
            b_i: 0.0,
            b_u: 5.0,
            delta1: 1.0,
            delta2: 0.0, // isolate the birth term
            delta_sex: 0.5,
            im_release_source: ImReleaseSource::default(),
        };
        let s = CompartmentState {
            rf: 0.0,
            rm: 0.0,
            i_f: 0.0,
            i_m: 0.0,
            u_f: 1.0,
            u_m: 0.0,
        };
        let rhs = compartment_rhs(&p, &s, 1e-12);
        assert_eq!(rhs.u_f, 0.0);
        assert_eq!(rhs.u_m, 0.0);
    }
}
