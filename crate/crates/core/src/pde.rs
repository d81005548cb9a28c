//! Front-fixing finite-difference solver for the free-boundary system and
//! the spreading/vanishing classifier.
//!
//! The moving domain `0 < x < h(t)` is immobilized by the Landau transform
//! `ξ = x/h(t)`, `w(t, ξ) = u(t, ξ·h(t))`:
//!
//! ```text
//! w_t = (d1/h²) w_ξξ + (ξ h'/h) w_ξ + w [ b1(ξh) - δ1 (w + v(ξh)) ]
//! h'  = -(μ/h) w_ξ(1)
//! ```
//!
//! so the Dirichlet pin `w(1) = 0` is exact and the Stefan flux is a boundary
//! derivative on a fixed grid. `v` lives on a fixed grid over `[0, Xmax]`
//! (zero flux at both ends); the two fields exchange values by linear
//! interpolation, with `u := 0` beyond the front.
//!
//! Time stepping is IMEX: diffusion implicit (tridiagonal Thomas solve,
//! unconditionally stable M-matrix), upwind advection and reaction explicit
//! (monotone under the dt policy). The front advances by a Heun
//! predictor–corrector on the flux. The scheme preserves the a-priori bounds
//! `0 ≤ u ≤ M1`, `0 < v ≤ M2`, `h' ≥ 0` step by step, and the solver treats
//! any violation beyond a relative `ε_bound = 1e-6` as a numerical failure
//! (or as a cue to halve dt under the adaptive policy).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    critical_h0_star, derive_bounds_on, DerivedBounds, InitialData, ModelError, ModelParams,
};
use crate::ode::ci_ratio;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("numerical failure at step {step} (t = {t}): {reason}")]
    Numerical { step: u64, t: f64, reason: String },
    #[error("truncation exceeded; increase Xmax (front h = {h} at t = {t}, Xmax = {xmax})")]
    Truncation { h: f64, t: f64, xmax: f64 },
    #[error("stationary profile did not converge after {iters} iterations (residual {residual})")]
    NonConvergence { iters: u64, residual: f64 },
}

/// Relative slack on the a-priori sup bounds.
const EPS_BOUND: f64 = 1e-6;
/// Negative undershoots up to this (relative) size are clipped to zero;
/// anything larger is instability, not roundoff.
const CLIP_REL: f64 = 1e-12;
const MAX_DT_HALVINGS: u32 = 20;

// ---------------------------------------------------------------------------
// Grid and state

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtPolicy {
    /// Caller-chosen constant dt; stability is the caller's bargain, but
    /// invariant violations still fail loudly.
    Fixed { dt: f64 },
    /// dt from the explicit-term stability bound, scaled by `safety`.
    Adaptive { safety: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    /// Cells on the immobilized u-domain ξ ∈ [0, 1]; nodes `0..=n_u`.
    pub n_u: usize,
    /// Cells on the fixed v-domain [0, Xmax]; nodes `0..=n_v`.
    pub n_v: usize,
    pub xmax: f64,
    pub dt_policy: DtPolicy,
}

impl Grid {
    /// Default discretization for given parameters: 256×1024 cells,
    /// `Xmax = 4·h0`, adaptive dt with safety 0.4.
    pub fn default_for(params: &ModelParams) -> Grid {
        Grid {
            n_u: 256,
            n_v: 1024,
            xmax: 4.0 * params.h0,
            dt_policy: DtPolicy::Adaptive { safety: 0.4 },
        }
    }

    pub fn validate(&self, params: &ModelParams) -> Result<(), ModelError> {
        if self.n_u < 16 {
            return Err(ModelError::invalid("grid.n_u", "need at least 16 cells"));
        }
        if self.n_v < 16 {
            return Err(ModelError::invalid("grid.n_v", "need at least 16 cells"));
        }
        if !(self.xmax > params.h0) {
            return Err(ModelError::invalid(
                "grid.xmax",
                format!("must exceed h0 = {}, got {}", params.h0, self.xmax),
            ));
        }
        match self.dt_policy {
            DtPolicy::Fixed { dt } if !(dt > 0.0) => {
                Err(ModelError::invalid("grid.dt_policy.dt", "must be > 0"))
            }
            DtPolicy::Adaptive { safety } if !(safety > 0.0 && safety < 1.0) => Err(
                ModelError::invalid("grid.dt_policy.safety", "must lie in (0, 1)"),
            ),
            _ => Ok(()),
        }
    }
}

/// Discrete solution at one instant.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub h: f64,
    /// Front speed used over the last step (0 before the first step).
    pub dhdt: f64,
    /// u-values at ξ_i = i/n_u; `w[n_u] = 0` always.
    pub w: Vec<f64>,
    /// v-values at x_j = j·Xmax/n_v.
    pub v: Vec<f64>,
}

/// One row of the output series.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub t: f64,
    pub h: f64,
    pub dhdt: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    /// ∫ u dx over the moving domain.
    pub mass_u: f64,
    /// sup of u over the *initial* habitat [0, h0]; the classifier's
    /// persistence reading (not part of the CSV schema).
    pub sup_u_core: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Spreading,
    Vanishing,
    Undecided,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::Spreading => "Spreading",
            Classification::Vanishing => "Vanishing",
            Classification::Undecided => "Undecided",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub final_sup_u: f64,
    pub final_sup_v: f64,
    /// Measured Λ = max h'(t) over the run.
    pub lambda: f64,
    /// Largest max(w)/M1 and max(v)/M2 seen at any accepted step.
    pub sup_w_ratio: f64,
    pub sup_v_ratio: f64,
    /// True when the adaptive policy ever had to halve dt.
    pub dt_refined: bool,
    pub steps: u64,
}

#[derive(Debug)]
pub struct RunResult {
    pub series: Vec<Sample>,
    pub classification: Classification,
    pub diagnostics: Diagnostics,
    pub final_state: SimState,
    /// States at sample times (only when requested via RunOptions).
    pub snapshots: Vec<SimState>,
}

/// Source terms `(t, x) ↦ f` added to the reaction stage — the hook for
/// manufactured-solution verification.
pub struct Forcing {
    pub fu: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub fv: Box<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

pub struct RunOptions {
    pub horizon: f64,
    /// Output cadence; defaults to horizon/1000.
    pub sample_dt: Option<f64>,
    /// Optional early stop once the front reaches this position.
    pub stop_h: Option<f64>,
    /// Enforce the a-priori bound checks (disable only for forced runs,
    /// whose exact solutions need not respect the unforced bounds).
    pub check_bounds: bool,
    /// Keep v frozen at its initial values: comparison-principle oracle runs
    /// reduce the system to the scalar u-equation this way.
    pub freeze_v: bool,
    /// Keep full states at sample times.
    pub keep_snapshots: bool,
    pub forcing: Option<Forcing>,
}

impl RunOptions {
    pub fn new(horizon: f64) -> Self {
        RunOptions {
            horizon,
            sample_dt: None,
            stop_h: None,
            check_bounds: true,
            freeze_v: false,
            keep_snapshots: false,
            forcing: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Core stepping machinery

/// Thomas solve of the implicit-diffusion system
/// `-r·y[i-1] + (1+2r)·y[i] - r·y[i+1] = rhs[i]` with a Neumann ghost on the
/// left (`y[-1] = y[1]`), and on the right either a Dirichlet pin `y[n] = 0`
/// (u-field) or a Neumann ghost (v-field). Strictly diagonally dominant.
fn diffuse_implicit(rhs: &[f64], r: f64, right_dirichlet: bool, out: &mut Vec<f64>) {
    let n = rhs.len();
    let diag = 1.0 + 2.0 * r;
    let mut c_prime = vec![0.0; n];
    out.clear();
    out.resize(n, 0.0);
    // row 0: Neumann ghost y[-1] = y[1] doubles the upper coupling
    c_prime[0] = -2.0 * r / diag;
    out[0] = rhs[0] / diag;
    for i in 1..n {
        // last row: Dirichlet keeps the plain -r lower coefficient (the
        // pinned node is eliminated); Neumann doubles it (ghost y[n] = y[n-2])
        let lower = if i == n - 1 && !right_dirichlet {
            -2.0 * r
        } else {
            -r
        };
        let denom = diag - lower * c_prime[i - 1];
        c_prime[i] = -r / denom;
        out[i] = (rhs[i] - lower * out[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        let next = out[i + 1];
        out[i] -= c_prime[i] * next;
    }
}

struct Stepper<'a> {
    params: &'a ModelParams,
    grid: &'a Grid,
    m1: f64,
    m2: f64,
    eps_div: f64,
    /// b2 at the fixed v-nodes (precomputed once).
    b2x: Vec<f64>,
    freeze_v: bool,
    check_bounds: bool,
    scratch_u: Vec<f64>,
    scratch_v: Vec<f64>,
    sol_u: Vec<f64>,
    sol_v: Vec<f64>,
}

/// Why a step was rejected; adaptive runs convert these into dt halvings.
struct StepReject {
    reason: String,
}

impl<'a> Stepper<'a> {
    fn new(params: &'a ModelParams, grid: &'a Grid, m1: f64, m2: f64) -> Self {
        let dx = grid.xmax / grid.n_v as f64;
        let b2x = (0..=grid.n_v)
            .map(|j| params.b2.eval(j as f64 * dx))
            .collect();
        Stepper {
            params,
            grid,
            m1,
            m2,
            eps_div: 1e-12 * m2,
            b2x,
            freeze_v: false,
            check_bounds: true,
            scratch_u: Vec::new(),
            scratch_v: Vec::new(),
            sol_u: Vec::new(),
            sol_v: Vec::new(),
        }
    }

    /// One-sided second-order boundary derivative `w_ξ(1)` with `w[n] = 0`,
    /// turned into the (clamped, nonnegative) front speed.
    fn front_speed(&self, w: &[f64], h: f64) -> f64 {
        let n = self.grid.n_u;
        let dxi = 1.0 / n as f64;
        let wxi = (w[n - 2] - 4.0 * w[n - 1]) / (2.0 * dxi); // 3·w[n] = 0
        (-(self.params.mu / h) * wxi).max(0.0)
    }

    /// Linear interpolation of v at physical position x.
    fn v_at(&self, v: &[f64], x: f64) -> f64 {
        let dx = self.grid.xmax / self.grid.n_v as f64;
        let pos = (x / dx).max(0.0);
        let j = (pos as usize).min(self.grid.n_v - 1);
        let theta = pos - j as f64;
        v[j] * (1.0 - theta) + v[j + 1] * theta
    }

    /// Linear interpolation of u (= w ∘ ξ) at physical position x; zero
    /// beyond the front.
    fn u_at(&self, w: &[f64], h: f64, x: f64) -> f64 {
        if x >= h {
            return 0.0;
        }
        let n = self.grid.n_u;
        let pos = (x / h) * n as f64;
        let i = (pos as usize).min(n - 1);
        let theta = pos - i as f64;
        w[i] * (1.0 - theta) + w[i + 1] * theta
    }

    fn step(
        &mut self,
        state: &SimState,
        dt: f64,
        forcing: Option<&Forcing>,
    ) -> Result<SimState, StepReject> {
        let n = self.grid.n_u;
        let m = self.grid.n_v;
        let dxi = 1.0 / n as f64;
        let dx = self.grid.xmax / m as f64;
        let (h, t) = (state.h, state.t);
        let p = self.params;

        // predictor front speed from the current profile
        let s_n = self.front_speed(&state.w, h);
        let h_pred = h + dt * s_n;

        // advection CFL on the explicit upwind term (coefficient ξ·s/h ≤ s/h)
        let cfl = s_n * dt / (h * dxi);
        if cfl > 1.0 {
            return Err(StepReject {
                reason: format!("advection CFL violated (ν = {cfl:.3})"),
            });
        }

        // ---- u-field: explicit advection + reaction, implicit diffusion
        self.scratch_u.clear();
        for i in 0..n {
            let xi = i as f64 * dxi;
            let x = xi * h;
            let w_i = state.w[i];
            // forward-difference upwinding: the advection coefficient is ≥ 0
            let adv = xi * s_n / h * (state.w[i + 1] - w_i) / dxi;
            let v_here = self.v_at(&state.v, x);
            let mut react = w_i * (p.b1.eval(x) - p.delta1 * (w_i + v_here));
            if let Some(f) = forcing {
                react += (f.fu)(t, x);
            }
            self.scratch_u.push(w_i + dt * (adv + react));
        }
        let r_u = dt * p.d1 / (h * h * dxi * dxi);
        // split borrows: move the buffers out during the solve
        let mut sol_u = std::mem::take(&mut self.sol_u);
        diffuse_implicit(&self.scratch_u, r_u, true, &mut sol_u);
        sol_u.push(0.0); // Dirichlet pin w(1) = 0
        self.sol_u = sol_u;

        // ---- v-field: explicit reaction, implicit diffusion
        if self.freeze_v {
            self.sol_v.clear();
            self.sol_v.extend_from_slice(&state.v);
        } else {
            self.scratch_v.clear();
            for j in 0..=m {
                let x = j as f64 * dx;
                let v_j = state.v[j];
                let u_here = self.u_at(&state.w, h, x);
                let total = u_here + v_j;
                let ratio = ci_ratio(v_j, total, self.eps_div);
                let mut react = v_j * (self.b2x[j] * ratio - p.delta2 * total);
                if let Some(f) = forcing {
                    react += (f.fv)(t, x);
                }
                self.scratch_v.push(v_j + dt * react);
            }
            let r_v = dt * p.d2 / (dx * dx);
            let mut sol_v = std::mem::take(&mut self.sol_v);
            diffuse_implicit(&self.scratch_v, r_v, false, &mut sol_v);
            self.sol_v = sol_v;
        }

        // ---- corrector: Heun average of the boundary flux
        let s_star = self.front_speed(&self.sol_u, h_pred.max(h));
        let dhdt = 0.5 * (s_n + s_star);
        let h_new = h + dt * dhdt;

        // ---- invariant enforcement
        if self.check_bounds {
            let w_cap = self.m1 * (1.0 + EPS_BOUND);
            let v_cap = self.m2 * (1.0 + EPS_BOUND);
            for w_i in self.sol_u.iter_mut() {
                if *w_i < 0.0 {
                    if -*w_i <= CLIP_REL * self.m1 {
                        *w_i = 0.0;
                    } else {
                        return Err(StepReject {
                            reason: format!("u undershoot {w_i:.3e} beyond clipping tolerance"),
                        });
                    }
                }
                if *w_i > w_cap || !w_i.is_finite() {
                    return Err(StepReject {
                        reason: format!("u = {w_i:.6e} violates sup bound M1 = {:.6e}", self.m1),
                    });
                }
            }
            for v_j in self.sol_v.iter_mut() {
                if *v_j < 0.0 {
                    if -*v_j <= CLIP_REL * self.m2 {
                        *v_j = 0.0;
                    } else {
                        return Err(StepReject {
                            reason: format!("v undershoot {v_j:.3e} beyond clipping tolerance"),
                        });
                    }
                }
                if *v_j > v_cap || !v_j.is_finite() {
                    return Err(StepReject {
                        reason: format!("v = {v_j:.6e} violates sup bound M2 = {:.6e}", self.m2),
                    });
                }
            }
            if !h_new.is_finite() {
                return Err(StepReject {
                    reason: "front position became non-finite".to_string(),
                });
            }
        }

        Ok(SimState {
            t: t + dt,
            h: h_new,
            dhdt,
            w: self.sol_u.clone(),
            v: self.sol_v.clone(),
        })
    }

    /// Stability-motivated dt for the explicit stages.
    fn adaptive_dt(&self, state: &SimState, safety: f64) -> f64 {
        let n = self.grid.n_u;
        let m = self.grid.n_v;
        let dxi = 1.0 / n as f64;
        let dx = self.grid.xmax / m as f64;
        let p = self.params;
        let diff = dxi.min(dx).powi(2) / (p.d1 / (state.h * state.h)).max(p.d2);
        let s = self.front_speed(&state.w, state.h);
        let adv = if s > 0.0 {
            state.h * dxi / s
        } else {
            f64::INFINITY
        };
        let react = {
            let b1_sup = p.b1.sup_on(self.grid.xmax);
            let b2_sup = p.b2.sup_on(self.grid.xmax);
            let rate = b1_sup.max(b2_sup) + (p.delta1.max(p.delta2)) * (self.m1 + self.m2);
            1.0 / rate.max(f64::MIN_POSITIVE)
        };
        safety * diff.min(adv).min(react)
    }
}

// ---------------------------------------------------------------------------
// Public stepping / running

fn bounds_from_state(params: &ModelParams, grid: &Grid, state: &SimState) -> (f64, f64) {
    let w_max = state.w.iter().cloned().fold(0.0f64, f64::max);
    let v_max = state.v.iter().cloned().fold(0.0f64, f64::max);
    let m1 = (params.b1.sup_on(grid.xmax) / params.delta1).max(w_max);
    let m2 = (params.b2.sup_on(grid.xmax) / params.delta2).max(v_max);
    (m1, m2)
}

/// Single time step with default options — the one-shot entry point; `run`
/// amortizes the setup across steps.
pub fn step(
    params: &ModelParams,
    grid: &Grid,
    state: &SimState,
    dt: f64,
) -> Result<SimState, PdeError> {
    grid.validate(params)?;
    let (m1, m2) = bounds_from_state(params, grid, state);
    let mut stepper = Stepper::new(params, grid, m1, m2);
    stepper
        .step(state, dt, None)
        .map_err(|rej| PdeError::Numerical {
            step: 0,
            t: state.t,
            reason: rej.reason,
        })
}

/// Builds the discrete initial state from validated initial data.
pub fn initial_state(
    params: &ModelParams,
    init: &InitialData,
    grid: &Grid,
) -> Result<SimState, PdeError> {
    grid.validate(params)?;
    let n = grid.n_u;
    let m = grid.n_v;
    let mut w: Vec<f64> = (0..=n)
        .map(|i| init.eval_u0(params, params.h0 * i as f64 / n as f64))
        .collect();
    w[n] = 0.0;
    let v: Vec<f64> = (0..=m)
        .map(|j| init.eval_v0(params, grid.xmax * j as f64 / m as f64))
        .collect();
    Ok(SimState {
        t: 0.0,
        h: params.h0,
        dhdt: 0.0,
        w,
        v,
    })
}

/// Integrates from validated initial data; see [`run_with_state`].
pub fn run(
    params: &ModelParams,
    init: &InitialData,
    grid: &Grid,
    opts: RunOptions,
) -> Result<RunResult, PdeError> {
    let bounds = derive_bounds_on(params, init, grid.xmax)?;
    let state0 = initial_state(params, init, grid)?;
    run_inner(params, grid, state0, opts, bounds)
}

/// Integrates from an explicit initial state (testing/verification hook:
/// manufactured solutions, frozen-v comparison runs). The a-priori bounds
/// are derived from the state itself.
pub fn run_with_state(
    params: &ModelParams,
    grid: &Grid,
    state0: SimState,
    opts: RunOptions,
) -> Result<RunResult, PdeError> {
    grid.validate(params)?;
    let (m1, m2) = bounds_from_state(params, grid, &state0);
    let bounds = DerivedBounds {
        m1,
        m2,
        lambda: None,
    };
    run_inner(params, grid, state0, opts, bounds)
}

fn run_inner(
    params: &ModelParams,
    grid: &Grid,
    state0: SimState,
    opts: RunOptions,
    bounds: DerivedBounds,
) -> Result<RunResult, PdeError> {
    if !(opts.horizon > 0.0) {
        return Err(ModelError::invalid("run.horizon", "must be > 0").into());
    }
    let sample_dt = match opts.sample_dt {
        Some(s) if s > 0.0 => s,
        Some(s) => {
            return Err(
                ModelError::invalid("run.sample_dt", format!("must be > 0, got {s}")).into(),
            )
        }
        None => opts.horizon / 1000.0,
    };
    let mut stepper = Stepper::new(params, grid, bounds.m1, bounds.m2);
    stepper.freeze_v = opts.freeze_v;
    stepper.check_bounds = opts.check_bounds;

    let h0 = state0.h;
    let dx = grid.xmax / grid.n_v as f64;
    let mut state = state0;
    let mut series = Vec::new();
    let mut snapshots = Vec::new();
    let mut diag = Diagnostics {
        final_sup_u: 0.0,
        final_sup_v: 0.0,
        lambda: 0.0,
        sup_w_ratio: 0.0,
        sup_v_ratio: 0.0,
        dt_refined: false,
        steps: 0,
    };

    let push_sample = |state: &SimState,
                       stepper: &Stepper,
                       series: &mut Vec<Sample>,
                       snapshots: &mut Vec<SimState>| {
        series.push(observe(state, stepper, h0));
        if opts.keep_snapshots {
            snapshots.push(state.clone());
        }
    };
    push_sample(&state, &stepper, &mut series, &mut snapshots);

    let mut next_sample = sample_dt;
    let mut step_idx: u64 = 0;
    loop {
        if state.t >= opts.horizon - 1e-12 * opts.horizon {
            break;
        }
        if let Some(stop_h) = opts.stop_h {
            if state.h >= stop_h {
                break;
            }
        }
        let dt_policy = match grid.dt_policy {
            DtPolicy::Fixed { dt } => dt,
            DtPolicy::Adaptive { safety } => stepper.adaptive_dt(&state, safety),
        };
        let dt_target = dt_policy
            .min(opts.horizon - state.t)
            .min(next_sample - state.t)
            .max(1e-300);

        // attempt the step, halving on rejection (adaptive policy only)
        let mut dt_try = dt_target;
        let mut halvings = 0;
        let new_state = loop {
            match stepper.step(&state, dt_try, opts.forcing.as_ref()) {
                Ok(s) => break s,
                Err(rej) => {
                    let adaptive = matches!(grid.dt_policy, DtPolicy::Adaptive { .. });
                    if !adaptive || halvings >= MAX_DT_HALVINGS {
                        return Err(PdeError::Numerical {
                            step: step_idx,
                            t: state.t,
                            reason: rej.reason,
                        });
                    }
                    halvings += 1;
                    diag.dt_refined = true;
                    dt_try *= 0.5;
                }
            }
        };
        state = new_state;
        step_idx += 1;
        diag.steps = step_idx;
        diag.lambda = diag.lambda.max(state.dhdt);
        let w_max = state.w.iter().cloned().fold(0.0f64, f64::max);
        let v_max = state.v.iter().cloned().fold(0.0f64, f64::max);
        diag.sup_w_ratio = diag.sup_w_ratio.max(w_max / bounds.m1);
        diag.sup_v_ratio = diag.sup_v_ratio.max(v_max / bounds.m2);

        if state.h + dx >= grid.xmax {
            return Err(PdeError::Truncation {
                h: state.h,
                t: state.t,
                xmax: grid.xmax,
            });
        }
        if state.t >= next_sample - 1e-12 * sample_dt {
            push_sample(&state, &stepper, &mut series, &mut snapshots);
            while next_sample <= state.t + 1e-12 * sample_dt {
                next_sample += sample_dt;
            }
        }
    }
    // ensure the terminal state is sampled
    if series.last().map(|s| s.t < state.t).unwrap_or(true) {
        push_sample(&state, &stepper, &mut series, &mut snapshots);
    }

    diag.final_sup_u = state.w.iter().cloned().fold(0.0f64, f64::max);
    diag.final_sup_v = state.v.iter().cloned().fold(0.0f64, f64::max);

    let classification = classify(&series, params, grid);
    Ok(RunResult {
        series,
        classification,
        diagnostics: diag,
        final_state: state,
        snapshots,
    })
}

fn observe(state: &SimState, stepper: &Stepper, h0: f64) -> Sample {
    let n = state.w.len() - 1;
    let dxi = 1.0 / n as f64;
    let sup_u = state.w.iter().cloned().fold(0.0f64, f64::max);
    let sup_v = state.v.iter().cloned().fold(0.0f64, f64::max);
    let mut mass = 0.0;
    for i in 0..=n {
        let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
        mass += wgt * state.w[i] * dxi;
    }
    // sup over the initial habitat [0, h0] (ξ ≤ h0/h)
    let xi_core = (h0 / state.h).min(1.0);
    let mut sup_core = stepper.u_at(&state.w, state.h, xi_core * state.h);
    let i_max = ((xi_core / dxi) as usize).min(n);
    for i in 0..=i_max {
        sup_core = sup_core.max(state.w[i]);
    }
    Sample {
        t: state.t,
        h: state.h,
        dhdt: state.dhdt,
        sup_u,
        sup_v,
        mass_u: mass * state.h,
        sup_u_core: sup_core,
    }
}

// ---------------------------------------------------------------------------
// Classification

/// Spreading/vanishing verdict from a finished series.
///
/// Vanishing: the front is stalled (trailing `dhdt < ε_h`) *and* `sup u`
/// decays monotonically below `u_tol`. Spreading: the front has escaped the
/// critical radius *and* u persists above `u_floor` on the initial habitat.
/// Anything else — including series shorter than the warm-up window — is
/// Undecided.
pub fn classify(series: &[Sample], params: &ModelParams, grid: &Grid) -> Classification {
    if series.len() < 8 {
        return Classification::Undecided;
    }
    let t_end = series.last().unwrap().t;
    let window = 0.1 * t_end;
    if !(window > 0.0) {
        return Classification::Undecided;
    }
    let h0 = series[0].h;
    let m1 = (params.b1.sup_on(grid.xmax) / params.delta1).max(series[0].sup_u);
    let eps_h = 1e-6 * h0 / window;
    let u_tol = 1e-3 * m1;
    let u_floor = 1e-2 * m1;

    let tail: Vec<&Sample> = series.iter().filter(|s| s.t >= t_end - window).collect();
    if tail.len() < 2 {
        return Classification::Undecided;
    }

    let escape = escape_radius(params, grid, h0);

    let front_stalled = tail.iter().all(|s| s.dhdt < eps_h);
    let u_dying = {
        let mut monotone = true;
        for pair in tail.windows(2) {
            if pair[1].sup_u > pair[0].sup_u * (1.0 + 1e-9) {
                monotone = false;
                break;
            }
        }
        monotone && tail.last().unwrap().sup_u < u_tol
    };
    if front_stalled && u_dying {
        return Classification::Vanishing;
    }

    let escaped = series.last().unwrap().h > escape;
    let u_persists = tail.iter().all(|s| s.sup_u_core > u_floor);
    if escaped && u_persists {
        return Classification::Spreading;
    }
    Classification::Undecided
}

/// Front position beyond which a run counts as spreading: three times the
/// critical length (h0* in the constant-coefficient fitness-benefit case,
/// otherwise the best-habitat critical length), but never less than twice
/// the initial front.
pub(crate) fn escape_radius(params: &ModelParams, grid: &Grid, h0: f64) -> f64 {
    let h_ref = critical_h0_star(params).unwrap_or_else(|_| {
        std::f64::consts::FRAC_PI_2 * (params.d1 / params.b1.sup_on(grid.xmax).max(1e-300)).sqrt()
    });
    (3.0 * h_ref).max(2.0 * h0)
}

/// Least-squares slope of `h(t)` over the trailing `tail_fraction` of the
/// series — the measured spreading speed.
pub fn measure_speed(result: &RunResult, tail_fraction: f64) -> Result<f64, PdeError> {
    if result.classification != Classification::Spreading {
        return Err(ModelError::Domain(format!(
            "speed defined only for spreading runs, classification is {}",
            result.classification
        ))
        .into());
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(ModelError::invalid("tail_fraction", "must lie in (0, 1]").into());
    }
    Ok(slope_of_tail(&result.series, tail_fraction))
}

pub(crate) fn slope_of_tail(series: &[Sample], tail_fraction: f64) -> f64 {
    let t_start = series[0].t;
    let t_end = series.last().unwrap().t;
    let cut = t_end - tail_fraction * (t_end - t_start);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|s| s.t >= cut)
        .map(|s| (s.t, s.h))
        .collect();
    let n = pts.len() as f64;
    let (mut st, mut sh, mut stt, mut sth) = (0.0, 0.0, 0.0, 0.0);
    for &(t, h) in &pts {
        st += t;
        sh += h;
        stt += t * t;
        sth += t * h;
    }
    (n * sth - st * sh) / (n * stt - st * st)
}

// ---------------------------------------------------------------------------
// Stationary v-profile

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryProfile {
    pub xs: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Unique positive steady state of `d2 v_xx + v(b2(x) − δ2 v) = 0` with zero
/// flux at both ends of `[0, Xmax]`, by implicit-diffusion time marching from
/// the constant super-solution `max(sup b2/δ2, 1)` until `sup |v_t| < 1e-8`.
pub fn solve_stationary_v(
    params: &ModelParams,
    grid: &Grid,
) -> Result<StationaryProfile, PdeError> {
    grid.validate(params)?;
    let m = grid.n_v;
    let dx = grid.xmax / m as f64;
    let b_inf = params.b2.inf_on(grid.xmax);
    let b_sup = params.b2.sup_on(grid.xmax);
    if !(b_inf > 0.0) {
        return Err(ModelError::Domain(format!(
            "stationary profile needs a positive lower birth-rate bound, inf b2 = {b_inf}"
        ))
        .into());
    }
    let v_init = (b_sup / params.delta2).max(1.0);
    let dt = 0.25 / (b_sup + 2.0 * params.delta2 * v_init);
    let r = dt * params.d2 / (dx * dx);
    let b2x: Vec<f64> = (0..=m).map(|j| params.b2.eval(j as f64 * dx)).collect();

    let mut v = vec![v_init; m + 1];
    let mut rhs = vec![0.0; m + 1];
    let mut v_new = Vec::new();
    const TOL: f64 = 1e-8;
    const MAX_ITERS: u64 = 2_000_000;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        for j in 0..=m {
            rhs[j] = v[j] + dt * v[j] * (b2x[j] - params.delta2 * v[j]);
        }
        diffuse_implicit(&rhs, r, false, &mut v_new);
        residual = v
            .iter()
            .zip(&v_new)
            .map(|(a, b)| (b - a).abs())
            .fold(0.0f64, f64::max)
            / dt;
        std::mem::swap(&mut v, &mut v_new);
        if residual < TOL {
            let xs = (0..=m).map(|j| j as f64 * dx).collect();
            return Ok(StationaryProfile { xs, phi: v });
        }
    }
    Err(PdeError::NonConvergence {
        iters: MAX_ITERS,
        residual,
    })
}
