//! Model parameters, birth-rate fields, initial data, and the closed-form
//! quantities derived from them.
//!
//! Scalar coefficients live in [`ModelParams`] together with the two
//! birth-rate fields `b1(x)` (infected) and `b2(x)` (uninfected). When both
//! fields are constant the carrying capacities are `κ1 = b1/δ1` and
//! `κ2 = b2/δ2`; the infection confers a *fitness benefit* when `κ1 > κ2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod expr;

use expr::Expr;

/// Number of sample points used to estimate sup/inf of expression fields and
/// to check sign conditions on initial data.
const DENSE_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum ModelError {
    /// A parameter failed validation; `field` names the offending entry.
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    /// Inputs are valid numbers but outside the regime where the requested
    /// quantity exists.
    #[error("{0}")]
    Domain(String),
}

impl ModelError {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ModelError::Validation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

fn require_positive(field: &str, value: f64) -> Result<(), ModelError> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(ModelError::invalid(
            field,
            format!("must be > 0, got {value}"),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Birth-rate fields

/// Serialized form of [`BirthRateField`]; see the JSON config docs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FieldSpec {
    Constant { value: f64 },
    Tabulated { samples: Vec<(f64, f64)> },
    Expression { expression: String },
}

/// A spatial coefficient `b(x)` on `[0, ∞)`.
///
/// Three representations: a constant, a table of `(x, b)` samples (linear
/// interpolation, constant extrapolation beyond the ends), or a closed-form
/// expression in `x` (see [`expr`]).
///
/// Constructors only require boundedness; sign conditions are checked where
/// they matter (model birth rates must be nonnegative, eigenvalue potentials
/// may dip negative).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "FieldSpec", into = "FieldSpec")]
pub struct BirthRateField {
    repr: FieldRepr,
}

#[derive(Debug, Clone)]
enum FieldRepr {
    Constant(f64),
    Tabulated(Vec<(f64, f64)>),
    Expression { source: String, compiled: Expr },
}

impl TryFrom<FieldSpec> for BirthRateField {
    type Error = ModelError;

    fn try_from(spec: FieldSpec) -> Result<Self, ModelError> {
        match spec {
            FieldSpec::Constant { value } => BirthRateField::constant(value),
            FieldSpec::Tabulated { samples } => BirthRateField::tabulated(samples),
            FieldSpec::Expression { expression } => BirthRateField::expression(&expression),
        }
    }
}

impl From<BirthRateField> for FieldSpec {
    fn from(f: BirthRateField) -> FieldSpec {
        match f.repr {
            FieldRepr::Constant(value) => FieldSpec::Constant { value },
            FieldRepr::Tabulated(samples) => FieldSpec::Tabulated { samples },
            FieldRepr::Expression { source, .. } => FieldSpec::Expression { expression: source },
        }
    }
}

impl BirthRateField {
    pub fn constant(value: f64) -> Result<Self, ModelError> {
        if !value.is_finite() {
            return Err(ModelError::invalid("value", "must be finite"));
        }
        Ok(Self {
            repr: FieldRepr::Constant(value),
        })
    }

    /// `samples` must have ≥ 2 entries with strictly increasing `x`.
    pub fn tabulated(samples: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if samples.len() < 2 {
            return Err(ModelError::invalid("samples", "need at least 2 samples"));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(ModelError::invalid(
                    "samples",
                    format!(
                        "x must be strictly increasing, got {} then {}",
                        w[0].0, w[1].0
                    ),
                ));
            }
        }
        if samples
            .iter()
            .any(|(x, b)| !x.is_finite() || !b.is_finite())
        {
            return Err(ModelError::invalid("samples", "entries must be finite"));
        }
        Ok(Self {
            repr: FieldRepr::Tabulated(samples),
        })
    }

    pub fn expression(source: &str) -> Result<Self, ModelError> {
        let compiled =
            Expr::parse(source).map_err(|e| ModelError::invalid("expression", e.to_string()))?;
        Ok(Self {
            repr: FieldRepr::Expression {
                source: source.to_string(),
                compiled,
            },
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.repr {
            FieldRepr::Constant(v) => *v,
            FieldRepr::Tabulated(samples) => {
                let n = samples.len();
                if x <= samples[0].0 {
                    return samples[0].1;
                }
                if x >= samples[n - 1].0 {
                    return samples[n - 1].1;
                }
                let idx = samples.partition_point(|(sx, _)| *sx <= x);
                let (x0, b0) = samples[idx - 1];
                let (x1, b1) = samples[idx];
                b0 + (b1 - b0) * (x - x0) / (x1 - x0)
            }
            FieldRepr::Expression { compiled, .. } => compiled.eval(x),
        }
    }

    /// `Some(value)` when the field is spatially constant.
    pub fn as_constant(&self) -> Option<f64> {
        match &self.repr {
            FieldRepr::Constant(v) => Some(*v),
            _ => None,
        }
    }

    /// Supremum over `[0, xmax]`. Exact for constant/tabulated fields
    /// (piecewise-linear extrema sit at knots); dense sampling for
    /// expressions.
    pub fn sup_on(&self, xmax: f64) -> f64 {
        self.extremum_on(xmax, f64::max)
    }

    /// Infimum over `[0, xmax]`; same method as [`Self::sup_on`].
    pub fn inf_on(&self, xmax: f64) -> f64 {
        self.extremum_on(xmax, f64::min)
    }

    fn extremum_on(&self, xmax: f64, pick: fn(f64, f64) -> f64) -> f64 {
        match &self.repr {
            FieldRepr::Constant(v) => *v,
            FieldRepr::Tabulated(samples) => {
                // Endpoint values plus every knot inside the window.
                let mut best = pick(self.eval(0.0), self.eval(xmax));
                for &(x, b) in samples {
                    if x > 0.0 && x < xmax {
                        best = pick(best, b);
                    }
                }
                best
            }
            FieldRepr::Expression { compiled, .. } => {
                let mut best = f64::NAN;
                for i in 0..=DENSE_SAMPLES {
                    let x = xmax * i as f64 / DENSE_SAMPLES as f64;
                    let v = compiled.eval(x);
                    best = if best.is_nan() { v } else { pick(best, v) };
                }
                best
            }
        }
    }

    /// Nonnegativity on `[0, xmax]` (expression kinds: dense sampling).
    pub fn validate_nonnegative(&self, field: &str, xmax: f64) -> Result<(), ModelError> {
        let inf = self.inf_on(xmax);
        if inf < 0.0 || inf.is_nan() {
            return Err(ModelError::invalid(
                field,
                format!("birth rate must be nonnegative on [0, {xmax}], found {inf}"),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parameters

/// All coefficients of the free-boundary system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    /// Diffusivity of the infected population.
    pub d1: f64,
    /// Diffusivity of the uninfected population.
    pub d2: f64,
    /// Density-dependent death rate, infected.
    pub delta1: f64,
    /// Density-dependent death rate, uninfected.
    pub delta2: f64,
    /// Stefan coefficient in `h'(t) = -mu * u_x(t, h(t))`.
    pub mu: f64,
    /// Initial front position.
    pub h0: f64,
    pub b1: BirthRateField,
    pub b2: BirthRateField,
}

impl ModelParams {
    /// Checks scalar positivity and birth-rate nonnegativity on `[0, window]`
    /// (`window` is the spatial extent that will actually be simulated).
    pub fn validate(&self, window: f64) -> Result<(), ModelError> {
        require_positive("d1", self.d1)?;
        require_positive("d2", self.d2)?;
        require_positive("delta1", self.delta1)?;
        require_positive("delta2", self.delta2)?;
        require_positive("mu", self.mu)?;
        require_positive("h0", self.h0)?;
        self.b1.validate_nonnegative("b1", window)?;
        self.b2.validate_nonnegative("b2", window)?;
        Ok(())
    }

    /// Carrying capacity `κ1 = b1/δ1`; only defined for constant `b1`.
    pub fn kappa1(&self) -> Option<f64> {
        self.b1.as_constant().map(|b| b / self.delta1)
    }

    /// Carrying capacity `κ2 = b2/δ2`; only defined for constant `b2`.
    pub fn kappa2(&self) -> Option<f64> {
        self.b2.as_constant().map(|b| b / self.delta2)
    }
}

// ---------------------------------------------------------------------------
// Initial data

/// One initial profile, evaluated on `[0, h0]` (for `u0`) or `[0, Xmax]`
/// (for `v0`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `A·cos(πx/(2h0))`: positive on `[0, h0)`, flat at 0, vanishing at
    /// `h0`. The canonical compactly-supported hump.
    DefaultCos {
        amplitude: f64,
    },
    Constant {
        value: f64,
    },
    Expression {
        expression: String,
    },
    Tabulated {
        samples: Vec<(f64, f64)>,
    },
}

impl Profile {
    fn to_field(&self, h0: f64) -> Result<BirthRateField, ModelError> {
        match self {
            Profile::DefaultCos { .. } => {
                // handled directly in eval(); placeholder never used
                BirthRateField::constant(0.0)
            }
            Profile::Constant { value } => BirthRateField::constant(*value),
            Profile::Expression { expression } => BirthRateField::expression(expression),
            Profile::Tabulated { samples } => {
                let _ = h0;
                BirthRateField::tabulated(samples.clone())
            }
        }
    }
}

/// Initial data `(u0, v0)`.
///
/// `u0` must vanish at the front, be positive inside, and have zero slope at
/// the origin; `v0` must be positive and bounded.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub u0: Profile,
    pub v0: Profile,
}

impl InitialData {
    /// Default data: `u0 = cos(πx/(2h0))`, `v0 ≡ sup(b2)/δ2` (the resident
    /// population sits at its highest carrying capacity).
    pub fn default_for(params: &ModelParams, window: f64) -> Self {
        InitialData {
            u0: Profile::DefaultCos { amplitude: 1.0 },
            v0: Profile::Constant {
                value: params.b2.sup_on(window) / params.delta2,
            },
        }
    }

    pub fn eval_u0(&self, params: &ModelParams, x: f64) -> f64 {
        match &self.u0 {
            Profile::DefaultCos { amplitude } => {
                if x >= params.h0 {
                    0.0
                } else {
                    amplitude * (std::f64::consts::FRAC_PI_2 * x / params.h0).cos()
                }
            }
            other => other
                .to_field(params.h0)
                .map(|f| f.eval(x))
                .unwrap_or(f64::NAN),
        }
    }

    pub fn eval_v0(&self, params: &ModelParams, x: f64) -> f64 {
        match &self.v0 {
            Profile::DefaultCos { amplitude } => {
                // Unusual as resident data but allowed; same hump shape.
                if x >= params.h0 {
                    0.0
                } else {
                    amplitude * (std::f64::consts::FRAC_PI_2 * x / params.h0).cos()
                }
            }
            other => other
                .to_field(params.h0)
                .map(|f| f.eval(x))
                .unwrap_or(f64::NAN),
        }
    }

    pub fn sup_u0(&self, params: &ModelParams) -> f64 {
        match &self.u0 {
            Profile::DefaultCos { amplitude } => amplitude.abs(),
            _ => {
                let mut m = 0.0f64;
                for i in 0..=DENSE_SAMPLES {
                    let x = params.h0 * i as f64 / DENSE_SAMPLES as f64;
                    m = m.max(self.eval_u0(params, x));
                }
                m
            }
        }
    }

    pub fn sup_v0(&self, params: &ModelParams, window: f64) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for i in 0..=DENSE_SAMPLES {
            let x = window * i as f64 / DENSE_SAMPLES as f64;
            m = m.max(self.eval_v0(params, x));
        }
        m
    }

    /// Compatibility conditions: `u0(h0) = 0`, `u0 > 0` inside, `u0'(0) = 0`
    /// (checked numerically for non-closed-form kinds), `v0 > 0` on the
    /// window.
    pub fn validate(&self, params: &ModelParams, window: f64) -> Result<(), ModelError> {
        let h0 = params.h0;
        match &self.u0 {
            Profile::DefaultCos { amplitude } => {
                if !(*amplitude > 0.0) {
                    return Err(ModelError::invalid("init.u0.amplitude", "must be > 0"));
                }
            }
            _ => {
                let sup = self.sup_u0(params).max(f64::MIN_POSITIVE);
                let at_front = self.eval_u0(params, h0);
                if at_front.abs() > 1e-9 * sup {
                    return Err(ModelError::invalid(
                        "init.u0",
                        format!("must vanish at the front x = h0, got {at_front}"),
                    ));
                }
                for i in 1..DENSE_SAMPLES {
                    let x = h0 * i as f64 / DENSE_SAMPLES as f64;
                    let v = self.eval_u0(params, x);
                    if !(v > 0.0) {
                        return Err(ModelError::invalid(
                            "init.u0",
                            format!("must be positive on (0, h0), got {v} at x = {x}"),
                        ));
                    }
                }
                // zero-slope check at the origin, second-order in the probe
                let probe = 1e-4 * h0;
                let slope = (self.eval_u0(params, probe) - self.eval_u0(params, 0.0)) / probe;
                if slope.abs() > 0.05 * sup / h0 {
                    return Err(ModelError::invalid(
                        "init.u0",
                        format!("slope at x = 0 must vanish, measured {slope}"),
                    ));
                }
            }
        }
        for i in 0..=DENSE_SAMPLES {
            let x = window * i as f64 / DENSE_SAMPLES as f64;
            let v = self.eval_v0(params, x);
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::invalid(
                    "init.v0",
                    format!("must be positive and bounded, got {v} at x = {x}"),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Derived bounds

/// A-priori sup bounds: `u ≤ M1`, `v ≤ M2`, `0 < h' ≤ Λ`.
///
/// `lambda` has no usable closed form, so it is measured from runs and filled
/// in afterwards.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DerivedBounds {
    pub m1: f64,
    pub m2: f64,
    pub lambda: Option<f64>,
}

/// `M1 = max(sup b1/δ1, sup u0)`, `M2 = max(sup b2/δ2, sup v0)`, with field
/// suprema taken over `[0, 4·h0]` (the default truncation window).
pub fn derive_bounds(
    params: &ModelParams,
    init: &InitialData,
) -> Result<DerivedBounds, ModelError> {
    derive_bounds_on(params, init, 4.0 * params.h0)
}

/// Same as [`derive_bounds`] with an explicit spatial window (use the actual
/// truncation length when it differs from the default).
pub fn derive_bounds_on(
    params: &ModelParams,
    init: &InitialData,
    window: f64,
) -> Result<DerivedBounds, ModelError> {
    params.validate(window)?;
    init.validate(params, window)?;
    let m1 = (params.b1.sup_on(window) / params.delta1).max(init.sup_u0(params));
    let m2 = (params.b2.sup_on(window) / params.delta2).max(init.sup_v0(params, window));
    Ok(DerivedBounds {
        m1,
        m2,
        lambda: None,
    })
}

// ---------------------------------------------------------------------------
// Closed-form thresholds

/// Critical initial front position `h0* = (π/2)·√(d1/(δ1(κ1−κ2)))`.
///
/// Fronts starting at `h0 ≥ h0*` always spread (for constant coefficients in
/// the fitness-benefit regime `κ1 > κ2`).
pub fn critical_h0_star(params: &ModelParams) -> Result<f64, ModelError> {
    let (k1, k2) = match (params.kappa1(), params.kappa2()) {
        (Some(k1), Some(k2)) => (k1, k2),
        _ => {
            return Err(ModelError::Domain(
                "h0* requires constant birth rates".to_string(),
            ))
        }
    };
    require_positive("d1", params.d1)?;
    require_positive("delta1", params.delta1)?;
    if k1 <= k2 {
        return Err(ModelError::Domain(format!(
            "fitness-cost regime (κ1 = {k1} ≤ κ2 = {k2}), h0* undefined"
        )));
    }
    Ok(std::f64::consts::FRAC_PI_2 * (params.d1 / (params.delta1 * (k1 - k2))).sqrt())
}

/// Critical habitat length `L* = (π/2)·√(d/b)` below which diffusion beats
/// growth `b` on a Neumann–Dirichlet interval.
pub fn critical_length_lstar(d: f64, b: f64) -> Result<f64, ModelError> {
    require_positive("d", d)?;
    require_positive("b", b)?;
    Ok(std::f64::consts::FRAC_PI_2 * (d / b).sqrt())
}
