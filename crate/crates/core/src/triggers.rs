//! Event-timing strategies for the held boundary input.
//!
//! Two families share one dynamic variable `m(t)`: regular triggers keep
//! `V = V₁ + m` decreasing, performance-barrier triggers only keep it under
//! `e^{−b⋆t} V₀` and feed the residual `W = e^{−b⋆t}V₀ − V` back into both
//! the trigger and `ṁ`. Each family comes in a continuously monitored, a
//! periodically sampled and a self-triggered form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelConstants;
use crate::model::LinearCoeffs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Regular,
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    Continuous,
    Periodic,
    SelfTriggered,
}

/// One of the six trigger designs, written `R-CETC`, `P-STC`, ….
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TriggerKind {
    pub family: Family,
    pub mechanism: Mechanism,
}

impl TriggerKind {
    pub const ALL: [TriggerKind; 6] = [
        TriggerKind::new(Family::Regular, Mechanism::Continuous),
        TriggerKind::new(Family::Barrier, Mechanism::Continuous),
        TriggerKind::new(Family::Regular, Mechanism::Periodic),
        TriggerKind::new(Family::Barrier, Mechanism::Periodic),
        TriggerKind::new(Family::Regular, Mechanism::SelfTriggered),
        TriggerKind::new(Family::Barrier, Mechanism::SelfTriggered),
    ];

    pub const fn new(family: Family, mechanism: Mechanism) -> Self {
        Self { family, mechanism }
    }

    pub fn is_barrier(&self) -> bool {
        self.family == Family::Barrier
    }

    /// The resource-aware weight actually used: regular kinds ignore `c`.
    pub fn effective_c(&self, c: f64) -> f64 {
        if self.is_barrier() {
            c
        } else {
            0.0
        }
    }
}

impl fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.family {
            Family::Regular => "R",
            Family::Barrier => "P",
        };
        let mech = match self.mechanism {
            Mechanism::Continuous => "CETC",
            Mechanism::Periodic => "PETC",
            Mechanism::SelfTriggered => "STC",
        };
        write!(f, "{fam}-{mech}")
    }
}

impl FromStr for TriggerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let (fam, mech) = upper
            .split_once('-')
            .ok_or_else(|| Error::Parse(format!("trigger kind {s:?} is not of the form R-CETC")))?;
        let family = match fam {
            "R" => Family::Regular,
            "P" => Family::Barrier,
            _ => return Err(Error::Parse(format!("unknown trigger family {fam:?} in {s:?}"))),
        };
        let mechanism = match mech {
            "CETC" => Mechanism::Continuous,
            "PETC" => Mechanism::Periodic,
            "STC" => Mechanism::SelfTriggered,
            _ => return Err(Error::Parse(format!("unknown trigger mechanism {mech:?} in {s:?}"))),
        };
        Ok(Self::new(family, mechanism))
    }
}

impl TryFrom<String> for TriggerKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TriggerKind> for String {
    fn from(k: TriggerKind) -> String {
        k.to_string()
    }
}

/// Design parameters of the trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerParams {
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    /// Lyapunov weight `C`.
    pub lyapunov_weight: f64,
    pub eta: f64,
    /// Resource-aware parameter `c` of the barrier family.
    pub c: f64,
    pub m0: f64,
    /// Sampling period of the periodic triggers [h].
    pub h: f64,
    /// Self-triggered dwell used when the state is exactly zero [h].
    pub max_dwell: f64,
    /// Replace `W` by `max{0, W}` in the barrier trigger and in `ṁ`.
    pub clamp_residual: bool,
}

impl TriggerParams {
    /// Values used for the reference freeway scenario.
    pub fn reference() -> Self {
        Self {
            theta: 1.0,
            sigma: 0.9,
            mu: 11.5,
            lyapunov_weight: 8897.4,
            eta: 1.293,
            c: 10.0,
            m0: 0.1,
            h: 4e-6,
            max_dwell: 0.1,
            clamp_residual: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("theta", self.theta),
            ("mu", self.mu),
            ("lyapunov_weight", self.lyapunov_weight),
            ("eta", self.eta),
            ("m0", self.m0),
            ("h", self.h),
            ("max_dwell", self.max_dwell),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Config(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("c must be non-negative, got {}", self.c)));
        }
        Ok(())
    }
}

/// Constants derived from the kernels and the design parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub theta_m: f64,
    pub r: f64,
    pub a: f64,
    pub tau_d: f64,
    pub b: f64,
    pub b_star: f64,
    pub rho_const: f64,
    pub rho_star: f64,
    /// Lower bound on the Lyapunov weight `C` that the design requires.
    pub c_lower_bound: f64,
}

/// Derives all trigger constants and checks the design inequalities.
pub fn derive_constants(
    params: &TriggerParams,
    kc: &KernelConstants,
    coeffs: &LinearCoeffs,
) -> Result<DerivedConstants> {
    params.validate()?;
    let (l1, l2, r0, r1, ell) = (coeffs.lambda1, coeffs.lambda2, coeffs.r0, coeffs.r1, coeffs.ell);
    let TriggerParams {
        theta,
        sigma,
        mu,
        lyapunov_weight: big_c,
        eta,
        ..
    } = *params;
    let scale = 1.0 / (theta * (1.0 - sigma));
    let (kappa1, kappa2, kappa3) = (kc.eps1 * scale, kc.eps2 * scale, kc.eps3 * scale);
    let r = 1.0 / ((-mu * ell / l1).exp() / l1).min(r0 * r0 / l2);
    let kmax = kappa1.max(kappa2);
    let c_lower_bound = ((mu * ell / l1).exp() * kappa3).max(kmax * r / mu);
    if big_c <= c_lower_bound {
        return Err(Error::Config(format!(
            "Lyapunov weight C = {big_c} must exceed max(e^(mu l/v*) kappa3, max(kappa1, kappa2) r/mu) = {c_lower_bound}"
        )));
    }
    let theta_m = big_c * r1 * r1 * r0 * r0 * (mu * ell / l2).exp();
    let b = mu - kmax * r / big_c;
    if b <= 0.0 {
        return Err(Error::Config(format!(
            "decay rate b = mu - max(kappa1, kappa2) r / C = {b} is not positive"
        )));
    }
    let b_star = b.min(eta);
    let a = 1.0 + kc.eps0 + eta;
    let tau_d = (1.0 + sigma * a / ((1.0 - sigma) * (a + theta * theta_m))).ln() / a;
    let rho_const = 4.0 / (r1 * r1) * (l1 * kc.ltilde21 * (mu * ell / l1).exp()).max(l2 * kc.ltilde22 / (r0 * r0));
    let rho_star = r0 * r0 * r1 * r1 * (mu * ell / l2).exp() * rho_const;
    Ok(DerivedConstants {
        kappa1,
        kappa2,
        kappa3,
        theta_m,
        r,
        a,
        tau_d,
        b,
        b_star,
        rho_const,
        rho_star,
        c_lower_bound,
    })
}

/// `h ≤ τ_d`, the condition under which the periodic triggers inherit the
/// dwell-time guarantee. Coarse grids whose step exceeds `τ_d` cannot meet
/// it; runs report the outcome instead of refusing to start.
pub fn sampling_period_admissible(params: &TriggerParams, consts: &DerivedConstants) -> bool {
    params.h <= consts.tau_d * (1.0 + 1e-12)
}

/// Quantities feeding `ṁ` and the triggers at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MonitorSignals {
    pub d2: f64,
    pub alpha_norm2: f64,
    pub beta_norm2: f64,
    pub alpha_end2: f64,
    /// Performance residual `W`; ignored by regular kinds.
    pub residual: f64,
}

/// Residual as seen by the barrier trigger and by `ṁ`.
fn residual_used(w: f64, params: &TriggerParams) -> f64 {
    if params.clamp_residual {
        w.max(0.0)
    } else {
        w
    }
}

/// One step of `ṁ = −ηm − θ_m d² + κ₁‖α‖² + κ₂‖β‖² + κ₃α(ℓ)² + cW`.
///
/// Sink terms are treated semi-implicitly (modified Patankar–Euler), which
/// keeps `m` positive for any step size and reduces to explicit Euler as
/// `dt → 0`. A negative residual term acts as a sink.
pub fn step_monitor(
    m: f64,
    s: &MonitorSignals,
    kind: TriggerKind,
    params: &TriggerParams,
    consts: &DerivedConstants,
    dt: f64,
) -> Result<f64> {
    if !(m > 0.0) {
        return Err(Error::Invariant {
            t: f64::NAN,
            what: format!("dynamic variable m = {m} is not positive on entry"),
        });
    }
    let c = kind.effective_c(params.c);
    let cw = c * residual_used(s.residual, params);
    let mut source = consts.kappa1 * s.alpha_norm2 + consts.kappa2 * s.beta_norm2 + consts.kappa3 * s.alpha_end2;
    let mut sink_rate = params.eta + consts.theta_m * s.d2 / m;
    if cw >= 0.0 {
        source += cw;
    } else {
        sink_rate += -cw / m;
    }
    let next = (m + dt * source) / (1.0 + dt * sink_rate);
    if !(next > 0.0 && next.is_finite()) {
        return Err(Error::Invariant {
            t: f64::NAN,
            what: format!("dynamic variable m became {next}"),
        });
    }
    Ok(next)
}

/// `Γ^r = d² − θm`.
pub fn gamma_r(d2: f64, m: f64, theta: f64) -> f64 {
    d2 - theta * m
}

/// `Γ^p = d² − θm − (c/θ_m)W`.
pub fn gamma_p(d2: f64, m: f64, w: f64, params: &TriggerParams, consts: &DerivedConstants) -> f64 {
    gamma_r(d2, m, params.theta) - params.c / consts.theta_m * residual_used(w, params)
}

/// Continuous-time trigger function of `kind` (regular kinds ignore `W`).
pub fn gamma(kind: TriggerKind, d2: f64, m: f64, w: f64, params: &TriggerParams, consts: &DerivedConstants) -> f64 {
    let c = kind.effective_c(params.c);
    gamma_r(d2, m, params.theta) - c / consts.theta_m * residual_used(w, params)
}

/// Periodic trigger function evaluated at a sampling instant.
pub fn petc_gamma(
    kind: TriggerKind,
    d2: f64,
    m: f64,
    w: f64,
    params: &TriggerParams,
    consts: &DerivedConstants,
) -> f64 {
    let (a, th, thm, h) = (consts.a, params.theta, consts.theta_m, params.h);
    let c = kind.effective_c(params.c);
    let regular = (a + th * thm) * (a * h).exp() * d2 - th * thm * d2 - th * a * m;
    regular - a * c / thm * (-c * h).exp() * residual_used(w, params)
}

/// Waiting time until the next self-triggered update.
///
/// `H = 0` makes the logarithm unbounded; `max_dwell` is returned then. The
/// result is never below `τ_d`.
pub fn stc_next_dwell(
    kind: TriggerKind,
    h_value: f64,
    m: f64,
    w: f64,
    params: &TriggerParams,
    consts: &DerivedConstants,
) -> f64 {
    if !(h_value > 0.0) {
        return params.max_dwell.max(consts.tau_d);
    }
    let c = kind.effective_c(params.c);
    let th = params.theta;
    let thm = consts.theta_m;
    let rate = consts.rho_star + params.eta;
    let tail = th * thm * h_value / rate;
    let num = th * m + tail + c / thm * residual_used(w, params);
    let den = h_value + tail;
    let candidate = if num > 0.0 {
        (num / den).ln() / (rate + c)
    } else {
        f64::NEG_INFINITY
    };
    candidate.max(consts.tau_d)
}

/// `H = 3ϱ ∫ (1/v*) α² e^{−μx/v*} + (r₀²/λ₂) β² e^{μx/λ₂} dx`.
pub fn compute_h(
    alpha: &[f64],
    beta: &[f64],
    coeffs: &LinearCoeffs,
    params: &TriggerParams,
    consts: &DerivedConstants,
) -> f64 {
    3.0 * consts.rho_const * weighted_norm(alpha, beta, coeffs, params.mu)
}

/// `∫ (1/v*) α² e^{−μx/v*} + (r₀²/λ₂) β² e^{μx/λ₂} dx` by the trapezoid rule.
pub fn weighted_norm(alpha: &[f64], beta: &[f64], coeffs: &LinearCoeffs, mu: f64) -> f64 {
    NormWeights::new(coeffs, mu).eval(alpha, beta)
}

/// Precomputed nodal weights of [`weighted_norm`] for repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormWeights {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    dx: f64,
}

impl NormWeights {
    pub fn new(coeffs: &LinearCoeffs, mu: f64) -> Self {
        let (l1, l2, r0) = (coeffs.lambda1, coeffs.lambda2, coeffs.r0);
        let g = &coeffs.grid;
        let alpha = (0..g.len()).map(|i| (-mu * g.x(i) / l1).exp() / l1).collect();
        let beta = (0..g.len()).map(|i| r0 * r0 / l2 * (mu * g.x(i) / l2).exp()).collect();
        Self {
            alpha,
            beta,
            dx: g.dx(),
        }
    }

    pub fn eval(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let n = self.alpha.len();
        let term = |i: usize| self.alpha[i] * alpha[i] * alpha[i] + self.beta[i] * beta[i] * beta[i];
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = (1..n - 1).map(term).sum();
        self.dx * (inner + 0.5 * (term(0) + term(n - 1)))
    }
}

/// Number of plant steps to wait for a self-triggered dwell, rounded up so
/// that the realised dwell is never shorter than requested.
pub fn dwell_steps(dwell: f64, dt: f64) -> u64 {
    let mut k = (dwell / dt).ceil().max(1.0) as u64;
    while (k as f64) * dt < dwell {
        k += 1;
    }
    k
}

/// What the trigger sees at one plant step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerInput {
    pub step: u64,
    pub d2: f64,
    pub m: f64,
    pub w: f64,
}

/// Decision state carried between steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorState {
    pub m: f64,
    /// Barrier anchor `V₀ = V₁(0) + m(0)`.
    pub v0: f64,
    /// Step index of the next self-triggered update.
    pub next_due: Option<u64>,
    /// Periodic sampling stride in plant steps.
    pub stride: u64,
}

impl MonitorState {
    pub fn new(m0: f64, v0: f64, params: &TriggerParams, dt: f64) -> Result<Self> {
        let ratio = params.h / dt;
        let stride = ratio.round();
        if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "sampling period h = {} is not a whole number of plant steps dt = {dt}",
                params.h
            )));
        }
        Ok(Self {
            m: m0,
            v0,
            next_due: None,
            stride: stride as u64,
        })
    }
}

/// Whether the held input must be refreshed at this step.
pub fn should_update(
    kind: TriggerKind,
    input: &TriggerInput,
    mon: &MonitorState,
    params: &TriggerParams,
    consts: &DerivedConstants,
) -> bool {
    match kind.mechanism {
        Mechanism::Continuous => gamma(kind, input.d2, input.m, input.w, params, consts) > 0.0,
        Mechanism::Periodic => {
            input.step.is_multiple_of(mon.stride) && petc_gamma(kind, input.d2, input.m, input.w, params, consts) > 0.0
        }
        Mechanism::SelfTriggered => mon.next_due.is_some_and(|due| input.step >= due),
    }
}
