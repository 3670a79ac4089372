//! ARZ model constants, the congested steady state, the linearization and
//! the change of variables to the exponentially weighted Riemann states.
//!
//! Units are km, h and veh throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Grid1D;

/// Physical ARZ parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArzParams {
    /// Free-flow speed [km/h].
    pub vf: f64,
    /// Jam density [veh/km].
    pub rho_m: f64,
    /// Relaxation time [h].
    pub tau: f64,
    /// Pressure exponent.
    pub gamma: f64,
    /// Pressure coefficient, `p(rho) = c0 rho^gamma` [km/h].
    pub c0: f64,
    /// Road length [km].
    pub ell: f64,
}

impl ArzParams {
    /// Freeway segment used for all reference runs: a 1 km road with
    /// Greenshields speed 144 km/h and a two minute relaxation time.
    pub fn reference() -> Self {
        Self {
            vf: 144.0,
            rho_m: 160.0,
            tau: 2.0 / 60.0,
            gamma: 1.0,
            c0: 0.396,
            ell: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("vf", self.vf),
            ("rho_m", self.rho_m),
            ("tau", self.tau),
            ("gamma", self.gamma),
            ("c0", self.c0),
            ("ell", self.ell),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if self.gamma < 1.0 {
            return Err(Error::Config(format!(
                "pressure exponent gamma = {} < 1 is not supported",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Traffic pressure `p(rho)`.
    pub fn pressure(&self, rho: f64) -> f64 {
        self.c0 * rho.powf(self.gamma)
    }

    /// Inverse of the pressure law.
    pub fn density_from_pressure(&self, p: f64) -> f64 {
        (p / self.c0).powf(1.0 / self.gamma)
    }

    /// `rho p'(rho)`.
    pub fn rho_dpressure(&self, rho: f64) -> f64 {
        self.gamma * self.pressure(rho)
    }
}

/// Greenshields equilibrium speed `V(rho)`.
pub fn equilibrium_velocity(rho: f64, params: &ArzParams) -> Result<f64> {
    if !(0.0..=params.rho_m).contains(&rho) {
        return Err(Error::Domain(format!(
            "density {rho} veh/km outside [0, {}]",
            params.rho_m
        )));
    }
    Ok(params.vf * (1.0 - (rho / params.rho_m).powf(params.gamma)))
}

/// `V(rho)` without the domain check, for use inside time steppers.
pub(crate) fn greenshields(rho: f64, params: &ArzParams) -> f64 {
    params.vf * (1.0 - (rho / params.rho_m).powf(params.gamma))
}

/// Uniform equilibrium `(rho*, v*)` with constant inflow `q* = rho* v*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub rho_star: f64,
    pub v_star: f64,
    pub q_star: f64,
    pub p_star: f64,
}

impl SteadyState {
    /// Steady state on the equilibrium curve at density `rho_star`.
    pub fn from_density(params: &ArzParams, rho_star: f64) -> Result<Self> {
        let v_star = equilibrium_velocity(rho_star, params)?;
        if rho_star <= 0.0 || v_star <= 0.0 {
            return Err(Error::Domain(format!(
                "steady state ({rho_star} veh/km, {v_star} km/h) is not a moving equilibrium"
            )));
        }
        Ok(Self {
            rho_star,
            v_star,
            q_star: rho_star * v_star,
            p_star: params.pressure(rho_star),
        })
    }

    /// `gamma p* > v*`: the upstream-travelling characteristic exists.
    pub fn is_congested(&self, params: &ArzParams) -> bool {
        params.gamma * self.p_star > self.v_star
    }
}

/// Constants of the linearized system in Riemann coordinates together with
/// the spatially varying couplings tabulated on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoeffs {
    pub c1: f64,
    pub c2: f64,
    pub r0: f64,
    pub r1: f64,
    /// Downstream transport speed `v*` [km/h].
    pub lambda1: f64,
    /// Upstream transport speed `gamma p* - v*` [km/h].
    pub lambda2: f64,
    /// `gamma p* / rho*`, the density weight inside `w̄`.
    pub density_weight: f64,
    pub ell: f64,
    pub grid: Grid1D,
    pub cbar1: Vec<f64>,
    pub cbar2: Vec<f64>,
    weight_w: Vec<f64>,
    weight_v: Vec<f64>,
}

impl LinearCoeffs {
    /// `c̄₁(x) = c₂ exp((c₁/λ₁ − c₂/λ₂) x)`.
    pub fn cbar1_at(&self, x: f64) -> f64 {
        self.c2 * ((self.c1 / self.lambda1 - self.c2 / self.lambda2) * x).exp()
    }

    /// `c̄₂(x) = −c₁ exp((c₂/λ₂ − c₁/λ₁) x)`.
    pub fn cbar2_at(&self, x: f64) -> f64 {
        -self.c1 * ((self.c2 / self.lambda2 - self.c1 / self.lambda1) * x).exp()
    }

    /// Copy of these coefficients with both couplings replaced by zero.
    /// The transport speeds and boundary gains are kept.
    pub fn without_coupling(&self) -> Self {
        let mut out = self.clone();
        out.c1 = 0.0;
        out.c2 = 0.0;
        out.cbar1.iter_mut().for_each(|c| *c = 0.0);
        out.cbar2.iter_mut().for_each(|c| *c = 0.0);
        out.weight_w.iter_mut().for_each(|c| *c = 1.0);
        out.weight_v.iter_mut().for_each(|c| *c = 1.0);
        out.r1 = 1.0;
        out
    }

    pub fn is_uncoupled(&self) -> bool {
        self.c1 == 0.0 && self.c2 == 0.0
    }
}

/// Linearize around `steady` and tabulate the couplings on `grid`.
///
/// The relaxation coefficient is `c₁ = −rho* V'(rho*) / (tau gamma p*)`,
/// which is `(1/tau)(v_f/rho_m)(rho*/(gamma p*))` for `gamma = 1`.
pub fn linearize(params: &ArzParams, steady: &SteadyState, grid: Grid1D) -> Result<LinearCoeffs> {
    params.validate()?;
    if (grid.ell() - params.ell).abs() > 1e-12 * params.ell {
        return Err(Error::Config(format!(
            "grid length {} differs from road length {}",
            grid.ell(),
            params.ell
        )));
    }
    let gp = params.gamma * steady.p_star;
    let v = steady.v_star;
    if gp <= v {
        return Err(Error::Config(format!(
            "steady state is not congested: gamma p* = {gp:.6} <= v* = {v:.6}"
        )));
    }
    let rho = steady.rho_star;
    let dv_drho = -params.vf * params.gamma * rho.powf(params.gamma - 1.0) / params.rho_m.powf(params.gamma);
    let c1 = -rho * dv_drho / (params.tau * gp);
    let c2 = c1 - 1.0 / params.tau;
    let lambda1 = v;
    let lambda2 = gp - v;
    let r0 = lambda2 / v;
    if !(c1 > 1.0 / params.tau && c2 > 0.0 && r0 > 0.0) {
        return Err(Error::Config(format!(
            "instability condition violated: need c1 > 1/tau > 0, c2 > 0, r0 > 0; \
             got c1 = {c1:.6}, 1/tau = {:.6}, c2 = {c2:.6}, r0 = {r0:.6}",
            1.0 / params.tau
        )));
    }
    let r1 = (c2 * params.ell / lambda2).exp();
    let mut coeffs = LinearCoeffs {
        c1,
        c2,
        r0,
        r1,
        lambda1,
        lambda2,
        density_weight: gp / rho,
        ell: params.ell,
        grid,
        cbar1: Vec::new(),
        cbar2: Vec::new(),
        weight_w: Vec::new(),
        weight_v: Vec::new(),
    };
    let nodes = grid.nodes();
    coeffs.cbar1 = nodes.iter().map(|&x| coeffs.cbar1_at(x)).collect();
    coeffs.cbar2 = nodes.iter().map(|&x| coeffs.cbar2_at(x)).collect();
    coeffs.weight_w = nodes.iter().map(|&x| (c1 * x / lambda1).exp()).collect();
    coeffs.weight_v = nodes.iter().map(|&x| (c2 * x / lambda2).exp()).collect();
    Ok(coeffs)
}

/// Physical deviations `(rhõ, ṽ)` to Riemann states `(w̄, v̄)`.
pub fn to_riemann(rho_dev: &[f64], v_dev: &[f64], coeffs: &LinearCoeffs) -> Result<(Vec<f64>, Vec<f64>)> {
    coeffs.grid.check_len(rho_dev.len())?;
    coeffs.grid.check_len(v_dev.len())?;
    let wbar = rho_dev
        .iter()
        .zip(v_dev)
        .zip(&coeffs.weight_w)
        .map(|((r, v), e)| e * (coeffs.density_weight * r + v))
        .collect();
    let vbar = v_dev.iter().zip(&coeffs.weight_v).map(|(v, e)| e * v).collect();
    Ok((wbar, vbar))
}

/// Riemann states `(w̄, v̄)` back to physical deviations `(rhõ, ṽ)`.
pub fn from_riemann(wbar: &[f64], vbar: &[f64], coeffs: &LinearCoeffs) -> Result<(Vec<f64>, Vec<f64>)> {
    coeffs.grid.check_len(wbar.len())?;
    coeffs.grid.check_len(vbar.len())?;
    let v_dev: Vec<f64> = vbar.iter().zip(&coeffs.weight_v).map(|(v, e)| v / e).collect();
    let rho_dev = wbar
        .iter()
        .zip(&coeffs.weight_w)
        .zip(&v_dev)
        .map(|((w, e), v)| (w / e - v) / coeffs.density_weight)
        .collect();
    Ok((rho_dev, v_dev))
}
