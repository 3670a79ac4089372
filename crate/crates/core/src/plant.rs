//! Explicit first-order upwind time stepping of the traffic PDE.
//!
//! The linearized mode advances the Riemann states `(w̄, v̄)`. The nonlinear
//! mode advances the ARZ Riemann invariants `w = v + p(rho)` (speed `v`) and
//! `v` (speed `v − rho p'(rho)`), each relaxed toward `V(rho)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{from_riemann, greenshields, to_riemann, ArzParams, LinearCoeffs, SteadyState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantMode {
    Linearized,
    Nonlinear,
}

/// Sinusoidal initial perturbation `x ↦ amplitude · sin(k π x / ell)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    /// Relative amplitude of the density and speed perturbation.
    pub amplitude: f64,
    /// Number of half waves over the road.
    pub half_waves: f64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            amplitude: 0.1,
            half_waves: 3.0,
        }
    }
}

impl InitialCondition {
    /// Physical density and speed at `x`. Density rises where speed drops.
    pub fn physical_at(&self, x: f64, ell: f64, steady: &SteadyState) -> (f64, f64) {
        let s = (self.half_waves * PI * x / ell).sin();
        (
            self.amplitude * s * steady.rho_star + steady.rho_star,
            -self.amplitude * s * steady.v_star + steady.v_star,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantState {
    Linearized { wbar: Vec<f64>, vbar: Vec<f64>, t: f64 },
    Nonlinear { rho: Vec<f64>, v: Vec<f64>, t: f64 },
}

impl PlantState {
    pub fn t(&self) -> f64 {
        match self {
            Self::Linearized { t, .. } | Self::Nonlinear { t, .. } => *t,
        }
    }

    pub fn mode(&self) -> PlantMode {
        match self {
            Self::Linearized { .. } => PlantMode::Linearized,
            Self::Nonlinear { .. } => PlantMode::Nonlinear,
        }
    }

    /// Riemann states of the current snapshot. The nonlinear state is
    /// converted through its deviation from `steady`.
    pub fn riemann(&self, coeffs: &LinearCoeffs, steady: &SteadyState) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Linearized { wbar, vbar, .. } => Ok((wbar.clone(), vbar.clone())),
            Self::Nonlinear { rho, v, .. } => {
                let dr: Vec<f64> = rho.iter().map(|r| r - steady.rho_star).collect();
                let dv: Vec<f64> = v.iter().map(|s| s - steady.v_star).collect();
                to_riemann(&dr, &dv, coeffs)
            }
        }
    }

    /// Physical density and speed profiles.
    pub fn physical(&self, coeffs: &LinearCoeffs, steady: &SteadyState) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Linearized { wbar, vbar, .. } => {
                let (dr, dv) = from_riemann(wbar, vbar, coeffs)?;
                Ok((
                    dr.iter().map(|r| r + steady.rho_star).collect(),
                    dv.iter().map(|s| s + steady.v_star).collect(),
                ))
            }
            Self::Nonlinear { rho, v, .. } => Ok((rho.clone(), v.clone())),
        }
    }
}

/// Initial state sampled on the coefficient grid.
pub fn initial_profile(
    ic: &InitialCondition,
    mode: PlantMode,
    coeffs: &LinearCoeffs,
    steady: &SteadyState,
) -> Result<PlantState> {
    let (rho, v): (Vec<f64>, Vec<f64>) = coeffs
        .grid
        .nodes()
        .iter()
        .map(|&x| ic.physical_at(x, coeffs.ell, steady))
        .unzip();
    match mode {
        PlantMode::Nonlinear => Ok(PlantState::Nonlinear { rho, v, t: 0.0 }),
        PlantMode::Linearized => {
            let dr: Vec<f64> = rho.iter().map(|r| r - steady.rho_star).collect();
            let dv: Vec<f64> = v.iter().map(|s| s - steady.v_star).collect();
            let (wbar, vbar) = to_riemann(&dr, &dv, coeffs)?;
            Ok(PlantState::Linearized { wbar, vbar, t: 0.0 })
        }
    }
}

/// Fixed-step integrator bound to one set of coefficients.
#[derive(Debug, Clone)]
pub struct Plant {
    pub coeffs: LinearCoeffs,
    pub params: ArzParams,
    pub steady: SteadyState,
    pub dt: f64,
    scratch_a: Vec<f64>,
    scratch_b: Vec<f64>,
}

impl Plant {
    /// Rejects time steps violating the linearized CFL bound.
    pub fn new(coeffs: LinearCoeffs, params: ArzParams, steady: SteadyState, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let cfl = cfl_numbers(&coeffs, dt);
        if cfl.0.max(cfl.1) > 1.0 {
            return Err(Error::Config(format!(
                "CFL condition violated: v* dt/dx = {:.4}, lambda2 dt/dx = {:.4}",
                cfl.0, cfl.1
            )));
        }
        let n = coeffs.grid.len();
        Ok(Self {
            coeffs,
            params,
            steady,
            dt,
            scratch_a: vec![0.0; n],
            scratch_b: vec![0.0; n],
        })
    }

    /// Advances `state` by one step with boundary speed deviation `u_held`.
    pub fn step(&mut self, state: &mut PlantState, u_held: f64) -> Result<()> {
        match state {
            PlantState::Linearized { wbar, vbar, t } => {
                self.step_linear(wbar, vbar, u_held);
                *t += self.dt;
                Ok(())
            }
            PlantState::Nonlinear { rho, v, t } => {
                self.step_nonlinear(rho, v, *t, u_held)?;
                *t += self.dt;
                Ok(())
            }
        }
    }

    fn step_linear(&mut self, wbar: &mut [f64], vbar: &mut [f64], u_held: f64) {
        step_linear(
            &self.coeffs,
            self.dt,
            wbar,
            vbar,
            u_held,
            &mut self.scratch_a,
            &mut self.scratch_b,
        );
    }

    fn step_nonlinear(&mut self, rho: &mut [f64], v: &mut [f64], t: f64, u_held: f64) -> Result<()> {
        let p = &self.params;
        let n = rho.len();
        let dx = self.coeffs.grid.dx();
        let dt = self.dt;
        let r = dt / dx;
        let w: Vec<f64> = rho.iter().zip(v.iter()).map(|(d, s)| s + p.pressure(*d)).collect();
        let new_w = &mut self.scratch_a;
        let new_v = &mut self.scratch_b;
        for i in 0..n {
            let speed_w = v[i];
            let speed_v = v[i] - p.rho_dpressure(rho[i]);
            if speed_w.abs() * r > 1.0 || speed_v.abs() * r > 1.0 {
                return Err(Error::Simulation {
                    x: self.coeffs.grid.x(i),
                    t,
                    reason: format!("CFL violated by characteristic speeds {speed_w:.3}, {speed_v:.3} km/h"),
                });
            }
            let relax = (greenshields(rho[i], p) - v[i]) / p.tau;
            new_w[i] = w[i] - r * upwind(&w, i, speed_w) + dt * relax;
            new_v[i] = v[i] - r * upwind(v, i, speed_v) + dt * relax;
        }
        new_v[n - 1] = u_held + self.steady.v_star;
        // inflow flux q* is imposed through the density at x = 0
        if new_v[0] <= 0.0 {
            return Err(Error::Simulation {
                x: 0.0,
                t,
                reason: format!("inflow speed {:.4} km/h is not positive", new_v[0]),
            });
        }
        new_w[0] = new_v[0] + p.pressure(self.steady.q_star / new_v[0]);
        for i in 0..n {
            let d = p.density_from_pressure(new_w[i] - new_v[i]);
            if !(d > 0.0 && d < p.rho_m && new_v[i] > 0.0 && d.is_finite() && new_v[i].is_finite()) {
                return Err(Error::Simulation {
                    x: self.coeffs.grid.x(i),
                    t: t + dt,
                    reason: format!("state (rho = {d:.4}, v = {:.4}) outside physical bounds", new_v[i]),
                });
            }
            rho[i] = d;
            v[i] = new_v[i];
        }
        Ok(())
    }
}

/// One upwind step of the linearized Riemann system using caller-provided
/// scratch buffers of the grid length.
pub fn step_linear(
    c: &LinearCoeffs,
    dt: f64,
    wbar: &mut [f64],
    vbar: &mut [f64],
    u_held: f64,
    new_w: &mut [f64],
    new_v: &mut [f64],
) {
    let n = wbar.len();
    let (nu1, nu2) = cfl_numbers(c, dt);
    for i in 1..n {
        new_w[i] = wbar[i] - nu1 * (wbar[i] - wbar[i - 1]) + dt * c.cbar1[i] * vbar[i];
    }
    for i in 0..n - 1 {
        new_v[i] = vbar[i] + nu2 * (vbar[i + 1] - vbar[i]) + dt * c.cbar2[i] * wbar[i];
    }
    new_v[n - 1] = c.r1 * u_held;
    new_w[0] = -c.r0 * new_v[0];
    wbar.copy_from_slice(new_w);
    vbar.copy_from_slice(new_v);
}

/// One-sided difference in the upwind direction of `speed`. Boundary nodes
/// whose upwind neighbour lies outside the domain are overwritten by the
/// boundary conditions afterwards.
#[inline]
fn upwind(f: &[f64], i: usize, speed: f64) -> f64 {
    let n = f.len();
    if speed >= 0.0 {
        if i == 0 {
            0.0
        } else {
            speed * (f[i] - f[i - 1])
        }
    } else if i + 1 == n {
        0.0
    } else {
        speed * (f[i + 1] - f[i])
    }
}

/// `(v* dt/dx, lambda2 dt/dx)`.
pub fn cfl_numbers(coeffs: &LinearCoeffs, dt: f64) -> (f64, f64) {
    let dx = coeffs.grid.dx();
    (coeffs.lambda1 * dt / dx, coeffs.lambda2 * dt / dx)
}
