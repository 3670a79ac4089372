//! Target-system states, the continuous boundary feedback and the held
//! sample-and-hold input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{GainSlice, KernelSet};
use crate::model::LinearCoeffs;
use crate::numerics::trapezoid;

/// Backstepping coordinates `(α, β)` on the plant grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl TargetState {
    pub fn alpha_at_end(&self) -> f64 {
        *self.alpha.last().expect("non-empty grid")
    }
}

pub fn to_target(wbar: &[f64], vbar: &[f64], kernels: &KernelSet) -> Result<TargetState> {
    let (alpha, beta) = kernels.to_target(wbar, vbar)?;
    Ok(TargetState { alpha, beta })
}

pub fn from_target(target: &TargetState, kernels: &KernelSet) -> Result<(Vec<f64>, Vec<f64>)> {
    kernels.from_target(&target.alpha, &target.beta)
}

fn weighted_sum(ka: &[f64], a: &[f64], kb: &[f64], b: &[f64], h: f64) -> Result<f64> {
    for len in [a.len(), b.len()] {
        if len != ka.len() {
            return Err(Error::Shape {
                expected: ka.len(),
                got: len,
            });
        }
    }
    let integrand: Vec<f64> = (0..a.len()).map(|j| ka[j] * a[j] + kb[j] * b[j]).collect();
    Ok(trapezoid(&integrand, h))
}

/// Continuous feedback `U = (1/r₁) ∫ K²¹(ℓ,ξ) w̄ + K²²(ℓ,ξ) v̄ dξ`.
pub fn continuous_u(wbar: &[f64], vbar: &[f64], gains: &GainSlice, coeffs: &LinearCoeffs) -> Result<f64> {
    Ok(weighted_sum(&gains.k21_l, wbar, &gains.k22_l, vbar, gains.h)? / coeffs.r1)
}

/// The same feedback written in target coordinates,
/// `U = (1/r₁) ∫ L²¹(ℓ,ξ) α + L²²(ℓ,ξ) β dξ`.
pub fn continuous_u_target(target: &TargetState, gains: &GainSlice, coeffs: &LinearCoeffs) -> Result<f64> {
    Ok(weighted_sum(&gains.l21_l, &target.alpha, &gains.l22_l, &target.beta, gains.h)? / coeffs.r1)
}

/// Sample-and-hold input applied between events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldInput {
    /// Speed-limit deviation applied at the outlet [km/h].
    pub u_k: f64,
    /// Time of the last update [h].
    pub t_k: f64,
    /// Number of updates so far, the first one at `t = 0` being `k = 0`.
    pub k: usize,
}

impl HeldInput {
    pub fn initial(u0: f64) -> Self {
        Self {
            u_k: u0,
            t_k: 0.0,
            k: 0,
        }
    }

    /// Replaces the held value at an event.
    pub fn update(&mut self, u_now: f64, t: f64) {
        self.u_k = u_now;
        self.t_k = t;
        self.k += 1;
    }
}

/// Input-holding error `d = U_k − U(t)`.
pub fn deviation_d(held: &HeldInput, u_now: f64) -> f64 {
    held.u_k - u_now
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{linearize, ArzParams, SteadyState};
    use crate::numerics::Grid1D;
    use crate::plant::{initial_profile, InitialCondition, Plant, PlantMode, PlantState};
    use std::sync::OnceLock;

    struct Fixture {
        coeffs: LinearCoeffs,
        steady: SteadyState,
        params: ArzParams,
        kernels: KernelSet,
    }

    fn fixture() -> &'static Fixture {
        static F: OnceLock<Fixture> = OnceLock::new();
        F.get_or_init(|| {
            let params = ArzParams::reference();
            let steady = SteadyState::from_density(&params, 120.0).unwrap();
            let coeffs = linearize(&params, &steady, Grid1D::new(1.0, 101).unwrap()).unwrap();
            let kernels = KernelSet::solve_on(&coeffs).unwrap();
            Fixture {
                coeffs,
                steady,
                params,
                kernels,
            }
        })
    }

    fn ic_state() -> (Vec<f64>, Vec<f64>) {
        let f = fixture();
        match initial_profile(
            &InitialCondition::default(),
            PlantMode::Linearized,
            &f.coeffs,
            &f.steady,
        )
        .unwrap()
        {
            PlantState::Linearized { wbar, vbar, .. } => (wbar, vbar),
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_state_gives_zero_target_and_zero_input() {
        let f = fixture();
        let n = f.coeffs.grid.len();
        let z = vec![0.0; n];
        let t = to_target(&z, &z, &f.kernels).unwrap();
        assert!(t.alpha.iter().chain(&t.beta).all(|v| *v == 0.0));
        assert_eq!(continuous_u(&z, &z, &f.kernels.gain_slice(), &f.coeffs).unwrap(), 0.0);
    }

    #[test]
    fn feedback_is_linear_in_the_state() {
        let f = fixture();
        let g = f.kernels.gain_slice();
        let (w, v) = ic_state();
        let u1 = continuous_u(&w, &v, &g, &f.coeffs).unwrap();
        let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        let u2 = continuous_u(&w2, &v2, &g, &f.coeffs).unwrap();
        assert!((u2 - 2.0 * u1).abs() <= 1e-12 * u1.abs().max(1.0));
    }

    #[test]
    fn both_feedback_formulas_agree() {
        let f = fixture();
        let g = f.kernels.gain_slice();
        let (w, v) = ic_state();
        let t = to_target(&w, &v, &f.kernels).unwrap();
        let direct = continuous_u(&w, &v, &g, &f.coeffs).unwrap();
        let dual = continuous_u_target(&t, &g, &f.coeffs).unwrap();
        // the identity holds up to the quadrature error of the composition
        let scale = direct.abs().max(1e-3);
        assert!((direct - dual).abs() / scale < 1e-2, "{direct} vs {dual}");
    }

    #[test]
    fn deviation_after_one_step_matches_target_integral() {
        let f = fixture();
        let exact = f.kernels.with_discrete_inverse();
        let g = exact.gain_slice();
        let mut plant = Plant::new(f.coeffs.clone(), f.params, f.steady, 8e-6).unwrap();
        let (w, v) = ic_state();
        let u0 = continuous_u(&w, &v, &g, &f.coeffs).unwrap();
        let held = HeldInput::initial(u0);
        assert_eq!(deviation_d(&held, u0), 0.0);
        let t0 = to_target(&w, &v, &exact).unwrap();
        let mut st = PlantState::Linearized {
            wbar: w,
            vbar: v,
            t: 0.0,
        };
        plant.step(&mut st, held.u_k).unwrap();
        let PlantState::Linearized { wbar, vbar, .. } = &st else {
            unreachable!()
        };
        let u1 = continuous_u(wbar, vbar, &g, &f.coeffs).unwrap();
        let d = deviation_d(&held, u1);
        // U_k − U(t) through the inverse gains applied to the α/β difference
        let t1 = to_target(wbar, vbar, &exact).unwrap();
        let diff = TargetState {
            alpha: t0.alpha.iter().zip(&t1.alpha).map(|(a, b)| a - b).collect(),
            beta: t0.beta.iter().zip(&t1.beta).map(|(a, b)| a - b).collect(),
        };
        let d_target = continuous_u_target(&diff, &g, &f.coeffs).unwrap();
        assert!((d - d_target).abs() < 1e-6 * d.abs().max(1e-6), "{d} vs {d_target}");
    }

    #[test]
    fn held_input_counts_updates() {
        let mut h = HeldInput::initial(1.5);
        h.update(2.0, 0.01);
        assert_eq!((h.u_k, h.t_k, h.k), (2.0, 0.01, 1));
    }
}
