//! Lyapunov functionals, event statistics and traffic performance metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LinearCoeffs;
use crate::numerics::{derivative, trapezoid};
use crate::triggers::{weighted_norm, TriggerParams};

/// `V₁ = C ∫ (1/v*) α² e^{−μx/v*} + (r₀²/λ₂) β² e^{μx/λ₂} dx`.
pub fn lyapunov_v1(alpha: &[f64], beta: &[f64], coeffs: &LinearCoeffs, params: &TriggerParams) -> f64 {
    params.lyapunov_weight * weighted_norm(alpha, beta, coeffs, params.mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    /// Time [h].
    pub t: f64,
    pub v1: f64,
    /// `V₁ + m`.
    pub v: f64,
    /// `e^{−b⋆t} V₀`.
    pub barrier: f64,
    /// `barrier − V`.
    pub w: f64,
}

impl LyapunovSample {
    pub fn new(t: f64, v1: f64, m: f64, v0: f64, b_star: f64) -> Self {
        let v = v1 + m;
        let barrier = (-b_star * t).exp() * v0;
        Self {
            t,
            v1,
            v,
            barrier,
            w: barrier - v,
        }
    }
}

/// First sample index at which `V` rises above its predecessor by more than
/// `rel_slack · V_prev`.
pub fn first_increase(trace: &[LyapunovSample], rel_slack: f64) -> Option<usize> {
    trace
        .windows(2)
        .position(|w| w[1].v > w[0].v * (1.0 + rel_slack))
        .map(|i| i + 1)
}

/// First sample index at which `V` exceeds the barrier by more than the
/// relative slack.
pub fn first_barrier_breach(trace: &[LyapunovSample], rel_slack: f64) -> Option<usize> {
    trace.iter().position(|s| s.v > s.barrier * (1.0 + rel_slack))
}

/// Count of sample intervals over which `V` strictly increases.
pub fn increasing_intervals(trace: &[LyapunovSample]) -> usize {
    trace.windows(2).filter(|w| w[1].v > w[0].v).count()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventStats {
    /// Number of updates, the initial one at `t = 0` included.
    pub n_t: usize,
    /// Gaps between consecutive updates [min].
    pub dwell_times: Vec<f64>,
    /// Mean gap [min]; zero with fewer than two updates.
    pub mean_dwell: f64,
    /// Shortest gap [min].
    pub min_dwell: f64,
}

/// Statistics of an ascending list of update times in hours.
pub fn event_stats(times: &[f64]) -> EventStats {
    let dwell_times: Vec<f64> = times.windows(2).map(|w| (w[1] - w[0]) * 60.0).collect();
    let mean_dwell = if dwell_times.is_empty() {
        0.0
    } else {
        dwell_times.iter().sum::<f64>() / dwell_times.len() as f64
    };
    let min_dwell = dwell_times.iter().copied().fold(f64::INFINITY, f64::min);
    EventStats {
        n_t: times.len(),
        mean_dwell,
        min_dwell: if min_dwell.is_finite() { min_dwell } else { 0.0 },
        dwell_times,
    }
}

/// Fuel-rate coefficients in SI units.
pub const FUEL_B0: f64 = 25e-3;
pub const FUEL_B1: f64 = 24.5e-6;
pub const FUEL_B3: f64 = 32.5e-9;
pub const FUEL_B4: f64 = 125e-6;

/// Total travel time [veh·s], fuel consumption and travel discomfort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub j_ttt: f64,
    pub j_fuel: f64,
    pub j_d: f64,
}

impl Metrics {
    /// Percent changes `100 (self − base) / base` per metric.
    pub fn percent_delta(&self, base: &Metrics) -> [f64; 3] {
        let pct = |a: f64, b: f64| 100.0 * (a - b) / b;
        [
            pct(self.j_ttt, base.j_ttt),
            pct(self.j_fuel, base.j_fuel),
            pct(self.j_d, base.j_d),
        ]
    }
}

/// Density/speed snapshots at a fixed output stride, in km and km/h.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrafficHistory {
    /// Time between snapshots [h].
    pub dt_out: f64,
    /// Node spacing [km].
    pub dx: f64,
    pub rho: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl TrafficHistory {
    pub fn new(dt_out: f64, dx: f64) -> Self {
        Self {
            dt_out,
            dx,
            ..Default::default()
        }
    }

    pub fn push(&mut self, rho: Vec<f64>, v: Vec<f64>) {
        self.rho.push(rho);
        self.v.push(v);
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

/// Travel metrics in SI units: density in veh/m, speed in m/s, length in m
/// and time in s.
///
/// Acceleration `a = v_t + v v_x` is formed with a forward difference in time
/// and centred differences in space; `a_t` is a forward difference of `a`.
/// Each double integral uses the trapezoid rule over the samples on which its
/// integrand is defined.
pub fn traffic_metrics(history: &TrafficHistory) -> Result<Metrics> {
    let n_t = history.len();
    if n_t < 3 {
        return Err(Error::InsufficientData(format!(
            "traffic metrics need at least 3 snapshots, got {n_t}"
        )));
    }
    let dt = history.dt_out * 3600.0;
    let dx = history.dx * 1000.0;
    let rho: Vec<Vec<f64>> = history
        .rho
        .iter()
        .map(|r| r.iter().map(|x| x / 1000.0).collect())
        .collect();
    let v: Vec<Vec<f64>> = history.v.iter().map(|r| r.iter().map(|x| x / 3.6).collect()).collect();

    let accel: Vec<Vec<f64>> = (0..n_t - 1)
        .map(|n| {
            let vx = derivative(&v[n], dx);
            (0..v[n].len())
                .map(|i| (v[n + 1][i] - v[n][i]) / dt + v[n][i] * vx[i])
                .collect()
        })
        .collect();

    let space_time = |rows: &[f64]| trapezoid(rows, dt);
    let ttt_rows: Vec<f64> = rho.iter().map(|r| trapezoid(r, dx)).collect();
    let fuel_rows: Vec<f64> = (0..n_t - 1)
        .map(|n| {
            let integrand: Vec<f64> = (0..rho[n].len())
                .map(|i| {
                    let s = v[n][i];
                    let rate = FUEL_B0 + FUEL_B1 * s + FUEL_B3 * s * s * s + FUEL_B4 * s * accel[n][i];
                    rate.max(0.0) * rho[n][i]
                })
                .collect();
            trapezoid(&integrand, dx)
        })
        .collect();
    let discomfort_rows: Vec<f64> = (0..n_t - 2)
        .map(|n| {
            let integrand: Vec<f64> = (0..rho[n].len())
                .map(|i| {
                    let a = accel[n][i];
                    let at = (accel[n + 1][i] - a) / dt;
                    (a * a + at * at) * rho[n][i]
                })
                .collect();
            trapezoid(&integrand, dx)
        })
        .collect();
    Ok(Metrics {
        j_ttt: space_time(&ttt_rows),
        j_fuel: space_time(&fuel_rows),
        j_d: space_time(&discomfort_rows),
    })
}
