//! Closed-loop orchestration: kernels, plant, trigger and analysis wired into
//! fixed-step runs, parameter sweeps and kernel verification reports.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{event_stats, traffic_metrics, EventStats, Metrics, TrafficHistory};
use crate::config::{Controller, SimConfig};
use crate::control::{continuous_u, to_target};
use crate::error::{Error, Result};
use crate::kernels::{kernel_constants, target_residual_probe, GainSlice, KernelConstants, KernelSet};
use crate::model::{ArzParams, LinearCoeffs, SteadyState};
use crate::numerics::l2_squared;
use crate::plant::{initial_profile, Plant, PlantMode, PlantState};
use crate::triggers::{
    derive_constants, dwell_steps, gamma, sampling_period_admissible, should_update, stc_next_dwell, step_monitor,
    DerivedConstants, Family, Mechanism, MonitorSignals, MonitorState, NormWeights, TriggerInput, TriggerKind,
};

/// Relative slack for the sample-to-sample decrease of `V` under regular triggers.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Relative slack for `V ≤ e^{−b⋆t} V₀`.
pub const BARRIER_SLACK: f64 = 1e-6;
/// Slack on `Γ ≤ 0`, relative to `θm`.
pub const GAMMA_SLACK: f64 = 1e-9;
/// Sup-norm tolerance on the kernel composition identity.
pub const COMPOSITION_CHECK: f64 = 1e-3;

/// Everything a run needs that does not depend on the controller or on `c`.
#[derive(Debug, Clone)]
pub struct Setup {
    pub params: ArzParams,
    pub steady: SteadyState,
    pub coeffs: LinearCoeffs,
    pub kernels: KernelSet,
    pub gains: GainSlice,
    pub kernel_constants: KernelConstants,
    pub constants: DerivedConstants,
}

impl Setup {
    /// Binds an already solved kernel set to a configuration.
    pub fn new(config: &SimConfig, kernels: KernelSet) -> Result<Self> {
        config.validate()?;
        let params = config.params();
        let steady = config.steady()?;
        let coeffs = config.coeffs()?;
        let n = coeffs.grid.len();
        if kernels.grid.n_nodes != n || (kernels.grid.spacing - coeffs.grid.dx()).abs() > 1e-12 * coeffs.ell {
            return Err(Error::Shape {
                expected: n,
                got: kernels.grid.n_nodes,
            });
        }
        let gains = kernels.gain_slice();
        let kc = kernel_constants(&gains, &coeffs);
        let constants = derive_constants(&config.trigger, &kc, &coeffs)?;
        Ok(Self {
            params,
            steady,
            coeffs,
            kernels,
            gains,
            kernel_constants: kc,
            constants,
        })
    }

    /// Solves the kernels, or reads them from the configured cache file and
    /// writes the cache after a fresh solve.
    pub fn prepare(config: &SimConfig) -> Result<Self> {
        let coeffs = config.coeffs()?;
        let kernels = match &config.output.kernel_cache {
            Some(path) if path.exists() => {
                let k = KernelSet::read_csv(path)?;
                if k.grid.n_nodes != coeffs.grid.len() {
                    return Err(Error::Config(format!(
                        "kernel cache {} holds {} nodes, the grid has {}",
                        path.display(),
                        k.grid.n_nodes,
                        coeffs.grid.len()
                    )));
                }
                k
            }
            cache => {
                let k = KernelSet::solve_on(&coeffs)?;
                if let Some(path) = cache {
                    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                        std::fs::create_dir_all(dir)?;
                    }
                    k.write_csv(path)?;
                }
                k
            }
        };
        Self::new(config, kernels)
    }
}

/// One control update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: u64,
    /// Time [h].
    pub t: f64,
    /// Held input after the update [km/h].
    pub u_k: f64,
}

/// Sampled closed-loop signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Time [h].
    pub t: f64,
    pub v1: f64,
    pub v: f64,
    pub barrier: f64,
    pub m: f64,
    pub d: f64,
    pub u_k: f64,
    pub gamma: f64,
    /// `‖w̄‖ + ‖v̄‖`.
    pub state_norm: f64,
}

/// Outcome of the run-time property checks. Times are in hours.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InvariantReport {
    /// Largest `Γ / (θm)` seen after the trigger decision.
    pub max_gamma_ratio: f64,
    pub gamma_breach_t: Option<f64>,
    pub min_m: f64,
    /// First sample where `V` rose (regular triggers only).
    pub increase_t: Option<f64>,
    /// Number of sample intervals over which `V` strictly rose.
    pub increasing_intervals: usize,
    /// Largest `V / (e^{−b⋆t} V₀)`.
    pub max_barrier_ratio: f64,
    pub barrier_breach_t: Option<f64>,
    /// Shortest gap between updates [h].
    pub min_dwell: Option<f64>,
    pub dwell_breach_t: Option<f64>,
    pub off_grid_t: Option<f64>,
}

impl InvariantReport {
    /// Human-readable list of every failed property.
    pub fn breaches(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |v: Option<f64>, what: &str| {
            if let Some(t) = v {
                out.push(format!("{what} at t = {t:.6} h"));
            }
        };
        push(self.gamma_breach_t, "trigger function positive after decision");
        push(self.increase_t, "Lyapunov function increased");
        push(self.barrier_breach_t, "Lyapunov function above the performance barrier");
        push(self.dwell_breach_t, "inter-event time below the minimum dwell time");
        push(self.off_grid_t, "periodic update off the sampling grid");
        out
    }

    pub fn ok(&self) -> bool {
        self.breaches().is_empty()
    }
}

/// Full record of one closed-loop run.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub name: String,
    pub controller: Controller,
    pub c: f64,
    pub mode: PlantMode,
    pub dt: f64,
    pub steps: u64,
    pub events: Vec<EventRecord>,
    pub trace: Vec<TraceRow>,
    pub metrics: Metrics,
    pub stats: EventStats,
    pub constants: DerivedConstants,
    pub kernel_constants: KernelConstants,
    pub sampling_period_admissible: bool,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub final_state: PlantState,
    pub invariants: InvariantReport,
    pub wall_clock_s: f64,
}

impl SimResult {
    pub fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.t).collect()
    }

    /// `(‖w̄‖ + ‖v̄‖)(T) / (‖w̄‖ + ‖v̄‖)(0)`.
    pub fn norm_ratio(&self) -> f64 {
        if self.initial_norm > 0.0 {
            self.final_norm / self.initial_norm
        } else {
            self.final_norm
        }
    }

    pub fn summary(&self) -> Summary {
        Summary {
            name: self.name.clone(),
            controller: self.controller.to_string(),
            c: self.c,
            n_t: self.stats.n_t,
            mean_dwell_min: self.stats.mean_dwell,
            min_dwell_min: self.stats.min_dwell,
            j_ttt: self.metrics.j_ttt,
            j_fuel: self.metrics.j_fuel,
            j_d: self.metrics.j_d,
            norm_ratio: self.norm_ratio(),
            invariants_ok: self.invariants.ok(),
            wall_clock_s: self.wall_clock_s,
        }
    }
}

/// One output row per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub controller: String,
    pub c: f64,
    pub n_t: usize,
    pub mean_dwell_min: f64,
    pub min_dwell_min: f64,
    pub j_ttt: f64,
    pub j_fuel: f64,
    pub j_d: f64,
    pub norm_ratio: f64,
    pub invariants_ok: bool,
    pub wall_clock_s: f64,
}

fn state_norm(w: &[f64], v: &[f64], dx: f64) -> f64 {
    l2_squared(w, dx).sqrt() + l2_squared(v, dx).sqrt()
}

/// Trigger used for decisions and for the dynamics of `m`. Open-loop and
/// continuous runs evolve `m` with regular dynamics for reporting only.
fn monitor_kind(controller: Controller) -> TriggerKind {
    match controller {
        Controller::Event(kind) => kind,
        _ => TriggerKind::new(Family::Regular, Mechanism::Continuous),
    }
}

/// Instantaneous closed-loop signals at the current step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSignals {
    pub step: u64,
    /// Time [h].
    pub t: f64,
    /// Continuous feedback `U` evaluated on the current state.
    pub u: f64,
    pub v1: f64,
    pub v: f64,
    pub barrier: f64,
    pub w: f64,
    /// `‖w̄‖ + ‖v̄‖`.
    pub state_norm: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// What happened during one [`ClosedLoop::advance`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub signals: StepSignals,
    pub fired: bool,
    /// Holding error after the decision.
    pub d: f64,
    /// Held input after the decision.
    pub u_k: f64,
    /// `m` at the decision, before it is advanced.
    pub m: f64,
    /// Trigger function after the decision.
    pub gamma: f64,
}

/// Step-by-step closed loop: plant, held input and trigger monitor.
///
/// Each [`advance`](Self::advance) maps the state to target coordinates,
/// forms the holding error `d = U_k − U` and the residual
/// `W = e^{−b⋆t}V₀ − V`, lets the trigger decide whether to refresh `U_k`,
/// advances `m` and steps the plant with the held input.
#[derive(Debug, Clone)]
pub struct ClosedLoop<'a> {
    config: &'a SimConfig,
    setup: &'a Setup,
    controller: Controller,
    kind: TriggerKind,
    weights: NormWeights,
    plant: Plant,
    pub state: PlantState,
    pub u_k: f64,
    pub monitor: MonitorState,
    pub step: u64,
    /// Whether the next advance is an unconditional update.
    pub force_update: bool,
}

impl<'a> ClosedLoop<'a> {
    /// Loop at `t = 0` on the configured initial condition, with
    /// `V₀ = V₁(0) + m(0)` and a forced first update.
    pub fn new(config: &'a SimConfig, setup: &'a Setup) -> Result<Self> {
        let state = initial_profile(
            &config.initial_condition(),
            config.plant.mode,
            &setup.coeffs,
            &setup.steady,
        )?;
        let mut lp = Self::from_state(config, setup, state, 0.0, config.trigger.m0, 0.0, 0)?;
        let first = lp.signals()?;
        lp.monitor.v0 = first.v1 + config.trigger.m0;
        lp.force_update = true;
        Ok(lp)
    }

    /// Loop resumed from an arbitrary snapshot at step `step`.
    pub fn from_state(
        config: &'a SimConfig,
        setup: &'a Setup,
        state: PlantState,
        u_k: f64,
        m: f64,
        v0: f64,
        step: u64,
    ) -> Result<Self> {
        config.validate()?;
        let controller = config.control.controller;
        Ok(Self {
            config,
            setup,
            controller,
            kind: monitor_kind(controller),
            weights: NormWeights::new(&setup.coeffs, config.trigger.mu),
            plant: Plant::new(setup.coeffs.clone(), setup.params, setup.steady, config.grid.dt)?,
            state,
            u_k,
            monitor: MonitorState::new(m, v0, &config.trigger, config.grid.dt)?,
            step,
            force_update: false,
        })
    }

    pub fn t(&self) -> f64 {
        self.step as f64 * self.config.grid.dt
    }

    /// Signals of the current state without advancing.
    pub fn signals(&self) -> Result<StepSignals> {
        let s = self.setup;
        let (w, v) = self.state.riemann(&s.coeffs, &s.steady)?;
        let target = to_target(&w, &v, &s.kernels)?;
        let u = if self.controller == Controller::OpenLoop {
            0.0
        } else {
            continuous_u(&w, &v, &s.gains, &s.coeffs)?
        };
        let t = self.t();
        let v1 = self.config.trigger.lyapunov_weight * self.weights.eval(&target.alpha, &target.beta);
        let v_total = v1 + self.monitor.m;
        let barrier = (-s.constants.b_star * t).exp() * self.monitor.v0;
        Ok(StepSignals {
            step: self.step,
            t,
            u,
            v1,
            v: v_total,
            barrier,
            w: barrier - v_total,
            state_norm: state_norm(&w, &v, s.coeffs.grid.dx()),
            alpha: target.alpha,
            beta: target.beta,
        })
    }

    /// Trigger function for holding error `d` at the given signals.
    pub fn gamma(&self, d: f64, signals: &StepSignals) -> f64 {
        gamma(
            self.kind,
            d * d,
            self.monitor.m,
            signals.w,
            &self.config.trigger,
            &self.setup.constants,
        )
    }

    /// Decides, updates the held input, advances `m` and steps the plant.
    pub fn advance(&mut self) -> Result<StepOutcome> {
        let params = &self.config.trigger;
        let consts = &self.setup.constants;
        let dt = self.config.grid.dt;
        let sig = self.signals()?;
        let mut d = self.u_k - sig.u;
        let fired = match self.controller {
            Controller::OpenLoop => false,
            Controller::Continuous => true,
            Controller::Event(kind) => {
                self.force_update
                    || should_update(
                        kind,
                        &TriggerInput {
                            step: self.step,
                            d2: d * d,
                            m: self.monitor.m,
                            w: sig.w,
                        },
                        &self.monitor,
                        params,
                        consts,
                    )
            }
        };
        self.force_update = false;
        if fired {
            self.u_k = sig.u;
            d = 0.0;
            if self.kind.mechanism == Mechanism::SelfTriggered && matches!(self.controller, Controller::Event(_)) {
                let wnorm = sig.v1 / params.lyapunov_weight;
                let h_value = 3.0 * consts.rho_const * wnorm;
                let dwell = stc_next_dwell(self.kind, h_value, self.monitor.m, sig.w, params, consts);
                self.monitor.next_due = Some(self.step + dwell_steps(dwell, dt));
            }
        }
        let m = self.monitor.m;
        let g = self.gamma(d, &sig);
        let dx = self.setup.coeffs.grid.dx();
        let a_end = *sig.alpha.last().expect("non-empty grid");
        let inputs = MonitorSignals {
            d2: d * d,
            alpha_norm2: l2_squared(&sig.alpha, dx),
            beta_norm2: l2_squared(&sig.beta, dx),
            alpha_end2: a_end * a_end,
            residual: sig.w,
        };
        let t = sig.t;
        self.monitor.m = step_monitor(m, &inputs, self.kind, params, consts, dt).map_err(|e| match e {
            Error::Invariant { what, .. } => Error::Invariant { t, what },
            other => other,
        })?;
        self.plant.step(&mut self.state, self.u_k)?;
        self.step += 1;
        Ok(StepOutcome {
            signals: sig,
            fired,
            d,
            u_k: self.u_k,
            m,
            gamma: g,
        })
    }
}

/// Runs one closed loop over the configured horizon.
///
/// The update at `t = 0` is counted as the first event. Property
/// violations are recorded in the invariant report; a non-positive `m` or a
/// plant leaving its admissible region aborts the run.
pub fn run(config: &SimConfig, setup: &Setup) -> Result<SimResult> {
    let started = Instant::now();
    let mut lp = ClosedLoop::new(config, setup)?;
    let controller = config.control.controller;
    let event_driven = matches!(controller, Controller::Event(_));
    let dt = config.grid.dt;
    let steps = config.steps();
    let stride = config.output.stride as u64;
    let theta = config.trigger.theta;

    let mut events: Vec<EventRecord> = Vec::new();
    let mut trace: Vec<TraceRow> = Vec::with_capacity((steps / stride + 2) as usize);
    let mut history = TrafficHistory::new(stride as f64 * dt, setup.coeffs.grid.dx());
    let mut report = InvariantReport {
        min_m: lp.monitor.m,
        max_gamma_ratio: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut initial_norm = 0.0;

    let mut record = |sig: &StepSignals, state: &PlantState, m: f64, d: f64, u_k: f64, g: f64| -> Result<()> {
        trace.push(TraceRow {
            t: sig.t,
            v1: sig.v1,
            v: sig.v,
            barrier: sig.barrier,
            m,
            d,
            u_k,
            gamma: g,
            state_norm: sig.state_norm,
        });
        let (rho, v) = state.physical(&setup.coeffs, &setup.steady)?;
        history.push(rho, v);
        Ok(())
    };

    for step in 0..steps {
        // the plant state is sampled before it is advanced
        let sampled = (step % stride == 0).then(|| lp.state.clone());
        let out = lp.advance()?;
        let sig = &out.signals;
        if step == 0 {
            initial_norm = sig.state_norm;
        }
        if out.fired && event_driven {
            events.push(EventRecord {
                step,
                t: sig.t,
                u_k: out.u_k,
            });
        }
        if event_driven {
            let ratio = out.gamma / (theta * out.m);
            report.max_gamma_ratio = report.max_gamma_ratio.max(ratio);
            if ratio > GAMMA_SLACK && report.gamma_breach_t.is_none() {
                report.gamma_breach_t = Some(sig.t);
            }
            let b_ratio = sig.v / sig.barrier;
            report.max_barrier_ratio = report.max_barrier_ratio.max(b_ratio);
            if b_ratio > 1.0 + BARRIER_SLACK && report.barrier_breach_t.is_none() {
                report.barrier_breach_t = Some(sig.t);
            }
        }
        report.min_m = report.min_m.min(lp.monitor.m);
        if let Some(state) = sampled {
            record(sig, &state, out.m, out.d, out.u_k, out.gamma)?;
        }
    }

    let last = lp.signals()?;
    let d_end = lp.u_k - last.u;
    let g_end = lp.gamma(d_end, &last);
    record(&last, &lp.state, lp.monitor.m, d_end, lp.u_k, g_end)?;

    if !event_driven {
        report.max_gamma_ratio = 0.0;
    }
    if let Controller::Event(kind) = controller {
        check_trace(&trace, kind, &mut report);
        check_events(&events, kind, &lp.monitor, &setup.constants, dt, &mut report);
    }

    let metrics = traffic_metrics(&history)?;
    let times: Vec<f64> = events.iter().map(|e| e.t).collect();
    Ok(SimResult {
        name: config.name.clone(),
        controller,
        c: config.trigger.c,
        mode: config.plant.mode,
        dt,
        steps,
        stats: event_stats(&times),
        events,
        trace,
        metrics,
        constants: setup.constants,
        kernel_constants: setup.kernel_constants,
        sampling_period_admissible: sampling_period_admissible(&config.trigger, &setup.constants),
        initial_norm,
        final_norm: last.state_norm,
        final_state: lp.state,
        invariants: report,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}

/// Number of steps until the first update when the loop is resumed from a
/// snapshot, or `None` if no update occurs within `max_steps`.
#[allow(clippy::too_many_arguments)]
pub fn first_update_step(
    config: &SimConfig,
    setup: &Setup,
    state: PlantState,
    u_k: f64,
    m: f64,
    v0: f64,
    step: u64,
    max_steps: u64,
) -> Result<Option<u64>> {
    let mut lp = ClosedLoop::from_state(config, setup, state, u_k, m, v0, step)?;
    for k in 0..max_steps {
        if lp.advance()?.fired {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

fn check_trace(trace: &[TraceRow], kind: TriggerKind, report: &mut InvariantReport) {
    report.increasing_intervals = trace.windows(2).filter(|w| w[1].v > w[0].v).count();
    if !kind.is_barrier() {
        report.increase_t = trace
            .windows(2)
            .find(|w| w[1].v > w[0].v * (1.0 + MONOTONE_SLACK))
            .map(|w| w[1].t);
    }
    if let Some(row) = trace.iter().find(|r| r.v > r.barrier * (1.0 + BARRIER_SLACK)) {
        report.barrier_breach_t = Some(report.barrier_breach_t.map_or(row.t, |t| t.min(row.t)));
    }
}

fn check_events(
    events: &[EventRecord],
    kind: TriggerKind,
    mon: &MonitorState,
    consts: &DerivedConstants,
    dt: f64,
    report: &mut InvariantReport,
) {
    report.min_dwell = events
        .windows(2)
        .map(|w| (w[1].step - w[0].step) as f64 * dt)
        .reduce(f64::min);
    let floor = match kind.mechanism {
        Mechanism::Continuous => Some(consts.tau_d - dt),
        Mechanism::SelfTriggered => Some(consts.tau_d),
        Mechanism::Periodic => None,
    };
    if let Some(floor) = floor {
        report.dwell_breach_t = events
            .windows(2)
            .find(|w| ((w[1].step - w[0].step) as f64) * dt < floor)
            .map(|w| w[1].t);
    }
    if kind.mechanism == Mechanism::Periodic {
        report.off_grid_t = events.iter().find(|e| e.step % mon.stride != 0).map(|e| e.t);
    }
}

/// One row of a sweep; failures are kept per row.
#[derive(Debug)]
pub struct SweepRow {
    pub controller: Controller,
    pub c: f64,
    pub outcome: std::result::Result<SimResult, String>,
}

/// Runs every `(controller, c)` pair on a shared setup. Controllers on
/// which `c` has no effect run once, with the first value of `cs`.
pub fn sweep(base: &SimConfig, setup: &Setup, controllers: &[Controller], cs: &[f64]) -> Vec<SweepRow> {
    let default_c = cs.first().copied().unwrap_or(base.trigger.c);
    let mut jobs = Vec::new();
    for &ctl in controllers {
        match ctl {
            Controller::Event(kind) if kind.is_barrier() => jobs.extend(cs.iter().map(|&c| (ctl, c))),
            _ => jobs.push((ctl, default_c)),
        }
    }
    jobs.into_par_iter()
        .map(|(controller, c)| {
            let cfg = base.with_controller(controller, c);
            SweepRow {
                controller,
                c,
                outcome: run(&cfg, setup).map_err(|e| e.to_string()),
            }
        })
        .collect()
}

/// One pass/fail line of a kernel verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub n_nodes: usize,
    pub iterations: (usize, usize),
    pub checks: Vec<Check>,
    pub kernel_constants: KernelConstants,
    pub kappa: [f64; 3],
}

impl KernelReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Composition identity and boundary-gain sanity of an arbitrary table set.
/// The composition is recomputed from the tables rather than trusted.
pub fn check_kernel_set(kernels: &KernelSet) -> Vec<Check> {
    let finite = kernels.tables().iter().all(|t| t.is_finite());
    vec![
        Check {
            name: "tables finite".into(),
            value: if finite { 0.0 } else { 1.0 },
            tolerance: 0.0,
            passed: finite,
        },
        Check::at_most(
            "composition residual",
            kernels.probe_composition_residual(),
            COMPOSITION_CHECK,
        ),
    ]
}

/// Runs the kernel battery for `config`: composition identity, first-order
/// decay of the target residual between the grid and its half-resolution
/// coarsening, and the zero-coupling limit.
pub fn verify_kernels(config: &SimConfig, kernels: Option<&KernelSet>) -> Result<KernelReport> {
    let coeffs = config.coeffs()?;
    let owned;
    let kernels = match kernels {
        Some(k) => k,
        None => {
            owned = KernelSet::solve_on(&coeffs)?;
            &owned
        }
    };
    let mut checks = check_kernel_set(kernels);

    let fine = target_residual_probe(kernels, &coeffs)?.max();
    let n = coeffs.grid.len();
    if n >= 21 && (n - 1) % 2 == 0 {
        let coarse_grid = crate::numerics::Grid1D::new(coeffs.ell, (n - 1) / 2 + 1)?;
        let coarse_coeffs = crate::model::linearize(&config.params(), &config.steady()?, coarse_grid)?;
        let coarse_kernels = KernelSet::solve_on(&coarse_coeffs)?;
        let coarse = target_residual_probe(&coarse_kernels, &coarse_coeffs)?.max();
        let ratio = fine / coarse;
        checks.push(Check {
            name: "target residual refinement ratio".into(),
            value: ratio,
            tolerance: 0.65,
            passed: (0.35..=0.65).contains(&ratio),
        });
    }
    checks.push(Check::at_most("target residual", fine, 0.1));

    let free = coeffs.without_coupling();
    let zero = KernelSet::solve_on(&free)?;
    let largest = zero.tables().iter().map(|t| t.sup_norm()).fold(0.0, f64::max);
    checks.push(Check::at_most("zero-coupling kernels", largest, 0.0));

    let gains = kernels.gain_slice();
    let kc = kernel_constants(&gains, &coeffs);
    let consts = derive_constants(&config.trigger, &kc, &coeffs)?;
    Ok(KernelReport {
        n_nodes: n,
        iterations: kernels.iterations,
        checks,
        kernel_constants: kc,
        kappa: [consts.kappa1, consts.kappa2, consts.kappa3],
    })
}

/// Percent changes of each summary against the open-loop row with the same
/// scenario name, when one is present.
pub fn percent_deltas(rows: &[Summary]) -> Vec<Option<[f64; 3]>> {
    rows.iter()
        .map(|r| {
            rows.iter()
                .find(|b| b.name == r.name && b.controller == Controller::OpenLoop.to_string())
                .map(|b| {
                    let m = |s: &Summary| Metrics {
                        j_ttt: s.j_ttt,
                        j_fuel: s.j_fuel,
                        j_d: s.j_d,
                    };
                    m(r).percent_delta(&m(b))
                })
        })
        .collect()
}

/// Renders summaries as an aligned text table.
pub fn render_table(rows: &[Summary]) -> String {
    let deltas = percent_deltas(rows);
    let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:+.2}%"));
    let mut out = format!(
        "{:<12} {:<11} {:>8} {:>6} {:>10} {:>11} {:>11} {:>11} {:>9} {:>9} {:>9} {:>10} {:>4}\n",
        "scenario",
        "controller",
        "c",
        "N_t",
        "dwell[min]",
        "J_TTT",
        "J_fuel",
        "J_D",
        "dTTT",
        "dfuel",
        "dD",
        "|x|T/|x|0",
        "ok"
    );
    for (r, d) in rows.iter().zip(deltas) {
        out.push_str(&format!(
            "{:<12} {:<11} {:>8} {:>6} {:>10.4} {:>11.4e} {:>11.4e} {:>11.4e} {:>9} {:>9} {:>9} {:>10.3e} {:>4}\n",
            r.name,
            r.controller,
            format!("{}", r.c),
            r.n_t,
            r.mean_dwell_min,
            r.j_ttt,
            r.j_fuel,
            r.j_d,
            pct(d.map(|x| x[0])),
            pct(d.map(|x| x[1])),
            pct(d.map(|x| x[2])),
            r.norm_ratio,
            if r.invariants_ok { "yes" } else { "NO" },
        ));
    }
    out
}

/// Collects every `summary.csv` below `dir`.
pub fn collect_summaries(dir: &Path) -> Result<Vec<Summary>> {
    let mut rows = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<_> = std::fs::read_dir(&d)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == "summary.csv") {
                rows.extend(crate::io::read_summaries(&p)?);
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.name.as_str(), a.controller.as_str())
            .cmp(&(b.name.as_str(), b.controller.as_str()))
            .then(a.c.total_cmp(&b.c))
    });
    Ok(rows)
}
