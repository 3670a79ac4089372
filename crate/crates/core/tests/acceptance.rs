//! Acceptance report: one PASS/FAIL line per criterion, with the measured
//! values next to the pinned tolerances.
//!
//! The report always exits successfully so that the unit and integration
//! suites stay usable; set `ARZ_ETC_STRICT=1` to turn any failed criterion
//! into a non-zero exit status.

use std::time::Instant;

use arz_etc::analysis::lyapunov_v1;
use arz_etc::config::{Controller, SimConfig};
use arz_etc::control::continuous_u;
use arz_etc::kernels::{target_residual_probe, KernelSet};
use arz_etc::plant::initial_profile;
use arz_etc::runner::{first_update_step, run, sweep, Setup, SimResult};
use arz_etc::triggers::{Family, Mechanism, TriggerKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const R_EXACT: f64 = 112.5;
const R_TOL: f64 = 1e-9;
const B_BAND: (f64, f64) = (1.28, 1.31);
const THETA_M_REF: f64 = 1.8705e6;
const THETA_M_REL: f64 = 0.01;
const KAPPA_REF: [f64; 3] = [280.76, 807.29, 2416.5];
const KAPPA_REL: f64 = 0.10;
const TAU_D_REF: f64 = 4.7305e-6;
const TAU_D_REL: f64 = 0.25;

const COMPOSITION_MAX: f64 = 1e-3;
const REFINEMENT_BAND: (f64, f64) = (0.4, 0.65);

const OPEN_LOOP_REF: [f64; 3] = [4.41e5, 1.11e4, 4.14e5];
const OPEN_LOOP_REL: f64 = 0.10;

const R_CETC_NT: (usize, usize) = (34, 52);
const R_CETC_DWELL: (f64, f64) = (1.09, 1.63);
const R_CETC_JD: (f64, f64) = (-90.0, -70.0);

const P_CETC_NT: (usize, usize) = (13, 21);
const P_CETC_DWELL_FACTOR: f64 = 2.5;

const PETC_NT_SLACK: usize = 2;

const STC_NT_REF: f64 = 4420.0;
const STC_DWELL_REF: f64 = 0.0137;
const STC_REL: f64 = 0.25;

const CONVERGENCE_RATIO: f64 = 1e-2;
const COMPARISON_SNAPSHOTS: usize = 200;
const COMPARISON_MAX_STEPS: u64 = 1500;

const SWEEP_C: [f64; 6] = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0];
const SWEEP_SLACK: usize = 1;

const BARRIER_C: f64 = 10.0;

struct Report {
    passed: usize,
    total: usize,
}

impl Report {
    fn criterion(&mut self, id: u32, name: &str, checks: &[(bool, String)]) {
        let ok = checks.iter().all(|(p, _)| *p);
        self.total += 1;
        self.passed += ok as usize;
        println!("[{}] {id}. {name}", if ok { "PASS" } else { "FAIL" });
        for (p, detail) in checks {
            println!("       {} {detail}", if *p { "ok  " } else { "FAIL" });
        }
    }
}

fn within_rel(value: f64, reference: f64, rel: f64) -> bool {
    (value - reference).abs() <= rel * reference.abs()
}

fn event(f: Family, m: Mechanism) -> Controller {
    Controller::Event(TriggerKind::new(f, m))
}

fn runs(cfg: &SimConfig, setup: &Setup, jobs: &[(Controller, f64)]) -> Vec<Result<SimResult, String>> {
    use rayon::prelude::*;
    jobs.par_iter()
        .map(|&(ctl, c)| run(&cfg.with_controller(ctl, c), setup).map_err(|e| e.to_string()))
        .collect()
}

fn check_run<'a>(
    label: &str,
    r: &'a Result<SimResult, String>,
    checks: &mut Vec<(bool, String)>,
) -> Option<&'a SimResult> {
    match r {
        Ok(r) => Some(r),
        Err(e) => {
            checks.push((false, format!("{label} failed: {e}")));
            None
        }
    }
}

fn main() {
    let started = Instant::now();
    let mut report = Report { passed: 0, total: 0 };

    let paper = SimConfig::preset("paper60min").expect("paper preset");
    let setup = Setup::prepare(&paper).expect("kernel solve on the paper grid");
    let consts = setup.constants;

    // 1
    let mut c1 = vec![
        (
            (consts.r - R_EXACT).abs() <= R_TOL,
            format!("r = {:.12} (exact {R_EXACT})", consts.r),
        ),
        (
            (B_BAND.0..=B_BAND.1).contains(&consts.b),
            format!("b = {:.4} in [{}, {}]", consts.b, B_BAND.0, B_BAND.1),
        ),
        (
            within_rel(consts.theta_m, THETA_M_REF, THETA_M_REL),
            format!(
                "theta_m = {:.5e} vs {THETA_M_REF:.5e} (±{:.0}%)",
                consts.theta_m,
                THETA_M_REL * 100.0
            ),
        ),
        (
            within_rel(consts.tau_d, TAU_D_REF, TAU_D_REL),
            format!(
                "tau_d = {:.5e} h vs {TAU_D_REF:.5e} (±{:.0}%)",
                consts.tau_d,
                TAU_D_REL * 100.0
            ),
        ),
    ];
    for (i, (k, r)) in [consts.kappa1, consts.kappa2, consts.kappa3]
        .iter()
        .zip(KAPPA_REF)
        .enumerate()
    {
        c1.push((
            within_rel(*k, r, KAPPA_REL),
            format!("kappa{} = {k:.2} vs {r} (±{:.0}%)", i + 1, KAPPA_REL * 100.0),
        ));
    }
    report.criterion(1, "constants regression", &c1);

    // 2
    let composition = setup.kernels.probe_composition_residual();
    let fine = target_residual_probe(&setup.kernels, &setup.coeffs).map(|r| r.max());
    let mut half = paper.clone();
    half.grid.dx = paper.grid.dx * 2.0;
    let coarse = half
        .coeffs()
        .and_then(|c| KernelSet::solve_on(&c).and_then(|k| target_residual_probe(&k, &c)))
        .map(|r| r.max());
    let zero = KernelSet::solve_on(&setup.coeffs.without_coupling())
        .map(|k| k.tables().iter().map(|t| t.sup_norm()).fold(0.0, f64::max));
    let mut c2 = vec![(
        composition <= COMPOSITION_MAX,
        format!(
            "composition residual {composition:.3e} <= {COMPOSITION_MAX:.0e} at n = {}",
            setup.kernels.grid.n_nodes
        ),
    )];
    match (fine, coarse) {
        (Ok(f), Ok(c)) => c2.push((
            (REFINEMENT_BAND.0..=REFINEMENT_BAND.1).contains(&(f / c)),
            format!(
                "target residual {c:.3e} -> {f:.3e} under halving dx, ratio {:.3} in [{}, {}]",
                f / c,
                REFINEMENT_BAND.0,
                REFINEMENT_BAND.1
            ),
        )),
        (f, c) => c2.push((false, format!("target residual probe failed: {f:?} / {c:?}"))),
    }
    match zero {
        Ok(z) => c2.push((z == 0.0, format!("zero-coupling kernels sup-norm {z:e}"))),
        Err(e) => c2.push((false, format!("zero-coupling solve failed: {e}"))),
    }
    report.criterion(2, "kernel certification", &c2);

    // full-resolution runs
    let rc = event(Family::Regular, Mechanism::Continuous);
    let pc = event(Family::Barrier, Mechanism::Continuous);
    let rp = event(Family::Regular, Mechanism::Periodic);
    let pp = event(Family::Barrier, Mechanism::Periodic);
    let rs = event(Family::Regular, Mechanism::SelfTriggered);
    let ps = event(Family::Barrier, Mechanism::SelfTriggered);
    let mut jobs = vec![
        (Controller::OpenLoop, 0.0),
        (rc, 0.0),
        (rp, 0.0),
        (pp, BARRIER_C),
        (rs, 0.0),
        (ps, BARRIER_C),
    ];
    jobs.extend(SWEEP_C.iter().map(|&c| (pc, c)));
    let results = runs(&paper, &setup, &jobs);
    let [open, r_cetc, r_petc, p_petc, r_stc, p_stc, sweep_rows @ ..] = &results[..] else {
        unreachable!("job list has fixed length")
    };
    let p_cetc = &sweep_rows[SWEEP_C.iter().position(|&c| c == BARRIER_C).expect("c = 10 in sweep")];

    // 3
    let mut c3 = Vec::new();
    let open = check_run("open-loop", open, &mut c3);
    if let Some(o) = open {
        let m = [o.metrics.j_ttt, o.metrics.j_fuel, o.metrics.j_d];
        for ((name, v), r) in ["J_TTT", "J_fuel", "J_D"].iter().zip(m).zip(OPEN_LOOP_REF) {
            c3.push((
                within_rel(v, r, OPEN_LOOP_REL),
                format!("{name} = {v:.4e} vs {r:.3e} (±{:.0}%)", OPEN_LOOP_REL * 100.0),
            ));
        }
    }
    report.criterion(3, "open-loop metrics", &c3);

    // 4
    let mut c4 = Vec::new();
    let r_cetc = check_run("R-CETC", r_cetc, &mut c4);
    if let Some(r) = r_cetc {
        let n = r.stats.n_t;
        c4.push((
            (R_CETC_NT.0..=R_CETC_NT.1).contains(&n),
            format!("N_t = {n} in [{}, {}]", R_CETC_NT.0, R_CETC_NT.1),
        ));
        c4.push((
            (R_CETC_DWELL.0..=R_CETC_DWELL.1).contains(&r.stats.mean_dwell),
            format!(
                "mean dwell {:.4} min in [{}, {}]",
                r.stats.mean_dwell, R_CETC_DWELL.0, R_CETC_DWELL.1
            ),
        ));
        c4.push((
            r.invariants.increase_t.is_none(),
            format!(
                "V non-increasing at every sample (first rise: {:?})",
                r.invariants.increase_t
            ),
        ));
        if let Some(o) = open {
            let jd = r.metrics.percent_delta(&o.metrics)[2];
            c4.push((
                (R_CETC_JD.0..=R_CETC_JD.1).contains(&jd),
                format!("J_D change {jd:+.2}% in [{}%, {}%]", R_CETC_JD.0, R_CETC_JD.1),
            ));
        }
    }
    report.criterion(4, "R-CETC row", &c4);

    // 5
    let mut c5 = Vec::new();
    let p_cetc = check_run("P-CETC", p_cetc, &mut c5);
    if let Some(p) = p_cetc {
        let n = p.stats.n_t;
        c5.push((
            (P_CETC_NT.0..=P_CETC_NT.1).contains(&n),
            format!("N_t = {n} in [{}, {}] at c = {BARRIER_C}", P_CETC_NT.0, P_CETC_NT.1),
        ));
        if let Some(r) = r_cetc {
            c5.push((
                p.stats.mean_dwell >= P_CETC_DWELL_FACTOR * r.stats.mean_dwell,
                format!(
                    "mean dwell {:.4} min >= {P_CETC_DWELL_FACTOR} x {:.4} min",
                    p.stats.mean_dwell, r.stats.mean_dwell
                ),
            ));
        }
        c5.push((
            p.invariants.barrier_breach_t.is_none(),
            format!(
                "V below the barrier (max ratio {:.9}, first breach {:?})",
                p.invariants.max_barrier_ratio, p.invariants.barrier_breach_t
            ),
        ));
        c5.push((
            p.invariants.increasing_intervals > 0,
            format!(
                "{} sample intervals with increasing V",
                p.invariants.increasing_intervals
            ),
        ));
    }
    report.criterion(5, "P-CETC row", &c5);

    // 6
    let mut c6 = Vec::new();
    let stride = (paper.trigger.h / paper.grid.dt).round() as u64;
    for (label, r) in [("R-PETC", r_petc), ("P-PETC", p_petc)] {
        if let Some(r) = check_run(label, r, &mut c6) {
            let off = r.events.iter().filter(|e| e.step % stride != 0).count();
            c6.push((
                off == 0,
                format!("{label}: {} events, {off} off the h-grid", r.events.len()),
            ));
        }
    }
    if let (Ok(rp), Some(rc)) = (r_petc, r_cetc) {
        let (a, b) = (rp.stats.n_t, rc.stats.n_t);
        c6.push((
            a.abs_diff(b) <= PETC_NT_SLACK,
            format!("R-PETC N_t = {a} within ±{PETC_NT_SLACK} of R-CETC N_t = {b}"),
        ));
    }
    report.criterion(6, "periodic sampling grid", &c6);

    // 7
    let mut c7 = Vec::new();
    for (label, r) in [("R-STC", r_stc), ("P-STC", p_stc)] {
        if let Some(r) = check_run(label, r, &mut c7) {
            let tau_d = r.constants.tau_d;
            let min_gap = r.invariants.min_dwell.unwrap_or(f64::INFINITY);
            c7.push((
                min_gap >= tau_d,
                format!("{label}: shortest gap {min_gap:.4e} h >= tau_d {tau_d:.4e} h"),
            ));
        }
    }
    if let Ok(r) = r_stc {
        let n = r.stats.n_t as f64;
        c7.push((
            within_rel(n, STC_NT_REF, STC_REL),
            format!("R-STC N_t = {n} vs {STC_NT_REF} (±{:.0}%)", STC_REL * 100.0),
        ));
        c7.push((
            within_rel(r.stats.mean_dwell, STC_DWELL_REF, STC_REL),
            format!(
                "R-STC mean dwell {:.4} min vs {STC_DWELL_REF} (±{:.0}%)",
                r.stats.mean_dwell,
                STC_REL * 100.0
            ),
        ));
    }
    report.criterion(7, "self-triggered rows", &c7);

    // 8
    let coarse_cfg = SimConfig::preset("ci-coarse").expect("coarse preset");
    let coarse_setup = Setup::prepare(&coarse_cfg).expect("kernel solve on the coarse grid");
    let kinds: Vec<Controller> = TriggerKind::ALL.into_iter().map(Controller::Event).collect();
    let mut c8 = Vec::new();
    let mut by_kind = Vec::new();
    for row in sweep(&coarse_cfg, &coarse_setup, &kinds, &[BARRIER_C]) {
        match row.outcome {
            Ok(r) => by_kind.push(r),
            Err(e) => c8.push((false, format!("{} failed: {e}", row.controller))),
        }
    }
    for r in &by_kind {
        let label = r.controller.to_string();
        c8.push((
            r.invariants.gamma_breach_t.is_none(),
            format!(
                "{label}: max Gamma/(theta m) = {:.3e} (first breach {:?})",
                r.invariants.max_gamma_ratio, r.invariants.gamma_breach_t
            ),
        ));
        c8.push((
            r.invariants.min_m > 0.0,
            format!("{label}: min m = {:.3e}", r.invariants.min_m),
        ));
        c8.push((
            r.norm_ratio() <= CONVERGENCE_RATIO,
            format!(
                "{label}: |x|(T)/|x|(0) = {:.3e} <= {CONVERGENCE_RATIO:e}",
                r.norm_ratio()
            ),
        ));
    }
    for mech in [Mechanism::Continuous, Mechanism::Periodic, Mechanism::SelfTriggered] {
        let regular = by_kind
            .iter()
            .find(|r| r.controller == event(Family::Regular, mech))
            .map(|r| &r.events);
        let collapsed = run(
            &coarse_cfg.with_controller(event(Family::Barrier, mech), 0.0),
            &coarse_setup,
        );
        let same = match (regular, &collapsed) {
            (Some(a), Ok(b)) => {
                let bits = |e: &arz_etc::runner::EventRecord| (e.step, e.t.to_bits(), e.u_k.to_bits());
                a.iter().map(bits).eq(b.events.iter().map(bits))
            }
            _ => false,
        };
        c8.push((
            same,
            format!("{mech:?}: barrier events at c = 0 equal regular events bit for bit"),
        ));
    }
    let (fired_in_order, tried) = comparison_property(&coarse_cfg, &coarse_setup);
    c8.push((
        fired_in_order == tried,
        format!("regular fired no later than barrier in {fired_in_order}/{tried} matched snapshots"),
    ));
    report.criterion(8, "property suite (coarse grid)", &c8);

    // 9
    let mut c9 = Vec::new();
    let counts: Vec<Option<usize>> = sweep_rows
        .iter()
        .map(|r| r.as_ref().ok().map(|r| r.stats.n_t))
        .collect();
    let shown: Vec<String> = SWEEP_C
        .iter()
        .zip(&counts)
        .map(|(c, n)| format!("c={c}: {}", n.map_or("failed".into(), |n| n.to_string())))
        .collect();
    let monotone = counts
        .windows(2)
        .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b <= a + SWEEP_SLACK));
    c9.push((
        monotone,
        format!(
            "P-CETC N_t non-increasing in c within ±{SWEEP_SLACK}: {}",
            shown.join(", ")
        ),
    ));
    report.criterion(9, "sweep shape", &c9);

    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        report.passed,
        report.total,
        started.elapsed().as_secs_f64()
    );
    if std::env::var_os("ARZ_ETC_STRICT").is_some() && report.passed != report.total {
        std::process::exit(1);
    }
}

/// Resumes R-CETC and P-CETC from identical random snapshots with `W ≥ 0`
/// and counts the snapshots in which the regular trigger fires first or
/// simultaneously.
fn comparison_property(base: &SimConfig, setup: &Setup) -> (usize, usize) {
    let r_cfg = base.with_controller(event(Family::Regular, Mechanism::Continuous), BARRIER_C);
    let p_cfg = base.with_controller(event(Family::Barrier, Mechanism::Continuous), BARRIER_C);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ordered = 0;
    for _ in 0..COMPARISON_SNAPSHOTS {
        let mut cfg = base.clone();
        cfg.plant.amplitude = rng.gen_range(0.01..0.2);
        cfg.plant.half_waves = rng.gen_range(0.5..6.0);
        let state = initial_profile(&cfg.initial_condition(), cfg.plant.mode, &setup.coeffs, &setup.steady)
            .expect("initial profile");
        let (w, v) = state.riemann(&setup.coeffs, &setup.steady).expect("riemann");
        let u = continuous_u(&w, &v, &setup.gains, &setup.coeffs).expect("feedback");
        let u_k = u * (1.0 + rng.gen_range(-0.1..0.1));
        let m = 10f64.powf(rng.gen_range(-4.0..0.0));
        let (a, b) = setup.kernels.to_target(&w, &v).expect("target");
        let v1 = lyapunov_v1(&a, &b, &setup.coeffs, &base.trigger);
        let v0 = (v1 + m) * (1.0 + rng.gen_range(0.0..2.0));
        let r = first_update_step(&r_cfg, setup, state.clone(), u_k, m, v0, 0, COMPARISON_MAX_STEPS);
        let p = first_update_step(&p_cfg, setup, state, u_k, m, v0, 0, COMPARISON_MAX_STEPS);
        let in_order = match (r, p) {
            (Ok(Some(r)), Ok(Some(p))) => r <= p,
            (Ok(Some(_)), Ok(None)) | (Ok(None), Ok(None)) => true,
            _ => false,
        };
        ordered += in_order as usize;
    }
    (ordered, COMPARISON_SNAPSHOTS)
}
