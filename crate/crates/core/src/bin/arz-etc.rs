use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use arz_etc::config::{Controller, SimConfig};
use arz_etc::io::{run_dir_name, write_run, write_summaries};
use arz_etc::runner::{collect_summaries, render_table, run, sweep, verify_kernels, Setup, SimResult};
use arz_etc::triggers::TriggerKind;
use arz_etc::Result;

/// Environment variable naming the default output root.
const OUT_ENV: &str = "ARZ_ETC_OUT";
/// Exit status when a run completes with a violated closed-loop property.
const EXIT_BREACH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "arz-etc",
    version,
    about = "Event-triggered boundary control of linearized ARZ traffic"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Preset name (paper60min, ci-coarse) or path to a TOML configuration.
    config: String,
    /// Output root; defaults to $ARZ_ETC_OUT, then the configured directory, then ./results.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the simulated horizon [h].
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed loop and write its trace, events and summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// Controller: open-loop, continuous or a trigger kind such as R-CETC.
        #[arg(long)]
        controller: Option<Controller>,
        /// Resource-aware parameter of the barrier triggers.
        #[arg(long)]
        c: Option<f64>,
    },
    /// Run every (controller, c) combination and print the summary table.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated values of c.
        #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.1,1,10,100")]
        c: Vec<f64>,
        /// Comma-separated controllers; an open-loop baseline is always added.
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<Controller>>,
    },
    /// Check the kernel tables for a configuration.
    VerifyKernels {
        #[command(flatten)]
        common: Common,
    },
    /// Print the summaries found below a results directory.
    Table { dir: PathBuf },
}

fn load(common: &Common) -> Result<SimConfig> {
    let mut cfg = SimConfig::load(&common.config)?;
    if let Some(h) = common.horizon {
        cfg.grid.horizon = h;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn out_root(common: &Common, cfg: &SimConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn describe(result: &SimResult, dir: &Path) {
    let s = result.summary();
    println!(
        "{} {} c={}: N_t={} mean dwell={:.4} min, J=({:.4e}, {:.4e}, {:.4e}), |x|T/|x|0={:.3e}, {:.1}s -> {}",
        s.name,
        s.controller,
        s.c,
        s.n_t,
        s.mean_dwell_min,
        s.j_ttt,
        s.j_fuel,
        s.j_d,
        s.norm_ratio,
        s.wall_clock_s,
        dir.display()
    );
    if !result.sampling_period_admissible {
        println!(
            "  note: sampling period exceeds the minimum dwell time {:.4e} h",
            result.constants.tau_d
        );
    }
    for b in result.invariants.breaches() {
        println!("  breach: {b}");
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, controller, c } => {
            let mut cfg = load(&common)?;
            if let Some(ctl) = controller {
                cfg.control.controller = ctl;
            }
            if let Some(c) = c {
                cfg.trigger.c = c;
            }
            let setup = Setup::prepare(&cfg)?;
            let result = run(&cfg, &setup)?;
            let dir = out_root(&common, &cfg).join(&cfg.name).join(run_dir_name(&result));
            write_run(&dir, &result)?;
            describe(&result, &dir);
            Ok(result.invariants.ok())
        }
        Command::Sweep { common, c, kinds } => {
            let cfg = load(&common)?;
            let mut controllers = vec![Controller::OpenLoop];
            match kinds {
                Some(list) => controllers.extend(list.into_iter().filter(|k| *k != Controller::OpenLoop)),
                None => controllers.extend(TriggerKind::ALL.into_iter().map(Controller::Event)),
            }
            let setup = Setup::prepare(&cfg)?;
            let root = out_root(&common, &cfg).join(&cfg.name);
            let mut ok = true;
            let mut rows = Vec::new();
            for row in sweep(&cfg, &setup, &controllers, &c) {
                match row.outcome {
                    Ok(result) => {
                        let dir = root.join(run_dir_name(&result));
                        write_run(&dir, &result)?;
                        ok &= result.invariants.ok();
                        for b in result.invariants.breaches() {
                            println!("{} c={}: breach: {b}", row.controller, row.c);
                        }
                        rows.push(result.summary());
                    }
                    Err(e) => {
                        ok = false;
                        println!("{} c={}: failed: {e}", row.controller, row.c);
                    }
                }
            }
            std::fs::create_dir_all(&root)?;
            write_summaries(&root.join("sweep.csv"), &rows)?;
            print!("{}", render_table(&rows));
            Ok(ok)
        }
        Command::VerifyKernels { common } => {
            let cfg = load(&common)?;
            let report = verify_kernels(&cfg, None)?;
            println!(
                "kernel grid: {} nodes, Picard iterations {:?}",
                report.n_nodes, report.iterations
            );
            for c in &report.checks {
                println!(
                    "{} {:<34} value {:.4e} tolerance {:.4e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance
                );
            }
            println!(
                "kappa = ({:.3}, {:.3}, {:.3}), eps0 = {:.4}",
                report.kappa[0], report.kappa[1], report.kappa[2], report.kernel_constants.eps0
            );
            Ok(report.passed())
        }
        Command::Table { dir } => {
            let rows = collect_summaries(&dir)?;
            print!("{}", render_table(&rows));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_BREACH),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
