use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thermophase::config::{parse_config, Instance, StudyConfig};
use thermophase::error::{Result, SimError};
use thermophase::stepper::{local_means_interval, run_simulation, Trajectory};
use thermophase::studies::{
    delta_study, manufactured_heat_study, regularization_study, tau_refinement_study,
    ManufacturedHeat, StudySetup,
};
use thermophase::verify::verify_trajectory;

/// Coupled temperature / displacement / phase-damage simulator with a
/// verification harness certifying the discrete energy and entropy
/// inequalities on every run.
#[derive(Parser)]
#[command(name = "thermophase", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, verify, and write outputs; exits 0 iff all checks pass.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config; THERMOPHASE_OUT wins over both).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a written trajectory; exits 0 iff all checks pass.
    Verify { dir: PathBuf },
    /// Refinement / delta / regularization / manufactured study per the
    /// config's [study] block.
    Study {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(inst: &Instance, flag: Option<PathBuf>) -> PathBuf {
    if let Ok(env) = std::env::var("THERMOPHASE_OUT") {
        return PathBuf::from(env);
    }
    flag.unwrap_or_else(|| PathBuf::from(&inst.config.output.directory))
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text =
        std::fs::read_to_string(path).map_err(|e| SimError::io(path.display().to_string(), e))?;
    let cfg = parse_config(&text)?;
    cfg.instantiate()
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> Result<bool> {
    let inst = load_instance(config)?;
    let sources = inst.sources();
    let traj = run_simulation(
        &inst.mesh,
        &inst.params,
        &inst.potential,
        &sources,
        &inst.init,
        inst.horizon,
        inst.tau,
        &inst.run_opts,
    )?;
    let report = verify_trajectory(
        &inst.mesh,
        &inst.params,
        &inst.potential,
        inst.run_opts.grad_mode,
        &traj,
        &inst.verify_opts,
    )?;
    let dir = out_dir(&inst, out);
    thermophase::output::write_outputs(
        &dir,
        &inst.config.to_toml(),
        &inst.mesh,
        &inst.params,
        &inst.potential,
        inst.run_opts.grad_mode,
        &traj,
        Some(&report),
        inst.config.output.snapshot_every,
    )?;
    print!("{}", report.to_table());
    println!("outputs written to {}", dir.display());
    Ok(report.pass())
}

fn cmd_verify(dir: &Path) -> Result<bool> {
    let inst = load_instance(&dir.join("config.toml"))?;
    let states = thermophase::output::read_trajectory(dir, &inst.mesh)?;
    let sources = inst.sources();
    let mut step_data = Vec::new();
    for k in 1..states.len() {
        step_data.push(local_means_interval(
            &sources,
            states[k - 1].time,
            states[k].time,
        )?);
    }
    let traj = Trajectory { states, step_data };
    let report = verify_trajectory(
        &inst.mesh,
        &inst.params,
        &inst.potential,
        inst.run_opts.grad_mode,
        &traj,
        &inst.verify_opts,
    )?;
    print!("{}", report.to_table());
    Ok(report.pass())
}

fn cmd_study(config: &Path, out: Option<PathBuf>) -> Result<bool> {
    let inst = load_instance(config)?;
    let study = inst.config.study.clone().ok_or_else(|| {
        SimError::Config(vec!["study subcommand requires a [study] block".into()])
    })?;
    let dir = out_dir(&inst, out);
    std::fs::create_dir_all(&dir).map_err(|e| SimError::io(dir.display().to_string(), e))?;
    let setup = StudySetup {
        mesh: &inst.mesh,
        params: &inst.params,
        potential: &inst.potential,
        init: &inst.init,
        horizon: inst.horizon,
        tau0: inst.tau,
        run_opts: inst.run_opts,
        verify_opts: inst.verify_opts,
    };
    let make_sources = || inst.sources();
    let write_table = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| SimError::io(p.display().to_string(), e))
    };
    match study {
        StudyConfig::Tau { levels } => {
            let res = tau_refinement_study(&setup, &make_sources, levels)?;
            print!("{}", res.table.to_text());
            print!("{}", res.monitor_table.to_text());
            println!(
                "distances monotone: {} | monitors consistent: {} (common bound {:.4e})",
                res.distances_monotone, res.monitors_consistent, res.common_bound
            );
            write_table("study_tau.tsv", &res.table.to_text())?;
            write_table("study_tau_monitors.tsv", &res.monitor_table.to_text())?;
            Ok(res.distances_monotone && res.monitors_consistent)
        }
        StudyConfig::Delta { deltas } => {
            let res = delta_study(&setup, &make_sources, &deltas)?;
            print!("{}", res.table.to_text());
            println!("v-distance monotone: {}", res.v_distance_monotone);
            write_table("study_delta.tsv", &res.table.to_text())?;
            Ok(res.v_distance_monotone)
        }
        StudyConfig::Regularization { nus, m_values } => {
            let res = regularization_study(&setup, &make_sources, &nus, &m_values)?;
            print!("{}", res.table.to_text());
            println!(
                "nu monotone: {} | fixed-M runs match auto-M: {}",
                res.nu_monotone, res.m_match
            );
            write_table("study_regularization.tsv", &res.table.to_text())?;
            Ok(res.nu_monotone && res.m_match)
        }
        StudyConfig::Manufactured {
            conductivity,
            base,
            rate,
            horizon,
            tau_levels,
            h_nodes,
            fine_nodes,
            tiny_tau,
        } => {
            let mh = ManufacturedHeat {
                conductivity,
                base,
                rate,
            };
            let res =
                manufactured_heat_study(&mh, horizon, &tau_levels, &h_nodes, fine_nodes, tiny_tau)?;
            print!("{}", res.table.to_text());
            println!("tau orders: {:?}", res.tau_orders);
            println!("h orders:   {:?}", res.h_orders);
            write_table("study_manufactured.tsv", &res.table.to_text())?;
            let ok =
                res.tau_orders.iter().all(|&o| o >= 0.95) && res.h_orders.iter().all(|&o| o >= 1.9);
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config, out } => cmd_run(config, out.clone()),
        Command::Verify { dir } => cmd_verify(dir),
        Command::Study { config, out } => cmd_study(config, out.clone()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
