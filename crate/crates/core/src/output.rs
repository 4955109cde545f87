//! Plain-text run outputs: a time-series file, per-snapshot nodal field
//! files, the verification report (table + machine-readable key-values), the
//! mesh, and a config echo. Values print with 17 significant digits so a
//! read-back trajectory reproduces the run bit-for-bit.

use crate::assembly::GradMode;
use crate::error::{Result, SimError};
use crate::material::{MaterialParams, PotentialW};
use crate::mesh::Mesh;
use crate::stepper::{State, StepDiagnostics, Trajectory};
use crate::verify::{total_energy, VerificationReport};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| SimError::io(path.display().to_string(), e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| SimError::io(path.display().to_string(), e))
}

fn snapshot_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("snap_{k:05}.tsv"))
}

/// Writes the full output set for a run. Returns the list of files written.
#[allow(clippy::too_many_arguments)]
pub fn write_outputs(
    dir: &Path,
    config_echo: &str,
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    grad_mode: GradMode,
    traj: &Trajectory,
    report: Option<&VerificationReport>,
    snapshot_every: usize,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir.display().to_string(), e))?;
    let mut written = Vec::new();

    let cfg_path = dir.join("config.toml");
    write_file(&cfg_path, config_echo)?;
    written.push(cfg_path);

    let mesh_path = dir.join("mesh.txt");
    mesh.write_file(&mesh_path)?;
    written.push(mesh_path);

    // time series
    let mut series = String::from(
        "k\tt\ttau\tenergy\tmin_theta\tmax_theta\tmin_chi\tmax_chi\touter_iters\theat_iters\tchi_iters\tm_used\n",
    );
    for (k, s) in traj.states.iter().enumerate() {
        let e = total_energy(
            mesh, params, potential, grad_mode, &s.theta, &s.u, &s.v, &s.chi,
        );
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            series,
            "{k}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}\t{}\t{}\t{}\t{:.17e}",
            s.time,
            s.diag.tau,
            e,
            min(&s.theta),
            max(&s.theta),
            min(&s.chi),
            max(&s.chi),
            s.diag.outer_iterations,
            s.diag.heat_iterations,
            s.diag.chi_iterations,
            s.diag.m_used,
        );
    }
    let series_path = dir.join("series.tsv");
    write_file(&series_path, &series)?;
    written.push(series_path);

    // snapshots
    let d = mesh.dim;
    let snap_step = snapshot_every.max(1);
    for (k, s) in traj.states.iter().enumerate() {
        if k % snap_step != 0 && k != traj.states.len() - 1 {
            continue;
        }
        let mut text = String::new();
        let coord_cols = if d == 1 { "x" } else { "x\ty" };
        let ucols = if d == 1 {
            "u_x\tv_x"
        } else {
            "u_x\tu_y\tv_x\tv_y"
        };
        let _ = writeln!(text, "node\t{coord_cols}\ttheta\t{ucols}\tchi\txi");
        for i in 0..mesh.n_nodes() {
            let c = mesh.node_coord(i);
            let mut row = format!("{i}\t{:.17e}", c[0]);
            if d == 2 {
                let _ = write!(row, "\t{:.17e}", c[1]);
            }
            let _ = write!(row, "\t{:.17e}", s.theta[i]);
            for comp in 0..d {
                let _ = write!(row, "\t{:.17e}", s.u[d * i + comp]);
            }
            for comp in 0..d {
                let _ = write!(row, "\t{:.17e}", s.v[d * i + comp]);
            }
            let _ = write!(row, "\t{:.17e}\t{:.17e}", s.chi[i], s.xi[i]);
            let _ = writeln!(text, "{row}");
        }
        let p = snapshot_path(dir, k);
        write_file(&p, &text)?;
        written.push(p);
    }

    if let Some(rep) = report {
        let rp = dir.join("report.txt");
        write_file(&rp, &rep.to_table())?;
        written.push(rp);
        let rk = dir.join("report.kv");
        write_file(&rk, &rep.to_key_values())?;
        written.push(rk);
    }
    Ok(written)
}

/// Reads the states back from an output directory (config echo and step data
/// are rebuilt by the caller from `config.toml`).
pub fn read_trajectory(dir: &Path, mesh: &Mesh) -> Result<Vec<State>> {
    let series = read_file(&dir.join("series.tsv"))?;
    let d = mesh.dim;
    let n = mesh.n_nodes();
    let mut states = Vec::new();
    for line in series.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 12 {
            return Err(SimError::Parse(format!("bad series row: {line}")));
        }
        let k: usize = cols[0]
            .parse()
            .map_err(|_| SimError::Parse("bad series index".into()))?;
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| SimError::Parse(format!("bad float {s}")))
        };
        let time = parse(cols[1])?;
        let tau = parse(cols[2])?;
        let m_used = parse(cols[11])?;
        let snap = read_file(&snapshot_path(dir, k))?;
        let mut theta = vec![0.0; n];
        let mut u = vec![0.0; d * n];
        let mut v = vec![0.0; d * n];
        let mut chi = vec![0.0; n];
        let mut xi = vec![0.0; n];
        for row in snap.lines().skip(1) {
            if row.trim().is_empty() {
                continue;
            }
            let c: Vec<&str> = row.split('\t').collect();
            let expected = 1 + d + 1 + 2 * d + 2;
            if c.len() != expected {
                return Err(SimError::Parse(format!("bad snapshot row: {row}")));
            }
            let i: usize = c[0]
                .parse()
                .map_err(|_| SimError::Parse("bad node index".into()))?;
            let base = 1 + d; // skip coords
            theta[i] = parse(c[base])?;
            for comp in 0..d {
                u[d * i + comp] = parse(c[base + 1 + comp])?;
                v[d * i + comp] = parse(c[base + 1 + d + comp])?;
            }
            chi[i] = parse(c[base + 1 + 2 * d])?;
            xi[i] = parse(c[base + 2 + 2 * d])?;
        }
        states.push(State {
            time,
            theta,
            u,
            v,
            chi,
            xi,
            zeta: vec![0.0; n],
            diag: StepDiagnostics {
                tau,
                m_used,
                outer_iterations: cols[8].parse().unwrap_or(0),
                heat_iterations: cols[9].parse().unwrap_or(0),
                chi_iterations: cols[10].parse().unwrap_or(0),
                fp_increment: 0.0,
            },
        });
    }
    if states.is_empty() {
        return Err(SimError::Parse("empty trajectory".into()));
    }
    Ok(states)
}
