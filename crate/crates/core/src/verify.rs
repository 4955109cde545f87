//! Trajectory verification: evaluates, on discrete solutions, every
//! inequality the scheme guarantees — the total energy inequality, the
//! entropy inequality against a bank of nonnegative tests, the χ
//! energy-dissipation inequality, nodal constraints, and the one-sided
//! variational inequality — plus the a-priori norm monitors.
//!
//! All checks recompute their quantities from the stored states with the
//! same discrete forms the solvers use, so in exact arithmetic each
//! inequality holds exactly and observed defects are solver/floating-point
//! residue. Tolerances scale as 1e−8·(1 + |LHS| + |RHS|).

use crate::assembly::{
    assemble_heat_residual, assemble_weighted_form, boundary_lumped_weights,
    consistent_mass_vector, elastic_contraction, element_divergence, element_strain,
    gradient_energy, gradient_flow_residual, lumped_mass, scatter_to_nodes, Conductivity, GradMode,
    OperatorKind,
};
use crate::chi::tol_zero;
use crate::error::{Result, SimError};
use crate::material::{MaterialParams, PotentialW};
use crate::mesh::Mesh;
use crate::stepper::{heat_step_fields, observed_floor_constant, positivity_floor, Trajectory};
use nalgebra::DVector;
use std::fmt::Write as _;

pub const DEFAULT_TOL_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub name: String,
    pub worst_residual: f64,
    /// (step or pair anchor, test index) of the worst case.
    pub location: Option<(usize, usize)>,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub entries: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<28} {:>14} {:>11} {:>10}  {:<8} {}",
            "check", "worst_residual", "tolerance", "location", "status", "note"
        );
        for e in &self.entries {
            let loc = e
                .location
                .map(|(a, b)| format!("{a}/{b}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<28} {:>14.6e} {:>11.2e} {:>10}  {:<8} {}",
                e.name,
                e.worst_residual,
                e.tolerance,
                loc,
                if e.pass { "pass" } else { "FAIL" },
                e.note
            );
        }
        let _ = writeln!(s, "summary: {}", if self.pass() { "PASS" } else { "FAIL" });
        s
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(
                s,
                "check.{}.residual = {:.17e}\ncheck.{}.tolerance = {:.17e}\ncheck.{}.pass = {}",
                e.name, e.worst_residual, e.name, e.tolerance, e.name, e.pass
            );
        }
        let _ = writeln!(s, "summary.pass = {}", self.pass());
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub tol_factor: f64,
    /// Cap on the sampled step sub-grid for (s,t) pairs.
    pub subgrid_max: usize,
    /// Exponent in the α-weighted conduction monitor.
    pub alpha: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol_factor: DEFAULT_TOL_FACTOR,
            subgrid_max: 33,
            alpha: 0.75,
        }
    }
}

/// A nonnegative space-time test function: nodal shape × time profile.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub name: String,
    pub shape: Vec<f64>,
    pub profile: TimeProfile,
}

#[derive(Debug, Clone, Copy)]
pub enum TimeProfile {
    Constant,
    /// t / T (piecewise-linear in the discrete times, nonnegative).
    Ramp {
        horizon: f64,
    },
}

impl TimeProfile {
    fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Ramp { horizon } => {
                if *horizon <= 0.0 {
                    1.0
                } else {
                    t / horizon
                }
            }
        }
    }
}

impl TestFunction {
    fn at(&self, i: usize, t: f64) -> f64 {
        self.shape[i] * self.profile.eval(t)
    }
}

/// Bank of nonnegative P1 tests: constants, nodal hats, smooth bumps, with
/// constant and linear time profiles.
pub fn default_test_bank(mesh: &Mesh, horizon: f64) -> Vec<TestFunction> {
    let n = mesh.n_nodes();
    let hat = |center: usize| -> Vec<f64> {
        (0..n)
            .map(|i| if i == center { 1.0 } else { 0.0 })
            .collect()
    };
    let center = mesh.node_coord(n / 2);
    let bump: Vec<f64> = (0..n)
        .map(|i| {
            let c = mesh.node_coord(i);
            let d2 = (c[0] - center[0]).powi(2) + (c[1] - center[1]).powi(2);
            (-8.0 * d2).exp()
        })
        .collect();
    vec![
        TestFunction {
            name: "constant".into(),
            shape: vec![1.0; n],
            profile: TimeProfile::Constant,
        },
        TestFunction {
            name: "constant-ramp".into(),
            shape: vec![1.0; n],
            profile: TimeProfile::Ramp { horizon },
        },
        TestFunction {
            name: "hat-mid".into(),
            shape: hat(n / 2),
            profile: TimeProfile::Constant,
        },
        TestFunction {
            name: "hat-quarter".into(),
            shape: hat(n / 4),
            profile: TimeProfile::Constant,
        },
        TestFunction {
            name: "bump".into(),
            shape: bump.clone(),
            profile: TimeProfile::Constant,
        },
        TestFunction {
            name: "bump-ramp".into(),
            shape: bump,
            profile: TimeProfile::Ramp { horizon },
        },
    ]
}

/// Evenly spaced step indices including the endpoints, at most `max` points.
pub fn subgrid_indices(n_states: usize, max: usize) -> Vec<usize> {
    if n_states <= max {
        return (0..n_states).collect();
    }
    let mut idx: Vec<usize> = (0..max)
        .map(|k| (k as f64 / (max - 1) as f64 * (n_states - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

/// Discrete total energy of one state: thermal + kinetic + elastic +
/// gradient + potential. Uses the solver's own quadratures (lumped nodal
/// potential, consistent kinetic/elastic, elementwise gradient terms).
/// Returns +∞ for an infeasible χ.
pub fn total_energy(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    grad_mode: GradMode,
    theta: &[f64],
    u: &[f64],
    v: &[f64],
    chi: &[f64],
) -> f64 {
    let lm = lumped_mass(mesh);
    let tz = tol_zero(chi);
    let mut e = 0.0;
    for i in 0..mesh.n_nodes() {
        if !potential.beta_hat.feasible(chi[i]) && chi[i] < -tz {
            return f64::INFINITY;
        }
        e += lm[i]
            * (theta[i] + potential.beta_hat.value(chi[i]) + potential.gamma_hat.value(chi[i]));
    }
    let mass = consistent_mass_vector(mesh).matrix;
    let vv = DVector::from_column_slice(v);
    e += 0.5 * vv.dot(&(&mass * &vv));
    let b_nodal: Vec<f64> = chi.iter().map(|&c| params.b(c)).collect();
    let e_b = assemble_weighted_form(
        mesh,
        &b_nodal,
        &params.elastic,
        1.0,
        OperatorKind::ElasticEEta,
    )
    .expect("nonnegative b")
    .matrix;
    let uu = DVector::from_column_slice(u);
    e += 0.5 * uu.dot(&(&e_b * &uu));
    e += gradient_energy(mesh, chi, grad_mode);
    e
}

fn energy_of_state(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    grad_mode: GradMode,
    s: &crate::stepper::State,
) -> f64 {
    total_energy(
        mesh, params, potential, grad_mode, &s.theta, &s.u, &s.v, &s.chi,
    )
}

/// Work done by the data over step k: τ(Σmᵢgᵢ + Σbᵢhᵢ + Σmᵢ fᵢ·vᵢ).
fn step_work(
    mesh: &Mesh,
    traj: &Trajectory,
    lm: &DVector<f64>,
    bw: &DVector<f64>,
    k: usize,
) -> f64 {
    let d = mesh.dim;
    let data = &traj.step_data[k];
    let state = &traj.states[k + 1];
    let tau = state.diag.tau;
    let mut w = 0.0;
    for i in 0..mesh.n_nodes() {
        w += lm[i] * data.g[i] + bw[i] * data.h[i];
        for c in 0..d {
            w += lm[i] * data.f[d * i + c] * state.v[d * i + c];
        }
    }
    tau * w
}

/// Discrete total energy inequality over all sampled (s,t) pairs:
/// E(t) − E(s) − Σ work ≤ tol·(1+|LHS|+|RHS|).
pub fn check_total_energy_inequality(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    grad_mode: GradMode,
    traj: &Trajectory,
    opts: &VerifyOptions,
) -> CheckRecord {
    let lm = lumped_mass(mesh);
    let bw = boundary_lumped_weights(mesh);
    let n_states = traj.states.len();
    // prefix work sums: W[k] = work over steps 1..=k
    let mut work_prefix = vec![0.0; n_states];
    for k in 0..traj.n_steps() {
        work_prefix[k + 1] = work_prefix[k] + step_work(mesh, traj, &lm, &bw, k);
    }
    let grid = subgrid_indices(n_states, opts.subgrid_max);
    let energies: Vec<f64> = grid
        .iter()
        .map(|&k| energy_of_state(mesh, params, potential, grad_mode, &traj.states[k]))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    for (a, &ks) in grid.iter().enumerate() {
        for (b, &kt) in grid.iter().enumerate().skip(a + 1) {
            let lhs = energies[b];
            let rhs = energies[a] + (work_prefix[kt] - work_prefix[ks]);
            let scale = 1.0 + lhs.abs() + rhs.abs();
            let defect = (lhs - rhs) / scale;
            if defect > worst {
                worst = defect;
                loc = Some((ks, kt));
            }
        }
    }
    if !worst.is_finite() {
        worst = 0.0;
    }
    CheckRecord {
        name: "total_energy_inequality".into(),
        worst_residual: worst,
        location: loc,
        tolerance: opts.tol_factor,
        pass: worst <= opts.tol_factor,
        note: String::new(),
    }
}

/// Per-step ingredients of the discrete entropy inequality, bundled so pair
/// sums reduce to prefix arithmetic.
struct EntropyTerms {
    /// Σᵢ mᵢ(log θ + χ)ᵏ⁻¹(φᵢᵏ − φᵢᵏ⁻¹) per step per test.
    a: Vec<Vec<f64>>,
    /// τρ Σᵢ mᵢ divᵢᵏ φᵢᵏ per step per test.
    b: Vec<Vec<f64>>,
    /// τ·⟨conduction(θᵏ), I_h(φᵏ/θᵏ)⟩ per step per test.
    d: Vec<Vec<f64>>,
    /// τ Σᵢ (mᵢgᵢ + qᵢ + bᵢhᵢ)φᵢᵏ/θᵢᵏ per step per test.
    s: Vec<Vec<f64>>,
    /// Σᵢ mᵢ(log θ + χ)ᵏφᵢᵏ boundary values per sampled state per test.
    boundary: Vec<Vec<f64>>,
}

/// Discrete entropy inequality against the test bank. The conduction
/// contribution pairs the assembled heat operator with the nodal interpolant
/// of φ/θ (the combined form of the two log-gradient terms), which is the
/// quantity for which the inequality is exact for discrete solutions.
pub fn check_entropy_inequality(
    mesh: &Mesh,
    params: &MaterialParams,
    traj: &Trajectory,
    bank: &[TestFunction],
    opts: &VerifyOptions,
) -> Result<CheckRecord> {
    let n = mesh.n_nodes();
    let lm = lumped_mass(mesh);
    let bw = boundary_lumped_weights(mesh);
    for s in &traj.states {
        if s.theta.iter().any(|&t| t <= 0.0) {
            return Err(SimError::Verification(
                "nonpositive temperature encountered in entropy check".into(),
            ));
        }
    }
    let n_steps = traj.n_steps();
    let nt = bank.len();
    let mut terms = EntropyTerms {
        a: vec![vec![0.0; nt]; n_steps],
        b: vec![vec![0.0; nt]; n_steps],
        d: vec![vec![0.0; nt]; n_steps],
        s: vec![vec![0.0; nt]; n_steps],
        boundary: vec![vec![0.0; nt]; traj.states.len()],
    };
    for (kk, state) in traj.states.iter().enumerate() {
        for (j, tf) in bank.iter().enumerate() {
            let mut v = 0.0;
            for i in 0..n {
                v += lm[i] * (state.theta[i].ln() + state.chi[i]) * tf.at(i, state.time);
            }
            terms.boundary[kk][j] = v;
        }
    }
    for k in 0..n_steps {
        let prev = &traj.states[k];
        let state = &traj.states[k + 1];
        let tau = state.diag.tau;
        let data = &traj.step_data[k];
        let (ell, rhs) = heat_step_fields(
            mesh, params, &prev.chi, &state.chi, &prev.u, &state.u, tau, data,
        );
        let _ = ell;
        // div(v) scattered to nodes, same as the solver's reaction field
        let div_elem: Vec<f64> = (0..mesh.n_elements())
            .map(|e| element_divergence(mesh, e, &state.v))
            .collect();
        let div_nodal = scatter_to_nodes(mesh, &div_elem, &lm);
        // conduction residual at the accepted θᵏ with the solver's operator
        let zero_h = vec![0.0; n];
        let cond = Conductivity::Truncated {
            params,
            m: state.diag.m_used,
        };
        let r_cond = assemble_heat_residual(mesh, &state.theta, cond, &zero_h);
        for (j, tf) in bank.iter().enumerate() {
            let mut ta = 0.0;
            let mut tb = 0.0;
            let mut td = 0.0;
            let mut ts = 0.0;
            for i in 0..n {
                let phi_k = tf.at(i, state.time);
                let phi_prev = tf.at(i, prev.time);
                ta += lm[i] * (prev.theta[i].ln() + prev.chi[i]) * (phi_k - phi_prev);
                tb += lm[i] * div_nodal[i] * phi_k;
                td += r_cond[i] * phi_k / state.theta[i];
                ts += (rhs[i] + bw[i] * data.h[i]) * phi_k / state.theta[i];
            }
            terms.a[k][j] = ta;
            terms.b[k][j] = tau * params.rho * tb;
            terms.d[k][j] = tau * td;
            terms.s[k][j] = tau * ts;
        }
    }
    // prefix sums over steps
    let mut pa = vec![vec![0.0; nt]; n_steps + 1];
    let mut pb = pa.clone();
    let mut pd = pa.clone();
    let mut ps = pa.clone();
    for k in 0..n_steps {
        for j in 0..nt {
            pa[k + 1][j] = pa[k][j] + terms.a[k][j];
            pb[k + 1][j] = pb[k][j] + terms.b[k][j];
            pd[k + 1][j] = pd[k][j] + terms.d[k][j];
            ps[k + 1][j] = ps[k][j] + terms.s[k][j];
        }
    }
    let grid = subgrid_indices(traj.states.len(), opts.subgrid_max);
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    for (a_idx, &m) in grid.iter().enumerate() {
        for &jj in grid.iter().skip(a_idx + 1) {
            for j in 0..nt {
                let lhs = (pa[jj][j] - pa[m][j]) - (pb[jj][j] - pb[m][j]) - (pd[jj][j] - pd[m][j]);
                let rhs = terms.boundary[jj][j] - terms.boundary[m][j] - (ps[jj][j] - ps[m][j]);
                let scale = 1.0 + lhs.abs() + rhs.abs();
                let defect = (lhs - rhs) / scale;
                if defect > worst {
                    worst = defect;
                    loc = Some((m, j));
                }
            }
        }
    }
    if !worst.is_finite() {
        worst = 0.0;
    }
    Ok(CheckRecord {
        name: "entropy_inequality".into(),
        worst_residual: worst,
        location: loc,
        tolerance: opts.tol_factor,
        pass: worst <= opts.tol_factor,
        note: format!("{} tests", nt),
    })
}

/// χ energy-dissipation inequality (irreversible runs): rate dissipation plus
/// gradient+potential energy at t, bounded by the value at s plus the driving
/// work and the λ/2·τ·‖∂χ‖² slack.
pub fn check_chi_energy_dissipation(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    grad_mode: GradMode,
    traj: &Trajectory,
    opts: &VerifyOptions,
) -> CheckRecord {
    if !params.irreversible() {
        return CheckRecord {
            name: "chi_energy_dissipation".into(),
            worst_residual: 0.0,
            location: None,
            tolerance: opts.tol_factor,
            pass: true,
            note: "n/a (mu = 0)".into(),
        };
    }
    let lm = lumped_mass(mesh);
    let n = mesh.n_nodes();
    let n_steps = traj.n_steps();
    let mut rate_prefix = vec![0.0; n_steps + 1]; // Σ τ(1+√τ)‖rate‖²_m
    let mut drive_prefix = vec![0.0; n_steps + 1]; // Σ τ Σ mᵢ rateᵢ(−b′e_d + θ)
    let mut slack_prefix = vec![0.0; n_steps + 1]; // Σ τ ‖rate‖²_m (for the λ/2·τ̄ slack)
    let mut tau_max = 0.0f64;
    for k in 0..n_steps {
        let prev = &traj.states[k];
        let state = &traj.states[k + 1];
        let tau = state.diag.tau;
        tau_max = tau_max.max(tau);
        // nodal elastic density from uᵏ⁻¹
        let dens_elem: Vec<f64> = (0..mesh.n_elements())
            .map(|e| {
                let eps = element_strain(mesh, e, &prev.u);
                0.5 * elastic_contraction(&eps, &params.elastic, mesh.dim)
            })
            .collect();
        let ed = scatter_to_nodes(mesh, &dens_elem, &lm);
        let mut rr = 0.0;
        let mut dd = 0.0;
        for i in 0..n {
            let rate = (state.chi[i] - prev.chi[i]) / tau;
            rr += lm[i] * rate * rate;
            dd += lm[i] * rate * (-params.b_prime(state.chi[i]) * ed[i] + state.theta[i]);
        }
        rate_prefix[k + 1] = rate_prefix[k] + tau * (1.0 + tau.sqrt()) * rr;
        slack_prefix[k + 1] = slack_prefix[k] + tau * rr;
        drive_prefix[k + 1] = drive_prefix[k] + tau * dd;
    }
    // the λ/2·τ̄·‖∂χ‖²_{L²(0,T;L²)} slack over the whole window
    let slack = 0.5 * params.lambda_conv * tau_max * slack_prefix[n_steps];
    let phi_energy = |k: usize| -> f64 {
        let s = &traj.states[k];
        let mut w = gradient_energy(mesh, &s.chi, grad_mode);
        for i in 0..n {
            w += lm[i] * (potential.gamma_hat.value(s.chi[i]) + potential.beta_hat.value(s.chi[i]));
        }
        w
    };
    let grid = subgrid_indices(traj.states.len(), opts.subgrid_max);
    let energies: Vec<f64> = grid.iter().map(|&k| phi_energy(k)).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    for (a, &m) in grid.iter().enumerate() {
        for (b, &j) in grid.iter().enumerate().skip(a + 1) {
            let lhs = (rate_prefix[j] - rate_prefix[m]) + energies[b];
            let rhs = energies[a] + (drive_prefix[j] - drive_prefix[m]) + slack;
            let scale = 1.0 + lhs.abs() + rhs.abs();
            let defect = (lhs - rhs) / scale;
            if defect > worst {
                worst = defect;
                loc = Some((m, j));
            }
        }
    }
    if !worst.is_finite() {
        worst = 0.0;
    }
    CheckRecord {
        name: "chi_energy_dissipation".into(),
        worst_residual: worst,
        location: loc,
        tolerance: opts.tol_factor,
        pass: worst <= opts.tol_factor,
        note: format!("slack C = lambda/2 = {:.3e}", 0.5 * params.lambda_conv),
    }
}

/// Nodal constraint checks: positivity against the monitored floor,
/// irreversibility, the [0,1] box (μ = 1), Dirichlet values, and ξ
/// complementarity.
pub fn check_constraints(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    traj: &Trajectory,
    opts: &VerifyOptions,
) -> Vec<CheckRecord> {
    let mut records = Vec::new();
    let horizon = traj.states.last().map(|s| s.time).unwrap_or(0.0);
    let tau_min = traj
        .states
        .iter()
        .skip(1)
        .map(|s| s.diag.tau)
        .fold(f64::INFINITY, f64::min);
    let c_est = observed_floor_constant(mesh, params, traj);
    let (floor, _) = positivity_floor(
        params.theta_star,
        c_est,
        horizon,
        if tau_min.is_finite() { tau_min } else { 1.0 },
    );
    let mut worst_pos = f64::NEG_INFINITY;
    let mut loc_pos = None;
    for (k, s) in traj.states.iter().enumerate() {
        for (i, &t) in s.theta.iter().enumerate() {
            let defect = floor - t; // want θ ≥ floor
            if defect > worst_pos {
                worst_pos = defect;
                loc_pos = Some((k, i));
            }
        }
    }
    records.push(CheckRecord {
        name: "theta_positivity_floor".into(),
        worst_residual: worst_pos,
        location: loc_pos,
        tolerance: 0.0,
        pass: worst_pos <= 0.0,
        note: format!("floor {floor:.6e} (C_est {c_est:.3e})"),
    });

    if params.irreversible() {
        let mut worst = f64::NEG_INFINITY;
        let mut loc = None;
        for k in 1..traj.states.len() {
            for i in 0..mesh.n_nodes() {
                let defect = traj.states[k].chi[i] - traj.states[k - 1].chi[i];
                if defect > worst {
                    worst = defect;
                    loc = Some((k, i));
                }
            }
        }
        if !worst.is_finite() {
            worst = 0.0;
        }
        records.push(CheckRecord {
            name: "chi_irreversibility".into(),
            worst_residual: worst,
            location: loc,
            tolerance: 0.0,
            pass: worst <= 0.0,
            note: String::new(),
        });
        let mut worst_box = f64::NEG_INFINITY;
        let mut loc_box = None;
        for (k, s) in traj.states.iter().enumerate() {
            for (i, &c) in s.chi.iter().enumerate() {
                let defect = (-c).max(c - 1.0);
                if defect > worst_box {
                    worst_box = defect;
                    loc_box = Some((k, i));
                }
            }
        }
        records.push(CheckRecord {
            name: "chi_box".into(),
            worst_residual: worst_box,
            location: loc_box,
            tolerance: 1e-10,
            pass: worst_box <= 1e-10,
            note: String::new(),
        });
    } else {
        records.push(CheckRecord {
            name: "chi_irreversibility".into(),
            worst_residual: 0.0,
            location: None,
            tolerance: 0.0,
            pass: true,
            note: "n/a (mu = 0)".into(),
        });
        if potential.beta_hat.is_indicator() {
            let worst = traj
                .states
                .iter()
                .flat_map(|s| s.chi.iter())
                .fold(f64::NEG_INFINITY, |a, &c| a.max(-c));
            records.push(CheckRecord {
                name: "chi_lower_bound".into(),
                worst_residual: worst,
                location: None,
                tolerance: 1e-10,
                pass: worst <= 1e-10,
                note: String::new(),
            });
        }
    }

    let d = mesh.dim;
    let mut worst_dir = 0.0f64;
    for s in &traj.states {
        for &i in &mesh.dirichlet_nodes() {
            for c in 0..d {
                worst_dir = worst_dir.max(s.u[d * i + c].abs());
            }
        }
    }
    records.push(CheckRecord {
        name: "u_dirichlet".into(),
        worst_residual: worst_dir,
        location: None,
        tolerance: 0.0,
        pass: worst_dir <= 0.0,
        note: String::new(),
    });

    let mut worst_comp = 0.0f64;
    let mut loc_comp = None;
    for (k, s) in traj.states.iter().enumerate() {
        for i in 0..mesh.n_nodes() {
            let v = (s.xi[i] * s.chi[i]).abs() / (1.0 + s.xi[i].abs());
            if v > worst_comp {
                worst_comp = v;
                loc_comp = Some((k, i));
            }
        }
    }
    records.push(CheckRecord {
        name: "xi_complementarity".into(),
        worst_residual: worst_comp,
        location: loc_comp,
        tolerance: 1e-10,
        pass: worst_comp <= 1e-10,
        note: String::new(),
    });
    let _ = opts;
    records
}

/// One-sided variational inequality on sampled steps against negative hats
/// and the −χᵏ-shaped test.
pub fn check_one_sided_vi(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    grad_mode: GradMode,
    traj: &Trajectory,
    opts: &VerifyOptions,
) -> CheckRecord {
    if !params.irreversible() {
        return CheckRecord {
            name: "one_sided_vi".into(),
            worst_residual: 0.0,
            location: None,
            tolerance: opts.tol_factor,
            pass: true,
            note: "n/a (mu = 0)".into(),
        };
    }
    let n = mesh.n_nodes();
    let lm = lumped_mass(mesh);
    let grid = subgrid_indices(traj.states.len(), opts.subgrid_max);
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    for &k in grid.iter().skip(1) {
        let prev = &traj.states[k - 1];
        let state = &traj.states[k];
        let tau = state.diag.tau;
        let dens_elem: Vec<f64> = (0..mesh.n_elements())
            .map(|e| {
                let eps = element_strain(mesh, e, &prev.u);
                0.5 * elastic_contraction(&eps, &params.elastic, mesh.dim)
            })
            .collect();
        let ed = scatter_to_nodes(mesh, &dens_elem, &lm);
        let grad = gradient_flow_residual(mesh, &state.chi, grad_mode);
        let bracket: Vec<f64> = (0..n)
            .map(|i| {
                let rate = (state.chi[i] - prev.chi[i]) / tau;
                lm[i]
                    * ((1.0 + tau.sqrt()) * rate
                        + state.xi[i]
                        + potential.gamma_hat.deriv(state.chi[i])
                        + params.b_prime(state.chi[i]) * ed[i]
                        - state.theta[i])
                    + grad[i]
            })
            .collect();
        // ψ = negative hats, and ψ = −χᵏ
        for (ti, i) in (0..n).step_by((n / 8).max(1)).enumerate() {
            let r = -bracket[i]; // VI(−hat at i) = −bracketᵢ
            let scale = 1.0 + bracket[i].abs();
            let defect = -r / scale; // want r ≥ 0
            if defect > worst {
                worst = defect;
                loc = Some((k, ti));
            }
        }
        let vi_chi: f64 = (0..n).map(|i| bracket[i] * (-state.chi[i])).sum();
        let scale = 1.0 + vi_chi.abs();
        let defect = -vi_chi / scale;
        if defect > worst {
            worst = defect;
            loc = Some((k, usize::MAX));
        }
    }
    if !worst.is_finite() {
        worst = 0.0;
    }
    CheckRecord {
        name: "one_sided_vi".into(),
        worst_residual: worst,
        location: loc,
        tolerance: opts.tol_factor,
        pass: worst <= opts.tol_factor,
        note: String::new(),
    }
}

/// A-priori norm monitors (discrete analogues of the uniform bounds).
pub fn apriori_monitors(
    mesh: &Mesh,
    params: &MaterialParams,
    traj: &Trajectory,
    opts: &VerifyOptions,
) -> Vec<(String, f64)> {
    let n = mesh.n_nodes();
    let lm = lumped_mass(mesh);
    let p_exp = params.p_exponent;
    let quad = mesh.quadrature();
    let grad_sq = |field: &[f64]| -> f64 {
        let mut total = 0.0;
        for e in 0..mesh.n_elements() {
            let geo = mesh.element_geometry(e);
            let mut g = [0.0f64; 2];
            for (a, &j) in mesh.elements[e].iter().enumerate() {
                g[0] += field[j] * geo.grads[a][0];
                g[1] += field[j] * geo.grads[a][1];
            }
            total += geo.measure * (g[0] * g[0] + g[1] * g[1]);
        }
        total
    };
    let mut sup_theta_l1 = 0.0f64;
    let mut theta_l2h1 = 0.0;
    let mut log_l2h1 = 0.0;
    let mut kappa_alpha = 0.0;
    let mut v_l2h1 = 0.0;
    let mut v_linf_l2 = 0.0f64;
    let mut chi_w1p = 0.0f64;
    let mut rate_l2l2 = 0.0;
    let d = mesh.dim;
    for (k, s) in traj.states.iter().enumerate() {
        let l1: f64 = (0..n).map(|i| lm[i] * s.theta[i].abs()).sum();
        sup_theta_l1 = sup_theta_l1.max(l1);
        let wp: f64 = (0..n)
            .map(|i| lm[i] * s.chi[i].abs().powf(p_exp))
            .sum::<f64>()
            + {
                let mut t = 0.0;
                for e in 0..mesh.n_elements() {
                    let geo = mesh.element_geometry(e);
                    let mut g = [0.0f64; 2];
                    for (a, &j) in mesh.elements[e].iter().enumerate() {
                        g[0] += s.chi[j] * geo.grads[a][0];
                        g[1] += s.chi[j] * geo.grads[a][1];
                    }
                    t += geo.measure * (g[0] * g[0] + g[1] * g[1]).sqrt().powf(p_exp);
                }
                t
            };
        chi_w1p = chi_w1p.max(wp.powf(1.0 / p_exp));
        if k == 0 {
            continue;
        }
        let tau = s.diag.tau;
        let prev = &traj.states[k - 1];
        let l2: f64 = (0..n).map(|i| lm[i] * s.theta[i] * s.theta[i]).sum();
        theta_l2h1 += tau * (l2 + grad_sq(&s.theta));
        let logf: Vec<f64> = s.theta.iter().map(|t| t.ln()).collect();
        let log_l2: f64 = (0..n).map(|i| lm[i] * logf[i] * logf[i]).sum();
        log_l2h1 += tau * (log_l2 + grad_sq(&logf));
        // ∫ K(θ)|∇(θ^{α/2})|² with the assembly's element quadrature for K
        let powf: Vec<f64> = s.theta.iter().map(|t| t.powf(opts.alpha / 2.0)).collect();
        for e in 0..mesh.n_elements() {
            let geo = mesh.element_geometry(e);
            let conn = &mesh.elements[e];
            let mut g = [0.0f64; 2];
            for (a, &j) in conn.iter().enumerate() {
                g[0] += powf[j] * geo.grads[a][0];
                g[1] += powf[j] * geo.grads[a][1];
            }
            let mut k_eff = 0.0;
            for (w, bary) in &quad {
                let tq: f64 = conn.iter().zip(bary).map(|(&j, &b)| b * s.theta[j]).sum();
                k_eff += w * crate::material::heat_conductivity_even(tq, params);
            }
            kappa_alpha += tau * geo.measure * k_eff * (g[0] * g[0] + g[1] * g[1]);
        }
        // velocity norms
        let mut v_l2 = 0.0;
        for i in 0..n {
            for c in 0..d {
                v_l2 += lm[i] * s.v[d * i + c] * s.v[d * i + c];
            }
        }
        let mut v_h1 = v_l2;
        for e in 0..mesh.n_elements() {
            let geo = mesh.element_geometry(e);
            for alpha_c in 0..d {
                let mut g = [0.0f64; 2];
                for (a, &j) in mesh.elements[e].iter().enumerate() {
                    g[0] += s.v[d * j + alpha_c] * geo.grads[a][0];
                    g[1] += s.v[d * j + alpha_c] * geo.grads[a][1];
                }
                v_h1 += geo.measure * (g[0] * g[0] + g[1] * g[1]);
            }
        }
        v_l2h1 += tau * v_h1;
        v_linf_l2 = v_linf_l2.max(v_l2.sqrt());
        let mut rr = 0.0;
        for i in 0..n {
            let rate = (s.chi[i] - prev.chi[i]) / tau;
            rr += lm[i] * rate * rate;
        }
        rate_l2l2 += tau * rr;
    }
    // partial surrogate of the dual-ball variation bound: the total variation
    // of ⟨log θ, φ⟩ over the finite test bank only, normalized by a discrete
    // W^{1,∞}-type norm of each shape
    let horizon = traj.states.last().map(|s| s.time).unwrap_or(0.0);
    let bank = default_test_bank(mesh, horizon);
    let mut log_var = 0.0f64;
    for tf in &bank {
        let grad_inf = {
            let mut g = 0.0f64;
            for e in 0..mesh.n_elements() {
                let geo = mesh.element_geometry(e);
                let mut gv = [0.0f64; 2];
                for (a, &j) in mesh.elements[e].iter().enumerate() {
                    gv[0] += tf.shape[j] * geo.grads[a][0];
                    gv[1] += tf.shape[j] * geo.grads[a][1];
                }
                g = g.max((gv[0] * gv[0] + gv[1] * gv[1]).sqrt());
            }
            g
        };
        let shape_norm = tf.shape.iter().fold(0.0f64, |a, &b| a.max(b.abs())) + grad_inf;
        if shape_norm == 0.0 {
            continue;
        }
        let mut var = 0.0;
        for k in 1..traj.states.len() {
            let mut incr = 0.0;
            for i in 0..n {
                incr += lm[i]
                    * (traj.states[k].theta[i].ln() - traj.states[k - 1].theta[i].ln())
                    * tf.shape[i];
            }
            var += incr.abs();
        }
        log_var = log_var.max(var / shape_norm);
    }
    vec![
        ("sup_theta_L1".into(), sup_theta_l1),
        ("theta_L2H1".into(), theta_l2h1.sqrt()),
        ("log_theta_L2H1".into(), log_l2h1.sqrt()),
        ("conduction_alpha_weighted".into(), kappa_alpha),
        ("v_L2H1".into(), v_l2h1.sqrt()),
        ("v_LinfL2".into(), v_linf_l2),
        ("chi_LinfW1p".into(), chi_w1p),
        ("chi_rate_L2L2".into(), rate_l2l2.sqrt()),
        // variation over the finite bank only: a partial surrogate of the
        // dual-ball bound
        ("log_theta_dual_variation".into(), log_var),
    ]
}

/// Runs the full verification battery on a trajectory.
pub fn verify_trajectory(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    grad_mode: GradMode,
    traj: &Trajectory,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    let horizon = traj.states.last().map(|s| s.time).unwrap_or(0.0);
    let bank = default_test_bank(mesh, horizon);
    let mut entries = Vec::new();
    entries.push(check_total_energy_inequality(
        mesh, params, potential, grad_mode, traj, opts,
    ));
    entries.push(check_entropy_inequality(mesh, params, traj, &bank, opts)?);
    entries.push(check_chi_energy_dissipation(
        mesh, params, potential, grad_mode, traj, opts,
    ));
    entries.extend(check_constraints(mesh, params, potential, traj, opts));
    entries.push(check_one_sided_vi(
        mesh, params, potential, grad_mode, traj, opts,
    ));
    Ok(VerificationReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{BetaHat, CoefficientChoice, ElasticModuli, GammaHat};
    use crate::mesh::build_interval;
    use crate::stepper::{run_simulation, InitialState, RunOptions, Sources};

    fn params(mu: u8) -> MaterialParams {
        MaterialParams {
            kappa: 2.0,
            c0: 0.5,
            c1: 0.5,
            c2: 0.1,
            rho: 0.2,
            omega: 1.0,
            p_exponent: 4.0,
            delta: 0.0,
            lambda_conv: 1.0,
            mu_flag: mu,
            theta_star: 1.0,
            elastic: ElasticModuli {
                lambda_lame: 0.0,
                mu_lame: 0.5,
            },
            a_choice: CoefficientChoice::Damage,
            b_choice: CoefficientChoice::Damage,
        }
    }

    fn smoke(
        mu: u8,
        n: usize,
        horizon: f64,
        tau: f64,
    ) -> (Mesh, MaterialParams, PotentialW, Trajectory) {
        let mesh = build_interval(0.0, 1.0, n, 2).unwrap();
        let p = params(mu);
        let pot = PotentialW::new(GammaHat::DoubleWell, BetaHat::Indicator);
        let coords = mesh.coords.clone();
        let init = InitialState {
            theta0: coords
                .iter()
                .map(|&x| 1.0 + 0.2 * (-((x - 0.5f64) / 0.1).powi(2)).exp())
                .collect(),
            u0: vec![0.0; n],
            v0: vec![0.0; n],
            chi0: vec![0.9; n],
        };
        let coords2 = mesh.coords.clone();
        let sources = Sources {
            f: Box::new(move |_| {
                coords2
                    .iter()
                    .map(|&x| 0.6 * (-((x - 0.5f64) / 0.2).powi(2)).exp())
                    .collect()
            }),
            g: Box::new(move |_| vec![0.05; n]),
            h: Box::new(move |_| vec![0.0; n]),
        };
        let opts = RunOptions::new(GradMode::PurePLaplacian { p: 4.0 });
        let traj = run_simulation(&mesh, &p, &pot, &sources, &init, horizon, tau, &opts).unwrap();
        (mesh, p, pot, traj)
    }

    #[test]
    fn total_energy_direct_values() {
        // unit 1D domain, θ ≡ 1, u = v = 0, χ ≡ c with ∇χ = 0 → ∫θ + ∫W(c)
        let mesh = build_interval(0.0, 1.0, 5, 2).unwrap();
        let p = params(1);
        let pot = PotentialW::new(GammaHat::DoubleWell, BetaHat::Indicator);
        let c = 0.3;
        let w_c = pot.gamma_hat.value(c);
        let e = total_energy(
            &mesh,
            &p,
            &pot,
            GradMode::PurePLaplacian { p: 4.0 },
            &vec![1.0; 5],
            &vec![0.0; 5],
            &vec![0.0; 5],
            &vec![c; 5],
        );
        assert!((e - (1.0 + w_c)).abs() < 1e-14);
        // infeasible χ flags +∞
        let e_inf = total_energy(
            &mesh,
            &p,
            &pot,
            GradMode::PurePLaplacian { p: 4.0 },
            &vec![1.0; 5],
            &vec![0.0; 5],
            &vec![0.0; 5],
            &vec![-0.5; 5],
        );
        assert!(e_inf.is_infinite());
    }

    #[test]
    fn energy_terms_exact_under_quadrature_refinement() {
        // the polynomial energy terms are exact quadratures of the P1 fields:
        // evaluating on a 4x-refined mesh interpolation reproduces them
        let mesh = build_interval(0.0, 1.0, 5, 2).unwrap();
        let fine = build_interval(0.0, 1.0, 17, 2).unwrap();
        let p = params(1);
        let pot = PotentialW::new(GammaHat::Zero, BetaHat::Indicator);
        let mode = GradMode::PurePLaplacian { p: 4.0 };
        let theta: Vec<f64> = mesh.coords.iter().map(|&x| 1.0 + 0.3 * x).collect();
        let u: Vec<f64> = mesh
            .coords
            .iter()
            .map(|&x| 0.1 * x * (1.0 - x) * 4.0)
            .collect();
        let chi = vec![0.5; 5];
        let interp = |coarse: &[f64]| -> Vec<f64> {
            fine.coords
                .iter()
                .map(|&x| {
                    let h = 0.25;
                    let e = ((x / h).floor() as usize).min(3);
                    let lam = (x - h * e as f64) / h;
                    coarse[e] * (1.0 - lam) + coarse[e + 1] * lam
                })
                .collect()
        };
        let e_coarse = total_energy(&mesh, &p, &pot, mode, &theta, &u, &u, &chi);
        let e_fine = total_energy(
            &fine,
            &p,
            &pot,
            mode,
            &interp(&theta),
            &interp(&u),
            &interp(&u),
            &interp(&chi),
        );
        assert!(
            (e_coarse - e_fine).abs() < 1e-8 * (1.0 + e_coarse.abs()),
            "{e_coarse} vs {e_fine}"
        );
    }

    #[test]
    fn smoke_run_passes_all_checks() {
        let (mesh, p, pot, traj) = smoke(1, 9, 0.25, 1.0 / 32.0);
        let opts = VerifyOptions::default();
        let report = verify_trajectory(
            &mesh,
            &p,
            &pot,
            GradMode::PurePLaplacian { p: 4.0 },
            &traj,
            &opts,
        )
        .unwrap();
        assert!(report.pass(), "{}", report.to_table());
    }

    #[test]
    fn equilibrium_trajectory_zero_defect() {
        let mesh = build_interval(0.0, 1.0, 5, 2).unwrap();
        let p = params(1);
        let pot = PotentialW::new(GammaHat::Zero, BetaHat::Indicator);
        let n = 5;
        let init = InitialState {
            theta0: vec![1.5; n],
            u0: vec![0.0; n],
            v0: vec![0.0; n],
            chi0: vec![0.5; n],
        };
        let sources = Sources {
            f: Box::new(move |_| vec![0.0; n]),
            g: Box::new(move |_| vec![0.0; n]),
            h: Box::new(move |_| vec![0.0; n]),
        };
        let run_opts = RunOptions::new(GradMode::PurePLaplacian { p: 4.0 });
        let traj = run_simulation(&mesh, &p, &pot, &sources, &init, 0.1, 0.01, &run_opts).unwrap();
        let rec = check_total_energy_inequality(
            &mesh,
            &p,
            &pot,
            GradMode::PurePLaplacian { p: 4.0 },
            &traj,
            &VerifyOptions::default(),
        );
        assert!(rec.pass);
        assert!(rec.worst_residual.abs() < 1e-12);
    }

    #[test]
    fn perturbed_trajectory_fails_energy_check() {
        let (mesh, p, pot, mut traj) = smoke(1, 9, 0.25, 1.0 / 32.0);
        let mid = traj.states.len() / 2;
        traj.states[mid].theta[4] += 0.5;
        let rec = check_total_energy_inequality(
            &mesh,
            &p,
            &pot,
            GradMode::PurePLaplacian { p: 4.0 },
            &traj,
            &VerifyOptions::default(),
        );
        assert!(!rec.pass);
        // worst pair ends at the perturbed step
        assert_eq!(rec.location.unwrap().1, mid);
    }

    #[test]
    fn perturbed_trajectory_fails_entropy_check() {
        let (mesh, p, _pot, mut traj) = smoke(1, 9, 0.25, 1.0 / 32.0);
        let mid = traj.states.len() / 2;
        traj.states[mid].theta[4] += 0.5;
        let bank = default_test_bank(&mesh, 0.25);
        let rec =
            check_entropy_inequality(&mesh, &p, &traj, &bank, &VerifyOptions::default()).unwrap();
        assert!(!rec.pass);
    }

    #[test]
    fn perturbed_chi_fails_dissipation_check() {
        let (mesh, p, pot, mut traj) = smoke(1, 9, 0.25, 1.0 / 32.0);
        let mid = traj.states.len() / 2;
        traj.states[mid].chi[4] -= 0.3;
        let rec = check_chi_energy_dissipation(
            &mesh,
            &p,
            &pot,
            GradMode::PurePLaplacian { p: 4.0 },
            &traj,
            &VerifyOptions::default(),
        );
        assert!(!rec.pass);
    }

    #[test]
    fn pure_heat_run_entropy_reduces_to_clausius_statement() {
        // uncoupled pure-heat run (f = 0, stationary χ, g = h = 0),
        // φ ≡ 1 included in the bank: the inequality holds with tiny defect
        let mesh = build_interval(0.0, 1.0, 9, 2).unwrap();
        let mut p = params(1);
        p.rho = 0.0;
        let pot = PotentialW::new(GammaHat::Zero, BetaHat::Indicator);
        let n = 9;
        let coords = mesh.coords.clone();
        let init = InitialState {
            theta0: coords
                .iter()
                .map(|&x| 1.0 + 0.5 * (-((x - 0.5f64) / 0.1).powi(2)).exp())
                .collect(),
            u0: vec![0.0; n],
            v0: vec![0.0; n],
            chi0: vec![0.5; n],
        };
        let sources = Sources {
            f: Box::new(move |_| vec![0.0; n]),
            g: Box::new(move |_| vec![0.0; n]),
            h: Box::new(move |_| vec![0.0; n]),
        };
        let run_opts = RunOptions::new(GradMode::PurePLaplacian { p: 4.0 });
        let traj = run_simulation(
            &mesh,
            &p,
            &pot,
            &sources,
            &init,
            0.25,
            1.0 / 32.0,
            &run_opts,
        )
        .unwrap();
        // χ stays put and u stays zero: genuinely uncoupled diffusion
        let last = traj.states.last().unwrap();
        assert!(last.u.iter().all(|&x| x.abs() < 1e-12));
        assert!(last.chi.iter().all(|&c| (c - 0.5).abs() < 1e-12));
        let bank = default_test_bank(&mesh, 0.25);
        let rec =
            check_entropy_inequality(&mesh, &p, &traj, &bank, &VerifyOptions::default()).unwrap();
        assert!(rec.pass, "defect {}", rec.worst_residual);
        // φ ≡ 0 is degenerate: both sides vanish identically
        let zero_bank = vec![TestFunction {
            name: "zero".into(),
            shape: vec![0.0; n],
            profile: TimeProfile::Constant,
        }];
        let rec0 =
            check_entropy_inequality(&mesh, &p, &traj, &zero_bank, &VerifyOptions::default())
                .unwrap();
        assert_eq!(rec0.worst_residual, 0.0);
    }

    #[test]
    fn mu0_trajectory_reports_na_irreversibility() {
        let (mesh, p, pot, traj) = smoke(0, 9, 0.1, 1.0 / 32.0);
        let recs = check_constraints(&mesh, &p, &pot, &traj, &VerifyOptions::default());
        let irr = recs
            .iter()
            .find(|r| r.name == "chi_irreversibility")
            .unwrap();
        assert!(irr.pass);
        assert!(irr.note.contains("n/a"));
    }

    #[test]
    fn monitors_zero_rates_and_constant_theta() {
        let mesh = build_interval(0.0, 1.0, 5, 2).unwrap();
        let p = params(1);
        let pot = PotentialW::new(GammaHat::Zero, BetaHat::Indicator);
        let n = 5;
        let init = InitialState {
            theta0: vec![1.0; n],
            u0: vec![0.0; n],
            v0: vec![0.0; n],
            chi0: vec![0.5; n],
        };
        let sources = Sources {
            f: Box::new(move |_| vec![0.0; n]),
            g: Box::new(move |_| vec![0.0; n]),
            h: Box::new(move |_| vec![0.0; n]),
        };
        let run_opts = RunOptions::new(GradMode::PurePLaplacian { p: 4.0 });
        let traj = run_simulation(&mesh, &p, &pot, &sources, &init, 1.0, 0.125, &run_opts).unwrap();
        let mons = apriori_monitors(&mesh, &p, &traj, &VerifyOptions::default());
        let get = |name: &str| mons.iter().find(|(n, _)| n == name).unwrap().1;
        assert!(get("chi_rate_L2L2") < 1e-12);
        assert!(get("v_L2H1") < 1e-12);
        // θ ≡ 1 on the unit domain over T = 1: ‖θ‖_{L²H¹} = 1
        assert!((get("theta_L2H1") - 1.0).abs() < 1e-12);
        assert!((get("sup_theta_L1") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_chi_fails_constraint_checks() {
        let (mesh, p, pot, mut traj) = smoke(1, 9, 0.25, 1.0 / 32.0);
        let mid = traj.states.len() / 2;
        traj.states[mid].chi[4] += 0.05; // violates irreversibility
        let recs = check_constraints(&mesh, &p, &pot, &traj, &VerifyOptions::default());
        let irr = recs
            .iter()
            .find(|r| r.name == "chi_irreversibility")
            .unwrap();
        assert!(!irr.pass);
        // θ below the floor fails positivity
        let (mesh, p, pot, mut traj) = smoke(1, 9, 0.25, 1.0 / 32.0);
        let mid = traj.states.len() / 2;
        traj.states[mid].theta[4] = 1e-3;
        let recs = check_constraints(&mesh, &p, &pot, &traj, &VerifyOptions::default());
        let posr = recs
            .iter()
            .find(|r| r.name == "theta_positivity_floor")
            .unwrap();
        assert!(!posr.pass);
    }

    #[test]
    fn perturbed_xi_fails_vi_check() {
        let (mesh, p, pot, mut traj) = smoke(1, 9, 0.25, 1.0 / 32.0);
        let mid = traj.states.len() / 2;
        traj.states[mid].xi[4] = 5.0; // ξ must be ≤ 0; breaks the bracket sign
        let rec = check_one_sided_vi(
            &mesh,
            &p,
            &pot,
            GradMode::PurePLaplacian { p: 4.0 },
            &traj,
            &VerifyOptions::default(),
        );
        assert!(!rec.pass);
        // complementarity fixture
        let recs = check_constraints(&mesh, &p, &pot, &traj, &VerifyOptions::default());
        let comp = recs
            .iter()
            .find(|r| r.name == "xi_complementarity")
            .unwrap();
        assert!(!comp.pass);
    }

    #[test]
    fn two_dimensional_run_passes_all_checks() {
        let mesh = crate::mesh::build_rectangle([0.0, 1.0], [0.0, 1.0], 5, 5, 2).unwrap();
        let mut p = params(1);
        p.p_exponent = 4.0; // > d = 2
        p.elastic = ElasticModuli {
            lambda_lame: 0.3,
            mu_lame: 0.5,
        };
        let pot = PotentialW::new(GammaHat::DoubleWell, BetaHat::Indicator);
        let n = mesh.n_nodes();
        let coords: Vec<[f64; 2]> = (0..n).map(|i| mesh.node_coord(i)).collect();
        let init = InitialState {
            theta0: coords
                .iter()
                .map(|c| {
                    1.0 + 0.2 * (-((c[0] - 0.5f64).powi(2) + (c[1] - 0.5f64).powi(2)) / 0.04).exp()
                })
                .collect(),
            u0: vec![0.0; 2 * n],
            v0: vec![0.0; 2 * n],
            chi0: vec![0.9; n],
        };
        let coords_f = coords.clone();
        let sources = Sources {
            f: Box::new(move |t| {
                let mut out = vec![0.0; 2 * coords_f.len()];
                for (i, c) in coords_f.iter().enumerate() {
                    let shape = (-((c[0] - 0.5f64).powi(2) + (c[1] - 0.5f64).powi(2)) / 0.04).exp();
                    out[2 * i] = 8.0 * t * shape;
                }
                out
            }),
            g: Box::new(move |_| vec![0.02; n]),
            h: Box::new(move |_| vec![0.01; n]),
        };
        let run_opts = RunOptions::new(GradMode::PurePLaplacian { p: 4.0 });
        let traj = run_simulation(
            &mesh,
            &p,
            &pot,
            &sources,
            &init,
            0.25,
            1.0 / 16.0,
            &run_opts,
        )
        .unwrap();
        let report = verify_trajectory(
            &mesh,
            &p,
            &pot,
            GradMode::PurePLaplacian { p: 4.0 },
            &traj,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(report.pass(), "{}", report.to_table());
    }

    #[test]
    fn report_summary_flag_matches_entries() {
        let (mesh, p, pot, traj) = smoke(1, 9, 0.1, 1.0 / 32.0);
        let report = verify_trajectory(
            &mesh,
            &p,
            &pot,
            GradMode::PurePLaplacian { p: 4.0 },
            &traj,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert_eq!(report.pass(), report.entries.iter().all(|e| e.pass));
        let table = report.to_table();
        assert!(table.contains("summary"));
    }
}
