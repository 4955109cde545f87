//! The coupled implicit time step: given (θ, u, v, χ) at the previous level,
//! find the fully implicit triple (θᵏ, uᵏ, χᵏ) solving the discrete heat,
//! momentum, and internal-variable equations, with truncation level M and
//! per-step data given by local time means. A staggered fixed-point iteration
//! (χ-solve → u-solve → θ-solve) runs to a tight tolerance; the truncation
//! level doubles and the step re-solves whenever max θᵏ reaches M, so
//! truncations are inactive on every accepted state.

use crate::assembly::{
    assemble_coupling, assemble_heat_jacobian, assemble_heat_residual, assemble_weighted_form,
    consistent_mass_vector, elastic_contraction, element_divergence, element_strain, lumped_mass,
    nu_strain_jacobian, nu_strain_residual, scatter_to_nodes, Conductivity, GradMode, OperatorKind,
};
use crate::chi::{solve_chi_step, ChiSolverOptions, ChiStepContext};
use crate::error::{Result, SimError};
use crate::material::{MaterialParams, PotentialW};
use crate::mesh::Mesh;
use nalgebra::{DMatrix, DVector};

/// Per-step local means of the data (f is node-major with d components).
#[derive(Debug, Clone)]
pub struct StepData {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

/// Time-dependent nodal data sources.
pub struct Sources {
    pub f: Box<dyn Fn(f64) -> Vec<f64>>,
    pub g: Box<dyn Fn(f64) -> Vec<f64>>,
    pub h: Box<dyn Fn(f64) -> Vec<f64>>,
}

/// Composite-Simpson local mean of a nodal function over (t0, t1].
fn interval_mean(func: &dyn Fn(f64) -> Vec<f64>, t0: f64, t1: f64, n_sub: usize) -> Vec<f64> {
    let n_sub = n_sub.max(4) & !1; // even panel count
    let h = (t1 - t0) / n_sub as f64;
    let mut acc = func(t0);
    for v in acc.iter_mut() {
        *v *= 1.0;
    }
    for k in 1..n_sub {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        let fk = func(t0 + k as f64 * h);
        for (a, b) in acc.iter_mut().zip(&fk) {
            *a += w * b;
        }
    }
    let fe = func(t1);
    for (a, b) in acc.iter_mut().zip(&fe) {
        *a += b;
    }
    let scale = h / 3.0 / (t1 - t0);
    acc.iter().map(|v| v * scale).collect()
}

/// Local mean of all three data fields over one step interval; rejects
/// negative heat sources and boundary fluxes.
pub fn local_means_interval(sources: &Sources, t0: f64, t1: f64) -> Result<StepData> {
    let g = interval_mean(&*sources.g, t0, t1, 8);
    if let Some(bad) = g.iter().find(|v| **v < -1e-14) {
        return Err(SimError::Config(vec![format!(
            "heat source violates g >= 0 a.e. (mean value {bad} on ({t0}, {t1}])"
        )]));
    }
    let h = interval_mean(&*sources.h, t0, t1, 8);
    if let Some(bad) = h.iter().find(|v| **v < -1e-14) {
        return Err(SimError::Config(vec![format!(
            "boundary flux violates h >= 0 a.e. (mean value {bad} on ({t0}, {t1}])"
        )]));
    }
    Ok(StepData {
        f: interval_mean(&*sources.f, t0, t1, 8),
        g,
        h,
    })
}

/// Local means over a uniform partition with the given step.
pub fn local_means(sources: &Sources, horizon: f64, tau: f64) -> Result<Vec<StepData>> {
    let k_steps = (horizon / tau).round() as usize;
    (0..k_steps)
        .map(|k| local_means_interval(sources, k as f64 * tau, (k + 1) as f64 * tau))
        .collect()
}

/// Solver state at one time level.
#[derive(Debug, Clone)]
pub struct State {
    pub time: f64,
    pub theta: Vec<f64>,
    pub u: Vec<f64>,
    /// Backward difference velocity (uᵏ − uᵏ⁻¹)/τ_k; the initial velocity
    /// at k = 0.
    pub v: Vec<f64>,
    pub chi: Vec<f64>,
    pub xi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub diag: StepDiagnostics,
}

#[derive(Debug, Clone, Default)]
pub struct StepDiagnostics {
    pub tau: f64,
    pub outer_iterations: usize,
    pub heat_iterations: usize,
    pub chi_iterations: usize,
    pub fp_increment: f64,
    pub m_used: f64,
}

/// Ordered states with their per-step data.
#[derive(Debug)]
pub struct Trajectory {
    pub states: Vec<State>,
    /// step_data[k] drives the transition states[k] → states[k+1].
    pub step_data: Vec<StepData>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
    pub fn tau_at(&self, k: usize) -> f64 {
        self.states[k + 1].diag.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MPolicy {
    /// M₀ = 10·(1 + max θ⁰), doubled on violation.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub tol_fp: f64,
    pub tol_heat: f64,
    pub tol_chi: f64,
    pub tol_lin: f64,
    pub max_outer: usize,
    pub min_tau: f64,
    pub m_policy: MPolicy,
    /// Yosida parameter for the χ rate constraint (0 = exact projection).
    pub nu: f64,
    /// Optional (ν, η) higher-order regularization terms in the momentum and
    /// χ equations.
    pub nu_higher_order: Option<(f64, f64)>,
    pub grad_mode: GradMode,
}

impl RunOptions {
    pub fn new(grad_mode: GradMode) -> Self {
        RunOptions {
            tol_fp: 1e-9,
            tol_heat: 1e-10,
            tol_chi: 1e-10,
            tol_lin: 1e-12,
            max_outer: 60,
            min_tau: 1e-7,
            m_policy: MPolicy::Auto,
            nu: 0.0,
            nu_higher_order: None,
            grad_mode,
        }
    }
}

/// Free (non-Dirichlet) displacement dofs, node-major layout.
pub fn free_u_dofs(mesh: &Mesh) -> Vec<usize> {
    let fixed: std::collections::HashSet<usize> = mesh.dirichlet_nodes().into_iter().collect();
    let d = mesh.dim;
    (0..mesh.n_nodes())
        .filter(|i| !fixed.contains(i))
        .flat_map(|i| (0..d).map(move |c| d * i + c))
        .collect()
}

fn reduced_solve_spd(
    a: &DMatrix<f64>,
    rhs: &DVector<f64>,
    free: &[usize],
    tol_lin: f64,
) -> Result<DVector<f64>> {
    let nf = free.len();
    let mut ar = DMatrix::zeros(nf, nf);
    let mut rr = DVector::zeros(nf);
    for (p, &i) in free.iter().enumerate() {
        rr[p] = rhs[i];
        for (q, &j) in free.iter().enumerate() {
            ar[(p, q)] = a[(i, j)];
        }
    }
    let sol = match ar.clone().cholesky() {
        Some(ch) => ch.solve(&rr),
        None => {
            return Err(SimError::Assembly(
                "singular momentum system (coercivity lost)".into(),
            ))
        }
    };
    let resid = (&ar * &sol - &rr).norm();
    if resid > tol_lin * (1.0 + rr.norm()) {
        return Err(SimError::Assembly(format!(
            "momentum linear solve residual {resid:.3e} exceeds tolerance"
        )));
    }
    let mut full = DVector::zeros(a.nrows());
    for (p, &i) in free.iter().enumerate() {
        full[i] = sol[p];
    }
    Ok(full)
}

/// One linear (or ν-regularized Newton) momentum solve:
/// M(v − v_prev)/τ + V_{a(χ_prev)} v + E_{b(χ_k)} uᵏ + C_ρ(θᵏ) = fᵏ,
/// v = (uᵏ − u_prev)/τ, homogeneous Dirichlet on the whole boundary.
#[allow(clippy::too_many_arguments)]
pub fn solve_momentum_subsystem(
    mesh: &Mesh,
    params: &MaterialParams,
    u_prev: &[f64],
    v_prev: &[f64],
    chi_prev: &[f64],
    chi_k: &[f64],
    theta_k: &[f64],
    f_k: &[f64],
    tau: f64,
    opts: &RunOptions,
) -> Result<Vec<f64>> {
    let d = mesh.dim;
    let n = mesh.n_nodes();
    let a_nodal: Vec<f64> = chi_prev.iter().map(|&c| params.a(c)).collect();
    let b_nodal: Vec<f64> = chi_k.iter().map(|&c| params.b(c)).collect();
    let mass = consistent_mass_vector(mesh).matrix;
    let visc = assemble_weighted_form(
        mesh,
        &a_nodal,
        &params.elastic,
        params.omega,
        OperatorKind::ViscousVEta,
    )?
    .matrix;
    let elast = assemble_weighted_form(
        mesh,
        &b_nodal,
        &params.elastic,
        1.0,
        OperatorKind::ElasticEEta,
    )?
    .matrix;
    let coupling = assemble_coupling(mesh, theta_k, params.rho);
    let lm = lumped_mass(mesh);

    let a_mat = &mass / (tau * tau) + &visc / tau + &elast;
    let up = DVector::from_column_slice(u_prev);
    let vp = DVector::from_column_slice(v_prev);
    let mut rhs = &mass * (&up / (tau * tau) + &vp / tau) + &visc * (&up / tau) - coupling;
    for i in 0..n {
        for c in 0..d {
            rhs[d * i + c] += lm[i] * f_k[d * i + c];
        }
    }
    let free = free_u_dofs(mesh);

    match opts.nu_higher_order {
        None => {
            let u = reduced_solve_spd(&a_mat, &rhs, &free, opts.tol_lin)?;
            Ok(u.iter().cloned().collect())
        }
        Some((nu, eta)) => {
            // damped Newton on A u + ν-term(u) = rhs
            let mut u = up.clone();
            for it in 0..50 {
                let r = &a_mat * &u + nu_strain_residual(mesh, u.as_slice(), nu, eta) - &rhs;
                let rn = free.iter().map(|&i| r[i].abs()).fold(0.0, f64::max);
                if rn <= opts.tol_lin.max(1e-12) * (1.0 + rhs.amax()) {
                    return Ok(u.iter().cloned().collect());
                }
                let j = &a_mat + nu_strain_jacobian(mesh, u.as_slice(), nu, eta);
                let neg_r = -&r;
                let delta = reduced_solve_spd(&j, &neg_r, &free, 1e-10)?;
                let mut alpha = 1.0;
                for _ in 0..30 {
                    let trial = &u + alpha * &delta;
                    let rt = &a_mat * &trial + nu_strain_residual(mesh, trial.as_slice(), nu, eta)
                        - &rhs;
                    let rtn = free.iter().map(|&i| rt[i].abs()).fold(0.0, f64::max);
                    if rtn < rn {
                        u = trial;
                        break;
                    }
                    alpha *= 0.5;
                }
                if it == 49 {
                    return Err(SimError::SolverFailure {
                        context: "nu-regularized momentum solve".into(),
                        residual: rn,
                        iterations: it,
                        last_iterate: u.iter().cloned().collect(),
                    });
                }
            }
            Ok(u.iter().cloned().collect())
        }
    }
}

/// Newton solve of the lumped heat step:
/// mᵢ(θᵢ−θᵖᵢ)/τ + mᵢ ℓᵢ 𝒯_M(θᵢ) + 𝒜(θ)ᵢ = rhsᵢ (flux inside 𝒜).
#[allow(clippy::too_many_arguments)]
pub fn solve_heat_step(
    mesh: &Mesh,
    theta_prev: &[f64],
    ell: &[f64],
    rhs_lumped: &DVector<f64>,
    h_nodal: &[f64],
    tau: f64,
    cond: Conductivity,
    m_trunc: Option<f64>,
    tol: f64,
) -> Result<(Vec<f64>, usize)> {
    let n = mesh.n_nodes();
    let lm = lumped_mass(mesh);
    let tp = DVector::from_column_slice(theta_prev);
    let trunc = |x: f64| match m_trunc {
        Some(m) => crate::material::truncate_value(x, m),
        None => x,
    };
    let trunc_d = |x: f64| match m_trunc {
        Some(m) => {
            if x.abs() < m {
                1.0
            } else {
                0.0
            }
        }
        None => 1.0,
    };
    let residual = |theta: &DVector<f64>| -> DVector<f64> {
        let mut r = assemble_heat_residual(mesh, theta.as_slice(), cond, h_nodal);
        for i in 0..n {
            r[i] += lm[i] * ((theta[i] - tp[i]) / tau + ell[i] * trunc(theta[i])) - rhs_lumped[i];
        }
        r
    };
    let mut theta = tp.clone();
    let mut r = residual(&theta);
    let scale = 1.0 + rhs_lumped.amax() + tp.amax();
    let mut iters = 0;
    while r.amax() > tol * scale.max(1.0) {
        iters += 1;
        if iters > 60 {
            return Err(SimError::SolverFailure {
                context: "heat subsystem Newton".into(),
                residual: r.amax(),
                iterations: iters,
                last_iterate: theta.iter().cloned().collect(),
            });
        }
        let mut j = assemble_heat_jacobian(mesh, theta.as_slice(), cond);
        for i in 0..n {
            j[(i, i)] += lm[i] * (1.0 / tau + ell[i] * trunc_d(theta[i]));
        }
        let delta = j
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| SimError::Assembly("singular heat Jacobian".into()))?;
        let base_norm = r.norm();
        let mut alpha = 1.0;
        let mut stepped = false;
        for _ in 0..40 {
            let trial = &theta + alpha * &delta;
            let rt = residual(&trial);
            if rt.norm() < base_norm * (1.0 - 1e-4 * alpha) || rt.amax() <= tol * scale {
                theta = trial;
                r = rt;
                stepped = true;
                break;
            }
            alpha *= 0.5;
        }
        if !stepped {
            return Err(SimError::SolverFailure {
                context: "heat subsystem line search".into(),
                residual: r.amax(),
                iterations: iters,
                last_iterate: theta.iter().cloned().collect(),
            });
        }
    }
    Ok((theta.iter().cloned().collect(), iters))
}

/// Builds the lumped right-hand side of the heat step and the reaction field
/// ℓ = χ-rate + ρ·div(v) from the current iterates. Returns (ℓ, rhs).
#[allow(clippy::too_many_arguments)]
pub fn heat_step_fields(
    mesh: &Mesh,
    params: &MaterialParams,
    chi_prev: &[f64],
    chi_k: &[f64],
    u_prev: &[f64],
    u_k: &[f64],
    tau: f64,
    data: &StepData,
) -> (Vec<f64>, DVector<f64>) {
    let n = mesh.n_nodes();
    let d = mesh.dim;
    let lm = lumped_mass(mesh);
    let rate_u: Vec<f64> = (0..d * n).map(|i| (u_k[i] - u_prev[i]) / tau).collect();
    let mut div_elem = vec![0.0; mesh.n_elements()];
    let mut visc_elem = vec![0.0; mesh.n_elements()];
    let a_nodal: Vec<f64> = chi_prev.iter().map(|&c| params.a(c)).collect();
    for e in 0..mesh.n_elements() {
        div_elem[e] = element_divergence(mesh, e, &rate_u);
        let eps = element_strain(mesh, e, &rate_u);
        let a_e = mesh.elements[e].iter().map(|&i| a_nodal[i]).sum::<f64>() / (d as f64 + 1.0);
        visc_elem[e] = a_e * params.omega * elastic_contraction(&eps, &params.elastic, d);
    }
    let div_nodal = scatter_to_nodes(mesh, &div_elem, &lm);
    let visc_nodal = scatter_to_nodes(mesh, &visc_elem, &lm);
    let mut ell = vec![0.0; n];
    let mut rhs = DVector::zeros(n);
    let quad_coeff = 1.0 + tau.sqrt() / 2.0;
    for i in 0..n {
        let rate_chi = (chi_k[i] - chi_prev[i]) / tau;
        ell[i] = rate_chi + params.rho * div_nodal[i];
        rhs[i] = lm[i] * (data.g[i] + visc_nodal[i] + quad_coeff * rate_chi * rate_chi);
    }
    (ell, rhs)
}

/// Spec-level heat subsystem: assembles ℓ and the source from the states and
/// runs the Newton solve with truncation level M.
#[allow(clippy::too_many_arguments)]
pub fn solve_heat_subsystem(
    mesh: &Mesh,
    params: &MaterialParams,
    theta_prev: &[f64],
    chi_prev: &[f64],
    chi_k: &[f64],
    u_prev: &[f64],
    u_k: &[f64],
    tau: f64,
    m_trunc: f64,
    data: &StepData,
    tol: f64,
) -> Result<(Vec<f64>, usize)> {
    let (ell, rhs) = heat_step_fields(mesh, params, chi_prev, chi_k, u_prev, u_k, tau, data);
    solve_heat_step(
        mesh,
        theta_prev,
        &ell,
        &rhs,
        &data.h,
        tau,
        Conductivity::Truncated { params, m: m_trunc },
        Some(m_trunc),
        tol,
    )
}

fn rel_increment(new: &[f64], old: &[f64]) -> f64 {
    let scale = 1.0 + old.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    new.iter()
        .zip(old)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / scale
}

/// One fully implicit coupled step at fixed truncation level. Errors signal
/// fixed-point non-convergence (caller halves τ) or M-insufficiency (caller
/// doubles M).
#[allow(clippy::too_many_arguments)]
fn coupled_fixed_point(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    prev: &State,
    data: &StepData,
    tau: f64,
    m_trunc: f64,
    opts: &RunOptions,
) -> Result<(State, bool)> {
    let mut theta = prev.theta.clone();
    let mut u = prev.u.clone();
    let mut chi = prev.chi.clone();
    let mut xi = vec![0.0; chi.len()];
    let mut zeta = vec![0.0; chi.len()];
    let chi_opts = ChiSolverOptions {
        tol: opts.tol_chi,
        max_iter: 300,
    };
    let mut diag = StepDiagnostics {
        tau,
        m_used: m_trunc,
        ..Default::default()
    };
    let mut converged = false;
    for outer in 1..=opts.max_outer {
        // χ-solve with the current θ iterate (b′ implicit, strain explicit)
        let mut ctx = ChiStepContext::new(
            mesh,
            params,
            potential,
            prev.chi.clone(),
            theta.clone(),
            &prev.u,
            tau,
            opts.nu,
            opts.grad_mode,
        )?;
        ctx.nu_higher_order = opts.nu_higher_order;
        let chi_sol = solve_chi_step(&ctx, &chi_opts)?;
        // u-solve with a(χ_prev) explicit and b(χᵏ) implicit
        let u_new = solve_momentum_subsystem(
            mesh,
            params,
            &prev.u,
            &prev.v,
            &prev.chi,
            &chi_sol.chi,
            &theta,
            &data.f,
            tau,
            opts,
        )?;
        // θ-solve with the updated rates
        let (theta_new, heat_iters) = solve_heat_subsystem(
            mesh,
            params,
            &prev.theta,
            &prev.chi,
            &chi_sol.chi,
            &prev.u,
            &u_new,
            tau,
            m_trunc,
            data,
            opts.tol_heat,
        )?;

        let incr = rel_increment(&chi_sol.chi, &chi)
            .max(rel_increment(&u_new, &u))
            .max(rel_increment(&theta_new, &theta));
        chi = chi_sol.chi;
        xi = chi_sol.xi;
        zeta = chi_sol.zeta;
        u = u_new;
        theta = theta_new;
        diag.outer_iterations = outer;
        diag.heat_iterations += heat_iters;
        diag.chi_iterations += chi_sol.stats.iterations;
        diag.fp_increment = incr;
        if incr < opts.tol_fp {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SimError::SolverFailure {
            context: "coupled fixed point".into(),
            residual: diag.fp_increment,
            iterations: diag.outer_iterations,
            last_iterate: theta,
        });
    }
    let max_theta = theta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let m_ok = max_theta <= m_trunc;
    let d = mesh.dim;
    let v: Vec<f64> = (0..d * mesh.n_nodes())
        .map(|i| (u[i] - prev.u[i]) / tau)
        .collect();
    let state = State {
        time: prev.time + tau,
        theta,
        u,
        v,
        chi,
        xi,
        zeta,
        diag,
    };
    Ok((state, m_ok))
}

/// One accepted time step: runs the fixed point, doubling M and re-solving
/// until the truncation is inactive on the solution.
#[allow(clippy::too_many_arguments)]
pub fn solve_time_step(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    prev: &State,
    data: &StepData,
    tau: f64,
    m_start: f64,
    opts: &RunOptions,
) -> Result<(State, f64)> {
    let mut m_trunc = m_start;
    loop {
        let (state, m_ok) =
            coupled_fixed_point(mesh, params, potential, prev, data, tau, m_trunc, opts)?;
        if m_ok {
            let min_theta = state.theta.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            if min_theta <= 0.0 {
                return Err(SimError::SolverFailure {
                    context: "positivity violated at accepted step".into(),
                    residual: min_theta,
                    iterations: state.diag.outer_iterations,
                    last_iterate: state.theta.clone(),
                });
            }
            return Ok((state, m_trunc));
        }
        m_trunc *= 2.0;
        if m_trunc > 1e12 {
            return Err(SimError::SolverFailure {
                context: "truncation level diverged (theta unbounded)".into(),
                residual: m_trunc,
                iterations: 0,
                last_iterate: state.theta,
            });
        }
    }
}

/// Positivity floor: the implicit recursion (v_k − v_{k−1})/τ = −C v_k² from
/// v₀ = θ*, and the closed form θ*/(1 + C·T·θ*); the recursion end never
/// falls below the closed form.
pub fn positivity_floor(theta_star: f64, c_est: f64, horizon: f64, tau: f64) -> (f64, Vec<f64>) {
    let closed = theta_star / (1.0 + c_est * horizon * theta_star);
    let k_steps = (horizon / tau).round().max(0.0) as usize;
    let mut vs = Vec::with_capacity(k_steps + 1);
    vs.push(theta_star);
    let mut v = theta_star;
    for _ in 0..k_steps {
        let a = c_est * tau;
        v = if a * v < 1e-12 {
            // series limit of the quadratic formula as C·τ → 0
            v * (1.0 - a * v)
        } else {
            (-1.0 + (1.0 + 4.0 * a * v).sqrt()) / (2.0 * a)
        };
        vs.push(v);
    }
    (closed, vs)
}

/// Observed constant for the floor: sup over steps of
/// ‖(χ-rate)⁻ + ρ|div v|‖_∞.
pub fn observed_floor_constant(mesh: &Mesh, params: &MaterialParams, traj: &Trajectory) -> f64 {
    let lm = lumped_mass(mesh);
    let mut c = 0.0f64;
    for k in 1..traj.states.len() {
        let s = &traj.states[k];
        let sp = &traj.states[k - 1];
        let tau = s.diag.tau;
        let div_elem: Vec<f64> = (0..mesh.n_elements())
            .map(|e| element_divergence(mesh, e, &s.v))
            .collect();
        let div_nodal = scatter_to_nodes(mesh, &div_elem, &lm);
        for i in 0..mesh.n_nodes() {
            let rate = (s.chi[i] - sp.chi[i]) / tau;
            let val = (-rate).max(0.0) + params.rho * div_nodal[i].abs();
            c = c.max(val);
        }
    }
    c
}

/// Validated initial fields.
#[derive(Debug, Clone)]
pub struct InitialState {
    pub theta0: Vec<f64>,
    pub u0: Vec<f64>,
    pub v0: Vec<f64>,
    pub chi0: Vec<f64>,
}

pub fn validate_initial(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    init: &InitialState,
    laplacian_mode: bool,
) -> Vec<String> {
    let mut errs = Vec::new();
    if init.theta0.iter().any(|&t| t < params.theta_star - 1e-14) {
        errs.push(format!(
            "initial-data condition on theta_0: inf theta_0 >= theta_* = {} > 0 violated",
            params.theta_star
        ));
    }
    if potential.beta_hat.is_indicator() && init.chi0.iter().any(|&c| c < 0.0) {
        errs.push(
            "initial-data condition on chi_0: beta_hat(chi_0) must be finite (chi_0 >= 0)".into(),
        );
    }
    if (params.irreversible() || laplacian_mode) && init.chi0.iter().any(|&c| c > 1.0) {
        errs.push(
            "initial-data condition on chi_0: chi_0 <= 1 required for the irreversible evolution"
                .into(),
        );
    }
    let d = mesh.dim;
    for i in mesh.dirichlet_nodes() {
        for c in 0..d {
            if init.u0[d * i + c] != 0.0 || init.v0[d * i + c] != 0.0 {
                errs.push(
                    "initial-data condition on u_0, v_0: homogeneous Dirichlet values required on the boundary"
                        .into(),
                );
                return errs;
            }
        }
    }
    errs
}

/// Runs the full time loop, producing K_τ + 1 states. On step failure the
/// current step size halves (and stays halved); below `min_tau` the run
/// aborts with the failure diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn run_simulation(
    mesh: &Mesh,
    params: &MaterialParams,
    potential: &PotentialW,
    sources: &Sources,
    init: &InitialState,
    horizon: f64,
    tau0: f64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    let errs = validate_initial(mesh, params, potential, init, false);
    if !errs.is_empty() {
        return Err(SimError::Config(errs));
    }
    let max_theta0 = init.theta0.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut m_trunc = match opts.m_policy {
        MPolicy::Auto => 10.0 * (1.0 + max_theta0),
        MPolicy::Fixed(m) => m,
    };
    let initial = State {
        time: 0.0,
        theta: init.theta0.clone(),
        u: init.u0.clone(),
        v: init.v0.clone(),
        chi: init.chi0.clone(),
        xi: vec![0.0; mesh.n_nodes()],
        zeta: vec![0.0; mesh.n_nodes()],
        diag: StepDiagnostics {
            tau: tau0,
            m_used: m_trunc,
            ..Default::default()
        },
    };
    let mut traj = Trajectory {
        states: vec![initial],
        step_data: Vec::new(),
    };
    let mut t = 0.0;
    let mut tau = tau0;
    let t_end = horizon * (1.0 - 1e-12);
    while t < t_end {
        let tau_k = tau.min(horizon - t);
        let data = local_means_interval(sources, t, t + tau_k)?;
        let prev = traj.states.last().unwrap();
        match solve_time_step(mesh, params, potential, prev, &data, tau_k, m_trunc, opts) {
            Ok((state, m_new)) => {
                m_trunc = m_new;
                t = state.time;
                traj.states.push(state);
                traj.step_data.push(data);
            }
            Err(SimError::SolverFailure {
                context,
                residual,
                iterations,
                last_iterate: _,
            }) => {
                tau *= 0.5;
                eprintln!(
                    "step at t={t:.6} failed in {context} (residual {residual:.3e}, \
                     {iterations} its); retrying with tau={tau:.3e}"
                );
                if tau < opts.min_tau {
                    return Err(SimError::RunAborted {
                        time: t,
                        reason: format!(
                            "step below min_tau after repeated failures: {context} \
                             (residual {residual:.3e}, {iterations} iterations)"
                        ),
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}
