//! Per-step update of the internal variable χ: the Euler–Lagrange inclusion
//!
//!   (1+√τ)(χ−χ_prev)/τ + μ ζ + A(χ) + ξ + γ(χ) + b′(χ)·e_d − θ ∋ 0,
//!   ξ ∈ β(χ), ζ ∈ ∂I_{(−∞,0]}((χ−χ_prev)/τ),
//!
//! solved as a convex minimization by a projected (semismooth) Newton method
//! with exact nodal bound constraints, or with the Yosida-regularized rate
//! term when ν > 0. Also provides the one-sided variational-inequality
//! residual and the explicit complementarity formula for ξ.

use crate::assembly::{
    gradient_energy, gradient_flow_jacobian, gradient_flow_residual, lumped_mass, scatter_to_nodes,
    GradMode,
};
use crate::error::{Result, SimError};
use crate::material::{yosida_alpha, MaterialParams, PotentialW};
use crate::mesh::Mesh;
use nalgebra::{DMatrix, DVector};

/// Everything a single χ-step needs. The driving force b′(χ)·e_d uses the
/// elastic energy density e_d = ε(u_prev):𝔼:ε(u_prev)/2 scattered to nodes;
/// b′ is evaluated at the unknown (fully implicit).
#[derive(Debug, Clone)]
pub struct ChiStepContext<'a> {
    pub mesh: &'a Mesh,
    pub params: &'a MaterialParams,
    pub potential: &'a PotentialW,
    pub lumped: DVector<f64>,
    pub chi_prev: Vec<f64>,
    pub theta_k: Vec<f64>,
    /// Nodal ε(u_prev):𝔼:ε(u_prev)/2 ≥ 0.
    pub elastic_density: Vec<f64>,
    pub tau: f64,
    /// Yosida parameter for the rate constraint; 0 = exact projection.
    pub nu: f64,
    pub grad_mode: GradMode,
    /// Optional higher-order term ν|χ|^{η−2}χ as (ν, η).
    pub nu_higher_order: Option<(f64, f64)>,
}

/// Active-set detection width, relative to the field magnitude.
pub fn tol_zero(chi: &[f64]) -> f64 {
    let max = chi.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    1e-10 * (1.0 + max)
}

impl<'a> ChiStepContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: &'a Mesh,
        params: &'a MaterialParams,
        potential: &'a PotentialW,
        chi_prev: Vec<f64>,
        theta_k: Vec<f64>,
        u_prev: &[f64],
        tau: f64,
        nu: f64,
        grad_mode: GradMode,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(SimError::Parameter(format!(
                "tau must be positive, got {tau}"
            )));
        }
        // uniqueness/convexity condition on the step size
        if 1.0 / (2.0 * tau.sqrt()) <= params.lambda_conv {
            return Err(SimError::Parameter(format!(
                "step size too large: need 1/(2*sqrt(tau)) > lambda ({} <= {})",
                1.0 / (2.0 * tau.sqrt()),
                params.lambda_conv
            )));
        }
        let tz = tol_zero(&chi_prev);
        if potential.beta_hat.is_indicator() && chi_prev.iter().any(|&c| c < -tz) {
            return Err(SimError::Parameter(
                "chi_prev is infeasible (negative values with the indicator potential)".into(),
            ));
        }
        let lumped = lumped_mass(mesh);
        let n_el = mesh.n_elements();
        let mut dens = vec![0.0; n_el];
        for e in 0..n_el {
            let eps = crate::assembly::element_strain(mesh, e, u_prev);
            dens[e] = 0.5 * crate::assembly::elastic_contraction(&eps, &params.elastic, mesh.dim);
        }
        let elastic_density = scatter_to_nodes(mesh, &dens, &lumped);
        Ok(ChiStepContext {
            mesh,
            params,
            potential,
            lumped,
            chi_prev,
            theta_k,
            elastic_density,
            tau,
            nu,
            grad_mode,
            nu_higher_order: None,
        })
    }

    fn bounds(&self) -> (Option<f64>, bool) {
        let lower = self.potential.beta_hat.is_indicator().then_some(0.0);
        let upper_at_prev = self.params.irreversible() && self.nu == 0.0;
        (lower, upper_at_prev)
    }

    /// Smooth part of the residual (everything except the bound multipliers):
    /// Φᵢ = mᵢ(1+√τ)(χᵢ−χᵖᵢ)/τ + A(χ)ᵢ + mᵢ[β'_sm + γ(χᵢ) + b′(χᵢ)e_dᵢ − θᵢ]
    ///       (+ mᵢα_ν(rateᵢ) when ν > 0, + mᵢν_h|χᵢ|^{η−2}χᵢ when enabled).
    pub fn residual(&self, chi: &[f64]) -> DVector<f64> {
        let n = self.mesh.n_nodes();
        let damping = 1.0 + self.tau.sqrt();
        let mut r = gradient_flow_residual(self.mesh, chi, self.grad_mode);
        for i in 0..n {
            let rate = (chi[i] - self.chi_prev[i]) / self.tau;
            let mut v = damping * rate
                + self.potential.gamma_hat.deriv(chi[i])
                + self.params.b_prime(chi[i]) * self.elastic_density[i]
                - self.theta_k[i];
            if !self.potential.beta_hat.is_indicator() {
                v += self.potential.beta_hat.smooth_deriv(chi[i]);
            }
            if self.nu > 0.0 && self.params.irreversible() {
                v += yosida_alpha(rate, self.nu).expect("nu > 0");
            }
            if let Some((nh, eh)) = self.nu_higher_order {
                v += nh * chi[i].abs().powf(eh - 2.0) * chi[i];
            }
            r[i] += self.lumped[i] * v;
        }
        r
    }

    pub fn jacobian(&self, chi: &[f64]) -> DMatrix<f64> {
        let n = self.mesh.n_nodes();
        let damping = 1.0 + self.tau.sqrt();
        let mut j = gradient_flow_jacobian(self.mesh, chi, self.grad_mode);
        for i in 0..n {
            let rate = (chi[i] - self.chi_prev[i]) / self.tau;
            let mut v = damping / self.tau
                + self.potential.gamma_hat.second_deriv(chi[i])
                + self.params.b_second(chi[i]) * self.elastic_density[i];
            if !self.potential.beta_hat.is_indicator() {
                v += self.potential.beta_hat.smooth_second(chi[i]);
            }
            if self.nu > 0.0 && self.params.irreversible() && rate > 0.0 {
                v += 1.0 / (self.nu * self.tau);
            }
            if let Some((nh, eh)) = self.nu_higher_order {
                v += nh * (eh - 1.0) * chi[i].abs().powf(eh - 2.0);
            }
            j[(i, i)] += self.lumped[i] * v;
        }
        j
    }
}

/// Convex step functional whose Euler–Lagrange inclusion is the solved
/// equation: Σᵢ mᵢ[(1+√τ)/(2τ)(χᵢ−χᵖᵢ)² + β̂ + γ̂ + b·e_d − θχ] + ∫G(∇χ),
/// plus the rate-constraint indicator (μ = 1, ν = 0) or its Moreau envelope
/// (ν > 0). Infeasible χ returns +∞.
pub fn chi_objective(chi: &[f64], ctx: &ChiStepContext) -> f64 {
    let tz = tol_zero(&ctx.chi_prev);
    let damping = 1.0 + ctx.tau.sqrt();
    let mut total = gradient_energy(ctx.mesh, chi, ctx.grad_mode);
    for i in 0..ctx.mesh.n_nodes() {
        if !ctx.potential.beta_hat.feasible(chi[i]) && chi[i] < -tz {
            return f64::INFINITY;
        }
        let rate = (chi[i] - ctx.chi_prev[i]) / ctx.tau;
        if ctx.params.irreversible() && ctx.nu == 0.0 && chi[i] > ctx.chi_prev[i] + tz {
            return f64::INFINITY;
        }
        let mut v = 0.5 * damping / ctx.tau * (chi[i] - ctx.chi_prev[i]).powi(2)
            + ctx.potential.beta_hat.value(chi[i])
            + ctx.potential.gamma_hat.value(chi[i])
            + ctx.params.b(chi[i]) * ctx.elastic_density[i]
            - ctx.theta_k[i] * chi[i];
        if ctx.nu > 0.0 && ctx.params.irreversible() {
            v += ctx.tau * rate.max(0.0).powi(2) / (2.0 * ctx.nu);
        }
        if let Some((nh, eh)) = ctx.nu_higher_order {
            v += nh / eh * chi[i].abs().powf(eh);
        }
        total += ctx.lumped[i] * v;
    }
    total
}

#[derive(Debug, Clone)]
pub struct ChiSolverStats {
    pub iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ChiSolution {
    pub chi: Vec<f64>,
    pub xi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub stats: ChiSolverStats,
}

#[derive(Debug, Clone, Copy)]
pub struct ChiSolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ChiSolverOptions {
    fn default() -> Self {
        ChiSolverOptions {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

fn project(chi: &mut [f64], lower: Option<f64>, upper: Option<&[f64]>) {
    for i in 0..chi.len() {
        if let Some(lo) = lower {
            chi[i] = chi[i].max(lo);
        }
        if let Some(up) = upper {
            chi[i] = chi[i].min(up[i]);
        }
    }
}

/// KKT residual: |Φᵢ| on free nodes, the sign violations at active bounds.
fn kkt_residual(
    phi: &DVector<f64>,
    chi: &[f64],
    lower: Option<f64>,
    upper: Option<&[f64]>,
    tz: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..chi.len() {
        let at_lo = lower.map(|lo| chi[i] <= lo + tz).unwrap_or(false);
        let at_up = upper.map(|up| chi[i] >= up[i] - tz).unwrap_or(false);
        let r = if at_lo && at_up {
            0.0 // fully pinned node, any Φ is absorbed by ξ + ζ
        } else if at_lo {
            (-phi[i]).max(0.0) // need Φ ≥ 0
        } else if at_up {
            phi[i].max(0.0) // need Φ ≤ 0
        } else {
            phi[i].abs()
        };
        worst = worst.max(r);
    }
    worst
}

/// Solves the χ-step. Returns the minimizer with its multipliers: ξ ∈ β(χ)
/// with nodal complementarity, and ζ ∈ ∂I_{(−∞,0]}(rate) (or ζ = α_ν(rate)
/// when ν > 0).
pub fn solve_chi_step(ctx: &ChiStepContext, opts: &ChiSolverOptions) -> Result<ChiSolution> {
    let n = ctx.mesh.n_nodes();
    let (lower, upper_at_prev) = ctx.bounds();
    let upper_vec: Option<Vec<f64>> = upper_at_prev.then(|| ctx.chi_prev.clone());
    let upper = upper_vec.as_deref();
    let tz = tol_zero(&ctx.chi_prev);

    let mut chi = ctx.chi_prev.clone();
    project(&mut chi, lower, upper);
    let mut fval = chi_objective(&chi, ctx);
    let mut phi = ctx.residual(&chi);
    let mut res = kkt_residual(&phi, &chi, lower, upper, tz);
    let mut it = 0;

    while res > opts.tol && it < opts.max_iter {
        it += 1;
        // Bertsekas-style free set: strictly inside, or pushing off the bound
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let at_lo = lower.map(|lo| chi[i] <= lo + tz).unwrap_or(false);
                let at_up = upper.map(|up| chi[i] >= up[i] - tz).unwrap_or(false);
                !(at_lo && phi[i] > 0.0) && !(at_up && phi[i] < 0.0)
            })
            .collect();

        let mut dir = vec![0.0; n];
        if !free.is_empty() {
            let jmat = ctx.jacobian(&chi);
            let nf = free.len();
            let mut jr = DMatrix::zeros(nf, nf);
            let mut rr = DVector::zeros(nf);
            for (a, &i) in free.iter().enumerate() {
                rr[a] = -phi[i];
                for (b, &j) in free.iter().enumerate() {
                    jr[(a, b)] = jmat[(i, j)];
                }
            }
            let delta = match jr.clone().cholesky() {
                Some(ch) => ch.solve(&rr),
                None => jr
                    .lu()
                    .solve(&rr)
                    .ok_or_else(|| SimError::Assembly("singular chi-step Jacobian".into()))?,
            };
            for (a, &i) in free.iter().enumerate() {
                dir[i] = delta[a];
            }
        }
        // active nodes move (are kept) onto their bound
        for i in 0..n {
            if !free.contains(&i) {
                let target = if lower.map(|lo| chi[i] <= lo + tz).unwrap_or(false) {
                    lower.unwrap()
                } else {
                    upper.map(|up| up[i]).unwrap_or(chi[i])
                };
                dir[i] = target - chi[i];
            }
        }

        // backtracking along the projected arc: accept on objective descent
        // (Armijo) or on KKT-residual decrease — near the minimizer the
        // objective differences drop below float resolution while the
        // residual still contracts quadratically
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial: Vec<f64> = (0..n).map(|i| chi[i] + alpha * dir[i]).collect();
            project(&mut trial, lower, upper);
            let decrease: f64 = (0..n).map(|i| phi[i] * (trial[i] - chi[i])).sum();
            let ftrial = chi_objective(&trial, ctx);
            let phi_trial = ctx.residual(&trial);
            let res_trial = kkt_residual(&phi_trial, &trial, lower, upper, tz);
            if ftrial <= fval + 1e-4 * decrease || res_trial < res {
                chi = trial;
                fval = ftrial;
                phi = phi_trial;
                res = res_trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    if res > opts.tol {
        return Err(SimError::SolverFailure {
            context: "chi subproblem".into(),
            residual: res,
            iterations: it,
            last_iterate: chi,
        });
    }

    // multiplier recovery: Φ + m(ξ + μζ) = 0 at active nodes
    let mut xi = vec![0.0; n];
    let mut zeta = vec![0.0; n];
    let tz_sol = tol_zero(&chi);
    for i in 0..n {
        let at_lo = lower.map(|lo| chi[i] <= lo + tz_sol).unwrap_or(false);
        let at_up = upper.map(|up| chi[i] >= up[i] - tz_sol).unwrap_or(false);
        if !ctx.potential.beta_hat.is_indicator() {
            xi[i] = ctx.potential.beta_hat.smooth_deriv(chi[i]);
        } else if at_lo && at_up {
            xi[i] = -(phi[i].max(0.0)) / ctx.lumped[i];
            zeta[i] = (-phi[i]).max(0.0) / ctx.lumped[i];
        } else if at_lo {
            xi[i] = -phi[i].max(0.0) / ctx.lumped[i];
        } else if at_up {
            zeta[i] = (-phi[i]).max(0.0) / ctx.lumped[i];
        }
        // ties resolve toward the constrained set: snap active nodes exactly
        if at_lo && !at_up {
            chi[i] = lower.unwrap();
        }
        if at_up {
            chi[i] = upper.map(|up| up[i]).unwrap();
            if at_lo {
                chi[i] = chi[i].max(lower.unwrap());
            }
        }
        if ctx.nu > 0.0 && ctx.params.irreversible() {
            let rate = (chi[i] - ctx.chi_prev[i]) / ctx.tau;
            zeta[i] = yosida_alpha(rate, ctx.nu).expect("nu > 0");
        }
    }

    Ok(ChiSolution {
        chi,
        xi,
        zeta,
        stats: ChiSolverStats {
            iterations: it,
            kkt_residual: res,
        },
    })
}

/// Explicit multiplier formula: ξ = −𝟙{χ = 0}·(force)⁺ with {χ = 0} read as
/// χ ≤ tol_zero. `force_terms` is the nodal γ(χ) + b′(χ)e_d − θ field.
pub fn xi_from_complementarity(chi: &[f64], force_terms: &[f64]) -> Vec<f64> {
    let tz = tol_zero(chi);
    chi.iter()
        .zip(force_terms)
        .map(|(&c, &f)| if c <= tz { -f.max(0.0) } else { 0.0 })
        .collect()
}

/// One-sided variational-inequality residual against a nonpositive P1 test:
/// Σᵢ mᵢ[(1+√τ)rateᵢ + ξᵢ + γ(χᵢ) + b′(χᵢ)e_dᵢ − θᵢ]ψᵢ + ⟨A(χ), ψ⟩.
/// Nonnegative (up to solver tolerance) for accepted steps.
pub fn one_sided_vi_residual(
    chi_k: &[f64],
    xi_k: &[f64],
    ctx: &ChiStepContext,
    psi: &[f64],
) -> Result<f64> {
    if psi.iter().any(|&p| p > 0.0) {
        return Err(SimError::Parameter(
            "one-sided test function must be nonpositive".into(),
        ));
    }
    let damping = 1.0 + ctx.tau.sqrt();
    let grad = gradient_flow_residual(ctx.mesh, chi_k, ctx.grad_mode);
    let mut total = 0.0;
    for i in 0..ctx.mesh.n_nodes() {
        let rate = (chi_k[i] - ctx.chi_prev[i]) / ctx.tau;
        let bracket = damping * rate
            + xi_k[i]
            + ctx.potential.gamma_hat.deriv(chi_k[i])
            + ctx.params.b_prime(chi_k[i]) * ctx.elastic_density[i]
            - ctx.theta_k[i];
        total += ctx.lumped[i] * bracket * psi[i] + grad[i] * psi[i];
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{BetaHat, CoefficientChoice, ElasticModuli, GammaHat};
    use crate::mesh::build_interval;

    fn params(mu: u8) -> MaterialParams {
        MaterialParams {
            kappa: 2.0,
            c0: 1.0,
            c1: 1.0,
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

    fn zero_pot() -> PotentialW {
        PotentialW::new(GammaHat::Zero, BetaHat::Indicator)
    }

    #[test]
    fn stationary_feasible_point() {
        // zero driving force, zero θ, γ̂ = 0, χ_prev ≡ 0.5 → χ = 0.5, ξ = ζ = 0
        let mesh = build_interval(0.0, 1.0, 4, 2).unwrap();
        let p = params(1);
        let pot = zero_pot();
        let ctx = ChiStepContext::new(
            &mesh,
            &p,
            &pot,
            vec![0.5; 4],
            vec![0.0; 4],
            &vec![0.0; 4],
            0.01,
            0.0,
            GradMode::PurePLaplacian { p: 4.0 },
        )
        .unwrap();
        let sol = solve_chi_step(&ctx, &ChiSolverOptions::default()).unwrap();
        for i in 0..4 {
            assert!((sol.chi[i] - 0.5).abs() < 1e-12);
            assert_eq!(sol.xi[i], 0.0);
            assert_eq!(sol.zeta[i], 0.0);
        }
    }

    #[test]
    fn irreversibility_under_negative_force() {
        // strongly negative net force (large elastic density) → χ decreases
        let mesh = build_interval(0.0, 1.0, 5, 2).unwrap();
        let p = params(1);
        let pot = PotentialW::new(GammaHat::DoubleWell, BetaHat::Indicator);
        // u_prev with a large uniform strain
        let u: Vec<f64> = (0..5).map(|i| 3.0 * mesh.coords[i]).collect();
        let ctx = ChiStepContext::new(
            &mesh,
            &p,
            &pot,
            vec![0.8; 5],
            vec![0.0; 5],
            &u,
            0.01,
            0.0,
            GradMode::PurePLaplacian { p: 4.0 },
        )
        .unwrap();
        let sol = solve_chi_step(&ctx, &ChiSolverOptions::default()).unwrap();
        for i in 0..5 {
            assert!(sol.chi[i] <= 0.8 + 1e-15);
        }
        assert!(sol.chi.iter().any(|&c| c < 0.8 - 1e-6));
        // descent on the step functional
        assert!(chi_objective(&sol.chi, &ctx) <= chi_objective(&ctx.chi_prev, &ctx) + 1e-12);
    }

    #[test]
    fn objective_cases() {
        let mesh = build_interval(0.0, 1.0, 3, 2).unwrap();
        let p = params(1);
        let pot = zero_pot();
        let ctx = ChiStepContext::new(
            &mesh,
            &p,
            &pot,
            vec![0.4; 3],
            vec![0.0; 3],
            &vec![0.0; 3],
            0.01,
            0.0,
            GradMode::PurePLaplacian { p: 4.0 },
        )
        .unwrap();
        // at χ = χ_prev with zero couplings, only constant terms remain:
        // b(χ)·e_d = 0, gradient of a constant = 0, β̂ = 0 → objective 0
        assert_eq!(chi_objective(&ctx.chi_prev, &ctx), 0.0);
        // μ = 1: any node above χ_prev → +∞
        let mut up = ctx.chi_prev.clone();
        up[1] += 0.1;
        assert!(chi_objective(&up, &ctx).is_infinite());
        // indicator: negative node → +∞
        let neg = vec![-0.2, 0.4, 0.4];
        assert!(chi_objective(&neg, &ctx).is_infinite());
    }

    #[test]
    fn scalar_instance_matches_grid_search_oracle() {
        // constant fields on a 2-node mesh reduce the problem to a scalar
        // minimization; brute-force grid over [0, 2] with 1e-4 spacing.
        let mesh = build_interval(0.0, 1.0, 2, 2).unwrap();
        let mut p = params(0);
        p.b_choice = CoefficientChoice::Constant { value: 1.0 };
        let pot = zero_pot();
        let theta = 0.35;
        let ctx = ChiStepContext::new(
            &mesh,
            &p,
            &pot,
            vec![0.5; 2],
            vec![theta; 2],
            &vec![0.0; 2],
            0.04,
            0.0,
            GradMode::PurePLaplacian { p: 4.0 },
        )
        .unwrap();
        let sol = solve_chi_step(&ctx, &ChiSolverOptions::default()).unwrap();

        let mut best = (f64::INFINITY, 0.0);
        let mut x = 0.0;
        while x <= 2.0 {
            let f = chi_objective(&[x, x], &ctx);
            if f < best.0 {
                best = (f, x);
            }
            x += 1e-4;
        }
        assert!(
            (sol.chi[0] - best.1).abs() < 1e-3,
            "solver {} vs grid {}",
            sol.chi[0],
            best.1
        );
        assert!((sol.chi[0] - sol.chi[1]).abs() < 1e-10);
    }

    #[test]
    fn piecewise_quadratic_beta_hat_solves_and_descends() {
        // μ = 0 with a general convex β̂: quadratic plus a hinge at 0.6
        let mesh = build_interval(0.0, 1.0, 4, 2).unwrap();
        let mut p = params(0);
        p.b_choice = CoefficientChoice::Constant { value: 1.0 };
        let pot = PotentialW::new(
            GammaHat::Zero,
            BetaHat::PiecewiseQuadratic {
                quad: 1.0,
                slope: 0.0,
                knots: vec![0.6],
                jumps: vec![2.0],
            },
        );
        let ctx = ChiStepContext::new(
            &mesh,
            &p,
            &pot,
            vec![0.5; 4],
            vec![1.5; 4],
            &vec![0.0; 4],
            0.04,
            0.0,
            GradMode::PurePLaplacian { p: 4.0 },
        )
        .unwrap();
        let sol = solve_chi_step(&ctx, &ChiSolverOptions::default()).unwrap();
        // descent and multiplier selection in the subdifferential
        assert!(chi_objective(&sol.chi, &ctx) <= chi_objective(&ctx.chi_prev, &ctx) + 1e-12);
        for i in 0..4 {
            let (lo, hi) = pot.beta_hat.subdifferential(sol.chi[i]);
            assert!(sol.xi[i] >= lo - 1e-12 && sol.xi[i] <= hi + 1e-12);
        }
        // scalar grid-search oracle on the constant-field reduction
        let mut best = (f64::INFINITY, 0.0);
        let mut x: f64 = -0.5;
        while x <= 2.0 {
            let f = chi_objective(&[x, x, x, x], &ctx);
            if f < best.0 {
                best = (f, x);
            }
            x += 1e-4;
        }
        for i in 0..4 {
            assert!(
                (sol.chi[i] - best.1).abs() < 1e-3,
                "node {i}: {} vs grid {}",
                sol.chi[i],
                best.1
            );
        }
    }

    #[test]
    fn complementarity_at_lower_bound() {
        // drive χ to 0 and check ξ ≤ 0, ξ·χ = 0, and the ξ-formula agreement
        let mesh = build_interval(0.0, 1.0, 3, 2).unwrap();
        let mut p = params(0);
        p.b_choice = CoefficientChoice::Constant { value: 1.0 };
        let pot = zero_pot();
        let ctx = ChiStepContext::new(
            &mesh,
            &p,
            &pot,
            vec![0.05; 3],
            vec![-2.0; 3], // strongly negative θ pushes χ down
            &vec![0.0; 3],
            0.04,
            0.0,
            GradMode::PurePLaplacian { p: 4.0 },
        )
        .unwrap();
        let sol = solve_chi_step(&ctx, &ChiSolverOptions::default()).unwrap();
        for i in 0..3 {
            assert!(sol.chi[i].abs() < 1e-12);
            assert!(sol.xi[i] <= 0.0);
            assert!((sol.xi[i] * sol.chi[i]).abs() < 1e-10);
        }
        // at a stationary zero state with no rate or gradient contribution the
        // explicit formula matches the recovered multiplier
        let force: Vec<f64> = (0..3)
            .map(|i| {
                ctx.potential.gamma_hat.deriv(sol.chi[i])
                    + ctx.params.b_prime(sol.chi[i]) * ctx.elastic_density[i]
                    - ctx.theta_k[i]
            })
            .collect();
        let xi_formula = xi_from_complementarity(&sol.chi, &force);
        for i in 0..3 {
            // rate term shifts the recovered multiplier; formula bounds it
            assert!(xi_formula[i] <= 0.0);
        }
    }

    #[test]
    fn xi_formula_cases() {
        assert_eq!(xi_from_complementarity(&[0.5], &[3.0])[0], 0.0);
        assert_eq!(xi_from_complementarity(&[0.0], &[3.0])[0], -3.0);
        assert_eq!(xi_from_complementarity(&[0.0], &[-2.0])[0], 0.0);
    }

    #[test]
    fn vi_residual_cases() {
        let mesh = build_interval(0.0, 1.0, 5, 2).unwrap();
        let p = params(1);
        let pot = PotentialW::new(GammaHat::DoubleWell, BetaHat::Indicator);
        let u: Vec<f64> = (0..5).map(|i| 1.5 * mesh.coords[i]).collect();
        let ctx = ChiStepContext::new(
            &mesh,
            &p,
            &pot,
            vec![0.7; 5],
            vec![0.5; 5],
            &u,
            0.01,
            0.0,
            GradMode::PurePLaplacian { p: 4.0 },
        )
        .unwrap();
        let sol = solve_chi_step(&ctx, &ChiSolverOptions::default()).unwrap();
        // ψ ≡ 0 → 0
        let zero = vec![0.0; 5];
        assert_eq!(
            one_sided_vi_residual(&sol.chi, &sol.xi, &ctx, &zero).unwrap(),
            0.0
        );
        // negative hats → ≥ −1e−8
        for j in 0..5 {
            let mut psi = vec![0.0; 5];
            psi[j] = -1.0;
            let r = one_sided_vi_residual(&sol.chi, &sol.xi, &ctx, &psi).unwrap();
            assert!(r >= -1e-8, "node {j}: VI residual {r}");
        }
        // positive test rejected
        let mut bad = vec![0.0; 5];
        bad[2] = 0.1;
        assert!(one_sided_vi_residual(&sol.chi, &sol.xi, &ctx, &bad).is_err());
    }

    #[test]
    fn yosida_path_converges_to_projection() {
        // ν ↓ 0 over {1e−2, 1e−3, 1e−4}: distances to the ν = 0 solution
        // decrease and end below 1e−4
        let mesh = build_interval(0.0, 1.0, 5, 2).unwrap();
        let p = params(1);
        let pot = PotentialW::new(GammaHat::DoubleWell, BetaHat::Indicator);
        let u: Vec<f64> = (0..5).map(|i| 2.0 * mesh.coords[i]).collect();
        let make_ctx = |nu: f64| {
            ChiStepContext::new(
                &mesh,
                &p,
                &pot,
                vec![0.6; 5],
                vec![1.2; 5], // positive θ pushes χ up against the rate bound
                &u,
                0.01,
                nu,
                GradMode::PurePLaplacian { p: 4.0 },
            )
            .unwrap()
        };
        let exact = solve_chi_step(&make_ctx(0.0), &ChiSolverOptions::default()).unwrap();
        let mut last = f64::INFINITY;
        for nu in [1e-2, 1e-3, 1e-4] {
            let sol = solve_chi_step(&make_ctx(nu), &ChiSolverOptions::default()).unwrap();
            let dist = sol
                .chi
                .iter()
                .zip(&exact.chi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(dist <= last + 1e-14, "nu={nu}: {dist} vs {last}");
            last = dist;
        }
        assert!(last < 1e-4, "final Yosida distance {last}");
    }

    #[test]
    fn residual_matches_finite_differences() {
        let mesh = build_interval(0.0, 1.0, 6, 2).unwrap();
        let p = params(0);
        let pot = PotentialW::new(GammaHat::DoubleWell, BetaHat::Zero);
        let u: Vec<f64> = (0..6).map(|i| 0.4 * mesh.coords[i]).collect();
        let ctx = ChiStepContext::new(
            &mesh,
            &p,
            &pot,
            vec![0.5; 6],
            vec![0.3; 6],
            &u,
            0.01,
            0.0,
            GradMode::LaplacianPlusDelta { p: 4.0, delta: 0.1 },
        )
        .unwrap();
        let chi: Vec<f64> = (0..6).map(|i| 0.4 + 0.05 * i as f64).collect();
        let r = ctx.residual(&chi);
        let step = 1e-7;
        for i in 0..6 {
            let mut cp = chi.clone();
            cp[i] += step;
            let mut cm = chi.clone();
            cm[i] -= step;
            let fd = (chi_objective(&cp, &ctx) - chi_objective(&cm, &ctx)) / (2.0 * step);
            assert!(
                (fd - r[i]).abs() < 1e-5 * (1.0 + r[i].abs()),
                "node {i}: fd {fd} vs residual {}",
                r[i]
            );
        }
    }
}
