//! Assembly of the discrete spatial operators: mass matrices, χ-weighted
//! elasticity/viscosity forms, the thermal-expansion coupling, the nonlinear
//! heat operator with truncated conductivity, and the gradient-flow operator
//! (p-Laplacian, or Laplacian + δ·p-Laplacian).
//!
//! Discretization conventions, used consistently by the solvers and by the
//! verification module so the discrete energy/entropy statements hold to
//! solver tolerance: zeroth-order terms are mass-lumped (nodal), gradient
//! terms are consistent P1, and coefficient fields in weighted forms are
//! elementwise constants obtained by averaging nodal values.

use crate::error::{Result, SimError};
use crate::material::{
    truncate_conductivity, truncate_conductivity_deriv, ElasticModuli, MaterialParams,
};
use crate::mesh::Mesh;
use nalgebra::{DMatrix, DVector};

/// Jacobian regularization for the degenerate p-Laplacian Hessian at ∇χ = 0.
/// Residuals always use the exact form.
pub const P_LAPLACIAN_EPS_REG: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Mass,
    ElasticEEta,
    ViscousVEta,
    Coupling,
    Heat,
    GradFlow,
}

/// Assembled sparse-pattern operator stored densely (desk-scale meshes).
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub matrix: DMatrix<f64>,
    pub kind: OperatorKind,
}

impl AssembledOperator {
    pub fn max_asymmetry(&self) -> f64 {
        let m = &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Row-sum (lumped) mass vector: mᵢ = Σ_{e∋i} |e|/(d+1).
pub fn lumped_mass(mesh: &Mesh) -> DVector<f64> {
    let mut m = DVector::zeros(mesh.n_nodes());
    let share = 1.0 / (mesh.dim as f64 + 1.0);
    for e in 0..mesh.n_elements() {
        let meas = mesh.element_geometry(e).measure;
        for &i in &mesh.elements[e] {
            m[i] += meas * share;
        }
    }
    m
}

/// Consistent P1 scalar mass matrix: ∫ λᵢλⱼ = |e|(1+δᵢⱼ)/((d+1)(d+2)).
pub fn consistent_mass_scalar(mesh: &Mesh) -> AssembledOperator {
    let n = mesh.n_nodes();
    let mut m = DMatrix::zeros(n, n);
    let d = mesh.dim as f64;
    let denom = (d + 1.0) * (d + 2.0);
    for e in 0..mesh.n_elements() {
        let meas = mesh.element_geometry(e).measure;
        let conn = &mesh.elements[e];
        for (a, &i) in conn.iter().enumerate() {
            for (b, &j) in conn.iter().enumerate() {
                let f = if a == b { 2.0 } else { 1.0 };
                m[(i, j)] += meas * f / denom;
            }
        }
    }
    AssembledOperator {
        matrix: m,
        kind: OperatorKind::Mass,
    }
}

/// Consistent mass on vector fields (block structure, node-major dof layout
/// `dof = d*node + component`).
pub fn consistent_mass_vector(mesh: &Mesh) -> AssembledOperator {
    let d = mesh.dim;
    let scalar = consistent_mass_scalar(mesh).matrix;
    let n = mesh.n_nodes();
    let mut m = DMatrix::zeros(d * n, d * n);
    for i in 0..n {
        for j in 0..n {
            let v = scalar[(i, j)];
            if v != 0.0 {
                for c in 0..d {
                    m[(d * i + c, d * j + c)] += v;
                }
            }
        }
    }
    AssembledOperator {
        matrix: m,
        kind: OperatorKind::Mass,
    }
}

/// Lumped boundary weights for the Neumann flux: node i gets
/// Σ_{facets ∋ i, neumann} |f|/d (counting measure in 1D).
pub fn boundary_lumped_weights(mesh: &Mesh) -> DVector<f64> {
    let mut w = DVector::zeros(mesh.n_nodes());
    for f in &mesh.boundary {
        if !f.tags.neumann_theta {
            continue;
        }
        let meas = mesh.facet_measure(f);
        let share = meas / f.nodes.len() as f64;
        for &i in &f.nodes {
            w[i] += share;
        }
    }
    w
}

fn element_average(values: &[f64], conn: &[usize]) -> f64 {
    conn.iter().map(|&i| values[i]).sum::<f64>() / conn.len() as f64
}

/// χ-weighted elastic (or viscous, via `tensor_scale` = ω) bilinear form.
/// The weight is the element average of the nodal values of η; nodal η must
/// be nonnegative or coercivity is lost.
pub fn assemble_weighted_form(
    mesh: &Mesh,
    eta_nodal: &[f64],
    moduli: &ElasticModuli,
    tensor_scale: f64,
    kind: OperatorKind,
) -> Result<AssembledOperator> {
    if let Some(bad) = eta_nodal.iter().find(|v| **v < 0.0) {
        return Err(SimError::Assembly(format!(
            "negative coefficient value {bad} in weighted form (coercivity would fail)"
        )));
    }
    let d = mesh.dim;
    let n = mesh.n_nodes();
    let mut k = DMatrix::zeros(d * n, d * n);
    let (lam, mu) = (moduli.lambda_lame, moduli.mu_lame);
    let e_axial = moduli.axial_modulus();
    for e in 0..mesh.n_elements() {
        let geo = mesh.element_geometry(e);
        let conn = &mesh.elements[e];
        let w = element_average(eta_nodal, conn) * tensor_scale * geo.measure;
        for (a, &i) in conn.iter().enumerate() {
            for (b, &j) in conn.iter().enumerate() {
                if d == 1 {
                    k[(i, j)] += w * e_axial * geo.grads[a][0] * geo.grads[b][0];
                } else {
                    let gi = geo.grads[a];
                    let gj = geo.grads[b];
                    let dot = gi[0] * gj[0] + gi[1] * gj[1];
                    for alpha in 0..d {
                        for beta in 0..d {
                            let mut v = lam * gi[alpha] * gj[beta] + mu * gi[beta] * gj[alpha];
                            if alpha == beta {
                                v += mu * dot;
                            }
                            k[(d * i + alpha, d * j + beta)] += w * v;
                        }
                    }
                }
            }
        }
    }
    Ok(AssembledOperator { matrix: k, kind })
}

/// Thermal-expansion load: F with Fᵀv = −ρ ∫ θ_h div(v_h).
pub fn assemble_coupling(mesh: &Mesh, theta_nodal: &[f64], rho: f64) -> DVector<f64> {
    let d = mesh.dim;
    let mut f = DVector::zeros(d * mesh.n_nodes());
    if rho == 0.0 {
        return f;
    }
    for e in 0..mesh.n_elements() {
        let geo = mesh.element_geometry(e);
        let conn = &mesh.elements[e];
        let theta_bar = element_average(theta_nodal, conn);
        let w = -rho * geo.measure * theta_bar;
        for (a, &j) in conn.iter().enumerate() {
            for alpha in 0..d {
                f[d * j + alpha] += w * geo.grads[a][alpha];
            }
        }
    }
    f
}

/// Elementwise symmetric strain ε(u) of a nodal vector field.
pub fn element_strain(mesh: &Mesh, e: usize, u: &[f64]) -> [[f64; 2]; 2] {
    let d = mesh.dim;
    let geo = mesh.element_geometry(e);
    let conn = &mesh.elements[e];
    let mut grad = [[0.0f64; 2]; 2];
    for (a, &j) in conn.iter().enumerate() {
        for alpha in 0..d {
            for beta in 0..d {
                grad[alpha][beta] += u[d * j + alpha] * geo.grads[a][beta];
            }
        }
    }
    let mut eps = [[0.0f64; 2]; 2];
    for alpha in 0..d {
        for beta in 0..d {
            eps[alpha][beta] = 0.5 * (grad[alpha][beta] + grad[beta][alpha]);
        }
    }
    eps
}

/// ε(u):𝔼:ε(u) for one element (without the 1/2 energy factor).
pub fn elastic_contraction(eps: &[[f64; 2]; 2], moduli: &ElasticModuli, dim: usize) -> f64 {
    if dim == 1 {
        moduli.axial_modulus() * eps[0][0] * eps[0][0]
    } else {
        let tr = eps[0][0] + eps[1][1];
        let frob = eps[0][0] * eps[0][0] + eps[1][1] * eps[1][1] + 2.0 * eps[0][1] * eps[0][1];
        moduli.lambda_lame * tr * tr + 2.0 * moduli.mu_lame * frob
    }
}

/// Elementwise divergence of a nodal vector field.
pub fn element_divergence(mesh: &Mesh, e: usize, u: &[f64]) -> f64 {
    let d = mesh.dim;
    let geo = mesh.element_geometry(e);
    let mut div = 0.0;
    for (a, &j) in mesh.elements[e].iter().enumerate() {
        for alpha in 0..d {
            div += u[d * j + alpha] * geo.grads[a][alpha];
        }
    }
    div
}

/// Mass-lumped nodal projection of elementwise-constant data:
/// nodalᵢ = Σ_{e∋i} |e| val_e/(d+1) / mᵢ. Pairing nodal·m against any nodal
/// field reproduces the consistent ∫ val·P1 integral exactly.
pub fn scatter_to_nodes(mesh: &Mesh, elem_values: &[f64], lumped: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_nodes()];
    let share = 1.0 / (mesh.dim as f64 + 1.0);
    for e in 0..mesh.n_elements() {
        let meas = mesh.element_geometry(e).measure;
        for &i in &mesh.elements[e] {
            out[i] += meas * share * elem_values[e];
        }
    }
    for i in 0..out.len() {
        out[i] /= lumped[i];
    }
    out
}

/// Conductivity law used by the heat operator.
#[derive(Debug, Clone, Copy)]
pub enum Conductivity<'a> {
    /// K_M(θ) with truncation level M.
    Truncated { params: &'a MaterialParams, m: f64 },
    /// Frozen constant conductivity (manufactured/decoupled studies).
    Constant(f64),
}

impl Conductivity<'_> {
    pub fn value(&self, theta: f64) -> f64 {
        match self {
            Conductivity::Truncated { params, m } => truncate_conductivity(theta, *m, params),
            Conductivity::Constant(k) => *k,
        }
    }
    pub fn deriv(&self, theta: f64) -> f64 {
        match self {
            Conductivity::Truncated { params, m } => truncate_conductivity_deriv(theta, *m, params),
            Conductivity::Constant(_) => 0.0,
        }
    }
}

/// Residual of the heat operator 𝒜: Rᵀv = ∫ K(θ_h)∇θ_h·∇v − ∫_∂Ω h v.
/// Conductivity is evaluated by element quadrature (exact for the default
/// κ = 2 closed form at order 2).
pub fn assemble_heat_residual(
    mesh: &Mesh,
    theta: &[f64],
    cond: Conductivity,
    h_flux_nodal: &[f64],
) -> DVector<f64> {
    let mut r = DVector::zeros(mesh.n_nodes());
    let quad = mesh.quadrature();
    for e in 0..mesh.n_elements() {
        let geo = mesh.element_geometry(e);
        let conn = &mesh.elements[e];
        let mut grad = [0.0f64; 2];
        for (a, &j) in conn.iter().enumerate() {
            grad[0] += theta[j] * geo.grads[a][0];
            grad[1] += theta[j] * geo.grads[a][1];
        }
        let mut k_eff = 0.0;
        for (w, bary) in &quad {
            let theta_q: f64 = conn.iter().zip(bary).map(|(&j, &lam)| lam * theta[j]).sum();
            k_eff += w * cond.value(theta_q);
        }
        let scale = k_eff * geo.measure;
        for (a, &i) in conn.iter().enumerate() {
            r[i] += scale * (grad[0] * geo.grads[a][0] + grad[1] * geo.grads[a][1]);
        }
    }
    let bw = boundary_lumped_weights(mesh);
    for i in 0..mesh.n_nodes() {
        r[i] -= bw[i] * h_flux_nodal[i];
    }
    r
}

/// Jacobian of `assemble_heat_residual` with respect to the nodal θ.
pub fn assemble_heat_jacobian(mesh: &Mesh, theta: &[f64], cond: Conductivity) -> DMatrix<f64> {
    let n = mesh.n_nodes();
    let mut jmat = DMatrix::zeros(n, n);
    let quad = mesh.quadrature();
    for e in 0..mesh.n_elements() {
        let geo = mesh.element_geometry(e);
        let conn = &mesh.elements[e];
        let mut grad = [0.0f64; 2];
        for (a, &j) in conn.iter().enumerate() {
            grad[0] += theta[j] * geo.grads[a][0];
            grad[1] += theta[j] * geo.grads[a][1];
        }
        let mut k_eff = 0.0;
        let mut dk = vec![0.0; conn.len()];
        for (w, bary) in &quad {
            let theta_q: f64 = conn.iter().zip(bary).map(|(&j, &lam)| lam * theta[j]).sum();
            k_eff += w * cond.value(theta_q);
            let kp = cond.deriv(theta_q);
            for (b, &lam) in bary.iter().enumerate() {
                dk[b] += w * kp * lam;
            }
        }
        for (a, &i) in conn.iter().enumerate() {
            let gi_dot_grad = grad[0] * geo.grads[a][0] + grad[1] * geo.grads[a][1];
            for (b, &j) in conn.iter().enumerate() {
                let gij = geo.grads[a][0] * geo.grads[b][0] + geo.grads[a][1] * geo.grads[b][1];
                jmat[(i, j)] += geo.measure * (k_eff * gij + dk[b] * gi_dot_grad);
            }
        }
    }
    jmat
}

/// Gradient operator acting on the internal variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradMode {
    /// −div(|∇χ|^{p−2}∇χ), zero Neumann.
    PurePLaplacian { p: f64 },
    /// −Δχ − δ·div(|∇χ|^{p−2}∇χ), zero Neumann.
    LaplacianPlusDelta { p: f64, delta: f64 },
}

impl GradMode {
    /// Scalar factor s(|g|) with residual density s(|g|)·g.
    fn factor(&self, g2: f64) -> f64 {
        match self {
            GradMode::PurePLaplacian { p } => g2.sqrt().powf(p - 2.0),
            GradMode::LaplacianPlusDelta { p, delta } => 1.0 + delta * g2.sqrt().powf(p - 2.0),
        }
    }

    fn factor_reg(&self, g2: f64) -> (f64, f64) {
        // returns (s(g2_reg), 2·ds/dg2) with the regularized magnitude
        let reg = g2 + P_LAPLACIAN_EPS_REG;
        match self {
            GradMode::PurePLaplacian { p } => {
                let s = reg.powf((p - 2.0) / 2.0);
                let ds = (p - 2.0) / 2.0 * reg.powf((p - 4.0) / 2.0);
                (s, ds)
            }
            GradMode::LaplacianPlusDelta { p, delta } => {
                let s = 1.0 + delta * reg.powf((p - 2.0) / 2.0);
                let ds = delta * (p - 2.0) / 2.0 * reg.powf((p - 4.0) / 2.0);
                (s, ds)
            }
        }
    }

    /// Energy density G(g) with G' matching the residual density.
    pub fn energy_density(&self, g2: f64) -> f64 {
        match self {
            GradMode::PurePLaplacian { p } => g2.sqrt().powf(*p) / p,
            GradMode::LaplacianPlusDelta { p, delta } => 0.5 * g2 + delta * g2.sqrt().powf(*p) / p,
        }
    }
}

/// Residual of the gradient-flow operator: Rᵀv = ∫ s(|∇χ|)∇χ·∇v (exact form,
/// zero Neumann built in weakly).
pub fn gradient_flow_residual(mesh: &Mesh, chi: &[f64], mode: GradMode) -> DVector<f64> {
    let mut r = DVector::zeros(mesh.n_nodes());
    for e in 0..mesh.n_elements() {
        let geo = mesh.element_geometry(e);
        let conn = &mesh.elements[e];
        let mut g = [0.0f64; 2];
        for (a, &j) in conn.iter().enumerate() {
            g[0] += chi[j] * geo.grads[a][0];
            g[1] += chi[j] * geo.grads[a][1];
        }
        let g2 = g[0] * g[0] + g[1] * g[1];
        if g2 == 0.0 {
            continue;
        }
        let s = mode.factor(g2) * geo.measure;
        for (a, &i) in conn.iter().enumerate() {
            r[i] += s * (g[0] * geo.grads[a][0] + g[1] * geo.grads[a][1]);
        }
    }
    r
}

/// Jacobian of the gradient-flow residual, with the degenerate |∇χ|^{p−2}
/// factor regularized (Newton only; residuals stay exact).
pub fn gradient_flow_jacobian(mesh: &Mesh, chi: &[f64], mode: GradMode) -> DMatrix<f64> {
    let n = mesh.n_nodes();
    let mut jmat = DMatrix::zeros(n, n);
    for e in 0..mesh.n_elements() {
        let geo = mesh.element_geometry(e);
        let conn = &mesh.elements[e];
        let mut g = [0.0f64; 2];
        for (a, &j) in conn.iter().enumerate() {
            g[0] += chi[j] * geo.grads[a][0];
            g[1] += chi[j] * geo.grads[a][1];
        }
        let g2 = g[0] * g[0] + g[1] * g[1];
        let (s, ds) = mode.factor_reg(g2);
        for (a, &i) in conn.iter().enumerate() {
            let gi = geo.grads[a];
            let gi_dot_g = g[0] * gi[0] + g[1] * gi[1];
            for (b, &j) in conn.iter().enumerate() {
                let gj = geo.grads[b];
                let gij = gi[0] * gj[0] + gi[1] * gj[1];
                let gj_dot_g = g[0] * gj[0] + g[1] * gj[1];
                jmat[(i, j)] += geo.measure * (s * gij + 2.0 * ds * gi_dot_g * gj_dot_g);
            }
        }
    }
    jmat
}

/// Total gradient energy ∫ G(∇χ) over the mesh.
pub fn gradient_energy(mesh: &Mesh, chi: &[f64], mode: GradMode) -> f64 {
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let geo = mesh.element_geometry(e);
        let mut g = [0.0f64; 2];
        for (a, &j) in mesh.elements[e].iter().enumerate() {
            g[0] += chi[j] * geo.grads[a][0];
            g[1] += chi[j] * geo.grads[a][1];
        }
        total += geo.measure * mode.energy_density(g[0] * g[0] + g[1] * g[1]);
    }
    total
}

/// Residual of the optional higher-order term ν∫|ε(u)|^{η−2}ε(u):ε(v).
pub fn nu_strain_residual(mesh: &Mesh, u: &[f64], nu: f64, eta_exp: f64) -> DVector<f64> {
    let d = mesh.dim;
    let mut r = DVector::zeros(d * mesh.n_nodes());
    for e in 0..mesh.n_elements() {
        let geo = mesh.element_geometry(e);
        let eps = element_strain(mesh, e, u);
        let mut frob = 0.0;
        for a in 0..d {
            for b in 0..d {
                frob += eps[a][b] * eps[a][b];
            }
        }
        if frob == 0.0 {
            continue;
        }
        let s = nu * frob.sqrt().powf(eta_exp - 2.0) * geo.measure;
        for (a, &j) in mesh.elements[e].iter().enumerate() {
            for alpha in 0..d {
                // ∂ε:X/∂u_jα with X = ε(u): symmetrized product
                let mut v = 0.0;
                for beta in 0..d {
                    v += eps[alpha][beta] * geo.grads[a][beta];
                }
                r[d * j + alpha] += s * v;
            }
        }
    }
    r
}

/// Jacobian of `nu_strain_residual` (regularized Frobenius norm).
pub fn nu_strain_jacobian(mesh: &Mesh, u: &[f64], nu: f64, eta_exp: f64) -> DMatrix<f64> {
    let d = mesh.dim;
    let n = d * mesh.n_nodes();
    let mut jm = DMatrix::zeros(n, n);
    for e in 0..mesh.n_elements() {
        let geo = mesh.element_geometry(e);
        let eps = element_strain(mesh, e, u);
        let mut frob = 0.0;
        for a in 0..d {
            for b in 0..d {
                frob += eps[a][b] * eps[a][b];
            }
        }
        let reg = frob + P_LAPLACIAN_EPS_REG;
        let s = reg.powf((eta_exp - 2.0) / 2.0);
        let ds = (eta_exp - 2.0) / 2.0 * reg.powf((eta_exp - 4.0) / 2.0);
        let conn = &mesh.elements[e];
        // bᵢα := ∂ε:ε(u)/∂u_iα (pre-symmetrized)
        let mut bvec = vec![0.0; d * conn.len()];
        for (a, _) in conn.iter().enumerate() {
            for alpha in 0..d {
                let mut v = 0.0;
                for beta in 0..d {
                    v += eps[alpha][beta] * geo.grads[a][beta];
                }
                bvec[d * a + alpha] = v;
            }
        }
        for (a, &i) in conn.iter().enumerate() {
            for alpha in 0..d {
                for (b, &j) in conn.iter().enumerate() {
                    for beta in 0..d {
                        // ε(φ_iα):ε(φ_jβ) term
                        let gi = geo.grads[a];
                        let gj = geo.grads[b];
                        let mut ee = 0.5 * gi[beta] * gj[alpha];
                        if alpha == beta {
                            ee += 0.5 * (gi[0] * gj[0] + gi[1] * gj[1]);
                        }
                        let v = s * ee + 2.0 * ds * bvec[d * a + alpha] * bvec[d * b + beta];
                        jm[(d * i + alpha, d * j + beta)] += nu * geo.measure * v;
                    }
                }
            }
        }
    }
    jm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval, build_rectangle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn moduli1d() -> ElasticModuli {
        // axial modulus E = 1
        ElasticModuli {
            lambda_lame: 0.0,
            mu_lame: 0.5,
        }
    }

    #[test]
    fn lumped_mass_sums_to_domain_measure() {
        let m = build_rectangle([0.0, 2.0], [0.0, 1.0], 4, 3, 2).unwrap();
        let lm = lumped_mass(&m);
        assert!((lm.sum() - 2.0).abs() < 1e-12);
        let cm = consistent_mass_scalar(&m);
        assert!((cm.matrix.sum() - 2.0).abs() < 1e-12);
        assert!(cm.max_asymmetry() < 1e-15);
    }

    #[test]
    fn weighted_form_zero_eta_is_zero() {
        let m = build_interval(0.0, 1.0, 4, 2).unwrap();
        let eta = vec![0.0; m.n_nodes()];
        let op =
            assemble_weighted_form(&m, &eta, &moduli1d(), 1.0, OperatorKind::ElasticEEta).unwrap();
        assert_eq!(op.matrix.amax(), 0.0);
    }

    #[test]
    fn weighted_form_rejects_negative_eta() {
        let m = build_interval(0.0, 1.0, 4, 2).unwrap();
        let mut eta = vec![1.0; m.n_nodes()];
        eta[2] = -0.1;
        assert!(
            assemble_weighted_form(&m, &eta, &moduli1d(), 1.0, OperatorKind::ElasticEEta).is_err()
        );
    }

    #[test]
    fn weighted_form_1d_bar_matches_hand_assembly() {
        // η ≡ 1, 3-node bar of length 1: K = (E/h)·[[1,-1,0],[-1,2,-1],[0,-1,1]]
        let m = build_interval(0.0, 1.0, 3, 2).unwrap();
        let eta = vec![1.0; 3];
        let op =
            assemble_weighted_form(&m, &eta, &moduli1d(), 1.0, OperatorKind::ElasticEEta).unwrap();
        let h = 0.5;
        let expect = [
            [1.0 / h, -1.0 / h, 0.0],
            [-1.0 / h, 2.0 / h, -1.0 / h],
            [0.0, -1.0 / h, 1.0 / h],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (op.matrix[(i, j)] - expect[i][j]).abs() < 1e-12,
                    "({i},{j}): {} vs {}",
                    op.matrix[(i, j)],
                    expect[i][j]
                );
            }
        }
        assert!(op.max_asymmetry() < 1e-12);
    }

    #[test]
    fn weighted_form_coercive_on_constrained_space() {
        // dense eigensolve oracle: λ_min > 0 for η ≡ c₂ = 0.1 on a 2D 4x4 mesh,
        // and the constrained λ_min scales linearly in η.
        let m = build_rectangle([0.0, 1.0], [0.0, 1.0], 4, 4, 2).unwrap();
        let moduli = ElasticModuli {
            lambda_lame: 1.0,
            mu_lame: 1.0,
        };
        let lam_min = |eta_val: f64| -> f64 {
            let eta = vec![eta_val; m.n_nodes()];
            let op =
                assemble_weighted_form(&m, &eta, &moduli, 1.0, OperatorKind::ElasticEEta).unwrap();
            let fixed: std::collections::HashSet<usize> = m.dirichlet_nodes().into_iter().collect();
            let free: Vec<usize> = (0..m.n_nodes())
                .filter(|i| !fixed.contains(i))
                .flat_map(|i| (0..2).map(move |c| 2 * i + c))
                .collect();
            let nf = free.len();
            let mut red = DMatrix::zeros(nf, nf);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    red[(a, b)] = op.matrix[(i, j)];
                }
            }
            let eig = red.symmetric_eigen();
            eig.eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
        };
        let l_ref = lam_min(1.0);
        let l_c2 = lam_min(0.1);
        assert!(l_c2 > 0.0);
        assert!((l_c2 - 0.1 * l_ref).abs() < 1e-10 * l_ref);
    }

    #[test]
    fn coupling_zero_cases_and_hat_oracle() {
        let m = build_interval(0.0, 1.0, 5, 2).unwrap();
        let zero = vec![0.0; 5];
        assert_eq!(assemble_coupling(&m, &zero, 0.7).amax(), 0.0);
        let ones = vec![1.0; 5];
        assert_eq!(assemble_coupling(&m, &ones, 0.0).amax(), 0.0);

        // θ ≡ 1: Fᵀv = −ρ∫div v; for the hat at node j the exact integral is
        // ∫ v' = v(1)−v(0): 0 for interior hats, −1 at the left and +1 at the
        // right boundary hat.
        let rho = 0.7;
        let f = assemble_coupling(&m, &ones, rho);
        assert!((f[0] - rho).abs() < 1e-14);
        for j in 1..4 {
            assert!(f[j].abs() < 1e-14);
        }
        assert!((f[4] + rho).abs() < 1e-14);
    }

    #[test]
    fn heat_residual_constant_field_is_zero() {
        let m = build_interval(0.0, 1.0, 6, 2).unwrap();
        let theta = vec![3.0; 6];
        let h = vec![0.0; 6];
        let r = assemble_heat_residual(&m, &theta, Conductivity::Constant(2.0), &h);
        assert!(r.amax() < 1e-14);
    }

    #[test]
    fn heat_residual_matches_exact_quadrature_oracle() {
        // linear θ in 1D, default κ=2 closed form: the order-2 Gauss rule used
        // by the assembly integrates K(θ_h) exactly; compare against
        // per-element analytic integration of c₀(1+θ(x)²)·θ'·φᵢ'.
        let m = build_interval(0.0, 1.0, 5, 2).unwrap();
        let p = crate::material::MaterialParams {
            kappa: 2.0,
            c0: 0.8,
            c1: 0.8,
            c2: 0.1,
            rho: 0.0,
            omega: 1.0,
            p_exponent: 4.0,
            delta: 0.0,
            lambda_conv: 1.0,
            mu_flag: 0,
            theta_star: 0.1,
            elastic: moduli1d(),
            a_choice: crate::material::CoefficientChoice::Constant { value: 1.0 },
            b_choice: crate::material::CoefficientChoice::Constant { value: 1.0 },
        };
        let theta: Vec<f64> = (0..5).map(|i| 0.1 + 0.2 * i as f64).collect();
        let hflux = vec![0.0; 5];
        let r = assemble_heat_residual(
            &m,
            &theta,
            Conductivity::Truncated {
                params: &p,
                m: 10.0,
            },
            &hflux,
        );
        // oracle: per element [a,b] with θ linear of slope s and values θa,θb:
        // ∫ K(θ(x)) dx = c0·h·(1 + (θa²+θaθb+θb²)/3), contribution s·∫K·(∓1/h)
        let mut oracle: DVector<f64> = DVector::zeros(5);
        for e in 0..4 {
            let (a, b) = (m.elements[e][0], m.elements[e][1]);
            let h = m.coords[b] - m.coords[a];
            let (ta, tb) = (theta[a], theta[b]);
            let int_k = p.c0 * h * (1.0 + (ta * ta + ta * tb + tb * tb) / 3.0);
            let s = (tb - ta) / h;
            oracle[a] += int_k * s * (-1.0 / h);
            oracle[b] += int_k * s * (1.0 / h);
        }
        for i in 0..5 {
            assert!(
                (r[i] - oracle[i]).abs() < 1e-13,
                "node {i}: {} vs {}",
                r[i],
                oracle[i]
            );
        }
    }

    #[test]
    fn heat_jacobian_matches_finite_differences() {
        let m = build_interval(0.0, 1.0, 8, 2).unwrap();
        let p = crate::material::MaterialParams {
            kappa: 2.0,
            c0: 1.0,
            c1: 1.0,
            c2: 0.1,
            rho: 0.0,
            omega: 1.0,
            p_exponent: 4.0,
            delta: 0.0,
            lambda_conv: 1.0,
            mu_flag: 0,
            theta_star: 0.1,
            elastic: moduli1d(),
            a_choice: crate::material::CoefficientChoice::Constant { value: 1.0 },
            b_choice: crate::material::CoefficientChoice::Constant { value: 1.0 },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let theta: Vec<f64> = (0..8).map(|_| 0.5 + rng.gen::<f64>()).collect();
        let hflux = vec![0.0; 8];
        let cond = Conductivity::Truncated {
            params: &p,
            m: 50.0,
        };
        let jac = assemble_heat_jacobian(&m, &theta, cond);
        let scale = theta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let step = 1e-6 * scale;
        let mut worst = 0.0f64;
        for j in 0..8 {
            let mut tp = theta.clone();
            tp[j] += step;
            let mut tm = theta.clone();
            tm[j] -= step;
            let rp = assemble_heat_residual(&m, &tp, cond, &hflux);
            let rm = assemble_heat_residual(&m, &tm, cond, &hflux);
            for i in 0..8 {
                let fd = (rp[i] - rm[i]) / (2.0 * step);
                let denom = 1.0 + jac[(i, j)].abs();
                worst = worst.max((fd - jac[(i, j)]).abs() / denom);
            }
        }
        assert!(worst < 1e-5, "max relative jacobian error {worst}");
    }

    #[test]
    fn gradient_flow_cases() {
        let m = build_interval(0.0, 1.0, 4, 2).unwrap();
        // constant field → zero residual
        let chifield = vec![0.7; 4];
        let r = gradient_flow_residual(&m, &chifield, GradMode::PurePLaplacian { p: 4.0 });
        assert_eq!(r.amax(), 0.0);

        // p = 2 reduces to the standard stiffness action, with a symmetric
        // Jacobian
        let chi2: Vec<f64> = (0..4).map(|i| (i as f64).powi(2) * 0.1).collect();
        let j2 = gradient_flow_jacobian(&m, &chi2, GradMode::PurePLaplacian { p: 2.0 });
        let asym = AssembledOperator {
            matrix: j2,
            kind: OperatorKind::GradFlow,
        }
        .max_asymmetry();
        assert!(asym < 1e-12);
        let r2 = gradient_flow_residual(&m, &chi2, GradMode::PurePLaplacian { p: 2.0 });
        let eta = vec![1.0; 4];
        let stiff = assemble_weighted_form(
            &m,
            &eta,
            &ElasticModuli {
                lambda_lame: 0.0,
                mu_lame: 0.5,
            },
            1.0,
            OperatorKind::GradFlow,
        )
        .unwrap();
        let rv = &stiff.matrix * DVector::from_vec(chi2.clone());
        for i in 0..4 {
            assert!((r2[i] - rv[i]).abs() < 1e-13);
        }

        // p = 4, linear slope s on one element of length ℓ: contribution ∓s³
        let m1 = build_interval(0.0, 0.25, 2, 2).unwrap();
        let s = 1.7;
        let chislope = vec![0.0, s * 0.25];
        let r4 = gradient_flow_residual(&m1, &chislope, GradMode::PurePLaplacian { p: 4.0 });
        assert!((r4[0] + s.powi(3)).abs() < 1e-12);
        assert!((r4[1] - s.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn gradient_flow_jacobian_matches_fd() {
        for mode in [
            GradMode::PurePLaplacian { p: 4.0 },
            GradMode::LaplacianPlusDelta {
                p: 4.0,
                delta: 0.05,
            },
        ] {
            let m = build_rectangle([0.0, 1.0], [0.0, 1.0], 3, 3, 2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let chifield: Vec<f64> = (0..9).map(|_| rng.gen::<f64>()).collect();
            let jac = gradient_flow_jacobian(&m, &chifield, mode);
            let step = 1e-6;
            let mut worst = 0.0f64;
            for j in 0..9 {
                let mut cp = chifield.clone();
                cp[j] += step;
                let mut cm = chifield.clone();
                cm[j] -= step;
                let rp = gradient_flow_residual(&m, &cp, mode);
                let rm = gradient_flow_residual(&m, &cm, mode);
                for i in 0..9 {
                    let fd = (rp[i] - rm[i]) / (2.0 * step);
                    worst = worst.max((fd - jac[(i, j)]).abs() / (1.0 + jac[(i, j)].abs()));
                }
            }
            assert!(worst < 1e-5, "mode {mode:?}: jacobian error {worst}");
        }
    }

    #[test]
    fn frozen_coefficient_monotonicity() {
        // (R(θ₁)−R(θ₂))·(θ₁−θ₂) ≥ c₀‖∇(θ₁−θ₂)‖² at frozen conductivity
        let m = build_interval(0.0, 1.0, 7, 2).unwrap();
        let c0 = 0.4;
        let cond = Conductivity::Constant(c0);
        let h = vec![0.0; 7];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let t1: Vec<f64> = (0..7).map(|_| rng.gen::<f64>() * 2.0).collect();
            let t2: Vec<f64> = (0..7).map(|_| rng.gen::<f64>() * 2.0).collect();
            let r1 = assemble_heat_residual(&m, &t1, cond, &h);
            let r2 = assemble_heat_residual(&m, &t2, cond, &h);
            let diff: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a - b).collect();
            let pairing: f64 = (0..7).map(|i| (r1[i] - r2[i]) * diff[i]).sum();
            // ‖∇v‖² via the unit-coefficient operator
            let rv = assemble_heat_residual(&m, &diff, Conductivity::Constant(1.0), &h);
            let grad_norm2: f64 = (0..7).map(|i| rv[i] * diff[i]).sum();
            assert!(pairing >= c0 * grad_norm2 - 1e-12);
        }
    }

    #[test]
    fn strain_and_divergence_1d() {
        let m = build_interval(0.0, 1.0, 3, 2).unwrap();
        // u(x) = 0.3x → ε = 0.3, div = 0.3 on both elements
        let u: Vec<f64> = (0..3).map(|i| 0.3 * m.coords[i]).collect();
        for e in 0..2 {
            let eps = element_strain(&m, e, &u);
            assert!((eps[0][0] - 0.3).abs() < 1e-14);
            assert!((element_divergence(&m, e, &u) - 0.3).abs() < 1e-14);
            assert!((elastic_contraction(&eps, &moduli1d(), 1) - 0.09).abs() < 1e-14);
        }
    }

    #[test]
    fn scatter_preserves_consistent_integral() {
        // Σᵢ mᵢ·nodalᵢ·wᵢ equals Σ_e |e|·val_e·w̄_e for P1 weights w
        let m = build_rectangle([0.0, 1.0], [0.0, 1.0], 3, 4, 2).unwrap();
        let lm = lumped_mass(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f64> = (0..m.n_elements()).map(|_| rng.gen::<f64>()).collect();
        let w: Vec<f64> = (0..m.n_nodes()).map(|_| rng.gen::<f64>()).collect();
        let nodal = scatter_to_nodes(&m, &vals, &lm);
        let lhs: f64 = (0..m.n_nodes()).map(|i| lm[i] * nodal[i] * w[i]).sum();
        let mut rhs = 0.0;
        for e in 0..m.n_elements() {
            let conn = &m.elements[e];
            let wbar = conn.iter().map(|&i| w[i]).sum::<f64>() / conn.len() as f64;
            rhs += m.element_geometry(e).measure * vals[e] * wbar;
        }
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn nu_strain_jacobian_matches_fd() {
        let m = build_interval(0.0, 1.0, 5, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 0.3).collect();
        let (nu, eta) = (0.02, 6.0);
        let jac = nu_strain_jacobian(&m, &u, nu, eta);
        let step = 1e-6;
        let mut worst = 0.0f64;
        for j in 0..5 {
            let mut up = u.clone();
            up[j] += step;
            let mut um = u.clone();
            um[j] -= step;
            let rp = nu_strain_residual(&m, &up, nu, eta);
            let rm = nu_strain_residual(&m, &um, nu, eta);
            for i in 0..5 {
                let fd = (rp[i] - rm[i]) / (2.0 * step);
                worst = worst.max((fd - jac[(i, j)]).abs() / (1.0 + jac[(i, j)].abs()));
            }
        }
        assert!(worst < 1e-5, "nu-term jacobian error {worst}");
    }
}
