//! Constitutive functions and parameters: heat conductivity and its
//! truncations, the elastic/viscous moduli, the coefficient functions a(χ),
//! b(χ), the mixing potential W = β̂ + γ̂, and the Yosida regularization of
//! the rate constraint.

use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};

/// Half-width of the quadratic blend replacing the kink of max(x, 0) in the
/// coefficient presets, keeping a, b continuously differentiable.
pub const COEFF_SMOOTHING: f64 = 1e-3;

/// C¹ smoothing of max(x, 0): quadratic blend of half-width `w`.
fn smooth_pos(x: f64, w: f64) -> f64 {
    if x <= -w {
        0.0
    } else if x >= w {
        x
    } else {
        (x + w) * (x + w) / (4.0 * w)
    }
}

fn smooth_pos_d1(x: f64, w: f64) -> f64 {
    if x <= -w {
        0.0
    } else if x >= w {
        1.0
    } else {
        (x + w) / (2.0 * w)
    }
}

fn smooth_pos_d2(x: f64, w: f64) -> f64 {
    if x > -w && x < w {
        1.0 / (2.0 * w)
    } else {
        0.0
    }
}

/// Tagged selection for the coefficient functions a(χ), b(χ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum CoefficientChoice {
    /// c₂ + max(χ, 0), smoothed: degrades stiffness/viscosity as χ → 0.
    Damage,
    /// c₂ + max(1 − χ, 0), smoothed: viscous phase at χ = 1.
    PhaseSolid,
    /// Constant coefficient (must be ≥ c₂).
    Constant { value: f64 },
}

impl CoefficientChoice {
    pub fn eval(&self, chi: f64, c2: f64) -> f64 {
        match self {
            CoefficientChoice::Damage => c2 + smooth_pos(chi, COEFF_SMOOTHING),
            CoefficientChoice::PhaseSolid => c2 + smooth_pos(1.0 - chi, COEFF_SMOOTHING),
            CoefficientChoice::Constant { value } => *value,
        }
    }

    pub fn deriv(&self, chi: f64, _c2: f64) -> f64 {
        match self {
            CoefficientChoice::Damage => smooth_pos_d1(chi, COEFF_SMOOTHING),
            CoefficientChoice::PhaseSolid => -smooth_pos_d1(1.0 - chi, COEFF_SMOOTHING),
            CoefficientChoice::Constant { .. } => 0.0,
        }
    }

    pub fn second_deriv(&self, chi: f64, _c2: f64) -> f64 {
        match self {
            CoefficientChoice::Damage => smooth_pos_d2(chi, COEFF_SMOOTHING),
            CoefficientChoice::PhaseSolid => smooth_pos_d2(1.0 - chi, COEFF_SMOOTHING),
            CoefficientChoice::Constant { .. } => 0.0,
        }
    }
}

/// Isotropic elastic moduli in Lamé form. In 1D the axial modulus
/// λ + 2μ is used as the scalar stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticModuli {
    pub lambda_lame: f64,
    pub mu_lame: f64,
}

impl ElasticModuli {
    /// Scalar modulus for the 1D reduction ε(u) = u_x.
    pub fn axial_modulus(&self) -> f64 {
        self.lambda_lame + 2.0 * self.mu_lame
    }

    /// Ellipticity constant α₀ (smallest eigenvalue of 𝔼 on symmetric
    /// matrices): min(2μ, dλ + 2μ) ≥ 2μ for λ ≥ 0.
    pub fn alpha0(&self, dim: usize) -> f64 {
        let two_mu = 2.0 * self.mu_lame;
        two_mu.min(dim as f64 * self.lambda_lame + two_mu)
    }
}

/// All constitutive constants of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Conductivity growth exponent (> 1).
    pub kappa: f64,
    /// Lower conductivity constant in c₀(1+θ^κ) ≤ K(θ).
    pub c0: f64,
    /// Upper conductivity constant (the closed form satisfies both bounds
    /// with c₁ = c₀; c₁ ≥ c₀ is still validated and kept for bound checks).
    pub c1: f64,
    /// Coercivity floor of a and b.
    pub c2: f64,
    /// Thermal expansion coefficient.
    pub rho: f64,
    /// Viscosity ratio: 𝕍 = ω𝔼.
    pub omega: f64,
    /// Gradient exponent of the flow-rule regularization.
    pub p_exponent: f64,
    /// Weight of the p-Laplacian in the Laplacian + δ·A_p mode (δ ≥ 0).
    pub delta: f64,
    /// Semiconvexity constant of γ̂ (γ̂'' ≥ −λ).
    pub lambda_conv: f64,
    /// 0 = reversible evolution, 1 = irreversible (χ_t ≤ 0 enforced).
    pub mu_flag: u8,
    /// Positivity floor of the initial temperature.
    pub theta_star: f64,
    pub elastic: ElasticModuli,
    pub a_choice: CoefficientChoice,
    pub b_choice: CoefficientChoice,
}

impl MaterialParams {
    pub fn a(&self, chi: f64) -> f64 {
        self.a_choice.eval(chi, self.c2)
    }
    pub fn b(&self, chi: f64) -> f64 {
        self.b_choice.eval(chi, self.c2)
    }
    pub fn b_prime(&self, chi: f64) -> f64 {
        self.b_choice.deriv(chi, self.c2)
    }
    pub fn b_second(&self, chi: f64) -> f64 {
        self.b_choice.second_deriv(chi, self.c2)
    }

    pub fn irreversible(&self) -> bool {
        self.mu_flag == 1
    }

    /// Validates the parameter block; returns one message per violated
    /// condition, each naming the hypothesis it comes from.
    pub fn validate(
        &self,
        dim: usize,
        restricted_kappa_mode: bool,
        laplacian_mode: bool,
    ) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.kappa > 1.0) {
            v.push(format!(
                "Hypothesis (I): conductivity exponent must satisfy kappa > 1 (got {})",
                self.kappa
            ));
        }
        if !(self.c0 > 0.0) || !(self.c1 >= self.c0) {
            v.push(format!(
                "Hypothesis (I): need 0 < c0 <= c1 (got c0={}, c1={})",
                self.c0, self.c1
            ));
        }
        if restricted_kappa_mode {
            let limit = if dim >= 3 { 5.0 / 3.0 } else { 2.0 };
            if !(self.kappa < limit) {
                v.push(format!(
                    "Hypothesis (V): kappa must lie in (1, {}) for d = {} (got {})",
                    limit, dim, self.kappa
                ));
            }
        }
        if !(self.c2 > 0.0) {
            v.push(format!(
                "Hypothesis (II): coercivity floor c2 must be positive (got {})",
                self.c2
            ));
        }
        // a, b >= c2 and convexity of b, sampled on [-2, 3].
        let n = 501;
        let mut min_a = f64::INFINITY;
        let mut min_b = f64::INFINITY;
        let mut min_b_dd = f64::INFINITY;
        let mut min_b_prime = f64::INFINITY;
        let dh = 5.0 / (n - 1) as f64;
        for i in 0..n {
            let x = -2.0 + i as f64 * dh;
            min_a = min_a.min(self.a(x));
            min_b = min_b.min(self.b(x));
            min_b_prime = min_b_prime.min(self.b_prime(x));
            // second differences
            let dd = (self.b(x + dh) - 2.0 * self.b(x) + self.b(x - dh)) / (dh * dh);
            min_b_dd = min_b_dd.min(dd);
        }
        if min_a < self.c2 - 1e-12 {
            v.push(format!(
                "Hypothesis (II): a(x) >= c2 violated on [-2,3] (min a = {min_a:.6})"
            ));
        }
        if min_b < self.c2 - 1e-12 {
            v.push(format!(
                "Hypothesis (II): b(x) >= c2 violated on [-2,3] (min b = {min_b:.6})"
            ));
        }
        if min_b_dd < -1e-9 {
            v.push(format!(
                "Hypothesis (II): b must be convex (min second difference {min_b_dd:.3e})"
            ));
        }
        if laplacian_mode {
            if self.mu_flag != 1 {
                v.push("laplacian mode requires irreversible evolution (mu = 1)".to_string());
            }
            if min_b_prime < -1e-12 {
                v.push(format!(
                    "laplacian mode requires b'(x) >= 0 (min b' = {min_b_prime:.3e})"
                ));
            }
        }
        if !(self.omega > 0.0) {
            v.push(format!(
                "Hypothesis (0): viscosity ratio omega must be positive (got {})",
                self.omega
            ));
        }
        if self.elastic.mu_lame <= 0.0 || self.elastic.lambda_lame < 0.0 {
            v.push(format!(
                "ellipticity: need mu_lame > 0 and lambda_lame >= 0 (got mu={}, lambda={})",
                self.elastic.mu_lame, self.elastic.lambda_lame
            ));
        }
        if !(self.p_exponent >= 2.0) {
            v.push(format!(
                "gradient exponent p must satisfy p >= 2 (got {})",
                self.p_exponent
            ));
        }
        if self.delta < 0.0 {
            v.push(format!("delta must be >= 0 (got {})", self.delta));
        }
        let needs_p_gt_d = if laplacian_mode {
            self.delta > 0.0
        } else {
            true
        };
        if needs_p_gt_d && !(self.p_exponent > dim as f64) {
            v.push(format!(
                "gradient exponent must satisfy p > d = {} when the p-Laplacian is active (got p = {})",
                dim, self.p_exponent
            ));
        }
        if self.mu_flag > 1 {
            v.push(format!("mu_flag must be 0 or 1 (got {})", self.mu_flag));
        }
        if !(self.theta_star > 0.0) {
            v.push(format!(
                "initial-data condition: theta_star must be positive (got {})",
                self.theta_star
            ));
        }
        if self.rho < 0.0 {
            v.push(format!("rho must be >= 0 (got {})", self.rho));
        }
        v
    }
}

/// Heat conductivity K(θ) = c₀(1 + θ^κ), the canonical representative of the
/// admissible growth class (both growth bounds hold with c₁ = c₀).
pub fn heat_conductivity(theta: f64, params: &MaterialParams) -> Result<f64> {
    if theta < 0.0 {
        return Err(SimError::Domain(format!(
            "heat_conductivity called with negative temperature {theta}"
        )));
    }
    Ok(params.c0 * (1.0 + theta.powf(params.kappa)))
}

/// Even extension K(|θ|), total on ℝ. Used inside truncated solves where
/// transient Newton iterates may undershoot zero.
pub fn heat_conductivity_even(theta: f64, params: &MaterialParams) -> f64 {
    params.c0 * (1.0 + theta.abs().powf(params.kappa))
}

/// dK/dθ of the even extension.
pub fn heat_conductivity_even_deriv(theta: f64, params: &MaterialParams) -> f64 {
    let k = params.kappa;
    params.c0 * k * theta.abs().powf(k - 1.0) * theta.signum()
}

/// Primitive K̂(θ) = ∫₀^θ K(r) dr = c₀(θ + θ^{κ+1}/(κ+1)).
pub fn conductivity_primitive(theta: f64, params: &MaterialParams) -> Result<f64> {
    if theta < 0.0 {
        return Err(SimError::Domain(format!(
            "conductivity_primitive called with negative temperature {theta}"
        )));
    }
    let k1 = params.kappa + 1.0;
    Ok(params.c0 * (theta + theta.powf(k1) / k1))
}

/// Truncated conductivity K_M(θ) = K(clamp(θ, −M, M)) with the even
/// extension for negative arguments. Total, bounded by c₁(1 + M^κ), and
/// ≥ c₀ everywhere, so ellipticity is retained.
pub fn truncate_conductivity(theta: f64, m: f64, params: &MaterialParams) -> f64 {
    heat_conductivity_even(truncate_value(theta, m), params)
}

/// Derivative of K_M (zero outside the clamp window).
pub fn truncate_conductivity_deriv(theta: f64, m: f64, params: &MaterialParams) -> f64 {
    if theta.abs() >= m {
        0.0
    } else {
        heat_conductivity_even_deriv(theta, params)
    }
}

/// Truncation operator: clamp to [−M, M]. 1-Lipschitz and idempotent.
pub fn truncate_value(theta: f64, m: f64) -> f64 {
    theta.clamp(-m, m)
}

/// Yosida approximation of ∂I_{(−∞,0]} with parameter ν: α_ν(r) = max(r,0)/ν.
pub fn yosida_alpha(r: f64, nu: f64) -> Result<f64> {
    if nu <= 0.0 {
        return Err(SimError::Parameter(format!(
            "Yosida parameter must be positive (got {nu})"
        )));
    }
    Ok(r.max(0.0) / nu)
}

/// Smooth part γ̂ of the mixing potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum GammaHat {
    /// χ²(χ−1)², the standard double well.
    DoubleWell,
    /// (k/2)(χ − center)².
    Quadratic { k: f64, center: f64 },
    /// γ̂ ≡ 0.
    Zero,
}

impl GammaHat {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            GammaHat::DoubleWell => x * x * (x - 1.0) * (x - 1.0),
            GammaHat::Quadratic { k, center } => 0.5 * k * (x - center) * (x - center),
            GammaHat::Zero => 0.0,
        }
    }
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            GammaHat::DoubleWell => 4.0 * x * x * x - 6.0 * x * x + 2.0 * x,
            GammaHat::Quadratic { k, center } => k * (x - center),
            GammaHat::Zero => 0.0,
        }
    }
    pub fn second_deriv(&self, x: f64) -> f64 {
        match self {
            GammaHat::DoubleWell => 12.0 * x * x - 12.0 * x + 2.0,
            GammaHat::Quadratic { k, .. } => *k,
            GammaHat::Zero => 0.0,
        }
    }

    /// Semiconvexity constant max(0, −min γ̂'') scanned over [−1, 2].
    pub fn lambda_estimate(&self) -> f64 {
        let n = 301;
        let mut min_dd = f64::INFINITY;
        for i in 0..n {
            let x = -1.0 + 3.0 * i as f64 / (n - 1) as f64;
            min_dd = min_dd.min(self.second_deriv(x));
        }
        (-min_dd).max(0.0)
    }
}

/// Convex part β̂ of the mixing potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum BetaHat {
    /// Indicator of [0, +∞); mandatory in the irreversible case.
    Indicator,
    /// β̂ ≡ 0 on all of ℝ (reversible case only).
    Zero,
    /// Convex piecewise-quadratic (quad/2)x² + slope·x + Σ jumpⱼ·max(x−knotⱼ,0)
    /// with jumpⱼ ≥ 0, quad ≥ 0 (reversible case only).
    PiecewiseQuadratic {
        quad: f64,
        slope: f64,
        knots: Vec<f64>,
        jumps: Vec<f64>,
    },
}

impl BetaHat {
    pub fn feasible(&self, x: f64) -> bool {
        match self {
            BetaHat::Indicator => x >= 0.0,
            _ => true,
        }
    }

    /// Finite part of β̂ (0 for the indicator inside its domain).
    pub fn value(&self, x: f64) -> f64 {
        match self {
            BetaHat::Indicator | BetaHat::Zero => 0.0,
            BetaHat::PiecewiseQuadratic {
                quad,
                slope,
                knots,
                jumps,
            } => {
                let mut v = 0.5 * quad * x * x + slope * x;
                for (k, j) in knots.iter().zip(jumps) {
                    v += j * (x - k).max(0.0);
                }
                v
            }
        }
    }

    /// Subdifferential interval [lo, hi] at x (for smooth points lo == hi).
    pub fn subdifferential(&self, x: f64) -> (f64, f64) {
        match self {
            BetaHat::Indicator => {
                if x > 0.0 {
                    (0.0, 0.0)
                } else {
                    (f64::NEG_INFINITY, 0.0)
                }
            }
            BetaHat::Zero => (0.0, 0.0),
            BetaHat::PiecewiseQuadratic {
                quad,
                slope,
                knots,
                jumps,
            } => {
                let mut lo = quad * x + slope;
                let mut hi = lo;
                for (k, j) in knots.iter().zip(jumps) {
                    if x > *k {
                        lo += j;
                        hi += j;
                    } else if (x - k).abs() == 0.0 {
                        hi += j;
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Single-valued smooth selection used inside Newton (midpoint at kinks).
    pub fn smooth_deriv(&self, x: f64) -> f64 {
        let (lo, hi) = self.subdifferential(x);
        if lo.is_finite() {
            0.5 * (lo + hi)
        } else {
            0.0
        }
    }

    pub fn smooth_second(&self, _x: f64) -> f64 {
        match self {
            BetaHat::PiecewiseQuadratic { quad, .. } => *quad,
            _ => 0.0,
        }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, BetaHat::Indicator)
    }
}

/// Mixing potential W = β̂ + γ̂ with its semiconvexity constant and lower
/// bound on the scanned range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialW {
    pub gamma_hat: GammaHat,
    pub beta_hat: BetaHat,
    /// Lower bound of W on the sampled domain (diagnostic; W ≥ c_W).
    pub c_w: f64,
}

impl PotentialW {
    pub fn new(gamma_hat: GammaHat, beta_hat: BetaHat) -> Self {
        let mut c_w = f64::INFINITY;
        let n = 601;
        for i in 0..n {
            let x = -2.0 + 5.0 * i as f64 / (n - 1) as f64;
            if beta_hat.feasible(x) {
                c_w = c_w.min(beta_hat.value(x) + gamma_hat.value(x));
            }
        }
        PotentialW {
            gamma_hat,
            beta_hat,
            c_w,
        }
    }

    pub fn validate(&self, mu_flag: u8) -> Vec<String> {
        let mut v = Vec::new();
        if mu_flag == 1 && !self.beta_hat.is_indicator() {
            v.push(
                "Hypothesis (IV): irreversible evolution (mu = 1) requires the indicator \
                 potential beta_hat = I_[0,+inf)"
                    .to_string(),
            );
        }
        if let BetaHat::PiecewiseQuadratic { quad, jumps, .. } = &self.beta_hat {
            if *quad < 0.0 || jumps.iter().any(|j| *j < 0.0) {
                v.push("Hypothesis (III): beta_hat must be convex (quad, jumps >= 0)".to_string());
            }
        }
        if !self.c_w.is_finite() {
            v.push(
                "Hypothesis (III): W has no finite lower bound on the sampled range".to_string(),
            );
        }
        v
    }
}

/// Evaluates W at χ: (value, γ(χ), feasibility). The value is the finite part;
/// infeasibility (χ outside dom β̂) is reported through the flag.
pub fn eval_potential(chi: f64, pot: &PotentialW) -> (f64, f64, bool) {
    let feasible = pot.beta_hat.feasible(chi);
    let value = if feasible {
        pot.beta_hat.value(chi) + pot.gamma_hat.value(chi)
    } else {
        f64::INFINITY
    };
    (value, pot.gamma_hat.deriv(chi), feasible)
}
