//! Run configuration: a sectioned plain-text (TOML) format mapping 1:1 onto
//! the model parameters, with exhaustive validation of every data condition —
//! each violation is reported with the hypothesis or condition it comes from.

use crate::assembly::GradMode;
use crate::error::{Result, SimError};
use crate::material::{
    BetaHat, CoefficientChoice, ElasticModuli, GammaHat, MaterialParams, PotentialW,
};
use crate::mesh::{build_mesh, Mesh, MeshSpec};
use crate::stepper::{InitialState, MPolicy, RunOptions, Sources};
use crate::verify::VerifyOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub dimension: usize,
    pub extents: Vec<f64>,
    pub resolution: Vec<usize>,
    #[serde(default = "default_quadrature")]
    pub quadrature_order: usize,
}

fn default_quadrature() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialConfig {
    pub kappa: f64,
    pub c0: f64,
    #[serde(default)]
    pub c1: Option<f64>,
    pub c2: f64,
    pub rho: f64,
    pub omega: f64,
    pub p_exponent: f64,
    #[serde(default)]
    pub delta: f64,
    pub mu_flag: u8,
    pub theta_star: f64,
    pub lambda_lame: f64,
    pub mu_lame: f64,
    /// Override for the γ̂ semiconvexity constant; scanned when absent.
    #[serde(default)]
    pub lambda_conv: Option<f64>,
    pub a_choice: CoefficientChoice,
    pub b_choice: CoefficientChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub gamma_hat: GammaHat,
    pub beta_hat: BetaHat,
}

/// Scalar initial-field presets evaluated at node coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// base + amplitude·exp(−|x−center|²/width²)
    Bump {
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
}

impl FieldSpec {
    pub fn eval(&self, mesh: &Mesh) -> Vec<f64> {
        match self {
            FieldSpec::Constant { value } => vec![*value; mesh.n_nodes()],
            FieldSpec::Bump {
                base,
                amplitude,
                center,
                width,
            } => (0..mesh.n_nodes())
                .map(|i| {
                    let c = mesh.node_coord(i);
                    let mut d2 = (c[0] - center[0]).powi(2);
                    if mesh.dim == 2 && center.len() > 1 {
                        d2 += (c[1] - center[1]).powi(2);
                    }
                    base + amplitude * (-d2 / (width * width)).exp()
                })
                .collect(),
        }
    }
}

/// Vector initial-field presets (displacement/velocity); the sine preset
/// vanishes on the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum VecFieldSpec {
    Zero,
    Sine { amplitude: f64, component: usize },
}

impl VecFieldSpec {
    pub fn eval(&self, mesh: &Mesh, extents: &[f64]) -> Vec<f64> {
        let d = mesh.dim;
        let n = mesh.n_nodes();
        match self {
            VecFieldSpec::Zero => vec![0.0; d * n],
            VecFieldSpec::Sine {
                amplitude,
                component,
            } => {
                let mut out = vec![0.0; d * n];
                for i in 0..n {
                    let c = mesh.node_coord(i);
                    let sx = ((c[0] - extents[0]) / (extents[1] - extents[0])
                        * std::f64::consts::PI)
                        .sin();
                    let shape = if d == 2 {
                        let sy = ((c[1] - extents[2]) / (extents[3] - extents[2])
                            * std::f64::consts::PI)
                            .sin();
                        sx * sy
                    } else {
                        sx
                    };
                    out[d * i + (*component).min(d - 1)] = amplitude * shape;
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    pub theta: FieldSpec,
    pub u: VecFieldSpec,
    pub v: VecFieldSpec,
    pub chi: FieldSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeProfileSpec {
    Constant,
    /// offset + rate·t
    Ramp {
        rate: f64,
        offset: f64,
    },
}

impl TimeProfileSpec {
    fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfileSpec::Constant => 1.0,
            TimeProfileSpec::Ramp { rate, offset } => offset + rate * t,
        }
    }
    fn nonnegative_on(&self, horizon: f64) -> bool {
        match self {
            TimeProfileSpec::Constant => true,
            TimeProfileSpec::Ramp { rate, offset } => {
                *offset >= 0.0 && offset + rate * horizon >= -1e-14 && offset + rate * 0.0 >= 0.0
            }
        }
    }
}

fn default_profile() -> TimeProfileSpec {
    TimeProfileSpec::Constant
}

/// Analytic source presets: constant, ramp-in-time, gaussian-in-space, and
/// separable products of the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum SourceSpec {
    Zero,
    Constant {
        value: f64,
    },
    Ramp {
        rate: f64,
        #[serde(default)]
        offset: f64,
    },
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
        #[serde(default = "default_profile")]
        profile: TimeProfileSpec,
    },
}

impl SourceSpec {
    fn eval_scalar(&self, coord: [f64; 2], dim: usize, t: f64) -> f64 {
        match self {
            SourceSpec::Zero => 0.0,
            SourceSpec::Constant { value } => *value,
            SourceSpec::Ramp { rate, offset } => offset + rate * t,
            SourceSpec::Gaussian {
                amplitude,
                center,
                width,
                profile,
            } => {
                let mut d2 = (coord[0] - center[0]).powi(2);
                if dim == 2 && center.len() > 1 {
                    d2 += (coord[1] - center[1]).powi(2);
                }
                amplitude * (-d2 / (width * width)).exp() * profile.eval(t)
            }
        }
    }

    /// Structural nonnegativity over [0, horizon] (for the g, h conditions).
    fn nonnegative(&self, horizon: f64) -> bool {
        match self {
            SourceSpec::Zero => true,
            SourceSpec::Constant { value } => *value >= 0.0,
            SourceSpec::Ramp { rate, offset } => {
                *offset >= 0.0 && offset + rate * horizon >= -1e-14
            }
            SourceSpec::Gaussian {
                amplitude, profile, ..
            } => *amplitude >= 0.0 && profile.nonnegative_on(horizon),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyForceConfig {
    #[serde(flatten)]
    pub spec: SourceSpec,
    /// Unit direction of the force (defaults to the first axis).
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcesConfig {
    pub f: BodyForceConfig,
    pub g: SourceSpec,
    pub h: SourceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    pub horizon: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MPolicyConfig {
    #[default]
    Auto,
    Fixed {
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuHigherOrderConfig {
    pub nu: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModeConfig {
    /// Laplacian + δ·p-Laplacian gradient operator (requires μ = 1, b' ≥ 0).
    #[serde(default)]
    pub laplacian_mode: bool,
    /// Request the restricted-κ regularity regime (validation only).
    #[serde(default)]
    pub restricted_kappa: bool,
    /// Yosida parameter for the rate constraint (0 = exact).
    #[serde(default)]
    pub nu: f64,
    #[serde(default)]
    pub m_policy: MPolicyConfig,
    #[serde(default)]
    pub nu_higher_order: Option<NuHigherOrderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub fixed_point: f64,
    pub heat: f64,
    pub chi: f64,
    pub linear: f64,
    pub verify_factor: f64,
    pub max_outer: usize,
    pub min_tau: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            fixed_point: 1e-9,
            heat: 1e-10,
            chi: 1e-10,
            linear: 1e-12,
            verify_factor: 1e-8,
            max_outer: 60,
            min_tau: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub directory: String,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_snapshot_every() -> usize {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: "out".into(),
            snapshot_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StudyConfig {
    Tau {
        levels: usize,
    },
    Delta {
        deltas: Vec<f64>,
    },
    Regularization {
        nus: Vec<f64>,
        m_values: Vec<f64>,
    },
    Manufactured {
        conductivity: f64,
        base: f64,
        rate: f64,
        horizon: f64,
        tau_levels: Vec<f64>,
        h_nodes: Vec<usize>,
        fine_nodes: usize,
        tiny_tau: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub material: MaterialConfig,
    pub potential: PotentialConfig,
    pub initial: InitialConfig,
    pub sources: SourcesConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub mode: ModeConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub study: Option<StudyConfig>,
}

/// Instantiated runtime objects derived from a validated config.
pub struct Instance {
    pub mesh: Mesh,
    pub params: MaterialParams,
    pub potential: PotentialW,
    pub init: InitialState,
    pub run_opts: RunOptions,
    pub verify_opts: VerifyOptions,
    pub horizon: f64,
    pub tau: f64,
    pub laplacian_mode: bool,
    pub config: RunConfig,
}

impl Instance {
    /// Rebuilds the (pure, deterministic) nodal source closures.
    pub fn sources(&self) -> Sources {
        build_sources(&self.config.sources, &self.mesh)
    }
}

fn build_sources(cfg: &SourcesConfig, mesh: &Mesh) -> Sources {
    let d = mesh.dim;
    let n = mesh.n_nodes();
    let coords: Vec<[f64; 2]> = (0..n).map(|i| mesh.node_coord(i)).collect();
    let f_spec = cfg.f.spec.clone();
    let mut dir = cfg.f.direction.clone().unwrap_or_else(|| {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        v
    });
    dir.resize(d, 0.0);
    let coords_f = coords.clone();
    let g_spec = cfg.g.clone();
    let coords_g = coords.clone();
    let h_spec = cfg.h.clone();
    let coords_h = coords;
    Sources {
        f: Box::new(move |t| {
            let mut out = vec![0.0; d * n];
            for i in 0..n {
                let v = f_spec.eval_scalar(coords_f[i], d, t);
                for c in 0..d {
                    out[d * i + c] = v * dir[c];
                }
            }
            out
        }),
        g: Box::new(move |t| {
            (0..n)
                .map(|i| g_spec.eval_scalar(coords_g[i], d, t))
                .collect()
        }),
        h: Box::new(move |t| {
            (0..n)
                .map(|i| h_spec.eval_scalar(coords_h[i], d, t))
                .collect()
        }),
    }
}

impl RunConfig {
    pub fn material_params(&self) -> MaterialParams {
        let gamma = self.potential.gamma_hat.clone();
        let lambda = self
            .material
            .lambda_conv
            .unwrap_or_else(|| gamma.lambda_estimate());
        MaterialParams {
            kappa: self.material.kappa,
            c0: self.material.c0,
            c1: self.material.c1.unwrap_or(self.material.c0),
            c2: self.material.c2,
            rho: self.material.rho,
            omega: self.material.omega,
            p_exponent: self.material.p_exponent,
            delta: self.material.delta,
            lambda_conv: lambda,
            mu_flag: self.material.mu_flag,
            theta_star: self.material.theta_star,
            elastic: ElasticModuli {
                lambda_lame: self.material.lambda_lame,
                mu_lame: self.material.mu_lame,
            },
            a_choice: self.material.a_choice.clone(),
            b_choice: self.material.b_choice.clone(),
        }
    }

    pub fn grad_mode(&self) -> GradMode {
        if self.mode.laplacian_mode {
            GradMode::LaplacianPlusDelta {
                p: self.material.p_exponent,
                delta: self.material.delta,
            }
        } else {
            GradMode::PurePLaplacian {
                p: self.material.p_exponent,
            }
        }
    }

    /// Builds the runtime instance, collecting every violated condition.
    pub fn instantiate(&self) -> Result<Instance> {
        let mut errs = Vec::new();
        let spec = MeshSpec {
            dim: self.mesh.dimension,
            extents: self.mesh.extents.clone(),
            resolution: self.mesh.resolution.clone(),
            quadrature_order: self.mesh.quadrature_order,
        };
        let mesh = match build_mesh(&spec) {
            Ok(m) => m,
            Err(e) => {
                errs.push(format!("mesh: {e}"));
                return Err(SimError::Config(errs));
            }
        };
        let params = self.material_params();
        errs.extend(params.validate(
            mesh.dim,
            self.mode.restricted_kappa,
            self.mode.laplacian_mode,
        ));
        let potential = PotentialW::new(
            self.potential.gamma_hat.clone(),
            self.potential.beta_hat.clone(),
        );
        errs.extend(potential.validate(params.mu_flag));
        if !(self.time.tau > 0.0) {
            errs.push(format!(
                "time step must be positive (got {})",
                self.time.tau
            ));
        }
        if self.time.horizon < 0.0 {
            errs.push(format!(
                "time horizon must be nonnegative (got {})",
                self.time.horizon
            ));
        }
        if self.time.tau > 0.0 && 1.0 / (2.0 * self.time.tau.sqrt()) <= params.lambda_conv {
            errs.push(format!(
                "step-size condition: 1/(2*sqrt(tau)) > lambda required \
                 (tau = {}, lambda = {})",
                self.time.tau, params.lambda_conv
            ));
        }
        if !self.sources.g.nonnegative(self.time.horizon) {
            errs.push("data condition on the heat source: g >= 0 a.e. violated".into());
        }
        if !self.sources.h.nonnegative(self.time.horizon) {
            errs.push("data condition on the boundary flux: h >= 0 a.e. violated".into());
        }
        if self.mode.nu < 0.0 {
            errs.push(format!("mode.nu must be >= 0 (got {})", self.mode.nu));
        }
        if let Some(nh) = &self.mode.nu_higher_order {
            if nh.nu <= 0.0 || nh.eta <= 4.0 {
                errs.push(format!(
                    "nu_higher_order requires nu > 0 and eta > 4 (got nu={}, eta={})",
                    nh.nu, nh.eta
                ));
            }
        }
        let init = InitialState {
            theta0: self.initial.theta.eval(&mesh),
            u0: self.initial.u.eval(&mesh, &self.mesh.extents),
            v0: self.initial.v.eval(&mesh, &self.mesh.extents),
            chi0: self.initial.chi.eval(&mesh),
        };
        errs.extend(crate::stepper::validate_initial(
            &mesh,
            &params,
            &potential,
            &init,
            self.mode.laplacian_mode,
        ));
        let t = &self.tolerances;
        if t.fixed_point <= 0.0 || t.heat <= 0.0 || t.chi <= 0.0 || t.linear <= 0.0 {
            errs.push("tolerances must be positive".into());
        }
        if !errs.is_empty() {
            return Err(SimError::Config(errs));
        }
        let mut run_opts = RunOptions::new(self.grad_mode());
        run_opts.tol_fp = t.fixed_point;
        run_opts.tol_heat = t.heat;
        run_opts.tol_chi = t.chi;
        run_opts.tol_lin = t.linear;
        run_opts.max_outer = t.max_outer;
        run_opts.min_tau = t.min_tau;
        run_opts.nu = self.mode.nu;
        run_opts.m_policy = match self.mode.m_policy {
            MPolicyConfig::Auto => MPolicy::Auto,
            MPolicyConfig::Fixed { value } => MPolicy::Fixed(value),
        };
        run_opts.nu_higher_order = self.mode.nu_higher_order.map(|x| (x.nu, x.eta));
        let verify_opts = VerifyOptions {
            tol_factor: t.verify_factor,
            ..Default::default()
        };
        Ok(Instance {
            mesh,
            params,
            potential,
            init,
            run_opts,
            verify_opts,
            horizon: self.time.horizon,
            tau: self.time.tau,
            laplacian_mode: self.mode.laplacian_mode,
            config: self.clone(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses and fully validates a config; violations are collected and each
/// names the condition it breaks.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| SimError::Parse(format!("config syntax: {e}")))?;
    cfg.instantiate()?;
    Ok(cfg)
}

/// The 1D irreversible smoke configuration used across the acceptance suite:
/// 17 nodes, T = 1, τ = 1/64, κ = 2, damage coefficients, double-well γ̂.
pub fn smoke_config(mu_flag: u8) -> RunConfig {
    RunConfig {
        mesh: MeshConfig {
            dimension: 1,
            extents: vec![0.0, 1.0],
            resolution: vec![17],
            quadrature_order: 2,
        },
        material: MaterialConfig {
            kappa: 2.0,
            c0: 0.5,
            c1: None,
            c2: 0.1,
            rho: 0.2,
            omega: 0.05,
            p_exponent: 4.0,
            delta: 0.0,
            mu_flag,
            theta_star: 0.5,
            lambda_lame: 0.0,
            mu_lame: 0.5,
            lambda_conv: None,
            a_choice: CoefficientChoice::Damage,
            b_choice: CoefficientChoice::Damage,
        },
        potential: PotentialConfig {
            gamma_hat: GammaHat::DoubleWell,
            beta_hat: BetaHat::Indicator,
        },
        initial: InitialConfig {
            theta: FieldSpec::Bump {
                base: 0.5,
                amplitude: 0.1,
                center: vec![0.5],
                width: 0.15,
            },
            u: VecFieldSpec::Zero,
            v: VecFieldSpec::Zero,
            chi: FieldSpec::Constant { value: 0.9 },
        },
        sources: SourcesConfig {
            f: BodyForceConfig {
                spec: SourceSpec::Gaussian {
                    amplitude: 16.0,
                    center: vec![0.5],
                    width: 0.2,
                    profile: TimeProfileSpec::Ramp {
                        rate: 1.0,
                        offset: 0.0,
                    },
                },
                direction: None,
            },
            g: SourceSpec::Constant { value: 0.02 },
            h: SourceSpec::Zero,
        },
        time: TimeConfig {
            horizon: 1.0,
            tau: 1.0 / 64.0,
        },
        mode: ModeConfig::default(),
        tolerances: ToleranceConfig::default(),
        output: OutputConfig::default(),
        study: None,
    }
}
