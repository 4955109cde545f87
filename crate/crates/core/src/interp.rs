//! Time interpolants of a trajectory — left/right piecewise-constant and
//! piecewise-linear reconstructions — plus the norms used to compare runs
//! across refinement levels.

use crate::assembly::lumped_mass;
use crate::mesh::Mesh;
use crate::stepper::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Theta,
    U,
    V,
    Chi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceNorm {
    L2,
    H1,
}

/// Accessor for the interpolants of one trajectory.
pub struct Interpolants<'a> {
    pub traj: &'a Trajectory,
}

impl<'a> Interpolants<'a> {
    pub fn new(traj: &'a Trajectory) -> Self {
        Interpolants { traj }
    }

    pub fn times(&self) -> Vec<f64> {
        self.traj.states.iter().map(|s| s.time).collect()
    }

    fn field_of(&self, k: usize, field: Field) -> &[f64] {
        let s = &self.traj.states[k];
        match field {
            Field::Theta => &s.theta,
            Field::U => &s.u,
            Field::V => &s.v,
            Field::Chi => &s.chi,
        }
    }

    /// Index k with t ∈ (t_{k−1}, t_k]; clamps to the trajectory range.
    fn locate(&self, t: f64) -> usize {
        let states = &self.traj.states;
        if t <= states[0].time {
            return 0;
        }
        for k in 1..states.len() {
            if t <= states[k].time + 1e-15 * (1.0 + states[k].time.abs()) {
                return k;
            }
        }
        states.len() - 1
    }

    /// Left-continuous piecewise constant: the value at the right node of the
    /// step interval containing t.
    pub fn pwc_left(&self, field: Field, t: f64) -> Vec<f64> {
        self.field_of(self.locate(t), field).to_vec()
    }

    /// Right-continuous piecewise constant: the value at the left node.
    pub fn pwc_right(&self, field: Field, t: f64) -> Vec<f64> {
        let k = self.locate(t);
        self.field_of(k.saturating_sub(1), field).to_vec()
    }

    /// Piecewise-linear interpolant.
    pub fn pwl(&self, field: Field, t: f64) -> Vec<f64> {
        let k = self.locate(t);
        if k == 0 {
            return self.field_of(0, field).to_vec();
        }
        let t0 = self.traj.states[k - 1].time;
        let t1 = self.traj.states[k].time;
        let lam = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let a = self.field_of(k - 1, field);
        let b = self.field_of(k, field);
        a.iter()
            .zip(b)
            .map(|(x, y)| (1.0 - lam) * x + lam * y)
            .collect()
    }
}

/// Squared spatial norm of a nodal field difference (lumped L², plus the full
/// gradient seminorm for H¹). Vector fields use `components` per node.
fn space_norm_sq(mesh: &Mesh, diff: &[f64], components: usize, norm: SpaceNorm) -> f64 {
    let lm = lumped_mass(mesh);
    let mut total = 0.0;
    for i in 0..mesh.n_nodes() {
        for c in 0..components {
            total += lm[i] * diff[components * i + c] * diff[components * i + c];
        }
    }
    if norm == SpaceNorm::H1 {
        for e in 0..mesh.n_elements() {
            let geo = mesh.element_geometry(e);
            for c in 0..components {
                let mut g = [0.0f64; 2];
                for (a, &j) in mesh.elements[e].iter().enumerate() {
                    g[0] += diff[components * j + c] * geo.grads[a][0];
                    g[1] += diff[components * j + c] * geo.grads[a][1];
                }
                total += geo.measure * (g[0] * g[0] + g[1] * g[1]);
            }
        }
    }
    total
}

fn components(mesh: &Mesh, field: Field) -> usize {
    match field {
        Field::U | Field::V => mesh.dim,
        _ => 1,
    }
}

/// Union of the two time grids, sorted and deduplicated.
fn union_times(a: &Trajectory, b: &Trajectory) -> Vec<f64> {
    let mut ts: Vec<f64> = a
        .states
        .iter()
        .map(|s| s.time)
        .chain(b.states.iter().map(|s| s.time))
        .collect();
    ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    ts
}

/// L²(0,T; space) distance of the piecewise-linear interpolants of two
/// trajectories on the same mesh. The integrand is quadratic in t on each
/// union interval, so two-point Gauss is exact.
pub fn pwl_distance_l2(
    mesh: &Mesh,
    a: &Trajectory,
    b: &Trajectory,
    field: Field,
    norm: SpaceNorm,
) -> f64 {
    let ia = Interpolants::new(a);
    let ib = Interpolants::new(b);
    let comps = components(mesh, field);
    let ts = union_times(a, b);
    let gauss = 0.5 / 3.0_f64.sqrt();
    let mut total = 0.0;
    for w in ts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mid = 0.5 * (t0 + t1);
        let half = 0.5 * (t1 - t0);
        for tq in [mid - half * 2.0 * gauss, mid + half * 2.0 * gauss] {
            let fa = ia.pwl(field, tq);
            let fb = ib.pwl(field, tq);
            let diff: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x - y).collect();
            total += half * space_norm_sq(mesh, &diff, comps, norm);
        }
    }
    total.sqrt()
}

/// C⁰(0,T; L²) distance of the piecewise-linear interpolants (the sup over
/// the union grid nodes, where the piecewise-linear difference attains it).
pub fn pwl_distance_c0_l2(mesh: &Mesh, a: &Trajectory, b: &Trajectory, field: Field) -> f64 {
    let ia = Interpolants::new(a);
    let ib = Interpolants::new(b);
    let comps = components(mesh, field);
    let mut worst = 0.0f64;
    for t in union_times(a, b) {
        let fa = ia.pwl(field, t);
        let fb = ib.pwl(field, t);
        let diff: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x - y).collect();
        worst = worst.max(space_norm_sq(mesh, &diff, comps, SpaceNorm::L2).sqrt());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::GradMode;
    use crate::material::{
        BetaHat, CoefficientChoice, ElasticModuli, GammaHat, MaterialParams, PotentialW,
    };
    use crate::mesh::build_interval;
    use crate::stepper::{run_simulation, InitialState, RunOptions, Sources};

    fn tiny_run(tau: f64) -> (crate::mesh::Mesh, Trajectory) {
        let mesh = build_interval(0.0, 1.0, 5, 2).unwrap();
        let p = MaterialParams {
            kappa: 2.0,
            c0: 0.5,
            c1: 0.5,
            c2: 0.1,
            rho: 0.2,
            omega: 1.0,
            p_exponent: 4.0,
            delta: 0.0,
            lambda_conv: 1.0,
            mu_flag: 1,
            theta_star: 1.0,
            elastic: ElasticModuli {
                lambda_lame: 0.0,
                mu_lame: 0.5,
            },
            a_choice: CoefficientChoice::Damage,
            b_choice: CoefficientChoice::Damage,
        };
        let pot = PotentialW::new(GammaHat::DoubleWell, BetaHat::Indicator);
        let n = 5;
        let init = InitialState {
            theta0: vec![1.2; n],
            u0: vec![0.0; n],
            v0: vec![0.0; n],
            chi0: vec![0.9; n],
        };
        let sources = Sources {
            f: Box::new(move |_| vec![0.4; n]),
            g: Box::new(move |_| vec![0.02; n]),
            h: Box::new(move |_| vec![0.0; n]),
        };
        let opts = RunOptions::new(GradMode::PurePLaplacian { p: 4.0 });
        let traj = run_simulation(&mesh, &p, &pot, &sources, &init, 0.2, tau, &opts).unwrap();
        (mesh, traj)
    }

    #[test]
    fn interpolants_agree_at_grid_nodes() {
        let (_, traj) = tiny_run(0.05);
        let it = Interpolants::new(&traj);
        for (k, s) in traj.states.iter().enumerate() {
            let pwl = it.pwl(Field::Theta, s.time);
            let pwc = it.pwc_left(Field::Theta, s.time);
            for i in 0..5 {
                assert!((pwl[i] - s.theta[i]).abs() < 1e-14, "pwl at node {k}");
                assert!((pwc[i] - s.theta[i]).abs() < 1e-14, "pwc at node {k}");
            }
        }
    }

    #[test]
    fn stability_bound_within_step() {
        // ‖π̂ − π̄‖_{L∞(step)} ≤ τ·‖rate‖ for each step
        let (_, traj) = tiny_run(0.05);
        let it = Interpolants::new(&traj);
        for k in 1..traj.states.len() {
            let t0 = traj.states[k - 1].time;
            let t1 = traj.states[k].time;
            let tau = t1 - t0;
            let rate_inf: f64 = (0..5)
                .map(|i| ((traj.states[k].theta[i] - traj.states[k - 1].theta[i]) / tau).abs())
                .fold(0.0, f64::max);
            for frac in [0.25, 0.5, 0.75] {
                let t = t0 + frac * tau;
                let a = it.pwl(Field::Theta, t);
                let b = it.pwc_left(Field::Theta, t);
                let diff: f64 = (0..5).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
                assert!(diff <= tau * rate_inf + 1e-14);
            }
        }
    }

    #[test]
    fn distance_to_self_is_zero() {
        let (mesh, traj) = tiny_run(0.05);
        assert_eq!(
            pwl_distance_l2(&mesh, &traj, &traj, Field::Theta, SpaceNorm::L2),
            0.0
        );
        assert_eq!(pwl_distance_c0_l2(&mesh, &traj, &traj, Field::Chi), 0.0);
    }

    #[test]
    fn refined_run_is_closer_than_coarse() {
        let (mesh, t1) = tiny_run(0.05);
        let (_, t2) = tiny_run(0.025);
        let (_, t4) = tiny_run(0.0125);
        let d12 = pwl_distance_l2(&mesh, &t1, &t2, Field::Theta, SpaceNorm::L2);
        let d24 = pwl_distance_l2(&mesh, &t2, &t4, Field::Theta, SpaceNorm::L2);
        assert!(
            d24 < d12,
            "refinement distances not decreasing: {d24} vs {d12}"
        );
    }
}
