//! MLS-MPM simulator: quadratic B-spline transfers, corotated elasticity
//! (optionally Drucker-Prager sand), heightfield collider coupling, and the
//! size-ratio scaling of gravity, stiffness and velocity.

mod constitutive;
mod grid;
mod solver;

pub use constitutive::*;
pub use grid::{Node, SparseGrid, BLOCK};
pub use solver::*;

use crate::math::Vec3;
use crate::sampling::ParticleCloud;
use crate::scene::{ColliderSurface, MaterialSpec, ScaleModel, SimParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MpmError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("kernel offset {0} outside [0.5, 1.5]: particle escaped the margin")]
    KernelRange(f64),
    #[error("element inversion (det F = {det:.3e}){}", fmt_where(.step, .particle))]
    Inversion {
        step: Option<u64>,
        particle: Option<usize>,
        det: f64,
    },
    #[error("particle {particle} outside the domain margin at step {step}")]
    OutsideMargin { particle: usize, step: u64 },
    #[error("simulation diverged at step {step}{}", .last_good_frame.map(|f| format!(" (last good frame {f})")).unwrap_or_default())]
    Diverged { step: u64, last_good_frame: Option<usize> },
    #[error("unknown object id {0}")]
    UnknownObject(u32),
}

fn fmt_where(step: &Option<u64>, particle: &Option<usize>) -> String {
    match (step, particle) {
        (Some(s), Some(p)) => format!(" at step {s}, particle {p}"),
        _ => String::new(),
    }
}

impl MpmError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            MpmError::Diverged { .. } | MpmError::Inversion { .. } | MpmError::OutsideMargin { .. }
        )
    }

    fn with_frame(self, frame: usize) -> Self {
        match self {
            MpmError::Diverged { step, .. } => MpmError::Diverged {
                step,
                last_good_frame: Some(frame),
            },
            other => other,
        }
    }
}

/// `g' = k g0` along `direction`, and every Young's modulus replaced by
/// `E / k`.
pub fn apply_dimensionless_scaling(
    scale: &ScaleModel,
    materials: &[MaterialSpec],
    direction: &Vec3,
) -> (Vec3, Vec<MaterialSpec>) {
    let g = scale.scaled_gravity() * direction;
    let scaled = materials
        .iter()
        .map(|m| MaterialSpec {
            elasticity: None,
            youngs_modulus: Some(scale.scaled_youngs_modulus(m.youngs_modulus())),
            ..*m
        })
        .collect();
    (g, scaled)
}

/// Sets every particle of `object` to the scaled velocity `k v`.
pub fn set_initial_velocity(
    particles: &mut ParticleCloud,
    object: u32,
    v: &Vec3,
    scale: &ScaleModel,
) -> Result<(), MpmError> {
    if !particles.object.contains(&object) {
        return Err(MpmError::UnknownObject(object));
    }
    let sv = scale.scaled_velocity(v);
    for i in 0..particles.len() {
        if particles.object[i] == object {
            particles.v[i] = sv;
        }
    }
    Ok(())
}

/// Positions and velocities at one output frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub frame: usize,
    pub time: f64,
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub time: f64,
    pub total_mass: f64,
    pub momentum: Vec3,
    pub kinetic_energy: f64,
    pub max_speed: f64,
    pub clamp_events: u64,
}

impl SimState {
    pub fn snapshot(&self, frame: usize) -> Snapshot {
        Snapshot {
            frame,
            time: self.time,
            x: self.particles.x.clone(),
            v: self.particles.v.clone(),
        }
    }

    pub fn diagnostics(&self, frame: usize) -> FrameDiagnostics {
        FrameDiagnostics {
            frame,
            time: self.time,
            total_mass: self.particle_total_mass(),
            momentum: self.particles.momentum(),
            kinetic_energy: self.particles.kinetic_energy(),
            max_speed: self.particles.max_speed(),
            clamp_events: self.clamp_events,
        }
    }

    /// Emits frame 0, then advances `substeps_per_frame` substeps per frame
    /// until `frame_count` frames have been emitted.
    pub fn run<E: From<MpmError>>(
        &mut self,
        mut on_frame: impl FnMut(&Snapshot, &FrameDiagnostics) -> Result<(), E>,
    ) -> Result<(), E> {
        let frames = self.params.frame_count;
        for frame in 0..frames {
            if frame > 0 {
                for _ in 0..self.params.substeps_per_frame {
                    self.step().map_err(|e| E::from(e.with_frame(frame - 1)))?;
                }
            }
            on_frame(&self.snapshot(frame), &self.diagnostics(frame))?;
        }
        Ok(())
    }
}

/// Inputs of a run besides the particles.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSetup {
    pub params: SimParams,
    pub scale: ScaleModel,
    /// Unscaled materials, indexed by particle material id.
    pub materials: Vec<MaterialSpec>,
    pub collider: Option<ColliderSurface>,
}

impl SimSetup {
    /// Applies the scale model and builds the initial state. Particle
    /// velocities are taken as already scaled.
    pub fn state(&self, particles: ParticleCloud) -> Result<SimState, MpmError> {
        let (g, mats) = apply_dimensionless_scaling(&self.scale, &self.materials, &self.params.gravity_unit());
        let params = mats.iter().map(MaterialParams::from_spec).collect::<Result<Vec<_>, _>>()?;
        SimState::new(particles, params, self.params, g, self.collider.clone())
    }
}

/// Runs a whole simulation and returns one snapshot per frame.
pub fn simulate(setup: &SimSetup, particles: ParticleCloud) -> Result<Vec<Snapshot>, MpmError> {
    let mut state = setup.state(particles)?;
    let mut out = Vec::with_capacity(setup.params.frame_count);
    state.run::<MpmError>(|s, _| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;
    use crate::scene::{ColliderMode, ElasticityCategory};

    fn sim(res: usize) -> SimParams {
        SimParams {
            grid_resolution: res,
            dt: 1e-4,
            ..SimParams::default()
        }
    }

    fn one_particle(x: Vec3, v: Vec3) -> ParticleCloud {
        let mut c = ParticleCloud::default();
        c.push(x, v, 1.0, 1e-3, 0, 0, false);
        c
    }

    fn mat() -> Vec<MaterialParams> {
        vec![MaterialParams::from_spec(&MaterialSpec::from_category(1000.0, ElasticityCategory::Soft)).unwrap()]
    }

    #[test]
    fn scaling_rules() {
        let m = [MaterialSpec::from_modulus(1000.0, 5e5, 0.2)];
        let down = Vec3::new(0.0, -1.0, 0.0);
        let (g, s) = apply_dimensionless_scaling(&ScaleModel::new(1.0, 9.8), &m, &down);
        assert_eq!(g, Vec3::new(0.0, -9.8, 0.0));
        assert_eq!(s[0].youngs_modulus(), 5e5);
        let (g, s) = apply_dimensionless_scaling(&ScaleModel::new(10.0, 9.8), &m, &down);
        assert!((g.y + 98.0).abs() < 1e-12);
        assert_eq!(s[0].youngs_modulus(), 5e4);
    }

    #[test]
    fn initial_velocity_targets_one_object() {
        let mut c = one_particle(Vec3::repeat(1.0), Vec3::zeros());
        c.push(Vec3::repeat(1.1), Vec3::zeros(), 1.0, 1e-3, 0, 1, false);
        let k2 = ScaleModel::new(2.0, 9.8);
        set_initial_velocity(&mut c, 1, &Vec3::new(0.0, 2.0, 1.0), &k2).unwrap();
        assert_eq!(c.v[0], Vec3::zeros());
        assert_eq!(c.v[1], Vec3::new(0.0, 4.0, 2.0));
        assert!(set_initial_velocity(&mut c, 7, &Vec3::zeros(), &k2).is_err());
    }

    #[test]
    fn node_centered_particle_spreads_momentum() {
        let p = sim(64);
        let dx = p.dx();
        let x = Vec3::repeat(32.0 * dx);
        let mut s = SimState::new(one_particle(x, Vec3::new(1.0, 0.0, 0.0)), mat(), p, Vec3::zeros(), None).unwrap();
        s.transfer_p2g().unwrap();
        let m = s.particles.mass[0];
        let mom = s.grid().total_momentum();
        assert!((mom - Vec3::new(m, 0.0, 0.0)).norm() < 1e-14 * m);
        assert_eq!(s.grid().total_mass_quanta(), s.particle_mass_quanta());
        let touched = s.grid().active_nodes().filter(|(_, n)| n.mass > 0).count();
        assert_eq!(touched, 27);
    }

    #[test]
    fn free_node_gains_gravity() {
        let p = sim(64);
        let mut s = SimState::new(
            one_particle(Vec3::repeat(1.0), Vec3::zeros()),
            mat(),
            SimParams { dt: 1e-3, ..p },
            Vec3::new(0.0, -9.8, 0.0),
            None,
        )
        .unwrap();
        s.transfer_p2g().unwrap();
        s.update_grid();
        for (_, n) in s.grid().active_nodes().filter(|(_, n)| n.mass > 0) {
            assert!((n.mv - Vec3::new(0.0, -0.0098, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn collider_modes() {
        let n = Vec3::y();
        let v = Vec3::new(1.0, -2.0, 0.0);
        assert_eq!(collide(&v, &n, 0.0, ColliderMode::Slip), Vec3::new(1.0, 0.0, 0.0));
        // max(0, 1 - 0.3 * 2 / 1) = 0.4
        assert!((collide(&v, &n, 0.3, ColliderMode::Slip) - Vec3::new(0.4, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(collide(&v, &n, 0.5, ColliderMode::Slip), Vec3::zeros());
        assert_eq!(collide(&v, &n, 0.3, ColliderMode::Sticky), Vec3::zeros());
        let up = Vec3::new(1.0, 2.0, 0.0);
        assert_eq!(collide(&up, &n, 0.3, ColliderMode::Separate), up);
        assert_eq!(collide(&up, &n, 0.0, ColliderMode::Slip), Vec3::new(1.0, 0.0, 0.0));
        let v2 = Vec3::new(2.0, -1.0, 0.0);
        let r = collide(&v2, &n, 0.5, ColliderMode::Separate);
        // 1 - 0.5 * 1 / 2 = 0.75
        assert!((r - Vec3::new(1.5, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn uniform_and_linear_grid_fields_are_recovered() {
        let p = sim(64);
        let dx = p.dx();
        let mut cloud = ParticleCloud::default();
        for i in 0..5 {
            cloud.push(Vec3::new(0.9 + i as f64 * 0.013, 1.0 + i as f64 * 0.007, 1.1), Vec3::zeros(), 1.0, 1e-4, 0, 0, false);
        }
        let mut s = SimState::new(cloud.clone(), mat(), p, Vec3::zeros(), None).unwrap();
        s.transfer_p2g().unwrap();
        let u = Vec3::new(0.3, -0.2, 0.1);
        s.impose_grid_velocity(|_| u);
        let f0 = s.particles.f.clone();
        s.transfer_g2p().unwrap();
        for i in 0..5 {
            assert!((s.particles.v[i] - u).norm() < 1e-12);
            assert!(s.particles.c[i].norm() < 1e-9);
            assert!((s.particles.f[i] - f0[i]).norm() < 1e-9);
        }
        let a = Mat3::new(0.1, 0.2, -0.3, 0.0, 0.5, 0.1, -0.2, 0.3, 0.05);
        let mut s = SimState::new(cloud, mat(), p, Vec3::zeros(), None).unwrap();
        s.transfer_p2g().unwrap();
        s.impose_grid_velocity(|x| a * x);
        s.transfer_g2p().unwrap();
        for i in 0..5 {
            assert!((s.particles.c[i] - a).norm() < 10.0 * dx * a.norm());
        }
    }

    #[test]
    fn ballistic_particle_without_gravity() {
        let p = sim(64);
        let x0 = Vec3::new(0.7, 1.0, 1.0);
        let mut s = SimState::new(one_particle(x0, Vec3::new(1.0, 0.0, 0.0)), mat(), p, Vec3::zeros(), None).unwrap();
        let n = 200;
        for _ in 0..n {
            s.step().unwrap();
        }
        let expect = x0.x + n as f64 * p.dt;
        assert!(((s.particles.x[0].x - expect) / (expect - x0.x)).abs() < 1e-6);
    }

    #[test]
    fn still_scene_stays_still() {
        let p = SimParams {
            frame_count: 4,
            substeps_per_frame: 5,
            ..sim(32)
        };
        let mut cloud = ParticleCloud::default();
        for i in 0..4 {
            cloud.push(Vec3::new(1.0 + 0.02 * i as f64, 1.0, 1.0), Vec3::zeros(), 1.0, 1e-4, 0, 0, false);
        }
        let setup = SimSetup {
            params: p,
            scale: ScaleModel::new(1.0, 0.0),
            materials: vec![MaterialSpec::from_category(1000.0, ElasticityCategory::Soft)],
            collider: None,
        };
        let snaps = simulate(&setup, cloud).unwrap();
        assert_eq!(snaps.len(), 4);
        for s in &snaps[1..] {
            assert_eq!(s.x, snaps[0].x);
        }
    }
}
