use crate::math::{Mat3, Vec3};
use crate::sampling::ParticleCloud;
use crate::scene::{ColliderMode, ColliderSurface, ConstitutiveModel, SimParams, BOUNDARY_CELLS};

use super::constitutive::{
    bspline_unchecked, clamp_singular_values, hencky_stress, particle_stress, sand_projection, MaterialParams,
};
use super::grid::SparseGrid;
use super::MpmError;
use crate::par::{par_for_each_mut, par_map};

/// Fixed-point mass resolution: a particle's mass is represented with about
/// this many bits.
const MASS_BITS: i32 = 40;

/// Singular-value bounds used when inversion clamping is enabled.
pub const CLAMP_RANGE: (f64, f64) = (0.1, 10.0);

/// Everything the substep loop owns.
#[derive(Debug, Clone)]
pub struct SimState {
    pub particles: ParticleCloud,
    pub materials: Vec<MaterialParams>,
    pub params: SimParams,
    /// Effective gravity `g'`.
    pub gravity: Vec3,
    pub collider: Option<ColliderSurface>,
    pub time: f64,
    pub step_index: u64,
    /// Margin clamps applied so far.
    pub clamp_events: u64,
    grid: SparseGrid,
    quanta: Vec<i64>,
    quantum: f64,
}

#[derive(Debug, Clone, Copy)]
struct Kernel {
    base: [usize; 3],
    fx: Vec3,
    w: [[f64; 3]; 3],
    affine: Mat3,
    mv: Vec3,
    quanta: i64,
}

#[derive(Debug, Clone, Copy)]
struct Update {
    x: Vec3,
    v: Vec3,
    c: Mat3,
    f: Mat3,
    plastic: f64,
    clamped: bool,
}

impl SimState {
    /// Prepares a state. Particle masses are snapped to the fixed-point
    /// quantum (a relative change below 1e-12).
    pub fn new(
        mut particles: ParticleCloud,
        materials: Vec<MaterialParams>,
        params: SimParams,
        gravity: Vec3,
        collider: Option<ColliderSurface>,
    ) -> Result<Self, MpmError> {
        for i in 0..particles.len() {
            if !params.in_margin(&particles.x[i]) {
                return Err(MpmError::OutsideMargin { particle: i, step: 0 });
            }
            if particles.material[i] as usize >= materials.len() {
                return Err(MpmError::InvalidMaterial(format!(
                    "particle {i} refers to material {} but only {} are defined",
                    particles.material[i],
                    materials.len()
                )));
            }
            if !(particles.mass[i] > 0.0) {
                return Err(MpmError::InvalidMaterial(format!("particle {i} has non-positive mass")));
            }
        }
        let max_mass = particles.mass.iter().copied().fold(0.0, f64::max);
        let quantum = if max_mass > 0.0 {
            2f64.powi(max_mass.log2().ceil() as i32 - MASS_BITS)
        } else {
            1.0
        };
        let quanta: Vec<i64> = particles.mass.iter().map(|m| (m / quantum).round().max(1.0) as i64).collect();
        for (m, q) in particles.mass.iter_mut().zip(&quanta) {
            *m = *q as f64 * quantum;
        }
        Ok(Self {
            particles,
            materials,
            grid: SparseGrid::new(params.grid_resolution),
            params,
            gravity,
            collider,
            time: 0.0,
            step_index: 0,
            clamp_events: 0,
            quanta,
            quantum,
        })
    }

    pub fn grid(&self) -> &SparseGrid {
        &self.grid
    }

    pub fn mass_quantum(&self) -> f64 {
        self.quantum
    }

    pub fn particle_mass_quanta(&self) -> i64 {
        self.quanta.iter().sum()
    }

    /// Particle mass in the same fixed-point units the grid uses.
    pub fn particle_total_mass(&self) -> f64 {
        self.particle_mass_quanta() as f64 * self.quantum
    }

    pub fn grid_total_mass(&self) -> f64 {
        self.grid.total_mass_quanta() as f64 * self.quantum
    }

    fn kernels(&self) -> Result<Vec<Kernel>, MpmError> {
        let dx = self.params.dx();
        let inv_dx = 1.0 / dx;
        let dt = self.params.dt;
        let n_nodes = self.grid.nodes;
        let p = &self.particles;
        let step = self.step_index;
        let mats = &self.materials;
        let quanta = &self.quanta;
        par_map(p.len(), |i| {
            let x = p.x[i];
            let mut base = [0usize; 3];
            let mut fx = Vec3::zeros();
            let mut w = [[0.0; 3]; 3];
            for d in 0..3 {
                let g = x[d] * inv_dx - 0.5;
                let b = g.floor();
                if !(b >= 0.0) || b as usize + 2 >= n_nodes {
                    return Err(MpmError::OutsideMargin { particle: i, step });
                }
                base[d] = b as usize;
                fx[d] = x[d] * inv_dx - b;
                w[d] = bspline_unchecked(fx[d]);
            }
            let mat = &mats[p.material[i] as usize];
            let tau = match mat.model {
                ConstitutiveModel::Elastic => particle_stress(&p.f[i], &mat.lame).map_err(|e| match e {
                    MpmError::Inversion { det, .. } => MpmError::Inversion {
                        step: Some(step),
                        particle: Some(i),
                        det,
                    },
                    other => other,
                })?,
                ConstitutiveModel::Sand => hencky_stress(&p.f[i], &mat.lame),
            };
            let affine = p.mass[i] * p.c[i] - (4.0 * dt * inv_dx * inv_dx * p.volume[i]) * tau;
            Ok(Kernel {
                base,
                fx,
                w,
                affine,
                mv: p.mass[i] * p.v[i],
                quanta: quanta[i],
            })
        })
        .into_iter()
        .collect()
    }

    fn particle_to_grid(&mut self, kernels: &[Kernel]) {
        let dx = self.params.dx();
        self.grid.clear();
        for k in kernels {
            let b = k.base;
            for (i, j, l) in [
                (0, 0, 0),
                (2, 0, 0),
                (0, 2, 0),
                (2, 2, 0),
                (0, 0, 2),
                (2, 0, 2),
                (0, 2, 2),
                (2, 2, 2),
            ] {
                self.grid.touch(b[0] + i, b[1] + j, b[2] + l);
            }
        }
        for k in kernels {
            let mut given = 0i64;
            let mut heaviest = (0usize, -1.0f64);
            let mut slots = [0usize; 27];
            let mut n = 0;
            for i in 0..3 {
                for j in 0..3 {
                    for l in 0..3 {
                        let weight = k.w[0][i] * k.w[1][j] * k.w[2][l];
                        let dpos = Vec3::new(i as f64 - k.fx.x, j as f64 - k.fx.y, l as f64 - k.fx.z) * dx;
                        let s = self
                            .grid
                            .slot(k.base[0] + i, k.base[1] + j, k.base[2] + l)
                            .expect("stencil blocks are allocated");
                        let share = (weight * k.quanta as f64).floor() as i64;
                        let node = &mut self.grid.data[s];
                        node.mass += share;
                        node.mv += weight * (k.mv + k.affine * dpos);
                        given += share;
                        if weight > heaviest.1 {
                            heaviest = (n, weight);
                        }
                        slots[n] = s;
                        n += 1;
                    }
                }
            }
            self.grid.data[slots[heaviest.0]].mass += k.quanta - given;
        }
    }

    fn grid_update(&mut self) {
        let dt = self.params.dt;
        let dx = self.params.dx();
        let q = self.quantum;
        let g = self.gravity;
        let res = self.params.grid_resolution;
        let lo_band = BOUNDARY_CELLS;
        let hi_band = res - BOUNDARY_CELLS;
        let collider = self.collider.as_ref();
        let index_of: Vec<[usize; 3]> = (0..self.grid.active_blocks())
            .map(|b| self.grid.origins[b])
            .collect();
        par_for_each_mut(self.grid.active_data_mut(), |s, node| {
            if node.mass == 0 {
                node.mv = Vec3::zeros();
                return;
            }
            let o = index_of[s / super::grid::BLOCK_NODES];
            let l = s % super::grid::BLOCK_NODES;
            let bsz = super::grid::BLOCK;
            let idx = [o[0] + l / (bsz * bsz), o[1] + (l / bsz) % bsz, o[2] + l % bsz];
            let mut v = node.mv / (node.mass as f64 * q) + dt * g;
            if let Some(c) = collider {
                let (x, y, z) = (idx[0] as f64 * dx, idx[1] as f64 * dx, idx[2] as f64 * dx);
                if y <= c.height_at(x, z) {
                    v = collide(&v, &c.normal_at(x, z), c.friction, c.mode);
                }
            }
            for d in 0..3 {
                if idx[d] < lo_band || idx[d] > hi_band {
                    v[d] = 0.0;
                }
            }
            node.mv = v;
        });
    }

    fn grid_to_particle(&mut self) -> Result<(), MpmError> {
        let dx = self.params.dx();
        let inv_dx = 1.0 / dx;
        let dt = self.params.dt;
        let step = self.step_index;
        let margin = self.params.margin();
        let hi = self.params.domain_size - margin;
        let clamp = self.params.clamp_singular_values;
        let p = &self.particles;
        let grid = &self.grid;
        let mats = &self.materials;
        let updates: Vec<Result<Update, MpmError>> = par_map(p.len(), |i| {
            let x = p.x[i];
            let mut base = [0usize; 3];
            let mut fx = Vec3::zeros();
            let mut w = [[0.0; 3]; 3];
            for d in 0..3 {
                let b = (x[d] * inv_dx - 0.5).floor();
                base[d] = b as usize;
                fx[d] = x[d] * inv_dx - b;
                w[d] = bspline_unchecked(fx[d]);
            }
            let mut v = Vec3::zeros();
            let mut bmat = Mat3::zeros();
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        let weight = w[0][a] * w[1][b] * w[2][c];
                        let node = grid
                            .node(base[0] + a, base[1] + b, base[2] + c)
                            .expect("stencil blocks are allocated");
                        let dpos = Vec3::new(a as f64 - fx.x, b as f64 - fx.y, c as f64 - fx.z) * dx;
                        v += weight * node.mv;
                        bmat += weight * node.mv * dpos.transpose();
                    }
                }
            }
            let cmat = 4.0 * inv_dx * inv_dx * bmat;
            let mut f = (Mat3::identity() + dt * cmat) * p.f[i];
            let mut plastic = p.plastic[i];
            let mat = &mats[p.material[i] as usize];
            match mat.model {
                ConstitutiveModel::Elastic => {
                    if clamp {
                        f = clamp_singular_values(&f, CLAMP_RANGE.0, CLAMP_RANGE.1);
                    }
                }
                ConstitutiveModel::Sand => {
                    f = sand_projection(&f, &mut plastic, &mat.lame, mat.alpha);
                }
            }
            let mut xn = x + dt * v;
            if !(v.iter().all(|c| c.is_finite()) && xn.iter().all(|c| c.is_finite()) && f.iter().all(|c| c.is_finite()))
            {
                return Err(MpmError::Diverged {
                    step,
                    last_good_frame: None,
                });
            }
            let mut clamped = false;
            for d in 0..3 {
                if xn[d] < margin {
                    xn[d] = margin;
                    v[d] = 0.0;
                    clamped = true;
                } else if xn[d] > hi {
                    xn[d] = hi;
                    v[d] = 0.0;
                    clamped = true;
                }
            }
            Ok(Update {
                x: xn,
                v,
                c: cmat,
                f,
                plastic,
                clamped,
            })
        });
        let mut clamps = 0u64;
        for (i, u) in updates.into_iter().enumerate() {
            let u = u?;
            let p = &mut self.particles;
            p.x[i] = u.x;
            p.v[i] = u.v;
            p.c[i] = u.c;
            p.f[i] = u.f;
            p.plastic[i] = u.plastic;
            clamps += u.clamped as u64;
        }
        if clamps > 0 {
            log::warn!("step {step}: {clamps} particles clamped to the domain margin");
            self.clamp_events += clamps;
        }
        Ok(())
    }

    /// Particle-to-grid transfer alone, leaving node mass and momentum on
    /// the grid.
    pub fn transfer_p2g(&mut self) -> Result<(), MpmError> {
        let kernels = self.kernels()?;
        self.particle_to_grid(&kernels);
        Ok(())
    }

    /// Converts grid momentum to velocity and applies gravity, boundary and
    /// collider conditions.
    pub fn update_grid(&mut self) {
        self.grid_update();
    }

    /// Grid-to-particle transfer and advection.
    pub fn transfer_g2p(&mut self) -> Result<(), MpmError> {
        self.grid_to_particle()
    }

    /// One full substep.
    pub fn step(&mut self) -> Result<(), MpmError> {
        self.transfer_p2g()?;
        self.update_grid();
        self.transfer_g2p()?;
        self.step_index += 1;
        self.time = self.step_index as f64 * self.params.dt;
        Ok(())
    }

    /// Overwrites node velocities with a field `v(x_i)` on every allocated
    /// node (used to probe the gather in isolation).
    pub fn impose_grid_velocity(&mut self, field: impl Fn(&Vec3) -> Vec3) {
        let dx = self.params.dx();
        for s in 0..self.grid.active_blocks() * super::grid::BLOCK_NODES {
            let idx = self.grid.slot_index(s);
            let x = Vec3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * dx;
            self.grid.data[s].mv = field(&x);
        }
    }
}

/// Collider response for a node at or below the surface with unit normal
/// `n`.
pub fn collide(v: &Vec3, n: &Vec3, friction: f64, mode: ColliderMode) -> Vec3 {
    let vn = v.dot(n);
    match mode {
        ColliderMode::Sticky => Vec3::zeros(),
        ColliderMode::Slip => {
            let vt = v - vn * n;
            if vn < 0.0 {
                coulomb(vt, vn, friction)
            } else {
                vt
            }
        }
        ColliderMode::Separate => {
            if vn < 0.0 {
                coulomb(v - vn * n, vn, friction)
            } else {
                *v
            }
        }
    }
}

#[inline]
fn coulomb(vt: Vec3, vn: f64, friction: f64) -> Vec3 {
    let t = vt.norm();
    if t <= 0.0 {
        return vt;
    }
    (1.0 - friction * vn.abs() / t).max(0.0) * vt
}
