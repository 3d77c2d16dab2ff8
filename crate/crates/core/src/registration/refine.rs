use crate::math::{nearest_rotation, rotation_from_axis_angle, Similarity};
use crate::scene::{CameraIntrinsics, DepthImage, MaskImage, TriangleMesh};

use super::{dice_loss, masked_depth_loss, rasterize_mask_depth, RegistrationError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    /// Budget of objective evaluations.
    pub max_evals: usize,
    /// Stop once the simplex's loss spread falls below this fraction of the
    /// best loss.
    pub tolerance: f64,
    pub depth_weight: f64,
    /// Initial simplex steps: radians, fraction of the initial distance to
    /// the camera, and log-scale.
    pub rotation_step: f64,
    pub translation_step: f64,
    pub log_scale_step: f64,
    /// Extra runs started from the current best with halved steps.
    pub restarts: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_evals: 600,
            tolerance: 1e-6,
            depth_weight: 1.0,
            rotation_step: 0.06,
            translation_step: 0.03,
            log_scale_step: 0.03,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub pose: Similarity,
    pub dice: f64,
    pub depth: f64,
    pub loss: f64,
    /// Best loss after each simplex iteration; never increases.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Loss terms of a candidate pose against the observations.
pub fn pose_loss(
    mesh: &TriangleMesh,
    cam: &CameraIntrinsics,
    mask_obs: &MaskImage,
    depth_obs: &DepthImage,
    pose: &Similarity,
    depth_weight: f64,
) -> Result<(f64, f64, f64), RegistrationError> {
    let (mask, depth) = rasterize_mask_depth(mesh, pose, cam);
    if mask.count() == 0 {
        return Err(RegistrationError::OutOfView);
    }
    let dice = dice_loss(&mask, mask_obs)?;
    let dl = match masked_depth_loss(mask_obs, &depth, depth_obs) {
        Ok(v) => v,
        Err(RegistrationError::EmptyMask) => 0.0,
        Err(e) => return Err(e),
    };
    Ok((dice, dl, dice + depth_weight * dl))
}

const DIM: usize = 7;
type Params = [f64; DIM];

struct Objective<'a> {
    mesh: &'a TriangleMesh,
    cam: &'a CameraIntrinsics,
    mask: &'a MaskImage,
    depth: &'a DepthImage,
    base: Similarity,
    t_unit: f64,
    weight: f64,
    evals: usize,
}

impl Objective<'_> {
    fn pose(&self, x: &Params) -> Similarity {
        let w = crate::math::Vec3::new(x[0], x[1], x[2]);
        let dt = crate::math::Vec3::new(x[3], x[4], x[5]) * self.t_unit;
        Similarity::new(
            nearest_rotation(&(rotation_from_axis_angle(&w) * self.base.rotation)),
            self.base.translation + dt,
            self.base.scale * x[6].exp(),
        )
    }

    fn eval(&mut self, x: &Params) -> f64 {
        self.evals += 1;
        let p = self.pose(x);
        match pose_loss(self.mesh, self.cam, self.mask, self.depth, &p, self.weight) {
            Ok((_, _, l)) => l,
            Err(_) => f64::INFINITY,
        }
    }
}

/// Derivative-free refinement (Nelder-Mead over rotation increment,
/// translation increment and log-scale). The result's loss never exceeds
/// the initial one.
pub fn refine_pose(
    mesh: &TriangleMesh,
    cam: &CameraIntrinsics,
    mask_obs: &MaskImage,
    depth_obs: &DepthImage,
    init: &Similarity,
    opts: &RefineOptions,
) -> Result<RefineResult, RegistrationError> {
    if mask_obs.count() == 0 {
        return Err(RegistrationError::EmptyMask);
    }
    let (d0, z0, l0) = pose_loss(mesh, cam, mask_obs, depth_obs, init, opts.depth_weight)?;
    let mut obj = Objective {
        mesh,
        cam,
        mask: mask_obs,
        depth: depth_obs,
        base: *init,
        t_unit: init.translation.norm().max(1e-9),
        weight: opts.depth_weight,
        evals: 1,
    };
    let mut best_x = [0.0; DIM];
    let mut best_f = l0;
    let mut history = vec![l0];
    let mut steps = [
        opts.rotation_step,
        opts.rotation_step,
        opts.rotation_step,
        opts.translation_step,
        opts.translation_step,
        opts.translation_step,
        opts.log_scale_step,
    ];
    for _ in 0..=opts.restarts {
        if obj.evals >= opts.max_evals {
            break;
        }
        let (x, f) = nelder_mead(&mut obj, best_x, best_f, &steps, opts, &mut history);
        if f < best_f {
            best_x = x;
            best_f = f;
        }
        for s in steps.iter_mut() {
            *s *= 0.5;
        }
    }
    if !(best_f < l0) {
        return Ok(RefineResult {
            pose: *init,
            dice: d0,
            depth: z0,
            loss: l0,
            history,
            evaluations: obj.evals,
        });
    }
    let pose = obj.pose(&best_x);
    let (dice, depth, loss) = pose_loss(mesh, cam, mask_obs, depth_obs, &pose, opts.depth_weight)?;
    Ok(RefineResult {
        pose,
        dice,
        depth,
        loss,
        history,
        evaluations: obj.evals,
    })
}

fn nelder_mead(
    obj: &mut Objective,
    x0: Params,
    f0: f64,
    steps: &Params,
    opts: &RefineOptions,
    history: &mut Vec<f64>,
) -> (Params, f64) {
    let mut simplex: Vec<(Params, f64)> = Vec::with_capacity(DIM + 1);
    simplex.push((x0, f0));
    for i in 0..DIM {
        let mut x = x0;
        x[i] += steps[i];
        let f = obj.eval(&x);
        simplex.push((x, f));
    }
    let centroid = |s: &[(Params, f64)]| {
        let mut c = [0.0; DIM];
        for (x, _) in &s[..DIM] {
            for k in 0..DIM {
                c[k] += x[k] / DIM as f64;
            }
        }
        c
    };
    let along = |c: &Params, w: &Params, t: f64| {
        let mut x = [0.0; DIM];
        for k in 0..DIM {
            x[k] = c[k] + t * (w[k] - c[k]);
        }
        x
    };
    loop {
        // stable sort keeps earlier vertices first among equal losses
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[DIM].1;
        let last = *history.last().unwrap_or(&f64::INFINITY);
        history.push(best.min(last));
        if obj.evals >= opts.max_evals {
            break;
        }
        let spread = worst - best;
        if spread.is_finite() && spread <= opts.tolerance * best.abs().max(1e-9) {
            break;
        }
        let c = centroid(&simplex);
        let w = simplex[DIM].0;
        let xr = along(&c, &w, -1.0);
        let fr = obj.eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(&c, &w, -2.0);
            let fe = obj.eval(&xe);
            simplex[DIM] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[DIM - 1].1 {
            simplex[DIM] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[DIM].1 {
                let x = along(&c, &w, -0.5);
                (x, obj.eval(&x))
            } else {
                let x = along(&c, &w, 0.5);
                (x, obj.eval(&x))
            };
            if fc < simplex[DIM].1.min(fr) {
                simplex[DIM] = (xc, fc);
            } else {
                let x_best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    v.0 = along(&x_best, &v.0, 0.5);
                    v.1 = obj.eval(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}
