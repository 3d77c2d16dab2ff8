//! Stage orchestration. Each stage reads the files written by the previous
//! one from the output directory, so stages can be run one at a time or
//! chained, with identical bytes either way.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deform::{bind_mesh, deform_mesh, DeformError, TrackWriter};
use crate::math::{arr3, Similarity, Vec3};
use crate::mpm::{FrameDiagnostics, MpmError, SimSetup};
use crate::registration::{
    read_correspondences, register_object, PoseEntry, PoseFile, RefineOptions, RegistrationError,
};
use crate::render::{
    apply_tone_curve, bake_vertex_colors, build_shadow_catcher, composite_frame, fit_tone_curve,
    render_layers, RenderError, ToneCurve,
};
use crate::sampling::{mesh_to_particles, read_particles, write_particles, ParticleCloud, SamplingError, SamplingOptions};
use crate::scene::io::{read_depth, read_mask, read_mesh, read_obj, read_rgb, write_obj, write_rgb};
use crate::scene::{
    serialize_scene_config, validate_scene, ColliderKind, ColliderShape, ColliderSurface, Heightfield, SceneConfig,
    SceneError, ScaleModel, TriangleMesh,
};

pub const POSES_FILE: &str = "poses.toml";
pub const PARTICLES_INIT_FILE: &str = "particles_init.ply";
pub const SCALE_FILE: &str = "scale.toml";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.tsv";
pub const TRACKS_FILE: &str = "tracks.txt";
pub const MESH_DIR: &str = "meshes";
pub const MANIFEST_FILE: &str = "manifest.toml";

pub fn particles_file(frame: usize) -> String {
    format!("particles_{frame:04}.ply")
}

pub fn frame_file(frame: usize) -> String {
    format!("frame_{frame:04}.png")
}

pub fn shadow_file(frame: usize) -> String {
    format!("shadow_{frame:04}.png")
}

pub fn mesh_file(id: &str, frame: usize) -> String {
    format!("{MESH_DIR}/mesh_{id}_{frame:04}.obj")
}

/// Failure of a stage, classified by exit status.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Io(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Divergence(_) => 3,
            PipelineError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Divergence(_) => "divergence",
            PipelineError::Io(_) => "io",
        }
    }
}

impl From<SceneError> for PipelineError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Io { .. } | SceneError::Format { .. } => PipelineError::Io(e.to_string()),
            _ => PipelineError::Config(e.to_string()),
        }
    }
}

impl From<RegistrationError> for PipelineError {
    fn from(e: RegistrationError) -> Self {
        match e {
            RegistrationError::Scene(s) => s.into(),
            other => PipelineError::Config(format!("registration failed: {other}")),
        }
    }
}

impl From<SamplingError> for PipelineError {
    fn from(e: SamplingError) -> Self {
        match e {
            SamplingError::Scene(s) => s.into(),
            other => PipelineError::Config(other.to_string()),
        }
    }
}

impl From<MpmError> for PipelineError {
    fn from(e: MpmError) -> Self {
        if e.is_divergence() {
            PipelineError::Divergence(e.to_string())
        } else {
            PipelineError::Config(e.to_string())
        }
    }
}

impl From<DeformError> for PipelineError {
    fn from(e: DeformError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<RenderError> for PipelineError {
    fn from(e: RenderError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Register,
    Sample,
    Simulate,
    Track,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Register, Stage::Sample, Stage::Simulate, Stage::Track, Stage::Render];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Register => "register",
            Stage::Sample => "sample",
            Stage::Simulate => "simulate",
            Stage::Track => "track",
            Stage::Render => "render",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Overrides `sim.frame_count`.
    pub frames: Option<usize>,
    /// Recorded in the manifest; no stage draws random numbers.
    pub seed: Option<u64>,
    /// Also write 16-bit shadow-factor images.
    pub dump_diagnostics: bool,
}

/// Files created by the running stage, deleted again if it fails.
#[derive(Debug, Default)]
struct Written {
    paths: Vec<PathBuf>,
}

impl Written {
    fn bytes(&mut self, path: PathBuf, data: &[u8]) -> Result<(), PipelineError> {
        fs::write(&path, data).map_err(|e| io_error(&path, e))?;
        self.paths.push(path);
        Ok(())
    }

    fn track(&mut self, path: PathBuf) {
        self.paths.push(path);
    }

    fn rollback(&self) {
        for p in &self.paths {
            let _ = fs::remove_file(p);
        }
    }
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| {
        PipelineError::Io(format!(
            "cannot read {}: {e} (run the earlier stages first)",
            path.display()
        ))
    })
}

/// Sim-frame scale and the scaled parameters actually simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleFile {
    pub k: f64,
    pub g0: f64,
    /// `k g0` along the gravity direction.
    pub gravity: [f64; 3],
    pub objects: Vec<ScaleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleEntry {
    pub id: String,
    /// Largest side of the posed bounding box, simulator units.
    pub sim_size: f64,
    pub youngs_modulus: f64,
    pub scaled_youngs_modulus: f64,
    pub scaled_initial_velocity: [f64; 3],
}

impl ScaleFile {
    pub fn model(&self) -> ScaleModel {
        ScaleModel::new(self.k, self.g0)
    }
}

/// The ground the objects collide with, as configured.
pub fn collider_surface(cfg: &SceneConfig) -> Result<ColliderSurface, PipelineError> {
    let c = &cfg.collider;
    let shape = match c.kind {
        ColliderKind::Plane => ColliderShape::Plane {
            height: c.height.unwrap_or(0.0),
        },
        ColliderKind::Depth => {
            let path = cfg.resolve(c.path.as_deref().unwrap_or(Path::new("")));
            let depth = read_depth(&path)?;
            ColliderShape::Heightfield(build_shadow_catcher(
                &depth,
                &cfg.camera(),
                cfg.sim.domain_size,
                c.resolution,
            )?)
        }
    };
    Ok(ColliderSurface {
        shape,
        friction: c.friction,
        mode: c.mode,
    })
}

/// Shadow-receiving mesh matching the collider over the simulation square.
pub fn catcher_mesh(surface: &ColliderSurface, domain_size: f64) -> TriangleMesh {
    match &surface.shape {
        ColliderShape::Plane { height } => Heightfield::flat(2, domain_size, *height).to_mesh(),
        ColliderShape::Heightfield(hf) => hf.to_mesh(),
    }
}

/// Registered camera-frame poses: given in the config, or estimated from
/// correspondences, the observed mask and the observed depth.
pub fn register(cfg: &SceneConfig) -> Result<PoseFile, PipelineError> {
    let intr = cfg.camera.intrinsics();
    let depth = match &cfg.depth {
        Some(p) => Some(read_depth(&cfg.resolve(p))?),
        None => None,
    };
    let mut out = PoseFile::default();
    for o in &cfg.objects {
        if let Some(p) = &o.pose {
            out.objects.push(PoseEntry::new(&o.id, &Similarity::from(p)));
            continue;
        }
        let need = |what: &str| PipelineError::Config(format!("object `{}`: registration needs {what}", o.id));
        let corr = read_correspondences(&cfg.resolve(o.correspondences.as_deref().ok_or_else(|| need("correspondences"))?))?;
        let mask = read_mask(&cfg.resolve(o.mask.as_deref().ok_or_else(|| need("a mask"))?))?;
        let depth = depth.as_ref().ok_or_else(|| need("scene `depth`"))?;
        let mesh = read_mesh(&cfg.resolve(&o.mesh))?;
        let reg = register_object(&mesh, &intr, &corr, depth, &mask, &RefineOptions::default())
            .map_err(|e| match PipelineError::from(e) {
                PipelineError::Config(m) => PipelineError::Config(format!("object `{}`: {m}", o.id)),
                other => other,
            })?;
        log::info!(
            "object `{}`: pnp rms {:.3} px, dice loss {:.4}, depth loss {:.4}",
            o.id,
            reg.pnp_rms,
            reg.dice,
            reg.depth
        );
        let mut e = PoseEntry::new(&o.id, &reg.pose);
        e.dice = Some(reg.dice);
        e.depth = Some(reg.depth);
        e.loss = Some(reg.loss);
        out.objects.push(e);
    }
    Ok(out)
}

fn load_poses(cfg: &SceneConfig, out: &Path) -> Result<Vec<Similarity>, PipelineError> {
    let path = out.join(POSES_FILE);
    let poses = PoseFile::from_toml(&read_text(&path)?)
        .map_err(|m| PipelineError::Io(format!("malformed {}: {m}", path.display())))?;
    cfg.objects
        .iter()
        .map(|o| {
            poses
                .get(&o.id)
                .map(PoseEntry::similarity)
                .ok_or_else(|| PipelineError::Config(format!("{} has no pose for object `{}`", path.display(), o.id)))
        })
        .collect()
}

/// Each object's mesh placed in the simulator frame.
pub fn world_meshes(cfg: &SceneConfig, poses: &[Similarity]) -> Result<Vec<(TriangleMesh, Similarity)>, PipelineError> {
    let c2w = cfg.camera().camera_to_world;
    cfg.objects
        .iter()
        .zip(poses)
        .map(|(o, pose)| {
            let mesh = read_mesh(&cfg.resolve(&o.mesh))?;
            let world = c2w.compose(pose);
            Ok((mesh, world))
        })
        .collect()
}

/// Particles for every object, with velocities already scaled by `k`.
pub fn sample(cfg: &SceneConfig, poses: &[Similarity]) -> Result<(ParticleCloud, ScaleFile), PipelineError> {
    let placed = world_meshes(cfg, poses)?;
    let sizes: Vec<f64> = placed
        .iter()
        .map(|(m, pose)| m.transformed(pose).bounds().extent().max())
        .collect();
    let scale = cfg.resolve_scale(&sizes);
    let v0 = cfg
        .objects
        .iter()
        .map(|o| scale.scaled_velocity(&o.initial_velocity()).norm())
        .fold(0.0, f64::max);
    let bound = v0 + (2.0 * scale.scaled_gravity() * cfg.sim.domain_size).sqrt();
    if let Some(msg) = cfg.sim.cfl_violation(bound) {
        return Err(PipelineError::Config(format!("{msg} (k = {:.4})", scale.k)));
    }
    let mut cloud = ParticleCloud::default();
    let mut entries = Vec::new();
    for (i, (o, (mesh, pose))) in cfg.objects.iter().zip(&placed).enumerate() {
        let v = scale.scaled_velocity(&o.initial_velocity());
        let part = mesh_to_particles(
            &o.id,
            mesh,
            pose,
            &o.material,
            &cfg.sim,
            v,
            i as u32,
            &SamplingOptions::default(),
        )?;
        log::info!("object `{}`: {} particles", o.id, part.len());
        cloud.append(&part);
        let e = o.material.youngs_modulus();
        entries.push(ScaleEntry {
            id: o.id.clone(),
            sim_size: sizes[i],
            youngs_modulus: e,
            scaled_youngs_modulus: scale.scaled_youngs_modulus(e),
            scaled_initial_velocity: arr3(&v),
        });
    }
    let g = scale.scaled_gravity() * cfg.sim.gravity_unit();
    Ok((
        cloud,
        ScaleFile {
            k: scale.k,
            g0: scale.g0,
            gravity: arr3(&g),
            objects: entries,
        },
    ))
}

/// A positions-and-velocities copy of `template` at one frame.
fn frame_cloud(template: &ParticleCloud, x: &[Vec3], v: &[Vec3]) -> ParticleCloud {
    let mut c = template.clone();
    c.x = x.to_vec();
    c.v = v.to_vec();
    c
}

pub const DIAGNOSTICS_HEADER: &str =
    "frame\ttime\ttotal_mass\tmomentum_x\tmomentum_y\tmomentum_z\tkinetic_energy\tmax_speed\tclamp_events";

pub fn format_diagnostics_row(d: &FrameDiagnostics) -> String {
    format!(
        "{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{}",
        d.frame, d.time, d.total_mass, d.momentum.x, d.momentum.y, d.momentum.z, d.kinetic_energy, d.max_speed, d.clamp_events
    )
}

pub fn parse_diagnostics(text: &str) -> Result<Vec<FrameDiagnostics>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(format!("diagnostics line {}: expected 9 columns", n + 1));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| format!("diagnostics line {}: bad number", n + 1));
        out.push(FrameDiagnostics {
            frame: f[0].parse().map_err(|_| format!("diagnostics line {}: bad frame", n + 1))?,
            time: num(1)?,
            total_mass: num(2)?,
            momentum: Vec3::new(num(3)?, num(4)?, num(5)?),
            kinetic_energy: num(6)?,
            max_speed: num(7)?,
            clamp_events: f[8].parse().map_err(|_| format!("diagnostics line {}: bad count", n + 1))?,
        });
    }
    Ok(out)
}

/// Number of consecutive `name(0), name(1), ...` files present in `dir`.
fn count_frames(dir: &Path, name: impl Fn(usize) -> String) -> usize {
    (0..).take_while(|&f| dir.join(name(f)).is_file()).count()
}

/// Runs one stage against `opts.out`, removing the stage's own files if it
/// fails.
pub fn run_stage(cfg: &SceneConfig, stage: Stage, opts: &RunOptions) -> Result<(), PipelineError> {
    let mut w = Written::default();
    let res = match stage {
        Stage::Register => stage_register(cfg, opts, &mut w),
        Stage::Sample => stage_sample(cfg, opts, &mut w),
        Stage::Simulate => stage_simulate(cfg, opts, &mut w),
        Stage::Track => stage_track(cfg, opts, &mut w),
        Stage::Render => stage_render(cfg, opts, &mut w),
    };
    if res.is_err() {
        w.rollback();
    }
    res
}

fn stage_register(cfg: &SceneConfig, opts: &RunOptions, w: &mut Written) -> Result<(), PipelineError> {
    let poses = register(cfg)?;
    w.bytes(opts.out.join(POSES_FILE), poses.to_toml().as_bytes())
}

fn stage_sample(cfg: &SceneConfig, opts: &RunOptions, w: &mut Written) -> Result<(), PipelineError> {
    let poses = load_poses(cfg, &opts.out)?;
    let (cloud, scale) = sample(cfg, &poses)?;
    let path = opts.out.join(PARTICLES_INIT_FILE);
    w.track(path.clone());
    write_particles(&path, &cloud, true)?;
    let text = toml::to_string(&scale).map_err(|e| PipelineError::Config(e.to_string()))?;
    w.bytes(opts.out.join(SCALE_FILE), text.as_bytes())
}

fn load_scale(out: &Path) -> Result<ScaleFile, PipelineError> {
    let path = out.join(SCALE_FILE);
    toml::from_str(&read_text(&path)?).map_err(|e| PipelineError::Io(format!("malformed {}: {e}", path.display())))
}

fn stage_simulate(cfg: &SceneConfig, opts: &RunOptions, w: &mut Written) -> Result<(), PipelineError> {
    let init_path = opts.out.join(PARTICLES_INIT_FILE);
    if !init_path.is_file() {
        return Err(PipelineError::Io(format!(
            "cannot read {}: missing (run the sample stage first)",
            init_path.display()
        )));
    }
    let particles = read_particles(&init_path)?;
    let scale = load_scale(&opts.out)?;
    let mut params = cfg.sim;
    if let Some(f) = opts.frames {
        params.frame_count = f;
    }
    let setup = SimSetup {
        params,
        scale: scale.model(),
        materials: cfg.objects.iter().map(|o| o.material).collect(),
        collider: Some(collider_surface(cfg)?),
    };
    let template = particles.clone();
    let mut state = setup.state(particles)?;
    let mut tsv = format!("{DIAGNOSTICS_HEADER}\n");
    let started = Instant::now();
    let res = state.run::<PipelineError>(|snap, diag| {
        let path = opts.out.join(particles_file(snap.frame));
        w.track(path.clone());
        write_particles(&path, &frame_cloud(&template, &snap.x, &snap.v), false)?;
        tsv.push_str(&format_diagnostics_row(diag));
        tsv.push('\n');
        log::debug!(
            "frame {} at {:.1}s: max speed {:.4}",
            snap.frame,
            started.elapsed().as_secs_f64(),
            diag.max_speed
        );
        Ok(())
    });
    res?;
    w.bytes(opts.out.join(DIAGNOSTICS_FILE), tsv.as_bytes())
}

fn stage_track(cfg: &SceneConfig, opts: &RunOptions, w: &mut Written) -> Result<(), PipelineError> {
    let frames = count_frames(&opts.out, particles_file);
    if frames == 0 {
        return Err(PipelineError::Io(format!(
            "cannot read {}: missing (run the simulate stage first)",
            opts.out.join(particles_file(0)).display()
        )));
    }
    let poses = load_poses(cfg, &opts.out)?;
    let placed = world_meshes(cfg, &poses)?;
    let first = read_particles(&opts.out.join(particles_file(0)))?;
    let dx = cfg.sim.dx();
    let mut bindings = Vec::new();
    for (i, (mesh, pose)) in placed.iter().enumerate() {
        let world = mesh.transformed(pose);
        let b = bind_mesh(&world, &first, i as u32, cfg.track.neighbors, dx).map_err(|e| {
            PipelineError::Config(format!("object `{}`: {e}", cfg.objects[i].id))
        })?;
        bindings.push((world, b));
    }
    let mesh_dir = opts.out.join(MESH_DIR);
    fs::create_dir_all(&mesh_dir).map_err(|e| io_error(&mesh_dir, e))?;
    let mut tracks = TrackWriter::new(cfg.track.stride)?;
    for f in 0..frames {
        let cloud = if f == 0 {
            first.clone()
        } else {
            read_particles(&opts.out.join(particles_file(f)))?
        };
        tracks.push(f, &cloud.x);
        for (o, (world, b)) in cfg.objects.iter().zip(&bindings) {
            let mesh = deform_mesh(world, b, &cloud.x)?;
            let path = opts.out.join(mesh_file(&o.id, f));
            w.track(path.clone());
            write_obj(&path, &mesh)?;
        }
    }
    w.bytes(opts.out.join(TRACKS_FILE), tracks.text().as_bytes())
}

/// Where an object's base colors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColorSource {
    Config,
    Mesh,
    /// Sampled from the source image, so already tone-mapped.
    Baked,
    Default,
}

/// Base colors of each object: the configured flat color, else the mesh's
/// own vertex colors, else colors baked from the source image, else gray.
fn object_colors(
    cfg: &SceneConfig,
    frame0: &[TriangleMesh],
    source: Option<&image::RgbImage>,
) -> Vec<(Option<Vec<Vec3>>, ColorSource)> {
    let cam = cfg.camera();
    cfg.objects
        .iter()
        .zip(frame0)
        .map(|(o, m)| {
            if let Some(c) = o.color {
                (Some(vec![crate::math::vec3(c); m.vertices.len()]), ColorSource::Config)
            } else if m.colors.is_some() {
                (m.colors.clone(), ColorSource::Mesh)
            } else if let Some(img) = source {
                (Some(bake_vertex_colors(m, &cam, img)), ColorSource::Baked)
            } else {
                (None, ColorSource::Default)
            }
        })
        .collect()
}

/// Fits the tone curve on the first frame, comparing rendered channels with
/// the source image inside the observed masks of objects whose colors were not
/// taken from that image.
fn fit_first_frame_tone(
    cfg: &SceneConfig,
    layer: &crate::render::ObjectLayer,
    source: &image::RgbImage,
    colors: &[(Option<Vec<Vec3>>, ColorSource)],
) -> Result<ToneCurve, PipelineError> {
    let mut union: Option<Vec<bool>> = None;
    for (o, (_, src)) in cfg.objects.iter().zip(colors) {
        if *src == ColorSource::Baked {
            continue;
        }
        if let Some(p) = &o.mask {
            let m = read_mask(&cfg.resolve(p))?;
            if !m.same_size(layer.width, layer.height) {
                continue;
            }
            let u = union.get_or_insert_with(|| vec![false; m.values.len()]);
            for (a, b) in u.iter_mut().zip(&m.values) {
                *a |= *b;
            }
        }
    }
    let Some(union) = union else {
        return Ok(ToneCurve::identity());
    };
    let (mut rendered, mut observed) = (Vec::new(), Vec::new());
    for i in 0..union.len() {
        if union[i] && layer.alpha[i] > 0.0 {
            let (x, y) = (i as u32 % layer.width, i as u32 / layer.width);
            let px = source.get_pixel(x, y).0;
            for c in 0..3 {
                rendered.push(layer.color[i][c]);
                observed.push(px[c] as f64 / 255.0);
            }
        }
    }
    match fit_tone_curve(&rendered, &observed) {
        Ok(c) => Ok(c),
        Err(e) => {
            log::warn!("{e}; using the identity tone curve");
            Ok(ToneCurve::identity())
        }
    }
}

fn stage_render(cfg: &SceneConfig, opts: &RunOptions, w: &mut Written) -> Result<(), PipelineError> {
    let first_id = &cfg.objects[0].id;
    let frames = count_frames(&opts.out, |f| mesh_file(first_id, f));
    if frames == 0 {
        return Err(PipelineError::Io(format!(
            "cannot read {}: missing (run the track stage first)",
            opts.out.join(mesh_file(first_id, 0)).display()
        )));
    }
    let cam = cfg.camera();
    let plate = read_rgb(&cfg.resolve(&cfg.background_plate))?;
    let source = match &cfg.source_image {
        Some(p) => Some(read_rgb(&cfg.resolve(p))?),
        None => None,
    };
    let catcher = catcher_mesh(&collider_surface(cfg)?, cfg.sim.domain_size);
    let read_frame = |f: usize| -> Result<Vec<TriangleMesh>, PipelineError> {
        cfg.objects
            .iter()
            .map(|o| Ok(read_obj(&opts.out.join(mesh_file(&o.id, f)))?))
            .collect()
    };
    let shadow_res = cfg.render.shadow_map_resolution as u32;
    let mut colors = None;
    let mut tone = ToneCurve::identity();
    for f in 0..frames {
        let mut meshes = read_frame(f)?;
        let colors = colors.get_or_insert_with(|| object_colors(cfg, &meshes, source.as_ref()));
        for (m, (c, _)) in meshes.iter_mut().zip(colors.iter()) {
            if let Some(c) = c {
                m.colors = Some(c.clone());
            }
        }
        let refs: Vec<&TriangleMesh> = meshes.iter().collect();
        let (mut layer, shadow) = render_layers(&catcher, &refs, &cfg.light, &cam, shadow_res);
        if f == 0 {
            if let Some(src) = &source {
                tone = fit_first_frame_tone(cfg, &layer, src, colors)?;
                log::info!("tone curve a={:.5} b={:.5} c={:.5}", tone.a, tone.b, tone.c);
            }
        }
        apply_tone_curve(&tone, &mut layer.color);
        let frame = composite_frame(&plate, &layer, &shadow)?;
        let path = opts.out.join(frame_file(f));
        w.track(path.clone());
        write_rgb(&path, &frame)?;
        if opts.dump_diagnostics {
            let path = opts.out.join(shadow_file(f));
            w.track(path.clone());
            shadow.to_png16().save_with_format(&path, image::ImageFormat::Png).map_err(|e| io_error(&path, e))?;
        }
    }
    Ok(())
}

/// Run record: what was run on which config, how long it took, the
/// per-frame simulation diagnostics, and every output file with its hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunManifest {
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Wall-clock seconds of the most recent run of each stage.
    #[serde(default)]
    pub stage_seconds: BTreeMap<String, f64>,
    #[serde(default)]
    pub frames: Vec<FrameRecord>,
    #[serde(default)]
    pub files: Vec<FileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub time: f64,
    pub total_mass: f64,
    pub momentum: [f64; 3],
    pub kinetic_energy: f64,
    pub max_speed: f64,
    pub clamp_events: u64,
}

impl From<&FrameDiagnostics> for FrameRecord {
    fn from(d: &FrameDiagnostics) -> Self {
        Self {
            frame: d.frame,
            time: d.time,
            total_mass: d.total_mass,
            momentum: arr3(&d.momentum),
            kinetic_energy: d.kinetic_energy,
            max_speed: d.max_speed,
            clamp_events: d.clamp_events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Hash of the parsed config in canonical serialized form.
pub fn config_hash(cfg: &SceneConfig) -> Result<String, PipelineError> {
    Ok(sha256_hex(serialize_scene_config(cfg)?.as_bytes()))
}

/// Every file under `out` except the manifest, sorted by relative path.
pub fn inventory(out: &Path) -> Result<Vec<FileRecord>, PipelineError> {
    fn walk(dir: &Path, root: &Path, acc: &mut Vec<FileRecord>) -> Result<(), PipelineError> {
        let rd = fs::read_dir(dir).map_err(|e| PipelineError::Io(format!("cannot list {}: {e}", dir.display())))?;
        let mut entries: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, root, acc)?;
                continue;
            }
            let rel = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            if rel == MANIFEST_FILE || rel.ends_with(".tmp") {
                continue;
            }
            let data = fs::read(&p).map_err(|e| PipelineError::Io(format!("cannot read {}: {e}", p.display())))?;
            acc.push(FileRecord {
                path: rel,
                bytes: data.len() as u64,
                sha256: sha256_hex(&data),
            });
        }
        Ok(())
    }
    let mut acc = Vec::new();
    walk(out, out, &mut acc)?;
    acc.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(acc)
}

/// Rewrites the manifest from the directory contents, keeping timings of
/// stages not run this time. The file is replaced atomically.
pub fn write_manifest(
    cfg: &SceneConfig,
    opts: &RunOptions,
    timings: &[(Stage, f64)],
) -> Result<RunManifest, PipelineError> {
    let path = opts.out.join(MANIFEST_FILE);
    let hash = config_hash(cfg)?;
    let mut m = fs::read_to_string(&path)
        .ok()
        .and_then(|t| toml::from_str::<RunManifest>(&t).ok())
        .filter(|m| m.config_hash == hash)
        .unwrap_or_default();
    m.config_hash = hash;
    m.seed = opts.seed.or(m.seed);
    for (s, t) in timings {
        m.stage_seconds.insert(s.name().to_string(), *t);
    }
    m.frames = match fs::read_to_string(opts.out.join(DIAGNOSTICS_FILE)) {
        Ok(t) => parse_diagnostics(&t)
            .map_err(PipelineError::Io)?
            .iter()
            .map(FrameRecord::from)
            .collect(),
        Err(_) => Vec::new(),
    };
    m.files = inventory(&opts.out)?;
    let text = toml::to_string(&m).map_err(|e| PipelineError::Io(e.to_string()))?;
    let tmp = opts.out.join(format!("{MANIFEST_FILE}.tmp"));
    fs::write(&tmp, text).map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| io_error(&path, e))?;
    Ok(m)
}

/// Checks the scene, creates the output directory, runs `stages` in order
/// and writes the manifest.
pub fn run(cfg: &SceneConfig, stages: &[Stage], opts: &RunOptions) -> Result<RunManifest, PipelineError> {
    let problems = validate_scene(cfg);
    if let Some(first) = problems.first() {
        return Err(classify_problem(first));
    }
    fs::create_dir_all(&opts.out).map_err(|e| {
        PipelineError::Io(format!("cannot create output directory {}: {e}", opts.out.display()))
    })?;
    let mut timings = Vec::new();
    for &s in stages {
        let t = Instant::now();
        log::info!("stage {}", s.name());
        run_stage(cfg, s, opts)?;
        timings.push((s, t.elapsed().as_secs_f64()));
    }
    write_manifest(cfg, opts, &timings)
}

/// Exit class of a [`validate_scene`] message.
pub fn classify_problem(msg: &str) -> PipelineError {
    if msg.contains("cannot access ") {
        PipelineError::Io(msg.to_string())
    } else {
        PipelineError::Config(msg.to_string())
    }
}
