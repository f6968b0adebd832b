//! Analytic RGB-D scenes rendered by ray casting.
//!
//! A scene is a height field `Z = f(X, Y)` in world coordinates (a tilted
//! base plane plus sinusoidal relief and smooth ridges) carrying a painted
//! sinusoidal texture. Rays are intersected with the surface to machine
//! precision, so rendered images are exact samples of a known scene and the
//! true motion between two renders is known.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Frame, FramePair};
use crate::error::{Error, Result};
use crate::geometry::{exp_twist, CameraIntrinsics, MotionTwist, PixelCoord, RigidTransform};
use crate::imaging::{DepthImage, IntensityImage, Surface};
use crate::scalar::{lit, to_f64, Real};

/// `amplitude · sin(kx X + ky Y + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wave {
    pub amplitude: f64,
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
}

impl Wave {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.amplitude * (self.kx * x + self.ky * y + self.phase).sin()
    }

    fn gradient(&self, x: f64, y: f64) -> Vector2<f64> {
        let c = self.amplitude * (self.kx * x + self.ky * y + self.phase).cos();
        Vector2::new(c * self.kx, c * self.ky)
    }
}

/// Smooth step of `height` across the line `nx X + ny Y = offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ridge {
    pub height: f64,
    pub nx: f64,
    pub ny: f64,
    pub offset: f64,
    pub width: f64,
}

impl Ridge {
    fn value(&self, x: f64, y: f64) -> f64 {
        let s = (self.nx * x + self.ny * y - self.offset) / self.width;
        0.5 * self.height * (1.0 + s.tanh())
    }

    fn gradient(&self, x: f64, y: f64) -> Vector2<f64> {
        let s = (self.nx * x + self.ny * y - self.offset) / self.width;
        let sech2 = 1.0 / s.cosh().powi(2);
        let g = 0.5 * self.height * sech2 / self.width;
        Vector2::new(g * self.nx, g * self.ny)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    /// Surface depth at `X = Y = 0`, meters.
    pub base_depth: f64,
    /// Slope of the base plane, `(∂Z/∂X, ∂Z/∂Y)`.
    pub tilt: (f64, f64),
    pub relief: Vec<Wave>,
    pub ridges: Vec<Ridge>,
    /// Texture waves around a mean intensity of 0.5.
    pub texture: Vec<Wave>,
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_depth > 0.0 && self.base_depth.is_finite()) {
            return Err(Error::InvalidInput("scene base depth must be positive".into()));
        }
        let tex: f64 = self.texture.iter().map(|w| w.amplitude.abs()).sum();
        if tex > 0.5 {
            return Err(Error::InvalidInput(format!(
                "texture amplitudes sum to {tex}, exceeding 0.5"
            )));
        }
        if self.ridges.iter().any(|r| !(r.width > 0.0)) {
            return Err(Error::InvalidInput("ridge width must be positive".into()));
        }
        Ok(())
    }

    fn relief_value(&self, x: f64, y: f64) -> f64 {
        self.relief.iter().map(|w| w.value(x, y)).sum::<f64>()
            + self.ridges.iter().map(|r| r.value(x, y)).sum::<f64>()
    }

    fn relief_bound(&self) -> f64 {
        self.relief.iter().map(|w| w.amplitude.abs()).sum::<f64>()
            + self.ridges.iter().map(|r| r.height.abs()).sum::<f64>()
    }

    /// Surface height `Z` at world `(X, Y)`.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.base_depth + self.tilt.0 * x + self.tilt.1 * y + self.relief_value(x, y)
    }

    pub fn height_gradient(&self, x: f64, y: f64) -> Vector2<f64> {
        let mut g = Vector2::new(self.tilt.0, self.tilt.1);
        for w in &self.relief {
            g += w.gradient(x, y);
        }
        for r in &self.ridges {
            g += r.gradient(x, y);
        }
        g
    }

    /// Intensity painted at world `(X, Y)`.
    pub fn texture_at(&self, x: f64, y: f64) -> f64 {
        (0.5 + self.texture.iter().map(|w| w.value(x, y)).sum::<f64>()).clamp(0.0, 1.0)
    }

    /// First intersection `origin + s·dir` with the surface, `s > 0`.
    pub fn cast_ray(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        // g(s) = Z(s) − f(X(s), Y(s)) = α + βs − relief(s)
        let alpha = origin.z - self.base_depth - self.tilt.0 * origin.x - self.tilt.1 * origin.y;
        let beta = dir.z - self.tilt.0 * dir.x - self.tilt.1 * dir.y;
        if beta <= 1e-9 {
            return None;
        }
        let g = |s: f64| {
            let p = origin + dir * s;
            p.z - self.height(p.x, p.y)
        };
        let dg = |s: f64| {
            let p = origin + dir * s;
            let grad = self.height_gradient(p.x, p.y);
            dir.z - grad.x * dir.x - grad.y * dir.y
        };
        let bound = self.relief_bound();
        let s_lo = ((-bound - alpha) / beta).max(1e-9);
        let s_hi = (bound - alpha) / beta;
        if s_hi <= s_lo {
            let s = -alpha / beta;
            return (s > 0.0).then_some(s);
        }
        // March for the first sign change, then refine.
        const STEPS: usize = 48;
        let h = (s_hi - s_lo) / STEPS as f64;
        let (mut a, mut ga) = (s_lo, g(s_lo));
        if ga >= 0.0 {
            return None;
        }
        let mut b = None;
        for i in 1..=STEPS {
            let s = s_lo + h * i as f64;
            let gs = g(s);
            if gs >= 0.0 {
                b = Some(s);
                break;
            }
            a = s;
            ga = gs;
        }
        let mut b = b?;
        let mut s = a - ga * (b - a) / (g(b) - ga);
        for _ in 0..100 {
            let gs = g(s);
            if gs == 0.0 {
                return Some(s);
            }
            if gs < 0.0 {
                a = s;
            } else {
                b = s;
            }
            let d = dg(s);
            let newton = s - gs / d;
            let next = if d > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if (next - s).abs() <= 1e-15 * s.abs().max(1.0) {
                return Some(next);
            }
            s = next;
        }
        Some(s)
    }

    /// Random scene of the given kind.
    pub fn preset(preset: ScenePreset, rng: &mut impl Rng) -> Self {
        let base_depth = 2.0 + rng.random_range(-0.2..0.2);
        let tilt = (rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15));
        let rich_texture = |rng: &mut dyn rand::RngCore| random_waves(rng, 5, 6.0..16.0, 0.4);
        let (texture, structured) = match preset {
            ScenePreset::Rich => (rich_texture(rng), true),
            ScenePreset::PoorTexture => (random_waves(rng, 2, 2.0..4.0, 0.03), true),
            ScenePreset::Textureless => (Vec::new(), true),
            ScenePreset::FlatDepth => (rich_texture(rng), false),
        };
        let (relief, ridges) = if structured {
            let relief = random_waves(rng, 4, 2.5..7.0, 0.12);
            let angle: f64 = rng.random_range(0.0..TAU);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let ridge = Ridge {
                height: sign * rng.random_range(0.05..0.1),
                nx: angle.cos(),
                ny: angle.sin(),
                offset: rng.random_range(-0.4..0.4),
                width: 0.06,
            };
            (relief, vec![ridge])
        } else {
            (Vec::new(), Vec::new())
        };
        Self {
            base_depth,
            tilt,
            relief,
            ridges,
            texture,
        }
    }
}

fn random_waves(
    rng: &mut (impl Rng + ?Sized),
    count: usize,
    k: std::ops::Range<f64>,
    total_amplitude: f64,
) -> Vec<Wave> {
    let weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.5..1.0)).collect();
    let sum: f64 = weights.iter().sum();
    weights
        .into_iter()
        .map(|w| {
            let magnitude = rng.random_range(k.clone());
            let angle: f64 = rng.random_range(0.0..TAU);
            Wave {
                amplitude: total_amplitude * w / sum,
                kx: magnitude * angle.cos(),
                ky: magnitude * angle.sin(),
                phase: rng.random_range(0.0..TAU),
            }
        })
        .collect()
}

/// Texture and structure combinations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenePreset {
    /// Rich texture on rich relief.
    Rich,
    /// Faint low-frequency texture on rich relief.
    PoorTexture,
    /// Constant intensity on rich relief.
    Textureless,
    /// Rich texture on a tilted plane.
    FlatDepth,
}

impl FromStr for ScenePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rich" => Ok(Self::Rich),
            "poor-texture" => Ok(Self::PoorTexture),
            "textureless" => Ok(Self::Textureless),
            "flat-depth" => Ok(Self::FlatDepth),
            other => Err(Error::InvalidInput(format!(
                "unknown scene preset '{other}' (expected rich, poor-texture, textureless or flat-depth)"
            ))),
        }
    }
}

impl fmt::Display for ScenePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rich => "rich",
            Self::PoorTexture => "poor-texture",
            Self::Textureless => "textureless",
            Self::FlatDepth => "flat-depth",
        })
    }
}

/// A pinhole camera placed in the scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticCamera {
    pub world_to_camera: RigidTransform<f64>,
    pub intrinsics: CameraIntrinsics<f64>,
    pub width: usize,
    pub height: usize,
}

impl SyntheticCamera {
    /// Depth and intensity seen through continuous pixel `(u, v)`.
    pub fn observe(&self, scene: &SyntheticScene, u: f64, v: f64) -> Option<(f64, f64)> {
        let k = &self.intrinsics;
        let ray_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        let r_t = self.world_to_camera.rotation.transpose();
        let origin = -(r_t * self.world_to_camera.translation);
        // Camera z of origin + s·dir equals s.
        let dir = r_t * ray_cam;
        let s = scene.cast_ray(&origin, &dir)?;
        let p = origin + dir * s;
        Some((s, scene.texture_at(p.x, p.y)))
    }
}

/// Additive Gaussian sensor noise.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SensorNoise {
    pub intensity_sigma: f64,
    /// Depth standard deviation per squared meter of depth.
    pub depth_sigma_per_m2: f64,
}

/// Renders one frame; pixels whose ray misses the surface get invalid depth.
pub fn render_frame<T: Real>(
    scene: &SyntheticScene,
    camera: &SyntheticCamera,
    timestamp: f64,
) -> Result<Frame<T>> {
    render_frame_with_noise(
        scene,
        camera,
        timestamp,
        &SensorNoise::default(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
}

/// Renders one frame and perturbs it with `noise` drawn from `rng`.
pub fn render_frame_with_noise<T: Real>(
    scene: &SyntheticScene,
    camera: &SyntheticCamera,
    timestamp: f64,
    noise: &SensorNoise,
    rng: &mut impl Rng,
) -> Result<Frame<T>> {
    scene.validate()?;
    let (w, h) = (camera.width, camera.height);
    let mut intensity = vec![T::zero(); w * h];
    let mut depth = vec![T::zero(); w * h];
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut visible = 0usize;
    for row in 0..h {
        for col in 0..w {
            let Some((z, i)) = camera.observe(scene, col as f64, row as f64) else {
                continue;
            };
            visible += 1;
            let (mut z, mut i) = (z, i);
            if noise.intensity_sigma > 0.0 {
                i = (i + noise.intensity_sigma * unit.sample(rng)).clamp(0.0, 1.0);
            }
            if noise.depth_sigma_per_m2 > 0.0 {
                z += noise.depth_sigma_per_m2 * z * z * unit.sample(rng);
            }
            intensity[row * w + col] = lit(i);
            depth[row * w + col] = lit(z);
        }
    }
    if visible == 0 {
        return Err(Error::DegenerateFrame(
            "no visible surface in the rendered view".into(),
        ));
    }
    Frame::new(
        IntensityImage::new(w, h, intensity)?,
        DepthImage::new(w, h, depth)?,
        timestamp,
    )
}

/// Renders the first frame at the identity and the second at `exp(xi_true)`.
pub fn render_synthetic_pair<T: Real>(
    scene: &SyntheticScene,
    xi_true: &MotionTwist<f64>,
    k: &CameraIntrinsics<f64>,
    width: usize,
    height: usize,
) -> Result<(FramePair<T>, MotionTwist<f64>)> {
    let camera = |pose| SyntheticCamera {
        world_to_camera: pose,
        intrinsics: *k,
        width,
        height,
    };
    let first = render_frame(scene, &camera(RigidTransform::identity()), 0.0)?;
    let second = render_frame(scene, &camera(exp_twist(xi_true)), 1.0 / 30.0)?;
    Ok((FramePair::new(first, second, k.cast())?, *xi_true))
}

/// Continuous view of a scene from one camera, usable in place of rendered
/// images when exact derivatives are needed.
#[derive(Clone, Copy, Debug)]
pub struct AnalyticView<'a> {
    pub scene: &'a SyntheticScene,
    pub camera: SyntheticCamera,
}

/// Step of the five-point derivative stencil, in pixels.
const STENCIL_STEP: f64 = 1e-3;

impl<'a> AnalyticView<'a> {
    pub fn intensity(&self) -> AnalyticSurface<'a> {
        AnalyticSurface {
            view: *self,
            depth: false,
        }
    }

    pub fn depth(&self) -> AnalyticSurface<'a> {
        AnalyticSurface {
            view: *self,
            depth: true,
        }
    }
}

/// Intensity or depth channel of an [`AnalyticView`].
#[derive(Clone, Copy, Debug)]
pub struct AnalyticSurface<'a> {
    view: AnalyticView<'a>,
    depth: bool,
}

impl AnalyticSurface<'_> {
    fn value(&self, u: f64, v: f64) -> Option<f64> {
        let (z, i) = self.view.camera.observe(self.view.scene, u, v)?;
        Some(if self.depth { z } else { i })
    }

    fn inside(&self, u: f64, v: f64) -> bool {
        let c = &self.view.camera;
        u >= 0.0 && v >= 0.0 && u <= (c.width - 1) as f64 && v <= (c.height - 1) as f64
    }

    fn derivative(&self, f: impl Fn(f64) -> Option<f64>) -> Option<f64> {
        let h = STENCIL_STEP;
        Some((f(-2.0 * h)? - 8.0 * f(-h)? + 8.0 * f(h)? - f(2.0 * h)?) / (12.0 * h))
    }
}

impl<T: Real> Surface<T> for AnalyticSurface<'_> {
    fn width(&self) -> usize {
        self.view.camera.width
    }

    fn height(&self) -> usize {
        self.view.camera.height
    }

    fn sample(&self, p: &PixelCoord<T>) -> Option<T> {
        let (u, v) = (to_f64(p.u), to_f64(p.v));
        if !self.inside(u, v) {
            return None;
        }
        self.value(u, v).map(lit)
    }

    fn gradient(&self, p: &PixelCoord<T>) -> Option<Vector2<T>> {
        let (u, v) = (to_f64(p.u), to_f64(p.v));
        if !self.inside(u, v) {
            return None;
        }
        let du = self.derivative(|d| self.value(u + d, v))?;
        let dv = self.derivative(|d| self.value(u, v + d))?;
        Some(Vector2::new(lit(du), lit(dv)))
    }
}

/// Intrinsics of the standard 640×480 camera scaled to `width`.
pub fn intrinsics_for_width(width: usize, height: usize) -> CameraIntrinsics<f64> {
    let s = width as f64 / 640.0;
    CameraIntrinsics {
        fx: 525.0 * s,
        fy: 525.0 * s,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
    }
}

/// Parameters of a generated camera sequence.
///
/// Parses from `preset[:key=value,...]`, for example
/// `textureless:frames=40,speed=0.2,depth_noise=0.0015`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceSpec {
    pub preset: ScenePreset,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Camera speed, m/s.
    pub speed: f64,
    /// Camera rotation rate, rad/s.
    pub angular_rate: f64,
    pub noise: SensorNoise,
    pub seed: u64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            preset: ScenePreset::Rich,
            frames: 31,
            width: 160,
            height: 120,
            fps: 30.0,
            speed: 0.3,
            angular_rate: 0.1,
            noise: SensorNoise::default(),
            seed: 0,
        }
    }
}

impl SequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::InvalidInput("a sequence needs at least two frames".into()));
        }
        if self.width < 12 || self.height < 12 {
            return Err(Error::InvalidInput("sequence resolution is too small".into()));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(self.fps > 0.0 && self.fps.is_finite())
            || !finite_nonneg(self.speed)
            || !finite_nonneg(self.angular_rate)
            || !finite_nonneg(self.noise.intensity_sigma)
            || !finite_nonneg(self.noise.depth_sigma_per_m2)
        {
            return Err(Error::InvalidInput(
                "fps must be positive; speed, rates and noise non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl FromStr for SequenceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (preset, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut spec = SequenceSpec {
            preset: preset.trim().parse()?,
            ..Default::default()
        };
        for item in rest.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("expected key=value, got '{item}'")))?;
            let value = value.trim();
            match key.trim() {
                "frames" => spec.frames = field(key, value)?,
                "width" => spec.width = field(key, value)?,
                "height" => spec.height = field(key, value)?,
                "fps" => spec.fps = field(key, value)?,
                "speed" => spec.speed = field(key, value)?,
                "angular_rate" => spec.angular_rate = field(key, value)?,
                "intensity_noise" => spec.noise.intensity_sigma = field(key, value)?,
                "depth_noise" => spec.noise.depth_sigma_per_m2 = field(key, value)?,
                "seed" => spec.seed = field(key, value)?,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown synthetic sequence key '{other}'"
                    )))
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn field<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("invalid value '{value}' for '{key}'")))
}

/// Rendered frames with their ground-truth camera-to-world poses.
#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub scene: SyntheticScene,
    pub intrinsics: CameraIntrinsics<f64>,
    pub frames: Vec<Frame<f64>>,
    pub ground_truth: Vec<(f64, RigidTransform<f64>)>,
}

/// Camera-to-world pose at time `t` along a smooth path.
fn path_pose(t: f64, direction: f64, axis: &Vector3<f64>, spec: &SequenceSpec) -> RigidTransform<f64> {
    let wobble = Vector3::new(
        (TAU * t / 0.9).sin(),
        (TAU * t / 1.1).cos() - 1.0,
        0.5 * (TAU * t / 1.3).sin(),
    ) * (0.05 * spec.speed);
    let position = Vector3::new(direction.cos(), direction.sin(), 0.0) * (spec.speed * t) + wobble;
    let rotation = exp_twist(&MotionTwist::from_rotation(axis * (spec.angular_rate * t))).rotation;
    RigidTransform {
        rotation,
        translation: position,
    }
}

/// Renders a seeded random scene along a smooth camera path.
///
/// The first camera sits at the world origin, so ground-truth poses are
/// expressed in the first camera frame.
pub fn generate_sequence(spec: &SequenceSpec) -> Result<SyntheticSequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scene = SyntheticScene::preset(spec.preset, &mut rng);
    let direction: f64 = rng.random_range(0.0..TAU);
    let axis = {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() > 1e-6 {
            v.normalize()
        } else {
            Vector3::z()
        }
    };
    let intrinsics = intrinsics_for_width(spec.width, spec.height);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut ground_truth = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let t = i as f64 / spec.fps;
        let pose = path_pose(t, direction, &axis, spec);
        let camera = SyntheticCamera {
            world_to_camera: pose.inverse(),
            intrinsics,
            width: spec.width,
            height: spec.height,
        };
        frames.push(render_frame_with_noise(
            &scene,
            &camera,
            t,
            &spec.noise,
            &mut rng,
        )?);
        ground_truth.push((t, pose));
    }
    Ok(SyntheticSequence {
        scene,
        intrinsics,
        frames,
        ground_truth,
    })
}
