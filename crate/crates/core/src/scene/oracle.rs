//! Analytic time-varying scenes with exact per-ray colors and attribute masks.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::ray::{Camera, Ray};
use crate::vec3::Vec3;
use crate::{Error, Result};

pub type Rgb = [f64; 3];

/// Polynomial in `t`, coefficients in increasing degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    /// Per-axis polynomials.
    Poly { x: Poly, y: Poly, z: Poly },
    /// `center + radius·(cos θ, sin θ·tilt_y, sin θ·tilt_z)` with `θ = 2π(turns·t + phase)`.
    Orbit { center: Vec3, radius: f64, turns: f64, phase: f64, tilt_y: f64, tilt_z: f64 },
}

impl Trajectory {
    pub fn fixed(p: Vec3) -> Self {
        Trajectory::Poly { x: Poly::constant(p.x), y: Poly::constant(p.y), z: Poly::constant(p.z) }
    }

    pub fn position(&self, t: f64) -> Vec3 {
        match self {
            Trajectory::Poly { x, y, z } => Vec3::new(x.eval(t), y.eval(t), z.eval(t)),
            Trajectory::Orbit { center, radius, turns, phase, tilt_y, tilt_z } => {
                let a = TAU * (turns * t + phase);
                *center + Vec3::new(a.cos(), a.sin() * tilt_y, a.sin() * tilt_z) * *radius
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: Poly },
    /// Axis-aligned box.
    Box { half_extents: [Poly; 3] },
}

/// How a primitive responds to its attribute value `α ∈ [-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeBinding {
    /// Zero-based index into the attribute vector; mask slot is `attribute + 1`.
    pub attribute: usize,
    /// Center offset per unit α.
    #[serde(default)]
    pub displacement: Vec3,
    /// Size multiplier `1 + scale·α`.
    #[serde(default)]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(default)]
    pub name: String,
    pub shape: Shape,
    pub path: Trajectory,
    pub albedo: Rgb,
    #[serde(default)]
    pub binding: Option<AttributeBinding>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub normal: Vec3,
    pub primitive: usize,
}

const MIN_SIZE_FACTOR: f64 = 0.02;
const HIT_EPS: f64 = 1e-9;

impl Primitive {
    fn alpha(&self, alpha: &[f64]) -> f64 {
        self.binding
            .as_ref()
            .map(|b| alpha.get(b.attribute).copied().unwrap_or(0.0))
            .unwrap_or(0.0)
    }

    /// Center at time `t` under attributes `alpha`.
    pub fn center(&self, t: f64, alpha: &[f64]) -> Vec3 {
        let mut c = self.path.position(t);
        if let Some(b) = &self.binding {
            c += b.displacement * self.alpha(alpha);
        }
        c
    }

    fn size_factor(&self, alpha: &[f64]) -> f64 {
        match &self.binding {
            Some(b) if b.scale != 0.0 => (1.0 + b.scale * self.alpha(alpha)).max(MIN_SIZE_FACTOR),
            _ => 1.0,
        }
    }

    /// Nearest intersection distance and outward normal along `r`.
    pub fn intersect(&self, r: &Ray, t: f64, alpha: &[f64]) -> Option<(f64, Vec3)> {
        let c = self.center(t, alpha);
        let k = self.size_factor(alpha);
        match &self.shape {
            Shape::Sphere { radius } => {
                let rad = radius.eval(t).max(0.0) * k;
                let oc = r.o - c;
                let b = r.d.dot(oc);
                let cc = oc.dot(oc) - rad * rad;
                let disc = b * b - cc;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                let s = if -b - root > HIT_EPS { -b - root } else { -b + root };
                if s <= HIT_EPS {
                    return None;
                }
                let n = ((r.at(s) - c) * (1.0 / rad.max(1e-12))).normalized()?;
                Some((s, n))
            }
            Shape::Box { half_extents } => {
                let h = Vec3::new(
                    half_extents[0].eval(t).max(0.0) * k,
                    half_extents[1].eval(t).max(0.0) * k,
                    half_extents[2].eval(t).max(0.0) * k,
                );
                let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
                let (mut axis_near, mut axis_far) = (0, 0);
                for i in 0..3 {
                    let (lo, hi) = (c[i] - h[i], c[i] + h[i]);
                    if r.d[i].abs() < 1e-15 {
                        if r.o[i] < lo || r.o[i] > hi {
                            return None;
                        }
                        continue;
                    }
                    let (mut a, mut b) = ((lo - r.o[i]) / r.d[i], (hi - r.o[i]) / r.d[i]);
                    if a > b {
                        std::mem::swap(&mut a, &mut b);
                    }
                    if a > t_near {
                        t_near = a;
                        axis_near = i;
                    }
                    if b < t_far {
                        t_far = b;
                        axis_far = i;
                    }
                }
                if t_near > t_far {
                    return None;
                }
                let (s, axis) = if t_near > HIT_EPS {
                    (t_near, axis_near)
                } else if t_far > HIT_EPS {
                    (t_far, axis_far)
                } else {
                    return None;
                };
                let p = r.at(s);
                let mut n = [0.0; 3];
                n[axis] = if p[axis] >= c[axis] { 1.0 } else { -1.0 };
                Some((s, n.into()))
            }
        }
    }
}

/// Analytic dynamic scene standing in for captured video and teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleScene {
    pub name: String,
    pub primitives: Vec<Primitive>,
    pub background: Rgb,
    /// Unit vector pointing toward the light.
    pub light_dir: Vec3,
    /// Center and radius of a sphere enclosing the scene for all `t`, `α`.
    pub bounds_center: Vec3,
    pub bounds_radius: f64,
}

impl OracleScene {
    pub fn validate(&self) -> Result<()> {
        let unit = |c: &Rgb| c.iter().all(|v| (0.0..=1.0).contains(v));
        if !unit(&self.background) || !self.primitives.iter().all(|p| unit(&p.albedo)) {
            return Err(Error::InvalidConfig("colors must lie in [0, 1]".into()));
        }
        if (self.light_dir.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig("light_dir must be unit length".into()));
        }
        if !(self.bounds_radius > 0.0) {
            return Err(Error::InvalidConfig("bounds_radius must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: OracleScene = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    /// Number of attributes referenced by bindings.
    pub fn n_attr(&self) -> usize {
        self.primitives
            .iter()
            .filter_map(|p| p.binding.as_ref().map(|b| b.attribute + 1))
            .max()
            .unwrap_or(0)
    }

    /// Nearest hit; ties resolve to the lowest primitive index.
    pub fn intersect(&self, r: &Ray, t: f64, alpha: &[f64]) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some((distance, normal)) = p.intersect(r, t, alpha) {
                if best.is_none_or(|b| distance < b.distance) {
                    best = Some(Hit { distance, normal, primitive: i });
                }
            }
        }
        best
    }

    /// Exact color of ray `r` at time `t`: Lambertian with 0.1 ambient, or background.
    ///
    /// Missing attribute entries are treated as 0.
    pub fn color(&self, r: &Ray, t: f64, alpha: &[f64]) -> Rgb {
        match self.intersect(r, t, alpha) {
            None => self.background,
            Some(hit) => {
                let lambert = hit.normal.dot(self.light_dir).max(0.0);
                let shade = 0.9 * lambert + 0.1;
                let a = self.primitives[hit.primitive].albedo;
                [(a[0] * shade).min(1.0), (a[1] * shade).min(1.0), (a[2] * shade).min(1.0)]
            }
        }
    }

    /// Mask slot of the nearest hit: `attribute + 1` for bound primitives, else 0.
    pub fn slot(&self, r: &Ray, t: f64, alpha: &[f64]) -> usize {
        self.intersect(r, t, alpha)
            .and_then(|h| self.primitives[h.primitive].binding.as_ref())
            .map_or(0, |b| b.attribute + 1)
    }

    /// One-hot mask values for slots `0..=n_attr`.
    pub fn mask_values(&self, r: &Ray, t: f64, alpha: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.n_attr() + 1];
        m[self.slot(r, t, alpha)] = 1.0;
        m
    }
}

/// Per-attribute 2D masks plus the complement slot 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMaskImage {
    pub width: usize,
    pub height: usize,
    pub n_attr: usize,
    /// Slot-major: `data[slot·W·H + y·W + x]`.
    pub data: Vec<f64>,
}

impl AttributeMaskImage {
    pub fn slot(&self, i: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[i * n..(i + 1) * n]
    }

    /// Largest deviation of a per-pixel slot sum from 1.
    pub fn simplex_error(&self) -> f64 {
        let n = self.width * self.height;
        (0..n)
            .map(|p| ((0..=self.n_attr).map(|i| self.data[i * n + p]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Hard masks over every pixel of `cam`.
pub fn oracle_mask(scene: &OracleScene, cam: &Camera, t: f64, alpha: &[f64]) -> AttributeMaskImage {
    let n_attr = scene.n_attr();
    let n = cam.width * cam.height;
    let mut data = vec![0.0; (n_attr + 1) * n];
    for (p, r) in cam.rays().iter().enumerate() {
        data[scene.slot(r, t, alpha) * n + p] = 1.0;
    }
    AttributeMaskImage { width: cam.width, height: cam.height, n_attr, data }
}

/// Renders the exact color image of `cam`, row-major RGB.
pub fn oracle_frame(scene: &OracleScene, cam: &Camera, t: f64, alpha: &[f64]) -> Vec<f64> {
    cam.rays().iter().flat_map(|r| scene.color(r, t, alpha)).collect()
}
