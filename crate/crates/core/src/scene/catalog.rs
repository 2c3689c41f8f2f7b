//! Built-in scenes and their capture rigs.

use serde::{Deserialize, Serialize};

use super::oracle::{AttributeBinding, OracleScene, Poly, Primitive, Shape, Trajectory};
use crate::ray::{near_far, Camera};
use crate::vec3::Vec3;
use crate::{Error, Result};

pub const SCENE_NAMES: [&str; 4] = ["orbiter", "split", "attrib-face", "blank"];

fn light() -> Vec3 {
    Vec3::new(0.4, 0.6, 1.0).normalized().expect("non-zero")
}

fn base(name: &str, primitives: Vec<Primitive>) -> OracleScene {
    OracleScene {
        name: name.into(),
        primitives,
        background: [0.08, 0.1, 0.16],
        light_dir: light(),
        bounds_center: Vec3::ZERO,
        bounds_radius: 1.5,
    }
}

fn sphere(name: &str, radius: f64, path: Trajectory, albedo: [f64; 3]) -> Primitive {
    Primitive {
        name: name.into(),
        shape: Shape::Sphere { radius: Poly::constant(radius) },
        path,
        albedo,
        binding: None,
    }
}

/// One sphere on a circular path.
pub fn orbiter() -> OracleScene {
    let path = Trajectory::Orbit {
        center: Vec3::ZERO,
        radius: 0.8,
        turns: 1.0,
        phase: 0.0,
        tilt_y: 0.75,
        tilt_z: 0.35,
    };
    base("orbiter", vec![sphere("ball", 0.42, path, [0.9, 0.55, 0.2])])
}

/// One sphere that separates into two as `t` grows: a topology change at `t ≈ 0.6`.
pub fn split() -> OracleScene {
    let half = |sign: f64| Trajectory::Poly {
        x: Poly(vec![0.0, 0.75 * sign]),
        y: Poly(vec![0.0, 0.0, 0.15]),
        z: Poly::constant(0.0),
    };
    base(
        "split",
        vec![
            sphere("left", 0.45, half(-1.0), [0.95, 0.45, 0.25]),
            sphere("right", 0.45, half(1.0), [0.25, 0.7, 0.9]),
        ],
    )
}

/// A face-like arrangement: a head with an eye (attribute 1) and a mouth (attribute 2).
pub fn attrib_face() -> OracleScene {
    let drift = |p: Vec3| Trajectory::Poly {
        x: Poly(vec![p.x - 0.12, 0.24]),
        y: Poly::constant(p.y),
        z: Poly::constant(p.z),
    };
    let head = sphere("head", 0.9, drift(Vec3::ZERO), [0.85, 0.7, 0.55]);
    let mut eye = sphere("eye", 0.2, drift(Vec3::new(-0.32, 0.28, 0.8)), [0.15, 0.35, 0.95]);
    eye.binding = Some(AttributeBinding { attribute: 0, displacement: Vec3::ZERO, scale: 0.75 });
    let mouth = Primitive {
        name: "mouth".into(),
        shape: Shape::Box {
            half_extents: [Poly::constant(0.3), Poly::constant(0.07), Poly::constant(0.15)],
        },
        path: drift(Vec3::new(0.05, -0.38, 0.8)),
        albedo: [0.85, 0.15, 0.2],
        binding: Some(AttributeBinding {
            attribute: 1,
            displacement: Vec3::new(0.0, -0.05, 0.0),
            scale: 0.7,
        }),
    };
    base("attrib-face", vec![head, eye, mouth])
}

/// Background only.
pub fn blank() -> OracleScene {
    base("blank", Vec::new())
}

pub fn scene_by_name(name: &str) -> Result<OracleScene> {
    match name {
        "orbiter" => Ok(orbiter()),
        "split" => Ok(split()),
        "attrib-face" => Ok(attrib_face()),
        "blank" => Ok(blank()),
        other => Err(Error::UnknownScene(other.into())),
    }
}

/// One captured frame: a camera and the time it observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub camera: Camera,
    pub t: f64,
}

/// A monocular sweep: training frames plus held-out frames between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rig {
    pub train: Vec<Frame>,
    pub held_out: Vec<Frame>,
    pub distance: f64,
}

pub const RIG_DISTANCE: f64 = 4.0;
pub const RIG_FOV_Y: f64 = 0.72;
const SWEEP_DEG: f64 = 35.0;
const ELEVATION_DEG: f64 = 8.0;

/// Camera on the rig sphere at azimuth `deg` (0 looks along −z).
pub fn orbit_camera(scene: &OracleScene, deg: f64, width: usize, height: usize) -> Camera {
    let az = deg.to_radians();
    let el = ELEVATION_DEG.to_radians();
    let offset = Vec3::new(az.sin() * el.cos(), el.sin(), az.cos() * el.cos()) * RIG_DISTANCE;
    Camera {
        position: scene.bounds_center + offset,
        look_at: scene.bounds_center,
        up: Vec3::new(0.0, 1.0, 0.0),
        fov_y: RIG_FOV_Y,
        width,
        height,
    }
}

impl Rig {
    /// `n_train` frames sweeping azimuth while time runs 0 → 1; held-out frames sit
    /// halfway between consecutive training frames in both angle and time.
    pub fn sweep(scene: &OracleScene, n_train: usize, n_held_out: usize, width: usize, height: usize) -> Self {
        let n = n_train.max(2);
        let frame = |u: f64| Frame {
            camera: orbit_camera(scene, -SWEEP_DEG + 2.0 * SWEEP_DEG * u, width, height),
            t: u,
        };
        let train = (0..n).map(|i| frame(i as f64 / (n - 1) as f64)).collect();
        let held_out = (0..n_held_out)
            .map(|j| {
                // spread over the gaps, away from training frames
                let gap = ((j as f64 + 0.5) * (n - 1) as f64 / n_held_out as f64).floor();
                frame((gap + 0.5) / (n - 1) as f64)
            })
            .collect();
        Rig { train, held_out, distance: RIG_DISTANCE }
    }

    pub fn train_cameras(&self) -> Vec<Camera> {
        self.train.iter().map(|f| f.camera).collect()
    }

    /// Default sampling depth range for the scene seen from this rig.
    pub fn near_far(&self, scene: &OracleScene) -> (f64, f64) {
        near_far(self.distance, scene.bounds_radius)
    }
}
