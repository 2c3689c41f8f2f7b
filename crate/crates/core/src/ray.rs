//! Rays, cameras, ray-space bounds, point sampling and Fourier features.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Scalar;
use crate::vec3::Vec3;
use crate::{Error, Result};

/// An oriented ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub o: Vec3,
    pub d: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `d`.
    pub fn new(o: Vec3, d: Vec3) -> Result<Self> {
        let d = d.normalized().ok_or(Error::DegenerateDirection)?;
        Ok(Self { o, d })
    }

    pub fn at(&self, s: f64) -> Vec3 {
        self.o + self.d * s
    }
}

/// A normalized time in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeStamp(f64);

impl TimeStamp {
    pub fn new(t: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&t) {
            Ok(Self(t))
        } else {
            Err(Error::InvalidConfig(format!("time {t} is outside [0, 1]")))
        }
    }

    /// Clamps into `[0, 1]`; the flag reports whether clamping happened.
    pub fn clamped(t: f64) -> (Self, bool) {
        let c = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        (Self(c), c != t)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Componentwise closed intervals for ray origins and directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayBounds {
    pub origin_min: Vec3,
    pub origin_max: Vec3,
    pub direction_min: Vec3,
    pub direction_max: Vec3,
}

impl RayBounds {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.origin_min[i] <= self.origin_max[i])
                || !(self.direction_min[i] <= self.direction_max[i])
            {
                return Err(Error::InvalidConfig(format!("ray bounds inverted on axis {i}")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, r: &Ray) -> bool {
        (0..3).all(|i| {
            (self.origin_min[i]..=self.origin_max[i]).contains(&r.o[i])
                && (self.direction_min[i]..=self.direction_max[i]).contains(&r.d[i])
        })
    }

    fn point(r: &Ray) -> Self {
        Self { origin_min: r.o, origin_max: r.o, direction_min: r.d, direction_max: r.d }
    }

    fn include(&mut self, r: &Ray) {
        self.origin_min = self.origin_min.zip(r.o, f64::min);
        self.origin_max = self.origin_max.zip(r.o, f64::max);
        self.direction_min = self.direction_min.zip(r.d, f64::min);
        self.direction_max = self.direction_max.zip(r.d, f64::max);
    }
}

/// Pinhole camera. Pixel centers sit at `(px + 0.5, py + 0.5)`, y grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("camera needs a non-empty frame".into()));
        }
        if !(self.fov_y > 0.0 && self.fov_y < PI) {
            return Err(Error::InvalidConfig(format!("fov_y {} outside (0, pi)", self.fov_y)));
        }
        let f = self.look_at - self.position;
        if f.normalized().is_none() || f.cross(self.up).normalized().is_none() {
            return Err(Error::InvalidConfig("camera look_at/up are degenerate".into()));
        }
        Ok(())
    }

    /// The same camera with a different resolution.
    pub fn with_size(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (self.look_at - self.position).normalized().unwrap_or(Vec3::new(0.0, 0.0, -1.0));
        let right = forward.cross(self.up).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        let up = right.cross(forward);
        (forward, right, up)
    }

    /// All pixel rays, row-major.
    pub fn rays(&self) -> Vec<Ray> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for py in 0..self.height {
            for px in 0..self.width {
                out.push(pixel_ray_unchecked(self, px, py));
            }
        }
        out
    }
}

/// Ray through the center of pixel `(px, py)`.
pub fn pixel_ray(cam: &Camera, px: usize, py: usize) -> Result<Ray> {
    if px >= cam.width || py >= cam.height {
        return Err(Error::OutOfFrame { px, py, width: cam.width, height: cam.height });
    }
    Ok(pixel_ray_unchecked(cam, px, py))
}

fn pixel_ray_unchecked(cam: &Camera, px: usize, py: usize) -> Ray {
    let (forward, right, up) = cam.basis();
    let tan_half = (cam.fov_y * 0.5).tan();
    let aspect = cam.width as f64 / cam.height as f64;
    let sx = ((px as f64 + 0.5) / cam.width as f64 * 2.0 - 1.0) * tan_half * aspect;
    let sy = (1.0 - (py as f64 + 0.5) / cam.height as f64 * 2.0) * tan_half;
    let d = (forward + right * sx + up * sy).normalized().expect("pinhole direction is non-zero");
    Ray { o: cam.position, d }
}

/// Componentwise min/max over every pixel ray of every camera.
pub fn infer_bounds(cameras: &[Camera]) -> Result<RayBounds> {
    let mut bounds: Option<RayBounds> = None;
    for cam in cameras {
        cam.validate()?;
        for r in cam.rays() {
            match bounds.as_mut() {
                Some(b) => b.include(&r),
                None => bounds = Some(RayBounds::point(&r)),
            }
        }
    }
    bounds.ok_or(Error::EmptyInput("camera list"))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Draws one ray with every component uniform in its interval, plus `t ~ U(0, 1)`.
///
/// The direction is renormalized after sampling; near-zero draws are redrawn.
pub fn sample_training_ray<R: Rng + ?Sized>(bounds: &RayBounds, rng: &mut R) -> Result<(Ray, TimeStamp)> {
    bounds.validate()?;
    const ATTEMPTS: usize = 64;
    for _ in 0..ATTEMPTS {
        let o = Vec3::new(
            uniform(rng, bounds.origin_min.x, bounds.origin_max.x),
            uniform(rng, bounds.origin_min.y, bounds.origin_max.y),
            uniform(rng, bounds.origin_min.z, bounds.origin_max.z),
        );
        let d = Vec3::new(
            uniform(rng, bounds.direction_min.x, bounds.direction_max.x),
            uniform(rng, bounds.direction_min.y, bounds.direction_max.y),
            uniform(rng, bounds.direction_min.z, bounds.direction_max.z),
        );
        let t = rng.gen::<f64>();
        if let Some(d) = d.normalized().filter(|_| d.norm() > 1e-6) {
            return Ok((Ray { o, d }, TimeStamp(t)));
        }
    }
    Err(Error::DegenerateDirection)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    EvenlySpaced,
    StratifiedRandom,
}

/// Depths of `k` samples in `[near, far]`, strictly increasing.
pub fn sample_depths<R: Rng + ?Sized>(
    k: usize,
    near: f64,
    far: f64,
    mode: SampleMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(near < far) {
        return Err(Error::InvalidRange { near, far });
    }
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 samples per ray, got {k}")));
    }
    Ok(match mode {
        SampleMode::EvenlySpaced => {
            let step = (far - near) / (k - 1) as f64;
            (0..k).map(|i| near + i as f64 * step).collect()
        }
        SampleMode::StratifiedRandom => {
            let bin = (far - near) / k as f64;
            (0..k).map(|i| near + (i as f64 + rng.gen::<f64>()) * bin).collect()
        }
    })
}

/// Points sampled along a ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayEncoding {
    pub points: Vec<Vec3>,
    pub depths: Vec<f64>,
    pub near: f64,
    pub far: f64,
}

impl RayEncoding {
    /// Flattened Fourier features of all points.
    pub fn features(&self, n_freq: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len() * encoded_len(3, n_freq));
        for p in &self.points {
            out.extend(positional_encode(&p.to_array(), n_freq));
        }
        out
    }
}

pub fn sample_points<R: Rng + ?Sized>(
    r: &Ray,
    k: usize,
    near: f64,
    far: f64,
    mode: SampleMode,
    rng: &mut R,
) -> Result<RayEncoding> {
    let depths = sample_depths(k, near, far, mode, rng)?;
    let points = depths.iter().map(|&s| r.at(s)).collect();
    Ok(RayEncoding { points, depths, near, far })
}

pub const fn encoded_len(dim: usize, n_freq: usize) -> usize {
    dim * (1 + 2 * n_freq)
}

/// `v` followed by `sin(2^j π v), cos(2^j π v)` for `j = 0..n_freq`.
pub fn positional_encode(v: &[f64], n_freq: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(v.len(), n_freq));
    encode_into(v, n_freq, &mut out);
    out
}

/// Appends the Fourier features of `v` to `out`.
pub fn encode_into<T: Scalar>(v: &[T], n_freq: usize, out: &mut Vec<T>) {
    out.extend_from_slice(v);
    let mut freq = T::of(PI);
    let two = T::of(2.0);
    for _ in 0..n_freq {
        for &x in v {
            out.push((freq * x).sin());
        }
        for &x in v {
            out.push((freq * x).cos());
        }
        freq = freq * two;
    }
}

/// Pulls a gradient on the features of `v` back onto `v`, accumulating into `dv`.
pub fn encode_backward<T: Scalar>(v: &[T], n_freq: usize, dfeat: &[T], dv: &mut [T]) {
    let n = v.len();
    debug_assert_eq!(dfeat.len(), encoded_len(n, n_freq));
    for i in 0..n {
        dv[i] = dv[i] + dfeat[i];
    }
    let mut freq = T::of(PI);
    let two = T::of(2.0);
    let mut at = n;
    for _ in 0..n_freq {
        for i in 0..n {
            dv[i] = dv[i] + dfeat[at + i] * freq * (freq * v[i]).cos();
            dv[i] = dv[i] - dfeat[at + n + i] * freq * (freq * v[i]).sin();
        }
        at += 2 * n;
        freq = freq * two;
    }
}

/// Sampling depth range `(near, far)` for a scene bounding sphere seen from `distance`.
pub fn near_far(distance: f64, radius: f64) -> (f64, f64) {
    ((distance - radius).max(0.05), distance + radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, prop_assume, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn axis_ray() -> Ray {
        Ray::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)).unwrap()
    }

    fn camera(pos: Vec3, w: usize, h: usize) -> Camera {
        Camera {
            position: pos,
            look_at: Vec3::ZERO,
            up: Vec3::new(0.0, 1.0, 0.0),
            fov_y: 0.7,
            width: w,
            height: h,
        }
    }

    #[test]
    fn two_evenly_spaced_points_are_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = sample_points(&axis_ray(), 2, 0.0, 1.0, SampleMode::EvenlySpaced, &mut rng).unwrap();
        assert_eq!(enc.points, vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)]);
    }

    #[test]
    fn sixteen_points_have_equal_gaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = sample_points(&axis_ray(), 16, 2.0, 5.0, SampleMode::EvenlySpaced, &mut rng).unwrap();
        for w in enc.depths.windows(2) {
            assert!((w[1] - w[0] - 3.0 / 15.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stratified_samples_stay_in_their_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (near, far, k) = (1.5, 4.0, 16);
        let bin = (far - near) / k as f64;
        for _ in 0..10_000 {
            let s = sample_depths(k, near, far, SampleMode::StratifiedRandom, &mut rng).unwrap();
            for (i, &d) in s.iter().enumerate() {
                let lo = near + i as f64 * bin;
                assert!(d >= lo && d <= lo + bin, "{d} outside bin {i}");
            }
            assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn invalid_depth_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_points(&axis_ray(), 4, 2.0, 2.0, SampleMode::EvenlySpaced, &mut rng),
            Err(Error::InvalidRange { .. })
        ));
    }

    #[test]
    fn evenly_spaced_is_reproducible() {
        let r = Ray::new(Vec3::new(0.2, -1.0, 3.0), Vec3::new(0.1, 0.3, -1.0)).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        let ea = sample_points(&r, 16, 1.0, 6.0, SampleMode::EvenlySpaced, &mut a).unwrap();
        let eb = sample_points(&r, 16, 1.0, 6.0, SampleMode::EvenlySpaced, &mut b).unwrap();
        assert_eq!(ea, eb);
    }

    #[test]
    fn point_bounds_give_a_fixed_ray() {
        let r = Ray::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.0, 0.6, -0.8)).unwrap();
        let b = RayBounds::point(&r);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (s, _) = sample_training_ray(&b, &mut rng).unwrap();
            assert_eq!(s, r);
        }
    }

    #[test]
    fn origin_statistics_match_uniform_interval() {
        let b = RayBounds {
            origin_min: Vec3::new(-1.0, 0.0, 0.0),
            origin_max: Vec3::new(1.0, 0.0, 0.0),
            direction_min: Vec3::new(-0.2, -0.2, -1.0),
            direction_max: Vec3::new(0.2, 0.2, -0.8),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 100_000;
        let (mut sum, mut lo, mut hi, mut tsum) = (0.0, f64::MAX, f64::MIN, 0.0);
        for _ in 0..n {
            let (r, t) = sample_training_ray(&b, &mut rng).unwrap();
            sum += r.o.x;
            lo = lo.min(r.o.x);
            hi = hi.max(r.o.x);
            tsum += t.get();
            assert!((r.d.norm() - 1.0).abs() < 1e-6);
        }
        assert!((sum / n as f64).abs() < 0.02);
        assert!(lo >= -1.0 && hi <= 1.0);
        assert!((tsum / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn center_pixel_follows_optical_axis() {
        let cam = camera(Vec3::new(0.5, 1.0, 4.0), 65, 33);
        let r = pixel_ray(&cam, 32, 16).unwrap();
        let axis = (cam.look_at - cam.position).normalized().unwrap();
        assert!((r.d - axis).norm() < 1e-6);
    }

    #[test]
    fn corner_rays_mirror_horizontally() {
        let cam = camera(Vec3::new(0.0, 0.0, 4.0), 8, 6);
        let l = pixel_ray(&cam, 0, 0).unwrap();
        let r = pixel_ray(&cam, 7, 0).unwrap();
        assert!((l.d.x + r.d.x).abs() < 1e-12);
        assert!((l.d.y - r.d.y).abs() < 1e-12);
        assert!((l.d.z - r.d.z).abs() < 1e-12);
    }

    #[test]
    fn vertical_angle_spans_field_of_view() {
        let cam = camera(Vec3::new(0.0, 0.0, 4.0), 9, 40);
        let top = pixel_ray(&cam, 4, 0).unwrap();
        let bottom = pixel_ray(&cam, 4, 39).unwrap();
        let angle = top.d.dot(bottom.d).clamp(-1.0, 1.0).acos();
        // exact pinhole geometry: pixel centers sit (H-1)/H of the way to the frame edge
        let exact = 2.0 * ((39.0 / 40.0) * (cam.fov_y / 2.0).tan()).atan();
        assert!((angle - exact).abs() < 1e-9);
        assert!((angle - cam.fov_y * 39.0 / 40.0).abs() < 1e-2);
    }

    #[test]
    fn out_of_frame_pixel() {
        let cam = camera(Vec3::new(0.0, 0.0, 4.0), 4, 4);
        assert!(matches!(pixel_ray(&cam, 4, 0), Err(Error::OutOfFrame { .. })));
    }

    #[test]
    fn bounds_from_cameras() {
        let one = infer_bounds(&[camera(Vec3::new(0.3, 0.1, 4.0), 5, 5)]).unwrap();
        assert_eq!(one.origin_min, one.origin_max);
        let two = infer_bounds(&[
            camera(Vec3::new(-1.0, 0.0, 4.0), 5, 5),
            camera(Vec3::new(1.0, 0.0, 4.0), 5, 5),
        ])
        .unwrap();
        assert_eq!((two.origin_min.x, two.origin_max.x), (-1.0, 1.0));
        assert!(matches!(infer_bounds(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn inferred_bounds_contain_every_pixel_ray() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cams: Vec<Camera> = (0..5)
            .map(|_| {
                let p = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(3.0..5.0));
                camera(p, 12, 9)
            })
            .collect();
        let b = infer_bounds(&cams).unwrap();
        for c in &cams {
            assert!(c.rays().iter().all(|r| b.contains(r)));
        }
        // monotone under adding a camera
        let more = infer_bounds(&[&cams[..], &[camera(Vec3::new(5.0, 2.0, 6.0), 4, 4)]].concat()).unwrap();
        for i in 0..3 {
            assert!(more.origin_min[i] <= b.origin_min[i] && more.origin_max[i] >= b.origin_max[i]);
            assert!(more.direction_min[i] <= b.direction_min[i] && more.direction_max[i] >= b.direction_max[i]);
        }
    }

    #[test]
    fn positional_encoding_examples() {
        assert_eq!(positional_encode(&[0.3, -0.2], 0), vec![0.3, -0.2]);
        assert_eq!(positional_encode(&[0.0], 2), vec![0.0, 0.0, 1.0, 0.0, 1.0]);
        let e = positional_encode(&[0.5], 1);
        assert_eq!(e[0], 0.5);
        assert!((e[1] - 1.0).abs() < 1e-15 && e[2].abs() < 1e-15);
    }

    #[test]
    fn encoding_backward_matches_differences() {
        let v = [0.37f64, -1.2, 0.05];
        let n_freq = 3;
        let weights: Vec<f64> = (0..encoded_len(3, n_freq)).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let f = |v: &[f64]| -> f64 {
            positional_encode(v, n_freq).iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let mut dv = [0.0; 3];
        encode_backward(&v, n_freq, &weights, &mut dv);
        for i in 0..3 {
            let h = 1e-6;
            let mut p = v;
            p[i] += h;
            let mut m = v;
            m[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - dv[i]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn sampled_points_stay_on_the_ray(
            o in prop::array::uniform3(-5.0f64..5.0),
            d in prop::array::uniform3(-1.0f64..1.0),
            near in 0.0f64..2.0,
            span in 0.1f64..5.0,
            seed in any::<u64>(),
        ) {
            prop_assume!(Vec3::from(d).norm() > 1e-3);
            let r = Ray::new(o.into(), d.into()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let enc = sample_points(&r, 16, near, near + span, SampleMode::StratifiedRandom, &mut rng).unwrap();
            for p in &enc.points {
                prop_assert!((*p - r.o).cross(r.d).norm() < 1e-6);
            }
        }

        #[test]
        fn pixel_rays_are_unit(px in 0usize..31, py in 0usize..17, x in -3.0f64..3.0) {
            let cam = camera(Vec3::new(x, 0.5, 4.0), 31, 17);
            let r = pixel_ray(&cam, px, py).unwrap();
            prop_assert!((r.d.norm() - 1.0).abs() < 1e-12);
        }
    }
}
