//! Knowledge-distillation datasets and their file format.
//!
//! File layout: the 7-byte magic `DLKD\0v1`, a little-endian `u32` length,
//! that many bytes of JSON metadata, then fixed-width little-endian `f32`
//! records of `6 + 1 + n + 3 (+ n + 1 when n > 0)` values.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_f32s, split_json_block};
use crate::ray::{sample_training_ray, Camera, Ray, RayBounds};
use crate::scene::{IntegrationTeacher, OracleScene, Rgb};
use crate::vec3::Vec3;
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 7] = b"DLKD\0v1";

/// One distillation target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillSample<'a> {
    pub ray: Ray,
    pub t: f64,
    pub alpha: &'a [f64],
    pub rgb: Rgb,
    /// `n_attr + 1` values, empty without attributes.
    pub masks: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// `oracle`, `integration` or `pixels`.
    pub teacher: String,
    pub scene: String,
    pub seed: u64,
    pub bounds: Option<RayBounds>,
    pub n_attr: usize,
    pub len: usize,
}

/// Structure-of-arrays storage of `len` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillDataset {
    pub meta: DatasetMeta,
    pub rays: Vec<Ray>,
    pub ts: Vec<f64>,
    /// `len × n_attr`.
    pub alphas: Vec<f64>,
    pub rgb: Vec<Rgb>,
    /// `len × (n_attr + 1)` when `n_attr > 0`.
    pub masks: Vec<f64>,
}

/// Where distillation targets come from.
#[derive(Debug, Clone, Copy)]
pub enum Teacher<'a> {
    /// Exact analytic colors.
    Oracle(&'a OracleScene),
    /// A trained integration teacher; the scene still supplies mask targets.
    Integration(&'a IntegrationTeacher<f32>, &'a OracleScene),
}

impl Teacher<'_> {
    pub fn scene(&self) -> &OracleScene {
        match self {
            Teacher::Oracle(s) | Teacher::Integration(_, s) => s,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Teacher::Oracle(_) => "oracle",
            Teacher::Integration(..) => "integration",
        }
    }

    fn colors(&self, rays: &[Ray], ts: &[f64], alphas: &[f64], n_attr: usize) -> Result<Vec<Rgb>> {
        match self {
            Teacher::Oracle(scene) => Ok(rays
                .iter()
                .zip(ts)
                .enumerate()
                .map(|(i, (r, &t))| scene.color(r, t, &alphas[i * n_attr..(i + 1) * n_attr]))
                .collect()),
            Teacher::Integration(teacher, _) => render_parallel(teacher, rays, ts),
        }
    }
}

/// Integrated colors of many rays, split over the available threads.
pub fn render_parallel(teacher: &IntegrationTeacher<f32>, rays: &[Ray], ts: &[f64]) -> Result<Vec<Rgb>> {
    const CHUNK: usize = 1024;
    let parts = rays.chunks(CHUNK).zip(ts.chunks(CHUNK)).collect::<Vec<_>>();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let per = parts.len().div_ceil(threads).max(1);
    let results: Vec<Result<Vec<Rgb>>> = std::thread::scope(|s| {
        let handles: Vec<_> = parts
            .chunks(per)
            .map(|group| {
                s.spawn(move || {
                    let mut out = Vec::new();
                    for (r, t) in group {
                        out.extend(teacher.render_rays(r, t)?);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("teacher worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(rays.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

impl DistillDataset {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn n_attr(&self) -> usize {
        self.meta.n_attr
    }

    pub fn sample(&self, i: usize) -> DistillSample<'_> {
        let n = self.meta.n_attr;
        let masks = if n > 0 { &self.masks[i * (n + 1)..(i + 1) * (n + 1)] } else { &[][..] };
        DistillSample {
            ray: self.rays[i],
            t: self.ts[i],
            alpha: &self.alphas[i * n..(i + 1) * n],
            rgb: self.rgb[i],
            masks,
        }
    }

    fn assemble(meta: DatasetMeta, rays: Vec<Ray>, ts: Vec<f64>, alphas: Vec<f64>, teacher: &Teacher) -> Result<Self> {
        let n = meta.n_attr;
        let scene = teacher.scene();
        if n > 0 && n != scene.n_attr() {
            return Err(Error::ArityMismatch { model: scene.n_attr(), data: n });
        }
        let rgb = teacher.colors(&rays, &ts, &alphas, n)?;
        let mut masks = Vec::new();
        if n > 0 {
            for (i, (r, &t)) in rays.iter().zip(&ts).enumerate() {
                masks.extend(scene.mask_values(r, t, &alphas[i * n..(i + 1) * n]));
            }
        }
        Ok(Self { meta, rays, ts, alphas, rgb, masks })
    }

    /// Serializes to the binary dataset format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let json = serde_json::to_vec(&self.meta).expect("metadata serializes");
        let mut out = Vec::with_capacity(11 + json.len() + self.len() * 4 * self.record_width());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let mut push = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
        for i in 0..self.len() {
            let s = self.sample(i);
            s.ray.o.to_array().into_iter().chain(s.ray.d.to_array()).for_each(&mut push);
            push(s.t);
            s.alpha.iter().for_each(|&a| push(a));
            s.rgb.iter().for_each(|&c| push(c));
            s.masks.iter().for_each(|&m| push(m));
        }
        out
    }

    fn record_width(&self) -> usize {
        record_width(self.meta.n_attr)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < DATASET_MAGIC.len() || &bytes[..DATASET_MAGIC.len()] != DATASET_MAGIC {
            return Err(Error::malformed("unrecognized dataset magic"));
        }
        let (json, blob) = split_json_block(&bytes[DATASET_MAGIC.len()..])?;
        let meta: DatasetMeta =
            serde_json::from_slice(json).map_err(|e| Error::malformed(format!("bad metadata: {e}")))?;
        let n = meta.n_attr;
        let width = record_width(n);
        if blob.len() != 4 * width * meta.len {
            return Err(Error::malformed(format!(
                "record block holds {} bytes, metadata declares {} records of {width} values",
                blob.len(),
                meta.len
            )));
        }
        let values: Vec<f64> = read_f32s(blob).into_iter().map(f64::from).collect();
        let mut ds = Self {
            rays: Vec::with_capacity(meta.len),
            ts: Vec::with_capacity(meta.len),
            alphas: Vec::with_capacity(meta.len * n),
            rgb: Vec::with_capacity(meta.len),
            masks: Vec::new(),
            meta,
        };
        for rec in values.chunks_exact(width) {
            ds.rays.push(Ray { o: Vec3::new(rec[0], rec[1], rec[2]), d: Vec3::new(rec[3], rec[4], rec[5]) });
            ds.ts.push(rec[6]);
            ds.alphas.extend_from_slice(&rec[7..7 + n]);
            ds.rgb.push([rec[7 + n], rec[8 + n], rec[9 + n]]);
            if n > 0 {
                ds.masks.extend_from_slice(&rec[10 + n..]);
            }
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?).map_err(|e| e.with_path(path))
    }
}

fn record_width(n_attr: usize) -> usize {
    let masks = if n_attr > 0 { n_attr + 1 } else { 0 };
    6 + 1 + n_attr + 3 + masks
}

/// Draws `s` uniform rays, times and attributes and labels them with the teacher.
pub fn generate_kd_dataset(
    teacher: &Teacher,
    bounds: &RayBounds,
    s: usize,
    seed: u64,
    n_attr: usize,
) -> Result<DistillDataset> {
    if s == 0 {
        return Err(Error::EmptyInput("dataset size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rays = Vec::with_capacity(s);
    let mut ts = Vec::with_capacity(s);
    let mut alphas = Vec::with_capacity(s * n_attr);
    for _ in 0..s {
        let (r, t) = sample_training_ray(bounds, &mut rng)?;
        rays.push(r);
        ts.push(t.get());
        for _ in 0..n_attr {
            alphas.push(rng.gen_range(-1.0..=1.0));
        }
    }
    let meta = DatasetMeta {
        teacher: teacher.kind().into(),
        scene: teacher.scene().name.clone(),
        seed,
        bounds: Some(*bounds),
        n_attr,
        len: s,
    };
    DistillDataset::assemble(meta, rays, ts, alphas, teacher)
}

/// Every pixel ray of the given frames, labeled with exact oracle colors.
///
/// `alphas` holds one attribute vector per frame.
pub fn pixel_dataset(
    scene: &OracleScene,
    frames: &[(Camera, f64)],
    alphas: &[Vec<f64>],
    n_attr: usize,
) -> Result<DistillDataset> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("frames"));
    }
    let mut rays = Vec::new();
    let mut ts = Vec::new();
    let mut al = Vec::new();
    for (i, (cam, t)) in frames.iter().enumerate() {
        cam.validate()?;
        let a = alphas.get(i).cloned().unwrap_or_else(|| vec![0.0; n_attr]);
        if a.len() != n_attr {
            return Err(Error::ArityMismatch { model: n_attr, data: a.len() });
        }
        for r in cam.rays() {
            rays.push(r);
            ts.push(*t);
            al.extend_from_slice(&a);
        }
    }
    let meta = DatasetMeta {
        teacher: "pixels".into(),
        scene: scene.name.clone(),
        seed: 0,
        bounds: None,
        n_attr,
        len: rays.len(),
    };
    DistillDataset::assemble(meta, rays, ts, al, &Teacher::Oracle(scene))
}
