//! Ray-to-color student models.

mod codylin;
mod config;
mod dylin;
mod graph;
mod stages;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use codylin::{CodylinConfig, CodylinModel, MaskSet};
pub use config::{DylinConfig, Variant};
pub use dylin::{DeformedRay, DylinModel};
pub use graph::{project_masks, AttrDims, ForwardCache, LossReport, ModelGraph, Prediction, Subnet};
pub use stages::RayBatch;

use crate::image::Image;
use crate::nn::Scalar;
use crate::ray::{Camera, Ray, SampleMode};
use crate::scene::AttributeMaskImage;
use crate::{Error, Result};

/// Rays per chunk when rendering. Fixed so results do not depend on the thread count.
const RENDER_CHUNK: usize = 256;

/// Common interface of the trainable ray models.
pub trait RayModel<T: Scalar = f32>: Send + Sync {
    fn graph(&self) -> &ModelGraph;
    fn params(&self) -> &[T];
    fn params_mut(&mut self) -> &mut [T];
    /// Short human-readable kind, e.g. `Full` or `CoDyLiN`.
    fn label(&self) -> String;

    fn n_attr(&self) -> usize {
        self.graph().n_attr()
    }

    fn base_config(&self) -> &DylinConfig {
        self.graph().config()
    }

    fn n_params(&self) -> usize {
        self.graph().n_params()
    }

    /// Packs rays into a batch with this model's sampling depths.
    fn batch<R: Rng + ?Sized>(
        &self,
        rays: &[Ray],
        ts: &[f64],
        alphas: &[f64],
        mode: SampleMode,
        rng: &mut R,
    ) -> Result<RayBatch<T>>
    where
        Self: Sized,
    {
        let c = self.base_config();
        RayBatch::new(rays, ts, alphas, self.n_attr(), c.k_points, c.near, c.far, mode, rng)
    }

    fn predict(&self, b: &RayBatch<T>) -> Result<Prediction<T>> {
        Ok(self.graph().forward(self.params(), b, false)?.0)
    }

    fn loss_and_grad(
        &self,
        b: &RayBatch<T>,
        target_rgb: &[T],
        target_masks: Option<&[T]>,
        mask_weight: f64,
        grads: &mut [T],
    ) -> Result<LossReport> {
        self.graph().loss_and_grad(self.params(), b, target_rgb, target_masks, mask_weight, grads)
    }
}

/// Checks attribute arity and range.
pub fn check_alpha(n_attr: usize, alpha: &[f64]) -> Result<()> {
    if alpha.len() != n_attr {
        return Err(Error::ArityMismatch { model: n_attr, data: alpha.len() });
    }
    for (index, &value) in alpha.iter().enumerate() {
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::AttributeOutOfRange { index, value });
        }
    }
    Ok(())
}

/// Colors and masks for arbitrary rays at one time and attribute setting,
/// with evenly spaced depths.
pub fn predict_rays<T: Scalar, M: RayModel<T> + ?Sized>(
    model: &M,
    rays: &[Ray],
    t: f64,
    alpha: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_alpha(model.n_attr(), alpha)?;
    let c = model.base_config();
    let n_attr = model.n_attr();
    let run = |chunk: &[Ray]| -> Result<Prediction<T>> {
        let ts = vec![t; chunk.len()];
        let alphas: Vec<f64> = chunk.iter().flat_map(|_| alpha.iter().copied()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = RayBatch::new(chunk, &ts, &alphas, n_attr, c.k_points, c.near, c.far, SampleMode::EvenlySpaced, &mut rng)?;
        model.predict(&b)
    };
    let chunks: Vec<&[Ray]> = rays.chunks(RENDER_CHUNK).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(chunks.len()).max(1);
    let mut results: Vec<Option<Result<Prediction<T>>>> = (0..chunks.len()).map(|_| None).collect();
    if threads == 1 {
        for (slot, chunk) in results.iter_mut().zip(&chunks) {
            *slot = Some(run(chunk));
        }
    } else {
        let per = chunks.len().div_ceil(threads);
        std::thread::scope(|s| {
            for (slots, group) in results.chunks_mut(per).zip(chunks.chunks(per)) {
                let run = &run;
                s.spawn(move || {
                    for (slot, chunk) in slots.iter_mut().zip(group) {
                        *slot = Some(run(chunk));
                    }
                });
            }
        });
    }
    let mut rgb = Vec::with_capacity(rays.len() * 3);
    let mut masks = Vec::new();
    for r in results {
        let p = r.expect("every chunk rendered")?;
        rgb.extend(p.rgb.iter().map(|v| v.f64()));
        masks.extend(p.masks.iter().map(|v| v.f64()));
    }
    Ok((rgb, masks))
}

/// Renders a frame and, for attribute models, the mask images.
pub fn render_view<T: Scalar, M: RayModel<T> + ?Sized>(
    model: &M,
    cam: &Camera,
    t: f64,
    alpha: &[f64],
) -> Result<(Image, Option<AttributeMaskImage>)> {
    cam.validate()?;
    let (rgb, masks) = predict_rays(model, &cam.rays(), t, alpha)?;
    let image = Image::new(cam.width, cam.height, rgb)?;
    let n = model.n_attr();
    if n == 0 {
        return Ok((image, None));
    }
    let px = cam.width * cam.height;
    let stride = n + 1;
    let mut data = vec![0.0; px * stride];
    for p in 0..px {
        for slot in 0..stride {
            data[slot * px + p] = masks[p * stride + slot];
        }
    }
    Ok((image, Some(AttributeMaskImage { width: cam.width, height: cam.height, n_attr: n, data })))
}

#[cfg(test)]
mod tests;
