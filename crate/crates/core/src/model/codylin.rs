use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DylinConfig, Variant};
use super::graph::{project_masks, AttrDims, ModelGraph};
use super::stages::RayBatch;
use super::{check_alpha, predict_rays, render_view, RayModel};
use crate::image::Image;
use crate::nn::Scalar;
use crate::ray::{Camera, Ray, SampleMode};
use crate::scene::AttributeMaskImage;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodylinConfig {
    pub base: DylinConfig,
    pub n_attr: usize,
    pub attr: AttrDims,
}

impl Default for CodylinConfig {
    fn default() -> Self {
        Self { base: DylinConfig::desk(), n_attr: 2, attr: AttrDims::default() }
    }
}

impl CodylinConfig {
    pub fn full_size(n_attr: usize) -> Self {
        Self {
            base: DylinConfig::full_size(),
            n_attr,
            attr: AttrDims { attr_layers: 5, attr_width: 128, ..AttrDims::default() },
        }
    }

    pub fn tiny(n_attr: usize) -> Self {
        Self {
            base: DylinConfig::tiny(),
            n_attr,
            attr: AttrDims { attr_layers: 2, attr_width: 5, mask_layers: 2, mask_width: 4 },
        }
    }
}

/// Attention masks of one ray, `m_0` (unaffected remainder) first.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet(pub Vec<f64>);

impl MaskSet {
    /// Projects raw activations in `[0, 1]` onto the simplex.
    pub fn from_raw(raw: &[f64]) -> Self {
        MaskSet(project_masks(raw).0)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Controllable dynamic light field network.
#[derive(Debug, Clone, PartialEq)]
pub struct CodylinModel<T = f32> {
    config: CodylinConfig,
    graph: ModelGraph,
    params: Vec<T>,
}

impl<T: Scalar> CodylinModel<T> {
    pub fn new(config: CodylinConfig) -> Result<Self> {
        let graph = Self::graph_for(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.base.seed);
        let params = graph.init_params(&mut rng);
        Ok(Self { config, graph, params })
    }

    pub fn from_params(config: CodylinConfig, params: Vec<T>) -> Result<Self> {
        let graph = Self::graph_for(&config)?;
        if params.len() != graph.n_params() {
            return Err(Error::LengthMismatch { left: params.len(), right: graph.n_params() });
        }
        Ok(Self { config, graph, params })
    }

    fn graph_for(config: &CodylinConfig) -> Result<ModelGraph> {
        if config.base.variant != Variant::Full {
            return Err(Error::VariantMismatch { expected: "Full", actual: config.base.variant.name() });
        }
        ModelGraph::new(&config.base, config.n_attr, &config.attr)
    }

    pub fn config(&self) -> &CodylinConfig {
        &self.config
    }

    fn single(&self, r: &Ray, t: f64, alpha: &[f64]) -> Result<RayBatch<T>> {
        check_alpha(self.config.n_attr, alpha)?;
        let c = &self.config.base;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        RayBatch::new(&[*r], &[t], alpha, alpha.len(), c.k_points, c.near, c.far, SampleMode::EvenlySpaced, &mut rng)
    }

    /// Per-attribute codes `w_1..w_n`.
    pub fn attr_codes(&self, r: &Ray, t: f64, alpha: &[f64]) -> Result<Vec<Vec<f64>>> {
        let codes = self.graph.attr_codes(&self.params, &self.single(r, t, alpha)?)?;
        Ok(codes.into_iter().map(|c| c.iter().map(|v| v.f64()).collect()).collect())
    }

    /// The shared hyperspace code `w`.
    pub fn hyper_code(&self, r: &Ray, t: f64) -> Result<Vec<f64>> {
        let alpha = vec![0.0; self.config.n_attr];
        let w = self.graph.hyper_codes(&self.params, &self.single(r, t, &alpha)?)?;
        Ok(w.iter().map(|v| v.f64()).collect())
    }

    pub fn masks(&self, r: &Ray, t: f64, alpha: &[f64]) -> Result<MaskSet> {
        let (_, m) = predict_rays(self, &[*r], t, alpha)?;
        Ok(MaskSet(m))
    }

    pub fn forward(&self, r: &Ray, t: f64, alpha: &[f64]) -> Result<[f64; 3]> {
        let (rgb, _) = predict_rays(self, &[*r], t, alpha)?;
        Ok([rgb[0], rgb[1], rgb[2]])
    }

    pub fn render_with_masks(&self, cam: &Camera, t: f64, alpha: &[f64]) -> Result<(Image, AttributeMaskImage)> {
        let (img, masks) = render_view(self, cam, t, alpha)?;
        let masks = masks.unwrap_or_else(|| AttributeMaskImage {
            width: cam.width,
            height: cam.height,
            n_attr: 0,
            data: vec![1.0; cam.width * cam.height],
        });
        Ok((img, masks))
    }
}

impl<T: Scalar> RayModel<T> for CodylinModel<T> {
    fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    fn params(&self) -> &[T] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    fn label(&self) -> String {
        "CoDyLiN".to_string()
    }
}
