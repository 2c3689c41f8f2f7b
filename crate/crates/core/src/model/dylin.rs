use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::DylinConfig;
use super::graph::{AttrDims, ModelGraph};
use super::stages::RayBatch;
use super::{predict_rays, render_view, RayModel};
use crate::image::Image;
use crate::nn::Scalar;
use crate::ray::{Camera, Ray, SampleMode};
use crate::vec3::Vec3;
use crate::{Error, Result};

/// A ray mapped into canonical space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformedRay {
    pub o: Vec3,
    /// Unit length.
    pub d: Vec3,
}

impl DeformedRay {
    pub fn at(&self, s: f64) -> Vec3 {
        self.o + self.d * s
    }
}

/// Dynamic light field network: deformation, hyperspace code and color regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct DylinModel<T = f32> {
    graph: ModelGraph,
    params: Vec<T>,
}

impl<T: Scalar> DylinModel<T> {
    /// Builds the model and initializes parameters from `config.seed`.
    pub fn new(config: DylinConfig) -> Result<Self> {
        let graph = ModelGraph::new(&config, 0, &AttrDims::default())?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = graph.init_params(&mut rng);
        Ok(Self { graph, params })
    }

    pub fn from_params(config: DylinConfig, params: Vec<T>) -> Result<Self> {
        let graph = ModelGraph::new(&config, 0, &AttrDims::default())?;
        if params.len() != graph.n_params() {
            return Err(Error::LengthMismatch { left: params.len(), right: graph.n_params() });
        }
        Ok(Self { graph, params })
    }

    pub fn config(&self) -> &DylinConfig {
        self.graph.config()
    }

    fn single(&self, r: &Ray, t: f64) -> Result<RayBatch<T>> {
        let c = self.config();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        RayBatch::new(&[*r], &[t], &[], 0, c.k_points, c.near, c.far, SampleMode::EvenlySpaced, &mut rng)
    }

    /// Maps `r` at time `t` to its canonical ray.
    pub fn deform_ray(&self, r: &Ray, t: f64) -> Result<DeformedRay> {
        let (o, d) = self.graph.deform_rays(&self.params, &self.single(r, t)?)?;
        let v = |s: &[T]| Vec3::new(s[0].f64(), s[1].f64(), s[2].f64());
        Ok(DeformedRay { o: v(&o), d: v(&d) })
    }

    /// The per-ray hyperspace code `w`.
    pub fn hyper_code(&self, r: &Ray, t: f64) -> Result<Vec<f64>> {
        let w = self.graph.hyper_codes(&self.params, &self.single(r, t)?)?;
        Ok(w.iter().map(|v| v.f64()).collect())
    }

    /// Color of one ray with evenly spaced samples.
    pub fn forward(&self, r: &Ray, t: f64) -> Result<[f64; 3]> {
        let (rgb, _) = predict_rays(self, &[*r], t, &[])?;
        Ok([rgb[0], rgb[1], rgb[2]])
    }

    pub fn render_frame(&self, cam: &Camera, t: f64) -> Result<Image> {
        Ok(render_view(self, cam, t, &[])?.0)
    }
}

impl<T: Scalar> RayModel<T> for DylinModel<T> {
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
        self.config().variant.name().to_string()
    }
}
