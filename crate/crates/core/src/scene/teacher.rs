//! Integration-based teacher: a pointwise radiance field rendered by
//! emission–absorption quadrature along each ray.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::{OracleScene, Rgb};
use crate::nn::{adam_step, sigmoid, Activation, AdamState, ResidualMlp, Scalar};
use crate::ray::{encode_into, encoded_len, sample_training_ray, Ray, RayBounds};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    pub width: usize,
    pub depth: usize,
    pub skip_every: usize,
    pub point_freqs: usize,
    pub time_freqs: usize,
    pub n_quad: usize,
    pub near: f64,
    pub far: f64,
    pub iters: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            width: 128,
            depth: 6,
            skip_every: 2,
            point_freqs: 6,
            time_freqs: 4,
            n_quad: 64,
            near: 2.5,
            far: 5.5,
            iters: 2000,
            batch: 64,
            lr: 5e-4,
            seed: 0,
        }
    }
}

impl TeacherConfig {
    pub fn input_dim(&self) -> usize {
        encoded_len(3, self.point_freqs) + encoded_len(1, self.time_freqs)
    }

    pub fn network(&self) -> Result<ResidualMlp> {
        ResidualMlp::stack(self.input_dim(), self.width, self.depth, 4, Activation::Identity, self.skip_every)
    }
}

/// Teacher field plus its training record.
#[derive(Debug, Clone)]
pub struct IntegrationTeacher<T = f32> {
    pub config: TeacherConfig,
    pub field_net: ResidualMlp,
    pub params: Vec<T>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub loss_curve: Vec<f64>,
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// `C = Σ T_k (1 − e^{−σ_k δ_k}) c_k` with `T_k = exp(−Σ_{j<k} σ_j δ_j)`.
pub fn composite(sigmas: &[f64], deltas: &[f64], colors: &[Rgb]) -> Rgb {
    let mut out = [0.0; 3];
    let mut optical = 0.0f64;
    for ((&s, &d), c) in sigmas.iter().zip(deltas).zip(colors) {
        let trans = (-optical).exp();
        let weight = trans * (1.0 - (-s * d).exp());
        for i in 0..3 {
            out[i] += weight * c[i];
        }
        optical += s * d;
    }
    out
}

struct QuadBatch<T> {
    /// Per point: rgb after sigmoid, σ after softplus.
    rgb: Vec<T>,
    sigma: Vec<T>,
    raw: Vec<T>,
    colors: Vec<T>,
}

impl<T: Scalar> IntegrationTeacher<T> {
    pub fn new(config: TeacherConfig) -> Result<Self> {
        if config.n_quad == 0 || !(config.near < config.far) {
            return Err(Error::InvalidRange { near: config.near, far: config.far });
        }
        let field_net = config.network()?;
        let mut params = vec![T::zero(); field_net.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        field_net.init_params(&mut rng, &mut params);
        Ok(Self { config, field_net, params, initial_loss: f64::NAN, final_loss: f64::NAN, loss_curve: Vec::new() })
    }

    fn spacing(&self) -> f64 {
        (self.config.far - self.config.near) / self.config.n_quad as f64
    }

    fn inputs(&self, rays: &[Ray], ts: &[f64]) -> Vec<T> {
        let cfg = &self.config;
        let n = cfg.n_quad;
        let delta = self.spacing();
        let mut x = Vec::with_capacity(rays.len() * n * cfg.input_dim());
        let mut tfeat = Vec::new();
        for (r, &t) in rays.iter().zip(ts) {
            tfeat.clear();
            encode_into(&[T::of(t)], cfg.time_freqs, &mut tfeat);
            for k in 0..n {
                let p = r.at(cfg.near + (k as f64 + 0.5) * delta);
                encode_into(&[T::of(p.x), T::of(p.y), T::of(p.z)], cfg.point_freqs, &mut x);
                x.extend_from_slice(&tfeat);
            }
        }
        x
    }

    fn shade(&self, raw: Vec<T>, n_rays: usize) -> QuadBatch<T> {
        let n = self.config.n_quad;
        let delta = T::of(self.spacing());
        let mut rgb = Vec::with_capacity(raw.len() / 4 * 3);
        let mut sigma = Vec::with_capacity(raw.len() / 4);
        for p in raw.chunks_exact(4) {
            rgb.extend(p[..3].iter().map(|&v| sigmoid(v)));
            sigma.push(softplus(p[3]));
        }
        let mut colors = vec![T::zero(); n_rays * 3];
        for r in 0..n_rays {
            let mut optical = T::zero();
            for k in 0..n {
                let idx = r * n + k;
                let w = (-optical).exp() * (T::one() - (-sigma[idx] * delta).exp());
                for c in 0..3 {
                    colors[r * 3 + c] = colors[r * 3 + c] + w * rgb[idx * 3 + c];
                }
                optical = optical + sigma[idx] * delta;
            }
        }
        QuadBatch { rgb, sigma, raw, colors }
    }

    /// Integrated colors of a batch of rays.
    pub fn render_rays(&self, rays: &[Ray], ts: &[f64]) -> Result<Vec<Rgb>> {
        const CHUNK: usize = 128;
        let mut out = Vec::with_capacity(rays.len());
        for (rc, tc) in rays.chunks(CHUNK).zip(ts.chunks(CHUNK)) {
            let x = self.inputs(rc, tc);
            let raw = self.field_net.infer(&self.params, &x, rc.len() * self.config.n_quad)?;
            let q = self.shade(raw, rc.len());
            out.extend(q.colors.chunks_exact(3).map(|c| [c[0].f64(), c[1].f64(), c[2].f64()]));
        }
        Ok(out)
    }

    pub fn render_integrated(&self, r: &Ray, t: f64) -> Result<Rgb> {
        Ok(self.render_rays(std::slice::from_ref(r), &[t])?[0])
    }

    /// Mean squared color error over a batch; gradients accumulate into `grads`.
    pub fn loss_and_grad(&self, rays: &[Ray], ts: &[f64], targets: &[Rgb], grads: &mut [T]) -> Result<f64> {
        let n = self.config.n_quad;
        let b = rays.len();
        let x = self.inputs(rays, ts);
        let (raw, tape) = self.field_net.forward(&self.params, &x, b * n)?;
        let q = self.shade(raw, b);
        let mut loss = 0.0;
        let mut dcolor = vec![T::zero(); b * 3];
        let scale = 2.0 / (b * 3) as f64;
        for r in 0..b {
            for c in 0..3 {
                let diff = q.colors[r * 3 + c].f64() - targets[r][c];
                loss += diff * diff;
                dcolor[r * 3 + c] = T::of(scale * diff);
            }
        }
        loss /= (b * 3) as f64;
        let delta = T::of(self.spacing());
        let mut draw = vec![T::zero(); b * n * 4];
        for r in 0..b {
            let dc = &dcolor[r * 3..r * 3 + 3];
            // suffix[k] = Σ_{j>k} w_j c_j · dC
            let mut trans = T::one();
            let mut weights = Vec::with_capacity(n);
            for k in 0..n {
                let a = T::one() - (-q.sigma[r * n + k] * delta).exp();
                weights.push(trans * a);
                trans = trans * (T::one() - a);
            }
            let mut suffix = T::zero();
            let mut trans_after = trans;
            for k in (0..n).rev() {
                let idx = r * n + k;
                let c_dot: T = (0..3).fold(T::zero(), |acc, c| acc + q.rgb[idx * 3 + c] * dc[c]);
                // dC/dσ_k = δ (T_{k+1} c_k − Σ_{j>k} w_j c_j)
                let dsigma = delta * (trans_after * c_dot - suffix);
                suffix = suffix + weights[k] * c_dot;
                let a = T::one() - (-q.sigma[idx] * delta).exp();
                trans_after = if a < T::one() { trans_after / (T::one() - a) } else { T::zero() };
                for c in 0..3 {
                    let y = q.rgb[idx * 3 + c];
                    draw[idx * 4 + c] = dc[c] * weights[k] * y * (T::one() - y);
                }
                draw[idx * 4 + 3] = dsigma * sigmoid(q.raw[idx * 4 + 3]);
            }
        }
        self.field_net.backward(&self.params, &tape, &draw, grads)?;
        Ok(loss)
    }
}

impl IntegrationTeacher<f32> {
    pub fn n_params(&self) -> usize {
        self.params.len()
    }
}

/// Fits the teacher field to the oracle's exact colors on uniformly drawn rays.
pub fn train_integration_teacher(
    scene: &OracleScene,
    bounds: &RayBounds,
    config: TeacherConfig,
) -> Result<IntegrationTeacher<f32>> {
    let mut teacher = IntegrationTeacher::<f32>::new(config)?;
    let cfg = teacher.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7ea0_c4e5);
    let mut adam = AdamState::new(teacher.params.len(), cfg.lr);
    let mut grads = vec![0.0f32; teacher.params.len()];
    let draw = |rng: &mut ChaCha8Rng| -> Result<(Vec<Ray>, Vec<f64>, Vec<Rgb>)> {
        let mut rays = Vec::with_capacity(cfg.batch);
        let mut ts = Vec::with_capacity(cfg.batch);
        let mut targets = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch.max(1) {
            let (r, t) = sample_training_ray(bounds, rng)?;
            targets.push(scene.color(&r, t.get(), &[]));
            rays.push(r);
            ts.push(t.get());
        }
        Ok((rays, ts, targets))
    };
    for iter in 0..cfg.iters.max(1) {
        let (rays, ts, targets) = draw(&mut rng)?;
        grads.iter_mut().for_each(|g| *g = 0.0);
        let loss = teacher.loss_and_grad(&rays, &ts, &targets, &mut grads)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iter });
        }
        if iter == 0 {
            teacher.initial_loss = loss;
        }
        teacher.final_loss = loss;
        if cfg.iters == 0 {
            break;
        }
        teacher.loss_curve.push(loss);
        adam_step(&mut teacher.params, &grads, &mut adam)?;
    }
    Ok(teacher)
}
