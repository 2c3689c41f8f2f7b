use serde::{Deserialize, Serialize};

use crate::ray::encoded_len;
use crate::{Error, Result};

/// Which sub-networks feed the color regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Ray deformation + hyperspace code.
    Full,
    /// Points on the input ray plus a fixed Fourier time code.
    NoMlps,
    /// One MLP offsets all K points jointly (may bend rays).
    PointwiseDeform,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "Full",
            Variant::NoMlps => "NoMlps",
            Variant::PointwiseDeform => "PointwiseDeform",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Some(Variant::Full),
            "nomlps" | "no-mlps" | "no_mlps" => Some(Variant::NoMlps),
            "pointwisedeform" | "pointwise" | "pointwise-deform" => Some(Variant::PointwiseDeform),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DylinConfig {
    pub variant: Variant,
    pub deform_layers: usize,
    pub deform_width: usize,
    pub hyper_layers: usize,
    pub hyper_width: usize,
    pub hyper_dim: usize,
    pub lfn_layers: usize,
    pub lfn_width: usize,
    pub skip_every: usize,
    pub pointwise_layers: usize,
    pub pointwise_width: usize,
    pub k_points: usize,
    pub near: f64,
    pub far: f64,
    pub point_freqs: usize,
    pub ray_freqs: usize,
    pub time_freqs: usize,
    /// Append the hyperspace code after every point instead of once.
    pub repeat_code_per_point: bool,
    pub seed: u64,
}

impl Default for DylinConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl DylinConfig {
    /// CPU-sized defaults.
    pub fn desk() -> Self {
        Self {
            variant: Variant::Full,
            deform_layers: 4,
            deform_width: 64,
            hyper_layers: 3,
            hyper_width: 32,
            hyper_dim: 8,
            lfn_layers: 16,
            lfn_width: 128,
            skip_every: 2,
            pointwise_layers: 5,
            pointwise_width: 256,
            k_points: 16,
            near: 2.5,
            far: 5.5,
            point_freqs: 6,
            ray_freqs: 0,
            time_freqs: 4,
            repeat_code_per_point: false,
            seed: 0,
        }
    }

    /// Network sizes used for the full-scale experiments.
    pub fn full_size() -> Self {
        Self {
            deform_layers: 7,
            deform_width: 128,
            hyper_layers: 6,
            hyper_width: 64,
            lfn_layers: 88,
            lfn_width: 256,
            ..Self::desk()
        }
    }

    /// Tiny networks for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            deform_layers: 2,
            deform_width: 6,
            hyper_layers: 2,
            hyper_width: 5,
            hyper_dim: 3,
            lfn_layers: 4,
            lfn_width: 7,
            pointwise_layers: 2,
            pointwise_width: 6,
            k_points: 3,
            point_freqs: 1,
            ray_freqs: 1,
            time_freqs: 1,
            ..Self::desk()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.deform_layers,
            self.deform_width,
            self.hyper_layers,
            self.hyper_width,
            self.hyper_dim,
            self.lfn_layers,
            self.lfn_width,
            self.pointwise_layers,
            self.pointwise_width,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidConfig("all network dimensions must be positive".into()));
        }
        if self.k_points < 2 {
            return Err(Error::InvalidConfig("k_points must be at least 2".into()));
        }
        if !(self.near < self.far) || self.near < 0.0 {
            return Err(Error::InvalidRange { near: self.near, far: self.far });
        }
        Ok(())
    }

    /// Fourier features of `(o, d, t)` consumed by the ray-level MLPs.
    pub fn ray_time_dim(&self) -> usize {
        2 * encoded_len(3, self.ray_freqs) + encoded_len(1, self.time_freqs)
    }

    /// Fourier features of `(o, d)` alone.
    pub fn ray_dim(&self) -> usize {
        2 * encoded_len(3, self.ray_freqs)
    }

    pub fn point_dim(&self) -> usize {
        encoded_len(3, self.point_freqs)
    }

    /// Width of the color regressor input when `n_codes` code blocks are attached.
    pub fn lfn_input_dim(&self, n_codes: usize) -> usize {
        let codes = n_codes * self.hyper_dim;
        if self.repeat_code_per_point {
            self.k_points * (self.point_dim() + codes)
        } else {
            self.k_points * self.point_dim() + codes
        }
    }
}
