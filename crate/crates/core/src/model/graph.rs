//! The shared computation graph behind DyLiN and CoDyLiN.
//!
//! A [`ModelGraph`] owns the shapes of every sub-network and their offsets in
//! one flat parameter vector laid out as `ω, ψ, [pointwise], ψ_1..ψ_n, ρ_1..ρ_n, π`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{DylinConfig, Variant};
use super::stages::{
    assemble, assemble_backward, columns, concat_rows, deform, deform_backward, ray_features, ray_points,
    ray_points_backward, time_code, Deformed, RayBatch,
};
use crate::nn::{Activation, GradTape, ResidualMlp, Scalar};
use crate::ray::{encode_into, encoded_len};
use crate::{Error, Result};

/// Output scale applied at init to networks that predict geometric offsets,
/// so training starts close to the identity deformation.
const OFFSET_INIT_SCALE: f64 = 0.1;

/// Output scale of the color regressor at init: colors start near mid-gray.
const COLOR_INIT_SCALE: f64 = 0.01;

/// Sizes of the per-attribute networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttrDims {
    pub attr_layers: usize,
    pub attr_width: usize,
    pub mask_layers: usize,
    pub mask_width: usize,
}

impl Default for AttrDims {
    fn default() -> Self {
        Self { attr_layers: 4, attr_width: 64, mask_layers: 3, mask_width: 32 }
    }
}

/// A sub-network and where its parameters live.
#[derive(Debug, Clone, PartialEq)]
pub struct Subnet {
    pub name: String,
    pub net: ResidualMlp,
    pub offset: usize,
}

impl Subnet {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.net.param_count()
    }

    fn pass<T: Scalar>(
        &self,
        params: &[T],
        x: &[T],
        batch: usize,
        record: bool,
        tape: &mut Option<GradTape<T>>,
    ) -> Result<Vec<T>> {
        let p = &params[self.range()];
        if record {
            let (y, t) = self.net.forward(p, x, batch)?;
            *tape = Some(t);
            Ok(y)
        } else {
            self.net.infer(p, x, batch)
        }
    }

    fn back<T: Scalar>(&self, params: &[T], tape: &Option<GradTape<T>>, dout: &[T], grads: &mut [T]) -> Result<Vec<T>> {
        let tape = tape.as_ref().ok_or(Error::StaleTape)?;
        self.net.backward(&params[self.range()], tape, dout, &mut grads[self.range()])
    }
}

/// Colors (and masks, with attributes) for a batch of rays.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    /// `len × 3` in `[0, 1]`.
    pub rgb: Vec<T>,
    /// `len × (n_attr + 1)`, slot 0 first; empty without attributes.
    pub masks: Vec<T>,
}

/// Intermediate values needed by the backward pass.
#[derive(Debug)]
pub struct ForwardCache<T> {
    len: usize,
    depths: Vec<T>,
    deformed: Option<Deformed<T>>,
    pts: Vec<T>,
    w: Vec<T>,
    ws: Vec<Vec<T>>,
    raw: Vec<T>,
    sums: Vec<T>,
    masks: Vec<T>,
    deform_tape: Option<GradTape<T>>,
    hyper_tape: Option<GradTape<T>>,
    pointwise_tape: Option<GradTape<T>>,
    attr_tapes: Vec<Option<GradTape<T>>>,
    mask_tapes: Vec<Option<GradTape<T>>>,
    color_tape: Option<GradTape<T>>,
}

/// Loss values of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub rgb_loss: f64,
    pub mask_loss: f64,
    /// Per-ray contribution, used for hard example mining.
    pub per_sample: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    config: DylinConfig,
    n_attr: usize,
    attr_dims: AttrDims,
    deform: Option<Subnet>,
    hyper: Option<Subnet>,
    pointwise: Option<Subnet>,
    attr: Vec<Subnet>,
    mask: Vec<Subnet>,
    color: Subnet,
    n_params: usize,
}

/// Maps raw mask activations onto the probability simplex.
///
/// Returns `[m_0, m_1, .., m_n]` and the sum of `raw`.
pub fn project_masks<T: Scalar>(raw: &[T]) -> (Vec<T>, T) {
    let sum = raw.iter().fold(T::zero(), |a, &b| a + b);
    let mut out = Vec::with_capacity(raw.len() + 1);
    if sum <= T::one() {
        out.push(T::one() - sum);
        out.extend_from_slice(raw);
    } else {
        out.push(T::zero());
        out.extend(raw.iter().map(|&r| r / sum));
    }
    (out, sum)
}

impl ModelGraph {
    pub fn new(config: &DylinConfig, n_attr: usize, attr_dims: &AttrDims) -> Result<Self> {
        config.validate()?;
        if n_attr > 0 {
            if config.variant != Variant::Full {
                return Err(Error::VariantMismatch { expected: "Full", actual: config.variant.name() });
            }
            let d = attr_dims;
            if [d.attr_layers, d.attr_width, d.mask_layers, d.mask_width].contains(&0) {
                return Err(Error::InvalidConfig("attribute network dimensions must be positive".into()));
            }
        }
        let c = config;
        let mut offset = 0;
        let mut add = |name: String, net: ResidualMlp| {
            let s = Subnet { name, net, offset };
            offset += s.net.param_count();
            s
        };
        let mut deform = None;
        let mut hyper = None;
        let mut pointwise = None;
        match c.variant {
            Variant::Full => {
                let net = ResidualMlp::stack(c.ray_time_dim(), c.deform_width, c.deform_layers, 6, Activation::Identity, 0)?;
                deform = Some(add("deform".into(), net));
                let net = ResidualMlp::stack(
                    c.ray_time_dim(),
                    c.hyper_width,
                    c.hyper_layers,
                    c.hyper_dim,
                    Activation::Identity,
                    0,
                )?;
                hyper = Some(add("hyper".into(), net));
            }
            Variant::NoMlps => {}
            Variant::PointwiseDeform => {
                let input = c.k_points * c.point_dim() + encoded_len(1, c.time_freqs);
                let net = ResidualMlp::stack(
                    input,
                    c.pointwise_width,
                    c.pointwise_layers,
                    3 * c.k_points,
                    Activation::Identity,
                    0,
                )?;
                pointwise = Some(add("pointwise".into(), net));
            }
        }
        let attr = (0..n_attr)
            .map(|i| {
                let net = ResidualMlp::stack(
                    c.ray_time_dim() + 1,
                    attr_dims.attr_width,
                    attr_dims.attr_layers,
                    c.hyper_dim,
                    Activation::Identity,
                    0,
                )?;
                Ok(add(format!("attr{i}"), net))
            })
            .collect::<Result<Vec<_>>>()?;
        let mask = (0..n_attr)
            .map(|i| {
                let net = ResidualMlp::stack(
                    2 * c.hyper_dim + c.ray_dim(),
                    attr_dims.mask_width,
                    attr_dims.mask_layers,
                    1,
                    Activation::Sigmoid,
                    0,
                )?;
                Ok(add(format!("mask{i}"), net))
            })
            .collect::<Result<Vec<_>>>()?;
        let n_codes = if c.variant == Variant::Full { 1 + n_attr } else { 1 };
        let net = ResidualMlp::stack(
            c.lfn_input_dim(n_codes),
            c.lfn_width,
            c.lfn_layers,
            3,
            Activation::Sigmoid,
            c.skip_every,
        )?;
        let color = add("color".into(), net);
        let n_params = color.offset + color.net.param_count();
        Ok(Self {
            config: config.clone(),
            n_attr,
            attr_dims: attr_dims.clone(),
            deform,
            hyper,
            pointwise,
            attr,
            mask,
            color,
            n_params,
        })
    }

    pub fn config(&self) -> &DylinConfig {
        &self.config
    }

    pub fn attr_dims(&self) -> &AttrDims {
        &self.attr_dims
    }

    pub fn n_attr(&self) -> usize {
        self.n_attr
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn subnets(&self) -> Vec<&Subnet> {
        let mut out: Vec<&Subnet> = Vec::new();
        out.extend(self.deform.iter());
        out.extend(self.hyper.iter());
        out.extend(self.pointwise.iter());
        out.extend(self.attr.iter());
        out.extend(self.mask.iter());
        out.push(&self.color);
        out
    }

    pub fn subnet(&self, name: &str) -> Option<&Subnet> {
        self.subnets().into_iter().find(|s| s.name == name)
    }

    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let mut params = vec![T::zero(); self.n_params];
        for s in self.subnets() {
            let p = &mut params[s.range()];
            s.net.init_params(rng, p);
            let scale = match s.name.as_str() {
                "deform" | "pointwise" => Some(OFFSET_INIT_SCALE),
                "color" => Some(COLOR_INIT_SCALE),
                _ => None,
            };
            if let Some(scale) = scale {
                let last = s.net.layers().len() - 1;
                let start = p.len() - s.net.layers()[last].param_count();
                for v in &mut p[start..] {
                    *v = *v * T::of(scale);
                }
            }
        }
        params
    }

    /// Sets the color regressor's output bias so an untrained model predicts `rgb`.
    pub fn set_color_bias<T: Scalar>(&self, params: &mut [T], rgb: [f64; 3]) {
        let end = self.color.range().end;
        for (c, v) in rgb.iter().enumerate() {
            let y = v.clamp(1e-3, 1.0 - 1e-3);
            params[end - 3 + c] = T::of((y / (1.0 - y)).ln());
        }
    }

    fn check_batch<T: Scalar>(&self, params: &[T], b: &RayBatch<T>) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::LengthMismatch { left: params.len(), right: self.n_params });
        }
        if b.n_attr != self.n_attr {
            return Err(Error::ArityMismatch { model: self.n_attr, data: b.n_attr });
        }
        if b.k != self.config.k_points {
            return Err(Error::DimensionMismatch { expected: self.config.k_points, actual: b.k });
        }
        if b.len == 0 {
            return Err(Error::EmptyInput("ray batch"));
        }
        Ok(())
    }

    /// Ray features `[PE(o), PE(d), PE(t)]` consumed by the ray-level networks.
    pub fn ray_time_features<T: Scalar>(&self, b: &RayBatch<T>) -> Vec<T> {
        ray_features(b, self.config.ray_freqs, self.config.time_freqs, true)
    }

    /// Canonical rays for a batch (Full variant only).
    pub fn deform_rays<T: Scalar>(&self, params: &[T], b: &RayBatch<T>) -> Result<(Vec<T>, Vec<T>)> {
        let s = self.deform.as_ref().ok_or(Error::VariantMismatch {
            expected: "Full",
            actual: self.config.variant.name(),
        })?;
        let feat = self.ray_time_features(b);
        let raw = s.pass(params, &feat, b.len, false, &mut None)?;
        let def = deform(&b.o, &b.d, &raw);
        Ok((def.o, def.d))
    }

    /// Hyperspace codes `w`, `len × hyper_dim` (Full variant only).
    pub fn hyper_codes<T: Scalar>(&self, params: &[T], b: &RayBatch<T>) -> Result<Vec<T>> {
        let s = self.hyper.as_ref().ok_or(Error::VariantMismatch {
            expected: "Full",
            actual: self.config.variant.name(),
        })?;
        s.pass(params, &self.ray_time_features(b), b.len, false, &mut None)
    }

    /// Per-attribute codes `w_i`, each `len × hyper_dim`.
    pub fn attr_codes<T: Scalar>(&self, params: &[T], b: &RayBatch<T>) -> Result<Vec<Vec<T>>> {
        let feat = self.ray_time_features(b);
        self.attr_codes_from(params, b, &feat, false, &mut Vec::new())
    }

    fn attr_codes_from<T: Scalar>(
        &self,
        params: &[T],
        b: &RayBatch<T>,
        feat: &[T],
        record: bool,
        tapes: &mut Vec<Option<GradTape<T>>>,
    ) -> Result<Vec<Vec<T>>> {
        let fd = self.config.ray_time_dim();
        let mut out = Vec::with_capacity(self.n_attr);
        for (i, s) in self.attr.iter().enumerate() {
            let alpha = columns(&b.alpha, self.n_attr, i, 1);
            let x = concat_rows(&[(feat, fd), (&alpha, 1)], b.len);
            let mut tape = None;
            out.push(s.pass(params, &x, b.len, record, &mut tape)?);
            tapes.push(tape);
        }
        Ok(out)
    }

    /// Runs the model; with `record` the returned cache feeds [`ModelGraph::backward`].
    pub fn forward<T: Scalar>(
        &self,
        params: &[T],
        b: &RayBatch<T>,
        record: bool,
    ) -> Result<(Prediction<T>, ForwardCache<T>)> {
        self.check_batch(params, b)?;
        let c = &self.config;
        let (k, hd, n) = (c.k_points, c.hyper_dim, b.len);
        let mut cache = ForwardCache {
            len: n,
            depths: b.depths.clone(),
            deformed: None,
            pts: Vec::new(),
            w: Vec::new(),
            ws: Vec::new(),
            raw: Vec::new(),
            sums: Vec::new(),
            masks: Vec::new(),
            deform_tape: None,
            hyper_tape: None,
            pointwise_tape: None,
            attr_tapes: Vec::new(),
            mask_tapes: Vec::new(),
            color_tape: None,
        };
        let mut codes: Vec<Vec<T>> = Vec::new();
        match c.variant {
            Variant::Full => {
                let feat = self.ray_time_features(b);
                let deform_net = self.deform.as_ref().expect("full variant has a deformation net");
                let raw6 = deform_net.pass(params, &feat, n, record, &mut cache.deform_tape)?;
                let def = deform(&b.o, &b.d, &raw6);
                cache.pts = ray_points(&def.o, &def.d, &b.depths, k);
                cache.deformed = Some(def);
                let hyper = self.hyper.as_ref().expect("full variant has a hyperspace net");
                cache.w = hyper.pass(params, &feat, n, record, &mut cache.hyper_tape)?;
                if self.n_attr == 0 {
                    codes.push(cache.w.clone());
                } else {
                    cache.ws = self.attr_codes_from(params, b, &feat, record, &mut cache.attr_tapes)?;
                    self.compute_masks(params, b, record, &mut cache)?;
                    let stride = self.n_attr + 1;
                    let scaled = |code: &[T], slot: usize| -> Vec<T> {
                        code.iter().enumerate().map(|(j, &v)| v * cache.masks[(j / hd) * stride + slot]).collect()
                    };
                    codes.push(scaled(&cache.w, 0));
                    for (i, wi) in cache.ws.iter().enumerate() {
                        codes.push(scaled(wi, i + 1));
                    }
                }
            }
            Variant::NoMlps => {
                cache.pts = ray_points(&b.o, &b.d, &b.depths, k);
                codes.push(time_code(&b.t, hd));
            }
            Variant::PointwiseDeform => {
                let base = ray_points(&b.o, &b.d, &b.depths, k);
                let mut pin = Vec::new();
                for i in 0..n {
                    for j in 0..k {
                        encode_into(&base[(i * k + j) * 3..(i * k + j) * 3 + 3], c.point_freqs, &mut pin);
                    }
                    encode_into(&b.t[i..i + 1], c.time_freqs, &mut pin);
                }
                let net = self.pointwise.as_ref().expect("pointwise variant has an offset net");
                let offsets = net.pass(params, &pin, n, record, &mut cache.pointwise_tape)?;
                cache.pts = base.iter().zip(&offsets).map(|(&p, &d)| p + d).collect();
                codes.push(time_code(&b.t, hd));
            }
        }
        let refs: Vec<&[T]> = codes.iter().map(|v| v.as_slice()).collect();
        let x = assemble(&cache.pts, k, c.point_freqs, &refs, hd, c.repeat_code_per_point);
        let rgb = self.color.pass(params, &x, n, record, &mut cache.color_tape)?;
        let masks = cache.masks.clone();
        Ok((Prediction { rgb, masks }, cache))
    }

    fn compute_masks<T: Scalar>(
        &self,
        params: &[T],
        b: &RayBatch<T>,
        record: bool,
        cache: &mut ForwardCache<T>,
    ) -> Result<()> {
        let c = &self.config;
        let (hd, n, na) = (c.hyper_dim, b.len, self.n_attr);
        let rf = ray_features(b, c.ray_freqs, c.time_freqs, false);
        let mut raw = vec![T::zero(); n * na];
        for (i, s) in self.mask.iter().enumerate() {
            let x = concat_rows(&[(&cache.ws[i], hd), (&cache.w, hd), (&rf, c.ray_dim())], n);
            let mut tape = None;
            let r = s.pass(params, &x, n, record, &mut tape)?;
            cache.mask_tapes.push(tape);
            for j in 0..n {
                raw[j * na + i] = r[j];
            }
        }
        let mut masks = Vec::with_capacity(n * (na + 1));
        let mut sums = Vec::with_capacity(n);
        for row in raw.chunks_exact(na) {
            let (m, s) = project_masks(row);
            masks.extend(m);
            sums.push(s);
        }
        cache.raw = raw;
        cache.sums = sums;
        cache.masks = masks;
        Ok(())
    }

    /// Accumulates parameter gradients given gradients on the colors and,
    /// optionally, on the masks.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        cache: &ForwardCache<T>,
        drgb: &[T],
        dmasks: Option<&[T]>,
        grads: &mut [T],
    ) -> Result<()> {
        if grads.len() != self.n_params {
            return Err(Error::LengthMismatch { left: grads.len(), right: self.n_params });
        }
        let c = &self.config;
        let (k, hd, n, na) = (c.k_points, c.hyper_dim, cache.len, self.n_attr);
        let n_codes = if c.variant == Variant::Full { 1 + na } else { 1 };
        let dx = self.color.back(params, &cache.color_tape, drgb, grads)?;
        let (dpts, dcodes) =
            assemble_backward(&cache.pts, k, c.point_freqs, n_codes, hd, c.repeat_code_per_point, &dx);
        match c.variant {
            Variant::NoMlps => {}
            Variant::PointwiseDeform => {
                let net = self.pointwise.as_ref().expect("pointwise variant has an offset net");
                net.back(params, &cache.pointwise_tape, &dpts, grads)?;
            }
            Variant::Full => {
                let def = cache.deformed.as_ref().ok_or(Error::StaleTape)?;
                let (d_o, d_d) = ray_points_backward(&dpts, &cache.depths, k);
                let draw6 = deform_backward(def, &d_o, &d_d);
                let deform_net = self.deform.as_ref().expect("full variant has a deformation net");
                deform_net.back(params, &cache.deform_tape, &draw6, grads)?;
                let mut dw;
                if na == 0 {
                    dw = dcodes[0].clone();
                } else {
                    let stride = na + 1;
                    let mut dm = vec![T::zero(); n * stride];
                    if let Some(ext) = dmasks {
                        if ext.len() != dm.len() {
                            return Err(Error::DimensionMismatch { expected: dm.len(), actual: ext.len() });
                        }
                        dm.copy_from_slice(ext);
                    }
                    let mut dws: Vec<Vec<T>> = Vec::with_capacity(na);
                    dw = vec![T::zero(); n * hd];
                    for slot in 0..stride {
                        let code = if slot == 0 { &cache.w } else { &cache.ws[slot - 1] };
                        let mut dcode = vec![T::zero(); n * hd];
                        for j in 0..n {
                            let m = cache.masks[j * stride + slot];
                            let mut acc = T::zero();
                            for e in 0..hd {
                                let g = dcodes[slot][j * hd + e];
                                acc = acc + g * code[j * hd + e];
                                dcode[j * hd + e] = g * m;
                            }
                            dm[j * stride + slot] = dm[j * stride + slot] + acc;
                        }
                        if slot == 0 {
                            dw = dcode;
                        } else {
                            dws.push(dcode);
                        }
                    }
                    let draw = self.masks_backward(cache, &dm);
                    let rf_dim = c.ray_dim();
                    let in_dim = 2 * hd + rf_dim;
                    for i in 0..na {
                        let dr: Vec<T> = (0..n).map(|j| draw[j * na + i]).collect();
                        let din = self.mask[i].back(params, &cache.mask_tapes[i], &dr, grads)?;
                        for j in 0..n {
                            for e in 0..hd {
                                dws[i][j * hd + e] = dws[i][j * hd + e] + din[j * in_dim + e];
                                dw[j * hd + e] = dw[j * hd + e] + din[j * in_dim + hd + e];
                            }
                        }
                    }
                    for (i, dw_i) in dws.iter().enumerate().take(na) {
                        self.attr[i].back(params, &cache.attr_tapes[i], dw_i, grads)?;
                    }
                }
                let hyper = self.hyper.as_ref().expect("full variant has a hyperspace net");
                hyper.back(params, &cache.hyper_tape, &dw, grads)?;
            }
        }
        Ok(())
    }

    /// Gradient on the raw mask activations from gradients on `m_0..m_n`.
    fn masks_backward<T: Scalar>(&self, cache: &ForwardCache<T>, dm: &[T]) -> Vec<T> {
        let (n, na) = (cache.len, self.n_attr);
        let stride = na + 1;
        let mut draw = vec![T::zero(); n * na];
        for j in 0..n {
            let g = &dm[j * stride..(j + 1) * stride];
            let raw = &cache.raw[j * na..(j + 1) * na];
            let s = cache.sums[j];
            if s <= T::one() {
                for i in 0..na {
                    draw[j * na + i] = g[i + 1] - g[0];
                }
            } else {
                let dot = (0..na).fold(T::zero(), |a, i| a + g[i + 1] * raw[i]);
                for i in 0..na {
                    draw[j * na + i] = g[i + 1] / s - dot / (s * s);
                }
            }
        }
        draw
    }

    /// Mean squared color error plus `mask_weight` times the per-ray summed
    /// mask error, with gradients accumulated into `grads`.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_and_grad<T: Scalar>(
        &self,
        params: &[T],
        b: &RayBatch<T>,
        target_rgb: &[T],
        target_masks: Option<&[T]>,
        mask_weight: f64,
        grads: &mut [T],
    ) -> Result<LossReport> {
        let (pred, cache) = self.forward(params, b, true)?;
        let n = b.len;
        if target_rgb.len() != 3 * n {
            return Err(Error::DimensionMismatch { expected: 3 * n, actual: target_rgb.len() });
        }
        let mut per_sample = vec![0.0; n];
        let mut rgb_loss = 0.0;
        let scale = T::of(2.0 / (3 * n) as f64);
        let mut drgb = vec![T::zero(); 3 * n];
        for i in 0..3 * n {
            let e = pred.rgb[i] - target_rgb[i];
            let ef = e.f64();
            rgb_loss += ef * ef;
            per_sample[i / 3] += ef * ef / 3.0;
            drgb[i] = e * scale;
        }
        rgb_loss /= (3 * n) as f64;
        let mut mask_loss = 0.0;
        let mut dmasks = None;
        if let (Some(tm), true) = (target_masks, self.n_attr > 0) {
            let stride = self.n_attr + 1;
            if tm.len() != n * stride {
                return Err(Error::DimensionMismatch { expected: n * stride, actual: tm.len() });
            }
            let mscale = T::of(2.0 * mask_weight / n as f64);
            let mut dm = vec![T::zero(); n * stride];
            for i in 0..n * stride {
                let e = pred.masks[i] - tm[i];
                let ef = e.f64();
                mask_loss += ef * ef;
                per_sample[i / stride] += mask_weight * ef * ef;
                dm[i] = e * mscale;
            }
            mask_loss /= n as f64;
            dmasks = Some(dm);
        }
        let loss = rgb_loss + mask_weight * mask_loss;
        self.backward(params, &cache, &drgb, dmasks.as_deref(), grads)?;
        Ok(LossReport { loss, rgb_loss, mask_loss, per_sample })
    }
}
