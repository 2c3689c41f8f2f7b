//! Batched building blocks shared by the ray models, each with its backward pass.
//!
//! All buffers are row-major with one row per ray.

use std::f64::consts::PI;

use rand::Rng;

use crate::nn::Scalar;
use crate::ray::{encode_backward, encode_into, sample_depths, Ray, SampleMode};
use crate::Result;

/// A batch of rays with per-ray time, attributes and sampling depths.
#[derive(Debug, Clone, PartialEq)]
pub struct RayBatch<T> {
    pub len: usize,
    pub o: Vec<T>,
    pub d: Vec<T>,
    pub t: Vec<T>,
    /// `len × n_attr`.
    pub alpha: Vec<T>,
    pub n_attr: usize,
    /// `len × k` increasing depths.
    pub depths: Vec<T>,
    pub k: usize,
}

impl<T: Scalar> RayBatch<T> {
    /// `alphas` holds `n_attr` values per ray.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        rays: &[Ray],
        ts: &[f64],
        alphas: &[f64],
        n_attr: usize,
        k: usize,
        near: f64,
        far: f64,
        mode: SampleMode,
        rng: &mut R,
    ) -> Result<Self> {
        let len = rays.len();
        assert_eq!(ts.len(), len);
        assert_eq!(alphas.len(), len * n_attr);
        let mut depths = Vec::with_capacity(len * k);
        let even = match mode {
            SampleMode::EvenlySpaced => Some(sample_depths(k, near, far, mode, rng)?),
            SampleMode::StratifiedRandom => None,
        };
        for _ in 0..len {
            match &even {
                Some(s) => depths.extend(s.iter().map(|&v| T::of(v))),
                None => depths.extend(sample_depths(k, near, far, mode, rng)?.into_iter().map(T::of)),
            }
        }
        Ok(Self {
            len,
            o: rays.iter().flat_map(|r| r.o.to_array()).map(T::of).collect(),
            d: rays.iter().flat_map(|r| r.d.to_array()).map(T::of).collect(),
            t: ts.iter().map(|&t| T::of(t)).collect(),
            alpha: alphas.iter().map(|&a| T::of(a)).collect(),
            n_attr,
            depths,
            k,
        })
    }
}

/// Per ray: `[PE(o), PE(d), PE(t)]` (with `with_time`) or `[PE(o), PE(d)]`.
pub(crate) fn ray_features<T: Scalar>(b: &RayBatch<T>, ray_freqs: usize, time_freqs: usize, with_time: bool) -> Vec<T> {
    let mut out = Vec::new();
    for i in 0..b.len {
        encode_into(&b.o[3 * i..3 * i + 3], ray_freqs, &mut out);
        encode_into(&b.d[3 * i..3 * i + 3], ray_freqs, &mut out);
        if with_time {
            encode_into(&b.t[i..i + 1], time_freqs, &mut out);
        }
    }
    out
}

/// Fixed Fourier code of `t` with `dim` entries: `sin, cos` pairs at `2^j π`, then `t` if odd.
pub(crate) fn time_code<T: Scalar>(t: &[T], dim: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(t.len() * dim);
    for &tv in t {
        let mut freq = T::of(PI);
        for _ in 0..dim / 2 {
            out.push((freq * tv).sin());
            out.push((freq * tv).cos());
            freq = freq * T::of(2.0);
        }
        if dim % 2 == 1 {
            out.push(tv);
        }
    }
    out
}

#[derive(Debug)]
/// Canonical rays `o' = o + Δo`, `d' = (d + Δd) / |d + Δd|`.
pub(crate) struct Deformed<T> {
    pub o: Vec<T>,
    pub d: Vec<T>,
    pub norm: Vec<T>,
}

pub(crate) fn deform<T: Scalar>(o: &[T], d: &[T], raw: &[T]) -> Deformed<T> {
    let n = o.len() / 3;
    let mut out = Deformed { o: vec![T::zero(); 3 * n], d: vec![T::zero(); 3 * n], norm: vec![T::zero(); n] };
    for i in 0..n {
        let mut u = [T::zero(); 3];
        for c in 0..3 {
            out.o[3 * i + c] = o[3 * i + c] + raw[6 * i + c];
            u[c] = d[3 * i + c] + raw[6 * i + 3 + c];
        }
        let len = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt().max(T::of(1e-12));
        out.norm[i] = len;
        for (c, &uc) in u.iter().enumerate() {
            out.d[3 * i + c] = uc / len;
        }
    }
    out
}

/// Gradient on the raw deformation output from gradients on `o'`, `d'`.
pub(crate) fn deform_backward<T: Scalar>(def: &Deformed<T>, d_o: &[T], d_d: &[T]) -> Vec<T> {
    let n = def.norm.len();
    let mut draw = vec![T::zero(); 6 * n];
    for i in 0..n {
        let dn = &def.d[3 * i..3 * i + 3];
        let g = &d_d[3 * i..3 * i + 3];
        let proj = dn[0] * g[0] + dn[1] * g[1] + dn[2] * g[2];
        for c in 0..3 {
            draw[6 * i + c] = d_o[3 * i + c];
            draw[6 * i + 3 + c] = (g[c] - dn[c] * proj) / def.norm[i];
        }
    }
    draw
}

/// Points `o + s_k d` for every ray, `len × k × 3`.
pub(crate) fn ray_points<T: Scalar>(o: &[T], d: &[T], depths: &[T], k: usize) -> Vec<T> {
    let n = o.len() / 3;
    let mut pts = Vec::with_capacity(n * k * 3);
    for i in 0..n {
        for j in 0..k {
            let s = depths[i * k + j];
            for c in 0..3 {
                pts.push(o[3 * i + c] + s * d[3 * i + c]);
            }
        }
    }
    pts
}

/// Pulls point gradients back to the ray's origin and direction.
pub(crate) fn ray_points_backward<T: Scalar>(dpts: &[T], depths: &[T], k: usize) -> (Vec<T>, Vec<T>) {
    let n = depths.len() / k;
    let (mut d_o, mut d_d) = (vec![T::zero(); 3 * n], vec![T::zero(); 3 * n]);
    for i in 0..n {
        for j in 0..k {
            let s = depths[i * k + j];
            for c in 0..3 {
                let g = dpts[(i * k + j) * 3 + c];
                d_o[3 * i + c] = d_o[3 * i + c] + g;
                d_d[3 * i + c] = d_d[3 * i + c] + s * g;
            }
        }
    }
    (d_o, d_d)
}

/// Lays out the color regressor input: encoded points, then code blocks
/// (once per ray, or after every point when `repeat`).
pub(crate) fn assemble<T: Scalar>(
    pts: &[T],
    k: usize,
    point_freqs: usize,
    codes: &[&[T]],
    code_dim: usize,
    repeat: bool,
) -> Vec<T> {
    let n = pts.len() / (3 * k);
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..k {
            let p = &pts[(i * k + j) * 3..(i * k + j) * 3 + 3];
            encode_into(p, point_freqs, &mut out);
            if repeat {
                for c in codes {
                    out.extend_from_slice(&c[i * code_dim..(i + 1) * code_dim]);
                }
            }
        }
        if !repeat {
            for c in codes {
                out.extend_from_slice(&c[i * code_dim..(i + 1) * code_dim]);
            }
        }
    }
    out
}

/// Inverse of [`assemble`] for gradients: returns `(d points, d codes)`.
pub(crate) fn assemble_backward<T: Scalar>(
    pts: &[T],
    k: usize,
    point_freqs: usize,
    n_codes: usize,
    code_dim: usize,
    repeat: bool,
    dinput: &[T],
) -> (Vec<T>, Vec<Vec<T>>) {
    let n = pts.len() / (3 * k);
    let pd = crate::ray::encoded_len(3, point_freqs);
    let mut dpts = vec![T::zero(); pts.len()];
    let mut dcodes = vec![vec![T::zero(); n * code_dim]; n_codes];
    let mut at = 0;
    for i in 0..n {
        for j in 0..k {
            let idx = (i * k + j) * 3;
            encode_backward(&pts[idx..idx + 3], point_freqs, &dinput[at..at + pd], &mut dpts[idx..idx + 3]);
            at += pd;
            if repeat {
                for dc in dcodes.iter_mut() {
                    for c in 0..code_dim {
                        dc[i * code_dim + c] = dc[i * code_dim + c] + dinput[at + c];
                    }
                    at += code_dim;
                }
            }
        }
        if !repeat {
            for dc in dcodes.iter_mut() {
                dc[i * code_dim..(i + 1) * code_dim].copy_from_slice(&dinput[at..at + code_dim]);
                at += code_dim;
            }
        }
    }
    (dpts, dcodes)
}

/// Concatenates row blocks: row `i` of the output is `[a_i, b_i, ...]`.
pub(crate) fn concat_rows<T: Scalar>(parts: &[(&[T], usize)], n: usize) -> Vec<T> {
    let width: usize = parts.iter().map(|p| p.1).sum();
    let mut out = Vec::with_capacity(n * width);
    for i in 0..n {
        for &(buf, w) in parts {
            out.extend_from_slice(&buf[i * w..(i + 1) * w]);
        }
    }
    out
}

/// Extracts columns `[start, start + w)` of a `n × width` buffer.
pub(crate) fn columns<T: Scalar>(buf: &[T], width: usize, start: usize, w: usize) -> Vec<T> {
    buf.chunks_exact(width).flat_map(|row| row[start..start + w].iter().copied()).collect()
}
