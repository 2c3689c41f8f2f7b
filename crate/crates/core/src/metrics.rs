//! Full-reference image quality metrics: PSNR, SSIM and MS-SSIM.
//!
//! All metrics work on peak-1 float images, average over the three color
//! channels, and are symmetric in their arguments.

use crate::image::Image;
use crate::{Error, Result};

/// Returned by [`psnr`] for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    let mse = crate::nn::mse(&a.data, &b.data)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" Gaussian filtering of a `h × w` plane.
fn blur(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean luminance term and mean contrast-structure term of one channel, plus mean SSIM.
fn ssim_terms(a: &[f64], b: &[f64], w: usize, h: usize) -> (f64, f64) {
    let k = gaussian_kernel();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let (mu_a, ..) = blur(a, w, h, &k);
    let (mu_b, ..) = blur(b, w, h, &k);
    let (aa, ..) = blur(&prod(a, a), w, h, &k);
    let (bb, ..) = blur(&prod(b, b), w, h, &k);
    let (ab, ..) = blur(&prod(a, b), w, h, &k);
    let n = mu_a.len() as f64;
    let (mut ssim_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = aa[i] - ma * ma;
        let var_b = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let cs = (2.0 * cov + C2) / (var_a + var_b + C2);
        let l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        ssim_sum += l * cs;
        cs_sum += cs;
    }
    (ssim_sum / n, cs_sum / n)
}

fn check_size(img: &Image, min: usize) -> Result<()> {
    if img.width.min(img.height) < min {
        return Err(Error::TooSmall { width: img.width, height: img.height, min });
    }
    Ok(())
}

/// Single-scale SSIM (11×11 Gaussian window, σ = 1.5).
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    check_size(a, SSIM_WINDOW)?;
    let total: f64 = (0..3)
        .map(|c| ssim_terms(&a.channel(c), &b.channel(c), a.width, a.height).0)
        .sum();
    Ok(total / 3.0)
}

/// Number of dyadic scales MS-SSIM can use for an image of this size (at most 5).
pub fn ms_ssim_scales(width: usize, height: usize) -> usize {
    let mut side = width.min(height);
    let mut scales = 0;
    while scales < MS_SSIM_WEIGHTS.len() && side >= SSIM_WINDOW {
        scales += 1;
        side /= 2;
    }
    scales
}

fn downsample(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out[y * ow + x] = 0.25 * (plane[i] + plane[i + 1] + plane[i + w] + plane[i + w + 1]);
        }
    }
    (out, ow, oh)
}

/// Multi-scale SSIM with the standard five weights, renormalized over the
/// first `m` when the image only supports `m < 5` scales.
pub fn ms_ssim(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    check_size(a, SSIM_WINDOW)?;
    let m = ms_ssim_scales(a.width, a.height);
    let weights = &MS_SSIM_WEIGHTS[..m];
    let norm: f64 = weights.iter().sum();
    let mut total = 0.0;
    for c in 0..3 {
        let (mut pa, mut pb) = (a.channel(c), b.channel(c));
        let (mut w, mut h) = (a.width, a.height);
        let mut value = 1.0;
        for (j, &wt) in weights.iter().enumerate() {
            let (s, cs) = ssim_terms(&pa, &pb, w, h);
            let term = if j + 1 == m { s } else { cs };
            value *= term.max(0.0).powf(wt / norm);
            if j + 1 < m {
                let (na, nw, nh) = downsample(&pa, w, h);
                pb = downsample(&pb, w, h).0;
                pa = na;
                w = nw;
                h = nh;
            }
        }
        total += value;
    }
    Ok(total / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_image(w: usize, h: usize) -> Image {
        let mut data = Vec::with_capacity(3 * w * h);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
                data.push(0.5 + 0.4 * (6.0 * u).sin() * (4.0 * v).cos());
                data.push(0.5 + 0.3 * (9.0 * v + 2.0 * u).sin());
                data.push(((x / 5 + y / 7) % 2) as f64 * 0.6 + 0.2);
            }
        }
        Image::new(w, h, data).unwrap()
    }

    fn box_blur(img: &Image, radius: usize) -> Image {
        if radius == 0 {
            return img.clone();
        }
        let (w, h) = (img.width as isize, img.height as isize);
        let r = radius as isize;
        let mut data = vec![0.0; img.data.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let (mut s, mut n) = (0.0, 0.0);
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (xx, yy) = ((x + dx).clamp(0, w - 1), (y + dy).clamp(0, h - 1));
                            s += img.data[3 * (yy * w + xx) as usize + c];
                            n += 1.0;
                        }
                    }
                    data[3 * (y * w + x) as usize + c] = s / n;
                }
            }
        }
        Image::new(img.width, img.height, data).unwrap()
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
            let mut r = vec![0.0; v.len()];
            for (k, &i) in idx.iter().enumerate() {
                r[i] = k as f64;
            }
            r
        };
        let (ra, rb) = (rank(a), rank(b));
        let n = a.len() as f64;
        let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn psnr_examples() {
        let a = smooth_image(16, 16);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let x = Image::filled(8, 8, [0.3, 0.5, 0.7]);
        let y = Image::filled(8, 8, [0.4, 0.6, 0.8]);
        assert!((psnr(&x, &y).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
        assert!(psnr(&x, &Image::filled(4, 8, [0.0; 3])).is_err());
    }

    #[test]
    fn psnr_falls_as_noise_grows() {
        let a = smooth_image(32, 32);
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let noisy = Image::new(
                32,
                32,
                a.data.iter().map(|v| v + amp * rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let p = psnr(&a, &noisy).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = smooth_image(24, 20);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let b = box_blur(&a, 1);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        let shifted = Image::new(24, 20, a.data.iter().map(|v| v + 0.0).collect()).unwrap();
        assert_eq!(ssim(&a, &shifted).unwrap(), ssim(&a, &a).unwrap());
    }

    #[test]
    fn checkerboard_against_inverse_is_negative() {
        let w = 16;
        let gray: Vec<f64> = (0..w * w).map(|i| (((i % w) + (i / w)) % 2) as f64).collect();
        let a = Image::from_gray(w, w, &gray).unwrap();
        let inv = Image::from_gray(w, w, &gray.iter().map(|v| 1.0 - v).collect::<Vec<_>>()).unwrap();
        assert!(ssim(&a, &inv).unwrap() < 0.0);
    }

    #[test]
    fn too_small_images() {
        let a = Image::filled(10, 30, [0.5; 3]);
        assert!(matches!(ssim(&a, &a), Err(Error::TooSmall { .. })));
        assert!(matches!(ms_ssim(&a, &a), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn ms_ssim_identity_symmetry_and_scales() {
        assert_eq!(ms_ssim_scales(176, 200), 5);
        assert_eq!(ms_ssim_scales(64, 64), 3);
        assert_eq!(ms_ssim_scales(11, 11), 1);
        let a = smooth_image(64, 48);
        assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        let b = box_blur(&a, 2);
        assert_eq!(ms_ssim(&a, &b).unwrap(), ms_ssim(&b, &a).unwrap());
    }

    #[test]
    fn ms_ssim_tracks_ssim_over_blur_sweep() {
        let a = smooth_image(96, 96);
        let (mut s, mut ms) = (Vec::new(), Vec::new());
        for r in 0..10 {
            let b = box_blur(&a, r);
            s.push(ssim(&a, &b).unwrap());
            ms.push(ms_ssim(&a, &b).unwrap());
        }
        assert!(spearman(&s, &ms) > 0.9);
    }
}
