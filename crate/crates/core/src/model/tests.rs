use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::gradcheck::max_relative_error;
use crate::ray::{Camera, Ray, SampleMode};
use crate::vec3::Vec3;

fn rays(n: usize, rng: &mut ChaCha8Rng) -> (Vec<Ray>, Vec<f64>, Vec<f64>) {
    let mut rs = Vec::new();
    let mut ts = Vec::new();
    for _ in 0..n {
        let o = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(3.0..4.0));
        let d = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), -1.0);
        rs.push(Ray::new(o, d).unwrap());
        ts.push(rng.gen_range(0.0..1.0));
    }
    let alphas = (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (rs, ts, alphas)
}

fn perturb(params: &mut [f64]) {
    for (i, p) in params.iter_mut().enumerate() {
        *p += 0.05 * (0.7 * i as f64).sin();
    }
}

fn camera(w: usize, h: usize) -> Camera {
    Camera {
        position: Vec3::new(0.0, 0.0, 4.0),
        look_at: Vec3::ZERO,
        up: Vec3::new(0.0, 1.0, 0.0),
        fov_y: 0.7,
        width: w,
        height: h,
    }
}

/// Checks the analytic gradient of the full distillation loss of `graph`.
fn check_graph(graph: &ModelGraph, mut params: Vec<f64>, n_attr: usize, mask_weight: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (rs, ts, alphas) = rays(4, &mut rng);
    let alphas = &alphas[..4 * n_attr];
    let c = graph.config();
    let b = RayBatch::new(&rs, &ts, alphas, n_attr, c.k_points, c.near, c.far, SampleMode::StratifiedRandom, &mut rng)
        .unwrap();
    let target: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
    let tmasks: Option<Vec<f64>> = (n_attr > 0).then(|| {
        (0..4).flat_map(|_| {
            let mut m = vec![0.0; n_attr + 1];
            m[rng.gen_range(0..=n_attr)] = 1.0;
            m
        })
        .collect()
    });
    let mut grads = vec![0.0; params.len()];
    graph.loss_and_grad(&params, &b, &target, tmasks.as_deref(), mask_weight, &mut grads).unwrap();
    assert!(grads.iter().any(|&g| g != 0.0));
    max_relative_error(&mut params, &grads, 1e-5, 1e-6, |p| {
        let mut scratch = vec![0.0; p.len()];
        graph.loss_and_grad(p, &b, &target, tmasks.as_deref(), mask_weight, &mut scratch).unwrap().loss
    })
}

fn tiny_params(graph: &ModelGraph, seed: u64) -> Vec<f64> {
    let mut p = graph.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
    perturb(&mut p);
    p
}

#[test]
fn gradients_of_every_variant_match_differences() {
    for variant in [Variant::Full, Variant::NoMlps, Variant::PointwiseDeform] {
        for repeat in [false, true] {
            let cfg = DylinConfig { repeat_code_per_point: repeat, ..DylinConfig::tiny().with_variant(variant) };
            let g = ModelGraph::new(&cfg, 0, &AttrDims::default()).unwrap();
            let err = check_graph(&g, tiny_params(&g, 1), 0, 0.0);
            assert!(err < 1e-4, "{variant:?} repeat={repeat}: {err}");
        }
    }
}

#[test]
fn gradients_of_attribute_model_match_differences() {
    let cfg = CodylinConfig::tiny(2);
    let g = ModelGraph::new(&cfg.base, 2, &cfg.attr).unwrap();
    let err = check_graph(&g, tiny_params(&g, 2), 2, 0.7);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn gradients_through_mask_projection_match_differences() {
    let cfg = CodylinConfig::tiny(2);
    let g = ModelGraph::new(&cfg.base, 2, &cfg.attr).unwrap();
    let mut p = tiny_params(&g, 3);
    for name in ["mask0", "mask1"] {
        let s = g.subnet(name).unwrap();
        let end = s.range().end;
        p[end - 1] = 3.0;
    }
    let err = check_graph(&g, p, 2, 0.4);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn deformation_and_hyperspace_receive_gradient() {
    let g = ModelGraph::new(&DylinConfig::tiny(), 0, &AttrDims::default()).unwrap();
    let p = tiny_params(&g, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (rs, ts, _) = rays(8, &mut rng);
    let c = g.config();
    let b = RayBatch::new(&rs, &ts, &[], 0, c.k_points, c.near, c.far, SampleMode::EvenlySpaced, &mut rng).unwrap();
    let mut grads = vec![0.0; p.len()];
    g.loss_and_grad(&p, &b, &[0.3; 24], None, 0.0, &mut grads).unwrap();
    for name in ["deform", "hyper", "color"] {
        let s = g.subnet(name).unwrap();
        assert!(grads[s.range()].iter().any(|&v| v != 0.0), "{name}");
    }
}

#[test]
fn zero_deformation_is_identity_and_collinear() {
    let mut m = DylinModel::<f64>::new(DylinConfig::desk()).unwrap();
    let (deform, hyper) = {
        let g = m.graph();
        (g.subnet("deform").unwrap().range(), g.subnet("hyper").unwrap().range())
    };
    m.params_mut()[deform].fill(0.0);
    m.params_mut()[hyper].fill(0.0);
    let r = Ray::new(Vec3::new(0.2, -0.4, 4.0), Vec3::new(0.1, 0.05, -1.0)).unwrap();
    let dr = m.deform_ray(&r, 0.3).unwrap();
    assert!((dr.o - r.o).norm() < 1e-12 && (dr.d - r.d).norm() < 1e-12);
    assert!(m.hyper_code(&r, 0.3).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn deformed_samples_are_collinear() {
    let m = DylinModel::<f64>::new(DylinConfig { seed: 9, ..DylinConfig::desk() }).unwrap();
    let r = Ray::new(Vec3::new(0.2, -0.4, 4.0), Vec3::new(0.1, 0.05, -1.0)).unwrap();
    let dr = m.deform_ray(&r, 0.8).unwrap();
    assert!((dr.d.norm() - 1.0).abs() < 1e-12);
    let a = dr.at(2.5);
    let b = dr.at(5.5);
    for k in 0..16 {
        let p = dr.at(2.5 + 3.0 * k as f64 / 15.0);
        assert!((p - a).cross(b - a).norm() <= 1e-6);
    }
}

#[test]
fn hyper_code_requires_full_variant() {
    let m = DylinModel::<f32>::new(DylinConfig::tiny().with_variant(Variant::NoMlps)).unwrap();
    let r = Ray::new(Vec3::new(0.0, 0.0, 4.0), Vec3::new(0.0, 0.0, -1.0)).unwrap();
    assert!(matches!(m.hyper_code(&r, 0.0), Err(crate::Error::VariantMismatch { .. })));
    assert!(matches!(m.deform_ray(&r, 0.0), Err(crate::Error::VariantMismatch { .. })));
}

#[test]
fn no_mlps_is_smaller_by_exactly_the_ray_networks() {
    let full = ModelGraph::new(&DylinConfig::desk(), 0, &AttrDims::default()).unwrap();
    let bare = ModelGraph::new(&DylinConfig::desk().with_variant(Variant::NoMlps), 0, &AttrDims::default()).unwrap();
    let c = DylinConfig::desk();
    let ray_in = c.ray_time_dim();
    let omega = ray_in * 64 + 64 + 2 * (64 * 64 + 64) + 64 * 6 + 6;
    let psi = ray_in * 32 + 32 + 32 * 32 + 32 + 32 * 8 + 8;
    assert_eq!(full.n_params() - bare.n_params(), omega + psi);
}

#[test]
fn full_sizes_give_eight_dimensional_codes() {
    let cfg = CodylinConfig::full_size(2);
    let g = ModelGraph::new(&cfg.base, 2, &cfg.attr).unwrap();
    assert_eq!(g.subnet("hyper").unwrap().net.out_dim(), 8);
    assert_eq!(g.subnet("attr1").unwrap().net.layers().len(), 5);
    assert_eq!(g.subnet("color").unwrap().net.layers().len(), 88);
    assert_eq!(g.subnet("deform").unwrap().net.out_dim(), 6);
}

#[test]
fn forward_is_bounded_and_deterministic() {
    for variant in [Variant::Full, Variant::NoMlps, Variant::PointwiseDeform] {
        let m = DylinModel::<f32>::new(DylinConfig::desk().with_variant(variant)).unwrap();
        let cam = camera(6, 5);
        let a = m.render_frame(&cam, 0.4).unwrap();
        let b = m.render_frame(&cam, 0.4).unwrap();
        assert_eq!(a, b);
        assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
        let one = camera(1, 1);
        let px = m.render_frame(&one, 0.4).unwrap();
        let rgb = m.forward(&one.rays()[0], 0.4).unwrap();
        assert_eq!(px.data, rgb.to_vec());
    }
}

#[test]
fn render_matches_across_chunk_boundaries() {
    let m = DylinModel::<f32>::new(DylinConfig::tiny()).unwrap();
    let cam = camera(23, 17);
    let img = m.render_frame(&cam, 0.2).unwrap();
    let rays = cam.rays();
    for &i in &[0, 255, 256, 390] {
        let rgb = m.forward(&rays[i], 0.2).unwrap();
        for (px, v) in img.data[3 * i..3 * i + 3].iter().zip(rgb) {
            assert!((px - v).abs() < 1e-5);
        }
    }
}

#[test]
fn mask_projection_examples() {
    let m = MaskSet::from_raw(&[0.3, 0.2]);
    assert!((m.0[0] - 0.5).abs() < 1e-15 && m.0[1] == 0.3 && m.0[2] == 0.2);
    let m = MaskSet::from_raw(&[0.8, 0.8]);
    assert_eq!(m.0, vec![0.0, 0.5, 0.5]);
    let m = MaskSet::from_raw(&[0.0, 0.0]);
    assert_eq!(m.0, vec![1.0, 0.0, 0.0]);
}

#[test]
fn mask_simplex_holds_for_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..20 {
        let mut cfg = CodylinConfig::tiny(3);
        cfg.base.seed = seed;
        let mut m = CodylinModel::<f64>::new(cfg).unwrap();
        for p in m.params_mut() {
            *p *= rng.gen_range(0.5..4.0);
        }
        let (rs, ts, _) = rays(50, &mut rng);
        for (r, t) in rs.iter().zip(ts) {
            let alpha: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let ms = m.masks(r, t, &alpha).unwrap();
            assert!(ms.0.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((ms.sum() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn attribute_codes_are_independent() {
    let m = CodylinModel::<f32>::new(CodylinConfig::default()).unwrap();
    let r = Ray::new(Vec3::new(0.1, 0.2, 4.0), Vec3::new(0.0, -0.1, -1.0)).unwrap();
    let a = m.attr_codes(&r, 0.5, &[0.3, -0.2]).unwrap();
    let b = m.attr_codes(&r, 0.5, &[0.3, 0.9]).unwrap();
    assert_eq!(a.len(), 2);
    assert_eq!(a[0].len(), 8);
    assert_eq!(a[0], b[0]);
    assert_ne!(a[1], b[1]);
}

#[test]
fn attributes_are_validated() {
    let m = CodylinModel::<f32>::new(CodylinConfig::tiny(2)).unwrap();
    let r = Ray::new(Vec3::new(0.1, 0.2, 4.0), Vec3::new(0.0, -0.1, -1.0)).unwrap();
    assert!(matches!(
        m.forward(&r, 0.5, &[0.0, 1.5]),
        Err(crate::Error::AttributeOutOfRange { index: 1, .. })
    ));
    assert!(matches!(m.forward(&r, 0.5, &[0.0]), Err(crate::Error::ArityMismatch { .. })));
}

#[test]
fn zero_attribute_nets_give_zero_codes() {
    let mut m = CodylinModel::<f64>::new(CodylinConfig::tiny(2)).unwrap();
    let ranges: Vec<_> = ["attr0", "attr1"].iter().map(|n| m.graph().subnet(n).unwrap().range()).collect();
    for r in ranges {
        m.params_mut()[r].fill(0.0);
    }
    let r = Ray::new(Vec3::new(0.1, 0.2, 4.0), Vec3::new(0.0, -0.1, -1.0)).unwrap();
    let codes = m.attr_codes(&r, 0.5, &[0.7, -0.7]).unwrap();
    assert!(codes.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn no_attributes_reduces_to_dylin() {
    let cfg = CodylinConfig { n_attr: 0, ..CodylinConfig::default() };
    let co = CodylinModel::<f32>::new(cfg.clone()).unwrap();
    let dy = DylinModel::<f32>::new(cfg.base.clone()).unwrap();
    assert_eq!(co.n_params(), dy.n_params());
    assert_eq!(co.params(), dy.params());
    let cam = camera(5, 4);
    assert_eq!(co.render_with_masks(&cam, 0.6, &[]).unwrap().0, dy.render_frame(&cam, 0.6).unwrap());
}

#[test]
fn silent_attributes_match_dylin_with_matched_regressor() {
    let cfg = CodylinConfig::tiny(2);
    let mut co = CodylinModel::<f64>::new(cfg.clone()).unwrap();
    let dy = DylinModel::<f64>::new(cfg.base.clone()).unwrap();
    let g = co.graph().clone();
    for name in ["attr0", "attr1"] {
        co.params_mut()[g.subnet(name).unwrap().range()].fill(0.0);
    }
    for name in ["mask0", "mask1"] {
        let end = g.subnet(name).unwrap().range().end;
        co.params_mut()[end - 1] = -1e4;
    }
    for name in ["deform", "hyper"] {
        let src = dy.graph().subnet(name).unwrap().range();
        let dst = g.subnet(name).unwrap().range();
        co.params_mut()[dst].copy_from_slice(&dy.params()[src]);
    }
    let dc = dy.graph().subnet("color").unwrap();
    let cc = g.subnet("color").unwrap();
    let (din, cin) = (dc.net.in_dim(), cc.net.in_dim());
    let first_out = dc.net.layers()[0].out_dim;
    let dp = &dy.params()[dc.range()];
    let mut cp = vec![0.0; cc.net.param_count()];
    for row in 0..first_out {
        cp[row * cin..row * cin + din].copy_from_slice(&dp[row * din..(row + 1) * din]);
    }
    let dy_first = first_out * din + first_out;
    let co_first = first_out * cin + first_out;
    cp[first_out * cin..co_first].copy_from_slice(&dp[first_out * din..dy_first]);
    cp[co_first..].copy_from_slice(&dp[dy_first..]);
    co.params_mut()[cc.range()].copy_from_slice(&cp);
    let cam = camera(4, 3);
    for r in cam.rays() {
        let masks = co.masks(&r, 0.3, &[0.0, 0.0]).unwrap();
        assert_eq!(masks.0, vec![1.0, 0.0, 0.0]);
        let a = co.forward(&r, 0.3, &[0.0, 0.0]).unwrap();
        let b = dy.forward(&r, 0.3).unwrap();
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn mask_images_partition_unity() {
    let m = CodylinModel::<f32>::new(CodylinConfig::tiny(2)).unwrap();
    let cam = camera(7, 6);
    let (img, masks) = m.render_with_masks(&cam, 0.1, &[0.5, -0.5]).unwrap();
    assert_eq!(img.data.len(), 7 * 6 * 3);
    assert!(masks.simplex_error() < 1e-6);
    let one = camera(1, 1);
    let (px, mk) = m.render_with_masks(&one, 0.1, &[0.5, -0.5]).unwrap();
    let r = one.rays()[0];
    assert_eq!(px.data, m.forward(&r, 0.1, &[0.5, -0.5]).unwrap().to_vec());
    assert_eq!(mk.data, m.masks(&r, 0.1, &[0.5, -0.5]).unwrap().0);
}

#[test]
fn mask_loss_weight_zero_leaves_mask_nets_untouched_by_targets() {
    let cfg = CodylinConfig::tiny(2);
    let m = CodylinModel::<f64>::new(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (rs, ts, al) = rays(5, &mut rng);
    let b = m.batch(&rs, &ts, &al[..10], SampleMode::EvenlySpaced, &mut rng).unwrap();
    let target = vec![0.5; 15];
    let mut with = vec![0.0; m.n_params()];
    let mut without = vec![0.0; m.n_params()];
    let ones = vec![1.0; 15];
    m.loss_and_grad(&b, &target, Some(&ones), 0.0, &mut with).unwrap();
    m.loss_and_grad(&b, &target, None, 0.0, &mut without).unwrap();
    assert_eq!(with, without);
}
