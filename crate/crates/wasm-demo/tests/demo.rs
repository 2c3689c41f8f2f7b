use dylin::checkpoint::{self, AnyModel, Meta};
use dylin::model::{CodylinConfig, CodylinModel, DylinConfig, DylinModel};
use dylin_wasm_demo::{oracle_image, to_rgba, Viewer, MAX_SIDE};

fn bytes(model: AnyModel, scene: &str) -> Vec<u8> {
    let mut meta = Meta::new();
    meta.insert("scene".into(), scene.into());
    checkpoint::to_bytes(&model, &meta)
}

#[test]
fn oracle_frames_follow_time_and_angle() {
    let a = oracle_image("split", 0.0, &[], 0.0, 24).unwrap();
    let b = oracle_image("split", 1.0, &[], 0.0, 24).unwrap();
    let c = oracle_image("split", 1.0, &[], 40.0, 24).unwrap();
    assert_eq!((a.width, a.height), (24, 24));
    assert_ne!(a.data, b.data);
    assert_ne!(b.data, c.data);
    assert_eq!(oracle_image("split", 7.0, &[], 0.0, 24).unwrap().data, b.data);
}

#[test]
fn oracle_rejects_bad_inputs() {
    assert!(oracle_image("nowhere", 0.5, &[], 0.0, 8).is_err());
    assert!(oracle_image("split", 0.5, &[], 0.0, 0).is_err());
    assert!(oracle_image("split", 0.5, &[], 0.0, MAX_SIDE + 1).is_err());
    assert!(oracle_image("split", 0.5, &[], f64::NAN, 8).is_err());
}

#[test]
fn attributes_move_only_the_face_parts() {
    let rest = oracle_image("attrib-face", 0.5, &[0.0, 0.0], 0.0, 32).unwrap();
    let eye = oracle_image("attrib-face", 0.5, &[1.0, 0.0], 0.0, 32).unwrap();
    assert_ne!(rest.data, eye.data);
    // attribute vectors are padded and clamped to the scene's arity
    assert_eq!(oracle_image("attrib-face", 0.5, &[3.0], 0.0, 32).unwrap().data, eye.data);
}

#[test]
fn rgba_is_opaque_and_sized() {
    let img = oracle_image("orbiter", 0.3, &[], 10.0, 5).unwrap();
    let rgba = to_rgba(&img);
    assert_eq!(rgba.len(), 5 * 5 * 4);
    assert!(rgba.chunks(4).all(|p| p[3] == 255));
    assert_eq!(&rgba[..3], &img.to_rgb8()[..3]);
}

#[test]
fn viewer_renders_students_and_masks() {
    let dylin = Viewer::load(&bytes(DylinModel::<f32>::new(DylinConfig::tiny()).unwrap().into(), "orbiter")).unwrap();
    assert_eq!(dylin.scene(), "orbiter");
    assert_eq!(dylin.n_attr(), 0);
    let (img, masks) = dylin.render(0.5, &[], 0.0, 12).unwrap();
    assert_eq!(img.width, 12);
    assert!(masks.is_none());
    let (p, s) = dylin.compare(0.5, &[], 0.0, 12).unwrap();
    assert!(p.is_finite() && s.is_finite());

    let model = CodylinModel::<f32>::new(CodylinConfig::tiny(2)).unwrap();
    let codylin = Viewer::load(&bytes(model.into(), "attrib-face")).unwrap();
    assert_eq!(codylin.label(), "CoDyLiN");
    let (_, masks) = codylin.render(0.2, &[0.5, -0.5], 15.0, 10).unwrap();
    let masks = masks.unwrap();
    assert_eq!(masks.len(), 3);
    for px in 0..100 {
        let sum: f64 = masks.iter().map(|m| m.data[3 * px]).sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }
}

#[test]
fn viewer_rejects_garbage() {
    assert!(Viewer::load(b"not a checkpoint").is_err());
}
