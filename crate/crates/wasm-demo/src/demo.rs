use dylin::checkpoint::{self, AnyModel};
use dylin::image::Image;
use dylin::metrics::{psnr, ssim};
use dylin::model::{render_view, RayModel};
use dylin::ray::{Camera, TimeStamp};
use dylin::scene::{oracle_frame, orbit_camera, scene_by_name, OracleScene};

/// Largest canvas side the page may request.
pub const MAX_SIDE: usize = 256;

pub type DemoResult<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn camera(scene: &OracleScene, orbit_deg: f64, size: usize) -> DemoResult<Camera> {
    if size == 0 || size > MAX_SIDE {
        return Err(format!("size must be in 1..={MAX_SIDE}"));
    }
    if !orbit_deg.is_finite() {
        return Err("orbit angle must be finite".into());
    }
    Ok(orbit_camera(scene, orbit_deg, size, size))
}

fn fit_alpha(n_attr: usize, alpha: &[f64]) -> Vec<f64> {
    (0..n_attr).map(|i| alpha.get(i).copied().unwrap_or(0.0).clamp(-1.0, 1.0)).collect()
}

/// RGBA bytes ready for a canvas `ImageData`.
pub fn to_rgba(img: &Image) -> Vec<u8> {
    img.to_rgb8().chunks(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// Exact analytic frame of a built-in scene.
pub fn oracle_image(scene: &str, t: f64, alpha: &[f64], orbit_deg: f64, size: usize) -> DemoResult<Image> {
    let scene = scene_by_name(scene).map_err(err)?;
    let cam = camera(&scene, orbit_deg, size)?;
    let t = TimeStamp::clamped(t).0.get();
    let alpha = fit_alpha(scene.n_attr(), alpha);
    Image::new(size, size, oracle_frame(&scene, &cam, t, &alpha)).map_err(err)
}

/// A loaded student checkpoint together with the scene it was trained on.
pub struct Viewer {
    model: AnyModel,
    scene: OracleScene,
}

impl Viewer {
    pub fn load(bytes: &[u8]) -> DemoResult<Viewer> {
        let (model, meta) = checkpoint::from_bytes(bytes).map_err(err)?;
        let name = meta.get("scene").and_then(|v| v.as_str()).unwrap_or("split");
        let scene = scene_by_name(name).map_err(err)?;
        Ok(Viewer { model, scene })
    }

    pub fn label(&self) -> String {
        self.model.label()
    }

    pub fn scene(&self) -> &str {
        &self.scene.name
    }

    pub fn n_attr(&self) -> usize {
        self.model.n_attr()
    }

    /// Student frame, plus the attribute masks (slot-major) for controllable models.
    pub fn render(&self, t: f64, alpha: &[f64], orbit_deg: f64, size: usize) -> DemoResult<(Image, Option<Vec<Image>>)> {
        let cam = camera(&self.scene, orbit_deg, size)?;
        let t = TimeStamp::clamped(t).0.get();
        let alpha = fit_alpha(self.n_attr(), alpha);
        let (img, masks) = render_view(&self.model, &cam, t, &alpha).map_err(err)?;
        let masks = match masks {
            Some(m) => Some(
                (0..=m.n_attr)
                    .map(|s| Image::from_gray(m.width, m.height, m.slot(s)))
                    .collect::<dylin::Result<Vec<_>>>()
                    .map_err(err)?,
            ),
            None => None,
        };
        Ok((img, masks))
    }

    /// PSNR and SSIM of the student against the analytic frame of its scene.
    pub fn compare(&self, t: f64, alpha: &[f64], orbit_deg: f64, size: usize) -> DemoResult<(f64, f64)> {
        let (student, _) = self.render(t, alpha, orbit_deg, size)?;
        let truth = oracle_image(&self.scene.name, t, alpha, orbit_deg, size)?;
        Ok((psnr(&student, &truth).map_err(err)?, ssim(&student, &truth).map_err(err)?))
    }
}
