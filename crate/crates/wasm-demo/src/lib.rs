//! Browser demo: the analytic scenes and trained students rendered into a canvas.
//!
//! The rendering logic lives in [`demo`] and is plain Rust; the `wasm-bindgen`
//! bindings are compiled only for `wasm32`.

pub mod demo;

pub use demo::{oracle_image, to_rgba, Viewer, MAX_SIDE};

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    use crate::demo;

    /// RGBA pixels of a built-in scene at time `t`, attributes `alpha`, camera azimuth `orbit_deg`.
    #[wasm_bindgen(js_name = renderOracle)]
    pub fn render_oracle(scene: &str, t: f64, alpha: Vec<f64>, orbit_deg: f64, size: usize) -> Result<Vec<u8>, JsError> {
        let img = demo::oracle_image(scene, t, &alpha, orbit_deg, size).map_err(|e| JsError::new(&e))?;
        Ok(demo::to_rgba(&img))
    }

    #[wasm_bindgen]
    pub struct Student(demo::Viewer);

    #[wasm_bindgen]
    impl Student {
        /// Parses checkpoint bytes written by `dylin distill` or `dylin finetune`.
        #[wasm_bindgen(constructor)]
        pub fn new(bytes: &[u8]) -> Result<Student, JsError> {
            demo::Viewer::load(bytes).map(Student).map_err(|e| JsError::new(&e))
        }

        #[wasm_bindgen(getter)]
        pub fn label(&self) -> String {
            self.0.label()
        }

        #[wasm_bindgen(getter)]
        pub fn scene(&self) -> String {
            self.0.scene().to_string()
        }

        #[wasm_bindgen(getter, js_name = nAttr)]
        pub fn n_attr(&self) -> usize {
            self.0.n_attr()
        }

        /// RGBA frame; when `mask_slot` is set, that attribute mask is shown in gray instead.
        pub fn render(
            &self,
            t: f64,
            alpha: Vec<f64>,
            orbit_deg: f64,
            size: usize,
            mask_slot: Option<usize>,
        ) -> Result<Vec<u8>, JsError> {
            let (img, masks) = self.0.render(t, &alpha, orbit_deg, size).map_err(|e| JsError::new(&e))?;
            let shown = match (mask_slot, masks) {
                (Some(s), Some(m)) => m.into_iter().nth(s).ok_or_else(|| JsError::new("mask slot out of range"))?,
                (Some(_), None) => return Err(JsError::new("this checkpoint has no attribute masks")),
                (None, _) => img,
            };
            Ok(demo::to_rgba(&shown))
        }

        /// `[psnr, ssim]` against the analytic frame.
        pub fn compare(&self, t: f64, alpha: Vec<f64>, orbit_deg: f64, size: usize) -> Result<Vec<f64>, JsError> {
            let (p, s) = self.0.compare(t, &alpha, orbit_deg, size).map_err(|e| JsError::new(&e))?;
            Ok(vec![p, s])
        }
    }
}
