//! End-to-end experiments: teacher, distillation, fine-tuning, evaluation and timing.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::AnyModel;
use crate::image::Image;
use crate::metrics::{ms_ssim, ms_ssim_scales, psnr, ssim};
use crate::model::{render_view, AttrDims, CodylinConfig, CodylinModel, DylinConfig, DylinModel, RayModel, Variant};
use crate::ray::{infer_bounds, Camera, RayBounds, SampleMode};
use crate::scene::{
    oracle_frame, scene_by_name, train_integration_teacher, Frame, IntegrationTeacher, OracleScene, Rig,
    TeacherConfig,
};
use crate::train::{
    distill, finetune_frames, generate_kd_dataset, init_color_bias, render_parallel, DistillDataset, LossCurve, Teacher, TrainConfig,
};
use crate::{Error, Result};

/// Which model labels the distillation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherChoice {
    Oracle,
    Integration(TeacherConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scene: String,
    pub width: usize,
    pub height: usize,
    pub n_train_views: usize,
    pub n_held_out: usize,
    /// Size of the distillation set.
    pub samples: usize,
    pub model: DylinConfig,
    /// Attribute networks; used when the scene has attributes.
    pub attr: AttrDims,
    pub teacher: TeacherChoice,
    pub distill: TrainConfig,
    pub finetune: TrainConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: "split".into(),
            width: 64,
            height: 64,
            n_train_views: 12,
            n_held_out: 4,
            samples: 20_000,
            model: DylinConfig::desk(),
            attr: AttrDims::default(),
            teacher: TeacherChoice::Oracle,
            distill: TrainConfig { iters: 3000, ..TrainConfig::default() },
            finetune: TrainConfig {
                iters: 1500,
                lr: 5e-4,
                warmup: 0,
                sample_mode: SampleMode::StratifiedRandom,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn scene(&self) -> Result<OracleScene> {
        scene_by_name(&self.scene)
    }

    pub fn rig(&self, scene: &OracleScene) -> Rig {
        Rig::sweep(scene, self.n_train_views, self.n_held_out, self.width, self.height)
    }

    /// Sampling box of training rays, inferred from the training views.
    pub fn bounds(&self, scene: &OracleScene) -> Result<RayBounds> {
        infer_bounds(&self.rig(scene).train_cameras())
    }

    /// Copy with every seed derived from `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.model.seed = seed;
        c.distill.seed = seed.wrapping_add(1);
        c.finetune.seed = seed.wrapping_add(2);
        if let TeacherChoice::Integration(t) = &mut c.teacher {
            t.seed = seed.wrapping_add(3);
        }
        c
    }
}

/// Image quality of one rendered view against the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub view: usize,
    pub t: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
}

pub fn mean_psnr(scores: &[ViewScore]) -> f64 {
    scores.iter().map(|s| s.psnr).sum::<f64>() / scores.len().max(1) as f64
}

/// Scores renders of `frames` against exact oracle frames.
pub fn evaluate<M: RayModel<f32> + ?Sized>(
    model: &M,
    scene: &OracleScene,
    frames: &[Frame],
    alpha: &[f64],
) -> Result<Vec<ViewScore>> {
    frames
        .iter()
        .enumerate()
        .map(|(view, f)| {
            let (img, _) = render_view(model, &f.camera, f.t, alpha)?;
            let truth = Image::new(f.camera.width, f.camera.height, oracle_frame(scene, &f.camera, f.t, alpha))?;
            Ok(ViewScore { view, t: f.t, psnr: psnr(&img, &truth)?, ssim: ssim(&img, &truth)?, ms_ssim: ms_ssim(&img, &truth)? })
        })
        .collect()
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scene: String,
    pub variant: String,
    pub seed: u64,
    pub view: usize,
    pub t: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
}

impl EvalRow {
    pub fn from_scores(scene: &str, variant: &str, seed: u64, scores: &[ViewScore]) -> Vec<EvalRow> {
        scores
            .iter()
            .map(|s| EvalRow {
                scene: scene.into(),
                variant: variant.into(),
                seed,
                view: s.view,
                t: s.t,
                psnr: s.psnr,
                ssim: s.ssim,
                ms_ssim: s.ms_ssim,
            })
            .collect()
    }
}

pub fn write_eval_csv<W: Write>(rows: &[EvalRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    out.flush()?;
    Ok(())
}

/// Sidecar metadata of an evaluation report.
pub fn eval_meta(width: usize, height: usize) -> serde_json::Value {
    serde_json::json!({
        "ms_ssim_scales": ms_ssim_scales(width, height),
        "ms_ssim_weights": "standard five-scale weights, renormalized over the scales used",
        "lpips": null,
    })
}

/// Everything one experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub model: AnyModel,
    pub kd_curve: LossCurve,
    pub ft_curve: LossCurve,
    /// Held-out scores after distillation only.
    pub distilled: Vec<ViewScore>,
    /// Held-out scores after fine-tuning; equal to `distilled` for
    /// controllable models, which are not fine-tuned.
    pub finetuned: Vec<ViewScore>,
}

/// Builds the teacher and the distillation set of an experiment.
pub fn build_dataset(cfg: &ExperimentConfig, scene: &OracleScene) -> Result<DistillDataset> {
    let bounds = cfg.bounds(scene)?;
    let n_attr = scene.n_attr();
    match &cfg.teacher {
        TeacherChoice::Oracle => generate_kd_dataset(&Teacher::Oracle(scene), &bounds, cfg.samples, cfg.seed, n_attr),
        TeacherChoice::Integration(tc) => {
            let teacher = train_integration_teacher(scene, &bounds, tc.clone())?;
            generate_kd_dataset(&Teacher::Integration(&teacher, scene), &bounds, cfg.samples, cfg.seed, n_attr)
        }
    }
}

pub fn fresh_model(cfg: &ExperimentConfig, variant: Variant, n_attr: usize) -> Result<AnyModel> {
    let base = cfg.model.clone().with_variant(variant);
    Ok(if n_attr > 0 {
        CodylinModel::new(CodylinConfig { base, n_attr, attr: cfg.attr.clone() })?.into()
    } else {
        DylinModel::new(base)?.into()
    })
}

/// Training frames with one attribute vector each (zeros without attributes).
pub fn training_frames(cfg: &ExperimentConfig, scene: &OracleScene) -> (Vec<(Camera, f64)>, Vec<Vec<f64>>) {
    let rig = cfg.rig(scene);
    let n = scene.n_attr();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x00f4_a3e5);
    let frames = rig.train.iter().map(|f| (f.camera, f.t)).collect();
    let alphas = rig
        .train
        .iter()
        .map(|_| (0..n).map(|_| if n > 0 { rng.gen_range(-1.0..=1.0) } else { 0.0 }).collect())
        .collect();
    (frames, alphas)
}

/// Distills a fresh student from `data`, then fine-tunes it on the training
/// views unless the scene has attributes.
pub fn run_experiment(cfg: &ExperimentConfig, variant: Variant, data: &DistillDataset) -> Result<ExperimentResult> {
    let scene = cfg.scene()?;
    let n_attr = scene.n_attr();
    let mut model = fresh_model(cfg, variant, n_attr)?;
    init_color_bias(&mut model, data);
    let kd_curve = distill(&mut model, data, &cfg.distill)?;
    let held_out = cfg.rig(&scene).held_out;
    let zero = vec![0.0; n_attr];
    let distilled = evaluate(&model, &scene, &held_out, &zero)?;
    if n_attr > 0 {
        let finetuned = distilled.clone();
        return Ok(ExperimentResult { model, kd_curve, ft_curve: LossCurve::default(), distilled, finetuned });
    }
    let (frames, alphas) = training_frames(cfg, &scene);
    let ft_curve = finetune_frames(&mut model, &scene, &frames, &alphas, &cfg.finetune)?;
    let finetuned = evaluate(&model, &scene, &held_out, &zero)?;
    Ok(ExperimentResult { model, kd_curve, ft_curve, distilled, finetuned })
}

/// Frame times of a student and an integration teacher at one resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub n_quad: usize,
    pub student_ms: f64,
    pub teacher_ms: f64,
    pub speedup: f64,
}

fn best_of<F: FnMut() -> Result<()>>(repeats: usize, mut f: F) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        f()?;
        best = best.min(t0.elapsed().as_secs_f64() * 1e3);
    }
    Ok(best)
}

/// Times full-frame renders; the fastest of `repeats` runs is reported.
pub fn bench<M: RayModel<f32> + ?Sized>(
    student: &M,
    teacher: &IntegrationTeacher<f32>,
    cam: &Camera,
    t: f64,
    repeats: usize,
) -> Result<BenchReport> {
    let alpha = vec![0.0; student.n_attr()];
    let student_ms = best_of(repeats, || render_view(student, cam, t, &alpha).map(|_| ()))?;
    let rays = cam.rays();
    let ts = vec![t; rays.len()];
    let teacher_ms = best_of(repeats, || render_parallel(teacher, &rays, &ts).map(|_| ()))?;
    Ok(BenchReport {
        width: cam.width,
        height: cam.height,
        n_quad: teacher.config.n_quad,
        student_ms,
        teacher_ms,
        speedup: teacher_ms / student_ms,
    })
}
