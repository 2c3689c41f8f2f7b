use std::fs;
use std::path::{Path, PathBuf};

use dylin::checkpoint::{self, AnyModel, Meta};
use dylin::image::{write_image, Image};
use dylin::model::{check_alpha, render_view, RayModel, Variant};
use dylin::pipeline::{
    bench, build_dataset, eval_meta, evaluate, fresh_model, mean_psnr, run_experiment, training_frames,
    write_eval_csv, EvalRow, ExperimentConfig, TeacherChoice,
};
use dylin::ray::TimeStamp;
use dylin::scene::{scene_by_name, train_integration_teacher, IntegrationTeacher, OracleScene, TeacherConfig};
use dylin::train::{distill, finetune_frames, generate_kd_dataset, init_color_bias, DistillDataset, Teacher};

use crate::camera::{parse_alpha, parse_camera, parse_size};
use crate::{server, Cli, Command, Global};

pub(crate) enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<dylin::Error> for Failure {
    fn from(e: dylin::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

struct Ctx {
    cfg: ExperimentConfig,
    scene_flag: bool,
    out: PathBuf,
}

impl Ctx {
    fn new(g: &Global) -> Outcome<Self> {
        let mut cfg = match &g.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(scene) = &g.scene {
            cfg.scene = scene.clone();
        }
        let seed = g.seed.unwrap_or(cfg.seed);
        cfg = cfg.with_seed(seed);
        scene_by_name(&cfg.scene).map_err(|e| usage(e.to_string()))?;
        Ok(Ctx { cfg, scene_flag: g.scene.is_some(), out: g.out.clone().unwrap_or_else(|| PathBuf::from("out")) })
    }

    fn scene(&self) -> Outcome<OracleScene> {
        Ok(self.cfg.scene()?)
    }

    /// Scene recorded in a checkpoint unless `--scene` was given.
    fn scene_for(&self, meta: &Meta) -> Outcome<OracleScene> {
        match meta.get("scene").and_then(|v| v.as_str()) {
            Some(name) if !self.scene_flag => Ok(scene_by_name(name)?),
            _ => self.scene(),
        }
    }

    fn out_dir(&self) -> Outcome<&Path> {
        fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

fn parse_variant(s: &str) -> Outcome<Variant> {
    Variant::parse(s).ok_or_else(|| usage(format!("unknown variant {s:?} (full, nomlps, pointwise)")))
}

fn extension(model: &AnyModel) -> &'static str {
    match model {
        AnyModel::Dylin(_) => "dylin",
        AnyModel::Codylin(_) => "codylin",
    }
}

fn write_csv_file(path: &Path, curve: &dylin::train::LossCurve) -> Outcome {
    curve.write_csv(fs::File::create(path)?)?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Outcome<(AnyModel, Meta)> {
    Ok(checkpoint::load(path)?)
}

pub(crate) fn dispatch(cli: Cli) -> Outcome {
    let ctx = Ctx::new(&cli.global)?;
    match cli.command {
        Command::Teach { iters, quad } => teach(&ctx, iters, quad),
        Command::Gen { samples, teacher } => gen(&ctx, samples, teacher.as_deref()),
        Command::Distill { data, variant, iters } => run_distill(&ctx, data.as_deref(), &variant, iters),
        Command::Finetune { ckpt, iters } => run_finetune(&ctx, &ckpt, iters),
        Command::Render { ckpt, t, size, cam, alpha, frames, masks } => {
            render(&ctx, &ckpt, t, &size, &cam, &alpha, frames, masks)
        }
        Command::Eval { ckpt, size } => eval(&ctx, &ckpt, size.as_deref()),
        Command::Ablate { seeds, variants } => ablate(&ctx, &seeds, &variants),
        Command::Bench { ckpt, teacher, quad, size, repeats } => {
            run_bench(&ctx, ckpt.as_deref(), teacher.as_deref(), quad, &size, repeats)
        }
        Command::Serve { ckpt, port, host } => serve(&ckpt, &host, port),
    }
}

fn teacher_config(ctx: &Ctx) -> TeacherConfig {
    match &ctx.cfg.teacher {
        TeacherChoice::Integration(t) => t.clone(),
        TeacherChoice::Oracle => TeacherConfig { seed: ctx.cfg.seed.wrapping_add(3), ..TeacherConfig::default() },
    }
}

fn teach(ctx: &Ctx, iters: Option<usize>, quad: Option<usize>) -> Outcome {
    let scene = ctx.scene()?;
    let mut tc = teacher_config(ctx);
    if let Some(i) = iters {
        tc.iters = i;
    }
    if let Some(q) = quad {
        tc.n_quad = q;
    }
    let teacher = train_integration_teacher(&scene, &ctx.cfg.bounds(&scene)?, tc)?;
    let out = ctx.out_dir()?;
    checkpoint::save_teacher(&out.join("teacher.bin"), &teacher)?;
    let mut csv = String::from("iter,loss\n");
    for (i, l) in teacher.loss_curve.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    fs::write(out.join("teacher_loss.csv"), csv)?;
    println!(
        "teacher trained on {}: loss {:.6} -> {:.6}, wrote {}",
        scene.name,
        teacher.initial_loss,
        teacher.final_loss,
        out.join("teacher.bin").display()
    );
    Ok(())
}

fn gen(ctx: &Ctx, samples: Option<usize>, teacher_path: Option<&Path>) -> Outcome {
    let scene = ctx.scene()?;
    let s = samples.unwrap_or(ctx.cfg.samples);
    if s == 0 {
        return Err(usage("--samples must be positive"));
    }
    let bounds = ctx.cfg.bounds(&scene)?;
    let loaded;
    let teacher = match teacher_path {
        Some(p) => {
            loaded = checkpoint::load_teacher(p)?;
            Teacher::Integration(&loaded, &scene)
        }
        None => Teacher::Oracle(&scene),
    };
    let ds = generate_kd_dataset(&teacher, &bounds, s, ctx.cfg.seed, scene.n_attr())?;
    let path = ctx.out_dir()?.join("kd.dlkd");
    ds.save(&path)?;
    println!("wrote {} samples ({} teacher) to {}", ds.len(), ds.meta.teacher, path.display());
    Ok(())
}

fn run_distill(ctx: &Ctx, data: Option<&Path>, variant: &str, iters: Option<usize>) -> Outcome {
    let variant = parse_variant(variant)?;
    let scene = ctx.scene()?;
    let ds = match data {
        Some(p) => DistillDataset::load(p)?,
        None => build_dataset(&ctx.cfg, &scene)?,
    };
    if ds.n_attr() > 0 && variant != Variant::Full {
        return Err(usage("attribute datasets train the controllable model, which requires --variant full"));
    }
    let mut tc = ctx.cfg.distill.clone();
    if let Some(i) = iters {
        tc.iters = i;
    }
    let mut model = fresh_model(&ctx.cfg, variant, ds.n_attr())?;
    init_color_bias(&mut model, &ds);
    let curve = distill(&mut model, &ds, &tc)?;
    let out = ctx.out_dir()?;
    let mut meta = Meta::new();
    meta.insert("scene".into(), ds.meta.scene.clone().into());
    meta.insert("teacher".into(), ds.meta.teacher.clone().into());
    meta.insert("phase".into(), "distilled".into());
    meta.insert("seed".into(), ctx.cfg.seed.into());
    meta.insert("samples".into(), ds.len().into());
    let path = out.join(format!("student.{}", extension(&model)));
    checkpoint::save(&path, &model, &meta)?;
    write_csv_file(&out.join("distill_loss.csv"), &curve)?;
    println!(
        "{} distilled: first-epoch loss {:.6}, last-epoch loss {:.6}, wrote {}",
        model.label(),
        curve.first_epoch().unwrap_or(f64::NAN),
        curve.last_epoch().unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

fn run_finetune(ctx: &Ctx, ckpt: &Path, iters: Option<usize>) -> Outcome {
    let (mut model, mut meta) = load_checkpoint(ckpt)?;
    if model.n_attr() > 0 {
        return Err(usage("CoDyLiN checkpoints are distilled only and cannot be fine-tuned"));
    }
    let scene = ctx.scene_for(&meta)?;
    if scene.n_attr() != model.n_attr() {
        return Err(usage(format!(
            "checkpoint has {} attributes, scene {} has {}",
            model.n_attr(),
            scene.name,
            scene.n_attr()
        )));
    }
    let mut cfg = ctx.cfg.clone();
    cfg.scene = scene.name.clone();
    let mut tc = cfg.finetune.clone();
    if let Some(i) = iters {
        tc.iters = i;
    }
    let (frames, alphas) = training_frames(&cfg, &scene);
    let curve = finetune_frames(&mut model, &scene, &frames, &alphas, &tc)?;
    let out = ctx.out_dir()?;
    meta.insert("phase".into(), "finetuned".into());
    meta.insert("finetuned_from".into(), ckpt.display().to_string().into());
    let path = out.join(format!("finetuned.{}", extension(&model)));
    checkpoint::save(&path, &model, &meta)?;
    write_csv_file(&out.join("finetune_loss.csv"), &curve)?;
    println!(
        "fine-tuned on {} views: loss {:.6} -> {:.6}, wrote {}",
        frames.len(),
        curve.head_mean(10),
        curve.tail_mean(10),
        path.display()
    );
    Ok(())
}

fn save_masks(dir: &Path, stem: &str, masks: &dylin::scene::AttributeMaskImage) -> Outcome {
    for slot in 0..=masks.n_attr {
        let img = Image::from_gray(masks.width, masks.height, masks.slot(slot))?;
        write_image(&dir.join(format!("{stem}_mask{slot}.png")), &img)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn render(
    ctx: &Ctx,
    ckpt: &Path,
    t: f64,
    size: &str,
    cam: &str,
    alpha: &str,
    frames: Option<usize>,
    masks: bool,
) -> Outcome {
    let (w, h) = parse_size(size).map_err(usage)?;
    let alpha = parse_alpha(alpha).map_err(usage)?;
    let (model, meta) = load_checkpoint(ckpt)?;
    let alpha = if alpha.is_empty() { vec![0.0; model.n_attr()] } else { alpha };
    check_alpha(model.n_attr(), &alpha).map_err(|e| usage(e.to_string()))?;
    let scene = ctx.scene_for(&meta)?;
    let camera = parse_camera(cam, &scene, w, h).map_err(usage)?;
    let times: Vec<f64> = match frames {
        Some(0) => return Err(usage("--frames must be positive")),
        Some(n) => (0..n).map(|i| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 }).collect(),
        None => {
            let (ts, clamped) = TimeStamp::clamped(t);
            if clamped {
                eprintln!("warning: t = {t} clamped to {}", ts.get());
            }
            vec![ts.get()]
        }
    };
    let single_file = frames.is_none() && ctx.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let (dir, stem_for): (PathBuf, Box<dyn Fn(usize) -> String>) = if single_file {
        let dir = ctx.out.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = ctx.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        (dir, Box::new(move |_| stem.clone()))
    } else {
        (ctx.out.clone(), Box::new(|i| format!("frame_{i:03}")))
    };
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(&dir)?;
    }
    for (i, &tv) in times.iter().enumerate() {
        let (img, mask_img) = render_view(&model, &camera, tv, &alpha)?;
        let stem = stem_for(i);
        let path = dir.join(format!("{stem}.png"));
        write_image(&path, &img)?;
        if masks {
            match &mask_img {
                Some(m) => save_masks(&dir, &stem, m)?,
                None => return Err(usage("--masks needs a controllable (CoDyLiN) checkpoint")),
            }
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn eval(ctx: &Ctx, ckpts: &[PathBuf], size: Option<&str>) -> Outcome {
    let size = size.map(parse_size).transpose().map_err(usage)?;
    let mut rows = Vec::new();
    let mut dims = (ctx.cfg.width, ctx.cfg.height);
    for path in ckpts {
        let (model, meta) = load_checkpoint(path)?;
        let scene = ctx.scene_for(&meta)?;
        let mut cfg = ctx.cfg.clone();
        if let Some((w, h)) = size {
            cfg.width = w;
            cfg.height = h;
        }
        dims = (cfg.width, cfg.height);
        let frames = cfg.rig(&scene).held_out;
        let scores = evaluate(&model, &scene, &frames, &vec![0.0; model.n_attr()])?;
        let seed = meta.get("seed").and_then(|v| v.as_u64()).unwrap_or(cfg.seed);
        println!("{}: {} mean held-out PSNR {:.3} dB", path.display(), model.label(), mean_psnr(&scores));
        rows.extend(EvalRow::from_scores(&scene.name, &model.label(), seed, &scores));
    }
    let out = ctx.out_dir()?;
    write_eval_csv(&rows, fs::File::create(out.join("eval.csv"))?)?;
    fs::write(out.join("eval.meta.json"), serde_json::to_vec_pretty(&eval_meta(dims.0, dims.1)).expect("json"))?;
    println!("wrote {}", out.join("eval.csv").display());
    Ok(())
}

fn ablate(ctx: &Ctx, seeds: &str, variants: &str) -> Outcome {
    let seeds: Vec<u64> = seeds
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| usage(format!("bad seed {s:?}"))))
        .collect::<Outcome<_>>()?;
    let variants: Vec<Variant> = variants.split(',').map(|v| parse_variant(v.trim())).collect::<Outcome<_>>()?;
    let scene = ctx.scene()?;
    if scene.n_attr() > 0 {
        return Err(usage("ablation compares uncontrolled variants; pick a scene without attributes"));
    }
    let out = ctx.out_dir()?.to_path_buf();
    let mut rows = Vec::new();
    println!("{:<16} {:>6} {:>14} {:>14}", "variant", "seed", "distilled dB", "fine-tuned dB");
    for &seed in &seeds {
        let cfg = ctx.cfg.with_seed(seed);
        let data = build_dataset(&cfg, &scene)?;
        for &v in &variants {
            let r = run_experiment(&cfg, v, &data)?;
            println!("{:<16} {:>6} {:>14.3} {:>14.3}", v.name(), seed, mean_psnr(&r.distilled), mean_psnr(&r.finetuned));
            rows.extend(EvalRow::from_scores(&scene.name, &format!("{}-distilled", v.name()), seed, &r.distilled));
            rows.extend(EvalRow::from_scores(&scene.name, v.name(), seed, &r.finetuned));
            write_csv_file(&out.join(format!("loss_{}_{seed}.csv", v.name())), &r.kd_curve)?;
        }
    }
    write_eval_csv(&rows, fs::File::create(out.join("ablation.csv"))?)?;
    fs::write(
        out.join("ablation.meta.json"),
        serde_json::to_vec_pretty(&eval_meta(ctx.cfg.width, ctx.cfg.height)).expect("json"),
    )?;
    println!("wrote {}", out.join("ablation.csv").display());
    Ok(())
}

fn run_bench(ctx: &Ctx, ckpt: Option<&Path>, teacher: Option<&Path>, quad: usize, size: &str, repeats: usize) -> Outcome {
    let (w, h) = parse_size(size).map_err(usage)?;
    if quad == 0 {
        return Err(usage("--quad must be positive"));
    }
    let (student, meta) = match ckpt {
        Some(p) => load_checkpoint(p)?,
        None => (fresh_model(&ctx.cfg, Variant::Full, 0)?, Meta::new()),
    };
    let mut teacher = match teacher {
        Some(p) => checkpoint::load_teacher(p)?,
        None => IntegrationTeacher::<f32>::new(teacher_config(ctx))?,
    };
    teacher.config.n_quad = quad;
    let scene = ctx.scene_for(&meta)?;
    let cam = parse_camera("front", &scene, w, h).map_err(usage)?;
    let report = bench(&student, &teacher, &cam, 0.5, repeats)?;
    let json = serde_json::to_string_pretty(&report).expect("json");
    println!("{json}");
    println!(
        "student {:.1} ms/frame, teacher {:.1} ms/frame ({} samples/ray), teacher/student = {:.1}",
        report.student_ms, report.teacher_ms, report.n_quad, report.speedup
    );
    fs::write(ctx.out_dir()?.join("bench.json"), json)?;
    Ok(())
}

fn serve(ckpts: &[PathBuf], host: &str, port: u16) -> Outcome {
    let mut entries = Vec::new();
    for path in ckpts {
        let (model, meta) = load_checkpoint(path)?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
        if entries.iter().any(|e: &server::Entry| e.id == id) {
            return Err(usage(format!("duplicate checkpoint id {id:?}")));
        }
        let scene_name = meta.get("scene").and_then(|v| v.as_str()).unwrap_or("split").to_string();
        let scene = scene_by_name(&scene_name).or_else(|_| scene_by_name("split"))?;
        entries.push(server::Entry { id, model, scene });
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| Failure::Runtime(format!("cannot listen on {host}:{port}: {e}")))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        server::serve(listener, entries).await.map_err(|e| Failure::Runtime(e.to_string()))
    })
}
