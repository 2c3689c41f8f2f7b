#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dylin::checkpoint::{self, AnyModel, Meta};
use dylin::model::{CodylinConfig, CodylinModel, DylinConfig, DylinModel};
use dylin::pipeline::ExperimentConfig;
use dylin::train::TrainConfig;

pub fn dylin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dylin"))
}

pub fn run(args: &[&str]) -> Output {
    dylin().args(args).output().expect("spawn dylin")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn tiny_experiment() -> ExperimentConfig {
    let train = TrainConfig { iters: 12, batch: 32, warmup: 2, ..TrainConfig::default() };
    ExperimentConfig {
        width: 12,
        height: 12,
        n_train_views: 3,
        n_held_out: 2,
        samples: 256,
        model: DylinConfig::tiny(),
        distill: train.clone(),
        finetune: TrainConfig { iters: 6, ..train },
        ..ExperimentConfig::default()
    }
}

pub fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn meta(scene: &str) -> Meta {
    let mut m = Meta::new();
    m.insert("scene".into(), scene.into());
    m
}

pub fn save_dylin(dir: &Path, name: &str, scene: &str, seed: u64) -> PathBuf {
    let cfg = DylinConfig { seed, ..DylinConfig::tiny() };
    let model = AnyModel::from(DylinModel::<f32>::new(cfg).unwrap());
    let path = dir.join(format!("{name}.dylin"));
    checkpoint::save(&path, &model, &meta(scene)).unwrap();
    path
}

pub fn save_codylin(dir: &Path, name: &str) -> PathBuf {
    let model = AnyModel::from(CodylinModel::<f32>::new(CodylinConfig::tiny(2)).unwrap());
    let path = dir.join(format!("{name}.codylin"));
    checkpoint::save(&path, &model, &meta("attrib-face")).unwrap();
    path
}
