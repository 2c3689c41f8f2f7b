//! Distillation datasets and student training.

mod dataset;
mod distill;

pub use dataset::{
    generate_kd_dataset, pixel_dataset, render_parallel, DatasetMeta, DistillDataset, DistillSample, Teacher,
    DATASET_MAGIC,
};
pub use distill::{distill, finetune, finetune_frames, init_color_bias, mine_hard_examples, LossCurve, TrainConfig};
