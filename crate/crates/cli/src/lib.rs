//! The `dylin` command line: pipeline stages and the render service.

pub mod camera;
mod commands;
pub mod server;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Exit code for invalid usage.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for failures while running a valid command.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "dylin", version, about = "Dynamic light field networks: distill, render, evaluate and serve")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Scene from the built-in catalog (orbiter, split, attrib-face, blank).
    #[arg(long, global = true)]
    pub scene: Option<String>,
    /// Base seed for model initialization, sampling and the teacher.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment configuration JSON; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (or file, for `render`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the integration-based teacher on the scene.
    Teach {
        #[arg(long)]
        iters: Option<usize>,
        /// Quadrature samples per ray.
        #[arg(long)]
        quad: Option<usize>,
    },
    /// Generate a distillation dataset.
    Gen {
        #[arg(long)]
        samples: Option<usize>,
        /// Teacher file from `teach`; the exact scene oracle when omitted.
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Distill a student from a dataset.
    Distill {
        /// Dataset from `gen`; generated on the fly when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// full, nomlps or pointwise.
        #[arg(long, default_value = "full")]
        variant: String,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Fine-tune a student on the training views.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Render frames to PNG files.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[arg(long, default_value = "64x64")]
        size: String,
        /// `front`, `orbit:<degrees>` or camera JSON (raw or base64).
        #[arg(long, default_value = "front")]
        cam: String,
        /// Comma-separated attribute values.
        #[arg(long, default_value = "")]
        alpha: String,
        /// Render a time sweep of this many frames into the output directory.
        #[arg(long)]
        frames: Option<usize>,
        /// Also write one mask image per attribute slot.
        #[arg(long)]
        masks: bool,
    },
    /// Score checkpoints on held-out views against the oracle.
    Eval {
        #[arg(long, required = true, num_args = 1..)]
        ckpt: Vec<PathBuf>,
        #[arg(long)]
        size: Option<String>,
    },
    /// Train Full, NoMlps and PointwiseDeform students and compare them.
    Ablate {
        /// Comma-separated seeds.
        #[arg(long, default_value = "0")]
        seeds: String,
        /// Comma-separated variants.
        #[arg(long, default_value = "full,nomlps,pointwise")]
        variants: String,
    },
    /// Time student and teacher frames at matched resolution.
    Bench {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        quad: usize,
        #[arg(long, default_value = "128x128")]
        size: String,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Serve checkpoints over HTTP.
    Serve {
        #[arg(long, required = true, num_args = 1..)]
        ckpt: Vec<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `dylin --help` for usage");
            EXIT_USAGE
        }
        Err(commands::Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}
