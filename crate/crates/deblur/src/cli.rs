//! Command-line front end.
//!
//! Exit codes: 0 success, 1 domain error (bad data, non-finite loss, failed
//! gradient check), 2 usage error. Diagnostics go to stderr; data and
//! written paths go to stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deblur_core::graddiff::{finite_diff_check, gradient_check_setup};
use deblur_core::metrics::Restorer;
use deblur_core::training::TrainConfig;
use deblur_core::unroll::TvPreset;

use crate::dataset::{build_dataset, build_synthetic_dataset, load_kernel_dir, KernelBank};
use crate::error::{Error, Result};
use crate::kernel_file::save_kernel;
use crate::pgm::{load_image, save_image};
use crate::runner::{evaluate_manifest, train, Model, ALIGNMENT_NOTICE};

/// Largest relative error `check-grad` accepts.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "deblur", version, about = "Blind motion deblurring with an unrolled half-quadratic splitting network")]
pub struct Cli {
    /// Seed for every random choice; runs with the same seed are reproducible
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for evaluation
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a bank of linear (and optionally random-walk) motion kernels
    GenKernels(GenKernelsArgs),
    /// Blur image crops with a kernel bank and write records plus manifest.csv
    GenDataset(GenDatasetArgs),
    /// Train the network on a manifest
    Train(TrainArgs),
    /// Estimate the kernel and sharp image of one blurred PGM
    Deblur(DeblurArgs),
    /// Score a model on a manifest and write a CSV report
    Eval(EvalArgs),
    /// Compare reverse-mode gradients with central differences
    CheckGrad(CheckGradArgs),
}

#[derive(Debug, Args)]
pub struct GenKernelsArgs {
    /// Output directory for KERNEL v1 files
    #[arg(long)]
    pub out: PathBuf,
    /// Number of angles, evenly spaced over [0, pi)
    #[arg(long, default_value_t = 16)]
    pub angles: usize,
    /// Number of lengths, evenly spaced over [min-length, max-length]
    #[arg(long, default_value_t = 16)]
    pub lengths: usize,
    /// Shortest linear motion in pixels
    #[arg(long, default_value_t = 5.0)]
    pub min_length: f64,
    /// Longest linear motion in pixels
    #[arg(long, default_value_t = 20.0)]
    pub max_length: f64,
    /// Kernel side length (odd)
    #[arg(long, default_value_t = 31)]
    pub support: usize,
    /// Number of random-walk kernels to add
    #[arg(long, default_value_t = 0)]
    pub trajectories: usize,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    /// Directory of grayscale PGM images
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub images: Option<PathBuf>,
    /// Generate this many synthetic scenes instead of reading images
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Directory of KERNEL v1 files
    #[arg(long)]
    pub kernels: PathBuf,
    /// Standard deviation of the additive Gaussian noise
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    /// Side length of the centered crop taken from each image
    #[arg(long, default_value_t = 128)]
    pub patch: usize,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for checkpoints and loss.csv
    #[arg(long)]
    pub out: PathBuf,
    /// Number of unrolled layers
    #[arg(long, default_value_t = 10)]
    pub layers: usize,
    /// Filters per layer
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    /// Kernel support of the model (odd)
    #[arg(long, default_value_t = 31)]
    pub support: usize,
    /// Confine the running kernel estimate to the support after every layer
    #[arg(long)]
    pub restrict_support: bool,
    /// Weight of the kernel term in the loss
    #[arg(long, default_value_t = 1e5)]
    pub kappa: f64,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Learning-rate factor applied after each epoch
    #[arg(long, default_value_t = 0.9)]
    pub decay: f64,
    /// Number of epochs
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Records per optimizer step
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    /// Initial soft threshold b
    #[arg(long, default_value_t = 1.0)]
    pub init_threshold: f64,
    /// Initial coupling weight lambda
    #[arg(long, default_value_t = 0.0)]
    pub init_lambda: f64,
    /// Initial reconstruction weight eta
    #[arg(long, default_value_t = 20.0)]
    pub init_eta: f64,
    /// Ridge of the kernel update
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Continue from this checkpoint
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Classical TV solver with Prewitt derivative filters
    TvPrewitt,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Trained checkpoint
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    pub ckpt: Option<PathBuf>,
    /// Built-in solver to use instead of a checkpoint
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Override the kernel support (odd); preset default 31
    #[arg(long)]
    pub support: Option<usize>,
    /// Confine the running kernel estimate to the support after every layer
    #[arg(long)]
    pub restrict_support: bool,
}

impl ModelArgs {
    fn load(&self) -> Result<Model> {
        let model = match (&self.ckpt, self.preset) {
            (Some(path), _) => Model::from_checkpoint(path)?,
            (None, Some(Preset::TvPrewitt)) => Model::Preset(TvPreset::prewitt(31)),
            (None, None) => return Err(Error::InvalidArgument("need --ckpt or --preset".into())),
        };
        model.with_support(self.support, self.restrict_support)
    }
}

#[derive(Debug, Args)]
pub struct DeblurArgs {
    /// Blurred input PGM
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Restored image output PGM
    #[arg(long)]
    pub out: PathBuf,
    /// Estimated kernel output (KERNEL v1)
    #[arg(long)]
    pub kernel_out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report CSV output
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct CheckGradArgs {
    /// Side length of the random test image
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    /// Number of unrolled layers
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Filters per layer
    #[arg(long, default_value_t = 2)]
    pub channels: usize,
    /// Parameters to probe; capped at the parameter count
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let mut stdout = std::io::stdout().lock();
    let mut say = |line: String| {
        let _ = writeln!(stdout, "{line}");
    };
    match &cli.command {
        Command::GenKernels(a) => {
            let bank = KernelBank {
                angles: a.angles,
                lengths: a.lengths,
                min_length: a.min_length,
                max_length: a.max_length,
                support: a.support,
                trajectories: a.trajectories,
                seed: cli.seed,
            };
            for path in bank.write(&a.out)? {
                say(path.display().to_string());
            }
        }
        Command::GenDataset(a) => {
            let kernels = load_kernel_dir(&a.kernels)?;
            let summary = match (&a.images, a.synthetic) {
                (Some(dir), _) => build_dataset(dir, &kernels, a.sigma, a.patch, &a.out, cli.seed)?,
                (None, Some(n)) => build_synthetic_dataset(n, &kernels, a.sigma, a.patch, &a.out, cli.seed)?,
                (None, None) => return Err(Error::InvalidArgument("need --images or --synthetic".into())),
            };
            for (path, reason) in &summary.skipped {
                eprintln!("skipped {}: {reason}", path.display());
            }
            eprintln!("{} records", summary.records);
            say(summary.manifest.display().to_string());
        }
        Command::Train(a) => {
            let config = TrainConfig {
                layers: a.layers,
                channels: a.channels,
                support: a.support,
                restrict_support: a.restrict_support,
                kappa: a.kappa,
                learning_rate: a.lr,
                decay: a.decay,
                epochs: a.epochs,
                batch_size: a.batch_size,
                seed: cli.seed,
                init_threshold: a.init_threshold,
                init_lambda: a.init_lambda,
                init_eta: a.init_eta,
                epsilon: a.epsilon,
                ..TrainConfig::default()
            };
            let outcome = train(&a.manifest, &a.out, &config, a.resume.as_deref(), |s| {
                eprintln!(
                    "epoch {}: loss {:.6e} image_mse {:.6e} kernel_mse {:.6e} lr {:.3e}",
                    s.epoch, s.mean_loss, s.mean_image_mse, s.mean_kernel_mse, s.lr
                );
            })?;
            say(outcome.latest.display().to_string());
        }
        Command::Deblur(a) => {
            let model = a.model.load()?;
            let blurred = load_image(&a.input)?;
            let (image, kernel) = model.restore(&blurred)?;
            save_image(&image, &a.out)?;
            save_kernel(&kernel, &a.kernel_out)?;
            say(a.out.display().to_string());
            say(a.kernel_out.display().to_string());
        }
        Command::Eval(a) => {
            let model = a.model.load()?;
            eprintln!("{ALIGNMENT_NOTICE}");
            let report = evaluate_manifest(&a.manifest, &model, &a.out, cli.threads as usize)?;
            let m = report.means();
            eprintln!(
                "mean over {} records: psnr {:.3} dB, isnr {:.3} dB, ssim {:.4}, kernel rmse {:.4e}",
                report.rows.len(),
                m.psnr_db,
                m.isnr_db,
                m.ssim,
                m.kernel_rmse
            );
            say(a.out.display().to_string());
        }
        Command::CheckGrad(a) => {
            let (problem, params) = gradient_check_setup(a.size, a.layers, a.channels, cli.seed)?;
            let total = params.learnable_len();
            if a.samples > total {
                eprintln!("checking all {total} parameters ({} requested)", a.samples);
            }
            let report = finite_diff_check(&problem, &params, a.step, a.samples.min(total), cli.seed)?;
            say(format!("max_rel_error {:e}", report.max_rel_error));
            say(format!("checked {} skipped {}", report.checked.len(), report.skipped.len()));
            if report.checked.is_empty() {
                eprintln!("no parameter could be checked away from kinks");
                return Ok(1);
            }
            if report.max_rel_error >= GRADIENT_TOLERANCE {
                eprintln!("gradient check failed: tolerance {GRADIENT_TOLERANCE:e}");
                return Ok(1);
            }
        }
    }
    Ok(0)
}
