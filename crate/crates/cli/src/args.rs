use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdif_core::config::ConfigFile;
use fdif_core::detect::{DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE, DEFAULT_PATCH_SIDE, DEFAULT_THRESHOLD};
use fdif_core::direction::{build_filter_bank, DEFAULT_BANK_SIZE, DEFAULT_KERNEL_SIDE};
use fdif_core::eval::DEFAULT_MAX_DISTANCE;
use fdif_core::fdif::FdifConfig;
use fdif_core::fracnn::{FracnnConfig, Numerator, DEFAULT_ALPHA, DEFAULT_DEPTH};
use fdif_core::fractal::DEFAULT_SCALES;

use crate::UsageError;

#[derive(Debug, Parser)]
#[command(name = "fdif", version, about = "Fractal-dimension-invariant filtering and curve detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter images (files or directories) into feature maps.
    Filter {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output file for a single input, otherwise a directory.
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Filter, then threshold or classify into binary curve maps.
    Detect {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// Logistic model from `train`; enables supervised mode.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train the logistic patch classifier on filtered images.
    Train {
        /// Directory of training images.
        #[arg(long)]
        images: PathBuf,
        /// Directory of ground-truth maps, paired with images by file stem.
        #[arg(long)]
        truth: PathBuf,
        /// Model file to write.
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score probability or binary maps against ground truth.
    Eval {
        /// Directory of predictions.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Write the metrics JSON here as well as printing the table.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Stroke-enhancing stylisation that keeps the mean intensity.
    Stylize {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Time the max-response layer at two bank sizes.
    Bench {
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Fdif,
    Fracnn,
}

/// Options shared by every command. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Plain-text key = value file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub engine: Option<Engine>,
    /// FDIF iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// FraCNN (convolution, nonlinear) layer pairs.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub bank_size: Option<usize>,
    #[arg(long)]
    pub kernel_side: Option<usize>,
    /// Fixed exponent (FraCNN, or forced for FDIF).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub scales: Option<usize>,
    /// Use the rectified numerator in the FraCNN nonlinear layer.
    #[arg(long)]
    pub rectified: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Threshold with Otsu's method instead of a fixed level.
    #[arg(long)]
    pub otsu: bool,
    /// Matching tolerance in pixels.
    #[arg(long)]
    pub dmax: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training patches in total.
    #[arg(long)]
    pub patches: Option<usize>,
    #[arg(long)]
    pub patch_side: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

const CONFIG_KEYS: &[&str] = &[
    "engine",
    "iterations",
    "depth",
    "bank_size",
    "kernel_side",
    "alpha",
    "scales",
    "rectified",
    "threshold",
    "otsu",
    "dmax",
    "seed",
    "patches",
    "patch_side",
    "epochs",
    "learning_rate",
];

/// Validated settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub engine: Engine,
    pub fdif: FdifConfig,
    pub fracnn: FracnnConfig,
    pub threshold: f64,
    pub otsu: bool,
    pub dmax: f64,
    pub seed: u64,
    pub patches: usize,
    pub patch_side: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl RunArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let file = match &self.config {
            Some(path) => {
                let cfg = ConfigFile::read(path)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                cfg.ensure_known(CONFIG_KEYS)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                cfg
            }
            None => ConfigFile::default(),
        };
        macro_rules! pick {
            ($flag:expr, $key:literal, $default:expr) => {
                match $flag {
                    Some(v) => v,
                    None => file
                        .get($key)
                        .map_err(|e| usage(format!("config: {e}")))?
                        .unwrap_or($default),
                }
            };
        }
        let engine = match self.engine {
            Some(e) => e,
            None => match file.raw("engine") {
                None => Engine::Fracnn,
                Some(s) => Engine::from_str(s, true).map_err(|_| usage(format!("config: unknown engine {s:?}")))?,
            },
        };
        let flag_or_file = |flag: bool, key: &str| -> anyhow::Result<bool> {
            Ok(flag || file.get::<bool>(key).map_err(|e| usage(format!("config: {e}")))?.unwrap_or(false))
        };

        let iterations = pick!(self.iterations, "iterations", 3);
        let depth = pick!(self.depth, "depth", DEFAULT_DEPTH);
        let bank_size = pick!(self.bank_size, "bank_size", DEFAULT_BANK_SIZE);
        let kernel_side = pick!(self.kernel_side, "kernel_side", DEFAULT_KERNEL_SIDE);
        let alpha: Option<f64> = match self.alpha {
            Some(a) => Some(a),
            None => file.get("alpha").map_err(|e| usage(format!("config: {e}")))?,
        };
        let scales = pick!(self.scales, "scales", DEFAULT_SCALES);
        let rectified = flag_or_file(self.rectified, "rectified")?;

        let fdif = FdifConfig {
            iterations,
            kernel_side,
            neighborhood: kernel_side,
            scales,
            alpha_override: alpha,
            ..Default::default()
        };
        fdif.validate().map_err(|e| usage(e.to_string()))?;
        let fracnn = FracnnConfig {
            bank: build_filter_bank(bank_size, kernel_side).map_err(|e| usage(e.to_string()))?,
            depth,
            alpha: alpha.unwrap_or(DEFAULT_ALPHA),
            mean_side: kernel_side,
            numerator: if rectified { Numerator::Rectified } else { Numerator::Literal },
        };
        fracnn.validate().map_err(|e| usage(e.to_string()))?;

        let threshold = pick!(self.threshold, "threshold", DEFAULT_THRESHOLD);
        if !(0.0..=1.0).contains(&threshold) {
            return Err(usage(format!("threshold must lie in [0, 1], got {threshold}")));
        }
        let dmax = pick!(self.dmax, "dmax", DEFAULT_MAX_DISTANCE);
        if !(dmax >= 0.0 && dmax.is_finite()) {
            return Err(usage(format!("dmax must be a non-negative distance, got {dmax}")));
        }
        let patches = pick!(self.patches, "patches", 2000);
        if patches < 2 {
            return Err(usage("patches must be at least 2"));
        }
        let patch_side = pick!(self.patch_side, "patch_side", DEFAULT_PATCH_SIDE);
        if patch_side.is_multiple_of(2) {
            return Err(usage(format!("patch side must be odd, got {patch_side}")));
        }
        let learning_rate = pick!(self.learning_rate, "learning_rate", DEFAULT_LEARNING_RATE);
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(usage(format!("learning rate must be positive, got {learning_rate}")));
        }
        Ok(RunConfig {
            engine,
            fdif,
            fracnn,
            threshold,
            otsu: flag_or_file(self.otsu, "otsu")?,
            dmax,
            seed: pick!(self.seed, "seed", 0),
            patches,
            patch_side,
            epochs: pick!(self.epochs, "epochs", DEFAULT_EPOCHS),
            learning_rate,
        })
    }
}
