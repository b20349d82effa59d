use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use segopt::functionals::targets::{histogram_to_text, moments_to_text};
use segopt::grid::{bin_counts, io};
use segopt_bench::config::CONFIG_KEYS;
use segopt_bench::{
    compare, run_experiment, synth_circle_image, targets_from_ellipse, EllipseSpec, ExperimentConfig,
    Summary, SynthSpec,
};

#[derive(Parser)]
#[command(name = "segopt", version, about = "Level sets vs. fast trust region on high-order segmentation energies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic flat image and its initial square mask.
    Synth {
        #[arg(long, default_value_t = 100)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Area of the initial square.
        #[arg(long, default_value_t = 1000.0)]
        init_area: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        init_out: Option<PathBuf>,
    },
    /// Derive moment targets and appearance histograms from an ellipse or a
    /// ground-truth mask.
    Targets {
        #[arg(long)]
        image: PathBuf,
        /// `cx,cy,a,b,theta` in pixels and radians.
        #[arg(long, conflicts_with = "ground_truth", required_unless_present = "ground_truth")]
        ellipse: Option<EllipseSpec>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long, default_value_t = 2)]
        order: u32,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a parameter sweep and write traces, masks and summary.csv.
    Run(RunArgs),
    /// Compare the best runs of two summaries of the same problem.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Also write the comparison as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Every config key as a flag; flags override the file.
#[derive(Args)]
struct RunArgs {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    image: Option<String>,
    #[arg(long)]
    synth_size: Option<String>,
    #[arg(long)]
    synth_noise: Option<String>,
    #[arg(long)]
    target_volume: Option<String>,
    #[arg(long)]
    ellipse: Option<String>,
    #[arg(long)]
    ground_truth: Option<String>,
    #[arg(long)]
    init_mask: Option<String>,
    #[arg(long)]
    lambda_length: Option<String>,
    #[arg(long)]
    lambda_volume: Option<String>,
    #[arg(long)]
    lambda_shape: Option<String>,
    #[arg(long)]
    lambda_app: Option<String>,
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    moment_order: Option<String>,
    #[arg(long)]
    solver: Option<String>,
    /// Comma-separated time steps.
    #[arg(long)]
    dt: Option<String>,
    /// Comma-separated radius multipliers.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    ftr_max_iters: Option<String>,
    #[arg(long)]
    initial_radius: Option<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// `false` zeroes cpu_ms for byte-reproducible traces.
    #[arg(long)]
    cpu_time: Option<String>,
}

impl RunArgs {
    fn flag_pairs(&self) -> Vec<(&'static str, String)> {
        let values = [
            &self.problem,
            &self.image,
            &self.synth_size,
            &self.synth_noise,
            &self.target_volume,
            &self.ellipse,
            &self.ground_truth,
            &self.init_mask,
            &self.lambda_length,
            &self.lambda_volume,
            &self.lambda_shape,
            &self.lambda_app,
            &self.bins,
            &self.moment_order,
            &self.solver,
            &self.dt,
            &self.alpha,
            &self.max_iters,
            &self.ftr_max_iters,
            &self.initial_radius,
            &self.window,
            &self.tolerance,
            &self.output,
            &self.seed,
            &self.cpu_time,
        ];
        CONFIG_KEYS
            .iter()
            .zip(values)
            .filter_map(|(k, v)| v.clone().map(|v| (*k, v)))
            .collect()
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Synth {
            size,
            seed,
            noise,
            init_area,
            out,
            init_out,
        } => {
            let (img, init) = synth_circle_image(size, &SynthSpec { seed, noise, init_area })?;
            io::save_image(&out, &img)?;
            if let Some(p) = init_out {
                io::save_mask(&p, &init)?;
            }
        }
        Command::Targets {
            image,
            ellipse,
            ground_truth,
            bins,
            order,
            out_dir,
        } => {
            let img = io::load_image(&image).with_context(|| format!("loading {}", image.display()))?;
            fs::create_dir_all(&out_dir)?;
            let (mask, fg, bg) = match (ellipse, ground_truth) {
                (Some(e), _) => {
                    let t = targets_from_ellipse(&e, &img, bins, order)?;
                    fs::write(out_dir.join("moments.txt"), moments_to_text(&t.moments))?;
                    (t.mask, t.fg, t.bg)
                }
                (None, Some(gt)) => {
                    let mask = io::load_mask(&gt)?;
                    let outside = segopt::Labeling::from_fn(mask.width(), mask.height(), |x, y| !mask.get(x, y));
                    let fg = bin_counts(&img, &mask, bins)?;
                    fs::write(out_dir.join("counts.txt"), histogram_to_text(&fg))?;
                    let fg = fg.normalized()?;
                    let bg = bin_counts(&img, &outside, bins)?.normalized()?;
                    (mask, fg, bg)
                }
                (None, None) => unreachable!("clap requires one target"),
            };
            io::save_mask(out_dir.join("target_mask.pgm"), &mask)?;
            fs::write(out_dir.join("fg.txt"), histogram_to_text(&fg))?;
            fs::write(out_dir.join("bg.txt"), histogram_to_text(&bg))?;
        }
        Command::Run(args) => {
            let mut pairs = match &args.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => Vec::new(),
            };
            pairs.extend(args.flag_pairs().into_iter().map(|(k, v)| (k.to_string(), v)));
            let cfg = ExperimentConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
            let summary = run_experiment(&cfg)?;
            print!("{}", summary.to_csv());
        }
        Command::Compare { a, b, out } => {
            let c = compare(&Summary::load(&a)?, &Summary::load(&b)?)?;
            print!("{}", c.to_text());
            if let Some(p) = out {
                fs::write(&p, c.to_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(())
}
