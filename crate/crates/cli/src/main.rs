use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use bandsplit::analysis::ppm::{read_ppm, write_ppm};
use bandsplit::analysis::synthetic::SyntheticEncoder;
use bandsplit::analysis::{energy_profile, filter_image, retrieval_sweep, EmbeddingSource, FileEmbeddings, FilterMode};
use bandsplit::masks::DEFAULT_TAPER;
use bandsplit::modulator::NoiseSample;
use bandsplit::pzt::{load_tensor, save_tensor};
use bandsplit::toy::gradcheck::{DEFAULT_STEP, DEFAULT_TOLERANCE};
use bandsplit::toy::{gradcheck, log_csv, perturb_for_check, run, synthetic_dataset, LossWeights, RunConfig, ToyModel};
use bandsplit::{iterative_split, ring_masks, Error, Result, SeededRng};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bandsplit", version, about = "Frequency-band factorization of latent grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a PZT latent grid into radial frequency bands plus a residual.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        bands: usize,
        #[arg(long, default_value_t = DEFAULT_TAPER)]
        taper: f64,
        /// Divide the ring masks by their pointwise sum.
        #[arg(long)]
        normalized: bool,
        /// Output directory for band_NN.pzt and residual.pzt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sum the band files written by `decompose`.
    Recompose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Leave the final residual out of the sum.
        #[arg(long)]
        drop_residual: bool,
    },
    /// Per-band share of spectral energy of a feature tensor, as CSV.
    Energy {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        bands: usize,
        #[arg(long, default_value_t = DEFAULT_TAPER)]
        taper: f64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Low- or high-pass filter a binary PPM image.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mode: FilterMode,
        #[arg(long)]
        cutoff: f64,
        #[arg(long, default_value_t = DEFAULT_TAPER)]
        taper: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Text-to-image recall@k across a sweep of filter cutoffs, as CSV.
    Retrieval {
        /// Text embeddings [N, D]; image embeddings come from --image-dir.
        #[arg(long, conflicts_with = "synthetic", requires = "image_dir")]
        text: Option<PathBuf>,
        /// Use the built-in synthetic corpus and encoder.
        #[arg(long, required_unless_present = "text")]
        synthetic: bool,
        /// Directory holding image_{mode}_{cutoff:.3}.pzt files.
        #[arg(long, requires = "text")]
        image_dir: Option<PathBuf>,
        /// Synthetic corpus size.
        #[arg(long, default_value_t = 500, conflicts_with = "text")]
        n: usize,
        #[arg(long)]
        mode: FilterMode,
        #[arg(long, value_delimiter = ',', required = true)]
        cutoffs: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the toy autoencoder from a key = value config.
    TrainToy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare analytic and finite-difference gradients for each stage in a config.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Write a ring mask set as a [K, H, W] PZT.
    Masks {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        bands: usize,
        #[arg(long, default_value_t = DEFAULT_TAPER)]
        taper: f64,
        #[arg(long)]
        normalized: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Lib(Error),
    GradCheck,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) => 1,
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => {
                    eprintln!("\n{}", Cli::command().render_help());
                    ExitCode::from(1)
                }
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::GradCheck) => ExitCode::from(3),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Storage {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Storage {
        path: path.to_path_buf(),
        source,
    })
}

fn emit_csv(text: &str, dest: Option<&Path>) -> Result<()> {
    match dest {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn band_file(k: usize) -> String {
    format!("band_{k:02}.pzt")
}

fn execute(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Decompose {
            input,
            bands,
            taper,
            normalized,
            out,
        } => {
            let z = load_tensor(&input)?;
            let (_, h, w) = z.grid_dims()?;
            let set = Arc::new(ring_masks(h, w, bands, taper, normalized)?);
            let stack = iterative_split(&z, set)?;
            create_dir(&out)?;
            for (k, band) in stack.bands.iter().enumerate() {
                save_tensor(band, out.join(band_file(k)))?;
            }
            save_tensor(&stack.final_residual, out.join("residual.pzt"))?;
        }
        Command::Recompose {
            input,
            output,
            drop_residual,
        } => {
            let mut parts = Vec::new();
            while input.join(band_file(parts.len())).is_file() {
                parts.push(load_tensor(input.join(band_file(parts.len())))?);
            }
            if parts.is_empty() {
                return Err(Error::Input(format!("no {} in {}", band_file(0), input.display())).into());
            }
            if !drop_residual {
                let path = input.join("residual.pzt");
                if !path.is_file() {
                    return Err(Error::Input(format!("{} missing", path.display())).into());
                }
                parts.push(load_tensor(path)?);
            }
            let mut sum = parts[0].clone();
            for p in &parts[1..] {
                sum = sum.add(p)?;
            }
            save_tensor(&sum, output)?;
        }
        Command::Energy {
            input,
            bands,
            taper,
            csv,
        } => {
            let x = load_tensor(&input)?;
            let (_, h, w) = x.grid_dims()?;
            let set = ring_masks(h, w, bands, taper, true)?;
            let profile = energy_profile(&x, &set)?;
            let mut text = String::from("band_index,edge_lo,edge_hi,energy_fraction\n");
            for (k, f) in profile.fractions.iter().enumerate() {
                let _ = writeln!(
                    text,
                    "{k},{:.6},{:.6},{:.12}",
                    profile.band_edges[k],
                    profile.band_edges[k + 1],
                    f
                );
            }
            emit_csv(&text, csv.as_deref())?;
        }
        Command::Filter {
            input,
            mode,
            cutoff,
            taper,
            output,
        } => {
            let img = read_ppm(&input)?;
            write_ppm(&filter_image(&img, mode, cutoff, taper)?, output)?;
        }
        Command::Retrieval {
            text,
            synthetic: _,
            image_dir,
            n,
            mode,
            cutoffs,
            k,
            csv,
            seed,
        } => {
            let mut source: Box<dyn EmbeddingSource> = match (text, image_dir) {
                (Some(t), Some(dir)) => Box::new(FileEmbeddings::open(t, dir)?),
                _ => Box::new(SyntheticEncoder::new(n, seed)?),
            };
            let curve = retrieval_sweep(source.as_mut(), &cutoffs, mode, k)?;
            let mut out = String::from("cutoff,mode,recall_at_k\n");
            for (c, r) in curve.cutoffs.iter().zip(&curve.recall) {
                let _ = writeln!(out, "{c:.3},{mode},{r:.6}");
            }
            emit_csv(&out, csv.as_deref())?;
        }
        Command::TrainToy { config, out_dir } => {
            let cfg = read_config(&config)?;
            let outcome = run(&cfg)?;
            create_dir(&out_dir)?;
            outcome.model.save(out_dir.join("checkpoint"))?;
            write_file(&out_dir.join("train_log.csv"), log_csv(&outcome.log).as_bytes())?;
            for s in &outcome.stages {
                println!(
                    "stage {}: l_pix {:.6e} -> {:.6e}, l_sem {:.6e} -> {:.6e}",
                    s.stage, s.start.l_pix, s.end.l_pix, s.start.l_sem, s.end.l_sem
                );
            }
        }
        Command::Gradcheck { config, tolerance } => {
            let cfg = read_config(&config)?;
            if !(tolerance > 0.0) {
                return Err(Error::Argument("tolerance must be positive".into()).into());
            }
            let mut ok = true;
            for stage in &cfg.stages {
                let mut model = ToyModel::new(cfg.model, cfg.seed)?;
                perturb_for_check(&mut model, cfg.seed.wrapping_add(u64::from(stage.stage)));
                let images = synthetic_dataset(2, cfg.model.image_h, cfg.seed.wrapping_add(1))?;
                let (gh, gw) = cfg.model.grid();
                let shape = [2, cfg.model.channels, gh, gw];
                let mut rng = SeededRng::derived(cfg.seed, 32 + u64::from(stage.stage));
                let noise = NoiseSample::draw(&shape, cfg.model.bands, &stage.noise, &mut rng)?;
                let weights = LossWeights {
                    lambda_sem: stage.lambda_sem,
                    k_base: stage.k_base,
                };
                let report = gradcheck(&model, &images, &noise, weights, DEFAULT_STEP, tolerance, usize::MAX)?;
                for t in &report.tensors {
                    println!(
                        "stage {} {:<8} rel_err {:.3e} |analytic| {:.3e} {}",
                        stage.stage,
                        t.name,
                        t.relative_error,
                        t.analytic_norm,
                        if t.relative_error < tolerance { "ok" } else { "FAIL" }
                    );
                }
                ok &= report.passed();
            }
            if !ok {
                eprintln!("gradient check failed (tolerance {tolerance:e})");
                return Err(Failure::GradCheck);
            }
        }
        Command::Masks {
            height,
            width,
            bands,
            taper,
            normalized,
            out,
        } => {
            let set = ring_masks(height, width, bands, taper, normalized)?;
            save_tensor(&set.to_tensor()?, out)?;
        }
    }
    Ok(())
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Storage {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::parse(&text)
}
