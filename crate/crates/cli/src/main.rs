//! `curvwomb` command line.
//!
//! Failures print one JSON line `{"error": <kind>, "message": <text>}` on
//! stderr and exit with status 1 (2 for usage errors).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use curvwomb::config::RunConfig;
use curvwomb::curves::CurveDoc;
use curvwomb::io;
use curvwomb::mcmc::PosteriorChains;
use curvwomb::pipeline::{self, LevelSurface};
use curvwomb::simulate::{generate, Pattern, PatternOracle};
use curvwomb::wombling::WomblingTruth;

#[derive(Parser)]
#[command(name = "curvwomb", version, about = "Gradient and curvature wombling on spatial surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a synthetic pattern surface.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        pattern: u8,
        /// Number of locations.
        #[arg(long = "L", value_name = "L")]
        l: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise variance.
        #[arg(long, default_value_t = 1.0)]
        tau2: f64,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the MCMC sampler and write the chain file.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior summaries of gradients and curvatures over the grid.
    Differentials {
        #[arg(long)]
        chains: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Grid side length; overrides the configuration.
        #[arg(long)]
        grid_n: Option<usize>,
        #[arg(long)]
        max_draws: Option<usize>,
        /// Grid summary CSV (long format).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Wide per-point plot table.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Wombling measures along a curve.
    Womble {
        #[arg(long)]
        chains: PathBuf,
        /// Curve document path, or one of curveA, curveB, curveC, curveD.
        #[arg(long)]
        curve: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Surface contoured by level curves.
        #[arg(long, value_enum, default_value_t = SurfaceArg::Posterior)]
        surface: SurfaceArg,
        /// Also tabulate the exact measures of this synthetic pattern.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        truth_pattern: Option<u8>,
        #[arg(long)]
        max_draws: Option<usize>,
        /// Per-segment table (CSV).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Same result as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `service.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SurfaceArg {
    Posterior,
    Pattern1,
    Pattern2,
}

#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
}

impl From<curvwomb::Error> for Failure {
    fn from(e: curvwomb::Error) -> Self {
        Failure { kind: e.kind(), message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        curvwomb::Error::Io(e).into()
    }
}

type CliResult<T> = Result<T, Failure>;

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => {
            let mut c = RunConfig::default();
            c.apply_env();
            c
        }
    })
}

/// Without a configuration file, downstream stages reuse the seed of the fit
/// that produced the chains.
fn stage_config(path: Option<&Path>, chains: &PosteriorChains) -> CliResult<RunConfig> {
    let mut cfg = load_config(path)?;
    if path.is_none() {
        cfg.seed = chains.settings.seed;
    }
    Ok(cfg)
}

fn output(cfg: &RunConfig, given: Option<PathBuf>, default: &str) -> PathBuf {
    given.unwrap_or_else(|| cfg.out_dir.join(default))
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

fn curve_doc(spec: &str) -> CliResult<CurveDoc> {
    if let Some(doc) = pipeline::builtin_curve(spec) {
        return Ok(doc);
    }
    Ok(io::read_curve_doc(Path::new(spec))?)
}

fn pattern(id: u8) -> PatternOracle {
    PatternOracle::new(Pattern::from_id(id).expect("validated by clap"))
}

fn write_truth(path: &Path, truth: &WomblingTruth) -> CliResult<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "segment,gradient_total,curvature_total,gradient_average,curvature_average")?;
    for (i, (t, a)) in truth.segment_totals.iter().zip(&truth.segment_averages).enumerate() {
        writeln!(w, "{i},{},{},{},{}", t[0], t[1], a[0], a[1])?;
    }
    let (t, a) = (truth.curve_total, truth.curve_average);
    writeln!(w, "curve,{},{},{},{}", t[0], t[1], a[0], a[1])?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { pattern: id, l, seed, tau2, out } => {
            let mut oracle = pattern(id);
            oracle.tau2 = tau2;
            let data = generate(&oracle, l, seed)?;
            match out {
                Some(p) => {
                    io::write_dataset(&p, &data)?;
                    report(&p);
                }
                None => io::write_dataset_to(std::io::stdout().lock(), &data)?,
            }
        }
        Command::Fit { data, config, seed, iters, burn_in, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = iters {
                cfg.mcmc.iters = n;
            }
            if let Some(n) = burn_in {
                cfg.mcmc.burn_in = n;
            }
            cfg.validate()?;
            let dataset = io::load_dataset(&data)?;
            let chains = pipeline::run_fit(&dataset, &cfg)?;
            let path = output(&cfg, out, "chains.csv");
            io::write_chains(&path, &chains)?;
            report(&path);
        }
        Command::Differentials { chains, config, grid_n, max_draws, out, plot } => {
            let chains = io::read_chains(&chains)?;
            let mut cfg = stage_config(config.as_deref(), &chains)?;
            if let Some(n) = grid_n {
                cfg.grid.n = n;
            }
            if max_draws.is_some() {
                cfg.differentials.max_draws = max_draws;
            }
            cfg.validate()?;
            let grid = pipeline::run_differentials(&chains, &cfg)?;
            let path = output(&cfg, out, "grid_summary.csv");
            io::write_grid_summary(&path, &grid)?;
            report(&path);
            let plot = output(&cfg, plot, "plot_data.csv");
            io::write_plot_data(&plot, &grid)?;
            report(&plot);
        }
        Command::Womble { chains, curve, config, surface, truth_pattern, max_draws, out, json } => {
            let chains = io::read_chains(&chains)?;
            let mut cfg = stage_config(config.as_deref(), &chains)?;
            if max_draws.is_some() {
                cfg.wombling.max_draws = max_draws;
            }
            cfg.validate()?;
            let doc = curve_doc(&curve)?;
            let surface = match surface {
                SurfaceArg::Posterior => LevelSurface::Posterior,
                SurfaceArg::Pattern1 => LevelSurface::Truth(pattern(1)),
                SurfaceArg::Pattern2 => LevelSurface::Truth(pattern(2)),
            };
            let (partition, result) = pipeline::run_womble(&chains, &doc, &cfg, surface)?;
            let path = output(&cfg, out, "womble.csv");
            io::write_wombling_csv(&path, &result)?;
            report(&path);
            if let Some(j) = json {
                std::fs::write(&j, io::wombling_to_json(&result))?;
                report(&j);
            }
            if let Some(id) = truth_pattern {
                let truth = pipeline::truth_for(&pattern(id), &partition);
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("womble");
                let tpath = path.with_file_name(format!("{stem}_truth.csv"));
                write_truth(&tpath, &truth)?;
                report(&tpath);
                let covered = result
                    .segments
                    .iter()
                    .zip(&truth.segment_averages)
                    .filter(|(s, t)| s.average.gradient.contains(t[0]) && s.average.curvature.contains(t[1]))
                    .count();
                println!("segments covered {covered}/{}", result.segments.len());
            }
        }
        Command::Serve { config, bind } => {
            let cfg = load_config(config.as_deref())?;
            cfg.validate()?;
            let bind = bind.unwrap_or_else(|| cfg.service.bind.clone());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(curvwomb_service::serve(cfg, &bind))?;
        }
    }
    Ok(())
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ");
            return fail("usage", first, 2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f.kind, &f.message, 1),
    }
}
