use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rrbias::calibration::calibrate_t;
use rrbias::designs::ClusterSizeDist;
use rrbias::exact_pair::tstar_bound;
use rrbias::io::manifest::unix_now;
use rrbias::io::svg::write_svg;
use rrbias::io::{parse_config, read_map_csv, render_heatmap_svg, write_map_csv, RunConfig, RunManifest, SvgLabels};
use rrbias::sweep::{run_ctmc_map_with_limit, run_exact_map, run_mc_sweep, MapMode, MapResult};
use rrbias::{EpidemicParams, Error};

#[derive(Parser)]
#[command(
    name = "rrbias",
    version,
    about = "Direction bias of the risk ratio under within-cluster contagion"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (`key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; the extension is replaced per format.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "RRBIAS_WORKERS")]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Svg,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Two-person clusters from the closed form.
    ExactMap,
    /// Exact expected risk ratios for general cluster designs.
    CtmcMap,
    /// Monte Carlo sweep over the grid.
    Sweep,
    /// Observation time giving a target null cumulative incidence.
    Calibrate {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        omega: f64,
        /// Fixed cluster size.
        #[arg(long, conflicts_with = "size_mean")]
        n: Option<usize>,
        /// Cluster size ~ Poisson(mean) + shift.
        #[arg(long)]
        size_mean: Option<f64>,
        #[arg(long, default_value_t = 1)]
        size_shift: usize,
        #[arg(long)]
        target: f64,
    },
    /// Eligibility for direction bias and the threshold time t*.
    Tstar {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        omega: f64,
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
    },
    /// Renders a map CSV as SVG.
    Render {
        /// Map CSV written by one of the map commands.
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nUsage: rrbias --config <FILE> <exact-map|ctmc-map|sweep>\n       rrbias --help");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn load_config(global: &Global, command: &str, mode: MapMode) -> Result<RunConfig, Failure> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage(format!("`{command}` requires --config")))?;
    let mut config = parse_config(path)?;
    if config.mode != mode {
        log::warn!("config mode is {}; running {} as requested", config.mode, mode);
        config.mode = mode;
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(workers) = global.workers {
        config.mc.workers = workers;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match cli.command {
        Command::ExactMap => {
            let c = load_config(g, "exact-map", MapMode::ExactPair)?;
            let started = unix_now();
            let map = run_exact_map(&c.grid, c.alpha, c.omega, c.time)?;
            emit(g, &map, started)
        }
        Command::CtmcMap => {
            let c = load_config(g, "ctmc-map", MapMode::Ctmc)?;
            let started = unix_now();
            let map = run_ctmc_map_with_limit(
                &c.grid,
                &c.exact_design(),
                c.alpha,
                c.omega,
                c.time,
                c.mc.workers,
                c.enumeration_limit,
            )?;
            emit(g, &map, started)
        }
        Command::Sweep => {
            let c = load_config(g, "sweep", MapMode::MonteCarlo)?;
            let started = unix_now();
            let map = run_mc_sweep(&c.grid, &c.study()?, c.time, &c.mc)?;
            emit(g, &map, started)
        }
        Command::Calibrate {
            alpha,
            omega,
            n,
            size_mean,
            size_shift,
            target,
        } => {
            let sizes = match (n, size_mean) {
                (Some(n), None) => ClusterSizeDist::Fixed(n),
                (None, Some(mean)) => ClusterSizeDist::ShiftedPoisson {
                    mean,
                    shift: size_shift,
                },
                _ => return Err(Failure::Usage("calibrate needs --n or --size-mean".into())),
            };
            let t = calibrate_t(target, alpha, omega, &sizes)?;
            println!("T = {t:.6}");
            Ok(())
        }
        Command::Tstar {
            alpha,
            omega,
            beta,
            gamma,
        } => {
            let params = EpidemicParams::new(alpha, omega, beta, gamma)?;
            match tstar_bound(&params) {
                Ok(ts) => {
                    println!("eligible=true");
                    println!("t_star={}", ts.t_star);
                    match ts.analytic_bound {
                        Some(b) => println!("analytic_bound={b}"),
                        None => println!("analytic_bound=none"),
                    }
                    println!("regime={:?}", ts.regime);
                    Ok(())
                }
                Err(Error::NotEligible) => {
                    println!("eligible=false");
                    Ok(())
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Render { input } => {
            let cells = read_map_csv(&input)?;
            let manifest_path = RunManifest::path_for(&input);
            let labels = match RunManifest::read(&manifest_path) {
                Ok(m) => SvgLabels {
                    title: format!("{} map", m.mode),
                    fingerprint: m.fingerprint,
                },
                Err(_) => SvgLabels {
                    title: input.display().to_string(),
                    fingerprint: "unknown".into(),
                },
            };
            let out = g.out.clone().unwrap_or_else(|| input.clone()).with_extension("svg");
            write_svg(&cells, &labels, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn emit(g: &Global, map: &MapResult, started: u64) -> Result<(), Failure> {
    let base = g.out.clone().unwrap_or_else(|| PathBuf::from("map"));
    let mut primary: Option<PathBuf> = None;
    if matches!(g.format, Format::Csv | Format::Both) {
        let path = base.with_extension("csv");
        write_map_csv(map, &path)?;
        println!("wrote {}", path.display());
        primary = Some(path);
    }
    if matches!(g.format, Format::Svg | Format::Both) {
        let path = base.with_extension("svg");
        render_heatmap_svg(map, &path)?;
        println!("wrote {}", path.display());
        primary.get_or_insert(path);
    }
    let primary = primary.expect("at least one format");
    RunManifest::for_map(map, started).write(&RunManifest::path_for(&primary))?;
    report_failures(map, &primary);
    Ok(())
}

fn report_failures(map: &MapResult, path: &Path) {
    let failed: Vec<_> = map.cells.iter().filter(|c| !c.is_ok()).collect();
    if let Some(first) = failed.first() {
        eprintln!(
            "{} of {} cells have no estimate (see the status column of {}); first: beta={} gamma={}: {}",
            failed.len(),
            map.cells.len(),
            path.display(),
            first.beta,
            first.gamma,
            first.status
        );
    }
}
