//! Command-line runner: simulate scenarios, run the oracle batteries and
//! print default configurations.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error,
//! 3 oracle failure.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_cbf::config::{PlantKind, Scenario};
use adaptive_cbf::oracle::{self, OracleReport};
use adaptive_cbf::plot::figure_set;
use adaptive_cbf::sim::Case;
use adaptive_cbf::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaptive-cbf", version, about = "Adaptive CBF safety filter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write CSV logs and SVG figures.
    Run {
        /// Scenario file; omitted means the pendulum defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run only this case (1, 2 or 3) instead of the configured list.
        #[arg(long)]
        case: Option<u8>,
        /// Output directory, overriding `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the SVG figures.
        #[arg(long)]
        no_plots: bool,
    },
    /// Run the randomized check batteries.
    Oracle {
        #[arg(long, default_value_t = 1000)]
        windows: usize,
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 1_000_000)]
        cloud: usize,
        #[arg(long, default_value_t = 4)]
        runs: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the resolved default scenario for a plant.
    Defaults {
        #[arg(long, default_value = "pendulum")]
        plant: String,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Oracle,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn run(config: Option<PathBuf>, case: Option<u8>, out: Option<PathBuf>, no_plots: bool) -> Result<(), Failure> {
    let mut scenario = match &config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            Scenario::parse(&text)?
        }
        None => Scenario::defaults(PlantKind::Pendulum),
    };
    if let Some(n) = case {
        let c = Case::from_number(n).ok_or_else(|| Failure::Config(format!("--case must be 1, 2 or 3, got {n}")))?;
        scenario.cases = vec![c];
    }
    if let Some(dir) = out {
        scenario.output_dir = dir;
    }
    scenario.validate()?;

    let dir = scenario.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let resolved = scenario.to_config_string();
    write_file(&dir.join("resolved.cfg"), |w| w.write_all(resolved.as_bytes()))?;

    let debug = std::env::var_os("ADAPTIVE_CBF_VERBOSE").is_some();
    let plant = scenario.plant_model();
    for &case in &scenario.cases {
        let log = scenario.run_case(case)?;
        let stem = format!("{}_case{}", log.plant, case.number());
        write_file(&dir.join(format!("{stem}.csv")), |w| log.write_csv(w))?;
        write_file(&dir.join(format!("{stem}_estimator.csv")), |w| log.write_estimator_csv(w, debug))?;
        if !no_plots {
            for (suffix, fig) in figure_set(&log, plant.state_names(), plant.input_names(), plant.reference_names()) {
                let svg = fig.to_svg();
                write_file(&dir.join(format!("{stem}_{suffix}.svg")), |w| w.write_all(svg.as_bytes()))?;
            }
        }
        let last = log.rows.last().expect("a run logs at least the initial row");
        let min_psi0 = log.rows.iter().map(|r| r.chain[0]).fold(f64::INFINITY, f64::min);
        let active = log.rows.iter().filter(|r| r.lambda > 0.0).count();
        println!(
            "{stem}: t_end {} min psi0 {:.4e} active ticks {active} final |theta - theta*| {:.4e} final nu {:.4e}",
            last.t, min_psi0, last.theta_err, last.nu
        );
    }
    Ok(())
}

fn oracle_cmd(windows: usize, instances: usize, cloud: usize, runs: usize, steps: usize, seed: u64) -> Result<(), Failure> {
    let mut reports: Vec<OracleReport> = vec![oracle::decrement_battery(windows, seed)?];
    reports.extend(oracle::bound_battery(runs, steps, seed.wrapping_add(1))?);
    reports.extend(oracle::kkt_battery(instances, cloud, seed.wrapping_add(2))?);
    let pendulum = Scenario::defaults(PlantKind::Pendulum);
    reports.push(oracle::nu0_corner_check(&pendulum.estimator_config())?);
    reports.push(oracle::quadrature_report(&pendulum.run_case(Case::Case1)?));
    for r in &reports {
        println!("{r}");
    }
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Failure::Oracle)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            case,
            out,
            no_plots,
        } => run(config, case, out, no_plots),
        Command::Oracle {
            windows,
            instances,
            cloud,
            runs,
            steps,
            seed,
        } => oracle_cmd(windows, instances, cloud, runs, steps, seed),
        Command::Defaults { plant } => match PlantKind::parse(&plant) {
            Some(kind) => {
                print!("{}", Scenario::defaults(kind).to_config_string());
                Ok(())
            }
            None => Err(Failure::Config(format!("unknown plant {plant:?}; expected pendulum or robot"))),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Oracle) => {
            eprintln!("oracle failure");
            ExitCode::from(3)
        }
    }
}
