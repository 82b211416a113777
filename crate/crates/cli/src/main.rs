use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rbanova::config::ExperimentConfig;
use rbanova::{run_experiment, CliError};
use rbanova_core::collocation::{clenshaw_curtis, count_points, gauss_legendre, CountConvention};

#[derive(Parser)]
#[command(
    version,
    about = "Reduced-basis anchored-ANOVA collocation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    /// Σ_{l=0}^{ℓ} C(M,l) p^l
    Formula,
    /// Σ_{l=1}^{ℓ} C(M,l) (p-1)^l
    TableNoAnchor,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gl,
    Cc,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Override a config key, `key=value` with a JSON value.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Grid cells per side.
        #[arg(long)]
        n: Option<usize>,
        /// Reference sample count.
        #[arg(long)]
        qmc: Option<usize>,
        /// Artifact directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write zero timings.
        #[arg(long)]
        deterministic: bool,
    },
    /// Number of points of a level-ℓ ANOVA point set.
    CountPoints {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        level: usize,
        #[arg(long)]
        p: u64,
        #[arg(long, value_enum, default_value = "formula")]
        convention: Convention,
    },
    /// Print 1-D nodes and weights.
    Nodes {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        p: usize,
        #[arg(long, num_args = 2, value_names = ["A", "B"], default_values_t = [0.01, 1.0], allow_negative_numbers = true)]
        interval: Vec<f64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            mut set,
            n,
            qmc,
            out,
            deterministic,
        } => {
            if let Some(n) = n {
                set.push(format!("n={n}"));
            }
            if let Some(q) = qmc {
                set.push(format!("qmc_samples={q}"));
            }
            if let Some(o) = out {
                set.push(format!(
                    "output_dir={}",
                    serde_json::to_string(&o).unwrap_or_default()
                ));
            }
            if deterministic {
                set.push("deterministic=true".into());
            }
            let cfg = ExperimentConfig::load(&config, &set)?;
            let outcome = run_experiment(&cfg)?;
            for run in &outcome.runs {
                let last = run.rows.last();
                match last.and_then(|r| r.errors) {
                    Some(e) => println!(
                        "eps_rb = {:e}: N_r = {}, visited = {}, e_mu = {:e}, e_sigma = {:e}",
                        run.eps_rb, run.report.n_r, run.report.visited, e.e_mu, e.e_sigma
                    ),
                    None => println!(
                        "eps_rb = {:e}: N_r = {}, visited = {}",
                        run.eps_rb, run.report.n_r, run.report.visited
                    ),
                }
            }
            println!("artifacts in {}", cfg.output_dir.display());
        }
        Command::CountPoints {
            dim,
            level,
            p,
            convention,
        } => {
            let c = match convention {
                Convention::Formula => CountConvention::Formula,
                Convention::TableNoAnchor => CountConvention::TableNoAnchor,
            };
            println!("{}", count_points(dim, level, p, c));
        }
        Command::Nodes {
            family,
            p,
            interval,
        } => {
            let (a, b) = (interval[0], interval[1]);
            if p == 0 || a.is_nan() || b.is_nan() || a > b {
                return Err(CliError::Config("need p >= 1 and a <= b".into()));
            }
            let rule = match family {
                FamilyArg::Gl => gauss_legendre(p, a, b),
                FamilyArg::Cc => clenshaw_curtis(p, a, b),
            };
            println!("node,weight");
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                println!("{x:e},{w:e}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
