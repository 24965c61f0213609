use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use monomlp::error::Error;
use monomlp::harness::{
    dataset_for_seed, evaluate, experiment_csv, grad_depth_experiment, init_output_experiment, read_points,
    run_experiment, toy_experiment, ExperimentConfig, Metrics, ToyConfig,
};
use monomlp::interpolator::{build_with_report, heaviside_compose, heaviside_forms, Alternation, InterpolationProblem};
use monomlp::network::{Certification, Network};
use monomlp::verifier::{fuzz_monotone, DomainBox, DEFAULT_TOL};

#[derive(Parser)]
#[command(name = "monomlp", version, about = "Monotone MLPs: training, verification and construction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and report the test metric.
    Train {
        config: PathBuf,
        /// Directory for `results.csv` and `model.json` (first seed).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model on a config's test split.
    Eval {
        model: PathBuf,
        config: PathBuf,
        /// Seed whose split to use; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Certify a saved model and fuzz it for monotonicity violations.
    Verify {
        model: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        pairs: usize,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build an exact monotone interpolant of a CSV point set.
    Construct {
        points: PathBuf,
        #[arg(long, value_enum, default_value_t = Pattern::Mpm)]
        alternation: Pattern,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Initialization diagnostics.
    Diagnose {
        #[command(subcommand)]
        what: Diagnose,
    },
    /// Fit the four toy models to cos(x) + x and write loss/prediction CSVs.
    Toy {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the composed step function next to the exact indicator.
    DemoHeaviside {
        #[arg(long, default_value_t = 1e6)]
        alpha: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long, default_value_t = 1e-5)]
        half_width: f64,
    },
}

#[derive(Subcommand)]
enum Diagnose {
    /// Mean |∂f/∂θ| at initialization against depth.
    Grads {
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 6, 8, 10])]
        depths: Vec<usize>,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Output mean/std of freshly initialized networks.
    Init {
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 32, 128])]
        widths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4])]
        depths: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Pattern {
    /// Saturation sides left, right, left.
    Mpm,
    /// Saturation sides right, left, right.
    Pmp,
}

enum Failure {
    Usage(String),
    Lib(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() {
                2
            } else if e.is_numeric_error() {
                3
            } else {
                1
            })
        }
        Err(Failure::Check(m)) => {
            eprintln!("{m}");
            ExitCode::from(3)
        }
    }
}

fn base_dir(path: &Path) -> Option<&Path> {
    path.parent().filter(|p| !p.as_os_str().is_empty())
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            if cfg.experiment.seeds.is_empty() {
                return Err(Failure::Usage("experiment.seeds is empty".into()));
            }
            let (result, runs) = run_experiment(&cfg, base_dir(&config))?;
            for (r, v) in runs.iter().zip(&result.values) {
                println!("seed {}: {} = {v:.6}", r.seed, result.metric);
            }
            println!("{} mean {:.6} std {:.6}", result.metric, result.mean, result.std);
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("results.csv"), experiment_csv(&result, &runs))?;
                runs[0].network.save(dir.join("model.json"))?;
            }
        }
        Command::Eval { model, config, seed } => {
            let net = Network::<f64>::load(&model)?;
            let cfg = ExperimentConfig::load(&config)?;
            let seed = seed.or(cfg.experiment.seeds.first().copied()).unwrap_or(0);
            let data = dataset_for_seed(&cfg, base_dir(&config), seed)?;
            let set = if data.test.is_empty() { &data.train } else { &data.test };
            match evaluate(&net, set, cfg.dataset.task)? {
                Metrics::Regression { mse, rmse } => println!("mse {mse:.6}\nrmse {rmse:.6}"),
                Metrics::Classification { accuracy } => println!("accuracy {accuracy:.6}"),
            }
        }
        Command::Verify {
            model,
            pairs,
            lo,
            hi,
            tol,
            seed,
        } => {
            if !(lo < hi) {
                return Err(Failure::Usage(format!("need lo < hi, got [{lo}, {hi}]")));
            }
            let net = Network::<f64>::load(&model)?;
            match net.certify_monotone() {
                Certification::Certified(c) => println!(
                    "certified: {} non-positive layer(s){}",
                    c.non_positive_layers,
                    if c.parameter_dependent { ", parameter dependent" } else { "" }
                ),
                Certification::Rejected { layer, reason } => match layer {
                    Some(k) => println!("not certified: layer {k}: {reason}"),
                    None => println!("not certified: {reason}"),
                },
            }
            let dom = DomainBox::cube(net.input_dim(), lo, hi);
            let rep = fuzz_monotone(&net, &dom, pairs, tol, seed)?;
            println!("checked {} pairs, {} violation(s)", rep.checked, rep.violations);
            if let Some(v) = rep.worst {
                return Err(Failure::Check(format!(
                    "worst violation: f({:?}) = {} > f({:?}) = {} (excess {:e})",
                    v.x, v.fx, v.x_prime, v.fx_prime, v.excess
                )));
            }
        }
        Command::Construct {
            points,
            alternation,
            tol,
            out,
        } => {
            let pts = read_points(&points)?;
            let alt = match alternation {
                Pattern::Mpm => Alternation::MinusPlusMinus,
                Pattern::Pmp => Alternation::PlusMinusPlus,
            };
            let built = build_with_report(&InterpolationProblem::with_alternation(pts, alt).with_tol(tol))?;
            eprintln!(
                "lambda {:e}, max residual {:e}, {} parameters",
                built.lambda,
                built.max_residual,
                built.network.param_count()
            );
            write_or_print(out.as_deref(), &(built.network.to_json()? + "\n"))?;
        }
        Command::Diagnose { what } => match what {
            Diagnose::Grads {
                depths,
                width,
                seeds,
                out,
            } => {
                let seeds: Vec<u64> = (0..seeds).collect();
                let table = grad_depth_experiment(&depths, width, &seeds)?;
                write_or_print(out.as_deref(), &table.to_csv())?;
            }
            Diagnose::Init {
                widths,
                depths,
                samples,
                seed,
                out,
            } => {
                let table = init_output_experiment(&widths, &depths, samples, seed)?;
                write_or_print(out.as_deref(), &table.to_csv())?;
            }
        },
        Command::Toy { epochs, out } => {
            let mut cfg = ToyConfig::default();
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let res = toy_experiment(&cfg)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("toy_losses.csv"), res.loss_csv())?;
            fs::write(out.join("toy_predictions.csv"), res.predictions_csv())?;
            for m in &res.models {
                println!("{} final mse {:.6e}", m.name, m.final_mse);
            }
        }
        Command::DemoHeaviside {
            alpha,
            points,
            half_width,
        } => {
            if points < 2 || !(alpha > 0.0) || !(half_width > 0.0) {
                return Err(Failure::Usage("need points >= 2, alpha > 0, half-width > 0".into()));
            }
            println!("x,composed,left_form,right_form_plus_one,indicator");
            for i in 0..points {
                let x = -half_width + 2.0 * half_width * i as f64 / (points - 1) as f64;
                let (f1, f2) = heaviside_forms(alpha, x);
                let h = heaviside_compose(alpha, x);
                println!("{x:e},{h},{f1},{},{}", f2 + 1.0, if x >= 0.0 { 1 } else { 0 });
            }
        }
    }
    Ok(())
}
