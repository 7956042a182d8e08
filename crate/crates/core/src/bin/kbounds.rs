use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kolmogorov_bounds::cli::{emit_report, parse_config, plot_margins, read_report, run_suite, ConfigError, Format};
use kolmogorov_bounds::matfun::{covariance_paper, covariance_sde, propagator};

/// Exit code for anything that stops a run before it starts.
const CONFIG_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "kbounds", version, about = "Monte Carlo checks of gradient bounds and functional inequalities for Kolmogorov-type diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the closed-form C(t), C_+(t) and E(t) of the configured model.
    Covariance {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, short)]
        t: f64,
    },
    /// Run every configured check and write the reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding `[output].dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of json,csv,svg.
        #[arg(long, value_delimiter = ',')]
        formats: Option<Vec<Format>>,
        /// Verdict level k in `margin >= -k·stderr`.
        #[arg(long)]
        sigma: Option<f64>,
        /// Worker threads; falls back to KBOUNDS_JOBS, then to all cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Redraw the margin plot from an existing JSON report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn config_error(e: ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(CONFIG_ERROR)
}

fn print_matrix(name: &str, m: &nalgebra::DMatrix<f64>) {
    println!("{name}:");
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:>24.16e}", m[(i, j)])).collect();
        println!("  {}", row.join(" "));
    }
}

fn jobs_from_env() -> Option<usize> {
    std::env::var("KBOUNDS_JOBS").ok()?.trim().parse().ok()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match parse_config(&config) {
            Ok(plan) => {
                println!("ok: {} checks, plan {}", plan.jobs.len(), plan.hash);
                ExitCode::SUCCESS
            }
            Err(e) => config_error(e),
        },
        Command::Covariance { config, t } => {
            let plan = match parse_config(&config) {
                Ok(p) => p,
                Err(e) => return config_error(e),
            };
            if !t.is_finite() {
                eprintln!("error: t must be finite");
                return ExitCode::from(CONFIG_ERROR);
            }
            let m = &plan.model;
            println!("model blocks {:?}, t = {t}", m.dims());
            print_matrix("C(t)", &covariance_paper(m).eval(t));
            print_matrix("C_+(t)", &covariance_sde(m).eval(t));
            print_matrix("E(t)", &propagator(m, -1).eval(t));
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            out,
            formats,
            sigma,
            jobs,
        } => {
            let mut plan = match parse_config(&config) {
                Ok(p) => p,
                Err(e) => return config_error(e),
            };
            if let Some(k) = sigma {
                plan = match plan.with_sigma_level(k) {
                    Ok(p) => p,
                    Err(e) => return config_error(e),
                };
            }
            let dir = out.unwrap_or_else(|| plan.output_dir.clone());
            let formats = formats.unwrap_or_else(|| plan.formats.clone());
            let report = run_suite(&plan, jobs.or_else(jobs_from_env));
            if let Err(e) = emit_report(&report, &formats, &dir, plan.mc.sigma_level) {
                eprintln!("error: cannot write reports to {}: {e}", dir.display());
                return ExitCode::from(CONFIG_ERROR);
            }
            let s = report.summary;
            println!(
                "{} checks: {} pass, {} fail, {} skip ({:.2} s)",
                report.reports.len(),
                s.pass,
                s.fail,
                s.skip,
                report.wall_time
            );
            ExitCode::from(report.exit_code() as u8)
        }
        Command::Plot { report, out } => {
            let parsed = match read_report(&report) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", report.display());
                    return ExitCode::from(CONFIG_ERROR);
                }
            };
            let dir = out.unwrap_or_else(|| report.parent().map(PathBuf::from).unwrap_or_default());
            match plot_margins(&parsed, &dir) {
                Ok(p) => {
                    println!("wrote {}", p.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(CONFIG_ERROR)
                }
            }
        }
    }
}
