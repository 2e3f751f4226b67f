use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use linfermi_cli::{
    fig2_peak_checks, render_csv, run_fig2a, run_fig2b, run_ness, run_thermo, run_verify,
    write_output, CliError, ExperimentConfig,
};

/// Thermal and stationary states of quadratic fermion chains.
#[derive(Parser)]
#[command(name = "linfermi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path (CSV for sweeps, table for verify).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Enable dense-oracle cross checks where sizes permit.
    #[arg(long)]
    oracle: bool,
    /// Bond-dimension cap override.
    #[arg(long)]
    chi: Option<usize>,
    /// Relative truncation threshold override.
    #[arg(long)]
    tau: Option<f64>,
    /// Root branch override for single-amplitude bath families.
    #[arg(long, value_parser = ["plus", "minus"])]
    branch: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the grand-canonical state and report its partition function
    /// and occupations.
    Thermo(CommonArgs),
    /// Build the stationary state of the configured baths.
    Ness(CommonArgs),
    /// Run the invariant suite for a configuration.
    Verify(CommonArgs),
    /// Overlap sweep over the inverse temperature at fixed fugacity.
    Fig2a(CommonArgs),
    /// Overlap sweep over the off-diagonal strength at fixed temperature.
    Fig2b(CommonArgs),
}

fn load_config(args: &CommonArgs, default: Option<ExperimentConfig>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.config, default) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(d)) => d,
        (None, None) => {
            return Err(CliError::Config(
                "this command needs --config <path>".into(),
            ))
        }
    };
    if let Some(chi) = args.chi {
        cfg.solver.chi = chi;
    }
    if let Some(tau) = args.tau {
        cfg.solver.tau = tau;
    }
    if args.oracle {
        cfg.solver.oracle = true;
    }
    if let Some(branch) = &args.branch {
        if let linfermi_cli::BathSpec::Theorem1 { branch: b, .. } = &mut cfg.bath {
            *b = if branch == "minus" {
                linfermi_cli::BranchSpec::Minus
            } else {
                linfermi_cli::BranchSpec::Plus
            };
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(args: &CommonArgs, cfg: &ExperimentConfig, text: &str) -> Result<(), CliError> {
    if let Some(path) = args.out.as_ref().or(cfg.output.csv.as_ref()) {
        write_output(path, text)?;
        eprintln!("wrote {}", path.display());
    } else {
        print!("{text}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Thermo(args) => {
            let cfg = load_config(&args, None)?;
            let summary = run_thermo(&cfg)?;
            let mut text = format!("log_xi,{:.11e}\n", summary.log_xi);
            for (k, f) in summary.occupations.iter().enumerate() {
                text.push_str(&format!("occupation_{k},{f:.11e}\n"));
            }
            text.push_str(&format!(
                "max_bond,{}\ntruncation_weight,{:.11e}\n",
                summary.bond_dims.iter().copied().max().unwrap_or(1),
                summary.truncation_weight
            ));
            emit(&args, &cfg, &text)?;
        }
        Command::Ness(args) => {
            let cfg = load_config(&args, None)?;
            let summary = run_ness(&cfg)?;
            let mut text = format!(
                "route,{}\nstationarity_residual,{:.11e}\n",
                summary.route, summary.stationarity_residual
            );
            if let Some(dim) = summary.kernel_dim {
                text.push_str(&format!("kernel_dim,{dim}\n"));
            }
            text.push_str(&format!(
                "max_bond,{}\n",
                summary.bond_dims.iter().copied().max().unwrap_or(1)
            ));
            emit(&args, &cfg, &text)?;
        }
        Command::Verify(args) => {
            let cfg = load_config(&args, None)?;
            let report = run_verify(&cfg)?;
            emit(&args, &cfg, &report.render_table())?;
            if !report.all_pass() {
                return Err(CliError::Verification(
                    "one or more checks failed".into(),
                ));
            }
        }
        Command::Fig2a(args) => {
            let cfg = load_config(&args, Some(ExperimentConfig::fig2a_default()))?;
            let rows = run_fig2a(&cfg)?;
            emit(&args, &cfg, &render_csv(&rows))?;
            let note = fig2_peak_checks(&rows)?;
            eprintln!("{note}");
        }
        Command::Fig2b(args) => {
            let cfg = load_config(&args, Some(ExperimentConfig::fig2b_default()))?;
            let rows = run_fig2b(&cfg)?;
            emit(&args, &cfg, &render_csv(&rows))?;
            let note = fig2_peak_checks(&rows)?;
            eprintln!("{note}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Verification(_) => ExitCode::from(3),
            }
        }
    }
}
