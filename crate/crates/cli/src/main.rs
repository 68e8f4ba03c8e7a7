use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use poolcorr::constellation::{
    build_constellation, diagnose, parse_constellation, write_constellation, DIAGNOSIS_TOLERANCE,
};
use poolcorr::implied::implied_rho_single;
use poolcorr::mc_oracle::regression_battery;
use poolcorr::poolvar::var_dr_grid;
use poolcorr_cli::emit::{to_csv, to_svg};
use poolcorr_cli::mc::{run_mc_check, Z_LIMIT};
use poolcorr_cli::spec::{CellStatus, ExperimentSpec};
use poolcorr_cli::stacking::{run_stacking_spec, STACKING_SLACK};
use poolcorr_cli::sweep::{evaluate, run_sweep, sweep_succeeded, SweepTable};

#[derive(Parser)]
#[command(
    name = "poolcorr",
    version,
    about = "Implied asset correlation of inhomogeneous credit pools"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Svg,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a single configuration.
    Eval {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run a one- or two-axis sweep.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Compare combined PD and correlation spread with the product of the two.
    Stacking {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run the Monte Carlo regression battery.
    McCheck {
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build or inspect exposure constellations.
    Constellation {
        #[command(subcommand)]
        action: ConstellationAction,
    },
}

#[derive(Subcommand)]
enum ConstellationAction {
    /// Build the constellation of a spec without axes.
    Build {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the moments of a constellation file, optionally against a spec.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    ExperimentSpec::from_path(path).with_context(|| format!("loading spec {}", path.display()))
}

fn single_point(spec: &ExperimentSpec, path: &Path) -> Result<()> {
    if !spec.axes.is_empty() {
        bail!("{} declares sweep axes; use `sweep`", path.display());
    }
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn emit(table: &SweepTable, out: Option<&Path>, format: Format) -> Result<()> {
    match format {
        Format::Csv => write_or_print(out, &to_csv(table)),
        Format::Svg => write_or_print(out, &to_svg(table)),
        Format::Both => {
            let base = out.context("--format both needs --out")?;
            write_or_print(Some(&base.with_extension("csv")), &to_csv(table))?;
            write_or_print(Some(&base.with_extension("svg")), &to_svg(table))
        }
    }
}

fn report_blanks(table: &SweepTable) {
    for (i, j, c) in table.iter_cells() {
        if c.status != CellStatus::Ok {
            eprintln!(
                "{} = {}, {} = {}: {} ({})",
                table.row_name,
                table.row_labels[i],
                table.col_name,
                table.col_labels[j],
                c.status,
                c.message.as_deref().unwrap_or("")
            );
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Eval { spec: path } => {
            let spec = load_spec(&path)?;
            single_point(&spec, &path)?;
            let c =
                build_constellation(&spec.base, &spec.params).context("building constellation")?;
            let d = diagnose(&c);
            let m = var_dr_grid(&c);
            println!("exposures      {}", c.n());
            println!("buckets        {} x {}", d.k_effective, d.l_effective);
            println!("p_mean         {:.6e}", d.achieved.p_mean);
            println!("p_median       {:.6e}", d.p_median);
            println!("p_spread       {:.6}", d.achieved.p_spread.value);
            println!("rho_mean       {:.6}", d.achieved.rho_mean);
            println!("rho_spread     {:.6}", d.achieved.rho_spread);
            println!("tau            {:.6}", d.achieved.tau);
            println!("variance       {:.10e}", m.variance);
            println!("systematic     {:.10e}", m.systematic);
            let cell = evaluate(&spec.base, &spec.params);
            match (cell.rho_tilde, cell.rho_percent) {
                (Some(r), Some(pct)) => {
                    println!("rho_tilde      {r:.10}");
                    println!("rho_percent    {:.4}%", 100.0 * pct);
                    Ok(ExitCode::SUCCESS)
                }
                _ => {
                    println!("status         {}", cell.status);
                    if let Err(e) = implied_rho_single(m.variance, m.mean, c.n()) {
                        println!("reason         {e}");
                    }
                    Ok(if spec.is_allowed(cell.status) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    })
                }
            }
        }
        Command::Sweep {
            spec: path,
            out,
            format,
        } => {
            let spec = load_spec(&path)?;
            let table = run_sweep(&spec);
            let out = out.or_else(|| spec.out.clone());
            emit(&table, out.as_deref(), format)?;
            report_blanks(&table);
            Ok(if sweep_succeeded(&spec, &table) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Stacking {
            spec: path,
            out,
            format,
        } => {
            let spec = load_spec(&path)?;
            let table = run_stacking_spec(&spec).map_err(anyhow::Error::msg)?;
            let out = out.or_else(|| spec.out.clone());
            emit(&table.to_sweep_table(), out.as_deref(), format)?;
            let mut ok = table.all_evaluated();
            for r in &table.rows {
                match r.holds() {
                    Some(true) => {}
                    Some(false) => {
                        ok = false;
                        eprintln!(
                            "p_mean = {}: combined {:.4} exceeds product {:.4} + {STACKING_SLACK}",
                            r.p_mean,
                            r.combined.value().unwrap_or(f64::NAN),
                            r.product().unwrap_or(f64::NAN)
                        );
                    }
                    None => eprintln!("p_mean = {}: not all variants could be evaluated", r.p_mean),
                }
            }
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::McCheck { seed, out } => {
            let report = run_mc_check(&regression_battery(seed));
            for l in &report.lines {
                eprintln!(
                    "{:<34} {:>8} trials  z = {:+.2}{}",
                    l.name,
                    l.trials,
                    l.z,
                    l.warning
                        .as_deref()
                        .map(|w| format!("  ({w})"))
                        .unwrap_or_default()
                );
            }
            write_or_print(out.as_deref(), &report.to_csv())?;
            eprintln!("max |z| = {:.2} (limit {Z_LIMIT})", report.max_abs_z());
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Constellation { action } => match action {
            ConstellationAction::Build { spec: path, out } => {
                let spec = load_spec(&path)?;
                single_point(&spec, &path)?;
                let c = build_constellation(&spec.base, &spec.params)
                    .context("building constellation")?;
                write_or_print(out.as_deref(), &write_constellation(&c))?;
                Ok(ExitCode::SUCCESS)
            }
            ConstellationAction::Diagnose { input, spec } => {
                let text = std::fs::read_to_string(&input)
                    .with_context(|| format!("reading {}", input.display()))?;
                let c = parse_constellation(&text)
                    .with_context(|| format!("parsing {}", input.display()))?;
                let d = diagnose(&c);
                println!("exposures      {}", c.n());
                println!("buckets        {} x {}", d.k_effective, d.l_effective);
                println!("p_mean         {:.6e}", d.achieved.p_mean);
                println!("p_median       {:.6e}", d.p_median);
                println!("p_sigma        {:.6e}", d.p_sigma);
                println!("p_spread       {:.6}", d.achieved.p_spread.value);
                println!("rho_mean       {:.6}", d.achieved.rho_mean);
                println!("rho_sigma      {:.6e}", d.rho_sigma);
                println!("rho_spread     {:.6}", d.achieved.rho_spread);
                println!("tau            {:.6}", d.achieved.tau);
                let Some(sp) = spec else {
                    return Ok(ExitCode::SUCCESS);
                };
                let spec = load_spec(&sp)?;
                single_point(&spec, &sp)?;
                let check = d.check(&spec.base, spec.params.p_mid, DIAGNOSIS_TOLERANCE);
                let e = check.errors;
                println!(
                    "errors         p_mean {:.2e}  p_sigma {:.2e}  rho_mean {:.2e}  rho_sigma {:.2e}  tau {:.2e}",
                    e.p_mean, e.p_sigma, e.rho_mean, e.rho_sigma, e.tau
                );
                println!("anchor         {:.6e}", check.anchor);
                println!("pass           {}", check.pass);
                Ok(if check.pass {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(2)
                })
            }
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
