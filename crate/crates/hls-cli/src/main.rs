//! `hls` — command-line front end for the hybrid least-squares toolkit.
//!
//! Four subcommands cover the workflow end to end: `run` drives a configured
//! experiment and writes its report, `allocate` splits an evaluation budget
//! across a saved sample design, `price` brute-forces a spread-option quote
//! surface by Monte Carlo, and `calibrate` fits volatilities to quotes
//! through a saved surrogate.
//!
//! Default output paths resolve against `HLS_OUTPUT_ROOT` (falling back to
//! the current directory). Exit codes: 0 on success, 2 when inputs or
//! configuration are at fault, 3 when a computation breaks down numerically.

use clap::{Args, Parser, Subcommand};
use hls_core::allocation::{
    a_optimal_allocation, integerize, neyman_allocation, support_sparsity, uniform_allocation,
    NoiseSource,
};
use hls_core::basis::tensor_legendre_basis;
use hls_core::finance::{
    calibrate, load_spread_surrogate, save_calibration_rows, synth_market, BSModel,
    CalibrationRow, QuoteGrid,
};
use hls_core::harness::{emit_report, output_root};
use hls_core::table::{read_csv, read_header};
use hls_core::{
    Allocation, ExperimentConfig, HlsError, HyperRectangle, NoiseProfile, Result, SampleDesign,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "hls",
    version,
    about = "Hybrid least-squares approximation of functions from noisy point evaluations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write its report files.
    Run(RunArgs),
    /// Split an evaluation budget across the points of a saved design.
    Allocate(AllocateArgs),
    /// Price a spread-option quote surface by plain Monte Carlo.
    Price(PriceArgs),
    /// Fit model volatilities to a quote surface through a saved surrogate.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment description (key = value lines; see the crate docs for
    /// the recognized keys). The report lands under HLS_OUTPUT_ROOT in a
    /// directory named by the config's `output_dir`.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct AllocateArgs {
    /// Design CSV as written by the sampler: columns `x1..xd,weight`.
    #[arg(long)]
    design: PathBuf,

    /// Conditional variances at the design points: a one-column CSV
    /// (`sigma2`), one row per design point.
    #[arg(long)]
    noise: PathBuf,

    /// Allocation rule.
    #[arg(long, value_parser = ["uniform", "neyman", "aopt"])]
    kind: String,

    /// Simplex floor δ for the A-optimal solver: a float or `c/m` with m
    /// the number of design points. Ignored by the closed-form rules.
    #[arg(long, default_value = "1/m")]
    delta: String,

    /// Total evaluation budget L to integerize the shares against.
    #[arg(long, default_value_t = 1000)]
    budget: usize,

    /// Tensor-Legendre degree of the basis the design was sampled for. The
    /// design CSV stores points and weights only, so the basis must be
    /// restated here and has to match the original or the optimized shares
    /// are meaningless.
    #[arg(long, default_value_t = 6)]
    degree: usize,

    /// Output CSV path (default: allocation-<kind>.csv under the output root).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PriceArgs {
    /// Model volatilities and correlation as `sigma1,sigma2,rho`; spots and
    /// rate are the standard two-asset setup.
    #[arg(long)]
    model: String,

    /// Cell list with columns `T,K` (extra columns are ignored, so a
    /// previously priced surface works as input). The cells must form a
    /// complete maturity × strike grid.
    #[arg(long)]
    grid: PathBuf,

    /// Monte Carlo draws per grid cell.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,

    /// RNG seed for the price draws.
    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Output CSV path (default: quotes.csv under the output root).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Quote surface CSV (`T,K,price,mc_samples,seed`).
    #[arg(long)]
    quotes: PathBuf,

    /// Directory holding a persisted surrogate (basis, snapshot draws,
    /// coefficients).
    #[arg(long)]
    surrogate: PathBuf,

    /// Correlation held fixed during the fit.
    #[arg(long, default_value_t = -0.3, allow_hyphen_values = true)]
    rho: f64,

    /// Starting volatilities as `sigma1,sigma2`.
    #[arg(long, default_value = "0.2,0.2")]
    init: String,

    /// Optional CSV to append the fitted row to
    /// (`replicate,pipeline,sigma1_hat,sigma2_hat,loss,iterations`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(if e.is_config() { 2 } else { 3 });
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Allocate(args) => cmd_allocate(args),
        Command::Price(args) => cmd_price(args),
        Command::Calibrate(args) => cmd_calibrate(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = ExperimentConfig::from_file(&args.config)?;
    let report = hls_core::run_experiment(&config)?;
    let dir = output_root().join(config.report_dir_name());
    let files = emit_report(&report, &dir)?;
    println!(
        "{} finished: {} result rows, {} calibration rows",
        config.experiment,
        report.rows.len(),
        report.calibration.len()
    );
    for (name, value) in &report.extras {
        println!("  {name} = {value:.6e}");
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_allocate(args: AllocateArgs) -> Result<()> {
    let header = read_header(&args.design)?;
    if header.len() < 2 || header.last().map(String::as_str) != Some("weight") {
        return Err(HlsError::Config(format!(
            "{}: expected design columns x1..xd,weight, found {:?}",
            args.design.display(),
            header
        )));
    }
    let dim = header.len() - 1;
    let rows = read_csv(&args.design)?;
    let mut points = Vec::with_capacity(rows.len());
    let mut weights = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim + 1 {
            return Err(HlsError::Config(format!(
                "{}: row {i} has {} fields, expected {}",
                args.design.display(),
                row.len(),
                dim + 1
            )));
        }
        let (x, w) = row.split_at(dim);
        if let Some(bad) = x.iter().find(|c| c.abs() > 1.0) {
            return Err(HlsError::Config(format!(
                "{}: row {i} has coordinate {bad}, outside the [-1,1]^{dim} \
                 domain of a tensor-Legendre design",
                args.design.display()
            )));
        }
        points.push(x.to_vec());
        weights.push(w[0]);
    }

    let basis = tensor_legendre_basis(&HyperRectangle::symmetric_cube(dim), args.degree)?;
    let design = SampleDesign::assemble(
        basis,
        points,
        weights,
        None,
        format!("loaded({}, degree {})", args.design.display(), args.degree),
    )?;

    let noise_rows = read_csv(&args.noise)?;
    if noise_rows[0].len() != 1 {
        return Err(HlsError::Config(format!(
            "{}: expected a single sigma2 column, found width {}",
            args.noise.display(),
            noise_rows[0].len()
        )));
    }
    let noise = NoiseProfile::new(
        noise_rows.iter().map(|r| r[0]).collect(),
        NoiseSource::Exact,
    )?;

    let alloc: Allocation = match args.kind.as_str() {
        "uniform" => uniform_allocation(&design, &noise)?,
        "neyman" => neyman_allocation(&design, &noise)?,
        "aopt" => {
            let delta = parse_delta(&args.delta, design.m())?;
            a_optimal_allocation(&design, &noise, args.budget, delta)?
        }
        other => unreachable!("clap admits no kind {other:?}"),
    };
    let counts = integerize(&alloc, args.budget)?;
    let out = args
        .out
        .unwrap_or_else(|| output_root().join(format!("allocation-{}.csv", alloc.kind())));
    alloc.save(&design, &counts, &out)?;
    println!(
        "{} allocation over m = {} points: support {}, objective {:.6e}",
        alloc.kind(),
        design.m(),
        support_sparsity(&alloc),
        alloc.objective_value()
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_price(args: PriceArgs) -> Result<()> {
    let [sigma1, sigma2, rho] = parse_floats(&args.model, "--model")?;
    let model = BSModel::standard(sigma1, sigma2, rho)?;

    let header = read_header(&args.grid)?;
    let col = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| {
            HlsError::Config(format!(
                "{}: no {name} column in header {:?}",
                args.grid.display(),
                header
            ))
        })
    };
    let (it, ik) = (col("T")?, col("K")?);
    let rows = read_csv(&args.grid)?;
    let mut cells = std::collections::HashSet::with_capacity(rows.len());
    let mut maturities = Vec::new();
    let mut strikes = Vec::new();
    for row in &rows {
        let (t, k) = (row[it], row[ik]);
        if !(t.is_finite() && k.is_finite()) {
            return Err(HlsError::Config(format!(
                "{}: non-finite grid cell ({t}, {k})",
                args.grid.display()
            )));
        }
        if !cells.insert((t.to_bits(), k.to_bits())) {
            return Err(HlsError::Config(format!(
                "{}: duplicate grid cell ({t}, {k})",
                args.grid.display()
            )));
        }
        maturities.push(t);
        strikes.push(k);
    }
    maturities.sort_by(|a, b| a.partial_cmp(b).unwrap());
    maturities.dedup();
    strikes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    strikes.dedup();
    if maturities.len() * strikes.len() != rows.len() {
        return Err(HlsError::Config(format!(
            "{}: cells do not form a complete grid ({} maturities × {} strikes ≠ {} rows)",
            args.grid.display(),
            maturities.len(),
            strikes.len(),
            rows.len()
        )));
    }

    let quotes = synth_market(&model, &maturities, &strikes, args.samples, args.seed)?;
    let out = args.out.unwrap_or_else(|| output_root().join("quotes.csv"));
    quotes.save(&out)?;
    println!(
        "priced a {} × {} grid at {} draws per cell",
        maturities.len(),
        strikes.len(),
        args.samples
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let quotes = QuoteGrid::load(&args.quotes)?;
    let surrogate = load_spread_surrogate(&args.surrogate)?;
    let init = parse_floats::<2>(&args.init, "--init")?;
    let result = calibrate(&surrogate, &quotes, args.rho, init)?;
    let label = format!(
        "{}{}",
        surrogate.pipeline(),
        if surrogate.projected() { "-proj" } else { "" }
    );
    println!(
        "{label}: sigma1_hat = {:.6}, sigma2_hat = {:.6}, loss = {:.6e}, {} iterations{}",
        result.sigma[0],
        result.sigma[1],
        result.loss,
        result.iterations,
        if result.converged { "" } else { " (gradient tolerance not reached)" }
    );
    if let Some(out) = args.out {
        save_calibration_rows(
            &out,
            &[CalibrationRow {
                replicate: 0,
                pipeline: label,
                sigma1_hat: result.sigma[0],
                sigma2_hat: result.sigma[1],
                loss: result.loss,
                iterations: result.iterations,
            }],
        )?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

/// Parses the simplex floor: a plain float, or `c/m` scaled by the design
/// size (the usual way δ is quoted).
fn parse_delta(rule: &str, m: usize) -> Result<f64> {
    let bad = || HlsError::Config(format!("delta rule {rule:?}: use a float or c/m"));
    let rule = rule.trim();
    match rule.split_once('/') {
        Some((num, den)) => {
            if den.trim() != "m" {
                return Err(bad());
            }
            let c: f64 = num.trim().parse().map_err(|_| bad())?;
            Ok(c / m as f64)
        }
        None => rule.parse().map_err(|_| bad()),
    }
}

/// Parses exactly `N` comma-separated floats.
fn parse_floats<const N: usize>(text: &str, what: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(HlsError::Config(format!(
            "{what} needs {N} comma-separated values, got {:?}",
            text
        )));
    }
    let mut out = [0.0; N];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part.parse().map_err(|_| {
            HlsError::Config(format!("{what}: {part:?} is not a number"))
        })?;
    }
    Ok(out)
}
