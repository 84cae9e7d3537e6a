//! Batch experiment driver.
//!
//! A flat `key = value` config file selects one of five experiments and
//! overrides the documented defaults; [`run_experiment`] wires the sampling,
//! allocation, evaluation, and decoding stages into that study and returns an
//! [`ExperimentReport`]; [`emit_report`] writes the report as tidy CSVs plus
//! a manifest. Everything downstream of a (config, master seed) pair is
//! deterministic: replicates run on derived substreams and all parallel
//! reductions fold in a fixed order, so a rerun reproduces the data CSVs
//! byte for byte. Wall-clock timings are kept out of the hashed artifacts
//! for exactly that reason.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::allocation::{condition_j, support_sparsity, Allocation};
use crate::basis::{christoffel, tensor_legendre_basis, BasisSet, ScalarFn};
use crate::constraint::project_approximant;
use crate::decoder::{
    allocate_for, decode_plain, decode_reweighted, estimate_variance, evaluate_budget,
    mse_quadrature, mse_test_points, run_erm, sample_design, tag, Approximant, NoisyOracle,
    Pipeline,
};
use crate::domain::{
    generate_points, mix_seed, quadrature_integral, standard_normal, HyperRectangle,
    PointStream, ProductMeasure,
};
use crate::error::{HlsError, Result};
use crate::finance::{
    calibrate, discounted_spread_payoff, payoff_field, spread_domain, synth_market, BSModel,
    CalibrationRow, QuoteGrid,
};
use crate::random_subspace::{build_subspace, empirical_kernel_spectrum, reused_snapshot_variance};
use crate::sampler::{AcceptRule, BoostingPolicy};
use crate::table::fmt_f64;

/// Environment variable naming the directory all report directories are
/// created under. Unset or empty means the current working directory.
pub const OUTPUT_ROOT_ENV: &str = "HLS_OUTPUT_ROOT";

/// Resolves the output root from [`OUTPUT_ROOT_ENV`].
pub fn output_root() -> PathBuf {
    match std::env::var(OUTPUT_ROOT_ENV) {
        Ok(v) if !v.trim().is_empty() => PathBuf::from(v),
        _ => PathBuf::from("."),
    }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

/// Which study a config runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Bivariate polynomial recovery under state-dependent Gaussian noise:
    /// all four pipelines over a γ budget ladder, MSE by quadrature.
    Synthetic,
    /// Spread-option surrogate study on random payoff subspaces.
    FinanceSurrogate,
    /// Surrogate study plus the volatility calibration loop.
    FinanceCalibrate,
    /// One design, three allocations, no evaluation: allocation diagnostics.
    AllocateOnly,
    /// Empirical covariance spectrum of the payoff field.
    SubspaceDiagnostics,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Synthetic => "synthetic",
            ExperimentKind::FinanceSurrogate => "finance-surrogate",
            ExperimentKind::FinanceCalibrate => "finance-calibrate",
            ExperimentKind::AllocateOnly => "allocate-only",
            ExperimentKind::SubspaceDiagnostics => "subspace-diagnostics",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = HlsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(ExperimentKind::Synthetic),
            "finance-surrogate" => Ok(ExperimentKind::FinanceSurrogate),
            "finance-calibrate" => Ok(ExperimentKind::FinanceCalibrate),
            "allocate-only" => Ok(ExperimentKind::AllocateOnly),
            "subspace-diagnostics" => Ok(ExperimentKind::SubspaceDiagnostics),
            other => Err(HlsError::Config(format!(
                "unknown experiment '{other}'; expected synthetic, finance-surrogate, \
                 finance-calibrate, allocate-only, or subspace-diagnostics"
            ))),
        }
    }
}

/// Every knob of every experiment, with defaults matching the study
/// protocols. Parsed from a flat `key = value` file; unknown keys are
/// errors, `#` starts a comment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Tensor-Legendre degrees D for the synthetic study; n = (D+1)²,
    /// m = 3n.
    pub degrees: Vec<usize>,
    /// Budget ladder multipliers; the evaluation budget is
    /// L = budget_per_gamma · γ.
    pub gammas: Vec<usize>,
    pub budget_per_gamma: usize,
    /// Monte Carlo draws per design point for offline variance estimation.
    pub variance_draws: usize,
    /// Coupled trials per cell.
    pub replicates: usize,
    /// Gauss–Legendre level per axis for the synthetic MSE.
    pub quadrature_level: usize,
    /// Gauss–Legendre level per axis for the variance-factor ratio.
    pub ratio_level: usize,
    /// The A-optimal floor is δ = delta_scale / m, so any value in (0, 1]
    /// keeps δ inside its admissible range (0, 1/m].
    pub delta_scale: f64,
    /// Snapshot count n of the random payoff subspace.
    pub subspace_dim: usize,
    /// Scrambled-Sobol grid size Q carrying the discretized subspace.
    pub grid_size: usize,
    /// Design size m for the finance study.
    pub design_size: usize,
    /// Evaluation budget L for the finance study.
    pub finance_budget: usize,
    /// Condition-number boosting: trials per design and acceptance
    /// threshold.
    pub boost_trials: usize,
    pub cond_threshold: f64,
    /// Fixed uniform test set size for finance errors.
    pub test_points: usize,
    /// Monte Carlo draws per test point for the reference prices.
    pub oracle_samples: usize,
    /// Monte Carlo draws per quote of the synthetic market surface.
    pub quote_samples: usize,
    pub master_seed: u64,
    /// Report directory name; empty means "<experiment>-<master_seed>".
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Synthetic,
            degrees: vec![4, 5, 6],
            gammas: vec![10, 30, 100, 300, 1000],
            budget_per_gamma: 250,
            variance_draws: 50,
            replicates: 100,
            quadrature_level: 32,
            ratio_level: 64,
            delta_scale: 0.01,
            subspace_dim: 100,
            grid_size: 1 << 16,
            design_size: 500,
            finance_budget: 500_000,
            boost_trials: 50,
            cond_threshold: 2.5,
            test_points: 1000,
            oracle_samples: 500_000,
            quote_samples: 500_000,
            master_seed: 42,
            output_dir: String::new(),
        }
    }
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value.parse().map_err(|_| {
        HlsError::Config(format!("key '{key}': expected {what}, got '{value}'"))
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|tok| parse_scalar(key, tok.trim(), "a comma-separated list of integers"))
        .collect()
}

impl ExperimentConfig {
    /// Parses a flat `key = value` config text. All keys are optional except
    /// `experiment`; every key may appear at most once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut has_experiment = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HlsError::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(HlsError::Config(format!("key '{key}' appears twice")));
            }
            seen.push(key.to_string());
            match key {
                "experiment" => {
                    cfg.experiment = value.parse()?;
                    has_experiment = true;
                }
                "degrees" => cfg.degrees = parse_list(key, value)?,
                "gammas" => cfg.gammas = parse_list(key, value)?,
                "budget_per_gamma" => {
                    cfg.budget_per_gamma = parse_scalar(key, value, "an integer")?
                }
                "variance_draws" => cfg.variance_draws = parse_scalar(key, value, "an integer")?,
                "replicates" => cfg.replicates = parse_scalar(key, value, "an integer")?,
                "quadrature_level" => {
                    cfg.quadrature_level = parse_scalar(key, value, "an integer")?
                }
                "ratio_level" => cfg.ratio_level = parse_scalar(key, value, "an integer")?,
                "delta_scale" => cfg.delta_scale = parse_scalar(key, value, "a number")?,
                "subspace_dim" => cfg.subspace_dim = parse_scalar(key, value, "an integer")?,
                "grid_size" => cfg.grid_size = parse_scalar(key, value, "an integer")?,
                "design_size" => cfg.design_size = parse_scalar(key, value, "an integer")?,
                "finance_budget" => cfg.finance_budget = parse_scalar(key, value, "an integer")?,
                "boost_trials" => cfg.boost_trials = parse_scalar(key, value, "an integer")?,
                "cond_threshold" => cfg.cond_threshold = parse_scalar(key, value, "a number")?,
                "test_points" => cfg.test_points = parse_scalar(key, value, "an integer")?,
                "oracle_samples" => cfg.oracle_samples = parse_scalar(key, value, "an integer")?,
                "quote_samples" => cfg.quote_samples = parse_scalar(key, value, "an integer")?,
                "master_seed" => cfg.master_seed = parse_scalar(key, value, "an integer")?,
                "output_dir" => cfg.output_dir = value.to_string(),
                other => {
                    return Err(HlsError::Config(format!("unknown config key '{other}'")));
                }
            }
        }
        if !has_experiment {
            return Err(HlsError::Config("config must set 'experiment'".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HlsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HlsError::Config(msg));
        if self.degrees.is_empty() || self.degrees.iter().any(|&d| !(1..=10).contains(&d)) {
            return fail(format!("degrees must be a nonempty list within 1..=10, got {:?}", self.degrees));
        }
        if self.gammas.is_empty() || self.gammas.contains(&0) {
            return fail(format!("gammas must be a nonempty list of positive integers, got {:?}", self.gammas));
        }
        if self.budget_per_gamma == 0 {
            return fail("budget_per_gamma must be positive".into());
        }
        if self.variance_draws < 2 {
            return fail(format!("variance_draws must be at least 2, got {}", self.variance_draws));
        }
        if self.replicates == 0 {
            return fail("replicates must be positive".into());
        }
        if self.quadrature_level == 0 || self.ratio_level == 0 {
            return fail("quadrature levels must be positive".into());
        }
        if !(self.delta_scale > 0.0 && self.delta_scale <= 1.0) {
            return fail(format!(
                "delta_scale must lie in (0, 1] so that δ = delta_scale/m stays in (0, 1/m]; got {}",
                self.delta_scale
            ));
        }
        if self.subspace_dim < 2 {
            return fail(format!("subspace_dim must be at least 2, got {}", self.subspace_dim));
        }
        if self.grid_size < self.subspace_dim {
            return fail(format!(
                "grid_size = {} cannot carry {} snapshots",
                self.grid_size, self.subspace_dim
            ));
        }
        if self.design_size < self.subspace_dim {
            return fail(format!(
                "design_size = {} is below subspace_dim = {}",
                self.design_size, self.subspace_dim
            ));
        }
        if self.finance_budget < self.design_size {
            return fail(format!(
                "finance_budget = {} cannot visit all {} design points",
                self.finance_budget, self.design_size
            ));
        }
        if self.boost_trials == 0 {
            return fail("boost_trials must be positive".into());
        }
        if !(self.cond_threshold > 1.0) {
            return fail(format!("cond_threshold must exceed 1, got {}", self.cond_threshold));
        }
        if self.test_points == 0 {
            return fail("test_points must be positive".into());
        }
        if self.oracle_samples < 2 || self.quote_samples < 2 {
            return fail("oracle_samples and quote_samples must be at least 2".into());
        }
        Ok(())
    }

    /// Canonical `key = value` rendering of every knob, in a fixed order.
    /// `parse(canonical())` reproduces the config; the manifest embeds it.
    pub fn canonical(&self) -> String {
        let list = |v: &[usize]| {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.experiment);
        let _ = writeln!(s, "degrees = {}", list(&self.degrees));
        let _ = writeln!(s, "gammas = {}", list(&self.gammas));
        let _ = writeln!(s, "budget_per_gamma = {}", self.budget_per_gamma);
        let _ = writeln!(s, "variance_draws = {}", self.variance_draws);
        let _ = writeln!(s, "replicates = {}", self.replicates);
        let _ = writeln!(s, "quadrature_level = {}", self.quadrature_level);
        let _ = writeln!(s, "ratio_level = {}", self.ratio_level);
        let _ = writeln!(s, "delta_scale = {}", self.delta_scale);
        let _ = writeln!(s, "subspace_dim = {}", self.subspace_dim);
        let _ = writeln!(s, "grid_size = {}", self.grid_size);
        let _ = writeln!(s, "design_size = {}", self.design_size);
        let _ = writeln!(s, "finance_budget = {}", self.finance_budget);
        let _ = writeln!(s, "boost_trials = {}", self.boost_trials);
        let _ = writeln!(s, "cond_threshold = {}", self.cond_threshold);
        let _ = writeln!(s, "test_points = {}", self.test_points);
        let _ = writeln!(s, "oracle_samples = {}", self.oracle_samples);
        let _ = writeln!(s, "quote_samples = {}", self.quote_samples);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "output_dir = {}", self.output_dir);
        s
    }

    /// Directory name the report lands in under the output root.
    pub fn report_dir_name(&self) -> String {
        if self.output_dir.is_empty() {
            format!("{}-{}", self.experiment, self.master_seed)
        } else {
            self.output_dir.clone()
        }
    }

    fn boosting(&self) -> Result<BoostingPolicy> {
        BoostingPolicy::new(
            self.boost_trials,
            self.cond_threshold,
            AcceptRule::FirstBelowThreshold,
        )
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// One pipeline run inside one replicate of one study cell.
#[derive(Clone, Debug)]
pub struct ReportRow {
    /// Study cell: "D=6" for the synthetic runs, "n=100" for finance.
    pub group: String,
    pub pipeline: Pipeline,
    /// `false` for the raw least-squares decode, `true` after cone
    /// projection.
    pub projected: bool,
    /// γ for synthetic rows, L for finance rows.
    pub budget: u64,
    pub replicate: usize,
    pub mse: f64,
    /// Condition number of the weighted design; NaN for ERM, which has no
    /// design stage.
    pub cond: f64,
    /// Content hash of the design shared by the hybrid pipelines within the
    /// replicate; 0 for ERM.
    pub design_hash: u64,
    /// Wall-clock time of the evaluation + decode (+ projection) stages.
    /// Reported in a separate unhashed CSV because it is not reproducible.
    pub runtime_ms: f64,
    /// The replicate substream seed, for replaying a single row.
    pub seed: u64,
}

impl ReportRow {
    fn variant(&self) -> &'static str {
        if self.projected { "projected" } else { "regular" }
    }
}

/// Distribution summary of one (group, budget, pipeline, variant) cell.
#[derive(Clone, Debug)]
pub struct AggregateRow {
    pub group: String,
    pub pipeline: String,
    pub variant: String,
    pub budget: u64,
    pub count: usize,
    pub mean_mse: f64,
    pub mean_log10_mse: f64,
    pub median_log10_mse: f64,
    pub q1_log10_mse: f64,
    pub q3_log10_mse: f64,
}

/// Everything a run produces, ready for [`emit_report`].
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub calibration: Vec<CalibrationRow>,
    /// Named scalar diagnostics (variance-factor ratios, allocation
    /// objectives, …); echoed into the manifest.
    pub extras: Vec<(String, f64)>,
    /// Extra deterministic artifacts as (file name, contents).
    pub attachments: Vec<(String, String)>,
}

/// Interpolated quantile of a sorted slice (the linear convention).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

impl ExperimentReport {
    fn new(config: &ExperimentConfig) -> Self {
        ExperimentReport {
            config: config.clone(),
            rows: Vec::new(),
            calibration: Vec::new(),
            extras: Vec::new(),
            attachments: Vec::new(),
        }
    }

    /// One summary row per (group, budget, pipeline, variant), ordered.
    pub fn aggregates(&self) -> Vec<AggregateRow> {
        let mut cells: BTreeMap<(String, u64, String, String), Vec<f64>> = BTreeMap::new();
        for row in &self.rows {
            cells
                .entry((
                    row.group.clone(),
                    row.budget,
                    row.pipeline.to_string(),
                    row.variant().to_string(),
                ))
                .or_default()
                .push(row.mse);
        }
        cells
            .into_iter()
            .map(|((group, budget, pipeline, variant), mses)| {
                let mean_mse = mses.iter().sum::<f64>() / mses.len() as f64;
                let mut logs: Vec<f64> =
                    mses.iter().map(|&m| m.max(1e-300).log10()).collect();
                logs.sort_by(f64::total_cmp);
                AggregateRow {
                    group,
                    pipeline,
                    variant,
                    budget,
                    count: mses.len(),
                    mean_mse,
                    mean_log10_mse: logs.iter().sum::<f64>() / logs.len() as f64,
                    median_log10_mse: quantile(&logs, 0.5),
                    q1_log10_mse: quantile(&logs, 0.25),
                    q3_log10_mse: quantile(&logs, 0.75),
                }
            })
            .collect()
    }

    /// Mean MSE of one cell; the accessor the ordering checks are built on.
    pub fn mean_mse(&self, group: &str, pipeline: Pipeline, projected: bool, budget: u64) -> Option<f64> {
        let sel: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| {
                r.group == group
                    && r.pipeline == pipeline
                    && r.projected == projected
                    && r.budget == budget
            })
            .map(|r| r.mse)
            .collect();
        if sel.is_empty() {
            None
        } else {
            Some(sel.iter().sum::<f64>() / sel.len() as f64)
        }
    }

    /// Per-replicate MSEs of one cell, in replicate order.
    pub fn mse_series(&self, group: &str, pipeline: Pipeline, projected: bool, budget: u64) -> Vec<f64> {
        let mut sel: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter(|r| {
                r.group == group
                    && r.pipeline == pipeline
                    && r.projected == projected
                    && r.budget == budget
            })
            .map(|r| (r.replicate, r.mse))
            .collect();
        sel.sort_by_key(|&(rep, _)| rep);
        sel.into_iter().map(|(_, m)| m).collect()
    }

    /// Total wall time of one pipeline/variant across all rows.
    pub fn total_runtime_ms(&self, pipeline: Pipeline, projected: bool) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.pipeline == pipeline && r.projected == projected)
            .map(|r| r.runtime_ms)
            .sum()
    }

    /// True when, in every (group, replicate) pair, all pipelines with a
    /// design stage saw the same design.
    pub fn designs_coupled(&self) -> bool {
        let mut seen: BTreeMap<(String, usize), u64> = BTreeMap::new();
        for row in &self.rows {
            if row.design_hash == 0 {
                continue; // no design stage (ERM)
            }
            let key = (row.group.clone(), row.replicate);
            match seen.get(&key) {
                Some(&h) if h != row.design_hash => return false,
                Some(_) => {}
                None => {
                    seen.insert(key, row.design_hash);
                }
            }
        }
        true
    }

    fn rows_csv(&self) -> String {
        let mut s = String::from(
            "group,pipeline,variant,budget,replicate,mse,cond,design_hash,seed\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{:016x},{}",
                r.group,
                r.pipeline,
                r.variant(),
                r.budget,
                r.replicate,
                fmt_f64(r.mse),
                fmt_f64(r.cond),
                r.design_hash,
                r.seed
            );
        }
        s
    }

    fn aggregate_csv(&self) -> String {
        let mut s = String::from(
            "group,pipeline,variant,budget,count,mean_mse,mean_log10_mse,\
             median_log10_mse,q1_log10_mse,q3_log10_mse\n",
        );
        for a in self.aggregates() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                a.group,
                a.pipeline,
                a.variant,
                a.budget,
                a.count,
                fmt_f64(a.mean_mse),
                fmt_f64(a.mean_log10_mse),
                fmt_f64(a.median_log10_mse),
                fmt_f64(a.q1_log10_mse),
                fmt_f64(a.q3_log10_mse)
            );
        }
        s
    }

    fn calibration_csv(&self) -> String {
        let mut s = String::from("replicate,pipeline,sigma1_hat,sigma2_hat,loss,iterations\n");
        for r in &self.calibration {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.replicate,
                r.pipeline,
                fmt_f64(r.sigma1_hat),
                fmt_f64(r.sigma2_hat),
                fmt_f64(r.loss),
                r.iterations
            );
        }
        s
    }

    fn timings_csv(&self) -> String {
        let mut s = String::from("group,pipeline,variant,budget,replicate,runtime_ms\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.group,
                r.pipeline,
                r.variant(),
                r.budget,
                r.replicate,
                fmt_f64(r.runtime_ms)
            );
        }
        s
    }
}

fn fnv1a(h: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *h ^= b as u64;
        *h = h.wrapping_mul(0x100000001b3);
    }
}

/// Writes the report under `directory`: `rows.csv`, `aggregate.csv`,
/// `timings.csv`, any attachments, `calibration.csv` when calibration ran,
/// and `manifest.txt` carrying the canonical config, the master seed, and a
/// content hash over every deterministic artifact. Returns the written
/// paths. `timings.csv` holds wall-clock measurements and is deliberately
/// outside the hash.
pub fn emit_report(report: &ExperimentReport, directory: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(directory).map_err(|source| HlsError::Io {
        path: directory.display().to_string(),
        source,
    })?;
    let mut artifacts: Vec<(String, String)> = vec![
        ("rows.csv".into(), report.rows_csv()),
        ("aggregate.csv".into(), report.aggregate_csv()),
    ];
    if !report.calibration.is_empty() {
        artifacts.push(("calibration.csv".into(), report.calibration_csv()));
    }
    for (name, contents) in &report.attachments {
        artifacts.push((name.clone(), contents.clone()));
    }

    let mut hash = 0xcbf29ce484222325u64;
    for (name, contents) in &artifacts {
        fnv1a(&mut hash, name.as_bytes());
        fnv1a(&mut hash, contents.as_bytes());
    }

    let mut manifest = String::new();
    let _ = writeln!(manifest, "# experiment report manifest");
    manifest.push_str(&report.config.canonical());
    let _ = writeln!(manifest, "rows = {}", report.rows.len());
    let _ = writeln!(manifest, "calibration_rows = {}", report.calibration.len());
    for (name, value) in &report.extras {
        let _ = writeln!(manifest, "extra.{name} = {}", fmt_f64(*value));
    }
    let _ = writeln!(manifest, "content_hash = {hash:016x}");
    artifacts.push(("manifest.txt".into(), manifest));
    artifacts.push(("timings.csv".into(), report.timings_csv()));

    let mut written = Vec::with_capacity(artifacts.len());
    for (name, contents) in &artifacts {
        let path = directory.join(name);
        std::fs::write(&path, contents).map_err(|source| HlsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// Synthetic study
// ---------------------------------------------------------------------------

/// The bivariate target `f(z) = z₁² z₂ e^{z₁+z₂}` on `[-1,1]²`.
pub fn synthetic_target() -> ScalarFn {
    Arc::new(|x: &[f64]| x[0] * x[0] * x[1] * (x[0] + x[1]).exp())
}

/// Its noise level `σ(z) = 2(1.001 − ‖z‖_∞)²`: loud in the middle of the
/// square, nearly silent toward the boundary.
pub fn synthetic_sigma() -> ScalarFn {
    Arc::new(|x: &[f64]| {
        let d = 1.001 - x[0].abs().max(x[1].abs());
        2.0 * d * d
    })
}

/// `‖σ√Φₙ‖²_{L¹_μ} / ‖σ√Φₙ‖²_{L²_μ}` by tensor Gauss–Legendre quadrature.
/// This is the factor by which Neyman allocation shrinks the uniform
/// allocation's variance surrogate, so values well below 1 predict the
/// hybrid pipelines' gain.
pub fn variance_factor_ratio(
    basis: &Arc<BasisSet>,
    sigma: &ScalarFn,
    measure: &ProductMeasure,
    level: usize,
) -> Result<f64> {
    let phi = christoffel(basis);
    let s1 = Arc::clone(sigma);
    let p1 = phi.clone();
    let l1 = quadrature_integral(move |x| s1(x) * p1.phi(x).sqrt(), measure, level)?;
    let s2 = Arc::clone(sigma);
    let l2 = quadrature_integral(move |x| {
        let s = s2(x);
        s * s * phi.phi(x)
    }, measure, level)?;
    if l2 <= 0.0 {
        return Err(HlsError::Numerical(
            "variance factor undefined for identically zero σ√Φ".into(),
        ));
    }
    Ok(l1 * l1 / l2)
}

/// Runs the polynomial study: for each degree D a fixed Halton-induced
/// design is shared by every replicate, each replicate re-estimates the
/// noise profile and runs HLS-0/1/2 plus ERM over the whole budget ladder,
/// and errors are exact-quadrature distances to the closed-form target.
pub fn run_synthetic(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let f = synthetic_target();
    let sigma = synthetic_sigma();
    let domain = HyperRectangle::symmetric_cube(2);
    let measure = ProductMeasure::uniform(domain.clone());
    let mut report = ExperimentReport::new(config);

    for &degree in &config.degrees {
        let dctx = |e: HlsError| tag(&format!("synthetic D={degree}"), e);
        let basis = tensor_legendre_basis(&domain, degree).map_err(dctx)?;
        let n = basis.n();
        let m = 3 * n;
        let delta = config.delta_scale / m as f64;
        let ratio = variance_factor_ratio(&basis, &sigma, &measure, config.ratio_level)
            .map_err(dctx)?;
        report
            .extras
            .push((format!("variance_factor_ratio_D{degree}"), ratio));

        // The design is deterministic — induced sampling driven by the
        // Halton (2,3) stream — so all replicates and pipelines share it.
        let halton = PointStream::halton(&[2, 3]).map_err(dctx)?;
        let design = sample_design(&basis, m, None, &halton).map_err(dctx)?;
        let design_hash = design.content_hash();
        report
            .extras
            .push((format!("design_cond_D{degree}"), design.cond()));

        let sf = Arc::clone(&f);
        let ssig = Arc::clone(&sigma);
        let oracle = NoisyOracle::new(move |x: &[f64], rng: &mut ChaCha12Rng| {
            sf(x) + ssig(x) * standard_normal(rng)
        });
        let l_max = config.budget_per_gamma * config.gammas.iter().max().copied().unwrap_or(1);
        let deg_seed = mix_seed(config.master_seed, 0xD0 + degree as u64);

        let per_rep: Vec<Vec<ReportRow>> = (0..config.replicates)
            .into_par_iter()
            .map(|rep| -> Result<Vec<ReportRow>> {
                let ctx = |gamma: usize, pipeline: Pipeline, e: HlsError| {
                    tag(
                        &format!("synthetic D={degree} γ={gamma} {pipeline} replicate {rep}"),
                        e,
                    )
                };
                let rep_seed = mix_seed(deg_seed, rep as u64);
                let noise =
                    estimate_variance(&oracle, &design, config.variance_draws, mix_seed(rep_seed, 1))
                        .map_err(|e| ctx(0, Pipeline::Hls1, e))?;
                // Allocation shares do not depend on the budget, so compute
                // each pipeline's split once per replicate.
                let hybrid: Vec<(Pipeline, Allocation)> =
                    [Pipeline::Hls0, Pipeline::Hls1, Pipeline::Hls2]
                        .into_iter()
                        .map(|p| {
                            allocate_for(p, &design, &noise, l_max, delta)
                                .map(|a| (p, a))
                                .map_err(|e| ctx(0, p, e))
                        })
                        .collect::<Result<_>>()?;

                let mut rows = Vec::with_capacity(config.gammas.len() * 4);
                for (gi, &gamma) in config.gammas.iter().enumerate() {
                    let l = config.budget_per_gamma * gamma;
                    // Common random numbers: the hybrid pipelines at one γ
                    // share per-point substreams, coupling their errors.
                    let eval_seed = mix_seed(rep_seed, 0x100 + gi as u64);
                    for &(pipeline, ref alloc) in &hybrid {
                        let started = Instant::now();
                        let ev = evaluate_budget(&oracle, &design, alloc, l, eval_seed)
                            .map_err(|e| ctx(gamma, pipeline, e))?;
                        let approx = match pipeline {
                            Pipeline::Hls2 => decode_reweighted(&design, &ev, alloc, &noise, l),
                            _ => decode_plain(&design, &ev),
                        }
                        .map_err(|e| ctx(gamma, pipeline, e))?
                        .relabeled(pipeline);
                        let runtime_ms = started.elapsed().as_secs_f64() * 1e3;
                        let mse = mse_quadrature(&approx, &f, &measure, config.quadrature_level)
                            .map_err(|e| ctx(gamma, pipeline, e))?;
                        rows.push(ReportRow {
                            group: format!("D={degree}"),
                            pipeline,
                            projected: false,
                            budget: gamma as u64,
                            replicate: rep,
                            mse,
                            cond: design.cond(),
                            design_hash,
                            runtime_ms,
                            seed: rep_seed,
                        });
                    }
                    let started = Instant::now();
                    let mut stream = PointStream::iid(mix_seed(rep_seed, 0x200 + gi as u64), 2);
                    let approx = run_erm(
                        &basis,
                        &oracle,
                        l,
                        &domain,
                        &mut stream,
                        mix_seed(rep_seed, 0x300 + gi as u64),
                    )
                    .map_err(|e| ctx(gamma, Pipeline::Erm, e))?;
                    let runtime_ms = started.elapsed().as_secs_f64() * 1e3;
                    let mse = mse_quadrature(&approx, &f, &measure, config.quadrature_level)
                        .map_err(|e| ctx(gamma, Pipeline::Erm, e))?;
                    rows.push(ReportRow {
                        group: format!("D={degree}"),
                        pipeline: Pipeline::Erm,
                        projected: false,
                        budget: gamma as u64,
                        replicate: rep,
                        mse,
                        cond: f64::NAN,
                        design_hash: 0,
                        runtime_ms,
                        seed: rep_seed,
                    });
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        for rows in per_rep {
            report.rows.extend(rows);
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Finance study
// ---------------------------------------------------------------------------

/// Monte Carlo reference prices at arbitrary field points, one independent
/// substream per point.
fn mc_reference_values(
    model: &BSModel,
    points: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    let r = model.r();
    let s0 = model.s0();
    points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(seed, i as u64));
            let mut acc = 0.0;
            for _ in 0..samples {
                let z1 = standard_normal(&mut rng);
                let z2 = standard_normal(&mut rng);
                acc += discounted_spread_payoff(r, s0, x, z1, z2);
            }
            acc / samples as f64
        })
        .collect()
}

struct FinanceReplicate {
    rows: Vec<ReportRow>,
    calibration: Vec<CalibrationRow>,
}

/// Runs the spread-option study: per replicate a fresh scrambled-Sobol grid
/// carries a fresh n-snapshot payoff subspace, the design is re-boosted,
/// variances are reused from the snapshots already paid for, and all four
/// pipelines are decoded both raw and cone-projected. The calibrate variant
/// additionally fits (σ⁽¹⁾, σ⁽²⁾) to one shared synthetic market per
/// surrogate.
pub fn run_finance(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let model = BSModel::standard(0.3, 0.1, -0.3)?;
    let domain = spread_domain();
    let policy = config.boosting()?;
    let l = config.finance_budget;
    let n = config.subspace_dim;
    let delta = config.delta_scale / config.design_size as f64;
    let calibrating = config.experiment == ExperimentKind::FinanceCalibrate;

    // One fixed uniform test set and one reference-price vector serve every
    // replicate; the quote surface for calibration is likewise shared.
    let mut test_stream = PointStream::iid(mix_seed(config.master_seed, 0x7e57), 5);
    let test_points = generate_points(&mut test_stream, config.test_points, &domain)?;
    let reference = mc_reference_values(
        &model,
        &test_points,
        config.oracle_samples,
        mix_seed(config.master_seed, 0x0bac),
    );
    let quotes: Option<QuoteGrid> = if calibrating {
        Some(synth_market(
            &model,
            &QuoteGrid::standard_maturities(),
            &QuoteGrid::standard_strikes(),
            config.quote_samples,
            mix_seed(config.master_seed, 0xc0fe),
        )?)
    } else {
        None
    };

    let r = model.r();
    let s0 = model.s0();
    let field = payoff_field(&model);
    let fin_seed = mix_seed(config.master_seed, 0xf1);

    let per_rep: Vec<FinanceReplicate> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| -> Result<FinanceReplicate> {
            let ctx = |stage: &str, e: HlsError| {
                tag(&format!("finance replicate {rep} {stage}"), e)
            };
            let rep_seed = mix_seed(fin_seed, rep as u64);
            let mut grid_stream =
                PointStream::scrambled_sobol(mix_seed(rep_seed, 0), 5).map_err(|e| ctx("grid", e))?;
            let grid = generate_points(&mut grid_stream, config.grid_size, &domain)
                .map_err(|e| ctx("grid", e))?;
            let (basis, cone, snapshots) =
                build_subspace(&field, n, &grid, mix_seed(rep_seed, 1))
                    .map_err(|e| ctx("subspace", e))?;
            let design_stream = PointStream::iid(mix_seed(rep_seed, 2), 1);
            let design = sample_design(&basis, config.design_size, Some(&policy), &design_stream)
                .map_err(|e| ctx("design", e))?;
            let noise = reused_snapshot_variance(&snapshots, design.points())
                .map_err(|e| ctx("variance", e))?;
            let oracle = NoisyOracle::new(move |x: &[f64], rng: &mut ChaCha12Rng| {
                let z1 = standard_normal(rng);
                let z2 = standard_normal(rng);
                discounted_spread_payoff(r, s0, x, z1, z2)
            });

            let mut rep_out = FinanceReplicate { rows: Vec::new(), calibration: Vec::new() };
            let push = |approx: &Approximant,
                            runtime_ms: f64,
                            rep_out: &mut FinanceReplicate|
             -> Result<()> {
                let pipeline = approx.pipeline();
                let stage = format!("{pipeline} error");
                let mse = mse_test_points(approx, &test_points, &reference)
                    .map_err(|e| ctx(&stage, e))?;
                let (cond, hash) = if pipeline == Pipeline::Erm {
                    (f64::NAN, 0)
                } else {
                    (design.cond(), design.content_hash())
                };
                rep_out.rows.push(ReportRow {
                    group: format!("n={n}"),
                    pipeline,
                    projected: approx.projected(),
                    budget: l as u64,
                    replicate: rep,
                    mse,
                    cond,
                    design_hash: hash,
                    runtime_ms,
                    seed: rep_seed,
                });
                if let Some(q) = &quotes {
                    let name = if approx.projected() {
                        format!("{pipeline}-proj")
                    } else {
                        pipeline.to_string()
                    };
                    let fit = calibrate(approx, q, model.rho(), [0.2, 0.2])
                        .map_err(|e| ctx(&format!("{name} calibration"), e))?;
                    rep_out.calibration.push(CalibrationRow {
                        replicate: rep,
                        pipeline: name,
                        sigma1_hat: fit.sigma[0],
                        sigma2_hat: fit.sigma[1],
                        loss: fit.loss,
                        iterations: fit.iterations,
                    });
                }
                Ok(())
            };

            for (pi, pipeline) in [Pipeline::Hls0, Pipeline::Hls1, Pipeline::Hls2]
                .into_iter()
                .enumerate()
            {
                let stage = pipeline.to_string();
                let started = Instant::now();
                let alloc = allocate_for(pipeline, &design, &noise, l, delta)
                    .map_err(|e| ctx(&stage, e))?;
                let ev = evaluate_budget(
                    &oracle,
                    &design,
                    &alloc,
                    l,
                    mix_seed(rep_seed, 0x100 + pi as u64),
                )
                .map_err(|e| ctx(&stage, e))?;
                let approx = match pipeline {
                    Pipeline::Hls2 => decode_reweighted(&design, &ev, &alloc, &noise, l),
                    _ => decode_plain(&design, &ev),
                }
                .map_err(|e| ctx(&stage, e))?
                .relabeled(pipeline);
                let raw_ms = started.elapsed().as_secs_f64() * 1e3;
                push(&approx, raw_ms, &mut rep_out)?;

                let started = Instant::now();
                let projected =
                    project_approximant(&cone, &approx).map_err(|e| ctx(&stage, e))?;
                let proj_ms = raw_ms + started.elapsed().as_secs_f64() * 1e3;
                push(&projected, proj_ms, &mut rep_out)?;
            }

            let started = Instant::now();
            let mut erm_stream = PointStream::iid(mix_seed(rep_seed, 3), 5);
            let erm = run_erm(
                &basis,
                &oracle,
                l,
                &domain,
                &mut erm_stream,
                mix_seed(rep_seed, 0x200),
            )
            .map_err(|e| ctx("ERM", e))?;
            let raw_ms = started.elapsed().as_secs_f64() * 1e3;
            push(&erm, raw_ms, &mut rep_out)?;
            let started = Instant::now();
            let erm_proj = project_approximant(&cone, &erm).map_err(|e| ctx("ERM", e))?;
            let proj_ms = raw_ms + started.elapsed().as_secs_f64() * 1e3;
            push(&erm_proj, proj_ms, &mut rep_out)?;

            Ok(rep_out)
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::new(config);
    for rep_out in per_rep {
        report.rows.extend(rep_out.rows);
        report.calibration.extend(rep_out.calibration);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// One-shot diagnostics
// ---------------------------------------------------------------------------

/// Builds the synthetic study's design at the first configured degree and
/// attaches all three allocations side by side, with their objectives as
/// extras. No oracle evaluations happen.
pub fn run_allocate_only(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let degree = config.degrees[0];
    let domain = HyperRectangle::symmetric_cube(2);
    let basis = tensor_legendre_basis(&domain, degree)?;
    let m = 3 * basis.n();
    let delta = config.delta_scale / m as f64;
    let l = config.budget_per_gamma * config.gammas[0];

    let halton = PointStream::halton(&[2, 3])?;
    let design = sample_design(&basis, m, None, &halton)?;
    let sigma = synthetic_sigma();
    let oracle = {
        let s = Arc::clone(&sigma);
        let f = synthetic_target();
        NoisyOracle::new(move |x: &[f64], rng: &mut ChaCha12Rng| {
            f(x) + s(x) * standard_normal(rng)
        })
        .with_exact_variance(move |x: &[f64]| {
            let s = sigma(x);
            s * s
        })
    };
    let noise = crate::decoder::exact_variance_profile(&oracle, &design)?;

    let mut report = ExperimentReport::new(config);
    report.extras.push(("design_cond".into(), design.cond()));
    report.extras.push(("condition_j".into(), condition_j(&design, &noise)?));
    for pipeline in [Pipeline::Hls0, Pipeline::Hls1, Pipeline::Hls2] {
        let alloc = allocate_for(pipeline, &design, &noise, l, delta)?;
        let label = alloc.kind().to_string();
        report
            .extras
            .push((format!("objective_{label}"), alloc.objective_value()));
        report.extras.push((
            format!("support_{label}"),
            support_sparsity(&alloc) as f64,
        ));
        let mut csv = String::from("index,p,sigma2,weight\n");
        for i in 0..alloc.m() {
            let _ = writeln!(
                csv,
                "{i},{},{},{}",
                fmt_f64(alloc.p()[i]),
                fmt_f64(noise.sigma2()[i]),
                fmt_f64(design.weights()[i])
            );
        }
        report.attachments.push((format!("allocation_{label}.csv"), csv));
    }
    Ok(report)
}

/// Draws one payoff subspace and attaches the empirical covariance spectrum
/// of the field; the tail sums say how large a subspace the target needs.
pub fn run_subspace_diagnostics(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let model = BSModel::standard(0.3, 0.1, -0.3)?;
    let domain = spread_domain();
    let field = payoff_field(&model);
    let seed = mix_seed(config.master_seed, 0xd1a6);
    let mut grid_stream = PointStream::scrambled_sobol(mix_seed(seed, 0), 5)?;
    let grid = generate_points(&mut grid_stream, config.grid_size, &domain)?;
    let (basis, _, snapshots) = build_subspace(&field, config.subspace_dim, &grid, mix_seed(seed, 1))?;
    let spectrum = empirical_kernel_spectrum(&snapshots, &grid)?;

    let mut report = ExperimentReport::new(config);
    report.extras.push(("trace".into(), spectrum.trace()));
    let tails = spectrum.tail_sums();
    for s in [1usize, 5, 10, 20, 50] {
        if s < tails.len() && spectrum.trace() > 0.0 {
            report
                .extras
                .push((format!("tail_fraction_{s}"), tails[s] / spectrum.trace()));
        }
    }
    let policy = config.boosting()?;
    let design_stream = PointStream::iid(mix_seed(seed, 2), 1);
    let design = sample_design(&basis, config.design_size, Some(&policy), &design_stream)?;
    report.extras.push(("design_cond".into(), design.cond()));
    report
        .extras
        .push(("boost_trials_run".into(), design.trials_run() as f64));

    let mut csv = String::from("index,eigenvalue,tail_sum\n");
    for (i, (ev, ts)) in spectrum.eigenvalues().iter().zip(tails).enumerate() {
        let _ = writeln!(csv, "{i},{},{}", fmt_f64(*ev), fmt_f64(*ts));
    }
    report.attachments.push(("spectrum.csv".into(), csv));
    Ok(report)
}

/// Dispatches a validated config to its study.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::Synthetic => run_synthetic(config),
        ExperimentKind::FinanceSurrogate | ExperimentKind::FinanceCalibrate => run_finance(config),
        ExperimentKind::AllocateOnly => run_allocate_only(config),
        ExperimentKind::SubspaceDiagnostics => run_subspace_diagnostics(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_synthetic() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment = ExperimentKind::Synthetic;
        cfg.degrees = vec![1];
        cfg.gammas = vec![2, 3];
        cfg.budget_per_gamma = 10;
        cfg.variance_draws = 3;
        cfg.replicates = 3;
        cfg.quadrature_level = 8;
        cfg.ratio_level = 16;
        cfg.master_seed = 2024;
        cfg
    }

    #[test]
    fn config_defaults_and_parse_errors() {
        let cfg = ExperimentConfig::parse("experiment = synthetic\n").unwrap();
        assert_eq!(cfg.degrees, vec![4, 5, 6]);
        assert_eq!(cfg.gammas, vec![10, 30, 100, 300, 1000]);
        assert_eq!(cfg.budget_per_gamma, 250);
        assert_eq!(cfg.variance_draws, 50);
        assert_eq!(cfg.replicates, 100);
        assert_eq!(cfg.subspace_dim, 100);
        assert_eq!(cfg.grid_size, 65536);
        assert_eq!(cfg.design_size, 500);
        assert_eq!(cfg.finance_budget, 500_000);
        assert_eq!(cfg.boost_trials, 50);
        assert_eq!(cfg.cond_threshold, 2.5);
        assert_eq!(cfg.delta_scale, 0.01);

        let text = "# comment\nexperiment = finance-calibrate\nreplicates = 7 # trailing\n\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::FinanceCalibrate);
        assert_eq!(cfg.replicates, 7);

        for bad in [
            "replicates = 5\n",                           // missing experiment
            "experiment = warp-drive\n",                  // unknown kind
            "experiment = synthetic\nwidgets = 3\n",      // unknown key
            "experiment = synthetic\nreplicates = few\n", // unparseable value
            "experiment = synthetic\nexperiment = synthetic\n", // duplicate
            "experiment = synthetic\ndelta_scale = 1.5\n", // δ > 1/m
            "experiment = synthetic\ndelta_scale = 0\n",
            "experiment = synthetic\ngammas = 10,0\n",
            "experiment = synthetic\nbroken line\n",
        ] {
            let err = ExperimentConfig::parse(bad).err().unwrap();
            assert!(matches!(err, HlsError::Config(_)), "{bad:?} gave {err:?}");
        }
    }

    #[test]
    fn canonical_echo_round_trips() {
        let mut cfg = tiny_synthetic();
        cfg.output_dir = "somewhere".into();
        let echo = cfg.canonical();
        let reparsed = ExperimentConfig::parse(&echo).unwrap();
        assert_eq!(reparsed.canonical(), echo);
        assert_eq!(reparsed.report_dir_name(), "somewhere");
        assert_eq!(
            ExperimentConfig::parse("experiment = allocate-only\nmaster_seed = 9\n")
                .unwrap()
                .report_dir_name(),
            "allocate-only-9"
        );
    }

    #[test]
    fn synthetic_run_has_coupled_rows_and_full_cells() {
        let cfg = tiny_synthetic();
        let report = run_synthetic(&cfg).unwrap();
        // replicates × pipelines × budget points
        assert_eq!(report.rows.len(), 3 * 4 * 2);
        assert!(report.designs_coupled());
        assert!(report.rows.iter().all(|r| r.mse.is_finite() && r.mse > 0.0));
        // Same Halton design everywhere within a degree.
        let hashes: Vec<u64> = report
            .rows
            .iter()
            .filter(|r| r.pipeline != Pipeline::Erm)
            .map(|r| r.design_hash)
            .collect();
        assert!(hashes.windows(2).all(|w| w[0] == w[1]));
        assert!(report.rows.iter().filter(|r| r.pipeline == Pipeline::Erm).all(|r| r.design_hash == 0));

        let aggs = report.aggregates();
        assert_eq!(aggs.len(), 4 * 2);
        assert!(aggs.iter().all(|a| a.count == 3));
        for a in &aggs {
            assert!(a.q1_log10_mse <= a.median_log10_mse);
            assert!(a.median_log10_mse <= a.q3_log10_mse);
        }
        // The degree-1 basis cannot represent the target, so every pipeline
        // bottoms out at the same bias floor; errors stay within an order of
        // magnitude of each other.
        let spread = aggs.iter().map(|a| a.mean_log10_mse).fold(f64::NAN, f64::max)
            - aggs.iter().map(|a| a.mean_log10_mse).fold(f64::NAN, f64::min);
        assert!(spread < 1.0, "spread {spread}");
        let ratio = report.extras.iter().find(|(k, _)| k == "variance_factor_ratio_D1");
        let (_, ratio) = ratio.expect("ratio extra present");
        assert!(*ratio > 0.0 && *ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn reruns_are_bit_identical_and_emit_is_stable() {
        let cfg = tiny_synthetic();
        let a = run_synthetic(&cfg).unwrap();
        let b = run_synthetic(&cfg).unwrap();
        assert_eq!(a.rows_csv(), b.rows_csv());
        assert_eq!(a.aggregate_csv(), b.aggregate_csv());

        let dir = tempfile::tempdir().unwrap();
        let d1 = dir.path().join("one");
        let d2 = dir.path().join("two");
        emit_report(&a, &d1).unwrap();
        emit_report(&b, &d2).unwrap();
        for name in ["rows.csv", "aggregate.csv", "manifest.txt"] {
            let x = std::fs::read(d1.join(name)).unwrap();
            let y = std::fs::read(d2.join(name)).unwrap();
            assert_eq!(x, y, "{name} differs between identical reruns");
        }
        let manifest = std::fs::read_to_string(d1.join("manifest.txt")).unwrap();
        assert!(manifest.contains("content_hash = "));
        assert!(manifest.contains("experiment = synthetic"));
        assert!(manifest.contains(&format!("master_seed = {}", cfg.master_seed)));
        // Timings exist but are not hashed.
        assert!(d1.join("timings.csv").exists());
    }

    #[test]
    fn empty_report_emits_header_only_csvs() {
        let report = ExperimentReport::new(&tiny_synthetic());
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();
        let rows = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
        assert_eq!(rows.lines().count(), 1);
        assert!(rows.starts_with("group,pipeline,variant,budget,"));
        let agg = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert_eq!(agg.lines().count(), 1);
        assert!(!dir.path().join("calibration.csv").exists());
    }

    #[test]
    fn variance_factor_ratio_converges_in_level() {
        let domain = HyperRectangle::symmetric_cube(2);
        let basis = tensor_legendre_basis(&domain, 3).unwrap();
        let measure = ProductMeasure::uniform(domain);
        let sigma = synthetic_sigma();
        let at = |lvl| variance_factor_ratio(&basis, &sigma, &measure, lvl).unwrap();
        let r64 = at(64);
        let r96 = at(96);
        // σ has kinks along the ‖x‖_∞ level sets, so the quadrature
        // converges algebraically, not spectrally.
        assert!((r64 - r96).abs() < 5e-3, "levels 64/96 disagree: {r64} vs {r96}");
        assert!(r64 > 0.0 && r64 <= 1.0 + 1e-12);
    }

    #[test]
    fn allocate_only_produces_allocation_tables() {
        let mut cfg = tiny_synthetic();
        cfg.experiment = ExperimentKind::AllocateOnly;
        let report = run_experiment(&cfg).unwrap();
        assert!(report.rows.is_empty());
        let names: Vec<&str> = report.attachments.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(
            names,
            vec!["allocation_uniform.csv", "allocation_neyman.csv", "allocation_a-optimal.csv"]
        );
        for (_, csv) in &report.attachments {
            // header + one line per design point (m = 3·(D+1)² = 12 at D=1)
            assert_eq!(csv.lines().count(), 13);
        }
        let g_uni = report.extras.iter().find(|(k, _)| k == "objective_uniform").unwrap().1;
        let g_ney = report.extras.iter().find(|(k, _)| k == "objective_neyman").unwrap().1;
        assert!(g_ney <= g_uni + 1e-12, "Neyman should not lose to uniform");
    }

    #[test]
    fn finance_smoke_run_covers_all_variants() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment = ExperimentKind::FinanceCalibrate;
        cfg.replicates = 1;
        cfg.subspace_dim = 6;
        cfg.grid_size = 256;
        cfg.design_size = 24;
        cfg.finance_budget = 1200;
        cfg.boost_trials = 8;
        cfg.cond_threshold = 4.0;
        cfg.test_points = 40;
        cfg.oracle_samples = 400;
        cfg.quote_samples = 4000;
        cfg.master_seed = 11;
        let report = run_experiment(&cfg).unwrap();
        // 4 pipelines × {regular, projected} × 1 replicate
        assert_eq!(report.rows.len(), 8);
        assert!(report.designs_coupled());
        assert_eq!(report.calibration.len(), 8);
        let names: Vec<&str> =
            report.calibration.iter().map(|r| r.pipeline.as_str()).collect();
        assert!(names.contains(&"HLS-1") && names.contains(&"HLS-1-proj"));
        assert!(names.contains(&"ERM") && names.contains(&"ERM-proj"));
        for row in &report.calibration {
            assert!(row.sigma1_hat >= 0.0 && row.sigma1_hat <= 0.5);
            assert!(row.sigma2_hat >= 0.0 && row.sigma2_hat <= 0.5);
            assert!(row.loss.is_finite());
        }
        assert!(report.rows.iter().all(|r| r.mse.is_finite()));
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();
        assert!(dir.path().join("calibration.csv").exists());
    }

    #[test]
    fn subspace_diagnostics_attaches_a_spectrum() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment = ExperimentKind::SubspaceDiagnostics;
        cfg.subspace_dim = 8;
        cfg.grid_size = 512;
        cfg.design_size = 32;
        cfg.boost_trials = 4;
        cfg.cond_threshold = 5.0;
        cfg.master_seed = 3;
        let report = run_experiment(&cfg).unwrap();
        let (_, csv) = report
            .attachments
            .iter()
            .find(|(n, _)| n == "spectrum.csv")
            .expect("spectrum attached");
        // One eigenvalue per snapshot, plus the header.
        assert_eq!(csv.lines().count(), cfg.subspace_dim + 1);
        let trace = report.extras.iter().find(|(k, _)| k == "trace").unwrap().1;
        assert!(trace > 0.0);
    }
}
