//! Experiment orchestration behind the command-line tool: loading config
//! files, fanning a config out into seeded replications, and emitting the
//! CSV reports for single runs, parameter sweeps, and mesh fixed-point
//! grids.
//!
//! Every error is tagged with the process exit code the tool should report:
//! `2` for missing or malformed inputs, `3` for topologically unreachable
//! requests, `1` for output I/O failures. CSV files are written in one shot
//! with floats in Rust's shortest round-trip form, so identical inputs
//! produce byte-identical reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::congestion::PolicyKind;
use crate::constellation::{ConstellationParams, NodeId};
use crate::mesh::{self, MeshParams, MeshVariant};
use crate::routing::{enhance_direction, estimate_direction, RoutingError};
use crate::sim::{self, SimConfig, SimError, SimStats};

/// Errors from the experiment layer, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum ExpError {
    /// Missing, unreadable, or malformed input (config file, grid file, or
    /// command-line literal).
    #[error("{0}")]
    Config(String),
    /// The requested route or region pair cannot be served by the topology.
    #[error("{0}")]
    Unreachable(String),
    /// An output file could not be written.
    #[error("{0}")]
    Io(String),
}

impl ExpError {
    /// Exit code the command-line tool reports for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Config(_) => 2,
            ExpError::Unreachable(_) => 3,
            ExpError::Io(_) => 1,
        }
    }
}

impl From<SimError> for ExpError {
    fn from(err: SimError) -> Self {
        match err {
            SimError::Config(msg) => ExpError::Config(msg),
            SimError::Unreachable(msg) => ExpError::Unreachable(msg),
        }
    }
}

/// Reads and validates a simulation config. Parse failures carry the file
/// name plus serde's line/column diagnostic so the offending entry can be
/// found without a debugger.
pub fn load_config(path: &Path) -> Result<SimConfig, ExpError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ExpError::Config(format!("{}: {e}", path.display())))?;
    let cfg: SimConfig = serde_json::from_str(&text)
        .map_err(|e| ExpError::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `cfg.replications` independent replications. Replication `k` uses
/// seed `cfg.seed + k`, so any reported row can be replayed in isolation by
/// running a single replication with that seed.
pub fn run_replications(cfg: &SimConfig) -> Result<Vec<SimStats>, ExpError> {
    (0..cfg.replications)
        .map(|k| {
            let seed = cfg.seed.wrapping_add(u64::from(k));
            log::info!("replication {k} (seed {seed})");
            sim::run(cfg, seed).map_err(ExpError::from)
        })
        .collect()
}

/// Arithmetic mean; zero for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero when fewer than two
/// samples.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Quantile of Student's t distribution with `df` degrees of freedom.
pub fn t_quantile(df: f64, p: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("degrees of freedom must be positive")
        .inverse_cdf(p)
}

/// Quantile of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_quantile(df: f64, p: f64) -> f64 {
    ChiSquared::new(df)
        .expect("degrees of freedom must be positive")
        .inverse_cdf(p)
}

/// Half-width of the two-sided 95% confidence interval for the mean,
/// using the t quantile for the sample's degrees of freedom. Zero when
/// fewer than two samples.
pub fn ci95_halfwidth(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let t = t_quantile((xs.len() - 1) as f64, 0.975);
    t * sample_std(xs) / (xs.len() as f64).sqrt()
}

/// Prints one line to stdout, exiting quietly if the reader closed the
/// pipe (for example `leosim route ... | head`), like a conventional line
/// tool.
fn emit(line: std::fmt::Arguments<'_>) {
    use std::io::Write as _;
    let mut out = std::io::stdout().lock();
    if writeln!(out, "{line}").is_err() {
        std::process::exit(0);
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), ExpError> {
    let mut text = String::new();
    let _ = writeln!(text, "{}", header.join(","));
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let _ = writeln!(text, "{}", row.join(","));
    }
    fs::write(path, text).map_err(|e| ExpError::Io(format!("{}: {e}", path.display())))
}

/// Runs the config's replications and writes one CSV row per replication
/// plus a final `aggregate` row whose numeric columns are the plain means
/// of the replication rows (with the e2e confidence half-width appended).
pub fn cmd_simulate(config_path: &Path, out: &Path) -> Result<(), ExpError> {
    let cfg = load_config(config_path)?;
    let stats = run_replications(&cfg)?;

    let header = [
        "replication",
        "seed",
        "generated",
        "delivered",
        "dropped_overflow",
        "dropped_loop",
        "drop_rate",
        "mean_e2e_delay_s",
        "mean_queue_wait_s",
        "mean_prop_delay_s",
        "max_queue_len",
        "ci95_halfwidth_e2e_s",
    ];
    // Column-major view of the numeric columns, reused for the aggregate.
    let columns: Vec<Vec<f64>> = stats
        .iter()
        .map(|s| {
            vec![
                s.generated as f64,
                s.delivered as f64,
                s.dropped_overflow as f64,
                s.dropped_loop as f64,
                if s.generated == 0 { 0.0 } else { s.dropped() as f64 / s.generated as f64 },
                s.mean_e2e_delay_s,
                s.mean_queue_wait_s,
                s.mean_prop_delay_s,
                f64::from(s.max_queue_len),
            ]
        })
        .collect();

    let mut rows: Vec<Vec<String>> = Vec::with_capacity(stats.len() + 1);
    for (k, values) in columns.iter().enumerate() {
        let mut row = vec![
            k.to_string(),
            cfg.seed.wrapping_add(k as u64).to_string(),
        ];
        row.extend(values.iter().map(|v| v.to_string()));
        row.push(String::new());
        rows.push(row);
    }
    let e2e: Vec<f64> = stats.iter().map(|s| s.mean_e2e_delay_s).collect();
    let mut aggregate = vec!["aggregate".to_string(), String::new()];
    for i in 0..columns.first().map_or(0, Vec::len) {
        let col: Vec<f64> = columns.iter().map(|row| row[i]).collect();
        aggregate.push(mean(&col).to_string());
    }
    aggregate.push(ci95_halfwidth(&e2e).to_string());
    rows.push(aggregate);

    write_csv(out, &header, &rows)?;
    emit(format_args!(
        "wrote {} replication rows + aggregate to {}",
        stats.len(),
        out.display()
    ));
    Ok(())
}

/// Which config field a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVariable {
    /// Per-pair packet arrival rate during a traffic window, in 1/s.
    LambdaIn,
    /// Output buffer capacity in packets; the queue threshold follows as
    /// `round(threshold_ratio * capacity)`.
    NBuffer,
}

impl SweepVariable {
    pub fn label(self) -> &'static str {
        match self {
            SweepVariable::LambdaIn => "lambda_in",
            SweepVariable::NBuffer => "n_buffer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lambda_in" => Some(SweepVariable::LambdaIn),
            "n_buffer" => Some(SweepVariable::NBuffer),
            _ => None,
        }
    }
}

/// A swept experiment: the base config is rerun for every value of the
/// chosen variable and every listed policy, with matched seeds across all
/// cells so policies are compared on identical traffic.
#[derive(Clone, Debug)]
pub struct SweepOpts {
    pub variable: SweepVariable,
    /// Values of the swept variable, strictly increasing.
    pub values: Vec<f64>,
    /// Overrides the config's replication count when set.
    pub replications: Option<u32>,
    /// Queue threshold as a fraction of buffer capacity (buffer sweeps).
    pub threshold_ratio: f64,
    /// Policies to compare; empty means both.
    pub policies: Vec<PolicyKind>,
}

impl SweepOpts {
    fn validate(&self) -> Result<(), ExpError> {
        if self.values.is_empty() {
            return Err(ExpError::Config("need at least one sweep value".into()));
        }
        if !self.values.windows(2).all(|w| w[0] < w[1]) {
            return Err(ExpError::Config(format!(
                "sweep values must be strictly increasing, got {:?}",
                self.values
            )));
        }
        if !(self.threshold_ratio > 0.0 && self.threshold_ratio <= 1.0) {
            return Err(ExpError::Config(format!(
                "threshold ratio must be in (0, 1], got {}",
                self.threshold_ratio
            )));
        }
        for &v in &self.values {
            match self.variable {
                SweepVariable::LambdaIn => {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(ExpError::Config(format!(
                            "lambda_in values must be nonnegative, got {v}"
                        )));
                    }
                }
                SweepVariable::NBuffer => {
                    if !(v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX))
                    {
                        return Err(ExpError::Config(format!(
                            "n_buffer values must be positive integers, got {v}"
                        )));
                    }
                }
            }
        }
        if self.replications == Some(0) {
            return Err(ExpError::Config("need at least one replication".into()));
        }
        Ok(())
    }
}

/// Runs the sweep and writes one aggregate CSV row per (value, policy)
/// cell: mean end-to-end delay with its 95% confidence half-width, drop
/// rate, and mean delivered count, plus the seed base for replay.
pub fn cmd_sweep(config_path: &Path, opts: &SweepOpts, out: &Path) -> Result<(), ExpError> {
    let base = load_config(config_path)?;
    opts.validate()?;
    let policies: Vec<PolicyKind> = if opts.policies.is_empty() {
        vec![PolicyKind::Threshold, PolicyKind::Probabilistic]
    } else {
        opts.policies.clone()
    };

    let header = [
        "variable",
        "value",
        "policy",
        "queue_threshold",
        "mean_e2e_delay_s",
        "ci95_halfwidth_s",
        "drop_rate",
        "delivered",
        "base_seed",
    ];
    let mut rows = Vec::new();
    for &value in &opts.values {
        let mut cfg = base.clone();
        if let Some(reps) = opts.replications {
            cfg.replications = reps;
        }
        match opts.variable {
            SweepVariable::LambdaIn => cfg.lambda_in = value,
            SweepVariable::NBuffer => {
                let capacity = value as u32;
                cfg.policy.buffer_capacity = capacity;
                cfg.policy.queue_threshold =
                    ((opts.threshold_ratio * value).round() as u32).clamp(1, capacity);
            }
        }
        for &policy in &policies {
            cfg.policy.kind = policy;
            cfg.validate()?;
            log::info!("sweep cell {}={value} policy={}", opts.variable.label(), policy.label());
            let stats = run_replications(&cfg)?;
            let e2e: Vec<f64> = stats.iter().map(|s| s.mean_e2e_delay_s).collect();
            let drop_rates: Vec<f64> = stats
                .iter()
                .map(|s| {
                    if s.generated == 0 {
                        0.0
                    } else {
                        s.dropped() as f64 / s.generated as f64
                    }
                })
                .collect();
            let delivered: Vec<f64> = stats.iter().map(|s| s.delivered as f64).collect();
            rows.push(vec![
                opts.variable.label().to_string(),
                value.to_string(),
                policy.label().to_string(),
                cfg.policy.queue_threshold.to_string(),
                mean(&e2e).to_string(),
                ci95_halfwidth(&e2e).to_string(),
                mean(&drop_rates).to_string(),
                mean(&delivered).to_string(),
                cfg.seed.to_string(),
            ]);
        }
    }

    write_csv(out, &header, &rows)?;
    emit(format_args!("wrote {} sweep rows to {}", rows.len(), out.display()));
    Ok(())
}

fn default_variants() -> Vec<MeshVariant> {
    vec![MeshVariant::Simplified, MeshVariant::Exact]
}

fn default_grid_tol() -> f64 {
    1e-10
}

fn default_grid_max_iter() -> u32 {
    100_000
}

fn default_grid_hops() -> (u32, u32) {
    (3, 3)
}

/// Grid of mesh model inputs; the solver runs on the full cartesian
/// product of the listed values.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshGrid {
    /// Offered load per node relative to link service rate.
    pub lambda_over_mu: Vec<f64>,
    /// Probability that a packet's primary direction is horizontal.
    pub p_h: Vec<f64>,
    /// Preference for the primary link in the forwarding policy.
    pub p_pref: Vec<f64>,
    #[serde(default = "default_variants")]
    pub variants: Vec<MeshVariant>,
    #[serde(default = "default_grid_tol")]
    pub tol: f64,
    #[serde(default = "default_grid_max_iter")]
    pub max_iter: u32,
    /// (horizontal, vertical) hop counts of the reference path whose
    /// normalized delay is reported.
    #[serde(default = "default_grid_hops")]
    pub hops: (u32, u32),
}

impl MeshGrid {
    fn validate(&self) -> Result<(), ExpError> {
        if self.lambda_over_mu.is_empty() || self.p_h.is_empty() || self.p_pref.is_empty() {
            return Err(ExpError::Config(
                "grid needs at least one lambda_over_mu, p_h, and p_pref value".into(),
            ));
        }
        if self.variants.is_empty() {
            return Err(ExpError::Config("grid needs at least one variant".into()));
        }
        Ok(())
    }
}

/// Solves the mesh fixed point on every grid point and writes one CSV row
/// per point: the occupancies, the normalized delay of the reference path
/// (blank when no stable fixed point exists), and the stability flag.
pub fn cmd_mesh_solve(grid_path: &Path, out: &Path) -> Result<(), ExpError> {
    let text = fs::read_to_string(grid_path)
        .map_err(|e| ExpError::Config(format!("{}: {e}", grid_path.display())))?;
    let grid: MeshGrid = serde_json::from_str(&text)
        .map_err(|e| ExpError::Config(format!("{}: {e}", grid_path.display())))?;
    grid.validate()?;

    let header = [
        "lambda_over_mu",
        "p_h",
        "p_pref",
        "variant",
        "N_h",
        "N_v",
        "normalized_delay",
        "stable",
    ];
    let mut rows = Vec::new();
    for &ratio in &grid.lambda_over_mu {
        for &p_h in &grid.p_h {
            for &p_pref in &grid.p_pref {
                for &variant in &grid.variants {
                    let params = MeshParams {
                        horizontal_primary_prob: p_h,
                        preference: p_pref,
                        arrival_rate: ratio,
                        service_rate: 1.0,
                        variant,
                    };
                    let sol = mesh::solve_fixed_point(&params, grid.tol, grid.max_iter)
                        .map_err(|e| ExpError::Config(format!("{}: {e}", grid_path.display())))?;
                    let delay = mesh::expected_path_delay(&sol, grid.hops.0, grid.hops.1)
                        .map_or(String::new(), |d| d.to_string());
                    rows.push(vec![
                        ratio.to_string(),
                        p_h.to_string(),
                        p_pref.to_string(),
                        variant.label().to_string(),
                        sol.horizontal_occupancy.to_string(),
                        sol.vertical_occupancy.to_string(),
                        delay,
                        sol.stable.to_string(),
                    ]);
                }
            }
        }
    }

    write_csv(out, &header, &rows)?;
    emit(format_args!("wrote {} grid points to {}", rows.len(), out.display()));
    Ok(())
}

/// Parses a `plane,slot` node literal.
pub fn parse_node(s: &str) -> Result<NodeId, ExpError> {
    let err = || ExpError::Config(format!("expected a node as `plane,slot`, got `{s}`"));
    let (p, q) = s.split_once(',').ok_or_else(err)?;
    let plane: u32 = p.trim().parse().map_err(|_| err())?;
    let slot: u32 = q.trim().parse().map_err(|_| err())?;
    Ok(NodeId::new(plane, slot))
}

/// Prints the hop-minimal plan from `src` to `dst` and the hop-by-hop
/// primary/secondary choices of an unloaded network. The constellation
/// comes from the optional config file, defaulting to the 12×24 polar grid
/// at 600 km.
pub fn cmd_route(src: &str, dst: &str, config_path: Option<&Path>) -> Result<(), ExpError> {
    let params = match config_path {
        Some(path) => load_config(path)?.constellation,
        None => ConstellationParams::polar(12, 24, 600.0),
    };
    params
        .validate()
        .map_err(|e| ExpError::Config(e.to_string()))?;
    let src = parse_node(src)?;
    let dst = parse_node(dst)?;
    for node in [src, dst] {
        if !params.contains(node) {
            return Err(ExpError::Config(format!(
                "node {node} is outside the {}x{} grid",
                params.n_planes, params.sats_per_plane
            )));
        }
    }
    if src == dst {
        return Err(ExpError::Config(format!(
            "source and destination are the same node {src}"
        )));
    }

    let spec = estimate_direction(&params, src, dst).map_err(route_error)?;
    let h_part = match spec.horizontal_dir {
        Some(d) => format!("{} {}", spec.horizontal_hops, d.direction()),
        None => "0 horizontal".to_string(),
    };
    let v_part = match spec.vertical_dir {
        Some(d) => format!("{} {}", spec.vertical_hops, d.direction()),
        None => "0 vertical".to_string(),
    };
    let pole = if spec.crosses_pole { ", crosses a pole" } else { "" };
    emit(format_args!(
        "route {src} -> {dst}: {} hops ({h_part}, {v_part}){pole}",
        spec.total_hops()
    ));

    let mut current = src;
    for _ in 0..spec.total_hops() {
        let local = estimate_direction(&params, current, dst).map_err(route_error)?;
        let choice = enhance_direction(&params, current, dst, &local).map_err(route_error)?;
        let secondary = choice
            .secondary
            .map_or("-".to_string(), |d| d.to_string());
        emit(format_args!("  {current}  primary {}  secondary {secondary}", choice.primary));
        let next = params
            .neighbors(current)
            .map_err(|e| ExpError::Config(e.to_string()))?[choice.primary]
            .expect("a surviving direction always has a live link");
        current = next;
        if current == dst {
            break;
        }
    }
    if current != dst {
        return Err(ExpError::Unreachable(format!(
            "walk from {src} stalled at {current} before reaching {dst}"
        )));
    }
    emit(format_args!("  arrived {dst} after {} hops", spec.total_hops()));
    Ok(())
}

fn route_error(err: RoutingError) -> ExpError {
    match err {
        RoutingError::DeadEnd { .. } => ExpError::Unreachable(err.to_string()),
        RoutingError::Topology(_) | RoutingError::DegeneratePath(_) => {
            ExpError::Config(err.to_string())
        }
    }
}
