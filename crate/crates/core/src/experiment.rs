//! Reproducible benchmark harness: the temperature sweep (error vs
//! temperature) and the timing run (error vs wall clock) on the n-by-n Ising
//! model, emitted as CSV with fixed formatting so identical configs and
//! seeds produce identical rows (up to the wall-clock columns).

use crate::exact::exact_log_z;
use crate::graph::{self, SubgraphSelection};
use crate::meanfield::{Init, MfProblem, SolveOptions, SweepRecord};
use crate::model::ising_grid;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// The three mean-field presets of the grid experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfMethod {
    /// Naive mean field: no kept edges.
    Nmf,
    /// Rows kept as independent chains (v-acyclic).
    Smf1,
    /// Comb spanning tree (b-acyclic).
    Smf2,
}

impl MfMethod {
    pub const ALL: [MfMethod; 3] = [MfMethod::Nmf, MfMethod::Smf1, MfMethod::Smf2];

    pub fn name(self) -> &'static str {
        match self {
            MfMethod::Nmf => "nmf",
            MfMethod::Smf1 => "smf1",
            MfMethod::Smf2 => "smf2",
        }
    }

    pub fn selection(self, n: usize) -> SubgraphSelection {
        match self {
            MfMethod::Nmf => graph::empty_selection(n),
            MfMethod::Smf1 => graph::rows_forest(n),
            MfMethod::Smf2 => graph::comb_tree(n),
        }
    }
}

/// 21 log-spaced temperatures spanning strong coupling, the transition
/// region, and near-independence.
pub fn default_temperatures() -> Vec<f64> {
    log_spaced(0.5, 5.0, 21)
}

pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Grid side length.
    pub size: usize,
    pub temperatures: Vec<f64>,
    /// Fixed temperature of the timing run.
    pub timing_temperature: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub damping: f64,
    pub seed: u64,
    pub init: InitChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitChoice {
    Perturbed,
    Uniform,
}

impl From<InitChoice> for Init {
    fn from(c: InitChoice) -> Init {
        match c {
            InitChoice::Perturbed => Init::Perturbed,
            InitChoice::Uniform => Init::Uniform,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            size: 9,
            temperatures: default_temperatures(),
            timing_temperature: 2.0,
            tol: 1e-8,
            max_sweeps: 10_000,
            damping: 0.5,
            seed: 0,
            init: InitChoice::Perturbed,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::InvalidModel(
                "grid size must be at least 2 for the mean-field presets".into(),
            ));
        }
        if self.temperatures.is_empty()
            || self.temperatures.iter().any(|&t| !(t > 0.0))
            || !(self.timing_temperature > 0.0)
        {
            return Err(Error::InvalidModel("temperatures must be positive".into()));
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            damping: self.damping,
            seed: self.seed,
            init: self.init.into(),
        }
    }
}

/// One solve outcome of the temperature sweep.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub method: &'static str,
    pub temperature: f64,
    pub log_z_estimate: f64,
    pub exact_log_z: f64,
    pub abs_error: f64,
    pub elapsed_ms: f64,
    pub converged: bool,
}

/// One per-sweep sample of the timing run.
#[derive(Debug, Clone)]
pub struct TimingRow {
    pub method: &'static str,
    pub sweep: usize,
    pub elapsed_ms: f64,
    pub objective: f64,
    pub abs_error: f64,
}

/// Builds the preset problem for one method and temperature.
pub fn preset_problem(method: MfMethod, n: usize, temperature: f64) -> Result<MfProblem> {
    let model = ising_grid(n, temperature)?;
    MfProblem::new(model, method.selection(n))
}

/// Error vs temperature: every preset solved at every temperature, compared
/// against exact variable elimination. Rows in (temperature, method) order.
pub fn run_temperature(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let opts = cfg.solve_options();
    let mut rows = Vec::new();
    for &t in &cfg.temperatures {
        let exact = exact_log_z(&ising_grid(cfg.size, t)?)?;
        for method in MfMethod::ALL {
            let problem = preset_problem(method, cfg.size, t)?;
            let sol = problem.solve(&opts);
            let elapsed_ms = sol.trace.last().map_or(0.0, |r| r.elapsed_ms);
            rows.push(ResultRow {
                method: method.name(),
                temperature: t,
                log_z_estimate: sol.lower_bound,
                exact_log_z: exact,
                abs_error: (sol.lower_bound - exact).abs(),
                elapsed_ms,
                converged: sol.converged,
            });
        }
    }
    Ok(rows)
}

/// Error vs wall clock at a fixed temperature: per-sweep traces of all three
/// presets from identical seeds.
pub fn run_timing(cfg: &ExperimentConfig) -> Result<Vec<TimingRow>> {
    cfg.validate()?;
    let opts = cfg.solve_options();
    let exact = exact_log_z(&ising_grid(cfg.size, cfg.timing_temperature)?)?;
    let mut rows = Vec::new();
    for method in MfMethod::ALL {
        let problem = preset_problem(method, cfg.size, cfg.timing_temperature)?;
        let sol = problem.solve(&opts);
        for r in &sol.trace {
            rows.push(TimingRow {
                method: method.name(),
                sweep: r.sweep,
                elapsed_ms: r.elapsed_ms,
                objective: r.objective,
                abs_error: (r.objective - exact).abs(),
            });
        }
    }
    Ok(rows)
}

/// Median wall-clock milliseconds per sweep over a forced run of exactly
/// `sweeps` sweeps (convergence disabled).
pub fn median_sweep_ms(method: MfMethod, cfg: &ExperimentConfig, sweeps: usize) -> Result<f64> {
    let problem = preset_problem(method, cfg.size, cfg.timing_temperature)?;
    let mut opts = cfg.solve_options();
    opts.tol = 0.0;
    opts.max_sweeps = sweeps;
    let sol = problem.solve(&opts);
    let mut deltas: Vec<f64> = sol
        .trace
        .windows(2)
        .map(|w| w[1].elapsed_ms - w[0].elapsed_ms)
        .collect();
    deltas.sort_by(|a, b| a.total_cmp(b));
    Ok(deltas[deltas.len() / 2])
}

/// 12 significant digits; fixed so identical runs emit identical bytes.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn write_temperature_csv(rows: &[ResultRow], out: &mut impl Write) -> Result<()> {
    writeln!(
        out,
        "method,temperature,log_z_estimate,exact_log_z,abs_error,elapsed_ms,converged"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            fmt_float(r.temperature),
            fmt_float(r.log_z_estimate),
            fmt_float(r.exact_log_z),
            fmt_float(r.abs_error),
            fmt_float(r.elapsed_ms),
            r.converged
        )?;
    }
    Ok(())
}

pub fn write_timing_csv(rows: &[TimingRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "method,sweep,elapsed_ms,objective,abs_error")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.method,
            r.sweep,
            fmt_float(r.elapsed_ms),
            fmt_float(r.objective),
            fmt_float(r.abs_error)
        )?;
    }
    Ok(())
}

pub fn write_trace_csv(trace: &[SweepRecord], out: &mut impl Write) -> Result<()> {
    writeln!(out, "sweep,objective,elapsed_ms")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{}",
            r.sweep,
            fmt_float(r.objective),
            fmt_float(r.elapsed_ms)
        )?;
    }
    Ok(())
}
