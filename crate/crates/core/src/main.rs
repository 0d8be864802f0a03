//! Command-line surface over the library: selection classification, single
//! solves, and the two CSV benchmark experiments.
//!
//! Exit codes: 0 success, 1 usage or file errors, 2 guard violations
//! (intractable exact inference, Gibbs on a b-acyclic selection).

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use smf::exact::exact_log_partition;
use smf::experiment::{
    self, fmt_float, ExperimentConfig, InitChoice, MfMethod, ResultRow,
};
use smf::gibbs::BlockGibbs;
use smf::graph::{load_subgraph, ComponentKind, SubgraphSelection};
use smf::meanfield::{MfProblem, SolveOptions};
use smf::model::{load_model, Model};
use smf::{Error, Result};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "smf", about = "Structured mean-field inference for pairwise discrete MRFs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the components of an acyclic edge selection.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        subgraph: PathBuf,
    },
    /// Run one method on one model and print a CSV result row.
    Solve {
        #[arg(long)]
        model: PathBuf,
        /// Selection file; required for the generic mf method and gibbs.
        #[arg(long)]
        subgraph: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Method,
        /// Side length used to build the preset selections (nmf/smf1/smf2).
        #[arg(long, default_value_t = 9)]
        size: usize,
        #[command(flatten)]
        solver: SolverFlags,
        /// Output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-sweep solver trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Error vs temperature for the three presets (CSV).
    ExperimentTemperature {
        #[command(flatten)]
        exp: ExperimentFlags,
    },
    /// Per-sweep error vs wall clock at a fixed temperature (CSV).
    ExperimentTiming {
        #[command(flatten)]
        exp: ExperimentFlags,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Exact,
    Nmf,
    Smf1,
    Smf2,
    /// Mean field on an explicit selection file.
    Mf,
    Gibbs,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitFlag {
    Perturbed,
    Uniform,
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = InitFlag::Perturbed)]
    init: InitFlag,
}

#[derive(Args)]
struct ExperimentFlags {
    /// JSON config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    size: Option<usize>,
    /// Comma-separated temperature list.
    #[arg(long, value_delimiter = ',')]
    temps: Option<Vec<f64>>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    init: Option<InitFlag>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SolverFlags {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            damping: self.damping,
            seed: self.seed,
            init: match self.init {
                InitFlag::Perturbed => smf::meanfield::Init::Perturbed,
                InitFlag::Uniform => smf::meanfield::Init::Uniform,
            },
        }
    }
}

impl ExperimentFlags {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(n) = self.size {
            cfg.size = n;
        }
        if let Some(t) = &self.temps {
            cfg.temperatures = t.clone();
            if let Some(&first) = t.first() {
                cfg.timing_temperature = first;
            }
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.max_sweeps {
            cfg.max_sweeps = v;
        }
        if let Some(v) = self.damping {
            cfg.damping = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.init {
            cfg.init = match v {
                InitFlag::Perturbed => InitChoice::Perturbed,
                InitFlag::Uniform => InitChoice::Uniform,
            };
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Intractable(_) | Error::BAcyclicSampler(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Classify { model, subgraph } => {
            let model = load_model(&model)?;
            let sel = load_subgraph(&subgraph, &model.graph)?;
            classify(&sel);
            Ok(())
        }
        Command::Solve {
            model,
            subgraph,
            method,
            size,
            solver,
            out,
            trace,
        } => {
            let model = load_model(&model)?;
            let mut sink = open_out(&out)?;
            solve(model, subgraph, method, size, &solver, &mut sink, trace)
        }
        Command::ExperimentTemperature { exp } => {
            let cfg = exp.config()?;
            let rows = experiment::run_temperature(&cfg)?;
            let mut sink = open_out(&exp.out)?;
            experiment::write_temperature_csv(&rows, &mut sink)
        }
        Command::ExperimentTiming { exp } => {
            let cfg = exp.config()?;
            let rows = experiment::run_timing(&cfg)?;
            let mut sink = open_out(&exp.out)?;
            experiment::write_timing_csv(&rows, &mut sink)
        }
    }
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    })
}

fn classify(sel: &SubgraphSelection) {
    let d = sel.decompose();
    println!(
        "components: {}, kept edges: {}, dropped cross: {}, dropped intra: {}",
        d.components.len(),
        sel.kept().len(),
        d.dropped_cross.len(),
        d.dropped_intra.iter().map(|v| v.len()).sum::<usize>()
    );
    for (c, comp) in d.components.iter().enumerate() {
        let kind = match comp.kind {
            ComponentKind::VAcyclic => "v-acyclic",
            ComponentKind::BAcyclic => "b-acyclic",
        };
        println!(
            "component {c}: {} vertices, {kind}, {} intra dropped edges",
            comp.vertices.len(),
            d.dropped_intra[c].len()
        );
    }
}

fn solve(
    model: Model,
    subgraph: Option<PathBuf>,
    method: Method,
    size: usize,
    solver: &SolverFlags,
    sink: &mut Box<dyn Write>,
    trace_path: Option<PathBuf>,
) -> Result<()> {
    match method {
        Method::Exact => {
            let start = Instant::now();
            let exact = exact_log_partition(&model)?;
            let row = ResultRow {
                method: "exact",
                temperature: f64::NAN,
                log_z_estimate: exact.log_z,
                exact_log_z: exact.log_z,
                abs_error: 0.0,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                converged: true,
            };
            write_solve_row(sink, &row)
        }
        Method::Gibbs => {
            let sel = match subgraph {
                Some(p) => load_subgraph(&p, &model.graph)?,
                None => {
                    return Err(Error::InvalidSelection(
                        "gibbs requires --subgraph".into(),
                    ))
                }
            };
            let gibbs = BlockGibbs::new(model, sel)?;
            let burn_in = solver.max_sweeps / 10;
            let est = gibbs.estimate_marginals(solver.max_sweeps, burn_in, solver.seed);
            let k = gibbs.model.state_count();
            writeln!(sink, "vertex,state,marginal")?;
            for v in 0..gibbs.model.vertex_count() {
                for x in 0..k {
                    writeln!(sink, "{v},{x},{}", fmt_float(est.node_marginals[v * k + x]))?;
                }
            }
            Ok(())
        }
        Method::Mf | Method::Nmf | Method::Smf1 | Method::Smf2 => {
            let (name, sel) = match method {
                Method::Mf => {
                    let p = subgraph.ok_or_else(|| {
                        Error::InvalidSelection("mf requires --subgraph".into())
                    })?;
                    ("mf", load_subgraph(&p, &model.graph)?)
                }
                Method::Nmf => ("nmf", MfMethod::Nmf.selection(size)),
                Method::Smf1 => ("smf1", MfMethod::Smf1.selection(size)),
                Method::Smf2 => ("smf2", MfMethod::Smf2.selection(size)),
                _ => unreachable!(),
            };
            let exact = exact_log_partition_if_tractable(&model);
            let problem = MfProblem::new(model, sel)?;
            let sol = problem.solve(&solver.options());
            if let Some(path) = trace_path {
                let mut f = std::fs::File::create(path)?;
                experiment::write_trace_csv(&sol.trace, &mut f)?;
            }
            let elapsed_ms = sol.trace.last().map_or(0.0, |r| r.elapsed_ms);
            let row = ResultRow {
                method: name,
                temperature: f64::NAN,
                log_z_estimate: sol.lower_bound,
                exact_log_z: exact.unwrap_or(f64::NAN),
                abs_error: exact.map_or(f64::NAN, |a| (sol.lower_bound - a).abs()),
                elapsed_ms,
                converged: sol.converged,
            };
            write_solve_row(sink, &row)
        }
    }
}

/// Exact value when the elimination guard allows it; mean-field answers are
/// still useful without it.
fn exact_log_partition_if_tractable(model: &Model) -> Option<f64> {
    smf::exact::exact_log_z(model).ok()
}

fn write_solve_row(sink: &mut Box<dyn Write>, row: &ResultRow) -> Result<()> {
    writeln!(
        sink,
        "method,log_z_estimate,exact_log_z,abs_error,elapsed_ms,converged"
    )?;
    let opt = |x: f64| {
        if x.is_nan() {
            String::new()
        } else {
            fmt_float(x)
        }
    };
    writeln!(
        sink,
        "{},{},{},{},{},{}",
        row.method,
        fmt_float(row.log_z_estimate),
        opt(row.exact_log_z),
        opt(row.abs_error),
        fmt_float(row.elapsed_ms),
        row.converged
    )?;
    Ok(())
}
