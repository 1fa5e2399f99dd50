// SPDX-License-Identifier: Apache-2.0

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use povgraph_core::container::write_pov_container;
use povgraph_core::eval::{
    average_precision, benchmark_pov_runtime, evaluate, roc_auc, summarize, sweep_gamma_lambda, sweep_m, write_records,
    EvalRecord, NoiseSpec, DEFAULT_SEEDS,
};
use povgraph_core::graph::load_attributed_graph;
use povgraph_core::id_model::detect;
use povgraph_core::pov::{compute_pov, rumor_localize, NodeDistribution, PovConfig};
use povgraph_core::verify::{run_suite, sign_flipped_circ, Suite, SuiteResult, VerifyOptions};
use povgraph_core::{adjacency, AttributedGraph, NodeId};
use serde::Serialize;

use crate::config::{ModelFlags, Resolved};

#[derive(Parser, Debug)]
#[command(
    name = "povgraph",
    version,
    about = "Points of view on attributed graphs and an outlier detector built on them"
)]
struct Cli {
    /// Seed for model initialization, dropout and the verify suites
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress and summary lines on stderr
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute DMI and POV matrices and write them to a binary container
    Compute {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        theta: f64,
        /// "uniform" or a file of whitespace-separated probabilities, one per node
        #[arg(long, default_value = "uniform")]
        p: String,
        #[arg(long)]
        out: PathBuf,
        /// Print a timing report with a machine descriptor instead of the summary
        #[arg(long)]
        bench: bool,
    },
    /// Train the detector and score every node
    Detect {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        /// Report file (JSON)
        #[arg(long)]
        out: PathBuf,
    },
    /// Staged rumor-source localization from an observing node
    Rumor {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        start: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 10)]
        max_stages: usize,
    },
    /// Evaluate the detector over several seeds
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
        seeds: Vec<u64>,
        /// Output stem; writes <stem>.csv and <stem>.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the score weights or the level
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[command(flatten)]
        model: ModelFlags,
        /// γ values for the gamma-lambda sweep (λ = 1 − γ)
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Levels for the m sweep
        #[arg(long, value_delimiter = ',')]
        m_values: Option<Vec<usize>>,
        /// Add Gaussian feature noise with this variance (m sweep only)
        #[arg(long)]
        noise_sigma2: Option<f64>,
        #[arg(long, default_value_t = 0.0, requires = "noise_sigma2")]
        noise_mu: f64,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the randomized property suites
    Verify {
        /// Run a single suite
        #[arg(long, value_parser = parse_suite)]
        only: Option<Suite>,
        /// Replace the monoid product with a sign-flipped one
        #[arg(long, hide = true)]
        inject_circ_bug: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepKind {
    GammaLambda,
    M,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: povgraph_core::Error| e.to_string())
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<povgraph_core::Error> for Failure {
    fn from(e: povgraph_core::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn load(dir: &Path) -> CliResult<AttributedGraph> {
    if !dir.is_dir() {
        return Err(Failure::Usage(format!(
            "dataset directory {} does not exist",
            dir.display()
        )));
    }
    Ok(load_attributed_graph(dir)?)
}

/// A closed pipe on stdout is not an error worth reporting.
fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    std::fs::write(path, text).map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))
}

fn read_distribution(spec: &str, n: usize) -> CliResult<NodeDistribution<f64>> {
    if spec == "uniform" {
        return Ok(NodeDistribution::uniform(n));
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(Failure::Usage(format!("distribution file {spec} does not exist")));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Run(format!("cannot read {spec}: {e}")))?;
    let probs = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Failure::Run(format!("{spec}: bad value {t:?}: {e}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if probs.len() != n {
        return Err(Failure::Run(format!("{spec}: {} values for {n} nodes", probs.len())));
    }
    Ok(NodeDistribution::new(probs)?)
}

fn resolve(model: &ModelFlags, seed: Option<u64>) -> CliResult<Resolved> {
    model.resolve(seed).map_err(Failure::Usage)
}

#[derive(Serialize)]
struct ComputeSummary<'a> {
    dataset: &'a str,
    num_nodes: usize,
    m: usize,
    theta: f64,
    dmi_nnz: usize,
    pov_nnz: usize,
    isolated_nodes: Vec<usize>,
}

fn cmd_compute(dataset: &Path, m: usize, theta: f64, p: &str, out: &Path, bench: bool) -> CliResult {
    let g = load(dataset)?;
    let cfg = PovConfig::new(m, theta).map_err(|e| Failure::Usage(e.to_string()))?;
    let dist = read_distribution(p, g.num_nodes())?;
    let result = compute_pov(&adjacency(&g), &dist, cfg)?;
    write_pov_container(out, &result)?;
    if bench {
        print_json(&benchmark_pov_runtime(&g, cfg)?);
    } else {
        print_json(&ComputeSummary {
            dataset: g.name(),
            num_nodes: g.num_nodes(),
            m,
            theta,
            dmi_nnz: result.dmi.nnz(),
            pov_nnz: result.pov.nnz(),
            isolated_nodes: (0..g.num_nodes()).filter(|&i| result.is_isolated(i)).collect(),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct DetectReport<'a> {
    dataset: &'a str,
    num_nodes: usize,
    config: &'a Resolved,
    auc: Option<f64>,
    ap: Option<f64>,
    scores: &'a [f64],
}

fn cmd_detect(dataset: &Path, model: &ModelFlags, seed: Option<u64>, out: &Path, quiet: bool) -> CliResult {
    let g = load(dataset)?;
    let resolved = resolve(model, seed)?;
    let report = detect::<f64>(&g, resolved.pov, &resolved.model)?;
    let (auc, ap) = match g.labels() {
        Some(labels) => (
            roc_auc(labels, &report.scores).ok(),
            average_precision(labels, &report.scores).ok(),
        ),
        None => (None, None),
    };
    write_json(
        out,
        &DetectReport {
            dataset: g.name(),
            num_nodes: g.num_nodes(),
            config: &resolved,
            auc,
            ap,
            scores: &report.scores,
        },
    )?;
    if !quiet {
        match (auc, ap) {
            (Some(auc), Some(ap)) => eprintln!("{}: auc {:.4} ap {:.4}", g.name(), auc, ap),
            _ => eprintln!("{}: scored {} nodes", g.name(), g.num_nodes()),
        }
    }
    Ok(())
}

fn cmd_rumor(dataset: &Path, start: usize, m: usize, theta: f64, max_stages: usize) -> CliResult {
    let g = load(dataset)?;
    let cfg = PovConfig::new(m, theta).map_err(|e| Failure::Usage(e.to_string()))?;
    let trajectory = rumor_localize::<f64>(&g, NodeId(start), cfg, max_stages)?;
    print_json(&trajectory);
    Ok(())
}

fn report_records(out: &Path, records: &[EvalRecord], quiet: bool) -> CliResult {
    write_records(out, records)?;
    if !quiet {
        for s in summarize(records) {
            eprintln!(
                "{} m={} theta={} gamma={} lambda={}: auc {:.2} ± {:.2}, ap {:.2} ± {:.2} over {} runs",
                s.dataset,
                s.m,
                s.theta,
                s.gamma,
                s.lambda,
                100.0 * s.auc_mean,
                100.0 * s.auc_std,
                100.0 * s.ap_mean,
                100.0 * s.ap_std,
                s.runs
            );
        }
    }
    Ok(())
}

fn cmd_verify(only: Option<Suite>, inject_circ_bug: bool, seed: Option<u64>) -> CliResult<bool> {
    let opts = VerifyOptions {
        seed: seed.unwrap_or(0),
        circ: if inject_circ_bug {
            &sign_flipped_circ
        } else {
            VerifyOptions::default().circ
        },
    };
    let suites: Vec<Suite> = match only {
        Some(s) => vec![s],
        None => Suite::ALL.to_vec(),
    };
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "{:<15} {:<6} {:>7}  description / detail",
        "suite", "result", "checks"
    );
    let mut all = true;
    for suite in suites {
        let SuiteResult {
            passed, checks, detail, ..
        } = run_suite(suite, &opts);
        all &= passed;
        let status = if passed { "PASS" } else { "FAIL" };
        let text = if passed {
            suite.description().to_string()
        } else {
            detail
        };
        let _ = writeln!(stdout, "{:<15} {:<6} {:>7}  {}", suite.id(), status, checks, text);
    }
    Ok(all)
}

fn run(cli: Cli) -> CliResult<bool> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Run(format!("cannot start thread pool: {e}")))?;
    }
    let quiet = cli.quiet;
    match cli.command {
        Command::Compute {
            dataset,
            m,
            theta,
            p,
            out,
            bench,
        } => cmd_compute(&dataset, m, theta, &p, &out, bench)?,
        Command::Detect { dataset, model, out } => cmd_detect(&dataset, &model, cli.seed, &out, quiet)?,
        Command::Rumor {
            dataset,
            start,
            m,
            theta,
            max_stages,
        } => cmd_rumor(&dataset, start, m, theta, max_stages)?,
        Command::Eval {
            dataset,
            model,
            seeds,
            out,
        } => {
            let g = load(&dataset)?;
            let r = resolve(&model, cli.seed)?;
            let records = evaluate(&g, r.pov, &r.model, &seeds)?;
            report_records(&out, &records, quiet)?;
        }
        Command::Sweep {
            dataset,
            kind,
            model,
            grid,
            m_values,
            noise_sigma2,
            noise_mu,
            seeds,
            out,
        } => {
            let g = load(&dataset)?;
            let r = resolve(&model, cli.seed)?;
            let records = match kind {
                SweepKind::GammaLambda => {
                    if noise_sigma2.is_some() {
                        return Err(Failure::Usage("noise applies to the m sweep only".into()));
                    }
                    let grid = grid.unwrap_or_else(|| (0..=10).map(|k| k as f64 / 10.0).collect());
                    sweep_gamma_lambda(&g, r.pov, &r.model, &grid, &seeds)?
                }
                SweepKind::M => {
                    let m_values = m_values.unwrap_or_else(|| (1..=11).collect());
                    let noise = noise_sigma2.map(|sigma2| NoiseSpec { mu: noise_mu, sigma2 });
                    sweep_m(&g, r.pov, &r.model, &m_values, noise, &seeds)?
                }
            };
            report_records(&out, &records, quiet)?;
        }
        Command::Verify { only, inject_circ_bug } => return cmd_verify(only, inject_circ_bug, cli.seed),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            let mut cmd = Cli::command();
            eprintln!("error: {msg}\n\n{}", cmd.render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
