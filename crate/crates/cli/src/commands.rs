//! Pipelines behind the subcommands. Every command writes its results into
//! the output directory and returns the list of files written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use topoid::graph::{self, BlockPartition, TopologyComparison};
use topoid::identifiability::{self, IdentifiabilityVerdict};
use topoid::io;
use topoid::lti::{simulate, MarkovOutput, MarkovSequence};
use topoid::markov_est::{self, DataSet};
use topoid::noise::perturb_markov;
use topoid::sylvester::{self, PerturbationBounds, SolveReport, SolverOptions};
use topoid::{linalg, Network};

use crate::config::{ExperimentConfig, MarkovSource, NoiseConfig, SolverMode};
use crate::error::CliError;

pub struct Context {
    pub output: PathBuf,
    pub parallel: bool,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }

    fn prepare(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.output)?;
        Ok(())
    }
}

fn markov_order(cfg: &ExperimentConfig, net: &Network) -> usize {
    cfg.input.r.unwrap_or_else(|| sylvester::required_order(net).max(1))
}

/// Input/output data: the configured trajectory, or a simulation from rest.
fn trajectory(cfg: &ExperimentConfig, net: &Network) -> Result<DataSet, CliError> {
    if let Some(path) = &cfg.input.trajectory {
        return Ok(io::load_trajectory(path)?);
    }
    let (m, n) = (net.external_input_dim(), net.state_dim());
    let seed = cfg.input_seed()?;
    let u = match cfg.input.length {
        Some(0) => return Err(CliError::Usage("input.length must be positive".into())),
        Some(length) => markov_est::random_normal(&mut ChaCha8Rng::seed_from_u64(seed), m, length),
        None => markov_est::design_pe_input(m, n, markov_order(cfg, net), seed)?,
    };
    let y = simulate(&net.closed_loop(), &DVector::zeros(n), &u)?;
    Ok(DataSet::new(u, y)?)
}

pub fn simulate_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let net = cfg.build_network()?;
    let data = trajectory(cfg, &net)?;
    ctx.prepare()?;
    let (traj, network) = (ctx.path("trajectory.csv"), ctx.path("network.json"));
    io::save_trajectory(&traj, &data)?;
    io::save_network(&network, &net)?;
    Ok(vec![traj, network])
}

pub fn estimate_markov_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let net = cfg.build_network()?;
    let data = trajectory(cfg, &net)?;
    let estimate = markov_est::estimate_markov(&data, net.state_dim(), markov_order(cfg, &net))?;
    ctx.prepare()?;
    let out = ctx.path("markov.json");
    io::save_markov(&out, &estimate.markov)?;
    Ok(vec![out])
}

#[derive(Debug, Serialize)]
struct CheckReport {
    identifiable: bool,
    /// Method whose verdict decides `identifiable`.
    decided_by: Option<identifiability::Method>,
    general: Option<IdentifiabilityVerdict>,
    full_excitation: IdentifiabilityVerdict,
    homogeneous_siso: Option<IdentifiabilityVerdict>,
    notes: Vec<String>,
}

pub fn check_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let net = cfg.build_network()?;
    let mut notes = Vec::new();
    let general = match identifiability::check_identifiability_general(&net, None) {
        Ok(v) => Some(v),
        Err(topoid::Error::RankDeficientS { rank, cols }) => {
            notes.push(format!("general test skipped: S has rank {rank} < {cols} columns"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let full_excitation = identifiability::check_identifiability_full_excitation(&net)?;
    let homogeneous_siso = if net.is_siso() && net.is_homogeneous() {
        Some(identifiability::check_homogeneous_siso(&net)?)
    } else {
        None
    };
    let decisive = general
        .as_ref()
        .or(homogeneous_siso.as_ref())
        .or(Some(&full_excitation).filter(|v| v.conclusive));
    if decisive.is_none() {
        notes.push("no conclusive test applies; reporting not identifiable".into());
    }
    let report = CheckReport {
        identifiable: decisive.is_some_and(|v| v.identifiable),
        decided_by: decisive.map(|v| v.method),
        general,
        full_excitation,
        homogeneous_siso,
        notes,
    };
    ctx.prepare()?;
    let out = ctx.path("check.json");
    io::write_json(&out, &report)?;
    Ok(vec![out])
}

/// Node-output Markov parameters `M_0..M_r` from the configured source, before noise.
fn identification_markov(cfg: &ExperimentConfig, net: &Network, r: usize) -> Result<(MarkovSequence, bool), CliError> {
    let (external, exact) = match &cfg.input.markov_source {
        MarkovSource::Exact => (net.markov_exact(r, MarkovOutput::External), true),
        MarkovSource::Estimated => {
            let data = trajectory(cfg, net)?;
            (markov_est::estimate_markov(&data, net.state_dim(), r)?.markov, false)
        }
        MarkovSource::File(path) => (io::load_markov(path)?.truncated(r)?, false),
    };
    Ok((sylvester::to_node_outputs(net, &external)?, exact))
}

struct Identification {
    report: SolveReport,
    thresholded: Option<sylvester::Thresholded>,
}

fn identify(
    cfg: &ExperimentConfig,
    net: &Network,
    noise: Option<&NoiseConfig>,
    parallel: bool,
) -> Result<Identification, CliError> {
    let r = cfg.solver.r.or(cfg.input.r).unwrap_or_else(|| sylvester::required_order(net));
    let (clean, exact) = identification_markov(cfg, net, r)?;
    let markov = match noise {
        Some(n) => perturb_markov(&clean, n.bound, n.distribution, n.seed()?)?.perturbed,
        None => clean,
    };
    let mut report = match cfg.solver.mode {
        SolverMode::Vectorized => {
            let options = SolverOptions {
                max_unknowns: cfg.solver.max_unknowns.unwrap_or(sylvester::DEFAULT_MAX_UNKNOWNS),
            };
            sylvester::solve_vectorized_with(&sylvester::build_system(net, &markov)?, &options)?
        }
        SolverMode::Blockwise => sylvester::solve_blockwise(&sylvester::build_node_systems(net, &markov)?, parallel)?,
    };
    report.bound = if !report.unique {
        None
    } else {
        match (noise, cfg.threshold.as_ref().and_then(|t| t.q_bound)) {
            (Some(n), Some(q_bound)) => {
                let l_blocks = sylvester::build_system(net, &markov)?.l_blocks;
                Some(sylvester::robustness_bound(&report, &PerturbationBounds::uniform(n.bound, r), q_bound, &l_blocks)?)
            }
            (None, _) if exact => Some(0.0),
            _ => None,
        }
    };
    let thresholded = cfg
        .threshold
        .as_ref()
        .map(|t| sylvester::threshold_topology(&report.q_hat, t.gamma, report.bound.unwrap_or(f64::INFINITY)))
        .transpose()?;
    Ok(Identification { report, thresholded })
}

fn partition_of(report: &SolveReport) -> Result<BlockPartition, CliError> {
    Ok(BlockPartition::new(report.row_blocks.clone(), report.col_blocks.clone())?)
}

pub fn identify_cmd(cfg: &ExperimentConfig, ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let net = cfg.build_network()?;
    let result = identify(cfg, &net, cfg.noise.as_ref(), ctx.parallel)?;
    let q = result.thresholded.as_ref().map_or(&result.report.q_hat, |t| &t.q);
    let topology = graph::extract_topology(q, &partition_of(&result.report)?, 0.0)?;
    ctx.prepare()?;
    let mut written = vec![ctx.path("solve_report.json"), ctx.path("topology.csv"), ctx.path("topology.json")];
    io::write_json(&written[0], &result.report)?;
    topology.write_edge_csv(BufWriter::new(File::create(&written[1])?))?;
    io::write_json(&written[2], &topology.to_doc())?;
    if let Some(t) = &result.thresholded {
        let path = ctx.path("threshold.json");
        io::write_json(&path, t)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct Metrics {
    gamma: Option<f64>,
    max_abs_error: f64,
    frobenius_error: f64,
    comparison: TopologyComparison,
}

pub struct EvaluateArgs {
    pub truth: Option<PathBuf>,
    pub estimate: Option<PathBuf>,
    pub gamma: Option<f64>,
}

pub fn evaluate_cmd(
    cfg: Option<&ExperimentConfig>,
    args: &EvaluateArgs,
    ctx: &Context,
) -> Result<Vec<PathBuf>, CliError> {
    let sweep = cfg.filter(|c| !c.sweep.is_empty());
    if sweep.is_none() && (args.truth.is_none() || args.estimate.is_none()) {
        return Err(CliError::Usage("evaluate needs --truth and --estimate, or a config with a noise sweep".into()));
    }
    let mut written = Vec::new();
    match (&args.truth, &args.estimate) {
        (Some(truth), Some(estimate)) => {
            let net = io::load_network(truth)?;
            let report: SolveReport = io::read_json(estimate)?;
            let gamma = args.gamma.or_else(|| cfg.and_then(|c| c.threshold.as_ref()).map(|t| t.gamma));
            let (metrics, heatmap) = evaluate(&net, &report, gamma)?;
            ctx.prepare()?;
            let (m_path, h_path) = (ctx.path("metrics.json"), ctx.path("heatmap.csv"));
            io::write_json(&m_path, &metrics)?;
            fs::write(&h_path, heatmap)?;
            written.extend([m_path, h_path]);
        }
        (None, None) => {}
        _ => return Err(CliError::Usage("--truth and --estimate must be given together".into())),
    }
    if let Some(cfg) = sweep {
        let table = noise_sweep(cfg, ctx.parallel)?;
        ctx.prepare()?;
        let path = ctx.path("sweep.csv");
        fs::write(&path, table)?;
        written.push(path);
    }
    Ok(written)
}

fn evaluate(net: &Network, report: &SolveReport, gamma: Option<f64>) -> Result<(Metrics, String), CliError> {
    let truth_partition = BlockPartition::of_network(net);
    let estimate_partition = partition_of(report)?;
    if truth_partition != estimate_partition {
        return Err(topoid::Error::PartitionMismatch(format!(
            "network partition {truth_partition:?} differs from estimate partition {estimate_partition:?}"
        ))
        .into());
    }
    let q_est = match gamma {
        Some(g) => sylvester::threshold_topology(&report.q_hat, g, f64::INFINITY)?.q,
        None => report.q_hat.clone(),
    };
    let truth = graph::extract_topology(net.q(), &truth_partition, 0.0)?;
    let estimate = graph::extract_topology(&q_est, &estimate_partition, 0.0)?;
    let diff: DMatrix<f64> = &report.q_hat - net.q();
    let metrics = Metrics {
        gamma,
        max_abs_error: linalg::max_abs(&diff),
        frobenius_error: diff.norm(),
        comparison: graph::compare(&truth, &estimate)?,
    };
    let (ht, he) = (truth.heatmap(), estimate.heatmap());
    let mut csv = String::from("from,to,truth,estimate\n");
    for to in 0..ht.nrows() {
        for from in 0..ht.ncols() {
            csv.push_str(&format!("{},{},{:.16e},{:.16e}\n", from + 1, to + 1, ht[(to, from)], he[(to, from)]));
        }
    }
    Ok((metrics, csv))
}

fn noise_sweep(cfg: &ExperimentConfig, parallel: bool) -> Result<String, CliError> {
    let net = cfg.build_network()?;
    let base = cfg
        .noise
        .clone()
        .ok_or_else(|| CliError::Usage("a noise sweep needs a noise section for seed and distribution".into()))?;
    let mut table = String::from("delta,alpha,bound,max_abs_error,precision,recall,missing,spurious\n");
    for &delta in &cfg.sweep {
        let noise = NoiseConfig { bound: delta, ..base.clone() };
        let result = identify(cfg, &net, Some(&noise), parallel)?;
        let gamma = cfg.threshold.as_ref().map(|t| t.gamma);
        let (metrics, _) = evaluate(&net, &result.report, gamma)?;
        let bound = result.report.bound.map_or_else(String::new, |b| format!("{b:.16e}"));
        table.push_str(&format!(
            "{delta:.16e},{:.16e},{bound},{:.16e},{:.16e},{:.16e},{},{}\n",
            result.report.alpha,
            metrics.max_abs_error,
            metrics.comparison.precision,
            metrics.comparison.recall,
            metrics.comparison.missing_edges.len(),
            metrics.comparison.spurious_edges.len(),
        ));
    }
    Ok(table)
}

pub fn print_written(paths: &[PathBuf], out: &mut impl Write) -> std::io::Result<()> {
    for p in paths {
        writeln!(out, "wrote {}", display(p))?;
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
