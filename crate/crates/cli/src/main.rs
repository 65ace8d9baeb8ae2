use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use monstor::cascade::{generate_tuples_from, read_tuples, simulate, write_tuples};
use monstor::eval::{
    compare_estimators, run_scalability, submodularity_probe, ReportHeader, TsvReport,
};
use monstor::graph::{
    assign_weighted_cascade, generate_rmat, load_edge_list, write_edge_list, write_node_map, RmatParams,
};
use monstor::im::{greedy_select, lazy_greedy_select, Backend};
use monstor::model::{load_checkpoint, save_checkpoint, stacked_inference, train, Hyper, Optimizer, TrainConfig};
use monstor::probs::{build_graph, ActionLog, Measure};
use monstor::rng::derive_seed;
use monstor::{DirectedGraph, SeedSet};

const GIT_REV: &str = env!("MONSTOR_GIT_REV");

#[derive(Parser)]
#[command(name = "monstor", version, about = "Influence estimation and maximization under the Independent Cascade model")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an R-MAT graph.
    Rmat(RmatArgs),
    /// Build activation probabilities from an action log.
    BuildProbs(BuildProbsArgs),
    /// Monte Carlo influence of a seed set.
    Simulate(SimulateArgs),
    /// Generate training tuples from simulations.
    GenTuples(GenTuplesArgs),
    /// Train the step network.
    Train(TrainArgs),
    /// Estimate influence with a trained model.
    Estimate(EstimateArgs),
    /// Select seeds greedily.
    Maximize(MaximizeArgs),
    /// Evaluation experiments.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbKind {
    /// `1 / in_degree(v)`.
    Wc,
    /// Probability 1 on every edge.
    One,
}

#[derive(Args)]
struct RmatArgs {
    #[arg(long)]
    log2_edges: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "wc")]
    probs: ProbKind,
    #[arg(long, default_value_t = 0.7)]
    a: f64,
    #[arg(long, default_value_t = 0.1)]
    b: f64,
    #[arg(long, default_value_t = 0.1)]
    c: f64,
    #[arg(long, default_value_t = 0.1)]
    d: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildProbsArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    measure: Measure,
    /// Fraction of the log (by time, or by action order) used for the training graph.
    #[arg(long, default_value_t = 0.5)]
    split_at: f64,
    /// Writes PREFIX.train.edges.tsv and PREFIX.test.edges.tsv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Comma-separated node labels.
    #[arg(long)]
    seeds: String,
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Per-step infection probabilities as TSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenTuplesArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 1600)]
    count: usize,
    #[arg(long, default_value_t = 4)]
    e: usize,
    /// Earliest cascade step kept as a target (1..=e, default e). Histories
    /// reaching before step 0 are padded with zero vectors.
    #[arg(long)]
    first_step: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Comma-separated tuple files.
    #[arg(long, value_delimiter = ',', required = true)]
    tuples: Vec<PathBuf>,
    /// Directory holding the graphs the tuples refer to.
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.2)]
    val_frac: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 0.3)]
    lambda: f64,
    #[arg(long, default_value = "adam")]
    optimizer: Optimizer,
    /// Largest stack count tried on validation data.
    #[arg(long, default_value_t = 8)]
    max_stacks: usize,
    #[arg(long, default_value_t = 50)]
    val_sets: usize,
    #[arg(long, default_value_t = 1000)]
    val_runs: usize,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch losses and stack scores as TSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    seeds: String,
    /// Print the per-node probabilities of the final estimate.
    #[arg(long)]
    per_node: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mc,
    Surrogate,
    Exact,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "surrogate")]
    backend: BackendKind,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
}

impl BackendArgs {
    fn build(&self, seed: u64) -> Result<Backend> {
        Ok(match self.backend {
            BackendKind::Mc => Backend::MonteCarlo { runs: self.runs, seed },
            BackendKind::Exact => Backend::Exact,
            BackendKind::Surrogate => {
                let path = self.model.as_ref().context("--model is required for the surrogate backend")?;
                Backend::Surrogate(load_checkpoint(path)?)
            }
        })
    }
}

#[derive(Args)]
struct MaximizeArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    backend: BackendArgs,
    /// Evaluate every candidate each round instead of lazily.
    #[arg(long)]
    eager: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Surrogate versus Monte Carlo correlation on random seed sets.
    Ie(EvalIeArgs),
    /// Empirical submodularity on random seed-set pairs.
    Submod(EvalSubmodArgs),
    /// Inference time on growing R-MAT graphs.
    Scale(EvalScaleArgs),
}

#[derive(Args)]
struct EvalIeArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 200)]
    sets: usize,
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Per-set (truth, estimate) pairs as TSV.
    #[arg(long)]
    scatter: Option<PathBuf>,
}

#[derive(Args)]
struct EvalSubmodArgs {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 200)]
    pairs: usize,
    #[arg(long, default_value_t = 0.0)]
    min_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    max_frac: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalScaleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "14,15,16,17,18")]
    log2_edges: Vec<u32>,
    #[arg(long, default_value_t = 100)]
    estimations: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// `X.edges.tsv -> X.nodes.tsv`, otherwise `X -> X.nodes.tsv`.
fn node_map_path(edges: &Path) -> PathBuf {
    let s = edges.to_string_lossy();
    match s.strip_suffix(".edges.tsv") {
        Some(stem) => PathBuf::from(format!("{stem}.nodes.tsv")),
        None => PathBuf::from(format!("{s}.nodes.tsv")),
    }
}

fn save_graph(g: &DirectedGraph, path: &Path) -> Result<()> {
    write_edge_list(g, path)?;
    write_node_map(g, node_map_path(path))?;
    Ok(())
}

fn load_graph(path: &Path) -> Result<DirectedGraph> {
    load_edge_list(path).with_context(|| format!("loading graph {}", path.display()))
}

fn file_name(path: &Path) -> Result<String> {
    Ok(path
        .file_name()
        .context("graph path has no file name")?
        .to_string_lossy()
        .into_owned())
}

fn save_report(report: &TsvReport, path: &Path) -> Result<()> {
    report.save(path).with_context(|| format!("writing {}", path.display()))
}

fn cmd_rmat(a: &RmatArgs) -> Result<()> {
    let params = RmatParams { a: a.a, b: a.b, c: a.c, d: a.d };
    let mut g = generate_rmat(a.log2_edges, params, a.seed)?;
    if let ProbKind::Wc = a.probs {
        g = assign_weighted_cascade(&g)?;
    }
    save_graph(&g, &a.out)?;
    println!("nodes {}  edges {}  mean p {}", g.node_count(), g.edge_count(), g.mean_probability());
    Ok(())
}

fn cmd_build_probs(a: &BuildProbsArgs) -> Result<()> {
    let log = ActionLog::load(&a.log)?;
    let (early, late) = log.split(a.split_at)?;
    let prefix = a.out.to_string_lossy();
    for (part, name) in [(&early, "train"), (&late, "test")] {
        let topology = a.measure.default_topology(part);
        let g = build_graph(part, a.measure, &topology).with_context(|| format!("{name} graph"))?;
        let path = PathBuf::from(format!("{prefix}.{name}.edges.tsv"));
        save_graph(&g, &path)?;
        println!(
            "{name}: {} records  nodes {}  edges {}  mean p {}",
            part.records().len(),
            g.node_count(),
            g.edge_count(),
            g.mean_probability()
        );
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let seeds = SeedSet::parse_labels(&g, &a.seeds)?;
    let sim = simulate(&g, &seeds, a.runs, a.seed)?;
    println!("influence {}  std error {}  steps {}", sim.influence, sim.std_error, sim.per_step.len() - 1);
    if let Some(out) = &a.out {
        let header = ReportHeader::new("simulate", GIT_REV, a.seed)
            .with("graph", a.graph.display())
            .with("seeds", &a.seeds)
            .with("runs", a.runs)
            .with("influence", sim.influence)
            .with("std_error", sim.std_error);
        let mut report = TsvReport::new(header, &["step", "node", "probability"]);
        for (i, v) in sim.per_step.iter().enumerate() {
            for (node, &p) in v.iter().enumerate() {
                if p > 0.0 {
                    report.push(vec![i.to_string(), g.label(node as u32).to_string(), p.to_string()])?;
                }
            }
        }
        save_report(&report, out)?;
    }
    Ok(())
}

fn cmd_gen_tuples(a: &GenTuplesArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let first = a.first_step.unwrap_or(a.e);
    let tuples = generate_tuples_from(&g, &file_name(&a.graph)?, a.count, a.e, first, a.runs, a.seed)?;
    write_tuples(&a.out, &tuples)?;
    println!("{} tuples written to {}", tuples.len(), a.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut tuples = Vec::new();
    for path in &a.tuples {
        tuples.extend(read_tuples(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let mut graphs = HashMap::new();
    for t in &tuples {
        if !graphs.contains_key(&t.graph_ref) {
            let g = load_graph(&a.graphs.join(&t.graph_ref))?;
            graphs.insert(t.graph_ref.clone(), g);
        }
    }
    let e = tuples.first().map(|t| t.history.len()).context("no tuples")?;
    let config = TrainConfig {
        hyper: Hyper::new(e, a.layers, a.hidden, 1, a.lambda),
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        val_frac: a.val_frac,
        optimizer: a.optimizer,
        stack_candidates: (1..=a.max_stacks).collect(),
        val_seed_sets: a.val_sets,
        val_runs: a.val_runs,
    };
    let outcome = train(&tuples, &graphs, &config)?;
    save_checkpoint(&outcome.params, &a.out)?;

    let header = ReportHeader::new("train", GIT_REV, a.seed)
        .with("tuples", tuples.len())
        .with("e", e)
        .with("layers", a.layers)
        .with("hidden", a.hidden)
        .with("lambda", a.lambda)
        .with("optimizer", format!("{:?}", a.optimizer).to_lowercase())
        .with("epochs", a.epochs)
        .with("batch_size", a.batch_size)
        .with("val_frac", a.val_frac)
        .with("best_epoch", outcome.best_epoch)
        .with("stacks", outcome.params.hyper.stacks);
    let mut epochs = TsvReport::new(header, &["epoch", "learning_rate", "train_loss", "val_loss"]);
    for s in &outcome.epochs {
        epochs.push(vec![
            s.epoch.to_string(),
            s.learning_rate.to_string(),
            s.train_loss.to_string(),
            s.val_loss.to_string(),
        ])?;
    }
    print!("{}", epochs.to_table());
    for (s, score) in &outcome.stack_scores {
        println!("stacks {s}: validation pearson {score}");
    }
    println!(
        "best epoch {}  stacks {}  model written to {}",
        outcome.best_epoch,
        outcome.params.hyper.stacks,
        a.out.display()
    );
    if let Some(log) = &a.log {
        for (s, score) in &outcome.stack_scores {
            epochs.header.config.push((format!("stack_score_{s}"), score.to_string()));
        }
        save_report(&epochs, log)?;
    }
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let model = load_checkpoint(&a.model)?;
    let seeds = SeedSet::parse_labels(&g, &a.seeds)?;
    let est = stacked_inference(&g, &seeds, &model)?;
    println!("influence {}", est.influence);
    let last = est.vectors.last().expect("pi_0 is always present");
    if a.per_node {
        for (v, p) in last.iter().enumerate() {
            println!("{}\t{}", g.label(v as u32), p);
        }
    }
    if let Some(out) = &a.out {
        let header = ReportHeader::new("estimate", GIT_REV, 0)
            .with("graph", a.graph.display())
            .with("model", a.model.display())
            .with("seeds", &a.seeds)
            .with("influence", est.influence);
        let mut report = TsvReport::new(header, &["node", "probability"]);
        for (v, p) in last.iter().enumerate() {
            report.push(vec![g.label(v as u32).to_string(), p.to_string()])?;
        }
        save_report(&report, out)?;
    }
    Ok(())
}

fn cmd_maximize(a: &MaximizeArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let backend = a.backend.build(a.seed)?;
    let sel = if a.eager {
        greedy_select(&g, a.k, &backend)?
    } else {
        lazy_greedy_select(&g, a.k, &backend)?
    };
    let mut text = String::new();
    for &(v, gain) in &sel.trace {
        println!("{}\tgain {}", g.label(v), gain);
        text.push_str(g.label(v));
        text.push('\n');
    }
    text.push_str(&format!("# influence {} ({backend})\n", sel.influence));
    fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    println!("influence {} ({backend})", sel.influence);
    Ok(())
}

fn cmd_eval_ie(a: &EvalIeArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let model = load_checkpoint(&a.model)?;
    let truth = Backend::MonteCarlo {
        runs: a.runs,
        seed: derive_seed(a.seed, u64::MAX),
    };
    let ev = compare_estimators(&g, &Backend::Surrogate(model), &truth, a.sets, a.seed)?;
    let header = ReportHeader::new("eval ie", GIT_REV, a.seed)
        .with("graph", a.graph.display())
        .with("model", a.model.display())
        .with("sets", a.sets)
        .with("runs", a.runs);
    let mut report = TsvReport::new(header.clone(), &["metric", "value"]);
    report.push(vec!["pearson".into(), ev.report.pearson.to_string()])?;
    report.push(vec!["spearman".into(), ev.report.spearman.to_string()])?;
    report.push(vec!["n".into(), ev.report.n.to_string()])?;
    if let Some(path) = &a.scatter {
        report.push(vec!["scatter".into(), path.display().to_string()])?;
        let mut scatter = TsvReport::new(header, &["seed_count", "truth", "estimate"]);
        for s in &ev.samples {
            scatter.push(vec![s.seed_count.to_string(), s.truth.to_string(), s.estimate.to_string()])?;
        }
        save_report(&scatter, path)?;
    }
    print!("{}", report.to_table());
    save_report(&report, &a.out)
}

fn cmd_eval_submod(a: &EvalSubmodArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let backend = a.backend.build(a.seed)?;
    let (rep, _) = submodularity_probe(&g, &backend, a.pairs, (a.min_frac, a.max_frac), a.seed)?;
    let header = ReportHeader::new("eval submod", GIT_REV, a.seed)
        .with("graph", a.graph.display())
        .with("backend", &backend)
        .with("pairs", a.pairs)
        .with("size_range", format!("{}..{}", a.min_frac, a.max_frac));
    let mut report = TsvReport::new(header, &["metric", "value"]);
    report.push(vec!["pairs_tested".into(), rep.pairs_tested.to_string()])?;
    report.push(vec!["pairs_held".into(), rep.pairs_held.to_string()])?;
    report.push(vec!["holds_ratio".into(), rep.holds_ratio.to_string()])?;
    let mape = rep.violation_mape.map_or_else(|| "NA".to_string(), |m| m.to_string());
    report.push(vec!["violation_mape_percent".into(), mape])?;
    print!("{}", report.to_table());
    save_report(&report, &a.out)
}

fn cmd_eval_scale(a: &EvalScaleArgs) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let rows = run_scalability(&a.log2_edges, a.estimations, &model, a.seed)?;
    let header = ReportHeader::new("eval scale", GIT_REV, a.seed)
        .with("model", a.model.display())
        .with("estimations", a.estimations)
        .with("stacks", model.hyper.stacks);
    let mut report = TsvReport::new(
        header,
        &["log2_edges", "nodes", "edges", "estimations", "seconds", "seconds_per_stack"],
    );
    for r in &rows {
        report.push(vec![
            r.log2_edges.to_string(),
            r.nodes.to_string(),
            r.edges.to_string(),
            r.estimations.to_string(),
            format!("{:.6}", r.seconds),
            format!("{:.9}", r.seconds_per_stack),
        ])?;
    }
    print!("{}", report.to_table());
    save_report(&report, &a.out)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Rmat(a) => cmd_rmat(a),
        Command::BuildProbs(a) => cmd_build_probs(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::GenTuples(a) => cmd_gen_tuples(a),
        Command::Train(a) => cmd_train(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Maximize(a) => cmd_maximize(a),
        Command::Eval(EvalCommand::Ie(a)) => cmd_eval_ie(a),
        Command::Eval(EvalCommand::Submod(a)) => cmd_eval_submod(a),
        Command::Eval(EvalCommand::Scale(a)) => cmd_eval_scale(a),
    }
}

fn main() -> Result<()> {
    run(Cli::parse())
}
