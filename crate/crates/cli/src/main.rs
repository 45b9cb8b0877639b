//! `recon`: command-line driver for reconciliation k-median.

mod sweep_config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::Serialize;

use recon::bounds::ORACLE_LIMIT;
use recon::harness;
use recon::instance::{
    read_edge_list, read_matrix_csv, read_point_csv, write_matrix_csv, JsonInstance,
};
use recon::metrics::{self, MentionCounts, Unreachable};
use recon::{
    brute_force, spectral_bounds, validate_metric, AssignmentMode, Error, Execution, Instance,
    InstanceSource, Normalization, SolverConfig, Strategy,
};

#[derive(Parser)]
#[command(
    name = "recon",
    version,
    about = "Reconciliation k-median: local search, bounds, oracle and sweeps"
)]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-restart local search on one instance.
    Solve(SolveArgs),
    /// Grid of (k, lambda) cells with restarts; writes records.csv and summary.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Spectral bounds on the pairwise term and trivial bounds on the service term.
    Bounds {
        #[arg(long)]
        dff: PathBuf,
        #[arg(long)]
        dfc: Option<PathBuf>,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive optimum over all k-subsets (guarded).
    Oracle(OracleArgs),
    /// Build a distance matrix and emit it as CSV.
    Distances(DistanceArgs),
    /// Gaussian blobs on the line with polarity = coordinate.
    Synth {
        /// Comma separated blob centers, e.g. `-1,1`.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "-1,1"
        )]
        blobs: Vec<f64>,
        #[arg(long, default_value_t = 40)]
        per_blob: usize,
        #[arg(long, default_value_t = 0.3)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Check symmetry and the triangle inequality of a facility matrix.
    Validate {
        #[arg(long)]
        dff: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        max_triples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Instance inputs shared by `solve` and `oracle`.
#[derive(Args)]
struct InstanceArgs {
    /// Client x facility matrix CSV. Omit for F = C, which reuses `--dff`.
    #[arg(long, conflicts_with = "instance")]
    dfc: Option<PathBuf>,
    #[arg(
        long,
        conflicts_with = "instance",
        required_unless_present = "instance"
    )]
    dff: Option<PathBuf>,
    /// JSON instance (matrices plus labels, groups, polarity).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// One group label per facility, one per line.
    #[arg(long)]
    groups: Option<PathBuf>,
}

impl InstanceArgs {
    fn load(&self) -> Result<Instance> {
        let mut inst = match (&self.instance, &self.dff) {
            (Some(path), _) => recon::load_instance(&InstanceSource::Json(path.clone()))?,
            (None, Some(dff)) => match &self.dfc {
                Some(dfc) => recon::load_instance(&InstanceSource::MatrixCsv {
                    dfc: dfc.clone(),
                    dff: dff.clone(),
                })?,
                None => Instance::shared(read_matrix_csv(dff)?)?,
            },
            (None, None) => unreachable!("clap requires --dff or --instance"),
        };
        if let Some(path) = &self.groups {
            inst = inst.with_facility_groups(read_lines(path)?)?;
        }
        Ok(inst)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AssignmentArg {
    Nearest,
    SameGroup,
}

impl From<AssignmentArg> for AssignmentMode {
    fn from(a: AssignmentArg) -> Self {
        match a {
            AssignmentArg::Nearest => AssignmentMode::Nearest,
            AssignmentArg::SameGroup => AssignmentMode::SameGroupNearest,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NormalizationArg {
    Sum,
    Mean,
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::Sum => Normalization::Sum,
            NormalizationArg::Mean => Normalization::Mean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    First,
    Best,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InstanceArgs,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "sum")]
    normalization: NormalizationArg,
    #[arg(long, value_enum, default_value = "first")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 40)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `balanced` or `group=count,...`.
    #[arg(long)]
    quotas: Option<String>,
    #[arg(long, value_enum, default_value = "nearest")]
    assignment: AssignmentArg,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: InstanceArgs,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "sum")]
    normalization: NormalizationArg,
    #[arg(long, value_enum, default_value = "nearest")]
    assignment: AssignmentArg,
    #[arg(long)]
    quotas: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum DistanceMode {
    Euclidean,
    ShortestPath,
    Spectral,
    Wjaccard,
    Latent,
    Mentions,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum LatentSide {
    /// facility x facility
    Ff,
    /// client x facility
    Fc,
}

#[derive(Args)]
struct DistanceArgs {
    #[arg(long, value_enum)]
    mode: DistanceMode,
    /// Point CSV (`id,x1,..,xd[,group][,polarity]`) for `euclidean`.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Second point CSV; rows of the output are these points.
    #[arg(long)]
    clients: Option<PathBuf>,
    /// Edge list for `shortest-path` and `spectral`.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Node ids (one per line) for output rows; defaults to all nodes.
    #[arg(long)]
    sources: Option<PathBuf>,
    /// Node ids for output columns; defaults to all nodes.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "error")]
    unreachable: UnreachableArg,
    /// Embedding dimension for `spectral`.
    #[arg(long, default_value_t = 2)]
    gamma: usize,
    /// `client_id,facility_id,count` CSV for `wjaccard`, `latent`, `mentions`.
    #[arg(long)]
    mentions: Option<PathBuf>,
    /// SVD rank for `latent`.
    #[arg(long, default_value_t = 9)]
    rank: usize,
    #[arg(long, value_enum, default_value = "ff")]
    side: LatentSide,
    /// Rescale so the mean of all entries equals this value.
    #[arg(long)]
    rescale_mean: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnreachableArg {
    Error,
    Substitute,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    emit(out, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn parse_quotas(spec: &str, inst: &Instance, k: usize) -> Result<BTreeMap<String, usize>> {
    if spec == "balanced" {
        let groups = inst.facility_groups().ok_or_else(|| {
            Error::InvalidInput("balanced quotas need facility groups (--groups)".into())
        })?;
        return Ok(recon::solver::balanced_quotas(groups, k));
    }
    let mut q = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (label, count) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("quota {part:?} is not group=count")))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("quota count {count:?} is not a number")))?;
        q.insert(label.trim().to_string(), count);
    }
    Ok(q)
}

#[derive(Serialize)]
struct SelectedReport {
    indices: Vec<usize>,
    labels: Vec<String>,
    cluster_sizes: Vec<usize>,
    f_term: f64,
    g_term: f64,
    total: f64,
}

impl SelectedReport {
    fn new(inst: &Instance, sol: &recon::Solution) -> Self {
        SelectedReport {
            indices: sol.selected.clone(),
            labels: sol
                .selected
                .iter()
                .map(|&f| inst.facility_label(f))
                .collect(),
            cluster_sizes: sol.assignment.cluster_sizes(),
            f_term: sol.cost.f_term,
            g_term: sol.cost.g_term,
            total: sol.cost.total,
        }
    }
}

#[derive(Serialize)]
struct RestartReport {
    restart: usize,
    seed: u64,
    iterations: usize,
    swaps: usize,
    converged: bool,
    total: f64,
}

#[derive(Serialize)]
struct SolveReport {
    config: SolverConfig,
    best: SelectedReport,
    restarts: Vec<RestartReport>,
}

fn solve(a: &SolveArgs, exec: Execution) -> Result<()> {
    let inst = a.input.load()?;
    let quotas = a
        .quotas
        .as_deref()
        .map(|q| parse_quotas(q, &inst, a.k))
        .transpose()?;
    let cfg = SolverConfig {
        k: a.k,
        lambda: a.lambda,
        normalization: a.normalization.into(),
        strategy: match a.strategy {
            StrategyArg::First => Strategy::First,
            StrategyArg::Best => Strategy::Best,
        },
        improvement_tol: a.tol,
        max_iterations: a.max_iterations,
        restarts: a.restarts,
        seed: a.seed,
        quotas,
        assignment_mode: a.assignment.into(),
    };
    let (best, runs) = recon::solver::solve_with(&inst, &cfg, exec)?;
    let report = SolveReport {
        best: SelectedReport::new(&inst, &best),
        restarts: runs
            .iter()
            .enumerate()
            .map(|(restart, r)| RestartReport {
                restart,
                seed: r.seed,
                iterations: r.iterations,
                swaps: r.swaps_performed,
                converged: r.converged,
                total: r.final_solution.cost.total,
            })
            .collect(),
        config: cfg,
    };
    emit_json(a.out.as_deref(), &report)
}

#[derive(Serialize)]
struct OracleReport {
    k: usize,
    lambda: f64,
    enumerated: u64,
    optimum: SelectedReport,
}

fn oracle(a: &OracleArgs, exec: Execution) -> Result<()> {
    let inst = a.input.load()?;
    let quotas = a
        .quotas
        .as_deref()
        .map(|q| parse_quotas(q, &inst, a.k))
        .transpose()?;
    let res = brute_force(
        &inst,
        a.k,
        a.lambda,
        a.normalization.into(),
        a.assignment.into(),
        quotas.as_ref(),
        exec,
    )?;
    let report = OracleReport {
        k: a.k,
        lambda: a.lambda,
        enumerated: res.enumerated,
        optimum: SelectedReport::new(&inst, &res.optimum),
    };
    emit_json(a.out.as_deref(), &report)
}

fn bounds(dff: &Path, dfc: Option<&Path>, k: usize, out: Option<&Path>) -> Result<()> {
    let d = read_matrix_csv(dff)?;
    let inst = match dfc {
        Some(p) => Instance::new(read_matrix_csv(p)?, d)?,
        None => Instance::shared(d)?,
    };
    let report = spectral_bounds(&inst, k)?;
    if report.singleton_caveat {
        eprintln!("note: k = 1 has pair sum 0 for every subset; the lower bound is not meaningful");
    }
    emit_json(out, &report)
}

/// Resolves node names from an id list against the edge-list index.
fn node_indices(path: Option<&Path>, names: &[String]) -> Result<Vec<usize>> {
    let Some(path) = path else {
        return Ok((0..names.len()).collect());
    };
    read_lines(path)?
        .iter()
        .map(|id| {
            names
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::InvalidInput(format!("node {id:?} not in edge list")).into())
        })
        .collect()
}

fn need<'a>(arg: &'a Option<PathBuf>, flag: &str, mode: &str) -> Result<&'a Path> {
    match arg {
        Some(p) => Ok(p),
        None => Err(Error::InvalidInput(format!("--mode {mode} needs --{flag}")).into()),
    }
}

fn distances(a: &DistanceArgs, exec: Execution) -> Result<()> {
    let mode = a
        .mode
        .to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string();
    let matrix: Array2<f64> = match a.mode {
        DistanceMode::Euclidean => {
            let f = read_point_csv(need(&a.points, "points", &mode)?)?;
            match &a.clients {
                Some(c) => metrics::euclidean_distances(&read_point_csv(c)?.coords, &f.coords)?,
                None => metrics::euclidean_distances(&f.coords, &f.coords)?,
            }
        }
        DistanceMode::ShortestPath => {
            let (g, names) = read_edge_list(need(&a.edges, "edges", &mode)?)?;
            let sources = node_indices(a.sources.as_deref(), &names)?;
            let targets = node_indices(a.targets.as_deref(), &names)?;
            let policy = match a.unreachable {
                UnreachableArg::Error => Unreachable::Error,
                UnreachableArg::Substitute => Unreachable::Substitute,
            };
            metrics::shortest_path_distances(&g, &sources, &targets, policy, exec)?
        }
        DistanceMode::Spectral => {
            let (g, names) = read_edge_list(need(&a.edges, "edges", &mode)?)?;
            let emb = metrics::spectral_embedding(&g, a.gamma)?;
            let pick = |path: Option<&Path>| -> Result<Vec<Vec<f64>>> {
                Ok(node_indices(path, &names)?
                    .into_iter()
                    .map(|v| emb[v].clone())
                    .collect())
            };
            metrics::euclidean_distances(
                &pick(a.sources.as_deref())?,
                &pick(a.targets.as_deref())?,
            )?
        }
        DistanceMode::Wjaccard => {
            let mc = MentionCounts::read_csv(need(&a.mentions, "mentions", &mode)?)?;
            metrics::weighted_jaccard_distances(&mc, exec)
        }
        DistanceMode::Latent => {
            let mc = MentionCounts::read_csv(need(&a.mentions, "mentions", &mode)?)?;
            let (dff, dfc) = metrics::latent_distances(&mc, a.rank)?;
            if a.side == LatentSide::Ff {
                dff
            } else {
                dfc
            }
        }
        DistanceMode::Mentions => {
            let mc = MentionCounts::read_csv(need(&a.mentions, "mentions", &mode)?)?;
            metrics::mention_client_distances(&mc)
        }
    };
    let matrix = match a.rescale_mean {
        Some(t) => metrics::rescale_to_mean(&matrix, t)?,
        None => matrix,
    };
    emit(a.out.as_deref(), &recon::instance::matrix_to_csv(&matrix))
}

fn synth(blobs: &[f64], per_blob: usize, spread: f64, seed: u64, out_dir: &Path) -> Result<()> {
    let inst = harness::generate_synthetic(per_blob, blobs, spread, seed)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_matrix_csv(&out_dir.join("dff.csv"), inst.dff())?;
    write_matrix_csv(&out_dir.join("dfc.csv"), inst.dfc())?;
    let json = serde_json::to_string_pretty(&JsonInstance::from(&inst))?;
    fs::write(out_dir.join("instance.json"), json + "\n")?;
    eprintln!(
        "wrote {} points to {}",
        inst.n_facilities(),
        out_dir.display()
    );
    Ok(())
}

fn validate(dff: &Path, max_triples: u64, seed: u64) -> Result<()> {
    let inst = Instance::shared(read_matrix_csv(dff)?)?;
    let report = validate_metric(&inst, max_triples, seed);
    emit_json(None, &report)
}

fn sweep(config: &Path, out_dir: &Path, exec: Execution) -> Result<()> {
    let cfg = sweep_config::SweepConfig::read(config)?;
    let inst = recon::load_instance(&cfg.source)?;
    let records = harness::run_sweep(&inst, &cfg.spec, exec)?;
    harness::write_sweep_reports(out_dir, &cfg.spec, &records)?;
    eprintln!("{} records written to {}", records.len(), out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Solve(a) => solve(a, exec),
        Command::Sweep { config, out_dir } => sweep(config, out_dir, exec),
        Command::Bounds { dff, dfc, k, out } => bounds(dff, dfc.as_deref(), *k, out.as_deref()),
        Command::Oracle(a) => oracle(a, exec),
        Command::Distances(a) => distances(a, exec),
        Command::Synth {
            blobs,
            per_blob,
            spread,
            seed,
            out_dir,
        } => synth(blobs, *per_blob, *spread, *seed, out_dir),
        Command::Validate {
            dff,
            max_triples,
            seed,
        } => validate(dff, *max_triples, *seed),
    }
}

/// 2 input, 3 infeasible, 4 guard; anything else not attributable to the
/// library (I/O, JSON) is treated as an input problem too.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Infeasible(_)) => 3,
        Some(Error::GuardExceeded { .. }) => 4,
        Some(Error::NoConvergence { .. }) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if matches!(
                err.downcast_ref::<Error>(),
                Some(Error::GuardExceeded { .. })
            ) {
                eprintln!("the exhaustive oracle is limited to {ORACLE_LIMIT} subsets");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
