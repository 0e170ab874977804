//! `greenflow`: generate instances, schedule them, check schedules and run
//! experiment matrices.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use greenflow_core::bench::{
    cost_ratios, deadline_from_alpha, default_thresholds, export_results, import_results, performance_profile_curve,
    run_suite, sort_canonical, write_curve_csv, MatrixDoc, ResultFormat, SuiteOptions,
};
use greenflow_core::evaluate::is_valid;
use greenflow_core::genlab::{
    gen_3partition_instance, gen_cluster, gen_layered_dag, profile_from_intensities, read_intensity_csv,
    synthetic_intensity_series, LinkStats, NodeSpec, ProfileParams, WeightStats,
};
use greenflow_core::heft_sl::heft_sl_on;
use greenflow_core::model::{load_cluster, load_profile, load_workflow, ScheduleDoc};
use greenflow_core::{
    carbon_cost, run_cwm, schedule_heft_sl, validate_schedule, Algorithm, CarbonReport, Cluster, CwmParams, Error,
    Instance, PowerProfile, Schedule, ViolationDoc, Workflow,
};

const SEED_ENV: &str = "GREENFLOW_SEED";

#[derive(Parser)]
#[command(name = "greenflow", version, about = "Carbon-aware workflow scheduling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate workflows, clusters, power profiles or reduction fixtures.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Map and schedule a workflow.
    Schedule(ScheduleArgs),
    /// Check a schedule and report its carbon cost as JSON.
    Evaluate(EvaluateArgs),
    /// Run an experiment matrix and write a results table.
    Bench(BenchArgs),
    /// Turn a results table into a performance-profile curve.
    ProfileCurve(ProfileCurveArgs),
}

#[derive(Subcommand)]
enum GenCommand {
    /// Layered random DAG with weights drawn around the cluster's mean speed.
    Workflow(GenWorkflowArgs),
    /// Copies of each node spec plus sampled link powers.
    Cluster(GenClusterArgs),
    /// Green power budget derived from a carbon-intensity series.
    Profile(GenProfileArgs),
    /// The 3-partition reduction instance.
    Fixture3p(GenFixtureArgs),
}

#[derive(Args)]
struct SeedArg {
    /// Random seed.
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenWorkflowArgs {
    #[arg(long)]
    tasks: usize,
    #[arg(long)]
    layers: usize,
    /// Probability of an edge between tasks of consecutive layers.
    #[arg(long, default_value_t = 0.3)]
    density: f64,
    /// Cluster whose speeds set the weight distribution.
    #[arg(long)]
    cluster: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenClusterArgs {
    /// JSON array of node specs `{speed, idle_power, work_power}`.
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long, default_value_t = 1)]
    copies: usize,
    /// Link power statistics `{idle_mean, idle_std, work_mean, work_std}`;
    /// 5% of the mean node powers when omitted.
    #[arg(long)]
    links: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenProfileArgs {
    #[arg(long)]
    cluster: PathBuf,
    /// Carbon-intensity CSV with an `intensity` column.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    intensity: Option<PathBuf>,
    /// Use a synthetic daily intensity series of this many hours instead.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 10)]
    len_min: u32,
    #[arg(long, default_value_t = 50)]
    len_max: u32,
    /// Share of the summed dynamic power available on top of the idle total.
    #[arg(long, default_value_t = 0.3)]
    dyn_fraction: f64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenFixtureArgs {
    /// Comma-separated positive integers, 3n of them.
    #[arg(long, value_delimiter = ',', required = true)]
    integers: Vec<u64>,
    /// Target sum B of every triple.
    #[arg(long)]
    bin: u64,
    /// Directory receiving workflow.json, cluster.json and profile.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    HeftSl,
    Cwm,
}

#[derive(Args)]
struct InstanceFiles {
    #[arg(long)]
    workflow: PathBuf,
    #[arg(long)]
    cluster: PathBuf,
    #[arg(long)]
    profile: PathBuf,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("deadline_source").required(true).multiple(true).args(["deadline", "alpha"]))]
struct ScheduleArgs {
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[command(flatten)]
    files: InstanceFiles,
    #[arg(long)]
    deadline: Option<f64>,
    /// Deadline as a multiple of the HEFT-SL makespan under the same seed.
    #[arg(long)]
    alpha: Option<f64>,
    /// CWM parameters as JSON; the flags below override its fields.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    phi: Option<usize>,
    #[arg(long)]
    retries: Option<usize>,
    #[arg(long)]
    keep_best: Option<bool>,
    /// Random seed; without it the params file seed applies, then 0.
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    schedule: PathBuf,
    #[command(flatten)]
    files: InstanceFiles,
    #[arg(long)]
    deadline: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Results file; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Results of an external scheduler to merge into the table.
    #[arg(long)]
    import_competitor: Option<PathBuf>,
    /// Write 0 wall times so the output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct ProfileCurveArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of thresholds between 1 and the largest finite ratio.
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Also print cost ratios against this algorithm as JSON.
    #[arg(long)]
    reference: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::InfeasibleDeadline { .. }) => 2,
        Some(Error::InvariantBreach(_)) => 3,
        _ => 1,
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Gen(g) => gen(g),
        Command::Schedule(a) => schedule(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(a),
        Command::ProfileCurve(a) => profile_curve(a),
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    serde_json::from_slice(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(value: &impl Serialize, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => write_stdout(&text),
    }
}

/// A closed pipe on stdout (e.g. `| head`) is not an error.
fn write_stdout(text: &str) -> anyhow::Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).context("writing to stdout"),
        _ => Ok(()),
    }
}

fn load_workflow_file(path: &Path) -> anyhow::Result<Workflow> {
    load_workflow(&read(path)?).with_context(|| format!("loading workflow {}", path.display()))
}

fn load_cluster_file(path: &Path) -> anyhow::Result<Cluster> {
    load_cluster(&read(path)?).with_context(|| format!("loading cluster {}", path.display()))
}

fn load_profile_file(path: &Path) -> anyhow::Result<PowerProfile> {
    load_profile(&read(path)?).with_context(|| format!("loading profile {}", path.display()))
}

fn load_files(f: &InstanceFiles) -> anyhow::Result<(Workflow, Cluster, PowerProfile)> {
    Ok((load_workflow_file(&f.workflow)?, load_cluster_file(&f.cluster)?, load_profile_file(&f.profile)?))
}

fn gen(cmd: GenCommand) -> anyhow::Result<()> {
    match cmd {
        GenCommand::Workflow(a) => {
            let cluster = load_cluster_file(&a.cluster)?;
            let w = gen_layered_dag(a.tasks, a.layers, a.density, WeightStats::from_cluster(&cluster), a.seed.seed)?;
            write_json(&w.to_doc(), a.out.as_deref())
        }
        GenCommand::Cluster(a) => {
            let specs: Vec<NodeSpec> = read_json(&a.nodes)?;
            let links = match &a.links {
                Some(p) => read_json::<LinkStats>(p)?,
                None => LinkStats::default_for(&specs),
            };
            let c = gen_cluster(&specs, a.copies, links, a.seed.seed)?;
            write_json(&c.to_doc(), a.out.as_deref())
        }
        GenCommand::Profile(a) => {
            let cluster = load_cluster_file(&a.cluster)?;
            let series = match (&a.intensity, a.synthetic) {
                (Some(p), _) => read_intensity_csv(read(p)?.as_slice())?,
                (None, Some(len)) => synthetic_intensity_series(len, a.seed.seed),
                (None, None) => bail!("one of --intensity or --synthetic is required"),
            };
            let params = ProfileParams {
                horizon: a.horizon,
                len_range: (a.len_min, a.len_max),
                dyn_fraction: a.dyn_fraction,
                seed: a.seed.seed,
            };
            let p = profile_from_intensities(&series, &cluster, &params)?;
            write_json(&p.to_doc(), a.out.as_deref())
        }
        GenCommand::Fixture3p(a) => {
            let inst = gen_3partition_instance(&a.integers, a.bin)?;
            fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            write_json(&inst.workflow.to_doc(), Some(&a.out.join("workflow.json")))?;
            write_json(&inst.cluster.to_doc(), Some(&a.out.join("cluster.json")))?;
            write_json(&inst.profile.to_doc(), Some(&a.out.join("profile.json")))?;
            write_stdout(&format!("{}\n", inst.deadline))
        }
    }
}

fn cwm_params(a: &ScheduleArgs) -> anyhow::Result<CwmParams> {
    let mut p = match &a.params {
        Some(path) => read_json::<CwmParams>(path)?,
        None => CwmParams::default(),
    };
    if let Some(tau) = a.tau {
        p.tau = tau;
    }
    if let Some(phi) = a.phi {
        p.phi = phi;
    }
    if let Some(retries) = a.retries {
        p.retries = retries;
    }
    if let Some(keep_best) = a.keep_best {
        p.keep_best = keep_best;
    }
    if let Some(seed) = a.seed {
        p.seed = seed;
    }
    p.validate()?;
    Ok(p)
}

fn schedule(a: ScheduleArgs) -> anyhow::Result<()> {
    let (w, c, p) = load_files(&a.files)?;
    let params = cwm_params(&a)?;
    let seed = params.seed;
    let deadline = match (a.deadline, a.alpha) {
        (Some(d), alpha) => {
            if alpha.is_some() {
                eprintln!("warning: both --deadline and --alpha given; using --deadline {d}");
            }
            d
        }
        (None, Some(alpha)) => deadline_from_alpha(heft_sl_on(&w, &c, seed).makespan(), alpha)?,
        (None, None) => unreachable!("clap requires a deadline source"),
    };
    let inst = Instance::new(w, c, p, deadline)?;
    let s = match a.algo {
        AlgoArg::HeftSl => {
            let s = schedule_heft_sl(&inst, seed);
            if s.makespan() > deadline {
                eprintln!("warning: heft-sl ignores deadlines; makespan {} exceeds {deadline}", s.makespan());
            }
            s
        }
        AlgoArg::Cwm => run_cwm(&inst, &params)?.schedule,
    };
    summarize(Algorithm::from(a.algo), &s, &inst);
    write_json(&s.to_doc(&inst.workflow, &inst.cluster), a.out.as_deref())
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::HeftSl => Algorithm::HeftSl,
            AlgoArg::Cwm => Algorithm::Cwm,
        }
    }
}

fn summarize(algo: Algorithm, s: &Schedule, inst: &Instance) {
    match carbon_cost(s, inst) {
        Ok(r) => eprintln!(
            "{}: makespan {}, deadline {}, carbon cost {}",
            algo.name(),
            s.makespan(),
            inst.deadline,
            r.total_cost
        ),
        Err(e) => eprintln!("{}: makespan {}, carbon cost unavailable: {e}", algo.name(), s.makespan()),
    }
}

#[derive(Serialize)]
struct EvaluationReport {
    valid: bool,
    violations: Vec<ViolationDoc>,
    carbon: Option<CarbonReport>,
    error: Option<String>,
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let (w, c, p) = load_files(&a.files)?;
    let inst = Instance::new(w, c, p, a.deadline)?;
    let doc: ScheduleDoc = read_json(&a.schedule)?;
    let s = Schedule::from_doc(&doc, &inst.workflow, &inst.cluster)
        .with_context(|| format!("loading schedule {}", a.schedule.display()))?;
    let violations = validate_schedule(&s, &inst);
    let (carbon, error) = match carbon_cost(&s, &inst) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = EvaluationReport {
        valid: is_valid(&violations),
        violations: violations.iter().map(|v| v.to_doc(&inst.workflow)).collect(),
        carbon,
        error,
    };
    write_json(&report, None)
}

fn result_format(path: &Path) -> ResultFormat {
    if path.extension().is_some_and(|e| e == "json") {
        ResultFormat::Json
    } else {
        ResultFormat::Csv
    }
}

fn bench(a: BenchArgs) -> anyhow::Result<()> {
    let matrix: MatrixDoc = read_json(&a.matrix)?;
    let base = a.matrix.parent().unwrap_or(Path::new("."));
    let instances = matrix.resolve(base).context("resolving matrix instances")?;
    let mut partial = a.out.clone().into_os_string();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    let opts = SuiteOptions { cwm: matrix.cwm, jobs: a.jobs, timing: !a.no_timing, partial: Some(partial.clone()) };
    let mut rows = run_suite(&instances, &matrix.algorithms, &matrix.alphas, &matrix.seeds, &opts)?;
    if let Some(path) = &a.import_competitor {
        rows.extend(import_results(path).with_context(|| format!("importing {}", path.display()))?);
        sort_canonical(&mut rows);
    }
    export_results(&rows, result_format(&a.out), &a.out)?;
    fs::remove_file(&partial).with_context(|| format!("removing {}", partial.display()))?;
    let infeasible = rows.iter().filter(|r| !r.feasible).count();
    eprintln!("{} runs written to {} ({infeasible} infeasible)", rows.len(), a.out.display());
    Ok(())
}

fn profile_curve(a: ProfileCurveArgs) -> anyhow::Result<()> {
    let rows = import_results(&a.results).with_context(|| format!("reading {}", a.results.display()))?;
    let thresholds = default_thresholds(&rows, a.points)?;
    let curve = performance_profile_curve(&rows, &thresholds)?;
    let file = fs::File::create(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    write_curve_csv(&curve, std::io::BufWriter::new(file))?;
    if let Some(reference) = &a.reference {
        write_json(&cost_ratios(&rows, reference)?, None)?;
    }
    Ok(())
}
