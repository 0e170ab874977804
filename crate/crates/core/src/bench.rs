//! Experiment harness: runs algorithms over an (instance, alpha, seed)
//! matrix, then compares costs through shifted cost ratios and Dolan-Moré
//! performance profiles.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cwm::{run_cwm, CwmParams};
use crate::error::{Error, Result};
use crate::evaluate::{carbon_cost, is_valid, makespan, validate_schedule};
use crate::genlab::{
    gen_cluster, gen_layered_dag, profile_from_intensities, read_intensity_csv, synthetic_intensity_series, LinkStats,
    NodeSpec, ProfileParams, WeightStats,
};
use crate::heft_sl::heft_sl_on;
use crate::model::{
    load_cluster, load_profile, load_workflow, Cluster, Instance, PowerProfile, Schedule, Workflow, EPS,
};

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub instance_id: String,
    pub algorithm: String,
    pub alpha: f64,
    pub deadline: f64,
    pub carbon_cost: f64,
    pub makespan: f64,
    pub feasible: bool,
    pub wall_time_s: f64,
    pub seed: u64,
}

impl RunResult {
    /// Cost used in comparisons: infeasible runs count as infinitely expensive.
    pub fn effective_cost(&self) -> f64 {
        if self.feasible {
            self.carbon_cost
        } else {
            f64::INFINITY
        }
    }
}

const COLUMNS: [&str; 9] =
    ["instance_id", "algorithm", "alpha", "deadline", "carbon_cost", "makespan", "feasible", "wall_time_s", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    HeftSl,
    Cwm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::HeftSl => "heft-sl",
            Algorithm::Cwm => "cwm",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heft-sl" => Ok(Algorithm::HeftSl),
            "cwm" => Ok(Algorithm::Cwm),
            _ => Err(Error::InvalidParams(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// Deadline `alpha * M` for a reference makespan `M`.
pub fn deadline_from_alpha(m: f64, alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(alpha * m)
}

/// A profile generated once the HEFT-SL makespan `M` is known, with horizon
/// `ceil(horizon_factor * M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRecipe {
    pub series: Vec<f64>,
    pub len_range: (u32, u32),
    pub dyn_fraction: f64,
    pub seed: u64,
    pub horizon_factor: f64,
}

impl ProfileRecipe {
    pub fn build(&self, cluster: &Cluster, m: f64) -> Result<PowerProfile> {
        let horizon = (self.horizon_factor * m).ceil().max(1.0);
        let params =
            ProfileParams { horizon, len_range: self.len_range, dyn_fraction: self.dyn_fraction, seed: self.seed };
        profile_from_intensities(&self.series, cluster, &params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource {
    Fixed(PowerProfile),
    Generated(ProfileRecipe),
}

#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub id: String,
    pub workflow: Workflow,
    pub cluster: Cluster,
    pub profile: ProfileSource,
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// CWM parameters; the seed is replaced by each run's seed.
    pub cwm: CwmParams,
    /// Worker threads; 0 picks one per core.
    pub jobs: usize,
    /// Record wall times. Disable for byte-reproducible output.
    pub timing: bool,
    /// Rows are appended here as soon as each instance finishes.
    pub partial: Option<PathBuf>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { cwm: CwmParams::default(), jobs: 0, timing: true, partial: None }
    }
}

/// Runs every algorithm for every instance, alpha and seed. The HEFT-SL
/// makespan under the run seed fixes `M`, and `D = alpha * M`. Failed runs
/// become infeasible rows. Rows come back in canonical order.
pub fn run_suite(
    instances: &[BenchInstance],
    algorithms: &[Algorithm],
    alphas: &[f64],
    seeds: &[u64],
    opts: &SuiteOptions,
) -> Result<Vec<RunResult>> {
    for &a in alphas {
        deadline_from_alpha(1.0, a)?;
    }
    opts.cwm.validate()?;
    let appender = match &opts.partial {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            w.write_record(COLUMNS)?;
            w.flush().map_err(|e| Error::io(path, e))?;
            Some(Mutex::new(w))
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    let jobs: Vec<(&BenchInstance, u64)> =
        instances.iter().flat_map(|bi| seeds.iter().map(move |&s| (bi, s))).collect();
    let batches: Vec<Result<Vec<RunResult>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(bi, seed)| {
                let rows = run_instance(bi, algorithms, alphas, seed, opts);
                if let Some(w) = &appender {
                    let mut w = w.lock().expect("appender poisoned");
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush().map_err(|e| Error::io(opts.partial.clone().unwrap(), e))?;
                }
                Ok(rows)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for b in batches {
        rows.extend(b?);
    }
    sort_canonical(&mut rows);
    Ok(rows)
}

/// Sorts by (instance_id, algorithm, alpha, seed).
pub fn sort_canonical(rows: &mut [RunResult]) {
    rows.sort_by(|a, b| {
        a.instance_id
            .cmp(&b.instance_id)
            .then_with(|| a.algorithm.cmp(&b.algorithm))
            .then_with(|| a.alpha.total_cmp(&b.alpha))
            .then_with(|| a.seed.cmp(&b.seed))
    });
}

fn run_instance(
    bi: &BenchInstance,
    algorithms: &[Algorithm],
    alphas: &[f64],
    seed: u64,
    opts: &SuiteOptions,
) -> Vec<RunResult> {
    let clock = Instant::now();
    let heft = heft_sl_on(&bi.workflow, &bi.cluster, seed);
    let heft_time = clock.elapsed().as_secs_f64();
    let m = makespan(&heft);
    let profile = match &bi.profile {
        ProfileSource::Fixed(p) => Ok(p.clone()),
        ProfileSource::Generated(recipe) => recipe.build(&bi.cluster, m),
    };
    let mut rows = Vec::new();
    for &alpha in alphas {
        let deadline = alpha * m;
        let inst = profile
            .as_ref()
            .map_err(|e| Error::InvalidInstance(e.to_string()))
            .and_then(|p| Instance::new(bi.workflow.clone(), bi.cluster.clone(), p.clone(), deadline));
        for &algo in algorithms {
            let row = RunResult {
                instance_id: bi.id.clone(),
                algorithm: algo.name().to_string(),
                alpha,
                deadline,
                carbon_cost: f64::INFINITY,
                makespan: f64::INFINITY,
                feasible: false,
                wall_time_s: 0.0,
                seed,
            };
            let Ok(inst) = &inst else {
                rows.push(row);
                continue;
            };
            let (schedule, secs) = match algo {
                Algorithm::HeftSl => (Some(heft.clone()), heft_time),
                Algorithm::Cwm => {
                    let params = CwmParams { seed, ..opts.cwm };
                    let clock = Instant::now();
                    let out = run_cwm(inst, &params).ok().map(|o| o.schedule);
                    (out, clock.elapsed().as_secs_f64())
                }
            };
            let wall_time_s = if opts.timing { secs } else { 0.0 };
            rows.push(match schedule {
                Some(s) => record(row, &s, inst, wall_time_s),
                None => RunResult { wall_time_s, ..row },
            });
        }
    }
    rows
}

fn record(row: RunResult, s: &Schedule, inst: &Instance, wall_time_s: f64) -> RunResult {
    let ms = makespan(s);
    let valid = is_valid(&validate_schedule(s, inst));
    match carbon_cost(s, inst) {
        Ok(report) if valid => RunResult {
            carbon_cost: report.total_cost,
            makespan: ms,
            feasible: ms <= inst.deadline + EPS,
            wall_time_s,
            ..row
        },
        _ => RunResult { makespan: ms, wall_time_s, ..row },
    }
}

pub fn write_results_csv(rows: &[RunResult], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_results_csv(input: impl Read) -> Result<Vec<RunResult>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(COLUMNS) {
        return Err(Error::InvalidParams(format!(
            "results header must be {}, got {}",
            COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Json,
}

pub fn export_results(rows: &[RunResult], format: ResultFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        ResultFormat::Csv => write_results_csv(rows, &mut out)?,
        ResultFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn import_results(path: &Path) -> Result<Vec<RunResult>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    } else {
        read_results_csv(file)
    }
}

type RunKey = (String, u64, u64);

fn run_key(r: &RunResult) -> RunKey {
    // alphas are positive, so bit order is numeric order
    (r.instance_id.clone(), r.alpha.to_bits(), r.seed)
}

/// Effective cost per run key and algorithm.
fn cost_table(results: &[RunResult]) -> Result<BTreeMap<RunKey, BTreeMap<String, f64>>> {
    let mut table: BTreeMap<RunKey, BTreeMap<String, f64>> = BTreeMap::new();
    for r in results {
        let prev = table.entry(run_key(r)).or_default().insert(r.algorithm.clone(), r.effective_cost());
        if prev.is_some() {
            return Err(Error::InvalidParams(format!(
                "duplicate result for {} / {} / alpha {} / seed {}",
                r.instance_id, r.algorithm, r.alpha, r.seed
            )));
        }
    }
    Ok(table)
}

fn describe(key: &RunKey) -> String {
    format!("instance {} alpha {} seed {}", key.0, f64::from_bits(key.1), key.2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRatio {
    pub instance_id: String,
    pub alpha: f64,
    pub seed: u64,
    pub algorithm: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSummary {
    pub algorithm: String,
    pub count: usize,
    pub geomean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub reference: String,
    pub ratios: Vec<CostRatio>,
    pub summaries: Vec<RatioSummary>,
}

pub fn geometric_mean(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `(CC_ref + 1) / (CC_A + 1)` for every competitor `A` on every run key,
/// with geometric mean and median per competitor. Values below 1 mean the
/// reference emitted less carbon.
pub fn cost_ratios(results: &[RunResult], reference: &str) -> Result<RatioReport> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let table = cost_table(results)?;
    let competitors: Vec<String> = {
        let mut names: Vec<String> = results.iter().map(|r| r.algorithm.clone()).filter(|a| a != reference).collect();
        names.sort();
        names.dedup();
        names
    };
    let mut ratios = Vec::new();
    let mut per_algo: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (key, costs) in &table {
        let Some(&base) = costs.get(reference) else {
            return Err(Error::MissingPairing(format!("{reference} missing for {}", describe(key))));
        };
        for algo in &competitors {
            let Some(&cost) = costs.get(algo) else {
                return Err(Error::MissingPairing(format!("{algo} missing for {}", describe(key))));
            };
            let ratio = (base + 1.0) / (cost + 1.0);
            per_algo.entry(algo).or_default().push(ratio);
            ratios.push(CostRatio {
                instance_id: key.0.clone(),
                alpha: f64::from_bits(key.1),
                seed: key.2,
                algorithm: algo.clone(),
                ratio,
            });
        }
    }
    let summaries = per_algo
        .into_iter()
        .map(|(algo, rs)| RatioSummary {
            algorithm: algo.to_string(),
            count: rs.len(),
            geomean: geometric_mean(&rs),
            median: median(&rs),
        })
        .collect();
    Ok(RatioReport { reference: reference.to_string(), ratios, summaries })
}

/// Performance ratios `r_{i,A} = (CC_{i,A} + 1) / (CC*_i + 1)` where `CC*_i`
/// is the best cost on run key `i`. Every algorithm must have a row for
/// every key. A key on which no run is feasible gives every algorithm an
/// infinite ratio.
pub fn performance_ratios(results: &[RunResult]) -> Result<BTreeMap<String, Vec<f64>>> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let table = cost_table(results)?;
    let mut algos: Vec<String> = results.iter().map(|r| r.algorithm.clone()).collect();
    algos.sort();
    algos.dedup();
    let mut out: BTreeMap<String, Vec<f64>> = algos.iter().map(|a| (a.clone(), Vec::new())).collect();
    for (key, costs) in &table {
        let best = costs.values().copied().fold(f64::INFINITY, f64::min);
        for algo in &algos {
            let Some(&cost) = costs.get(algo) else {
                return Err(Error::MissingPairing(format!("{algo} missing for {}", describe(key))));
            };
            let r = if best.is_finite() { (cost + 1.0) / (best + 1.0) } else { f64::INFINITY };
            out.get_mut(algo).unwrap().push(r);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub algorithm: String,
    pub delta: f64,
    pub fraction: f64,
}

/// `eta_A(delta)`: the fraction of run keys on which `r_{i,A} <= delta`.
pub fn performance_profile_curve(results: &[RunResult], thresholds: &[f64]) -> Result<Vec<CurvePoint>> {
    if thresholds.iter().any(|&d| d.is_nan() || d < 1.0) || thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParams("thresholds must be ascending and >= 1".into()));
    }
    let ratios = performance_ratios(results)?;
    let mut points = Vec::new();
    for (algo, rs) in &ratios {
        for &delta in thresholds {
            let hits = rs.iter().filter(|&&r| r <= delta).count();
            points.push(CurvePoint { algorithm: algo.clone(), delta, fraction: hits as f64 / rs.len() as f64 });
        }
    }
    Ok(points)
}

/// `points` thresholds spaced geometrically from 1 to the largest finite
/// performance ratio, both ends included.
pub fn default_thresholds(results: &[RunResult], points: usize) -> Result<Vec<f64>> {
    let max = performance_ratios(results)?.values().flatten().copied().filter(|r| r.is_finite()).fold(1.0, f64::max);
    if max <= 1.0 || points < 2 {
        return Ok(vec![max]);
    }
    let step = max.ln() / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|k| (k as f64 * step).exp()).collect();
    grid[0] = 1.0;
    grid[points - 1] = max;
    Ok(grid)
}

pub fn write_curve_csv(points: &[CurvePoint], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["algorithm", "delta", "fraction"])?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Benchmark matrix as read from JSON. Relative paths resolve against the
/// matrix file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    #[serde(default = "all_algorithms")]
    pub algorithms: Vec<Algorithm>,
    pub alphas: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub cwm: CwmParams,
    pub instances: Vec<InstanceDoc>,
}

fn all_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::HeftSl, Algorithm::Cwm]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub id: String,
    pub cluster: ClusterSource,
    pub workflow: WorkflowSource,
    pub profile: ProfileSourceDoc,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ClusterSource {
    File(PathBuf),
    Generate {
        nodes: NodesSource,
        copies: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        links: Option<LinkStats>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NodesSource {
    File(PathBuf),
    Inline(Vec<NodeSpec>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum WorkflowSource {
    File(PathBuf),
    Generate {
        tasks: usize,
        layers: usize,
        density: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ProfileSourceDoc {
    File(PathBuf),
    Generate {
        intensity: IntensitySource,
        len_range: (u32, u32),
        dyn_fraction: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_horizon_factor")]
        horizon_factor: f64,
    },
}

fn default_horizon_factor() -> f64 {
    2.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum IntensitySource {
    File(PathBuf),
    Synthetic { synthetic: SyntheticSeries },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSeries {
    pub len: usize,
    #[serde(default)]
    pub seed: u64,
}

fn read_file(base: &Path, path: &Path) -> Result<Vec<u8>> {
    let full = base.join(path);
    std::fs::read(&full).map_err(|e| Error::io(full, e))
}

impl MatrixDoc {
    pub fn resolve(&self, base: &Path) -> Result<Vec<BenchInstance>> {
        self.instances.iter().map(|doc| doc.resolve(base)).collect()
    }
}

impl InstanceDoc {
    pub fn resolve(&self, base: &Path) -> Result<BenchInstance> {
        let cluster = match &self.cluster {
            ClusterSource::File(p) => load_cluster(&read_file(base, p)?)?,
            ClusterSource::Generate { nodes, copies, seed, links } => {
                let specs: Vec<NodeSpec> = match nodes {
                    NodesSource::File(p) => serde_json::from_slice(&read_file(base, p)?)?,
                    NodesSource::Inline(v) => v.clone(),
                };
                let links = links.unwrap_or_else(|| LinkStats::default_for(&specs));
                gen_cluster(&specs, *copies, links, *seed)?
            }
        };
        let workflow = match &self.workflow {
            WorkflowSource::File(p) => load_workflow(&read_file(base, p)?)?,
            WorkflowSource::Generate { tasks, layers, density, seed } => {
                gen_layered_dag(*tasks, *layers, *density, WeightStats::from_cluster(&cluster), *seed)?
            }
        };
        let profile = match &self.profile {
            ProfileSourceDoc::File(p) => ProfileSource::Fixed(load_profile(&read_file(base, p)?)?),
            ProfileSourceDoc::Generate { intensity, len_range, dyn_fraction, seed, horizon_factor } => {
                let series = match intensity {
                    IntensitySource::File(p) => read_intensity_csv(read_file(base, p)?.as_slice())?,
                    IntensitySource::Synthetic { synthetic } => {
                        synthetic_intensity_series(synthetic.len, synthetic.seed)
                    }
                };
                ProfileSource::Generated(ProfileRecipe {
                    series,
                    len_range: *len_range,
                    dyn_fraction: *dyn_fraction,
                    seed: *seed,
                    horizon_factor: *horizon_factor,
                })
            }
        };
        Ok(BenchInstance { id: self.id.clone(), workflow, cluster, profile })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, algo: &str, cost: f64) -> RunResult {
        RunResult {
            instance_id: id.into(),
            algorithm: algo.into(),
            alpha: 2.0,
            deadline: 20.0,
            carbon_cost: cost,
            makespan: 10.0,
            feasible: true,
            wall_time_s: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn deadline_rule() {
        assert_eq!(deadline_from_alpha(100.0, 1.5).unwrap(), 150.0);
        assert_eq!(deadline_from_alpha(100.0, 2.0).unwrap(), 200.0);
        assert!(matches!(deadline_from_alpha(100.0, 1.0), Err(Error::InvalidAlpha(_))));
    }

    #[test]
    fn ratio_examples() {
        let r = cost_ratios(&[row("a", "cwm", 0.0), row("a", "x", 9.0)], "cwm").unwrap();
        assert!((r.ratios[0].ratio - 0.1).abs() < 1e-15);
        let r = cost_ratios(&[row("a", "cwm", 9.0), row("a", "x", 9.0)], "cwm").unwrap();
        assert_eq!(r.ratios[0].ratio, 1.0);

        let rows = [row("a", "cwm", 10.0), row("a", "x", 10.0), row("b", "cwm", 0.0), row("b", "x", 10.0)];
        let s = &cost_ratios(&rows, "cwm").unwrap().summaries[0];
        assert!((s.geomean - (1.0f64 / 11.0).sqrt()).abs() < 1e-12);
        assert!((s.median - (1.0 + 1.0 / 11.0) / 2.0).abs() < 1e-15);
        assert!((s.geomean - 0.3015).abs() < 1e-4);

        assert!(matches!(cost_ratios(&rows[..3], "cwm"), Err(Error::MissingPairing(_))));
        assert!(matches!(cost_ratios(&[], "cwm"), Err(Error::EmptyResults)));
    }

    #[test]
    fn profile_example() {
        let rows = [row("1", "A", 0.0), row("1", "B", 10.0), row("2", "A", 10.0), row("2", "B", 10.0)];
        let curve = performance_profile_curve(&rows, &[1.0, 11.0]).unwrap();
        let eta = |a: &str, d: f64| curve.iter().find(|p| p.algorithm == a && p.delta == d).unwrap().fraction;
        assert_eq!(eta("A", 1.0), 1.0);
        assert_eq!(eta("B", 1.0), 0.5);
        assert_eq!(eta("B", 11.0), 1.0);

        let grid = default_thresholds(&rows, 200).unwrap();
        assert_eq!((grid[0], grid[199], grid.len()), (1.0, 11.0, 200));
        assert!(grid.windows(2).all(|w| w[0] < w[1]));

        assert_eq!(performance_profile_curve(&rows[..1], &[1.0]).unwrap()[0].fraction, 1.0);
        assert!(performance_profile_curve(&rows, &[2.0, 1.0]).is_err());
        assert!(performance_profile_curve(&rows, &[0.5]).is_err());

        let mut buf = Vec::new();
        write_curve_csv(&curve[..1], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "algorithm,delta,fraction\nA,1.0,1.0\n");
    }

    #[test]
    fn infeasible_runs_rank_last() {
        let mut bad = row("1", "B", 0.0);
        bad.feasible = false;
        let r = performance_ratios(&[row("1", "A", 5.0), bad]).unwrap();
        assert_eq!(r["A"], vec![1.0]);
        assert_eq!(r["B"], vec![f64::INFINITY]);
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_results_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 1);
        assert!(read_results_csv(buf.as_slice()).unwrap().is_empty());

        let mut r = row("x,1", "cwm", 1.0 / 3.0);
        r.wall_time_s = 0.123456789;
        let mut failed = row("x,1", "heft-sl", f64::INFINITY);
        failed.feasible = false;
        failed.makespan = f64::INFINITY;
        let rows = vec![r, failed];
        let mut buf = Vec::new();
        write_results_csv(&rows[..1], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 2);
        let mut buf = Vec::new();
        write_results_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("instance_id,algorithm,alpha,deadline,carbon_cost,makespan,feasible,wall_time_s,seed\n")
        );
        assert_eq!(read_results_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn export_and_import_files() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row("a", "cwm", 2.5)];
        for (name, fmt) in [("r.csv", ResultFormat::Csv), ("r.json", ResultFormat::Json)] {
            let path = dir.path().join(name);
            export_results(&rows, fmt, &path).unwrap();
            assert_eq!(import_results(&path).unwrap(), rows);
        }
        let missing = dir.path().join("nope/r.csv");
        let err = export_results(&rows, ResultFormat::Csv, &missing).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    fn tiny_instance(id: &str) -> BenchInstance {
        let specs = [
            NodeSpec { speed: 1.0, idle_power: 10.0, work_power: 40.0 },
            NodeSpec { speed: 2.0, idle_power: 20.0, work_power: 90.0 },
        ];
        let cluster = gen_cluster(&specs, 2, LinkStats::default_for(&specs), 1).unwrap();
        let workflow = gen_layered_dag(30, 5, 0.3, WeightStats::from_cluster(&cluster), 2).unwrap();
        BenchInstance {
            id: id.into(),
            workflow,
            cluster,
            profile: ProfileSource::Generated(ProfileRecipe {
                series: synthetic_intensity_series(200, 3),
                len_range: (2, 6),
                dyn_fraction: 0.4,
                seed: 4,
                horizon_factor: 2.5,
            }),
        }
    }

    #[test]
    fn suite_matrix_shape_and_determinism() {
        let instances = [tiny_instance("t0")];
        let opts = SuiteOptions { timing: false, ..SuiteOptions::default() };
        let algos = [Algorithm::HeftSl, Algorithm::Cwm];
        let rows = run_suite(&instances, &algos, &[1.2, 1.5, 2.0], &[7], &opts).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.feasible && r.makespan <= r.deadline + EPS));
        let again = run_suite(&instances, &algos, &[1.2, 1.5, 2.0], &[7], &opts).unwrap();
        assert_eq!(rows, again);
        assert!(matches!(run_suite(&instances, &algos, &[1.0], &[7], &opts), Err(Error::InvalidAlpha(_))));
    }

    #[test]
    fn suite_writes_partial_rows() {
        let dir = tempfile::tempdir().unwrap();
        let partial = dir.path().join("out.csv.partial");
        let opts = SuiteOptions { timing: false, jobs: 2, partial: Some(partial.clone()), ..SuiteOptions::default() };
        let instances = [tiny_instance("a"), tiny_instance("b")];
        let rows = run_suite(&instances, &[Algorithm::HeftSl], &[2.0], &[0, 1], &opts).unwrap();
        let mut written = import_results(&partial).unwrap();
        sort_canonical(&mut written);
        assert_eq!(written, rows);
    }

    #[test]
    fn matrix_document() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("nodes.json"),
            r#"[{"speed":1,"idle_power":10,"work_power":40},{"speed":2,"idle_power":20,"work_power":90}]"#,
        )
        .unwrap();
        let doc: MatrixDoc = serde_json::from_str(
            r#"{
                "alphas": [1.5],
                "instances": [{
                    "id": "m",
                    "cluster": {"nodes": "nodes.json", "copies": 2, "seed": 1},
                    "workflow": {"tasks": 20, "layers": 4, "density": 0.3, "seed": 2},
                    "profile": {"intensity": {"synthetic": {"len": 100, "seed": 3}}, "len_range": [2, 5], "dyn_fraction": 0.4}
                }]
            }"#,
        )
        .unwrap();
        assert_eq!(doc.algorithms, all_algorithms());
        let resolved = doc.resolve(dir.path()).unwrap();
        assert_eq!(resolved[0].cluster.num_procs(), 4);
        assert_eq!(resolved[0].workflow.len(), 20);
        assert!(serde_json::from_str::<MatrixDoc>(r#"{"alphas":[2],"instances":[],"bogus":1}"#).is_err());
    }
}
