//! Instance generators: clusters from node specs, layered synthetic
//! workflows, green power profiles from carbon-intensity series, and the
//! 3-partition hardness fixtures.

use std::io::Read;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Cluster, CommChannel, Instance, Interval, LinkPowerStats, PowerProfile, ProcId, Processor, Workflow,
};
use crate::rng;

/// One compute node type: speed plus idle and dynamic power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub speed: f64,
    pub idle_power: f64,
    pub work_power: f64,
}

/// Link power distribution without a seed; see [`LinkPowerStats`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub idle_mean: f64,
    pub idle_std: f64,
    pub work_mean: f64,
    pub work_std: f64,
}

impl LinkStats {
    /// Links draw 5% of the mean node powers, with a 20% standard deviation.
    pub fn default_for(specs: &[NodeSpec]) -> Self {
        let n = specs.len().max(1) as f64;
        let idle = specs.iter().map(|s| s.idle_power).sum::<f64>() / n;
        let work = specs.iter().map(|s| s.work_power).sum::<f64>() / n;
        LinkStats {
            idle_mean: 0.05 * idle,
            idle_std: 0.2 * 0.05 * idle,
            work_mean: 0.05 * work,
            work_std: 0.2 * 0.05 * work,
        }
    }

    pub fn with_seed(self, seed: u64) -> LinkPowerStats {
        LinkPowerStats {
            idle_mean: self.idle_mean,
            idle_std: self.idle_std,
            work_mean: self.work_mean,
            work_std: self.work_std,
            seed,
        }
    }
}

fn normal(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std.max(0.0)).expect("finite normal parameters")
}

/// Channels for every ordered processor pair with normally distributed
/// powers clipped at zero and unit bandwidth.
pub fn sample_channels(num_procs: usize, stats: &LinkPowerStats) -> Vec<CommChannel> {
    let mut rng = rng::stream(stats.seed, rng::GENERATOR);
    let idle = normal(stats.idle_mean, stats.idle_std);
    let work = normal(stats.work_mean, stats.work_std);
    let mut out = Vec::with_capacity(num_procs * num_procs.saturating_sub(1));
    for s in 0..num_procs {
        for d in 0..num_procs {
            if s == d {
                continue;
            }
            out.push(CommChannel {
                src: ProcId(s),
                dst: ProcId(d),
                idle_power: idle.sample(&mut rng).max(0.0),
                work_power: work.sample(&mut rng).max(0.0),
                bandwidth: 1.0,
            });
        }
    }
    out
}

/// `copies` processors of each node spec (spec-major ids) and generated links.
pub fn gen_cluster(specs: &[NodeSpec], copies: usize, links: LinkStats, seed: u64) -> Result<Cluster> {
    if copies == 0 || specs.is_empty() {
        return Err(Error::InvalidCluster("need at least one node spec and one copy".into()));
    }
    let processors: Vec<Processor> = specs
        .iter()
        .flat_map(|s| std::iter::repeat(*s).take(copies))
        .enumerate()
        .map(|(i, s)| Processor { label: i as i64, speed: s.speed, idle_power: s.idle_power, work_power: s.work_power })
        .collect();
    let channels = sample_channels(processors.len(), &links.with_seed(seed));
    Cluster::new(processors, channels)
}

/// Maps an intensity in `[x_min, x_max]` affinely and decreasingly onto
/// `[p_min, p_max]`: the cleanest hour gets the largest green budget.
/// A degenerate range maps everything to the midpoint.
pub fn rescale_intensity(x: f64, x_min: f64, x_max: f64, p_min: f64, p_max: f64) -> f64 {
    if x_max - x_min <= f64::EPSILON * x_max.abs().max(1.0) {
        return 0.5 * (p_min + p_max);
    }
    p_max - (x - x_min) / (x_max - x_min) * (p_max - p_min)
}

/// Parameters for [`profile_from_intensities`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub horizon: f64,
    /// Inclusive integer range of interval lengths.
    pub len_range: (u32, u32),
    /// Fraction of the summed dynamic power added on top of the idle total.
    pub dyn_fraction: f64,
    pub seed: u64,
}

/// Splits `[0, horizon)` into intervals of random integer length and gives
/// each a green budget from a random contiguous window of `series`.
pub fn profile_from_intensities(series: &[f64], cluster: &Cluster, params: &ProfileParams) -> Result<PowerProfile> {
    let (lo, hi) = params.len_range;
    if lo == 0 || lo > hi {
        return Err(Error::InvalidProfile(format!("bad interval length range [{lo}, {hi}]")));
    }
    if !(params.horizon.is_finite() && params.horizon > 0.0) {
        return Err(Error::InvalidProfile(format!("bad horizon {}", params.horizon)));
    }
    let mut rng = rng::stream(params.seed, rng::GENERATOR);
    let mut bounds = Vec::new();
    let mut t = 0.0;
    while t < params.horizon {
        let len = rng.random_range(lo..=hi) as f64;
        let end = (t + len).min(params.horizon);
        bounds.push((t, end));
        t = end;
    }
    let needed = bounds.len();
    if series.len() < needed {
        return Err(Error::SeriesTooShort { len: series.len(), needed });
    }
    let offset = rng.random_range(0..=series.len() - needed);
    let window = &series[offset..offset + needed];
    let x_min = window.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p_min = cluster.total_idle_power();
    let p_max = p_min + params.dyn_fraction * cluster.total_work_power();
    let intervals = bounds
        .into_iter()
        .zip(window)
        .map(|((begin, end), &x)| Interval { begin, end, budget: rescale_intensity(x, x_min, x_max, p_min, p_max) })
        .collect();
    PowerProfile::new(intervals)
}

/// Reads the `intensity` column of a `timestamp,intensity` CSV, in row order.
pub fn read_intensity_csv(reader: impl Read) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == "intensity")
        .ok_or_else(|| Error::InvalidProfile("intensity CSV has no `intensity` column".into()))?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(col).unwrap_or("").trim();
        let x: f64 =
            field.parse().map_err(|_| Error::InvalidProfile(format!("row {}: bad intensity {field:?}", row + 2)))?;
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::InvalidProfile(format!("row {}: negative intensity", row + 2)));
        }
        out.push(x);
    }
    Ok(out)
}

/// Stand-in hourly carbon-intensity series (gCO2/kWh): a daily cycle around
/// 300 with amplitude 150 plus Gaussian noise, clipped at 0.
pub fn synthetic_intensity_series(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, rng::GENERATOR);
    let noise = normal(0.0, 30.0);
    let phase = rng.random_range(0.0..24.0);
    (0..len)
        .map(|t| {
            let day = (2.0 * std::f64::consts::PI * (t as f64 + phase) / 24.0).sin();
            (300.0 + 150.0 * day + noise.sample(&mut rng)).max(0.0)
        })
        .collect()
}

/// Normal distribution for task work and edge data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub mean: f64,
    pub std: f64,
    pub floor: f64,
}

impl WeightStats {
    /// Mean equal to the mean processor speed, so an average task runs for
    /// about one time unit; σ = mean/4, clipped at mean/100.
    pub fn from_cluster(c: &Cluster) -> Self {
        let mean = c.mean_speed();
        WeightStats { mean, std: 0.25 * mean, floor: 0.01 * mean }
    }

    fn sample(&self, dist: &Normal<f64>, rng: &mut rng::Rng) -> f64 {
        dist.sample(rng).max(self.floor)
    }
}

/// Layered random DAG. Tasks are spread evenly over `layers`; edges only join
/// consecutive layers, each present with probability `edge_density`, and
/// every task outside the first layer gets at least one predecessor.
pub fn gen_layered_dag(
    n_tasks: usize,
    layers: usize,
    edge_density: f64,
    weights: WeightStats,
    seed: u64,
) -> Result<Workflow> {
    if layers == 0 || n_tasks < layers {
        return Err(Error::InvalidParams(format!(
            "need 1 <= layers <= tasks, got {layers} layers for {n_tasks} tasks"
        )));
    }
    let mut rng = rng::stream(seed, rng::GENERATOR);
    let dist = normal(weights.mean, weights.std);

    let mut layer_of = Vec::with_capacity(layers);
    let mut next = 0i64;
    for l in 0..layers {
        let size = n_tasks / layers + usize::from(l < n_tasks % layers);
        layer_of.push((next..next + size as i64).collect::<Vec<i64>>());
        next += size as i64;
    }

    let tasks: Vec<(i64, f64)> = (0..n_tasks as i64).map(|id| (id, weights.sample(&dist, &mut rng))).collect();
    let mut edges = Vec::new();
    for pair in layer_of.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        for &dst in cur {
            let mut srcs: Vec<i64> =
                prev.iter().copied().filter(|_| rng.random_bool(edge_density.clamp(0.0, 1.0))).collect();
            if srcs.is_empty() {
                srcs.push(prev[rng.random_range(0..prev.len())]);
            }
            for src in srcs {
                edges.push((src, dst, weights.sample(&dist, &mut rng)));
            }
        }
    }
    Workflow::new(tasks, edges)
}

/// The reduction instance for 3-partition: `3n` tasks of work `a_i` on one
/// unit-speed processor (idle 0, work 1), and `n` spans of length `B` with
/// budget 1 separated by unit spans with budget 0. The deadline equals the
/// horizon `nB + n - 1`.
pub fn gen_3partition_instance(integers: &[u64], bin: u64) -> Result<Instance> {
    if integers.is_empty() || integers.len() % 3 != 0 {
        return Err(Error::InvalidParams(format!("expected 3n integers, got {}", integers.len())));
    }
    if integers.contains(&0) || bin == 0 {
        return Err(Error::InvalidParams("integers and B must be positive".into()));
    }
    let n = (integers.len() / 3) as u64;
    let sum: u64 = integers.iter().sum();
    if sum != n * bin {
        return Err(Error::SumMismatch { sum, expected: n * bin });
    }
    let workflow =
        Workflow::new(integers.iter().enumerate().map(|(i, &a)| (i as i64, a as f64)).collect(), Vec::new())?;
    let cluster = Cluster::new(vec![Processor { label: 0, speed: 1.0, idle_power: 0.0, work_power: 1.0 }], Vec::new())?;
    let mut intervals = Vec::new();
    let mut t = 0.0;
    let b = bin as f64;
    for k in 0..n {
        if k > 0 {
            intervals.push(Interval { begin: t, end: t + 1.0, budget: 0.0 });
            t += 1.0;
        }
        intervals.push(Interval { begin: t, end: t + b, budget: 1.0 });
        t += b;
    }
    let profile = PowerProfile::new(intervals)?;
    let horizon = profile.horizon();
    Instance::new(workflow, cluster, profile, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs() -> Vec<NodeSpec> {
        (1..=6)
            .map(|i| NodeSpec { speed: i as f64, idle_power: 10.0 * i as f64, work_power: 50.0 * i as f64 })
            .collect()
    }

    #[test]
    fn rescale_endpoints_and_midpoint() {
        assert_eq!(rescale_intensity(100.0, 100.0, 300.0, 50.0, 150.0), 150.0);
        assert_eq!(rescale_intensity(300.0, 100.0, 300.0, 50.0, 150.0), 50.0);
        assert_eq!(rescale_intensity(200.0, 100.0, 300.0, 50.0, 150.0), 100.0);
        assert_eq!(rescale_intensity(7.0, 7.0, 7.0, 50.0, 150.0), 100.0);
    }

    #[test]
    fn cluster_sizes() {
        let links = LinkStats::default_for(&specs());
        let small = gen_cluster(&specs(), 12, links, 1).unwrap();
        assert_eq!(small.num_procs(), 72);
        assert_eq!(small.channels().len(), 72 * 71);
        let large = gen_cluster(&specs(), 24, links, 1).unwrap();
        assert_eq!(large.num_procs(), 144);
        assert_eq!(gen_cluster(&specs(), 2, links, 9).unwrap(), gen_cluster(&specs(), 2, links, 9).unwrap());
    }

    #[test]
    fn zero_spread_links_are_identical() {
        let links = LinkStats { idle_mean: 0.3, idle_std: 0.0, work_mean: 0.7, work_std: 0.0 };
        let c = gen_cluster(&specs()[..1], 2, links, 4).unwrap();
        assert_eq!(c.channels().len(), 2);
        let (a, b) = (&c.channels()[0], &c.channels()[1]);
        assert_eq!((a.idle_power, a.work_power), (b.idle_power, b.work_power));
    }

    #[test]
    fn profile_tiles_horizon() {
        let c = gen_cluster(&specs(), 1, LinkStats::default_for(&specs()), 3).unwrap();
        let series: Vec<f64> = (0..500).map(|i| 200.0 + 100.0 * ((i as f64) / 7.0).sin()).collect();
        let params = ProfileParams { horizon: 1000.5, len_range: (10, 50), dyn_fraction: 0.2, seed: 11 };
        let p = profile_from_intensities(&series, &c, &params).unwrap();
        let ivs = p.intervals();
        assert_eq!(p.horizon(), 1000.5);
        for (j, iv) in ivs.iter().enumerate() {
            if j + 1 < ivs.len() {
                assert!((10.0..=50.0).contains(&iv.len()));
                assert_eq!(iv.len().fract(), 0.0);
            }
            let p_min = c.total_idle_power();
            let p_max = p_min + 0.2 * c.total_work_power();
            assert!(iv.budget >= p_min - 1e-9 && iv.budget <= p_max + 1e-9);
        }
        assert_eq!(p, profile_from_intensities(&series, &c, &params).unwrap());
        assert!(matches!(profile_from_intensities(&series[..3], &c, &params), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn intensity_csv() {
        let text = "timestamp,intensity\n2024-01-01T00:00,310.5\n2024-01-01T01:00,290\n";
        assert_eq!(read_intensity_csv(text.as_bytes()).unwrap(), vec![310.5, 290.0]);
        assert!(read_intensity_csv("timestamp,value\nx,1\n".as_bytes()).is_err());
    }

    #[test]
    fn layered_dag_shapes() {
        let ws = WeightStats { mean: 2.0, std: 0.5, floor: 0.02 };
        let one = gen_layered_dag(1, 1, 0.5, ws, 0).unwrap();
        assert_eq!((one.len(), one.edges().len()), (1, 0));
        let flat = gen_layered_dag(10, 1, 0.5, ws, 0).unwrap();
        assert_eq!((flat.len(), flat.edges().len()), (10, 0));
        let a = gen_layered_dag(100, 10, 0.3, ws, 42).unwrap();
        let b = gen_layered_dag(100, 10, 0.3, ws, 42).unwrap();
        assert_eq!(a, b);
        // every task outside the first layer has a predecessor
        let with_pred = a.task_ids().filter(|&v| a.in_edges(v).is_empty()).count();
        assert_eq!(with_pred, 10);
        assert!(a.tasks().iter().all(|t| t.work >= 0.02));
    }

    #[test]
    fn three_partition_fixtures() {
        let one = gen_3partition_instance(&[1, 2, 3], 6).unwrap();
        assert_eq!(one.profile.intervals(), &[Interval { begin: 0.0, end: 6.0, budget: 1.0 }]);
        assert_eq!(one.deadline, 6.0);

        let two = gen_3partition_instance(&[1, 1, 4, 2, 2, 2], 6).unwrap();
        assert_eq!(
            two.profile.intervals(),
            &[
                Interval { begin: 0.0, end: 6.0, budget: 1.0 },
                Interval { begin: 6.0, end: 7.0, budget: 0.0 },
                Interval { begin: 7.0, end: 13.0, budget: 1.0 },
            ]
        );
        assert_eq!(two.deadline, 13.0);
        assert!(matches!(gen_3partition_instance(&[1, 2, 4], 6), Err(Error::SumMismatch { .. })));
    }

    #[test]
    fn synthetic_series_is_seeded_and_varied() {
        let a = synthetic_intensity_series(96, 3);
        assert_eq!(a, synthetic_intensity_series(96, 3));
        assert_ne!(a, synthetic_intensity_series(96, 4));
        let (lo, hi) = a.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        assert!(lo >= 0.0 && hi - lo > 150.0);
    }
}
