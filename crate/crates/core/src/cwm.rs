//! CWM: carbon-aware workflow mapping in two phases.
//!
//! 1. For every profile interval a knapsack picks the fastest processor
//!    subset whose dynamic power fits the green budget left after idle power.
//!    Tasks are list-scheduled in rank order on the subset of the interval
//!    their earliest start falls into, then refined by local search.
//! 2. If the deadline is missed, every task finishing after a threshold ξ
//!    (plus its descendants) is rescheduled on all processors; ξ is the
//!    largest integer that meets the deadline. A final local search runs
//!    under the deadline.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{self, carbon_cost, is_valid, makespan, refined_intervals, validate_schedule, CarbonReport};
use crate::heft_sl::{compute_ranks, place_unrestricted, rank_order, Placer};
use crate::model::{Cluster, Instance, ProcId, Schedule, TaskId, EPS};
use crate::rng::{self, Rng};

/// Knapsack weights are work powers scaled by this factor and rounded.
pub const WEIGHT_SCALE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CwmParams {
    /// Fraction of the spare green budget handed to the knapsack, in (0, 1].
    pub tau: f64,
    /// Maximum local-search iterations per pass.
    pub phi: usize,
    /// Interval advances allowed per task during the initial mapping.
    pub retries: usize,
    pub seed: u64,
    /// Return the cheapest schedule seen during local search instead of the last.
    pub keep_best: bool,
}

impl Default for CwmParams {
    fn default() -> Self {
        CwmParams { tau: 0.8, phi: 500, retries: 3, seed: 0, keep_best: true }
    }
}

impl CwmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidParams(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.retries == 0 {
            return Err(Error::InvalidParams("retries must be positive".into()));
        }
        Ok(())
    }
}

/// Sum of idle powers over all processors and channels.
pub fn base_power(c: &Cluster) -> f64 {
    c.total_idle_power()
}

pub fn integerize_weight(w: f64) -> u64 {
    (w * WEIGHT_SCALE).round().max(0.0) as u64
}

fn integerize_capacity(c: f64) -> u64 {
    // never round a capacity up past what the budget allows
    (c * WEIGHT_SCALE + 1e-6).floor().max(0.0) as u64
}

/// Integer knapsack capacity for an interval with green budget `budget`.
pub fn knapsack_capacity(budget: f64, c: &Cluster, tau: f64) -> u64 {
    integerize_capacity((tau * (budget - base_power(c))).max(0.0))
}

/// 0/1 knapsack over integer weights by dynamic programming. Returns the best
/// value and the chosen item indices (ascending), reconstructed from the
/// table of take decisions.
pub fn knapsack(weights: &[u64], values: &[f64], capacity: u64) -> (f64, Vec<usize>) {
    assert_eq!(weights.len(), values.len());
    let total: u64 = weights.iter().sum();
    let cap = capacity.min(total) as usize;
    let n = weights.len();
    let words = cap / 64 + 1;
    let mut best = vec![0.0f64; cap + 1];
    let mut take = vec![0u64; n * words];
    for i in 0..n {
        let w = weights[i] as usize;
        if w > cap {
            continue;
        }
        let row = &mut take[i * words..(i + 1) * words];
        for c in (w..=cap).rev() {
            let cand = best[c - w] + values[i];
            if cand > best[c] {
                best[c] = cand;
                row[c / 64] |= 1 << (c % 64);
            }
        }
    }
    let mut chosen = Vec::new();
    let mut c = cap;
    for i in (0..n).rev() {
        if take[i * words + c / 64] >> (c % 64) & 1 == 1 {
            chosen.push(i);
            c -= weights[i] as usize;
        }
    }
    chosen.reverse();
    (best[cap], chosen)
}

fn cheapest_processor(c: &Cluster) -> ProcId {
    c.proc_ids()
        .min_by(|&a, &b| c.proc(a).work_power.total_cmp(&c.proc(b).work_power).then(a.cmp(&b)))
        .expect("cluster has processors")
}

/// The processors allowed to run during an interval with green budget `budget`:
/// the subset of maximal total speed whose summed work power fits
/// `max(0, tau * (budget - base power))`. Falls back to the processor with
/// the smallest work power when nothing fits.
pub fn select_processor_subset(budget: f64, c: &Cluster, tau: f64) -> Vec<ProcId> {
    subset_for_capacity(knapsack_capacity(budget, c, tau), c)
}

fn subset_for_capacity(capacity: u64, c: &Cluster) -> Vec<ProcId> {
    if capacity == 0 {
        return vec![cheapest_processor(c)];
    }
    let weights: Vec<u64> = c.processors().iter().map(|p| integerize_weight(p.work_power)).collect();
    let values: Vec<f64> = c.processors().iter().map(|p| p.speed).collect();
    let (_, chosen) = knapsack(&weights, &values, capacity);
    if chosen.is_empty() {
        vec![cheapest_processor(c)]
    } else {
        chosen.into_iter().map(ProcId).collect()
    }
}

/// Processor subset per profile interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetMap {
    pub subsets: Vec<Vec<ProcId>>,
}

impl SubsetMap {
    pub fn for_instance(inst: &Instance, tau: f64) -> Self {
        let mut cache: HashMap<u64, Vec<ProcId>> = HashMap::new();
        let subsets = inst
            .profile
            .intervals()
            .iter()
            .map(|iv| {
                let cap = knapsack_capacity(iv.budget, &inst.cluster, tau);
                cache.entry(cap).or_insert_with(|| subset_for_capacity(cap, &inst.cluster)).clone()
            })
            .collect();
        SubsetMap { subsets }
    }

    pub fn get(&self, j: usize) -> &[ProcId] {
        &self.subsets[j]
    }
}

/// Deadline-agnostic schedule: rank order, each task restricted to the subset
/// of the interval holding its earliest start (ignoring messages). A task
/// whose chosen start leaves that interval is retried on later intervals,
/// starting no earlier than their beginning. Followed by a local search
/// bounded only by the profile horizon.
pub fn initial_mapping(inst: &Instance, subsets: &SubsetMap, params: &CwmParams) -> Schedule {
    let s = initial_placement(inst, subsets, params);
    let mut rng = rng::stream(params.seed, rng::LOCAL_SEARCH_INITIAL);
    local_search_with(s, f64::INFINITY, inst, params, &mut rng).schedule
}

pub(crate) fn initial_placement(inst: &Instance, subsets: &SubsetMap, params: &CwmParams) -> Schedule {
    let w = &inst.workflow;
    let intervals = inst.profile.intervals();
    let order = rank_order(&compute_ranks(w, &inst.cluster), params.seed);
    let mut ties = rng::stream(params.seed, rng::TIES);
    let mut placer = Placer::new(w, &inst.cluster);
    for v in order {
        let est = placer.est_ignoring_comm(v);
        let mut j = inst.profile.interval_index(est);
        let mut cand = placer.best(v, subsets.get(j).iter().copied(), 0.0, &mut ties);
        let mut retries = 0;
        while cand.start >= intervals[j].end - EPS && retries < params.retries && j + 1 < intervals.len() {
            j += 1;
            retries += 1;
            cand = placer.best(v, subsets.get(j).iter().copied(), intervals[j].begin, &mut ties);
        }
        placer.commit(v, cand);
    }
    placer.into_schedule()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// No refined interval exceeds its budget.
    WithinBudget,
    /// The first over-budget interval has no running task.
    NoCandidate,
    /// The move would be empty or break the deadline.
    NoSlack,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LocalSearchOutcome {
    pub schedule: Schedule,
    pub cost: f64,
    /// Cost of every schedule visited, starting with the input.
    pub visited_costs: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Repeatedly pushes a random task out of the leftmost over-budget refined
/// interval, together with everything that must move with it, by the
/// smallest offset that clears the interval (clamped so the makespan stays
/// within `deadline`). An infinite deadline is bounded by the profile horizon.
pub fn local_search(s: &Schedule, deadline: f64, inst: &Instance, params: &CwmParams) -> LocalSearchOutcome {
    let stream = if deadline.is_finite() { rng::LOCAL_SEARCH_REPAIR } else { rng::LOCAL_SEARCH_INITIAL };
    let mut rng = rng::stream(params.seed, stream);
    local_search_with(s.clone(), deadline, inst, params, &mut rng)
}

pub(crate) fn local_search_with(
    s: Schedule,
    deadline: f64,
    inst: &Instance,
    params: &CwmParams,
    rng: &mut Rng,
) -> LocalSearchOutcome {
    let limit = if deadline.is_finite() { deadline } else { inst.profile.horizon() };
    let mut cur = s;
    let mut best: Option<(f64, Schedule)> = None;
    let mut visited_costs = Vec::new();
    let mut iterations = 0;
    let mut stop = StopReason::IterationLimit;

    loop {
        let end = makespan(&cur).max(inst.deadline);
        let pieces = refined_intervals(&cur, &inst.cluster, &inst.profile, end);
        let cost: f64 = pieces.iter().map(|p| p.cost()).sum();
        visited_costs.push(cost);
        if params.keep_best && best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, cur.clone()));
        }
        if iterations == params.phi {
            break;
        }
        let Some(hot) = pieces.iter().find(|p| p.over_budget()) else {
            stop = StopReason::WithinBudget;
            break;
        };
        let running: Vec<TaskId> = inst
            .workflow
            .task_ids()
            .filter(|&v| {
                let t = cur.task(v);
                t.start < hot.end - EPS && t.finish() > hot.begin + EPS
            })
            .collect();
        let Some(&picked) = running.choose(rng) else {
            stop = StopReason::NoCandidate;
            break;
        };
        let moving = shift_set(&cur, inst, picked, hot.end);
        let latest = moving.latest_finish(&cur);
        let offset = (hot.end - cur.task(picked).start).min(limit - latest);
        if offset <= EPS {
            stop = StopReason::NoSlack;
            break;
        }
        moving.apply(&mut cur, offset);
        iterations += 1;
    }

    let (cost, schedule) = match best {
        Some((c, s)) if c <= *visited_costs.last().unwrap() => (c, s),
        _ => (*visited_costs.last().unwrap(), cur),
    };
    LocalSearchOutcome { schedule, cost, visited_costs, iterations, stop }
}

/// Tasks and messages that move together in one local-search step.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSet {
    pub tasks: Vec<bool>,
    pub comms: Vec<bool>,
}

impl ShiftSet {
    /// Latest finish among the moved items.
    pub fn latest_finish(&self, s: &Schedule) -> f64 {
        let tasks = self.tasks.iter().zip(&s.tasks).filter(|(m, _)| **m).map(|(_, t)| t.finish());
        let comms = self.comms.iter().zip(&s.comms).filter_map(|(m, c)| c.filter(|_| *m).map(|c| c.finish()));
        tasks.chain(comms).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn apply(&self, s: &mut Schedule, offset: f64) {
        for (t, &m) in s.tasks.iter_mut().zip(&self.tasks) {
            if m {
                t.start += offset;
            }
        }
        for (c, &m) in s.comms.iter_mut().zip(&self.comms) {
            if let (Some(c), true) = (c.as_mut(), m) {
                c.start += offset;
            }
        }
    }
}

/// The set moved when `picked` is pushed out of an interval ending at `end`:
/// `picked`, every task starting at or after `end`, the successors of
/// `picked` starting before `end`, and the closure of all of these under
/// "outgoing messages", "destination of a moved message" and "later items on
/// the same processor or channel".
pub fn shift_set(s: &Schedule, inst: &Instance, picked: TaskId, end: f64) -> ShiftSet {
    let w = &inst.workflow;
    let c = &inst.cluster;

    // items per resource, sorted by start
    let mut on_proc: Vec<Vec<usize>> = vec![Vec::new(); c.num_procs()];
    for (i, t) in s.tasks.iter().enumerate() {
        on_proc[t.proc.index()].push(i);
    }
    for list in &mut on_proc {
        list.sort_by(|&a, &b| s.tasks[a].start.total_cmp(&s.tasks[b].start));
    }
    let mut on_chan: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, cp) in s.comms.iter().enumerate() {
        if let Some(cp) = cp {
            on_chan.entry(cp.channel.index()).or_default().push(i);
        }
    }
    for list in on_chan.values_mut() {
        list.sort_by(|&a, &b| {
            let (x, y) = (s.comms[a].unwrap(), s.comms[b].unwrap());
            x.start.total_cmp(&y.start)
        });
    }
    // every list position at or beyond the frontier is already in the set
    let mut proc_frontier: Vec<usize> = on_proc.iter().map(Vec::len).collect();
    let mut chan_frontier: HashMap<usize, usize> = on_chan.iter().map(|(&k, v)| (k, v.len())).collect();

    let mut set = ShiftSet { tasks: vec![false; w.len()], comms: vec![false; w.edges().len()] };
    let mut task_stack: Vec<usize> = Vec::new();
    let mut comm_stack: Vec<usize> = Vec::new();
    let push_task = |v: usize, set: &mut ShiftSet, stack: &mut Vec<usize>| {
        if !set.tasks[v] {
            set.tasks[v] = true;
            stack.push(v);
        }
    };

    push_task(picked.index(), &mut set, &mut task_stack);
    for v in w.task_ids() {
        if s.task(v).start >= end - EPS {
            push_task(v.index(), &mut set, &mut task_stack);
        }
    }
    for u in w.successors(picked) {
        if s.task(u).start < end {
            push_task(u.index(), &mut set, &mut task_stack);
        }
    }

    while !task_stack.is_empty() || !comm_stack.is_empty() {
        while let Some(v) = task_stack.pop() {
            let t = s.tasks[v];
            for &e in w.out_edges(TaskId(v)) {
                if s.comms[e.index()].is_some() && !set.comms[e.index()] {
                    set.comms[e.index()] = true;
                    comm_stack.push(e.index());
                }
            }
            let list = &on_proc[t.proc.index()];
            let from = list.partition_point(|&u| s.tasks[u].start < t.finish() - EPS);
            let frontier = &mut proc_frontier[t.proc.index()];
            if from < *frontier {
                for &u in &list[from..*frontier] {
                    push_task(u, &mut set, &mut task_stack);
                }
                *frontier = from;
            }
        }
        while let Some(e) = comm_stack.pop() {
            let cp = s.comms[e].unwrap();
            push_task(w.edges()[e].dst.index(), &mut set, &mut task_stack);
            let list = &on_chan[&cp.channel.index()];
            let from = list.partition_point(|&x| s.comms[x].unwrap().start < cp.finish() - EPS);
            let frontier = chan_frontier.get_mut(&cp.channel.index()).unwrap();
            if from < *frontier {
                for &x in &list[from..*frontier] {
                    if !set.comms[x] {
                        set.comms[x] = true;
                        comm_stack.push(x);
                    }
                }
                *frontier = from;
            }
        }
    }
    set
}

/// Keeps every task finishing by `xi` (and messages among them) in place and
/// reschedules the rest, plus all their descendants, in `order` on every
/// processor. With `xi = 0` this is exactly HEFT-SL with the same order and seed.
pub fn reschedule_above_threshold(s: &Schedule, xi: f64, order: &[TaskId], inst: &Instance, seed: u64) -> Schedule {
    let w = &inst.workflow;
    let mut moved = vec![false; w.len()];
    let mut stack: Vec<TaskId> = w.task_ids().filter(|&v| s.finish(v) > xi + EPS).collect();
    for &v in &stack {
        moved[v.index()] = true;
    }
    while let Some(v) = stack.pop() {
        for u in w.successors(v) {
            if !moved[u.index()] {
                moved[u.index()] = true;
                stack.push(u);
            }
        }
    }
    let keep: Vec<bool> = moved.iter().map(|m| !m).collect();
    let mut placer = Placer::keeping(w, &inst.cluster, s, &keep);
    let mut ties = rng::stream(seed, rng::TIES);
    place_unrestricted(&mut placer, order, &mut ties);
    placer.into_schedule()
}

/// Makes `s` meet the instance deadline. Tries ξ = D first, then a binary
/// search over integer thresholds for the largest one that meets D. Errors
/// when even full rescheduling (ξ = 0) misses the deadline.
pub fn deadline_repair(s: Schedule, inst: &Instance, params: &CwmParams) -> Result<Schedule> {
    let deadline = inst.deadline;
    let meets = |x: &Schedule| makespan(x) <= deadline + EPS;
    let finish = |x: Schedule| {
        let mut rng = rng::stream(params.seed, rng::LOCAL_SEARCH_REPAIR);
        local_search_with(x, deadline, inst, params, &mut rng).schedule
    };
    if meets(&s) {
        return Ok(finish(s));
    }
    let order = rank_order(&compute_ranks(&inst.workflow, &inst.cluster), params.seed);
    let first = reschedule_above_threshold(&s, deadline, &order, inst, params.seed);
    if meets(&first) {
        return Ok(finish(first));
    }
    let (mut lo, mut hi) = (0u64, deadline.floor() as u64);
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if meets(&reschedule_above_threshold(&s, mid as f64, &order, inst, params.seed)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let repaired = reschedule_above_threshold(&s, lo as f64, &order, inst, params.seed);
    if !meets(&repaired) {
        return Err(Error::InfeasibleDeadline { deadline, fallback_makespan: makespan(&repaired) });
    }
    Ok(finish(repaired))
}

#[derive(Debug, Clone)]
pub struct CwmOutcome {
    pub schedule: Schedule,
    pub report: CarbonReport,
}

/// Both phases end to end. Deterministic per instance and parameters.
pub fn run_cwm(inst: &Instance, params: &CwmParams) -> Result<CwmOutcome> {
    params.validate()?;
    let subsets = SubsetMap::for_instance(inst, params.tau);
    let initial = initial_mapping(inst, &subsets, params);
    let schedule = deadline_repair(initial, inst, params)?;
    let violations = validate_schedule(&schedule, inst);
    if let Some(v) = violations.first() {
        return Err(Error::InvariantBreach(format!("CWM produced an invalid schedule: {}", v.detail)));
    }
    debug_assert!(is_valid(&violations));
    let report = carbon_cost(&schedule, inst)?;
    Ok(CwmOutcome { schedule, report })
}

/// Cost used to rank intermediate schedules (no horizon check).
pub fn schedule_cost(s: &Schedule, inst: &Instance) -> f64 {
    evaluate::extended_cost(s, inst)
}
