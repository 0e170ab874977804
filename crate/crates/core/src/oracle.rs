//! Brute-force reference solvers for tests. Exponential by design; keep the
//! inputs tiny.

use crate::error::{Error, Result};
use crate::evaluate::{carbon_cost, makespan};
use crate::model::{
    comm_duration, task_duration, ChannelId, CommPlacement, EdgeId, Instance, Mapping, ProcId, Resource, Schedule,
    TaskId, TaskPlacement, EPS,
};

pub const MAX_KNAPSACK_ITEMS: usize = 20;
pub const MAX_BRUTE_TASKS: usize = 6;
pub const MAX_BRUTE_PROCS: usize = 2;
pub const MAX_MAKESPAN_PROCS: usize = 3;

/// Best value over all subsets with total weight within `capacity`. Equal
/// values go to the lexicographically smallest index set. Values are summed
/// in index order.
pub fn exhaustive_knapsack(items: &[(f64, f64)], capacity: f64) -> Result<(f64, Vec<usize>)> {
    if items.len() > MAX_KNAPSACK_ITEMS {
        return Err(Error::TooManyItems(items.len(), MAX_KNAPSACK_ITEMS));
    }
    let mut best = (0.0, Vec::new());
    for mask in 1u32..(1 << items.len()) {
        let subset: Vec<usize> = (0..items.len()).filter(|i| mask >> i & 1 == 1).collect();
        let weight: f64 = subset.iter().map(|&i| items[i].0).sum();
        if weight > capacity {
            continue;
        }
        let value = subset.iter().fold(0.0, |acc, &i| acc + items[i].1);
        if value > best.0 || (value == best.0 && subset < best.1) {
            best = (value, subset);
        }
    }
    Ok(best)
}

/// Left Riemann sum of the carbon integrand with step `dt` over the same
/// integration window as [`carbon_cost`]. Time beyond the profile horizon has
/// a zero budget.
pub fn timestep_carbon_cost(s: &Schedule, inst: &Instance, dt: f64) -> f64 {
    assert!(dt > 0.0, "dt must be positive");
    let end = makespan(s).max(inst.deadline);
    let idle = inst.cluster.total_idle_power();
    let items: Vec<(f64, f64, f64)> = s
        .items()
        .map(|item| {
            let work = match item.resource {
                Resource::Proc(p) => inst.cluster.proc(p).work_power,
                Resource::Channel(c) => inst.cluster.channel(c).work_power,
            };
            (item.start, item.finish(), work)
        })
        .collect();
    let horizon = inst.profile.horizon();
    let steps = (end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut cost = 0.0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let width = dt.min(end - t);
        let busy: f64 = items.iter().filter(|&&(a, b, _)| a <= t + EPS && t < b - EPS).map(|&(_, _, w)| w).sum();
        let budget = if t < horizon { inst.profile.intervals()[inst.profile.interval_index(t)].budget } else { 0.0 };
        cost += (idle + busy - budget).max(0.0) * width;
    }
    cost
}

fn integral(x: f64) -> Option<i64> {
    let r = x.round();
    ((x - r).abs() <= EPS).then_some(r as i64)
}

fn require_integral(what: &str, x: f64) -> Result<i64> {
    integral(x).ok_or_else(|| Error::InstanceTooLarge(format!("{what} {x} is not integral")))
}

/// Exact minimum carbon cost over every mapping and every integral start time
/// of tasks and messages within `[0, D]`. Needs at most six tasks, two
/// processors, and integral durations, interval bounds and deadline.
pub fn brute_force_min_carbon(inst: &Instance, start_grid: f64) -> Result<(f64, Schedule)> {
    let w = &inst.workflow;
    let c = &inst.cluster;
    if w.len() > MAX_BRUTE_TASKS || c.num_procs() > MAX_BRUTE_PROCS {
        return Err(Error::InstanceTooLarge(format!(
            "{} tasks on {} processors (limit {MAX_BRUTE_TASKS} tasks, {MAX_BRUTE_PROCS} processors)",
            w.len(),
            c.num_procs()
        )));
    }
    if (start_grid - 1.0).abs() > EPS {
        return Err(Error::InvalidParams(format!("start grid must be 1, got {start_grid}")));
    }
    let horizon = require_integral("deadline", inst.deadline)? as usize;
    for iv in inst.profile.intervals() {
        require_integral("interval bound", iv.end)?;
    }
    let mut task_len = vec![vec![0usize; c.num_procs()]; w.len()];
    for v in w.task_ids() {
        for p in c.proc_ids() {
            task_len[v.index()][p.index()] =
                require_integral("task duration", task_duration(w.task(v), c.proc(p)))? as usize;
        }
    }
    let mut comm_len = vec![vec![0usize; c.channels().len()]; w.edges().len()];
    for (e, edge) in w.edges().iter().enumerate() {
        for (ch, chan) in c.channels().iter().enumerate() {
            comm_len[e][ch] = require_integral("message duration", edge.data / chan.bandwidth)? as usize;
        }
    }

    let idle = c.total_idle_power();
    let budget: Vec<f64> =
        (0..horizon).map(|t| inst.profile.intervals()[inst.profile.interval_index(t as f64)].budget).collect();
    let mut search = Search {
        inst,
        order: w.topological_order().to_vec(),
        task_len,
        comm_len,
        budget,
        horizon,
        power: vec![idle; horizon],
        proc_busy: vec![vec![false; horizon]; c.num_procs()],
        chan_busy: vec![vec![false; horizon]; c.channels().len()],
        tasks: vec![None; w.len()],
        comms: vec![None; w.edges().len()],
        best: None,
    };
    search.place_task(0);
    let (_, best) =
        search.best.ok_or(Error::InfeasibleDeadline { deadline: inst.deadline, fallback_makespan: f64::INFINITY })?;
    let cost = carbon_cost(&best, inst)?.total_cost;
    Ok((cost, best))
}

struct Search<'a> {
    inst: &'a Instance,
    order: Vec<TaskId>,
    task_len: Vec<Vec<usize>>,
    comm_len: Vec<Vec<usize>>,
    budget: Vec<f64>,
    horizon: usize,
    power: Vec<f64>,
    proc_busy: Vec<Vec<bool>>,
    chan_busy: Vec<Vec<bool>>,
    tasks: Vec<Option<(ProcId, usize, usize)>>,
    comms: Vec<Option<(ChannelId, usize, usize)>>,
    best: Option<(f64, Schedule)>,
}

impl Search<'_> {
    fn partial_cost(&self) -> f64 {
        self.power.iter().zip(&self.budget).map(|(p, b)| (p - b).max(0.0)).sum()
    }

    fn done(&self) -> bool {
        self.best.as_ref().is_some_and(|(c, _)| *c <= EPS)
    }

    fn bound_exceeded(&self) -> bool {
        self.best.as_ref().is_some_and(|(c, _)| self.partial_cost() >= *c - EPS)
    }

    fn occupy(busy: &mut [bool], power: &mut [f64], work: f64, start: usize, len: usize, on: bool) {
        for t in start..start + len {
            busy[t] = on;
            power[t] += if on { work } else { -work };
        }
    }

    fn place_task(&mut self, k: usize) {
        if self.done() || self.bound_exceeded() {
            return;
        }
        if k == self.order.len() {
            self.record();
            return;
        }
        let v = self.order[k];
        let w = &self.inst.workflow;
        let c = &self.inst.cluster;
        for p in c.proc_ids() {
            let len = self.task_len[v.index()][p.index()];
            // same-processor predecessors bound the earliest start directly
            let ready = w
                .in_edges(v)
                .iter()
                .map(|&e| {
                    let (q, s, l) = self.tasks[w.edge(e).src.index()].unwrap();
                    let comm = if q == p { 0 } else { self.comm_len[e.index()][c.channel_between(q, p).index()] };
                    s + l + comm
                })
                .max()
                .unwrap_or(0);
            for start in ready..=self.horizon.saturating_sub(len) {
                if self.proc_busy[p.index()][start..start + len].iter().any(|&b| b) {
                    continue;
                }
                let work = c.proc(p).work_power;
                Self::occupy(&mut self.proc_busy[p.index()], &mut self.power, work, start, len, true);
                self.tasks[v.index()] = Some((p, start, len));
                let edges: Vec<_> = w.in_edges(v).to_vec();
                self.place_comms(k, &edges, 0);
                self.tasks[v.index()] = None;
                Self::occupy(&mut self.proc_busy[p.index()], &mut self.power, work, start, len, false);
                if self.done() {
                    return;
                }
            }
        }
    }

    fn place_comms(&mut self, k: usize, edges: &[EdgeId], i: usize) {
        if self.done() || self.bound_exceeded() {
            return;
        }
        if i == edges.len() {
            self.place_task(k + 1);
            return;
        }
        let w = &self.inst.workflow;
        let c = &self.inst.cluster;
        let e = edges[i];
        let edge = w.edge(e);
        let (q, s, l) = self.tasks[edge.src.index()].unwrap();
        let (p, v_start, _) = self.tasks[edge.dst.index()].unwrap();
        if q == p {
            self.place_comms(k, edges, i + 1);
            return;
        }
        let ch = c.channel_between(q, p);
        let len = self.comm_len[e.index()][ch.index()];
        let work = c.channel(ch).work_power;
        for start in s + l..=v_start.saturating_sub(len) {
            if start + len > v_start || self.chan_busy[ch.index()][start..start + len].iter().any(|&b| b) {
                continue;
            }
            Self::occupy(&mut self.chan_busy[ch.index()], &mut self.power, work, start, len, true);
            self.comms[e.index()] = Some((ch, start, len));
            self.place_comms(k, edges, i + 1);
            self.comms[e.index()] = None;
            Self::occupy(&mut self.chan_busy[ch.index()], &mut self.power, work, start, len, false);
            if self.done() {
                return;
            }
        }
    }

    fn record(&mut self) {
        let cost = self.partial_cost();
        if self.best.as_ref().is_some_and(|(c, _)| cost >= *c - EPS) {
            return;
        }
        let schedule = Schedule {
            tasks: self
                .tasks
                .iter()
                .map(|t| {
                    let (proc, start, len) = t.unwrap();
                    TaskPlacement { proc, start: start as f64, duration: len as f64 }
                })
                .collect(),
            comms: self
                .comms
                .iter()
                .map(|m| {
                    m.map(|(channel, start, len)| CommPlacement { channel, start: start as f64, duration: len as f64 })
                })
                .collect(),
        };
        self.best = Some((cost, schedule));
    }
}

/// Optimal makespan when channel contention is ignored (every message takes
/// its transfer time right after its source finishes). This relaxation is a
/// lower bound on the true optimum. Enumerates every mapping and every
/// topological order, starting each task as early as its processor and
/// inputs allow.
pub fn brute_force_min_makespan(inst: &Instance) -> Result<f64> {
    let w = &inst.workflow;
    let c = &inst.cluster;
    if w.len() > MAX_BRUTE_TASKS || c.num_procs() > MAX_MAKESPAN_PROCS {
        return Err(Error::InstanceTooLarge(format!(
            "{} tasks on {} processors (limit {MAX_BRUTE_TASKS} tasks, {MAX_MAKESPAN_PROCS} processors)",
            w.len(),
            c.num_procs()
        )));
    }
    let n = w.len();
    let procs = c.num_procs();
    let mut orders = Vec::new();
    topological_orders(inst, &mut vec![false; n], &mut Vec::new(), &mut orders);
    let mut best = f64::INFINITY;
    let mut assign = vec![0usize; n];
    loop {
        let mapping = Mapping(assign.iter().map(|&p| ProcId(p)).collect());
        for order in &orders {
            let mut finish = vec![0.0f64; n];
            let mut free = vec![0.0f64; procs];
            for &v in order {
                let p = mapping.proc_of(v);
                let ready = w
                    .in_edges(v)
                    .iter()
                    .map(|&e| finish[w.edge(e).src.index()] + comm_duration(w.edge(e), &mapping, c))
                    .fold(0.0, f64::max);
                let start = ready.max(free[p.index()]);
                finish[v.index()] = start + task_duration(w.task(v), c.proc(p));
                free[p.index()] = finish[v.index()];
            }
            best = best.min(finish.iter().copied().fold(0.0, f64::max));
        }
        // next mapping in base-P counting order
        let mut i = 0;
        while i < n && assign[i] + 1 == procs {
            assign[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        assign[i] += 1;
    }
    Ok(best)
}

fn topological_orders(inst: &Instance, used: &mut Vec<bool>, prefix: &mut Vec<TaskId>, out: &mut Vec<Vec<TaskId>>) {
    let w = &inst.workflow;
    if prefix.len() == w.len() {
        out.push(prefix.clone());
        return;
    }
    for v in w.task_ids() {
        if used[v.index()] || w.predecessors(v).any(|u| !used[u.index()]) {
            continue;
        }
        used[v.index()] = true;
        prefix.push(v);
        topological_orders(inst, used, prefix, out);
        prefix.pop();
        used[v.index()] = false;
    }
}
