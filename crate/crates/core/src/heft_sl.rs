//! HEFT-SL: upward-rank list scheduling with insertion-based placement and
//! explicit scheduling of every message on its serialized channel.
//!
//! The same placement engine drives the restricted-subset initial mapping and
//! the unrestricted rescheduling used by deadline repair.

use rand::seq::{IndexedRandom, SliceRandom};

use crate::model::{
    ChannelId, Cluster, CommPlacement, EdgeId, Instance, ProcId, Schedule, Task, TaskId, TaskPlacement, Workflow, EPS,
};
use crate::rng::{self, Rng};

/// Average execution time of `v` over all processors.
pub fn mean_runtime(v: &Task, c: &Cluster) -> f64 {
    let total: f64 = c.processors().iter().map(|p| v.work / p.speed).sum();
    total / c.num_procs() as f64
}

/// Upward ranks (bottom levels) using raw edge data as communication cost.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub rank: Vec<f64>,
}

impl RankTable {
    pub fn get(&self, v: TaskId) -> f64 {
        self.rank[v.index()]
    }
}

pub fn compute_ranks(w: &Workflow, c: &Cluster) -> RankTable {
    let mut rank = vec![0.0; w.len()];
    for &v in w.topological_order().iter().rev() {
        let tail = w
            .out_edges(v)
            .iter()
            .map(|&e| {
                let e = w.edge(e);
                e.data + rank[e.dst.index()]
            })
            .fold(0.0, f64::max);
        rank[v.index()] = mean_runtime(w.task(v), c) + tail;
    }
    RankTable { rank }
}

/// Tasks by descending rank. Equal ranks keep the order of a seeded shuffle
/// applied before the (stable) sort.
pub fn rank_order(table: &RankTable, seed: u64) -> Vec<TaskId> {
    let mut order: Vec<TaskId> = (0..table.rank.len()).map(TaskId).collect();
    order.shuffle(&mut rng::stream(seed, rng::SHUFFLE));
    order.sort_by(|a, b| table.get(*b).total_cmp(&table.get(*a)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

/// Disjoint busy spans of one resource, sorted by start.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timeline {
    spans: Vec<Span>,
}

impl Timeline {
    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    /// Earliest start `>= ready` of a gap that can hold `duration`.
    pub fn earliest_fit(&self, ready: f64, duration: f64) -> f64 {
        earliest_fit(&self.spans, &[], ready, duration)
    }

    pub fn insert(&mut self, start: f64, duration: f64) {
        if duration <= EPS {
            return;
        }
        let at = self.spans.partition_point(|s| s.start < start);
        self.spans.insert(at, Span { start, end: start + duration });
    }
}

/// Insertion-based gap search over the union of two sorted disjoint span
/// lists. A gap fits when its length is at least `duration - EPS`.
fn earliest_fit(base: &[Span], pending: &[Span], ready: f64, duration: f64) -> f64 {
    let mut t = ready;
    let mut i = base.partition_point(|s| s.end <= t + EPS);
    let mut k = pending.partition_point(|s| s.end <= t + EPS);
    loop {
        let next = match (base.get(i), pending.get(k)) {
            (Some(a), Some(b)) if a.start <= b.start => {
                i += 1;
                *a
            }
            (Some(_), Some(b)) => {
                k += 1;
                *b
            }
            (Some(a), None) => {
                i += 1;
                *a
            }
            (None, Some(b)) => {
                k += 1;
                *b
            }
            (None, None) => return t,
        };
        if next.end <= t + EPS {
            continue;
        }
        if next.start - t >= duration - EPS {
            return t;
        }
        t = t.max(next.end);
    }
}

/// Committed channel occupation, one timeline per channel. Channels that never
/// carry a message keep an empty (unallocated) timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTimeline {
    channels: Vec<Timeline>,
}

impl LinkTimeline {
    pub fn new(cluster: &Cluster) -> Self {
        LinkTimeline { channels: vec![Timeline::default(); cluster.channels().len()] }
    }

    pub fn channel(&self, c: ChannelId) -> &Timeline {
        &self.channels[c.index()]
    }

    pub fn insert(&mut self, c: ChannelId, start: f64, duration: f64) {
        self.channels[c.index()].insert(start, duration);
    }
}

/// Messages tentatively placed while evaluating one processor candidate.
/// They shadow the committed timeline without copying it.
#[derive(Debug, Clone, Default)]
pub struct PendingTransfers {
    placed: Vec<(EdgeId, CommPlacement)>,
}

impl PendingTransfers {
    fn spans_on(&self, c: ChannelId) -> Vec<Span> {
        let mut spans: Vec<Span> = self
            .placed
            .iter()
            .filter(|(_, p)| p.channel == c && p.duration > EPS)
            .map(|(_, p)| Span { start: p.start, end: p.finish() })
            .collect();
        spans.sort_by(|a, b| a.start.total_cmp(&b.start));
        spans
    }

    pub fn placements(&self) -> &[(EdgeId, CommPlacement)] {
        &self.placed
    }
}

/// Earliest slot for edge `e` on the channel from `src_proc` to `target_proc`
/// that starts no earlier than `src_finish`, avoiding both committed messages
/// and those already pending for the same candidate. The slot is recorded in
/// `pending`, never in `links`.
#[allow(clippy::too_many_arguments)]
pub fn tentative_comm_schedule(
    e: EdgeId,
    data: f64,
    src_finish: f64,
    src_proc: ProcId,
    target_proc: ProcId,
    cluster: &Cluster,
    links: &LinkTimeline,
    pending: &mut PendingTransfers,
) -> (f64, f64) {
    let channel = cluster.channel_between(src_proc, target_proc);
    let duration = data / cluster.channel(channel).bandwidth;
    let shadow = pending.spans_on(channel);
    let start = earliest_fit(links.channel(channel).spans(), &shadow, src_finish, duration);
    pending.placed.push((e, CommPlacement { channel, start, duration }));
    (start, start + duration)
}

/// Outcome of evaluating one task on one processor.
#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub proc: ProcId,
    pub start: f64,
    pub duration: f64,
    pub transfers: PendingTransfers,
}

impl Candidate {
    pub fn finish(&self) -> f64 {
        self.start + self.duration
    }
}

/// Incremental list-scheduling state shared by every constructive phase.
pub(crate) struct Placer<'a> {
    workflow: &'a Workflow,
    cluster: &'a Cluster,
    procs: Vec<Timeline>,
    links: LinkTimeline,
    tasks: Vec<Option<TaskPlacement>>,
    comms: Vec<Option<CommPlacement>>,
}

impl<'a> Placer<'a> {
    pub fn new(workflow: &'a Workflow, cluster: &'a Cluster) -> Self {
        Placer {
            workflow,
            cluster,
            procs: vec![Timeline::default(); cluster.num_procs()],
            links: LinkTimeline::new(cluster),
            tasks: vec![None; workflow.len()],
            comms: vec![None; workflow.edges().len()],
        }
    }

    /// Starts from `s` with only the tasks flagged in `keep` (and messages
    /// between two kept tasks) in place. `keep` must be closed under
    /// predecessors.
    pub fn keeping(workflow: &'a Workflow, cluster: &'a Cluster, s: &Schedule, keep: &[bool]) -> Self {
        let mut placer = Placer::new(workflow, cluster);
        for v in workflow.task_ids() {
            if keep[v.index()] {
                let t = *s.task(v);
                placer.procs[t.proc.index()].insert(t.start, t.duration);
                placer.tasks[v.index()] = Some(t);
            }
        }
        for (i, e) in workflow.edges().iter().enumerate() {
            if keep[e.src.index()] && keep[e.dst.index()] {
                if let Some(c) = s.comms[i] {
                    placer.links.insert(c.channel, c.start, c.duration);
                    placer.comms[i] = Some(c);
                }
            }
        }
        placer
    }

    pub fn placement(&self, v: TaskId) -> Option<&TaskPlacement> {
        self.tasks[v.index()].as_ref()
    }

    /// Finish time of `v` ignoring communication: latest predecessor finish.
    pub fn est_ignoring_comm(&self, v: TaskId) -> f64 {
        self.workflow
            .predecessors(v)
            .map(|u| self.placement(u).expect("predecessor placed first").finish())
            .fold(0.0, f64::max)
    }

    pub fn evaluate(&self, v: TaskId, p: ProcId, not_before: f64) -> Candidate {
        let mut pending = PendingTransfers::default();
        let mut arrival: f64 = 0.0;
        for &e in self.workflow.in_edges(v) {
            let edge = self.workflow.edge(e);
            let src = self.tasks[edge.src.index()].expect("predecessor placed first");
            if src.proc == p {
                arrival = arrival.max(src.finish());
            } else {
                let (_, finish) = tentative_comm_schedule(
                    e,
                    edge.data,
                    src.finish(),
                    src.proc,
                    p,
                    self.cluster,
                    &self.links,
                    &mut pending,
                );
                arrival = arrival.max(finish);
            }
        }
        let duration = self.workflow.task(v).work / self.cluster.proc(p).speed;
        let ready = arrival.max(not_before);
        let start = self.procs[p.index()].earliest_fit(ready, duration);
        Candidate { proc: p, start, duration, transfers: pending }
    }

    /// Candidate with the earliest finish time; ties within `EPS` are broken
    /// uniformly at random.
    pub fn best(
        &self,
        v: TaskId,
        procs: impl IntoIterator<Item = ProcId>,
        not_before: f64,
        ties: &mut Rng,
    ) -> Candidate {
        let mut best: Vec<Candidate> = Vec::new();
        for p in procs {
            let cand = self.evaluate(v, p, not_before);
            match best.first() {
                Some(b) if cand.finish() < b.finish() - EPS => {
                    best.clear();
                    best.push(cand);
                }
                Some(b) if cand.finish() <= b.finish() + EPS => best.push(cand),
                Some(_) => {}
                None => best.push(cand),
            }
        }
        match best.len() {
            0 => panic!("no candidate processor"),
            1 => best.pop().unwrap(),
            _ => best.choose(ties).unwrap().clone(),
        }
    }

    pub fn commit(&mut self, v: TaskId, cand: Candidate) {
        self.procs[cand.proc.index()].insert(cand.start, cand.duration);
        for &(e, c) in cand.transfers.placements() {
            self.links.insert(c.channel, c.start, c.duration);
            self.comms[e.index()] = Some(c);
        }
        self.tasks[v.index()] = Some(TaskPlacement { proc: cand.proc, start: cand.start, duration: cand.duration });
    }

    pub fn into_schedule(self) -> Schedule {
        Schedule { tasks: self.tasks.into_iter().map(|t| t.expect("every task placed")).collect(), comms: self.comms }
    }
}

/// Places the tasks of `order` that are not yet placed on any processor.
pub(crate) fn place_unrestricted(placer: &mut Placer<'_>, order: &[TaskId], ties: &mut Rng) {
    let procs: Vec<ProcId> = placer.cluster.proc_ids().collect();
    for &v in order {
        if placer.placement(v).is_some() {
            continue;
        }
        let cand = placer.best(v, procs.iter().copied(), 0.0, ties);
        placer.commit(v, cand);
    }
}

/// Carbon-agnostic baseline: rank order, then every task on the processor
/// giving the earliest finish time. The deadline is not considered.
pub fn schedule_heft_sl(inst: &Instance, seed: u64) -> Schedule {
    heft_sl_on(&inst.workflow, &inst.cluster, seed)
}

/// [`schedule_heft_sl`] without an instance; the baseline ignores the profile.
pub fn heft_sl_on(w: &Workflow, c: &Cluster, seed: u64) -> Schedule {
    let order = rank_order(&compute_ranks(w, c), seed);
    in_order(w, c, &order, seed)
}

/// HEFT-SL placement with a caller-supplied task order.
pub fn schedule_in_order(inst: &Instance, order: &[TaskId], seed: u64) -> Schedule {
    in_order(&inst.workflow, &inst.cluster, order, seed)
}

fn in_order(w: &Workflow, c: &Cluster, order: &[TaskId], seed: u64) -> Schedule {
    let mut placer = Placer::new(w, c);
    let mut ties = rng::stream(seed, rng::TIES);
    place_unrestricted(&mut placer, order, &mut ties);
    placer.into_schedule()
}
