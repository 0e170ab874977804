//! Domain types: workflows, clusters, power profiles, instances and schedules,
//! together with their JSON document forms.
//!
//! External ids from input documents are mapped onto dense indices at load
//! time. Tasks and processors are sorted by their external id, so the dense
//! order agrees with the id order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for every comparison between derived time points.
pub const EPS: f64 = 1e-9;

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub usize);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

dense_id!(
    /// Dense task index into [`Workflow::tasks`].
    TaskId
);
dense_id!(
    /// Dense edge index into [`Workflow::edges`].
    EdgeId
);
dense_id!(
    /// Dense processor index into [`Cluster::processors`].
    ProcId
);
dense_id!(
    /// Dense channel index into [`Cluster::channels`].
    ChannelId
);

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    /// Id used in input and output documents.
    pub label: i64,
    pub work: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: TaskId,
    pub dst: TaskId,
    pub data: f64,
}

/// A weighted DAG of tasks. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Workflow {
    tasks: Vec<Task>,
    edges: Vec<Edge>,
    // incoming edges per task, ascending by source id
    preds: Vec<Vec<EdgeId>>,
    // outgoing edges per task, ascending by destination id
    succs: Vec<Vec<EdgeId>>,
    topo: Vec<TaskId>,
}

impl Workflow {
    /// Builds a workflow from `(id, work)` tasks and `(src, dst, data)` edges
    /// given in external ids, checking every structural invariant.
    pub fn new(tasks: Vec<(i64, f64)>, edges: Vec<(i64, i64, f64)>) -> Result<Self> {
        let mut tasks = tasks;
        tasks.sort_by_key(|&(id, _)| id);
        let mut index = HashMap::with_capacity(tasks.len());
        for (i, &(id, work)) in tasks.iter().enumerate() {
            if index.insert(id, TaskId(i)).is_some() {
                return Err(Error::DuplicateTask(id));
            }
            if !(work.is_finite() && work > 0.0) {
                return Err(Error::InvalidWork { id, work });
            }
        }

        let mut seen = HashSet::with_capacity(edges.len());
        let mut dense_edges = Vec::with_capacity(edges.len());
        for &(src, dst, data) in &edges {
            if src == dst {
                return Err(Error::SelfLoop { src, dst });
            }
            let (Some(&s), Some(&d)) = (index.get(&src), index.get(&dst)) else {
                return Err(Error::DanglingEdge { src, dst });
            };
            if !(data.is_finite() && data >= 0.0) {
                return Err(Error::InvalidData { src, dst, data });
            }
            if !seen.insert((s, d)) {
                return Err(Error::DuplicateEdge { src, dst });
            }
            dense_edges.push(Edge { src: s, dst: d, data });
        }
        dense_edges.sort_by_key(|e| (e.src, e.dst));

        let n = tasks.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for (i, e) in dense_edges.iter().enumerate() {
            succs[e.src.index()].push(EdgeId(i));
            preds[e.dst.index()].push(EdgeId(i));
        }
        for list in &mut preds {
            list.sort_by_key(|&id| dense_edges[id.index()].src);
        }

        let tasks: Vec<Task> = tasks.into_iter().map(|(label, work)| Task { label, work }).collect();
        let topo = kahn_order(n, &dense_edges, &succs);
        if topo.len() < n {
            let placed: HashSet<TaskId> = topo.iter().copied().collect();
            let stuck = (0..n).find(|i| !placed.contains(&TaskId(*i))).unwrap();
            return Err(Error::Cycle(tasks[stuck].label));
        }

        Ok(Workflow { tasks, edges: dense_edges, preds, succs, topo })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id.index()]
    }

    pub fn task_ids(&self) -> impl Iterator<Item = TaskId> + '_ {
        (0..self.tasks.len()).map(TaskId)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.index()]
    }

    /// Incoming edges of `v`, ascending by source task id.
    pub fn in_edges(&self, v: TaskId) -> &[EdgeId] {
        &self.preds[v.index()]
    }

    /// Outgoing edges of `v`, ascending by destination task id.
    pub fn out_edges(&self, v: TaskId) -> &[EdgeId] {
        &self.succs[v.index()]
    }

    pub fn successors(&self, v: TaskId) -> impl Iterator<Item = TaskId> + '_ {
        self.succs[v.index()].iter().map(|&e| self.edges[e.index()].dst)
    }

    pub fn predecessors(&self, v: TaskId) -> impl Iterator<Item = TaskId> + '_ {
        self.preds[v.index()].iter().map(|&e| self.edges[e.index()].src)
    }

    pub fn find_edge(&self, src: TaskId, dst: TaskId) -> Option<EdgeId> {
        self.succs[src.index()].iter().copied().find(|&e| self.edges[e.index()].dst == dst)
    }

    pub fn task_by_label(&self, label: i64) -> Option<TaskId> {
        self.tasks.binary_search_by_key(&label, |t| t.label).ok().map(TaskId)
    }

    /// Topological order with ties broken by ascending id.
    pub fn topological_order(&self) -> &[TaskId] {
        &self.topo
    }

    pub fn to_doc(&self) -> WorkflowDoc {
        WorkflowDoc {
            tasks: self.tasks.iter().map(|t| TaskDoc { id: t.label, work: t.work }).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc {
                    src: self.tasks[e.src.index()].label,
                    dst: self.tasks[e.dst.index()].label,
                    data: e.data,
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: WorkflowDoc) -> Result<Self> {
        Workflow::new(
            doc.tasks.into_iter().map(|t| (t.id, t.work)).collect(),
            doc.edges.into_iter().map(|e| (e.src, e.dst, e.data)).collect(),
        )
    }
}

fn kahn_order(n: usize, edges: &[Edge], succs: &[Vec<EdgeId>]) -> Vec<TaskId> {
    let mut indegree = vec![0usize; n];
    for e in edges {
        indegree[e.dst.index()] += 1;
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(TaskId(v));
        for &e in &succs[v] {
            let w = edges[e.index()].dst.index();
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(Reverse(w));
            }
        }
    }
    order
}

/// Parses and validates a workflow JSON document.
pub fn load_workflow(bytes: &[u8]) -> Result<Workflow> {
    let doc: WorkflowDoc = serde_json::from_slice(bytes)?;
    Workflow::from_doc(doc)
}

/// Deterministic topological order (ties by ascending id).
pub fn topological_order(w: &Workflow) -> Vec<TaskId> {
    w.topological_order().to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDoc {
    pub id: i64,
    pub work: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub src: i64,
    pub dst: i64,
    pub data: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowDoc {
    pub tasks: Vec<TaskDoc>,
    #[serde(default)]
    pub edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Processor {
    #[serde(rename = "id")]
    pub label: i64,
    pub speed: f64,
    pub idle_power: f64,
    pub work_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommChannel {
    pub src: ProcId,
    pub dst: ProcId,
    pub idle_power: f64,
    pub work_power: f64,
    pub bandwidth: f64,
}

/// Normal-distribution parameters for generated link powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkPowerStats {
    pub idle_mean: f64,
    pub idle_std: f64,
    pub work_mean: f64,
    pub work_std: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Heterogeneous processors plus one serialized channel per ordered pair.
///
/// Channel `(s, d)` lives at index `s * (P - 1) + d'` where `d'` skips the
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    processors: Vec<Processor>,
    channels: Vec<CommChannel>,
}

impl Cluster {
    pub fn new(processors: Vec<Processor>, channels: Vec<CommChannel>) -> Result<Self> {
        // channel endpoints index into `processors`, so the caller fixes the order
        for w in processors.windows(2) {
            if w[0].label >= w[1].label {
                return Err(Error::InvalidCluster(format!(
                    "processor ids must be unique and ascending ({} before {})",
                    w[0].label, w[1].label
                )));
            }
        }
        for p in &processors {
            if !(p.speed.is_finite() && p.speed > 0.0) {
                return Err(Error::InvalidCluster(format!("processor {} has non-positive speed {}", p.label, p.speed)));
            }
            if !(p.idle_power >= 0.0 && p.work_power >= 0.0) {
                return Err(Error::InvalidCluster(format!("processor {} has negative power", p.label)));
            }
        }
        let n = processors.len();
        let expected = n * n.saturating_sub(1);
        if channels.len() != expected {
            return Err(Error::InvalidCluster(format!(
                "expected {expected} channels for {n} processors, got {}",
                channels.len()
            )));
        }
        let mut slots: Vec<Option<CommChannel>> = vec![None; expected];
        for ch in channels {
            if ch.src == ch.dst || ch.src.index() >= n || ch.dst.index() >= n {
                return Err(Error::InvalidCluster(format!("bad channel endpoints ({}, {})", ch.src, ch.dst)));
            }
            if !(ch.bandwidth.is_finite() && ch.bandwidth > 0.0) {
                return Err(Error::InvalidCluster("channel bandwidth must be positive".into()));
            }
            if !(ch.idle_power >= 0.0 && ch.work_power >= 0.0) {
                return Err(Error::InvalidCluster("channel power must be non-negative".into()));
            }
            let slot = channel_slot(n, ch.src, ch.dst);
            if slots[slot].is_some() {
                return Err(Error::InvalidCluster(format!("duplicate channel ({}, {})", ch.src, ch.dst)));
            }
            slots[slot] = Some(ch);
        }
        let channels = slots.into_iter().map(Option::unwrap).collect();
        Ok(Cluster { processors, channels })
    }

    /// Cluster whose channels all share the same powers and bandwidth.
    pub fn with_uniform_links(
        processors: Vec<Processor>,
        idle_power: f64,
        work_power: f64,
        bandwidth: f64,
    ) -> Result<Self> {
        let n = processors.len();
        let mut channels = Vec::with_capacity(n * n.saturating_sub(1));
        for s in 0..n {
            for d in 0..n {
                if s != d {
                    channels.push(CommChannel { src: ProcId(s), dst: ProcId(d), idle_power, work_power, bandwidth });
                }
            }
        }
        Cluster::new(processors, channels)
    }

    pub fn num_procs(&self) -> usize {
        self.processors.len()
    }

    pub fn processors(&self) -> &[Processor] {
        &self.processors
    }

    pub fn proc(&self, p: ProcId) -> &Processor {
        &self.processors[p.index()]
    }

    pub fn proc_ids(&self) -> impl Iterator<Item = ProcId> {
        (0..self.processors.len()).map(ProcId)
    }

    pub fn channels(&self) -> &[CommChannel] {
        &self.channels
    }

    pub fn channel(&self, c: ChannelId) -> &CommChannel {
        &self.channels[c.index()]
    }

    /// Channel carrying messages from `src` to `dst`. Panics if `src == dst`.
    pub fn channel_between(&self, src: ProcId, dst: ProcId) -> ChannelId {
        assert_ne!(src, dst, "no channel from a processor to itself");
        ChannelId(channel_slot(self.processors.len(), src, dst))
    }

    /// Processors plus channels: P + P(P-1) = P².
    pub fn resource_count(&self) -> usize {
        self.processors.len() + self.channels.len()
    }

    pub fn proc_by_label(&self, label: i64) -> Option<ProcId> {
        self.processors.binary_search_by_key(&label, |p| p.label).ok().map(ProcId)
    }

    pub fn total_idle_power(&self) -> f64 {
        self.processors.iter().map(|p| p.idle_power).sum::<f64>()
            + self.channels.iter().map(|c| c.idle_power).sum::<f64>()
    }

    pub fn total_work_power(&self) -> f64 {
        self.processors.iter().map(|p| p.work_power).sum::<f64>()
            + self.channels.iter().map(|c| c.work_power).sum::<f64>()
    }

    pub fn mean_speed(&self) -> f64 {
        self.processors.iter().map(|p| p.speed).sum::<f64>() / self.processors.len() as f64
    }

    pub fn to_doc(&self) -> ClusterDoc {
        ClusterDoc {
            processors: self.processors.clone(),
            link_power: None,
            channels: Some(
                self.channels
                    .iter()
                    .map(|c| ChannelDoc {
                        src: self.processors[c.src.index()].label,
                        dst: self.processors[c.dst.index()].label,
                        idle_power: c.idle_power,
                        work_power: c.work_power,
                        bandwidth: c.bandwidth,
                    })
                    .collect(),
            ),
        }
    }

    pub fn from_doc(doc: ClusterDoc) -> Result<Self> {
        let mut processors = doc.processors;
        processors.sort_by_key(|p| p.label);
        match (doc.link_power, doc.channels) {
            (Some(stats), None) => {
                let channels = crate::genlab::sample_channels(processors.len(), &stats);
                Cluster::new(processors, channels)
            }
            (None, Some(list)) => {
                let lookup = |label: i64| {
                    processors
                        .binary_search_by_key(&label, |p| p.label)
                        .map(ProcId)
                        .map_err(|_| Error::InvalidCluster(format!("channel references unknown processor {label}")))
                };
                let mut channels = Vec::with_capacity(list.len());
                for c in list {
                    channels.push(CommChannel {
                        src: lookup(c.src)?,
                        dst: lookup(c.dst)?,
                        idle_power: c.idle_power,
                        work_power: c.work_power,
                        bandwidth: c.bandwidth,
                    });
                }
                Cluster::new(processors, channels)
            }
            // A single processor needs no channels at all.
            (None, None) if processors.len() <= 1 => Cluster::new(processors, Vec::new()),
            _ => Err(Error::InvalidCluster("exactly one of `link_power` or `channels` must be given".into())),
        }
    }
}

fn channel_slot(n: usize, src: ProcId, dst: ProcId) -> usize {
    let (s, d) = (src.index(), dst.index());
    s * (n - 1) + if d > s { d - 1 } else { d }
}

fn default_bandwidth() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDoc {
    pub src: i64,
    pub dst: i64,
    pub idle_power: f64,
    pub work_power: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDoc {
    pub processors: Vec<Processor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_power: Option<LinkPowerStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<ChannelDoc>>,
}

pub fn load_cluster(bytes: &[u8]) -> Result<Cluster> {
    Cluster::from_doc(serde_json::from_slice(bytes)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub begin: f64,
    pub end: f64,
    pub budget: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.end - self.begin
    }

    pub fn contains(&self, t: f64) -> bool {
        self.begin <= t && t < self.end
    }
}

/// Contiguous constant-budget intervals tiling `[0, horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    intervals: Vec<Interval>,
}

impl PowerProfile {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        let Some(first) = intervals.first() else {
            return Err(Error::InvalidProfile("no intervals".into()));
        };
        if first.begin.abs() > EPS {
            return Err(Error::InvalidProfile(format!("first interval begins at {} instead of 0", first.begin)));
        }
        for (j, iv) in intervals.iter().enumerate() {
            if !(iv.end.is_finite() && iv.end > iv.begin) {
                return Err(Error::InvalidProfile(format!("interval {j} has end <= begin")));
            }
            if !(iv.budget.is_finite() && iv.budget >= 0.0) {
                return Err(Error::InvalidProfile(format!("interval {j} has a negative budget")));
            }
            if j > 0 && (iv.begin - intervals[j - 1].end).abs() > EPS {
                return Err(Error::InvalidProfile(format!(
                    "interval {j} begins at {} but interval {} ends at {}",
                    iv.begin,
                    j - 1,
                    intervals[j - 1].end
                )));
            }
        }
        Ok(PowerProfile { intervals })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn horizon(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.end)
    }

    /// Index of the interval containing `t`, clamped to the first/last one.
    pub fn interval_index(&self, t: f64) -> usize {
        let j = self.intervals.partition_point(|iv| iv.end <= t);
        j.min(self.intervals.len() - 1)
    }

    pub fn to_doc(&self) -> ProfileDoc {
        ProfileDoc { intervals: self.intervals.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDoc {
    pub intervals: Vec<Interval>,
}

pub fn load_profile(bytes: &[u8]) -> Result<PowerProfile> {
    let doc: ProfileDoc = serde_json::from_slice(bytes)?;
    PowerProfile::new(doc.intervals)
}

/// Everything a scheduler needs: workflow, platform, green power and deadline.
#[derive(Debug, Clone)]
pub struct Instance {
    pub workflow: Workflow,
    pub cluster: Cluster,
    pub profile: PowerProfile,
    pub deadline: f64,
}

impl Instance {
    pub fn new(workflow: Workflow, cluster: Cluster, profile: PowerProfile, deadline: f64) -> Result<Self> {
        if cluster.num_procs() == 0 {
            return Err(Error::InvalidInstance("cluster has no processors".into()));
        }
        if !(deadline.is_finite() && deadline > 0.0) {
            return Err(Error::InvalidInstance(format!("deadline {deadline} must be positive")));
        }
        if deadline > profile.horizon() + EPS {
            return Err(Error::InvalidInstance(format!(
                "deadline {deadline} exceeds profile horizon {}",
                profile.horizon()
            )));
        }
        Ok(Instance { workflow, cluster, profile, deadline })
    }

    pub fn with_deadline(&self, deadline: f64) -> Result<Self> {
        Instance::new(self.workflow.clone(), self.cluster.clone(), self.profile.clone(), deadline)
    }
}

#[inline]
pub fn task_duration(v: &Task, p: &Processor) -> f64 {
    v.work / p.speed
}

/// Task → processor assignment, total over the workflow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping(pub Vec<ProcId>);

impl Mapping {
    pub fn proc_of(&self, v: TaskId) -> ProcId {
        self.0[v.index()]
    }
}

/// Zero when both endpoints share a processor, `data / β` otherwise.
pub fn comm_duration(e: &Edge, mapping: &Mapping, cluster: &Cluster) -> f64 {
    let (ps, pd) = (mapping.proc_of(e.src), mapping.proc_of(e.dst));
    if ps == pd {
        0.0
    } else {
        e.data / cluster.channel(cluster.channel_between(ps, pd)).bandwidth
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskPlacement {
    pub proc: ProcId,
    pub start: f64,
    pub duration: f64,
}

impl TaskPlacement {
    pub fn finish(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommPlacement {
    pub channel: ChannelId,
    pub start: f64,
    pub duration: f64,
}

impl CommPlacement {
    pub fn finish(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Entity {
    Task(TaskId),
    Comm(EdgeId),
}

impl Entity {
    pub fn to_doc(self, workflow: &Workflow) -> EntityDoc {
        match self {
            Entity::Task(v) => EntityDoc::Task(workflow.task(v).label),
            Entity::Comm(e) => {
                let e = workflow.edge(e);
                EntityDoc::Comm([workflow.task(e.src).label, workflow.task(e.dst).label])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resource {
    Proc(ProcId),
    Channel(ChannelId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledItem {
    pub entity: Entity,
    pub resource: Resource,
    pub start: f64,
    pub duration: f64,
}

impl ScheduledItem {
    pub fn finish(&self) -> f64 {
        self.start + self.duration
    }
}

/// A mapping plus start times for every task and every cross-processor
/// communication. Co-located communications carry no placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub tasks: Vec<TaskPlacement>,
    pub comms: Vec<Option<CommPlacement>>,
}

impl Schedule {
    pub fn mapping(&self) -> Mapping {
        Mapping(self.tasks.iter().map(|t| t.proc).collect())
    }

    pub fn task(&self, v: TaskId) -> &TaskPlacement {
        &self.tasks[v.index()]
    }

    pub fn finish(&self, v: TaskId) -> f64 {
        self.tasks[v.index()].finish()
    }

    pub fn items(&self) -> impl Iterator<Item = ScheduledItem> + '_ {
        let tasks = self.tasks.iter().enumerate().map(|(i, t)| ScheduledItem {
            entity: Entity::Task(TaskId(i)),
            resource: Resource::Proc(t.proc),
            start: t.start,
            duration: t.duration,
        });
        let comms = self.comms.iter().enumerate().filter_map(|(i, c)| {
            c.map(|c| ScheduledItem {
                entity: Entity::Comm(EdgeId(i)),
                resource: Resource::Channel(c.channel),
                start: c.start,
                duration: c.duration,
            })
        });
        tasks.chain(comms)
    }

    pub fn makespan(&self) -> f64 {
        crate::evaluate::makespan(self)
    }

    pub fn to_doc(&self, workflow: &Workflow, cluster: &Cluster) -> ScheduleDoc {
        let task_label = |v: TaskId| workflow.task(v).label;
        let proc_label = |p: ProcId| cluster.proc(p).label;
        let mapping = self.tasks.iter().enumerate().map(|(i, t)| (task_label(TaskId(i)), proc_label(t.proc))).collect();
        let items = self
            .items()
            .map(|it| {
                let entity = it.entity.to_doc(workflow);
                let resource = match it.resource {
                    Resource::Proc(p) => ResourceDoc::Proc(proc_label(p)),
                    Resource::Channel(c) => {
                        let c = cluster.channel(c);
                        ResourceDoc::Channel([proc_label(c.src), proc_label(c.dst)])
                    }
                };
                ItemDoc { entity, resource, start: it.start, duration: it.duration }
            })
            .collect();
        ScheduleDoc { mapping, items }
    }

    /// Rebuilds a schedule from its document, checking that it is consistent
    /// with the workflow and cluster (mapping, resources and durations).
    /// Timing constraints are left to [`crate::evaluate::validate_schedule`].
    pub fn from_doc(doc: &ScheduleDoc, workflow: &Workflow, cluster: &Cluster) -> Result<Self> {
        let mismatch = |msg: String| Error::ScheduleMismatch(msg);
        let proc =
            |label: i64| cluster.proc_by_label(label).ok_or_else(|| mismatch(format!("unknown processor {label}")));
        let task = |label: i64| workflow.task_by_label(label).ok_or_else(|| mismatch(format!("unknown task {label}")));

        let mut mapping = vec![None; workflow.len()];
        for (&t, &p) in &doc.mapping {
            mapping[task(t)?.index()] = Some(proc(p)?);
        }
        let mapping: Vec<ProcId> = mapping
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| mismatch(format!("task {} is unmapped", workflow.tasks()[i].label))))
            .collect::<Result<_>>()?;

        let mut tasks: Vec<Option<TaskPlacement>> = vec![None; workflow.len()];
        let mut comms: Vec<Option<CommPlacement>> = vec![None; workflow.edges().len()];
        for item in &doc.items {
            let close = |a: f64, b: f64| (a - b).abs() <= EPS * a.abs().max(b.abs()).max(1.0);
            match (&item.entity, &item.resource) {
                (EntityDoc::Task(t), ResourceDoc::Proc(p)) => {
                    let v = task(*t)?;
                    let p = proc(*p)?;
                    if mapping[v.index()] != p {
                        return Err(mismatch(format!("task {t} item disagrees with the mapping")));
                    }
                    let expected = task_duration(workflow.task(v), cluster.proc(p));
                    if !close(item.duration, expected) {
                        return Err(mismatch(format!("task {t} has duration {} but needs {expected}", item.duration)));
                    }
                    if tasks[v.index()]
                        .replace(TaskPlacement { proc: p, start: item.start, duration: expected })
                        .is_some()
                    {
                        return Err(mismatch(format!("task {t} scheduled twice")));
                    }
                }
                (EntityDoc::Comm([s, d]), ResourceDoc::Channel([ps, pd])) => {
                    let (s_id, d_id) = (task(*s)?, task(*d)?);
                    let e = workflow.find_edge(s_id, d_id).ok_or_else(|| mismatch(format!("no edge {s} -> {d}")))?;
                    let (ps, pd) = (proc(*ps)?, proc(*pd)?);
                    if mapping[s_id.index()] != ps || mapping[d_id.index()] != pd || ps == pd {
                        return Err(mismatch(format!("communication {s} -> {d} is on the wrong channel")));
                    }
                    let channel = cluster.channel_between(ps, pd);
                    let expected = workflow.edge(e).data / cluster.channel(channel).bandwidth;
                    if !close(item.duration, expected) {
                        return Err(mismatch(format!(
                            "communication {s} -> {d} has duration {} but needs {expected}",
                            item.duration
                        )));
                    }
                    if comms[e.index()]
                        .replace(CommPlacement { channel, start: item.start, duration: expected })
                        .is_some()
                    {
                        return Err(mismatch(format!("communication {s} -> {d} scheduled twice")));
                    }
                }
                _ => return Err(mismatch("entity kind does not match resource kind".into())),
            }
        }
        let tasks: Vec<TaskPlacement> = tasks
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| mismatch(format!("task {} has no item", workflow.tasks()[i].label))))
            .collect::<Result<_>>()?;
        for (i, e) in workflow.edges().iter().enumerate() {
            let cross = tasks[e.src.index()].proc != tasks[e.dst.index()].proc;
            if cross != comms[i].is_some() {
                let (s, d) = (workflow.task(e.src).label, workflow.task(e.dst).label);
                return Err(mismatch(if cross {
                    format!("cross-processor communication {s} -> {d} has no item")
                } else {
                    format!("co-located communication {s} -> {d} must not have an item")
                }));
            }
        }
        Ok(Schedule { tasks, comms })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityDoc {
    Task(i64),
    Comm([i64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceDoc {
    Proc(i64),
    Channel([i64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDoc {
    pub entity: EntityDoc,
    pub resource: ResourceDoc,
    pub start: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDoc {
    pub mapping: BTreeMap<i64, i64>,
    pub items: Vec<ItemDoc>,
}
