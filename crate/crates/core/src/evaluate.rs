//! Validity checking, makespan and the carbon-cost objective.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    Cluster, Entity, EntityDoc, Instance, PowerProfile, Resource, Schedule, ScheduledItem, Workflow, EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    NegativeStart,
    ProcessorOverlap,
    ChannelOverlap,
    PrecedenceSameProc,
    PrecedenceCrossProc,
    /// Informational: the makespan exceeds the deadline.
    DeadlineExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub entities: Vec<Entity>,
    pub detail: String,
}

impl Violation {
    /// Label-based form for reports.
    pub fn to_doc(&self, workflow: &Workflow) -> ViolationDoc {
        ViolationDoc {
            kind: self.kind,
            entities: self.entities.iter().map(|e| e.to_doc(workflow)).collect(),
            detail: self.detail.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationDoc {
    pub kind: ViolationKind,
    pub entities: Vec<EntityDoc>,
    pub detail: String,
}

/// True when `violations` contains nothing but the informational deadline kind.
pub fn is_valid(violations: &[Violation]) -> bool {
    violations.iter().all(|v| v.kind == ViolationKind::DeadlineExceeded)
}

/// Checks non-negativity, exclusive resource use and precedence (same- and
/// cross-processor). A makespan beyond the deadline is reported as the
/// informational [`ViolationKind::DeadlineExceeded`].
pub fn validate_schedule(s: &Schedule, inst: &Instance) -> Vec<Violation> {
    let w = &inst.workflow;
    let c = &inst.cluster;
    let mut out = Vec::new();
    assert_eq!(s.tasks.len(), w.len(), "schedule does not cover the workflow");

    for item in s.items() {
        if item.start < -EPS {
            out.push(Violation {
                kind: ViolationKind::NegativeStart,
                entities: vec![item.entity],
                detail: format!("{} starts at {}", describe(inst, item.entity), item.start),
            });
        }
    }

    let mut by_resource: Vec<Vec<ScheduledItem>> = vec![Vec::new(); c.resource_count()];
    for item in s.items() {
        let slot = match item.resource {
            Resource::Proc(p) => p.index(),
            Resource::Channel(ch) => c.num_procs() + ch.index(),
        };
        by_resource[slot].push(item);
    }
    for items in &mut by_resource {
        items.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.finish().total_cmp(&b.finish())));
        let mut latest: Option<ScheduledItem> = None;
        for &item in items.iter() {
            if item.duration <= EPS {
                continue;
            }
            if let Some(prev) = latest {
                if item.start < prev.finish() - EPS {
                    let kind = match item.resource {
                        Resource::Proc(_) => ViolationKind::ProcessorOverlap,
                        Resource::Channel(_) => ViolationKind::ChannelOverlap,
                    };
                    out.push(Violation {
                        kind,
                        entities: vec![prev.entity, item.entity],
                        detail: format!(
                            "{} [{}, {}) overlaps {} [{}, {})",
                            describe(inst, prev.entity),
                            prev.start,
                            prev.finish(),
                            describe(inst, item.entity),
                            item.start,
                            item.finish()
                        ),
                    });
                }
            }
            if latest.map_or(true, |prev| item.finish() > prev.finish()) {
                latest = Some(item);
            }
        }
    }

    for (i, e) in w.edges().iter().enumerate() {
        let edge = Entity::Comm(crate::model::EdgeId(i));
        let (src, dst) = (s.task(e.src), s.task(e.dst));
        let ends = vec![Entity::Task(e.src), Entity::Task(e.dst)];
        if src.proc == dst.proc {
            if src.finish() > dst.start + EPS {
                out.push(Violation {
                    kind: ViolationKind::PrecedenceSameProc,
                    entities: ends,
                    detail: format!(
                        "{} finishes at {} after {} starts at {}",
                        describe(inst, Entity::Task(e.src)),
                        src.finish(),
                        describe(inst, Entity::Task(e.dst)),
                        dst.start
                    ),
                });
            } else if s.comms[i].is_some() {
                out.push(Violation {
                    kind: ViolationKind::PrecedenceSameProc,
                    entities: vec![edge],
                    detail: format!("co-located {} occupies a channel", describe(inst, edge)),
                });
            }
            continue;
        }
        let Some(comm) = s.comms[i] else {
            out.push(Violation {
                kind: ViolationKind::PrecedenceCrossProc,
                entities: vec![edge],
                detail: format!("{} crosses processors but is not scheduled", describe(inst, edge)),
            });
            continue;
        };
        let expected = c.channel_between(src.proc, dst.proc);
        let detail = if comm.channel != expected {
            Some(format!("{} is on the wrong channel", describe(inst, edge)))
        } else if src.finish() > comm.start + EPS {
            Some(format!(
                "{} starts at {} before its source finishes at {}",
                describe(inst, edge),
                comm.start,
                src.finish()
            ))
        } else if comm.finish() > dst.start + EPS {
            Some(format!(
                "{} arrives at {} after its destination starts at {}",
                describe(inst, edge),
                comm.finish(),
                dst.start
            ))
        } else {
            None
        };
        if let Some(detail) = detail {
            out.push(Violation {
                kind: ViolationKind::PrecedenceCrossProc,
                entities: vec![Entity::Task(e.src), edge, Entity::Task(e.dst)],
                detail,
            });
        }
    }

    let ms = makespan(s);
    if ms > inst.deadline + EPS {
        out.push(Violation {
            kind: ViolationKind::DeadlineExceeded,
            entities: Vec::new(),
            detail: format!("makespan {ms} exceeds deadline {}", inst.deadline),
        });
    }
    out
}

fn describe(inst: &Instance, entity: Entity) -> String {
    let w = &inst.workflow;
    match entity {
        Entity::Task(v) => format!("task {}", w.task(v).label),
        Entity::Comm(e) => {
            let e = w.edge(e);
            format!("communication {} -> {}", w.task(e.src).label, w.task(e.dst).label)
        }
    }
}

/// Latest finish over all items, 0 for an empty schedule.
pub fn makespan(s: &Schedule) -> f64 {
    s.items().map(|it| it.finish()).fold(0.0, f64::max)
}

/// A sub-interval on which both the green budget and the consumed power are constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinedInterval {
    pub begin: f64,
    pub end: f64,
    pub budget: f64,
    pub total_power: f64,
}

impl RefinedInterval {
    pub fn len(&self) -> f64 {
        self.end - self.begin
    }

    /// Carbon cost accrued on this interval.
    pub fn cost(&self) -> f64 {
        (self.total_power - self.budget).max(0.0) * self.len()
    }

    pub fn over_budget(&self) -> bool {
        self.total_power > self.budget + EPS
    }
}

/// Splits `[0, end)` at every profile bound and every item start/finish and
/// reports the consumed power on each piece. Every resource draws its idle
/// power throughout; a resource adds its work power on `[start, finish)`.
///
/// Time beyond the profile horizon is given a budget of zero.
pub fn refined_intervals(s: &Schedule, cluster: &Cluster, profile: &PowerProfile, end: f64) -> Vec<RefinedInterval> {
    if end <= EPS {
        return Vec::new();
    }

    let mut points: Vec<f64> = Vec::with_capacity(2 * s.tasks.len() + profile.intervals().len() + 2);
    points.push(0.0);
    points.push(end);
    points.extend(profile.intervals().iter().map(|iv| iv.end).filter(|&t| t < end));
    for item in s.items() {
        for t in [item.start, item.finish()] {
            if t > 0.0 && t < end {
                points.push(t);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    let mut bounds: Vec<f64> = Vec::with_capacity(points.len());
    for t in points {
        match bounds.last() {
            Some(&last) if t - last <= EPS => {}
            _ => bounds.push(t),
        }
    }
    // the final point must be `end` itself
    if let Some(last) = bounds.last_mut() {
        *last = end;
    }
    let pieces = bounds.len() - 1;
    if pieces == 0 {
        return Vec::new();
    }

    // snap a time onto the nearest bound index
    let snap = |t: f64| -> usize {
        let i = bounds.partition_point(|&b| b < t - EPS);
        i.min(pieces)
    };
    let mut delta_power = vec![0.0f64; pieces + 1];
    let mut delta_count = vec![0i64; pieces + 1];
    for item in s.items() {
        if item.duration <= EPS {
            continue;
        }
        let power = match item.resource {
            Resource::Proc(p) => cluster.proc(p).work_power,
            Resource::Channel(c) => cluster.channel(c).work_power,
        };
        let (a, b) = (snap(item.start.max(0.0)), snap(item.finish().min(end)));
        if a < b {
            delta_power[a] += power;
            delta_power[b] -= power;
            delta_count[a] += 1;
            delta_count[b] -= 1;
        }
    }

    let base = cluster.total_idle_power();
    let intervals = profile.intervals();
    let mut busy = 0.0;
    let mut active = 0i64;
    let mut out = Vec::with_capacity(pieces);
    for i in 0..pieces {
        busy += delta_power[i];
        active += delta_count[i];
        if active == 0 {
            // keep idle stretches exact
            busy = 0.0;
        }
        let begin = bounds[i];
        let budget =
            if begin < profile.horizon() - EPS { intervals[profile.interval_index(begin)].budget } else { 0.0 };
        out.push(RefinedInterval { begin, end: bounds[i + 1], budget, total_power: base + busy });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalCost {
    #[serde(flatten)]
    pub interval: RefinedInterval,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarbonReport {
    pub total_cost: f64,
    pub per_interval: Vec<IntervalCost>,
    pub integration_end: f64,
    /// Set when the makespan exceeds the deadline, in which case the cost is
    /// integrated up to the makespan.
    pub deadline_exceeded: bool,
}

/// Integrates the excess of consumed power over the green budget on
/// `[0, D)`, or on `[0, makespan)` when the deadline is missed.
pub fn carbon_cost(s: &Schedule, inst: &Instance) -> Result<CarbonReport> {
    let ms = makespan(s);
    let deadline_exceeded = ms > inst.deadline + EPS;
    let integration_end = if deadline_exceeded { ms } else { inst.deadline };
    let horizon = inst.profile.horizon();
    if integration_end > horizon + EPS {
        return Err(Error::HorizonExceeded { end: integration_end, horizon });
    }
    let per_interval: Vec<IntervalCost> =
        refined_intervals(s, &inst.cluster, &inst.profile, integration_end.min(horizon))
            .into_iter()
            .map(|interval| IntervalCost { cost: interval.cost(), interval })
            .collect();
    let total_cost = per_interval.iter().map(|p| p.cost).sum();
    Ok(CarbonReport { total_cost, per_interval, integration_end, deadline_exceeded })
}

/// Cost on `[0, max(D, makespan))` without the horizon check; time past the
/// horizon has no green budget. Used to rank intermediate schedules.
pub(crate) fn extended_cost(s: &Schedule, inst: &Instance) -> f64 {
    let end = makespan(s).max(inst.deadline);
    refined_intervals(s, &inst.cluster, &inst.profile, end).iter().map(RefinedInterval::cost).sum()
}
