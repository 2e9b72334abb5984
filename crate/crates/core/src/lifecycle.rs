//! Service lifecycle state machine, per-state resource footprints and
//! in-flight transition tracking for one VNF instance at one EC.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::LifecycleError;

/// Slack when comparing simulated timestamps.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifecycleState {
    Descriptor,
    Source,
    Image,
    Stopped,
    Paused,
    Running,
}

impl LifecycleState {
    pub const ALL: [LifecycleState; 6] = [
        LifecycleState::Descriptor,
        LifecycleState::Source,
        LifecycleState::Image,
        LifecycleState::Stopped,
        LifecycleState::Paused,
        LifecycleState::Running,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleState::Descriptor => "descriptor",
            LifecycleState::Source => "source",
            LifecycleState::Image => "image",
            LifecycleState::Stopped => "stopped",
            LifecycleState::Paused => "paused",
            LifecycleState::Running => "running",
        }
    }
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceVector {
    pub cpu_cores: f64,
    pub mem_gb: f64,
    pub disk_gb: f64,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector {
        cpu_cores: 0.0,
        mem_gb: 0.0,
        disk_gb: 0.0,
    };

    pub fn new(cpu_cores: f64, mem_gb: f64, disk_gb: f64) -> Self {
        Self {
            cpu_cores,
            mem_gb,
            disk_gb,
        }
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.cpu_cores + o.cpu_cores, self.mem_gb + o.mem_gb, self.disk_gb + o.disk_gb)
    }

    pub fn max(self, o: Self) -> Self {
        Self::new(
            self.cpu_cores.max(o.cpu_cores),
            self.mem_gb.max(o.mem_gb),
            self.disk_gb.max(o.disk_gb),
        )
    }

    /// Componentwise `self <= cap`, with a small tolerance for summed floats.
    pub fn fits_within(self, cap: Self) -> bool {
        const EPS: f64 = 1e-9;
        self.cpu_cores <= cap.cpu_cores + EPS
            && self.mem_gb <= cap.mem_gb + EPS
            && self.disk_gb <= cap.disk_gb + EPS
    }

    /// Mean fraction of `cap` taken over the dimensions `cap` provides.
    pub fn share_of(self, cap: Self) -> f64 {
        let parts = [
            (self.cpu_cores, cap.cpu_cores),
            (self.mem_gb, cap.mem_gb),
            (self.disk_gb, cap.disk_gb),
        ];
        let (sum, n) = parts
            .iter()
            .filter(|(_, c)| *c > 0.0)
            .fold((0.0, 0), |(s, n), (x, c)| (s + x / c, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

pub fn footprint(state: LifecycleState, r_v: ResourceVector) -> ResourceVector {
    use LifecycleState::*;
    match state {
        Descriptor => ResourceVector::ZERO,
        Source | Image | Stopped => ResourceVector::new(0.0, 0.0, r_v.disk_gb),
        Paused => ResourceVector::new(0.0, r_v.mem_gb, r_v.disk_gb),
        Running => r_v,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub download_s: f64,
    pub build_s: f64,
    pub deploy_s: f64,
    pub start_s: f64,
    pub stop_s: f64,
    pub pause_s: f64,
    pub resume_s: f64,
}

impl Default for TransitionTable {
    fn default() -> Self {
        Self {
            download_s: 19.2,
            build_s: 0.0,
            deploy_s: 0.1,
            start_s: 0.53,
            stop_s: 0.53,
            pause_s: 0.096,
            resume_s: 0.096,
        }
    }
}

impl TransitionTable {
    /// Duration of a single legal edge, `None` when the edge does not exist.
    pub fn edge(&self, from: LifecycleState, to: LifecycleState) -> Option<f64> {
        use LifecycleState::*;
        match (from, to) {
            (Descriptor, Source) => Some(self.download_s),
            (Source, Image) => Some(self.build_s),
            (Image, Stopped) => Some(self.deploy_s),
            (Stopped, Running) => Some(self.start_s),
            (Running, Stopped) => Some(self.stop_s),
            (Running, Paused) => Some(self.pause_s),
            (Paused, Running) => Some(self.resume_s),
            (Stopped | Image | Source, Descriptor) => Some(0.0),
            _ => None,
        }
    }

    /// Fastest chain of states from `from` to `to`, both included.
    ///
    /// Descriptor may only appear at either end: an instance that went back
    /// to its descriptor has been deleted, so re-provisioning is a new plan.
    pub fn path(&self, from: LifecycleState, to: LifecycleState) -> Option<Vec<LifecycleState>> {
        if from == to {
            return Some(vec![from]);
        }
        let mut best: Option<(f64, Vec<LifecycleState>)> = None;
        let mut stack = vec![from];
        self.search(to, 0.0, &mut stack, &mut best);
        best.map(|(_, p)| p)
    }

    fn search(
        &self,
        to: LifecycleState,
        elapsed: f64,
        stack: &mut Vec<LifecycleState>,
        best: &mut Option<(f64, Vec<LifecycleState>)>,
    ) {
        let here = *stack.last().unwrap();
        if here == to {
            let better = match best {
                None => true,
                Some((t, p)) => elapsed < *t - TIME_EPS || (elapsed <= *t + TIME_EPS && stack.len() < p.len()),
            };
            if better {
                *best = Some((elapsed, stack.clone()));
            }
            return;
        }
        if here == LifecycleState::Descriptor && stack.len() > 1 {
            return;
        }
        for next in LifecycleState::ALL {
            if stack.contains(&next) {
                continue;
            }
            if let Some(d) = self.edge(here, next) {
                stack.push(next);
                self.search(to, elapsed + d, stack, best);
                stack.pop();
            }
        }
    }

    pub fn is_legal(&self, from: LifecycleState, to: LifecycleState) -> bool {
        self.path(from, to).is_some()
    }

    pub fn next_hop(&self, from: LifecycleState, to: LifecycleState) -> Option<LifecycleState> {
        self.path(from, to).and_then(|p| p.get(1).copied())
    }

    pub fn path_time(&self, from: LifecycleState, to: LifecycleState) -> Option<f64> {
        let p = self.path(from, to)?;
        Some(p.windows(2).map(|w| self.edge(w[0], w[1]).unwrap()).sum())
    }

    pub fn time_to_running(&self, state: LifecycleState) -> f64 {
        self.path_time(state, LifecycleState::Running)
            .expect("running is reachable from every state")
    }

    /// Descriptor to Running, the longest provisioning chain.
    pub fn t_full(&self) -> f64 {
        self.time_to_running(LifecycleState::Descriptor)
    }

    /// Componentwise peak footprint along the path, endpoints included.
    pub fn peak_footprint(
        &self,
        from: LifecycleState,
        to: LifecycleState,
        r_v: ResourceVector,
    ) -> Option<ResourceVector> {
        let p = self.path(from, to)?;
        Some(p.into_iter().fold(ResourceVector::ZERO, |acc, s| acc.max(footprint(s, r_v))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub from: LifecycleState,
    pub to: LifecycleState,
    pub started_at: f64,
    pub completes_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub ec: usize,
    pub vnf: usize,
    pub state: LifecycleState,
    /// The hop currently in flight; `state` is frozen until it completes.
    pub transition: Option<Transition>,
    /// Where hops are chained towards; may differ from `state` between hops.
    pub target: LifecycleState,
    /// Users served; only populated while `state` is Running.
    pub attached_users: BTreeSet<usize>,
    /// Users assigned here while the instance is still on its way to Running.
    pub awaiting_users: BTreeSet<usize>,
    pub migrating_users: BTreeMap<usize, f64>,
}

impl InstanceRecord {
    pub fn new(ec: usize, vnf: usize) -> Self {
        Self {
            ec,
            vnf,
            state: LifecycleState::Descriptor,
            transition: None,
            target: LifecycleState::Descriptor,
            attached_users: BTreeSet::new(),
            awaiting_users: BTreeSet::new(),
            migrating_users: BTreeMap::new(),
        }
    }

    pub fn is_running(&self) -> bool {
        self.state == LifecycleState::Running
    }

    pub fn in_flight(&self) -> bool {
        self.transition.is_some()
    }

    /// State the instance is guaranteed to pass through next.
    pub fn committed_state(&self) -> LifecycleState {
        self.transition.map_or(self.state, |t| t.to)
    }

    /// Start moving towards `target`; the first hop begins at `now_s`.
    pub fn begin_transition(
        &mut self,
        target: LifecycleState,
        table: &TransitionTable,
        now_s: f64,
    ) -> Result<(), LifecycleError> {
        if let Some(t) = self.transition {
            return Err(LifecycleError::InFlight(t.to));
        }
        if !table.is_legal(self.state, target) {
            return Err(LifecycleError::IllegalTransition {
                from: self.state,
                to: target,
            });
        }
        self.target = target;
        self.start_next_hop(table, now_s);
        Ok(())
    }

    /// Like [`begin_transition`](Self::begin_transition), but an in-flight hop
    /// is left to finish and the new target is chained after it.
    pub fn set_target(
        &mut self,
        target: LifecycleState,
        table: &TransitionTable,
        now_s: f64,
    ) -> Result<(), LifecycleError> {
        if self.transition.is_none() {
            return self.begin_transition(target, table, now_s);
        }
        let from = self.committed_state();
        if !table.is_legal(from, target) {
            return Err(LifecycleError::IllegalTransition { from, to: target });
        }
        self.target = target;
        Ok(())
    }

    fn start_next_hop(&mut self, table: &TransitionTable, at_s: f64) {
        if let Some(next) = table.next_hop(self.state, self.target) {
            let d = table.edge(self.state, next).unwrap();
            self.transition = Some(Transition {
                from: self.state,
                to: next,
                started_at: at_s,
                completes_at: at_s + d,
            });
        }
    }

    /// Completes every hop and migration due by `now_s`, chaining hops at
    /// their exact completion instants. Returns the completed hops.
    pub fn tick(&mut self, now_s: f64, table: &TransitionTable) -> Vec<Transition> {
        let mut done = Vec::new();
        while let Some(t) = self.transition {
            if t.completes_at > now_s + TIME_EPS {
                break;
            }
            self.state = t.to;
            self.transition = None;
            done.push(t);
            self.start_next_hop(table, t.completes_at);
        }
        if self.state == LifecycleState::Running && !self.awaiting_users.is_empty() {
            self.attached_users.append(&mut self.awaiting_users);
        }
        self.migrating_users.retain(|_, until| *until > now_s + TIME_EPS);
        done
    }

    /// Footprint held right now: a hop in flight reserves both of its ends.
    pub fn reservation(&self, r_v: ResourceVector) -> ResourceVector {
        let here = footprint(self.state, r_v);
        match self.transition {
            Some(t) => here.max(footprint(t.to, r_v)),
            None => here,
        }
    }

    /// Peak footprint between now and reaching `target`.
    pub fn peak_towards(
        &self,
        target: LifecycleState,
        table: &TransitionTable,
        r_v: ResourceVector,
    ) -> Option<ResourceVector> {
        let rest = table.peak_footprint(self.committed_state(), target, r_v)?;
        Some(self.reservation(r_v).max(rest))
    }

    /// Peak footprint of the states still to be entered on the way to
    /// `target`; the footprint of `target` itself when already committed to it.
    pub fn peak_after(
        &self,
        target: LifecycleState,
        table: &TransitionTable,
        r_v: ResourceVector,
    ) -> Option<ResourceVector> {
        let path = table.path(self.committed_state(), target)?;
        if path.len() == 1 {
            return Some(footprint(target, r_v));
        }
        Some(path[1..].iter().fold(ResourceVector::ZERO, |acc, &s| acc.max(footprint(s, r_v))))
    }

    /// Simulated time until `target` is reached, counting the in-flight residual.
    pub fn time_to(&self, target: LifecycleState, table: &TransitionTable, now_s: f64) -> Option<f64> {
        match self.transition {
            Some(t) => {
                let rest = table.path_time(t.to, target)?;
                Some((t.completes_at - now_s).max(0.0) + rest)
            }
            None => table.path_time(self.state, target),
        }
    }

    pub fn time_to_running(&self, table: &TransitionTable, now_s: f64) -> f64 {
        self.time_to(LifecycleState::Running, table, now_s)
            .expect("running is reachable from every state")
    }

    pub fn is_migrating(&self, user: usize, at_s: f64) -> bool {
        self.migrating_users
            .get(&user)
            .is_some_and(|&until| at_s < until - TIME_EPS)
    }

    pub fn detach(&mut self, user: usize) {
        self.attached_users.remove(&user);
        self.awaiting_users.remove(&user);
        self.migrating_users.remove(&user);
    }
}

/// Remaining time along the forward path to Running, from a state or an in-flight hop.
pub fn time_to_running(
    state: LifecycleState,
    in_flight: Option<(LifecycleState, f64)>,
    table: &TransitionTable,
) -> f64 {
    match in_flight {
        Some((to, residual)) => residual + table.time_to_running(to),
        None => table.time_to_running(state),
    }
}
