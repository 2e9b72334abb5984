//! Fixed-step simulation loop over a pre-generated mobility trace.
//!
//! Each step: read attachments from the trace, complete due lifecycle hops,
//! run a placement epoch when the strategy asks for one, then emit and
//! classify the step's packets in time order.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::config::{RunConfig, Strategy};
use crate::error::SimError;
use crate::forecast::{
    current_demand_forecast, oracle_forecast, swaves_forecast, DemandForecast, ForecastParams, LikelihoodMap,
};
use crate::lifecycle::{InstanceRecord, LifecycleState, ResourceVector, Transition, TransitionTable};
use crate::mobility::{generate_trace, initial_users, MobilityConfig, MobilityTrace, UserState};
use crate::placement::{
    assign_users, check_static_epoch, pinned_instances, plan_targets, spill_over, AssignParams, PlacementParams, UserView,
};
use crate::queueing::{accumulate_link_loads, e2e_delay, migration_time, path_loads, LinkLoad};
use crate::radio::{wireless_service_rate_pps, RadioConfig};
use crate::rng::{stream, SimRng, Stream};
use crate::topology::{build_topology, NetworkModel};
use crate::error::PlacementError;

/// Everything that does not depend on the strategy: topology, users, trace.
#[derive(Debug, Clone)]
pub struct World {
    pub seed: u64,
    pub model: Arc<NetworkModel>,
    pub users: Vec<UserState>,
    pub trace: Arc<MobilityTrace>,
    pub trace_hash: String,
}

impl World {
    pub fn build(cfg: &RunConfig, seed: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let model = build_topology(&cfg.topology_config(), &mut stream(seed, Stream::Topology, 0))?;
        let radio = cfg.radio_config();
        let mobility = cfg.mobility_config();
        let users = initial_users(cfg.sim.n_users, cfg.vnf.count, &mobility, &model, seed);
        let trace = generate_trace(&users, &model, &radio, &mobility, cfg.n_steps(), seed);
        let trace_hash = trace.hash();
        Ok(Self {
            seed,
            model: Arc::new(model),
            users,
            trace: Arc::new(trace),
            trace_hash,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    NotRunning,
    Migrating,
    DeadlineMiss,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketOutcome {
    pub user: usize,
    pub time_s: f64,
    pub failure_cause: Option<FailureCause>,
}

impl PacketOutcome {
    pub fn successful(&self) -> bool {
        self.failure_cause.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct UserMetrics {
    pub total_packets: u64,
    pub unsuccessful: u64,
    pub cause_not_running: u64,
    pub cause_migrating: u64,
    pub cause_deadline: u64,
}

impl UserMetrics {
    pub fn ratio(&self) -> f64 {
        if self.total_packets == 0 {
            0.0
        } else {
            self.unsuccessful as f64 / self.total_packets as f64
        }
    }

    fn record(&mut self, cause: Option<FailureCause>) {
        self.total_packets += 1;
        if let Some(c) = cause {
            self.unsuccessful += 1;
            match c {
                FailureCause::NotRunning => self.cause_not_running += 1,
                FailureCause::Migrating => self.cause_migrating += 1,
                FailureCause::DeadlineMiss => self.cause_deadline += 1,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub strategy: Strategy,
    pub alpha: f64,
    pub d_max_ms: f64,
    pub seed: u64,
    pub trace_hash: String,
    pub per_user: Vec<UserMetrics>,
    pub events: Option<Vec<String>>,
    pub forecasts: Vec<DemandForecast>,
}

impl RunMetrics {
    pub fn total_packets(&self) -> u64 {
        self.per_user.iter().map(|m| m.total_packets).sum()
    }

    /// Pooled ratio: all unsuccessful packets over all packets.
    pub fn mean_ratio(&self) -> f64 {
        let total = self.total_packets();
        if total == 0 {
            return 0.0;
        }
        self.per_user.iter().map(|m| m.unsuccessful).sum::<u64>() as f64 / total as f64
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.per_user.iter().map(UserMetrics::ratio).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimOptions {
    pub log_events: bool,
    pub dump_forecast: bool,
}

struct PacketClock {
    rng: SimRng,
    next_s: f64,
}

pub struct Simulation {
    cfg: RunConfig,
    strategy: Strategy,
    world: Arc<World>,
    radio: RadioConfig,
    mobility: MobilityConfig,
    table: TransitionTable,
    placement: PlacementParams,
    n_vnfs: usize,
    instances: Vec<InstanceRecord>,
    users: Vec<UserState>,
    assignment: Vec<Option<usize>>,
    step: usize,
    n_steps: usize,
    period_steps: usize,
    horizon_steps: usize,
    oracle_steps: usize,
    likelihood: Option<LikelihoodMap>,
    packets: Vec<PacketClock>,
    exp: Option<Exp<f64>>,
    metrics: Vec<UserMetrics>,
    loads: Vec<LinkLoad>,
    mu_serving: Vec<f64>,
    mu_old: Vec<f64>,
    ready_pending: bool,
    /// Planned targets waiting for capacity to be released.
    deferred: Vec<(usize, LifecycleState)>,
    epochs: u64,
    events: Option<Vec<String>>,
    forecasts: Vec<DemandForecast>,
    dump_forecast: bool,
    last_dump_second: Option<i64>,
}

impl Simulation {
    pub fn new(cfg: &RunConfig, world: Arc<World>, strategy: Strategy, opts: SimOptions) -> Self {
        let n_vnfs = cfg.vnf.count;
        let n_ec = world.model.n_ec();
        let lambda = cfg.lambda_u_pps();
        let seed = world.seed;
        let packets = (0..world.users.len())
            .map(|u| PacketClock {
                rng: stream(seed, Stream::Packets, u as u64),
                next_s: 0.0,
            })
            .collect();
        let likelihood = (strategy == Strategy::Swaves).then(|| {
            LikelihoodMap::new(
                world.model.clone(),
                cfg.radio_config(),
                cfg.forecast.grid_m,
                cfg.forecast.n_fading,
                seed,
            )
        });
        let mut sim = Self {
            strategy,
            radio: cfg.radio_config(),
            mobility: cfg.mobility_config(),
            table: cfg.transition_table(),
            placement: cfg.placement_params(),
            n_vnfs,
            instances: (0..n_ec)
                .flat_map(|e| (0..n_vnfs).map(move |v| InstanceRecord::new(e, v)))
                .collect(),
            users: world.users.clone(),
            assignment: vec![None; world.users.len()],
            step: 0,
            n_steps: world.trace.n_steps,
            period_steps: cfg.steps_for(cfg.forecast.period_s),
            horizon_steps: cfg.steps_for(cfg.forecast.horizon_s),
            oracle_steps: cfg.steps_for(cfg.forecast.oracle_horizon_s),
            likelihood,
            packets,
            exp: (lambda > 0.0).then(|| Exp::new(lambda).expect("positive rate")),
            metrics: vec![UserMetrics::default(); world.users.len()],
            loads: Vec::new(),
            mu_serving: vec![0.0; world.users.len()],
            mu_old: vec![0.0; world.users.len()],
            ready_pending: false,
            deferred: Vec::new(),
            epochs: 0,
            events: opts.log_events.then(Vec::new),
            forecasts: Vec::new(),
            dump_forecast: opts.dump_forecast,
            last_dump_second: None,
            world,
            cfg: cfg.clone(),
        };
        if let Some(exp) = sim.exp {
            for p in &mut sim.packets {
                p.next_s = exp.sample(&mut p.rng);
            }
        }
        sim
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn now(&self) -> f64 {
        self.step as f64 * self.cfg.sim.dt_s
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.n_steps
    }

    pub fn instances(&self) -> &[InstanceRecord] {
        &self.instances
    }

    pub fn instance(&self, ec: usize, vnf: usize) -> &InstanceRecord {
        &self.instances[ec * self.n_vnfs + vnf]
    }

    /// Direct access for what-if experiments; bypasses the planner.
    pub fn instance_mut(&mut self, ec: usize, vnf: usize) -> &mut InstanceRecord {
        &mut self.instances[ec * self.n_vnfs + vnf]
    }

    /// Overrides one user's assignment without touching instance user sets.
    pub fn set_assignment(&mut self, user: usize, ec: Option<usize>) {
        self.assignment[user] = ec;
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn model(&self) -> &NetworkModel {
        &self.world.model
    }

    pub fn n_vnfs(&self) -> usize {
        self.n_vnfs
    }

    pub fn capacity(&self) -> ResourceVector {
        self.placement.capacity
    }

    pub fn vnf_resources(&self) -> ResourceVector {
        self.placement.r_v
    }

    pub fn metrics(&self) -> &[UserMetrics] {
        &self.metrics
    }

    fn log(&mut self, line: impl FnOnce() -> String) {
        if let Some(ev) = &mut self.events {
            ev.push(line());
        }
    }

    fn tick_instance(&mut self, i: usize, at_s: f64) {
        let done = self.instances[i].tick(at_s, &self.table);
        if done.is_empty() {
            return;
        }
        if done.iter().any(|t| t.to == LifecycleState::Running) {
            self.ready_pending = true;
        }
        if self.events.is_some() {
            let (ec, vnf) = (self.instances[i].ec, self.instances[i].vnf);
            for Transition { from, to, completes_at, .. } in done {
                self.log(|| format!("{completes_at:.4} transition ec={ec} vnf={vnf} {from}->{to}"));
            }
        }
    }

    /// Advance one control step. Returns `false` once the run is over.
    pub fn step(&mut self) -> bool {
        if self.is_finished() {
            return false;
        }
        let k = self.step;
        let dt = self.cfg.sim.dt_s;
        let t = k as f64 * dt;

        let mut handover = false;
        let trace = self.world.trace.clone();
        for u in 0..self.users.len() {
            let e = trace.entry(k, u);
            let user = &mut self.users[u];
            let new_bs = e.serving_bs as usize;
            if k > 0 && new_bs != user.serving_bs {
                handover = true;
                let old = user.serving_bs;
                self.log(|| format!("{t:.4} handover user={u} {old}->{new_bs}"));
            }
            let user = &mut self.users[u];
            user.position = e.position;
            user.speed_mps = e.speed_mps;
            user.direction_rad = e.direction_rad;
            user.mean_direction_rad = e.mean_direction_rad;
            user.serving_bs = new_bs;
            user.daps_old_bs = e.daps_old_bs.map(|b| b as usize);
        }

        for i in 0..self.instances.len() {
            self.tick_instance(i, t);
        }
        if !self.deferred.is_empty() {
            let pending = std::mem::take(&mut self.deferred);
            self.deferred = self.admit(pending, t);
        }

        let periodic = matches!(self.strategy, Strategy::Swaves | Strategy::Oracle) && k % self.period_steps == 0;
        let on_event = self.strategy != Strategy::Static && (handover || self.ready_pending);
        if k == 0 || periodic || on_event {
            self.epoch(k, t);
        }

        let lambda = self.cfg.lambda_u_pps();
        self.loads = accumulate_link_loads(
            &self.world.model,
            self.users
                .iter()
                .filter_map(|u| self.assignment[u.id].map(|ec| (u.serving_bs, ec, lambda))),
        );
        let pkt = self.cfg.topology.packet_size_bits;
        for u in 0..self.users.len() {
            let e = trace.entry(k, u);
            let user = &self.users[u];
            let bs = &self.world.model.bs_positions;
            self.mu_serving[u] =
                wireless_service_rate_pps(&self.radio, user.position, bs[user.serving_bs], e.fading_serving, pkt);
            self.mu_old[u] = user
                .daps_old_bs
                .map_or(0.0, |b| wireless_service_rate_pps(&self.radio, user.position, bs[b], e.fading_old, pkt));
        }

        let end = t + dt;
        let mut batch: Vec<(f64, usize)> = Vec::new();
        if let Some(exp) = self.exp {
            for (u, clock) in self.packets.iter_mut().enumerate() {
                while clock.next_s < end {
                    batch.push((clock.next_s, u));
                    clock.next_s += exp.sample(&mut clock.rng);
                }
            }
        }
        batch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let skip_before = if self.cfg.sim.exclude_warmup { self.cfg.sim.warmup_s } else { f64::NEG_INFINITY };
        for (time, u) in batch {
            let outcome = self.classify_packet(u, time);
            if time >= skip_before {
                self.metrics[u].record(outcome.failure_cause);
            }
        }

        self.step += 1;
        true
    }

    /// Condition checks for one packet, in order: instance not running,
    /// context migrating, deadline exceeded.
    pub fn classify_packet(&mut self, user: usize, time_s: f64) -> PacketOutcome {
        let cause = self.failure_cause(user, time_s);
        PacketOutcome {
            user,
            time_s,
            failure_cause: cause,
        }
    }

    fn failure_cause(&mut self, u: usize, time_s: f64) -> Option<FailureCause> {
        let Some(ec) = self.assignment[u] else {
            return Some(FailureCause::NotRunning);
        };
        let i = ec * self.n_vnfs + self.users[u].required_vnf;
        self.tick_instance(i, time_s);
        let rec = &self.instances[i];
        if !rec.is_running() {
            return Some(FailureCause::NotRunning);
        }
        if rec.is_migrating(u, time_s) {
            return Some(FailureCause::Migrating);
        }
        let user = &self.users[u];
        let lambda = self.cfg.lambda_u_pps();
        let t_p = self.cfg.delay.t_p_s;
        let model = &self.world.model;
        let leg = |bs: usize, mu: f64| {
            let path = path_loads(&self.loads, &model.wired_path(bs, ec));
            e2e_delay(mu, lambda, &path, t_p).total_s
        };
        let mut delay = leg(user.serving_bs, self.mu_serving[u]);
        if let Some(old) = user.daps_old_bs {
            delay = delay.min(leg(old, self.mu_old[u]));
        }
        if delay > self.cfg.d_max_s() {
            return Some(FailureCause::DeadlineMiss);
        }
        None
    }

    /// Run a placement epoch now, outside the strategy's own cadence.
    pub fn replan(&mut self) -> Result<(), PlacementError> {
        check_static_epoch(self.strategy, self.now())?;
        let k = self.step.min(self.n_steps.saturating_sub(1));
        self.epoch(k, self.now());
        Ok(())
    }

    fn forecast(&self, k: usize, t: f64) -> DemandForecast {
        let model = &self.world.model;
        match self.strategy {
            Strategy::Static => current_demand_forecast(model, &self.users, self.n_vnfs, t, 0, 0.0),
            Strategy::Reactive => current_demand_forecast(
                model,
                &self.users,
                self.n_vnfs,
                t,
                self.cfg.placement.reactive_neighbors,
                self.cfg.placement.reactive_neighbor_weight,
            ),
            Strategy::Swaves => swaves_forecast(
                &self.users,
                self.likelihood.as_ref().expect("likelihood map built for swaves"),
                &self.mobility,
                &ForecastParams {
                    horizon_steps: self.horizon_steps,
                    n_paths: self.cfg.forecast.n_paths,
                },
                self.n_vnfs,
                self.world.seed,
                self.epochs,
                t,
            ),
            Strategy::Oracle => oracle_forecast(
                &self.world.trace,
                &self.users,
                self.n_vnfs,
                model.n_bs(),
                k,
                self.oracle_steps,
            ),
        }
    }

    /// Capacity an instance may reach before it settles at its target.
    fn commitment(&self, rec: &InstanceRecord) -> ResourceVector {
        let r_v = self.placement.r_v;
        rec.peak_towards(rec.target, &self.table, r_v)
            .unwrap_or_else(|| rec.reservation(r_v))
    }

    /// Apply planned targets whose peak footprint fits next to every other
    /// commitment at the same EC; returns the rest. Changes that do not
    /// raise their commitment go first, so releases make room for starts.
    fn admit(&mut self, mut wants: Vec<(usize, LifecycleState)>, t: f64) -> Vec<(usize, LifecycleState)> {
        let r_v = self.placement.r_v;
        let cap = self.placement.capacity;
        let grows = |s: &Self, i: usize, target: LifecycleState| {
            let rec = &s.instances[i];
            rec.peak_towards(target, &s.table, r_v)
                .is_none_or(|p| !p.fits_within(s.commitment(rec)))
        };
        wants.sort_by_key(|&(i, target)| (grows(self, i, target), i));
        let mut rest = Vec::new();
        for (i, target) in wants {
            let rec = &self.instances[i];
            let Some(peak) = rec.peak_towards(target, &self.table, r_v) else {
                continue;
            };
            let base = rec.ec * self.n_vnfs;
            let others = (base..base + self.n_vnfs)
                .filter(|&j| j != i)
                .fold(ResourceVector::ZERO, |acc, j| acc.add(self.commitment(&self.instances[j])));
            if others.add(peak).fits_within(cap) {
                // options are restricted to legal targets, so this cannot fail
                let _ = self.instances[i].set_target(target, &self.table, t);
            } else {
                rest.push((i, target));
            }
        }
        rest
    }

    fn epoch(&mut self, k: usize, t: f64) {
        let forecast = self.forecast(k, t);
        let pkt = self.cfg.topology.packet_size_bits;
        let bs = &self.world.model.bs_positions;
        let views: Vec<UserView> = self
            .users
            .iter()
            .map(|u| UserView {
                id: u.id,
                serving_bs: u.serving_bs,
                required_vnf: u.required_vnf,
                mu_u_pps: wireless_service_rate_pps(&self.radio, u.position, bs[u.serving_bs], 1.0, pkt),
                old_bs: u
                    .daps_old_bs
                    .map(|b| (b, wireless_service_rate_pps(&self.radio, u.position, bs[b], 1.0, pkt))),
                current_ec: self.assignment[u.id],
            })
            .collect();
        let lambda = self.cfg.lambda_u_pps();
        let t_p = self.cfg.delay.t_p_s;
        let assign = AssignParams {
            lambda_u_pps: lambda,
            t_p_s: t_p,
            d_max_s: self.cfg.d_max_s(),
        };
        let pinned = pinned_instances(&self.world.model, &views, &self.instances, &self.loads, &assign);
        let mut targets = plan_targets(
            &self.instances,
            self.n_vnfs,
            &forecast,
            &pinned,
            &self.table,
            &self.placement,
            t,
        );
        spill_over(
            &self.world.model,
            &views,
            &self.instances,
            self.n_vnfs,
            &forecast,
            &pinned,
            &mut targets,
            &self.table,
            &self.placement,
            &assign,
            &self.loads,
            t,
        );
        let wants: Vec<(usize, LifecycleState)> = targets
            .iter()
            .enumerate()
            .filter(|&(i, &target)| {
                let r = &self.instances[i];
                r.target != target || (!r.in_flight() && r.state != target)
            })
            .map(|(i, &target)| (i, target))
            .collect();
        let changed = wants.len();
        self.deferred = self.admit(wants, t);
        for i in 0..self.instances.len() {
            self.tick_instance(i, t);
        }
        self.ready_pending = false;

        let new = assign_users(
            &self.world.model,
            &views,
            &self.instances,
            self.n_vnfs,
            &targets,
            &assign,
        );
        let loads = accumulate_link_loads(
            &self.world.model,
            self.users
                .iter()
                .filter_map(|u| new[u.id].map(|ec| (u.serving_bs, ec, lambda))),
        );
        for u in 0..self.users.len() {
            let old = self.assignment[u];
            if old == new[u] {
                continue;
            }
            let v = self.users[u].required_vnf;
            if let Some(o) = old {
                self.instances[o * self.n_vnfs + v].detach(u);
            }
            if let Some(ec) = new[u] {
                let i = ec * self.n_vnfs + v;
                let rec = &mut self.instances[i];
                if rec.is_running() {
                    rec.attached_users.insert(u);
                } else {
                    rec.awaiting_users.insert(u);
                }
                if let (Some(o), true) = (old, self.cfg.vnf.stateful) {
                    let path = path_loads(&loads, &self.world.model.ec_to_ec_path(o, ec));
                    let until = t + migration_time(self.cfg.v_mem_bits(), &path, t_p);
                    self.instances[i].migrating_users.insert(u, until);
                    self.log(|| format!("{t:.4} migration user={u} ec {o}->{ec} until={until:.6}"));
                }
            }
            self.assignment[u] = new[u];
        }
        let epoch = self.epochs;
        self.log(|| format!("{t:.4} plan epoch={epoch} changed={changed}"));
        if self.dump_forecast {
            let second = t.floor() as i64;
            if self.last_dump_second != Some(second) {
                self.last_dump_second = Some(second);
                self.forecasts.push(forecast);
            }
        }
        self.epochs += 1;
    }

    pub fn run_to_end(&mut self) {
        while self.step() {}
    }

    pub fn finish(self) -> RunMetrics {
        RunMetrics {
            strategy: self.strategy,
            alpha: self.cfg.mobility.alpha,
            d_max_ms: self.cfg.vnf.d_max_ms,
            seed: self.world.seed,
            trace_hash: self.world.trace_hash.clone(),
            per_user: self.metrics,
            events: self.events,
            forecasts: self.forecasts,
        }
    }
}

/// Generate the world for `seed` and simulate it with the configured strategy.
pub fn run(cfg: &RunConfig, seed: u64) -> Result<RunMetrics, SimError> {
    run_with(cfg, seed, SimOptions::default())
}

pub fn run_with(cfg: &RunConfig, seed: u64, opts: SimOptions) -> Result<RunMetrics, SimError> {
    let world = Arc::new(World::build(cfg, seed)?);
    let mut sim = Simulation::new(cfg, world, cfg.placement.strategy, opts);
    sim.run_to_end();
    Ok(sim.finish())
}

/// Poisson emission times in `[start, end)` at `rate` per second.
pub fn generate_packets<R: Rng + ?Sized>(rate: f64, start: f64, end: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut t = start + exp.sample(rng);
    while t < end {
        out.push(t);
        t += exp.sample(rng);
    }
    out
}
