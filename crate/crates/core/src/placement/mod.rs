//! Placement epochs: per-EC target states from a demand forecast, and the
//! assignment of users to instances.

pub mod knapsack;

use rayon::prelude::*;

use crate::config::Strategy;
use crate::error::PlacementError;
use crate::lifecycle::{footprint, InstanceRecord, LifecycleState, ResourceVector, TransitionTable};
use crate::forecast::DemandForecast;
use crate::queueing::{e2e_delay, LinkLoad};
use crate::topology::NetworkModel;

use knapsack::{KnapsackItem, KnapsackOption};

/// Score given to non-removal targets of unwanted VNFs; kept finite so an
/// instance that cannot be removed in time still yields a feasible plan.
const UNWANTED_PENALTY: f64 = -1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementParams {
    pub p_drop: f64,
    pub epsilon: f64,
    pub use_paused: bool,
    pub r_v: ResourceVector,
    pub capacity: ResourceVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementPlan {
    /// Target per instance, indexed like the instance table (`ec * n_vnfs + vnf`).
    pub target_state: Vec<LifecycleState>,
    /// EC serving each user, `None` when no instance of its VNF exists.
    pub assignment: Vec<Option<usize>>,
}

/// How close a target state is to serving, in `[0, 1]`.
pub fn readiness(state: LifecycleState, table: &TransitionTable) -> f64 {
    let full = table.t_full();
    if full <= 0.0 {
        return 1.0;
    }
    1.0 - (table.time_to_running(state) / full).min(1.0)
}

fn candidate_states(use_paused: bool) -> impl Iterator<Item = LifecycleState> {
    LifecycleState::ALL
        .into_iter()
        .filter(move |s| use_paused || *s != LifecycleState::Paused)
}

/// Knapsack items for one EC. `pinned` instances serve users and must run.
///
/// Weights are the footprints an instance will hold once it leaves its
/// committed state, so a plan may swap a running VNF for another. The engine
/// admits the resulting transitions only when capacity allows.
pub fn knapsack_items(
    instances: &[InstanceRecord],
    demand: impl Fn(usize) -> f64,
    pinned: impl Fn(usize) -> bool,
    table: &TransitionTable,
    params: &PlacementParams,
    now_s: f64,
) -> Vec<KnapsackItem> {
    instances
        .iter()
        .map(|rec| {
            let p = demand(rec.vnf);
            let pin = pinned(rec.vnf);
            let options = candidate_states(params.use_paused)
                .filter(|&s| !pin || s == LifecycleState::Running)
                .filter_map(|s| {
                    let weight = rec.peak_after(s, table, params.r_v)?;
                    let cost = rec.time_to(s, table, now_s)?;
                    let score = if pin {
                        p
                    } else if p < params.p_drop {
                        if s == LifecycleState::Descriptor {
                            0.0
                        } else {
                            UNWANTED_PENALTY
                        }
                    } else {
                        p * readiness(s, table)
                            - params.epsilon * footprint(s, params.r_v).share_of(params.capacity)
                    };
                    Some(KnapsackOption {
                        state: s,
                        score,
                        cost,
                        weight,
                    })
                })
                .collect();
            KnapsackItem { options }
        })
        .collect()
}

/// Targets for one EC; falls back to the current targets if nothing fits.
pub fn plan_ec(
    instances: &[InstanceRecord],
    demand: impl Fn(usize) -> f64,
    pinned: impl Fn(usize) -> bool,
    table: &TransitionTable,
    params: &PlacementParams,
    now_s: f64,
) -> Vec<LifecycleState> {
    let items = knapsack_items(instances, demand, pinned, table, params, now_s);
    match knapsack::solve(&items, params.capacity) {
        Some(pick) => items.iter().zip(pick).map(|(it, j)| it.options[j].state).collect(),
        None => instances.iter().map(|r| r.target).collect(),
    }
}

/// Targets for every instance from a forecast. `instances` is EC-major with
/// `n_vnfs` entries per EC; `pinned[i]` marks instances that have users.
pub fn plan_targets(
    instances: &[InstanceRecord],
    n_vnfs: usize,
    forecast: &DemandForecast,
    pinned: &[bool],
    table: &TransitionTable,
    params: &PlacementParams,
    now_s: f64,
) -> Vec<LifecycleState> {
    instances
        .par_chunks(n_vnfs)
        .enumerate()
        .flat_map_iter(|(ec, recs)| {
            plan_ec(
                recs,
                |v| forecast.get(v, ec),
                |v| pinned[ec * n_vnfs + v],
                table,
                params,
                now_s,
            )
        })
        .collect()
}

fn leg_delay(
    model: &NetworkModel,
    loads: &[LinkLoad],
    bs: usize,
    ec: usize,
    mu: f64,
    params: &AssignParams,
) -> f64 {
    let path: Vec<LinkLoad> = model
        .wired_path(bs, ec)
        .iter()
        .map(|&l| {
            loads.get(l).copied().unwrap_or_else(|| {
                let link = &model.links[l];
                LinkLoad::idle(link.service_rate_pps, link.service_rate_bps)
            })
        })
        .collect();
    e2e_delay(mu, params.lambda_u_pps, &path, params.t_p_s).total_s
}

/// Second planning pass for users the plan leaves without any instance
/// headed to Running within the delay limit: the nearest EC within the
/// limit whose knapsack can fit the VNF at full demand takes it.
///
/// Per-BS demand only values an EC for its own cell, so without this pass a
/// full local EC strands its users even when a neighbour has room.
#[allow(clippy::too_many_arguments)]
pub fn spill_over(
    model: &NetworkModel,
    users: &[UserView],
    instances: &[InstanceRecord],
    n_vnfs: usize,
    forecast: &DemandForecast,
    pinned: &[bool],
    targets: &mut [LifecycleState],
    table: &TransitionTable,
    params: &PlacementParams,
    assign: &AssignParams,
    loads: &[LinkLoad],
    now_s: f64,
) {
    let mut raised: Vec<(usize, usize)> = Vec::new();
    for u in users {
        let v = u.required_vnf;
        let mut within: Vec<(i64, usize)> = (0..model.n_ec())
            .filter_map(|ec| {
                let d = leg_delay(model, loads, u.serving_bs, ec, u.mu_u_pps, assign);
                (d <= assign.d_max_s).then_some((ordered(d), ec))
            })
            .collect();
        if within.iter().any(|&(_, ec)| targets[ec * n_vnfs + v] == LifecycleState::Running) {
            continue;
        }
        within.sort_unstable();
        for (_, ec) in within {
            if raised.contains(&(ec, v)) {
                continue;
            }
            let base = ec * n_vnfs;
            let demand = |w: usize| {
                if w == v || raised.contains(&(ec, w)) {
                    1.0
                } else {
                    forecast.get(w, ec)
                }
            };
            let trial = plan_ec(
                &instances[base..base + n_vnfs],
                demand,
                |w| pinned[base + w],
                table,
                params,
                now_s,
            );
            if trial[v] == LifecycleState::Running {
                targets[base..base + n_vnfs].copy_from_slice(&trial);
                raised.push((ec, v));
                break;
            }
        }
    }
}

/// The static strategy plans exactly once.
pub fn check_static_epoch(strategy: Strategy, now_s: f64) -> Result<(), PlacementError> {
    if strategy == Strategy::Static && now_s > 0.0 {
        return Err(PlacementError::StaticReplan(now_s));
    }
    Ok(())
}

/// Snapshot of one user as seen by the assignment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserView {
    pub id: usize,
    pub serving_bs: usize,
    pub required_vnf: usize,
    /// Wireless service rate used for planning, packets per second.
    pub mu_u_pps: f64,
    /// Source BS of a dual-active handover and its planning rate.
    pub old_bs: Option<(usize, f64)>,
    pub current_ec: Option<usize>,
}

pub struct AssignParams {
    pub lambda_u_pps: f64,
    pub t_p_s: f64,
    pub d_max_s: f64,
}

/// Greedy delay-driven assignment, users in id order, loads updated as users are placed.
///
/// Candidates are instances that run or are headed to Running. A candidate
/// is ranked first by class (running within the limit, pending within the
/// limit, running beyond it, pending beyond it), then by delay, then by
/// being the user's current EC, then by EC index.
pub fn assign_users(
    model: &NetworkModel,
    users: &[UserView],
    instances: &[InstanceRecord],
    n_vnfs: usize,
    targets: &[LifecycleState],
    params: &AssignParams,
) -> Vec<Option<usize>> {
    let mut loads: Vec<LinkLoad> = model
        .links
        .iter()
        .map(|l| LinkLoad::idle(l.service_rate_pps, l.service_rate_bps))
        .collect();
    let mut out = vec![None; users.len()];
    let mut path_buf = Vec::new();
    for u in users {
        let mut best: Option<(u8, i64, u8, usize)> = None;
        for ec in 0..model.n_ec() {
            let i = ec * n_vnfs + u.required_vnf;
            if targets[i] != LifecycleState::Running {
                continue;
            }
            let running = instances[i].is_running();
            let path = model.wired_path(u.serving_bs, ec);
            path_buf.clear();
            path_buf.extend(path.iter().map(|&l| {
                let mut x = loads[l];
                x.arrival_rate_pps += params.lambda_u_pps;
                x
            }));
            let d = e2e_delay(u.mu_u_pps, params.lambda_u_pps, &path_buf, params.t_p_s).total_s;
            let within = d <= params.d_max_s;
            let class = match (running, within) {
                (true, true) => 0,
                (false, true) => 1,
                (true, false) => 2,
                (false, false) => 3,
            };
            let stay = if u.current_ec == Some(ec) { 0 } else { 1 };
            let key = (class, ordered(d), stay, ec);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        if let Some((_, _, _, ec)) = best {
            for l in model.wired_path(u.serving_bs, ec) {
                loads[l].arrival_rate_pps += params.lambda_u_pps;
            }
            out[u.id] = Some(ec);
        }
    }
    out
}

/// Instances the planner must keep Running: those with an attached or
/// awaiting user that the instance can serve within the delay limit over
/// either handover leg.
///
/// Users beyond the limit fail every packet wherever the instance stands, so
/// they do not hold capacity. `loads` are the current link loads, which
/// already include every assigned user.
pub fn pinned_instances(
    model: &NetworkModel,
    users: &[UserView],
    instances: &[InstanceRecord],
    loads: &[LinkLoad],
    params: &AssignParams,
) -> Vec<bool> {
    instances
        .iter()
        .map(|r| {
            r.attached_users.iter().chain(&r.awaiting_users).any(|&u| {
                let u = &users[u];
                std::iter::once((u.serving_bs, u.mu_u_pps))
                    .chain(u.old_bs)
                    .any(|(bs, mu)| leg_delay(model, loads, bs, r.ec, mu, params) <= params.d_max_s)
            })
        })
        .collect()
}

/// Total order on delays, with infinity last; near-equal values compare equal.
fn ordered(d: f64) -> i64 {
    if d.is_finite() {
        (d * 1e12).round() as i64
    } else {
        i64::MAX
    }
}
