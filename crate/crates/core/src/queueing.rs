//! Closed-form end-to-end delay and context-migration time.
//!
//! The wireless hop is an M/M/1 queue, every wired hop an M/D/1 queue.
//! Queueing terms work in packets per second; the migration transmission
//! term divides the context size in bits by the raw link bit rate.

use crate::topology::{LinkId, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkLoad {
    pub arrival_rate_pps: f64,
    pub service_rate_pps: f64,
    pub service_rate_bps: f64,
}

impl LinkLoad {
    pub fn idle(service_rate_pps: f64, service_rate_bps: f64) -> Self {
        Self {
            arrival_rate_pps: 0.0,
            service_rate_pps,
            service_rate_bps,
        }
    }

    pub fn utilization(&self) -> f64 {
        self.arrival_rate_pps / self.service_rate_pps
    }

    /// Mean M/D/1 sojourn: service time plus waiting time.
    fn md1_sojourn(&self) -> f64 {
        let rho = self.utilization();
        if rho >= 1.0 {
            return f64::INFINITY;
        }
        let mu = self.service_rate_pps;
        1.0 / mu + rho / (2.0 * mu * (1.0 - rho))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBreakdown {
    pub wireless_queueing_s: f64,
    pub processing_s: f64,
    pub wired_queueing_s: f64,
    pub total_s: f64,
}

impl DelayBreakdown {
    /// False when some queue is overloaded; the delay is then infinite.
    pub fn is_stable(&self) -> bool {
        self.total_s.is_finite()
    }
}

/// Processing at both ends of the wireless hop and of every wired hop.
pub fn processing_time(n_links: usize, t_p_s: f64) -> f64 {
    2.0 * (n_links as f64 + 1.0) * t_p_s
}

pub fn e2e_delay(mu_u_pps: f64, lambda_u_pps: f64, path: &[LinkLoad], t_p_s: f64) -> DelayBreakdown {
    let wireless = if mu_u_pps > lambda_u_pps {
        1.0 / (mu_u_pps - lambda_u_pps)
    } else {
        f64::INFINITY
    };
    let processing = processing_time(path.len(), t_p_s);
    let wired: f64 = path.iter().map(LinkLoad::md1_sojourn).sum();
    DelayBreakdown {
        wireless_queueing_s: wireless,
        processing_s: processing,
        wired_queueing_s: wired,
        total_s: wireless + processing + wired,
    }
}

/// Time to move `v_mem_bits` of user context across `path`; zero for an empty path.
pub fn migration_time(v_mem_bits: f64, path: &[LinkLoad], t_p_s: f64) -> f64 {
    if path.is_empty() {
        return 0.0;
    }
    let transmission: f64 = path.iter().map(|l| v_mem_bits / l.service_rate_bps).sum();
    let queueing: f64 = path.iter().map(LinkLoad::md1_sojourn).sum();
    transmission + processing_time(path.len(), t_p_s) + queueing
}

/// Per-link arrival rates given each user's serving BS, assigned EC and rate.
///
/// `flows` yields `(serving_bs, assigned_ec, lambda_u_pps)`; indexed by [`LinkId`].
pub fn accumulate_link_loads<I>(model: &NetworkModel, flows: I) -> Vec<LinkLoad>
where
    I: IntoIterator<Item = (usize, usize, f64)>,
{
    let mut loads: Vec<LinkLoad> = model
        .links
        .iter()
        .map(|l| LinkLoad::idle(l.service_rate_pps, l.service_rate_bps))
        .collect();
    for (bs, ec, lambda) in flows {
        for id in model.wired_path(bs, ec) {
            loads[id].arrival_rate_pps += lambda;
        }
    }
    loads
}

pub fn path_loads(loads: &[LinkLoad], path: &[LinkId]) -> Vec<LinkLoad> {
    path.iter().map(|&id| loads[id]).collect()
}
