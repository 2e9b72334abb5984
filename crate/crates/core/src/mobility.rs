//! Gauss-Markov user movement and A3/time-to-trigger handover with DAPS.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::radio::{rsrp_dbm, sample_fading, RadioConfig};
use crate::rng::{stream, Stream};
use crate::topology::{NetworkModel, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityConfig {
    pub alpha: f64,
    pub mean_speed_mps: f64,
    pub sigma_v: f64,
    pub sigma_theta: f64,
    pub ttr_s: f64,
    pub hysteresis_db: f64,
    pub dt_s: f64,
    pub area_m: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            mean_speed_mps: 1.4,
            sigma_v: 0.5,
            sigma_theta: 0.3,
            ttr_s: 0.5,
            hysteresis_db: 2.0,
            dt_s: 0.1,
            area_m: 4000.0,
        }
    }
}

impl MobilityConfig {
    /// Consecutive steps the A3 condition must hold before a handover fires.
    pub fn ttr_steps(&self) -> u32 {
        (self.ttr_s / self.dt_s - 1e-9).ceil().max(0.0) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A3Timer {
    pub bs: usize,
    pub steps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserState {
    pub id: usize,
    pub position: Point,
    pub speed_mps: f64,
    pub direction_rad: f64,
    pub mean_speed_mps: f64,
    pub mean_direction_rad: f64,
    pub serving_bs: usize,
    pub a3_candidate: Option<A3Timer>,
    /// Previous serving BS, kept for the step right after a handover.
    pub daps_old_bs: Option<usize>,
    pub required_vnf: usize,
}

impl UserState {
    pub fn a3_timer_s(&self, dt_s: f64) -> f64 {
        self.a3_candidate.map_or(0.0, |t| t.steps as f64 * dt_s)
    }
}

/// One Gauss-Markov update; `v_rnd` and `theta_rnd` are the unscaled innovations.
pub fn gauss_markov_update(u: &mut UserState, cfg: &MobilityConfig, v_rnd: f64, theta_rnd: f64) {
    let a = cfg.alpha;
    let k = (1.0 - a * a).max(0.0).sqrt();
    u.speed_mps = (a * u.speed_mps + (1.0 - a) * u.mean_speed_mps + k * v_rnd).max(0.0);
    u.direction_rad = a * u.direction_rad + (1.0 - a) * u.mean_direction_rad + k * theta_rnd;
    let step = u.speed_mps * cfg.dt_s;
    u.position.x += step * u.direction_rad.cos();
    u.position.y += step * u.direction_rad.sin();
    reflect(u, cfg.area_m);
}

/// Mirror the user back into `[0, area]²`, turning both the current and the mean heading.
fn reflect(u: &mut UserState, area: f64) {
    for _ in 0..8 {
        let mut hit = false;
        if u.position.x < 0.0 || u.position.x > area {
            u.position.x = if u.position.x < 0.0 { -u.position.x } else { 2.0 * area - u.position.x };
            u.direction_rad = PI - u.direction_rad;
            u.mean_direction_rad = PI - u.mean_direction_rad;
            hit = true;
        }
        if u.position.y < 0.0 || u.position.y > area {
            u.position.y = if u.position.y < 0.0 { -u.position.y } else { 2.0 * area - u.position.y };
            u.direction_rad = -u.direction_rad;
            u.mean_direction_rad = -u.mean_direction_rad;
            hit = true;
        }
        if !hit {
            return;
        }
    }
    u.position.x = u.position.x.clamp(0.0, area);
    u.position.y = u.position.y.clamp(0.0, area);
}

pub fn gauss_markov_step<R: Rng + ?Sized>(u: &mut UserState, cfg: &MobilityConfig, rng: &mut R) {
    let z_v: f64 = rng.sample(StandardNormal);
    let z_t: f64 = rng.sample(StandardNormal);
    gauss_markov_update(u, cfg, cfg.sigma_v * z_v, cfg.sigma_theta * z_t);
}

/// Strongest BS under the given fading draws; ties go to the lowest index.
pub fn strongest_bs(model: &NetworkModel, radio: &RadioConfig, pos: Point, fading: &[f64]) -> usize {
    let mut best = 0;
    let mut best_p = f64::NEG_INFINITY;
    for (b, &bp) in model.bs_positions.iter().enumerate() {
        let p = rsrp_dbm(radio, pos.distance(bp), fading[b]);
        if p > best_p {
            best_p = p;
            best = b;
        }
    }
    best
}

/// A3 evaluation for one control step. Returns the previous serving BS if a handover fired.
pub fn update_attachment(
    u: &mut UserState,
    model: &NetworkModel,
    radio: &RadioConfig,
    fading: &[f64],
    hysteresis_db: f64,
    ttr_steps: u32,
) -> Option<usize> {
    u.daps_old_bs = None;
    let rsrp = |b: usize| rsrp_dbm(radio, u.position.distance(model.bs_positions[b]), fading[b]);
    let serving = rsrp(u.serving_bs);
    let mut cand = None;
    let mut cand_p = f64::NEG_INFINITY;
    for b in 0..model.n_bs() {
        if b == u.serving_bs {
            continue;
        }
        let p = rsrp(b);
        if p > cand_p {
            cand_p = p;
            cand = Some(b);
        }
    }
    match cand {
        Some(b) if cand_p > serving + hysteresis_db => {
            let steps = match u.a3_candidate {
                Some(t) if t.bs == b => t.steps + 1,
                _ => 1,
            };
            if steps >= ttr_steps {
                let old = u.serving_bs;
                u.daps_old_bs = Some(old);
                u.serving_bs = b;
                u.a3_candidate = None;
                Some(old)
            } else {
                u.a3_candidate = Some(A3Timer { bs: b, steps });
                None
            }
        }
        _ => {
            u.a3_candidate = None;
            None
        }
    }
}

/// Per-step record of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub position: Point,
    pub speed_mps: f64,
    pub direction_rad: f64,
    pub mean_direction_rad: f64,
    pub serving_bs: u32,
    pub daps_old_bs: Option<u32>,
    /// Fading power on the serving link during this step.
    pub fading_serving: f64,
    /// Fading power towards the DAPS old BS, 0 when there is none.
    pub fading_old: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    pub dt_s: f64,
    pub n_steps: usize,
    pub n_users: usize,
    /// Step-major: entry for `(step, user)` at `step * n_users + user`.
    entries: Vec<TraceEntry>,
    pub handovers: Vec<Handover>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Handover {
    pub step: usize,
    pub user: usize,
    pub from_bs: usize,
    pub to_bs: usize,
}

impl MobilityTrace {
    pub fn entry(&self, step: usize, user: usize) -> &TraceEntry {
        &self.entries[step * self.n_users + user]
    }

    pub fn step(&self, step: usize) -> &[TraceEntry] {
        &self.entries[step * self.n_users..(step + 1) * self.n_users]
    }

    pub fn serving_bs(&self, step: usize, user: usize) -> usize {
        self.entry(step, user).serving_bs as usize
    }

    /// Kinematic state of `user` at `step`, for forward rollouts.
    pub fn user_state(&self, step: usize, template: &UserState) -> UserState {
        let e = self.entry(step, template.id);
        UserState {
            position: e.position,
            speed_mps: e.speed_mps,
            direction_rad: e.direction_rad,
            mean_direction_rad: e.mean_direction_rad,
            serving_bs: e.serving_bs as usize,
            daps_old_bs: e.daps_old_bs.map(|b| b as usize),
            a3_candidate: None,
            ..*template
        }
    }

    /// SHA-256 over every recorded field, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_steps as u64).to_le_bytes());
        h.update((self.n_users as u64).to_le_bytes());
        h.update(self.dt_s.to_le_bytes());
        for e in &self.entries {
            for v in [
                e.position.x,
                e.position.y,
                e.speed_mps,
                e.direction_rad,
                e.mean_direction_rad,
                e.fading_serving,
                e.fading_old,
            ] {
                h.update(v.to_le_bytes());
            }
            h.update(e.serving_bs.to_le_bytes());
            h.update(e.daps_old_bs.map_or(u32::MAX, |b| b).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Uniform positions and headings, speed at the mean, required VNF uniform.
pub fn initial_users(
    n_users: usize,
    n_vnfs: usize,
    cfg: &MobilityConfig,
    model: &NetworkModel,
    seed: u64,
) -> Vec<UserState> {
    (0..n_users)
        .map(|id| {
            let mut rng = stream(seed, Stream::Setup, id as u64);
            let position = Point::new(
                rng.random_range(0.0..=cfg.area_m),
                rng.random_range(0.0..=cfg.area_m),
            );
            let heading = rng.random_range(-PI..PI);
            let required_vnf = rng.random_range(0..n_vnfs);
            UserState {
                id,
                position,
                speed_mps: cfg.mean_speed_mps,
                direction_rad: heading,
                mean_speed_mps: cfg.mean_speed_mps,
                mean_direction_rad: heading,
                serving_bs: model.nearest_bs(position),
                a3_candidate: None,
                daps_old_bs: None,
                required_vnf,
            }
        })
        .collect()
}

fn draw_fading(rng: &mut impl Rng, out: &mut [f64]) {
    for f in out.iter_mut() {
        *f = sample_fading(rng);
    }
}

/// Pre-generate movement and attachment for all users over `n_steps` steps.
///
/// Step 0 holds the initial state; the initial serving BS is the strongest
/// under the step-0 fading draws. Every user has its own motion and fading stream.
pub fn generate_trace(
    users: &[UserState],
    model: &NetworkModel,
    radio: &RadioConfig,
    cfg: &MobilityConfig,
    n_steps: usize,
    seed: u64,
) -> MobilityTrace {
    let ttr = cfg.ttr_steps();
    let per_user: Vec<(Vec<TraceEntry>, Vec<Handover>)> = users
        .par_iter()
        .map(|start| {
            let mut motion = stream(seed, Stream::Trace, start.id as u64);
            let mut fading_rng = stream(seed, Stream::Fading, start.id as u64);
            let mut fading = vec![0.0; model.n_bs()];
            let mut u = *start;
            let mut rows = Vec::with_capacity(n_steps);
            let mut handovers = Vec::new();
            for step in 0..n_steps {
                draw_fading(&mut fading_rng, &mut fading);
                if step == 0 {
                    u.serving_bs = strongest_bs(model, radio, u.position, &fading);
                    u.daps_old_bs = None;
                } else {
                    gauss_markov_step(&mut u, cfg, &mut motion);
                    if let Some(old) = update_attachment(&mut u, model, radio, &fading, cfg.hysteresis_db, ttr) {
                        handovers.push(Handover {
                            step,
                            user: u.id,
                            from_bs: old,
                            to_bs: u.serving_bs,
                        });
                    }
                }
                rows.push(TraceEntry {
                    position: u.position,
                    speed_mps: u.speed_mps,
                    direction_rad: u.direction_rad,
                    mean_direction_rad: u.mean_direction_rad,
                    serving_bs: u.serving_bs as u32,
                    daps_old_bs: u.daps_old_bs.map(|b| b as u32),
                    fading_serving: fading[u.serving_bs],
                    fading_old: u.daps_old_bs.map_or(0.0, |b| fading[b]),
                });
            }
            (rows, handovers)
        })
        .collect();

    let n_users = users.len();
    let mut entries = Vec::with_capacity(n_steps * n_users);
    for step in 0..n_steps {
        for (rows, _) in &per_user {
            entries.push(rows[step]);
        }
    }
    let mut handovers: Vec<Handover> = per_user.into_iter().flat_map(|(_, h)| h).collect();
    handovers.sort_by_key(|h| (h.step, h.user));
    MobilityTrace {
        dt_s: cfg.dt_s,
        n_steps,
        n_users,
        entries,
        handovers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::topology::{build_topology, TopologyConfig};
    use proptest::prelude::*;

    fn user(speed: f64, dir: f64) -> UserState {
        UserState {
            id: 0,
            position: Point::new(500.0, 500.0),
            speed_mps: speed,
            direction_rad: dir,
            mean_speed_mps: 1.0,
            mean_direction_rad: 0.3,
            serving_bs: 0,
            a3_candidate: None,
            daps_old_bs: None,
            required_vnf: 0,
        }
    }

    fn desk() -> (NetworkModel, RadioConfig) {
        let cfg = TopologyConfig {
            n_m2: 2,
            n_m1: 4,
            n_bs: 16,
            area_m: 1200.0,
            ..TopologyConfig::default()
        };
        (build_topology(&cfg, &mut stream(1, Stream::Topology, 0)).unwrap(), RadioConfig::default())
    }

    #[test]
    fn alpha_one_keeps_kinematics() {
        let cfg = MobilityConfig { alpha: 1.0, area_m: 1e6, ..MobilityConfig::default() };
        let mut u = user(2.0, 0.7);
        let mut rng = stream(1, Stream::Trace, 0);
        for _ in 0..1000 {
            gauss_markov_step(&mut u, &cfg, &mut rng);
            assert_eq!(u.speed_mps, 2.0);
            assert_eq!(u.direction_rad, 0.7);
        }
    }

    #[test]
    fn plug_in_update() {
        let cfg = MobilityConfig { alpha: 0.5, ..MobilityConfig::default() };
        let mut u = user(2.0, 0.0);
        gauss_markov_update(&mut u, &cfg, 0.0, 0.0);
        assert_eq!(u.speed_mps, 1.5);
    }

    #[test]
    fn alpha_zero_mean_speed() {
        let cfg = MobilityConfig { alpha: 0.0, mean_speed_mps: 1.4, area_m: 4000.0, ..MobilityConfig::default() };
        let mut u = user(1.4, 0.0);
        u.mean_speed_mps = 1.4;
        let mut rng = stream(9, Stream::Trace, 0);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            gauss_markov_step(&mut u, &cfg, &mut rng);
            sum += u.speed_mps;
        }
        // the clamp at 0 lifts the mean by a negligible amount at 2.8 sigma
        assert!((sum / n as f64 - 1.4).abs() <= 3.0 * cfg.sigma_v / (n as f64).sqrt());
    }

    #[test]
    fn reflection_keeps_users_inside() {
        let cfg = MobilityConfig { area_m: 100.0, mean_speed_mps: 30.0, ..MobilityConfig::default() };
        let mut u = user(30.0, 0.1);
        u.mean_speed_mps = 30.0;
        let mut rng = stream(3, Stream::Trace, 0);
        for _ in 0..10_000 {
            gauss_markov_step(&mut u, &cfg, &mut rng);
            assert!((0.0..=100.0).contains(&u.position.x) && (0.0..=100.0).contains(&u.position.y));
        }
        let mut w = user(10.0, 0.0);
        w.position = Point::new(99.5, 50.0);
        w.mean_direction_rad = 0.0;
        let cfg1 = MobilityConfig { alpha: 1.0, area_m: 100.0, dt_s: 0.1, ..MobilityConfig::default() };
        gauss_markov_update(&mut w, &cfg1, 0.0, 0.0);
        assert!((w.position.x - 99.5).abs() < 1e-9);
        assert!((w.direction_rad - PI).abs() < 1e-12 && (w.mean_direction_rad - PI).abs() < 1e-12);
    }

    #[test]
    fn ttr_steps_rounding() {
        let cfg = MobilityConfig::default();
        assert_eq!(cfg.ttr_steps(), 5);
        assert_eq!(MobilityConfig { ttr_s: 0.45, ..cfg.clone() }.ttr_steps(), 5);
        assert_eq!(MobilityConfig { ttr_s: 0.0, ..cfg }.ttr_steps(), 0);
    }

    #[test]
    fn handover_after_ttr_steps() {
        let (model, radio) = desk();
        let mut u = user(0.0, 0.0);
        u.position = model.bs_positions[5];
        u.serving_bs = 0;
        let fading = vec![1.0; model.n_bs()];
        for step in 1..5 {
            assert_eq!(update_attachment(&mut u, &model, &radio, &fading, 2.0, 5), None);
            assert_eq!(u.a3_candidate, Some(A3Timer { bs: 5, steps: step }));
        }
        assert_eq!(update_attachment(&mut u, &model, &radio, &fading, 2.0, 5), Some(0));
        assert_eq!((u.serving_bs, u.daps_old_bs, u.a3_candidate), (5, Some(0), None));
        // nothing stronger now: DAPS leg released, state otherwise unchanged
        assert_eq!(update_attachment(&mut u, &model, &radio, &fading, 2.0, 5), None);
        assert_eq!((u.serving_bs, u.daps_old_bs, u.a3_candidate), (5, None, None));
    }

    #[test]
    fn broken_a3_resets_timer() {
        let (model, radio) = desk();
        let mut u = user(0.0, 0.0);
        u.position = model.bs_positions[5];
        u.serving_bs = 0;
        let strong = vec![1.0; model.n_bs()];
        for _ in 0..4 {
            update_attachment(&mut u, &model, &radio, &strong, 2.0, 5);
        }
        let mut weak = strong.clone();
        weak[0] = 1e12;
        assert_eq!(update_attachment(&mut u, &model, &radio, &weak, 2.0, 5), None);
        assert_eq!(u.a3_candidate, None);
        assert_eq!(u.serving_bs, 0);
    }

    #[test]
    fn trace_shape_and_determinism() {
        let (model, radio) = desk();
        let cfg = MobilityConfig { area_m: 1200.0, ..MobilityConfig::default() };
        let users = initial_users(5, 10, &cfg, &model, 4);
        let a = generate_trace(&users, &model, &radio, &cfg, 300, 4);
        let b = generate_trace(&users, &model, &radio, &cfg, 300, 4);
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.step(299).len(), 5);
        let c = generate_trace(&users, &model, &radio, &cfg, 300, 5);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn static_users_stay_put() {
        let (model, radio) = desk();
        let cfg = MobilityConfig { alpha: 1.0, area_m: 1200.0, ..MobilityConfig::default() };
        let mut users = initial_users(4, 10, &cfg, &model, 2);
        for u in &mut users {
            u.speed_mps = 0.0;
        }
        let t = generate_trace(&users, &model, &radio, &cfg, 200, 2);
        for s in 0..200 {
            for u in 0..4 {
                assert_eq!(t.entry(s, u).position, users[u].position);
            }
        }
    }

    #[test]
    fn handovers_respect_ttr() {
        let (model, radio) = desk();
        let cfg = MobilityConfig { area_m: 1200.0, mean_speed_mps: 5.0, ..MobilityConfig::default() };
        let users = initial_users(10, 10, &cfg, &model, 8);
        let t = generate_trace(&users, &model, &radio, &cfg, 2000, 8);
        assert!(!t.handovers.is_empty());
        for h in &t.handovers {
            assert!(h.step >= cfg.ttr_steps() as usize);
            assert_eq!(t.entry(h.step, h.user).daps_old_bs, Some(h.from_bs as u32));
            assert_eq!(t.serving_bs(h.step - 1, h.user), h.from_bs);
        }
        for s in 1..t.n_steps {
            for u in 0..10 {
                let changed = t.serving_bs(s, u) != t.serving_bs(s - 1, u);
                assert_eq!(changed, t.handovers.iter().any(|h| h.step == s && h.user == u));
            }
        }
    }

    proptest! {
        #[test]
        fn speeds_never_negative(alpha in 0.0f64..=1.0, v0 in 0.0f64..5.0, seed in 0u64..1000) {
            let cfg = MobilityConfig { alpha, sigma_v: 3.0, ..MobilityConfig::default() };
            let mut u = user(v0, 0.0);
            let mut rng = stream(seed, Stream::Trace, 0);
            for _ in 0..200 {
                gauss_markov_step(&mut u, &cfg, &mut rng);
                prop_assert!(u.speed_mps >= 0.0);
            }
        }
    }
}
