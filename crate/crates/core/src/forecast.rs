//! Demand forecasting: connection likelihood P(b|l), the probability of a
//! user never attaching to a cell within the horizon, and the per-VNF demand
//! probability over all users that require it.

use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rayon::prelude::*;

use crate::mobility::{gauss_markov_step, MobilityConfig, MobilityTrace, UserState};
use crate::radio::{db_to_linear, path_loss_db, sample_fading, RadioConfig};
use crate::rng::{pair_index, stream, SimRng, Stream};
use crate::topology::{NetworkModel, Point};

/// Cells whose mean power trails the strongest by more than this never win a
/// draw in practice: an Exp(1) fade exceeds 100 (20 dB) with probability e^-100.
const LIKELIHOOD_CUTOFF_DB: f64 = 20.0;

/// Sparse P(b|l): `(bs, probability)` pairs with nonzero mass, sorted by BS.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionLikelihood {
    pub entries: Vec<(usize, f64)>,
}

impl ConnectionLikelihood {
    pub fn get(&self, bs: usize) -> f64 {
        self.entries
            .iter()
            .find(|(b, _)| *b == bs)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn dense(&self, n_bs: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_bs];
        for &(b, p) in &self.entries {
            v[b] = p;
        }
        v
    }
}

/// Fraction of `n_draws` independent fading realisations in which each BS has
/// the highest received power at `location` (ties to the lowest index).
pub fn connection_likelihood<R: Rng + ?Sized>(
    model: &NetworkModel,
    radio: &RadioConfig,
    location: Point,
    n_draws: usize,
    rng: &mut R,
) -> ConnectionLikelihood {
    let n_draws = n_draws.max(1);
    let mean: Vec<f64> = model
        .bs_positions
        .iter()
        .map(|&b| 1.0 / db_to_linear(path_loss_db(radio, location.distance(b))))
        .collect();
    let strongest = mean.iter().cloned().fold(0.0, f64::max);
    let floor = strongest / db_to_linear(LIKELIHOOD_CUTOFF_DB);
    let contenders: Vec<usize> = (0..mean.len()).filter(|&b| mean[b] >= floor).collect();
    let mut wins = vec![0usize; contenders.len()];
    for _ in 0..n_draws {
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (i, &b) in contenders.iter().enumerate() {
            let p = mean[b] * sample_fading(rng);
            if p > best_p {
                best_p = p;
                best = i;
            }
        }
        wins[best] += 1;
    }
    ConnectionLikelihood {
        entries: contenders
            .into_iter()
            .zip(wins)
            .filter(|(_, w)| *w > 0)
            .map(|(b, w)| (b, w as f64 / n_draws as f64))
            .collect(),
    }
}

/// Anything that can report P(b|l) at a location.
pub trait ConnectionModel<L> {
    fn probability(&self, location: &L, bs: usize) -> f64;

    /// Calls `f(bs, p)` for every BS with nonzero probability.
    fn visit(&self, location: &L, f: &mut dyn FnMut(usize, f64));
}

/// Source of future location sequences, i.e. draws from f(L).
pub trait PathSampler {
    type Location;

    /// Fills `out` with `steps` future locations.
    fn sample(&self, rng: &mut SimRng, steps: usize, out: &mut Vec<Self::Location>);
}

/// P(b|l) evaluated on a square grid and cached per cell.
///
/// Every cell owns a random stream, so lookups are deterministic in any
/// order and from any thread.
pub struct LikelihoodMap {
    model: Arc<NetworkModel>,
    radio: RadioConfig,
    cell_m: f64,
    cols: usize,
    n_draws: usize,
    seed: u64,
    cells: Vec<OnceLock<ConnectionLikelihood>>,
}

impl LikelihoodMap {
    pub fn new(model: Arc<NetworkModel>, radio: RadioConfig, cell_m: f64, n_draws: usize, seed: u64) -> Self {
        let cols = (model.area_m / cell_m).ceil().max(1.0) as usize;
        Self {
            model,
            radio,
            cell_m,
            cols,
            n_draws,
            seed,
            cells: (0..cols * cols).map(|_| OnceLock::new()).collect(),
        }
    }

    fn cell_of(&self, p: Point) -> usize {
        let c = |x: f64| ((x / self.cell_m).floor().max(0.0) as usize).min(self.cols - 1);
        c(p.y) * self.cols + c(p.x)
    }

    pub fn at(&self, p: Point) -> &ConnectionLikelihood {
        let cell = self.cell_of(p);
        self.cells[cell].get_or_init(|| {
            let (row, col) = (cell / self.cols, cell % self.cols);
            let centre = Point::new((col as f64 + 0.5) * self.cell_m, (row as f64 + 0.5) * self.cell_m);
            let mut rng = stream(self.seed, Stream::Likelihood, cell as u64);
            connection_likelihood(&self.model, &self.radio, centre, self.n_draws, &mut rng)
        })
    }
}

impl ConnectionModel<Point> for LikelihoodMap {
    fn probability(&self, location: &Point, bs: usize) -> f64 {
        self.at(*location).get(bs)
    }

    fn visit(&self, location: &Point, f: &mut dyn FnMut(usize, f64)) {
        for &(b, p) in &self.at(*location).entries {
            f(b, p);
        }
    }
}

/// Gauss-Markov rollouts from a user's current kinematic state.
pub struct GaussMarkovPaths<'a> {
    pub start: UserState,
    pub mobility: &'a MobilityConfig,
}

impl PathSampler for GaussMarkovPaths<'_> {
    type Location = Point;

    fn sample(&self, rng: &mut SimRng, steps: usize, out: &mut Vec<Point>) {
        out.clear();
        let mut u = self.start;
        for _ in 0..steps {
            gauss_markov_step(&mut u, self.mobility, rng);
            out.push(u.position);
        }
    }
}

/// Monte Carlo estimate of the probability that the user never attaches to
/// `bs` over the next `horizon_steps` steps.
pub fn prob_not_connecting<P, C>(
    paths: &P,
    conn: &C,
    bs: usize,
    horizon_steps: usize,
    n_paths: usize,
    rng: &mut SimRng,
) -> f64
where
    P: PathSampler,
    C: ConnectionModel<P::Location>,
{
    let mut buf = Vec::with_capacity(horizon_steps);
    let mut acc = 0.0;
    for _ in 0..n_paths.max(1) {
        paths.sample(rng, horizon_steps, &mut buf);
        acc += buf.iter().map(|l| 1.0 - conn.probability(l, bs)).product::<f64>();
    }
    acc / n_paths.max(1) as f64
}

/// [`prob_not_connecting`] for every BS at once, sharing the rollouts.
pub fn prob_not_connecting_all<P, C>(
    paths: &P,
    conn: &C,
    n_bs: usize,
    horizon_steps: usize,
    n_paths: usize,
    rng: &mut SimRng,
) -> Vec<f64>
where
    P: PathSampler,
    C: ConnectionModel<P::Location>,
{
    let n = n_paths.max(1);
    let mut buf = Vec::with_capacity(horizon_steps);
    let mut acc = vec![0.0; n_bs];
    let mut prod = vec![1.0; n_bs];
    for _ in 0..n {
        paths.sample(rng, horizon_steps, &mut buf);
        prod.fill(1.0);
        for l in &buf {
            conn.visit(l, &mut |b, p| prod[b] *= 1.0 - p);
        }
        for (a, p) in acc.iter_mut().zip(&prod) {
            *a += p;
        }
    }
    acc.iter().map(|a| a / n as f64).collect()
}

/// Probability that at least one of the users needs the service at the cell.
pub fn demand_probability(not_connecting: &[f64]) -> f64 {
    1.0 - not_connecting.iter().product::<f64>()
}

/// P_{v,b} for every VNF and BS.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandForecast {
    pub n_vnfs: usize,
    pub n_bs: usize,
    pub horizon_s: f64,
    pub computed_at_s: f64,
    p: Vec<f64>,
}

impl DemandForecast {
    pub fn zeros(n_vnfs: usize, n_bs: usize, horizon_s: f64, computed_at_s: f64) -> Self {
        Self {
            n_vnfs,
            n_bs,
            horizon_s,
            computed_at_s,
            p: vec![0.0; n_vnfs * n_bs],
        }
    }

    pub fn get(&self, vnf: usize, bs: usize) -> f64 {
        self.p[vnf * self.n_bs + bs]
    }

    pub fn set(&mut self, vnf: usize, bs: usize, p: f64) {
        self.p[vnf * self.n_bs + bs] = p;
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    /// `vnf,bs,p` rows, VNF-major.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("vnf,bs,p\n");
        for v in 0..self.n_vnfs {
            for b in 0..self.n_bs {
                let _ = writeln!(s, "{v},{b},{}", self.get(v, b));
            }
        }
        s
    }

    /// Combine per-user not-connecting vectors into P_{v,b}.
    fn from_not_connecting(
        users: &[UserState],
        q: &[Vec<f64>],
        n_vnfs: usize,
        n_bs: usize,
        horizon_s: f64,
        now_s: f64,
    ) -> Self {
        let mut prod = vec![1.0; n_vnfs * n_bs];
        for (u, qu) in users.iter().zip(q) {
            for (b, x) in qu.iter().enumerate() {
                prod[u.required_vnf * n_bs + b] *= x;
            }
        }
        Self {
            n_vnfs,
            n_bs,
            horizon_s,
            computed_at_s: now_s,
            p: prod.into_iter().map(|x| 1.0 - x).collect(),
        }
    }
}

pub struct ForecastParams {
    pub horizon_steps: usize,
    pub n_paths: usize,
}

/// Model-based forecast: rollouts of the true mobility dynamics scored
/// against the cached connection likelihood.
pub fn swaves_forecast(
    users: &[UserState],
    map: &LikelihoodMap,
    mobility: &MobilityConfig,
    params: &ForecastParams,
    n_vnfs: usize,
    seed: u64,
    epoch: u64,
    now_s: f64,
) -> DemandForecast {
    let n_bs = map.model.n_bs();
    let q: Vec<Vec<f64>> = users
        .par_iter()
        .map(|u| {
            let mut rng = stream(seed, Stream::Forecast, pair_index(epoch, u.id as u64));
            let paths = GaussMarkovPaths { start: *u, mobility };
            prob_not_connecting_all(&paths, map, n_bs, params.horizon_steps, params.n_paths, &mut rng)
        })
        .collect();
    DemandForecast::from_not_connecting(
        users,
        &q,
        n_vnfs,
        n_bs,
        params.horizon_steps as f64 * mobility.dt_s,
        now_s,
    )
}

/// Exact future: 1 where some user requiring the VNF is served by the BS at
/// any step in `(now_step, now_step + horizon_steps]`, clipped to the trace.
pub fn oracle_forecast(
    trace: &MobilityTrace,
    users: &[UserState],
    n_vnfs: usize,
    n_bs: usize,
    now_step: usize,
    horizon_steps: usize,
) -> DemandForecast {
    let mut f = DemandForecast::zeros(
        n_vnfs,
        n_bs,
        horizon_steps as f64 * trace.dt_s,
        now_step as f64 * trace.dt_s,
    );
    let last = (now_step + horizon_steps).min(trace.n_steps.saturating_sub(1));
    for step in now_step + 1..=last {
        for u in users {
            f.set(u.required_vnf, trace.serving_bs(step, u.id), 1.0);
        }
    }
    f
}

/// Indicator of demand right now: 1 where a user requiring the VNF is attached.
///
/// With `neighbors > 0`, the `neighbors` closest other cells of each occupied
/// cell also receive `neighbor_weight`, combined over users like independent
/// demands.
pub fn current_demand_forecast(
    model: &NetworkModel,
    users: &[UserState],
    n_vnfs: usize,
    now_s: f64,
    neighbors: usize,
    neighbor_weight: f64,
) -> DemandForecast {
    let n_bs = model.n_bs();
    let mut miss = vec![1.0; n_vnfs * n_bs];
    for u in users {
        miss[u.required_vnf * n_bs + u.serving_bs] = 0.0;
        if neighbors > 0 {
            for b in model.neighbors(u.serving_bs, neighbors) {
                miss[u.required_vnf * n_bs + b] *= 1.0 - neighbor_weight;
            }
        }
    }
    DemandForecast {
        n_vnfs,
        n_bs,
        horizon_s: 0.0,
        computed_at_s: now_s,
        p: miss.into_iter().map(|m| 1.0 - m).collect(),
    }
}
