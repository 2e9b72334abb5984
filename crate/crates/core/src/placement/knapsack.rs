//! Exact multiple-choice knapsack over per-VNF target states at one EC.
//!
//! Each item picks exactly one option. The objective is lexicographic: the
//! highest total score first, then the lowest total cost, then the earliest
//! option indices. Solved by depth-first branch and bound.

use crate::lifecycle::{LifecycleState, ResourceVector};

/// Score differences below this count as ties.
pub const SCORE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackOption {
    pub state: LifecycleState,
    pub score: f64,
    /// Secondary objective, minimised among equal scores.
    pub cost: f64,
    pub weight: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnapsackItem {
    pub options: Vec<KnapsackOption>,
}

fn better(score: f64, cost: f64, best: Option<(f64, f64)>) -> bool {
    match best {
        None => true,
        Some((s, c)) => score > s + SCORE_EPS || (score >= s - SCORE_EPS && cost < c - SCORE_EPS),
    }
}

struct Search<'a> {
    items: &'a [KnapsackItem],
    /// Option indices per item, best score first; dominated options removed.
    order: Vec<Vec<usize>>,
    /// `suffix_bound[i]`: sum of the best scores of items `i..`.
    suffix_bound: Vec<f64>,
    cap: ResourceVector,
    pick: Vec<usize>,
    best: Option<(f64, f64)>,
    best_pick: Vec<usize>,
}

impl Search<'_> {
    fn run(&mut self, i: usize, used: ResourceVector, score: f64, cost: f64) {
        if i == self.items.len() {
            if better(score, cost, self.best) {
                self.best = Some((score, cost));
                self.best_pick.clone_from(&self.pick);
            }
            return;
        }
        if let Some((s, _)) = self.best {
            if score + self.suffix_bound[i] < s - SCORE_EPS {
                return;
            }
        }
        for k in 0..self.order[i].len() {
            let j = self.order[i][k];
            let o = &self.items[i].options[j];
            let next = used.add(o.weight);
            if !next.fits_within(self.cap) {
                continue;
            }
            self.pick[i] = j;
            self.run(i + 1, next, score + o.score, cost + o.cost);
        }
    }
}

/// Options of an item that some optimal solution might use.
fn undominated(item: &KnapsackItem) -> Vec<usize> {
    let opts = &item.options;
    let dominates = |a: &KnapsackOption, b: &KnapsackOption| {
        a.score >= b.score && a.cost <= b.cost && a.weight.fits_within(b.weight)
    };
    let mut keep: Vec<usize> = (0..opts.len())
        .filter(|&j| {
            !(0..opts.len()).any(|i| {
                i != j
                    && dominates(&opts[i], &opts[j])
                    && (!dominates(&opts[j], &opts[i]) || i < j)
            })
        })
        .collect();
    keep.sort_by(|&a, &b| {
        opts[b]
            .score
            .total_cmp(&opts[a].score)
            .then(opts[a].cost.total_cmp(&opts[b].cost))
            .then(a.cmp(&b))
    });
    keep
}

/// Best option index per item under `cap`, or `None` when nothing fits.
pub fn solve(items: &[KnapsackItem], cap: ResourceVector) -> Option<Vec<usize>> {
    let order: Vec<Vec<usize>> = items.iter().map(undominated).collect();
    let mut suffix_bound = vec![0.0; items.len() + 1];
    for i in (0..items.len()).rev() {
        let top = order[i]
            .iter()
            .map(|&j| items[i].options[j].score)
            .fold(f64::NEG_INFINITY, f64::max);
        suffix_bound[i] = suffix_bound[i + 1] + top;
    }
    let mut s = Search {
        items,
        order,
        suffix_bound,
        cap,
        pick: vec![0; items.len()],
        best: None,
        best_pick: Vec::new(),
    };
    s.run(0, ResourceVector::ZERO, 0.0, 0.0);
    s.best.map(|_| s.best_pick)
}

/// Exhaustive reference: every combination, same objective.
pub fn solve_exhaustive(items: &[KnapsackItem], cap: ResourceVector) -> Option<(f64, f64)> {
    fn rec(
        items: &[KnapsackItem],
        i: usize,
        used: ResourceVector,
        score: f64,
        cost: f64,
        cap: ResourceVector,
        best: &mut Option<(f64, f64)>,
    ) {
        if i == items.len() {
            if used.fits_within(cap) && better(score, cost, *best) {
                *best = Some((score, cost));
            }
            return;
        }
        for o in &items[i].options {
            rec(items, i + 1, used.add(o.weight), score + o.score, cost + o.cost, cap, best);
        }
    }
    let mut best = None;
    rec(items, 0, ResourceVector::ZERO, 0.0, 0.0, cap, &mut best);
    best
}

/// Total score and cost of a selection.
pub fn evaluate(items: &[KnapsackItem], pick: &[usize]) -> (f64, f64, ResourceVector) {
    items.iter().zip(pick).fold(
        (0.0, 0.0, ResourceVector::ZERO),
        |(s, c, w), (it, &j)| {
            let o = &it.options[j];
            (s + o.score, c + o.cost, w.add(o.weight))
        },
    )
}
