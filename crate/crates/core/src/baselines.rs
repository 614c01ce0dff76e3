//! LRU eviction strategies and the exhaustive search oracle.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cache_net::{DistanceTable, EdgeCache, PlacementState};
use crate::error::{Error, Result};
use crate::mdp::{AtomicAction, Env};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    NoMig,
    FirstFit,
    BestFit,
    WorstFit,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::NoMig, Strategy::FirstFit, Strategy::BestFit, Strategy::WorstFit, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoMig => "nomig",
            Strategy::FirstFit => "firstfit",
            Strategy::BestFit => "bestfit",
            Strategy::WorstFit => "worstfit",
            Strategy::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

/// Last slot each (cache, content) pair was served or placed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecencyTracker {
    last: HashMap<(usize, usize), u64>,
}

impl RecencyTracker {
    pub fn touch(&mut self, cache: usize, content: usize, slot: u64) {
        self.last.insert((cache, content), slot);
    }

    pub fn last_access(&self, cache: usize, content: usize) -> u64 {
        self.last.get(&(cache, content)).copied().unwrap_or(0)
    }

    pub fn forget(&mut self, cache: usize, content: usize) {
        self.last.remove(&(cache, content));
    }

    /// Residents of `cache`, least recently used first; ties by lower content id.
    pub fn lru_order(&self, state: &PlacementState, cache: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..state.n_low).filter(|&l| state.y(cache, l)).collect();
        v.sort_by_key(|&l| (self.last_access(cache, l), l));
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Deleted,
    Cache(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvictionDecision {
    pub victim: usize,
    pub source: usize,
    pub destination: Destination,
}

/// What a strategy may look at when a target overflows.
pub struct DecisionContext<'a> {
    pub state: &'a PlacementState,
    pub caches: &'a [EdgeCache],
    pub low_sizes: &'a [f64],
    /// Free storage per cache, counting high-priority holdings.
    pub free_mb: &'a [f64],
    pub dist: &'a DistanceTable,
    /// Caches that may not receive migrated content.
    pub excluded: &'a [usize],
}

/// Frees at least `needed_mb` at `target` by evicting LRU residents; each victim is moved
/// whole according to `strategy`, falling back to deletion when nothing fits.
pub fn baseline_decide<R: Rng + ?Sized>(
    strategy: Strategy,
    ctx: &DecisionContext<'_>,
    needed_mb: f64,
    target: usize,
    tracker: &RecencyTracker,
    rng: &mut R,
) -> Vec<EvictionDecision> {
    let mut out = Vec::new();
    let mut shortfall = needed_mb - ctx.free_mb[target];
    if shortfall <= 0.0 {
        return out;
    }
    let mut free = ctx.free_mb.to_vec();
    for victim in tracker.lru_order(ctx.state, target) {
        if shortfall <= 0.0 {
            break;
        }
        let size = ctx.low_sizes[victim];
        let feasible: Vec<usize> = (0..ctx.state.n)
            .filter(|&d| {
                d != target
                    && !ctx.excluded.contains(&d)
                    && !ctx.state.y(d, victim)
                    && free[d] >= size
                    && ctx.dist.get(target, d).is_finite()
            })
            .collect();
        let pick = match strategy {
            Strategy::NoMig => None,
            Strategy::FirstFit => feasible
                .iter()
                .copied()
                .min_by(|&a, &b| ctx.dist.get(target, a).total_cmp(&ctx.dist.get(target, b)).then(a.cmp(&b))),
            Strategy::BestFit => feasible.iter().copied().min_by(|&a, &b| free[a].total_cmp(&free[b]).then(a.cmp(&b))),
            Strategy::WorstFit => feasible.iter().copied().min_by(|&a, &b| free[b].total_cmp(&free[a]).then(a.cmp(&b))),
            Strategy::Random => {
                if feasible.is_empty() {
                    None
                } else {
                    Some(feasible[rng.random_range(0..feasible.len())])
                }
            }
        };
        let destination = match pick {
            Some(d) => {
                free[d] -= size;
                Destination::Cache(d)
            }
            None => {
                if strategy != Strategy::NoMig {
                    log::debug!("{}: no destination for content {victim} from cache {target}; deleting", strategy.name());
                }
                Destination::Deleted
            }
        };
        out.push(EvictionDecision { victim, source: target, destination });
        shortfall -= size;
    }
    out
}

/// Best open-loop plan found by [`exhaustive_optimal`].
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePlan {
    pub actions: Vec<AtomicAction>,
    pub cost: f64,
    pub plans_evaluated: u64,
}

/// Enumerates every legal sequence of atomic actions over `horizon` slots on clones of the
/// snapshot (the exogenous request, arrival and mobility streams are frozen by the clone)
/// and returns the cheapest, earliest in action-index order on ties.
pub fn exhaustive_optimal(snapshot: &Env, horizon: usize, bound: f64) -> Result<OraclePlan> {
    let per_slot = snapshot.action_space().count() as f64;
    let plans = per_slot.powi(horizon as i32);
    if plans > bound {
        return Err(Error::SearchTooLarge { plans, bound });
    }
    let mut best = OraclePlan { actions: Vec::new(), cost: f64::INFINITY, plans_evaluated: 0 };
    let mut prefix = Vec::with_capacity(horizon);
    search(snapshot, horizon, 0.0, &mut prefix, &mut best)?;
    Ok(best)
}

fn search(env: &Env, left: usize, spent: f64, prefix: &mut Vec<AtomicAction>, best: &mut OraclePlan) -> Result<()> {
    if left == 0 {
        best.plans_evaluated += 1;
        if spent < best.cost {
            best.cost = spent;
            best.actions = prefix.clone();
        }
        return Ok(());
    }
    let space = env.action_space();
    let mask = env.legal_mask();
    for idx in 0..space.count() {
        if !mask[idx] {
            continue;
        }
        let action = space.decode(idx);
        let mut next = env.clone();
        let out = next.step(action)?;
        prefix.push(action);
        search(&next, left - 1, spent + out.weighted_cost, prefix, best)?;
        prefix.pop();
    }
    Ok(())
}

/// Cost of following `actions` from the snapshot (the last action repeats if the list is short).
pub fn plan_cost(snapshot: &Env, actions: &[AtomicAction]) -> Result<f64> {
    let mut env = snapshot.clone();
    let mut total = 0.0;
    for a in actions {
        total += env.step(*a)?.weighted_cost;
    }
    Ok(total)
}
