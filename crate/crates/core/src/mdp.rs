//! The environment as an MDP: state encoding, atomic actions, reward and slot transition.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::baselines::{baseline_decide, DecisionContext, Destination, RecencyTracker, Strategy};
use crate::cache_net::{
    apply_placement_delta, build_contact_graph, dominating_set, validate_constraints, CacheKind, ContentRef,
    DistanceTable, DominatingSet, EdgeCache, Endpoint, Flip, Link, LogEntry, PlacementState, RequestBatch,
    TransferLog, Violation,
};
use crate::cost::{
    accumulate_phi, delivery_log, high_priority_delivery_cost, low_priority_access_cost, migration_cost_slot,
    plan_high_deliveries, request_delay, route_requests, zipf_request_rate, CostParameters, DemandModel,
    MigrationCost, Service, SlotCost,
};
use crate::error::{Error, Result};
use crate::harness::ScenarioSpec;
use crate::mobility::{step_vehicle, Heading, MobilityTrace, Point, RoadGrid, SojournTable, TurnPolicy, VehicleKinematics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomicAction {
    /// Toggle y[cache][low].
    Type1 { cache: usize, content: usize },
    /// Toggle x[fixed][high].
    Type2 { fixed: usize, content: usize },
    /// Step z[src][dst][low] up by one, or down when it cannot grow.
    Type3 { src: usize, dst: usize, content: usize },
    NoOp,
}

impl AtomicAction {
    pub fn kind(&self) -> usize {
        match self {
            AtomicAction::Type1 { .. } => 0,
            AtomicAction::Type2 { .. } => 1,
            AtomicAction::Type3 { .. } => 2,
            AtomicAction::NoOp => 3,
        }
    }
}

/// Index layout: all Type1 (cache-major), all Type2 (fixed-major), all Type3 (src, dst, content), NoOp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub n: usize,
    pub f: usize,
    pub n_low: usize,
    pub n_high: usize,
}

impl ActionSpace {
    pub fn type1_count(&self) -> usize {
        self.n * self.n_low
    }
    pub fn type2_count(&self) -> usize {
        self.f * self.n_high
    }
    pub fn type3_count(&self) -> usize {
        self.n * self.n * self.n_low
    }
    pub fn count(&self) -> usize {
        self.type1_count() + self.type2_count() + self.type3_count() + 1
    }
    pub fn noop_index(&self) -> usize {
        self.count() - 1
    }

    /// Index range of action kind 0, 1 or 2.
    pub fn kind_range(&self, kind: usize) -> std::ops::Range<usize> {
        let a = self.type1_count();
        let b = a + self.type2_count();
        let c = b + self.type3_count();
        match kind {
            0 => 0..a,
            1 => a..b,
            2 => b..c,
            _ => c..c + 1,
        }
    }

    pub fn decode(&self, idx: usize) -> AtomicAction {
        let a = self.type1_count();
        let b = a + self.type2_count();
        let c = b + self.type3_count();
        if idx < a {
            AtomicAction::Type1 { cache: idx / self.n_low, content: idx % self.n_low }
        } else if idx < b {
            let k = idx - a;
            AtomicAction::Type2 { fixed: k / self.n_high, content: k % self.n_high }
        } else if idx < c {
            let k = idx - b;
            AtomicAction::Type3 { src: k / (self.n * self.n_low), dst: (k / self.n_low) % self.n, content: k % self.n_low }
        } else {
            AtomicAction::NoOp
        }
    }

    pub fn encode(&self, a: AtomicAction) -> usize {
        match a {
            AtomicAction::Type1 { cache, content } => cache * self.n_low + content,
            AtomicAction::Type2 { fixed, content } => self.type1_count() + fixed * self.n_high + content,
            AtomicAction::Type3 { src, dst, content } => {
                self.type1_count() + self.type2_count() + (src * self.n + dst) * self.n_low + content
            }
            AtomicAction::NoOp => self.noop_index(),
        }
    }
}

pub fn enumerate_atomic_actions(space: &ActionSpace) -> Vec<AtomicAction> {
    (0..space.count()).map(|i| space.decode(i)).collect()
}

/// Maximum dimensions the state vector is padded to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n: usize,
    pub f: usize,
    pub n_low: usize,
    pub n_high: usize,
}

impl StateLayout {
    pub fn of(state: &PlacementState) -> Self {
        StateLayout { n: state.n, f: state.f, n_low: state.n_low, n_high: state.n_high }
    }

    pub fn width(&self) -> usize {
        self.n * self.n_low + self.f * self.n_high + self.n * self.n * self.n_low
    }
}

/// Flattens y rows, then x rows, then z matrices, zero-padded to `layout`.
pub fn encode_state(state: &PlacementState, layout: &StateLayout) -> Result<Vec<f64>> {
    if state.n > layout.n || state.f > layout.f || state.n_low > layout.n_low || state.n_high > layout.n_high {
        return Err(Error::Dimension(format!("placement exceeds layout {layout:?}")));
    }
    let mut v = vec![0.0; layout.width()];
    for i in 0..state.n {
        for l in 0..state.n_low {
            v[i * layout.n_low + l] = state.y(i, l) as u8 as f64;
        }
    }
    let xo = layout.n * layout.n_low;
    for f in 0..state.f {
        for h in 0..state.n_high {
            v[xo + f * layout.n_high + h] = state.x(f, h) as u8 as f64;
        }
    }
    let zo = xo + layout.f * layout.n_high;
    for i in 0..state.n {
        for j in 0..state.n {
            for l in 0..state.n_low {
                v[zo + (i * layout.n + j) * layout.n_low + l] = state.z(i, j, l) as f64;
            }
        }
    }
    Ok(v)
}

/// Inverse of [`encode_state`] for the given actual dimensions.
pub fn decode_state(v: &[f64], layout: &StateLayout, dims: StateLayout) -> Result<PlacementState> {
    if v.len() != layout.width() {
        return Err(Error::Dimension(format!("vector of {} for layout width {}", v.len(), layout.width())));
    }
    let mut s = PlacementState::new(dims.n, dims.f, dims.n_low, dims.n_high);
    for i in 0..dims.n {
        for l in 0..dims.n_low {
            s.set_y(i, l, v[i * layout.n_low + l] != 0.0);
        }
    }
    let xo = layout.n * layout.n_low;
    for f in 0..dims.f {
        for h in 0..dims.n_high {
            s.set_x(f, h, v[xo + f * layout.n_high + h] != 0.0);
        }
    }
    let zo = xo + layout.f * layout.n_high;
    for i in 0..dims.n {
        for j in 0..dims.n {
            for l in 0..dims.n_low {
                s.set_z(i, j, l, v[zo + (i * layout.n + j) * layout.n_low + l] as u32);
            }
        }
    }
    Ok(s)
}

pub fn reward(migration: f64, access: f64, delivery: f64, w: &crate::cost::Weights) -> f64 {
    -crate::cost::weighted_slot_cost(migration, access, delivery, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub weighted_cost: f64,
    pub cost: SlotCost,
    pub requests: u64,
    pub access_delay_sum: f64,
    pub migrations: usize,
    pub cloud_fetches: usize,
}

/// Sums of step outcomes over one episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeTotals {
    pub slots: u64,
    pub migration: f64,
    pub low_access: f64,
    pub high_delivery: f64,
    pub weighted: f64,
    pub power: f64,
    pub access_delay_sum: f64,
    pub requests: u64,
    pub migrations: u64,
    pub cloud_fetches: u64,
    /// Cumulative weighted cost at the end of the episode.
    pub phi: f64,
}

impl EpisodeTotals {
    pub fn add(&mut self, o: &StepOutcome) {
        self.slots += 1;
        self.migration += o.cost.migration.total();
        self.low_access += o.cost.low_access;
        self.high_delivery += o.cost.high_delivery;
        self.weighted += o.weighted_cost;
        self.power += o.cost.migration.power();
        self.access_delay_sum += o.access_delay_sum;
        self.requests += o.requests;
        self.migrations += o.migrations as u64;
        self.cloud_fetches += o.cloud_fetches as u64;
        self.phi = o.cost.phi_cumulative;
    }

    pub fn mean_access_delay(&self) -> f64 {
        if self.requests == 0 { 0.0 } else { self.access_delay_sum / self.requests as f64 }
    }
}

#[derive(Debug, Clone)]
struct Streams {
    requests: ChaCha8Rng,
    arrivals: ChaCha8Rng,
    mobility: ChaCha8Rng,
    overflow: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let mk = |k: u64| ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k));
        Streams { requests: mk(1), arrivals: mk(2), mobility: mk(3), overflow: mk(4) }
    }
}

/// Placement and targets restored by [`Env::begin_episode`].
#[derive(Debug, Clone)]
struct EpisodeStart {
    slot: u64,
    state: PlacementState,
    targets: Vec<usize>,
}

/// Running simulation of one scenario under one overflow strategy.
#[derive(Debug, Clone)]
pub struct Env {
    pub grid: RoadGrid,
    pub turn: TurnPolicy,
    pub link: Link,
    pub costs: CostParameters,
    pub demand: DemandModel,
    pub slot_seconds: f64,
    pub sojourn_cap: f64,
    pub sigma: usize,
    pub arrival_rate: f64,
    pub target_count: usize,
    pub target_period: u64,
    pub caches: Vec<EdgeCache>,
    pub low_sizes: Vec<f64>,
    pub high_sizes: Vec<f64>,
    /// Request rate per cache for each low content.
    pub rates: Vec<f64>,
    pub state: PlacementState,
    pub layout: StateLayout,
    pub targets: Vec<usize>,
    /// high_held[i][h]: target `i` stores high content `h`.
    pub high_held: Vec<Vec<bool>>,
    pub dominating: DominatingSet,
    pub pending_arrivals: Vec<usize>,
    pending_log: TransferLog,
    pub recency: RecencyTracker,
    pub overflow: Strategy,
    pub slot: u64,
    pub phi: f64,
    /// When set, constraints are validated after every action and every admission.
    pub check_constraints: bool,
    pub violations_seen: u64,
    /// Running hash of requests, arrivals, targets and vehicle positions; equal across
    /// strategies that share a seed.
    pub exogenous_digest: u64,
    pub episode_reset: bool,
    episode_start: EpisodeStart,
    dist: DistanceTable,
    sojourn: SojournTable,
    streams: Streams,
    trace: Option<Arc<MobilityTrace>>,
}

impl Env {
    pub fn new(spec: &ScenarioSpec, run_seed: u64, overflow: Strategy) -> Result<Self> {
        Self::with_trace(spec, run_seed, overflow, None)
    }

    pub fn with_trace(
        spec: &ScenarioSpec,
        run_seed: u64,
        overflow: Strategy,
        trace: Option<Arc<MobilityTrace>>,
    ) -> Result<Self> {
        spec.validate()?;
        let grid = RoadGrid::new(spec.grid.n, spec.grid.cell_side_m)?;
        let turn = spec.mobility.turn_policy();
        let mut lay = ChaCha8Rng::seed_from_u64(spec.layout_seed);
        let caches = build_caches(spec, &grid, &mut lay);
        let f = spec.fixed.count;
        let n = caches.len();
        let (lmin, lmax) = (spec.catalog.low_min_mb, spec.catalog.low_max_mb);
        let low_sizes: Vec<f64> =
            (0..spec.catalog.low_count).map(|_| round_mb(lay.random_range(lmin..=lmax))).collect();
        // One uniform draw per item whatever the range, so changing sizes keeps the rest of the layout.
        let (hmin, hmax) = spec.catalog.high_range();
        let high_sizes: Vec<f64> =
            (0..spec.catalog.high_count).map(|_| round_mb(hmin + (hmax - hmin) * lay.random::<f64>())).collect();
        let mut ranks: Vec<usize> = (1..=spec.catalog.low_count).collect();
        ranks.shuffle(&mut lay);
        let rates = ranks
            .iter()
            .map(|&r| zipf_request_rate(r, spec.catalog.low_count, &spec.demand))
            .collect::<Result<Vec<f64>>>()?;
        let mut state = PlacementState::new(n, f, spec.catalog.low_count, spec.catalog.high_count);
        let full: Vec<usize> = (f..f + spec.catalog.full_mobile.min(n - f)).collect();
        for &i in &full {
            let mut order: Vec<usize> = (0..spec.catalog.low_count).collect();
            order.shuffle(&mut lay);
            let mut used = 0.0;
            for l in order {
                if used + low_sizes[l] <= caches[i].storage_mb {
                    state.set_y(i, l, true);
                    used += low_sizes[l];
                }
            }
        }
        let targets: Vec<usize> = full.iter().copied().take(spec.high.targets).collect();
        let dist = DistanceTable::build(&caches, &grid, spec.cost.bandwidth_metric);
        let sojourn = SojournTable::compute(&caches, &grid, &turn, spec.mobility.sojourn_cap_s);
        let episode_start = EpisodeStart { slot: 0, state: state.clone(), targets: targets.clone() };
        let mut env = Env {
            grid,
            turn,
            link: Link { rate: spec.link.rate_mb_s, tau: spec.link.tau_s },
            costs: spec.cost.clone(),
            demand: spec.demand,
            slot_seconds: spec.mobility.slot_seconds,
            sojourn_cap: spec.mobility.sojourn_cap_s,
            sigma: spec.high.sigma,
            arrival_rate: spec.high.arrival_rate,
            target_count: spec.high.targets,
            target_period: spec.high.target_period_slots,
            layout: StateLayout::of(&state),
            caches,
            low_sizes,
            high_sizes,
            rates,
            high_held: vec![vec![false; spec.catalog.high_count]; n],
            state,
            targets,
            dominating: DominatingSet { members: Vec::new(), radius: spec.high.sigma },
            pending_arrivals: Vec::new(),
            pending_log: TransferLog::default(),
            recency: RecencyTracker::default(),
            overflow,
            slot: 0,
            phi: 0.0,
            check_constraints: false,
            violations_seen: 0,
            exogenous_digest: 0,
            episode_reset: spec.episode_reset,
            episode_start,
            dist,
            sojourn,
            streams: Streams::new(run_seed),
            trace,
        };
        env.apply_trace()?;
        env.process_arrivals(false)?;
        Ok(env)
    }

    /// Starts a new episode. With `episode_reset` set this restores the initial placement,
    /// targets and recency and admits a fresh batch of arrivals; vehicles stay where they are.
    /// Does nothing if no slot has passed since the last episode began.
    pub fn begin_episode(&mut self) -> Result<()> {
        if !self.episode_reset || self.slot == self.episode_start.slot {
            return Ok(());
        }
        self.episode_start.slot = self.slot;
        self.state = self.episode_start.state.clone();
        self.targets = self.episode_start.targets.clone();
        for row in &mut self.high_held {
            row.fill(false);
        }
        self.recency = RecencyTracker::default();
        self.pending_log = TransferLog::default();
        self.process_arrivals(false)?;
        self.audit()
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace { n: self.state.n, f: self.state.f, n_low: self.state.n_low, n_high: self.state.n_high }
    }

    pub fn encoded_state(&self) -> Vec<f64> {
        encode_state(&self.state, &self.layout).expect("layout matches own state")
    }

    pub fn distances(&self) -> &DistanceTable {
        &self.dist
    }

    pub fn sojourns(&self) -> &SojournTable {
        &self.sojourn
    }

    /// High-priority volume held at each cache (targets only).
    pub fn high_load(&self) -> Vec<f64> {
        self.high_held
            .iter()
            .map(|row| row.iter().zip(&self.high_sizes).filter(|(h, _)| **h).map(|(_, s)| s).sum())
            .collect()
    }

    pub fn free_mb(&self) -> Vec<f64> {
        let load = self.high_load();
        (0..self.state.n)
            .map(|i| {
                self.caches[i].storage_mb
                    - self.state.low_stored_mb(i, &self.low_sizes)
                    - self.state.high_stored_mb(i, &self.high_sizes)
                    - load[i]
            })
            .collect()
    }

    pub fn violations(&self) -> Result<Vec<Violation>> {
        validate_constraints(&self.state, &self.caches, &self.low_sizes, &self.high_sizes, &self.targets, &self.high_load())
    }

    /// Whether z[src][dst][l] would step up (true) or down (false); None when neither is legal.
    fn type3_direction(&self, src: usize, dst: usize, l: usize) -> Option<bool> {
        if src == dst {
            return None;
        }
        let z = self.state.z(src, dst, l);
        let cap = self.caches[src].max_requests();
        if self.state.y(src, l) && z < cap && self.state.serve_load(src) < cap {
            Some(true)
        } else if z > 0 {
            Some(false)
        } else {
            None
        }
    }

    pub fn is_legal(&self, a: AtomicAction) -> bool {
        match a {
            AtomicAction::NoOp => true,
            AtomicAction::Type1 { cache, content } => {
                cache < self.state.n
                    && content < self.state.n_low
                    && (self.state.y(cache, content) || self.free_at(cache) + 1e-9 >= self.low_sizes[content])
            }
            AtomicAction::Type2 { fixed, content } => {
                fixed < self.state.f
                    && content < self.state.n_high
                    && (self.state.x(fixed, content) || self.free_at(fixed) + 1e-9 >= self.high_sizes[content])
            }
            AtomicAction::Type3 { src, dst, content } => {
                src < self.state.n
                    && dst < self.state.n
                    && content < self.state.n_low
                    && self.type3_direction(src, dst, content).is_some()
            }
        }
    }

    fn free_at(&self, i: usize) -> f64 {
        let load: f64 = self.high_held[i].iter().zip(&self.high_sizes).filter(|(h, _)| **h).map(|(_, s)| s).sum();
        self.caches[i].storage_mb
            - self.state.low_stored_mb(i, &self.low_sizes)
            - self.state.high_stored_mb(i, &self.high_sizes)
            - load
    }

    pub fn legal_mask(&self) -> Vec<bool> {
        let space = self.action_space();
        let free = self.free_mb();
        let mut mask = vec![false; space.count()];
        for i in 0..self.state.n {
            for l in 0..self.state.n_low {
                mask[space.encode(AtomicAction::Type1 { cache: i, content: l })] =
                    self.state.y(i, l) || free[i] + 1e-9 >= self.low_sizes[l];
            }
        }
        for f in 0..self.state.f {
            for h in 0..self.state.n_high {
                mask[space.encode(AtomicAction::Type2 { fixed: f, content: h })] =
                    self.state.x(f, h) || free[f] + 1e-9 >= self.high_sizes[h];
            }
        }
        let base = space.type1_count() + space.type2_count();
        let loads: Vec<u32> = (0..self.state.n).map(|i| self.state.serve_load(i)).collect();
        let z = self.state.z_raw();
        for i in 0..self.state.n {
            let cap = self.caches[i].max_requests();
            for j in 0..self.state.n {
                if i == j {
                    continue;
                }
                let off = (i * self.state.n + j) * self.state.n_low;
                for l in 0..self.state.n_low {
                    let zv = z[off + l];
                    mask[base + off + l] = (self.state.y(i, l) && zv < cap && loads[i] < cap) || zv > 0;
                }
            }
        }
        mask[space.noop_index()] = true;
        mask
    }

    fn apply_action(&mut self, action: AtomicAction) -> Result<TransferLog> {
        if !self.is_legal(action) {
            return Err(Error::IllegalAction(format!("{action:?}")));
        }
        let flip = match action {
            AtomicAction::NoOp => return Ok(TransferLog::default()),
            AtomicAction::Type3 { src, dst, content } => {
                let z = self.state.z(src, dst, content);
                let up = self.type3_direction(src, dst, content).expect("checked legal");
                self.state.set_z(src, dst, content, if up { z + 1 } else { z - 1 });
                return Ok(TransferLog::default());
            }
            AtomicAction::Type1 { cache, content } => Flip::Y { cache, content },
            AtomicAction::Type2 { fixed, content } => Flip::X { fixed, content },
        };
        let (next, log) = apply_placement_delta(&self.state, &[flip], &self.dist, &self.low_sizes, &self.high_sizes)?;
        self.state = next;
        if let Flip::Y { cache, content } = flip {
            if self.state.y(cache, content) {
                self.recency.touch(cache, content, self.slot);
            } else {
                self.state.clear_redirects_to(cache, content);
                self.recency.forget(cache, content);
            }
        }
        Ok(log)
    }

    fn sample_requests(&mut self) -> RequestBatch {
        let mut batch = RequestBatch::empty(self.state.n, self.state.n_low);
        for l in 0..self.state.n_low {
            let rate = self.rates[l];
            for i in 0..self.state.n {
                batch.set(l, i, poisson(&mut self.streams.requests, rate));
            }
        }
        batch
    }

    /// Executes one slot: action, requests, costs, movement, arrivals, next state.
    pub fn step(&mut self, action: AtomicAction) -> Result<StepOutcome> {
        let mut log = self.apply_action(action)?;
        self.audit()?;

        let requests = self.sample_requests();
        self.exogenous_digest = fold_digest(self.exogenous_digest, (0..self.state.n_low).flat_map(|l| {
            let r = &requests;
            (0..r.n_caches).map(move |i| r.get(l, i) as u64)
        }));
        let served = route_requests(&self.state, &requests, &self.sojourn, &self.link, &self.low_sizes);
        let mut access_delay_sum = 0.0;
        for r in &served {
            match r.service {
                Service::Local => self.recency.touch(r.at, r.content, self.slot),
                Service::Edge { holder, .. } => self.recency.touch(holder, r.content, self.slot),
                Service::Cloud => {}
            }
            access_delay_sum += request_delay(r, &self.link, &self.costs) + r.size_mb * self.costs.user_delay_per_mb;
        }

        let deliveries = plan_high_deliveries(
            &self.state,
            &self.dominating,
            &self.pending_arrivals,
            &self.high_sizes,
            &self.sojourn,
            &self.link,
        );
        let mut slot_log = std::mem::take(&mut self.pending_log);
        slot_log.extend(std::mem::take(&mut log));
        slot_log.extend(delivery_log(&deliveries));
        slot_log.extend(self.relay_log());
        let migration: MigrationCost = migration_cost_slot(&slot_log, &self.costs, &self.dist);
        let low_access = low_priority_access_cost(&served, &self.link, &self.costs);
        let high_delivery = high_priority_delivery_cost(&deliveries, &self.link, &self.costs);
        let prev = SlotCost { phi_cumulative: self.phi, ..Default::default() };
        let cost = accumulate_phi(&prev, migration, low_access, high_delivery, &self.costs.weights);
        let weighted = cost.weighted(&self.costs.weights);
        self.phi = cost.phi_cumulative;

        self.advance_mobility()?;
        self.slot += 1;
        self.process_arrivals(true)?;
        self.audit()?;
        let positions: Vec<u64> = self
            .caches
            .iter()
            .filter_map(|c| c.kinematics)
            .flat_map(|k| [k.position.x.to_bits(), k.position.y.to_bits()])
            .collect();
        self.exogenous_digest = fold_digest(
            self.exogenous_digest,
            self.pending_arrivals.iter().chain(&self.targets).map(|&v| v as u64).chain(positions),
        );

        Ok(StepOutcome {
            next_state: self.encoded_state(),
            reward: reward(migration.total(), low_access, high_delivery, &self.costs.weights),
            weighted_cost: weighted,
            cost,
            requests: served.len() as u64,
            access_delay_sum,
            migrations: slot_log.migrations(),
            cloud_fetches: served.iter().filter(|r| !matches!(r.service, Service::Local)).count(),
        })
    }

    fn audit(&mut self) -> Result<()> {
        if self.check_constraints {
            let v = self.violations()?;
            if !v.is_empty() {
                log::warn!("slot {}: {} constraint violations, first {:?}", self.slot, v.len(), v[0]);
            }
            self.violations_seen += v.len() as u64;
        }
        Ok(())
    }

    /// Targets outside the dominating set receive each arrival from their dominator.
    fn relay_log(&self) -> TransferLog {
        let mut log = TransferLog::default();
        if self.pending_arrivals.is_empty() {
            return log;
        }
        for &q in &self.targets {
            if self.dominating.members.contains(&q) {
                continue;
            }
            let from = self
                .dominating
                .members
                .iter()
                .copied()
                .min_by(|&a, &b| self.dist.get(a, q).total_cmp(&self.dist.get(b, q)).then(a.cmp(&b)));
            for &h in &self.pending_arrivals {
                let source = match from {
                    Some(u) if self.dist.get(u, q).is_finite() => Endpoint::Cache(u),
                    _ => Endpoint::Cloud,
                };
                log.entries.push(LogEntry::Download { source, dest: q, content: ContentRef::High(h), mb: self.high_sizes[h] });
            }
        }
        log
    }

    fn apply_trace(&mut self) -> Result<()> {
        let Some(trace) = self.trace.clone() else { return Ok(()) };
        let f = self.state.f;
        let t = (self.slot as f64 * self.slot_seconds).round() as u64;
        for (k, cache) in self.caches.iter_mut().enumerate().skip(f) {
            let vid = k - f;
            let fallback = cache.kinematics.map(|k| k.heading).unwrap_or(Heading::East);
            if let Some(kin) = trace.kinematics(t, vid, fallback) {
                cache.kinematics = Some(kin);
            }
        }
        Ok(())
    }

    fn advance_mobility(&mut self) -> Result<()> {
        if self.trace.is_some() {
            self.slot += 1;
            let r = self.apply_trace();
            self.slot -= 1;
            r?;
        } else {
            for cache in self.caches.iter_mut() {
                if let Some(kin) = cache.kinematics {
                    cache.kinematics =
                        Some(step_vehicle(kin, &self.grid, &self.turn, self.slot_seconds, &mut self.streams.mobility)?);
                }
            }
        }
        self.dist = DistanceTable::build(&self.caches, &self.grid, self.costs.bandwidth_metric);
        self.sojourn = SojournTable::compute(&self.caches, &self.grid, &self.turn, self.sojourn_cap);
        Ok(())
    }

    /// Samples the next slot's arrivals, rotates targets at period boundaries, makes room at
    /// targets through the overflow strategy and refreshes the dominating set.
    fn process_arrivals(&mut self, allow_rotation: bool) -> Result<()> {
        let mobile: Vec<usize> = (self.state.f..self.state.n).collect();
        if allow_rotation && self.target_period > 0 && self.slot.is_multiple_of(self.target_period) {
            let mut pool = mobile.clone();
            pool.shuffle(&mut self.streams.arrivals);
            let mut next: Vec<usize> = pool.into_iter().take(self.target_count).collect();
            next.sort_unstable();
            for &q in &self.targets {
                if !next.contains(&q) {
                    for h in 0..self.state.n_high {
                        if self.high_held[q][h] {
                            self.high_held[q][h] = false;
                            self.pending_log.entries.push(LogEntry::Eviction {
                                cache: q,
                                content: ContentRef::High(h),
                                mb: self.high_sizes[h],
                            });
                        }
                    }
                }
            }
            self.targets = next;
        }
        let k = poisson(&mut self.streams.arrivals, self.arrival_rate);
        let arrivals: Vec<usize> = if self.state.n_high == 0 {
            Vec::new()
        } else {
            (0..k).map(|_| self.streams.arrivals.random_range(0..self.state.n_high)).collect()
        };
        let mut distinct = arrivals.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let targets = self.targets.clone();
        for q in targets {
            for &h in &distinct {
                if self.high_held[q][h] {
                    continue;
                }
                self.make_room(q, self.high_sizes[h])?;
                self.high_held[q][h] = true;
            }
        }
        let refs: Vec<&EdgeCache> = self.targets.iter().map(|&q| &self.caches[q]).collect();
        self.dominating = if refs.is_empty() {
            DominatingSet { members: Vec::new(), radius: self.sigma }
        } else {
            dominating_set(&build_contact_graph(&refs, &self.grid), self.sigma)
        };
        self.pending_arrivals = arrivals;
        Ok(())
    }

    fn make_room(&mut self, target: usize, needed_mb: f64) -> Result<()> {
        let free = self.free_mb();
        if free[target] + 1e-9 >= needed_mb {
            return Ok(());
        }
        let ctx = DecisionContext {
            state: &self.state,
            caches: &self.caches,
            low_sizes: &self.low_sizes,
            free_mb: &free,
            dist: &self.dist,
            excluded: &self.targets,
        };
        let decisions = baseline_decide(self.overflow, &ctx, needed_mb, target, &self.recency, &mut self.streams.overflow);
        for d in decisions {
            let l = d.victim;
            let mb = self.low_sizes[l];
            if let Destination::Cache(dest) = d.destination {
                self.state.set_y(dest, l, true);
                self.recency.touch(dest, l, self.slot);
                self.pending_log.entries.push(LogEntry::Download {
                    source: Endpoint::Cache(d.source),
                    dest,
                    content: ContentRef::Low(l),
                    mb,
                });
            }
            self.state.set_y(d.source, l, false);
            self.state.clear_redirects_to(d.source, l);
            self.recency.forget(d.source, l);
            self.pending_log.entries.push(LogEntry::Eviction { cache: d.source, content: ContentRef::Low(l), mb });
        }
        Ok(())
    }
}

fn fold_digest(seed: u64, values: impl Iterator<Item = u64>) -> u64 {
    use std::hash::{DefaultHasher, Hash, Hasher};
    let mut h = DefaultHasher::new();
    seed.hash(&mut h);
    for v in values {
        v.hash(&mut h);
    }
    h.finish()
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map(|p| p.sample(rng) as u32).unwrap_or(0)
}

fn round_mb(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn build_caches(spec: &ScenarioSpec, grid: &RoadGrid, rng: &mut ChaCha8Rng) -> Vec<EdgeCache> {
    let cs = grid.cell_side;
    let n = grid.n;
    let mut intersections: Vec<Point> =
        (0..n * n).map(|k| Point::new((k % n) as f64 * cs, (k / n) as f64 * cs)).collect();
    intersections.shuffle(rng);
    let mut midpoints: Vec<Point> = (0..n * n)
        .flat_map(|k| {
            let (x, y) = ((k % n) as f64 * cs, (k / n) as f64 * cs);
            [Point::new(x + cs / 2.0, y), Point::new(x, y + cs / 2.0)]
        })
        .collect();
    midpoints.shuffle(rng);
    let mut out = Vec::new();
    for id in 0..spec.fixed.count {
        let (kind, anchor) = if id % 2 == 0 {
            let p = intersections[(id / 2) % intersections.len()];
            (CacheKind::FixedIntersection, p)
        } else {
            let p = midpoints[(id / 2) % midpoints.len()];
            (CacheKind::FixedStraight, p)
        };
        out.push(EdgeCache {
            id,
            kind,
            storage_mb: spec.fixed.storage_mb,
            processing_units: spec.fixed.processing_units,
            units_per_request: spec.fixed.units_per_request,
            coverage_diameter: spec.fixed.coverage_m,
            anchor,
            kinematics: None,
        });
    }
    let speed = spec.mobility.speed_kmh / 3.6;
    for k in 0..spec.mobile.count {
        let horizontal = rng.random_bool(0.5);
        let line = rng.random_range(0..n) as f64 * cs;
        let along = rng.random_range(0.0..grid.side());
        let (position, heading) = if horizontal {
            (Point::new(along, line), if rng.random_bool(0.5) { Heading::East } else { Heading::West })
        } else {
            (Point::new(line, along), if rng.random_bool(0.5) { Heading::North } else { Heading::South })
        };
        out.push(EdgeCache {
            id: spec.fixed.count + k,
            kind: CacheKind::Mobile,
            storage_mb: spec.mobile.storage_mb,
            processing_units: spec.mobile.processing_units,
            units_per_request: spec.mobile.units_per_request,
            coverage_diameter: spec.mobile.coverage_m,
            anchor: position,
            kinematics: Some(VehicleKinematics { position, velocity: speed, heading }),
        });
    }
    out
}
