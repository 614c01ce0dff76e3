//! Scenario configuration, experiment orchestration and metrics output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{run_training_episode, Agent, AgentConfig};
use crate::baselines::{exhaustive_optimal, Strategy};
use crate::cost::{CostParameters, DemandModel};
use crate::error::{Error, Result};
use crate::mdp::{AtomicAction, EpisodeTotals, Env};
use crate::mobility::TurnPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Roads per direction; the torus is `n * cell_side_m` on a side.
    pub n: usize,
    pub cell_side_m: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n: 3, cell_side_m: 500.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilitySpec {
    pub speed_kmh: f64,
    pub mu_straight: f64,
    pub mu_left: f64,
    pub mu_right: f64,
    pub slot_seconds: f64,
    pub sojourn_cap_s: f64,
}

impl Default for MobilitySpec {
    fn default() -> Self {
        MobilitySpec { speed_kmh: 30.0, mu_straight: 0.5, mu_left: 0.25, mu_right: 0.25, slot_seconds: 1.0, sojourn_cap_s: 1.0 }
    }
}

impl MobilitySpec {
    pub fn turn_policy(&self) -> TurnPolicy {
        TurnPolicy { mu_straight: self.mu_straight, mu_left: self.mu_left, mu_right: self.mu_right }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSpec {
    pub count: usize,
    pub storage_mb: f64,
    pub processing_units: f64,
    pub units_per_request: f64,
    /// Coverage disc diameter in metres.
    pub coverage_m: f64,
}

impl CacheSpec {
    pub fn fixed_default() -> Self {
        CacheSpec { count: 6, storage_mb: 1500.0, processing_units: 4.0, units_per_request: 0.2, coverage_m: 60.0 }
    }

    pub fn mobile_default() -> Self {
        CacheSpec { count: 10, storage_mb: 700.0, processing_units: 1.0, units_per_request: 0.2, coverage_m: 10.0 }
    }
}

impl Default for CacheSpec {
    fn default() -> Self {
        Self::fixed_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSpec {
    pub low_count: usize,
    pub low_min_mb: f64,
    pub low_max_mb: f64,
    pub high_count: usize,
    pub high_min_mb: f64,
    pub high_max_mb: f64,
    /// Mobile caches filled with low-priority content at start.
    pub full_mobile: usize,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        CatalogSpec {
            low_count: 40,
            low_min_mb: 50.0,
            low_max_mb: 120.0,
            high_count: 3,
            high_min_mb: 50.0,
            high_max_mb: 120.0,
            full_mobile: 8,
        }
    }
}

impl CatalogSpec {
    pub fn high_range(&self) -> (f64, f64) {
        (self.high_min_mb, self.high_max_mb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighSpec {
    pub targets: usize,
    /// Mean high-priority arrivals per slot.
    pub arrival_rate: f64,
    /// Hop radius of the dominating set.
    pub sigma: usize,
    /// Slots between target set redraws (0 keeps the initial targets).
    pub target_period_slots: u64,
}

impl Default for HighSpec {
    fn default() -> Self {
        HighSpec { targets: 5, arrival_rate: 5.0, sigma: 1, target_period_slots: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSpec {
    pub rate_mb_s: f64,
    pub tau_s: f64,
}

impl Default for LinkSpec {
    fn default() -> Self {
        LinkSpec { rate_mb_s: 10.0, tau_s: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    /// Seeds positions, content sizes, popularity ranks and the initial fill.
    pub layout_seed: u64,
    /// Restore the initial placement, targets and recency at the start of every episode.
    /// Mobility and the random streams carry on.
    pub episode_reset: bool,
    pub grid: GridSpec,
    pub mobility: MobilitySpec,
    pub fixed: CacheSpec,
    pub mobile: CacheSpec,
    pub catalog: CatalogSpec,
    pub high: HighSpec,
    pub demand: DemandModel,
    pub cost: CostParameters,
    pub link: LinkSpec,
    pub agent: AgentConfig,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 1,
            layout_seed: 7,
            episode_reset: true,
            grid: GridSpec::default(),
            mobility: MobilitySpec::default(),
            fixed: CacheSpec::fixed_default(),
            mobile: CacheSpec::mobile_default(),
            catalog: CatalogSpec::default(),
            high: HighSpec::default(),
            demand: DemandModel::default(),
            cost: CostParameters::default(),
            link: LinkSpec::default(),
            agent: AgentConfig::default(),
        }
    }
}

fn config_err<T>(key: &str, reason: impl Into<String>) -> Result<T> {
    Err(Error::Config { key: key.into(), reason: reason.into() })
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() { Ok(()) } else { config_err(key, format!("must be positive, got {v}")) }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() { Ok(()) } else { config_err(key, format!("must be non-negative, got {v}")) }
}

impl ScenarioSpec {
    /// Two fixed and two mobile caches with a four-item catalog, small enough for the oracle.
    pub fn small() -> Self {
        let mut s = ScenarioSpec::default();
        s.grid.n = 2;
        s.fixed.count = 2;
        s.mobile.count = 2;
        s.catalog.low_count = 4;
        s.catalog.high_count = 1;
        s.catalog.full_mobile = 2;
        s.high.targets = 2;
        s
    }

    /// Twelve fixed and twenty mobile caches on a 5x5 grid.
    pub fn large() -> Self {
        let mut s = ScenarioSpec::default();
        s.grid.n = 5;
        s.fixed.count = 12;
        s.mobile.count = 20;
        s.catalog.full_mobile = 16;
        s.high.targets = 10;
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.n == 0 {
            return config_err("grid.n", "must be at least 1");
        }
        positive("grid.cell_side_m", self.grid.cell_side_m)?;
        non_negative("mobility.speed_kmh", self.mobility.speed_kmh)?;
        positive("mobility.slot_seconds", self.mobility.slot_seconds)?;
        positive("mobility.sojourn_cap_s", self.mobility.sojourn_cap_s)?;
        if let Err(e) = self.mobility.turn_policy().validate() {
            return config_err("mobility.mu_straight", e.to_string());
        }
        for (name, c) in [("fixed", &self.fixed), ("mobile", &self.mobile)] {
            non_negative(&format!("{name}.storage_mb"), c.storage_mb)?;
            non_negative(&format!("{name}.processing_units"), c.processing_units)?;
            positive(&format!("{name}.units_per_request"), c.units_per_request)?;
            non_negative(&format!("{name}.coverage_m"), c.coverage_m)?;
        }
        if self.fixed.count + self.mobile.count == 0 {
            return config_err("fixed.count", "scenario needs at least one cache");
        }
        let cat = &self.catalog;
        positive("catalog.low_min_mb", cat.low_min_mb)?;
        if cat.low_max_mb < cat.low_min_mb {
            return config_err("catalog.low_max_mb", "must be at least low_min_mb");
        }
        positive("catalog.high_min_mb", cat.high_min_mb)?;
        if cat.high_max_mb < cat.high_min_mb {
            return config_err("catalog.high_max_mb", "must be at least high_min_mb");
        }
        if cat.full_mobile > self.mobile.count {
            return config_err("catalog.full_mobile", "exceeds the mobile cache count");
        }
        if self.high.targets > self.mobile.count {
            return config_err("high.targets", "exceeds the mobile cache count");
        }
        non_negative("high.arrival_rate", self.high.arrival_rate)?;
        if cat.high_count as f64 * cat.high_max_mb > self.mobile.storage_mb && self.high.targets > 0 {
            return config_err("catalog.high_max_mb", "the whole high-priority catalog must fit in one mobile cache");
        }
        positive("demand.request_rate", self.demand.request_rate)?;
        non_negative("demand.zipf_slope", self.demand.zipf_slope)?;
        let c = &self.cost;
        for (k, v) in [
            ("cost.upload_per_mb", c.upload_per_mb),
            ("cost.download_per_mb", c.download_per_mb),
            ("cost.bandwidth_per_mb_hop", c.bandwidth_per_mb_hop),
            ("cost.cloud_delay_per_mb", c.cloud_delay_per_mb),
            ("cost.user_delay_per_mb", c.user_delay_per_mb),
            ("cost.low_delay_cost", c.low_delay_cost),
            ("cost.high_delay_cost", c.high_delay_cost),
            ("cost.weights.migration", c.weights.migration),
            ("cost.weights.access", c.weights.access),
            ("cost.weights.delivery", c.weights.delivery),
        ] {
            non_negative(k, v)?;
        }
        positive("link.rate_mb_s", self.link.rate_mb_s)?;
        non_negative("link.tau_s", self.link.tau_s)?;
        self.agent.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| Error::Config { key: "<file>".into(), reason: e.to_string() })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config { key: "<file>".into(), reason: e.to_string() })
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    ScenarioSpec::from_toml(&std::fs::read_to_string(path)?)
}

/// A baseline strategy or the learning agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Drlcm,
    Baseline(Strategy),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Drlcm => "drlcm",
            Method::Baseline(s) => s.name(),
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        if s.eq_ignore_ascii_case("drlcm") {
            return Ok(Method::Drlcm);
        }
        Strategy::parse(s).map(Method::Baseline).ok_or_else(|| Error::Config {
            key: "strategies".into(),
            reason: format!("unknown strategy {s:?}"),
        })
    }

    pub fn all() -> Vec<Method> {
        std::iter::once(Method::Drlcm).chain(Strategy::ALL.into_iter().map(Method::Baseline)).collect()
    }
}

/// One metrics row per (strategy, episode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub strategy: String,
    pub episode: u64,
    /// Global index of the episode's last slot.
    pub slot: u64,
    pub c_m: f64,
    pub c_a: f64,
    pub c_d: f64,
    pub cost: f64,
    pub phi: f64,
    pub power: f64,
    pub mean_access_delay: f64,
    pub migrations: u64,
    pub cloud_fetches: u64,
}

impl MetricsRecord {
    fn from_totals(run_id: &str, method: Method, episode: u64, slot: u64, t: &EpisodeTotals) -> Self {
        MetricsRecord {
            run_id: run_id.into(),
            strategy: method.name().into(),
            episode,
            slot,
            c_m: t.migration,
            c_a: t.low_access,
            c_d: t.high_delivery,
            cost: t.weighted,
            phi: t.phi,
            power: t.power,
            mean_access_delay: t.mean_access_delay(),
            migrations: t.migrations,
            cloud_fetches: t.cloud_fetches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    /// Mean per-episode cost over the final tenth of the run.
    pub final_cost: f64,
    pub power: f64,
    pub access_delay: f64,
    /// Relative to LRU-NoMig; empty when NoMig was not run.
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<MetricsRecord>,
    pub summary: Vec<SummaryRow>,
}

pub fn improvement_pct(nomig: f64, cost: f64) -> f64 {
    if nomig == 0.0 {
        if cost == 0.0 { 0.0 } else { f64::NEG_INFINITY }
    } else {
        100.0 * (nomig - cost) / nomig
    }
}

/// Runs a baseline strategy for `episodes` windows of `slots` slots.
pub fn run_baseline(spec: &ScenarioSpec, strategy: Strategy, episodes: u64, seed: u64) -> Result<Vec<EpisodeTotals>> {
    let mut env = Env::new(spec, seed, strategy)?;
    let mut out = Vec::with_capacity(episodes as usize);
    for _ in 0..episodes {
        env.begin_episode()?;
        let mut t = EpisodeTotals::default();
        for _ in 0..spec.agent.slots_per_episode {
            t.add(&env.step(AtomicAction::NoOp)?);
        }
        out.push(t);
    }
    Ok(out)
}

/// Trains the agent for `episodes` windows and returns its per-episode totals.
pub fn run_agent(spec: &ScenarioSpec, episodes: u64, seed: u64) -> Result<Vec<EpisodeTotals>> {
    let config = AgentConfig { episodes, ..spec.agent.clone() };
    let out = crate::agent::run_training::<f64>(spec, &config, seed)?;
    Ok(out.episodes)
}

pub fn run_method(spec: &ScenarioSpec, method: Method, episodes: u64, seed: u64) -> Result<Vec<EpisodeTotals>> {
    match method {
        Method::Drlcm => run_agent(spec, episodes, seed),
        Method::Baseline(s) => run_baseline(spec, s, episodes, seed),
    }
}

/// Mean cost, power and request-weighted delay over the last tenth of the episodes.
pub fn final_window(totals: &[EpisodeTotals]) -> (f64, f64, f64) {
    if totals.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let k = (totals.len() / 10).max(1);
    let tail = &totals[totals.len() - k..];
    let cost = tail.iter().map(|t| t.weighted).sum::<f64>() / k as f64;
    let power = tail.iter().map(|t| t.power).sum::<f64>() / k as f64;
    let req: u64 = tail.iter().map(|t| t.requests).sum();
    let delay = if req == 0 { 0.0 } else { tail.iter().map(|t| t.access_delay_sum).sum::<f64>() / req as f64 };
    (cost, power, delay)
}

/// Every method runs on the same seeded exogenous streams.
pub fn run_experiment(spec: &ScenarioSpec, methods: &[Method], episodes: u64, seed: u64) -> Result<ExperimentResult> {
    spec.validate()?;
    let run_id = format!("seed{seed}");
    let mut records = Vec::new();
    let mut finals = Vec::new();
    for &m in methods {
        log::info!("running {} for {episodes} episodes (seed {seed})", m.name());
        let totals = run_method(spec, m, episodes, seed)?;
        for (ep, t) in totals.iter().enumerate() {
            let slot = (ep as u64 + 1) * spec.agent.slots_per_episode - 1;
            records.push(MetricsRecord::from_totals(&run_id, m, ep as u64, slot, t));
        }
        finals.push((m, final_window(&totals)));
    }
    let nomig = finals.iter().find(|(m, _)| *m == Method::Baseline(Strategy::NoMig)).map(|(_, f)| f.0);
    let summary = finals
        .iter()
        .map(|(m, (cost, power, delay))| SummaryRow {
            strategy: m.name().into(),
            final_cost: *cost,
            power: *power,
            access_delay: *delay,
            improvement_pct: nomig.map(|n| improvement_pct(n, *cost)),
        })
        .collect();
    Ok(ExperimentResult { records, summary })
}

pub fn write_csv<S: Serialize, W: std::io::Write>(rows: &[S], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics<R: std::io::Read>(input: R) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&result.records, std::fs::File::create(dir.join("metrics.csv"))?)?;
    write_csv(&result.summary, std::fs::File::create(dir.join("summary.csv"))?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub episode: u64,
    pub agent_cost: f64,
    pub optimal_cost: f64,
    pub gap: f64,
    /// Constraint violations seen so far in training (0 unless auditing is on).
    pub violations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapOptions {
    pub horizon: usize,
    /// Snapshots averaged per checkpoint, one slot apart.
    pub samples: usize,
    pub bound: f64,
    /// Audit constraints after every training action.
    pub check_constraints: bool,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions { horizon: 2, samples: 5, bound: 1e7, check_constraints: false }
    }
}

/// Greedy agent cost and oracle cost from the same snapshot.
pub fn gap_at(agent: &Agent<f64>, snapshot: &Env, horizon: usize, bound: f64) -> Result<(f64, f64)> {
    let opt = exhaustive_optimal(snapshot, horizon, bound)?;
    let mut env = snapshot.clone();
    let mut cost = 0.0;
    for _ in 0..horizon {
        let a = agent.act_greedy(&env)?;
        cost += env.step(env.action_space().decode(a))?.weighted_cost;
    }
    Ok((cost, opt.cost))
}

/// Trains on `spec` and pauses at each checkpoint episode to measure |agent − optimum|.
pub fn optimality_gap_experiment(
    spec: &ScenarioSpec,
    checkpoints: &[u64],
    seed: u64,
    options: GapOptions,
) -> Result<Vec<GapPoint>> {
    let last = checkpoints.iter().copied().max().unwrap_or(0);
    let config = AgentConfig { episodes: spec.agent.episodes.max(last), ..spec.agent.clone() };
    let mut env = Env::new(spec, seed, Strategy::NoMig)?;
    env.check_constraints = options.check_constraints;
    let mut agent = Agent::<f64>::new(config, env.layout.width(), env.action_space(), seed)?;
    let mut out = Vec::new();
    for ep in 0..=last {
        if checkpoints.contains(&ep) {
            env.begin_episode()?;
            let mut probe = env.clone();
            let (mut a_sum, mut o_sum) = (0.0, 0.0);
            for _ in 0..options.samples.max(1) {
                let (a, o) = gap_at(&agent, &probe, options.horizon, options.bound)?;
                a_sum += a;
                o_sum += o;
                probe.step(AtomicAction::NoOp)?;
            }
            let k = options.samples.max(1) as f64;
            let (a, o) = (a_sum / k, o_sum / k);
            log::info!("episode {ep}: agent {a:.3}, optimum {o:.3}");
            out.push(GapPoint { episode: ep, agent_cost: a, optimal_cost: o, gap: (a - o).abs(), violations: env.violations_seen });
        }
        if ep < last {
            run_training_episode(&mut agent, &mut env)?;
        }
    }
    Ok(out)
}

/// Mean episode cost of every method for each fixed high-priority size, averaged over seeds.
pub fn size_sweep(
    spec: &ScenarioSpec,
    methods: &[Method],
    sizes_mb: &[f64],
    episodes: u64,
    seeds: &[u64],
) -> Result<Vec<(f64, Method, f64)>> {
    let mut out = Vec::new();
    for &size in sizes_mb {
        let mut s = spec.clone();
        s.catalog.high_min_mb = size;
        s.catalog.high_max_mb = size;
        for &m in methods {
            let mut total = 0.0;
            for &seed in seeds {
                let totals = run_method(&s, m, episodes, seed)?;
                total += totals.iter().map(|t| t.weighted).sum::<f64>() / totals.len().max(1) as f64;
            }
            out.push((size, m, total / seeds.len().max(1) as f64));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let s = ScenarioSpec::from_toml("").unwrap();
        assert_eq!(s, ScenarioSpec::default());
        assert_eq!(s.fixed.storage_mb, 1500.0);
        assert_eq!(s.mobile.storage_mb, 700.0);
        assert_eq!(s.catalog.low_count, 40);
        assert_eq!(s.agent.warmup_steps, 700);
        assert_eq!(s.agent.batch_size, 30);
    }

    #[test]
    fn negative_capacity_names_key() {
        let err = ScenarioSpec::from_toml("[fixed]\nstorage_mb = -1.0\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "fixed.storage_mb"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut s = ScenarioSpec::small();
        s.agent.reward_scale = 1.0 / 3.0;
        let text = s.to_toml().unwrap();
        assert_eq!(ScenarioSpec::from_toml(&text).unwrap(), s);
    }

    #[test]
    fn nomig_against_itself() {
        assert_eq!(improvement_pct(120.0, 120.0), 0.0);
        assert_eq!(improvement_pct(0.0, 0.0), 0.0);
        assert_eq!(improvement_pct(200.0, 50.0), 75.0);
    }
}
