//! Double deep Q-learning over the placement environment.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::Strategy;
use crate::error::{Error, Result};
use crate::harness::ScenarioSpec;
use crate::mdp::{ActionSpace, EpisodeTotals, Env, StepOutcome};
use crate::neural::{sync_target_params, GradientSet, PlateauSchedule, QNetwork, Role, SparseVec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub discount: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of all training steps over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub sync_period: u64,
    pub batch_size: usize,
    pub warmup_steps: u64,
    pub episodes: u64,
    pub slots_per_episode: u64,
    pub replay_capacity: usize,
    pub hidden: usize,
    pub use_lstm: bool,
    pub double_q: bool,
    /// Multiplies rewards before they enter the replay buffer.
    pub reward_scale: f64,
    pub plateau_window: usize,
    /// Save both networks every this many episodes (0 disables).
    pub checkpoint_every: u64,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            discount: 0.9,
            learning_rate: 1e-3,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            sync_period: 500,
            batch_size: 30,
            warmup_steps: 700,
            episodes: 3000,
            slots_per_episode: 10,
            replay_capacity: 10_000,
            hidden: 64,
            use_lstm: true,
            double_q: true,
            reward_scale: 1e-4,
            plateau_window: 200,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::Config { key: format!("agent.{key}"), reason: reason.into() });
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount", "must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        for (k, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(k, "must lie in [0, 1]");
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return bad("epsilon_decay_fraction", "must lie in [0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.replay_capacity < self.batch_size {
            return bad("replay_capacity", "must hold at least one batch");
        }
        if self.warmup_steps < self.batch_size as u64 {
            return bad("warmup_steps", "must be at least the batch size");
        }
        if self.sync_period == 0 {
            return bad("sync_period", "must be positive");
        }
        if self.slots_per_episode == 0 {
            return bad("slots_per_episode", "must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden", "must be positive");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale", "must be positive");
        }
        if self.plateau_window == 0 {
            return bad("plateau_window", "must be positive");
        }
        Ok(())
    }

    /// Linear decay from start to end over the configured fraction of `total` steps.
    pub fn epsilon_at(&self, step: u64, total: u64) -> f64 {
        let span = self.epsilon_decay_fraction * total as f64;
        if span <= 0.0 || step as f64 >= span {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * (step as f64 / span)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experience<T> {
    pub state: SparseVec<T>,
    pub action: usize,
    pub reward: T,
    pub next_state: SparseVec<T>,
    /// Legal actions in `next_state`, one bit each.
    pub next_legal: Vec<u64>,
}

pub fn pack_mask(mask: &[bool]) -> Vec<u64> {
    let mut out = vec![0u64; mask.len().div_ceil(64)];
    for (k, &m) in mask.iter().enumerate() {
        if m {
            out[k / 64] |= 1 << (k % 64);
        }
    }
    out
}

pub fn mask_bit(bits: &[u64], k: usize) -> bool {
    bits[k / 64] >> (k % 64) & 1 == 1
}

/// Fixed-capacity FIFO of experiences.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    entries: Vec<Experience<T>>,
    next: usize,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, entries: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, e: Experience<T>) {
        if self.entries.len() < self.capacity {
            self.entries.push(e);
        } else {
            self.entries[self.next] = e;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, k: usize) -> &Experience<T> {
        &self.entries[k]
    }

    /// Distinct uniform indices.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch > self.entries.len() {
            return Err(Error::BufferTooSmall { have: self.entries.len(), need: batch });
        }
        Ok(sample(rng, self.entries.len(), batch).into_vec())
    }
}

/// Highest value among legal entries; ties go to the lowest index.
pub fn greedy_index<T: Scalar>(q: &[T], legal: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (k, &v) in q.iter().enumerate() {
        if legal(k) && best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|b| b.0)
}

/// Exploration branch: a uniform action type among those with a legal member, then a
/// uniform legal index of that type. NoOp only when no typed action is legal.
pub fn explore<R: Rng + ?Sized>(space: &ActionSpace, mask: &[bool], rng: &mut R) -> usize {
    let kinds: Vec<Vec<usize>> = (0..3).map(|k| space.kind_range(k).filter(|&i| mask[i]).collect()).collect();
    let open: Vec<&Vec<usize>> = kinds.iter().filter(|v| !v.is_empty()).collect();
    if open.is_empty() {
        return space.noop_index();
    }
    let pick = open[rng.random_range(0..open.len())];
    pick[rng.random_range(0..pick.len())]
}

/// ε-greedy selection over legal actions.
pub fn select_action<T: Scalar, R: Rng + ?Sized>(
    state: &SparseVec<T>,
    mask: &[bool],
    space: &ActionSpace,
    selection: &QNetwork<T>,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if rng.random::<f64>() < epsilon {
        return Ok(explore(space, mask, rng));
    }
    let trace = selection.trace(state)?;
    Ok(selection.greedy(&trace, |k| mask[k]).map(|b| b.0).unwrap_or(space.noop_index()))
}

/// Y = R + γ · Q_eval(s', argmax_a Q_select(s', a)).
pub fn double_q_target<T: Scalar>(
    reward: T,
    discount: T,
    q_select_next: &[T],
    legal: impl Fn(usize) -> bool,
    q_eval_next: impl Fn(usize) -> T,
) -> T {
    match greedy_index(q_select_next, legal) {
        Some(a) => reward + discount * q_eval_next(a),
        None => reward,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub action: usize,
    pub outcome: StepOutcome,
    pub batch_error: Option<f64>,
    pub synced: bool,
}

/// Selection and evaluation networks with their replay buffer and schedules.
#[derive(Debug, Clone)]
pub struct Agent<T: Scalar> {
    pub config: AgentConfig,
    pub selection: QNetwork<T>,
    pub evaluation: QNetwork<T>,
    pub buffer: ReplayBuffer<T>,
    pub schedule: PlateauSchedule,
    pub steps: u64,
    pub total_steps: u64,
    space: ActionSpace,
    rng: ChaCha8Rng,
    grad_sel: GradientSet<T>,
    grad_eval: GradientSet<T>,
}

impl<T: Scalar> Agent<T> {
    pub fn new(config: AgentConfig, inputs: usize, space: ActionSpace, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_0F0F_F0F0);
        let selection = QNetwork::standard(Role::Selection, inputs, space.count(), config.hidden, false, &mut rng);
        let mut evaluation =
            QNetwork::standard(Role::Evaluation, inputs, space.count(), config.hidden, config.use_lstm, &mut rng);
        sync_target_params(&selection, &mut evaluation)?;
        let total_steps = config.episodes * config.slots_per_episode;
        Ok(Agent {
            grad_sel: GradientSet::zeros_like(&selection),
            grad_eval: GradientSet::zeros_like(&evaluation),
            buffer: ReplayBuffer::new(config.replay_capacity),
            schedule: {
                let mut s = PlateauSchedule::new(config.learning_rate);
                s.window = config.plateau_window;
                s
            },
            config,
            selection,
            evaluation,
            steps: 0,
            total_steps,
            space,
            rng,
        })
    }

    pub fn epsilon(&self) -> f64 {
        if self.steps < self.config.warmup_steps {
            1.0
        } else {
            self.config.epsilon_at(self.steps, self.total_steps)
        }
    }

    pub fn begin_episode(&mut self) {
        self.evaluation.reset_memory();
    }

    /// Greedy action for the current state without exploration or learning.
    pub fn act_greedy(&self, env: &Env) -> Result<usize> {
        let s = SparseVec::from_f64(&env.encoded_state());
        let mask = env.legal_mask();
        let trace = self.selection.trace(&s)?;
        Ok(self.selection.greedy(&trace, |k| mask[k]).map(|b| b.0).unwrap_or(self.space.noop_index()))
    }

    /// Target values for the sampled entries.
    pub fn compute_targets(&self, idx: &[usize]) -> Result<Vec<T>> {
        let gamma = T::of(self.config.discount);
        idx.iter()
            .map(|&k| {
                let e = self.buffer.get(k);
                let legal = |a: usize| mask_bit(&e.next_legal, a);
                let sel_trace = self.selection.trace(&e.next_state)?;
                let Some((a, q_sel)) = self.selection.greedy(&sel_trace, legal) else { return Ok(e.reward) };
                let value = if self.config.double_q {
                    self.evaluation.q_one(&self.evaluation.trace(&e.next_state)?, a)
                } else {
                    q_sel
                };
                Ok(e.reward + gamma * value)
            })
            .collect()
    }

    /// One gradient step on a sampled batch; returns the mean squared error before the step.
    pub fn learn(&mut self) -> Result<f64> {
        let batch = self.config.batch_size;
        let idx = self.buffer.sample_indices(batch, &mut self.rng)?;
        let targets = self.compute_targets(&idx)?;
        let inv = T::one() / T::of(batch as f64);
        let mut err = 0.0;
        let lstm = if self.config.double_q { self.evaluation.lstm_index() } else { None };
        for (&k, &y) in idx.iter().zip(&targets) {
            let e = self.buffer.get(k);
            let trace = self.selection.trace(&e.state)?;
            let q = self.selection.q_one(&trace, e.action);
            err += (y - q).to_f64_lossy().powi(2);
            self.selection.backward(&trace, e.action, (q - y) * inv, 0, &mut self.grad_sel);
            if let Some(li) = lstm {
                let tr = self.evaluation.trace(&e.state)?;
                let qe = self.evaluation.q_one(&tr, e.action);
                self.evaluation.backward(&tr, e.action, (qe - y) * inv, li, &mut self.grad_eval);
            }
        }
        err /= batch as f64;
        let rate = T::of(self.schedule.rate);
        self.selection.apply_gradients(&mut self.grad_sel, rate, 0)?;
        if let Some(li) = lstm {
            self.evaluation.apply_gradients_to(&mut self.grad_eval, rate, li, li)?;
        }
        self.schedule.record(err);
        Ok(err)
    }

    /// One environment transition with storage, learning and periodic sync.
    pub fn train_step(&mut self, env: &mut Env) -> Result<StepReport> {
        let s = SparseVec::from_f64(&env.encoded_state());
        let mask = env.legal_mask();
        let eps = self.epsilon();
        let action = select_action(&s, &mask, &self.space, &self.selection, eps, &mut self.rng)?;
        let outcome = env.step(self.space.decode(action))?;
        let next = SparseVec::from_f64(&outcome.next_state);
        let next_legal = pack_mask(&env.legal_mask());
        self.buffer.push(Experience {
            state: s,
            action,
            reward: T::of(outcome.reward * self.config.reward_scale),
            next_state: next.clone(),
            next_legal,
        });
        self.evaluation.advance(&next)?;
        self.steps += 1;
        let mut batch_error = None;
        let mut synced = false;
        if self.steps > self.config.warmup_steps && self.buffer.len() >= self.config.batch_size {
            batch_error = Some(self.learn()?);
            if self.steps.is_multiple_of(self.config.sync_period) {
                sync_target_params(&self.selection, &mut self.evaluation)?;
                synced = true;
            }
        }
        Ok(StepReport { action, outcome, batch_error, synced })
    }

    pub fn save_checkpoint(&self, dir: &std::path::Path, episode: u64) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.selection.save(BufWriter::new(File::create(dir.join(format!("selection-{episode}.qnet")))?))?;
        self.evaluation.save(BufWriter::new(File::create(dir.join(format!("evaluation-{episode}.qnet")))?))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome<T: Scalar> {
    pub agent: Agent<T>,
    pub env: Env,
    pub episodes: Vec<EpisodeTotals>,
}

/// Trains a fresh agent for `config.episodes` consecutive windows of the continuing task.
pub fn run_training<T: Scalar>(spec: &ScenarioSpec, config: &AgentConfig, seed: u64) -> Result<TrainingOutcome<T>> {
    let mut env = Env::new(spec, seed, Strategy::NoMig)?;
    let mut agent = Agent::<T>::new(config.clone(), env.layout.width(), env.action_space(), seed)?;
    let mut episodes = Vec::with_capacity(config.episodes as usize);
    for ep in 0..config.episodes {
        episodes.push(run_training_episode(&mut agent, &mut env)?);
        if config.checkpoint_every > 0 && (ep + 1) % config.checkpoint_every == 0 {
            if let Some(dir) = &config.checkpoint_dir {
                agent.save_checkpoint(dir, ep + 1)?;
            }
        }
    }
    Ok(TrainingOutcome { agent, env, episodes })
}

pub fn run_training_episode<T: Scalar>(agent: &mut Agent<T>, env: &mut Env) -> Result<EpisodeTotals> {
    agent.begin_episode();
    env.begin_episode()?;
    let mut totals = EpisodeTotals::default();
    for _ in 0..agent.config.slots_per_episode {
        let r = agent.train_step(env)?;
        totals.add(&r.outcome);
    }
    Ok(totals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_examples() {
        let t: f64 = double_q_target(-10.0, 0.9, &[1.0, 5.0], |_| true, |a| [2.0, 3.0][a]);
        assert!((t - (-7.3)).abs() < 1e-12);
        let t = double_q_target(-10.0, 0.0, &[1.0, 5.0], |_| true, |a| [2.0, 3.0][a]);
        assert_eq!(t, -10.0);
        let single: f64 = double_q_target(-10.0, 0.9, &[1.0, 5.0], |_| true, |a| [1.0, 5.0][a]);
        assert!((single - (-5.5)).abs() < 1e-12);
        assert_ne!(t, single);
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_index(&[1.0, 3.0, 2.0], |_| true), Some(1));
        assert_eq!(greedy_index(&[3.0, 3.0, 1.0], |_| true), Some(0));
        assert_eq!(greedy_index(&[3.0, 3.0, 1.0], |k| k == 2), Some(2));
    }

    #[test]
    fn exploration_types_are_uniform() {
        let space = ActionSpace { n: 2, f: 1, n_low: 1, n_high: 1 };
        let mask = vec![true; space.count()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[space.decode(explore(&space, &mask, &mut rng)).kind()] += 1;
        }
        for &c in &counts[..3] {
            assert!((c as f64 / 10_000.0 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
        assert_eq!(counts[3], 0);
    }

    #[test]
    fn buffer_is_fifo_and_bounded() {
        let mut b = ReplayBuffer::<f64>::new(3);
        let e = |r: f64| Experience {
            state: SparseVec::from_dense(&[r]),
            action: 0,
            reward: r,
            next_state: SparseVec::from_dense(&[r]),
            next_legal: vec![1],
        };
        for r in 0..5 {
            b.push(e(r as f64));
        }
        assert_eq!(b.len(), 3);
        let mut rewards: Vec<f64> = (0..3).map(|k| b.get(k).reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(b.sample_indices(4, &mut rng).is_err());
        let mut s = b.sample_indices(3, &mut rng).unwrap();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2]);
    }

    #[test]
    fn epsilon_schedule() {
        let c = AgentConfig::default();
        assert_eq!(c.epsilon_at(0, 1000), 1.0);
        assert!((c.epsilon_at(250, 1000) - 0.525).abs() < 1e-12);
        assert_eq!(c.epsilon_at(500, 1000), 0.05);
        assert_eq!(c.epsilon_at(900, 1000), 0.05);
    }
}
