//! Deep Q-learning of when to re-cluster.
//!
//! Each round the agent observes the network and picks `a1` (solve for new
//! clusters) or `a2` (keep the current ones). The reward is 2 once any node
//! has run dry, otherwise 1.1 for `a1` and 1 for `a2`. Training episodes run
//! on a fixed deployment from full batteries to the first death.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::MilpWeights;
use crate::error::{Error, Result};
use crate::network::{generate_topology, Action, NetworkConfig, NetworkState, Role};
use crate::nn::{Loss, Mlp, MlpSpec, OutputActivation};
use crate::radio::RadioParams;
use crate::rlc::{Clusterer, ExactClusterer, Gate, Rlc};
use crate::rng::{self, Stream};
use crate::sim::{run_round, simulate, ControlModel, Decision, Protocol, SimResult, StopCondition};

/// `CH_τ` value that maps to 1 in the observation.
pub const TAU_SCALE: f64 = 100.0;

/// Index of `a1` and `a2` in the Q head.
pub const Q_RECLUSTER: usize = 0;
pub const Q_KEEP: usize = 1;

pub fn reward(next: &NetworkState, action: Action) -> f64 {
    if next.nodes.iter().any(|n| n.energy <= 0.0) {
        2.0
    } else if action == Action::Recluster {
        1.1
    } else {
        1.0
    }
}

pub fn observation_len(n_nodes: usize) -> usize {
    3 * n_nodes + 3
}

/// Flat observation, every entry in `[0, 1]`:
///
/// | offset       | length | content                                         |
/// |--------------|--------|-------------------------------------------------|
/// | 0            | 1      | `E_net / (N·E0)`                                |
/// | 1            | N      | node energy / `E0`                              |
/// | 1 + N        | N      | 1 for alive cluster heads                       |
/// | 1 + 2N       | 1      | rounds since re-clustering / 100, capped at 1   |
/// | 2 + 2N       | N      | `(head slot + 1) / CH_max`, 0 when unassigned   |
/// | 2 + 3N       | 1      | 1 if the previous action was `a1`               |
///
/// Head slots number the alive heads by ascending id.
pub fn encode(s: &NetworkState, cfg: &NetworkConfig) -> Vec<f64> {
    let n = s.len();
    let e0 = cfg.e0;
    let ch_max = cfg.max_cluster_heads() as f64;
    let heads = s.cluster_heads();
    let mut obs = Vec::with_capacity(observation_len(n));
    obs.push((s.total_energy() / (n as f64 * e0)).clamp(0.0, 1.0));
    obs.extend(s.nodes.iter().map(|x| if x.alive { (x.energy / e0).clamp(0.0, 1.0) } else { 0.0 }));
    obs.extend(s.nodes.iter().map(|x| f64::from(x.alive && x.role == Role::ClusterHead)));
    obs.push((f64::from(s.rounds_since_recluster) / TAU_SCALE).min(1.0));
    obs.extend(s.nodes.iter().map(|x| {
        match x.cluster_head.filter(|_| x.alive).and_then(|h| heads.binary_search(&h).ok()) {
            Some(slot) => ((slot + 1) as f64 / ch_max).min(1.0),
            None => 0.0,
        }
    }));
    obs.push(f64::from(s.last_action == Some(Action::Recluster)));
    obs
}

/// Epsilon-greedy choice. Ties in Q go to `a2`.
pub fn select_action(q: &[f64], epsilon: f64, rng: &mut Stream) -> Action {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return if rng.gen::<bool>() { Action::Recluster } else { Action::Keep };
    }
    greedy(q)
}

pub fn greedy(q: &[f64]) -> Action {
    if q[Q_RECLUSTER] > q[Q_KEEP] {
        Action::Recluster
    } else {
        Action::Keep
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::new(), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Distinct indices drawn uniformly.
    pub fn sample_indices(&self, batch: usize, rng: &mut Stream) -> Vec<usize> {
        index::sample(rng, self.items.len(), batch.min(self.items.len())).into_vec()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}

/// Clustering backend used for `a1` during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Exact,
    #[default]
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub backend: Backend,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps over which epsilon falls linearly; half of `total_steps` when unset.
    pub epsilon_decay_steps: Option<u64>,
    pub batch_size: usize,
    pub target_update_interval: u64,
    pub total_steps: u64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Surrogate,
            learning_rate: 1e-4,
            discount: 0.90,
            epsilon_start: 0.8,
            epsilon_end: 0.05,
            epsilon_decay_steps: None,
            batch_size: 128,
            target_update_interval: 100,
            total_steps: 200_000,
            buffer_capacity: 50_000,
            hidden: vec![256, 256],
            seed: 1,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::param("discount", "must lie in [0, 1)"));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::param(name, "must lie in [0, 1]"));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::param("learning_rate", "must be finite and >= 0"));
        }
        if self.batch_size == 0 || self.target_update_interval == 0 || self.buffer_capacity == 0 {
            return Err(Error::param("dqn", "batch_size, target_update_interval and buffer_capacity must be positive"));
        }
        Ok(())
    }

    pub fn epsilon(&self, step: u64) -> f64 {
        let decay = self.epsilon_decay_steps.unwrap_or(self.total_steps / 2);
        if decay == 0 || step >= decay {
            return self.epsilon_end;
        }
        let frac = step as f64 / decay as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn q_spec(&self, n_nodes: usize) -> MlpSpec {
        let mut sizes = vec![observation_len(n_nodes)];
        sizes.extend(&self.hidden);
        sizes.push(2);
        MlpSpec { layer_sizes: sizes, output: OutputActivation::Identity, dropout: 0.0 }
    }
}

/// Single-decision protocol used to drive the simulator one step at a time.
struct Step(Option<Decision>);

impl Protocol for Step {
    fn name(&self) -> &'static str {
        "leach-rlc"
    }
    fn centralized(&self) -> bool {
        true
    }
    fn decide(&mut self, _: &NetworkState, _: &RadioParams) -> Result<Decision> {
        Ok(self.0.take().unwrap_or(Decision::Keep))
    }
}

/// The training environment: a fixed deployment replayed from full energy.
pub struct Env<C> {
    pub cfg: NetworkConfig,
    pub radio: RadioParams,
    pub control: ControlModel,
    pub weights: MilpWeights,
    pub clusterer: C,
    initial: NetworkState,
    state: NetworkState,
}

impl<C: Clusterer> Env<C> {
    pub fn new(cfg: NetworkConfig, radio: RadioParams, control: ControlModel, weights: MilpWeights, clusterer: C) -> Result<Self> {
        cfg.validate()?;
        radio.validate()?;
        weights.validate()?;
        let initial = generate_topology(&cfg);
        Ok(Self { cfg, radio, control, weights, clusterer, state: initial.clone(), initial })
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.state = self.initial.clone();
        encode(&self.state, &self.cfg)
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    /// Plays one round; returns `(next observation, reward, terminal)`.
    /// The episode ends at the first node death.
    pub fn step(&mut self, action: Action) -> Result<(Vec<f64>, f64, bool)> {
        let decision = match action {
            Action::Recluster => {
                let k = crate::network::cluster_head_target(self.cfg.k_fraction, self.state.alive_count());
                let sol = self.clusterer.cluster(&self.state, &self.radio, &self.weights, k)?;
                Decision::Recluster(sol.into())
            }
            Action::Keep => Decision::Keep,
        };
        run_round(&mut self.state, &mut Step(Some(decision)), &self.radio, self.control)?;
        let r = reward(&self.state, action);
        let terminal = self.state.alive_count() < self.state.len();
        Ok((encode(&self.state, &self.cfg), r, terminal))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub episode: u64,
    pub round: u32,
    pub action: Action,
    pub reward: f64,
    /// Absent until the buffer holds a full batch.
    pub loss: Option<f64>,
    pub epsilon: f64,
}

pub struct Trained {
    pub qnet: Mlp,
    pub log: Vec<LogEntry>,
}

/// Runs the training loop for `cfg.total_steps` environment steps.
pub fn train<C: Clusterer>(env: &mut Env<C>, cfg: &DqnConfig, mut on_step: impl FnMut(&LogEntry)) -> Result<Trained> {
    cfg.validate()?;
    let n = env.cfg.n_nodes;
    let mut online = Mlp::new(cfg.q_spec(n), rng::derive_seed(cfg.seed, "q-init"))?;
    let mut target = online.clone();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut explore = rng::stream(cfg.seed, "dqn-explore");
    let mut sampler = rng::stream(cfg.seed, "dqn-replay");
    let mut log = Vec::new();
    let dim = observation_len(n);

    let mut step = 0u64;
    let mut episode = 0u64;
    while step < cfg.total_steps {
        let mut obs = env.reset();
        while step < cfg.total_steps {
            let epsilon = cfg.epsilon(step);
            let round = env.state().round;
            let action = if round == 0 {
                Action::Recluster
            } else {
                select_action(&online.predict(&obs)?, epsilon, &mut explore)
            };
            let (next, r, terminal) = env.step(action)?;
            buffer.push(Transition { state: obs, action, reward: r, next_state: next.clone(), terminal });

            let loss = if buffer.len() >= cfg.batch_size {
                let idx = buffer.sample_indices(cfg.batch_size, &mut sampler);
                let b = idx.len();
                let mut x = Vec::with_capacity(b * dim);
                let mut xn = Vec::with_capacity(b * dim);
                for &i in &idx {
                    x.extend_from_slice(&buffer.get(i).state);
                    xn.extend_from_slice(&buffer.get(i).next_state);
                }
                let q_next = target.predict_batch(&xn, b)?;
                let mut t = vec![0.0; b * 2];
                let mut mask = vec![0.0; b * 2];
                for (row, &i) in idx.iter().enumerate() {
                    let tr = buffer.get(i);
                    let y = td_target(tr, &q_next[row * 2..row * 2 + 2], cfg.discount);
                    let a = action_index(tr.action);
                    t[row * 2 + a] = y;
                    mask[row * 2 + a] = 1.0;
                }
                Some(online.train_step(&x, &t, b, Loss::Mse, cfg.learning_rate, Some(&mask))?)
            } else {
                None
            };

            step += 1;
            if step.is_multiple_of(cfg.target_update_interval) {
                target.copy_params_from(&online);
            }
            let entry = LogEntry { step, episode, round, action, reward: r, loss, epsilon };
            on_step(&entry);
            log.push(entry);
            if terminal {
                break;
            }
            obs = next;
        }
        episode += 1;
    }
    Ok(Trained { qnet: online, log })
}

pub fn action_index(a: Action) -> usize {
    match a {
        Action::Recluster => Q_RECLUSTER,
        Action::Keep => Q_KEEP,
    }
}

/// Bellman target; terminal transitions do not bootstrap.
pub fn td_target(t: &Transition, q_next: &[f64], discount: f64) -> f64 {
    if t.terminal {
        t.reward
    } else {
        t.reward + discount * q_next[Q_RECLUSTER].max(q_next[Q_KEEP])
    }
}

/// Greedy gate driven by a trained Q-network.
pub struct PolicyGate {
    pub qnet: Mlp,
    pub cfg: NetworkConfig,
}

impl Gate for PolicyGate {
    fn choose(&mut self, s: &NetworkState) -> Result<Action> {
        Ok(greedy(&self.qnet.predict(&encode(s, &self.cfg))?))
    }
}

/// Greedy rollout of a trained policy to the last death, re-clustering with
/// the exact solver.
pub fn evaluate(
    qnet: &Mlp,
    cfg: &NetworkConfig,
    radio: &RadioParams,
    control: ControlModel,
    weights: &MilpWeights,
) -> Result<(SimResult, Vec<Action>)> {
    let want = observation_len(cfg.n_nodes);
    if qnet.spec().input_dim() != want {
        return Err(Error::Dimension { context: "policy input", expected: want, got: qnet.spec().input_dim() });
    }
    let gate = PolicyGate { qnet: qnet.clone(), cfg: cfg.clone() };
    let mut proto = Rlc::with_clusterer(*weights, cfg.k_fraction, gate, ExactClusterer::default());
    let mut s = generate_topology(cfg);
    let result = simulate(&mut s, &mut proto, radio, control, StopCondition::AllDead)?;
    let actions = result
        .per_round
        .iter()
        .map(|m| if m.reclustered { Action::Recluster } else { Action::Keep })
        .collect();
    Ok((result, actions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::Clustering;
    use crate::sim::Scripted;

    fn small() -> NetworkConfig {
        NetworkConfig { n_nodes: 12, k_fraction: 0.2, ..Default::default() }
    }

    #[test]
    fn reward_values() {
        let mut s = generate_topology(&small());
        assert_eq!(reward(&s, Action::Keep), 1.0);
        assert_eq!(reward(&s, Action::Recluster), 1.1);
        s.nodes[4].energy = 0.0;
        s.nodes[4].alive = false;
        assert_eq!(reward(&s, Action::Keep), 2.0);
        assert_eq!(reward(&s, Action::Recluster), 2.0);
    }

    #[test]
    fn fresh_observation() {
        let cfg = NetworkConfig::default();
        let s = generate_topology(&cfg);
        let o = encode(&s, &cfg);
        assert_eq!(o.len(), 303);
        assert_eq!(o[0], 1.0);
        assert!(o[1..101].iter().all(|&v| v == 1.0));
        assert!(o[101..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_slots_are_encoded() {
        let cfg = NetworkConfig { n_nodes: 20, k_fraction: 0.25, ..Default::default() };
        let mut s = generate_topology(&cfg);
        let chs = vec![2, 4, 7, 9, 15];
        let assignment = (1..=20).map(|i| (i, if chs.contains(&i) { i } else { 7 })).collect();
        let mut p = Scripted::new(vec![Decision::Recluster(Clustering { chs, assignment })], true);
        run_round(&mut s, &mut p, &RadioParams::default(), ControlModel::Free).unwrap();
        let o = encode(&s, &cfg);
        let n = 20;
        assert_eq!(o[1 + n + 6], 1.0);
        assert_eq!(o[2 + 2 * n], 3.0 / 5.0);
        assert_eq!(o[2 + 2 * n + 6], 3.0 / 5.0);
        assert_eq!(o[2 + 2 * n + 1], 1.0 / 5.0);
        assert_eq!(o[2 + 3 * n], 1.0);
        assert!(o.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn epsilon_greedy() {
        let mut r = rng::stream(1, "t");
        assert_eq!(select_action(&[0.3, 0.9], 0.0, &mut r), Action::Keep);
        assert_eq!(select_action(&[0.9, 0.3], 0.0, &mut r), Action::Recluster);
        assert_eq!(select_action(&[0.5, 0.5], 0.0, &mut r), Action::Keep);
        let a1 = (0..10_000).filter(|_| select_action(&[0.0, 1.0], 1.0, &mut r) == Action::Recluster).count();
        assert!((a1 as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn epsilon_schedule() {
        let c = DqnConfig { total_steps: 100, ..Default::default() };
        assert_eq!(c.epsilon(0), 0.8);
        assert!((c.epsilon(25) - 0.425).abs() < 1e-12);
        assert_eq!(c.epsilon(50), 0.05);
        assert_eq!(c.epsilon(99), 0.05);
    }

    fn transition(terminal: bool) -> Transition {
        Transition { state: vec![], action: Action::Keep, reward: 2.0, next_state: vec![], terminal }
    }

    #[test]
    fn terminal_targets_do_not_bootstrap() {
        assert_eq!(td_target(&transition(true), &[5.0, 7.0], 0.9), 2.0);
        assert_eq!(td_target(&transition(false), &[5.0, 7.0], 0.9), 2.0 + 0.9 * 7.0);
    }

    #[test]
    fn replay_buffer_bounds_and_distinct_samples() {
        let mut b = ReplayBuffer::new(10);
        for i in 0..25 {
            b.push(Transition { reward: f64::from(i), ..transition(false) });
        }
        assert_eq!(b.len(), 10);
        let rewards: Vec<f64> = (0..10).map(|i| b.get(i).reward).collect();
        assert!(rewards.iter().all(|&r| r >= 15.0));
        let mut r = rng::stream(3, "t");
        let mut idx = b.sample_indices(8, &mut r);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 8);
    }

    #[test]
    fn zero_steps_returns_untrained_net() {
        let mut env = Env::new(small(), RadioParams::default(), ControlModel::ReceiveOnly, MilpWeights::REFERENCE, ExactClusterer::default())
            .unwrap();
        let cfg = DqnConfig { total_steps: 0, hidden: vec![8], ..Default::default() };
        let t = train(&mut env, &cfg, |_| {}).unwrap();
        assert!(t.log.is_empty());
        let fresh = Mlp::new(cfg.q_spec(12), rng::derive_seed(cfg.seed, "q-init")).unwrap();
        assert!(t.qnet.params_equal(&fresh));
    }

    #[test]
    fn short_training_is_reproducible() {
        let run = || {
            let mut env =
                Env::new(small(), RadioParams::default(), ControlModel::ReceiveOnly, MilpWeights::REFERENCE, ExactClusterer::default())
                    .unwrap();
            let cfg = DqnConfig { total_steps: 300, batch_size: 16, hidden: vec![16], ..Default::default() };
            train(&mut env, &cfg, |_| {}).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log, b.log);
        assert!(a.qnet.params_equal(&b.qnet));
        assert_eq!(a.log[0].action, Action::Recluster);
        assert!(a.log.iter().all(|e| [1.0, 1.1, 2.0].contains(&e.reward)));
        assert!(a.log.iter().any(|e| e.loss.is_some()));
    }

    struct Fixed(Action);
    impl Gate for Fixed {
        fn choose(&mut self, _: &NetworkState) -> Result<Action> {
            Ok(self.0)
        }
    }

    #[test]
    fn evaluation_controls_match_gates() {
        let cfg = small();
        let p = RadioParams::default();
        let mut keep = Rlc::new(MilpWeights::REFERENCE, cfg.k_fraction, Fixed(Action::Keep));
        let r = simulate(&mut generate_topology(&cfg), &mut keep, &p, ControlModel::ReceiveOnly, StopCondition::AllDead).unwrap();
        assert_eq!(r.total_control_packets, 12);
        let mut always = Rlc::new(MilpWeights::REFERENCE, cfg.k_fraction, Fixed(Action::Recluster));
        let r = simulate(&mut generate_topology(&cfg), &mut always, &p, ControlModel::ReceiveOnly, StopCondition::AllDead).unwrap();
        assert!(r.per_round.iter().all(|m| m.reclustered));
        assert!(r.total_control_packets > 12);
    }

    #[test]
    fn evaluate_rejects_mismatched_policy() {
        let q = Mlp::new(DqnConfig::default().q_spec(10), 1).unwrap();
        let err = evaluate(&q, &small(), &RadioParams::default(), ControlModel::ReceiveOnly, &MilpWeights::REFERENCE);
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }
}
