//! Round-based network simulation.
//!
//! Each round runs three phases in a fixed order:
//!
//! 1. **Clustering.** The protocol either keeps the current clusters or
//!    installs new ones. Centralised protocols pay control traffic for a new
//!    clustering.
//! 2. **Members.** Every alive non-head node, by ascending id, sends one data
//!    packet to its head, or straight to the base station if it has none.
//! 3. **Heads.** Every alive head, by ascending id, aggregates what it
//!    received plus its own reading and forwards one packet to the base
//!    station.
//!
//! An action is attempted only by a node alive at its start. Its cost is
//! deducted; a node whose energy reaches zero dies on the spot and the packet
//! it was sending or receiving is lost. Each alive node produces one reading
//! per round, so `data_sent` counts readings and `data_delivered` counts those
//! that reached the base station.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::network::{generate_topology, Action, NetworkConfig, NetworkState, NodeId, Role};
use crate::radio::{Joules, RadioParams};

/// Hard limit on rounds per run, in case a protocol keeps the network alive
/// indefinitely.
pub const MAX_ROUNDS: u32 = 1_000_000;

/// Control traffic charged when a centralised protocol installs new clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlModel {
    /// Every alive node reports its status to the base station and receives
    /// its assignment: one `b_ctrl` transmission and one reception each.
    Full,
    /// Every alive node only receives its assignment.
    #[default]
    ReceiveOnly,
    /// No control cost at all.
    Free,
}

/// What a protocol wants to happen at the start of a round.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Keep,
    Recluster(Clustering),
}

pub trait Protocol {
    fn name(&self) -> &'static str;

    /// Whether new clusterings are computed at the base station and so cost
    /// control traffic.
    fn centralized(&self) -> bool;

    fn decide(&mut self, s: &NetworkState, p: &RadioParams) -> Result<Decision>;
}

impl<P: Protocol + ?Sized> Protocol for Box<P> {
    fn name(&self) -> &'static str {
        (**self).name()
    }
    fn centralized(&self) -> bool {
        (**self).centralized()
    }
    fn decide(&mut self, s: &NetworkState, p: &RadioParams) -> Result<Decision> {
        (**self).decide(s, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// Zero-based round index.
    pub round: u32,
    /// Alive nodes at the end of the round.
    pub alive: usize,
    /// Residual energy of alive nodes at the end of the round.
    pub e_net: Joules,
    /// Energy spent this round divided by the total node count.
    pub e_dissipated_avg: Joules,
    pub data_sent: u64,
    pub data_delivered: u64,
    pub control_packets: u64,
    pub reclustered: bool,
    /// Heads in effect during the data phases.
    pub ch_count: usize,
    /// Sum of every energy charge applied this round.
    pub energy_spent: Joules,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopCondition {
    /// Stop after the round in which the first node dies.
    FirstDeath,
    AllDead,
    MaxRounds(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub protocol: String,
    pub per_round: Vec<RoundMetrics>,
    /// Round in which the first node died.
    pub fnd: Option<u32>,
    /// First round after which at most half the nodes (rounded up) are alive.
    pub hnd: Option<u32>,
    /// Round in which the last node died.
    pub lnd: Option<u32>,
    /// Times each node served as head, indexed like the node list.
    pub ch_selection_count: Vec<u32>,
    /// Rounds by number of heads in effect.
    pub ch_count_histogram: BTreeMap<usize, u64>,
    pub total_control_packets: u64,
    /// Delivered over sent readings; 1 when nothing was sent.
    pub pdr: f64,
}

impl SimResult {
    pub fn rounds(&self) -> usize {
        self.per_round.len()
    }

    pub fn recluster_count(&self) -> usize {
        self.per_round.iter().filter(|m| m.reclustered).count()
    }
}

struct Ledger<'a> {
    s: &'a mut NetworkState,
    spent: Joules,
}

impl Ledger<'_> {
    /// Charges node `idx`; returns whether it is still alive.
    fn charge(&mut self, idx: usize, cost: Joules) -> bool {
        let d = self.s.drain(idx, cost);
        self.spent += d.spent;
        d.survived
    }
}

fn install(s: &mut NetworkState, c: &Clustering) -> Result<()> {
    let mut heads = c.chs.clone();
    heads.sort_unstable();
    heads.dedup();
    for &h in &heads {
        match s.node(h) {
            Some(n) if n.alive => {}
            _ => return Err(Error::param("clustering", format!("head {h} is not an alive node"))),
        }
    }
    for n in &mut s.nodes {
        if !n.alive {
            n.role = Role::DirectToBs;
            n.cluster_head = None;
            continue;
        }
        if heads.binary_search(&n.id).is_ok() {
            n.role = Role::ClusterHead;
            n.cluster_head = Some(n.id);
            n.ch_selection_count += 1;
            continue;
        }
        match c.assignment.get(&n.id) {
            Some(h) if heads.binary_search(h).is_ok() => {
                n.role = Role::Member;
                n.cluster_head = Some(*h);
            }
            Some(h) => return Err(Error::AssignmentToNonHead { node: n.id, target: *h }),
            None => {
                n.role = Role::DirectToBs;
                n.cluster_head = None;
            }
        }
    }
    Ok(())
}

/// Charges control traffic; returns the number of packets attempted.
fn charge_control(l: &mut Ledger<'_>, p: &RadioParams, model: ControlModel) -> u64 {
    let mut packets = 0;
    for idx in 0..l.s.len() {
        if !l.s.nodes[idx].alive {
            continue;
        }
        match model {
            ControlModel::Free => {}
            ControlModel::ReceiveOnly => {
                packets += 1;
                l.charge(idx, p.control_rx_energy());
            }
            ControlModel::Full => {
                packets += 1;
                let d = l.s.distance_to_bs(idx);
                if l.charge(idx, p.tx_energy(p.b_ctrl, d)) {
                    packets += 1;
                    l.charge(idx, p.control_rx_energy());
                }
            }
        }
    }
    packets
}

/// Plays one round. An all-dead network is left untouched and reported with
/// a terminal row.
pub fn run_round(
    s: &mut NetworkState,
    protocol: &mut dyn Protocol,
    p: &RadioParams,
    control: ControlModel,
) -> Result<RoundMetrics> {
    let round = s.round;
    let n_total = s.len();
    if s.alive_count() == 0 {
        return Ok(RoundMetrics {
            round,
            alive: 0,
            e_net: 0.0,
            e_dissipated_avg: 0.0,
            data_sent: 0,
            data_delivered: 0,
            control_packets: 0,
            reclustered: false,
            ch_count: 0,
            energy_spent: 0.0,
        });
    }

    let decision = protocol.decide(s, p)?;
    let reclustered = matches!(decision, Decision::Recluster(_));
    if let Decision::Recluster(c) = &decision {
        install(s, c)?;
        s.rounds_since_recluster = 0;
        s.last_action = Some(Action::Recluster);
    } else {
        s.rounds_since_recluster += 1;
        s.last_action = Some(Action::Keep);
    }

    let mut l = Ledger { s, spent: 0.0 };
    let control_packets =
        if reclustered && protocol.centralized() { charge_control(&mut l, p, control) } else { 0 };

    let ch_count = l.s.nodes.iter().filter(|n| n.alive && n.role == Role::ClusterHead).count();
    let data_sent = l.s.alive_count() as u64;
    let mut delivered = 0u64;
    let mut buffered: BTreeMap<NodeId, u64> = BTreeMap::new();

    for idx in 0..l.s.len() {
        let n = &l.s.nodes[idx];
        if !n.alive || n.role == Role::ClusterHead {
            continue;
        }
        if let (Role::Member, Some(h_id)) = (n.role, n.cluster_head) {
            let hi = l.s.index_of(h_id).expect("head exists");
            let d = n.distance_to(&l.s.nodes[hi]);
            // A member still transmits to a head that died earlier this
            // round; the packet is simply lost.
            if l.charge(idx, p.tx_energy(p.b_data, d)) && l.s.nodes[hi].alive && l.charge(hi, p.rx_energy(p.b_data)) {
                *buffered.entry(h_id).or_default() += 1;
            }
        } else {
            let d = l.s.distance_to_bs(idx);
            if l.charge(idx, p.tx_energy(p.b_data, d)) {
                delivered += 1;
            }
        }
    }

    for idx in 0..l.s.len() {
        let n = &l.s.nodes[idx];
        if !n.alive || n.role != Role::ClusterHead {
            continue;
        }
        let id = n.id;
        let d = l.s.distance_to_bs(idx);
        if l.charge(idx, p.ch_tx_energy(p.b_data, d)) {
            delivered += 1 + buffered.get(&id).copied().unwrap_or(0);
        }
    }

    let spent = l.spent;
    for i in 0..s.len() {
        let head_dead = match s.nodes[i].cluster_head {
            Some(h) => !s.node(h).is_some_and(|hn| hn.alive),
            None => false,
        };
        let n = &mut s.nodes[i];
        if !n.alive || (n.role == Role::Member && head_dead) {
            n.role = Role::DirectToBs;
            n.cluster_head = None;
        }
    }
    s.round += 1;

    Ok(RoundMetrics {
        round,
        alive: s.alive_count(),
        e_net: s.total_energy(),
        e_dissipated_avg: spent / n_total as f64,
        data_sent,
        data_delivered: delivered,
        control_packets,
        reclustered,
        ch_count,
        energy_spent: spent,
    })
}

/// Runs a fresh topology from `cfg` until `stop`.
pub fn run_simulation(
    cfg: &NetworkConfig,
    protocol: &mut dyn Protocol,
    p: &RadioParams,
    control: ControlModel,
    stop: StopCondition,
) -> Result<SimResult> {
    cfg.validate()?;
    let mut s = generate_topology(cfg);
    simulate(&mut s, protocol, p, control, stop)
}

/// Runs an existing state until `stop`.
pub fn simulate(
    s: &mut NetworkState,
    protocol: &mut dyn Protocol,
    p: &RadioParams,
    control: ControlModel,
    stop: StopCondition,
) -> Result<SimResult> {
    p.validate()?;
    let n = s.len();
    let half = n.div_ceil(2);
    let limit = match stop {
        StopCondition::MaxRounds(r) => r.min(MAX_ROUNDS),
        _ => MAX_ROUNDS,
    };
    let mut per_round = Vec::new();
    let (mut fnd, mut hnd, mut lnd) = (None, None, None);
    let mut histogram = BTreeMap::new();
    let (mut sent, mut delivered, mut control_total) = (0u64, 0u64, 0u64);

    for _ in 0..limit {
        if s.alive_count() == 0 {
            break;
        }
        let before = s.alive_count();
        let m = run_round(s, protocol, p, control)?;
        sent += m.data_sent;
        delivered += m.data_delivered;
        control_total += m.control_packets;
        *histogram.entry(m.ch_count).or_insert(0) += 1;
        if fnd.is_none() && m.alive < before {
            fnd = Some(m.round);
        }
        if hnd.is_none() && m.alive <= half {
            hnd = Some(m.round);
        }
        if lnd.is_none() && m.alive == 0 {
            lnd = Some(m.round);
        }
        per_round.push(m);
        let done = match stop {
            StopCondition::FirstDeath => fnd.is_some(),
            StopCondition::AllDead => lnd.is_some(),
            StopCondition::MaxRounds(_) => false,
        };
        if done {
            break;
        }
    }

    Ok(SimResult {
        protocol: protocol.name().to_string(),
        per_round,
        fnd,
        hnd,
        lnd,
        ch_selection_count: s.nodes.iter().map(|n| n.ch_selection_count).collect(),
        ch_count_histogram: histogram,
        total_control_packets: control_total,
        pdr: if sent == 0 { 1.0 } else { delivered as f64 / sent as f64 },
    })
}

/// Replays a fixed list of decisions; after the list runs out it keeps.
#[derive(Debug, Clone)]
pub struct Scripted {
    pub decisions: Vec<Decision>,
    pub centralized: bool,
    next: usize,
}

impl Scripted {
    pub fn new(decisions: Vec<Decision>, centralized: bool) -> Self {
        Self { decisions, centralized, next: 0 }
    }
}

impl Protocol for Scripted {
    fn name(&self) -> &'static str {
        "scripted"
    }
    fn centralized(&self) -> bool {
        self.centralized
    }
    fn decide(&mut self, _: &NetworkState, _: &RadioParams) -> Result<Decision> {
        let d = self.decisions.get(self.next).cloned().unwrap_or(Decision::Keep);
        self.next += 1;
        Ok(d)
    }
}
