//! Network topology, per-node state and derived statistics.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{Joules, Meters};
use crate::rng;

/// Node identifier, `1..=N`. The base station is not a node.
pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    ClusterHead,
    Member,
    DirectToBs,
}

/// The controller's per-round choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// a1: generate a new clustering solution.
    Recluster,
    /// a2: keep the current one.
    Keep,
}

impl Action {
    pub fn label(self) -> &'static str {
        match self {
            Action::Recluster => "a1",
            Action::Keep => "a2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub x: Meters,
    pub y: Meters,
    pub energy: Joules,
    pub alive: bool,
    pub role: Role,
    pub cluster_head: Option<NodeId>,
    pub ch_selection_count: u32,
}

impl NodeState {
    pub fn new(id: NodeId, x: Meters, y: Meters, energy: Joules) -> Self {
        Self {
            id,
            x,
            y,
            energy,
            alive: energy > 0.0,
            role: Role::DirectToBs,
            cluster_head: None,
            ch_selection_count: 0,
        }
    }

    pub fn distance_to(&self, other: &NodeState) -> Meters {
        distance((self.x, self.y), (other.x, other.y))
    }
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> Meters {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub n_nodes: usize,
    /// Side `L` of the square deployment area.
    pub side_length: Meters,
    pub bs_x: Meters,
    pub bs_y: Meters,
    /// Initial energy per node.
    pub e0: Joules,
    /// Fraction of alive nodes that should act as cluster heads.
    pub k_fraction: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_nodes: 100,
            side_length: 100.0,
            bs_x: 50.0,
            bs_y: 175.0,
            e0: 0.5,
            k_fraction: 0.05,
            seed: 1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::param("n_nodes", format!("need at least 2 nodes, got {}", self.n_nodes)));
        }
        if !(self.side_length.is_finite() && self.side_length > 0.0) {
            return Err(Error::param("side_length", "must be finite and > 0"));
        }
        if !(self.e0.is_finite() && self.e0 > 0.0) {
            return Err(Error::param("e0", "must be finite and > 0"));
        }
        if !(self.bs_x.is_finite() && self.bs_y.is_finite()) {
            return Err(Error::param("bs", "base station coordinates must be finite"));
        }
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            return Err(Error::param("k_fraction", format!("must lie in (0, 1], got {}", self.k_fraction)));
        }
        if self.k_fraction * (self.n_nodes as f64) < 1.0 {
            return Err(Error::param("k_fraction", "k_fraction * n_nodes must be at least 1"));
        }
        Ok(())
    }

    /// Upper bound on the number of cluster heads, `round(k·N)`.
    pub fn max_cluster_heads(&self) -> usize {
        ((self.k_fraction * self.n_nodes as f64).round() as usize).max(1)
    }
}

/// Number of cluster heads for `alive` nodes: `max(1, round(k·|D|))`.
pub fn cluster_head_target(k_fraction: f64, alive: usize) -> usize {
    ((k_fraction * alive as f64).round() as usize).max(1)
}

/// Outcome of charging one action to a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drain {
    /// Energy actually removed (never more than the node held).
    pub spent: Joules,
    /// False when the charge depleted the node; the action then failed.
    pub survived: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    /// Rounds completed so far; the round being played has this index.
    pub round: u32,
    pub nodes: Vec<NodeState>,
    /// Rounds since the last re-clustering (`CH_τ`).
    pub rounds_since_recluster: u32,
    pub last_action: Option<Action>,
    pub bs: (Meters, Meters),
}

impl NetworkState {
    /// Builds a fresh state from explicit positions, ids `1..=n` in order.
    pub fn from_positions(positions: &[(f64, f64)], e0: Joules, bs: (Meters, Meters)) -> Self {
        let nodes = positions
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| NodeState::new(i as NodeId + 1, x, y, e0))
            .collect();
        Self { round: 0, nodes, rounds_since_recluster: 0, last_action: None, bs }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index into `nodes` for an id; ids are dense `1..=N`.
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        let idx = (id as usize).checked_sub(1)?;
        (self.nodes.get(idx)?.id == id).then_some(idx)
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeState> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn alive_ids(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.alive).map(|n| n.id).collect()
    }

    pub fn alive_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive).count()
    }

    /// `E_net`: dead nodes hold zero energy.
    pub fn total_energy(&self) -> Joules {
        self.nodes.iter().filter(|n| n.alive).map(|n| n.energy).sum()
    }

    pub fn distance_to_bs(&self, idx: usize) -> Meters {
        let n = &self.nodes[idx];
        distance((n.x, n.y), self.bs)
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.nodes.iter().map(|n| (n.x, n.y)).collect()
    }

    /// Alive cluster heads of the current clustering, ascending id.
    pub fn cluster_heads(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.alive && n.role == Role::ClusterHead)
            .map(|n| n.id)
            .collect()
    }

    /// Deducts `cost` from an alive node. A node whose energy reaches zero or
    /// below is marked dead with its energy clamped to zero.
    pub fn drain(&mut self, idx: usize, cost: Joules) -> Drain {
        let node = &mut self.nodes[idx];
        debug_assert!(node.alive, "charging dead node {}", node.id);
        if node.energy - cost > 0.0 {
            node.energy -= cost;
            Drain { spent: cost, survived: true }
        } else {
            let spent = node.energy;
            node.energy = 0.0;
            node.alive = false;
            Drain { spent, survived: false }
        }
    }

    /// Resets every node to `e0` and clears the clustering, keeping positions.
    pub fn reset(&mut self, e0: Joules) {
        for n in &mut self.nodes {
            n.energy = e0;
            n.alive = true;
            n.role = Role::DirectToBs;
            n.cluster_head = None;
            n.ch_selection_count = 0;
        }
        self.round = 0;
        self.rounds_since_recluster = 0;
        self.last_action = None;
    }
}

/// Uniform random deployment over `[0, L]²`, seeded by `cfg.seed`.
pub fn generate_topology(cfg: &NetworkConfig) -> NetworkState {
    let mut rng = rng::stream(cfg.seed, "topology");
    let positions: Vec<(f64, f64)> = (0..cfg.n_nodes)
        .map(|_| {
            let x = rng.gen::<f64>() * cfg.side_length;
            let y = rng.gen::<f64>() * cfg.side_length;
            (x, y)
        })
        .collect();
    NetworkState::from_positions(&positions, cfg.e0, (cfg.bs_x, cfg.bs_y))
}

/// Average alive-node energy, capped at the maximum alive energy so that
/// summation rounding can never push it above every node.
pub fn mean_alive_energy(s: &NetworkState) -> Option<Joules> {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut max = f64::NEG_INFINITY;
    for n in s.nodes.iter().filter(|n| n.alive) {
        sum += n.energy;
        count += 1;
        max = max.max(n.energy);
    }
    (count > 0).then(|| (sum / count as f64).min(max))
}

/// Potential cluster heads `H`: alive nodes at or above the alive-node mean energy.
pub fn potential_heads(s: &NetworkState) -> Vec<NodeId> {
    let Some(mean) = mean_alive_energy(s) else {
        return Vec::new();
    };
    s.nodes.iter().filter(|n| n.alive && n.energy >= mean).map(|n| n.id).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub e_net: Joules,
    pub e_bar: Joules,
    pub e_bar_dissipated: Joules,
    pub alive_count: usize,
}

/// Energy statistics of `s`, with dissipation measured against `prev`.
pub fn network_stats(s: &NetworkState, prev: &NetworkState) -> Result<NetworkStats> {
    let same_ids = s.len() == prev.len() && s.nodes.iter().zip(&prev.nodes).all(|(a, b)| a.id == b.id);
    if !same_ids {
        return Err(Error::MismatchedNodes { left: s.len(), right: prev.len() });
    }
    let e_net = s.total_energy();
    let alive_count = s.alive_count();
    let e_bar = if alive_count == 0 { 0.0 } else { e_net / alive_count as f64 };
    let dissipated: f64 = s.nodes.iter().zip(&prev.nodes).map(|(now, before)| before.energy - now.energy).sum();
    Ok(NetworkStats {
        e_net,
        e_bar,
        e_bar_dissipated: dissipated / s.len() as f64,
        alive_count,
    })
}

/// Serializes positions as `id,x,y` with six decimals.
pub fn topology_csv(s: &NetworkState) -> String {
    let mut out = String::from("id,x,y\n");
    for n in &s.nodes {
        let _ = writeln!(out, "{},{:.6},{:.6}", n.id, n.x, n.y);
    }
    out
}

pub fn write_topology_csv(s: &NetworkState, path: &Path) -> Result<()> {
    std::fs::write(path, topology_csv(s))?;
    Ok(())
}

/// One parsed row of a topology or state file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRow {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub energy: Option<f64>,
}

/// Parses `id,x,y` or `id,x,y,energy` CSV text. Ids must be `1..=N` in order.
pub fn parse_node_csv(text: &str, origin: &str) -> Result<Vec<NodeRow>> {
    let err = |line: usize, reason: String| Error::Csv { path: origin.to_string(), line, reason };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let with_energy = match cols.as_slice() {
        ["id", "x", "y"] => false,
        ["id", "x", "y", "energy"] => true,
        _ => return Err(err(1, format!("expected header `id,x,y[,energy]`, got `{header}`"))),
    };
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(err(lineno, format!("expected {} fields, got {}", cols.len(), fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(lineno, format!("`{s}`: {e}")));
        let id: NodeId = fields[0].parse().map_err(|e| err(lineno, format!("id `{}`: {e}", fields[0])))?;
        if id as usize != rows.len() + 1 {
            return Err(err(lineno, format!("ids must run 1..=N in order, found {id}")));
        }
        rows.push(NodeRow {
            id,
            x: num(fields[1])?,
            y: num(fields[2])?,
            energy: if with_energy { Some(num(fields[3])?) } else { None },
        });
    }
    Ok(rows)
}

/// Loads a topology or state file into a fresh state; rows without an energy
/// column start at `e0`.
pub fn load_state_csv(path: &Path, e0: Joules, bs: (Meters, Meters)) -> Result<NetworkState> {
    let text = std::fs::read_to_string(path)?;
    let rows = parse_node_csv(&text, &path.display().to_string())?;
    let positions: Vec<(f64, f64)> = rows.iter().map(|r| (r.x, r.y)).collect();
    let mut state = NetworkState::from_positions(&positions, e0, bs);
    for (node, row) in state.nodes.iter_mut().zip(&rows) {
        if let Some(e) = row.energy {
            node.energy = e.max(0.0);
            node.alive = e > 0.0;
        }
    }
    Ok(state)
}

/// Ids as a set, for membership checks.
pub fn id_set(ids: &[NodeId]) -> BTreeSet<NodeId> {
    ids.iter().copied().collect()
}
