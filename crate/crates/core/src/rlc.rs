//! Centralised clustering by exact optimisation, invoked only when a gate
//! says so.
//!
//! Each round the gate picks between re-clustering (solve the weighted
//! selection problem for the current state and pay control traffic) and
//! keeping the current clusters. The very first round always re-clusters.

use serde::{Deserialize, Serialize};

use crate::clustering::{solve_exact_with_hint, Clustering, ClusteringSolution, MilpWeights};
use crate::error::Result;
use crate::network::{cluster_head_target, Action, NetworkState, NodeId};
use crate::radio::RadioParams;
use crate::sim::{Decision, Protocol};

/// Produces a clustering for the current state.
pub trait Clusterer {
    fn cluster(&mut self, s: &NetworkState, p: &RadioParams, w: &MilpWeights, k: usize) -> Result<ClusteringSolution>;
}

/// Branch-and-bound backend, warm-started from its previous answer.
#[derive(Debug, Clone, Default)]
pub struct ExactClusterer {
    hint: Option<Vec<NodeId>>,
}

impl Clusterer for ExactClusterer {
    fn cluster(&mut self, s: &NetworkState, p: &RadioParams, w: &MilpWeights, k: usize) -> Result<ClusteringSolution> {
        let (sol, _) = solve_exact_with_hint(s, p, w, k, self.hint.as_deref())?;
        self.hint = Some(sol.chs.clone());
        Ok(sol)
    }
}

/// Decides between re-clustering and keeping.
pub trait Gate {
    fn choose(&mut self, s: &NetworkState) -> Result<Action>;
}

/// Fixed gating rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedGate {
    Always,
    Never,
    /// Re-cluster every `n` rounds.
    Every(u32),
}

impl Gate for FixedGate {
    fn choose(&mut self, s: &NetworkState) -> Result<Action> {
        Ok(match *self {
            FixedGate::Always => Action::Recluster,
            FixedGate::Never => Action::Keep,
            FixedGate::Every(n) if s.rounds_since_recluster + 1 >= n.max(1) => Action::Recluster,
            FixedGate::Every(_) => Action::Keep,
        })
    }
}

impl<G: Gate + ?Sized> Gate for Box<G> {
    fn choose(&mut self, s: &NetworkState) -> Result<Action> {
        (**self).choose(s)
    }
}

pub struct Rlc<G, C = ExactClusterer> {
    pub weights: MilpWeights,
    pub k_fraction: f64,
    pub gate: G,
    pub clusterer: C,
    /// Objective of every solution installed so far.
    pub objectives: Vec<f64>,
}

impl<G: Gate> Rlc<G, ExactClusterer> {
    pub fn new(weights: MilpWeights, k_fraction: f64, gate: G) -> Self {
        Self::with_clusterer(weights, k_fraction, gate, ExactClusterer::default())
    }
}

impl<G: Gate, C: Clusterer> Rlc<G, C> {
    pub fn with_clusterer(weights: MilpWeights, k_fraction: f64, gate: G, clusterer: C) -> Self {
        Self { weights, k_fraction, gate, clusterer, objectives: Vec::new() }
    }

    /// Runs the clusterer for the current state.
    pub fn solve(&mut self, s: &NetworkState, p: &RadioParams) -> Result<Clustering> {
        let k = cluster_head_target(self.k_fraction, s.alive_count());
        let sol = self.clusterer.cluster(s, p, &self.weights, k)?;
        self.objectives.push(sol.objective);
        Ok(sol.into())
    }
}

impl<G: Gate, C: Clusterer> Protocol for Rlc<G, C> {
    fn name(&self) -> &'static str {
        "leach-rlc"
    }

    fn centralized(&self) -> bool {
        true
    }

    fn decide(&mut self, s: &NetworkState, p: &RadioParams) -> Result<Decision> {
        let action = if s.last_action.is_none() { Action::Recluster } else { self.gate.choose(s)? };
        match action {
            Action::Recluster => Ok(Decision::Recluster(self.solve(s, p)?)),
            Action::Keep => Ok(Decision::Keep),
        }
    }
}
