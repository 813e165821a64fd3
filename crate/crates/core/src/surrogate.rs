//! Learned stand-ins for the exact clustering solver.
//!
//! Two networks are trained on solver output: one scores every node as a
//! cluster head, the other maps each node to one of `CH_max` head slots
//! (heads ordered by ascending id). A prediction is always repaired into a
//! feasible clustering before use.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clustering::{objective, optimal_assignment, Clustering, ClusteringSolution, MilpWeights};
use crate::error::{Error, Result};
use crate::network::{cluster_head_target, distance, potential_heads, NetworkConfig, NetworkState, NodeId};
use crate::nn::{Loss, Mlp, MlpSpec, Mode, OutputActivation};
use crate::par;
use crate::radio::RadioParams;
use crate::rlc::{Clusterer, ExactClusterer, FixedGate, Rlc};
use crate::rng;
use crate::sim::{simulate, ControlModel, StopCondition};

pub const DATASET_FORMAT: &str = "leach-rlc-solutions";
pub const MODEL_FORMAT: &str = "leach-rlc-surrogate";
pub const FORMAT_VERSION: u32 = 1;

pub fn ch_feature_len(n: usize) -> usize {
    4 * n + 5
}

pub fn assign_feature_len(n: usize, ch_max: usize) -> usize {
    4 + n + ch_max + n * ch_max + ch_max
}

fn energies(s: &NetworkState) -> impl Iterator<Item = f64> + '_ {
    s.nodes.iter().map(|n| if n.alive { n.energy } else { 0.0 })
}

/// `[α, β, γ, E_net, E (N), F (N), Ê_tx (N), Ê_rx (N), k̂]`.
///
/// `F` flags potential heads. The expected head energies are zero where
/// `F = 0`; `Ê_rx` assumes `|D|/k̂ - 1` members per head with `k̂ = k·|D|`.
pub fn ch_features(s: &NetworkState, p: &RadioParams, w: &MilpWeights, k_fraction: f64) -> Vec<f64> {
    let n = s.len();
    let heads: HashSet<NodeId> = potential_heads(s).into_iter().collect();
    let alive = s.alive_count() as f64;
    let k_hat = k_fraction * alive;
    let members = if k_hat > 0.0 { (alive / k_hat - 1.0).max(0.0) } else { 0.0 };
    let mut x = Vec::with_capacity(ch_feature_len(n));
    x.extend([w.alpha, w.beta, w.gamma, s.total_energy()]);
    x.extend(energies(s));
    x.extend(s.nodes.iter().map(|v| f64::from(heads.contains(&v.id))));
    x.extend(s.nodes.iter().enumerate().map(|(i, v)| {
        if heads.contains(&v.id) {
            p.ch_tx_energy(p.b_data, s.distance_to_bs(i))
        } else {
            0.0
        }
    }));
    x.extend(s.nodes.iter().map(|v| if heads.contains(&v.id) { p.rx_energy(p.b_data) * members } else { 0.0 }));
    x.push(k_hat);
    x
}

/// `[α, β, γ, E_net, E (N), E_sink (CH_max), E_tx (N × CH_max), ids (CH_max)]`,
/// zero-padded past the last head. Dead nodes have zero transmit energies.
pub fn assign_features(s: &NetworkState, p: &RadioParams, w: &MilpWeights, chs: &[NodeId], ch_max: usize) -> Result<Vec<f64>> {
    if chs.len() > ch_max {
        return Err(Error::Dimension { context: "cluster head slots", expected: ch_max, got: chs.len() });
    }
    let n = s.len();
    let idx: Vec<usize> = chs
        .iter()
        .map(|&h| s.index_of(h).ok_or(Error::AssignmentToNonHead { node: h, target: h }))
        .collect::<Result<_>>()?;
    let mut x = Vec::with_capacity(assign_feature_len(n, ch_max));
    x.extend([w.alpha, w.beta, w.gamma, s.total_energy()]);
    x.extend(energies(s));
    for slot in 0..ch_max {
        x.push(idx.get(slot).map_or(0.0, |&h| p.ch_tx_energy(p.b_data, s.distance_to_bs(h))));
    }
    for v in &s.nodes {
        for slot in 0..ch_max {
            x.push(match idx.get(slot) {
                Some(&h) if v.alive => {
                    let c = &s.nodes[h];
                    p.tx_energy(p.b_data, distance((v.x, v.y), (c.x, c.y)))
                }
                _ => 0.0,
            });
        }
    }
    for slot in 0..ch_max {
        x.push(chs.get(slot).map_or(0.0, |&h| f64::from(h) / n as f64));
    }
    Ok(x)
}

/// One solver call: features, the head target `k`, and the solver's labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub group: u32,
    pub round: u32,
    pub k: usize,
    pub ch_x: Vec<f64>,
    /// 1 for every chosen head.
    pub ch_y: Vec<f64>,
    pub assign_x: Vec<f64>,
    /// Head slot per node; `None` for dead nodes.
    pub assign_y: Vec<Option<usize>>,
}

impl Sample {
    fn key(&self) -> Vec<u64> {
        let mut k: Vec<u64> = self.ch_x.iter().chain(&self.ch_y).chain(&self.assign_x).map(|v| v.to_bits()).collect();
        k.extend(self.assign_y.iter().map(|y| y.map_or(u64::MAX, |v| v as u64)));
        k.push(self.k as u64);
        k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub weights: MilpWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionDataset {
    pub n_nodes: usize,
    pub ch_max: usize,
    pub samples: Vec<Sample>,
    /// Rows dropped as exact duplicates while building.
    pub duplicates: usize,
}

/// Wraps the exact solver and logs every call.
struct Recorder {
    inner: ExactClusterer,
    k_fraction: f64,
    ch_max: usize,
    group: u32,
    rows: Vec<Sample>,
}

impl Clusterer for Recorder {
    fn cluster(&mut self, s: &NetworkState, p: &RadioParams, w: &MilpWeights, k: usize) -> Result<ClusteringSolution> {
        let sol = self.inner.cluster(s, p, w, k)?;
        self.rows.push(label(s, p, w, self.k_fraction, self.ch_max, k, &sol, self.group, s.round)?);
        Ok(sol)
    }
}

#[allow(clippy::too_many_arguments)]
fn label(
    s: &NetworkState,
    p: &RadioParams,
    w: &MilpWeights,
    k_fraction: f64,
    ch_max: usize,
    k: usize,
    sol: &ClusteringSolution,
    group: u32,
    round: u32,
) -> Result<Sample> {
    let ch_y = s.nodes.iter().map(|v| f64::from(sol.chs.binary_search(&v.id).is_ok())).collect();
    let assign_y = s
        .nodes
        .iter()
        .map(|v| if v.alive { sol.assignment.get(&v.id).and_then(|h| sol.chs.binary_search(h).ok()) } else { None })
        .collect();
    Ok(Sample {
        group,
        round,
        k,
        ch_x: ch_features(s, p, w, k_fraction),
        ch_y,
        assign_x: assign_features(s, p, w, &sol.chs, ch_max)?,
        assign_y,
    })
}

/// Runs an always-re-cluster exact simulation per scenario up to the first
/// death and labels every round. Scenarios run in parallel and are merged
/// in order; exact duplicate rows are dropped.
pub fn build_dataset(scenarios: &[Scenario], p: &RadioParams) -> Result<SolutionDataset> {
    build_dataset_until(scenarios, p, StopCondition::FirstDeath)
}

/// As [`build_dataset`] with an explicit stopping rule.
pub fn build_dataset_until(scenarios: &[Scenario], p: &RadioParams, stop: StopCondition) -> Result<SolutionDataset> {
    let first = scenarios.first().ok_or(Error::EmptyDataset)?;
    let n = first.network.n_nodes;
    let ch_max = first.network.max_cluster_heads();
    for sc in scenarios {
        sc.network.validate()?;
        sc.weights.validate()?;
        if sc.network.n_nodes != n || sc.network.max_cluster_heads() != ch_max {
            return Err(Error::MismatchedNodes { left: n, right: sc.network.n_nodes });
        }
    }
    let jobs: Vec<(u32, Scenario)> = scenarios.iter().cloned().enumerate().map(|(i, s)| (i as u32, s)).collect();
    let runs = par::map(jobs, |(group, sc)| -> Result<Vec<Sample>> {
        let rec = Recorder { inner: ExactClusterer::default(), k_fraction: sc.network.k_fraction, ch_max, group, rows: Vec::new() };
        let mut proto = Rlc::with_clusterer(sc.weights, sc.network.k_fraction, FixedGate::Always, rec);
        let mut s = crate::network::generate_topology(&sc.network);
        simulate(&mut s, &mut proto, p, ControlModel::ReceiveOnly, stop)?;
        Ok(proto.clusterer.rows)
    });
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    let mut duplicates = 0;
    for run in runs {
        for row in run? {
            if seen.insert(row.key()) {
                samples.push(row);
            } else {
                duplicates += 1;
            }
        }
    }
    Ok(SolutionDataset { n_nodes: n, ch_max, samples, duplicates })
}

impl SolutionDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-group shuffle, then the first `ceil(train_frac · size)` rows of
    /// each group go to training.
    pub fn split(&self, train_frac: f64, seed: u64) -> (SolutionDataset, SolutionDataset) {
        let mut r = rng::stream(seed, "dataset-split");
        let mut groups: Vec<u32> = self.samples.iter().map(|s| s.group).collect();
        groups.sort_unstable();
        groups.dedup();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for g in groups {
            let mut rows: Vec<&Sample> = self.samples.iter().filter(|s| s.group == g).collect();
            rows.shuffle(&mut r);
            let cut = ((rows.len() as f64) * train_frac).ceil() as usize;
            train.extend(rows[..cut.min(rows.len())].iter().map(|&s| s.clone()));
            test.extend(rows[cut.min(rows.len())..].iter().map(|&s| s.clone()));
        }
        let mk = |samples| SolutionDataset { n_nodes: self.n_nodes, ch_max: self.ch_max, samples, duplicates: 0 };
        (mk(train), mk(test))
    }

    /// CSV header: `group, round, k`, then the CH features, CH labels,
    /// assignment features and assignment slots (`-1` for none).
    pub fn columns(&self) -> Vec<String> {
        let (n, m) = (self.n_nodes, self.ch_max);
        let mut c: Vec<String> = ["group", "round", "k"].iter().map(|s| s.to_string()).collect();
        c.extend((0..ch_feature_len(n)).map(|i| format!("ch_x{i}")));
        c.extend((1..=n).map(|i| format!("ch_y{i}")));
        c.extend((0..assign_feature_len(n, m)).map(|i| format!("as_x{i}")));
        c.extend((1..=n).map(|i| format!("as_y{i}")));
        c
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns().join(",");
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{},{}", s.group, s.round, s.k);
            for v in s.ch_x.iter().chain(&s.ch_y).chain(&s.assign_x) {
                let _ = write!(out, ",{v:?}");
            }
            for y in &s.assign_y {
                let _ = write!(out, ",{}", y.map_or(-1, |v| v as i64));
            }
            out.push('\n');
        }
        out
    }

    pub fn schema(&self) -> serde_json::Value {
        serde_json::json!({
            "format": DATASET_FORMAT,
            "version": FORMAT_VERSION,
            "n_nodes": self.n_nodes,
            "ch_max": self.ch_max,
            "rows": self.samples.len(),
            "columns": self.columns(),
        })
    }

    /// Writes `<stem>.csv` and `<stem>.schema.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.schema.json")), serde_json::to_string_pretty(&self.schema())?)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let schema_path = dir.join(format!("{stem}.schema.json"));
        let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&schema_path)?)?;
        let bad = |reason: &str| Error::ModelFormat(format!("{}: {reason}", schema_path.display()));
        if schema["format"] != DATASET_FORMAT || schema["version"] != FORMAT_VERSION {
            return Err(bad("unexpected format or version"));
        }
        let n = schema["n_nodes"].as_u64().ok_or_else(|| bad("missing n_nodes"))? as usize;
        let m = schema["ch_max"].as_u64().ok_or_else(|| bad("missing ch_max"))? as usize;
        let csv_path = dir.join(format!("{stem}.csv"));
        let text = std::fs::read_to_string(&csv_path)?;
        let mut ds = SolutionDataset { n_nodes: n, ch_max: m, samples: Vec::new(), duplicates: 0 };
        let header = ds.columns().join(",");
        let mut lines = text.lines();
        let csv_err = |line: usize, reason: String| Error::Csv { path: csv_path.display().to_string(), line, reason };
        if lines.next() != Some(header.as_str()) {
            return Err(csv_err(1, "header does not match the schema".into()));
        }
        let (fc, fa) = (ch_feature_len(n), assign_feature_len(n, m));
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 3 + fc + n + fa + n {
                return Err(csv_err(lineno, format!("expected {} cells, found {}", 3 + fc + n + fa + n, cells.len())));
            }
            let num = |c: &str| c.parse::<f64>().map_err(|e| csv_err(lineno, format!("{c:?}: {e}")));
            let int = |c: &str| c.parse::<i64>().map_err(|e| csv_err(lineno, format!("{c:?}: {e}")));
            let floats = |r: std::ops::Range<usize>| cells[r].iter().map(|c| num(c)).collect::<Result<Vec<f64>>>();
            let mut o = 3;
            let ch_x = floats(o..o + fc)?;
            o += fc;
            let ch_y = floats(o..o + n)?;
            o += n;
            let assign_x = floats(o..o + fa)?;
            o += fa;
            let assign_y = cells[o..o + n]
                .iter()
                .map(|c| int(c).map(|v| usize::try_from(v).ok()))
                .collect::<Result<Vec<_>>>()?;
            ds.samples.push(Sample {
                group: int(cells[0])? as u32,
                round: int(cells[1])? as u32,
                k: int(cells[2])? as usize,
                ch_x,
                ch_y,
                assign_x,
                assign_y,
            });
        }
        Ok(ds)
    }
}

/// Per-feature standardisation fitted on training rows. Constant features
/// keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.collect();
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .zip(&mean)
            .map(|(v, m)| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 * m.abs().max(1e-300) { sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub ch_learning_rate: f64,
    pub assign_learning_rate: f64,
    pub train_fraction: f64,
    /// Topology seeds of the labelling runs.
    pub dataset_seeds: Vec<u64>,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            dropout: 0.1,
            epochs: 200,
            batch_size: 16,
            ch_learning_rate: 1e-4,
            assign_learning_rate: 1e-4,
            train_fraction: 0.8,
            dataset_seeds: vec![1, 2, 3],
            seed: 1,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::param("surrogate", "hidden and batch_size must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::param("train_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ClusterHeads,
    Assignment,
}

/// A trained predictor with its input scaler.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub kind: Kind,
    pub n_nodes: usize,
    pub ch_max: usize,
    pub scaler: Scaler,
    pub net: Mlp,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PredictorFile {
    format: String,
    version: u32,
    kind: Kind,
    n_nodes: usize,
    ch_max: usize,
    scaler: Scaler,
    net: serde_json::Value,
}

impl Predictor {
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.predict(&self.scaler.apply(x))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = PredictorFile {
            format: MODEL_FORMAT.into(),
            version: FORMAT_VERSION,
            kind: self.kind,
            n_nodes: self.n_nodes,
            ch_max: self.ch_max,
            scaler: self.scaler.clone(),
            net: self.net.to_value()?,
        };
        std::fs::write(path, serde_json::to_string(&f)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: PredictorFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if f.format != MODEL_FORMAT || f.version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("{}: expected {MODEL_FORMAT} v{FORMAT_VERSION}", path.display())));
        }
        let net = Mlp::from_value(f.net)?;
        let want = match f.kind {
            Kind::ClusterHeads => ch_feature_len(f.n_nodes),
            Kind::Assignment => assign_feature_len(f.n_nodes, f.ch_max),
        };
        if net.spec().input_dim() != want || f.scaler.mean.len() != want {
            return Err(Error::Dimension { context: "surrogate input", expected: want, got: net.spec().input_dim() });
        }
        Ok(Self { kind: f.kind, n_nodes: f.n_nodes, ch_max: f.ch_max, scaler: f.scaler, net, history: Vec::new() })
    }
}

fn fit(
    net: &mut Mlp,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    loss: Loss,
    lr: f64,
    cfg: &SurrogateConfig,
    label: &str,
) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut r = rng::stream(cfg.seed, label);
    let (dx, dy) = (x[0].len(), y[0].len());
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut bx = Vec::with_capacity(chunk.len() * dx);
            let mut by = Vec::with_capacity(chunk.len() * dy);
            for &i in chunk {
                bx.extend_from_slice(&x[i]);
                by.extend_from_slice(&y[i]);
            }
            total += net.train_step(&bx, &by, chunk.len(), loss, lr, None)? * chunk.len() as f64;
        }
        history.push(total / x.len() as f64);
    }
    Ok(history)
}

/// MLP `[4N+5, hidden, N]`, sigmoid output, binary cross-entropy.
pub fn train_ch_predictor(ds: &SolutionDataset, cfg: &SurrogateConfig) -> Result<Predictor> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = ch_feature_len(ds.n_nodes);
    let scaler = Scaler::fit(ds.samples.iter().map(|s| s.ch_x.as_slice()), dim)?;
    let x: Vec<Vec<f64>> = ds.samples.iter().map(|s| scaler.apply(&s.ch_x)).collect();
    let y: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.ch_y.clone()).collect();
    let spec = MlpSpec { layer_sizes: vec![dim, cfg.hidden, ds.n_nodes], output: OutputActivation::Sigmoid, dropout: cfg.dropout };
    let mut net = Mlp::new(spec, rng::derive_seed(cfg.seed, "ch-net"))?;
    let history = fit(&mut net, &x, &y, Loss::Bce, cfg.ch_learning_rate, cfg, "ch-epochs")?;
    Ok(Predictor { kind: Kind::ClusterHeads, n_nodes: ds.n_nodes, ch_max: ds.ch_max, scaler, net, history })
}

fn one_hot(y: &[Option<usize>], ch_max: usize) -> Vec<f64> {
    let mut t = vec![0.0; y.len() * ch_max];
    for (i, slot) in y.iter().enumerate() {
        if let Some(s) = slot {
            t[i * ch_max + s] = 1.0;
        }
    }
    t
}

/// MLP `[4 + N + CH_max + N·CH_max + CH_max, hidden, N·CH_max]` with a softmax
/// over each node's `CH_max` slots and categorical cross-entropy. Dead
/// nodes carry no label and contribute no gradient.
pub fn train_assign_predictor(ds: &SolutionDataset, cfg: &SurrogateConfig) -> Result<Predictor> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (n, m) = (ds.n_nodes, ds.ch_max);
    let dim = assign_feature_len(n, m);
    let scaler = Scaler::fit(ds.samples.iter().map(|s| s.assign_x.as_slice()), dim)?;
    let x: Vec<Vec<f64>> = ds.samples.iter().map(|s| scaler.apply(&s.assign_x)).collect();
    let y: Vec<Vec<f64>> = ds.samples.iter().map(|s| one_hot(&s.assign_y, m)).collect();
    let spec = MlpSpec { layer_sizes: vec![dim, cfg.hidden, n * m], output: OutputActivation::SoftmaxRows(m), dropout: cfg.dropout };
    let mut net = Mlp::new(spec, rng::derive_seed(cfg.seed, "assign-net"))?;
    let history = fit(&mut net, &x, &y, Loss::Cce, cfg.assign_learning_rate, cfg, "assign-epochs")?;
    Ok(Predictor { kind: Kind::Assignment, n_nodes: n, ch_max: m, scaler, net, history })
}

/// Indices of the `k` largest scores among `allowed`, ties to the lower index.
fn top_k(scores: &[f64], allowed: &[bool], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| allowed[i]).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Potential-head flags recovered from a raw CH feature row.
fn head_flags(ch_x: &[f64], n: usize) -> Vec<bool> {
    ch_x[4 + n..4 + 2 * n].iter().map(|&f| f == 1.0).collect()
}

fn batch_predict(p: &Predictor, rows: impl Iterator<Item = Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = rows.map(|x| p.scaler.apply(&x)).collect();
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let flat: Vec<f64> = rows.concat();
    let mut net = p.net.clone();
    let out = net.forward_batch(&flat, rows.len(), Mode::Eval)?;
    let w = out.len() / rows.len();
    Ok(out.chunks(w).map(<[f64]>::to_vec).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChAccuracy {
    /// Per-node agreement after taking the top `k` potential heads.
    pub top_k: f64,
    /// Per-node agreement of the 0.5-thresholded probabilities.
    pub threshold: f64,
}

pub fn ch_accuracy(model: &Predictor, ds: &SolutionDataset) -> Result<ChAccuracy> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = ds.n_nodes;
    let probs = batch_predict(model, ds.samples.iter().map(|s| s.ch_x.clone()))?;
    let (mut hit_k, mut hit_t) = (0usize, 0usize);
    for (s, p) in ds.samples.iter().zip(&probs) {
        let chosen = top_k(p, &head_flags(&s.ch_x, n), s.k);
        for (i, (&pi, &y)) in p.iter().zip(&s.ch_y).take(n).enumerate() {
            let truth = y == 1.0;
            hit_k += usize::from(chosen.binary_search(&i).is_ok() == truth);
            hit_t += usize::from((pi >= 0.5) == truth);
        }
    }
    let total = (ds.len() * n) as f64;
    Ok(ChAccuracy { top_k: hit_k as f64 / total, threshold: hit_t as f64 / total })
}

/// Fraction of labelled nodes whose arg-max slot is the solver's slot.
pub fn assign_accuracy(model: &Predictor, ds: &SolutionDataset) -> Result<f64> {
    let m = ds.ch_max;
    let probs = batch_predict(model, ds.samples.iter().map(|s| s.assign_x.clone()))?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (s, p) in ds.samples.iter().zip(&probs) {
        for (i, y) in s.assign_y.iter().enumerate() {
            if let Some(y) = y {
                let row = &p[i * m..(i + 1) * m];
                let arg = (0..m).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                hit += usize::from(arg == *y);
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(hit as f64 / total as f64)
}

/// Predicted clustering for `s`: the top-`k` scored potential heads, then
/// per-node arg-max slots. Heads serve themselves; nodes pointing at an
/// empty slot fall back to the cheapest head. The objective is exact.
pub fn predict_solution(
    ch: &Predictor,
    assign: &Predictor,
    s: &NetworkState,
    p: &RadioParams,
    w: &MilpWeights,
    k_fraction: f64,
    k: usize,
) -> Result<ClusteringSolution> {
    let n = s.len();
    if ch.n_nodes != n || assign.n_nodes != n {
        return Err(Error::MismatchedNodes { left: ch.n_nodes, right: n });
    }
    let cands = potential_heads(s);
    if cands.is_empty() {
        return Err(Error::NoAliveNodes);
    }
    if k == 0 {
        return Err(Error::param("k", "need at least one cluster head"));
    }
    let k_clamped = k > cands.len();
    let k = k.min(cands.len()).min(assign.ch_max);
    let scores = ch.predict(&ch_features(s, p, w, k_fraction))?;
    let allowed: Vec<bool> = s.nodes.iter().map(|v| cands.binary_search(&v.id).is_ok()).collect();
    let chs: Vec<NodeId> = top_k(&scores, &allowed, k).into_iter().map(|i| s.nodes[i].id).collect();

    let probs = assign.predict(&assign_features(s, p, w, &chs, assign.ch_max)?)?;
    let fallback = optimal_assignment(s, p, &chs)?;
    let m = assign.ch_max;
    let mut assignment = std::collections::BTreeMap::new();
    for (i, v) in s.nodes.iter().enumerate() {
        if !v.alive {
            continue;
        }
        let target = if chs.binary_search(&v.id).is_ok() {
            v.id
        } else {
            let row = &probs[i * m..(i + 1) * m];
            let arg = (0..m).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            chs.get(arg).copied().unwrap_or(fallback[&v.id])
        };
        assignment.insert(v.id, target);
    }
    let c = Clustering { chs, assignment };
    let obj = objective(s, p, w, &c)?;
    Ok(ClusteringSolution { chs: c.chs, assignment: c.assignment, objective: obj, k_clamped })
}

/// The trained pair used as a clustering backend during agent training.
#[derive(Debug, Clone)]
pub struct SurrogateClusterer {
    pub ch: Predictor,
    pub assign: Predictor,
    pub k_fraction: f64,
}

impl Clusterer for SurrogateClusterer {
    fn cluster(&mut self, s: &NetworkState, p: &RadioParams, w: &MilpWeights, k: usize) -> Result<ClusteringSolution> {
        predict_solution(&self.ch, &self.assign, s, p, w, self.k_fraction, k)
    }
}

/// Share of `rounds` where the predicted objective is within `tol` relative
/// error of the exact one; `rounds` pairs states with their exact solutions.
pub fn objective_agreement(
    clusterer: &SurrogateClusterer,
    rounds: &[(NetworkState, ClusteringSolution)],
    p: &RadioParams,
    w: &MilpWeights,
    tol: f64,
) -> Result<f64> {
    if rounds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ok = 0;
    for (s, exact) in rounds {
        let k = cluster_head_target(clusterer.k_fraction, s.alive_count());
        let pred = predict_solution(&clusterer.ch, &clusterer.assign, s, p, w, clusterer.k_fraction, k)?;
        if (pred.objective - exact.objective).abs() <= tol * exact.objective.abs() {
            ok += 1;
        }
    }
    Ok(f64::from(ok) / rounds.len() as f64)
}
