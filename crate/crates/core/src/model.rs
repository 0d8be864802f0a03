//! Pairwise discrete MRFs in exponential-family canonical form.
//!
//! Potentials are indicator (overcomplete) features: one coordinate per
//! `(vertex, state)` and one per `(edge, state pair)`. The index set `F` is
//! ordered with all vertex coordinates first (`v * k + x`), followed by edge
//! coordinates (`m*k + edge_id * k^2 + x * k + y`), where `x` is the state of
//! the canonical first endpoint.

use crate::graph::{Graph, SubgraphSelection};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Shared state space for all vertices; optional real labels per state
/// (e.g. -1/+1 for Ising spins).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    size: usize,
    labels: Option<Vec<f64>>,
}

impl StateSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidModel(format!(
                "state space must have at least 2 states, got {size}"
            )));
        }
        Ok(Self { size, labels: None })
    }

    pub fn with_labels(labels: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(labels.len())?;
        s.labels = Some(labels);
        Ok(s)
    }

    /// Two states labelled -1 and +1.
    pub fn spins() -> Self {
        Self::with_labels(vec![-1.0, 1.0]).unwrap()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }
}

/// A coordinate of the potential index set `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialIndex {
    Vertex(u32, usize),
    /// `(edge id, state of canonical first endpoint, state of second)`.
    Edge(usize, usize, usize),
}

/// Total dimension `d = m*k + |E|*k^2`.
pub fn param_dim(graph: &Graph, k: usize) -> usize {
    graph.vertex_count() * k + graph.edges().len() * k * k
}

/// Flat position of a potential coordinate under the documented ordering.
pub fn index_of(graph: &Graph, k: usize, idx: PotentialIndex) -> usize {
    match idx {
        PotentialIndex::Vertex(v, x) => v as usize * k + x,
        PotentialIndex::Edge(e, x, y) => graph.vertex_count() * k + e * k * k + x * k + y,
    }
}

/// The ordered enumeration of `F`.
pub fn index_set(graph: &Graph, k: usize) -> Vec<PotentialIndex> {
    let mut out = Vec::with_capacity(param_dim(graph, k));
    for v in 0..graph.vertex_count() as u32 {
        for x in 0..k {
            out.push(PotentialIndex::Vertex(v, x));
        }
    }
    for e in 0..graph.edges().len() {
        for x in 0..k {
            for y in 0..k {
                out.push(PotentialIndex::Edge(e, x, y));
            }
        }
    }
    out
}

/// A pairwise discrete MRF with canonical parameters over `F`.
#[derive(Debug, Clone)]
pub struct Model {
    pub graph: Graph,
    pub states: StateSpace,
    unary: Vec<f64>,
    pairwise: Vec<f64>,
}

impl Model {
    pub fn new(graph: Graph, states: StateSpace, unary: Vec<f64>, pairwise: Vec<f64>) -> Result<Self> {
        let (m, k) = (graph.vertex_count(), states.size());
        if unary.len() != m * k {
            return Err(Error::InvalidModel(format!(
                "unary parameters have length {}, expected {}",
                unary.len(),
                m * k
            )));
        }
        if pairwise.len() != graph.edges().len() * k * k {
            return Err(Error::InvalidModel(format!(
                "pairwise parameters have length {}, expected {}",
                pairwise.len(),
                graph.edges().len() * k * k
            )));
        }
        if unary.iter().chain(&pairwise).any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(Self {
            graph,
            states,
            unary,
            pairwise,
        })
    }

    /// All-zero parameters.
    pub fn zeros(graph: Graph, states: StateSpace) -> Self {
        let (m, k, e) = (graph.vertex_count(), states.size(), graph.edges().len());
        Self::new(graph, states, vec![0.0; m * k], vec![0.0; e * k * k]).unwrap()
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn state_count(&self) -> usize {
        self.states.size()
    }

    pub fn dim(&self) -> usize {
        param_dim(&self.graph, self.state_count())
    }

    pub fn unary(&self, v: u32, x: usize) -> f64 {
        self.unary[v as usize * self.state_count() + x]
    }

    pub fn unary_mut(&mut self, v: u32, x: usize) -> &mut f64 {
        let k = self.state_count();
        &mut self.unary[v as usize * k + x]
    }

    /// Pairwise parameter at `(edge, x, y)` with `x` the state of the
    /// canonical first endpoint.
    pub fn pairwise(&self, edge: usize, x: usize, y: usize) -> f64 {
        let k = self.state_count();
        self.pairwise[edge * k * k + x * k + y]
    }

    pub fn pairwise_mut(&mut self, edge: usize, x: usize, y: usize) -> &mut f64 {
        let k = self.state_count();
        &mut self.pairwise[edge * k * k + x * k + y]
    }

    /// `<phi(x), theta>`: the configuration's unnormalized log-score.
    pub fn score(&self, config: &[usize]) -> f64 {
        let mut s = 0.0;
        for (v, &x) in config.iter().enumerate() {
            s += self.unary(v as u32, x);
        }
        for (e, &(v, w)) in self.graph.edges().iter().enumerate() {
            s += self.pairwise(e, config[v as usize], config[w as usize]);
        }
        s
    }

    /// Dense indicator vector phi(x) over `F`.
    pub fn suff_stats(&self, config: &[usize]) -> Vec<f64> {
        let k = self.state_count();
        let mut phi = vec![0.0; self.dim()];
        for (v, &x) in config.iter().enumerate() {
            phi[index_of(&self.graph, k, PotentialIndex::Vertex(v as u32, x))] = 1.0;
        }
        for (e, &(v, w)) in self.graph.edges().iter().enumerate() {
            let idx = PotentialIndex::Edge(e, config[v as usize], config[w as usize]);
            phi[index_of(&self.graph, k, idx)] = 1.0;
        }
        phi
    }

    /// Flat parameter vector over `F`.
    pub fn theta_flat(&self) -> Vec<f64> {
        let mut out = self.unary.clone();
        out.extend_from_slice(&self.pairwise);
        out
    }
}

/// Zero-field Ising model on the n-by-n grid at temperature `T`: spins
/// s in {-1, +1}, coupling s*t / T on every lattice edge, encoded through
/// indicator tables.
pub fn ising_grid(n: usize, temperature: f64) -> Result<Model> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidModel(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let graph = crate::graph::grid(n);
    let states = StateSpace::spins();
    let mut model = Model::zeros(graph, states);
    let coupling = 1.0 / temperature;
    let spin = [-1.0, 1.0];
    for e in 0..model.graph.edges().len() {
        for x in 0..2 {
            for y in 0..2 {
                *model.pairwise_mut(e, x, y) = spin[x] * spin[y] * coupling;
            }
        }
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Vectors over the kept index set F'
// ---------------------------------------------------------------------------

/// A real vector over `F'`: one entry per `(vertex, state)` plus one per
/// `(kept slot, state pair)`. Used both for parameters (omega, zeta) and for
/// moments (tau).
#[derive(Debug, Clone, PartialEq)]
pub struct ForestVec {
    k: usize,
    pub node: Vec<f64>,
    pub pair: Vec<f64>,
}

impl ForestVec {
    pub fn zeros(m: usize, k: usize, kept: usize) -> Self {
        Self {
            k,
            node: vec![0.0; m * k],
            pair: vec![0.0; kept * k * k],
        }
    }

    pub fn state_count(&self) -> usize {
        self.k
    }

    pub fn node_at(&self, v: u32, x: usize) -> f64 {
        self.node[v as usize * self.k + x]
    }

    pub fn node_mut(&mut self, v: u32, x: usize) -> &mut f64 {
        &mut self.node[v as usize * self.k + x]
    }

    pub fn pair_at(&self, slot: usize, x: usize, y: usize) -> f64 {
        self.pair[slot * self.k * self.k + x * self.k + y]
    }

    pub fn pair_mut(&mut self, slot: usize, x: usize, y: usize) -> &mut f64 {
        &mut self.pair[slot * self.k * self.k + x * self.k + y]
    }

    pub fn dot(&self, other: &ForestVec) -> f64 {
        let n: f64 = self
            .node
            .iter()
            .zip(&other.node)
            .map(|(a, b)| a * b)
            .sum();
        let p: f64 = self
            .pair
            .iter()
            .zip(&other.pair)
            .map(|(a, b)| a * b)
            .sum();
        n + p
    }

    /// Dimension `d' = m*k + |E'|*k^2`.
    pub fn dim(&self) -> usize {
        self.node.len() + self.pair.len()
    }
}

/// Parameters split along the kept/dropped edge partition: `theta = (omega,
/// vartheta)`.
#[derive(Debug, Clone)]
pub struct SplitParams {
    /// Vertex and kept-edge potentials, over `F'`.
    pub omega: ForestVec,
    /// Dropped-edge potentials, indexed `dropped_slot * k^2 + s*k + t`.
    pub vartheta: Vec<f64>,
}

pub fn split_params(model: &Model, sel: &SubgraphSelection) -> SplitParams {
    let (m, k) = (model.vertex_count(), model.state_count());
    let mut omega = ForestVec::zeros(m, k, sel.kept().len());
    omega.node.copy_from_slice(&model.theta_flat()[..m * k]);
    for (slot, e) in sel.kept().iter().enumerate() {
        for x in 0..k {
            for y in 0..k {
                *omega.pair_mut(slot, x, y) = model.pairwise(e.id, x, y);
            }
        }
    }
    let mut vartheta = vec![0.0; sel.dropped().len() * k * k];
    for (slot, e) in sel.dropped().iter().enumerate() {
        for x in 0..k {
            for y in 0..k {
                vartheta[slot * k * k + x * k + y] = model.pairwise(e.id, x, y);
            }
        }
    }
    SplitParams { omega, vartheta }
}

/// Reassembles `(unary, pairwise)` from split parameters; inverse of
/// [`split_params`].
pub fn merge_params(sel: &SubgraphSelection, split: &SplitParams) -> (Vec<f64>, Vec<f64>) {
    let k = split.omega.state_count();
    let unary = split.omega.node.clone();
    let mut pairwise = vec![0.0; sel.total_edges() * k * k];
    for (slot, e) in sel.kept().iter().enumerate() {
        for x in 0..k {
            for y in 0..k {
                pairwise[e.id * k * k + x * k + y] = split.omega.pair_at(slot, x, y);
            }
        }
    }
    for (slot, e) in sel.dropped().iter().enumerate() {
        for x in 0..k {
            for y in 0..k {
                pairwise[e.id * k * k + x * k + y] = split.vartheta[slot * k * k + x * k + y];
            }
        }
    }
    (unary, pairwise)
}

/// Maximum violation of the forest-moment consistency conditions: node rows
/// summing to one, pair tables marginalizing to their endpoints' rows, and
/// entries staying in [0, 1].
pub fn consistency_error(sel: &SubgraphSelection, tau: &ForestVec) -> f64 {
    let k = tau.state_count();
    let mut err: f64 = 0.0;
    for v in 0..sel.vertex_count() as u32 {
        let mut sum = 0.0;
        for x in 0..k {
            let t = tau.node_at(v, x);
            sum += t;
            err = err.max(-t).max(t - 1.0);
        }
        err = err.max((sum - 1.0).abs());
    }
    for (slot, e) in sel.kept().iter().enumerate() {
        for x in 0..k {
            let row: f64 = (0..k).map(|y| tau.pair_at(slot, x, y)).sum();
            err = err.max((row - tau.node_at(e.v, x)).abs());
        }
        for y in 0..k {
            let col: f64 = (0..k).map(|x| tau.pair_at(slot, x, y)).sum();
            err = err.max((col - tau.node_at(e.w, y)).abs());
        }
        for x in 0..k {
            for y in 0..k {
                let t = tau.pair_at(slot, x, y);
                err = err.max(-t).max(t - 1.0);
            }
        }
    }
    err
}

// ---------------------------------------------------------------------------
// Model file I/O
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    vertex_count: usize,
    state_size: usize,
    edges: Vec<(u32, u32)>,
    unary: Vec<Vec<f64>>,
    pairwise: Vec<Vec<f64>>,
}

/// Loads a model from JSON, validating shapes and finiteness.
pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    let graph = Graph::new(file.vertex_count, file.edges)?;
    let states = StateSpace::new(file.state_size)?;
    let k = file.state_size;
    if file.unary.len() != file.vertex_count || file.unary.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidModel(
            "unary table must hold one length-k array per vertex".into(),
        ));
    }
    if file.pairwise.len() != graph.edges().len()
        || file.pairwise.iter().any(|t| t.len() != k * k)
    {
        return Err(Error::InvalidModel(
            "pairwise table must hold one row-major k*k array per edge".into(),
        ));
    }
    let unary: Vec<f64> = file.unary.into_iter().flatten().collect();
    let pairwise: Vec<f64> = file.pairwise.into_iter().flatten().collect();
    Model::new(graph, states, unary, pairwise)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let k = model.state_count();
    let file = ModelFile {
        vertex_count: model.vertex_count(),
        state_size: k,
        edges: model.graph.edges().to_vec(),
        unary: (0..model.vertex_count())
            .map(|v| (0..k).map(|x| model.unary(v as u32, x)).collect())
            .collect(),
        pairwise: (0..model.graph.edges().len())
            .map(|e| {
                (0..k * k)
                    .map(|i| model.pairwise(e, i / k, i % k))
                    .collect()
            })
            .collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}
