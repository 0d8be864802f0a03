//! Undirected graphs, acyclic subgraph selections, connected-component
//! decomposition with v-/b-acyclic classification, and unique tree paths.

use crate::{Error, Result};
use serde::Deserialize;
use std::collections::HashMap;
use std::path::Path;

/// A simple undirected graph. Edges are stored canonically with `v < w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    vertex_count: usize,
    edges: Vec<(u32, u32)>,
    edge_ids: HashMap<(u32, u32), usize>,
}

impl Graph {
    pub fn new(vertex_count: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut canon = Vec::new();
        let mut edge_ids = HashMap::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            let (v, w) = if a < b { (a, b) } else { (b, a) };
            if w as usize >= vertex_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({v}, {w}) references a vertex outside [0, {vertex_count})"
                )));
            }
            if edge_ids.insert((v, w), canon.len()).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate edge ({v}, {w})")));
            }
            canon.push((v, w));
        }
        Ok(Self {
            vertex_count,
            edges: canon,
            edge_ids,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Canonical edge id for an unordered pair, if present.
    pub fn edge_id(&self, a: u32, b: u32) -> Option<usize> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edge_ids.get(&key).copied()
    }
}

/// An edge of the original graph together with its canonical endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeRef {
    /// Index into the graph's edge list.
    pub id: usize,
    pub v: u32,
    pub w: u32,
}

/// A kept-edge subset `E'` of a graph's edges, required to be cycle-free.
///
/// Kept and dropped edges are each sorted by original edge id; positions in
/// these lists ("slots") index pair-coordinate vectors elsewhere.
#[derive(Debug, Clone)]
pub struct SubgraphSelection {
    vertex_count: usize,
    total_edges: usize,
    kept: Vec<EdgeRef>,
    dropped: Vec<EdgeRef>,
}

impl SubgraphSelection {
    pub fn new(graph: &Graph, kept_pairs: &[(u32, u32)]) -> Result<Self> {
        let mut kept_ids = Vec::with_capacity(kept_pairs.len());
        for &(a, b) in kept_pairs {
            let id = graph.edge_id(a, b).ok_or_else(|| {
                Error::InvalidSelection(format!("kept edge ({a}, {b}) is not a graph edge"))
            })?;
            kept_ids.push(id);
        }
        kept_ids.sort_unstable();
        kept_ids.dedup();
        if kept_ids.len() != kept_pairs.len() {
            return Err(Error::InvalidSelection("duplicate kept edge".into()));
        }

        let mut uf = UnionFind::new(graph.vertex_count());
        for &id in &kept_ids {
            let (v, w) = graph.edges()[id];
            if !uf.union(v as usize, w as usize) {
                return Err(Error::InvalidSelection(format!(
                    "kept edges contain a cycle through ({v}, {w})"
                )));
            }
        }

        let mut kept = Vec::with_capacity(kept_ids.len());
        let mut dropped = Vec::new();
        let mut next = kept_ids.iter().copied().peekable();
        for (id, &(v, w)) in graph.edges().iter().enumerate() {
            let r = EdgeRef { id, v, w };
            if next.peek() == Some(&id) {
                next.next();
                kept.push(r);
            } else {
                dropped.push(r);
            }
        }
        Ok(Self {
            vertex_count: graph.vertex_count(),
            total_edges: graph.edges().len(),
            kept,
            dropped,
        })
    }

    /// Keep every edge. Valid only when the graph itself is acyclic.
    pub fn full(graph: &Graph) -> Result<Self> {
        let pairs: Vec<_> = graph.edges().to_vec();
        Self::new(graph, &pairs)
    }

    /// Keep no edges (the naive mean-field selection).
    pub fn empty(graph: &Graph) -> Self {
        Self::new(graph, &[]).expect("empty selection is always acyclic")
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn total_edges(&self) -> usize {
        self.total_edges
    }

    pub fn kept(&self) -> &[EdgeRef] {
        &self.kept
    }

    pub fn dropped(&self) -> &[EdgeRef] {
        &self.dropped
    }

    pub fn decompose(&self) -> ComponentDecomposition {
        ComponentDecomposition::new(self)
    }

    /// Checks that this selection was built against `graph`.
    pub fn matches_graph(&self, graph: &Graph) -> bool {
        self.vertex_count == graph.vertex_count()
            && self.total_edges == graph.edges().len()
            && self
                .kept
                .iter()
                .all(|e| graph.edges().get(e.id) == Some(&(e.v, e.w)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentKind {
    /// No dropped edge has both endpoints inside the component.
    VAcyclic,
    /// At least one dropped edge would close a cycle inside the component.
    BAcyclic,
}

/// One tree component of the kept subgraph, rooted at its first vertex.
#[derive(Debug, Clone)]
pub struct Component {
    /// Vertices in BFS order from the root.
    pub vertices: Vec<u32>,
    /// Parallel to `vertices`: `(parent vertex, kept slot)` for non-roots.
    pub parent: Vec<Option<(u32, usize)>>,
    /// Kept-edge slots owned by this component.
    pub kept_slots: Vec<usize>,
    pub kind: ComponentKind,
}

/// Connected components of `(V, E')` plus the dropped-edge partition.
#[derive(Debug, Clone)]
pub struct ComponentDecomposition {
    /// Component id per vertex.
    pub comp_of: Vec<usize>,
    pub components: Vec<Component>,
    /// Dropped slots whose endpoints lie in two distinct components.
    pub dropped_cross: Vec<usize>,
    /// Per component, dropped slots with both endpoints inside it.
    pub dropped_intra: Vec<Vec<usize>>,
    /// Kept-edge adjacency: `adj[v] = (neighbor, kept slot)`.
    pub adj: Vec<Vec<(u32, usize)>>,
}

impl ComponentDecomposition {
    pub fn new(sel: &SubgraphSelection) -> Self {
        let m = sel.vertex_count();
        let mut adj = vec![Vec::new(); m];
        for (slot, e) in sel.kept().iter().enumerate() {
            adj[e.v as usize].push((e.w, slot));
            adj[e.w as usize].push((e.v, slot));
        }

        let mut comp_of = vec![usize::MAX; m];
        let mut components = Vec::new();
        for root in 0..m {
            if comp_of[root] != usize::MAX {
                continue;
            }
            let cid = components.len();
            let mut vertices = vec![root as u32];
            let mut parent = vec![None];
            comp_of[root] = cid;
            let mut head = 0;
            while head < vertices.len() {
                let v = vertices[head];
                head += 1;
                for &(w, slot) in &adj[v as usize] {
                    if comp_of[w as usize] == usize::MAX {
                        comp_of[w as usize] = cid;
                        vertices.push(w);
                        parent.push(Some((v, slot)));
                    }
                }
            }
            components.push(Component {
                vertices,
                parent,
                kept_slots: Vec::new(),
                kind: ComponentKind::VAcyclic,
            });
        }

        for (slot, e) in sel.kept().iter().enumerate() {
            components[comp_of[e.v as usize]].kept_slots.push(slot);
        }

        let mut dropped_cross = Vec::new();
        let mut dropped_intra = vec![Vec::new(); components.len()];
        for (slot, e) in sel.dropped().iter().enumerate() {
            let (cv, cw) = (comp_of[e.v as usize], comp_of[e.w as usize]);
            if cv == cw {
                dropped_intra[cv].push(slot);
                components[cv].kind = ComponentKind::BAcyclic;
            } else {
                dropped_cross.push(slot);
            }
        }

        Self {
            comp_of,
            components,
            dropped_cross,
            dropped_intra,
            adj,
        }
    }

    pub fn is_v_acyclic(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.kind == ComponentKind::VAcyclic)
    }

    /// Unique simple path between `a` and `b` through kept edges.
    ///
    /// Errors when the endpoints lie in different components.
    pub fn unique_path(&self, a: u32, b: u32) -> Result<TreePath> {
        if self.comp_of[a as usize] != self.comp_of[b as usize] {
            return Err(Error::CrossComponentPath(a, b));
        }
        // BFS from a until b; components are trees so the path is unique.
        let mut prev: HashMap<u32, (u32, usize)> = HashMap::new();
        let mut queue = std::collections::VecDeque::from([a]);
        while let Some(v) = queue.pop_front() {
            if v == b {
                break;
            }
            for &(w, slot) in &self.adj[v as usize] {
                if w != a && !prev.contains_key(&w) {
                    prev.insert(w, (v, slot));
                    queue.push_back(w);
                }
            }
        }
        let mut vertices = vec![b];
        let mut edge_slots = Vec::new();
        let mut cur = b;
        while cur != a {
            let (p, slot) = prev[&cur];
            edge_slots.push(slot);
            vertices.push(p);
            cur = p;
        }
        vertices.reverse();
        edge_slots.reverse();
        Ok(TreePath {
            vertices,
            edge_slots,
        })
    }

    /// Per component, dropped cross edges with exactly one endpoint inside it.
    pub fn cross_touches(&self, sel: &SubgraphSelection) -> Vec<Vec<CrossTouch>> {
        let mut out = vec![Vec::new(); self.components.len()];
        for &slot in &self.dropped_cross {
            let e = sel.dropped()[slot];
            out[self.comp_of[e.v as usize]].push(CrossTouch {
                slot,
                inside: e.v,
                outside: e.w,
                inside_first: true,
            });
            out[self.comp_of[e.w as usize]].push(CrossTouch {
                slot,
                inside: e.w,
                outside: e.v,
                inside_first: false,
            });
        }
        out
    }
}

/// A dropped cross edge viewed from the component containing `inside`.
/// `inside_first` records whether `inside` is the canonical first endpoint.
#[derive(Debug, Clone, Copy)]
pub struct CrossTouch {
    pub slot: usize,
    pub inside: u32,
    pub outside: u32,
    pub inside_first: bool,
}

/// The unique simple path `a = p_0, ..., p_k = b` through kept edges.
#[derive(Debug, Clone)]
pub struct TreePath {
    pub vertices: Vec<u32>,
    /// Kept slots of consecutive pairs; `len() == vertices.len() - 1`.
    pub edge_slots: Vec<usize>,
}

impl TreePath {
    /// Number of path edges.
    pub fn len(&self) -> usize {
        self.edge_slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_slots.is_empty()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let r = self.find(self.parent[x]);
            self.parent[x] = r;
        }
        self.parent[x]
    }

    /// Returns false if x and y were already connected.
    fn union(&mut self, x: usize, y: usize) -> bool {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return false;
        }
        self.parent[rx] = ry;
        true
    }
}

// ---------------------------------------------------------------------------
// Grid presets
// ---------------------------------------------------------------------------

/// Vertex id of grid cell (row, col) on an n-by-n grid.
pub fn grid_vertex(n: usize, row: usize, col: usize) -> u32 {
    (row * n + col) as u32
}

/// The n-by-n lattice: n^2 vertices and 2n(n-1) edges.
pub fn grid(n: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if j + 1 < n {
                edges.push((grid_vertex(n, i, j), grid_vertex(n, i, j + 1)));
            }
            if i + 1 < n {
                edges.push((grid_vertex(n, i, j), grid_vertex(n, i + 1, j)));
            }
        }
    }
    Graph::new(n * n, edges).expect("grid edges are valid")
}

fn horizontal_pairs(n: usize) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n - 1 {
            pairs.push((grid_vertex(n, i, j), grid_vertex(n, i, j + 1)));
        }
    }
    pairs
}

/// Rows-as-chains selection: n v-acyclic components (every vertical edge
/// bridges two rows).
pub fn rows_forest(n: usize) -> SubgraphSelection {
    SubgraphSelection::new(&grid(n), &horizontal_pairs(n)).expect("rows are acyclic")
}

/// Comb spanning tree: all horizontal edges plus the vertical edges of
/// column 0. B-acyclic for n >= 2 since every other vertical edge closes a
/// cycle through the spine.
pub fn comb_tree(n: usize) -> SubgraphSelection {
    let mut pairs = horizontal_pairs(n);
    for i in 0..n - 1 {
        pairs.push((grid_vertex(n, i, 0), grid_vertex(n, i + 1, 0)));
    }
    SubgraphSelection::new(&grid(n), &pairs).expect("comb is a spanning tree")
}

/// The empty selection over the n-by-n grid (naive mean field).
pub fn empty_selection(n: usize) -> SubgraphSelection {
    SubgraphSelection::empty(&grid(n))
}

// ---------------------------------------------------------------------------
// Subgraph file I/O
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct SubgraphFile {
    kept_edges: Vec<(u32, u32)>,
}

/// Loads `{ "kept_edges": [[v, w], ...] }` and validates it against `graph`.
pub fn load_subgraph(path: &Path, graph: &Graph) -> Result<SubgraphSelection> {
    let text = std::fs::read_to_string(path)?;
    let file: SubgraphFile = serde_json::from_str(&text)?;
    SubgraphSelection::new(graph, &file.kept_edges)
}
