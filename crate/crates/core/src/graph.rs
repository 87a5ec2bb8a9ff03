//! Heterogeneous biomedical network: typed nodes (drugs, proteins, diseases),
//! five undirected relation types, and the structural queries the pretext
//! samplers are built on (clustering coefficients, truncated pairwise
//! distances, meta-path walks, filtered shortest paths).
//!
//! The graph is immutable after construction; all queries take `&self` and
//! are safe to run concurrently.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{BufRead, Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{read_u32_le, read_u64_le, write_u32_le, write_u64_le};

/// Magic prefix of the serialized graph format.
pub const GRAPH_MAGIC: [u8; 4] = *b"BHNG";
/// Current graph format version.
pub const GRAPH_FORMAT_VERSION: u32 = 1;

/// Dead-end restarts before a meta-path walk gives up.
const WALK_MAX_RESTARTS: usize = 50;

#[derive(Error, Debug)]
pub enum GraphError {
    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: schema error: {msg}")]
    Schema { line: usize, msg: String },
    #[error("node index {0} out of range")]
    IndexOutOfRange(u32),
    #[error("invalid node pair: i and j are both {0}")]
    InvalidPair(u32),
    #[error("template {template_id}: no node of type {ntype} in graph")]
    UnsatisfiableTemplate { template_id: u8, ntype: NodeType },
    #[error("invalid meta-path template: {0}")]
    InvalidTemplate(String),
    #[error("unknown {ntype} node id {id:?}")]
    UnknownNode { ntype: NodeType, id: String },
    #[error("self-loop on node {0}")]
    SelfLoop(u32),
    #[error("no edge type connects {0} and {1}")]
    NoSuchEdgeType(NodeType, NodeType),
    #[error("graph file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three node types of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Drug,
    Protein,
    Disease,
}

impl NodeType {
    pub const ALL: [NodeType; 3] = [NodeType::Drug, NodeType::Protein, NodeType::Disease];

    pub fn index(self) -> usize {
        match self {
            NodeType::Drug => 0,
            NodeType::Protein => 1,
            NodeType::Disease => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Drug => "drug",
            NodeType::Protein => "protein",
            NodeType::Disease => "disease",
        }
    }

    pub fn parse(s: &str) -> Option<NodeType> {
        match s.trim().to_ascii_lowercase().as_str() {
            "drug" => Some(NodeType::Drug),
            "protein" => Some(NodeType::Protein),
            "disease" => Some(NodeType::Disease),
            _ => None,
        }
    }
}

impl std::fmt::Display for NodeType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The five undirected relation types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    DrugDrug,
    DrugProtein,
    DrugDisease,
    ProteinProtein,
    ProteinDisease,
}

impl EdgeType {
    pub const ALL: [EdgeType; 5] = [
        EdgeType::DrugDrug,
        EdgeType::DrugProtein,
        EdgeType::DrugDisease,
        EdgeType::ProteinProtein,
        EdgeType::ProteinDisease,
    ];

    pub fn index(self) -> usize {
        match self {
            EdgeType::DrugDrug => 0,
            EdgeType::DrugProtein => 1,
            EdgeType::DrugDisease => 2,
            EdgeType::ProteinProtein => 3,
            EdgeType::ProteinDisease => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<EdgeType> {
        EdgeType::ALL.get(i).copied()
    }

    /// The unordered endpoint types of this relation.
    pub fn endpoints(self) -> (NodeType, NodeType) {
        match self {
            EdgeType::DrugDrug => (NodeType::Drug, NodeType::Drug),
            EdgeType::DrugProtein => (NodeType::Drug, NodeType::Protein),
            EdgeType::DrugDisease => (NodeType::Drug, NodeType::Disease),
            EdgeType::ProteinProtein => (NodeType::Protein, NodeType::Protein),
            EdgeType::ProteinDisease => (NodeType::Protein, NodeType::Disease),
        }
    }

    /// The relation connecting two node types, if one exists. Order of the
    /// arguments does not matter; disease-disease has no relation.
    pub fn between(a: NodeType, b: NodeType) -> Option<EdgeType> {
        use NodeType::*;
        match (a.min(b), a.max(b)) {
            (Drug, Drug) => Some(EdgeType::DrugDrug),
            (Drug, Protein) => Some(EdgeType::DrugProtein),
            (Drug, Disease) => Some(EdgeType::DrugDisease),
            (Protein, Protein) => Some(EdgeType::ProteinProtein),
            (Protein, Disease) => Some(EdgeType::ProteinDisease),
            (Disease, Disease) => None,
            _ => unreachable!("min/max normalizes the pair"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::DrugDrug => "drug_drug",
            EdgeType::DrugProtein => "drug_protein",
            EdgeType::DrugDisease => "drug_disease",
            EdgeType::ProteinProtein => "protein_protein",
            EdgeType::ProteinDisease => "protein_disease",
        }
    }

    pub fn parse(s: &str) -> Option<EdgeType> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "drug_drug" => Some(EdgeType::DrugDrug),
            "drug_protein" | "protein_drug" => Some(EdgeType::DrugProtein),
            "drug_disease" | "disease_drug" => Some(EdgeType::DrugDisease),
            "protein_protein" => Some(EdgeType::ProteinProtein),
            "protein_disease" | "disease_protein" => Some(EdgeType::ProteinDisease),
            _ => None,
        }
    }
}

impl std::fmt::Display for EdgeType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A node of the network. `index` is dense and contiguous; all internal
/// computation uses it. `external_id` is retained for reporting and
/// feature-file joins only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRef {
    pub index: u32,
    pub ntype: NodeType,
    pub external_id: String,
}

/// A canonical undirected edge record with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EdgeRec {
    pub u: u32,
    pub v: u32,
    pub etype: EdgeType,
}

/// Distance buckets used by the pairwise-distance pretext task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceClass {
    D1,
    D2,
    D3,
    D4Plus,
    Unreachable,
}

impl DistanceClass {
    /// Class label for the 4-way classification head. `Unreachable` carries
    /// no label; those pairs are never sampled.
    pub fn label(self) -> Option<u32> {
        match self {
            DistanceClass::D1 => Some(0),
            DistanceClass::D2 => Some(1),
            DistanceClass::D3 => Some(2),
            DistanceClass::D4Plus => Some(3),
            DistanceClass::Unreachable => None,
        }
    }

    pub fn from_distance(d: usize) -> DistanceClass {
        match d {
            1 => DistanceClass::D1,
            2 => DistanceClass::D2,
            3 => DistanceClass::D3,
            _ => DistanceClass::D4Plus,
        }
    }
}

/// A 4-node typed walk template. Consecutive types must be connected by one
/// of the five relations, and both ends must be drug or protein.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPathTemplate {
    pub sequence: [NodeType; 4],
    pub template_id: u8,
}

impl MetaPathTemplate {
    pub fn new(template_id: u8, sequence: [NodeType; 4]) -> Result<Self, GraphError> {
        for end in [sequence[0], sequence[3]] {
            if end == NodeType::Disease {
                return Err(GraphError::InvalidTemplate(format!(
                    "template {template_id}: endpoints must be drug or protein, got {end}"
                )));
            }
        }
        for w in sequence.windows(2) {
            if EdgeType::between(w[0], w[1]).is_none() {
                return Err(GraphError::InvalidTemplate(format!(
                    "template {template_id}: no relation between {} and {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(MetaPathTemplate {
            sequence,
            template_id,
        })
    }

    /// The 16 templates of the path-classification task, ids 0..15.
    pub fn catalogue() -> Vec<MetaPathTemplate> {
        use NodeType::{Disease as S, Drug as D, Protein as P};
        let seqs: [[NodeType; 4]; 16] = [
            [D, D, D, P],
            [D, D, P, P],
            [D, D, S, P],
            [D, P, D, P],
            [D, P, P, P],
            [D, P, S, P],
            [D, S, D, P],
            [D, S, P, P],
            [P, D, D, D],
            [P, P, D, D],
            [P, S, D, D],
            [P, D, P, D],
            [P, P, P, D],
            [P, S, P, D],
            [P, D, S, D],
            [P, P, S, D],
        ];
        seqs.iter()
            .enumerate()
            .map(|(i, s)| MetaPathTemplate::new(i as u8, *s).expect("catalogue templates are valid"))
            .collect()
    }

    /// Relation type implied at each of the three hops.
    pub fn edge_types(&self) -> [EdgeType; 3] {
        let mut out = [EdgeType::DrugDrug; 3];
        for (i, w) in self.sequence.windows(2).enumerate() {
            out[i] = EdgeType::between(w[0], w[1]).expect("validated at construction");
        }
        out
    }
}

/// Outcome bookkeeping for an edge-list load: rejected self-loops are
/// reported, duplicate undirected rows are collapsed silently.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_total: usize,
    pub duplicates_collapsed: usize,
    pub self_loop_lines: Vec<usize>,
}

/// Column positions in an edge-list file.
#[derive(Debug, Clone, Copy)]
pub struct EdgeListSchema {
    pub src_id: usize,
    pub src_type: usize,
    pub dst_id: usize,
    pub dst_type: usize,
    pub etype: usize,
}

impl Default for EdgeListSchema {
    fn default() -> Self {
        EdgeListSchema {
            src_id: 0,
            src_type: 1,
            dst_id: 2,
            dst_type: 3,
            etype: 4,
        }
    }
}

impl EdgeListSchema {
    fn max_col(&self) -> usize {
        self.src_id
            .max(self.src_type)
            .max(self.dst_id)
            .max(self.dst_type)
            .max(self.etype)
    }
}

/// Incremental construction; finalized into an immutable [`HetGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<NodeRef>,
    id_index: HashMap<(NodeType, String), u32>,
    // canonical (u, v) with u < v; BTreeMap keeps edge order deterministic
    edges: BTreeMap<(u32, u32), EdgeType>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the node's index, interning it on first sight.
    pub fn add_node(&mut self, external_id: &str, ntype: NodeType) -> u32 {
        if let Some(&idx) = self.id_index.get(&(ntype, external_id.to_string())) {
            return idx;
        }
        let idx = self.nodes.len() as u32;
        self.nodes.push(NodeRef {
            index: idx,
            ntype,
            external_id: external_id.to_string(),
        });
        self.id_index.insert((ntype, external_id.to_string()), idx);
        idx
    }

    /// Adds an undirected edge, inferring the relation from endpoint types.
    /// Returns `false` if the edge was already present.
    pub fn add_edge(&mut self, u: u32, v: u32) -> Result<bool, GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        let (tu, tv) = (self.node_type(u)?, self.node_type(v)?);
        let etype =
            EdgeType::between(tu, tv).ok_or(GraphError::NoSuchEdgeType(tu, tv))?;
        let key = (u.min(v), u.max(v));
        Ok(self.edges.insert(key, etype).is_none())
    }

    fn node_type(&self, v: u32) -> Result<NodeType, GraphError> {
        self.nodes
            .get(v as usize)
            .map(|n| n.ntype)
            .ok_or(GraphError::IndexOutOfRange(v))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn finish(self) -> HetGraph {
        let n = self.nodes.len();
        let mut node_counts = [0usize; 3];
        let mut nodes_by_type: [Vec<u32>; 3] = Default::default();
        for node in &self.nodes {
            node_counts[node.ntype.index()] += 1;
            nodes_by_type[node.ntype.index()].push(node.index);
        }

        let mut edge_counts = [0usize; 5];
        let mut adj: Vec<Vec<(u32, EdgeType)>> = vec![Vec::new(); n];
        let mut edges = Vec::with_capacity(self.edges.len());
        for (&(u, v), &etype) in &self.edges {
            edge_counts[etype.index()] += 1;
            adj[u as usize].push((v, etype));
            adj[v as usize].push((u, etype));
            edges.push(EdgeRec { u, v, etype });
        }

        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(2 * edges.len());
        let mut neigh_etypes = Vec::with_capacity(2 * edges.len());
        offsets.push(0usize);
        for list in &mut adj {
            list.sort_unstable_by_key(|&(v, _)| v);
            for &(v, e) in list.iter() {
                neighbors.push(v);
                neigh_etypes.push(e);
            }
            offsets.push(neighbors.len());
        }

        let mut graph = HetGraph {
            nodes: self.nodes,
            id_index: self.id_index,
            offsets,
            neighbors,
            neigh_etypes,
            edges,
            node_counts,
            edge_counts,
            nodes_by_type,
            components: Vec::new(),
        };
        graph.components = graph.label_components();
        graph
    }
}

/// The loaded network: CSR adjacency with a parallel relation-type array,
/// per-type tallies, and precomputed connected-component labels.
#[derive(Debug, Clone)]
pub struct HetGraph {
    nodes: Vec<NodeRef>,
    id_index: HashMap<(NodeType, String), u32>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    neigh_etypes: Vec<EdgeType>,
    edges: Vec<EdgeRec>,
    node_counts: [usize; 3],
    edge_counts: [usize; 5],
    nodes_by_type: [Vec<u32>; 3],
    components: Vec<u32>,
}

impl HetGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn node(&self, v: u32) -> Result<&NodeRef, GraphError> {
        self.nodes
            .get(v as usize)
            .ok_or(GraphError::IndexOutOfRange(v))
    }

    pub fn node_type(&self, v: u32) -> Result<NodeType, GraphError> {
        self.node(v).map(|n| n.ntype)
    }

    pub fn node_by_id(&self, ntype: NodeType, external_id: &str) -> Option<u32> {
        self.id_index.get(&(ntype, external_id.to_string())).copied()
    }

    pub fn edges(&self) -> &[EdgeRec] {
        &self.edges
    }

    pub fn node_counts(&self) -> &[usize; 3] {
        &self.node_counts
    }

    pub fn edge_counts(&self) -> &[usize; 5] {
        &self.edge_counts
    }

    pub fn nodes_of_type(&self, ntype: NodeType) -> &[u32] {
        &self.nodes_by_type[ntype.index()]
    }

    pub fn degree(&self, v: u32) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Neighbor indices of `v`, sorted ascending.
    pub fn neighbors(&self, v: u32) -> &[u32] {
        let v = v as usize;
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Relation type of each neighbor slot, parallel to [`Self::neighbors`].
    pub fn neighbor_etypes(&self, v: u32) -> &[EdgeType] {
        let v = v as usize;
        &self.neigh_etypes[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn edge_type_between(&self, u: u32, v: u32) -> Option<EdgeType> {
        let slot = self.neighbors(u).binary_search(&v).ok()?;
        Some(self.neighbor_etypes(u)[slot])
    }

    fn check_index(&self, v: u32) -> Result<(), GraphError> {
        if (v as usize) < self.nodes.len() {
            Ok(())
        } else {
            Err(GraphError::IndexOutOfRange(v))
        }
    }

    fn label_components(&self) -> Vec<u32> {
        let n = self.node_count();
        let mut comp = vec![u32::MAX; n];
        let mut next = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if comp[start] != u32::MAX {
                continue;
            }
            comp[start] = next;
            queue.push_back(start as u32);
            while let Some(v) = queue.pop_front() {
                for &w in self.neighbors(v) {
                    if comp[w as usize] == u32::MAX {
                        comp[w as usize] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn component(&self, v: u32) -> Result<u32, GraphError> {
        self.check_index(v)?;
        Ok(self.components[v as usize])
    }

    /// Local clustering coefficient, ignoring node and edge types. Nodes of
    /// degree < 2 get 0 by convention.
    pub fn clustering_coefficient(&self, v: u32) -> Result<f64, GraphError> {
        self.check_index(v)?;
        let neigh = self.neighbors(v);
        let deg = neigh.len();
        if deg < 2 {
            return Ok(0.0);
        }
        let mut links = 0usize;
        for (slot, &a) in neigh.iter().enumerate() {
            for &b in &neigh[slot + 1..] {
                if self.has_edge(a, b) {
                    links += 1;
                }
            }
        }
        Ok(2.0 * links as f64 / (deg as f64 * (deg - 1) as f64))
    }

    /// Distance bucket of a node pair: exact for d <= 3, `D4Plus` beyond,
    /// `Unreachable` across components. Search is truncated at depth 3 via a
    /// meet-in-the-middle frontier; reachability comes from precomputed
    /// component labels.
    pub fn pair_distance_class(&self, i: u32, j: u32) -> Result<DistanceClass, GraphError> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(GraphError::InvalidPair(i));
        }
        if self.components[i as usize] != self.components[j as usize] {
            return Ok(DistanceClass::Unreachable);
        }
        if self.has_edge(i, j) {
            return Ok(DistanceClass::D1);
        }

        // dist_i: nodes within 2 hops of i; dist_j: nodes within 1 hop of j.
        // Any path of length <= 3 has a node at <= 2 from i and <= 1 from j.
        let mut dist_i: HashMap<u32, u8> = HashMap::new();
        dist_i.insert(i, 0);
        for &a in self.neighbors(i) {
            dist_i.entry(a).or_insert(1);
        }
        for &a in self.neighbors(i) {
            for &b in self.neighbors(a) {
                dist_i.entry(b).or_insert(2);
            }
        }
        let mut best = u8::MAX;
        if let Some(&d) = dist_i.get(&j) {
            best = best.min(d);
        }
        for &a in self.neighbors(j) {
            if let Some(&d) = dist_i.get(&a) {
                best = best.min(d + 1);
            }
        }
        Ok(match best {
            2 => DistanceClass::D2,
            3 => DistanceClass::D3,
            _ => DistanceClass::D4Plus,
        })
    }

    /// Shortest path length restricted to edges whose type is in `filter`.
    /// Returns `None` when `b` is unreachable through the filtered subnet.
    pub fn shortest_path_len_in_subnet(
        &self,
        filter: &[EdgeType],
        a: u32,
        b: u32,
    ) -> Result<Option<usize>, GraphError> {
        self.check_index(a)?;
        self.check_index(b)?;
        if a == b {
            return Ok(Some(0));
        }
        let mut allowed = [false; 5];
        for e in filter {
            allowed[e.index()] = true;
        }
        let mut dist: Vec<u32> = vec![u32::MAX; self.node_count()];
        dist[a as usize] = 0;
        let mut queue = VecDeque::new();
        queue.push_back(a);
        while let Some(v) = queue.pop_front() {
            let d = dist[v as usize];
            let base = self.offsets[v as usize];
            for (slot, &w) in self.neighbors(v).iter().enumerate() {
                if !allowed[self.neigh_etypes[base + slot].index()] {
                    continue;
                }
                if dist[w as usize] == u32::MAX {
                    if w == b {
                        return Ok(Some(d as usize + 1));
                    }
                    dist[w as usize] = d + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(None)
    }

    /// One random walk constrained to the template's type sequence. Dead
    /// ends restart from a fresh start node, up to a fixed budget; `None`
    /// means the budget ran out. Every returned path's consecutive pairs are
    /// genuine edges.
    pub fn walk_metapath<R: Rng>(
        &self,
        template: &MetaPathTemplate,
        rng: &mut R,
    ) -> Result<Option<[u32; 4]>, GraphError> {
        let starts = self.nodes_of_type(template.sequence[0]);
        if starts.is_empty() {
            return Err(GraphError::UnsatisfiableTemplate {
                template_id: template.template_id,
                ntype: template.sequence[0],
            });
        }
        let mut candidates: Vec<u32> = Vec::new();
        'restart: for _ in 0..=WALK_MAX_RESTARTS {
            let mut path = [0u32; 4];
            path[0] = starts[rng.gen_range(0..starts.len())];
            for hop in 1..4 {
                let want = template.sequence[hop];
                candidates.clear();
                candidates.extend(
                    self.neighbors(path[hop - 1])
                        .iter()
                        .copied()
                        .filter(|&w| self.nodes[w as usize].ntype == want),
                );
                if candidates.is_empty() {
                    continue 'restart;
                }
                path[hop] = candidates[rng.gen_range(0..candidates.len())];
            }
            return Ok(Some(path));
        }
        Ok(None)
    }

    /// Parses a tab-separated edge list with the default column order
    /// `src_id  src_type  dst_id  dst_type  etype`.
    pub fn load_edge_list<R: BufRead>(reader: R) -> Result<(HetGraph, LoadReport), GraphError> {
        Self::load_edge_list_with_schema(reader, EdgeListSchema::default())
    }

    pub fn load_edge_list_with_schema<R: BufRead>(
        reader: R,
        schema: EdgeListSchema,
    ) -> Result<(HetGraph, LoadReport), GraphError> {
        let mut builder = GraphBuilder::new();
        let mut report = LoadReport::default();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let trimmed = line.trim_end();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            report.rows_total += 1;
            let cols: Vec<&str> = trimmed.split('\t').collect();
            if cols.len() <= schema.max_col() {
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: format!(
                        "expected at least {} tab-separated columns, got {}",
                        schema.max_col() + 1,
                        cols.len()
                    ),
                });
            }
            let src_type = NodeType::parse(cols[schema.src_type]).ok_or_else(|| {
                GraphError::Parse {
                    line: lineno,
                    msg: format!("unknown node type {:?}", cols[schema.src_type]),
                }
            })?;
            let dst_type = NodeType::parse(cols[schema.dst_type]).ok_or_else(|| {
                GraphError::Parse {
                    line: lineno,
                    msg: format!("unknown node type {:?}", cols[schema.dst_type]),
                }
            })?;
            let etype = EdgeType::parse(cols[schema.etype]).ok_or_else(|| GraphError::Parse {
                line: lineno,
                msg: format!("unknown edge type {:?}", cols[schema.etype]),
            })?;
            let expected = EdgeType::between(src_type, dst_type);
            if expected != Some(etype) {
                return Err(GraphError::Schema {
                    line: lineno,
                    msg: format!(
                        "edge type {etype} does not connect {src_type} and {dst_type}"
                    ),
                });
            }
            let src_id = cols[schema.src_id].trim();
            let dst_id = cols[schema.dst_id].trim();
            if src_id.is_empty() || dst_id.is_empty() {
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: "empty node id".to_string(),
                });
            }
            if src_id == dst_id && src_type == dst_type {
                report.self_loop_lines.push(lineno);
                continue;
            }
            let u = builder.add_node(src_id, src_type);
            let v = builder.add_node(dst_id, dst_type);
            match builder.add_edge(u, v) {
                Ok(true) => {}
                Ok(false) => report.duplicates_collapsed += 1,
                Err(e) => {
                    return Err(GraphError::Schema {
                        line: lineno,
                        msg: e.to_string(),
                    })
                }
            }
        }
        Ok((builder.finish(), report))
    }

    /// Serializes the graph: 4-byte magic, format version, JSON header with
    /// counts and the node table, then a binary blob of canonical edges.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), GraphError> {
        w.write_all(&GRAPH_MAGIC)?;
        write_u32_le(w, GRAPH_FORMAT_VERSION)?;
        let header = GraphHeader {
            node_count: self.node_count(),
            edge_count: self.edge_count(),
            node_counts: NodeType::ALL
                .iter()
                .map(|t| (t.as_str().to_string(), self.node_counts[t.index()]))
                .collect(),
            edge_counts: EdgeType::ALL
                .iter()
                .map(|t| (t.as_str().to_string(), self.edge_counts[t.index()]))
                .collect(),
            nodes: self
                .nodes
                .iter()
                .map(|n| (n.external_id.clone(), n.ntype))
                .collect(),
        };
        let header_bytes =
            serde_json::to_vec(&header).map_err(|e| GraphError::Format(e.to_string()))?;
        write_u64_le(w, header_bytes.len() as u64)?;
        w.write_all(&header_bytes)?;
        for e in &self.edges {
            write_u32_le(w, e.u)?;
            write_u32_le(w, e.v)?;
            w.write_all(&[e.etype.index() as u8])?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<HetGraph, GraphError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != GRAPH_MAGIC {
            return Err(GraphError::Format("bad magic".to_string()));
        }
        let version = read_u32_le(r)?;
        if version != GRAPH_FORMAT_VERSION {
            return Err(GraphError::Format(format!(
                "unsupported format version {version}"
            )));
        }
        let header_len = read_u64_le(r)? as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes)?;
        let header: GraphHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| GraphError::Format(e.to_string()))?;

        let mut builder = GraphBuilder::new();
        for (id, ntype) in &header.nodes {
            builder.add_node(id, *ntype);
        }
        if builder.node_count() != header.node_count {
            return Err(GraphError::Format(
                "node table contains duplicate (id, type) entries".to_string(),
            ));
        }
        for _ in 0..header.edge_count {
            let u = read_u32_le(r)?;
            let v = read_u32_le(r)?;
            let mut etype_byte = [0u8; 1];
            r.read_exact(&mut etype_byte)?;
            let etype = EdgeType::from_index(etype_byte[0] as usize)
                .ok_or_else(|| GraphError::Format(format!("bad edge type {}", etype_byte[0])))?;
            let fresh = builder
                .add_edge(u, v)
                .map_err(|e| GraphError::Format(e.to_string()))?;
            if !fresh {
                return Err(GraphError::Format(format!("duplicate edge {u}-{v}")));
            }
            let implied = EdgeType::between(
                builder.node_type(u).map_err(|e| GraphError::Format(e.to_string()))?,
                builder.node_type(v).map_err(|e| GraphError::Format(e.to_string()))?,
            );
            if implied != Some(etype) {
                return Err(GraphError::Format(format!(
                    "edge {u}-{v} type {etype} contradicts node types"
                )));
            }
        }
        Ok(builder.finish())
    }
}

#[derive(Serialize, Deserialize)]
struct GraphHeader {
    node_count: usize,
    edge_count: usize,
    node_counts: BTreeMap<String, usize>,
    edge_counts: BTreeMap<String, usize>,
    nodes: Vec<(String, NodeType)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph_from(nodes: &[(&str, NodeType)], edges: &[(u32, u32)]) -> HetGraph {
        let mut b = GraphBuilder::new();
        for (id, t) in nodes {
            b.add_node(id, *t);
        }
        for &(u, v) in edges {
            b.add_edge(u, v).unwrap();
        }
        b.finish()
    }

    /// Untyped random graph over drug/protein nodes; (disease, disease)
    /// pairs are skipped since no relation connects them.
    pub(crate) fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> HetGraph {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            let t = match rng.gen_range(0..3) {
                0 => NodeType::Drug,
                1 => NodeType::Protein,
                _ => NodeType::Disease,
            };
            b.add_node(&format!("n{i}"), t);
        }
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if rng.gen_bool(p) && b.add_edge(u, v).is_ok() {}
            }
        }
        b.finish()
    }

    fn triple_path_graph() -> HetGraph {
        // 1-2-3-4-5-6 path, all drugs
        graph_from(
            &[
                ("d1", NodeType::Drug),
                ("d2", NodeType::Drug),
                ("d3", NodeType::Drug),
                ("d4", NodeType::Drug),
                ("d5", NodeType::Drug),
                ("d6", NodeType::Drug),
            ],
            &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)],
        )
    }

    #[test]
    fn load_collapses_duplicates() {
        let tsv = "A\tdrug\tB\tdrug\tdrug_drug\nB\tdrug\tC\tdrug\tdrug_drug\nA\tdrug\tB\tdrug\tdrug_drug\n";
        let (g, report) = HetGraph::load_edge_list(tsv.as_bytes()).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(report.duplicates_collapsed, 1);
        assert_eq!(report.rows_total, 3);
    }

    #[test]
    fn load_empty_stream() {
        let (g, report) = HetGraph::load_edge_list("".as_bytes()).unwrap();
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_counts(), &[0, 0, 0]);
        assert_eq!(g.edge_counts(), &[0, 0, 0, 0, 0]);
        assert_eq!(report.rows_total, 0);
    }

    #[test]
    fn load_ignores_comments_and_blank_lines() {
        let tsv = "# header\n\nA\tdrug\tP\tprotein\tdrug_protein\n";
        let (g, report) = HetGraph::load_edge_list(tsv.as_bytes()).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(report.rows_total, 1);
    }

    #[test]
    fn load_rejects_malformed_row_with_line_number() {
        let tsv = "A\tdrug\tB\tdrug\tdrug_drug\nbroken row\n";
        let err = HetGraph::load_edge_list(tsv.as_bytes()).unwrap_err();
        match err {
            GraphError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn load_rejects_etype_mismatch() {
        let tsv = "A\tdrug\tB\tdrug\tdrug_protein\n";
        let err = HetGraph::load_edge_list(tsv.as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::Schema { line: 1, .. }), "{err}");
    }

    #[test]
    fn load_reports_self_loops() {
        let tsv = "A\tdrug\tA\tdrug\tdrug_drug\nA\tdrug\tB\tdrug\tdrug_drug\n";
        let (g, report) = HetGraph::load_edge_list(tsv.as_bytes()).unwrap();
        assert_eq!(report.self_loop_lines, vec![1]);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn clustering_on_clique_and_star() {
        let clique = graph_from(
            &[("a", NodeType::Drug), ("b", NodeType::Drug), ("c", NodeType::Drug)],
            &[(0, 1), (0, 2), (1, 2)],
        );
        for v in 0..3 {
            assert_eq!(clique.clustering_coefficient(v).unwrap(), 1.0);
        }

        let star = graph_from(
            &[
                ("hub", NodeType::Drug),
                ("s1", NodeType::Drug),
                ("s2", NodeType::Drug),
                ("s3", NodeType::Drug),
                ("s4", NodeType::Drug),
            ],
            &[(0, 1), (0, 2), (0, 3), (0, 4)],
        );
        assert_eq!(star.clustering_coefficient(0).unwrap(), 0.0);
        // leaves have degree 1 -> 0 by convention
        assert_eq!(star.clustering_coefficient(1).unwrap(), 0.0);
    }

    #[test]
    fn clustering_partial_neighborhood() {
        // v with neighbors {a, b, c}, one link a-b among them: 2*1/(3*2) = 1/3
        let g = graph_from(
            &[
                ("v", NodeType::Drug),
                ("a", NodeType::Drug),
                ("b", NodeType::Drug),
                ("c", NodeType::Drug),
            ],
            &[(0, 1), (0, 2), (0, 3), (1, 2)],
        );
        assert_eq!(g.clustering_coefficient(0).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn clustering_out_of_range() {
        let g = triple_path_graph();
        assert!(matches!(
            g.clustering_coefficient(99),
            Err(GraphError::IndexOutOfRange(99))
        ));
    }

    #[test]
    fn clustering_matches_brute_force_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n = 20 + (trial * 7) % 60;
            let g = random_graph(&mut rng, n, 0.1);
            for v in 0..g.node_count() as u32 {
                assert_eq!(
                    g.clustering_coefficient(v).unwrap(),
                    crate::oracles::clustering_brute(&g, v),
                    "trial {trial} node {v}"
                );
            }
        }
    }

    #[test]
    fn pair_distance_examples() {
        let g = triple_path_graph();
        assert_eq!(g.pair_distance_class(0, 1).unwrap(), DistanceClass::D1);
        assert_eq!(g.pair_distance_class(0, 2).unwrap(), DistanceClass::D2);
        assert_eq!(g.pair_distance_class(0, 3).unwrap(), DistanceClass::D3);
        assert_eq!(g.pair_distance_class(0, 4).unwrap(), DistanceClass::D4Plus);
        assert_eq!(g.pair_distance_class(0, 5).unwrap(), DistanceClass::D4Plus);
        assert!(matches!(
            g.pair_distance_class(2, 2),
            Err(GraphError::InvalidPair(2))
        ));
    }

    #[test]
    fn pair_distance_unreachable_across_components() {
        let g = graph_from(
            &[
                ("a", NodeType::Drug),
                ("b", NodeType::Drug),
                ("c", NodeType::Drug),
                ("d", NodeType::Drug),
            ],
            &[(0, 1), (2, 3)],
        );
        assert_eq!(
            g.pair_distance_class(0, 2).unwrap(),
            DistanceClass::Unreachable
        );
    }

    #[test]
    fn pair_distance_matches_floyd_warshall() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10 {
            let n = 15 + trial * 5;
            let g = random_graph(&mut rng, n, 0.05);
            let d = crate::oracles::floyd_warshall(&g);
            for i in 0..n as u32 {
                for j in 0..n as u32 {
                    if i == j {
                        continue;
                    }
                    let expected = if d[i as usize][j as usize] >= crate::oracles::FW_INF {
                        DistanceClass::Unreachable
                    } else {
                        DistanceClass::from_distance(d[i as usize][j as usize])
                    };
                    assert_eq!(
                        g.pair_distance_class(i, j).unwrap(),
                        expected,
                        "trial {trial} pair ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn subnet_shortest_path() {
        // P1-P2-P3 PPI chain plus a drug bridging P1 and P3
        let g = graph_from(
            &[
                ("p1", NodeType::Protein),
                ("p2", NodeType::Protein),
                ("p3", NodeType::Protein),
                ("d", NodeType::Drug),
            ],
            &[(0, 1), (1, 2), (0, 3), (2, 3)],
        );
        let ppi = [EdgeType::ProteinProtein];
        assert_eq!(g.shortest_path_len_in_subnet(&ppi, 0, 0).unwrap(), Some(0));
        assert_eq!(g.shortest_path_len_in_subnet(&ppi, 0, 2).unwrap(), Some(2));
        // full graph would cut through the drug in 2 hops as well, but a
        // PPI-only filter must not see drug edges
        let g2 = graph_from(
            &[
                ("p1", NodeType::Protein),
                ("p3", NodeType::Protein),
                ("d", NodeType::Drug),
            ],
            &[(0, 2), (1, 2)],
        );
        assert_eq!(g2.shortest_path_len_in_subnet(&ppi, 0, 1).unwrap(), None);
        assert_eq!(
            g2.shortest_path_len_in_subnet(&EdgeType::ALL, 0, 1).unwrap(),
            Some(2)
        );
    }

    #[test]
    fn metapath_catalogue_is_valid() {
        let cat = MetaPathTemplate::catalogue();
        assert_eq!(cat.len(), 16);
        for (i, t) in cat.iter().enumerate() {
            assert_eq!(t.template_id as usize, i);
            t.edge_types(); // panics if a hop has no relation
        }
    }

    #[test]
    fn metapath_walk_unique_chain() {
        // d1-d2-p1-p2 is the only drug-drug-protein-protein walk
        let g = graph_from(
            &[
                ("d1", NodeType::Drug),
                ("d2", NodeType::Drug),
                ("p1", NodeType::Protein),
                ("p2", NodeType::Protein),
            ],
            &[(0, 1), (1, 2), (2, 3)],
        );
        let t = MetaPathTemplate::new(
            1,
            [NodeType::Drug, NodeType::Drug, NodeType::Protein, NodeType::Protein],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            if let Some(path) = g.walk_metapath(&t, &mut rng).unwrap() {
                seen.insert(path);
            }
        }
        assert_eq!(seen.len(), 1);
        assert!(seen.contains(&[0, 1, 2, 3]));
    }

    #[test]
    fn metapath_unsatisfiable_start_type() {
        let g = triple_path_graph(); // drugs only
        let t = MetaPathTemplate::new(
            14,
            [NodeType::Protein, NodeType::Drug, NodeType::Disease, NodeType::Drug],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            g.walk_metapath(&t, &mut rng),
            Err(GraphError::UnsatisfiableTemplate { .. })
        ));
    }

    #[test]
    fn metapath_walks_respect_types_and_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = random_graph(&mut rng, 80, 0.08);
        let mut checked = 0usize;
        for t in MetaPathTemplate::catalogue() {
            if g.nodes_of_type(t.sequence[0]).is_empty() {
                continue;
            }
            for _ in 0..700 {
                if let Some(path) = g.walk_metapath(&t, &mut rng).unwrap() {
                    for (hop, w) in path.windows(2).enumerate() {
                        assert!(g.has_edge(w[0], w[1]));
                        assert_eq!(g.node_type(path[hop]).unwrap(), t.sequence[hop]);
                    }
                    assert_eq!(g.node_type(path[3]).unwrap(), t.sequence[3]);
                    checked += 1;
                }
            }
        }
        assert!(checked >= 10_000, "only {checked} walks checked");
    }

    #[test]
    fn adjacency_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = random_graph(&mut rng, 60, 0.1);
        for v in 0..g.node_count() as u32 {
            for &w in g.neighbors(v) {
                assert!(g.neighbors(w).contains(&v));
            }
        }
        let per_etype: usize = g.edge_counts().iter().sum();
        assert_eq!(per_etype, g.edge_count());
    }

    #[test]
    fn serialization_round_trip_is_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let g = random_graph(&mut rng, 50, 0.1);
        let mut bytes = Vec::new();
        g.write_to(&mut bytes).unwrap();
        let g2 = HetGraph::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(g.node_counts(), g2.node_counts());
        assert_eq!(g.edge_counts(), g2.edge_counts());
        assert_eq!(g.edges(), g2.edges());
        let mut bytes2 = Vec::new();
        g2.write_to(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }
}
