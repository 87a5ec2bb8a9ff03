//! Disease similarity from gene-module proximity in the protein-protein
//! interaction subnetwork: pairwise gene closeness sp(g, g') decays
//! exponentially with PPI shortest-path length, module-level similarity
//! averages it both ways, and the final score normalizes by the two
//! self-similarities.

use std::collections::{BTreeSet, HashMap};

use crate::graph::{EdgeType, HetGraph, NodeType};

use super::SimError;

/// The gene set of one disease; members are protein node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiseaseModule {
    genes: BTreeSet<u32>,
}

impl DiseaseModule {
    pub fn new(genes: impl IntoIterator<Item = u32>) -> Result<Self, SimError> {
        let genes: BTreeSet<u32> = genes.into_iter().collect();
        if genes.is_empty() {
            return Err(SimError::EmptyModule);
        }
        Ok(DiseaseModule { genes })
    }

    pub fn genes(&self) -> impl Iterator<Item = u32> + '_ {
        self.genes.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn validate(&self, graph: &HetGraph) -> Result<(), SimError> {
        for g in self.genes() {
            let ntype = graph.node_type(g)?;
            if ntype != NodeType::Protein {
                return Err(SimError::GeneNotProtein { index: g, ntype });
            }
        }
        Ok(())
    }
}

/// Caches one BFS (restricted to protein-protein edges) per distinct gene,
/// so module pairs only pay lookups.
pub struct PpiDistanceCache<'g> {
    graph: &'g HetGraph,
    dist: HashMap<u32, Vec<u32>>,
}

const UNREACHED: u32 = u32::MAX;

impl<'g> PpiDistanceCache<'g> {
    pub fn new(graph: &'g HetGraph) -> Self {
        PpiDistanceCache {
            graph,
            dist: HashMap::new(),
        }
    }

    pub fn graph(&self) -> &'g HetGraph {
        self.graph
    }

    /// Runs (or reuses) the BFS rooted at `gene`.
    pub fn warm(&mut self, gene: u32) {
        if self.dist.contains_key(&gene) {
            return;
        }
        let n = self.graph.node_count();
        let mut dist = vec![UNREACHED; n];
        dist[gene as usize] = 0;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(gene);
        while let Some(v) = queue.pop_front() {
            let d = dist[v as usize];
            for (slot, &w) in self.graph.neighbors(v).iter().enumerate() {
                if self.graph.neighbor_etypes(v)[slot] != EdgeType::ProteinProtein {
                    continue;
                }
                if dist[w as usize] == UNREACHED {
                    dist[w as usize] = d + 1;
                    queue.push_back(w);
                }
            }
        }
        self.dist.insert(gene, dist);
    }

    /// Gene closeness: 1 on identity, e^-d through the PPI subnet, 0 when
    /// unreachable.
    pub fn sp(&mut self, a: u32, b: u32) -> f64 {
        if a == b {
            return 1.0;
        }
        self.warm(a);
        self.sp_warm(a, b)
    }

    /// Read-only closeness lookup. `a` must have been warmed.
    pub fn sp_warm(&self, a: u32, b: u32) -> f64 {
        if a == b {
            return 1.0;
        }
        let dist = self
            .dist
            .get(&a)
            .expect("gene distances not warmed before read-only lookup");
        match dist[b as usize] {
            UNREACHED => 0.0,
            d => (-(d as f64)).exp(),
        }
    }
}

/// Cross-module similarity with an arbitrary closeness function: mean
/// closeness of each gene to the other module, summed from both sides,
/// divided by the total gene count.
fn module_sim_with(
    sp: &mut dyn FnMut(u32, u32) -> f64,
    g1: &DiseaseModule,
    g2: &DiseaseModule,
) -> f64 {
    let mean_to = |sp: &mut dyn FnMut(u32, u32) -> f64, gene: u32, module: &DiseaseModule| {
        let total: f64 = module.genes().map(|g| sp(gene, g)).sum();
        total / module.len() as f64
    };
    let from_1: f64 = g1.genes().map(|g| mean_to(sp, g, g2)).sum();
    let from_2: f64 = g2.genes().map(|g| mean_to(sp, g, g1)).sum();
    (from_1 + from_2) / (g1.len() + g2.len()) as f64
}

fn normalized(cross: f64, self_1: f64, self_2: f64) -> f64 {
    // self-similarity is at least 1/m (every gene has closeness 1 to
    // itself), so the denominator is always positive
    2.0 * cross / (self_1 + self_2)
}

/// Normalized disease similarity in [0, 1]; exactly 1 for identical
/// modules.
pub fn modulesim_cached(
    cache: &mut PpiDistanceCache,
    d1: &DiseaseModule,
    d2: &DiseaseModule,
) -> Result<f64, SimError> {
    d1.validate(cache.graph())?;
    d2.validate(cache.graph())?;
    for g in d1.genes().chain(d2.genes()) {
        cache.warm(g);
    }
    Ok(modulesim_warm(cache, d1, d2))
}

/// Same computation over an already-warmed cache; modules must have been
/// validated against the graph.
pub(crate) fn modulesim_warm(
    cache: &PpiDistanceCache,
    d1: &DiseaseModule,
    d2: &DiseaseModule,
) -> f64 {
    let mut sp = |a: u32, b: u32| cache.sp_warm(a, b);
    let cross = module_sim_with(&mut sp, d1, d2);
    let self_1 = module_sim_with(&mut sp, d1, d1);
    let self_2 = module_sim_with(&mut sp, d2, d2);
    normalized(cross, self_1, self_2)
}

pub fn modulesim(
    d1: &DiseaseModule,
    d2: &DiseaseModule,
    ppi: &HetGraph,
) -> Result<f64, SimError> {
    let mut cache = PpiDistanceCache::new(ppi);
    modulesim_cached(&mut cache, d1, d2)
}
