//! Original-feature-space similarity: Tanimoto over drug fingerprints,
//! normalized Smith-Waterman over protein sequences, ModuleSim over disease
//! gene modules, assembled into a per-type [`SimTable`] that the attribute
//! pretext tasks sample from.

mod modulesim;
mod sw;

pub use modulesim::{modulesim, modulesim_cached, DiseaseModule, PpiDistanceCache};
pub use sw::{
    normalized_sw, residue_code, smith_waterman, SubstMatrix, SwScoring, AMINO_ALPHABET,
};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{GraphError, HetGraph, NodeType};
use crate::util::fmt_f64_exact;

/// MACCS-style key count, the default fingerprint width.
pub const DEFAULT_FINGERPRINT_WIDTH: usize = 166;

#[derive(Error, Debug)]
pub enum SimError {
    #[error("fingerprint widths differ: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("bit {bit} out of range for width {width}")]
    BitOutOfRange { bit: usize, width: usize },
    #[error("residue {ch:?} at position {pos} is outside the amino-acid alphabet")]
    InvalidResidue { ch: char, pos: usize },
    #[error("empty protein sequence")]
    EmptySequence,
    #[error("sequence has non-positive self-alignment score: {0:?}")]
    DegenerateSequence(String),
    #[error("disease module is empty")]
    EmptyModule,
    #[error("module gene {index} is a {ntype} node, not a protein")]
    GeneNotProtein { index: u32, ntype: NodeType },
    #[error("similarity pair ({0}, {0}) is a self-pair")]
    SelfPair(u32),
    #[error("similarity value for ({i}, {j}) is not finite")]
    NonFiniteSim { i: u32, j: u32 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Fingerprints
// ---------------------------------------------------------------------------

/// Fixed-width bitset, e.g. MACCS keys ingested from a preprocessing
/// pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    width: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn zeros(width: usize) -> Self {
        Fingerprint {
            width,
            words: vec![0u64; width.div_ceil(64)],
        }
    }

    pub fn from_bits(width: usize, bits: impl IntoIterator<Item = usize>) -> Result<Self, SimError> {
        let mut fp = Fingerprint::zeros(width);
        for bit in bits {
            fp.set(bit)?;
        }
        Ok(fp)
    }

    pub fn set(&mut self, bit: usize) -> Result<(), SimError> {
        if bit >= self.width {
            return Err(SimError::BitOutOfRange {
                bit,
                width: self.width,
            });
        }
        self.words[bit / 64] |= 1u64 << (bit % 64);
        Ok(())
    }

    pub fn get(&self, bit: usize) -> bool {
        bit < self.width && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Hex encoding of the underlying bytes; bit k lives in byte k/8 at
    /// position k%8.
    pub fn to_hex(&self) -> String {
        let nbytes = self.width.div_ceil(8);
        let mut bytes = vec![0u8; nbytes];
        for bit in 0..self.width {
            if self.get(bit) {
                bytes[bit / 8] |= 1u8 << (bit % 8);
            }
        }
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str, width: usize) -> Result<Self, SimError> {
        let bytes = hex::decode(s.trim()).map_err(|e| SimError::Parse {
            line: 0,
            msg: format!("bad hex fingerprint: {e}"),
        })?;
        if bytes.len() != width.div_ceil(8) {
            return Err(SimError::Parse {
                line: 0,
                msg: format!(
                    "hex fingerprint has {} bytes, width {width} needs {}",
                    bytes.len(),
                    width.div_ceil(8)
                ),
            });
        }
        let mut fp = Fingerprint::zeros(width);
        for (i, byte) in bytes.iter().enumerate() {
            for b in 0..8 {
                if byte >> b & 1 == 1 {
                    let bit = i * 8 + b;
                    if bit >= width {
                        return Err(SimError::Parse {
                            line: 0,
                            msg: format!("bit {bit} set beyond width {width}"),
                        });
                    }
                    fp.words[bit / 64] |= 1u64 << (bit % 64);
                }
            }
        }
        Ok(fp)
    }
}

/// Tanimoto coefficient |a AND b| / |a OR b|. Two empty fingerprints score
/// 0: absent features are no evidence of similarity.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, SimError> {
    if a.width != b.width {
        return Err(SimError::DimensionMismatch {
            a: a.width,
            b: b.width,
        });
    }
    let mut inter = 0u32;
    let mut union = 0u32;
    for (wa, wb) in a.words.iter().zip(&b.words) {
        inter += (wa & wb).count_ones();
        union += (wa | wb).count_ones();
    }
    if union == 0 {
        Ok(0.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Deterministic fallback fingerprint hashed from a SMILES-like string.
/// Not a chemical fingerprint; intended for synthetic runs and tagged as
/// hashed in the table provenance.
pub fn hashed_fingerprint(text: &str, width: usize) -> Fingerprint {
    let mut fp = Fingerprint::zeros(width.max(1));
    let bytes = text.as_bytes();
    for n in 1..=3usize {
        if bytes.len() < n {
            break;
        }
        for gram in bytes.windows(n) {
            let mut h = 0xcbf29ce484222325u64;
            for &b in gram {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            let bit = (h % fp.width as u64) as usize;
            fp.words[bit / 64] |= 1u64 << (bit % 64);
        }
    }
    fp
}

// ---------------------------------------------------------------------------
// Protein sequences
// ---------------------------------------------------------------------------

/// Uppercase-normalized amino-acid string over the 20-letter alphabet
/// plus X.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProteinSequence {
    residues: String,
    codes: Vec<u8>,
}

impl ProteinSequence {
    pub fn new(s: &str) -> Result<Self, SimError> {
        let residues = s.trim().to_ascii_uppercase();
        if residues.is_empty() {
            return Err(SimError::EmptySequence);
        }
        let mut codes = Vec::with_capacity(residues.len());
        for (pos, ch) in residues.bytes().enumerate() {
            match residue_code(ch) {
                Some(c) => codes.push(c),
                None => {
                    return Err(SimError::InvalidResidue {
                        ch: ch as char,
                        pos,
                    })
                }
            }
        }
        Ok(ProteinSequence { residues, codes })
    }

    pub fn as_str(&self) -> &str {
        &self.residues
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Similarity table
// ---------------------------------------------------------------------------

/// Which kernel produced a similarity value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Tanimoto,
    /// Tanimoto over hashed fallback fingerprints; flags non-chemical input.
    TanimotoHashed,
    SmithWaterman,
    ModuleSim,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Tanimoto => "tanimoto",
            Provenance::TanimotoHashed => "tanimoto_hashed",
            Provenance::SmithWaterman => "smith_waterman",
            Provenance::ModuleSim => "module_sim",
        }
    }

    pub fn parse(s: &str) -> Option<Provenance> {
        match s.trim() {
            "tanimoto" => Some(Provenance::Tanimoto),
            "tanimoto_hashed" => Some(Provenance::TanimotoHashed),
            "smith_waterman" => Some(Provenance::SmithWaterman),
            "module_sim" => Some(Provenance::ModuleSim),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEntry {
    pub ntype: NodeType,
    pub sim: f64,
    pub provenance: Provenance,
}

/// Sparse symmetric per-type similarity scores, keyed by canonical
/// `(min, max)` node-index pairs. Values are clamped to [0, 1] on insert.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTable {
    entries: BTreeMap<(u32, u32), SimEntry>,
}

impl SimTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        ntype: NodeType,
        i: u32,
        j: u32,
        sim: f64,
        provenance: Provenance,
    ) -> Result<(), SimError> {
        if i == j {
            return Err(SimError::SelfPair(i));
        }
        if !sim.is_finite() {
            return Err(SimError::NonFiniteSim { i, j });
        }
        let key = (i.min(j), i.max(j));
        self.entries.insert(
            key,
            SimEntry {
                ntype,
                sim: sim.clamp(0.0, 1.0),
                provenance,
            },
        );
        Ok(())
    }

    pub fn get(&self, i: u32, j: u32) -> Option<f64> {
        self.entries.get(&(i.min(j), i.max(j))).map(|e| e.sim)
    }

    pub fn entry(&self, i: u32, j: u32) -> Option<&SimEntry> {
        self.entries.get(&(i.min(j), i.max(j)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in canonical key order.
    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), &SimEntry)> + '_ {
        self.entries.iter().map(|(&k, e)| (k, e))
    }

    /// Scored partners per node, each list sorted by partner index.
    /// Deterministic regardless of insertion order.
    pub fn partner_lists(&self) -> BTreeMap<u32, Vec<(u32, f64)>> {
        let mut map: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
        for (&(i, j), e) in &self.entries {
            map.entry(i).or_default().push((j, e.sim));
            map.entry(j).or_default().push((i, e.sim));
        }
        map
    }

    /// TSV rows `ntype  id_i  id_j  sim  provenance`, floats with 17
    /// significant digits so the file round-trips bit-exactly.
    pub fn write_tsv<W: Write>(&self, graph: &HetGraph, w: &mut W) -> Result<(), SimError> {
        for (&(i, j), e) in &self.entries {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                e.ntype.as_str(),
                graph.node(i)?.external_id,
                graph.node(j)?.external_id,
                fmt_f64_exact(e.sim),
                e.provenance.as_str()
            )?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R, graph: &HetGraph) -> Result<SimTable, SimError> {
        let mut table = SimTable::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let trimmed = line.trim_end();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = trimmed.split('\t').collect();
            if cols.len() != 5 {
                return Err(SimError::Parse {
                    line: lineno,
                    msg: format!("expected 5 columns, got {}", cols.len()),
                });
            }
            let ntype = NodeType::parse(cols[0]).ok_or_else(|| SimError::Parse {
                line: lineno,
                msg: format!("unknown node type {:?}", cols[0]),
            })?;
            let resolve = |id: &str| {
                graph.node_by_id(ntype, id).ok_or(GraphError::UnknownNode {
                    ntype,
                    id: id.to_string(),
                })
            };
            let i = resolve(cols[1])?;
            let j = resolve(cols[2])?;
            let sim: f64 = cols[3].parse().map_err(|e| SimError::Parse {
                line: lineno,
                msg: format!("bad similarity value: {e}"),
            })?;
            let provenance = Provenance::parse(cols[4]).ok_or_else(|| SimError::Parse {
                line: lineno,
                msg: format!("unknown provenance {:?}", cols[4]),
            })?;
            table.insert(ntype, i, j, sim, provenance)?;
        }
        Ok(table)
    }
}

// ---------------------------------------------------------------------------
// Feature files
// ---------------------------------------------------------------------------

/// Per-node raw features joined against the graph by external id.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    pub fingerprints: BTreeMap<u32, Fingerprint>,
    /// True when the fingerprints came from the hashed fallback rather than
    /// a chemical pipeline.
    pub fingerprints_hashed: bool,
    pub sequences: BTreeMap<u32, ProteinSequence>,
    pub modules: BTreeMap<u32, DiseaseModule>,
}

impl FeatureSet {
    /// Builds fallback fingerprints by hashing SMILES-like strings.
    pub fn hash_fingerprints(&mut self, smiles: &BTreeMap<u32, String>, width: usize) {
        self.fingerprints = smiles
            .iter()
            .map(|(&node, text)| (node, hashed_fingerprint(text, width)))
            .collect();
        self.fingerprints_hashed = true;
    }
}

/// Parses `node_id  hex_bits  width` lines. Ids not present in the graph
/// are counted and skipped.
pub fn load_fingerprints<R: BufRead>(
    r: R,
    graph: &HetGraph,
) -> Result<(BTreeMap<u32, Fingerprint>, usize), SimError> {
    let mut map = BTreeMap::new();
    let mut ignored = 0usize;
    let mut expect_width: Option<usize> = None;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim_end();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 3 {
            return Err(SimError::Parse {
                line: lineno,
                msg: format!("expected 3 columns, got {}", cols.len()),
            });
        }
        let width: usize = cols[2].parse().map_err(|e| SimError::Parse {
            line: lineno,
            msg: format!("bad width: {e}"),
        })?;
        if let Some(expected) = expect_width {
            if width != expected {
                return Err(SimError::DimensionMismatch {
                    a: expected,
                    b: width,
                });
            }
        } else {
            expect_width = Some(width);
        }
        let fp = Fingerprint::from_hex(cols[1], width).map_err(|e| SimError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        match graph.node_by_id(NodeType::Drug, cols[0]) {
            Some(idx) => {
                map.insert(idx, fp);
            }
            None => ignored += 1,
        }
    }
    Ok((map, ignored))
}

/// Parses FASTA with `>node_id` headers; ids unknown to the graph are
/// counted and skipped.
pub fn load_fasta<R: BufRead>(
    r: R,
    graph: &HetGraph,
) -> Result<(BTreeMap<u32, ProteinSequence>, usize), SimError> {
    let mut map = BTreeMap::new();
    let mut ignored = 0usize;
    let mut current: Option<(Option<u32>, String, usize)> = None;
    let flush = |cur: &mut Option<(Option<u32>, String, usize)>,
                     map: &mut BTreeMap<u32, ProteinSequence>,
                     ignored: &mut usize|
     -> Result<(), SimError> {
        if let Some((idx, seq, lineno)) = cur.take() {
            match idx {
                Some(idx) => {
                    let parsed = ProteinSequence::new(&seq).map_err(|e| SimError::Parse {
                        line: lineno,
                        msg: e.to_string(),
                    })?;
                    map.insert(idx, parsed);
                }
                None => *ignored += 1,
            }
        }
        Ok(())
    };
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('>') {
            flush(&mut current, &mut map, &mut ignored)?;
            let id = header.split_whitespace().next().unwrap_or("");
            current = Some((graph.node_by_id(NodeType::Protein, id), String::new(), lineno));
        } else {
            match current.as_mut() {
                Some((_, seq, _)) => seq.push_str(trimmed),
                None => {
                    return Err(SimError::Parse {
                        line: lineno,
                        msg: "sequence data before first FASTA header".to_string(),
                    })
                }
            }
        }
    }
    flush(&mut current, &mut map, &mut ignored)?;
    Ok((map, ignored))
}

/// Parses `disease_id  p1,p2,...` module lines. Unknown disease ids skip
/// the row; unknown gene ids are dropped from the module.
pub fn load_modules<R: BufRead>(
    r: R,
    graph: &HetGraph,
) -> Result<(BTreeMap<u32, DiseaseModule>, usize), SimError> {
    let mut map = BTreeMap::new();
    let mut ignored = 0usize;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim_end();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 2 {
            return Err(SimError::Parse {
                line: lineno,
                msg: format!("expected 2 columns, got {}", cols.len()),
            });
        }
        let Some(disease) = graph.node_by_id(NodeType::Disease, cols[0]) else {
            ignored += 1;
            continue;
        };
        let mut genes = Vec::new();
        for gene_id in cols[1].split(',') {
            let gene_id = gene_id.trim();
            if gene_id.is_empty() {
                continue;
            }
            match graph.node_by_id(NodeType::Protein, gene_id) {
                Some(idx) => genes.push(idx),
                None => ignored += 1,
            }
        }
        if genes.is_empty() {
            ignored += 1;
            continue;
        }
        map.insert(disease, DiseaseModule::new(genes)?);
    }
    Ok((map, ignored))
}

/// Parses `node_id  smiles` lines for the hashed-fingerprint fallback.
pub fn load_smiles<R: BufRead>(
    r: R,
    graph: &HetGraph,
) -> Result<(BTreeMap<u32, String>, usize), SimError> {
    let mut map = BTreeMap::new();
    let mut ignored = 0usize;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim_end();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 2 {
            return Err(SimError::Parse {
                line: lineno,
                msg: format!("expected 2 columns, got {}", cols.len()),
            });
        }
        match graph.node_by_id(NodeType::Drug, cols[0]) {
            Some(idx) => {
                map.insert(idx, cols[1].to_string());
            }
            None => ignored += 1,
        }
    }
    Ok((map, ignored))
}

// ---------------------------------------------------------------------------
// Table construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimTableConfig {
    /// Node types with at most this many nodes get all pairs.
    pub all_pairs_threshold: usize,
    /// Above the threshold, sample this many pairs per node instead.
    pub sampled_pairs_per_node: usize,
    pub scoring: SwScoring,
    pub seed: u64,
}

impl Default for SimTableConfig {
    fn default() -> Self {
        SimTableConfig {
            all_pairs_threshold: 2000,
            sampled_pairs_per_node: 10,
            scoring: SwScoring::default(),
            seed: 0,
        }
    }
}

/// Coverage accounting for one table build, indexed by node type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimBuildReport {
    pub pairs_computed: [usize; 3],
    /// Pairs skipped because an endpoint had no feature (or a degenerate
    /// sequence).
    pub pairs_skipped: [usize; 3],
}

enum PairOutcome {
    Value(f64, Provenance),
    Skip,
}

/// Computes the similarity table for every node type with features. Pair
/// kernels fan out across threads; the table itself is assembled by keyed
/// insertion in canonical order, so the result is deterministic.
pub fn build_sim_table(
    features: &FeatureSet,
    graph: &HetGraph,
    cfg: &SimTableConfig,
) -> Result<(SimTable, SimBuildReport), SimError> {
    let mut table = SimTable::new();
    let mut report = SimBuildReport::default();

    // warm PPI distances once over all module genes; lookups are then pure
    let mut ppi = PpiDistanceCache::new(graph);
    for module in features.modules.values() {
        module.validate(graph)?;
        for g in module.genes() {
            ppi.warm(g);
        }
    }

    let tan_prov = if features.fingerprints_hashed {
        Provenance::TanimotoHashed
    } else {
        Provenance::Tanimoto
    };

    for ntype in NodeType::ALL {
        let pairs = candidate_pairs(graph, ntype, cfg);
        let outcomes: Vec<((u32, u32), PairOutcome)> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let outcome = match ntype {
                    NodeType::Drug => {
                        match (features.fingerprints.get(&i), features.fingerprints.get(&j)) {
                            (Some(a), Some(b)) => match tanimoto(a, b) {
                                Ok(v) => PairOutcome::Value(v, tan_prov),
                                Err(_) => PairOutcome::Skip,
                            },
                            _ => PairOutcome::Skip,
                        }
                    }
                    NodeType::Protein => {
                        match (features.sequences.get(&i), features.sequences.get(&j)) {
                            (Some(a), Some(b)) => match normalized_sw(a, b, &cfg.scoring) {
                                Ok(v) => PairOutcome::Value(v, Provenance::SmithWaterman),
                                Err(_) => PairOutcome::Skip,
                            },
                            _ => PairOutcome::Skip,
                        }
                    }
                    NodeType::Disease => {
                        match (features.modules.get(&i), features.modules.get(&j)) {
                            (Some(a), Some(b)) => {
                                let v = modulesim::modulesim_warm(&ppi, a, b);
                                PairOutcome::Value(v, Provenance::ModuleSim)
                            }
                            _ => PairOutcome::Skip,
                        }
                    }
                };
                ((i, j), outcome)
            })
            .collect();
        for ((i, j), outcome) in outcomes {
            match outcome {
                PairOutcome::Value(v, prov) => {
                    table.insert(ntype, i, j, v, prov)?;
                    report.pairs_computed[ntype.index()] += 1;
                }
                PairOutcome::Skip => report.pairs_skipped[ntype.index()] += 1,
            }
        }
    }
    Ok((table, report))
}

fn candidate_pairs(graph: &HetGraph, ntype: NodeType, cfg: &SimTableConfig) -> Vec<(u32, u32)> {
    let nodes = graph.nodes_of_type(ntype);
    let n = nodes.len();
    if n < 2 {
        return Vec::new();
    }
    if n <= cfg.all_pairs_threshold {
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for a in 0..n {
            for b in (a + 1)..n {
                pairs.push((nodes[a], nodes[b]));
            }
        }
        return pairs;
    }
    let budget = (cfg.sampled_pairs_per_node * n).min(n * (n - 1) / 2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x51AB1E << ntype.index()));
    let mut seen = std::collections::HashSet::with_capacity(budget);
    let mut pairs = Vec::with_capacity(budget);
    while pairs.len() < budget {
        let a = nodes[rng.gen_range(0..n)];
        let b = nodes[rng.gen_range(0..n)];
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            pairs.push(key);
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tanimoto_examples() {
        let a = Fingerprint::from_bits(166, [1, 2, 3]).unwrap();
        let b = Fingerprint::from_bits(166, [2, 3, 4]).unwrap();
        let c = Fingerprint::from_bits(166, [10, 11]).unwrap();
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn tanimoto_empty_pair_is_zero() {
        let a = Fingerprint::zeros(64);
        let b = Fingerprint::zeros(64);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn tanimoto_width_mismatch() {
        let a = Fingerprint::zeros(64);
        let b = Fingerprint::zeros(128);
        assert!(matches!(
            tanimoto(&a, &b),
            Err(SimError::DimensionMismatch { a: 64, b: 128 })
        ));
    }

    #[test]
    fn tanimoto_matches_per_bit_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for _ in 0..100 {
            let a = random_fp(&mut rng, 166);
            let b = random_fp(&mut rng, 166);
            let got = tanimoto(&a, &b).unwrap();
            let want = crate::oracles::tanimoto_bitwise(&a, &b);
            assert_eq!(got, want);
            assert_eq!(tanimoto(&b, &a).unwrap(), got);
        }
    }

    #[test]
    fn fingerprint_hex_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for width in [8, 64, 166, 200] {
            let fp = random_fp(&mut rng, width);
            let back = Fingerprint::from_hex(&fp.to_hex(), width).unwrap();
            assert_eq!(fp, back);
        }
    }

    #[test]
    fn hashed_fingerprint_is_deterministic() {
        let a = hashed_fingerprint("CC(=O)Oc1ccccc1C(=O)O", 166);
        let b = hashed_fingerprint("CC(=O)Oc1ccccc1C(=O)O", 166);
        assert_eq!(a, b);
        assert!(a.count_ones() > 0);
        assert_ne!(a, hashed_fingerprint("CCO", 166));
    }

    fn toy_graph() -> HetGraph {
        let mut b = GraphBuilder::new();
        let d0 = b.add_node("d0", NodeType::Drug);
        let d1 = b.add_node("d1", NodeType::Drug);
        let d2 = b.add_node("d2", NodeType::Drug);
        let p0 = b.add_node("p0", NodeType::Protein);
        let p1 = b.add_node("p1", NodeType::Protein);
        let s0 = b.add_node("s0", NodeType::Disease);
        let s1 = b.add_node("s1", NodeType::Disease);
        b.add_edge(d0, d1).unwrap();
        b.add_edge(d1, d2).unwrap();
        b.add_edge(p0, p1).unwrap();
        b.add_edge(d0, p0).unwrap();
        b.add_edge(s0, p0).unwrap();
        b.add_edge(s1, p1).unwrap();
        b.finish()
    }

    #[test]
    fn build_table_covers_types_and_is_symmetric() {
        let g = toy_graph();
        let mut features = FeatureSet::default();
        features
            .fingerprints
            .insert(0, Fingerprint::from_bits(166, [1, 2]).unwrap());
        features
            .fingerprints
            .insert(1, Fingerprint::from_bits(166, [2, 3]).unwrap());
        features
            .fingerprints
            .insert(2, Fingerprint::from_bits(166, [5]).unwrap());
        features
            .sequences
            .insert(3, ProteinSequence::new("HEAGAWGHEE").unwrap());
        features
            .sequences
            .insert(4, ProteinSequence::new("PAWHEAE").unwrap());
        features
            .modules
            .insert(5, DiseaseModule::new([3]).unwrap());
        features
            .modules
            .insert(6, DiseaseModule::new([4]).unwrap());

        let (table, report) = build_sim_table(&features, &g, &SimTableConfig::default()).unwrap();
        // 3 drug pairs + 1 protein pair + 1 disease pair
        assert_eq!(table.len(), 5);
        assert_eq!(report.pairs_computed, [3, 1, 1]);
        assert_eq!(report.pairs_skipped, [0, 0, 0]);
        // symmetric lookup
        assert_eq!(table.get(0, 1), table.get(1, 0));
        // cross-type query is absent
        assert_eq!(table.get(0, 3), None);
        for (_, e) in table.iter() {
            assert!((0.0..=1.0).contains(&e.sim));
        }
        assert_eq!(table.entry(0, 1).unwrap().provenance, Provenance::Tanimoto);
        assert_eq!(
            table.entry(3, 4).unwrap().provenance,
            Provenance::SmithWaterman
        );
        assert_eq!(table.entry(5, 6).unwrap().provenance, Provenance::ModuleSim);
    }

    #[test]
    fn build_table_skips_missing_features() {
        let g = toy_graph();
        let mut features = FeatureSet::default();
        features
            .fingerprints
            .insert(0, Fingerprint::from_bits(166, [1]).unwrap());
        features
            .fingerprints
            .insert(1, Fingerprint::from_bits(166, [2]).unwrap());
        // drug 2 has no fingerprint: pairs (0,2) and (1,2) are skipped
        let (table, report) = build_sim_table(&features, &g, &SimTableConfig::default()).unwrap();
        assert_eq!(report.pairs_computed[0], 1);
        assert_eq!(report.pairs_skipped[0], 2);
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn hashed_fingerprints_flag_provenance() {
        let g = toy_graph();
        let mut features = FeatureSet::default();
        let mut smiles = BTreeMap::new();
        smiles.insert(0, "CCO".to_string());
        smiles.insert(1, "CCN".to_string());
        features.hash_fingerprints(&smiles, 166);
        let (table, _) = build_sim_table(&features, &g, &SimTableConfig::default()).unwrap();
        assert_eq!(
            table.entry(0, 1).unwrap().provenance,
            Provenance::TanimotoHashed
        );
    }

    #[test]
    fn table_tsv_round_trip_bit_exact() {
        let g = toy_graph();
        let mut table = SimTable::new();
        table
            .insert(NodeType::Drug, 0, 1, 1.0 / 3.0, Provenance::Tanimoto)
            .unwrap();
        table
            .insert(NodeType::Protein, 4, 3, 0.123456789012345678, Provenance::SmithWaterman)
            .unwrap();
        table
            .insert(NodeType::Disease, 5, 6, (-1.0f64).exp(), Provenance::ModuleSim)
            .unwrap();
        let mut buf = Vec::new();
        table.write_tsv(&g, &mut buf).unwrap();
        let back = SimTable::read_tsv(buf.as_slice(), &g).unwrap();
        assert_eq!(table.len(), back.len());
        for ((i, j), e) in table.iter() {
            let b = back.entry(i, j).unwrap();
            assert_eq!(e.sim.to_bits(), b.sim.to_bits());
            assert_eq!(e.provenance, b.provenance);
        }
        let mut buf2 = Vec::new();
        back.write_tsv(&g, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn feature_loaders_parse_and_skip_unknown_ids() {
        let g = toy_graph();
        let fp_file = format!(
            "d0\t{}\t166\nd1\t{}\t166\nghost\t{}\t166\n",
            Fingerprint::from_bits(166, [1]).unwrap().to_hex(),
            Fingerprint::from_bits(166, [2]).unwrap().to_hex(),
            Fingerprint::from_bits(166, [3]).unwrap().to_hex(),
        );
        let (fps, ignored) = load_fingerprints(fp_file.as_bytes(), &g).unwrap();
        assert_eq!(fps.len(), 2);
        assert_eq!(ignored, 1);

        let fasta = ">p0 some description\nHEAG\nAWGHEE\n>nobody\nAAAA\n>p1\nPAWHEAE\n";
        let (seqs, ignored) = load_fasta(fasta.as_bytes(), &g).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(ignored, 1);
        assert_eq!(seqs.get(&3).unwrap().as_str(), "HEAGAWGHEE");

        let modules = "s0\tp0,p1\ns1\tp1,ghost\nmissing\tp0\n";
        let (mods, ignored) = load_modules(modules.as_bytes(), &g).unwrap();
        assert_eq!(mods.len(), 2);
        assert_eq!(ignored, 2); // ghost gene + missing disease
        assert_eq!(mods.get(&5).unwrap().len(), 2);
    }

    #[test]
    fn candidate_pairs_sampling_is_deterministic_and_bounded() {
        let mut b = GraphBuilder::new();
        for i in 0..50 {
            b.add_node(&format!("d{i}"), NodeType::Drug);
        }
        let g = b.finish();
        let cfg = SimTableConfig {
            all_pairs_threshold: 10,
            sampled_pairs_per_node: 3,
            ..SimTableConfig::default()
        };
        let p1 = candidate_pairs(&g, NodeType::Drug, &cfg);
        let p2 = candidate_pairs(&g, NodeType::Drug, &cfg);
        assert_eq!(p1, p2);
        assert_eq!(p1.len(), 150);
        let unique: std::collections::HashSet<_> = p1.iter().collect();
        assert_eq!(unique.len(), p1.len());
    }

    fn random_fp(rng: &mut ChaCha8Rng, width: usize) -> Fingerprint {
        let mut fp = Fingerprint::zeros(width);
        for bit in 0..width {
            if rng.gen_bool(0.25) {
                fp.set(bit).unwrap();
            }
        }
        fp
    }
}
