//! Independent reference implementations used by the verification suites
//! (unit tests, the acceptance suite, and the CLI `selftest` command).
//!
//! Everything here deliberately takes the naive route: brute-force
//! enumeration, dense all-pairs distances, cubic alignment recurrences.
//! None of it shares code with the production implementations it checks.

use std::collections::HashSet;

use crate::graph::HetGraph;
use crate::sim::{DiseaseModule, Fingerprint, ProteinSequence, SwScoring};

/// Clustering coefficient by O(deg^2) neighbor-pair enumeration, scanning
/// the full edge list for each candidate link.
pub fn clustering_brute(g: &HetGraph, v: u32) -> f64 {
    let neigh = g.neighbors(v);
    let deg = neigh.len();
    if deg < 2 {
        return 0.0;
    }
    let edge_set: HashSet<(u32, u32)> = g.edges().iter().map(|e| (e.u, e.v)).collect();
    let mut links = 0usize;
    for (i, &a) in neigh.iter().enumerate() {
        for &b in &neigh[i + 1..] {
            if edge_set.contains(&(a.min(b), a.max(b))) {
                links += 1;
            }
        }
    }
    2.0 * links as f64 / (deg as f64 * (deg - 1) as f64)
}

/// Marker for unreachable pairs in [`floyd_warshall`].
pub const FW_INF: usize = usize::MAX / 4;

/// Dense all-pairs shortest paths, ignoring node and edge types.
pub fn floyd_warshall(g: &HetGraph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let mut d = vec![vec![FW_INF; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0;
    }
    for e in g.edges() {
        d[e.u as usize][e.v as usize] = 1;
        d[e.v as usize][e.u as usize] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == FW_INF {
                continue;
            }
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// All-pairs shortest paths restricted to protein-protein edges.
pub fn floyd_warshall_ppi(g: &HetGraph) -> Vec<Vec<usize>> {
    use crate::graph::EdgeType;
    let n = g.node_count();
    let mut d = vec![vec![FW_INF; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0;
    }
    for e in g.edges() {
        if e.etype == EdgeType::ProteinProtein {
            d[e.u as usize][e.v as usize] = 1;
            d[e.v as usize][e.u as usize] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == FW_INF {
                continue;
            }
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Local alignment by the general-gap recurrence (Waterman-Smith-Beyer):
/// every gap length is maximized over explicitly, O(n*m*(n+m)). Shares no
/// recurrence structure with the three-matrix implementation it checks.
pub fn sw_general_gap(a: &ProteinSequence, b: &ProteinSequence, scoring: &SwScoring) -> i32 {
    let a = a.codes();
    let b = b.codes();
    let gap = |k: usize| scoring.gap_open + (k as i32 - 1) * scoring.gap_extend;
    let mut h = vec![vec![0i32; b.len() + 1]; a.len() + 1];
    let mut best = 0;
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let mut cell = 0;
            cell = cell.max(h[i - 1][j - 1] + scoring.matrix.score(a[i - 1], b[j - 1]));
            for k in 1..=j {
                cell = cell.max(h[i][j - k] - gap(k));
            }
            for k in 1..=i {
                cell = cell.max(h[i - k][j] - gap(k));
            }
            h[i][j] = cell;
            best = best.max(cell);
        }
    }
    best
}

/// Fully exhaustive local alignment for tiny sequences: recursively
/// enumerates every gapped alignment of every substring pair. Exponential;
/// keep lengths at 5 or below.
pub fn sw_enumerate(a: &ProteinSequence, b: &ProteinSequence, scoring: &SwScoring) -> i32 {
    fn rec(a: &[u8], b: &[u8], scoring: &SwScoring) -> i32 {
        // best score aligning all of `a` against all of `b`
        if a.is_empty() && b.is_empty() {
            return 0;
        }
        let mut best = i32::MIN / 4;
        if !a.is_empty() && !b.is_empty() {
            best = best.max(
                scoring.matrix.score(a[0], b[0]) + rec(&a[1..], &b[1..], scoring),
            );
        }
        let gap = |k: usize| scoring.gap_open + (k as i32 - 1) * scoring.gap_extend;
        for k in 1..=a.len() {
            best = best.max(rec(&a[k..], b, scoring) - gap(k));
        }
        for k in 1..=b.len() {
            best = best.max(rec(a, &b[k..], scoring) - gap(k));
        }
        best
    }
    let a = a.codes();
    let b = b.codes();
    let mut best = 0;
    for i0 in 0..=a.len() {
        for i1 in i0..=a.len() {
            for j0 in 0..=b.len() {
                for j1 in j0..=b.len() {
                    best = best.max(rec(&a[i0..i1], &b[j0..j1], scoring));
                }
            }
        }
    }
    best
}

/// Tanimoto by per-bit counting, no word-level tricks.
pub fn tanimoto_bitwise(a: &Fingerprint, b: &Fingerprint) -> f64 {
    assert_eq!(a.width(), b.width());
    let mut inter = 0usize;
    let mut union = 0usize;
    for bit in 0..a.width() {
        let (x, y) = (a.get(bit), b.get(bit));
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Disease similarity evaluated directly from the defining formulas with
/// Floyd-Warshall distances over the PPI subnetwork.
pub fn modulesim_direct(d1: &DiseaseModule, d2: &DiseaseModule, g: &HetGraph) -> f64 {
    let dist = floyd_warshall_ppi(g);
    let sp = |x: u32, y: u32| -> f64 {
        if x == y {
            1.0
        } else if dist[x as usize][y as usize] >= FW_INF {
            0.0
        } else {
            (-(dist[x as usize][y as usize] as f64)).exp()
        }
    };
    let sim = |ga: &DiseaseModule, gb: &DiseaseModule| -> f64 {
        let sum_a: f64 = ga
            .genes()
            .map(|x| gb.genes().map(|y| sp(x, y)).sum::<f64>() / gb.len() as f64)
            .sum();
        let sum_b: f64 = gb
            .genes()
            .map(|y| ga.genes().map(|x| sp(y, x)).sum::<f64>() / ga.len() as f64)
            .sum();
        (sum_a + sum_b) / (ga.len() + gb.len()) as f64
    };
    2.0 * sim(d1, d2) / (sim(d1, d1) + sim(d2, d2))
}

/// AUROC as the fraction of concordant positive/negative pairs, ties
/// counting half. O(P*N).
pub fn auroc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let mut concordant = 0.0f64;
    let mut total = 0.0f64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            total += 1.0;
            if scores[i] > scores[j] {
                concordant += 1.0;
            } else if scores[i] == scores[j] {
                concordant += 0.5;
            }
        }
    }
    concordant / total
}

/// Average precision by naive per-threshold rescanning: for every distinct
/// score threshold, precision and recall are recounted from scratch.
pub fn aupr_threshold_scan(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let mut tp = 0.0f64;
        let mut fp = 0.0f64;
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= t {
                if l {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / positives;
        let precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Central finite-difference gradient of a scalar function of a flat
/// parameter vector.
pub fn finite_difference(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    epsilon: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut work = x.to_vec();
    for i in 0..x.len() {
        let orig = work[i];
        work[i] = orig + epsilon;
        let up = f(&work);
        work[i] = orig - epsilon;
        let down = f(&work);
        work[i] = orig;
        grad[i] = (up - down) / (2.0 * epsilon);
    }
    grad
}

/// Relative-error check between an analytic and a numeric gradient.
/// Returns the worst relative error.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let denom = a.abs().max(n.abs()).max(1.0);
            (a - n).abs() / denom
        })
        .fold(0.0, f64::max)
}
