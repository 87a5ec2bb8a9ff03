//! Graph-attention encoder: per-head attention over each node's neighbors
//! (self-loop included), concatenated heads on hidden layers, averaged
//! heads on the final layer, ELU between layers.

use std::rc::Rc;

use rand::Rng;

use crate::graph::HetGraph;

use super::tape::{Mat, NnError, Tape, Var};
use super::glorot;

/// Attention adjacency in flattened segment form. Slot order within a
/// node's segment: sorted neighbors first, then the self-loop.
#[derive(Debug, Clone)]
pub struct AttnGraph {
    pub n: usize,
    /// Source node of each slot.
    pub src: Rc<Vec<usize>>,
    /// Destination node of each slot (the segment it belongs to).
    pub dst: Rc<Vec<usize>>,
    /// Per-destination segment offsets, length n + 1.
    pub offsets: Rc<Vec<usize>>,
}

impl AttnGraph {
    pub fn new(g: &HetGraph) -> Self {
        let n = g.node_count();
        let mut src = Vec::with_capacity(2 * g.edge_count() + n);
        let mut dst = Vec::with_capacity(2 * g.edge_count() + n);
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n as u32 {
            for &j in g.neighbors(i) {
                src.push(j as usize);
                dst.push(i as usize);
            }
            src.push(i as usize);
            dst.push(i as usize);
            offsets.push(src.len());
        }
        AttnGraph {
            n,
            src: Rc::new(src),
            dst: Rc::new(dst),
            offsets: Rc::new(offsets),
        }
    }
}

/// Node featurization for the first layer. `Identity` treats the first
/// layer's weights as a learned per-node embedding table, avoiding the
/// one-hot matmul.
#[derive(Debug, Clone)]
pub enum NodeFeatures {
    Identity,
    Dense(Mat),
}

impl NodeFeatures {
    pub fn dim(&self, n: usize) -> usize {
        match self {
            NodeFeatures::Identity => n,
            NodeFeatures::Dense(x) => x.ncols(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatConfig {
    pub in_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub layers: usize,
    pub leaky_slope: f64,
}

impl GatConfig {
    /// 8 heads x 8 units, two layers, slope 0.2.
    pub fn standard(in_dim: usize) -> Self {
        GatConfig {
            in_dim,
            heads: 8,
            head_dim: 8,
            layers: 2,
            leaky_slope: 0.2,
        }
    }

    /// Width of the produced embeddings (final layer averages heads).
    pub fn out_dim(&self) -> usize {
        self.head_dim
    }
}

/// One attention layer: per-head weight matrix plus the two halves of the
/// attention vector (destination half and source half).
#[derive(Debug, Clone)]
pub struct GatLayer {
    pub w: Vec<Mat>,
    pub a_dst: Vec<Mat>,
    pub a_src: Vec<Mat>,
}

impl GatLayer {
    fn init<R: Rng>(in_dim: usize, head_dim: usize, heads: usize, rng: &mut R) -> Self {
        let mut w = Vec::with_capacity(heads);
        let mut a_dst = Vec::with_capacity(heads);
        let mut a_src = Vec::with_capacity(heads);
        for _ in 0..heads {
            w.push(glorot(in_dim, head_dim, rng));
            // the attention vector has fan-in 2*head_dim and fan-out 1
            let limit = (6.0 / (2 * head_dim + 1) as f64).sqrt();
            a_dst.push(Mat::from_shape_fn((head_dim, 1), |_| {
                rng.gen_range(-limit..limit)
            }));
            a_src.push(Mat::from_shape_fn((head_dim, 1), |_| {
                rng.gen_range(-limit..limit)
            }));
        }
        GatLayer { w, a_dst, a_src }
    }
}

pub struct StagedGatLayer {
    pub w: Vec<Var>,
    pub a_dst: Vec<Var>,
    pub a_src: Vec<Var>,
}

pub struct StagedGat {
    pub layers: Vec<StagedGatLayer>,
}

impl StagedGat {
    /// Vars in the same order as [`GatStack::params`].
    pub fn flat_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for h in 0..layer.w.len() {
                out.push(layer.w[h]);
                out.push(layer.a_dst[h]);
                out.push(layer.a_src[h]);
            }
        }
        out
    }
}

/// A stack of attention layers producing node embeddings.
#[derive(Debug, Clone)]
pub struct GatStack {
    pub cfg: GatConfig,
    pub layers: Vec<GatLayer>,
}

impl GatStack {
    pub fn init<R: Rng>(cfg: GatConfig, rng: &mut R) -> Self {
        assert!(cfg.layers >= 1 && cfg.heads >= 1 && cfg.head_dim >= 1);
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let in_dim = if l == 0 {
                cfg.in_dim
            } else {
                cfg.heads * cfg.head_dim
            };
            layers.push(GatLayer::init(in_dim, cfg.head_dim, cfg.heads, rng));
        }
        GatStack { cfg, layers }
    }

    pub fn out_dim(&self) -> usize {
        self.cfg.out_dim()
    }

    pub fn params(&self) -> Vec<&Mat> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for h in 0..layer.w.len() {
                out.push(&layer.w[h]);
                out.push(&layer.a_dst[h]);
                out.push(&layer.a_src[h]);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            let heads = layer.w.iter_mut().zip(&mut layer.a_dst).zip(&mut layer.a_src);
            for ((w, d), s) in heads {
                out.push(w);
                out.push(d);
                out.push(s);
            }
        }
        out
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for h in 0..layer.w.len() {
                out.push(format!("{prefix}.l{l}.h{h}.w"));
                out.push(format!("{prefix}.l{l}.h{h}.a_dst"));
                out.push(format!("{prefix}.l{l}.h{h}.a_src"));
            }
        }
        out
    }

    /// One-line architecture descriptor, hashed into checkpoints.
    pub fn arch_descriptor(&self) -> String {
        format!(
            "gat(in={},heads={},head_dim={},layers={},slope={})",
            self.cfg.in_dim, self.cfg.heads, self.cfg.head_dim, self.cfg.layers, self.cfg.leaky_slope
        )
    }

    pub fn stage(&self, tape: &mut Tape) -> StagedGat {
        let layers = self
            .layers
            .iter()
            .map(|layer| StagedGatLayer {
                w: layer.w.iter().map(|m| tape.param(m.clone())).collect(),
                a_dst: layer.a_dst.iter().map(|m| tape.param(m.clone())).collect(),
                a_src: layer.a_src.iter().map(|m| tape.param(m.clone())).collect(),
            })
            .collect();
        StagedGat { layers }
    }

    /// Forward pass over staged parameters. Returns the (n, out_dim)
    /// embedding matrix.
    pub fn forward_staged(
        &self,
        tape: &mut Tape,
        staged: &StagedGat,
        attn: &AttnGraph,
        features: &NodeFeatures,
    ) -> Result<Var, NnError> {
        self.forward_inner(tape, staged, attn, features, None)
    }

    /// Same as [`Self::forward_staged`] but also collects the attention
    /// coefficient vectors (one per layer per head) for inspection.
    pub fn forward_staged_with_attention(
        &self,
        tape: &mut Tape,
        staged: &StagedGat,
        attn: &AttnGraph,
        features: &NodeFeatures,
    ) -> Result<(Var, Vec<Vec<Var>>), NnError> {
        let mut collected = Vec::new();
        let out = self.forward_inner(tape, staged, attn, features, Some(&mut collected))?;
        Ok((out, collected))
    }

    /// Convenience: stages parameters and runs the forward pass.
    pub fn forward(
        &self,
        tape: &mut Tape,
        attn: &AttnGraph,
        features: &NodeFeatures,
    ) -> Result<Var, NnError> {
        let staged = self.stage(tape);
        self.forward_staged(tape, &staged, attn, features)
    }

    fn forward_inner(
        &self,
        tape: &mut Tape,
        staged: &StagedGat,
        attn: &AttnGraph,
        features: &NodeFeatures,
        mut collect_attn: Option<&mut Vec<Vec<Var>>>,
    ) -> Result<Var, NnError> {
        if let NodeFeatures::Identity = features {
            if self.cfg.in_dim != attn.n {
                return Err(NnError::Shape {
                    op: "gat_forward",
                    detail: format!(
                        "identity features need in_dim == node count ({} != {})",
                        self.cfg.in_dim, attn.n
                    ),
                });
            }
        }
        if let NodeFeatures::Dense(x) = features {
            if x.nrows() != attn.n || x.ncols() != self.cfg.in_dim {
                return Err(NnError::Shape {
                    op: "gat_forward",
                    detail: format!(
                        "feature matrix {:?}, expected ({}, {})",
                        x.dim(),
                        attn.n,
                        self.cfg.in_dim
                    ),
                });
            }
        }

        let mut x: Option<Var> = match features {
            NodeFeatures::Identity => None,
            NodeFeatures::Dense(m) => Some(tape.constant(m.clone())),
        };

        let last = self.layers.len() - 1;
        for (l, layer) in staged.layers.iter().enumerate() {
            let mut head_outs = Vec::with_capacity(layer.w.len());
            let mut head_attn = Vec::with_capacity(layer.w.len());
            for h in 0..layer.w.len() {
                // transformed features: with identity input the weight
                // matrix itself is the per-node feature table
                let s = match x {
                    Some(xv) => tape.matmul(xv, layer.w[h])?,
                    None => layer.w[h],
                };
                let left = tape.matmul(s, layer.a_dst[h])?;
                let right = tape.matmul(s, layer.a_src[h])?;
                let left_e = tape.gather_rows(left, attn.dst.clone())?;
                let right_e = tape.gather_rows(right, attn.src.clone())?;
                let e = tape.add(left_e, right_e)?;
                let e = tape.leaky_relu(e, self.cfg.leaky_slope)?;
                let alpha = tape.segment_softmax(e, attn.offsets.clone())?;
                let msg = tape.gather_rows(s, attn.src.clone())?;
                let weighted = tape.mul_col_vec(msg, alpha)?;
                let h_out = tape.segment_sum(weighted, attn.offsets.clone())?;
                head_outs.push(h_out);
                head_attn.push(alpha);
            }
            if let Some(collect) = collect_attn.as_deref_mut() {
                collect.push(head_attn);
            }
            let combined = if l == last {
                // average heads, keep linear
                let mut acc = head_outs[0];
                for &h in &head_outs[1..] {
                    acc = tape.add(acc, h)?;
                }
                tape.scale(acc, 1.0 / head_outs.len() as f64)?
            } else {
                let cat = tape.concat_cols(&head_outs)?;
                tape.elu(cat, 1.0)?
            };
            x = Some(combined);
        }
        Ok(x.expect("at least one layer"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, NodeType};
    use crate::oracles::{finite_difference, max_rel_err};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_graph(n: usize) -> HetGraph {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.add_node(&format!("d{i}"), NodeType::Drug);
        }
        for i in 0..n - 1 {
            b.add_edge(i as u32, i as u32 + 1).unwrap();
        }
        b.finish()
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> HetGraph {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.add_node(&format!("d{i}"), NodeType::Drug);
        }
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if rng.gen_bool(p) {
                    b.add_edge(u, v).unwrap();
                }
            }
        }
        b.finish()
    }

    #[test]
    fn single_node_with_self_loop_reproduces_its_transform() {
        let mut b = GraphBuilder::new();
        b.add_node("d0", NodeType::Drug);
        let g = b.finish();
        let attn = AttnGraph::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GatConfig {
            in_dim: 1,
            heads: 1,
            head_dim: 4,
            layers: 1,
            leaky_slope: 0.2,
        };
        let stack = GatStack::init(cfg, &mut rng);
        let mut tape = Tape::new();
        let out = stack
            .forward(&mut tape, &attn, &NodeFeatures::Identity)
            .unwrap();
        // alpha over a single slot is exactly 1, so h = W row
        for c in 0..4 {
            assert_eq!(tape.value(out)[(0, c)], stack.layers[0].w[0][(0, c)]);
        }
    }

    #[test]
    fn symmetric_nodes_with_identical_features_get_identical_embeddings() {
        // two nodes joined by an edge, same dense features
        let g = line_graph(2);
        let attn = AttnGraph::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = GatConfig {
            in_dim: 3,
            heads: 2,
            head_dim: 3,
            layers: 2,
            leaky_slope: 0.2,
        };
        let stack = GatStack::init(cfg, &mut rng);
        let features = NodeFeatures::Dense(Mat::from_shape_fn((2, 3), |(_, c)| 0.3 * c as f64 + 0.1));
        let mut tape = Tape::new();
        let out = stack.forward(&mut tape, &attn, &features).unwrap();
        for c in 0..stack.out_dim() {
            assert_eq!(tape.value(out)[(0, c)], tape.value(out)[(1, c)]);
        }
    }

    #[test]
    fn zero_features_give_zero_embeddings() {
        let g = line_graph(4);
        let attn = AttnGraph::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = GatConfig {
            in_dim: 3,
            heads: 2,
            head_dim: 3,
            layers: 2,
            leaky_slope: 0.2,
        };
        let stack = GatStack::init(cfg, &mut rng);
        let mut tape = Tape::new();
        let out = stack
            .forward(&mut tape, &attn, &NodeFeatures::Dense(Mat::zeros((4, 3))))
            .unwrap();
        assert!(tape.value(out).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_coefficients_sum_to_one_per_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_graph(&mut rng, 12, 0.3);
        let attn = AttnGraph::new(&g);
        let cfg = GatConfig {
            in_dim: 12,
            heads: 3,
            head_dim: 4,
            layers: 2,
            leaky_slope: 0.2,
        };
        let stack = GatStack::init(cfg, &mut rng);
        let mut tape = Tape::new();
        let staged = stack.stage(&mut tape);
        let (_, attns) = stack
            .forward_staged_with_attention(&mut tape, &staged, &attn, &NodeFeatures::Identity)
            .unwrap();
        assert_eq!(attns.len(), 2);
        for layer_attn in &attns {
            for &alpha in layer_attn {
                let v = tape.value(alpha);
                for w in attn.offsets.windows(2) {
                    let total: f64 = (w[0]..w[1]).map(|r| v[(r, 0)]).sum();
                    assert!((total - 1.0).abs() < 1e-9);
                    assert!((w[0]..w[1]).all(|r| v[(r, 0)] >= 0.0));
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng_a = ChaCha8Rng::seed_from_u64(11);
        let mut rng_b = ChaCha8Rng::seed_from_u64(11);
        let g = line_graph(6);
        let attn = AttnGraph::new(&g);
        let cfg = GatConfig::standard(6);
        let sa = GatStack::init(cfg.clone(), &mut rng_a);
        let sb = GatStack::init(cfg, &mut rng_b);
        let mut ta = Tape::new();
        let mut tb = Tape::new();
        let oa = sa.forward(&mut ta, &attn, &NodeFeatures::Identity).unwrap();
        let ob = sb.forward(&mut tb, &attn, &NodeFeatures::Identity).unwrap();
        assert_eq!(ta.value(oa), tb.value(ob));
    }

    #[test]
    fn permutation_equivariance_is_exact() {
        // shift permutation chosen order-preserving on every neighborhood,
        // so per-segment float summation order is unchanged
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 30;
        let shift = 5;
        let mut edges = Vec::new();
        {
            let mut tmp_rng = ChaCha8Rng::seed_from_u64(17);
            for u in 0..(n - shift) as u32 {
                for v in (u + 1)..(n - shift) as u32 {
                    if tmp_rng.gen_bool(0.2) {
                        edges.push((u, v));
                    }
                }
            }
        }
        let build = |offset: u32| {
            let mut b = GraphBuilder::new();
            for i in 0..n {
                b.add_node(&format!("d{i}"), NodeType::Drug);
            }
            for &(u, v) in &edges {
                b.add_edge(u + offset, v + offset).unwrap();
            }
            b.finish()
        };
        let ga = build(0);
        let gb = build(shift as u32);

        let in_dim = 4;
        let cfg = GatConfig {
            in_dim,
            heads: 2,
            head_dim: 3,
            layers: 2,
            leaky_slope: 0.2,
        };
        let stack = GatStack::init(cfg, &mut rng);
        let xa = Mat::from_shape_fn((n, in_dim), |_| rng.gen_range(-1.0..1.0));
        let mut xb = Mat::zeros((n, in_dim));
        for i in 0..n {
            let tgt = (i + shift) % n;
            xb.row_mut(tgt).assign(&xa.row(i));
        }

        let mut ta = Tape::new();
        let oa = stack
            .forward(&mut ta, &AttnGraph::new(&ga), &NodeFeatures::Dense(xa))
            .unwrap();
        let mut tb = Tape::new();
        let ob = stack
            .forward(&mut tb, &AttnGraph::new(&gb), &NodeFeatures::Dense(xb))
            .unwrap();
        for i in 0..n {
            let tgt = (i + shift) % n;
            for c in 0..stack.out_dim() {
                assert_eq!(
                    ta.value(oa)[(i, c)].to_bits(),
                    tb.value(ob)[(tgt, c)].to_bits(),
                    "node {i} col {c}"
                );
            }
        }
    }

    #[test]
    fn full_encoder_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let g = random_graph(&mut rng, 10, 0.3);
        let attn = AttnGraph::new(&g);
        let cfg = GatConfig {
            in_dim: 10,
            heads: 2,
            head_dim: 3,
            layers: 2,
            leaky_slope: 0.2,
        };
        let stack = GatStack::init(cfg, &mut rng);

        // flatten all parameters, rebuild the stack per evaluation
        let shapes: Vec<(usize, usize)> =
            stack.params().iter().map(|m| m.dim()).collect();
        let flat: Vec<f64> = stack
            .params()
            .iter()
            .flat_map(|m| m.iter().copied())
            .collect();

        let rebuild = |xs: &[f64]| -> GatStack {
            let mut s = stack.clone();
            let mut cursor = 0;
            for (m, &(r, c)) in s.params_mut().into_iter().zip(&shapes) {
                let take = r * c;
                *m = Mat::from_shape_vec((r, c), xs[cursor..cursor + take].to_vec()).unwrap();
                cursor += take;
            }
            s
        };

        let mut eval = |xs: &[f64]| -> f64 {
            let s = rebuild(xs);
            let mut tape = Tape::new();
            let out = s.forward(&mut tape, &attn, &NodeFeatures::Identity).unwrap();
            let sq = tape.square(out).unwrap();
            let loss = tape.mean(sq).unwrap();
            tape.value(loss)[(0, 0)]
        };
        let numeric = finite_difference(&mut eval, &flat, 1e-4);

        let mut tape = Tape::new();
        let staged = stack.stage(&mut tape);
        let out = stack
            .forward_staged(&mut tape, &staged, &attn, &NodeFeatures::Identity)
            .unwrap();
        let sq = tape.square(out).unwrap();
        let loss = tape.mean(sq).unwrap();
        let mut grads = tape.backward(loss).unwrap();
        let analytic: Vec<f64> = staged
            .flat_vars()
            .into_iter()
            .flat_map(|v| grads.take(v).unwrap().into_iter().collect::<Vec<_>>())
            .collect();

        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn params_and_params_mut_agree_on_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut stack = GatStack::init(GatConfig::standard(5), &mut rng);
        let dims: Vec<_> = stack.params().iter().map(|m| m.dim()).collect();
        let dims_mut: Vec<_> = stack.params_mut().iter().map(|m| m.dim()).collect();
        assert_eq!(dims, dims_mut);
        let names = stack.param_names("enc");
        assert_eq!(names.len(), dims.len());
        let ptrs: Vec<*const Mat> = stack.params().iter().map(|m| *m as *const Mat).collect();
        let ptrs_mut: Vec<*const Mat> = stack
            .params_mut()
            .into_iter()
            .map(|m| m as *const Mat)
            .collect();
        assert_eq!(ptrs, ptrs_mut);
    }
}
