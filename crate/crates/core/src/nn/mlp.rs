//! Three-layer perceptron (input -> hidden -> output, ReLU between),
//! used both as the downstream link decoder and as the task discriminator.

use rand::Rng;

use super::glorot;
use super::tape::{Mat, NnError, Tape, Var};

#[derive(Debug, Clone)]
pub struct Mlp {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

pub struct StagedMlp {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl StagedMlp {
    pub fn flat_vars(&self) -> Vec<Var> {
        vec![self.w1, self.b1, self.w2, self.b2]
    }
}

impl Mlp {
    /// Glorot-initialized weights, zero biases. Hidden width 64 is the
    /// working default for both decoder and discriminator.
    pub fn init<R: Rng>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        Mlp {
            w1: glorot(in_dim, hidden, rng),
            b1: Mat::zeros((1, hidden)),
            w2: glorot(hidden, out_dim, rng),
            b2: Mat::zeros((1, out_dim)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub fn params(&self) -> Vec<&Mat> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        ["w1", "b1", "w2", "b2"]
            .iter()
            .map(|n| format!("{prefix}.{n}"))
            .collect()
    }

    pub fn arch_descriptor(&self) -> String {
        format!(
            "mlp(in={},hidden={},out={})",
            self.w1.nrows(),
            self.w1.ncols(),
            self.w2.ncols()
        )
    }

    pub fn stage(&self, tape: &mut Tape) -> StagedMlp {
        StagedMlp {
            w1: tape.param(self.w1.clone()),
            b1: tape.param(self.b1.clone()),
            w2: tape.param(self.w2.clone()),
            b2: tape.param(self.b2.clone()),
        }
    }

    /// Logits for a batch of input rows.
    pub fn forward_staged(
        &self,
        tape: &mut Tape,
        staged: &StagedMlp,
        x: Var,
    ) -> Result<Var, NnError> {
        let h = tape.matmul(x, staged.w1)?;
        let h = tape.add_row_vec(h, staged.b1)?;
        let h = tape.relu(h)?;
        let out = tape.matmul(h, staged.w2)?;
        tape.add_row_vec(out, staged.b2)
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, NnError> {
        let staged = self.stage(tape);
        self.forward_staged(tape, &staged, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{finite_difference, max_rel_err};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::rc::Rc;

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mlp = Mlp::init(5, 7, 3, &mut rng);
        let x = Mat::from_shape_fn((6, 5), |_| rng.gen_range(-1.0..1.0));
        let labels = Rc::new(vec![0usize, 1, 2, 0, 1, 2]);

        let shapes: Vec<(usize, usize)> = mlp.params().iter().map(|m| m.dim()).collect();
        let flat: Vec<f64> = mlp.params().iter().flat_map(|m| m.iter().copied()).collect();
        let mut eval = |xs: &[f64]| -> f64 {
            let mut m = mlp.clone();
            let mut cursor = 0;
            for (p, &(r, c)) in m.params_mut().into_iter().zip(&shapes) {
                let take = r * c;
                *p = Mat::from_shape_vec((r, c), xs[cursor..cursor + take].to_vec()).unwrap();
                cursor += take;
            }
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let logits = m.forward(&mut tape, xv).unwrap();
            let loss = tape.softmax_cross_entropy(logits, labels.clone()).unwrap();
            tape.value(loss)[(0, 0)]
        };
        let numeric = finite_difference(&mut eval, &flat, 1e-4);

        let mut tape = Tape::new();
        let staged = mlp.stage(&mut tape);
        let xv = tape.constant(x.clone());
        let logits = mlp.forward_staged(&mut tape, &staged, xv).unwrap();
        let loss = tape.softmax_cross_entropy(logits, labels).unwrap();
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
    fn zero_initialized_discriminator_outputs_uniform() {
        let mlp = Mlp {
            w1: Mat::zeros((4, 8)),
            b1: Mat::zeros((1, 8)),
            w2: Mat::zeros((8, 2)),
            b2: Mat::zeros((1, 2)),
        };
        let mut tape = Tape::new();
        let x = tape.constant(Mat::from_elem((3, 4), 0.7));
        let logits = mlp.forward(&mut tape, x).unwrap();
        let probs = tape.row_softmax(logits).unwrap();
        for r in 0..3 {
            assert_eq!(tape.value(probs)[(r, 0)], 0.5);
            assert_eq!(tape.value(probs)[(r, 1)], 0.5);
        }
    }
}
