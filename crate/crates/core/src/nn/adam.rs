//! Adam with classic coupled L2 regularization: the decay term lambda *
//! theta is added to the gradient before the moment updates.

use super::tape::{Mat, NnError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    /// Learning rate 5e-4 and L2 5e-4, the pretraining settings.
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

/// Optimizer state for one parameter group. Buffers are shaped like the
/// parameters; the step counter is shared by the group.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl AdamState {
    pub fn new(params: &[&Mat], cfg: AdamConfig) -> Self {
        AdamState {
            cfg,
            step: 0,
            m: params.iter().map(|p| Mat::zeros(p.raw_dim())).collect(),
            v: params.iter().map(|p| Mat::zeros(p.raw_dim())).collect(),
        }
    }

    /// One update over the whole group. `grads` must align with `params`.
    pub fn apply(&mut self, params: Vec<&mut Mat>, grads: &[Mat]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Shape {
                op: "adam",
                detail: format!(
                    "group has {} buffers, got {} params / {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        for g in grads {
            if !g.iter().all(|v| v.is_finite()) {
                return Err(NnError::NumericFault { op: "adam" });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for ((theta, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if theta.raw_dim() != g.raw_dim() {
                return Err(NnError::Shape {
                    op: "adam",
                    detail: format!("param {:?} vs grad {:?}", theta.dim(), g.dim()),
                });
            }
            ndarray::Zip::from(&mut *theta)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|th, &gv, mv, vv| {
                    let g_eff = gv + self.cfg.weight_decay * *th;
                    *mv = self.cfg.beta1 * *mv + (1.0 - self.cfg.beta1) * g_eff;
                    *vv = self.cfg.beta2 * *vv + (1.0 - self.cfg.beta2) * g_eff * g_eff;
                    let m_hat = *mv / bc1;
                    let v_hat = *vv / bc2;
                    *th -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
                });
        }
        Ok(())
    }
}
