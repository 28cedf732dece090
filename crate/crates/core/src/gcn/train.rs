use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{softmax_rows, GcnParams};
use crate::error::{GuapError, Result};
use crate::graph::{Graph, NormalizedAdjacency};

/// Full-batch training settings. The optimizer is always Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    /// L2 penalty on the first-layer weights.
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(GuapError::hyper("epochs", "must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(GuapError::hyper("learning_rate", "must be positive"));
        }
        if self.hidden == 0 {
            return Err(GuapError::hyper("hidden", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(GuapError::hyper("weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Summed cross-entropy over the training nodes, one entry per epoch,
    /// evaluated before that epoch's update.
    pub loss: Vec<f64>,
}

struct Adam {
    m: Array2<f64>,
    v: Array2<f64>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(shape: (usize, usize)) -> Self {
        Self {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }

    fn step(&mut self, w: &mut Array2<f64>, g: &Array2<f64>, lr: f64, t: i32) {
        self.m.zip_mut_with(g, |m, &g| *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g);
        self.v.zip_mut_with(g, |v, &g| *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g);
        let c1 = 1.0 - Self::BETA1.powi(t);
        let c2 = 1.0 - Self::BETA2.powi(t);
        ndarray::Zip::from(w)
            .and(&self.m)
            .and(&self.v)
            .for_each(|w, &m, &v| *w -= lr * (m / c1) / ((v / c2).sqrt() + Self::EPS));
    }
}

/// Trains the victim GCN on the clean graph's training split.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<GcnParams> {
    Ok(train_with_history(g, cfg)?.0)
}

pub fn train_with_history(g: &Graph, cfg: &TrainConfig) -> Result<(GcnParams, TrainHistory)> {
    cfg.validate()?;
    let train_nodes = g.train_nodes();
    if train_nodes.is_empty() {
        return Err(GuapError::Config("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = GcnParams::glorot(g.feature_dim(), cfg.hidden, g.num_classes(), &mut rng);
    let adj = g.empty_patch(0);
    let norm = NormalizedAdjacency::new(&adj);
    let x = g.features();
    // Â X is fixed for the whole run
    let ax = norm.apply(x.view());
    let labels = g.labels();
    let scale = 1.0 / train_nodes.len() as f64;

    let mut adam0 = Adam::new(params.w0.dim());
    let mut adam1 = Adam::new(params.w1.dim());
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        let pre = ax.dot(&params.w0);
        let hidden = pre.mapv(|v| v.max(0.0));
        let hidden_out = hidden.dot(&params.w1);
        let logits = norm.apply(hidden_out.view());
        let probs = softmax_rows(&logits);

        let mut loss = 0.0;
        let mut g_out = Array2::<f64>::zeros(probs.dim());
        for &j in &train_nodes {
            loss -= probs[[j, labels[j]]].max(f64::MIN_POSITIVE).ln();
            let mut row = g_out.row_mut(j);
            row.assign(&probs.row(j));
            row[labels[j]] -= 1.0;
        }
        history.loss.push(loss);
        g_out *= scale;

        let d_hidden_out = norm.apply_transpose(g_out.view());
        let grad_w1 = hidden.t().dot(&d_hidden_out);
        let mut d_pre = d_hidden_out.dot(&params.w1.t());
        d_pre.zip_mut_with(&pre, |d, &u| {
            if u <= 0.0 {
                *d = 0.0
            }
        });
        let mut grad_w0 = ax.t().dot(&d_pre);
        grad_w0.scaled_add(cfg.weight_decay, &params.w0);

        adam0.step(&mut params.w0, &grad_w0, cfg.learning_rate, epoch as i32);
        adam1.step(&mut params.w1, &grad_w1, cfg.learning_rate, epoch as i32);
    }
    log::debug!(
        "trained GCN: loss {:.4} -> {:.4}",
        history.loss.first().copied().unwrap_or(f64::NAN),
        history.loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::gcn::{predict_labels, BoundModel};
    use crate::graph::{CsrAdjacency, Split};

    #[test]
    fn singleton_graph_overfits_its_label() {
        let g = Graph::new(
            CsrAdjacency::empty(1),
            array![[1.0, 0.5]],
            vec![0],
            2,
            vec![Split::Train],
        )
        .unwrap();
        let params = train(&g, &TrainConfig { epochs: 50, ..Default::default() }).unwrap();
        let model = BoundModel::new(&params, g.features().view()).unwrap();
        assert_eq!(model.predict(&g.empty_patch(0)).unwrap(), vec![0]);
    }

    #[test]
    fn empty_training_split_is_rejected() {
        let g = Graph::new(CsrAdjacency::empty(2), array![[1.0], [0.0]], vec![0, 1], 2, vec![Split::Test; 2])
            .unwrap();
        assert!(matches!(train(&g, &TrainConfig::default()), Err(GuapError::Config(_))));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let g = Graph::new(CsrAdjacency::empty(1), array![[1.0]], vec![0], 1, vec![Split::Train]).unwrap();
        let bad = TrainConfig { epochs: 0, ..Default::default() };
        assert!(train(&g, &bad).is_err());
        let bad = TrainConfig { learning_rate: 0.0, ..Default::default() };
        assert!(train(&g, &bad).is_err());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let adj = CsrAdjacency::from_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5), (2, 3)]).unwrap();
        let x = array![[1.0, 0.0], [1.0, 0.1], [0.8, 0.0], [0.0, 1.0], [0.1, 1.0], [0.0, 0.9]];
        let split = vec![Split::Train, Split::Test, Split::Test, Split::Train, Split::Test, Split::Test];
        let g = Graph::new(adj, x, vec![0, 0, 0, 1, 1, 1], 2, split).unwrap();
        let cfg = TrainConfig { epochs: 100, seed: 7, ..Default::default() };
        let (a, hist) = train_with_history(&g, &cfg).unwrap();
        let (b, _) = train_with_history(&g, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(hist.loss.last().unwrap() < hist.loss.first().unwrap());
        let z = BoundModel::new(&a, g.features().view()).unwrap().probs(&g.empty_patch(0)).unwrap();
        assert_eq!(predict_labels(&z), vec![0, 0, 0, 1, 1, 1]);
    }
}
