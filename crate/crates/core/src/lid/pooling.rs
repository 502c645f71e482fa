use crate::error::{ensure, Result};
use crate::nnet::{log_sigmoid, GradBuffer, Init, Linear, ParamStore, SequenceTensor};

/// Multi-head weighted-average pooling. Per frame, head weights are
/// `w_t = Pr2(log_sigmoid(Pr1 x_t))` and values are `ReLU(Pr3 x_t)`; head `h`
/// averages its contiguous `head_dim`-wide value block with weights
/// `softmax_t(w_t[h])`.
#[derive(Clone, Debug)]
pub struct PoolingHead {
    pub pr1: Linear,
    pub pr2: Linear,
    pub pr3: Linear,
    heads: usize,
    head_dim: usize,
}

/// Activations kept for [`PoolingHead::backward`].
#[derive(Clone, Debug)]
pub struct PoolCache {
    pre1: Vec<Vec<f64>>,
    logsig: Vec<Vec<f64>>,
    pre3: Vec<Vec<f64>>,
    values: SequenceTensor,
    alpha: SequenceTensor,
    y: Vec<f64>,
}

impl PoolingHead {
    pub fn new(store: &mut ParamStore, init: &mut Init<'_>, name: &str, input_dim: usize, heads: usize, head_dim: usize) -> Result<Self> {
        ensure!(heads >= 1 && head_dim >= 1, "pooling needs at least one head of width >= 1");
        Ok(PoolingHead {
            pr1: Linear::new(store, init, &format!("{name}.pr1"), input_dim, heads, true)?,
            pr2: Linear::new(store, init, &format!("{name}.pr2"), heads, heads, true)?,
            pr3: Linear::new(store, init, &format!("{name}.pr3"), input_dim, heads * head_dim, true)?,
            heads,
            head_dim,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn input_dim(&self) -> usize {
        self.pr1.in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    fn check(&self, x: &SequenceTensor) -> Result<()> {
        ensure!(
            x.width() == self.input_dim(),
            "pooling input has width {}, expected {}",
            x.width(),
            self.input_dim()
        );
        Ok(())
    }

    /// Per-frame head weights `w_t` (T × H).
    pub fn weights(&self, store: &ParamStore, x: &SequenceTensor) -> Result<SequenceTensor> {
        self.check(x)?;
        let rows: Vec<Vec<f64>> = (0..x.frames())
            .map(|t| {
                let s: Vec<f64> = self.pr1.forward(store, x.frame(t)).into_iter().map(log_sigmoid).collect();
                self.pr2.forward(store, &s)
            })
            .collect();
        SequenceTensor::from_rows(&rows)
    }

    /// Per-frame values `ReLU(Pr3 x_t)` (T × H·d_h).
    pub fn values(&self, store: &ParamStore, x: &SequenceTensor) -> Result<SequenceTensor> {
        self.check(x)?;
        let rows: Vec<Vec<f64>> = (0..x.frames())
            .map(|t| self.pr3.forward(store, x.frame(t)).into_iter().map(|v| v.max(0.0)).collect())
            .collect();
        SequenceTensor::from_rows(&rows)
    }

    pub fn pool(&self, store: &ParamStore, x: &SequenceTensor) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.forward(store, x).0)
    }

    pub fn forward(&self, store: &ParamStore, x: &SequenceTensor) -> (Vec<f64>, PoolCache) {
        let n = x.frames();
        let mut pre1 = Vec::with_capacity(n);
        let mut logsig = Vec::with_capacity(n);
        let mut pre3 = Vec::with_capacity(n);
        let mut w = SequenceTensor::zeros(n, self.heads);
        let mut values = SequenceTensor::zeros(n, self.output_dim());
        for t in 0..n {
            let a = self.pr1.forward(store, x.frame(t));
            let s: Vec<f64> = a.iter().map(|&v| log_sigmoid(v)).collect();
            w.frame_mut(t).copy_from_slice(&self.pr2.forward(store, &s));
            let r = self.pr3.forward(store, x.frame(t));
            for (o, &v) in values.frame_mut(t).iter_mut().zip(&r) {
                *o = v.max(0.0);
            }
            pre1.push(a);
            logsig.push(s);
            pre3.push(r);
        }
        let alpha = head_softmax(&w);
        let y = weighted_average(&alpha, &values, self.head_dim);
        let cache = PoolCache {
            pre1,
            logsig,
            pre3,
            values,
            alpha,
            y: y.clone(),
        };
        (y, cache)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, store: &ParamStore, x: &SequenceTensor, cache: &PoolCache, dy: &[f64], grads: &mut GradBuffer) -> SequenceTensor {
        let n = x.frames();
        let (h_n, d_h) = (self.heads, self.head_dim);
        // Σ_t α dα per head equals Σ_k dy·y over the head's block.
        let centre: Vec<f64> = (0..h_n)
            .map(|h| (0..d_h).map(|k| dy[h * d_h + k] * cache.y[h * d_h + k]).sum())
            .collect();
        let mut dx = SequenceTensor::zeros(n, x.width());
        let mut dw = vec![0.0; h_n];
        let mut ds = vec![0.0; h_n];
        let mut dr = vec![0.0; h_n * d_h];
        for t in 0..n {
            let alpha = cache.alpha.frame(t);
            let v = cache.values.frame(t);
            for h in 0..h_n {
                let mut dalpha = 0.0;
                for k in 0..d_h {
                    let i = h * d_h + k;
                    dalpha += dy[i] * v[i];
                    dr[i] = if cache.pre3[t][i] > 0.0 { alpha[h] * dy[i] } else { 0.0 };
                }
                dw[h] = alpha[h] * (dalpha - centre[h]);
            }
            ds.fill(0.0);
            self.pr2.backward(store, &cache.logsig[t], &dw, grads, Some(&mut ds));
            let da: Vec<f64> = ds
                .iter()
                .zip(&cache.pre1[t])
                .map(|(d, &a)| d * crate::nnet::sigmoid(-a))
                .collect();
            let row = dx.frame_mut(t);
            self.pr1.backward(store, x.frame(t), &da, grads, Some(&mut *row));
            self.pr3.backward(store, x.frame(t), &dr, grads, Some(row));
        }
        dx
    }
}

/// Softmax over time, independently per head column.
fn head_softmax(w: &SequenceTensor) -> SequenceTensor {
    let (n, h_n) = (w.frames(), w.width());
    let mut alpha = SequenceTensor::zeros(n, h_n);
    for h in 0..h_n {
        let m = (0..n).map(|t| w.frame(t)[h]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for t in 0..n {
            let e = (w.frame(t)[h] - m).exp();
            alpha.frame_mut(t)[h] = e;
            z += e;
        }
        for t in 0..n {
            alpha.frame_mut(t)[h] /= z;
        }
    }
    alpha
}

fn weighted_average(alpha: &SequenceTensor, values: &SequenceTensor, head_dim: usize) -> Vec<f64> {
    let mut y = vec![0.0; values.width()];
    for t in 0..values.frames() {
        let a = alpha.frame(t);
        for (i, (o, v)) in y.iter_mut().zip(values.frame(t)).enumerate() {
            *o += a[i / head_dim] * v;
        }
    }
    y
}

/// Pools precomputed head weights (T × H) and values (T × H·d_h).
pub fn pool_weighted(weights: &SequenceTensor, values: &SequenceTensor) -> Result<Vec<f64>> {
    ensure!(weights.frames() == values.frames(), "weights and values differ in frame count");
    let h_n = weights.width();
    ensure!(values.width().is_multiple_of(h_n), "value width {} is not a multiple of {h_n} heads", values.width());
    Ok(weighted_average(&head_softmax(weights), values, values.width() / h_n))
}
