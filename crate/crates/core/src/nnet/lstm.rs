//! LSTM cell, unidirectional runs and the bidirectional layer.
//!
//! Gate layout inside the stacked weights is `[input, forget, cell, output]`.

use super::linear::{matvec_add, matvec_t_add, outer_add};
use super::params::{GradBuffer, Init, InitKind, ParamId, ParamStore};
use super::tensor::{sigmoid, SequenceTensor};
use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Everything the backward pass of one step needs.
#[derive(Clone, Debug)]
pub struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    input_dim: usize,
    hidden: usize,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init<'_>,
        name: &str,
        input_dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        ensure!(input_dim >= 1 && hidden >= 1, "lstm {name} needs positive dims");
        let w_x = init.param(store, &format!("{name}.w_x"), &[4 * hidden, input_dim], InitKind::Glorot)?;
        let w_h = init.param(store, &format!("{name}.w_h"), &[4 * hidden, hidden], InitKind::Glorot)?;
        let b = init.param(store, &format!("{name}.b"), &[4 * hidden], InitKind::LstmBias { hidden })?;
        Ok(LstmCell {
            w_x,
            w_h,
            b,
            input_dim,
            hidden,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn step(&self, store: &ParamStore, x: &[f64], state: &LstmState) -> (LstmState, StepCache) {
        let hd = self.hidden;
        let mut z = store.values(self.b).to_vec();
        matvec_add(store.values(self.w_x), self.input_dim, x, &mut z);
        matvec_add(store.values(self.w_h), hd, &state.h, &mut z);
        for (k, v) in z.iter_mut().enumerate() {
            *v = if (2 * hd..3 * hd).contains(&k) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
        let mut c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, g, o) = (z[j], z[hd + j], z[2 * hd + j], z[3 * hd + j]);
            c[j] = f * state.c[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
        let cache = StepCache {
            x: x.to_vec(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates: z,
            tanh_c,
        };
        (LstmState { h, c }, cache)
    }

    /// Backpropagates `dh`, `dc` (gradients w.r.t. this step's outputs) and
    /// returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        store: &ParamStore,
        cache: &StepCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut GradBuffer,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let gt = &cache.gates;
        let mut dz = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, g, o) = (gt[j], gt[hd + j], gt[2 * hd + j], gt[3 * hd + j]);
            let tc = cache.tanh_c[j];
            let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
            dz[j] = dcj * g * i * (1.0 - i);
            dz[hd + j] = dcj * cache.c_prev[j] * f * (1.0 - f);
            dz[2 * hd + j] = dcj * i * (1.0 - g * g);
            dz[3 * hd + j] = dh[j] * tc * o * (1.0 - o);
            dc_prev[j] = dcj * f;
        }
        outer_add(grads.get_mut(self.w_x), self.input_dim, &dz, &cache.x);
        outer_add(grads.get_mut(self.w_h), hd, &dz, &cache.h_prev);
        for (g, d) in grads.get_mut(self.b).iter_mut().zip(&dz) {
            *g += d;
        }
        let mut dx = vec![0.0; self.input_dim];
        matvec_t_add(store.values(self.w_x), self.input_dim, &dz, &mut dx);
        let mut dh_prev = vec![0.0; hd];
        matvec_t_add(store.values(self.w_h), hd, &dz, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }

    /// Runs the cell over a sequence from a zero state. With `reverse` the
    /// cell reads frames last-to-first; outputs stay aligned to input frames.
    /// Caches are in processing order.
    pub fn run(
        &self,
        store: &ParamStore,
        seq: &SequenceTensor,
        reverse: bool,
    ) -> (SequenceTensor, Vec<StepCache>) {
        let t_len = seq.frames();
        let mut out = SequenceTensor::zeros(t_len, self.hidden);
        let mut caches = Vec::with_capacity(t_len);
        let mut state = LstmState::zeros(self.hidden);
        for k in 0..t_len {
            let t = if reverse { t_len - 1 - k } else { k };
            let (next, cache) = self.step(store, seq.frame(t), &state);
            out.frame_mut(t).copy_from_slice(&next.h);
            caches.push(cache);
            state = next;
        }
        (out, caches)
    }

    /// Backward of [`LstmCell::run`]; `dout` is aligned to input frames.
    pub fn run_backward(
        &self,
        store: &ParamStore,
        caches: &[StepCache],
        dout: &SequenceTensor,
        reverse: bool,
        grads: &mut GradBuffer,
    ) -> SequenceTensor {
        let t_len = caches.len();
        let mut dinput = SequenceTensor::zeros(t_len, self.input_dim);
        let mut dh_next = vec![0.0; self.hidden];
        let mut dc_next = vec![0.0; self.hidden];
        for k in (0..t_len).rev() {
            let t = if reverse { t_len - 1 - k } else { k };
            let dh: Vec<f64> = dout.frame(t).iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let (dx, dh_prev, dc_prev) = self.step_backward(store, &caches[k], &dh, &dc_next, grads);
            dinput.frame_mut(t).copy_from_slice(&dx);
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        dinput
    }
}

/// Checked single LSTM step.
pub fn lstm_step(
    cell: &LstmCell,
    store: &ParamStore,
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure!(
        x.len() == cell.input_dim && h.len() == cell.hidden && c.len() == cell.hidden,
        "lstm step dims x={} h={} c={} do not match cell ({}, {})",
        x.len(),
        h.len(),
        c.len(),
        cell.input_dim,
        cell.hidden
    );
    let state = LstmState {
        h: h.to_vec(),
        c: c.to_vec(),
    };
    let (next, _) = cell.step(store, x, &state);
    Ok((next.h, next.c))
}

/// Forward and backward LSTMs over the same input; frame `t` of the output is
/// `[forward_t, backward_t]`.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache {
    fwd: Vec<StepCache>,
    bwd: Vec<StepCache>,
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init<'_>,
        name: &str,
        input_dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        Ok(BiLstm {
            fwd: LstmCell::new(store, init, &format!("{name}.fwd"), input_dim, hidden)?,
            bwd: LstmCell::new(store, init, &format!("{name}.bwd"), input_dim, hidden)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward(&self, store: &ParamStore, seq: &SequenceTensor) -> (SequenceTensor, BiLstmCache) {
        let (f, fc) = self.fwd.run(store, seq, false);
        let (b, bc) = self.bwd.run(store, seq, true);
        let hd = self.fwd.hidden;
        let mut out = SequenceTensor::zeros(seq.frames(), 2 * hd);
        for t in 0..seq.frames() {
            let row = out.frame_mut(t);
            row[..hd].copy_from_slice(f.frame(t));
            row[hd..].copy_from_slice(b.frame(t));
        }
        (out, BiLstmCache { fwd: fc, bwd: bc })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &BiLstmCache,
        dout: &SequenceTensor,
        grads: &mut GradBuffer,
    ) -> SequenceTensor {
        let hd = self.fwd.hidden;
        let t_len = dout.frames();
        let mut df = SequenceTensor::zeros(t_len, hd);
        let mut db = SequenceTensor::zeros(t_len, hd);
        for t in 0..t_len {
            df.frame_mut(t).copy_from_slice(&dout.frame(t)[..hd]);
            db.frame_mut(t).copy_from_slice(&dout.frame(t)[hd..]);
        }
        let mut dx = self.fwd.run_backward(store, &cache.fwd, &df, false, grads);
        let dxb = self.bwd.run_backward(store, &cache.bwd, &db, true, grads);
        for t in 0..t_len {
            for (a, b) in dx.frame_mut(t).iter_mut().zip(dxb.frame(t)) {
                *a += b;
            }
        }
        dx
    }
}

/// Checked bidirectional forward pass.
pub fn bilstm_forward(layer: &BiLstm, store: &ParamStore, seq: &SequenceTensor) -> Result<SequenceTensor> {
    ensure!(
        seq.width() == layer.input_dim(),
        "bilstm input width {} does not match {}",
        seq.width(),
        layer.input_dim()
    );
    Ok(layer.forward(store, seq).0)
}
