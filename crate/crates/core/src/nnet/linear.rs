use super::params::{GradBuffer, Init, InitKind, ParamId, ParamStore};
use crate::error::{ensure, Result};

/// `out += W x` for row-major `W` of shape `rows × cols`.
#[inline]
pub(crate) fn matvec_add(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (row, o) in w.chunks_exact(cols).zip(out.iter_mut()) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dx += Wᵀ dy`.
#[inline]
pub(crate) fn matvec_t_add(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    for (row, &g) in w.chunks_exact(cols).zip(dy) {
        if g == 0.0 {
            continue;
        }
        for (d, a) in dx.iter_mut().zip(row) {
            *d += a * g;
        }
    }
}

/// `dW += dy xᵀ`.
#[inline]
pub(crate) fn outer_add(dw: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (row, &g) in dw.chunks_exact_mut(cols).zip(dy) {
        if g == 0.0 {
            continue;
        }
        for (d, a) in row.iter_mut().zip(x) {
            *d += a * g;
        }
    }
}

/// Affine map `y = W x + b` with `W` stored `[out, in]` under `<name>.weight`
/// and `b` under `<name>.bias`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init<'_>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Result<Self> {
        ensure!(in_dim >= 1 && out_dim >= 1, "linear {name} needs positive dims");
        let weight = init.param(
            store,
            &format!("{name}.weight"),
            &[out_dim, in_dim],
            InitKind::Glorot,
        )?;
        let bias = if bias {
            Some(init.param(store, &format!("{name}.bias"), &[out_dim], InitKind::Zeros)?)
        } else {
            None
        };
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut y = match self.bias {
            Some(b) => store.values(b).to_vec(),
            None => vec![0.0; self.out_dim],
        };
        matvec_add(store.values(self.weight), self.in_dim, x, &mut y);
        y
    }

    pub fn checked_forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            x.len() == self.in_dim,
            "linear input has width {}, expected {}",
            x.len(),
            self.in_dim
        );
        Ok(self.forward(store, x))
    }

    /// Accumulates parameter gradients for one input/upstream pair and, when
    /// asked, adds the input gradient into `dx`.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &[f64],
        dy: &[f64],
        grads: &mut GradBuffer,
        dx: Option<&mut [f64]>,
    ) {
        outer_add(grads.get_mut(self.weight), self.in_dim, dy, x);
        if let Some(b) = self.bias {
            for (g, d) in grads.get_mut(b).iter_mut().zip(dy) {
                *g += d;
            }
        }
        if let Some(dx) = dx {
            matvec_t_add(store.values(self.weight), self.in_dim, dy, dx);
        }
    }
}
