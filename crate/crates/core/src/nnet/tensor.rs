use crate::error::{ensure, Error, Result};

/// A `frames × width` row-major matrix of per-frame feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTensor {
    frames: usize,
    width: usize,
    data: Vec<f64>,
}

impl SequenceTensor {
    /// Builds a tensor, checking shape and that every entry is finite.
    pub fn new(frames: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(frames >= 1, "sequence must have at least one frame");
        ensure!(width >= 1, "sequence width must be at least one");
        ensure!(
            data.len() == frames * width,
            "sequence data has {} entries, expected {frames}x{width}",
            data.len()
        );
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("sequence contains non-finite entries"));
        }
        Ok(SequenceTensor {
            frames,
            width,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        ensure!(!rows.is_empty(), "sequence must have at least one frame");
        let width = rows[0].len();
        ensure!(
            rows.iter().all(|r| r.len() == width),
            "ragged rows in sequence"
        );
        Self::new(rows.len(), width, rows.concat())
    }

    pub fn zeros(frames: usize, width: usize) -> Self {
        SequenceTensor {
            frames,
            width,
            data: vec![0.0; frames * width],
        }
    }

    pub(crate) fn from_raw(frames: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), frames * width);
        SequenceTensor {
            frames,
            width,
            data,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Same frames in reverse time order.
    pub fn reversed(&self) -> SequenceTensor {
        let mut data = Vec::with_capacity(self.data.len());
        for t in (0..self.frames).rev() {
            data.extend_from_slice(self.frame(t));
        }
        SequenceTensor::from_raw(self.frames, self.width, data)
    }

    /// Frames `[start, end)`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<SequenceTensor> {
        ensure!(
            start < end && end <= self.frames,
            "frame range {start}..{end} out of 0..{}",
            self.frames
        );
        Ok(SequenceTensor::from_raw(
            end - start,
            self.width,
            self.data[start * self.width..end * self.width].to_vec(),
        ))
    }

    /// Reorders frames so that output frame `i` is input frame `order[i]`.
    pub fn permute_frames(&self, order: &[usize]) -> Result<SequenceTensor> {
        ensure!(order.len() == self.frames, "permutation length mismatch");
        let mut seen = vec![false; self.frames];
        let mut data = Vec::with_capacity(self.data.len());
        for &t in order {
            ensure!(t < self.frames && !seen[t], "not a permutation");
            seen[t] = true;
            data.extend_from_slice(self.frame(t));
        }
        Ok(SequenceTensor::from_raw(self.frames, self.width, data))
    }
}

/// `log Σ exp(v)` in max-shifted form.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    ensure!(!values.is_empty(), "logsumexp of an empty list");
    ensure!(
        values.iter().all(|v| v.is_finite() || *v == f64::NEG_INFINITY),
        "logsumexp input must be finite or -inf"
    );
    Ok(lse_unchecked(values))
}

pub(crate) fn lse_unchecked(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
pub(crate) fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn log_softmax_in_place(v: &mut [f64]) {
    let z = lse_unchecked(v);
    for x in v.iter_mut() {
        *x -= z;
    }
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let z = lse_unchecked(v);
    v.iter().map(|x| (x - z).exp()).collect()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 / (1 + e^-x))`, stable for large |x|.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

/// Lowest index of the maximum entry.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
