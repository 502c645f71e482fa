use std::collections::HashMap;

use regex::Regex;

use super::rng::Rng;
use crate::error::{ensure, Error, Result};

/// Handle to an entry of a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// One named parameter tensor and its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub frozen: bool,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.values.len()
    }
}

/// How a freshly created parameter is filled.
#[derive(Clone, Copy, Debug)]
pub enum InitKind {
    /// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); shape must be `[fan_out, fan_in]`.
    Glorot,
    Zeros,
    /// LSTM gate bias laid out `[i, f, g, o]`; forget block set to +1.
    LstmBias { hidden: usize },
}

/// Either creates parameters with random values or binds to ones already in
/// the store (after loading a checkpoint). Layer constructors take one of
/// these so building and binding share the same naming code.
pub enum Init<'a> {
    Random(&'a mut Rng),
    Bind,
}

impl Init<'_> {
    pub fn param(
        &mut self,
        store: &mut ParamStore,
        name: &str,
        shape: &[usize],
        kind: InitKind,
    ) -> Result<ParamId> {
        match self {
            Init::Random(rng) => {
                let numel = shape.iter().product();
                let values = match kind {
                    InitKind::Glorot => {
                        ensure!(shape.len() == 2, "glorot init needs a matrix for {name}");
                        let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                        (0..numel).map(|_| rng.uniform_range(-a, a)).collect()
                    }
                    InitKind::Zeros => vec![0.0; numel],
                    InitKind::LstmBias { hidden } => {
                        ensure!(numel == 4 * hidden, "lstm bias {name} must have 4*hidden entries");
                        let mut v = vec![0.0; numel];
                        v[hidden..2 * hidden].fill(1.0);
                        v
                    }
                };
                store.add(name, shape, values)
            }
            Init::Bind => {
                let id = store
                    .id(name)
                    .ok_or_else(|| Error::contract(format!("missing parameter {name}")))?;
                ensure!(
                    store.get(id).shape == shape,
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    store.get(id).shape
                );
                Ok(id)
            }
        }
    }
}

/// Gradient accumulator shaped like a store; lets workers compute per-utterance
/// gradients privately before a fixed-order reduction.
#[derive(Clone, Debug)]
pub struct GradBuffer {
    bufs: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.bufs[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.bufs[id.0]
    }

    pub fn add_assign(&mut self, other: &GradBuffer) {
        for (a, b) in self.bufs.iter_mut().zip(&other.bufs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Euclidean norm over every buffer.
    pub fn norm(&self) -> f64 {
        self.bufs.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for buf in &mut self.bufs {
            for x in buf.iter_mut() {
                *x *= factor;
            }
        }
    }
}

/// Named, shaped parameters with gradients and freeze flags. Iteration order is
/// insertion order, which is also the checkpoint order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Param>,
    index: HashMap<String, usize>,
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<ParamId> {
        ensure!(!self.index.contains_key(name), "duplicate parameter {name}");
        let numel: usize = shape.iter().product();
        ensure!(
            values.len() == numel,
            "parameter {name}: {} values for shape {shape:?}",
            values.len()
        );
        let id = self.entries.len();
        self.entries.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            grad: vec![0.0; numel],
            values,
            frozen: false,
        });
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    /// Replaces an entry's shape and values in place; gradient is reset.
    pub fn replace(&mut self, id: ParamId, shape: &[usize], values: Vec<f64>) -> Result<()> {
        let numel: usize = shape.iter().product();
        let p = &mut self.entries[id.0];
        ensure!(values.len() == numel, "parameter {}: bad replacement size", p.name);
        p.shape = shape.to_vec();
        p.grad = vec![0.0; numel];
        p.values = values;
        Ok(())
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].values
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].values
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].grad
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(Param::numel).sum()
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.entries[id.0].frozen = frozen;
    }

    /// Sets every entry's frozen flag to whether its name matches any pattern.
    /// Returns how many entries ended up frozen.
    pub fn apply_freeze(&mut self, patterns: &[String]) -> Result<usize> {
        let compiled = patterns
            .iter()
            .map(|p| compile_pattern(p))
            .collect::<Result<Vec<_>>>()?;
        let mut count = 0;
        for p in &mut self.entries {
            p.frozen = compiled.iter().any(|re| re.is_match(&p.name));
            count += p.frozen as usize;
        }
        Ok(count)
    }

    pub fn grad_buffer(&self) -> GradBuffer {
        GradBuffer {
            bufs: self.entries.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn accumulate(&mut self, grads: &GradBuffer) {
        for (p, g) in self.entries.iter_mut().zip(&grads.bufs) {
            for (a, b) in p.grad.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.entries {
            p.grad.fill(0.0);
        }
    }

    /// Plain SGD on unfrozen entries, then clears all gradients.
    pub fn sgd_step(&mut self, lr: f64) {
        for p in &mut self.entries {
            if !p.frozen {
                for (v, g) in p.values.iter_mut().zip(&p.grad) {
                    *v -= lr * g;
                }
            }
            p.grad.fill(0.0);
        }
    }

    /// FNV-1a over names, shapes and value bits of entries whose name starts
    /// with `prefix` (empty prefix covers everything).
    pub fn checksum(&self, prefix: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for p in self.entries.iter().filter(|p| p.name.starts_with(prefix)) {
            eat(p.name.as_bytes());
            for &d in &p.shape {
                eat(&(d as u64).to_le_bytes());
            }
            for v in &p.values {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Copies entries whose names start with `prefix` from `other`, adding
    /// them to this store. Fails on name collisions.
    pub fn copy_prefix_from(&mut self, other: &ParamStore, prefix: &str) -> Result<()> {
        for p in other.entries.iter().filter(|p| p.name.starts_with(prefix)) {
            self.add(&p.name, &p.shape, p.values.clone())?;
        }
        Ok(())
    }
}

/// Glob-style name pattern: `*` matches any run of characters, everything else is literal.
fn compile_pattern(pattern: &str) -> Result<Regex> {
    let body = pattern
        .split('*')
        .map(regex::escape)
        .collect::<Vec<_>>()
        .join(".*");
    Regex::new(&format!("^{body}$"))
        .map_err(|e| Error::contract(format!("bad freeze pattern {pattern:?}: {e}")))
}
