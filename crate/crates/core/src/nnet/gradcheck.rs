use super::params::{ParamId, ParamStore};
use super::rng::Rng;
use crate::error::{ensure, Error, Result};

/// Which coordinates a gradient check perturbs.
#[derive(Clone, Copy, Debug)]
pub enum Coords {
    All,
    /// `count` distinct coordinates drawn uniformly over all parameters.
    Sample { count: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat offset of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares the analytic gradient held in `store`'s grad buffers with central
/// differences of `loss_fn`. Relative error per coordinate is
/// `|a - n| / max(|a|, |n|, 1e-8)`; the maximum is reported.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    eps: f64,
    coords: Coords,
    mut loss_fn: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> f64,
{
    ensure!(eps > 0.0, "finite-difference eps must be positive");
    let layout: Vec<(ParamId, usize)> = store.iter().map(|(id, p)| (id, p.numel())).collect();
    let total: usize = layout.iter().map(|&(_, n)| n).sum();
    let flat: Vec<usize> = match coords {
        Coords::Sample { count, seed } if count < total => {
            let mut all: Vec<usize> = (0..total).collect();
            let mut rng = Rng::new(seed);
            // partial Fisher-Yates
            for i in 0..count {
                let j = i + rng.below(total - i);
                all.swap(i, j);
            }
            all.truncate(count);
            all.sort_unstable();
            all
        }
        _ => (0..total).collect(),
    };

    let locate = |mut k: usize| {
        for &(id, n) in &layout {
            if k < n {
                return (id, k);
            }
            k -= n;
        }
        unreachable!("flat index past end of store")
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for k in flat {
        let (id, off) = locate(k);
        let analytic = store.grad(id)[off];
        let orig = store.values(id)[off];
        store.values_mut(id)[off] = orig + eps;
        let plus = loss_fn(store);
        store.values_mut(id)[off] = orig - eps;
        let minus = loss_fn(store);
        store.values_mut(id)[off] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::non_finite(format!(
                "loss while perturbing {}[{off}]",
                store.get(id).name
            )));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic - numeric).abs() / denom;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel;
            report.worst = Some((store.get(id).name.clone(), off));
        }
        report.checked += 1;
    }
    Ok(report)
}
