//! Equal error rate from detection trials.
//!
//! The ROC is traced by lowering an acceptance threshold through the sorted
//! scores (accept when `score >= threshold`), giving points
//! `(FAR, FRR)` from `(0, 1)` to `(1, 0)`. The EER is read off the lower
//! convex hull of those points: the hull segment where `FAR - FRR` changes
//! sign is linearly interpolated to the `FAR = FRR` line.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub score: f64,
    pub is_target: bool,
}

impl Trial {
    pub fn new(score: f64, is_target: bool) -> Self {
        Trial { score, is_target }
    }
}

/// Operating points `(FAR, FRR)` for every distinct threshold, including
/// the reject-all start.
pub fn roc_points(trials: &[Trial]) -> Result<Vec<(f64, f64)>> {
    let targets = trials.iter().filter(|t| t.is_target).count();
    let nontargets = trials.len() - targets;
    ensure!(targets > 0, "EER needs at least one target trial");
    ensure!(nontargets > 0, "EER needs at least one non-target trial");
    ensure!(trials.iter().all(|t| t.score.is_finite()), "trial scores must be finite");

    let mut sorted: Vec<&Trial> = trials.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let (nt, nn) = (targets as f64, nontargets as f64);
    let mut points = vec![(0.0, 1.0)];
    let (mut acc_t, mut acc_n) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        while i < sorted.len() && sorted[i].score == s {
            if sorted[i].is_target {
                acc_t += 1;
            } else {
                acc_n += 1;
            }
            i += 1;
        }
        points.push((acc_n as f64 / nn, (targets - acc_t) as f64 / nt));
    }
    Ok(points)
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Lower-left convex hull of ROC points ordered by FAR.
fn lower_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

pub fn eer(trials: &[Trial]) -> Result<f64> {
    let hull = lower_hull(&roc_points(trials)?);
    let mut prev = hull[0];
    for &(far, frr) in &hull {
        let d = far - frr;
        if d == 0.0 {
            return Ok(far);
        }
        if d > 0.0 {
            let dp = prev.0 - prev.1;
            let lambda = -dp / (d - dp);
            return Ok(prev.0 + lambda * (far - prev.0));
        }
        prev = (far, frr);
    }
    unreachable!("hull ends at (1, 0)")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest};

    fn trials(targets: &[f64], nontargets: &[f64]) -> Vec<Trial> {
        targets
            .iter()
            .map(|&s| Trial::new(s, true))
            .chain(nontargets.iter().map(|&s| Trial::new(s, false)))
            .collect()
    }

    #[test]
    fn hand_cases() {
        assert_eq!(eer(&trials(&[0.9, 0.8], &[0.2, 0.1])).unwrap(), 0.0);
        assert_eq!(eer(&trials(&[0.5, 0.5], &[0.5, 0.5, 0.5])).unwrap(), 0.5);
        assert!((eer(&trials(&[0.9, 0.4], &[0.6, 0.1])).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn needs_both_classes() {
        assert!(eer(&trials(&[0.1], &[])).is_err());
        assert!(eer(&trials(&[], &[0.1])).is_err());
        assert!(eer(&trials(&[f64::NAN], &[0.1])).is_err());
    }

    #[test]
    fn reversed_separation_is_chance() {
        // The hull never rises above the chance diagonal.
        assert_eq!(eer(&trials(&[-0.9, -0.8], &[-0.2, -0.1])).unwrap(), 0.5);
    }

    proptest! {
        #[test]
        fn monotone_transform_invariant(
            t in prop::collection::vec(-5.0f64..5.0, 1..15),
            n in prop::collection::vec(-5.0f64..5.0, 1..15),
        ) {
            let base = eer(&trials(&t, &n)).unwrap();
            let f = |x: &f64| (2.0 * x).exp() + 3.0;
            let tt: Vec<f64> = t.iter().map(f).collect();
            let nn: Vec<f64> = n.iter().map(f).collect();
            let moved = eer(&trials(&tt, &nn)).unwrap();
            prop_assert!((base - moved).abs() < 1e-12);
            prop_assert!((0.0..=0.5).contains(&base));
        }
    }
}
