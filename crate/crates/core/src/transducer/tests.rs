use proptest::prelude::{prop_assert, proptest, ProptestConfig};

use super::*;
use crate::nnet::{bilstm_forward, finite_diff_check, Coords, Rng, SequenceTensor};

/// Sums path probabilities by walking every alignment explicitly, in
/// probability space, with its own softmax.
fn brute_force_logprob(logits: &[f64], frames: usize, target: &[usize], vocab: usize, blank: usize) -> f64 {
    let un = target.len();
    let prob = |t: usize, u: usize, k: usize| {
        let base = (t * (un + 1) + u) * vocab;
        let row = &logits[base..base + vocab];
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        row[k].exp() / z
    };
    fn walk(t: usize, u: usize, frames: usize, un: usize, target: &[usize], blank: usize, prob: &dyn Fn(usize, usize, usize) -> f64) -> f64 {
        let mut total = 0.0;
        if t + 1 < frames {
            total += prob(t, u, blank) * walk(t + 1, u, frames, un, target, blank, prob);
        } else if u == un {
            total += prob(t, u, blank);
        }
        if u < un {
            total += prob(t, u, target[u]) * walk(t, u + 1, frames, un, target, blank, prob);
        }
        total
    }
    walk(0, 0, frames, un, target, blank, &prob).ln()
}

fn count_paths(frames: usize, labels: usize) -> usize {
    fn walk(t: usize, u: usize, frames: usize, un: usize) -> usize {
        let mut n = 0;
        if t + 1 < frames {
            n += walk(t + 1, u, frames, un);
        } else if u == un {
            n += 1;
        }
        if u < un {
            n += walk(t, u + 1, frames, un);
        }
        n
    }
    walk(0, 0, frames, labels)
}

fn random_instance(rng: &mut Rng, frames: usize, labels: usize, vocab: usize) -> (Vec<f64>, Vec<usize>) {
    let logits = (0..frames * (labels + 1) * vocab).map(|_| 2.0 * rng.normal()).collect();
    let target = (0..labels).map(|_| 1 + rng.below(vocab - 1)).collect();
    (logits, target)
}

#[test]
fn single_frame_empty_target() {
    let logits = vec![0.3, -1.2, 2.0];
    let lat = RnntLattice::new(&logits, 1, &[], 3, 0).unwrap();
    let z: f64 = logits.iter().map(|v: &f64| v.exp()).sum();
    assert!((lat.loss() - -(logits[0].exp() / z).ln()).abs() < 1e-14);
    assert_eq!(lat.alpha(0, 0), 0.0);
}

#[test]
fn two_frames_one_label() {
    // Alignments for T=2, U=1 are (label, blank, blank) and (blank, label, blank).
    assert_eq!(count_paths(2, 1), 2);
    let mut rng = Rng::new(4);
    let (logits, target) = random_instance(&mut rng, 2, 1, 4);
    let lat = RnntLattice::new(&logits, 2, &target, 4, 0).unwrap();
    let p = |t: usize, u: usize, k: usize| {
        let row = &logits[(t * 2 + u) * 4..(t * 2 + u) * 4 + 4];
        row[k].exp() / row.iter().map(|v| v.exp()).sum::<f64>()
    };
    let y = target[0];
    let direct = p(0, 0, y) * p(0, 1, 0) * p(1, 1, 0) + p(0, 0, 0) * p(1, 0, y) * p(1, 1, 0);
    assert!((lat.loss() + direct.ln()).abs() < 1e-12);
}

#[test]
fn path_counts_are_binomial() {
    // every alignment ends in a blank, so the count is C(T-1+U, U)
    let binom = |n: usize, k: usize| (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
    for t in 1..=4 {
        for u in 0..=3 {
            assert_eq!(count_paths(t, u), binom(t - 1 + u, u));
        }
    }
}

#[test]
fn rejects_blank_in_target() {
    assert!(RnntLattice::new(&[0.0; 6], 1, &[0], 3, 0).is_err());
    assert!(RnntLattice::new(&[0.0; 5], 1, &[1], 3, 0).is_err());
}

#[test]
fn logit_grads_match_finite_differences() {
    let mut rng = Rng::new(17);
    for (t, u, v) in [(1, 0, 3), (3, 2, 4), (4, 3, 5)] {
        let (logits, target) = random_instance(&mut rng, t, u, v);
        let (_, grad) = rnnt_loss_from_logits(&logits, t, &target, v, 0).unwrap();
        let eps = 1e-5;
        for i in 0..logits.len() {
            let mut lp = logits.clone();
            let mut lm = logits.clone();
            lp[i] += eps;
            lm[i] -= eps;
            let num = (rnnt_loss_from_logits(&lp, t, &target, v, 0).unwrap().0
                - rnnt_loss_from_logits(&lm, t, &target, v, 0).unwrap().0)
                / (2.0 * eps);
            let rel = (grad[i] - num).abs() / grad[i].abs().max(num.abs()).max(1e-8);
            assert!(rel < 1e-4, "({t},{u},{v}) coord {i}: {} vs {num}", grad[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lattice_matches_enumeration(seed in 0u64..u64::MAX, frames in 1usize..=4, labels in 0usize..=3, vocab in 2usize..=5) {
        let mut rng = Rng::new(seed);
        let (logits, target) = random_instance(&mut rng, frames, labels, vocab);
        let lat = RnntLattice::new(&logits, frames, &target, vocab, 0).unwrap();
        let oracle = brute_force_logprob(&logits, frames, &target, vocab, 0);
        prop_assert!((lat.loss() + oracle).abs() < 1e-9);
        prop_assert!(lat.loss() >= -1e-12);
        prop_assert!((lat.total_logprob() - lat.total_logprob_from_beta()).abs() < 1e-10);
    }

    #[test]
    fn occupancy_cuts_sum_to_one(seed in 0u64..u64::MAX, frames in 1usize..=5, labels in 0usize..=4) {
        let vocab = 4;
        let mut rng = Rng::new(seed);
        let (logits, target) = random_instance(&mut rng, frames, labels, vocab);
        let lat = RnntLattice::new(&logits, frames, &target, vocab, 0).unwrap();
        let total = lat.total_logprob();
        for t in 0..frames {
            for u in 0..=labels {
                prop_assert!(lat.alpha(t, u) + lat.beta(t, u) <= total + 1e-9);
            }
        }
        // each path crosses every frame boundary with exactly one blank
        for t in 0..frames {
            let mass: f64 = (0..=labels)
                .map(|u| {
                    let next = if t + 1 < frames { lat.beta(t + 1, u) } else if u == labels { 0.0 } else { f64::NEG_INFINITY };
                    (lat.alpha(t, u) + lat.log_prob(t, u, 0) + next - total).exp()
                })
                .sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
        }
        // ... and emits each label exactly once
        for u in 0..labels {
            let mass: f64 = (0..frames)
                .map(|t| (lat.alpha(t, u) + lat.log_prob(t, u, target[u]) + lat.beta(t, u + 1) - total).exp())
                .sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
        }
    }
}

fn small_dims() -> ModelDims {
    ModelDims {
        input_dim: 3,
        encoder_layers: 2,
        encoder_hidden: 4,
        embed_dim: 3,
        predictor_hidden: 4,
        joint_hidden: 5,
    }
}

fn small_model(seed: u64) -> RnntModel {
    let vocab = Vocab::with_blank(&["a", "b", "c", "d"]).unwrap();
    let mut m = RnntModel::new(small_dims(), vocab, seed).unwrap();
    // jitter biases so no parameter sits at an exact zero
    let mut rng = Rng::new(seed ^ 0xabc);
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        for v in m.params_mut().values_mut(id) {
            *v += 0.1 * rng.normal();
        }
    }
    m
}

fn random_features(seed: u64, frames: usize, width: usize) -> SequenceTensor {
    let mut rng = Rng::new(seed);
    SequenceTensor::new(frames, width, (0..frames * width).map(|_| rng.normal()).collect()).unwrap()
}

#[test]
fn encode_zero_weights_gives_zeros() {
    let mut m = small_model(1);
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        m.params_mut().values_mut(id).fill(0.0);
    }
    let enc = m.encode(&random_features(2, 4, 3)).unwrap();
    assert_eq!(enc.width(), 8);
    assert!(enc.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn encode_is_deterministic_and_composes_layers() {
    let m = small_model(3);
    let x = random_features(4, 4, 3);
    let a = m.encode(&x).unwrap();
    let b = m.encode(&x).unwrap();
    assert_eq!(a, b);
    assert_eq!(m.encode_count(), 2);
    let mut h = x.clone();
    for layer in m.encoder().layers() {
        h = bilstm_forward(layer, m.params(), &h).unwrap();
    }
    assert_eq!(a, h);
    assert!(m.encode(&random_features(4, 4, 2)).is_err());
}

#[test]
fn model_loss_matches_enumeration_of_its_logits() {
    let m = small_model(5);
    let x = random_features(6, 3, 3);
    let target = [2, 4];
    let logits = m.lattice_logits(&x, &target).unwrap();
    let oracle = brute_force_logprob(&logits, 3, &target, 5, 0);
    assert!((m.loss(&x, &target).unwrap() + oracle).abs() < 1e-9);
    assert!(m.loss(&x, &[0]).is_err());
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let mut m = small_model(7);
    let x = random_features(8, 4, 3);
    let target = [1, 3, 2];
    let mut g = m.params().grad_buffer();
    m.loss_and_grad(&x, &target, &mut g).unwrap();
    m.params_mut().accumulate(&g);
    let (dims, vocab) = (m.dims().clone(), m.vocab().clone());
    let report = finite_diff_check(m.params_mut(), 1e-4, Coords::Sample { count: 128, seed: 9 }, |p| {
        RnntModel::from_parts(dims.clone(), vocab.clone(), p.clone())
            .unwrap()
            .loss(&x, &target)
            .unwrap()
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
    assert_eq!(report.checked, 128);
}

#[test]
fn frozen_encoder_gets_no_gradient() {
    let mut m = small_model(10);
    m.params_mut().apply_freeze(&["encoder.*".into()]).unwrap();
    let mut g = m.params().grad_buffer();
    m.loss_and_grad(&random_features(11, 3, 3), &[1], &mut g).unwrap();
    for (id, p) in m.params().iter() {
        let nonzero = g.get(id).iter().any(|&v| v != 0.0);
        assert_eq!(nonzero, !p.name.starts_with("encoder."), "{}", p.name);
    }
}

#[test]
fn greedy_decode_is_bounded_and_deterministic() {
    let m = small_model(12);
    for seed in 0..10 {
        let enc = m.encode(&random_features(seed, 5, 3)).unwrap();
        let a = m.greedy_decode(&enc, 2).unwrap();
        assert!(a.len() <= 10);
        assert!(a.iter().all(|&k| k != 0 && k < 5));
        assert_eq!(a, m.greedy_decode(&enc, 2).unwrap());
    }
    let enc = m.encode(&random_features(0, 5, 3)).unwrap();
    assert!(m.greedy_decode(&enc, 0).is_err());
}

fn utterance(seed: u64) -> TrainingUtterance {
    TrainingUtterance {
        features: random_features(seed, 4, 3),
        target: vec![1, 2],
    }
}

#[test]
fn train_step_freeze_all_is_noop() {
    let mut m = small_model(13);
    let before = m.params().clone();
    train_step(&mut m, &[utterance(1)], 0.1, &["*".into()]).unwrap();
    for ((_, a), (_, b)) in m.params().iter().zip(before.iter()) {
        assert_eq!(a.values, b.values);
    }
}

#[test]
fn train_step_freeze_encoder() {
    let mut m = small_model(14);
    let before = m.params().clone();
    train_step(&mut m, &[utterance(1), utterance(2)], 0.1, &["encoder.*".into()]).unwrap();
    assert_eq!(m.params().checksum("encoder."), before.checksum("encoder."));
    for prefix in ["predictor.", "joint."] {
        assert_ne!(m.params().checksum(prefix), before.checksum(prefix));
    }
}

#[test]
fn small_step_reduces_loss() {
    let base = small_model(15);
    let u = utterance(3);
    let before = base.loss(&u.features, &u.target).unwrap();
    let mut lr = 1e-3;
    let mut improved = false;
    for _ in 0..8 {
        let mut m = base.clone();
        let reported = train_step(&mut m, std::slice::from_ref(&u), lr, &[]).unwrap();
        assert_eq!(reported.to_bits(), before.to_bits());
        if m.loss(&u.features, &u.target).unwrap() < before {
            improved = true;
            break;
        }
        lr /= 4.0;
    }
    assert!(improved);
}

#[test]
fn train_step_contracts() {
    let mut m = small_model(16);
    assert!(train_step(&mut m, &[], 0.1, &[]).is_err());
    assert!(train_step(&mut m, &[utterance(1)], 0.0, &[]).is_err());
}

#[test]
fn non_finite_loss_reports_utterance() {
    let mut m = small_model(17);
    let id = m.params().id("joint.out.bias").unwrap();
    m.params_mut().values_mut(id)[0] = f64::INFINITY;
    let err = train_step(&mut m, &[utterance(1)], 0.1, &[]).unwrap_err();
    assert!(matches!(err, crate::Error::NonFinite { .. }), "{err}");
    assert!(err.to_string().contains("utterance 0"));
}

#[test]
fn checkpoint_round_trip_bit_exact() {
    let mut m = small_model(18);
    m.params_mut().apply_freeze(&["encoder.0.*".into()]).unwrap();
    let mut buf = Vec::new();
    m.write_to(&mut buf).unwrap();
    let back = RnntModel::read_from(&buf[..]).unwrap();
    assert!(back.params() == m.params());
    assert_eq!(back.vocab(), m.vocab());
    let mut again = Vec::new();
    back.write_to(&mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn extend_vocab_keeps_existing_rows() {
    let mut m = small_model(19);
    let x = random_features(20, 3, 3);
    let before = m.lattice_logits(&x, &[1]).unwrap();
    let mut vocab = m.vocab().clone();
    vocab.push_tag("<HAPPY>".into()).unwrap();
    m.extend_vocab(vocab, 5).unwrap();
    assert_eq!(m.vocab().len(), 6);
    let after = m.lattice_logits(&x, &[1]).unwrap();
    for node in 0..before.len() / 5 {
        assert_eq!(&before[node * 5..node * 5 + 5], &after[node * 6..node * 6 + 5]);
    }
    let bad = Vocab::with_blank(&["z"]).unwrap();
    assert!(m.extend_vocab(bad, 1).is_err());
}
