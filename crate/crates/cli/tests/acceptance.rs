//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Result};
use rntm_core::emotion::{augment_target, extend_vocab, extract_emotion, strip_tags, tag_id, EmotionLabel};
use rntm_core::experiment::{duration_sweep, filter_languages, lid_examples, pretrain_asr, run_ser, SerConfig, TrainConfig};
use rntm_core::lid::{gate_and_decode, train_lid, LidClassifier, LidDims, LidTrainConfig, PoolingHead};
use rntm_core::metrics::{edit_distance, eer, Trial};
use rntm_core::nnet::{finite_diff_check, BiLstm, Coords, GradBuffer, Init, Linear, LstmCell, LstmState, ParamStore, Rng, SequenceTensor};
use rntm_core::synthcorpus::{gen_corpus, gen_duration_test, CorpusRecipe};
use rntm_core::transducer::{rnnt_loss_from_logits, ModelDims, RnntModel, Vocab};

type Check = (&'static str, fn() -> Result<String>);

fn main() {
    let checks: [Check; 9] = [
        ("transducer loss matches path enumeration", rnnt_oracle),
        ("gradients match finite differences", gradient_suite),
        ("pooling properties", pooling_properties),
        ("emotion tag round trip", emotion_round_trip),
        ("emotion recognition end to end", ser_end_to_end),
        ("language identification end to end", lid_end_to_end),
        ("gating encodes once", gating_encodes_once),
        ("metrics oracles", metrics_oracles),
        ("command reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(anyhow::anyhow!("panic: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}; {secs:.1}s)", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({e:#}; {secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(start: Instant, budget: Duration, what: &str) -> Result<()> {
    let spent = start.elapsed();
    ensure!(spent <= budget, "{what} took {spent:?}, budget {budget:?}");
    Ok(())
}

fn random_seq(rng: &mut Rng, frames: usize, width: usize) -> SequenceTensor {
    SequenceTensor::new(frames, width, (0..frames * width).map(|_| rng.normal()).collect()).unwrap()
}

/// Log-probability of the target summed over every alignment, enumerated one
/// path at a time.
fn enumerate_paths(logits: &[f64], frames: usize, target: &[usize], vocab: usize, blank: usize) -> f64 {
    let un = target.len();
    let logp = |t: usize, u: usize, k: usize| {
        let row = &logits[(t * (un + 1) + u) * vocab..][..vocab];
        row[k] - row.iter().map(|v| v.exp()).sum::<f64>().ln()
    };
    let mut path_scores = Vec::new();
    let mut stack = vec![(0usize, 0usize, 0.0f64)];
    while let Some((t, u, acc)) = stack.pop() {
        if u < un {
            stack.push((t, u + 1, acc + logp(t, u, target[u])));
        }
        if t + 1 < frames {
            stack.push((t + 1, u, acc + logp(t, u, blank)));
        } else if u == un {
            path_scores.push(acc + logp(t, u, blank));
        }
    }
    path_scores.iter().map(|s| s.exp()).sum::<f64>().ln()
}

fn rnnt_oracle() -> Result<String> {
    let start = Instant::now();
    let mut rng = Rng::new(2024);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let frames = 1 + rng.below(4);
        let labels = rng.below(4);
        let vocab = 2 + rng.below(4);
        let blank = rng.below(vocab);
        let logits: Vec<f64> = (0..frames * (labels + 1) * vocab).map(|_| 2.0 * rng.normal()).collect();
        let target: Vec<usize> = (0..labels)
            .map(|_| {
                let k = rng.below(vocab - 1);
                if k >= blank {
                    k + 1
                } else {
                    k
                }
            })
            .collect();
        let (loss, _) = rnnt_loss_from_logits(&logits, frames, &target, vocab, blank)?;
        let diff = (loss + enumerate_paths(&logits, frames, &target, vocab, blank)).abs();
        worst = worst.max(diff);
    }
    ensure!(worst < 1e-9, "max deviation {worst:e}");
    within(start, Duration::from_secs(10), "200 instances")?;
    Ok(format!("200 instances, max deviation {worst:.1e}"))
}

fn jitter(store: &mut ParamStore, rng: &mut Rng, scale: f64) {
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.values_mut(id) {
            *v += scale * rng.normal();
        }
    }
}

/// Loads `grads` into the store, then compares against central differences on
/// at least 64 coordinates.
fn check_layer(store: &mut ParamStore, grads: &GradBuffer, seed: u64, loss: impl FnMut(&ParamStore) -> f64) -> Result<f64> {
    ensure!(store.numel() >= 64, "layer under test has only {} parameters", store.numel());
    store.zero_grad();
    store.accumulate(grads);
    let report = finite_diff_check(store, 1e-4, Coords::Sample { count: 64, seed }, loss)?;
    ensure!(report.checked >= 64, "only {} coordinates checked", report.checked);
    Ok(report.max_rel_error)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gradient_suite() -> Result<String> {
    let start = Instant::now();
    let mut rng = Rng::new(77);
    let mut results: Vec<(&str, f64)> = Vec::new();

    {
        let mut s = ParamStore::new();
        let lin = Linear::new(&mut s, &mut Init::Random(&mut rng), "lin", 9, 7, true)?;
        jitter(&mut s, &mut rng, 0.2);
        let x: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
        let r: Vec<f64> = (0..7).map(|_| rng.normal()).collect();
        let mut g = s.grad_buffer();
        lin.backward(&s, &x, &r, &mut g, None);
        results.push(("linear", check_layer(&mut s, &g, 1, |p| dot(&lin.forward(p, &x), &r))?));
    }
    {
        let mut s = ParamStore::new();
        let cell = LstmCell::new(&mut s, &mut Init::Random(&mut rng), "cell", 4, 5)?;
        jitter(&mut s, &mut rng, 0.3);
        let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let st = LstmState {
            h: (0..5).map(|_| 0.5 * rng.normal()).collect(),
            c: (0..5).map(|_| rng.normal()).collect(),
        };
        let rh: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let rc: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let (_, cache) = cell.step(&s, &x, &st);
        let mut g = s.grad_buffer();
        cell.step_backward(&s, &cache, &rh, &rc, &mut g);
        let err = check_layer(&mut s, &g, 2, |p| {
            let (n, _) = cell.step(p, &x, &st);
            dot(&n.h, &rh) + dot(&n.c, &rc)
        })?;
        results.push(("lstm", err));
    }
    {
        let mut s = ParamStore::new();
        let layer = BiLstm::new(&mut s, &mut Init::Random(&mut rng), "bi", 3, 4)?;
        jitter(&mut s, &mut rng, 0.3);
        let x = random_seq(&mut rng, 5, 3);
        let r = random_seq(&mut rng, 5, 8);
        let (_, cache) = layer.forward(&s, &x);
        let mut g = s.grad_buffer();
        layer.backward(&s, &cache, &r, &mut g);
        let err = check_layer(&mut s, &g, 3, |p| dot(layer.forward(p, &x).0.as_slice(), r.as_slice()))?;
        results.push(("bilstm", err));
    }
    {
        let mut s = ParamStore::new();
        let head = PoolingHead::new(&mut s, &mut Init::Random(&mut rng), "pool", 6, 3, 4)?;
        jitter(&mut s, &mut rng, 0.2);
        let x = random_seq(&mut rng, 6, 6);
        let r: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let (_, cache) = head.forward(&s, &x);
        let mut g = s.grad_buffer();
        head.backward(&s, &x, &cache, &r, &mut g);
        results.push(("pooling", check_layer(&mut s, &g, 4, |p| dot(&head.forward(p, &x).0, &r))?));
    }

    let dims = ModelDims {
        input_dim: 4,
        encoder_layers: 2,
        encoder_hidden: 4,
        embed_dim: 3,
        predictor_hidden: 4,
        joint_hidden: 5,
    };
    let vocab = Vocab::with_blank(&["a", "b", "c", "d"])?;
    let mut model = RnntModel::new(dims.clone(), vocab.clone(), 5)?;
    jitter(model.params_mut(), &mut rng, 0.1);
    {
        let x = random_seq(&mut rng, 4, 4);
        let target = [1, 3, 2];
        let mut g = model.params().grad_buffer();
        model.loss_and_grad(&x, &target, &mut g)?;
        let err = check_layer(model.params_mut(), &g, 5, |p| {
            RnntModel::from_parts(dims.clone(), vocab.clone(), p.clone())
                .and_then(|m| m.loss(&x, &target))
                .unwrap()
        })?;
        results.push(("transducer", err));
    }
    {
        let lid_dims = LidDims {
            bilstm_hidden: 4,
            heads: 2,
            head_dim: 3,
        };
        let mut clf = LidClassifier::new(&model, vec!["L0".into(), "L1".into(), "L2".into()], lid_dims, true, 6)?;
        let x = random_seq(&mut rng, 5, 4);
        let mut g = clf.params().grad_buffer();
        clf.loss_and_grad(&x, 2, &mut g)?;
        let probe = clf.clone();
        let err = check_layer(clf.params_mut(), &g, 6, |p| {
            let mut c = probe.clone();
            *c.params_mut() = p.clone();
            -c.lid_forward(&c.encode(&x).unwrap()).unwrap()[2].ln()
        })?;
        results.push(("lid classifier", err));
    }

    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let summary: Vec<String> = results.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    ensure!(worst < 1e-4, "max relative error {worst:e}: {}", summary.join(", "));
    within(start, Duration::from_secs(60), "gradient suite")?;
    Ok(format!("64 coordinates each: {}", summary.join(", ")))
}

fn pooling_properties() -> Result<String> {
    const TRIALS: usize = 1000;
    let mut rng = Rng::new(31);
    let mut worst_perm = 0.0f64;
    let mut worst_shift = 0.0f64;
    let mut worst_mean = 0.0f64;
    for trial in 0..TRIALS {
        let d = 1 + rng.below(5);
        let heads = 1 + rng.below(3);
        let head_dim = 1 + rng.below(3);
        let frames = 1 + rng.below(8);
        let mut s = ParamStore::new();
        let head = PoolingHead::new(&mut s, &mut Init::Random(&mut rng), "p", d, heads, head_dim)?;
        jitter(&mut s, &mut rng, 0.5);
        let x = random_seq(&mut rng, frames, d);
        let y = head.pool(&s, &x)?;
        ensure!(y.iter().all(|&v| v >= 0.0), "negative output in trial {trial}");

        let mut order: Vec<usize> = (0..frames).collect();
        rng.shuffle(&mut order);
        let yp = head.pool(&s, &x.permute_frames(&order)?)?;
        worst_perm = y.iter().zip(&yp).map(|(a, b)| (a - b).abs()).fold(worst_perm, f64::max);

        let mut w = head.weights(&s, &x)?;
        let values = head.values(&s, &x)?;
        let shifts: Vec<f64> = (0..heads).map(|_| rng.uniform_range(-20.0, 20.0)).collect();
        for t in 0..frames {
            for (v, c) in w.frame_mut(t).iter_mut().zip(&shifts) {
                *v += c;
            }
        }
        let ys = rntm_core::lid::pool_weighted(&w, &values)?;
        worst_shift = y.iter().zip(&ys).map(|(a, b)| (a - b).abs()).fold(worst_shift, f64::max);

        let single = x.slice_frames(0, 1)?;
        let y1 = head.pool(&s, &single)?;
        let relu: Vec<f64> = head.values(&s, &single)?.frame(0).to_vec();
        ensure!(y1 == relu, "single-frame output differs from its values in trial {trial}");

        let flat = SequenceTensor::new(frames, heads, vec![rng.normal(); frames * heads])?;
        let ym = rntm_core::lid::pool_weighted(&flat, &values)?;
        for (i, v) in ym.iter().enumerate() {
            let mean = (0..frames).map(|t| values.frame(t)[i]).sum::<f64>() / frames as f64;
            worst_mean = worst_mean.max((v - mean).abs());
        }
    }
    ensure!(worst_perm <= 1e-12, "permutation deviation {worst_perm:e}");
    ensure!(worst_shift <= 1e-12, "shift deviation {worst_shift:e}");
    ensure!(worst_mean <= 1e-12, "uniform-weight deviation {worst_mean:e}");
    Ok(format!(
        "{TRIALS} trials; permutation {worst_perm:.1e}, shift {worst_shift:.1e}, uniform mean {worst_mean:.1e}"
    ))
}

fn emotion_round_trip() -> Result<String> {
    let chars: Vec<String> = (b'a'..=b'h').map(|c| (c as char).to_string()).collect();
    let base = Vocab::with_blank(&chars)?;
    let emotions = EmotionLabel::default_set();
    let vocab = extend_vocab(&base, &emotions)?;
    let char_ids: Vec<usize> = vocab.char_ids().collect();
    let mut rng = Rng::new(404);
    let mut cases = 0;
    for label in &emotions {
        for _ in 0..100 {
            let len = rng.below(12);
            let tokens: Vec<usize> = (0..len).map(|_| char_ids[rng.below(char_ids.len())]).collect();
            let augmented = augment_target(&tokens, label, &vocab)?;
            ensure!(augmented.len() == tokens.len() + 1, "augmented length");
            ensure!(&extract_emotion(&augmented, &vocab) == label, "round trip lost {label}");
            ensure!(strip_tags(&augmented, &vocab) == tokens, "tag stripping changed the transcript");
            cases += 1;
        }
    }
    let id = |name: &str| tag_id(&vocab, &EmotionLabel::new(name).unwrap()).unwrap();
    let (a, b) = (char_ids[0], char_ids[1]);
    ensure!(
        extract_emotion(&[a, id("SAD"), b, id("HAPPY")], &vocab) == EmotionLabel::happy(),
        "last tag rule"
    );
    ensure!(extract_emotion(&[a, b], &vocab) == EmotionLabel::neutral(), "neutral fallback");
    ensure!(extract_emotion(&[], &vocab) == EmotionLabel::neutral(), "empty sequence");
    Ok(format!("{cases} round trips, last-tag and fallback cases exact"))
}

fn ser_end_to_end() -> Result<String> {
    let start = Instant::now();
    let spec = CorpusRecipe::default().build(1)?;
    let corpus = gen_corpus(&spec)?;
    let report = run_ser(&spec, &corpus, &ModelDims::default(), &SerConfig::default(), &mut |_, _| {})?;
    let whole = report.whole.test.emotion_accuracy.unwrap_or(0.0);
    let frozen = report.frozen.test.emotion_accuracy.unwrap_or(0.0);
    let (whole_wer, base_wer) = (report.whole.test.wer, report.baseline.test.wer);
    let detail = format!(
        "whole accuracy {whole:.3}, frozen accuracy {frozen:.3}, WER whole {whole_wer:.4} vs baseline {base_wer:.4}"
    );
    ensure!(whole >= 0.9, "{detail}");
    ensure!(whole_wer <= base_wer, "{detail}");
    ensure!(frozen <= whole, "{detail}");
    within(start, Duration::from_secs(600), "emotion experiment")?;
    Ok(detail)
}

fn lid_end_to_end() -> Result<String> {
    let start = Instant::now();
    let spec = CorpusRecipe::default().build(2)?;
    let corpus = gen_corpus(&spec)?;
    let asr_cfg = TrainConfig {
        epochs: 12,
        seed: 3,
        ..TrainConfig::default()
    };
    let asr = pretrain_asr(&spec, &filter_languages(&corpus, &[0]), &ModelDims::default(), &asr_cfg, 4, &mut |_| {})?;
    let mut clf = LidClassifier::new(&asr.model, spec.language_names(), LidDims::default(), false, 5)?;
    let lid_cfg = LidTrainConfig {
        seed: 6,
        ..LidTrainConfig::default()
    };
    train_lid(&mut clf, &lid_examples(&corpus.train)?, &lid_cfg, &mut |_| {})?;
    ensure!(clf.shares_encoder_with(&asr.model), "frozen training changed the encoder");
    let sets = gen_duration_test(&spec, &[10, 30, 100, 300], 100)?;
    let sweep = duration_sweep(&clf, &sets)?;

    let eers: Vec<f64> = sweep.iter().map(|r| r.eer).collect();
    let acc100 = sweep.iter().find(|r| r.frames == 100).map(|r| r.accuracy).unwrap_or(0.0);
    let detail = format!(
        "accuracy@100 {acc100:.3}, EER {}",
        sweep.iter().map(|r| format!("{}:{:.4}", r.frames, r.eer)).collect::<Vec<_>>().join(" ")
    );
    ensure!(acc100 >= 0.95, "{detail}");
    ensure!(eers.windows(2).all(|w| w[1] <= w[0]), "EER increases with duration: {detail}");
    ensure!(eers[3] <= 0.02, "{detail}");
    within(start, Duration::from_secs(300), "language identification experiment")?;
    Ok(detail)
}

fn gating_encodes_once() -> Result<String> {
    let recipe = CorpusRecipe {
        counts: rntm_core::synthcorpus::SplitCounts { train: 0, dev: 0, test: 30 },
        ..CorpusRecipe::default()
    };
    let spec = recipe.build(9)?;
    let corpus = gen_corpus(&spec)?;
    let dims = ModelDims {
        encoder_layers: 1,
        encoder_hidden: 8,
        ..ModelDims::default()
    };
    let model = RnntModel::new(dims, rntm_core::experiment::asr_vocab(&spec)?, 1)?;
    let clf = LidClassifier::new(&model, spec.language_names(), LidDims::default(), false, 2)?;
    let mut calls = 0;
    let mut accepted = 0;
    for u in &corpus.test {
        let x = u.to_tensor()?;
        for threshold in [0.0, 0.4, 1.0] {
            let before = model.encode_count();
            let r = gate_and_decode(&x, &model, &clf, "L0", threshold, 4)?;
            ensure!(model.encode_count() == before + 1, "{} encodes for {}", model.encode_count() - before, u.utt_id);
            ensure!(r.accepted == r.transcript.is_some(), "transcript present iff accepted");
            accepted += r.accepted as usize;
            calls += 1;
        }
    }
    Ok(format!("{calls} gated calls ({accepted} accepted), one encode each"))
}

fn levenshtein_oracle(a: &[u8], b: &[u8], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len() + b.len();
    }
    if let Some(&d) = memo.get(&(a.len(), b.len())) {
        return d;
    }
    let sub = levenshtein_oracle(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
    let del = levenshtein_oracle(&a[1..], b, memo) + 1;
    let ins = levenshtein_oracle(a, &b[1..], memo) + 1;
    let d = sub.min(del).min(ins);
    memo.insert((a.len(), b.len()), d);
    d
}

fn all_strings(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<u8>| {
                (0..3u8).map(move |c| {
                    let mut n = s.clone();
                    n.push(c);
                    n
                })
            })
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn metrics_oracles() -> Result<String> {
    let strings = all_strings(6);
    let mut pairs = 0usize;
    let mut memo = HashMap::new();
    for a in &strings {
        for b in &strings {
            memo.clear();
            let want = levenshtein_oracle(a, b, &mut memo);
            let (got, counts) = edit_distance(a, b);
            if got != want || counts.errors() != got {
                bail!("edit_distance({a:?}, {b:?}) = {got} (alignment {}), oracle {want}", counts.errors());
            }
            pairs += 1;
        }
    }

    let trials = |targets: &[f64], others: &[f64]| -> Vec<Trial> {
        targets
            .iter()
            .map(|&s| Trial::new(s, true))
            .chain(others.iter().map(|&s| Trial::new(s, false)))
            .collect()
    };
    let cases = [
        (trials(&[0.9, 0.8, 0.7], &[0.3, 0.2]), 0.0),
        (trials(&[0.5, 0.5], &[0.5, 0.5, 0.5]), 0.5),
        (trials(&[0.9, 0.4], &[0.6, 0.1]), 0.25),
    ];
    for (t, want) in &cases {
        let got = eer(t)?;
        ensure!((got - want).abs() <= 1e-12, "EER {got} expected {want}");
    }
    Ok(format!("{pairs} string pairs, {} EER hand cases", cases.len()))
}

const REPRO_CONFIG: &str = r#"{
  "seed": 11,
  "output_dir": "out",
  "data": {
    "recipe": { "counts": { "train": 30, "dev": 6, "test": 8 }, "symbols_per_utterance": [3, 6] },
    "durations": [10, 30],
    "duration_count": 8
  },
  "model": { "input_dim": 16, "encoder_layers": 1, "encoder_hidden": 8, "embed_dim": 6, "predictor_hidden": 8, "joint_hidden": 8 },
  "asr": { "train": { "epochs": 2, "batch_size": 4 } },
  "ser": { "finetune": { "epochs": 2, "batch_size": 4 } },
  "lid": { "dims": { "bilstm_hidden": 4, "heads": 2, "head_dim": 3 }, "train": { "epochs": 2 }, "variants": ["frozen", "finetune"] }
}"#;

/// Runs every subcommand in `dir` and returns the produced files (minus the
/// human-readable report) keyed by relative path.
fn run_pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    std::fs::write(dir.join("config.json"), REPRO_CONFIG)?;
    let steps: &[&[&str]] = &[
        &["gen-data"],
        &["train-asr"],
        &["train-ser"],
        &["train-lid"],
        &["lid-eer"],
        &["eval", "--model", "out/ser_whole.ckpt"],
        &["decode", "--model", "out/ser_whole.ckpt", "--data", "out/data", "--out", "out/decode.tsv"],
        &[
            "decode", "--model", "out/asr.ckpt", "--data", "out/data", "--split", "dur30", "--lid",
            "out/lid_frozen.ckpt", "--expected-lang", "L0", "--out", "out/gated.tsv",
        ],
    ];
    for step in steps {
        let mut args: Vec<&str> = step.to_vec();
        if step[0] != "decode" {
            args.extend(["--config", "config.json"]);
        }
        let out = Command::new(env!("CARGO_BIN_EXE_rntm")).args(&args).current_dir(dir).output()?;
        ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let mut files = Vec::new();
    let mut stack = vec![dir.join("out")];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "report.txt") {
                files.push((path.strip_prefix(dir)?.display().to_string(), std::fs::read(&path)?));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn reproducibility() -> Result<String> {
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    let first = run_pipeline(a.path())?;
    let second = run_pipeline(b.path())?;
    let names = |f: &[(String, Vec<u8>)]| f.iter().map(|x| x.0.clone()).collect::<Vec<_>>();
    ensure!(names(&first) == names(&second), "different file sets: {:?} vs {:?}", names(&first), names(&second));
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure!(x == y, "{name} differs between runs");
    }
    let count = |ext: &str| first.iter().filter(|f| f.0.ends_with(ext)).count();
    ensure!(count(".ckpt") >= 6 && count(".csv") >= 10, "pipeline produced too few artifacts");
    Ok(format!(
        "{} files identical across two runs ({} checkpoints, {} CSV)",
        first.len(),
        count(".ckpt"),
        count(".csv")
    ))
}
