use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rntm_core::experiment::{
    duration_sweep, evaluate, filter_languages, lid_examples, pretrain_asr, run_ser_variant, EpochRecord, SerConfig,
    SerVariant, TrainConfig,
};
use rntm_core::lid::{gate_and_decode, train_lid, LidClassifier, LidEpoch, ENCODER_PREFIX};
use rntm_core::metrics::{eer, read_trials, write_eer_summary, write_eval_report, write_trials, Trial, TrialRow};
use rntm_core::synthcorpus::{gen_corpus, gen_duration_test, write_corpus_dir, Corpus, CorpusSpec, Manifest};
use rntm_core::transducer::{RnntModel, DEFAULT_MAX_SYMBOLS_PER_FRAME};
use rntm_core::emotion::extract_emotion;
use serde::Serialize;

use crate::args::{Command, Common};
use crate::config::{sha256_hex, LidVariant, LoadedConfig};
use crate::output::{create, file_sha256, write_csv, Report};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData { common } => gen_data(&common),
        Command::TrainAsr { common } => train_asr(&common),
        Command::TrainSer { common, init, freeze } => train_ser(&common, init.as_deref(), &freeze),
        Command::TrainLid { common, asr } => train_lid_cmd(&common, asr.as_deref()),
        Command::Eval { common, model, split, out } => eval(&common, &model, &split, out.as_deref()),
        Command::Decode {
            model,
            data,
            split,
            out,
            lid,
            expected_lang,
            gate_threshold,
            config,
            seed,
        } => decode(DecodeArgs {
            model: &model,
            data: &data,
            split: &split,
            out: &out,
            lid: lid.as_deref(),
            expected_lang: expected_lang.as_deref(),
            gate_threshold,
            config: config.as_deref(),
            seed,
        }),
        Command::LidEer { common, lid, trials } => lid_eer(&common, &lid, trials.as_deref()),
    }
}

fn load(common: &Common) -> Result<LoadedConfig> {
    LoadedConfig::load(&common.config, common.seed)
}

fn report<'a>(cfg: &'a LoadedConfig, command: &str) -> Report<'a> {
    Report::new(&cfg.config.output_dir, command, &cfg.sha256, Some(cfg.config.seed))
}

struct Data {
    manifest: Manifest,
    corpus: Corpus,
}

impl Data {
    fn spec(&self) -> &CorpusSpec {
        &self.manifest.spec
    }
}

fn load_manifest(dir: &Path) -> Result<Manifest> {
    ensure!(
        dir.join(rntm_core::synthcorpus::MANIFEST_FILE).exists(),
        "no corpus at {} (run gen-data first)",
        dir.display()
    );
    Ok(Manifest::load(dir)?)
}

fn load_data(dir: &Path) -> Result<Data> {
    let manifest = load_manifest(dir)?;
    let corpus = Corpus {
        train: manifest.load_split(dir, "train")?,
        dev: manifest.load_split(dir, "dev")?,
        test: manifest.load_split(dir, "test")?,
    };
    Ok(Data {
        manifest,
        corpus,
    })
}

fn log_epoch(stage: &str) -> impl FnMut(&EpochRecord) + '_ {
    move |r| {
        let emo = r.dev_emotion_accuracy.map_or(String::new(), |a| format!(" dev_emotion_acc={a:.4}"));
        eprintln!(
            "{stage} epoch {}: train_loss={:.4} dev_cer={:.4} dev_wer={:.4}{emo}",
            r.epoch, r.train_loss, r.dev_cer, r.dev_wer
        );
    }
}

fn gen_data(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let c = &cfg.config;
    let spec = c.data.recipe.build(c.seed)?;
    let corpus = gen_corpus(&spec)?;
    let durations = if c.data.durations.is_empty() {
        Vec::new()
    } else {
        gen_duration_test(&spec, &c.data.durations, c.data.duration_count)?
    };
    let dir = c.data_dir();
    let manifest = write_corpus_dir(&dir, &spec, &corpus, &durations)?;
    let mut rep = report(&cfg, "gen-data");
    rep.line(format!("corpus_dir={}", dir.display()));
    for s in &manifest.splits {
        rep.line(format!(
            "split={} utterances={} sha256={}",
            s.name,
            s.utterances,
            file_sha256(&dir.join(&s.file))?
        ));
    }
    rep.finish()
}

fn asr_train_config(cfg: &LoadedConfig) -> TrainConfig {
    TrainConfig {
        seed: cfg.config.stage_seed("asr.shuffle"),
        ..cfg.config.asr.train.clone()
    }
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    train_loss: f64,
    dev_cer: f64,
    dev_wer: f64,
    dev_emotion_accuracy: Option<f64>,
}

fn epoch_rows(records: &[EpochRecord]) -> Vec<EpochRow> {
    records
        .iter()
        .map(|r| EpochRow {
            epoch: r.epoch,
            train_loss: r.train_loss,
            dev_cer: r.dev_cer,
            dev_wer: r.dev_wer,
            dev_emotion_accuracy: r.dev_emotion_accuracy,
        })
        .collect()
}

fn train_asr(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let c = &cfg.config;
    let data = load_data(&c.data_dir())?;
    let n_lang = data.spec().languages.len();
    ensure!(
        c.asr.languages.iter().all(|&l| l < n_lang),
        "asr.languages refers to a language outside 0..{n_lang}"
    );
    let subset = filter_languages(&data.corpus, &c.asr.languages);
    let outcome = pretrain_asr(
        data.spec(),
        &subset,
        &c.model,
        &asr_train_config(&cfg),
        c.stage_seed("asr.model"),
        &mut log_epoch("asr"),
    )?;
    let out = &c.output_dir;
    let ckpt = out.join("asr.ckpt");
    std::fs::create_dir_all(out)?;
    outcome.model.save(&ckpt)?;
    write_csv(&out.join("asr_epochs.csv"), &epoch_rows(&outcome.epochs))?;
    let test = evaluate(&outcome.model, &subset.test, data.spec(), c.asr.train.max_symbols_per_frame)?;
    write_eval_report(create(&out.join("asr_eval_test.csv"))?, &test.rows)?;

    let mut rep = report(&cfg, "train-asr");
    rep.line(format!("best_epoch={} checkpoint={}", outcome.best_epoch, ckpt.display()));
    rep.line(format!("test_cer={:.6} test_wer={:.6}", test.cer, test.wer));
    rep.line(format!("checkpoint_sha256={}", file_sha256(&ckpt)?));
    rep.finish()
}

#[derive(Serialize)]
struct SerSummaryRow {
    variant: String,
    best_epoch: usize,
    test_cer: f64,
    test_wer: f64,
    test_emotion_accuracy: Option<f64>,
    encoder_checksum_before: String,
    encoder_checksum_after: String,
}

fn train_ser(common: &Common, init: Option<&Path>, freeze: &[String]) -> Result<()> {
    let cfg = load(common)?;
    let c = &cfg.config;
    let data = load_data(&c.data_dir())?;
    let spec = data.spec();
    let out = &c.output_dir;
    std::fs::create_dir_all(out)?;
    let mut rep = report(&cfg, "train-ser");

    let base = match init {
        Some(path) => RnntModel::load(path).with_context(|| format!("cannot load {}", path.display()))?,
        None => {
            let pre = pretrain_asr(
                spec,
                &data.corpus,
                &c.model,
                &asr_train_config(&cfg),
                c.stage_seed("asr.model"),
                &mut log_epoch("pretrain"),
            )?;
            pre.model.save(&out.join("ser_pretrained.ckpt"))?;
            write_csv(&out.join("ser_pretrained_epochs.csv"), &epoch_rows(&pre.epochs))?;
            rep.line(format!("pretrain best_epoch={}", pre.best_epoch));
            pre.model
        }
    };

    let mut ser = SerConfig {
        pretrain: c.asr.train.clone(),
        finetune: TrainConfig {
            seed: c.stage_seed("ser.shuffle"),
            ..c.ser.finetune.clone()
        },
        tag_neutral: c.ser.tag_neutral,
        frozen_patterns: c.ser.frozen_patterns.clone(),
        model_seed: c.stage_seed("asr.model"),
        tag_init_seed: c.stage_seed("ser.tags"),
    };
    let runs: Vec<(String, SerVariant)> = if freeze.is_empty() {
        c.ser.variants.iter().map(|v| (v.name().to_string(), *v)).collect()
    } else {
        ser.finetune.freeze.extend(freeze.iter().cloned());
        vec![("tagged".to_string(), SerVariant::Whole)]
    };
    ensure!(!runs.is_empty(), "ser.variants is empty");

    let before = format!("{:016x}", base.params().checksum(ENCODER_PREFIX));
    let mut summary = Vec::new();
    for (name, variant) in runs {
        let run = run_ser_variant(spec, &data.corpus, &base, variant, &ser, &mut log_epoch(&name))?;
        let m = &run.outcome.model;
        m.save(&out.join(format!("ser_{name}.ckpt")))?;
        write_csv(&out.join(format!("ser_{name}_epochs.csv")), &epoch_rows(&run.outcome.epochs))?;
        write_eval_report(create(&out.join(format!("ser_{name}_eval_test.csv")))?, &run.test.rows)?;
        let after = format!("{:016x}", m.params().checksum(ENCODER_PREFIX));
        let emo = run.test.emotion_accuracy.map_or("-".to_string(), |a| format!("{a:.6}"));
        rep.line(format!(
            "variant={name} best_epoch={} test_cer={:.6} test_wer={:.6} test_emotion_accuracy={emo} encoder_checksum_before={before} encoder_checksum_after={after} encoder_unchanged={}",
            run.outcome.best_epoch,
            run.test.cer,
            run.test.wer,
            before == after
        ));
        summary.push(SerSummaryRow {
            variant: name,
            best_epoch: run.outcome.best_epoch,
            test_cer: run.test.cer,
            test_wer: run.test.wer,
            test_emotion_accuracy: run.test.emotion_accuracy,
            encoder_checksum_before: before.clone(),
            encoder_checksum_after: after,
        });
    }
    write_csv(&out.join("ser_summary.csv"), &summary)?;
    rep.finish()
}

fn lid_path(out: &Path, variant: LidVariant) -> PathBuf {
    out.join(format!("lid_{}.ckpt", variant.name()))
}

fn train_lid_cmd(common: &Common, asr: Option<&Path>) -> Result<()> {
    let cfg = load(common)?;
    let c = &cfg.config;
    let data = load_data(&c.data_dir())?;
    let out = &c.output_dir;
    let asr_path = asr.map_or_else(|| out.join("asr.ckpt"), Path::to_path_buf);
    let model = RnntModel::load(&asr_path).with_context(|| format!("cannot load {} (run train-asr first)", asr_path.display()))?;
    ensure!(!c.lid.variants.is_empty(), "lid.variants is empty");
    let examples = lid_examples(&data.corpus.train)?;
    let mut rep = report(&cfg, "train-lid");
    let before = model.params().checksum(ENCODER_PREFIX);
    for &variant in &c.lid.variants {
        let mut clf = LidClassifier::new(
            &model,
            data.spec().language_names(),
            c.lid.dims.clone(),
            variant == LidVariant::Finetune,
            c.stage_seed("lid.model"),
        )?;
        let tc = rntm_core::lid::LidTrainConfig {
            seed: c.stage_seed("lid.train"),
            ..c.lid.train.clone()
        };
        let outcome = train_lid(&mut clf, &examples, &tc, &mut |e: &LidEpoch| {
            eprintln!(
                "lid-{} epoch {}: train_loss={:.4} validation_accuracy={:.4}",
                variant.name(),
                e.epoch,
                e.train_loss,
                e.validation_accuracy
            );
        })?;
        let path = lid_path(out, variant);
        clf.save(&path)?;
        write_csv(&out.join(format!("lid_{}_epochs.csv", variant.name())), &outcome.epochs)?;
        let best = &outcome.epochs[outcome.best_epoch - 1];
        let after = clf.params().checksum(ENCODER_PREFIX);
        rep.line(format!(
            "variant={} best_epoch={} validation_accuracy={:.6} encoder_unchanged={} checkpoint={}",
            variant.name(),
            outcome.best_epoch,
            best.validation_accuracy,
            before == after,
            path.display()
        ));
    }
    rep.finish()
}

fn eval(common: &Common, model_path: &Path, split: &str, out: Option<&Path>) -> Result<()> {
    let cfg = load(common)?;
    let c = &cfg.config;
    let dir = c.data_dir();
    let manifest = load_manifest(&dir)?;
    let utts = manifest.load_split(&dir, split)?;
    let model = RnntModel::load(model_path).with_context(|| format!("cannot load {}", model_path.display()))?;
    let summary = evaluate(&model, &utts, &manifest.spec, c.ser.finetune.max_symbols_per_frame)?;
    let stem = model_path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let out_path = out.map_or_else(|| c.output_dir.join(format!("eval_{stem}_{split}.csv")), Path::to_path_buf);
    write_eval_report(create(&out_path)?, &summary.rows)?;
    let mut rep = report(&cfg, "eval");
    let emo = summary.emotion_accuracy.map_or("-".to_string(), |a| format!("{a:.6}"));
    rep.line(format!(
        "model={} split={split} cer={:.6} wer={:.6} emotion_accuracy={emo} csv={}",
        model_path.display(),
        summary.cer,
        summary.wer,
        out_path.display()
    ));
    rep.finish()
}

struct DecodeArgs<'a> {
    model: &'a Path,
    data: &'a Path,
    split: &'a str,
    out: &'a Path,
    lid: Option<&'a Path>,
    expected_lang: Option<&'a str>,
    gate_threshold: f64,
    config: Option<&'a Path>,
    seed: Option<u64>,
}

fn format_probs(langs: &[String], probs: &[f64]) -> String {
    langs
        .iter()
        .zip(probs)
        .map(|(l, p)| format!("{l}:{p:.6}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn decode(a: DecodeArgs<'_>) -> Result<()> {
    use std::io::Write;
    let manifest = load_manifest(a.data)?;
    let spec = &manifest.spec;
    let utts = manifest.load_split(a.data, a.split)?;
    let model = RnntModel::load(a.model).with_context(|| format!("cannot load {}", a.model.display()))?;
    let n = spec.symbols.len();
    let v = model.vocab();
    ensure!(
        v.len() > n && v.symbols()[1..=n] == spec.symbols[..],
        "model vocabulary is incompatible with the corpus symbol table"
    );
    ensure!(
        v.symbols().iter().all(|s| !s.contains('\t') && !s.contains('\n')),
        "vocabulary symbols may not contain tabs or newlines"
    );
    let clf = a
        .lid
        .map(|p| LidClassifier::load(p).with_context(|| format!("cannot load {}", p.display())))
        .transpose()?;
    if let Some(clf) = &clf {
        ensure!(
            clf.shares_encoder_with(&model),
            "language-ID classifier was not trained on this model's encoder"
        );
    }

    let mut w = create(a.out)?;
    let mut accepted = 0usize;
    for u in &utts {
        let x = u.to_tensor()?;
        let (text, probs) = match (&clf, a.expected_lang) {
            (Some(clf), Some(lang)) => {
                let g = gate_and_decode(&x, &model, clf, lang, a.gate_threshold, DEFAULT_MAX_SYMBOLS_PER_FRAME)?;
                let probs = format_probs(clf.languages(), &g.probs);
                match g.transcript {
                    Some(ids) => (Some(ids), probs),
                    None => {
                        writeln!(w, "{}\t<REJECTED:{}>\t-\t{probs}", u.utt_id, g.top_lang)?;
                        continue;
                    }
                }
            }
            (clf, _) => {
                let enc = model.encode(&x)?;
                let probs = match clf {
                    Some(clf) => format_probs(clf.languages(), &clf.lid_forward(&enc)?),
                    None => "-".to_string(),
                };
                (Some(model.greedy_decode(&enc, DEFAULT_MAX_SYMBOLS_PER_FRAME)?), probs)
            }
        };
        let ids = text.expect("transcript present");
        accepted += 1;
        writeln!(
            w,
            "{}\t{}\t{}\t{probs}",
            u.utt_id,
            v.render(&ids),
            extract_emotion(&ids, v)
        )?;
    }
    w.flush()?;

    let (dir, hash, seed) = match a.config {
        Some(p) => {
            let cfg = LoadedConfig::load(p, a.seed)?;
            (cfg.config.output_dir.clone(), cfg.sha256, Some(cfg.config.seed))
        }
        None => {
            let args: Vec<String> = std::env::args().skip(1).collect();
            let dir = a.out.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            (dir, sha256_hex(args.join("\u{1f}").as_bytes()), a.seed)
        }
    };
    let mut rep = Report::new(&dir, "decode", &hash, seed);
    rep.line(format!(
        "model={} split={} utterances={} accepted={accepted} out={} sha256={}",
        a.model.display(),
        a.split,
        utts.len(),
        a.out.display(),
        file_sha256(a.out)?
    ));
    rep.finish()
}

fn lid_eer(common: &Common, lids: &[PathBuf], trials: Option<&Path>) -> Result<()> {
    let cfg = load(common)?;
    let c = &cfg.config;
    let mut rep = report(&cfg, "lid-eer");
    if let Some(path) = trials {
        let f = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let rows = read_trials(f)?;
        let t: Vec<Trial> = rows.iter().map(|r| Trial::new(r.score, r.is_target == 1)).collect();
        rep.line(format!("trials={} eer={:.6}", path.display(), eer(&t)?));
        return rep.finish();
    }

    let dir = c.data_dir();
    let manifest = load_manifest(&dir)?;
    let sets = manifest
        .duration_sets()
        .map(|s| Ok((s.duration.expect("duration set"), manifest.load_split(&dir, &s.name)?)))
        .collect::<Result<Vec<_>>>()?;
    if sets.is_empty() {
        bail!("corpus has no duration test sets (set data.durations and rerun gen-data)");
    }
    let out = &c.output_dir;
    let checkpoints: Vec<(String, PathBuf)> = if lids.is_empty() {
        c.lid.variants.iter().map(|&v| (v.name().to_string(), lid_path(out, v))).collect()
    } else {
        lids.iter()
            .map(|p| (p.file_stem().and_then(|s| s.to_str()).unwrap_or("lid").to_string(), p.clone()))
            .collect()
    };
    for (name, path) in checkpoints {
        let clf = LidClassifier::load(&path).with_context(|| format!("cannot load {} (run train-lid first)", path.display()))?;
        let results = duration_sweep(&clf, &sets)?;
        let mut summary = Vec::new();
        for (r, (_, utts)) in results.iter().zip(&sets) {
            let langs = clf.languages();
            let rows: Vec<TrialRow> = utts
                .iter()
                .flat_map(|u| (0..langs.len()).map(move |l| (u, l)))
                .zip(&r.trials)
                .map(|((u, l), t)| TrialRow {
                    utt_id: u.utt_id.clone(),
                    lang: langs[l].clone(),
                    score: t.score,
                    is_target: u8::from(t.is_target),
                })
                .collect();
            write_trials(create(&out.join(format!("lid_trials_{name}_{}.csv", r.frames)))?, &rows)?;
            rep.line(format!(
                "classifier={name} duration_frames={} eer={:.6} accuracy={:.6}",
                r.frames, r.eer, r.accuracy
            ));
            summary.push((r.frames, r.eer));
        }
        write_eer_summary(create(&out.join(format!("lid_eer_{name}.csv")))?, &summary)?;
    }
    rep.finish()
}
