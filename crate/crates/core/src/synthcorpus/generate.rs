use crate::error::{ensure, Error, Result};
use crate::nnet::{Rng, SequenceTensor};

use super::spec::CorpusSpec;

/// One synthetic utterance. Token, emotion and language ids index into the
/// spec's symbol table, emotion list and language list respectively.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub utt_id: String,
    pub frames: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    pub transcript: Vec<usize>,
    pub emotion: usize,
    pub language: usize,
}

impl FeatureSequence {
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn to_tensor(&self) -> Result<SequenceTensor> {
        SequenceTensor::new(self.frames, self.dim, self.data.iter().map(|&v| f64::from(v)).collect())
    }

    /// Per-dimension mean over frames.
    pub fn mean_frame(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for t in 0..self.frames {
            for (acc, &v) in m.iter_mut().zip(self.frame(t)) {
                *acc += f64::from(v);
            }
        }
        m.iter_mut().for_each(|v| *v /= self.frames as f64);
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<FeatureSequence>,
    pub dev: Vec<FeatureSequence>,
    pub test: Vec<FeatureSequence>,
}

/// Utterance `i` of a split gets language `i % L` and emotion `(i / L) % E`,
/// so both labels are balanced in every split.
fn labels_for(spec: &CorpusSpec, i: usize) -> (usize, usize) {
    let l = spec.languages.len();
    (i % l, (i / l) % spec.emotions.len())
}

struct Segment {
    symbol: usize,
    frames: usize,
}

fn sample_symbols(spec: &CorpusSpec, language: usize, count: usize, rng: &mut Rng) -> Vec<usize> {
    let lang = &spec.languages[language];
    let mut pos = rng.categorical(&lang.initial);
    let mut out = Vec::with_capacity(count);
    out.push(lang.inventory[pos]);
    while out.len() < count {
        pos = rng.categorical(&lang.bigram[pos]);
        out.push(lang.inventory[pos]);
    }
    out
}

fn segment_length(spec: &CorpusSpec, emotion: usize, rng: &mut Rng) -> usize {
    let [lo, hi] = spec.frames_per_symbol;
    let base = lo + rng.below(hi - lo + 1);
    let scaled = (base as f64 * spec.emotions[emotion].duration_multiplier).round() as usize;
    scaled.max(1)
}

fn render(spec: &CorpusSpec, utt_id: String, segments: &[Segment], emotion: usize, language: usize, max_frames: Option<usize>, rng: &mut Rng) -> FeatureSequence {
    let d = spec.feature_dim;
    let offset = &spec.emotions[emotion].offset;
    let mut data = Vec::new();
    let mut transcript = Vec::new();
    let mut frames = 0;
    'outer: for seg in segments {
        let mean = &spec.means[seg.symbol];
        for k in 0..seg.frames {
            if max_frames.is_some_and(|m| frames == m) {
                break 'outer;
            }
            if k == 0 {
                transcript.push(seg.symbol);
            }
            for j in 0..d {
                data.push((mean[j] + offset[j] + spec.noise_std * rng.normal()) as f32);
            }
            frames += 1;
        }
    }
    FeatureSequence {
        utt_id,
        frames,
        dim: d,
        data,
        transcript,
        emotion,
        language,
    }
}

fn generate_split(spec: &CorpusSpec, name: &str, count: usize, rng: &mut Rng) -> Vec<FeatureSequence> {
    let [slo, shi] = spec.symbols_per_utterance;
    (0..count)
        .map(|i| {
            let (language, emotion) = labels_for(spec, i);
            let n = slo + rng.below(shi - slo + 1);
            let segments: Vec<Segment> = sample_symbols(spec, language, n, rng)
                .into_iter()
                .map(|symbol| Segment {
                    symbol,
                    frames: segment_length(spec, emotion, rng),
                })
                .collect();
            render(spec, format!("{name}-{i:05}"), &segments, emotion, language, None, rng)
        })
        .collect()
}

/// Generates train, dev and test splits; identical specs give identical corpora.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut master = Rng::new(spec.seed);
    let mut train_rng = master.fork();
    let mut dev_rng = master.fork();
    let mut test_rng = master.fork();
    Ok(Corpus {
        train: generate_split(spec, "train", spec.counts.train, &mut train_rng),
        dev: generate_split(spec, "dev", spec.counts.dev, &mut dev_rng),
        test: generate_split(spec, "test", spec.counts.test, &mut test_rng),
    })
}

/// Generates `count` utterances per duration, each exactly that many frames
/// long. The transcript keeps every symbol that has at least one frame.
pub fn gen_duration_test(spec: &CorpusSpec, durations: &[usize], count: usize) -> Result<Vec<(usize, Vec<FeatureSequence>)>> {
    spec.validate()?;
    ensure!(!durations.is_empty(), "durations: empty");
    let min = spec.frames_per_symbol[0];
    for &d in durations {
        if d < min {
            return Err(Error::contract(format!(
                "duration {d} is shorter than the minimum of {min} frames per symbol"
            )));
        }
    }
    let mut master = Rng::new(spec.seed.wrapping_add(0xd0_5e7));
    let mut out = Vec::with_capacity(durations.len());
    for &duration in durations {
        let mut rng = master.fork();
        let utts = (0..count)
            .map(|i| {
                let (language, emotion) = labels_for(spec, i);
                let mut segments = Vec::new();
                let mut total = 0;
                let mut last: Option<usize> = None;
                while total < duration {
                    let symbol = match last {
                        None => sample_symbols(spec, language, 1, &mut rng)[0],
                        Some(prev) => {
                            let lang = &spec.languages[language];
                            let pos = lang.inventory.iter().position(|&s| s == prev).expect("symbol in inventory");
                            lang.inventory[rng.categorical(&lang.bigram[pos])]
                        }
                    };
                    let frames = segment_length(spec, emotion, &mut rng);
                    total += frames;
                    segments.push(Segment { symbol, frames });
                    last = Some(symbol);
                }
                render(spec, format!("dur{duration}-{i:05}"), &segments, emotion, language, Some(duration), &mut rng)
            })
            .collect();
        out.push((duration, utts));
    }
    Ok(out)
}
