use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::generate::FeatureSequence;
use super::spec::CorpusSpec;

pub const DATASET_MAGIC: &[u8; 4] = b"SYNC";
pub const DATASET_VERSION: u32 = 1;

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "dataset",
        reason: reason.into(),
    }
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| format_err(format!("value {v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| format_err(format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn write_dataset<W: Write>(mut w: W, utts: &[FeatureSequence]) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    put_u32(&mut w, utts.len())?;
    for u in utts {
        put_u32(&mut w, u.utt_id.len())?;
        w.write_all(u.utt_id.as_bytes())?;
        put_u32(&mut w, u.frames)?;
        put_u32(&mut w, u.dim)?;
        for v in &u.data {
            w.write_all(&v.to_le_bytes())?;
        }
        put_u32(&mut w, u.transcript.len())?;
        for &t in &u.transcript {
            put_u32(&mut w, t)?;
        }
        put_u32(&mut w, u.emotion)?;
        put_u32(&mut w, u.language)?;
    }
    w.flush()?;
    Ok(())
}

const MAX_LEN: usize = 1 << 28;

pub fn read_dataset<R: Read>(mut r: R) -> Result<Vec<FeatureSequence>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| format_err("missing header"))?;
    if &magic != DATASET_MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = get_u32(&mut r)?;
    if version != DATASET_VERSION as usize {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let count = get_u32(&mut r)?;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_len = get_u32(&mut r)?;
        if id_len > MAX_LEN {
            return Err(format_err("utterance id too long"));
        }
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(|e| format_err(format!("truncated: {e}")))?;
        let utt_id = String::from_utf8(id).map_err(|_| format_err("utterance id is not UTF-8"))?;
        let frames = get_u32(&mut r)?;
        let dim = get_u32(&mut r)?;
        let n = frames
            .checked_mul(dim)
            .filter(|&n| n <= MAX_LEN && frames > 0 && dim > 0)
            .ok_or_else(|| format_err(format!("{utt_id}: bad shape {frames}x{dim}")))?;
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 4];
        for _ in 0..n {
            r.read_exact(&mut b).map_err(|e| format_err(format!("truncated: {e}")))?;
            let v = f32::from_le_bytes(b);
            if !v.is_finite() {
                return Err(Error::non_finite(format!("features of {utt_id}")));
            }
            data.push(v);
        }
        let tlen = get_u32(&mut r)?;
        if tlen > MAX_LEN {
            return Err(format_err("transcript too long"));
        }
        let transcript = (0..tlen).map(|_| get_u32(&mut r)).collect::<Result<Vec<_>>>()?;
        let emotion = get_u32(&mut r)?;
        let language = get_u32(&mut r)?;
        out.push(FeatureSequence {
            utt_id,
            frames,
            dim,
            data,
            transcript,
            emotion,
            language,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(format_err("trailing bytes"));
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, utts: &[FeatureSequence]) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), utts)
}

pub fn load_dataset(path: &Path) -> Result<Vec<FeatureSequence>> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub name: String,
    pub file: String,
    pub utterances: usize,
    /// Frame count for duration sets; absent for regular splits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<usize>,
}

/// Sidecar describing a generated corpus directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub splits: Vec<SplitEntry>,
    pub spec: CorpusSpec,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn split(&self, name: &str) -> Option<&SplitEntry> {
        self.splits.iter().find(|s| s.name == name)
    }

    pub fn duration_sets(&self) -> impl Iterator<Item = &SplitEntry> {
        self.splits.iter().filter(|s| s.duration.is_some())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let f = BufReader::new(File::open(dir.join(MANIFEST_FILE))?);
        let m: Manifest = serde_json::from_reader(f)?;
        m.spec.validate()?;
        Ok(m)
    }

    pub fn load_split(&self, dir: &Path, name: &str) -> Result<Vec<FeatureSequence>> {
        let entry = self
            .split(name)
            .ok_or_else(|| Error::contract(format!("corpus has no split named {name:?}")))?;
        let utts = load_dataset(&dir.join(&entry.file))?;
        self.check(&utts, name)?;
        Ok(utts)
    }

    fn check(&self, utts: &[FeatureSequence], name: &str) -> Result<()> {
        let spec = &self.spec;
        for u in utts {
            if u.dim != spec.feature_dim
                || u.emotion >= spec.emotions.len()
                || u.language >= spec.languages.len()
                || u.transcript.iter().any(|&t| t >= spec.symbols.len())
            {
                return Err(format_err(format!("{name}/{}: inconsistent with manifest", u.utt_id)));
            }
        }
        Ok(())
    }
}

/// Writes every split plus optional duration sets and the manifest into `dir`.
pub fn write_corpus_dir(
    dir: &Path,
    spec: &CorpusSpec,
    corpus: &super::Corpus,
    duration_sets: &[(usize, Vec<FeatureSequence>)],
) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut splits = Vec::new();
    for (name, utts) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        let file = format!("{name}.sync");
        save_dataset(&dir.join(&file), utts)?;
        splits.push(SplitEntry {
            name: name.to_string(),
            file,
            utterances: utts.len(),
            duration: None,
        });
    }
    for (duration, utts) in duration_sets {
        let name = format!("dur{duration}");
        let file = format!("{name}.sync");
        save_dataset(&dir.join(&file), utts)?;
        splits.push(SplitEntry {
            name,
            file,
            utterances: utts.len(),
            duration: Some(*duration),
        });
    }
    let manifest = Manifest {
        version: DATASET_VERSION,
        splits,
        spec: spec.clone(),
    };
    manifest.save(dir)?;
    Ok(manifest)
}
