//! CSV outputs for evaluation runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format {
            kind: "csv",
            reason: format!("{other:?}"),
        },
    }
}

/// One utterance of an evaluation report; rates are fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub utt_id: String,
    #[serde(rename = "ref")]
    pub reference: String,
    #[serde(rename = "hyp")]
    pub hypothesis: String,
    pub cer: f64,
    pub wer: f64,
    pub true_emotion: String,
    pub pred_emotion: String,
}

/// Header `utt_id,ref,hyp,cer,wer,true_emotion,pred_emotion`.
pub fn write_eval_report<W: Write>(w: W, rows: &[EvalRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    if rows.is_empty() {
        wr.write_record(["utt_id", "ref", "hyp", "cer", "wer", "true_emotion", "pred_emotion"])
            .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub utt_id: String,
    pub lang: String,
    pub score: f64,
    pub is_target: u8,
}

/// Header `utt_id,lang,score,is_target`; `is_target` is 0 or 1.
pub fn write_trials<W: Write>(w: W, rows: &[TrialRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["utt_id", "lang", "score", "is_target"]).map_err(csv_err)?;
    for r in rows {
        wr.write_record([r.utt_id.clone(), r.lang.clone(), r.score.to_string(), r.is_target.to_string()])
            .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trials<R: std::io::Read>(r: R) -> Result<Vec<TrialRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Header `duration_frames,eer`.
pub fn write_eer_summary<W: Write>(w: W, rows: &[(usize, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["duration_frames", "eer"]).map_err(csv_err)?;
    for (d, e) in rows {
        wr.write_record([d.to_string(), e.to_string()]).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}
