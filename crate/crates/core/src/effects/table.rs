use std::io::Write;

use serde::Serialize;

use crate::data::{Observation, StepVector, Value};
use crate::error::{Error, Result};
use crate::nonlinearity::NlmResult;

#[derive(Clone, Debug, PartialEq)]
pub struct EffectRecord {
    /// Index of the anchor in the input dataset.
    pub row: usize,
    pub anchor: Observation,
    pub forward: Observation,
    pub fme: f64,
    pub anchor_ep: bool,
    pub forward_ep: bool,
    pub nlm: Option<NlmResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Excluded {
    pub row: usize,
    pub reason: String,
}

/// Effects of one step over a dataset. Every input row is either a record
/// or listed in `excluded`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectTable {
    pub step: StepVector,
    pub feature_names: Vec<String>,
    pub records: Vec<EffectRecord>,
    pub excluded: Vec<Excluded>,
}

#[derive(Serialize)]
struct NlmDetail {
    integral_i: f64,
    integral_ii: f64,
    mean_prediction: f64,
    quadrature_points: usize,
}

#[derive(Serialize)]
struct RecordJson<'a> {
    row: usize,
    anchor: &'a [Value],
    forward: &'a [Value],
    fme: f64,
    anchor_ep: bool,
    forward_ep: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    nlm: Option<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nlm_detail: Option<NlmDetail>,
}

#[derive(Serialize)]
struct TableJson<'a> {
    step: &'a StepVector,
    features: &'a [String],
    ame: Option<f64>,
    records: Vec<RecordJson<'a>>,
    excluded: &'a [Excluded],
}

impl EffectTable {
    /// Mean of the kept fMEs.
    pub fn ame(&self) -> Result<f64> {
        if self.records.is_empty() {
            return Err(Error::NoEvaluableObservations);
        }
        Ok(self.records.iter().map(|r| r.fme).sum::<f64>() / self.records.len() as f64)
    }

    /// Moves records whose forward point extrapolates to the excluded list.
    pub fn exclude_forward_ep(&mut self) {
        let (kept, flagged): (Vec<_>, Vec<_>) = self.records.drain(..).partition(|r| !r.forward_ep);
        self.records = kept;
        self.excluded
            .extend(flagged.into_iter().map(|r| Excluded { row: r.row, reason: super::REASON_FORWARD_EP.into() }));
        self.excluded.sort_by_key(|e| e.row);
    }

    pub fn fmes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.fme).collect()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let records = self
            .records
            .iter()
            .map(|r| RecordJson {
                row: r.row,
                anchor: &r.anchor,
                forward: &r.forward,
                fme: r.fme,
                anchor_ep: r.anchor_ep,
                forward_ep: r.forward_ep,
                nlm: r.nlm.as_ref().map(|n| n.nlm),
                nlm_detail: r.nlm.as_ref().map(|n| NlmDetail {
                    integral_i: n.integral_i,
                    integral_ii: n.integral_ii,
                    mean_prediction: n.mean_prediction,
                    quadrature_points: n.quadrature_points,
                }),
            })
            .collect();
        serde_json::to_value(TableJson {
            step: &self.step,
            features: &self.feature_names,
            ame: self.ame().ok(),
            records,
            excluded: &self.excluded,
        })
        .expect("effect tables serialize")
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_json_value())?;
        writeln!(w).map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }

    /// One line per record: row index, anchor values, fME, flags and NLM
    /// (empty when not computed or undefined).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["row".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.extend(["fme", "anchor_ep", "forward_ep", "nlm"].map(String::from));
        out.write_record(&header)?;
        for r in &self.records {
            let mut line = vec![r.row.to_string()];
            line.extend(r.anchor.iter().map(|v| v.to_string()));
            line.push(r.fme.to_string());
            line.push(r.anchor_ep.to_string());
            line.push(r.forward_ep.to_string());
            line.push(r.nlm.as_ref().and_then(|n| n.nlm).map(|v| v.to_string()).unwrap_or_default());
            out.write_record(&line)?;
        }
        out.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }
}
