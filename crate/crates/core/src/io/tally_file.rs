//! Tally files: JSON with a `metadata` block and a `counts` block whose keys
//! follow the experiment's row labels (`sent_01`, `detected_22`,
//! `detected_valid_det1`, `detected_11_ds`, ...). Source index 0 is vacuum,
//! 1 decoy, 2 signal.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::read_text;
use crate::error::{Error, Result};
use crate::model::TallyRecord;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TallyMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_km: Option<f64>,
    /// End-to-end fibre loss in dB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attenuation_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_set: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_total: Option<u64>,
    /// Phase-slice width used when the tally was recorded, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ds_width_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TallyFile {
    pub metadata: TallyMetadata,
    pub tally: TallyRecord,
}

const EXTRA_KEYS: [&str; 4] = [
    "detected_valid_det1",
    "detected_valid_det2",
    "detected_11_ds",
    "correct_11_ds",
];

fn count(counts: &Map<String, Value>, key: &str, bad: &mut Vec<String>) -> Result<u64> {
    let v = counts
        .get(key)
        .ok_or_else(|| Error::MissingKey(format!("counts.{key}")))?;
    if let Some(n) = v.as_u64() {
        return Ok(n);
    }
    match v.as_f64() {
        Some(x) if x < 0.0 => bad.push(format!("{key} is negative ({v})")),
        Some(x) if x.fract() == 0.0 && x < 2f64.powi(64) => return Ok(x as u64),
        _ => bad.push(format!("{key} must be a non-negative integer (got {v})")),
    }
    Ok(0)
}

/// Parses tally JSON text and checks every tally invariant.
pub fn parse_tally_str(text: &str) -> Result<TallyFile> {
    let root: Value = serde_json::from_str(text).map_err(Error::from_json)?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::Validation(vec!["tally file must be a JSON object".into()]))?;
    let metadata: TallyMetadata = match obj.get("metadata") {
        Some(m) => serde_json::from_value(m.clone()).map_err(|e| Error::Validation(vec![format!("metadata: {e}")]))?,
        None => TallyMetadata::default(),
    };
    let counts = obj
        .get("counts")
        .ok_or_else(|| Error::MissingKey("counts".into()))?
        .as_object()
        .ok_or_else(|| Error::Validation(vec!["counts must be an object".into()]))?;

    let mut bad = Vec::new();
    let mut t = TallyRecord::default();
    for a in 0..3 {
        for b in 0..3 {
            t.sent[a][b] = count(counts, &format!("sent_{a}{b}"), &mut bad)?;
            t.detected[a][b] = count(counts, &format!("detected_{a}{b}"), &mut bad)?;
        }
    }
    let [v1, v2, ds, ok] = EXTRA_KEYS;
    t.valid_det1 = count(counts, v1, &mut bad)?;
    t.valid_det2 = count(counts, v2, &mut bad)?;
    t.ds_total = count(counts, ds, &mut bad)?;
    t.ds_correct = count(counts, ok, &mut bad)?;
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    t.n_total = metadata.n_total.unwrap_or_else(|| t.sent_sum());
    t.check()?;
    Ok(TallyFile { metadata, tally: t })
}

pub fn parse_tally(path: &Path) -> Result<TallyFile> {
    parse_tally_str(&read_text(path)?)
}

/// Pretty JSON with counts in table order.
pub fn tally_to_json(file: &TallyFile) -> String {
    let t = &file.tally;
    let mut counts = Map::new();
    for a in 0..3 {
        for b in 0..3 {
            counts.insert(format!("sent_{a}{b}"), t.sent[a][b].into());
        }
    }
    for a in 0..3 {
        for b in 0..3 {
            counts.insert(format!("detected_{a}{b}"), t.detected[a][b].into());
        }
    }
    let [v1, v2, ds, ok] = EXTRA_KEYS;
    counts.insert(v1.into(), t.valid_det1.into());
    counts.insert(v2.into(), t.valid_det2.into());
    counts.insert(ds.into(), t.ds_total.into());
    counts.insert(ok.into(), t.ds_correct.into());

    let mut metadata = file.metadata.clone();
    metadata.n_total = Some(t.n_total);
    let mut root = Map::new();
    root.insert(
        "metadata".into(),
        serde_json::to_value(&metadata).expect("metadata serialises"),
    );
    root.insert("counts".into(), Value::Object(counts));
    let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("tally serialises");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TallyFile {
        let mut t = TallyRecord::default();
        for a in 0..3 {
            for b in 0..3 {
                t.sent[a][b] = 1000 + (a * 3 + b) as u64;
                t.detected[a][b] = (a + b) as u64;
            }
        }
        t.valid_det1 = 10;
        t.valid_det2 = t.detected_sum() - 10;
        t.ds_total = 1;
        t.ds_correct = 1;
        t.n_total = t.sent_sum();
        TallyFile {
            metadata: TallyMetadata {
                distance_km: Some(12.5),
                parameter_set: Some("#2".into()),
                ..TallyMetadata::default()
            },
            tally: t,
        }
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let mut back = parse_tally_str(&tally_to_json(&f)).unwrap();
        assert_eq!(back.tally, f.tally);
        back.metadata.n_total = None;
        assert_eq!(back.metadata, f.metadata);
    }

    #[test]
    fn empty_text_is_parse_error() {
        assert!(matches!(parse_tally_str(""), Err(Error::Parse { .. })));
        match parse_tally_str("{\n  \"counts\": {,\n}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_key_is_named() {
        let text = tally_to_json(&sample()).replace("\"sent_12\"", "\"sent_x\"");
        match parse_tally_str(&text) {
            Err(Error::MissingKey(k)) => assert_eq!(k, "counts.sent_12"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_and_breach_are_validation() {
        let text = tally_to_json(&sample()).replace("\"detected_00\": 0", "\"detected_00\": -3");
        assert!(matches!(parse_tally_str(&text), Err(Error::Validation(_))));
        let mut f = sample();
        f.tally.detected[2][2] = 5000;
        f.tally.valid_det2 += 4996;
        assert!(matches!(parse_tally_str(&tally_to_json(&f)), Err(Error::Validation(_))));
    }
}
