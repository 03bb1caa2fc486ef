//! JSONL file formats for datasets and raw review corpora.
//!
//! A dataset file starts with a header line
//! `{"L": <classes>, "d": <dim>, "domain": "source" | "target"}` followed
//! by one record per line: `{"id": "...", "label": <class>, "features":
//! [...]}`. Source records must carry labels. Target records may carry
//! them uniformly (kept aside for evaluation only) or not at all.
//!
//! A corpus file has no header; each line is
//! `{"id": "...", "label": <class>?, "rating": <mean rating>?, "reviews":
//! ["...", ...]}`.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "L")]
    classes: usize,
    d: usize,
    domain: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    features: Vec<f64>,
}

/// A parsed dataset file: labeled when the header says `source`,
/// unlabeled (with optional hidden labels) when it says `target`.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetFile {
    Source(LabeledDataset),
    Target(UnlabeledDataset),
}

fn malformed(line: usize, message: impl Into<String>) -> Error {
    Error::MalformedDataset { line, message: message.into() }
}

/// Parses a full dataset file from text. Line numbers in errors are
/// 1-based.
pub fn parse_dataset_jsonl(text: &str) -> Result<DatasetFile> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "missing header line"))?;
    let header: Header = serde_json::from_str(header)
        .map_err(|e| malformed(hline + 1, format!("bad header: {e}")))?;
    if header.classes == 0 {
        return Err(malformed(hline + 1, "header declares zero classes"));
    }
    if header.d == 0 {
        return Err(malformed(hline + 1, "header declares zero feature dimensions"));
    }
    let is_source = match header.domain.as_str() {
        "source" => true,
        "target" => false,
        other => {
            return Err(malformed(
                hline + 1,
                format!("domain must be \"source\" or \"target\", found \"{other}\""),
            ))
        }
    };

    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    let mut count = 0usize;
    let mut last_line = hline + 1;
    for (lno, line) in lines {
        last_line = lno + 1;
        let record: Record = serde_json::from_str(line)
            .map_err(|e| malformed(lno + 1, format!("bad record: {e}")))?;
        if record.features.len() != header.d {
            return Err(malformed(
                lno + 1,
                format!("{} features, header declares {}", record.features.len(), header.d),
            ));
        }
        if record.features.iter().any(|v| !v.is_finite()) {
            return Err(malformed(lno + 1, "non-finite feature value"));
        }
        if let Some(label) = record.label {
            if label >= header.classes {
                return Err(malformed(
                    lno + 1,
                    format!("label {label} out of range for {} classes", header.classes),
                ));
            }
        } else if is_source {
            return Err(malformed(lno + 1, "source record without label"));
        }
        rows.extend_from_slice(&record.features);
        labels.push(record.label);
        count += 1;
    }
    if count == 0 {
        return Err(malformed(last_line, "no records after header"));
    }

    let features = Array2::from_shape_vec((count, header.d), rows)
        .expect("row count and width are consistent by construction");
    if is_source {
        let labels = labels.into_iter().map(|l| l.unwrap()).collect();
        Ok(DatasetFile::Source(LabeledDataset::new(features, labels, header.classes)?))
    } else {
        let labeled = labels.iter().filter(|l| l.is_some()).count();
        if labeled == 0 {
            Ok(DatasetFile::Target(UnlabeledDataset::new(features, header.classes)?))
        } else if labeled == count {
            let labels = labels.into_iter().map(|l| l.unwrap()).collect();
            Ok(DatasetFile::Target(UnlabeledDataset::with_hidden_labels(
                features,
                header.classes,
                labels,
            )?))
        } else {
            Err(malformed(
                last_line,
                format!("{labeled} of {count} target records carry labels; use all or none"),
            ))
        }
    }
}

/// Serializes a dataset to the JSONL format. Record ids are synthesized
/// from the row index; target hidden labels are written out when present
/// so downstream evaluation can score against them.
pub fn save_dataset(file: &DatasetFile) -> String {
    let mut out = String::new();
    match file {
        DatasetFile::Source(ds) => {
            let header =
                Header { classes: ds.classes(), d: ds.dim(), domain: "source".into() };
            out.push_str(&serde_json::to_string(&header).unwrap());
            out.push('\n');
            for (i, row) in ds.features().rows().into_iter().enumerate() {
                let record = Record {
                    id: format!("src-{i}"),
                    label: Some(ds.labels()[i]),
                    features: row.to_vec(),
                };
                out.push_str(&serde_json::to_string(&record).unwrap());
                out.push('\n');
            }
        }
        DatasetFile::Target(ds) => {
            let header =
                Header { classes: ds.classes(), d: ds.dim(), domain: "target".into() };
            out.push_str(&serde_json::to_string(&header).unwrap());
            out.push('\n');
            for (i, row) in ds.features().rows().into_iter().enumerate() {
                let record = Record {
                    id: format!("tgt-{i}"),
                    label: ds.hidden_labels().map(|l| l[i]),
                    features: row.to_vec(),
                };
                out.push_str(&serde_json::to_string(&record).unwrap());
                out.push('\n');
            }
        }
    }
    out
}

pub fn load_dataset(path: &Path) -> Result<DatasetFile> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset_jsonl(&text)
}

/// One entity in a raw review corpus. The label may be given directly or
/// derived from `rating` via [`crate::data::label_by_rating`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEntity {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
    pub reviews: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawCorpus {
    pub entities: Vec<RawEntity>,
}

pub fn parse_corpus_jsonl(text: &str) -> Result<RawCorpus> {
    let mut entities = Vec::new();
    for (lno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entity: RawEntity = serde_json::from_str(line)
            .map_err(|e| malformed(lno + 1, format!("bad entity: {e}")))?;
        if let Some(rating) = entity.rating {
            if !rating.is_finite() {
                return Err(malformed(lno + 1, "non-finite rating"));
            }
        }
        entities.push(entity);
    }
    if entities.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    Ok(RawCorpus { entities })
}

pub fn load_corpus(path: &Path) -> Result<RawCorpus> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus_jsonl(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn source() -> DatasetFile {
        DatasetFile::Source(
            LabeledDataset::new(array![[0.5, -1.25], [3.0, 0.0]], vec![1, 0], 2).unwrap(),
        )
    }

    fn target_with_labels() -> DatasetFile {
        DatasetFile::Target(
            UnlabeledDataset::with_hidden_labels(
                array![[0.125, 2.0], [-0.75, 1.0]],
                2,
                vec![0, 1],
            )
            .unwrap(),
        )
    }

    #[test]
    fn round_trip_source() {
        let file = source();
        let text = save_dataset(&file);
        let parsed = parse_dataset_jsonl(&text).unwrap();
        assert_eq!(parsed, file);
        // Serialization is stable, so a second pass is byte-identical.
        assert_eq!(save_dataset(&parsed), text);
    }

    #[test]
    fn round_trip_target_with_and_without_labels() {
        let file = target_with_labels();
        let text = save_dataset(&file);
        assert_eq!(parse_dataset_jsonl(&text).unwrap(), file);

        let bare = DatasetFile::Target(
            UnlabeledDataset::new(array![[0.125, 2.0]], 2).unwrap(),
        );
        let text = save_dataset(&bare);
        assert!(!text.contains("label"));
        assert_eq!(parse_dataset_jsonl(&text).unwrap(), bare);
    }

    #[test]
    fn header_errors_are_line_tagged() {
        let err = parse_dataset_jsonl("").unwrap_err();
        assert!(err.to_string().contains("line 1"));

        let err = parse_dataset_jsonl("{\"L\":2,\"d\":2,\"domain\":\"sideways\"}\n")
            .unwrap_err();
        assert!(err.to_string().contains("sideways"));

        let err = parse_dataset_jsonl("{\"L\":0,\"d\":2,\"domain\":\"source\"}\n").unwrap_err();
        assert!(err.to_string().contains("zero classes"));
    }

    #[test]
    fn record_errors_are_line_tagged() {
        let header = "{\"L\":2,\"d\":2,\"domain\":\"source\"}\n";

        let text = format!("{header}{{\"id\":\"a\",\"label\":0,\"features\":[1.0]}}\n");
        let err = parse_dataset_jsonl(&text).unwrap_err();
        assert!(err.to_string().contains("line 2"), "got: {err}");

        let text = format!("{header}{{\"id\":\"a\",\"label\":2,\"features\":[1.0,2.0]}}\n");
        assert!(parse_dataset_jsonl(&text).unwrap_err().to_string().contains("label 2"));

        let text = format!("{header}{{\"id\":\"a\",\"features\":[1.0,2.0]}}\n");
        assert!(parse_dataset_jsonl(&text)
            .unwrap_err()
            .to_string()
            .contains("without label"));

        // Header only, no records.
        assert!(parse_dataset_jsonl(header).unwrap_err().to_string().contains("no records"));
    }

    #[test]
    fn partial_target_labels_are_rejected() {
        let text = "{\"L\":2,\"d\":1,\"domain\":\"target\"}\n\
                    {\"id\":\"a\",\"label\":0,\"features\":[1.0]}\n\
                    {\"id\":\"b\",\"features\":[2.0]}\n";
        let err = parse_dataset_jsonl(text).unwrap_err();
        assert!(err.to_string().contains("all or none"));
    }

    #[test]
    fn corpus_round_trip_and_validation() {
        let text = "{\"id\":\"e1\",\"label\":0,\"reviews\":[\"good stuff\",\"liked it\"]}\n\
                    {\"id\":\"e2\",\"rating\":3.9,\"reviews\":[\"meh\"]}\n";
        let corpus = parse_corpus_jsonl(text).unwrap();
        assert_eq!(corpus.entities.len(), 2);
        assert_eq!(corpus.entities[0].label, Some(0));
        assert_eq!(corpus.entities[1].rating, Some(3.9));

        assert!(matches!(parse_corpus_jsonl(""), Err(Error::EmptySampleSet)));
        assert!(parse_corpus_jsonl("{\"id\":\"x\"}").is_err());
    }
}
