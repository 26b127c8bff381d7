//! The `f0,…,f{q-1},candidates,true` CSV format.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PllDataset, SplitTag, Standardizer};
use crate::error::{PllError, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CsvSchema {
    /// z-score every feature column with the file's own statistics.
    pub standardize: bool,
    /// Number of classes; inferred from the largest index when absent.
    pub class_count: Option<usize>,
    pub split: SplitTag,
}

fn parse_index(cell: &str, line: usize, what: &str) -> Result<usize> {
    cell.trim().parse::<usize>().map_err(|_| PllError::Parse {
        line,
        msg: format!("{what} entry '{cell}' is not a class index"),
    })
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<PllDataset> {
    let file = std::fs::File::open(path).map_err(|e| PllError::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<PllDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| PllError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let width = headers.len();
    if width < 3 || &headers[width - 2] != "candidates" || &headers[width - 1] != "true" {
        return Err(PllError::Parse {
            line: 1,
            msg: "header must end with 'candidates,true' after at least one feature column".into(),
        });
    }
    let q = width - 2;

    let mut feats = Vec::new();
    let mut sets: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| PllError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        for cell in rec.iter().take(q) {
            let v: f64 = cell.trim().parse().map_err(|_| PllError::Parse {
                line,
                msg: format!("feature '{cell}' is not a number"),
            })?;
            feats.push(v);
        }
        let cand_cell = rec[q].trim();
        let set = if cand_cell.is_empty() {
            Vec::new()
        } else {
            cand_cell
                .split(';')
                .map(|c| parse_index(c, line, "candidate"))
                .collect::<Result<Vec<_>>>()?
        };
        if set.is_empty() {
            return Err(PllError::Validation(format!("line {line}: empty candidate set")));
        }
        let t = rec[q + 1].trim();
        labels.push(if t.is_empty() { None } else { Some(parse_index(t, line, "true")?) });
        sets.push((line, set));
    }

    let max_seen = sets
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .chain(labels.iter().flatten().copied())
        .max()
        .unwrap_or(0);
    let c = schema.class_count.unwrap_or(max_seen + 1);
    let n = sets.len();
    let mut cand = Matrix::zeros(n, c);
    for (i, (line, set)) in sets.iter().enumerate() {
        for &j in set {
            if j >= c {
                return Err(PllError::Parse {
                    line: *line,
                    msg: format!("candidate {j} is not below the class count {c}"),
                });
            }
            cand[(i, j)] = 1.0;
        }
        if let Some(y) = labels[i] {
            if y >= c || cand[(i, y)] != 1.0 {
                return Err(PllError::Validation(format!(
                    "line {line}: true label {y} is missing from the candidate set"
                )));
            }
        }
    }
    let known = labels.iter().filter(|l| l.is_some()).count();
    let true_labels = match known {
        0 => None,
        k if k == n => Some(labels.into_iter().flatten().collect()),
        _ => {
            return Err(PllError::Validation(
                "true labels must be given for every row or for none".into(),
            ))
        }
    };
    let mut features = Matrix::from_vec(n, q, feats)?;
    if schema.standardize {
        features = Standardizer::fit(&features).apply(&features)?;
    }
    PllDataset::new(features, cand, true_labels, schema.split)
}

pub fn write_csv(dataset: &PllDataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csv_to(dataset, &mut buf)?;
    crate::models::write_atomic(path, &buf)
}

/// Shortest round-trip formatting, so equal datasets give equal bytes.
pub fn write_csv_to<W: Write>(dataset: &PllDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let q = dataset.num_features();
    let mut header: Vec<String> = (0..q).map(|j| format!("f{j}")).collect();
    header.push("candidates".into());
    header.push("true".into());
    let to_err = |e: csv::Error| PllError::Validation(format!("csv write failed: {e}"));
    w.write_record(&header).map_err(to_err)?;
    for i in 0..dataset.len() {
        let mut rec: Vec<String> = dataset.features().row(i).iter().map(|v| format!("{v}")).collect();
        rec.push(
            dataset
                .candidate_set(i)
                .iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        );
        rec.push(dataset.true_labels().map_or(String::new(), |l| l[i].to_string()));
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| PllError::Validation(format!("csv write failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, schema: CsvSchema) -> Result<PllDataset> {
        read_csv(text.as_bytes(), &schema)
    }

    #[test]
    fn singleton_file() {
        let d = read("f0,f1,candidates,true\n0.5,1,0,0\n1.5,2,2,2\n-1,0,1,1\n", CsvSchema::default()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.num_classes(), 3);
        assert_eq!(d.avg_candidates(), 1.0);
    }

    #[test]
    fn candidate_list_parsing() {
        let schema = CsvSchema {
            class_count: Some(4),
            ..CsvSchema::default()
        };
        let d = read("f0,candidates,true\n1.0,0;2,\n", schema).unwrap();
        assert_eq!(d.candidates().row(0), &[1.0, 0.0, 1.0, 0.0]);
        assert!(d.true_labels().is_none());
    }

    #[test]
    fn missing_true_label_names_line() {
        let err = read("f0,candidates,true\n1.0,0,0\n2.0,0;1,2\n", CsvSchema::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn non_integer_candidate() {
        let err = read("f0,candidates,true\n1.0,0;x,0\n", CsvSchema::default()).unwrap_err();
        assert!(matches!(err, PllError::Parse { line: 2, .. }), "{err}");
        let err = read("f0,candidates,true\n1.0,0.5,\n", CsvSchema::default()).unwrap_err();
        assert!(matches!(err, PllError::Parse { .. }));
    }

    #[test]
    fn bad_header() {
        assert!(read("a,b\n1,2\n", CsvSchema::default()).is_err());
    }

    #[test]
    fn standardize_option() {
        let schema = CsvSchema {
            standardize: true,
            ..CsvSchema::default()
        };
        let d = read("f0,candidates,true\n1,0,0\n3,1,1\n", schema).unwrap();
        assert_eq!(d.features().as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let text = "f0,f1,candidates,true\n0.1,-2.5,0;1,1\n3,1e-7,2,2\n";
        let d = read(text, CsvSchema::default()).unwrap();
        let mut a = Vec::new();
        write_csv_to(&d, &mut a).unwrap();
        let back = read_csv(a.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(back, d);
        let mut b = Vec::new();
        write_csv_to(&back, &mut b).unwrap();
        assert_eq!(a, b);
    }
}
