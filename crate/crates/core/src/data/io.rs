use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureKind, Observation, Value};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnDecl {
    Continuous,
    Categorical,
}

/// Per-column kind declarations, as read from a JSON object
/// `{"column": "continuous" | "categorical"}`.
pub type Schema = BTreeMap<String, ColumnDecl>;

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(file)?)
}

pub fn load_csv(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a headed, comma-separated table. Without a declaration a column is
/// continuous iff every cell parses as a finite number.
pub fn read_csv<R: Read>(reader: R, schema: Option<&Schema>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Empty("csv file has no header".into()));
    }
    for (i, name) in header.iter().enumerate() {
        if header[..i].contains(name) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }
    if let Some(schema) = schema {
        if let Some(unknown) = schema.keys().find(|k| !header.contains(k)) {
            return Err(Error::Schema(format!("schema declares unknown column {unknown:?}")));
        }
    }

    let mut cells: Vec<Vec<String>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row: Vec<String> = record.iter().map(str::to_string).collect();
        for (j, cell) in row.iter().enumerate() {
            if cell.trim().is_empty() {
                return Err(Error::MissingValue { row: i + 1, column: header[j].clone() });
            }
        }
        cells.push(row);
    }
    if cells.is_empty() {
        return Err(Error::Empty("csv file has no data rows".into()));
    }

    let mut numeric_cols = Vec::with_capacity(header.len());
    for (j, name) in header.iter().enumerate() {
        let is_numeric = match schema.and_then(|s| s.get(name)) {
            Some(ColumnDecl::Categorical) => false,
            Some(ColumnDecl::Continuous) => {
                if let Some((i, bad)) = cells.iter().enumerate().find(|(_, r)| parse_number(&r[j]).is_none()) {
                    return Err(Error::Schema(format!("row {}, column {name}: {:?} is not a number", i + 1, bad[j])));
                }
                true
            }
            None => cells.iter().all(|r| parse_number(&r[j]).is_some()),
        };
        numeric_cols.push(is_numeric);
    }

    let rows: Vec<Observation> = cells
        .into_iter()
        .map(|r| {
            r.into_iter()
                .zip(&numeric_cols)
                .map(|(cell, &num)| match num {
                    true => Value::Num(parse_number(&cell).expect("checked above")),
                    false => Value::Cat(cell),
                })
                .collect()
        })
        .collect();
    let names: Vec<&str> = header.iter().map(String::as_str).collect();
    Dataset::from_rows(&names, rows)
}

pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(d.features().iter().map(|f| f.name.as_str()))?;
    for row in d.rows() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

impl Dataset {
    /// Kind declarations matching this dataset's metadata.
    pub fn schema(&self) -> Schema {
        self.features()
            .iter()
            .map(|f| {
                let decl = match f.kind {
                    FeatureKind::Continuous { .. } => ColumnDecl::Continuous,
                    FeatureKind::Categorical { .. } => ColumnDecl::Categorical,
                };
                (f.name.clone(), decl)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(s: &str) -> Result<Dataset> {
        read_csv(s.as_bytes(), None)
    }

    #[test]
    fn parses_numeric_columns() {
        let d = read("x,y\n1,2\n3,4\n").unwrap();
        assert_eq!(d.n(), 2);
        assert!(d.features().iter().all(|f| f.is_continuous()));
        assert_eq!(d.features()[0].range(), Some((1.0, 3.0)));
    }

    #[test]
    fn infers_categorical() {
        let d = read("c\na\nb\na\n").unwrap();
        assert_eq!(d.features()[0].categories().unwrap(), ["a", "b"]);
    }

    #[test]
    fn missing_value_names_row_and_column() {
        let err = read("x,y\n1,2\n3,\n").unwrap_err();
        assert_eq!(err.to_string(), "missing value at row 2, column y");
    }

    #[test]
    fn duplicate_header_rejected() {
        assert!(matches!(read("x,x\n1,2\n"), Err(Error::DuplicateColumn(_))));
    }

    #[test]
    fn empty_file_rejected() {
        assert!(read("").is_err());
        assert!(read("x,y\n").is_err());
    }

    #[test]
    fn schema_overrides_inference() {
        let mut schema = Schema::new();
        schema.insert("chas".into(), ColumnDecl::Categorical);
        let d = read_csv("chas,x\n0,1.5\n1,2.5\n".as_bytes(), Some(&schema)).unwrap();
        assert_eq!(d.features()[0].categories().unwrap(), ["0", "1"]);
        schema.insert("x".into(), ColumnDecl::Continuous);
        assert!(read_csv("chas,x\n0,a\n".as_bytes(), Some(&schema)).is_err());
    }

    #[test]
    fn quoted_fields() {
        let d = read("name,v\n\"a, b\",1\n\"c\",2\n").unwrap();
        assert_eq!(d.features()[0].categories().unwrap(), ["a, b", "c"]);
    }

    #[test]
    fn schema_json() {
        let s: Schema = serde_json::from_str(r#"{"a":"continuous","b":"categorical"}"#).unwrap();
        assert_eq!(s["b"], ColumnDecl::Categorical);
    }

    proptest! {
        #[test]
        fn csv_round_trip(
            rows in proptest::collection::vec((-1e6f64..1e6, 0usize..3), 1..40)
        ) {
            let labels = ["red", "green", "blue, dark"];
            let rows: Vec<Observation> = rows
                .iter()
                .map(|(x, c)| vec![Value::Num(*x), Value::Cat(labels[*c].to_string())])
                .collect();
            let d = Dataset::from_rows(&["x", "c"], rows).unwrap();
            let mut buf = Vec::new();
            write_csv(&d, &mut buf).unwrap();
            let back = read_csv(buf.as_slice(), Some(&d.schema())).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}
