use std::collections::HashMap;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Maps strings to integer codes in order of first appearance.
#[derive(Default)]
struct Codebook {
    codes: HashMap<String, usize>,
    names: Vec<String>,
}

impl Codebook {
    fn code(&mut self, value: &str) -> usize {
        if let Some(&c) = self.codes.get(value) {
            return c;
        }
        let c = self.names.len();
        self.codes.insert(value.to_string(), c);
        self.names.push(value.to_string());
        c
    }
}

/// Reads a comma-separated file with a header row.
///
/// The label column becomes class indices and the columns named in
/// `categorical` become integer codes, both assigned by first appearance.
/// Every other column must parse as a number. Parse errors report the
/// 1-based line number (the header is line 1) and 1-based column.
pub fn load_csv(path: &Path, label_column: &str, categorical: &[String]) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        row,
        column,
        message,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, 0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Input(format!("label column {label_column:?} not in header {header:?}")))?;
    if let Some(missing) = categorical.iter().find(|c| !header.contains(c)) {
        return Err(Error::Input(format!("categorical column {missing:?} not in header")));
    }

    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_idx).collect();
    let mut books: HashMap<usize, Codebook> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| categorical.contains(h))
        .map(|(i, _)| (i, Codebook::default()))
        .collect();
    let mut classes = Codebook::default();
    let mut data = vec![];
    let mut labels = vec![];
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| parse_err(line, 0, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                record.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        labels.push(classes.code(&record[label_idx]));
        for &c in &feature_cols {
            let cell = &record[c];
            let value = match books.get_mut(&c) {
                Some(book) => book.code(cell) as f64,
                None => cell.parse::<f64>().map_err(|_| {
                    parse_err(line, c + 1, format!("non-numeric value {cell:?} in column {:?}", header[c]))
                })?,
            };
            data.push(value);
        }
    }
    if labels.is_empty() {
        return Err(Error::Input(format!("{} has no data rows", path.display())));
    }
    let n = labels.len();
    let features = Tensor::new(vec![n, feature_cols.len()], data)?;
    let mut ds = Dataset::new(features, labels, classes.names.len())?
        .with_feature_names(feature_cols.iter().map(|&c| header[c].clone()).collect());
    ds.class_names = classes.names;
    Ok(ds)
}

/// Writes a tabular dataset as CSV: feature columns then the label column
/// holding class names.
pub fn write_csv(ds: &Dataset, path: &Path, label_column: &str) -> Result<()> {
    if !ds.is_tabular() {
        return Err(Error::Input("only tabular datasets can be written as CSV".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Input(e.to_string()))?;
    let names: Vec<String> = if ds.feature_names.len() == ds.n_features() {
        ds.feature_names.clone()
    } else {
        (0..ds.n_features()).map(|i| format!("f{i}")).collect()
    };
    let io = |e: csv::Error| Error::Input(e.to_string());
    w.write_record(names.iter().map(String::as_str).chain([label_column]))
        .map_err(io)?;
    for i in 0..ds.len() {
        let mut row: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        row.push(ds.class_names[ds.labels[i]].clone());
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn categorical_codes_by_first_appearance() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x,cat,y\n1.5,a,no\n2,b,yes\n3,a,no\n");
        let ds = load_csv(&p, "y", &["cat".to_string()]).unwrap();
        assert_eq!(ds.feature_names, vec!["x", "cat"]);
        let cat: Vec<f64> = (0..3).map(|i| ds.features.row(i)[1]).collect();
        assert_eq!(cat, vec![0.0, 1.0, 0.0]);
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.class_names, vec!["no", "yes"]);
    }

    #[test]
    fn errors_carry_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "bad.csv", "x,y\n1,a\nfoo,b\n");
        match load_csv(&p, "y", &[]) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 1)),
            other => panic!("{other:?}"),
        }
        let p = write(&dir, "ragged.csv", "x,z,y\n1,2,a\n3,b\n");
        assert!(matches!(load_csv(&p, "y", &[]), Err(Error::Parse { row: 3, .. })));
        let p = write(&dir, "ok.csv", "x,y\n1,a\n2,b\n");
        assert!(matches!(load_csv(&p, "label", &[]), Err(Error::Input(_))));
        assert!(matches!(
            load_csv(&dir.path().join("missing.csv"), "y", &[]),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn write_then_load_is_a_fixed_point() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x,cat,y\n1.25,q,b\n-2,r,a\n3e-3,q,b\n");
        let cats = ["cat".to_string()];
        let first = load_csv(&p, "y", &cats).unwrap();
        let out = dir.path().join("out.csv");
        write_csv(&first, &out, "y").unwrap();
        let second = load_csv(&out, "y", &cats).unwrap();
        assert_eq!(first, second);
    }
}
