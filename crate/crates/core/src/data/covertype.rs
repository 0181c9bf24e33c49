//! Forest Covertype CSV: 54 numeric features and a class in 1..=7 per row.

use std::io::{BufRead, BufReader};
use std::path::Path;

use super::RawDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const COVERTYPE_ROWS: usize = 581_012;
pub const COVERTYPE_TRAIN_ROWS: usize = 464_809;
const FEATURES: usize = 54;

pub fn load_covertype_csv(path: &Path) -> Result<RawDataset> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::DatasetMissing {
                path: path.to_path_buf(),
                hint: "download covtype.data.gz from the UCI repository and decompress it (see `dpsgd datasets fetch`)".into(),
            }
        } else {
            Error::Io(e)
        }
    })?;
    parse_covertype(BufReader::new(file), &path.display().to_string())
}

pub(crate) fn parse_covertype(reader: impl BufRead, name: &str) -> Result<RawDataset> {
    let err = |row: usize, message: String| Error::Csv {
        path: name.to_string(),
        row,
        message,
    };
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != FEATURES + 1 {
            return Err(err(row, format!("{} columns, expected {}", cells.len(), FEATURES + 1)));
        }
        for (j, c) in cells[..FEATURES].iter().enumerate() {
            let v: f64 = c
                .trim()
                .parse()
                .map_err(|_| err(row, format!("column {}: non-numeric value {c:?}", j + 1)))?;
            data.push(v);
        }
        let class: usize = cells[FEATURES]
            .trim()
            .parse()
            .map_err(|_| err(row, format!("class label {:?} is not an integer", cells[FEATURES])))?;
        if !(1..=7).contains(&class) {
            return Err(err(row, format!("class label {class} outside 1..=7")));
        }
        labels.push(class - 1);
    }
    let n = labels.len();
    RawDataset::new(Matrix::from_vec(n, FEATURES, data)?, labels, 7)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(first: f64, class: usize) -> String {
        let mut cells: Vec<String> = (0..FEATURES).map(|j| format!("{}", first + j as f64)).collect();
        cells.push(class.to_string());
        cells.join(",")
    }

    #[test]
    fn parses_fixture() {
        let text = format!("{}\n{}\n{}\n", row(1.0, 1), row(2.5, 7), row(0.0, 3));
        let d = parse_covertype(text.as_bytes(), "fx").unwrap();
        assert_eq!((d.len(), d.dim(), d.class_count), (3, 54, 7));
        assert_eq!(d.labels, vec![0, 6, 2]);
        assert_eq!(d.features.get(1, 0), 2.5);
        assert_eq!(d.features.get(1, 53), 55.5);
    }

    #[test]
    fn short_row_reports_row_number() {
        let mut bad: Vec<&str> = Vec::new();
        let good = row(1.0, 2);
        let short = good.split_once(',').unwrap().1.to_string();
        bad.push(&good);
        bad.push(&short);
        let e = parse_covertype(bad.join("\n").as_bytes(), "fx").unwrap_err();
        assert!(matches!(e, Error::Csv { row: 2, .. }), "{e}");
    }

    #[test]
    fn non_numeric_cell() {
        let text = row(1.0, 2).replacen("3", "x", 1);
        let e = parse_covertype(text.as_bytes(), "fx").unwrap_err();
        assert!(matches!(e, Error::Csv { row: 1, .. }), "{e}");
    }
}
