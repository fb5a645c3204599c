use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Binary-labelled design matrix. The last feature column is the bias `1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature count including the bias column.
    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Shuffled split, deterministic in `seed`. Returns `(train, test)` and
    /// the train/test row indices into `self`.
    pub fn split_indices(
        &self,
        seed: u64,
        train_fraction: f64,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.len() as f64) * train_fraction).round() as usize;
        let test = order.split_off(n_train.min(self.len()));
        Ok((order, test))
    }

    pub fn split(&self, seed: u64, train_fraction: f64) -> Result<(Dataset, Dataset)> {
        let (train, test) = self.split_indices(seed, train_fraction)?;
        Ok((self.subset(&train), self.subset(&test)))
    }
}

/// Parses comma-separated rows `f_1,...,f_m,label` with `label` in `{0, 1}`
/// and appends the bias feature.
pub fn parse_csv<R: Read>(reader: R, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() < 2 {
            return Err(Error::Parse {
                line,
                message: "expected at least one feature and a label".into(),
            });
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse '{field}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value '{field}'"),
                });
            }
            row.push(v);
        }
        let label = row.pop().expect("at least two fields");
        if label != 0.0 && label != 1.0 {
            return Err(Error::InvalidData(format!(
                "line {line}: label must be 0 or 1, got {label}"
            )));
        }
        row.push(1.0);
        values.extend(row);
        labels.push(label);
    }
    let Some(w) = width else {
        return Err(Error::InvalidData("dataset has no rows".into()));
    };
    Ok(Dataset {
        features: DMatrix::from_row_slice(labels.len(), w, &values),
        labels,
    })
}

/// Loads a CSV dataset and splits it into `(train, test)`.
pub fn load_dataset(
    path: &Path,
    has_header: bool,
    split_seed: u64,
    train_fraction: f64,
) -> Result<(Dataset, Dataset)> {
    let data = parse_csv(File::open(path)?, has_header)?;
    data.split(split_seed, train_fraction)
}

/// Logistic-regression data from a ground-truth weight vector drawn from
/// `N(0, I)`. Features are standard normal; labels are Bernoulli with the
/// logistic probability. Returns the dataset (bias appended) and the weights.
pub fn synthetic_logistic(
    n_points: usize,
    n_raw_features: usize,
    seed: u64,
) -> (Dataset, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = n_raw_features + 1;
    let truth: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut features = DMatrix::zeros(n_points, d);
    let mut labels = Vec::with_capacity(n_points);
    for m in 0..n_points {
        for c in 0..n_raw_features {
            features[(m, c)] = rng.sample(StandardNormal);
        }
        features[(m, d - 1)] = 1.0;
        let z: f64 = (0..d).map(|c| features[(m, c)] * truth[c]).sum();
        let p = 1.0 / (1.0 + (-z).exp());
        labels.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
    }
    (Dataset { features, labels }, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_rows() -> String {
        (0..10)
            .map(|i| format!("{}.5,{},{}\n", i, -i, i % 2))
            .collect()
    }

    #[test]
    fn parses_and_appends_bias() {
        let d = parse_csv(ten_rows().as_bytes(), false).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.n_features(), 3);
        assert!(d.features.column(2).iter().all(|&v| v == 1.0));
        assert_eq!(d.features[(3, 0)], 3.5);
        assert_eq!(d.labels[3], 1.0);
    }

    #[test]
    fn header_is_skipped_when_requested() {
        let text = format!("a,b,label\n{}", ten_rows());
        assert_eq!(parse_csv(text.as_bytes(), true).unwrap().len(), 10);
        assert!(parse_csv(text.as_bytes(), false).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = parse_csv(ten_rows().as_bytes(), false).unwrap();
        let (tr, te) = d.split_indices(7, 0.8).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2) = d.split_indices(7, 0.8).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "1.0,0\n2.0,1\nabc,1\n";
        match parse_csv(text.as_bytes(), false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let ragged = "1.0,0\n2.0,3.0,1\n";
        assert!(matches!(
            parse_csv(ragged.as_bytes(), false),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn non_binary_label_rejected() {
        let text = "1.0,0\n2.0,2\n";
        assert!(matches!(
            parse_csv(text.as_bytes(), false),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(parse_csv("".as_bytes(), false).is_err());
    }

    #[test]
    fn synthetic_data_is_reproducible() {
        let (a, wa) = synthetic_logistic(50, 4, 3);
        let (b, wb) = synthetic_logistic(50, 4, 3);
        assert_eq!(a, b);
        assert_eq!(wa, wb);
        assert_eq!(a.n_features(), 5);
    }

    mod random_input {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn parsed_rows_are_finite_and_labelled(
                text in "([ 0-9.eE+-]{0,6}(,[ 0-9.eE+-]{0,6}){0,3}\n){0,6}",
                header in any::<bool>(),
            ) {
                if let Ok(ds) = parse_csv(text.as_bytes(), header) {
                    prop_assert_eq!(ds.features.nrows(), ds.labels.len());
                    prop_assert!(ds.features.iter().all(|v| v.is_finite()));
                    prop_assert!(ds.labels.iter().all(|&y| y == 0.0 || y == 1.0));
                }
            }

            #[test]
            fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
                let _ = parse_csv(bytes.as_slice(), false);
            }
        }
    }
}
