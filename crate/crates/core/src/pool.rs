//! Labeled sample pools.
//!
//! Pool files are CSV with a header row `sample_id,label,x_0,...,x_{D-1}`.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stable identifier of a pool sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub u64);

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Feature matrix with integer class labels and unique sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    features: Vec<f64>,
    labels: Vec<usize>,
    ids: Vec<SampleId>,
    dim: usize,
    classes: usize,
    index: HashMap<SampleId, usize>,
}

impl LabeledPool {
    /// `features` is row-major `ids.len() × dim`.
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        ids: Vec<SampleId>,
        dim: usize,
        classes: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ShapeMismatch("feature dimension must be positive".into()));
        }
        if classes == 0 {
            return Err(Error::ShapeMismatch("class count must be positive".into()));
        }
        if labels.len() != ids.len() || features.len() != ids.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} ids, {} labels, {} feature values for dimension {}",
                ids.len(),
                labels.len(),
                features.len(),
                dim
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite feature value".into()));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (row, &id) in ids.iter().enumerate() {
            if index.insert(id, row).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { features, labels, ids, dim, classes, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, id: SampleId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn features_at(&self, row: usize) -> &[f64] {
        &self.features[row * self.dim..(row + 1) * self.dim]
    }

    pub fn label_at(&self, row: usize) -> usize {
        self.labels[row]
    }

    pub fn features_of(&self, id: SampleId) -> Result<&[f64]> {
        self.row(id).map(|r| self.features_at(r)).ok_or(Error::UnknownId(id))
    }

    pub fn label_of(&self, id: SampleId) -> Result<usize> {
        self.row(id).map(|r| self.labels[r]).ok_or(Error::UnknownId(id))
    }

    /// Labels for `ids`, in the given order.
    pub fn labels_for(&self, ids: &[SampleId]) -> Result<Vec<usize>> {
        ids.iter().map(|&id| self.label_of(id)).collect()
    }

    /// Ids sorted ascending.
    pub fn sorted_ids(&self) -> Vec<SampleId> {
        let mut ids = self.ids.clone();
        ids.sort_unstable();
        ids
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["sample_id".to_string(), "label".to_string()];
        header.extend((0..self.dim).map(|d| format!("x_{d}")));
        wtr.write_record(&header)?;
        for row in 0..self.len() {
            let mut record = vec![self.ids[row].0.to_string(), self.labels[row].to_string()];
            record.extend(self.features_at(row).iter().map(|x| format!("{x:?}")));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Parses a pool CSV. The class count is `classes` when given, otherwise
    /// one more than the largest label.
    pub fn read_csv<R: Read>(reader: R, classes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3
            || &header[0] != "sample_id"
            || &header[1] != "label"
            || header.iter().skip(2).enumerate().any(|(d, h)| h != format!("x_{d}"))
        {
            return Err(Error::Format(
                "pool header must be sample_id,label,x_0,...,x_{D-1}".into(),
            ));
        }
        let dim = header.len() - 2;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != dim + 2 {
                return Err(Error::Format(format!(
                    "row {} has {} fields, expected {}",
                    line + 1,
                    record.len(),
                    dim + 2
                )));
            }
            ids.push(SampleId(parse_field(&record[0], "sample_id")?));
            labels.push(parse_field(&record[1], "label")?);
            for field in record.iter().skip(2) {
                features.push(parse_field::<f64>(field, "feature")?);
            }
        }
        let classes = match classes {
            Some(k) => k,
            None => labels.iter().max().map_or(0, |&m| m + 1),
        };
        if ids.is_empty() {
            return Err(Error::Format("pool has no samples".into()));
        }
        Self::new(features, labels, ids, dim, classes)
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Format(format!("cannot parse {what} from `{field}`")))
}
