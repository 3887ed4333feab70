//! `N × E × K` prediction tensors and their on-disk formats.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! b"ALPT" | u16 version = 1 | u32 N | u32 E | u32 K
//! | N·E·K × f32 probabilities, (sample, member, class) row-major
//! | N × u64 sample ids
//! ```
//!
//! The CSV form has a header `sample_id,member,p_0,...,p_{K-1}` and one row
//! per (sample, member) pair.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use crate::acquisition::{validate_distribution, EnsemblePrediction};
use crate::error::{Error, Result};
use crate::pool::SampleId;

const MAGIC: &[u8; 4] = b"ALPT";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTensor {
    samples: usize,
    members: usize,
    classes: usize,
    data: Vec<f32>,
    sample_ids: Vec<SampleId>,
}

impl PredictionTensor {
    pub fn new(
        samples: usize,
        members: usize,
        classes: usize,
        data: Vec<f32>,
        sample_ids: Vec<SampleId>,
    ) -> Result<Self> {
        if members == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if classes == 0 {
            return Err(Error::ShapeMismatch("tensor has zero classes".into()));
        }
        let expected = samples
            .checked_mul(members)
            .and_then(|x| x.checked_mul(classes))
            .ok_or_else(|| Error::ShapeMismatch("tensor dimensions overflow".into()))?;
        if data.len() != expected || sample_ids.len() != samples {
            return Err(Error::ShapeMismatch(format!(
                "{} values and {} ids for a {samples}×{members}×{classes} tensor",
                data.len(),
                sample_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(samples);
        if let Some(&dup) = sample_ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::DuplicateId(dup));
        }
        let mut row = Vec::with_capacity(classes.min(data.len()));
        for slice in data.chunks_exact(classes) {
            row.clear();
            row.extend(slice.iter().map(|&p| p as f64));
            validate_distribution(&row)?;
        }
        Ok(Self { samples, members, classes, data, sample_ids })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn sample_ids(&self) -> &[SampleId] {
        &self.sample_ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Probabilities of `member` for sample index `n`.
    pub fn slice(&self, n: usize, member: usize) -> &[f32] {
        let start = (n * self.members + member) * self.classes;
        &self.data[start..start + self.classes]
    }

    /// Top-1 class of `member` for sample `n`, ties to the lowest class.
    pub fn vote(&self, n: usize, member: usize) -> usize {
        let s = self.slice(n, member);
        let mut best = 0;
        for (i, &v) in s.iter().enumerate().skip(1) {
            if v > s[best] {
                best = i;
            }
        }
        best
    }

    pub fn ensemble(&self, n: usize) -> Result<EnsemblePrediction> {
        let start = n * self.members * self.classes;
        let probs = self.data[start..start + self.members * self.classes]
            .iter()
            .map(|&p| p as f64)
            .collect();
        EnsemblePrediction::from_flat(probs, self.members, self.classes)
    }

    /// Reorders the member axis: member `i` of the result is member `order[i]` of `self`.
    pub fn select_members(&self, order: &[usize]) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if let Some(&bad) = order.iter().find(|&&m| m >= self.members) {
            return Err(Error::ShapeMismatch(format!("member {bad} out of range")));
        }
        let mut data = Vec::with_capacity(self.samples * order.len() * self.classes);
        for n in 0..self.samples {
            for &m in order {
                data.extend_from_slice(self.slice(n, m));
            }
        }
        Ok(Self {
            samples: self.samples,
            members: order.len(),
            classes: self.classes,
            data,
            sample_ids: self.sample_ids.clone(),
        })
    }

    pub fn to_alpt_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4 + self.samples * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for dim in [self.samples, self.members, self.classes] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for p in &self.data {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for id in &self.sample_ids {
            out.extend_from_slice(&id.0.to_le_bytes());
        }
        out
    }

    pub fn write_alpt<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(&self.to_alpt_bytes())?;
        Ok(())
    }

    pub fn from_alpt_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format("truncated ALPT header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad ALPT magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported ALPT version {version}")));
        }
        let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let (samples, members, classes) = (dim(6), dim(10), dim(14));
        let values = samples
            .checked_mul(members)
            .and_then(|x| x.checked_mul(classes))
            .ok_or_else(|| Error::Format("ALPT dimensions overflow".into()))?;
        let body = values
            .checked_mul(4)
            .and_then(|x| x.checked_add(samples.checked_mul(8)?))
            .ok_or_else(|| Error::Format("ALPT dimensions overflow".into()))?;
        let rest = &bytes[HEADER_LEN..];
        if rest.len() != body {
            return Err(Error::Format(format!(
                "ALPT body is {} bytes, header implies {body}",
                rest.len()
            )));
        }
        let (probs, ids) = rest.split_at(values * 4);
        let data = probs
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let sample_ids = ids
            .chunks_exact(8)
            .map(|c| SampleId(u64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Self::new(samples, members, classes, data, sample_ids)
    }

    pub fn read_alpt<R: Read>(mut reader: R) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Self::from_alpt_bytes(&bytes)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["sample_id".to_string(), "member".to_string()];
        header.extend((0..self.classes).map(|k| format!("p_{k}")));
        wtr.write_record(&header)?;
        for n in 0..self.samples {
            for e in 0..self.members {
                let mut record = vec![self.sample_ids[n].0.to_string(), e.to_string()];
                record.extend(self.slice(n, e).iter().map(|p| format!("{p:?}")));
                wtr.write_record(&record)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Parses the CSV form. Samples keep the order of their first row; every
    /// sample must list members `0..E` exactly once, with the same `E` throughout.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3
            || &header[0] != "sample_id"
            || &header[1] != "member"
            || header.iter().skip(2).enumerate().any(|(k, h)| h != format!("p_{k}"))
        {
            return Err(Error::Format("header must be sample_id,member,p_0,...".into()));
        }
        let classes = header.len() - 2;
        let mut order: Vec<SampleId> = Vec::new();
        let mut rows: HashMap<SampleId, Vec<Option<Vec<f32>>>> = HashMap::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != classes + 2 {
                return Err(Error::Format(format!(
                    "row has {} fields, expected {}",
                    record.len(),
                    classes + 2
                )));
            }
            let id = SampleId(parse(&record[0], "sample_id")?);
            let member: usize = parse(&record[1], "member")?;
            let probs = record
                .iter()
                .skip(2)
                .map(|f| parse::<f32>(f, "probability"))
                .collect::<Result<Vec<_>>>()?;
            let slots = rows.entry(id).or_insert_with(|| {
                order.push(id);
                Vec::new()
            });
            if member >= slots.len() {
                // Members are small integers; refuse absurd indices before allocating.
                if member > 1 << 20 {
                    return Err(Error::Format(format!("member index {member} too large")));
                }
                slots.resize(member + 1, None);
            }
            if slots[member].replace(probs).is_some() {
                return Err(Error::Format(format!("sample {id} lists member {member} twice")));
            }
        }
        let members = order.first().map_or(0, |id| rows[id].len());
        let mut data = Vec::with_capacity(order.len() * members * classes);
        for id in &order {
            let slots = &rows[id];
            if slots.len() != members {
                return Err(Error::Format(format!(
                    "sample {id} has {} members, expected {members}",
                    slots.len()
                )));
            }
            for (e, slot) in slots.iter().enumerate() {
                let probs = slot
                    .as_ref()
                    .ok_or_else(|| Error::Format(format!("sample {id} is missing member {e}")))?;
                data.extend_from_slice(probs);
            }
        }
        if order.is_empty() {
            return Err(Error::Format("no prediction rows".into()));
        }
        Self::new(order.len(), members, classes, data, order)
    }
}

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Format(format!("cannot parse {what} from `{field}`")))
}
