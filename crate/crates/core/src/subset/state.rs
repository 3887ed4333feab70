use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pool::{LabeledPool, SampleId};

/// A multiset of pool samples: id → multiplicity (always ≥ 1).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetState {
    multiplicity: BTreeMap<SampleId, u32>,
}

impl SubsetState {
    pub fn new() -> Self {
        Self::default()
    }

    /// A set with every id at multiplicity 1.
    pub fn from_unique(ids: impl IntoIterator<Item = SampleId>) -> Result<Self> {
        let mut state = Self::new();
        for id in ids {
            state.insert_new(id)?;
        }
        Ok(state)
    }

    /// Adds an id that must not be present yet.
    pub fn insert_new(&mut self, id: SampleId) -> Result<()> {
        if self.multiplicity.insert(id, 1).is_some() {
            return Err(Error::DuplicateId(id));
        }
        Ok(())
    }

    /// Adds one more occurrence of `id`, returning the new multiplicity.
    pub fn increment(&mut self, id: SampleId) -> u32 {
        let m = self.multiplicity.entry(id).or_insert(0);
        *m += 1;
        *m
    }

    pub fn set_multiplicity(&mut self, id: SampleId, m: u32) -> Result<()> {
        if m == 0 {
            return Err(Error::Format(format!("zero multiplicity for sample {id}")));
        }
        self.multiplicity.insert(id, m);
        Ok(())
    }

    pub fn multiplicity(&self, id: SampleId) -> u32 {
        self.multiplicity.get(&id).copied().unwrap_or(0)
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.multiplicity.contains_key(&id)
    }

    pub fn unique_count(&self) -> usize {
        self.multiplicity.len()
    }

    pub fn total_count(&self) -> u64 {
        self.multiplicity.values().map(|&m| m as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.multiplicity.is_empty()
    }

    /// (id, multiplicity) in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (SampleId, u32)> + '_ {
        self.multiplicity.iter().map(|(&id, &m)| (id, m))
    }

    pub fn ids(&self) -> impl Iterator<Item = SampleId> + '_ {
        self.multiplicity.keys().copied()
    }

    /// Ascending ids, each repeated by its multiplicity.
    pub fn expanded(&self) -> Vec<SampleId> {
        let mut out = Vec::with_capacity(self.total_count() as usize);
        for (id, m) in self.iter() {
            out.extend(std::iter::repeat_n(id, m as usize));
        }
        out
    }

    pub fn is_set(&self) -> bool {
        self.multiplicity.values().all(|&m| m == 1)
    }

    pub fn validate_against(&self, pool: &LabeledPool) -> Result<()> {
        match self.ids().find(|&id| !pool.contains(id)) {
            Some(id) => Err(Error::UnknownId(id)),
            None => Ok(()),
        }
    }

    /// Pool ids not in the subset, ascending.
    pub fn complement(&self, pool: &LabeledPool) -> Vec<SampleId> {
        pool.sorted_ids().into_iter().filter(|&id| !self.contains(id)).collect()
    }

    /// Stable 64-bit digest of the (id, multiplicity) pairs.
    pub fn content_hash(&self) -> u64 {
        let mut hasher = Sha256::new();
        for (id, m) in self.iter() {
            hasher.update(id.0.to_le_bytes());
            hasher.update(m.to_le_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["sample_id", "multiplicity"])?;
        for (id, m) in self.iter() {
            wtr.write_record([id.0.to_string(), m.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() != 2 || &header[0] != "sample_id" || &header[1] != "multiplicity" {
            return Err(Error::Format("subset header must be sample_id,multiplicity".into()));
        }
        let mut state = Self::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Format("subset rows need two fields".into()));
            }
            let id = SampleId(
                record[0].parse().map_err(|_| Error::Format(format!("bad id `{}`", &record[0])))?,
            );
            let m: u32 = record[1]
                .parse()
                .map_err(|_| Error::Format(format!("bad multiplicity `{}`", &record[1])))?;
            if state.contains(id) {
                return Err(Error::DuplicateId(id));
            }
            state.set_multiplicity(id, m)?;
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_and_expansion() {
        let mut s = SubsetState::from_unique([SampleId(5), SampleId(1)]).unwrap();
        assert_eq!(s.increment(SampleId(5)), 2);
        assert_eq!(s.increment(SampleId(9)), 1);
        assert_eq!(s.unique_count(), 3);
        assert_eq!(s.total_count(), 4);
        assert_eq!(s.expanded(), vec![SampleId(1), SampleId(5), SampleId(5), SampleId(9)]);
        assert!(!s.is_set());
        assert!(s.insert_new(SampleId(1)).is_err());
    }

    #[test]
    fn hash_depends_on_multiplicity() {
        let a = SubsetState::from_unique([SampleId(1), SampleId(2)]).unwrap();
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.increment(SampleId(2));
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let mut s = SubsetState::from_unique([SampleId(3), SampleId(8)]).unwrap();
        s.increment(SampleId(8));
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(SubsetState::read_csv(buf.as_slice()).unwrap(), s);
        assert!(SubsetState::read_csv("sample_id,multiplicity\n1,0\n".as_bytes()).is_err());
        assert!(SubsetState::read_csv("sample_id,multiplicity\n1,1\n1,2\n".as_bytes()).is_err());
    }
}
