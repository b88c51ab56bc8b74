use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;

/// Observed label combinations and their dense class ids. Combinations
/// never seen in training cannot be predicted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowersetMapping {
    classes: Vec<LabelSet>,
    #[serde(skip)]
    lookup: HashMap<Vec<usize>, usize>,
}

fn key(set: &LabelSet) -> Vec<usize> {
    set.iter().copied().collect()
}

impl PowersetMapping {
    pub fn from_classes(classes: Vec<LabelSet>) -> Result<Self> {
        let mut lookup = HashMap::new();
        for (i, c) in classes.iter().enumerate() {
            if lookup.insert(key(c), i).is_some() {
                return Err(Error::Mapping(format!("combination {c:?} listed twice")));
            }
        }
        Ok(PowersetMapping { classes, lookup })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[LabelSet] {
        &self.classes
    }

    pub fn encode(&self, set: &LabelSet) -> Option<usize> {
        if self.lookup.len() != self.classes.len() {
            return self.classes.iter().position(|c| c == set);
        }
        self.lookup.get(&key(set)).copied()
    }

    pub fn decode(&self, id: usize) -> Result<LabelSet> {
        self.classes.get(id).cloned().ok_or_else(|| {
            Error::Mapping(format!(
                "class id {id} out of range for {} combinations",
                self.classes.len()
            ))
        })
    }
}

/// Assigns ids to distinct label sets in first-appearance order.
pub fn lp_encode(sets: &[LabelSet]) -> Result<(Vec<usize>, PowersetMapping)> {
    if sets.is_empty() {
        return Err(Error::EmptyInput("no label sets to encode".into()));
    }
    let mut mapping = PowersetMapping::default();
    let mut ids = Vec::with_capacity(sets.len());
    for (i, s) in sets.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::InvalidTarget(format!(
                "row {i} has an empty label set"
            )));
        }
        let id = match mapping.lookup.get(&key(s)) {
            Some(&id) => id,
            None => {
                mapping.classes.push(s.clone());
                mapping.lookup.insert(key(s), mapping.classes.len() - 1);
                mapping.classes.len() - 1
            }
        };
        ids.push(id);
    }
    Ok((ids, mapping))
}

pub fn lp_decode(id: usize, mapping: &PowersetMapping) -> Result<LabelSet> {
    mapping.decode(id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_appearance_ids() {
        let rows = vec![
            LabelSet::from([0]),
            LabelSet::from([0, 1]),
            LabelSet::from([0]),
        ];
        let (ids, m) = lp_encode(&rows).unwrap();
        assert_eq!(ids, vec![0, 1, 0]);
        assert_eq!(m.len(), 2);
        assert_eq!(
            lp_decode(m.encode(&LabelSet::from([0, 1])).unwrap(), &m).unwrap(),
            LabelSet::from([0, 1])
        );
        assert!(matches!(m.decode(2), Err(Error::Mapping(_))));
    }

    #[test]
    fn serde_round_trip_rebuilds_lookup() {
        let (_, m) = lp_encode(&[LabelSet::from([2]), LabelSet::from([1, 3])]).unwrap();
        let back: PowersetMapping =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back.encode(&LabelSet::from([1, 3])), Some(1));
        let rebuilt = PowersetMapping::from_classes(back.classes().to_vec()).unwrap();
        assert_eq!(rebuilt, m);
    }
}
