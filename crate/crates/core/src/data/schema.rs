//! The 23 fine-grained categories, their merge into 14 training labels, and
//! the `child -> parent` schema file.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::labels::LabelSet;

/// Fine-grained categories in their canonical order.
pub const CATEGORIES_23: [&str; 23] = [
    "Role stereotyping",
    "Attribute stereotyping",
    "Body shaming",
    "Hyper-sexualization (excluding body shaming)",
    "Internalized sexism",
    "Pay gap",
    "Hostile work environment (excluding pay gap)",
    "Denial or trivialization of sexist misconduct",
    "Threats",
    "Rape",
    "Sexual assault (excluding rape)",
    "Sexual harassment (excluding assault)",
    "Tone policing",
    "Moral policing (excluding tone policing)",
    "Victim blaming",
    "Slut shaming",
    "Motherhood-related discrimination",
    "Menstruation-related discrimination",
    "Religion-based sexism",
    "Physical violence (excluding sexual violence)",
    "Mansplaining",
    "Gaslighting",
    "Other",
];

/// Categories that are folded into another one; everything else maps to itself.
pub const MERGES: [(&str, &str); 14] = [
    ("Pay gap", "Hostile work environment"),
    (
        "Hostile work environment (excluding pay gap)",
        "Hostile work environment",
    ),
    ("Rape", "Sexual assault"),
    ("Sexual assault (excluding rape)", "Sexual assault"),
    ("Tone policing", "Moral policing and victim blaming"),
    (
        "Moral policing (excluding tone policing)",
        "Moral policing and victim blaming",
    ),
    ("Victim blaming", "Moral policing and victim blaming"),
    (
        "Motherhood-related discrimination",
        "Motherhood and menstruation related discrimination",
    ),
    (
        "Menstruation-related discrimination",
        "Motherhood and menstruation related discrimination",
    ),
    ("Religion-based sexism", "Other"),
    ("Physical violence (excluding sexual violence)", "Other"),
    ("Mansplaining", "Other"),
    ("Gaslighting", "Other"),
    ("Other", "Other"),
];

/// An ordered set of fine categories and a surjective map onto the merged
/// (training) categories. Merged categories are ordered by first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSchema {
    fine: Vec<String>,
    merged: Vec<String>,
    parent: Vec<usize>,
}

fn key(name: &str) -> String {
    name.trim().to_lowercase()
}

impl LabelSchema {
    pub fn standard() -> Self {
        let pairs = CATEGORIES_23.iter().map(|&c| {
            let parent = MERGES
                .iter()
                .find(|(child, _)| *child == c)
                .map_or(c, |&(_, p)| p);
            (c.to_string(), parent.to_string())
        });
        Self::from_pairs(pairs).expect("built-in schema is valid")
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut fine: Vec<String> = Vec::new();
        let mut merged: Vec<String> = Vec::new();
        let mut parent = Vec::new();
        for (child, p) in pairs {
            if child.trim().is_empty() || p.trim().is_empty() {
                return Err(Error::Schema("empty category name".into()));
            }
            if fine.iter().any(|f| key(f) == key(&child)) {
                return Err(Error::Schema(format!("category {child:?} listed twice")));
            }
            let idx = match merged.iter().position(|m| key(m) == key(&p)) {
                Some(i) => i,
                None => {
                    merged.push(p.trim().to_string());
                    merged.len() - 1
                }
            };
            fine.push(child.trim().to_string());
            parent.push(idx);
        }
        if fine.is_empty() {
            return Err(Error::Schema("schema lists no categories".into()));
        }
        Ok(LabelSchema {
            fine,
            merged,
            parent,
        })
    }

    /// Parses `child -> parent` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((child, parent)) = line.split_once("->") else {
                return Err(Error::Schema(format!(
                    "line {}: expected `child -> parent`",
                    no + 1
                )));
            };
            pairs.push((child.trim().to_string(), parent.trim().to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (c, &p) in self.fine.iter().zip(&self.parent) {
            let _ = writeln!(out, "{c} -> {}", self.merged[p]);
        }
        out
    }

    pub fn fine(&self) -> &[String] {
        &self.fine
    }

    pub fn merged(&self) -> &[String] {
        &self.merged
    }

    pub fn fine_index(&self, name: &str) -> Option<usize> {
        self.fine.iter().position(|f| key(f) == key(name))
    }

    pub fn merged_index(&self, name: &str) -> Option<usize> {
        self.merged.iter().position(|m| key(m) == key(name))
    }

    pub fn parent_of(&self, fine_index: usize) -> usize {
        self.parent[fine_index]
    }

    /// Image of a fine label set under the merge map.
    pub fn merge_set(&self, labels: &LabelSet) -> LabelSet {
        labels.iter().map(|&i| self.parent[i]).collect()
    }

    /// Merges category names; unknown names are a schema error.
    pub fn merge_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<String>> {
        let mut out = LabelSet::new();
        for l in labels {
            let i = self
                .fine_index(l.as_ref())
                .ok_or_else(|| Error::Schema(format!("unknown category {:?}", l.as_ref())))?;
            out.insert(self.parent[i]);
        }
        Ok(out.into_iter().map(|i| self.merged[i].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_shape() {
        let s = LabelSchema::standard();
        assert_eq!(s.fine().len(), 23);
        assert_eq!(s.merged().len(), 14);
        assert_eq!(s.merged()[5], "Hostile work environment");
        assert_eq!(s.merged()[13], "Other");
    }

    #[test]
    fn merge_examples() {
        let s = LabelSchema::standard();
        assert_eq!(
            s.merge_labels(&["Pay gap"]).unwrap(),
            vec!["Hostile work environment"]
        );
        let mut got = s.merge_labels(&["Rape", "Tone policing"]).unwrap();
        got.sort();
        assert_eq!(
            got,
            vec!["Moral policing and victim blaming", "Sexual assault"]
        );
        assert_eq!(
            s.merge_labels(&["body shaming"]).unwrap(),
            vec!["Body shaming"]
        );
        assert!(matches!(s.merge_labels(&["Nope"]), Err(Error::Schema(_))));
    }

    #[test]
    fn file_round_trip() {
        let s = LabelSchema::standard();
        assert_eq!(LabelSchema::parse(&s.render()).unwrap(), s);
        assert!(LabelSchema::parse("a -> b\na -> c").is_err());
        assert!(LabelSchema::parse("a b").is_err());
    }
}
