//! Per-word linguistic feature vectors built from lexicon files.
//!
//! Layout (33 slots): ten binary lexicons, ten PERMA scores (five factors,
//! positive then negative), ten NRC scores (eight emotions, two sentiments),
//! three VAD scores. Binary slots are 0 for unknown words; scored slots fall
//! back to a per-slot mean fitted on the training vocabulary.
//!
//! A lexicon directory holds `<name>.txt` (one token per line) for binary
//! lexicons and `<slot>.tsv` (`token<TAB>score`) for scored slots. Missing
//! files are treated as empty lexicons.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use log::warn;

use crate::data::{EmbeddingTable, Example};
use crate::error::{Error, Result};

pub const BINARY_LEXICONS: [&str; 10] = [
    "assertive",
    "implicative",
    "hedges",
    "factive",
    "report",
    "entailment",
    "strong_subjective",
    "weak_subjective",
    "positive",
    "negative",
];

pub const SCORED_SLOTS: [&str; 23] = [
    "perma.pos_p",
    "perma.pos_e",
    "perma.pos_r",
    "perma.pos_m",
    "perma.pos_a",
    "perma.neg_p",
    "perma.neg_e",
    "perma.neg_r",
    "perma.neg_m",
    "perma.neg_a",
    "nrc.anger",
    "nrc.anticipation",
    "nrc.disgust",
    "nrc.fear",
    "nrc.joy",
    "nrc.sadness",
    "nrc.surprise",
    "nrc.trust",
    "nrc.negative",
    "nrc.positive",
    "vad.valence",
    "vad.arousal",
    "vad.dominance",
];

pub const FEATURE_WIDTH: usize = BINARY_LEXICONS.len() + SCORED_SLOTS.len();

/// Source id of the linguistic word features.
pub const LING_SOURCE: &str = "ling";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LexiconSet {
    binary: Vec<HashSet<String>>,
    scored: Vec<HashMap<String, f64>>,
}

const SAMPLE: [(&str, &str); 15] = [
    ("assertive.txt", include_str!("../lexicons/assertive.txt")),
    ("hedges.txt", include_str!("../lexicons/hedges.txt")),
    ("factive.txt", include_str!("../lexicons/factive.txt")),
    ("report.txt", include_str!("../lexicons/report.txt")),
    (
        "strong_subjective.txt",
        include_str!("../lexicons/strong_subjective.txt"),
    ),
    (
        "weak_subjective.txt",
        include_str!("../lexicons/weak_subjective.txt"),
    ),
    ("positive.txt", include_str!("../lexicons/positive.txt")),
    ("negative.txt", include_str!("../lexicons/negative.txt")),
    (
        "perma.pos_p.tsv",
        include_str!("../lexicons/perma.pos_p.tsv"),
    ),
    (
        "perma.neg_p.tsv",
        include_str!("../lexicons/perma.neg_p.tsv"),
    ),
    ("nrc.joy.tsv", include_str!("../lexicons/nrc.joy.tsv")),
    ("nrc.anger.tsv", include_str!("../lexicons/nrc.anger.tsv")),
    (
        "vad.valence.tsv",
        include_str!("../lexicons/vad.valence.tsv"),
    ),
    (
        "vad.arousal.tsv",
        include_str!("../lexicons/vad.arousal.tsv"),
    ),
    (
        "vad.dominance.tsv",
        include_str!("../lexicons/vad.dominance.tsv"),
    ),
];

fn parse_binary(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

fn parse_scored(file: &str, text: &str) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = line
            .split_once('\t')
            .and_then(|(t, s)| Some((t.trim(), s.trim().parse::<f64>().ok()?)));
        match parsed {
            Some((token, score)) if score.is_finite() => {
                out.insert(token.to_lowercase(), score);
            }
            _ => {
                return Err(Error::Config(format!(
                    "{file} line {}: expected token<TAB>score",
                    no + 1
                )))
            }
        }
    }
    Ok(out)
}

impl LexiconSet {
    pub fn empty() -> Self {
        LexiconSet {
            binary: vec![HashSet::new(); BINARY_LEXICONS.len()],
            scored: vec![HashMap::new(); SCORED_SLOTS.len()],
        }
    }

    fn from_files(mut read: impl FnMut(&str) -> Result<Option<String>>) -> Result<Self> {
        let mut set = LexiconSet::empty();
        let mut found = 0;
        for (i, name) in BINARY_LEXICONS.iter().enumerate() {
            if let Some(text) = read(&format!("{name}.txt"))? {
                set.binary[i] = parse_binary(&text);
                found += 1;
            }
        }
        for (i, slot) in SCORED_SLOTS.iter().enumerate() {
            let file = format!("{slot}.tsv");
            if let Some(text) = read(&file)? {
                set.scored[i] = parse_scored(&file, &text)?;
                found += 1;
            }
        }
        if found == 0 {
            return Err(Error::Config("no lexicon files found".into()));
        }
        Ok(set)
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let set = Self::from_files(|file| {
            let path = dir.join(file);
            match std::fs::read_to_string(&path) {
                Ok(t) => Ok(Some(t)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e.into()),
            }
        })?;
        for (i, name) in BINARY_LEXICONS.iter().enumerate() {
            if set.binary[i].is_empty() {
                warn!("lexicon {name} is empty or missing in {}", dir.display());
            }
        }
        Ok(set)
    }

    /// Tiny bundled lexicons, enough to exercise every code path.
    pub fn sample() -> Self {
        let files: HashMap<&str, &str> = SAMPLE.into_iter().collect();
        Self::from_files(|f| Ok(files.get(f).map(|t| t.to_string())))
            .expect("bundled lexicons parse")
    }

    pub fn insert_binary(&mut self, lexicon: usize, token: &str) {
        self.binary[lexicon].insert(token.to_lowercase());
    }

    pub fn insert_score(&mut self, slot: usize, token: &str, score: f64) {
        self.scored[slot].insert(token.to_lowercase(), score);
    }

    pub fn score(&self, slot: usize, token: &str) -> Option<f64> {
        self.scored[slot].get(token).copied()
    }

    /// Per-slot means over `training_vocab` tokens found in each scored
    /// lexicon. A slot with no such token uses the mean of the whole
    /// lexicon, and an empty lexicon uses 0.
    pub fn fit<'a>(&self, training_vocab: impl IntoIterator<Item = &'a str>) -> LingFeaturizer {
        let vocab: BTreeSet<&str> = training_vocab.into_iter().collect();
        let means = self
            .scored
            .iter()
            .map(|lex| {
                let covered: Vec<f64> = vocab.iter().filter_map(|t| lex.get(*t).copied()).collect();
                if !covered.is_empty() {
                    covered.iter().sum::<f64>() / covered.len() as f64
                } else if !lex.is_empty() {
                    let mut all: Vec<f64> = lex.values().copied().collect();
                    all.sort_by(f64::total_cmp);
                    all.iter().sum::<f64>() / all.len() as f64
                } else {
                    0.0
                }
            })
            .collect();
        LingFeaturizer {
            lexicons: self.clone(),
            means,
        }
    }
}

/// A lexicon set plus the imputation means fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct LingFeaturizer {
    lexicons: LexiconSet,
    means: Vec<f64>,
}

impl LingFeaturizer {
    /// Rebuilds a featurizer from stored means, e.g. from a saved model.
    pub fn with_means(lexicons: LexiconSet, means: Vec<f64>) -> Result<Self> {
        if means.len() != SCORED_SLOTS.len() {
            return Err(Error::Config(format!(
                "expected {} lexicon means, got {}",
                SCORED_SLOTS.len(),
                means.len()
            )));
        }
        Ok(LingFeaturizer { lexicons, means })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn featurize_word(&self, token: &str) -> Vec<f64> {
        let mut out = Vec::with_capacity(FEATURE_WIDTH);
        for lex in &self.lexicons.binary {
            out.push(if lex.contains(token) { 1.0 } else { 0.0 });
        }
        for (lex, &mean) in self.lexicons.scored.iter().zip(&self.means) {
            out.push(lex.get(token).copied().unwrap_or(mean));
        }
        out
    }
}

/// Sorted distinct tokens of the given posts.
pub fn vocabulary<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Vec<String> {
    let set: BTreeSet<&str> = examples
        .into_iter()
        .flat_map(|e| e.sentences.iter().flatten().map(String::as_str))
        .collect();
    set.into_iter().map(str::to_string).collect()
}

/// Word table of linguistic features for every token in `vocab`.
pub fn build_ling_source(vocab: &[String], featurizer: &LingFeaturizer) -> Result<EmbeddingTable> {
    if vocab.is_empty() {
        return Err(Error::EmptyInput(
            "empty vocabulary for linguistic features".into(),
        ));
    }
    let mut table = EmbeddingTable::new(FEATURE_WIDTH)?;
    for token in vocab {
        let v: Vec<f32> = featurizer
            .featurize_word(token)
            .iter()
            .map(|&x| x as f32)
            .collect();
        table.insert(token, &v)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(name: &str) -> usize {
        SCORED_SLOTS.iter().position(|s| *s == name).unwrap()
    }

    #[test]
    fn layout_width() {
        assert_eq!(FEATURE_WIDTH, 33);
        let f = LexiconSet::sample().fit(["boss"]);
        assert_eq!(f.featurize_word("anything").len(), 33);
    }

    #[test]
    fn unknown_token_gets_means() {
        let f = LexiconSet::sample().fit(["happy", "awful", "boss"]);
        let v = f.featurize_word("zzz");
        assert!(v[..10].iter().all(|&x| x == 0.0));
        assert_eq!(&v[10..], f.means());
    }

    #[test]
    fn hedge_only() {
        let f = LexiconSet::sample().fit(["maybe"]);
        let v = f.featurize_word("maybe");
        let hedge = BINARY_LEXICONS.iter().position(|n| *n == "hedges").unwrap();
        for (i, &x) in v[..10].iter().enumerate() {
            assert_eq!(x, if i == hedge { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn mean_of_scored_lexicon() {
        let mut lex = LexiconSet::empty();
        lex.insert_score(0, "a", 0.2);
        lex.insert_score(0, "b", 0.8);
        let f = lex.fit(["a", "b", "c"]);
        assert!((f.featurize_word("unknown")[10] - 0.5).abs() < 1e-12);
        // only training tokens count
        let f = lex.fit(["a"]);
        assert!((f.featurize_word("unknown")[10] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn table_from_vocabulary() {
        let f = LexiconSet::sample().fit(["boss"]);
        let vocab: Vec<String> = ["a", "boss", "happy"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let t = build_ling_source(&vocab, &f).unwrap();
        assert_eq!((t.len(), t.dim()), (3, 33));
        assert_eq!(
            EmbeddingTable::from_bytes(&t.to_bytes().unwrap()).unwrap(),
            t
        );
        assert_eq!(t.get("happy").unwrap()[10 + slot("vad.valence")], 0.95);
        assert!(build_ling_source(&[], &f).is_err());
    }

    #[test]
    fn load_dir_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("hedges.txt"), "Maybe\n").unwrap();
        std::fs::write(dir.path().join("vad.valence.tsv"), "x\t0.3\n").unwrap();
        let lex = LexiconSet::load_dir(dir.path()).unwrap();
        assert_eq!(lex.score(slot("vad.valence"), "x"), Some(0.3));
        assert!(LexiconSet::load_dir(&dir.path().join("nowhere")).is_err());
        std::fs::write(dir.path().join("vad.arousal.tsv"), "x 0.3\n").unwrap();
        assert!(matches!(
            LexiconSet::load_dir(dir.path()),
            Err(Error::Config(_))
        ));
    }
}
