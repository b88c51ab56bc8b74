//! Run configuration in `key = value` form.
//!
//! ```text
//! arch = s(wl(elmo), tbert)
//! loss = ebce
//! epochs = 10
//! emb.elmo = data/elmo.wemb
//! emb.tbert = data/tbert.semb
//! ```
//!
//! Unset model dimensions fall back to the tuned preset for the
//! architecture when one exists, then to the general defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::arch::ModelConfig;
use crate::error::{Error, Result};
use crate::train::AdamConfig;

/// Tuned `(lstm_dim, attn_dim, filters_per_kernel)` per canonical expression.
pub const PRESETS: [(&str, usize, usize, usize); 7] = [
    ("s(wl(elmo), tbert)", 300, 600, 100),
    ("s(wl(elmo, glove), tbert)", 100, 100, 100),
    ("s(wl(elmo), wl(glove), tbert)", 100, 200, 100),
    ("s(wl(elmo), wl(glove), tbert, use)", 300, 600, 100),
    ("s(wl(elmo), wl(glove), wl(ling), tbert)", 300, 600, 100),
    ("s(wc(elmo), wc(glove), tbert)", 300, 600, 100),
    (
        "s(wc(elmo), wl(elmo), wc(glove), wl(glove), tbert)",
        300,
        500,
        100,
    ),
];

pub fn preset_for(canonical_arch: &str) -> Option<(usize, usize, usize)> {
    PRESETS
        .iter()
        .find(|p| p.0 == canonical_arch)
        .map(|&(_, l, a, f)| (l, a, f))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: String,
    pub model: ModelConfig,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub runs: usize,
    /// Fold the validation split into training.
    pub merge_validation: bool,
    pub data: Option<PathBuf>,
    pub embeddings: BTreeMap<String, PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub out: Option<PathBuf>,
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: String::new(),
            model: ModelConfig::default(),
            adam: AdamConfig::default(),
            epochs: 10,
            batch_size: 64,
            runs: 3,
            merge_validation: true,
            data: None,
            embeddings: BTreeMap::new(),
            lexicons: None,
            out: None,
            explicit: BTreeSet::new(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one field; the key names match the file format.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "arch" => self.arch = value.to_string(),
            "loss" => self.model.loss = value.parse()?,
            "lstm_dim" => self.model.lstm_dim = num(key, value)?,
            "attn_dim" => self.model.attn_dim = num(key, value)?,
            "filters_per_kernel" => self.model.filters_per_kernel = num(key, value)?,
            "max_sentences" => self.model.max_sentences = num(key, value)?,
            "max_words" => self.model.max_words = num(key, value)?,
            "dropout" => self.model.dropout = num(key, value)?,
            "seed" => self.model.seed = num(key, value)?,
            "lr" => self.adam.lr = num(key, value)?,
            "beta1" => self.adam.beta1 = num(key, value)?,
            "beta2" => self.adam.beta2 = num(key, value)?,
            "epsilon" => self.adam.eps = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "runs" => self.runs = num(key, value)?,
            "merge_validation" => self.merge_validation = boolean(key, value)?,
            "data" => self.data = Some(PathBuf::from(value)),
            "lexicons" => self.lexicons = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => match key.strip_prefix("emb.") {
                Some(id) if !id.is_empty() => {
                    self.embeddings
                        .insert(id.to_lowercase(), PathBuf::from(value));
                }
                _ => return Err(Error::Config(format!("unknown key {key:?}"))),
            },
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Fills unset dimensions from the preset matching `canonical_arch`.
    pub fn apply_preset(&mut self, canonical_arch: &str) -> bool {
        let Some((l, a, f)) = preset_for(canonical_arch) else {
            return false;
        };
        if !self.is_explicit("lstm_dim") {
            self.model.lstm_dim = l;
        }
        if !self.is_explicit("attn_dim") {
            self.model.attn_dim = a;
        }
        if !self.is_explicit("filters_per_kernel") {
            self.model.filters_per_kernel = f;
        }
        true
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.runs == 0 {
            return Err(Error::Config(
                "epochs, batch_size and runs must be positive".into(),
            ));
        }
        if !(self.adam.lr > 0.0)
            || !(0.0..1.0).contains(&self.adam.beta1)
            || !(0.0..1.0).contains(&self.adam.beta2)
        {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        Ok(())
    }

    /// Seeds of the individual runs: base seed plus 0, 1, 2, ...
    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.runs as u64)
            .map(|i| self.model.seed.wrapping_add(i))
            .collect()
    }

    pub fn render(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let _ = writeln!(out, "arch = {}", self.arch);
        let _ = writeln!(out, "loss = {}", m.loss);
        let _ = writeln!(
            out,
            "lstm_dim = {}\nattn_dim = {}\nfilters_per_kernel = {}",
            m.lstm_dim, m.attn_dim, m.filters_per_kernel
        );
        let _ = writeln!(
            out,
            "max_sentences = {}\nmax_words = {}\ndropout = {}\nseed = {}",
            m.max_sentences, m.max_words, m.dropout, m.seed
        );
        let a = &self.adam;
        let _ = writeln!(
            out,
            "lr = {}\nbeta1 = {}\nbeta2 = {}\nepsilon = {}",
            a.lr, a.beta1, a.beta2, a.eps
        );
        let _ = writeln!(
            out,
            "epochs = {}\nbatch_size = {}\nruns = {}",
            self.epochs, self.batch_size, self.runs
        );
        let _ = writeln!(out, "merge_validation = {}", self.merge_validation);
        for (key, path) in [
            ("data", &self.data),
            ("lexicons", &self.lexicons),
            ("out", &self.out),
        ] {
            if let Some(p) = path {
                let _ = writeln!(out, "{key} = {}", p.display());
            }
        }
        for (id, p) in &self.embeddings {
            let _ = writeln!(out, "emb.{id} = {}", p.display());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossKind;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.runs), (10, 64, 3));
        assert_eq!(
            c.adam,
            AdamConfig {
                lr: 0.001,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8
            }
        );
        assert_eq!(c.model.dropout, 0.25);
        assert_eq!(RunConfig { runs: 3, ..c }.run_seeds(), vec![0, 1, 2]);
    }

    #[test]
    fn parse_and_render() {
        let c = RunConfig::parse(
            "# comment\narch = s(wl(elmo), tbert)\nloss=nce\nemb.ELMo = a.wemb\nepochs = 2\n",
        )
        .unwrap();
        assert_eq!(c.model.loss, LossKind::Nce);
        assert_eq!(c.embeddings["elmo"], PathBuf::from("a.wemb"));
        let back = RunConfig::parse(&c.render()).unwrap();
        assert_eq!(
            (back.arch.clone(), back.epochs, back.embeddings.clone()),
            (c.arch.clone(), 2, c.embeddings.clone())
        );
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("epochs = many").is_err());
    }

    #[test]
    fn presets_respect_explicit_values() {
        let mut c = RunConfig::parse("attn_dim = 7").unwrap();
        assert!(c.apply_preset("s(wl(elmo), wl(glove), tbert)"));
        assert_eq!((c.model.lstm_dim, c.model.attn_dim), (100, 7));
        assert!(!c.apply_preset("s(wl(x))"));
    }
}
