//! Saved models: one JSON document holding the architecture, settings,
//! label names and every parameter as base64 little-endian `f32`.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use super::runner::{Classifier, Decoder, EpochLog};
use crate::arch::{ArchExpr, Model, ModelConfig, SourceCatalog};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const ARTIFACT_FORMAT: &str = "mlcat-model";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub version: u32,
    pub arch: String,
    pub word_sources: Vec<String>,
    pub sentence_sources: Vec<String>,
    pub config: ModelConfig,
    pub dims: BTreeMap<String, usize>,
    pub labels: Vec<String>,
    /// Rendered `child -> parent` schema the labels came from.
    pub schema: String,
    pub decoder: Decoder,
    /// Imputation means for linguistic features, when the model uses them.
    pub ling_means: Option<Vec<f64>>,
    pub params: Vec<StoredParam>,
    pub log: Vec<EpochLog>,
}

fn encode(values: &[f32]) -> String {
    let mut bytes = vec![0u8; values.len() * 4];
    LittleEndian::write_f32_into(values, &mut bytes);
    STANDARD.encode(bytes)
}

fn decode(name: &str, text: &str, count: usize) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Serialization(format!("parameter {name}: {e}")))?;
    if bytes.len() != count * 4 {
        return Err(Error::Serialization(format!(
            "parameter {name}: expected {count} values, got {} bytes",
            bytes.len()
        )));
    }
    let mut out = vec![0f32; count];
    LittleEndian::read_f32_into(&bytes, &mut out);
    Ok(out)
}

impl ModelArtifact {
    pub fn from_classifier(
        c: &Classifier<f32>,
        labels: Vec<String>,
        schema: String,
        ling_means: Option<Vec<f64>>,
    ) -> Self {
        let model = &c.model;
        let params = model
            .params()
            .iter()
            .map(|(name, t)| StoredParam {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: encode(t.data()),
            })
            .collect();
        ModelArtifact {
            format: ARTIFACT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            arch: model.arch().to_string(),
            word_sources: model
                .arch()
                .word_sources()
                .into_iter()
                .map(String::from)
                .collect(),
            sentence_sources: model
                .arch()
                .sentence_sources()
                .into_iter()
                .map(String::from)
                .collect(),
            config: model.config().clone(),
            dims: model.dims().clone(),
            labels,
            schema,
            decoder: c.decoder.clone(),
            ling_means,
            params,
            log: c.log.clone(),
        }
    }

    pub fn catalog(&self) -> SourceCatalog {
        let mut cat = SourceCatalog::empty();
        for w in &self.word_sources {
            cat.add_word(w);
        }
        for s in &self.sentence_sources {
            cat.add_sentence(s);
        }
        cat
    }

    pub fn to_classifier(&self) -> Result<Classifier<f32>> {
        if self.format != ARTIFACT_FORMAT || self.version != ARTIFACT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model format {} v{}",
                self.format, self.version
            )));
        }
        let arch = ArchExpr::parse(&self.arch, &self.catalog())?;
        let outputs = match &self.decoder {
            Decoder::Powerset(m) => m.len(),
            _ => self.labels.len(),
        };
        let mut model = Model::<f32>::build(&arch, &self.config, &self.dims, outputs)?;
        let names: Vec<String> = model.params().iter().map(|(n, _)| n.to_string()).collect();
        if names.len() != self.params.len() {
            return Err(Error::Serialization(format!(
                "model has {} parameters, file has {}",
                names.len(),
                self.params.len()
            )));
        }
        let mut values = Vec::with_capacity(names.len());
        for (expected, p) in names.iter().zip(&self.params) {
            if *expected != p.name {
                return Err(Error::Serialization(format!(
                    "expected parameter {expected}, found {}",
                    p.name
                )));
            }
            let count = p.shape.iter().product();
            values.push(Tensor::new(
                p.shape.clone(),
                decode(&p.name, &p.data, count)?,
            )?);
        }
        model.params_mut().load(values)?;
        Ok(Classifier {
            model,
            decoder: self.decoder.clone(),
            num_labels: self.labels.len(),
            log: self.log.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_bits_survive() {
        let v = [0.1f32, -0.0, f32::MIN_POSITIVE, 1e-45, 3.4e38];
        let back = decode("x", &encode(&v), v.len()).unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(decode("x", &encode(&v), 4).is_err());
        assert!(decode("x", "!!", 1).is_err());
    }
}
