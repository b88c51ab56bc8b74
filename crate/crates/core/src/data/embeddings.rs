//! Binary embedding files. All integers and floats are little-endian.
//!
//! Word table (`WEMB`):
//! ```text
//! "WEMB" u32 version=1 u32 vocab u32 dim
//! vocab x { u16 len, len bytes UTF-8 token, dim x f32 }
//! ```
//!
//! Sentence store (`SEMB`):
//! ```text
//! "SEMB" u32 version=1 u32 dim u64 records
//! records x { u16 len, len bytes UTF-8 post id, u16 sentences, sentences x dim x f32 }
//! ```

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};

const WORD_MAGIC: &[u8; 4] = b"WEMB";
const SENTENCE_MAGIC: &[u8; 4] = b"SEMB";
const VERSION: u32 = 1;

/// Token to vector map of a fixed width. Unknown tokens read as zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Adds or replaces a token's vector.
    pub fn insert(&mut self, token: &str, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::dim(format!(
                "vector for {token:?} has width {}, table width is {}",
                vector.len(),
                self.dim
            )));
        }
        match self.index.get(token) {
            Some(&i) => self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(token.to_string(), self.tokens.len());
                self.tokens.push(token.to_string());
                self.data.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn expect_dim(&self, source: &str, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::Config(format!(
                "source {source:?} has dimension {}, expected {dim}",
                self.dim
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 4);
        out.extend_from_slice(WORD_MAGIC);
        out.write_u32::<LittleEndian>(VERSION)?;
        out.write_u32::<LittleEndian>(count_u32(self.tokens.len(), "vocabulary size")?)?;
        out.write_u32::<LittleEndian>(count_u32(self.dim, "dimension")?)?;
        for (i, t) in self.tokens.iter().enumerate() {
            write_str(&mut out, t)?;
            write_f32s(&mut out, &self.data[i * self.dim..(i + 1) * self.dim])?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        r.magic(WORD_MAGIC)?;
        r.version()?;
        let vocab = r.u32()? as usize;
        let dim_at = r.pos;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(r.error_at(dim_at, "dimension is zero"));
        }
        let mut table = EmbeddingTable::new(dim)?;
        for _ in 0..vocab {
            let at = r.pos;
            let token = r.string()?;
            if table.contains(&token) {
                return Err(r.error_at(at, format!("duplicate token {token:?}")));
            }
            let v = r.f32s(dim)?;
            table.insert(&token, &v)?;
        }
        r.end()?;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Per-post sentence vectors of a fixed width.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<Vec<f32>>,
}

impl SentenceStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(SentenceStore {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// `vectors` holds `sentences * dim` values, row-major.
    pub fn insert(&mut self, post_id: &str, vectors: Vec<f32>) -> Result<()> {
        if vectors.is_empty() || vectors.len() % self.dim != 0 {
            return Err(Error::dim(format!(
                "post {post_id:?}: {} values is not a positive multiple of width {}",
                vectors.len(),
                self.dim
            )));
        }
        match self.index.get(post_id) {
            Some(&i) => self.vectors[i] = vectors,
            None => {
                self.index.insert(post_id.to_string(), self.ids.len());
                self.ids.push(post_id.to_string());
                self.vectors.push(vectors);
            }
        }
        Ok(())
    }

    pub fn sentence_count(&self, post_id: &str) -> Option<usize> {
        self.index
            .get(post_id)
            .map(|&i| self.vectors[i].len() / self.dim)
    }

    /// Vectors of one post, `sentences * dim` values.
    pub fn get(&self, post_id: &str) -> Option<&[f32]> {
        self.index.get(post_id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn expect_dim(&self, source: &str, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::Config(format!(
                "source {source:?} has dimension {}, expected {dim}",
                self.dim
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(SENTENCE_MAGIC);
        out.write_u32::<LittleEndian>(VERSION)?;
        out.write_u32::<LittleEndian>(count_u32(self.dim, "dimension")?)?;
        out.write_u64::<LittleEndian>(self.ids.len() as u64)?;
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            write_str(&mut out, id)?;
            let count = v.len() / self.dim;
            let count = u16::try_from(count).map_err(|_| Error::Format {
                offset: out.len() as u64,
                message: format!("post {id:?} has {count} sentences"),
            })?;
            out.write_u16::<LittleEndian>(count)?;
            write_f32s(&mut out, v)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        r.magic(SENTENCE_MAGIC)?;
        r.version()?;
        let dim_at = r.pos;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(r.error_at(dim_at, "dimension is zero"));
        }
        let records = r.u64()?;
        let mut store = SentenceStore::new(dim)?;
        for _ in 0..records {
            let at = r.pos;
            let id = r.string()?;
            if store.index.contains_key(&id) {
                return Err(r.error_at(at, format!("duplicate post id {id:?}")));
            }
            let count_at = r.pos;
            let count = r.u16()? as usize;
            if count == 0 {
                return Err(r.error_at(count_at, format!("post {id:?} has no sentences")));
            }
            let v = r.f32s(count * dim)?;
            store.insert(&id, v)?;
        }
        r.end()?;
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn count_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format {
        offset: 0,
        message: format!("{what} {n} does not fit in u32"),
    })
}

fn write_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::Format {
        offset: out.len() as u64,
        message: format!("string of {} bytes is too long", s.len()),
    })?;
    out.write_u16::<LittleEndian>(len)?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn write_f32s(out: &mut Vec<u8>, values: &[f32]) -> Result<()> {
    for &v in values {
        out.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn error_at(&self, at: usize, message: impl Into<String>) -> Error {
        Error::Format {
            offset: at as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error_at(
                self.pos,
                format!(
                    "truncated: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        if self.take(4)? != want {
            return Err(self.error_at(
                0,
                format!("bad magic, expected {:?}", String::from_utf8_lossy(want)),
            ));
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let at = self.pos;
        let v = self.u32()?;
        if v != VERSION {
            return Err(self.error_at(at, format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(LittleEndian::read_u16(self.take(2)?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let at = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.error_at(at, "invalid UTF-8"))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes_needed = n
            .checked_mul(4)
            .ok_or_else(|| self.error_at(self.pos, "payload size overflows"))?;
        let raw = self.take(bytes_needed)?;
        let mut out = vec![0f32; n];
        LittleEndian::read_f32_into(raw, &mut out);
        Ok(out)
    }

    fn end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error_at(
                self.pos,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

/// Either kind of embedding file.
#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingFile {
    Word(EmbeddingTable),
    Sentence(SentenceStore),
}

impl EmbeddingFile {
    /// Dispatches on the leading magic bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        match bytes.get(..4) {
            Some(m) if m == WORD_MAGIC => {
                Ok(EmbeddingFile::Word(EmbeddingTable::from_bytes(bytes)?))
            }
            Some(m) if m == SENTENCE_MAGIC => {
                Ok(EmbeddingFile::Sentence(SentenceStore::from_bytes(bytes)?))
            }
            _ => Err(Error::Format {
                offset: 0,
                message: "expected WEMB or SEMB magic".into(),
            }),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_table_round_trip() {
        let mut t = EmbeddingTable::new(3).unwrap();
        t.insert("a", &[1.0, -2.0, 0.5]).unwrap();
        t.insert("\u{e9}t\u{e9}", &[f32::MIN_POSITIVE, 0.0, -0.0])
            .unwrap();
        let bytes = t.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"WEMB");
        let back = EmbeddingTable::from_bytes(&bytes).unwrap();
        assert_eq!(back.get("a").unwrap(), &[1.0, -2.0, 0.5]);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!(back.get("zzz").is_none());
    }

    #[test]
    fn truncated_and_bad_magic() {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("a", &[1.0, 2.0]).unwrap();
        let bytes = t.to_bytes().unwrap();
        let err = EmbeddingTable::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 19, .. }), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            EmbeddingTable::from_bytes(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut extra = bytes;
        extra.push(0);
        assert!(EmbeddingTable::from_bytes(&extra).is_err());
    }

    #[test]
    fn sentence_store_round_trip() {
        let mut s = SentenceStore::new(2).unwrap();
        s.insert("p1", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        s.insert("p2", vec![5.0, 6.0]).unwrap();
        let bytes = s.to_bytes().unwrap();
        let back = SentenceStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.sentence_count("p1"), Some(2));
        let version_bumped = [&bytes[..4], &[2, 0, 0, 0], &bytes[8..]].concat();
        assert!(matches!(
            SentenceStore::from_bytes(&version_bumped),
            Err(Error::Format { offset: 4, .. })
        ));
        assert!(s.insert("p3", vec![1.0]).is_err());
    }

    #[test]
    fn file_kind_from_magic() {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("a", &[1.0, 2.0]).unwrap();
        let mut st = SentenceStore::new(1).unwrap();
        st.insert("p", vec![3.0]).unwrap();
        assert_eq!(
            EmbeddingFile::from_bytes(&t.to_bytes().unwrap()).unwrap(),
            EmbeddingFile::Word(t)
        );
        assert_eq!(
            EmbeddingFile::from_bytes(&st.to_bytes().unwrap()).unwrap(),
            EmbeddingFile::Sentence(st)
        );
        assert!(matches!(
            EmbeddingFile::from_bytes(b"XEMB"),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(EmbeddingFile::from_bytes(b"WE").is_err());
    }
}
