//! Binary embedding stores.
//!
//! Context-free (`MRE1`): `u16 version, u32 vocab, u16 layers, u32 dim`, then
//! per token `u32 byte_len, utf8 token, layers·dim f32`.
//!
//! Contextual (`MRT1`): `u16 version, u32 text_id, u32 k, u16 layers, u32 dim`,
//! then `k·layers·dim f32`, token-major then layer-major.
//!
//! All integers and floats are little-endian.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MRE_MAGIC: [u8; 4] = *b"MRE1";
pub const MRT_MAGIC: [u8; 4] = *b"MRT1";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ContextFreeStore {
    num_layers: usize,
    dim: usize,
    tokens: Vec<String>,
    vectors: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

impl ContextFreeStore {
    pub fn new(num_layers: usize, dim: usize) -> Self {
        Self {
            num_layers,
            dim,
            tokens: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Adds a token with its `layers·dim` values, layer-major.
    pub fn insert(&mut self, token: impl Into<String>, values: Vec<f32>) -> Result<()> {
        let token = token.into();
        if values.len() != self.num_layers * self.dim {
            return Err(Error::Shape(format!(
                "token `{token}` has {} values, store expects {}×{}",
                values.len(),
                self.num_layers,
                self.dim
            )));
        }
        if self.index.contains_key(&token) {
            return Err(Error::format("MRE1 store", format!("duplicate token `{token}`")));
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.vectors.push(values);
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
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

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index.get(token).map(|&i| self.vectors[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.tokens.iter().map(String::as_str).zip(self.vectors.iter().map(Vec::as_slice))
    }
}

/// One text's per-occurrence activations from a contextual model.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualText {
    pub text_id: u32,
    pub num_tokens: usize,
    pub num_layers: usize,
    pub dim: usize,
    pub values: Vec<f32>,
}

impl ContextualText {
    pub fn new(text_id: u32, num_tokens: usize, num_layers: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != num_tokens * num_layers * dim {
            return Err(Error::Shape(format!(
                "text {text_id}: {} values for {num_tokens}×{num_layers}×{dim}",
                values.len()
            )));
        }
        Ok(Self {
            text_id,
            num_tokens,
            num_layers,
            dim,
            values,
        })
    }

    pub fn token_layers(&self, position: usize) -> &[f32] {
        let stride = self.num_layers * self.dim;
        &self.values[position * stride..(position + 1) * stride]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingStore {
    ContextFree(ContextFreeStore),
    Contextual {
        num_layers: usize,
        dim: usize,
        texts: BTreeMap<u32, ContextualText>,
    },
}

impl EmbeddingStore {
    pub fn num_layers(&self) -> usize {
        match self {
            Self::ContextFree(s) => s.num_layers,
            Self::Contextual { num_layers, .. } => *num_layers,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::ContextFree(s) => s.dim,
            Self::Contextual { dim, .. } => *dim,
        }
    }

    /// Builds a contextual store, checking every text shares one layer shape.
    pub fn contextual(texts: Vec<ContextualText>) -> Result<Self> {
        let first = texts
            .first()
            .ok_or_else(|| Error::format("MRT1 store", "no texts"))?;
        let (num_layers, dim) = (first.num_layers, first.dim);
        let mut map = BTreeMap::new();
        for t in texts {
            if (t.num_layers, t.dim) != (num_layers, dim) {
                return Err(Error::format(
                    "MRT1 store",
                    format!(
                        "text {} is {}×{}, store is {num_layers}×{dim}",
                        t.text_id, t.num_layers, t.dim
                    ),
                ));
            }
            if map.contains_key(&t.text_id) {
                return Err(Error::format("MRT1 store", format!("duplicate text id {}", t.text_id)));
            }
            map.insert(t.text_id, t);
        }
        Ok(Self::Contextual {
            num_layers,
            dim,
            texts: map,
        })
    }

    /// The `l × d` layers for `token` at `position` of a `num_tokens`-token
    /// text, or `None` when a context-free store lacks the token.
    pub fn lookup(
        &self,
        token: &str,
        text_id: Option<u32>,
        position: usize,
        num_tokens: usize,
    ) -> Result<Option<Tensor>> {
        let (values, l, d) = match self {
            Self::ContextFree(s) => match s.get(token) {
                Some(v) => (v, s.num_layers, s.dim),
                None => return Ok(None),
            },
            Self::Contextual { num_layers, dim, texts } => {
                let id = text_id.ok_or_else(|| {
                    Error::Integrity("contextual store queried without a text id".into())
                })?;
                let text = texts
                    .get(&id)
                    .ok_or_else(|| Error::Integrity(format!("contextual store has no text {id}")))?;
                if text.num_tokens != num_tokens {
                    return Err(Error::Integrity(format!(
                        "text {id} has {} stored tokens but tokenizes to {num_tokens}",
                        text.num_tokens
                    )));
                }
                (text.token_layers(position), *num_layers, *dim)
            }
        };
        let data = values.iter().map(|&x| f64::from(x)).collect();
        Tensor::new(vec![l, d], data).map(Some)
    }

    /// Loads a store from a `MRE1` file or from a directory of `MRT1` files.
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            let mut files: Vec<_> = fs::read_dir(path)
                .map_err(|e| Error::io(path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            let texts = files
                .iter()
                .map(|p| {
                    let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                    read_mrt(&mut bytes.as_slice())
                })
                .collect::<Result<Vec<_>>>()?;
            Self::contextual(texts)
        } else {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            read_mre(&mut bytes.as_slice()).map(Self::ContextFree)
        }
    }
}

/// Stores keyed by model id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStores(BTreeMap<String, EmbeddingStore>);

impl EmbeddingStores {
    pub fn insert(&mut self, model_id: impl Into<String>, store: EmbeddingStore) {
        self.0.insert(model_id.into(), store);
    }

    pub fn get(&self, model_id: &str) -> Option<&EmbeddingStore> {
        self.0.get(model_id)
    }

    pub fn has_contextual(&self) -> bool {
        self.0.values().any(|s| matches!(s, EmbeddingStore::Contextual { .. }))
    }
}

fn truncated(what: &'static str) -> impl Fn(io::Error) -> Error {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::format(what, "truncated payload")
        } else {
            Error::format(what, e.to_string())
        }
    }
}

pub(crate) fn read_magic<R: Read>(r: &mut R, expected: [u8; 4], what: &'static str) -> Result<()> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found).map_err(truncated(what))?;
    if found != expected {
        return Err(Error::BadMagic { what, expected, found });
    }
    Ok(())
}

fn read_version<R: Read>(r: &mut R, what: &'static str) -> Result<()> {
    let v = r.read_u16::<LittleEndian>().map_err(truncated(what))?;
    if v != VERSION {
        return Err(Error::format(what, format!("unsupported version {v}")));
    }
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, n: usize, what: &'static str) -> Result<Vec<f32>> {
    let mut out = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut out).map_err(truncated(what))?;
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::format(what, "non-finite value"));
    }
    Ok(out)
}

fn expect_eof<R: Read>(r: &mut R, what: &'static str) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::format(what, "trailing bytes after payload")),
        Err(e) => Err(Error::format(what, e.to_string())),
    }
}

pub fn write_mre<W: Write>(store: &ContextFreeStore, w: &mut W) -> io::Result<()> {
    w.write_all(&MRE_MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(store.len() as u32)?;
    w.write_u16::<LittleEndian>(store.num_layers as u16)?;
    w.write_u32::<LittleEndian>(store.dim as u32)?;
    for (token, values) in store.iter() {
        w.write_u32::<LittleEndian>(token.len() as u32)?;
        w.write_all(token.as_bytes())?;
        for &x in values {
            w.write_f32::<LittleEndian>(x)?;
        }
    }
    Ok(())
}

pub fn read_mre<R: Read>(r: &mut R) -> Result<ContextFreeStore> {
    const WHAT: &str = "MRE1 store";
    read_magic(r, MRE_MAGIC, WHAT)?;
    read_version(r, WHAT)?;
    let vocab = r.read_u32::<LittleEndian>().map_err(truncated(WHAT))? as usize;
    let layers = r.read_u16::<LittleEndian>().map_err(truncated(WHAT))? as usize;
    let dim = r.read_u32::<LittleEndian>().map_err(truncated(WHAT))? as usize;
    if layers == 0 || dim == 0 {
        return Err(Error::format(WHAT, "zero layers or dimension"));
    }
    let mut store = ContextFreeStore::new(layers, dim);
    for _ in 0..vocab {
        let len = r.read_u32::<LittleEndian>().map_err(truncated(WHAT))? as usize;
        let mut bytes = Vec::new();
        r.by_ref().take(len as u64).read_to_end(&mut bytes).map_err(truncated(WHAT))?;
        if bytes.len() != len {
            return Err(Error::format(WHAT, "truncated payload"));
        }
        let token = String::from_utf8(bytes).map_err(|_| Error::format(WHAT, "token is not UTF-8"))?;
        let values = read_f32s(r, layers * dim, WHAT)?;
        store.insert(token, values)?;
    }
    expect_eof(r, WHAT)?;
    Ok(store)
}

pub fn write_mrt<W: Write>(text: &ContextualText, w: &mut W) -> io::Result<()> {
    w.write_all(&MRT_MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(text.text_id)?;
    w.write_u32::<LittleEndian>(text.num_tokens as u32)?;
    w.write_u16::<LittleEndian>(text.num_layers as u16)?;
    w.write_u32::<LittleEndian>(text.dim as u32)?;
    for &x in &text.values {
        w.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

pub fn read_mrt<R: Read>(r: &mut R) -> Result<ContextualText> {
    const WHAT: &str = "MRT1 text";
    read_magic(r, MRT_MAGIC, WHAT)?;
    read_version(r, WHAT)?;
    let text_id = r.read_u32::<LittleEndian>().map_err(truncated(WHAT))?;
    let k = r.read_u32::<LittleEndian>().map_err(truncated(WHAT))? as usize;
    let layers = r.read_u16::<LittleEndian>().map_err(truncated(WHAT))? as usize;
    let dim = r.read_u32::<LittleEndian>().map_err(truncated(WHAT))? as usize;
    if k == 0 || layers == 0 || dim == 0 {
        return Err(Error::format(WHAT, "zero extent in header"));
    }
    let values = read_f32s(r, k * layers * dim, WHAT)?;
    expect_eof(r, WHAT)?;
    ContextualText::new(text_id, k, layers, dim, values)
}
