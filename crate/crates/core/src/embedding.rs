//! Quintuple embeddings: the deterministic test encoder, mean pooling and the
//! binary store exchanged with the model bridge.
//!
//! Store layout (little-endian): magic `LEAPEMB1`, u32 version, u32 dim,
//! u64 count, then `count` records of `(u64 uid, dim × f32)`.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::event_store::{Quintuple, Vocabulary};
use crate::nn::Tensor;
use crate::prompting::{render_simple_prompt, PromptConfig, PromptError};

pub const STORE_MAGIC: &[u8; 8] = b"LEAPEMB1";
pub const STORE_VERSION: u32 = 1;
pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("not an embedding store (bad magic {0:?})")]
    BadMagic([u8; 8]),
    #[error("unsupported embedding store version {0}")]
    BadVersion(u32),
    #[error("embedding store is truncated")]
    Truncated,
    #[error("embedding store has trailing bytes after {0} records")]
    TrailingBytes(u64),
    #[error("duplicate uid {0}")]
    DuplicateUid(u64),
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("uid {uid}: vector has {got} entries, store dim is {expected}")]
    DimMismatch { uid: u64, got: usize, expected: usize },
    #[error("uid {0}: vector has non-finite entries")]
    NonFinite(u64),
    #[error("no embedding for uid {0}")]
    MissingUid(u64),
    #[error("cannot pool an empty token matrix")]
    EmptyPool,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for EmbeddingError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Self::Truncated
        } else {
            Self::Io(e)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    records: BTreeMap<u64, Vec<f32>>,
    /// Free-text origin tag; kept in memory only, the file format has no slot
    /// for it.
    pub provenance: String,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.records == other.records
    }
}

impl EmbeddingStore {
    pub fn new(dim: usize, provenance: impl Into<String>) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        Ok(Self {
            dim,
            records: BTreeMap::new(),
            provenance: provenance.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, uid: u64, vector: Vec<f32>) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimMismatch {
                uid,
                got: vector.len(),
                expected: self.dim,
            });
        }
        if !vector.iter().all(|v| v.is_finite()) {
            return Err(EmbeddingError::NonFinite(uid));
        }
        if self.records.contains_key(&uid) {
            return Err(EmbeddingError::DuplicateUid(uid));
        }
        self.records.insert(uid, vector);
        Ok(())
    }

    pub fn get(&self, uid: u64) -> Option<&[f32]> {
        self.records.get(&uid).map(Vec::as_slice)
    }

    /// Look up a vector, failing with the uid when absent.
    pub fn require(&self, uid: u64) -> Result<&[f32], EmbeddingError> {
        self.get(uid).ok_or(EmbeddingError::MissingUid(uid))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f32])> {
        self.records.iter().map(|(&u, v)| (u, v.as_slice()))
    }

    /// Stack the vectors for `uids` into an `n × dim` matrix.
    pub fn matrix(&self, uids: &[u64]) -> Result<Tensor, EmbeddingError> {
        let mut data = Vec::with_capacity(uids.len() * self.dim);
        for &u in uids {
            data.extend(self.require(u)?.iter().map(|&v| f64::from(v)));
        }
        Ok(Tensor::from_vec(&[uids.len(), self.dim], data).expect("sized above"))
    }
}

pub fn write_store<W: Write>(store: &EmbeddingStore, mut out: W) -> Result<(), EmbeddingError> {
    if store.dim == 0 {
        return Err(EmbeddingError::ZeroDim);
    }
    out.write_all(STORE_MAGIC)?;
    out.write_all(&STORE_VERSION.to_le_bytes())?;
    out.write_all(&(store.dim as u32).to_le_bytes())?;
    out.write_all(&(store.records.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 + 4 * store.dim);
    for (&uid, v) in &store.records {
        buf.clear();
        buf.extend_from_slice(&uid.to_le_bytes());
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], EmbeddingError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_store<R: Read>(mut input: R) -> Result<EmbeddingStore, EmbeddingError> {
    let magic: [u8; 8] = read_array(&mut input)?;
    if &magic != STORE_MAGIC {
        return Err(EmbeddingError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(read_array(&mut input)?);
    if version != STORE_VERSION {
        return Err(EmbeddingError::BadVersion(version));
    }
    let dim = u32::from_le_bytes(read_array(&mut input)?) as usize;
    let count = u64::from_le_bytes(read_array(&mut input)?);
    let mut store = EmbeddingStore::new(dim, "")?;
    let mut buf = vec![0u8; 4 * dim];
    for _ in 0..count {
        let uid = u64::from_le_bytes(read_array(&mut input)?);
        input.read_exact(&mut buf)?;
        let v = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        store.insert(uid, v)?;
    }
    let mut probe = [0u8; 1];
    loop {
        match input.read(&mut probe) {
            Ok(0) => break,
            Ok(_) => return Err(EmbeddingError::TrailingBytes(count)),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(store)
}

/// Column-wise mean of an `n × d` token matrix.
pub fn mean_pool(tokens: &Tensor) -> Result<Vec<f64>, EmbeddingError> {
    if tokens.is_empty() || tokens.rows() == 0 {
        return Err(EmbeddingError::EmptyPool);
    }
    Ok(tokens.mean_rows())
}

/// Deterministic unit vector keyed on `(seed, prompt)`.
pub fn test_encoder(prompt: &str, dim: usize, seed: u64) -> Vec<f32> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(prompt.as_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm = if norm > 0.0 { norm } else { 1.0 };
    raw.iter().map(|v| (v / norm) as f32).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    /// Vectors precomputed by the bridge, loaded from a store file.
    Store { path: String },
    TestEncoder { dim: usize, seed: u64 },
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self::TestEncoder {
            dim: DEFAULT_DIM,
            seed: 0,
        }
    }
}

pub enum Provider<'a> {
    Store(&'a EmbeddingStore),
    TestEncoder { dim: usize, seed: u64 },
}

/// One vector per quintuple. Encoder mode renders each quintuple with the
/// simple template first.
pub fn embed_all(
    data: &[Quintuple],
    vocab: &Vocabulary,
    provider: &Provider<'_>,
    prompt_cfg: &PromptConfig,
) -> Result<EmbeddingStore, EmbeddingError> {
    match provider {
        Provider::Store(src) => {
            let mut out = EmbeddingStore::new(src.dim(), src.provenance.clone())?;
            for q in data {
                out.insert(q.uid, src.require(q.uid)?.to_vec())?;
            }
            Ok(out)
        }
        &Provider::TestEncoder { dim, seed } => {
            let mut out = EmbeddingStore::new(dim, format!("test-encoder dim={dim} seed={seed}"))?;
            prompt_cfg.validate()?;
            let vectors: Vec<(u64, Vec<f32>)> = data
                .par_iter()
                .map(|q| {
                    let p = render_simple_prompt(q, vocab, prompt_cfg)?;
                    Ok((q.uid, test_encoder(&p, dim, seed)))
                })
                .collect::<Result<_, EmbeddingError>>()?;
            for (uid, v) in vectors {
                out.insert(uid, v)?;
            }
            Ok(out)
        }
    }
}
