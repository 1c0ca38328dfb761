//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "MASKDIAL"
//! version      u32      FORMAT_VERSION
//! dim          u32
//! hops         u32
//! vocab_size   u32
//! n_candidates u32
//! mem_capacity u32
//! flags        u32      bit 0 position encoding, 1 temporal, 2 match type,
//!                       3 per-hop tables, 4 collapsed RL mask
//! n_meta       u32      then n_meta (key, value) string pairs
//! n_tokens     u32      then the vocabulary in id order
//! n_candidates u32      then the candidate utterances in id order
//! n_matrices   u32      then per matrix: name, rows u32, cols u32,
//!                       rows*cols f64 values in row-major order
//! sha256       32 bytes over everything before it
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::{CandidateSet, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Matrix, ModelConfig, ModelParams, RlMaskForm, WeightSharing};

pub const MAGIC: &[u8; 8] = b"MASKDIAL";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub candidates: CandidateSet,
    /// Free-form run information: model kind, phase, epoch, seed and so on.
    pub meta: BTreeMap<String, String>,
}

fn flags(c: &ModelConfig) -> u32 {
    (c.position_encoding as u32)
        | (c.temporal as u32) << 1
        | (c.match_type as u32) << 2
        | ((c.sharing == WeightSharing::PerHop) as u32) << 3
        | ((c.rl_mask_form == RlMaskForm::Collapsed) as u32) << 4
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, x: usize) -> Result<()> {
        let x = u32::try_from(x).map_err(|_| Error::Checkpoint(format!("value {x} does not fit in u32")))?;
        self.0.extend_from_slice(&x.to_le_bytes());
        Ok(())
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.u32()?;
        (0..n).map(|_| self.str()).collect()
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let c = &self.config;
        let mut w = Writer(MAGIC.to_vec());
        w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for x in [
            c.dim,
            c.hops,
            self.vocab.len(),
            self.candidates.len(),
            c.memory_capacity,
            flags(c) as usize,
        ] {
            w.u32(x)?;
        }
        w.u32(self.meta.len())?;
        for (k, v) in &self.meta {
            w.str(k)?;
            w.str(v)?;
        }
        w.u32(self.vocab.len())?;
        for t in self.vocab.tokens() {
            w.str(t)?;
        }
        w.u32(self.candidates.len())?;
        for u in self.candidates.utterances() {
            w.str(u)?;
        }
        let named = self.params.named();
        w.u32(named.len())?;
        for (name, m) in named {
            w.str(&name)?;
            w.u32(m.rows())?;
            w.u32(m.cols())?;
            for x in m.data() {
                w.0.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 12 + DIGEST_LEN {
            return Err(Error::Checkpoint("checksum mismatch (file truncated?)".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint("checksum mismatch (file truncated or corrupted?)".into()));
        }
        let mut r = Reader { buf: body, pos: 12 };
        let dim = r.u32()?;
        let hops = r.u32()?;
        let vocab_size = r.u32()?;
        let n_candidates = r.u32()?;
        let memory_capacity = r.u32()?;
        let fl = r.u32()?;
        let config = ModelConfig {
            dim,
            hops,
            memory_capacity,
            position_encoding: fl & 1 != 0,
            temporal: fl & 2 != 0,
            match_type: fl & 4 != 0,
            sharing: if fl & 8 != 0 { WeightSharing::PerHop } else { WeightSharing::Shared },
            rl_mask_form: if fl & 16 != 0 { RlMaskForm::Collapsed } else { RlMaskForm::SharedSum },
            ..ModelConfig::default()
        };
        config.validate()?;
        let n_meta = r.u32()?;
        let mut meta = BTreeMap::new();
        for _ in 0..n_meta {
            let k = r.str()?;
            meta.insert(k, r.str()?);
        }
        let tokens = r.strings()?;
        let utterances = r.strings()?;
        if tokens.len() != vocab_size || utterances.len() != n_candidates {
            return Err(Error::Checkpoint("header counts disagree with contents".into()));
        }
        let vocab = Vocabulary::from_tokens(tokens);
        let candidates = CandidateSet::new(utterances).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut params = ModelParams::zeros(&config, vocab_size);
        let n_mat = r.u32()?;
        let mut slots = params.named_mut();
        if n_mat != slots.len() {
            return Err(Error::Checkpoint(format!("expected {} matrices, found {n_mat}", slots.len())));
        }
        for (expect, slot) in slots.iter_mut() {
            let name = r.str()?;
            let (rows, cols) = (r.u32()?, r.u32()?);
            if &name != expect || (rows, cols) != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "matrix {name} {rows}x{cols} where {expect} {:?} was expected",
                    slot.shape()
                )));
            }
            let raw = r.take(rows * cols * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            **slot = Matrix::from_vec(rows, cols, data);
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after matrices".into()));
        }
        Ok(Checkpoint {
            config,
            params,
            vocab,
            candidates,
            meta,
        })
    }

    /// Writes through a temporary file so a crash never leaves a partial
    /// checkpoint under `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }
}
