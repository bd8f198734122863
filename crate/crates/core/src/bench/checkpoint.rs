//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then tagged segments (`[u8; 4]` tag, `u64` element count, the
//! elements as little-endian `f64` or `u64`). All integers are little-endian.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::completion::{BiasModel, CodeCache};
use crate::data::ColumnSource;
use crate::dict::{DictDiagnostics, Dictionary, ProjectionMode};
use crate::error::{ModlError, Result};
use crate::learner::{Learner, LearnerConfig, TrajectoryRecord};
use crate::proj::Norm;
use crate::sampling::{BatchSchedule, MaskSchedule, RngCursor};
use crate::stats::SufficientStats;

pub const MAGIC: &[u8; 8] = b"MODLCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub p: usize,
    pub n: usize,
    pub k: usize,
    pub norm: Norm,
    pub mode: ProjectionMode,
    pub config: LearnerConfig,
    pub t: u64,
    pub beta: f64,
    pub penalty_acc: f64,
    pub columns_seen: u64,
    #[serde(with = "crate::serde_float")]
    pub h_prev: f64,
    pub cpu_s: f64,
    pub ops: u64,
    pub skipped_samples: u64,
    pub converged: bool,
    pub diagnostics: DictDiagnostics,
    pub mask_cursor: RngCursor,
    pub mask_chunk: usize,
    pub batch_cursor: RngCursor,
    pub batch_pos: usize,
    pub epochs_started: u64,
    pub trajectory: Vec<TrajectoryRecord>,
    pub has_code_cache: bool,
    pub biases: Option<BiasModel>,
}

/// Full learner state, plus the bias model of completion runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub dictionary: Dictionary,
    pub stats: SufficientStats,
    pub mask_perm: Vec<usize>,
    pub batch_perm: Vec<usize>,
    pub code_cache: Option<CodeCache>,
}

impl<'a, S: ColumnSource + ?Sized> Learner<'a, S> {
    pub fn checkpoint(&self) -> Checkpoint {
        let (mask_cursor, mask_perm, mask_chunk) = self.masks.state();
        let (batch_cursor, batch_perm, batch_pos, epochs_started) = self.batches.state();
        Checkpoint {
            header: CheckpointHeader {
                p: self.dict.p(),
                n: self.source.n_cols(),
                k: self.dict.k(),
                norm: self.dict.norm(),
                mode: self.dict.mode(),
                config: self.config.clone(),
                t: self.stats.t,
                beta: self.stats.beta,
                penalty_acc: self.stats.penalty_acc,
                columns_seen: self.columns_seen,
                h_prev: self.h_prev,
                cpu_s: self.cpu_s,
                ops: self.ops,
                skipped_samples: self.skipped_samples,
                converged: self.converged,
                diagnostics: self.dict.diagnostics(),
                mask_cursor,
                mask_chunk,
                batch_cursor,
                batch_pos,
                epochs_started,
                trajectory: self.trajectory.clone(),
                has_code_cache: self.code_cache.is_some(),
                biases: None,
            },
            dictionary: self.dict.clone(),
            stats: self.stats.clone(),
            mask_perm,
            batch_perm,
            code_cache: self.code_cache.clone(),
        }
    }

    /// Rebuilds a learner that continues exactly where `ckpt` left off.
    pub fn resume(ckpt: Checkpoint, source: &'a S) -> Result<Self> {
        let h = ckpt.header;
        if source.n_rows() != h.p || source.n_cols() != h.n {
            return Err(ModlError::Checkpoint(format!(
                "checkpoint is for a {}×{} source, got {}×{}",
                h.p,
                h.n,
                source.n_rows(),
                source.n_cols()
            )));
        }
        h.config.validate()?;
        let masks = MaskSchedule::restore(h.p, h.config.reduction, &h.mask_cursor, ckpt.mask_perm, h.mask_chunk)?;
        let batches = BatchSchedule::restore(
            h.n,
            h.config.batch_size,
            &h.batch_cursor,
            ckpt.batch_perm,
            h.batch_pos,
            h.epochs_started,
        )?;
        Ok(Learner {
            config: h.config,
            source,
            dict: ckpt.dictionary,
            stats: ckpt.stats,
            masks,
            batches,
            columns_seen: h.columns_seen,
            h_prev: h.h_prev,
            cpu_s: h.cpu_s,
            ops: h.ops,
            skipped_samples: h.skipped_samples,
            code_cache: ckpt.code_cache,
            trajectory: h.trajectory,
            converged: h.converged,
        })
    }
}

fn put_f64(out: &mut Vec<u8>, tag: &[u8; 4], values: &[f64]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_u64(out: &mut Vec<u8>, tag: &[u8; 4], values: impl ExactSizeIterator<Item = u64>) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, len: usize) -> Result<&'b [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ModlError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn segment_len(&mut self, tag: &[u8; 4], expected: Option<usize>) -> Result<usize> {
        let found = self.take(4)?;
        if found != tag {
            return Err(ModlError::Checkpoint(format!(
                "expected segment {}, found {}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(found)
            )));
        }
        let len = usize::try_from(self.u64()?).map_err(|_| ModlError::Checkpoint("segment too large".into()))?;
        if let Some(e) = expected {
            if e != len {
                return Err(ModlError::Checkpoint(format!(
                    "segment {} has {len} elements, expected {e}",
                    String::from_utf8_lossy(tag)
                )));
            }
        }
        Ok(len)
    }

    fn f64s(&mut self, tag: &[u8; 4], expected: Option<usize>) -> Result<Vec<f64>> {
        let len = self.segment_len(tag, expected)?;
        let raw = self.take(len.checked_mul(8).ok_or_else(|| ModlError::Checkpoint("segment too large".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn u64s(&mut self, tag: &[u8; 4], expected: Option<usize>) -> Result<Vec<u64>> {
        let len = self.segment_len(tag, expected)?;
        let raw = self.take(len.checked_mul(8).ok_or_else(|| ModlError::Checkpoint("segment too large".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn usizes(&mut self, tag: &[u8; 4], expected: Option<usize>) -> Result<Vec<usize>> {
        self.u64s(tag, expected)?
            .into_iter()
            .map(|v| usize::try_from(v).map_err(|_| ModlError::Checkpoint("index out of range".into())))
            .collect()
    }
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Array2<f64>> {
    Array2::from_shape_vec((rows, cols), data).map_err(|e| ModlError::Checkpoint(e.to_string()))
}

impl Checkpoint {
    pub fn with_biases(mut self, biases: BiasModel) -> Self {
        self.header.biases = Some(biases);
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let header = serde_json::to_vec(h).expect("checkpoint header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let d = &self.dictionary;
        put_f64(&mut out, b"DRAW", &d.raw.iter().copied().collect::<Vec<_>>());
        put_f64(&mut out, b"DSCL", &d.scale);
        put_f64(&mut out, b"DNRM", &d.norm_cache);
        put_u64(&mut out, b"DTCH", d.touched.iter().copied());
        let s = &self.stats;
        put_f64(&mut out, b"STC_", &s.c.iter().copied().collect::<Vec<_>>());
        put_f64(&mut out, b"STB_", &s.b.iter().copied().collect::<Vec<_>>());
        put_u64(&mut out, b"STE_", s.counts.iter().copied());
        put_u64(&mut out, b"MPRM", self.mask_perm.iter().map(|&v| v as u64));
        put_u64(&mut out, b"BPRM", self.batch_perm.iter().map(|&v| v as u64));
        if let Some(cache) = &self.code_cache {
            let (alpha, last_t) = cache.raw_parts();
            put_f64(&mut out, b"CCA_", alpha);
            put_u64(&mut out, b"CCT_", last_t.iter().copied());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(ModlError::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ModlError::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let hlen = usize::try_from(r.u64()?).map_err(|_| ModlError::Checkpoint("header too large".into()))?;
        let header: CheckpointHeader =
            serde_json::from_slice(r.take(hlen)?).map_err(|e| ModlError::Checkpoint(format!("header: {e}")))?;
        let (p, k, n) = (header.p, header.k, header.n);
        let raw = matrix(p, k, r.f64s(b"DRAW", Some(p * k))?)?;
        let scale = r.f64s(b"DSCL", Some(k))?;
        let norm_cache = r.f64s(b"DNRM", Some(k))?;
        let touched = r.u64s(b"DTCH", Some(k))?;
        let dictionary = Dictionary::from_parts(
            raw,
            scale,
            norm_cache,
            touched,
            header.norm,
            header.mode,
            header.diagnostics,
        )?;
        let c = matrix(k, k, r.f64s(b"STC_", Some(k * k))?)?;
        let b = matrix(p, k, r.f64s(b"STB_", Some(p * k))?)?;
        let counts = r.u64s(b"STE_", Some(p))?;
        let stats = SufficientStats::from_parts(c, b, counts, header.penalty_acc, header.t, header.beta)?;
        let mask_perm = r.usizes(b"MPRM", None)?;
        let batch_perm = r.usizes(b"BPRM", None)?;
        let code_cache = if header.has_code_cache {
            let alpha = r.f64s(b"CCA_", Some(n * k))?;
            let last_t = r.u64s(b"CCT_", Some(n))?;
            Some(CodeCache::from_raw_parts(k, alpha, last_t)?)
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(ModlError::Checkpoint("trailing bytes after last segment".into()));
        }
        Ok(Checkpoint {
            header,
            dictionary,
            stats,
            mask_perm,
            batch_perm,
            code_cache,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| ModlError::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| ModlError::io(format!("reading {}", path.display()), e))?;
        Checkpoint::from_bytes(&bytes)
    }
}
